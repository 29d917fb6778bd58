//! Versioned model records (little endian):
//!
//! ```text
//! magic "GNMODELS" | version u16 | n u32 | model * n
//! model: tile u32 | class u8 | horizon u32 | marginal u8
//!        objective u8 (0 recall-under-fpr, 1 f1) | cap f64
//!        tau f64 | value f64 | recall f64 | fpr f64 | f1 f64
//!        has_catalog u8 [ depth u8 | n_cols u32 | { tile u32 | class u8 | delay u32 } * n_cols ]
//!        n_features u32 | base f64 | learning_rate f64 | n_trees u32
//!        { n_nodes u32 | { feature u32 | threshold f64 | left u32 | right u32 | value f64 } * n_nodes } * n_trees
//! ```

use super::{Booster, Catalog, ColumnSpec, Node, Objective, TargetModel, ThresholdChoice, Tree};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::ingest::EventClass;
use crate::quantize::{TileId, VarId};

const MAGIC: &[u8; 8] = b"GNMODELS";
const VERSION: u16 = 1;

fn put_var(w: &mut ByteWriter, v: VarId) {
    w.u32(v.tile.0);
    w.u8(v.class.code());
}

fn get_var(r: &mut ByteReader<'_>) -> Result<VarId> {
    let tile = TileId(r.u32()?);
    let code = r.u8()?;
    let class = EventClass::from_code(code).ok_or_else(|| Error::Format(format!("class code {code}")))?;
    Ok(VarId { tile, class })
}

pub fn write_models(models: &[TargetModel]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(models.len() as u32);
    for m in models {
        put_var(&mut w, m.target);
        w.u32(m.horizon);
        w.u8(m.marginal as u8);
        match m.objective {
            Objective::MaxRecallUnderFpr { cap } => {
                w.u8(0);
                w.f64(cap);
            }
            Objective::MaxF1 => {
                w.u8(1);
                w.f64(0.0);
            }
        }
        let t = &m.threshold;
        for v in [t.tau, t.value, t.recall, t.fpr, t.f1] {
            w.f64(v);
        }
        match &m.catalog {
            None => w.u8(0),
            Some(c) => {
                w.u8(1);
                w.u8(c.depth as u8);
                w.u32(c.columns.len() as u32);
                for col in &c.columns {
                    put_var(&mut w, col.source);
                    w.u32(col.delay);
                }
            }
        }
        let b = &m.booster;
        w.u32(b.n_features as u32);
        w.f64(b.base);
        w.f64(b.learning_rate);
        w.u32(b.trees.len() as u32);
        for tree in &b.trees {
            w.u32(tree.nodes.len() as u32);
            for n in &tree.nodes {
                w.u32(n.feature);
                w.f64(n.threshold);
                w.u32(n.left);
                w.u32(n.right);
                w.f64(n.value);
            }
        }
    }
    w.into_inner()
}

fn read_model(r: &mut ByteReader<'_>) -> Result<TargetModel> {
    let target = get_var(r)?;
    let horizon = r.u32()?;
    let marginal = r.u8()? != 0;
    let kind = r.u8()?;
    let cap = r.f64()?;
    let objective = match kind {
        0 => Objective::MaxRecallUnderFpr { cap },
        1 => Objective::MaxF1,
        k => return Err(Error::Format(format!("objective code {k}"))),
    };
    let threshold = ThresholdChoice {
        tau: r.f64()?,
        value: r.f64()?,
        recall: r.f64()?,
        fpr: r.f64()?,
        f1: r.f64()?,
    };
    let catalog = match r.u8()? {
        0 => None,
        1 => {
            let depth = r.u8()? as usize;
            let n = r.u32()? as usize;
            let columns = (0..n)
                .map(|_| {
                    Ok(ColumnSpec {
                        source: get_var(r)?,
                        delay: r.u32()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if columns.iter().any(|c| c.delay < horizon) {
                return Err(Error::Format(format!("model for {target} uses a delay below its horizon")));
            }
            Some(Catalog {
                target,
                horizon,
                depth,
                columns,
            })
        }
        v => return Err(Error::Format(format!("bad catalog flag {v}"))),
    };
    let n_features = r.u32()? as usize;
    if catalog.as_ref().map_or(0, |c| c.columns.len()) != n_features {
        return Err(Error::CatalogMismatch {
            expected: catalog.as_ref().map_or(0, |c| c.columns.len()),
            found: n_features,
        });
    }
    let base = r.f64()?;
    let learning_rate = r.f64()?;
    let n_trees = r.u32()? as usize;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(Error::Format("empty tree".into()));
        }
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let node = Node {
                feature: r.u32()?,
                threshold: r.f64()?,
                left: r.u32()?,
                right: r.u32()?,
                value: r.f64()?,
            };
            if !Tree::is_leaf(&node)
                && (node.feature as usize >= n_features || node.left as usize >= n || node.right as usize >= n)
            {
                return Err(Error::Format("tree node out of range".into()));
            }
            nodes.push(node);
        }
        // children always follow their parent, so evaluation terminates
        for (i, node) in nodes.iter().enumerate() {
            if !Tree::is_leaf(node) && (node.left as usize <= i || node.right as usize <= i) {
                return Err(Error::Format("tree node points backwards".into()));
            }
        }
        trees.push(Tree { nodes });
    }
    Ok(TargetModel {
        target,
        horizon,
        catalog,
        booster: Booster {
            n_features,
            base,
            learning_rate,
            trees,
        },
        threshold,
        objective,
        marginal,
    })
}

pub fn read_models(data: &[u8]) -> Result<Vec<TargetModel>> {
    let mut r = ByteReader::new(data);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model store version {version}")));
    }
    let n = r.u32()? as usize;
    let models = (0..n).map(|_| read_model(&mut r)).collect::<Result<Vec<_>>>()?;
    if r.remaining() != 0 {
        return Err(Error::Format("trailing bytes in model store".into()));
    }
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::fit_columns;
    use crate::ensemble::BoostParams;

    #[test]
    fn round_trip() {
        let cols = vec![(0..60).map(|i| (i % 7) as f64 / 7.0).collect::<Vec<_>>(), (0..60).map(|i| (i % 5) as f64).collect()];
        let labels: Vec<bool> = (0..60).map(|i| i % 7 > 3 || i % 5 == 0).collect();
        let rep = fit_columns(&cols, &labels, &BoostParams { rounds: 15, ..BoostParams::with_seed(3) }).unwrap();
        let target = VarId::new(4, EventClass::Property);
        let model = TargetModel {
            target,
            horizon: 7,
            catalog: Some(Catalog {
                target,
                horizon: 7,
                depth: 7,
                columns: vec![
                    ColumnSpec { source: VarId::new(1, EventClass::Violent), delay: 9 },
                    ColumnSpec { source: target, delay: 7 },
                ],
            }),
            booster: rep.booster,
            threshold: ThresholdChoice { tau: 0.4, value: 0.8, recall: 0.8, fpr: 0.15, f1: 0.6 },
            objective: Objective::default(),
            marginal: false,
        };
        let marg = TargetModel::marginal(VarId::new(0, EventClass::Violent), 7, 0.125, Objective::MaxF1);
        let models = vec![model, marg];
        let bytes = write_models(&models);
        assert_eq!(read_models(&bytes).unwrap(), models);
        assert!(read_models(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[9] = 9;
        assert!(read_models(&bad).is_err());
    }
}
