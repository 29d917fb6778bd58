use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::quantize::EventStream;

/// Bernoulli parameter of one injection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub delta: f64,
    /// Empirical rate of the perturbed slice.
    pub rate: f64,
    /// Flip probability: 0 to 1 for increases, 1 to 0 for decreases.
    pub theta: f64,
}

/// Deltas for which the expected rate `p (1 + delta)` stays in `[0, 1]`.
pub fn feasible_range(rate: f64) -> (f64, f64) {
    if rate <= 0.0 {
        (-1.0, f64::INFINITY)
    } else if rate >= 1.0 {
        (-1.0, 0.0)
    } else {
        (-1.0, (1.0 - rate) / rate)
    }
}

/// `delta p / (1 - p)` for increases, `-delta` for decreases.
pub fn theta(delta: f64, rate: f64) -> Result<f64> {
    if !delta.is_finite() || !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidParam(format!("bad perturbation delta {delta} or rate {rate}")));
    }
    if delta == 0.0 || rate == 0.0 {
        return Ok(0.0);
    }
    let (min, max) = feasible_range(rate);
    if delta < min || delta > max {
        return Err(Error::InfeasiblePerturbation { delta, rate, min, max });
    }
    Ok(if delta > 0.0 {
        (delta * rate / (1.0 - rate)).min(1.0)
    } else {
        -delta
    })
}

/// Perturbs `values` in place so that the expected rate is `p (1 + delta)`.
/// One uniform is drawn per element regardless of its value, so a fixed
/// generator gives nested perturbations as `|delta|` grows.
pub fn inject_slice<R: RngCore>(values: &mut [bool], delta: f64, rng: &mut R) -> Result<Injection> {
    let ones = values.iter().filter(|&&b| b).count();
    let rate = if values.is_empty() { 0.0 } else { ones as f64 / values.len() as f64 };
    let theta = theta(delta, rate)?;
    let inj = Injection { delta, rate, theta };
    if theta == 0.0 {
        return Ok(inj);
    }
    let up = delta > 0.0;
    for v in values.iter_mut() {
        let u: f64 = rng.random();
        if *v != up && u < theta {
            *v = up;
        }
    }
    Ok(inj)
}

pub fn inject<R: RngCore>(stream: &EventStream, delta: f64, rng: &mut R) -> Result<EventStream> {
    let mut out = stream.clone();
    inject_slice(out.values_mut(), delta, rng)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stream(len: usize, ones: usize) -> Vec<bool> {
        (0..len).map(|i| i < ones).collect()
    }

    fn monte_carlo(len: usize, ones: usize, delta: f64, reps: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = stream(len, ones);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            let mut v = base.clone();
            inject_slice(&mut v, delta, &mut rng).unwrap();
            let r = v.iter().filter(|&&b| b).count() as f64 / len as f64;
            s += r;
            s2 += r * r;
        }
        let n = reps as f64;
        let mean = s / n;
        let var = (s2 / n - mean * mean) * n / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn zero_delta_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = stream(50, 10);
        let mut w = v.clone();
        let inj = inject_slice(&mut w, 0.0, &mut rng).unwrap();
        assert_eq!(v, w);
        assert_eq!(inj.theta, 0.0);
    }

    #[test]
    fn theta_for_ten_percent() {
        assert!((theta(0.10, 0.2).unwrap() - 0.025).abs() < 1e-15);
        assert_eq!(theta(-0.10, 0.2).unwrap(), 0.10);
        assert_eq!(theta(0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rate_law_up_and_down() {
        for (delta, want) in [(0.10, 0.22), (-0.10, 0.18)] {
            let (mean, se) = monte_carlo(50, 10, delta, 100_000, 7);
            assert!((mean - want).abs() < 3.0 * se, "{delta}: {mean} vs {want} (se {se})");
        }
    }

    #[test]
    fn infeasible_delta_reports_range() {
        match theta(0.5, 0.8) {
            Err(Error::InfeasiblePerturbation { min, max, .. }) => {
                assert_eq!(min, -1.0);
                assert!((max - 0.25).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(theta(0.01, 1.0).is_err());
        assert!(theta(-1.5, 0.3).is_err());
        assert!(theta(f64::NAN, 0.3).is_err());
    }

    proptest! {
        #[test]
        fn same_seed_same_stream(seed in any::<u64>(), delta in -0.1f64..0.1, ones in 1usize..30) {
            let base = stream(40, ones);
            let mut a = base.clone();
            let mut b = base.clone();
            inject_slice(&mut a, delta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            inject_slice(&mut b, delta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn only_the_intended_direction_flips(seed in any::<u64>(), delta in -0.1f64..0.1) {
            let base = stream(60, 20);
            let mut v = base.clone();
            inject_slice(&mut v, delta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for (a, b) in base.iter().zip(&v) {
                if delta > 0.0 {
                    prop_assert!(!*a || *b);
                } else {
                    prop_assert!(*a || !*b);
                }
            }
        }
    }
}
