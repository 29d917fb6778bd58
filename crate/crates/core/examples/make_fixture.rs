//! Regenerates the shipped 50-tile fixture.
//!
//! ```text
//! cargo run -p grangernet --example make_fixture -- fixtures/synthetic50
//! ```

use std::fs::File;
use std::path::PathBuf;

use chrono::NaiveDate;
use grangernet::ingest::write_event_log;
use grangernet::synth::{city_fixture, write_ses_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/synthetic50".into()));
    std::fs::create_dir_all(&dir)?;
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let end = NaiveDate::from_ymd_opt(2017, 3, 31).expect("valid date");
    let days = (end - start).num_days() as usize + 1;
    let f = city_fixture(5, 10, start, days, 2015);
    write_event_log(File::create(dir.join("events.csv"))?, &f.events)?;
    write_ses_csv(File::create(dir.join("ses.csv"))?, &f.ses)?;
    let mut g = serde_json::to_string_pretty(&f.regions)?;
    g.push('\n');
    std::fs::write(dir.join("regions.geojson"), g)?;
    println!("{} events, bounds {:?}", f.events.len(), f.bounds);
    Ok(())
}
