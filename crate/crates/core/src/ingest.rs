//! Event-log and socio-economic table ingestion.
//!
//! Both schemas share the column layout `date,latitude,longitude,category,count`;
//! `count` is the number of arrests (crime) or casualties (terror). Dates are
//! ISO-8601 calendar days.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EVENT_HEADER: [&str; 5] = ["date", "latitude", "longitude", "category", "count"];
pub const SES_HEADER: [&str; 6] = [
    "region_id",
    "crowded_pct",
    "poverty_pct",
    "unemployed_pct",
    "income_pc",
    "hardship",
];

/// Malformed rows abort parsing beyond this fraction of the file. A single
/// malformed row never aborts, whatever the file size.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Crime,
    Terror,
}

impl Schema {
    /// Stream classes in canonical order: the two incident classes, then the count class.
    pub fn classes(self) -> [EventClass; 3] {
        match self {
            Schema::Crime => [EventClass::Violent, EventClass::Property, EventClass::Arrests],
            Schema::Terror => [
                EventClass::AntiInfrastructure,
                EventClass::AntiPersonnel,
                EventClass::Casualties,
            ],
        }
    }

    pub fn incident_classes(self) -> [EventClass; 2] {
        let [a, b, _] = self.classes();
        [a, b]
    }

    pub fn count_class(self) -> EventClass {
        self.classes()[2]
    }
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crime" => Ok(Schema::Crime),
            "terror" => Ok(Schema::Terror),
            other => Err(Error::UnknownSchema(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum EventClass {
    Violent = 0,
    Property = 1,
    Arrests = 2,
    AntiInfrastructure = 3,
    AntiPersonnel = 4,
    Casualties = 5,
}

impl EventClass {
    pub const ALL: [EventClass; 6] = [
        EventClass::Violent,
        EventClass::Property,
        EventClass::Arrests,
        EventClass::AntiInfrastructure,
        EventClass::AntiPersonnel,
        EventClass::Casualties,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventClass::Violent => "violent",
            EventClass::Property => "property",
            EventClass::Arrests => "arrests",
            EventClass::AntiInfrastructure => "anti_infrastructure",
            EventClass::AntiPersonnel => "anti_personnel",
            EventClass::Casualties => "casualties",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Count classes (arrests, casualties) are derived from per-event counts.
    pub fn is_count(self) -> bool {
        matches!(self, EventClass::Arrests | EventClass::Casualties)
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown event class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub date: NaiveDate,
    pub latitude: f64,
    pub longitude: f64,
    pub category: String,
    /// Arrests (crime) or casualties (terror).
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub events: Vec<RawEvent>,
    pub malformed: Vec<MalformedRow>,
}

impl ParsedLog {
    pub fn total_rows(&self) -> usize {
        self.events.len() + self.malformed.len()
    }
}

fn parse_event_fields(rec: &csv::StringRecord) -> std::result::Result<RawEvent, String> {
    if rec.len() != EVENT_HEADER.len() {
        return Err(format!("expected 5 fields, found {}", rec.len()));
    }
    let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date `{}`: {e}", &rec[0]))?;
    let latitude: f64 = rec[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad latitude `{}`", &rec[1]))?;
    let longitude: f64 = rec[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad longitude `{}`", &rec[2]))?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(format!("latitude {latitude} out of range"));
    }
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(format!("longitude {longitude} out of range"));
    }
    // (0, 0) is the usual "unknown location" sentinel in municipal exports.
    if latitude == 0.0 && longitude == 0.0 {
        return Err("sentinel coordinates (0, 0)".to_string());
    }
    let category = rec[3].trim().to_string();
    if category.is_empty() {
        return Err("empty category".to_string());
    }
    let count: u32 = rec[4]
        .trim()
        .parse()
        .map_err(|_| format!("bad count `{}`", &rec[4]))?;
    Ok(RawEvent {
        date,
        latitude,
        longitude,
        category,
        count,
    })
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let ok = found.len() == expected.len()
        && found
            .iter()
            .zip(expected)
            .all(|(f, e)| f.trim().eq_ignore_ascii_case(e));
    if ok {
        Ok(())
    } else {
        Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

/// Parse an event log. Malformed rows are collected in the result; more than
/// 10% malformed rows (and more than one) aborts. Both schemas share the
/// column layout, so `schema` selects only how `count` is later interpreted.
pub fn parse_event_log(path: &Path, _schema: Schema) -> Result<ParsedLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_event_reader(path, file)
}

pub fn parse_event_reader<R: std::io::Read>(path: &Path, reader: R) -> Result<ParsedLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    check_header(path, &header, &EVENT_HEADER)?;

    let mut out = ParsedLog::default();
    for rec in rdr.records() {
        match rec {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                match parse_event_fields(&rec) {
                    Ok(ev) => out.events.push(ev),
                    Err(reason) => out.malformed.push(MalformedRow { line, reason }),
                }
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.malformed.push(MalformedRow {
                    line,
                    reason: e.to_string(),
                });
            }
        }
    }
    let total = out.total_rows();
    let bad = out.malformed.len();
    if bad > 1 && bad as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        let first = &out.malformed[0];
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: out.malformed.len(),
            total,
            first: format!("line {}: {}", first.line, first.reason),
        });
    }
    Ok(out)
}

/// Write events in the canonical input format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_event_log<W: Write>(writer: W, events: &[RawEvent]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENT_HEADER)?;
    for ev in events {
        w.write_record([
            ev.date.format("%Y-%m-%d").to_string(),
            ev.latitude.to_string(),
            ev.longitude.to_string(),
            ev.category.clone(),
            ev.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassAssignment {
    Class(EventClass),
    Ignored,
}

/// Raw category → event class. Keys are matched case-insensitively after
/// trimming. The special key `*` assigns every otherwise unmapped category.
#[derive(Debug, Clone, PartialEq)]
pub struct EventClassMap {
    schema: Schema,
    entries: BTreeMap<String, ClassAssignment>,
    fallback: Option<ClassAssignment>,
}

fn normalize_category(s: &str) -> String {
    s.trim().to_ascii_uppercase()
}

impl EventClassMap {
    pub fn empty(schema: Schema) -> Self {
        EventClassMap {
            schema,
            entries: BTreeMap::new(),
            fallback: None,
        }
    }

    /// Default crime map: only the categories named in the study.
    pub fn crime_default() -> Self {
        let mut m = Self::empty(Schema::Crime);
        for c in ["HOMICIDE", "ASSAULT", "BATTERY"] {
            m.insert(c, ClassAssignment::Class(EventClass::Violent));
        }
        for c in ["BURGLARY", "THEFT", "MOTOR VEHICLE THEFT"] {
            m.insert(c, ClassAssignment::Class(EventClass::Property));
        }
        m
    }

    /// Default terror map over GTD attack-type labels.
    pub fn terror_default() -> Self {
        let mut m = Self::empty(Schema::Terror);
        for c in ["BOMBING/EXPLOSION", "FACILITY/INFRASTRUCTURE ATTACK"] {
            m.insert(c, ClassAssignment::Class(EventClass::AntiInfrastructure));
        }
        for c in [
            "ARMED ASSAULT",
            "HOSTAGE TAKING (BARRICADE INCIDENT)",
            "HOSTAGE TAKING (KIDNAPPING)",
            "HIJACKING",
            "ASSASSINATION",
        ] {
            m.insert(c, ClassAssignment::Class(EventClass::AntiPersonnel));
        }
        m
    }

    pub fn default_for(schema: Schema) -> Self {
        match schema {
            Schema::Crime => Self::crime_default(),
            Schema::Terror => Self::terror_default(),
        }
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub fn insert(&mut self, category: &str, assignment: ClassAssignment) {
        if category.trim() == "*" {
            self.fallback = Some(assignment);
        } else {
            self.entries.insert(normalize_category(category), assignment);
        }
    }

    /// Checks that `assignment` is legal for the schema: only incident classes
    /// of this schema may be targeted by raw categories.
    pub fn insert_checked(&mut self, category: &str, assignment: ClassAssignment) -> Result<()> {
        if let ClassAssignment::Class(c) = assignment {
            if !self.schema.incident_classes().contains(&c) {
                return Err(Error::Config(format!(
                    "category `{category}` mapped to `{c}`, which is not an incident class of this schema"
                )));
            }
        }
        self.insert(category, assignment);
        Ok(())
    }

    pub fn lookup(&self, category: &str) -> Option<ClassAssignment> {
        self.entries
            .get(&normalize_category(category))
            .copied()
            .or(self.fallback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedEvent {
    pub date: NaiveDate,
    pub latitude: f64,
    pub longitude: f64,
    pub class: EventClass,
}

#[derive(Debug, Clone, Default)]
pub struct Classified {
    pub records: Vec<ClassifiedEvent>,
    /// Input events assigned to an incident class.
    pub n_classified: usize,
    pub n_ignored: usize,
    /// Extra count-class records emitted (subset of `records`).
    pub n_count_records: usize,
}

/// Assign classes. Each classified event with a positive count also yields
/// one record of the schema's count class at the same place and day.
pub fn classify_events(events: &[RawEvent], map: &EventClassMap) -> Result<Classified> {
    let unmapped: BTreeSet<String> = events
        .iter()
        .filter(|e| map.lookup(&e.category).is_none())
        .map(|e| normalize_category(&e.category))
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::UnmappedCategories(unmapped.into_iter().collect()));
    }

    let count_class = map.schema().count_class();
    let mut out = Classified::default();
    for ev in events {
        match map.lookup(&ev.category) {
            Some(ClassAssignment::Class(class)) => {
                out.n_classified += 1;
                out.records.push(ClassifiedEvent {
                    date: ev.date,
                    latitude: ev.latitude,
                    longitude: ev.longitude,
                    class,
                });
                if ev.count > 0 {
                    out.n_count_records += 1;
                    out.records.push(ClassifiedEvent {
                        date: ev.date,
                        latitude: ev.latitude,
                        longitude: ev.longitude,
                        class: count_class,
                    });
                }
            }
            Some(ClassAssignment::Ignored) => out.n_ignored += 1,
            None => unreachable!("unmapped categories rejected above"),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SesRecord {
    pub region_id: String,
    pub crowded_pct: f64,
    pub poverty_pct: f64,
    pub unemployed_pct: f64,
    pub income_pc: f64,
    pub hardship: f64,
}

fn parse_ses_fields(rec: &csv::StringRecord) -> std::result::Result<SesRecord, String> {
    if rec.len() != SES_HEADER.len() {
        return Err(format!("expected 6 fields, found {}", rec.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let v: f64 = rec[i]
            .trim()
            .parse()
            .map_err(|_| format!("bad {} `{}`", SES_HEADER[i], &rec[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite {}", SES_HEADER[i]))
        }
    };
    let r = SesRecord {
        region_id: rec[0].trim().to_string(),
        crowded_pct: num(1)?,
        poverty_pct: num(2)?,
        unemployed_pct: num(3)?,
        income_pc: num(4)?,
        hardship: num(5)?,
    };
    for (name, v) in [
        ("crowded_pct", r.crowded_pct),
        ("poverty_pct", r.poverty_pct),
        ("unemployed_pct", r.unemployed_pct),
    ] {
        if !(0.0..=100.0).contains(&v) {
            return Err(format!("{name} {v} outside [0, 100]"));
        }
    }
    if !(1.0..=100.0).contains(&r.hardship) {
        return Err(format!("hardship {} outside [1, 100]", r.hardship));
    }
    if r.income_pc < 0.0 {
        return Err(format!("negative income_pc {}", r.income_pc));
    }
    if r.region_id.is_empty() {
        return Err("empty region_id".into());
    }
    Ok(r)
}

/// SES tables are small and hand-curated, so any invalid row is an error.
pub fn parse_ses_table(path: &Path) -> Result<Vec<SesRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    check_header(path, &header, &SES_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let r = parse_ses_fields(&rec).map_err(|reason| Error::BadRecord {
            path: path.to_path_buf(),
            line,
            reason,
        })?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<ParsedLog> {
        parse_event_reader(Path::new("<mem>"), s.as_bytes())
    }

    #[test]
    fn direct_field_mapping() {
        let log = parse_str("date,latitude,longitude,category,count\n2017-02-03,41.881,-87.627,THEFT,0\n").unwrap();
        assert_eq!(
            log.events,
            vec![RawEvent {
                date: NaiveDate::from_ymd_opt(2017, 2, 3).unwrap(),
                latitude: 41.881,
                longitude: -87.627,
                category: "THEFT".into(),
                count: 0,
            }]
        );
        assert!(log.malformed.is_empty());
    }

    #[test]
    fn empty_file_with_header() {
        let log = parse_str("date,latitude,longitude,category,count\n").unwrap();
        assert!(log.events.is_empty());
        assert_eq!(log.total_rows(), 0);
    }

    #[test]
    fn one_bad_date_among_valid_rows() {
        let mut s = String::from("date,latitude,longitude,category,count\n");
        s.push_str("2017-02-03,41.881,-87.627,THEFT,0\n");
        s.push_str("2017-02-30,41.881,-87.627,THEFT,0\n");
        s.push_str("2017-02-04,41.882,-87.628,BATTERY,1\n");
        s.push_str("2017-02-05,41.883,-87.629,HOMICIDE,2\n");
        let log = parse_str(&s).unwrap();
        assert_eq!(log.events.len(), 3);
        assert_eq!(log.malformed.len(), 1);
        assert_eq!(log.malformed[0].line, 3);
        assert!(log.malformed[0].reason.contains("bad date"));

        // a second bad row pushes the file over 10%
        s.push_str("yesterday,41.883,-87.629,HOMICIDE,2\n");
        let err = parse_str(&s).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 2, total: 5, .. }));
    }

    #[test]
    fn header_mismatch_and_missing_file() {
        let err = parse_str("when,lat,lon,cat,n\n").unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch { .. }));
        let err = parse_event_log(Path::new("/nonexistent/log.csv"), Schema::Crime).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(matches!("bogus".parse::<Schema>(), Err(Error::UnknownSchema(_))));
    }

    #[test]
    fn sentinel_coordinates_and_ranges_are_malformed() {
        for row in [
            "2017-01-01,0,0,THEFT,0",
            "2017-01-01,91,10,THEFT,0",
            "2017-01-01,10,-181,THEFT,0",
            "2017-01-01,10,10,THEFT,-1",
            "2017-01-01,10,10,,0",
            "2017-01-01,10,10,THEFT",
        ] {
            let mut s = String::from("date,latitude,longitude,category,count\n");
            s.push_str(row);
            s.push('\n');
            for _ in 0..20 {
                s.push_str("2017-01-02,41.8,-87.6,THEFT,0\n");
            }
            let log = parse_str(&s).unwrap();
            assert_eq!(log.malformed.len(), 1, "row {row}");
        }
    }

    #[test]
    fn classification_and_count_records() {
        let map = EventClassMap::crime_default();
        assert_eq!(map.lookup("HOMICIDE"), Some(ClassAssignment::Class(EventClass::Violent)));
        assert_eq!(map.lookup(" theft "), Some(ClassAssignment::Class(EventClass::Property)));
        let d = NaiveDate::from_ymd_opt(2016, 5, 1).unwrap();
        let ev = |cat: &str, count| RawEvent {
            date: d,
            latitude: 41.9,
            longitude: -87.7,
            category: cat.into(),
            count,
        };
        let events = vec![ev("BATTERY", 2), ev("THEFT", 0), ev("HOMICIDE", 0)];
        let c = classify_events(&events, &map).unwrap();
        let classes: Vec<_> = c.records.iter().map(|r| r.class).collect();
        assert_eq!(
            classes,
            vec![EventClass::Violent, EventClass::Arrests, EventClass::Property, EventClass::Violent]
        );
        assert_eq!(c.n_count_records, 1);

        let err = classify_events(&[ev("NARCOTICS", 0), ev("ARSON", 1)], &map).unwrap_err();
        match err {
            Error::UnmappedCategories(v) => assert_eq!(v, vec!["ARSON", "NARCOTICS"]),
            e => panic!("{e}"),
        }

        let mut ext = map.clone();
        ext.insert("*", ClassAssignment::Ignored);
        let c = classify_events(&[ev("NARCOTICS", 3), ev("THEFT", 0)], &ext).unwrap();
        assert_eq!((c.n_classified, c.n_ignored, c.records.len()), (1, 1, 1));
    }

    #[test]
    fn terror_map_uses_casualties() {
        let map = EventClassMap::terror_default();
        let ev = RawEvent {
            date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            latitude: 33.3,
            longitude: 44.4,
            category: "Bombing/Explosion".into(),
            count: 4,
        };
        let c = classify_events(&[ev], &map).unwrap();
        assert_eq!(c.records[0].class, EventClass::AntiInfrastructure);
        assert_eq!(c.records[1].class, EventClass::Casualties);
    }

    #[test]
    fn insert_checked_rejects_foreign_class() {
        let mut m = EventClassMap::crime_default();
        assert!(m.insert_checked("ROBBERY", ClassAssignment::Class(EventClass::Violent)).is_ok());
        assert!(m.insert_checked("X", ClassAssignment::Class(EventClass::Arrests)).is_err());
        assert!(m.insert_checked("Y", ClassAssignment::Class(EventClass::AntiPersonnel)).is_err());
    }
}
