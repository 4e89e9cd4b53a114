//! Reading and writing engagement logs.
//!
//! Two wire formats are supported:
//!
//! * CSV, header-free: `user_key,item_key,polarity[,timestamp[,weight]]`
//! * JSON lines: `{"user": ..., "item": ..., "polarity": 1, "ts": 0, "w": 1.0}`
//!
//! Polarity is written as `1` / `-1`. Timestamp defaults to 0 and weight
//! to 1.0 when a row omits them. Parse failures name the 1-based line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};
use crate::store::{EngagementStore, Polarity, StoreBuilder};

/// Supported log encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Csv,
    Jsonl,
}

impl IngestFormat {
    /// Picks the format from a file extension (`.csv` / `.jsonl` / `.json`).
    pub fn from_path(path: &Path) -> Result<IngestFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(IngestFormat::Csv),
            Some("jsonl") | Some("json") => Ok(IngestFormat::Jsonl),
            other => Err(HcfError::InvalidConfig(format!(
                "cannot infer log format from extension {other:?}; expected .csv or .jsonl"
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonEvent {
    user: String,
    item: String,
    polarity: i64,
    #[serde(default)]
    ts: i64,
    #[serde(default = "default_weight")]
    w: f64,
}

fn default_weight() -> f64 {
    1.0
}

fn parse_err(line: usize, message: impl Into<String>) -> HcfError {
    HcfError::Parse { line, message: message.into() }
}

fn parse_polarity(line_no: usize, raw: &str) -> Result<Polarity> {
    let value: i64 = raw
        .parse()
        .map_err(|_| parse_err(line_no, format!("polarity {raw:?} is not an integer")))?;
    Polarity::from_signum(value)
        .ok_or_else(|| parse_err(line_no, format!("polarity must be 1 or -1, got {value}")))
}

fn read_csv(reader: impl Read, builder: &mut StoreBuilder) -> Result<()> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    for record in csv_reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 3 || record.len() > 5 {
            return Err(parse_err(
                line_no,
                format!("expected 3 to 5 comma-separated fields, got {}", record.len()),
            ));
        }
        let user_key = &record[0];
        let item_key = &record[1];
        if user_key.is_empty() || item_key.is_empty() {
            return Err(parse_err(line_no, "empty user or item key"));
        }
        let polarity = parse_polarity(line_no, &record[2])?;
        let timestamp: i64 = match record.get(3) {
            Some(f) if !f.is_empty() => f
                .parse()
                .map_err(|_| parse_err(line_no, format!("timestamp {f:?} is not an integer")))?,
            _ => 0,
        };
        let weight: f64 = match record.get(4) {
            Some(f) if !f.is_empty() => f
                .parse()
                .map_err(|_| parse_err(line_no, format!("weight {f:?} is not a number")))?,
            _ => 1.0,
        };
        builder
            .push_keys(user_key, item_key, polarity, weight, timestamp)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
    }
    Ok(())
}

fn read_jsonl(reader: impl Read, builder: &mut StoreBuilder) -> Result<()> {
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let event: JsonEvent =
            serde_json::from_str(trimmed).map_err(|e| parse_err(line_no, e.to_string()))?;
        let polarity = Polarity::from_signum(event.polarity).ok_or_else(|| {
            parse_err(line_no, format!("polarity must be 1 or -1, got {}", event.polarity))
        })?;
        builder
            .push_keys(&event.user, &event.item, polarity, event.w, event.ts)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
    }
    Ok(())
}

/// Parses an engagement log from any reader. Blank lines are skipped; any
/// malformed line aborts the ingest with its line number.
pub fn read_events(reader: impl Read, format: IngestFormat) -> Result<EngagementStore> {
    let mut builder = StoreBuilder::new();
    match format {
        IngestFormat::Csv => read_csv(reader, &mut builder)?,
        IngestFormat::Jsonl => read_jsonl(reader, &mut builder)?,
    }
    Ok(builder.build())
}

/// Loads a log file, inferring the format from its extension.
pub fn load_events(path: &Path) -> Result<EngagementStore> {
    let format = IngestFormat::from_path(path)?;
    let file = File::open(path)?;
    read_events(file, format)
}

/// Writes the store's merged events. Rows come out in canonical
/// (user id, item id, polarity) order, so ingesting the output reassigns
/// the same dense ids to every entity that has at least one event.
pub fn write_events(
    store: &EngagementStore,
    writer: impl Write,
    format: IngestFormat,
) -> Result<()> {
    match format {
        IngestFormat::Csv => {
            let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            for event in store.events() {
                let user = store.key_of(event.user).expect("event user is interned");
                let item = store.key_of(event.item).expect("event item is interned");
                // `{}` on f64 prints the shortest digits that parse back to
                // the same bits, so merged weights survive the round trip.
                out.write_record([
                    user,
                    item,
                    &event.polarity.signum().to_string(),
                    &event.timestamp.to_string(),
                    &event.weight.to_string(),
                ])
                .map_err(|e| HcfError::InvalidConfig(e.to_string()))?;
            }
            out.flush()?;
        }
        IngestFormat::Jsonl => {
            let mut out = BufWriter::new(writer);
            for event in store.events() {
                let user = store.key_of(event.user).expect("event user is interned");
                let item = store.key_of(event.item).expect("event item is interned");
                let row = JsonEvent {
                    user: user.to_string(),
                    item: item.to_string(),
                    polarity: event.polarity.signum() as i64,
                    ts: event.timestamp,
                    w: event.weight,
                };
                writeln!(out, "{}", serde_json::to_string(&row)?)?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Writes the store's merged events to a file, format from extension.
pub fn save_events(store: &EngagementStore, path: &Path) -> Result<()> {
    let format = IngestFormat::from_path(path)?;
    let file = File::create(path)?;
    write_events(store, file, format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::EntityId;

    #[test]
    fn csv_defaults_for_short_rows() {
        let log = "alice,song1,1\nbob,song1,-1,42\nalice,song2,1,7,2.5\n";
        let store = read_events(log.as_bytes(), IngestFormat::Csv).unwrap();
        assert_eq!(store.events().len(), 3);
        let by_pair = |u: &str, i: &str| {
            let u = store.lookup_user(u).unwrap();
            let i = store.lookup_item(i).unwrap();
            store
                .events()
                .iter()
                .find(|e| e.user == u && e.item == i)
                .copied()
                .unwrap()
        };
        let short = by_pair("alice", "song1");
        assert_eq!((short.timestamp, short.weight), (0, 1.0));
        let mid = by_pair("bob", "song1");
        assert_eq!((mid.timestamp, mid.weight, mid.polarity), (42, 1.0, Polarity::Negative));
        let full = by_pair("alice", "song2");
        assert_eq!((full.timestamp, full.weight), (7, 2.5));
    }

    #[test]
    fn csv_ids_in_encounter_order() {
        let log = "c,x,1\na,y,1\nb,x,-1\n";
        let store = read_events(log.as_bytes(), IngestFormat::Csv).unwrap();
        assert_eq!(store.lookup_user("c"), Some(EntityId::user(0)));
        assert_eq!(store.lookup_user("a"), Some(EntityId::user(1)));
        assert_eq!(store.lookup_user("b"), Some(EntityId::user(2)));
        assert_eq!(store.lookup_item("x"), Some(EntityId::item(0)));
        assert_eq!(store.lookup_item("y"), Some(EntityId::item(1)));
    }

    #[test]
    fn csv_bad_polarity_reports_line() {
        let log = "alice,song1,1\nbob,song2,2\n";
        let err = read_events(log.as_bytes(), IngestFormat::Csv).unwrap_err();
        match err {
            HcfError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("polarity"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_wrong_arity_reports_line() {
        let log = "alice,song1,1\nbob,song2\n";
        let err = read_events(log.as_bytes(), IngestFormat::Csv).unwrap_err();
        assert!(matches!(err, HcfError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn jsonl_round_trip_is_identical() {
        let log = concat!(
            "{\"user\":\"alice\",\"item\":\"song1\",\"polarity\":1}\n",
            "{\"user\":\"bob\",\"item\":\"song1\",\"polarity\":-1,\"ts\":5,\"w\":0.25}\n",
        );
        let store = read_events(log.as_bytes(), IngestFormat::Jsonl).unwrap();
        let mut buf = Vec::new();
        write_events(&store, &mut buf, IngestFormat::Jsonl).unwrap();
        let reread = read_events(buf.as_slice(), IngestFormat::Jsonl).unwrap();
        assert_eq!(store.events(), reread.events());
        assert_eq!(store.n_users(), reread.n_users());
        assert_eq!(store.n_items(), reread.n_items());
    }

    #[test]
    fn jsonl_bad_polarity_reports_line() {
        let log = "{\"user\":\"a\",\"item\":\"x\",\"polarity\":1}\n{\"user\":\"a\",\"item\":\"y\",\"polarity\":0}\n";
        let err = read_events(log.as_bytes(), IngestFormat::Jsonl).unwrap_err();
        assert!(matches!(err, HcfError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn csv_round_trip_preserves_weights_exactly() {
        let log = "u1,i1,1,0,0.1\nu1,i1,1,0,0.2\nu2,i2,-1\n";
        let store = read_events(log.as_bytes(), IngestFormat::Csv).unwrap();
        let mut buf = Vec::new();
        write_events(&store, &mut buf, IngestFormat::Csv).unwrap();
        let reread = read_events(buf.as_slice(), IngestFormat::Csv).unwrap();
        // 0.1 + 0.2 is not 0.3 in floats; the round trip must keep the
        // exact merged sum rather than a shortened decimal.
        assert_eq!(store.events(), reread.events());
    }

    #[test]
    fn blank_lines_are_skipped() {
        let log = "\nalice,song1,1\n\n\nbob,song1,-1\n\n";
        let store = read_events(log.as_bytes(), IngestFormat::Csv).unwrap();
        assert_eq!(store.events().len(), 2);
    }

    #[test]
    fn format_inference_from_extension() {
        assert_eq!(IngestFormat::from_path(Path::new("a/b/events.csv")).unwrap(), IngestFormat::Csv);
        assert_eq!(IngestFormat::from_path(Path::new("x.jsonl")).unwrap(), IngestFormat::Jsonl);
        assert!(IngestFormat::from_path(Path::new("x.parquet")).is_err());
        assert!(IngestFormat::from_path(Path::new("noext")).is_err());
    }
}
