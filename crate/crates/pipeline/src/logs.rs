//! Line-delimited JSON run logs. Records are kept in insertion order and
//! written in one atomic step, so a log never depends on thread timing.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::Result;

#[derive(Clone, Debug, Default)]
pub struct RunLog {
    records: Vec<Value>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `{"event": event, ...fields}`. Non-object payloads go under `"value"`.
    pub fn record<T: Serialize>(&mut self, event: &str, fields: T) -> Result<()> {
        let mut obj = Map::new();
        obj.insert("event".into(), json!(event));
        match serde_json::to_value(fields)? {
            Value::Object(m) => obj.extend(m),
            Value::Null => {}
            v => {
                obj.insert("value".into(), v);
            }
        }
        log::info!("{}", Value::Object(obj.clone()));
        self.records.push(Value::Object(obj));
        Ok(())
    }

    pub fn records(&self) -> &[Value] {
        &self.records
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        aodforest::raster::write_atomic(path, |w| {
            for r in &self.records {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_record_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = RunLog::new();
        log.record("gate", json!({"gate": "iqr", "dropped": 3})).unwrap();
        log.record("count", 5).unwrap();
        let p = dir.path().join("run.jsonl");
        log.write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["event"], "gate");
        assert_eq!(first["dropped"], 3);
        let second: Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["value"], 5);
    }
}
