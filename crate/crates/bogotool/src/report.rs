//! JSON-lines report records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA: u32 = 1;

/// One checked inequality or measured quantity.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub schema: u32,
    pub check: String,
    /// Stable name of the inequality or identity under test.
    pub anchor: String,
    pub params: Map<String, Value>,
    pub values: Map<String, Value>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

/// Turns a `json!` object into a map; anything else becomes `{"value": v}`.
pub fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    }
}

/// Collects records and the wall time since the last one.
pub struct Reporter {
    records: Vec<Record>,
    timing: bool,
    clock: Instant,
}

impl Reporter {
    pub fn new(timing: bool) -> Self {
        Self {
            records: Vec::new(),
            timing,
            clock: Instant::now(),
        }
    }

    pub fn push(&mut self, check: &str, anchor: &str, params: Value, values: Value, pass: bool) {
        let runtime_ms = self
            .timing
            .then(|| self.clock.elapsed().as_secs_f64() * 1e3);
        self.clock = Instant::now();
        self.records.push(Record {
            schema: SCHEMA,
            check: check.to_string(),
            anchor: anchor.to_string(),
            params: object(params),
            values: object(values),
            pass,
            runtime_ms,
        });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    /// Writes one JSON object per line to `path`, or to `sink` when absent.
    pub fn write(&self, path: Option<&Path>, sink: &mut dyn Write) -> Result<()> {
        match path {
            Some(p) => {
                let f =
                    File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
                let mut w = BufWriter::new(f);
                self.write_lines(&mut w)?;
                w.flush()?;
            }
            None => self.write_lines(sink)?,
        }
        Ok(())
    }

    fn write_lines(&self, w: &mut dyn Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// One `PASS`/`FAIL` line per record.
    pub fn summary(&self, w: &mut dyn Write) -> Result<()> {
        for r in &self.records {
            writeln!(
                w,
                "{} {} ({})",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.anchor
            )?;
        }
        Ok(())
    }
}
