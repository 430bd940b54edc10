//! Configuration files: TOML with one table per subcommand.
//!
//! ```toml
//! seed = 7
//!
//! [pstokes]
//! delta = 0.1
//!
//! [pstokes.regularity]
//! p = 1.5
//! grid-list = [16, 32, 64]
//! ```
//!
//! Top-level keys set global flags, keys of `[pstokes]` apply to every
//! `pstokes` subcommand and keys of `[pstokes.regularity]` to that one only.
//! Flags given on the command line win.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use toml::{Table, Value};

#[derive(Debug, Clone, Default)]
pub struct Config {
    table: Table,
}

/// A flag from the file: `None` for a boolean flag that is switched on.
pub type Entry = (String, Option<String>);

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self {
            table: text.parse::<Table>()?,
        })
    }

    /// Top-level scalar keys.
    pub fn globals(&self) -> Result<Vec<Entry>> {
        entries(&self.table, "top level")
    }

    /// Keys for the subcommand path `names`, outermost table first.
    pub fn section(&self, names: &[&str]) -> Result<Vec<Entry>> {
        let mut out = Vec::new();
        let mut table = &self.table;
        for (depth, name) in names.iter().enumerate() {
            match table.get(*name) {
                Some(Value::Table(t)) => {
                    out.extend(entries(t, &names[..=depth].join("."))?);
                    table = t;
                }
                Some(_) => bail!("`{}` must be a table", names[..=depth].join(".")),
                None => break,
            }
        }
        Ok(out)
    }
}

fn entries(t: &Table, where_: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (key, value) in t {
        let text = match value {
            Value::Table(_) => continue,
            Value::Boolean(true) => None,
            Value::Boolean(false) => continue,
            Value::Array(items) => Some(
                items
                    .iter()
                    .map(|v| {
                        scalar(v).ok_or_else(|| {
                            anyhow!("`{key}` in [{where_}]: list items must be numbers or strings")
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
                    .join(","),
            ),
            v => {
                Some(scalar(v).ok_or_else(|| anyhow!("`{key}` in [{where_}]: unsupported value"))?)
            }
        };
        out.push((key.clone(), text));
    }
    Ok(out)
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(x) => Some(x.to_string()),
        _ => None,
    }
}
