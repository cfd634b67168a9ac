//! Check results, data tables and their JSON/CSV serialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "relation", content = "bound")]
pub enum Bound {
    #[serde(rename = "<=")]
    AtMost(f64),
    #[serde(rename = ">=")]
    AtLeast(f64),
    #[serde(rename = "in")]
    Within(f64, f64),
}

impl Bound {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(b) => v <= b,
            Bound::AtLeast(b) => v >= b,
            Bound::Within(lo, hi) => v >= lo && v <= hi,
        }
    }

    fn describe(&self) -> String {
        match *self {
            Bound::AtMost(b) => format!("<= {b:e}"),
            Bound::AtLeast(b) => format!(">= {b}"),
            Bound::Within(lo, hi) => format!("in [{lo:e}, {hi:e}]"),
        }
    }

    fn with_override(self, v: f64) -> Bound {
        match self {
            Bound::AtMost(_) => Bound::AtMost(v),
            Bound::AtLeast(_) => Bound::AtLeast(v),
            Bound::Within(lo, hi) => {
                let half = v.abs();
                let mid = 0.5 * (lo + hi);
                Bound::Within(mid - half, mid + half)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(flatten)]
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            value,
            passed: bound.holds(value),
            bound,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.bound.describe()
        )
    }
}

/// Overrides keyed by check name. For `Within` bounds the value is the
/// half-width around the original centre.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tolerances(pub BTreeMap<String, f64>);

impl Tolerances {
    pub fn apply(&self, name: &str, bound: Bound) -> Bound {
        match self.0.get(name) {
            Some(v) => bound.with_override(*v),
            None => bound,
        }
    }

    /// Parse `name=value`.
    pub fn insert_pair(&mut self, pair: &str) -> Result<()> {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("tolerance '{pair}' needs name=value")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::InvalidInput(format!("tolerance '{name}' has non-numeric value '{value}'")))?;
        if name.is_empty() || !v.is_finite() {
            return Err(Error::InvalidInput(format!("invalid tolerance '{pair}'")));
        }
        self.0.insert(name.to_string(), v);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => format!("{f:.16e}"),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(&self.columns).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub name: String,
    pub checks: Vec<Check>,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
}

impl SuiteReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, tol: &Tolerances, name: &str, value: f64, bound: Bound) {
        self.checks.push(Check::new(name, value, tol.apply(name, bound)));
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "name": self.name,
            "passed": self.passed(),
            "checks": self.checks,
            "summary": self.summary,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
    pub errors: Vec<(String, String)>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.suites.iter().all(SuiteReport::passed)
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "rng": crate::rng::RNG_ALGORITHM,
            "passed": self.passed(),
            "suites": self.suites.iter().map(SuiteReport::to_json).collect::<Vec<_>>(),
            "errors": self.errors.iter().map(|(s, e)| serde_json::json!({"suite": s, "error": e})).collect::<Vec<_>>(),
        })
    }

    /// `report.json` plus one CSV per table.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        fs::write(dir.join("report.json"), text)?;
        for suite in &self.suites {
            for table in &suite.tables {
                table.write_csv(&dir.join(format!("{}.csv", table.name)))?;
            }
        }
        Ok(())
    }
}
