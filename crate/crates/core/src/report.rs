//! Machine-readable experiment reports: pass/fail check records,
//! convergence tables with observed rates, JSON and CSV output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("a convergence table needs at least two levels, got {0}")]
    TooFewLevels(usize),
}

/// How a measured value is judged against its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    /// Boolean outcome; `measured` carries the offending quantity.
    Flag,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// Which property of the theory the check exercises.
    pub anchor: String,
    pub measured: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub level: Option<usize>,
}

impl CheckRecord {
    pub fn at_most(name: &str, anchor: &str, measured: f64, tolerance: f64) -> Self {
        Self::build(name, anchor, measured, tolerance, Comparison::AtMost, measured.is_finite() && measured <= tolerance)
    }

    pub fn at_least(name: &str, anchor: &str, measured: f64, tolerance: f64) -> Self {
        Self::build(name, anchor, measured, tolerance, Comparison::AtLeast, measured.is_finite() && measured >= tolerance)
    }

    pub fn flag(name: &str, anchor: &str, measured: f64, pass: bool) -> Self {
        Self::build(name, anchor, measured, f64::NAN, Comparison::Flag, pass)
    }

    fn build(name: &str, anchor: &str, measured: f64, tolerance: f64, comparison: Comparison, pass: bool) -> Self {
        CheckRecord { name: name.into(), anchor: anchor.into(), measured, tolerance, comparison, pass, level: None }
    }

    pub fn at_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub level: usize,
    pub h: f64,
    pub errors: Vec<f64>,
    /// `log2(e_{k-1} / e_k)`; `None` on the first level or when undefined.
    pub rates: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub name: String,
    /// Header of the length-scale column (`h` unless stated otherwise).
    pub scale: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Observed order between consecutive errors; undefined for zero or non-finite errors.
pub fn observed_rate(coarse: f64, fine: f64) -> Option<f64> {
    if coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite() {
        Some((coarse / fine).log2())
    } else {
        None
    }
}

impl ConvergenceTable {
    /// `errors[k][c]` is column `c` on level `k`.
    pub fn new(name: &str, columns: &[&str], h: &[f64], errors: Vec<Vec<f64>>) -> Result<Self, ReportError> {
        if errors.len() < 2 {
            return Err(ReportError::TooFewLevels(errors.len()));
        }
        let rows = errors
            .iter()
            .enumerate()
            .map(|(k, e)| TableRow {
                level: k,
                h: h[k],
                errors: e.clone(),
                rates: (0..e.len()).map(|c| if k == 0 { None } else { observed_rate(errors[k - 1][c], e[c]) }).collect(),
            })
            .collect();
        Ok(ConvergenceTable { name: name.into(), scale: "h".into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows })
    }

    pub fn with_scale(mut self, label: &str) -> Self {
        self.scale = label.into();
        self
    }

    /// Rates of one column from the second level on.
    pub fn rates(&self, column: usize) -> Vec<Option<f64>> {
        self.rows.iter().skip(1).map(|r| r.rates[column]).collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["level".to_string(), self.scale.clone()];
        for c in &self.columns {
            h.push(format!("error_{c}"));
            h.push(format!("rate_{c}"));
        }
        h
    }

    /// Rows as text cells; undefined rates print as "—".
    pub fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![r.level.to_string(), format!("{:.6e}", r.h)];
                for (e, rate) in r.errors.iter().zip(&r.rates) {
                    v.push(format!("{e:.6e}"));
                    v.push(rate.map_or_else(|| "—".to_string(), |x| format!("{x:.4}")));
                }
                v
            })
            .collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for row in self.cells() {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Environment {
    pub version: String,
    pub deterministic: bool,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Environment {
    pub fn now(deterministic: bool) -> Self {
        let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Environment { version: env!("CARGO_PKG_VERSION").to_string(), deterministic, timestamp }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: String,
    pub checks: Vec<CheckRecord>,
    pub tables: Vec<ConvergenceTable>,
    /// Free-form measured quantities that are reported but not judged.
    pub values: serde_json::Map<String, serde_json::Value>,
    pub environment: Environment,
}

impl Report {
    pub fn new(experiment: &str, deterministic: bool) -> Self {
        Report {
            experiment: experiment.into(),
            checks: Vec::new(),
            tables: Vec::new(),
            values: serde_json::Map::new(),
            environment: Environment::now(deterministic),
        }
    }

    pub fn check(&mut self, c: CheckRecord) {
        if !c.pass {
            log::warn!("check {} failed: measured {:e}", c.name, c.measured);
        }
        self.checks.push(c);
    }

    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.into(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }

    /// True when every check passed (vacuously for an empty report).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the JSON report to `path` and every table next to it as
    /// `<stem>_<table>.csv`.
    pub fn write(&self, path: &Path) -> Result<Vec<std::path::PathBuf>, ReportError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        let mut written = vec![path.to_path_buf()];
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        for t in &self.tables {
            let p = path.with_file_name(format!("{stem}_{}.csv", t.name));
            t.write_csv(std::fs::File::create(&p)?)?;
            written.push(p);
        }
        Ok(written)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let lvl = c.level.map(|l| format!(" (level {l})")).unwrap_or_default();
            s += &format!("{} {}{lvl}: measured {:.3e}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.measured);
            if c.comparison != Comparison::Flag {
                let op = if c.comparison == Comparison::AtMost { "<=" } else { ">=" };
                s += &format!(" {op} {:.1e}", c.tolerance);
            }
            s.push('\n');
        }
        for t in &self.tables {
            s += &format!("table {}\n  {}\n", t.name, t.header().join("  "));
            for row in t.cells() {
                s += &format!("  {}\n", row.join("  "));
            }
        }
        s
    }
}
