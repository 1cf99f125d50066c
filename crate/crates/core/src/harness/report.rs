//! Run reports and their CSV / JSONL serialization.
//!
//! CSV columns, one row per seed:
//!
//! | column | meaning |
//! |---|---|
//! | `schema_version` | report format version |
//! | `env`, `method`, `profile` | run identity |
//! | `num_observed_states` | observed states per seed |
//! | `seed` | RNG seed |
//! | `return_mean`, `return_stderr` | true-reward return of the final policy over evaluation episodes (gridworlds: λ = 1 sweep return, stderr 0) |
//! | `behavior_label` | gridworld outcome label, empty for continuous tasks |
//! | `theta` | inferred reward weights joined with `;` |
//! | `error` | failure message, empty on success |
//!
//! JSONL holds one header object followed by one object per seed.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mean_and_stderr;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON has no NaN; failed seeds store their returns as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(with = "nan_as_null")]
    pub return_mean: f64,
    #[serde(with = "nan_as_null")]
    pub return_stderr: f64,
    pub behavior_label: Option<String>,
    pub theta: Vec<f64>,
    pub error: Option<String>,
}

impl SeedResult {
    pub fn failed(seed: u64, error: &Error) -> Self {
        Self {
            seed,
            return_mean: f64::NAN,
            return_stderr: f64::NAN,
            behavior_label: None,
            theta: Vec::new(),
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub env: String,
    pub method: String,
    pub profile: String,
    pub num_observed_states: usize,
    pub seeds: Vec<SeedResult>,
    /// Mean over successful seeds of the per-seed mean return.
    pub mean: f64,
    /// Standard error of that mean across seeds.
    pub stderr: f64,
    /// True when at least one seed failed.
    pub partial: bool,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    env: String,
    method: String,
    profile: String,
    num_observed_states: usize,
    #[serde(with = "nan_as_null")]
    mean: f64,
    #[serde(with = "nan_as_null")]
    stderr: f64,
    partial: bool,
    artifacts: Vec<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    schema_version: u32,
    env: String,
    method: String,
    profile: String,
    num_observed_states: usize,
    seed: u64,
    return_mean: f64,
    return_stderr: f64,
    behavior_label: String,
    theta: String,
    error: String,
}

impl RunReport {
    pub fn new(env: &str, method: &str, profile: &str, num_observed_states: usize, seeds: Vec<SeedResult>) -> Self {
        let mut r = Self {
            schema_version: REPORT_SCHEMA_VERSION,
            env: env.to_string(),
            method: method.to_string(),
            profile: profile.to_string(),
            num_observed_states,
            seeds,
            mean: f64::NAN,
            stderr: f64::NAN,
            partial: false,
            artifacts: Vec::new(),
        };
        r.recompute();
        r
    }

    /// Refreshes the aggregate fields from the per-seed results.
    pub fn recompute(&mut self) {
        let ok: Vec<f64> = self.seeds.iter().filter(|s| s.is_ok()).map(|s| s.return_mean).collect();
        (self.mean, self.stderr) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_stderr(&ok) };
        self.partial = self.seeds.iter().any(|s| !s.is_ok());
    }

    pub fn labels(&self) -> Vec<Option<&str>> {
        self.seeds.iter().map(|s| s.behavior_label.as_deref()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record([
            "schema_version",
            "env",
            "method",
            "profile",
            "num_observed_states",
            "seed",
            "return_mean",
            "return_stderr",
            "behavior_label",
            "theta",
            "error",
        ])?;
        for s in &self.seeds {
            w.serialize(CsvRow {
                schema_version: self.schema_version,
                env: self.env.clone(),
                method: self.method.clone(),
                profile: self.profile.clone(),
                num_observed_states: self.num_observed_states,
                seed: s.seed,
                return_mean: s.return_mean,
                return_stderr: s.return_stderr,
                behavior_label: s.behavior_label.clone().unwrap_or_default(),
                theta: s.theta.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";"),
                error: s.error.clone().unwrap_or_default(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a CSV export. Identity fields come from the first row, so an
    /// empty CSV yields an empty report with blank identity.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut seeds = Vec::new();
        let mut ident: Option<(u32, String, String, String, usize)> = None;
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            if row.schema_version != REPORT_SCHEMA_VERSION {
                return Err(Error::parse("report csv", format!("unsupported schema version {}", row.schema_version)));
            }
            let theta = if row.theta.is_empty() {
                Vec::new()
            } else {
                row.theta
                    .split(';')
                    .map(|x| x.parse::<f64>().map_err(|e| Error::parse("report csv", e.to_string())))
                    .collect::<Result<_>>()?
            };
            ident.get_or_insert((row.schema_version, row.env, row.method, row.profile, row.num_observed_states));
            seeds.push(SeedResult {
                seed: row.seed,
                return_mean: row.return_mean,
                return_stderr: row.return_stderr,
                behavior_label: Some(row.behavior_label).filter(|l| !l.is_empty()),
                theta,
                error: Some(row.error).filter(|e| !e.is_empty()),
            });
        }
        let (_, env, method, profile, n) = ident.unwrap_or((REPORT_SCHEMA_VERSION, String::new(), String::new(), String::new(), 0));
        Ok(Self::new(&env, &method, &profile, n, seeds))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            schema_version: self.schema_version,
            env: self.env.clone(),
            method: self.method.clone(),
            profile: self.profile.clone(),
            num_observed_states: self.num_observed_states,
            mean: self.mean,
            stderr: self.stderr,
            partial: self.partial,
            artifacts: self.artifacts.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.seeds {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| Error::parse("report jsonl", "missing header"))??;
        let h: Header = serde_json::from_str(&first)?;
        if h.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::parse("report jsonl", format!("unsupported schema version {}", h.schema_version)));
        }
        let mut seeds = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                seeds.push(serde_json::from_str(&line)?);
            }
        }
        let mut r = Self::new(&h.env, &h.method, &h.profile, h.num_observed_states, seeds);
        r.artifacts = h.artifacts;
        Ok(r)
    }
}

/// Writes `<dir>/<env>_<method>_<states>.<ext>` and returns the path.
pub fn export_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!(
        "{}_{}_{}.{}",
        report.env,
        report.method,
        report.num_observed_states,
        format.extension()
    ));
    let mut out = BufWriter::new(File::create(&path)?);
    match format {
        ReportFormat::Csv => report.write_csv(&mut out)?,
        ReportFormat::Jsonl => report.write_jsonl(&mut out)?,
    }
    out.flush()?;
    Ok(path)
}
