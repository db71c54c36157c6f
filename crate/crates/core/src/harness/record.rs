//! Per-update training logs and their CSV form.
//!
//! A record file starts with `# key: value` metadata lines followed by a
//! header row with the columns of [`UpdateRow`], in declaration order:
//!
//! ```text
//! update,timesteps,mean_episode_reward,mean_kl,clip_fraction,policy_loss,value_loss,l2_loss
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORD_HEADER: [&str; 8] = [
    "update",
    "timesteps",
    "mean_episode_reward",
    "mean_kl",
    "clip_fraction",
    "policy_loss",
    "value_loss",
    "l2_loss",
];

pub fn code_version() -> String {
    format!("snowgraph-{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRow {
    pub update: usize,
    pub timesteps: usize,
    pub mean_episode_reward: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub l2_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub policy_kind: String,
    pub seed: u64,
    pub code_version: String,
    rows: Vec<UpdateRow>,
    /// Set when the run stopped on an error.
    pub error: Option<String>,
}

/// Mean of the last 10% of `values` (at least one value); `NaN` when empty.
pub fn final_window(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let k = values.len().div_ceil(10);
    values[values.len() - k..].iter().sum::<f64>() / k as f64
}

impl RunRecord {
    pub fn new(config_hash: impl Into<String>, policy_kind: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            policy_kind: policy_kind.into(),
            seed,
            code_version: code_version(),
            rows: Vec::new(),
            error: None,
        }
    }

    pub fn rows(&self) -> &[UpdateRow] {
        &self.rows
    }

    /// Appends a row; timesteps must strictly increase.
    pub fn push(&mut self, row: UpdateRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.timesteps <= last.timesteps {
                return Err(Error::Trainer(format!(
                    "record timesteps must increase ({} after {})",
                    row.timesteps, last.timesteps
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, f: impl Fn(&UpdateRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn final_reward(&self) -> f64 {
        final_window(&self.column(|r| r.mean_episode_reward))
    }

    pub fn final_kl(&self) -> f64 {
        final_window(&self.column(|r| r.mean_kl))
    }

    pub fn final_clip_fraction(&self) -> f64 {
        final_window(&self.column(|r| r.clip_fraction))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let meta = [
            ("config_hash", self.config_hash.clone()),
            ("policy", self.policy_kind.clone()),
            ("seed", self.seed.to_string()),
            ("code_version", self.code_version.clone()),
            ("error", self.error.clone().unwrap_or_default().replace('\n', " ")),
        ];
        let mut buf = Vec::new();
        for (k, v) in meta {
            writeln!(buf, "# {k}: {v}").expect("writing to memory");
        }
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(RECORD_HEADER).map_err(csv_error)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Trainer(e.to_string()))?;
        drop(w);
        out.write_all(&buf).map_err(|e| Error::io("<record>", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::io::BufWriter::new(file).write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut record = RunRecord::new("", "", 0);
        record.code_version.clear();
        let mut body = String::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<record>", e))?;
            match line.strip_prefix("# ") {
                Some(meta) => {
                    let (k, v) = meta.split_once(": ").unwrap_or((meta.trim_end_matches(':'), ""));
                    match k {
                        "config_hash" => record.config_hash = v.to_string(),
                        "policy" => record.policy_kind = v.to_string(),
                        "seed" => {
                            record.seed = v.parse().map_err(|_| Error::Config(format!("bad seed '{v}' in record")))?
                        }
                        "code_version" => record.code_version = v.to_string(),
                        "error" => record.error = (!v.is_empty()).then(|| v.to_string()),
                        _ => {}
                    }
                }
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r.headers().map_err(csv_error)?;
        if header.iter().ne(RECORD_HEADER) {
            return Err(Error::Config(format!("unexpected record header {header:?}")));
        }
        for row in r.deserialize() {
            record.push(row.map_err(csv_error)?)?;
        }
        Ok(record)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("record csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(update: usize, reward: f64) -> UpdateRow {
        UpdateRow {
            update,
            timesteps: (update + 1) * 64,
            mean_episode_reward: reward,
            mean_kl: 1e-3 / 3.0,
            clip_fraction: 0.125,
            policy_loss: -0.1,
            value_loss: 2.5,
            l2_loss: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut r = RunRecord::new("abc", "gnn", 7);
        for u in 0..5 {
            r.push(row(u, (u as f64).sqrt() - 0.1)).unwrap();
        }
        r.error = Some("trainer: boom".into());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(&RECORD_HEADER.join(",")));
        assert_eq!(RunRecord::read_csv(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn timesteps_must_increase() {
        let mut r = RunRecord::new("h", "gnn", 0);
        r.push(row(1, 0.0)).unwrap();
        assert!(r.push(row(0, 0.0)).is_err());
        assert!(r.push(row(1, 0.0)).is_err());
        assert_eq!(r.rows().len(), 1);
    }

    #[test]
    fn final_window_uses_last_tenth() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(final_window(&v), 19.5);
        assert_eq!(final_window(&[4.0]), 4.0);
        assert_eq!(final_window(&[1.0, 2.0, 3.0]), 3.0);
        assert!(final_window(&[]).is_nan());
    }
}
