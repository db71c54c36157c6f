//! One-axis hyperparameter grids over an experiment config.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::config::ExperimentConfig;
use super::experiment::{mean_stderr, run_experiment, ExperimentResult};
use crate::error::{Error, Result};
use crate::policy::Component;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Epsilon,
    L2Lambda,
    BatchSize,
    /// Values look like `message:0` or `message:0+update:2`.
    ComponentLr,
    /// Each value names the one GNN component left trainable.
    SinglePartAblation,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::L2Lambda => "l2_lambda",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::ComponentLr => "component_lr",
            SweepAxis::SinglePartAblation => "single_part_ablation",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepAxis::Epsilon,
            SweepAxis::L2Lambda,
            SweepAxis::BatchSize,
            SweepAxis::ComponentLr,
            SweepAxis::SinglePartAblation,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep axis '{s}'")))
    }
}

/// One config per value, labelled by the value. Values are checked up front.
pub fn expand(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<(String, ExperimentConfig)>> {
    let values: Vec<String> = if values.is_empty() && axis == SweepAxis::SinglePartAblation {
        Component::ALL.iter().map(|c| c.to_string()).collect()
    } else {
        values.to_vec()
    };
    if values.is_empty() {
        return Err(Error::Config(format!("sweep over {axis} needs at least one value")));
    }
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let mut c = base.clone();
        match axis {
            SweepAxis::Epsilon => c.set("ppo.epsilon", &value)?,
            SweepAxis::L2Lambda => c.set("ppo.l2_lambda", &value)?,
            SweepAxis::BatchSize => c.set("ppo.batch_size", &value)?,
            SweepAxis::ComponentLr => {
                for part in value.split('+') {
                    let (group, m) = part
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("component_lr value '{part}' is not group:multiplier")))?;
                    c.set(&format!("lr.{}", group.trim()), m.trim())?;
                }
            }
            SweepAxis::SinglePartAblation => {
                if !c.policy_kind.is_gnn() {
                    return Err(Error::Config("single-part ablation needs a GNN policy".into()));
                }
                let keep: Component = value.parse()?;
                c.freeze = Some(Component::ALL.into_iter().filter(|&x| x != keep).collect());
            }
        }
        c.validate()?;
        if let Some(out) = &base.output_dir {
            c.output_dir = Some(out.join(format!("{axis}-{}", sanitize(&value))));
        }
        points.push((value, c));
    }
    Ok(points)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ".-_".contains(ch) { ch } else { '_' })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub label: String,
    pub config: ExperimentConfig,
    pub result: std::result::Result<ExperimentResult, String>,
}

/// Final-window statistics of one grid point, over its successful seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub seeds_ok: usize,
    pub final_reward: f64,
    pub final_reward_stderr: f64,
    pub final_kl: f64,
    pub final_kl_stderr: f64,
    pub final_clip_fraction: f64,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn summary(&self) -> SummaryRow {
        let mut row = SummaryRow {
            label: self.label.clone(),
            seeds_ok: 0,
            final_reward: f64::NAN,
            final_reward_stderr: f64::NAN,
            final_kl: f64::NAN,
            final_kl_stderr: f64::NAN,
            final_clip_fraction: f64::NAN,
            error: None,
        };
        match &self.result {
            Err(e) => row.error = Some(e.clone()),
            Ok(res) => {
                let ok: Vec<_> = res
                    .outcomes
                    .iter()
                    .filter(|o| o.record.error.is_none() && !o.record.rows().is_empty())
                    .map(|o| &o.record)
                    .collect();
                row.seeds_ok = ok.len();
                (row.final_reward, row.final_reward_stderr) =
                    mean_stderr(&ok.iter().map(|r| r.final_reward()).collect::<Vec<_>>());
                (row.final_kl, row.final_kl_stderr) = mean_stderr(&ok.iter().map(|r| r.final_kl()).collect::<Vec<_>>());
                row.final_clip_fraction = mean_stderr(&ok.iter().map(|r| r.final_clip_fraction()).collect::<Vec<_>>()).0;
                let errors: Vec<_> = res.outcomes.iter().filter_map(|o| o.record.error.clone()).collect();
                row.error = (!errors.is_empty()).then(|| errors.join("; "));
            }
        }
        row
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.points.iter().map(SweepPoint::summary).collect()
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record([
            "axis",
            "value",
            "seeds_ok",
            "final_reward",
            "final_reward_stderr",
            "final_kl",
            "final_kl_stderr",
            "final_clip_fraction",
            "error",
        ])
        .map_err(err)?;
        for r in self.summary() {
            w.write_record([
                self.axis.to_string(),
                r.label,
                r.seeds_ok.to_string(),
                r.final_reward.to_string(),
                r.final_reward_stderr.to_string(),
                r.final_kl.to_string(),
                r.final_kl_stderr.to_string(),
                r.final_clip_fraction.to_string(),
                r.error.unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs one experiment per value. A failing point does not stop the others.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<SweepResult> {
    let points = expand(base, axis, values)?
        .into_iter()
        .map(|(label, config)| {
            let result = run_experiment(&config).map_err(|e| format!("{}: {e}", e.category()));
            SweepPoint { label, config, result }
        })
        .collect();
    let result = SweepResult { axis, points };
    if let Some(out) = &base.output_dir {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        result.write_summary(&out.join(format!("sweep-{axis}.csv")))?;
    }
    Ok(result)
}
