//! Replication harness: simulate, estimate, aggregate.
//!
//! Replication `r` draws from `split_stream(master_seed, r)` and results are
//! folded in replication order, so a report depends only on its config.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{EstimatorSettings, EstimatorSuite, EstimatorTag};
use crate::noise::ErrorKind;
use crate::process::Preset;
use crate::rng::split_stream;

fn default_reps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub preset: Preset,
    pub error: ErrorKind,
    pub n: usize,
    pub s2n: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub estimators: Vec<EstimatorTag>,
    pub master_seed: u64,
    #[serde(default)]
    pub settings: EstimatorSettings,
}

impl McConfig {
    pub fn new(preset: Preset, error: ErrorKind, n: usize, s2n: f64, estimators: Vec<EstimatorTag>, master_seed: u64) -> Self {
        McConfig { preset, error, n, s2n, reps: 100, estimators, master_seed, settings: EstimatorSettings::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(invalid("estimator list contains duplicates"));
        }
        self.preset.scenario(self.n, self.s2n, self.error)?;
        self.settings.plan.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub name: String,
    pub truth: f64,
    /// Successful replications, in replication order.
    pub estimates: Vec<f64>,
    /// `None` when every replication failed.
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    /// `(1/reps) sum (theta_hat - theta0)^2` over successful replications.
    pub mse: Option<f64>,
    /// Empirical variance with the same `1/reps` convention.
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub tag: EstimatorTag,
    pub successes: usize,
    pub failures: usize,
    pub failure_log: Vec<ReplicationFailure>,
    pub coordinates: Vec<CoordinateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub sigma_eps: f64,
    pub estimators: Vec<EstimatorSummary>,
}

impl McReport {
    pub fn estimator(&self, tag: EstimatorTag) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.tag == tag)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

fn summarise(name: &str, truth: f64, estimates: Vec<f64>) -> CoordinateSummary {
    let k = estimates.len();
    let (mean, bias, mse, variance) = if k == 0 {
        (None, None, None, None)
    } else {
        let m = estimates.iter().sum::<f64>() / k as f64;
        let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / k as f64;
        let var = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / k as f64;
        (Some(m), Some(m - truth), Some(mse), Some(var))
    };
    CoordinateSummary { name: name.to_string(), truth, estimates, mean, bias, mse, variance }
}

/// Runs every requested estimator on `reps` independent trajectories.
pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let scenario = cfg.preset.scenario(cfg.n, cfg.s2n, cfg.error)?;
    let family = cfg.preset.family();
    let suite = EstimatorSuite::new(family, &scenario.error, &cfg.estimators, &cfg.settings)?;

    let outcomes: Vec<Vec<std::result::Result<Vec<f64>, String>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = split_stream(cfg.master_seed, r as u64);
            match scenario.simulate(&mut rng) {
                Ok(t) => cfg
                    .estimators
                    .iter()
                    .map(|&tag| suite.run(tag, &t.z, Some(&t.x)).map(|rec| rec.theta_hat).map_err(|e| e.to_string()))
                    .collect(),
                Err(e) => vec![Err(format!("simulation failed: {e}")); cfg.estimators.len()],
            }
        })
        .collect();

    let truth = scenario.regression.params();
    let names = family.coordinate_names();
    let estimators = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &tag)| {
            let mut per_coord = vec![Vec::with_capacity(cfg.reps); truth.len()];
            let mut failure_log = Vec::new();
            for (r, row) in outcomes.iter().enumerate() {
                match &row[j] {
                    Ok(theta) => theta.iter().zip(per_coord.iter_mut()).for_each(|(v, c)| c.push(*v)),
                    Err(message) => failure_log.push(ReplicationFailure { replication: r, message: message.clone() }),
                }
            }
            EstimatorSummary {
                tag,
                successes: cfg.reps - failure_log.len(),
                failures: failure_log.len(),
                failure_log,
                coordinates: per_coord
                    .into_iter()
                    .enumerate()
                    .map(|(k, est)| summarise(names[k], truth[k], est))
                    .collect(),
            }
        })
        .collect();
    Ok(McReport { config: cfg.clone(), sigma_eps: scenario.error.sigma_eps, estimators })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (estimator, coordinate). CSV values use shortest
/// round-trip formatting; markdown cells read `mean (MSE)`.
pub fn emit_table(report: &McReport, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["estimator", "coordinate", "truth", "mean", "bias", "mse", "successes", "failures"])
                .expect("in-memory write");
            for e in &report.estimators {
                for c in &e.coordinates {
                    w.write_record([
                        e.tag.to_string(),
                        c.name.clone(),
                        c.truth.to_string(),
                        opt(c.mean),
                        opt(c.bias),
                        opt(c.mse),
                        e.successes.to_string(),
                        e.failures.to_string(),
                    ])
                    .expect("in-memory write");
                }
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        TableFormat::Markdown => {
            let mut out = String::from("| estimator | coordinate | mean (MSE) | successes | failures |\n");
            out.push_str("|---|---|---|---|---|\n");
            for e in &report.estimators {
                for c in &e.coordinates {
                    let cell = match (c.mean, c.mse) {
                        (Some(m), Some(s)) => format!("{m:.4} ({s:.4})"),
                        _ => "n/a".to_string(),
                    };
                    out.push_str(&format!("| {} | {} | {} | {} | {} |\n", e.tag, c.name, cell, e.successes, e.failures));
                }
            }
            out
        }
    }
}

/// Quartiles (type-7 interpolation) and Tukey whiskers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Smallest value within `1.5 IQR` below `q1`, or `q1` if none.
    pub lower_whisker: f64,
    /// Largest value within `1.5 IQR` above `q3`, or `q3` if none.
    pub upper_whisker: f64,
}

fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    // With interpolated quartiles the nearest point inside a fence can sit
    // inside the box; the whisker then collapses onto the quartile.
    let lower_whisker = s.iter().find(|&&v| v >= lo).map_or(q1, |&v| v.min(q1));
    let upper_whisker = s.iter().rev().find(|&&v| v <= hi).map_or(q3, |&v| v.max(q3));
    Some(BoxStats { q1, median, q3, lower_whisker, upper_whisker })
}

/// Long-format CSV `estimator,coordinate,field,value`: every replication
/// estimate (`field = estimate`) followed by the box summary.
pub fn emit_boxplot_data(report: &McReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "coordinate", "field", "value"]).expect("in-memory write");
    for e in &report.estimators {
        for c in &e.coordinates {
            let tag = e.tag.to_string();
            for v in &c.estimates {
                w.write_record([tag.as_str(), &c.name, "estimate", &v.to_string()]).expect("in-memory write");
            }
            if let Some(b) = box_stats(&c.estimates) {
                for (field, v) in [
                    ("q1", b.q1),
                    ("median", b.median),
                    ("q3", b.q3),
                    ("lower_whisker", b.lower_whisker),
                    ("upper_whisker", b.upper_whisker),
                ] {
                    w.write_record([tag.as_str(), &c.name, field, &v.to_string()]).expect("in-memory write");
                }
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
