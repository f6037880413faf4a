//! Frequentist baselines: percentile-bootstrap net benefit for binary
//! outcomes and a Kaplan-Meier plug-in net benefit for survival outcomes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binary::BinaryDataset;
use crate::error::{DcaError, Result};
use crate::model::{Threshold, ThresholdGrid, Warning, WarningKind, TREAT_ALL};
use crate::sampling::{substream, DcaRng};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::survival::{survival_nb, SurvivalDataset};

const BOOTSTRAP_STREAM: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 500,
            seed: 1,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub threshold: f64,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Row indices of bootstrap replicate `r`: `n` uniform draws with replacement.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng: DcaRng = substream(seed, &[BOOTSTRAP_STREAM, r as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// For each row, the number of grid thresholds strictly below its score,
/// so the row is a positive prediction at threshold `j` iff `j < bin`.
fn score_bins(scores: &[f64], grid: &[f64]) -> Vec<usize> {
    scores.iter().map(|&s| grid.partition_point(|&t| t < s)).collect()
}

/// Plug-in net benefit at every grid threshold for the rows in `idx`
/// (with repetition). `bins[i]` comes from [`score_bins`].
fn nb_curve(bins: &[usize], outcomes: &[bool], idx: &[usize], weights: &[f64]) -> Vec<f64> {
    let nt = weights.len();
    let mut cells = vec![[0u64; 2]; nt + 1];
    for &i in idx {
        cells[bins[i]][outcomes[i] as usize] += 1;
    }
    let n = idx.len() as f64;
    let mut out = vec![0.0; nt];
    let (mut tp, mut fp) = (0u64, 0u64);
    // positives at threshold j are rows with bin > j
    for j in (0..nt).rev() {
        tp += cells[j + 1][1];
        fp += cells[j + 1][0];
        out[j] = (tp as f64 - fp as f64 * weights[j]) / n;
    }
    out
}

/// Plug-in point estimates and percentile intervals for one strategy.
pub fn bootstrap_nb(data: &BinaryDataset, strategy: &str, grid: &ThresholdGrid, cfg: &BootstrapConfig) -> Result<Vec<BootstrapRow>> {
    let scores = data.scores(strategy)?;
    bootstrap_scores(data.outcomes(), scores, grid, cfg)
}

/// Bootstrap for every user strategy plus treat-all, sharing resamples.
pub fn bootstrap_dca(data: &BinaryDataset, grid: &ThresholdGrid, cfg: &BootstrapConfig) -> Result<Vec<(String, Vec<BootstrapRow>)>> {
    let mut out = Vec::new();
    for (s, scores) in data.predictions() {
        out.push((s.name.clone(), bootstrap_scores(data.outcomes(), scores, grid, cfg)?));
    }
    // treat-all is a score above every threshold
    let all = vec![1.0; data.len()];
    out.push((TREAT_ALL.to_string(), bootstrap_scores(data.outcomes(), &all, grid, cfg)?));
    Ok(out)
}

fn bootstrap_scores(outcomes: &[bool], scores: &[f64], grid: &ThresholdGrid, cfg: &BootstrapConfig) -> Result<Vec<BootstrapRow>> {
    if cfg.replicates < 1 {
        return Err(DcaError::param("replicates", "need at least one replicate"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(DcaError::param("level", format!("must lie in (0, 1), got {}", cfg.level)));
    }
    if outcomes.is_empty() {
        return Err(DcaError::EmptyDataset("no records to resample".into()));
    }
    let values = grid.values();
    let weights: Vec<f64> = grid.thresholds().iter().map(|t| t.weight()).collect();
    let bins = score_bins(scores, &values);
    let n = outcomes.len();
    let all: Vec<usize> = (0..n).collect();
    let point = nb_curve(&bins, outcomes, &all, &weights);
    let reps: Vec<Vec<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| nb_curve(&bins, outcomes, &resample_indices(n, cfg.seed, r), &weights))
        .collect();
    let a = (1.0 - cfg.level) / 2.0;
    Ok((0..values.len())
        .map(|j| {
            let s = sorted_copy(&reps.iter().map(|r| r[j]).collect::<Vec<_>>());
            BootstrapRow {
                threshold: values[j],
                point: point[j],
                lo: quantile_sorted(&s, a),
                hi: quantile_sorted(&s, 1.0 - a),
            }
        })
        .collect())
}

/// Product-limit survival curve evaluated at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Largest observed time (event or censoring).
    pub last_time: f64,
}

impl KmCurve {
    pub fn fit(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.is_empty() {
            return Err(DcaError::EmptyDataset("no records for Kaplan-Meier".into()));
        }
        if times.len() != events.len() {
            return Err(DcaError::LengthMismatch("times and events".into()));
        }
        let mut order: Vec<(f64, bool)> = times.iter().copied().zip(events.iter().copied()).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut curve = KmCurve {
            event_times: Vec::new(),
            survival: Vec::new(),
            at_risk: Vec::new(),
            events: Vec::new(),
            last_time: order[order.len() - 1].0,
        };
        let mut s = 1.0;
        let mut i = 0;
        while i < order.len() {
            let t = order[i].0;
            let at_risk = order.len() - i;
            let mut d = 0;
            while i < order.len() && order[i].0 == t {
                d += order[i].1 as usize;
                i += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / at_risk as f64;
                curve.event_times.push(t);
                curve.survival.push(s);
                curve.at_risk.push(at_risk);
                curve.events.push(d);
            }
        }
        Ok(curve)
    }

    /// `S(tau)`, right-continuous. `None` when `tau` lies beyond all
    /// follow-up while the curve is still above zero.
    pub fn at(&self, tau: f64) -> Option<f64> {
        let k = self.event_times.partition_point(|&t| t <= tau);
        let s = if k == 0 { 1.0 } else { self.survival[k - 1] };
        if tau > self.last_time && s > 0.0 {
            None
        } else {
            Some(s)
        }
    }
}

pub fn km_survival(times: &[f64], events: &[bool], tau: f64) -> Result<Option<f64>> {
    Ok(KmCurve::fit(times, events)?.at(tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmRow {
    pub threshold: f64,
    pub strategy: String,
    pub positives: usize,
    pub survival: Option<f64>,
    pub net_benefit: Option<f64>,
}

/// Kaplan-Meier net benefit point estimates for every user strategy and
/// treat-all. Undefined estimates are `None` and produce a warning.
pub fn km_dca(data: &SurvivalDataset, grid: &ThresholdGrid) -> Result<(Vec<KmRow>, Vec<Warning>)> {
    let n = data.len();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let all_curve = KmCurve::fit(data.times(), data.events())?;
    for &t in grid.thresholds() {
        for (s, scores) in data.predictions() {
            let idx: Vec<usize> = (0..n).filter(|&i| scores[i] > t.value()).collect();
            let row = if idx.is_empty() {
                KmRow {
                    threshold: t.value(),
                    strategy: s.name.clone(),
                    positives: 0,
                    survival: None,
                    net_benefit: Some(0.0),
                }
            } else {
                let sub = data.select(&idx);
                let surv = km_survival(sub.times(), sub.events(), data.tau())?;
                km_row(t, &s.name, idx.len(), n, surv)
            };
            if row.net_benefit.is_none() {
                warnings.push(undefined_warning(&s.name, t.value(), data.tau()));
            }
            rows.push(row);
        }
        let row = km_row(t, TREAT_ALL, n, n, all_curve.at(data.tau()));
        if row.net_benefit.is_none() {
            warnings.push(undefined_warning(TREAT_ALL, t.value(), data.tau()));
        }
        rows.push(row);
    }
    Ok((rows, warnings))
}

fn km_row(t: Threshold, strategy: &str, positives: usize, n: usize, surv: Option<f64>) -> KmRow {
    let p = positives as f64 / n as f64;
    KmRow {
        threshold: t.value(),
        strategy: strategy.to_string(),
        positives,
        survival: surv,
        net_benefit: surv.map(|s| survival_nb(s, p, t)),
    }
}

fn undefined_warning(strategy: &str, t: f64, tau: f64) -> Warning {
    Warning {
        kind: WarningKind::UndefinedEstimate,
        strategy: Some(strategy.to_string()),
        threshold: Some(t),
        message: format!("strategy `{strategy}` at threshold {t}: Kaplan-Meier survival undefined at horizon {tau} (no follow-up that long)"),
    }
}
