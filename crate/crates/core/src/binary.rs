//! Conjugate Bayesian decision curves for binary outcomes.
//!
//! Prevalence, sensitivity and specificity have independent Beta
//! posteriors, so joint posterior draws are formed by combining marginal
//! draws. Prevalence is drawn once per draw index and shared by every
//! threshold and strategy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DcaError, Result};
use crate::model::{
    validate_strategy_names, NetBenefitCube, Strategy, StrategyKind, Threshold, ThresholdGrid,
    Warning, WarningKind,
};
use crate::sampling::{sample_beta, substream, DcaRng};

const PREVALENCE_STREAM: u64 = 0;
const CELL_STREAM: u64 = 1;

/// Beta shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DcaError::param("alpha", format!("must be positive, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(DcaError::param("beta", format!("must be positive, got {beta}")));
        }
        Ok(BetaParams { alpha, beta })
    }

    pub const fn uniform() -> Self {
        BetaParams {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Prior pseudo-sample size `alpha + beta`.
    pub fn strength(&self) -> f64 {
        self.alpha + self.beta
    }

    /// Conjugate update with `successes` and `failures`.
    pub fn update(&self, successes: u64, failures: u64) -> Self {
        BetaParams {
            alpha: self.alpha + successes as f64,
            beta: self.beta + failures as f64,
        }
    }

    pub fn sample(&self, rng: &mut DcaRng) -> f64 {
        sample_beta(rng, self.alpha, self.beta)
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        BetaParams::uniform()
    }
}

/// Disease indicators plus per-strategy risk scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    outcomes: Vec<bool>,
    predictions: Vec<(Strategy, Vec<f64>)>,
}

impl BinaryDataset {
    pub fn new(outcomes: Vec<bool>, predictions: Vec<(Strategy, Vec<f64>)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(DcaError::EmptyDataset("no outcome records".into()));
        }
        validate_strategy_names(predictions.iter().map(|(s, _)| s))?;
        for (s, scores) in &predictions {
            if scores.len() != outcomes.len() {
                return Err(DcaError::LengthMismatch(format!(
                    "strategy `{}` has {} scores for {} outcomes",
                    s.name,
                    scores.len(),
                    outcomes.len()
                )));
            }
            if let Some((i, v)) = scores.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(DcaError::ScoreOutOfRange {
                    row: i + 1,
                    column: s.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(BinaryDataset {
            outcomes,
            predictions,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.predictions.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn predictions(&self) -> &[(Strategy, Vec<f64>)] {
        &self.predictions
    }

    pub fn scores(&self, name: &str) -> Result<&[f64]> {
        self.predictions
            .iter()
            .find(|(s, _)| s.name == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| DcaError::UnknownStrategy(name.to_string()))
    }

    pub fn diseased(&self) -> u64 {
        self.outcomes.iter().filter(|&&d| d).count() as u64
    }

    /// Rows selected by `idx` (with repetition allowed).
    pub fn select(&self, idx: &[usize]) -> BinaryDataset {
        BinaryDataset {
            outcomes: idx.iter().map(|&i| self.outcomes[i]).collect(),
            predictions: self
                .predictions
                .iter()
                .map(|(s, v)| (s.clone(), idx.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }
}

/// Confusion counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub diseased: u64,
    pub healthy: u64,
}

impl ThresholdCounts {
    pub fn n(&self) -> u64 {
        self.diseased + self.healthy
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fp
    }

    /// Plug-in net benefit `(TP - FP * w_t) / n`.
    pub fn net_benefit(&self, t: Threshold) -> f64 {
        (self.tp as f64 - self.fp as f64 * t.weight()) / self.n() as f64
    }
}

/// Brute-force confusion counts with positive prediction `score > t`.
pub fn count_scores(outcomes: &[bool], scores: &[f64], t: Threshold) -> ThresholdCounts {
    let mut c = ThresholdCounts::default();
    for (&d, &s) in outcomes.iter().zip(scores) {
        let z = s > t.value();
        match (d, z) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c.diseased = c.tp + c.fn_;
    c.healthy = c.fp + c.tn;
    c
}

pub fn count_at_threshold(data: &BinaryDataset, strategy: &str, t: Threshold) -> Result<ThresholdCounts> {
    Ok(count_scores(&data.outcomes, data.scores(strategy)?, t))
}

/// Counts at every grid threshold after a single sort of the scores.
pub fn counts_over_grid(outcomes: &[bool], scores: &[f64], grid: &ThresholdGrid) -> Vec<ThresholdCounts> {
    let mut order: Vec<(f64, bool)> = scores.iter().copied().zip(outcomes.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    // diseased_below[k] = diseased among the k lowest scores
    let mut diseased_below = Vec::with_capacity(order.len() + 1);
    diseased_below.push(0u64);
    for &(_, d) in &order {
        diseased_below.push(diseased_below.last().unwrap() + d as u64);
    }
    let n = order.len() as u64;
    let diseased = diseased_below[order.len()];
    let healthy = n - diseased;
    grid.thresholds()
        .iter()
        .map(|t| {
            let k = order.partition_point(|&(s, _)| s <= t.value());
            let fn_ = diseased_below[k];
            let tn = k as u64 - fn_;
            ThresholdCounts {
                tp: diseased - fn_,
                fp: healthy - tn,
                tn,
                fn_,
                diseased,
                healthy,
            }
        })
        .collect()
}

/// Beta parameters for prevalence, sensitivity and specificity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTriple {
    pub prevalence: BetaParams,
    pub sensitivity: BetaParams,
    pub specificity: BetaParams,
}

impl BetaTriple {
    pub fn uniform() -> Self {
        BetaTriple {
            prevalence: BetaParams::uniform(),
            sensitivity: BetaParams::uniform(),
            specificity: BetaParams::uniform(),
        }
    }
}

/// Conjugate update: prevalence `Beta(D + a0, ND + b0)`, sensitivity
/// `Beta(TP + a1, FN + b1)`, specificity `Beta(TN + a2, FP + b2)`.
pub fn posterior_update(prior: &BetaTriple, counts: &ThresholdCounts) -> BetaTriple {
    BetaTriple {
        prevalence: prior.prevalence.update(counts.diseased, counts.healthy),
        sensitivity: prior.sensitivity.update(counts.tp, counts.fn_),
        specificity: prior.specificity.update(counts.tn, counts.fp),
    }
}

/// Sensitivity/specificity pair for one (threshold, strategy) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeSp {
    pub sensitivity: BetaParams,
    pub specificity: BetaParams,
}

impl SeSp {
    pub fn uniform() -> Self {
        SeSp {
            sensitivity: BetaParams::uniform(),
            specificity: BetaParams::uniform(),
        }
    }
}

/// Priors for every (threshold, strategy) cell in threshold-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPriorTable {
    pub prevalence: BetaParams,
    pub strategies: usize,
    pub cells: Vec<SeSp>,
}

impl BinaryPriorTable {
    pub fn uniform(thresholds: usize, strategies: usize) -> Self {
        BinaryPriorTable {
            prevalence: BetaParams::uniform(),
            strategies,
            cells: vec![SeSp::uniform(); thresholds * strategies],
        }
    }

    pub fn cell(&self, t: usize, s: usize) -> SeSp {
        self.cells[t * self.strategies + s]
    }
}

/// Closed-form joint posterior for a full analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPosterior {
    pub prevalence_prior: BetaParams,
    pub prevalence: BetaParams,
    pub thresholds: Vec<f64>,
    /// User strategies; treat-all and treat-none are implicit.
    pub strategies: Vec<Strategy>,
    /// Threshold-major (threshold, strategy) cells.
    pub cells: Vec<SeSp>,
    pub counts: Vec<ThresholdCounts>,
    pub warnings: Vec<Warning>,
}

impl BinaryPosterior {
    pub fn cell(&self, t: usize, s: usize) -> SeSp {
        self.cells[t * self.strategies.len() + s]
    }

    /// Builds a posterior that equals the prior (no data), used for prior
    /// predictive sampling.
    pub fn from_prior(grid: &ThresholdGrid, strategies: Vec<Strategy>, priors: &BinaryPriorTable) -> Result<Self> {
        check_table(priors, grid.len(), strategies.len())?;
        Ok(BinaryPosterior {
            prevalence_prior: priors.prevalence,
            prevalence: priors.prevalence,
            thresholds: grid.values(),
            strategies,
            cells: priors.cells.clone(),
            counts: Vec::new(),
            warnings: Vec::new(),
        })
    }
}

fn check_table(priors: &BinaryPriorTable, thresholds: usize, strategies: usize) -> Result<()> {
    if priors.strategies != strategies || priors.cells.len() != thresholds * strategies {
        return Err(DcaError::LengthMismatch(format!(
            "prior table has {} cells for {} strategies, expected {} x {}",
            priors.cells.len(),
            priors.strategies,
            thresholds,
            strategies
        )));
    }
    Ok(())
}

/// Counts every (threshold, strategy) cell and applies the conjugate update.
pub fn fit(data: &BinaryDataset, grid: &ThresholdGrid, priors: &BinaryPriorTable) -> Result<BinaryPosterior> {
    let ns = data.predictions.len();
    check_table(priors, grid.len(), ns)?;
    let per_strategy: Vec<Vec<ThresholdCounts>> = data
        .predictions
        .iter()
        .map(|(_, scores)| counts_over_grid(&data.outcomes, scores, grid))
        .collect();

    let mut cells = Vec::with_capacity(grid.len() * ns);
    let mut counts = Vec::with_capacity(grid.len() * ns);
    let mut warnings = Vec::new();
    for (ti, t) in grid.thresholds().iter().enumerate() {
        for (si, (strategy, _)) in data.predictions.iter().enumerate() {
            let c = per_strategy[si][ti];
            let prior = priors.cell(ti, si);
            let post = posterior_update(
                &BetaTriple {
                    prevalence: priors.prevalence,
                    sensitivity: prior.sensitivity,
                    specificity: prior.specificity,
                },
                &c,
            );
            if c.tp == 0 {
                warnings.push(no_events_warning(&strategy.name, t.value(), c.positives()));
            }
            cells.push(SeSp {
                sensitivity: post.sensitivity,
                specificity: post.specificity,
            });
            counts.push(c);
        }
    }
    let d = data.diseased();
    Ok(BinaryPosterior {
        prevalence_prior: priors.prevalence,
        prevalence: priors.prevalence.update(d, data.len() as u64 - d),
        thresholds: grid.values(),
        strategies: data.strategies(),
        cells,
        counts,
        warnings,
    })
}

pub(crate) fn no_events_warning(strategy: &str, t: f64, positives: u64) -> Warning {
    let (kind, detail) = if positives == 0 {
        (WarningKind::NoPositivePredictions, "no positive predictions".to_string())
    } else {
        (
            WarningKind::NoEventsAboveThreshold,
            format!("{positives} positive predictions, none with the event"),
        )
    };
    Warning {
        kind,
        strategy: Some(strategy.to_string()),
        threshold: Some(t),
        message: format!("strategy `{strategy}`: no events observed above threshold {t} ({detail})"),
    }
}

/// Replaces the prevalence posterior with one fitted to external
/// cross-sectional counts, keeping the original prevalence prior.
pub fn external_prevalence(post: &BinaryPosterior, diseased: u64, healthy: u64) -> BinaryPosterior {
    BinaryPosterior {
        prevalence: post.prevalence_prior.update(diseased, healthy),
        ..post.clone()
    }
}

/// Joint draws with the underlying rates retained.
#[derive(Debug, Clone)]
pub struct JointSample {
    pub prevalence: Vec<f64>,
    /// Threshold-major (threshold, user strategy) sensitivity draws.
    pub sensitivity: Vec<Vec<f64>>,
    pub specificity: Vec<Vec<f64>>,
    pub cube: NetBenefitCube,
}

/// Sensitivity and specificity draws for one cell from its own substream.
pub fn sample_cell_rates(post: &BinaryPosterior, t: usize, s: usize, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let cell = post.cell(t, s);
    let mut rng = substream(seed, &[CELL_STREAM, t as u64, s as u64]);
    let se = (0..draws).map(|_| cell.sensitivity.sample(&mut rng)).collect();
    let sp = (0..draws).map(|_| cell.specificity.sample(&mut rng)).collect();
    (se, sp)
}

pub fn sample_prevalence(post: &BinaryPosterior, draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, &[PREVALENCE_STREAM]);
    (0..draws).map(|_| post.prevalence.sample(&mut rng)).collect()
}

pub fn sample_joint_detailed(post: &BinaryPosterior, draws: usize, seed: u64) -> Result<JointSample> {
    if draws == 0 {
        return Err(DcaError::param("draws", "must be at least 1"));
    }
    let nt = post.thresholds.len();
    let ns = post.strategies.len();
    let prevalence = sample_prevalence(post, draws, seed);

    let rates: Vec<(Vec<f64>, Vec<f64>)> = (0..nt * ns)
        .into_par_iter()
        .map(|k| sample_cell_rates(post, k / ns, k % ns, draws, seed))
        .collect();

    let mut strategies = post.strategies.clone();
    strategies.push(Strategy::treat_all());
    strategies.push(Strategy::treat_none());
    let mut cells = Vec::with_capacity(nt * (ns + 2));
    for ti in 0..nt {
        let w = Threshold::new(post.thresholds[ti])?.weight();
        for (se, sp) in &rates[ti * ns..(ti + 1) * ns] {
            cells.push(
                prevalence
                    .iter()
                    .zip(se.iter().zip(sp))
                    .map(|(&p, (&se, &sp))| se * p - w * (1.0 - sp) * (1.0 - p))
                    .collect(),
            );
        }
        cells.push(prevalence.iter().map(|&p| p - w * (1.0 - p)).collect());
        cells.push(vec![0.0; draws]);
    }
    let cube = NetBenefitCube::from_cells(post.thresholds.clone(), strategies, draws, cells)?;
    let (sensitivity, specificity) = rates.into_iter().unzip();
    Ok(JointSample {
        prevalence,
        sensitivity,
        specificity,
        cube,
    })
}

/// Posterior net-benefit draws for every user strategy plus treat-all and
/// treat-none. Deterministic given `seed`.
pub fn sample_joint(post: &BinaryPosterior, draws: usize, seed: u64) -> Result<NetBenefitCube> {
    sample_joint_detailed(post, draws, seed).map(|j| j.cube)
}

/// Strategy kind inferred from scores: all values in {0, 1} is a binary test.
pub fn infer_kind(scores: &[f64]) -> StrategyKind {
    if scores.iter().all(|&s| s == 0.0 || s == 1.0) {
        StrategyKind::BinaryTest
    } else {
        StrategyKind::Model
    }
}
