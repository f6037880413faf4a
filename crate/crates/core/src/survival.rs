//! Bayesian decision curves for right-censored survival outcomes.
//!
//! At each (threshold, strategy) cell the records with a positive
//! prediction (`score > t`) are modelled with a censored Weibull likelihood
//! and the positive fraction `p` with a conjugate Beta. The two posteriors
//! are independent, so `p` is drawn in closed form and the Weibull shape and
//! scale are sampled by adaptive random-walk Metropolis on
//! `(log shape, log scale)`. Net benefit at horizon `tau` is
//! `(1 - S) p - S p w_t` with `S = exp(-(tau / scale)^shape)`.
//!
//! Fits are keyed by the set of positive records: cells (or the treat-all
//! strategy) that select the same records share one fit and one seed.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binary::BetaParams;
use crate::error::{DcaError, Result};
use crate::model::{
    validate_strategy_names, NetBenefitCube, Strategy, Threshold, ThresholdGrid, Warning, WarningKind,
    TREAT_ALL,
};
use crate::sampling::{mix_seed, open_uniform, sample_gamma, sample_student_t, substream, DcaRng};
use crate::stats::bulk_diagnostics;

const WEIBULL_STREAM: u64 = 2;
const POSITIVE_STREAM: u64 = 3;
const PRIOR_STREAM: u64 = 4;

/// Event times, event indicators (true = event observed, false = censored)
/// and per-strategy predicted risks at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    predictions: Vec<(Strategy, Vec<f64>)>,
    tau: f64,
}

impl SurvivalDataset {
    pub fn new(times: Vec<f64>, events: Vec<bool>, predictions: Vec<(Strategy, Vec<f64>)>, tau: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(DcaError::EmptyDataset("no survival records".into()));
        }
        if events.len() != times.len() {
            return Err(DcaError::LengthMismatch(format!(
                "{} event indicators for {} times",
                events.len(),
                times.len()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(DcaError::param("tau", format!("horizon must be positive, got {tau}")));
        }
        if let Some((i, t)) = times.iter().enumerate().find(|(_, t)| !(**t > 0.0 && t.is_finite())) {
            return Err(DcaError::NonPositiveTime {
                row: i + 1,
                column: "time".into(),
                value: t.to_string(),
            });
        }
        validate_strategy_names(predictions.iter().map(|(s, _)| s))?;
        for (s, scores) in &predictions {
            if scores.len() != times.len() {
                return Err(DcaError::LengthMismatch(format!(
                    "strategy `{}` has {} scores for {} records",
                    s.name,
                    scores.len(),
                    times.len()
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
        Ok(SurvivalDataset {
            times,
            events,
            predictions,
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn tau(&self) -> f64 {
        self.tau
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

    pub fn select(&self, idx: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            events: idx.iter().map(|&i| self.events[i]).collect(),
            predictions: self
                .predictions
                .iter()
                .map(|(s, v)| (s.clone(), idx.iter().map(|&i| v[i]).collect()))
                .collect(),
            tau: self.tau,
        }
    }

    /// Indices of records with `score > t`.
    pub fn positive_indices(&self, strategy: &str, t: Threshold) -> Result<Vec<usize>> {
        Ok(positive_indices(self.scores(strategy)?, t))
    }
}

fn positive_indices(scores: &[f64], t: Threshold) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > t.value())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(DcaError::param("shape", format!("must be positive, got {shape}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DcaError::param("scale", format!("must be positive, got {scale}")));
        }
        Ok(WeibullParams { shape, scale })
    }

    /// From the proportional-hazards parameterization `h(t) = lambda * gamma * t^(gamma - 1)`,
    /// where `lambda = scale^(-shape)`.
    pub fn from_rate(gamma: f64, lambda: f64) -> Result<Self> {
        WeibullParams::new(gamma, lambda.powf(-1.0 / gamma))
    }
}

/// Sum of Weibull log densities over events plus log survival over censored records.
pub fn censored_weibull_loglik(params: WeibullParams, times: &[f64], events: &[bool]) -> f64 {
    let (a, s) = (params.shape, params.scale);
    times
        .iter()
        .zip(events)
        .map(|(&t, &e)| {
            let z = t / s;
            let cum = z.powf(a);
            if e {
                (a / s).ln() + (a - 1.0) * z.ln() - cum
            } else {
                -cum
            }
        })
        .sum()
}

/// `exp(-(tau / scale)^shape)`.
pub fn survival_at_horizon(params: WeibullParams, tau: f64) -> f64 {
    (-(tau / params.scale).powf(params.shape)).exp()
}

/// `(1 - S) p - S p w_t`.
pub fn survival_nb(survival: f64, p: f64, t: Threshold) -> f64 {
    (1.0 - survival) * p - survival * p * t.weight()
}

/// Prior on a positive parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PositivePrior {
    /// `|T_df| * scale`.
    HalfStudentT { df: f64, scale: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl PositivePrior {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = match *self {
            PositivePrior::HalfStudentT { df, scale } => (df, scale),
            PositivePrior::Gamma { shape, rate } => (shape, rate),
        };
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(())
        } else {
            Err(DcaError::Config(format!("prior hyperparameters must be positive: {self:?}")))
        }
    }

    /// Log density up to an additive constant, for `x > 0`.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PositivePrior::HalfStudentT { df, scale } => {
                let z = x / scale;
                -0.5 * (df + 1.0) * (z * z / df).ln_1p()
            }
            PositivePrior::Gamma { shape, rate } => (shape - 1.0) * x.ln() - rate * x,
        }
    }

    pub fn sample(&self, rng: &mut DcaRng) -> f64 {
        match *self {
            PositivePrior::HalfStudentT { df, scale } => sample_student_t(rng, df).abs() * scale,
            PositivePrior::Gamma { shape, rate } => sample_gamma(rng, shape) / rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvPriorSpec {
    #[serde(default = "default_shape_prior")]
    pub shape: PositivePrior,
    #[serde(default = "default_scale_prior")]
    pub scale: PositivePrior,
    /// Prior on the fraction of positive predictions.
    #[serde(default)]
    pub positive: BetaParams,
}

fn default_shape_prior() -> PositivePrior {
    PositivePrior::HalfStudentT { df: 5.0, scale: 1.5 }
}

fn default_scale_prior() -> PositivePrior {
    PositivePrior::HalfStudentT { df: 30.0, scale: 100.0 }
}

impl Default for SurvPriorSpec {
    fn default() -> Self {
        SurvPriorSpec {
            shape: default_shape_prior(),
            scale: default_scale_prior(),
            positive: BetaParams::uniform(),
        }
    }
}

impl SurvPriorSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SurvPriorSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.scale.validate()?;
        BetaParams::new(self.positive.alpha, self.positive.beta).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Kept iterations per chain.
    pub keep: usize,
    pub target_acceptance: f64,
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            warmup: 1000,
            keep: 1000,
            target_acceptance: 0.3,
            max_rhat: 1.01,
            min_ess: 400.0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(DcaError::param("chains", "need at least one chain"));
        }
        if self.keep < 4 {
            return Err(DcaError::param("keep", "need at least 4 kept draws per chain"));
        }
        if self.warmup < 8 {
            return Err(DcaError::param("warmup", "need at least 8 warmup iterations"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(DcaError::param("target_acceptance", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn draws(&self) -> usize {
        self.chains * self.keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    pub rhat_shape: f64,
    pub rhat_scale: f64,
    pub ess_shape: f64,
    pub ess_scale: f64,
    pub acceptance: f64,
}

impl McmcDiagnostics {
    pub fn converged(&self, cfg: &McmcConfig) -> bool {
        self.rhat_shape.max(self.rhat_scale) <= cfg.max_rhat && self.ess_shape.min(self.ess_scale) >= cfg.min_ess
    }
}

/// Posterior (or prior-only) draws of the Weibull parameters, ordered by
/// chain then iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WeibullFit {
    pub shape: Vec<f64>,
    pub scale: Vec<f64>,
    pub records: usize,
    pub events: usize,
    /// `None` when the subset was empty and the prior was sampled directly.
    pub diagnostics: Option<McmcDiagnostics>,
}

impl WeibullFit {
    pub fn prior_only(&self) -> bool {
        self.diagnostics.is_none()
    }

    pub fn params(&self, k: usize) -> WeibullParams {
        WeibullParams {
            shape: self.shape[k],
            scale: self.scale[k],
        }
    }

    pub fn survival(&self, tau: f64) -> Vec<f64> {
        (0..self.shape.len()).map(|k| survival_at_horizon(self.params(k), tau)).collect()
    }
}

/// Log posterior on `(log shape, log scale)`, Jacobian included.
struct Target<'a> {
    log_times: Vec<f64>,
    event_log_time_sum: f64,
    events: f64,
    prior: &'a SurvPriorSpec,
}

impl<'a> Target<'a> {
    fn new(times: &[f64], events: &[bool], prior: &'a SurvPriorSpec) -> Self {
        let log_times: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        let event_log_time_sum = log_times.iter().zip(events).filter(|(_, &e)| e).map(|(l, _)| l).sum();
        Target {
            log_times,
            event_log_time_sum,
            events: events.iter().filter(|&&e| e).count() as f64,
            prior,
        }
    }

    fn log_density(&self, la: f64, ls: f64) -> f64 {
        let a = la.exp();
        let s = ls.exp();
        if !(a.is_finite() && s.is_finite() && a > 0.0 && s > 0.0) {
            return f64::NEG_INFINITY;
        }
        // sum over records of (t / s)^a, written as exp(a (log t - log s))
        let cum: f64 = self.log_times.iter().map(|&lt| (a * (lt - ls)).exp()).sum();
        let loglik = self.events * (la - a * ls) + (a - 1.0) * self.event_log_time_sum - cum;
        let lp = loglik + self.prior.shape.log_density(a) + self.prior.scale.log_density(s) + la + ls;
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

fn cholesky2(c: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    if !(c[0][0] > 0.0) {
        return None;
    }
    let l00 = c[0][0].sqrt();
    let l10 = c[1][0] / l00;
    let d = c[1][1] - l10 * l10;
    if !(d > 0.0) || !d.is_finite() {
        return None;
    }
    Some([[l00, 0.0], [l10, d.sqrt()]])
}

fn covariance2(xs: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let n = xs.len() as f64;
    let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
    let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / n;
    let mut c = [[0.0; 2]; 2];
    for x in xs {
        let (d0, d1) = (x[0] - m0, x[1] - m1);
        c[0][0] += d0 * d0;
        c[0][1] += d0 * d1;
        c[1][1] += d1 * d1;
    }
    let d = n - 1.0;
    [[c[0][0] / d, c[0][1] / d], [c[0][1] / d, c[1][1] / d]]
}

struct ChainOutput {
    log_shape: Vec<f64>,
    log_scale: Vec<f64>,
    accepted: usize,
}

fn run_chain(target: &Target, start: [f64; 2], cfg: &McmcConfig, rng: &mut DcaRng) -> ChainOutput {
    let w = cfg.warmup;
    let adapt_from = w / 8;
    let checkpoints = [w / 4, w / 2, 3 * w / 4];
    let mut chol = [[0.1, 0.0], [0.0, 0.1]];
    let mut log_lambda = 0.0f64;
    let mut x = start;
    let mut lp = target.log_density(x[0], x[1]);
    let mut history: Vec<[f64; 2]> = Vec::with_capacity(w);
    let mut out = ChainOutput {
        log_shape: Vec::with_capacity(cfg.keep),
        log_scale: Vec::with_capacity(cfg.keep),
        accepted: 0,
    };
    for k in 0..w + cfg.keep {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let step = log_lambda.exp();
        let prop = [
            x[0] + step * chol[0][0] * z0,
            x[1] + step * (chol[1][0] * z0 + chol[1][1] * z1),
        ];
        let lp_prop = target.log_density(prop[0], prop[1]);
        let log_ratio = lp_prop - lp;
        let accept = open_uniform(rng).ln() < log_ratio;
        if accept {
            x = prop;
            lp = lp_prop;
        }
        if k < w {
            let acc_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
            log_lambda += (acc_prob - cfg.target_acceptance) / ((k + 1) as f64).powf(0.6);
            history.push(x);
            if checkpoints.contains(&(k + 1)) && k + 1 - adapt_from >= 20 {
                let mut c = covariance2(&history[adapt_from..]);
                let f = 2.38 * 2.38 / 2.0;
                c[0][0] = f * c[0][0] + 1e-8;
                c[1][1] = f * c[1][1] + 1e-8;
                c[0][1] *= f;
                c[1][0] *= f;
                if let Some(l) = cholesky2(c) {
                    chol = l;
                    log_lambda = 0.0;
                }
            }
        } else {
            out.accepted += accept as usize;
            out.log_shape.push(x[0]);
            out.log_scale.push(x[1]);
        }
    }
    out
}

/// Draws from the shape and scale priors directly.
pub fn sample_weibull_prior(prior: &SurvPriorSpec, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = substream(seed, &[PRIOR_STREAM]);
    let shape = (0..draws).map(|_| prior.shape.sample(&mut rng)).collect();
    let scale = (0..draws).map(|_| prior.scale.sample(&mut rng)).collect();
    (shape, scale)
}

/// Samples the Weibull posterior for one subset of records. An empty subset
/// returns `chains * keep` prior draws.
pub fn sample_weibull_posterior(
    times: &[f64],
    events: &[bool],
    prior: &SurvPriorSpec,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<WeibullFit> {
    cfg.validate()?;
    prior.validate()?;
    if times.len() != events.len() {
        return Err(DcaError::LengthMismatch("times and events".into()));
    }
    if times.is_empty() {
        let (shape, scale) = sample_weibull_prior(prior, cfg.draws(), seed);
        return Ok(WeibullFit {
            shape,
            scale,
            records: 0,
            events: 0,
            diagnostics: None,
        });
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(DcaError::param("times", format!("survival times must be positive, got {t}")));
    }
    let target = Target::new(times, events, prior);
    let d = events.iter().filter(|&&e| e).count();
    // exponential MLE as a starting scale; without events use the longest follow-up
    let total: f64 = times.iter().sum();
    let s0 = if d > 0 {
        total / d as f64
    } else {
        2.0 * times.iter().copied().fold(0.0, f64::max)
    };
    let chains: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, &[c as u64]);
            let mut start = [0.0, s0.ln()];
            for _ in 0..100 {
                let j0: f64 = rng.sample(StandardNormal);
                let j1: f64 = rng.sample(StandardNormal);
                start = [0.3 * j0, s0.ln() + 0.3 * j1];
                if target.log_density(start[0], start[1]).is_finite() {
                    break;
                }
            }
            run_chain(&target, start, cfg, &mut rng)
        })
        .collect();
    let shape_chains: Vec<Vec<f64>> = chains.iter().map(|c| c.log_shape.clone()).collect();
    let scale_chains: Vec<Vec<f64>> = chains.iter().map(|c| c.log_scale.clone()).collect();
    let ds = bulk_diagnostics(&shape_chains);
    let dl = bulk_diagnostics(&scale_chains);
    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    Ok(WeibullFit {
        shape: shape_chains.iter().flatten().map(|x| x.exp()).collect(),
        scale: scale_chains.iter().flatten().map(|x| x.exp()).collect(),
        records: times.len(),
        events: d,
        diagnostics: Some(McmcDiagnostics {
            rhat_shape: ds.rhat,
            rhat_scale: dl.rhat,
            ess_shape: ds.ess,
            ess_scale: dl.ess,
            acceptance: accepted as f64 / cfg.draws() as f64,
        }),
    })
}

/// Fit diagnostics for one (threshold, strategy) cell. Treat-all has no threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCellInfo {
    pub threshold: Option<f64>,
    pub strategy: String,
    pub positives: usize,
    pub events: usize,
    pub prior_only: bool,
    pub diagnostics: Option<McmcDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct SurvivalFit {
    pub cube: NetBenefitCube,
    /// Threshold-major user cells followed by the treat-all fit.
    pub cells: Vec<SurvivalCellInfo>,
    pub warnings: Vec<Warning>,
}

fn subset_seed(master: u64, idx: &[usize]) -> u64 {
    let path: Vec<u64> = std::iter::once(idx.len() as u64)
        .chain(idx.iter().map(|&i| i as u64))
        .collect();
    mix_seed(mix_seed(master, &[WEIBULL_STREAM]), &path)
}

fn fit_warnings(fit: &WeibullFit, strategy: &str, threshold: Option<f64>, cfg: &McmcConfig) -> Vec<Warning> {
    let at = threshold.map(|t| format!(" above threshold {t}")).unwrap_or_default();
    let mut out = Vec::new();
    if fit.records == 0 {
        out.push(Warning {
            kind: WarningKind::NoPositivePredictions,
            strategy: Some(strategy.to_string()),
            threshold,
            message: format!("strategy `{strategy}`: no positive predictions{at}; Weibull parameters drawn from the prior"),
        });
    } else if fit.events == 0 {
        out.push(Warning {
            kind: WarningKind::NoEventsAboveThreshold,
            strategy: Some(strategy.to_string()),
            threshold,
            message: format!(
                "strategy `{strategy}`: no events observed among {} positive predictions{at}",
                fit.records
            ),
        });
    }
    if let Some(d) = fit.diagnostics {
        if !d.converged(cfg) {
            out.push(Warning {
                kind: WarningKind::Convergence,
                strategy: Some(strategy.to_string()),
                threshold,
                message: format!(
                    "strategy `{strategy}`{at}: MCMC diagnostics outside limits (R-hat {:.4}/{:.4}, ESS {:.0}/{:.0})",
                    d.rhat_shape, d.rhat_scale, d.ess_shape, d.ess_scale
                ),
            });
        }
    }
    out
}

/// Fits every (threshold, strategy) cell and the treat-all strategy and
/// returns the net-benefit cube.
pub fn fit_survival(
    data: &SurvivalDataset,
    grid: &ThresholdGrid,
    prior: &SurvPriorSpec,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<SurvivalFit> {
    cfg.validate()?;
    prior.validate()?;
    let n = data.len();
    let ns = data.predictions.len();
    let nt = grid.len();
    let draws = cfg.draws();

    // positive subsets per cell, then the full cohort for treat-all
    let mut subsets: Vec<Vec<usize>> = Vec::with_capacity(nt * ns + 1);
    for t in grid.thresholds() {
        for (_, scores) in &data.predictions {
            subsets.push(positive_indices(scores, *t));
        }
    }
    subsets.push((0..n).collect());

    let mut unique: HashMap<&[usize], usize> = HashMap::new();
    let mut keys: Vec<&[usize]> = Vec::new();
    let cell_fit: Vec<usize> = subsets
        .iter()
        .map(|s| {
            *unique.entry(s.as_slice()).or_insert_with(|| {
                keys.push(s.as_slice());
                keys.len() - 1
            })
        })
        .collect();
    let fits: Vec<WeibullFit> = keys
        .par_iter()
        .map(|idx| {
            let times: Vec<f64> = idx.iter().map(|&i| data.times[i]).collect();
            let events: Vec<bool> = idx.iter().map(|&i| data.events[i]).collect();
            sample_weibull_posterior(&times, &events, prior, cfg, subset_seed(seed, idx))
        })
        .collect::<Result<_>>()?;
    let survival: Vec<Vec<f64>> = fits.par_iter().map(|f| f.survival(data.tau)).collect();

    let mut strategies = data.strategies();
    strategies.push(Strategy::treat_all());
    strategies.push(Strategy::treat_none());
    let mut cube_cells = Vec::with_capacity(nt * (ns + 2));
    let mut cells = Vec::with_capacity(nt * ns + 1);
    let mut warnings = Vec::new();
    let all_fit = cell_fit[nt * ns];
    for (ti, t) in grid.thresholds().iter().enumerate() {
        for (si, (strategy, _)) in data.predictions.iter().enumerate() {
            let k = ti * ns + si;
            let fit = &fits[cell_fit[k]];
            let positives = subsets[k].len() as u64;
            let posterior = prior.positive.update(positives, n as u64 - positives);
            let mut rng = substream(seed, &[POSITIVE_STREAM, ti as u64, si as u64]);
            cube_cells.push(
                survival[cell_fit[k]]
                    .iter()
                    .map(|&s| survival_nb(s, posterior.sample(&mut rng), *t))
                    .collect(),
            );
            warnings.extend(fit_warnings(fit, &strategy.name, Some(t.value()), cfg));
            cells.push(SurvivalCellInfo {
                threshold: Some(t.value()),
                strategy: strategy.name.clone(),
                positives: fit.records,
                events: fit.events,
                prior_only: fit.prior_only(),
                diagnostics: fit.diagnostics,
            });
        }
        cube_cells.push(survival[all_fit].iter().map(|&s| survival_nb(s, 1.0, *t)).collect());
        cube_cells.push(vec![0.0; draws]);
    }
    let fit = &fits[all_fit];
    warnings.extend(fit_warnings(fit, TREAT_ALL, None, cfg));
    cells.push(SurvivalCellInfo {
        threshold: None,
        strategy: TREAT_ALL.to_string(),
        positives: fit.records,
        events: fit.events,
        prior_only: false,
        diagnostics: fit.diagnostics,
    });
    let cube = NetBenefitCube::from_cells(grid.values(), strategies, draws, cube_cells)?;
    Ok(SurvivalFit { cube, cells, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{correlation, mean, std_dev};

    fn th(t: f64) -> Threshold {
        Threshold::new(t).unwrap()
    }

    fn wp(a: f64, s: f64) -> WeibullParams {
        WeibullParams::new(a, s).unwrap()
    }

    #[test]
    fn loglik_examples() {
        assert!((censored_weibull_loglik(wp(1.0, 1.0), &[1.0], &[true]) + 1.0).abs() < 1e-12);
        assert!((censored_weibull_loglik(wp(1.0, 2.0), &[2.0], &[false]) + 1.0).abs() < 1e-12);
        let v = censored_weibull_loglik(wp(2.0, 1.0), &[1.0, 1.0], &[true, false]);
        assert!((v - (2f64.ln() - 2.0)).abs() < 1e-12);
        assert!(!censored_weibull_loglik(wp(2.0, 1.0), &[0.0], &[true]).is_finite());
    }

    #[test]
    fn target_matches_loglik_plus_prior() {
        let prior = SurvPriorSpec::default();
        let times = [1.5, 3.0, 7.0, 0.4];
        let events = [true, false, true, true];
        let target = Target::new(&times, &events, &prior);
        let base = target.log_density(0.0, 1.0) - censored_weibull_loglik(wp(1.0, 1f64.exp()), &times, &events);
        for (la, ls) in [(0.3, 2.0), (-0.5, 0.5), (1.0, 3.0)] {
            let (a, s) = (f64::exp(la), f64::exp(ls));
            let expected = censored_weibull_loglik(wp(a, s), &times, &events)
                + prior.shape.log_density(a)
                + prior.scale.log_density(s)
                + la
                + ls;
            let got = target.log_density(la, ls);
            // equal up to the constant fixed at the reference point
            let reference = prior.shape.log_density(1.0) + prior.scale.log_density(1f64.exp()) + 1.0;
            assert!((got - expected - (base - reference)).abs() < 1e-9);
        }
    }

    #[test]
    fn survival_examples() {
        assert!((survival_at_horizon(wp(1.0, 12.0), 12.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((survival_at_horizon(wp(1.3, 12.0), 1e-12) - 1.0).abs() < 1e-12);
        assert!((survival_at_horizon(wp(1.3, 1e300), 12.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survival_nb_examples() {
        assert_eq!(survival_nb(0.5, 1.0, th(0.5)), 0.0);
        assert!((survival_nb(1.0, 0.3, th(0.2)) + 0.3 * 0.25).abs() < 1e-15);
        let s = 0.367879;
        let v = survival_nb(s, 0.4, th(0.25));
        assert!((v - ((1.0 - s) * 0.4 - s * 0.4 / 3.0)).abs() < 1e-15);
        assert!((v - 0.20380).abs() < 1e-5);
    }

    #[test]
    fn from_rate_matches_ph_parameterization() {
        let p = WeibullParams::from_rate(1.22, 0.12).unwrap();
        // S(t) = exp(-lambda t^gamma)
        let s = survival_at_horizon(p, 12.0);
        assert!((s - (-0.12 * 12f64.powf(1.22)).exp()).abs() < 1e-12);
    }

    #[test]
    fn half_t_prior_puts_half_mass_on_increasing_hazards() {
        let (shape, _) = sample_weibull_prior(&SurvPriorSpec::default(), 4000, 3);
        let frac = shape.iter().filter(|&&a| a > 1.0).count() as f64 / 4000.0;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    fn weibull_sample(p: WeibullParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[]);
        (0..n)
            .map(|_| p.scale * (-open_uniform(&mut rng).ln()).powf(1.0 / p.shape))
            .collect()
    }

    #[test]
    fn recovers_parameters_from_uncensored_data() {
        let truth = WeibullParams::from_rate(1.22, 0.12).unwrap();
        let times = weibull_sample(truth, 1000, 8);
        let events = vec![true; 1000];
        let fit = sample_weibull_posterior(&times, &events, &SurvPriorSpec::default(), &McmcConfig::default(), 4).unwrap();
        let d = fit.diagnostics.unwrap();
        assert!(d.acceptance > 0.15 && d.acceptance < 0.5, "{d:?}");
        assert!(d.converged(&McmcConfig { max_rhat: 1.02, min_ess: 300.0, ..Default::default() }), "{d:?}");
        assert!((mean(&fit.shape) - truth.shape).abs() < 3.0 * std_dev(&fit.shape));
        assert!((mean(&fit.scale) - truth.scale).abs() < 3.0 * std_dev(&fit.scale));
    }

    #[test]
    fn tiny_dataset_is_far_less_concentrated() {
        let cfg = McmcConfig::default();
        let prior = SurvPriorSpec::default();
        let tiny = sample_weibull_posterior(&[1.0], &[true], &prior, &cfg, 1).unwrap();
        let truth = WeibullParams::from_rate(1.22, 0.12).unwrap();
        let times = weibull_sample(truth, 1000, 2);
        let big = sample_weibull_posterior(&times, &vec![true; 1000], &prior, &cfg, 1).unwrap();
        let sd = |f: &WeibullFit| std_dev(&f.scale.iter().map(|s| s.ln()).collect::<Vec<_>>());
        assert!(sd(&tiny) >= 5.0 * sd(&big), "{} vs {}", sd(&tiny), sd(&big));
    }

    #[test]
    fn empty_subset_uses_prior() {
        let fit = sample_weibull_posterior(&[], &[], &SurvPriorSpec::default(), &McmcConfig::default(), 5).unwrap();
        assert!(fit.prior_only());
        assert_eq!(fit.shape.len(), 4000);
    }

    fn cohort() -> SurvivalDataset {
        let mut rng = substream(77, &[]);
        let n = 120;
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut scores = Vec::new();
        for _ in 0..n {
            let risk: f64 = rng.random::<f64>();
            let rate = 0.02 + 0.2 * risk;
            let t = -open_uniform(&mut rng).ln() / rate;
            let c = 24.0 * open_uniform(&mut rng);
            times.push(t.min(c));
            events.push(t <= c);
            scores.push(risk);
        }
        SurvivalDataset::new(
            times,
            events,
            vec![(Strategy::model("m"), scores), (Strategy::model("all-positive"), vec![1.0; n])],
            12.0,
        )
        .unwrap()
    }

    fn quick() -> McmcConfig {
        McmcConfig {
            warmup: 400,
            keep: 250,
            ..Default::default()
        }
    }

    #[test]
    fn all_positive_strategy_shares_the_treat_all_fit() {
        let data = cohort();
        let n = data.len() as u64;
        let grid = ThresholdGrid::new(vec![0.0, 0.3]).unwrap();
        let prior = SurvPriorSpec::default();
        let fit = fit_survival(&data, &grid, &prior, &quick(), 9).unwrap();
        let all = fit.cube.strategy_index(TREAT_ALL).unwrap();
        assert_eq!(fit.cells[1].diagnostics, fit.cells[4].diagnostics);
        // Same Weibull draws; the only difference is p ~ Beta(n + 1, 1) instead of p = 1.
        let post = prior.positive.update(n, 0);
        for ti in 0..2 {
            let mut rng = substream(9, &[POSITIVE_STREAM, ti as u64, 1]);
            for k in 0..1000 {
                let p = post.sample(&mut rng);
                assert!((fit.cube.get(k, ti, 1) - p * fit.cube.get(k, ti, all)).abs() < 1e-15);
            }
        }
        // at t = 0 treat-all NB is 1 - S
        assert!(fit.cube.slice(0, all).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn p_and_survival_draws_are_independent() {
        let data = cohort();
        let grid = ThresholdGrid::new(vec![0.4]).unwrap();
        let cfg = McmcConfig::default();
        let prior = SurvPriorSpec::default();
        let idx = data.positive_indices("m", th(0.4)).unwrap();
        let sub = data.select(&idx);
        let fit = sample_weibull_posterior(sub.times(), sub.events(), &prior, &cfg, subset_seed(3, &idx)).unwrap();
        let s = fit.survival(12.0);
        let cube = fit_survival(&data, &grid, &prior, &cfg, 3).unwrap().cube;
        let npos = idx.len() as u64;
        let post = prior.positive.update(npos, data.len() as u64 - npos);
        let mut rng = substream(3, &[POSITIVE_STREAM, 0, 0]);
        let p: Vec<f64> = (0..4000).map(|_| post.sample(&mut rng)).collect();
        for k in 0..4000 {
            assert_eq!(cube.get(k, 0, 0), survival_nb(s[k], p[k], th(0.4)));
        }
        assert!(correlation(&p, &s).abs() < 4.0 / (4000f64).sqrt());
    }

    #[test]
    fn all_censored_cohort_gives_non_positive_treat_all() {
        let n = 30;
        let data = SurvivalDataset::new(
            vec![24.0; n],
            vec![false; n],
            vec![(Strategy::model("m"), vec![0.5; n])],
            12.0,
        )
        .unwrap();
        let grid = ThresholdGrid::new(vec![0.0, 0.1, 0.6]).unwrap();
        let fit = fit_survival(&data, &grid, &SurvPriorSpec::default(), &quick(), 1).unwrap();
        let all = fit.cube.strategy_index(TREAT_ALL).unwrap();
        for ti in 1..3 {
            assert!(mean(fit.cube.slice(ti, all)) < 0.0);
        }
        assert!(fit
            .warnings
            .iter()
            .any(|w| w.kind == WarningKind::NoEventsAboveThreshold && w.strategy.as_deref() == Some(TREAT_ALL)));
        assert!(fit
            .warnings
            .iter()
            .any(|w| w.kind == WarningKind::NoPositivePredictions && w.threshold == Some(0.6)));
        for ti in 0..3 {
            for &v in fit.cube.slice(ti, 0) {
                let w = grid.thresholds()[ti].weight();
                assert!(v >= -w - 1e-12 && v <= 1.0);
            }
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let data = cohort();
        let grid = ThresholdGrid::new(vec![0.2]).unwrap();
        let a = fit_survival(&data, &grid, &SurvPriorSpec::default(), &quick(), 5).unwrap();
        let b = fit_survival(&data, &grid, &SurvPriorSpec::default(), &quick(), 5).unwrap();
        assert_eq!(a.cube, b.cube);
    }

    #[test]
    fn dataset_validation() {
        let s = || vec![(Strategy::model("m"), vec![0.5])];
        assert!(SurvivalDataset::new(vec![0.0], vec![true], s(), 12.0).is_err());
        assert!(SurvivalDataset::new(vec![1.0], vec![true], s(), 0.0).is_err());
        assert!(SurvivalDataset::new(vec![1.0], vec![true, false], s(), 12.0).is_err());
        assert!(SurvivalDataset::new(vec![], vec![], vec![], 12.0).is_err());
    }

    #[test]
    fn prior_config_parses() {
        let p: SurvPriorSpec = toml::from_str(
            "shape = { family = \"gamma\", shape = 2.0, rate = 1.0 }\npositive = { alpha = 2.0, beta = 3.0 }\n",
        )
        .unwrap();
        assert_eq!(p.shape, PositivePrior::Gamma { shape: 2.0, rate: 1.0 });
        assert_eq!(p.scale, default_scale_prior());
    }
}
