//! Data-generating processes and experiment runners for calibration studies.
//!
//! Binary populations follow a logistic model with two Exp(1) covariates;
//! survival populations follow a proportional-hazards Weibull with two
//! standard-normal covariates and Uniform(0, 24) censoring. Each run draws
//! a sample (with replacement) sized for a target number of events, runs
//! every method, and compares intervals with the population truth.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binary::{self, count_scores, BinaryDataset, BinaryPriorTable};
use crate::comparators::{bootstrap_nb, km_dca, BootstrapConfig};
use crate::error::{DcaError, Result};
use crate::interrogation::evpi;
use crate::model::{Strategy, Threshold, ThresholdGrid};
use crate::prior::ThresholdVaryingPrior;
use crate::sampling::{substream, DcaRng};
use crate::stats::{mean, median, quantile};
use crate::survival::{fit_survival, McmcConfig, SurvPriorSpec, SurvivalDataset};

const POPULATION_STREAM: u64 = 10;
const RUN_STREAM: u64 = 11;
const CHUNK: usize = 1 << 16;

pub const MODEL: &str = "model";

/// Default thresholds for calibration studies.
pub const STUDY_THRESHOLDS: [f64; 6] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75];
pub const EVPI_THRESHOLDS: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySetting {
    /// Maximum achievable AUC (label).
    pub auc: f64,
    /// Target prevalence (label).
    pub prevalence: f64,
    pub beta_true: [f64; 3],
    pub beta_hat: [f64; 3],
}

impl BinarySetting {
    fn new(auc: f64, prevalence: f64, b0: f64, or: f64, b0_hat: f64, inflation: f64) -> Self {
        let b = or.ln();
        BinarySetting {
            auc,
            prevalence,
            beta_true: [b0, -b, b],
            beta_hat: [b0_hat, -b * inflation, b * inflation],
        }
    }

    pub fn label(&self) -> String {
        format!("AUC {} / prevalence {}%", self.auc, self.prevalence * 100.0)
    }
}

/// The six binary settings: AUC in {0.65, 0.85} crossed with prevalence in {1%, 5%, 30%}.
pub fn binary_settings() -> Vec<BinarySetting> {
    vec![
        BinarySetting::new(0.65, 0.01, -4.750, 1.50, -5.000, 1.25),
        BinarySetting::new(0.65, 0.05, -3.100, 1.50, -3.900, 3.00),
        BinarySetting::new(0.65, 0.30, -0.900, 1.55, -1.200, 3.00),
        BinarySetting::new(0.85, 0.01, -5.600, 2.57, -6.900, 1.50),
        BinarySetting::new(0.85, 0.05, -3.755, 2.95, -7.300, 3.00),
        BinarySetting::new(0.85, 0.30, -1.300, 4.50, -2.250, 3.00),
    ]
}

pub fn binary_setting(auc: f64, prevalence: f64) -> Result<BinarySetting> {
    binary_settings()
        .into_iter()
        .find(|s| s.auc == auc && s.prevalence == prevalence)
        .ok_or_else(|| DcaError::Config(format!("no binary setting with AUC {auc} and prevalence {prevalence}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSetting {
    /// Maximum achievable C-statistic (label).
    pub c_statistic: f64,
    /// One-year survival (label).
    pub survival_1y: f64,
    /// Weibull shape.
    pub gamma: f64,
    /// Weibull rate, `scale^(-shape)`.
    pub lambda: f64,
    pub beta_true: [f64; 2],
    pub beta_hat: [f64; 2],
    pub censor_max: f64,
    pub horizon: f64,
}

impl SurvivalSetting {
    fn new(c: f64, s1: f64, gamma: f64, lambda: f64, hr: [f64; 2], inflation: f64) -> Self {
        let beta = [hr[0].ln(), hr[1].ln()];
        SurvivalSetting {
            c_statistic: c,
            survival_1y: s1,
            gamma,
            lambda,
            beta_true: beta,
            beta_hat: [beta[0] * inflation, beta[1] * inflation],
            censor_max: 24.0,
            horizon: 12.0,
        }
    }

    pub fn label(&self) -> String {
        format!("C {} / S(1) {}%", self.c_statistic, self.survival_1y * 100.0)
    }
}

/// The nine survival settings (time in months).
pub fn survival_settings() -> Vec<SurvivalSetting> {
    let low = [1.30, 0.70];
    let mid = [1.95, 0.05];
    let high = [1.95, 0.001];
    vec![
        SurvivalSetting::new(0.60, 0.10, 1.22, 0.12, low, 1.01),
        SurvivalSetting::new(0.60, 0.20, 1.07, 0.12, low, 1.01),
        SurvivalSetting::new(0.60, 0.50, 0.70, 0.12, low, 1.01),
        SurvivalSetting::new(0.90, 0.10, 4.60, 0.0004, mid, 1.25),
        SurvivalSetting::new(0.90, 0.20, 4.00, 0.0004, mid, 1.25),
        SurvivalSetting::new(0.90, 0.50, 2.90, 0.0004, mid, 1.25),
        SurvivalSetting::new(0.95, 0.10, 6.50, 0.0004, high, 1.25),
        SurvivalSetting::new(0.95, 0.20, 5.40, 0.0004, high, 1.25),
        SurvivalSetting::new(0.95, 0.50, 3.10, 0.0004, high, 1.25),
    ]
}

pub fn survival_setting(c: f64, survival_1y: f64) -> Result<SurvivalSetting> {
    survival_settings()
        .into_iter()
        .find(|s| s.c_statistic == c && s.survival_1y == survival_1y)
        .ok_or_else(|| DcaError::Config(format!("no survival setting with C {c} and S(1) {survival_1y}")))
}

fn inv_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform on the open interval (0, 1).
fn open01(rng: &mut DcaRng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Runs `f` over fixed-size chunks of `n` rows, each with its own substream.
fn generate_chunks<T: Send>(n: usize, seed: u64, f: impl Fn(&mut DcaRng) -> T + Sync) -> Vec<T> {
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = substream(seed, &[POPULATION_STREAM, c as u64]);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// A simulated binary population with its true risks.
#[derive(Debug, Clone)]
pub struct BinaryPopulation {
    pub data: BinaryDataset,
    pub true_risk: Vec<f64>,
}

pub fn binary_population(setting: &BinarySetting, n: usize, seed: u64) -> Result<BinaryPopulation> {
    if n == 0 {
        return Err(DcaError::param("n", "population must have at least one record"));
    }
    let (b, bh) = (setting.beta_true, setting.beta_hat);
    let rows = generate_chunks(n, seed, |rng| {
        let x1 = -open01(rng).ln();
        let x2 = -open01(rng).ln();
        let p = inv_logit(b[0] + b[1] * x1 + b[2] * x2);
        let score = inv_logit(bh[0] + bh[1] * x1 + bh[2] * x2);
        let y = rng.random::<f64>() < p;
        (y, score, p)
    });
    let outcomes = rows.iter().map(|r| r.0).collect();
    let scores = rows.iter().map(|r| r.1).collect();
    let true_risk = rows.iter().map(|r| r.2).collect();
    Ok(BinaryPopulation {
        data: BinaryDataset::new(outcomes, vec![(Strategy::model(MODEL), scores)])?,
        true_risk,
    })
}

/// Outcomes `Bernoulli(logit^-1(z' beta))` and model scores `logit^-1(z' beta_hat)`.
pub fn gen_binary_population(setting: &BinarySetting, n: usize, seed: u64) -> Result<BinaryDataset> {
    Ok(binary_population(setting, n, seed)?.data)
}

/// A simulated survival population with latent (uncensored) event times.
#[derive(Debug, Clone)]
pub struct SurvivalPopulation {
    pub data: SurvivalDataset,
    pub latent_times: Vec<f64>,
}

pub fn survival_population(setting: &SurvivalSetting, n: usize, seed: u64) -> Result<SurvivalPopulation> {
    if n == 0 {
        return Err(DcaError::param("n", "population must have at least one record"));
    }
    let s = setting.clone();
    let base = s.lambda * s.horizon.powf(s.gamma);
    let rows = generate_chunks(n, seed, |rng| {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let lp = s.beta_true[0] * x1 + s.beta_true[1] * x2;
        let lp_hat = s.beta_hat[0] * x1 + s.beta_hat[1] * x2;
        let t = (-open01(rng).ln() / (s.lambda * lp.exp())).powf(1.0 / s.gamma);
        let c = s.censor_max * open01(rng);
        let score = 1.0 - (-base * lp_hat.exp()).exp();
        (t, c, score)
    });
    let latent_times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let times = rows.iter().map(|r| r.0.min(r.1)).collect();
    let events = rows.iter().map(|r| r.0 <= r.1).collect();
    let scores = rows.iter().map(|r| r.2).collect();
    Ok(SurvivalPopulation {
        data: SurvivalDataset::new(times, events, vec![(Strategy::model(MODEL), scores)], setting.horizon)?,
        latent_times,
    })
}

/// Observed time `min(T, C)` with `T = (-log U / (lambda e^{x beta}))^(1/gamma)`.
pub fn gen_survival_population(setting: &SurvivalSetting, n: usize, seed: u64) -> Result<SurvivalDataset> {
    Ok(survival_population(setting, n, seed)?.data)
}

/// Population net benefit of the model by counting at each threshold.
pub fn binary_truth(pop: &BinaryDataset, thresholds: &[f64]) -> Result<Vec<f64>> {
    let scores = pop.scores(MODEL)?;
    thresholds
        .iter()
        .map(|&t| {
            let t = Threshold::new(t)?;
            Ok(count_scores(pop.outcomes(), scores, t).net_benefit(t))
        })
        .collect()
}

/// Population net benefit at the horizon from latent event times:
/// `P(T <= tau, positive) - w_t P(T > tau, positive)`.
pub fn survival_truth(pop: &SurvivalPopulation, thresholds: &[f64]) -> Result<Vec<f64>> {
    let scores = pop.data.scores(MODEL)?;
    let tau = pop.data.tau();
    let n = scores.len() as f64;
    thresholds
        .iter()
        .map(|&t| {
            let t = Threshold::new(t)?;
            let (mut events, mut survivors) = (0u64, 0u64);
            for (&s, &time) in scores.iter().zip(&pop.latent_times) {
                if s > t.value() {
                    if time <= tau {
                        events += 1;
                    } else {
                        survivors += 1;
                    }
                }
            }
            Ok((events as f64 - t.weight() * survivors as f64) / n)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bayesian,
    Bootstrap,
    KaplanMeier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub runs: usize,
    pub events_target: f64,
    pub thresholds: Vec<f64>,
    pub population_size: usize,
    pub draws: usize,
    pub bootstrap_replicates: usize,
    pub mcmc: McmcConfig,
    pub level: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            runs: 200,
            events_target: 100.0,
            thresholds: STUDY_THRESHOLDS.to_vec(),
            population_size: 2_000_000,
            draws: 4000,
            bootstrap_replicates: 500,
            mcmc: McmcConfig::default(),
            level: 0.95,
            seed: 1,
        }
    }
}

impl StudyConfig {
    fn validate(&self) -> Result<ThresholdGrid> {
        if self.runs < 1 {
            return Err(DcaError::param("runs", "need at least one run"));
        }
        if !(self.events_target > 0.0) {
            return Err(DcaError::param("events_target", "must be positive"));
        }
        if self.population_size < 1 || self.draws < 1 || self.bootstrap_replicates < 1 {
            return Err(DcaError::param("sizes", "population, draws and replicates must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(DcaError::param("level", "must lie in (0, 1)"));
        }
        self.mcmc.validate()?;
        ThresholdGrid::new(self.thresholds.clone())
    }
}

/// One method's estimate at one threshold in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub threshold: f64,
    pub method: Method,
    pub estimate: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub truth: f64,
    /// Wall time of the whole method call for this run.
    pub seconds: f64,
}

impl RunRecord {
    pub fn covered(&self) -> Option<bool> {
        Some(self.lo? <= self.truth && self.truth <= self.hi?)
    }

    pub fn width(&self) -> Option<f64> {
        Some(self.hi? - self.lo?)
    }

    pub fn error(&self) -> Option<f64> {
        Some(self.estimate? - self.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub threshold: f64,
    pub method: Method,
    pub truth: f64,
    /// Runs with a defined estimate.
    pub runs: usize,
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub zero_width_fraction: Option<f64>,
    pub mean_error: Option<f64>,
    pub error_q05: Option<f64>,
    pub error_median: Option<f64>,
    pub error_q95: Option<f64>,
    /// Mean absolute percentage error; absent when the truth is zero.
    pub mape: Option<f64>,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub setting: String,
    pub sample_size: usize,
    pub population_prevalence: f64,
    pub thresholds: Vec<f64>,
    pub truth: Vec<f64>,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl ExperimentReport {
    pub fn summary(&self, threshold: f64, method: Method) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && (s.threshold - threshold).abs() < 1e-12)
    }

    pub fn records_for(&self, threshold: f64, method: Method) -> impl Iterator<Item = &RunRecord> {
        self.records
            .iter()
            .filter(move |r| r.method == method && (r.threshold - threshold).abs() < 1e-12)
    }
}

fn summarize_records(records: &[RunRecord], thresholds: &[f64], truth: &[f64], methods: &[Method]) -> Vec<MethodSummary> {
    let mut out = Vec::new();
    for &method in methods {
        for (&t, &tr) in thresholds.iter().zip(truth) {
            let rs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.method == method && r.threshold == t)
                .collect();
            let errors: Vec<f64> = rs.iter().filter_map(|r| r.error()).collect();
            let widths: Vec<f64> = rs.iter().filter_map(|r| r.width()).collect();
            let covered: Vec<bool> = rs.iter().filter_map(|r| r.covered()).collect();
            let opt = |v: &[f64], f: &dyn Fn(&[f64]) -> f64| (!v.is_empty()).then(|| f(v));
            out.push(MethodSummary {
                threshold: t,
                method,
                truth: tr,
                runs: errors.len(),
                coverage: (!covered.is_empty())
                    .then(|| covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64),
                mean_width: opt(&widths, &|v| mean(v)),
                zero_width_fraction: (!widths.is_empty())
                    .then(|| widths.iter().filter(|&&w| w == 0.0).count() as f64 / widths.len() as f64),
                mean_error: opt(&errors, &|v| mean(v)),
                error_q05: opt(&errors, &|v| quantile(v, 0.05)),
                error_median: opt(&errors, &|v| median(v)),
                error_q95: opt(&errors, &|v| quantile(v, 0.95)),
                mape: if tr.abs() > 1e-12 && !errors.is_empty() {
                    Some(100.0 * mean(&errors.iter().map(|e| (e / tr).abs()).collect::<Vec<_>>()))
                } else {
                    None
                },
                mean_seconds: mean(&rs.iter().map(|r| r.seconds).collect::<Vec<_>>()),
            });
        }
    }
    out
}

fn sample_indices(n_pop: usize, size: usize, rng: &mut DcaRng) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n_pop)).collect()
}

fn run_seed(seed: u64, run: usize) -> u64 {
    crate::sampling::mix_seed(seed, &[RUN_STREAM, run as u64])
}

/// Binary calibration study: Bayesian (uniform priors) against the
/// percentile bootstrap. Sample size is `events_target / prevalence`.
pub fn run_binary_study(setting: &BinarySetting, cfg: &StudyConfig) -> Result<ExperimentReport> {
    let grid = cfg.validate()?;
    let pop = gen_binary_population(setting, cfg.population_size, cfg.seed)?;
    let truth = binary_truth(&pop, &cfg.thresholds)?;
    let size = (cfg.events_target / setting.prevalence).round() as usize;
    let a = (1.0 - cfg.level) / 2.0;
    let per_run: Vec<Vec<RunRecord>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<RunRecord>> {
            let seed = run_seed(cfg.seed, run);
            let mut rng = substream(seed, &[0]);
            let sample = pop.select(&sample_indices(pop.len(), size, &mut rng));
            let mut records = Vec::new();

            let start = Instant::now();
            let post = binary::fit(&sample, &grid, &BinaryPriorTable::uniform(grid.len(), 1))?;
            let cube = binary::sample_joint(&post, cfg.draws, seed ^ 1)?;
            let bayes: Vec<(f64, f64, f64)> = (0..grid.len())
                .map(|ti| {
                    let d = cube.slice(ti, 0);
                    (mean(d), quantile(d, a), quantile(d, 1.0 - a))
                })
                .collect();
            let secs = start.elapsed().as_secs_f64();
            for (ti, (m, lo, hi)) in bayes.into_iter().enumerate() {
                records.push(RunRecord {
                    run,
                    threshold: cfg.thresholds[ti],
                    method: Method::Bayesian,
                    estimate: Some(m),
                    lo: Some(lo),
                    hi: Some(hi),
                    truth: truth[ti],
                    seconds: secs,
                });
            }

            let start = Instant::now();
            let boot = bootstrap_nb(
                &sample,
                MODEL,
                &grid,
                &BootstrapConfig {
                    replicates: cfg.bootstrap_replicates,
                    seed: seed ^ 2,
                    level: cfg.level,
                },
            )?;
            let secs = start.elapsed().as_secs_f64();
            for (ti, row) in boot.into_iter().enumerate() {
                records.push(RunRecord {
                    run,
                    threshold: row.threshold,
                    method: Method::Bootstrap,
                    estimate: Some(row.point),
                    lo: Some(row.lo),
                    hi: Some(row.hi),
                    truth: truth[ti],
                    seconds: secs,
                });
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = per_run.into_iter().flatten().collect();
    let methods = [Method::Bayesian, Method::Bootstrap];
    Ok(ExperimentReport {
        setting: setting.label(),
        sample_size: size,
        population_prevalence: pop.diseased() as f64 / pop.len() as f64,
        summaries: summarize_records(&records, &cfg.thresholds, &truth, &methods),
        thresholds: cfg.thresholds.clone(),
        truth,
        records,
    })
}

/// Survival calibration study: Bayesian Weibull model against the
/// Kaplan-Meier point estimate. Sample size is `events_target / incidence`
/// with incidence the observed event fraction in the population.
pub fn run_survival_study(setting: &SurvivalSetting, cfg: &StudyConfig) -> Result<ExperimentReport> {
    let grid = cfg.validate()?;
    let pop = survival_population(setting, cfg.population_size, cfg.seed)?;
    let truth = survival_truth(&pop, &cfg.thresholds)?;
    let incidence = pop.data.events().iter().filter(|&&e| e).count() as f64 / pop.data.len() as f64;
    let size = (cfg.events_target / incidence).round() as usize;
    let a = (1.0 - cfg.level) / 2.0;
    let prior = SurvPriorSpec::default();
    let per_run: Vec<Vec<RunRecord>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<RunRecord>> {
            let seed = run_seed(cfg.seed, run);
            let mut rng = substream(seed, &[0]);
            let sample = pop.data.select(&sample_indices(pop.data.len(), size, &mut rng));
            let mut records = Vec::new();

            let start = Instant::now();
            let fit = fit_survival(&sample, &grid, &prior, &cfg.mcmc, seed ^ 1)?;
            let secs = start.elapsed().as_secs_f64();
            for ti in 0..grid.len() {
                let d = fit.cube.slice(ti, 0);
                records.push(RunRecord {
                    run,
                    threshold: cfg.thresholds[ti],
                    method: Method::Bayesian,
                    estimate: Some(mean(d)),
                    lo: Some(quantile(d, a)),
                    hi: Some(quantile(d, 1.0 - a)),
                    truth: truth[ti],
                    seconds: secs,
                });
            }

            let start = Instant::now();
            let (rows, _) = km_dca(&sample, &grid)?;
            let secs = start.elapsed().as_secs_f64();
            for (ti, row) in rows.iter().filter(|r| r.strategy == MODEL).enumerate() {
                records.push(RunRecord {
                    run,
                    threshold: row.threshold,
                    method: Method::KaplanMeier,
                    estimate: row.net_benefit,
                    lo: None,
                    hi: None,
                    truth: truth[ti],
                    seconds: secs,
                });
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = per_run.into_iter().flatten().collect();
    let methods = [Method::Bayesian, Method::KaplanMeier];
    Ok(ExperimentReport {
        setting: setting.label(),
        sample_size: size,
        population_prevalence: incidence,
        summaries: summarize_records(&records, &cfg.thresholds, &truth, &methods),
        thresholds: cfg.thresholds.clone(),
        truth,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorRegime {
    Uniform,
    /// Linear threshold-varying priors with strength 10: sensitivity mean
    /// 0.95 at t = 0.01 falling to 0.5 at t = 0.1.
    Informative,
}

/// Threshold-varying prior used by [`PriorRegime::Informative`]. Linear
/// interpolation (no ignorance region) through mean 0.5 at t = 0.1.
pub fn informative_evpi_prior() -> ThresholdVaryingPrior {
    ThresholdVaryingPrior {
        t_min: 0.01,
        t_max: 0.19,
        ignorance_region: (0.1, 0.1),
        se_mean_at_tmin: 0.95,
        se_mean_at_tmax: 0.05,
        strength_at_extremes: 10.0,
        region_mean: 0.5,
        strength_in_region: 10.0,
    }
}

fn regime_priors(regime: PriorRegime, grid: &ThresholdGrid) -> Result<BinaryPriorTable> {
    let mut table = BinaryPriorTable::uniform(grid.len(), 1);
    if regime == PriorRegime::Informative {
        let tv = informative_evpi_prior();
        table.cells = grid.thresholds().iter().map(|t| tv.at(t.value())).collect::<Result<_>>()?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvpiConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub thresholds: Vec<f64>,
    pub draws: usize,
    pub population_size: usize,
    pub seed: u64,
}

impl Default for EvpiConfig {
    fn default() -> Self {
        EvpiConfig {
            sizes: vec![250, 500, 1000, 2000, 4000],
            repeats: 20,
            thresholds: EVPI_THRESHOLDS.to_vec(),
            draws: 4000,
            population_size: 2_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvpiRow {
    pub regime: PriorRegime,
    pub size: usize,
    pub threshold: f64,
    pub median: f64,
    pub mean: f64,
    pub values: Vec<f64>,
}

/// EVPI of the model against treat-all and treat-none for validation
/// samples of increasing size, under uniform and informative priors. The
/// population is the AUC 0.85 / prevalence 5% binary setting.
pub fn run_evpi_monotonicity(cfg: &EvpiConfig) -> Result<Vec<EvpiRow>> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DcaError::param("sizes", "must be non-empty and strictly increasing"));
    }
    if cfg.repeats < 1 || cfg.draws < 1 {
        return Err(DcaError::param("repeats", "repeats and draws must be positive"));
    }
    let grid = ThresholdGrid::new(cfg.thresholds.clone())?;
    let pop = gen_binary_population(&binary_setting(0.85, 0.05)?, cfg.population_size, cfg.seed)?;
    let regimes = [PriorRegime::Uniform, PriorRegime::Informative];
    let tables: Vec<BinaryPriorTable> = regimes.iter().map(|&r| regime_priors(r, &grid)).collect::<Result<_>>()?;

    // values[size][repeat][regime][threshold]
    let jobs: Vec<(usize, usize)> = (0..cfg.sizes.len())
        .flat_map(|s| (0..cfg.repeats).map(move |r| (s, r)))
        .collect();
    let results: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(si, rep)| -> Result<Vec<Vec<f64>>> {
            let seed = crate::sampling::mix_seed(cfg.seed, &[RUN_STREAM, si as u64, rep as u64]);
            let mut rng = substream(seed, &[0]);
            let sample = pop.select(&sample_indices(pop.len(), cfg.sizes[si], &mut rng));
            tables
                .iter()
                .map(|table| {
                    let post = binary::fit(&sample, &grid, table)?;
                    let cube = binary::sample_joint(&post, cfg.draws, seed ^ 1)?;
                    (0..grid.len()).map(|ti| evpi(&cube, ti)).collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (ri, &regime) in regimes.iter().enumerate() {
        for (si, &size) in cfg.sizes.iter().enumerate() {
            for (ti, &t) in cfg.thresholds.iter().enumerate() {
                let values: Vec<f64> = (0..cfg.repeats).map(|rep| results[si * cfg.repeats + rep][ri][ti]).collect();
                rows.push(EvpiRow {
                    regime,
                    size,
                    threshold: t,
                    median: median(&values),
                    mean: mean(&values),
                    values,
                });
            }
        }
    }
    Ok(rows)
}
