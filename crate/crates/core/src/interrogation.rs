//! Posterior functionals over a net-benefit cube.
//!
//! All probabilities use strict inequalities, so ties (including the exact
//! zeros of treat-none) never count as wins. Functions take threshold and
//! strategy indices into the cube; [`summarize`] resolves names.

use serde::{Deserialize, Serialize};

use crate::error::{DcaError, Result};
use crate::model::{NetBenefitCube, Strategy, StrategyKind};
use crate::stats::{quantile_sorted, sorted_copy};

fn treat_all_index(cube: &NetBenefitCube) -> Option<usize> {
    cube.strategies().iter().position(|s| s.kind == StrategyKind::TreatAll)
}

fn check_indices(cube: &NetBenefitCube, s: usize, t: usize) -> Result<()> {
    if t >= cube.thresholds().len() {
        return Err(DcaError::param("threshold", format!("index {t} out of range")));
    }
    if s >= cube.strategies().len() {
        return Err(DcaError::param("strategy", format!("index {s} out of range")));
    }
    Ok(())
}

/// `P(NB_s > max(NB_treat_all, 0))`.
pub fn p_useful(cube: &NetBenefitCube, s: usize, t: usize) -> Result<f64> {
    check_indices(cube, s, t)?;
    if cube.strategies()[s].kind.is_default() {
        return Err(DcaError::param(
            "strategy",
            format!("usefulness is not defined for `{}`", cube.strategies()[s].name),
        ));
    }
    let nb = cube.slice(t, s);
    let wins = match treat_all_index(cube) {
        Some(a) => {
            let all = cube.slice(t, a);
            nb.iter().zip(all).filter(|(&x, &y)| x > y.max(0.0)).count()
        }
        None => nb.iter().filter(|&&x| x > 0.0).count(),
    };
    Ok(wins as f64 / cube.draw_count() as f64)
}

/// Draw-wise maximum over every strategy except `s`.
fn best_competitor(cube: &NetBenefitCube, s: usize, t: usize) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; cube.draw_count()];
    for o in (0..cube.strategies().len()).filter(|&o| o != s) {
        for (b, &x) in best.iter_mut().zip(cube.slice(t, o)) {
            if x > *b {
                *b = x;
            }
        }
    }
    best
}

/// `P(NB_s > NB_o for every other strategy o)`.
pub fn p_best(cube: &NetBenefitCube, s: usize, t: usize) -> Result<f64> {
    check_indices(cube, s, t)?;
    if cube.strategies().len() < 2 {
        return Err(DcaError::param("strategies", "need at least two strategies"));
    }
    let best = best_competitor(cube, s, t);
    let wins = cube.slice(t, s).iter().zip(&best).filter(|(x, b)| x > b).count();
    Ok(wins as f64 / cube.draw_count() as f64)
}

/// `P(NB_s1 - NB_s2 > margin)`.
pub fn p_pairwise(cube: &NetBenefitCube, s1: usize, s2: usize, t: usize, margin: f64) -> Result<f64> {
    check_indices(cube, s1, t)?;
    check_indices(cube, s2, t)?;
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(DcaError::param("margin", format!("must be non-negative, got {margin}")));
    }
    let wins = cube
        .slice(t, s1)
        .iter()
        .zip(cube.slice(t, s2))
        .filter(|(a, b)| *a - *b > margin)
        .count();
    Ok(wins as f64 / cube.draw_count() as f64)
}

/// Expected value of perfect information at threshold index `t`:
/// `mean_d max_s NB - max_s mean_d NB`.
pub fn evpi(cube: &NetBenefitCube, t: usize) -> Result<f64> {
    check_indices(cube, 0, t)?;
    let nd = cube.draw_count();
    let ns = cube.strategies().len();
    let mut e_max = 0.0;
    for d in 0..nd {
        let mut m = f64::NEG_INFINITY;
        for s in 0..ns {
            m = m.max(cube.get(d, t, s));
        }
        e_max += m;
    }
    e_max /= nd as f64;
    let mut max_e = f64::NEG_INFINITY;
    for s in 0..ns {
        let mut sum = 0.0;
        for &x in cube.slice(t, s) {
            sum += x;
        }
        max_e = max_e.max(sum / nd as f64);
    }
    Ok(e_max - max_e)
}

/// Posterior mean and equal-tailed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn of(xs: &[f64], level: f64) -> Self {
        let s = sorted_copy(xs);
        let a = (1.0 - level) / 2.0;
        let mut sum = 0.0;
        for &x in xs {
            sum += x;
        }
        Interval {
            mean: sum / xs.len() as f64,
            lo: quantile_sorted(&s, a),
            hi: quantile_sorted(&s, 1.0 - a),
        }
    }
}

fn differences(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRequest {
    pub s1: String,
    pub s2: String,
    #[serde(default)]
    pub margin: f64,
}

impl PairwiseRequest {
    /// Parses `s1,s2,c`; the margin defaults to 0 when omitted.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let bad = || DcaError::Config(format!("expected `s1,s2,c` for a pairwise request, got `{spec}`"));
        let (s1, s2, margin) = match parts.as_slice() {
            [a, b] => (a, b, 0.0),
            [a, b, c] => (a, b, c.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        if s1.is_empty() || s2.is_empty() {
            return Err(bad());
        }
        Ok(PairwiseRequest {
            s1: s1.to_string(),
            s2: s2.to_string(),
            margin,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub threshold: f64,
    pub s1: String,
    pub s2: String,
    pub margin: f64,
    pub probability: f64,
    /// Summary of `NB_s1 - NB_s2`.
    pub delta: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub threshold: f64,
    pub strategy: String,
    pub kind: StrategyKind,
    pub nb_mean: f64,
    pub nb_median: f64,
    pub nb_lo: f64,
    pub nb_hi: f64,
    /// Absent for treat-all and treat-none.
    pub p_useful: Option<f64>,
    pub p_best: f64,
    /// `NB_s` minus the draw-wise maximum over all other strategies.
    pub delta_best_competitor: Interval,
    /// `NB_s - NB_treat_all`; absent for treat-all itself.
    pub delta_treat_all: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcaReport {
    pub level: f64,
    pub draw_count: usize,
    pub thresholds: Vec<f64>,
    pub strategies: Vec<Strategy>,
    /// Threshold-major (threshold, strategy) summaries.
    pub cells: Vec<CellSummary>,
    /// One value per threshold.
    pub evpi: Vec<f64>,
    pub pairwise: Vec<PairwiseResult>,
}

impl DcaReport {
    pub fn cell(&self, threshold: f64, strategy: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| (c.threshold - threshold).abs() < 1e-12 && c.strategy == strategy)
    }

    pub fn evpi_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-12)
            .map(|i| self.evpi[i])
    }

    pub fn max_evpi(&self) -> f64 {
        self.evpi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Computes every summary in [`DcaReport`] at credible level `level`.
pub fn summarize(cube: &NetBenefitCube, level: f64, pairwise: &[PairwiseRequest]) -> Result<DcaReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(DcaError::param("level", format!("must lie in (0, 1), got {level}")));
    }
    let ns = cube.strategies().len();
    if ns < 2 {
        return Err(DcaError::param("strategies", "need at least two strategies"));
    }
    let resolved: Vec<(usize, usize, f64)> = pairwise
        .iter()
        .map(|r| {
            if !(r.margin >= 0.0 && r.margin.is_finite()) {
                return Err(DcaError::param("margin", format!("must be non-negative, got {}", r.margin)));
            }
            Ok((cube.strategy_index(&r.s1)?, cube.strategy_index(&r.s2)?, r.margin))
        })
        .collect::<Result<_>>()?;
    let all = treat_all_index(cube);

    let a = (1.0 - level) / 2.0;
    let mut cells = Vec::with_capacity(cube.thresholds().len() * ns);
    let mut evpis = Vec::with_capacity(cube.thresholds().len());
    let mut pair_results = Vec::new();
    for (ti, &t) in cube.thresholds().iter().enumerate() {
        for (si, strategy) in cube.strategies().iter().enumerate() {
            let nb = cube.slice(ti, si);
            let sorted = sorted_copy(nb);
            let competitor = best_competitor(cube, si, ti);
            let wins = nb.iter().zip(&competitor).filter(|(x, b)| x > b).count();
            cells.push(CellSummary {
                threshold: t,
                strategy: strategy.name.clone(),
                kind: strategy.kind,
                nb_mean: Interval::of(nb, level).mean,
                nb_median: quantile_sorted(&sorted, 0.5),
                nb_lo: quantile_sorted(&sorted, a),
                nb_hi: quantile_sorted(&sorted, 1.0 - a),
                p_useful: if strategy.kind.is_default() {
                    None
                } else {
                    Some(p_useful(cube, si, ti)?)
                },
                p_best: wins as f64 / cube.draw_count() as f64,
                delta_best_competitor: Interval::of(&differences(nb, &competitor), level),
                delta_treat_all: all
                    .filter(|&a| a != si)
                    .map(|a| Interval::of(&differences(nb, cube.slice(ti, a)), level)),
            });
        }
        evpis.push(evpi(cube, ti)?);
        for (r, &(s1, s2, margin)) in pairwise.iter().zip(&resolved) {
            pair_results.push(PairwiseResult {
                threshold: t,
                s1: r.s1.clone(),
                s2: r.s2.clone(),
                margin,
                probability: p_pairwise(cube, s1, s2, ti, margin)?,
                delta: Interval::of(&differences(cube.slice(ti, s1), cube.slice(ti, s2)), level),
            });
        }
    }
    Ok(DcaReport {
        level,
        draw_count: cube.draw_count(),
        thresholds: cube.thresholds().to_vec(),
        strategies: cube.strategies().to_vec(),
        cells,
        evpi: evpis,
        pairwise: pair_results,
    })
}
