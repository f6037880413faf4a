//! Beta priors for sensitivity, specificity and prevalence.
//!
//! Priors are written as a mean and a strength (pseudo-sample size):
//! `Beta(mean * strength, (1 - mean) * strength)`. The threshold-varying
//! prior interpolates the sensitivity mean and strength linearly from
//! `t_min` into an ignorance region, holds a vague prior inside the region,
//! and interpolates out again to `t_max`. Specificity mirrors it with mean
//! `1 - mean(Se)` and the same strength.

use serde::{Deserialize, Serialize};

use crate::binary::{self, BetaParams, BinaryPosterior, BinaryPriorTable, SeSp};
use crate::error::{DcaError, Result};
use crate::model::{NetBenefitCube, Strategy, StrategyKind, Threshold, ThresholdGrid};
use crate::stats::{mean, sorted_copy, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStrength {
    pub mean: f64,
    pub strength: f64,
}

impl MeanStrength {
    pub fn new(mean: f64, strength: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) {
            return Err(DcaError::param("mean", format!("must lie in (0, 1), got {mean}")));
        }
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(DcaError::param("strength", format!("must be positive, got {strength}")));
        }
        Ok(MeanStrength { mean, strength })
    }

    pub fn to_beta(&self) -> Result<BetaParams> {
        let ms = MeanStrength::new(self.mean, self.strength)?;
        BetaParams::new(ms.mean * ms.strength, (1.0 - ms.mean) * ms.strength)
    }

    pub fn from_beta(b: &BetaParams) -> Self {
        MeanStrength {
            mean: b.mean(),
            strength: b.strength(),
        }
    }
}

/// Shorthand for `MeanStrength::new(mean, strength)?.to_beta()`.
pub fn to_beta(mean: f64, strength: f64) -> Result<BetaParams> {
    MeanStrength::new(mean, strength)?.to_beta()
}

/// Sensitivity prior that decays with the threshold around a vague region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVaryingPrior {
    pub t_min: f64,
    pub t_max: f64,
    /// Ignorance region `(a, b)`; `a == b` gives plain linear interpolation.
    pub ignorance_region: (f64, f64),
    pub se_mean_at_tmin: f64,
    pub se_mean_at_tmax: f64,
    pub strength_at_extremes: f64,
    pub region_mean: f64,
    pub strength_in_region: f64,
}

impl ThresholdVaryingPrior {
    /// Region `(0.25, 0.75) * t_max`, means 0.99/0.01, strength 5 at the
    /// extremes and `Beta(1, 1)` inside the region.
    pub fn defaults(t_min: f64, t_max: f64) -> Result<Self> {
        let p = Self::unchecked_defaults(t_min, t_max);
        p.validate()?;
        Ok(p)
    }

    fn unchecked_defaults(t_min: f64, t_max: f64) -> Self {
        ThresholdVaryingPrior {
            t_min,
            t_max,
            ignorance_region: (0.25 * t_max, 0.75 * t_max),
            se_mean_at_tmin: 0.99,
            se_mean_at_tmax: 0.01,
            strength_at_extremes: 5.0,
            region_mean: 0.5,
            strength_in_region: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.ignorance_region;
        if !(0.0 <= self.t_min && self.t_min < a && a <= b && b < self.t_max && self.t_max < 1.0) {
            return Err(DcaError::Config(format!(
                "threshold-varying prior needs 0 <= t_min < a <= b < t_max < 1, got t_min={}, region=({a}, {b}), t_max={}",
                self.t_min, self.t_max
            )));
        }
        for m in [self.se_mean_at_tmin, self.se_mean_at_tmax, self.region_mean] {
            MeanStrength::new(m, 1.0)?;
        }
        for s in [self.strength_at_extremes, self.strength_in_region] {
            MeanStrength::new(0.5, s)?;
        }
        Ok(())
    }

    /// Sensitivity (mean, strength) at `t`.
    pub fn sensitivity_at(&self, t: f64) -> Result<MeanStrength> {
        const EPS: f64 = 1e-12;
        if t < self.t_min - EPS || t > self.t_max + EPS {
            return Err(DcaError::Config(format!(
                "threshold {t} outside prior range [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        let (a, b) = self.ignorance_region;
        let lerp = |x: f64, y: f64, f: f64| x + f * (y - x);
        let (mean, strength) = if t <= a {
            let f = ((t - self.t_min) / (a - self.t_min)).clamp(0.0, 1.0);
            (
                lerp(self.se_mean_at_tmin, self.region_mean, f),
                lerp(self.strength_at_extremes, self.strength_in_region, f),
            )
        } else if t >= b {
            let f = ((t - b) / (self.t_max - b)).clamp(0.0, 1.0);
            (
                lerp(self.region_mean, self.se_mean_at_tmax, f),
                lerp(self.strength_in_region, self.strength_at_extremes, f),
            )
        } else {
            (self.region_mean, self.strength_in_region)
        };
        MeanStrength::new(mean, strength)
    }

    /// Sensitivity and specificity priors at `t`.
    pub fn at(&self, t: f64) -> Result<SeSp> {
        let se = self.sensitivity_at(t)?;
        let sp = MeanStrength::new(1.0 - se.mean, se.strength)?;
        Ok(SeSp {
            sensitivity: se.to_beta()?,
            specificity: sp.to_beta()?,
        })
    }
}

/// A Beta written either as shapes or as mean and strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum BetaSpec {
    Shapes { alpha: f64, beta: f64 },
    MeanStrength { mean: f64, strength: f64 },
}

impl BetaSpec {
    pub fn to_beta(&self) -> Result<BetaParams> {
        match *self {
            BetaSpec::Shapes { alpha, beta } => BetaParams::new(alpha, beta),
            BetaSpec::MeanStrength { mean, strength } => to_beta(mean, strength),
        }
    }
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Shapes { alpha: 1.0, beta: 1.0 }
    }
}

/// Optional overrides for [`ThresholdVaryingPrior::defaults`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdVaryingSpec {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub ignorance_region: Option<(f64, f64)>,
    pub se_mean_at_tmin: Option<f64>,
    pub se_mean_at_tmax: Option<f64>,
    pub strength_at_extremes: Option<f64>,
    pub region_mean: Option<f64>,
    pub strength_in_region: Option<f64>,
}

impl ThresholdVaryingSpec {
    pub fn build(&self, grid: &ThresholdGrid) -> Result<ThresholdVaryingPrior> {
        let t_min = self.t_min.unwrap_or(grid.min().value());
        let t_max = self.t_max.unwrap_or(grid.max().value());
        // overrides may repair a default region that does not fit the grid
        let d = ThresholdVaryingPrior::unchecked_defaults(t_min, t_max);
        let p = ThresholdVaryingPrior {
            t_min,
            t_max,
            ignorance_region: self.ignorance_region.unwrap_or(d.ignorance_region),
            se_mean_at_tmin: self.se_mean_at_tmin.unwrap_or(d.se_mean_at_tmin),
            se_mean_at_tmax: self.se_mean_at_tmax.unwrap_or(d.se_mean_at_tmax),
            strength_at_extremes: self.strength_at_extremes.unwrap_or(d.strength_at_extremes),
            region_mean: self.region_mean.unwrap_or(d.region_mean),
            strength_in_region: self.strength_in_region.unwrap_or(d.strength_in_region),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPriorEntry {
    pub threshold: f64,
    pub sensitivity: BetaSpec,
    pub specificity: BetaSpec,
}

/// Sensitivity/specificity prior for model strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeSpPriorSpec {
    #[default]
    Uniform,
    /// The same prior at every threshold.
    Constant {
        sensitivity: BetaSpec,
        specificity: BetaSpec,
    },
    ThresholdVarying(ThresholdVaryingSpec),
    /// One entry per grid threshold.
    Explicit { entries: Vec<ExplicitPriorEntry> },
}

/// Constant prior for binary-test strategies, whose counts do not vary with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPriorSpec {
    #[serde(default)]
    pub sensitivity: BetaSpec,
    #[serde(default)]
    pub specificity: BetaSpec,
}

/// Prior block of the binary analysis configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryPriorConfig {
    #[serde(default)]
    pub prevalence: BetaSpec,
    #[serde(default)]
    pub models: SeSpPriorSpec,
    #[serde(default)]
    pub tests: TestPriorSpec,
}

impl BinaryPriorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Resolves the prior for every (threshold, strategy) cell.
    pub fn resolve(&self, grid: &ThresholdGrid, strategies: &[Strategy]) -> Result<BinaryPriorTable> {
        let model_priors: Vec<SeSp> = match &self.models {
            SeSpPriorSpec::Uniform => vec![SeSp::uniform(); grid.len()],
            SeSpPriorSpec::Constant {
                sensitivity,
                specificity,
            } => {
                let cell = SeSp {
                    sensitivity: sensitivity.to_beta()?,
                    specificity: specificity.to_beta()?,
                };
                vec![cell; grid.len()]
            }
            SeSpPriorSpec::ThresholdVarying(spec) => {
                let tv = spec.build(grid)?;
                grid.thresholds()
                    .iter()
                    .map(|t| tv.at(t.value()))
                    .collect::<Result<_>>()?
            }
            SeSpPriorSpec::Explicit { entries } => grid
                .thresholds()
                .iter()
                .map(|t| {
                    let e = entries
                        .iter()
                        .find(|e| (e.threshold - t.value()).abs() < 1e-9)
                        .ok_or_else(|| {
                            DcaError::Config(format!("explicit prior has no entry for threshold {}", t.value()))
                        })?;
                    Ok(SeSp {
                        sensitivity: e.sensitivity.to_beta()?,
                        specificity: e.specificity.to_beta()?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        let test_prior = SeSp {
            sensitivity: self.tests.sensitivity.to_beta()?,
            specificity: self.tests.specificity.to_beta()?,
        };
        let mut cells = Vec::with_capacity(grid.len() * strategies.len());
        for model_prior in &model_priors {
            for s in strategies {
                cells.push(match s.kind {
                    StrategyKind::BinaryTest => test_prior,
                    _ => *model_prior,
                });
            }
        }
        Ok(BinaryPriorTable {
            prevalence: self.prevalence.to_beta()?,
            strategies: strategies.len(),
            cells,
        })
    }
}

/// Mean and equal-tailed interval of a set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub lo: f64,
    pub median: f64,
    pub hi: f64,
}

impl DrawSummary {
    pub fn of(xs: &[f64], level: f64) -> Self {
        let s = sorted_copy(xs);
        let a = (1.0 - level) / 2.0;
        DrawSummary {
            mean: mean(xs),
            lo: quantile_sorted(&s, a),
            median: quantile_sorted(&s, 0.5),
            hi: quantile_sorted(&s, 1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCheckRow {
    pub threshold: f64,
    pub strategy: String,
    pub sensitivity: Option<DrawSummary>,
    pub specificity: Option<DrawSummary>,
    pub net_benefit: DrawSummary,
}

/// Prior predictive draws and their per-threshold summaries.
#[derive(Debug, Clone)]
pub struct PriorPredictive {
    pub prevalence: DrawSummary,
    pub rows: Vec<PriorCheckRow>,
    pub cube: NetBenefitCube,
}

/// Samples net benefit from the prior alone.
pub fn prior_predictive(
    grid: &ThresholdGrid,
    strategies: Vec<Strategy>,
    priors: &BinaryPriorTable,
    draws: usize,
    seed: u64,
    level: f64,
) -> Result<PriorPredictive> {
    let post = BinaryPosterior::from_prior(grid, strategies, priors)?;
    let joint = binary::sample_joint_detailed(&post, draws, seed)?;
    let ns = post.strategies.len();
    let mut rows = Vec::new();
    for (ti, &t) in post.thresholds.iter().enumerate() {
        for (si, s) in joint.cube.strategies().iter().enumerate() {
            let user = si < ns;
            rows.push(PriorCheckRow {
                threshold: t,
                strategy: s.name.clone(),
                sensitivity: user.then(|| DrawSummary::of(&joint.sensitivity[ti * ns + si], level)),
                specificity: user.then(|| DrawSummary::of(&joint.specificity[ti * ns + si], level)),
                net_benefit: DrawSummary::of(joint.cube.slice(ti, si), level),
            });
        }
    }
    Ok(PriorPredictive {
        prevalence: DrawSummary::of(&joint.prevalence, level),
        rows,
        cube: joint.cube,
    })
}

/// Treat-all net benefit is `p - w (1 - p)`; with `p ~ Beta(1, 1)` its
/// median is `0.5 (1 + w) - w`.
pub fn uniform_treat_all_median(t: Threshold) -> f64 {
    let w = t.weight();
    0.5 * (1.0 + w) - w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TREAT_ALL;
    use crate::stats::std_dev;
    use proptest::prelude::*;
    use crate::model::Strategy;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn beta_close(b: BetaParams, alpha: f64, beta: f64) -> bool {
        close(b.alpha, alpha) && close(b.beta, beta)
    }

    #[test]
    fn to_beta_examples() {
        assert!(beta_close(to_beta(0.5, 2.0).unwrap(), 1.0, 1.0));
        assert!(beta_close(to_beta(0.95, 10.0).unwrap(), 9.5, 0.5));
        assert!(beta_close(to_beta(0.25, 10.0).unwrap(), 2.5, 7.5));
        assert!(to_beta(0.0, 10.0).is_err());
        assert!(to_beta(1.0, 10.0).is_err());
        assert!(to_beta(0.5, 0.0).is_err());
    }

    #[test]
    fn defaults_at_extremes_and_region() {
        let tv = ThresholdVaryingPrior::defaults(0.0, 0.5).unwrap();
        assert_eq!(tv.ignorance_region, (0.125, 0.375));
        let at_min = tv.at(0.0).unwrap();
        assert!(beta_close(at_min.sensitivity, 4.95, 0.05));
        assert!(beta_close(at_min.specificity, 0.05, 4.95));
        let mid = tv.at(0.25).unwrap();
        assert!(beta_close(mid.sensitivity, 1.0, 1.0));
        assert!(beta_close(mid.specificity, 1.0, 1.0));
        let at_max = tv.at(0.5).unwrap();
        assert!(beta_close(at_max.sensitivity, 0.05, 4.95));
        assert!(tv.at(0.51).is_err());
    }

    #[test]
    fn no_region_mode_reproduces_informative_evpi_priors() {
        let tv = ThresholdVaryingPrior {
            t_min: 0.01,
            t_max: 0.19,
            ignorance_region: (0.1, 0.1),
            se_mean_at_tmin: 0.95,
            se_mean_at_tmax: 0.05,
            strength_at_extremes: 10.0,
            region_mean: 0.5,
            strength_in_region: 10.0,
        };
        tv.validate().unwrap();
        for (t, a, b) in [(0.01, 9.5, 0.5), (0.02, 9.0, 1.0), (0.05, 7.5, 2.5), (0.1, 5.0, 5.0)] {
            let p = tv.at(t).unwrap();
            assert!(beta_close(p.sensitivity, a, b), "{t}: {:?}", p.sensitivity);
            assert!(beta_close(p.specificity, b, a), "{t}: {:?}", p.specificity);
        }
    }

    #[test]
    fn invalid_region_is_rejected() {
        let mut tv = ThresholdVaryingPrior::defaults(0.0, 0.5).unwrap();
        tv.ignorance_region = (0.3, 0.2);
        assert!(tv.validate().is_err());
        tv.ignorance_region = (0.0, 0.2);
        assert!(tv.validate().is_err());
    }

    #[test]
    fn prior_config_from_toml() {
        let cfg = BinaryPriorConfig::from_toml(
            r#"
            [prevalence]
            mean = 0.3
            strength = 20

            [models]
            type = "threshold-varying"
            strength_at_extremes = 10

            [tests]
            sensitivity = { alpha = 8, beta = 2 }
            "#,
        )
        .unwrap();
        let grid = ThresholdGrid::default();
        let table = cfg
            .resolve(&grid, &[Strategy::model("m"), Strategy::test("soc")])
            .unwrap();
        assert!(beta_close(table.prevalence, 6.0, 14.0));
        assert!(beta_close(table.cell(0, 0).sensitivity, 9.9, 0.1));
        assert!(beta_close(table.cell(0, 1).sensitivity, 8.0, 2.0));
        assert!(beta_close(table.cell(50, 1).specificity, 1.0, 1.0));

        assert!(BinaryPriorConfig::from_toml("[models]\ntype = \"nope\"").is_err());
        let explicit = BinaryPriorConfig::from_toml(
            "[models]\ntype = \"explicit\"\n[[models.entries]]\nthreshold = 0.1\nsensitivity = { alpha = 2, beta = 3 }\nspecificity = { mean = 0.5, strength = 4 }\n",
        )
        .unwrap();
        let g = ThresholdGrid::new(vec![0.1]).unwrap();
        let t = explicit.resolve(&g, &[Strategy::model("m")]).unwrap();
        assert!(beta_close(t.cell(0, 0).specificity, 2.0, 2.0));
        assert!(explicit.resolve(&ThresholdGrid::new(vec![0.2]).unwrap(), &[Strategy::model("m")]).is_err());
    }

    #[test]
    fn uniform_prior_predictive_at_zero() {
        let grid = ThresholdGrid::new(vec![0.0, 0.2]).unwrap();
        let table = BinaryPriorTable::uniform(2, 1);
        let pp = prior_predictive(&grid, vec![Strategy::model("m")], &table, 8000, 1, 0.95).unwrap();
        // E[se] E[p] = 0.25 at t = 0; Var(se p) = E[se^2]E[p^2] - 1/16 = 1/9 - 1/16
        let mcse = ((1.0 / 9.0 - 1.0 / 16.0) / 8000f64).sqrt();
        assert!((pp.rows[0].net_benefit.mean - 0.25).abs() < 4.0 * mcse);
        // treat-all median under uniform prevalence
        let all = pp.cube.strategy_index(TREAT_ALL).unwrap();
        let t = Threshold::new(0.2).unwrap();
        let med = crate::stats::median(pp.cube.slice(1, all));
        assert!((med - uniform_treat_all_median(t)).abs() < 0.03);
    }

    #[test]
    fn point_mass_prevalence_prior() {
        let grid = ThresholdGrid::new(vec![0.0]).unwrap();
        let mut table = BinaryPriorTable::uniform(1, 1);
        table.prevalence = to_beta(0.3, 1e6).unwrap();
        let pp = prior_predictive(&grid, vec![Strategy::model("m")], &table, 1000, 2, 0.95).unwrap();
        let all = pp.cube.strategy_index(TREAT_ALL).unwrap();
        assert!((pp.rows[all].net_benefit.mean - 0.3).abs() < 1e-3);
        assert!(std_dev(pp.cube.slice(0, all)) < 1e-3);
    }

    proptest! {
        #[test]
        fn mean_strength_roundtrip(m in 0.001f64..0.999, s in 0.01f64..1e4) {
            let b = to_beta(m, s).unwrap();
            let back = MeanStrength::from_beta(&b);
            prop_assert!((back.mean - m).abs() < 1e-9);
            prop_assert!((back.strength - s).abs() < 1e-9 * s.max(1.0));
        }

        #[test]
        fn default_prior_is_continuous_and_mirrored(t in 0.0f64..0.5) {
            let tv = ThresholdVaryingPrior::defaults(0.0, 0.5).unwrap();
            let here = tv.sensitivity_at(t).unwrap();
            let next = tv.sensitivity_at((t + 1e-7).min(0.5)).unwrap();
            prop_assert!((here.mean - next.mean).abs() < 1e-5);
            prop_assert!((here.strength - next.strength).abs() < 1e-4);
            let p = tv.at(t).unwrap();
            prop_assert!((p.sensitivity.mean() + p.specificity.mean() - 1.0).abs() < 1e-12);
        }
    }
}
