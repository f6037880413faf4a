//! Domain types and the deterministic net-benefit algebra.
//!
//! Net benefit is reported per patient, in units of net true positives.
//! A record is a positive prediction at threshold `t` iff its score is
//! strictly greater than `t`.

use serde::{Deserialize, Serialize};

use crate::error::{DcaError, Result};

pub const TREAT_ALL: &str = "treat all";
pub const TREAT_NONE: &str = "treat none";

/// A decision threshold `t` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && (0.0..1.0).contains(&t) {
            Ok(Threshold(t))
        } else {
            Err(DcaError::InvalidThreshold(t))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Odds weight `t / (1 - t)` given to each false positive.
    pub fn weight(self) -> f64 {
        self.0 / (1.0 - self.0)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = DcaError;

    fn try_from(t: f64) -> Result<Self> {
        Threshold::new(t)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// `t / (1 - t)`, rejecting thresholds outside `[0, 1)`.
pub fn weight(t: f64) -> Result<f64> {
    Threshold::new(t).map(Threshold::weight)
}

/// Strictly increasing, non-empty list of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    thresholds: Vec<Threshold>,
}

impl ThresholdGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DcaError::InvalidGrid("grid is empty".into()));
        }
        let thresholds = values
            .into_iter()
            .map(Threshold::new)
            .collect::<Result<Vec<_>>>()?;
        if thresholds.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(DcaError::InvalidGrid(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(ThresholdGrid { thresholds })
    }

    /// `lo, lo + step, ...` up to and including `hi` (within rounding).
    pub fn range(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(DcaError::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if !(hi >= lo) {
            return Err(DcaError::InvalidGrid(format!("upper bound {hi} below lower bound {lo}")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // Round to 12 decimals so 0.07 is 0.07 and not 0.07000000000000001.
        let values = (0..count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        ThresholdGrid::new(values)
    }

    /// Parses `lo:hi:step`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(DcaError::InvalidGrid(format!(
                "expected lo:hi:step, got `{spec}`"
            )));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| DcaError::InvalidGrid(format!("cannot parse `{s}` in `{spec}`")))
        };
        ThresholdGrid::range(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }

    pub fn thresholds(&self) -> &[Threshold] {
        &self.thresholds
    }

    pub fn values(&self) -> Vec<f64> {
        self.thresholds.iter().map(|t| t.0).collect()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn min(&self) -> Threshold {
        self.thresholds[0]
    }

    pub fn max(&self) -> Threshold {
        self.thresholds[self.thresholds.len() - 1]
    }
}

impl Default for ThresholdGrid {
    /// 0.00 to 0.50 in steps of 0.01.
    fn default() -> Self {
        ThresholdGrid::range(0.0, 0.5, 0.01).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Model,
    BinaryTest,
    TreatAll,
    TreatNone,
}

impl StrategyKind {
    pub fn is_default(self) -> bool {
        matches!(self, StrategyKind::TreatAll | StrategyKind::TreatNone)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strategy {
    pub name: String,
    pub kind: StrategyKind,
}

impl Strategy {
    pub fn new(name: impl Into<String>, kind: StrategyKind) -> Self {
        Strategy {
            name: name.into(),
            kind,
        }
    }

    pub fn model(name: impl Into<String>) -> Self {
        Strategy::new(name, StrategyKind::Model)
    }

    pub fn test(name: impl Into<String>) -> Self {
        Strategy::new(name, StrategyKind::BinaryTest)
    }

    pub fn treat_all() -> Self {
        Strategy::new(TREAT_ALL, StrategyKind::TreatAll)
    }

    pub fn treat_none() -> Self {
        Strategy::new(TREAT_NONE, StrategyKind::TreatNone)
    }
}

/// Checks user strategies for unique, non-reserved names.
pub(crate) fn validate_strategy_names<'a>(
    names: impl IntoIterator<Item = &'a Strategy>,
) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for s in names {
        if s.kind.is_default() || s.name == TREAT_ALL || s.name == TREAT_NONE {
            return Err(DcaError::DuplicateStrategy(s.name.clone()));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(DcaError::DuplicateStrategy(s.name.clone()));
        }
    }
    Ok(())
}

/// Prevalence, sensitivity and specificity at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub prevalence: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl Rates {
    pub fn new(prevalence: f64, sensitivity: f64, specificity: f64) -> Result<Self> {
        for (name, v) in [
            ("prevalence", prevalence),
            ("sensitivity", sensitivity),
            ("specificity", specificity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DcaError::param(name, format!("{v} is outside [0, 1]")));
            }
        }
        Ok(Rates {
            prevalence,
            sensitivity,
            specificity,
        })
    }
}

/// `Se * p - (1 - Sp) * (1 - p) * w_t`.
pub fn nb_from_rates(r: Rates, t: Threshold) -> f64 {
    r.sensitivity * r.prevalence - (1.0 - r.specificity) * (1.0 - r.prevalence) * t.weight()
}

/// Treat-all net benefit `p - w_t * (1 - p)`.
pub fn nb_treat_all(prevalence: f64, t: Threshold) -> f64 {
    prevalence - t.weight() * (1.0 - prevalence)
}

/// Monte Carlo draws of net benefit indexed by (threshold, strategy, draw).
///
/// Strategy order is the user strategies followed by treat-all and
/// treat-none. The treat-none slice is identically zero. Draws are stored
/// contiguously per (threshold, strategy) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetBenefitCube {
    thresholds: Vec<f64>,
    strategies: Vec<Strategy>,
    draw_count: usize,
    values: Vec<f64>,
}

impl NetBenefitCube {
    /// Builds a cube from per-cell draw vectors in threshold-major order.
    /// The treat-none cell is overwritten with zeros.
    pub fn from_cells(
        thresholds: Vec<f64>,
        strategies: Vec<Strategy>,
        draw_count: usize,
        cells: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if draw_count == 0 {
            return Err(DcaError::param("draw_count", "must be at least 1"));
        }
        if cells.len() != thresholds.len() * strategies.len() {
            return Err(DcaError::LengthMismatch(format!(
                "expected {} cells, got {}",
                thresholds.len() * strategies.len(),
                cells.len()
            )));
        }
        let mut names = std::collections::HashSet::new();
        for s in &strategies {
            if !names.insert(s.name.as_str()) {
                return Err(DcaError::DuplicateStrategy(s.name.clone()));
            }
        }
        let mut values = Vec::with_capacity(cells.len() * draw_count);
        for (i, cell) in cells.into_iter().enumerate() {
            if cell.len() != draw_count {
                return Err(DcaError::LengthMismatch(format!(
                    "cell {i} has {} draws, expected {draw_count}",
                    cell.len()
                )));
            }
            if strategies[i % strategies.len()].kind == StrategyKind::TreatNone {
                values.extend(std::iter::repeat_n(0.0, draw_count));
            } else {
                values.extend(cell);
            }
        }
        Ok(NetBenefitCube {
            thresholds,
            strategies,
            draw_count,
            values,
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn draw_count(&self) -> usize {
        self.draw_count
    }

    pub fn strategy_index(&self, name: &str) -> Result<usize> {
        self.strategies
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| DcaError::UnknownStrategy(name.to_string()))
    }

    pub fn threshold_index(&self, t: f64) -> Result<usize> {
        self.thresholds
            .iter()
            .position(|&x| (x - t).abs() < 1e-12)
            .ok_or_else(|| DcaError::InvalidGrid(format!("threshold {t} is not on the grid")))
    }

    /// Draws for one (threshold index, strategy index) cell.
    pub fn slice(&self, t: usize, s: usize) -> &[f64] {
        let start = (t * self.strategies.len() + s) * self.draw_count;
        &self.values[start..start + self.draw_count]
    }

    pub fn get(&self, draw: usize, t: usize, s: usize) -> f64 {
        self.slice(t, s)[draw]
    }

    /// Returns a copy with draws reordered by `perm` (identical for every cell).
    pub fn permute_draws(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.draw_count {
            return Err(DcaError::LengthMismatch("permutation length".into()));
        }
        let cells = self
            .values
            .chunks(self.draw_count)
            .map(|c| perm.iter().map(|&i| c[i]).collect())
            .collect();
        NetBenefitCube::from_cells(
            self.thresholds.clone(),
            self.strategies.clone(),
            self.draw_count,
            cells,
        )
    }
}

/// Category of a non-fatal condition surfaced in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningKind {
    /// No events among positive predictions above a threshold.
    NoEventsAboveThreshold,
    /// No records at all above a threshold.
    NoPositivePredictions,
    /// MCMC diagnostics outside the convergence thresholds.
    Convergence,
    /// Kaplan-Meier estimate undefined at the horizon.
    UndefinedEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub strategy: Option<String>,
    pub threshold: Option<f64>,
    pub message: String,
}
