//! Reading datasets and configuration files, and writing reports.
//!
//! CSV numbers are parsed with Rust's `f64` parser, which only accepts a
//! decimal point, so ingestion does not depend on the locale. Malformed
//! values are rejected, never coerced. Row numbers in errors count data
//! records from 1 (the header is not counted).

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binary::{infer_kind, BinaryDataset};
use crate::error::{DcaError, Result};
use crate::interrogation::{DcaReport, PairwiseRequest};
use crate::model::{Strategy, ThresholdGrid, Warning};
use crate::prior::BinaryPriorConfig;
use crate::survival::{McmcConfig, SurvPriorSpec, SurvivalCellInfo, SurvivalDataset};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "bdca";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(DcaError::EmptyDataset("the file has a header but no data rows".into()));
        }
        Ok(Table { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DcaError::MissingColumn(name.to_string()))
    }

    /// Every column except `exclude`, in header order.
    fn other_columns(&self, exclude: &[&str]) -> Vec<String> {
        self.headers
            .iter()
            .filter(|h| !exclude.contains(&h.as_str()))
            .cloned()
            .collect()
    }

    fn cells<'a>(&'a self, col: usize) -> impl Iterator<Item = (usize, &'a str)> + 'a {
        self.rows.iter().enumerate().map(move |(i, r)| (i + 1, r.get(col).unwrap_or("")))
    }
}

fn parse_number(row: usize, column: &str, value: &str) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(DcaError::Malformed {
            row,
            column: column.to_string(),
            value: value.to_string(),
        }),
    }
}

fn parse_flag(row: usize, column: &str, value: &str) -> Result<bool> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(DcaError::NonBinaryOutcome {
            row,
            column: column.to_string(),
            value: value.to_string(),
        }),
    }
}

fn parse_scores(table: &Table, names: &[String]) -> Result<Vec<(Strategy, Vec<f64>)>> {
    if names.is_empty() {
        return Err(DcaError::Config("no strategy columns given".into()));
    }
    names
        .iter()
        .map(|name| {
            let col = table.column(name)?;
            let scores = table
                .cells(col)
                .map(|(row, v)| {
                    let x = parse_number(row, name, v)?;
                    if !(0.0..=1.0).contains(&x) {
                        return Err(DcaError::ScoreOutOfRange {
                            row,
                            column: name.clone(),
                            value: v.to_string(),
                        });
                    }
                    Ok(x)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((Strategy::new(name.clone(), infer_kind(&scores)), scores))
        })
        .collect()
}

/// Reads a binary-outcome dataset. With no strategy columns given, every
/// column other than the outcome is taken as a strategy. Columns holding
/// only 0/1 values become binary tests; anything else is a risk model.
pub fn read_binary_csv(reader: impl Read, outcome_col: &str, strategy_cols: &[String]) -> Result<BinaryDataset> {
    let table = Table::read(reader)?;
    let col = table.column(outcome_col)?;
    let outcomes = table
        .cells(col)
        .map(|(row, v)| parse_flag(row, outcome_col, v))
        .collect::<Result<Vec<_>>>()?;
    let names = if strategy_cols.is_empty() {
        table.other_columns(&[outcome_col])
    } else {
        strategy_cols.to_vec()
    };
    BinaryDataset::new(outcomes, parse_scores(&table, &names)?)
}

pub fn ingest_binary_csv(path: &Path, outcome_col: &str, strategy_cols: &[String]) -> Result<BinaryDataset> {
    read_binary_csv(File::open(path)?, outcome_col, strategy_cols)
}

/// Reads a right-censored dataset; times must be positive, events 0 or 1.
pub fn read_survival_csv(
    reader: impl Read,
    time_col: &str,
    event_col: &str,
    strategy_cols: &[String],
    tau: f64,
) -> Result<SurvivalDataset> {
    let table = Table::read(reader)?;
    let tc = table.column(time_col)?;
    let ec = table.column(event_col)?;
    let times = table
        .cells(tc)
        .map(|(row, v)| match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
            _ => Err(DcaError::NonPositiveTime {
                row,
                column: time_col.to_string(),
                value: v.to_string(),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let events = table
        .cells(ec)
        .map(|(row, v)| parse_flag(row, event_col, v))
        .collect::<Result<Vec<_>>>()?;
    let names = if strategy_cols.is_empty() {
        table.other_columns(&[time_col, event_col])
    } else {
        strategy_cols.to_vec()
    };
    SurvivalDataset::new(times, events, parse_scores(&table, &names)?, tau)
}

pub fn ingest_survival_csv(
    path: &Path,
    time_col: &str,
    event_col: &str,
    strategy_cols: &[String],
    tau: f64,
) -> Result<SurvivalDataset> {
    read_survival_csv(File::open(path)?, time_col, event_col, strategy_cols, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Binary,
    Survival,
}

/// Either `"lo:hi:step"` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range(String),
    List(Vec<f64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Range("0:0.5:0.01".into())
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<ThresholdGrid> {
        match self {
            GridSpec::Range(s) => ThresholdGrid::parse(s),
            GridSpec::List(v) => ThresholdGrid::new(v.clone()),
        }
    }
}

/// `"s1,s2,c"` or `{ s1, s2, margin }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairwiseSpec {
    Text(String),
    Table(PairwiseRequest),
}

impl PairwiseSpec {
    pub fn request(&self) -> Result<PairwiseRequest> {
        match self {
            PairwiseSpec::Text(s) => PairwiseRequest::parse(s),
            PairwiseSpec::Table(r) => Ok(r.clone()),
        }
    }
}

/// Prevalence counts from an external cohort: `diseased` cases out of `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalPrevalence {
    pub diseased: u64,
    pub total: u64,
}

impl ExternalPrevalence {
    /// Parses `D:N`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || DcaError::Config(format!("expected D:N for external prevalence, got `{spec}`"));
        let (d, n) = spec.split_once(':').ok_or_else(bad)?;
        let e = ExternalPrevalence {
            diseased: d.trim().parse().map_err(|_| bad())?,
            total: n.trim().parse().map_err(|_| bad())?,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total == 0 || self.diseased > self.total {
            return Err(DcaError::Config(format!(
                "external prevalence needs 0 <= D <= N and N > 0, got {}:{}",
                self.diseased, self.total
            )));
        }
        Ok(())
    }

    pub fn healthy(&self) -> u64 {
        self.total - self.diseased
    }
}

/// Where to find the data and which columns to use.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub input: Option<PathBuf>,
    pub outcome: Option<String>,
    pub time: Option<String>,
    pub event: Option<String>,
    #[serde(default)]
    pub strategies: Vec<String>,
}

/// Sampler settings other than the chain and draw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcTuning {
    pub warmup: usize,
    pub target_acceptance: f64,
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl Default for McmcTuning {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcTuning {
            warmup: d.warmup,
            target_acceptance: d.target_acceptance,
            max_rhat: d.max_rhat,
            min_ess: d.min_ess,
        }
    }
}

fn default_draws() -> usize {
    4000
}

fn default_chains() -> usize {
    4
}

fn default_seed() -> u64 {
    1
}

fn default_level() -> f64 {
    0.95
}

/// Analysis configuration, read from TOML. See the README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub mode: Mode,
    #[serde(default)]
    pub thresholds: GridSpec,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Prediction horizon; required in survival mode and rejected otherwise.
    pub tau: Option<f64>,
    pub external_prevalence: Option<ExternalPrevalence>,
    #[serde(default)]
    pub pairwise: Vec<PairwiseSpec>,
    #[serde(default)]
    pub data: DataSpec,
    /// Binary mode priors.
    pub prior: Option<BinaryPriorConfig>,
    /// Survival mode priors.
    pub survival_prior: Option<SurvPriorSpec>,
    #[serde(default)]
    pub mcmc: McmcTuning,
}

impl AnalysisConfig {
    pub fn new(mode: Mode) -> Self {
        AnalysisConfig {
            mode,
            thresholds: GridSpec::default(),
            draws: default_draws(),
            chains: default_chains(),
            seed: default_seed(),
            level: default_level(),
            tau: None,
            external_prevalence: None,
            pairwise: Vec::new(),
            data: DataSpec::default(),
            prior: None,
            survival_prior: None,
            mcmc: McmcTuning::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> Result<ThresholdGrid> {
        self.thresholds.build()
    }

    pub fn pairwise_requests(&self) -> Result<Vec<PairwiseRequest>> {
        self.pairwise.iter().map(PairwiseSpec::request).collect()
    }

    /// Chains and kept iterations per chain so that at least `draws` draws are kept.
    pub fn mcmc_config(&self) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            warmup: self.mcmc.warmup,
            keep: self.draws.div_ceil(self.chains.max(1)),
            target_acceptance: self.mcmc.target_acceptance,
            max_rhat: self.mcmc.max_rhat,
            min_ess: self.mcmc.min_ess,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.pairwise_requests()?;
        if self.draws < 1 {
            return Err(DcaError::param("draws", "need at least one draw"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(DcaError::param("level", "must lie in (0, 1)"));
        }
        match self.mode {
            Mode::Binary => {
                if self.tau.is_some() {
                    return Err(DcaError::Config("`tau` applies to survival mode only".into()));
                }
                if self.survival_prior.is_some() {
                    return Err(DcaError::Config("`survival_prior` applies to survival mode only".into()));
                }
                if let Some(e) = &self.external_prevalence {
                    e.validate()?;
                }
            }
            Mode::Survival => {
                match self.tau {
                    None => return Err(DcaError::Config("survival mode requires the horizon `tau`".into())),
                    Some(t) if !(t > 0.0 && t.is_finite()) => {
                        return Err(DcaError::Config(format!("`tau` must be positive, got {t}")))
                    }
                    _ => {}
                }
                if self.prior.is_some() {
                    return Err(DcaError::Config(
                        "`prior` applies to binary mode only; use `survival_prior`".into(),
                    ));
                }
                if self.external_prevalence.is_some() {
                    return Err(DcaError::Config("external prevalence applies to binary mode only".into()));
                }
                self.mcmc_config().validate()?;
                if let Some(p) = &self.survival_prior {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// A dataset of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Binary(BinaryDataset),
    Survival(SurvivalDataset),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Binary(d) => d.len(),
            Dataset::Survival(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Diseased records (binary) or observed events (survival).
    pub fn events(&self) -> u64 {
        match self {
            Dataset::Binary(d) => d.diseased(),
            Dataset::Survival(d) => d.events().iter().filter(|&&e| e).count() as u64,
        }
    }
}

/// Loads the dataset described by the `[data]` block.
pub fn load_dataset(config: &AnalysisConfig) -> Result<Dataset> {
    let path = config
        .data
        .input
        .as_deref()
        .ok_or_else(|| DcaError::Config("no input file given".into()))?;
    let need = |v: &Option<String>, what: &str| {
        v.clone()
            .ok_or_else(|| DcaError::Config(format!("no {what} column given")))
    };
    match config.mode {
        Mode::Binary => Ok(Dataset::Binary(ingest_binary_csv(
            path,
            &need(&config.data.outcome, "outcome")?,
            &config.data.strategies,
        )?)),
        Mode::Survival => {
            let tau = config
                .tau
                .ok_or_else(|| DcaError::Config("survival mode requires the horizon `tau`".into()))?;
            Ok(Dataset::Survival(ingest_survival_csv(
                path,
                &need(&config.data.time, "time")?,
                &need(&config.data.event, "event")?,
                &config.data.strategies,
                tau,
            )?))
        }
    }
}

/// One analysis result with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub mode: Mode,
    pub config_hash: String,
    pub seed: u64,
    pub records: usize,
    /// Diseased records (binary) or observed events (survival).
    pub events: u64,
    pub tau: Option<f64>,
    pub warnings: Vec<Warning>,
    pub report: DcaReport,
    /// Per-cell sampler diagnostics (survival mode).
    #[serde(default)]
    pub diagnostics: Vec<SurvivalCellInfo>,
}

impl ReportDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the JSON document.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

/// One row of the long-format CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub threshold: Option<f64>,
    pub strategy: String,
    pub statistic: String,
    pub value: Option<f64>,
}

impl LongRow {
    pub fn new(threshold: Option<f64>, strategy: impl Into<String>, statistic: impl Into<String>, value: Option<f64>) -> Self {
        LongRow {
            threshold,
            strategy: strategy.into(),
            statistic: statistic.into(),
            value,
        }
    }
}

/// Writes `threshold,strategy,statistic,value` rows. Numbers use the
/// shortest representation that parses back to the same `f64`; missing
/// values are empty fields.
pub fn write_long_csv(rows: &[LongRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "strategy", "statistic", "value"])?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([fmt(r.threshold), r.strategy.clone(), r.statistic.clone(), fmt(r.value)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_long_csv(reader: impl Read) -> Result<Vec<LongRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_number(0, "value", s).map(Some)
        }
    };
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok(LongRow {
                threshold: opt(&r[0])?,
                strategy: r[1].to_string(),
                statistic: r[2].to_string(),
                value: opt(&r[3])?,
            })
        })
        .collect()
}

/// Flattens a report into long rows. Per-threshold EVPI uses the
/// strategy name `all`; pairwise rows use `s1 vs s2`.
pub fn report_rows(report: &DcaReport) -> Vec<LongRow> {
    let mut rows = Vec::new();
    for c in &report.cells {
        let t = Some(c.threshold);
        let mut push = |stat: &str, v: Option<f64>| rows.push(LongRow::new(t, &c.strategy, stat, v));
        push("nb_mean", Some(c.nb_mean));
        push("nb_median", Some(c.nb_median));
        push("nb_lo", Some(c.nb_lo));
        push("nb_hi", Some(c.nb_hi));
        push("p_useful", c.p_useful);
        push("p_best", Some(c.p_best));
        push("delta_best_competitor_mean", Some(c.delta_best_competitor.mean));
        push("delta_best_competitor_lo", Some(c.delta_best_competitor.lo));
        push("delta_best_competitor_hi", Some(c.delta_best_competitor.hi));
        push("delta_treat_all_mean", c.delta_treat_all.map(|d| d.mean));
        push("delta_treat_all_lo", c.delta_treat_all.map(|d| d.lo));
        push("delta_treat_all_hi", c.delta_treat_all.map(|d| d.hi));
    }
    for (&t, &e) in report.thresholds.iter().zip(&report.evpi) {
        rows.push(LongRow::new(Some(t), "all", "evpi", Some(e)));
    }
    for p in &report.pairwise {
        let name = format!("{} vs {}", p.s1, p.s2);
        let t = Some(p.threshold);
        rows.push(LongRow::new(t, &name, "pairwise_margin", Some(p.margin)));
        rows.push(LongRow::new(t, &name, "pairwise_probability", Some(p.probability)));
        rows.push(LongRow::new(t, &name, "pairwise_delta_mean", Some(p.delta.mean)));
        rows.push(LongRow::new(t, &name, "pairwise_delta_lo", Some(p.delta.lo)));
        rows.push(LongRow::new(t, &name, "pairwise_delta_hi", Some(p.delta.hi)));
    }
    rows
}
