//! `bdca`: Bayesian decision curve analysis from the command line.
//!
//! Exit codes: 0 on success (warnings included), 2 for invalid input or
//! configuration, 3 for runtime failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dca_core::binary::BinaryPriorTable;
use dca_core::comparators::{bootstrap_dca, km_dca, BootstrapConfig};
use dca_core::io::{
    ingest_binary_csv, ingest_survival_csv, report_rows, write_long_csv, AnalysisConfig, ExternalPrevalence,
    GridSpec, LongRow, Mode, PairwiseSpec,
};
use dca_core::model::{Strategy, ThresholdGrid, Warning};
use dca_core::prior::{prior_predictive, BinaryPriorConfig, DrawSummary};
use dca_core::simulation::{
    binary_setting, run_binary_study, run_evpi_monotonicity, run_survival_study, survival_setting, EvpiConfig,
    ExperimentReport, StudyConfig,
};
use dca_core::survival::{McmcConfig, SurvPriorSpec};
use dca_core::{analysis::run_analysis, DcaError, Result};

#[derive(Parser)]
#[command(name = "bdca", version, about = "Bayesian decision curve analysis")]
struct Cli {
    /// Worker threads (1 gives a fully sequential run).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior decision curve analysis.
    #[command(subcommand)]
    Dca(DcaCommand),
    /// Summarize net benefit implied by the priors alone.
    PriorCheck(PriorCheckArgs),
    /// Simulation studies.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Frequentist comparators.
    #[command(subcommand)]
    Compare(CompareCommand),
}

#[derive(Subcommand)]
enum DcaCommand {
    Binary {
        #[command(flatten)]
        data: BinaryData,
        #[command(flatten)]
        opts: AnalysisOpts,
        /// Prevalence from an external cohort, `D:N`.
        #[arg(long)]
        external_prevalence: Option<String>,
        #[command(flatten)]
        out: OutputOpts,
    },
    Survival {
        #[command(flatten)]
        data: SurvivalData,
        #[command(flatten)]
        opts: AnalysisOpts,
        /// MCMC chains.
        #[arg(long)]
        chains: Option<usize>,
        #[command(flatten)]
        out: OutputOpts,
    },
}

#[derive(Args)]
struct BinaryData {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Outcome column (0/1).
    #[arg(long)]
    outcome: Option<String>,
    /// Strategy columns, comma separated (default: every other column).
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
}

#[derive(Args)]
struct SurvivalData {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    time: Option<String>,
    /// Event indicator column (1 = event, 0 = censored).
    #[arg(long)]
    event: Option<String>,
    /// Prediction horizon, in the units of the time column.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
}

#[derive(Args)]
struct AnalysisOpts {
    /// Analysis configuration file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `lo:hi:step` or a comma-separated list.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Prior file (TOML).
    #[arg(long)]
    prior: Option<PathBuf>,
    /// `s1,s2[,c]`: probability that s1 beats s2 by more than c. Repeatable.
    #[arg(long)]
    pairwise: Vec<String>,
    /// Credible / confidence level.
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Args)]
struct OutputOpts {
    /// Output file (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct PriorCheckArgs {
    /// Model strategies, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "model")]
    strategies: Vec<String>,
    /// Binary-test strategies, comma separated.
    #[arg(long, value_delimiter = ',')]
    tests: Vec<String>,
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value = "0:0.5:0.01")]
    thresholds: String,
    #[arg(long, default_value_t = 4000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    out: OutputOpts,
}

#[derive(Args)]
struct StudyOpts {
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// Expected number of events per simulated sample.
    #[arg(long, default_value_t = 100.0)]
    events: f64,
    #[arg(long, default_value = "0.01,0.05,0.1,0.25,0.5,0.75")]
    thresholds: String,
    #[arg(long, default_value_t = 2_000_000)]
    population: usize,
    #[arg(long, default_value_t = 4000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Bayesian against bootstrap coverage for a binary setting.
    Binary {
        #[arg(long, default_value_t = 0.85)]
        auc: f64,
        #[arg(long, default_value_t = 0.3)]
        prevalence: f64,
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[command(flatten)]
        study: StudyOpts,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Bayesian Weibull against Kaplan-Meier for a survival setting.
    Survival {
        #[arg(long = "c-statistic", default_value_t = 0.6)]
        c_statistic: f64,
        /// One-year survival label of the setting.
        #[arg(long, default_value_t = 0.1)]
        survival: f64,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 1000)]
        warmup: usize,
        #[command(flatten)]
        study: StudyOpts,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// EVPI against validation sample size, uniform and informative priors.
    Evpi {
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value = "0.01,0.02,0.05,0.1")]
        thresholds: String,
        #[arg(long, default_value_t = 4000)]
        draws: usize,
        #[arg(long, default_value_t = 2_000_000)]
        population: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutputOpts,
    },
}

#[derive(Subcommand)]
enum CompareCommand {
    /// Point net benefit with percentile bootstrap intervals.
    Bootstrap {
        #[command(flatten)]
        data: BinaryData,
        #[arg(long, default_value = "0:0.5:0.01")]
        thresholds: String,
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Kaplan-Meier net benefit at the horizon.
    Km {
        #[command(flatten)]
        data: SurvivalData,
        #[arg(long, default_value = "0:0.5:0.01")]
        thresholds: String,
        #[command(flatten)]
        out: OutputOpts,
    },
}

fn grid_spec(s: &str) -> Result<GridSpec> {
    if s.contains(':') {
        return Ok(GridSpec::Range(s.to_string()));
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| DcaError::InvalidGrid(format!("cannot parse `{v}` in `{s}`")))
        })
        .collect::<Result<Vec<_>>>()
        .map(GridSpec::List)
}

fn grid(s: &str) -> Result<ThresholdGrid> {
    grid_spec(s)?.build()
}

fn label<T: Serialize>(x: &T) -> String {
    match serde_json::to_value(x) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn emit(out: &OutputOpts, json: impl FnOnce() -> Result<String>, rows: impl FnOnce() -> Vec<LongRow>) -> Result<()> {
    let mut bytes = Vec::new();
    match out.format {
        Format::Json => {
            bytes.extend_from_slice(json()?.as_bytes());
            bytes.push(b'\n');
        }
        Format::Csv => write_long_csv(&rows(), &mut bytes)?,
    }
    match &out.output {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn pretty<T: Serialize>(x: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(x)?)
}

fn report_warnings(warnings: &[Warning]) {
    for w in warnings {
        eprintln!("warning: {}", w.message);
    }
}

fn base_config(mode: Mode, opts: &AnalysisOpts) -> Result<AnalysisConfig> {
    let mut cfg = match &opts.config {
        Some(path) => AnalysisConfig::from_file(path)?,
        None => AnalysisConfig::new(mode),
    };
    if cfg.mode != mode {
        return Err(DcaError::Config(format!(
            "configuration file is for {} mode",
            label(&cfg.mode)
        )));
    }
    if let Some(t) = &opts.thresholds {
        cfg.thresholds = grid_spec(t)?;
    }
    if let Some(d) = opts.draws {
        cfg.draws = d;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(l) = opts.level {
        cfg.level = l;
    }
    if !opts.pairwise.is_empty() {
        cfg.pairwise = opts.pairwise.iter().cloned().map(PairwiseSpec::Text).collect();
    }
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn run_dca(cmd: DcaCommand) -> Result<()> {
    let (cfg, out) = match cmd {
        DcaCommand::Binary {
            data,
            opts,
            external_prevalence,
            out,
        } => {
            let mut cfg = base_config(Mode::Binary, &opts)?;
            if let Some(p) = &opts.prior {
                cfg.prior = Some(BinaryPriorConfig::from_toml(&read_text(p)?)?);
            }
            if let Some(e) = &external_prevalence {
                cfg.external_prevalence = Some(ExternalPrevalence::parse(e)?);
            }
            cfg.data.input = data.input.or(cfg.data.input);
            cfg.data.outcome = data.outcome.or(cfg.data.outcome);
            if !data.strategies.is_empty() {
                cfg.data.strategies = data.strategies;
            }
            (cfg, out)
        }
        DcaCommand::Survival {
            data,
            opts,
            chains,
            out,
        } => {
            let mut cfg = base_config(Mode::Survival, &opts)?;
            if let Some(p) = &opts.prior {
                cfg.survival_prior = Some(SurvPriorSpec::from_toml(&read_text(p)?)?);
            }
            if let Some(c) = chains {
                cfg.chains = c;
            }
            cfg.tau = data.tau.or(cfg.tau);
            cfg.data.input = data.input.or(cfg.data.input);
            cfg.data.time = data.time.or(cfg.data.time);
            cfg.data.event = data.event.or(cfg.data.event);
            if !data.strategies.is_empty() {
                cfg.data.strategies = data.strategies;
            }
            (cfg, out)
        }
    };
    cfg.validate()?;
    let dataset = dca_core::io::load_dataset(&cfg)?;
    let doc = run_analysis(&cfg, &dataset)?;
    report_warnings(&doc.warnings);
    emit(&out, || doc.to_json(), || report_rows(&doc.report))
}

fn summary_rows(name: &str, s: &DrawSummary, threshold: Option<f64>, stat: &str) -> Vec<LongRow> {
    vec![
        LongRow::new(threshold, name, format!("{stat}_mean"), Some(s.mean)),
        LongRow::new(threshold, name, format!("{stat}_lo"), Some(s.lo)),
        LongRow::new(threshold, name, format!("{stat}_median"), Some(s.median)),
        LongRow::new(threshold, name, format!("{stat}_hi"), Some(s.hi)),
    ]
}

fn run_prior_check(args: PriorCheckArgs) -> Result<()> {
    let grid = grid(&args.thresholds)?;
    let mut strategies: Vec<Strategy> = args.strategies.iter().map(Strategy::model).collect();
    strategies.extend(args.tests.iter().map(Strategy::test));
    let table: BinaryPriorTable = match &args.prior {
        Some(p) => BinaryPriorConfig::from_toml(&read_text(p)?)?.resolve(&grid, &strategies)?,
        None => BinaryPriorConfig::default().resolve(&grid, &strategies)?,
    };
    let pp = prior_predictive(&grid, strategies, &table, args.draws, args.seed, args.level)?;
    emit(
        &args.out,
        || pretty(&serde_json::json!({ "prevalence": pp.prevalence, "rows": pp.rows })),
        || {
            let mut rows = summary_rows("all", &pp.prevalence, None, "prevalence");
            for r in &pp.rows {
                let t = Some(r.threshold);
                if let Some(s) = &r.sensitivity {
                    rows.extend(summary_rows(&r.strategy, s, t, "sensitivity"));
                }
                if let Some(s) = &r.specificity {
                    rows.extend(summary_rows(&r.strategy, s, t, "specificity"));
                }
                rows.extend(summary_rows(&r.strategy, &r.net_benefit, t, "nb"));
            }
            rows
        },
    )
}

fn experiment_rows(r: &ExperimentReport) -> Vec<LongRow> {
    let mut rows = Vec::new();
    for s in &r.summaries {
        let (t, m) = (Some(s.threshold), label(&s.method));
        let mut push = |stat: &str, v: Option<f64>| rows.push(LongRow::new(t, &m, stat, v));
        push("truth", Some(s.truth));
        push("runs", Some(s.runs as f64));
        push("coverage", s.coverage);
        push("mean_width", s.mean_width);
        push("zero_width_fraction", s.zero_width_fraction);
        push("mean_error", s.mean_error);
        push("error_q05", s.error_q05);
        push("error_median", s.error_median);
        push("error_q95", s.error_q95);
        push("mape", s.mape);
        push("mean_seconds", Some(s.mean_seconds));
    }
    rows
}

fn study_config(s: &StudyOpts) -> Result<StudyConfig> {
    Ok(StudyConfig {
        runs: s.runs,
        events_target: s.events,
        thresholds: grid(&s.thresholds)?.values(),
        population_size: s.population,
        draws: s.draws,
        level: s.level,
        seed: s.seed,
        ..StudyConfig::default()
    })
}

fn run_simulate(cmd: SimulateCommand) -> Result<()> {
    match cmd {
        SimulateCommand::Binary {
            auc,
            prevalence,
            replicates,
            study,
            out,
        } => {
            let cfg = StudyConfig {
                bootstrap_replicates: replicates,
                ..study_config(&study)?
            };
            let report = run_binary_study(&binary_setting(auc, prevalence)?, &cfg)?;
            emit(&out, || pretty(&report), || experiment_rows(&report))
        }
        SimulateCommand::Survival {
            c_statistic,
            survival,
            chains,
            warmup,
            study,
            out,
        } => {
            let mut cfg = study_config(&study)?;
            cfg.mcmc = McmcConfig {
                chains,
                warmup,
                keep: study.draws.div_ceil(chains.max(1)),
                ..McmcConfig::default()
            };
            let report = run_survival_study(&survival_setting(c_statistic, survival)?, &cfg)?;
            emit(&out, || pretty(&report), || experiment_rows(&report))
        }
        SimulateCommand::Evpi {
            sizes,
            repeats,
            thresholds,
            draws,
            population,
            seed,
            out,
        } => {
            let cfg = EvpiConfig {
                sizes,
                repeats,
                thresholds: grid(&thresholds)?.values(),
                draws,
                population_size: population,
                seed,
            };
            let rows = run_evpi_monotonicity(&cfg)?;
            emit(
                &out,
                || pretty(&rows),
                || {
                    rows.iter()
                        .flat_map(|r| {
                            let name = format!("{}:{}", label(&r.regime), r.size);
                            [
                                LongRow::new(Some(r.threshold), &name, "evpi_median", Some(r.median)),
                                LongRow::new(Some(r.threshold), &name, "evpi_mean", Some(r.mean)),
                            ]
                        })
                        .collect()
                },
            )
        }
    }
}

fn run_compare(cmd: CompareCommand) -> Result<()> {
    match cmd {
        CompareCommand::Bootstrap {
            data,
            thresholds,
            replicates,
            seed,
            level,
            out,
        } => {
            let input = data.input.ok_or_else(|| DcaError::Config("--input is required".into()))?;
            let outcome = data.outcome.ok_or_else(|| DcaError::Config("--outcome is required".into()))?;
            let dataset = ingest_binary_csv(&input, &outcome, &data.strategies)?;
            let cfg = BootstrapConfig {
                replicates,
                seed,
                level,
            };
            let result = bootstrap_dca(&dataset, &grid(&thresholds)?, &cfg)?;
            emit(
                &out,
                || {
                    let doc: Vec<_> = result
                        .iter()
                        .map(|(name, rows)| serde_json::json!({ "strategy": name, "rows": rows }))
                        .collect();
                    pretty(&doc)
                },
                || {
                    let mut rows = Vec::new();
                    for (name, rs) in &result {
                        for r in rs {
                            let t = Some(r.threshold);
                            rows.push(LongRow::new(t, name, "nb", Some(r.point)));
                            rows.push(LongRow::new(t, name, "nb_lo", Some(r.lo)));
                            rows.push(LongRow::new(t, name, "nb_hi", Some(r.hi)));
                        }
                    }
                    rows
                },
            )
        }
        CompareCommand::Km { data, thresholds, out } => {
            let need = |v: Option<String>, flag: &str| v.ok_or_else(|| DcaError::Config(format!("--{flag} is required")));
            let input = data.input.ok_or_else(|| DcaError::Config("--input is required".into()))?;
            let tau = data.tau.ok_or_else(|| DcaError::Config("--tau is required".into()))?;
            let dataset = ingest_survival_csv(
                &input,
                &need(data.time, "time")?,
                &need(data.event, "event")?,
                &data.strategies,
                tau,
            )?;
            let (rows, warnings) = km_dca(&dataset, &grid(&thresholds)?)?;
            report_warnings(&warnings);
            emit(
                &out,
                || pretty(&serde_json::json!({ "rows": rows, "warnings": warnings })),
                || {
                    let mut out = Vec::new();
                    for r in &rows {
                        let t = Some(r.threshold);
                        out.push(LongRow::new(t, &r.strategy, "positives", Some(r.positives as f64)));
                        out.push(LongRow::new(t, &r.strategy, "survival", r.survival));
                        out.push(LongRow::new(t, &r.strategy, "nb", r.net_benefit));
                    }
                    out
                },
            )
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(DcaError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| DcaError::Numerical(e.to_string()))?;
    }
    match cli.command {
        Command::Dca(c) => run_dca(c),
        Command::PriorCheck(a) => run_prior_check(a),
        Command::Simulate(c) => run_simulate(c),
        Command::Compare(c) => run_compare(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
