//! End-to-end analysis: priors, posterior, net-benefit draws, summaries.

use crate::binary::{self, external_prevalence};
use crate::error::{DcaError, Result};
use crate::interrogation::summarize;
use crate::io::{AnalysisConfig, Dataset, Mode, ReportDocument, FORMAT_VERSION, TOOL_NAME, TOOL_VERSION};
use crate::survival::fit_survival;

/// Runs the configured analysis on `dataset`. Output depends on the
/// configuration and the data only, never on the thread count.
pub fn run_analysis(config: &AnalysisConfig, dataset: &Dataset) -> Result<ReportDocument> {
    config.validate()?;
    let grid = config.grid()?;
    let pairwise = config.pairwise_requests()?;
    let (cube, warnings, diagnostics, tau) = match (config.mode, dataset) {
        (Mode::Binary, Dataset::Binary(data)) => {
            let priors = config
                .prior
                .clone()
                .unwrap_or_default()
                .resolve(&grid, &data.strategies())?;
            let mut post = binary::fit(data, &grid, &priors)?;
            if let Some(e) = config.external_prevalence {
                post = external_prevalence(&post, e.diseased, e.healthy());
            }
            let cube = binary::sample_joint(&post, config.draws, config.seed)?;
            (cube, post.warnings, Vec::new(), None)
        }
        (Mode::Survival, Dataset::Survival(data)) => {
            let prior = config.survival_prior.unwrap_or_default();
            let fit = fit_survival(data, &grid, &prior, &config.mcmc_config(), config.seed)?;
            (fit.cube, fit.warnings, fit.cells, Some(data.tau()))
        }
        _ => {
            return Err(DcaError::Config(
                "dataset kind does not match the configured mode".into(),
            ))
        }
    };
    let report = summarize(&cube, config.level, &pairwise)?;
    Ok(ReportDocument {
        format_version: FORMAT_VERSION,
        tool: TOOL_NAME.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        mode: config.mode,
        config_hash: config.hash(),
        seed: config.seed,
        records: dataset.len(),
        events: dataset.events(),
        tau,
        warnings,
        report,
        diagnostics,
    })
}
