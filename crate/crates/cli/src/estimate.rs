//! The `estimate` subcommand: bounds, covariance, and confidence
//! interval for one or more estimands on a user-supplied dataset.

use std::collections::HashMap;
use std::io::Write;

use carbounds::ate::{ate_bounds, ate_variance, TauMap};
use carbounds::att_atu::{att_bounds, att_variance, atu_bounds, atu_variance, MixedSource};
use carbounds::car::MechanismKind;
use carbounds::strata::{compute_cell_stats, CellStats};
use carbounds::stoye::confidence_interval;
use carbounds::{BoundsEstimate, Dataset, EstimandKind, ProbSource};
use serde::Serialize;

use crate::io::CliError;

/// Estimator variant requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantChoice {
    /// Per-estimand default: sample frequencies for the ATE, target
    /// numerator with sample denominators for the ATT and ATU.
    Recommended,
    Sample,
    Target,
    TargetSample,
    SampleSample,
}

impl VariantChoice {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.to_ascii_lowercase().as_str() {
            "recommended" => Ok(VariantChoice::Recommended),
            "sample" => Ok(VariantChoice::Sample),
            "target" => Ok(VariantChoice::Target),
            "target-sample" | "target/sample" => Ok(VariantChoice::TargetSample),
            "sample-sample" | "sample/sample" => Ok(VariantChoice::SampleSample),
            other => Err(CliError::Input(format!(
                "unknown variant {other:?}; expected recommended, sample, target, target-sample, or sample-sample"
            ))),
        }
    }
}

/// Parses an estimand list: `ate`, `att`, `atu`, or `all`.
pub fn parse_estimands(texts: &[String]) -> Result<Vec<EstimandKind>, CliError> {
    let mut kinds = Vec::new();
    for text in texts {
        match text.to_ascii_lowercase().as_str() {
            "ate" => kinds.push(EstimandKind::Ate),
            "att" => kinds.push(EstimandKind::Att),
            "atu" => kinds.push(EstimandKind::Atu),
            "all" => kinds.extend([EstimandKind::Ate, EstimandKind::Att, EstimandKind::Atu]),
            other => {
                return Err(CliError::Input(format!(
                    "unknown estimand {other:?}; expected ate, att, atu, or all"
                )))
            }
        }
    }
    kinds.dedup();
    if kinds.is_empty() {
        return Err(CliError::Input("no estimand requested".into()));
    }
    Ok(kinds)
}

/// One estimand's results, flat so it serializes cleanly to CSV rows
/// and JSON objects with identical numbers.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimand: String,
    pub variant: String,
    pub n: usize,
    pub y_low: f64,
    pub y_high: f64,
    pub set_lower: f64,
    pub set_upper: f64,
    pub g_hat: f64,
    pub var_lower: f64,
    pub var_upper: f64,
    pub covariance: f64,
    pub alpha: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

fn variant_label(bounds: &BoundsEstimate) -> String {
    match bounds.kind {
        EstimandKind::Ate => bounds.source_numerator.tag().to_string(),
        _ => format!(
            "{}/{}",
            bounds.source_numerator.tag(),
            bounds.source_denominator.tag()
        ),
    }
}

/// Resolves sources, runs the estimator pipeline, and packages the
/// report for a single estimand.
#[allow(clippy::too_many_arguments)]
pub fn run_estimand(
    kind: EstimandKind,
    choice: VariantChoice,
    dataset: &Dataset,
    stats: &CellStats,
    target_map: Option<&HashMap<String, f64>>,
    mechanism: Option<MechanismKind>,
    alpha: f64,
) -> Result<EstimateReport, CliError> {
    let targets = || -> Result<ProbSource, CliError> {
        let map = target_map.ok_or_else(|| {
            CliError::Input(format!(
                "{kind} with this variant weights by target probabilities; pass --target-probs FILE"
            ))
        })?;
        Ok(ProbSource::target_from_labels(map, dataset)?)
    };
    let tau_map = |why: &str| -> Result<TauMap, CliError> {
        match mechanism {
            Some(MechanismKind::Srs) => Ok(TauMap::srs(dataset.num_strata())),
            Some(MechanismKind::Sbr) => Ok(TauMap::sbr(dataset.num_strata())),
            None => Err(CliError::Input(format!(
                "{why}; pass --mechanism srs or --mechanism sbr"
            ))),
        }
    };

    let (bounds, cov) = match kind {
        EstimandKind::Ate => {
            let source = match choice {
                VariantChoice::Recommended | VariantChoice::Sample => ProbSource::SampleFrequency,
                VariantChoice::Target => targets()?,
                VariantChoice::TargetSample | VariantChoice::SampleSample => {
                    return Err(CliError::Input(
                        "the ATE uses one probability source; choose sample or target".into(),
                    ))
                }
            };
            let bounds = ate_bounds(dataset, stats, &source)?;
            let tau = match &source {
                // Sample-frequency weighting is efficient under any
                // mechanism; no imbalance correction applies.
                ProbSource::SampleFrequency => None,
                ProbSource::Target(_) => Some(tau_map(
                    "the target-weighted ATE variance depends on the randomization mechanism",
                )?),
            };
            let cov = ate_variance(stats, &bounds, &source, tau.as_ref())?;
            (bounds, cov)
        }
        EstimandKind::Att => {
            let (source, needs_tau) = match choice {
                VariantChoice::Recommended | VariantChoice::Target | VariantChoice::TargetSample => {
                    let ProbSource::Target(probs) = targets()? else {
                        unreachable!("targets() always returns ProbSource::Target")
                    };
                    (MixedSource::recommended(probs), false)
                }
                VariantChoice::Sample | VariantChoice::SampleSample => {
                    (MixedSource::sample_sample(), true)
                }
            };
            let bounds = att_bounds(dataset, stats, &source)?;
            let tau = if needs_tau {
                Some(tau_map(
                    "the sample/sample ATT variance depends on the randomization mechanism",
                )?)
            } else {
                None
            };
            let cov = att_variance(stats, &bounds, &source, tau.as_ref())?;
            (bounds, cov)
        }
        EstimandKind::Atu => {
            match choice {
                VariantChoice::Recommended | VariantChoice::Target | VariantChoice::TargetSample => {}
                VariantChoice::Sample | VariantChoice::SampleSample => {
                    return Err(CliError::Input(
                        "the ATU is only defined with target probabilities in the numerator; \
                         choose recommended, target, or target-sample"
                            .into(),
                    ))
                }
            }
            let source = targets()?;
            let bounds = atu_bounds(dataset, stats, &source)?;
            let cov = atu_variance(stats, &bounds, &source)?;
            (bounds, cov)
        }
    };

    let ci = confidence_interval(&bounds, &cov, alpha)?;
    Ok(EstimateReport {
        estimand: kind.to_string(),
        variant: variant_label(&bounds),
        n: bounds.n,
        y_low: dataset.y_low,
        y_high: dataset.y_high,
        set_lower: bounds.lower,
        set_upper: bounds.upper,
        g_hat: bounds.g_hat,
        var_lower: cov.var_low,
        var_upper: cov.var_high,
        covariance: cov.cov,
        alpha,
        ci_lower: ci.lower,
        ci_upper: ci.upper,
        c_lower: ci.c_low,
        c_upper: ci.c_high,
    })
}

/// Runs the full estimate pipeline over the requested estimands.
pub fn run_all(
    kinds: &[EstimandKind],
    choice: VariantChoice,
    dataset: &Dataset,
    target_map: Option<&HashMap<String, f64>>,
    mechanism: Option<MechanismKind>,
    alpha: f64,
) -> Result<Vec<EstimateReport>, CliError> {
    let stats = compute_cell_stats(dataset)?;
    kinds
        .iter()
        .map(|&kind| run_estimand(kind, choice, dataset, &stats, target_map, mechanism, alpha))
        .collect()
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.to_ascii_lowercase().as_str() {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(CliError::Input(format!(
                "unknown format {other:?}; expected text, json, or csv"
            ))),
        }
    }
}

/// Serializes reports: machine formats carry full-precision numbers
/// (shortest round-trip representation); text mode rounds to three
/// decimals for reading.
pub fn write_reports<W: Write>(
    mut writer: W,
    reports: &[EstimateReport],
    format: ReportFormat,
) -> Result<(), CliError> {
    let io_wrap = |source: std::io::Error| CliError::Io {
        path: "<writer>".into(),
        source,
    };
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, reports)
                .map_err(|e| CliError::Input(format!("JSON serialization failed: {e}")))?;
            writeln!(writer).map_err(io_wrap)?;
        }
        ReportFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            for report in reports {
                wtr.serialize(report)?;
            }
            wtr.flush().map_err(io_wrap)?;
        }
        ReportFormat::Text => {
            for report in reports {
                let level = 100.0 * (1.0 - report.alpha);
                writeln!(
                    writer,
                    "{} (variant: {}, n = {}, outcome support [{:.3}, {:.3}])",
                    report.estimand, report.variant, report.n, report.y_low, report.y_high
                )
                .map_err(io_wrap)?;
                writeln!(
                    writer,
                    "  {:<20}[{:.3}, {:.3}]",
                    "estimated set", report.set_lower, report.set_upper
                )
                .map_err(io_wrap)?;
                writeln!(
                    writer,
                    "  {:<20}[{:.3}, {:.3}]",
                    format!("{level:.1}% CI"),
                    report.ci_lower,
                    report.ci_upper
                )
                .map_err(io_wrap)?;
                writeln!(
                    writer,
                    "  endpoint covariance var_lower = {:.3}, var_upper = {:.3}, cov = {:.3}",
                    report.var_lower, report.var_upper, report.covariance
                )
                .map_err(io_wrap)?;
                writeln!(
                    writer,
                    "  critical values    c_lower = {:.3}, c_upper = {:.3}",
                    report.c_lower, report.c_upper
                )
                .map_err(io_wrap)?;
                if report.estimand != "ATE" {
                    writeln!(writer, "  subpopulation share G = {:.3}", report.g_hat)
                        .map_err(io_wrap)?;
                }
                writeln!(writer).map_err(io_wrap)?;
            }
        }
    }
    Ok(())
}
