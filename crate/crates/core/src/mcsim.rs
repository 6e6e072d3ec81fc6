//! Monte Carlo designs and rejection-frequency studies.
//!
//! Each design draws stratified samples with three latent compliance
//! types — compliers (take treatment iff assigned), always-takers, and
//! never-takers — and Beta-distributed outcomes whose shape parameters
//! sum to 10, so a cell with parameter α has mean α/10 on [0, 1]. The
//! identified-set endpoints for every estimand then have closed forms,
//! which the studies use both to place test points and to check
//! estimator consistency.

use crate::ate::{ate_bounds, ate_variance, TauMap};
use crate::att_atu::{att_bounds, att_variance, atu_bounds, atu_variance, MixedSource};
use crate::car::{assign, stream, Mechanism, MechanismKind, StreamPurpose};
use crate::domain::{
    BoundsEstimate, ConfidenceInterval, CovMatrix2, Dataset, Error, EstimandKind, ProbSource,
    Result,
};
use crate::stoye::confidence_interval;
use crate::strata::compute_cell_stats;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

/// Latent compliance type of a simulated unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ComplianceType {
    Complier,
    AlwaysTaker,
    NeverTaker,
}

/// A simulation design: stratum shares, compliance-type shares, Beta
/// outcome parameters per stratum (each pairs with 10 − α), and target
/// assignment probabilities. Outcomes live on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    pub name: String,
    pub stratum_probs: Vec<f64>,
    pub complier_prob: f64,
    pub always_taker_prob: f64,
    pub never_taker_prob: f64,
    /// Complier outcome parameter per stratum, untreated arm.
    pub alpha_c0: Vec<f64>,
    /// Complier outcome parameter per stratum, treated arm.
    pub alpha_c1: Vec<f64>,
    /// Always-taker treated-outcome parameter per stratum.
    pub alpha_at1: Vec<f64>,
    /// Never-taker untreated-outcome parameter per stratum.
    pub alpha_nt0: Vec<f64>,
    pub pi_a: Vec<f64>,
    pub y_low: f64,
    pub y_high: f64,
}

const BETA_TOTAL: f64 = 10.0;

impl Design {
    /// Homogeneous strata: every stratum shares the same outcome
    /// parameters and a balanced assignment target.
    pub fn design1() -> Design {
        Design {
            name: "D1".into(),
            stratum_probs: vec![0.25; 4],
            complier_prob: 0.85,
            always_taker_prob: 0.05,
            never_taker_prob: 0.10,
            alpha_c0: vec![2.0; 4],
            alpha_c1: vec![8.0; 4],
            alpha_at1: vec![3.0; 4],
            alpha_nt0: vec![5.0; 4],
            pi_a: vec![0.5; 4],
            y_low: 0.0,
            y_high: 1.0,
        }
    }

    /// Stratum-varying outcome parameters with a balanced target.
    pub fn design2() -> Design {
        let ramp = |base: f64| -> Vec<f64> {
            (0..4).map(|i| base + i as f64 / 3.0).collect()
        };
        Design {
            name: "D2".into(),
            stratum_probs: vec![0.25; 4],
            complier_prob: 0.85,
            always_taker_prob: 0.05,
            never_taker_prob: 0.10,
            alpha_c0: ramp(3.0),
            alpha_c1: ramp(4.0),
            alpha_at1: ramp(5.0),
            alpha_nt0: ramp(2.0),
            pi_a: vec![0.5; 4],
            y_low: 0.0,
            y_high: 1.0,
        }
    }

    /// The stratum-varying design with unbalanced assignment targets.
    pub fn design3() -> Design {
        Design {
            name: "D3".into(),
            pi_a: vec![0.3, 0.7, 0.6, 0.8],
            ..Design::design2()
        }
    }

    pub fn by_name(name: &str) -> Result<Design> {
        match name.to_ascii_uppercase().as_str() {
            "D1" | "1" => Ok(Design::design1()),
            "D2" | "2" => Ok(Design::design2()),
            "D3" | "3" => Ok(Design::design3()),
            other => Err(Error::InvalidConfig(format!("unknown design '{other}'"))),
        }
    }

    pub fn num_strata(&self) -> usize {
        self.stratum_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_strata();
        if k == 0 {
            return Err(Error::InvalidConfig("design has no strata".into()));
        }
        for v in [&self.alpha_c0, &self.alpha_c1, &self.alpha_at1, &self.alpha_nt0, &self.pi_a] {
            if v.len() != k {
                return Err(Error::InvalidConfig(
                    "design vectors must all have one entry per stratum".into(),
                ));
            }
        }
        let psum: f64 = self.stratum_probs.iter().sum();
        if self.stratum_probs.iter().any(|&p| p <= 0.0) || (psum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "stratum probabilities must be positive and sum to 1".into(),
            ));
        }
        let tsum = self.complier_prob + self.always_taker_prob + self.never_taker_prob;
        if [self.complier_prob, self.always_taker_prob, self.never_taker_prob]
            .iter()
            .any(|&p| p < 0.0)
            || (tsum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(
                "compliance-type probabilities must be nonnegative and sum to 1".into(),
            ));
        }
        for alphas in [&self.alpha_c0, &self.alpha_c1, &self.alpha_at1, &self.alpha_nt0] {
            if alphas.iter().any(|&a| !(a > 0.0 && a < BETA_TOTAL)) {
                return Err(Error::InvalidConfig(format!(
                    "outcome parameters must lie strictly inside (0, {BETA_TOTAL})"
                )));
            }
        }
        for &p in &self.pi_a {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(
                    "assignment targets must lie strictly inside (0, 1)".into(),
                ));
            }
        }
        if !(self.y_high > self.y_low) {
            return Err(Error::InvalidConfig("outcome support is degenerate".into()));
        }
        Ok(())
    }

    /// Population share of units that take treatment when assigned.
    fn pi_d1(&self) -> f64 {
        self.complier_prob + self.always_taker_prob
    }

    /// Population share of units that take treatment when unassigned.
    fn pi_d0(&self) -> f64 {
        self.always_taker_prob
    }

    /// Population mean outcome in the (d, a) cell of stratum s.
    fn cell_mean(&self, d: u8, a: u8, s: usize) -> f64 {
        let (pc, pat, pnt) = (self.complier_prob, self.always_taker_prob, self.never_taker_prob);
        match (d, a) {
            (1, 1) => {
                (pc * self.alpha_c1[s] + pat * self.alpha_at1[s]) / (BETA_TOTAL * (pc + pat))
            }
            (1, 0) => self.alpha_at1[s] / BETA_TOTAL,
            (0, 1) => self.alpha_nt0[s] / BETA_TOTAL,
            (0, 0) => {
                (pc * self.alpha_c0[s] + pnt * self.alpha_nt0[s]) / (BETA_TOTAL * (pc + pnt))
            }
            _ => unreachable!("indicators are binary"),
        }
    }
}

/// Where an estimator's stratum assignment probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SourceKind {
    Target,
    Sample,
}

impl SourceKind {
    fn tag(&self) -> &'static str {
        match self {
            SourceKind::Target => "target",
            SourceKind::Sample => "sample",
        }
    }
}

/// Probability sources for a study's estimator: numerator weights and
/// inverse-probability denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariantSpec {
    pub numerator: SourceKind,
    pub denominator: SourceKind,
}

impl VariantSpec {
    /// One source in both roles (the shape every ATE variant takes).
    pub fn uniform(kind: SourceKind) -> VariantSpec {
        VariantSpec { numerator: kind, denominator: kind }
    }

    pub fn new(numerator: SourceKind, denominator: SourceKind) -> VariantSpec {
        VariantSpec { numerator, denominator }
    }

    /// Row label: single source for ATE/ATU, numerator/denominator pair
    /// for ATT.
    pub fn tag(&self, estimand: EstimandKind) -> String {
        match estimand {
            EstimandKind::Ate => self.numerator.tag().into(),
            EstimandKind::Att => format!("{}/{}", self.numerator.tag(), self.denominator.tag()),
            EstimandKind::Atu => self.numerator.tag().into(),
        }
    }
}

/// Closed-form identified-set endpoints (lower, upper) for an estimand
/// under a design, with assignment at the design's target probabilities.
pub fn analytic_identified_set(design: &Design, estimand: EstimandKind) -> Result<(f64, f64)> {
    design.validate()?;
    let (pd1, pd0) = (design.pi_d1(), design.pi_d0());
    let (yl, yh) = (design.y_low, design.y_high);
    match estimand {
        EstimandKind::Ate => {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (s, &p) in design.stratum_probs.iter().enumerate() {
                let mu11 = design.cell_mean(1, 1, s);
                let mu00 = design.cell_mean(0, 0, s);
                lo += p * (pd1 * mu11 + (1.0 - pd1) * yl - (1.0 - pd0) * mu00 - pd0 * yh);
                hi += p * (pd1 * mu11 + (1.0 - pd1) * yh - (1.0 - pd0) * mu00 - pd0 * yl);
            }
            Ok((lo, hi))
        }
        EstimandKind::Att => {
            let g = analytic_subpop_share(design, EstimandKind::Att)?;
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (s, &p) in design.stratum_probs.iter().enumerate() {
                let pa = design.pi_a[s];
                let b = analytic_bracket(design, s);
                let mu10 = design.cell_mean(1, 0, s);
                lo += p * (pa * b + pd0 * (mu10 - yh));
                hi += p * (pa * b + pd0 * (mu10 - yl));
            }
            Ok((lo / g, hi / g))
        }
        EstimandKind::Atu => {
            let g = analytic_subpop_share(design, EstimandKind::Atu)?;
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (s, &p) in design.stratum_probs.iter().enumerate() {
                let pa = design.pi_a[s];
                let b = analytic_bracket(design, s);
                let mu01 = design.cell_mean(0, 1, s);
                lo += p * ((1.0 - pa) * b + (1.0 - pd1) * (yl - mu01));
                hi += p * ((1.0 - pa) * b + (1.0 - pd1) * (yh - mu01));
            }
            Ok((lo / g, hi / g))
        }
    }
}

/// Population share of the treated (ATT) or untreated (ATU)
/// subpopulation; 1 for the ATE.
pub fn analytic_subpop_share(design: &Design, estimand: EstimandKind) -> Result<f64> {
    design.validate()?;
    let (pd1, pd0) = (design.pi_d1(), design.pi_d0());
    Ok(match estimand {
        EstimandKind::Ate => 1.0,
        EstimandKind::Att => design
            .stratum_probs
            .iter()
            .zip(&design.pi_a)
            .map(|(&p, &pa)| p * (pd1 * pa + pd0 * (1.0 - pa)))
            .sum(),
        EstimandKind::Atu => design
            .stratum_probs
            .iter()
            .zip(&design.pi_a)
            .map(|(&p, &pa)| p * ((1.0 - pd1) * pa + (1.0 - pd0) * (1.0 - pa)))
            .sum(),
    })
}

fn analytic_bracket(design: &Design, s: usize) -> f64 {
    let (pd1, pd0) = (design.pi_d1(), design.pi_d0());
    pd1 * design.cell_mean(1, 1, s) + (1.0 - pd1) * design.cell_mean(0, 1, s)
        - pd0 * design.cell_mean(1, 0, s)
        - (1.0 - pd0) * design.cell_mean(0, 0, s)
}

/// Draw one dataset of size `n` from the design under the mechanism.
/// Replications are keyed by (seed, replication) with separate streams
/// for strata/types, assignment, and outcomes, so results reproduce
/// byte-identically regardless of execution order or thread count.
pub fn simulate_dataset(
    design: &Design,
    mech: &Mechanism,
    n: usize,
    seed: u64,
    replication: u64,
) -> Result<Dataset> {
    design.validate()?;
    if mech.num_strata() != design.num_strata() {
        return Err(Error::InvalidConfig(format!(
            "mechanism covers {} strata but the design has {}",
            mech.num_strata(),
            design.num_strata()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut rng = stream(seed, replication, StreamPurpose::Strata);
    let mut strata = Vec::with_capacity(n);
    let mut types = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut chosen = design.num_strata() - 1;
        for (s, &p) in design.stratum_probs.iter().enumerate() {
            cum += p;
            if u < cum {
                chosen = s;
                break;
            }
        }
        strata.push(chosen);

        let v: f64 = rng.gen();
        let t = if v < design.complier_prob {
            ComplianceType::Complier
        } else if v < design.complier_prob + design.always_taker_prob {
            ComplianceType::AlwaysTaker
        } else {
            ComplianceType::NeverTaker
        };
        types.push(t);
    }

    let mut rng = stream(seed, replication, StreamPurpose::Assignment);
    let a = assign(&strata, mech, &mut rng)?;

    // Beta samplers per stratum for the four realized cells:
    // complier-untreated, complier-treated, always-taker, never-taker.
    let make = |alpha: f64| -> Result<Beta<f64>> {
        Beta::new(alpha, BETA_TOTAL - alpha)
            .map_err(|e| Error::InvalidConfig(format!("invalid outcome parameter: {e}")))
    };
    let mut samplers = Vec::with_capacity(design.num_strata());
    for s in 0..design.num_strata() {
        samplers.push([
            make(design.alpha_c0[s])?,
            make(design.alpha_c1[s])?,
            make(design.alpha_at1[s])?,
            make(design.alpha_nt0[s])?,
        ]);
    }

    let mut rng = stream(seed, replication, StreamPurpose::Outcomes);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let s = strata[i];
        let (d_i, sampler) = match types[i] {
            ComplianceType::Complier => (a[i], &samplers[s][a[i] as usize]),
            ComplianceType::AlwaysTaker => (1, &samplers[s][2]),
            ComplianceType::NeverTaker => (0, &samplers[s][3]),
        };
        d.push(d_i);
        y.push(sampler.sample(&mut rng));
    }

    Dataset::new(y, d, a, strata, design.y_low, design.y_high)
}

/// Configuration of one rejection-frequency study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub design: Design,
    pub mechanism: Mechanism,
    pub estimand: EstimandKind,
    pub variant: VariantSpec,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub test_points: Vec<f64>,
    pub seed: u64,
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.mechanism.num_strata() != self.design.num_strata() {
            return Err(Error::InvalidConfig(
                "mechanism and design stratum counts differ".into(),
            ));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("study needs n >= 2".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("study needs at least one replication".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.test_points.is_empty() {
            return Err(Error::InvalidConfig("study needs at least one test point".into()));
        }
        match (self.estimand, self.variant.numerator, self.variant.denominator) {
            (EstimandKind::Ate, n, d) if n == d => Ok(()),
            (EstimandKind::Ate, _, _) => Err(Error::UnsupportedVariant(
                "ATE uses one probability source in both roles".into(),
            )),
            (EstimandKind::Att, _, SourceKind::Sample) => Ok(()),
            (EstimandKind::Att, _, _) => Err(Error::UnsupportedVariant(
                "ATT denominators use sample frequencies".into(),
            )),
            (EstimandKind::Atu, SourceKind::Target, SourceKind::Sample) => Ok(()),
            (EstimandKind::Atu, _, _) => Err(Error::UnsupportedVariant(
                "ATU pairs target weights with sample-frequency denominators".into(),
            )),
        }
    }
}

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub bounds: BoundsEstimate,
    pub cov: CovMatrix2,
    pub ci: ConfidenceInterval,
    pub rejected: Vec<bool>,
}

/// Simulate, estimate, and test one replication of a study.
pub fn run_replication(config: &StudyConfig, replication: u64) -> Result<RepOutcome> {
    let ds = simulate_dataset(
        &config.design,
        &config.mechanism,
        config.n,
        config.seed,
        replication,
    )?;
    let stats = compute_cell_stats(&ds)?;

    // Target probabilities must follow the dataset's dense stratum ids,
    // which order strata by first appearance, so map them by label.
    let target_source = || -> Result<ProbSource> {
        let by_label: HashMap<String, f64> = config
            .design
            .pi_a
            .iter()
            .enumerate()
            .map(|(s, &p)| (s.to_string(), p))
            .collect();
        ProbSource::target_from_labels(&by_label, &ds)
    };
    let tau = || match config.mechanism.kind {
        MechanismKind::Srs => TauMap::srs(stats.num_strata()),
        MechanismKind::Sbr => TauMap::sbr(stats.num_strata()),
    };

    let (bounds, cov) = match config.estimand {
        EstimandKind::Ate => {
            let source = match config.variant.numerator {
                SourceKind::Target => target_source()?,
                SourceKind::Sample => ProbSource::SampleFrequency,
            };
            let b = ate_bounds(&ds, &stats, &source)?;
            let tau_map = tau();
            let t = match source {
                ProbSource::Target(_) => Some(&tau_map),
                ProbSource::SampleFrequency => None,
            };
            let v = ate_variance(&stats, &b, &source, t)?;
            (b, v)
        }
        EstimandKind::Att => {
            let source = MixedSource {
                numerator: match config.variant.numerator {
                    SourceKind::Target => target_source()?,
                    SourceKind::Sample => ProbSource::SampleFrequency,
                },
                denominator: ProbSource::SampleFrequency,
            };
            let b = att_bounds(&ds, &stats, &source)?;
            let tau_map = tau();
            let t = match source.numerator {
                ProbSource::SampleFrequency => Some(&tau_map),
                ProbSource::Target(_) => None,
            };
            let v = att_variance(&stats, &b, &source, t)?;
            (b, v)
        }
        EstimandKind::Atu => {
            let targets = target_source()?;
            let b = atu_bounds(&ds, &stats, &targets)?;
            let v = atu_variance(&stats, &b, &targets)?;
            (b, v)
        }
    };

    let ci = confidence_interval(&bounds, &cov, config.alpha)?;
    let rejected = config.test_points.iter().map(|&v0| ci.rejects(v0)).collect();
    Ok(RepOutcome { bounds, cov, ci, rejected })
}

/// Aggregated study output. Percentages are on [0, 100]; each test
/// point's Monte Carlo standard error is 100·√(p̂(1 − p̂)/m) over the
/// m completed replications.
#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub reps_completed: usize,
    pub reps_failed: usize,
    pub test_points: Vec<f64>,
    pub rejection_pct: Vec<f64>,
    pub rejection_se_pct: Vec<f64>,
    pub avg_ci_length: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
}

/// Run every replication of a study in parallel and aggregate.
///
/// Replications are reduced in replication order whatever the thread
/// count, so results are byte-identical across parallelism settings. If
/// more than 1% of replications fail, the whole study errors.
pub fn run_rejection_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, rep))
        .collect();

    let total = config.reps;
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed as f64 > 0.01 * total as f64 {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err().map(|e| e.to_string()))
            .unwrap_or_default();
        return Err(Error::ReplicationFailures { failed, total, first });
    }

    let completed = total - failed;
    let m = completed as f64;
    let mut reject_counts = vec![0usize; config.test_points.len()];
    let mut sum_len = 0.0;
    let mut sum_lo = 0.0;
    let mut sum_hi = 0.0;
    for outcome in outcomes.iter().flatten() {
        for (j, &r) in outcome.rejected.iter().enumerate() {
            reject_counts[j] += usize::from(r);
        }
        sum_len += outcome.ci.length();
        sum_lo += outcome.bounds.lower;
        sum_hi += outcome.bounds.upper;
    }

    let rejection_pct: Vec<f64> =
        reject_counts.iter().map(|&c| 100.0 * c as f64 / m).collect();
    let rejection_se_pct: Vec<f64> = rejection_pct
        .iter()
        .map(|&pct| {
            let p = pct / 100.0;
            100.0 * (p * (1.0 - p) / m).sqrt()
        })
        .collect();

    Ok(StudyResult {
        reps_completed: completed,
        reps_failed: failed,
        test_points: config.test_points.clone(),
        rejection_pct,
        rejection_se_pct,
        avg_ci_length: sum_len / m,
        mean_lower: sum_lo / m,
        mean_upper: sum_hi / m,
    })
}

/// Which benchmark table to build: ATE variants or ATT variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableKind {
    AteTable,
    AttTable,
}

impl TableKind {
    pub fn estimand(&self) -> EstimandKind {
        match self {
            TableKind::AteTable => EstimandKind::Ate,
            TableKind::AttTable => EstimandKind::Att,
        }
    }

    fn variants(&self) -> [VariantSpec; 2] {
        match self {
            TableKind::AteTable => [
                VariantSpec::uniform(SourceKind::Target),
                VariantSpec::uniform(SourceKind::Sample),
            ],
            TableKind::AttTable => [
                VariantSpec::new(SourceKind::Target, SourceKind::Sample),
                VariantSpec::new(SourceKind::Sample, SourceKind::Sample),
            ],
        }
    }
}

/// One benchmark-table row: a (design, mechanism, variant) study with
/// rejection frequencies at the canonical four test points — the two
/// endpoints of the identified set, then 0.9× the lower and 1.1× the
/// upper endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub design: String,
    pub mechanism: String,
    pub variant: String,
    pub set_lower: f64,
    pub set_upper: f64,
    pub result: StudyResult,
}

/// A complete benchmark table.
#[derive(Debug, Clone, Serialize)]
pub struct McTable {
    pub estimand: EstimandKind,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub rows: Vec<TableRow>,
}

/// Build one of the two benchmark tables: three designs × two
/// mechanisms × two estimator variants, sharing one base seed so rows
/// with the same design and mechanism see identical datasets.
pub fn mc_table(
    table: TableKind,
    n: usize,
    reps: usize,
    alpha: f64,
    seed: u64,
) -> Result<McTable> {
    let estimand = table.estimand();
    let mut rows = Vec::with_capacity(12);
    for design in [Design::design1(), Design::design2(), Design::design3()] {
        let (lo, hi) = analytic_identified_set(&design, estimand)?;
        let test_points = vec![lo, hi, 0.9 * lo, 1.1 * hi];
        for kind in [MechanismKind::Srs, MechanismKind::Sbr] {
            let mech = Mechanism::new(kind, design.pi_a.clone())?;
            for variant in table.variants() {
                let config = StudyConfig {
                    design: design.clone(),
                    mechanism: mech.clone(),
                    estimand,
                    variant,
                    n,
                    reps,
                    alpha,
                    test_points: test_points.clone(),
                    seed,
                };
                let result = run_rejection_study(&config)?;
                rows.push(TableRow {
                    design: design.name.clone(),
                    mechanism: kind.tag().into(),
                    variant: variant.tag(estimand),
                    set_lower: lo,
                    set_upper: hi,
                    result,
                });
            }
        }
    }
    Ok(McTable { estimand, n, reps, alpha, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn analytic_sets_match_hand_derived_values() {
        let d1 = Design::design1();
        let (lo, hi) = analytic_identified_set(&d1, EstimandKind::Ate).unwrap();
        assert_abs_diff_eq!(lo, 0.425, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.575, epsilon = 1e-12);

        let (lo, hi) = analytic_identified_set(&d1, EstimandKind::Att).unwrap();
        assert_abs_diff_eq!(lo, 0.22 / 0.475, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.27 / 0.475, epsilon = 1e-12);
        assert_abs_diff_eq!(
            analytic_subpop_share(&d1, EstimandKind::Att).unwrap(),
            0.475,
            epsilon = 1e-12
        );

        let (lo, hi) = analytic_identified_set(&d1, EstimandKind::Atu).unwrap();
        assert_abs_diff_eq!(lo, 0.205 / 0.525, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.305 / 0.525, epsilon = 1e-12);

        let d2 = Design::design2();
        let (lo, hi) = analytic_identified_set(&d2, EstimandKind::Ate).unwrap();
        assert_abs_diff_eq!(lo, 0.0375, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.1875, epsilon = 1e-12);
        let (lo, hi) = analytic_identified_set(&d2, EstimandKind::Att).unwrap();
        assert_abs_diff_eq!(lo, 4.0 / 95.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 14.0 / 95.0, epsilon = 1e-12);

        let d3 = Design::design3();
        let (lo, hi) = analytic_identified_set(&d3, EstimandKind::Ate).unwrap();
        assert_abs_diff_eq!(lo, 0.0375, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.1875, epsilon = 1e-12);
        let (lo, hi) = analytic_identified_set(&d3, EstimandKind::Att).unwrap();
        assert_abs_diff_eq!(lo, 0.0285 / 0.56, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.0785 / 0.56, epsilon = 1e-12);
    }

    #[test]
    fn simulation_is_deterministic_per_key() {
        let d = Design::design1();
        let m = Mechanism::new(MechanismKind::Srs, d.pi_a.clone()).unwrap();
        let a = simulate_dataset(&d, &m, 200, 7, 3).unwrap();
        let b = simulate_dataset(&d, &m, 200, 7, 3).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.d, b.d);
        assert_eq!(a.a, b.a);
        assert_eq!(a.s, b.s);

        let c = simulate_dataset(&d, &m, 200, 7, 4).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn simulated_composition_matches_design() {
        let d = Design::design1();
        let m = Mechanism::new(MechanismKind::Srs, d.pi_a.clone()).unwrap();
        let ds = simulate_dataset(&d, &m, 20_000, 11, 0).unwrap();
        let stats = compute_cell_stats(&ds).unwrap();
        assert_eq!(stats.num_strata(), 4);
        for st in &stats.strata {
            assert_abs_diff_eq!(st.p_hat, 0.25, epsilon = 0.02);
            assert_abs_diff_eq!(st.pi_a_hat, 0.5, epsilon = 0.02);
            assert_abs_diff_eq!(st.pi_d1_hat, 0.90, epsilon = 0.025);
            assert_abs_diff_eq!(st.pi_d0_hat, 0.05, epsilon = 0.02);
        }
    }

    #[test]
    fn block_randomization_hits_exact_counts() {
        let d = Design::design3();
        let m = Mechanism::new(MechanismKind::Sbr, d.pi_a.clone()).unwrap();
        let ds = simulate_dataset(&d, &m, 1000, 5, 2).unwrap();
        // Recover per-stratum counts in raw stratum order via labels.
        for st in compute_cell_stats(&ds).unwrap().strata.iter() {
            let raw: usize = st.label.parse().unwrap();
            let expected = (st.n_s as f64 * d.pi_a[raw]).floor() as usize;
            assert_eq!(st.n_a_s, expected);
        }
    }

    #[test]
    fn smoke_study_produces_sane_aggregates() {
        let d = Design::design1();
        let config = StudyConfig {
            mechanism: Mechanism::new(MechanismKind::Srs, d.pi_a.clone()).unwrap(),
            estimand: EstimandKind::Ate,
            variant: VariantSpec::uniform(SourceKind::Sample),
            n: 300,
            reps: 30,
            alpha: 0.05,
            test_points: vec![0.425, 0.575, 0.3825, 0.6325],
            seed: 99,
            design: d,
        };
        let r = run_rejection_study(&config).unwrap();
        assert_eq!(r.reps_completed, 30);
        assert_eq!(r.reps_failed, 0);
        assert!(r.avg_ci_length > 0.0 && r.avg_ci_length < 1.0);
        assert!(r.mean_lower < r.mean_upper);
        for (&pct, &se) in r.rejection_pct.iter().zip(&r.rejection_se_pct) {
            assert!((0.0..=100.0).contains(&pct));
            assert!(se >= 0.0);
        }
        // Identical config ⟹ identical aggregates.
        let r2 = run_rejection_study(&config).unwrap();
        assert_eq!(r.rejection_pct, r2.rejection_pct);
        assert_eq!(r.avg_ci_length, r2.avg_ci_length);
    }

    #[test]
    fn invalid_study_configs_are_rejected() {
        let d = Design::design1();
        let base = StudyConfig {
            mechanism: Mechanism::new(MechanismKind::Srs, d.pi_a.clone()).unwrap(),
            estimand: EstimandKind::Ate,
            variant: VariantSpec::uniform(SourceKind::Sample),
            n: 100,
            reps: 5,
            alpha: 0.05,
            test_points: vec![0.5],
            seed: 0,
            design: d,
        };
        let mut c = base.clone();
        c.reps = 0;
        assert!(run_rejection_study(&c).is_err());
        let mut c = base.clone();
        c.test_points.clear();
        assert!(run_rejection_study(&c).is_err());
        let mut c = base.clone();
        c.alpha = 0.7;
        assert!(run_rejection_study(&c).is_err());
        let mut c = base.clone();
        c.variant = VariantSpec::new(SourceKind::Target, SourceKind::Sample);
        assert!(matches!(
            run_rejection_study(&c),
            Err(Error::UnsupportedVariant(_))
        ));
        let mut c = base;
        c.estimand = EstimandKind::Atu;
        c.variant = VariantSpec::uniform(SourceKind::Sample);
        assert!(matches!(
            run_rejection_study(&c),
            Err(Error::UnsupportedVariant(_))
        ));
    }
}
