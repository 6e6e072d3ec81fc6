//! Sharp bounds and asymptotic covariance for the average treatment
//! effect on the treated (ATT) and on the untreated (ATU).
//!
//! Both estimands are ratios: a bound on the unnormalized effect mass
//! divided by the estimated subpopulation share (Ĝ for the treated, Ĝ_U
//! for the untreated). The ATT estimator lets the numerator weights and
//! the inverse-probability denominators come from different sources; the
//! ATU estimator always pairs target-probability weights with
//! sample-frequency denominators.

use crate::ate::TauMap;
use crate::domain::{
    BoundsEstimate, CovMatrix2, Dataset, Error, EstimandKind, ProbSource, Result, G_FLOOR,
};
use crate::strata::CellStats;

/// Sources for the ATT estimator: `numerator` supplies the per-stratum
/// weights w(s), `denominator` the inverse-probability denominators
/// f̂(s). The recommended pairing is targets over sample frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSource {
    pub numerator: ProbSource,
    pub denominator: ProbSource,
}

impl MixedSource {
    /// Target weights over sample-frequency denominators — the variant
    /// that is efficient under every assignment mechanism.
    pub fn recommended(targets: Vec<f64>) -> Self {
        MixedSource {
            numerator: ProbSource::Target(targets),
            denominator: ProbSource::SampleFrequency,
        }
    }

    /// Sample frequencies in both roles.
    pub fn sample_sample() -> Self {
        MixedSource {
            numerator: ProbSource::SampleFrequency,
            denominator: ProbSource::SampleFrequency,
        }
    }

    fn validate(&self, num_strata: usize, labels: &[String]) -> Result<()> {
        self.numerator.validate(num_strata, labels)?;
        self.denominator.validate(num_strata, labels)
    }

    /// Tag like "target/sample" used in reports and table rows.
    pub fn tag(&self) -> String {
        format!("{}/{}", self.numerator.tag(), self.denominator.tag())
    }
}

/// Estimated sharp ATT bounds. The treated-and-unassigned cell is the
/// only one whose untreated counterfactual is unbounded by observables;
/// the lower endpoint sets it to Y_H, the upper to Y_L.
pub fn att_bounds(
    dataset: &Dataset,
    stats: &CellStats,
    source: &MixedSource,
) -> Result<BoundsEstimate> {
    source.validate(dataset.num_strata(), &dataset.stratum_labels)?;
    let n = dataset.n() as f64;
    let (y_low, y_high) = (dataset.y_low, dataset.y_high);

    let mut g_sum = 0.0;
    let mut low_sum = 0.0;
    let mut high_sum = 0.0;
    for i in 0..dataset.n() {
        let s = dataset.s[i];
        let w = stats.assignment_prob(&source.numerator, s);
        let f = stats.assignment_prob(&source.denominator, s);
        let y = dataset.y[i];
        let d = dataset.d[i] as f64;
        let a = dataset.a[i] as f64;
        let slack = d * (1.0 - a) / (1.0 - f);
        g_sum += (d * a / f - slack) * w + slack;
        low_sum += (y * a / f - y * (1.0 - a) / (1.0 - f)) * w + (y - y_high) * slack;
        high_sum += (y * a / f - y * (1.0 - a) / (1.0 - f)) * w + (y - y_low) * slack;
    }

    let g_hat = g_sum / n;
    if g_hat <= G_FLOOR {
        return Err(Error::NoTakers(g_hat));
    }

    Ok(BoundsEstimate {
        kind: EstimandKind::Att,
        lower: low_sum / g_sum,
        upper: high_sum / g_sum,
        g_hat,
        source_numerator: source.numerator.clone(),
        source_denominator: source.denominator.clone(),
        n: dataset.n(),
    })
}

/// Per-stratum pieces shared by the ATT variance slots.
struct AttStratumTerms {
    p: f64,
    a: f64,
    pd1: f64,
    pd0: f64,
    mu11: f64,
    mu01: f64,
    mu10: f64,
    mu00: f64,
    s2_11: f64,
    s2_01: f64,
    s2_10: f64,
    s2_00: f64,
    bracket: f64,
}

impl AttStratumTerms {
    /// Variance slots that do not depend on (υ̂, Y·): identical across
    /// var_low, var_high, and the covariance.
    fn common(&self) -> f64 {
        self.pd1 * self.a * self.s2_11
            + (1.0 - self.pd1) * self.a * self.s2_01
            + self.pd0 * (1.0 - self.a) * self.s2_10
            + self.a * self.a * (1.0 - self.pd0) * self.s2_00 / (1.0 - self.a)
    }

    /// Centered deviations entering the squared/mixed slots for one
    /// endpoint: the assigned-arm contrast, the unassigned-arm contrast
    /// (with its support constant), and the across-strata term.
    fn centered(&self, upsilon: f64, y_slack: f64) -> (f64, f64, f64) {
        let assigned = self.mu11 - self.mu01 - upsilon;
        let unassigned = (1.0 - self.a) * self.mu10 + self.a * self.mu00
            - y_slack
            - upsilon * (1.0 - self.a);
        let across = self.bracket * self.a + (self.mu10 - y_slack) * self.pd0
            - upsilon * (self.pd1 * self.a + self.pd0 * (1.0 - self.a));
        (assigned, unassigned, across)
    }

    fn combine(&self, left: (f64, f64, f64), right: (f64, f64, f64)) -> f64 {
        self.common()
            + self.a * left.0 * right.0 * (1.0 - self.pd1) * self.pd1
            + left.1 * right.1 * (1.0 - self.pd0) * self.pd0 / (1.0 - self.a)
            + left.2 * right.2
    }
}

/// Plug-in asymptotic covariance of √n(υ̂_L − υ_L, υ̂_H − υ_H), already
/// divided by Ĝ².
///
/// Defined for the target/sample variant (weights a(s) = π_A(s)) and the
/// sample/sample variant (a(s) = n_A(s)/n(s) plus the τ-scaled
/// correction Δ̂, which needs `tau`). The lower bound's slack constant is
/// Y_H and the upper's is Y_L, mirroring the bounds construction.
pub fn att_variance(
    stats: &CellStats,
    bounds: &BoundsEstimate,
    source: &MixedSource,
    tau: Option<&TauMap>,
) -> Result<CovMatrix2> {
    let needs_correction = match (&source.numerator, &source.denominator) {
        (ProbSource::Target(_), ProbSource::SampleFrequency) => false,
        (ProbSource::SampleFrequency, ProbSource::SampleFrequency) => true,
        _ => return Err(Error::UnsupportedVariant(source.tag())),
    };
    let (y_low, y_high) = (stats.y_low, stats.y_high);
    let (ups_low, ups_high) = (bounds.lower, bounds.upper);

    let mut var_low = 0.0;
    let mut var_high = 0.0;
    let mut cov = 0.0;
    for (s, st) in stats.strata.iter().enumerate() {
        let terms = AttStratumTerms {
            p: st.p_hat,
            a: stats.assignment_prob(&source.numerator, s),
            pd1: st.pi_d1_hat,
            pd0: st.pi_d0_hat,
            mu11: st.cell(1, 1).mu_hat,
            mu01: st.cell(0, 1).mu_hat,
            mu10: st.cell(1, 0).mu_hat,
            mu00: st.cell(0, 0).mu_hat,
            s2_11: st.cell(1, 1).sigma2_hat,
            s2_01: st.cell(0, 1).sigma2_hat,
            s2_10: st.cell(1, 0).sigma2_hat,
            s2_00: st.cell(0, 0).sigma2_hat,
            bracket: st.cell(1, 1).mu_hat * st.pi_d1_hat
                + st.cell(0, 1).mu_hat * (1.0 - st.pi_d1_hat)
                - st.cell(1, 0).mu_hat * st.pi_d0_hat
                - st.cell(0, 0).mu_hat * (1.0 - st.pi_d0_hat),
        };
        let low = terms.centered(ups_low, y_high);
        let high = terms.centered(ups_high, y_low);
        var_low += terms.p * terms.combine(low, low);
        var_high += terms.p * terms.combine(high, high);
        cov += terms.p * terms.combine(low, high);
    }

    if needs_correction {
        let tau = tau.ok_or(Error::MissingTau)?;
        if tau.len() < stats.num_strata() {
            return Err(Error::InvalidConfig(format!(
                "tau map covers {} strata but the dataset has {}",
                tau.len(),
                stats.num_strata()
            )));
        }
        for (s, st) in stats.strata.iter().enumerate() {
            let pa = st.pi_a_hat;
            let bracket = st.cell(1, 1).mu_hat * st.pi_d1_hat
                + st.cell(0, 1).mu_hat * (1.0 - st.pi_d1_hat)
                - st.cell(1, 0).mu_hat * st.pi_d0_hat
                - st.cell(0, 0).mu_hat * (1.0 - st.pi_d0_hat);
            let c_low = bracket - ups_low * (st.pi_d1_hat - st.pi_d0_hat);
            let c_high = bracket - ups_high * (st.pi_d1_hat - st.pi_d0_hat);
            let weight = st.p_hat * tau.get(s) * (1.0 - pa) * pa;
            var_low += weight * c_low * c_low;
            var_high += weight * c_high * c_high;
            cov += weight * c_low * c_high;
        }
    }

    let g2 = bounds.g_hat * bounds.g_hat;
    Ok(CovMatrix2 {
        var_low: var_low / g2,
        var_high: var_high / g2,
        cov: cov / g2,
    })
}

/// Estimated sharp ATU bounds. Requires target probabilities for the
/// (1 − π_A(s)) numerator weights; denominators always use sample
/// frequencies.
pub fn atu_bounds(
    dataset: &Dataset,
    stats: &CellStats,
    targets: &ProbSource,
) -> Result<BoundsEstimate> {
    let ProbSource::Target(_) = targets else {
        return Err(Error::UnsupportedVariant(
            "ATU requires target probabilities in the numerator".into(),
        ));
    };
    targets.validate(dataset.num_strata(), &dataset.stratum_labels)?;
    let n = dataset.n() as f64;
    let (y_low, y_high) = (dataset.y_low, dataset.y_high);

    let mut g_sum = 0.0;
    let mut low_sum = 0.0;
    let mut high_sum = 0.0;
    for i in 0..dataset.n() {
        let s = dataset.s[i];
        let t = stats.assignment_prob(targets, s);
        let f = stats.strata[s].pi_a_hat;
        let y = dataset.y[i];
        let d = dataset.d[i] as f64;
        let a = dataset.a[i] as f64;
        let slack = (1.0 - d) * a / f;
        g_sum += (d * a / f - d * (1.0 - a) / (1.0 - f)) * (1.0 - t) + slack;
        low_sum += (y * a / f - y * (1.0 - a) / (1.0 - f)) * (1.0 - t) + (y_low - y) * slack;
        high_sum += (y * a / f - y * (1.0 - a) / (1.0 - f)) * (1.0 - t) + (y_high - y) * slack;
    }

    let g_hat = g_sum / n;
    if g_hat <= G_FLOOR {
        return Err(Error::NoUntreated(g_hat));
    }

    Ok(BoundsEstimate {
        kind: EstimandKind::Atu,
        lower: low_sum / g_sum,
        upper: high_sum / g_sum,
        g_hat,
        source_numerator: targets.clone(),
        source_denominator: ProbSource::SampleFrequency,
        n: dataset.n(),
    })
}

/// Plug-in asymptotic covariance of √n(φ̂_L − φ_L, φ̂_H − φ_H), already
/// divided by Ĝ_U². The lower bound's slack constant is Y_L and the
/// upper's is Y_H (the reverse of the ATT pairing, because the missing
/// counterfactual here is the treated outcome of never-takers).
pub fn atu_variance(
    stats: &CellStats,
    bounds: &BoundsEstimate,
    targets: &ProbSource,
) -> Result<CovMatrix2> {
    let ProbSource::Target(_) = targets else {
        return Err(Error::UnsupportedVariant(
            "ATU requires target probabilities in the numerator".into(),
        ));
    };
    let (y_low, y_high) = (stats.y_low, stats.y_high);
    let (phi_low, phi_high) = (bounds.lower, bounds.upper);

    let mut var_low = 0.0;
    let mut var_high = 0.0;
    let mut cov = 0.0;
    for (s, st) in stats.strata.iter().enumerate() {
        let a = stats.assignment_prob(targets, s);
        let (pd1, pd0) = (st.pi_d1_hat, st.pi_d0_hat);
        let (mu11, mu01) = (st.cell(1, 1).mu_hat, st.cell(0, 1).mu_hat);
        let (mu10, mu00) = (st.cell(1, 0).mu_hat, st.cell(0, 0).mu_hat);
        let bracket =
            mu11 * pd1 + mu01 * (1.0 - pd1) - mu10 * pd0 - mu00 * (1.0 - pd0);

        let common = (1.0 - a) * (1.0 - a) * pd1 * st.cell(1, 1).sigma2_hat / a
            + (1.0 - pd1) * a * st.cell(0, 1).sigma2_hat
            + pd0 * (1.0 - a) * st.cell(1, 0).sigma2_hat
            + (1.0 - pd0) * (1.0 - a) * st.cell(0, 0).sigma2_hat;

        let centered = |phi: f64, y_slack: f64| -> (f64, f64, f64) {
            let assigned = (1.0 - a) * mu11 + a * mu01 + phi * a - y_slack;
            let unassigned = mu00 + phi - mu10;
            let across = bracket * (1.0 - a) + (y_slack - mu01) * (1.0 - pd1)
                - phi * ((1.0 - pd1) * a + (1.0 - pd0) * (1.0 - a));
            (assigned, unassigned, across)
        };
        let combine = |left: (f64, f64, f64), right: (f64, f64, f64)| -> f64 {
            common
                + left.0 * right.0 * (1.0 - pd1) * pd1 / a
                + (1.0 - a) * left.1 * right.1 * (1.0 - pd0) * pd0
                + left.2 * right.2
        };

        let low = centered(phi_low, y_low);
        let high = centered(phi_high, y_high);
        var_low += st.p_hat * combine(low, low);
        var_high += st.p_hat * combine(high, high);
        cov += st.p_hat * combine(low, high);
    }

    let g2 = bounds.g_hat * bounds.g_hat;
    Ok(CovMatrix2 {
        var_low: var_low / g2,
        var_high: var_high / g2,
        cov: cov / g2,
    })
}
