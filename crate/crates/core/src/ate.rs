//! Sharp bounds and asymptotic covariance for the average treatment
//! effect under imperfect compliance.
//!
//! The bounds replace the never-observed potential outcomes with the
//! support endpoints: unobserved treated outcomes with Y_L (lower bound)
//! or Y_H (upper bound), and symmetrically for untreated outcomes. Each
//! endpoint is an inverse-probability-weighted mean whose per-stratum
//! assignment probability comes from either the realized frequencies or
//! the design targets.

use crate::domain::{BoundsEstimate, CovMatrix2, Dataset, Error, EstimandKind, ProbSource, Result};
use crate::strata::CellStats;

/// Per-stratum dispersion τ(s) ∈ [0, 1] of the normalized assignment
/// imbalance √n(n_A(s)/n(s) − π_A(s)): 1 under simple random sampling,
/// 0 under stratified block randomization. Always supplied by the user
/// or the mechanism — never estimated from data.
#[derive(Debug, Clone, PartialEq)]
pub struct TauMap(Vec<f64>);

impl TauMap {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        for (index, &value) in taus.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::TauOutOfRange { index, value });
            }
        }
        Ok(TauMap(taus))
    }

    /// τ(s) = 1 for every stratum (simple random sampling).
    pub fn srs(num_strata: usize) -> Self {
        TauMap(vec![1.0; num_strata])
    }

    /// τ(s) = 0 for every stratum (stratified block randomization).
    pub fn sbr(num_strata: usize) -> Self {
        TauMap(vec![0.0; num_strata])
    }

    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_covers(&self, num_strata: usize) -> Result<()> {
        if self.0.len() < num_strata {
            return Err(Error::InvalidConfig(format!(
                "tau map covers {} strata but the dataset has {}",
                self.0.len(),
                num_strata
            )));
        }
        Ok(())
    }
}

/// Estimated sharp ATE bounds. Lower endpoint: every unobserved treated
/// outcome is set to Y_L and every unobserved untreated outcome to Y_H;
/// the upper endpoint swaps the two.
pub fn ate_bounds(
    dataset: &Dataset,
    stats: &CellStats,
    source: &ProbSource,
) -> Result<BoundsEstimate> {
    source.validate(dataset.num_strata(), &dataset.stratum_labels)?;
    let n = dataset.n() as f64;
    let (y_low, y_high) = (dataset.y_low, dataset.y_high);

    let mut sum_low = 0.0;
    let mut sum_high = 0.0;
    for i in 0..dataset.n() {
        let f = stats.assignment_prob(source, dataset.s[i]);
        let y = dataset.y[i];
        let d = dataset.d[i] as f64;
        let a = dataset.a[i] as f64;
        sum_low += (y * d + y_low * (1.0 - d)) * a / f
            - (y * (1.0 - d) + y_high * d) * (1.0 - a) / (1.0 - f);
        sum_high += (y * d + y_high * (1.0 - d)) * a / f
            - (y * (1.0 - d) + y_low * d) * (1.0 - a) / (1.0 - f);
    }

    Ok(BoundsEstimate {
        kind: EstimandKind::Ate,
        lower: sum_low / n,
        upper: sum_high / n,
        g_hat: 1.0,
        source_numerator: source.clone(),
        source_denominator: source.clone(),
        n: dataset.n(),
    })
}

/// Plug-in asymptotic covariance of √n(θ̂_L − θ_L, θ̂_H − θ_H).
///
/// With sample-frequency weighting the estimator is efficient and the
/// covariance is the conditional one. Target weighting is less efficient
/// under mechanisms that leave assignment imbalance (τ > 0): the
/// correction term Δ̂, scaled by the caller-supplied τ(s), is added. The
/// endpoint estimates in `bounds` must come from the same source.
pub fn ate_variance(
    stats: &CellStats,
    bounds: &BoundsEstimate,
    source: &ProbSource,
    tau: Option<&TauMap>,
) -> Result<CovMatrix2> {
    let (y_low, y_high) = (stats.y_low, stats.y_high);
    let (theta_low, theta_high) = (bounds.lower, bounds.upper);

    let mut var_low = 0.0;
    let mut var_high = 0.0;
    let mut cov = 0.0;
    for (s, st) in stats.strata.iter().enumerate() {
        let f = stats.assignment_prob(source, s);
        let p = st.p_hat;
        let (pd1, pd0) = (st.pi_d1_hat, st.pi_d0_hat);
        let (mu11, s2_11) = (st.cell(1, 1).mu_hat, st.cell(1, 1).sigma2_hat);
        let (mu00, s2_00) = (st.cell(0, 0).mu_hat, st.cell(0, 0).sigma2_hat);

        // Stratum-level means of the lower/upper moment functions.
        let m_low = pd1 * mu11 + (1.0 - pd1) * y_low - (1.0 - pd0) * mu00 - pd0 * y_high;
        let m_high = pd1 * mu11 + (1.0 - pd1) * y_high - (1.0 - pd0) * mu00 - pd0 * y_low;

        let w1 = pd1 / f;
        let w0 = (1.0 - pd0) / (1.0 - f);
        var_low += p
            * ((s2_11 + (mu11 - y_low).powi(2) * (1.0 - pd1)) * w1
                + (s2_00 + (mu00 - y_high).powi(2) * pd0) * w0
                + (m_low - theta_low).powi(2));
        var_high += p
            * ((s2_11 + (mu11 - y_high).powi(2) * (1.0 - pd1)) * w1
                + (s2_00 + (mu00 - y_low).powi(2) * pd0) * w0
                + (m_high - theta_high).powi(2));
        cov += p
            * ((s2_11 + (mu11 - y_low) * (mu11 - y_high) * (1.0 - pd1)) * w1
                + (s2_00 + (mu00 - y_high) * (mu00 - y_low) * pd0) * w0
                + (m_low - theta_low) * (m_high - theta_high));
    }

    if let ProbSource::Target(_) = source {
        let tau = tau.ok_or(Error::MissingTau)?;
        tau.check_covers(stats.num_strata())?;
        for (s, st) in stats.strata.iter().enumerate() {
            let pa = stats.assignment_prob(source, s);
            let (pd1, pd0) = (st.pi_d1_hat, st.pi_d0_hat);
            let (mu11, mu00) = (st.cell(1, 1).mu_hat, st.cell(0, 0).mu_hat);
            let b_low = pd1 * mu11 / pa
                + (1.0 - pd0) * mu00 / (1.0 - pa)
                + (1.0 - pd1) * y_low / pa
                + pd0 * y_high / (1.0 - pa);
            let b_high = pd1 * mu11 / pa
                + (1.0 - pd0) * mu00 / (1.0 - pa)
                + (1.0 - pd1) * y_high / pa
                + pd0 * y_low / (1.0 - pa);
            let weight = st.p_hat * tau.get(s) * (1.0 - pa) * pa;
            var_low += weight * b_low * b_low;
            var_high += weight * b_high * b_high;
            cov += weight * b_low * b_high;
        }
    }

    Ok(CovMatrix2 {
        var_low,
        var_high,
        cov,
    })
}
