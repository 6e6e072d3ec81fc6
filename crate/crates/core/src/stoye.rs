//! Bivariate-normal numerics and the shortest confidence-interval
//! critical-value program shared by all three estimands.
//!
//! The confidence interval `[lower − σ_L·c_L/√n, upper + σ_H·c_H/√n]`
//! covers every point of the identified set with asymptotic probability
//! 1−α when `(c_L, c_H)` minimize `σ_L·c_L + σ_H·c_H` subject to two
//! bivariate-normal coverage constraints, one per endpoint. Each
//! constraint probability reduces to `Φ(c + Δ) − Φ₂(−c', c + Δ; ρ)`,
//! evaluated here by Gauss–Legendre quadrature of the single-integral
//! correlation representation (Drezner–Wesolowsky family) with the
//! high-correlation transformation.

use crate::domain::{
    BoundsEstimate, ConfidenceInterval, CovMatrix2, Error, Result, RHO_CLAMP, VARIANCE_FLOOR,
};
use crate::normal::{norm_cdf, norm_quantile};
use std::f64::consts::PI;

/// Studentized set lengths at or above this value make both coverage
/// constraints numerically one-sided.
pub const DELTA_CAP: f64 = 40.0;

const OUTER_ITER_CAP: usize = 200;
const INNER_ITER_CAP: usize = 100;

// Gauss–Legendre nodes/weights on (−1, 1), folded in half: each (w, x)
// pair is evaluated at 1−x and 1+x.
const QUAD_6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.2386191860831970),
];
const QUAD_12: [(f64, f64); 6] = [
    (0.04717533638651177, -0.9815606342467191),
    (0.1069393259953183, -0.9041172563704750),
    (0.1600783285433464, -0.7699026741943050),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];
const QUAD_20: [(f64, f64); 10] = [
    (0.01761400713915212, -0.9931285991850949),
    (0.04060142980038694, -0.9639719272779138),
    (0.06267204833410906, -0.9122344282513259),
    (0.08327674157670475, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.07652652113349733),
];

fn select_quadrature(rho_abs: f64) -> &'static [(f64, f64)] {
    if rho_abs < 0.3 {
        &QUAD_6
    } else if rho_abs < 0.75 {
        &QUAD_12
    } else {
        &QUAD_20
    }
}

/// P(X > dh, Y > dk) for standard bivariate normal variables with
/// correlation r, following Genz's double-precision refinement of the
/// Drezner–Wesolowsky algorithm. Negative high correlation is reduced to
/// the positive case through P(X > h, Y > k) = Φ(−h) − P(X > h, Y ≤ k).
fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    if dh == f64::INFINITY || dk == f64::INFINITY {
        return 0.0;
    }
    if dh == f64::NEG_INFINITY {
        return norm_cdf(-dk);
    }
    if dk == f64::NEG_INFINITY {
        return norm_cdf(-dh);
    }
    if r >= 1.0 {
        return norm_cdf(-dh.max(dk));
    }
    if r <= -1.0 {
        return (norm_cdf(-dh) - norm_cdf(dk)).max(0.0);
    }
    if r < -0.925 {
        return norm_cdf(-dh) - bvnd(dh, -dk, -r);
    }

    let h = dh;
    let k = dk;
    let hk = h * k;
    let quad = select_quadrature(r.abs());
    let mut bvn = 0.0;

    if r.abs() <= 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = 0.5 * libm::asin(r);
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = libm::sin(asr * (is * x + 1.0));
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * PI);
        }
        bvn + norm_cdf(-h) * norm_cdf(-k)
    } else {
        // 0.925 < r < 1.
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -0.5 * (b_s / a_s + hk);
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if -hk < 100.0 {
            let b = b_s.sqrt();
            bvn -= (-0.5 * hk).exp()
                * (2.0 * PI).sqrt()
                * norm_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in quad {
            for is in [-1.0, 1.0] {
                let xi = a * (is * x + 1.0);
                let x_s = xi * xi;
                let r_s = (1.0 - x_s).sqrt();
                let asr = -0.5 * (b_s / x_s + hk);
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - r_s) / (2.0 * (1.0 + r_s))).exp() / r_s
                            - (1.0 + c * x_s * (1.0 + d * x_s)));
                }
            }
        }
        bvn *= -1.0 / (2.0 * PI);
        bvn + norm_cdf(-h.max(k))
    }
}

/// P(X ≤ h, W ≤ k) for a standard bivariate normal pair with correlation
/// `rho`. Accepts ±∞ sentinels; absolute error below 1e−7 over the whole
/// domain (far better away from |ρ| → 1).
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    bvnd(-h, -k, rho).clamp(0.0, 1.0)
}

/// Joint upper-tail probability P(X > h, Y > k) for standard bivariate
/// normal (X, Y) with correlation rho. This is the series' native
/// orientation, so small tail probabilities keep small relative error —
/// unlike computing 1 − Φ(h) − Φ(k) + Φ₂(h, k, ρ) by subtraction.
pub fn bvn_upper_tail(h: f64, k: f64, rho: f64) -> f64 {
    bvnd(h, k, rho).clamp(0.0, 1.0)
}

/// Inputs of the critical-value program: the studentized estimated set
/// length, the two endpoint scales, their correlation, and the level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValueProblem {
    /// √n(upper − lower)/scale_high, clamped to [0, DELTA_CAP].
    pub delta: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    /// Endpoint correlation, clamped strictly inside (−1, 1).
    pub rho: f64,
    pub alpha: f64,
}

impl CriticalValueProblem {
    /// Clamps delta and rho into their numerical ranges and validates the
    /// scales and level.
    pub fn new(delta: f64, sigma_low: f64, sigma_high: f64, rho: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if !(sigma_low > 0.0) || !sigma_low.is_finite() {
            return Err(Error::DegenerateVariance {
                which: "sigma_low",
                value: sigma_low,
            });
        }
        if !(sigma_high > 0.0) || !sigma_high.is_finite() {
            return Err(Error::DegenerateVariance {
                which: "sigma_high",
                value: sigma_high,
            });
        }
        if delta.is_nan() || rho.is_nan() {
            return Err(Error::NonConvergence(format!(
                "NaN input: delta={delta}, rho={rho}"
            )));
        }
        Ok(CriticalValueProblem {
            delta: delta.clamp(0.0, DELTA_CAP),
            sigma_low,
            sigma_high,
            rho: rho.clamp(-1.0 + RHO_CLAMP, 1.0 - RHO_CLAMP),
            alpha,
        })
    }
}

/// The two coverage constraints of the program, each of the form
/// g(c, c') = Φ(c' + Δ) − Φ₂(−c, c' + Δ; ρ) ≥ 1−α, reduced from the
/// event {−c ≤ Z₁} ∩ {ρZ₁ ≤ c' + Δ + Z₂√(1−ρ²)}.
struct Coverage {
    delta1: f64,
    delta2: f64,
    rho: f64,
    alpha: f64,
}

impl Coverage {
    fn new(p: &CriticalValueProblem) -> Self {
        // The first constraint studentizes the set length by the upper
        // scale (that is `delta` itself), the second by the lower scale.
        let delta2 = (p.delta * p.sigma_high / p.sigma_low).clamp(0.0, DELTA_CAP);
        Coverage {
            delta1: p.delta,
            delta2,
            rho: p.rho,
            alpha: p.alpha,
        }
    }

    // Each coverage requirement Φ(edge) − Φ₂(−c, edge; ρ) ≥ 1 − α is
    // checked in the algebraically identical upper-tail form
    // P(X > −c, Y > edge) ≤ α − Φ(−c). The naive form compares values
    // near 1 − α whose informative part shrinks like φ(edge), so for
    // large studentized lengths it drowns in CDF roundoff; the tail
    // form compares two like-scaled small numbers and stays
    // well-conditioned at every length. Both sides are nondecreasing
    // along each coordinate's search direction, with the difference
    // monotone, so bisection on the predicate is valid.

    /// First constraint: the lower endpoint stays covered.
    fn ok1(&self, c_low: f64, c_high: f64) -> bool {
        let edge = c_high + self.delta1;
        bvn_upper_tail(-c_low, edge, self.rho) <= self.alpha - norm_cdf(-c_low)
    }

    /// Second constraint: the upper endpoint stays covered.
    fn ok2(&self, c_low: f64, c_high: f64) -> bool {
        let edge = c_low + self.delta2;
        bvn_upper_tail(-c_high, edge, self.rho) <= self.alpha - norm_cdf(-c_high)
    }
}

/// Smallest c in [0, hi] satisfying a monotone feasibility predicate;
/// None when even `ok(hi)` fails.
fn min_feasible(ok: impl Fn(f64) -> bool, hi: f64) -> Option<f64> {
    if !ok(hi) {
        return None;
    }
    if ok(0.0) {
        return Some(0.0);
    }
    let mut lo = 0.0;
    let mut hi = hi;
    for _ in 0..INNER_ITER_CAP {
        if hi - lo < 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Golden-section minimization of a unimodal f over [a, b] (f may be +∞
/// on a leading segment; strict comparisons keep the bracket on the
/// finite side). Returns (argmin, min).
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..OUTER_ITER_CAP {
        if b - a < 1e-9 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

/// Minimizers (c_low, c_high) of sigma_low·c_low + sigma_high·c_high
/// subject to both coverage constraints, each c accurate to 1e−6.
/// Solutions satisfy c ∈ [Φ⁻¹(1−α), Φ⁻¹(1−α/2)] up to tolerance.
pub fn stoye_critical_values(problem: &CriticalValueProblem) -> Result<(f64, f64)> {
    let cov = Coverage::new(problem);
    let z_lo = norm_quantile(1.0 - problem.alpha);
    let z_hi = norm_quantile(1.0 - problem.alpha / 2.0);
    let ch_cap = z_hi + 1e-6;

    // Minimal feasible c_high given c_low, or +∞ when one constraint
    // cannot be met inside the allowed range.
    let min_ch = |cl: f64| -> Option<f64> {
        let h1 = min_feasible(|ch| cov.ok1(cl, ch), ch_cap)?;
        let h2 = min_feasible(|ch| cov.ok2(cl, ch), ch_cap)?;
        Some(h1.max(h2))
    };
    let min_cl = |ch: f64| -> Option<f64> {
        let h1 = min_feasible(|cl| cov.ok1(cl, ch), ch_cap)?;
        let h2 = min_feasible(|cl| cov.ok2(cl, ch), ch_cap)?;
        Some(h1.max(h2))
    };

    // Nested search in both orders; a constraint that binds only the
    // swapped coordinate is handled by the second pass.
    let lo_edge = (z_lo - 1e-7).max(0.0);
    let (cl_a, f_a) = golden_min(
        |cl| match min_ch(cl) {
            Some(ch) => problem.sigma_low * cl + problem.sigma_high * ch,
            None => f64::INFINITY,
        },
        lo_edge,
        z_hi,
    );
    let (ch_b, f_b) = golden_min(
        |ch| match min_cl(ch) {
            Some(cl) => problem.sigma_low * cl + problem.sigma_high * ch,
            None => f64::INFINITY,
        },
        lo_edge,
        z_hi,
    );

    // Corner polish. Where both constraints bind, the first constraint's
    // frontier can be nearly vertical (for long sets its slope grows like
    // φ(c_low)/φ(c_high + delta1)), so the nested searches can overshoot
    // the kink by far more than their own tolerance. Re-solving each
    // equality in its well-conditioned coordinate — the first for c_low,
    // the second for c_high — is a fixed-point iteration whose
    // contraction factor is exactly the frontier slope ratio, so it
    // converges fastest precisely where the nested searches are worst.
    // Near-neutral regimes oscillate without contracting; they are
    // detected and abandoned (the nested results are accurate there).
    let corner = |seed: (f64, f64)| -> Option<(f64, f64)> {
        let (mut cl, mut ch) = seed;
        let mut last_step = f64::INFINITY;
        for iter in 0..25 {
            let ncl = min_feasible(|c| cov.ok1(c, ch), ch_cap)?;
            let nch = min_feasible(|c| cov.ok2(ncl, c), ch_cap)?;
            let step = (ncl - cl).abs().max((nch - ch).abs());
            cl = ncl;
            ch = nch;
            if step < 1e-12 {
                break;
            }
            if iter >= 3 && step > 0.3 * last_step {
                break;
            }
            last_step = step;
        }
        Some((cl, ch))
    };

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    if f_a.is_finite() {
        if let Some(ch) = min_ch(cl_a) {
            candidates.push((cl_a, ch));
        }
    }
    if f_b.is_finite() {
        if let Some(cl) = min_cl(ch_b) {
            candidates.push((cl, ch_b));
        }
    }
    for seed in candidates.clone() {
        if let Some(pair) = corner(seed) {
            candidates.push(pair);
        }
    }
    // The Bonferroni pair is always feasible, so the search cannot come
    // back empty-handed for finite inputs.
    candidates.push((z_hi, z_hi));

    let solution = candidates
        .into_iter()
        .filter(|&(cl, ch)| cov.ok1(cl, ch) && cov.ok2(cl, ch))
        .min_by(|a, b| {
            let fa = problem.sigma_low * a.0 + problem.sigma_high * a.1;
            let fb = problem.sigma_low * b.0 + problem.sigma_high * b.1;
            fa.total_cmp(&fb)
        });

    match solution {
        Some((cl, ch)) => {
            // The optimum always lies weakly above the one-sided quantile;
            // trim the bisection's sub-tolerance overshoot at the box edge.
            Ok((cl.max(z_lo).min(z_hi), ch.max(z_lo).min(z_hi)))
        }
        None => Err(Error::NonConvergence(format!(
            "no feasible critical values found for delta={}, rho={}, sigma_low={}, sigma_high={}, alpha={}",
            problem.delta, problem.rho, problem.sigma_low, problem.sigma_high, problem.alpha
        ))),
    }
}

/// Builds the critical-value problem from an estimated set and its
/// endpoint covariance and returns
/// [lower − scale_low·c_low/√n, upper + scale_high·c_high/√n].
///
/// The covariance must come from the matching variance estimator (for
/// ATT/ATU those are already Ĝ²-normalized, so the slack formula is the
/// same for every estimand).
pub fn confidence_interval(
    bounds: &BoundsEstimate,
    cov: &CovMatrix2,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    if bounds.n < 2 {
        return Err(Error::InvalidConfig(format!(
            "confidence interval needs n ≥ 2, got {}",
            bounds.n
        )));
    }
    if !(cov.var_low >= VARIANCE_FLOOR) {
        return Err(Error::DegenerateVariance {
            which: "var_low",
            value: cov.var_low,
        });
    }
    if !(cov.var_high >= VARIANCE_FLOOR) {
        return Err(Error::DegenerateVariance {
            which: "var_high",
            value: cov.var_high,
        });
    }

    let n = bounds.n as f64;
    let scale_low = cov.var_low.sqrt();
    let scale_high = cov.var_high.sqrt();
    let delta = n.sqrt() * (bounds.upper - bounds.lower) / scale_high;
    let problem = CriticalValueProblem::new(delta, scale_low, scale_high, cov.correlation(), alpha)?;
    let (c_low, c_high) = stoye_critical_values(&problem)?;

    Ok(ConfidenceInterval {
        lower: bounds.lower - scale_low * c_low / n.sqrt(),
        upper: bounds.upper + scale_high * c_high / n.sqrt(),
        alpha,
        c_low,
        c_high,
    })
}
