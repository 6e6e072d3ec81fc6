//! Independent oracles for the bivariate normal CDF and the shortest
//! two-sided critical-value problem.
//!
//! The CDF oracle integrates Φ₂(h, k, ρ) = ∫_{-∞}^{h} φ(x)·Φ((k − ρx)/
//! √(1 − ρ²)) dx with adaptive Simpson quadrature — a completely
//! different route than the production code's Gauss–Legendre series.
//! The critical-value oracle scans a dense c_L grid and finds the
//! minimal feasible c_H by bisection on the raw coverage functions.

use carbounds::normal::{norm_cdf, norm_pdf, norm_quantile};
use carbounds::stoye::{bvn_cdf, stoye_critical_values, CriticalValueProblem};

const TAIL: f64 = -8.5;

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
}

/// Reference Φ₂(h, k, ρ) via adaptive Simpson to ~1e-12.
fn bvn_oracle(h: f64, k: f64, rho: f64) -> f64 {
    if h <= TAIL {
        return 0.0;
    }
    if rho >= 1.0 - 1e-14 {
        return norm_cdf(h.min(k));
    }
    if rho <= -1.0 + 1e-14 {
        return (norm_cdf(h) - norm_cdf(-k)).max(0.0);
    }
    let denom = (1.0 - rho * rho).sqrt();
    let f = |x: f64| norm_pdf(x) * norm_cdf((k - rho * x) / denom);
    let a = TAIL;
    let b = h.min(8.5);
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    let tail = if h > 8.5 { norm_cdf(k) - norm_cdf(k.min(8.5)) } else { 0.0 };
    adaptive(&f, a, b, fa, fm, fb, whole, 1e-13, 48) + tail.max(0.0)
}

#[test]
fn bvn_matches_simpson_oracle_on_spot_values() {
    // A handful of hand-picked arguments, including the published
    // reference point (1.2, -0.4, 0.7).
    let cases = [
        (1.2, -0.4, 0.7),
        (0.0, 0.0, 0.0),
        (0.0, 0.0, 0.5),
        (-1.6449, 3.645, 0.5),
        (-1.6449, 3.645, -0.5),
        (1.0, 1.0, 0.99),
        (-2.0, 2.0, -0.99),
        (0.5, -0.5, 0.94),
        (3.0, -3.0, -0.94),
        (4.0, 4.0, 0.5),
        (-0.3, 0.9, -0.2),
    ];
    for &(h, k, rho) in &cases {
        let got = bvn_cdf(h, k, rho);
        let want = bvn_oracle(h, k, rho);
        assert!(
            (got - want).abs() <= 1e-9,
            "bvn({h}, {k}, {rho}) = {got}, oracle {want}, diff {}",
            (got - want).abs()
        );
    }
}

#[test]
fn bvn_matches_simpson_oracle_on_grid() {
    let hs = [-3.5, -2.0, -1.0, -0.25, 0.0, 0.4, 1.3, 2.6, 3.8];
    let rhos = [-0.98, -0.93, -0.75, -0.4, 0.0, 0.3, 0.6, 0.9, 0.97];
    for &h in &hs {
        for &k in &hs {
            for &rho in &rhos {
                let got = bvn_cdf(h, k, rho);
                let want = bvn_oracle(h, k, rho);
                assert!(
                    (got - want).abs() <= 1e-7,
                    "bvn({h}, {k}, {rho}) = {got}, oracle {want}, diff {}",
                    (got - want).abs()
                );
            }
        }
    }
}

/// Raw coverage of the lower endpoint: P(Z_L ≤ c_L, Z_H ≥ -c_H - Δ1)
/// evaluated with the oracle CDF.
fn coverage_lower(c_l: f64, c_h: f64, delta1: f64, rho: f64) -> f64 {
    norm_cdf(c_h + delta1) - bvn_oracle(-c_l, c_h + delta1, rho)
}

/// Raw coverage of the upper endpoint (roles swapped).
fn coverage_upper(c_l: f64, c_h: f64, delta2: f64, rho: f64) -> f64 {
    norm_cdf(c_l + delta2) - bvn_oracle(-c_h, c_l + delta2, rho)
}

/// Minimal c_H making both coverage constraints hold at the given c_L,
/// via bisection on the oracle coverage (both are increasing in c_H).
fn oracle_min_ch(c_l: f64, delta1: f64, delta2: f64, rho: f64, target: f64, hi: f64) -> Option<f64> {
    let feas = |c_h: f64| {
        coverage_lower(c_l, c_h, delta1, rho) >= target
            && coverage_upper(c_l, c_h, delta2, rho) >= target
    };
    if !feas(hi) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, hi);
    if feas(lo) {
        return Some(0.0);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feas(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Grid-scan oracle for the shortest pair: step c_L over a fine grid,
/// complete each with the minimal feasible c_H, and keep the pair with
/// the smallest weighted length.
fn grid_oracle(
    delta: f64,
    sigma_low: f64,
    sigma_high: f64,
    rho: f64,
    alpha: f64,
) -> (f64, f64) {
    let delta1 = delta.clamp(0.0, 40.0);
    let delta2 = (delta1 * sigma_high / sigma_low).clamp(0.0, 40.0);
    let target = 1.0 - alpha;
    let z_hi = norm_quantile(1.0 - alpha / 2.0);
    let cap = z_hi + 1e-3;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let steps = 30_000usize;
    for i in 0..=steps {
        let c_l = cap * i as f64 / steps as f64;
        if let Some(c_h) = oracle_min_ch(c_l, delta1, delta2, rho, target, cap) {
            let len = sigma_low * c_l + sigma_high * c_h;
            if len < best.0 {
                best = (len, c_l, c_h);
            }
        }
    }
    assert!(best.0.is_finite(), "oracle found no feasible pair");
    (best.1, best.2)
}

#[test]
fn critical_values_match_grid_oracle() {
    let cases = [
        (0.0, 1.0, 1.0, 0.0),
        (0.0, 1.0, 1.0, 0.9),
        (0.5, 1.0, 1.0, 0.5),
        (1.0, 1.0, 1.0, 0.5),
        (2.0, 1.0, 1.0, 0.5),
        (2.0, 1.0, 1.0, -0.6),
        (4.0, 1.0, 1.0, 0.3),
        (1.0, 0.8, 1.3, 0.4),
        (0.3, 1.5, 0.7, -0.3),
        (8.0, 1.0, 1.0, 0.0),
    ];
    // The grid oracle is expensive (tens of thousands of bisections per
    // case, each hitting the quadrature oracle); the cases are
    // independent, so run them in parallel.
    use rayon::prelude::*;
    cases.par_iter().for_each(|&(delta, s_l, s_h, rho)| {
        let p = CriticalValueProblem::new(delta, s_l, s_h, rho, 0.05).unwrap();
        let (cl, ch) = stoye_critical_values(&p).unwrap();
        let (ocl, och) = grid_oracle(delta, s_l, s_h, rho, 0.05);
        let got = s_l * cl + s_h * ch;
        let want = s_l * ocl + s_h * och;
        // The weighted lengths must agree tightly; the individual c's
        // can differ where the objective is flat, but both solutions
        // must be feasible per the oracle coverage functions.
        assert!(
            (got - want).abs() <= 2e-3,
            "delta={delta} rho={rho}: length {got} vs oracle {want} \
             (solver ({cl}, {ch}), oracle ({ocl}, {och}))"
        );
        let delta1 = delta.clamp(0.0, 40.0);
        let delta2 = (delta1 * s_h / s_l).clamp(0.0, 40.0);
        assert!(
            coverage_lower(cl, ch, delta1, rho) >= 0.95 - 2e-6,
            "delta={delta} rho={rho}: solver pair ({cl}, {ch}) violates lower coverage: {}",
            coverage_lower(cl, ch, delta1, rho)
        );
        assert!(
            coverage_upper(cl, ch, delta2, rho) >= 0.95 - 2e-6,
            "delta={delta} rho={rho}: solver pair ({cl}, {ch}) violates upper coverage: {}",
            coverage_upper(cl, ch, delta2, rho)
        );
    });
}

#[test]
fn solver_matches_oracle_on_documented_case() {
    // delta = 1, equal unit scales, rho = 0.5: the textbook
    // intermediate case between the fully point-identified and the
    // wide-bounds limits.
    let p = CriticalValueProblem::new(1.0, 1.0, 1.0, 0.5, 0.05).unwrap();
    let (cl, ch) = stoye_critical_values(&p).unwrap();
    let (ocl, och) = grid_oracle(1.0, 1.0, 1.0, 0.5, 0.05);
    assert!((cl - ocl).abs() <= 1e-3, "c_low {cl} vs oracle {ocl}");
    assert!((ch - och).abs() <= 1e-3, "c_high {ch} vs oracle {och}");
}
