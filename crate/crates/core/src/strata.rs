//! Stratum- and cell-level sufficient statistics shared by every
//! estimator and variance formula.

use crate::domain::{Dataset, Error, ProbSource, Result};

/// First and second moments of Y within one (d, a, s) cell. Empty cells
/// use the convention mu_hat = sigma2_hat = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellMoments {
    pub count: usize,
    pub mu_hat: f64,
    /// Population variance (1/count normalizer), matching the plug-in
    /// asymptotic variance formulas.
    pub sigma2_hat: f64,
}

/// Per-stratum counts, shares, and the four (d, a) cell moments.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumStats {
    pub label: String,
    pub n_s: usize,
    pub n_a_s: usize,
    pub n_d_s: usize,
    pub n_ad_s: usize,
    /// n_s / n.
    pub p_hat: f64,
    /// n_A(s) / n(s).
    pub pi_a_hat: f64,
    /// P̂(D=1 | A=1, s) = n_AD(s) / n_A(s).
    pub pi_d1_hat: f64,
    /// P̂(D=1 | A=0, s) = (n_D(s) − n_AD(s)) / (n(s) − n_A(s)).
    pub pi_d0_hat: f64,
    cells: [CellMoments; 4],
}

impl StratumStats {
    pub fn cell(&self, d: u8, a: u8) -> &CellMoments {
        &self.cells[cell_index(d, a)]
    }
}

fn cell_index(d: u8, a: u8) -> usize {
    debug_assert!(d <= 1 && a <= 1);
    (2 * d + a) as usize
}

/// All sufficient statistics of a validated dataset: overall size,
/// outcome support, and per-stratum [`StratumStats`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub n: usize,
    pub y_low: f64,
    pub y_high: f64,
    pub strata: Vec<StratumStats>,
}

impl CellStats {
    pub fn num_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn mu(&self, d: u8, a: u8, s: usize) -> f64 {
        self.strata[s].cell(d, a).mu_hat
    }

    pub fn sigma2(&self, d: u8, a: u8, s: usize) -> f64 {
        self.strata[s].cell(d, a).sigma2_hat
    }

    pub fn count(&self, d: u8, a: u8, s: usize) -> usize {
        self.strata[s].cell(d, a).count
    }

    /// The per-stratum assignment probability a source resolves to:
    /// realized frequency n_A(s)/n(s) or the design target π_A(s).
    pub fn assignment_prob(&self, source: &ProbSource, s: usize) -> f64 {
        match source {
            ProbSource::SampleFrequency => self.strata[s].pi_a_hat,
            ProbSource::Target(probs) => probs[s],
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn moments(&self) -> CellMoments {
        if self.count == 0 {
            return CellMoments::default();
        }
        CellMoments {
            count: self.count,
            mu_hat: self.mean,
            sigma2_hat: self.m2 / self.count as f64,
        }
    }
}

/// Computes every stratum/cell statistic in a single pass.
///
/// Errors with [`Error::DegenerateStratum`] when any stratum has all of
/// its units in one assignment arm — every downstream denominator needs
/// n_A(s)/n(s) strictly inside (0, 1).
pub fn compute_cell_stats(dataset: &Dataset) -> Result<CellStats> {
    let n = dataset.n();
    let k = dataset.num_strata();
    let mut counts = vec![[0usize; 4]; k];
    let mut accum = vec![[Welford::default(); 4]; k];

    for i in 0..n {
        let s = dataset.s[i];
        let idx = cell_index(dataset.d[i], dataset.a[i]);
        counts[s][idx] += 1;
        accum[s][idx].push(dataset.y[i]);
    }

    let mut strata = Vec::with_capacity(k);
    for s in 0..k {
        let cell_counts = counts[s];
        let n_s = cell_counts.iter().sum::<usize>();
        let n_a_s = cell_counts[cell_index(0, 1)] + cell_counts[cell_index(1, 1)];
        let n_d_s = cell_counts[cell_index(1, 0)] + cell_counts[cell_index(1, 1)];
        let n_ad_s = cell_counts[cell_index(1, 1)];
        if n_a_s == 0 || n_a_s == n_s {
            return Err(Error::DegenerateStratum(dataset.stratum_labels[s].clone()));
        }
        let cells = [
            accum[s][0].moments(),
            accum[s][1].moments(),
            accum[s][2].moments(),
            accum[s][3].moments(),
        ];
        strata.push(StratumStats {
            label: dataset.stratum_labels[s].clone(),
            n_s,
            n_a_s,
            n_d_s,
            n_ad_s,
            p_hat: n_s as f64 / n as f64,
            pi_a_hat: n_a_s as f64 / n_s as f64,
            pi_d1_hat: n_ad_s as f64 / n_a_s as f64,
            pi_d0_hat: (n_d_s - n_ad_s) as f64 / (n_s - n_a_s) as f64,
            cells,
        });
    }

    Ok(CellStats {
        n,
        y_low: dataset.y_low,
        y_high: dataset.y_high,
        strata,
    })
}
