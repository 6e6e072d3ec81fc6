//! Covariate-adaptive assignment mechanisms and reproducible RNG streams.
//!
//! Two mechanisms are supported: stratified simple random sampling (each
//! unit assigned independently with its stratum's target probability)
//! and stratified block randomization (a uniformly random subset of
//! ⌊n(s)·π_A(s)⌋ units in stratum s is assigned, plus one further unit
//! with probability equal to the fractional remainder of n(s)·π_A(s), so
//! the realized assignment count is unbiased for n(s)·π_A(s) whatever
//! the stratum size). Block randomization drives the within-stratum
//! assignment-share variance to zero, which the variance estimators
//! encode as τ(s) = 0 versus τ(s) = 1 for independent sampling.

use crate::ate::TauMap;
use crate::domain::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Assignment mechanism family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    /// Independent Bernoulli(π_A(s)) assignment within each stratum.
    Srs,
    /// A uniformly random subset of n(s)·π_A(s) units per stratum,
    /// rounded to an adjacent integer without bias.
    Sbr,
}

impl MechanismKind {
    pub fn tag(&self) -> &'static str {
        match self {
            MechanismKind::Srs => "SRS",
            MechanismKind::Sbr => "SBR",
        }
    }
}

/// A concrete mechanism: family plus per-stratum target probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub kind: MechanismKind,
    pi_a: Vec<f64>,
}

impl Mechanism {
    /// Every target probability must lie strictly inside (0, 1): a
    /// degenerate arm leaves one potential-outcome mean unidentified.
    pub fn new(kind: MechanismKind, pi_a: Vec<f64>) -> Result<Self> {
        if pi_a.is_empty() {
            return Err(Error::InvalidConfig(
                "mechanism needs at least one stratum probability".into(),
            ));
        }
        for (s, &p) in pi_a.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::TargetProbOutOfRange {
                    stratum: s.to_string(),
                    value: p,
                });
            }
        }
        Ok(Mechanism { kind, pi_a })
    }

    pub fn num_strata(&self) -> usize {
        self.pi_a.len()
    }

    pub fn pi_a(&self, s: usize) -> f64 {
        self.pi_a[s]
    }

    pub fn targets(&self) -> &[f64] {
        &self.pi_a
    }

    /// Asymptotic variance of the within-stratum assignment share,
    /// relative to independent sampling.
    pub fn tau(&self, _s: usize) -> f64 {
        match self.kind {
            MechanismKind::Srs => 1.0,
            MechanismKind::Sbr => 0.0,
        }
    }

    pub fn tau_map(&self) -> TauMap {
        match self.kind {
            MechanismKind::Srs => TauMap::srs(self.pi_a.len()),
            MechanismKind::Sbr => TauMap::sbr(self.pi_a.len()),
        }
    }
}

fn check_strata(strata: &[usize], mech: &Mechanism) -> Result<()> {
    if let Some(&bad) = strata.iter().find(|&&s| s >= mech.num_strata()) {
        return Err(Error::InvalidConfig(format!(
            "stratum index {bad} out of range for mechanism with {} strata",
            mech.num_strata()
        )));
    }
    Ok(())
}

/// Independent assignment: unit i draws Bernoulli(π_A(strata[i])).
pub fn assign_srs<R: Rng + ?Sized>(
    strata: &[usize],
    mech: &Mechanism,
    rng: &mut R,
) -> Result<Vec<u8>> {
    check_strata(strata, mech)?;
    Ok(strata
        .iter()
        .map(|&s| u8::from(rng.gen::<f64>() < mech.pi_a(s)))
        .collect())
}

/// Block assignment: within each stratum, a uniformly random subset of
/// ⌊n(s)·π_A(s)⌋ units is assigned, plus one more unit with probability
/// equal to the fractional remainder of n(s)·π_A(s). The realized count
/// is therefore unbiased for n(s)·π_A(s) even when it is fractional;
/// when it is an exact integer, exactly that many units are assigned and
/// no extra randomness is consumed.
pub fn assign_sbr<R: Rng + ?Sized>(
    strata: &[usize],
    mech: &Mechanism,
    rng: &mut R,
) -> Result<Vec<u8>> {
    check_strata(strata, mech)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); mech.num_strata()];
    for (i, &s) in strata.iter().enumerate() {
        members[s].push(i);
    }
    let mut out = vec![0u8; strata.len()];
    for (s, idx) in members.iter_mut().enumerate() {
        let target = idx.len() as f64 * mech.pi_a(s);
        let frac = target - target.floor();
        let mut k = target.floor() as usize;
        if frac > 0.0 && rng.gen::<f64>() < frac {
            k += 1;
        }
        idx.shuffle(rng);
        for &i in idx.iter().take(k) {
            out[i] = 1;
        }
    }
    Ok(out)
}

/// Dispatch on the mechanism's family.
pub fn assign<R: Rng + ?Sized>(
    strata: &[usize],
    mech: &Mechanism,
    rng: &mut R,
) -> Result<Vec<u8>> {
    match mech.kind {
        MechanismKind::Srs => assign_srs(strata, mech, rng),
        MechanismKind::Sbr => assign_sbr(strata, mech, rng),
    }
}

/// The independent random-number draws a simulation replication makes.
/// Each purpose gets its own counter-mode stream so a change in how many
/// draws one stage consumes never perturbs another stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Stratum memberships and compliance types.
    Strata = 0,
    /// Treatment assignment.
    Assignment = 1,
    /// Potential outcomes.
    Outcomes = 2,
}

const STREAMS_PER_REPLICATION: u64 = 4;

/// A deterministic generator keyed by (seed, replication, purpose).
/// Streams for distinct keys never overlap, so replications can run on
/// any number of threads in any order and reproduce byte-identically.
pub fn stream(seed: u64, replication: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication * STREAMS_PER_REPLICATION + purpose as u64);
    rng
}
