//! Ensembles of orbits and their exceedances.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FixedBeta, LazyPoint, RandomLySystem};
use crate::error::{Error, Result};
use crate::observables::{circle_dist, ObservableSpec};
use crate::pointprocess::{detect_clusters, mrepp_from_clusters, ClusterRecord, Exceedance, MarkType, MarkedMeasure};
use crate::seeds;
use crate::thresholds::{burn_in_length, frequency_summary, FrequencySummary};

/// The dynamics driving an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    /// `schedule[i - 1] = beta_i`; `xi` is the perturbation exponent, if any.
    Sequential { schedule: Arc<Vec<f64>>, xi: Option<f64> },
    Random(RandomLySystem),
}

/// Measure the initial conditions of an ensemble are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMeasure {
    /// Lebesgue measure `m`.
    Lebesgue,
    /// The fibre measure `mu_omega`, realised as Lebesgue measure pushed
    /// through an independent random prefix of `burn_in` letters.
    SampleMeasure,
}

impl SystemSpec {
    pub fn xi(&self) -> Option<f64> {
        match self {
            SystemSpec::Sequential { xi, .. } => *xi,
            SystemSpec::Random(_) => None,
        }
    }

    pub fn default_reference(&self) -> ReferenceMeasure {
        match self {
            SystemSpec::Sequential { .. } => ReferenceMeasure::Lebesgue,
            SystemSpec::Random(_) => ReferenceMeasure::SampleMeasure,
        }
    }
}

/// Exceedance detector for `phi > u_n`, pre-screened by the ball radius.
#[derive(Debug, Clone, Copy)]
struct Detector {
    obs: ObservableSpec,
    u_n: f64,
    screen: f64,
}

impl Detector {
    fn new(obs: &ObservableSpec, u_n: f64) -> Result<Self> {
        let r = obs.g_inverse(u_n)?;
        Ok(Detector {
            obs: *obs,
            u_n,
            screen: r * (1.0 + 1e-9) + 1e-300,
        })
    }

    #[inline]
    fn check(&self, index: usize, x: f64, out: &mut Vec<Exceedance>) {
        let d = circle_dist(x, self.obs.zeta);
        if d < self.screen {
            let v = self.obs.g(d);
            if v > self.u_n {
                out.push(Exceedance {
                    index,
                    excess: v - self.u_n,
                });
            }
        }
    }
}

/// Prepared dynamics: every orbit starts from a fresh Lebesgue-random point.
pub(crate) struct Stepper {
    betas: Vec<FixedBeta>,
    letters: Option<(WeightedIndex<f64>, usize)>,
}

impl Stepper {
    pub(crate) fn new(system: &SystemSpec, reference: ReferenceMeasure, len: usize) -> Result<Self> {
        match system {
            SystemSpec::Sequential { schedule, .. } => {
                if reference != ReferenceMeasure::Lebesgue {
                    return Err(Error::invalid("reference", "sequential systems start from Lebesgue measure"));
                }
                if schedule.len() + 1 < len {
                    return Err(Error::invalid(
                        "schedule",
                        format!("{} maps cannot produce {len} observations", schedule.len()),
                    ));
                }
                let betas = schedule[..len.saturating_sub(1)]
                    .iter()
                    .map(|&b| FixedBeta::new(b))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Stepper { betas, letters: None })
            }
            SystemSpec::Random(sys) => {
                if reference != ReferenceMeasure::SampleMeasure {
                    return Err(Error::invalid("reference", "random systems start from their sample measures"));
                }
                let betas = sys
                    .alphabet
                    .iter()
                    .map(|&b| FixedBeta::new(b))
                    .collect::<Result<Vec<_>>>()?;
                let dist =
                    WeightedIndex::new(&sys.weights).map_err(|e| Error::invalid("weights", e.to_string()))?;
                Ok(Stepper {
                    betas,
                    letters: Some((dist, sys.burn_in)),
                })
            }
        }
    }

    /// Calls `f(i, x_i)` for `i = 0..len` along the orbit with seed `seed`.
    #[inline]
    pub(crate) fn visit<F: FnMut(usize, f64)>(&self, seed: u64, len: usize, mut f: F) {
        let mut rng = seeds::rng(seed);
        let mut p = LazyPoint::uniform(&mut rng);
        match &self.letters {
            None => {
                if len > 0 {
                    f(0, p.value());
                }
                for (i, b) in self.betas.iter().take(len.saturating_sub(1)).enumerate() {
                    p.step(*b, &mut rng);
                    f(i + 1, p.value());
                }
            }
            Some((dist, burn_in)) => {
                for _ in 0..*burn_in {
                    let l = dist.sample(&mut rng);
                    p.step(self.betas[l], &mut rng);
                }
                if len > 0 {
                    f(0, p.value());
                }
                for i in 1..len {
                    let l = dist.sample(&mut rng);
                    p.step(self.betas[l], &mut rng);
                    f(i, p.value());
                }
            }
        }
    }
}

/// Exceedances of `X_0, ..., X_{len-1}` for each of `ensemble` orbits.
///
/// Orbit `k` uses the generator seeded with `seeds::derive(seed, k)`; the
/// result does not depend on the number of worker threads.
pub fn simulate_exceedances(
    system: &SystemSpec,
    reference: ReferenceMeasure,
    obs: &ObservableSpec,
    u_n: f64,
    len: usize,
    ensemble: usize,
    seed: u64,
) -> Result<Vec<Vec<Exceedance>>> {
    let det = Detector::new(obs, u_n)?;
    let stepper = Stepper::new(system, reference, len)?;
    Ok((0..ensemble)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            stepper.visit(seeds::derive(seed, k as u64), len, |i, x| det.check(i, x, &mut out));
            out
        })
        .collect())
}

/// Exceedances of an ensemble at one value of `n`, with everything needed to
/// replay it.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub system_id: String,
    pub n: u64,
    pub h: u64,
    pub u_n: f64,
    pub a_n: f64,
    pub q: usize,
    pub mark_type: MarkType,
    /// `floor(n^gamma)`.
    pub burn_in: usize,
    pub seed: u64,
    pub reference: ReferenceMeasure,
    pub frequencies: FrequencySummary,
    orbits: Arc<Vec<Vec<Exceedance>>>,
}

/// Settings for [`run_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub system_id: String,
    pub n: u64,
    pub h: u64,
    pub ensemble: usize,
    pub q: usize,
    pub mark_type: MarkType,
    pub seed: u64,
    pub reference: ReferenceMeasure,
}

/// Simulates `ensemble` orbits of length `H n` and records their exceedances of `u_n`.
pub fn run_ensemble(system: &SystemSpec, obs: &ObservableSpec, u_n: f64, s: &RunSettings) -> Result<EnsembleRun> {
    let len = (s.n * s.h) as usize;
    let orbits = simulate_exceedances(system, s.reference, obs, u_n, len, s.ensemble, s.seed)?;
    EnsembleRun::from_exceedances(system, obs, u_n, s, orbits)
}

impl EnsembleRun {
    pub fn from_exceedances(
        system: &SystemSpec,
        obs: &ObservableSpec,
        u_n: f64,
        s: &RunSettings,
        orbits: Vec<Vec<Exceedance>>,
    ) -> Result<Self> {
        let len = (s.n * s.h) as usize;
        let mut counts = vec![0u64; len];
        let mut first_n = Vec::with_capacity(orbits.len());
        for o in &orbits {
            let mut c = 0;
            for e in o {
                if e.index >= len {
                    return Err(Error::invalid("orbits", "exceedance index beyond H n"));
                }
                counts[e.index] += 1;
                if (e.index as u64) < s.n {
                    c += 1;
                }
            }
            first_n.push(c);
        }
        let frequencies = frequency_summary(&counts, &first_n, s.n, s.h)?;
        Ok(EnsembleRun {
            system_id: s.system_id.clone(),
            n: s.n,
            h: s.h,
            u_n,
            a_n: obs.normalizer(u_n)?,
            q: s.q,
            mark_type: s.mark_type,
            burn_in: burn_in_length(s.n, system.xi()),
            seed: s.seed,
            reference: s.reference,
            frequencies,
            orbits: Arc::new(orbits),
        })
    }

    pub fn len(&self) -> usize {
        (self.n * self.h) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn ensemble(&self) -> usize {
        self.orbits.len()
    }

    pub fn orbits(&self) -> &[Vec<Exceedance>] {
        &self.orbits
    }

    /// Seed of orbit `k`.
    pub fn orbit_seed(&self, k: usize) -> u64 {
        seeds::derive(self.seed, k as u64)
    }

    /// The same orbits analysed with another `q`.
    pub fn with_q(&self, q: usize) -> Self {
        EnsembleRun { q, ..self.clone() }
    }

    pub fn with_mark(&self, mark_type: MarkType) -> Self {
        EnsembleRun {
            mark_type,
            ..self.clone()
        }
    }

    /// Per-index exceedance counts over `0..H n`.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.len()];
        for o in self.orbits.iter() {
            for e in o {
                counts[e.index] += 1;
            }
        }
        counts
    }

    pub fn clusters(&self, k: usize) -> Vec<ClusterRecord> {
        detect_clusters(&self.orbits[k], self.q, self.len()).expect("exceedances are sorted and in range")
    }

    pub fn v_n(&self) -> f64 {
        self.frequencies.v_n
    }

    /// Marked measure of orbit `k` with the run's `q` and mark type.
    pub fn measure(&self, k: usize) -> MarkedMeasure {
        mrepp_from_clusters(&self.clusters(k), self.u_n, self.q, self.mark_type, self.v_n())
            .expect("v_n is positive by construction")
    }

    /// Rescaled observation window `[burn_in / v_n, H n / v_n)`.
    pub fn window(&self) -> (f64, f64) {
        (self.burn_in as f64 / self.v_n(), self.len() as f64 / self.v_n())
    }
}
