//! Runs a configured experiment over its `n` grid.

use std::sync::Arc;

use rarepp::dynamics::{BetaSchedule, Lebesgue, RandomLySystem};
use rarepp::pointprocess::{estimate_q, ExceedanceEnsemble, MarkType, QEstimate, QStatus};
use rarepp::seeds;
use rarepp::stats::{
    chi_square_geometric, dprime_diagnostic, empirical_multiplicity, estimate_theta, interarrival_test,
    ks_statistic, laplace_convergence, run_atom_windows, run_blocks, simulate_exceedances, ulc_diagnostic,
    EnsembleRun, ReferenceMeasure, RunSettings, SystemSpec,
};
use rarepp::theory::{extremal_index, AotForm, CompoundPoissonModel, ExtremalIndex, Multiplicity, ZetaKind};
use rarepp::thresholds::{marginal_threshold, threshold_from_tau};
use rarepp::{Error, Result};

use crate::bundle::{
    Adjudication, BlockCheck, BlockSummary, Bundle, MarkSummary, NResult, QRecord, SeedLedger, SizeSummary,
    TheorySummary, ThresholdRecord, VariantVerdict, BUNDLE_FORMAT,
};
use crate::config::{BoundaryVariant, ExperimentConfig, QChoice, SystemConfig};
use crate::plot::csv_manifest;

/// Largest gap tried by `estimate-q`.
pub const Q_SEARCH_MAX: usize = 8;
/// Fibre points used to cross-check marginal thresholds.
pub const MARGINAL_MC_SAMPLES: usize = 100_000;
/// Points of the ECDF grid stored per mark type.
pub const ECDF_GRID: usize = 101;
/// Size classes stored in the cluster-size histogram.
const SIZE_CLASSES: usize = 20;

/// A finished experiment: the bundle plus the runs it was computed from.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub bundle: Bundle,
    pub runs: Vec<EnsembleRun>,
}

/// Everything that does not depend on `n`.
struct Setup {
    system: SystemConfig,
    random: Option<RandomLySystem>,
    reference: ReferenceMeasure,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let random = match &cfg.system {
            SystemConfig::Random {
                alphabet,
                weights,
                burn_in,
            } => Some(RandomLySystem::new(alphabet.clone(), weights.clone())?.with_burn_in(*burn_in)),
            _ => None,
        };
        let reference = if random.is_some() {
            ReferenceMeasure::SampleMeasure
        } else {
            ReferenceMeasure::Lebesgue
        };
        Ok(Setup {
            system: cfg.system.clone(),
            random,
            reference,
        })
    }

    fn system(&self, len: usize) -> Result<SystemSpec> {
        let maps = len.saturating_sub(1).max(1);
        Ok(match (&self.system, &self.random) {
            (SystemConfig::Sequential { beta, xi, sign }, _) => SystemSpec::Sequential {
                schedule: Arc::new(BetaSchedule::new(*beta, *xi, *sign, maps)?.make_schedule()?),
                xi: Some(*xi),
            },
            (SystemConfig::Constant { beta }, _) => SystemSpec::Sequential {
                schedule: Arc::new(BetaSchedule::constant(*beta, maps)?),
                xi: None,
            },
            (SystemConfig::Random { .. }, Some(r)) => SystemSpec::Random(r.clone()),
            (SystemConfig::Random { .. }, None) => unreachable!("random systems are built in Setup::new"),
        })
    }

    fn threshold(&self, cfg: &ExperimentConfig, n: u64, seed: u64) -> Result<ThresholdRecord> {
        match &self.random {
            None => Ok(ThresholdRecord::closed(threshold_from_tau(cfg.tau, n, &Lebesgue, &cfg.observable)?)),
            Some(r) => {
                let m = marginal_threshold(
                    cfg.tau,
                    n,
                    r,
                    &cfg.observable,
                    MARGINAL_MC_SAMPLES,
                    seeds::derive_labelled(seed, "threshold", 0),
                )?;
                Ok(ThresholdRecord::marginal(&m))
            }
        }
    }
}

fn system_id(cfg: &ExperimentConfig) -> String {
    match &cfg.system {
        SystemConfig::Sequential { beta, xi, sign } => format!("sequential(beta={beta}, xi={xi}, sign={sign:?})"),
        SystemConfig::Constant { beta } => format!("constant(beta={beta})"),
        SystemConfig::Random { alphabet, weights, .. } => format!("random(alphabet={alphabet:?}, weights={weights:?})"),
    }
}

/// Seed of the ensemble at `n`.
pub fn run_seed(master: u64, n: u64) -> u64 {
    seeds::derive_labelled(master, "n", n)
}

/// Orbits at one `n`, before any `q`-dependent analysis.
struct Simulated {
    n: u64,
    seed: u64,
    threshold: ThresholdRecord,
    system: SystemSpec,
    orbits: Vec<Vec<rarepp::pointprocess::Exceedance>>,
}

fn simulate(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<Simulated>> {
    cfg.n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let seed = run_seed(cfg.seed, n);
            let len = (n * cfg.h) as usize;
            let threshold = setup.threshold(cfg, n, seed)?;
            let system = setup.system(len)?;
            let orbits = simulate_exceedances(
                &system,
                setup.reference,
                &cfg.observable,
                threshold.u_n,
                len,
                cfg.ensemble_at(k),
                seed,
            )?;
            Ok(Simulated {
                n,
                seed,
                threshold,
                system,
                orbits,
            })
        })
        .collect()
}

fn q_from_orbits(sims: &[Simulated], h: u64) -> Result<QEstimate> {
    let ensembles: Vec<ExceedanceEnsemble> = sims
        .iter()
        .map(|s| ExceedanceEnsemble {
            n: s.n,
            len: (s.n * h) as usize,
            orbits: s.orbits.iter().map(|o| o.iter().map(|e| e.index).collect()).collect(),
        })
        .collect();
    estimate_q(&ensembles, Q_SEARCH_MAX)
}

/// Simulates the configured ensembles and estimates `q` from their escape return times.
pub fn estimate_q_for(cfg: &ExperimentConfig) -> Result<QEstimate> {
    let setup = Setup::new(cfg)?;
    q_from_orbits(&simulate(cfg, &setup)?, cfg.h)
}

/// The limit model the runs are compared with.
#[derive(Debug, Clone)]
pub struct Theory {
    pub index: Option<ExtremalIndex>,
    pub theta: f64,
    pub period: Option<u32>,
    pub beta: Option<f64>,
}

impl Theory {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let target = cfg.theory.target;
        let beta = cfg.reference_beta();
        let index = match beta {
            Some(b) => Some(extremal_index(b, target, None)?),
            None => None,
        };
        let theta = match index {
            _ if target == ZetaKind::Aperiodic => 1.0,
            Some(ExtremalIndex::Single { theta }) => theta,
            Some(ExtremalIndex::Boundary {
                verbatim,
                normalized,
            }) => match cfg.theory.boundary_variant {
                Some(BoundaryVariant::Verbatim) => verbatim,
                _ => normalized,
            },
            None => {
                return Err(Error::InvalidParameter {
                    name: "target",
                    reason: "random systems are only modelled at aperiodic targets".into(),
                })
            }
        };
        let period = match target {
            ZetaKind::InteriorPeriodic { p } | ZetaKind::Boundary { p } => Some(p),
            ZetaKind::Aperiodic => None,
        };
        Ok(Theory {
            index,
            theta,
            period,
            beta,
        })
    }

    /// `pi` for a mark type; `None` where no closed form applies.
    pub fn multiplicity(&self, cfg: &ExperimentConfig, mark: MarkType) -> Option<Multiplicity> {
        let g = cfg.observable.g;
        let boundary = matches!(cfg.theory.target, ZetaKind::Boundary { .. });
        match (mark, self.period, self.beta) {
            (MarkType::Repp, None, _) => Some(Multiplicity::UnitMass),
            (MarkType::Repp, Some(_), _) => Some(Multiplicity::Geometric { theta: self.theta }),
            (MarkType::Pot, _, _) if !boundary => Some(Multiplicity::Pot(g)),
            (MarkType::Aot, None, _) => Some(Multiplicity::Pot(g)),
            (MarkType::Aot, Some(p), Some(b)) if !boundary => Some(Multiplicity::AotTable {
                form: AotForm::from(&g),
                m: b.powi(p as i32),
            }),
            _ => None,
        }
    }

    pub fn model(&self, cfg: &ExperimentConfig, mark: MarkType) -> Option<CompoundPoissonModel> {
        self.multiplicity(cfg, mark)
            .and_then(|pi| CompoundPoissonModel::new(self.theta, pi).ok())
    }
}

fn describe(pi: &Option<Multiplicity>) -> String {
    match pi {
        None => "none".into(),
        Some(Multiplicity::UnitMass) => "unit_mass".into(),
        Some(Multiplicity::Geometric { theta }) => format!("geometric(theta={theta})"),
        Some(Multiplicity::Pot(g)) => format!("pot({g:?})"),
        Some(Multiplicity::AotTable { form, m }) => format!("aot_table({form:?}, m={m})"),
        Some(Multiplicity::Empirical(s)) => format!("empirical({} points)", s.len()),
    }
}

/// Records a failed analysis step; numerical failures abort the run.
fn soft<T>(r: Result<T>, what: &str, notes: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ Error::Numerical(_)) => Err(e),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            Ok(None)
        }
    }
}

fn mark_summary(run: &EnsembleRun, mark: MarkType, pi: Option<Multiplicity>, notes: &mut Vec<String>) -> Result<Option<MarkSummary>> {
    let r = run.with_mark(mark);
    let Some(sample) = soft(empirical_multiplicity(&r), mark.name(), notes)? else {
        return Ok(None);
    };
    let ks = match (&pi, mark) {
        (Some(p), MarkType::Aot | MarkType::Pot) => soft(
            ks_statistic(&sample.ecdf, |x| p.cdf(x), &describe(&pi)).map(|t| t.with_run(run.ensemble(), run.seed)),
            &format!("{} KS", mark.name()),
            notes,
        )?,
        _ => None,
    };
    let xs = sample.ecdf.sample();
    let hi = if xs.is_empty() {
        1.0
    } else {
        xs[((xs.len() - 1) as f64 * 0.99) as usize].max(1e-12)
    };
    let grid = (0..ECDF_GRID)
        .map(|i| {
            let x = hi * i as f64 / (ECDF_GRID - 1) as f64;
            [x, sample.ecdf.eval(x), pi.as_ref().map_or(f64::NAN, |p| p.cdf(x))]
        })
        .collect();
    Ok(Some(MarkSummary {
        mark_type: mark,
        clusters: sample.clusters,
        finite: sample.ecdf.len(),
        infinite: sample.infinite,
        pi_theory: describe(&pi),
        ks,
        ecdf_grid: grid,
    }))
}

fn size_summary(run: &EnsembleRun, theory: &Theory, notes: &mut Vec<String>) -> Result<Option<SizeSummary>> {
    let Some(sample) = soft(empirical_multiplicity(&run.with_mark(MarkType::Repp)), "cluster sizes", notes)? else {
        return Ok(None);
    };
    let chi = soft(
        chi_square_geometric(&sample.sizes, theory.theta).map(|t| t.with_run(run.ensemble(), run.seed)),
        "chi-square",
        notes,
    )?;
    let mut histogram: Vec<u64> = sample.sizes.counts.iter().take(SIZE_CLASSES + 1).copied().collect();
    let overflow: u64 = sample.sizes.counts.iter().skip(SIZE_CLASSES + 1).sum();
    if let Some(last) = histogram.last_mut() {
        *last += overflow;
    }
    Ok(Some(SizeSummary {
        clusters: sample.clusters,
        histogram,
        k1_mass: sample.sizes.mass(1),
        chi_square: chi,
    }))
}

/// Equal splits of the observation window.
pub fn laplace_intervals(run: &EnsembleRun, k: usize) -> Vec<(f64, f64)> {
    let (w0, w1) = run.window();
    (0..k)
        .map(|i| {
            let a = w0 + (w1 - w0) * i as f64 / k as f64;
            let b = if i + 1 == k { w1 } else { w0 + (w1 - w0) * (i + 1) as f64 / k as f64 };
            (a, b)
        })
        .collect()
}

fn analyse(cfg: &ExperimentConfig, sim: Simulated, q: usize, theory: &Theory, k: usize) -> Result<(NResult, EnsembleRun)> {
    let settings = RunSettings {
        system_id: system_id(cfg),
        n: sim.n,
        h: cfg.h,
        ensemble: cfg.ensemble_at(k),
        q,
        mark_type: cfg.mark_type,
        seed: sim.seed,
        reference: if matches!(cfg.system, SystemConfig::Random { .. }) {
            ReferenceMeasure::SampleMeasure
        } else {
            ReferenceMeasure::Lebesgue
        },
    };
    let run = EnsembleRun::from_exceedances(&sim.system, &cfg.observable, sim.threshold.u_n, &settings, sim.orbits)?;
    let mut notes = Vec::new();
    let theta = soft(estimate_theta(&run), "theta", &mut notes)?;

    let mut marks = Vec::new();
    for mark in [MarkType::Aot, MarkType::Pot] {
        if let Some(m) = mark_summary(&run, mark, theory.multiplicity(cfg, mark), &mut notes)? {
            marks.push(m);
        }
    }
    let sizes = size_summary(&run, theory, &mut notes)?;
    let interarrival = match soft(run_atom_windows(&run), "atom windows", &mut notes)? {
        Some(w) => soft(
            interarrival_test(&w, theory.theta).map(|t| t.with_run(run.ensemble(), run.seed)),
            "interarrival",
            &mut notes,
        )?,
        None => None,
    };

    let k_n = cfg.k_n.at(sim.n);
    let t_star = cfg.t_star.at(sim.n);
    let blocks = soft(run_blocks(&run, k_n, t_star), "blocks", &mut notes)?;
    let mut dprime = Vec::new();
    let mut ulc = None;
    let mut block_summary = None;
    if let Some(b) = &blocks {
        block_summary = Some(BlockSummary {
            k_n,
            t_n_star: t_star,
            start: b.start,
            tail_start: b.tail_start,
            epsilon: b.epsilon,
            short_gaps: b.short_gaps,
            kn_tstar_fmax: b.kn_tstar_fmax(),
            exact_check: b.check_estimates(),
        });
        for qq in [Some(q), q.checked_sub(1)].into_iter().flatten() {
            if let Some(d) = soft(dprime_diagnostic(&run.with_q(qq), b), "dprime", &mut notes)? {
                dprime.push(d);
            }
        }
        let y = cfg.ulc_y.clone().unwrap_or_else(|| cfg.laplace.y.clone());
        ulc = soft(ulc_diagnostic(&run, b, &y), "ulc", &mut notes)?;
    }

    let laplace = match theory.model(cfg, cfg.mark_type) {
        Some(model) => soft(
            laplace_convergence(&run, &model, &laplace_intervals(&run, cfg.laplace.intervals), &cfg.laplace.y),
            "laplace",
            &mut notes,
        )?,
        None => {
            notes.push(format!("laplace: no limit model for {} marks", cfg.mark_type.name()));
            None
        }
    };

    let result = NResult {
        n: sim.n,
        ensemble: run.ensemble(),
        seed: sim.seed,
        threshold: sim.threshold,
        a_n: run.a_n,
        burn_in: run.burn_in,
        frequencies: run.frequencies.clone(),
        theta,
        marks,
        sizes,
        interarrival,
        blocks: block_summary,
        dprime,
        ulc,
        laplace_within_3sigma: laplace.as_ref().map(|t| t.within(3.0)),
        laplace,
        notes,
    };
    Ok((result, run))
}

fn adjudicate(theory: &Theory, results: &[NResult]) -> Option<Adjudication> {
    let Some(ExtremalIndex::Boundary { .. }) = theory.index else {
        return None;
    };
    let last = results.iter().rev().find(|r| r.theta.is_some())?;
    let est = last.theta?;
    let (lo, hi) = est.interval(1.96);
    let variants: Vec<VariantVerdict> = theory
        .index?
        .candidates()
        .into_iter()
        .map(|(name, value)| VariantVerdict {
            name: name.to_string(),
            theta: value,
            excluded: value < lo || value > hi,
        })
        .collect();
    let supported = variants.iter().filter(|v| !v.excluded).map(|v| v.name.clone()).collect();
    Some(Adjudication {
        n: last.n,
        theta_hat: est.theta,
        ci: (lo, hi),
        confidence: 0.95,
        variants,
        supported,
    })
}

fn block_check(results: &[NResult]) -> BlockCheck {
    let values: Vec<(u64, f64)> = results
        .iter()
        .filter_map(|r| r.blocks.as_ref().map(|b| (r.n, b.kn_tstar_fmax)))
        .collect();
    let decreasing = values.windows(2).all(|w| w[1].1 < w[0].1);
    let mut warnings = Vec::new();
    if !decreasing {
        warnings.push("k_n t* Fbar_max does not decrease along the n grid".to_string());
    }
    if let Some(&(n, v)) = values.last() {
        if v >= 1.0 {
            warnings.push(format!("k_n t* Fbar_max = {v} at the largest n = {n} is not small"));
        }
    }
    BlockCheck {
        values,
        decreasing,
        warnings,
    }
}

/// Simulates, analyses and bundles every `n` of the grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let setup = Setup::new(cfg)?;
    let theory = Theory::new(cfg)?;
    let sims = simulate(cfg, &setup)?;
    let (q, q_record) = match cfg.q {
        QChoice::Fixed(q) => (
            q,
            QRecord {
                value: q,
                source: "config".into(),
                estimate: None,
            },
        ),
        QChoice::Keyword(_) => {
            let est = q_from_orbits(&sims, cfg.h)?;
            match est.status {
                QStatus::Determined { q } => (
                    q,
                    QRecord {
                        value: q,
                        source: "estimate".into(),
                        estimate: Some(est),
                    },
                ),
                QStatus::Undetermined => {
                    return Err(Error::Numerical(format!(
                        "q could not be determined from gaps up to {Q_SEARCH_MAX}"
                    )))
                }
            }
        }
    };
    let mut results = Vec::new();
    let mut runs = Vec::new();
    let mut ledger = Vec::new();
    for (k, sim) in sims.into_iter().enumerate() {
        ledger.push((sim.n, sim.seed));
        let (r, run) = analyse(cfg, sim, q, &theory, k)?;
        results.push(r);
        runs.push(run);
    }
    let theory_summary = TheorySummary {
        target: cfg.theory.target,
        beta: theory.beta,
        extremal_index: theory.index,
        boundary_variant: cfg.theory.boundary_variant.map(|v| v.name().to_string()),
        theta: theory.theta,
        multiplicity: [MarkType::Aot, MarkType::Pot, MarkType::Repp]
            .iter()
            .map(|&m| (m.name().to_string(), describe(&theory.multiplicity(cfg, m))))
            .collect(),
    };
    let bundle = Bundle {
        format: BUNDLE_FORMAT.into(),
        name: cfg.name.clone(),
        system_id: system_id(cfg),
        reference_measure: setup.reference,
        config: cfg.clone(),
        seed_ledger: SeedLedger {
            master: cfg.seed,
            runs: ledger,
            run_rule: "derive_labelled(master, \"n\", n)".into(),
            orbit_rule: "derive(run_seed, k)".into(),
            bootstrap_rule: "derive_labelled(run_seed, \"bootstrap\", 0)".into(),
        },
        theory: theory_summary,
        q: q_record,
        adjudication: adjudicate(&theory, &results),
        block_condition: block_check(&results),
        results,
        csv_manifest: csv_manifest(),
    };
    Ok(Experiment { bundle, runs })
}
