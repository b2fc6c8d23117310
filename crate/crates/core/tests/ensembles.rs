use std::sync::Arc;

use rarepp::dynamics::{BetaSchedule, Lebesgue, PerturbationSign};
use rarepp::observables::ObservableSpec;
use rarepp::pointprocess::MarkType;
use rarepp::stats::*;
use rarepp::theory::{compound_poisson_sample, CompoundPoissonModel, Multiplicity};
use rarepp::thresholds::threshold_from_tau;

fn beta3(len: usize) -> SystemSpec {
    SystemSpec::Sequential {
        schedule: Arc::new(
            BetaSchedule::new(3.0, 2.0, PerturbationSign::Plus, len)
                .unwrap()
                .make_schedule()
                .unwrap(),
        ),
        xi: Some(2.0),
    }
}

fn run(n: u64, ensemble: usize, q: usize, seed: u64) -> EnsembleRun {
    let obs = ObservableSpec::neg_log(0.5).unwrap();
    let u_n = threshold_from_tau(1.0, n, &Lebesgue, &obs).unwrap().u_n;
    let s = RunSettings {
        system_id: "beta3".into(),
        n,
        h: 1,
        ensemble,
        q,
        mark_type: MarkType::Aot,
        seed,
        reference: ReferenceMeasure::Lebesgue,
    };
    run_ensemble(&beta3(n as usize), &obs, u_n, &s).unwrap()
}

#[test]
fn replay_is_bit_identical_across_thread_counts() {
    let a = run(1000, 2000, 1, 5);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run(1000, 2000, 1, 5));
    assert_eq!(a.orbits(), b.orbits());
    let ta = estimate_theta(&a).unwrap();
    let tb = estimate_theta(&b).unwrap();
    assert_eq!(ta.theta.to_bits(), tb.theta.to_bits());
    assert_eq!(ta.stderr.to_bits(), tb.stderr.to_bits());
    let iv = [(a.window().0, a.window().1)];
    assert_eq!(
        joint_laplace(&a, &iv, &[1.0]).unwrap().value.to_bits(),
        joint_laplace(&b, &iv, &[1.0]).unwrap().value.to_bits()
    );
}

#[test]
fn orbits_regenerate_individually() {
    let obs = ObservableSpec::neg_log(0.5).unwrap();
    let sys = beta3(500);
    let small = simulate_exceedances(&sys, ReferenceMeasure::Lebesgue, &obs, 3.0, 500, 300, 9).unwrap();
    let large = simulate_exceedances(&sys, ReferenceMeasure::Lebesgue, &obs, 3.0, 500, 600, 9).unwrap();
    assert_eq!(small[..], large[..300]);
}

#[test]
fn reference_measure_must_fit_the_system() {
    let obs = ObservableSpec::neg_log(0.5).unwrap();
    assert!(simulate_exceedances(&beta3(100), ReferenceMeasure::SampleMeasure, &obs, 3.0, 100, 10, 1).is_err());
}

#[test]
fn theta_stderr_shrinks_like_inverse_root_ensemble() {
    let se: Vec<f64> = [1000, 4000, 16000]
        .iter()
        .map(|&e| estimate_theta(&run(1000, e, 1, 11)).unwrap().stderr)
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.5).contains(&ratio), "stderr {se:?}");
    }
}

/// Pearson statistic of p-values in ten equal bins; 9 degrees of freedom.
fn uniformity_p(pvalues: &[f64]) -> f64 {
    let mut bins = [0u64; 10];
    for p in pvalues {
        bins[((p * 10.0) as usize).min(9)] += 1;
    }
    let e = pvalues.len() as f64 / 10.0;
    let stat: f64 = bins.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(9.0).unwrap().sf(stat)
}

#[test]
fn ks_and_chi_square_are_calibrated_under_the_sampler() {
    let theta = 0.7;
    let model = CompoundPoissonModel::new(theta, Multiplicity::Geometric { theta }).unwrap();
    let mut ks_p = Vec::new();
    let mut chi_p = Vec::new();
    for rep in 0..500 {
        let m = compound_poisson_sample(&model, 1500.0 / theta, 1000 + rep).unwrap();
        let mut prev = 0.0;
        let gaps: Vec<f64> = m
            .atoms
            .iter()
            .map(|a| {
                let g = a.time - prev;
                prev = a.time;
                g
            })
            .collect();
        let ks = ks_statistic(&Ecdf::new(gaps), |x| 1.0 - (-theta * x).exp(), "exp").unwrap();
        ks_p.push(ks.p_value);
        let hist = SizeHistogram::from_sizes(m.atoms.iter().map(|a| a.mark as usize));
        chi_p.push(chi_square_geometric(&hist, theta).unwrap().p_value);
    }
    assert!(uniformity_p(&ks_p) > 0.001, "KS p-values not uniform");
    assert!(uniformity_p(&chi_p) > 0.001, "chi-square p-values not uniform");
}

/// `m(A ∩ T^-t A)` for the doubling map and `A = [0, 1/3)`, summed over the
/// `2^t` preimage intervals `[k, k + 1/3) / 2^t`.
fn doubling_overlap(t: u32) -> f64 {
    let scale = (1u64 << t) as f64;
    (0..1u64 << t)
        .map(|k| {
            let lo = k as f64 / scale;
            let hi = (k as f64 + 1.0 / 3.0) / scale;
            (hi.min(1.0 / 3.0) - lo).max(0.0)
        })
        .sum()
}

#[test]
fn doubling_map_covariances_match_the_overlap_oracle() {
    let sys = SystemSpec::Sequential {
        schedule: Arc::new(BetaSchedule::constant(2.0, 40).unwrap()),
        xi: None,
    };
    let grid: Vec<usize> = (0..=8).collect();
    let curve =
        correlation_decay_diagnostic(&sys, ReferenceMeasure::Lebesgue, (0.0, 1.0 / 3.0), 5, &grid, 40_000, 3).unwrap();
    for (t, c) in grid.iter().zip(&curve.cov) {
        let exact = doubling_overlap(*t as u32) - 1.0 / 9.0;
        assert!((c.value - exact).abs() <= 4.0 * c.stderr, "t = {t}: {} vs {exact}", c.value);
    }
    assert!((curve.cov[0].value - 2.0 / 9.0).abs() < 0.01);
}

#[test]
fn dprime_with_matched_q_is_below_q_minus_one() {
    for n in [1000, 3000] {
        let r = run(n, 4000, 1, 21);
        let ln = (n as f64).ln();
        let b = run_blocks(&r, (ln.floor() as usize).pow(2), (ln * ln) as usize).unwrap();
        let d1 = dprime_diagnostic(&r, &b).unwrap().total.value;
        let d0 = dprime_diagnostic(&r.with_q(0), &b).unwrap().total.value;
        assert!(d1 < d0, "n = {n}: {d1} vs {d0}");
    }
}

#[test]
fn ulc_vanishes_for_q_zero_and_laplace_at_zero_is_one() {
    let r = run(1000, 2000, 0, 4);
    let b = run_blocks(&r, 36, 47).unwrap();
    let u = ulc_diagnostic(&r, &b, &[0.5, 1.0]).unwrap();
    assert!(u.blocks.iter().chain(&u.gaps).chain([&u.tail]).all(|e| e.value == 0.0));
    let (w0, w1) = r.window();
    assert_eq!(joint_laplace(&r, &[(w0, w1)], &[0.0]).unwrap().value, 1.0);
}
