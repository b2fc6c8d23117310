//! Self-contained checks run by `selftest` and reused by the acceptance suite.

use rand::Rng;

use rarepp::dynamics::{parry_density, FixedBeta, LazyPoint, ParryDensity};
use rarepp::observables::ObservableSpec;
use rarepp::pointprocess::{detect_clusters, quantize_probability, BlockPartition, Exceedance};
use rarepp::seeds;
use rarepp::stats::{ks_statistic, Ecdf, Estimate};
use rarepp::theory::{
    aot_multiplicity_general, aot_multiplicity_table, compound_poisson_laplace, compound_poisson_sample, AotForm,
    CompoundPoissonModel, Multiplicity,
};
use rarepp::Result;

use crate::assertions::Outcome;

/// Brute-force level sets of a series: `u[k][i]` says `i` is in `U^(k)`,
/// `q[k][i]` says `i` is in `Q^(k)`. Indices past the end are non-exceedances.
pub fn brute_force_levels(values: &[f64], u_n: f64, q: usize) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let len = values.len();
    let any_ahead = |set: &[bool], i: usize| (1..=q).any(|l| i + l < len && set[i + l]);
    let mut us = vec![values.iter().map(|v| *v > u_n).collect::<Vec<bool>>()];
    let mut qs = Vec::new();
    loop {
        let cur = us.last().unwrap().clone();
        qs.push((0..len).map(|i| cur[i] && !any_ahead(&cur, i)).collect());
        let next: Vec<bool> = (0..len).map(|i| cur[i] && any_ahead(&cur, i)).collect();
        if !next.iter().any(|b| *b) {
            break;
        }
        us.push(next);
    }
    (us, qs)
}

/// Compares `detect_clusters` with the brute-force level sets on random series.
pub fn cluster_oracle(trials: usize, seed: u64) -> Result<Outcome> {
    let mut rng = seeds::rng(seeds::derive_labelled(seed, "cluster-oracle", 0));
    let mut mismatches = 0;
    let mut compared = 0;
    for _ in 0..trials {
        let len = rng.random_range(1..=200);
        let density: f64 = rng.random_range(0.0..0.6);
        let values: Vec<f64> = (0..len)
            .map(|_| if rng.random::<f64>() < density { 1.0 + rng.random::<f64>() } else { rng.random::<f64>() })
            .collect();
        let u_n = 1.0;
        let ex: Vec<Exceedance> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > u_n)
            .map(|(index, v)| Exceedance { index, excess: v - u_n })
            .collect();
        for q in 0..=3 {
            compared += 1;
            let clusters = detect_clusters(&ex, q, len)?;
            let (us, qs) = brute_force_levels(&values, u_n, q);
            let mut label = vec![None; len];
            for c in &clusters {
                for (i, k) in c.levels() {
                    label[i] = Some(k);
                }
            }
            let levels_match = (0..us.len().max(clusters.iter().map(|c| c.kappa + 1).max().unwrap_or(0))).all(|k| {
                (0..len).all(|i| {
                    let in_u = us.get(k).is_some_and(|s| s[i]);
                    let in_q = qs.get(k).is_some_and(|s| s[i]);
                    in_u == label[i].is_some_and(|l| l >= k) && in_q == (label[i] == Some(k))
                })
            });
            let shape_ok = clusters.iter().all(|c| {
                c.indices.len() == c.kappa + 1
                    && c.escape_index == *c.indices.last().unwrap()
                    && (c.first_index()..=c.escape_index).filter(|&i| us[0][i]).count() == c.indices.len()
            });
            if !(levels_match && shape_ok) {
                mismatches += 1;
            }
        }
    }
    Ok(Outcome {
        name: "cluster_oracle",
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches in {compared} (series, q) pairs"),
    })
}

/// Re-checks the block inequalities of a partition in exact integer arithmetic.
pub fn verify_blocks(fbar: &[f64], p: &BlockPartition) -> Result<bool> {
    let w: Vec<u128> = fbar.iter().map(|&x| quantize_probability(x)).collect::<Result<_>>()?;
    let body = &w[p.start..];
    let total: u128 = body.iter().sum();
    let wmax = body.iter().copied().max().unwrap_or(0);
    let k = p.k_n as u128;
    if p.cumulative.len() != p.k_n + 1 || p.cumulative[0] != p.start || p.tail_start != p.cumulative[p.k_n] {
        return Ok(false);
    }
    if p.cumulative.windows(2).any(|c| c[1] < c[0]) || p.tail_start > fbar.len() {
        return Ok(false);
    }
    for i in 1..=p.k_n {
        let s: u128 = w[p.cumulative[i - 1]..p.cumulative[i]].iter().sum();
        // F*/k - Fmax <= s <= F*/k, multiplied through by k
        if s * k > total || total > (s + wmax) * k {
            return Ok(false);
        }
    }
    let tail: u128 = w[p.tail_start..].iter().sum();
    Ok(tail <= k * wmax)
}

/// Builds partitions of random `Fbar` sequences and verifies every block.
pub fn blocking_oracle(trials: usize, seed: u64) -> Result<Outcome> {
    let mut rng = seeds::rng(seeds::derive_labelled(seed, "blocking-oracle", 0));
    let mut failures = 0;
    for _ in 0..trials {
        let len = rng.random_range(200..5000);
        let scale: f64 = 10f64.powf(rng.random_range(-6.0..-1.0));
        let fbar: Vec<f64> = (0..len).map(|_| scale * rng.random::<f64>()).collect();
        let start = rng.random_range(0..len / 10);
        let k_n = rng.random_range(1..30);
        let t_star = rng.random_range(0..20);
        let p = BlockPartition::from_probabilities(&fbar, k_n, t_star, start)?;
        if !verify_blocks(&fbar, &p)? {
            failures += 1;
        }
    }
    Ok(Outcome {
        name: "blocking_oracle",
        passed: failures == 0,
        detail: format!("{failures} of {trials} partitions violate a block inequality"),
    })
}

/// Gaps of a compound Poisson sample against `Exp(theta)`, and window
/// averages of `exp(-y A(I))` against the closed-form transform.
pub fn sampler_check(events: usize, seed: u64) -> Result<Vec<Outcome>> {
    let theta = 2.0 / 3.0;
    let model = CompoundPoissonModel::new(theta, Multiplicity::AotTable { form: AotForm::NegLog, m: 3.0 })?;
    let horizon = events as f64 / theta;
    let sample = compound_poisson_sample(&model, horizon, seed)?;
    let mut gaps = Vec::with_capacity(sample.atoms.len());
    let mut prev = 0.0;
    for a in &sample.atoms {
        gaps.push(a.time - prev);
        prev = a.time;
    }
    let ks = ks_statistic(&Ecdf::new(gaps), |x| 1.0 - (-theta * x).exp(), "exponential")?;
    let mut out = vec![Outcome {
        name: "sampler_gaps",
        passed: ks.p_value > 0.01,
        detail: format!("{} atoms, KS = {:.5}, p = {:.4}", sample.atoms.len(), ks.statistic, ks.p_value),
    }];
    let windows = horizon.floor() as usize;
    let mut mass = vec![0.0; windows];
    for a in &sample.atoms {
        let w = a.time.floor() as usize;
        if w < windows {
            mass[w] += a.mark;
        }
    }
    let mut worst: f64 = 0.0;
    let mut within = true;
    for y in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let vals: Vec<f64> = mass.iter().map(|m| (-y * m).exp()).collect();
        let e = Estimate::mean_of(&vals);
        let theory = compound_poisson_laplace(&model, &[(0.0, 1.0)], &[y])?;
        let z = (e.value - theory).abs() / e.stderr;
        worst = worst.max(z);
        within &= z <= 3.0;
    }
    out.push(Outcome {
        name: "sampler_laplace",
        passed: within,
        detail: format!("{windows} unit windows, largest |z| = {worst:.3} over 5 values of y"),
    });
    Ok(out)
}

/// Occupation histogram of one long orbit against the Parry density.
pub fn parry_check(beta: f64, steps: usize, cells: usize, seed: u64) -> Result<(f64, Outcome)> {
    let map = FixedBeta::new(beta)?;
    let mut rng = seeds::rng(seeds::derive_labelled(seed, "parry", 0));
    let mut p = LazyPoint::uniform(&mut rng);
    let mut hist = vec![0u64; cells];
    for _ in 0..steps {
        p.step(map, &mut rng);
        hist[((p.value() * cells as f64) as usize).min(cells - 1)] += 1;
    }
    let density = parry_density(beta, 200, cells)?;
    let width = 1.0 / cells as f64;
    let l1: f64 = hist
        .iter()
        .zip(density.values())
        .map(|(&c, &h)| (c as f64 / steps as f64 / width - h).abs() * width)
        .sum();
    Ok((
        l1,
        Outcome {
            name: "parry_occupation",
            passed: l1 < 0.05,
            detail: format!("beta = {beta}, {steps} steps, {cells} cells, L1 = {l1:.5}"),
        },
    ))
}

/// Integer `beta` has the constant density `1`.
pub fn integer_parry_check() -> Result<Outcome> {
    let mut exact = true;
    for beta in [2.0, 3.0, 5.0] {
        let d = ParryDensity::new(beta)?;
        exact &= (0..1000).all(|i| d.density_at(i as f64 / 1000.0) == 1.0);
        exact &= parry_density(beta, 200, 256)?.values().iter().all(|v| *v == 1.0);
    }
    Ok(Outcome {
        name: "parry_integer",
        passed: exact,
        detail: "density identically 1 for beta = 2, 3, 5".into(),
    })
}

/// Pre-limit AOT multiplicity at a high level against the table row.
pub fn aot_general_check(u: f64, points: usize) -> Result<(f64, Outcome)> {
    let obs = ObservableSpec::neg_log(0.5)?;
    let mut sup: f64 = 0.0;
    for i in 0..=points {
        let x = 5.0 * i as f64 / points as f64;
        let a = aot_multiplicity_general(&obs, 3.0, u, x)?;
        let b = aot_multiplicity_table(AotForm::NegLog, 3.0, x)?;
        sup = sup.max((a - b).abs());
    }
    Ok((
        sup,
        Outcome {
            name: "aot_general_vs_table",
            passed: sup < 1e-3,
            detail: format!("sup |general - table| = {sup:.3e} on [0, 5] at u = {u}"),
        },
    ))
}

/// The quick checks of the `selftest` verb.
pub fn run_all(seed: u64) -> Result<Vec<Outcome>> {
    let mut out = vec![cluster_oracle(200, seed)?, blocking_oracle(20, seed)?];
    out.extend(sampler_check(20_000, seed)?);
    out.push(parry_check((1.0 + 5f64.sqrt()) / 2.0, 200_000, 50, seed)?.1);
    out.push(integer_parry_check()?);
    out.push(aot_general_check(20.0, 200)?.1);
    Ok(out)
}
