//! Checks behind `run --assert`.

use crate::bundle::{Bundle, NResult};
use crate::config::AssertConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { name, passed, detail }
}

fn missing(name: &'static str, what: &str) -> Outcome {
    outcome(name, false, format!("{what} missing from the bundle"))
}

/// Evaluates every configured check; single-`n` checks use the largest `n`.
pub fn check(bundle: &Bundle, a: &AssertConfig) -> Vec<Outcome> {
    let mut out = Vec::new();
    let Some(last) = bundle.results.last() else {
        return vec![missing("results", "results")];
    };
    let mark = bundle.config.mark_type;
    if let Some((lo, hi)) = a.theta_range {
        out.push(match last.theta {
            Some(t) => outcome(
                "theta_range",
                t.theta >= lo && t.theta <= hi,
                format!("theta_hat = {:.5} +- {:.5}, range [{lo}, {hi}]", t.theta, t.stderr),
            ),
            None => missing("theta_range", "theta"),
        });
    }
    if let Some(max) = a.ks_max {
        out.push(match last.mark(mark).and_then(|m| m.ks.as_ref()) {
            Some(r) => outcome("ks_max", r.statistic < max, format!("{} KS = {:.5} < {max}", mark.name(), r.statistic)),
            None => missing("ks_max", "KS report"),
        });
    }
    if let Some(min) = a.chi_square_p_min {
        out.push(match last.sizes.as_ref().and_then(|s| s.chi_square.as_ref()) {
            Some(r) => outcome("chi_square_p_min", r.p_value > min, format!("p = {:.4} > {min}", r.p_value)),
            None => missing("chi_square_p_min", "chi-square report"),
        });
    }
    if let Some(min) = a.repp_k1_min {
        out.push(match &last.sizes {
            Some(s) => outcome("repp_k1_min", s.k1_mass >= min, format!("mass at k = 1 is {:.5} >= {min}", s.k1_mass)),
            None => missing("repp_k1_min", "size histogram"),
        });
    }
    if let Some(max) = a.interarrival_ks_max {
        out.push(match &last.interarrival {
            Some(r) => outcome(
                "interarrival_ks_max",
                r.statistic < max,
                format!("KS = {:.5} < {max} (p = {:.3e})", r.statistic, r.p_value),
            ),
            None => missing("interarrival_ks_max", "interarrival report"),
        });
    }
    if let Some(min) = a.laplace_min_within_3sigma {
        out.push(match (&last.laplace, last.laplace_within_3sigma) {
            (Some(t), Some(w)) => outcome(
                "laplace_min_within_3sigma",
                w >= min,
                format!("{w}/{} cells within 3 sigma, need {min}", t.cells.len()),
            ),
            _ => missing("laplace_min_within_3sigma", "Laplace table"),
        });
    }
    let q = bundle.q.value;
    let at_q = |r: &NResult, q: usize| r.dprime_at(q).map(|d| d.total.value);
    if a.dprime_decreasing == Some(true) {
        let vals: Vec<Option<f64>> = bundle.results.iter().map(|r| at_q(r, q)).collect();
        out.push(if vals.iter().any(Option::is_none) {
            missing("dprime_decreasing", "D' value")
        } else {
            let v: Vec<f64> = vals.into_iter().flatten().collect();
            outcome(
                "dprime_decreasing",
                v.windows(2).all(|w| w[1] < w[0]),
                format!("D' at q = {q} along the grid: {v:?}"),
            )
        });
    }
    if let Some(max) = a.dprime_final_max {
        out.push(match at_q(last, q) {
            Some(v) => outcome("dprime_final_max", v < max, format!("D' = {v:.5} at n = {} < {max}", last.n)),
            None => missing("dprime_final_max", "D' value"),
        });
    }
    if let Some(min) = a.dprime_lower_q_min {
        out.push(match q.checked_sub(1) {
            None => outcome("dprime_lower_q_min", false, "q = 0 has no smaller q".into()),
            Some(q0) => {
                let vals: Vec<Option<f64>> = bundle.results.iter().map(|r| at_q(r, q0)).collect();
                if vals.iter().any(Option::is_none) {
                    missing("dprime_lower_q_min", "D' value")
                } else {
                    let v: Vec<f64> = vals.into_iter().flatten().collect();
                    outcome(
                        "dprime_lower_q_min",
                        v.iter().all(|x| *x > min),
                        format!("D' at q = {q0} along the grid: {v:?}, each > {min}"),
                    )
                }
            }
        });
    }
    if a.boundary_excludes_variant == Some(true) {
        out.push(match &bundle.adjudication {
            Some(adj) => {
                let excluded: Vec<&str> = adj.variants.iter().filter(|v| v.excluded).map(|v| v.name.as_str()).collect();
                outcome(
                    "boundary_excludes_variant",
                    !excluded.is_empty(),
                    format!(
                        "theta_hat = {:.5}, CI [{:.5}, {:.5}], excluded {excluded:?}, supported {:?}",
                        adj.theta_hat, adj.ci.0, adj.ci.1, adj.supported
                    ),
                )
            }
            None => missing("boundary_excludes_variant", "adjudication"),
        });
    }
    out
}
