//! The JSON result bundle written by `run`.

use std::collections::BTreeMap;

use serde::Serialize;

use rarepp::pointprocess::{MarkType, QEstimate};
use rarepp::stats::{
    DprimeDiagnostic, LaplaceTable, ReferenceMeasure, TestReport, ThetaEstimate, UlcDiagnostic,
};
use rarepp::theory::{ExtremalIndex, ZetaKind};
use rarepp::thresholds::{Confidence, MarginalThreshold, Threshold, ThresholdSource};
use rarepp::thresholds::FrequencySummary;

use crate::config::ExperimentConfig;

pub const BUNDLE_FORMAT: &str = "rarepp-bundle/1";

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub format: String,
    pub name: String,
    pub system_id: String,
    pub reference_measure: ReferenceMeasure,
    pub config: ExperimentConfig,
    pub seed_ledger: SeedLedger,
    pub theory: TheorySummary,
    pub q: QRecord,
    pub results: Vec<NResult>,
    /// Only for boundary targets.
    pub adjudication: Option<Adjudication>,
    pub block_condition: BlockCheck,
    pub csv_manifest: BTreeMap<String, Vec<String>>,
}

impl Bundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundles always serialise");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedLedger {
    pub master: u64,
    /// `(n, run seed)`.
    pub runs: Vec<(u64, u64)>,
    pub run_rule: String,
    pub orbit_rule: String,
    pub bootstrap_rule: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheorySummary {
    pub target: ZetaKind,
    pub beta: Option<f64>,
    pub extremal_index: Option<ExtremalIndex>,
    pub boundary_variant: Option<String>,
    /// Intensity of the compound Poisson model.
    pub theta: f64,
    pub multiplicity: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QRecord {
    pub value: usize,
    /// `config` or `estimate`.
    pub source: String,
    pub estimate: Option<QEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRecord {
    pub u_n: f64,
    pub radius: f64,
    pub residual: f64,
    pub source: ThresholdSource,
    pub mc_tau: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub mc_samples: Option<usize>,
    pub confidence: Option<Confidence>,
}

impl ThresholdRecord {
    pub fn closed(t: Threshold) -> Self {
        ThresholdRecord {
            u_n: t.u_n,
            radius: t.radius,
            residual: t.residual,
            source: ThresholdSource::ClosedForm,
            mc_tau: None,
            mc_stderr: None,
            mc_samples: None,
            confidence: None,
        }
    }

    pub fn marginal(m: &MarginalThreshold) -> Self {
        ThresholdRecord {
            u_n: m.threshold.u_n,
            radius: m.threshold.radius,
            residual: m.threshold.residual,
            source: ThresholdSource::MarginalMc,
            mc_tau: Some(m.mc_tau),
            mc_stderr: Some(m.mc_stderr),
            mc_samples: Some(m.mc_samples),
            confidence: Some(m.confidence),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkSummary {
    pub mark_type: MarkType,
    pub clusters: usize,
    pub finite: usize,
    pub infinite: usize,
    pub pi_theory: String,
    pub ks: Option<TestReport>,
    /// Rows `[x, ecdf, pi_theory]`.
    pub ecdf_grid: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeSummary {
    pub clusters: usize,
    /// `histogram[k]` clusters of size `k`; the last class also holds larger ones.
    pub histogram: Vec<u64>,
    pub k1_mass: f64,
    pub chi_square: Option<TestReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub k_n: usize,
    pub t_n_star: usize,
    pub start: usize,
    pub tail_start: usize,
    pub epsilon: f64,
    pub short_gaps: usize,
    pub kn_tstar_fmax: f64,
    pub exact_check: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NResult {
    pub n: u64,
    pub ensemble: usize,
    pub seed: u64,
    pub threshold: ThresholdRecord,
    pub a_n: f64,
    pub burn_in: usize,
    pub frequencies: FrequencySummary,
    pub theta: Option<ThetaEstimate>,
    pub marks: Vec<MarkSummary>,
    pub sizes: Option<SizeSummary>,
    pub interarrival: Option<TestReport>,
    pub blocks: Option<BlockSummary>,
    /// The run's `q` first, then `q - 1` when `q > 0`.
    pub dprime: Vec<DprimeDiagnostic>,
    pub ulc: Option<UlcDiagnostic>,
    pub laplace: Option<LaplaceTable>,
    pub laplace_within_3sigma: Option<usize>,
    /// Analysis steps that were skipped, with the reason.
    pub notes: Vec<String>,
}

impl NResult {
    pub fn mark(&self, m: MarkType) -> Option<&MarkSummary> {
        self.marks.iter().find(|s| s.mark_type == m)
    }

    pub fn dprime_at(&self, q: usize) -> Option<&DprimeDiagnostic> {
        self.dprime.iter().find(|d| d.q == q)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantVerdict {
    pub name: String,
    pub theta: f64,
    pub excluded: bool,
}

/// Which boundary reading of the extremal index the largest-`n` estimate supports.
#[derive(Debug, Clone, Serialize)]
pub struct Adjudication {
    pub n: u64,
    pub theta_hat: f64,
    pub ci: (f64, f64),
    pub confidence: f64,
    pub variants: Vec<VariantVerdict>,
    pub supported: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    /// `(n, k_n t* Fbar_max)`.
    pub values: Vec<(u64, f64)>,
    pub decreasing: bool,
    pub warnings: Vec<String>,
}
