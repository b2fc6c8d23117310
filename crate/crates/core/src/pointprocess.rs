//! Exceedances, clusters, marked rare-event point processes and blocks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An index `i` with `X_i > u_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub index: usize,
    /// `X_i - u_n`; `+inf` when `X_i` is infinite.
    pub excess: f64,
}

/// Indices with `X_i > u_n` (strict) and their excesses.
pub fn scan_exceedances(values: &[f64], u_n: f64) -> Vec<Exceedance> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > u_n)
        .map(|(index, &x)| Exceedance {
            index,
            excess: x - u_n,
        })
        .collect()
}

/// A maximal run of exceedances whose consecutive gaps are at most `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub indices: Vec<usize>,
    /// Number of exceedances minus one.
    pub kappa: usize,
    /// Last exceedance of the run: the escape.
    pub escape_index: usize,
    pub excesses: Vec<f64>,
    /// Fewer than `q` indices of the series follow the escape.
    pub truncated: bool,
}

impl ClusterRecord {
    pub fn first_index(&self) -> usize {
        self.indices[0]
    }

    pub fn size(&self) -> usize {
        self.kappa + 1
    }

    /// For each exceedance, the number of exceedances after it in the cluster.
    pub fn levels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices
            .iter()
            .enumerate()
            .map(move |(k, &i)| (i, self.kappa - k))
    }
}

/// Groups strictly increasing exceedances of a series of length `series_len`
/// into clusters separated by gaps larger than `q`.
pub fn detect_clusters(
    exceedances: &[Exceedance],
    q: usize,
    series_len: usize,
) -> Result<Vec<ClusterRecord>> {
    for w in exceedances.windows(2) {
        if w[1].index <= w[0].index {
            return Err(Error::invalid("exceedances", "indices must be strictly increasing"));
        }
    }
    if let Some(last) = exceedances.last() {
        if last.index >= series_len {
            return Err(Error::invalid(
                "exceedances",
                format!("index {} outside a series of length {series_len}", last.index),
            ));
        }
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < exceedances.len() {
        let mut end = start + 1;
        while end < exceedances.len() && exceedances[end].index - exceedances[end - 1].index <= q {
            end += 1;
        }
        let run = &exceedances[start..end];
        let escape_index = run[run.len() - 1].index;
        out.push(ClusterRecord {
            indices: run.iter().map(|e| e.index).collect(),
            kappa: run.len() - 1,
            escape_index,
            excesses: run.iter().map(|e| e.excess).collect(),
            truncated: series_len - 1 - escape_index < q,
        });
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarkType {
    /// Area over threshold: summed excesses.
    #[serde(rename = "AOT")]
    Aot,
    /// Peak over threshold: largest excess.
    #[serde(rename = "POT")]
    Pot,
    /// Rare-event point process: exceedance count.
    #[serde(rename = "REPP")]
    Repp,
}

impl MarkType {
    pub const ALL: [MarkType; 3] = [MarkType::Aot, MarkType::Pot, MarkType::Repp];

    pub fn name(self) -> &'static str {
        match self {
            MarkType::Aot => "AOT",
            MarkType::Pot => "POT",
            MarkType::Repp => "REPP",
        }
    }
}

impl std::str::FromStr for MarkType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AOT" => Ok(MarkType::Aot),
            "POT" | "EOT" => Ok(MarkType::Pot),
            "REPP" => Ok(MarkType::Repp),
            _ => Err(Error::invalid("mark_type", format!("unknown mark type `{s}`"))),
        }
    }
}

/// Mark of `excesses` taken over a window that contains every exceedance listed.
pub fn mark_of(excesses: &[f64], mark_type: MarkType) -> f64 {
    match mark_type {
        MarkType::Aot => excesses.iter().sum(),
        MarkType::Pot => excesses.iter().copied().fold(0.0, f64::max),
        MarkType::Repp => excesses.len() as f64,
    }
}

pub fn compute_mark(cluster: &ClusterRecord, mark_type: MarkType) -> f64 {
    mark_of(&cluster.excesses, mark_type)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    pub mark: f64,
}

/// Atomic measure on rescaled time: one atom per cluster at its escape time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedMeasure {
    pub atoms: Vec<Atom>,
    pub mark_type: MarkType,
    pub u_n: f64,
    pub v_n: f64,
    pub q: usize,
    /// Atoms whose mark is infinite.
    pub infinite_marks: usize,
}

fn check_v_n(v_n: f64) -> Result<()> {
    if !v_n.is_finite() || v_n <= 0.0 {
        return Err(Error::invalid("v_n", format!("must be positive and finite, got {v_n}")));
    }
    Ok(())
}

/// Builds the measure from already detected clusters.
pub fn mrepp_from_clusters(
    clusters: &[ClusterRecord],
    u_n: f64,
    q: usize,
    mark_type: MarkType,
    v_n: f64,
) -> Result<MarkedMeasure> {
    check_v_n(v_n)?;
    let atoms: Vec<Atom> = clusters
        .iter()
        .map(|c| Atom {
            time: c.escape_index as f64 / v_n,
            mark: compute_mark(c, mark_type),
        })
        .collect();
    let infinite_marks = atoms.iter().filter(|a| a.mark.is_infinite()).count();
    Ok(MarkedMeasure {
        atoms,
        mark_type,
        u_n,
        v_n,
        q,
        infinite_marks,
    })
}

/// Scans `values`, clusters the exceedances of `u_n` and places one atom per
/// cluster at `escape_index / v_n`.
pub fn build_mrepp(
    values: &[f64],
    u_n: f64,
    q: usize,
    mark_type: MarkType,
    v_n: f64,
) -> Result<MarkedMeasure> {
    check_v_n(v_n)?;
    let ex = scan_exceedances(values, u_n);
    let clusters = detect_clusters(&ex, q, values.len())?;
    mrepp_from_clusters(&clusters, u_n, q, mark_type, v_n)
}

/// Total mark of the atoms in each half-open interval `[a, b)`.
pub fn evaluate_mrepp(measure: &MarkedMeasure, intervals: &[(f64, f64)]) -> Result<Vec<f64>> {
    for &(a, b) in intervals {
        if !(a <= b) {
            return Err(Error::invalid("intervals", format!("[{a}, {b}) is not an interval")));
        }
    }
    let mut sorted: Vec<(f64, f64)> = intervals.iter().copied().filter(|(a, b)| a < b).collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in sorted.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::OverlappingIntervals(w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    let atoms = &measure.atoms;
    Ok(intervals
        .iter()
        .map(|&(a, b)| {
            let lo = atoms.partition_point(|t| t.time < a);
            let hi = atoms.partition_point(|t| t.time < b);
            atoms[lo..hi].iter().map(|t| t.mark).sum()
        })
        .collect())
}

impl MarkedMeasure {
    /// The same atoms on the time scale `i / v_n`.
    pub fn rescaled(&self, v_n: f64) -> Result<MarkedMeasure> {
        check_v_n(v_n)?;
        let mut m = self.clone();
        for a in &mut m.atoms {
            a.time = a.time * self.v_n / v_n;
        }
        m.v_n = v_n;
        Ok(m)
    }

    /// Columnar text: a `# mrepp v1` header and `time,mark` rows.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# mrepp v1 mark_type={} u_n={} v_n={} q={}\ntime,mark\n",
            self.mark_type.name(),
            self.u_n,
            self.v_n,
            self.q
        );
        for a in &self.atoms {
            let _ = writeln!(s, "{},{}", a.time, a.mark);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<MarkedMeasure> {
        let mut lines = text.lines().enumerate();
        let perr = |line: usize, reason: &str| Error::Parse {
            line: line + 1,
            reason: reason.to_string(),
        };
        let (l0, header) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
        let rest = header
            .strip_prefix("# mrepp v1")
            .ok_or_else(|| perr(l0, "missing `# mrepp v1` header"))?;
        let (mut mark_type, mut u_n, mut v_n, mut q) = (None, None, None, None);
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| perr(l0, "header field without `=`"))?;
            match k {
                "mark_type" => mark_type = Some(v.parse::<MarkType>().map_err(|_| perr(l0, "bad mark_type"))?),
                "u_n" => u_n = Some(v.parse::<f64>().map_err(|_| perr(l0, "bad u_n"))?),
                "v_n" => v_n = Some(v.parse::<f64>().map_err(|_| perr(l0, "bad v_n"))?),
                "q" => q = Some(v.parse::<usize>().map_err(|_| perr(l0, "bad q"))?),
                _ => return Err(perr(l0, "unknown header field")),
            }
        }
        let (l1, cols) = lines.next().ok_or_else(|| perr(1, "missing column header"))?;
        if cols.trim() != "time,mark" {
            return Err(perr(l1, "expected `time,mark`"));
        }
        let mut atoms = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (t, m) = line.split_once(',').ok_or_else(|| perr(ln, "expected two columns"))?;
            let time = t.trim().parse::<f64>().map_err(|_| perr(ln, "bad time"))?;
            let mark = m.trim().parse::<f64>().map_err(|_| perr(ln, "bad mark"))?;
            if let Some(prev) = atoms.last().map(|a: &Atom| a.time) {
                if time <= prev {
                    return Err(perr(ln, "atom times must increase strictly"));
                }
            }
            atoms.push(Atom { time, mark });
        }
        let infinite_marks = atoms.iter().filter(|a| a.mark.is_infinite()).count();
        Ok(MarkedMeasure {
            atoms,
            mark_type: mark_type.ok_or_else(|| perr(l0, "missing mark_type"))?,
            u_n: u_n.ok_or_else(|| perr(l0, "missing u_n"))?,
            v_n: v_n.ok_or_else(|| perr(l0, "missing v_n"))?,
            q: q.ok_or_else(|| perr(l0, "missing q"))?,
            infinite_marks,
        })
    }
}

/// Fixed-point scale for probabilities passed as `f64`.
pub const WEIGHT_SCALE_BITS: u32 = 60;

/// `round(p 2^60)`.
pub fn quantize_probability(p: f64) -> Result<u128> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("fbar", format!("probabilities must lie in [0, 1], got {p}")));
    }
    Ok((p * (1u128 << WEIGHT_SCALE_BITS) as f64).round() as u128)
}

/// Blocks `[L_{i-1}, L_i)` of (nearly) equal expected exceedance count,
/// each closed by a gap `[L_i - t_i, L_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub k_n: usize,
    pub t_n_star: usize,
    /// `L_0`, the first index covered.
    pub start: usize,
    /// One past the last index, `H n`.
    pub end: usize,
    pub ell: Vec<usize>,
    pub t: Vec<usize>,
    /// `L_0, ..., L_{k_n}`.
    pub cumulative: Vec<usize>,
    /// `(t* + 1) Fbar_max k_n / F*`.
    pub epsilon: f64,
    /// `L_{k_n}`.
    pub tail_start: usize,
    pub f_star: f64,
    pub fbar_max: f64,
    /// Blocks whose gap could not exceed `t*` inside the block.
    pub short_gaps: usize,
    weights: Vec<u128>,
    scale: f64,
}

impl BlockPartition {
    /// Builds blocks over `fbar[start..]` from probabilities given as `f64`.
    ///
    /// Probabilities are held as integers `round(p 2^60)`, so every block
    /// inequality is decided exactly for the quantised values.
    pub fn from_probabilities(fbar: &[f64], k_n: usize, t_n_star: usize, start: usize) -> Result<Self> {
        let w = fbar.iter().map(|&p| quantize_probability(p)).collect::<Result<Vec<_>>>()?;
        Self::from_weights(w, (1u128 << WEIGHT_SCALE_BITS) as f64, k_n, t_n_star, start)
    }

    /// Builds blocks from ensemble counts, `Fbar_j = counts[j] / ensemble`.
    pub fn from_counts(counts: &[u64], ensemble: usize, k_n: usize, t_n_star: usize, start: usize) -> Result<Self> {
        if ensemble == 0 {
            return Err(Error::invalid("ensemble", "must be positive"));
        }
        let w = counts.iter().map(|&c| c as u128).collect();
        Self::from_weights(w, ensemble as f64, k_n, t_n_star, start)
    }

    fn from_weights(weights: Vec<u128>, scale: f64, k_n: usize, t_n_star: usize, start: usize) -> Result<Self> {
        if k_n == 0 {
            return Err(Error::invalid("k_n", "need at least one block"));
        }
        let end = weights.len();
        if start > end {
            return Err(Error::invalid("start", format!("{start} beyond a series of length {end}")));
        }
        let w = &weights[start..];
        let total: u128 = w.iter().sum();
        if total == 0 {
            return Err(Error::NoExceedances("F*_{H,n} = 0, blocks are undefined"));
        }
        let wmax = *w.iter().max().expect("non-empty");
        let k = k_n as u128;
        let gap_budget = (t_n_star as u128 + 1) * wmax;
        let mut ell = Vec::with_capacity(k_n);
        let mut t = Vec::with_capacity(k_n);
        let mut cumulative = vec![start];
        let mut l = start;
        let mut short_gaps = 0;
        for _ in 0..k_n {
            let mut acc = 0u128;
            let mut len = 0;
            while l + len < end && (acc + weights[l + len]) * k <= total {
                acc += weights[l + len];
                len += 1;
            }
            l += len;
            let mut gap = 0;
            let mut gacc = 0u128;
            while gap + 1 < len && gacc + weights[l - gap - 1] <= gap_budget {
                gacc += weights[l - gap - 1];
                gap += 1;
            }
            if gap <= t_n_star {
                short_gaps += 1;
            }
            ell.push(len);
            t.push(gap);
            cumulative.push(l);
        }
        let f_star = total as f64 / scale;
        let fbar_max = wmax as f64 / scale;
        Ok(BlockPartition {
            k_n,
            t_n_star,
            start,
            end,
            ell,
            t,
            tail_start: l,
            cumulative,
            epsilon: (t_n_star as f64 + 1.0) * fbar_max * k_n as f64 / f_star,
            f_star,
            fbar_max,
            short_gaps,
            weights,
            scale,
        })
    }

    /// `[L_{i-1}, L_i)` for `i = 1..=k_n`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.cumulative[i - 1]..self.cumulative[i]
    }

    /// `k_n t* Fbar_max`, which must vanish as `n` grows.
    pub fn kn_tstar_fmax(&self) -> f64 {
        self.k_n as f64 * self.t_n_star as f64 * self.fbar_max
    }

    fn block_weight(&self, r: std::ops::Range<usize>) -> u128 {
        self.weights[r].iter().sum()
    }

    /// Checks `F*/k - Fbar_max <= sum_block <= F*/k` for every block and
    /// `sum_tail <= k Fbar_max`, in exact integer arithmetic.
    pub fn check_estimates(&self) -> bool {
        let total: u128 = self.weights[self.start..].iter().sum();
        let wmax = *self.weights[self.start..].iter().max().unwrap_or(&0);
        let k = self.k_n as u128;
        let blocks_ok = (1..=self.k_n).all(|i| {
            let s = self.block_weight(self.block(i));
            s * k <= total && total <= (s + wmax) * k
        });
        let tail = self.block_weight(self.tail_start..self.end);
        blocks_ok && tail <= k * wmax
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Outcome of [`estimate_q`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QStatus {
    Determined { q: usize },
    Undetermined,
}

/// Smallest observed escape-to-escape return time for one `j` across the `n` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnProfile {
    pub j: usize,
    /// `None` when no orbit had two escapes.
    pub min_return: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub n_grid: Vec<u64>,
    pub status: QStatus,
    pub profile: Vec<ReturnProfile>,
}

/// One ensemble at a given `n`: exceedance indices per orbit and the orbit length.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceEnsemble {
    pub n: u64,
    pub len: usize,
    pub orbits: Vec<Vec<usize>>,
}

/// Escapes for gap `j`: exceedances followed by `j` clean indices inside the series.
fn escapes(indices: &[usize], j: usize, len: usize) -> impl Iterator<Item = usize> + '_ {
    indices.iter().enumerate().filter_map(move |(k, &i)| {
        if i + j >= len {
            return None;
        }
        match indices.get(k + 1) {
            Some(&next) if next - i <= j => None,
            _ => Some(i),
        }
    })
}

/// Estimates `q` as the smallest `j` whose minimal escape return time grows
/// between the smallest and the largest `n` of the grid.
pub fn estimate_q(ensembles: &[ExceedanceEnsemble], j_max: usize) -> Result<QEstimate> {
    if ensembles.len() < 2 {
        return Err(Error::InsufficientData("estimate_q needs at least two values of n".into()));
    }
    for w in ensembles.windows(2) {
        if w[1].n <= w[0].n {
            return Err(Error::invalid("ensembles", "n grid must increase strictly"));
        }
    }
    let mut profile = Vec::new();
    let mut status = QStatus::Undetermined;
    for j in 0..=j_max {
        let min_return: Vec<Option<usize>> = ensembles
            .iter()
            .map(|e| {
                e.orbits
                    .iter()
                    .filter_map(|o| {
                        let esc: Vec<usize> = escapes(o, j, e.len).collect();
                        esc.windows(2).map(|w| w[1] - w[0]).min()
                    })
                    .min()
            })
            .collect();
        let grows = match (min_return.first().copied().flatten(), min_return.last().copied().flatten()) {
            (Some(a), Some(b)) => b > a,
            (Some(_), None) => true,
            _ => false,
        };
        if grows && status == QStatus::Undetermined {
            status = QStatus::Determined { q: j };
        }
        profile.push(ReturnProfile { j, min_return });
    }
    Ok(QEstimate {
        n_grid: ensembles.iter().map(|e| e.n).collect(),
        status,
        profile,
    })
}
