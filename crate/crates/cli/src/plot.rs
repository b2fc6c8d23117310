//! Plot-ready CSV tables extracted from a bundle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    EcdfVsPi,
    ThetaVsN,
    DprimeVsN,
    LaplaceGrid,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::EcdfVsPi,
        PlotKind::ThetaVsN,
        PlotKind::DprimeVsN,
        PlotKind::LaplaceGrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::EcdfVsPi => "ecdf_vs_pi",
            PlotKind::ThetaVsN => "theta_vs_n",
            PlotKind::DprimeVsN => "dprime_vs_n",
            PlotKind::LaplaceGrid => "laplace_grid",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            PlotKind::EcdfVsPi => &["x", "ecdf", "pi_theory"],
            PlotKind::ThetaVsN => &["n", "theta", "stderr", "theta_theory"],
            PlotKind::DprimeVsN => &["n", "q", "value", "stderr"],
            PlotKind::LaplaceGrid => &["n", "y", "a", "b", "empirical", "stderr", "theory", "z"],
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, PlotError> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PlotError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("unknown plot kind `{0}` (expected ecdf_vs_pi, theta_vs_n, dprime_vs_n or laplace_grid)")]
    UnknownKind(String),
    #[error("cannot read bundle: {0}")]
    Bundle(String),
    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
}

/// Columns of every CSV kind, as stored in the bundle.
pub fn csv_manifest() -> BTreeMap<String, Vec<String>> {
    PlotKind::ALL
        .iter()
        .map(|k| (k.name().to_string(), k.columns().iter().map(|c| c.to_string()).collect()))
        .collect()
}

/// One CSV table: file stem, header and rows. Missing values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub stem: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

fn bad(msg: impl Into<String>) -> PlotError {
    PlotError::Bundle(msg.into())
}

fn num(v: &Value) -> Option<f64> {
    v.as_f64()
}

fn results(bundle: &Value) -> Result<&Vec<Value>, PlotError> {
    bundle["results"].as_array().ok_or_else(|| bad("missing `results` array"))
}

/// Builds the tables of one kind from a parsed bundle.
pub fn tables(bundle: &Value, kind: PlotKind) -> Result<Vec<Table>, PlotError> {
    if bundle["format"].as_str() != Some(crate::bundle::BUNDLE_FORMAT) {
        return Err(bad("not a rarepp bundle"));
    }
    let header: Vec<String> = kind.columns().iter().map(|c| c.to_string()).collect();
    let results = results(bundle)?;
    let single = |rows| vec![Table { stem: kind.name().to_string(), header: header.clone(), rows }];
    Ok(match kind {
        PlotKind::EcdfVsPi => {
            let mut out = Vec::new();
            for r in results {
                let n = r["n"].as_u64().ok_or_else(|| bad("result without n"))?;
                for m in r["marks"].as_array().into_iter().flatten() {
                    let mark = m["mark_type"].as_str().unwrap_or("mark");
                    let rows = m["ecdf_grid"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .map(|row| (0..3).map(|i| num(&row[i])).collect())
                        .collect();
                    out.push(Table {
                        stem: format!("ecdf_vs_pi_n{n}_{mark}"),
                        header: header.clone(),
                        rows,
                    });
                }
            }
            out
        }
        PlotKind::ThetaVsN => {
            let theory = num(&bundle["theory"]["theta"]);
            single(
                results
                    .iter()
                    .map(|r| {
                        vec![
                            num(&r["n"]),
                            num(&r["theta"]["theta"]),
                            num(&r["theta"]["stderr"]),
                            theory,
                        ]
                    })
                    .collect(),
            )
        }
        PlotKind::DprimeVsN => single(
            results
                .iter()
                .flat_map(|r| {
                    r["dprime"].as_array().into_iter().flatten().map(move |d| {
                        vec![
                            num(&r["n"]),
                            num(&d["q"]),
                            num(&d["total"]["value"]),
                            num(&d["total"]["stderr"]),
                        ]
                    })
                })
                .collect(),
        ),
        PlotKind::LaplaceGrid => single(
            results
                .iter()
                .flat_map(|r| {
                    r["laplace"]["cells"].as_array().into_iter().flatten().map(move |c| {
                        vec![
                            num(&r["n"]),
                            num(&c["y"]),
                            num(&c["interval"][0]),
                            num(&c["interval"][1]),
                            num(&c["empirical"]),
                            num(&c["stderr"]),
                            num(&c["theory"]),
                            num(&c["z"]),
                        ]
                    })
                })
                .collect(),
        ),
    })
}

/// Writes the tables of `kind` into `dir` and returns the files written.
pub fn emit_plot_data(bundle: &Value, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let werr = |path: &Path, e: &dyn std::fmt::Display| PlotError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| werr(dir, &e))?;
    let mut written = Vec::new();
    for t in tables(bundle, kind)? {
        let path = dir.join(format!("{}.csv", t.stem));
        let mut w = csv::Writer::from_path(&path).map_err(|e| werr(&path, &e))?;
        w.write_record(&t.header).map_err(|e| werr(&path, &e))?;
        for row in &t.rows {
            let fields: Vec<String> = row.iter().map(|v| v.map_or(String::new(), |x| x.to_string())).collect();
            w.write_record(&fields).map_err(|e| werr(&path, &e))?;
        }
        w.flush().map_err(|e| werr(&path, &e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a table written by [`emit_plot_data`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>), PlotError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        rows.push(
            rec.iter()
                .map(|f| if f.is_empty() { None } else { f.parse().ok() })
                .collect(),
        );
    }
    Ok((header, rows))
}
