//! Runs every analysis of a configuration and writes the report bundle.

use std::path::{Path, PathBuf};

use opfam_core::adapted::{certify_with_tolerance, edge_moduli, lemma_equivalence, GridRange};
use opfam_core::family::{sample, truncation_check, FamilySample};
use opfam_core::flow::{flow_by_partition, flow_by_tracking, FlowResult, FlowWitness};
use opfam_core::polarized::{
    compact_polarization_check, theorem3_certify, transform_correspondence_check,
    weak_discrete_spectrum_certify, PolarizationCheck,
};
use opfam_core::spectral::RealWindow;
use opfam_core::topology::{
    continuity_modulus, theorem1_certify, theorem2_certify_with, ContinuityMetric,
};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{
    family_error, Analysis, AnalysisConfig, CertifyAdaptedParams, ConfigError, FlowMethodChoice,
    FlowParams, PolarizedParams,
};
use crate::report::{write_csv, write_json, Cell};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl RunError {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Write { .. } => 1,
        }
    }
}

pub struct RunOutcome {
    pub passes: bool,
    pub report: Value,
    pub files: Vec<PathBuf>,
}

struct CsvFile {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

struct Outcome {
    passes: bool,
    result: Value,
    csv: Vec<CsvFile>,
}

impl Outcome {
    fn new(passes: bool, result: Value) -> Self {
        Self {
            passes,
            result,
            csv: Vec::new(),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize to JSON")
}

/// `{"certificate": ..}` or `{"error": ..}`.
fn embed<T: Serialize, E: Serialize>(r: &Result<T, E>, ok_key: &str) -> Value {
    match r {
        Ok(v) => json!({ ok_key: to_value(v) }),
        Err(e) => json!({ "error": to_value(e) }),
    }
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Samples the configured family.
pub fn build_sample(config: &AnalysisConfig) -> Result<FamilySample, ConfigError> {
    sample(&config.family, &config.grid).map_err(family_error)
}

pub fn run_analysis(config: &AnalysisConfig, output_dir: &Path) -> Result<RunOutcome, RunError> {
    let s = build_sample(config)?;
    let write_err = |path: &Path, e: &dyn std::fmt::Display| RunError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(output_dir).map_err(|e| write_err(output_dir, &e))?;

    let mut files = Vec::new();
    let eig_path = output_dir.join("eigenvalues.csv");
    write_csv(&eig_path, &eigen_header(s.dim()), &eigen_rows(&s))
        .map_err(|e| write_err(&eig_path, &e))?;
    files.push(eig_path);

    let mut entries = Vec::new();
    let mut all_pass = true;
    for (index, analysis) in config.analyses.iter().enumerate() {
        let outcome = run_one(config, &s, analysis);
        let mut names = Vec::new();
        for csv in &outcome.csv {
            let name = format!("{index:02}_{}.csv", csv.name);
            let path = output_dir.join(&name);
            write_csv(&path, &csv.header, &csv.rows).map_err(|e| write_err(&path, &e))?;
            files.push(path);
            names.push(name);
        }
        all_pass &= outcome.passes;
        entries.push(json!({
            "index": index,
            "kind": analysis.kind().name(),
            "passes": outcome.passes,
            "result": outcome.result,
            "files": names,
        }));
    }

    let report = json!({
        "tool": {"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")},
        "seed": config.seed,
        "config": config.echo,
        "family": {
            "kind": config.family.kind_name(),
            "dim": s.dim(),
            "grid_points": s.len(),
            "x_start": s.x(0),
            "x_end": s.x(s.len() - 1),
            "level_ceiling": config.search.ceiling_for(&s),
            "truncation_tolerance": config.family.truncation_tolerance(),
        },
        "search": to_value(&config.search),
        "eigenvalues_file": "eigenvalues.csv",
        "analyses": entries,
        "passes": all_pass,
    });
    let report_path = output_dir.join("report.json");
    write_json(&report_path, &report).map_err(|e| write_err(&report_path, &e))?;
    files.insert(0, report_path);
    Ok(RunOutcome {
        passes: all_pass,
        report,
        files,
    })
}

fn eigen_header(dim: usize) -> Vec<String> {
    std::iter::once("x".to_string())
        .chain((1..=dim).map(|k| format!("lambda_{k}")))
        .collect()
}

fn eigen_rows(s: &FamilySample) -> Vec<Vec<Cell>> {
    s.spectra()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            std::iter::once(Cell::from(s.x(k)))
                .chain(d.eigenvalues().iter().map(|&l| Cell::from(l)))
                .collect()
        })
        .collect()
}

fn run_one(config: &AnalysisConfig, s: &FamilySample, analysis: &Analysis) -> Outcome {
    let opts = &config.search;
    match analysis {
        Analysis::CertifyAdapted(p) => certify_adapted(s, p, opts.tau_edge),
        Analysis::DiscreteSpectrum(p) => match lemma_equivalence(s, &p.b_levels, opts) {
            Ok(r) => Outcome::new(r.lemma.passes && r.agree, to_value(&r)),
            Err(e) => Outcome::new(false, json!({ "error": to_value(&e) })),
        },
        Analysis::Theorem1(p) => {
            let results: Vec<_> = p
                .x_index
                .to_vec()
                .into_iter()
                .map(|x| (x, theorem1_certify(s, x, p.delta, opts)))
                .collect();
            per_point(&results)
        }
        Analysis::Theorem2(p) => {
            let results: Vec<_> = p
                .x_index
                .to_vec()
                .into_iter()
                .map(|x| {
                    (
                        x,
                        theorem2_certify_with(s, x, p.delta, p.cap, opts, p.calculus),
                    )
                })
                .collect();
            per_point(&results)
        }
        Analysis::Flow(p) => flow(s, p, config),
        Analysis::Polarized(p) => polarized(s, p, config),
        Analysis::Distances(p) => {
            let mut out = Outcome::new(true, json!({}));
            for &metric in &p.metrics {
                let m = continuity_modulus(s, metric);
                let name = match metric {
                    ContinuityMetric::Graph => "graph",
                    ContinuityMetric::Riesz => "riesz",
                };
                out.result[name] = to_value(&m);
                out.csv.push(CsvFile {
                    name: format!("distances_{name}"),
                    header: header(&["x_left", "x_right", "value"]),
                    rows: m
                        .edges
                        .iter()
                        .map(|e| vec![e.x_left.into(), e.x_right.into(), e.value.into()])
                        .collect(),
                });
            }
            out
        }
        Analysis::Truncation(p) => {
            match truncation_check(
                &config.family,
                &config.grid,
                &p.dims,
                &RealWindow::symmetric(p.window),
            ) {
                Ok(r) => Outcome::new(r.stable, to_value(&r)),
                Err(e) => Outcome::new(false, json!({ "error": to_value(&e) })),
            }
        }
    }
}

fn per_point<T: Serialize, E: Serialize>(results: &[(usize, Result<T, E>)]) -> Outcome {
    let points: Vec<Value> = results
        .iter()
        .map(|(x, r)| {
            let mut v = embed(r, "certificate");
            v["x_index"] = json!(x);
            v
        })
        .collect();
    Outcome::new(
        results.iter().all(|(_, r)| r.is_ok()),
        json!({ "points": points }),
    )
}

fn certify_adapted(s: &FamilySample, p: &CertifyAdaptedParams, tau_edge: f64) -> Outcome {
    let range = GridRange::new(p.lo_index, p.hi_index);
    let r = certify_with_tolerance(s, &range, p.level, p.cap, tau_edge);
    let mut out = Outcome::new(r.is_ok(), embed(&r, "certificate"));
    if r.is_ok() && range.len() > 1 {
        let moduli = edge_moduli(s, &range, &RealWindow::symmetric(p.level));
        out.csv.push(CsvFile {
            name: "certify_adapted_moduli".into(),
            header: header(&["x_left", "x_right", "projection", "restriction"]),
            rows: moduli
                .iter()
                .enumerate()
                .map(|(k, &(proj, restr))| {
                    let y = range.lo_index + k;
                    vec![s.x(y).into(), s.x(y + 1).into(), proj.into(), restr.into()]
                })
                .collect(),
        });
    }
    out
}

fn crossing_rows(s: &FamilySample, r: &FlowResult) -> Option<CsvFile> {
    let FlowWitness::Tracking(w) = &r.witness else {
        return None;
    };
    let mut rows: Vec<Vec<Cell>> = w
        .crossings
        .iter()
        .map(|c| {
            vec![
                "crossing".into(),
                c.branch.into(),
                c.from_index.into(),
                c.to_index.into(),
                c.x_left.into(),
                c.x_right.into(),
                c.direction.into(),
            ]
        })
        .collect();
    rows.extend(w.escapes.iter().map(|e| {
        vec![
            "escape".into(),
            Cell::from(""),
            e.from_index.into(),
            e.to_index.into(),
            s.x(e.from_index).into(),
            s.x(e.to_index).into(),
            e.offset.into(),
        ]
    }));
    Some(CsvFile {
        name: "flow_tracking".into(),
        header: header(&[
            "event",
            "branch",
            "from_index",
            "to_index",
            "x_left",
            "x_right",
            "value",
        ]),
        rows,
    })
}

fn partition_rows(s: &FamilySample, r: &FlowResult) -> Option<CsvFile> {
    let FlowWitness::Partition(p) = &r.witness else {
        return None;
    };
    let rows = p
        .certificates
        .iter()
        .zip(&p.contributions)
        .map(|(c, &contribution)| {
            vec![
                c.range.lo_index.into(),
                c.range.hi_index.into(),
                s.x(c.range.lo_index).into(),
                s.x(c.range.hi_index).into(),
                c.level.into(),
                c.rank.into(),
                contribution.into(),
            ]
        })
        .collect();
    Some(CsvFile {
        name: "flow_partition".into(),
        header: header(&[
            "lo_index",
            "hi_index",
            "x_lo",
            "x_hi",
            "level",
            "rank",
            "contribution",
        ]),
        rows,
    })
}

fn flow(s: &FamilySample, p: &FlowParams, config: &AnalysisConfig) -> Outcome {
    let tracking = matches!(
        p.method,
        FlowMethodChoice::Tracking | FlowMethodChoice::Both
    )
    .then(|| flow_by_tracking(s, config.search.tau_edge));
    let partition = matches!(
        p.method,
        FlowMethodChoice::Partition | FlowMethodChoice::Both
    )
    .then(|| flow_by_partition(s, &config.search));
    let flows: Vec<Option<i64>> = [&tracking, &partition]
        .into_iter()
        .flatten()
        .map(|r| r.as_ref().ok().map(|f| f.flow))
        .collect();
    let agree = flows.iter().all(|f| f.is_some()) && flows.windows(2).all(|w| w[0] == w[1]);
    let mut result = json!({
        "flow": if agree { json!(flows[0]) } else { Value::Null },
        "agree": agree,
    });
    let mut csv = Vec::new();
    if let Some(r) = &tracking {
        result["tracking"] = embed(r, "result");
        csv.extend(r.as_ref().ok().and_then(|r| crossing_rows(s, r)));
    }
    if let Some(r) = &partition {
        result["partition"] = embed(r, "result");
        csv.extend(r.as_ref().ok().and_then(|r| partition_rows(s, r)));
    }
    Outcome {
        passes: agree,
        result,
        csv,
    }
}

fn polarized(s: &FamilySample, p: &PolarizedParams, config: &AnalysisConfig) -> Outcome {
    let opts = &config.search;
    let chk = PolarizationCheck {
        eta: p.eta,
        interior_budget: p.interior_budget,
        norm_slack: p.norm_slack,
    };
    let base = if p.transform {
        s.bounded_transform()
    } else {
        s.clone()
    };
    let first_failure = base
        .operators()
        .iter()
        .enumerate()
        .map(|(k, a)| (k, compact_polarization_check(a, &chk)))
        .find(|(_, r)| !r.passes);
    let mut passes = true;
    let mut result = json!({
        "check": to_value(&chk),
        "transformed": p.transform,
        "level_domain": [0.0, 1.0],
        "polarized": first_failure.is_none(),
        "first_unpolarized": first_failure.map(|(index, r)| json!({"index": index, "report": to_value(&r)})),
    });
    if !p.b_levels.is_empty() {
        let r = weak_discrete_spectrum_certify(&base, &p.b_levels, &chk, opts);
        passes &= r.as_ref().is_ok_and(|r| r.passes && r.agree);
        result["weak_discrete_spectrum"] = embed(&r, "report");
    }
    if !p.correspondence_levels.is_empty() {
        let r = transform_correspondence_check(s, &p.correspondence_levels, &chk, opts);
        passes &= r.as_ref().is_ok_and(|r| r.passes);
        result["correspondence"] = embed(&r, "report");
    }
    if let Some(t) = &p.theorem3 {
        let results: Vec<_> = t
            .x_index
            .to_vec()
            .into_iter()
            .map(|x| (x, theorem3_certify(&base, x, t.delta, t.cap, &chk, opts)))
            .collect();
        let o = per_point(&results);
        passes &= o.passes;
        result["theorem3"] = o.result;
    }
    Outcome::new(passes, result)
}
