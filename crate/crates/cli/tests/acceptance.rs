//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if a
//! criterion fails unexpectedly, or if a known-unattainable one starts
//! passing.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use opfam_core::adapted::{lemma_equivalence, SearchOptions};
use opfam_core::family::{sample, AffinePath, FamilySample, FamilySpec, ParameterGrid};
use opfam_core::flow::{flow_by_partition, flow_by_tracking};
use opfam_core::polarized::{transform_correspondence_check, PolarizationCheck};
use opfam_core::spectral::{
    bounded_transform, gamma, gamma_inverse, operator_norm, resolvent_at_i, HermitianOperator,
    RealWindow,
};
use opfam_core::topology::{
    continuity_modulus, strict_adaptedness_certify, theorem1_certify, theorem2_certify,
    ContinuityMetric, TheoremError,
};

/// Fails on every faithful implementation: the graph distance across the
/// pole edge is `2a / (1 + a^2)` with `a = tan(0.48 pi)`, about 0.125.
const UNATTAINABLE: &[u32] = &[5];

const TAU_EDGE: f64 = 1e-8;
const INTERIOR: [usize; 5] = [25, 60, 100, 140, 175];

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }
}

fn random_matrix(index: u64) -> HermitianOperator {
    let dim = 1 + (index as usize % 16);
    let x = (index % 7) as f64 / 6.0;
    FamilySpec::RandomCrossings { dim, seed: index }
        .operator_at(x)
        .unwrap()
}

fn dirac(modes: usize, points: usize) -> FamilySample {
    let grid = ParameterGrid::uniform(-0.49, 0.49, points).unwrap();
    let spec = FamilySpec::DiracCircle {
        modes,
        flux: AffinePath::default(),
    };
    sample(&spec, &grid).unwrap()
}

fn random_path(dim: usize, seed: u64, points: usize) -> FamilySample {
    let grid = ParameterGrid::uniform(0.0, 1.0, points).unwrap();
    sample(&FamilySpec::RandomCrossings { dim, seed }, &grid).unwrap()
}

fn criterion1(out: &mut Outcome) {
    for index in 0..100 {
        let a = random_matrix(index);
        let d = a.decompose();
        let dim = a.dim() as f64;
        let max = d.max_abs_eigenvalue();
        let err = d.reconstruction_error(&a);
        out.check(err <= 1e-9 * dim * (1.0 + max), || {
            format!("matrix {index}: reconstruction error {err:e}")
        });
        let oracle = d
            .eigenvalues()
            .iter()
            .map(|l| 1.0 / (1.0 + l * l).sqrt())
            .fold(0.0, f64::max);
        let norm = operator_norm(&resolvent_at_i(&a));
        out.check((norm - oracle).abs() <= 1e-9, || {
            format!("matrix {index}: resolvent norm {norm} vs {oracle}")
        });
        let g = bounded_transform(&a);
        let gnorm = operator_norm(g.entries());
        out.check(gnorm < 1.0, || {
            format!("matrix {index}: ||gamma(A)|| = {gnorm}")
        });
        let odd = operator_norm(&(bounded_transform(&a.neg()).entries() + g.entries()));
        out.check(odd <= 1e-12, || {
            format!("matrix {index}: oddness defect {odd:e}")
        });
    }
}

fn builtin_samples() -> Vec<(&'static str, FamilySample)> {
    let unit = ParameterGrid::uniform(0.0, 1.0, 100).unwrap();
    let tangent = ParameterGrid::uniform_excluding(0.1, 0.9, 100, 0.5, 0.02).unwrap();
    let mk = |spec: FamilySpec, grid: &ParameterGrid| sample(&spec, grid).unwrap();
    vec![
        ("dirac_circle", dirac(10, 100)),
        (
            "harmonic_perturbed",
            mk(
                FamilySpec::HarmonicPerturbed {
                    levels: 10,
                    coupling: AffinePath::default(),
                },
                &unit,
            ),
        ),
        (
            "tangent_blowup",
            mk(
                FamilySpec::TangentBlowup {
                    padding: vec![2.0, -2.0, 3.0, -3.0],
                },
                &tangent,
            ),
        ),
        (
            "linear_crossing",
            mk(FamilySpec::LinearCrossing { dim: 5 }, &unit),
        ),
        (
            "constant",
            mk(
                FamilySpec::Constant {
                    diagonal: vec![-1.0, 0.25, 2.0, -3.5],
                },
                &unit,
            ),
        ),
    ]
}

fn criterion2(out: &mut Outcome) {
    let opts = SearchOptions::default();
    let mut cases = builtin_samples();
    for seed in 0..50u64 {
        let dim = 1 + (seed as usize % 10);
        let points = 10 + (seed as usize * 7) % 91;
        cases.push(("random_crossings", random_path(dim, seed, points)));
    }
    for (name, s) in &cases {
        let ceiling = opts.ceiling_for(s);
        let levels: Vec<f64> = [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .map(|f| f * ceiling)
            .collect();
        match lemma_equivalence(s, &levels, &opts) {
            Ok(r) => out.check(r.agree, || {
                format!("{name} (dim {}): routes disagree", s.dim())
            }),
            Err(e) => out.check(false, || format!("{name}: {e}")),
        }
    }
}

fn criterion3(out: &mut Outcome) {
    let s = dirac(20, 201);
    let opts = SearchOptions::default();
    for delta in [0.2, 0.1, 0.05] {
        for x in INTERIOR {
            match theorem1_certify(&s, x, delta, &opts) {
                Ok(c) => out.check(
                    c.tail_bound < delta && c.b_modulus < delta && c.final_bound < 3.0 * delta,
                    || format!("delta {delta}, x {x}: bounds {c:?}"),
                ),
                Err(e) => out.check(false, || format!("delta {delta}, x {x}: {e}")),
            }
        }
    }
}

fn criterion4(out: &mut Outcome) {
    let s = dirac(20, 201);
    let opts = SearchOptions::default();
    for delta in [0.2, 0.1] {
        for x in INTERIOR {
            let c = match theorem2_certify(&s, x, delta, 0.5, &opts) {
                Ok(c) => c,
                Err(e) => {
                    out.check(false, || format!("delta {delta}, x {x}: {e}"));
                    continue;
                }
            };
            let at = |what: &str| format!("delta {delta}, x {x}: {what}");
            out.check(c.decomposition_residual <= 1e-9, || {
                at(&format!(
                    "decomposition residual {:e}",
                    c.decomposition_residual
                ))
            });
            out.check(c.projection_identity_residual <= 1e-9, || {
                at(&format!(
                    "projection identity residual {:e}",
                    c.projection_identity_residual
                ))
            });
            out.check(c.ineq2_plus < delta && c.ineq2_minus < delta, || {
                at(&format!("ineq2 {} / {}", c.ineq2_plus, c.ineq2_minus))
            });
            out.check(c.ineq3_values.iter().all(|&v| v < delta), || {
                at(&format!("ineq3 {:?}", c.ineq3_values))
            });
            out.check(c.final_bound < 7.0 * delta, || {
                at(&format!("final bound {}", c.final_bound))
            });
            out.check(c.partition_residual <= 1e-12, || {
                at(&format!("q + q+ + q- - 1 = {:e}", c.partition_residual))
            });
        }
    }
}

fn criterion5(out: &mut Outcome) {
    let grid = ParameterGrid::uniform_excluding(0.1, 0.9, 200, 0.5, 0.02).unwrap();
    let spec = FamilySpec::TangentBlowup {
        padding: vec![2.0, -2.0, 3.0, -3.0],
    };
    let s = sample(&spec, &grid).unwrap();
    let left = s.grid().points().iter().rposition(|&x| x < 0.5).unwrap();
    let (xa, xb) = (s.x(left), s.x(left + 1));
    out.check(
        (xa - 0.48).abs() < 1e-12 && (xb - 0.52).abs() < 1e-12,
        || format!("pole edge is [{xa}, {xb}]"),
    );
    let (a, b) = (
        (std::f64::consts::PI * xa).tan(),
        (std::f64::consts::PI * xb).tan(),
    );
    // |1/(a+i) - 1/(b+i)| = |a - b| / (|a+i| |b+i|)
    let graph_oracle = (a - b).abs() / (a.hypot(1.0) * b.hypot(1.0));
    let riesz_oracle = (gamma(a) - gamma(b)).abs();

    let graph = continuity_modulus(&s, ContinuityMetric::Graph);
    let riesz = continuity_modulus(&s, ContinuityMetric::Riesz);
    let g = graph.edge_at(xa).unwrap().value;
    let r = riesz.edge_at(xa).unwrap().value;
    out.check((g - graph_oracle).abs() <= 1e-9, || {
        format!("graph edge {g} vs scalar oracle {graph_oracle}")
    });
    out.check((r - riesz_oracle).abs() <= 1e-9, || {
        format!("riesz edge {r} vs scalar oracle {riesz_oracle}")
    });
    out.check(g <= 0.05, || {
        format!("graph modulus across the pole is {g:.6} > 0.05")
    });
    out.check(r >= 1.9, || format!("riesz modulus across the pole is {r}"));

    match strict_adaptedness_certify(&s, left, 1.0, 0.5, TAU_EDGE) {
        Ok(st) => out.check(
            !st.passes && st.modulus >= 1.0 && st.range.contains(left + 1),
            || format!("strict adaptedness {st:?}"),
        ),
        Err(e) => out.check(false, || format!("strict adaptedness: {e}")),
    }
    let refused = theorem2_certify(&s, left, 0.1, 0.5, &SearchOptions::default());
    out.check(
        matches!(refused, Err(TheoremError::StrictAdaptednessFailed { .. })),
        || format!("theorem2 at the pole: {refused:?}"),
    );
}

fn flows(s: &FamilySample) -> Result<(i64, i64), String> {
    let t = flow_by_tracking(s, TAU_EDGE).map_err(|e| e.to_string())?;
    let p = flow_by_partition(s, &SearchOptions::default()).map_err(|e| e.to_string())?;
    Ok((t.flow, p.flow))
}

fn split_point(s: &FamilySample) -> Option<usize> {
    let zero = RealWindow::closed(0.0, 0.0);
    let mid = s.len() / 2;
    (0..s.len() / 4)
        .flat_map(|d| [mid + d, mid - d])
        .find(|&k| s.spectrum(k).margin(&zero) > 1e-3)
}

fn criterion6(out: &mut Outcome) {
    let s = dirac(100, 401);
    out.check(s.dim() == 201, || format!("dimension {}", s.dim()));
    match flows(&s) {
        Ok(f) => out.check(f == (1, 1), || format!("dirac flows {f:?}")),
        Err(e) => out.check(false, || format!("dirac: {e}")),
    }
    let mut cases = vec![("dirac".to_string(), s)];
    for seed in 0..100u64 {
        let dim = 2 + (seed as usize % 11);
        let points = 100 + (seed as usize * 13) % 101;
        cases.push((format!("seed {seed}"), random_path(dim, seed, points)));
    }
    for (name, s) in &cases {
        let total = match flows(s) {
            Ok((t, p)) => {
                out.check(t == p, || format!("{name}: tracking {t}, partition {p}"));
                t
            }
            Err(e) => {
                out.check(false, || format!("{name}: {e}"));
                continue;
            }
        };
        match flows(&s.reversed()) {
            Ok(f) => out.check(f == (-total, -total), || {
                format!("{name}: reversed flows {f:?}, expected {}", -total)
            }),
            Err(e) => out.check(false, || format!("{name} reversed: {e}")),
        }
        let Some(k) = split_point(s) else {
            out.check(false, || format!("{name}: no split point off the spectrum"));
            continue;
        };
        let (l, r) = (s.slice(0, k).unwrap(), s.slice(k, s.len() - 1).unwrap());
        match (flows(&l), flows(&r)) {
            (Ok((lt, lp)), Ok((rt, rp))) => {
                out.check(lt == lp && rt == rp && lt + rt == total, || {
                    format!("{name}: halves ({lt}, {lp}) + ({rt}, {rp}) vs {total}")
                });
                let joined = flows(&l.concat(&r).unwrap());
                out.check(joined == Ok((total, total)), || {
                    format!("{name}: concatenation {joined:?}")
                });
            }
            (a, b) => out.check(false, || format!("{name}: halves {a:?} {b:?}")),
        }
    }
}

/// `gamma(A)` of this sample has 20 eigenvalues in `[0.69, 0.71]` and its
/// level ceiling maps to `0.75`, so no level above `gamma(b) = 0.8` exists.
fn no_gap_sample() -> FamilySample {
    let mut diag = vec![gamma_inverse(-0.999), gamma_inverse(0.999)];
    diag.extend((0..20).map(|k| gamma_inverse(0.69 + 0.001 * k as f64)));
    let grid = ParameterGrid::uniform(0.0, 1.0, 3).unwrap();
    FamilySample::constant(HermitianOperator::from_real_diagonal(&diag), grid)
        .with_ceiling(Some(gamma_inverse(0.75)))
}

fn criterion7(out: &mut Outcome) {
    let levels = [0.3, 0.8, 1.5, 2.5, 4.0];
    for index in 0..50 {
        let a = random_matrix(1000 + index);
        let d = a.decompose();
        let g = bounded_transform(&a).decompose();
        for c in levels {
            let (r, rg) = (
                d.count_in(&RealWindow::symmetric(c)),
                g.count_in(&RealWindow::symmetric(gamma(c))),
            );
            out.check(r == rg, || {
                format!("matrix {index}, level {c}: {r} vs {rg}")
            });
        }
    }

    let opts = SearchOptions::default();
    match transform_correspondence_check(
        &dirac(20, 201),
        // gamma(c) must stay below 1 - eta = 0.9, so c < 2.06.
        &[0.5, 1.4, 2.0],
        &PolarizationCheck::default(),
        &opts,
    ) {
        Ok(r) => out.check(r.passes, || {
            format!(
                "dirac correspondence: agree {}, mismatches {:?}",
                r.agree, r.rank_mismatches
            )
        }),
        Err(e) => out.check(false, || format!("dirac correspondence: {e}")),
    }

    let chk = PolarizationCheck {
        eta: 0.25,
        interior_budget: Some(20),
        norm_slack: 1e-9,
    };
    match transform_correspondence_check(&no_gap_sample(), &[gamma_inverse(0.8)], &chk, &opts) {
        Ok(r) => {
            let no_gap = |errors: Vec<&opfam_core::adapted::CertificationError>| {
                !errors.is_empty()
                    && errors
                        .iter()
                        .all(|e| matches!(e, opfam_core::adapted::CertificationError::NoGap { .. }))
            };
            let discrete_no_gap = no_gap(r.discrete.failures.iter().map(|f| &f.error).collect());
            let weak_no_gap = no_gap(r.weak.lemma.failures.iter().map(|f| &f.error).collect());
            out.check(
                !r.passes && r.consistent && r.weak.agree && discrete_no_gap && weak_no_gap,
                || {
                    format!(
                        "no-gap correspondence: passes {}, consistent {}, weak agree {}, no-gap {discrete_no_gap}/{weak_no_gap}",
                        r.passes, r.consistent, r.weak.agree
                    )
                },
            )
        }
        Err(e) => out.check(false, || format!("no-gap correspondence: {e}")),
    }
}

fn criterion8(out: &mut Outcome) {
    let tmp = tempfile::TempDir::new().unwrap();
    let config = serde_json::json!({
        "family": {"kind": "random_crossings", "dim": 8},
        "grid": {"start": 0.0, "end": 1.0, "points": 120},
        "analyses": [
            {"kind": "discrete-spectrum", "params": {"b_levels": [0.2, 0.5]}},
            {"kind": "flow"},
            {"kind": "distances"},
            {"kind": "theorem1", "params": {"delta": 1.0, "x_index": [10, 60]}}
        ],
        "seed": 2024
    });
    let cfg = tmp.path().join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    let mut reports = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_opfam"))
            .args(["--quiet", "--output-dir"])
            .arg(&dir)
            .arg("analyze")
            .arg(&cfg)
            .status()
            .unwrap();
        out.check(status.success(), || {
            format!("run {run} exited with {status}")
        });
        reports.push(std::fs::read(dir.join("report.json")).unwrap_or_default());
    }
    out.check(!reports[0].is_empty() && reports[0] == reports[1], || {
        "report.json differs between runs".into()
    });
}

type Criterion = (u32, &'static str, Duration, fn(&mut Outcome));

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            1,
            "functional calculus",
            Duration::from_secs(10),
            criterion1,
        ),
        (2, "lemma equivalence", Duration::from_secs(60), criterion2),
        (
            3,
            "graph-continuity certificates",
            Duration::from_secs(30),
            criterion3,
        ),
        (
            4,
            "riesz-continuity certificates",
            Duration::from_secs(30),
            criterion4,
        ),
        (
            5,
            "graph vs riesz negative control",
            Duration::from_secs(10),
            criterion5,
        ),
        (6, "spectral flow", Duration::from_secs(120), criterion6),
        (
            7,
            "bounded-transform correspondence",
            Duration::from_secs(30),
            criterion7,
        ),
        (8, "reproducibility", Duration::from_secs(60), criterion8),
    ];
    let mut unexpected = Vec::new();
    for (id, name, limit, run) in criteria {
        let mut out = Outcome::new();
        let start = Instant::now();
        run(&mut out);
        let elapsed = start.elapsed();
        out.check(elapsed < limit, || {
            format!("took {elapsed:.2?}, limit {limit:?}")
        });
        let passed = out.failures.is_empty();
        let status = if passed { "PASS" } else { "FAIL" };
        println!("{status} criterion {id} ({name}) in {elapsed:.2?}");
        for f in out.failures.iter().take(10) {
            println!("    {f}");
        }
        if out.failures.len() > 10 {
            println!("    ... {} more", out.failures.len() - 10);
        }
        let expected_fail = UNATTAINABLE.contains(&id);
        if passed == expected_fail {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all outcomes as expected (known unattainable: {UNATTAINABLE:?})");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
