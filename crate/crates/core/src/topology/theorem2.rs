use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{contract, max_over, TheoremError, EMBED_MAX_DIM};
use crate::adapted::{
    abs_shifted, edge_moduli, find_adapted_pair, gap_levels, grow_adapted_range,
    AdaptedPairCertificate, CertificationError, GridRange, SearchOptions,
};
use crate::family::FamilySample;
use crate::par;
use crate::spectral::{
    gamma, matrix_to_pairs, operator_norm, CMatrix, RealWindow, PROJECTION_TOL, RECONSTRUCTION_TOL,
};

/// The function whose continuity is being certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calculus {
    /// `gamma(t) = t / sqrt(1 + t^2)`: Riesz continuity of an unbounded family.
    BoundedTransform,
    /// `f(t) = t`: norm continuity of a family already confined to `[-1, 1]`.
    Identity,
}

impl Calculus {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Self::BoundedTransform => gamma(t),
            Self::Identity => t,
        }
    }

    /// `f(c) > 1 - delta` for every `c` above this value.
    pub fn threshold(self, delta: f64) -> f64 {
        match self {
            Self::BoundedTransform => (1.0 - delta) / (2.0 * delta - delta * delta).sqrt(),
            Self::Identity => 1.0 - delta,
        }
    }
}

/// Continuity of `y -> P_[eps, inf)(A_y)` over an adapted range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictAdaptedness {
    pub x_index: usize,
    pub epsilon: f64,
    /// Largest range around `x_index` on which `(range, epsilon)` is adapted.
    pub range: GridRange,
    /// Max over adjacent points of `||P_[eps, inf)(A_y) - P_[eps, inf)(A_y')||`.
    pub modulus: f64,
    pub cap: f64,
    pub passes: bool,
}

pub fn strict_adaptedness_certify(
    sample: &FamilySample,
    x_index: usize,
    epsilon: f64,
    cap: f64,
    tau_edge: f64,
) -> Result<StrictAdaptedness, CertificationError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CertificationError::InvalidLevel { level: epsilon });
    }
    if x_index >= sample.len() {
        return Err(CertificationError::RangeOutOfGrid {
            lo_index: x_index,
            hi_index: x_index,
            len: sample.len(),
        });
    }
    let range = grow_adapted_range(
        sample,
        x_index,
        0.0,
        epsilon,
        tau_edge,
        GridRange::full(sample),
    )?;
    let modulus = edge_moduli(sample, &range, &RealWindow::at_least(epsilon))
        .into_iter()
        .map(|e| e.0)
        .fold(0.0, f64::max);
    Ok(StrictAdaptedness {
        x_index,
        epsilon,
        range,
        modulus,
        cap,
        passes: modulus < cap,
    })
}

/// Matrices of the decomposition at one grid point, as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Matrices {
    pub index: usize,
    pub q: Vec<Vec<[f64; 2]>>,
    pub q_plus: Vec<Vec<[f64; 2]>>,
    pub q_minus: Vec<Vec<[f64; 2]>>,
    pub f_prime: Vec<Vec<[f64; 2]>>,
    pub f_plus: Vec<Vec<[f64; 2]>>,
    pub f_minus: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Certificate {
    pub x_index: usize,
    pub delta: f64,
    pub calculus: Calculus,
    /// Levels above this satisfy `f(c) > 1 - delta`.
    pub threshold: f64,
    pub epsilon: f64,
    pub level_c: f64,
    pub strict: StrictAdaptedness,
    pub adapted: AdaptedPairCertificate,
    /// `U'`: where both `(U', epsilon)` and `(U', c)` are adapted.
    pub adapted_range: GridRange,
    /// `U''`: where the three continuity terms stay below `delta`.
    pub range: GridRange,
    /// Max of `||f(A_y) - (f(A-_y) + f(A'_y) + f(A+_y))||` over `U'`.
    pub decomposition_residual: f64,
    /// Max of `||q+_y - (P_[eps, inf)(A_y) - P_[eps, c)(A'_y))||` over `U'`.
    pub projection_identity_residual: f64,
    /// Max of `||q_y + q+_y + q-_y - 1||` over `U'`.
    pub partition_residual: f64,
    /// Max of `||f(A+_y) - q+_y||` over `U'`.
    pub ineq2_plus: f64,
    /// Max of `||f(A-_y) + q-_y||` over `U'`.
    pub ineq2_minus: f64,
    /// Max over `U''` of `||f(A'_y) - f(A'_x)||`, `||q-_y - q-_x||`,
    /// `||q+_y - q+_x||`.
    pub ineq3_values: [f64; 3],
    /// Max over `U''` of `||f(A_y) - f(A_x)||`.
    pub final_bound: f64,
    /// Max over `U''` of `||gamma(A_y) - gamma(A_x)||`.
    pub riesz_bound: f64,
    pub matrices: Option<Vec<Theorem2Matrices>>,
}

struct Blocks {
    f_all: CMatrix,
    gamma_all: CMatrix,
    q: CMatrix,
    q_plus: CMatrix,
    q_minus: CMatrix,
    f_prime: CMatrix,
    f_plus: CMatrix,
    f_minus: CMatrix,
    decomposition: f64,
    projection_identity: f64,
    partition: f64,
    ineq2_plus: f64,
    ineq2_minus: f64,
}

fn blocks(sample: &FamilySample, y: usize, c: f64, epsilon: f64, calculus: Calculus) -> Blocks {
    let d = sample.spectrum(y);
    let n = d.dim();
    let one = |_| Complex64::new(1.0, 0.0);
    let f = |t: f64| Complex64::new(calculus.apply(t), 0.0);
    let inner = RealWindow::open(-c, c);
    let upper = RealWindow::at_least(c);
    let lower = RealWindow::at_most(-c);

    let f_all = d.apply(f);
    let gamma_all = match calculus {
        Calculus::BoundedTransform => f_all.clone(),
        Calculus::Identity => d.apply(|t| Complex64::new(gamma(t), 0.0)),
    };
    let q = d.window_piece(&inner, one).to_dense();
    let q_plus = d.window_piece(&upper, one).to_dense();
    let identity = CMatrix::identity(n, n);
    let q_minus = &identity - &q - &q_plus;
    let f_prime = d.window_piece(&inner, f).to_dense();
    let f_plus = d.window_piece(&upper, f).to_dense();
    let f_minus = d.window_piece(&lower, f).to_dense();

    let from_epsilon = d
        .window_piece(&RealWindow::at_least(epsilon), one)
        .to_dense();
    let epsilon_to_c = RealWindow::try_new(epsilon, c, true, false).expect("epsilon < c");
    let inner_part = d.window_piece(&epsilon_to_c, one).to_dense();

    Blocks {
        decomposition: operator_norm(&(&f_all - (&f_minus + &f_prime + &f_plus))),
        projection_identity: operator_norm(&(&q_plus - (from_epsilon - inner_part))),
        partition: operator_norm(&(&q + &q_plus + &q_minus - &identity)),
        ineq2_plus: operator_norm(&(&f_plus - &q_plus)),
        ineq2_minus: operator_norm(&(&f_minus + &q_minus)),
        f_all,
        gamma_all,
        q,
        q_plus,
        q_minus,
        f_prime,
        f_plus,
        f_minus,
    }
}

/// Riesz-continuity certificate with the bounded transform.
pub fn theorem2_certify(
    sample: &FamilySample,
    x_index: usize,
    delta: f64,
    cap: f64,
    opts: &SearchOptions,
) -> Result<Theorem2Certificate, TheoremError> {
    theorem2_certify_with(
        sample,
        x_index,
        delta,
        cap,
        opts,
        Calculus::BoundedTransform,
    )
}

/// Finds `c` with `f(c) > 1 - delta`, then the first level `epsilon < c`
/// (ascending gap midpoints of `|spec A_x|`) whose `P_[eps, inf)` modulus is
/// below `cap`, and checks the decomposition bounds on the common range.
pub fn theorem2_certify_with(
    sample: &FamilySample,
    x_index: usize,
    delta: f64,
    cap: f64,
    opts: &SearchOptions,
    calculus: Calculus,
) -> Result<Theorem2Certificate, TheoremError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(TheoremError::InvalidDelta {
            delta,
            allowed: "(0, 0.5)".into(),
        });
    }
    let threshold = calculus.threshold(delta);
    let adapted = find_adapted_pair(sample, x_index, threshold, opts)?;
    let c = adapted.level;

    let mut attempts = Vec::new();
    let mut strict = None;
    for gap in gap_levels(
        &abs_shifted(sample.spectrum(x_index), 0.0),
        0.0,
        c,
        opts.tau_edge,
    ) {
        let s = strict_adaptedness_certify(sample, x_index, gap.level, cap, opts.tau_edge)?;
        if s.passes {
            strict = Some(s);
            break;
        }
        attempts.push(s);
    }
    let strict = strict.ok_or(TheoremError::StrictAdaptednessFailed { attempts })?;
    let epsilon = strict.epsilon;
    let u1 = adapted
        .range
        .intersect(&strict.range)
        .expect("both ranges contain x_index");

    let all = par::map_range(u1.len(), |k| {
        blocks(sample, u1.lo_index + k, c, epsilon, calculus)
    });
    let column = |f: &dyn Fn(&Blocks) -> f64| all.iter().map(f).collect::<Vec<f64>>();
    let violated = |inequality: &str, values: &[f64], bound: f64, strict_less: bool| {
        let (value, index) = max_over(u1, u1, values);
        let bad = if strict_less {
            value >= bound
        } else {
            value > bound
        };
        bad.then(|| TheoremError::BoundViolated {
            inequality: inequality.into(),
            value,
            bound,
            index,
        })
    };

    let decomposition = column(&|b| b.decomposition);
    let projection_identity = column(&|b| b.projection_identity);
    let partition = column(&|b| b.partition);
    let plus = column(&|b| b.ineq2_plus);
    let minus = column(&|b| b.ineq2_minus);
    let checks = [
        ("decomposition", &decomposition, RECONSTRUCTION_TOL, false),
        (
            "projection_identity",
            &projection_identity,
            PROJECTION_TOL,
            false,
        ),
        ("partition", &partition, PROJECTION_TOL, false),
        ("ineq2_plus", &plus, delta, true),
        ("ineq2_minus", &minus, delta, true),
    ];
    for (name, values, bound, strict_less) in checks {
        if let Some(e) = violated(name, values, bound, strict_less) {
            return Err(e);
        }
    }

    let x = &all[x_index - u1.lo_index];
    let continuity = par::map_range(u1.len(), |k| {
        let b = &all[k];
        [
            operator_norm(&(&b.f_prime - &x.f_prime)),
            operator_norm(&(&b.q_minus - &x.q_minus)),
            operator_norm(&(&b.q_plus - &x.q_plus)),
        ]
    });
    let worst: Vec<f64> = continuity
        .iter()
        .map(|t| t[0].max(t[1]).max(t[2]))
        .collect();
    let range = contract(u1, x_index, &worst, delta);
    let ineq3_values = [0, 1, 2].map(|j| {
        let values: Vec<f64> = continuity.iter().map(|t| t[j]).collect();
        max_over(u1, range, &values).0
    });

    let finals = par::map_range(u1.len(), |k| {
        if range.contains(u1.lo_index + k) {
            let b = &all[k];
            (
                operator_norm(&(&b.f_all - &x.f_all)),
                operator_norm(&(&b.gamma_all - &x.gamma_all)),
            )
        } else {
            (0.0, 0.0)
        }
    });
    let (final_bound, worst_final) =
        max_over(u1, range, &finals.iter().map(|f| f.0).collect::<Vec<_>>());
    let (riesz_bound, _) = max_over(u1, range, &finals.iter().map(|f| f.1).collect::<Vec<_>>());
    if final_bound >= 7.0 * delta {
        return Err(TheoremError::BoundViolated {
            inequality: "final".into(),
            value: final_bound,
            bound: 7.0 * delta,
            index: worst_final,
        });
    }

    let matrices = (sample.dim() <= EMBED_MAX_DIM).then(|| {
        range
            .indices()
            .map(|y| {
                let b = &all[y - u1.lo_index];
                Theorem2Matrices {
                    index: y,
                    q: matrix_to_pairs(&b.q),
                    q_plus: matrix_to_pairs(&b.q_plus),
                    q_minus: matrix_to_pairs(&b.q_minus),
                    f_prime: matrix_to_pairs(&b.f_prime),
                    f_plus: matrix_to_pairs(&b.f_plus),
                    f_minus: matrix_to_pairs(&b.f_minus),
                }
            })
            .collect()
    });

    let max_of = |v: &[f64]| max_over(u1, u1, v).0;
    Ok(Theorem2Certificate {
        x_index,
        delta,
        calculus,
        threshold,
        epsilon,
        level_c: c,
        strict,
        adapted,
        adapted_range: u1,
        range,
        decomposition_residual: max_of(&decomposition),
        projection_identity_residual: max_of(&projection_identity),
        partition_residual: max_of(&partition),
        ineq2_plus: max_of(&plus),
        ineq2_minus: max_of(&minus),
        ineq3_values,
        final_bound,
        riesz_bound,
        matrices,
    })
}
