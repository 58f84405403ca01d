//! Graph and Riesz distances, continuity moduli along a grid, and the
//! certificates for graph and Riesz continuity.

mod theorem1;
mod theorem2;

pub use theorem1::{theorem1_certify, Theorem1Certificate};
pub use theorem2::{
    strict_adaptedness_certify, theorem2_certify, theorem2_certify_with, Calculus,
    StrictAdaptedness, Theorem2Certificate, Theorem2Matrices,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapted::{CertificationError, GridRange};
use crate::family::FamilySample;
use crate::par;
use crate::spectral::{
    bounded_transform, operator_norm, resolvent_at_i, CMatrix, HermitianOperator, SpectralError,
};

/// Certificates embed matrices only up to this dimension.
pub const EMBED_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TheoremError {
    #[error(transparent)]
    Certification(#[from] CertificationError),
    #[error("delta = {delta} is outside {allowed}")]
    InvalidDelta { delta: f64, allowed: String },
    #[error("{inequality} bound violated at grid index {index}: {value} >= {bound}")]
    BoundViolated {
        inequality: String,
        value: f64,
        bound: f64,
        index: usize,
    },
    #[error("no level epsilon gives a norm-continuous P_[eps, inf) (tried {})", attempts.len())]
    StrictAdaptednessFailed { attempts: Vec<StrictAdaptedness> },
}

fn check_dims(a: &HermitianOperator, b: &HermitianOperator) -> Result<(), SpectralError> {
    if a.dim() != b.dim() {
        return Err(SpectralError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// `||(A + i)^-1 - (B + i)^-1||`.
pub fn graph_distance(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64, SpectralError> {
    check_dims(a, b)?;
    Ok(operator_norm(&(resolvent_at_i(a) - resolvent_at_i(b))))
}

/// `||gamma(A) - gamma(B)||`.
pub fn riesz_distance(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64, SpectralError> {
    check_dims(a, b)?;
    Ok(operator_norm(
        &(bounded_transform(a).into_entries() - bounded_transform(b).into_entries()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityMetric {
    Graph,
    Riesz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusEdge {
    pub x_left: f64,
    pub x_right: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityModulus {
    pub metric: ContinuityMetric,
    pub edges: Vec<ModulusEdge>,
    pub max: f64,
}

impl ContinuityModulus {
    /// Edge whose left end is `x_left`.
    pub fn edge_at(&self, x_left: f64) -> Option<&ModulusEdge> {
        self.edges.iter().find(|e| e.x_left == x_left)
    }
}

/// Distance between the operators at each pair of adjacent grid points.
pub fn continuity_modulus(sample: &FamilySample, metric: ContinuityMetric) -> ContinuityModulus {
    let images: Vec<CMatrix> = match metric {
        ContinuityMetric::Graph => par::map_slice(sample.operators(), resolvent_at_i),
        ContinuityMetric::Riesz => sample
            .bounded_transform()
            .operators()
            .iter()
            .map(|a| a.entries().clone())
            .collect(),
    };
    let values = par::map_range(sample.len() - 1, |k| {
        operator_norm(&(&images[k + 1] - &images[k]))
    });
    let edges: Vec<ModulusEdge> = values
        .iter()
        .enumerate()
        .map(|(k, &value)| ModulusEdge {
            x_left: sample.x(k),
            x_right: sample.x(k + 1),
            value,
        })
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    ContinuityModulus { metric, edges, max }
}

/// Largest sub-range of `range` around `x_index` on which every value is
/// below `bound`; `values[k]` belongs to grid index `range.lo_index + k`.
/// Equivalent to contracting one grid step at a time from whichever side
/// still holds a violation.
pub(crate) fn contract(range: GridRange, x_index: usize, values: &[f64], bound: f64) -> GridRange {
    let ok = |index: usize| values[index - range.lo_index] < bound;
    let mut lo = x_index;
    while lo > range.lo_index && ok(lo - 1) {
        lo -= 1;
    }
    let mut hi = x_index;
    while hi < range.hi_index && ok(hi + 1) {
        hi += 1;
    }
    GridRange::new(lo, hi)
}

/// Max of `values` over the grid indices of `inner`, with its index.
pub(crate) fn max_over(outer: GridRange, inner: GridRange, values: &[f64]) -> (f64, usize) {
    inner
        .indices()
        .map(|k| (values[k - outer.lo_index], k))
        .fold((0.0, inner.lo_index), |best, cur| {
            if cur.0 > best.0 {
                cur
            } else {
                best
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{sample, FamilySpec, ParameterGrid};
    use crate::spectral::gamma;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn scalar(v: f64) -> HermitianOperator {
        HermitianOperator::from_real_diagonal(&[v])
    }

    #[test]
    fn graph_distance_examples() {
        let a = HermitianOperator::from_real_rows(&[vec![1.0, 2.0], vec![2.0, -3.0]]).unwrap();
        assert_eq!(graph_distance(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(
            graph_distance(&scalar(0.0), &scalar(1.0)).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
        let d = graph_distance(&scalar(1e6), &scalar(-1e6)).unwrap();
        assert_abs_diff_eq!(d, 2e-6, epsilon = 1e-12);
        assert!(graph_distance(&a, &scalar(0.0)).is_err());
    }

    #[test]
    fn riesz_distance_examples() {
        let a = HermitianOperator::from_real_rows(&[vec![1.0, 2.0], vec![2.0, -3.0]]).unwrap();
        assert!(riesz_distance(&a, &a).unwrap() < 1e-15);
        assert_abs_diff_eq!(
            riesz_distance(&scalar(1e6), &scalar(-1e6)).unwrap(),
            2.0,
            epsilon = 1e-11
        );
        assert_abs_diff_eq!(
            riesz_distance(&scalar(1.0), &scalar(-1.0)).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_family_moduli_vanish() {
        let g = ParameterGrid::uniform(0.0, 1.0, 5).unwrap();
        let s = FamilySample::constant(HermitianOperator::from_real_diagonal(&[-1.0, 0.5, 2.0]), g);
        for metric in [ContinuityMetric::Graph, ContinuityMetric::Riesz] {
            let m = continuity_modulus(&s, metric);
            assert_eq!(m.edges.len(), 4);
            assert_eq!(m.max, 0.0);
        }
    }

    #[test]
    fn tangent_pole_edge() {
        let g = ParameterGrid::uniform_excluding(0.1, 0.9, 200, 0.5, 0.02).unwrap();
        let s = sample(
            &FamilySpec::TangentBlowup {
                padding: vec![2.0, -2.0, 3.0, -3.0],
            },
            &g,
        )
        .unwrap();
        let a = (0.48 * std::f64::consts::PI).tan();
        let b = (0.52 * std::f64::consts::PI).tan();
        let graph = continuity_modulus(&s, ContinuityMetric::Graph);
        let riesz = continuity_modulus(&s, ContinuityMetric::Riesz);
        let e = graph.edge_at(0.48).unwrap();
        assert_eq!(e.x_right, 0.52);
        let oracle = (Complex64::new(a, 1.0).inv() - Complex64::new(b, 1.0).inv()).norm();
        assert_abs_diff_eq!(e.value, oracle, epsilon = 1e-12);
        let r = riesz.edge_at(0.48).unwrap().value;
        assert_abs_diff_eq!(r, gamma(a) - gamma(b), epsilon = 1e-12);
        assert!(r >= 1.9);
    }

    #[test]
    fn contraction_stops_at_violations() {
        let r = GridRange::new(2, 8);
        let v = [0.5, 0.1, 0.0, 0.0, 0.2, 0.9, 0.1];
        assert_eq!(contract(r, 4, &v, 0.3), GridRange::new(3, 6));
        assert_eq!(contract(r, 4, &v, 1.0), r);
        assert_eq!(max_over(r, GridRange::new(3, 6), &v), (0.2, 6));
    }
}
