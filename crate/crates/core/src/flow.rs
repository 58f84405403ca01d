//! Spectral flow along the grid, by branch tracking and by adapted
//! partitions.

use serde::Serialize;
use thiserror::Error;

use crate::adapted::{
    abs_shifted, certify_with_tolerance, edge_moduli, gap_levels, grow_adapted_range,
    AdaptedPairCertificate, CertificationError, GridRange, SearchOptions,
};
use crate::family::FamilySample;
use crate::spectral::RealWindow;
use crate::topology::{continuity_modulus, ContinuityMetric};

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum FlowError {
    #[error("0 is within {margin:e} of the spectrum at endpoint index {index} (x = {x})")]
    EndpointOnSpectrum { index: usize, x: f64, margin: f64 },
    #[error(
        "branch {branch} moves {movement} between indices {from_index} and {to_index}, \
         more than the bound {bound}; refine the grid"
    )]
    AmbiguousMatching {
        from_index: usize,
        to_index: usize,
        branch: usize,
        movement: f64,
        bound: f64,
    },
    #[error("no level keeps an adapted pair across the edge at index {index} (x = {x}); refine the grid")]
    PartitionFailed { index: usize, x: f64 },
    #[error(transparent)]
    Certification(#[from] CertificationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    Tracking,
    Partition,
}

/// A branch changing sign between two grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    /// Position of the branch in the sorted spectrum at `to_index`.
    pub branch: usize,
    pub from_index: usize,
    pub to_index: usize,
    pub x_left: f64,
    pub x_right: f64,
    /// `+1` upward, `-1` downward.
    pub direction: i64,
}

/// Branches leaving through `+inf` and returning from `-inf` (positive
/// offset) or the reverse, between two grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Escape {
    pub from_index: usize,
    pub to_index: usize,
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingWitness {
    pub crossings: Vec<Crossing>,
    pub escapes: Vec<Escape>,
}

/// Segments `[breakpoints[i], breakpoints[i + 1]]` with adapted levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPartition {
    pub breakpoints: Vec<usize>,
    pub levels: Vec<f64>,
    /// `rank P_[0, c](A_end) - rank P_[0, c](A_start)` per segment.
    pub contributions: Vec<i64>,
    pub certificates: Vec<AdaptedPairCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowWitness {
    Tracking(TrackingWitness),
    Partition(FlowPartition),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    pub flow: i64,
    pub method: FlowMethod,
    pub witness: FlowWitness,
}

fn check_endpoints(sample: &FamilySample, tau_edge: f64) -> Result<(), FlowError> {
    for index in [0, sample.len() - 1] {
        let margin = sample
            .spectrum(index)
            .eigenvalues()
            .iter()
            .map(|l| l.abs())
            .fold(f64::INFINITY, f64::min);
        if margin <= tau_edge {
            return Err(FlowError::EndpointOnSpectrum {
                index,
                x: sample.x(index),
                margin,
            });
        }
    }
    Ok(())
}

fn sign(t: f64, tau: f64) -> i8 {
    if t > tau {
        1
    } else if t < -tau {
        -1
    } else {
        0
    }
}

/// Magnitude factor by which branches treated as escaping through infinity
/// must exceed every matched branch.
const ESCAPE_FACTOR: f64 = 2.0;

/// Largest admitted `||P_y - P_y'||` across one edge of a partition segment.
pub const PROJECTION_STEP_CAP: f64 = 0.5;

/// Order-preserving matching `before[j] <-> after[j + s]` minimizing the
/// largest movement; ties go to the smallest `|s|`, then to `s > 0`. An
/// offset `s != 0` is admitted only when the unmatched branches are at least
/// [`ESCAPE_FACTOR`] times larger in magnitude than all matched ones, and
/// only searched when the plain matching moves some branch by `bound` or more.
fn best_offset(before: &[f64], after: &[f64], bound: f64) -> (i64, f64) {
    let n = before.len() as i64;
    let matched = |s: i64| (0..n).filter(move |&j| (0..n).contains(&(j + s)));
    let cost = |s: i64| {
        matched(s)
            .map(|j| (after[(j + s) as usize] - before[j as usize]).abs())
            .fold(0.0f64, f64::max)
    };
    let escapes_far = |s: i64| {
        let scale = matched(s)
            .map(|j| before[j as usize].abs().max(after[(j + s) as usize].abs()))
            .fold(0.0f64, f64::max);
        let gone = (0..n)
            .filter(|&j| !(0..n).contains(&(j + s)))
            .map(|j| before[j as usize]);
        let came = (0..n)
            .filter(|&j| !(0..n).contains(&(j - s)))
            .map(|j| after[j as usize]);
        gone.chain(came).all(|l| l.abs() >= ESCAPE_FACTOR * scale)
    };
    let mut best = (0, cost(0));
    if best.1 < bound {
        return best;
    }
    for m in 1..n {
        for s in [m, -m] {
            let c = cost(s);
            if c < best.1 && escapes_far(s) {
                best = (s, c);
            }
        }
    }
    best
}

/// Half the distance between the nearest eigenvalues on either side of 0.
fn movement_bound(eigenvalues: &[f64], tau: f64) -> f64 {
    let below = eigenvalues
        .iter()
        .copied()
        .filter(|&l| l < -tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let above = eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > tau)
        .fold(f64::INFINITY, f64::min);
    0.5 * (above - below)
}

/// Net count of branches crossing 0 upward minus downward. Branches are
/// matched between neighbours by [`best_offset`]; a branch sitting on 0 at
/// an interior point keeps the sign it had before until it leaves.
pub fn flow_by_tracking(sample: &FamilySample, tau_edge: f64) -> Result<FlowResult, FlowError> {
    check_endpoints(sample, tau_edge)?;
    let spectra = sample.spectra();
    let mut last: Vec<i8> = spectra[0]
        .eigenvalues()
        .iter()
        .map(|&l| sign(l, tau_edge))
        .collect();
    let n = last.len() as i64;
    let mut crossings = Vec::new();
    let mut escapes = Vec::new();
    for k in 0..sample.len() - 1 {
        let (e0, e1) = (spectra[k].eigenvalues(), spectra[k + 1].eigenvalues());
        let bound = movement_bound(e0, tau_edge);
        let (s, _) = best_offset(e0, e1, bound);
        if s != 0 {
            escapes.push(Escape {
                from_index: k,
                to_index: k + 1,
                offset: s,
            });
        }
        let mut next = vec![0i8; n as usize];
        for j in 0..n {
            let j1 = j + s;
            if !(0..n).contains(&j1) {
                continue;
            }
            let (j, j1) = (j as usize, j1 as usize);
            let now = sign(e1[j1], tau_edge);
            if now != 0 && now != last[j] {
                let movement = (e1[j1] - e0[j]).abs();
                if movement >= bound {
                    return Err(FlowError::AmbiguousMatching {
                        from_index: k,
                        to_index: k + 1,
                        branch: j1,
                        movement,
                        bound,
                    });
                }
                crossings.push(Crossing {
                    branch: j1,
                    from_index: k,
                    to_index: k + 1,
                    x_left: sample.x(k),
                    x_right: sample.x(k + 1),
                    direction: i64::from(now - last[j]) / 2,
                });
            }
            next[j1] = if now != 0 { now } else { last[j] };
        }
        // Branches entering through infinity take the side they came from.
        let entering: Vec<usize> = if s > 0 {
            (0..s as usize).collect()
        } else {
            ((n + s) as usize..n as usize).collect()
        };
        for j1 in entering {
            let now = sign(e1[j1], tau_edge);
            next[j1] = if now != 0 {
                now
            } else if s > 0 {
                -1
            } else {
                1
            };
        }
        last = next;
    }
    Ok(FlowResult {
        flow: crossings.iter().map(|c| c.direction).sum(),
        method: FlowMethod::Tracking,
        witness: FlowWitness::Tracking(TrackingWitness { crossings, escapes }),
    })
}

/// Greedy adapted partition: from each breakpoint take, among the gap levels
/// of `|spec A|` below the ceiling, the one whose adapted range reaches
/// farthest (ties to the smaller level), and sum the rank changes of
/// `P_[0, c]` over the segments.
///
/// A segment at level `c` never spans an edge whose graph distance reaches
/// `2c / (1 + c^2)`, the smallest resolvent distance of a scalar jump from
/// `-c` to `c`; otherwise an eigenvalue could skip the window between grid
/// points unseen. Segments also end before any edge where `P_[-c, c]` moves
/// by [`PROJECTION_STEP_CAP`] or more, which catches one eigenvalue leaving
/// the window while another enters between the same two points.
pub fn flow_by_partition(
    sample: &FamilySample,
    opts: &SearchOptions,
) -> Result<FlowResult, FlowError> {
    check_endpoints(sample, opts.tau_edge)?;
    let last = sample.len() - 1;
    let ceiling = opts.ceiling_for(sample);
    let mut breakpoints = vec![0];
    let mut levels = Vec::new();
    let mut contributions = Vec::new();
    let mut certificates = Vec::new();
    let graph = continuity_modulus(sample, ContinuityMetric::Graph);
    let mut start = 0;
    while start < last {
        let mut best: Option<(f64, usize)> = None;
        for gap in gap_levels(
            &abs_shifted(sample.spectrum(start), 0.0),
            0.0,
            ceiling,
            opts.tau_edge,
        ) {
            let c = gap.level;
            let jump = 2.0 * c / (1.0 + c * c);
            let limit = (start..last)
                .find(|&k| graph.edges[k].value >= jump)
                .unwrap_or(last);
            if limit == start {
                continue;
            }
            let within = GridRange::new(start, limit);
            let grown = grow_adapted_range(sample, start, 0.0, c, opts.tau_edge, within)?;
            let steps = edge_moduli(sample, &grown, &RealWindow::symmetric(c));
            let reach = start
                + steps
                    .iter()
                    .position(|&(p, _)| p >= PROJECTION_STEP_CAP)
                    .unwrap_or(steps.len());
            if best.is_none_or(|(_, r)| reach > r) {
                best = Some((gap.level, reach));
            }
            if reach == last {
                break;
            }
        }
        let (level, end) = match best {
            Some((level, end)) if end > start => (level, end),
            _ => {
                return Err(FlowError::PartitionFailed {
                    index: start,
                    x: sample.x(start),
                })
            }
        };
        let segment = GridRange::new(start, end);
        certificates.push(certify_with_tolerance(
            sample,
            &segment,
            level,
            None,
            opts.tau_edge,
        )?);
        let window = RealWindow::closed(0.0, level);
        let count = |k: usize| sample.spectrum(k).count_in(&window) as i64;
        contributions.push(count(end) - count(start));
        levels.push(level);
        breakpoints.push(end);
        start = end;
    }
    Ok(FlowResult {
        flow: contributions.iter().sum(),
        method: FlowMethod::Partition,
        witness: FlowWitness::Partition(FlowPartition {
            breakpoints,
            levels,
            contributions,
            certificates,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{sample, AffinePath, FamilySpec, ParameterGrid};
    use crate::spectral::{HermitianOperator, DEFAULT_EDGE_TOL};

    fn both(s: &FamilySample) -> (i64, i64) {
        let t = flow_by_tracking(s, DEFAULT_EDGE_TOL).unwrap().flow;
        let p = flow_by_partition(s, &SearchOptions::default())
            .unwrap()
            .flow;
        (t, p)
    }

    #[test]
    fn constant_family_has_no_flow() {
        let g = ParameterGrid::uniform(0.0, 1.0, 5).unwrap();
        let s = FamilySample::constant(HermitianOperator::from_real_diagonal(&[-1.0, 1.0, 2.0]), g);
        assert_eq!(both(&s), (0, 0));
        let p = flow_by_partition(&s, &SearchOptions::default()).unwrap();
        let FlowWitness::Partition(part) = p.witness else {
            panic!()
        };
        assert_eq!(part.breakpoints, vec![0, 4]);
    }

    #[test]
    fn linear_crossing_flows_up() {
        let g = ParameterGrid::uniform(0.0, 1.0, 11).unwrap();
        let s = sample(&FamilySpec::LinearCrossing { dim: 3 }, &g).unwrap();
        assert_eq!(both(&s), (1, 1));
        let p = flow_by_partition(&s, &SearchOptions::default()).unwrap();
        let FlowWitness::Partition(part) = p.witness else {
            panic!()
        };
        assert!(part.levels.len() <= 2);
        let t = flow_by_tracking(&s, DEFAULT_EDGE_TOL).unwrap();
        let FlowWitness::Tracking(w) = t.witness else {
            panic!()
        };
        assert_eq!(w.crossings.len(), 1);
        assert_eq!((w.crossings[0].from_index, w.crossings[0].to_index), (5, 6));
    }

    #[test]
    fn dirac_flux_sweep() {
        let g = ParameterGrid::uniform(-0.49, 0.49, 99).unwrap();
        let spec = FamilySpec::DiracCircle {
            modes: 5,
            flux: AffinePath::default(),
        };
        let s = sample(&spec, &g).unwrap();
        assert_eq!(both(&s), (1, 1));
        assert_eq!(both(&s.reversed()), (-1, -1));
    }

    #[test]
    fn endpoints_must_be_clean() {
        let g = ParameterGrid::uniform(0.5, 1.0, 3).unwrap();
        let s = sample(&FamilySpec::LinearCrossing { dim: 3 }, &g).unwrap();
        assert!(matches!(
            flow_by_tracking(&s, DEFAULT_EDGE_TOL),
            Err(FlowError::EndpointOnSpectrum { index: 0, .. })
        ));
    }

    #[test]
    fn touching_zero_at_grid_point() {
        let g = ParameterGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let ops = [-0.1, 0.0, -0.1]
            .iter()
            .map(|&v| HermitianOperator::from_real_diagonal(&[v, 1.0]))
            .collect();
        let s = FamilySample::new(g.clone(), ops).unwrap();
        assert_eq!(both(&s), (0, 0));
        let ops = [-0.1, 0.0, 0.1]
            .iter()
            .map(|&v| HermitianOperator::from_real_diagonal(&[v, 1.0]))
            .collect();
        let s = FamilySample::new(g, ops).unwrap();
        assert_eq!(both(&s), (1, 1));
    }

    #[test]
    fn tangent_escape_is_not_a_crossing() {
        let g = ParameterGrid::uniform_excluding(0.1, 0.9, 200, 0.5, 0.02).unwrap();
        let s = sample(
            &FamilySpec::TangentBlowup {
                padding: vec![2.0, -2.0, 3.0, -3.0],
            },
            &g,
        )
        .unwrap();
        assert_eq!(both(&s), (0, 0));
        let t = flow_by_tracking(&s, DEFAULT_EDGE_TOL).unwrap();
        let FlowWitness::Tracking(w) = t.witness else {
            panic!()
        };
        assert_eq!(w.escapes.len(), 1);
        assert_eq!(w.escapes[0].offset, 1);
    }

    #[test]
    fn coarse_grid_is_ambiguous() {
        let g = ParameterGrid::new(vec![0.0, 1.0]).unwrap();
        let ops = [-0.5, 0.9]
            .iter()
            .map(|&v| HermitianOperator::from_real_diagonal(&[v, 1.0, -1.0]))
            .collect();
        let s = FamilySample::new(g, ops).unwrap();
        assert!(matches!(
            flow_by_tracking(&s, DEFAULT_EDGE_TOL),
            Err(FlowError::AmbiguousMatching { .. })
        ));
    }
}
