//! Adapted pairs: certification, level search, the covering construction and
//! the discrete-spectrum property on a grid.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::FamilySample;
use crate::par;
use crate::spectral::{RealWindow, SpectralDecomposition, DEFAULT_EDGE_TOL};

/// Inclusive range of grid indices standing in for a neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridRange {
    pub lo_index: usize,
    pub hi_index: usize,
}

impl GridRange {
    /// Panics if `lo > hi`.
    pub fn new(lo_index: usize, hi_index: usize) -> Self {
        assert!(
            lo_index <= hi_index,
            "empty grid range {lo_index}..={hi_index}"
        );
        Self { lo_index, hi_index }
    }

    pub fn single(index: usize) -> Self {
        Self::new(index, index)
    }

    pub fn full(sample: &FamilySample) -> Self {
        Self::new(0, sample.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.hi_index - self.lo_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.lo_index..=self.hi_index).contains(&index)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lo_index..=self.hi_index
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.lo_index.max(other.lo_index);
        let hi = self.hi_index.min(other.hi_index);
        (lo <= hi).then(|| Self::new(lo, hi))
    }

    pub fn is_subrange_of(&self, other: &Self) -> bool {
        other.lo_index <= self.lo_index && self.hi_index <= other.hi_index
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum CertificationError {
    #[error("level must be positive and finite, got {level}")]
    InvalidLevel { level: f64 },
    #[error("range {lo_index}..={hi_index} is outside a grid of {len} points")]
    RangeOutOfGrid {
        lo_index: usize,
        hi_index: usize,
        len: usize,
    },
    #[error("window edge within {margin:e} of the spectrum at grid index {index} (x = {x})")]
    EdgeOnSpectrum { index: usize, x: f64, margin: f64 },
    #[error("rank jumps from {from_rank} at index {from_index} to {to_rank} at index {to_index}")]
    RankJump {
        from_index: usize,
        to_index: usize,
        from_rank: usize,
        to_rank: usize,
    },
    #[error("{which} modulus {value} exceeds cap {cap}")]
    ModulusExceeded { which: String, value: f64, cap: f64 },
    #[error("no admissible level above {b} below ceiling {ceiling} at grid index {x_index}; raise the truncation dimension")]
    NoGap {
        x_index: usize,
        b: f64,
        ceiling: f64,
    },
    #[error("intervals leave {point} in [-{c}, {c}] uncovered")]
    CoveringIncomplete { c: f64, point: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
}

/// A certified adapted pair `(range, level)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptedPairCertificate {
    pub range: GridRange,
    pub level: f64,
    pub rank: usize,
    /// Smallest distance from `+-level` to any spectrum on the range.
    pub margin: f64,
    /// Max over adjacent grid points of `||P_y - P_y'||`.
    pub projection_modulus: f64,
    /// Max over adjacent grid points of `||A_y P_y - A_y' P_y'||`.
    pub restriction_modulus: f64,
}

/// Knobs shared by every level search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub tau_edge: f64,
    /// Levels are searched in `(b, b + gap_search_span)`.
    pub gap_search_span: f64,
    /// Overrides [`FamilySample::level_ceiling`].
    pub ceiling: Option<f64>,
    /// Shifts per level in the definitional sweep.
    pub sweep_points: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tau_edge: DEFAULT_EDGE_TOL,
            gap_search_span: 1.0,
            ceiling: None,
            sweep_points: 201,
        }
    }
}

impl SearchOptions {
    pub fn ceiling_for(&self, sample: &FamilySample) -> f64 {
        self.ceiling.unwrap_or_else(|| sample.level_ceiling())
    }
}

fn check_range(sample: &FamilySample, range: &GridRange) -> Result<(), CertificationError> {
    if range.hi_index >= sample.len() {
        return Err(CertificationError::RangeOutOfGrid {
            lo_index: range.lo_index,
            hi_index: range.hi_index,
            len: sample.len(),
        });
    }
    Ok(())
}

fn check_level(level: f64) -> Result<(), CertificationError> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(CertificationError::InvalidLevel { level });
    }
    Ok(())
}

/// Per-edge `(||P_y - P_y'||, ||A_y P_y - A_y' P_y'||)` for the spectral
/// projections onto `window`, over adjacent points of `range`.
pub fn edge_moduli(
    sample: &FamilySample,
    range: &GridRange,
    window: &RealWindow,
) -> Vec<(f64, f64)> {
    let spectra = sample.spectra();
    let one = |_| Complex64::new(1.0, 0.0);
    let value = |t| Complex64::new(t, 0.0);
    par::map_range(range.len() - 1, |k| {
        let (a, b) = (
            &spectra[range.lo_index + k],
            &spectra[range.lo_index + k + 1],
        );
        let p = a
            .window_piece(window, one)
            .distance(&b.window_piece(window, one));
        let ap = a
            .window_piece(window, value)
            .distance(&b.window_piece(window, value));
        (p, ap)
    })
}

/// First violation of constant rank or edge margin for `window` on `range`,
/// scanning upward. Returns `(rank, margin)` on success.
fn scan_window(
    sample: &FamilySample,
    range: &GridRange,
    window: &RealWindow,
    tau_edge: f64,
) -> Result<(usize, f64), CertificationError> {
    let spectra = sample.spectra();
    let mut rank = None;
    let mut margin = f64::INFINITY;
    for index in range.indices() {
        let d = &spectra[index];
        let m = d.margin(window);
        if m < tau_edge {
            return Err(CertificationError::EdgeOnSpectrum {
                index,
                x: sample.x(index),
                margin: m,
            });
        }
        margin = margin.min(m);
        let r = d.count_in(window);
        match rank {
            Some(prev) if prev != r => {
                return Err(CertificationError::RankJump {
                    from_index: index - 1,
                    to_index: index,
                    from_rank: prev,
                    to_rank: r,
                })
            }
            _ => rank = Some(r),
        }
    }
    Ok((rank.unwrap_or(0), margin))
}

/// Certifies that `(range, level)` is adapted: `+-level` off the spectrum
/// everywhere on `range` and the rank of `P_[-level, level]` constant.
/// Moduli are reported; if `cap` is given, either modulus above it fails.
pub fn certify_adapted_pair(
    sample: &FamilySample,
    range: &GridRange,
    level: f64,
    cap: Option<f64>,
) -> Result<AdaptedPairCertificate, CertificationError> {
    certify_with_tolerance(sample, range, level, cap, DEFAULT_EDGE_TOL)
}

pub fn certify_with_tolerance(
    sample: &FamilySample,
    range: &GridRange,
    level: f64,
    cap: Option<f64>,
    tau_edge: f64,
) -> Result<AdaptedPairCertificate, CertificationError> {
    check_level(level)?;
    check_range(sample, range)?;
    let window = RealWindow::symmetric(level);
    let (rank, margin) = scan_window(sample, range, &window, tau_edge)?;
    let (projection_modulus, restriction_modulus) = edge_moduli(sample, range, &window)
        .into_iter()
        .fold((0.0f64, 0.0f64), |(p, r), (a, b)| (p.max(a), r.max(b)));
    if let Some(cap) = cap {
        for (which, value) in [
            ("projection", projection_modulus),
            ("restriction", restriction_modulus),
        ] {
            if value > cap {
                return Err(CertificationError::ModulusExceeded {
                    which: which.into(),
                    value,
                    cap,
                });
            }
        }
    }
    Ok(AdaptedPairCertificate {
        range: *range,
        level,
        rank,
        margin,
        projection_modulus,
        restriction_modulus,
    })
}

/// An admissible level inside a spectral gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapLevel {
    pub level: f64,
    /// Width of the admissible interval around `level`.
    pub width: f64,
}

/// Admissible levels in `(lo, hi)` for the sorted values `abs_sorted`: the
/// midpoints of the components of `(lo, hi)` minus `tau`-neighborhoods of
/// the values, in ascending order.
pub fn gap_levels(abs_sorted: &[f64], lo: f64, hi: f64, tau: f64) -> Vec<GapLevel> {
    let mut out = Vec::new();
    let mut start = lo;
    let mut push = |l: f64, r: f64| {
        if r > l {
            out.push(GapLevel {
                level: 0.5 * (l + r),
                width: r - l,
            });
        }
    };
    for &a in abs_sorted {
        if a - tau >= hi {
            break;
        }
        if a - tau > start {
            push(start, a - tau);
        }
        start = start.max(a + tau);
    }
    push(start, hi);
    out
}

/// Widest entry of [`gap_levels`], ties toward the smaller level.
pub fn widest_gap_level(abs_sorted: &[f64], lo: f64, hi: f64, tau: f64) -> Option<GapLevel> {
    gap_levels(abs_sorted, lo, hi, tau)
        .into_iter()
        .fold(None, |best: Option<GapLevel>, g| match best {
            Some(b) if b.width >= g.width => Some(b),
            _ => Some(g),
        })
}

/// Sorted `|mu - shift|` over the eigenvalues `mu`.
pub(crate) fn abs_shifted(d: &SpectralDecomposition, shift: f64) -> Vec<f64> {
    let mut v: Vec<f64> = d.eigenvalues().iter().map(|&m| (m - shift).abs()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest range around `x_index` on which the window
/// `[shift - level, shift + level]` keeps its rank and clears the spectrum
/// by `tau_edge`, limited to `within`.
pub fn grow_adapted_range(
    sample: &FamilySample,
    x_index: usize,
    shift: f64,
    level: f64,
    tau_edge: f64,
    within: GridRange,
) -> Result<GridRange, CertificationError> {
    let window = RealWindow::closed(shift - level, shift + level);
    let spectra = sample.spectra();
    let probe = |k: usize| {
        let d = &spectra[k];
        let m = d.margin(&window);
        (m >= tau_edge).then(|| d.count_in(&window))
    };
    let rank = probe(x_index).ok_or_else(|| CertificationError::EdgeOnSpectrum {
        index: x_index,
        x: sample.x(x_index),
        margin: spectra[x_index].margin(&window),
    })?;
    let mut lo = x_index;
    while lo > within.lo_index && probe(lo - 1) == Some(rank) {
        lo -= 1;
    }
    let mut hi = x_index;
    while hi < within.hi_index && probe(hi + 1) == Some(rank) {
        hi += 1;
    }
    Ok(GridRange::new(lo, hi))
}

/// Level and grown range for the shifted family `A - shift` at `x_index`,
/// with the level searched in `(lo, hi)`. No moduli.
fn locate(
    sample: &FamilySample,
    x_index: usize,
    shift: f64,
    lo: f64,
    hi: f64,
    tau: f64,
) -> Result<(f64, GridRange), CertificationError> {
    let gap = widest_gap_level(&abs_shifted(sample.spectrum(x_index), shift), lo, hi, tau).ok_or(
        CertificationError::NoGap {
            x_index,
            b: lo,
            ceiling: hi,
        },
    )?;
    let range = grow_adapted_range(
        sample,
        x_index,
        shift,
        gap.level,
        tau,
        GridRange::full(sample),
    )?;
    Ok((gap.level, range))
}

/// An adapted pair `(U, c)` with `x_index` in `U` and `c > b`: `c` is the
/// widest-gap midpoint of `|spec A_x|` inside `(b, min(b + span, ceiling))`
/// and `U` the largest range around `x_index` on which it stays adapted.
pub fn find_adapted_pair(
    sample: &FamilySample,
    x_index: usize,
    b: f64,
    opts: &SearchOptions,
) -> Result<AdaptedPairCertificate, CertificationError> {
    check_level(b)?;
    check_range(sample, &GridRange::single(x_index))?;
    let ceiling = opts.ceiling_for(sample);
    let hi = (b + opts.gap_search_span).min(ceiling);
    let (level, range) =
        locate(sample, x_index, 0.0, b, hi, opts.tau_edge).map_err(|e| match e {
            CertificationError::NoGap { x_index, b, .. } => CertificationError::NoGap {
                x_index,
                b,
                ceiling,
            },
            e => e,
        })?;
    certify_with_tolerance(sample, &range, level, None, opts.tau_edge)
}

/// Certifier used for the shifted families `A - lambda` in the covering
/// construction: the widest admissible level above `0` for that family.
pub fn default_shifted_certifier(
    opts: SearchOptions,
) -> impl Fn(&FamilySample, usize) -> Result<AdaptedPairCertificate, CertificationError> + Sync {
    move |shifted, x_index| {
        let ceiling = opts.ceiling_for(shifted);
        let hi = opts.gap_search_span.min(ceiling);
        let (level, range) = locate(shifted, x_index, 0.0, 0.0, hi, opts.tau_edge)?;
        certify_with_tolerance(shifted, &range, level, None, opts.tau_edge)
    }
}

/// Finite cover of `[-c, c]` by windows `(lambda - eps, lambda + eps)` of
/// adapted pairs of the shifted families.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringCertificate {
    pub x_index: usize,
    pub level: f64,
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub ranges: Vec<GridRange>,
    pub c_minus: f64,
    pub c_plus: f64,
    pub intersection: GridRange,
}

impl CoveringCertificate {
    /// The pair `(U, c)` with `U` the largest range inside the intersection
    /// on which `+-c` stays off the spectrum with constant rank.
    pub fn adapted_pair(
        &self,
        sample: &FamilySample,
        tau_edge: f64,
    ) -> Result<AdaptedPairCertificate, CertificationError> {
        let range = grow_adapted_range(
            sample,
            self.x_index,
            0.0,
            self.level,
            tau_edge,
            self.intersection,
        )?;
        certify_with_tolerance(sample, &range, self.level, None, tau_edge)
    }
}

/// Upper bound on the number of shifts in one covering.
const MAX_COVER_SHIFTS: usize = 100_000;

/// Builds `Lambda` by stepping outward from `0`: each new shift sits on the
/// open frontier of the union so far, until both `-c` and `c` are covered.
pub fn covering_construction<F>(
    sample: &FamilySample,
    x_index: usize,
    c: f64,
    tau_edge: f64,
    certifier: F,
) -> Result<CoveringCertificate, CertificationError>
where
    F: Fn(&FamilySample, usize) -> Result<AdaptedPairCertificate, CertificationError>,
{
    check_level(c)?;
    check_range(sample, &GridRange::single(x_index))?;
    let margin = sample.spectrum(x_index).margin(&RealWindow::symmetric(c));
    if margin < tau_edge {
        return Err(CertificationError::EdgeOnSpectrum {
            index: x_index,
            x: sample.x(x_index),
            margin,
        });
    }
    let mut entries: Vec<(f64, AdaptedPairCertificate)> = Vec::new();
    let run = |entries: &mut Vec<(f64, AdaptedPairCertificate)>, lambda: f64| {
        let cert = certifier(&sample.shifted(lambda), x_index)?;
        let eps = cert.level;
        entries.push((lambda, cert));
        Ok::<f64, CertificationError>(eps)
    };
    let eps0 = run(&mut entries, 0.0)?;
    let (mut right, mut left) = (eps0, -eps0);
    while right <= c {
        if entries.len() > MAX_COVER_SHIFTS {
            return Err(CertificationError::CoveringIncomplete { c, point: right });
        }
        let lambda = right;
        right = lambda + run(&mut entries, lambda)?;
    }
    while left >= -c {
        if entries.len() > MAX_COVER_SHIFTS {
            return Err(CertificationError::CoveringIncomplete { c, point: left });
        }
        let lambda = left;
        left = lambda - run(&mut entries, lambda)?;
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let lambdas: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let epsilons: Vec<f64> = entries.iter().map(|e| e.1.level).collect();
    let ranges: Vec<GridRange> = entries.iter().map(|e| e.1.range).collect();
    verify_cover(&lambdas, &epsilons, c)?;
    let c_minus = lambdas
        .iter()
        .zip(&epsilons)
        .map(|(l, e)| l - e)
        .fold(f64::INFINITY, f64::min);
    let c_plus = lambdas
        .iter()
        .zip(&epsilons)
        .map(|(l, e)| l + e)
        .fold(f64::NEG_INFINITY, f64::max);
    let intersection = ranges
        .iter()
        .try_fold(GridRange::full(sample), |acc, r| acc.intersect(r))
        .expect("every range contains x_index");
    Ok(CoveringCertificate {
        x_index,
        level: c,
        lambdas,
        epsilons,
        ranges,
        c_minus,
        c_plus,
        intersection,
    })
}

/// Checks that the open intervals `(l - e, l + e)` cover `[-c, c]`.
pub fn verify_cover(lambdas: &[f64], epsilons: &[f64], c: f64) -> Result<(), CertificationError> {
    let mut intervals: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(epsilons)
        .map(|(l, e)| (l - e, l + e))
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    // `reach` is the right end of the covered prefix [-c, reach).
    let mut reach = -c;
    let mut started = false;
    for (lo, hi) in intervals {
        let admissible = if started { lo < reach } else { lo < -c };
        if !admissible {
            if hi <= reach {
                continue;
            }
            return Err(CertificationError::CoveringIncomplete { c, point: reach });
        }
        started = true;
        reach = reach.max(hi);
        if reach > c {
            return Ok(());
        }
    }
    Err(CertificationError::CoveringIncomplete { c, point: reach })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCertificate {
    pub b: f64,
    pub x_index: usize,
    pub certificate: AdaptedPairCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub b: f64,
    pub x_index: usize,
    pub error: CertificationError,
}

/// Lemma route: an adapted pair with level above `b` at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSpectrumReport {
    pub b_levels: Vec<f64>,
    pub ceiling: f64,
    pub certificates: Vec<PointCertificate>,
    pub failures: Vec<PointFailure>,
    pub passes: bool,
}

impl DiscreteSpectrumReport {
    /// `(level index, grid index)` of every failure.
    pub fn failure_locations(&self) -> BTreeSet<(usize, usize)> {
        locations(
            &self.b_levels,
            self.failures.iter().map(|f| (f.b, f.x_index)),
        )
    }
}

fn locations(
    b_levels: &[f64],
    items: impl Iterator<Item = (f64, usize)>,
) -> BTreeSet<(usize, usize)> {
    items
        .map(|(b, x)| {
            let k = b_levels
                .iter()
                .position(|&l| l == b)
                .expect("level comes from the list");
            (k, x)
        })
        .collect()
}

fn check_levels(b_levels: &[f64]) -> Result<(), CertificationError> {
    if b_levels.is_empty() {
        return Err(CertificationError::InvalidParameter {
            name: "b_levels".into(),
            reason: "must not be empty".into(),
        });
    }
    b_levels.iter().try_for_each(|&b| check_level(b))
}

pub fn discrete_spectrum_certify(
    sample: &FamilySample,
    b_levels: &[f64],
    opts: &SearchOptions,
) -> Result<DiscreteSpectrumReport, CertificationError> {
    check_levels(b_levels)?;
    let jobs: Vec<(f64, usize)> = b_levels
        .iter()
        .flat_map(|&b| (0..sample.len()).map(move |x| (b, x)))
        .collect();
    let results = par::map_slice(&jobs, |&(b, x)| find_adapted_pair(sample, x, b, opts));
    let mut certificates = Vec::new();
    let mut failures = Vec::new();
    for (&(b, x_index), r) in jobs.iter().zip(results) {
        match r {
            Ok(certificate) => certificates.push(PointCertificate {
                b,
                x_index,
                certificate,
            }),
            Err(error) => failures.push(PointFailure { b, x_index, error }),
        }
    }
    Ok(DiscreteSpectrumReport {
        b_levels: b_levels.to_vec(),
        ceiling: opts.ceiling_for(sample),
        passes: failures.is_empty(),
        certificates,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub b: f64,
    pub lambda: f64,
    pub x_index: usize,
    pub error: CertificationError,
}

/// Definitional route: for each level `b`, every shift `lambda` on a grid
/// of `[-b, b]` admits an adapted pair of `A - lambda` at every point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub b_levels: Vec<f64>,
    pub shifts_per_level: usize,
    pub ceiling: f64,
    pub failures: Vec<SweepFailure>,
    pub passes: bool,
}

impl SweepReport {
    pub fn failure_locations(&self) -> BTreeSet<(usize, usize)> {
        locations(
            &self.b_levels,
            self.failures.iter().map(|f| (f.b, f.x_index)),
        )
    }
}

/// `n` equally spaced values on `[-b, b]` (just `0` when `n == 1`).
fn symmetric_linspace(b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    let step = 2.0 * b / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|k| -b + k as f64 * step).collect();
    v[n - 1] = b;
    v
}

pub fn discrete_spectrum_by_sweep(
    sample: &FamilySample,
    b_levels: &[f64],
    opts: &SearchOptions,
) -> Result<SweepReport, CertificationError> {
    check_levels(b_levels)?;
    let ceiling = opts.ceiling_for(sample);
    let jobs: Vec<(f64, usize)> = b_levels
        .iter()
        .flat_map(|&b| (0..sample.len()).map(move |x| (b, x)))
        .collect();
    let per_point = par::map_slice(&jobs, |&(b, x_index)| {
        // First failing shift at this point, if any.
        symmetric_linspace(b, opts.sweep_points)
            .into_iter()
            .find_map(|lambda| {
                let hi = opts.gap_search_span.min(ceiling - lambda.abs());
                locate(sample, x_index, lambda, 0.0, hi, opts.tau_edge)
                    .err()
                    .map(|error| SweepFailure {
                        b,
                        lambda,
                        x_index,
                        error,
                    })
            })
    });
    let failures: Vec<SweepFailure> = per_point.into_iter().flatten().collect();
    Ok(SweepReport {
        b_levels: b_levels.to_vec(),
        shifts_per_level: opts.sweep_points,
        ceiling,
        passes: failures.is_empty(),
        failures,
    })
}

/// Both routes side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub lemma: DiscreteSpectrumReport,
    pub sweep: SweepReport,
    pub agree: bool,
}

pub fn lemma_equivalence(
    sample: &FamilySample,
    b_levels: &[f64],
    opts: &SearchOptions,
) -> Result<EquivalenceReport, CertificationError> {
    let lemma = discrete_spectrum_certify(sample, b_levels, opts)?;
    let sweep = discrete_spectrum_by_sweep(sample, b_levels, opts)?;
    let agree =
        lemma.passes == sweep.passes && lemma.failure_locations() == sweep.failure_locations();
    Ok(EquivalenceReport {
        lemma,
        sweep,
        agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{sample, AffinePath, FamilySpec, ParameterGrid};
    use crate::spectral::HermitianOperator;

    fn constant(diag: &[f64], points: usize) -> FamilySample {
        FamilySample::constant(
            HermitianOperator::from_real_diagonal(diag),
            ParameterGrid::uniform(0.0, 1.0, points).unwrap(),
        )
    }

    fn linear(start: f64, end: f64, points: usize) -> FamilySample {
        let g = ParameterGrid::uniform(start, end, points).unwrap();
        sample(&FamilySpec::LinearCrossing { dim: 3 }, &g).unwrap()
    }

    fn dirac(modes: usize, alpha: f64, points: usize) -> FamilySample {
        let g = ParameterGrid::uniform(0.0, 1.0, points).unwrap();
        let spec = FamilySpec::DiracCircle {
            modes,
            flux: AffinePath::constant(alpha),
        };
        sample(&spec, &g).unwrap()
    }

    #[test]
    fn constant_family_rank_zero() {
        let s = constant(&[-1.0, 1.0], 5);
        let c = certify_adapted_pair(&s, &GridRange::full(&s), 0.5, None).unwrap();
        assert_eq!(c.rank, 0);
        assert_eq!(c.projection_modulus, 0.0);
        assert_eq!(c.restriction_modulus, 0.0);
    }

    #[test]
    fn linear_crossing_narrow_range() {
        let s = linear(0.4, 0.6, 11);
        let c = certify_adapted_pair(&s, &GridRange::full(&s), 0.25, None).unwrap();
        assert_eq!(c.rank, 1);
        assert!(c.margin >= 0.15 - 1e-12, "{}", c.margin);
        assert!(c.projection_modulus < 1e-12);
        assert!((c.restriction_modulus - 0.02).abs() < 1e-12);
    }

    #[test]
    fn linear_crossing_full_range_jumps() {
        let s = linear(0.0, 1.0, 11);
        let e = certify_adapted_pair(&s, &GridRange::full(&s), 0.25, None).unwrap_err();
        assert_eq!(
            e,
            CertificationError::RankJump {
                from_index: 2,
                to_index: 3,
                from_rank: 0,
                to_rank: 1
            }
        );
    }

    #[test]
    fn edge_and_cap_violations() {
        let s = linear(0.0, 1.0, 5);
        let e = certify_adapted_pair(&s, &GridRange::full(&s), 0.25, None).unwrap_err();
        assert!(matches!(
            e,
            CertificationError::EdgeOnSpectrum { index: 1, .. }
        ));
        let s = linear(0.4, 0.6, 11);
        let e = certify_adapted_pair(&s, &GridRange::full(&s), 0.25, Some(0.01)).unwrap_err();
        assert!(matches!(e, CertificationError::ModulusExceeded { .. }));
        assert!(matches!(
            certify_adapted_pair(&s, &GridRange::new(0, 11), 0.25, None),
            Err(CertificationError::RangeOutOfGrid { .. })
        ));
        assert!(matches!(
            certify_adapted_pair(&s, &GridRange::full(&s), 0.0, None),
            Err(CertificationError::InvalidLevel { .. })
        ));
    }

    #[test]
    fn gap_levels_components() {
        let g = gap_levels(&[0.25, 0.75, 1.25, 1.75, 2.25], 1.0, 2.0, 0.0);
        let levels: Vec<f64> = g.iter().map(|g| g.level).collect();
        assert_eq!(levels, vec![1.125, 1.5, 1.875]);
        assert_eq!(
            widest_gap_level(&[0.25, 0.75, 1.25, 1.75, 2.25], 1.0, 2.0, 0.0)
                .unwrap()
                .level,
            1.5
        );
        assert_eq!(widest_gap_level(&[1.0], 0.0, 2.0, 0.0).unwrap().level, 0.5);
        assert!(widest_gap_level(&[2.0, 2.0], 3.0, 2.5, 0.0).is_none());
    }

    #[test]
    fn find_on_dirac() {
        let s = dirac(5, 0.25, 6);
        for x in 0..6 {
            let c = find_adapted_pair(&s, x, 1.0, &SearchOptions::default()).unwrap();
            assert!(c.level > 1.0);
            let expected = (-5..=5)
                .filter(|&n| (n as f64 + 0.25).abs() < c.level)
                .count();
            assert_eq!(c.rank, expected);
            assert_eq!(c.range, GridRange::full(&s));
        }
    }

    #[test]
    fn find_on_constant() {
        let s = constant(&[-2.0, 2.0], 4);
        let opts = SearchOptions::default();
        let c = find_adapted_pair(&s, 1, 1.0, &opts).unwrap();
        assert!(c.level > 1.0 && c.level < 2.0);
        assert_eq!(c.rank, 0);
        let opts = SearchOptions {
            ceiling: Some(2.5),
            ..opts
        };
        assert!(matches!(
            find_adapted_pair(&s, 1, 3.0, &opts),
            Err(CertificationError::NoGap { .. })
        ));
    }

    #[test]
    fn covering_constant_single_window() {
        let s = constant(&[-2.0, 2.0], 4);
        let wide = |shifted: &FamilySample, _x: usize| {
            certify_adapted_pair(shifted, &GridRange::full(shifted), 1.5, None)
        };
        let cov = covering_construction(&s, 0, 1.0, DEFAULT_EDGE_TOL, wide).unwrap();
        assert_eq!(cov.lambdas, vec![0.0]);
        assert!(cov.epsilons[0] > 1.0);
        assert!(cov.c_minus < -1.0 && cov.c_plus > 1.0);
        cov.adapted_pair(&s, DEFAULT_EDGE_TOL).unwrap();

        let certifier = default_shifted_certifier(SearchOptions::default());
        let cov = covering_construction(&s, 0, 1.0, DEFAULT_EDGE_TOL, certifier).unwrap();
        assert!(cov.lambdas.contains(&0.0));
        verify_cover(&cov.lambdas, &cov.epsilons, 1.0).unwrap();
        assert_eq!(cov.intersection, GridRange::full(&s));
    }

    #[test]
    fn covering_dirac_needs_several_shifts() {
        let s = dirac(3, 0.25, 5);
        let cov = covering_construction(
            &s,
            2,
            1.4,
            DEFAULT_EDGE_TOL,
            default_shifted_certifier(SearchOptions::default()),
        )
        .unwrap();
        assert!(cov.lambdas.len() >= 2);
        verify_cover(&cov.lambdas, &cov.epsilons, 1.4).unwrap();
        assert!(cov.c_minus < -1.4 && cov.c_plus > 1.4);
        let pair = cov.adapted_pair(&s, DEFAULT_EDGE_TOL).unwrap();
        assert_eq!(pair.rank, 3);
    }

    #[test]
    fn covering_linear_crossing() {
        let s = linear(0.45, 0.55, 11);
        let cov = covering_construction(
            &s,
            5,
            1.0,
            DEFAULT_EDGE_TOL,
            default_shifted_certifier(SearchOptions::default()),
        )
        .unwrap();
        assert!(cov.c_minus < -1.0 && cov.c_plus > 1.0);
        cov.adapted_pair(&s, DEFAULT_EDGE_TOL).unwrap();
    }

    #[test]
    fn cover_verification() {
        assert!(verify_cover(&[0.0], &[1.5], 1.0).is_ok());
        assert!(verify_cover(&[0.0], &[1.0], 1.0).is_err());
        assert!(verify_cover(&[-0.5, 0.5], &[0.6, 0.6], 1.0).is_ok());
        assert!(verify_cover(&[-1.0, 1.0], &[0.6, 0.6], 1.0).is_err());
        assert!(verify_cover(&[-1.0, 1.0], &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn discrete_spectrum_examples() {
        let g = ParameterGrid::uniform(-0.4, 0.4, 21).unwrap();
        let s = sample(
            &FamilySpec::DiracCircle {
                modes: 5,
                flux: AffinePath::default(),
            },
            &g,
        )
        .unwrap();
        let opts = SearchOptions::default();
        let eq = lemma_equivalence(&s, &[0.4, 1.4, 2.4], &opts).unwrap();
        assert!(eq.lemma.passes && eq.sweep.passes && eq.agree);

        let s = constant(&[-3.0, -1.0, 1.0, 3.0], 5);
        assert!(
            discrete_spectrum_certify(&s, &[0.5, 2.0], &opts)
                .unwrap()
                .passes
        );

        let g = ParameterGrid::uniform_excluding(0.1, 0.9, 40, 0.5, 0.02).unwrap();
        let s = sample(
            &FamilySpec::TangentBlowup {
                padding: vec![2.0, -2.0, 3.0, -3.0],
            },
            &g,
        )
        .unwrap();
        let eq = lemma_equivalence(&s, &[0.5, 1.5], &opts).unwrap();
        assert!(eq.lemma.passes && eq.agree);
    }

    #[test]
    fn routes_fail_together_above_ceiling() {
        let s = constant(&[-2.0, 2.0], 3);
        let eq = lemma_equivalence(&s, &[1.0, 1.9], &SearchOptions::default()).unwrap();
        assert!(!eq.lemma.passes && !eq.sweep.passes);
        assert!(eq.agree);
        assert_eq!(eq.lemma.failure_locations().len(), 3);
    }
}
