//! Spectral calculus for finite Hermitian matrices.
//!
//! Everything downstream (adapted pairs, resolvent and Riesz distances,
//! spectral flow) is expressed through [`SpectralDecomposition`]: windows of
//! the spectrum select eigenvectors, and functions of an operator are built
//! by applying a scalar function to the eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

/// Relative hermiticity tolerance, scaled by the largest entry magnitude.
pub const HERMITICITY_REL_TOL: f64 = 1e-10;
/// Tolerance on `V* V - I` for computed eigenvectors.
pub const UNITARY_TOL: f64 = 1e-9;
/// Tolerance on idempotence and self-adjointness of spectral projections.
pub const PROJECTION_TOL: f64 = 1e-9;
/// Reconstruction and resolvent tolerance (scaled by dimension where noted).
pub const RECONSTRUCTION_TOL: f64 = 1e-9;
/// Default minimal distance between a window endpoint and the spectrum.
pub const DEFAULT_EDGE_TOL: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum SpectralError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator dimension must be at least 1")]
    Empty,
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error(
        "matrix is not Hermitian: entry ({row}, {col}) differs from the conjugate of its \
         mirror by {deviation:e} (tolerance {tolerance:e})"
    )]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
        tolerance: f64,
    },
    #[error("window endpoint {endpoint} is within {margin:e} of the spectrum")]
    EdgeOnSpectrum { endpoint: f64, margin: f64 },
    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// The bounded transform `t / sqrt(1 + t^2)`, an increasing odd bijection
/// from the real line onto `(-1, 1)`.
#[inline]
pub fn gamma(t: f64) -> f64 {
    // hypot avoids overflow of t*t for huge eigenvalues
    t / 1f64.hypot(t)
}

/// Inverse of [`gamma`] on `(-1, 1)`.
#[inline]
pub fn gamma_inverse(s: f64) -> f64 {
    s / ((1.0 - s) * (1.0 + s)).sqrt()
}

/// A finite self-adjoint operator. The stored matrix is exactly Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    /// Validates hermiticity within `1e-10 * max|a_ij|` and stores the
    /// symmetrized matrix `(A + A*) / 2`.
    pub fn new(entries: CMatrix) -> Result<Self, SpectralError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(SpectralError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(SpectralError::Empty);
        }
        let mut max_abs = 0.0f64;
        for j in 0..cols {
            for i in 0..rows {
                let z = entries[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(SpectralError::NonFinite { row: i, col: j });
                }
                max_abs = max_abs.max(z.norm());
            }
        }
        let tolerance = HERMITICITY_REL_TOL * max_abs;
        let mut worst = (0, 0, 0.0f64);
        for j in 0..cols {
            for i in 0..=j {
                let deviation = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if deviation > worst.2 {
                    worst = (i, j, deviation);
                }
            }
        }
        if worst.2 > tolerance {
            return Err(SpectralError::NotHermitian {
                row: worst.0,
                col: worst.1,
                deviation: worst.2,
                tolerance,
            });
        }
        Ok(Self::symmetrized(entries))
    }

    /// Symmetrizes without validation; for matrices Hermitian by construction.
    pub(crate) fn symmetrized(mut entries: CMatrix) -> Self {
        let n = entries.nrows();
        for j in 0..n {
            entries[(j, j)] = Complex64::new(entries[(j, j)].re, 0.0);
            for i in 0..j {
                let avg = (entries[(i, j)] + entries[(j, i)].conj()) * 0.5;
                entries[(i, j)] = avg;
                entries[(j, i)] = avg.conj();
            }
        }
        Self { entries }
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "operator dimension must be at least 1");
        let n = values.len();
        let mut entries = CMatrix::zeros(n, n);
        for (k, &v) in values.iter().enumerate() {
            entries[(k, k)] = Complex64::new(v, 0.0);
        }
        Self { entries }
    }

    /// Builds an operator from a real symmetric matrix given row by row.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self, SpectralError> {
        let n = rows.len();
        let mut entries = CMatrix::zeros(n, rows.first().map_or(0, Vec::len));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != entries.ncols() {
                return Err(SpectralError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                entries[(i, j)] = Complex64::new(v, 0.0);
            }
        }
        Self::new(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_real_diagonal(&vec![0.0; dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// `A - lambda * I`.
    pub fn shifted(&self, lambda: f64) -> Self {
        let mut entries = self.entries.clone();
        for k in 0..entries.nrows() {
            entries[(k, k)].re -= lambda;
        }
        Self { entries }
    }

    pub fn neg(&self) -> Self {
        Self {
            entries: -&self.entries,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            entries: &self.entries + &other.entries,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * Complex64::new(factor, 0.0),
        }
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.entries[(i, j)] == Complex64::new(0.0, 0.0)))
    }

    /// Largest entry magnitude.
    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn decompose(&self) -> SpectralDecomposition {
        decompose(self)
    }
}

fn check_dims(left: usize, right: usize) -> Result<(), SpectralError> {
    if left != right {
        return Err(SpectralError::DimensionMismatch { left, right });
    }
    Ok(())
}

/// A real interval with independently open or closed ends. Infinite ends
/// are allowed (`lo = -inf` or `hi = +inf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealWindow {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl RealWindow {
    pub fn try_new(
        lo: f64,
        hi: f64,
        lo_closed: bool,
        hi_closed: bool,
    ) -> Result<Self, SpectralError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(SpectralError::InvalidWindow { lo, hi });
        }
        Ok(Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    /// `[lo, hi]`. Panics if `lo > hi`.
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::try_new(lo, hi, true, true).expect("window requires lo <= hi")
    }

    /// `(lo, hi)`. Panics if `lo > hi`.
    pub fn open(lo: f64, hi: f64) -> Self {
        Self::try_new(lo, hi, false, false).expect("window requires lo <= hi")
    }

    /// `[-c, c]`.
    pub fn symmetric(c: f64) -> Self {
        Self::closed(-c, c)
    }

    /// `[lo, +inf)`.
    pub fn at_least(lo: f64) -> Self {
        Self::try_new(lo, f64::INFINITY, true, false).expect("window requires a number")
    }

    /// `(-inf, hi]`.
    pub fn at_most(hi: f64) -> Self {
        Self::try_new(f64::NEG_INFINITY, hi, false, true).expect("window requires a number")
    }

    pub fn contains(&self, t: f64) -> bool {
        let above = if self.lo_closed {
            t >= self.lo
        } else {
            t > self.lo
        };
        let below = if self.hi_closed {
            t <= self.hi
        } else {
            t < self.hi
        };
        above && below
    }

    /// Distance from `t` to the nearest finite endpoint (`+inf` if none).
    pub fn endpoint_distance(&self, t: f64) -> f64 {
        let mut d = f64::INFINITY;
        if self.lo.is_finite() {
            d = d.min((t - self.lo).abs());
        }
        if self.hi.is_finite() {
            d = d.min((t - self.hi).abs());
        }
        d
    }

    /// Closest finite endpoint to `t`, if any.
    fn nearest_endpoint(&self, t: f64) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) if (t - self.lo).abs() <= (t - self.hi).abs() => self.lo,
            (true, true) => self.hi,
            (true, false) => self.lo,
            (false, true) => self.hi,
            (false, false) => f64::NAN,
        }
    }
}

/// Eigen-decomposition `A = V diag(eigenvalues) V*` with ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

/// Ascending eigen-decomposition of `a`.
///
/// Diagonal inputs are decomposed exactly (the eigenvalues are the diagonal
/// entries). Ties are ordered by their position in the solver output, so the
/// result is deterministic for a fixed input.
pub fn decompose(a: &HermitianOperator) -> SpectralDecomposition {
    let n = a.dim();
    let (values, vectors) = if a.is_diagonal() {
        let values: Vec<f64> = (0..n).map(|k| a.entries[(k, k)].re).collect();
        (values, CMatrix::identity(n, n))
    } else {
        let eig = SymmetricEigen::new(a.entries.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| values[p].total_cmp(&values[q]).then(p.cmp(&q)));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let eigenvectors = vectors.select_columns(order.iter());
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

impl SpectralDecomposition {
    /// Assembles a decomposition from parts. Eigenvalues must be ascending
    /// and the columns of `eigenvectors` orthonormal.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: CMatrix) -> Self {
        debug_assert!(eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        debug_assert_eq!(eigenvalues.len(), eigenvectors.ncols());
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    /// Same eigenvectors, eigenvalues mapped through an increasing function.
    pub(crate) fn map_monotone(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.iter().map(|&l| f(l)).collect(),
            eigenvectors: self.eigenvectors.clone(),
        }
    }

    /// Decomposition of `A - lambda * I`.
    pub fn shifted(&self, lambda: f64) -> Self {
        self.map_monotone(|l| l - lambda)
    }

    /// Indices of eigenvalues inside `window`.
    pub fn select(&self, window: &RealWindow) -> Vec<usize> {
        (0..self.dim())
            .filter(|&k| window.contains(self.eigenvalues[k]))
            .collect()
    }

    pub fn count_in(&self, window: &RealWindow) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| window.contains(l))
            .count()
    }

    /// Smallest distance from a finite window endpoint to the spectrum.
    pub fn margin(&self, window: &RealWindow) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&l| window.endpoint_distance(l))
            .fold(f64::INFINITY, f64::min)
    }

    /// `V f(diag) V*` as a dense matrix.
    pub fn apply(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let all: Vec<usize> = (0..self.dim()).collect();
        self.piece(&all, f).to_dense()
    }

    /// Real function of the operator; the result is Hermitian.
    pub fn apply_real(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        HermitianOperator::symmetrized(self.apply(|t| Complex64::new(f(t), 0.0)))
    }

    /// The operator `sum_k f(lambda_k) v_k v_k*` over the given eigen-indices.
    pub fn piece(&self, indices: &[usize], f: impl Fn(f64) -> Complex64) -> SpectralPiece {
        SpectralPiece {
            dim: self.dim(),
            basis: self.eigenvectors.select_columns(indices.iter()),
            weights: indices.iter().map(|&k| f(self.eigenvalues[k])).collect(),
        }
    }

    /// [`piece`](Self::piece) over the eigenvalues inside `window`.
    pub fn window_piece(&self, window: &RealWindow, f: impl Fn(f64) -> Complex64) -> SpectralPiece {
        self.piece(&self.select(window), f)
    }

    /// Spectral projection onto `window`, refusing windows whose finite
    /// endpoints come within `tau_edge` of the spectrum.
    pub fn projection(
        &self,
        window: &RealWindow,
        tau_edge: f64,
    ) -> Result<SpectralProjection, SpectralError> {
        let margin = self.margin(window);
        if margin < tau_edge {
            let endpoint = self
                .eigenvalues
                .iter()
                .min_by(|a, b| {
                    window
                        .endpoint_distance(**a)
                        .total_cmp(&window.endpoint_distance(**b))
                })
                .map(|&l| window.nearest_endpoint(l))
                .unwrap_or(f64::NAN);
            return Err(SpectralError::EdgeOnSpectrum { endpoint, margin });
        }
        let piece = self.window_piece(window, |_| Complex64::new(1.0, 0.0));
        Ok(SpectralProjection {
            rank: piece.rank(),
            projector: HermitianOperator::symmetrized(piece.to_dense()),
            margin,
        })
    }

    /// `V diag(eigenvalues) V*`.
    pub fn reconstruct(&self) -> CMatrix {
        self.apply(|t| Complex64::new(t, 0.0))
    }

    /// Reconstruction error `||V diag V* - A||` in operator norm.
    pub fn reconstruction_error(&self, a: &HermitianOperator) -> f64 {
        operator_norm(&(self.reconstruct() - a.entries()))
    }

    /// `||V* V - I||` in operator norm.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        operator_norm(&(self.eigenvectors.adjoint() * &self.eigenvectors - CMatrix::identity(n, n)))
    }
}

/// Result of [`spectral_projection`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProjection {
    pub projector: HermitianOperator,
    pub rank: usize,
    pub margin: f64,
}

/// A low-rank operator `V diag(w) V*` with orthonormal columns `V`, kept in
/// factored form so distances between pieces can be computed on the span of
/// both bases rather than on the full space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPiece {
    dim: usize,
    basis: CMatrix,
    weights: Vec<Complex64>,
}

impl SpectralPiece {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut scaled = self.basis.clone();
        for (k, w) in self.weights.iter().enumerate() {
            {
                let mut col = scaled.column_mut(k);
                col *= *w;
            }
        }
        scaled * self.basis.adjoint()
    }

    /// Operator norm of `self - other`.
    pub fn distance(&self, other: &SpectralPiece) -> f64 {
        assert_eq!(self.dim, other.dim, "pieces must act on the same space");
        let k = self.rank() + other.rank();
        if k == 0 {
            return 0.0;
        }
        if 2 * k >= self.dim {
            return operator_norm(&(self.to_dense() - other.to_dense()));
        }
        // Both operators live on span[V1 V2]; compress onto an orthonormal
        // basis Q of that span. ||D|| = ||Q* D Q|| since D = Q Q* D Q Q*.
        let mut stacked = CMatrix::zeros(self.dim, k);
        stacked.columns_mut(0, self.rank()).copy_from(&self.basis);
        stacked
            .columns_mut(self.rank(), other.rank())
            .copy_from(&other.basis);
        let q = stacked.qr().q();
        let compress = |p: &SpectralPiece| {
            let c = q.adjoint() * &p.basis;
            let mut scaled = c.clone();
            for (j, w) in p.weights.iter().enumerate() {
                {
                    let mut col = scaled.column_mut(j);
                    col *= *w;
                }
            }
            scaled * c.adjoint()
        };
        operator_norm(&(compress(self) - compress(other)))
    }
}

/// Spectral projection of `a` onto `window` (see [`SpectralDecomposition::projection`]).
pub fn spectral_projection(
    a: &HermitianOperator,
    window: &RealWindow,
    tau_edge: f64,
) -> Result<SpectralProjection, SpectralError> {
    decompose(a).projection(window, tau_edge)
}

/// `gamma(A) = A (1 + A^2)^{-1/2}`.
pub fn bounded_transform(a: &HermitianOperator) -> HermitianOperator {
    decompose(a).apply_real(gamma)
}

/// `(A + i)^{-1}` computed by LU factorization of `A + i I`, independently
/// of the eigen-decomposition.
pub fn resolvent_at_i(a: &HermitianOperator) -> CMatrix {
    let n = a.dim();
    let shifted = a.entries() + CMatrix::identity(n, n) * I;
    shifted
        .lu()
        .try_inverse()
        .expect("A + i is invertible for self-adjoint A")
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let off_diagonal_zero = (0..m.ncols())
        .all(|j| (0..m.nrows()).all(|i| i == j || (m[(i, j)].re == 0.0 && m[(i, j)].im == 0.0)));
    if off_diagonal_zero && m.is_square() {
        return m.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    m.singular_values().max()
}

/// Operator norm of a matrix known to be Hermitian: its largest absolute
/// eigenvalue.
pub fn hermitian_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Rows of `[re, im]` pairs, the interchange form of complex matrices.
pub fn matrix_to_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

/// Inverse of [`matrix_to_pairs`]; `None` if rows are ragged.
pub fn matrix_from_pairs(rows: &[Vec<[f64; 2]>]) -> Option<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(CMatrix::from_fn(n, m, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}
