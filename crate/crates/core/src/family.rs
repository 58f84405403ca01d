//! Parameter grids, family generators and sampled families.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::spectral::{
    gamma, matrix_from_pairs, matrix_to_pairs, operator_norm, CMatrix, HermitianOperator,
    RealWindow, SpectralDecomposition, SpectralError, DEFAULT_EDGE_TOL,
};

/// Fraction of the smallest spectral radius over the grid below which
/// levels are admitted when a model does not know its faithful range.
pub const DEFAULT_CEILING_FRACTION: f64 = 0.9;

/// Truncation-stability tolerance for analytic models.
pub const ANALYTIC_TRUNCATION_TOL: f64 = 1e-8;
/// Truncation-stability tolerance for file-loaded models.
pub const FILE_TRUNCATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum FamilyError {
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("grid point x = {x} is a pole of the family")]
    Pole { x: f64 },
    #[error("operator count {operators} does not match grid length {grid}")]
    LengthMismatch { operators: usize, grid: usize },
    #[error("operator at grid index {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("grid does not match the grid stored in the matrix path file")]
    GridMismatch,
    #[error("{kind} families cannot be re-truncated to another dimension")]
    NotResizable { kind: String },
    #[error("window edge within {margin:e} of the spectrum at dim {dim}, x = {x}")]
    EdgeOnSpectrum { dim: usize, x: f64, margin: f64 },
    #[error("could not read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed matrix path file: {message}")]
    Parse { message: String },
    #[error("operator at grid index {index}: {source}")]
    Operator { index: usize, source: SpectralError },
}

/// Strictly increasing list of parameter values (at least two).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterGrid {
    points: Vec<f64>,
}

impl ParameterGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, FamilyError> {
        if points.len() < 2 {
            return Err(FamilyError::InvalidGrid {
                reason: format!("need at least 2 points, got {}", points.len()),
            });
        }
        if let Some(bad) = points.iter().position(|x| !x.is_finite()) {
            return Err(FamilyError::InvalidGrid {
                reason: format!("point {bad} is not finite"),
            });
        }
        if let Some(k) = points.windows(2).position(|w| w[0] >= w[1]) {
            return Err(FamilyError::InvalidGrid {
                reason: format!("points {k} and {} are not strictly increasing", k + 1),
            });
        }
        Ok(Self { points })
    }

    /// `points` equally spaced values from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, points: usize) -> Result<Self, FamilyError> {
        if points < 2 {
            return Err(FamilyError::InvalidGrid {
                reason: format!("need at least 2 points, got {points}"),
            });
        }
        let step = (end - start) / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|k| start + k as f64 * step).collect();
        values[points - 1] = end;
        Self::new(values)
    }

    /// Uniform grid on `[start, end]` with the open window
    /// `(center - half_width, center + half_width)` cut out: the two sides
    /// are sampled separately, each including its boundary with the window,
    /// with points split in proportion to the side lengths.
    pub fn uniform_excluding(
        start: f64,
        end: f64,
        points: usize,
        center: f64,
        half_width: f64,
    ) -> Result<Self, FamilyError> {
        let (a, b) = (center - half_width, center + half_width);
        if !(start < a && a < b && b < end) {
            return Err(FamilyError::InvalidGrid {
                reason: format!(
                    "excluded window ({a}, {b}) must lie strictly inside ({start}, {end})"
                ),
            });
        }
        let left_len = a - start;
        let right_len = end - b;
        let left = ((points as f64) * left_len / (left_len + right_len)).round() as usize;
        let right = points.saturating_sub(left);
        if left < 2 || right < 2 {
            return Err(FamilyError::InvalidGrid {
                reason: format!("{points} points are too few to sample both sides"),
            });
        }
        let mut values = Self::uniform(start, a, left)?.points;
        values.extend(Self::uniform(b, end, right)?.points);
        Self::new(values)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `offset + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePath {
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub slope: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AffinePath {
    fn default() -> Self {
        Self {
            offset: 0.0,
            slope: 1.0,
        }
    }
}

impl AffinePath {
    pub fn constant(value: f64) -> Self {
        Self {
            offset: value,
            slope: 0.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.offset + self.slope * x
    }
}

fn default_padding() -> Vec<f64> {
    vec![2.0, -2.0, 3.0, -3.0]
}

fn default_linear_dim() -> usize {
    3
}

/// Built-in operator families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `diag(n + flux(x))` for `n = -modes..=modes`; dimension `2 modes + 1`.
    DiracCircle {
        modes: usize,
        #[serde(default)]
        flux: AffinePath,
    },
    /// `diag(k + 1/2) + g(x) W - levels/2`, `k = 0..levels`, with a fixed
    /// Toeplitz Hermitian coupling `W`.
    HarmonicPerturbed {
        levels: usize,
        #[serde(default)]
        coupling: AffinePath,
    },
    /// `diag(tan(pi x), padding...)`: one eigenvalue escapes through `+inf`
    /// at `x = 1/2` and returns from `-inf`.
    TangentBlowup {
        #[serde(default = "default_padding")]
        padding: Vec<f64>,
    },
    /// `diag(x - 1/2, 2, -2, 3, -3, ...)` truncated to `dim`.
    LinearCrossing {
        #[serde(default = "default_linear_dim")]
        dim: usize,
    },
    /// `(1 - x) H0 + x H1 + sin(3 pi x) H2 / 2` with seeded random Hermitian
    /// `H0, H1, H2` of spectral radius about 2.
    RandomCrossings { dim: usize, seed: u64 },
    /// Explicit matrices loaded from a JSON file.
    MatrixPathFile { path: PathBuf },
    /// The same diagonal operator at every grid point.
    Constant { diagonal: Vec<f64> },
}

impl FamilySpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::DiracCircle { .. } => "dirac_circle",
            Self::HarmonicPerturbed { .. } => "harmonic_perturbed",
            Self::TangentBlowup { .. } => "tangent_blowup",
            Self::LinearCrossing { .. } => "linear_crossing",
            Self::RandomCrossings { .. } => "random_crossings",
            Self::MatrixPathFile { .. } => "matrix_path_file",
            Self::Constant { .. } => "constant",
        }
    }

    /// Truncation dimension. Loads the file for `matrix_path_file`.
    pub fn dim(&self) -> Result<usize, FamilyError> {
        Ok(match self {
            Self::DiracCircle { modes, .. } => 2 * modes + 1,
            Self::HarmonicPerturbed { levels, .. } => *levels,
            Self::TangentBlowup { padding } => 1 + padding.len(),
            Self::LinearCrossing { dim } | Self::RandomCrossings { dim, .. } => *dim,
            Self::MatrixPathFile { path } => MatrixPath::load(path)?.dim,
            Self::Constant { diagonal } => diagonal.len(),
        })
    }

    /// The same model truncated to dimension `dim`.
    pub fn with_dim(&self, dim: usize) -> Result<Self, FamilyError> {
        let bad = |reason: &str| FamilyError::InvalidParameter {
            name: "dim".into(),
            reason: reason.into(),
        };
        Ok(match self {
            Self::DiracCircle { flux, .. } => {
                if dim.is_multiple_of(2) {
                    return Err(bad("dirac_circle dimensions are odd (2N + 1)"));
                }
                Self::DiracCircle {
                    modes: (dim - 1) / 2,
                    flux: *flux,
                }
            }
            Self::HarmonicPerturbed { coupling, .. } => Self::HarmonicPerturbed {
                levels: dim,
                coupling: *coupling,
            },
            Self::TangentBlowup { padding } => {
                if dim == 0 {
                    return Err(bad("dimension must be at least 1"));
                }
                let mut padding = padding.clone();
                padding.truncate(dim - 1);
                while padding.len() < dim - 1 {
                    padding.push(ladder_value(padding.len() + 1));
                }
                Self::TangentBlowup { padding }
            }
            Self::LinearCrossing { .. } => Self::LinearCrossing { dim },
            Self::RandomCrossings { seed, .. } => Self::RandomCrossings { dim, seed: *seed },
            Self::MatrixPathFile { .. } | Self::Constant { .. } => {
                return Err(FamilyError::NotResizable {
                    kind: self.kind_name().into(),
                })
            }
        })
    }

    /// Index offset at which a `small`-dimensional truncation sits inside a
    /// `large`-dimensional one.
    pub fn embedding_offset(&self, small: usize, large: usize) -> usize {
        match self {
            Self::DiracCircle { .. } | Self::HarmonicPerturbed { .. } => (large - small) / 2,
            _ => 0,
        }
    }

    pub fn truncation_tolerance(&self) -> f64 {
        match self {
            Self::MatrixPathFile { .. } => FILE_TRUNCATION_TOL,
            _ => ANALYTIC_TRUNCATION_TOL,
        }
    }

    /// Grid stored alongside the matrices, for file-backed families.
    pub fn native_grid(&self) -> Result<Option<ParameterGrid>, FamilyError> {
        match self {
            Self::MatrixPathFile { path } => {
                Ok(Some(ParameterGrid::new(MatrixPath::load(path)?.grid)?))
            }
            _ => Ok(None),
        }
    }

    /// Kind-specific parameter checks.
    pub fn validate(&self) -> Result<(), FamilyError> {
        let bad = |name: &str, reason: &str| {
            Err(FamilyError::InvalidParameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        match self {
            Self::DiracCircle { modes: 0, .. } => bad("modes", "must be at least 1"),
            Self::HarmonicPerturbed { levels: 0, .. } => bad("levels", "must be at least 1"),
            Self::LinearCrossing { dim: 0 } | Self::RandomCrossings { dim: 0, .. } => {
                bad("dim", "must be at least 1")
            }
            Self::Constant { diagonal } if diagonal.is_empty() => {
                bad("diagonal", "must not be empty")
            }
            Self::TangentBlowup { padding } if padding.iter().any(|v| !v.is_finite()) => {
                bad("padding", "values must be finite")
            }
            _ => Ok(()),
        }
    }

    /// The operator at a single parameter value.
    pub fn operator_at(&self, x: f64) -> Result<HermitianOperator, FamilyError> {
        self.validate()?;
        match self {
            Self::RandomCrossings { dim, seed } => Ok(RandomPath::new(*dim, *seed).at(x)),
            Self::MatrixPathFile { path } => {
                let file = MatrixPath::load(path)?;
                let k = file
                    .grid
                    .iter()
                    .position(|&g| g == x)
                    .ok_or(FamilyError::GridMismatch)?;
                file.operator(k)
            }
            _ => self.analytic_at(x, None),
        }
    }

    fn analytic_at(
        &self,
        x: f64,
        harmonic: Option<&CMatrix>,
    ) -> Result<HermitianOperator, FamilyError> {
        Ok(match self {
            Self::DiracCircle { modes, flux } => {
                let a = flux.eval(x);
                let n = *modes as i64;
                let diag: Vec<f64> = (-n..=n).map(|k| k as f64 + a).collect();
                HermitianOperator::from_real_diagonal(&diag)
            }
            Self::HarmonicPerturbed { levels, coupling } => {
                let shift = *levels as f64 / 2.0;
                let owned;
                let w = match harmonic {
                    Some(w) => w,
                    None => {
                        owned = harmonic_coupling(*levels);
                        &owned
                    }
                };
                let g = coupling.eval(x);
                let mut m = w * Complex64::new(g, 0.0);
                for k in 0..*levels {
                    m[(k, k)] += Complex64::new(k as f64 + 0.5 - shift, 0.0);
                }
                HermitianOperator::symmetrized(m)
            }
            Self::TangentBlowup { padding } => {
                if is_tangent_pole(x) {
                    return Err(FamilyError::Pole { x });
                }
                let mut diag = vec![(PI * x).tan()];
                diag.extend_from_slice(padding);
                HermitianOperator::from_real_diagonal(&diag)
            }
            Self::LinearCrossing { dim } => {
                let diag: Vec<f64> = (0..*dim)
                    .map(|k| if k == 0 { x - 0.5 } else { ladder_value(k) })
                    .collect();
                HermitianOperator::from_real_diagonal(&diag)
            }
            Self::Constant { diagonal } => HermitianOperator::from_real_diagonal(diagonal),
            Self::RandomCrossings { .. } | Self::MatrixPathFile { .. } => {
                unreachable!("not analytic")
            }
        })
    }

    /// Model-specific level ceiling: for `dirac_circle` every window
    /// `[-c, c]` with `c < modes + 1 - |flux|` sees exactly the spectrum of
    /// the untruncated operator.
    fn faithful_ceiling(&self, grid: &ParameterGrid) -> Option<f64> {
        match self {
            Self::DiracCircle { modes, flux } => {
                let c = grid
                    .points()
                    .iter()
                    .map(|&x| *modes as f64 + 1.0 - flux.eval(x).abs())
                    .fold(f64::INFINITY, f64::min);
                (c > 0.0).then_some(c)
            }
            _ => None,
        }
    }
}

/// `2, -2, 3, -3, 4, ...` for `k = 1, 2, 3, ...`.
fn ladder_value(k: usize) -> f64 {
    let magnitude = 2.0 + ((k - 1) / 2) as f64;
    if k % 2 == 1 {
        magnitude
    } else {
        -magnitude
    }
}

fn is_tangent_pole(x: f64) -> bool {
    let frac = (x - 0.5) - (x - 0.5).round();
    frac.abs() < 1e-9
}

/// Fixed coupling `W_jk = exp(0.3 i (j - k)) / (1 + (j - k)^2)`.
fn harmonic_coupling(levels: usize) -> CMatrix {
    CMatrix::from_fn(levels, levels, |j, k| {
        let d = j as f64 - k as f64;
        Complex64::from_polar(1.0 / (1.0 + d * d), 0.3 * d)
    })
}

struct RandomPath {
    start: CMatrix,
    end: CMatrix,
    wiggle: CMatrix,
}

impl RandomPath {
    fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || random_hermitian(&mut rng, dim);
        let start = draw();
        let end = draw();
        let wiggle = draw();
        Self { start, end, wiggle }
    }

    fn at(&self, x: f64) -> HermitianOperator {
        let m = &self.start * Complex64::new(1.0 - x, 0.0)
            + &self.end * Complex64::new(x, 0.0)
            + &self.wiggle * Complex64::new(0.5 * (3.0 * PI * x).sin(), 0.0);
        HermitianOperator::symmetrized(m)
    }
}

/// `(G + G*) / (2 sqrt(dim))` with standard complex Gaussian `G`; the
/// spectrum fills roughly `[-2, 2]`.
fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let mut g = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            g[(i, j)] = Complex64::new(re, im);
        }
    }
    let scale = Complex64::new(1.0 / (2.0 * (dim as f64).sqrt()), 0.0);
    (&g + g.adjoint()) * scale
}

/// On-disk form of an explicit matrix path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPath {
    pub dim: usize,
    pub grid: Vec<f64>,
    /// One `dim x dim` matrix of `[re, im]` pairs per grid point.
    pub matrices: Vec<Vec<Vec<[f64; 2]>>>,
}

impl MatrixPath {
    pub fn load(path: &Path) -> Result<Self, FamilyError> {
        let text = std::fs::read_to_string(path).map_err(|e| FamilyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, FamilyError> {
        let file: Self = serde_json::from_str(text).map_err(|e| FamilyError::Parse {
            message: e.to_string(),
        })?;
        if file.matrices.len() != file.grid.len() {
            return Err(FamilyError::LengthMismatch {
                operators: file.matrices.len(),
                grid: file.grid.len(),
            });
        }
        Ok(file)
    }

    pub fn from_sample(sample: &FamilySample) -> Self {
        Self {
            dim: sample.dim(),
            grid: sample.grid().points().to_vec(),
            matrices: sample
                .operators()
                .iter()
                .map(|a| matrix_to_pairs(a.entries()))
                .collect(),
        }
    }

    fn operator(&self, k: usize) -> Result<HermitianOperator, FamilyError> {
        let rows = &self.matrices[k];
        let parse = |message: String| FamilyError::Parse { message };
        if rows.len() != self.dim {
            return Err(parse(format!(
                "matrix {k} has {} rows, expected {}",
                rows.len(),
                self.dim
            )));
        }
        let m =
            matrix_from_pairs(rows).ok_or_else(|| parse(format!("matrix {k} has ragged rows")))?;
        HermitianOperator::new(m).map_err(|source| FamilyError::Operator { index: k, source })
    }

    pub fn to_sample(&self) -> Result<FamilySample, FamilyError> {
        let grid = ParameterGrid::new(self.grid.clone())?;
        let ops = (0..self.grid.len())
            .map(|k| self.operator(k))
            .collect::<Result<Vec<_>, _>>()?;
        FamilySample::new(grid, ops)
    }
}

/// A family restricted to a grid: one operator per grid point, all of the
/// same dimension. Eigen-decompositions are computed once, on first use.
#[derive(Debug, Clone)]
pub struct FamilySample {
    grid: ParameterGrid,
    operators: Vec<HermitianOperator>,
    ceiling_hint: Option<f64>,
    spectra: OnceLock<Vec<SpectralDecomposition>>,
}

impl FamilySample {
    pub fn new(
        grid: ParameterGrid,
        operators: Vec<HermitianOperator>,
    ) -> Result<Self, FamilyError> {
        if grid.len() != operators.len() {
            return Err(FamilyError::LengthMismatch {
                operators: operators.len(),
                grid: grid.len(),
            });
        }
        let expected = operators[0].dim();
        if let Some(index) = operators.iter().position(|a| a.dim() != expected) {
            return Err(FamilyError::DimensionMismatch {
                index,
                expected,
                found: operators[index].dim(),
            });
        }
        Ok(Self {
            grid,
            operators,
            ceiling_hint: None,
            spectra: OnceLock::new(),
        })
    }

    /// The constant family `A` over `grid`.
    pub fn constant(operator: HermitianOperator, grid: ParameterGrid) -> Self {
        let operators = vec![operator; grid.len()];
        Self::new(grid, operators).expect("lengths match by construction")
    }

    /// Overrides the level ceiling (see [`level_ceiling`](Self::level_ceiling)).
    pub fn with_ceiling(mut self, ceiling: Option<f64>) -> Self {
        self.ceiling_hint = ceiling;
        self
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn x(&self, index: usize) -> f64 {
        self.grid.points[index]
    }

    pub fn operators(&self) -> &[HermitianOperator] {
        &self.operators
    }

    pub fn operator(&self, index: usize) -> &HermitianOperator {
        &self.operators[index]
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    pub fn ceiling_hint(&self) -> Option<f64> {
        self.ceiling_hint
    }

    /// Eigen-decompositions at every grid point (computed in parallel once).
    pub fn spectra(&self) -> &[SpectralDecomposition] {
        self.spectra
            .get_or_init(|| par::map_slice(&self.operators, HermitianOperator::decompose))
    }

    pub fn spectrum(&self, index: usize) -> &SpectralDecomposition {
        &self.spectra()[index]
    }

    /// Largest level admitted by level searches. Uses the model's faithful
    /// ceiling when known, else `0.9 * min_x max|lambda(A_x)|`.
    pub fn level_ceiling(&self) -> f64 {
        self.ceiling_hint.unwrap_or_else(|| {
            DEFAULT_CEILING_FRACTION
                * self
                    .spectra()
                    .iter()
                    .map(SpectralDecomposition::max_abs_eigenvalue)
                    .fold(f64::INFINITY, f64::min)
        })
    }

    fn derived(
        &self,
        operators: Vec<HermitianOperator>,
        spectra: Vec<SpectralDecomposition>,
        ceiling: Option<f64>,
    ) -> Self {
        let lock = OnceLock::new();
        let _ = lock.set(spectra);
        Self {
            grid: self.grid.clone(),
            operators,
            ceiling_hint: ceiling,
            spectra: lock,
        }
    }

    /// The family `A - lambda`. Reuses the eigenvectors; the ceiling shrinks
    /// by `|lambda|` so shifted windows stay inside the original range.
    pub fn shifted(&self, lambda: f64) -> Self {
        let ops = self.operators.iter().map(|a| a.shifted(lambda)).collect();
        let spectra = self.spectra().iter().map(|d| d.shifted(lambda)).collect();
        self.derived(ops, spectra, Some(self.level_ceiling() - lambda.abs()))
    }

    /// The family `gamma(A)`, with ceiling `gamma(ceiling)`.
    pub fn bounded_transform(&self) -> Self {
        let spectra: Vec<SpectralDecomposition> = self
            .spectra()
            .iter()
            .map(|d| d.map_monotone(gamma))
            .collect();
        let ops = par::map_slice(self.spectra(), |d| d.apply_real(gamma));
        self.derived(ops, spectra, Some(gamma(self.level_ceiling())))
    }

    /// `A + perturbation` at every grid point.
    pub fn perturbed(&self, perturbation: &HermitianOperator) -> Result<Self, SpectralError> {
        let ops = self
            .operators
            .iter()
            .map(|a| a.add(perturbation))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            grid: self.grid.clone(),
            operators: ops,
            ceiling_hint: self.ceiling_hint,
            spectra: OnceLock::new(),
        })
    }

    /// The path traversed backwards: grid `x -> -x` in reverse order.
    pub fn reversed(&self) -> Self {
        let points = self.grid.points.iter().rev().map(|x| -x).collect();
        let mut spectra = self.spectra().to_vec();
        spectra.reverse();
        let mut ops = self.operators.clone();
        ops.reverse();
        Self {
            grid: ParameterGrid { points },
            operators: ops,
            ceiling_hint: self.ceiling_hint,
            spectra: {
                let lock = OnceLock::new();
                let _ = lock.set(spectra);
                lock
            },
        }
    }

    /// Grid indices `lo..=hi` as a sample of their own.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<Self, FamilyError> {
        if hi >= self.len() || hi <= lo {
            return Err(FamilyError::InvalidGrid {
                reason: format!(
                    "slice {lo}..={hi} needs at least two of {} points",
                    self.len()
                ),
            });
        }
        let spectra = self.spectra()[lo..=hi].to_vec();
        let lock = OnceLock::new();
        let _ = lock.set(spectra);
        Ok(Self {
            grid: ParameterGrid::new(self.grid.points[lo..=hi].to_vec())?,
            operators: self.operators[lo..=hi].to_vec(),
            ceiling_hint: self.ceiling_hint,
            spectra: lock,
        })
    }

    /// Joins two paths. If `other` starts where `self` ends (same `x`), the
    /// junction point must carry the same operator and appears once.
    pub fn concat(&self, other: &Self) -> Result<Self, FamilyError> {
        let last = *self.grid.points.last().expect("grid is non-empty");
        let first = other.grid.points[0];
        let skip = if first == last {
            let gap = operator_norm(
                &(self.operators.last().unwrap().entries() - other.operators[0].entries()),
            );
            if gap > 1e-12 {
                return Err(FamilyError::InvalidGrid {
                    reason: format!("junction operators differ by {gap:e}"),
                });
            }
            1
        } else {
            0
        };
        let mut points = self.grid.points.clone();
        points.extend_from_slice(&other.grid.points[skip..]);
        let mut ops = self.operators.clone();
        ops.extend_from_slice(&other.operators[skip..]);
        let sample = Self::new(ParameterGrid::new(points)?, ops)?;
        let ceiling = match (self.ceiling_hint, other.ceiling_hint) {
            (Some(a), Some(b)) => Some(a.min(b)),
            _ => None,
        };
        Ok(sample.with_ceiling(ceiling))
    }
}

/// Samples `spec` on `grid`. Deterministic given the spec (including seed).
pub fn sample(spec: &FamilySpec, grid: &ParameterGrid) -> Result<FamilySample, FamilyError> {
    spec.validate()?;
    let ops = match spec {
        FamilySpec::MatrixPathFile { path } => {
            let file = MatrixPath::load(path)?;
            if file.grid != grid.points() {
                return Err(FamilyError::GridMismatch);
            }
            return file.to_sample();
        }
        FamilySpec::RandomCrossings { dim, seed } => {
            let path = RandomPath::new(*dim, *seed);
            par::map_slice(grid.points(), |&x| path.at(x))
        }
        FamilySpec::HarmonicPerturbed { levels, .. } => {
            let w = harmonic_coupling(*levels);
            grid.points()
                .iter()
                .map(|&x| spec.analytic_at(x, Some(&w)))
                .collect::<Result<Vec<_>, _>>()?
        }
        _ => grid
            .points()
            .iter()
            .map(|&x| spec.analytic_at(x, None))
            .collect::<Result<Vec<_>, _>>()?,
    };
    Ok(FamilySample::new(grid.clone(), ops)?.with_ceiling(spec.faithful_ceiling(grid)))
}

/// Truncation stability between two consecutive dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationPair {
    pub dim_small: usize,
    pub dim_large: usize,
    /// Max over the grid of the Hausdorff distance between in-window spectra
    /// (`inf` if exactly one of them is empty).
    pub eigenvalue_distance: f64,
    /// Max over the grid of `||E* P_large E - P_small||` with `E` the
    /// embedding of the smaller truncation.
    pub projection_distance: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub window: RealWindow,
    pub tolerance: f64,
    pub pairs: Vec<TruncationPair>,
    pub stable: bool,
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => {
            let directed = |p: &[f64], q: &[f64]| {
                p.iter()
                    .map(|x| {
                        q.iter()
                            .map(|y| (x - y).abs())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0f64, f64::max)
            };
            directed(a, b).max(directed(b, a))
        }
    }
}

/// Compares truncations of `spec` at consecutive `dims` inside `window`.
pub fn truncation_check(
    spec: &FamilySpec,
    grid: &ParameterGrid,
    dims: &[usize],
    window: &RealWindow,
) -> Result<TruncationReport, FamilyError> {
    if dims.len() < 2 || dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FamilyError::InvalidParameter {
            name: "dims".into(),
            reason: "need at least two strictly increasing dimensions".into(),
        });
    }
    let samples = dims
        .iter()
        .map(|&d| sample(&spec.with_dim(d)?, grid))
        .collect::<Result<Vec<_>, _>>()?;
    for (s, &d) in samples.iter().zip(dims) {
        for (k, spectrum) in s.spectra().iter().enumerate() {
            let margin = spectrum.margin(window);
            if margin < DEFAULT_EDGE_TOL {
                return Err(FamilyError::EdgeOnSpectrum {
                    dim: d,
                    x: s.x(k),
                    margin,
                });
            }
        }
    }
    let tolerance = spec.truncation_tolerance();
    let mut pairs = Vec::new();
    for w in samples.windows(2) {
        let (small, large) = (&w[0], &w[1]);
        let (ds, dl) = (small.dim(), large.dim());
        let offset = spec.embedding_offset(ds, dl);
        let per_point = par::map_range(grid.len(), |k| {
            let (a, b) = (small.spectrum(k), large.spectrum(k));
            let ea: Vec<f64> = a
                .eigenvalues()
                .iter()
                .copied()
                .filter(|&l| window.contains(l))
                .collect();
            let eb: Vec<f64> = b
                .eigenvalues()
                .iter()
                .copied()
                .filter(|&l| window.contains(l))
                .collect();
            let one = |_| Complex64::new(1.0, 0.0);
            let ps = a.window_piece(window, one).to_dense();
            let pl = b.window_piece(window, one).to_dense();
            let compressed = pl.view((offset, offset), (ds, ds)).into_owned();
            (hausdorff(&ea, &eb), operator_norm(&(compressed - ps)))
        });
        let eigenvalue_distance = per_point.iter().map(|p| p.0).fold(0.0, f64::max);
        let projection_distance = per_point.iter().map(|p| p.1).fold(0.0, f64::max);
        pairs.push(TruncationPair {
            dim_small: ds,
            dim_large: dl,
            eigenvalue_distance,
            projection_distance,
            stable: eigenvalue_distance <= tolerance && projection_distance <= tolerance,
        });
    }
    let stable = pairs.iter().all(|p| p.stable);
    Ok(TruncationReport {
        window: *window,
        tolerance,
        pairs,
        stable,
    })
}

/// Finite stand-in for "neither essentially positive nor essentially
/// negative": at least `k` eigenvalues of each strict sign everywhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignReport {
    pub k: usize,
    /// `(negative, positive)` eigenvalue counts per grid point.
    pub counts: Vec<(usize, usize)>,
    pub first_failure: Option<usize>,
    pub passes: bool,
}

pub fn essential_sign_check(sample: &FamilySample, k: usize) -> SignReport {
    let counts: Vec<(usize, usize)> = sample
        .spectra()
        .iter()
        .map(|d| {
            let neg = d
                .eigenvalues()
                .iter()
                .filter(|&&l| l < -DEFAULT_EDGE_TOL)
                .count();
            let pos = d
                .eigenvalues()
                .iter()
                .filter(|&&l| l > DEFAULT_EDGE_TOL)
                .count();
            (neg, pos)
        })
        .collect();
    let first_failure = counts.iter().position(|&(n, p)| n < k || p < k);
    SignReport {
        k,
        counts,
        first_failure,
        passes: first_failure.is_none(),
    }
}
