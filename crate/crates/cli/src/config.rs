//! Analysis configuration: JSON parsing with field paths, then semantic
//! validation.

use std::path::{Path, PathBuf};

use opfam_core::adapted::SearchOptions;
use opfam_core::family::{FamilyError, FamilySpec, ParameterGrid};
use opfam_core::topology::{Calculus, ContinuityMetric};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, when there is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Field { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exclusion {
    pub center: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Uniform(UniformGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    CertifyAdapted,
    DiscreteSpectrum,
    Theorem1,
    Theorem2,
    Flow,
    Polarized,
    Distances,
    Truncation,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::CertifyAdapted => "certify-adapted",
            Self::DiscreteSpectrum => "discrete-spectrum",
            Self::Theorem1 => "theorem1",
            Self::Theorem2 => "theorem2",
            Self::Flow => "flow",
            Self::Polarized => "polarized",
            Self::Distances => "distances",
            Self::Truncation => "truncation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    kind: AnalysisKind,
    #[serde(default)]
    params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    family: Value,
    #[serde(default)]
    grid: Option<GridSpec>,
    analyses: Vec<RawAnalysis>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    search: SearchOptions,
}

/// One grid index or several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Indices {
    One(usize),
    Many(Vec<usize>),
}

impl Indices {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Self::One(i) => vec![*i],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyAdaptedParams {
    pub lo_index: usize,
    pub hi_index: usize,
    pub level: f64,
    #[serde(default)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSpectrumParams {
    pub b_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Params {
    pub delta: f64,
    pub x_index: Indices,
}

fn default_cap() -> f64 {
    0.5
}

fn default_calculus() -> Calculus {
    Calculus::BoundedTransform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Params {
    pub delta: f64,
    pub x_index: Indices,
    /// Cap on the modulus of `P_[eps, inf)` in the strict-adaptedness check.
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "default_calculus")]
    pub calculus: Calculus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethodChoice {
    Tracking,
    Partition,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    #[serde(default)]
    pub method: FlowMethodChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem3Params {
    pub delta: f64,
    pub x_index: Indices,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_eta() -> f64 {
    0.1
}

fn default_norm_slack() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizedParams {
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Defaults to a quarter of the dimension.
    #[serde(default)]
    pub interior_budget: Option<usize>,
    #[serde(default = "default_norm_slack")]
    pub norm_slack: f64,
    /// Run the weak route and the polarized certificate on `gamma(family)`
    /// instead of the family itself.
    #[serde(default)]
    pub transform: bool,
    /// Levels in `(0, 1)` for the weak discrete-spectrum route.
    #[serde(default)]
    pub b_levels: Vec<f64>,
    /// Levels `L` for the discrete/weak correspondence on the untransformed
    /// family.
    #[serde(default)]
    pub correspondence_levels: Vec<f64>,
    #[serde(default)]
    pub theorem3: Option<Theorem3Params>,
}

fn default_metrics() -> Vec<ContinuityMetric> {
    vec![ContinuityMetric::Graph, ContinuityMetric::Riesz]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistancesParams {
    #[serde(default = "default_metrics")]
    pub metrics: Vec<ContinuityMetric>,
}

impl Default for DistancesParams {
    fn default() -> Self {
        Self {
            metrics: default_metrics(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationParams {
    pub dims: Vec<usize>,
    /// Half-width `c` of the window `[-c, c]`.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Analysis {
    CertifyAdapted(CertifyAdaptedParams),
    DiscreteSpectrum(DiscreteSpectrumParams),
    Theorem1(Theorem1Params),
    Theorem2(Theorem2Params),
    Flow(FlowParams),
    Polarized(PolarizedParams),
    Distances(DistancesParams),
    Truncation(TruncationParams),
}

impl Analysis {
    pub fn kind(&self) -> AnalysisKind {
        match self {
            Self::CertifyAdapted(_) => AnalysisKind::CertifyAdapted,
            Self::DiscreteSpectrum(_) => AnalysisKind::DiscreteSpectrum,
            Self::Theorem1(_) => AnalysisKind::Theorem1,
            Self::Theorem2(_) => AnalysisKind::Theorem2,
            Self::Flow(_) => AnalysisKind::Flow,
            Self::Polarized(_) => AnalysisKind::Polarized,
            Self::Distances(_) => AnalysisKind::Distances,
            Self::Truncation(_) => AnalysisKind::Truncation,
        }
    }
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub family: FamilySpec,
    pub grid: ParameterGrid,
    pub analyses: Vec<Analysis>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub search: SearchOptions,
    /// The configuration as read, after seed injection; echoed in reports.
    pub echo: Value,
}

pub(crate) fn family_error(e: FamilyError) -> ConfigError {
    let path = match &e {
        FamilyError::InvalidParameter { name, .. } => format!("family.{name}"),
        FamilyError::Pole { .. } | FamilyError::InvalidGrid { .. } => "grid".into(),
        _ => "family".into(),
    };
    ConfigError::field(path, e.to_string())
}

fn typed<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        ConfigError::field(path, e.into_inner().to_string())
    })
}

/// Tagged enums buffer their content, so field paths are lost inside
/// `family`. The failing field is the first one whose removal changes the
/// error.
fn parse_family(value: Value) -> Result<FamilySpec, ConfigError> {
    let err = match serde_json::from_value::<FamilySpec>(value.clone()) {
        Ok(family) => return Ok(family),
        Err(e) => e.to_string(),
    };
    let path = value
        .as_object()
        .and_then(|fields| {
            if !fields.contains_key("kind") || err.contains("unknown variant") {
                return Some("family.kind".to_string());
            }
            fields.keys().filter(|k| *k != "kind").find_map(|k| {
                let mut probe = fields.clone();
                probe.remove(k);
                let changed = match serde_json::from_value::<FamilySpec>(Value::Object(probe)) {
                    Ok(_) => true,
                    Err(e) => e.to_string() != err,
                };
                changed.then(|| format!("family.{k}"))
            })
        })
        .unwrap_or_else(|| "family".into());
    Err(ConfigError::field(path, err))
}

fn params<T: DeserializeOwned>(value: Value, path: &str) -> Result<T, ConfigError> {
    let value = if value.is_null() {
        Value::Object(Default::default())
    } else {
        value
    };
    typed(value, path)
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Parses `text`; relative family file paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        inject_seed(&mut value);
        let echo = value.clone();
        let raw: RawConfig = typed(value, "")?;

        let family = match parse_family(raw.family)? {
            FamilySpec::MatrixPathFile { path } if path.is_relative() => {
                FamilySpec::MatrixPathFile {
                    path: base.join(path),
                }
            }
            other => other,
        };
        family.validate().map_err(family_error)?;
        let grid = build_grid(&family, raw.grid.as_ref())?;
        if raw.analyses.is_empty() {
            return Err(ConfigError::field(
                "analyses",
                "at least one analysis is required",
            ));
        }
        check_search(&raw.search)?;
        let analyses = raw
            .analyses
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let path = format!("analyses[{i}].params");
                let analysis = parse_analysis(a, &path)?;
                validate_analysis(&analysis, &path, &grid, &family)?;
                Ok(analysis)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(Self {
            family,
            grid,
            analyses,
            seed: raw.seed,
            output_dir: raw.output_dir,
            search: raw.search,
            echo,
        })
    }
}

/// Random families without their own seed take the top-level one.
fn inject_seed(value: &mut Value) {
    let seed = value.get("seed").cloned().unwrap_or(Value::from(0u64));
    if let Some(family) = value.get_mut("family").and_then(Value::as_object_mut) {
        if family.get("kind").and_then(Value::as_str) == Some("random_crossings")
            && !family.contains_key("seed")
        {
            family.insert("seed".into(), seed);
        }
    }
}

fn build_grid(family: &FamilySpec, grid: Option<&GridSpec>) -> Result<ParameterGrid, ConfigError> {
    let native = family
        .native_grid()
        .map_err(|e| ConfigError::field("family", e.to_string()))?;
    let grid_err = |e: opfam_core::family::FamilyError| ConfigError::field("grid", e.to_string());
    match (native, grid) {
        (Some(_), Some(_)) => Err(ConfigError::field(
            "grid",
            "not allowed with matrix_path_file (the file carries its grid)",
        )),
        (Some(native), None) => Ok(native),
        (None, None) => Err(ConfigError::field("grid", "missing")),
        (None, Some(GridSpec::Points(points))) => {
            ParameterGrid::new(points.clone()).map_err(grid_err)
        }
        (None, Some(GridSpec::Uniform(u))) => match &u.exclude {
            None => ParameterGrid::uniform(u.start, u.end, u.points).map_err(grid_err),
            Some(ex) => {
                if !(ex.half_width > 0.0) {
                    return Err(ConfigError::field(
                        "grid.exclude.half_width",
                        "must be positive",
                    ));
                }
                if !(ex.center - ex.half_width > u.start && ex.center + ex.half_width < u.end) {
                    return Err(ConfigError::field(
                        "grid.exclude",
                        "window must lie inside (start, end)",
                    ));
                }
                ParameterGrid::uniform_excluding(u.start, u.end, u.points, ex.center, ex.half_width)
                    .map_err(grid_err)
            }
        },
    }
}

fn check_search(s: &SearchOptions) -> Result<(), ConfigError> {
    if !(s.tau_edge > 0.0 && s.tau_edge.is_finite()) {
        return Err(ConfigError::field("search.tau_edge", "must be positive"));
    }
    if !(s.gap_search_span > 0.0) {
        return Err(ConfigError::field(
            "search.gap_search_span",
            "must be positive",
        ));
    }
    if let Some(c) = s.ceiling {
        if !(c > 0.0) {
            return Err(ConfigError::field("search.ceiling", "must be positive"));
        }
    }
    if s.sweep_points == 0 {
        return Err(ConfigError::field(
            "search.sweep_points",
            "must be at least 1",
        ));
    }
    Ok(())
}

fn parse_analysis(raw: RawAnalysis, path: &str) -> Result<Analysis, ConfigError> {
    let p = raw.params;
    Ok(match raw.kind {
        AnalysisKind::CertifyAdapted => Analysis::CertifyAdapted(params(p, path)?),
        AnalysisKind::DiscreteSpectrum => Analysis::DiscreteSpectrum(params(p, path)?),
        AnalysisKind::Theorem1 => Analysis::Theorem1(params(p, path)?),
        AnalysisKind::Theorem2 => Analysis::Theorem2(params(p, path)?),
        AnalysisKind::Flow => Analysis::Flow(params(p, path)?),
        AnalysisKind::Polarized => Analysis::Polarized(params(p, path)?),
        AnalysisKind::Distances => Analysis::Distances(params(p, path)?),
        AnalysisKind::Truncation => Analysis::Truncation(params(p, path)?),
    })
}

struct Checker<'a> {
    path: &'a str,
    points: usize,
}

impl Checker<'_> {
    fn fail(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::field(format!("{}.{field}", self.path), message)
    }

    fn open(&self, field: &str, v: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
        if v > lo && v < hi {
            Ok(())
        } else {
            Err(self.fail(field, format!("out of ({lo}, {hi})")))
        }
    }

    fn positive(&self, field: &str, v: f64) -> Result<(), ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(self.fail(field, "must be positive and finite"))
        }
    }

    fn levels(&self, field: &str, levels: &[f64], hi: f64) -> Result<(), ConfigError> {
        if levels.is_empty() {
            return Err(self.fail(field, "must not be empty"));
        }
        for (i, &b) in levels.iter().enumerate() {
            if !(b > 0.0 && b < hi) {
                return Err(self.fail(&format!("{field}[{i}]"), format!("out of (0, {hi})")));
            }
        }
        Ok(())
    }

    fn indices(&self, field: &str, x: &Indices) -> Result<(), ConfigError> {
        let v = x.to_vec();
        if v.is_empty() {
            return Err(self.fail(field, "must not be empty"));
        }
        match v.iter().find(|&&i| i >= self.points) {
            Some(i) => Err(self.fail(
                field,
                format!("index {i} is outside a grid of {} points", self.points),
            )),
            None => Ok(()),
        }
    }
}

fn validate_analysis(
    analysis: &Analysis,
    path: &str,
    grid: &ParameterGrid,
    family: &FamilySpec,
) -> Result<(), ConfigError> {
    let c = Checker {
        path,
        points: grid.len(),
    };
    match analysis {
        Analysis::CertifyAdapted(p) => {
            if p.lo_index > p.hi_index {
                return Err(c.fail("lo_index", "must not exceed hi_index"));
            }
            c.indices("hi_index", &Indices::One(p.hi_index))?;
            c.positive("level", p.level)?;
            if let Some(cap) = p.cap {
                c.positive("cap", cap)?;
            }
        }
        Analysis::DiscreteSpectrum(p) => c.levels("b_levels", &p.b_levels, f64::INFINITY)?,
        Analysis::Theorem1(p) => {
            c.positive("delta", p.delta)?;
            c.indices("x_index", &p.x_index)?;
        }
        Analysis::Theorem2(p) => {
            c.open("delta", p.delta, 0.0, 0.5)?;
            c.indices("x_index", &p.x_index)?;
            c.positive("cap", p.cap)?;
        }
        Analysis::Flow(_) => {}
        Analysis::Polarized(p) => {
            c.open("eta", p.eta, 0.0, 1.0)?;
            if !(p.norm_slack >= 0.0) {
                return Err(c.fail("norm_slack", "must be non-negative"));
            }
            if p.b_levels.is_empty() && p.correspondence_levels.is_empty() && p.theorem3.is_none() {
                return Err(c.fail(
                    "b_levels",
                    "nothing to do: give b_levels, correspondence_levels or theorem3",
                ));
            }
            if !p.b_levels.is_empty() {
                c.levels("b_levels", &p.b_levels, 1.0)?;
            }
            if !p.correspondence_levels.is_empty() {
                c.levels(
                    "correspondence_levels",
                    &p.correspondence_levels,
                    f64::INFINITY,
                )?;
            }
            if let Some(t) = &p.theorem3 {
                c.open("theorem3.delta", t.delta, 0.0, 0.5)?;
                c.indices("theorem3.x_index", &t.x_index)?;
                c.positive("theorem3.cap", t.cap)?;
            }
        }
        Analysis::Distances(p) => {
            if p.metrics.is_empty() {
                return Err(c.fail("metrics", "must not be empty"));
            }
        }
        Analysis::Truncation(p) => {
            if p.dims.len() < 2 || p.dims.windows(2).any(|w| w[0] >= w[1]) {
                return Err(c.fail("dims", "need at least two strictly increasing dimensions"));
            }
            c.positive("window", p.window)?;
            if matches!(
                family,
                FamilySpec::MatrixPathFile { .. } | FamilySpec::Constant { .. }
            ) {
                return Err(ConfigError::field(
                    "family.kind",
                    "truncation needs a family that can be resized",
                ));
            }
        }
    }
    Ok(())
}

/// A ready-made configuration for one built-in family.
pub fn demo_config(kind: &str) -> Option<Value> {
    let config = match kind {
        "dirac_circle" => serde_json::json!({
            "family": {"kind": "dirac_circle", "modes": 20},
            "grid": {"start": -0.49, "end": 0.49, "points": 201},
            "analyses": [
                {"kind": "discrete-spectrum", "params": {"b_levels": [1.0, 5.0, 10.0]}},
                {"kind": "theorem1", "params": {"delta": 0.1, "x_index": [25, 100, 175]}},
                {"kind": "theorem2", "params": {"delta": 0.1, "x_index": 100}},
                {"kind": "flow"},
                {"kind": "distances"},
                {"kind": "truncation", "params": {"dims": [21, 41, 81], "window": 5.5}}
            ],
            "seed": 0
        }),
        "harmonic_perturbed" => serde_json::json!({
            "family": {"kind": "harmonic_perturbed", "levels": 24},
            "grid": {"start": 0.0, "end": 1.0, "points": 101},
            "analyses": [
                {"kind": "discrete-spectrum", "params": {"b_levels": [1.0, 4.0]}},
                {"kind": "theorem1", "params": {"delta": 0.2, "x_index": 50}},
                {"kind": "flow"},
                {"kind": "distances"}
            ],
            "seed": 0
        }),
        "tangent_blowup" => serde_json::json!({
            "family": {"kind": "tangent_blowup", "padding": [2.0, -2.0, 3.0, -3.0]},
            "grid": {"start": 0.1, "end": 0.9, "points": 200,
                     "exclude": {"center": 0.5, "half_width": 0.02}},
            "analyses": [
                {"kind": "distances"},
                {"kind": "theorem2", "params": {"delta": 0.1, "x_index": 30}},
                {"kind": "flow"}
            ],
            "seed": 0
        }),
        "linear_crossing" => serde_json::json!({
            "family": {"kind": "linear_crossing", "dim": 3},
            "grid": {"start": 0.0, "end": 1.0, "points": 11},
            "analyses": [{"kind": "flow"}, {"kind": "distances"}],
            "seed": 0
        }),
        "random_crossings" => serde_json::json!({
            "family": {"kind": "random_crossings", "dim": 8},
            "grid": {"start": 0.0, "end": 1.0, "points": 150},
            "analyses": [
                {"kind": "discrete-spectrum", "params": {"b_levels": [0.2, 0.5]}},
                {"kind": "flow"}
            ],
            "seed": 7
        }),
        "constant" => serde_json::json!({
            "family": {"kind": "constant", "diagonal": [1.0, -1.0, 0.2, -0.2]},
            "grid": {"start": 0.0, "end": 1.0, "points": 5},
            "analyses": [
                {"kind": "distances"},
                {"kind": "polarized", "params": {"eta": 0.05, "interior_budget": 2,
                                                  "b_levels": [0.5, 0.9]}}
            ],
            "seed": 0
        }),
        _ => return None,
    };
    Some(config)
}

pub const DEMO_KINDS: [&str; 6] = [
    "dirac_circle",
    "harmonic_perturbed",
    "tangent_blowup",
    "linear_crossing",
    "random_crossings",
    "constant",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(v: Value) -> Result<AnalysisConfig, ConfigError> {
        AnalysisConfig::from_json(&v.to_string(), Path::new("."))
    }

    fn dirac_with(analyses: Value) -> Value {
        serde_json::json!({
            "family": {"kind": "dirac_circle", "modes": 3},
            "grid": {"start": -0.4, "end": 0.4, "points": 11},
            "analyses": analyses,
        })
    }

    #[test]
    fn delta_out_of_range_names_the_field() {
        let v = dirac_with(serde_json::json!([
            {"kind": "theorem2", "params": {"delta": 0.7, "x_index": 5}}
        ]));
        let e = parse(v).unwrap_err();
        assert_eq!(e.to_string(), "analyses[0].params.delta: out of (0, 0.5)");
        assert_eq!(e.path(), Some("analyses[0].params.delta"));
    }

    #[test]
    fn type_errors_carry_paths() {
        let v = dirac_with(serde_json::json!([
            {"kind": "flow"},
            {"kind": "theorem1", "params": {"delta": "big", "x_index": 5}}
        ]));
        assert_eq!(
            parse(v).unwrap_err().path(),
            Some("analyses[1].params.delta")
        );

        let mut v = dirac_with(serde_json::json!([{"kind": "flow"}]));
        v["family"]["modes"] = serde_json::json!(-1);
        assert_eq!(parse(v).unwrap_err().path(), Some("family.modes"));

        let mut v = dirac_with(serde_json::json!([{"kind": "flow"}]));
        v["family"]["bogus"] = serde_json::json!(1);
        assert_eq!(parse(v).unwrap_err().path(), Some("family.bogus"));

        let mut v = dirac_with(serde_json::json!([{"kind": "flow"}]));
        v["family"]["kind"] = serde_json::json!("spiral");
        assert_eq!(parse(v).unwrap_err().path(), Some("family.kind"));

        let v = dirac_with(serde_json::json!([{"kind": "spin"}]));
        assert_eq!(parse(v).unwrap_err().path(), Some("analyses[0].kind"));

        let v = dirac_with(serde_json::json!([{"kind": "flow", "params": {"method": "x"}}]));
        assert_eq!(
            parse(v).unwrap_err().path(),
            Some("analyses[0].params.method")
        );
    }

    #[test]
    fn structural_rules() {
        assert_eq!(
            parse(dirac_with(serde_json::json!([]))).unwrap_err().path(),
            Some("analyses")
        );
        let v = dirac_with(serde_json::json!([
            {"kind": "theorem1", "params": {"delta": 0.1, "x_index": [3, 11]}}
        ]));
        assert_eq!(
            parse(v).unwrap_err().path(),
            Some("analyses[0].params.x_index")
        );
        let v = dirac_with(serde_json::json!([
            {"kind": "polarized", "params": {"b_levels": [0.5, 1.2]}}
        ]));
        assert_eq!(
            parse(v).unwrap_err().path(),
            Some("analyses[0].params.b_levels[1]")
        );
        let mut v = dirac_with(serde_json::json!([{"kind": "flow"}]));
        v["grid"] = serde_json::json!([0.0, 0.5, 0.25]);
        assert_eq!(parse(v).unwrap_err().path(), Some("grid"));
        assert!(matches!(
            AnalysisConfig::from_json("{", Path::new(".")),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn defaults_and_seed_injection() {
        let v = serde_json::json!({
            "family": {"kind": "random_crossings", "dim": 4},
            "grid": {"start": 0.0, "end": 1.0, "points": 5},
            "analyses": [{"kind": "flow"}, {"kind": "distances"}],
            "seed": 11
        });
        let c = parse(v).unwrap();
        assert_eq!(c.family, FamilySpec::RandomCrossings { dim: 4, seed: 11 });
        assert_eq!(c.echo["family"]["seed"], 11);
        assert_eq!(c.analyses[0], Analysis::Flow(FlowParams::default()));
        assert_eq!(
            c.analyses[1],
            Analysis::Distances(DistancesParams::default())
        );
        assert_eq!(c.search, SearchOptions::default());
    }

    #[test]
    fn excluded_grid() {
        let v = serde_json::json!({
            "family": {"kind": "tangent_blowup"},
            "grid": {"start": 0.1, "end": 0.9, "points": 200,
                     "exclude": {"center": 0.5, "half_width": 0.02}},
            "analyses": [{"kind": "distances"}]
        });
        let c = parse(v).unwrap();
        assert_eq!(c.grid.len(), 200);
        assert!(c
            .grid
            .points()
            .iter()
            .all(|x| (x - 0.5).abs() >= 0.02 - 1e-15));
    }

    #[test]
    fn demos_validate() {
        for kind in DEMO_KINDS {
            parse(demo_config(kind).unwrap()).unwrap_or_else(|e| panic!("{kind}: {e}"));
        }
        assert!(demo_config("nope").is_none());
    }
}
