//! Families confined to `[-1, 1]` with spectrum accumulating only near
//! `+-1`: the polarization surrogate, the weak discrete-spectrum property,
//! and its correspondence with the discrete-spectrum property under `gamma`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapted::{
    discrete_spectrum_by_sweep, discrete_spectrum_certify, CertificationError,
    DiscreteSpectrumReport, SearchOptions, SweepReport,
};
use crate::family::{essential_sign_check, FamilySample};
use crate::spectral::{gamma, HermitianOperator, RealWindow};
use crate::topology::{
    continuity_modulus, theorem2_certify_with, Calculus, ContinuityMetric, Theorem2Certificate,
    TheoremError,
};

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolarizedError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("operator at grid index {index} is not polarized: {report:?}")]
    NotPolarized {
        index: usize,
        report: PolarizationReport,
    },
    #[error("family is essentially {side} at grid index {index}")]
    EssentiallySigned { index: usize, side: String },
    #[error(transparent)]
    Certification(#[from] CertificationError),
    #[error(transparent)]
    Theorem(#[from] TheoremError),
}

/// All but `interior_budget` eigenvalues within `eta` of `+-1`, norm at most
/// `1 + norm_slack`, and both `-1` and `+1` approached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationCheck {
    pub eta: f64,
    /// Defaults to a quarter of the dimension.
    pub interior_budget: Option<usize>,
    pub norm_slack: f64,
}

impl Default for PolarizationCheck {
    fn default() -> Self {
        Self {
            eta: 0.1,
            interior_budget: None,
            norm_slack: 1e-9,
        }
    }
}

impl PolarizationCheck {
    pub fn validate(&self) -> Result<(), PolarizedError> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(PolarizedError::InvalidParameter {
                name: "eta".into(),
                reason: format!("{} is outside (0, 1)", self.eta),
            });
        }
        if !(self.norm_slack >= 0.0) {
            return Err(PolarizedError::InvalidParameter {
                name: "norm_slack".into(),
                reason: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    pub fn budget(&self, dim: usize) -> usize {
        self.interior_budget.unwrap_or(dim / 4)
    }

    /// Largest admissible level for the weak route.
    pub fn ceiling(&self, hint: Option<f64>) -> f64 {
        (1.0 - self.eta).min(hint.unwrap_or(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarizationReport {
    pub norm: f64,
    pub interior_count: usize,
    pub interior_budget: usize,
    pub near_minus_one: usize,
    pub near_plus_one: usize,
    pub passes: bool,
}

fn polarization_of(eigenvalues: &[f64], chk: &PolarizationCheck) -> PolarizationReport {
    let eta = chk.eta;
    let norm = eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let interior_count = eigenvalues
        .iter()
        .filter(|&&l| l > -1.0 + eta && l < 1.0 - eta)
        .count();
    let near_minus_one = eigenvalues
        .iter()
        .filter(|&&l| (l + 1.0).abs() <= eta)
        .count();
    let near_plus_one = eigenvalues
        .iter()
        .filter(|&&l| (l - 1.0).abs() <= eta)
        .count();
    let interior_budget = chk.budget(eigenvalues.len());
    PolarizationReport {
        norm,
        interior_count,
        interior_budget,
        near_minus_one,
        near_plus_one,
        passes: norm <= 1.0 + chk.norm_slack
            && interior_count <= interior_budget
            && near_minus_one > 0
            && near_plus_one > 0,
    }
}

pub fn compact_polarization_check(
    a: &HermitianOperator,
    chk: &PolarizationCheck,
) -> PolarizationReport {
    polarization_of(a.decompose().eigenvalues(), chk)
}

fn require_polarized(sample: &FamilySample, chk: &PolarizationCheck) -> Result<(), PolarizedError> {
    chk.validate()?;
    for (index, d) in sample.spectra().iter().enumerate() {
        let report = polarization_of(d.eigenvalues(), chk);
        if !report.passes {
            return Err(PolarizedError::NotPolarized { index, report });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakDiscreteReport {
    pub check: PolarizationCheck,
    pub ceiling: f64,
    pub lemma: DiscreteSpectrumReport,
    pub sweep: SweepReport,
    /// Both routes pass or fail at the same `(level, grid point)` pairs.
    pub agree: bool,
    pub passes: bool,
}

/// Adapted pairs with level in `(b, 1 - eta)` everywhere, for `b` in
/// `(0, 1)`, plus the shift sweep over `[-b, b]`.
pub fn weak_discrete_spectrum_certify(
    sample: &FamilySample,
    b_levels: &[f64],
    chk: &PolarizationCheck,
    opts: &SearchOptions,
) -> Result<WeakDiscreteReport, PolarizedError> {
    require_polarized(sample, chk)?;
    if let Some(&b) = b_levels.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
        return Err(PolarizedError::InvalidParameter {
            name: "b_levels".into(),
            reason: format!("{b} is outside (0, 1)"),
        });
    }
    let ceiling = chk.ceiling(sample.ceiling_hint());
    let opts = SearchOptions {
        ceiling: Some(ceiling),
        ..*opts
    };
    let lemma = discrete_spectrum_certify(sample, b_levels, &opts)?;
    let sweep = discrete_spectrum_by_sweep(sample, b_levels, &opts)?;
    let agree =
        lemma.passes == sweep.passes && lemma.failure_locations() == sweep.failure_locations();
    Ok(WeakDiscreteReport {
        check: *chk,
        ceiling,
        passes: lemma.passes,
        lemma,
        sweep,
        agree,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankMismatch {
    pub b: f64,
    pub x_index: usize,
    pub level: f64,
    pub rank: usize,
    pub transformed_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    pub levels: Vec<f64>,
    pub transformed_levels: Vec<f64>,
    pub discrete: DiscreteSpectrumReport,
    pub weak: WeakDiscreteReport,
    /// Pass/fail and failure locations coincide.
    pub agree: bool,
    /// `rank P_[-c, c](A) = rank P_[-gamma(c), gamma(c)](gamma(A))` for
    /// every certificate of the discrete route.
    pub rank_mismatches: Vec<RankMismatch>,
    pub consistent: bool,
    pub passes: bool,
}

/// Runs the discrete route on `sample` at `levels` and the weak route on
/// `gamma(sample)` at `gamma(levels)`, and compares them.
pub fn transform_correspondence_check(
    sample: &FamilySample,
    levels: &[f64],
    chk: &PolarizationCheck,
    opts: &SearchOptions,
) -> Result<CorrespondenceReport, PolarizedError> {
    let signs = essential_sign_check(sample, 1);
    if let Some(index) = signs.first_failure {
        let (neg, _) = signs.counts[index];
        let side = if neg == 0 { "positive" } else { "negative" };
        return Err(PolarizedError::EssentiallySigned {
            index,
            side: side.into(),
        });
    }
    let transformed = sample.bounded_transform();
    let transformed_levels: Vec<f64> = levels.iter().map(|&l| gamma(l)).collect();
    let discrete = discrete_spectrum_certify(sample, levels, opts)?;
    let weak = weak_discrete_spectrum_certify(&transformed, &transformed_levels, chk, opts)?;

    let rank_mismatches: Vec<RankMismatch> = discrete
        .certificates
        .iter()
        .filter_map(|p| {
            let level = p.certificate.level;
            let transformed_rank = transformed
                .spectrum(p.x_index)
                .count_in(&RealWindow::symmetric(gamma(level)));
            (transformed_rank != p.certificate.rank).then_some(RankMismatch {
                b: p.b,
                x_index: p.x_index,
                level,
                rank: p.certificate.rank,
                transformed_rank,
            })
        })
        .collect();
    let agree = discrete.passes == weak.lemma.passes
        && discrete.failure_locations() == weak.lemma.failure_locations();
    let consistent = agree && rank_mismatches.is_empty();
    Ok(CorrespondenceReport {
        levels: levels.to_vec(),
        transformed_levels,
        passes: consistent && discrete.passes,
        discrete,
        weak,
        agree,
        rank_mismatches,
        consistent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem3Certificate {
    pub certificate: Theorem2Certificate,
    /// Max adjacent-edge Riesz distance over the certified range.
    pub riesz_modulus: f64,
}

/// The Riesz certificate construction for a polarized family: norm continuity of
/// the family itself (identity calculus) with levels in `(1 - delta, 1 - eta)`.
pub fn theorem3_certify(
    sample: &FamilySample,
    x_index: usize,
    delta: f64,
    cap: f64,
    chk: &PolarizationCheck,
    opts: &SearchOptions,
) -> Result<Theorem3Certificate, PolarizedError> {
    require_polarized(sample, chk)?;
    let opts = SearchOptions {
        ceiling: Some(chk.ceiling(sample.ceiling_hint())),
        ..*opts
    };
    let certificate =
        theorem2_certify_with(sample, x_index, delta, cap, &opts, Calculus::Identity)?;
    let range = certificate.range;
    let riesz_modulus = if range.len() > 1 {
        let slice = sample
            .slice(range.lo_index, range.hi_index)
            .expect("range lies inside the grid");
        continuity_modulus(&slice, ContinuityMetric::Riesz).max
    } else {
        0.0
    };
    Ok(Theorem3Certificate {
        certificate,
        riesz_modulus,
    })
}
