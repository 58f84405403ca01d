use num_complex::Complex64;
use serde::Serialize;

use super::{contract, max_over, TheoremError, EMBED_MAX_DIM};
use crate::adapted::{find_adapted_pair, AdaptedPairCertificate, GridRange, SearchOptions};
use crate::family::FamilySample;
use crate::par;
use crate::spectral::{matrix_to_pairs, operator_norm, resolvent_at_i, RealWindow};

/// Quantitative witness of graph continuity at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Certificate {
    pub x_index: usize,
    pub delta: f64,
    pub level_c: f64,
    /// The adapted pair `(U, c)` with `c > 1 / delta`.
    pub adapted: AdaptedPairCertificate,
    /// `U'`: where `||B_y - B_x|| < delta`.
    pub range: GridRange,
    /// `B_y` over `U'` as `[re, im]` pairs (only for small dimensions).
    pub truncated_resolvents: Option<Vec<Vec<Vec<[f64; 2]>>>>,
    /// Max over `U` of `||(A_y + i)^-1 - B_y||`.
    pub tail_bound: f64,
    /// Max over `U'` of `||B_y - B_x||`.
    pub b_modulus: f64,
    /// Max over `U'` of `||(A_y + i)^-1 - (A_x + i)^-1||`.
    pub final_bound: f64,
}

/// `B_y`: the resolvent at `-i` restricted to the spectral window `[-c, c]`
/// and zero on its complement. The full resolvent comes from an LU solve.
pub fn theorem1_certify(
    sample: &FamilySample,
    x_index: usize,
    delta: f64,
    opts: &SearchOptions,
) -> Result<Theorem1Certificate, TheoremError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(TheoremError::InvalidDelta {
            delta,
            allowed: "(0, inf)".into(),
        });
    }
    let adapted = find_adapted_pair(sample, x_index, 1.0 / delta, opts)?;
    let c = adapted.level;
    let u = adapted.range;
    let window = RealWindow::symmetric(c);
    let inv = |t: f64| Complex64::new(t, 1.0).inv();

    let blocks = par::map_range(u.len(), |k| {
        let y = u.lo_index + k;
        let b = sample.spectrum(y).window_piece(&window, inv).to_dense();
        let r = resolvent_at_i(sample.operator(y));
        let tail = operator_norm(&(&r - &b));
        (b, r, tail)
    });
    let tails: Vec<f64> = blocks.iter().map(|b| b.2).collect();
    let (tail_bound, worst) = max_over(u, u, &tails);
    if tail_bound >= delta {
        return Err(TheoremError::BoundViolated {
            inequality: "tail".into(),
            value: tail_bound,
            bound: delta,
            index: worst,
        });
    }

    let at = |y: usize| &blocks[y - u.lo_index];
    let (bx, rx, _) = at(x_index);
    let b_dist = par::map_range(u.len(), |k| operator_norm(&(&blocks[k].0 - bx)));
    let range = contract(u, x_index, &b_dist, delta);
    let (b_modulus, _) = max_over(u, range, &b_dist);

    let finals = par::map_range(u.len(), |k| {
        let y = u.lo_index + k;
        if range.contains(y) {
            operator_norm(&(&blocks[k].1 - rx))
        } else {
            0.0
        }
    });
    let (final_bound, worst) = max_over(u, range, &finals);
    if final_bound >= 3.0 * delta {
        return Err(TheoremError::BoundViolated {
            inequality: "final".into(),
            value: final_bound,
            bound: 3.0 * delta,
            index: worst,
        });
    }

    let truncated_resolvents = (sample.dim() <= EMBED_MAX_DIM)
        .then(|| range.indices().map(|y| matrix_to_pairs(&at(y).0)).collect());
    Ok(Theorem1Certificate {
        x_index,
        delta,
        level_c: c,
        adapted,
        range,
        truncated_resolvents,
        tail_bound,
        b_modulus,
        final_bound,
    })
}
