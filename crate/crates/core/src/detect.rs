//! Detection step: choose the next anchor from residual information.
//!
//! Exterior-point criteria (`rand`, `max`, `dist`) first pick a column i
//! with nonzero residual, then maximize the normalized inner product
//! RᵢᵀXⱼ / pᵀXⱼ over candidates with p the all-ones vector. The `greedy`
//! criterion instead maximizes the clamped column mass of RᵀX normalized by
//! the column norm. All scores are computed from Gram quantities; the rows
//! and columns of RᵀX are produced on the fly and never stored.
//!
//! Scoring is data-parallel over columns; every argmax is then taken
//! sequentially in index order with a relative tie tolerance, so a fixed
//! seed yields the same selections for any thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, XrayError};
use crate::gram::GramCache;
use crate::kernels::dot;
use crate::nnls::NnlsWorkspace;

/// Relative tolerance under which scores count as tied; the smallest index
/// among the ties wins.
pub const TIE_REL_TOL: f64 = 1e-12;

/// Columns whose signed sum is at most this fraction of the mean absolute
/// column sum are never anchor candidates (their score denominator is
/// numerically meaningless).
pub const DENOM_EPS_REL: f64 = 1e-12;

/// A column is exterior when its squared residual norm exceeds
/// `EXTERIOR_EPS_REL * frob_sq / n`.
pub const EXTERIOR_EPS_REL: f64 = 1e-10;

/// Which detection rule drives anchor selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriterionKind {
    /// Any random exterior point (seeded).
    Rand,
    /// The exterior point with the largest residual norm.
    Max,
    /// The exterior point whose residual sees the most clamped mass.
    Dist,
    /// Directly pick the column that best reduces all residuals at once.
    Greedy,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 4] = [
        CriterionKind::Rand,
        CriterionKind::Max,
        CriterionKind::Dist,
        CriterionKind::Greedy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::Rand => "rand",
            CriterionKind::Max => "max",
            CriterionKind::Dist => "dist",
            CriterionKind::Greedy => "greedy",
        }
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rand" => Ok(CriterionKind::Rand),
            "max" => Ok(CriterionKind::Max),
            "dist" => Ok(CriterionKind::Dist),
            "greedy" => Ok(CriterionKind::Greedy),
            other => Err(format!(
                "unknown variant '{other}' (expected rand, max, dist or greedy)"
            )),
        }
    }
}

/// Detection rule plus the seed consumed by `rand`.
#[derive(Debug, Clone, Copy)]
pub struct SelectionCriterion {
    pub kind: CriterionKind,
    pub seed: u64,
}

impl SelectionCriterion {
    pub fn new(kind: CriterionKind, seed: u64) -> Self {
        SelectionCriterion { kind, seed }
    }

    pub fn rand(seed: u64) -> Self {
        Self::new(CriterionKind::Rand, seed)
    }

    pub fn max() -> Self {
        Self::new(CriterionKind::Max, 0)
    }

    pub fn dist() -> Self {
        Self::new(CriterionKind::Dist, 0)
    }

    pub fn greedy() -> Self {
        Self::new(CriterionKind::Greedy, 0)
    }
}

/// What one detection decided and why.
#[derive(Debug, Clone)]
pub struct DetectionReport {
    /// Selected column j*.
    pub chosen: usize,
    /// Exterior column i whose residual scored the candidates; absent for
    /// greedy.
    pub exterior: Option<usize>,
    /// Winning score.
    pub max_score: f64,
    /// All candidates within the tie tolerance of the winner, ascending.
    pub ties: Vec<usize>,
}

/// Argmax over `scores` restricted to `Some` entries, ties within
/// `TIE_REL_TOL` relative resolved to the smallest index.
fn argmax_with_ties(scores: &[Option<f64>]) -> Option<(usize, f64, Vec<usize>)> {
    let mut best: Option<f64> = None;
    for s in scores.iter().flatten() {
        best = Some(match best {
            Some(b) if b >= *s => b,
            _ => *s,
        });
    }
    let best = best?;
    let slack = TIE_REL_TOL * best.abs();
    let ties: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.filter(|v| best - *v <= slack).map(|_| j))
        .collect();
    Some((ties[0], best, ties))
}

/// Candidate mask for the normalized-score rule: excludes the chosen
/// anchors and columns whose signed sum fails the denominator guard.
pub fn eq1_candidate_mask(gram: &GramCache, anchors: &[usize]) -> Vec<bool> {
    let n = gram.n();
    let mean_abs = if n == 0 {
        0.0
    } else {
        gram.col_l1().iter().map(|v| v.abs()).sum::<f64>() / n as f64
    };
    let denom_eps = DENOM_EPS_REL * mean_abs;
    let mut mask: Vec<bool> = gram.col_l1().iter().map(|&s| s > denom_eps).collect();
    for &a in anchors {
        mask[a] = false;
    }
    mask
}

/// Candidate mask for the greedy rule: excludes chosen anchors and
/// zero-norm columns.
pub fn greedy_candidate_mask(gram: &GramCache, anchors: &[usize]) -> Vec<bool> {
    let mut mask: Vec<bool> = gram.col_l2sq().iter().map(|&q| q > 0.0).collect();
    for &a in anchors {
        mask[a] = false;
    }
    mask
}

/// Normalized-score detection: j* maximizes residual_row[j] / col_l1[j]
/// over the candidates.
///
/// `residual_row` is an unclamped row of RᵀX as produced by
/// [`NnlsWorkspace::residual_gram_row`].
pub fn score_eq1(
    residual_row: &[f64],
    col_l1: &[f64],
    candidate_mask: &[bool],
) -> Result<DetectionReport> {
    assert_eq!(residual_row.len(), col_l1.len());
    assert_eq!(residual_row.len(), candidate_mask.len());
    let scores: Vec<Option<f64>> = residual_row
        .par_iter()
        .zip(col_l1)
        .zip(candidate_mask)
        .map(|((&num, &den), &ok)| if ok { Some(num / den) } else { None })
        .collect();
    let (chosen, max_score, ties) = argmax_with_ties(&scores).ok_or(XrayError::NoCandidates)?;
    Ok(DetectionReport {
        chosen,
        exterior: None,
        max_score,
        ties,
    })
}

/// Squared norm of the clamped row k of RᵀX, visiting only stored entries
/// of C's column k (row k by symmetry). Where C[k][j] is a structural zero
/// the clamped value is taken as zero, which is exact for non-negative data.
fn q_row_pos_norm_sq(ws: &NnlsWorkspace, gram: &GramCache, k: usize) -> f64 {
    let bk = ws.coefficient_col(k);
    let mut acc = 0.0;
    gram.for_each_col_entry(k, |j, c| {
        let v = c - dot(bk, ws.ca_col(j));
        if v > 0.0 {
            acc += v * v;
        }
    });
    acc
}

/// Exterior threshold for the current problem scale.
pub fn exterior_eps(gram: &GramCache) -> f64 {
    let n = gram.n().max(1);
    EXTERIOR_EPS_REL * gram.frob_sq() / n as f64
}

/// Pick the exterior column whose residual will score the candidates.
///
/// Returns `None` when no column qualifies as exterior, meaning the current
/// cone already covers the data.
pub fn pick_exterior(
    kind: CriterionKind,
    ws: &NnlsWorkspace,
    gram: &GramCache,
    res_norms_sq: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let eps = exterior_eps(gram);
    let qualifying: Vec<usize> = res_norms_sq
        .iter()
        .enumerate()
        .filter_map(|(k, &v)| (v > eps).then_some(k))
        .collect();
    if qualifying.is_empty() {
        return None;
    }
    match kind {
        CriterionKind::Rand => {
            let pick = rng.random_range(0..qualifying.len());
            Some(qualifying[pick])
        }
        CriterionKind::Max => {
            let scores: Vec<Option<f64>> = res_norms_sq.iter().map(|&v| Some(v)).collect();
            argmax_with_ties(&scores).map(|(k, _, _)| k)
        }
        CriterionKind::Dist => {
            let per: Vec<f64> = qualifying
                .par_iter()
                .map(|&k| q_row_pos_norm_sq(ws, gram, k))
                .collect();
            let mut scores: Vec<Option<f64>> = vec![None; res_norms_sq.len()];
            for (pos, &k) in qualifying.iter().enumerate() {
                scores[k] = Some(per[pos]);
            }
            argmax_with_ties(&scores).map(|(k, _, _)| k)
        }
        CriterionKind::Greedy => unreachable!("greedy has no exterior point"),
    }
}

/// Greedy detection: j* maximizes the clamped squared mass of column j of
/// RᵀX divided by the squared column norm.
pub fn greedy_select(
    ws: &NnlsWorkspace,
    gram: &GramCache,
    candidate_mask: &[bool],
) -> Result<DetectionReport> {
    assert_eq!(candidate_mask.len(), gram.n());
    let col_l2sq = gram.col_l2sq();
    let scores: Vec<Option<f64>> = (0..gram.n())
        .into_par_iter()
        .map(|j| {
            if !candidate_mask[j] {
                return None;
            }
            let ca_j = ws.ca_col(j);
            let mut acc = 0.0;
            gram.for_each_col_entry(j, |k, c| {
                let v = c - dot(ws.coefficient_col(k), ca_j);
                if v > 0.0 {
                    acc += v * v;
                }
            });
            Some(acc / col_l2sq[j])
        })
        .collect();
    let (chosen, max_score, ties) = argmax_with_ties(&scores).ok_or(XrayError::NoCandidates)?;
    Ok(DetectionReport {
        chosen,
        exterior: None,
        max_score,
        ties,
    })
}
