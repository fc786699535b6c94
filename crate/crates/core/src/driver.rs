//! End-to-end anchor selection: alternate detection and projection until the
//! target rank is reached or the cone covers the data, with optional
//! alternating-minimization refinement and improvement-based model selection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::detect::{
    eq1_candidate_mask, greedy_candidate_mask, greedy_select, pick_exterior, score_eq1,
    CriterionKind, DetectionReport, SelectionCriterion,
};
use crate::error::{Result, XrayError};
use crate::gram::{gram, GramCache, DEFAULT_DENSE_THRESHOLD};
use crate::nnls::{CdSolver, NnlsSettings, NnlsWorkspace, IN_LOOP_MAXCYCLES};
use crate::sparse::SparseMatrix;

/// Everything a factorization run needs to know.
#[derive(Debug, Clone)]
pub struct XrayConfig {
    /// Target number of anchors.
    pub rank: usize,
    /// Detection rule (and seed for `rand`).
    pub criterion: SelectionCriterion,
    /// Settings for the final projection; in-loop projections reuse the
    /// tolerance with the cycle budget capped at 20.
    pub nnls: NnlsSettings,
    /// Stop once the total residual mass drops below this fraction of the
    /// squared data norm.
    pub early_stop_tol: f64,
    /// Alternating-minimization sweeps applied by callers after selection.
    pub refine_iters: usize,
    /// When set, stop at the first anchor whose relative improvement falls
    /// below this threshold (model selection).
    pub improvement_threshold: Option<f64>,
}

impl XrayConfig {
    pub fn new(rank: usize, criterion: SelectionCriterion) -> Self {
        XrayConfig {
            rank,
            criterion,
            nnls: NnlsSettings::default(),
            early_stop_tol: 1e-10,
            refine_iters: 0,
            improvement_threshold: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(XrayError::InvalidConfig("rank must be >= 1".into()));
        }
        if self.early_stop_tol < 0.0 {
            return Err(XrayError::InvalidConfig(
                "early_stop_tol must be >= 0".into(),
            ));
        }
        if let Some(t) = self.improvement_threshold {
            if t < 0.0 {
                return Err(XrayError::InvalidConfig(
                    "improvement_threshold must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Output of a run: the ordered anchors, their coefficients, and one
/// residual/report pair per iteration. W is implicit as the anchor columns
/// of X.
#[derive(Debug, Clone)]
pub struct XrayResult {
    pub anchors: Vec<usize>,
    /// Coefficients, `anchors.len()` by n.
    pub h: DenseMatrix,
    /// Exact objective after each iteration's projection; non-increasing.
    pub residual_history: Vec<f64>,
    pub reports: Vec<DetectionReport>,
}

/// Snapshot handed to the observer after each projection step.
pub struct IterationEvent<'a> {
    /// Zero-based iteration index.
    pub iteration: usize,
    pub report: &'a DetectionReport,
    /// Objective after this iteration's projection.
    pub objective: f64,
    pub workspace: &'a NnlsWorkspace,
    pub gram: &'a GramCache,
}

/// True when the cone covers the data to within tolerance: either the total
/// residual mass is at most `early_stop_tol * frob_sq` or no column
/// qualifies as exterior.
pub fn early_stop_check(res_norms_sq: &[f64], frob_sq: f64, early_stop_tol: f64) -> bool {
    let total: f64 = res_norms_sq.iter().sum();
    if total <= early_stop_tol * frob_sq {
        return true;
    }
    let n = res_norms_sq.len().max(1);
    let eps = crate::detect::EXTERIOR_EPS_REL * frob_sq / n as f64;
    !res_norms_sq.iter().any(|&v| v > eps)
}

/// Run the factorization on a prebuilt Gram cache, reporting each iteration
/// to `observer`.
pub fn xray_run_observed<F>(
    gram: &GramCache,
    config: &XrayConfig,
    mut observer: F,
) -> Result<XrayResult>
where
    F: FnMut(&IterationEvent<'_>),
{
    config.validate()?;
    let n = gram.n();
    if config.rank > n {
        return Err(XrayError::RankExceedsColumns {
            rank: config.rank,
            n_cols: n,
        });
    }
    if gram.frob_sq() <= 0.0 {
        return Err(XrayError::EmptyMatrix);
    }

    let in_loop = NnlsSettings {
        tol: config.nnls.tol,
        maxcycles: config.nnls.maxcycles.min(IN_LOOP_MAXCYCLES),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.criterion.seed);
    let mut ws = NnlsWorkspace::with_capacity(gram, config.rank);
    let mut residual_history: Vec<f64> = Vec::with_capacity(config.rank);
    let mut reports: Vec<DetectionReport> = Vec::with_capacity(config.rank);

    for iteration in 0..config.rank {
        let res_norms_sq = ws.residual_norms_sq(gram);
        if early_stop_check(&res_norms_sq, gram.frob_sq(), config.early_stop_tol) {
            break;
        }

        let report = match config.criterion.kind {
            CriterionKind::Greedy => {
                let mask = greedy_candidate_mask(gram, ws.anchors());
                greedy_select(&ws, gram, &mask)?
            }
            kind => {
                let Some(i) = pick_exterior(kind, &ws, gram, &res_norms_sq, &mut rng) else {
                    break; // cone covers the data
                };
                let row = ws.residual_gram_row(gram, i);
                let mask = eq1_candidate_mask(gram, ws.anchors());
                let mut rep = score_eq1(&row, gram.col_l1(), &mask)?;
                rep.exterior = Some(i);
                rep
            }
        };

        ws.push_anchor(gram, report.chosen)?;
        let (objective, _cycles) = ws.solve(&in_loop)?;
        let objective = objective.max(0.0);
        residual_history.push(objective);
        observer(&IterationEvent {
            iteration,
            report: &report,
            objective,
            workspace: &ws,
            gram,
        });
        reports.push(report);

        if let Some(threshold) = config.improvement_threshold {
            let before = if iteration == 0 {
                gram.frob_sq()
            } else {
                residual_history[iteration - 1]
            };
            if before <= 0.0 {
                break;
            }
            if (before - objective) / before < threshold {
                break;
            }
        }
    }

    // Final projection at the full cycle budget, warm started from the loop.
    if !ws.anchors().is_empty() {
        let (objective, _) = ws.solve(&config.nnls)?;
        if let Some(last) = residual_history.last_mut() {
            *last = objective.max(0.0).min(*last);
        }
    }

    Ok(XrayResult {
        anchors: ws.anchors().to_vec(),
        h: ws.coefficients(),
        residual_history,
        reports,
    })
}

/// Run the factorization on a data matrix with the default Gram density
/// threshold.
pub fn xray_run(x: &SparseMatrix, config: &XrayConfig) -> Result<XrayResult> {
    let cache = gram(x, DEFAULT_DENSE_THRESHOLD);
    xray_run_observed(&cache, config, |_| {})
}

/// Incremental model selection: run up to `rank_max` anchors and stop at
/// the first one whose relative residual improvement falls below the
/// configured threshold. The returned anchors are a prefix of the ones a
/// full rank_max run would select.
pub fn model_select(x: &SparseMatrix, config: &XrayConfig, rank_max: usize) -> Result<XrayResult> {
    if config.improvement_threshold.is_none() {
        return Err(XrayError::InvalidConfig(
            "model selection requires improvement_threshold".into(),
        ));
    }
    let mut cfg = config.clone();
    cfg.rank = rank_max;
    xray_run(x, &cfg)
}

/// Refined factors and the objective trace of the alternating sweeps.
#[derive(Debug, Clone)]
pub struct RefineResult {
    /// Left factor, m by r, non-negative.
    pub w: DenseMatrix,
    /// Right factor, r by n, non-negative.
    pub h: DenseMatrix,
    /// Objective before refinement and after each sweep; non-increasing.
    pub objective_history: Vec<f64>,
}

/// A few sweeps of alternating non-negative least squares on the full
/// factorization objective, starting from W = X_A and the given H.
///
/// Each half-step reuses the Gram-driven coordinate solver: the H update
/// against WᵀW, the W update against HHᵀ with the roles of rows and columns
/// transposed. Zero-norm rows or columns of a factor pin the corresponding
/// coefficients at zero rather than erroring.
pub fn refine(
    x: &SparseMatrix,
    anchors: &[usize],
    h: &DenseMatrix,
    iters: usize,
    settings: &NnlsSettings,
) -> Result<RefineResult> {
    let r = anchors.len();
    let n = x.n_cols();
    let m = x.n_rows();
    if h.n_rows() != r || h.n_cols() != n {
        return Err(XrayError::InvalidConfig(format!(
            "H must be {}x{}, got {}x{}",
            r,
            n,
            h.n_rows(),
            h.n_cols()
        )));
    }
    for &a in anchors {
        if a >= n {
            return Err(XrayError::AnchorOutOfRange {
                index: a,
                n_cols: n,
            });
        }
    }
    let frob_sq: f64 = {
        let mut acc = 0.0;
        for j in 0..n {
            let (_, vals) = x.col(j);
            for &v in vals {
                acc += v * v;
            }
        }
        acc
    };

    let mut w = x.cols_to_dense(anchors); // m by r
    let mut h = h.clone();
    let mut history = Vec::with_capacity(iters + 1);
    history.push(objective_via_h_side(x, &w, &h, frob_sq));

    for _ in 0..iters {
        // H step: min over H >= 0 against the fixed W.
        let (s_w, rhs_h) = h_side_normal_parts(x, &w);
        let mut cd = CdSolver::new(r, n, &s_w, &rhs_h, Some(&h), frob_sq);
        cd.solve(settings)?;
        h = cd.coefficients();

        // W step: transpose roles; unknowns are the rows of W.
        let (s_h, rhs_w) = w_side_normal_parts(x, &h);
        let wt = w.transposed();
        let mut cd = CdSolver::new(r, m, &s_h, &rhs_w, Some(&wt), frob_sq);
        let (objective, _) = cd.solve(settings)?;
        w = cd.coefficients().transposed();
        history.push(objective.max(0.0));
    }

    Ok(RefineResult {
        w,
        h,
        objective_history: history,
    })
}

/// WᵀW (r-by-r row-major) and WᵀX (r-by-n) for the H half-step.
fn h_side_normal_parts(x: &SparseMatrix, w: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let m = w.n_rows();
    let r = w.n_cols();
    let n = x.n_cols();
    let mut s = vec![0.0; r * r];
    for i in 0..r {
        for k in 0..r {
            let mut acc = 0.0;
            for t in 0..m {
                acc += w.get(t, i) * w.get(t, k);
            }
            s[i * r + k] = acc;
        }
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (rows, vals) = x.col(j);
            let mut out = vec![0.0; r];
            for (&t, &v) in rows.iter().zip(vals) {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += v * w.get(t, i);
                }
            }
            out
        })
        .collect();
    let mut rhs = DenseMatrix::zeros(r, n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..r {
            rhs.set(i, j, col[i]);
        }
    }
    (s, rhs)
}

/// HHᵀ (r-by-r) and HXᵀ (r-by-m) for the W half-step.
fn w_side_normal_parts(x: &SparseMatrix, h: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let r = h.n_rows();
    let n = h.n_cols();
    let m = x.n_rows();
    let mut s = vec![0.0; r * r];
    for i in 0..r {
        let hi = h.row(i);
        for k in 0..r {
            let hk = h.row(k);
            let mut acc = 0.0;
            for j in 0..n {
                acc += hi[j] * hk[j];
            }
            s[i * r + k] = acc;
        }
    }
    let rows: Vec<Vec<f64>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let hi = h.row(i);
            let mut out = vec![0.0; m];
            for j in 0..n {
                let w = hi[j];
                if w != 0.0 {
                    let (xr, xv) = x.col(j);
                    for (&t, &v) in xr.iter().zip(xv) {
                        out[t] += w * v;
                    }
                }
            }
            out
        })
        .collect();
    let mut rhs = DenseMatrix::zeros(r, m);
    for (i, row) in rows.iter().enumerate() {
        rhs.row_mut(i).copy_from_slice(row);
    }
    (s, rhs)
}

/// Exact objective via the H-side expansion without touching the solver
/// state; used for the pre-refinement baseline.
fn objective_via_h_side(x: &SparseMatrix, w: &DenseMatrix, h: &DenseMatrix, frob_sq: f64) -> f64 {
    let (s_w, rhs_h) = h_side_normal_parts(x, w);
    let cd = CdSolver::new(w.n_cols(), x.n_cols(), &s_w, &rhs_h, Some(h), frob_sq);
    cd.objective().max(0.0)
}
