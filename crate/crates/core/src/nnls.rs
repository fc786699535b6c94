//! Projection step: solve min over B >= 0 of the squared Frobenius error of
//! X minus X_A B by cyclic coordinate descent on Gram-level quantities.
//!
//! The problem separates over the columns of B. For column j the solver
//! keeps the coefficient vector b, the right-hand side column CA[:, j]
//! (rows of C at the anchor indices), and u = S b with S = C[A][A]. One
//! coordinate step replaces b[i] by the clamped exact minimizer
//! (CA[i][j] - (u[i] - s_i b[i]))+ / s_i and repairs u with a rank-one
//! update touching only changed coordinates. No residual matrix is ever
//! materialized.
//!
//! Columns are processed in parallel; each column's cycle is sequential and
//! depends only on its own data, so results are identical for any thread
//! count.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Result, XrayError};
use crate::gram::GramCache;
use crate::kernels::dot;

/// Convergence controls for the coordinate-descent solver.
///
/// The solver always stops once every column sits at an exact coordinate
/// fixed point (no coefficient moves by even one ulp); `tol` adds an
/// earlier exit on stalled objective progress and `maxcycles` caps the
/// budget. The default disables the stall exit: detection quality and the
/// residual identities depend on per-column stationarity, which objective
/// progress cannot certify long before the fixed point is reached.
#[derive(Debug, Clone, Copy)]
pub struct NnlsSettings {
    /// Also stop when one full cycle changes the objective by less than
    /// `tol * (1 + |objective|)`; zero disables this exit.
    pub tol: f64,
    /// Hard cap on the number of full cycles.
    pub maxcycles: usize,
}

impl Default for NnlsSettings {
    fn default() -> Self {
        NnlsSettings {
            tol: 0.0,
            maxcycles: 2000,
        }
    }
}

impl NnlsSettings {
    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(XrayError::InvalidConfig("nnls tol must be >= 0".into()));
        }
        if self.maxcycles < 1 {
            return Err(XrayError::InvalidConfig(
                "nnls maxcycles must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Cap on cycles for the in-loop projections the driver performs between
/// detections. Warm starts freeze most columns after a handful of cycles;
/// the cap only bounds pathologically ill-conditioned columns.
pub(crate) const IN_LOOP_MAXCYCLES: usize = 2000;

/// Coordinates whose fitted mass `b_i * s_i` falls below this fraction of
/// the column's largest right-hand-side entry are snapped to zero. On
/// exactly-covered columns the zero constraints are degenerate and a stray
/// coordinate would otherwise decay multiplicatively forever, one ulp-scale
/// step per cycle, and the column could never freeze.
const SNAP_REL: f64 = 1e-14;

/// Coordinate-descent state shared by the anchored solver and the
/// alternating-minimization refinement.
///
/// Coefficient and right-hand-side blocks are stored one column at a time
/// with a fixed stride (`capacity`), so growing the active rank never moves
/// data.
#[derive(Debug, Clone)]
pub(crate) struct CdSolver {
    /// Active rank r.
    r: usize,
    /// Column stride; r never exceeds this.
    capacity: usize,
    /// Number of columns (right-hand sides).
    n: usize,
    /// S, r-by-r row-major within a capacity-by-capacity block.
    s: Vec<f64>,
    /// diag(S).
    s_diag: Vec<f64>,
    /// Right-hand sides, column j at `[j*capacity .. j*capacity+r]`.
    rhs_cols: Vec<f64>,
    /// Coefficients, column j contiguous as above.
    b_cols: Vec<f64>,
    /// u = S b per column, laid out like `b_cols`.
    u_rows: Vec<f64>,
    /// Columns known to be at an exact coordinate-descent fixed point.
    converged: Vec<bool>,
    /// Per-column objective contribution (u_j - 2 rhs_j) . b_j; kept exact
    /// because a column's entry is refreshed whenever the column is cycled
    /// and frozen columns cannot change theirs.
    col_obj: Vec<f64>,
    /// Squared Frobenius norm of the target matrix.
    targets_frob: f64,
}

/// One column's objective contribution: (u - 2 rhs) . b.
#[inline]
fn column_contribution(b: &[f64], u: &[f64], rhs: &[f64], r: usize) -> f64 {
    dot(&u[..r], &b[..r]) - 2.0 * dot(&rhs[..r], &b[..r])
}

/// One cyclic pass over a single column's coordinates. Returns the largest
/// absolute coefficient move (0.0 means the column is at a fixed point).
#[inline]
fn column_pass(
    b: &mut [f64],
    u: &mut [f64],
    rhs: &[f64],
    s: &[f64],
    s_diag: &[f64],
    r: usize,
    cap: usize,
    snap: f64,
) -> f64 {
    let mut largest = 0.0f64;
    for i in 0..r {
        let si = s_diag[i];
        if si <= 0.0 {
            // Degenerate coordinate (zero-norm basis vector): pinned at zero.
            continue;
        }
        let old = b[i];
        let g = rhs[i] - (u[i] - si * old);
        let new = if g > snap { g / si } else { 0.0 };
        if new != old {
            let delta = new - old;
            let srow = &s[i * cap..i * cap + r];
            for (uk, &sk) in u[..r].iter_mut().zip(srow) {
                *uk += delta * sk;
            }
            b[i] = new;
            largest = largest.max(delta.abs());
        }
    }
    largest
}

#[inline]
fn snap_level(rhs: &[f64]) -> f64 {
    let mut rhs_inf = 0.0f64;
    for &v in rhs {
        rhs_inf = rhs_inf.max(v.abs());
    }
    SNAP_REL * rhs_inf
}

/// How many plain passes a column runs between extrapolation attempts.
const EXTRAPOLATION_PERIOD: usize = 16;

/// Rejected jumps allowed before a column falls back to plain descent.
const EXTRAPOLATION_MAX_REJECTIONS: usize = 16;

/// Per-column buffers for the guarded extrapolation step.
struct ExtrapolationScratch {
    before: Vec<f64>,
    middle: Vec<f64>,
    saved_b: Vec<f64>,
    saved_u: Vec<f64>,
}

impl ExtrapolationScratch {
    fn new(r: usize) -> Self {
        ExtrapolationScratch {
            before: vec![0.0; r],
            middle: vec![0.0; r],
            saved_b: vec![0.0; r],
            saved_u: vec![0.0; r],
        }
    }
}

/// Jump a slowly creeping column toward its estimated limit. Returns false
/// when the delta pattern gives no usable contraction ratio.
///
/// Near a fixed point the error contracts along one dominant mode, so two
/// consecutive pass deltas estimate the contraction ratio; the geometric
/// series is then summed in closed form (Aitken). Coordinates heading to
/// the boundary get clamped at zero and u is rebuilt exactly at the new
/// point. The caller vets the jump with a plain pass and reverts it if the
/// objective rose.
fn geometric_extrapolation(
    b: &mut [f64],
    u: &mut [f64],
    before: &[f64],
    middle: &[f64],
    s: &[f64],
    r: usize,
    cap: usize,
) -> bool {
    let mut d11 = 0.0;
    let mut d21 = 0.0;
    for i in 0..r {
        let d1 = middle[i] - before[i];
        let d2 = b[i] - middle[i];
        d11 += d1 * d1;
        d21 += d2 * d1;
    }
    if !(d11 > 0.0) {
        return false;
    }
    let rho = d21 / d11;
    if !(0.2..=0.999_999_999).contains(&rho) {
        return false;
    }
    let factor = rho / (1.0 - rho);
    for i in 0..r {
        let step = factor * (b[i] - middle[i]);
        let v = b[i] + step;
        b[i] = if v > 0.0 { v } else { 0.0 };
    }
    for i in 0..r {
        u[i] = dot(&s[i * cap..i * cap + r], &b[..r]);
    }
    true
}

impl CdSolver {
    /// Empty solver able to grow to `capacity` coordinates.
    pub(crate) fn with_capacity(capacity: usize, n: usize, targets_frob: f64) -> Self {
        CdSolver {
            r: 0,
            capacity,
            n,
            s: vec![0.0; capacity * capacity],
            s_diag: Vec::with_capacity(capacity),
            rhs_cols: vec![0.0; capacity * n],
            b_cols: vec![0.0; capacity * n],
            u_rows: vec![0.0; capacity * n],
            converged: vec![false; n],
            col_obj: vec![0.0; n],
            targets_frob,
        }
    }

    /// Fully-specified solver: S (r-by-r row-major), right-hand sides as an
    /// r-by-n row-major matrix, optional warm start of the same shape.
    pub(crate) fn new(
        r: usize,
        n: usize,
        s: &[f64],
        rhs: &DenseMatrix,
        warm: Option<&DenseMatrix>,
        targets_frob: f64,
    ) -> Self {
        assert_eq!(s.len(), r * r);
        assert_eq!((rhs.n_rows(), rhs.n_cols()), (r, n));
        let mut solver = CdSolver::with_capacity(r, n, targets_frob);
        solver.r = r;
        solver.s.copy_from_slice(s);
        solver.s_diag = (0..r).map(|i| s[i * r + i]).collect();
        for i in 0..r {
            let row = rhs.row(i);
            for j in 0..n {
                solver.rhs_cols[j * solver.capacity + i] = row[j];
            }
        }
        if let Some(w) = warm {
            assert_eq!((w.n_rows(), w.n_cols()), (r, n));
            for i in 0..r {
                let row = w.row(i);
                for j in 0..n {
                    solver.b_cols[j * solver.capacity + i] = row[j];
                }
            }
            solver.recompute_u();
        }
        solver
    }

    #[inline]
    fn block(&self, data: &[f64], j: usize) -> std::ops::Range<usize> {
        debug_assert!(j < self.n && data.len() == self.capacity * self.n);
        j * self.capacity..j * self.capacity + self.r
    }

    #[inline]
    pub(crate) fn b_col(&self, j: usize) -> &[f64] {
        &self.b_cols[self.block(&self.b_cols, j)]
    }

    #[inline]
    pub(crate) fn rhs_col(&self, j: usize) -> &[f64] {
        &self.rhs_cols[self.block(&self.rhs_cols, j)]
    }

    #[inline]
    pub(crate) fn u_row(&self, j: usize) -> &[f64] {
        &self.u_rows[self.block(&self.u_rows, j)]
    }

    #[inline]
    fn s_row(&self, i: usize) -> &[f64] {
        &self.s[i * self.capacity..i * self.capacity + self.r]
    }

    #[inline]
    pub(crate) fn s_entry(&self, i: usize, k: usize) -> f64 {
        self.s[i * self.capacity + k]
    }

    /// Append one coordinate: a new row/column of S and a new RHS row, with
    /// the new coefficient row zero (the warm-start convention).
    ///
    /// `s_new[k]` holds S[new][A_k] for existing k plus the new diagonal at
    /// position r; `rhs_row` is the new right-hand-side row.
    pub(crate) fn push_coordinate(&mut self, s_new: &[f64], rhs_row: &[f64]) {
        let r = self.r;
        assert!(r < self.capacity, "solver capacity exceeded");
        assert_eq!(s_new.len(), r + 1);
        assert_eq!(rhs_row.len(), self.n);
        for k in 0..r {
            self.s[r * self.capacity + k] = s_new[k];
            self.s[k * self.capacity + r] = s_new[k];
        }
        self.s[r * self.capacity + r] = s_new[r];
        self.s_diag.push(s_new[r]);
        for (j, &v) in rhs_row.iter().enumerate() {
            self.rhs_cols[j * self.capacity + r] = v;
        }
        // b row is zero, so existing u entries are unchanged; the new u entry
        // is S[new][:] . b — fill it per column.
        self.r = r + 1;
        let cap = self.capacity;
        let s_row: Vec<f64> = self.s_row(r).to_vec();
        self.u_rows
            .par_chunks_mut(cap)
            .zip(self.b_cols.par_chunks(cap))
            .for_each(|(u, b)| {
                u[r] = dot(&b[..=r], &s_row);
            });
        // A new coordinate invalidates every column's fixed point.
        self.converged.iter_mut().for_each(|c| *c = false);
    }

    /// Recompute u = S b and the objective contributions exactly for every
    /// column.
    fn recompute_u(&mut self) {
        let r = self.r;
        let cap = self.capacity;
        let s = &self.s;
        let rhs_cols = &self.rhs_cols;
        self.u_rows
            .par_chunks_mut(cap)
            .zip(self.b_cols.par_chunks(cap))
            .zip(self.col_obj.par_iter_mut())
            .enumerate()
            .for_each(|(j, ((u, b), obj))| {
                u[..r].fill(0.0);
                for k in 0..r {
                    let bk = b[k];
                    if bk != 0.0 {
                        let srow = &s[k * cap..k * cap + r];
                        for (ui, &ski) in u[..r].iter_mut().zip(srow) {
                            *ui += bk * ski;
                        }
                    }
                }
                *obj = column_contribution(b, u, &rhs_cols[j * cap..j * cap + r], r);
            });
        self.converged.iter_mut().for_each(|c| *c = false);
    }

    /// Worst relative deviation between the maintained u and a fresh S b.
    pub(crate) fn u_drift(&self) -> f64 {
        let r = self.r;
        let cap = self.capacity;
        let mut worst = 0.0f64;
        for j in 0..self.n {
            let b = self.b_col(j);
            let u = self.u_row(j);
            for i in 0..r {
                let exact: f64 = (0..r).map(|k| b[k] * self.s[k * cap + i]).sum();
                let dev = (u[i] - exact).abs() / (1.0 + exact.abs());
                worst = worst.max(dev);
            }
        }
        worst
    }

    /// One full cycle of coordinate descent over every unconverged column.
    ///
    /// Coordinates are visited in insertion order; a column that completes a
    /// cycle without any coefficient change is at an exact fixed point and is
    /// skipped by later cycles until the problem changes.
    pub(crate) fn cycle(&mut self) {
        let r = self.r;
        let cap = self.capacity;
        let s = &self.s;
        let s_diag = &self.s_diag;
        let rhs_cols = &self.rhs_cols;
        self.b_cols
            .par_chunks_mut(cap)
            .zip(self.u_rows.par_chunks_mut(cap))
            .zip(self.converged.par_iter_mut())
            .zip(self.col_obj.par_iter_mut())
            .enumerate()
            .for_each(|(j, (((b, u), converged), obj))| {
                if *converged {
                    return;
                }
                let rhs = &rhs_cols[j * cap..j * cap + r];
                let moved = column_pass(b, u, rhs, s, s_diag, r, cap, snap_level(rhs));
                if moved > 0.0 {
                    *obj = column_contribution(b, u, rhs, r);
                }
                *converged = moved == 0.0;
            });
    }

    /// Current objective: |targets|_F^2 + sum_j (u_j - 2 rhs_j) . b_j,
    /// summed in column order.
    pub(crate) fn objective(&self) -> f64 {
        self.targets_frob + self.col_obj.iter().sum::<f64>()
    }

    /// Run every column to its coordinate-descent fixed point, to a stalled
    /// per-column objective when `tol > 0`, or to the cycle cap. Columns
    /// are independent, so each one loops privately; the result is the same
    /// flop-for-flop as lockstep sweeps, without paying for settled columns.
    /// Returns the objective at exit and the largest per-column cycle count.
    pub(crate) fn solve(&mut self, settings: &NnlsSettings) -> Result<(f64, usize)> {
        settings.validate()?;
        let r = self.r;
        let cap = self.capacity;
        let s = &self.s;
        let s_diag = &self.s_diag;
        let rhs_cols = &self.rhs_cols;
        let tol = settings.tol;
        let maxcycles = settings.maxcycles;
        let per_col_cycles: Vec<usize> = self
            .b_cols
            .par_chunks_mut(cap)
            .zip(self.u_rows.par_chunks_mut(cap))
            .zip(self.converged.par_iter_mut())
            .zip(self.col_obj.par_iter_mut())
            .enumerate()
            .map(|(j, (((b, u), converged), obj))| {
                if *converged {
                    return 0;
                }
                let rhs = &rhs_cols[j * cap..j * cap + r];
                let snap = snap_level(rhs);
                let mut cycles = 0;
                let mut prev = *obj;
                let mut since_extrapolation = 0;
                let mut extrapolation_enabled = true;
                let mut rejections = 0usize;
                let mut scratch: Option<ExtrapolationScratch> = None;
                while cycles < maxcycles {
                    let moved = column_pass(b, u, rhs, s, s_diag, r, cap, snap);
                    cycles += 1;
                    since_extrapolation += 1;
                    if moved == 0.0 {
                        *converged = true;
                        break;
                    }
                    if tol > 0.0 {
                        let next = column_contribution(b, u, rhs, r);
                        let stalled = (prev - next).abs() < tol * (1.0 + next.abs());
                        prev = next;
                        if stalled {
                            break;
                        }
                    }
                    if extrapolation_enabled
                        && since_extrapolation >= EXTRAPOLATION_PERIOD
                        && cycles + 3 <= maxcycles
                    {
                        since_extrapolation = 0;
                        let sc = scratch.get_or_insert_with(|| ExtrapolationScratch::new(r));
                        sc.before.copy_from_slice(&b[..r]);
                        if column_pass(b, u, rhs, s, s_diag, r, cap, snap) == 0.0 {
                            cycles += 1;
                            *converged = true;
                            break;
                        }
                        cycles += 1;
                        sc.middle.copy_from_slice(&b[..r]);
                        let step_before = column_pass(b, u, rhs, s, s_diag, r, cap, snap);
                        cycles += 1;
                        if step_before == 0.0 {
                            *converged = true;
                            break;
                        }
                        sc.saved_b.copy_from_slice(&b[..r]);
                        sc.saved_u.copy_from_slice(&u[..r]);
                        let saved_obj = column_contribution(b, u, rhs, r);
                        if !geometric_extrapolation(b, u, &sc.before, &sc.middle, s, r, cap) {
                            continue;
                        }
                        // One plain pass vets the jump. Keep it only when it
                        // genuinely tightened the column (pass step at least
                        // quartered; creep directions are objective-flat, so
                        // objective progress cannot be the yardstick) and
                        // never let the objective rise. Otherwise restore.
                        let step_after = column_pass(b, u, rhs, s, s_diag, r, cap, snap);
                        cycles += 1;
                        let vetted = column_contribution(b, u, rhs, r);
                        let safe = vetted <= saved_obj + 1e-12 * (1.0 + saved_obj.abs());
                        let tightened = step_after <= 0.25 * step_before;
                        if safe && tightened {
                            if step_after == 0.0 {
                                *converged = true;
                                break;
                            }
                        } else {
                            // rejected: restore and try again later; clamp
                            // events make early delta patterns non-geometric
                            // but they settle as coordinates leave the
                            // active set
                            b[..r].copy_from_slice(&sc.saved_b);
                            u[..r].copy_from_slice(&sc.saved_u);
                            rejections += 1;
                            if rejections >= EXTRAPOLATION_MAX_REJECTIONS {
                                extrapolation_enabled = false;
                            }
                        }
                    }
                }
                *obj = column_contribution(b, u, rhs, r);
                cycles
            })
            .collect();
        let cycles = per_col_cycles.into_iter().max().unwrap_or(0);
        Ok((self.objective(), cycles))
    }

    /// Extract the coefficients as a dense r-by-n matrix.
    pub(crate) fn coefficients(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.r, self.n);
        for j in 0..self.n {
            let b = self.b_col(j);
            for i in 0..self.r {
                out.set(i, j, b[i]);
            }
        }
        out
    }
}

/// Everything the projection step keeps between driver iterations: the
/// anchor set A, S = C[A][A], the current coefficients B (also called H),
/// u = S b per column, and the Gram rows CA = C[A][:].
#[derive(Debug, Clone)]
pub struct NnlsWorkspace {
    anchors: Vec<usize>,
    /// CA rows, row i contiguous (length n); the column-major copy lives in
    /// the solver's right-hand sides.
    ca_rows: Vec<f64>,
    n: usize,
    cd: CdSolver,
}

impl NnlsWorkspace {
    /// Empty workspace that can grow to `capacity` anchors.
    pub fn with_capacity(gram: &GramCache, capacity: usize) -> Self {
        let n = gram.n();
        NnlsWorkspace {
            anchors: Vec::with_capacity(capacity),
            ca_rows: Vec::with_capacity(capacity.saturating_mul(n)),
            n,
            cd: CdSolver::with_capacity(capacity, n, gram.frob_sq()),
        }
    }

    /// Workspace over a fixed anchor list, optionally warm started.
    pub fn new(
        gram: &GramCache,
        anchors: &[usize],
        warm_start: Option<&DenseMatrix>,
    ) -> Result<Self> {
        let mut ws = NnlsWorkspace::with_capacity(gram, anchors.len());
        for &a in anchors {
            ws.push_anchor(gram, a)?;
        }
        if let Some(w) = warm_start {
            ws.set_warm_start(w)?;
        }
        Ok(ws)
    }

    /// Add one anchor column; its coefficient row starts at zero, which is
    /// exactly the warm-start convention between driver iterations.
    pub fn push_anchor(&mut self, gram: &GramCache, index: usize) -> Result<()> {
        if index >= self.n {
            return Err(XrayError::AnchorOutOfRange {
                index,
                n_cols: self.n,
            });
        }
        if self.anchors.contains(&index) {
            return Err(XrayError::DuplicateAnchor { index });
        }
        let row = gram.dense_col(index); // row `index` of C by symmetry
        if row.iter().any(|v| !v.is_finite()) {
            return Err(XrayError::NonFinite("gram row at anchor"));
        }
        let diag = gram.col_l2sq()[index];
        if diag <= 0.0 {
            return Err(XrayError::ZeroNormAnchor { index });
        }
        let r = self.anchors.len();
        let mut s_new = Vec::with_capacity(r + 1);
        for &a in &self.anchors {
            s_new.push(row[a]);
        }
        s_new.push(diag);
        self.cd.push_coordinate(&s_new, &row);
        self.ca_rows.extend_from_slice(&row);
        self.anchors.push(index);
        Ok(())
    }

    /// Replace the coefficients with `warm` (must be rank-by-n, finite,
    /// non-negative) and rebuild u.
    pub fn set_warm_start(&mut self, warm: &DenseMatrix) -> Result<()> {
        let r = self.anchors.len();
        if warm.n_rows() != r || warm.n_cols() != self.n {
            return Err(XrayError::InvalidConfig(format!(
                "warm start must be {}x{}, got {}x{}",
                r,
                self.n,
                warm.n_rows(),
                warm.n_cols()
            )));
        }
        if !warm.all_finite() {
            return Err(XrayError::NonFinite("warm start"));
        }
        if warm.data().iter().any(|&v| v < 0.0) {
            return Err(XrayError::InvalidConfig(
                "warm start must be non-negative".into(),
            ));
        }
        for i in 0..r {
            let row = warm.row(i);
            for j in 0..self.n {
                self.cd.b_cols[j * self.cd.capacity + i] = row[j];
            }
        }
        self.cd.recompute_u();
        Ok(())
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn rank(&self) -> usize {
        self.anchors.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n
    }

    /// Coefficient B[i][j] (row i corresponds to `anchors()[i]`).
    #[inline]
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.cd.b_col(j)[i]
    }

    /// Column j of the coefficient matrix, anchors in insertion order.
    #[inline]
    pub fn coefficient_col(&self, j: usize) -> &[f64] {
        self.cd.b_col(j)
    }

    /// Row i of CA = C[A][:].
    #[inline]
    pub fn ca_row(&self, i: usize) -> &[f64] {
        &self.ca_rows[i * self.n..(i + 1) * self.n]
    }

    /// Column j of CA (contiguous).
    #[inline]
    pub fn ca_col(&self, j: usize) -> &[f64] {
        self.cd.rhs_col(j)
    }

    /// S entry by anchor positions.
    pub fn s_entry(&self, i: usize, k: usize) -> f64 {
        self.cd.s_entry(i, k)
    }

    /// One full coordinate-descent cycle over all columns.
    pub fn cycle(&mut self) {
        self.cd.cycle();
    }

    /// Current value of the expanded objective.
    pub fn objective(&self) -> f64 {
        self.cd.objective()
    }

    /// Run cycles until convergence per `settings`. Returns the objective at
    /// exit and the number of cycles performed.
    pub fn solve(&mut self, settings: &NnlsSettings) -> Result<(f64, usize)> {
        self.cd.solve(settings)
    }

    /// Worst relative deviation of the maintained u from a fresh S b.
    pub fn u_drift(&self) -> f64 {
        self.cd.u_drift()
    }

    /// Extract B as a dense rank-by-n matrix.
    pub fn coefficients(&self) -> DenseMatrix {
        self.cd.coefficients()
    }

    /// Unclamped row i of RᵀX, computed as C[i][:] minus B[:, i]ᵀ CA
    /// without materializing R.
    pub fn residual_gram_row(&self, gram: &GramCache, i: usize) -> Vec<f64> {
        let mut out = gram.dense_col(i);
        let b = self.cd.b_col(i);
        for (a, &w) in b.iter().enumerate() {
            if w != 0.0 {
                let row = self.ca_row(a);
                for (o, &c) in out.iter_mut().zip(row) {
                    *o -= w * c;
                }
            }
        }
        out
    }

    /// Squared residual norms of every column, clamped at zero:
    /// C[k][k] - 2 CA[:, k] . b_k + b_kᵀ S b_k.
    pub fn residual_norms_sq(&self, gram: &GramCache) -> Vec<f64> {
        let r = self.rank();
        let cap = self.cd.capacity;
        let l2 = gram.col_l2sq();
        (0..self.n)
            .into_par_iter()
            .map(|j| {
                let b = self.cd.b_col(j);
                let rhs = self.cd.rhs_col(j);
                let mut acc = l2[j] - 2.0 * dot(rhs, b);
                for i in 0..r {
                    let bi = b[i];
                    if bi != 0.0 {
                        let srow = &self.cd.s[i * cap..i * cap + r];
                        acc += bi * dot(srow, b);
                    }
                }
                acc.max(0.0)
            })
            .collect()
    }
}

/// Solution of one projection: the coefficients, the objective value at
/// exit, and how many cycles were spent.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub coefficients: DenseMatrix,
    pub objective: f64,
    pub cycles: usize,
}

/// Solve min over B >= 0 of the squared error against the columns indexed
/// by `anchors`, entirely from the Gram cache.
pub fn nnls_solve(
    gram: &GramCache,
    anchors: &[usize],
    warm_start: Option<&DenseMatrix>,
    settings: &NnlsSettings,
) -> Result<NnlsSolution> {
    settings.validate()?;
    let mut ws = NnlsWorkspace::new(gram, anchors, warm_start)?;
    let (objective, cycles) = ws.solve(settings)?;
    Ok(NnlsSolution {
        coefficients: ws.coefficients(),
        objective,
        cycles,
    })
}
