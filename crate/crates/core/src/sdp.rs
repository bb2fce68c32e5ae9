//! Block-structured semidefinite programs and a deterministic first-order
//! solver.
//!
//! A problem consists of Hermitian positive-semidefinite blocks, affine
//! equality constraints across blocks, and box constraints that pin a linear
//! functional of the blocks to an interval. The solver is an over-relaxed
//! ADMM: one projection onto the affine subspace (dense Cholesky of the row
//! Gram matrix, factored once) and one projection onto the cone product
//! (spectral clipping per block, clamping per interval). Everything is
//! single-threaded and initialized deterministically, so repeated runs
//! produce bitwise-identical iterate logs.
//!
//! Besides plain objective minimization there are two auxiliary forms:
//! a phase-1 problem that softens every constraint uniformly and minimizes
//! the worst violation (used to decide feasibility), and a minimax form that
//! keeps equalities hard and minimizes the uniform scaling factor that the
//! box intervals need to admit a solution.

use crate::eig::{min_eigenvalue, project_psd, LinalgError};
use crate::matrix::CMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 50_000;
/// Worst normalized constraint violation below which a problem counts as
/// feasible.
pub const FEASIBILITY_SLACK: f64 = 1e-6;
pub const MAX_BLOCK_DIM: usize = 128;

const GRAM_REG: f64 = 1e-9;
const RELAXATION: f64 = 1.6;
const RHO_INIT: f64 = 1.0;
const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e4;
const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("problem has no blocks")]
    Empty,
    #[error("block index {0} out of range")]
    BlockOutOfRange(usize),
    #[error("block dimension {0} outside 1..={MAX_BLOCK_DIM}")]
    BadBlockDim(usize),
    #[error("entry ({row},{col}) outside block of dimension {dim}")]
    EntryOutOfRange { row: usize, col: usize, dim: usize },
    #[error("entry ({row},{col}) is below the diagonal; supply the upper triangle")]
    LowerTriangle { row: usize, col: usize },
    #[error("diagonal entry ({0},{0}) must have zero imaginary part")]
    ComplexDiagonal(usize),
    #[error("non-finite coefficient in problem data")]
    NonFinite,
    #[error("box halfwidth must be finite and nonnegative, got {0}")]
    BadHalfwidth(f64),
    #[error("constraint functional is identically zero (rhs {0})")]
    ZeroRow(f64),
    #[error("interval scaling weight must be positive, got {0}")]
    BadWeight(f64),
    #[error("solution shape does not match problem: {0}")]
    ShapeMismatch(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Upper-triangle entry of a Hermitian coefficient matrix.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

impl CoeffEntry {
    pub fn real(row: usize, col: usize, re: f64) -> Self {
        Self { row, col, re, im: 0.0 }
    }
}

/// Contribution of one block to a linear functional: `Tr[F rho]` with `F`
/// Hermitian, given by its upper triangle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearTerm {
    pub block: usize,
    pub entries: Vec<CoeffEntry>,
}

/// A real-valued linear functional of the block tuple.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub terms: Vec<LinearTerm>,
}

impl LinearFunctional {
    /// Functional `Tr[F .]` from a dense Hermitian matrix on one block.
    pub fn from_matrix(block: usize, f: &CMatrix<f64>) -> Self {
        let d = f.rows();
        let mut entries = Vec::new();
        for i in 0..d {
            for j in i..d {
                let z = f[(i, j)];
                if z.re != 0.0 || z.im != 0.0 {
                    entries.push(CoeffEntry { row: i, col: j, re: z.re, im: z.im });
                }
            }
        }
        Self { terms: vec![LinearTerm { block, entries }] }
    }

    /// Evaluates the functional at a tuple of block values.
    pub fn value(&self, blocks: &[CMatrix<f64>]) -> f64 {
        let mut acc = 0.0;
        for term in &self.terms {
            let rho = &blocks[term.block];
            for e in &term.entries {
                if e.row == e.col {
                    acc += e.re * rho[(e.row, e.row)].re;
                } else {
                    let z = rho[(e.row, e.col)];
                    acc += 2.0 * (e.re * z.re + e.im * z.im);
                }
            }
        }
        acc
    }

    fn validate(&self, dims: &[usize]) -> Result<(), SdpError> {
        for term in &self.terms {
            let dim = *dims.get(term.block).ok_or(SdpError::BlockOutOfRange(term.block))?;
            for e in &term.entries {
                if !e.re.is_finite() || !e.im.is_finite() {
                    return Err(SdpError::NonFinite);
                }
                if e.row > e.col {
                    return Err(SdpError::LowerTriangle { row: e.row, col: e.col });
                }
                if e.col >= dim {
                    return Err(SdpError::EntryOutOfRange { row: e.row, col: e.col, dim });
                }
                if e.row == e.col && e.im != 0.0 {
                    return Err(SdpError::ComplexDiagonal(e.row));
                }
            }
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.entries.iter().all(|e| e.re == 0.0 && e.im == 0.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpec {
    pub label: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EqualityConstraint {
    pub label: String,
    pub functional: LinearFunctional,
    pub rhs: f64,
}

/// `|functional(rho) - center| <= halfwidth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxConstraint {
    pub label: String,
    pub functional: LinearFunctional,
    pub center: f64,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpProblem {
    blocks: Vec<BlockSpec>,
    equalities: Vec<EqualityConstraint>,
    boxes: Vec<BoxConstraint>,
    objective: LinearFunctional,
    sense: Sense,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            equalities: Vec::new(),
            boxes: Vec::new(),
            objective: LinearFunctional::default(),
            sense: Sense::Minimize,
        }
    }

    /// Adds a PSD block and returns its index.
    pub fn add_block(&mut self, label: impl Into<String>, dim: usize) -> usize {
        self.blocks.push(BlockSpec { label: label.into(), dim });
        self.blocks.len() - 1
    }

    pub fn add_equality(
        &mut self,
        label: impl Into<String>,
        functional: LinearFunctional,
        rhs: f64,
    ) {
        self.equalities.push(EqualityConstraint { label: label.into(), functional, rhs });
    }

    pub fn add_box(
        &mut self,
        label: impl Into<String>,
        functional: LinearFunctional,
        center: f64,
        halfwidth: f64,
    ) {
        self.boxes.push(BoxConstraint { label: label.into(), functional, center, halfwidth });
    }

    pub fn set_objective(&mut self, objective: LinearFunctional, sense: Sense) {
        self.objective = objective;
        self.sense = sense;
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn equalities(&self) -> &[EqualityConstraint] {
        &self.equalities
    }

    pub fn boxes(&self) -> &[BoxConstraint] {
        &self.boxes
    }

    pub fn objective(&self) -> &LinearFunctional {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::Empty);
        }
        let dims: Vec<usize> = self.blocks.iter().map(|b| b.dim).collect();
        for &d in &dims {
            if d == 0 || d > MAX_BLOCK_DIM {
                return Err(SdpError::BadBlockDim(d));
            }
        }
        for eq in &self.equalities {
            eq.functional.validate(&dims)?;
            if !eq.rhs.is_finite() {
                return Err(SdpError::NonFinite);
            }
            if eq.functional.is_zero() && eq.rhs != 0.0 {
                return Err(SdpError::ZeroRow(eq.rhs));
            }
        }
        for bx in &self.boxes {
            bx.functional.validate(&dims)?;
            if !bx.center.is_finite() {
                return Err(SdpError::NonFinite);
            }
            if !bx.halfwidth.is_finite() || bx.halfwidth < 0.0 {
                return Err(SdpError::BadHalfwidth(bx.halfwidth));
            }
            if bx.functional.is_zero() {
                return Err(SdpError::ZeroRow(bx.center));
            }
        }
        self.objective.validate(&dims)
    }

    pub fn to_json(&self) -> Result<String, SdpError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SdpError> {
        let problem: Self = serde_json::from_str(text)?;
        problem.validate()?;
        Ok(problem)
    }
}

/// Real symmetric embedding of a complex Hermitian matrix:
/// `[[Re M, -Im M], [Im M, Re M]]`, returned with zero imaginary parts.
/// Its spectrum is that of `M` with every eigenvalue doubled in multiplicity.
pub fn hermitian_embed(m: &CMatrix<f64>) -> CMatrix<f64> {
    let d = m.rows();
    assert!(m.is_square(), "hermitian_embed: matrix must be square");
    let mut out = CMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = m[(i, j)];
            out[(i, j)] = Complex::new(z.re, 0.0);
            out[(i + d, j + d)] = Complex::new(z.re, 0.0);
            out[(i, j + d)] = Complex::new(-z.im, 0.0);
            out[(i + d, j)] = Complex::new(z.im, 0.0);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Coordinate layout: each Hermitian d x d block occupies d^2 real coordinates
// (diagonal entries, then sqrt(2)-scaled real and imaginary parts of the
// upper triangle, row by row), an isometry for the Frobenius norm.

struct SvecLayout {
    dim: usize,
    pos: Vec<usize>,
}

impl SvecLayout {
    fn new(dim: usize) -> Self {
        let mut pos = vec![0usize; dim * dim];
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                pos[i * dim + j] = k;
                k += if i == j { 1 } else { 2 };
            }
        }
        Self { dim, pos }
    }

    fn len(&self) -> usize {
        self.dim * self.dim
    }

    fn index(&self, i: usize, j: usize) -> usize {
        self.pos[i * self.dim + j]
    }

    fn mat_to_coords(&self, m: &CMatrix<f64>, out: &mut [f64]) {
        for i in 0..self.dim {
            out[self.index(i, i)] = m[(i, i)].re;
            for j in (i + 1)..self.dim {
                let k = self.index(i, j);
                out[k] = SQRT2 * m[(i, j)].re;
                out[k + 1] = SQRT2 * m[(i, j)].im;
            }
        }
    }

    fn coords_to_mat(&self, s: &[f64]) -> CMatrix<f64> {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            m[(i, i)] = Complex::new(s[self.index(i, i)], 0.0);
            for j in (i + 1)..self.dim {
                let k = self.index(i, j);
                let z = Complex::new(s[k] / SQRT2, s[k + 1] / SQRT2);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Solver-facing types.

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative tolerance for primal residual, dual residual, and gap.
    pub tol: f64,
    pub max_iterations: usize,
    /// Convergence is tested every this many iterations.
    pub check_every: usize,
    /// Record an iterate every this many iterations (0 disables the log).
    pub log_every: usize,
    /// Skip the feasibility phase inside [`solve`].
    pub assume_feasible: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            check_every: 25,
            log_every: 0,
            assume_feasible: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible { slack: f64 },
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::MaxIterations => write!(f, "max_iterations"),
            SolveStatus::Infeasible { slack } => write!(f, "infeasible(slack={slack:.3e})"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    /// Relative objective gap; NaN when no valid dual bound was available.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IterateRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    /// Certified bound in the problem's sense; NaN when unavailable.
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Objective value in the problem's sense; NaN when infeasible.
    pub objective: f64,
    /// Certified bound on the optimum from the final dual estimate
    /// (a lower bound when minimizing, upper when maximizing); NaN when no
    /// valid bound was available.
    pub dual_objective: f64,
    pub blocks: Vec<CMatrix<f64>>,
    /// Values of the box functionals at the solution.
    pub box_values: Vec<f64>,
    /// Multipliers for the equality constraints, in original row units, for
    /// the internal minimization form: `C + sum_r mu_r F_r` is PSD at an
    /// optimum and the dual value is `-sum_r mu_r b_r` plus box terms.
    pub eq_duals: Vec<f64>,
    pub box_duals: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub log: Vec<IterateRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct PhaseOneOutcome {
    /// Minimized worst violation over unit-normalized constraints.
    pub slack: f64,
    pub feasible: bool,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Projection onto the weighted max-norm epigraph {(t, x) : |x_i| <= w_i t}.

/// Projects `(head, tail)` onto the epigraph in place and returns the new
/// head. Weights must be strictly positive.
pub(crate) fn project_weighted_linf(head: f64, tail: &mut [f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(tail.len(), weights.len());
    if tail.is_empty() {
        return head.max(0.0);
    }
    let inside =
        head >= 0.0 && tail.iter().zip(weights).all(|(&v, &w)| v.abs() <= w * head);
    if inside {
        return head;
    }
    // Minimize (t - head)^2 + sum (x_i - v_i)^2 with x_i = clamp(v_i, +-w_i t):
    // on the segment where exactly the components with |v_i|/w_i > t are
    // clamped, stationarity gives t (1 + sum w^2) = head + sum w |v|.
    let mut order: Vec<usize> = (0..tail.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = tail[a].abs() / weights[a];
        let rb = tail[b].abs() / weights[b];
        rb.partial_cmp(&ra).expect("finite ratios")
    });
    let mut num = head;
    let mut den = 1.0;
    let mut t = head.max(0.0);
    for k in 0..=order.len() {
        let seg_hi = if k == 0 {
            f64::INFINITY
        } else {
            let i = order[k - 1];
            tail[i].abs() / weights[i]
        };
        let seg_lo = if k == order.len() {
            0.0
        } else {
            let i = order[k];
            tail[i].abs() / weights[i]
        };
        let cand = (num / den).max(0.0);
        if cand >= seg_lo && cand <= seg_hi {
            t = cand;
            break;
        }
        if k < order.len() {
            let i = order[k];
            num += weights[i] * tail[i].abs();
            den += weights[i] * weights[i];
        }
        if k == order.len() {
            t = (num / den).max(0.0);
        }
    }
    for (v, &w) in tail.iter_mut().zip(weights) {
        let cap = w * t;
        *v = v.clamp(-cap, cap);
    }
    t
}

// ---------------------------------------------------------------------------
// Compiled form.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CompileForm {
    Objective,
    PhaseOne,
    Minimax,
}

enum Section {
    Psd { block: usize, offset: usize, dim: usize },
    Interval { coord: usize, lo: f64, hi: f64, center: f64, halfwidth: f64 },
    Epigraph { head: usize, tail_offset: usize, tail_len: usize, weights: Vec<f64> },
}

#[derive(Clone, Copy)]
enum RowKind {
    Equality(usize),
    BoxLink(usize),
}

struct Row {
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: f64,
    /// Normalization divisor applied to the original row.
    norm: f64,
    kind: RowKind,
}

struct TraceRowInfo {
    row: usize,
    /// Normalized coefficient shared by all diagonal coordinates.
    coeff: f64,
}

struct SavedState {
    z: Vec<f64>,
    u: Vec<f64>,
    rho: f64,
}

struct Cholesky {
    m: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn factor(g: &[f64], m: usize) -> Self {
        let mut l = vec![0.0; m * m];
        for j in 0..m {
            for i in j..m {
                let mut s = g[i * m + j];
                for k in 0..j {
                    s -= l[i * m + k] * l[j * m + k];
                }
                if i == j {
                    assert!(s > 0.0, "regularized Gram matrix must be positive definite");
                    l[j * m + j] = s.sqrt();
                } else {
                    l[i * m + j] = s / l[j * m + j];
                }
            }
        }
        Self { m, l }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * m + k] * x[k];
            }
            x[i] = s / self.l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in (i + 1)..m {
                s -= self.l[k * m + i] * x[k];
            }
            x[i] = s / self.l[i * m + i];
        }
    }
}

pub(crate) struct RunOutcome {
    pub(crate) z: Vec<f64>,
    pub(crate) nu: Vec<f64>,
    pub(crate) iterations: usize,
    pub(crate) pres: f64,
    pub(crate) dres: f64,
    pub(crate) gap: f64,
    pub(crate) primal: f64,
    pub(crate) dual: f64,
    pub(crate) converged: bool,
    pub(crate) log: Vec<IterateRecord>,
}

pub(crate) struct CompiledSdp {
    form: CompileForm,
    n_vars: usize,
    sections: Vec<Section>,
    rows: Vec<Row>,
    cost: Vec<f64>,
    sense_sign: f64,
    layouts: Vec<SvecLayout>,
    block_offsets: Vec<usize>,
    trace_rows: Vec<Option<TraceRowInfo>>,
    head: Option<usize>,
    b_norm: f64,
    chol: Option<Cholesky>,
    state: Option<SavedState>,
}

fn functional_coords(
    f: &LinearFunctional,
    layouts: &[SvecLayout],
    offsets: &[usize],
) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for term in &f.terms {
        let layout = &layouts[term.block];
        let base = offsets[term.block];
        for e in &term.entries {
            if e.row == e.col {
                *acc.entry(base + layout.index(e.row, e.row)).or_insert(0.0) += e.re;
            } else {
                let k = base + layout.index(e.row, e.col);
                *acc.entry(k).or_insert(0.0) += SQRT2 * e.re;
                *acc.entry(k + 1).or_insert(0.0) += SQRT2 * e.im;
            }
        }
    }
    acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
}

/// Detects a functional of the form `v * Tr[.]` on a single block; returns
/// `(block, v)`.
fn identity_functional(
    f: &LinearFunctional,
    dims: &[usize],
) -> Option<(usize, f64)> {
    let mut seen: Option<(usize, Vec<f64>)> = None;
    for term in &f.terms {
        if term.entries.is_empty() {
            continue;
        }
        match &mut seen {
            None => {
                let mut diag = vec![0.0; dims[term.block]];
                for e in &term.entries {
                    if e.row != e.col || e.im != 0.0 {
                        return None;
                    }
                    diag[e.row] += e.re;
                }
                seen = Some((term.block, diag));
            }
            Some(_) => return None,
        }
    }
    let (block, diag) = seen?;
    let v = diag[0];
    if v == 0.0 || diag.iter().any(|&x| (x - v).abs() > 1e-12 * v.abs()) {
        return None;
    }
    Some((block, v))
}

impl CompiledSdp {
    pub(crate) fn compile(problem: &SdpProblem, form: CompileForm) -> Result<Self, SdpError> {
        problem.validate()?;
        let dims: Vec<usize> = problem.blocks.iter().map(|b| b.dim).collect();
        let layouts: Vec<SvecLayout> = dims.iter().map(|&d| SvecLayout::new(d)).collect();
        let mut block_offsets = Vec::with_capacity(dims.len());
        let mut n_vars = 0usize;
        for layout in &layouts {
            block_offsets.push(n_vars);
            n_vars += layout.len();
        }

        let n_boxes = problem.boxes.len();
        let t_offset = n_vars;
        if form != CompileForm::Minimax {
            n_vars += n_boxes;
        }
        let (head, slack_offset, n_slack) = match form {
            CompileForm::Objective => (None, 0, 0),
            CompileForm::PhaseOne => {
                let h = n_vars;
                n_vars += 1;
                let count = problem.equalities.len() + n_boxes;
                n_vars += count;
                (Some(h), h + 1, count)
            }
            CompileForm::Minimax => {
                let h = n_vars;
                n_vars += 1;
                n_vars += n_boxes;
                (Some(h), h + 1, n_boxes)
            }
        };

        let mut rows: Vec<Row> = Vec::new();
        let mut trace_rows: Vec<Option<TraceRowInfo>> = (0..dims.len()).map(|_| None).collect();
        let mut slack_cursor = slack_offset;
        let mut weights: Vec<f64> = Vec::new();

        for (i, eq) in problem.equalities.iter().enumerate() {
            let coords = functional_coords(&eq.functional, &layouts, &block_offsets);
            let norm_sq: f64 = coords.iter().map(|&(_, v)| v * v).sum();
            if norm_sq == 0.0 {
                // Zero row with zero rhs: trivially satisfied. A phase-1
                // slack slot may stay unused; it projects to zero harmlessly.
                if form == CompileForm::PhaseOne {
                    slack_cursor += 1;
                    weights.push(1.0);
                }
                continue;
            }
            let eta = norm_sq.sqrt();
            let mut cols: Vec<usize> = coords.iter().map(|&(c, _)| c).collect();
            let mut vals: Vec<f64> = coords.iter().map(|&(_, v)| v / eta).collect();
            if let Some((block, v)) = identity_functional(&eq.functional, &dims) {
                if trace_rows[block].is_none() {
                    trace_rows[block] = Some(TraceRowInfo { row: rows.len(), coeff: v / eta });
                }
            }
            if form == CompileForm::PhaseOne {
                cols.push(slack_cursor);
                vals.push(-1.0);
                slack_cursor += 1;
                weights.push(1.0);
            }
            rows.push(Row { cols, vals, rhs: eq.rhs / eta, norm: eta, kind: RowKind::Equality(i) });
        }

        for (i, bx) in problem.boxes.iter().enumerate() {
            let coords = functional_coords(&bx.functional, &layouts, &block_offsets);
            let norm_sq: f64 = coords.iter().map(|&(_, v)| v * v).sum();
            if norm_sq == 0.0 {
                return Err(SdpError::ZeroRow(bx.center));
            }
            match form {
                CompileForm::Minimax => {
                    let eta = norm_sq.sqrt();
                    if bx.halfwidth <= 0.0 {
                        return Err(SdpError::BadWeight(bx.halfwidth));
                    }
                    let mut cols: Vec<usize> = coords.iter().map(|&(c, _)| c).collect();
                    let mut vals: Vec<f64> = coords.iter().map(|&(_, v)| v / eta).collect();
                    cols.push(slack_cursor);
                    vals.push(-1.0);
                    slack_cursor += 1;
                    weights.push(bx.halfwidth / eta);
                    rows.push(Row {
                        cols,
                        vals,
                        rhs: bx.center / eta,
                        norm: eta,
                        kind: RowKind::BoxLink(i),
                    });
                }
                _ => {
                    let eta = (norm_sq + 1.0).sqrt();
                    let mut cols: Vec<usize> = coords.iter().map(|&(c, _)| c).collect();
                    let mut vals: Vec<f64> = coords.iter().map(|&(_, v)| v / eta).collect();
                    cols.push(t_offset + i);
                    vals.push(-1.0 / eta);
                    if form == CompileForm::PhaseOne {
                        cols.push(slack_cursor);
                        vals.push(-1.0);
                        slack_cursor += 1;
                        weights.push(1.0);
                    }
                    rows.push(Row { cols, vals, rhs: 0.0, norm: eta, kind: RowKind::BoxLink(i) });
                }
            }
        }
        debug_assert_eq!(slack_cursor, slack_offset + n_slack);

        let mut sections: Vec<Section> = Vec::new();
        for (b, layout) in layouts.iter().enumerate() {
            sections.push(Section::Psd { block: b, offset: block_offsets[b], dim: layout.dim });
        }
        if form != CompileForm::Minimax {
            for (i, bx) in problem.boxes.iter().enumerate() {
                sections.push(Section::Interval {
                    coord: t_offset + i,
                    lo: bx.center - bx.halfwidth,
                    hi: bx.center + bx.halfwidth,
                    center: bx.center,
                    halfwidth: bx.halfwidth,
                });
            }
        }
        if let Some(h) = head {
            sections.push(Section::Epigraph {
                head: h,
                tail_offset: slack_offset,
                tail_len: n_slack,
                weights,
            });
        }

        let mut cost = vec![0.0; n_vars];
        let sense_sign = match form {
            CompileForm::Objective => {
                let sign = match problem.sense {
                    Sense::Minimize => 1.0,
                    Sense::Maximize => -1.0,
                };
                for (c, v) in functional_coords(&problem.objective, &layouts, &block_offsets) {
                    cost[c] = sign * v;
                }
                sign
            }
            _ => {
                cost[head.expect("auxiliary forms have a head")] = 1.0;
                1.0
            }
        };

        let b_norm = rows.iter().map(|r| r.rhs * r.rhs).sum::<f64>().sqrt();
        Ok(Self {
            form,
            n_vars,
            sections,
            rows,
            cost,
            sense_sign,
            layouts,
            block_offsets,
            trace_rows,
            head,
            b_norm,
            chol: None,
            state: None,
        })
    }

    /// Rescales every interval to `center +- alpha * halfwidth`. Only
    /// meaningful for the phase-1 form, where intervals are the box bounds.
    pub(crate) fn set_interval_scale(&mut self, alpha: f64) {
        assert!(self.form == CompileForm::PhaseOne, "interval scaling is a phase-1 operation");
        assert!(alpha >= 0.0 && alpha.is_finite());
        for s in &mut self.sections {
            if let Section::Interval { lo, hi, center, halfwidth, .. } = s {
                *lo = *center - alpha * *halfwidth;
                *hi = *center + alpha * *halfwidth;
            }
        }
    }

    fn ensure_factorization(&mut self) {
        if self.chol.is_some() || self.rows.is_empty() {
            return;
        }
        let m = self.rows.len();
        let mut g = vec![0.0; m * m];
        let mut scratch = vec![0.0; self.n_vars];
        for i in 0..m {
            for (c, v) in self.rows[i].cols.iter().zip(&self.rows[i].vals) {
                scratch[*c] = *v;
            }
            for j in i..m {
                let mut dot = 0.0;
                for (c, v) in self.rows[j].cols.iter().zip(&self.rows[j].vals) {
                    dot += scratch[*c] * v;
                }
                if i == j {
                    dot += GRAM_REG;
                }
                g[i * m + j] = dot;
                g[j * m + i] = dot;
            }
            for (c, _) in self.rows[i].cols.iter().zip(&self.rows[i].vals) {
                scratch[*c] = 0.0;
            }
        }
        self.chol = Some(Cholesky::factor(&g, m));
    }

    fn cold_start(&self, z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        for s in &self.sections {
            match s {
                Section::Psd { offset, dim, block } => {
                    let layout = &self.layouts[*block];
                    for i in 0..*dim {
                        z[offset + layout.index(i, i)] = 1.0 / *dim as f64;
                    }
                }
                Section::Interval { coord, lo, hi, .. } => z[*coord] = 0.5 * (lo + hi),
                Section::Epigraph { head, .. } => z[*head] = 1.0,
            }
        }
    }

    fn project_cone(&self, input: &[f64], z: &mut [f64]) {
        z.copy_from_slice(input);
        for s in &self.sections {
            match s {
                Section::Psd { offset, dim, block } => {
                    if *dim == 1 {
                        z[*offset] = z[*offset].max(0.0);
                    } else {
                        let layout = &self.layouts[*block];
                        let m = layout.coords_to_mat(&z[*offset..offset + layout.len()]);
                        let p = project_psd(&m).expect("projection input is Hermitian");
                        layout.mat_to_coords(&p, &mut z[*offset..offset + layout.len()]);
                    }
                }
                Section::Interval { coord, lo, hi, .. } => {
                    z[*coord] = z[*coord].clamp(*lo, *hi);
                }
                Section::Epigraph { head, tail_offset, tail_len, weights } => {
                    let h = z[*head];
                    let (lohalf, hihalf) = z.split_at_mut(*tail_offset);
                    let _ = lohalf;
                    let tail = &mut hihalf[..*tail_len];
                    let new_head = project_weighted_linf(h, tail, weights);
                    z[*head] = new_head;
                }
            }
        }
    }

    fn apply_rows(&self, y: &[f64], out: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = -row.rhs;
            for (c, v) in row.cols.iter().zip(&row.vals) {
                acc += v * y[*c];
            }
            out[r] = acc;
        }
    }

    fn apply_rows_transpose(&self, lam: &[f64], out: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            let l = lam[r];
            if l == 0.0 {
                continue;
            }
            for (c, v) in row.cols.iter().zip(&row.vals) {
                out[*c] += v * l;
            }
        }
    }

    /// Certified dual bound for the internal minimization; NaN when the
    /// reduced cost is not dual-feasible and cannot be repaired by shifting
    /// a trace-row multiplier.
    fn dual_value(&self, nu: &[f64], reduced: &mut [f64]) -> f64 {
        reduced.copy_from_slice(&self.cost);
        self.apply_rows_transpose(nu, reduced);
        let mut beta = 1.0;
        if self.form == CompileForm::Minimax {
            // The multipliers can be shrunk uniformly to restore epigraph
            // dual feasibility: the head carries no row coefficients, so its
            // reduced cost stays fixed while the tail scales down, and PSD
            // sections stay PSD under a positive scaling.
            for s in &self.sections {
                if let Section::Epigraph { head, tail_offset, tail_len, weights } = s {
                    let sigma = reduced[*head];
                    let need: f64 = (0..*tail_len)
                        .map(|i| weights[i] * reduced[tail_offset + i].abs())
                        .sum();
                    if need > sigma {
                        if sigma <= 0.0 || !need.is_finite() {
                            return f64::NAN;
                        }
                        beta = sigma / need * (1.0 - 1e-12);
                    }
                }
            }
            if beta != 1.0 {
                for (r, &c) in reduced.iter_mut().zip(&self.cost) {
                    *r = c + beta * (*r - c);
                }
            }
        }
        let mut d = -beta * self.rows.iter().zip(nu).map(|(r, &v)| r.rhs * v).sum::<f64>();
        for s in &self.sections {
            match s {
                Section::Interval { coord, lo, hi, .. } => {
                    let r = reduced[*coord];
                    d += (r * lo).min(r * hi);
                }
                Section::Psd { offset, dim, block } => {
                    let (lam_min, scale) = if *dim == 1 {
                        (reduced[*offset], 1.0 + reduced[*offset].abs())
                    } else {
                        let layout = &self.layouts[*block];
                        let m = layout.coords_to_mat(&reduced[*offset..offset + layout.len()]);
                        let scale = 1.0 + m.frobenius_norm();
                        match min_eigenvalue(&m) {
                            Ok(v) => (v, scale),
                            Err(_) => return f64::NAN,
                        }
                    };
                    if lam_min < 0.0 {
                        // Shifting a trace-row multiplier moves only this
                        // block's reduced cost (by a multiple of the
                        // identity), so it can repair dual feasibility in the
                        // forms whose trace rows carry no slack coordinate.
                        // The full violation is paid for — clamping small
                        // negatives would overstate the certificate.
                        if self.form != CompileForm::PhaseOne {
                            if let Some(info) = &self.trace_rows[*block] {
                                d += self.rows[info.row].rhs * lam_min / info.coeff;
                                continue;
                            }
                        }
                        if lam_min < -1e-7 * scale {
                            return f64::NAN;
                        }
                    }
                }
                Section::Epigraph { head, tail_offset, tail_len, weights } => {
                    let sigma = reduced[*head];
                    let need: f64 = (0..*tail_len)
                        .map(|i| weights[i] * reduced[tail_offset + i].abs())
                        .sum();
                    if sigma < need - 1e-7 * (1.0 + need) {
                        return f64::NAN;
                    }
                }
            }
        }
        d
    }

    pub(crate) fn run(
        &mut self,
        opts: &SolverOptions,
        stop_head_below: Option<f64>,
        warm: bool,
    ) -> RunOutcome {
        self.ensure_factorization();
        let n = self.n_vars;
        let m = self.rows.len();

        let mut z = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut rho = RHO_INIT;
        let warm_ok = warm
            && self
                .state
                .as_ref()
                .map(|s| s.z.len() == n && s.u.len() == n)
                .unwrap_or(false);
        if warm_ok {
            let s = self.state.as_ref().unwrap();
            z.copy_from_slice(&s.z);
            u.copy_from_slice(&s.u);
            rho = s.rho;
        } else {
            self.cold_start(&mut z);
        }

        let mut v = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut zin = vec![0.0; n];
        let mut z_prev = vec![0.0; n];
        let mut lam = vec![0.0; m];
        let mut nu = vec![0.0; m];
        let mut reduced = vec![0.0; n];
        let mut log = Vec::new();

        let mut pres = f64::NAN;
        let mut dres = f64::NAN;
        let mut gap = f64::NAN;
        let mut primal = f64::NAN;
        let mut dual = f64::NAN;
        let mut converged = false;
        let mut iterations = 0;
        let mut stall_count = 0usize;
        let mut last_primal = f64::NAN;
        // Penalty rebalancing happens at exponentially spaced iterations so
        // the iteration is eventually a fixed-parameter contraction; periodic
        // rescaling can otherwise sustain a limit cycle.
        let mut next_adapt = 100usize;

        for iter in 1..=opts.max_iterations {
            iterations = iter;
            // Affine step: x = Proj{Ay=b}(z - u - c/rho).
            for i in 0..n {
                v[i] = z[i] - u[i] - self.cost[i] / rho;
            }
            if m > 0 {
                self.apply_rows(&v, &mut lam);
                self.chol.as_ref().unwrap().solve_in_place(&mut lam);
                x.copy_from_slice(&v);
                for (r, row) in self.rows.iter().enumerate() {
                    let l = lam[r];
                    for (c, val) in row.cols.iter().zip(&row.vals) {
                        x[*c] -= val * l;
                    }
                }
            } else {
                x.copy_from_slice(&v);
            }
            // Over-relaxed cone step.
            z_prev.copy_from_slice(&z);
            for i in 0..n {
                zin[i] = RELAXATION * x[i] + (1.0 - RELAXATION) * z_prev[i] + u[i];
            }
            self.project_cone(&zin, &mut z);
            for i in 0..n {
                u[i] += RELAXATION * x[i] + (1.0 - RELAXATION) * z_prev[i] - z[i];
            }

            let check = iter % opts.check_every == 0 || iter == opts.max_iterations;
            if !check {
                continue;
            }

            let mut dz = 0.0;
            let mut znorm = 0.0;
            for i in 0..n {
                dz += (z[i] - z_prev[i]) * (z[i] - z_prev[i]);
                znorm += z[i] * z[i];
            }
            dres = rho * dz.sqrt() / (1.0 + znorm.sqrt());
            if m > 0 {
                self.apply_rows(&z, &mut nu);
                pres = nu.iter().map(|r| r * r).sum::<f64>().sqrt() / (1.0 + self.b_norm);
            } else {
                pres = 0.0;
            }
            primal = self.cost.iter().zip(&z).map(|(c, y)| c * y).sum();
            for (d, &l) in nu.iter_mut().zip(&lam) {
                *d = rho * l;
            }
            dual = self.dual_value(&nu, &mut reduced);
            gap = if dual.is_nan() {
                f64::NAN
            } else {
                (primal - dual).abs() / (1.0 + primal.abs() + dual.abs())
            };

            if opts.log_every > 0 && (iter % opts.log_every == 0 || iter == opts.max_iterations)
            {
                log.push(IterateRecord {
                    iteration: iter,
                    primal_objective: self.sense_sign * primal,
                    dual_objective: self.sense_sign * dual,
                    primal_residual: pres,
                    dual_residual: dres,
                    rho,
                });
            }

            if (last_primal - primal).abs() <= 1e-8 * (1.0 + primal.abs()) {
                stall_count += 1;
            } else {
                stall_count = 0;
            }
            last_primal = primal;

            let residuals_ok = pres <= opts.tol && dres <= opts.tol;
            if let (Some(threshold), Some(h), true) = (stop_head_below, self.head, residuals_ok)
            {
                if z[h] <= threshold {
                    converged = true;
                    break;
                }
            }
            if residuals_ok && (gap <= opts.tol || (gap.is_nan() && stall_count >= 4)) {
                converged = true;
                break;
            }

            if iter >= next_adapt && dres > 0.0 && pres > 0.0 {
                next_adapt = iter.saturating_mul(2);
                let factor = (pres / dres).sqrt();
                if factor > 5f64.sqrt() || factor < 1.0 / 5f64.sqrt() {
                    let new_rho = (rho * factor).clamp(RHO_MIN, RHO_MAX);
                    if new_rho != rho {
                        let scale = rho / new_rho;
                        u.iter_mut().for_each(|ui| *ui *= scale);
                        rho = new_rho;
                    }
                }
            }
        }

        for (d, &l) in nu.iter_mut().zip(&lam) {
            *d = rho * l;
        }
        self.state = Some(SavedState { z: z.clone(), u, rho });
        RunOutcome {
            z,
            nu,
            iterations,
            pres,
            dres,
            gap,
            primal: self.sense_sign * primal,
            dual: self.sense_sign * dual,
            converged,
            log,
        }
    }

    pub(crate) fn head_value(&self, z: &[f64]) -> f64 {
        z[self.head.expect("head coordinate requires an auxiliary form")]
    }

    fn extract_blocks(&self, z: &[f64]) -> Vec<CMatrix<f64>> {
        self.layouts
            .iter()
            .zip(&self.block_offsets)
            .map(|(layout, &off)| layout.coords_to_mat(&z[off..off + layout.len()]))
            .collect()
    }

    fn extract_box_values(&self, z: &[f64]) -> Vec<f64> {
        self.sections
            .iter()
            .filter_map(|s| match s {
                Section::Interval { coord, .. } => Some(z[*coord]),
                _ => None,
            })
            .collect()
    }

    fn split_duals(&self, nu: &[f64], n_eq: usize, n_box: usize) -> (Vec<f64>, Vec<f64>) {
        let mut eq = vec![0.0; n_eq];
        let mut boxes = vec![0.0; n_box];
        for (r, row) in self.rows.iter().enumerate() {
            match row.kind {
                RowKind::Equality(i) => eq[i] = nu[r] / row.norm,
                RowKind::BoxLink(i) => boxes[i] = nu[r] / row.norm,
            }
        }
        (eq, boxes)
    }
}

// ---------------------------------------------------------------------------
// Public drivers.

/// Minimizes the worst normalized constraint violation; values at or below
/// [`FEASIBILITY_SLACK`] certify feasibility for practical purposes.
pub fn phase1_feasibility(
    problem: &SdpProblem,
    opts: &SolverOptions,
) -> Result<PhaseOneOutcome, SdpError> {
    let mut compiled = CompiledSdp::compile(problem, CompileForm::PhaseOne)?;
    let outcome = compiled.run(opts, Some(0.5 * FEASIBILITY_SLACK), false);
    let slack = compiled.head_value(&outcome.z);
    Ok(PhaseOneOutcome {
        slack,
        feasible: slack <= FEASIBILITY_SLACK,
        iterations: outcome.iterations,
    })
}

/// Feasibility phase followed by objective optimization.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<Solution, SdpError> {
    let mut phase1_iters = 0;
    if !opts.assume_feasible {
        let mut compiled = CompiledSdp::compile(problem, CompileForm::PhaseOne)?;
        let outcome = compiled.run(opts, Some(0.5 * FEASIBILITY_SLACK), false);
        phase1_iters = outcome.iterations;
        let slack = compiled.head_value(&outcome.z);
        if slack > FEASIBILITY_SLACK {
            return Ok(Solution {
                status: SolveStatus::Infeasible { slack },
                objective: f64::NAN,
                dual_objective: f64::NAN,
                blocks: compiled.extract_blocks(&outcome.z),
                box_values: compiled.extract_box_values(&outcome.z),
                eq_duals: vec![0.0; problem.equalities.len()],
                box_duals: vec![0.0; problem.boxes.len()],
                residuals: Residuals {
                    primal: outcome.pres,
                    dual: outcome.dres,
                    gap: outcome.gap,
                },
                iterations: outcome.iterations,
                log: outcome.log,
            });
        }
    }

    let mut compiled = CompiledSdp::compile(problem, CompileForm::Objective)?;
    let outcome = compiled.run(opts, None, false);
    let (eq_duals, box_duals) =
        compiled.split_duals(&outcome.nu, problem.equalities.len(), problem.boxes.len());
    let blocks = compiled.extract_blocks(&outcome.z);
    let status =
        if outcome.converged { SolveStatus::Optimal } else { SolveStatus::MaxIterations };
    Ok(Solution {
        status,
        objective: outcome.primal,
        dual_objective: outcome.dual,
        blocks,
        box_values: compiled.extract_box_values(&outcome.z),
        eq_duals,
        box_duals,
        residuals: Residuals { primal: outcome.pres, dual: outcome.dres, gap: outcome.gap },
        iterations: phase1_iters + outcome.iterations,
        log: outcome.log,
    })
}

pub(crate) struct MinimaxOutcome {
    pub(crate) alpha: f64,
    pub(crate) converged: bool,
}

/// Keeps equalities hard and minimizes the uniform factor by which all box
/// halfwidths must be scaled to admit a feasible point.
pub(crate) fn solve_minimax(
    problem: &SdpProblem,
    opts: &SolverOptions,
) -> Result<MinimaxOutcome, SdpError> {
    let mut compiled = CompiledSdp::compile(problem, CompileForm::Minimax)?;
    let outcome = compiled.run(opts, None, false);
    Ok(MinimaxOutcome { alpha: compiled.head_value(&outcome.z), converged: outcome.converged })
}

/// Feasibility oracle over interval scalings, with warm starts between
/// queries. Built once per problem; each query rescales the intervals.
pub(crate) struct FeasibilityProbe {
    compiled: CompiledSdp,
}

impl FeasibilityProbe {
    pub(crate) fn new(problem: &SdpProblem) -> Result<Self, SdpError> {
        Ok(Self { compiled: CompiledSdp::compile(problem, CompileForm::PhaseOne)? })
    }

    /// Minimized worst violation when every box is scaled to
    /// `center +- alpha * halfwidth`.
    pub(crate) fn slack_at(&mut self, alpha: f64, opts: &SolverOptions) -> f64 {
        self.compiled.set_interval_scale(alpha);
        let outcome = self.compiled.run(opts, Some(0.5 * FEASIBILITY_SLACK), true);
        self.compiled.head_value(&outcome.z)
    }
}

/// Recomputes optimality diagnostics from a (possibly hand-built) solution:
/// worst primal violation, dual-feasibility violation of the supplied
/// multipliers, and the relative objective gap.
pub fn kkt_residuals(problem: &SdpProblem, sol: &Solution) -> Result<Residuals, SdpError> {
    let compiled = CompiledSdp::compile(problem, CompileForm::Objective)?;
    if sol.blocks.len() != problem.blocks.len() {
        return Err(SdpError::ShapeMismatch(format!(
            "{} blocks, expected {}",
            sol.blocks.len(),
            problem.blocks.len()
        )));
    }
    for (b, spec) in sol.blocks.iter().zip(&problem.blocks) {
        if b.rows() != spec.dim || b.cols() != spec.dim {
            return Err(SdpError::ShapeMismatch(format!(
                "block dimension {} x {}, expected {}",
                b.rows(),
                b.cols(),
                spec.dim
            )));
        }
    }
    if sol.box_values.len() != problem.boxes.len()
        || sol.eq_duals.len() != problem.equalities.len()
        || sol.box_duals.len() != problem.boxes.len()
    {
        return Err(SdpError::ShapeMismatch("box/dual vector lengths".into()));
    }

    let mut z = vec![0.0; compiled.n_vars];
    for ((layout, &off), block) in
        compiled.layouts.iter().zip(&compiled.block_offsets).zip(&sol.blocks)
    {
        layout.mat_to_coords(&block.hermitize(), &mut z[off..off + layout.len()]);
    }
    let mut interval_idx = 0;
    let mut interval_viol = 0.0f64;
    for s in &compiled.sections {
        if let Section::Interval { coord, lo, hi, .. } = s {
            let t = sol.box_values[interval_idx];
            z[*coord] = t;
            interval_viol = interval_viol.max(lo - t).max(t - hi);
            interval_idx += 1;
        }
    }

    let m = compiled.rows.len();
    let mut resid = vec![0.0; m];
    compiled.apply_rows(&z, &mut resid);
    let affine = resid.iter().map(|r| r * r).sum::<f64>().sqrt() / (1.0 + compiled.b_norm);
    let mut cone_viol = interval_viol.max(0.0);
    for block in &sol.blocks {
        let lam_min = min_eigenvalue(&block.hermitize())?;
        cone_viol = cone_viol.max(-lam_min);
    }
    let primal = affine.max(cone_viol);

    let mut nu = vec![0.0; m];
    for (r, row) in compiled.rows.iter().enumerate() {
        nu[r] = match row.kind {
            RowKind::Equality(i) => sol.eq_duals[i] * row.norm,
            RowKind::BoxLink(i) => sol.box_duals[i] * row.norm,
        };
    }
    let mut reduced = compiled.cost.clone();
    compiled.apply_rows_transpose(&nu, &mut reduced);
    let mut dual_viol = 0.0f64;
    let mut dual_value = -compiled.rows.iter().zip(&nu).map(|(r, &v)| r.rhs * v).sum::<f64>();
    for s in &compiled.sections {
        match s {
            Section::Psd { offset, dim, block } => {
                let lam_min = if *dim == 1 {
                    reduced[*offset]
                } else {
                    let layout = &compiled.layouts[*block];
                    min_eigenvalue(&layout.coords_to_mat(&reduced[*offset..offset + layout.len()]))?
                };
                dual_viol = dual_viol.max(-lam_min);
            }
            Section::Interval { coord, lo, hi, .. } => {
                let r = reduced[*coord];
                dual_value += (r * lo).min(r * hi);
            }
            Section::Epigraph { .. } => unreachable!("objective form has no epigraph"),
        }
    }
    let pobj: f64 = compiled.cost.iter().zip(&z).map(|(c, y)| c * y).sum();
    let gap = (pobj - dual_value).abs() / (1.0 + pobj.abs() + dual_value.abs());
    Ok(Residuals { primal, dual: dual_viol, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::hermitian_eig;
    use crate::pauli::pauli_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix<f64> {
        let mut m = CMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = Complex::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..d {
                let z = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    fn trace_functional(block: usize, dim: usize) -> LinearFunctional {
        LinearFunctional {
            terms: vec![LinearTerm {
                block,
                entries: (0..dim).map(|i| CoeffEntry::real(i, i, 1.0)).collect(),
            }],
        }
    }

    fn pauli_expectation_problem(word: &str, sense: Sense) -> SdpProblem {
        let mut p = SdpProblem::new();
        let dim = 1 << word.len();
        let b = p.add_block("rho", dim);
        p.add_equality("unit trace", trace_functional(b, dim), 1.0);
        p.set_objective(
            LinearFunctional::from_matrix(b, &pauli_matrix::<f64>(word).unwrap()),
            sense,
        );
        p
    }

    #[test]
    fn svec_is_a_frobenius_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1usize, 2, 3, 5] {
            let m = random_hermitian(&mut rng, d);
            let layout = SvecLayout::new(d);
            let mut s = vec![0.0; layout.len()];
            layout.mat_to_coords(&m, &mut s);
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - m.frobenius_norm()).abs() < 1e-12);
            let back = layout.coords_to_mat(&s);
            assert!((&back - &m).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn functional_value_matches_trace_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let f = random_hermitian(&mut rng, 3);
            let rho = random_hermitian(&mut rng, 3);
            let functional = LinearFunctional::from_matrix(0, &f);
            let direct = (&f * &rho).trace().re;
            assert!((functional.value(&[rho]) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_doubles_the_spectrum() {
        let y = pauli_matrix::<f64>("Y").unwrap();
        let e = hermitian_embed(&y);
        assert!((e.trace().re - 2.0 * y.trace().re).abs() < 1e-14);
        let eig = hermitian_eig(&e).unwrap();
        let expected = [-1.0, -1.0, 1.0, 1.0];
        for (got, want) in eig.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-10);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_hermitian(&mut rng, 3);
        let me = hermitian_embed(&m);
        assert!(me.data().iter().all(|z| z.im == 0.0));
        assert!((&me.transpose() - &me).frobenius_norm() < 1e-12);
        let base = hermitian_eig(&m).unwrap().values;
        let doubled = hermitian_eig(&me).unwrap().values;
        for (k, v) in base.iter().enumerate() {
            assert!((doubled[2 * k] - v).abs() < 1e-9);
            assert!((doubled[2 * k + 1] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn epigraph_projection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let objective = |t: f64, v: &[f64], w: &[f64], t0: f64| -> f64 {
            let mut c = (t - t0) * (t - t0);
            for (x, &wi) in v.iter().zip(w) {
                let cap = wi * t;
                let clamped = x.clamp(-cap, cap);
                c += (x - clamped) * (x - clamped);
            }
            c
        };
        for _ in 0..50 {
            let n = rng.gen_range(1..7);
            let t0: f64 = rng.gen_range(-2.0..2.0);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();

            let mut tail = v.clone();
            let t = project_weighted_linf(t0, &mut tail, &w);
            assert!(t >= 0.0);
            for (x, &wi) in tail.iter().zip(&w) {
                assert!(x.abs() <= wi * t + 1e-12);
            }

            // Golden-section search over the head coordinate.
            let (mut a, mut b) = (0.0f64, 5.0f64);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c1 = b - phi * (b - a);
                let c2 = a + phi * (b - a);
                if objective(c1, &v, &w, t0) < objective(c2, &v, &w, t0) {
                    b = c2;
                } else {
                    a = c1;
                }
            }
            let t_ref = 0.5 * (a + b);
            assert!(
                (objective(t, &v, &w, t0) - objective(t_ref, &v, &w, t0)).abs() < 1e-7,
                "projection cost mismatch: t={t}, reference={t_ref}"
            );

            // Idempotence.
            let mut tail2 = tail.clone();
            let t2 = project_weighted_linf(t, &mut tail2, &w);
            assert!((t2 - t).abs() < 1e-12);
        }
        // Empty tail reduces to clamping at zero.
        assert_eq!(project_weighted_linf(-0.3, &mut [], &[]), 0.0);
        assert_eq!(project_weighted_linf(0.7, &mut [], &[]), 0.7);
    }

    #[test]
    fn minimizing_z_expectation_reaches_the_ground_state() {
        let p = pauli_expectation_problem("Z", Sense::Minimize);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-5, "objective {}", sol.objective);
        assert!((sol.blocks[0][(1, 1)].re - 1.0).abs() < 1e-4);
        assert!(sol.residuals.primal <= DEFAULT_TOL);
        assert!(sol.residuals.dual <= DEFAULT_TOL);
        assert!(sol.residuals.gap <= DEFAULT_TOL);
        // The multiplier of the unit-trace row recovers Z + mu I >= 0 with
        // dual value -mu = -1.
        assert!((sol.eq_duals[0] - 1.0).abs() < 1e-3, "dual {}", sol.eq_duals[0]);
    }

    #[test]
    fn maximizing_x_expectation_reaches_the_top_state() {
        let p = pauli_expectation_problem("X", Sense::Maximize);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-5);
    }

    #[test]
    fn box_constraints_bind_in_both_senses() {
        let scalar = |sense| {
            let mut p = SdpProblem::new();
            let b = p.add_block("x", 1);
            let f = LinearFunctional {
                terms: vec![LinearTerm { block: b, entries: vec![CoeffEntry::real(0, 0, 1.0)] }],
            };
            p.add_box("pin x", f.clone(), 0.5, 0.1);
            p.set_objective(f, sense);
            solve(&p, &SolverOptions::default()).unwrap()
        };
        let lo = scalar(Sense::Minimize);
        let hi = scalar(Sense::Maximize);
        assert_eq!(lo.status, SolveStatus::Optimal);
        assert_eq!(hi.status, SolveStatus::Optimal);
        assert!((lo.objective - 0.4).abs() < 1e-5, "min {}", lo.objective);
        assert!((hi.objective - 0.6).abs() < 1e-5, "max {}", hi.objective);
        assert!(lo.box_values[0] >= 0.4 - 1e-8 && lo.box_values[0] <= 0.6 + 1e-8);
    }

    #[test]
    fn kkt_certifies_a_hand_built_optimal_pair() {
        let p = pauli_expectation_problem("Z", Sense::Minimize);
        let mut rho = CMatrix::zeros(2, 2);
        rho[(1, 1)] = Complex::new(1.0, 0.0);
        let exact = Solution {
            status: SolveStatus::Optimal,
            objective: -1.0,
            dual_objective: -1.0,
            blocks: vec![rho.clone()],
            box_values: vec![],
            eq_duals: vec![1.0],
            box_duals: vec![],
            residuals: Residuals { primal: 0.0, dual: 0.0, gap: 0.0 },
            iterations: 0,
            log: vec![],
        };
        let r = kkt_residuals(&p, &exact).unwrap();
        assert!(r.primal < 1e-12 && r.dual < 1e-12 && r.gap < 1e-12, "{r:?}");

        // Mixing toward the identity keeps every constraint satisfied but
        // opens an objective gap that the diagnostics must flag.
        let mut mixed = exact.clone();
        let mut rho2 = CMatrix::<f64>::identity(2);
        rho2 = rho2.scale_re(0.05);
        rho2[(1, 1)] += Complex::new(0.9, 0.0);
        mixed.blocks[0] = rho2;
        let r2 = kkt_residuals(&p, &mixed).unwrap();
        assert!(r2.primal < 1e-12, "{r2:?}");
        assert!(r2.gap > 1e-3, "perturbation must show up in the gap: {r2:?}");
    }

    #[test]
    fn phase1_separates_feasible_from_conflicting_boxes() {
        let scalar_problem = |centers: &[f64]| {
            let mut p = SdpProblem::new();
            let b = p.add_block("x", 1);
            for (i, &c) in centers.iter().enumerate() {
                let f = LinearFunctional {
                    terms: vec![LinearTerm {
                        block: b,
                        entries: vec![CoeffEntry::real(0, 0, 1.0)],
                    }],
                };
                p.add_box(format!("pin {i}"), f, c, 0.01);
            }
            p
        };
        let feasible = phase1_feasibility(&scalar_problem(&[0.5]), &SolverOptions::default())
            .unwrap();
        assert!(feasible.feasible, "slack {}", feasible.slack);

        let conflict =
            phase1_feasibility(&scalar_problem(&[0.0, 1.0]), &SolverOptions::default()).unwrap();
        assert!(!conflict.feasible);
        // Best compromise x = 1/2 violates each pinned interval by 0.49,
        // normalized by the row norm sqrt(2).
        assert!((conflict.slack - 0.49 / SQRT2).abs() < 1e-3, "slack {}", conflict.slack);

        // No constraints at all: zero slack.
        let mut p = SdpProblem::new();
        p.add_block("rho", 2);
        let free = phase1_feasibility(&p, &SolverOptions::default()).unwrap();
        assert!(free.slack <= FEASIBILITY_SLACK);
    }

    #[test]
    fn solve_reports_infeasibility_with_slack() {
        let mut p = SdpProblem::new();
        let b = p.add_block("x", 1);
        let f = LinearFunctional {
            terms: vec![LinearTerm { block: b, entries: vec![CoeffEntry::real(0, 0, 1.0)] }],
        };
        p.add_box("near zero", f.clone(), 0.0, 0.01);
        p.add_box("near one", f.clone(), 1.0, 0.01);
        p.set_objective(f, Sense::Minimize);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        match sol.status {
            SolveStatus::Infeasible { slack } => assert!(slack > 0.3),
            other => panic!("expected infeasible, got {other}"),
        }
        assert!(sol.objective.is_nan());
    }

    #[test]
    fn logged_dual_values_stay_below_the_final_primal() {
        let p = pauli_expectation_problem("Z", Sense::Minimize);
        let opts = SolverOptions { log_every: 25, ..Default::default() };
        let sol = solve(&p, &opts).unwrap();
        assert!(!sol.log.is_empty());
        for rec in &sol.log {
            if rec.dual_objective.is_finite() {
                assert!(
                    rec.dual_objective <= sol.objective + 1e-6,
                    "iterate {} dual {} exceeds primal {}",
                    rec.iteration,
                    rec.dual_objective,
                    sol.objective
                );
            }
        }
    }

    #[test]
    fn minimax_form_finds_the_critical_scaling() {
        // |x - 0.3| <= 0.1 a and |x - 0.5| <= 0.1 a meet first at a = 1.
        let mut p = SdpProblem::new();
        let b = p.add_block("x", 1);
        let f = LinearFunctional {
            terms: vec![LinearTerm { block: b, entries: vec![CoeffEntry::real(0, 0, 1.0)] }],
        };
        p.add_box("a", f.clone(), 0.3, 0.1);
        p.add_box("b", f, 0.5, 0.1);
        let out = solve_minimax(&p, &SolverOptions::default()).unwrap();
        assert!((out.alpha - 1.0).abs() < 1e-3, "alpha {}", out.alpha);
    }

    #[test]
    fn json_round_trip_preserves_solutions_exactly() {
        let p = pauli_expectation_problem("Z", Sense::Minimize);
        let text = p.to_json().unwrap();
        let q = SdpProblem::from_json(&text).unwrap();
        let a = solve(&p, &SolverOptions::default()).unwrap();
        let b = solve(&q, &SolverOptions::default()).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn repeated_solves_are_bitwise_deterministic() {
        let p = pauli_expectation_problem("Z", Sense::Minimize);
        let opts = SolverOptions { log_every: 50, ..Default::default() };
        let a = solve(&p, &opts).unwrap();
        let b = solve(&p, &opts).unwrap();
        assert_eq!(a.log.len(), b.log.len());
        for (ra, rb) in a.log.iter().zip(&b.log) {
            assert_eq!(ra.primal_objective.to_bits(), rb.primal_objective.to_bits());
            assert_eq!(ra.primal_residual.to_bits(), rb.primal_residual.to_bits());
        }
    }

    #[test]
    fn validation_rejects_malformed_problems() {
        let mut p = SdpProblem::new();
        assert!(matches!(p.validate(), Err(SdpError::Empty)));
        let b = p.add_block("rho", 2);
        let bad_block = LinearFunctional {
            terms: vec![LinearTerm { block: 7, entries: vec![CoeffEntry::real(0, 0, 1.0)] }],
        };
        p.add_equality("bad", bad_block, 0.0);
        assert!(matches!(p.validate(), Err(SdpError::BlockOutOfRange(7))));
        p.equalities.clear();

        let lower = LinearFunctional {
            terms: vec![LinearTerm { block: b, entries: vec![CoeffEntry::real(1, 0, 1.0)] }],
        };
        p.add_equality("lower", lower, 0.0);
        assert!(matches!(p.validate(), Err(SdpError::LowerTriangle { .. })));
        p.equalities.clear();

        let complex_diag = LinearFunctional {
            terms: vec![LinearTerm {
                block: b,
                entries: vec![CoeffEntry { row: 0, col: 0, re: 0.0, im: 1.0 }],
            }],
        };
        p.add_equality("cdiag", complex_diag, 0.0);
        assert!(matches!(p.validate(), Err(SdpError::ComplexDiagonal(0))));
        p.equalities.clear();

        let f = LinearFunctional {
            terms: vec![LinearTerm { block: b, entries: vec![CoeffEntry::real(0, 0, 1.0)] }],
        };
        p.add_box("bad width", f.clone(), 0.0, -1.0);
        assert!(matches!(p.validate(), Err(SdpError::BadHalfwidth(_))));
        p.boxes.clear();

        p.add_equality("zero", LinearFunctional::default(), 2.0);
        assert!(matches!(p.validate(), Err(SdpError::ZeroRow(_))));
        p.equalities.clear();

        p.add_equality(
            "nan",
            LinearFunctional {
                terms: vec![LinearTerm {
                    block: b,
                    entries: vec![CoeffEntry::real(0, 0, f64::NAN)],
                }],
            },
            0.0,
        );
        assert!(matches!(p.validate(), Err(SdpError::NonFinite)));
    }
}
