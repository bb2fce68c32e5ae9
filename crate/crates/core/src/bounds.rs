//! Energy intervals and lower bounds from semidefinite relaxations of the
//! reduced-density-matrix polytope.
//!
//! Each hyperedge of the Hamiltonian gets its own PSD block with unit trace.
//! Measured Bloch coefficients pin each block inside variance-weighted
//! intervals scaled by a common factor `alpha`; overlap constraints force
//! shared-marginal agreement between intersecting edges, and extension
//! constraints additionally require a joint PSD state on each pairwise union.
//! The smallest feasible `alpha` is located by doubling and bisection (or
//! directly as a minimax program), and energy bounds come from optimizing the
//! Hamiltonian functional over the feasible set.

use crate::hamiltonian::{HamiltonianError, LocalHamiltonian};
use crate::operator::HermitianOperator;
use crate::pauli::{Pauli, PauliString};
use crate::sdp::{
    phase1_feasibility, solve, solve_minimax, CoeffEntry, FeasibilityProbe, LinearFunctional,
    LinearTerm, SdpError, SdpProblem, Sense, Solution, SolverOptions, FEASIBILITY_SLACK,
};
use crate::tomography::BlochEstimateSet;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Interval scalings beyond this are treated as divergence of the search.
pub const ALPHA_CAP: f64 = 1024.0;
/// Bisection resolution used for the wide (minimization) bound.
pub const DELTA_WIDE: f64 = 0.1;
/// Bisection resolution used for the tight (maximization) bound.
pub const DELTA_TIGHT: f64 = 1e-3;
/// Largest pairwise-union extension block, in qubits.
pub const MAX_EXTENSION: usize = 6;
/// Largest register for the exact global-marginal feasibility check.
pub const MAX_GLOBAL_CHECK: usize = 6;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("expected one estimate set per hyperedge ({edges}), got {got}")]
    EstimateCountMismatch { edges: usize, got: usize },
    #[error("estimate set {index} covers {got:?}, expected edge {edge:?}")]
    EstimateSupportMismatch { index: usize, got: Vec<usize>, edge: Vec<usize> },
    #[error("alpha must be finite and nonnegative, got {0}")]
    BadAlpha(f64),
    #[error("bisection resolution must be finite and positive, got {0}")]
    BadDelta(f64),
    #[error("interval scaling diverged: infeasible even at alpha {alpha} (slack {slack:.3e})")]
    Diverged { alpha: f64, slack: f64 },
    #[error("{what} on {n} qubits exceeds the supported maximum {max}")]
    CapacityExceeded { what: &'static str, n: usize, max: usize },
    #[error("marginal target {index}: {message}")]
    BadTarget { index: usize, message: String },
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

/// How much structure the relaxation enforces between blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintLevel {
    /// Independent unit-trace PSD blocks.
    #[serde(rename = "psd")]
    PsdOnly,
    /// Plus equal marginals on every pairwise edge intersection.
    Oc,
    /// Plus a joint PSD extension block on every pairwise edge union.
    #[serde(rename = "ocec")]
    OcEc,
}

impl fmt::Display for ConstraintLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintLevel::PsdOnly => "psd",
            ConstraintLevel::Oc => "oc",
            ConstraintLevel::OcEc => "ocec",
        };
        write!(f, "{s}")
    }
}

impl FromStr for ConstraintLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psd" => Ok(ConstraintLevel::PsdOnly),
            "oc" => Ok(ConstraintLevel::Oc),
            "ocec" => Ok(ConstraintLevel::OcEc),
            other => Err(format!("unknown constraint level {other:?} (psd, oc, ocec)")),
        }
    }
}

/// `Tr[sigma_w rho]` on one block, built from the word's signed-permutation
/// structure (`2^k` nonzero entries instead of a dense scan).
fn pauli_functional(block: usize, word: &PauliString) -> LinearTerm {
    let dim = 1usize << word.len();
    let flip = word.flip_mask();
    let mut entries = Vec::new();
    if flip == 0 {
        for j in 0..dim {
            let p = word.phase::<f64>(j);
            entries.push(CoeffEntry::real(j, j, p.re));
        }
    } else {
        for j in 0..dim {
            let k = j ^ flip;
            if j < k {
                // sigma[j, k] = phase(k) since sigma |k> = phase(k) |j>.
                let p = word.phase::<f64>(k);
                entries.push(CoeffEntry { row: j, col: k, re: p.re, im: p.im });
            }
        }
    }
    LinearTerm { block, entries }
}

fn scaled(mut term: LinearTerm, factor: f64) -> LinearTerm {
    for e in &mut term.entries {
        e.re *= factor;
        e.im *= factor;
    }
    term
}

fn unit_trace_functional(block: usize, dim: usize) -> LinearFunctional {
    LinearFunctional {
        terms: vec![LinearTerm {
            block,
            entries: (0..dim).map(|i| CoeffEntry::real(i, i, 1.0)).collect(),
        }],
    }
}

/// Word on `support` (a subset of `edge`) lifted to a word on `edge`.
pub(crate) fn lift_word(edge: &[usize], support: &[usize], codes: &[Pauli]) -> PauliString {
    let mut out = vec![Pauli::I; edge.len()];
    for (&q, &c) in support.iter().zip(codes) {
        let pos = edge.binary_search(&q).expect("support must be inside the edge");
        out[pos] = c;
    }
    PauliString::new(out)
}

fn build_relaxation(
    h: &LocalHamiltonian<f64>,
    data: Option<(&[BlochEstimateSet], f64)>,
    level: ConstraintLevel,
    sense: Sense,
) -> Result<SdpProblem, BoundsError> {
    let hg = h.hypergraph();
    let n_edges = hg.num_edges();
    if let Some((estimates, alpha)) = data {
        if estimates.len() != n_edges {
            return Err(BoundsError::EstimateCountMismatch { edges: n_edges, got: estimates.len() });
        }
        for (i, set) in estimates.iter().enumerate() {
            if set.qubits() != hg.edge(i) {
                return Err(BoundsError::EstimateSupportMismatch {
                    index: i,
                    got: set.qubits().to_vec(),
                    edge: hg.edge(i).to_vec(),
                });
            }
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(BoundsError::BadAlpha(alpha));
        }
    }

    let mut problem = SdpProblem::new();
    for (j, edge) in hg.edges().iter().enumerate() {
        let dim = 1usize << edge.len();
        let b = problem.add_block(format!("edge{j}"), dim);
        problem.add_equality(format!("trace[{j}]"), unit_trace_functional(b, dim), 1.0);
    }

    if let Some((estimates, alpha)) = data {
        for (j, set) in estimates.iter().enumerate() {
            let k = set.k();
            for idx in 1..4usize.pow(k as u32) {
                let word = PauliString::from_index(idx, k);
                let entry = set.entry(idx);
                problem.add_box(
                    format!("bloch[{j}][{word}]"),
                    LinearFunctional { terms: vec![pauli_functional(j, &word)] },
                    entry.value,
                    alpha * entry.variance,
                );
            }
        }
    }

    if level == ConstraintLevel::PsdOnly {
        // Objective below; no cross-block structure.
    } else {
        for &(j, k) in hg.overlap_pairs().iter() {
            let shared = hg.edge_intersection(j, k);
            for idx in 1..4usize.pow(shared.len() as u32) {
                let word = PauliString::from_index(idx, shared.len());
                let on_j = lift_word(hg.edge(j), &shared, word.codes());
                let on_k = lift_word(hg.edge(k), &shared, word.codes());
                problem.add_equality(
                    format!("overlap[{j},{k}][{word}]"),
                    LinearFunctional {
                        terms: vec![
                            pauli_functional(j, &on_j),
                            scaled(pauli_functional(k, &on_k), -1.0),
                        ],
                    },
                    0.0,
                );
            }
        }
    }

    if level == ConstraintLevel::OcEc {
        for &(j, k) in hg.overlap_pairs().iter() {
            let union = hg.edge_union(j, k);
            if union.len() > MAX_EXTENSION {
                return Err(BoundsError::CapacityExceeded {
                    what: "pairwise union extension",
                    n: union.len(),
                    max: MAX_EXTENSION,
                });
            }
            let dim = 1usize << union.len();
            let ext = problem.add_block(format!("union{j}_{k}"), dim);
            problem.add_equality(
                format!("trace[union{j}_{k}]"),
                unit_trace_functional(ext, dim),
                1.0,
            );
            for (edge_idx, edge) in [(j, hg.edge(j)), (k, hg.edge(k))] {
                for idx in 1..4usize.pow(edge.len() as u32) {
                    let word = PauliString::from_index(idx, edge.len());
                    let lifted = lift_word(&union, edge, word.codes());
                    problem.add_equality(
                        format!("extension[{j},{k}]->{edge_idx}[{word}]"),
                        LinearFunctional {
                            terms: vec![
                                pauli_functional(ext, &lifted),
                                scaled(pauli_functional(edge_idx, &word), -1.0),
                            ],
                        },
                        0.0,
                    );
                }
            }
        }
    }

    let mut objective_terms = Vec::new();
    for j in 0..n_edges {
        for (word, coeff) in &h.term(j).pauli_terms {
            objective_terms.push(scaled(pauli_functional(j, word), *coeff));
        }
    }
    problem.set_objective(LinearFunctional { terms: objective_terms }, sense);
    Ok(problem)
}

/// Relaxation with measurement boxes scaled by `alpha`. Blocks `0..edges`
/// are the hyperedge states (extension blocks, if any, follow).
pub fn build_tomography_sdp(
    h: &LocalHamiltonian<f64>,
    estimates: &[BlochEstimateSet],
    level: ConstraintLevel,
    alpha: f64,
    sense: Sense,
) -> Result<SdpProblem, BoundsError> {
    build_relaxation(h, Some((estimates, alpha)), level, sense)
}

/// Data-free relaxation: the classic variational lower-bound program.
pub fn build_marginal_relaxation(
    h: &LocalHamiltonian<f64>,
    level: ConstraintLevel,
) -> Result<SdpProblem, BoundsError> {
    build_relaxation(h, None, level, Sense::Minimize)
}

/// Energy of a solution's hyperedge blocks under the Hamiltonian.
pub fn energy_from_solution(
    h: &LocalHamiltonian<f64>,
    sol: &Solution,
) -> Result<f64, BoundsError> {
    Ok(h.energy_from_rdms(&sol.blocks[..h.hypergraph().num_edges()])?)
}

/// Result of tightening the interval scale and re-optimizing the energy.
#[derive(Debug, Clone)]
pub struct Refinement {
    /// Feasible interval scale located by the search.
    pub alpha: f64,
    /// Energy of the refined hyperedge states.
    pub energy: f64,
    pub solution: Solution,
    /// Number of feasibility probes spent.
    pub probes: usize,
}

/// Doubling-plus-bisection search for the feasibility threshold in `alpha`.
/// Returns the feasible endpoint when the bracket first shrinks below each
/// entry of `deltas` (which must be strictly decreasing), and the probe
/// count.
fn bisect_alpha(
    probe: &mut FeasibilityProbe,
    deltas: &[f64],
    solver: &SolverOptions,
) -> Result<(Vec<f64>, usize), BoundsError> {
    debug_assert!(deltas.windows(2).all(|w| w[0] > w[1]));
    debug_assert!(deltas.iter().all(|&d| d > 0.0));
    let mut probes = 0usize;
    let mut b = 1.0f64;
    let mut slack = probe.slack_at(b, solver);
    probes += 1;
    while slack > FEASIBILITY_SLACK {
        b *= 2.0;
        if b > ALPHA_CAP {
            return Err(BoundsError::Diverged { alpha: b / 2.0, slack });
        }
        slack = probe.slack_at(b, solver);
        probes += 1;
    }
    let mut a = if b > 1.0 { b / 2.0 } else { 0.0 };
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        while b - a >= delta {
            let mid = 0.5 * (a + b);
            if probe.slack_at(mid, solver) <= FEASIBILITY_SLACK {
                b = mid;
            } else {
                a = mid;
            }
            probes += 1;
        }
        out.push(b);
    }
    Ok((out, probes))
}

/// Locates the smallest interval scale (to resolution `delta`) at which the
/// relaxation stays feasible, then optimizes the energy there.
pub fn refine_estimates(
    h: &LocalHamiltonian<f64>,
    estimates: &[BlochEstimateSet],
    level: ConstraintLevel,
    sense: Sense,
    delta: f64,
    solver: &SolverOptions,
) -> Result<Refinement, BoundsError> {
    assert!(delta > 0.0 && delta.is_finite(), "bisection resolution must be positive");
    let base = build_tomography_sdp(h, estimates, level, 1.0, sense)?;
    let mut probe = FeasibilityProbe::new(&base)?;
    let (alphas, probes) = bisect_alpha(&mut probe, &[delta], solver)?;
    let alpha = alphas[0];

    let final_problem = build_tomography_sdp(h, estimates, level, alpha, sense)?;
    let opts = SolverOptions { assume_feasible: true, ..solver.clone() };
    let solution = solve(&final_problem, &opts)?;
    let energy = energy_from_solution(h, &solution)?;
    Ok(Refinement { alpha, energy, solution, probes })
}

/// Optimizes the energy at a fixed, known-feasible interval scale.
pub fn solve_at_alpha(
    h: &LocalHamiltonian<f64>,
    estimates: &[BlochEstimateSet],
    level: ConstraintLevel,
    alpha: f64,
    sense: Sense,
    solver: &SolverOptions,
) -> Result<(f64, Solution), BoundsError> {
    let problem = build_tomography_sdp(h, estimates, level, alpha, sense)?;
    let opts = SolverOptions { assume_feasible: true, ..solver.clone() };
    let solution = solve(&problem, &opts)?;
    let energy = energy_from_solution(h, &solution)?;
    Ok((energy, solution))
}

/// Smallest interval scale admitting a feasible point, found in one shot as
/// a minimax program (hard structure constraints, soft boxes).
pub fn alpha_star_direct(
    h: &LocalHamiltonian<f64>,
    estimates: &[BlochEstimateSet],
    level: ConstraintLevel,
    solver: &SolverOptions,
) -> Result<f64, BoundsError> {
    let problem = build_tomography_sdp(h, estimates, level, 1.0, Sense::Minimize)?;
    let outcome = solve_minimax(&problem, solver)?;
    if !outcome.alpha.is_finite() || (!outcome.converged && outcome.alpha > ALPHA_CAP) {
        return Err(BoundsError::Diverged { alpha: outcome.alpha, slack: f64::NAN });
    }
    Ok(outcome.alpha)
}

/// A two-sided energy interval from the refined relaxation.
///
/// The lower end uses a coarse feasibility resolution (larger scale, looser
/// boxes), the upper end a fine one; the wide feasible set contains the
/// tight one, so `e_min <= e_max` up to solver tolerance.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBounds {
    pub e_min: f64,
    pub e_max: f64,
    /// Scale at the coarse resolution (used for `e_min`).
    pub alpha_wide: f64,
    /// Scale at the fine resolution (used for `e_max`).
    pub alpha_tight: f64,
}

impl EnergyBounds {
    pub fn width(&self) -> f64 {
        self.e_max - self.e_min
    }
}

/// Refined two-sided energy interval at the default resolutions
/// ([`DELTA_WIDE`] for the minimum, [`DELTA_TIGHT`] for the maximum).
pub fn energy_bounds(
    h: &LocalHamiltonian<f64>,
    estimates: &[BlochEstimateSet],
    level: ConstraintLevel,
    solver: &SolverOptions,
) -> Result<EnergyBounds, BoundsError> {
    energy_bounds_at(h, estimates, level, DELTA_WIDE, DELTA_TIGHT, solver)
}

/// Refined two-sided energy interval. One bisection pass serves both
/// resolutions, so the fine-resolution scale never exceeds the coarse one
/// whenever `delta_min >= delta_max`.
pub fn energy_bounds_at(
    h: &LocalHamiltonian<f64>,
    estimates: &[BlochEstimateSet],
    level: ConstraintLevel,
    delta_min: f64,
    delta_max: f64,
    solver: &SolverOptions,
) -> Result<EnergyBounds, BoundsError> {
    for delta in [delta_min, delta_max] {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(BoundsError::BadDelta(delta));
        }
    }
    let base = build_tomography_sdp(h, estimates, level, 1.0, Sense::Minimize)?;
    let mut probe = FeasibilityProbe::new(&base)?;
    // The shared pass wants resolutions strictly coarsest-first.
    let (alpha_wide, alpha_tight) = if delta_min == delta_max {
        let (alphas, _) = bisect_alpha(&mut probe, &[delta_min], solver)?;
        (alphas[0], alphas[0])
    } else if delta_min > delta_max {
        let (alphas, _) = bisect_alpha(&mut probe, &[delta_min, delta_max], solver)?;
        (alphas[0], alphas[1])
    } else {
        let (alphas, _) = bisect_alpha(&mut probe, &[delta_max, delta_min], solver)?;
        (alphas[1], alphas[0])
    };

    let (e_min, _) = solve_at_alpha(h, estimates, level, alpha_wide, Sense::Minimize, solver)?;
    let (e_max, _) = solve_at_alpha(h, estimates, level, alpha_tight, Sense::Maximize, solver)?;
    assert!(
        e_min <= e_max + 1e-4,
        "bound inversion beyond solver tolerance: [{e_min}, {e_max}]"
    );
    Ok(EnergyBounds { e_min: e_min.min(e_max), e_max, alpha_wide, alpha_tight })
}

/// A certified lower bound on the ground-state energy.
#[derive(Debug, Clone)]
pub struct VariationalBound {
    /// The certified bound: the dual value when available (a true lower
    /// bound by weak duality even at finite solver accuracy), else the
    /// primal optimum.
    pub bound: f64,
    pub solution: Solution,
}

/// Data-free lower bound on the ground-state energy. When the relaxation is
/// tight the primal value can land a solver tolerance *above* the exact
/// energy, so the reported bound prefers the dual certificate.
pub fn variational_lower_bound(
    h: &LocalHamiltonian<f64>,
    level: ConstraintLevel,
    solver: &SolverOptions,
) -> Result<VariationalBound, BoundsError> {
    let problem = build_marginal_relaxation(h, level)?;
    let opts = SolverOptions { assume_feasible: true, ..solver.clone() };
    let solution = solve(&problem, &opts)?;
    let bound = if solution.dual_objective.is_finite() {
        solution.objective.min(solution.dual_objective)
    } else {
        solution.objective
    };
    Ok(VariationalBound { bound, solution })
}

#[derive(Debug, Clone, Copy)]
pub struct MarginalWitness {
    pub feasible: bool,
    /// Worst normalized violation of the best candidate global state.
    pub slack: f64,
    pub iterations: usize,
}

/// Decides whether the target marginals extend to a single PSD global state
/// on `n` qubits (exact check, exponential block — small `n` only).
pub fn check_marginal_feasibility(
    n: usize,
    targets: &[HermitianOperator<f64>],
    solver: &SolverOptions,
) -> Result<MarginalWitness, BoundsError> {
    if n > MAX_GLOBAL_CHECK {
        return Err(BoundsError::CapacityExceeded {
            what: "global feasibility check",
            n,
            max: MAX_GLOBAL_CHECK,
        });
    }
    let all: Vec<usize> = (0..n).collect();
    for (i, t) in targets.iter().enumerate() {
        if t.qubits().iter().any(|q| !all.contains(q)) {
            return Err(BoundsError::BadTarget {
                index: i,
                message: format!("support {:?} outside 0..{n}", t.qubits()),
            });
        }
        let tr = t.matrix().trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(BoundsError::BadTarget {
                index: i,
                message: format!("trace {tr} is not 1"),
            });
        }
    }

    let dim = 1usize << n;
    let mut problem = SdpProblem::new();
    let g = problem.add_block("global", dim);
    problem.add_equality("trace[global]", unit_trace_functional(g, dim), 1.0);
    for (i, t) in targets.iter().enumerate() {
        let k = t.qubits().len();
        for idx in 1..4usize.pow(k as u32) {
            let word = PauliString::from_index(idx, k);
            let lifted = lift_word(&all, t.qubits(), word.codes());
            let rhs = word.trace_with(t.matrix());
            debug_assert!(rhs.im.abs() < 1e-10);
            problem.add_equality(
                format!("marginal[{i}][{word}]"),
                LinearFunctional { terms: vec![pauli_functional(g, &lifted)] },
                rhs.re,
            );
        }
    }
    let outcome = phase1_feasibility(&problem, solver)?;
    Ok(MarginalWitness {
        feasible: outcome.feasible,
        slack: outcome.slack,
        iterations: outcome.iterations,
    })
}
