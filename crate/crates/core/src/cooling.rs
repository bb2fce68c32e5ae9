//! Greedy variational cooling: layered single-Pauli rotations chosen from
//! reduced density matrices.
//!
//! Each iteration measures contiguous qubit windows of the current state,
//! scores every pool operator `h` by the guaranteed energy drop of the
//! rotation `exp(-i h t)`, and applies a layer of support-disjoint winners.
//! The window data can come from exact simulation, raw shot tomography, or
//! shot tomography refined through the interval-scaled semidefinite
//! relaxation (which also yields a per-iteration lower estimate).

use crate::bounds::{
    lift_word, refine_estimates, BoundsError, ConstraintLevel, Refinement, DELTA_WIDE,
};
use crate::eig::{hermitian_eig, LinalgError};
use crate::hamiltonian::{HamiltonianError, Hypergraph, LocalHamiltonian};
use crate::matrix::CMatrix;
use crate::operator::{HermitianOperator, OperatorError};
use crate::pauli::{Pauli, PauliString};
use crate::rng::{substream, StreamKind};
use crate::scalar::C;
use crate::sdp::{Sense, SolverOptions};
use crate::sim::{apply_pauli_rotation, SimError, Statevector};
use crate::tomography::{
    collect_random_pauli_shots, estimate_local_bloch, reconstruct_rdm, BlochEstimateSet,
    TomographyError,
};
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A layer stops growing once the best remaining predicted drop is this small.
pub const DECREASE_TOLERANCE: f64 = 1e-9;
/// Mean-field sweeps stop when the energy improves by less than this.
const MEAN_FIELD_TOLERANCE: f64 = 1e-10;
const MEAN_FIELD_MAX_SWEEPS: usize = 500;
const MEAN_FIELD_RESTARTS: u64 = 5;
/// Fixed internal seed for mean-field restarts, so the initializer is a
/// deterministic function of the Hamiltonian.
const MEAN_FIELD_SEED: u64 = 13;

#[derive(Debug, Error)]
pub enum CoolingError {
    #[error("invalid cooling configuration: {0}")]
    BadConfig(String),
    #[error("no window covers term {term} joined with operator {op}")]
    Coverage { term: usize, op: String },
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Starting state for the cooling loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `|+>^n`.
    PlusProduct,
    /// Sitewise mean-field product state (see [`hartree_fock_state`]).
    HartreeFock,
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InitialState::PlusProduct => "plus_product",
            InitialState::HartreeFock => "hartree_fock",
        };
        write!(f, "{s}")
    }
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plus_product" => Ok(InitialState::PlusProduct),
            "hartree_fock" => Ok(InitialState::HartreeFock),
            other => Err(format!("unknown initial state {other:?} (plus_product, hartree_fock)")),
        }
    }
}

/// Where the per-iteration window RDMs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoolingMode {
    /// Exact reduced states from the simulator.
    ExactRdm,
    /// Raw reconstruction from fresh randomized shots.
    Tomography,
    /// Shot reconstruction refined through the semidefinite relaxation.
    TomographySdp,
}

impl fmt::Display for CoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CoolingMode::ExactRdm => "exact_rdm",
            CoolingMode::Tomography => "tomography",
            CoolingMode::TomographySdp => "tomography_sdp",
        };
        write!(f, "{s}")
    }
}

impl FromStr for CoolingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact_rdm" => Ok(CoolingMode::ExactRdm),
            "tomography" => Ok(CoolingMode::Tomography),
            "tomography_sdp" => Ok(CoolingMode::TomographySdp),
            other => Err(format!(
                "unknown cooling mode {other:?} (exact_rdm, tomography, tomography_sdp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoolingConfig {
    pub initial: InitialState,
    pub mode: CoolingMode,
    /// Maximum number of layers; zero records only the initial energy.
    pub max_layers: usize,
    /// Fresh shots per iteration (tomography modes).
    pub shots_per_iteration: usize,
    pub seed: u64,
}

impl CoolingConfig {
    pub fn validate(&self) -> Result<(), CoolingError> {
        if self.mode != CoolingMode::ExactRdm && self.shots_per_iteration == 0 {
            return Err(CoolingError::BadConfig(
                "tomography modes need at least one shot per iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Candidate rotation generators: full-length Pauli words of weight one or
/// two with contiguous support.
#[derive(Debug, Clone)]
pub struct OperatorPool {
    ops: Vec<PauliString>,
}

impl OperatorPool {
    pub fn operators(&self) -> &[PauliString] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// X, Y, Z on every site, then the nine two-qubit products on every size-2
/// hyperedge; ordering is site/edge index first, Pauli letters second.
pub fn build_pool(g: &Hypergraph) -> OperatorPool {
    let n = g.n();
    let letters = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut ops = Vec::new();
    for q in 0..n {
        for p in letters {
            ops.push(PauliString::from_support(n, &[(q, p)]));
        }
    }
    for edge in g.edges() {
        if edge.len() != 2 {
            continue;
        }
        for p in letters {
            for q in letters {
                ops.push(PauliString::from_support(n, &[(edge[0], p), (edge[1], q)]));
            }
        }
    }
    OperatorPool { ops }
}

/// Rotation angle minimizing the energy along the one-parameter family
/// `exp(-i h t)`, and the guaranteed decrease `(sqrt(A^2+B^2) - A)/2`. The
/// degenerate input `A = B = 0` returns `(0, 0)` (no rotation helps).
pub fn optimal_time(a: f64, b: f64) -> (f64, f64) {
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    // Keep the B = 0 branch on +0.0 so atan2 picks the (-pi/2, pi/2] branch
    // (atan2(-0.0, a < 0) would flip to -pi).
    let nb = if b == 0.0 { 0.0 } else { -b };
    let t = 0.5 * nb.atan2(a);
    let decrease = 0.5 * ((a * a + b * b).sqrt() - a);
    (t, decrease)
}

/// Contiguous qubit windows of the current state with staleness tracking.
/// A window is conjugated in place when a rotation's support fits inside it
/// and marked stale when the support only partially overlaps.
#[derive(Debug, Clone)]
pub struct WindowRdms {
    windows: Vec<Vec<usize>>,
    rdms: Vec<HermitianOperator<f64>>,
    fresh: Vec<bool>,
}

impl WindowRdms {
    pub fn new(rdms: Vec<HermitianOperator<f64>>) -> Self {
        let windows = rdms.iter().map(|r| r.qubits().to_vec()).collect();
        let fresh = vec![true; rdms.len()];
        Self { windows, rdms, fresh }
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    pub fn rdms(&self) -> &[HermitianOperator<f64>] {
        &self.rdms
    }

    pub fn is_fresh(&self, index: usize) -> bool {
        self.fresh[index]
    }

    fn first_covering(&self, qubits: &[usize]) -> Option<usize> {
        self.windows.iter().position(|w| qubits.iter().all(|q| w.binary_search(q).is_ok()))
    }

    /// Applies `exp(-i h t)` to every window containing the support of `h`;
    /// windows that only intersect it are marked stale.
    fn rotate(&mut self, h: &PauliString, t: f64) {
        let support = h.support();
        for (i, window) in self.windows.iter().enumerate() {
            let inside =
                support.iter().filter(|q| window.binary_search(q).is_ok()).count();
            if inside == 0 {
                continue;
            }
            if inside == support.len() {
                let hw = h.restrict(window).matrix();
                let dim = hw.rows();
                let u = &CMatrix::<f64>::identity(dim).scale(Complex::new(t.cos(), 0.0))
                    + &hw.scale(Complex::new(0.0, -t.sin()));
                let rho = self.rdms[i].matrix();
                let updated = (&(&u * rho) * &u.adjoint()).hermitize();
                self.rdms[i] =
                    HermitianOperator::new(window.clone(), updated).expect("window shape fixed");
            } else {
                self.fresh[i] = false;
            }
        }
    }
}

/// Largest support union of a Hamiltonian term and an overlapping pool
/// operator; this is the window width that makes every score computable.
pub fn window_size(h: &LocalHamiltonian<f64>, pool: &OperatorPool) -> usize {
    let mut w = h.edges().iter().map(Vec::len).max().unwrap_or(1);
    for op in pool.operators() {
        let support = op.support();
        for edge in h.edges() {
            if support.iter().any(|q| edge.contains(q)) {
                w = w.max(union_sorted(edge, &support).len());
            }
        }
    }
    w.min(h.n())
}

/// All contiguous qubit windows of width `w` on an `n`-site chain.
pub fn contiguous_windows(n: usize, w: usize) -> Vec<Vec<usize>> {
    assert!(w >= 1 && w <= n);
    (0..=n - w).map(|i| (i..i + w).collect()).collect()
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Energy-curvature data for one candidate rotation: `A = <hHh - H>` and
/// `B = i<[h, H]>`, accumulated over the Hamiltonian terms overlapping `h`
/// from whichever window covers each pairing.
pub fn estimate_ab(
    windows: &WindowRdms,
    h: &LocalHamiltonian<f64>,
    op: &PauliString,
) -> Result<(f64, f64), CoolingError> {
    let support = op.support();
    let mut a = 0.0;
    let mut b = 0.0;
    for (j, edge) in h.edges().iter().enumerate() {
        if !support.iter().any(|q| edge.contains(q)) {
            continue;
        }
        let union = union_sorted(edge, &support);
        let w = windows
            .first_covering(&union)
            .ok_or_else(|| CoolingError::Coverage { term: j, op: op.to_string() })?;
        let window = &windows.windows[w];
        let hw = op.restrict(window).matrix();
        let hj = h.term(j).op.embed_into(window)?;
        let rho = windows.rdms[w].matrix();
        let hh = &hw * &hj;
        let conj = &hh * &hw;
        let a_term = (&conj - &hj).inner(rho);
        // i[h, H_j] is Hermitian, so the Frobenius inner product reads off
        // its expectation directly.
        let comm_obs = (&hh - &(&hj * &hw)).scale(Complex::new(0.0, 1.0));
        let b_term = comm_obs.inner(rho);
        debug_assert!(a_term.im.abs() < 1e-10 && b_term.im.abs() < 1e-10);
        a += a_term.re;
        b += b_term.re;
    }
    Ok((a, b))
}

/// One applied rotation with its predicted energy drop.
#[derive(Debug, Clone)]
pub struct LayerOp {
    pub op: PauliString,
    pub time: f64,
    pub predicted_decrease: f64,
}

/// Greedily selects support-disjoint rotations by predicted decrease,
/// conjugating the windows after each pick. Operators whose score would need
/// a stale window are skipped for the remainder of the layer; ties go to the
/// lowest pool index.
pub fn greedy_layer(
    h: &LocalHamiltonian<f64>,
    windows: &mut WindowRdms,
    pool: &OperatorPool,
) -> Result<Vec<LayerOp>, CoolingError> {
    let mut available = vec![true; pool.len()];
    let mut layer = Vec::new();
    loop {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, op) in pool.operators().iter().enumerate() {
            if !available[i] {
                continue;
            }
            if !windows_fresh_for(windows, h, op)? {
                continue;
            }
            let (a, b) = estimate_ab(windows, h, op)?;
            let (t, decrease) = optimal_time(a, b);
            if best.map(|(_, _, d)| decrease > d).unwrap_or(true) {
                best = Some((i, t, decrease));
            }
        }
        let Some((i, t, decrease)) = best else { break };
        if decrease <= DECREASE_TOLERANCE {
            break;
        }
        let op = pool.operators()[i].clone();
        windows.rotate(&op, t);
        let support = op.support();
        for (j, other) in pool.operators().iter().enumerate() {
            if available[j] && other.support().iter().any(|q| support.contains(q)) {
                available[j] = false;
            }
        }
        layer.push(LayerOp { op, time: t, predicted_decrease: decrease });
    }
    Ok(layer)
}

fn windows_fresh_for(
    windows: &WindowRdms,
    h: &LocalHamiltonian<f64>,
    op: &PauliString,
) -> Result<bool, CoolingError> {
    let support = op.support();
    for (j, edge) in h.edges().iter().enumerate() {
        if !support.iter().any(|q| edge.contains(q)) {
            continue;
        }
        let union = union_sorted(edge, &support);
        let w = windows
            .first_covering(&union)
            .ok_or_else(|| CoolingError::Coverage { term: j, op: op.to_string() })?;
        if !windows.fresh[w] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The Hamiltonian re-expressed on the window hypergraph: each term lands on
/// the first window covering it, so window RDMs evaluate the total energy.
pub fn window_hamiltonian(
    h: &LocalHamiltonian<f64>,
    windows: &[Vec<usize>],
) -> Result<LocalHamiltonian<f64>, CoolingError> {
    let mut per_window: Vec<Vec<(PauliString, f64)>> = vec![Vec::new(); windows.len()];
    for (j, edge) in h.edges().iter().enumerate() {
        let w = windows
            .iter()
            .position(|win| edge.iter().all(|q| win.binary_search(q).is_ok()))
            .ok_or_else(|| CoolingError::Coverage { term: j, op: "term support".into() })?;
        for (word, coeff) in &h.term(j).pauli_terms {
            per_window[w].push((lift_word(&windows[w], edge, word.codes()), *coeff));
        }
    }
    Ok(LocalHamiltonian::new(Hypergraph::new(h.n(), windows.to_vec())?, per_window)?)
}

/// One recorded cooling iteration. Row 0 describes the initial state and has
/// an empty layer; row `l` holds the layer that produced the state it scores.
#[derive(Debug, Clone)]
pub struct CoolingIteration {
    pub layer: Vec<LayerOp>,
    /// Energy from the iteration's window data (exact, raw, or refined).
    pub energy_estimate: f64,
    /// Ground-truth energy of the simulated state.
    pub energy_exact: f64,
    /// Minimum of the refinement's feasible set, when the mode provides one.
    pub sdp_lower_bound: Option<f64>,
    /// Whether refined RDMs were actually used (false also marks fallbacks).
    pub refined: bool,
}

#[derive(Debug, Clone)]
pub struct CoolingTrace {
    pub iterations: Vec<CoolingIteration>,
    pub windows: Vec<Vec<usize>>,
    /// Final simulated state, for downstream inspection.
    pub final_state: Statevector<f64>,
}

impl CoolingTrace {
    pub fn final_exact_energy(&self) -> f64 {
        self.iterations.last().expect("trace has at least the initial row").energy_exact
    }

    pub fn total_gates(&self) -> usize {
        self.iterations.iter().map(|it| it.layer.len()).sum()
    }
}

struct Observation {
    windows: WindowRdms,
    energy_estimate: f64,
    sdp_lower_bound: Option<f64>,
    refined: bool,
}

fn observe(
    psi: &Statevector<f64>,
    wh: &LocalHamiltonian<f64>,
    window_list: &[Vec<usize>],
    config: &CoolingConfig,
    iteration: u64,
) -> Result<Observation, CoolingError> {
    match config.mode {
        CoolingMode::ExactRdm => {
            let rdms: Result<Vec<_>, _> =
                window_list.iter().map(|w| psi.exact_rdm(w)).collect();
            let rdms = rdms?;
            let mats: Vec<CMatrix<f64>> = rdms.iter().map(|r| r.matrix().clone()).collect();
            Ok(Observation {
                windows: WindowRdms::new(rdms),
                energy_estimate: wh.energy_from_rdms(&mats)?,
                sdp_lower_bound: None,
                refined: false,
            })
        }
        CoolingMode::Tomography | CoolingMode::TomographySdp => {
            let mut rng = substream(config.seed, StreamKind::Shots, 0, iteration);
            let dataset =
                collect_random_pauli_shots(psi, config.shots_per_iteration, &mut rng)?;
            let sets: Result<Vec<BlochEstimateSet>, _> =
                window_list.iter().map(|w| estimate_local_bloch(&dataset, w)).collect();
            let sets = sets?;
            if config.mode == CoolingMode::TomographySdp {
                match refine_estimates(
                    wh,
                    &sets,
                    ConstraintLevel::OcEc,
                    Sense::Minimize,
                    DELTA_WIDE,
                    &SolverOptions::default(),
                ) {
                    Ok(Refinement { energy, solution, .. }) => {
                        let rdms: Result<Vec<_>, _> = window_list
                            .iter()
                            .zip(&solution.blocks)
                            .map(|(w, m)| HermitianOperator::new(w.clone(), m.hermitize()))
                            .collect();
                        return Ok(Observation {
                            windows: WindowRdms::new(rdms?),
                            energy_estimate: energy,
                            sdp_lower_bound: Some(solution.objective.min(energy)),
                            refined: true,
                        });
                    }
                    // Solver trouble degrades to the raw reconstruction for
                    // this iteration; hard input errors still propagate.
                    Err(BoundsError::Diverged { .. }) | Err(BoundsError::Sdp(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let rdms: Result<Vec<_>, _> = window_list
                .iter()
                .zip(&sets)
                .map(|(w, s)| HermitianOperator::new(w.clone(), reconstruct_rdm(s)))
                .collect();
            let rdms = rdms?;
            let mats: Vec<CMatrix<f64>> = rdms.iter().map(|r| r.matrix().clone()).collect();
            Ok(Observation {
                windows: WindowRdms::new(rdms),
                energy_estimate: wh.energy_from_rdms(&mats)?,
                sdp_lower_bound: None,
                refined: false,
            })
        }
    }
}

/// Runs the full cooling loop and records one row per iteration (row 0 is
/// the initial state). Stops early when a layer's total predicted decrease
/// falls below [`DECREASE_TOLERANCE`].
pub fn run_cooling(
    h: &LocalHamiltonian<f64>,
    config: &CoolingConfig,
) -> Result<CoolingTrace, CoolingError> {
    config.validate()?;
    let mut psi = match config.initial {
        InitialState::PlusProduct => Statevector::plus_state(h.n()),
        InitialState::HartreeFock => hartree_fock_state(h)?,
    };
    let pool = build_pool(h.hypergraph());
    let w = window_size(h, &pool);
    let window_list = contiguous_windows(h.n(), w);
    let wh = window_hamiltonian(h, &window_list)?;

    let mut obs = observe(&psi, &wh, &window_list, config, 0)?;
    let mut iterations = vec![CoolingIteration {
        layer: Vec::new(),
        energy_estimate: obs.energy_estimate,
        energy_exact: psi.energy(h),
        sdp_lower_bound: obs.sdp_lower_bound,
        refined: obs.refined,
    }];

    for l in 1..=config.max_layers {
        let mut windows = obs.windows.clone();
        let layer = greedy_layer(h, &mut windows, &pool)?;
        let total: f64 = layer.iter().map(|o| o.predicted_decrease).sum();
        if layer.is_empty() || total < DECREASE_TOLERANCE {
            break;
        }
        for op in &layer {
            psi = apply_pauli_rotation(&psi, &op.op, op.time)?;
        }
        obs = observe(&psi, &wh, &window_list, config, l as u64)?;
        iterations.push(CoolingIteration {
            layer,
            energy_estimate: obs.energy_estimate,
            energy_exact: psi.energy(h),
            sdp_lower_bound: obs.sdp_lower_bound,
            refined: obs.refined,
        });
    }

    Ok(CoolingTrace { iterations, windows: window_list, final_state: psi })
}

/// Best product state found by sitewise mean-field sweeps: each pass sets
/// every qubit to the ground state of its effective field until the energy
/// stops improving; the best of five fixed-seed random restarts wins.
pub fn hartree_fock_state(h: &LocalHamiltonian<f64>) -> Result<Statevector<f64>, CoolingError> {
    let n = h.n();
    let mut best: Option<(f64, Vec<[C<f64>; 2]>)> = None;
    for restart in 0..MEAN_FIELD_RESTARTS {
        let mut rng = substream(MEAN_FIELD_SEED, StreamKind::Auxiliary, restart, 0);
        let mut locals: Vec<[C<f64>; 2]> = (0..n).map(|_| random_qubit(&mut rng)).collect();
        let mut energy = product_energy(h, &locals);
        for _ in 0..MEAN_FIELD_MAX_SWEEPS {
            for q in 0..n {
                let field = effective_field(h, &locals, q);
                if field.frobenius_norm() < 1e-12 {
                    continue;
                }
                let eig = hermitian_eig(&field)?;
                locals[q] = [eig.vectors[(0, 0)], eig.vectors[(1, 0)]];
            }
            let next = product_energy(h, &locals);
            let improved = energy - next;
            energy = next;
            if improved.abs() < MEAN_FIELD_TOLERANCE {
                break;
            }
        }
        if best.as_ref().map(|(e, _)| energy < *e).unwrap_or(true) {
            best = Some((energy, locals));
        }
    }
    let (_, locals) = best.expect("at least one restart");
    Ok(Statevector::product_state(&locals))
}

fn random_qubit<R: Rng + ?Sized>(rng: &mut R) -> [C<f64>; 2] {
    // Uniform on the Bloch sphere: cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>.
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let half = (z.acos()) / 2.0;
    [
        Complex::new(half.cos(), 0.0),
        Complex::new(half.sin() * phi.cos(), half.sin() * phi.sin()),
    ]
}

fn qubit_density(phi: &[C<f64>; 2]) -> CMatrix<f64> {
    let mut rho = CMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            rho[(a, b)] = phi[a] * phi[b].conj();
        }
    }
    rho
}

fn product_energy(h: &LocalHamiltonian<f64>, locals: &[[C<f64>; 2]]) -> f64 {
    let mut e = 0.0;
    for j in 0..h.hypergraph().num_edges() {
        let edge = h.hypergraph().edge(j);
        let mut rho = qubit_density(&locals[edge[0]]);
        for &q in &edge[1..] {
            rho = rho.kron(&qubit_density(&locals[q]));
        }
        e += h.term(j).op.expectation_with(&rho);
    }
    e
}

/// Gradient of the product-state energy with respect to qubit `q`'s density:
/// a 2x2 Hermitian effective Hamiltonian.
fn effective_field(h: &LocalHamiltonian<f64>, locals: &[[C<f64>; 2]], q: usize) -> CMatrix<f64> {
    let mut field = CMatrix::zeros(2, 2);
    for j in 0..h.hypergraph().num_edges() {
        let edge = h.hypergraph().edge(j);
        let Some(t) = edge.iter().position(|&p| p == q) else { continue };
        let m = h.term(j).op.matrix();
        let k = edge.len();
        let dim = 1usize << k;
        let shift = k - 1 - t;
        for r in 0..dim {
            for c in 0..dim {
                let a = (r >> shift) & 1;
                let b = (c >> shift) & 1;
                let mut weight = m[(r, c)];
                for (p, &site) in edge.iter().enumerate() {
                    if p == t {
                        continue;
                    }
                    let s = k - 1 - p;
                    let rp = (r >> s) & 1;
                    let cp = (c >> s) & 1;
                    weight *= locals[site][cp] * locals[site][rp].conj();
                }
                field[(a, b)] += weight;
            }
        }
    }
    field.hermitize()
}
