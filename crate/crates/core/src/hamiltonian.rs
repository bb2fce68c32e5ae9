//! Few-body Hamiltonians on hypergraphs: each hyperedge carries a Hermitian
//! term given as a real-weighted Pauli sum on that edge's qubits.

use crate::matrix::CMatrix;
use crate::operator::{HermitianOperator, OperatorError};
use crate::pauli::{PauliError, PauliString};
use crate::scalar::{czero, Scalar, C};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("vertex {vertex} out of range for {n} qubits")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("edge {0} is empty")]
    EmptyEdge(usize),
    #[error("edge {index} {edge:?} must be strictly increasing")]
    UnsortedEdge { index: usize, edge: Vec<usize> },
    #[error("expected {edges} term lists, got {terms}")]
    TermCountMismatch { edges: usize, terms: usize },
    #[error("term {term} on edge {edge}: Pauli word length {len} does not match edge size {edge_len}")]
    TermLengthMismatch { edge: usize, term: usize, len: usize, edge_len: usize },
    #[error("coefficient {0} is not finite")]
    NonFiniteCoefficient(f64),
    #[error("expected {expected} density matrices, got {got}")]
    RdmCountMismatch { expected: usize, got: usize },
    #[error("density matrix {index} has dimension {got}, expected {expected}")]
    RdmDimensionMismatch { index: usize, got: usize, expected: usize },
    #[error("global assembly limited to {max} qubits, got {n}")]
    TooLargeForDense { n: usize, max: usize },
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Vertices `0..n` plus a list of hyperedges (sorted qubit subsets).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypergraph {
    n: usize,
    edges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(n: usize, edges: Vec<Vec<usize>>) -> Result<Self, HamiltonianError> {
        for (i, edge) in edges.iter().enumerate() {
            if edge.is_empty() {
                return Err(HamiltonianError::EmptyEdge(i));
            }
            if edge.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HamiltonianError::UnsortedEdge { index: i, edge: edge.clone() });
            }
            if let Some(&v) = edge.iter().find(|&&v| v >= n) {
                return Err(HamiltonianError::VertexOutOfRange { vertex: v, n });
            }
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> &[usize] {
        &self.edges[j]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unordered pairs `(j, j')` with intersecting edges, lexicographic order.
    pub fn overlap_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for j in 0..self.edges.len() {
            for k in (j + 1)..self.edges.len() {
                if self.edges[j].iter().any(|v| self.edges[k].contains(v)) {
                    pairs.push((j, k));
                }
            }
        }
        pairs
    }

    /// Sorted union of the two edges' vertices.
    pub fn edge_union(&self, j: usize, k: usize) -> Vec<usize> {
        let mut u = self.edges[j].clone();
        for &v in &self.edges[k] {
            if !u.contains(&v) {
                u.push(v);
            }
        }
        u.sort_unstable();
        u
    }

    /// Sorted intersection of the two edges' vertices.
    pub fn edge_intersection(&self, j: usize, k: usize) -> Vec<usize> {
        self.edges[j].iter().copied().filter(|v| self.edges[k].contains(v)).collect()
    }
}

/// One hyperedge term: a Pauli-sum decomposition plus its assembled matrix.
#[derive(Debug, Clone)]
pub struct Term<T: Scalar = f64> {
    pub pauli_terms: Vec<(PauliString, T)>,
    pub op: HermitianOperator<T>,
}

/// A Hamiltonian written as a sum of hyperedge-local Hermitian terms.
#[derive(Debug, Clone)]
pub struct LocalHamiltonian<T: Scalar = f64> {
    hypergraph: Hypergraph,
    terms: Vec<Term<T>>,
}

impl<T: Scalar> LocalHamiltonian<T> {
    /// Builds from per-edge Pauli sums; words are local to their edge.
    pub fn new(
        hypergraph: Hypergraph,
        pauli_terms: Vec<Vec<(PauliString, T)>>,
    ) -> Result<Self, HamiltonianError> {
        if pauli_terms.len() != hypergraph.num_edges() {
            return Err(HamiltonianError::TermCountMismatch {
                edges: hypergraph.num_edges(),
                terms: pauli_terms.len(),
            });
        }
        let mut terms = Vec::with_capacity(pauli_terms.len());
        for (j, words) in pauli_terms.into_iter().enumerate() {
            let edge = hypergraph.edge(j);
            let dim = 1usize << edge.len();
            let mut mat = CMatrix::zeros(dim, dim);
            for (t, (word, coeff)) in words.iter().enumerate() {
                if word.len() != edge.len() {
                    return Err(HamiltonianError::TermLengthMismatch {
                        edge: j,
                        term: t,
                        len: word.len(),
                        edge_len: edge.len(),
                    });
                }
                if !coeff.as_f64().is_finite() {
                    return Err(HamiltonianError::NonFiniteCoefficient(coeff.as_f64()));
                }
                mat = &mat + &word.matrix().scale_re(*coeff);
            }
            let op = HermitianOperator::new(edge.to_vec(), mat)?;
            terms.push(Term { pauli_terms: words, op });
        }
        Ok(Self { hypergraph, terms })
    }

    pub fn n(&self) -> usize {
        self.hypergraph.n()
    }

    pub fn hypergraph(&self) -> &Hypergraph {
        &self.hypergraph
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        self.hypergraph.edges()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, j: usize) -> &Term<T> {
        &self.terms[j]
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    /// Dense matrix on all `n` qubits; intended for small test systems.
    pub fn assemble_dense(&self) -> Result<CMatrix<T>, HamiltonianError> {
        let n = self.n();
        if n > 8 {
            return Err(HamiltonianError::TooLargeForDense { n, max: 8 });
        }
        let dim = 1usize << n;
        let mut h = CMatrix::zeros(dim, dim);
        for term in &self.terms {
            let all: Vec<usize> = (0..n).collect();
            h = &h + &term.op.embed_into(&all)?;
        }
        Ok(h)
    }

    /// Applies the Hamiltonian to a state vector without assembling it.
    pub fn apply_to_amplitudes(&self, psi: &[C<T>]) -> Vec<C<T>> {
        let n = self.n();
        assert_eq!(psi.len(), 1 << n, "state dimension mismatch");
        let mut out = vec![czero::<T>(); psi.len()];
        for term in &self.terms {
            let edge = term.op.qubits();
            let k = edge.len();
            let kdim = 1usize << k;
            let mat = term.op.matrix();
            let edge_table = crate::operator::scatter_table(n, edge);
            let rest: Vec<usize> = (0..n).filter(|q| !edge.contains(q)).collect();
            let rest_table = crate::operator::scatter_table(n, &rest);
            for &o in &rest_table {
                for r in 0..kdim {
                    let mut acc = czero::<T>();
                    for c in 0..kdim {
                        acc += mat[(r, c)] * psi[edge_table[c] | o];
                    }
                    out[edge_table[r] | o] += acc;
                }
            }
        }
        out
    }

    /// `sum_j Tr[H_j rho_j]` with one density matrix per hyperedge.
    pub fn energy_from_rdms(&self, rdms: &[CMatrix<T>]) -> Result<T, HamiltonianError> {
        if rdms.len() != self.terms.len() {
            return Err(HamiltonianError::RdmCountMismatch {
                expected: self.terms.len(),
                got: rdms.len(),
            });
        }
        let mut energy = T::zero();
        for (j, (term, rho)) in self.terms.iter().zip(rdms).enumerate() {
            if rho.rows() != term.op.dim() || !rho.is_square() {
                return Err(HamiltonianError::RdmDimensionMismatch {
                    index: j,
                    got: rho.rows(),
                    expected: term.op.dim(),
                });
            }
            energy += term.op.expectation_with(rho);
        }
        Ok(energy)
    }
}

/// Open XY chain: `J * sum_q (X_q X_{q+1} + Y_q Y_{q+1})`, one term per bond.
pub fn build_xy_chain<T: Scalar>(n: usize, coupling: T) -> LocalHamiltonian<T> {
    assert!(n >= 2, "the XY chain needs at least two qubits");
    let edges: Vec<Vec<usize>> = (0..n - 1).map(|q| vec![q, q + 1]).collect();
    let hypergraph = Hypergraph::new(n, edges).expect("chain edges are valid");
    let words: Vec<Vec<(PauliString, T)>> = (0..n - 1)
        .map(|_| {
            vec![
                ("XX".parse().expect("valid word"), coupling),
                ("YY".parse().expect("valid word"), coupling),
            ]
        })
        .collect();
    LocalHamiltonian::new(hypergraph, words).expect("chain construction is valid")
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TermEntryFile {
    pauli: String,
    coeff: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct HamiltonianFile {
    n: usize,
    edges: Vec<Vec<usize>>,
    terms: Vec<Vec<TermEntryFile>>,
}

#[derive(Debug, Error)]
pub enum HamiltonianIoError {
    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Semantic(#[from] HamiltonianError),
}

impl<T: Scalar> LocalHamiltonian<T> {
    pub fn from_json(text: &str) -> Result<Self, HamiltonianIoError> {
        let file: HamiltonianFile = serde_json::from_str(text)?;
        let hypergraph = Hypergraph::new(file.n, file.edges)?;
        let mut words = Vec::with_capacity(file.terms.len());
        for list in file.terms {
            let mut parsed = Vec::with_capacity(list.len());
            for entry in list {
                let word: PauliString =
                    entry.pauli.parse().map_err(HamiltonianError::Pauli)?;
                parsed.push((word, T::from_f64_lossy(entry.coeff)));
            }
            words.push(parsed);
        }
        Ok(Self::new(hypergraph, words)?)
    }

    pub fn to_json(&self) -> String {
        let file = HamiltonianFile {
            n: self.n(),
            edges: self.hypergraph.edges().to_vec(),
            terms: self
                .terms
                .iter()
                .map(|t| {
                    t.pauli_terms
                        .iter()
                        .map(|(w, c)| TermEntryFile { pauli: w.to_string(), coeff: c.as_f64() })
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("serialization cannot fail")
    }
}
