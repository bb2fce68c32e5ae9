//! Local tomography from randomized Pauli measurements.
//!
//! Every shot measures all qubits, each in an X/Y/Z basis drawn uniformly at
//! random. A shot contributes to the estimate of a Pauli word whenever its
//! basis agrees with the word on the word's support; the estimate is the mean
//! of the +-1 parities over those matching shots. One pool of shots therefore
//! serves every hyperedge and every window at once.

use crate::hamiltonian::{HamiltonianError, LocalHamiltonian};
use crate::matrix::CMatrix;
use crate::operator::HermitianOperator;
use crate::pauli::{bloch_decompose, bloch_reconstruct, Pauli, PauliString};
use crate::sim::{sample_shot, ShotRecord, SimError, Statevector};
use rand::Rng;
use thiserror::Error;

/// Variance assigned to exactly-known Bloch coefficients. Keeps downstream
/// interval scaling well conditioned while being far below any shot-noise
/// variance that occurs in practice at desk-scale shot counts.
pub const EXACT_VARIANCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("qubit set {0:?} must be ascending, non-empty, and within range")]
    BadQubitSet(Vec<usize>),
    #[error("subset of size {k} exceeds the supported maximum {max}")]
    SubsetTooLarge { k: usize, max: usize },
    #[error("full-state reconstruction supports at most {max} qubits, got {n}")]
    TooManyQubits { n: usize, max: usize },
    #[error("shot-log line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("bootstrap needs at least one shot")]
    EmptyDataset,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

/// Largest qubit subset an estimate set may cover (4^5 Pauli words).
pub const MAX_SUBSET: usize = 5;

/// A batch of randomized measurement shots on a fixed register.
#[derive(Debug, Clone)]
pub struct MeasurementDataset {
    n: usize,
    shots: Vec<ShotRecord>,
}

impl MeasurementDataset {
    pub fn new(n: usize, shots: Vec<ShotRecord>) -> Result<Self, TomographyError> {
        for (i, shot) in shots.iter().enumerate() {
            if shot.n() != n || shot.basis.weight() != n {
                return Err(TomographyError::Malformed {
                    line: i,
                    message: format!("shot basis {} invalid for {} qubits", shot.basis, n),
                });
            }
        }
        Ok(Self { n, shots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn shots(&self) -> &[ShotRecord] {
        &self.shots
    }

    /// Serializes as CSV with a header row; round trips bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shot_index,basis,outcome\n");
        for (i, shot) in self.shots.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i, shot.basis, shot.bits_string()));
        }
        out
    }

    /// Parses the shot-log CSV format; `#` lines and the header are skipped.
    pub fn from_csv(text: &str) -> Result<Self, TomographyError> {
        let mut shots = Vec::new();
        let mut n = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("shot_index") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(TomographyError::Malformed {
                    line: lineno + 1,
                    message: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let record = ShotRecord::from_strings(fields[1], fields[2]).map_err(|e| {
                TomographyError::Malformed { line: lineno + 1, message: e.to_string() }
            })?;
            match n {
                None => n = Some(record.n()),
                Some(expected) if expected != record.n() => {
                    return Err(TomographyError::Malformed {
                        line: lineno + 1,
                        message: format!("length {} != {}", record.n(), expected),
                    });
                }
                _ => {}
            }
            shots.push(record);
        }
        let n = n.ok_or(TomographyError::EmptyDataset)?;
        Self::new(n, shots)
    }
}

/// Draws `count` shots, each in an independent uniformly random basis word.
pub fn collect_random_pauli_shots<R: Rng + ?Sized>(
    psi: &Statevector<f64>,
    count: usize,
    rng: &mut R,
) -> Result<MeasurementDataset, TomographyError> {
    let n = psi.n();
    let mut shots = Vec::with_capacity(count);
    for _ in 0..count {
        let codes: Vec<Pauli> =
            (0..n).map(|_| Pauli::from_code(rng.gen_range(1..=3u8))).collect();
        let basis = PauliString::new(codes);
        shots.push(sample_shot(psi, &basis, rng)?);
    }
    MeasurementDataset::new(n, shots)
}

/// One Pauli-word estimate: raw mean, match count, and variance of the mean.
#[derive(Debug, Clone, Copy)]
pub struct BlochEstimate {
    /// Mean of +-1 parities over matching shots; 0 when nothing matched.
    pub value: f64,
    /// Number of matching shots.
    pub matches: usize,
    /// Variance of the mean, from the additively smoothed estimate; always
    /// strictly positive.
    pub variance: f64,
}

/// Bloch-coefficient estimates for every Pauli word on a qubit subset,
/// indexed base-4 (index 0 is the identity, pinned to 1).
#[derive(Debug, Clone)]
pub struct BlochEstimateSet {
    qubits: Vec<usize>,
    entries: Vec<BlochEstimate>,
}

impl BlochEstimateSet {
    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn k(&self) -> usize {
        self.qubits.len()
    }

    pub fn entries(&self) -> &[BlochEstimate] {
        &self.entries
    }

    /// Estimate for a local base-4 Pauli index.
    pub fn entry(&self, index: usize) -> &BlochEstimate {
        &self.entries[index]
    }

    /// Returns a copy with one estimate replaced (the identity at index 0 is
    /// pinned and cannot be changed). Useful for sensitivity experiments.
    pub fn with_entry(&self, index: usize, entry: BlochEstimate) -> Self {
        assert!(
            index > 0 && index < self.entries.len(),
            "index {index} is the identity or out of range"
        );
        assert!(entry.variance > 0.0, "variance must be positive");
        let mut out = self.clone();
        out.entries[index] = entry;
        out
    }

    /// Builds an exact-valued set from a known density matrix; variances are
    /// pinned at [`EXACT_VARIANCE_FLOOR`].
    pub fn from_exact_rdm(rdm: &HermitianOperator<f64>) -> Result<Self, TomographyError> {
        let k = rdm.qubits().len();
        if k > MAX_SUBSET {
            return Err(TomographyError::SubsetTooLarge { k, max: MAX_SUBSET });
        }
        let coeffs = bloch_decompose(rdm.matrix()).map_err(|e| TomographyError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        let entries = coeffs
            .iter()
            .map(|&value| BlochEstimate { value, matches: usize::MAX, variance: EXACT_VARIANCE_FLOOR })
            .collect();
        Ok(Self { qubits: rdm.qubits().to_vec(), entries })
    }
}

fn validate_subset(n: usize, qubits: &[usize]) -> Result<(), TomographyError> {
    let ok = !qubits.is_empty()
        && qubits.windows(2).all(|w| w[0] < w[1])
        && qubits.iter().all(|&q| q < n);
    if !ok {
        return Err(TomographyError::BadQubitSet(qubits.to_vec()));
    }
    if qubits.len() > MAX_SUBSET {
        return Err(TomographyError::SubsetTooLarge { k: qubits.len(), max: MAX_SUBSET });
    }
    Ok(())
}

/// Core accumulation; `selection` optionally restricts/reweights the shots
/// (bootstrap resamples pass an index multiset).
fn accumulate_bloch(
    dataset: &MeasurementDataset,
    qubits: &[usize],
    selection: Option<&[usize]>,
) -> BlochEstimateSet {
    let k = qubits.len();
    let words = 4usize.pow(k as u32);
    let mut counts = vec![0u64; words];
    let mut sums = vec![0i64; words];
    let mut pow4 = vec![0usize; k];
    for (j, p) in pow4.iter_mut().enumerate() {
        *p = 4usize.pow((k - 1 - j) as u32);
    }
    let mut codes = vec![0usize; k];
    let mut bits = vec![0u32; k];
    let mut process = |shot: &ShotRecord| {
        for (j, &q) in qubits.iter().enumerate() {
            codes[j] = shot.basis.code(q).code() as usize;
            bits[j] = shot.bit(q) as u32;
        }
        for mask in 1..(1u32 << k) {
            let mut idx = 0usize;
            let mut parity = 0u32;
            for j in 0..k {
                if mask & (1 << j) != 0 {
                    idx += codes[j] * pow4[j];
                    parity ^= bits[j];
                }
            }
            counts[idx] += 1;
            sums[idx] += if parity == 0 { 1 } else { -1 };
        }
    };
    match selection {
        Some(indices) => {
            for &i in indices {
                process(&dataset.shots[i]);
            }
        }
        None => {
            for shot in &dataset.shots {
                process(shot);
            }
        }
    }

    let total = selection.map_or(dataset.len(), |s| s.len());
    let mut entries = Vec::with_capacity(words);
    entries.push(BlochEstimate { value: 1.0, matches: total, variance: EXACT_VARIANCE_FLOOR });
    for idx in 1..words {
        let n_match = counts[idx];
        let (value, variance) = if n_match == 0 {
            (0.0, 1.0)
        } else {
            let raw = sums[idx] as f64 / n_match as f64;
            let smoothed = sums[idx] as f64 / (n_match as f64 + 2.0);
            let var = (1.0 - smoothed * smoothed) / n_match as f64;
            (raw, var)
        };
        entries.push(BlochEstimate { value, matches: n_match as usize, variance });
    }
    BlochEstimateSet { qubits: qubits.to_vec(), entries }
}

/// Estimates every Pauli word on `qubits` from the matching shots.
pub fn estimate_local_bloch(
    dataset: &MeasurementDataset,
    qubits: &[usize],
) -> Result<BlochEstimateSet, TomographyError> {
    validate_subset(dataset.n(), qubits)?;
    Ok(accumulate_bloch(dataset, qubits, None))
}

/// Linear-inversion density matrix from the estimates; Hermitian and unit
/// trace by construction, but not necessarily positive semidefinite.
pub fn reconstruct_rdm(set: &BlochEstimateSet) -> CMatrix<f64> {
    let coeffs: Vec<f64> = set.entries.iter().map(|e| e.value).collect();
    bloch_reconstruct(&coeffs, set.k())
}

/// Full-register linear inversion, feasible only for small registers.
pub fn reconstruct_full_state(
    dataset: &MeasurementDataset,
) -> Result<CMatrix<f64>, TomographyError> {
    let n = dataset.n();
    if n > MAX_SUBSET {
        return Err(TomographyError::TooManyQubits { n, max: MAX_SUBSET });
    }
    let all: Vec<usize> = (0..n).collect();
    let set = estimate_local_bloch(dataset, &all)?;
    Ok(reconstruct_rdm(&set))
}

/// Shots needed so that, with probability at least 1/2, every single
/// Pauli-word estimate on `n` qubits lands within `eps`:
/// `ceil(4 ln(2) n / eps^2)`.
pub fn required_shots(n: usize, eps: f64) -> Result<u64, TomographyError> {
    if !(eps > 0.0) {
        return Err(TomographyError::BadEpsilon(eps));
    }
    let raw = 4.0 * std::f64::consts::LN_2 * n as f64 / (eps * eps);
    Ok(raw.ceil() as u64)
}

/// An energy point estimate with a bootstrap percentile interval.
#[derive(Debug, Clone, Copy)]
pub struct EnergyEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub resamples: usize,
}

impl EnergyEstimate {
    /// Exact-limit estimate: zero-width interval around a known value.
    pub fn exact(value: f64) -> Self {
        Self { value, ci_low: value, ci_high: value, confidence: 1.0, resamples: 0 }
    }
}

fn energy_of_selection(
    h: &LocalHamiltonian<f64>,
    dataset: &MeasurementDataset,
    selection: Option<&[usize]>,
) -> Result<f64, TomographyError> {
    let mut rdms = Vec::with_capacity(h.num_terms());
    for edge in h.edges() {
        let set = match selection {
            Some(_) => accumulate_bloch(dataset, edge, selection),
            None => estimate_local_bloch(dataset, edge)?,
        };
        rdms.push(reconstruct_rdm(&set));
    }
    Ok(h.energy_from_rdms(&rdms)?)
}

/// Linear interpolation between order statistics (sorted input).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let last = sorted.len() - 1;
    let pos = p.clamp(0.0, 1.0) * last as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo >= last {
        sorted[last]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Point energy from the full dataset plus a percentile-bootstrap interval
/// over whole-shot resamples. The interval always contains the point value.
pub fn energy_estimate_with_ci<R: Rng + ?Sized>(
    h: &LocalHamiltonian<f64>,
    dataset: &MeasurementDataset,
    resamples: usize,
    confidence: f64,
    rng: &mut R,
) -> Result<EnergyEstimate, TomographyError> {
    if dataset.is_empty() {
        return Err(TomographyError::EmptyDataset);
    }
    assert!((0.0..1.0).contains(&(1.0 - confidence)) && confidence > 0.0, "confidence in (0,1)");
    let value = energy_of_selection(h, dataset, None)?;
    if resamples == 0 {
        return Ok(EnergyEstimate { value, ci_low: value, ci_high: value, confidence, resamples });
    }
    let n_s = dataset.len();
    let mut energies = Vec::with_capacity(resamples);
    let mut indices = vec![0usize; n_s];
    for _ in 0..resamples {
        for slot in &mut indices {
            *slot = rng.gen_range(0..n_s);
        }
        energies.push(energy_of_selection(h, dataset, Some(&indices))?);
    }
    energies.sort_by(|a, b| a.partial_cmp(b).expect("energies are finite"));
    let tail = (1.0 - confidence) / 2.0;
    let ci_low = percentile(&energies, tail).min(value);
    let ci_high = percentile(&energies, 1.0 - tail).max(value);
    Ok(EnergyEstimate { value, ci_low, ci_high, confidence, resamples })
}
