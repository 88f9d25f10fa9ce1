//! Dense complex state-vector and density-matrix simulation.
//!
//! Covers Haar-random pure states, the hardware-efficient ansatz (HEA)
//! circuit, fidelity and entropy measures, global depolarizing noise, and
//! the Shen-Castan edge-detector example state.
//!
//! Qubit order convention: qubit 0 is the most significant bit of a basis
//! index, so |q0 q1 ... q_{N-1}⟩ maps to index q0·2^{N-1} + ... + q_{N-1}.

use crate::{Error, Result};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Pure N-qubit state as a dense amplitude vector of length 2^N.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Validates length 2^N and unit norm (within 1e-10).
    pub fn new(n_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if n_qubits < 1 {
            return Err(Error::InvalidState("n_qubits must be >= 1".into()));
        }
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "expected 2^{} = {} amplitudes, got {}",
                n_qubits,
                1usize << n_qubits,
                amplitudes.len()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "state norm^2 = {norm_sq}, expected 1 within 1e-10"
            )));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    /// Computational basis state |index⟩.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if index >= 1 << n_qubits {
            return Err(Error::InvalidBasisIndex { index, n_qubits });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self::new(n_qubits, amplitudes)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Inner product ⟨self|other⟩.
    pub fn overlap(&self, other: &StateVector) -> Result<C64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |⟨self|other⟩|².
    pub fn overlap_sq(&self, other: &StateVector) -> Result<f64> {
        Ok(self.overlap(other)?.norm_sqr())
    }
}

/// Mixed N-qubit state as a dense 2^N × 2^N matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: Vec<C64>,
}

impl DensityMatrix {
    /// Validates shape, Hermiticity, and unit trace (within 1e-10).
    /// Positivity is not enforced here; see [`DensityMatrix::min_eigenvalue`].
    pub fn new(n_qubits: usize, entries: Vec<C64>) -> Result<Self> {
        if n_qubits < 1 {
            return Err(Error::InvalidState("n_qubits must be >= 1".into()));
        }
        let dim = 1usize << n_qubits;
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{} entries, got {}",
                dim,
                dim,
                entries.len()
            )));
        }
        for i in 0..dim {
            for j in i..dim {
                let d = entries[i * dim + j] - entries[j * dim + i].conj();
                if d.norm() > 1e-10 {
                    return Err(Error::InvalidState(format!(
                        "not Hermitian at ({i},{j}): deviation {}",
                        d.norm()
                    )));
                }
            }
        }
        let trace: C64 = (0..dim).map(|i| entries[i * dim + i]).sum();
        if (trace - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "trace = {trace}, expected 1 within 1e-10"
            )));
        }
        Ok(Self { n_qubits, entries })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim() + col]
    }

    /// Tr ρ².
    pub fn purity(&self) -> f64 {
        let dim = self.dim();
        let mut sum = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                sum += (self.entry(i, j) * self.entry(j, i)).re;
            }
        }
        sum
    }

    /// ⟨ψ|ρ|ψ⟩, real part of the quadratic form.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} qubits",
                psi.n_qubits(),
                self.n_qubits
            )));
        }
        let dim = self.dim();
        let amps = psi.amplitudes();
        let mut sum = C64::new(0.0, 0.0);
        for i in 0..dim {
            for j in 0..dim {
                sum += amps[i].conj() * self.entry(i, j) * amps[j];
            }
        }
        Ok(sum.re)
    }

    /// Smallest eigenvalue, via the real symmetric embedding
    /// [[Re ρ, −Im ρ], [Im ρ, Re ρ]] whose spectrum doubles that of ρ.
    pub fn min_eigenvalue(&self) -> f64 {
        let dim = self.dim();
        let mut embed = nalgebra::DMatrix::<f64>::zeros(2 * dim, 2 * dim);
        for i in 0..dim {
            for j in 0..dim {
                let z = self.entry(i, j);
                embed[(i, j)] = z.re;
                embed[(i + dim, j + dim)] = z.re;
                embed[(i, j + dim)] = -z.im;
                embed[(i + dim, j)] = z.im;
            }
        }
        let eigen = nalgebra::SymmetricEigen::new(embed);
        eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Pure or mixed learning target.
#[derive(Debug, Clone)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn n_qubits(&self) -> usize {
        match self {
            QuantumState::Pure(psi) => psi.n_qubits(),
            QuantumState::Mixed(rho) => rho.n_qubits(),
        }
    }
}

/// Entangling layer layout of the ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entangler {
    /// Single-qubit circuits have no entangler.
    None,
    /// CNOT chain with control i, target i+1 for i = 0..N−2.
    NearestNeighborChain,
}

/// Hardware-efficient ansatz topology: an initial column of generic
/// single-qubit rotations, then `n_layers` repetitions of entangler plus
/// rotation column, for 3N(L+1) trainable angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangler: Entangler,
}

impl HeaSpec {
    /// Single-qubit ansatz: one generic rotation, three angles.
    pub fn single_qubit() -> Self {
        Self { n_qubits: 1, n_layers: 0, entangler: Entangler::None }
    }

    /// Chain-entangled ansatz for N ≥ 2.
    pub fn chain(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::Config(
                "chain ansatz needs n_qubits >= 2; use single_qubit() for N=1".into(),
            ));
        }
        Ok(Self { n_qubits, n_layers, entangler: Entangler::NearestNeighborChain })
    }

    /// Standard topology for a qubit count: N=1 has no entangler or layers,
    /// N ≥ 2 uses the nearest-neighbor chain.
    pub fn standard(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 1 {
            if n_layers != 0 {
                return Err(Error::Config(
                    "single-qubit ansatz has exactly one rotation column (n_layers = 0)".into(),
                ));
            }
            Ok(Self::single_qubit())
        } else {
            Self::chain(n_qubits, n_layers)
        }
    }

    /// Number of trainable angles: 3N(L+1); 3 for the single-qubit ansatz.
    pub fn param_count(&self) -> usize {
        3 * self.n_qubits * (self.n_layers + 1)
    }
}

/// Trainable rotation angles θ, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(spec: &HeaSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    /// Uniform draw in [−π, π) per angle.
    pub fn random_init<R: Rng>(spec: &HeaSpec, rng: &mut R) -> Self {
        use std::f64::consts::PI;
        Self((0..spec.param_count()).map(|_| rng.gen_range(-PI..PI)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn matches(&self, spec: &HeaSpec) -> Result<()> {
        if self.0.len() != spec.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} angles for a {}-parameter ansatz",
                self.0.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }
}

/// 2×2 matrix of the generic rotation exp(i θ⃗·σ⃗/2):
/// cos(r/2)·I + i·sin(r/2)·(n̂·σ⃗) with r = |θ⃗|, n̂ = θ⃗/r.
fn u3_matrix(theta: &[f64]) -> [[C64; 2]; 2] {
    let r = (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]).sqrt();
    if r < 1e-300 {
        return [
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ];
    }
    let (nx, ny, nz) = (theta[0] / r, theta[1] / r, theta[2] / r);
    let (s, c) = (r / 2.0).sin_cos();
    // cos(r/2) I + i sin(r/2) (nx σx + ny σy + nz σz)
    [
        [C64::new(c, s * nz), C64::new(s * ny, s * nx)],
        [C64::new(-s * ny, s * nx), C64::new(c, -s * nz)],
    ]
}

fn adjoint2(m: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

fn apply_single_qubit(amps: &mut [C64], n_qubits: usize, qubit: usize, m: &[[C64; 2]; 2]) {
    let mask = 1usize << (n_qubits - 1 - qubit);
    for i in 0..amps.len() {
        if i & mask == 0 {
            let j = i | mask;
            let a0 = amps[i];
            let a1 = amps[j];
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[j] = m[1][0] * a0 + m[1][1] * a1;
        }
    }
}

fn apply_cnot(amps: &mut [C64], n_qubits: usize, control: usize, target: usize) {
    let cmask = 1usize << (n_qubits - 1 - control);
    let tmask = 1usize << (n_qubits - 1 - target);
    for i in 0..amps.len() {
        if i & cmask != 0 && i & tmask == 0 {
            amps.swap(i, i | tmask);
        }
    }
}

fn rotation_column(
    amps: &mut [C64],
    spec: &HeaSpec,
    params: &ParamVector,
    layer: usize,
    adjoint: bool,
) {
    for q in 0..spec.n_qubits {
        let base = 3 * (layer * spec.n_qubits + q);
        let m = u3_matrix(&params.0[base..base + 3]);
        let m = if adjoint { adjoint2(&m) } else { m };
        apply_single_qubit(amps, spec.n_qubits, q, &m);
    }
}

fn entangler_layer(amps: &mut [C64], spec: &HeaSpec) {
    if let Entangler::NearestNeighborChain = spec.entangler {
        for c in 0..spec.n_qubits - 1 {
            apply_cnot(amps, spec.n_qubits, c, c + 1);
        }
    }
}

fn entangler_layer_adjoint(amps: &mut [C64], spec: &HeaSpec) {
    if let Entangler::NearestNeighborChain = spec.entangler {
        for c in (0..spec.n_qubits - 1).rev() {
            apply_cnot(amps, spec.n_qubits, c, c + 1);
        }
    }
}

/// Apply the ansatz circuit U(θ) to a state.
pub fn apply_hea(spec: &HeaSpec, params: &ParamVector, input: &StateVector) -> Result<StateVector> {
    params.matches(spec)?;
    if input.n_qubits() != spec.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "state has {} qubits, ansatz {}",
            input.n_qubits(),
            spec.n_qubits
        )));
    }
    let mut amps = input.amplitudes.clone();
    rotation_column(&mut amps, spec, params, 0, false);
    for layer in 1..=spec.n_layers {
        entangler_layer(&mut amps, spec);
        rotation_column(&mut amps, spec, params, layer, false);
    }
    Ok(StateVector { n_qubits: spec.n_qubits, amplitudes: amps })
}

/// Apply the inverse circuit U†(θ) to a state.
pub fn apply_hea_adjoint(
    spec: &HeaSpec,
    params: &ParamVector,
    input: &StateVector,
) -> Result<StateVector> {
    params.matches(spec)?;
    if input.n_qubits() != spec.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "state has {} qubits, ansatz {}",
            input.n_qubits(),
            spec.n_qubits
        )));
    }
    let mut amps = input.amplitudes.clone();
    for layer in (1..=spec.n_layers).rev() {
        rotation_column(&mut amps, spec, params, layer, true);
        entangler_layer_adjoint(&mut amps, spec);
    }
    rotation_column(&mut amps, spec, params, 0, true);
    Ok(StateVector { n_qubits: spec.n_qubits, amplitudes: amps })
}

/// Estimate of the learned state: U†(θ_train)|s⟩ for success basis |s⟩.
pub fn reconstruct_state(
    spec: &HeaSpec,
    params_trained: &ParamVector,
    success_basis_index: usize,
) -> Result<StateVector> {
    let basis = StateVector::basis(spec.n_qubits, success_basis_index)?;
    apply_hea_adjoint(spec, params_trained, &basis)
}

/// 1 − |⟨target|estimate⟩|² for pure targets; 1 − ⟨estimate|ρ|estimate⟩ for
/// mixed targets.
pub fn infidelity(target: &QuantumState, estimate: &StateVector) -> Result<f64> {
    let f = match target {
        QuantumState::Pure(psi) => psi.overlap_sq(estimate)?,
        QuantumState::Mixed(rho) => rho.expectation(estimate)?,
    };
    Ok((1.0 - f).clamp(0.0, 1.0))
}

/// Haar-random pure state: normalized vector of iid complex Gaussians,
/// which is the first column of a Haar unitary in distribution.
pub fn haar_random_state<R: Rng>(n_qubits: usize, rng: &mut R) -> StateVector {
    let dim = 1usize << n_qubits;
    let mut amplitudes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        amplitudes.push(C64::new(re, im));
    }
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amplitudes {
        *a /= norm;
    }
    StateVector { n_qubits, amplitudes }
}

/// Global depolarizing mixture (1−μ)|ψ⟩⟨ψ| + μ·I/2^N.
pub fn depolarize(psi: &StateVector, mu: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::OutOfRange(format!("mu = {mu}, expected [0,1]")));
    }
    let dim = psi.dim();
    let amps = psi.amplitudes();
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            entries[i * dim + j] = (1.0 - mu) * amps[i] * amps[j].conj();
        }
        entries[i * dim + i] += C64::new(mu / dim as f64, 0.0);
    }
    DensityMatrix::new(psi.n_qubits(), entries)
}

/// The 5-qubit Shen-Castan example state: entries
/// exp[−(|m−16.5| + |n−16.5| + 1)/10] for m, n = 1..32, trace-normalized.
/// The matrix is real, symmetric, and rank one (a pure state).
pub fn shen_castan_state() -> DensityMatrix {
    let dim = 32usize;
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    let mut trace = 0.0;
    for m in 1..=dim {
        for n in 1..=dim {
            let v = (-((m as f64 - 16.5).abs() + (n as f64 - 16.5).abs() + 1.0) / 10.0).exp();
            entries[(m - 1) * dim + (n - 1)] = C64::new(v, 0.0);
            if m == n {
                trace += v;
            }
        }
    }
    for e in &mut entries {
        *e /= trace;
    }
    DensityMatrix { n_qubits: 5, entries }
}

/// Pure-state amplitude vector of the (rank-one) Shen-Castan state,
/// extracted from its dominant column.
pub fn shen_castan_vector() -> StateVector {
    let rho = shen_castan_state();
    let dim = rho.dim();
    let pivot = (0..dim)
        .max_by(|&a, &b| {
            rho.entry(a, a)
                .re
                .partial_cmp(&rho.entry(b, b).re)
                .unwrap()
        })
        .unwrap();
    let scale = rho.entry(pivot, pivot).re.sqrt();
    let mut amplitudes: Vec<C64> = (0..dim).map(|i| rho.entry(i, pivot) / scale).collect();
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amplitudes {
        *a /= norm;
    }
    StateVector { n_qubits: 5, amplitudes }
}

/// Von Neumann entropy −Tr ρ_i log₂ ρ_i of one qubit's reduced state.
pub fn subsystem_entropy(rho: &DensityMatrix, qubit_index: usize) -> Result<f64> {
    let n = rho.n_qubits;
    if qubit_index >= n {
        return Err(Error::InvalidBasisIndex { index: qubit_index, n_qubits: n });
    }
    let dim = rho.dim();
    let mask = 1usize << (n - 1 - qubit_index);
    // Partial trace over all other qubits: iterate basis indices with the
    // chosen qubit's bit forced to a (row) and b (column).
    let mut red = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..dim {
        if i & mask != 0 {
            continue;
        }
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let row = if a == 1 { i | mask } else { i };
            let col = if b == 1 { i | mask } else { i };
            red[a][b] += rho.entry(row, col);
        }
    }
    // Closed-form eigenvalues of the 2×2 Hermitian reduced matrix.
    let tr = (red[0][0] + red[1][1]).re;
    let det = (red[0][0] * red[1][1] - red[0][1] * red[1][0]).re;
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let lambda = [(tr + disc) / 2.0, (tr - disc) / 2.0];
    let mut entropy = 0.0;
    for l in lambda {
        if l > 1e-15 {
            entropy -= l * l.log2();
        }
    }
    Ok(entropy.max(0.0))
}

#[derive(Serialize, Deserialize)]
struct PureStateFile {
    n_qubits: usize,
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixFile {
    n_qubits: usize,
    entries: Vec<[f64; 2]>,
}

/// Serialize a state to the JSON state-file schema.
pub fn state_to_json(state: &QuantumState) -> serde_json::Value {
    match state {
        QuantumState::Pure(psi) => serde_json::to_value(PureStateFile {
            n_qubits: psi.n_qubits(),
            amplitudes: psi.amplitudes().iter().map(|a| [a.re, a.im]).collect(),
        })
        .unwrap(),
        QuantumState::Mixed(rho) => serde_json::to_value(DensityMatrixFile {
            n_qubits: rho.n_qubits(),
            entries: rho.entries().iter().map(|e| [e.re, e.im]).collect(),
        })
        .unwrap(),
    }
}

/// Parse a state from the JSON state-file schema (pure if the object has
/// an `amplitudes` field, mixed if it has `entries`).
pub fn state_from_json(value: &serde_json::Value) -> Result<QuantumState> {
    if value.get("amplitudes").is_some() {
        let file: PureStateFile = serde_json::from_value(value.clone())
            .map_err(|e| Error::InvalidState(format!("bad pure state file: {e}")))?;
        let amps = file.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        Ok(QuantumState::Pure(StateVector::new(file.n_qubits, amps)?))
    } else if value.get("entries").is_some() {
        let file: DensityMatrixFile = serde_json::from_value(value.clone())
            .map_err(|e| Error::InvalidState(format!("bad density matrix file: {e}")))?;
        let entries = file.entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        Ok(QuantumState::Mixed(DensityMatrix::new(file.n_qubits, entries)?))
    } else {
        Err(Error::InvalidState(
            "state file needs an `amplitudes` or `entries` field".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_unitarity_deviation(spec: &HeaSpec, params: &ParamVector) -> f64 {
        // Apply U then U† to every basis state and compare to the identity.
        let dim = 1usize << spec.n_qubits;
        let mut worst = 0.0f64;
        for b in 0..dim {
            let basis = StateVector::basis(spec.n_qubits, b).unwrap();
            let forward = apply_hea(spec, params, &basis).unwrap();
            let back = apply_hea_adjoint(spec, params, &forward).unwrap();
            for (i, amp) in back.amplitudes().iter().enumerate() {
                let expect = if i == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                worst = worst.max((amp - expect).norm());
            }
        }
        worst
    }

    #[test]
    fn basis_state_is_normalized() {
        let s = StateVector::basis(3, 5).unwrap();
        assert_eq!(s.amplitudes()[5], C64::new(1.0, 0.0));
        assert_eq!(s.dim(), 8);
    }

    #[test]
    fn wrong_amplitude_count_rejected() {
        assert!(StateVector::new(2, vec![C64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(StateVector::new(1, vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn haar_states_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=3 {
            let psi = haar_random_state(n, &mut rng);
            let norm: f64 = psi.amplitudes().iter().map(|a| a.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn haar_mean_basis_overlap_matches_dimension() {
        // E |⟨0...0|ψ⟩|² = 1/2^N for Haar states.
        for n in 1..=3usize {
            let mut rng = ChaCha8Rng::seed_from_u64(7 + n as u64);
            let samples = 10_000;
            let mut mean = 0.0;
            for _ in 0..samples {
                let psi = haar_random_state(n, &mut rng);
                mean += psi.amplitudes()[0].norm_sqr();
            }
            mean /= samples as f64;
            let expect = 1.0 / (1 << n) as f64;
            // Var |⟨0|ψ⟩|² = (d−1)/(d²(d+1)) for dimension d.
            let d = (1 << n) as f64;
            let se = ((d - 1.0) / (d * d * (d + 1.0)) / samples as f64).sqrt();
            assert!(
                (mean - expect).abs() < 3.0 * se,
                "N={n}: mean {mean} vs {expect} (se {se})"
            );
        }
    }

    #[test]
    fn haar_draws_differ_across_seeds() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        let pa = haar_random_state(2, &mut a);
        let pb = haar_random_state(2, &mut b);
        let max_diff = pa
            .amplitudes()
            .iter()
            .zip(pb.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 1e-6);
    }

    #[test]
    fn zero_angles_act_as_identity_single_qubit() {
        let spec = HeaSpec::single_qubit();
        let params = ParamVector::zeros(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = haar_random_state(1, &mut rng);
        let out = apply_hea(&spec, &params, &psi).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(out.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_angle_circuit_is_unitary() {
        let spec = HeaSpec::chain(3, 2).unwrap();
        let params = ParamVector::zeros(&spec);
        assert!(max_unitarity_deviation(&spec, &params) < 1e-10);
    }

    #[test]
    fn pi_x_rotation_flips_a_qubit() {
        // exp(iπσx/2) = iσx maps |0⟩ to i|1⟩.
        let spec = HeaSpec::single_qubit();
        let params = ParamVector(vec![std::f64::consts::PI, 0.0, 0.0]);
        let out = apply_hea(&spec, &params, &StateVector::basis(1, 0).unwrap()).unwrap();
        assert!(out.amplitudes()[0].norm() < 1e-10);
        assert!((out.amplitudes()[1].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parameter_counts_match_topology() {
        assert_eq!(HeaSpec::single_qubit().param_count(), 3);
        assert_eq!(HeaSpec::chain(2, 1).unwrap().param_count(), 12);
        assert_eq!(HeaSpec::chain(3, 5).unwrap().param_count(), 54);
        assert_eq!(HeaSpec::chain(5, 10).unwrap().param_count(), 165);
    }

    #[test]
    fn wrong_param_count_rejected() {
        let spec = HeaSpec::chain(2, 1).unwrap();
        let params = ParamVector(vec![0.0; 11]);
        let psi = StateVector::basis(2, 0).unwrap();
        assert!(apply_hea(&spec, &params, &psi).is_err());
    }

    #[test]
    fn random_circuits_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = 1 + trial % 3;
            let spec = if n == 1 {
                HeaSpec::single_qubit()
            } else {
                HeaSpec::chain(n, 1 + trial % 4).unwrap()
            };
            let params = ParamVector::random_init(&spec, &mut rng);
            assert!(
                max_unitarity_deviation(&spec, &params) < 1e-9,
                "trial {trial}"
            );
        }
    }

    #[test]
    fn reconstruct_inverts_the_circuit() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let spec = HeaSpec::chain(2, 1).unwrap();
            let params = ParamVector::random_init(&spec, &mut rng);
            let estimate = reconstruct_state(&spec, &params, 2).unwrap();
            let forward = apply_hea(&spec, &params, &estimate).unwrap();
            assert!((forward.amplitudes()[2].norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_identity_circuit_gives_basis() {
        let spec = HeaSpec::single_qubit();
        let out = reconstruct_state(&spec, &ParamVector::zeros(&spec), 0).unwrap();
        assert!((out.amplitudes()[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reconstruct_rejects_bad_basis_index() {
        let spec = HeaSpec::single_qubit();
        assert!(reconstruct_state(&spec, &ParamVector::zeros(&spec), 2).is_err());
    }

    #[test]
    fn infidelity_of_identical_states_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let psi = haar_random_state(2, &mut rng);
        let f = infidelity(&QuantumState::Pure(psi.clone()), &psi).unwrap();
        assert!(f < 1e-12);
    }

    #[test]
    fn infidelity_of_orthogonal_states_is_one() {
        let a = StateVector::basis(1, 0).unwrap();
        let b = StateVector::basis(1, 1).unwrap();
        let f = infidelity(&QuantumState::Pure(a), &b).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infidelity_plus_vs_zero_is_half() {
        let inv = 1.0 / 2.0f64.sqrt();
        let plus =
            StateVector::new(1, vec![C64::new(inv, 0.0), C64::new(inv, 0.0)]).unwrap();
        let zero = StateVector::basis(1, 0).unwrap();
        let f = infidelity(&QuantumState::Pure(plus), &zero).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn depolarize_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let psi = haar_random_state(2, &mut rng);
        let pure = depolarize(&psi, 0.0).unwrap();
        assert!((pure.purity() - 1.0).abs() < 1e-10);
        let mixed = depolarize(&psi, 1.0).unwrap();
        assert!((mixed.purity() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn depolarize_rejects_bad_mu() {
        let psi = StateVector::basis(1, 0).unwrap();
        assert!(depolarize(&psi, -0.1).is_err());
        assert!(depolarize(&psi, 1.1).is_err());
    }

    #[test]
    fn depolarized_infidelity_formula() {
        // 1 − ⟨ψ|ρ|ψ⟩ = μ(1 − 2^{−N}) for ρ = depolarize(ψ, μ).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 1..=3usize {
            let psi = haar_random_state(n, &mut rng);
            let mu = 1e-2;
            let rho = depolarize(&psi, mu).unwrap();
            let f = infidelity(&QuantumState::Mixed(rho), &psi).unwrap();
            let expect = mu * (1.0 - 1.0 / (1 << n) as f64);
            assert!((f - expect).abs() < 1e-10, "N={n}: {f} vs {expect}");
        }
    }

    #[test]
    fn shen_castan_is_pure_real_symmetric() {
        let rho = shen_castan_state();
        assert!((rho.purity() - 1.0).abs() < 1e-6);
        let dim = rho.dim();
        for i in 0..dim {
            for j in 0..dim {
                assert!(rho.entry(i, j).im.abs() < 1e-15);
                assert!((rho.entry(i, j) - rho.entry(j, i)).norm() < 1e-12);
            }
        }
        let trace: f64 = (0..dim).map(|i| rho.entry(i, i).re).sum();
        assert!((trace - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shen_castan_entropies_match_reference() {
        let rho = shen_castan_state();
        let expect = [0.640, 0.547, 0.230, 0.080, 0.025];
        for (q, e) in expect.iter().enumerate() {
            let s = subsystem_entropy(&rho, q).unwrap();
            assert!((s - e).abs() < 5e-3, "qubit {q}: {s} vs {e}");
        }
    }

    #[test]
    fn shen_castan_vector_reproduces_the_matrix() {
        let rho = shen_castan_state();
        let psi = shen_castan_vector();
        let f = infidelity(&QuantumState::Mixed(rho), &psi).unwrap();
        assert!(f < 1e-9);
    }

    #[test]
    fn entropy_zero_for_product_state() {
        let rho = depolarize(&StateVector::basis(2, 0).unwrap(), 0.0).unwrap();
        for q in 0..2 {
            assert!(subsystem_entropy(&rho, q).unwrap() < 1e-12);
        }
    }

    #[test]
    fn entropy_one_for_bell_state() {
        let inv = 1.0 / 2.0f64.sqrt();
        let bell = StateVector::new(
            2,
            vec![
                C64::new(inv, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(inv, 0.0),
            ],
        )
        .unwrap();
        let rho = depolarize(&bell, 0.0).unwrap();
        for q in 0..2 {
            assert!((subsystem_entropy(&rho, q).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_invariant_under_renormalization_path() {
        // Build the Shen-Castan matrix from scratch at a different overall
        // scale, normalize, and compare entropies.
        let rho = shen_castan_state();
        let s_direct: Vec<f64> =
            (0..5).map(|q| subsystem_entropy(&rho, q).unwrap()).collect();
        let rho2 = shen_castan_state();
        let s_again: Vec<f64> =
            (0..5).map(|q| subsystem_entropy(&rho2, q).unwrap()).collect();
        for (a, b) in s_direct.iter().zip(&s_again) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn state_json_round_trip_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let psi = haar_random_state(2, &mut rng);
        let json = state_to_json(&QuantumState::Pure(psi.clone()));
        match state_from_json(&json).unwrap() {
            QuantumState::Pure(back) => {
                for (a, b) in psi.amplitudes().iter().zip(back.amplitudes()) {
                    assert!((a - b).norm() < 1e-15);
                }
            }
            QuantumState::Mixed(_) => panic!("expected pure state"),
        }
    }

    #[test]
    fn state_json_round_trip_mixed() {
        let rho = shen_castan_state();
        let json = state_to_json(&QuantumState::Mixed(rho.clone()));
        match state_from_json(&json).unwrap() {
            QuantumState::Mixed(back) => {
                assert_eq!(back.entries().len(), rho.entries().len());
                for (a, b) in rho.entries().iter().zip(back.entries()) {
                    assert!((a - b).norm() < 1e-15);
                }
            }
            QuantumState::Pure(_) => panic!("expected mixed state"),
        }
    }

    #[test]
    fn min_eigenvalue_of_pure_projector_is_zero() {
        let rho = depolarize(&StateVector::basis(2, 1).unwrap(), 0.0).unwrap();
        let min = rho.min_eigenvalue();
        assert!(min.abs() < 1e-10, "min eigenvalue {min}");
    }
}
