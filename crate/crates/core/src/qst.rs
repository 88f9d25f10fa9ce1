//! Maximum-likelihood tomography baseline: Pauli measurement settings,
//! shot simulation, and the damped RρR iteration.

use crate::qsim::{DensityMatrix, StateVector};
use crate::{Error, Result};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

const I2: [C64; 4] = [
    C64::new(1.0, 0.0),
    C64::new(0.0, 0.0),
    C64::new(0.0, 0.0),
    C64::new(1.0, 0.0),
];

fn pauli(axis: u8) -> [C64; 4] {
    let z = C64::new(0.0, 0.0);
    match axis {
        1 => [z, C64::new(1.0, 0.0), C64::new(1.0, 0.0), z],
        2 => [z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z],
        3 => [C64::new(1.0, 0.0), z, z, C64::new(-1.0, 0.0)],
        _ => I2,
    }
}

/// (I ± P)/2 for a single-qubit Pauli axis.
fn eigenprojector(axis: u8, sign: f64) -> [C64; 4] {
    let p = pauli(axis);
    let mut out = [C64::new(0.0, 0.0); 4];
    for i in 0..4 {
        out[i] = (I2[i] + sign * p[i]) * 0.5;
    }
    out
}

fn kron(a: &[C64], da: usize, b: &[C64], db: usize) -> Vec<C64> {
    let d = da * db;
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..da {
        for j in 0..da {
            let f = a[i * da + j];
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k) * d + (j * db + l)] = f * b[k * db + l];
                }
            }
        }
    }
    out
}

/// One measurement setting: a base-4 label over qubits (0 = identity,
/// 1..3 = X/Y/Z) and its complete outcome projector set.
#[derive(Debug, Clone)]
pub struct Setting {
    pub axes: Vec<u8>,
    /// Dense dim×dim projectors, row-major; they sum to the identity.
    pub projectors: Vec<Vec<C64>>,
}

/// All 4^N − 1 non-identity tensor-product settings.
#[derive(Debug, Clone)]
pub struct PauliSettings {
    pub n_qubits: usize,
    pub settings: Vec<Setting>,
}

impl PauliSettings {
    /// Total outcome projectors across every setting.
    pub fn outcome_count(&self) -> usize {
        self.settings.iter().map(|s| s.projectors.len()).sum()
    }
}

/// Enumerate the tensor-product settings over {I, X, Y, Z} per qubit,
/// skipping the all-identity combination. Identity factors keep a single
/// outcome; Pauli factors split into their ± eigenprojectors.
pub fn build_settings(n_qubits: usize) -> Result<PauliSettings> {
    if n_qubits < 1 {
        return Err(Error::Config("n_qubits must be >= 1".into()));
    }
    let total = 4usize.pow(n_qubits as u32);
    let mut settings = Vec::with_capacity(total - 1);
    for code in 1..total {
        let axes: Vec<u8> = (0..n_qubits)
            .map(|q| ((code / 4usize.pow((n_qubits - 1 - q) as u32)) % 4) as u8)
            .collect();
        let mut projectors: Vec<Vec<C64>> = vec![vec![C64::new(1.0, 0.0)]];
        let mut dim = 1;
        for &axis in &axes {
            let factors: Vec<[C64; 4]> = if axis == 0 {
                vec![I2]
            } else {
                vec![eigenprojector(axis, 1.0), eigenprojector(axis, -1.0)]
            };
            let mut next = Vec::with_capacity(projectors.len() * factors.len());
            for p in &projectors {
                for f in &factors {
                    next.push(kron(p, dim, f, 2));
                }
            }
            projectors = next;
            dim *= 2;
        }
        settings.push(Setting { axes, projectors });
    }
    Ok(PauliSettings { n_qubits, settings })
}

/// How outcome frequencies are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotMode {
    /// Multinomial draws of the given size per setting.
    Finite(u64),
    /// Born probabilities used directly (the infinite-shot limit).
    Exact,
}

/// Per-setting outcome frequencies, each row summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub frequencies: Vec<Vec<f64>>,
}

fn trace_product(rho: &[C64], proj: &[C64], dim: usize) -> f64 {
    let mut sum = C64::new(0.0, 0.0);
    for i in 0..dim {
        for j in 0..dim {
            sum += rho[i * dim + j] * proj[j * dim + i];
        }
    }
    sum.re
}

fn born_probabilities(rho: &[C64], setting: &Setting, dim: usize) -> Vec<f64> {
    let mut probs: Vec<f64> =
        setting.projectors.iter().map(|p| trace_product(rho, p, dim).max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        for p in &mut probs {
            *p /= total;
        }
    }
    probs
}

/// Sample (or copy, in exact mode) outcome frequencies for every setting.
pub fn simulate_frequencies<R: Rng>(
    rho: &DensityMatrix,
    settings: &PauliSettings,
    mode: ShotMode,
    rng: &mut R,
) -> Result<FrequencyTable> {
    if rho.n_qubits() != settings.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "state has {} qubits, settings have {}",
            rho.n_qubits(),
            settings.n_qubits
        )));
    }
    let dim = rho.dim();
    let mut frequencies = Vec::with_capacity(settings.settings.len());
    for setting in &settings.settings {
        let probs = born_probabilities(rho.entries(), setting, dim);
        match mode {
            ShotMode::Exact => frequencies.push(probs),
            ShotMode::Finite(n) => {
                if n < 1 {
                    return Err(Error::Config("n_shots must be >= 1".into()));
                }
                let mut counts = vec![0u64; probs.len()];
                for _ in 0..n {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut hit = probs.len() - 1;
                    for (i, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            hit = i;
                            break;
                        }
                    }
                    counts[hit] += 1;
                }
                frequencies.push(counts.iter().map(|c| *c as f64 / n as f64).collect());
            }
        }
    }
    Ok(FrequencyTable { frequencies })
}

/// RρR iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrhorConfig {
    /// Damping weight on the previous iterate.
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop when the log-likelihood changes by less than this.
    pub tol: f64,
}

impl Default for RrhorConfig {
    fn default() -> Self {
        Self { alpha: 0.5, max_iters: 5000, tol: 1e-10 }
    }
}

/// Converged estimate with its iteration record.
#[derive(Debug, Clone)]
pub struct RrhorResult {
    pub rho: DensityMatrix,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each iteration, for monotonicity checks.
    pub ll_trace: Vec<f64>,
    /// How many Born probabilities had to be clamped away from zero.
    pub clamped_probabilities: u64,
}

const P_FLOOR: f64 = 1e-12;

fn log_likelihood(rho: &[C64], settings: &PauliSettings, freqs: &FrequencyTable, dim: usize) -> f64 {
    let mut ll = 0.0;
    for (setting, fs) in settings.settings.iter().zip(&freqs.frequencies) {
        for (proj, f) in setting.projectors.iter().zip(fs) {
            if *f > 0.0 {
                let p = trace_product(rho, proj, dim).max(P_FLOOR);
                ll += f * p.ln();
            }
        }
    }
    ll
}

fn matmul(a: &[C64], b: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

/// Maximum-likelihood estimate by the damped RρR fixed-point iteration:
/// R = (1/m) Σ_i (f_i/p_i) Π_i over all m outcome projectors, then
/// ρ ← αρ + (1−α) RρR / Tr(RρR), iterated until the log-likelihood
/// stabilizes. The iterate is re-Hermitized and trace-normalized every
/// step; probabilities are floored at 1e-12 before dividing.
pub fn rrhor_estimate(
    freqs: &FrequencyTable,
    settings: &PauliSettings,
    init: &DensityMatrix,
    config: &RrhorConfig,
) -> Result<RrhorResult> {
    if !(0.0..1.0).contains(&config.alpha) {
        return Err(Error::OutOfRange(format!("alpha = {} outside [0, 1)", config.alpha)));
    }
    if freqs.frequencies.len() != settings.settings.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frequency rows for {} settings",
            freqs.frequencies.len(),
            settings.settings.len()
        )));
    }
    let dim = init.dim();
    let m = settings.outcome_count() as f64;
    let mut rho: Vec<C64> = init.entries().to_vec();
    let mut clamped = 0u64;
    let mut ll_prev = log_likelihood(&rho, settings, freqs, dim);
    let mut ll_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        let mut r = vec![C64::new(0.0, 0.0); dim * dim];
        for (setting, fs) in settings.settings.iter().zip(&freqs.frequencies) {
            for (proj, f) in setting.projectors.iter().zip(fs) {
                let p_raw = trace_product(&rho, proj, dim);
                let p = if p_raw < P_FLOOR {
                    if *f > 0.0 {
                        clamped += 1;
                    }
                    P_FLOOR
                } else {
                    p_raw
                };
                let w = C64::new(f / p / m, 0.0);
                for (ri, pi) in r.iter_mut().zip(proj) {
                    *ri += w * pi;
                }
            }
        }
        let rr = matmul(&r, &matmul(&rho, &r, dim), dim);
        let tr: f64 = (0..dim).map(|i| rr[i * dim + i].re).sum();
        if tr <= 0.0 {
            return Err(Error::InvalidState("RρR trace not positive".into()));
        }
        let a = config.alpha;
        for (x, y) in rho.iter_mut().zip(&rr) {
            *x = a * *x + (1.0 - a) * y / tr;
        }
        // Re-Hermitize and renormalize to absorb rounding drift.
        for i in 0..dim {
            for j in i..dim {
                let avg = 0.5 * (rho[i * dim + j] + rho[j * dim + i].conj());
                rho[i * dim + j] = avg;
                rho[j * dim + i] = avg.conj();
            }
        }
        let trace: f64 = (0..dim).map(|i| rho[i * dim + i].re).sum();
        for x in &mut rho {
            *x /= trace;
        }
        iterations += 1;
        let ll = log_likelihood(&rho, settings, freqs, dim);
        ll_trace.push(ll);
        let delta = ll - ll_prev;
        ll_prev = ll;
        if delta.abs() < config.tol {
            break;
        }
    }

    Ok(RrhorResult {
        rho: DensityMatrix::new(init.n_qubits(), rho)?,
        iterations,
        log_likelihood: ll_prev,
        ll_trace,
        clamped_probabilities: clamped,
    })
}

/// The maximally mixed state I/2^N.
pub fn maximally_mixed(n_qubits: usize) -> DensityMatrix {
    let dim = 1usize << n_qubits;
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        entries[i * dim + i] = C64::new(1.0 / dim as f64, 0.0);
    }
    DensityMatrix::new(n_qubits, entries).expect("identity/2^N is a valid state")
}

fn pure_density(psi: &StateVector) -> DensityMatrix {
    let dim = psi.dim();
    let amps = psi.amplitudes();
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            entries[i * dim + j] = amps[i] * amps[j].conj();
        }
    }
    DensityMatrix::new(psi.n_qubits(), entries).expect("projector of a unit vector")
}

/// One instance's result row as written to CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QstRecord {
    pub instance_id: u64,
    pub n_qubits: usize,
    pub shots_per_setting: u64,
    pub total_shots: u64,
    pub infidelity: f64,
    pub iterations: usize,
    pub log_likelihood: f64,
}

/// Full tomography of one pure target: simulate frequencies, run RρR
/// from the maximally mixed state, and score 1 − ⟨ψ|ρ̂|ψ⟩.
pub fn tomography_run<R: Rng>(
    target: &StateVector,
    settings: &PauliSettings,
    mode: ShotMode,
    config: &RrhorConfig,
    instance_id: u64,
    rng: &mut R,
) -> Result<(QstRecord, RrhorResult)> {
    let rho_true = pure_density(target);
    let freqs = simulate_frequencies(&rho_true, settings, mode, rng)?;
    let init = maximally_mixed(target.n_qubits());
    let result = rrhor_estimate(&freqs, settings, &init, config)?;
    let fidelity = result.rho.expectation(target)?.clamp(0.0, 1.0);
    let shots = match mode {
        ShotMode::Finite(n) => n,
        ShotMode::Exact => 0,
    };
    let record = QstRecord {
        instance_id,
        n_qubits: target.n_qubits(),
        shots_per_setting: shots,
        total_shots: shots * settings.settings.len() as u64,
        infidelity: 1.0 - fidelity,
        iterations: result.iterations,
        log_likelihood: result.log_likelihood,
    };
    Ok((record, result))
}
