//! Single-shot measurement environment: success probability of the
//! circuit-plus-target system and geometric success-count sampling with
//! exact shot accounting.

use crate::qsim::{apply_hea_adjoint, HeaSpec, ParamVector, QuantumState, StateVector};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One success-count draw. `capped` marks a count truncated at the halting
/// target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuccessCountSample {
    pub count: u64,
    pub capped: bool,
}

/// Running totals of measurement outcomes for one learning run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotLedger {
    pub total_success: u64,
    pub total_fail: u64,
}

impl ShotLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&mut self, sample: &SuccessCountSample) {
        self.total_success += sample.count;
        if !sample.capped {
            self.total_fail += 1;
        }
    }
}

/// Probability of the success outcome |s⟩ after running the circuit:
/// |⟨s|U(θ)|ψ⟩|² for pure targets, ⟨s|U(θ)ρU†(θ)|s⟩ for mixed ones.
/// Clamped to [0,1] against rounding at the endpoints.
pub fn success_probability(
    target: &QuantumState,
    spec: &HeaSpec,
    params: &ParamVector,
    success_basis: usize,
) -> Result<f64> {
    if target.n_qubits() != spec.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "target has {} qubits, ansatz {}",
            target.n_qubits(),
            spec.n_qubits
        )));
    }
    // ⟨s|U x⟩ = ⟨U†s|x⟩ for any x, so one adjoint application serves both
    // the pure overlap and the mixed quadratic form.
    let back = apply_hea_adjoint(spec, params, &StateVector::basis(spec.n_qubits, success_basis)?)?;
    let p = match target {
        QuantumState::Pure(psi) => back.overlap_sq(psi)?,
        QuantumState::Mixed(rho) => rho.expectation(&back)?,
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Draw a success count from the geometric law p(𝒞) = p_s^𝒞 (1 − p_s) by
/// inverse transform, truncated at `cap`. The ledger receives the count as
/// successes plus one terminating fail shot when the draw was not capped.
pub fn sample_success_count<R: Rng>(
    p_s: f64,
    cap: u64,
    rng: &mut R,
    ledger: &mut ShotLedger,
) -> SuccessCountSample {
    debug_assert!((0.0..=1.0).contains(&p_s));
    debug_assert!(cap >= 1);
    let sample = if p_s <= 0.0 {
        SuccessCountSample { count: 0, capped: false }
    } else if p_s >= 1.0 {
        SuccessCountSample { count: cap, capped: true }
    } else {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let raw = (u.ln() / p_s.ln()).floor();
        if raw >= cap as f64 {
            SuccessCountSample { count: cap, capped: true }
        } else {
            SuccessCountSample { count: raw as u64, capped: false }
        }
    };
    ledger.record(&sample);
    sample
}

/// Shot-by-shot Bernoulli reference sampler: counts successes until the
/// first fail or the cap. Distribution-identical to
/// [`sample_success_count`]; kept for validation.
pub fn sample_success_count_bernoulli<R: Rng>(
    p_s: f64,
    cap: u64,
    rng: &mut R,
    ledger: &mut ShotLedger,
) -> SuccessCountSample {
    let mut count = 0u64;
    let sample = loop {
        if count >= cap {
            break SuccessCountSample { count: cap, capped: true };
        }
        if rng.gen_range(0.0..1.0) < p_s {
            count += 1;
        } else {
            break SuccessCountSample { count, capped: false };
        }
    };
    ledger.record(&sample);
    sample
}
