//! Weighted least-squares state estimation and the `J(x̂)` residual test.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::SystemMatrices;
use crate::stats::chi2_quantile;
use crate::synthesis::AttackVector;
use crate::{Error, Result};

/// Measurement values `z` in global measurement order, per-unit power.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector(pub Vec<f64>);

impl MeasurementVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Good,
    Bad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub x_hat: Vec<f64>,
    /// Masked entries are exactly zero.
    pub residual: Vec<f64>,
    /// `J = Σ (rᵢ/σᵢ)²` over the available measurements.
    pub objective: f64,
    /// `m − n − k_d`.
    pub dof: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BddOutcome {
    pub threshold: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: Estimate,
    pub bdd: BddOutcome,
}

/// WLS estimate `x̂ = K_d·z` and residual `r = S_d·z`.
///
/// When `mask` is given it replaces the system's own mask; masked
/// measurements are treated as missing.
pub fn wls_estimate(sys: &SystemMatrices, z: &MeasurementVector, mask: Option<&[bool]>) -> Result<Estimate> {
    if z.len() != sys.m() {
        return Err(Error::DimensionMismatch {
            expected: sys.m(),
            got: z.len(),
        });
    }
    let owned;
    let sys = match mask {
        Some(d) if d != sys.mask() => {
            owned = sys.apply_availability_mask(d)?;
            &owned
        }
        _ => sys,
    };
    let zbar: Vec<f64> = z
        .0
        .iter()
        .zip(sys.mask())
        .map(|(v, &d)| if d { 0.0 } else { *v })
        .collect();
    let x_hat = sys.k().matvec(&zbar)?;
    let residual = sys.s().matvec(&zbar)?;
    Ok(Estimate {
        objective: weighted_objective(&residual, sys.sigmas(), sys.mask()),
        x_hat,
        residual,
        dof: sys.dof(),
    })
}

pub(crate) fn weighted_objective(residual: &[f64], sigmas: &[f64], mask: &[bool]) -> f64 {
    residual
        .iter()
        .zip(sigmas)
        .zip(mask)
        .filter(|(_, &d)| !d)
        .map(|((r, s), _)| (r / s) * (r / s))
        .sum()
}

/// Threshold `τ(α) = F⁻¹_{χ²_dof}(1 − α)` and the good/bad verdict.
pub fn bdd_test(estimate: &Estimate, alpha: f64) -> Result<BddOutcome> {
    let threshold = detection_threshold(alpha, estimate.dof)?;
    let verdict = if estimate.objective > threshold {
        Verdict::Bad
    } else {
        Verdict::Good
    };
    Ok(BddOutcome { threshold, verdict })
}

pub fn detection_threshold(alpha: f64, dof: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("false-alarm rate must lie in (0, 1)"));
    }
    if dof == 0 {
        return Err(Error::domain("residual test needs at least one degree of freedom"));
    }
    chi2_quantile(1.0 - alpha, dof as u32)
}

pub fn estimate_and_test(
    sys: &SystemMatrices,
    z: &MeasurementVector,
    mask: Option<&[bool]>,
    alpha: f64,
) -> Result<EstimateReport> {
    let estimate = wls_estimate(sys, z, mask)?;
    let bdd = bdd_test(&estimate, alpha)?;
    Ok(EstimateReport { estimate, bdd })
}

/// `z = H·x + e` with `e ~ N(0, R)` drawn from `rng`.
pub fn simulate_with_rng<R: rand::Rng + ?Sized>(
    sys: &SystemMatrices,
    x_true: &[f64],
    rng: &mut R,
) -> Result<MeasurementVector> {
    let mut z = sys.h().matvec(x_true)?;
    for (zi, s) in z.iter_mut().zip(sys.sigmas()) {
        let g: f64 = StandardNormal.sample(rng);
        *zi += s * g;
    }
    Ok(MeasurementVector(z))
}

/// Deterministic per seed.
pub fn simulate_measurements(sys: &SystemMatrices, x_true: &[f64], seed: u64) -> Result<MeasurementVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(sys, x_true, &mut rng)
}

/// `z̄ = (I − diag(d))·z + a`.
pub fn apply_attack(z: &MeasurementVector, atk: &AttackVector) -> Result<MeasurementVector> {
    if z.len() != atk.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: atk.len(),
        });
    }
    Ok(MeasurementVector(
        z.0.iter()
            .zip(atk.a())
            .zip(atk.d())
            .map(|((zi, ai), &di)| if di { *ai } else { zi + ai })
            .collect(),
    ))
}
