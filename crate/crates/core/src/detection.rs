//! Adversaries with an imperfect model and the detection probability of
//! the attacks they execute.
//!
//! Under an attack `(a, d)` the residual statistic is approximately
//! non-central chi-squared with `m − n − k_d` degrees of freedom and
//! non-centrality `λ = ‖R^(−1/2)·S_d·a‖²`, so the probability that the
//! detector fires is `δ = 1 − F(τ_d(α); m − n − k_d, λ)`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::estimation::{detection_threshold, weighted_objective};
use crate::grid::{measurement_matrix, MeasurementPlacement, NetworkModel, SystemMatrices};
use crate::linalg::DenseMatrix;
use crate::stats::noncentral_chi2_sf;
use crate::synthesis::{
    assign_availability, check_observable, min_cardinality_search, AttackVector, SearchOptions,
    SynthesisResult,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationKind {
    /// `H̃ = H + ΔH` with an explicit `ΔH`.
    General,
    /// `H̃` rebuilt from `W + ΔW` with the true topology and placement.
    LineParameter {
        error_level: f64,
        seed: u64,
        susceptances: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedModel {
    pub h_tilde: DenseMatrix,
    pub kind: PerturbationKind,
}

impl PerturbedModel {
    pub fn general(h: &DenseMatrix, delta_h: &DenseMatrix) -> Result<Self> {
        Ok(Self {
            h_tilde: h.add(delta_h)?,
            kind: PerturbationKind::General,
        })
    }
}

/// Relative susceptance errors `u ∈ [−1, 1]` for each line, one draw per
/// seed. The error at level `p` is `p·u`, so every level shares the same
/// draw for a given seed.
pub fn relative_line_errors(line_count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..line_count).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// The adversary's model with each `Wᵢᵢ` off by a uniform error in
/// `[−p·Wᵢᵢ, +p·Wᵢᵢ]`.
pub fn perturb_line_parameters(
    net: &NetworkModel,
    placement: &MeasurementPlacement,
    p: f64,
    seed: u64,
) -> Result<PerturbedModel> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::domain("line-parameter error level must lie in [0, 1)"));
    }
    let errors = relative_line_errors(net.lines().len(), seed);
    let susceptances: Vec<f64> = net
        .susceptances()
        .iter()
        .zip(&errors)
        .map(|(w, u)| if p == 0.0 { *w } else { w * (1.0 + p * u) })
        .collect();
    let h_tilde = measurement_matrix(net, placement, &susceptances)?;
    Ok(PerturbedModel {
        h_tilde,
        kind: PerturbationKind::LineParameter {
            error_level: p,
            seed,
            susceptances,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryAttack {
    /// Solved on the adversary's model.
    pub plan: SynthesisResult,
    /// What reaches the measurements: `H̃_d·c`.
    pub executed: AttackVector,
}

/// Minimum-cardinality attack planned on `h_tilde`, with `k_d` of its
/// measurements moved to blocking (see [`assign_availability`]).
pub fn adversary_attack_under_model(
    h_tilde: &DenseMatrix,
    sys_true: &SystemMatrices,
    j: usize,
    mu: f64,
    k_d: usize,
) -> Result<AdversaryAttack> {
    if h_tilde.rows() != sys_true.m() || h_tilde.cols() != sys_true.n() {
        return Err(Error::DimensionMismatch {
            expected: sys_true.m(),
            got: h_tilde.rows(),
        });
    }
    let mut plan = min_cardinality_search(h_tilde, j, mu, &SearchOptions::default())?.best;
    if k_d > 0 {
        plan = assign_availability(h_tilde, &plan, k_d)?;
    }
    check_observable(sys_true.h(), plan.attack.d())?;
    Ok(AdversaryAttack {
        executed: plan.attack.clone(),
        plan,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionReport {
    pub dof: usize,
    pub threshold: f64,
    pub noncentrality: f64,
    pub probability: f64,
}

/// `λ = ‖R^(−1/2)·S_d·a‖²` against the true model.
pub fn noncentrality(sys_true: &SystemMatrices, atk: &AttackVector) -> Result<(SystemMatrices, f64)> {
    if atk.len() != sys_true.m() {
        return Err(Error::DimensionMismatch {
            expected: sys_true.m(),
            got: atk.len(),
        });
    }
    let masked = sys_true.apply_availability_mask(atk.d())?;
    let r = masked.s().matvec(atk.a())?;
    let lambda = weighted_objective(&r, masked.sigmas(), masked.mask());
    Ok((masked, lambda))
}

pub fn detection_probability_for(lambda: f64, dof: usize, alpha: f64) -> Result<DetectionReport> {
    let threshold = detection_threshold(alpha, dof)?;
    let probability = noncentral_chi2_sf(threshold, dof as u32, lambda)?;
    Ok(DetectionReport {
        dof,
        threshold,
        noncentrality: lambda,
        probability,
    })
}

pub fn detection_probability(sys_true: &SystemMatrices, atk: &AttackVector, alpha: f64) -> Result<DetectionReport> {
    let (masked, lambda) = noncentrality(sys_true, atk)?;
    detection_probability_for(lambda, masked.dof(), alpha)
}

/// Fraction of `trials` noisy snapshots (flat operating point) in which the
/// residual test flags the attacked measurements. Deterministic per seed.
pub fn monte_carlo_detection(
    sys_true: &SystemMatrices,
    atk: &AttackVector,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    if atk.len() != sys_true.m() {
        return Err(Error::DimensionMismatch {
            expected: sys_true.m(),
            got: atk.len(),
        });
    }
    let masked = sys_true.apply_availability_mask(atk.d())?;
    let threshold = detection_threshold(alpha, masked.dof())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = masked.m();
    let mut zbar = alloc::vec![0.0; m];
    let mut flagged = 0usize;
    for _ in 0..trials {
        for i in 0..m {
            let g: f64 = StandardNormal.sample(&mut rng);
            zbar[i] = if atk.d()[i] {
                0.0
            } else {
                masked.sigmas()[i] * g + atk.a()[i]
            };
        }
        let r = masked.s().matvec(&zbar)?;
        if weighted_objective(&r, masked.sigmas(), masked.mask()) > threshold {
            flagged += 1;
        }
    }
    Ok(flagged as f64 / trials as f64)
}
