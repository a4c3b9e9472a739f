//! Load-estimate impact of an attack and the resource-limited optimal attack.
//!
//! With the detection budget written as `‖R^(−1/2)·S_d·a‖² ≤ ε̄`, the most
//! damaging attack on a fixed support maximizes `‖Qs·v‖²` over
//! `‖Ws·v‖² ≤ ε̄`, where `Qs` and `Ws` are the support columns of
//! `H_inj·K_d` and `R^(−1/2)·S_d`. The optimum is `√(ε̄·φ)` with `φ` the
//! largest generalized eigenvalue of `(QsᵀQs, WsᵀWs)`. If `Ws` has a null
//! direction that still moves the load estimate, the support admits a
//! perfectly stealthy attack and the impact is unbounded.

use alloc::vec;
use alloc::vec::Vec;

use crate::detection::detection_probability_for;
use crate::estimation::detection_threshold;
use crate::grid::SystemMatrices;
use crate::linalg::{dot, max_generalized_eigenpair, norm2, sqrt, symmetric_eigen, DenseMatrix};
use crate::stats::noncentral_chi2_sf;
use crate::synthesis::{for_each_combination, AttackVector};
use crate::{Error, Result};

/// Default ceiling on the number of support combinations examined.
pub const DEFAULT_SEARCH_CEILING: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactReport {
    /// `E(ε) = H_inj·K_d·a`, per-unit power.
    pub expected_error: Vec<f64>,
    /// `‖E(ε)‖₂`.
    pub metric: f64,
}

/// Expected bias on the injection (load) estimates under `atk`.
pub fn impact_metric(sys: &SystemMatrices, atk: &AttackVector) -> Result<ImpactReport> {
    if atk.len() != sys.m() {
        return Err(Error::DimensionMismatch {
            expected: sys.m(),
            got: atk.len(),
        });
    }
    let masked = sys.apply_availability_mask(atk.d())?;
    let x_bias = masked.k().matvec(atk.a())?;
    let expected_error = masked.h_inj().matvec(&x_bias)?;
    Ok(ImpactReport {
        metric: norm2(&expected_error),
        expected_error,
    })
}

/// Largest non-centrality `ε̄` whose detection probability stays at
/// `delta_bar`, found by bisection (the probability is increasing in `λ`).
pub fn epsilon_bar_from_delta(delta_bar: f64, dof: usize, alpha: f64) -> Result<f64> {
    let threshold = detection_threshold(alpha, dof)?;
    if !(delta_bar < 1.0) {
        return Err(Error::domain("detection budget must be below 1"));
    }
    if delta_bar < alpha - 1e-12 {
        return Err(Error::domain(
            "detection budget below the false-alarm rate is unreachable",
        ));
    }
    if delta_bar <= alpha + 1e-15 {
        return Ok(0.0);
    }
    let k = dof as u32;
    let prob = |lambda: f64| noncentral_chi2_sf(threshold, k, lambda);
    let mut hi = 1.0;
    while prob(hi)? < delta_bar {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical("non-centrality bracket diverged".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if prob(mid)? < delta_bar {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundedness {
    Bounded,
    /// The support carries an attack with zero residual and nonzero impact.
    StealthUnbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportOptimum {
    /// Full-length attack; for an unbounded support this is the stealthy
    /// direction scaled to unit impact.
    pub a_star: Vec<f64>,
    /// `√(ε̄·φ)`, or `+∞` when unbounded.
    pub impact: f64,
    pub phi: f64,
    pub boundedness: Boundedness,
}

/// Per-mask matrices shared by every FDI support under that mask.
struct MaskEvaluator {
    gain: DenseMatrix,
    weighted_residual: DenseMatrix,
}

enum SupportValue {
    Bounded { phi: f64, unit_attack: Vec<f64> },
    Unbounded { direction: Vec<f64> },
}

impl MaskEvaluator {
    fn new(masked: &SystemMatrices) -> Self {
        Self {
            gain: masked.injection_gain(),
            weighted_residual: masked.weighted_residual_matrix(),
        }
    }

    /// Optimum over `support` at `ε̄ = 1`; the returned attack entries are
    /// in support order.
    fn evaluate(&self, support: &[usize]) -> Result<SupportValue> {
        let qs = self.gain.select_cols(support);
        let ws = self.weighted_residual.select_cols(support);
        let k = support.len();
        let q = qs.weighted_gram(&vec![1.0; qs.rows()]);
        let g = ws.weighted_gram(&vec![1.0; ws.rows()]);
        let (gvals, gvecs) = symmetric_eigen(&g)?;
        let g_scale = gvals[k - 1].max(ws.rows() as f64 * 1e-300);
        let q_scale = qs.max_abs().max(1.0);
        let w_max = self.weighted_residual.max_abs();
        let null_tol = 1e-9 * g_scale.max(w_max * w_max);
        let mut range_cols = Vec::new();
        for (i, &lam) in gvals.iter().enumerate() {
            if lam <= null_tol {
                let v = gvecs.column(i);
                let qv = qs.matvec(&v)?;
                if norm2(&qv) > 1e-8 * q_scale {
                    let s = 1.0 / norm2(&qv);
                    return Ok(SupportValue::Unbounded {
                        direction: v.iter().map(|x| x * s).collect(),
                    });
                }
            } else {
                range_cols.push(i);
            }
        }
        let v = if range_cols.len() == k {
            max_generalized_eigenpair(&q, &g)?.vector
        } else {
            // restrict to the range of G; Q vanishes on its null space
            let basis = gvecs.select_cols(&range_cols);
            let q_red = basis.transpose().matmul(&q)?.matmul(&basis)?;
            let g_red = DenseMatrix::from_diag(&range_cols.iter().map(|&i| gvals[i]).collect::<Vec<_>>());
            let y = max_generalized_eigenpair(&q_red, &g_red)?.vector;
            basis.matvec(&y)?
        };
        let wv = ws.matvec(&v)?;
        let scale = 1.0 / norm2(&wv);
        let unit_attack: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let qa = qs.matvec(&unit_attack)?;
        Ok(SupportValue::Bounded {
            phi: dot(&qa, &qa),
            unit_attack,
        })
    }
}

fn embed(m: usize, support: &[usize], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (&i, &v) in support.iter().zip(values) {
        out[i] = v;
    }
    out
}

fn validate_supports(m: usize, support_a: &[usize], support_d: &[usize]) -> Result<Vec<bool>> {
    if support_a.is_empty() {
        return Err(Error::domain("FDI support must not be empty"));
    }
    let mut d = vec![false; m];
    for &i in support_d {
        if i >= m {
            return Err(Error::domain(alloc::format!("index {i} out of range")));
        }
        d[i] = true;
    }
    let mut seen = vec![false; m];
    for &i in support_a {
        if i >= m {
            return Err(Error::domain(alloc::format!("index {i} out of range")));
        }
        if d[i] || seen[i] {
            return Err(Error::domain(alloc::format!(
                "index {i} repeated or both falsified and blocked"
            )));
        }
        seen[i] = true;
    }
    Ok(d)
}

/// Most damaging attack on a fixed support within the budget `ε̄`.
pub fn optimal_attack_on_support(
    sys: &SystemMatrices,
    support_a: &[usize],
    support_d: &[usize],
    epsilon_bar: f64,
) -> Result<SupportOptimum> {
    if !(epsilon_bar >= 0.0 && epsilon_bar.is_finite()) {
        return Err(Error::domain("budget must be finite and nonnegative"));
    }
    let d = validate_supports(sys.m(), support_a, support_d)?;
    let masked = sys.apply_availability_mask(&d)?;
    let eval = MaskEvaluator::new(&masked);
    Ok(match eval.evaluate(support_a)? {
        SupportValue::Bounded { phi, unit_attack } => {
            let s = sqrt(epsilon_bar);
            let a: Vec<f64> = unit_attack.iter().map(|x| x * s).collect();
            SupportOptimum {
                a_star: embed(sys.m(), support_a, &a),
                impact: sqrt(epsilon_bar * phi),
                phi,
                boundedness: Boundedness::Bounded,
            }
        }
        SupportValue::Unbounded { direction } => SupportOptimum {
            a_star: embed(sys.m(), support_a, &direction),
            impact: f64::INFINITY,
            phi: f64::INFINITY,
            boundedness: Boundedness::StealthUnbounded,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseAttackSolution {
    pub support_a: Vec<usize>,
    pub support_d: Vec<usize>,
    pub a_star: Vec<f64>,
    pub impact: f64,
    pub phi: f64,
    pub epsilon_bar: f64,
    pub delta_bar: f64,
    pub boundedness: Boundedness,
    /// Availability masks skipped because they break observability.
    pub skipped_unobservable: usize,
    pub supports_evaluated: usize,
}

impl SparseAttackSolution {
    pub fn attack(&self) -> Result<AttackVector> {
        let mut d = vec![false; self.a_star.len()];
        for &i in &self.support_d {
            d[i] = true;
        }
        AttackVector::new(self.a_star.clone(), d)
    }

    pub fn ka(&self) -> usize {
        self.support_a.len()
    }

    pub fn kd(&self) -> usize {
        self.support_d.len()
    }
}

#[derive(Debug, Clone)]
pub struct SparseOptions {
    /// Measurements the attacker may touch; all of them when `None`.
    pub candidates: Option<Vec<usize>>,
    pub ceiling: u128,
}

impl Default for SparseOptions {
    fn default() -> Self {
        Self {
            candidates: None,
            ceiling: DEFAULT_SEARCH_CEILING,
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

struct Best {
    phi: f64,
    key: (Vec<usize>, Vec<usize>),
    support_a: Vec<usize>,
    support_d: Vec<usize>,
    unit_attack: Vec<f64>,
}

struct SearchSummary {
    bounded: Option<Best>,
    unbounded: Option<Best>,
    skipped: usize,
    evaluated: usize,
}

fn tie_key(sa: &[usize], sd: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut union: Vec<usize> = sa.iter().chain(sd).copied().collect();
    union.sort_unstable();
    (union, sa.to_vec())
}

/// Exhaustive search of `(support_a, support_d)` pairs from `pool` at `ε̄ = 1`.
fn search_supports(sys: &SystemMatrices, pool: &[usize], ka: usize, kd: usize, ceiling: u128) -> Result<SearchSummary> {
    let m = sys.m();
    if ka == 0 {
        return Err(Error::domain("k_a must be at least 1"));
    }
    if let Some(&i) = pool.iter().find(|&&i| i >= m) {
        return Err(Error::domain(alloc::format!("candidate {i} out of range")));
    }
    if ka + kd > pool.len() {
        return Err(Error::domain("k_a + k_d exceeds the candidate pool"));
    }
    let combinations = binomial(pool.len(), kd) * binomial(pool.len() - kd, ka);
    if combinations > ceiling {
        return Err(Error::SearchBudget { combinations, ceiling });
    }
    let mut summary = SearchSummary {
        bounded: None,
        unbounded: None,
        skipped: 0,
        evaluated: 0,
    };
    let mut failure = None;
    for_each_combination(pool.len(), kd, |dpos| {
        let sd: Vec<usize> = dpos.iter().map(|&p| pool[p]).collect();
        let mut d = vec![false; m];
        sd.iter().for_each(|&i| d[i] = true);
        let masked = match sys.apply_availability_mask(&d) {
            Ok(s) => s,
            Err(Error::Unobservable { .. }) => {
                summary.skipped += 1;
                return true;
            }
            Err(e) => {
                failure = Some(e);
                return false;
            }
        };
        let eval = MaskEvaluator::new(&masked);
        let rest: Vec<usize> = pool.iter().copied().filter(|i| !d[*i]).collect();
        for_each_combination(rest.len(), ka, |apos| {
            let sa: Vec<usize> = apos.iter().map(|&p| rest[p]).collect();
            summary.evaluated += 1;
            match eval.evaluate(&sa) {
                Ok(SupportValue::Bounded { phi, unit_attack }) => {
                    let key = tie_key(&sa, &sd);
                    let replace = match &summary.bounded {
                        None => true,
                        Some(b) => {
                            let tol = 1e-12 * b.phi.abs().max(1e-300);
                            phi > b.phi + tol || (phi >= b.phi - tol && key < b.key)
                        }
                    };
                    if replace {
                        summary.bounded = Some(Best {
                            phi,
                            key,
                            support_a: sa,
                            support_d: sd.clone(),
                            unit_attack,
                        });
                    }
                }
                Ok(SupportValue::Unbounded { direction }) => {
                    let key = tie_key(&sa, &sd);
                    if summary.unbounded.as_ref().is_none_or(|u| key < u.key) {
                        summary.unbounded = Some(Best {
                            phi: f64::INFINITY,
                            key,
                            support_a: sa,
                            support_d: sd.clone(),
                            unit_attack: direction,
                        });
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    return false;
                }
            }
            true
        });
        failure.is_none()
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(summary)
}

fn solution_from(best: Best, m: usize, epsilon_bar: f64, delta_bar: f64, summary: (usize, usize)) -> SparseAttackSolution {
    let bounded = best.phi.is_finite();
    let s = if bounded { sqrt(epsilon_bar) } else { 1.0 };
    let a: Vec<f64> = best.unit_attack.iter().map(|x| x * s).collect();
    SparseAttackSolution {
        a_star: embed(m, &best.support_a, &a),
        impact: if bounded {
            sqrt(epsilon_bar * best.phi)
        } else {
            f64::INFINITY
        },
        phi: best.phi,
        epsilon_bar,
        delta_bar,
        boundedness: if bounded {
            Boundedness::Bounded
        } else {
            Boundedness::StealthUnbounded
        },
        support_a: best.support_a,
        support_d: best.support_d,
        skipped_unobservable: summary.0,
        supports_evaluated: summary.1,
    }
}

/// Worst-case `(k_a, k_d)` attack whose detection probability stays at or
/// below `delta_bar`, by exhaustive search over supports.
pub fn optimal_sparse_attack(
    sys: &SystemMatrices,
    ka: usize,
    kd: usize,
    delta_bar: f64,
    alpha: f64,
) -> Result<SparseAttackSolution> {
    optimal_sparse_attack_with(sys, ka, kd, delta_bar, alpha, &SparseOptions::default())
}

pub fn optimal_sparse_attack_with(
    sys: &SystemMatrices,
    ka: usize,
    kd: usize,
    delta_bar: f64,
    alpha: f64,
    opts: &SparseOptions,
) -> Result<SparseAttackSolution> {
    let m = sys.m();
    let dof = (m - sys.n())
        .checked_sub(kd)
        .filter(|d| *d > 0)
        .ok_or_else(|| Error::domain("k_d leaves no residual degrees of freedom"))?;
    let epsilon_bar = epsilon_bar_from_delta(delta_bar, dof, alpha)?;
    let pool: Vec<usize> = opts.candidates.clone().unwrap_or_else(|| (0..m).collect());
    let summary = search_supports(sys, &pool, ka, kd, opts.ceiling)?;
    let counts = (summary.skipped, summary.evaluated);
    let best = summary
        .unbounded
        .or(summary.bounded)
        .ok_or_else(|| Error::Infeasible("every availability mask breaks observability".into()))?;
    Ok(solution_from(best, m, epsilon_bar, delta_bar, counts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub ka: usize,
    pub kd: usize,
    pub delta: f64,
    pub epsilon_bar: f64,
    pub impact: f64,
    pub support_a: Vec<usize>,
    pub support_d: Vec<usize>,
    pub boundedness: Boundedness,
}

/// Impact-versus-detection curves on a fixed measurement set: for each
/// `(k_a, k_d)` partition the best sub-assignment of `support`, evaluated at
/// every detection budget of `delta_grid`.
pub fn fixed_support_tradeoff(
    sys: &SystemMatrices,
    support: &[usize],
    partitions: &[(usize, usize)],
    delta_grid: &[f64],
    alpha: f64,
) -> Result<Vec<TradeoffPoint>> {
    let m = sys.m();
    let mut out = Vec::with_capacity(partitions.len() * delta_grid.len());
    for &(ka, kd) in partitions {
        let dof = (m - sys.n())
            .checked_sub(kd)
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::domain("k_d leaves no residual degrees of freedom"))?;
        let summary = search_supports(sys, support, ka, kd, DEFAULT_SEARCH_CEILING)?;
        let best = summary
            .unbounded
            .or(summary.bounded)
            .ok_or_else(|| Error::Infeasible("every availability mask breaks observability".into()))?;
        for &delta in delta_grid {
            let epsilon_bar = epsilon_bar_from_delta(delta, dof, alpha)?;
            let bounded = best.phi.is_finite();
            out.push(TradeoffPoint {
                ka,
                kd,
                delta,
                epsilon_bar,
                impact: if bounded {
                    sqrt(epsilon_bar * best.phi)
                } else {
                    f64::INFINITY
                },
                support_a: best.support_a.clone(),
                support_d: best.support_d.clone(),
                boundedness: if bounded {
                    Boundedness::Bounded
                } else {
                    Boundedness::StealthUnbounded
                },
            });
        }
    }
    Ok(out)
}

/// Detection probability an optimal solution actually incurs, recomputed
/// from its attack vector.
pub fn realized_detection(sys: &SystemMatrices, sol: &SparseAttackSolution, alpha: f64) -> Result<f64> {
    let atk = sol.attack()?;
    let (masked, lambda) = crate::detection::noncentrality(sys, &atk)?;
    Ok(detection_probability_for(lambda, masked.dof(), alpha)?.probability)
}
