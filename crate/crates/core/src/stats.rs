//! Central and non-central chi-squared distributions.

use crate::linalg::abs;
use crate::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 100_000;
/// Poisson tail mass at which the non-central series stops.
const POISSON_TAIL: f64 = 1e-12;

/// Regularized lower incomplete gamma function `P(a, x)`.
///
/// Series expansion below `x < a + 1`, Lentz continued fraction for the upper
/// function otherwise.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefactor = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if abs(del) < abs(sum) * EPS {
                break;
            }
        }
        (sum * libm::exp(log_prefactor)).min(1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if abs(d) < tiny {
                d = tiny;
            }
            c = b + an / c;
            if abs(c) < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if abs(del - 1.0) < EPS {
                break;
            }
        }
        (1.0 - libm::exp(log_prefactor) * h).max(0.0)
    }
}

fn check_dof(k: u32) -> Result<()> {
    if k == 0 {
        Err(Error::domain("degrees of freedom must be at least 1"))
    } else {
        Ok(())
    }
}

/// `P(χ²ₖ ≤ x)`.
pub fn chi2_cdf(x: f64, k: u32) -> Result<f64> {
    check_dof(k)?;
    if !(x >= 0.0) {
        return Err(Error::domain("chi-squared argument must be nonnegative"));
    }
    Ok(regularized_lower_gamma(f64::from(k) / 2.0, x / 2.0))
}

/// Inverse of [`chi2_cdf`] in `x`; with `p = 1 − α` this is the detector
/// threshold for false-alarm rate `α`.
pub fn chi2_quantile(p: f64, k: u32) -> Result<f64> {
    check_dof(k)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("quantile probability must lie in (0, 1)"));
    }
    let cdf = |x: f64| regularized_lower_gamma(f64::from(k) / 2.0, x / 2.0);
    let mut hi = f64::from(k).max(1.0);
    while cdf(hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P(χ²ₖ(λ) ≤ x)` for the non-central chi-squared law, as the Poisson
/// mixture `Σⱼ Pois(j; λ/2) · P(χ²ₖ₊₂ⱼ ≤ x)`.
///
/// Summation starts at the Poisson mode and walks outwards, so large `λ`
/// does not underflow the leading weight; each direction stops once a
/// geometric bound on its remaining Poisson mass drops below [`POISSON_TAIL`].
pub fn noncentral_chi2_cdf(x: f64, k: u32, lambda: f64) -> Result<f64> {
    check_dof(k)?;
    if !(x >= 0.0) {
        return Err(Error::domain("chi-squared argument must be nonnegative"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain("non-centrality must be nonnegative"));
    }
    if lambda == 0.0 {
        return chi2_cdf(x, k);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let half = lambda / 2.0;
    let a0 = f64::from(k) / 2.0;
    let log_weight =
        |j: f64| -half + j * libm::log(half) - libm::lgamma(j + 1.0);
    let mode = libm::floor(half);

    let mut total = 0.0;
    // Upward from the mode: the weight ratio w(j+1)/w(j) = half/(j+1) < 1,
    // so the remaining mass is bounded by a geometric series.
    let mut j = mode;
    loop {
        let w = libm::exp(log_weight(j));
        total += w * regularized_lower_gamma(a0 + j, x / 2.0);
        let r = half / (j + 1.0);
        j += 1.0;
        if r < 1.0 && w * r / (1.0 - r) < POISSON_TAIL / 2.0 {
            break;
        }
    }
    // Downward: w(j-1)/w(j) = j/half.
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = libm::exp(log_weight(j));
        total += w * regularized_lower_gamma(a0 + j, x / 2.0);
        let r = j / half;
        if r < 1.0 && w * r / (1.0 - r) < POISSON_TAIL / 2.0 {
            break;
        }
        j -= 1.0;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `1 − P(χ²ₖ(λ) ≤ x)`.
pub fn noncentral_chi2_sf(x: f64, k: u32, lambda: f64) -> Result<f64> {
    Ok(1.0 - noncentral_chi2_cdf(x, k, lambda)?)
}
