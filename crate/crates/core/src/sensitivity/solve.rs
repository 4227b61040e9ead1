//! Closed-form nuisance solves for the confounder analysis.
//!
//! Both solves invert a two-component logistic mixture: find the unique
//! `g` with `(1-q)*logistic(g) + q*logistic(g + shift) = target`. The
//! decision-side solve (gamma) and the outcome-side solve (beta) share the
//! machinery with different inputs.

use crate::error::{Error, Result};
use crate::util::{logistic, logit};

/// `(1-q)*logistic(g) + q*logistic(g + shift)`; strictly increasing in `g`.
pub fn mixture(g: f64, q: f64, shift: f64) -> f64 {
    (1.0 - q) * logistic(g) + q * logistic(g + shift)
}

/// Bisection bracket wide enough for any clipped probability target.
const BRACKET: f64 = 40.0;

fn solve_by_bisection(target: f64, q: f64, shift: f64) -> f64 {
    let mut lo = -BRACKET;
    let mut hi = BRACKET;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture(mid, q, shift) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Invert the mixture. With `e = exp(g)` and `a = exp(shift)` the equation
/// becomes the quadratic `a(t-1)e^2 + [t(1+a) - (1-q) - qa]e + t = 0`,
/// which has exactly one positive root; `g = ln e`. Falls back to bisection
/// when the closed form degrades numerically.
fn solve_mixture(target: f64, q: f64, shift: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Numeric(format!(
            "mixture target must lie strictly in (0,1), got {target}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Numeric(format!("prevalence must lie in [0,1], got {q}")));
    }
    // exact special cases
    if q == 0.0 || shift == 0.0 {
        return Ok(logit(target));
    }
    if q == 1.0 {
        return Ok(logit(target) - shift);
    }

    let a = shift.exp();
    let qa = a * (target - 1.0);
    let qb = target * (1.0 + a) - (1.0 - q) - q * a;
    let qc = target;
    let disc = qb * qb - 4.0 * qa * qc;
    let g = if disc < 1e-12 {
        solve_by_bisection(target, q, shift)
    } else {
        let sq = disc.sqrt();
        // stable quadratic: avoid cancellation in the root pair
        let qq = -0.5 * (qb + qb.signum() * sq);
        let r1 = qq / qa;
        let r2 = qc / qq;
        let root = if r1 > 0.0 { r1 } else { r2 };
        if root <= 0.0 || !root.is_finite() {
            solve_by_bisection(target, q, shift)
        } else {
            root.ln()
        }
    };
    // the solver contract is 1e-10 agreement with the mixture
    if (mixture(g, q, shift) - target).abs() > 1e-10 {
        let g2 = solve_by_bisection(target, q, shift);
        if (mixture(g2, q, shift) - target).abs() > 1e-10 {
            return Err(Error::Numeric(format!(
                "mixture inversion failed for target {target}, q {q}, shift {shift}"
            )));
        }
        return Ok(g2);
    }
    Ok(g)
}

/// Solve for the unit's decision-side nuisance: the unique gamma with
/// `(1-q)*logistic(gamma) + q*logistic(gamma + alpha) = p_hat`.
pub fn solve_gamma(p_hat: f64, q: f64, alpha: f64) -> Result<f64> {
    solve_mixture(p_hat, q, alpha)
}

/// Solve for the unit's outcome-side nuisance: the unique beta with
/// `(1-w)*logistic(beta) + w*logistic(beta + delta) = mu_hat`.
pub fn solve_beta(mu_hat: f64, w: f64, delta: f64) -> Result<f64> {
    solve_mixture(mu_hat, w, delta)
}

/// Posterior probability that `u = 1` given an affirmative decision:
/// `w = q*logistic(gamma+alpha) / [(1-q)*logistic(gamma) + q*logistic(gamma+alpha)]`.
pub fn posterior_u(gamma: f64, alpha: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    if alpha == 0.0 {
        return q;
    }
    let p1 = logistic(gamma + alpha);
    let p0 = logistic(gamma);
    q * p1 / ((1.0 - q) * p0 + q * p1)
}
