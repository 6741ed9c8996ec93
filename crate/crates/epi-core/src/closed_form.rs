//! Closed-form Gaussian reference arithmetic.
//!
//! These are the exact values the numerical layers are checked against:
//! the two-branch Gaussian information-bottleneck value and its optimal
//! noise, the dual functional `V_lambda` and its coordinate additivity, the
//! two-encoder quadratic-Gaussian rate-region bounds, the strong
//! data-processing bound, the Gaussian-input Han-Kobayashi region, and the
//! Poincare-sharpened Stam exponent arithmetic. Everything is in bits.

use crate::error::{Error, Result};
use crate::functionals::TWO_PI_E;

/// Correlation of a jointly Gaussian source pair, normalized to unit
/// variances.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSourceSpec {
    pub rho: f64,
}

impl GaussianSourceSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "|rho| must be < 1, got {rho}"
            )));
        }
        Ok(GaussianSourceSpec { rho })
    }
}

/// A rate/distortion query against the two-encoder region. Distortions are
/// relative to unit source variance.
#[derive(Debug, Clone, Copy)]
pub struct RateDistortionQuery {
    pub r_x: f64,
    pub r_y: f64,
    pub d_x: f64,
    pub d_y: f64,
}

impl RateDistortionQuery {
    pub fn new(r_x: f64, r_y: f64, d_x: f64, d_y: f64) -> Result<Self> {
        if r_x < 0.0 || r_y < 0.0 {
            return Err(Error::InvalidParameter("rates must be nonnegative".into()));
        }
        if !(d_x > 0.0 && d_x <= 1.0 && d_y > 0.0 && d_y <= 1.0) {
            return Err(Error::InvalidParameter(
                "distortions must lie in (0, 1] under unit-variance normalization".into(),
            ));
        }
        Ok(RateDistortionQuery { r_x, r_y, d_x, d_y })
    }
}

/// Weak one-sided Gaussian interference channel parameters.
#[derive(Debug, Clone, Copy)]
pub struct ICSpec {
    pub alpha: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ICSpec {
    pub fn new(alpha: f64, p1: f64, p2: f64) -> Result<Self> {
        if !(alpha.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "|alpha| must be < 1 (weak interference), got {alpha}"
            )));
        }
        if !(p1 > 0.0 && p2 > 0.0) {
            return Err(Error::InvalidParameter("powers must be positive".into()));
        }
        Ok(ICSpec { alpha, p1, p2 })
    }
}

/// Exact value of `inf I(Y;V) - lambda I(X;V)` over `X -> Y -> V` for
/// `X ~ N(0, gamma)`, `Y = sqrt(snr) X + Z`, `Z ~ N(0,1)`:
/// zero when `gamma * snr <= 1/(lambda-1)`, otherwise
/// `0.5 [log2((lambda-1) gamma snr) - lambda log2(((lambda-1)/lambda)(1 + gamma snr))]`.
pub fn gaussian_ib_value(gamma: f64, snr: f64, lambda: f64) -> f64 {
    let gs = gamma * snr;
    if lambda <= 1.0 || gs * (lambda - 1.0) <= 1.0 {
        return 0.0;
    }
    0.5 * (((lambda - 1.0) * gs).log2()
        - lambda * ((lambda - 1.0) / lambda * (1.0 + gs)).log2())
}

/// Variance of the optimal additive-noise auxiliary `V = Y + U` attaining
/// `gaussian_ib_value`; `None` when the optimum is a constant `V`.
pub fn gaussian_ib_optimal_noise(gamma: f64, snr: f64, lambda: f64) -> Option<f64> {
    let gs = gamma * snr;
    if lambda <= 1.0 || gs * (lambda - 1.0) <= 1.0 {
        return None;
    }
    Some((1.0 + gs) / (gs * (lambda - 1.0) - 1.0))
}

/// Objective `I(Y;V) - lambda I(X;V)` of the Gaussian cascade
/// `X ~ N(0,gamma)`, `Y = sqrt(snr) X + Z`, `V = Y + N(0, u)`, evaluated by
/// covariance arithmetic. Serves as an independent route to
/// `gaussian_ib_value` at the optimal `u`.
pub fn gaussian_cascade_objective(gamma: f64, snr: f64, lambda: f64, u: f64) -> f64 {
    let var_y = gamma * snr + 1.0;
    let i_yv = 0.5 * ((var_y + u) / u).log2();
    let i_xv = 0.5 * ((var_y + u) / (1.0 + u)).log2();
    i_yv - lambda * i_xv
}

/// Gaussian-extremal value of the dual functional at signal-to-noise `snr`:
/// two branches meeting at `snr = 1/(lambda-1)`.
pub fn v_lambda(snr: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(Error::LambdaRange(lambda));
    }
    if snr < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "snr must be nonnegative, got {snr}"
        )));
    }
    let v = if snr * (lambda - 1.0) >= 1.0 {
        0.5 * (lambda * (lambda * TWO_PI_E / (lambda - 1.0)).log2()
            - (TWO_PI_E / (lambda - 1.0)).log2()
            + snr.log2())
    } else {
        0.5 * (lambda * (TWO_PI_E * (1.0 + snr)).log2() - TWO_PI_E.log2())
    };
    Ok(v)
}

/// Coordinate sum `sum_i v_lambda(snr_i, lambda)`: the diagonal-channel value
/// is additive across coordinates.
pub fn v_lambda_vector(snrs: &[f64], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for &s in snrs {
        total += v_lambda(s, lambda)?;
    }
    Ok(total)
}

/// `beta(d) = 1 + sqrt(1 + 4 rho^2 d / (1 - rho^2)^2)`, the quadratic-root
/// factor in the two-encoder sum-rate bound.
pub fn beta_of_d(spec: GaussianSourceSpec, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distortion product must be positive, got {d}"
        )));
    }
    let r2 = spec.rho * spec.rho;
    let om = 1.0 - r2;
    Ok(1.0 + (1.0 + 4.0 * r2 * d / (om * om)).sqrt())
}

/// Sum-rate lower bound `0.5 log2((1-rho^2) beta(dx dy) / (2 dx dy))`.
pub fn sum_rate_bound(spec: GaussianSourceSpec, d_x: f64, d_y: f64) -> Result<f64> {
    let d = d_x * d_y;
    let beta = beta_of_d(spec, d)?;
    Ok(0.5 * ((1.0 - spec.rho * spec.rho) * beta / (2.0 * d)).log2())
}

/// Slacks of the three two-encoder rate-region constraints; all nonnegative
/// iff the query point is admissible.
pub fn wagner_bounds(spec: GaussianSourceSpec, q: RateDistortionQuery) -> Result<(f64, f64, f64)> {
    let r2 = spec.rho * spec.rho;
    let om = 1.0 - r2;
    let bound_x = 0.5 * ((om + r2 * (-2.0 * q.r_y).exp2()) / q.d_x).log2();
    let bound_y = 0.5 * ((om + r2 * (-2.0 * q.r_x).exp2()) / q.d_y).log2();
    let bound_sum = sum_rate_bound(spec, q.d_x, q.d_y)?;
    Ok((
        q.r_x - bound_x,
        q.r_y - bound_y,
        q.r_x + q.r_y - bound_sum,
    ))
}

/// Slack of the exponentiated mutual-information inequality for
/// `U -> X -> Y -> V` over a unit-variance Gaussian pair:
/// `2^{-2(I(Y;U)+I(X;V|U))} - rho^2 2^{-2(I(X;U)+I(Y;V|U))} - (1-rho^2)`.
/// Nonnegative for every Markov-valid input.
pub fn proposition_mtsc_slack(
    spec: GaussianSourceSpec,
    i_xu: f64,
    i_yu: f64,
    i_xv_given_u: f64,
    i_yv_given_u: f64,
) -> f64 {
    let r2 = spec.rho * spec.rho;
    (-2.0 * (i_yu + i_xv_given_u)).exp2() - r2 * (-2.0 * (i_xu + i_yv_given_u)).exp2()
        - (1.0 - r2)
}

/// The four mutual informations of the Gaussian cascade `U = X + N(0,a)`,
/// `V = Y + N(0,b)` over the unit-variance pair with correlation `rho`,
/// returned as `(i_xu, i_yu, i_xv_given_u, i_yv_given_u)`.
pub fn gaussian_cascade_mtsc_informations(rho: f64, a: f64, b: f64) -> (f64, f64, f64, f64) {
    let r2 = rho * rho;
    let var_u = 1.0 + a;
    let i_xu = 0.5 * (var_u / a).log2();
    let i_yu = -0.5 * (1.0 - r2 / var_u).log2();
    // Condition (X, Y, V) on U: Schur complement against Var(U).
    let vx = 1.0 - 1.0 / var_u;
    let cxy = rho - rho / var_u;
    let vy = 1.0 - r2 / var_u;
    // V = Y + N(0,b): conditional covariances follow Y's.
    let vv = vy + b;
    let cxv = cxy;
    let cyv = vy;
    let i_xv_given_u = 0.5 * (vx * vv / (vx * vv - cxv * cxv)).log2();
    let i_yv_given_u = 0.5 * (vy * vv / (vy * vv - cyv * cyv)).log2();
    (i_xu, i_yu, i_xv_given_u, i_yv_given_u)
}

/// Upper bound on the best-possible data-processing function of the
/// unit-noise Gaussian channel at output-information budget `t`:
/// `I(X;Y) - 0.5 log2(1 + 2^{2(h(X)-t)} / (2 pi e))`. Tight for Gaussian `X`.
pub fn strong_dpi_bound(h_x: f64, i_xy: f64, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "budget t must be nonnegative, got {t}"
        )));
    }
    Ok(i_xy - 0.5 * (1.0 + (2.0 * (h_x - t)).exp2() / TWO_PI_E).log2())
}

/// Result of a Han-Kobayashi Gaussian-input region membership query.
#[derive(Debug, Clone, Copy)]
pub struct HkRegionCheck {
    pub admissible: bool,
    /// `0.5 log2(1+P1) - r1`
    pub slack_r1: f64,
    /// `0.5 log2(1+P2) - r2`
    pub slack_r2: f64,
    /// `2^{-2 r2} - rhs` of the cross constraint, in linear scale.
    pub slack_cross: f64,
}

/// Right-hand side of the Han-Kobayashi cross constraint in linear scale.
pub fn hk_cross_rhs(ic: ICSpec, r1: f64) -> f64 {
    let a2 = ic.alpha * ic.alpha;
    let denom = ic.p2 + 1.0 - a2;
    a2 * ic.p2 * (2.0 * r1).exp2() / (denom * (1.0 + a2 * ic.p1 + ic.p2)) + (1.0 - a2) / denom
}

/// Checks membership of `(r1, r2)` in the Gaussian-input Han-Kobayashi
/// region without power control.
pub fn hk_gaussian_region_check(ic: ICSpec, r1: f64, r2: f64) -> HkRegionCheck {
    let slack_r1 = 0.5 * (1.0 + ic.p1).log2() - r1;
    let slack_r2 = 0.5 * (1.0 + ic.p2).log2() - r2;
    let slack_cross = (-2.0 * r2).exp2() - hk_cross_rhs(ic, r1);
    HkRegionCheck {
        admissible: slack_r1 >= 0.0 && slack_r2 >= 0.0 && slack_cross >= 0.0,
        slack_r1,
        slack_r2,
        slack_cross,
    }
}

/// `N^{1 + 1.5 zeta} J^{1 + zeta} - 1` under the unit-variance convention:
/// the Poincare-sharpened Stam slack, nonnegative for densities satisfying a
/// Poincare inequality with constant `zeta`.
pub fn poincare_sharpened_slack(n_x: f64, j_x: f64, zeta: f64) -> Result<f64> {
    if !(n_x > 0.0 && j_x > 0.0) {
        return Err(Error::InvalidParameter(
            "entropy power and Fisher information must be positive".into(),
        ));
    }
    if zeta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "zeta must be nonnegative, got {zeta}"
        )));
    }
    Ok(n_x.powf(1.0 + 1.5 * zeta) * j_x.powf(1.0 + zeta) - 1.0)
}
