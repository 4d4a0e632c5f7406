//! Extended contact barrier: a logarithmic barrier over squared distances,
//! extrapolated into negative signed distance (penetration) by a quartic
//! polynomial joined with C2 continuity at `d_b = xi + b_p * dhat`.

use crate::{CoreError, Result};

/// Coefficients of the piecewise barrier for one (xi, dhat, b_p) setting.
///
/// `d_b` is the join point where the log barrier hands off to the quartic;
/// `f_b`, `f_b_d`, `f_b_dd` are the log-barrier value and first two
/// derivatives there. The two free quartic coefficients `a_3`, `a_4` are
/// resolved from the targets `e_1`, `e_2` at the deep-penetration offset
/// `t_0 = -(xi + dhat) - d_b`.
#[derive(Debug, Clone, Copy)]
pub struct BarrierCoeffs {
    pub xi: f64,
    pub dhat: f64,
    pub b_p: f64,
    pub d_b: f64,
    pub f_b: f64,
    pub f_b_d: f64,
    pub f_b_dd: f64,
    pub d_f: f64,
    pub t_0: f64,
    pub e_1: f64,
    pub e_2: f64,
    pub a_3: f64,
    pub a_4: f64,
}

/// Log-barrier branch (no outer clamp): `-(d^2-S^2)^2 * ln((d^2-xi^2)/(S^2-xi^2))`.
pub fn log_barrier(d: f64, xi: f64, dhat: f64) -> f64 {
    let s = xi + dhat;
    let q = d * d - s * s;
    let u = d * d - xi * xi;
    let c = s * s - xi * xi;
    -(q * q) * (u / c).ln()
}

/// First derivative of the log-barrier branch.
pub fn log_barrier_d(d: f64, xi: f64, dhat: f64) -> f64 {
    let s = xi + dhat;
    let q = d * d - s * s;
    let u = d * d - xi * xi;
    let c = s * s - xi * xi;
    let l = (u / c).ln();
    -2.0 * d * (2.0 * q * l + q * q / u)
}

/// Second derivative of the log-barrier branch.
pub fn log_barrier_dd(d: f64, xi: f64, dhat: f64) -> f64 {
    let s = xi + dhat;
    let q = d * d - s * s;
    let u = d * d - xi * xi;
    let c = s * s - xi * xi;
    let l = (u / c).ln();
    let t1 = -2.0 * (2.0 * q * l + q * q / u);
    let t2 = -4.0 * d * d * (2.0 * l + 2.0 * q / u + q * (2.0 * u - q) / (u * u));
    t1 + t2
}

/// Evaluates the join value/derivatives and the quartic coefficients.
pub fn barrier_coeffs(xi: f64, dhat: f64, b_p: f64) -> Result<BarrierCoeffs> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "hard barrier xi must be positive, got {xi}"
        )));
    }
    if !(dhat > 0.0 && dhat.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "soft barrier dhat must be positive, got {dhat}"
        )));
    }
    if !(0.0 < b_p && b_p < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "b_p must lie in (0, 1), got {b_p}"
        )));
    }
    let d_b = xi + b_p * dhat;
    let f_b = log_barrier(d_b, xi, dhat);
    let f_b_d = log_barrier_d(d_b, xi, dhat);
    let f_b_dd = log_barrier_dd(d_b, xi, dhat);
    let d_f = f_b_dd / 2.0;
    let t_0 = -(xi + dhat) - d_b;
    let e_1 = -(f_b + f_b_d * t_0 + d_f * t_0 * t_0);
    let e_2 = -(f_b_d + 2.0 * d_f * t_0);
    let a_3 = 4.0 * e_1 / t_0.powi(3) - e_2 / t_0.powi(2);
    let a_4 = e_2 / t_0.powi(3) - 3.0 * e_1 / t_0.powi(4);
    Ok(BarrierCoeffs {
        xi,
        dhat,
        b_p,
        d_b,
        f_b,
        f_b_d,
        f_b_dd,
        d_f,
        t_0,
        e_1,
        e_2,
        a_3,
        a_4,
    })
}

/// Quartic extrapolation branch (no outer clamp), `tau = d - d_b`.
pub fn quartic(c: &BarrierCoeffs, d: f64) -> f64 {
    let t = d - c.d_b;
    c.f_b + c.f_b_d * t + c.d_f * t * t + c.a_3 * t.powi(3) + c.a_4 * t.powi(4)
}

fn quartic_d(c: &BarrierCoeffs, d: f64) -> f64 {
    let t = d - c.d_b;
    c.f_b_d + 2.0 * c.d_f * t + 3.0 * c.a_3 * t * t + 4.0 * c.a_4 * t.powi(3)
}

/// The piecewise barrier: log branch for `d >= d_b`, quartic below, both
/// clamped at zero. Finite for every finite `d`.
pub fn barrier(c: &BarrierCoeffs, d: f64) -> f64 {
    if d >= c.d_b {
        log_barrier(d, c.xi, c.dhat).max(0.0)
    } else {
        quartic(c, d).max(0.0)
    }
}

/// Derivative of the barrier. At clamped regions the subgradient is zero; at
/// the join the quartic side applies (both branches agree to C2 there).
pub fn barrier_d(c: &BarrierCoeffs, d: f64) -> f64 {
    let s = c.xi + c.dhat;
    if d >= s {
        0.0
    } else if d >= c.d_b {
        log_barrier_d(d, c.xi, c.dhat)
    } else if quartic(c, d) > 0.0 {
        quartic_d(c, d)
    } else {
        0.0
    }
}
