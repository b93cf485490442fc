//! Scalar helpers over `libm` so the crate stays `no_std`.

pub(crate) use libm::{cos, exp, fabs as abs, floor, log1p, sin, sqrt};

pub(crate) const TAU: f64 = core::f64::consts::TAU;
pub(crate) const PI: f64 = core::f64::consts::PI;

/// Wraps an angle into `[0, 2π)`.
pub(crate) fn wrap_angle(x: f64) -> f64 {
    let w = x - TAU * floor(x / TAU);
    if w >= TAU || w < 0.0 {
        0.0
    } else {
        w
    }
}

/// `-ln σ(x)`, evaluated without overflow for large `|x|`.
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        log1p(exp(-x))
    } else {
        -x + log1p(exp(x))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
