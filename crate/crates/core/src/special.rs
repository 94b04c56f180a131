//! Standard normal distribution helpers and the principal Lambert-W branch.

use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `Φ(x) = erfc(−x/√2) / 2`.
///
/// `erfc` is the fdlibm/musl implementation (via `libm`), accurate to about
/// one ulp, so the absolute error of `Φ` stays well below `1e-12`. Using
/// `erfc` rather than `1 + erf` keeps full relative accuracy in the lower tail.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Principal branch `W₀(z)` for `z ≥ 0`: the `w ≥ 0` with `w eʷ = z`.
///
/// Newton iteration started at `ln(1 + z)`. Since `w eʷ` is convex and the
/// start lies above the root, the iterates decrease monotonically.
pub fn lambert_w0(z: f64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("lambert_w0 needs a finite z >= 0, got {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let mut w = z.ln_1p();
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let step = f / (ew * (w + 1.0));
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}
