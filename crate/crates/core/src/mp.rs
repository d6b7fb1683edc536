//! Thin helpers over `rug::Float` for the arbitrary-precision code paths.

use rug::Float;

/// Working precision, in bits, used when nothing else is configured.
pub const DEFAULT_PRECISION: u32 = 256;

#[inline]
pub fn real(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

#[inline]
pub fn zero(prec: u32) -> Float {
    Float::with_val(prec, 0)
}

#[inline]
pub fn one(prec: u32) -> Float {
    Float::with_val(prec, 1)
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: &Float, b: &Float) -> f64 {
    let scale = Float::with_val(a.prec().max(b.prec()), a.abs_ref()).max(&Float::with_val(b.prec(), b.abs_ref()));
    if scale.is_zero() {
        return 0.0;
    }
    let d = Float::with_val(a.prec().max(b.prec()), a - b).abs();
    (d / scale).to_f64()
}
