//! The finite-only E4M3 8-bit float: 1 sign bit, 4 exponent bits (bias 7),
//! 3 mantissa bits. Exponent 1111 is an ordinary binade except for mantissa
//! 111, which is NaN. There is no infinity; the largest finite magnitude is
//! 448 and the subnormal step is 2^-9.

/// Largest finite magnitude.
pub const MAX: f64 = 448.0;
/// Smallest normal magnitude, 2^-6.
pub const MIN_NORMAL: f64 = 0.015625;
/// Code for +448.
pub const MAX_CODE: u8 = 0x7E;
/// Canonical NaN code.
pub const NAN_CODE: u8 = 0x7F;

const SIGN: u8 = 0x80;
const SUBNORMAL_STEP: f64 = 1.0 / 512.0;

pub fn is_nan(code: u8) -> bool {
    code & 0x7F == 0x7F
}

pub fn decode(code: u8) -> f64 {
    let sign = if code & SIGN != 0 { -1.0 } else { 1.0 };
    let exp = (code >> 3) & 0x0F;
    let mant = (code & 0x07) as f64;
    if exp == 0x0F && code & 0x07 == 0x07 {
        return f64::NAN;
    }
    let mag = if exp == 0 {
        mant * SUBNORMAL_STEP
    } else {
        (1.0 + mant / 8.0) * 2f64.powi(exp as i32 - 7)
    };
    sign * mag
}

/// Rounds to the nearest E4M3 value, ties to even. Magnitudes beyond 448
/// saturate; NaN maps to [`NAN_CODE`]; the sign of zero is kept.
pub fn encode(x: f64) -> u8 {
    if x.is_nan() {
        return NAN_CODE;
    }
    let sign = if x.is_sign_negative() { SIGN } else { 0 };
    let a = x.abs();
    if a >= MAX {
        return sign | MAX_CODE;
    }
    if a < MIN_NORMAL {
        // m == 8 lands on the smallest normal, whose code is also 8.
        let m = (a / SUBNORMAL_STEP).round_ties_even() as u8;
        return sign | m;
    }
    let mut exp = a.log2().floor() as i32;
    // log2 can be off by one right at a binade edge.
    if 2f64.powi(exp) > a {
        exp -= 1;
    } else if 2f64.powi(exp + 1) <= a {
        exp += 1;
    }
    let frac = a / 2f64.powi(exp) - 1.0;
    let mut m = (frac * 8.0).round_ties_even() as i32;
    if m == 8 {
        m = 0;
        exp += 1;
    }
    let field = exp + 7;
    if field > 15 || (field == 15 && m == 7) {
        return sign | MAX_CODE;
    }
    sign | ((field as u8) << 3) | m as u8
}
