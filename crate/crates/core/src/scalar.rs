//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All math is written against [`Real`] so the same code runs in `f32` or
//! `f64`. Accuracy targets quoted throughout the crate assume `f64`.

use std::fmt::{Debug, Display, LowerExp};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating point type usable as the real scalar of the solver.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn nat(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for an `f64` literal converted to `R`.
#[inline]
pub fn lit<R: Real>(x: f64) -> R {
    R::lit(x)
}

#[inline]
pub fn cplx<R: Real>(re: f64, im: f64) -> Complex<R> {
    Complex::new(R::lit(re), R::lit(im))
}

#[inline]
pub fn czero<R: Real>() -> Complex<R> {
    Complex::new(R::zero(), R::zero())
}

#[inline]
pub fn cone<R: Real>() -> Complex<R> {
    Complex::new(R::one(), R::zero())
}

#[inline]
pub fn ci<R: Real>() -> Complex<R> {
    Complex::new(R::zero(), R::one())
}

#[inline]
pub fn is_finite<R: Real>(z: Complex<R>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// `t^mu` for a real base with the branch `arg t ∈ (−π, π]`, so a negative
/// base contributes `exp(iπ mu)`.
pub fn real_pow<R: Real>(t: R, mu: Complex<R>) -> Complex<R> {
    let ln = Complex::new(t.abs().ln(), if t < R::zero() { R::PI() } else { R::zero() });
    (mu * ln).exp()
}

/// `y · exp(arg)` evaluated through logarithms when the two factors would
/// under- or overflow separately.
pub fn mul_exp<R: Real>(y: Complex<R>, arg: Complex<R>) -> Complex<R> {
    let direct = y * arg.exp();
    if is_finite(direct) && (direct.norm() > R::min_positive_value() || y.norm() == R::zero()) {
        return direct;
    }
    if y.norm() == R::zero() {
        return czero();
    }
    (y.ln() + arg).exp()
}

/// Square root with the branch `Im ≥ 0`.
pub fn sqrt_upper<R: Real>(z: Complex<R>) -> Complex<R> {
    let r = z.sqrt();
    if r.im < R::zero() {
        -r
    } else {
        r
    }
}

/// Argument mapped into `[0, 2π)`.
pub fn arg_0_2pi<R: Real>(z: Complex<R>) -> R {
    let a = z.arg();
    if a < R::zero() {
        a + R::TAU()
    } else {
        a
    }
}

/// Relative deviation `|a − b| / max(|b|, floor)`.
pub fn rel_err<R: Real>(a: Complex<R>, b: Complex<R>, floor: R) -> R {
    (a - b).norm() / b.norm().max(floor)
}
