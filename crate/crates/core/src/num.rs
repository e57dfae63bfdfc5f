//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the simulator is generic over (`f32` or `f64`).
///
/// Arithmetic and elementary functions come from [`RealField`]; conversions
/// and constants come from `num-traits`.
pub trait Real:
    RealField
    + Copy
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon of the underlying float.
    const EPSILON: Self;

    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            const EPSILON: Self = <$f>::EPSILON;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

#[inline]
pub(crate) fn tau<T: Real>() -> T {
    T::TAU()
}

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// `|z|^2` without the square root.
#[inline]
pub(crate) fn norm_sqr<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub(crate) fn cabs<T: Real>(z: C<T>) -> T {
    z.re.hypot(z.im)
}

/// Principal argument in `(-pi, pi]`.
#[inline]
pub(crate) fn arg<T: Real>(z: C<T>) -> T {
    let a = z.im.atan2(z.re);
    if a <= -T::PI() {
        a + tau::<T>()
    } else {
        a
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(x: T) -> T {
    let pi = T::PI();
    let two_pi = tau::<T>();
    let mut y = x % two_pi;
    if y > pi {
        y -= two_pi;
    } else if y <= -pi {
        y += two_pi;
    }
    y
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        let pi = std::f64::consts::PI;
        assert_eq!(wrap_angle(pi), pi);
        assert!((wrap_angle(-pi) - pi).abs() < 1e-15);
        assert!((wrap_angle(3.0 * pi + 0.25) - (-pi + 0.25)).abs() < 1e-12);
        assert!((wrap_angle(-0.5_f32) + 0.5).abs() < 1e-7);
    }

    #[test]
    fn arg_never_returns_minus_pi() {
        let z = cplx(-1.0_f64, -0.0);
        assert_eq!(arg(z), std::f64::consts::PI);
    }
}
