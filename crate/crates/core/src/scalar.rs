//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for energies, messages and beliefs: `f32` or `f64`.
///
/// Tolerances are written as `f64` literals and converted with [`Scalar::lit`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exponentiates log weights in place and normalizes them to sum to one.
/// Returns `false` when every entry is `-inf`.
pub(crate) fn normalize_log_weights<S: Scalar>(logs: &[S], out: &mut [S]) -> bool {
    let max = logs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() || max.is_nan() {
        return false;
    }
    let mut total = S::zero();
    for (o, &l) in out.iter_mut().zip(logs) {
        *o = (l - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
    true
}

/// `x * ln(x)` with the `0 ln 0 = 0` convention.
#[inline]
pub(crate) fn x_ln_x<S: Scalar>(x: S) -> S {
    if x <= S::zero() {
        S::zero()
    } else {
        x * x.ln()
    }
}
