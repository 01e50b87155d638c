//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Real`], which is implemented for `f32` and
//! `f64`. Pipeline-facing aliases at the crate root fix the scalar to `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable by the pipeline (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + ScalarOperand
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Widens (or copies) a stored single-precision value.
    fn from_f32_exact(x: f32) -> Self;

    fn to_f32_lossy(self) -> f32;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_f32_exact(x: f32) -> Self {
                x as $t
            }
            #[inline]
            fn to_f32_lossy(self) -> f32 {
                self as f32
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Arithmetic mean; `None` on empty input.
pub fn mean<R: Real>(values: impl IntoIterator<Item = R>) -> Option<R> {
    let mut n = 0usize;
    let mut acc = R::zero();
    for v in values {
        acc += v;
        n += 1;
    }
    (n > 0).then(|| acc / R::lit(n as f64))
}

/// Population mean and standard deviation (divides by `n`).
pub fn mean_and_population_std<R: Real>(values: &[R]) -> Option<(R, R)> {
    let mu = mean(values.iter().copied())?;
    let var = values.iter().map(|&v| (v - mu) * (v - mu)).sum::<R>() / R::lit(values.len() as f64);
    Some((mu, var.sqrt()))
}

/// Numerically stable `ln(sum(exp(x)))`.
pub fn log_sum_exp<R: Real>(values: impl Iterator<Item = R> + Clone) -> R {
    let max = values.clone().fold(R::neg_infinity(), R::max);
    if max == R::neg_infinity() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<R>().ln()
}

/// Median of a slice by sorting a copy; midpoint average for even lengths.
pub fn median<R: Real>(values: &[R]) -> Option<R> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median of NaN"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / R::lit(2.0)
    })
}
