//! Scalar abstraction shared by the geometric layer.
//!
//! The double description code, zero sets and adjacency tests only need
//! field arithmetic plus a notion of "numerically zero", so they are written
//! against [`Scalar`] and run unchanged on `f32`, `f64` and exact
//! [`BigRational`]s. Solvers that need square roots or iterative refinement
//! (NNLS, the LP, projections) require [`Real`].

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// True when arithmetic is exact and zero tests need no tolerance.
    const EXACT: bool;

    /// Tolerance used when the caller does not supply one.
    fn default_tolerance() -> Self;

    fn is_finite_value(&self) -> bool;

    /// Length used to normalise rays and rows: Euclidean norm for floating
    /// point types, largest absolute entry for exact types.
    fn vector_scale(v: &[Self]) -> Self;

    /// Total order used for canonical ray ordering. Floating point values are
    /// compared after rounding to 12 decimals.
    fn canonical_cmp(&self, other: &Self) -> Ordering;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite value representable in scalar type")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `|self| <= tol`
    fn is_negligible(&self, tol: &Self) -> bool {
        self.abs() <= *tol
    }
}

/// Floating point scalars with the usual transcendental functions.
pub trait Real: Scalar + Float + Copy {}

impl<T: Scalar + Float + Copy> Real for T {}

macro_rules! float_scalar {
    ($t:ty, $tol:expr) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn default_tolerance() -> Self {
                $tol
            }

            fn is_finite_value(&self) -> bool {
                self.is_finite()
            }

            fn vector_scale(v: &[Self]) -> Self {
                v.iter().map(|x| x * x).sum::<$t>().sqrt()
            }

            fn canonical_cmp(&self, other: &Self) -> Ordering {
                let a = (*self as f64 * 1e12).round();
                let b = (*other as f64 * 1e12).round();
                a.partial_cmp(&b).unwrap_or(Ordering::Equal)
            }
        }
    };
}

float_scalar!(f64, 1e-10);
float_scalar!(f32, 1e-5);

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn default_tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn vector_scale(v: &[Self]) -> Self {
        v.iter()
            .map(|x| x.abs())
            .fold(BigRational::from_integer(BigInt::from(0)), |acc, x| {
                if x > acc {
                    x
                } else {
                    acc
                }
            })
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

/// Exact rational from a float, going through its binary expansion.
pub fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

pub fn rational_from_ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
