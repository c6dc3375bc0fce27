//! Floating-point abstraction over f32 (training) and f64 (gradient checking).

use rustfft::FftNum;

/// Element type for arrays, signals, and spectra.
///
/// Training instantiates everything with `f32`; gradient checks and the
/// analytic-vs-numeric comparisons use `f64` for headroom.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::NumAssign
    + FftNum
    + Default
    + std::fmt::Display
    + std::iter::Sum
    + 'static
{
    /// True in the double-precision checking mode.
    const DOUBLE: bool;

    fn from_double(v: f64) -> Self;
    fn to_double(self) -> f64;

    fn from_count(v: usize) -> Self {
        Self::from_double(v as f64)
    }

    /// Tolerance used when validating conjugate symmetry of a spectrum.
    fn sym_tol() -> Self;
}

impl Scalar for f32 {
    const DOUBLE: bool = false;

    fn from_double(v: f64) -> Self {
        v as f32
    }

    fn to_double(self) -> f64 {
        self as f64
    }

    fn sym_tol() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    const DOUBLE: bool = true;

    fn from_double(v: f64) -> Self {
        v
    }

    fn to_double(self) -> f64 {
        self
    }

    fn sym_tol() -> Self {
        1e-6
    }
}
