//! Scalar abstraction so the simulation code works in either f32 or f64.
//!
//! The trait bundles the num-traits float bounds the library relies on with
//! the two sampling primitives the simulators need. Everything downstream is
//! written against [`Scalar`]; the experiment drivers instantiate f64.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable across the simulation and training code.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + ndarray::ScalarOperand
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw uniformly from [0, 1).
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from f64; panics only for exotic types that cannot
    /// represent ordinary constants.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// Lossless-enough view as f64 for serialization and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen()
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen()
    }
}

/// Draw one circularly-symmetric complex Gaussian sample with unit variance,
/// i.e. real and imaginary parts are independent N(0, 1/2).
pub fn complex_standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let half = T::of(std::f64::consts::FRAC_1_SQRT_2);
    Complex::new(T::standard_normal(rng) * half, T::standard_normal(rng) * half)
}

/// 10^(db/10).
pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::of(10.0).powf(db / T::of(10.0))
}

/// 10 log10(linear).
pub fn linear_to_db<T: Scalar>(linear: T) -> T {
    T::of(10.0) * linear.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn db_round_trip() {
        for &db in &[-174.0f64, -30.0, 0.0, 17.0, 53.0] {
            let lin = db_to_linear(db);
            assert!((linear_to_db(lin) - db).abs() < 1e-12);
        }
        assert!((db_to_linear(0.0f64) - 1.0).abs() < 1e-15);
        assert!((db_to_linear(30.0f64) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn complex_normal_unit_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut acc = 0.0f64;
        for _ in 0..n {
            let z: Complex<f64> = complex_standard_normal(&mut rng);
            acc += z.norm_sqr();
        }
        let mean = acc / n as f64;
        // E|z|^2 = 1, std of the mean is about 1/sqrt(n)
        assert!((mean - 1.0).abs() < 0.02, "mean |z|^2 = {mean}");
    }
}
