//! Cone kernels `Ω` and the cone distance over the real line.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `n * m` for [`kernel_pd_check`].
pub const PD_CHECK_CAP: usize = 400;

/// Threshold on the minimum eigenvalue under which the pairing kernel is not
/// treated as positive definite.
pub const PD_THRESHOLD: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `cos(min(z, π/2))`, the Hellinger-Kantorovich profile.
    TruncatedCosine,
    /// `exp(-z²)`, the Gaussian-Hellinger profile.
    Gaussian,
}

impl KernelFamily {
    pub fn cli_name(self) -> &'static str {
        match self {
            KernelFamily::TruncatedCosine => "cos",
            KernelFamily::Gaussian => "exp",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(KernelFamily::TruncatedCosine),
            "exp" => Ok(KernelFamily::Gaussian),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel '{other}', expected 'cos' or 'exp'"
            ))),
        }
    }
}

/// Polynomial constants with `1 - C z² <= Ω(z)` globally and
/// `Ω(z) <= 1 - C z² + C' z⁴` on the bounded range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub c: f64,
    pub c_prime: f64,
}

/// A point `[x, r]` of the cone over the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    pub base: f64,
    pub radius: f64,
}

impl ConePoint {
    pub fn new(base: f64, radius: f64) -> Self {
        Self { base, radius }
    }
}

/// The `Ω` profile together with the cone angle `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeKernel {
    family: KernelFamily,
    delta: f64,
}

impl ConeKernel {
    pub fn new(family: KernelFamily, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(Self { family, delta })
    }

    pub fn gaussian(delta: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, delta)
    }

    pub fn truncated_cosine(delta: f64) -> Result<Self> {
        Self::new(KernelFamily::TruncatedCosine, delta)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same family at another cone angle.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.family, delta)
    }

    /// `Ω(z)` for a validated argument.
    pub fn omega(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFinite(z));
        }
        if z < 0.0 {
            return Err(Error::NegativeArgument(z));
        }
        Ok(self.omega_unchecked(z))
    }

    #[inline]
    pub(crate) fn omega_unchecked(&self, z: f64) -> f64 {
        match self.family {
            // cos(π/2) rounds to 6e-17; the clipped branch is exactly zero
            KernelFamily::TruncatedCosine if z >= FRAC_PI_2 => 0.0,
            KernelFamily::TruncatedCosine => z.cos(),
            KernelFamily::Gaussian => (-z * z).exp(),
        }
    }

    /// `Ω(|u - v| / 2δ)`; agrees bit-for-bit with `omega` on the normalized argument.
    #[inline]
    pub fn omega_between(&self, u: f64, v: f64) -> f64 {
        self.omega_unchecked(self.normalized_gap(u, v))
    }

    #[inline]
    pub fn normalized_gap(&self, u: f64, v: f64) -> f64 {
        (u - v).abs() / (2.0 * self.delta)
    }

    /// Squared cone distance `4δ²(r² + s² - 2rs Ω(|x-y|/2δ))`.
    pub fn cone_distance_sq(&self, p: ConePoint, q: ConePoint) -> Result<f64> {
        for v in [p.base, p.radius, q.base, q.radius] {
            if !v.is_finite() {
                return Err(Error::NonFinite(v));
            }
        }
        for r in [p.radius, q.radius] {
            if r < 0.0 {
                return Err(Error::NegativeArgument(r));
            }
        }
        let (r, s) = (p.radius, q.radius);
        let cross = 2.0 * r * s * self.omega_between(p.base, q.base);
        let d2 = 4.0 * self.delta * self.delta * (r * r + s * s - cross);
        Ok(d2.max(0.0))
    }

    pub fn constants(&self) -> KernelConstants {
        match self.family {
            KernelFamily::TruncatedCosine => KernelConstants {
                c: 0.5,
                c_prime: 1.0 / 24.0,
            },
            KernelFamily::Gaussian => KernelConstants { c: 1.0, c_prime: 0.5 },
        }
    }

    /// Lipschitz constant of `Ω` in its (normalized) argument.
    pub fn lipschitz(&self) -> f64 {
        match self.family {
            KernelFamily::TruncatedCosine => 1.0,
            KernelFamily::Gaussian => (2.0 / std::f64::consts::E).sqrt(),
        }
    }
}

/// Smallest eigenvalue of the pairing kernel
/// `K[(i,k),(i',k')] = Ω(|ω_X(i,i') - ω_Y(k,k')| / 2δ)`.
///
/// Values at or above [`PD_THRESHOLD`] are read as positive definite.
pub fn kernel_pd_check(
    kernel: &ConeKernel,
    omega_x: &Array2<f64>,
    omega_y: &Array2<f64>,
    cap: usize,
) -> Result<f64> {
    let (n, n2) = omega_x.dim();
    let (m, m2) = omega_y.dim();
    if n != n2 || m != m2 {
        return Err(Error::DimensionMismatch(
            "pairing kernel needs square network kernels".into(),
        ));
    }
    let size = n * m;
    if size > cap {
        return Err(Error::SizeCapExceeded { size, cap });
    }
    if size == 0 {
        return Ok(0.0);
    }
    let mut k = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for kk in 0..m {
            let row = i * m + kk;
            for ip in 0..n {
                for kp in 0..m {
                    let col = ip * m + kp;
                    // symmetrize: asymmetric kernels give a non-symmetric pairing
                    let a = kernel.omega_between(omega_x[[i, ip]], omega_y[[kk, kp]]);
                    let b = kernel.omega_between(omega_x[[ip, i]], omega_y[[kp, kk]]);
                    k[(row, col)] = 0.5 * (a + b);
                }
            }
        }
    }
    let eig = SymmetricEigen::new(k);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn both(delta: f64) -> [ConeKernel; 2] {
        [
            ConeKernel::truncated_cosine(delta).unwrap(),
            ConeKernel::gaussian(delta).unwrap(),
        ]
    }

    #[test]
    fn omega_examples() {
        let cos = ConeKernel::truncated_cosine(0.5).unwrap();
        let exp = ConeKernel::gaussian(0.5).unwrap();
        assert_eq!(cos.omega(0.0).unwrap(), 1.0);
        assert!(cos.omega(2.0).unwrap().abs() < 1e-16);
        assert!((exp.omega(1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(exp.omega(-1.0).unwrap_err(), Error::NegativeArgument(-1.0));
        assert!(matches!(exp.omega(f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(ConeKernel::gaussian(0.0), Err(Error::InvalidDelta(_))));
    }

    #[test]
    fn omega_between_matches_raw_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in both(0.7) {
            for _ in 0..1000 {
                let u: f64 = rng.random_range(-3.0..3.0);
                let v: f64 = rng.random_range(-3.0..3.0);
                let z = (u - v).abs() / (2.0 * k.delta());
                assert_eq!(k.omega_between(u, v).to_bits(), k.omega(z).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn cone_distance_examples() {
        let cos = ConeKernel::truncated_cosine(0.5).unwrap();
        let p = ConePoint::new(0.0, 1.0);
        assert_eq!(cos.cone_distance_sq(p, p).unwrap(), 0.0);
        let q = ConePoint::new(FRAC_PI_2, 1.0);
        assert!((cos.cone_distance_sq(p, q).unwrap() - 2.0).abs() < 1e-15);
        let exp = ConeKernel::gaussian(1.0).unwrap();
        let d = exp
            .cone_distance_sq(ConePoint::new(5.0, 2.0), ConePoint::new(0.0, 0.0))
            .unwrap();
        assert_eq!(d, 16.0);
    }

    #[test]
    fn constants_per_family() {
        let [cos, exp] = both(1.0);
        assert_eq!(cos.constants(), KernelConstants { c: 0.5, c_prime: 1.0 / 24.0 });
        assert_eq!(exp.constants(), KernelConstants { c: 1.0, c_prime: 0.5 });
    }

    #[test]
    fn polynomial_bounds_on_grid() {
        for k in both(1.0) {
            let KernelConstants { c, c_prime } = k.constants();
            for step in 0..=3000 {
                let z = step as f64 * 1e-3;
                let w = k.omega(z).unwrap();
                assert!(1.0 - c * z * z <= w + 1e-15, "{k:?} lower bound at {z}");
                // the quartic upper bound is local: check it up to z = 1
                if z <= 1.0 {
                    assert!(w <= 1.0 - c * z * z + c_prime * z.powi(4) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn omega_nonincreasing_and_in_unit_interval() {
        for k in both(1.0) {
            let mut prev = k.omega(0.0).unwrap();
            assert_eq!(prev, 1.0);
            for step in 1..=5000 {
                let z = step as f64 * 1e-3;
                let w = k.omega(z).unwrap();
                assert!(w <= prev + 1e-16);
                assert!((0.0..1.0).contains(&w) || w.abs() < 1e-16);
                prev = w;
            }
        }
    }

    #[test]
    fn semigroup_axiom_on_random_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in both(1.0) {
            for _ in 0..5000 {
                let a: f64 = rng.random_range(0.0..3.0);
                let b: f64 = rng.random_range(0.0..3.0);
                let lhs = k.omega(a + b).unwrap();
                let rhs = k.omega(a).unwrap() * k.omega(b).unwrap();
                assert!(lhs <= rhs + 1e-15, "{k:?}: Ω({a}+{b})={lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn pd_check_examples() {
        let exp = ConeKernel::gaussian(0.5).unwrap();
        let v = kernel_pd_check(&exp, &array![[0.3]], &array![[0.8]], PD_CHECK_CAP).unwrap();
        assert!((v - exp.omega_between(0.3, 0.8)).abs() < 1e-15);
        // constant kernels pair into the all-ones matrix
        let flat = Array2::from_elem((3, 3), 0.4);
        let v = kernel_pd_check(&exp, &flat, &flat, PD_CHECK_CAP).unwrap();
        assert!(v >= PD_THRESHOLD, "min eigenvalue {v}");
        let big = Array2::zeros((21, 21));
        assert!(matches!(
            kernel_pd_check(&exp, &big, &big, PD_CHECK_CAP),
            Err(Error::SizeCapExceeded { size: 441, cap: 400 })
        ));
    }

    #[test]
    fn identical_networks_need_not_pair_positive_definitely() {
        // The pairing argument ω(i,i') - ω(k,k') is not a difference of
        // per-index features, so Gaussianity alone does not give a PD matrix.
        let exp = ConeKernel::gaussian(0.5).unwrap();
        let x = array![[0.0, 0.4, 1.0], [0.4, 0.0, 0.7], [1.0, 0.7, 0.0]];
        let v = kernel_pd_check(&exp, &x, &x, PD_CHECK_CAP).unwrap();
        assert!(v < PD_THRESHOLD, "min eigenvalue {v}");
    }

    #[test]
    fn pd_check_random_binary_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let exp = ConeKernel::gaussian(0.5).unwrap();
        let mut adj = || Array2::from_shape_fn((3, 3), |(i, j)| {
            if i != j && rng.random_bool(0.5) { 1.0 } else { 0.0 }
        });
        let (x, y) = (adj(), adj());
        let v = kernel_pd_check(&exp, &x, &y, PD_CHECK_CAP).unwrap();
        assert!(v.is_finite());
    }

    fn cone_point() -> impl Strategy<Value = ConePoint> {
        (-5.0f64..5.0, 0.0f64..3.0).prop_map(|(b, r)| ConePoint::new(b, r))
    }

    proptest! {
        #[test]
        fn cone_distance_zero_on_diagonal_and_symmetric(p in cone_point(), q in cone_point(), delta in 0.1f64..4.0) {
            for k in both(delta) {
                prop_assert_eq!(k.cone_distance_sq(p, p).unwrap(), 0.0);
                prop_assert_eq!(k.cone_distance_sq(p, q).unwrap(), k.cone_distance_sq(q, p).unwrap());
            }
        }

        #[test]
        fn cone_distance_radial_scaling(p in cone_point(), q in cone_point(), r in 0.0f64..4.0, delta in 0.1f64..4.0) {
            for k in both(delta) {
                let lhs = k.cone_distance_sq(
                    ConePoint::new(p.base, p.radius * r),
                    ConePoint::new(q.base, q.radius * r),
                ).unwrap();
                let rhs = r * r * k.cone_distance_sq(p, q).unwrap();
                // relative to the natural magnitude of the terms, which bounds the cancellation error
                let scale = 4.0 * delta * delta * r * r * (p.radius.powi(2) + q.radius.powi(2));
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(rhs.abs()).max(f64::MIN_POSITIVE));
            }
        }

        #[test]
        fn cone_distance_same_base(x in -5.0f64..5.0, t in 0.0f64..3.0, s in 0.0f64..3.0) {
            // at δ = 1/2 the same-base distance is exactly the radial gap squared
            for k in both(0.5) {
                let d = k.cone_distance_sq(ConePoint::new(x, t), ConePoint::new(x, s)).unwrap();
                prop_assert!((d - (t - s).powi(2)).abs() <= 1e-12 * (t * t + s * s).max(1.0));
            }
        }
    }
}
