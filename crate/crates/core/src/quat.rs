//! Real quaternions, the complex 2x2 matrix representation, and the rotor
//! that moves an arbitrary quaternion onto the lower half of the `i`-slice.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};

/// `w + x i + y j + z k`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn real(w: f64) -> Self {
        Self::new(w, 0.0, 0.0, 0.0)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Component `m` in `1..=4` along `1, i, j, k`.
    pub fn component(self, m: usize) -> f64 {
        match m {
            1 => self.w,
            2 => self.x,
            3 => self.y,
            4 => self.z,
            _ => panic!("quaternion component {m} out of range 1..=4"),
        }
    }

    /// The unit `1, i, j, k` for `m = 1..=4`.
    pub fn unit(m: usize) -> Self {
        match m {
            1 => Self::ONE,
            2 => Self::I,
            3 => Self::J,
            4 => Self::K,
            _ => panic!("quaternion unit {m} out of range 1..=4"),
        }
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sqr(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn im_norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn inverse(self) -> Self {
        self.conj() / self.norm_sqr()
    }

    pub fn max_abs_diff(self, other: Self) -> f64 {
        let d = self - other;
        d.w.abs().max(d.x.abs()).max(d.y.abs()).max(d.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Quaternion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for Quaternion {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Quaternion {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Neg for Quaternion {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Self;
    fn mul(self, q: Self) -> Self {
        let p = self;
        Self::new(
            p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
            p.w * q.x + p.x * q.w + p.y * q.z - p.z * q.y,
            p.w * q.y - p.x * q.z + p.y * q.w + p.z * q.x,
            p.w * q.z + p.x * q.y - p.y * q.x + p.z * q.w,
        )
    }
}

impl MulAssign for Quaternion {
    fn mul_assign(&mut self, q: Self) {
        *self = *self * q;
    }
}

impl Mul<f64> for Quaternion {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        q * self
    }
}

impl Div<f64> for Quaternion {
    type Output = Self;
    fn div(self, s: f64) -> Self {
        Self::new(self.w / s, self.x / s, self.y / s, self.z / s)
    }
}

impl std::iter::Sum for Quaternion {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl std::fmt::Display for Quaternion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.w, self.x, self.y, self.z)
    }
}

/// A value `re + im i` on the `i`-slice of the quaternions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexSlice {
    pub re: f64,
    pub im: f64,
}

impl ComplexSlice {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn to_quaternion(self) -> Quaternion {
        Quaternion::new(self.re, self.im, 0.0, 0.0)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }
}

impl From<ComplexSlice> for Quaternion {
    fn from(s: ComplexSlice) -> Self {
        s.to_quaternion()
    }
}

/// `sigma * xi * conj(sigma)` for a unit rotor `sigma`.
pub fn conj_by_unit(sigma: Quaternion, xi: Quaternion, tol: &Tolerances) -> Result<Quaternion> {
    let n = sigma.norm();
    if (n - 1.0).abs() > tol.unit_rotor {
        return Err(Error::NonUnitRotor(n));
    }
    Ok(sigma * xi * sigma.conj())
}

/// Returns a unit rotor `sigma` with `sigma xi conj(sigma) = xi_1 - |Im xi| i`
/// together with that slice value.
pub fn rotor_to_slice(xi: Quaternion, tol: &Tolerances) -> (Quaternion, ComplexSlice) {
    let im = xi.im_norm();
    let slice = ComplexSlice::new(xi.w, -im);
    if im == 0.0 {
        return (Quaternion::ONE, slice);
    }
    let perp2 = xi.y * xi.y + xi.z * xi.z;
    if perp2 < tol.degenerate_rotor * im * im {
        // Already on the i-slice: either on the lower half, or one half-turn about j away.
        let sigma = if xi.x <= 0.0 { Quaternion::ONE } else { Quaternion::J };
        return (sigma, slice);
    }
    // 1 - xi_2/|Im xi|, without cancellation when xi_2 is close to |Im xi|.
    let one_minus = if xi.x > 0.0 {
        perp2 / (im + xi.x) / im
    } else {
        (im - xi.x) / im
    };
    let y2 = (0.5 * one_minus).sqrt();
    let y3 = -xi.y / (2.0 * im) / y2;
    let y4 = -xi.z / (2.0 * im) / y2;
    (Quaternion::new(0.0, y2, y3, y4), slice)
}

pub type Mat2 = [[Complex64; 2]; 2];

/// The embedding `q -> [[x1 + i x4, -x2 - i x3], [x2 - i x3, x1 - i x4]]`.
pub fn tau_embed(q: Quaternion) -> Mat2 {
    [
        [Complex64::new(q.w, q.z), Complex64::new(-q.x, -q.y)],
        [Complex64::new(q.x, -q.y), Complex64::new(q.w, -q.z)],
    ]
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn mat2_det(a: &Mat2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_q(rng: &mut impl Rng, s: f64) -> Quaternion {
        Quaternion::new(
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
        )
    }

    fn rand_unit(rng: &mut impl Rng) -> Quaternion {
        loop {
            let q = rand_q(rng, 1.0);
            let n = q.norm();
            if n > 0.1 {
                return q / n;
            }
        }
    }

    #[test]
    fn unit_table() {
        let (i, j, k) = (Quaternion::I, Quaternion::J, Quaternion::K);
        assert_eq!(i * j, k);
        assert_eq!(j * i, -k);
        assert_eq!(j * k, i);
        assert_eq!(k * i, j);
        assert_eq!(i * i, Quaternion::real(-1.0));
        assert_eq!(i * j * k, Quaternion::real(-1.0));
        let q = Quaternion::new(0.3, -1.2, 4.0, 2.5);
        assert_eq!(Quaternion::ONE * q, q);
        assert_eq!(q * Quaternion::ONE, q);
        let a = Quaternion::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(a * a.conj(), Quaternion::real(2.0));
    }

    #[test]
    fn norm_is_multiplicative_and_conj_reverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = rand_q(&mut rng, 3.0);
            let q = rand_q(&mut rng, 3.0);
            let pq = p * q;
            assert!((pq.norm() - p.norm() * q.norm()).abs() <= 1e-14 * p.norm() * q.norm());
            assert!(pq.conj().max_abs_diff(q.conj() * p.conj()) < 1e-13);
            assert_eq!(p.conj().conj(), p);
        }
    }

    #[test]
    fn conj_by_unit_examples() {
        let tol = Tolerances::default();
        let xi = Quaternion::new(0.2, 1.0, -3.0, 0.5);
        assert_eq!(conj_by_unit(Quaternion::ONE, xi, &tol).unwrap(), xi);
        let s = (Quaternion::I - Quaternion::J) / 2f64.sqrt();
        let r = conj_by_unit(s, Quaternion::I, &tol).unwrap();
        assert!(r.max_abs_diff(-Quaternion::J) < 1e-15);
        assert!(matches!(
            conj_by_unit(Quaternion::real(1.1), xi, &tol),
            Err(Error::NonUnitRotor(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = rand_unit(&mut rng);
            let xi = rand_q(&mut rng, 2.0);
            let r = conj_by_unit(s, xi, &tol).unwrap();
            assert!((r.w - xi.w).abs() < 1e-14);
            assert!((r.im_norm() - xi.im_norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn rotor_examples() {
        let tol = Tolerances::default();
        let (s, sl) = rotor_to_slice(Quaternion::real(5.0), &tol);
        assert_eq!(s, Quaternion::ONE);
        assert_eq!(sl, ComplexSlice::new(5.0, 0.0));

        let (s, sl) = rotor_to_slice(Quaternion::new(1.0, 0.0, 1.0, 0.0), &tol);
        let h = 1.0 / 2f64.sqrt();
        assert!(s.max_abs_diff(Quaternion::new(0.0, h, -h, 0.0)) < 1e-15);
        assert_eq!(sl, ComplexSlice::new(1.0, -1.0));

        let (s, sl) = rotor_to_slice(Quaternion::new(1.0, -1.0, 0.0, 0.0), &tol);
        assert_eq!(s, Quaternion::ONE);
        assert_eq!(sl, ComplexSlice::new(1.0, -1.0));

        let (s, _) = rotor_to_slice(Quaternion::new(1.0, 2.0, 0.0, 0.0), &tol);
        assert_eq!(s, Quaternion::J);
    }

    #[test]
    fn rotor_reaches_lower_slice() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 0..10_000 {
            let mut xi = rand_q(&mut rng, 5.0);
            // Every third sample is nearly on the i-slice.
            if n % 3 == 0 {
                let e = 10f64.powi(-rng.gen_range(3..16));
                xi.y *= e;
                xi.z *= e;
            }
            let (s, sl) = rotor_to_slice(xi, &tol);
            let r = conj_by_unit(s, xi, &tol).unwrap();
            let target = Quaternion::new(xi.w, -xi.im_norm(), 0.0, 0.0);
            assert!(r.max_abs_diff(target) < 1e-10, "{xi:?} -> {r:?}");
            assert_eq!(sl.to_quaternion(), target);
        }
    }

    #[test]
    fn tau_is_a_homomorphism() {
        let one = tau_embed(Quaternion::ONE);
        assert_eq!(one[0][0], Complex64::new(1.0, 0.0));
        assert_eq!(one[0][1], Complex64::new(0.0, 0.0));
        assert_eq!(one[1][1], Complex64::new(1.0, 0.0));
        let ij = mat2_mul(&tau_embed(Quaternion::I), &tau_embed(Quaternion::J));
        assert_eq!(ij, tau_embed(Quaternion::I * Quaternion::J));
        assert_eq!(ij, tau_embed(Quaternion::K));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p = rand_q(&mut rng, 2.0);
            let q = rand_q(&mut rng, 2.0);
            let lhs = tau_embed(p * q);
            let rhs = mat2_mul(&tau_embed(p), &tau_embed(q));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((lhs[i][j] - rhs[i][j]).norm() < 1e-13);
                }
            }
            let det = mat2_det(&tau_embed(p));
            assert!((det.re - p.norm_sqr()).abs() < 1e-13 && det.im.abs() < 1e-13);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn quat() -> impl Strategy<Value = Quaternion> {
            prop::array::uniform4(-10.0f64..10.0).prop_map(Quaternion::from_array)
        }

        proptest! {
            #[test]
            fn associative(p in quat(), q in quat(), r in quat()) {
                let lhs = (p * q) * r;
                let rhs = p * (q * r);
                let scale = p.norm() * q.norm() * r.norm() + 1.0;
                prop_assert!(lhs.max_abs_diff(rhs) <= 1e-13 * scale);
            }

            #[test]
            fn distributive(p in quat(), q in quat(), r in quat()) {
                let lhs = p * (q + r);
                let rhs = p * q + p * r;
                let scale = p.norm() * (q.norm() + r.norm()) + 1.0;
                prop_assert!(lhs.max_abs_diff(rhs) <= 1e-13 * scale);
            }
        }
    }
}
