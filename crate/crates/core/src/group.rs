//! The quaternionic Heisenberg group: points, group law, dilations, the
//! homogeneous norm, the Siegel-domain diffeomorphism, left-invariant vector
//! fields as finite-difference operators, and left Taylor polynomials.
//!
//! Coordinates are ordered `(y_1, ..., y_{4n-4}, t_1, t_2, t_3)` whenever a
//! point is flattened; vector field `Y_j` for `j > 4n-4` is `d/dt_{j-4n+4}`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quat::Quaternion;

/// Quaternionic dimension `n >= 2` of the ambient space `H^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupDim {
    pub n: usize,
}

impl GroupDim {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn horiz(self) -> usize {
        4 * self.n - 4
    }

    pub const fn vert(self) -> usize {
        3
    }

    pub fn topdim(self) -> usize {
        4 * self.n - 1
    }

    /// Homogeneous dimension `Q = 4n + 2`.
    pub fn q(self) -> usize {
        4 * self.n + 2
    }

    pub fn q_f64(self) -> f64 {
        self.q() as f64
    }
}

const B: [[[i8; 4]; 4]; 3] = [
    [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
    [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]],
    [[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]],
];

/// The skew-symmetric structure matrix `b^alpha`, `alpha` in `1..=3`.
pub fn b_matrix(alpha: usize) -> Result<[[i8; 4]; 4]> {
    if !(1..=3).contains(&alpha) {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(B[alpha - 1])
}

/// `b^alpha_{kj}` with 1-based `alpha`, `k`, `j`.
#[inline]
pub(crate) fn b_entry(alpha: usize, k: usize, j: usize) -> f64 {
    B[alpha - 1][k - 1][j - 1] as f64
}

/// `B(y, y')`: the vertical part of the group law.
pub fn bilinear(y: &[f64], yp: &[f64]) -> [f64; 3] {
    debug_assert_eq!(y.len(), yp.len());
    let mut out = [0.0; 3];
    for (blk, blkp) in y.chunks_exact(4).zip(yp.chunks_exact(4)) {
        for (alpha, o) in out.iter_mut().enumerate() {
            let b = &B[alpha];
            let mut acc = 0.0;
            for k in 0..4 {
                for j in 0..4 {
                    if b[k][j] != 0 {
                        acc += b[k][j] as f64 * blk[k] * blkp[j];
                    }
                }
            }
            *o += 2.0 * acc;
        }
    }
    out
}

/// Integer version of [`bilinear`], used by exact tile arithmetic.
pub fn bilinear_int(y: &[i64], yp: &[i64]) -> [i64; 3] {
    let mut out = [0i64; 3];
    for (blk, blkp) in y.chunks_exact(4).zip(yp.chunks_exact(4)) {
        for (alpha, o) in out.iter_mut().enumerate() {
            let b = &B[alpha];
            let mut acc = 0;
            for k in 0..4 {
                for j in 0..4 {
                    acc += b[k][j] as i64 * blk[k] * blkp[j];
                }
            }
            *o += 2 * acc;
        }
    }
    out
}

/// A point `(t, y)` of the group, `t` in R^3 and `y` in R^{4n-4}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub t: [f64; 3],
    pub y: Vec<f64>,
}

impl GroupPoint {
    pub fn new(t: [f64; 3], y: Vec<f64>) -> Self {
        Self { t, y }
    }

    pub fn identity(dim: GroupDim) -> Self {
        Self { t: [0.0; 3], y: vec![0.0; dim.horiz()] }
    }

    pub fn dim(&self) -> GroupDim {
        GroupDim { n: self.y.len() / 4 + 1 }
    }

    /// Flattened coordinates `(y, t)`.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.y.clone();
        c.extend_from_slice(&self.t);
        c
    }

    pub fn from_coords(c: &[f64]) -> Self {
        let h = c.len() - 3;
        Self { t: [c[h], c[h + 1], c[h + 2]], y: c[..h].to_vec() }
    }

    /// `e_j` scaled by `s`, for vector field index `j` in `1..=4n-1`.
    pub fn basis(dim: GroupDim, j: usize, s: f64) -> Self {
        let mut g = Self::identity(dim);
        if j <= dim.horiz() {
            g.y[j - 1] = s;
        } else {
            g.t[j - dim.horiz() - 1] = s;
        }
        g
    }

    pub fn mul(&self, h: &GroupPoint) -> GroupPoint {
        let b = bilinear(&self.y, &h.y);
        GroupPoint {
            t: [self.t[0] + h.t[0] + b[0], self.t[1] + h.t[1] + b[1], self.t[2] + h.t[2] + b[2]],
            y: self.y.iter().zip(&h.y).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn try_mul(&self, h: &GroupPoint) -> Result<GroupPoint> {
        if self.y.len() != h.y.len() {
            return Err(Error::DimMismatch { expected: self.y.len(), got: h.y.len() });
        }
        Ok(self.mul(h))
    }

    pub fn inverse(&self) -> GroupPoint {
        GroupPoint { t: self.t.map(|v| -v), y: self.y.iter().map(|v| -v).collect() }
    }

    /// `delta_r(t, y) = (r^2 t, r y)`, without the positivity check.
    pub fn dilate_unchecked(&self, r: f64) -> GroupPoint {
        let r2 = r * r;
        GroupPoint { t: self.t.map(|v| r2 * v), y: self.y.iter().map(|v| r * v).collect() }
    }

    pub fn dilate(&self, r: f64) -> Result<GroupPoint> {
        if !(r > 0.0) {
            return Err(Error::BadScale(r));
        }
        Ok(self.dilate_unchecked(r))
    }

    pub fn y_norm_sqr(&self) -> f64 {
        self.y.iter().map(|v| v * v).sum()
    }

    pub fn t_norm_sqr(&self) -> f64 {
        self.t.iter().map(|v| v * v).sum()
    }

    /// `(|y|^4 + |t|^2)^{1/4}`.
    pub fn hom_norm(&self) -> f64 {
        let y2 = self.y_norm_sqr();
        (y2 * y2 + self.t_norm_sqr()).sqrt().sqrt()
    }

    pub fn max_abs_diff(&self, o: &GroupPoint) -> f64 {
        self.coords()
            .iter()
            .zip(o.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Horizontal block `l` (0-based) as a quaternion.
    pub fn y_quat(&self, l: usize) -> Quaternion {
        Quaternion::new(self.y[4 * l], self.y[4 * l + 1], self.y[4 * l + 2], self.y[4 * l + 3])
    }

    /// Uniform sample in the box `|y_i| < ys`, `|t_a| < ts`.
    pub fn random(dim: GroupDim, rng: &mut impl Rng, ys: f64, ts: f64) -> Self {
        Self {
            t: [rng.gen_range(-ts..ts), rng.gen_range(-ts..ts), rng.gen_range(-ts..ts)],
            y: (0..dim.horiz()).map(|_| rng.gen_range(-ys..ys)).collect(),
        }
    }
}

/// `d(g, h) = ||h^{-1} g||`.
pub fn dist(g: &GroupPoint, h: &GroupPoint) -> f64 {
    h.inverse().mul(g).hom_norm()
}

/// A point `(s, g)` of the flat model `R_+ x H^{n-1}` of the Siegel domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiegelPoint {
    pub s: f64,
    pub g: GroupPoint,
}

impl SiegelPoint {
    pub fn new(s: f64, g: GroupPoint) -> Self {
        Self { s, g }
    }
}

/// `(q_1, q') -> (Re q_1 - |q'|^2, Im q_1, q')`.
pub fn pi_map(q: &[Quaternion]) -> Result<SiegelPoint> {
    let q1 = q[0];
    let qp2: f64 = q[1..].iter().map(|v| v.norm_sqr()).sum();
    let s = q1.w - qp2;
    if !(s > 0.0) {
        return Err(Error::NotInDomain(s));
    }
    let y = q[1..].iter().flat_map(|v| v.to_array()).collect();
    Ok(SiegelPoint { s, g: GroupPoint::new([q1.x, q1.y, q1.z], y) })
}

/// `(s, t, y) -> (s + |y|^2 + t, y)` as `n` quaternions.
pub fn pi_inv(p: &SiegelPoint) -> Vec<Quaternion> {
    let g = &p.g;
    let mut q = Vec::with_capacity(g.y.len() / 4 + 1);
    q.push(Quaternion::new(p.s + g.y_norm_sqr(), g.t[0], g.t[1], g.t[2]));
    q.extend(g.y.chunks_exact(4).map(|c| Quaternion::new(c[0], c[1], c[2], c[3])));
    q
}

/// Exponents `(alpha_1, ..., alpha_{4n-1})` of `Y^I` or of the monomial `xi^I`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u16>);

impl MultiIndex {
    pub fn zero(dim: GroupDim) -> Self {
        Self(vec![0; dim.topdim()])
    }

    /// The index with a single 1 at vector field `j` (1-based).
    pub fn unit(dim: GroupDim, j: usize) -> Self {
        let mut v = vec![0; dim.topdim()];
        v[j - 1] = 1;
        Self(v)
    }

    fn horiz_len(&self) -> usize {
        self.0.len() - 3
    }

    /// Homogeneous degree: horizontal entries once, vertical entries twice.
    pub fn hom_degree(&self) -> usize {
        let h = self.horiz_len();
        self.0
            .iter()
            .enumerate()
            .map(|(i, &a)| if i < h { a as usize } else { 2 * a as usize })
            .sum()
    }

    /// Topological degree `|I|`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// The operator sequence of `Y_1^{a_1} ... Y_{4n-1}^{a_{4n-1}}`, outermost first.
    pub fn directions(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| std::iter::repeat_n(i + 1, a as usize))
            .collect()
    }

    /// `xi^I(g)`.
    pub fn monomial(&self, g: &GroupPoint) -> f64 {
        crate::poly::monomial_value(&self.0, &g.coords())
    }

    /// All indices with `d(I) <= max_degree`, ordered by degree then lexicographically.
    pub fn up_to_degree(dim: GroupDim, max_degree: usize) -> Vec<MultiIndex> {
        let m = dim.topdim();
        let h = dim.horiz();
        let mut out = Vec::new();
        let mut cur = vec![0u16; m];
        fn rec(i: usize, left: usize, h: usize, cur: &mut Vec<u16>, out: &mut Vec<MultiIndex>) {
            if i == cur.len() {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            let w = if i < h { 1 } else { 2 };
            let mut a = 0;
            while a * w <= left {
                cur[i] = a as u16;
                rec(i + 1, left - a * w, h, cur, out);
                a += 1;
            }
            cur[i] = 0;
        }
        rec(0, max_degree, h, &mut cur, &mut out);
        out.sort_by(|a, b| a.hom_degree().cmp(&b.hom_degree()).then_with(|| b.0.cmp(&a.0)));
        out
    }
}

/// Finite-difference steps: one for horizontal, one for vertical directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Steps {
    pub horizontal: f64,
    pub vertical: f64,
}

impl Steps {
    /// Same step in every direction.
    pub fn uniform(h: f64) -> Self {
        Self { horizontal: h, vertical: h }
    }

    /// `h` horizontally and `h^2` vertically, matching the dilation weights.
    pub fn homogeneous(h: f64) -> Self {
        Self { horizontal: h, vertical: h * h }
    }

    /// Steps adapted to a point at homogeneous distance `scale` from the origin.
    pub fn scaled(self, scale: f64) -> Self {
        Self { horizontal: self.horizontal * scale, vertical: self.vertical * scale * scale }
    }

    pub fn halved(self) -> Self {
        Self { horizontal: self.horizontal / 2.0, vertical: self.vertical / 2.0 }
    }

    fn for_direction(&self, dim: GroupDim, j: usize) -> f64 {
        if j <= dim.horiz() {
            self.horizontal
        } else {
            self.vertical
        }
    }

    fn check(&self, tol: &Tolerances) -> Result<()> {
        let m = self.horizontal.min(self.vertical);
        if !(m >= tol.min_fd_step) {
            return Err(Error::StepTooSmall(m));
        }
        Ok(())
    }
}

impl Default for Steps {
    fn default() -> Self {
        Self::uniform(1e-4)
    }
}

/// `Y_{d_1} Y_{d_2} ... Y_{d_m} f (g)` by nested central differences along
/// the group translations `g -> g * (s e_d)`. Repeated adjacent directions use
/// the three-point second difference.
pub fn apply_sequence<F>(dim: GroupDim, dirs: &[usize], f: &F, g: &GroupPoint, steps: &Steps) -> Result<Quaternion>
where
    F: Fn(&GroupPoint) -> Result<Quaternion> + ?Sized,
{
    let Some(&d) = dirs.first() else {
        return f(g);
    };
    if d == 0 || d > dim.topdim() {
        return Err(Error::BadIndex { index: d, max: dim.topdim() });
    }
    let h = steps.for_direction(dim, d);
    if dirs.len() >= 2 && dirs[1] == d {
        let rest = &dirs[2..];
        let plus = apply_sequence(dim, rest, f, &g.mul(&GroupPoint::basis(dim, d, h)), steps)?;
        let mid = apply_sequence(dim, rest, f, g, steps)?;
        let minus = apply_sequence(dim, rest, f, &g.mul(&GroupPoint::basis(dim, d, -h)), steps)?;
        return Ok((plus - mid * 2.0 + minus) / (h * h));
    }
    let rest = &dirs[1..];
    let plus = apply_sequence(dim, rest, f, &g.mul(&GroupPoint::basis(dim, d, h)), steps)?;
    let minus = apply_sequence(dim, rest, f, &g.mul(&GroupPoint::basis(dim, d, -h)), steps)?;
    Ok((plus - minus) / (2.0 * h))
}

/// `Y_j f(g)` by central differences.
pub fn apply_y<F>(dim: GroupDim, j: usize, f: &F, g: &GroupPoint, steps: &Steps, tol: &Tolerances) -> Result<Quaternion>
where
    F: Fn(&GroupPoint) -> Result<Quaternion> + ?Sized,
{
    steps.check(tol)?;
    apply_sequence(dim, &[j], f, g, steps)
}

/// A derivative value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Quaternion,
    pub error: f64,
}

/// `Y_j f(g)` refined by Richardson extrapolation over steps `h` and `h/2`.
pub fn apply_y_richardson<F>(
    dim: GroupDim,
    j: usize,
    f: &F,
    g: &GroupPoint,
    steps: &Steps,
    tol: &Tolerances,
) -> Result<Estimate>
where
    F: Fn(&GroupPoint) -> Result<Quaternion> + ?Sized,
{
    let coarse = apply_y(dim, j, f, g, steps, tol)?;
    let fine = apply_y(dim, j, f, g, &steps.halved(), tol)?;
    let value = (fine * 4.0 - coarse) / 3.0;
    Ok(Estimate { value, error: (fine - coarse).norm() / 3.0 })
}

/// `Y^I f(g)` in the written order `Y_1^{a_1} ... Y_{4n-1}^{a_{4n-1}}`.
pub fn apply_yi<F>(
    dim: GroupDim,
    index: &MultiIndex,
    f: &F,
    g: &GroupPoint,
    steps: &Steps,
    tol: &Tolerances,
) -> Result<Quaternion>
where
    F: Fn(&GroupPoint) -> Result<Quaternion> + ?Sized,
{
    let d = index.hom_degree();
    if d > tol.max_fd_order {
        return Err(Error::OrderTooHigh { order: d, limit: tol.max_fd_order });
    }
    steps.check(tol)?;
    apply_sequence(dim, &index.directions(), f, g, steps)
}

/// `Delta_H f(g) = sum_{j <= 4n-4} Y_j^2 f(g)`.
pub fn sub_laplacian<F>(dim: GroupDim, f: &F, g: &GroupPoint, steps: &Steps, tol: &Tolerances) -> Result<Quaternion>
where
    F: Fn(&GroupPoint) -> Result<Quaternion> + ?Sized,
{
    steps.check(tol)?;
    let mut acc = Quaternion::ZERO;
    for j in 1..=dim.horiz() {
        acc += apply_sequence(dim, &[j, j], f, g, steps)?;
    }
    Ok(acc)
}

/// Symbolic `Y_j P` for a real polynomial in the flattened coordinates.
pub fn y_field_poly(dim: GroupDim, j: usize, p: &Poly) -> Poly {
    let h = dim.horiz();
    let m = dim.topdim();
    if j > h {
        return p.derivative(j - 1);
    }
    let l = (j - 1) / 4;
    let jj = (j - 1) % 4 + 1;
    let mut out = p.derivative(j - 1);
    for alpha in 1..=3 {
        let dt = p.derivative(h + alpha - 1);
        if dt.is_empty() {
            continue;
        }
        for k in 1..=4 {
            let b = b_entry(alpha, k, jj);
            if b != 0.0 {
                let yk = Poly::var(m, 4 * l + k - 1, 2.0 * b);
                out = &out + &dt.mul_real(&yk);
            }
        }
    }
    out
}

/// Symbolic `Y^I P`, applying the innermost field first.
pub fn yi_poly(dim: GroupDim, index: &MultiIndex, p: &Poly) -> Poly {
    index
        .directions()
        .iter()
        .rev()
        .fold(p.clone(), |acc, &j| y_field_poly(dim, j, &acc))
}

/// A quaternion-valued polynomial `sum a_I xi^I` on the group.
#[derive(Debug, Clone, PartialEq)]
pub struct HomPolynomial {
    pub dim: GroupDim,
    pub coeffs: BTreeMap<MultiIndex, Quaternion>,
}

impl HomPolynomial {
    /// Largest `d(I)` over non-zero coefficients.
    pub fn homdeg(&self) -> usize {
        self.coeffs
            .iter()
            .filter(|(_, c)| **c != Quaternion::ZERO)
            .map(|(i, _)| i.hom_degree())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, g: &GroupPoint) -> Quaternion {
        let c = g.coords();
        self.coeffs
            .iter()
            .map(|(i, &a)| a * crate::poly::monomial_value(&i.0, &c))
            .sum()
    }
}

/// Left Taylor polynomial of `f` at `g` of homogeneous degree `k`: the unique
/// `P` with `Y^I P(0) = Y^I f(g)` for every `d(I) <= k`.
pub fn taylor_left<F>(
    dim: GroupDim,
    f: &F,
    g: &GroupPoint,
    k: usize,
    steps: &Steps,
    tol: &Tolerances,
) -> Result<HomPolynomial>
where
    F: Fn(&GroupPoint) -> Result<Quaternion> + ?Sized,
{
    const MAX_TAYLOR_DEGREE: usize = 2;
    if k > MAX_TAYLOR_DEGREE {
        return Err(Error::OrderTooHigh { order: k, limit: MAX_TAYLOR_DEGREE });
    }
    let basis = MultiIndex::up_to_degree(dim, k);
    let m = basis.len();
    let nv = dim.topdim();
    let origin = vec![0.0; nv];
    let mut mat = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (r, jidx) in basis.iter().enumerate() {
        for (c, iidx) in basis.iter().enumerate() {
            let mono = Poly::monomial(iidx.0.clone(), 1.0);
            mat[(r, c)] = yi_poly(dim, jidx, &mono).eval(&origin);
        }
    }
    let mut rhs = nalgebra::DMatrix::<f64>::zeros(m, 4);
    for (r, jidx) in basis.iter().enumerate() {
        let v = apply_yi(dim, jidx, f, g, steps, tol)?;
        for (c, x) in v.to_array().into_iter().enumerate() {
            rhs[(r, c)] = x;
        }
    }
    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::EvalFailure("singular Taylor system".into()))?;
    let coeffs = basis
        .into_iter()
        .enumerate()
        .map(|(r, idx)| (idx, Quaternion::new(sol[(r, 0)], sol[(r, 1)], sol[(r, 2)], sol[(r, 3)])))
        .collect();
    Ok(HomPolynomial { dim, coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::stream;

    fn d2() -> GroupDim {
        GroupDim::new(2).unwrap()
    }

    #[test]
    fn dims() {
        let d = GroupDim::new(3).unwrap();
        assert_eq!((d.horiz(), d.topdim(), d.q()), (8, 11, 14));
        assert_eq!(d.q(), d.horiz() + 2 * d.vert());
        assert!(GroupDim::new(1).is_err());
    }

    #[test]
    fn b_matrices() {
        let b1 = b_matrix(1).unwrap();
        assert_eq!(b1[0][1], 1);
        assert_eq!(b1[1][0], -1);
        assert_eq!(b_matrix(2).unwrap()[0][2], 1);
        for a in 1..=3 {
            let b = b_matrix(a).unwrap();
            for k in 0..4 {
                for j in 0..4 {
                    assert_eq!(b[k][j] + b[j][k], 0);
                }
            }
        }
        assert_eq!(b_matrix(0), Err(Error::BadAlpha(0)));
        assert_eq!(b_matrix(4), Err(Error::BadAlpha(4)));
    }

    #[test]
    fn group_law_examples() {
        let d = d2();
        let e1 = GroupPoint::basis(d, 1, 1.0);
        let e2 = GroupPoint::basis(d, 2, 1.0);
        let p = e1.mul(&e2);
        assert_eq!(p.t, [2.0, 0.0, 0.0]);
        assert_eq!(p.y, vec![1.0, 1.0, 0.0, 0.0]);
        let mut rng = stream(0, "group-law-test");
        let g = GroupPoint::random(d, &mut rng, 2.0, 2.0);
        assert!(g.mul(&g.inverse()).max_abs_diff(&GroupPoint::identity(d)) < 1e-15);
        assert!(matches!(
            g.try_mul(&GroupPoint::identity(GroupDim::new(3).unwrap())),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn dilation_and_norm() {
        let d = d2();
        let mut rng = stream(1, "dilation-test");
        for _ in 0..1000 {
            let g = GroupPoint::random(d, &mut rng, 3.0, 3.0);
            let h = GroupPoint::random(d, &mut rng, 3.0, 3.0);
            let r = rng.gen_range(0.1..5.0);
            let s = rng.gen_range(0.1..5.0);
            assert_eq!(g.dilate(1.0).unwrap(), g);
            let lhs = g.dilate(r).unwrap().dilate(s).unwrap();
            assert!(lhs.max_abs_diff(&g.dilate(r * s).unwrap()) < 1e-12 * (1.0 + lhs.hom_norm().powi(2)));
            let a = g.mul(&h).dilate(r).unwrap();
            let b = g.dilate(r).unwrap().mul(&h.dilate(r).unwrap());
            assert!(a.max_abs_diff(&b) < 1e-11 * (1.0 + r * r) * 10.0);
            assert!((g.dilate(r).unwrap().hom_norm() / g.hom_norm() - r).abs() < 1e-13 * r);
        }
        assert_eq!(GroupPoint::identity(d).dilate(0.0), Err(Error::BadScale(0.0)));
        let t_only = GroupPoint::new([3.0, 0.0, -4.0], vec![0.0; 4]);
        assert!((t_only.hom_norm() - 5f64.sqrt()).abs() < 1e-15);
        let y_only = GroupPoint::new([0.0; 3], vec![1.0, 2.0, 2.0, 0.0]);
        assert!((y_only.hom_norm() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn siegel_map_round_trip() {
        let d = d2();
        let q = pi_inv(&SiegelPoint::new(1.0, GroupPoint::identity(d)));
        assert_eq!(q, vec![Quaternion::ONE, Quaternion::ZERO]);
        let p = SiegelPoint::new(1.0, GroupPoint::basis(d, 1, 1.0));
        let q = pi_inv(&p);
        assert_eq!(q[0], Quaternion::real(2.0));
        assert_eq!(q[1], Quaternion::ONE);
        let mut rng = stream(2, "pi-test");
        for _ in 0..10_000 {
            let p = SiegelPoint::new(rng.gen_range(1e-3..5.0), GroupPoint::random(d, &mut rng, 3.0, 3.0));
            let back = pi_map(&pi_inv(&p)).unwrap();
            assert!((back.s - p.s).abs() < 1e-13 * (1.0 + p.g.y_norm_sqr()));
            assert!(back.g.max_abs_diff(&p.g) == 0.0);
        }
        let bad = vec![Quaternion::real(0.5), Quaternion::ONE];
        assert!(matches!(pi_map(&bad), Err(Error::NotInDomain(_))));
    }

    #[test]
    fn multi_index_degrees() {
        let d = d2();
        let mut i = MultiIndex::zero(d);
        i.0[0] = 2;
        i.0[5] = 1;
        assert_eq!(i.hom_degree(), 4);
        assert_eq!(i.order(), 3);
        assert_eq!(i.directions(), vec![1, 1, 6]);
        let all = MultiIndex::up_to_degree(d, 2);
        assert!(all.iter().all(|i| i.hom_degree() >= i.order()));
        assert!(all
            .iter()
            .filter(|i| i.hom_degree() == i.order())
            .all(|i| i.0[d.horiz()..].iter().all(|&a| a == 0)));
    }

    fn poly_fn(p: Poly) -> impl Fn(&GroupPoint) -> Result<Quaternion> {
        move |g: &GroupPoint| Ok(Quaternion::real(p.eval(&g.coords())))
    }

    #[test]
    fn vector_field_examples() {
        let d = d2();
        let tol = Tolerances::default();
        let steps = Steps::default();
        let m = d.topdim();
        let y1 = poly_fn(Poly::var(m, 0, 1.0));
        let t1 = poly_fn(Poly::var(m, 4, 1.0));
        let mut rng = stream(3, "vf-test");
        for _ in 0..20 {
            let g = GroupPoint::random(d, &mut rng, 1.0, 1.0);
            let v = apply_y(d, 1, &y1, &g, &steps, &tol).unwrap();
            assert!((v.w - 1.0).abs() < 1e-10);
            let c12 = apply_sequence(d, &[1, 2], &t1, &g, &steps).unwrap()
                - apply_sequence(d, &[2, 1], &t1, &g, &steps).unwrap();
            assert!((c12.w - 4.0).abs() < 1e-7, "{c12:?}");
            let lap = sub_laplacian(d, &t1, &g, &steps, &tol).unwrap();
            assert!(lap.w.abs() < 1e-6);
        }
        let mut sq = Poly::zero(m);
        for i in 0..4 {
            let mut e = vec![0; m];
            e[i] = 2;
            sq.add_term(e, 1.0);
        }
        let ysq = poly_fn(sq);
        let g = GroupPoint::random(d, &mut rng, 1.0, 1.0);
        let lap = sub_laplacian(d, &ysq, &g, &steps, &tol).unwrap();
        assert!((lap.w - 8.0).abs() < 1e-6);
        assert_eq!(apply_yi(d, &MultiIndex::zero(d), &ysq, &g, &steps, &tol).unwrap(), ysq(&g).unwrap());
        assert!(matches!(
            apply_y(d, 1, &y1, &g, &Steps::uniform(1e-12), &tol),
            Err(Error::StepTooSmall(_))
        ));
        let mut high = MultiIndex::zero(d);
        high.0[4] = 3;
        assert!(matches!(apply_yi(d, &high, &y1, &g, &steps, &tol), Err(Error::OrderTooHigh { .. })));
        assert!(matches!(apply_y(d, 8, &y1, &g, &steps, &tol), Err(Error::BadIndex { .. })));
    }

    #[test]
    fn vector_fields_are_left_invariant() {
        let d = d2();
        let tol = Tolerances::default();
        let steps = Steps::uniform(1e-3);
        let m = d.topdim();
        // A cubic mixing t and y.
        let mut p = Poly::zero(m);
        p.add_term(vec![1, 0, 1, 0, 1, 0, 0], 1.0);
        p.add_term(vec![0, 2, 0, 0, 0, 0, 1], -0.5);
        p.add_term(vec![0, 0, 0, 1, 0, 1, 0], 2.0);
        let f = poly_fn(p.clone());
        let mut rng = stream(4, "left-inv-test");
        for _ in 0..50 {
            let h = GroupPoint::random(d, &mut rng, 1.0, 1.0);
            let g = GroupPoint::random(d, &mut rng, 1.0, 1.0);
            let hh = h.clone();
            let fp = p.clone();
            let shifted = move |x: &GroupPoint| Ok(Quaternion::real(fp.eval(&hh.mul(x).coords())));
            for j in 1..=d.topdim() {
                let lhs = apply_y(d, j, &shifted, &g, &steps, &tol).unwrap();
                let rhs = apply_y(d, j, &f, &h.mul(&g), &steps, &tol).unwrap();
                assert!(lhs.max_abs_diff(rhs) < 1e-8, "j={j}: {lhs:?} vs {rhs:?}");
                // Symbolic field agrees with the finite difference.
                let sym = y_field_poly(d, j, &p).eval(&h.mul(&g).coords());
                assert!((sym - rhs.w).abs() < 1e-5 * (1.0 + sym.abs()));
            }
        }
    }

    #[test]
    fn richardson_improves_first_derivative() {
        let d = d2();
        let tol = Tolerances::default();
        let f = |g: &GroupPoint| Ok(Quaternion::real((g.y[0] + 0.3 * g.t[1]).sin()));
        let g = GroupPoint::new([0.1, 0.2, 0.3], vec![0.4, -0.2, 0.1, 0.5]);
        let exact = apply_y(d, 3, &f, &g, &Steps::uniform(1e-5), &tol).unwrap();
        let plain = apply_y(d, 3, &f, &g, &Steps::uniform(0.05), &tol).unwrap();
        let rich = apply_y_richardson(d, 3, &f, &g, &Steps::uniform(0.05), &tol).unwrap();
        assert!(rich.value.max_abs_diff(exact) < plain.max_abs_diff(exact) / 10.0);
        assert!(rich.error > 0.0);
    }

    #[test]
    fn taylor_polynomial_examples() {
        let d = d2();
        let tol = Tolerances::default();
        let steps = Steps::uniform(1e-3);
        let g = GroupPoint::new([0.3, -0.2, 0.1], vec![0.5, 0.1, -0.4, 0.2]);
        let c = |_: &GroupPoint| Ok(Quaternion::new(1.0, 2.0, 3.0, 4.0));
        for k in 0..=2 {
            let p = taylor_left(d, &c, &g, k, &steps, &tol).unwrap();
            assert!(p.eval(&GroupPoint::new([0.7, 0.1, 0.2], vec![1.0; 4])).max_abs_diff(Quaternion::new(1.0, 2.0, 3.0, 4.0)) < 1e-9);
            assert_eq!(p.homdeg(), 0);
        }
        let y1 = |g: &GroupPoint| Ok(Quaternion::real(g.y[0]));
        let p = taylor_left(d, &y1, &GroupPoint::identity(d), 1, &steps, &tol).unwrap();
        let gp = GroupPoint::new([0.3, 0.5, -0.1], vec![0.25, -1.0, 2.0, 0.5]);
        assert!((p.eval(&gp).w - 0.25).abs() < 1e-9);
        assert!(matches!(
            taylor_left(d, &y1, &gp, 3, &steps, &tol),
            Err(Error::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn monomials_are_homogeneous() {
        let d = d2();
        let mut rng = stream(5, "mono-test");
        for idx in MultiIndex::up_to_degree(d, 4) {
            let g = GroupPoint::random(d, &mut rng, 1.0, 1.0);
            let r: f64 = rng.gen_range(0.2..3.0);
            let lhs = idx.monomial(&g.dilate(r).unwrap());
            let rhs = r.powi(idx.hom_degree() as i32) * idx.monomial(&g);
            assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()));
        }
    }
}
