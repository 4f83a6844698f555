//! The Cauchy–Szegő kernel of the quaternionic Siegel upper half space.
//!
//! `s(sigma) = c * d^{2(n-1)}/dx_1^{2(n-1)} (conj(sigma) / |sigma|^4)` is
//! evaluated in closed form on the complex slice `x_1 + x_2 i` and carried
//! to a general quaternion by a rotor. [`s_oracle`] differentiates the
//! defining expression symbolically and is used as ground truth in tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::group::{self, GroupDim, GroupPoint, MultiIndex, SiegelPoint, Steps};
use crate::poly::QPoly;
use crate::quat::{rotor_to_slice, ComplexSlice, Quaternion};
use crate::sampling::{stream, Halton};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelContext {
    pub dim: GroupDim,
    /// Normalization constant multiplying the kernel.
    pub c: f64,
    pub tol: Tolerances,
}

impl KernelContext {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel constant must be finite and non-zero, got {c}")));
        }
        Ok(Self { dim: GroupDim::new(n)?, c, tol: Tolerances::default() })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.dim.n
    }

    fn prefactor(&self) -> f64 {
        self.c * factorial(2 * self.n() - 2)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `s(r e^{i theta}) = c (2n-2)! e^{i(2n-3)theta} r^{-(2n+1)} sum_{k=0}^{2n-2} (k+1) e^{-2k i theta}`.
pub fn s_slice(ctx: &KernelContext, z: ComplexSlice) -> Result<ComplexSlice> {
    let z = z.to_complex();
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::ZeroArgument);
    }
    let n = ctx.n();
    let e = z / r;
    let w = e.conj() * e.conj();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut wk = Complex64::new(1.0, 0.0);
    for k in 0..=(2 * n - 2) {
        sum += wk * (k as f64 + 1.0);
        wk *= w;
    }
    let v = e.powi(2 * n as i32 - 3) * sum * (ctx.prefactor() * r.powi(-(2 * n as i32 + 1)));
    Ok(ComplexSlice::from_complex(v))
}

/// Two-sum series for `s(x_1 + x_2 i)`, valid for `x_1 > 0` and `x_2 >= 0`.
/// Kept as an independent evaluation path for the closed form.
pub fn s_slice_series(ctx: &KernelContext, a: ComplexSlice) -> Result<ComplexSlice> {
    if !(a.re > 0.0 && a.im >= 0.0) {
        return Err(Error::InvalidArgument("series form needs x1 > 0 and x2 >= 0".into()));
    }
    let n = ctx.n() as i32;
    let alpha = a.to_complex();
    let z = alpha;
    let zb = z.conj();
    let pre = ctx.prefactor();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..=(2 * n - 2) {
        let w = ((2 * n - k - 1) * (k + 1)) as f64;
        acc += alpha.conj() * w / (z.powi(2 * n - k) * zb.powi(k + 2));
    }
    for k in 0..=(2 * n - 3) {
        let w = ((2 * n - k - 2) * (k + 1)) as f64;
        acc -= Complex64::new(w, 0.0) / (z.powi(2 * n - k - 1) * zb.powi(k + 2));
    }
    Ok(ComplexSlice::from_complex(acc * pre))
}

/// `s(xi) = conj(sigma) s(xi_1 - |Im xi| i) sigma` with the rotor from [`rotor_to_slice`].
pub fn s_quat(ctx: &KernelContext, xi: Quaternion) -> Result<Quaternion> {
    if xi == Quaternion::ZERO {
        return Err(Error::ZeroArgument);
    }
    let (sigma, slice) = rotor_to_slice(xi, &ctx.tol);
    let v = s_slice(ctx, slice)?.to_quaternion();
    Ok(sigma.conj() * v * sigma)
}

/// `P / |sigma|^{2m}` with `P` a quaternion polynomial in `(x_1, .., x_4)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalQForm {
    pub numerator: QPoly,
    pub denom_power: u32,
}

impl RationalQForm {
    /// `conj(sigma) / |sigma|^4`.
    pub fn cauchy_fueter_seed() -> Self {
        let mut p = QPoly::zero(4);
        for m in 0..4 {
            let unit = Quaternion::unit(m + 1);
            p.add_term(unit_exp(m), if m == 0 { unit } else { -unit });
        }
        Self { numerator: p, denom_power: 2 }
    }

    /// `d/dx_1 (P / S^m) = (P_{x_1} S - 2 m x_1 P) / S^{m+1}` with `S = |sigma|^2`.
    pub fn d_x1(&self) -> Self {
        let s = (0..4).fold(crate::poly::Poly::<f64>::zero(4), |acc, i| {
            let mut e = vec![0; 4];
            e[i] = 2;
            &acc + &crate::poly::Poly::monomial(e, 1.0)
        });
        let x1 = crate::poly::Poly::<f64>::var(4, 0, 2.0 * self.denom_power as f64);
        let num = &self.numerator.derivative(0).mul_real(&s) - &self.numerator.mul_real(&x1);
        Self { numerator: num, denom_power: self.denom_power + 1 }
    }

    pub fn eval(&self, xi: Quaternion) -> Quaternion {
        let x = xi.to_array();
        self.numerator.eval(&x) / xi.norm_sqr().powi(self.denom_power as i32)
    }
}

fn unit_exp(m: usize) -> Vec<u16> {
    let mut e = vec![0; 4];
    e[m] = 1;
    e
}

/// The symbolic form of `s / c` after the `2(n-1)` derivatives.
pub fn oracle_form(n: usize) -> RationalQForm {
    (0..2 * (n - 1)).fold(RationalQForm::cauchy_fueter_seed(), |f, _| f.d_x1())
}

/// Ground-truth `s(xi)` by symbolic differentiation.
pub fn s_oracle(ctx: &KernelContext, xi: Quaternion) -> Result<Quaternion> {
    if xi == Quaternion::ZERO {
        return Err(Error::ZeroArgument);
    }
    Ok(oracle_form(ctx.n()).eval(xi) * ctx.c)
}

/// The quaternion argument `q_1 + conj(p_1) - 2 sum conj(p_k) q_k` of `s`
/// for `K((t, g), g')`.
pub fn kernel_argument(p: &SiegelPoint, gp: &GroupPoint) -> Quaternion {
    let g = &p.g;
    let x2 = g.y_norm_sqr();
    let q1 = Quaternion::new(p.s + x2, g.t[0], g.t[1], g.t[2]);
    let p1 = Quaternion::new(gp.y_norm_sqr(), gp.t[0], gp.t[1], gp.t[2]);
    let mut sigma = q1 + p1.conj();
    for l in 0..g.y.len() / 4 {
        sigma -= gp.y_quat(l).conj() * g.y_quat(l) * 2.0;
    }
    sigma
}

/// `K((t, g), g')` on the flat model.
pub fn kernel_upper(ctx: &KernelContext, p: &SiegelPoint, gp: &GroupPoint) -> Result<Quaternion> {
    if p.g.y.len() != gp.y.len() {
        return Err(Error::DimMismatch { expected: p.g.y.len(), got: gp.y.len() });
    }
    if p.s < 0.0 {
        return Err(Error::NotInDomain(p.s));
    }
    if p.s == 0.0 {
        let d = group::dist(&p.g, gp);
        if d < ctx.tol.diagonal {
            return Err(Error::DiagonalSingularity(d));
        }
    }
    s_quat(ctx, kernel_argument(p, gp))
}

/// `K(g) = s(|y|^2 + t)`; the boundary kernel is `K(g, g') = K(g'^{-1} g)`.
pub fn kernel_boundary(ctx: &KernelContext, g: &GroupPoint) -> Result<Quaternion> {
    s_quat(ctx, Quaternion::new(g.y_norm_sqr(), g.t[0], g.t[1], g.t[2]))
}

pub fn kernel_boundary_pair(ctx: &KernelContext, g: &GroupPoint, gh: &GroupPoint) -> Result<Quaternion> {
    let h = gh.inverse().mul(g);
    let d = h.hom_norm();
    if d < ctx.tol.diagonal {
        return Err(Error::DiagonalSingularity(d));
    }
    kernel_boundary(ctx, &h)
}

/// Normalizes a non-zero point onto the unit sphere `||g|| = 1`.
pub fn project_to_sphere(g: &GroupPoint, radius: f64) -> GroupPoint {
    g.dilate_unchecked(radius / g.hom_norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMin {
    pub point: GroupPoint,
    pub value: f64,
    /// Disagreement between the closed form and the oracle at the minimizer.
    pub noise: f64,
    pub samples: usize,
}

/// Minimum of `|K(g)|` over `||g|| = radius`: quasi-random search followed by
/// coordinate descent with step halving.
pub fn min_abs_on_sphere(ctx: &KernelContext, samples: usize, radius: f64, seed: u64) -> Result<SphereMin> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let dim = ctx.dim;
    let m = dim.topdim();
    let mut halton = Halton::new(m, &mut stream(seed, "sphere-min"));
    let eval = |g: &GroupPoint| kernel_boundary(ctx, g).map(|k| k.norm());
    let mut best: Option<(GroupPoint, f64)> = None;
    for _ in 0..samples {
        let u = halton.next_point();
        let c: Vec<f64> = u.iter().map(|v| 2.0 * v - 1.0).collect();
        let g = GroupPoint::from_coords(&c);
        if g.hom_norm() < 1e-6 {
            continue;
        }
        let g = project_to_sphere(&g, radius);
        let v = eval(&g)?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((g, v));
        }
    }
    let (mut g, mut v) = best.ok_or_else(|| Error::EvalFailure("no sphere samples".into()))?;
    let mut step = 0.1;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..m {
            for sgn in [1.0, -1.0] {
                let mut c = g.coords();
                let w = if i < dim.horiz() { radius } else { radius * radius };
                c[i] += sgn * step * w;
                let cand = GroupPoint::from_coords(&c);
                if cand.hom_norm() == 0.0 {
                    continue;
                }
                let cand = project_to_sphere(&cand, radius);
                let cv = eval(&cand)?;
                if cv < v {
                    g = cand;
                    v = cv;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    let arg = Quaternion::new(g.y_norm_sqr(), g.t[0], g.t[1], g.t[2]);
    let noise = (s_quat(ctx, arg)? - s_oracle(ctx, arg)?).norm() + v * f64::EPSILON * 16.0;
    Ok(SphereMin { point: g, value: v, noise, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub per_ray: Vec<f64>,
    pub radii: Vec<f64>,
    /// Fitted `C` in `|Y^I K| ~ C R^{slope}`, worst ray.
    pub constant: f64,
}

/// Least-squares slope of `log y` against `log x`, with intercept.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, (my - slope * mx).exp())
}

/// Fixed, generic unit-sphere directions used for ray sampling.
pub fn ray_directions(dim: GroupDim, count: usize, seed: u64) -> Vec<GroupPoint> {
    use rand::Rng;
    let mut rng = stream(seed, "decay-rays");
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..dim.topdim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            project_to_sphere(&GroupPoint::from_coords(&c), 1.0)
        })
        .collect()
}

/// Log-log slope of `|Y^I K((1,0), g)|` along rays `g = delta_R(omega)`.
/// Finite-difference steps scale with `R` so the relative accuracy is the
/// same at every radius.
pub fn decay_exponent(
    ctx: &KernelContext,
    index: &MultiIndex,
    radii: &[f64],
    rays: &[GroupPoint],
    steps: Steps,
) -> Result<DecayFit> {
    const MAX_DECAY_ORDER: usize = 2;
    let d = index.hom_degree();
    if d > MAX_DECAY_ORDER {
        return Err(Error::OrderTooHigh { order: d, limit: MAX_DECAY_ORDER });
    }
    let base = SiegelPoint::new(1.0, GroupPoint::identity(ctx.dim));
    let f = |g: &GroupPoint| kernel_upper(ctx, &base, g);
    let mut per_ray = Vec::with_capacity(rays.len());
    let mut constant: f64 = 0.0;
    for omega in rays {
        let mut vals = Vec::with_capacity(radii.len());
        for &r in radii {
            let g = omega.dilate(r)?;
            let v = group::apply_yi(ctx.dim, index, &f, &g, &steps.scaled(r), &ctx.tol)?;
            vals.push(v.norm());
        }
        let (slope, c) = loglog_fit(radii, &vals);
        per_ray.push(slope);
        constant = constant.max(c);
    }
    let slope = per_ray.iter().sum::<f64>() / per_ray.len() as f64;
    Ok(DecayFit { slope, per_ray, radii: radii.to_vec(), constant })
}

/// `F(s, g)` with the derivative operators of the flat model acting on `(s, g)`.
fn d_s<F>(f: &F, p: &SiegelPoint, h: f64) -> Result<Quaternion>
where
    F: Fn(&SiegelPoint) -> Result<Quaternion>,
{
    let up = f(&SiegelPoint::new(p.s + h, p.g.clone()))?;
    let dn = f(&SiegelPoint::new(p.s - h, p.g.clone()))?;
    Ok((up - dn) / (2.0 * h))
}

fn y_at<F>(dim: GroupDim, j: usize, f: &F, p: &SiegelPoint, h: f64, tol: &Tolerances) -> Result<Quaternion>
where
    F: Fn(&SiegelPoint) -> Result<Quaternion>,
{
    let s = p.s;
    let fg = |g: &GroupPoint| f(&SiegelPoint::new(s, g.clone()));
    group::apply_y(dim, j, &fg, &p.g, &Steps::uniform(h), tol)
}

/// Largest `|Qbar_m F|`, `m = 0..n-1`, at `p` for a function on the flat model:
/// `Qbar_0 = d_s + i d_{t_1} + j d_{t_2} + k d_{t_3}` and
/// `Qbar_{l+1} = Y_{4l+1} + i Y_{4l+2} + j Y_{4l+3} + k Y_{4l+4}`.
pub fn cauchy_fueter_operator<F>(dim: GroupDim, f: &F, p: &SiegelPoint, h: f64, tol: &Tolerances) -> Result<f64>
where
    F: Fn(&SiegelPoint) -> Result<Quaternion>,
{
    if !(p.s > 0.0) {
        return Err(Error::NotInDomain(p.s));
    }
    if h < tol.min_fd_step {
        return Err(Error::StepTooSmall(h));
    }
    let hz = dim.horiz();
    let mut q0 = d_s(f, p, h)?;
    for a in 1..=3 {
        q0 += Quaternion::unit(a + 1) * y_at(dim, hz + a, f, p, h, tol)?;
    }
    let mut worst = q0.norm();
    for l in 0..dim.n - 1 {
        let mut ql = Quaternion::ZERO;
        for m in 1..=4 {
            ql += Quaternion::unit(m) * y_at(dim, 4 * l + m, f, p, h, tol)?;
        }
        worst = worst.max(ql.norm());
    }
    Ok(worst)
}

/// Cauchy–Fueter residual of `(t, g) -> K((t, g), g')`, relative to `|K|`.
pub fn cauchy_fueter_residual(ctx: &KernelContext, p: &SiegelPoint, gp: &GroupPoint, h: f64) -> Result<f64> {
    let f = |q: &SiegelPoint| kernel_upper(ctx, q, gp);
    let k = f(p)?.norm();
    Ok(cauchy_fueter_operator(ctx.dim, &f, p, h, &ctx.tol)? / k)
}

/// `L F = Delta_H F / (8(n-1)) - d_s F` at `p`.
pub fn heat_operator<F>(dim: GroupDim, f: &F, p: &SiegelPoint, h: f64, tol: &Tolerances) -> Result<Quaternion>
where
    F: Fn(&SiegelPoint) -> Result<Quaternion>,
{
    if !(p.s > 0.0) {
        return Err(Error::NotInDomain(p.s));
    }
    let s = p.s;
    let fg = |g: &GroupPoint| f(&SiegelPoint::new(s, g.clone()));
    let lap = group::sub_laplacian(dim, &fg, &p.g, &Steps::uniform(h), tol)?;
    Ok(lap / (8.0 * (dim.n as f64 - 1.0)) - d_s(f, p, h)?)
}

/// Heat residual of `(t, g) -> K((t, g), g')`, relative to `|K|`.
pub fn heat_residual(ctx: &KernelContext, p: &SiegelPoint, gp: &GroupPoint, h: f64) -> Result<f64> {
    let f = |q: &SiegelPoint| kernel_upper(ctx, q, gp);
    let k = f(p)?.norm();
    Ok(heat_operator(ctx.dim, &f, p, h, &ctx.tol)?.norm() / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subharmonicity {
    /// Finite-difference value of `L |K|^p`.
    pub value: f64,
    /// `|K|^p / t`, the natural size of `L |K|^p` at height `t`.
    pub scale: f64,
    /// The same quantity assembled from first derivatives of `K`.
    pub identity: f64,
    /// Size of the `h` to `h/2` change, a bound on the remaining step error.
    pub fd_error: f64,
}

/// `L |K|^pw` at `p`, with `L = Delta_H / (8(n-1)) - d_t`, directly and via
/// `8(n-1) L|f|^p = p(p-2)|f|^{p-4} sum (Re(Y_j f, f))^2 + p |f|^{p-2} sum |Y_j f|^2`.
/// Both sides are Richardson-extrapolated from steps `h` and `h/2`.
pub fn subharmonicity_check(
    ctx: &KernelContext,
    p: &SiegelPoint,
    gp: &GroupPoint,
    pw: f64,
    h: f64,
) -> Result<Subharmonicity> {
    if !(2.0 / 3.0 - 1e-12..=1.0).contains(&pw) {
        return Err(Error::BadExponent(pw));
    }
    let kn = kernel_upper(ctx, p, gp)?.norm();
    if kn < ctx.tol.near_zero_modulus {
        return Err(Error::NearZeroModulus(kn));
    }
    let (v1, i1) = subharmonic_raw(ctx, p, gp, pw, h)?;
    let (v2, i2) = subharmonic_raw(ctx, p, gp, pw, h / 2.0)?;
    Ok(Subharmonicity {
        value: (4.0 * v2 - v1) / 3.0,
        scale: kn.powf(pw) / p.s,
        identity: (4.0 * i2 - i1) / 3.0,
        fd_error: ((v2 - v1).abs() + (i2 - i1).abs()) / 3.0,
    })
}

fn subharmonic_raw(ctx: &KernelContext, p: &SiegelPoint, gp: &GroupPoint, pw: f64, h: f64) -> Result<(f64, f64)> {
    let f = |q: &SiegelPoint| kernel_upper(ctx, q, gp);
    let k = f(p)?;
    let fp = |q: &SiegelPoint| f(q).map(|v| Quaternion::real(v.norm().powf(pw)));
    let value = heat_operator(ctx.dim, &fp, p, h, &ctx.tol)?.w;
    let ff = k.norm_sqr();
    let mut re_sq = 0.0;
    let mut abs_sq = 0.0;
    for j in 1..=ctx.dim.horiz() {
        let yj = y_at(ctx.dim, j, &f, p, h, &ctx.tol)?;
        re_sq += (yj.conj() * k).w.powi(2);
        abs_sq += yj.norm_sqr();
    }
    let rhs = pw * (pw - 2.0) * ff.powf(pw / 2.0 - 2.0) * re_sq + pw * ff.powf(pw / 2.0 - 1.0) * abs_sq;
    Ok((value, rhs / (8.0 * (ctx.n() as f64 - 1.0))))
}
