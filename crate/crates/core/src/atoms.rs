//! `(p, inf, alpha)`-atoms on the group and their Cauchy–Szegő projections.
//!
//! An atom is stored in normalized coordinates `g = g_0 . delta_r(u)` with
//! `u` in the unit ball `B = {|y|^4 + |t|^2 < 1}`. The smooth template is
//! `lambda (1 - ||u||^4)^2 (c(u) - sum beta_I xi^I(u))`, where `c` is a seeded
//! random quaternion polynomial and `beta` removes every moment of degree
//! `<= alpha` exactly (closed-form ball integrals). The node values used for
//! quadrature carry an extra discrete correction so their discrete moments
//! vanish as well.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::group::{GroupDim, GroupPoint, MultiIndex, SiegelPoint};
use crate::kernel::{kernel_upper, KernelContext};
use crate::poly::{monomial_value, Poly};
use crate::quat::Quaternion;
use crate::sampling::{stream, Halton};

/// `int_{S^{d-1}} omega^A d omega`.
fn sphere_moment(exps: &[u16]) -> f64 {
    if exps.iter().any(|&e| e % 2 == 1) {
        return 0.0;
    }
    let halves: Vec<f64> = exps.iter().map(|&e| (e as f64 + 1.0) / 2.0).collect();
    let ln = halves.iter().map(|&h| ln_gamma(h)).sum::<f64>() - ln_gamma(halves.iter().sum());
    2.0 * ln.exp()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `int_B u^E (1 - ||u||^4)^k du` over the unit ball of the homogeneous norm,
/// with `E` given in flattened `(y, t)` order.
pub fn ball_moment(dim: GroupDim, exps: &[u16], k: u32) -> f64 {
    let h = dim.horiz();
    let (ey, et) = exps.split_at(h);
    let sy = sphere_moment(ey);
    let st = sphere_moment(et);
    if sy == 0.0 || st == 0.0 {
        return 0.0;
    }
    let a: f64 = ey.iter().map(|&e| e as f64).sum();
    let b: f64 = et.iter().map(|&e| e as f64).sum();
    let k = k as f64;
    let gamma = (b + 3.0 + 2.0 * k) / 2.0;
    let t_part = 0.5 * ln_beta((b + 3.0) / 2.0, k + 1.0).exp();
    let y_part = 0.25 * ln_beta((a + h as f64) / 4.0, gamma + 1.0).exp();
    sy * st * t_part * y_part
}

/// `|B(0, 1)|` in closed form.
pub fn unit_ball_volume(dim: GroupDim) -> f64 {
    ball_moment(dim, &vec![0; dim.topdim()], 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub error: f64,
}

/// Quasi-Monte-Carlo estimate of `|B(0,1)|` from several independently
/// shifted Halton runs; the error is the standard error across runs.
pub fn unit_ball_volume_qmc(dim: GroupDim, samples: usize, seed: u64) -> VolumeEstimate {
    const RUNS: usize = 8;
    let m = dim.topdim();
    let box_vol = 2f64.powi(m as i32);
    let per = (samples / RUNS).max(1);
    let ests: Vec<f64> = (0..RUNS)
        .map(|k| {
            let mut h = Halton::new(m, &mut stream(seed.wrapping_add(k as u64), "ball-volume"));
            let hits = (0..per)
                .filter(|_| {
                    let c: Vec<f64> = h.next_point().iter().map(|v| 2.0 * v - 1.0).collect();
                    GroupPoint::from_coords(&c).hom_norm() < 1.0
                })
                .count();
            box_vol * hits as f64 / per as f64
        })
        .collect();
    let mean = ests.iter().sum::<f64>() / RUNS as f64;
    let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (RUNS as f64 - 1.0);
    VolumeEstimate { value: mean, error: (var / RUNS as f64).sqrt() }
}

/// `|B(g, r)| = r^Q |B(0, 1)|`.
pub fn ball_volume(dim: GroupDim, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::BadScale(r));
    }
    Ok(r.powi(dim.q() as i32) * unit_ball_volume(dim))
}

/// Smallest admissible moment order `[Q(1/p - 1)]`.
pub fn min_alpha(dim: GroupDim, p: f64) -> usize {
    (dim.q_f64() * (1.0 / p - 1.0) + 1e-12).floor() as usize
}

/// `n` points of the unit ball, as antithetic pairs `(u, u^{-1})`.
pub fn ball_nodes(dim: GroupDim, n: usize, seed: u64) -> Vec<GroupPoint> {
    let m = dim.topdim();
    let mut h = Halton::new(m, &mut stream(seed, "ball-nodes"));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c: Vec<f64> = h.next_point().iter().map(|v| 2.0 * v - 1.0).collect();
        let g = GroupPoint::from_coords(&c);
        if g.hom_norm() < 1.0 {
            out.push(g.inverse());
            out.push(g);
        }
    }
    out.truncate(n);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// Bump times a random polynomial with moments removed.
    Smooth,
    /// `+-lambda` on the half balls `u_1 > 0` and `u_1 < 0`; only for `alpha = 0`.
    HalfBall,
    /// `lambda` on the whole ball. Not an atom: it has a non-zero mean.
    Constant,
}

/// The data an atom is rebuilt from; this is what serializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub center: GroupPoint,
    pub radius: f64,
    pub p: f64,
    pub alpha: usize,
    pub seed: u64,
    pub template: Template,
    pub nodes: usize,
    /// Extra factor on the amplitude; 1 for a constructed atom.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl AtomSpec {
    pub fn new(center: GroupPoint, radius: f64, p: f64, alpha: usize, seed: u64) -> Self {
        Self { center, radius, p, alpha, seed, template: Template::Smooth, nodes: 200_000, scale: 1.0 }
    }

    pub fn with_template(mut self, t: Template) -> Self {
        self.template = t;
        self
    }

    pub fn with_nodes(mut self, n: usize) -> Self {
        self.nodes = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub spec: AtomSpec,
    pub dim: GroupDim,
    /// `lambda` times `spec.scale`.
    pub amplitude: f64,
    /// `c - sum beta_I xi^I` in normalized coordinates (smooth template).
    pub poly: Vec<(Vec<u16>, Quaternion)>,
    pub nodes_u: Vec<GroupPoint>,
    pub values: Vec<Quaternion>,
    /// Per-node weight in the measure of the group.
    pub weight: f64,
}

fn bump(u: &GroupPoint) -> f64 {
    let y2 = u.y_norm_sqr();
    let s = y2 * y2 + u.t_norm_sqr();
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - s) * (1.0 - s)
    }
}

fn poly_value(poly: &[(Vec<u16>, Quaternion)], c: &[f64]) -> Quaternion {
    poly.iter().map(|(e, q)| *q * monomial_value(e, c)).sum()
}

impl Atom {
    /// Unit-amplitude template value at a normalized point.
    fn shape(&self, u: &GroupPoint) -> Quaternion {
        template_shape(self.spec.template, &self.poly, u)
    }

    /// `a(g)` for a point of the group.
    pub fn eval(&self, g: &GroupPoint) -> Quaternion {
        let u = self.spec.center.inverse().mul(g).dilate_unchecked(1.0 / self.spec.radius);
        self.shape(&u) * self.amplitude
    }

    pub fn bound(&self) -> f64 {
        ball_volume(self.dim, self.spec.radius).map(|v| v.powf(-1.0 / self.spec.p)).unwrap_or(f64::NAN)
    }

    pub fn node_point(&self, i: usize) -> GroupPoint {
        self.spec.center.mul(&self.nodes_u[i].dilate_unchecked(self.spec.radius))
    }

    pub fn nodes(&self) -> Vec<GroupPoint> {
        (0..self.nodes_u.len()).map(|i| self.node_point(i)).collect()
    }

    /// The same atom with every value multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Atom {
        let mut a = self.clone();
        a.spec.scale *= s;
        a.amplitude *= s;
        a.values.iter_mut().for_each(|v| *v = *v * s);
        a
    }

    /// `a~(g) = eps^{Q/(2p)} a(delta_{sqrt eps} g)`, an atom on
    /// `B(delta_{1/sqrt eps} g_0, r / sqrt eps)`.
    pub fn eps_dilated(&self, eps: f64) -> Result<Atom> {
        if !(eps > 0.0) {
            return Err(Error::BadScale(eps));
        }
        let se = eps.sqrt();
        let f = eps.powf(self.dim.q_f64() / (2.0 * self.spec.p));
        let mut a = self.clone();
        a.spec.center = self.spec.center.dilate(1.0 / se)?;
        a.spec.radius = self.spec.radius / se;
        a.spec.scale *= f;
        a.amplitude *= f;
        a.values.iter_mut().for_each(|v| *v = *v * f);
        a.weight = self.weight / eps.powf(self.dim.q_f64() / 2.0);
        Ok(a)
    }

    /// `a(g) lambda` for a quaternion `lambda`.
    pub fn right_mul(&self, lambda: Quaternion) -> Atom {
        let mut a = self.clone();
        a.values.iter_mut().for_each(|v| *v *= lambda);
        a.poly.iter_mut().for_each(|(_, q)| *q *= lambda);
        a
    }
}

fn template_shape(t: Template, poly: &[(Vec<u16>, Quaternion)], u: &GroupPoint) -> Quaternion {
    if u.hom_norm() >= 1.0 {
        return Quaternion::ZERO;
    }
    match t {
        Template::Smooth => poly_value(poly, &u.coords()) * bump(u),
        Template::HalfBall => Quaternion::real(if u.y[0] > 0.0 { 1.0 } else if u.y[0] < 0.0 { -1.0 } else { 0.0 }),
        Template::Constant => Quaternion::ONE,
    }
}

fn solve_quaternion_system(g: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    g.lu().solve(&rhs).ok_or(Error::GramSingular)
}

/// Builds the atom described by `spec`.
pub fn make_atom(dim: GroupDim, spec: AtomSpec) -> Result<Atom> {
    if !(spec.p > 2.0 / 3.0 && spec.p <= 1.0) {
        return Err(Error::BadExponent(spec.p));
    }
    if !(spec.radius > 0.0) {
        return Err(Error::BadScale(spec.radius));
    }
    if spec.center.y.len() != dim.horiz() {
        return Err(Error::DimMismatch { expected: dim.horiz(), got: spec.center.y.len() });
    }
    let required = min_alpha(dim, spec.p);
    if spec.template != Template::Constant && spec.alpha < required {
        return Err(Error::MomentOrderTooLow { alpha: spec.alpha, required });
    }
    if spec.template == Template::HalfBall && spec.alpha != 0 {
        return Err(Error::InvalidArgument("the half-ball template only cancels constants".into()));
    }
    if spec.nodes < 2 {
        return Err(Error::InvalidArgument("an atom needs at least two nodes".into()));
    }
    let basis = MultiIndex::up_to_degree(dim, spec.alpha);
    let poly = match spec.template {
        Template::Smooth => smooth_polynomial(dim, &spec, &basis)?,
        _ => Vec::new(),
    };
    let nodes_u = ball_nodes(dim, spec.nodes, spec.seed);
    let mut raw: Vec<Quaternion> = nodes_u.par_iter().map(|u| template_shape(spec.template, &poly, u)).collect();
    if spec.template == Template::Smooth {
        discrete_correction(&basis, &nodes_u, &mut raw)?;
    }
    let bound = ball_volume(dim, spec.radius)?.powf(-1.0 / spec.p);
    let lambda = match spec.template {
        Template::Smooth => {
            let peak = template_peak(dim, &poly, &nodes_u, &raw, spec.seed);
            0.9 * bound / peak
        }
        _ => bound,
    };
    let amplitude = lambda * spec.scale;
    let values = raw.into_iter().map(|v| v * amplitude).collect();
    let weight = ball_volume(dim, spec.radius)? / spec.nodes as f64;
    Ok(Atom { spec, dim, amplitude, poly, nodes_u, values, weight })
}

fn smooth_polynomial(dim: GroupDim, spec: &AtomSpec, basis: &[MultiIndex]) -> Result<Vec<(Vec<u16>, Quaternion)>> {
    let mut rng = stream(spec.seed, "atom-template");
    let c: Vec<(Vec<u16>, Quaternion)> = MultiIndex::up_to_degree(dim, spec.alpha + 2)
        .into_iter()
        .map(|i| {
            let q = Quaternion::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (i.0, q)
        })
        .collect();
    let m = basis.len();
    let add = |a: &[u16], b: &[u16]| -> Vec<u16> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let gram = DMatrix::from_fn(m, m, |r, s| ball_moment(dim, &add(&basis[r].0, &basis[s].0), 2));
    let mut rhs = DMatrix::zeros(m, 4);
    for (r, j) in basis.iter().enumerate() {
        for (e, q) in &c {
            let w = ball_moment(dim, &add(&j.0, e), 2);
            if w != 0.0 {
                for (k, v) in q.to_array().into_iter().enumerate() {
                    rhs[(r, k)] += w * v;
                }
            }
        }
    }
    let beta = solve_quaternion_system(gram, rhs)?;
    let mut p = Poly::<Quaternion>::zero(dim.topdim());
    for (e, q) in c {
        p.add_term(e, q);
    }
    for (r, i) in basis.iter().enumerate() {
        p.add_term(i.0.clone(), -Quaternion::new(beta[(r, 0)], beta[(r, 1)], beta[(r, 2)], beta[(r, 3)]));
    }
    Ok(p.terms().map(|(e, q)| (e.clone(), *q)).collect())
}

/// Removes the discrete moments `sum v_i xi^J(u_i)` with a combination of
/// `bump * xi^I`, so the node values are an exact discrete atom.
fn discrete_correction(basis: &[MultiIndex], nodes: &[GroupPoint], vals: &mut [Quaternion]) -> Result<()> {
    let m = basis.len();
    let coords: Vec<Vec<f64>> = nodes.iter().map(|u| u.coords()).collect();
    let psi: Vec<Vec<f64>> = nodes
        .par_iter()
        .zip(&coords)
        .map(|(u, c)| {
            let b = bump(u);
            basis.iter().map(|i| b * monomial_value(&i.0, c)).collect()
        })
        .collect();
    let xi: Vec<Vec<f64>> = coords.par_iter().map(|c| basis.iter().map(|i| monomial_value(&i.0, c)).collect()).collect();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 4);
    for k in 0..nodes.len() {
        for r in 0..m {
            let x = xi[k][r];
            for s in 0..m {
                gram[(r, s)] += x * psi[k][s];
            }
            for (c, v) in vals[k].to_array().into_iter().enumerate() {
                rhs[(r, c)] += x * v;
            }
        }
    }
    let gamma = solve_quaternion_system(gram, rhs)?;
    for k in 0..nodes.len() {
        let mut corr = [0.0; 4];
        for s in 0..m {
            for (c, v) in corr.iter_mut().enumerate() {
                *v += gamma[(s, c)] * psi[k][s];
            }
        }
        vals[k] -= Quaternion::from_array(corr);
    }
    Ok(())
}

/// Largest `|template|` found by sampling and local ascent, never below the
/// node maximum.
fn template_peak(dim: GroupDim, poly: &[(Vec<u16>, Quaternion)], nodes: &[GroupPoint], vals: &[Quaternion], seed: u64) -> f64 {
    let f = |u: &GroupPoint| template_shape(Template::Smooth, poly, u).norm();
    let node_max = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut extra = ball_nodes(dim, 4000, seed ^ 0x5eed);
    extra.extend(nodes.iter().take(4000).cloned());
    let mut scored: Vec<(f64, GroupPoint)> = extra.into_iter().map(|u| (f(&u), u)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = node_max;
    for (mut v, mut u) in scored.into_iter().take(8) {
        let mut step = 0.05;
        while step > 1e-6 {
            let mut moved = false;
            for i in 0..dim.topdim() {
                for sgn in [1.0, -1.0] {
                    let mut c = u.coords();
                    c[i] += sgn * step;
                    let cand = GroupPoint::from_coords(&c);
                    let cv = f(&cand);
                    if cv > v {
                        v = cv;
                        u = cand;
                        moved = true;
                    }
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        best = best.max(v);
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub support_ok: bool,
    pub max_support_ratio: f64,
    pub linf_ok: bool,
    /// `max |a| / |B(g_0, r)|^{-1/p}` over nodes and the audit sample.
    pub linf_ratio: f64,
    pub moments_ok: bool,
    /// Discrete moments on the nodes, relative to `||a||_inf |B|`.
    pub node_moment_residual: f64,
    /// Exact moments of the closed-form template, relative likewise.
    pub exact_moment_residual: f64,
    /// Moments on an independent quasi-random sample (reported only).
    pub audit_moment_residual: f64,
    pub moments: usize,
    pub pass: bool,
}

/// Verifies support, size, and vanishing moments.
pub fn check_atom(atom: &Atom, audit: usize) -> AtomCheck {
    const MOMENT_TOL: f64 = 1e-9;
    let dim = atom.dim;
    let r = atom.spec.radius;
    let g0 = &atom.spec.center;
    let max_support_ratio = (0..atom.nodes_u.len())
        .into_par_iter()
        .map(|i| crate::group::dist(&atom.node_point(i), g0) / r)
        .reduce(|| 0.0, f64::max);
    let bound = atom.bound();
    let audit_nodes = ball_nodes(dim, audit.max(2), atom.spec.seed ^ 0xa0d1);
    let audit_vals: Vec<Quaternion> = audit_nodes.par_iter().map(|u| atom.shape(u) * atom.amplitude).collect();
    let linf = atom.values.iter().chain(&audit_vals).map(|v| v.norm()).fold(0.0, f64::max);
    let basis = MultiIndex::up_to_degree(dim, atom.spec.alpha);
    let vol = unit_ball_volume(dim);
    let norm = linf.max(f64::MIN_POSITIVE) * vol;
    let discrete = |nodes: &[GroupPoint], vals: &[Quaternion]| -> f64 {
        let w = vol / nodes.len() as f64;
        basis
            .par_iter()
            .map(|i| {
                let m: Quaternion = nodes.iter().zip(vals).map(|(u, v)| *v * monomial_value(&i.0, &u.coords())).sum();
                (m * w).norm() / norm
            })
            .reduce(|| 0.0, f64::max)
    };
    let node_moment_residual = discrete(&atom.nodes_u, &atom.values);
    let audit_moment_residual = discrete(&audit_nodes, &audit_vals);
    let exact_moment_residual = exact_template_moments(atom, &basis) / norm;
    let support_ok = max_support_ratio < 1.0;
    let linf_ok = linf <= bound * (1.0 + 1e-12);
    let moments_ok = node_moment_residual < MOMENT_TOL && exact_moment_residual < MOMENT_TOL;
    AtomCheck {
        support_ok,
        max_support_ratio,
        linf_ok,
        linf_ratio: linf / bound,
        moments_ok,
        node_moment_residual,
        exact_moment_residual,
        audit_moment_residual,
        moments: basis.len(),
        pass: support_ok && linf_ok && moments_ok,
    }
}

/// Largest `|int a(u) xi^J(u) du|` of the continuous template, by expanding
/// the integrand into monomials and integrating each exactly.
fn exact_template_moments(atom: &Atom, basis: &[MultiIndex]) -> f64 {
    let dim = atom.dim;
    let m = dim.topdim();
    let h = dim.horiz();
    match atom.spec.template {
        Template::HalfBall => {
            // sign(u_1) u^J is odd under u -> u^{-1} exactly when |J| is even,
            // which covers the constant moment the template is allowed for.
            if basis.iter().all(|j| j.order() % 2 == 0) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Template::Constant => basis
            .iter()
            .map(|j| ball_moment(dim, &j.0, 0).abs())
            .fold(0.0, f64::max)
            * atom.amplitude,
        Template::Smooth => {
            // bump = (1 - S)^2 with S = |y|^4 + |t|^2.
            let mut s = Poly::<f64>::zero(m);
            for i in 0..h {
                for k in 0..h {
                    let mut e = vec![0; m];
                    e[i] += 2;
                    e[k] += 2;
                    s.add_term(e, 1.0);
                }
            }
            for a in 0..3 {
                let mut e = vec![0; m];
                e[h + a] = 2;
                s.add_term(e, 1.0);
            }
            let one_minus = &Poly::constant(m, 1.0) - &s;
            let bump = one_minus.pow(2);
            let mut p = Poly::<Quaternion>::zero(m);
            for (e, q) in &atom.poly {
                p.add_term(e.clone(), *q);
            }
            let integrand = p.mul_real(&bump);
            basis
                .iter()
                .map(|j| {
                    let total: Quaternion = integrand
                        .terms()
                        .map(|(e, q)| {
                            let ee: Vec<u16> = e.iter().zip(&j.0).map(|(a, b)| a + b).collect();
                            *q * ball_moment(dim, &ee, 0)
                        })
                        .sum();
                    (total * atom.amplitude).norm()
                })
                .fold(0.0, f64::max)
        }
    }
}

/// `(P a)(t, g) = int K((t, g), g') a(g') dg'` by quadrature over the nodes.
pub fn project_atom(ctx: &KernelContext, atom: &Atom, at: &SiegelPoint) -> Result<Quaternion> {
    if !(at.s > 0.0) {
        return Err(Error::NotInDomain(at.s));
    }
    let partial: Vec<Quaternion> = atom
        .nodes_u
        .par_chunks(4096)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = Quaternion::ZERO;
            for (k, _) in chunk.iter().enumerate() {
                let i = c * 4096 + k;
                acc += kernel_upper(ctx, at, &atom.node_point(i))? * atom.values[i];
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(partial.into_iter().sum::<Quaternion>() * atom.weight)
}

fn project_serial(ctx: &KernelContext, atom: &Atom, nodes: &[GroupPoint], at: &SiegelPoint) -> Result<Quaternion> {
    let mut acc = Quaternion::ZERO;
    for (g, v) in nodes.iter().zip(&atom.values) {
        acc += kernel_upper(ctx, at, g)? * *v;
    }
    Ok(acc * atom.weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub value: Quaternion,
    /// Half the difference between the even- and odd-indexed half sums.
    pub error: f64,
}

pub fn project_atom_with_error(ctx: &KernelContext, atom: &Atom, at: &SiegelPoint) -> Result<Projection> {
    let value = project_atom(ctx, atom, at)?;
    let mut halves = [Quaternion::ZERO; 2];
    for i in 0..atom.nodes_u.len() {
        halves[(i / 2) % 2] += kernel_upper(ctx, at, &atom.node_point(i))? * atom.values[i];
    }
    let error = ((halves[0] - halves[1]) * atom.weight).norm();
    Ok(Projection { value, error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpScanConfig {
    /// Values of `eps / r^2`.
    pub eps_factors: Vec<f64>,
    pub lambda: f64,
    /// Outer radius as a multiple of `max(lambda r, sqrt eps)`.
    pub outer_factor: f64,
    /// Inner cut-off as a multiple of `min(r, sqrt eps)`.
    pub inner_factor: f64,
    pub radial: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for HpScanConfig {
    fn default() -> Self {
        Self {
            eps_factors: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            lambda: 8.0,
            outer_factor: 64.0,
            inner_factor: 1e-2,
            radial: 40,
            directions: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpScanRow {
    pub eps: f64,
    /// `int |P a(eps, h)|^p dh`, including the tail bound.
    pub value: f64,
    pub tail: f64,
    pub tail_share: f64,
    /// Half the difference between the two halves of the direction sample.
    pub error: f64,
    pub outer_radius: f64,
    pub tail_dominates: bool,
}

/// Points of the unit sphere distributed by the cone measure.
pub fn cone_directions(dim: GroupDim, count: usize, seed: u64) -> Vec<GroupPoint> {
    ball_nodes(dim, count, seed)
        .into_iter()
        .map(|u| u.dilate_unchecked(1.0 / u.hom_norm()))
        .collect()
}

/// `int |P a(eps, h)|^p dh` for each `eps` in the grid.
///
/// In homogeneous polar coordinates about the center,
/// `dh = Q |B| rho^Q d(log rho) d mu(omega)` with `mu` the cone measure; the
/// radial integral is a midpoint rule in `log rho` and the part beyond the
/// outer radius is bounded assuming decay `||h||^{-(Q + alpha + 1)}` with a
/// constant fitted on the outermost shell.
pub fn hp_scan(ctx: &KernelContext, atom: &Atom, cfg: &HpScanConfig) -> Result<Vec<HpScanRow>> {
    let dim = ctx.dim;
    let q = dim.q_f64();
    let p = atom.spec.p;
    let r = atom.spec.radius;
    let vol = unit_ball_volume(dim);
    let decay = q + atom.spec.alpha as f64 + 1.0;
    let rate = p * decay - q;
    let dirs = cone_directions(dim, cfg.directions, cfg.seed);
    let nodes = atom.nodes();
    let g0 = &atom.spec.center;
    let mut rows = Vec::with_capacity(cfg.eps_factors.len());
    for &f in &cfg.eps_factors {
        let eps = f * r * r;
        let scale = (cfg.lambda * r).max(eps.sqrt());
        let outer = cfg.outer_factor * scale;
        let inner = cfg.inner_factor * r.min(eps.sqrt());
        let (l0, l1) = (inner.ln(), outer.ln());
        let dl = (l1 - l0) / cfg.radial as f64;
        let mut pts = Vec::with_capacity(cfg.radial * dirs.len() + dirs.len() + 1);
        for k in 0..cfg.radial {
            let rho = (l0 + (k as f64 + 0.5) * dl).exp();
            for d in &dirs {
                pts.push(g0.mul(&d.dilate_unchecked(rho)));
            }
        }
        for d in &dirs {
            pts.push(g0.mul(&d.dilate_unchecked(outer)));
        }
        pts.push(g0.clone());
        let vals: Vec<f64> = pts
            .par_iter()
            .map(|h| project_serial(ctx, atom, &nodes, &SiegelPoint::new(eps, h.clone())).map(|v| v.norm().powf(p)))
            .collect::<Result<_>>()?;
        let nd = dirs.len();
        let mut halves = [0.0; 2];
        for k in 0..cfg.radial {
            let rho = (l0 + (k as f64 + 0.5) * dl).exp();
            for m in 0..nd {
                halves[m % 2] += rho.powf(q) * vals[k * nd + m];
            }
        }
        let scale_h = q * vol * dl * 2.0 / nd as f64;
        let (h0, h1) = (halves[0] * scale_h, halves[1] * scale_h);
        let body = 0.5 * (h0 + h1);
        let core = vol * inner.powf(q) * vals[vals.len() - 1];
        let shell = &vals[cfg.radial * nd..cfg.radial * nd + nd];
        let cp = shell.iter().sum::<f64>() / nd as f64 * outer.powf(p * decay);
        let tail = if rate > 0.0 { q * vol * cp * outer.powf(-rate) / rate } else { f64::INFINITY };
        let value = body + core + tail;
        let tail_share = tail / value;
        rows.push(HpScanRow {
            eps,
            value,
            tail,
            tail_share,
            error: 0.5 * (h0 - h1).abs(),
            outer_radius: outer,
            tail_dominates: tail_share > 0.2,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBound {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    /// `|P a(eps, g_0)| eps^{(2n+1)/p}`.
    pub normalized: Vec<f64>,
    /// Log-log slope of `|P a(eps, g_0)|` over the smallest half of the grid.
    pub fitted_exponent: f64,
    pub bound_exponent: f64,
    pub pass: bool,
}

pub fn pointwise_bound_check(ctx: &KernelContext, atom: &Atom, eps: &[f64]) -> Result<PointwiseBound> {
    let n = ctx.n() as f64;
    let p = atom.spec.p;
    let bound_exponent = -(2.0 * n + 1.0) / p;
    let at = |e: f64| SiegelPoint::new(e, atom.spec.center.clone());
    let values: Vec<f64> = eps.iter().map(|&e| project_atom(ctx, atom, &at(e)).map(|v| v.norm())).collect::<Result<_>>()?;
    let normalized: Vec<f64> = eps.iter().zip(&values).map(|(e, v)| v * e.powf(-bound_exponent)).collect();
    let mut idx: Vec<usize> = (0..eps.len()).collect();
    idx.sort_by(|a, b| eps[*a].total_cmp(&eps[*b]));
    let k = (eps.len() / 2).max(2).min(eps.len());
    let xs: Vec<f64> = idx[..k].iter().map(|&i| eps[i]).collect();
    let ys: Vec<f64> = idx[..k].iter().map(|&i| values[i].max(f64::MIN_POSITIVE)).collect();
    let (fitted_exponent, _) = crate::kernel::loglog_fit(&xs, &ys);
    let pass = normalized.iter().all(|v| v.is_finite()) && fitted_exponent >= bound_exponent - 0.3;
    Ok(PointwiseBound { eps: eps.to_vec(), values, normalized, fitted_exponent, bound_exponent, pass })
}

/// Symbols available to [`commutator_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symbol {
    Constant(f64),
    /// `min(||g||, 1)`.
    ClippedNorm,
    /// `min(||g||, 1) + shift`.
    ShiftedNorm(f64),
}

impl Symbol {
    pub fn eval(&self, g: &GroupPoint) -> f64 {
        match *self {
            Symbol::Constant(c) => c,
            Symbol::ClippedNorm => g.hom_norm().min(1.0),
            Symbol::ShiftedNorm(s) => g.hom_norm().min(1.0) + s,
        }
    }

    pub fn parse(name: &str) -> Result<Symbol> {
        match name {
            "const" | "constant" => Ok(Symbol::Constant(7.0)),
            "norm" => Ok(Symbol::ClippedNorm),
            "norm-shifted" => Ok(Symbol::ShiftedNorm(7.0)),
            other => other
                .strip_prefix("const:")
                .and_then(|v| v.parse().ok())
                .map(Symbol::Constant)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown symbol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub nodes: usize,
    pub singular_values: Vec<f64>,
    /// `max |b| * max |K w|`, the natural size of the matrix entries.
    pub scale: f64,
}

/// Discretized `[b, P]` at height `t` on quasi-random nodes of a tile:
/// `M_{xy} = (b(x) - b(y)) K((t, x), y) w_y`, the four real component
/// matrices stacked into a `4N x N` matrix.
pub fn commutator_matrix(
    ctx: &KernelContext,
    symbol: Symbol,
    tile: &crate::tiling::BasicTile,
    patch: &crate::tiling::TileAddress,
    nodes: usize,
    t: f64,
    seed: u64,
) -> Result<CommutatorReport> {
    const MAX_NODES: usize = 2000;
    if nodes > MAX_NODES {
        return Err(Error::TooManyNodes { got: nodes, max: MAX_NODES });
    }
    if !(t > 0.0) {
        return Err(Error::NotInDomain(t));
    }
    let mut h = Halton::new(ctx.dim.topdim(), &mut stream(seed, "commutator-nodes"));
    let pts: Vec<GroupPoint> = (0..nodes).map(|_| tile.point_in_tile(patch, &h.next_point())).collect();
    let w = patch.width().powi(ctx.dim.q() as i32) / nodes as f64;
    let b: Vec<f64> = pts.iter().map(|g| symbol.eval(g)).collect();
    let rows: Vec<Vec<[f64; 4]>> = pts
        .par_iter()
        .map(|x| pts.iter().map(|y| kernel_upper(ctx, &SiegelPoint::new(t, x.clone()), y).map(|k| (k * w).to_array())).collect())
        .collect::<Result<_>>()?;
    let mut kmax: f64 = 0.0;
    let m = DMatrix::from_fn(4 * nodes, nodes, |r, c| {
        let (comp, x) = (r / nodes, r % nodes);
        let kv = rows[x][c];
        kmax = kmax.max(kv[comp].abs());
        (b[x] - b[c]) * kv[comp]
    });
    let bmax = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(CommutatorReport { nodes, singular_values: sv, scale: bmax.max(1.0) * kmax })
}
