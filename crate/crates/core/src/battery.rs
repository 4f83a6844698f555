//! Verification batteries. Each one samples its inputs from a named random
//! stream, runs in parallel with an ordered reduction, and returns a
//! [`BatteryResult`] whose checks carry the measured values and limits.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::atoms::{self, AtomSpec, HpScanConfig, Symbol, Template};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::group::{self, GroupDim, GroupPoint, MultiIndex, SiegelPoint, Steps};
use crate::kernel::{self, KernelContext};
use crate::poly::Poly;
use crate::quat::Quaternion;
use crate::report::{BatteryResult, Check, RunConfig};
use crate::sampling::stream;
use crate::tiling::{self, BasicTile, Membership, SandwichProbe, SignSearchConfig, TileAddress};

/// Battery names in run order.
pub const BATTERIES: [&str; 12] = [
    "group-law",
    "field-commutators",
    "kernel-oracle",
    "invariance",
    "regularity",
    "decay",
    "min-sphere",
    "tiling",
    "sign-search",
    "atoms",
    "subharmonicity",
    "commutator",
];

pub fn run_battery(name: &str, cfg: &RunConfig) -> Result<BatteryResult> {
    cfg.validate()?;
    match name {
        "group-law" => group_law(cfg),
        "field-commutators" => field_commutators(cfg),
        "kernel-oracle" => kernel_oracle(cfg),
        "invariance" => invariance(cfg),
        "regularity" => regularity(cfg),
        "decay" => decay(cfg),
        "min-sphere" => min_sphere(cfg),
        "tiling" => tiling_suite(cfg),
        "sign-search" => sign_search(cfg),
        "atoms" => atom_suite(cfg),
        "subharmonicity" => subharmonicity(cfg),
        "commutator" => commutator(cfg),
        other => Err(Error::InvalidArgument(format!("unknown battery {other:?}"))),
    }
}

pub fn kernel_context(cfg: &RunConfig, n: usize) -> Result<KernelContext> {
    Ok(KernelContext::new(n, cfg.c)?.with_tolerances(Tolerances::default().scaled(cfg.tol_scale)))
}

/// Seeds for `count` work items of one battery.
fn item_seeds(cfg: &RunConfig, purpose: &str, count: usize) -> Vec<u64> {
    let mut rng = stream(cfg.seed, purpose);
    (0..count).map(|_| rng.gen()).collect()
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn rel(a: Quaternion, b: Quaternion) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn group_law(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(10_000);
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for n in dims_with(cfg.n, &[2, 3]) {
        let dim = GroupDim::new(n)?;
        let errs: Vec<[f64; 4]> = item_seeds(cfg, &format!("group-law-{n}"), samples)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream(s, "group-law-item");
                let g = GroupPoint::random(dim, &mut rng, 1.0, 1.0);
                let h = GroupPoint::random(dim, &mut rng, 1.0, 1.0);
                let k = GroupPoint::random(dim, &mut rng, 1.0, 1.0);
                let r: f64 = rng.gen_range(0.25..4.0);
                let e = GroupPoint::identity(dim);
                let assoc = g.mul(&h).mul(&k).max_abs_diff(&g.mul(&h.mul(&k)));
                let inv = g.mul(&g.inverse()).max_abs_diff(&e).max(g.inverse().mul(&g).max_abs_diff(&e));
                let dil = g.mul(&h).dilate_unchecked(r).max_abs_diff(&g.dilate_unchecked(r).mul(&h.dilate_unchecked(r)));
                let norm = (g.dilate_unchecked(r).hom_norm() - r * g.hom_norm()).abs();
                [assoc, inv, dil, norm]
            })
            .collect();
        for (i, label) in ["associativity", "inverse", "dilation", "norm-homogeneity"].iter().enumerate() {
            let m = max_of(errs.iter().map(|e| e[i]));
            checks.push(Check::at_most(&format!("{label}-n{n}"), m, 1e-12));
        }
        details.insert(format!("samples-n{n}"), json!(samples));
    }
    Ok(BatteryResult::new(
        "group-law",
        "the group law is associative with inverses, dilations are automorphisms, and the norm is homogeneous",
        checks,
        details.into(),
    ))
}

fn dims_with(n: usize, base: &[usize]) -> Vec<usize> {
    let mut s: BTreeSet<usize> = base.iter().copied().collect();
    s.insert(n);
    s.into_iter().collect()
}

/// A fixed cubic in all coordinates, used as a generic test function.
pub fn test_cubic(dim: GroupDim) -> Poly {
    let m = dim.topdim();
    let h = dim.horiz();
    let mut p = Poly::zero(m);
    for i in 0..m {
        let mut e = vec![0; m];
        e[i] = 1;
        e[(i + 1) % m] += 1;
        e[(i + 3) % m] += 1;
        p.add_term(e, 1.0 + 0.25 * i as f64);
        let mut e = vec![0; m];
        e[i] = 2;
        p.add_term(e, -0.5);
    }
    for a in 0..3 {
        let mut e = vec![0; m];
        e[h + a] = 1;
        e[a % h] = 2;
        p.add_term(e, 0.75);
    }
    p
}

fn field_commutators(cfg: &RunConfig) -> Result<BatteryResult> {
    let points = cfg.samples_or(20);
    let steps = Steps::uniform(1e-4);
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for n in dims_with(cfg.n, &[2, 3]) {
        let dim = GroupDim::new(n)?;
        let h = dim.horiz();
        let cubic = test_cubic(dim);
        let dt: Vec<Poly> = (0..3).map(|a| cubic.derivative(h + a)).collect();
        let mut funcs: Vec<Poly> = (0..3).map(|a| Poly::var(dim.topdim(), h + a, 1.0)).collect();
        funcs.push(cubic);
        let seeds = item_seeds(cfg, &format!("field-commutators-{n}"), points);
        let pairs: Vec<(usize, usize)> = (1..=h).flat_map(|k| (1..=h).map(move |j| (k, j))).collect();
        // (table error on coordinate functions, cubic error, cubic size)
        let errs: Vec<[f64; 3]> = pairs
            .par_iter()
            .map(|&(k, j)| -> Result<[f64; 3]> {
                let same_block = (k - 1) / 4 == (j - 1) / 4;
                let coef = |a: usize| {
                    if same_block {
                        4.0 * group::b_matrix(a + 1).expect("alpha in range")[(k - 1) % 4][(j - 1) % 4] as f64
                    } else {
                        0.0
                    }
                };
                let mut worst = [0.0f64; 3];
                for &s in &seeds {
                    let g = GroupPoint::random(dim, &mut stream(s, "field-point"), 1.0, 1.0);
                    let c = g.coords();
                    for (fi, p) in funcs.iter().enumerate() {
                        let f = |x: &GroupPoint| Ok(Quaternion::real(p.eval(&x.coords())));
                        let fd = group::apply_sequence(dim, &[k, j], &f, &g, &steps)?
                            - group::apply_sequence(dim, &[j, k], &f, &g, &steps)?;
                        if fi < 3 {
                            worst[0] = worst[0].max((fd.w - coef(fi)).abs());
                        } else {
                            let expect: f64 = (0..3).map(|a| coef(a) * dt[a].eval(&c)).sum();
                            worst[1] = worst[1].max((fd.w - expect).abs());
                            worst[2] = worst[2].max(p.eval(&c).abs());
                        }
                    }
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        checks.push(Check::at_most(&format!("max-error-n{n}"), max_of(errs.iter().map(|e| e[0])), 1e-7));
        // Roundoff in the nested second difference is ~ eps |f| / h^2, so the
        // generic cubic is measured relative to its size.
        let size = max_of(errs.iter().map(|e| e[2]));
        checks.push(Check::at_most(&format!("cubic-relative-error-n{n}"), max_of(errs.iter().map(|e| e[1])) / size, 1e-7));
        details.insert(format!("pairs-n{n}"), json!(pairs.len()));
    }
    details.insert("points".into(), json!(points));
    Ok(BatteryResult::new(
        "field-commutators",
        "[Y_k, Y_j] = 4 sum_alpha b^alpha_kj d/dt_alpha for every pair of horizontal fields",
        checks,
        details.into(),
    ))
}

fn random_quaternion(rng: &mut impl Rng, r: f64) -> Quaternion {
    Quaternion::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

fn kernel_oracle(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(200);
    let mut checks = Vec::new();
    for n in dims_with(cfg.n, &[2, 3]) {
        let ctx = kernel_context(cfg, n)?;
        let mut rng = stream(cfg.seed, &format!("kernel-oracle-{n}"));
        let args: Vec<Quaternion> = std::iter::repeat_with(|| random_quaternion(&mut rng, 2.0))
            .filter(|q| q.norm() > 0.1)
            .take(samples)
            .collect();
        let errs: Vec<f64> = args
            .par_iter()
            .map(|&q| Ok(rel(kernel::s_quat(&ctx, q)?, kernel::s_oracle(&ctx, q)?)))
            .collect::<Result<_>>()?;
        checks.push(Check::at_most(&format!("relative-error-n{n}"), max_of(errs), 1e-9));
    }
    let ctx = kernel_context(cfg, 2)?;
    let c = cfg.c;
    let pinned = [
        ("s(1)", Quaternion::ONE, Quaternion::real(12.0 * c)),
        ("s(i)", Quaternion::I, Quaternion::I * (4.0 * c)),
        ("s(1+i)", Quaternion::ONE + Quaternion::I, Quaternion::I * (-c)),
        ("s(1+j)", Quaternion::ONE + Quaternion::J, Quaternion::J * (-c)),
    ];
    let mut values = serde_json::Map::new();
    for (name, arg, want) in pinned {
        let got = kernel::s_quat(&ctx, arg)?;
        let oracle = kernel::s_oracle(&ctx, arg)?;
        checks.push(Check::at_most(&format!("pinned {name}"), (got - want).norm().max((oracle - want).norm()) / c.abs(), 1e-12));
        values.insert(name.into(), json!(got.to_array()));
    }
    Ok(BatteryResult::new(
        "kernel-oracle",
        "the closed-form kernel matches a symbolic-differentiation oracle",
        checks,
        json!({ "samples": samples, "pinned": values }),
    ))
}

/// `y_l -> s y_l s*`, `t -> s t s*` for a unit quaternion `s`.
pub fn rotate(g: &GroupPoint, s: Quaternion) -> GroupPoint {
    let mut y = Vec::with_capacity(g.y.len());
    for l in 0..g.y.len() / 4 {
        y.extend((s * g.y_quat(l) * s.conj()).to_array());
    }
    let t = s * Quaternion::new(0.0, g.t[0], g.t[1], g.t[2]) * s.conj();
    GroupPoint::new([t.x, t.y, t.z], y)
}

fn invariance(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(1000);
    let ctx = kernel_context(cfg, cfg.n)?;
    let dim = ctx.dim;
    let q = dim.q() as i32;
    let errs: Vec<[f64; 3]> = item_seeds(cfg, "invariance", samples)
        .into_par_iter()
        .map(|s| -> Result<[f64; 3]> {
            let mut rng = stream(s, "invariance-item");
            let p = SiegelPoint::new(rng.gen_range(0.1..2.0), GroupPoint::random(dim, &mut rng, 1.0, 1.0));
            let gp = GroupPoint::random(dim, &mut rng, 1.0, 1.0);
            let base = kernel::kernel_upper(&ctx, &p, &gp)?;
            let h = GroupPoint::random(dim, &mut rng, 1.0, 1.0);
            let moved = kernel::kernel_upper(&ctx, &SiegelPoint::new(p.s, h.mul(&p.g)), &h.mul(&gp))?;
            let r: f64 = rng.gen_range(0.5..2.0);
            let dil = kernel::kernel_upper(&ctx, &SiegelPoint::new(r * r * p.s, p.g.dilate(r)?), &gp.dilate(r)?)? * r.powi(q);
            let sig = random_quaternion(&mut rng, 1.0);
            let sig = sig / sig.norm();
            let rot = kernel::kernel_upper(&ctx, &SiegelPoint::new(p.s, rotate(&p.g, sig)), &rotate(&gp, sig))?;
            Ok([rel(moved, base), rel(dil, base), rel(rot, sig * base * sig.conj())])
        })
        .collect::<Result<_>>()?;
    let checks = vec![
        Check::at_most("translation", max_of(errs.iter().map(|e| e[0])), 1e-11),
        Check::at_most("dilation", max_of(errs.iter().map(|e| e[1])), 1e-10),
        Check::at_most("rotation", max_of(errs.iter().map(|e| e[2])), 1e-10),
    ];
    Ok(BatteryResult::new(
        "invariance",
        "the kernel is invariant under translations, homogeneous of degree -Q under dilations, and covariant under unit-quaternion rotations",
        checks,
        json!({ "samples": samples }),
    ))
}

/// Points `(1, g)` with `||g|| <= 1`.
pub fn unit_ball_battery(cfg: &RunConfig, dim: GroupDim, count: usize, purpose: &str) -> Vec<SiegelPoint> {
    item_seeds(cfg, purpose, count)
        .into_iter()
        .map(|s| {
            let mut rng = stream(s, "battery-point");
            let g = GroupPoint::random(dim, &mut rng, 1.0, 1.0);
            let nrm = g.hom_norm();
            let g = if nrm > 1.0 { g.dilate_unchecked(rng.gen_range(0.0..1.0) / nrm) } else { g };
            SiegelPoint::new(1.0, g)
        })
        .collect()
}

fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((s.len() - 1) as f64 * q).round() as usize]
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn regularity(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(1000);
    let ctx = kernel_context(cfg, cfg.n)?;
    let pts = unit_ball_battery(cfg, ctx.dim, samples, "regularity");
    let o = GroupPoint::identity(ctx.dim);
    let (h, h2) = (1e-3, 5e-4);
    let res: Vec<[f64; 4]> = pts
        .par_iter()
        .map(|p| {
            Ok([
                kernel::cauchy_fueter_residual(&ctx, p, &o, h)?,
                kernel::cauchy_fueter_residual(&ctx, p, &o, h2)?,
                kernel::heat_residual(&ctx, p, &o, h)?,
                kernel::heat_residual(&ctx, p, &o, h2)?,
            ])
        })
        .collect::<Result<_>>()?;
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for (name, i) in [("cauchy-fueter", 0), ("heat", 2)] {
        let coarse: Vec<f64> = res.iter().map(|r| r[i]).collect();
        let fine: Vec<f64> = res.iter().map(|r| r[i + 1]).collect();
        let order = (rms(&coarse) / rms(&fine)).log2();
        let per: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| (a / b).log2()).collect();
        checks.push(Check::at_most(&format!("{name}-residual"), max_of(coarse.iter().copied()), 1e-4));
        checks.push(Check::within(&format!("{name}-order"), order, 1.7, 2.3));
        checks.push(Check::within(&format!("{name}-median-order"), percentile(&per, 0.5), 1.7, 2.3));
        details.insert(
            format!("{name}-order-percentiles"),
            json!({ "p05": percentile(&per, 0.05), "p50": percentile(&per, 0.5), "p95": percentile(&per, 0.95) }),
        );
    }
    details.insert("samples".into(), json!(samples));
    details.insert("steps".into(), json!([h, h2]));
    Ok(BatteryResult::new(
        "regularity",
        "the kernel solves the Cauchy-Fueter system and the heat equation Delta_H/(8(n-1)) f = d_t f; residuals are relative to |K|",
        checks,
        details.into(),
    ))
}

fn decay(cfg: &RunConfig) -> Result<BatteryResult> {
    let ctx = kernel_context(cfg, cfg.n)?;
    let dim = ctx.dim;
    let q = dim.q_f64();
    let rays = kernel::ray_directions(dim, cfg.samples_or(16), cfg.seed);
    let radii: Vec<f64> = (0..7).map(|k| 10f64.powf(1.0 + k as f64 / 3.0)).collect();
    let mut y12 = MultiIndex::unit(dim, 1);
    y12.0[1] = 1;
    let cases = [
        ("d0", MultiIndex::zero(dim), 0.1),
        ("d1-horizontal", MultiIndex::unit(dim, 1), 0.15),
        ("d2-horizontal", y12, 0.2),
        ("d2-vertical", MultiIndex::unit(dim, dim.horiz() + 1), 0.2),
    ];
    let fits: Vec<(String, f64, f64, kernel::DecayFit)> = cases
        .into_par_iter()
        .map(|(name, idx, tol)| {
            let fit = kernel::decay_exponent(&ctx, &idx, &radii, &rays, Steps::uniform(1e-3))?;
            Ok((name.to_string(), idx.hom_degree() as f64, tol, fit))
        })
        .collect::<Result<_>>()?;
    let mut checks = Vec::new();
    let mut csv = String::from("case,ray,slope\n");
    for (name, d, tol, fit) in &fits {
        let want = -(q + d);
        checks.push(Check::within(&format!("slope-{name}"), fit.slope, want - tol, want + tol));
        for (i, s) in fit.per_ray.iter().enumerate() {
            csv.push_str(&format!("{name},{i},{s}\n"));
        }
    }
    let details = json!({
        "rays": rays.len(),
        "radii": radii,
        "constants": fits.iter().map(|f| (f.0.clone(), f.3.constant)).collect::<std::collections::BTreeMap<_, _>>(),
    });
    let mut r = BatteryResult::new("decay", "|Y^I K| decays like ||g||^{-(Q + d(I))}", checks, details);
    r.csv.push(("slopes".into(), csv));
    Ok(r)
}

fn min_sphere(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(100_000);
    let ctx = kernel_context(cfg, cfg.n)?;
    let one = kernel::min_abs_on_sphere(&ctx, samples, 1.0, cfg.seed)?;
    let two = kernel::min_abs_on_sphere(&ctx, samples, 2.0, cfg.seed.wrapping_add(1))?;
    let scaled = two.value * 2f64.powi(ctx.dim.q() as i32);
    let checks = vec![
        Check::at_least("minimum", one.value, f64::MIN_POSITIVE),
        Check::at_least("margin-over-noise", one.value / one.noise, 1e3),
        Check::at_most("dilation-consistency", (scaled - one.value).abs() / one.value, 1e-8),
    ];
    Ok(BatteryResult::new(
        "min-sphere",
        "the kernel does not vanish on the unit sphere",
        checks,
        json!({ "radius-1": one, "radius-2": two, "samples": samples }),
    ))
}

fn tiling_suite(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(10_000);
    let dim = GroupDim::new(cfg.n)?;
    let tile = BasicTile::new(dim);
    let scales: Vec<i32> = (-3..=3).collect();
    // (covered exactly once, uncertain, self-similar, total)
    let counts: Vec<[usize; 4]> = scales
        .par_iter()
        .map(|&j| {
            let w = 2f64.powi(j);
            let mut c = [0usize; 4];
            for s in item_seeds(cfg, &format!("tiling-{j}"), samples) {
                let g = GroupPoint::random(dim, &mut stream(s, "tiling-point"), 3.0 * w, 3.0 * w * w);
                c[3] += 1;
                let Ok(addr) = tile.locate(&g, j) else {
                    c[1] += 1;
                    continue;
                };
                let mut yes = 0;
                let mut unsure = false;
                for db in neighbourhood() {
                    let cand = TileAddress { j, a: addr.a.clone(), b: [addr.b[0] + db[0], addr.b[1] + db[1], addr.b[2] + db[2]] };
                    match tile.contains(&cand, &g) {
                        Membership::Yes => yes += 1,
                        Membership::Uncertain => unsure = true,
                        Membership::No => {}
                    }
                }
                if unsure {
                    c[1] += 1;
                } else if yes == 1 {
                    c[0] += 1;
                }
                if let Ok(child) = tile.locate(&g, j - 1) {
                    if tiling::parent(&child) == addr {
                        c[2] += 1;
                    }
                } else {
                    c[2] += 1;
                }
            }
            c
        })
        .collect();
    let total: usize = counts.iter().map(|c| c[3]).sum();
    let uncertain: usize = counts.iter().map(|c| c[1]).sum();
    let unique: usize = counts.iter().map(|c| c[0]).sum();
    let similar: usize = counts.iter().map(|c| c[2]).sum();

    let mut rng = stream(cfg.seed, "tiling-children");
    let addr = TileAddress { j: 1, a: (0..dim.horiz()).map(|_| rng.gen_range(-5..5)).collect(), b: [rng.gen_range(-9..9), rng.gen_range(-9..9), rng.gen_range(-9..9)] };
    let kids = tiling::children(dim, &addr);
    let distinct: BTreeSet<_> = kids.iter().map(|k| (k.a.clone(), k.b)).collect();
    let parents_ok = kids.iter().all(|k| tiling::parent(k) == addr);

    let dyadic_ok = dyadic_exactness(&tile, cfg.seed, 1000);

    let probe = SandwichProbe::new(&tile, 64, 4000, cfg.seed);
    let sandwiches: Vec<tiling::Sandwich> = [-2, 0, 2]
        .par_iter()
        .map(|&j| tiling::ball_sandwich(&tile, &TileAddress { j, ..addr.clone() }, &probe))
        .collect();
    let spread = |f: fn(&tiling::Sandwich) -> f64| {
        let v: Vec<f64> = sandwiches.iter().map(f).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        max_of(v.iter().map(|x| (x - mean).abs() / mean))
    };
    let checks = vec![
        Check::holds("partition-unique", unique + uncertain == total),
        Check::at_most("uncertain-fraction", uncertain as f64 / total as f64, 1e-3),
        Check::holds("child-count", kids.len() == 1usize << dim.q() && distinct.len() == kids.len()),
        Check::holds("parent-of-child", parents_ok),
        Check::holds("self-similar", similar == total),
        Check::holds("dyadic-exact", dyadic_ok),
        Check::at_least("sandwich-inner", sandwiches.iter().map(|s| s.inner).fold(f64::INFINITY, f64::min), f64::MIN_POSITIVE),
        Check::at_most("sandwich-inner-spread", spread(|s| s.inner), 0.1),
        Check::at_most("sandwich-outer-spread", spread(|s| s.outer), 0.1),
    ];
    Ok(BatteryResult::new(
        "tiling",
        "the self-similar tiles partition the group, nest dyadically, and sit between two balls of comparable radius",
        checks,
        json!({
            "points": total,
            "uncertain": uncertain,
            "scales": scales,
            "children": kids.len(),
            "sandwich": sandwiches,
            "tail-bound": tile.tail_bound(),
        }),
    ))
}

fn neighbourhood() -> impl Iterator<Item = [i64; 3]> {
    (-2..=2).flat_map(|a| (-2..=2).flat_map(move |b| (-2..=2).map(move |c| [a, b, c])))
}

/// `F` at points with 12-bit dyadic coordinates against exact integer
/// arithmetic in units of `2^-36`.
pub fn dyadic_exactness(tile: &BasicTile, seed: u64, samples: usize) -> bool {
    let mut rng = stream(seed, "tiling-dyadic");
    let h = tile.dim.horiz();
    (0..samples).all(|_| {
        let k: Vec<i64> = (0..h).map(|_| rng.gen_range(0..4096)).collect();
        let y: Vec<f64> = k.iter().map(|&v| v as f64 / 4096.0).collect();
        let f = tile.f_eval(&y);
        let mut acc = [0i64; 3];
        for m in 1..=12u32 {
            let int: Vec<i64> = k.iter().map(|&v| ((v << m) >> 12) & 1).collect();
            let frac: Vec<i64> = k.iter().map(|&v| (v << m) & 4095).collect();
            let b = group::bilinear_int(&int, &frac);
            for a in 0..3 {
                acc[a] += b[a] << (24 - 2 * m);
            }
        }
        f.error == 0.0 && (0..3).all(|a| f.value[a] == acc[a] as f64 / 2f64.powi(36))
    })
}

fn sign_search(cfg: &RunConfig) -> Result<BatteryResult> {
    let tiles = cfg.samples_or(10);
    let ctx = kernel_context(cfg, cfg.n)?;
    let dim = ctx.dim;
    let tile = BasicTile::new(dim);
    let scfg = SignSearchConfig::default();
    let scales = [-1, 0, 1];
    let mut rng = stream(cfg.seed, "sign-search-tiles");
    let gammas: Vec<(Vec<i64>, [i64; 3])> = (0..tiles)
        .map(|_| ((0..dim.horiz()).map(|_| rng.gen_range(-8..8)).collect(), [rng.gen_range(-64..64), rng.gen_range(-64..64), rng.gen_range(-64..64)]))
        .collect();
    let jobs: Vec<TileAddress> = gammas
        .iter()
        .flat_map(|(a, b)| scales.iter().map(move |&j| TileAddress { j, a: a.clone(), b: *b }))
        .collect();
    let found: Vec<Option<tiling::SignTile>> = jobs
        .par_iter()
        .map(|src| match tiling::sign_tile_search(&ctx, &tile, src, &scfg) {
            Ok(t) => Ok(Some(t)),
            Err(Error::NoCandidateFound { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let n_found = found.iter().filter(|f| f.is_some()).count();
    let mut spread: f64 = 0.0;
    for chunk in found.chunks(scales.len()) {
        let v: Vec<f64> = chunk.iter().flatten().map(|t| t.normalized).collect();
        if v.len() == scales.len() {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = max_of(v.iter().copied());
            spread = spread.max(hi / lo - 1.0);
        }
    }
    let min_pairs = found.iter().flatten().map(|t| t.pairs).min().unwrap_or(0);
    let checks = vec![
        Check::holds("all-found", n_found == jobs.len()),
        Check::at_most("normalized-magnitude-spread", spread, 0.1),
        Check::at_least("pairs-per-tile", min_pairs as f64, 2.0 * (scfg.levels as f64).powi(dim.topdim() as i32)),
    ];
    let mut csv = String::from("j,a,b,target_a,target_b,component,sign,magnitude,normalized,center_distance\n");
    for t in found.iter().flatten() {
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{},{},{},{},{}\n",
            t.source.j, t.source.a, t.source.b, t.target.a, t.target.b, t.component, t.sign, t.magnitude, t.normalized, t.center_distance
        ));
    }
    let mut r = BatteryResult::new(
        "sign-search",
        "every tile has a far tile on which one kernel component keeps a fixed sign, with a floor scaling like 2^{-Qj}",
        checks,
        json!({ "tiles": tiles, "scales": scales, "found": found }),
    );
    r.csv.push(("tiles".into(), csv));
    Ok(r)
}

/// Sup over the `eps` grid of one scan, and the largest tail share.
fn scan_sup(ctx: &KernelContext, atom: &atoms::Atom, cfg: &HpScanConfig) -> Result<(f64, f64, Vec<atoms::HpScanRow>)> {
    let rows = atoms::hp_scan(ctx, atom, cfg)?;
    let sup = max_of(rows.iter().map(|r| r.value));
    let tail = max_of(rows.iter().map(|r| r.tail_share));
    Ok((sup, tail, rows))
}

fn atom_suite(cfg: &RunConfig) -> Result<BatteryResult> {
    let ctx = kernel_context(cfg, cfg.n)?;
    let dim = ctx.dim;
    let nodes = cfg.samples_or(200_000);
    let mut rng = stream(cfg.seed, "atom-centers");
    let center = GroupPoint::random(dim, &mut rng, 2.0, 2.0);
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();

    let specs = [
        ("smooth-p1", AtomSpec::new(center.clone(), 0.5, 1.0, 0, cfg.seed)),
        ("smooth-p0.9", AtomSpec::new(center.clone(), 1.0, 0.9, atoms::min_alpha(dim, 0.9), cfg.seed)),
        ("smooth-p0.8", AtomSpec::new(center.clone(), 2.0, 0.8, atoms::min_alpha(dim, 0.8), cfg.seed)),
        ("half-ball", AtomSpec::new(center.clone(), 1.0, 1.0, 0, cfg.seed).with_template(Template::HalfBall)),
    ];
    let mut worst_moment: f64 = 0.0;
    for (name, spec) in specs {
        let atom = atoms::make_atom(dim, spec.with_nodes(nodes))?;
        let chk = atoms::check_atom(&atom, 20_000);
        worst_moment = worst_moment.max(chk.node_moment_residual).max(chk.exact_moment_residual);
        checks.push(Check::holds(&format!("{name}-support"), chk.support_ok));
        checks.push(Check::at_most(&format!("{name}-size"), chk.linf_ratio, 1.0));
        checks.push(Check::at_most(&format!("{name}-moments"), chk.node_moment_residual.max(chk.exact_moment_residual), 1e-9));
        details.insert(name.into(), serde_json::to_value(&chk).expect("check serializes"));
    }
    details.insert("nodes".into(), json!(nodes));

    // The scans use lighter atoms; the same conditions are checked on them.
    let scan_cfg = HpScanConfig { seed: cfg.seed, ..HpScanConfig::default() };
    let scan_nodes = 4000;
    let mut csv = String::from("p,radius,center,eps,value,tail,tail_share,error\n");
    let mut scan_details = Vec::new();
    for (p, alpha) in [(1.0, 1usize), (0.8, atoms::min_alpha(dim, 0.8) + 1)] {
        let mut sups = Vec::new();
        let mut worst_tail: f64 = 0.0;
        let placements = [(0.1, false), (1.0, false), (10.0, false), (1.0, true)];
        for (r, moved) in placements {
            let g0 = if moved { center.clone() } else { GroupPoint::identity(dim) };
            let atom = atoms::make_atom(dim, AtomSpec::new(g0, r, p, alpha, cfg.seed).with_nodes(scan_nodes))?;
            if !atoms::check_atom(&atom, 4000).pass {
                checks.push(Check::holds(&format!("scan-atom-p{p}-r{r}-valid"), false));
            }
            let (sup, tail, rows) = scan_sup(&ctx, &atom, &scan_cfg)?;
            for row in &rows {
                csv.push_str(&format!("{p},{r},{},{},{},{},{},{}\n", moved as u8, row.eps, row.value, row.tail, row.tail_share, row.error));
            }
            sups.push(sup);
            worst_tail = worst_tail.max(tail);
        }
        let lo = sups.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = max_of(sups.iter().copied());
        checks.push(Check::at_most(&format!("hp-sup-ratio-p{p}"), hi / lo, 3.0));
        checks.push(Check::at_most(&format!("tail-share-p{p}"), worst_tail, 0.2));
        scan_details.push(json!({ "p": p, "alpha": alpha, "sups": sups }));
    }
    details.insert("hp-scan".into(), json!(scan_details));

    // Dilation reduction: scanning a at eps equals scanning a~ at eps = 1.
    let eps = 10.0;
    let atom = atoms::make_atom(dim, AtomSpec::new(center.clone(), 1.0, 0.8, atoms::min_alpha(dim, 0.8) + 1, cfg.seed).with_nodes(scan_nodes))?;
    let small = atom.eps_dilated(eps)?;
    let direct = atoms::hp_scan(&ctx, &atom, &HpScanConfig { eps_factors: vec![eps], ..scan_cfg.clone() })?[0].clone();
    let f = 1.0 / (small.spec.radius * small.spec.radius);
    let reduced = atoms::hp_scan(&ctx, &small, &HpScanConfig { eps_factors: vec![f], ..scan_cfg.clone() })?[0].clone();
    let gap = (direct.value - reduced.value).abs();
    let quad_tol = direct.error + reduced.error;
    checks.push(Check::at_most("eps-reduction-gap-over-quadrature-error", gap / quad_tol, 1.0));

    let pw = atoms::pointwise_bound_check(&ctx, &atom, &[1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0])?;
    checks.push(Check::holds("pointwise-bound", pw.pass));
    details.insert("eps-reduction".into(), json!({ "direct": direct, "reduced": reduced }));
    details.insert("pointwise".into(), serde_json::to_value(&pw).expect("bound serializes"));
    details.insert("worst-moment-residual".into(), json!(worst_moment));

    let mut r = BatteryResult::new(
        "atoms",
        "atoms are supported, bounded, and have vanishing moments; the H^p quasi-norm of their projections is bounded uniformly",
        checks,
        details.into(),
    );
    r.csv.push(("hp-scan".into(), csv));
    Ok(r)
}

fn subharmonicity(cfg: &RunConfig) -> Result<BatteryResult> {
    let samples = cfg.samples_or(1000);
    let ctx = kernel_context(cfg, cfg.n)?;
    let pts = unit_ball_battery(cfg, ctx.dim, samples, "subharmonicity");
    let o = GroupPoint::identity(ctx.dim);
    let mut checks = Vec::new();
    for pw in [2.0 / 3.0, 0.9, 1.0] {
        let out: Vec<kernel::Subharmonicity> = pts
            .par_iter()
            .map(|p| kernel::subharmonicity_check(&ctx, p, &o, pw, 1e-3))
            .collect::<Result<_>>()?;
        let worst = out.iter().map(|s| s.value / s.scale).fold(f64::INFINITY, f64::min);
        let ident = max_of(out.iter().map(|s| (s.value - s.identity).abs() / s.identity.abs().max(1e-3 * s.scale)));
        checks.push(Check::at_least(&format!("min-value-over-scale-p{pw:.3}"), worst, -1e-6));
        checks.push(Check::at_most(&format!("identity-error-p{pw:.3}"), ident, 1e-4));
    }
    Ok(BatteryResult::new(
        "subharmonicity",
        "|K|^p is subharmonic for the heat operator when p >= 2/3",
        checks,
        json!({ "samples": samples, "steps": [1e-3, 5e-4], "extrapolation": "richardson" }),
    ))
}

fn commutator(cfg: &RunConfig) -> Result<BatteryResult> {
    commutator_for(cfg, Symbol::Constant(7.0))
}

/// Singular values of the discretized `[b, P]`; for a constant symbol they
/// must vanish.
pub fn commutator_for(cfg: &RunConfig, symbol: Symbol) -> Result<BatteryResult> {
    let nodes = cfg.samples_or(500);
    let ctx = kernel_context(cfg, cfg.n)?;
    let tile = BasicTile::new(ctx.dim);
    let patch = TileAddress::origin(ctx.dim, 0);
    let rep = atoms::commutator_matrix(&ctx, symbol, &tile, &patch, nodes, 0.5, cfg.seed)?;
    let top = rep.singular_values.first().copied().unwrap_or(0.0);
    let mut checks = vec![Check::at_least("scale", rep.scale, f64::MIN_POSITIVE)];
    if let Symbol::Constant(_) = symbol {
        checks.push(Check::at_most("max-singular-value-over-scale", top / rep.scale, 1e-12));
    }
    let shown: Vec<f64> = rep.singular_values.iter().take(10).copied().collect();
    let mut csv = String::from("index,singular_value\n");
    for (i, s) in rep.singular_values.iter().enumerate() {
        csv.push_str(&format!("{i},{s}\n"));
    }
    let mut r = BatteryResult::new(
        "commutator",
        "the commutator of the projection with a constant symbol vanishes",
        checks,
        json!({ "symbol": symbol, "nodes": nodes, "scale": rep.scale, "top-singular-values": shown }),
    );
    r.csv.push(("singular-values".into(), csv));
    Ok(r)
}
