//! Self-similar tiles of the quaternionic Heisenberg group.
//!
//! The basic tile is
//! `A = { (t, y) : y in [0,1)^{4n-4}, 0 <= t_j - F_j(y) < 1 }` with
//! `F_j(y) = sum_{m>=1} 4^{-m} B_j([2^m y] mod 2, <2^m y>)`, and the tile with
//! address `(j, gamma)` is `delta_{2^j}(gamma . A)` for a lattice point
//! `gamma = (b, a)` with integer entries. Faces are half-open so that the
//! tiles at each scale partition the group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{bilinear, bilinear_int, GroupDim, GroupPoint};
use crate::kernel::{kernel_boundary_pair, KernelContext};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileAddress {
    pub j: i32,
    pub a: Vec<i64>,
    pub b: [i64; 3],
}

impl TileAddress {
    pub fn origin(dim: GroupDim, j: i32) -> Self {
        Self { j, a: vec![0; dim.horiz()], b: [0; 3] }
    }

    pub fn lattice_point(&self) -> GroupPoint {
        GroupPoint::new(self.b.map(|v| v as f64), self.a.iter().map(|&v| v as f64).collect())
    }

    pub fn width(&self) -> f64 {
        2f64.powi(self.j)
    }

    /// Address of `delta_2(T)`: `delta_2 delta_{2^j} gamma A = delta_{2^{j+1}} gamma A`.
    pub fn dilated(&self) -> Self {
        Self { j: self.j + 1, a: self.a.clone(), b: self.b }
    }

    /// `(j, eta . gamma)` for a lattice point `eta`.
    pub fn translated(&self, eta_a: &[i64], eta_b: [i64; 3]) -> Self {
        let (b, a) = lattice_mul((&eta_b, eta_a), (&self.b, &self.a));
        Self { j: self.j, a, b }
    }
}

/// Product of lattice points `(b, a) . (b', a')`.
pub fn lattice_mul(l: (&[i64; 3], &[i64]), r: (&[i64; 3], &[i64])) -> ([i64; 3], Vec<i64>) {
    let bb = bilinear_int(l.1, r.1);
    let b = [l.0[0] + r.0[0] + bb[0], l.0[1] + r.0[1] + bb[1], l.0[2] + r.0[2] + bb[2]];
    (b, l.1.iter().zip(r.1).map(|(x, y)| x + y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Yes,
    No,
    Uncertain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FValue {
    pub value: [f64; 3],
    /// Certified bound on the truncated tail; zero when the series terminated.
    pub error: f64,
}

/// Constants attached to the basic tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicTile {
    pub dim: GroupDim,
    /// `sup |B_j(a, y)|` over `a in {0,1}^{4n-4}`, `y in [0,1]^{4n-4}`.
    pub mbound: f64,
    pub n0: u32,
    pub m0: u32,
    /// Interior reference point, the center of the basic tile.
    pub g_o: GroupPoint,
}

impl BasicTile {
    pub fn new(dim: GroupDim) -> Self {
        Self::with_depth(dim, 26)
    }

    pub fn with_depth(dim: GroupDim, m0: u32) -> Self {
        let mbound = 8.0 * (dim.n as f64 - 1.0);
        let n0 = (2.0 + mbound.log(4.0)).floor() as u32 + 1;
        let y0 = 2f64.powi(-(n0 as i32) - 1);
        Self { dim, mbound, n0, m0, g_o: GroupPoint::new([0.5; 3], vec![y0; dim.horiz()]) }
    }

    pub fn tail_bound(&self) -> f64 {
        self.mbound * 4f64.powi(-(self.m0 as i32)) / 3.0
    }

    pub fn f_eval(&self, y: &[f64]) -> FValue {
        let mut acc = [0.0; 3];
        let mut scale = 1.0;
        let mut w = 1.0;
        let mut int = vec![0.0; y.len()];
        let mut frac = vec![0.0; y.len()];
        for _ in 0..self.m0 {
            scale *= 2.0;
            w *= 0.25;
            let mut all_zero = true;
            for i in 0..y.len() {
                let v = y[i] * scale;
                let fl = v.floor();
                frac[i] = v - fl;
                int[i] = fl.rem_euclid(2.0);
                all_zero &= frac[i] == 0.0;
            }
            if all_zero {
                return FValue { value: acc, error: 0.0 };
            }
            let b = bilinear(&int, &frac);
            for k in 0..3 {
                acc[k] += w * b[k];
            }
        }
        FValue { value: acc, error: self.tail_bound() }
    }

    /// `t - B(a, y - a) - F(y - a)` in the frame of scale `j`, with `a = floor(y)`.
    fn vertical_offset(&self, g: &GroupPoint, j: i32) -> (Vec<i64>, [f64; 3], f64) {
        let s = 2f64.powi(-j);
        let ys: Vec<f64> = g.y.iter().map(|v| v * s).collect();
        let a: Vec<f64> = ys.iter().map(|v| v.floor()).collect();
        let rel: Vec<f64> = ys.iter().zip(&a).map(|(y, a)| y - a).collect();
        let bb = bilinear(&a, &rel);
        let f = self.f_eval(&rel);
        let s2 = s * s;
        let w = [0, 1, 2].map(|k| g.t[k] * s2 - bb[k] - f.value[k]);
        (a.iter().map(|&v| v as i64).collect(), w, f.error)
    }

    pub fn contains(&self, addr: &TileAddress, g: &GroupPoint) -> Membership {
        let s = 2f64.powi(-addr.j);
        for (y, &a) in g.y.iter().zip(&addr.a) {
            let v = y * s - a as f64;
            if !(0.0..1.0).contains(&v) {
                return Membership::No;
            }
        }
        let (_, w, err) = self.vertical_offset(g, addr.j);
        let mut uncertain = false;
        for k in 0..3 {
            let v = w[k] - addr.b[k] as f64;
            if v < -err || v >= 1.0 + err {
                return Membership::No;
            }
            if v < err || v >= 1.0 - err {
                uncertain = true;
            }
        }
        if uncertain && err > 0.0 {
            Membership::Uncertain
        } else {
            Membership::Yes
        }
    }

    pub fn locate(&self, g: &GroupPoint, j: i32) -> Result<TileAddress> {
        let (a, w, err) = self.vertical_offset(g, j);
        let mut b = [0i64; 3];
        for k in 0..3 {
            let fl = w[k].floor();
            let r = w[k] - fl;
            if err > 0.0 && (r < err || r > 1.0 - err) {
                return Err(Error::BoundaryUncertain);
            }
            b[k] = fl as i64;
        }
        Ok(TileAddress { j, a, b })
    }

    /// `delta_{2^j}(gamma . g_o)`.
    pub fn center(&self, addr: &TileAddress) -> GroupPoint {
        addr.lattice_point().mul(&self.g_o).dilate_unchecked(addr.width())
    }

    /// Image of `u in [0,1)^{4n-1}` in the tile: `y = u_y`, `t = F(u_y) + u_t`
    /// in the frame of the basic tile, then translated and dilated.
    pub fn point_in_tile(&self, addr: &TileAddress, u: &[f64]) -> GroupPoint {
        self.point_from_basic(addr, &self.basic_point(u))
    }

    pub fn basic_point(&self, u: &[f64]) -> GroupPoint {
        let h = self.dim.horiz();
        let f = self.f_eval(&u[..h]);
        GroupPoint::new([f.value[0] + u[h], f.value[1] + u[h + 1], f.value[2] + u[h + 2]], u[..h].to_vec())
    }

    pub fn point_from_basic(&self, addr: &TileAddress, x: &GroupPoint) -> GroupPoint {
        addr.lattice_point().mul(x).dilate_unchecked(addr.width())
    }
}

/// The `2^{4n+2}` lattice offsets of the subtiles of `delta_2(A)`.
pub fn gamma0(dim: GroupDim) -> Vec<(Vec<i64>, [i64; 3])> {
    let h = dim.horiz();
    let mut out = Vec::with_capacity(1 << (h + 6));
    for abits in 0u64..(1 << h) {
        let a: Vec<i64> = (0..h).map(|i| ((abits >> i) & 1) as i64).collect();
        for bb in 0..64 {
            out.push((a.clone(), [bb & 3, (bb >> 2) & 3, (bb >> 4) & 3]));
        }
    }
    out
}

/// Children `(j-1, delta_2(gamma) . gamma')` for `gamma'` in `Gamma_0`.
pub fn children(dim: GroupDim, addr: &TileAddress) -> Vec<TileAddress> {
    let ab: Vec<i64> = addr.a.iter().map(|v| 2 * v).collect();
    let bb = addr.b.map(|v| 4 * v);
    gamma0(dim)
        .into_iter()
        .map(|(a, b)| {
            let (b, a) = lattice_mul((&bb, &ab), (&b, &a));
            TileAddress { j: addr.j - 1, a, b }
        })
        .collect()
}

pub fn parent(addr: &TileAddress) -> TileAddress {
    let ap: Vec<i64> = addr.a.iter().map(|v| v.div_euclid(2)).collect();
    let two_ap: Vec<i64> = ap.iter().map(|v| 2 * v).collect();
    let rem: Vec<i64> = addr.a.iter().map(|v| v.rem_euclid(2)).collect();
    let bb = bilinear_int(&two_ap, &rem);
    let b = [0, 1, 2].map(|k| (addr.b[k] - bb[k]).div_euclid(4));
    TileAddress { j: addr.j + 1, a: ap, b }
}

/// Descendant of `addr` obtained by repeatedly taking the child with offset
/// `(abits, 0)`.
pub fn descendant(addr: &TileAddress, abits: &[Vec<i64>]) -> TileAddress {
    abits.iter().fold(addr.clone(), |cur, bits| {
        let ab: Vec<i64> = cur.a.iter().map(|v| 2 * v).collect();
        let (b, a) = lattice_mul((&cur.b.map(|v| 4 * v), &ab), (&[0; 3], bits));
        TileAddress { j: cur.j - 1, a, b }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    /// Largest sampled `rho` with `B(center, rho * width)` inside the tile.
    pub inner: f64,
    /// Largest sampled distance from the center to a tile point, in widths.
    pub outer: f64,
}

/// Probe set for [`ball_sandwich`], expressed relative to the tile so the
/// estimate is a function of tile shape only.
#[derive(Debug, Clone)]
pub struct SandwichProbe {
    pub directions: Vec<GroupPoint>,
    pub basic_points: Vec<GroupPoint>,
}

impl SandwichProbe {
    pub fn new(tile: &BasicTile, directions: usize, points: usize, seed: u64) -> Self {
        use crate::sampling::{stream, Halton};
        let dim = tile.dim;
        let mut h = Halton::new(dim.topdim(), &mut stream(seed, "sandwich-probe"));
        let directions = (0..directions)
            .filter_map(|_| {
                let c: Vec<f64> = h.next_point().iter().map(|v| 2.0 * v - 1.0).collect();
                let g = GroupPoint::from_coords(&c);
                (g.hom_norm() > 1e-3).then(|| crate::kernel::project_to_sphere(&g, 1.0))
            })
            .collect();
        let basic_points = (0..points).map(|_| tile.basic_point(&h.next_point())).collect();
        Self { directions, basic_points }
    }
}

pub fn ball_sandwich(tile: &BasicTile, addr: &TileAddress, probe: &SandwichProbe) -> Sandwich {
    let c = tile.center(addr);
    let w = addr.width();
    let inside = |rho: f64, dir: &GroupPoint| tile.contains(addr, &c.mul(&dir.dilate_unchecked(rho * w))) == Membership::Yes;
    let mut inner = f64::INFINITY;
    for dir in &probe.directions {
        let step = 1.0 / 512.0;
        let mut lo = 0.0;
        let mut hi = step;
        while inside(hi, dir) && hi < 8.0 {
            lo = hi;
            hi += step;
        }
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if inside(mid, dir) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        inner = inner.min(lo);
    }
    let outer = probe
        .basic_points
        .iter()
        .map(|x| crate::group::dist(&tile.point_from_basic(addr, x), &c) / w)
        .fold(0.0, f64::max);
    Sandwich { inner, outer }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSearchConfig {
    /// Annulus for the center distance, in widths of the source tile.
    pub r_lo: f64,
    pub r_hi: f64,
    /// Grid levels per coordinate of the full product sample.
    pub levels: usize,
    /// Grid levels of the cheap prescreen.
    pub prescreen_levels: usize,
    /// Required `m * 2^{Qj}`.
    pub threshold: f64,
    /// Ratio between consecutive radii of the candidate ladder.
    pub ladder_ratio: f64,
}

impl Default for SignSearchConfig {
    fn default() -> Self {
        Self { r_lo: 3.0, r_hi: 64.0, levels: 5, prescreen_levels: 3, threshold: 1e-9, ladder_ratio: 1.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTile {
    pub source: TileAddress,
    pub target: TileAddress,
    /// Quaternion component `1..=4` of constant sign.
    pub component: usize,
    pub sign: i8,
    /// `min |K_i(g, g^)|` over the sample.
    pub magnitude: f64,
    /// `magnitude * 2^{Qj}`, which is scale-free.
    pub normalized: f64,
    pub center_distance: f64,
    pub pairs: usize,
    /// Grid spacing of the product sample in the basic-tile frame.
    pub spacing: f64,
    pub max_abs: f64,
}

fn grid_levels(levels: usize) -> Vec<f64> {
    // Closed at the top up to one ulp-scale margin so samples stay in [0,1).
    let top = 1.0 - 2f64.powi(-30);
    (0..levels).map(|k| top * k as f64 / (levels - 1).max(1) as f64).collect()
}

fn product_grid(dims: usize, levels: &[f64]) -> Vec<Vec<f64>> {
    let l = levels.len();
    let total = l.pow(dims as u32);
    (0..total)
        .map(|mut idx| {
            (0..dims)
                .map(|_| {
                    let v = levels[idx % l];
                    idx /= l;
                    v
                })
                .collect()
        })
        .collect()
}

struct Sample {
    component_min: [f64; 4],
    component_max: [f64; 4],
    max_abs: f64,
    pairs: usize,
}

fn sample_pairs(
    ctx: &KernelContext,
    tile: &BasicTile,
    src: &TileAddress,
    dst: &TileAddress,
    levels: usize,
) -> Result<Sample> {
    let grid = product_grid(tile.dim.topdim(), &grid_levels(levels));
    let flipped: Vec<Vec<f64>> = grid.iter().map(|u| u.iter().map(|v| grid_levels(2)[1] - v).collect()).collect();
    let src_pts: Vec<GroupPoint> = grid.par_iter().map(|u| tile.point_in_tile(src, u)).collect();
    let dst_same: Vec<GroupPoint> = grid.par_iter().map(|u| tile.point_in_tile(dst, u)).collect();
    let dst_flip: Vec<GroupPoint> = flipped.par_iter().map(|u| tile.point_in_tile(dst, u)).collect();
    let vals: Vec<[f64; 4]> = src_pts
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, g)| [(g, &dst_same[i]), (g, &dst_flip[i])])
        .map(|(g, gh)| kernel_boundary_pair(ctx, g, gh).map(|k| k.to_array()))
        .collect::<Result<_>>()?;
    let mut s = Sample { component_min: [f64::INFINITY; 4], component_max: [f64::NEG_INFINITY; 4], max_abs: 0.0, pairs: vals.len() };
    for v in &vals {
        for i in 0..4 {
            s.component_min[i] = s.component_min[i].min(v[i]);
            s.component_max[i] = s.component_max[i].max(v[i]);
        }
        s.max_abs = s.max_abs.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    Ok(s)
}

/// `(component, sign, floor)` of the best constant-sign component, or the
/// best signed margin (negative when no component keeps its sign).
fn best_component(s: &Sample) -> std::result::Result<(usize, i8, f64), f64> {
    let mut best: Option<(usize, i8, f64)> = None;
    let mut margin = f64::NEG_INFINITY;
    for i in 0..4 {
        let (sign, m) = if s.component_min[i] > 0.0 {
            (1, s.component_min[i])
        } else if s.component_max[i] < 0.0 {
            (-1, -s.component_max[i])
        } else {
            margin = margin.max(-s.component_min[i].abs().min(s.component_max[i].abs()));
            continue;
        };
        if best.is_none_or(|b| m > b.2) {
            best = Some((i + 1, sign, m));
        }
    }
    best.ok_or(margin)
}

/// Relative offsets `zeta` of candidate tiles, in a fixed order: the tiles
/// containing `g_o . delta_rho(u)` for a ladder of `rho` and fixed directions.
pub fn candidate_offsets(tile: &BasicTile, cfg: &SignSearchConfig) -> Vec<(Vec<i64>, [i64; 3])> {
    let dim = tile.dim;
    let h = dim.horiz();
    let mut dirs = Vec::new();
    for i in 0..h {
        for s in [1.0, -1.0] {
            dirs.push(GroupPoint::basis(dim, i + 1, s));
        }
    }
    let diag = 1.0 / (h as f64).sqrt();
    dirs.push(GroupPoint::new([0.0; 3], vec![diag; h]));
    dirs.push(GroupPoint::new([0.0; 3], vec![-diag; h]));
    for a in 0..3 {
        for s in [1.0, -1.0] {
            dirs.push(GroupPoint::basis(dim, h + a + 1, s));
        }
    }
    let mut out: Vec<(Vec<i64>, [i64; 3])> = Vec::new();
    let mut rho = cfg.r_lo;
    while rho <= cfg.r_hi {
        for d in &dirs {
            let g = tile.g_o.mul(&d.dilate_unchecked(rho));
            if let Ok(addr) = tile.locate(&g, 0) {
                let cand = (addr.a, addr.b);
                if !out.contains(&cand) {
                    out.push(cand);
                }
            }
        }
        rho *= cfg.ladder_ratio;
    }
    out
}

/// Finds a tile `T^` at the scale of `src` such that one component of
/// `K(g, g^)` keeps its sign over a product sample of `T x T^`.
pub fn sign_tile_search(ctx: &KernelContext, tile: &BasicTile, src: &TileAddress, cfg: &SignSearchConfig) -> Result<SignTile> {
    let q = ctx.dim.q() as i32;
    let norm = 2f64.powi(q * src.j);
    let mut best_margin = f64::NEG_INFINITY;
    let c0 = tile.center(src);
    for (za, zb) in candidate_offsets(tile, cfg) {
        let (b, a) = lattice_mul((&src.b, &src.a), (&zb, &za));
        let dst = TileAddress { j: src.j, a, b };
        let dist = crate::group::dist(&tile.center(&dst), &c0) / src.width();
        if !(cfg.r_lo..=cfg.r_hi).contains(&dist) {
            continue;
        }
        let pre = sample_pairs(ctx, tile, src, &dst, cfg.prescreen_levels)?;
        match best_component(&pre) {
            Err(m) => {
                best_margin = best_margin.max(m * norm);
                continue;
            }
            Ok((_, _, m)) if m * norm < cfg.threshold => {
                best_margin = best_margin.max(m * norm);
                continue;
            }
            Ok(_) => {}
        }
        let full = sample_pairs(ctx, tile, src, &dst, cfg.levels)?;
        match best_component(&full) {
            Ok((component, sign, m)) if m * norm >= cfg.threshold => {
                return Ok(SignTile {
                    source: src.clone(),
                    target: dst,
                    component,
                    sign,
                    magnitude: m,
                    normalized: m * norm,
                    center_distance: dist,
                    pairs: full.pairs,
                    spacing: 1.0 / (cfg.levels - 1).max(1) as f64,
                    max_abs: full.max_abs,
                });
            }
            Ok((_, _, m)) => best_margin = best_margin.max(m * norm),
            Err(m) => best_margin = best_margin.max(m * norm),
        }
    }
    Err(Error::NoCandidateFound { best_margin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignPair {
    pub first: TileAddress,
    pub second: TileAddress,
    /// Guaranteed `sign_i (g_i - h_i) >= kappa * width` for `g` in the first
    /// tile and `h` in the second.
    pub kappa: f64,
    /// Smallest sampled `sign_i (g_i - h_i) / width` over all coordinates.
    pub sampled_gap: f64,
}

/// Two descendants of `addr`, `depth` levels down, separated in every
/// horizontal coordinate with the requested signs.
pub fn sign_pair_probe(
    tile: &BasicTile,
    addr: &TileAddress,
    signs: &[i8],
    depth: u32,
    samples: usize,
    seed: u64,
) -> Result<SignPair> {
    use crate::sampling::{stream, Halton};
    let h = tile.dim.horiz();
    if signs.len() != h {
        return Err(Error::DimMismatch { expected: h, got: signs.len() });
    }
    if signs.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
    }
    if depth < 2 {
        return Err(Error::DepthTooShallow(depth));
    }
    let hi_bits: Vec<i64> = signs.iter().map(|&s| (s > 0) as i64).collect();
    let lo_bits: Vec<i64> = hi_bits.iter().map(|b| 1 - b).collect();
    let first = descendant(addr, &vec![hi_bits; depth as usize]);
    let second = descendant(addr, &vec![lo_bits; depth as usize]);
    let kappa = 1.0 - 2f64.powi(1 - depth as i32);
    let w = addr.width();
    let mut halton = Halton::new(tile.dim.topdim(), &mut stream(seed, "sign-pair"));
    let mut gap = f64::INFINITY;
    for _ in 0..samples {
        let g = tile.point_in_tile(&first, &halton.next_point());
        let hh = tile.point_in_tile(&second, &halton.next_point());
        for i in 0..h {
            gap = gap.min(signs[i] as f64 * (g.y[i] - hh.y[i]) / w);
        }
    }
    Ok(SignPair { first, second, kappa, sampled_gap: gap })
}
