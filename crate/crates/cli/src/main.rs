use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use qszego::atoms::{self, AtomSpec, HpScanConfig, Symbol, Template};
use qszego::battery::{self, BATTERIES};
use qszego::group::{GroupDim, GroupPoint, MultiIndex, SiegelPoint, Steps};
use qszego::kernel;
use qszego::report::{emit_report, BatteryResult, Report, RunConfig, Status};
use qszego::tiling::{self, BasicTile, SignSearchConfig, TileAddress};
use qszego::{Error, Quaternion};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "qszego", version, about = "Numerical verification of the quaternionic Cauchy-Szego kernel")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Normalization constant of the kernel.
    #[arg(long, global = true, allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the primary sample count of each battery.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Multiplies numerical guard tolerances, not pass limits.
    #[arg(long = "tol-scale", global = true)]
    tol_scale: Option<f64>,
    /// Directory for report.json, timings.json and CSV series.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the full JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Also write CSV series (needs --out).
    #[arg(long, global = true)]
    csv: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Group law and vector-field commutator checks.
    GroupAudit,
    /// Evaluate the kernel at a quaternion `w,x,y,z`, or at `(s, g, g')`;
    /// without arguments, run the oracle comparison.
    KernelEval {
        quaternion: Option<String>,
        #[arg(long)]
        s: Option<f64>,
        /// Flattened coordinates `y..., t...`.
        #[arg(long, allow_hyphen_values = true)]
        g: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        gp: Option<String>,
    },
    /// Translation, dilation and rotation invariance of the kernel.
    Invariance,
    /// Cauchy-Fueter, heat equation and subharmonicity.
    Regularity,
    /// Log-log decay slopes of the kernel and its derivatives.
    Decay {
        /// Exponents of a multi-index, comma separated.
        #[arg(long)]
        index: Option<String>,
    },
    /// Minimum of |K| on the unit sphere and its dilation consistency.
    MinSphere,
    /// Self-similar tiles: membership, children, audits, sign search.
    Tile {
        #[command(subcommand)]
        cmd: TileCmd,
    },
    /// Build, check and project atoms.
    Atom {
        #[command(subcommand)]
        cmd: AtomCmd,
    },
    /// Singular values of a discretized multiplier commutator.
    Commutator {
        /// `const`, `const:<value>`, `norm`, or `norm-shifted`.
        #[arg(long, default_value = "const")]
        symbol: String,
    },
    /// Every battery.
    All,
}

#[derive(Subcommand, Debug)]
enum TileCmd {
    /// Address of the tile at scale `j` containing a point.
    Locate {
        #[arg(long, allow_hyphen_values = true)]
        j: i32,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// The children of a tile, one scale down.
    Children {
        #[arg(long, allow_hyphen_values = true)]
        j: i32,
        /// `0`, or `a1,..,a4n-4;b1,b2,b3`.
        #[arg(long, allow_hyphen_values = true)]
        gamma: String,
    },
    /// Partition, self-similarity and ball sandwich checks.
    Audit,
    /// Find a tile on which one kernel component keeps its sign.
    SignSearch {
        #[arg(long, allow_hyphen_values = true)]
        j: Option<i32>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum AtomCmd {
    /// Print the JSON spec of a new atom.
    Make {
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        center: String,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Defaults to the smallest admissible order.
        #[arg(long)]
        alpha: Option<usize>,
        #[arg(long, default_value = "smooth")]
        template: String,
        #[arg(long, default_value_t = 200_000)]
        nodes: usize,
    },
    /// Support, size and moment checks of an atom file.
    Check {
        atom: PathBuf,
    },
    /// Project an atom file to a point of the upper half space.
    Project {
        atom: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        point: String,
    },
    /// Scan the L^p norm of the projection over heights.
    HpScan {
        atom: PathBuf,
        /// Values of eps / r^2, comma separated.
        #[arg(long)]
        eps: Option<String>,
    },
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> qszego::Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| usage(format!("cannot parse {v:?} in {s:?}"))))
        .collect()
}

fn parse_point(dim: GroupDim, s: &str) -> qszego::Result<GroupPoint> {
    if s.trim() == "0" {
        return Ok(GroupPoint::identity(dim));
    }
    let c: Vec<f64> = parse_list(s)?;
    if c.len() != dim.topdim() {
        return Err(Error::DimMismatch { expected: dim.topdim(), got: c.len() });
    }
    Ok(GroupPoint::from_coords(&c))
}

fn parse_gamma(dim: GroupDim, j: i32, s: &str) -> qszego::Result<TileAddress> {
    if s.trim() == "0" {
        return Ok(TileAddress::origin(dim, j));
    }
    let (a, b) = s.split_once(';').ok_or_else(|| usage("gamma must look like a1,..;b1,b2,b3"))?;
    let a: Vec<i64> = parse_list(a)?;
    let b: Vec<i64> = parse_list(b)?;
    if a.len() != dim.horiz() || b.len() != 3 {
        return Err(usage(format!("gamma needs {} horizontal and 3 vertical entries", dim.horiz())));
    }
    Ok(TileAddress { j, a, b: [b[0], b[1], b[2]] })
}

fn load_atom(path: &PathBuf, dim: GroupDim) -> qszego::Result<atoms::Atom> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let spec: AtomSpec = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    atoms::make_atom(dim, spec)
}

fn build_config(g: &Global) -> qszego::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = g.n {
        cfg.n = v;
    }
    if let Some(v) = g.c {
        cfg.c = v;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if g.samples.is_some() {
        cfg.samples = g.samples;
    }
    if let Some(v) = g.tol_scale {
        cfg.tol_scale = v;
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    if g.out.is_some() {
        cfg.out = g.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Outcome {
    Report(Report, BTreeMap<String, f64>),
    Value(serde_json::Value, bool),
}

fn run_batteries(cfg: &mut RunConfig, names: &[&str]) -> qszego::Result<Outcome> {
    cfg.batteries = names.iter().map(|s| s.to_string()).collect();
    let mut results = Vec::new();
    let mut timings = BTreeMap::new();
    for name in names {
        let start = Instant::now();
        let r = battery::run_battery(name, cfg)?;
        let secs = start.elapsed().as_secs_f64();
        eprintln!("{:<18} {:<4} {:>8.2}s  {}", r.name, r.status, secs, failing(&r));
        timings.insert(name.to_string(), secs);
        results.push(r);
    }
    Ok(Outcome::Report(Report::new(cfg.clone(), results), timings))
}

fn failing(r: &BatteryResult) -> String {
    r.checks.iter().filter(|c| !c.pass).map(|c| format!("{}={:e}", c.name, c.value)).collect::<Vec<_>>().join(" ")
}

fn single(cfg: &mut RunConfig, r: BatteryResult) -> Outcome {
    cfg.batteries = vec![r.name.clone()];
    Outcome::Report(Report::new(cfg.clone(), vec![r]), BTreeMap::new())
}

fn execute(cmd: Cmd, cfg: &mut RunConfig) -> qszego::Result<Outcome> {
    let dim = GroupDim::new(cfg.n)?;
    let ctx = battery::kernel_context(cfg, cfg.n)?;
    Ok(match cmd {
        Cmd::GroupAudit => run_batteries(cfg, &["group-law", "field-commutators"])?,
        Cmd::KernelEval { quaternion: Some(q), .. } => {
            let v: Vec<f64> = parse_list(&q)?;
            if v.len() != 4 {
                return Err(usage("a quaternion has four components"));
            }
            let xi = Quaternion::new(v[0], v[1], v[2], v[3]);
            let s = kernel::s_quat(&ctx, xi)?;
            let o = kernel::s_oracle(&ctx, xi)?;
            Outcome::Value(json!({ "argument": v, "value": s.to_array(), "oracle": o.to_array(), "difference": (s - o).norm() }), true)
        }
        Cmd::KernelEval { quaternion: None, s: Some(s), g, gp } => {
            let g = parse_point(dim, g.as_deref().unwrap_or("0"))?;
            let gp = parse_point(dim, gp.as_deref().unwrap_or("0"))?;
            let k = kernel::kernel_upper(&ctx, &SiegelPoint::new(s, g), &gp)?;
            Outcome::Value(json!({ "s": s, "value": k.to_array(), "modulus": k.norm() }), true)
        }
        Cmd::KernelEval { .. } => run_batteries(cfg, &["kernel-oracle"])?,
        Cmd::Invariance => run_batteries(cfg, &["invariance"])?,
        Cmd::Regularity => run_batteries(cfg, &["regularity", "subharmonicity"])?,
        Cmd::Decay { index: Some(idx) } => {
            let e: Vec<u16> = parse_list(&idx)?;
            if e.len() != dim.topdim() {
                return Err(Error::DimMismatch { expected: dim.topdim(), got: e.len() });
            }
            let index = MultiIndex(e);
            let rays = kernel::ray_directions(dim, cfg.samples_or(16), cfg.seed);
            let radii: Vec<f64> = (0..7).map(|k| 10f64.powf(1.0 + k as f64 / 3.0)).collect();
            let fit = kernel::decay_exponent(&ctx, &index, &radii, &rays, Steps::uniform(1e-3))?;
            let want = -(dim.q_f64() + index.hom_degree() as f64);
            Outcome::Value(json!({ "index": index.0, "fit": fit, "expected": want }), true)
        }
        Cmd::Decay { index: None } => run_batteries(cfg, &["decay"])?,
        Cmd::MinSphere => run_batteries(cfg, &["min-sphere"])?,
        Cmd::Tile { cmd } => {
            let tile = BasicTile::new(dim);
            match cmd {
                TileCmd::Locate { j, point } => {
                    let g = parse_point(dim, &point)?;
                    let addr = tile.locate(&g, j)?;
                    Outcome::Value(json!({ "address": addr }), true)
                }
                TileCmd::Children { j, gamma } => {
                    let addr = parse_gamma(dim, j, &gamma)?;
                    let kids = tiling::children(dim, &addr);
                    Outcome::Value(json!({ "parent": addr, "count": kids.len(), "children": kids }), true)
                }
                TileCmd::Audit => run_batteries(cfg, &["tiling"])?,
                TileCmd::SignSearch { j: Some(j), gamma } => {
                    let addr = parse_gamma(dim, j, gamma.as_deref().unwrap_or("0"))?;
                    match tiling::sign_tile_search(&ctx, &tile, &addr, &SignSearchConfig::default()) {
                        Ok(t) => Outcome::Value(json!({ "sign_tile": t }), true),
                        Err(Error::NoCandidateFound { best_margin }) => {
                            Outcome::Value(json!({ "sign_tile": null, "best_margin": best_margin }), false)
                        }
                        Err(e) => return Err(e),
                    }
                }
                TileCmd::SignSearch { j: None, .. } => run_batteries(cfg, &["sign-search"])?,
            }
        }
        Cmd::Atom { cmd } => match cmd {
            AtomCmd::Make { center, radius, p, alpha, template, nodes } => {
                let template = match template.as_str() {
                    "smooth" => Template::Smooth,
                    "half-ball" => Template::HalfBall,
                    "constant" => Template::Constant,
                    other => return Err(usage(format!("unknown template {other:?}"))),
                };
                let alpha = alpha.unwrap_or_else(|| atoms::min_alpha(dim, p));
                let spec = AtomSpec::new(parse_point(dim, &center)?, radius, p, alpha, cfg.seed)
                    .with_template(template)
                    .with_nodes(nodes);
                let atom = atoms::make_atom(dim, spec)?;
                Outcome::Value(serde_json::to_value(&atom.spec).expect("spec serializes"), true)
            }
            AtomCmd::Check { atom } => {
                let atom = load_atom(&atom, dim)?;
                let chk = atoms::check_atom(&atom, cfg.samples_or(20_000));
                let pass = chk.pass;
                Outcome::Value(json!({ "atom": atom.spec, "check": chk }), pass)
            }
            AtomCmd::Project { atom, s, point } => {
                let atom = load_atom(&atom, dim)?;
                let at = SiegelPoint::new(s, parse_point(dim, &point)?);
                let pr = atoms::project_atom_with_error(&ctx, &atom, &at)?;
                Outcome::Value(json!({ "value": pr.value.to_array(), "error": pr.error }), true)
            }
            AtomCmd::HpScan { atom, eps } => {
                let atom = load_atom(&atom, dim)?;
                let mut sc = HpScanConfig { seed: cfg.seed, ..HpScanConfig::default() };
                if let Some(e) = eps {
                    sc.eps_factors = parse_list(&e)?;
                }
                let rows = atoms::hp_scan(&ctx, &atom, &sc)?;
                let ok = rows.iter().all(|r| !r.tail_dominates);
                Outcome::Value(json!({ "rows": rows }), ok)
            }
        },
        Cmd::Commutator { symbol } => {
            let sym = Symbol::parse(&symbol)?;
            single(cfg, battery::commutator_for(cfg, sym)?)
        }
        Cmd::All => run_batteries(cfg, &BATTERIES)?,
    })
}

fn finish(out: Outcome, g: &Global, cfg: &RunConfig) -> qszego::Result<ExitCode> {
    match out {
        Outcome::Report(report, timings) => {
            if let Some(dir) = &cfg.out {
                for p in emit_report(&report, &timings, dir, g.csv)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            if g.json || cfg.out.is_none() {
                print!("{}", report.to_json());
            }
            eprintln!("overall: {}", report.status);
            Ok(if report.status == Status::Fail { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Outcome::Value(v, ok) => {
            let text = serde_json::to_string_pretty(&v).expect("value serializes") + "\n";
            match &cfg.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
                    let path = dir.join("result.json");
                    std::fs::write(&path, &text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                    eprintln!("wrote {}", path.display());
                    if g.json {
                        print!("{text}");
                    }
                }
                None => print!("{text}"),
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(&cli.global).and_then(|mut cfg| {
        if let Some(t) = cfg.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| usage(format!("thread pool: {e}")))?;
        }
        let out = execute(cli.cmd, &mut cfg)?;
        finish(out, &cli.global, &cfg)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::DimMismatch { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
