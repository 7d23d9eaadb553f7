//! `rrw`: rate regions of three-receiver broadcast channels.

mod manifest;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use rrw_core::bounds::{optimize_region, AuxChain, BoundError, BoundId, SearchConfig};
use rrw_core::channel::BroadcastChannel3;
use rrw_core::closed_form::{
    bec_frontier, gaussian_default_steps, gaussian_frontier, BecKind, ClosedFormError, Frontier,
    GaussianKind, BEC_GRID_STEP, GAUSSIAN_EXAMPLE,
};
use rrw_core::fme::{build_named_system, eliminate, private_split, substitute_var, FmeError, NAMED_SYSTEMS};
use rrw_core::region::{region_dominates, weights_2d, weights_3d, GeometryError, RegionApprox, DEFAULT_ANGLES};
use rrw_core::scheme::{synthesize, MessageRequirement};
use rrw_core::sim::{simulate, CodeSpec, SimError};

use manifest::RunManifest;

/// Tolerance for the support/boundary-point consistency check on every
/// region before it is written.
const REGION_CHECK_TOL: f64 = 1e-7;

#[derive(Debug)]
pub struct Failure {
    code: u8,
    err: anyhow::Error,
}

type Res<T> = Result<T, Failure>;

fn user(e: impl Display) -> Failure {
    Failure { code: 2, err: anyhow!("{e}") }
}

fn internal(e: impl Display) -> Failure {
    Failure { code: 3, err: anyhow!("internal error: {e}") }
}

fn from_bound(e: BoundError) -> Failure {
    match e {
        BoundError::Geometry(g) => from_geometry(g),
        other => user(other),
    }
}

fn from_geometry(e: GeometryError) -> Failure {
    internal(e)
}

fn from_closed(e: ClosedFormError) -> Failure {
    match e {
        ClosedFormError::Range(_) => user(e),
        ClosedFormError::Geometry(g) => from_geometry(g),
        ClosedFormError::Bound(b) => from_bound(b),
    }
}

fn from_sim(e: SimError) -> Failure {
    match e {
        SimError::Bound(b) => from_bound(b),
        other => user(other),
    }
}

fn from_fme(e: FmeError) -> Failure {
    user(e)
}

#[derive(Parser)]
#[command(name = "rrw", version, about = "Rate regions of three-receiver broadcast channels with degraded message sets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimise a bound over auxiliary distributions on a channel.
    Region(RegionArgs),
    /// Compare two bounds on one channel, or two saved regions.
    Compare(CompareArgs),
    /// Closed-form example regions.
    #[command(subcommand)]
    Example(ExampleCmd),
    /// Fourier-Motzkin derivations on the named rate systems.
    #[command(subcommand)]
    Fme(FmeCmd),
    /// Auxiliary structure for general message demands.
    #[command(subcommand)]
    Scheme(SchemeCmd),
    /// Monte-Carlo simulation of the indirect-decoding code.
    #[command(subcommand)]
    Sim(SimCmd),
}

#[derive(Args)]
struct SearchFlags {
    /// JSON search configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_levels: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    refine_iters: Option<usize>,
    /// Alphabet caps per auxiliary, e.g. `5,8`.
    #[arg(long, value_delimiter = ',')]
    caps: Option<Vec<usize>>,
    #[arg(long)]
    full_caps: bool,
    /// Restrict triples to U3 = U1.
    #[arg(long)]
    tie_u3_to_u1: bool,
    /// Number of weight directions for 2-D regions.
    #[arg(long, default_value_t = DEFAULT_ANGLES)]
    angles: usize,
    /// Angular step in degrees for 3-D regions.
    #[arg(long, default_value_t = 15.0)]
    step_deg: f64,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    bound: BoundId,
    #[arg(long)]
    channel: PathBuf,
    #[command(flatten)]
    search: SearchFlags,
    /// Output prefix; writes `<out>.csv`, `<out>.json`, `<out>.manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two saved region JSON files.
    #[arg(long, num_args = 1, conflicts_with_all = ["channel", "bound"])]
    region: Vec<PathBuf>,
    #[arg(long, requires = "bound")]
    channel: Option<PathBuf>,
    /// Two bounds evaluated on `--channel`.
    #[arg(long, num_args = 1)]
    bound: Vec<BoundId>,
    #[command(flatten)]
    search: SearchFlags,
    /// Differences up to this size count as ties.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExampleCmd {
    /// Product of binary erasure channels.
    Bec {
        #[arg(long)]
        kind: BecKind,
        #[arg(long, default_value_t = BEC_GRID_STEP)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_ANGLES)]
        angles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian product channel with power 1 and noise (0.4, 0.1, 0.1, 0.5, 0.1).
    Gaussian {
        #[arg(long)]
        kind: GaussianKind,
        /// Grid intervals per parameter; defaults depend on the kind.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ANGLES)]
        angles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FmeCmd {
    /// Eliminate variables from a named system, printing each step.
    Derive {
        #[arg(long)]
        system: String,
        #[arg(long, value_delimiter = ',', required = true)]
        eliminate: Vec<String>,
        /// Keep the raw private-rate variables instead of splitting R1.
        #[arg(long)]
        no_split: bool,
        /// Output prefix; writes `<out>.txt`, `<out>.json`, `<out>.manifest.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SchemeCmd {
    /// Auxiliary subsets, levels and decoding plan for the demanded sets.
    Synth {
        #[arg(long)]
        k: usize,
        /// Receivers demanding one message, e.g. `--demand 1,2`; repeatable.
        #[arg(long, required = true, num_args = 1)]
        demand: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Random-coding simulation at blocklength `n`.
    Run(SimArgs),
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    channel: PathBuf,
    /// JSON `{"dims": [|U1|, |U2|, |X|], "joint": [...]}` in row-major order.
    #[arg(long)]
    aux: PathBuf,
    #[arg(long)]
    r0: f64,
    #[arg(long)]
    s1: f64,
    #[arg(long)]
    s2: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AuxFile {
    dims: [usize; 3],
    joint: Vec<f64>,
}

fn read_input(path: &Path, manifest: &mut RunManifest) -> Res<String> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    manifest.add_input(path, text.as_bytes());
    Ok(text)
}

fn load_channel(path: &Path, manifest: &mut RunManifest) -> Res<BroadcastChannel3> {
    let text = read_input(path, manifest)?;
    BroadcastChannel3::from_json_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn load_aux(path: &Path, manifest: &mut RunManifest) -> Res<AuxChain> {
    let text = read_input(path, manifest)?;
    let f: AuxFile = serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    AuxChain::from_joint(f.dims, &f.joint)
        .map_err(|e| user(format!("{}: field `joint`: {e}", path.display())))
}

/// Defaults, then the config file, then explicit flags.
fn search_config(flags: &SearchFlags, manifest: &mut RunManifest) -> Res<SearchConfig> {
    let mut cfg = match &flags.config {
        Some(p) => {
            let text = read_input(p, manifest)?;
            serde_json::from_str::<SearchConfig>(&text).map_err(|e| user(format!("{}: {e}", p.display())))?
        }
        None => SearchConfig::default(),
    };
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.grid_levels {
        cfg.grid_levels = v;
    }
    if let Some(v) = flags.restarts {
        cfg.random_restarts = v;
    }
    if let Some(v) = flags.refine_iters {
        cfg.refine_iters = v;
    }
    if let Some(v) = &flags.caps {
        cfg.cardinality_caps = Some(v.clone());
    }
    cfg.full_caps |= flags.full_caps;
    cfg.tie_u3_to_u1 |= flags.tie_u3_to_u1;
    cfg.validate().map_err(from_bound)?;
    manifest.seed = Some(cfg.seed);
    Ok(cfg)
}

fn weights_for(dim: usize, flags: &SearchFlags) -> Res<Vec<(String, Vec<f64>)>> {
    match dim {
        2 => weights2(flags.angles),
        _ if flags.step_deg > 0.0 && flags.step_deg <= 90.0 => Ok(weights_3d(flags.step_deg)),
        _ => Err(user(format!("--step-deg {} not in (0, 90]", flags.step_deg))),
    }
}

fn weights2(angles: usize) -> Res<Vec<(String, Vec<f64>)>> {
    if !(2..=100_000).contains(&angles) {
        return Err(user(format!("--angles {angles} not in 2..=100000")));
    }
    Ok(weights_2d(angles))
}

fn checked(region: RegionApprox) -> Res<RegionApprox> {
    region.check_invariants(REGION_CHECK_TOL).map_err(internal)?;
    Ok(region)
}

fn pretty(v: &Value) -> Res<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(internal)
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes every artifact plus the manifest; nothing is written before all
/// results exist.
fn emit(out: Option<&Path>, artifacts: &[(&str, String)], manifest: RunManifest) -> Res<()> {
    let manifest = manifest.finish();
    match out {
        Some(prefix) => {
            for (ext, body) in artifacts {
                let p = with_ext(prefix, ext);
                fs::write(&p, body).map_err(|e| user(format!("{}: {e}", p.display())))?;
            }
            let p = with_ext(prefix, "manifest.json");
            let body = pretty(&serde_json::to_value(&manifest).map_err(internal)?)?;
            fs::write(&p, body).map_err(|e| user(format!("{}: {e}", p.display())))?;
        }
        None => {
            // Stdout carries the primary artifact; the manifest goes to stderr.
            print!("{}", artifacts[0].1);
            eprintln!("{}", serde_json::to_string(&manifest).map_err(internal)?);
        }
    }
    Ok(())
}

fn region_json(label: Value, cfg: Option<&SearchConfig>, region: &RegionApprox) -> Res<String> {
    pretty(&json!({ "source": label, "config": cfg, "region": region }))
}

fn cmd_region(a: RegionArgs, mut m: RunManifest) -> Res<()> {
    let ch = load_channel(&a.channel, &mut m)?;
    let cfg = search_config(&a.search, &mut m)?;
    let ws = weights_for(a.bound.dim(), &a.search)?;
    let region = checked(optimize_region(a.bound, &ch, &cfg, &ws).map_err(from_bound)?)?;
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("region_{}", a.bound)));
    let json = region_json(json!({ "bound": a.bound }), Some(&cfg), &region)?;
    emit(Some(&out), &[("json", json), ("csv", region.to_csv())], m)
}

/// Accepts a bare region or any object with a `region` field.
fn load_region(path: &Path, m: &mut RunManifest) -> Res<RegionApprox> {
    let text = read_input(path, m)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let inner = v.get("region").cloned().unwrap_or(v);
    let region: RegionApprox =
        serde_json::from_value(inner).map_err(|e| user(format!("{}: field `region`: {e}", path.display())))?;
    region.check_invariants(REGION_CHECK_TOL).map_err(|e| user(format!("{}: {e}", path.display())))?;
    Ok(region)
}

fn cmd_compare(a: CompareArgs, mut m: RunManifest) -> Res<()> {
    if !(a.margin >= 0.0) {
        return Err(user("--margin must be nonnegative"));
    }
    let (labels, ra, rb) = if !a.region.is_empty() {
        let [pa, pb] = <[PathBuf; 2]>::try_from(a.region).map_err(|_| user("--region needs exactly two files"))?;
        let ra = load_region(&pa, &mut m)?;
        let rb = load_region(&pb, &mut m)?;
        (json!([pa.display().to_string(), pb.display().to_string()]), ra, rb)
    } else {
        let [ba, bb] = <[BoundId; 2]>::try_from(a.bound).map_err(|_| user("--bound needs exactly two bounds"))?;
        let path = a.channel.ok_or_else(|| user("--channel is required with --bound"))?;
        if ba.dim() != bb.dim() {
            return Err(user(format!("{ba} and {bb} have different rate dimensions")));
        }
        let ch = load_channel(&path, &mut m)?;
        let cfg = search_config(&a.search, &mut m)?;
        let ws = weights_for(ba.dim(), &a.search)?;
        let (ra, rb) = rayon::join(|| optimize_region(ba, &ch, &cfg, &ws), || optimize_region(bb, &ch, &cfg, &ws));
        (json!([ba, bb]), checked(ra.map_err(from_bound)?)?, checked(rb.map_err(from_bound)?)?)
    };
    let report = region_dominates(&ra, &rb, a.margin).map_err(user)?;
    let verdict = match (report.a_exceeds.is_empty(), report.b_exceeds.is_empty()) {
        (true, true) => "equal",
        (false, true) => "a_dominates",
        (true, false) => "b_dominates",
        (false, false) => "incomparable",
    };
    let labels_for = |idx: &[usize]| -> Vec<&str> { idx.iter().map(|&i| ra.weight_labels[i].as_str()).collect() };
    let body = pretty(&json!({
        "compared": labels,
        "verdict": verdict,
        "a_exceeds_at": labels_for(&report.a_exceeds),
        "b_exceeds_at": labels_for(&report.b_exceeds),
        "report": report,
    }))?;
    emit(a.out.as_deref(), &[("json", body)], m)
}

fn frontier_artifacts(label: Value, f: Frontier) -> Res<Vec<(&'static str, String)>> {
    let region = checked(f.region)?;
    let body = pretty(&json!({ "source": label, "vertices": f.vertices, "region": region }))?;
    let mut vcsv = String::from("R0,R1\n");
    for [x, y] in &f.vertices {
        vcsv += &format!("{},{}\n", rrw_core::region::format_sig(*x), rrw_core::region::format_sig(*y));
    }
    Ok(vec![("json", body), ("csv", region.to_csv()), ("vertices.csv", vcsv)])
}

fn cmd_example(c: ExampleCmd, m: RunManifest) -> Res<()> {
    let (out, arts) = match c {
        ExampleCmd::Bec { kind, step, angles, out } => {
            let f = bec_frontier(kind, step, &weights2(angles)?).map_err(from_closed)?;
            let name = match kind {
                BecKind::Bzt => "bzt",
                BecKind::Capacity => "capacity",
            };
            let out = out.unwrap_or_else(|| PathBuf::from(format!("bec_{name}")));
            (out, frontier_artifacts(json!({ "example": "bec", "kind": name, "step": step }), f)?)
        }
        ExampleCmd::Gaussian { kind, steps, angles, out } => {
            let steps = steps.unwrap_or_else(|| gaussian_default_steps(kind));
            let (power, noise) = GAUSSIAN_EXAMPLE;
            let f = gaussian_frontier(kind, power, noise, steps, &weights2(angles)?).map_err(from_closed)?;
            let name = match kind {
                GaussianKind::Bzt => "bzt",
                GaussianKind::Inner => "inner",
            };
            let out = out.unwrap_or_else(|| PathBuf::from(format!("gaussian_{name}")));
            let label = json!({ "example": "gaussian", "kind": name, "steps": steps, "power": power, "noise": noise });
            (out, frontier_artifacts(label, f)?)
        }
    };
    emit(Some(&out), &arts, m)
}

fn cmd_fme(c: FmeCmd, m: RunManifest) -> Res<()> {
    let FmeCmd::Derive { system, eliminate: vars, no_split, out } = c;
    if !NAMED_SYSTEMS.contains(&system.as_str()) {
        return Err(user(format!("unknown system `{system}`; expected one of {}", NAMED_SYSTEMS.join(", "))));
    }
    let mut sys = build_named_system(&system).map_err(from_fme)?;
    let mut text = format!("system {system}: {} rows over {}\n", sys.rows.len(), sys.variables.join(", "));
    text += &sys.render();
    let mut steps = Vec::new();
    if let (false, Some((var, expr, shown))) = (no_split, private_split(&system)) {
        sys = substitute_var(&sys, var, &expr).map_err(from_fme)?;
        text += &format!("\nsubstitute {shown}: {} rows\n", sys.rows.len());
        text += &sys.render();
        steps.push(json!({ "substitute": shown, "rows": sys.rows.len() }));
    }
    for v in &vars {
        sys = eliminate(&sys, v).map_err(from_fme)?;
        text += &format!("\neliminate {v}: {} rows\n", sys.rows.len());
        text += &sys.render();
        steps.push(json!({ "eliminate": v, "rows": sys.rows.len() }));
    }
    let (pruned, implied) = sys.prune_implied();
    text += &format!("\nredundant: {} rows\n", implied.len());
    for r in &implied {
        text += &format!("{}  [implied by {}]\n", r.row, r.reason);
    }
    let grouped = pruned.render_grouped();
    text += &format!("\nresult: {} rows over {}\n", grouped.len(), pruned.variables.join(", "));
    for g in &grouped {
        text += g;
        text.push('\n');
    }
    let body = pretty(&json!({
        "system": system,
        "steps": steps,
        "redundant": implied,
        "grouped": grouped,
        "result": pruned.to_json(),
    }))?;
    match out {
        Some(p) => emit(Some(&p), &[("txt", text), ("json", body)], m),
        None => emit(None, &[("txt", text)], m),
    }
}

fn parse_demand(s: &str) -> Res<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| user(format!("--demand `{s}`: {e}"))))
        .collect()
}

fn cmd_scheme(c: SchemeCmd, m: RunManifest) -> Res<()> {
    let SchemeCmd::Synth { k, demand, out } = c;
    let demanded = demand.iter().map(|d| parse_demand(d)).collect::<Res<Vec<_>>>()?;
    let s = synthesize(&MessageRequirement { k, demanded }).map_err(user)?;
    let body = pretty(&serde_json::to_value(&s).map_err(internal)?)?;
    emit(out.as_deref(), &[("json", body)], m)
}

fn cmd_sim(c: SimCmd, mut m: RunManifest) -> Res<()> {
    let SimCmd::Run(a) = c;
    let ch = load_channel(&a.channel, &mut m)?;
    let aux = load_aux(&a.aux, &mut m)?;
    if a.trials == 0 {
        return Err(user("--trials must be positive"));
    }
    m.seed = Some(a.seed);
    let spec = CodeSpec::new(ch, aux, [a.r0, a.s1, a.s2], a.n, a.epsilon, a.seed).map_err(from_sim)?;
    let res = simulate(&spec, a.trials).map_err(from_sim)?;
    let body = pretty(&serde_json::to_value(&res).map_err(internal)?)?;
    emit(a.out.as_deref(), &[("json", body)], m)
}

fn init_threads() -> Res<()> {
    let Ok(v) = std::env::var("RRW_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| user(format!("RRW_THREADS=`{v}` is not a positive integer")))?;
    if n == 0 {
        return Err(user("RRW_THREADS must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(internal)
}

fn run(cli: Cli, started: Instant) -> Res<()> {
    init_threads()?;
    let args: Vec<String> = std::env::args().skip(1).collect();
    let m = |name: &str| RunManifest::new(name, args.clone(), started);
    match cli.cmd {
        Cmd::Region(a) => cmd_region(a, m("region")),
        Cmd::Compare(a) => cmd_compare(a, m("compare")),
        Cmd::Example(c) => cmd_example(c, m("example")),
        Cmd::Fme(c) => cmd_fme(c, m("fme derive")),
        Cmd::Scheme(c) => cmd_scheme(c, m("scheme synth")),
        Cmd::Sim(c) => cmd_sim(c, m("sim run")),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    match run(cli, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
