//! `liftctl`: simulate lifted control systems, run property checks, test the
//! rank condition, and plan or verify (ε, T)-chains.

pub mod definition;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use liftctl_core::fields::{check_bracket_identity, check_pi_related, JacobianMode};
use liftctl_core::flow::{check_flow_formula, check_invariance};
use liftctl_core::liealg::{lifted_rank_at, rank_at, RankReport, DEFAULT_MAX_DEPTH};
use liftctl_core::planner::{plan_chain, verify_chain, Chain, ChainOptions, ChainReport};
use liftctl_core::{integrate_base, integrate_lifted, AffineSystem, ControlSignal, Error, Manifold, TangentPoint, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use definition::{Loaded, SystemDefinition};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or definition files; exit code 2.
    Usage(String),
    /// Domain, integration, or planning failures; exit code 1.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "liftctl", version, about = "Complete lifts of affine control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the base or lifted system and write the trajectory.
    Simulate(SimulateArgs),
    /// Run a property-check suite and print a JSON report.
    Check(CheckArgs),
    /// Plan an (eps, T)-chain, or verify an existing one.
    Chain(ChainArgs),
    /// Rank of the bracket family and of its lift at a point.
    Larc(LarcArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// System definition file.
    pub definition: PathBuf,
    /// Initial base point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Piecewise-constant control: `duration:u1,u2;duration:u1,u2;...`.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["u", "duration"])]
    pub control: Option<String>,
    /// Constant control value, used with --duration.
    #[arg(long, allow_hyphen_values = true, requires = "duration")]
    pub u: Option<String>,
    /// Duration of a constant control (zero control if --u is absent).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Initial fiber vector; integrates the lifted system.
    #[arg(long, allow_hyphen_values = true)]
    pub lifted: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, value_enum, default_value_t = TrajectoryFormat::Csv)]
    pub format: TrajectoryFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TrajectoryFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lift,
    Flow,
    Invariance,
    Rank,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    pub definition: PathBuf,
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Number of random sample points or tuples.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChainArgs {
    pub definition: PathBuf,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "verify_only")]
    pub source_x: Option<String>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "verify_only")]
    pub source_v: Option<String>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "verify_only")]
    pub target_x: Option<String>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "verify_only")]
    pub target_v: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long = "T", default_value_t = 0.5)]
    pub min_duration: f64,
    #[arg(long)]
    pub max_legs: Option<usize>,
    /// Write the chain here instead of embedding it in the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Verify this chain file instead of planning.
    #[arg(long)]
    pub verify_only: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LarcArgs {
    pub definition: PathBuf,
    /// Base point; a seeded random point if absent.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// Fiber vector for the lifted rank; a seeded random vector if absent.
    #[arg(long, allow_hyphen_values = true)]
    pub tangent: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub depth: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses and runs a command line. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Check(a) => check(a),
        Command::Chain(a) => chain(a),
        Command::Larc(a) => larc(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("liftctl: {e}");
            e.exit_code()
        }
    }
}

pub fn parse_vector(text: &str, what: &str) -> Result<Vector, CliError> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("{what}: {e} in {text:?}")))?;
    Ok(Vector::from_vec(values))
}

/// Parses `duration:u1,u2;duration:u1,u2`.
pub fn parse_control(text: &str, channels: usize) -> Result<ControlSignal, CliError> {
    let mut sig = ControlSignal::empty(channels);
    for (i, seg) in text.split(';').filter(|s| !s.trim().is_empty()).enumerate() {
        let (d, u) = seg
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("control segment {i}: expected duration:values, got {seg:?}")))?;
        let duration: f64 = d
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("control segment {i}: duration: {e}")))?;
        let value = parse_vector(u, &format!("control segment {i}"))?;
        if value.len() != channels {
            return Err(CliError::Usage(format!("control segment {i}: expected {channels} values, got {}", value.len())));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(CliError::Usage(format!("control segment {i}: duration must be positive")));
        }
        sig.push(duration, value.as_slice().to_vec());
    }
    Ok(sig)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Domain(format!("stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    let loaded = SystemDefinition::load(&a.definition)?;
    let sys = &loaded.system;
    let x0 = parse_vector(&a.x0, "--x0")?;
    let control = match (&a.control, &a.u, a.duration) {
        (Some(c), _, _) => parse_control(c, sys.channels())?,
        (None, u, Some(d)) => {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(CliError::Usage(format!("--duration: must be non-negative, got {d}")));
            }
            let value = match u {
                Some(u) => parse_vector(u, "--u")?,
                None => Vector::zeros(sys.channels()),
            };
            if value.len() != sys.channels() {
                return Err(CliError::Usage(format!("--u: expected {} values, got {}", sys.channels(), value.len())));
            }
            if d == 0.0 {
                ControlSignal::empty(sys.channels())
            } else {
                ControlSignal::constant(value.as_slice(), d)
            }
        }
        (None, _, None) => return Err(CliError::Usage("one of --control or --duration is required".into())),
    };
    let step = a.step.unwrap_or(loaded.step);
    let traj = match &a.lifted {
        Some(v0) => integrate_lifted(sys, &TangentPoint::new(x0, parse_vector(v0, "--lifted")?), &control, step)?,
        None => integrate_base(sys, &x0, &control, step)?,
    };
    let text = match a.format {
        TrajectoryFormat::Csv => traj.to_csv(),
        TrajectoryFormat::Json => to_json(&traj),
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct CheckEntry {
    name: String,
    deviation: f64,
    tolerance: f64,
    passed: bool,
}

impl CheckEntry {
    fn new(name: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        CheckEntry { name: name.into(), deviation, tolerance, passed: deviation <= tolerance }
    }
}

#[derive(Serialize)]
struct CheckReport {
    suite: Suite,
    seed: u64,
    samples: usize,
    checks: Vec<CheckEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_rank: Option<RankReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lifted_rank: Option<RankReport>,
    passed: bool,
}

const LIFT_ANALYTIC_TOL: f64 = 1e-10;
const LIFT_FD_TOL: f64 = 1e-4;
const FLOW_FLAT_TOL: f64 = 1e-6;
const FLOW_SPHERE_TOL: f64 = 1e-4;
const INVARIANCE_TOL: f64 = 1e-5;
const FLOW_HORIZON: f64 = 2.0;

fn random_point(rng: &mut ChaCha8Rng, m: &Manifold) -> Vector {
    match m {
        Manifold::Flat { dim } => Vector::from_fn(*dim, |_, _| rng.random_range(-1.0..1.0)),
        Manifold::Sphere2 => loop {
            let c = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            if c.norm() > 0.2 && c.norm() <= 1.0 {
                break c.normalize();
            }
        },
    }
}

fn random_tangent(rng: &mut ChaCha8Rng, m: &Manifold) -> TangentPoint {
    let x = random_point(rng, m);
    let w = Vector::from_fn(m.ambient_dim(), |_, _| rng.random_range(-1.0..1.0));
    let v = m.project_tangent(&x, &w).expect("sampled point is on the manifold");
    TangentPoint::new(x, v)
}

fn random_control(rng: &mut ChaCha8Rng, sys: &AffineSystem, total: f64) -> ControlSignal {
    let k = rng.random_range(1..=3);
    let mut sig = ControlSignal::empty(sys.channels());
    for _ in 0..k {
        let value = sys
            .bounds()
            .iter()
            .map(|&(lo, hi)| {
                let (lo, hi) = (lo.max(-1.0), hi.min(1.0));
                if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect();
        sig.push(total / k as f64, value);
    }
    sig
}

fn check(a: &CheckArgs) -> Result<i32, CliError> {
    let loaded = SystemDefinition::load(&a.definition)?;
    if a.samples == 0 {
        return Err(CliError::Usage("--samples: must be at least 1".into()));
    }
    let report = run_suite(&loaded, a.suite, a.samples)?;
    emit(a.out.as_deref(), &to_json(&report))?;
    Ok(if report.passed { 0 } else { 1 })
}

fn run_suite(loaded: &Loaded, suite: Suite, samples: usize) -> Result<CheckReport, CliError> {
    let sys = &loaded.system;
    let m = *sys.manifold();
    let h = loaded.step;
    let mut rng = ChaCha8Rng::seed_from_u64(loaded.seed);
    let points: Vec<TangentPoint> = (0..samples).map(|_| random_tangent(&mut rng, &m)).collect();
    let fields = sys.fields();
    let mut checks = Vec::new();
    let (mut base_rank, mut lifted_rank) = (None, None);
    match suite {
        Suite::Lift => {
            for (i, f) in fields.iter().enumerate() {
                checks.push(CheckEntry::new(format!("pi_related X{i}"), check_pi_related(f, &points), LIFT_ANALYTIC_TOL));
            }
            for i in 0..fields.len() {
                for j in i + 1..fields.len() {
                    let analytic = fields[i].jacobian_mode() == JacobianMode::Analytic
                        && fields[j].jacobian_mode() == JacobianMode::Analytic;
                    let tol = if analytic { LIFT_ANALYTIC_TOL } else { LIFT_FD_TOL };
                    let dev = check_bracket_identity(&fields[i], &fields[j], &points);
                    checks.push(CheckEntry::new(format!("bracket_identity [X{i},X{j}]"), dev, tol));
                }
            }
        }
        Suite::Flow => {
            let tol = if m.is_flat() { FLOW_FLAT_TOL } else { FLOW_SPHERE_TOL };
            for (k, p) in points.iter().enumerate() {
                let u = random_control(&mut rng, sys, FLOW_HORIZON);
                let dev = check_flow_formula(sys, &p.x, &p.v, &u, h)?;
                checks.push(CheckEntry::new(format!("flow_formula sample {k}"), dev, tol));
            }
        }
        Suite::Invariance => {
            for (k, p) in points.iter().enumerate() {
                let v_sig = random_control(&mut rng, sys, 1.0);
                let s = if k == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
                let u_sig = random_control(&mut rng, sys, 1.0);
                let t = rng.random_range(0.0..1.0);
                let (b, f) = check_invariance(sys, &p.x, s, &v_sig, t, &u_sig, h)?;
                checks.push(CheckEntry::new(format!("invariance base tuple {k}"), b, INVARIANCE_TOL));
                checks.push(CheckEntry::new(format!("invariance fiber tuple {k}"), f, INVARIANCE_TOL));
            }
        }
        Suite::Rank => {
            let p = &points[0];
            let base = rank_at(&fields, &p.x, DEFAULT_MAX_DEPTH, &m)?;
            let lifted = lifted_rank_at(&fields, p, DEFAULT_MAX_DEPTH, &m)?;
            let n = m.intrinsic_dim();
            checks.push(CheckEntry::new("lifted rank minus n", lifted.rank as f64 - n as f64, 0.0));
            base_rank = Some(base);
            lifted_rank = Some(lifted);
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(CheckReport { suite, seed: loaded.seed, samples, checks, base_rank, lifted_rank, passed })
}

#[derive(Serialize)]
struct ChainOutput<'a> {
    verified: bool,
    legs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    report: &'a ChainReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    chain: Option<&'a Chain>,
}

fn chain(a: &ChainArgs) -> Result<i32, CliError> {
    let loaded = SystemDefinition::load(&a.definition)?;
    let sys = &loaded.system;
    if let Some(path) = &a.verify_only {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let chain: Chain = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Usage(format!("{origin}: {path}: {}", e.into_inner()))
        })?;
        let report = verify_chain(sys, &loaded.metric, &chain);
        let out = ChainOutput { verified: report.passed, legs: chain.legs.len(), error: None, report: &report, chain: None };
        emit(None, &to_json(&out))?;
        return Ok(if report.passed { 0 } else { 1 });
    }

    let point = |x: &Option<String>, v: &Option<String>, what: &str| -> Result<TangentPoint, CliError> {
        let x = parse_vector(x.as_deref().unwrap_or_default(), &format!("--{what}-x"))?;
        let v = parse_vector(v.as_deref().unwrap_or_default(), &format!("--{what}-v"))?;
        Ok(TangentPoint::new(x, v))
    };
    let source = point(&a.source_x, &a.source_v, "source")?;
    let target = point(&a.target_x, &a.target_v, "target")?;
    let oracle = loaded.oracle()?;
    let opts = ChainOptions {
        epsilon: a.eps,
        min_duration: a.min_duration,
        max_legs: a.max_legs,
        step: loaded.step,
        seed: loaded.seed,
    };
    let (chain, error) = match plan_chain(sys, &oracle, &loaded.metric, &source, &target, &opts) {
        Ok(c) => (c, None),
        Err(Error::PlanningBudget { max_legs, partial }) => {
            (*partial, Some(format!("chain planning exceeded {max_legs} legs; partial chain attached")))
        }
        Err(e) => return Err(e.into()),
    };
    let report = verify_chain(sys, &loaded.metric, &chain);
    if let Some(path) = &a.out {
        emit(Some(path), &to_json(&chain))?;
    }
    let verified = report.passed && error.is_none();
    let out = ChainOutput {
        verified,
        legs: chain.legs.len(),
        error: error.clone(),
        report: &report,
        chain: if a.out.is_none() { Some(&chain) } else { None },
    };
    emit(None, &to_json(&out))?;
    if let Some(e) = error {
        eprintln!("liftctl: {e}");
    }
    Ok(if verified { 0 } else { 1 })
}

#[derive(Serialize)]
struct LarcOutput {
    n: usize,
    depth: usize,
    larc: bool,
    base: RankReport,
    lifted: RankReport,
}

fn larc(a: &LarcArgs) -> Result<i32, CliError> {
    let loaded = SystemDefinition::load(&a.definition)?;
    let sys = &loaded.system;
    let m = *sys.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(loaded.seed);
    let sample = random_tangent(&mut rng, &m);
    let x = match &a.point {
        Some(p) => parse_vector(p, "--point")?,
        None => sample.x.clone(),
    };
    let v = match &a.tangent {
        Some(t) => parse_vector(t, "--tangent")?,
        None if a.point.is_none() => sample.v,
        None => {
            let w = Vector::from_fn(m.ambient_dim(), |_, _| rng.random_range(-1.0..1.0));
            m.project_tangent(&x, &w)?
        }
    };
    let fields = sys.fields();
    let base = rank_at(&fields, &x, a.depth, &m)?;
    let lifted = lifted_rank_at(&fields, &TangentPoint::new(x, v), a.depth, &m)?;
    let n = m.intrinsic_dim();
    let out = LarcOutput { n, depth: a.depth, larc: base.rank == n, base, lifted };
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(if out.larc { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_spec_parses() {
        let sig = parse_control("1.5:1,0;0.5:-1,2", 2).unwrap();
        assert_eq!(sig.segments().len(), 2);
        assert_eq!(sig.total_duration(), 2.0);
        assert_eq!(sig.segments()[1].value, vec![-1.0, 2.0]);
        assert!(parse_control("1:1", 2).is_err());
        assert!(parse_control("0:1", 1).is_err());
        assert!(parse_control("x:1", 1).is_err());
    }

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vector("1, -2.5,3e-1", "v").unwrap(), Vector::from_column_slice(&[1.0, -2.5, 0.3]));
        assert!(matches!(parse_vector("1,,2", "v"), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_suite_is_usage_error() {
        assert_eq!(run(["liftctl", "check", "missing.json", "--suite", "bogus"]), 2);
        assert_eq!(run(["liftctl", "frobnicate"]), 2);
    }
}
