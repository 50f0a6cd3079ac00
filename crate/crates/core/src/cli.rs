//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::affinity::CostMatrices;
use crate::config::RunConfig;
use crate::error::Error;
use crate::geometry::{overlap_labels, RigidTransform};
use crate::io::{self, ResultRecord};
use crate::losses::{gradient_check_suite, DEFAULT_FD_STEP};
use crate::minibatch::{minibatch_gm, MiniBatchConfig};
use crate::ot::{fgm_solve, partial_ot_dykstra, pgm_proximal, sinkhorn, Marginals, TransportPlan};
use crate::pipeline::{attach_features, coarse_costs, register, FeatureProvider};
use crate::registration::{compute_metrics, RegistrationResult};
use crate::rng::derive_seed;
use crate::synth::{generate_pair, suite_seed, SceneConfig, Shape};

/// Finite-difference tolerance for `gradcheck`.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "isomatch", version, about = "Graph-matching transport solvers and rigid point-cloud registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scene pairs with ground truth.
    Gen(GenArgs),
    /// Solve a transport or graph-matching problem and write the plan.
    Solve(SolveArgs),
    /// Register one scene or cloud pair; prints a JSON line.
    Register(RegisterArgs),
    /// Register every scene in a directory; prints JSON lines and a summary.
    Bench(BenchArgs),
    /// Finite-difference check of the loss gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root seed; wins over `seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, default_value_t = 2000)]
    n_points: usize,
    #[arg(long, default_value_t = 0.005)]
    noise: f64,
    #[arg(long, default_value_t = Shape::GaussianBlobs)]
    shape: Shape,
    /// Number of scenes; scene i uses a seed derived from the root seed.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value = "scenes")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Sinkhorn,
    Partial,
    Pgm,
    Fgm,
    Minibatch,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, value_enum)]
    solver: SolverKind,
    /// Linear cost matrix file (sinkhorn, partial).
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Intra-P, intra-Q and cross affinity files (pgm, fgm).
    #[arg(long, requires_all = ["cq", "cpq"])]
    cp: Option<PathBuf>,
    #[arg(long)]
    cq: Option<PathBuf>,
    #[arg(long)]
    cpq: Option<PathBuf>,
    /// Scene sidecar; the coarse super-point problem is solved (fine level for minibatch).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Plan output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct RegisterArgs {
    #[arg(long, conflicts_with_all = ["p", "q"])]
    scene: Option<PathBuf>,
    #[arg(long, requires = "q")]
    p: Option<PathBuf>,
    #[arg(long, requires = "p")]
    q: Option<PathBuf>,
    /// Record wall-clock runtime instead of 0.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    dir: PathBuf,
    /// JSON-lines output file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    step: f64,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Solve(a) => solve(a, out),
        Command::Register(a) => register_cmd(a, out),
        Command::Bench(a) => bench(a, out, err),
        Command::Gradcheck(a) => gradcheck(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn existing(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::Usage(format!("no such file or directory: {}", path.display())))
    }
}

impl ConfigArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(existing(path)?)?,
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            cfg.set_pair(pair).map_err(|e| Failure::Usage(e.to_string()))?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn gen(a: GenArgs, out: &mut dyn Write) -> CliResult {
    for i in 0..a.count {
        let cfg = SceneConfig {
            n_points: a.n_points,
            shape: a.shape,
            overlap_target: a.overlap,
            noise_sigma: a.noise,
            seed: suite_seed(a.seed, i),
            ..SceneConfig::default()
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let scene = generate_pair(&cfg)?;
        let path = io::write_scene(&a.out, &format!("scene_{i:03}"), &scene, &cfg)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    solver: &'static str,
    rows: usize,
    cols: usize,
    mass: f64,
    iterations: usize,
    converged: bool,
    objective: Option<f64>,
}

fn summary(solver: &'static str, plan: &TransportPlan) -> SolveSummary {
    SolveSummary {
        solver,
        rows: plan.gamma.nrows(),
        cols: plan.gamma.ncols(),
        mass: plan.mass(),
        iterations: plan.iterations,
        converged: plan.converged,
        objective: plan.objective_trace.last().copied(),
    }
}

fn solve(a: SolveArgs, out: &mut dyn Write) -> CliResult {
    let cfg = a.config.load()?;
    let solver = &cfg.pipeline.solver;
    let mass = cfg.pipeline.mass;
    let scene = a.scene.as_deref().map(|p| existing(p).and_then(|p| Ok(io::read_scene(p)?))).transpose()?;

    let (gamma, record) = if a.solver == SolverKind::Minibatch {
        let (scene, _) = scene.ok_or_else(|| Failure::Usage("minibatch needs --scene".into()))?;
        let (p, q) = attach_features(&scene, &cfg.pipeline.features, cfg.seed)?;
        let eps_o = cfg.pipeline.inlier_thresh;
        let mask_p: Vec<bool> = overlap_labels(&scene.p, &scene.q, &scene.gt, eps_o)?.iter().map(|&l| l == 1).collect();
        let mask_q: Vec<bool> =
            overlap_labels(&scene.q, &scene.p, &scene.gt.inverse(), eps_o)?.iter().map(|&l| l == 1).collect();
        let mb = MiniBatchConfig {
            m: cfg.batch_size,
            k: cfg.batch_count,
            seed: cfg.seed,
            alpha: cfg.pipeline.alpha,
            solver: *solver,
            ..MiniBatchConfig::default()
        };
        let plan = minibatch_gm(&p, &q, &mask_p, &mask_q, &mb)?;
        let record = SolveSummary {
            solver: "minibatch",
            rows: plan.global_gamma.nrows(),
            cols: plan.global_gamma.ncols(),
            mass: plan.global_gamma.sum(),
            iterations: plan.k,
            converged: true,
            objective: None,
        };
        (plan.global_gamma, record)
    } else {
        let costs = match (&scene, &a.cp, &a.cost) {
            (Some((scene, _)), _, _) => {
                let (p, q) = attach_features(scene, &cfg.pipeline.features, cfg.seed)?;
                Some(coarse_costs(&p, &q, &cfg.pipeline)?.0)
            }
            (None, Some(cp), _) => {
                let read = |p: &Option<PathBuf>| -> CliResult<DMatrix<f64>> {
                    Ok(io::read_matrix(existing(p.as_deref().expect("required by clap"))?)?)
                };
                Some(CostMatrices::new(read(&Some(cp.clone()))?, read(&a.cq)?, read(&a.cpq)?, cfg.pipeline.alpha)?)
            }
            _ => None,
        };
        let linear = match (&costs, &a.cost) {
            (_, Some(path)) => Some(io::read_matrix(existing(path)?)?),
            (Some(c), None) => Some(c.cpq.clone()),
            (None, None) => None,
        };
        let (n, m) = match (&costs, &linear) {
            (Some(c), _) => (c.rows(), c.cols()),
            (None, Some(l)) => (l.nrows(), l.ncols()),
            (None, None) => return Err(Failure::Usage("give --cost, --cp/--cq/--cpq or --scene".into())),
        };
        let need_costs = || costs.as_ref().ok_or_else(|| Failure::Usage("pgm and fgm need --cp/--cq/--cpq or --scene".into()));
        let plan = match a.solver {
            SolverKind::Sinkhorn => ("sinkhorn", sinkhorn(linear.as_ref().expect("set above"), &Marginals::uniform(n, m)?, solver)?),
            SolverKind::Partial => (
                "partial",
                partial_ot_dykstra(linear.as_ref().expect("set above"), &Marginals::uniform_partial(n, m, mass)?, solver)?,
            ),
            SolverKind::Pgm => ("pgm", pgm_proximal(need_costs()?, &Marginals::uniform_partial(n, m, mass)?, solver)?),
            SolverKind::Fgm => ("fgm", fgm_solve(need_costs()?, &Marginals::uniform(n, m)?, solver)?),
            SolverKind::Minibatch => unreachable!("handled above"),
        };
        let record = summary(plan.0, &plan.1);
        (plan.1.gamma, record)
    };
    if let Some(path) = &a.out {
        io::write_matrix(&gamma, path)?;
    }
    out.write_all(io::to_json_line(&record)?.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct RegisterRecord {
    scene_id: String,
    rre_deg: Option<f64>,
    rte_m: Option<f64>,
    rmse_m: Option<f64>,
    rr: Option<bool>,
    n_corr: usize,
    n_inliers: usize,
    transform: [f64; 12],
    runtime_ms: u64,
}

fn elapsed_ms(start: Instant, timing: bool) -> u64 {
    if timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn register_cmd(a: RegisterArgs, out: &mut dyn Write) -> CliResult {
    let cfg = a.config.load()?;
    let start = Instant::now();
    let (scene_id, result) = match (&a.scene, &a.p, &a.q) {
        (Some(path), _, _) => {
            let (scene, meta) = io::read_scene(existing(path)?)?;
            let (p, q) = attach_features(&scene, &cfg.pipeline.features, cfg.seed)?;
            let mut result = register(&p, &q, &cfg.pipeline)?;
            result.metrics =
                Some(compute_metrics(&result.transform, &scene.gt, &scene.p, &scene.q, &scene.gt_corr, cfg.pipeline.mode)?);
            (meta.scene_id, result)
        }
        (None, Some(pp), Some(qp)) => {
            let (mut p, mut q) = (io::read_cloud(existing(pp)?)?, io::read_cloud(existing(qp)?)?);
            if p.features().is_none() || q.features().is_none() {
                let FeatureProvider::Descriptor { dim, radius } = cfg.pipeline.features else {
                    return Err(Failure::Usage("oracle features need a scene with ground truth".into()));
                };
                let s = derive_seed(cfg.seed, "features", 0);
                p = crate::synth::local_descriptor(&p, radius, dim, s)?;
                q = crate::synth::local_descriptor(&q, radius, dim, s)?;
            }
            ("pair".to_string(), register(&p, &q, &cfg.pipeline)?)
        }
        _ => return Err(Failure::Usage("give --scene or --p and --q".into())),
    };
    let m = result.metrics;
    let record = RegisterRecord {
        scene_id,
        rre_deg: m.map(|m| m.rre_deg),
        rte_m: m.map(|m| m.rte_m),
        rmse_m: m.map(|m| m.rmse_m),
        rr: m.map(|m| m.rr),
        n_corr: result.correspondences.len(),
        n_inliers: result.inlier_count(),
        transform: result.transform.to_array(),
        runtime_ms: elapsed_ms(start, a.timing),
    };
    out.write_all(io::to_json_line(&record)?.as_bytes())?;
    Ok(())
}

/// Registers one stored scene. A failed registration is scored as the
/// identity estimate with no correspondences.
fn bench_scene(path: &Path, cfg: &RunConfig, timing: bool) -> crate::error::Result<(ResultRecord, Option<String>)> {
    let start = Instant::now();
    let (scene, meta) = io::read_scene(path)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.seed = derive_seed(cfg.seed, &meta.scene_id, 0);
    let outcome = attach_features(&scene, &pipeline.features, pipeline.seed).and_then(|(p, q)| register(&p, &q, &pipeline));
    let (transform, n_corr, note) = match outcome {
        Ok(RegistrationResult { transform, correspondences, .. }) => (transform, correspondences.len(), None),
        Err(e) => (RigidTransform::identity(), 0, Some(format!("{}: {e}", meta.scene_id))),
    };
    let m = compute_metrics(&transform, &scene.gt, &scene.p, &scene.q, &scene.gt_corr, pipeline.mode)?;
    let record = ResultRecord {
        scene_id: meta.scene_id,
        rre_deg: m.rre_deg,
        rte_m: m.rte_m,
        rmse_m: m.rmse_m,
        rr: m.rr,
        n_corr,
        runtime_ms: elapsed_ms(start, timing),
    };
    Ok((record, note))
}

fn bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let cfg = a.config.load()?;
    let scenes = io::list_scenes(existing(&a.dir)?)?;
    if scenes.is_empty() {
        return Err(Failure::Usage(format!("no scenes in {}", a.dir.display())));
    }
    let mut results: Vec<(ResultRecord, Option<String>)> =
        scenes.par_iter().map(|p| bench_scene(p, &cfg, a.timing)).collect::<crate::error::Result<_>>()?;
    results.sort_by(|x, y| x.0.scene_id.cmp(&y.0.scene_id));
    let text: String = results.iter().map(|(r, _)| io::to_json_line(r)).collect::<crate::error::Result<_>>()?;
    match &a.out {
        Some(path) => std::fs::write(path, &text)?,
        None => out.write_all(text.as_bytes())?,
    }
    for note in results.iter().filter_map(|r| r.1.as_ref()) {
        writeln!(err, "warning: registration failed for {note}")?;
    }
    let records: Vec<&ResultRecord> = results.iter().map(|r| &r.0).collect();
    writeln!(err, "{}", summary_table(&records))?;
    Ok(())
}

/// RR in percent, then mean RRE and RTE over registered scenes (the usual
/// convention) and over all scenes.
pub fn summary_table(records: &[&ResultRecord]) -> String {
    let n = records.len().max(1) as f64;
    let ok: Vec<&&ResultRecord> = records.iter().filter(|r| r.rr).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let all_rre: Vec<f64> = records.iter().map(|r| r.rre_deg).collect();
    let all_rte: Vec<f64> = records.iter().map(|r| r.rte_m).collect();
    let ok_rre: Vec<f64> = ok.iter().map(|r| r.rre_deg).collect();
    let ok_rte: Vec<f64> = ok.iter().map(|r| r.rte_m).collect();
    format!(
        "scenes  RR%     RRE(deg)  RTE(m)    RRE|all   RTE|all\n{:<7} {:<7.2} {:<9.4} {:<9.5} {:<9.4} {:.5}",
        records.len(),
        100.0 * ok.len() as f64 / n,
        mean(&ok_rre),
        mean(&ok_rte),
        mean(&all_rre),
        mean(&all_rte),
    )
}

#[derive(Serialize)]
struct GradRecord {
    loss: &'static str,
    instances: usize,
    max_error: f64,
    pass: bool,
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> CliResult {
    if a.instances == 0 || !(a.step > 0.0) {
        return Err(Failure::Usage("instances and step must be positive".into()));
    }
    let mut all = true;
    for c in gradient_check_suite(a.instances, a.seed, a.step)? {
        let pass = c.max_error < GRADCHECK_TOL;
        all &= pass;
        let rec = GradRecord { loss: c.loss, instances: c.instances, max_error: c.max_error, pass };
        out.write_all(io::to_json_line(&rec)?.as_bytes())?;
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::invalid(format!("gradient check exceeded {GRADCHECK_TOL}"))))
    }
}
