//! `vaxis`: forward/inverse kinematics, boundary sweeps and placement optimization.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 malformed input,
//! 3 target out of reach (original IK), 4 optimizer did not reach Optimal.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vaxis_core::geometry::{euler_to_frame, frame_to_euler, EulerPose, Frame};
use vaxis_core::ik::{ik_original, wcp_target_from_tcp, IkOutcome};
use vaxis_core::placement::{PlacementProblem, VARIABLE_NAMES};
use vaxis_core::robot::{Configuration, Joints, RobotModel, VirtualJoints};
use vaxis_core::scene::{Scene, SweepConfig};
use vaxis_core::solver::{minimize, Method, SolveReport, SolverOptions, Status};
use vaxis_core::virtual_ik::{ik_virtual, write_sweep_csv, SmoothingParams};

#[derive(Parser)]
#[command(name = "vaxis", version, about = "Virtual-axis kinematics for 6R robots with a spherical wrist")]
struct Cli {
    /// Robot model JSON (default: the built-in 315/365 mm arm).
    #[arg(long, global = true)]
    robot: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward kinematics; prints the WCP and TCP frames.
    Fk {
        /// Insert the prismatic joint after joint 3; values are then q1 q2 q3 v q4 q5 q6.
        #[arg(long = "virtual")]
        virtual_chain: bool,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
        /// Joint values in rad (v in mm).
        #[arg(allow_negative_numbers = true, required = true)]
        values: Vec<f64>,
    },
    /// Inverse kinematics for a frame given as x y z alpha beta gamma (mm, rad, ZYX Euler).
    Ik {
        /// Configuration index 0..7 (bit 0 shoulder back, bit 1 elbow down, bit 2 q5 < 0).
        #[arg(short, long, default_value_t = 0)]
        configuration: u8,
        /// Solve for the virtual robot; always succeeds and reports v.
        #[arg(long = "virtual")]
        virtual_chain: bool,
        /// The frame is the TCP rather than the WCP.
        #[arg(long)]
        tcp: bool,
        /// Disable the elbow smoothing patch (virtual IK only).
        #[arg(long)]
        no_smoothing: bool,
        #[arg(long)]
        json: bool,
        #[arg(allow_negative_numbers = true, required = true)]
        frame: Vec<f64>,
    },
    /// Moves the TCP along a line and writes joint values per sample.
    Sweep {
        /// Sweep config JSON; all fields optional.
        config: Option<PathBuf>,
        /// Overrides the sample count of the config.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "vaxis-out")]
        out_dir: PathBuf,
    },
    /// Optimizes the box corner frame of a scene.
    Optimize {
        scene: PathBuf,
        /// Overrides the solver method of the scene.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Extra attempts from randomly perturbed starts when a solve is not Optimal.
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        /// Seed for the restart perturbations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "vaxis-out")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sqp,
    Al,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Sqp => Method::Sqp,
            MethodArg::Al => Method::AugmentedLagrangian,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn bad_input(e: impl Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn write_failed(e: impl Display) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

fn usage_error(message: String) -> ! {
    Cli::command().error(ErrorKind::WrongNumberOfValues, message).exit()
}

fn load_robot(path: &Option<PathBuf>) -> Result<RobotModel, Failure> {
    match path {
        None => Ok(RobotModel::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| bad_input(format!("{}: {e}", p.display())))?;
            RobotModel::from_json(&text).map_err(|e| bad_input(format!("{}: {e}", p.display())))
        }
    }
}

fn print_frame(label: &str, f: &Frame) {
    let p = f.position;
    println!("{label} position  {:.6} {:.6} {:.6}", p.x, p.y, p.z);
    for (i, row) in f.rotation.rows().iter().enumerate() {
        let head = if i == 0 { "rotation" } else { "" };
        println!("{label} {head:>8}  {:.9} {:.9} {:.9}", row[0], row[1], row[2]);
    }
    if let Ok(e) = frame_to_euler(f) {
        println!("{label} zyx euler {:.9} {:.9} {:.9}", e.alpha, e.beta, e.gamma);
    }
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(write_failed)?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct FkOutput {
    joints: Vec<f64>,
    wcp: Frame,
    tcp: Frame,
}

fn cmd_fk(model: &RobotModel, virtual_chain: bool, json: bool, values: &[f64]) -> Result<u8, Failure> {
    let want = if virtual_chain { 7 } else { 6 };
    if values.len() != want {
        usage_error(format!("fk expects {want} joint values, got {}", values.len()));
    }
    let (wcp, tcp) = if virtual_chain {
        let qt = VirtualJoints::from_chain_order(values.try_into().expect("length checked"));
        (model.fk_virtual_wcp(&qt), model.fk_virtual_tcp(&qt))
    } else {
        let q = Joints(values.try_into().expect("length checked"));
        (model.fk_wcp(&q), model.fk_tcp(&q))
    };
    if json {
        print_json(&FkOutput { joints: values.to_vec(), wcp, tcp })?;
    } else {
        print_frame("WCP", &wcp);
        print_frame("TCP", &tcp);
    }
    Ok(0)
}

#[derive(Serialize)]
struct IkOutput {
    configuration: u8,
    wcp: Frame,
    #[serde(flatten)]
    result: IkResult,
}

#[derive(Serialize)]
#[serde(untagged)]
enum IkResult {
    Original(IkOutcome),
    Virtual { outcome: &'static str, joints: VirtualJoints },
}

#[allow(clippy::too_many_arguments)]
fn cmd_ik(
    model: &RobotModel,
    configuration: u8,
    virtual_chain: bool,
    tcp: bool,
    no_smoothing: bool,
    json: bool,
    frame: &[f64],
) -> Result<u8, Failure> {
    let Ok(pose): Result<[f64; 6], _> = frame.try_into() else {
        usage_error(format!("ik expects x y z alpha beta gamma, got {} values", frame.len()));
    };
    let s = Configuration::new(configuration).map_err(bad_input)?;
    let given = euler_to_frame(&EulerPose::from_array(pose));
    let wcp = if tcp { wcp_target_from_tcp(model, &given) } else { given };
    let (result, code) = if virtual_chain {
        let smoothing = if no_smoothing { SmoothingParams::off() } else { SmoothingParams::default() };
        let joints = ik_virtual(model, &wcp, s, &smoothing);
        (IkResult::Virtual { outcome: "virtual", joints }, 0)
    } else {
        let outcome = ik_original(model, &wcp, s);
        let code = if matches!(outcome, IkOutcome::OutOfReach { .. }) { 3 } else { 0 };
        (IkResult::Original(outcome), code)
    };
    if json {
        print_json(&IkOutput { configuration, wcp, result })?;
        return Ok(code);
    }
    let show = |q: &[f64; 6]| q.iter().map(|v| format!("{v:.12}")).collect::<Vec<_>>().join(" ");
    match &result {
        IkResult::Virtual { joints, .. } => {
            println!("q {}", show(&joints.q));
            println!("v {:.12}", joints.v);
        }
        IkResult::Original(IkOutcome::Solution { q, limit_ok }) => {
            println!("q {}", show(&q.0));
            if limit_ok.iter().any(|ok| !ok) {
                println!("outside joint limits: {limit_ok:?}");
            }
        }
        IkResult::Original(IkOutcome::BranchSingular { kind, q }) => {
            println!("q {}", show(&q.0));
            println!("{kind:?} singularity; representative solution shown");
        }
        IkResult::Original(IkOutcome::OutOfReach { defect }) => {
            println!("out of reach by {defect:.9} mm");
        }
    }
    Ok(code)
}

#[derive(Serialize)]
struct Crossing {
    t: f64,
    tcp: [f64; 3],
    x: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config: &'a SweepConfig,
    config_path: Option<&'a Path>,
    robot: &'a RobotModel,
    crossings: Vec<Crossing>,
}

fn cmd_sweep(
    robot: &Option<PathBuf>,
    config: &Option<PathBuf>,
    samples: Option<usize>,
    out_dir: &Path,
) -> Result<u8, Failure> {
    let (mut cfg, base) = match config {
        Some(path) => SweepConfig::load(path).map_err(|e| bad_input(format!("{}: {e}", path.display())))?,
        None => (SweepConfig::default(), PathBuf::from(".")),
    };
    if let Some(n) = samples {
        cfg.samples = n;
    }
    let model = match robot {
        Some(_) => {
            cfg.resolve_model(&base).map_err(bad_input)?;
            load_robot(robot)?
        }
        None => cfg.resolve_model(&base).map_err(bad_input)?,
    };
    let line = cfg.line(&model);
    let rows = line.run(cfg.samples).map_err(bad_input)?;
    let crossings: Vec<Crossing> = line
        .boundary_crossings(cfg.samples)
        .into_iter()
        .map(|t| {
            let tcp = line.tcp_at(t).position;
            Crossing { t, tcp: tcp.into(), x: tcp.x }
        })
        .collect();

    fs::create_dir_all(out_dir).map_err(write_failed)?;
    let csv_path = out_dir.join("sweep.csv");
    let file = fs::File::create(&csv_path).map_err(write_failed)?;
    write_sweep_csv(std::io::BufWriter::new(file), &rows).map_err(write_failed)?;
    for c in &crossings {
        println!("boundary crossing at x = {:.6} mm (t = {:.9})", c.x, c.t);
    }
    let summary = SweepSummary { config: &cfg, config_path: config.as_deref(), robot: &model, crossings };
    let json_path = out_dir.join("sweep.json");
    write_json(&json_path, &summary)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(0)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(write_failed)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| write_failed(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RunEcho<'a> {
    scene_path: &'a Path,
    scene: &'a Scene,
    robot: &'a RobotModel,
    solver: SolverOptions,
    seed: u64,
    restarts: usize,
}

#[derive(Serialize)]
struct OptimizeOutput<'a> {
    config: RunEcho<'a>,
    attempts: usize,
    start: Vec<f64>,
    pose: EulerPose,
    report: &'a SolveReport,
}

/// Random start near the scene's initial point: +-200 mm and +-0.5 rad per free variable.
fn perturbed_start(problem: &PlacementProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let free = problem.variables().free_indices();
    let lower = problem.variables().lower;
    let upper = problem.variables().upper;
    problem
        .initial_point()
        .iter()
        .zip(&free)
        .map(|(&x, &i)| {
            let r = if i < 3 { 200.0 } else { 0.5 };
            let v = x + rng.random_range(-r..=r);
            v.clamp(lower[i].unwrap_or(f64::NEG_INFINITY), upper[i].unwrap_or(f64::INFINITY))
        })
        .collect()
}

fn better(a: &SolveReport, b: &SolveReport) -> bool {
    let optimal = |r: &SolveReport| r.status == Status::Optimal;
    match (optimal(a), optimal(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => (a.max_violation, a.objective) < (b.max_violation, b.objective),
    }
}

fn write_iterates(path: &Path, problem: &PlacementProblem, report: &SolveReport) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(problem.variables().free_indices().iter().map(|&i| VARIABLE_NAMES[i].to_string()));
    header.extend(["objective".into(), "max_violation".into()]);
    w.write_record(&header).map_err(write_failed)?;
    let rows = report.iterates.iter().zip(&report.objective_trajectory).zip(&report.violation_trajectory);
    for (k, ((x, f), g)) in rows.enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(x.iter().chain([f, g]).map(|v| format!("{v:.12e}")));
        w.write_record(&rec).map_err(write_failed)?;
    }
    w.flush().map_err(write_failed)
}

fn write_grid(path: &Path, problem: &PlacementProblem, x: &[f64]) -> Result<(), Failure> {
    let eval = problem.evaluate(x);
    let by = problem.spec().by;
    let mut w = csv_writer(path)?;
    w.write_record(["point", "k", "l", "v", "q1", "q2", "q3", "q4", "q5", "q6"]).map_err(write_failed)?;
    for (p, joints) in eval.joints.iter().enumerate() {
        let mut rec = vec![p.to_string(), (p / by).to_string(), (p % by).to_string()];
        rec.extend(std::iter::once(&joints.v).chain(&joints.q).map(|v| format!("{v:.12e}")));
        w.write_record(&rec).map_err(write_failed)?;
    }
    w.flush().map_err(write_failed)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, Failure> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| write_failed(format!("{}: {e}", path.display())))
}

fn cmd_optimize(
    robot: &Option<PathBuf>,
    scene_path: &Path,
    method: Option<MethodArg>,
    restarts: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<u8, Failure> {
    let (mut scene, base) = Scene::load(scene_path).map_err(|e| bad_input(format!("{}: {e}", scene_path.display())))?;
    if let Some(m) = method {
        scene.solver.method = m.into();
    }
    let mut problem = scene.build(&base).map_err(bad_input)?;
    if robot.is_some() {
        let model = load_robot(robot)?;
        problem = PlacementProblem::new(model, scene.box_spec.clone(), scene.variables.clone(), scene.smoothing)
            .map_err(bad_input)?
            .with_gradient_mode(scene.gradient);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = problem.initial_point();
    let mut best = minimize(&problem, &start, &scene.solver).map_err(bad_input)?;
    let mut attempts = 1;
    while best.status != Status::Optimal && attempts <= restarts {
        let x0 = perturbed_start(&problem, &mut rng);
        let r = minimize(&problem, &x0, &scene.solver).map_err(bad_input)?;
        attempts += 1;
        if better(&r, &best) {
            best = r;
            start = x0;
        }
    }

    fs::create_dir_all(out_dir).map_err(write_failed)?;
    let output = OptimizeOutput {
        config: RunEcho { scene_path, scene: &scene, robot: problem.model(), solver: scene.solver, seed, restarts },
        attempts,
        start,
        pose: problem.pose(&best.x),
        report: &best,
    };
    write_json(&out_dir.join("report.json"), &output)?;
    write_iterates(&out_dir.join("iterates.csv"), &problem, &best)?;
    write_grid(&out_dir.join("grid_v.csv"), &problem, &best.x)?;

    let pose = output.pose;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:?} after {} iterations ({} attempt{}), objective {:.3e}, max violation {:.3e}, {:.3} s",
        best.status,
        best.iterations,
        attempts,
        if attempts == 1 { "" } else { "s" },
        best.objective,
        best.max_violation,
        best.wall_time_s
    );
    let _ = writeln!(
        out,
        "corner x {:.6} y {:.6} z {:.6} alpha {:.9} beta {:.9} gamma {:.9}",
        pose.x, pose.y, pose.z, pose.alpha, pose.beta, pose.gamma
    );
    let _ = writeln!(out, "wrote report.json, iterates.csv, grid_v.csv to {}", out_dir.display());
    Ok(if best.status == Status::Optimal { 0 } else { 4 })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Fk { virtual_chain, json, values } => cmd_fk(&load_robot(&cli.robot)?, *virtual_chain, *json, values),
        Command::Ik { configuration, virtual_chain, tcp, no_smoothing, json, frame } => {
            cmd_ik(&load_robot(&cli.robot)?, *configuration, *virtual_chain, *tcp, *no_smoothing, *json, frame)
        }
        Command::Sweep { config, samples, out_dir } => cmd_sweep(&cli.robot, config, *samples, out_dir),
        Command::Optimize { scene, method, restarts, seed, out_dir } => {
            cmd_optimize(&cli.robot, scene, *method, *restarts, *seed, out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
