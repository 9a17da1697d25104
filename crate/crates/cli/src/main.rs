//! Command-line front end: tracking, synthetic data, evaluation and two
//! debugging tools for the assignment and stability sub-problems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;

use hoitrack::data_terms::Metric;
use hoitrack::geometry::CameraIntrinsics;
use hoitrack::kinematics::{Pose, Vec3};
use hoitrack::model::PhysicalProperties;
use hoitrack::physics::{simulate_drop, ConvexHull, RigidBodyScene, SceneBox, SimulationParams, StaticBody};
use hoitrack::pipeline::formats::{parse_toml, read_joints, write_depth_png, write_depth_raw, write_joints, write_trajectory};
use hoitrack::pipeline::{
    evaluate, format_summary, generate_synthetic, procedural_hand, run_sequence, save_model, synthetic_motion,
    write_outputs, DepthFormat, MotionParams, SequenceConfig,
};
use hoitrack::salient::solve_assignment;
use hoitrack::solver::Stopping;
use hoitrack::{Error, Result};

#[derive(Parser)]
#[command(name = "hoitrack", version, about = "Hand and object pose tracking from depth frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence described by a configuration file.
    Track(TrackArgs),
    /// Render a synthetic sequence of the procedural hand.
    Synth(SynthArgs),
    /// Compare estimated joints with ground truth.
    Eval(EvalArgs),
    /// Solve one detection-to-fingertip assignment problem.
    Assign(AssignArgs),
    /// Drop an object into a static scene and report its stability.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    P2p,
    P2plane,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::P2p => Metric::PointToPoint,
            MetricArg::P2plane => Metric::PointToPlane,
        }
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Fixed number of iterations per frame.
    #[arg(long, conflicts_with = "stop_eps")]
    iterations: Option<usize>,
    /// Stop when the mean joint displacement of a step drops below this (mm).
    #[arg(long)]
    stop_eps: Option<f64>,
    /// Iteration cap with `--stop-eps`.
    #[arg(long, default_value_t = 50, requires = "stop_eps")]
    max_iterations: usize,
    #[arg(long)]
    gamma_c: Option<f64>,
    #[arg(long)]
    gamma_ph: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Raw,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    /// Thumb plus up to four fingers.
    #[arg(long, default_value_t = 5)]
    fingers: usize,
    /// Standard deviation of the depth noise (mm).
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Distance of the wrist from the camera (mm).
    #[arg(long, default_value_t = 550.0)]
    distance: f64,
    #[arg(long, value_enum, default_value = "png")]
    format: FormatArg,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated joints CSV.
    #[arg(long)]
    estimate: PathBuf,
    /// Ground-truth joints CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Sequence configuration supplying the intrinsics; VGA otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated joint indices.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    /// TOML file with `costs` (detections x fingertips) and `detection_weights`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.2)]
    lambda: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scene file.
    #[arg(long)]
    scene: PathBuf,
}

fn apply_overrides(config: &mut SequenceConfig, args: &TrackArgs) {
    let t = &mut config.tracker;
    if let Some(m) = args.metric {
        t.metric = m.into();
    }
    if let Some(n) = args.iterations {
        t.stopping = Stopping::Fixed { iterations: n };
    }
    if let Some(eps) = args.stop_eps {
        t.stopping = Stopping::Epsilon {
            eps_mm: eps,
            max_iterations: args.max_iterations,
        };
    }
    if let Some(g) = args.gamma_c {
        t.weights.gamma_c = g;
    }
    if let Some(g) = args.gamma_ph {
        t.weights.gamma_ph = g;
    }
    if let Some(l) = args.lambda {
        t.weights.lambda = l;
    }
    if let Some(o) = &args.output {
        config.output = o.clone();
    }
}

fn track(args: &TrackArgs) -> Result<()> {
    let mut config = SequenceConfig::load(&args.config)?;
    apply_overrides(&mut config, args);
    let model = config.load_model()?;
    let out = run_sequence(&config)?;
    write_outputs(&config.output, &model, &out)?;
    let failed = out.results.iter().filter(|r| r.error.is_some()).count();
    println!("tracked {} frames ({failed} failed) into {}", out.results.len(), config.output.display());
    if let Some(ev) = &out.evaluation {
        print!("{}", format_summary(ev));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn synth(args: &SynthArgs) -> Result<()> {
    let hand = procedural_hand(args.fingers)?;
    let mut initial = Pose::zeros(&hand.skeleton);
    initial.theta[2] = args.distance;
    let poses = synthetic_motion(&hand, &initial, args.frames, &MotionParams::default(), args.seed);
    let k = CameraIntrinsics::vga();
    let seq = generate_synthetic(&hand, &poses, &k, args.noise, args.seed.wrapping_add(1))?;

    let dir = &args.output;
    let depth_dir = dir.join("depth");
    create_dir(&depth_dir)?;
    save_model(&dir.join("hand.toml"), &hand)?;
    let format = match args.format {
        FormatArg::Png => DepthFormat::Png,
        FormatArg::Raw => DepthFormat::Raw,
    };
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = depth_dir.join(format!("{i:05}.{}", format.extension()));
        match format {
            DepthFormat::Png => write_depth_png(&path, frame)?,
            DepthFormat::Raw => write_depth_raw(&path, frame)?,
        }
    }
    write_trajectory(&dir.join("ground_truth_poses.csv"), &seq.poses)?;
    write_trajectory(&dir.join("initial_pose.csv"), &seq.poses[..seq.poses.len().min(1)])?;
    write_joints(&dir.join("ground_truth_joints.csv"), &seq.joints)?;

    let config = SequenceConfig {
        model: "hand.toml".into(),
        objects: vec![],
        frames: "depth".into(),
        depth_format: format,
        intrinsics: k,
        depth_threshold: 1000.0,
        masks: None,
        detections: None,
        initial_pose: Some("initial_pose.csv".into()),
        ground_truth: Some("ground_truth_joints.csv".into()),
        joint_subset: None,
        output: "output".into(),
        tracker: Default::default(),
    };
    let text = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("config.toml");
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    println!("wrote {} frames to {}", seq.frames.len(), dir.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let k = match &args.config {
        Some(p) => SequenceConfig::load(p)?.intrinsics,
        None => CameraIntrinsics::vga(),
    };
    let est = read_joints(&args.estimate)?;
    let truth = read_joints(&args.truth)?;
    let record = evaluate(&est, &truth, &k, args.subset.as_deref())?;
    let summary = format_summary(&record);
    print!("{summary}");
    if let Some(p) = &args.output {
        fs::write(p, &summary).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignDoc {
    costs: Vec<Vec<f64>>,
    detection_weights: Vec<f64>,
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_toml(&text, &path.display().to_string())
}

fn assign(args: &AssignArgs) -> Result<()> {
    let doc: AssignDoc = read_doc(&args.input)?;
    let s = doc.costs.len();
    let t = doc.costs.first().map_or(0, Vec::len);
    if doc.costs.iter().any(|r| r.len() != t) || doc.detection_weights.len() != s {
        return Err(Error::LengthMismatch(format!(
            "costs must be {s}x{t} with {s} detection weights"
        )));
    }
    let w = DMatrix::from_fn(s, t, |i, j| doc.costs[i][j]);
    let sol = solve_assignment(&w, &doc.detection_weights, args.lambda);
    for (i, j) in sol.assigned() {
        println!("assign detection {i} -> fingertip {j} (cost {})", w[(i, j)]);
    }
    for (i, _) in sol.alpha.iter().enumerate().filter(|(_, &a)| a) {
        println!("reject detection {i}");
    }
    for (j, _) in sol.beta.iter().enumerate().filter(|(_, &b)| b) {
        println!("miss fingertip {j}");
    }
    println!("objective {}", sol.objective);
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    /// Hull points; alternatively a box.
    #[serde(default)]
    points: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    center: Option<[f64; 3]>,
    #[serde(default)]
    half_extents: Option<[f64; 3]>,
    #[serde(default)]
    properties: PhysicalProperties,
}

fn default_gravity() -> [f64; 3] {
    [0.0, -9810.0, 0.0]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    object: ObjectDoc,
    #[serde(default)]
    statics: Vec<SceneBox>,
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    #[serde(default)]
    simulation: SimulationParams,
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let doc: SceneDoc = read_doc(&args.scene)?;
    let object = match (&doc.object.points, doc.object.center, doc.object.half_extents) {
        (Some(p), None, None) => ConvexHull::new(&p.iter().map(|&q| Vec3::from(q)).collect::<Vec<_>>())?,
        (None, Some(c), Some(h)) => ConvexHull::cuboid(c.into(), h.into())?,
        _ => return Err(Error::Config("object needs either points or center and half_extents".into())),
    };
    let statics = doc
        .statics
        .iter()
        .map(|b| {
            Ok(StaticBody {
                name: b.name.clone(),
                hull: ConvexHull::cuboid(b.center.into(), b.half_extents.into())?,
                friction: b.friction,
                restitution: b.restitution,
                part: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = RigidBodyScene {
        object,
        properties: doc.object.properties,
        statics,
        gravity: doc.gravity.into(),
    };
    let report = simulate_drop(&scene, &doc.simulation);
    println!("displacement {} mm", report.displacement);
    println!("{}", if report.stable { "stable" } else { "unstable" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(a) => track(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Assign(a) => assign(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
