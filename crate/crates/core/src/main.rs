use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spherical_sfm::ba::MIN_INVERSE_DEPTH;
use spherical_sfm::pipeline::io::{
    normalize_candidates, normalize_tracks, read_json, write_json, GroundTruth, Intrinsics, LoopCandidatesFile,
    TracksFile,
};
use spherical_sfm::pipeline::{
    export_ply, reconstruct, ClosureMode, PipelineConfig, ReconstructionOutput, MIN_LOOP_INLIERS,
};
use spherical_sfm::ransac::{preemptive_ransac, RansacConfig};
use spherical_sfm::so3::{Facing, Rotation};
use spherical_sfm::solver::{CorrespondenceSet, SolverMethod};
use spherical_sfm::synth::{generate_problem, generate_sequence, run_benchmark, write_csv, ProblemSpec, SequenceSpec};
use spherical_sfm::Result;

#[derive(Parser)]
#[command(name = "spherical-sfm", version, about = "Relative pose and structure from motion for spherical camera motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the relative pose between two frames of a tracks file.
    Solve(SolveArgs),
    /// Emit a synthetic minimal problem or a synthetic loop sequence.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run the minimal-solver benchmark and write metrics CSV.
    Bench(BenchArgs),
    /// Run the full reconstruction pipeline.
    Sfm(SfmArgs),
    /// Convert a reconstruction JSON file into a PLY point cloud.
    Export(ExportArgs),
}

#[derive(Args)]
struct RansacArgs {
    #[arg(long, default_value = "inward")]
    facing: Facing,
    #[arg(long, default_value = "poly")]
    method: SolverMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    threshold_px: f64,
    #[arg(long, default_value_t = 200)]
    hypotheses: usize,
}

impl RansacArgs {
    fn config(&self, focal_px: f64) -> RansacConfig {
        RansacConfig {
            hypothesis_count: self.hypotheses,
            inlier_threshold_px: self.threshold_px,
            focal_px,
            seed: self.seed,
            method: self.method,
            ..RansacConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame_a: usize,
    #[arg(long, default_value_t = 1)]
    frame_b: usize,
    #[command(flatten)]
    ransac: RansacArgs,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Two-view problem with known relative pose.
    Problem {
        #[arg(long, default_value = "inward")]
        facing: Facing,
        #[arg(long, default_value_t = 1.0)]
        theta_deg: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_px: f64,
        #[arg(long, default_value_t = 5)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loop sequence written as tracks, intrinsics, loop candidates and ground truth.
    Sequence {
        #[arg(long, default_value = "outward")]
        facing: Facing,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma_px: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving tracks.json, intrinsics.json, loops.json and truth.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FacingChoice {
    Inward,
    Outward,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodChoice {
    Action,
    Poly,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    facing: FacingChoice,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodChoice,
    /// Rotation magnitudes in degrees.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    theta_deg: Vec<f64>,
    /// Pixel noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9,10")]
    sigma_px: Vec<f64>,
    /// Correspondences per problem, including the held-out disambiguation point.
    #[arg(long, default_value_t = 5)]
    points: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClosureChoice {
    FirstFrame,
    All,
}

#[derive(Args)]
struct SfmArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    /// Loop-closure candidate matches.
    #[arg(long)]
    loops: Option<PathBuf>,
    /// Ground truth used only for drift diagnostics.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    ransac: RansacArgs,
    #[arg(long, default_value_t = MIN_LOOP_INLIERS)]
    min_loop_inliers: usize,
    #[arg(long, default_value_t = MIN_INVERSE_DEPTH)]
    min_inverse_depth: f64,
    #[arg(long, value_enum, default_value = "first-frame")]
    closure_mode: ClosureChoice,
    #[arg(long, default_value_t = 100)]
    ba_iters: usize,
    /// Reconstruction JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a PLY point cloud.
    #[arg(long)]
    ply: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Reconstruction JSON produced by `sfm`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| spherical_sfm::Error::InvalidInput(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SolveOutput {
    frame_a: usize,
    frame_b: usize,
    correspondences: usize,
    inliers: usize,
    rotation: Rotation,
    rotation_angle_deg: f64,
    essential: [f64; 6],
}

fn solve(args: &SolveArgs) -> Result<()> {
    let intrinsics: Intrinsics = read_json(&args.intrinsics)?;
    let file: TracksFile = read_json(&args.tracks)?;
    let tracks = normalize_tracks(&file, &intrinsics)?;
    let (u, v) = tracks
        .tracks
        .iter()
        .filter_map(|t| Some((*t.at(args.frame_a)?, *t.at(args.frame_b)?)))
        .unzip();
    let c = CorrespondenceSet::new(u, v)?;
    let result = preemptive_ransac(&c, args.ransac.facing, &args.ransac.config(intrinsics.focal))?;
    let out = SolveOutput {
        frame_a: args.frame_a,
        frame_b: args.frame_b,
        correspondences: c.len(),
        inliers: result.inlier_count,
        rotation: result.pose.rotation,
        rotation_angle_deg: result.pose.rotation.angle_to(&Rotation::identity()).to_degrees(),
        essential: result.essential.params(),
    };
    emit(&out, args.out.as_deref())
}

#[derive(Serialize)]
struct ProblemOutput {
    spec: ProblemSpec,
    rotation: Rotation,
    essential: [f64; 6],
    u: Vec<[f64; 3]>,
    v: Vec<[f64; 3]>,
}

fn synth(cmd: &SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Problem {
            facing,
            theta_deg,
            sigma_px,
            points,
            seed,
            out,
        } => {
            let spec = ProblemSpec::new(*facing, *theta_deg, *sigma_px, *points, *seed);
            let p = generate_problem(&spec)?;
            let c = &p.correspondences;
            let out_value = ProblemOutput {
                spec,
                rotation: p.ground_truth.rotation,
                essential: p.ground_truth_e.params(),
                u: c.pairs().map(|(a, _)| [a.x, a.y, a.z]).collect(),
                v: c.pairs().map(|(_, b)| [b.x, b.y, b.z]).collect(),
            };
            emit(&out_value, out.as_deref())
        }
        SynthCommand::Sequence {
            facing,
            frames,
            points,
            sigma_px,
            seed,
            out_dir,
        } => {
            let seq = generate_sequence(&SequenceSpec::new(*frames, *points, *facing, *sigma_px, *seed))?;
            std::fs::create_dir_all(out_dir)?;
            write_json(&out_dir.join("tracks.json"), &seq.tracks)?;
            write_json(&out_dir.join("intrinsics.json"), &seq.intrinsics)?;
            write_json(&out_dir.join("loops.json"), &seq.loops)?;
            write_json(&out_dir.join("truth.json"), &seq.truth)?;
            log::info!(
                "wrote {} tracks and {} loop candidates to {}",
                seq.tracks.tracks.len(),
                seq.loops.candidates.len(),
                out_dir.display()
            );
            Ok(())
        }
    }
}

fn bench(args: &BenchArgs) -> Result<()> {
    let facings: &[Facing] = match args.facing {
        FacingChoice::Inward => &[Facing::Inward],
        FacingChoice::Outward => &[Facing::Outward],
        FacingChoice::Both => &[Facing::Inward, Facing::Outward],
    };
    let methods: &[SolverMethod] = match args.method {
        MethodChoice::Action => &[SolverMethod::Action],
        MethodChoice::Poly => &[SolverMethod::Poly],
        MethodChoice::Both => &[SolverMethod::Action, SolverMethod::Poly],
    };
    let mut specs = Vec::new();
    for &facing in facings {
        for &theta in &args.theta_deg {
            for &sigma in &args.sigma_px {
                specs.push(ProblemSpec::new(facing, theta, sigma, args.points, args.seed));
            }
        }
    }
    let rows = run_benchmark(&specs, args.trials, methods)?;
    match &args.out {
        Some(path) => write_csv(&rows, std::fs::File::create(path)?),
        None => write_csv(&rows, std::io::stdout().lock()),
    }
}

fn sfm(args: &SfmArgs) -> Result<()> {
    let intrinsics: Intrinsics = read_json(&args.intrinsics)?;
    let file: TracksFile = read_json(&args.tracks)?;
    let tracks = normalize_tracks(&file, &intrinsics)?;
    let candidates = match &args.loops {
        Some(path) => {
            let loops: LoopCandidatesFile = read_json(path)?;
            normalize_candidates(&loops, &intrinsics, tracks.frames)?
        }
        None => Vec::new(),
    };
    let truth = args.truth.as_deref().map(read_json::<GroundTruth>).transpose()?;

    let mut cfg = PipelineConfig::new(args.ransac.facing, intrinsics.focal);
    cfg.ransac = args.ransac.config(intrinsics.focal);
    cfg.min_loop_inliers = args.min_loop_inliers;
    cfg.closure_mode = match args.closure_mode {
        ClosureChoice::FirstFrame => ClosureMode::FirstFrame,
        ClosureChoice::All => ClosureMode::All,
    };
    cfg.ba.min_inverse_depth = args.min_inverse_depth;
    cfg.ba.max_iters = args.ba_iters;

    let out = reconstruct(&tracks, &candidates, &cfg, truth.as_ref().map(|t| t.rotations.as_slice()))?;
    let d = &out.diagnostics;
    log::info!(
        "{} cameras, {} points, {} closures accepted, mean reprojection {:.3} px",
        out.cameras.len(),
        out.points.len(),
        d.closures.iter().filter(|c| c.accepted).count(),
        d.reprojection.mean_px
    );
    if let (Some(before), Some(after)) = (d.drift_before_deg, d.drift_after_deg) {
        log::info!("end-to-end drift {before:.4} deg before averaging, {after:.4} deg after");
    }
    if let Some(path) = &args.ply {
        export_ply(&out, path)?;
    }
    emit(&out, args.out.as_deref())
}

fn export(args: &ExportArgs) -> Result<()> {
    let out: ReconstructionOutput = read_json(&args.input)?;
    export_ply(&out, &args.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Synth(c) => synth(c),
        Command::Bench(a) => bench(a),
        Command::Sfm(a) => sfm(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
