use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::io::{GroundTruth, Intrinsics, LoopCandidate, LoopCandidatesFile, TrackRecord, TracksFile};
use crate::ransac::sampson_error;
use crate::so3::{
    essential_from_relative, exp_so3, AxisAngle, Facing, RelativePose, Rotation, SphericalEssential,
    SphericalExtrinsics,
};
use crate::solver::{decompose_essential, solve_essentials, CorrespondenceSet, SolverMethod};

/// Rejection-sampling budget per problem.
const MAX_ATTEMPTS: usize = 10_000;
pub const FRAME_WIDTH: f64 = 1920.0;
pub const FRAME_HEIGHT: f64 = 1080.0;
/// Camera-frame depth below which a point counts as behind the camera.
const MIN_DEPTH: f64 = 1e-6;

/// Default point distance range from the first camera for a facing.
pub fn default_depth_range(facing: Facing) -> (f64, f64) {
    match facing {
        Facing::Inward => (0.25, 0.75),
        Facing::Outward => (4.0, 8.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub facing: Facing,
    pub rotation_magnitude_deg: f64,
    pub noise_sigma_px: f64,
    pub focal_px: f64,
    pub num_points: usize,
    pub depth_range: (f64, f64),
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(facing: Facing, rotation_magnitude_deg: f64, noise_sigma_px: f64, num_points: usize, seed: u64) -> Self {
        ProblemSpec {
            facing,
            rotation_magnitude_deg,
            noise_sigma_px,
            focal_px: 600.0,
            num_points,
            depth_range: default_depth_range(facing),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidInput(format!("depth range ({lo}, {hi}) must satisfy 0 < min < max")));
        }
        if !(self.focal_px > 0.0) || !(self.noise_sigma_px >= 0.0) || !(self.rotation_magnitude_deg >= 0.0) {
            return Err(Error::InvalidInput(
                "focal must be positive; noise and rotation non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub ground_truth: RelativePose,
    pub correspondences: CorrespondenceSet,
    pub ground_truth_e: SphericalEssential,
}

pub fn random_axis(rng: &mut impl Rng) -> Vector3<f64> {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vector3::new(x, y, z)
}

fn pixel(focal: f64, p: &Vector3<f64>) -> (f64, f64) {
    (focal * p.x / p.z + FRAME_WIDTH / 2.0, focal * p.y / p.z + FRAME_HEIGHT / 2.0)
}

fn in_frame((px, py): (f64, f64)) -> bool {
    (0.0..=FRAME_WIDTH).contains(&px) && (0.0..=FRAME_HEIGHT).contains(&py)
}

fn generate_with(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<SyntheticProblem> {
    spec.validate()?;
    let rotation = exp_so3(&AxisAngle(random_axis(rng) * spec.rotation_magnitude_deg.to_radians()));
    let truth = RelativePose::from_rotation(rotation, spec.facing);
    let f = spec.focal_px;
    let noise = Normal::new(0.0, spec.noise_sigma_px).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let (mut u, mut v) = (Vec::with_capacity(spec.num_points), Vec::with_capacity(spec.num_points));
    let mut attempts = 0;
    while u.len() < spec.num_points {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS });
        }
        let px = rng.random_range(0.0..FRAME_WIDTH);
        let py = rng.random_range(0.0..FRAME_HEIGHT);
        let ray = Vector3::new((px - FRAME_WIDTH / 2.0) / f, (py - FRAME_HEIGHT / 2.0) / f, 1.0).normalize();
        let x1 = ray * rng.random_range(spec.depth_range.0..spec.depth_range.1);
        let x2 = rotation.rotate(&x1) + truth.translation;
        if x2.z <= MIN_DEPTH || !in_frame(pixel(f, &x2)) {
            continue;
        }
        let mut observe = |p: &Vector3<f64>| {
            let (mut qx, mut qy) = pixel(f, p);
            if spec.noise_sigma_px > 0.0 {
                qx += noise.sample(rng);
                qy += noise.sample(rng);
            }
            Vector3::new((qx - FRAME_WIDTH / 2.0) / f, (qy - FRAME_HEIGHT / 2.0) / f, 1.0)
        };
        u.push(observe(&x1));
        v.push(observe(&x2));
    }
    Ok(SyntheticProblem {
        ground_truth: truth,
        correspondences: CorrespondenceSet::new(u, v)?,
        ground_truth_e: essential_from_relative(&truth)?.normalized(),
    })
}

pub fn generate_problem(spec: &ProblemSpec) -> Result<SyntheticProblem> {
    generate_trial(spec, 0)
}

/// Problem `trial` of the stream seeded by `spec.seed`; independent of the
/// order trials are generated in.
pub fn generate_trial(spec: &ProblemSpec, trial: u64) -> Result<SyntheticProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial);
    generate_with(spec, &mut rng)
}

/// Sign- and scale-invariant distance between two essential matrices.
pub fn frobenius_error(e_est: &SphericalEssential, e_true: &SphericalEssential) -> f64 {
    let a = e_est.matrix() / e_est.matrix().norm();
    let b = e_true.matrix() / e_true.matrix().norm();
    (a - b).norm().min((a + b).norm())
}

/// Geodesic distance `‖log(R_true · R_estᵀ)‖`.
pub fn angular_error(r_est: &Rotation, r_true: &Rotation) -> f64 {
    r_est.angle_to(r_true)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Outcome of solving one problem: the last correspondence is held out to
/// choose among the candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub frobenius: f64,
    pub angular: f64,
    pub solve_seconds: f64,
}

pub fn solve_trial(problem: &SyntheticProblem, method: SolverMethod, focal_px: f64) -> Option<TrialOutcome> {
    let c = &problem.correspondences;
    let n = c.len();
    if n < 4 {
        return None;
    }
    let estimation = c.subset(&(0..n - 1).collect::<Vec<_>>());
    let start = Instant::now();
    let set = solve_essentials(&estimation, method).ok();
    let solve_seconds = start.elapsed().as_secs_f64();
    let (hu, hv) = (&c.u[n - 1], &c.v[n - 1]);
    let best = set?
        .iter()
        .map(|cand| (sampson_error(&cand.essential, hu, hv, focal_px), *cand))
        .filter(|(e, _)| e.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))?
        .1;
    let pose = decompose_essential(&best.essential, problem.ground_truth.facing).ok()?;
    Some(TrialOutcome {
        frobenius: frobenius_error(&best.essential, &problem.ground_truth_e),
        angular: angular_error(&pose.rotation, &problem.ground_truth.rotation),
        solve_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub facing: Facing,
    pub theta_deg: f64,
    pub sigma_px: f64,
    pub focal_px: f64,
    pub num_points: usize,
    pub depth_min: f64,
    pub depth_max: f64,
    pub seed: u64,
    pub method: SolverMethod,
    pub trials: usize,
    pub median_frob: f64,
    pub q25: f64,
    pub q75: f64,
    pub median_ang_deg: f64,
    pub mean_time_us: f64,
    pub failure_rate: f64,
}

/// Runs every spec with every method over `trials` problems each.
pub fn run_benchmark(specs: &[ProblemSpec], trials: usize, methods: &[SolverMethod]) -> Result<Vec<BenchRow>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(specs.len() * methods.len());
    for spec in specs {
        let problems = (0..trials as u64)
            .map(|t| generate_trial(spec, t))
            .collect::<Result<Vec<_>>>()?;
        for &method in methods {
            let outcomes: Vec<TrialOutcome> = problems
                .iter()
                .filter_map(|p| solve_trial(p, method, spec.focal_px))
                .collect();
            let mut frob: Vec<f64> = outcomes.iter().map(|o| o.frobenius).collect();
            let mut ang: Vec<f64> = outcomes.iter().map(|o| o.angular.to_degrees()).collect();
            frob.sort_by(f64::total_cmp);
            ang.sort_by(f64::total_cmp);
            let mean_time_us = if outcomes.is_empty() {
                f64::NAN
            } else {
                1e6 * outcomes.iter().map(|o| o.solve_seconds).sum::<f64>() / outcomes.len() as f64
            };
            rows.push(BenchRow {
                facing: spec.facing,
                theta_deg: spec.rotation_magnitude_deg,
                sigma_px: spec.noise_sigma_px,
                focal_px: spec.focal_px,
                num_points: spec.num_points,
                depth_min: spec.depth_range.0,
                depth_max: spec.depth_range.1,
                seed: spec.seed,
                method,
                trials,
                median_frob: quantile(&frob, 0.5),
                q25: quantile(&frob, 0.25),
                q75: quantile(&frob, 0.75),
                median_ang_deg: quantile(&ang, 0.5),
                mean_time_us,
                failure_rate: 1.0 - outcomes.len() as f64 / trials as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of a synthetic loop sequence: cameras on a circle about the
/// world y axis, every frame observing a shared field of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub frames: usize,
    pub points: usize,
    pub facing: Facing,
    pub noise_sigma_px: f64,
    /// Angle of the random rotation added to every camera on top of the circle.
    pub jitter_deg: f64,
    pub depth_range: (f64, f64),
    pub intrinsics: Intrinsics,
    /// Loop candidates are emitted for frame pairs sharing at least this many points.
    pub min_candidate_matches: usize,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn new(frames: usize, points: usize, facing: Facing, noise_sigma_px: f64, seed: u64) -> Self {
        SequenceSpec {
            frames,
            points,
            facing,
            noise_sigma_px,
            jitter_deg: 1.0,
            depth_range: default_depth_range(facing),
            intrinsics: Intrinsics::new(600.0, [FRAME_WIDTH / 2.0, FRAME_HEIGHT / 2.0], [FRAME_WIDTH, FRAME_HEIGHT]),
            min_candidate_matches: 8,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub tracks: TracksFile,
    pub intrinsics: Intrinsics,
    pub loops: LoopCandidatesFile,
    pub truth: GroundTruth,
}

/// Camera `k` of a circular sequence with `n` frames, before jitter.
pub fn circle_rotation(k: usize, n: usize) -> Rotation {
    Rotation::about_y(std::f64::consts::TAU * k as f64 / n as f64).transpose()
}

/// Maximal runs of consecutive frames.
fn runs(frames: &[usize]) -> Vec<&[usize]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || frames[i] != frames[i - 1] + 1 {
            out.push(&frames[start..i]);
            start = i;
        }
    }
    out
}

pub fn generate_sequence(spec: &SequenceSpec) -> Result<SyntheticSequence> {
    if spec.frames < 2 {
        return Err(Error::InvalidInput("a sequence needs at least 2 frames".into()));
    }
    spec.intrinsics.validate()?;
    let (lo, hi) = spec.depth_range;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::InvalidInput(format!("depth range ({lo}, {hi}) must satisfy 0 < min < max")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = &spec.intrinsics;
    let [w, h] = k.size;
    let n = spec.frames;
    let cameras: Vec<SphericalExtrinsics> = (0..n)
        .map(|i| {
            let jitter = exp_so3(&AxisAngle(random_axis(&mut rng) * spec.jitter_deg.to_radians()));
            SphericalExtrinsics::new(jitter * circle_rotation(i, n), spec.facing)
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma_px).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut world = Vec::with_capacity(spec.points);
    // Noisy pixel of every point in every frame that sees it, drawn once.
    let mut seen: Vec<Vec<(usize, f64, f64)>> = Vec::with_capacity(spec.points);
    let mut attempts = 0;
    while world.len() < spec.points {
        attempts += 1;
        if attempts > MAX_ATTEMPTS * spec.points.max(1) {
            return Err(Error::GenerationFailed { attempts });
        }
        let origin = &cameras[rng.random_range(0..n)];
        let ideal = k.normalize(rng.random_range(0.0..w), rng.random_range(0.0..h));
        let cam_point = ideal.normalize() * rng.random_range(lo..hi);
        let x = origin.rotation.transpose().rotate(&(cam_point - origin.translation()));
        let mut obs = Vec::new();
        for (f, cam) in cameras.iter().enumerate() {
            let p = cam.transform(&x);
            if p.z <= MIN_DEPTH {
                continue;
            }
            let (px, py) = k.project(&p);
            if !k.in_frame(px, py) {
                continue;
            }
            let (nx, ny) = if spec.noise_sigma_px > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            obs.push((f, px + nx, py + ny));
        }
        if obs.len() < 2 {
            continue;
        }
        world.push(x);
        seen.push(obs);
    }

    let mut tracks = Vec::new();
    let mut track_points = Vec::new();
    for (point, obs) in seen.iter().enumerate() {
        let frames: Vec<usize> = obs.iter().map(|o| o.0).collect();
        let mut offset = 0;
        for run in runs(&frames) {
            if run.len() >= 2 {
                tracks.push(TrackRecord {
                    id: tracks.len() as u64,
                    obs: obs[offset..offset + run.len()].to_vec(),
                });
                track_points.push(point);
            }
            offset += run.len();
        }
    }

    let mut candidates = Vec::new();
    for j in 2..n {
        let matches: Vec<[f64; 4]> = seen
            .iter()
            .filter_map(|obs| {
                let a = obs.iter().find(|o| o.0 == 0)?;
                let b = obs.iter().find(|o| o.0 == j)?;
                Some([a.1, a.2, b.1, b.2])
            })
            .collect();
        if matches.len() >= spec.min_candidate_matches {
            candidates.push(LoopCandidate {
                frame_a: 0,
                frame_b: j,
                matches,
            });
        }
    }

    Ok(SyntheticSequence {
        tracks: TracksFile { frames: n, tracks },
        intrinsics: k.clone(),
        loops: LoopCandidatesFile { candidates },
        truth: GroundTruth {
            facing: spec.facing,
            rotations: cameras.iter().map(|c| c.rotation).collect(),
            points: world.iter().map(|x| [x.x, x.y, x.z]).collect(),
            track_points,
        },
    })
}
