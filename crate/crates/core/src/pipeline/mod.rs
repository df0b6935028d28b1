pub mod io;
pub mod ply;

pub use ply::export_ply;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::averaging::{average_rotations_l1, spanning_tree_init, AveragingConfig, Edge, GlobalRotations, RotationGraph};
use crate::ba::{
    bundle_adjust, initialize_inverse_depths, reprojection_stats, BaConfig, BaState, BaStatus, Observation,
    ReprojectionStats, Track, TrackGraph, MIN_INVERSE_DEPTH,
};
use crate::error::{Error, Result};
use crate::ransac::{preemptive_ransac, RansacConfig};
use crate::so3::{Facing, Rotation, SphericalExtrinsics};
use crate::solver::CorrespondenceSet;

use io::{NormalizedCandidate, NormalizedTracks};

/// Fewest RANSAC inliers for a sequential pair to produce an edge.
pub const MIN_PAIR_INLIERS: usize = 20;
/// Fewest RANSAC inliers for a loop closure to be accepted.
pub const MIN_LOOP_INLIERS: usize = 100;
/// Loop-closure weight cap.
const MAX_CLOSURE_WEIGHT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStatus {
    Accepted,
    /// Too few shared tracks or inliers; no edge was added.
    PairFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub frame_a: usize,
    pub frame_b: usize,
    pub correspondences: usize,
    pub inliers: usize,
    pub status: PairStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialResult {
    pub graph: RotationGraph,
    /// Tracks with outliers terminated at the pair where they failed.
    pub tracks: NormalizedTracks,
    pub pairs: Vec<PairDiagnostic>,
}

fn pair_seed(base: u64, a: usize, b: usize) -> u64 {
    base ^ ((a as u64) << 32 | b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Relative rotations between consecutive frames; outlier tracks are cut so
/// they play no part in later frames.
pub fn sequential_poses(tracks: &NormalizedTracks, facing: Facing, cfg: &RansacConfig) -> Result<SequentialResult> {
    if tracks.frames < 2 {
        return Err(Error::InvalidInput("need at least 2 frames".into()));
    }
    let mut tracks = tracks.clone();
    let mut graph = RotationGraph::new(tracks.frames);
    let mut pairs = Vec::with_capacity(tracks.frames - 1);
    for a in 0..tracks.frames - 1 {
        let b = a + 1;
        let shared: Vec<usize> = (0..tracks.tracks.len())
            .filter(|&k| tracks.tracks[k].at(a).is_some() && tracks.tracks[k].at(b).is_some())
            .collect();
        let u = shared.iter().map(|&k| *tracks.tracks[k].at(a).unwrap()).collect();
        let v = shared.iter().map(|&k| *tracks.tracks[k].at(b).unwrap()).collect();
        let c = CorrespondenceSet::new(u, v)?;
        let pair_cfg = RansacConfig { seed: pair_seed(cfg.seed, a, b), ..*cfg };
        let result = preemptive_ransac(&c, facing, &pair_cfg).ok();
        let inliers = result.as_ref().map_or(0, |r| r.inlier_count);
        let accepted = inliers >= MIN_PAIR_INLIERS;
        pairs.push(PairDiagnostic {
            frame_a: a,
            frame_b: b,
            correspondences: c.len(),
            inliers,
            status: if accepted { PairStatus::Accepted } else { PairStatus::PairFailed },
        });
        let Some(result) = result.filter(|_| accepted) else {
            log::warn!("pair ({a}, {b}) failed with {inliers} inliers of {}", c.len());
            continue;
        };
        graph.add_edge(Edge::new(a, b, result.pose.rotation))?;
        for (&k, &inlier) in shared.iter().zip(&result.inlier_mask) {
            if !inlier {
                tracks.tracks[k].obs.retain(|(f, _)| *f < b);
            }
        }
    }
    tracks.tracks.retain(|t| t.obs.len() >= 2);
    Ok(SequentialResult { graph, tracks, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureMode {
    /// Candidates against frame 0, from the last frame backwards, stopping at
    /// the first rejection.
    #[default]
    FirstFrame,
    /// Every candidate is verified independently.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureDiagnostic {
    pub frame_a: usize,
    pub frame_b: usize,
    pub matches: usize,
    pub inliers: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureResult {
    pub edges: Vec<Edge>,
    pub diagnostics: Vec<ClosureDiagnostic>,
}

/// Verifies loop-closure candidates with RANSAC and turns accepted ones into
/// weighted edges.
pub fn detect_loop_closures(
    candidates: &[NormalizedCandidate],
    facing: Facing,
    cfg: &RansacConfig,
    min_inliers: usize,
    mode: ClosureMode,
) -> Result<ClosureResult> {
    let mut ordered: Vec<&NormalizedCandidate> = match mode {
        ClosureMode::FirstFrame => candidates
            .iter()
            .filter(|c| (c.frame_a == 0) != (c.frame_b == 0))
            .collect(),
        ClosureMode::All => candidates.iter().collect(),
    };
    let other = |c: &NormalizedCandidate| c.frame_a.max(c.frame_b);
    ordered.sort_by_key(|c| std::cmp::Reverse(other(c)));

    let mut edges = Vec::new();
    let mut diagnostics = Vec::new();
    for cand in ordered {
        let c = CorrespondenceSet::new(cand.u.clone(), cand.v.clone())?;
        let pair_cfg = RansacConfig { seed: pair_seed(cfg.seed, cand.frame_a, cand.frame_b), ..*cfg };
        let result = preemptive_ransac(&c, facing, &pair_cfg).ok();
        let inliers = result.as_ref().map_or(0, |r| r.inlier_count);
        let accepted = inliers >= min_inliers;
        diagnostics.push(ClosureDiagnostic {
            frame_a: cand.frame_a,
            frame_b: cand.frame_b,
            matches: c.len(),
            inliers,
            accepted,
        });
        match result.filter(|_| accepted) {
            Some(r) => {
                let weight = (inliers as f64 / 100.0).min(MAX_CLOSURE_WEIGHT);
                edges.push(Edge::new(cand.frame_a, cand.frame_b, r.pose.rotation).with_weight(weight));
            }
            None if mode == ClosureMode::FirstFrame => break,
            None => {}
        }
    }
    Ok(ClosureResult { edges, diagnostics })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub facing: Facing,
    pub ransac: RansacConfig,
    pub min_loop_inliers: usize,
    pub closure_mode: ClosureMode,
    pub averaging: AveragingConfig,
    pub ba: BaConfig,
}

impl PipelineConfig {
    pub fn new(facing: Facing, focal_px: f64) -> Self {
        PipelineConfig {
            facing,
            ransac: RansacConfig { focal_px, ..RansacConfig::default() },
            min_loop_inliers: MIN_LOOP_INLIERS,
            closure_mode: ClosureMode::default(),
            averaging: AveragingConfig::default(),
            ba: BaConfig {
                focal_px,
                min_inverse_depth: MIN_INVERSE_DEPTH,
                ..BaConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub frame: usize,
    pub rotation: Rotation,
    pub translation: [f64; 3],
    pub center: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub track_id: u64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pairs: Vec<PairDiagnostic>,
    pub closures: Vec<ClosureDiagnostic>,
    /// Largest disagreement (degrees) between an accepted closure edge and the
    /// tree initialization, which ignores closures.
    pub closure_gap_before_deg: Option<f64>,
    /// The same disagreement after rotation averaging.
    pub closure_gap_after_deg: Option<f64>,
    /// First-to-last rotation error against ground truth, when supplied.
    pub drift_before_deg: Option<f64>,
    pub drift_after_deg: Option<f64>,
    pub drift_final_deg: Option<f64>,
    /// Mean gauge-aligned camera rotation error against ground truth.
    pub mean_rotation_error_deg: Option<f64>,
    pub averaging_iterations: usize,
    pub averaging_converged: bool,
    pub tracks_used: usize,
    pub inverse_depth_fallbacks: usize,
    pub ba: BaStatus,
    pub reprojection: ReprojectionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOutput {
    pub facing: Facing,
    pub cameras: Vec<CameraPose>,
    pub points: Vec<ScenePoint>,
    pub diagnostics: Diagnostics,
}

fn max_closure_gap(rotations: &GlobalRotations, closures: &[Edge]) -> Option<f64> {
    closures
        .iter()
        .map(|e| rotations.relative(e.i, e.j).angle_to(&e.rotation).to_degrees())
        .reduce(f64::max)
}

fn drift_deg(rotations: &GlobalRotations, truth: Option<&[Rotation]>) -> Option<f64> {
    let truth = truth?;
    let last = truth.len().checked_sub(1)?;
    let gt = truth[last] * truth[0].transpose();
    Some(rotations.relative(0, last).angle_to(&gt).to_degrees())
}

/// Mean angle between `R_i R_0ᵀ` and its ground-truth counterpart.
pub fn mean_rotation_error_deg(rotations: &GlobalRotations, truth: &[Rotation]) -> f64 {
    let n = truth.len().min(rotations.rotations.len());
    let total: f64 = (0..n)
        .map(|i| {
            let gt = truth[i] * truth[0].transpose();
            rotations.relative(0, i).angle_to(&gt)
        })
        .sum();
    (total / n.max(1) as f64).to_degrees()
}

/// Full pipeline from normalized tracks and loop candidates to cameras and points.
pub fn reconstruct(
    tracks: &NormalizedTracks,
    candidates: &[NormalizedCandidate],
    cfg: &PipelineConfig,
    truth: Option<&[Rotation]>,
) -> Result<ReconstructionOutput> {
    if let Some(t) = truth {
        if t.len() != tracks.frames {
            return Err(Error::InvalidInput(format!(
                "ground truth has {} rotations for {} frames",
                t.len(),
                tracks.frames
            )));
        }
    }
    let facing = cfg.facing;
    let seq = sequential_poses(tracks, facing, &cfg.ransac)?;
    let closures = detect_loop_closures(candidates, facing, &cfg.ransac, cfg.min_loop_inliers, cfg.closure_mode)?;
    log::info!(
        "{} sequential edges, {} loop closures",
        seq.graph.edges.len(),
        closures.edges.len()
    );

    let mut graph = seq.graph.clone();
    for e in &closures.edges {
        graph.add_edge(*e)?;
    }
    let init = spanning_tree_init(&graph)?;
    let averaged = average_rotations_l1(&graph, &init, &cfg.averaging)?;

    let ba_tracks: Vec<Track> = seq
        .tracks
        .tracks
        .iter()
        .map(|t| {
            let obs = t.obs.iter().map(|&(camera, point)| Observation { camera, point }).collect();
            Track::new(t.id, obs)
        })
        .collect::<Result<_>>()?;
    let graph_tracks = TrackGraph {
        num_cameras: tracks.frames,
        facing,
        tracks: ba_tracks,
    };
    let mut state = BaState::new(graph_tracks, &averaged.rotations)?;
    let fallbacks = initialize_inverse_depths(&mut state, cfg.ba.min_inverse_depth);
    let ba = bundle_adjust(&state, &cfg.ba);
    let mut refined = ba.state.global_rotations();
    refined.regauge();

    let cameras = refined
        .rotations
        .iter()
        .enumerate()
        .map(|(frame, r)| {
            let ext = SphericalExtrinsics::new(*r, facing);
            let c: Vector3<f64> = ext.center();
            let t = ext.translation();
            CameraPose {
                frame,
                rotation: *r,
                translation: [t.x, t.y, t.z],
                center: [c.x, c.y, c.z],
            }
        })
        .collect();
    // Regauging maps world points through camera 0's rotation.
    let r0 = ba.state.rotations()[0];
    let points = ba
        .state
        .tracks
        .iter()
        .zip(ba.state.points())
        .map(|(t, x)| {
            let p = r0.rotate(&x);
            ScenePoint {
                track_id: t.id,
                position: [p.x, p.y, p.z],
            }
        })
        .collect();

    Ok(ReconstructionOutput {
        facing,
        cameras,
        points,
        diagnostics: Diagnostics {
            pairs: seq.pairs,
            closures: closures.diagnostics,
            closure_gap_before_deg: max_closure_gap(&init, &closures.edges),
            closure_gap_after_deg: max_closure_gap(&averaged.rotations, &closures.edges),
            drift_before_deg: drift_deg(&init, truth),
            drift_after_deg: drift_deg(&averaged.rotations, truth),
            drift_final_deg: drift_deg(&refined, truth),
            mean_rotation_error_deg: truth.map(|t| mean_rotation_error_deg(&refined, t)),
            averaging_iterations: averaged.iterations,
            averaging_converged: averaged.converged,
            tracks_used: ba.state.tracks.len(),
            inverse_depth_fallbacks: fallbacks,
            reprojection: reprojection_stats(&ba.state, cfg.ba.focal_px),
            ba: ba.status,
        },
    })
}
