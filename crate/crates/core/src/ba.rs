use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::averaging::GlobalRotations;
use crate::error::{Error, Result};
use crate::so3::{exp_so3, log_so3, right_jacobian, skew, AxisAngle, Facing, Rotation};

pub const MIN_INVERSE_DEPTH: f64 = 0.01;

/// Camera-frame depth at or below which a point counts as behind the camera.
const BEHIND_CAMERA: f64 = 1e-9;
/// Residual norm (px) at which a term stops contributing gradient.
const RESIDUAL_CAP_PX: f64 = 1e3;
/// Normal scalar below which the inverse-depth system has no parallax.
const PARALLAX_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub camera: usize,
    /// Normalized homogeneous image point (`z = 1`).
    pub point: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub reference_camera: usize,
    /// Sorted by camera; the first entry is the reference observation.
    pub observations: Vec<Observation>,
    pub inverse_depth: f64,
}

impl Track {
    pub fn new(id: u64, mut observations: Vec<Observation>) -> Result<Self> {
        observations.sort_by_key(|o| o.camera);
        if observations.len() < 2 {
            return Err(Error::InvalidInput(format!("track {id} needs at least 2 observations")));
        }
        if observations.windows(2).any(|w| w[0].camera == w[1].camera) {
            return Err(Error::InvalidInput(format!("track {id} observes a camera twice")));
        }
        for o in observations.iter_mut() {
            if o.point.z.abs() < 1e-12 {
                return Err(Error::InvalidInput(format!("track {id} has a point at infinity")));
            }
            o.point /= o.point.z;
        }
        Ok(Track {
            id,
            reference_camera: observations[0].camera,
            observations,
            inverse_depth: MIN_INVERSE_DEPTH,
        })
    }

    pub fn reference_point(&self) -> &Vector3<f64> {
        &self.observations[0].point
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackGraph {
    pub num_cameras: usize,
    pub facing: Facing,
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaState {
    pub facing: Facing,
    pub rotation_params: Vec<AxisAngle>,
    pub tracks: Vec<Track>,
}

impl BaState {
    pub fn new(graph: TrackGraph, rotations: &GlobalRotations) -> Result<Self> {
        if rotations.rotations.len() != graph.num_cameras {
            return Err(Error::InvalidInput(format!(
                "{} rotations for {} cameras",
                rotations.rotations.len(),
                graph.num_cameras
            )));
        }
        if let Some(t) = graph
            .tracks
            .iter()
            .find(|t| t.observations.iter().any(|o| o.camera >= graph.num_cameras))
        {
            return Err(Error::InvalidInput(format!("track {} references an unknown camera", t.id)));
        }
        Ok(BaState {
            facing: graph.facing,
            rotation_params: rotations.rotations.iter().map(log_so3).collect(),
            tracks: graph.tracks,
        })
    }

    pub fn num_cameras(&self) -> usize {
        self.rotation_params.len()
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        self.rotation_params.iter().map(exp_so3).collect()
    }

    pub fn global_rotations(&self) -> GlobalRotations {
        GlobalRotations { rotations: self.rotations() }
    }

    /// Number of free parameters: 3 per non-gauge camera plus one per track.
    pub fn parameter_count(&self) -> usize {
        3 * self.num_cameras().saturating_sub(1) + self.tracks.len()
    }

    /// Packs camera 1.. axis-angle vectors followed by inverse depths.
    pub fn parameters(&self) -> DVector<f64> {
        let cams = self.rotation_params.iter().skip(1).flat_map(|r| r.0.iter().copied());
        let depths = self.tracks.iter().map(|t| t.inverse_depth);
        DVector::from_iterator(self.parameter_count(), cams.chain(depths))
    }

    pub fn set_parameters(&mut self, p: &DVector<f64>) {
        let nc = self.num_cameras().saturating_sub(1);
        for c in 0..nc {
            self.rotation_params[c + 1] = AxisAngle(Vector3::new(p[3 * c], p[3 * c + 1], p[3 * c + 2]));
        }
        for (j, t) in self.tracks.iter_mut().enumerate() {
            t.inverse_depth = p[3 * nc + j];
        }
    }

    /// World points of every track.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let rotations = self.rotations();
        self.tracks
            .iter()
            .map(|t| point_from_inverse_depth(t, &rotations, self.facing))
            .collect()
    }
}

/// World point `R_nᵀ(u/w − t)` of a track with inverse depth `w` along its reference ray.
pub fn point_from_inverse_depth(t: &Track, rotations: &[Rotation], facing: Facing) -> Vector3<f64> {
    let rn = &rotations[t.reference_camera];
    rn.transpose().rotate(&(t.reference_point() / t.inverse_depth - facing.translation()))
}

/// Linear least-squares inverse depth from all non-reference observations,
/// clamped below at `w_min`.
pub fn init_inverse_depth(t: &Track, rotations: &[Rotation], facing: Facing, w_min: f64) -> Result<f64> {
    let rn_t = rotations[t.reference_camera].transpose();
    let tr = facing.translation();
    let (mut num, mut den) = (0.0, 0.0);
    for o in &t.observations[1..] {
        let rel = rotations[o.camera] * rn_t;
        // w·(camera point) = a + w·b
        let a = rel.rotate(t.reference_point());
        let b = tr - rel.rotate(&tr);
        for (ac, bc) in [
            (a.x - o.point.x * a.z, b.x - o.point.x * b.z),
            (a.y - o.point.y * a.z, b.y - o.point.y * b.z),
        ] {
            num -= ac * bc;
            den += bc * bc;
        }
    }
    if den < PARALLAX_TOL {
        return Err(Error::IllConditioned);
    }
    Ok((num / den).max(w_min))
}

/// Sets every track's inverse depth by `init_inverse_depth`, falling back to
/// `w_min` when a track has no parallax. Returns the number of fallbacks.
pub fn initialize_inverse_depths(state: &mut BaState, w_min: f64) -> usize {
    let rotations = state.rotations();
    let mut fallbacks = 0;
    for t in state.tracks.iter_mut() {
        t.inverse_depth = match init_inverse_depth(t, &rotations, state.facing, w_min) {
            Ok(w) => w,
            Err(_) => {
                fallbacks += 1;
                w_min
            }
        };
    }
    fallbacks
}

/// Huber cost of a squared residual norm: quadratic below `delta`, linear above.
pub fn huber(sq_norm: f64, delta: f64) -> f64 {
    if sq_norm <= delta * delta {
        sq_norm
    } else {
        2.0 * delta * sq_norm.sqrt() - delta * delta
    }
}

/// Derivative of `huber` with respect to the squared norm.
fn huber_weight(sq_norm: f64, delta: f64) -> f64 {
    if sq_norm <= delta * delta {
        1.0
    } else {
        delta / sq_norm.sqrt()
    }
}

enum Term {
    /// Reference observation: identically zero.
    Reference,
    /// Behind the camera or beyond the residual cap.
    Capped,
    Live {
        r: Vector2<f64>,
        /// Camera of the observation, with the derivative wrt its rotation.
        ji: (usize, Matrix2x3<f64>),
        /// Reference camera, with the derivative wrt its rotation.
        jn: (usize, Matrix2x3<f64>),
        jw: Vector2<f64>,
    },
}

struct Frame {
    rotations: Vec<Rotation>,
    jr: Vec<Matrix3<f64>>,
}

impl Frame {
    fn new(state: &BaState, with_jacobians: bool) -> Self {
        Frame {
            rotations: state.rotations(),
            jr: if with_jacobians {
                state.rotation_params.iter().map(right_jacobian).collect()
            } else {
                Vec::new()
            },
        }
    }
}

fn term(track: &Track, obs: &Observation, frame: &Frame, facing: Facing, focal: f64, jac: bool) -> Term {
    if obs.camera == track.reference_camera {
        return Term::Reference;
    }
    let ri = frame.rotations[obs.camera].matrix();
    let rn = frame.rotations[track.reference_camera].matrix();
    let w = track.inverse_depth;
    let t = facing.translation();
    let a = rn.transpose() * (track.reference_point() - t * w);
    let q = ri * a + t * w;
    if q.z <= BEHIND_CAMERA {
        return Term::Capped;
    }
    let r = Vector2::new(q.x / q.z - obs.point.x, q.y / q.z - obs.point.y) * focal;
    if r.norm() > RESIDUAL_CAP_PX {
        return Term::Capped;
    }
    if !jac {
        return Term::Live {
            r,
            ji: (obs.camera, Matrix2x3::zeros()),
            jn: (track.reference_camera, Matrix2x3::zeros()),
            jw: Vector2::zeros(),
        };
    }
    let dpi = Matrix2x3::new(
        1.0 / q.z,
        0.0,
        -q.x / (q.z * q.z),
        0.0,
        1.0 / q.z,
        -q.y / (q.z * q.z),
    ) * focal;
    let ri_ax = ri * skew(&a);
    let dq_ri = -ri_ax * frame.jr[obs.camera];
    let dq_rn = ri_ax * frame.jr[track.reference_camera];
    let dq_w = t - ri * (rn.transpose() * t);
    Term::Live {
        r,
        ji: (obs.camera, dpi * dq_ri),
        jn: (track.reference_camera, dpi * dq_rn),
        jw: dpi * dq_w,
    }
}

fn term_cost(term: &Term, delta: f64) -> f64 {
    match term {
        Term::Reference => 0.0,
        Term::Capped => huber(RESIDUAL_CAP_PX * RESIDUAL_CAP_PX, delta),
        Term::Live { r, .. } => huber(r.norm_squared(), delta),
    }
}

/// Total Huber-robustified reprojection cost over all observations, in px².
pub fn reprojection_cost(state: &BaState, huber_delta_px: f64, focal_px: f64) -> f64 {
    let frame = Frame::new(state, false);
    state
        .tracks
        .iter()
        .flat_map(|t| t.observations.iter().map(move |o| (t, o)))
        .map(|(t, o)| term_cost(&term(t, o, &frame, state.facing, focal_px, false), huber_delta_px))
        .sum()
}

/// Cost and its gradient with respect to `BaState::parameters`.
pub fn cost_and_gradient(state: &BaState, huber_delta_px: f64, focal_px: f64) -> (f64, DVector<f64>) {
    let frame = Frame::new(state, true);
    let nc = state.num_cameras().saturating_sub(1);
    let mut grad = DVector::zeros(state.parameter_count());
    let mut cost = 0.0;
    for (j, t) in state.tracks.iter().enumerate() {
        for o in &t.observations {
            let tm = term(t, o, &frame, state.facing, focal_px, true);
            cost += term_cost(&tm, huber_delta_px);
            if let Term::Live { r, ji, jn, jw } = tm {
                let scale = 2.0 * huber_weight(r.norm_squared(), huber_delta_px);
                for (cam, jc) in [ji, jn] {
                    if cam > 0 {
                        let g = jc.transpose() * r * scale;
                        let mut block = grad.fixed_rows_mut::<3>(3 * (cam - 1));
                        block += g;
                    }
                }
                grad[3 * nc + j] += scale * jw.dot(&r);
            }
        }
    }
    (cost, grad)
}

/// Per-observation reprojection error norms in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats {
    /// Mean over every observation, reference observations contributing zero.
    pub mean_px: f64,
    /// Mean over non-reference observations only.
    pub mean_non_reference_px: f64,
    pub max_px: f64,
    pub observations: usize,
}

pub fn reprojection_stats(state: &BaState, focal_px: f64) -> ReprojectionStats {
    let frame = Frame::new(state, false);
    let (mut sum, mut max, mut all, mut live) = (0.0, 0.0f64, 0usize, 0usize);
    for t in &state.tracks {
        for o in &t.observations {
            all += 1;
            let e = match term(t, o, &frame, state.facing, focal_px, false) {
                Term::Reference => continue,
                Term::Capped => RESIDUAL_CAP_PX,
                Term::Live { r, .. } => r.norm(),
            };
            live += 1;
            sum += e;
            max = max.max(e);
        }
    }
    ReprojectionStats {
        mean_px: if all > 0 { sum / all as f64 } else { 0.0 },
        mean_non_reference_px: if live > 0 { sum / live as f64 } else { 0.0 },
        max_px: max,
        observations: all,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaConfig {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub huber_delta_px: f64,
    pub focal_px: f64,
    pub min_inverse_depth: f64,
}

impl Default for BaConfig {
    fn default() -> Self {
        BaConfig {
            max_iters: 100,
            // Curvature is O(focal²), so this gradient means steps near 1e-12.
            gradient_tol: 1e-6,
            huber_delta_px: 2.0,
            focal_px: 600.0,
            min_inverse_depth: MIN_INVERSE_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    RelativeDecrease,
    MaxIterations,
    /// Damping grew without bound: no descent step could be found.
    DampingOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaStatus {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

impl BaStatus {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::GradientTolerance | Termination::RelativeDecrease)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaResult {
    pub state: BaState,
    pub status: BaStatus,
}

const LAMBDA_INIT: f64 = 1e-4;
const LAMBDA_MAX: f64 = 1e16;
const RELATIVE_DECREASE_TOL: f64 = 1e-12;

/// Gauss-Newton normal equations with inverse depths kept separate for the
/// Schur complement.
struct Normal {
    hcc: DMatrix<f64>,
    gc: DVector<f64>,
    /// Per track: `H_ww`, `g_w`, and the coupling to each camera it touches.
    tracks: Vec<(f64, f64, Vec<(usize, Vector3<f64>)>)>,
}

fn accumulate(state: &BaState, cfg: &BaConfig) -> Normal {
    let frame = Frame::new(state, true);
    let nc = state.num_cameras().saturating_sub(1);
    let mut hcc = DMatrix::zeros(3 * nc, 3 * nc);
    let mut gc = DVector::zeros(3 * nc);
    let mut tracks = Vec::with_capacity(state.tracks.len());
    for t in &state.tracks {
        let (mut hww, mut gw) = (0.0, 0.0);
        let mut coupling: Vec<(usize, Vector3<f64>)> = Vec::new();
        for o in &t.observations {
            let Term::Live { r, ji, jn, jw } = term(t, o, &frame, state.facing, cfg.focal_px, true) else {
                continue;
            };
            let wgt = huber_weight(r.norm_squared(), cfg.huber_delta_px);
            hww += wgt * jw.norm_squared();
            gw += wgt * jw.dot(&r);
            let blocks = [ji, jn];
            for (ca, ja) in blocks.iter().filter(|(c, _)| *c > 0) {
                let oa = 3 * (ca - 1);
                let mut g = gc.fixed_rows_mut::<3>(oa);
                g += ja.transpose() * r * wgt;
                let hw = ja.transpose() * jw * wgt;
                match coupling.iter_mut().find(|(c, _)| c == ca) {
                    Some((_, v)) => *v += hw,
                    None => coupling.push((*ca, hw)),
                }
                for (cb, jb) in blocks.iter().filter(|(c, _)| *c > 0) {
                    let ob = 3 * (cb - 1);
                    let mut h = hcc.fixed_view_mut::<3, 3>(oa, ob);
                    h += ja.transpose() * jb * wgt;
                }
            }
        }
        tracks.push((hww, gw, coupling));
    }
    Normal { hcc, gc, tracks }
}

/// Solves the damped system by eliminating inverse depths; returns the step
/// in `BaState::parameters` layout.
fn solve_step(normal: &Normal, lambda: f64) -> Option<DVector<f64>> {
    let nc3 = normal.gc.len();
    let damp = |d: f64| d + lambda * d.max(1e-12);
    let mut s = normal.hcc.clone();
    for k in 0..nc3 {
        s[(k, k)] = damp(s[(k, k)]);
    }
    let mut rhs = -normal.gc.clone();
    let dww: Vec<f64> = normal.tracks.iter().map(|(h, _, _)| damp(*h)).collect();
    for ((_, gw, coupling), &hww) in normal.tracks.iter().zip(&dww) {
        for (ca, va) in coupling {
            let oa = 3 * (ca - 1);
            let mut r = rhs.fixed_rows_mut::<3>(oa);
            r += va * (gw / hww);
            for (cb, vb) in coupling {
                let ob = 3 * (cb - 1);
                let mut blk = s.fixed_view_mut::<3, 3>(oa, ob);
                blk -= va * vb.transpose() / hww;
            }
        }
    }
    let dc = if nc3 > 0 { s.cholesky()?.solve(&rhs) } else { DVector::zeros(0) };
    let mut step = DVector::zeros(nc3 + normal.tracks.len());
    step.rows_mut(0, nc3).copy_from(&dc);
    for (j, ((_, gw, coupling), &hww)) in normal.tracks.iter().zip(&dww).enumerate() {
        let coupled: f64 = coupling.iter().map(|(c, v)| v.dot(&dc.fixed_rows::<3>(3 * (c - 1)))).sum();
        step[nc3 + j] = -(gw + coupled) / hww;
    }
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Levenberg-Marquardt over camera rotations (camera 0 fixed) and inverse depths.
pub fn bundle_adjust(state: &BaState, cfg: &BaConfig) -> BaResult {
    let mut state = state.clone();
    for t in state.tracks.iter_mut() {
        t.inverse_depth = t.inverse_depth.max(cfg.min_inverse_depth);
    }
    let nc3 = 3 * state.num_cameras().saturating_sub(1);
    let mut cost = reprojection_cost(&state, cfg.huber_delta_px, cfg.focal_px);
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut iterations = 0;
    let mut normal = accumulate(&state, cfg);
    let mut termination = Termination::MaxIterations;
    while iterations < cfg.max_iters {
        let grad_norm = normal.gc.amax().max(normal.tracks.iter().map(|t| t.1.abs()).fold(0.0, f64::max));
        if 2.0 * grad_norm < cfg.gradient_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        let Some(step) = solve_step(&normal, lambda) else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                termination = Termination::DampingOverflow;
                break;
            }
            continue;
        };
        let mut candidate = state.clone();
        let mut p = candidate.parameters() + step;
        for k in nc3..p.len() {
            p[k] = p[k].max(cfg.min_inverse_depth);
        }
        candidate.set_parameters(&p);
        let new_cost = reprojection_cost(&candidate, cfg.huber_delta_px, cfg.focal_px);
        if new_cost < cost {
            let decrease = (cost - new_cost) / cost;
            state = candidate;
            cost = new_cost;
            history.push(cost);
            lambda = (lambda / 10.0).max(1e-12);
            if decrease < RELATIVE_DECREASE_TOL {
                termination = Termination::RelativeDecrease;
                break;
            }
            normal = accumulate(&state, cfg);
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                termination = Termination::DampingOverflow;
                break;
            }
        }
    }
    BaResult {
        state,
        status: BaStatus {
            iterations,
            accepted_steps: history.len() - 1,
            initial_cost,
            final_cost: cost,
            cost_history: history,
            termination,
        },
    }
}
