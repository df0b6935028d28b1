use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{exp_so3, log_so3, AxisAngle, Rotation};

/// Residuals shorter than this count as coinciding with the current estimate.
const COINCIDENCE_TOL: f64 = 1e-12;

/// Relative rotation `R_ij = R_j · R_iᵀ` between cameras `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub rotation: Rotation,
    pub weight: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, rotation: Rotation) -> Self {
        Edge { i, j, rotation, weight: 1.0 }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn is_sequential(&self) -> bool {
        self.i.abs_diff(self.j) == 1
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RotationGraph {
    pub num_cameras: usize,
    pub edges: Vec<Edge>,
}

impl RotationGraph {
    pub fn new(num_cameras: usize) -> Self {
        RotationGraph { num_cameras, edges: Vec::new() }
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<()> {
        if edge.i == edge.j || edge.i >= self.num_cameras || edge.j >= self.num_cameras {
            return Err(Error::InvalidInput(format!(
                "edge ({}, {}) invalid for {} cameras",
                edge.i, edge.j, self.num_cameras
            )));
        }
        if !(edge.weight > 0.0) {
            return Err(Error::InvalidInput(format!("edge weight {} must be positive", edge.weight)));
        }
        self.edges.push(edge);
        Ok(())
    }

    fn unreached(&self) -> usize {
        let mut seen = vec![false; self.num_cameras];
        let mut queue = VecDeque::new();
        if self.num_cameras > 0 {
            seen[0] = true;
            queue.push_back(0);
        }
        let adj = self.adjacency();
        while let Some(k) = queue.pop_front() {
            for &e in &adj[k] {
                let other = self.edges[e].i + self.edges[e].j - k;
                if !seen[other] {
                    seen[other] = true;
                    queue.push_back(other);
                }
            }
        }
        seen.iter().filter(|&&s| !s).count()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_cameras];
        for (idx, e) in self.edges.iter().enumerate() {
            adj[e.i].push(idx);
            adj[e.j].push(idx);
        }
        adj
    }

    fn check_connected(&self) -> Result<()> {
        match self.unreached() {
            0 => Ok(()),
            unreached => Err(Error::DisconnectedGraph { unreached }),
        }
    }
}

/// Absolute rotations, gauge-fixed so camera 0 is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRotations {
    pub rotations: Vec<Rotation>,
}

impl GlobalRotations {
    /// Re-expresses all rotations so camera 0 becomes the identity.
    pub fn regauge(&mut self) {
        if let Some(&r0) = self.rotations.first() {
            let r0t = r0.transpose();
            for r in self.rotations.iter_mut() {
                *r = Rotation::project(&(r.matrix() * r0t.matrix()));
            }
        }
    }

    /// Estimated rotation from camera `i` to camera `j`.
    pub fn relative(&self, i: usize, j: usize) -> Rotation {
        self.rotations[j] * self.rotations[i].transpose()
    }
}

/// Grows a tree from camera 0, preferring sequential edges and then heavier
/// ones, and composes rotations along it.
pub fn spanning_tree_init(g: &RotationGraph) -> Result<GlobalRotations> {
    g.check_connected()?;
    let n = g.num_cameras;
    let adj = g.adjacency();
    let mut rotations = vec![Rotation::identity(); n];
    if n == 0 {
        return Ok(GlobalRotations { rotations });
    }
    let mut visited = vec![false; n];
    visited[0] = true;
    let priority = |e: &Edge| (e.is_sequential(), e.weight);
    let mut frontier: Vec<usize> = adj[0].clone();
    for _ in 1..n {
        frontier.retain(|&e| !(visited[g.edges[e].i] && visited[g.edges[e].j]));
        let (&best, _) = frontier
            .iter()
            .map(|e| (e, priority(&g.edges[*e])))
            .reduce(|a, b| {
                let better = b.1 .0 && !a.1 .0 || (b.1 .0 == a.1 .0 && b.1 .1 > a.1 .1);
                let tie = b.1 == a.1 && b.0 < a.0;
                if better || tie { b } else { a }
            })
            .expect("graph is connected");
        let e = &g.edges[best];
        let new = if visited[e.i] {
            rotations[e.j] = e.rotation * rotations[e.i];
            e.j
        } else {
            rotations[e.i] = e.rotation.transpose() * rotations[e.j];
            e.i
        };
        visited[new] = true;
        frontier.extend(adj[new].iter().copied());
    }
    let mut out = GlobalRotations { rotations };
    out.regauge();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Each camera sees neighbours already updated in the current sweep.
    #[default]
    GaussSeidel,
    /// All cameras update from the previous sweep's estimates.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub mode: UpdateMode,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            max_iters: 100,
            tol: 1e-6,
            mode: UpdateMode::GaussSeidel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingResult {
    pub rotations: GlobalRotations,
    pub iterations: usize,
    /// False when `max_iters` sweeps ran without the update dropping below `tol`.
    pub converged: bool,
}

/// One weighted Weiszfeld step toward the geodesic median of `estimates`,
/// returned as a left tangent update.
fn weiszfeld_step(current: &Rotation, estimates: &[(Rotation, f64)]) -> Vector3<f64> {
    let ct = current.transpose();
    let mut num = Vector3::zeros();
    let mut den = 0.0;
    let mut coincident = 0.0;
    for (q, w) in estimates {
        let d = log_so3(&(*q * ct)).0;
        let norm = d.norm();
        if norm < COINCIDENCE_TOL {
            coincident += w;
        } else {
            num += d * (w / norm);
            den += w / norm;
        }
    }
    if den == 0.0 {
        return Vector3::zeros();
    }
    // Vardi-Zhang correction: a coincident estimate holds the iterate in place
    // unless the pull of the others outweighs it.
    let pull = num.norm();
    if coincident > 0.0 {
        if pull <= coincident {
            return Vector3::zeros();
        }
        return num / den * (1.0 - coincident / pull);
    }
    num / den
}

fn node_estimates(g: &RotationGraph, adj: &[usize], node: usize, rotations: &[Rotation]) -> Vec<(Rotation, f64)> {
    adj.iter()
        .map(|&idx| {
            let e = &g.edges[idx];
            let estimate = if e.i == node {
                e.rotation.transpose() * rotations[e.j]
            } else {
                e.rotation * rotations[e.i]
            };
            (estimate, e.weight)
        })
        .collect()
}

/// Robust L1 averaging by per-camera Weiszfeld sweeps on SO(3).
pub fn average_rotations_l1(
    g: &RotationGraph,
    init: &GlobalRotations,
    cfg: &AveragingConfig,
) -> Result<AveragingResult> {
    g.check_connected()?;
    if init.rotations.len() != g.num_cameras {
        return Err(Error::InvalidInput(format!(
            "initialisation has {} rotations for {} cameras",
            init.rotations.len(),
            g.num_cameras
        )));
    }
    let adj = g.adjacency();
    let mut rotations = init.rotations.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let snapshot = match cfg.mode {
            UpdateMode::Jacobi => Some(rotations.clone()),
            UpdateMode::GaussSeidel => None,
        };
        let mut max_update: f64 = 0.0;
        for node in 0..g.num_cameras {
            if adj[node].is_empty() {
                continue;
            }
            let source = snapshot.as_deref().unwrap_or(&rotations);
            let estimates = node_estimates(g, &adj[node], node, source);
            let delta = weiszfeld_step(&rotations[node], &estimates);
            let step = delta.norm();
            if step > 0.0 {
                rotations[node] = exp_so3(&AxisAngle(delta)) * rotations[node];
            }
            max_update = max_update.max(step);
        }
        if max_update < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("rotation averaging stopped after {iterations} sweeps without converging");
    }
    let mut rotations = GlobalRotations { rotations };
    rotations.regauge();
    Ok(AveragingResult {
        rotations,
        iterations,
        converged,
    })
}

/// Angle of the estimated first-to-last relative rotation against the true one.
pub fn end_to_end_drift(estimated: &GlobalRotations, truth: &[Rotation]) -> f64 {
    let last = truth.len() - 1;
    let est = estimated.relative(0, last);
    let gt = truth[last] * truth[0].transpose();
    est.angle_to(&gt)
}
