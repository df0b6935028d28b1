//! Minimal and non-minimal solvers for the spherical essential matrix.
//!
//! The pipeline is: stacked epipolar rows → three-dimensional nullspace →
//! six cubic constraints in `(x, y)` → up to four real roots, found either
//! through an action matrix or through a single quartic → essential matrices
//! → relative poses.

mod action;
mod constraints;
mod decompose;
mod poly;
pub mod roots;
mod system;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use action::solve_action_matrix;
pub use constraints::{build_cubic_constraints, gauss_jordan, ConstraintSystem, MonomialOrder};
pub use decompose::{decompose_essential, twisted_pair, TwistedPair};
pub use poly::solve_polynomial;
pub use system::{build_epipolar_system, compute_nullspace, epipolar_row, NullspaceBasis, Vector6};

use crate::error::{Error, Result};
use crate::so3::{Facing, RelativePose, SphericalEssential};

/// Corresponding camera-normalised homogeneous points in two views.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub u: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
}

impl CorrespondenceSet {
    /// Rescales every point so its third coordinate is 1.
    pub fn new(u: Vec<Vector3<f64>>, v: Vec<Vector3<f64>>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::InvalidInput(format!(
                "view sizes differ: {} vs {}",
                u.len(),
                v.len()
            )));
        }
        let normalize = |p: Vector3<f64>| -> Result<Vector3<f64>> {
            if p.z.abs() < 1e-12 || !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!("point {p:?} cannot be normalised")));
            }
            Ok(p / p.z)
        };
        Ok(CorrespondenceSet {
            u: u.into_iter().map(normalize).collect::<Result<_>>()?,
            v: v.into_iter().map(normalize).collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Vector3<f64>, &Vector3<f64>)> {
        self.u.iter().zip(&self.v)
    }

    pub fn subset(&self, indices: &[usize]) -> CorrespondenceSet {
        CorrespondenceSet {
            u: indices.iter().map(|&i| self.u[i]).collect(),
            v: indices.iter().map(|&i| self.v[i]).collect(),
        }
    }
}

/// Root-finding strategy for the cubic constraint system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Eigen-decomposition of the 4×4 action matrix.
    #[serde(alias = "action-matrix")]
    Action,
    /// Closed-form roots of a single quartic.
    #[default]
    Poly,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "action" | "action-matrix" => Ok(SolverMethod::Action),
            "poly" | "polynomial" => Ok(SolverMethod::Poly),
            other => Err(Error::InvalidInput(format!("unknown solver method '{other}'"))),
        }
    }
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverMethod::Action => "action",
            SolverMethod::Poly => "poly",
        })
    }
}

/// One real solution `(x, y)` of the constraint system and its essential
/// matrix (unit Frobenius norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x: f64,
    pub y: f64,
    pub essential: SphericalEssential,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolutionSet {
    pub candidates: Vec<Candidate>,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter()
    }
}

/// A candidate decomposed into a spherical relative pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSolution {
    pub x: f64,
    pub y: f64,
    pub essential: SphericalEssential,
    pub pose: RelativePose,
}

/// All spherical essential matrices consistent with `c` (n ≥ 3).
pub fn solve_essentials(c: &CorrespondenceSet, method: SolverMethod) -> Result<SolutionSet> {
    let m = build_epipolar_system(c)?;
    let basis = compute_nullspace(&m)?;
    match method {
        SolverMethod::Action => {
            solve_action_matrix(&build_cubic_constraints(&basis, MonomialOrder::GrevlexXY))
        }
        SolverMethod::Poly => {
            solve_polynomial(&build_cubic_constraints(&basis, MonomialOrder::Reordered))
        }
    }
}

/// Full chain from correspondences to decomposed relative poses.
///
/// Candidates whose decomposition is degenerate are dropped; an empty result
/// means the system had no real solutions.
pub fn solve_relative_pose(
    c: &CorrespondenceSet,
    facing: Facing,
    method: SolverMethod,
) -> Result<Vec<PoseSolution>> {
    let set = solve_essentials(c, method)?;
    Ok(set
        .iter()
        .filter_map(|cand| {
            decompose_essential(&cand.essential, facing)
                .ok()
                .map(|pose| PoseSolution {
                    x: cand.x,
                    y: cand.y,
                    essential: cand.essential,
                    pose,
                })
        })
        .collect())
}
