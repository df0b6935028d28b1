use nalgebra::{DMatrix, SVector, Vector3};

use super::CorrespondenceSet;
use crate::error::{Error, Result};

pub type Vector6 = SVector<f64, 6>;

/// Smallest-to-largest singular value ratio below which the system is
/// treated as losing rank.
const RANK_TOL: f64 = 1e-10;

/// Three orthonormal 6-vectors spanning the (least-squares) right nullspace
/// of the stacked epipolar system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullspaceBasis {
    pub b1: Vector6,
    pub b2: Vector6,
    pub b3: Vector6,
}

impl NullspaceBasis {
    pub fn vectors(&self) -> [&Vector6; 3] {
        [&self.b1, &self.b2, &self.b3]
    }

    /// The parameter vector `x·b1 + y·b2 + z·b3`.
    pub fn combine(&self, x: f64, y: f64, z: f64) -> Vector6 {
        self.b1 * x + self.b2 * y + self.b3 * z
    }
}

/// One row of the linear system `M e = 0` on the six spherical essential parameters.
pub fn epipolar_row(u: &Vector3<f64>, v: &Vector3<f64>) -> [f64; 6] {
    [
        u.x * v.x - u.y * v.y,
        u.x * v.y + u.y * v.x,
        u.z * v.x,
        u.z * v.y,
        u.x * v.z,
        u.y * v.z,
    ]
}

pub fn build_epipolar_system(c: &CorrespondenceSet) -> Result<DMatrix<f64>> {
    if c.len() < 3 {
        return Err(Error::InsufficientCorrespondences {
            needed: 3,
            got: c.len(),
        });
    }
    let mut m = DMatrix::zeros(c.len(), 6);
    for (i, (u, v)) in c.pairs().enumerate() {
        for (j, value) in epipolar_row(u, v).into_iter().enumerate() {
            m[(i, j)] = value;
        }
    }
    Ok(m)
}

/// Right singular vectors of the three smallest singular values.
///
/// Inputs with fewer than six rows are zero-padded so the SVD yields a full
/// 6×6 `V`.
pub fn compute_nullspace(m: &DMatrix<f64>) -> Result<NullspaceBasis> {
    if m.ncols() != 6 {
        return Err(Error::InvalidInput(format!(
            "epipolar system must have 6 columns, got {}",
            m.ncols()
        )));
    }
    if m.nrows() < 3 {
        return Err(Error::InsufficientCorrespondences {
            needed: 3,
            got: m.nrows(),
        });
    }
    let padded = if m.nrows() < 6 {
        let mut p = DMatrix::zeros(6, 6);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::RankDeficient)?;
    let sv = &svd.singular_values;
    if !(sv[0] > 0.0) || sv[2] <= RANK_TOL * sv[0] {
        return Err(Error::RankDeficient);
    }
    let row = |i: usize| Vector6::from_iterator(v_t.row(i).iter().copied());
    Ok(NullspaceBasis {
        b1: row(3),
        b2: row(4),
        b3: row(5),
    })
}
