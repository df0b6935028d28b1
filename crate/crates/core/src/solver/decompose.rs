use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::so3::{Facing, RelativePose, Rotation, SphericalEssential, DEGENERATE_TRANSLATION};

/// Both rotations of the twisted pair together with their consistency scores.
#[derive(Debug, Clone, Copy)]
pub struct TwistedPair {
    pub a: RelativePose,
    pub b: RelativePose,
    /// Translation direction from the left singular vectors, up to sign.
    pub direction: Vector3<f64>,
    pub score_a: f64,
    pub score_b: f64,
}

impl TwistedPair {
    pub fn select(&self) -> Result<RelativePose> {
        if self.a.translation.norm() < DEGENERATE_TRANSLATION
            && self.b.translation.norm() < DEGENERATE_TRANSLATION
        {
            return Err(Error::DegenerateMotion);
        }
        Ok(if self.score_a > self.score_b { self.a } else { self.b })
    }
}

fn score(t: &Vector3<f64>, direction: &Vector3<f64>) -> f64 {
    let n = t.norm();
    if n < DEGENERATE_TRANSLATION {
        0.0
    } else {
        t.dot(direction).abs() / n
    }
}

pub fn twisted_pair(e: &SphericalEssential, facing: Facing) -> TwistedPair {
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u.expect("svd u");
    let mut v = svd.v_t.expect("svd v_t").transpose();
    // The third singular value is zero, so flipping the third singular
    // vectors leaves E unchanged.
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v.determinant() < 0.0 {
        v.column_mut(2).neg_mut();
    }
    let d = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let ra = Rotation::from_matrix_unchecked(u * d * v.transpose());
    let rb = Rotation::from_matrix_unchecked(u * d.transpose() * v.transpose());
    let direction: Vector3<f64> = u.column(2).into_owned();
    let a = RelativePose::from_rotation(ra, facing);
    let b = RelativePose::from_rotation(rb, facing);
    TwistedPair {
        score_a: score(&a.translation, &direction),
        score_b: score(&b.translation, &direction),
        a,
        b,
        direction,
    }
}

/// Picks the member of the twisted pair whose spherical translation best
/// agrees with the essential matrix's translation direction.
pub fn decompose_essential(e: &SphericalEssential, facing: Facing) -> Result<RelativePose> {
    twisted_pair(e, facing).select()
}
