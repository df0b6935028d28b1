//! Rotation algebra and the geometry of cameras constrained to the unit sphere.
//!
//! A spherical camera has extrinsics `[R | t]` where `t` is fixed to `+z`
//! (inward facing) or `-z` (outward facing), so its centre `-Rᵀt` always lies
//! on the unit sphere and its optical axis passes through the sphere centre.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;
/// Below this trace offset from -1 the axis is read from the symmetric part.
const NEAR_PI_TRACE: f64 = 1e-6;
/// Translations shorter than this carry no epipolar geometry.
pub const DEGENERATE_TRANSLATION: f64 = 1e-9;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Element of SO(3) stored as an orthonormal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and unit determinant to 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthonormal (max deviation {err:e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Projects an approximately orthonormal matrix onto SO(3) via SVD.
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Rotation(r)
    }

    pub fn about_x(angle: f64) -> Self {
        exp_so3(&AxisAngle(Vector3::x() * angle))
    }

    pub fn about_y(angle: f64) -> Self {
        exp_so3(&AxisAngle(Vector3::y() * angle))
    }

    pub fn about_z(angle: f64) -> Self {
        exp_so3(&AxisAngle(Vector3::z() * angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Third column `r₃`, the image of the optical axis.
    pub fn third_column(&self) -> Vector3<f64> {
        self.0.column(2).into_owned()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        log_so3(&(*self * other.transpose())).angle()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = Error;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        std::array::from_fn(|i| std::array::from_fn(|j| r.0[(i, j)]))
    }
}

/// Rotation vector: unit axis scaled by the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn zero() -> Self {
        AxisAngle(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Maps the vector to the equivalent one with norm in `[0, π]`.
    pub fn canonical(&self) -> Self {
        log_so3(&exp_so3(self))
    }
}

/// Rodrigues' formula.
pub fn exp_so3(r: &AxisAngle) -> Rotation {
    let theta2 = r.0.norm_squared();
    let k = skew(&r.0);
    let (a, b) = if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

pub fn log_so3(rot: &Rotation) -> AxisAngle {
    let m = &rot.0;
    let trace = m.trace();
    let w = vee(&(m - m.transpose())) * 0.5; // sin(θ)·axis
    let cos = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = w.norm();
    let theta = sin.atan2(cos);

    if trace < -1.0 + NEAR_PI_TRACE {
        // sym(R) = cos θ·I + (1 − cos θ)·a aᵀ; take the dominant column of a aᵀ.
        let s = ((m + m.transpose()) * 0.5 - Matrix3::identity() * cos) / (1.0 - cos);
        let i = (0..3)
            .max_by(|&a, &b| s[(a, a)].total_cmp(&s[(b, b)]))
            .unwrap_or(0);
        let mut axis: Vector3<f64> = s.column(i).into_owned() / s[(i, i)].max(1e-300).sqrt();
        axis.normalize_mut();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        return AxisAngle(axis * theta);
    }

    let scale = if theta < 1e-6 {
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        0.5 * theta / theta.sin()
    };
    AxisAngle(vee(&(m - m.transpose())) * scale)
}

/// Right Jacobian of the exponential map: `exp(r + δ) ≈ exp(r)·exp(J_r(r)·δ)`.
pub fn right_jacobian(r: &AxisAngle) -> Matrix3<f64> {
    let theta2 = r.0.norm_squared();
    let k = skew(&r.0);
    let (a, b) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Which way the optical axis points relative to the sphere centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    Inward,
    Outward,
}

impl Facing {
    /// `+1` for inward, `-1` for outward.
    pub fn sign(self) -> f64 {
        match self {
            Facing::Inward => 1.0,
            Facing::Outward => -1.0,
        }
    }

    /// Camera translation implied by the facing: `±z`.
    pub fn translation(self) -> Vector3<f64> {
        Vector3::z() * self.sign()
    }

    pub fn flipped(self) -> Self {
        match self {
            Facing::Inward => Facing::Outward,
            Facing::Outward => Facing::Inward,
        }
    }
}

impl std::str::FromStr for Facing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inward" | "in" => Ok(Facing::Inward),
            "outward" | "out" => Ok(Facing::Outward),
            other => Err(Error::InvalidInput(format!("unknown facing '{other}'"))),
        }
    }
}

/// Absolute pose of a camera on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalExtrinsics {
    pub rotation: Rotation,
    pub facing: Facing,
}

impl SphericalExtrinsics {
    pub fn new(rotation: Rotation, facing: Facing) -> Self {
        Self { rotation, facing }
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.facing.translation()
    }

    /// Camera centre `-Rᵀt`; unit length by construction.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.matrix().transpose() * self.translation())
    }

    /// World point into camera coordinates.
    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(x) + self.translation()
    }
}

/// Relative pose between two spherical cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
    pub facing: Facing,
}

impl RelativePose {
    /// Builds the pose whose translation is forced by the rotation:
    /// `z - r₃` inward, `r₃ - z` outward.
    pub fn from_rotation(rotation: Rotation, facing: Facing) -> Self {
        let translation = (Vector3::z() - rotation.third_column()) * facing.sign();
        RelativePose {
            rotation,
            translation,
            facing,
        }
    }
}

/// Relative pose taking camera 1 coordinates to camera 2 coordinates.
pub fn relative_pose(r1: &Rotation, r2: &Rotation, facing: Facing) -> RelativePose {
    RelativePose::from_rotation(*r2 * r1.transpose(), facing)
}

/// Essential matrix with the spherical-motion structure
///
/// ```text
/// | e1  e2  e3 |
/// | e2 -e1  e4 |
/// | e5  e6  0  |
/// ```
///
/// defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalEssential(Matrix3<f64>);

impl SphericalEssential {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        check_spherical_essential(&m).map_err(Error::InvalidInput)?;
        Ok(SphericalEssential(m))
    }

    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        SphericalEssential(m)
    }

    pub fn from_params(e: &[f64; 6]) -> Self {
        SphericalEssential(Matrix3::new(
            e[0], e[1], e[2], e[1], -e[0], e[3], e[4], e[5], 0.0,
        ))
    }

    pub fn params(&self) -> [f64; 6] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 2)], m[(2, 0)], m[(2, 1)]]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Scaled to unit Frobenius norm.
    pub fn normalized(&self) -> Self {
        SphericalEssential(self.0 / self.0.norm())
    }

    /// `vᵀ E u`.
    pub fn epipolar_residual(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        v.dot(&(self.0 * u))
    }

    pub fn is_valid(&self) -> bool {
        check_spherical_essential(&self.0).is_ok()
    }
}

/// Checks the structural and singular-value conditions of a spherical essential matrix.
pub fn check_spherical_essential(m: &Matrix3<f64>) -> std::result::Result<(), String> {
    let scale = m.norm();
    if !scale.is_finite() || scale == 0.0 {
        return Err("essential matrix is zero or non-finite".into());
    }
    let e = m / scale;
    let structure = [
        ("e[2][2] = 0", e[(2, 2)].abs()),
        ("e[1][0] = e[0][1]", (e[(1, 0)] - e[(0, 1)]).abs()),
        ("e[1][1] = -e[0][0]", (e[(1, 1)] + e[(0, 0)]).abs()),
    ];
    for (name, dev) in structure {
        if dev > 1e-9 {
            return Err(format!("structure violated: {name} (deviation {dev:e})"));
        }
    }
    let mut sv: Vec<f64> = e.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[2] / sv[0] > 1e-9 {
        return Err(format!("not rank 2 (σ₃/σ₁ = {:e})", sv[2] / sv[0]));
    }
    if (sv[0] - sv[1]).abs() / sv[0] > 1e-6 {
        return Err(format!(
            "non-zero singular values differ ({} vs {})",
            sv[0], sv[1]
        ));
    }
    Ok(())
}

/// `E = [t]ₓ R`.
pub fn essential_from_relative(pose: &RelativePose) -> Result<SphericalEssential> {
    if pose.translation.norm() < DEGENERATE_TRANSLATION {
        return Err(Error::DegenerateMotion);
    }
    let mut e = skew(&pose.translation) * pose.rotation.matrix();
    // These entries vanish analytically; pin them so the structure is exact.
    let sym = 0.5 * (e[(0, 1)] + e[(1, 0)]);
    let diag = 0.5 * (e[(0, 0)] - e[(1, 1)]);
    e[(0, 1)] = sym;
    e[(1, 0)] = sym;
    e[(0, 0)] = diag;
    e[(1, 1)] = -diag;
    e[(2, 2)] = 0.0;
    Ok(SphericalEssential(e))
}
