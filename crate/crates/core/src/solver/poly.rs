use nalgebra::{Matrix3, Vector3};

use super::constraints::{gauss_jordan, ConstraintSystem, MonomialOrder};
use super::roots::real_roots;
use super::{Candidate, SolutionSet};
use crate::error::Result;

/// Polynomial in `y`, ascending coefficients, degree ≤ 4.
type PolyY = [f64; 5];

fn mul(a: &PolyY, b: &PolyY) -> PolyY {
    let mut out = [0.0; 5];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            if bj == 0.0 {
                continue;
            }
            debug_assert!(i + j < 5, "determinant degree exceeds four");
            out[i + j] += ai * bj;
        }
    }
    out
}

fn sub(a: &PolyY, b: &PolyY) -> PolyY {
    std::array::from_fn(|i| a[i] - b[i])
}

fn add(a: &PolyY, b: &PolyY) -> PolyY {
    std::array::from_fn(|i| a[i] + b[i])
}

/// Quartic `det B(y)` (ascending coefficients), where `B(y)·(x², x, 1)ᵀ = 0`.
pub(crate) fn determinant_quartic(g: &nalgebra::SMatrix<f64, 6, 4>) -> PolyY {
    // G' columns are (x², xy, x, 1); rows 3, 4, 5 have leading y³, y², y.
    let entry = |row: usize, power: usize| -> [PolyY; 3] {
        let mut third = [g[(row, 3)], 0.0, 0.0, 0.0, 0.0];
        third[power] += 1.0;
        [
            [g[(row, 0)], 0.0, 0.0, 0.0, 0.0],
            [g[(row, 2)], g[(row, 1)], 0.0, 0.0, 0.0],
            third,
        ]
    };
    let b = [entry(3, 3), entry(4, 2), entry(5, 1)];
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| {
        sub(&mul(&b[r1][c1], &b[r2][c2]), &mul(&b[r1][c2], &b[r2][c1]))
    };
    let t0 = mul(&b[0][0], &minor(1, 2, 1, 2));
    let t1 = mul(&b[0][1], &minor(1, 2, 0, 2));
    let t2 = mul(&b[0][2], &minor(1, 2, 0, 1));
    add(&sub(&t0, &t1), &t2)
}

fn b_matrix(g: &nalgebra::SMatrix<f64, 6, 4>, y: f64) -> Matrix3<f64> {
    let powers = [y * y * y, y * y, y];
    Matrix3::from_fn(|r, c| {
        let row = r + 3;
        match c {
            0 => g[(row, 0)],
            1 => g[(row, 2)] + g[(row, 1)] * y,
            _ => g[(row, 3)] + powers[r],
        }
    })
}

/// Gauss-Newton on `‖B(y)·(x², x, 1)‖²` with `y` held fixed.
fn refine_x(b: &Matrix3<f64>, mut x: f64) -> f64 {
    let residual = |x: f64| b * Vector3::new(x * x, x, 1.0);
    let mut r = residual(x);
    for _ in 0..8 {
        let j = b * Vector3::new(2.0 * x, 1.0, 0.0);
        let jj = j.norm_squared();
        if jj == 0.0 {
            break;
        }
        let next = x - j.dot(&r) / jj;
        let r_next = residual(next);
        if !(r_next.norm() < r.norm()) {
            break;
        }
        x = next;
        r = r_next;
    }
    x
}

/// Solves the constraint system by reducing it to a single quartic in `y`.
pub fn solve_polynomial(sys: &ConstraintSystem) -> Result<SolutionSet> {
    let sys = sys.reorder(MonomialOrder::Reordered);
    let g = gauss_jordan(&sys.a)?;
    let quartic = determinant_quartic(&g);
    let desc = [quartic[4], quartic[3], quartic[2], quartic[1], quartic[0]];

    let mut candidates = Vec::with_capacity(4);
    for y in real_roots(&desc) {
        // Columns of B differ by orders of magnitude; equilibrate them so
        // the null vector is resolved to full relative precision.
        let b = b_matrix(&g, y);
        let scale: [f64; 3] = std::array::from_fn(|c| {
            let n = b.column(c).norm();
            if n > 0.0 { 1.0 / n } else { 1.0 }
        });
        let scaled = Matrix3::from_fn(|r, c| b[(r, c)] * scale[c]);
        let Some(v_t) = scaled.svd(false, true).v_t else { continue };
        // Null vector ∝ (x², x, 1) after undoing the column scaling.
        let row = v_t.row(2);
        let v: [f64; 3] = std::array::from_fn(|c| row[c] * scale[c]);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if v[2].abs() <= 1e-12 * norm {
            continue;
        }
        let mut x = v[1] / v[2];
        // Cross-check against the (x², x) ratio and average when both are usable.
        if x.abs() > 1e-8 && v[1].abs() > 1e-12 * norm {
            x = 0.5 * (x + v[0] / v[1]);
        }
        let x = refine_x(&b, x);
        if !x.is_finite() {
            continue;
        }
        candidates.push(Candidate {
            x,
            y,
            essential: sys.essential_at(x, y),
        });
    }
    Ok(SolutionSet { candidates })
}
