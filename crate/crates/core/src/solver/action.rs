use nalgebra::Matrix4;

use super::constraints::{gauss_jordan, ConstraintSystem, MonomialOrder};
use super::roots::is_effectively_real;
use super::{Candidate, SolutionSet};
use crate::error::Result;

/// Solves the constraint system through the eigenvalues of the action matrix
/// for multiplication by `x` on the quotient basis `(y², x, y, 1)`.
pub fn solve_action_matrix(sys: &ConstraintSystem) -> Result<SolutionSet> {
    let sys = sys.reorder(MonomialOrder::GrevlexXY);
    let g = gauss_jordan(&sys.a)?;

    // Rows of [I | G] with leading monomials xy², x², xy.
    let mut ax = Matrix4::zeros();
    for (out, row) in [2usize, 4, 5].into_iter().enumerate() {
        for c in 0..4 {
            ax[(out, c)] = -g[(row, c)];
        }
    }
    ax[(3, 1)] = 1.0;

    let mut candidates = Vec::with_capacity(4);
    for lambda in ax.complex_eigenvalues().iter() {
        if !lambda.re.is_finite() || !is_effectively_real(lambda) {
            continue;
        }
        let x = lambda.re;
        let shifted = ax - Matrix4::identity() * x;
        let svd = shifted.svd(false, true);
        let Some(v_t) = svd.v_t else { continue };
        // Eigenvector ∝ (y², x, y, 1); read y from the last two entries.
        let v = v_t.row(3);
        if v[3].abs() <= 1e-12 * v.norm() {
            continue;
        }
        let y = v[2] / v[3];
        if !y.is_finite() {
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
