//! Cubic trace constraints `E Eᵀ E - ½ tr(E Eᵀ) E = 0` expanded over the
//! nullspace parameterisation `E(x, y) = x·E₁ + y·E₂ + E₃`.

use nalgebra::{Matrix3, SMatrix};

use super::system::{NullspaceBasis, Vector6};
use crate::error::{Error, Result};
use crate::so3::SphericalEssential;

pub type Matrix6x10 = SMatrix<f64, 6, 10>;
pub type Matrix6x4 = SMatrix<f64, 6, 4>;

/// Column ordering of the ten monomials in `x`, `y` up to degree three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonomialOrder {
    /// Graded reverse lexicographic:
    /// `x³ x²y xy² y³ x² xy y² x y 1`.
    GrevlexXY,
    /// `x³ x²y xy² y³ y² y x² xy x 1`, which leaves `x², x, 1` as the
    /// trailing monomials after elimination.
    Reordered,
}

/// `(x exponent, y exponent)` per column, graded reverse lexicographic order.
const GREVLEX: [(u8, u8); 10] = [
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (2, 0),
    (1, 1),
    (0, 2),
    (1, 0),
    (0, 1),
    (0, 0),
];

/// Position in the grevlex layout of each reordered column.
const REORDERED_FROM_GREVLEX: [usize; 10] = [0, 1, 2, 3, 6, 8, 4, 5, 7, 9];

impl MonomialOrder {
    pub fn exponents(self) -> [(u8, u8); 10] {
        match self {
            MonomialOrder::GrevlexXY => GREVLEX,
            MonomialOrder::Reordered => REORDERED_FROM_GREVLEX.map(|i| GREVLEX[i]),
        }
    }

    pub fn monomials(self, x: f64, y: f64) -> [f64; 10] {
        self.exponents()
            .map(|(a, b)| x.powi(a as i32) * y.powi(b as i32))
    }
}

/// 6×10 coefficient matrix of the independent cubic constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSystem {
    pub a: Matrix6x10,
    pub order: MonomialOrder,
    pub basis: NullspaceBasis,
}

impl ConstraintSystem {
    /// Values of the six polynomials at `(x, y)`.
    pub fn evaluate(&self, x: f64, y: f64) -> [f64; 6] {
        let m = self.order.monomials(x, y);
        std::array::from_fn(|r| (0..10).map(|c| self.a[(r, c)] * m[c]).sum())
    }

    /// Same constraints with columns permuted to `order`.
    pub fn reorder(&self, order: MonomialOrder) -> ConstraintSystem {
        if order == self.order {
            return *self;
        }
        let grevlex = match self.order {
            MonomialOrder::GrevlexXY => self.a,
            MonomialOrder::Reordered => {
                let mut g = Matrix6x10::zeros();
                for (col, &src) in REORDERED_FROM_GREVLEX.iter().enumerate() {
                    g.set_column(src, &self.a.column(col));
                }
                g
            }
        };
        ConstraintSystem {
            a: permute(&grevlex, order),
            order,
            basis: self.basis,
        }
    }

    /// `E(x, y)` for `z = 1`, scaled to unit Frobenius norm.
    pub fn essential_at(&self, x: f64, y: f64) -> SphericalEssential {
        let p = self.basis.combine(x, y, 1.0);
        SphericalEssential::from_params(&to_array(&p)).normalized()
    }
}

fn to_array(v: &Vector6) -> [f64; 6] {
    std::array::from_fn(|i| v[i])
}

fn permute(grevlex: &Matrix6x10, order: MonomialOrder) -> Matrix6x10 {
    match order {
        MonomialOrder::GrevlexXY => *grevlex,
        MonomialOrder::Reordered => {
            let mut a = Matrix6x10::zeros();
            for (col, &src) in REORDERED_FROM_GREVLEX.iter().enumerate() {
                a.set_column(col, &grevlex.column(src));
            }
            a
        }
    }
}

// Polynomials in (x, y) by degree:
//   linear    [x, y, 1]
//   quadratic [x², xy, y², x, y, 1]
//   cubic     grevlex layout
type Lin = [f64; 3];
type Quad = [f64; 6];
type Cubic = [f64; 10];

fn lin_mul(p: &Lin, q: &Lin) -> Quad {
    let [a, b, c] = *p;
    let [d, e, f] = *q;
    [a * d, a * e + b * d, b * e, a * f + c * d, b * f + c * e, c * f]
}

fn quad_mul_lin(q: &Quad, l: &Lin) -> Cubic {
    let [a, b, c] = *l;
    [
        q[0] * a,
        q[0] * b + q[1] * a,
        q[1] * b + q[2] * a,
        q[2] * b,
        q[0] * c + q[3] * a,
        q[1] * c + q[3] * b + q[4] * a,
        q[2] * c + q[4] * b,
        q[3] * c + q[5] * a,
        q[4] * c + q[5] * b,
        q[5] * c,
    ]
}

fn spherical(p: &Vector6) -> Matrix3<f64> {
    *SphericalEssential::from_params(&to_array(p)).matrix()
}

/// Expands rows two and three of the trace constraint into a 6×10 system.
pub fn build_cubic_constraints(basis: &NullspaceBasis, order: MonomialOrder) -> ConstraintSystem {
    let (e1, e2, e3) = (spherical(&basis.b1), spherical(&basis.b2), spherical(&basis.b3));
    let e: [[Lin; 3]; 3] =
        std::array::from_fn(|r| std::array::from_fn(|c| [e1[(r, c)], e2[(r, c)], e3[(r, c)]]));

    let mut eet = [[[0.0; 6]; 3]; 3];
    for (r, row) in eet.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            for k in 0..3 {
                let prod = lin_mul(&e[r][k], &e[c][k]);
                for (acc, p) in entry.iter_mut().zip(prod) {
                    *acc += p;
                }
            }
        }
    }
    let mut half_trace = [0.0; 6];
    for (i, diag) in eet.iter().enumerate() {
        for (acc, d) in half_trace.iter_mut().zip(diag[i]) {
            *acc += 0.5 * d;
        }
    }

    let mut a = Matrix6x10::zeros();
    for (row_out, r) in (1..3).enumerate() {
        for c in 0..3 {
            let mut poly = quad_mul_lin(&half_trace, &e[r][c]).map(|v| -v);
            for (k, ek) in e.iter().enumerate() {
                let term = quad_mul_lin(&eet[r][k], &ek[c]);
                for (acc, t) in poly.iter_mut().zip(term) {
                    *acc += t;
                }
            }
            for (col, value) in poly.into_iter().enumerate() {
                a[(row_out * 3 + c, col)] = value;
            }
        }
    }
    ConstraintSystem {
        a: permute(&a, order),
        order,
        basis: *basis,
    }
}

/// Gauss-Jordan elimination with partial pivoting, returning `G` such that
/// the reduced system is `[I₆ | G]`.
pub fn gauss_jordan(a: &Matrix6x10) -> Result<Matrix6x4> {
    let mut m = *a;
    let scale = m.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::EliminationFailed { column: 0 });
    }
    for col in 0..6 {
        let pivot_row = (col..6)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap_or(col);
        let pivot = m[(pivot_row, col)];
        if pivot.abs() < 1e-12 * scale {
            return Err(Error::EliminationFailed { column: col });
        }
        m.swap_rows(col, pivot_row);
        let inv = 1.0 / pivot;
        for c in col..10 {
            m[(col, c)] *= inv;
        }
        for r in 0..6 {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f != 0.0 {
                for c in col..10 {
                    m[(r, c)] -= f * m[(col, c)];
                }
            }
        }
    }
    Ok(m.fixed_columns::<4>(6).into_owned())
}
