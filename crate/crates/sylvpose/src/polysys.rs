//! First-order stationarity system of the reduced cost on the quaternion
//! sphere.
//!
//! The rotation is parametrized by the homogenized quadratic map
//! r(q) = vec_rows((q^T q) I + 2 w [v]_x + 2 [v]_x^2), which agrees with the
//! rotation matrix on the unit sphere and makes every entry exactly
//! degree-2 homogeneous. The sphere-constrained stationarity condition
//! becomes e_hat(q, lambda) = g_hat(q) - lambda (q^T q) q with
//! g_hat = g_3 + (q^T q) g_1, four degree-3 homogeneous polynomials holding
//! 20 coefficients each. Rows of the 4x20 coefficient matrix C are ordered
//! (w, x, y, z); columns follow the graded-lexicographic degree-3 basis.
//!
//! The six lambda-free minors f_(u,v) = v g_hat_u - u g_hat_v (quartics) cut
//! out the same critical points with the multiplier eliminated; they feed the
//! saturated eliminant rows.

use crate::poly::{monomial_vector, HomoPoly};
use crate::reduction::CanonicalForm;
use nalgebra::{SMatrix, SVector};
use std::sync::OnceLock;

pub type CMatrix = SMatrix<f64, 4, 20>;

/// Ordered variable pairs of the lambda-free minors.
pub const F_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

struct RotationTables {
    r: [HomoPoly; 9],
    dr: [[HomoPoly; 4]; 9],
    qq: HomoPoly,
    lambda_block: CMatrix,
}

fn tables() -> &'static RotationTables {
    static TABLES: OnceLock<RotationTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let r = build_r_polys();
        let dr = std::array::from_fn(|k| std::array::from_fn(|i| r[k].partial_derivative(i)));
        let mut qq = HomoPoly::zero(2);
        for v in 0..4 {
            let mut e = [0u8; 4];
            e[v] = 2;
            qq.add_term(e, 1.0);
        }
        let mut lambda_block = CMatrix::zeros();
        for i in 0..4 {
            let row = qq.mul(&HomoPoly::variable(i));
            for (k, c) in row.coeffs().iter().enumerate() {
                lambda_block[(i, k)] = *c;
            }
        }
        RotationTables {
            r,
            dr,
            qq,
            lambda_block,
        }
    })
}

fn build_r_polys() -> [HomoPoly; 9] {
    // (w, x, y, z) exponent quadruples with signed coefficients, row-major.
    const TERMS: [&[([u8; 4], f64)]; 9] = [
        &[([2, 0, 0, 0], 1.0), ([0, 2, 0, 0], 1.0), ([0, 0, 2, 0], -1.0), ([0, 0, 0, 2], -1.0)],
        &[([0, 1, 1, 0], 2.0), ([1, 0, 0, 1], -2.0)],
        &[([0, 1, 0, 1], 2.0), ([1, 0, 1, 0], 2.0)],
        &[([0, 1, 1, 0], 2.0), ([1, 0, 0, 1], 2.0)],
        &[([2, 0, 0, 0], 1.0), ([0, 2, 0, 0], -1.0), ([0, 0, 2, 0], 1.0), ([0, 0, 0, 2], -1.0)],
        &[([0, 0, 1, 1], 2.0), ([1, 1, 0, 0], -2.0)],
        &[([0, 1, 0, 1], 2.0), ([1, 0, 1, 0], -2.0)],
        &[([0, 0, 1, 1], 2.0), ([1, 1, 0, 0], 2.0)],
        &[([2, 0, 0, 0], 1.0), ([0, 2, 0, 0], -1.0), ([0, 0, 2, 0], -1.0), ([0, 0, 0, 2], 1.0)],
    ];
    std::array::from_fn(|k| {
        let mut p = HomoPoly::zero(2);
        for &(e, c) in TERMS[k] {
            p.add_term(e, c);
        }
        p
    })
}

/// The nine homogenized rotation-vector polynomials.
pub fn r_of_q() -> &'static [HomoPoly; 9] {
    &tables().r
}

/// Jacobian entries dr_k / dq_i (degree 1).
pub fn dr_dq() -> &'static [[HomoPoly; 4]; 9] {
    &tables().dr
}

/// r(q) evaluated numerically.
pub fn eval_r(q: &[f64; 4]) -> SVector<f64, 9> {
    SVector::from_fn(|k, _| tables().r[k].eval(q))
}

/// Fixed coefficient matrix of the multiplier block (q^T q) q_i over the
/// degree-3 basis.
pub fn lambda_block() -> &'static CMatrix {
    &tables().lambda_block
}

/// Coefficients of the four stationarity cubics g_hat over the degree-3
/// monomial basis.
#[derive(Clone, Debug)]
pub struct CoeffMatrixC {
    c: CMatrix,
}

impl CoeffMatrixC {
    pub fn from_matrix(c: CMatrix) -> Self {
        CoeffMatrixC { c }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.c
    }

    pub fn norm(&self) -> f64 {
        self.c.norm()
    }

    pub fn row_poly(&self, i: usize) -> HomoPoly {
        HomoPoly::from_coeffs(3, self.c.row(i).iter().copied().collect())
    }

    /// g_hat(q).
    pub fn eval_g_hat(&self, q: &[f64; 4]) -> SVector<f64, 4> {
        let m3 = SVector::<f64, 20>::from_iterator(monomial_vector(3, q));
        self.c * m3
    }

    /// e_hat(q, lambda) = g_hat(q) - lambda (q^T q) q.
    pub fn eval_e_hat(&self, q: &[f64; 4], lambda: f64) -> SVector<f64, 4> {
        let qq: f64 = q.iter().map(|v| v * v).sum();
        self.eval_g_hat(q) - lambda * qq * SVector::<f64, 4>::from_row_slice(q)
    }

    /// Scale used to normalize e_hat residuals: coefficient mass of both
    /// pencil sides at the given multiplier.
    pub fn residual_scale(&self, lambda: f64) -> f64 {
        self.c.norm() + lambda.abs() * lambda_block().norm()
    }
}

/// Builds C from the canonical form: g_3 = 2 dr^T A_r r, g_1 = 2 dr^T b_r,
/// g_hat = g_3 + (q^T q) g_1.
pub fn build_c(form: &CanonicalForm) -> CoeffMatrixC {
    let t = tables();
    // v_k = (A_r r)_k, degree 2.
    let v: [HomoPoly; 9] = std::array::from_fn(|k| {
        let mut acc = HomoPoly::zero(2);
        for l in 0..9 {
            let a = form.a_r[(k, l)];
            if a != 0.0 {
                acc.axpy(a, &t.r[l]);
            }
        }
        acc
    });
    let mut c = CMatrix::zeros();
    for i in 0..4 {
        let mut g3 = HomoPoly::zero(3);
        let mut g1 = HomoPoly::zero(1);
        for k in 0..9 {
            g3.axpy(2.0, &t.dr[k][i].mul(&v[k]));
            g1.axpy(2.0 * form.b_r[k], &t.dr[k][i]);
        }
        let g_hat = g3.add(&t.qq.mul(&g1));
        for (k, coeff) in g_hat.coeffs().iter().enumerate() {
            c[(i, k)] = *coeff;
        }
    }
    CoeffMatrixC::from_matrix(c)
}

/// The six lambda-free quartic minors in F_PAIRS order.
pub fn f_system(c: &CoeffMatrixC) -> [HomoPoly; 6] {
    let rows: [HomoPoly; 4] = std::array::from_fn(|i| c.row_poly(i));
    std::array::from_fn(|j| {
        let (u, v) = F_PAIRS[j];
        let mut ev = [0u8; 4];
        ev[v] = 1;
        let mut eu = [0u8; 4];
        eu[u] = 1;
        rows[u].mul_monomial(ev).sub(&rows[v].mul_monomial(eu))
    })
}
