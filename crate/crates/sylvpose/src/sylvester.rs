//! Sylvester forms of the stationarity system.
//!
//! For an exponent vector alpha with |alpha| = 2 the four cubics e_hat_i are
//! decomposed over the column basis q^alpha_j = v_j^{alpha_j + 1} (one power
//! of each variable); the determinant of the resulting 4x4 matrix is a
//! Sylvester form: a polynomial that lies in the saturation of the
//! stationarity ideal but not in its plain degree-d slice. These forms supply
//! exactly the rows missing from the degree-7 and degree-8 eliminants.
//!
//! Two assignment rules fill the matrix. Coefficient part: each degree-3
//! monomial of g_hat_i goes to the first column whose basis element divides
//! it, so all four rows share column-wise monomial support. Multiplier part:
//! the term v_j^2 q_i of (q^T q) q_i goes to column j with quotient
//! v_j^{1 - alpha_j} q_i, which keeps every lambda-column a monomial multiple
//! of the vector (w, x, y, z); two such columns in any determinant term kill
//! all lambda powers above one, so the determinant is linear in lambda by
//! construction. Both rules produce valid decompositions of the same e_hat.
//!
//! The forms are linear pencil rows S = p_hi - lambda p_lo with p_hi of
//! coefficient degree 4 and p_lo of degree 3 in the entries of C, which gives
//! the scaling shadow S(q, lambda; s C) = s^4 S(q, lambda / s; C).

use crate::poly::{lambda_det4, Exponents, HomoPoly, LambdaPoly, MonomialBasis};
use crate::polysys::{lambda_block, CoeffMatrixC};
use thiserror::Error;

/// Relative ceiling on the lambda^2..lambda^4 determinant slices.
pub const COLLAPSE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SylvesterError {
    #[error(
        "Sylvester determinant kept spectral-parameter degree > 1 (relative residual {relative:.3e})"
    )]
    DegreeCollapseFailure { relative: f64 },
}

/// One pencil row S = p_hi - lambda p_lo of a fixed total degree.
#[derive(Clone, Debug)]
pub struct SylvesterRow {
    pub degree: usize,
    pub p_hi: HomoPoly,
    pub p_lo: HomoPoly,
}

impl SylvesterRow {
    pub fn eval(&self, q: &[f64; 4], lambda: f64) -> f64 {
        self.p_hi.eval(q) - lambda * self.p_lo.eval(q)
    }

    fn shifted(&self, e: Exponents) -> SylvesterRow {
        let shift: usize = e.iter().map(|&v| v as usize).sum();
        SylvesterRow {
            degree: self.degree + shift,
            p_hi: self.p_hi.mul_monomial(e),
            p_lo: self.p_lo.mul_monomial(e),
        }
    }
}

/// Column basis elements v_j^{alpha_j + 1}.
pub fn column_basis(alpha: [u8; 4]) -> [Exponents; 4] {
    std::array::from_fn(|j| {
        let mut e = [0u8; 4];
        e[j] = alpha[j] + 1;
        e
    })
}

fn divides(div: Exponents, m: Exponents) -> bool {
    div.iter().zip(&m).all(|(a, b)| a <= b)
}

/// Decomposition e_hat_i = sum_j entry(i, j) * q^alpha_j for |alpha| = 2 with
/// all alpha_j <= 1. Entry (i, j) has q-degree 2 - alpha_j and is linear in
/// lambda.
pub fn decompose(c: &CoeffMatrixC, alpha: [u8; 4]) -> [[LambdaPoly; 4]; 4] {
    assert_eq!(alpha.iter().map(|&a| a as usize).sum::<usize>(), 2);
    assert!(alpha.iter().all(|&a| a <= 1));
    let cols = column_basis(alpha);
    let basis3 = MonomialBasis::get(3);
    let mut p: Vec<Vec<HomoPoly>> = (0..4)
        .map(|_| (0..4).map(|j| HomoPoly::zero(2 - alpha[j] as usize)).collect())
        .collect();
    let mut l: Vec<Vec<HomoPoly>> = (0..4)
        .map(|_| (0..4).map(|j| HomoPoly::zero(2 - alpha[j] as usize)).collect())
        .collect();
    for (k, mu) in basis3.iter() {
        let j = (0..4)
            .find(|&j| divides(cols[j], mu))
            .expect("every cubic monomial is divisible by a basis element");
        let quot = std::array::from_fn(|t| mu[t] - cols[j][t]);
        for i in 0..4 {
            let coeff = c.matrix()[(i, k)];
            if coeff != 0.0 {
                p[i][j].add_term(quot, coeff);
            }
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            let mut e = [0u8; 4];
            e[j] += 1 - alpha[j];
            e[i] += 1;
            l[i][j].add_term(e, 1.0);
        }
    }
    std::array::from_fn(|i| {
        std::array::from_fn(|j| LambdaPoly::new(vec![p[i][j].clone(), l[i][j].scaled(-1.0)]))
    })
}

/// Determinant of a decomposition, verified to be linear in the spectral
/// parameter and truncated to its two leading slices. `entry_scale` is the
/// magnitude of the matrix entries; costs whose quartic part degenerates
/// cancel the head slices toward zero, so the gate floors at the
/// determinant's natural magnitude and only genuine structure violations
/// fail.
pub fn det_lambda_linear(
    m: &[[LambdaPoly; 4]; 4],
    entry_scale: f64,
) -> Result<(HomoPoly, HomoPoly), SylvesterError> {
    let det = lambda_det4(m);
    let deg = det.q_degree();
    let head: f64 = (0..2)
        .map(|k| {
            let n = det.slice_or_zero(k).l2_norm();
            n * n
        })
        .sum::<f64>()
        .sqrt();
    let tail: f64 = (2..=det.lambda_degree().max(2))
        .map(|k| {
            let n = det.slice_or_zero(k).l2_norm();
            n * n
        })
        .sum::<f64>()
        .sqrt();
    let reference = head.max(entry_scale.powi(4));
    if tail > COLLAPSE_TOL * reference {
        return Err(SylvesterError::DegreeCollapseFailure {
            relative: if reference > 0.0 {
                tail / reference
            } else {
                f64::INFINITY
            },
        });
    }
    let hi = det.slice_or_zero(0);
    let lo = det.slice_or_zero(1).scaled(-1.0);
    debug_assert_eq!(hi.degree(), deg);
    Ok((hi, lo))
}

fn entry_scale(c: &CoeffMatrixC) -> f64 {
    c.norm() + lambda_block().norm()
}

/// The degree-8 augmentation row S_0 = w x * det(decompose(alpha = (1,1,0,0))).
pub fn build_s0(c: &CoeffMatrixC) -> Result<SylvesterRow, SylvesterError> {
    let m = decompose(c, [1, 1, 0, 0]);
    let (hi, lo) = det_lambda_linear(&m, entry_scale(c))?;
    let base = SylvesterRow {
        degree: 6,
        p_hi: hi,
        p_lo: lo,
    };
    Ok(base.shifted([1, 1, 0, 0]))
}

/// The four degree-7 augmentation rows (S_w, S_x, S_y, S_z): monomial shifts
/// of the two degree-6 forms for alpha = (1,0,1,0) and (0,1,0,1).
pub fn build_s7(c: &CoeffMatrixC) -> Result<[SylvesterRow; 4], SylvesterError> {
    let scale = entry_scale(c);
    let (hi1, lo1) = det_lambda_linear(&decompose(c, [1, 0, 1, 0]), scale)?;
    let (hi2, lo2) = det_lambda_linear(&decompose(c, [0, 1, 0, 1]), scale)?;
    let s1 = SylvesterRow {
        degree: 6,
        p_hi: hi1,
        p_lo: lo1,
    };
    let s2 = SylvesterRow {
        degree: 6,
        p_hi: hi2,
        p_lo: lo2,
    };
    Ok([
        s1.shifted([0, 0, 1, 0]),
        s2.shifted([0, 0, 0, 1]),
        s1.shifted([1, 0, 0, 0]),
        s2.shifted([0, 1, 0, 0]),
    ])
}
