//! Generalized eigensolver for the compressed pencil and candidate
//! extraction.
//!
//! The pencil (Q0, Q1) carries the Lagrange multipliers of the constrained
//! rotation cost as generalized eigenvalues Q0 x = lambda Q1 x. Each
//! near-real eigenpair is inflated back to a full degree-d monomial vector,
//! the quaternion is read off from ratios against the dominant pure power,
//! and the pair (q, lambda) is polished by Newton iteration on the
//! stationarity system before a relative residual gate accepts it.

use crate::elimination::PencilSystem;
use crate::poly::{HomoPoly, MonomialBasis};
use crate::polysys::CoeffMatrixC;
use nalgebra::{Complex, DVector, SMatrix, SVector};
use thiserror::Error;

/// Two candidates closer than this in quaternion dot product collapse to one.
pub const QUAT_DEDUP_TOL: f64 = 1e-8;

const POLISH_ITERS: usize = 8;
const POLISH_HALVINGS: usize = 4;
const POLISH_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("generalized eigenvalue iteration did not converge")]
    NotConverged,
}

/// One raw generalized eigenpair: the eigenvalue is alpha / beta.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub alpha: Complex<f64>,
    pub beta: f64,
    pub vector: DVector<Complex<f64>>,
}

/// Acceptance gates between raw eigenpairs and quaternion candidates.
#[derive(Clone, Copy, Debug)]
pub struct ExtractionGates {
    /// Finite-eigenvalue gate: require |beta| > beta_tol * |alpha|.
    pub beta_tol: f64,
    /// Real-multiplier gate: require |Im| <= imag_tol * (1 + |Re|).
    pub imag_tol: f64,
    /// Relative stationarity residual bound after polish.
    pub residual_tol: f64,
    /// Run the damped Newton polish on accepted candidates. Off, candidates
    /// keep their raw eigenvector readout and its residual.
    pub polish: bool,
}

impl Default for ExtractionGates {
    fn default() -> Self {
        Self {
            beta_tol: 1e-10,
            imag_tol: 1e-6,
            residual_tol: 1e-6,
            polish: true,
        }
    }
}

/// A stationary rotation on the unit quaternion sphere.
#[derive(Clone, Copy, Debug)]
pub struct RotationCandidate {
    /// Unit quaternion (w, x, y, z), sign-canonicalized to w >= 0.
    pub q: [f64; 4],
    /// Multiplier of the unit-norm constraint at this stationary point.
    pub lambda: f64,
    /// Relative stationarity residual |e_hat| / scale.
    pub residual: f64,
}

/// All 40 generalized eigenpairs of the pencil with right eigenvectors.
pub fn solve_pencil(pencil: &PencilSystem) -> Result<Vec<EigenPair>, EigenError> {
    let ge = nalgebra_lapack::GeneralizedEigen::try_new(pencil.q0.clone(), pencil.q1.clone())
        .ok_or(EigenError::NotConverged)?;
    let raw = ge.raw_eigenvalues();
    let (_, right) = ge.eigenvectors();
    Ok(raw
        .iter()
        .enumerate()
        .map(|(j, &(alpha, beta))| EigenPair {
            alpha,
            beta,
            vector: right.column(j).into_owned(),
        })
        .collect())
}

/// Rotates the eigenvector by the phase of its largest entry and keeps the
/// real parts; for an (almost) real eigenvalue this recovers the real
/// eigenvector regardless of how the complex pair was packed.
fn realify(v: &DVector<Complex<f64>>) -> DVector<f64> {
    let mut best = 0usize;
    let mut mag = 0.0f64;
    for (k, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > mag {
            mag = m;
            best = k;
        }
    }
    if mag == 0.0 {
        return DVector::zeros(v.len());
    }
    let phase = v[best] / Complex::new(mag, 0.0);
    DVector::from_iterator(v.len(), v.iter().map(|z| (z * phase.conj()).re))
}

/// Flips the sign so the first clearly nonzero component is positive, making
/// the two antipodal representatives of a rotation compare equal.
pub(crate) fn canonicalize_sign(q: &mut SVector<f64, 4>) {
    for k in 0..4 {
        if q[k].abs() > 1e-12 {
            if q[k] < 0.0 {
                *q = -*q;
            }
            return;
        }
    }
}

/// Damped Newton iteration on the 5-dimensional system (e_hat(q, lambda),
/// the unit-norm defect) starting from an eigenpair estimate. Each step is
/// halved until the relative residual decreases, every iterate is projected
/// back to the unit sphere, and the best point seen is returned, so a rough
/// eigenvector start can never come out worse than it went in.
fn polish(
    c: &CoeffMatrixC,
    dg: &[[HomoPoly; 4]; 4],
    start_q: SVector<f64, 4>,
    start_lambda: f64,
) -> (SVector<f64, 4>, f64, f64) {
    let rel_residual = |q: &SVector<f64, 4>, lambda: f64| -> f64 {
        let qa = [q[0], q[1], q[2], q[3]];
        c.eval_e_hat(&qa, lambda).norm() / c.residual_scale(lambda)
    };
    let mut q = start_q.normalize();
    let mut lambda = start_lambda;
    let mut best_res = rel_residual(&q, lambda);
    let (mut best_q, mut best_lambda) = (q, lambda);
    for _ in 0..POLISH_ITERS {
        if best_res <= POLISH_FLOOR {
            break;
        }
        let qa = [q[0], q[1], q[2], q[3]];
        let e = c.eval_e_hat(&qa, lambda);
        let qq = q.dot(&q);
        let mut jac = SMatrix::<f64, 5, 5>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut sphere = 2.0 * q[i] * q[j];
                if i == j {
                    sphere += qq;
                }
                jac[(i, j)] = dg[i][j].eval(&qa) - lambda * sphere;
            }
            jac[(i, 4)] = -qq * q[i];
            jac[(4, i)] = q[i];
        }
        let rhs = SVector::<f64, 5>::new(e[0], e[1], e[2], e[3], 0.5 * (qq - 1.0));
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=POLISH_HALVINGS {
            let mut trial_q = q;
            for i in 0..4 {
                trial_q[i] -= scale * step[i];
            }
            trial_q.normalize_mut();
            let trial_lambda = lambda - scale * step[4];
            let trial_res = rel_residual(&trial_q, trial_lambda);
            if trial_res < best_res {
                q = trial_q;
                lambda = trial_lambda;
                best_res = trial_res;
                best_q = q;
                best_lambda = lambda;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (best_q, best_lambda, best_res)
}

/// Converts raw eigenpairs into accepted, deduplicated rotation candidates.
pub fn extract_candidates(
    pencil: &PencilSystem,
    pairs: &[EigenPair],
    c: &CoeffMatrixC,
    gates: &ExtractionGates,
) -> Vec<RotationCandidate> {
    let degree = pencil.degree;
    let basis = MonomialBasis::get(degree);
    let pure: [usize; 4] = std::array::from_fn(|v| {
        let mut e = [0u8; 4];
        e[v] = degree as u8;
        basis.index_of(e)
    });
    let mixed = |v: usize, u: usize| -> usize {
        let mut e = [0u8; 4];
        e[v] = degree as u8 - 1;
        e[u] += 1;
        basis.index_of(e)
    };
    let dg: [[HomoPoly; 4]; 4] = std::array::from_fn(|i| {
        let p = c.row_poly(i);
        std::array::from_fn(|j| p.partial_derivative(j))
    });
    let mut out: Vec<RotationCandidate> = Vec::new();
    for pair in pairs {
        if pair.beta.abs() <= gates.beta_tol * pair.alpha.norm() {
            continue;
        }
        let lambda = pair.alpha / Complex::new(pair.beta, 0.0);
        if lambda.im.abs() > gates.imag_tol * (1.0 + lambda.re.abs()) {
            continue;
        }
        let x_a = realify(&pair.vector);
        let full = pencil.assemble_monomials(&x_a);
        let pivot = (0..4)
            .max_by(|&a, &b| full[pure[a]].abs().total_cmp(&full[pure[b]].abs()))
            .expect("four pivot choices");
        let anchor = full[pure[pivot]];
        if anchor == 0.0 {
            continue;
        }
        let mut q = SVector::<f64, 4>::from_fn(|u, _| {
            if u == pivot {
                1.0
            } else {
                full[mixed(pivot, u)] / anchor
            }
        });
        if !q.iter().all(|v| v.is_finite()) {
            continue;
        }
        canonicalize_sign(&mut q);
        let (q, lambda, residual) = if gates.polish {
            polish(c, &dg, q, lambda.re)
        } else {
            let q = q.normalize();
            let qa = [q[0], q[1], q[2], q[3]];
            let residual = c.eval_e_hat(&qa, lambda.re).norm() / c.residual_scale(lambda.re);
            (q, lambda.re, residual)
        };
        if !residual.is_finite() || residual > gates.residual_tol {
            continue;
        }
        let mut q = q;
        canonicalize_sign(&mut q);
        let cand = RotationCandidate {
            q: [q[0], q[1], q[2], q[3]],
            lambda,
            residual,
        };
        match out.iter_mut().find(|prev| {
            let dot: f64 = (0..4).map(|k| prev.q[k] * cand.q[k]).sum();
            dot.abs() >= 1.0 - QUAT_DEDUP_TOL
        }) {
            Some(prev) => {
                if cand.residual < prev.residual {
                    *prev = cand;
                }
            }
            None => out.push(cand),
        }
    }
    out
}
