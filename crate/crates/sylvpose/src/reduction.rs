//! Correspondence types and reduction of the weighted least-squares pose
//! objective to a quadratic form in the vectorized rotation.
//!
//! Every residual is affine in (r, t) with r = vec_rows(R), so for fixed r the
//! optimal translation is a linear function of r and substituting it back
//! leaves cost(r) = r^T A_r r + 2 b_r^T r + c_r. That reduction is exact for
//! arbitrary 9-vectors r, not only rotations, which is what the downstream
//! polynomial machinery needs.
//!
//! 3D-3D residual: R m_ref + t - m, weighted by W (full for points, the
//! projector orthogonal to the direction for lines, the normal projector for
//! planes). 3D-2D residual: the algebraic projection residual
//! p - p_3 * (u, v, 1) with p = R m_ref + t, whose third component vanishes
//! identically.

use nalgebra::{Matrix3, SMatrix, SVector, Unit, Vector2, Vector3};
use thiserror::Error;

pub type Vec9 = SVector<f64, 9>;
pub type Mat39 = SMatrix<f64, 3, 9>;
pub type Mat99 = SMatrix<f64, 9, 9>;

/// Condition-number ceiling above which the translation normal matrix is
/// treated as singular.
pub const DEGENERACY_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("no correspondences given")]
    EmptyCorrespondences,
    #[error("3D-3D and 3D-2D correspondences cannot be mixed in one problem")]
    MixedKinds,
    #[error("expected only {expected} correspondences")]
    WrongKind { expected: &'static str },
    #[error("translation normal matrix is singular or ill-conditioned (cond {cond:.3e})")]
    DegenerateConstraints { cond: f64 },
}

/// One measurement tying a reference-frame 3D point to a current-frame entity.
#[derive(Clone, Debug)]
pub enum Correspondence {
    /// Reference point observed as a current-frame point.
    PointPoint {
        reference: Vector3<f64>,
        current: Vector3<f64>,
        weight: f64,
    },
    /// Reference point constrained to a current-frame line (anchor point plus
    /// unit direction).
    PointLine {
        reference: Vector3<f64>,
        point: Vector3<f64>,
        direction: Unit<Vector3<f64>>,
        weight: f64,
    },
    /// Reference point constrained to a current-frame plane (anchor point plus
    /// unit normal).
    PointPlane {
        reference: Vector3<f64>,
        point: Vector3<f64>,
        normal: Unit<Vector3<f64>>,
        weight: f64,
    },
    /// Reference point observed in the image at normalized coordinates (u, v);
    /// the observation ray is (u, v, 1).
    Point2D {
        reference: Vector3<f64>,
        image: Vector2<f64>,
        weight: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrespondenceKind {
    ThreeD,
    TwoD,
}

impl Correspondence {
    pub fn kind(&self) -> CorrespondenceKind {
        match self {
            Correspondence::Point2D { .. } => CorrespondenceKind::TwoD,
            _ => CorrespondenceKind::ThreeD,
        }
    }

    /// Number of independent scalar constraints contributed.
    pub fn dof(&self) -> usize {
        match self {
            Correspondence::PointPoint { .. } => 3,
            Correspondence::PointLine { .. } => 2,
            Correspondence::PointPlane { .. } => 1,
            Correspondence::Point2D { .. } => 2,
        }
    }

    pub fn reference(&self) -> Vector3<f64> {
        match self {
            Correspondence::PointPoint { reference, .. }
            | Correspondence::PointLine { reference, .. }
            | Correspondence::PointPlane { reference, .. }
            | Correspondence::Point2D { reference, .. } => *reference,
        }
    }
}

/// 3x3 weight of the 3D residual: full for points, rank-2 projector for
/// lines, rank-1 projector for planes, full for the projection residual.
pub fn weight_matrix(c: &Correspondence) -> Matrix3<f64> {
    match c {
        Correspondence::PointPoint { weight, .. } | Correspondence::Point2D { weight, .. } => {
            Matrix3::identity() * (weight * weight)
        }
        Correspondence::PointLine {
            direction, weight, ..
        } => {
            let d = direction.into_inner();
            (Matrix3::identity() - d * d.transpose()) * (weight * weight)
        }
        Correspondence::PointPlane { normal, weight, .. } => {
            let n = normal.into_inner();
            n * n.transpose() * (weight * weight)
        }
    }
}

/// The reduced objective cost(r) = r^T A_r r + 2 b_r^T r + c_r together with
/// the closed-form optimal translation t(r) = t_linear r + t_const.
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    pub a_r: Mat99,
    pub b_r: Vec9,
    pub c_r: f64,
    pub t_linear: Mat39,
    pub t_const: Vector3<f64>,
}

impl CanonicalForm {
    pub fn cost_of_r(&self, r: &Vec9) -> f64 {
        (r.transpose() * self.a_r * r)[(0, 0)] + 2.0 * self.b_r.dot(r) + self.c_r
    }

    pub fn translation_of_r(&self, r: &Vec9) -> Vector3<f64> {
        self.t_linear * r + self.t_const
    }
}

/// Row-major vectorization of a 3x3 matrix.
pub fn rot_to_vec(rot: &Matrix3<f64>) -> Vec9 {
    Vec9::from_iterator(rot.transpose().iter().copied())
}

pub fn vec_to_rot(r: &Vec9) -> Matrix3<f64> {
    Matrix3::from_iterator(r.iter().copied()).transpose()
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn rotation_from_quat(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// M(m) with M(m) r = R m for r = vec_rows(R): block-diagonal of m^T.
fn m_matrix(m: &Vector3<f64>) -> Mat39 {
    let mut out = Mat39::zeros();
    for row in 0..3 {
        for k in 0..3 {
            out[(row, 3 * row + k)] = m[k];
        }
    }
    out
}

/// Inverts a symmetric positive-definite 3x3 normal matrix, rejecting
/// nonpositive or ill-conditioned spectra.
fn checked_spd_inverse(s: &Matrix3<f64>) -> Result<Matrix3<f64>, ReductionError> {
    let eig = nalgebra::SymmetricEigen::new(*s);
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if min <= 0.0 || cond > DEGENERACY_COND_LIMIT {
        return Err(ReductionError::DegenerateConstraints { cond });
    }
    let mut inv = Matrix3::zeros();
    for k in 0..3 {
        let v = eig.eigenvectors.column(k);
        inv += v * v.transpose() / eig.eigenvalues[k];
    }
    Ok(inv)
}

/// Reduction for pure 3D-3D problems (points, lines, planes in any mix).
pub fn build_canonical_3d3d(corrs: &[Correspondence]) -> Result<CanonicalForm, ReductionError> {
    if corrs.is_empty() {
        return Err(ReductionError::EmptyCorrespondences);
    }
    let mut s_w = Matrix3::zeros();
    let mut h_mat = Mat39::zeros();
    let mut h_vec = Vector3::zeros();
    let mut ata = Mat99::zeros();
    let mut atm = Vec9::zeros();
    let mut mtm = 0.0;
    for c in corrs {
        let (anchor, w) = match c {
            Correspondence::PointPoint { current, .. } => (*current, weight_matrix(c)),
            Correspondence::PointLine { point, .. } => (*point, weight_matrix(c)),
            Correspondence::PointPlane { point, .. } => (*point, weight_matrix(c)),
            Correspondence::Point2D { .. } => {
                return Err(ReductionError::WrongKind { expected: "3D-3D" })
            }
        };
        let m = m_matrix(&c.reference());
        s_w += w;
        h_mat += w * m;
        h_vec += w * anchor;
        ata += m.transpose() * w * m;
        atm += m.transpose() * w * anchor;
        mtm += (anchor.transpose() * w * anchor)[(0, 0)];
    }
    let s_inv = checked_spd_inverse(&s_w)?;
    let mut a_r = ata - h_mat.transpose() * s_inv * h_mat;
    a_r = (a_r + a_r.transpose()) * 0.5;
    let b_r = -atm + h_mat.transpose() * (s_inv * h_vec);
    let c_r = mtm - (h_vec.transpose() * s_inv * h_vec)[(0, 0)];
    Ok(CanonicalForm {
        a_r,
        b_r,
        c_r,
        t_linear: -s_inv * h_mat,
        t_const: s_inv * h_vec,
    })
}

/// Reduction for perspective (3D-2D) problems. The residual has no constant
/// term, so b_r and c_r vanish identically.
pub fn build_canonical_pnp(corrs: &[Correspondence]) -> Result<CanonicalForm, ReductionError> {
    if corrs.is_empty() {
        return Err(ReductionError::EmptyCorrespondences);
    }
    let mut n_mat = Matrix3::zeros();
    let mut g_mat = Mat39::zeros();
    let mut ptp = Mat99::zeros();
    for c in corrs {
        let Correspondence::Point2D {
            reference,
            image,
            weight,
        } = c
        else {
            return Err(ReductionError::WrongKind { expected: "3D-2D" });
        };
        let ray = Vector3::new(image.x, image.y, 1.0);
        let m = m_matrix(reference);
        // P = M - ray * (third row of M); Q = I - ray * e3^T. Both third rows
        // vanish because ray_3 = 1.
        let p = m - ray * m.row(2);
        let q = Matrix3::identity() - ray * Vector3::z().transpose();
        let w = Matrix3::identity() * (weight * weight);
        n_mat += q.transpose() * w * q;
        g_mat += q.transpose() * w * p;
        ptp += p.transpose() * w * p;
    }
    let n_inv = checked_spd_inverse(&n_mat)?;
    let mut a_r = ptp - g_mat.transpose() * n_inv * g_mat;
    a_r = (a_r + a_r.transpose()) * 0.5;
    Ok(CanonicalForm {
        a_r,
        b_r: Vec9::zeros(),
        c_r: 0.0,
        t_linear: -n_inv * g_mat,
        t_const: Vector3::zeros(),
    })
}

/// Dispatches on the (necessarily uniform) correspondence kind.
pub fn build_canonical(corrs: &[Correspondence]) -> Result<CanonicalForm, ReductionError> {
    let Some(first) = corrs.first() else {
        return Err(ReductionError::EmptyCorrespondences);
    };
    let kind = first.kind();
    if corrs.iter().any(|c| c.kind() != kind) {
        return Err(ReductionError::MixedKinds);
    }
    match kind {
        CorrespondenceKind::ThreeD => build_canonical_3d3d(corrs),
        CorrespondenceKind::TwoD => build_canonical_pnp(corrs),
    }
}

/// Closed-form optimal translation for the rotation given by a unit
/// quaternion.
pub fn recover_translation(form: &CanonicalForm, q: &[f64; 4]) -> Vector3<f64> {
    let r = rot_to_vec(&rotation_from_quat(q));
    form.translation_of_r(&r)
}

/// Weighted objective evaluated directly at an arbitrary 9-vector r and
/// translation, without any elimination. Reference route for the reduction.
pub fn direct_objective_r(corrs: &[Correspondence], r: &Vec9, t: &Vector3<f64>) -> f64 {
    let mut acc = 0.0;
    for c in corrs {
        match c {
            Correspondence::Point2D {
                reference,
                image,
                weight,
            } => {
                let p = m_matrix(reference) * r + t;
                let e = p - p.z * Vector3::new(image.x, image.y, 1.0);
                acc += weight * weight * e.norm_squared();
            }
            _ => {
                let anchor = match c {
                    Correspondence::PointPoint { current, .. } => *current,
                    Correspondence::PointLine { point, .. } => *point,
                    Correspondence::PointPlane { point, .. } => *point,
                    Correspondence::Point2D { .. } => unreachable!(),
                };
                let e = m_matrix(&c.reference()) * r + t - anchor;
                acc += (e.transpose() * weight_matrix(c) * e)[(0, 0)];
            }
        }
    }
    acc
}

/// Direct objective at a pose (R, t).
pub fn direct_objective(corrs: &[Correspondence], rot: &Matrix3<f64>, t: &Vector3<f64>) -> f64 {
    direct_objective_r(corrs, &rot_to_vec(rot), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec3(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    fn rand_unit3(rng: &mut ChaCha8Rng) -> Unit<Vector3<f64>> {
        loop {
            let v = rand_vec3(rng, 1.0);
            if v.norm() > 1e-3 {
                return Unit::new_normalize(v);
            }
        }
    }

    fn rand_unit_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0f64));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-3 {
                return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
            }
        }
    }

    fn mixed_corrs(rng: &mut ChaCha8Rng, n_pts: usize, n_lines: usize, n_planes: usize) -> Vec<Correspondence> {
        let mut out = Vec::new();
        for _ in 0..n_pts {
            out.push(Correspondence::PointPoint {
                reference: rand_vec3(rng, 5.0),
                current: rand_vec3(rng, 5.0),
                weight: rng.random_range(0.5..2.0),
            });
        }
        for _ in 0..n_lines {
            out.push(Correspondence::PointLine {
                reference: rand_vec3(rng, 5.0),
                point: rand_vec3(rng, 5.0),
                direction: rand_unit3(rng),
                weight: rng.random_range(0.5..2.0),
            });
        }
        for _ in 0..n_planes {
            out.push(Correspondence::PointPlane {
                reference: rand_vec3(rng, 5.0),
                point: rand_vec3(rng, 5.0),
                normal: rand_unit3(rng),
                weight: rng.random_range(0.5..2.0),
            });
        }
        out
    }

    fn pnp_corrs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|_| Correspondence::Point2D {
                reference: rand_vec3(rng, 5.0),
                image: Vector2::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)),
                weight: 1.0,
            })
            .collect()
    }

    #[test]
    fn weight_matrices_have_expected_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = rand_unit3(&mut rng);
        let n = rand_unit3(&mut rng);
        let line = Correspondence::PointLine {
            reference: Vector3::zeros(),
            point: Vector3::zeros(),
            direction: d,
            weight: 1.5,
        };
        let plane = Correspondence::PointPlane {
            reference: Vector3::zeros(),
            point: Vector3::zeros(),
            normal: n,
            weight: 0.7,
        };
        let wl = weight_matrix(&line);
        // Projector orthogonal to the direction, scaled by weight^2.
        assert!((wl * d.into_inner()).norm() <= 1e-12);
        let perp = d.into_inner().cross(&Vector3::x()).norm() > 1e-3;
        let t = if perp { Vector3::x() } else { Vector3::y() };
        let tp = (Matrix3::identity() - d.into_inner() * d.transpose()) * t;
        assert!((wl * tp - 2.25 * tp).norm() <= 1e-12);
        let wp = weight_matrix(&plane);
        assert!((wp - 0.49 * n.into_inner() * n.transpose()).norm() <= 1e-12);
        let pt = Correspondence::PointPoint {
            reference: Vector3::zeros(),
            current: Vector3::zeros(),
            weight: 2.0,
        };
        assert!((weight_matrix(&pt) - Matrix3::identity() * 4.0).norm() <= 1e-12);
    }

    #[test]
    fn canonical_cost_matches_direct_objective_any_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let corrs = mixed_corrs(&mut rng, 4, 3, 3);
            let form = build_canonical_3d3d(&corrs).unwrap();
            let r = Vec9::from_fn(|_, _| rng.random_range(-2.0..2.0f64));
            let t_star = form.translation_of_r(&r);
            let direct = direct_objective_r(&corrs, &r, &t_star);
            let reduced = form.cost_of_r(&r);
            assert!(
                (direct - reduced).abs() <= 1e-9 * (1.0 + direct.abs()),
                "direct {direct} reduced {reduced}"
            );
        }
    }

    #[test]
    fn eliminated_translation_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let corrs = mixed_corrs(&mut rng, 3, 2, 2);
            let form = build_canonical_3d3d(&corrs).unwrap();
            let r = Vec9::from_fn(|_, _| rng.random_range(-2.0..2.0f64));
            let t_star = form.translation_of_r(&r);
            let base = direct_objective_r(&corrs, &r, &t_star);
            for _ in 0..5 {
                let t_other = t_star + rand_vec3(&mut rng, 0.5);
                assert!(direct_objective_r(&corrs, &r, &t_other) >= base - 1e-10);
            }
        }
    }

    #[test]
    fn pnp_canonical_is_purely_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..20 {
            let corrs = pnp_corrs(&mut rng, 8);
            let form = build_canonical_pnp(&corrs).unwrap();
            assert_eq!(form.b_r, Vec9::zeros());
            assert_eq!(form.c_r, 0.0);
            assert_eq!(form.t_const, Vector3::zeros());
            let r = Vec9::from_fn(|_, _| rng.random_range(-2.0..2.0f64));
            let t_star = form.translation_of_r(&r);
            let direct = direct_objective_r(&corrs, &r, &t_star);
            let reduced = form.cost_of_r(&r);
            assert!((direct - reduced).abs() <= 1e-9 * (1.0 + direct.abs()));
            for _ in 0..5 {
                let t_other = t_star + rand_vec3(&mut rng, 0.5);
                assert!(direct_objective_r(&corrs, &r, &t_other) >= direct - 1e-10);
            }
        }
    }

    #[test]
    fn reduced_quadratic_part_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..10 {
            let corrs = mixed_corrs(&mut rng, 3, 3, 4);
            let form = build_canonical_3d3d(&corrs).unwrap();
            let eig = nalgebra::SymmetricEigen::new(form.a_r);
            let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            assert!(min >= -1e-10 * max.abs(), "min {min} max {max}");
            let forms_pnp = build_canonical_pnp(&pnp_corrs(&mut rng, 6)).unwrap();
            let eig2 = nalgebra::SymmetricEigen::new(forms_pnp.a_r);
            let min2 = eig2.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            assert!(min2 >= -1e-10);
        }
    }

    #[test]
    fn noise_free_points_reach_zero_cost_and_true_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let q = rand_unit_quat(&mut rng);
        let rot = rotation_from_quat(&q);
        let t = rand_vec3(&mut rng, 3.0);
        let corrs: Vec<Correspondence> = (0..10)
            .map(|_| {
                let reference = rand_vec3(&mut rng, 5.0);
                Correspondence::PointPoint {
                    reference,
                    current: rot * reference + t,
                    weight: 1.0,
                }
            })
            .collect();
        let form = build_canonical_3d3d(&corrs).unwrap();
        let r = rot_to_vec(&rot);
        assert!(form.cost_of_r(&r).abs() <= 1e-9);
        assert!((recover_translation(&form, &q) - t).norm() <= 1e-9);
    }

    #[test]
    fn rotation_from_quat_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..20 {
            let q = rand_unit_quat(&mut rng);
            let rot = rotation_from_quat(&q);
            assert!((rot * rot.transpose() - Matrix3::identity()).norm() <= 1e-12);
            assert!((rot.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn parallel_line_directions_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let d = rand_unit3(&mut rng);
        let corrs: Vec<Correspondence> = (0..8)
            .map(|_| Correspondence::PointLine {
                reference: rand_vec3(&mut rng, 5.0),
                point: rand_vec3(&mut rng, 5.0),
                direction: d,
                weight: 1.0,
            })
            .collect();
        assert!(matches!(
            build_canonical_3d3d(&corrs),
            Err(ReductionError::DegenerateConstraints { .. })
        ));
    }

    #[test]
    fn identical_image_points_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let image = Vector2::new(0.1, -0.2);
        let corrs: Vec<Correspondence> = (0..8)
            .map(|_| Correspondence::Point2D {
                reference: rand_vec3(&mut rng, 5.0),
                image,
                weight: 1.0,
            })
            .collect();
        assert!(matches!(
            build_canonical_pnp(&corrs),
            Err(ReductionError::DegenerateConstraints { .. })
        ));
    }

    #[test]
    fn kind_mixing_and_emptiness_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        assert!(matches!(
            build_canonical(&[]),
            Err(ReductionError::EmptyCorrespondences)
        ));
        let mut corrs = mixed_corrs(&mut rng, 2, 0, 0);
        corrs.extend(pnp_corrs(&mut rng, 2));
        assert!(matches!(
            build_canonical(&corrs),
            Err(ReductionError::MixedKinds)
        ));
    }
}
