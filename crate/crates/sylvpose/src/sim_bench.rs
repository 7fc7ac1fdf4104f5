//! Synthetic-scene simulator, error metrics, a restart-based local
//! refinement oracle, and the benchmark harness.
//!
//! 3D-3D scenes mix point, line and plane correspondences; a target
//! constraint count N (points carry 3 constraints, lines 2, planes 1) is
//! split by drawing uniformly among all compositions with at least two
//! points, which keeps the translation observable. Reference points are
//! uniform on a 10 m radius sphere, rotations Haar-uniform, translation
//! components uniform in [-10, 10] m. Perspective scenes place camera-frame
//! points in a frustum at 2-6 m depth with normalized image coordinates in
//! [-0.5, 0.5]^2. Noise perturbs only current-frame observations: isotropic
//! Gaussian in meters on 3D anchors, pixel-scale Gaussian on normalized
//! image points for 2D (pixel sigmas divide by the focal length).
//!
//! Benchmarks sweep method x size x noise cells; every trial derives its own
//! seed from the master seed by an avalanche hash, so runs are reproducible
//! record-for-record regardless of thread count.

use crate::reduction::{rotation_from_quat, CanonicalForm, Correspondence};
use crate::solver::{solve, Method, SolveError, SolverConfig};
use nalgebra::{Matrix3, SMatrix, SVector, Unit, Vector2, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{self, Write};

/// Default focal length converting pixel noise to normalized image noise.
pub const FOCAL_PX: f64 = 800.0;

/// Radius of the sphere reference points are drawn on, in meters.
pub const SCENE_RADIUS_M: f64 = 10.0;

/// Camera-frame depth range of perspective scene points, in meters.
pub const PNP_DEPTH_RANGE: (f64, f64) = (2.0, 6.0);

/// Half-width of the uniform translation range for perspective scenes, in
/// meters. Kept tighter than the 3D-3D range so the world-origin lever arm
/// stays at room scale.
pub const PNP_TRANSLATION_HALF_WIDTH: f64 = 4.0;

/// Half-width of the normalized image region perspective points project to.
pub const PNP_IMAGE_HALF_WIDTH: f64 = 0.5;

/// Header line of the benchmark CSV.
pub const CSV_HEADER: &str = "method,seed,N,sigma,delta_r_deg,delta_t_m,solve_time_us,candidates,status";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SceneKind {
    /// Mixed point / line / plane correspondences; size parameter counts
    /// constraints.
    ThreeD,
    /// Perspective point correspondences; size parameter counts points.
    Pnp,
}

impl SceneKind {
    pub fn label(self) -> &'static str {
        match self {
            SceneKind::ThreeD => "3d3d",
            SceneKind::Pnp => "pnp",
        }
    }
}

/// A synthetic scene with its ground-truth pose.
#[derive(Clone, Debug)]
pub struct Scene {
    pub correspondences: Vec<Correspondence>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub kind: SceneKind,
    /// Focal length in pixels; converts pixel noise for perspective scenes.
    pub focal_px: f64,
    /// Noise level applied so far (meters for 3D scenes, pixels for 2D).
    pub sigma: f64,
}

/// Haar-uniform random unit quaternion (w, x, y, z).
pub fn haar_quaternion(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        }
    }
}

/// Haar-uniform random rotation matrix.
pub fn haar_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    rotation_from_quat(&haar_quaternion(rng))
}

fn uniform_vec3(rng: &mut ChaCha8Rng, half_width: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
    )
}

fn gaussian_vec3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let n: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    Vector3::new(n[0], n[1], n[2]) * sigma
}

fn random_unit(rng: &mut ChaCha8Rng) -> Unit<Vector3<f64>> {
    loop {
        let v = gaussian_vec3(rng, 1.0);
        if v.norm() > 1e-6 {
            return Unit::new_normalize(v);
        }
    }
}

/// Uniform point on the sphere of the given radius.
fn sphere_point(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    random_unit(rng).scale(radius)
}

/// Draws (points, lines, planes) uniformly among all compositions reaching
/// exactly `n_constraints` total constraints (3 per point, 2 per line, 1 per
/// plane), subject to two floors: at least two points, which keeps the
/// translation observable, and either zero or at least three non-point
/// correspondences.
///
/// Compositions with one or two lines-plus-planes are excluded because they
/// break the rank laws the resultant solver is built on. With a single line
/// or plane the anisotropic part of the reduced rotation cost is one perfect
/// square (two tied squares for a line), the critical equations pick up a
/// curve of complex solutions on the isotropic quadric, and the eliminant
/// corank grows past forty with the degree (44/48/52 at degrees 7/8/9 for a
/// lone plane). With exactly two non-point correspondences, in any line or
/// plane mix, the critical variety stays at forty points but the eliminant
/// keeps a column-rank deficit of exactly eight at every degree and every
/// lambda, leaving the matrix pencil singular; noise lifts neither defect.
/// Pure-point draws are fine: the solver handles them on a separate
/// closed-form path. Requires `n_constraints >= 6`, excluding 7 and 8, whose
/// only compositions are degenerate ones.
pub fn mixed_composition(rng: &mut ChaCha8Rng, n_constraints: usize) -> (usize, usize, usize) {
    assert!(
        n_constraints >= 6 && n_constraints != 7 && n_constraints != 8,
        "need at least 6 constraints and a non-degenerate composition"
    );
    // For a remainder rem = n - 3 * points the admissible line counts form a
    // prefix 0..=cap: lines + planes = rem - lines must be zero or >= 3.
    let cap = |points: usize| -> Option<usize> {
        let rem = n_constraints - 3 * points;
        if rem == 0 {
            Some(0)
        } else if rem < 3 {
            None
        } else {
            Some((rem / 2).min(rem - 3))
        }
    };
    let choices = |points: usize| cap(points).map_or(0, |c| c + 1);
    let total: usize = (2..=n_constraints / 3).map(choices).sum();
    let mut pick = rng.random_range(0..total);
    for points in 2..=n_constraints / 3 {
        let line_choices = choices(points);
        if pick < line_choices {
            let lines = pick;
            return (points, lines, n_constraints - 3 * points - 2 * lines);
        }
        pick -= line_choices;
    }
    unreachable!("composition index within the enumerated total")
}

/// Mixed 3D-3D scene with the given primitive counts and an exact
/// ground-truth pose.
pub fn gen_scene_3d3d(
    rng: &mut ChaCha8Rng,
    n_points: usize,
    n_lines: usize,
    n_planes: usize,
) -> Scene {
    assert!(n_points + n_lines + n_planes >= 1);
    let rotation = haar_rotation(rng);
    let translation = uniform_vec3(rng, SCENE_RADIUS_M);
    let mut correspondences = Vec::with_capacity(n_points + n_lines + n_planes);
    for _ in 0..n_points {
        let reference = sphere_point(rng, SCENE_RADIUS_M);
        correspondences.push(Correspondence::PointPoint {
            reference,
            current: rotation * reference + translation,
            weight: 1.0,
        });
    }
    for _ in 0..n_lines {
        let reference = sphere_point(rng, SCENE_RADIUS_M);
        let mapped = rotation * reference + translation;
        let direction = random_unit(rng);
        correspondences.push(Correspondence::PointLine {
            reference,
            point: mapped - direction.scale(rng.random_range(-5.0..5.0)),
            direction,
            weight: 1.0,
        });
    }
    for _ in 0..n_planes {
        let reference = sphere_point(rng, SCENE_RADIUS_M);
        let mapped = rotation * reference + translation;
        let normal = random_unit(rng);
        let raw = uniform_vec3(rng, 5.0);
        let in_plane = raw - normal.scale(normal.dot(&raw));
        correspondences.push(Correspondence::PointPlane {
            reference,
            point: mapped + in_plane,
            normal,
            weight: 1.0,
        });
    }
    Scene {
        correspondences,
        rotation,
        translation,
        kind: SceneKind::ThreeD,
        focal_px: FOCAL_PX,
        sigma: 0.0,
    }
}

/// Mixed 3D-3D scene hitting a total constraint count with a uniformly
/// random composition.
pub fn gen_mixed_scene(rng: &mut ChaCha8Rng, n_constraints: usize) -> Scene {
    let (n_points, n_lines, n_planes) = mixed_composition(rng, n_constraints);
    gen_scene_3d3d(rng, n_points, n_lines, n_planes)
}

/// Perspective scene with `n_points >= 4` exact image observations.
pub fn gen_scene_pnp(rng: &mut ChaCha8Rng, n_points: usize, focal_px: f64) -> Scene {
    assert!(n_points >= 4, "need at least 4 image points");
    let rotation = haar_rotation(rng);
    let translation = uniform_vec3(rng, PNP_TRANSLATION_HALF_WIDTH);
    let correspondences = (0..n_points)
        .map(|_| {
            let depth = rng.random_range(PNP_DEPTH_RANGE.0..PNP_DEPTH_RANGE.1);
            let u = rng.random_range(-PNP_IMAGE_HALF_WIDTH..PNP_IMAGE_HALF_WIDTH);
            let v = rng.random_range(-PNP_IMAGE_HALF_WIDTH..PNP_IMAGE_HALF_WIDTH);
            let cam = Vector3::new(u * depth, v * depth, depth);
            Correspondence::Point2D {
                reference: rotation.transpose() * (cam - translation),
                image: Vector2::new(u, v),
                weight: 1.0,
            }
        })
        .collect();
    Scene {
        correspondences,
        rotation,
        translation,
        kind: SceneKind::Pnp,
        focal_px,
        sigma: 0.0,
    }
}

/// Adds observation noise in place and records the level. `sigma` is meters
/// for 3D scenes (current anchor points) and pixels for perspective scenes
/// (normalized image coordinates scaled by the focal length). Reference data,
/// directions and normals stay exact.
pub fn add_noise(scene: &mut Scene, rng: &mut ChaCha8Rng, sigma: f64) {
    scene.sigma = sigma;
    if sigma == 0.0 {
        return;
    }
    for c in scene.correspondences.iter_mut() {
        match c {
            Correspondence::PointPoint { current, .. } => *current += gaussian_vec3(rng, sigma),
            Correspondence::PointLine { point, .. } => *point += gaussian_vec3(rng, sigma),
            Correspondence::PointPlane { point, .. } => *point += gaussian_vec3(rng, sigma),
            Correspondence::Point2D { image, .. } => {
                let s = sigma / scene.focal_px;
                image.x += rng.sample::<f64, _>(StandardNormal) * s;
                image.y += rng.sample::<f64, _>(StandardNormal) * s;
            }
        }
    }
}

/// Rotation gap in degrees: the angle of the relative rotation, extracted
/// through its unit quaternion, which stays accurate at both ends of
/// [0, pi].
pub fn rotation_error_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = nalgebra::Rotation3::from_matrix_unchecked(a.transpose() * b);
    nalgebra::UnitQuaternion::from_rotation_matrix(&rel)
        .angle()
        .to_degrees()
}

/// Independent oracle: the matrix-logarithm angle |log(A^T B)|_F / sqrt(2),
/// written as atan2 of the skew-part norm against the trace.
pub fn rotation_error_deg_matrix_log(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let sin = (rel - rel.transpose()).norm() / (2.0 * std::f64::consts::SQRT_2);
    let cos = (rel.trace() - 1.0) / 2.0;
    sin.atan2(cos).to_degrees()
}

pub fn translation_error(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}

/// Local optimum of the rotation cost found by projected Gauss-Newton with
/// Levenberg damping on the unit sphere, starting from `q0`.
pub fn refine_on_sphere(form: &CanonicalForm, q0: &[f64; 4]) -> ([f64; 4], f64) {
    // Rotation and its quaternion Jacobian, row-major 9-vectors, written out
    // from the homogeneous quaternion-to-matrix map (independent of the
    // polynomial tables used by the solver pipeline).
    fn r_vec(q: &[f64; 4]) -> SVector<f64, 9> {
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        SVector::<f64, 9>::from_row_slice(&[
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        ])
    }
    fn dr_dq(q: &[f64; 4]) -> SMatrix<f64, 9, 4> {
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        SMatrix::<f64, 9, 4>::from_row_slice(&[
            2.0 * w, 2.0 * x, -2.0 * y, -2.0 * z,
            -2.0 * z, 2.0 * y, 2.0 * x, -2.0 * w,
            2.0 * y, 2.0 * z, 2.0 * w, 2.0 * x,
            2.0 * z, 2.0 * y, 2.0 * x, 2.0 * w,
            2.0 * w, -2.0 * x, 2.0 * y, -2.0 * z,
            -2.0 * x, -2.0 * w, 2.0 * z, 2.0 * y,
            -2.0 * y, 2.0 * z, -2.0 * w, 2.0 * x,
            2.0 * x, 2.0 * w, 2.0 * z, 2.0 * y,
            2.0 * w, -2.0 * x, -2.0 * y, 2.0 * z,
        ])
    }
    /// Orthonormal basis of the tangent space at unit q.
    fn tangent_basis(q: &SVector<f64, 4>) -> SMatrix<f64, 4, 3> {
        let mut e1 = SVector::<f64, 4>::zeros();
        e1[0] = 1.0;
        let v = q - e1 * q[0].signum();
        let mut h = SMatrix::<f64, 4, 4>::identity();
        let vn2 = v.norm_squared();
        if vn2 > 1e-24 {
            h -= (v * v.transpose()) * (2.0 / vn2);
        }
        // Column 0 of h is (up to sign) q itself; the rest span the tangent.
        let mut t = SMatrix::<f64, 4, 3>::zeros();
        for j in 0..3 {
            t.set_column(j, &h.column(j + 1));
        }
        t
    }

    let mut q = SVector::<f64, 4>::from_column_slice(q0).normalize();
    let cost_at = |q: &SVector<f64, 4>| -> f64 {
        form.cost_of_r(&r_vec(&[q[0], q[1], q[2], q[3]]))
    };
    let mut cost = cost_at(&q);
    let mut mu = 1e-8;
    for _ in 0..80 {
        let qa = [q[0], q[1], q[2], q[3]];
        let r = r_vec(&qa);
        let j = dr_dq(&qa);
        let grad_r = form.a_r * r + form.b_r;
        let t = tangent_basis(&q);
        let jt = j * t;
        let g3 = jt.transpose() * grad_r;
        if g3.norm() <= 1e-13 * (1.0 + cost.abs()) {
            break;
        }
        let h3 = jt.transpose() * form.a_r * jt;
        let mut improved = false;
        for _ in 0..25 {
            let damped = h3 + SMatrix::<f64, 3, 3>::identity() * (mu * (1.0 + h3.trace().abs()));
            let Some(step) = damped.lu().solve(&(-g3)) else {
                mu *= 10.0;
                continue;
            };
            let trial = (q + t * step).normalize();
            let trial_cost = cost_at(&trial);
            if trial_cost < cost {
                q = trial;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-14);
                improved = true;
                break;
            }
            mu *= 10.0;
            if mu > 1e14 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    ([q[0], q[1], q[2], q[3]], cost)
}

/// Best local optimum over Haar-random restarts; the reference the solver's
/// global optimality is judged against.
pub fn oracle_local_opt(
    form: &CanonicalForm,
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> ([f64; 4], f64) {
    let mut best_q = [1.0, 0.0, 0.0, 0.0];
    let mut best_cost = f64::MAX;
    for _ in 0..restarts {
        let (q, cost) = refine_on_sphere(form, &haar_quaternion(rng));
        if cost < best_cost {
            best_cost = cost;
            best_q = q;
        }
    }
    (best_q, best_cost)
}

/// One benchmark measurement.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub method: Method,
    pub seed: u64,
    pub size: usize,
    pub sigma: f64,
    pub delta_r_deg: f64,
    pub delta_t_m: f64,
    pub solve_time_us: u64,
    pub candidates: usize,
    pub status: &'static str,
}

/// Benchmark sweep: the cartesian product of methods, sizes and noise
/// levels, `trials` scenes per cell.
#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub kind: SceneKind,
    pub methods: Vec<Method>,
    pub sizes: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed: an avalanche mix of the master seed, the sweep cell and
/// the trial index, so records are independent of execution order.
pub fn trial_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(master ^ splitmix64(cell.wrapping_add(splitmix64(trial))))
}

fn status_of(err: &SolveError) -> &'static str {
    match err {
        SolveError::Reduction(_) => "degenerate_input",
        SolveError::Elimination(_) => "rank_deficient",
        SolveError::Eigen(_) => "eigen_failure",
        SolveError::NoCandidates => "no_candidates",
    }
}

/// Runs one trial: scene generation, noise, solve, error metrics.
pub fn run_trial(
    kind: SceneKind,
    method: Method,
    size: usize,
    sigma: f64,
    seed: u64,
) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = match kind {
        SceneKind::ThreeD => gen_mixed_scene(&mut rng, size),
        SceneKind::Pnp => gen_scene_pnp(&mut rng, size, FOCAL_PX),
    };
    add_noise(&mut scene, &mut rng, sigma);
    let config = SolverConfig {
        method,
        ..SolverConfig::default()
    };
    match solve(&scene.correspondences, &config) {
        Ok(sol) => TrialRecord {
            method,
            seed,
            size,
            sigma,
            delta_r_deg: rotation_error_deg(&sol.rotation, &scene.rotation),
            delta_t_m: translation_error(&sol.translation, &scene.translation),
            solve_time_us: sol.timings.core().as_micros() as u64,
            candidates: sol.candidates.len(),
            status: "ok",
        },
        Err(err) => TrialRecord {
            method,
            seed,
            size,
            sigma,
            delta_r_deg: f64::NAN,
            delta_t_m: f64::NAN,
            solve_time_us: 0,
            candidates: 0,
            status: status_of(&err),
        },
    }
}

/// Runs the full sweep in parallel; record order follows the sweep order
/// (method-major, then size, then sigma, then trial) regardless of thread
/// scheduling.
pub fn run_benchmark(spec: &BenchSpec) -> Vec<TrialRecord> {
    let mut jobs = Vec::new();
    let mut cell = 0u64;
    for &method in &spec.methods {
        for &size in &spec.sizes {
            for &sigma in &spec.sigmas {
                for trial in 0..spec.trials {
                    jobs.push((
                        method,
                        size,
                        sigma,
                        trial_seed(spec.master_seed, cell, trial as u64),
                    ));
                }
                cell += 1;
            }
        }
    }
    jobs.par_iter()
        .map(|&(method, size, sigma, seed)| run_trial(spec.kind, method, size, sigma, seed))
        .collect()
}

/// Writes records as CSV under the fixed header.
pub fn write_csv<W: Write>(out: &mut W, records: &[TrialRecord]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.seed,
            r.size,
            r.sigma,
            r.delta_r_deg,
            r.delta_t_m,
            r.solve_time_us,
            r.candidates,
            r.status
        )?;
    }
    Ok(())
}

/// Aggregates records per (method, size, sigma) cell into a JSON summary.
pub fn summarize(records: &[TrialRecord]) -> serde_json::Value {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<(String, usize, String), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.method.to_string(), r.size, format!("{}", r.sigma)))
            .or_default()
            .push(r);
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let groups: Vec<serde_json::Value> = cells
        .into_iter()
        .map(|((method, size, sigma), rs)| {
            let columns = crate::poly::monomial_count(rs[0].method.elimination_degree());
            let ok: Vec<&&TrialRecord> = rs.iter().filter(|r| r.status == "ok").collect();
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| -> f64 {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            let mut times: Vec<f64> = ok.iter().map(|r| r.solve_time_us as f64).collect();
            let mut rots: Vec<f64> = ok.iter().map(|r| r.delta_r_deg).collect();
            serde_json::json!({
                "method": method,
                "pencil_columns": columns,
                "N": size,
                "sigma": sigma,
                "trials": rs.len(),
                "ok": ok.len(),
                "mean_delta_r_deg": mean(&|r| r.delta_r_deg),
                "median_delta_r_deg": median(&mut rots),
                "mean_delta_t_m": mean(&|r| r.delta_t_m),
                "median_solve_time_us": median(&mut times),
                "mean_candidates": mean(&|r| r.candidates as f64),
            })
        })
        .collect();
    serde_json::json!({ "cells": groups })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{build_canonical, direct_objective};
    use crate::solver::solve_canonical;
    use approx::assert_relative_eq;

    #[test]
    fn compositions_hit_the_constraint_count_and_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..300 {
            let (points, lines, planes) = mixed_composition(&mut rng, 100);
            assert_eq!(3 * points + 2 * lines + planes, 100);
            assert!(points >= 2);
            assert!(
                lines + planes == 0 || lines + planes >= 3,
                "thin-anisotropy composition {points}/{lines}/{planes} drawn"
            );
            seen.insert((points, lines, planes));
        }
        // Uniform sampling over hundreds of admissible splits must show
        // variety, including line-free and plane-free draws eventually.
        assert!(seen.len() > 50, "only {} distinct compositions", seen.len());
        for n in (6..40).filter(|&n| n != 7 && n != 8) {
            let (p, l, pl) = mixed_composition(&mut rng, n);
            assert_eq!(3 * p + 2 * l + pl, n, "n = {n}");
            assert!(l + pl == 0 || l + pl >= 3, "n = {n} drew a thin split");
        }
        assert_eq!(mixed_composition(&mut rng, 6), (2, 0, 0));
    }

    #[test]
    fn scenes_are_reproducible_from_their_seed() {
        let scene_a = gen_mixed_scene(&mut ChaCha8Rng::seed_from_u64(7), 60);
        let scene_b = gen_mixed_scene(&mut ChaCha8Rng::seed_from_u64(7), 60);
        assert_eq!(scene_a.correspondences.len(), scene_b.correspondences.len());
        assert_eq!(scene_a.rotation, scene_b.rotation);
        assert_eq!(scene_a.translation, scene_b.translation);
        for (a, b) in scene_a.correspondences.iter().zip(&scene_b.correspondences) {
            assert_eq!(format!("{a:?}"), format!("{b:?}"));
        }
        let pnp_a = gen_scene_pnp(&mut ChaCha8Rng::seed_from_u64(8), 10, FOCAL_PX);
        let pnp_b = gen_scene_pnp(&mut ChaCha8Rng::seed_from_u64(8), 10, FOCAL_PX);
        assert_eq!(format!("{:?}", pnp_a.correspondences), format!("{:?}", pnp_b.correspondences));
    }

    #[test]
    fn exact_scenes_have_zero_objective_at_the_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for n in [6, 20, 100] {
            let scene = gen_mixed_scene(&mut rng, n);
            let cost = direct_objective(&scene.correspondences, &scene.rotation, &scene.translation);
            assert!(cost.abs() < 1e-13 * n as f64, "n = {n}: cost {cost}");
            for c in &scene.correspondences {
                if let Correspondence::PointPoint { reference, .. } = c {
                    assert_relative_eq!(reference.norm(), SCENE_RADIUS_M, epsilon = 1e-9);
                }
            }
        }
        let scene = gen_scene_pnp(&mut rng, 10, FOCAL_PX);
        let cost = direct_objective(&scene.correspondences, &scene.rotation, &scene.translation);
        assert!(cost.abs() < 1e-18, "pnp cost {cost}");
        for c in &scene.correspondences {
            if let Correspondence::Point2D { reference, image, .. } = c {
                let cam = scene.rotation * reference + scene.translation;
                assert!(cam.z > PNP_DEPTH_RANGE.0 - 0.1 && cam.z < PNP_DEPTH_RANGE.1 + 0.1);
                assert_relative_eq!(cam.x / cam.z, image.x, epsilon = 1e-12);
                assert_relative_eq!(cam.y / cam.z, image.y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rotation_error_agrees_with_the_matrix_log_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        for _ in 0..1000 {
            let a = haar_rotation(&mut rng);
            let b = haar_rotation(&mut rng);
            let quat = rotation_error_deg(&a, &b);
            let log = rotation_error_deg_matrix_log(&a, &b);
            assert!((quat - log).abs() <= 1e-9 * (1.0 + quat), "{quat} vs {log}");
            // The metric is symmetric in its arguments.
            let swapped = rotation_error_deg(&b, &a);
            assert!((quat - swapped).abs() <= 1e-9 * (1.0 + quat));
        }
        let r = haar_rotation(&mut rng);
        assert!(rotation_error_deg(&r, &r) < 1e-7);
        let z90 = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(
            rotation_error_deg(&Matrix3::identity(), &z90),
            90.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn injected_noise_matches_the_requested_deviation() {
        // 1e5 scalar samples: the empirical standard deviation must land
        // within 2% of sigma, and only current-frame anchors may move.
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let base = gen_mixed_scene(&mut rng, 60);
        let template = Scene {
            correspondences: (0..34_000)
                .map(|_| Correspondence::PointPoint {
                    reference: sphere_point(&mut rng, SCENE_RADIUS_M),
                    current: uniform_vec3(&mut rng, 5.0),
                    weight: 1.0,
                })
                .collect(),
            ..base.clone()
        };
        let sigma = 0.1;
        let mut noisy = template.clone();
        add_noise(&mut noisy, &mut rng, sigma);
        assert_eq!(noisy.sigma, sigma);
        let mut sq = 0.0;
        let mut count = 0usize;
        for (c, n) in template.correspondences.iter().zip(&noisy.correspondences) {
            let (Correspondence::PointPoint { current: a, reference: ra, .. },
                 Correspondence::PointPoint { current: b, reference: rb, .. }) = (c, n)
            else {
                panic!("kind changed under noise");
            };
            assert_eq!(ra, rb, "reference data must stay untouched");
            sq += (a - b).norm_squared();
            count += 3;
        }
        let std = (sq / count as f64).sqrt();
        assert!(
            (std / sigma - 1.0).abs() < 0.02,
            "empirical std {std} vs sigma {sigma}"
        );

        // Line directions and plane normals stay exact on mixed scenes.
        let mut mixed = base.clone();
        add_noise(&mut mixed, &mut rng, sigma);
        for (c, n) in base.correspondences.iter().zip(&mixed.correspondences) {
            match (c, n) {
                (
                    Correspondence::PointLine { direction: da, .. },
                    Correspondence::PointLine { direction: db, .. },
                ) => assert_eq!(da, db),
                (
                    Correspondence::PointPlane { normal: na, .. },
                    Correspondence::PointPlane { normal: nb, .. },
                ) => assert_eq!(na, nb),
                _ => {}
            }
        }
    }

    #[test]
    fn ground_truth_residual_grows_with_the_noise_level() {
        let mut residuals = Vec::new();
        for (i, sigma) in [0.0, 0.05, 0.1, 0.2, 0.3].into_iter().enumerate() {
            // Same scene and noise draws at growing amplitude: the ground
            // truth residual must grow monotonically.
            let mut rng = ChaCha8Rng::seed_from_u64(94);
            let mut scene = gen_mixed_scene(&mut rng, 60);
            let mut noise_rng = ChaCha8Rng::seed_from_u64(95);
            add_noise(&mut scene, &mut noise_rng, sigma);
            let r = direct_objective(&scene.correspondences, &scene.rotation, &scene.translation);
            if i > 0 {
                assert!(r > residuals[i - 1], "sigma {sigma}: {r} vs {residuals:?}");
            }
            residuals.push(r);
        }
        assert!(residuals[0].abs() < 1e-10);
    }

    #[test]
    fn refinement_oracle_matches_the_solver_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(96);
        for trial in 0..3 {
            let mut scene = gen_mixed_scene(&mut rng, 40);
            add_noise(&mut scene, &mut rng, 0.3);
            let form = build_canonical(&scene.correspondences).unwrap();
            let sol = solve_canonical(&form, &SolverConfig::default()).unwrap();
            let (_, oracle_cost) = oracle_local_opt(&form, 50, &mut rng);
            assert!(
                sol.cost <= oracle_cost + 1e-8 * (1.0 + oracle_cost.abs()),
                "trial {trial}: solver {} vs oracle {}",
                sol.cost,
                oracle_cost
            );
            assert!(
                oracle_cost <= sol.cost + 1e-6 * (1.0 + sol.cost.abs()),
                "trial {trial}: oracle missed the optimum ({oracle_cost} vs {})",
                sol.cost
            );
            // Restarting from the solver's own answer must not descend.
            let (_, polished) = refine_on_sphere(&form, &sol.quaternion);
            assert!(polished >= sol.cost - 1e-10 * (1.0 + sol.cost.abs()));
        }
    }

    #[test]
    fn refinement_recovers_the_truth_on_an_exact_scene() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let scene = gen_mixed_scene(&mut rng, 40);
        let form = build_canonical(&scene.correspondences).unwrap();
        let (q, cost) = oracle_local_opt(&form, 30, &mut rng);
        assert!(cost.abs() <= 1e-10 * (1.0 + form.c_r.abs()), "cost {cost}");
        let recovered = crate::reduction::rotation_from_quat(&q);
        assert!(rotation_error_deg(&recovered, &scene.rotation) < 1e-5);
    }

    #[test]
    fn trial_seeds_are_deterministic_and_spread() {
        let a = trial_seed(7, 3, 11);
        assert_eq!(a, trial_seed(7, 3, 11));
        assert_ne!(a, trial_seed(7, 3, 12));
        assert_ne!(a, trial_seed(7, 4, 11));
        assert_ne!(a, trial_seed(8, 3, 11));
        let mut seen = std::collections::HashSet::new();
        for cell in 0..50u64 {
            for trial in 0..50u64 {
                assert!(seen.insert(trial_seed(1234, cell, trial)));
            }
        }
    }

    #[test]
    fn benchmark_runs_are_reproducible_except_timing() {
        let spec = BenchSpec {
            kind: SceneKind::ThreeD,
            methods: vec![Method::Deg7, Method::Deg9],
            sizes: vec![31],
            sigmas: vec![0.0, 0.1],
            trials: 3,
            master_seed: 99,
        };
        let a = run_benchmark(&spec);
        let b = run_benchmark(&spec);
        assert_eq!(a.len(), 2 * 2 * 3);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.seed, rb.seed);
            assert_eq!(ra.status, "ok");
            assert_eq!(ra.status, rb.status);
            assert_eq!(ra.delta_r_deg.to_bits(), rb.delta_r_deg.to_bits());
            assert_eq!(ra.delta_t_m.to_bits(), rb.delta_t_m.to_bits());
            assert_eq!(ra.candidates, rb.candidates);
        }
        let mut csv = Vec::new();
        write_csv(&mut csv, &a).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 1 + a.len());
    }

    #[test]
    fn noise_free_trials_recover_the_pose_and_noise_hurts() {
        let clean = run_trial(SceneKind::ThreeD, Method::Deg7, 40, 0.0, trial_seed(5, 0, 0));
        assert_eq!(clean.status, "ok");
        assert!(clean.delta_r_deg < 1e-6, "clean delta_r {}", clean.delta_r_deg);
        assert!(clean.delta_t_m < 1e-7, "clean delta_t {}", clean.delta_t_m);
        let noisy = run_trial(SceneKind::ThreeD, Method::Deg7, 40, 0.3, trial_seed(5, 0, 0));
        assert_eq!(noisy.status, "ok");
        assert!(noisy.delta_r_deg > clean.delta_r_deg * 100.0);
        let pnp = run_trial(SceneKind::Pnp, Method::Deg7, 10, 0.0, trial_seed(5, 1, 0));
        assert_eq!(pnp.status, "ok");
        assert!(pnp.delta_r_deg < 1e-5, "pnp delta_r {}", pnp.delta_r_deg);
    }

    #[test]
    fn summary_groups_by_cell() {
        let spec = BenchSpec {
            kind: SceneKind::ThreeD,
            methods: vec![Method::Deg7],
            sizes: vec![20],
            sigmas: vec![0.0, 0.05],
            trials: 2,
            master_seed: 7,
        };
        let records = run_benchmark(&spec);
        let summary = summarize(&records);
        let cells = summary["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 2);
        for cell in cells {
            assert_eq!(cell["trials"], 2);
            assert_eq!(cell["ok"], 2);
            assert_eq!(cell["pencil_columns"], 120);
            assert!(cell["median_solve_time_us"].as_f64().unwrap() >= 0.0);
        }
    }
}
