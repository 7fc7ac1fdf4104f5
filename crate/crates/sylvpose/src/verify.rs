//! Structural self-checks of the elimination machinery on random scenes.
//!
//! Each check validates one load-bearing invariant: the lambda-free system's
//! corank settles at 40 from degree 7 on (39 at degree 6), the augmented
//! eliminants keep full column rank at random multipliers, the compressed
//! pencil carries exactly 40 finite eigenvalues, extracted candidates are
//! stationary, the determinant augmentation rows of the lower degrees vanish
//! at roots recovered from the top degree, and exact scenes reproduce their
//! ground-truth pose under every elimination degree.
//!
//! A fault hook can zero one augmentation row before the rank checks run;
//! a healthy harness must then report failures. This guards the guard: a
//! verification suite that cannot see injected corruption proves nothing.

use crate::eigensolver::{extract_candidates, solve_pencil, ExtractionGates};
use crate::elimination::{
    build_elim_system, build_f_matrix, build_pencil, numerical_rank, ElimSystem, PENCIL_RANK_TOL,
    PENCIL_SIZE,
};
use crate::polysys::{build_c, lambda_block};
use crate::reduction::build_canonical;
use crate::sim_bench::{
    gen_mixed_scene, gen_scene_pnp, rotation_error_deg, translation_error, FOCAL_PX,
};
use crate::solver::{solve, Method, SolverConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

/// Deliberate corruption applied before the structural checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Zeroes the first determinant-augmentation row of each eliminant.
    ZeroSylvesterRow,
}

impl Fault {
    pub fn label(self) -> &'static str {
        match self {
            Fault::ZeroSylvesterRow => "zero-sylvester-row",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-sylvester-row" => Ok(Fault::ZeroSylvesterRow),
            other => Err(format!("unknown fault '{other}'")),
        }
    }
}

/// Outcome of one named invariant check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Aggregated verification outcome.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub fault: Option<Fault>,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "trials": self.trials,
            "fault": self.fault.map(Fault::label),
            "passed": self.all_passed(),
            "checks": self.checks.iter().map(|c| serde_json::json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
            })).collect::<Vec<_>>(),
        })
    }
}

fn apply_fault(es: &mut ElimSystem, fault: Option<Fault>) {
    if fault == Some(Fault::ZeroSylvesterRow) && es.n_sylvester > 0 {
        let row = es.e0.nrows() - es.n_sylvester;
        es.e0.row_mut(row).fill(0.0);
        es.e1.row_mut(row).fill(0.0);
    }
}

/// Runs every structural check over `trials` random mixed scenes.
pub fn run_verification(trials: usize, seed: u64, fault: Option<Fault>) -> VerifyReport {
    let trials = trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = ExtractionGates::default();

    let mut corank_ok = true;
    let mut corank_detail = String::new();
    let mut rank_ok = true;
    let mut rank_detail = String::new();
    let mut spectrum_ok = true;
    let mut spectrum_detail = String::new();
    let mut stationary_ok = true;
    let mut worst_residual = 0.0f64;
    let mut rows_ok = true;
    let mut worst_row = 0.0f64;

    for trial in 0..trials {
        let scene = gen_mixed_scene(&mut rng, 40);
        let form = build_canonical(&scene.correspondences).expect("generic random scene");
        let c = build_c(&form);

        // Corank of the lambda-free system: 39 at degree 6, 40 above.
        for degree in 6..=9usize {
            let f = build_f_matrix(&c, degree);
            let corank = f.ncols() - numerical_rank(&f);
            let expected = if degree == 6 { 39 } else { 40 };
            if corank != expected {
                corank_ok = false;
                corank_detail =
                    format!("trial {trial} degree {degree}: corank {corank}, expected {expected}");
            }
        }

        let mut top_candidates = Vec::new();
        for degree in 7..=9usize {
            let mut es = match build_elim_system(&c, degree) {
                Ok(es) => es,
                Err(err) => {
                    rank_ok = false;
                    rank_detail = format!("trial {trial} degree {degree}: {err}");
                    continue;
                }
            };
            apply_fault(&mut es, fault);

            // Full column rank of E(lambda) at random multipliers.
            for _ in 0..2 {
                let lambda: f64 = rng.random_range(-5.0..5.0);
                let e = es.eval_e(lambda);
                let rank = numerical_rank(&e);
                if rank != e.ncols() {
                    rank_ok = false;
                    rank_detail = format!(
                        "trial {trial} degree {degree}: rank {rank} of {} at lambda {lambda:.3}",
                        e.ncols()
                    );
                }
            }

            // Exactly 40 finite generalized eigenvalues.
            let pencil = match build_pencil(&es, PENCIL_RANK_TOL) {
                Ok(p) => p,
                Err(err) => {
                    spectrum_ok = false;
                    spectrum_detail = format!("trial {trial} degree {degree}: {err}");
                    continue;
                }
            };
            let pairs = match solve_pencil(&pencil) {
                Ok(p) => p,
                Err(err) => {
                    spectrum_ok = false;
                    spectrum_detail = format!("trial {trial} degree {degree}: {err}");
                    continue;
                }
            };
            let finite = pairs
                .iter()
                .filter(|p| p.beta.abs() > gates.beta_tol * p.alpha.norm())
                .count();
            if finite != PENCIL_SIZE {
                spectrum_ok = false;
                spectrum_detail =
                    format!("trial {trial} degree {degree}: {finite} finite eigenvalues");
            }

            let candidates = extract_candidates(&pencil, &pairs, &c, &gates);
            if candidates.is_empty() {
                stationary_ok = false;
            } else {
                let best = candidates
                    .iter()
                    .map(|cand| cand.residual)
                    .fold(f64::MAX, f64::min);
                worst_residual = worst_residual.max(best);
                if best > 1e-8 {
                    stationary_ok = false;
                }
            }
            if degree == 9 {
                top_candidates = candidates;
            }
        }

        // Determinant augmentation rows of degrees 7 and 8 vanish at the
        // stationary pairs recovered from the unaugmented degree-9 system.
        let mut rows = Vec::new();
        if let Ok([a, b, c2, d]) = crate::sylvester::build_s7(&c) {
            rows.extend([a, b, c2, d]);
        }
        if let Ok(s0) = crate::sylvester::build_s0(&c) {
            rows.push(s0);
        }
        for cand in &top_candidates {
            for row in &rows {
                let scale = (c.norm() + cand.lambda.abs() * lambda_block().norm()).powi(4);
                let value = row.eval(&cand.q, cand.lambda).abs() / scale.max(f64::MIN_POSITIVE);
                worst_row = worst_row.max(value);
                if value > 1e-7 {
                    rows_ok = false;
                }
            }
        }
    }

    // Exact scenes reproduce the ground truth under every degree.
    let mut recovery_ok = true;
    let mut recovery_detail = String::new();
    let mut worst_rot = 0.0f64;
    let mut worst_tr = 0.0f64;
    for kind in 0..2 {
        let scene = if kind == 0 {
            gen_mixed_scene(&mut rng, 40)
        } else {
            gen_scene_pnp(&mut rng, 10, FOCAL_PX)
        };
        for method in Method::ALL {
            let config = SolverConfig {
                method,
                ..SolverConfig::default()
            };
            match solve(&scene.correspondences, &config) {
                Ok(sol) => {
                    let dr = rotation_error_deg(&sol.rotation, &scene.rotation);
                    let dt = translation_error(&sol.translation, &scene.translation);
                    worst_rot = worst_rot.max(dr);
                    worst_tr = worst_tr.max(dt);
                    if dr > 1e-5 || dt > 1e-6 {
                        recovery_ok = false;
                        recovery_detail = format!("{method}: delta_r {dr:.3e} deg, delta_t {dt:.3e} m");
                    }
                }
                Err(err) => {
                    recovery_ok = false;
                    recovery_detail = format!("{method}: {err}");
                }
            }
        }
    }

    let checks = vec![
        CheckResult {
            name: "corank_law",
            passed: corank_ok,
            detail: if corank_ok {
                "corank 39 at degree 6, 40 at degrees 7-9".into()
            } else {
                corank_detail
            },
        },
        CheckResult {
            name: "eliminant_rank",
            passed: rank_ok,
            detail: if rank_ok {
                "augmented eliminants have full column rank at random multipliers".into()
            } else {
                rank_detail
            },
        },
        CheckResult {
            name: "pencil_spectrum",
            passed: spectrum_ok,
            detail: if spectrum_ok {
                format!("{PENCIL_SIZE} finite eigenvalues at every degree")
            } else {
                spectrum_detail
            },
        },
        CheckResult {
            name: "stationarity",
            passed: stationary_ok,
            detail: format!("worst best-candidate residual {worst_residual:.3e}"),
        },
        CheckResult {
            name: "sylvester_rows_at_roots",
            passed: rows_ok,
            detail: format!("worst scaled row value {worst_row:.3e}"),
        },
        CheckResult {
            name: "pose_recovery",
            passed: recovery_ok,
            detail: if recovery_ok {
                format!("worst delta_r {worst_rot:.3e} deg, delta_t {worst_tr:.3e} m")
            } else {
                recovery_detail
            },
        },
    ];

    VerifyReport {
        seed,
        trials,
        fault,
        checks,
    }
}
