//! The acceptance suite: one callable check per promised property.
//!
//! Each criterion pins its tolerances in code and reports pass/fail plus a
//! human-readable detail line. The `accept` subcommand and the integration
//! tests both run these.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;

use crate::closed_form::{hjb_quadratic_value, linear_target_problem, linear_target_value};
use crate::control::{dpp_consistency, dpp_solve, value_continuity_probe, Sense};
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::integrate::{rough_integral, ControlledPath};
use crate::presets::{
    bump_perturbed_driver, hjb_default, hjb_default_lattice, CoeffPreset, LinearTargetPreset,
};
use crate::rng::{make_rng, mix};
use crate::roughpath::{BrownianMode, RoughPath};
use crate::rsde::{solve_rsde, ControlLaw, NoiseBundle};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} {:<24} {} — {} ({:.2}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.details,
            self.seconds
        )
    }
}

fn join_fmt<T, F: Fn(&T) -> String>(items: &[T], f: F) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

/// Least-squares slope of log(err) against log(h); infinite when fewer than
/// two positive errors remain (already converged to zero).
pub fn fit_order(hs: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(_, e)| **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn report(
    id: usize,
    name: &'static str,
    start: Instant,
    budget_seconds: f64,
    result: Result<(bool, String)>,
) -> CriterionReport {
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok((passed, details)) => CriterionReport {
            id,
            name,
            passed: passed && seconds < budget_seconds,
            details: if seconds < budget_seconds {
                details
            } else {
                format!("{details}; exceeded {budget_seconds}s budget")
            },
            seconds,
        },
        Err(e) => CriterionReport { id, name, passed: false, details: e.to_string(), seconds },
    }
}

fn random_lift(seed: u64, max_steps: usize) -> RoughPath {
    let mut rng = make_rng(seed);
    let dim = 1 + (rng.random_range(0..3usize));
    let n = rng.random_range(2..=max_steps);
    let grid = TimeGrid::new(0.0, 1.0, n).expect("valid grid");
    let mut samples = Vec::with_capacity(n + 1);
    let mut x = DVector::zeros(dim);
    for k in 0..=n {
        samples.push((grid.node(k), x.clone()));
        for c in 0..dim {
            x[c] += 0.3 * rng.random_range(-1.0..1.0f64);
        }
    }
    RoughPath::lift_piecewise_linear(&samples).expect("valid lift")
}

/// Criterion 1: Chen additivity and geometricity on random lifts; exact
/// Itô/Stratonovich gap in one dimension.
pub fn chen_geometricity_suite() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let mut worst_chen = 0.0f64;
        let mut worst_geo = 0.0f64;
        for i in 0..100u64 {
            let rp = random_lift(mix(1, 0xC4E1, i), 256);
            worst_geo = worst_geo.max(rp.geometricity_defect());
            let n = rp.n_steps();
            let mut rng = make_rng(mix(2, 0xC4E2, i));
            for _ in 0..5 {
                if n < 2 {
                    break;
                }
                let a = rng.random_range(0..n - 1);
                let b = rng.random_range(a + 1..n);
                let c = rng.random_range(b + 1..=n);
                let lhs = rp.level2(a, c)?;
                let rhs = rp.level2(a, b)?
                    + rp.level2(b, c)?
                    + rp.increment(a, b) * rp.increment(b, c).transpose();
                let scale = lhs.norm().max(1.0);
                worst_chen = worst_chen.max((lhs - rhs).norm() / scale);
            }
        }
        let mut gap_exact = true;
        for seed in 0..10u64 {
            let grid = TimeGrid::new(0.0, 1.0, 32)?;
            let h = grid.step();
            let ito = RoughPath::brownian(seed, 1, grid, 4, BrownianMode::Ito)?;
            let strato = RoughPath::brownian(seed, 1, grid, 4, BrownianMode::Strato)?;
            for k in 0..32 {
                let gap = strato.level2_step(k)[(0, 0)] - ito.level2_step(k)[(0, 0)];
                gap_exact &= gap == 0.5 * h;
            }
        }
        let pass = worst_chen <= 1e-12 && worst_geo <= 1e-12 && gap_exact;
        Ok((
            pass,
            format!(
                "chen defect {worst_chen:.2e}, geometricity defect {worst_geo:.2e}, \
                 ito/strato gap exact: {gap_exact}"
            ),
        ))
    };
    report(1, "chen-geometricity", start, 10.0, run())
}

/// Criterion 2: the compensated sum over (δX_{0,·}, Id) reproduces the
/// level-2 tensor for every partition.
pub fn rough_integral_exactness() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let mut worst = 0.0f64;
        for i in 0..20u64 {
            for &n in &[8usize, 64, 512] {
                let mut rng = make_rng(mix(3, n as u64, i));
                let dim = 1 + rng.random_range(0..3usize);
                let grid = TimeGrid::new(0.0, 1.0, n)?;
                let mut x = DVector::zeros(dim);
                let mut samples = Vec::with_capacity(n + 1);
                for k in 0..=n {
                    samples.push((grid.node(k), x.clone()));
                    for c in 0..dim {
                        x[c] += 0.4 * rng.random_range(-1.0..1.0f64);
                    }
                }
                let rp = RoughPath::lift_piecewise_linear(&samples)?;
                let cp = ControlledPath::path_increment(&rp);
                let integral = rough_integral(&cp, &rp)?;
                for k in [n / 3, n / 2, n] {
                    let xx = rp.level2(0, k)?;
                    let scale = xx.norm().max(1.0);
                    worst = worst.max((&integral[k] - xx).norm() / scale);
                }
            }
        }
        Ok((worst <= 1e-12, format!("worst relative defect {worst:.2e}")))
    };
    report(2, "rough-integral-exactness", start, 5.0, run())
}

/// Criterion 3: Davie-scheme convergence orders for the exponential RDE
/// (smooth driver) and the Itô exponential (Brownian driver).
pub fn rde_convergence() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let coeffs = CoeffPreset::ExponentialRough.build();
        let law = ControlLaw::Constant(DVector::zeros(0));
        let y0 = DVector::from_vec(vec![1.0]);

        // Smooth: X_t = t on [0, 1], solution e.
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for p in 4..=10u32 {
            let n = 1usize << p;
            let grid = TimeGrid::new(0.0, 1.0, n)?;
            let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t]))?;
            let noise = NoiseBundle::from_increments(1, n, 1, vec![0.0; n])?;
            let batch = solve_rsde(&coeffs, &law, &rp, &noise, &y0, 0)?;
            hs.push(1.0 / n as f64);
            errs.push((batch.terminal(0)[0] - 1f64.exp()).abs());
        }
        let smooth_order = fit_order(&hs, &errs);

        // Brownian: dY = Y dX with the Itô lift, coupled across meshes.
        let meshes = [16usize, 32, 64, 128, 256, 512];
        let finest = 512;
        let n_paths = 200;
        let mut strong = Vec::new();
        for &n in &meshes {
            let grid = TimeGrid::new(0.0, 1.0, n)?;
            let mut total = 0.0;
            for p in 0..n_paths {
                let seed = mix(10, 0xB0, p as u64);
                let rp = RoughPath::brownian(seed, 1, grid, finest / n, BrownianMode::Ito)?;
                let noise = NoiseBundle::from_increments(1, n, 1, vec![0.0; n])?;
                let batch = solve_rsde(&coeffs, &law, &rp, &noise, &y0, 0)?;
                let w_t = rp.value(n)[0];
                total += (batch.terminal(0)[0] - (w_t - 0.5).exp()).abs();
            }
            strong.push(total / n_paths as f64);
        }
        let hs: Vec<f64> = meshes.iter().map(|n| 1.0 / *n as f64).collect();
        let strong_order = fit_order(&hs, &strong);

        let pass = smooth_order >= 0.9 && strong_order >= 0.4;
        Ok((
            pass,
            format!("smooth order {smooth_order:.2} (≥ 0.9), strong order {strong_order:.2} (≥ 0.4)"),
        ))
    };
    report(3, "rde-convergence", start, 60.0, run())
}

/// Criterion 4: DPP value vs. the linear-target closed form on all presets.
pub fn linear_target_oracle() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let mut lines = Vec::new();
        let mut pass = true;
        for preset in LinearTargetPreset::ALL {
            let n = preset.default_steps();
            let spec = preset.spec(n);
            let rp = preset.driver(n);
            let closed = linear_target_value(&spec, &rp)?;
            if let Some(exact) = preset.analytic_value() {
                pass &= (closed.value - exact).abs() <= 1e-4;
            }
            let problem = linear_target_problem(&spec, preset.controls(21)?)?;
            let lattice = preset.lattice(201)?;
            let vg = dpp_solve(&problem, &rp, &lattice, 1)?;
            let origin = vec![0.0; spec.dim_y()];
            let dpp_val = vg.initial_value(&origin);
            let gap = (dpp_val - closed.value).abs();
            pass &= gap <= 5e-3;
            lines.push(format!("{}: |{dpp_val:.5} − {:.5}| = {gap:.1e}", preset.name(), closed.value));
        }
        Ok((pass, lines.join("; ")))
    };
    report(4, "linear-target-oracle", start, 120.0, run())
}

/// Residual of −∂ₜV = ½ z²σ² V_yy + (1/4ε) V_z² + z V_y Ẋ for the corrected
/// closed form under X_t = t, all derivatives analytic.
fn hjb_pde_residual(eps: f64, sigma: f64, t_end: f64, t: f64, z: f64) -> f64 {
    let dt_v = -z - (t_end - t).powi(2) / (4.0 * eps);
    let (v_y, v_yy, v_z) = (1.0, 0.0, t_end - t);
    let x_dot = 1.0;
    -dt_v - (0.5 * z * z * sigma * sigma * v_yy + v_z * v_z / (4.0 * eps) + z * v_y * x_dot)
}

/// Criterion 5: max-sense DPP vs. the explicit quadratic value, plus the
/// PDE-residual check that pins the corrected integrand.
pub fn hjb_quadratic_oracle() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let (spec, path) = hjb_default(50);
        let problem = crate::closed_form::hjb_quadratic_problem(&spec, &path, 21)?;
        let lattice = hjb_default_lattice(101);
        let vg = dpp_solve(&problem, &lattice_driver(&spec.horizon)?, &lattice, 5)?;
        let dpp_val = vg.initial_value(&[0.0, 0.0]);
        let analytic = 0.0 + 0.0 + 1.0 / (12.0 * spec.epsilon);
        let gap = (dpp_val - analytic).abs();
        let trapz = hjb_quadratic_value(&spec, &path, 0, 0.0, 0.0)?;

        let mut rng = make_rng(55);
        let mut worst_residual = 0.0f64;
        for _ in 0..20 {
            let t: f64 = rng.random_range(0.0..1.0);
            let z: f64 = rng.random_range(-2.0..2.0);
            worst_residual =
                worst_residual.max(hjb_pde_residual(spec.epsilon, spec.sigma, 1.0, t, z).abs());
        }
        let pass = gap <= 5e-2 && worst_residual < 1e-8 && (trapz - analytic).abs() < 1e-3;
        Ok((
            pass,
            format!(
                "|{dpp_val:.4} − {analytic:.4}| = {gap:.1e} (≤ 5e-2), pde residual {worst_residual:.1e}"
            ),
        ))
    };
    report(5, "hjb-quadratic-oracle", start, 300.0, run())
}

fn lattice_driver(grid: &TimeGrid) -> Result<RoughPath> {
    RoughPath::lift_fn(*grid, |t| DVector::from_vec(vec![t]))
}

/// Criterion 6: two-stage dynamic programming agrees with the single pass.
pub fn dpp_composition() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let preset = LinearTargetPreset::ScalarLn32;
        let n = preset.default_steps();
        let spec = preset.spec(n);
        let rp = preset.driver(n);
        let problem = linear_target_problem(&spec, preset.controls(21)?)?;
        let lattice = preset.lattice(201)?;
        let defect = dpp_consistency(&problem, &rp, &lattice, 1, n / 2)?;

        let mut zero_problem = problem.clone();
        zero_problem.terminal_cost = std::sync::Arc::new(|_| 0.0);
        let zero_defect = dpp_consistency(&zero_problem, &rp, &lattice, 1, n / 2)?;

        let pass = defect <= 1e-2 && zero_defect == 0.0;
        Ok((pass, format!("defect {defect:.2e} (≤ 1e-2), zero-cost defect {zero_defect:.1e}")))
    };
    report(6, "dpp-composition", start, 120.0, run())
}

/// Criterion 7: Lipschitz-like response of the value to driver perturbations.
pub fn value_continuity() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let preset = LinearTargetPreset::ScalarLn32;
        let n = 64;
        let spec = preset.spec(n);
        let rp = preset.driver(n);
        let problem = linear_target_problem(&spec, preset.controls(21)?)?;
        let lattice = preset.lattice(201)?;
        let mut ratios = Vec::new();
        let mut sups = Vec::new();
        for &eps in &[0.2, 0.1, 0.05] {
            let perturbed = bump_perturbed_driver(spec.horizon, eps)?;
            let rep = value_continuity_probe(&problem, &rp, &perturbed, &lattice, 1, 0.45)?;
            ratios.push(rep.ratio);
            sups.push(rep.sup_dv);
        }
        let rmax = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let monotone = sups.windows(2).all(|w| w[1] < w[0]);
        let pass = rmin > 0.0 && rmax / rmin <= 3.0 && monotone;
        let ratio_list = join_fmt(&ratios, |r| format!("{r:.3}"));
        let sup_list = join_fmt(&sups, |s| format!("{s:.2e}"));
        Ok((
            pass,
            format!(
                "ratios [{ratio_list}] (spread ×{:.2} ≤ 3), sup|ΔV| [{sup_list}] decreasing: {monotone}",
                rmax / rmin
            ),
        ))
    };
    report(7, "value-continuity", start, 120.0, run())
}

/// Criterion 8: coupled Davie vs. Euler–Maruyama terminal gaps.
pub fn pathwise_consistency_check() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let meshes = [16usize, 32, 64, 128];
        let coeffs = CoeffPreset::ExponentialRough.build();
        let report = crate::randomize::pathwise_consistency(
            &coeffs,
            &DVector::zeros(0),
            (0.0, 1.0),
            &meshes,
            200,
            2024,
            1,
            &DVector::from_vec(vec![1.0]),
        )?;
        let mut min_factor = f64::INFINITY;
        for w in report.mean_gaps.windows(2) {
            min_factor = min_factor.min(w[0] / w[1]);
        }

        let zero = CoeffPreset::ZeroRough.build();
        let zero_report = crate::randomize::pathwise_consistency(
            &zero,
            &DVector::zeros(0),
            (0.0, 1.0),
            &meshes,
            200,
            2024,
            1,
            &DVector::from_vec(vec![1.0]),
        )?;
        let zero_exact = zero_report.mean_gaps.iter().all(|g| *g == 0.0);

        let pass = min_factor >= 1.3 && zero_exact;
        let gap_list = join_fmt(&report.mean_gaps, |g| format!("{g:.2e}"));
        Ok((
            pass,
            format!(
                "gaps [{gap_list}], worst halving factor {min_factor:.2} (≥ 1.3), f≡0 exact: {zero_exact}"
            ),
        ))
    };
    report(8, "pathwise-consistency", start, 120.0, run())
}

/// Criterion 9: byte-identical CLI reruns and manifest replay.
pub fn reproducibility() -> CriterionReport {
    let start = Instant::now();
    let run = || crate::cli::reproducibility_check();
    report(9, "reproducibility", start, 300.0, run())
}

/// Criterion 10: control-set monotonicity and min/max duality.
pub fn monotonicity_duality() -> CriterionReport {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let mut pass = true;
        let mut worst = 0.0f64;
        for preset in [
            LinearTargetPreset::F0,
            LinearTargetPreset::ScalarLn2,
            LinearTargetPreset::ScalarLn32,
        ] {
            let n = preset.default_steps();
            let spec = preset.spec(n);
            let rp = preset.driver(n);
            let lattice = preset.lattice(101)?;
            let small = linear_target_problem(&spec, preset.controls(3)?)?;
            let large = linear_target_problem(&spec, preset.controls(21)?)?;
            let v_small = dpp_solve(&small, &rp, &lattice, 1)?;
            let v_large = dpp_solve(&large, &rp, &lattice, 1)?;
            for (a, b) in v_large.slice(0).iter().zip(v_small.slice(0)) {
                worst = worst.max(a - b);
                pass &= *a <= b + 1e-12;
            }
        }

        // Duality on a stochastic instance.
        let (spec, path) = hjb_default(10);
        let max_problem = crate::closed_form::hjb_quadratic_problem(&spec, &path, 9)?;
        let mut min_problem = max_problem.clone();
        min_problem.sense = Sense::Min;
        let g = max_problem.terminal_cost.clone();
        min_problem.terminal_cost = std::sync::Arc::new(move |y| -g(y));
        let l = max_problem.running_cost.clone();
        min_problem.running_cost = std::sync::Arc::new(move |t, y: &DVector<f64>, a: &DVector<f64>| -l(t, y, a));
        let lattice = hjb_default_lattice(41);
        let driver = lattice_driver(&spec.horizon)?;
        let vmax = dpp_solve(&max_problem, &driver, &lattice, 3)?;
        let vmin = dpp_solve(&min_problem, &driver, &lattice, 3)?;
        let dual_exact = (0..=10).all(|k| {
            vmax.slice(k)
                .iter()
                .zip(vmin.slice(k))
                .all(|(a, b)| *a == -*b)
        });
        pass &= dual_exact;
        Ok((
            pass,
            format!("worst monotonicity violation {worst:.1e} (≤ 1e-12), duality exact: {dual_exact}"),
        ))
    };
    report(10, "monotonicity-duality", start, 120.0, run())
}

/// Run the whole suite in order.
pub fn run_all() -> Vec<CriterionReport> {
    vec![
        chen_geometricity_suite(),
        rough_integral_exactness(),
        rde_convergence(),
        linear_target_oracle(),
        hjb_quadratic_oracle(),
        dpp_composition(),
        value_continuity(),
        pathwise_consistency_check(),
        reproducibility(),
        monotonicity_duality(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_order_recovers_slopes() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((fit_order(&hs, &errs) - 2.0).abs() < 1e-12);
        let zeros = [0.0, 0.0, 0.0, 0.0];
        assert!(fit_order(&hs, &zeros).is_infinite());
    }
}
