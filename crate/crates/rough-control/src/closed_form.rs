//! Analytically solvable control problems used as ground truth.
//!
//! Two families:
//!
//! * **Linear target** — dY = η dt + f(Y) dX with linear f, |η| ≤ 1, zero Itô
//!   vector fields, and terminal cost |⟨v, Y_T⟩ − 1| from Y_0 = 0. Writing
//!   Θ_r = (P_{T←r})ᵀ v for the adjoint of the uncontrolled linear flow and
//!   M_T = ∫₀ᵀ |Θ_r| dr, the optimal value is [1 − M_T]⁺: overshooting the
//!   target is free once M_T > 1, otherwise full speed along Θ̂ is optimal.
//!
//! * **Quadratic HJB** — d(Y,Z) = (0, η) dt + (Zσ, 0) dB + (Z, 0) dX with
//!   objective sup E[Y_T − ∫ ε η² dt]. The value function is
//!   y + (X_T − X_s) z + (1/4ε) ∫ₛᵀ (X_T − X_r)² dr. (The integrand is
//!   (X_T − X_r)², as the PDE-residual test in this module pins down.)

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::{ControlProblem, Sense};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::roughpath::RoughPath;
use crate::rsde::{linear_flow, CoeffBounds, CoefficientSet, Tensor3};

/// Data of the linear-target problem: f(y) dX = Σᵢ Fᵢ y dXⁱ, target
/// direction v, control ball |η| ≤ 1.
#[derive(Debug, Clone)]
pub struct LinearTargetSpec {
    pub mats: Vec<DMatrix<f64>>,
    pub v: DVector<f64>,
    pub horizon: TimeGrid,
}

impl LinearTargetSpec {
    pub fn dim_y(&self) -> usize {
        self.v.len()
    }

    pub fn dim_x(&self) -> usize {
        self.mats.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim_y();
        if self.mats.is_empty() {
            return Err(Error::invalid("linear target needs at least one flow matrix"));
        }
        if self.mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::mismatch("flow matrices must be d_Y×d_Y"));
        }
        Ok(())
    }
}

/// Closed-form solution data for one driver realization.
#[derive(Debug, Clone)]
pub struct LinearTargetValue {
    /// [1 − M_T]⁺.
    pub value: f64,
    /// ∫₀ᵀ |Θ_r| dr by the trapezoid rule on the grid.
    pub m_t: f64,
    /// |Θ(t_k)| per grid node.
    pub theta_norms: Vec<f64>,
    /// Optimal control per grid node (Θ̂ or Θ̂ / M_T).
    pub control: Vec<DVector<f64>>,
    /// Nodes where |Θ| = 0 and the unit direction is undefined.
    pub degenerate_nodes: Vec<usize>,
}

/// Evaluate the linear-target closed form along `rp`.
pub fn linear_target_value(spec: &LinearTargetSpec, rp: &RoughPath) -> Result<LinearTargetValue> {
    spec.validate()?;
    if *rp.grid() != spec.horizon {
        return Err(Error::mismatch("driver grid must equal the spec horizon"));
    }
    if rp.dim() != spec.dim_x() {
        return Err(Error::mismatch("driver dimension must match the flow matrices"));
    }
    let flow = linear_flow(&spec.mats, rp, &spec.v)?;
    let theta_norms = flow.theta_norms();
    let h = spec.horizon.step();
    let mut m_t = 0.0;
    for w in theta_norms.windows(2) {
        m_t += 0.5 * (w[0] + w[1]) * h;
    }
    let value = (1.0 - m_t).max(0.0);
    let scale = if m_t > 1.0 { 1.0 / m_t } else { 1.0 };
    let mut degenerate_nodes = Vec::new();
    let control = flow
        .theta
        .iter()
        .enumerate()
        .map(|(k, theta)| {
            let norm = theta_norms[k];
            if norm == 0.0 {
                degenerate_nodes.push(k);
                DVector::zeros(spec.dim_y())
            } else {
                theta * (scale / norm)
            }
        })
        .collect();
    Ok(LinearTargetValue { value, m_t, theta_norms, control, degenerate_nodes })
}

/// The same problem as a [`ControlProblem`] for the DPP solver, with the
/// control ball replaced by the given finite set.
pub fn linear_target_problem(
    spec: &LinearTargetSpec,
    controls: Vec<DVector<f64>>,
) -> Result<ControlProblem> {
    spec.validate()?;
    let dim_y = spec.dim_y();
    let dim_x = spec.dim_x();
    let mats = spec.mats.clone();
    let jac_mats = spec.mats.clone();
    let v = spec.v.clone();
    let coeffs = CoefficientSet::zero(dim_y, 1, dim_x, dim_y)
        .with_drift(|_, _, a| a.clone())
        .with_rough(
            move |_, y| {
                let mut f = DMatrix::zeros(y.len(), mats.len());
                for (i, m) in mats.iter().enumerate() {
                    f.set_column(i, &(m * y));
                }
                f
            },
            move |_, y| {
                Tensor3::from_fn(y.len(), jac_mats.len(), y.len(), |m, j, k| jac_mats[j][(m, k)])
            },
        )
        .with_bounds(CoeffBounds {
            drift_sup: 1.0,
            diffusion_sup: 0.0,
            rough_sup: spec.mats.iter().map(|m| m.norm()).fold(0.0, f64::max),
            ..CoeffBounds::default()
        });
    let problem = ControlProblem {
        coeffs,
        terminal_cost: Arc::new(move |y| (y.dot(&v) - 1.0).abs()),
        running_cost: Arc::new(|_, _, _| 0.0),
        controls,
        horizon: spec.horizon,
        sense: Sense::Min,
    };
    problem.validate()?;
    Ok(problem)
}

/// Data of the quadratic-cost example driven by a scalar path.
#[derive(Debug, Clone, Copy)]
pub struct HjbQuadraticSpec {
    pub epsilon: f64,
    pub sigma: f64,
    pub horizon: TimeGrid,
    /// Control box half-width; must dominate sup |X_T − X_r| / (2ε) + 1 so
    /// the unconstrained optimizer stays representable.
    pub control_cap: f64,
}

impl HjbQuadraticSpec {
    pub fn validate(&self, path_values: &[f64]) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if path_values.len() != self.horizon.n_steps() + 1 {
            return Err(Error::mismatch("path values must cover every grid node"));
        }
        let x_t = *path_values.last().unwrap();
        let reach = path_values
            .iter()
            .map(|x| (x_t - x).abs())
            .fold(0.0, f64::max);
        let needed = reach / (2.0 * self.epsilon) + 1.0;
        if self.control_cap < needed {
            return Err(Error::invalid(format!(
                "control cap {} too small; need at least {needed}",
                self.control_cap
            )));
        }
        Ok(())
    }
}

/// Explicit value y + (X_T − X_s) z + (1/4ε) ∫ₛᵀ (X_T − X_r)² dr, with the
/// time integral by the trapezoid rule on the grid.
pub fn hjb_quadratic_value(
    spec: &HjbQuadraticSpec,
    path_values: &[f64],
    s_node: usize,
    y: f64,
    z: f64,
) -> Result<f64> {
    if path_values.len() != spec.horizon.n_steps() + 1 {
        return Err(Error::mismatch("path values must cover every grid node"));
    }
    if s_node > spec.horizon.n_steps() {
        return Err(Error::invalid("start node out of range"));
    }
    let x_t = *path_values.last().unwrap();
    let h = spec.horizon.step();
    let sq = |r: usize| {
        let d = x_t - path_values[r];
        d * d
    };
    let mut integral = 0.0;
    for r in s_node..spec.horizon.n_steps() {
        integral += 0.5 * (sq(r) + sq(r + 1)) * h;
    }
    Ok(y + (x_t - path_values[s_node]) * z + integral / (4.0 * spec.epsilon))
}

/// The quadratic example as a max-sense [`ControlProblem`] with state (y, z):
/// dy = zσ dB + z dX, dz = η dt, cost sup E[Y_T − ∫ ε η² dt].
///
/// `n_controls` should be odd so that 0 and both extremes of the control box
/// are representable.
pub fn hjb_quadratic_problem(
    spec: &HjbQuadraticSpec,
    path_values: &[f64],
    n_controls: usize,
) -> Result<ControlProblem> {
    spec.validate(path_values)?;
    if n_controls == 0 {
        return Err(Error::invalid("need at least one control"));
    }
    let sigma = spec.sigma;
    let eps = spec.epsilon;
    let controls =
        ControlProblem::control_box(&[-spec.control_cap], &[spec.control_cap], &[n_controls])?;
    let coeffs = CoefficientSet::zero(2, 1, 1, 1)
        .with_drift(|_, _, a| DVector::from_vec(vec![0.0, a[0]]))
        .with_diffusion(move |_, y, _| DMatrix::from_vec(2, 1, vec![y[1] * sigma, 0.0]))
        .with_rough(
            |_, y| DMatrix::from_vec(2, 1, vec![y[1], 0.0]),
            |_, _| {
                // ∂f⁽ʸ⁾/∂z = 1 is the only nonzero entry; the resulting
                // Γ = Df·f vanishes because f⁽ᶻ⁾ = 0.
                Tensor3::from_fn(2, 1, 2, |m, _, k| if m == 0 && k == 1 { 1.0 } else { 0.0 })
            },
        )
        .with_bounds(CoeffBounds {
            drift_sup: spec.control_cap,
            diffusion_sup: sigma.abs(),
            rough_sup: 1.0,
            ..CoeffBounds::default()
        });
    let problem = ControlProblem {
        coeffs,
        terminal_cost: Arc::new(|y| y[0]),
        running_cost: Arc::new(move |_, _, a| -eps * a[0] * a[0]),
        controls,
        horizon: spec.horizon,
        sense: Sense::Max,
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn scalar_spec(t_end: f64, n: usize) -> LinearTargetSpec {
        LinearTargetSpec {
            mats: vec![DMatrix::from_vec(1, 1, vec![1.0])],
            v: DVector::from_vec(vec![1.0]),
            horizon: TimeGrid::new(0.0, t_end, n).unwrap(),
        }
    }

    fn linear_driver(grid: TimeGrid) -> RoughPath {
        RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).unwrap()
    }

    #[test]
    fn zero_flow_reduces_to_target_distance() {
        let spec = LinearTargetSpec {
            mats: vec![DMatrix::zeros(1, 1)],
            v: DVector::from_vec(vec![1.0]),
            horizon: TimeGrid::new(0.0, 0.5, 64).unwrap(),
        };
        let rp = linear_driver(spec.horizon);
        let out = linear_target_value(&spec, &rp).unwrap();
        assert_relative_eq!(out.m_t, 0.5, max_relative = 1e-13);
        assert_relative_eq!(out.value, 0.5, max_relative = 1e-13);
        assert!(out.theta_norms.iter().all(|n| (n - 1.0).abs() < 1e-14));
        assert!(out.degenerate_nodes.is_empty());
    }

    #[test]
    fn scalar_flow_hits_known_values() {
        // T = ln 2: M_T = e^T − 1 = 1 ⇒ value 0.
        let spec = scalar_spec(2f64.ln(), 512);
        let rp = linear_driver(spec.horizon);
        let out = linear_target_value(&spec, &rp).unwrap();
        assert_relative_eq!(out.m_t, 1.0, epsilon = 1e-5);
        assert!(out.value < 1e-5);

        // T = ln(3/2): M_T = 1/2 ⇒ value 1/2.
        let spec = scalar_spec(1.5f64.ln(), 512);
        let rp = linear_driver(spec.horizon);
        let out = linear_target_value(&spec, &rp).unwrap();
        assert_relative_eq!(out.m_t, 0.5, epsilon = 1e-5);
        assert_relative_eq!(out.value, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn value_stays_in_unit_interval_and_scales_controls() {
        let spec = scalar_spec(1.2, 256);
        let rp = linear_driver(spec.horizon);
        let out = linear_target_value(&spec, &rp).unwrap();
        assert!(out.m_t > 1.0);
        assert_eq!(out.value, 0.0);
        // Optimal control norm is 1/M_T once the target is overshot.
        for c in &out.control {
            assert_relative_eq!(c.norm(), 1.0 / out.m_t, max_relative = 1e-12);
        }
    }

    #[test]
    fn orthogonal_conjugation_preserves_the_value() {
        let base = LinearTargetSpec {
            mats: vec![DMatrix::from_vec(2, 2, vec![0.3, -0.2, 0.5, 0.1])],
            v: DVector::from_vec(vec![0.8, -0.6]),
            horizon: TimeGrid::new(0.0, 1.0, 128).unwrap(),
        };
        let rp = linear_driver(base.horizon);
        let reference = linear_target_value(&base, &rp).unwrap();
        let mut rng = crate::rng::make_rng(100);
        for _ in 0..5 {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let q = DMatrix::from_vec(2, 2, vec![phi.cos(), phi.sin(), -phi.sin(), phi.cos()]);
            let rotated = LinearTargetSpec {
                mats: base.mats.iter().map(|f| &q * f * q.transpose()).collect(),
                v: &q * &base.v,
                horizon: base.horizon,
            };
            let out = linear_target_value(&rotated, &rp).unwrap();
            assert_relative_eq!(out.m_t, reference.m_t, epsilon = 1e-8);
            assert_relative_eq!(out.value, reference.value, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_target_direction_is_flagged() {
        let spec = LinearTargetSpec {
            mats: vec![DMatrix::from_vec(1, 1, vec![1.0])],
            v: DVector::zeros(1),
            horizon: TimeGrid::new(0.0, 1.0, 8).unwrap(),
        };
        let rp = linear_driver(spec.horizon);
        let out = linear_target_value(&spec, &rp).unwrap();
        assert_eq!(out.degenerate_nodes.len(), 9);
        assert_eq!(out.value, 1.0);
        assert!(out.control.iter().all(|c| c.norm() == 0.0));
    }

    fn hjb_spec(n: usize) -> (HjbQuadraticSpec, Vec<f64>) {
        let horizon = TimeGrid::new(0.0, 1.0, n).unwrap();
        let spec = HjbQuadraticSpec { epsilon: 0.5, sigma: 1.0, horizon, control_cap: 2.0 };
        let path: Vec<f64> = horizon.nodes().collect();
        (spec, path)
    }

    #[test]
    fn constant_path_value_is_y() {
        let horizon = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let spec = HjbQuadraticSpec { epsilon: 0.5, sigma: 1.0, horizon, control_cap: 2.0 };
        let path = vec![1.7; 33];
        let v = hjb_quadratic_value(&spec, &path, 0, 0.4, -3.0).unwrap();
        assert_eq!(v, 0.4);
    }

    #[test]
    fn linear_path_matches_analytic_integral() {
        let (spec, path) = hjb_spec(512);
        // ∫₀¹ (1 − r)² dr = 1/3 ⇒ value = y + z + 1/(12 ε).
        let v = hjb_quadratic_value(&spec, &path, 0, 0.25, -0.5).unwrap();
        let expect = 0.25 - 0.5 + 1.0 / (12.0 * spec.epsilon);
        assert_relative_eq!(v, expect, epsilon = 1e-5);
    }

    #[test]
    fn value_is_affine_in_y_and_z() {
        let (spec, path) = hjb_spec(64);
        let s = 16;
        let base = hjb_quadratic_value(&spec, &path, s, 0.0, 0.0).unwrap();
        let vy = hjb_quadratic_value(&spec, &path, s, 1.25, 0.0).unwrap();
        assert_eq!(vy - base, 1.25);
        let vz = hjb_quadratic_value(&spec, &path, s, 0.0, 2.0).unwrap();
        let x_t_minus_x_s = path[64] - path[s];
        assert_relative_eq!(vz - base, 2.0 * x_t_minus_x_s, max_relative = 1e-12);
    }

    /// Residual of −∂ₜV = ½ z²σ² V_yy + (1/4ε) V_z² + z V_y Ẋ for the
    /// candidate V(t,y,z) = y + (T−t) z + (T−t)³/(12ε) under X_t = t,
    /// with all derivatives written analytically.
    fn pde_residual(eps: f64, t_end: f64, t: f64, z: f64) -> f64 {
        let dt_v = -z - (t_end - t).powi(2) / (4.0 * eps);
        let v_y = 1.0;
        let v_yy = 0.0;
        let v_z = t_end - t;
        let x_dot = 1.0;
        let sigma: f64 = 1.0;
        -dt_v - (0.5 * z * z * sigma * sigma * v_yy + v_z * v_z / (4.0 * eps) + z * v_y * x_dot)
    }

    #[test]
    fn corrected_closed_form_satisfies_the_hjb_pde() {
        let mut rng = crate::rng::make_rng(5);
        for _ in 0..20 {
            let t: f64 = rng.random_range(0.0..1.0);
            let z: f64 = rng.random_range(-2.0..2.0);
            let r = pde_residual(0.5, 1.0, t, z);
            assert!(r.abs() < 1e-8, "residual {r} at (t, z) = ({t}, {z})");
        }
        // The trapezoid integral agrees with the analytic (T−t)³/(12ε).
        let (spec, path) = hjb_spec(256);
        for s in [0usize, 64, 192] {
            let t = spec.horizon.node(s);
            let got = hjb_quadratic_value(&spec, &path, s, 0.0, 0.0).unwrap();
            let expect = (1.0 - t).powi(3) / (12.0 * spec.epsilon);
            assert_relative_eq!(got, expect, epsilon = 1e-5);
        }
    }

    #[test]
    fn control_cap_is_validated() {
        let (mut spec, path) = hjb_spec(32);
        spec.control_cap = 1.5; // needs 1/(2·0.5) + 1 = 2
        assert!(spec.validate(&path).is_err());
        assert!(hjb_quadratic_problem(&spec, &path, 21).is_err());
        spec.control_cap = 2.0;
        assert!(hjb_quadratic_problem(&spec, &path, 21).is_ok());
    }
}
