//! Built-in problem catalogue.
//!
//! Every experiment the runner can launch is assembled here from named
//! presets, so configurations stay small, diffable and reproducible:
//! coefficients are code, not data.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::closed_form::{HjbQuadraticSpec, LinearTargetSpec};
use crate::control::ControlProblem;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::integrate::ControlledPath;
use crate::lattice::{AxisSpec, StateLattice};
use crate::roughpath::RoughPath;
use crate::rsde::{CoeffBounds, CoefficientSet, Tensor3};

/// Named sample paths for geometric lifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathPreset {
    /// X_t = t (scalar).
    Linear,
    /// X_t = (t, t²).
    Parabola,
    /// X_t = (sin t, cos 2t).
    SinCos,
}

impl PathPreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(PathPreset::Linear),
            "parabola" => Ok(PathPreset::Parabola),
            "sin-cos" => Ok(PathPreset::SinCos),
            other => Err(Error::Config(format!("unknown path preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PathPreset::Linear => "linear",
            PathPreset::Parabola => "parabola",
            PathPreset::SinCos => "sin-cos",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PathPreset::Linear => 1,
            PathPreset::Parabola | PathPreset::SinCos => 2,
        }
    }

    pub fn lift(&self, grid: TimeGrid) -> Result<RoughPath> {
        match self {
            PathPreset::Linear => RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])),
            PathPreset::Parabola => {
                RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t, t * t]))
            }
            PathPreset::SinCos => {
                RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t.sin(), (2.0 * t).cos()]))
            }
        }
    }
}

/// Named integrands for the `integrate` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrandPreset {
    /// Z ≡ 1, Z′ ≡ 0 (recovers δX).
    Constant,
    /// Z = δX_{0,·}, Z′ = Id (recovers the level-2 tensor).
    PathIncrement,
    /// Z = sin X¹, Z′ = (cos X¹) e₁ᵀ.
    SinFirst,
}

impl IntegrandPreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "constant" => Ok(IntegrandPreset::Constant),
            "path-increment" => Ok(IntegrandPreset::PathIncrement),
            "sin-first" => Ok(IntegrandPreset::SinFirst),
            other => Err(Error::Config(format!("unknown integrand preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IntegrandPreset::Constant => "constant",
            IntegrandPreset::PathIncrement => "path-increment",
            IntegrandPreset::SinFirst => "sin-first",
        }
    }

    pub fn build(&self, rp: &RoughPath) -> ControlledPath {
        let d = rp.dim();
        match self {
            IntegrandPreset::Constant => {
                let n = rp.n_steps() + 1;
                ControlledPath::new(
                    vec![DVector::from_vec(vec![1.0]); n],
                    vec![DMatrix::zeros(1, d); n],
                )
                .expect("constant integrand is well-formed")
            }
            IntegrandPreset::PathIncrement => ControlledPath::path_increment(rp),
            IntegrandPreset::SinFirst => ControlledPath::from_driver_fn(
                rp,
                |x| DVector::from_vec(vec![x[0].sin()]),
                move |x| {
                    let mut g = DMatrix::zeros(1, d);
                    g[(0, 0)] = x[0].cos();
                    g
                },
            ),
        }
    }
}

/// Named coefficient sets for `solve` and `pathwise-check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffPreset {
    /// dY = Y dX (geometric/Itô exponential).
    ExponentialRough,
    /// dY = 0.25 dt (rough and Brownian parts off).
    DriftOnly,
    /// Bounded smooth b, σ, f in one dimension.
    GenericSmooth,
    /// Drift + diffusion, f ≡ 0.
    ZeroRough,
}

impl CoeffPreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "exponential-rough" => Ok(CoeffPreset::ExponentialRough),
            "drift-only" => Ok(CoeffPreset::DriftOnly),
            "generic-smooth" => Ok(CoeffPreset::GenericSmooth),
            "zero-rough" => Ok(CoeffPreset::ZeroRough),
            other => Err(Error::Config(format!("unknown coefficient preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CoeffPreset::ExponentialRough => "exponential-rough",
            CoeffPreset::DriftOnly => "drift-only",
            CoeffPreset::GenericSmooth => "generic-smooth",
            CoeffPreset::ZeroRough => "zero-rough",
        }
    }

    pub fn build(&self) -> CoefficientSet {
        match self {
            CoeffPreset::ExponentialRough => CoefficientSet::zero(1, 1, 1, 0)
                .with_rough(
                    |_, y| DMatrix::from_vec(1, 1, vec![y[0]]),
                    |_, _| Tensor3::from_fn(1, 1, 1, |_, _, _| 1.0),
                )
                .with_bounds(CoeffBounds { rough_sup: 1.0, rough_lip: 1.0, ..CoeffBounds::default() }),
            CoeffPreset::DriftOnly => CoefficientSet::zero(1, 1, 1, 0)
                .with_drift(|_, _, _| DVector::from_vec(vec![0.25]))
                .with_bounds(CoeffBounds { drift_sup: 0.25, ..CoeffBounds::default() }),
            CoeffPreset::GenericSmooth => CoefficientSet::zero(1, 1, 1, 0)
                .with_drift(|t, y, _| DVector::from_vec(vec![0.4 * (y[0] + t).cos()]))
                .with_diffusion(|_, y, _| DMatrix::from_vec(1, 1, vec![0.25 * (1.0 + y[0].sin())]))
                .with_rough(
                    |_, y| DMatrix::from_vec(1, 1, vec![0.6 * y[0].tanh() + 0.2]),
                    |_, y| {
                        let c = 1.0 / y[0].cosh();
                        Tensor3::from_fn(1, 1, 1, |_, _, _| 0.6 * c * c)
                    },
                )
                .with_bounds(CoeffBounds {
                    drift_sup: 0.4,
                    diffusion_sup: 0.5,
                    rough_sup: 0.8,
                    drift_lip: 0.4,
                    diffusion_lip: 0.25,
                    rough_lip: 0.6,
                }),
            CoeffPreset::ZeroRough => CoefficientSet::zero(1, 1, 1, 0)
                .with_drift(|_, y, _| DVector::from_vec(vec![0.5 - y[0]]))
                .with_diffusion(|_, y, _| DMatrix::from_vec(1, 1, vec![0.3 + 0.1 * y[0].tanh()]))
                .with_bounds(CoeffBounds {
                    drift_sup: 1.0,
                    diffusion_sup: 0.4,
                    drift_lip: 1.0,
                    diffusion_lip: 0.1,
                    ..CoeffBounds::default()
                }),
        }
    }

    pub fn default_initial_state(&self) -> DVector<f64> {
        DVector::from_vec(vec![1.0])
    }
}

/// Named linear-target instances (driver X_t = t, canonical lift).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearTargetPreset {
    /// F ≡ 0, v = 1, T = 1/2: value 1/2.
    F0,
    /// d = 1, F = 1, T = ln 2: M_T = 1, value 0.
    ScalarLn2,
    /// d = 1, F = 1, T = ln(3/2): M_T = 1/2, value 1/2.
    ScalarLn32,
    /// d_Y = 2, F = [[0,1],[0,0]], v = (1,1), T = 1: M_T ≈ 1.81, value 0.
    Nilpotent,
}

impl LinearTargetPreset {
    pub const ALL: [LinearTargetPreset; 4] = [
        LinearTargetPreset::F0,
        LinearTargetPreset::ScalarLn2,
        LinearTargetPreset::ScalarLn32,
        LinearTargetPreset::Nilpotent,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "f0" => Ok(LinearTargetPreset::F0),
            "scalar-ln2" => Ok(LinearTargetPreset::ScalarLn2),
            "scalar-ln32" => Ok(LinearTargetPreset::ScalarLn32),
            "nilpotent" => Ok(LinearTargetPreset::Nilpotent),
            other => Err(Error::Config(format!("unknown linear-target preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LinearTargetPreset::F0 => "f0",
            LinearTargetPreset::ScalarLn2 => "scalar-ln2",
            LinearTargetPreset::ScalarLn32 => "scalar-ln32",
            LinearTargetPreset::Nilpotent => "nilpotent",
        }
    }

    pub fn default_steps(&self) -> usize {
        match self {
            LinearTargetPreset::F0 => 64,
            _ => 128,
        }
    }

    pub fn spec(&self, n_steps: usize) -> LinearTargetSpec {
        match self {
            LinearTargetPreset::F0 => LinearTargetSpec {
                mats: vec![DMatrix::zeros(1, 1)],
                v: DVector::from_vec(vec![1.0]),
                horizon: TimeGrid::new(0.0, 0.5, n_steps).expect("valid horizon"),
            },
            LinearTargetPreset::ScalarLn2 => LinearTargetSpec {
                mats: vec![DMatrix::from_vec(1, 1, vec![1.0])],
                v: DVector::from_vec(vec![1.0]),
                horizon: TimeGrid::new(0.0, 2f64.ln(), n_steps).expect("valid horizon"),
            },
            LinearTargetPreset::ScalarLn32 => LinearTargetSpec {
                mats: vec![DMatrix::from_vec(1, 1, vec![1.0])],
                v: DVector::from_vec(vec![1.0]),
                horizon: TimeGrid::new(0.0, 1.5f64.ln(), n_steps).expect("valid horizon"),
            },
            LinearTargetPreset::Nilpotent => LinearTargetSpec {
                mats: vec![DMatrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 0.0])],
                v: DVector::from_vec(vec![1.0, 1.0]),
                horizon: TimeGrid::new(0.0, 1.0, n_steps).expect("valid horizon"),
            },
        }
    }

    /// Canonical driver for the preset: the lift of X_t = t.
    pub fn driver(&self, n_steps: usize) -> RoughPath {
        let grid = self.spec(n_steps).horizon;
        RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).expect("lift of t")
    }

    /// Finite control set with `count` points: a uniform grid on [−1, 1] in
    /// one dimension, `count` unit directions on the circle in two.
    pub fn controls(&self, count: usize) -> Result<Vec<DVector<f64>>> {
        match self.spec(2).dim_y() {
            1 => ControlProblem::control_box(&[-1.0], &[1.0], &[count]),
            2 => Ok((0..count)
                .map(|j| {
                    let phi = std::f64::consts::TAU * j as f64 / count as f64;
                    DVector::from_vec(vec![phi.cos(), phi.sin()])
                })
                .collect()),
            d => Err(Error::invalid(format!("no control rule for dimension {d}"))),
        }
    }

    /// Lattice sized to the reachable set, `axis_nodes` nodes per axis.
    pub fn lattice(&self, axis_nodes: usize) -> Result<StateLattice> {
        let axes = match self {
            LinearTargetPreset::F0 => vec![AxisSpec::new(-1.0, 1.0, axis_nodes)],
            LinearTargetPreset::ScalarLn2 | LinearTargetPreset::ScalarLn32 => {
                vec![AxisSpec::new(-1.5, 1.5, axis_nodes)]
            }
            LinearTargetPreset::Nilpotent => vec![
                AxisSpec::new(-2.0, 2.0, axis_nodes),
                AxisSpec::new(-1.5, 1.5, axis_nodes),
            ],
        };
        StateLattice::new(axes)
    }

    /// Exact value of [1 − M_T]⁺ where it is known in closed form
    /// (the nilpotent preset's M_T is only available numerically).
    pub fn analytic_value(&self) -> Option<f64> {
        match self {
            LinearTargetPreset::F0 => Some(0.5),
            LinearTargetPreset::ScalarLn2 => Some(0.0),
            LinearTargetPreset::ScalarLn32 => Some(0.5),
            LinearTargetPreset::Nilpotent => None,
        }
    }
}

/// Default quadratic-HJB instance: ε = 1/2, σ = 1, X_t = t on [0, 1].
pub fn hjb_default(n_steps: usize) -> (HjbQuadraticSpec, Vec<f64>) {
    let horizon = TimeGrid::new(0.0, 1.0, n_steps).expect("valid horizon");
    let spec = HjbQuadraticSpec { epsilon: 0.5, sigma: 1.0, horizon, control_cap: 2.0 };
    let path = horizon.nodes().collect();
    (spec, path)
}

/// Lattice for [`hjb_default`]: y ∈ [−4, 4], z ∈ [−3, 3], centered at (0, 0).
pub fn hjb_default_lattice(axis_nodes: usize) -> StateLattice {
    StateLattice::new(vec![
        AxisSpec::new(-4.0, 4.0, axis_nodes),
        AxisSpec::new(-3.0, 3.0, axis_nodes),
    ])
    .expect("valid lattice")
}

/// Scalar driver X_t = t + ε sin²(π (t − t₀)/(T − t₀)), canonically lifted:
/// the bump vanishes at both endpoints and scales linearly with ε.
pub fn bump_perturbed_driver(grid: TimeGrid, eps: f64) -> Result<RoughPath> {
    let t0 = grid.start();
    let span = grid.end() - t0;
    RoughPath::lift_fn(grid, move |t| {
        let s = (std::f64::consts::PI * (t - t0) / span).sin();
        DVector::from_vec(vec![t + eps * s * s])
    })
}

/// Terminal cost |⟨v, y⟩ − 1| as a shareable closure.
pub fn target_terminal_cost(v: DVector<f64>) -> Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync> {
    Arc::new(move |y| (y.dot(&v) - 1.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_roundtrip() {
        for p in LinearTargetPreset::ALL {
            assert_eq!(LinearTargetPreset::parse(p.name()).unwrap(), p);
        }
        for name in ["linear", "parabola", "sin-cos"] {
            assert_eq!(PathPreset::parse(name).unwrap().name(), name);
        }
        for name in ["constant", "path-increment", "sin-first"] {
            assert_eq!(IntegrandPreset::parse(name).unwrap().name(), name);
        }
        for name in ["exponential-rough", "drift-only", "generic-smooth", "zero-rough"] {
            assert_eq!(CoeffPreset::parse(name).unwrap().name(), name);
        }
        assert!(PathPreset::parse("nope").is_err());
    }

    #[test]
    fn nilpotent_controls_are_unit_directions() {
        let controls = LinearTargetPreset::Nilpotent.controls(21).unwrap();
        assert_eq!(controls.len(), 21);
        for c in &controls {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        let scalar = LinearTargetPreset::ScalarLn2.controls(21).unwrap();
        assert_eq!(scalar.len(), 21);
        assert_eq!(scalar[0][0], -1.0);
        assert_eq!(scalar[20][0], 1.0);
    }

    #[test]
    fn bump_driver_fixes_endpoints() {
        let grid = TimeGrid::new(0.0, 2.0, 64).unwrap();
        let rp = bump_perturbed_driver(grid, 0.3).unwrap();
        assert!((rp.value(0)[0] - 0.0).abs() < 1e-12);
        assert!((rp.value(64)[0] - 2.0).abs() < 1e-9);
        let base = PathPreset::Linear.lift(grid).unwrap();
        assert!(crate::roughpath::rho_alpha(&rp, &base, 0.45).unwrap() > 0.0);
    }
}
