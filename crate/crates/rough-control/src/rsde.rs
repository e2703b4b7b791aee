//! Rough stochastic differential equations via the Davie one-step scheme.
//!
//! The state update over a step of size h with Brownian increment dB and
//! driver data (δX, 𝕏) is
//!
//! ```text
//! y ← y + b(t, y, a) h + σ(t, y, a) dB + f(t, y) δX + Γ(t, y) · 𝕏,
//! Γ⁽ᵐ⁾ᵢⱼ = Σ_k ∂_{y_k} f⁽ᵐ⁾ⱼ(t, y) f⁽ᵏ⁾ᵢ(t, y) + f′⁽ᵐ⁾ᵢⱼ(t, y).
//! ```
//!
//! Index convention for the second-level contraction: 𝕏ᵢⱼ pairs its first
//! index with the inner (first-applied) vector field and its second index
//! with the differentiated outer field, so that the scalar case f(y) = y,
//! δX = x, 𝕏 = x²/2 advances y to y(1 + x + x²/2), and the linear matrix
//! flow picks up Σᵢⱼ F_j F_i M 𝕏ᵢⱼ.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{make_rng, mix};
use crate::roughpath::RoughPath;

/// Stream tag for Brownian noise used by [`NoiseBundle::sample`].
const TAG_NOISE: u64 = 0x4252_4f57_4e49_414e; // "BROWNIAN"

/// Dense 3-index tensor with shape (d0, d1, d2).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    d0: usize,
    d1: usize,
    d2: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Tensor3 { d0, d1, d2, data: vec![0.0; d0 * d1 * d2] }
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        d0: usize,
        d1: usize,
        d2: usize,
        mut f: F,
    ) -> Self {
        let mut t = Tensor3::zeros(d0, d1, d2);
        for i in 0..d0 {
            for j in 0..d1 {
                for k in 0..d2 {
                    t.data[(i * d1 + j) * d2 + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.d0, self.d1, self.d2)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.d1 + j) * self.d2 + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.d1 + j) * self.d2 + k] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }
}

pub type DriftFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type DiffusionFn =
    Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type RoughFieldFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type RoughJacobianFn = Arc<dyn Fn(f64, &DVector<f64>) -> Tensor3 + Send + Sync>;

/// Declared sup/Lipschitz bounds; diagnostics metadata, not enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffBounds {
    pub drift_sup: f64,
    pub diffusion_sup: f64,
    pub rough_sup: f64,
    pub drift_lip: f64,
    pub diffusion_lip: f64,
    pub rough_lip: f64,
}

impl CoeffBounds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.drift_sup,
            self.diffusion_sup,
            self.rough_sup,
            self.drift_lip,
            self.diffusion_lip,
            self.rough_lip,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("declared bounds must be finite and nonnegative"));
        }
        Ok(())
    }
}

impl Default for CoeffBounds {
    fn default() -> Self {
        CoeffBounds {
            drift_sup: 0.0,
            diffusion_sup: 0.0,
            rough_sup: 0.0,
            drift_lip: 0.0,
            diffusion_lip: 0.0,
            rough_lip: 0.0,
        }
    }
}

/// Coefficients (b, σ, f, Df, f′) of a controlled rough SDE
/// dY = b(t, Y, a) dt + σ(t, Y, a) dB + (f, f′)(t, Y) dX.
///
/// `df` is the state Jacobian of `f` with layout (m, j, k) = ∂f[m][j]/∂y[k];
/// `fprime` is the optional Gubinelli derivative of t ↦ f(t, ·) with layout
/// (m, i, j) and defaults to zero.
#[derive(Clone)]
pub struct CoefficientSet {
    pub dim_y: usize,
    pub dim_b: usize,
    pub dim_x: usize,
    pub dim_a: usize,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub rough: RoughFieldFn,
    pub rough_jacobian: RoughJacobianFn,
    pub rough_gubinelli: Option<RoughJacobianFn>,
    pub bounds: CoeffBounds,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim_y", &self.dim_y)
            .field("dim_b", &self.dim_b)
            .field("dim_x", &self.dim_x)
            .field("dim_a", &self.dim_a)
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl CoefficientSet {
    /// All-zero coefficient set; chain the `with_*` builders onto this.
    pub fn zero(dim_y: usize, dim_b: usize, dim_x: usize, dim_a: usize) -> Self {
        CoefficientSet {
            dim_y,
            dim_b,
            dim_x,
            dim_a,
            drift: Arc::new(move |_, _, _| DVector::zeros(dim_y)),
            diffusion: Arc::new(move |_, _, _| DMatrix::zeros(dim_y, dim_b)),
            rough: Arc::new(move |_, _| DMatrix::zeros(dim_y, dim_x)),
            rough_jacobian: Arc::new(move |_, _| Tensor3::zeros(dim_y, dim_x, dim_y)),
            rough_gubinelli: None,
            bounds: CoeffBounds::default(),
        }
    }

    pub fn with_drift(
        mut self,
        b: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift = Arc::new(b);
        self
    }

    pub fn with_diffusion(
        mut self,
        s: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Arc::new(s);
        self
    }

    /// Set f together with its state Jacobian.
    pub fn with_rough(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        df: impl Fn(f64, &DVector<f64>) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        self.rough = Arc::new(f);
        self.rough_jacobian = Arc::new(df);
        self
    }

    pub fn with_rough_gubinelli(
        mut self,
        fp: impl Fn(f64, &DVector<f64>) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        self.rough_gubinelli = Some(Arc::new(fp));
        self
    }

    pub fn with_bounds(mut self, bounds: CoeffBounds) -> Self {
        self.bounds = bounds;
        self
    }

    /// Whether σ is declared identically zero (drives quadrature degeneration).
    pub fn diffusion_is_zero(&self) -> bool {
        self.bounds.diffusion_sup == 0.0
    }
}

/// Pre-generated Brownian increments: shape (n_paths, n_steps, dim_b),
/// each increment ~ N(0, h).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    n_paths: usize,
    n_steps: usize,
    dim_b: usize,
    data: Vec<f64>,
}

impl NoiseBundle {
    /// Draw increments with per-path streams derived from `(seed, path)`, so
    /// path k is the same no matter how many paths are in the bundle.
    pub fn sample(seed: u64, n_paths: usize, n_steps: usize, dim_b: usize, h: f64) -> Self {
        let sqrt_h = h.sqrt();
        let mut data = vec![0.0; n_paths * n_steps * dim_b];
        for p in 0..n_paths {
            let mut rng = make_rng(mix(seed, TAG_NOISE, p as u64));
            let base = p * n_steps * dim_b;
            for v in data[base..base + n_steps * dim_b].iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = sqrt_h * z;
            }
        }
        NoiseBundle { n_paths, n_steps, dim_b, data }
    }

    pub fn from_increments(n_paths: usize, n_steps: usize, dim_b: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_paths * n_steps * dim_b {
            return Err(Error::invalid("noise bundle data has wrong length"));
        }
        Ok(NoiseBundle { n_paths, n_steps, dim_b, data })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let off = (path * self.n_steps + step) * self.dim_b;
        &self.data[off..off + self.dim_b]
    }
}

/// Open-loop or feedback control along a trajectory.
#[derive(Clone)]
pub enum ControlLaw {
    /// Same control point at every step.
    Constant(DVector<f64>),
    /// One control point per grid step (indexed by absolute step index).
    PerStep(Vec<DVector<f64>>),
    /// Feedback (step index, time, state) ↦ control point.
    Feedback(Arc<dyn Fn(usize, f64, &DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl ControlLaw {
    pub fn at(&self, step: usize, t: f64, y: &DVector<f64>) -> DVector<f64> {
        match self {
            ControlLaw::Constant(a) => a.clone(),
            ControlLaw::PerStep(signal) => signal[step].clone(),
            ControlLaw::Feedback(f) => f(step, t, y),
        }
    }

    fn check(&self, n_steps: usize, dim_a: usize) -> Result<()> {
        match self {
            ControlLaw::Constant(a) if a.len() != dim_a => Err(Error::mismatch(format!(
                "control point has dim {}, coefficients expect {}",
                a.len(),
                dim_a
            ))),
            ControlLaw::PerStep(sig) if sig.len() < n_steps => Err(Error::mismatch(format!(
                "per-step control supplies {} steps, need {}",
                sig.len(),
                n_steps
            ))),
            ControlLaw::PerStep(sig) if sig.iter().any(|a| a.len() != dim_a) => {
                Err(Error::mismatch("per-step control has wrong dimension"))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Debug for ControlLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlLaw::Constant(a) => write!(f, "ControlLaw::Constant({a})"),
            ControlLaw::PerStep(s) => write!(f, "ControlLaw::PerStep(len {})", s.len()),
            ControlLaw::Feedback(_) => write!(f, "ControlLaw::Feedback(..)"),
        }
    }
}

/// The rough part of a Davie step: f(t, y) δX + Γ(t, y) · 𝕏.
pub fn davie_rough_increment(
    coeffs: &CoefficientSet,
    t: f64,
    y: &DVector<f64>,
    dx: &DVector<f64>,
    xx: &DMatrix<f64>,
) -> DVector<f64> {
    let f = (coeffs.rough)(t, y);
    let df = (coeffs.rough_jacobian)(t, y);
    let fp = coeffs.rough_gubinelli.as_ref().map(|g| g(t, y));
    let (dy, dxd) = (coeffs.dim_y, coeffs.dim_x);
    let mut out = &f * dx;
    for m in 0..dy {
        let mut acc = 0.0;
        for i in 0..dxd {
            for j in 0..dxd {
                let w = xx[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let mut gamma = 0.0;
                for k in 0..dy {
                    gamma += df.get(m, j, k) * f[(k, i)];
                }
                if let Some(fp) = &fp {
                    gamma += fp.get(m, i, j);
                }
                acc += gamma * w;
            }
        }
        out[m] += acc;
    }
    out
}

/// One step of the Davie scheme. Errors when the result is non-finite.
#[allow(clippy::too_many_arguments)]
pub fn davie_step(
    y: &DVector<f64>,
    coeffs: &CoefficientSet,
    t: f64,
    a: &DVector<f64>,
    h: f64,
    db: &DVector<f64>,
    dx: &DVector<f64>,
    xx: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    debug_assert_eq!(y.len(), coeffs.dim_y);
    debug_assert_eq!(db.len(), coeffs.dim_b);
    debug_assert_eq!(dx.len(), coeffs.dim_x);
    if h <= 0.0 {
        return Err(Error::invalid("davie step needs h > 0"));
    }
    let b = (coeffs.drift)(t, y, a);
    let sigma = (coeffs.diffusion)(t, y, a);
    let mut next = y + b * h + sigma * db;
    next += davie_rough_increment(coeffs, t, y, dx, xx);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "non-finite state after davie step at t = {t}, y = {y}, a = {a}"
        )));
    }
    Ok(next)
}

/// A batch of trajectories on (a suffix of) the driver's grid.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    grid: TimeGrid,
    /// states[path][j] is the state at node j of `grid`.
    states: Vec<Vec<DVector<f64>>>,
}

impl TrajectoryBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, path: usize, node: usize) -> &DVector<f64> {
        &self.states[path][node]
    }

    pub fn path(&self, path: usize) -> &[DVector<f64>] {
        &self.states[path]
    }

    pub fn terminal(&self, path: usize) -> &DVector<f64> {
        self.states[path].last().unwrap()
    }
}

/// Solve the controlled rough SDE from grid node `start_node` to the end of
/// the driver's grid, one trajectory per noise path.
///
/// Noise increments are consumed as `noise.increment(p, k - start_node)` for
/// global step k, so a bundle shaped for the remaining steps restarts a
/// solve exactly.
pub fn solve_rsde(
    coeffs: &CoefficientSet,
    control: &ControlLaw,
    rp: &RoughPath,
    noise: &NoiseBundle,
    y0: &DVector<f64>,
    start_node: usize,
) -> Result<TrajectoryBatch> {
    let n = rp.n_steps();
    if start_node >= n {
        return Err(Error::invalid(format!(
            "start node {start_node} leaves no steps on a {n}-step grid"
        )));
    }
    if rp.dim() != coeffs.dim_x {
        return Err(Error::mismatch(format!(
            "driver dim {} vs coefficient dim_x {}",
            rp.dim(),
            coeffs.dim_x
        )));
    }
    if y0.len() != coeffs.dim_y {
        return Err(Error::mismatch("initial state has wrong dimension"));
    }
    if noise.dim_b() != coeffs.dim_b {
        return Err(Error::mismatch("noise bundle has wrong Brownian dimension"));
    }
    let steps = n - start_node;
    if noise.n_steps() < steps {
        return Err(Error::mismatch(format!(
            "noise bundle supplies {} steps, need {steps}",
            noise.n_steps()
        )));
    }
    control.check(n, coeffs.dim_a)?;
    let h = rp.grid().step();
    let grid = rp.grid().restrict(start_node, n)?;

    let states: Result<Vec<Vec<DVector<f64>>>> = (0..noise.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut path = Vec::with_capacity(steps + 1);
            path.push(y0.clone());
            let mut y = y0.clone();
            for k in start_node..n {
                let t = rp.grid().node(k);
                let db = DVector::from_column_slice(noise.increment(p, k - start_node));
                let dx = rp.increment(k, k + 1);
                let xx = rp.level2_step(k);
                let a = control.at(k, t, &y);
                y = davie_step(&y, coeffs, t, &a, h, &db, &dx, xx).map_err(|e| {
                    Error::numerical(format!("path {p}, step {k}: {e}"))
                })?;
                path.push(y.clone());
            }
            Ok(path)
        })
        .collect();

    Ok(TrajectoryBatch { grid, states: states? })
}

/// Fundamental solutions of the linear RDE dM = Σᵢ Fᵢ M dXⁱ.
///
/// `flows[k]` is P_{T←t_k} (so `flows[n]` is the identity), `theta[k]` the
/// adjoint action (P_{T←t_k})ᵀ v.
#[derive(Debug, Clone)]
pub struct LinearFlow {
    pub flows: Vec<DMatrix<f64>>,
    pub theta: Vec<DVector<f64>>,
}

impl LinearFlow {
    pub fn theta_norms(&self) -> Vec<f64> {
        self.theta.iter().map(|v| v.norm()).collect()
    }
}

/// One-step transition matrix of the matrix-valued Davie scheme:
/// G = I + Σᵢ Fᵢ δXⁱ + Σᵢⱼ F_j F_i 𝕏ⁱʲ.
fn flow_step_matrix(
    mats: &[DMatrix<f64>],
    products: &[DMatrix<f64>],
    dx: &DVector<f64>,
    xx: &DMatrix<f64>,
    dim_y: usize,
) -> DMatrix<f64> {
    let d_x = mats.len();
    let mut g = DMatrix::identity(dim_y, dim_y);
    for (i, fi) in mats.iter().enumerate() {
        g += fi * dx[i];
    }
    for i in 0..d_x {
        for j in 0..d_x {
            let w = xx[(i, j)];
            if w != 0.0 {
                g += &products[j * d_x + i] * w;
            }
        }
    }
    g
}

/// Backward fundamental flows P_{T←t_k} of dM = Σᵢ Fᵢ M dXⁱ and the adjoint
/// curves Θ(t_k) = (P_{T←t_k})ᵀ v.
pub fn linear_flow(mats: &[DMatrix<f64>], rp: &RoughPath, v: &DVector<f64>) -> Result<LinearFlow> {
    if mats.len() != rp.dim() {
        return Err(Error::mismatch(format!(
            "need one matrix per driver component: {} vs {}",
            mats.len(),
            rp.dim()
        )));
    }
    let dim_y = v.len();
    if mats.iter().any(|m| m.nrows() != dim_y || m.ncols() != dim_y) {
        return Err(Error::mismatch("flow matrices must be square and match v"));
    }
    let d_x = mats.len();
    // products[j * d_x + i] = F_j F_i
    let mut products = Vec::with_capacity(d_x * d_x);
    for j in 0..d_x {
        for i in 0..d_x {
            products.push(&mats[j] * &mats[i]);
        }
    }
    let n = rp.n_steps();
    let mut flows = vec![DMatrix::identity(dim_y, dim_y); n + 1];
    for k in (0..n).rev() {
        let dx = rp.increment(k, k + 1);
        let g = flow_step_matrix(mats, &products, &dx, rp.level2_step(k), dim_y);
        flows[k] = &flows[k + 1] * g;
    }
    let theta = flows.iter().map(|p| p.transpose() * v).collect();
    Ok(LinearFlow { flows, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_exponential_coeffs() -> CoefficientSet {
        CoefficientSet::zero(1, 1, 1, 0).with_rough(
            |_, y| DMatrix::from_vec(1, 1, vec![y[0]]),
            |_, _| Tensor3::from_fn(1, 1, 1, |_, _, _| 1.0),
        )
    }

    #[test]
    fn zero_coefficients_leave_state_alone() {
        let coeffs = CoefficientSet::zero(2, 1, 1, 0);
        let y = DVector::from_vec(vec![1.5, -0.25]);
        let next = davie_step(
            &y,
            &coeffs,
            0.0,
            &DVector::zeros(0),
            0.1,
            &DVector::from_vec(vec![0.7]),
            &DVector::from_vec(vec![0.3]),
            &DMatrix::from_vec(1, 1, vec![0.11]),
        )
        .unwrap();
        assert_eq!(next, y);
    }

    #[test]
    fn scalar_exponential_expansion_is_forced() {
        let coeffs = scalar_exponential_coeffs();
        let y = DVector::from_vec(vec![2.0]);
        let x = 0.35;
        let next = davie_step(
            &y,
            &coeffs,
            0.0,
            &DVector::zeros(0),
            1.0,
            &DVector::zeros(1),
            &DVector::from_vec(vec![x]),
            &DMatrix::from_vec(1, 1, vec![x * x / 2.0]),
        )
        .unwrap();
        assert_relative_eq!(next[0], 2.0 * (1.0 + x + x * x / 2.0), max_relative = 1e-15);
    }

    #[test]
    fn davie_step_matches_hand_coded_formula() {
        // Independent evaluation of the same expansion, written with bare
        // loops and scalar arithmetic.
        let coeffs = CoefficientSet::zero(2, 1, 2, 1)
            .with_drift(|t, y, a| {
                DVector::from_vec(vec![y[1].sin() + a[0], t + y[0] * 0.5])
            })
            .with_diffusion(|_, y, a| DMatrix::from_vec(2, 1, vec![0.3 * y[0], a[0] - y[1]]))
            .with_rough(
                |t, y| DMatrix::from_vec(2, 2, vec![y[0], y[0] * y[1], t + 1.0, y[1].cos()]),
                |t, y| {
                    let _ = t;
                    Tensor3::from_fn(2, 2, 2, |m, j, k| match (m, j, k) {
                        (0, 0, 0) => 1.0,
                        (0, 1, 0) => 0.0,
                        (1, 0, 0) => y[1],
                        (1, 0, 1) => y[0],
                        (1, 1, 1) => -y[1].sin(),
                        _ => 0.0,
                    })
                },
            )
            .with_rough_gubinelli(|_, y| Tensor3::from_fn(2, 2, 2, |m, i, j| {
                if m == 0 && i == 1 && j == 0 {
                    0.25 * y[1]
                } else {
                    0.0
                }
            }));

        let y = DVector::from_vec(vec![0.8, -0.6]);
        let a = DVector::from_vec(vec![0.2]);
        let t = 0.4;
        let h = 0.05;
        let db = DVector::from_vec(vec![0.11]);
        let dx = DVector::from_vec(vec![0.07, -0.03]);
        let xx = DMatrix::from_vec(2, 2, vec![0.002, 0.0015, -0.001, 0.0005]);

        let got = davie_step(&y, &coeffs, t, &a, h, &db, &dx, &xx).unwrap();

        // Hand-coded oracle.
        let f = [[y[0], t + 1.0], [y[0] * y[1], y[1].cos()]]; // f[m][j]
        let mut df = [[[0.0; 2]; 2]; 2]; // df[m][j][k]
        df[0][0][0] = 1.0;
        df[1][0][0] = y[1];
        df[1][0][1] = y[0];
        df[1][1][1] = -y[1].sin();
        let mut fp = [[[0.0; 2]; 2]; 2]; // fp[m][i][j]
        fp[0][1][0] = 0.25 * y[1];
        let b = [y[1].sin() + a[0], t + y[0] * 0.5];
        let sig = [0.3 * y[0], a[0] - y[1]];
        let mut expect = [0.0; 2];
        for m in 0..2 {
            expect[m] = y[m] + b[m] * h + sig[m] * db[0];
            for j in 0..2 {
                expect[m] += f[m][j] * dx[j];
            }
            for i in 0..2 {
                for j in 0..2 {
                    let mut gamma = fp[m][i][j];
                    for k in 0..2 {
                        gamma += df[m][j][k] * f[k][i];
                    }
                    expect[m] += gamma * xx[(i, j)];
                }
            }
        }
        assert_relative_eq!(got[0], expect[0], max_relative = 1e-14);
        assert_relative_eq!(got[1], expect[1], max_relative = 1e-14);
    }

    #[test]
    fn non_finite_evaluator_reports_context() {
        let coeffs = CoefficientSet::zero(1, 1, 1, 0)
            .with_drift(|_, y, _| DVector::from_vec(vec![1.0 / (y[0] - y[0])]));
        let err = davie_step(
            &DVector::from_vec(vec![1.0]),
            &coeffs,
            0.25,
            &DVector::zeros(0),
            0.1,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.25"), "missing time context: {msg}");
    }

    #[test]
    fn constant_drift_integrates_exactly() {
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let rp = RoughPath::zero(grid, 1);
        let coeffs = CoefficientSet::zero(1, 1, 1, 0)
            .with_drift(|_, _, _| DVector::from_vec(vec![0.25]));
        let noise = NoiseBundle::sample(1, 3, 16, 1, grid.step());
        let batch = solve_rsde(
            &coeffs,
            &ControlLaw::Constant(DVector::zeros(0)),
            &rp,
            &noise,
            &DVector::from_vec(vec![1.5]),
            0,
        )
        .unwrap();
        for p in 0..3 {
            assert_eq!(batch.terminal(p)[0], 1.5 + 0.25);
        }
    }

    #[test]
    fn smooth_exponential_rde_converges_fast() {
        let coeffs = scalar_exponential_coeffs();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [16usize, 32, 64, 128, 256] {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).unwrap();
            let noise = NoiseBundle::sample(0, 1, n, 1, grid.step());
            let batch = solve_rsde(
                &coeffs,
                &ControlLaw::Constant(DVector::zeros(0)),
                &rp,
                &noise,
                &DVector::from_vec(vec![1.0]),
                0,
            )
            .unwrap();
            errs.push((batch.terminal(0)[0] - 1f64.exp()).abs());
            hs.push(1.0 / n as f64);
        }
        let order = crate::acceptance::fit_order(&hs, &errs);
        assert!(order > 1.5, "smooth Davie order should be ≈ 2, got {order}");
    }

    #[test]
    fn zero_driver_reduces_to_euler_maruyama_bitwise() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let rp = RoughPath::zero(grid, 1);
        let coeffs = CoefficientSet::zero(1, 1, 1, 0)
            .with_drift(|_, y, _| DVector::from_vec(vec![-0.5 * y[0] + 0.1]))
            .with_diffusion(|_, y, _| DMatrix::from_vec(1, 1, vec![0.2 * y[0] + 0.05]))
            .with_rough(
                |_, y| DMatrix::from_vec(1, 1, vec![y[0]]),
                |_, _| Tensor3::from_fn(1, 1, 1, |_, _, _| 1.0),
            );
        let noise = NoiseBundle::sample(11, 4, 32, 1, grid.step());
        let batch = solve_rsde(
            &coeffs,
            &ControlLaw::Constant(DVector::zeros(0)),
            &rp,
            &noise,
            &DVector::from_vec(vec![1.0]),
            0,
        )
        .unwrap();
        let h = grid.step();
        for p in 0..4 {
            let mut y = DVector::from_vec(vec![1.0]);
            for k in 0..32 {
                let t = grid.node(k);
                let db = DVector::from_column_slice(noise.increment(p, k));
                let b = (coeffs.drift)(t, &y, &DVector::zeros(0));
                let s = (coeffs.diffusion)(t, &y, &DVector::zeros(0));
                // Same association order as davie_step, with a vanished
                // rough increment.
                let mut next = &y + b * h + s * &db;
                next += davie_rough_increment(&coeffs, t, &y, &DVector::zeros(1), &DMatrix::zeros(1, 1));
                y = next;
                assert_eq!(y[0], batch.state(p, k + 1)[0]);
            }
        }
    }

    #[test]
    fn restart_consistency_is_exact() {
        let grid = TimeGrid::new(0.0, 1.0, 24).unwrap();
        let rp = RoughPath::brownian(5, 1, grid, 4, crate::roughpath::BrownianMode::Ito).unwrap();
        let coeffs = CoefficientSet::zero(1, 1, 1, 0)
            .with_drift(|_, y, _| DVector::from_vec(vec![0.3 - y[0]]))
            .with_diffusion(|_, y, _| DMatrix::from_vec(1, 1, vec![0.1 + 0.05 * y[0].tanh()]))
            .with_rough(
                |_, y| DMatrix::from_vec(1, 1, vec![0.5 * y[0]]),
                |_, _| Tensor3::from_fn(1, 1, 1, |_, _, _| 0.5),
            );
        let noise = NoiseBundle::sample(77, 2, 24, 1, grid.step());
        let y0 = DVector::from_vec(vec![0.8]);
        let full = solve_rsde(&coeffs, &ControlLaw::Constant(DVector::zeros(0)), &rp, &noise, &y0, 0)
            .unwrap();
        let split = 10;
        // Residual noise: the same increments shifted to start at `split`.
        let mut resid = Vec::new();
        for p in 0..2 {
            for k in split..24 {
                resid.extend_from_slice(noise.increment(p, k));
            }
        }
        let resid = NoiseBundle::from_increments(2, 24 - split, 1, resid).unwrap();
        for p in 0..2 {
            let mid = full.state(p, split).clone();
            let tail =
                solve_rsde(&coeffs, &ControlLaw::Constant(DVector::zeros(0)), &rp, &resid, &mid, split)
                    .unwrap();
            assert_eq!(tail.terminal(p)[0], full.terminal(p)[0]);
        }
    }

    #[test]
    fn noise_bundle_is_batch_invariant() {
        let small = NoiseBundle::sample(9, 4, 10, 2, 0.1);
        let large = NoiseBundle::sample(9, 16, 10, 2, 0.1);
        for k in 0..10 {
            assert_eq!(small.increment(3, k), large.increment(3, k));
        }
    }

    #[test]
    fn linear_flow_zero_matrices_give_identity() {
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let flow = linear_flow(&[DMatrix::zeros(2, 2)], &rp, &v).unwrap();
        for k in 0..=8 {
            assert_eq!(flow.theta[k], v);
            assert_eq!(flow.flows[k], DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn linear_flow_scalar_matches_exponential() {
        let grid = TimeGrid::new(0.0, 0.7, 256).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).unwrap();
        let v = DVector::from_vec(vec![1.0]);
        let flow = linear_flow(&[DMatrix::from_vec(1, 1, vec![1.0])], &rp, &v).unwrap();
        for k in [0usize, 100, 255] {
            let expect = (0.7 - grid.node(k)).exp();
            assert_relative_eq!(flow.flows[k][(0, 0)], expect, max_relative = 1e-5);
        }
    }

    #[test]
    fn linear_flow_nilpotent_truncates_exactly() {
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).unwrap();
        let f = DMatrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 0.0]); // [[0,1],[0,0]]
        assert_eq!(f[(0, 1)], 1.0);
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let flow = linear_flow(&[f.clone()], &rp, &v).unwrap();
        for k in 0..=16 {
            let dx = 1.0 - grid.node(k);
            let expect = DMatrix::identity(2, 2) + &f * dx;
            assert!((&flow.flows[k] - expect).norm() < 1e-13, "node {k}");
        }
    }

    #[test]
    fn flow_composition_property() {
        let grid = TimeGrid::new(0.0, 1.0, 30).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| {
            DVector::from_vec(vec![t.sin(), 0.5 * t * t])
        })
        .unwrap();
        let mats = vec![
            DMatrix::from_vec(2, 2, vec![0.2, -0.1, 0.3, 0.0]),
            DMatrix::from_vec(2, 2, vec![0.0, 0.4, -0.2, 0.1]),
        ];
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let full = linear_flow(&mats, &rp, &v).unwrap();
        let mid = 12;
        let head = rp.restrict(0, mid).unwrap();
        let head_flow = linear_flow(&mats, &head, &v).unwrap();
        // P_{t_mid←0} from the head flow composed with P_{T←t_mid}.
        let composed = &full.flows[mid] * &head_flow.flows[0];
        assert!((composed - &full.flows[0]).norm() < 1e-10);
    }

    #[test]
    fn tensor3_layout_roundtrip() {
        let mut t = Tensor3::zeros(2, 3, 4);
        t.set(1, 2, 3, 7.0);
        assert_eq!(t.get(1, 2, 3), 7.0);
        assert_eq!(t.shape(), (2, 3, 4));
        assert_eq!(t.iter().filter(|v| *v != 0.0).count(), 1);
    }
}
