//! Level-2 rough paths on uniform grids.
//!
//! A rough path here is a grid-sampled path X together with one level-2
//! tensor 𝕏 per grid interval. Tensors over arbitrary node pairs are never
//! stored; they are reconstructed through Chen's relation
//!
//! ```text
//! 𝕏_{s,t} = 𝕏_{s,u} + 𝕏_{u,t} + δX_{s,u} ⊗ δX_{u,t},
//! ```
//!
//! which therefore holds exactly (up to float roundoff) for everything this
//! module hands out. The level-2 convention is 𝕏ⁱʲ_{s,t} = ∫_s^t δXⁱ_{s,r} dXʲ_r.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::make_rng;

/// How a rough path was built; decides which algebraic identities it owes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoughPathMode {
    /// Canonical lift of a piecewise-linear path: Sym 𝕏 = ½ δX ⊗ δX per step.
    GeometricLift,
    /// Brownian motion with left-point (Itô) iterated integrals.
    ItoBrownian,
    /// Brownian motion with symmetrized (Stratonovich) iterated integrals.
    StratoBrownian,
    /// Anything supplied directly through [`RoughPath::from_parts`].
    Custom,
}

/// Number of Hölder-sup start indices kept exact before deterministic
/// subsampling kicks in.
pub const MAX_EXACT_PAIR_NODES: usize = 4096;

/// Stride used when taking discrete sups over grid pairs: every
/// ⌈n/4096⌉-th node for grids beyond [`MAX_EXACT_PAIR_NODES`] steps.
pub fn pair_stride(n_steps: usize) -> usize {
    n_steps.div_ceil(MAX_EXACT_PAIR_NODES).max(1)
}

/// A level-2 rough path sampled on a uniform [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoughPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<DVector<f64>>,
    level2_step: Vec<DMatrix<f64>>,
    mode: RoughPathMode,
}

impl RoughPath {
    /// Build from raw parts. Shapes are validated; algebraic structure is the
    /// caller's business (`mode` should be `Custom` unless the identities of a
    /// named mode really hold).
    pub fn from_parts(
        grid: TimeGrid,
        values: Vec<DVector<f64>>,
        level2_step: Vec<DMatrix<f64>>,
        mode: RoughPathMode,
    ) -> Result<Self> {
        let n = grid.n_steps();
        if values.len() != n + 1 {
            return Err(Error::invalid(format!(
                "need {} path values, got {}",
                n + 1,
                values.len()
            )));
        }
        if level2_step.len() != n {
            return Err(Error::invalid(format!(
                "need {} level-2 step tensors, got {}",
                n,
                level2_step.len()
            )));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(Error::invalid("rough path dimension must be positive"));
        }
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("path values have inconsistent dimensions"));
        }
        if level2_step.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::invalid("level-2 tensors have inconsistent dimensions"));
        }
        Ok(RoughPath { grid, dim, values, level2_step, mode })
    }

    /// The zero rough path (constant zero values, zero tensors).
    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        let n = grid.n_steps();
        RoughPath {
            grid,
            dim,
            values: vec![DVector::zeros(dim); n + 1],
            level2_step: vec![DMatrix::zeros(dim, dim); n],
            mode: RoughPathMode::Custom,
        }
    }

    /// Canonical lift of a piecewise-linear path given by uniform samples.
    ///
    /// On each interval the interpolant is linear, so the iterated integral
    /// is exactly ½ δX ⊗ δX.
    pub fn lift_piecewise_linear(samples: &[(f64, DVector<f64>)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("need at least two samples to lift"));
        }
        let n = samples.len() - 1;
        let t0 = samples[0].0;
        let t1 = samples[n].0;
        if !(t1 > t0) {
            return Err(Error::invalid("sample times must be increasing"));
        }
        let grid = TimeGrid::new(t0, t1, n)?;
        let h = grid.step();
        let tol = 1e-9 * h.abs().max(1.0);
        for (k, (t, _)) in samples.iter().enumerate() {
            if (t - grid.node(k)).abs() > tol {
                return Err(Error::invalid(format!(
                    "sample times are not a uniform grid (node {k}: {t} vs {})",
                    grid.node(k)
                )));
            }
        }
        let dim = samples[0].1.len();
        let values: Vec<DVector<f64>> = samples.iter().map(|(_, v)| v.clone()).collect();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("sample values have inconsistent dimensions"));
        }
        let level2_step = values
            .windows(2)
            .map(|w| {
                let dx = &w[1] - &w[0];
                0.5 * &dx * dx.transpose()
            })
            .collect();
        Ok(RoughPath {
            grid,
            dim,
            values,
            level2_step,
            mode: RoughPathMode::GeometricLift,
        })
    }

    /// Lift `t ↦ f(t)` sampled on `grid`.
    pub fn lift_fn<F>(grid: TimeGrid, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let samples: Vec<(f64, DVector<f64>)> = grid.nodes().map(|t| (t, f(t))).collect();
        Self::lift_piecewise_linear(&samples)
    }

    /// Sample a Brownian rough path on `grid`.
    ///
    /// The underlying Brownian motion is drawn on the `refinement`-fold finer
    /// grid; coarse increments are sums of fine increments. Per coarse
    /// interval the level-2 tensor is assembled as
    ///
    /// * symmetric part: ½ (δW ⊗ δW − h·I), the exact Itô value (the bracket
    ///   of Brownian motion is h·I pathwise);
    /// * antisymmetric part (Lévy area): left-point Riemann sum of δW ⊗ dW
    ///   over the fine grid, an O(h/refinement) approximation.
    ///
    /// For `dim == 1` the area vanishes, so the whole tensor is the exact
    /// ((δW)² − h)/2. `Strato` mode adds ½ h I per interval.
    pub fn brownian(
        seed: u64,
        dim: usize,
        grid: TimeGrid,
        refinement: usize,
        mode: BrownianMode,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("brownian dimension must be positive"));
        }
        if refinement == 0 {
            return Err(Error::invalid("refinement must be at least 1"));
        }
        let n = grid.n_steps();
        let h = grid.step();
        let h_fine = h / refinement as f64;
        let sqrt_h_fine = h_fine.sqrt();
        let mut rng = make_rng(seed);

        let mut values = Vec::with_capacity(n + 1);
        values.push(DVector::zeros(dim));
        let mut level2_step = Vec::with_capacity(n);

        let mut fine = vec![DVector::zeros(dim); refinement];
        for _ in 0..n {
            for inc in fine.iter_mut() {
                for c in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    inc[c] = sqrt_h_fine * z;
                }
            }
            let mut dw = DVector::zeros(dim);
            // Left-point fine Riemann sum of δW ⊗ dW; only its antisymmetric
            // part (the Lévy area) is kept.
            let mut area: DMatrix<f64> = DMatrix::zeros(dim, dim);
            for inc in &fine {
                if dim > 1 {
                    for i in 0..dim {
                        for j in 0..dim {
                            area[(i, j)] += dw[i] * inc[j];
                        }
                    }
                }
                dw += inc;
            }
            let mut xx = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    let sym = 0.5 * (dw[i] * dw[j] - if i == j { h } else { 0.0 });
                    let anti = if dim > 1 { 0.5 * (area[(i, j)] - area[(j, i)]) } else { 0.0 };
                    xx[(i, j)] = sym + anti;
                }
            }
            if mode == BrownianMode::Strato {
                for i in 0..dim {
                    xx[(i, i)] += 0.5 * h;
                }
            }
            values.push(values.last().unwrap() + &dw);
            level2_step.push(xx);
        }

        Ok(RoughPath {
            grid,
            dim,
            values,
            level2_step,
            mode: match mode {
                BrownianMode::Ito => RoughPathMode::ItoBrownian,
                BrownianMode::Strato => RoughPathMode::StratoBrownian,
            },
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> RoughPathMode {
        self.mode
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// Per-step tensor 𝕏_{t_k, t_{k+1}}.
    pub fn level2_step(&self, k: usize) -> &DMatrix<f64> {
        &self.level2_step[k]
    }

    /// Path increment δX_{t_i, t_k}.
    pub fn increment(&self, i: usize, k: usize) -> DVector<f64> {
        &self.values[k] - &self.values[i]
    }

    /// Level-2 tensor 𝕏_{t_i, t_k} by Chen-folding the stored step tensors.
    pub fn level2(&self, i: usize, k: usize) -> Result<DMatrix<f64>> {
        if i > k || k > self.n_steps() {
            return Err(Error::invalid(format!(
                "level2 indices {i} ≤ {k} ≤ {} violated",
                self.n_steps()
            )));
        }
        let mut xx = DMatrix::zeros(self.dim, self.dim);
        let mut dx = DVector::zeros(self.dim);
        for j in i..k {
            let step_inc = &self.values[j + 1] - &self.values[j];
            xx += &self.level2_step[j];
            for p in 0..self.dim {
                for q in 0..self.dim {
                    xx[(p, q)] += dx[p] * step_inc[q];
                }
            }
            dx += step_inc;
        }
        Ok(xx)
    }

    /// Restriction to nodes `i..=k` (shares the step tensors).
    pub fn restrict(&self, i: usize, k: usize) -> Result<Self> {
        let grid = self.grid.restrict(i, k)?;
        Ok(RoughPath {
            grid,
            dim: self.dim,
            values: self.values[i..=k].to_vec(),
            level2_step: self.level2_step[i..k].to_vec(),
            mode: self.mode,
        })
    }

    /// Worst per-step deviation of Sym 𝕏 from ½ δX ⊗ δX (Frobenius norm).
    pub fn geometricity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, xx) in self.level2_step.iter().enumerate() {
            let dx = &self.values[k + 1] - &self.values[k];
            let mut acc = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let d = 0.5 * (xx[(i, j)] + xx[(j, i)]) - 0.5 * dx[i] * dx[j];
                    acc += d * d;
                }
            }
            worst = worst.max(acc.sqrt());
        }
        worst
    }

    /// Homogeneous rough path norm ⦀X⦀_α = |δX|_α ∨ √(|𝕏|_{2α}), with the
    /// discrete sups taken over grid pairs (subsampled beyond
    /// [`MAX_EXACT_PAIR_NODES`] steps; see [`pair_stride`]).
    pub fn homogeneous_norm(&self, alpha: f64) -> f64 {
        let mut dx_sup: f64 = 0.0;
        let mut xx_sup: f64 = 0.0;
        self.sweep_pairs(|dt, dx_norm, xx_norm| {
            dx_sup = dx_sup.max(dx_norm / dt.powf(alpha));
            xx_sup = xx_sup.max(xx_norm / dt.powf(2.0 * alpha));
        });
        dx_sup.max(xx_sup.sqrt())
    }

    /// Visits grid pairs (i, k), i < k, handing `(t_k - t_i, |δX|, |𝕏|)` to
    /// the callback. Start/end indices are strided per [`pair_stride`]; the
    /// level-2 tensor is accumulated incrementally so the sweep is
    /// O(n²/stride) rather than O(n³).
    fn sweep_pairs<F: FnMut(f64, f64, f64)>(&self, mut visit: F) {
        let n = self.n_steps();
        let stride = pair_stride(n);
        let mut starts: Vec<usize> = (0..n).step_by(stride).collect();
        if *starts.last().unwrap() != n - 1 {
            starts.push(n - 1);
        }
        let d = self.dim;
        let mut xx = DMatrix::zeros(d, d);
        let mut dx = DVector::zeros(d);
        for &i in &starts {
            xx.fill(0.0);
            dx.fill(0.0);
            let mut j = i;
            while j < n {
                let step_inc = &self.values[j + 1] - &self.values[j];
                for p in 0..d {
                    for q in 0..d {
                        xx[(p, q)] += dx[p] * step_inc[q];
                    }
                }
                xx += &self.level2_step[j];
                dx += step_inc;
                j += 1;
                let at_probe = (j - i) % stride == 0 || j == n;
                if at_probe {
                    let dt = self.grid.node(j) - self.grid.node(i);
                    visit(dt, dx.norm(), xx_frobenius(&xx));
                }
            }
        }
    }
}

/// Itô vs. Stratonovich enhancement of Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrownianMode {
    Ito,
    Strato,
}

fn xx_frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inhomogeneous rough path distance ρ_α = |δX − δX̄|_α + |𝕏 − 𝕏̄|_{2α}
/// with discrete sups over (strided) grid pairs.
///
/// Both level-2 families are Chen-folded side by side: the difference of two
/// Chen-consistent families is not itself Chen-additive (the cross terms
/// δX ⊗ δX and δX̄ ⊗ δX̄ differ), so a single-path sweep would be wrong here.
pub fn rho_alpha(a: &RoughPath, b: &RoughPath, alpha: f64) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::mismatch("rho_alpha requires a shared time grid"));
    }
    if a.dim != b.dim {
        return Err(Error::mismatch("rho_alpha requires equal dimensions"));
    }
    let n = a.n_steps();
    let d = a.dim;
    let stride = pair_stride(n);
    let mut starts: Vec<usize> = (0..n).step_by(stride).collect();
    if *starts.last().unwrap() != n - 1 {
        starts.push(n - 1);
    }
    let mut dx_sup: f64 = 0.0;
    let mut xx_sup: f64 = 0.0;
    let mut xx_a = DMatrix::zeros(d, d);
    let mut xx_b = DMatrix::zeros(d, d);
    let mut dx_a = DVector::zeros(d);
    let mut dx_b = DVector::zeros(d);
    for &i in &starts {
        xx_a.fill(0.0);
        xx_b.fill(0.0);
        dx_a.fill(0.0);
        dx_b.fill(0.0);
        let mut j = i;
        while j < n {
            let inc_a = &a.values[j + 1] - &a.values[j];
            let inc_b = &b.values[j + 1] - &b.values[j];
            for p in 0..d {
                for q in 0..d {
                    xx_a[(p, q)] += dx_a[p] * inc_a[q];
                    xx_b[(p, q)] += dx_b[p] * inc_b[q];
                }
            }
            xx_a += &a.level2_step[j];
            xx_b += &b.level2_step[j];
            dx_a += inc_a;
            dx_b += inc_b;
            j += 1;
            if (j - i) % stride == 0 || j == n {
                let dt = a.grid.node(j) - a.grid.node(i);
                let dx_diff = (&dx_a - &dx_b).norm();
                let xx_diff = xx_frobenius(&(&xx_a - &xx_b));
                dx_sup = dx_sup.max(dx_diff / dt.powf(alpha));
                xx_sup = xx_sup.max(xx_diff / dt.powf(2.0 * alpha));
            }
        }
    }
    Ok(dx_sup + xx_sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lift_scalar_linear(n: usize) -> RoughPath {
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t])).unwrap()
    }

    /// Left-point Riemann–Stieltjes sum of ∫ (Xⁱ_r − Xⁱ_0) dXʲ_r on a fine grid,
    /// independent of the rough path machinery.
    fn riemann_stieltjes_oracle<F>(f: F, dim: usize, n_fine: usize) -> DMatrix<f64>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let x0 = f(0.0);
        let mut acc = DMatrix::zeros(dim, dim);
        let mut prev = x0.clone();
        for k in 0..n_fine {
            let t_next = (k + 1) as f64 / n_fine as f64;
            let next = f(t_next);
            for i in 0..dim {
                for j in 0..dim {
                    acc[(i, j)] += (prev[i] - x0[i]) * (next[j] - prev[j]);
                }
            }
            prev = next;
        }
        acc
    }

    #[test]
    fn scalar_linear_level2_is_half() {
        let rp = lift_scalar_linear(4);
        let xx = rp.level2(0, 4).unwrap();
        assert_relative_eq!(xx[(0, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn parabola_level2_matches_stieltjes_oracle() {
        // X = (t, t²): ∫ δX¹ dX² = 2/3, ∫ δX² dX¹ = 1/3, sum = δX¹ δX² = 1.
        let f = |t: f64| DVector::from_vec(vec![t, t * t]);
        let grid = TimeGrid::new(0.0, 1.0, 512).unwrap();
        let rp = RoughPath::lift_fn(grid, f).unwrap();
        let xx = rp.level2(0, 512).unwrap();
        let oracle = riemann_stieltjes_oracle(f, 2, 1 << 14);
        assert_relative_eq!(xx[(0, 1)], oracle[(0, 1)], epsilon = 2e-4);
        assert_relative_eq!(xx[(1, 0)], oracle[(1, 0)], epsilon = 2e-4);
        assert_relative_eq!(xx[(0, 1)], 2.0 / 3.0, epsilon = 1e-5);
        assert_relative_eq!(xx[(1, 0)], 1.0 / 3.0, epsilon = 1e-5);
        // The pair sum is forced by integration by parts, exactly.
        let dx = rp.increment(0, 512);
        assert_relative_eq!(xx[(0, 1)] + xx[(1, 0)], dx[0] * dx[1], max_relative = 1e-13);
    }

    #[test]
    fn constant_path_is_zero() {
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let rp = RoughPath::lift_fn(grid, |_| DVector::from_vec(vec![3.5, -1.0])).unwrap();
        assert_eq!(rp.increment(0, 8).norm(), 0.0);
        assert_eq!(rp.level2(0, 8).unwrap().norm(), 0.0);
        assert_eq!(rp.homogeneous_norm(0.4), 0.0);
    }

    #[test]
    fn rejects_bad_sample_times() {
        let mk = |ts: &[f64]| {
            let samples: Vec<(f64, DVector<f64>)> =
                ts.iter().map(|&t| (t, DVector::from_vec(vec![t]))).collect();
            RoughPath::lift_piecewise_linear(&samples)
        };
        assert!(mk(&[0.0, 0.5, 1.5]).is_err()); // non-uniform
        assert!(mk(&[0.0, -0.5, -1.0]).is_err()); // decreasing
        assert!(mk(&[0.0]).is_err()); // too short
        assert!(mk(&[0.0, 0.25, 0.5, 0.75, 1.0]).is_ok());
    }

    #[test]
    fn level2_same_index_is_zero_and_bounds_checked() {
        let rp = lift_scalar_linear(8);
        assert_eq!(rp.level2(3, 3).unwrap().norm(), 0.0);
        assert!(rp.level2(2, 1).is_err());
        assert!(rp.level2(0, 9).is_err());
    }

    #[test]
    fn chen_identity_holds_on_lifts() {
        let grid = TimeGrid::new(0.0, 2.0, 64).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| {
            DVector::from_vec(vec![t.sin(), (2.0 * t).cos(), t * t])
        })
        .unwrap();
        for &(i, j, k) in &[(0usize, 5usize, 64usize), (3, 17, 40), (10, 11, 12)] {
            let lhs = rp.level2(i, k).unwrap();
            let dxa = rp.increment(i, j);
            let dxb = rp.increment(j, k);
            let rhs = rp.level2(i, j).unwrap() + rp.level2(j, k).unwrap() + dxa * dxb.transpose();
            let scale = lhs.norm().max(1.0);
            assert!((lhs - rhs).norm() / scale < 1e-12);
        }
    }

    #[test]
    fn geometric_lift_has_no_geometricity_defect() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t.exp(), t.sin()])).unwrap();
        assert!(rp.geometricity_defect() <= 1e-12);
    }

    #[test]
    fn ito_vs_strato_gap_is_half_h_per_interval() {
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let ito = RoughPath::brownian(42, 1, grid, 4, BrownianMode::Ito).unwrap();
        let strato = RoughPath::brownian(42, 1, grid, 4, BrownianMode::Strato).unwrap();
        let h = grid.step();
        for k in 0..16 {
            let gap = strato.level2_step(k)[(0, 0)] - ito.level2_step(k)[(0, 0)];
            assert_eq!(gap, 0.5 * h);
            // Scalar Stratonovich tensor is the geometric (δW)²/2 exactly.
            let dw = strato.increment(k, k + 1)[0];
            assert_relative_eq!(strato.level2_step(k)[(0, 0)], 0.5 * dw * dw, max_relative = 1e-12);
        }
        // Itô symmetric defect per interval is h/2 in d = 1.
        assert_relative_eq!(ito.geometricity_defect(), 0.5 * h, max_relative = 1e-12);
    }

    #[test]
    fn multid_strato_is_geometric_and_ito_is_not() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let strato = RoughPath::brownian(7, 3, grid, 16, BrownianMode::Strato).unwrap();
        assert!(strato.geometricity_defect() <= 1e-12);
        let ito = RoughPath::brownian(7, 3, grid, 16, BrownianMode::Ito).unwrap();
        assert!(ito.geometricity_defect() > 1e-4);
    }

    #[test]
    fn brownian_same_seed_is_bit_identical() {
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let a = RoughPath::brownian(9, 2, grid, 8, BrownianMode::Ito).unwrap();
        let b = RoughPath::brownian(9, 2, grid, 8, BrownianMode::Ito).unwrap();
        assert_eq!(a, b);
        let c = RoughPath::brownian(10, 2, grid, 8, BrownianMode::Ito).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn brownian_coarse_increments_refine_consistently() {
        // Same seed, same fine grid size: n·R constant ⇒ identical fine path,
        // so coarse values must agree at shared nodes.
        let coarse = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let fine = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let a = RoughPath::brownian(3, 2, coarse, 8, BrownianMode::Ito).unwrap();
        let b = RoughPath::brownian(3, 2, fine, 2, BrownianMode::Ito).unwrap();
        for k in 0..=8 {
            let va = a.value(k);
            let vb = b.value(4 * k);
            assert!((va - vb).norm() < 1e-12, "node {k}: {va} vs {vb}");
        }
    }

    #[test]
    fn homogeneous_norm_linear_path_alpha_half() {
        let rp = lift_scalar_linear(16);
        // |δX|_{1/2} peaks at the full interval: 1 / 1^{1/2} = 1;
        // the level-2 term is √(sup 𝕏/(t−s)) = √(1/2) < 1.
        assert_relative_eq!(rp.homogeneous_norm(0.5), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn homogeneous_norm_translation_invariant() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let a = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t.sin(), t.cos()])).unwrap();
        let b = RoughPath::lift_fn(grid, |t| {
            DVector::from_vec(vec![t.sin() + 5.0, t.cos() - 2.0])
        })
        .unwrap();
        assert_relative_eq!(
            a.homogeneous_norm(0.45),
            b.homogeneous_norm(0.45),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rho_alpha_zero_on_self_and_symmetric() {
        let grid = TimeGrid::new(0.0, 1.0, 24).unwrap();
        let a = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t, t.sin()])).unwrap();
        let b = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t * t, t.cos()])).unwrap();
        assert_eq!(rho_alpha(&a, &a, 0.4).unwrap(), 0.0);
        let ab = rho_alpha(&a, &b, 0.4).unwrap();
        let ba = rho_alpha(&b, &a, 0.4).unwrap();
        assert_relative_eq!(ab, ba, max_relative = 1e-12);
        assert!(ab > 0.0);
    }

    #[test]
    fn rho_alpha_rejects_mismatched_grids() {
        let a = lift_scalar_linear(8);
        let b = lift_scalar_linear(16);
        assert!(rho_alpha(&a, &b, 0.4).is_err());
    }

    #[test]
    fn piecewise_linear_refinement_preserves_level2() {
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let f = |t: f64| DVector::from_vec(vec![t.sin(), t.exp()]);
        let coarse = RoughPath::lift_fn(grid, f).unwrap();
        // Doubled grid sampling the *interpolant* of the coarse samples.
        let coarse_vals: Vec<DVector<f64>> = grid.nodes().map(f).collect();
        let fine_grid = grid.refine(2).unwrap();
        let interp = |t: f64| -> DVector<f64> {
            let s = ((t - grid.start()) / grid.step()).clamp(0.0, 15.9999);
            let k = s.floor() as usize;
            let w = s - k as f64;
            (1.0 - w) * &coarse_vals[k] + w * &coarse_vals[k + 1]
        };
        let fine = RoughPath::lift_fn(fine_grid, interp).unwrap();
        let xa = coarse.level2(0, 16).unwrap();
        let xb = fine.level2(0, 32).unwrap();
        assert!((xa - xb).norm() < 1e-12);
    }

    #[test]
    fn restriction_matches_parent_tensors() {
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let rp = RoughPath::lift_fn(grid, |t| DVector::from_vec(vec![t * t, t])).unwrap();
        let sub = rp.restrict(5, 15).unwrap();
        assert_eq!(sub.n_steps(), 10);
        let direct = rp.level2(5, 15).unwrap();
        let via_sub = sub.level2(0, 10).unwrap();
        assert!((direct - via_sub).norm() < 1e-14);
    }

    #[test]
    fn pair_stride_caps_large_grids() {
        assert_eq!(pair_stride(100), 1);
        assert_eq!(pair_stride(4096), 1);
        assert_eq!(pair_stride(4097), 2);
        assert_eq!(pair_stride(10000), 3);
    }
}
