//! Rough integration of controlled paths.
//!
//! A controlled path is a pair (Z, Z′) on the driver's grid: Z takes values
//! in ℝᵐ and the Gubinelli derivative Z′ in ℝ^{m×d}, so that the remainder
//! R^Z_{s,t} = δZ_{s,t} − Z′_s δX_{s,t} is small. The rough integral is the
//! compensated left-point sum
//!
//! ```text
//! I_{k+1}ⁱʲ = I_kⁱʲ + Zⁱ_k δXʲ_k + (Z′_k 𝕏_k)ⁱʲ,
//! ```
//!
//! i.e. component (i, j) integrates Zⁱ against dXʲ. For a scalar driver the
//! result collapses to one column.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::roughpath::RoughPath;

/// Grid-sampled controlled path (Z, Z′) over some driver X.
#[derive(Debug, Clone)]
pub struct ControlledPath {
    /// Z(t_k) ∈ ℝᵐ, one per grid node.
    pub z: Vec<DVector<f64>>,
    /// Z′(t_k) ∈ ℝ^{m×d}, one per grid node.
    pub z_prime: Vec<DMatrix<f64>>,
}

impl ControlledPath {
    pub fn new(z: Vec<DVector<f64>>, z_prime: Vec<DMatrix<f64>>) -> Result<Self> {
        if z.is_empty() || z.len() != z_prime.len() {
            return Err(Error::invalid(
                "controlled path needs equally many Z and Z′ samples",
            ));
        }
        let m = z[0].len();
        let d = z_prime[0].ncols();
        if z.iter().any(|v| v.len() != m) {
            return Err(Error::invalid("Z samples have inconsistent dimensions"));
        }
        if z_prime.iter().any(|g| g.nrows() != m || g.ncols() != d) {
            return Err(Error::invalid("Z′ samples have inconsistent dimensions"));
        }
        Ok(ControlledPath { z, z_prime })
    }

    /// Sample Z = g(X_t), Z′ = Dg(X_t) along the driver's first level.
    pub fn from_driver_fn<G, DG>(rp: &RoughPath, g: G, dg: DG) -> Self
    where
        G: Fn(&DVector<f64>) -> DVector<f64>,
        DG: Fn(&DVector<f64>) -> DMatrix<f64>,
    {
        let z = rp.values().iter().map(&g).collect();
        let z_prime = rp.values().iter().map(&dg).collect();
        ControlledPath { z, z_prime }
    }

    /// The canonical controlled path (δX_{0,·}, Id) over its driver.
    pub fn path_increment(rp: &RoughPath) -> Self {
        let d = rp.dim();
        let x0 = rp.value(0).clone();
        let z = rp.values().iter().map(|x| x - &x0).collect();
        let z_prime = vec![DMatrix::identity(d, d); rp.values().len()];
        ControlledPath { z, z_prime }
    }

    pub fn value_dim(&self) -> usize {
        self.z[0].len()
    }

    pub fn driver_dim(&self) -> usize {
        self.z_prime[0].ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.z.len()
    }

    /// Remainder R^Z_{t_i, t_k} = δZ − Z′_{t_i} δX given the driver.
    pub fn remainder(&self, rp: &RoughPath, i: usize, k: usize) -> DVector<f64> {
        let dz = &self.z[k] - &self.z[i];
        dz - &self.z_prime[i] * rp.increment(i, k)
    }
}

fn check_compatible(cp: &ControlledPath, rp: &RoughPath) -> Result<()> {
    if cp.n_nodes() != rp.n_steps() + 1 {
        return Err(Error::mismatch(format!(
            "controlled path has {} nodes, driver grid has {}",
            cp.n_nodes(),
            rp.n_steps() + 1
        )));
    }
    if cp.driver_dim() != rp.dim() {
        return Err(Error::mismatch(format!(
            "Z′ columns ({}) must match driver dimension ({})",
            cp.driver_dim(),
            rp.dim()
        )));
    }
    Ok(())
}

/// Running compensated-Riemann-sum rough integral ∫ (Z, Z′) dX.
///
/// Returns one m×d matrix per grid node; entry (i, j) is the integral of Zⁱ
/// against dXʲ up to that node. `I[0] = 0` and the sum is additive over
/// adjacent intervals by construction.
pub fn rough_integral(cp: &ControlledPath, rp: &RoughPath) -> Result<Vec<DMatrix<f64>>> {
    check_compatible(cp, rp)?;
    let m = cp.value_dim();
    let d = rp.dim();
    let n = rp.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = DMatrix::zeros(m, d);
    out.push(acc.clone());
    for k in 0..n {
        let dx = rp.increment(k, k + 1);
        let xx = rp.level2_step(k);
        for i in 0..m {
            for j in 0..d {
                acc[(i, j)] += cp.z[k][i] * dx[j];
            }
        }
        acc += &cp.z_prime[k] * xx;
        out.push(acc.clone());
    }
    Ok(out)
}

/// Discrete controlled-path seminorms over grid pairs.
///
/// Pathwise stand-ins for the conditional-moment quantities that classify
/// stochastic controlled rough paths; diagnostic only, hence the name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormReport {
    /// sup |δZ_{s,t}| / (t−s)^κ.
    pub dz_holder: f64,
    /// sup_t |Z′_t|.
    pub z_prime_sup: f64,
    /// sup |δZ′_{s,t}| / (t−s)^κ′.
    pub dz_prime_holder: f64,
    /// sup |R^Z_{s,t}| / (t−s)^{κ+κ′}.
    pub remainder_holder: f64,
}

/// Empirical (single-realization) controlled-path seminorms.
pub fn controlled_seminorms(
    cp: &ControlledPath,
    rp: &RoughPath,
    kappa: f64,
    kappa_prime: f64,
) -> Result<SeminormReport> {
    check_compatible(cp, rp)?;
    if !(0.0..=1.0).contains(&kappa) || !(0.0..=1.0).contains(&kappa_prime) {
        return Err(Error::invalid("seminorm exponents must lie in [0, 1]"));
    }
    let n = rp.n_steps();
    let stride = crate::roughpath::pair_stride(n);
    let grid = rp.grid();
    let mut dz_sup: f64 = 0.0;
    let mut dzp_sup: f64 = 0.0;
    let mut rem_sup: f64 = 0.0;
    let mut zp_sup: f64 = 0.0;
    for k in (0..=n).step_by(stride) {
        zp_sup = zp_sup.max(cp.z_prime[k].norm());
    }
    for i in (0..n).step_by(stride) {
        for k in ((i + stride)..=n).step_by(stride) {
            let dt = grid.node(k) - grid.node(i);
            let dz = (&cp.z[k] - &cp.z[i]).norm();
            let dzp = (&cp.z_prime[k] - &cp.z_prime[i]).norm();
            let rem = cp.remainder(rp, i, k).norm();
            dz_sup = dz_sup.max(dz / dt.powf(kappa));
            dzp_sup = dzp_sup.max(dzp / dt.powf(kappa_prime));
            rem_sup = rem_sup.max(rem / dt.powf(kappa + kappa_prime));
        }
    }
    Ok(SeminormReport {
        dz_holder: dz_sup,
        z_prime_sup: zp_sup,
        dz_prime_holder: dzp_sup,
        remainder_holder: rem_sup,
    })
}
