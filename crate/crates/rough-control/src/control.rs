//! Rough value functions by backward dynamic programming.
//!
//! For a fixed driver X the value function of the controlled rough SDE
//! satisfies a one-step programming principle over the solver grid:
//!
//! ```text
//! V(t_k, y) = opt_a { ℓ(t_k, y, a) h + E[ V(t_{k+1}, davie_step(y, a, dB, δX_k, 𝕏_k)) ] }.
//! ```
//!
//! The expectation over dB is tensorized Gauss–Hermite quadrature,
//! off-lattice values come from clamped multilinear interpolation, and
//! maximization is handled by negating the costs, so min- and max-sense
//! solves share every float operation.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hermite::TensorGaussHermite;
use crate::lattice::StateLattice;
use crate::roughpath::{rho_alpha, RoughPath};
use crate::rsde::{
    davie_rough_increment, solve_rsde, CoefficientSet, ControlLaw, NoiseBundle, Tensor3,
};

pub type TerminalCostFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;

/// Whether the objective is minimized or maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// Largest control dimension accepted for box discretizations.
pub const MAX_CONTROL_DIM: usize = 2;

/// A finite-control stochastic control problem over a rough driver.
#[derive(Clone)]
pub struct ControlProblem {
    pub coeffs: CoefficientSet,
    pub terminal_cost: TerminalCostFn,
    pub running_cost: RunningCostFn,
    pub controls: Vec<DVector<f64>>,
    pub horizon: TimeGrid,
    pub sense: Sense,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("coeffs", &self.coeffs)
            .field("controls", &self.controls.len())
            .field("horizon", &self.horizon)
            .field("sense", &self.sense)
            .finish()
    }
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::invalid("control set must be nonempty"));
        }
        if self.controls.iter().any(|a| a.len() != self.coeffs.dim_a) {
            return Err(Error::mismatch(format!(
                "control points must have dimension {}",
                self.coeffs.dim_a
            )));
        }
        self.coeffs.bounds.validate()
    }

    /// Uniform discretization of the box `lo ≤ a ≤ hi` with `counts` nodes
    /// per dimension (control dimension capped at [`MAX_CONTROL_DIM`]).
    pub fn control_box(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Vec<DVector<f64>>> {
        let d = lo.len();
        if d == 0 || d > MAX_CONTROL_DIM {
            return Err(Error::invalid(format!(
                "control boxes support 1..={MAX_CONTROL_DIM} dimensions, got {d}"
            )));
        }
        if hi.len() != d || counts.len() != d {
            return Err(Error::invalid("control box specs must have equal lengths"));
        }
        if counts.iter().any(|&c| c < 1) || lo.iter().zip(hi).any(|(l, h)| l > h) {
            return Err(Error::invalid("control box needs lo ≤ hi and counts ≥ 1"));
        }
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let mut a = DVector::zeros(d);
            for c in 0..d {
                a[c] = if counts[c] == 1 {
                    0.5 * (lo[c] + hi[c])
                } else {
                    lo[c] + idx[c] as f64 * (hi[c] - lo[c]) / (counts[c] - 1) as f64
                };
            }
            out.push(a);
            for c in (0..d).rev() {
                idx[c] += 1;
                if idx[c] < counts[c] {
                    break;
                }
                idx[c] = 0;
            }
        }
        Ok(out)
    }

    /// State-augmented version with the running cost moved into an extra
    /// coordinate z (dz = ℓ dt) and terminal cost g(y) + z.
    pub fn augmented(&self) -> ControlProblem {
        let dy = self.coeffs.dim_y;
        let (db, dx) = (self.coeffs.dim_b, self.coeffs.dim_x);
        fn head(y: &DVector<f64>, dy: usize) -> DVector<f64> {
            DVector::from_column_slice(&y.as_slice()[..dy])
        }

        let mut coeffs = CoefficientSet::zero(dy + 1, db, dx, self.coeffs.dim_a);
        coeffs.bounds = self.coeffs.bounds;
        {
            let inner = self.coeffs.clone();
            let run = self.running_cost.clone();
            coeffs.drift = Arc::new(move |t, y, a| {
                let ys = head(y, dy);
                let b = (inner.drift)(t, &ys, a);
                let mut out = DVector::zeros(dy + 1);
                out.rows_mut(0, dy).copy_from(&b);
                out[dy] = run(t, &ys, a);
                out
            });
        }
        {
            let inner = self.coeffs.clone();
            coeffs.diffusion = Arc::new(move |t, y, a| {
                let s = (inner.diffusion)(t, &head(y, dy), a);
                let mut out = nalgebra::DMatrix::zeros(dy + 1, db);
                out.rows_mut(0, dy).copy_from(&s);
                out
            });
        }
        {
            let inner = self.coeffs.clone();
            coeffs.rough = Arc::new(move |t, y| {
                let f = (inner.rough)(t, &head(y, dy));
                let mut out = nalgebra::DMatrix::zeros(dy + 1, dx);
                out.rows_mut(0, dy).copy_from(&f);
                out
            });
        }
        {
            let inner = self.coeffs.clone();
            coeffs.rough_jacobian = Arc::new(move |t, y| {
                let df = (inner.rough_jacobian)(t, &head(y, dy));
                Tensor3::from_fn(dy + 1, dx, dy + 1, |m, j, k| {
                    if m < dy && k < dy {
                        df.get(m, j, k)
                    } else {
                        0.0
                    }
                })
            });
        }
        if let Some(fp) = &self.coeffs.rough_gubinelli {
            let fp = fp.clone();
            coeffs.rough_gubinelli = Some(Arc::new(move |t, y| {
                let inner = fp(t, &head(y, dy));
                Tensor3::from_fn(dy + 1, dx, dx, |m, i, j| {
                    if m < dy {
                        inner.get(m, i, j)
                    } else {
                        0.0
                    }
                })
            }));
        }

        let g = self.terminal_cost.clone();
        ControlProblem {
            coeffs,
            terminal_cost: Arc::new(move |y| g(&head(y, dy)) + y[dy]),
            running_cost: Arc::new(|_, _, _| 0.0),
            controls: self.controls.clone(),
            horizon: self.horizon,
            sense: self.sense,
        }
    }
}

/// The dynamic-programming tableau: values on every time slice, the argmin
/// control index per (step, node), and boundary-clamp diagnostics.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    grid: TimeGrid,
    lattice: StateLattice,
    controls: Vec<DVector<f64>>,
    /// values[k][node] for k = 0..=n.
    values: Vec<Vec<f64>>,
    /// policy[k][node] for k = 0..n−1.
    policy: Vec<Vec<u32>>,
    /// Number of clamped off-lattice evaluations during the sweep.
    boundary_hits: u64,
}

impl ValueGrid {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn lattice(&self) -> &StateLattice {
        &self.lattice
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn policy_slice(&self, k: usize) -> &[u32] {
        &self.policy[k]
    }

    pub fn boundary_hits(&self) -> u64 {
        self.boundary_hits
    }

    pub fn controls(&self) -> &[DVector<f64>] {
        &self.controls
    }

    /// Interpolated value at time node `k`.
    pub fn value_at(&self, k: usize, point: &[f64]) -> f64 {
        self.lattice.interpolate(&self.values[k], point).0
    }

    /// Interpolated value on the initial slice.
    pub fn initial_value(&self, point: &[f64]) -> f64 {
        self.value_at(0, point)
    }

    /// Feedback law reading the argmin control at the nearest lattice node.
    ///
    /// Step indices are relative to this value grid's horizon.
    pub fn feedback_law(&self) -> ControlLaw {
        let lattice = self.lattice.clone();
        let policy = self.policy.clone();
        let controls = self.controls.clone();
        ControlLaw::Feedback(Arc::new(move |step, _t, y| {
            let node = lattice.nearest(y.as_slice());
            controls[policy[step][node] as usize].clone()
        }))
    }
}

/// Backward dynamic programming over `rp`'s grid.
///
/// `quad_nodes` Gauss–Hermite points per Brownian dimension approximate the
/// conditional expectation; a declared-zero diffusion degenerates to one
/// point. Ties in the argmin go to the lowest control index.
pub fn dpp_solve(
    problem: &ControlProblem,
    rp: &RoughPath,
    lattice: &StateLattice,
    quad_nodes: usize,
) -> Result<ValueGrid> {
    problem.validate()?;
    if problem.horizon != *rp.grid() {
        return Err(Error::mismatch("problem horizon must equal the driver grid"));
    }
    if problem.coeffs.dim_x != rp.dim() {
        return Err(Error::mismatch("driver dimension does not match coefficients"));
    }
    if problem.coeffs.dim_y != lattice.dim() {
        return Err(Error::mismatch(format!(
            "lattice dimension {} does not match state dimension {}",
            lattice.dim(),
            problem.coeffs.dim_y
        )));
    }
    if quad_nodes == 0 {
        return Err(Error::invalid("quad_nodes must be at least 1"));
    }
    let negate = problem.sense == Sense::Max;
    let coeffs = &problem.coeffs;
    let dim_y = coeffs.dim_y;
    let n = rp.n_steps();
    let h = rp.grid().step();
    let quad = if coeffs.diffusion_is_zero() { 1 } else { quad_nodes };
    let rule = TensorGaussHermite::new(coeffs.dim_b.max(1), quad)?;
    let sqrt_h = h.sqrt();
    let deterministic = quad == 1;

    let n_nodes = lattice.n_nodes();
    let coords = lattice.all_coords();
    let node_vecs: Vec<DVector<f64>> = (0..n_nodes)
        .map(|k| DVector::from_column_slice(&coords[k * dim_y..(k + 1) * dim_y]))
        .collect();

    // Terminal slice: exact cost at the nodes.
    let mut terminal = Vec::with_capacity(n_nodes);
    for y in &node_vecs {
        let g = (problem.terminal_cost)(y);
        if !g.is_finite() {
            return Err(Error::numerical(format!("terminal cost not finite at y = {y}")));
        }
        terminal.push(if negate { -g } else { g });
    }

    let mut values = vec![Vec::new(); n + 1];
    let mut policy = vec![Vec::new(); n];
    values[n] = terminal;
    let mut boundary_hits = 0u64;

    for k in (0..n).rev() {
        let t = rp.grid().node(k);
        let dx = rp.increment(k, k + 1);
        let xx = rp.level2_step(k);
        let next = &values[k + 1];

        let per_node: Result<Vec<(f64, u32, u64)>> = node_vecs
            .par_iter()
            .enumerate()
            .with_min_len(512)
            .map(|(node, y)| {
                let mut clamped = 0u64;
                let rough = davie_rough_increment(coeffs, t, y, &dx, xx);
                let mut base = vec![0.0; dim_y];
                let mut point = vec![0.0; dim_y];
                let mut best = f64::INFINITY;
                let mut best_idx = 0u32;
                for (ai, a) in problem.controls.iter().enumerate() {
                    let b = (coeffs.drift)(t, y, a);
                    for m in 0..dim_y {
                        base[m] = y[m] + rough[m] + b[m] * h;
                    }
                    let expected = if deterministic {
                        let (v, cl) = lattice.interpolate(next, &base);
                        clamped += u64::from(cl);
                        v
                    } else {
                        let sigma = (coeffs.diffusion)(t, y, a);
                        let mut acc = 0.0;
                        for q in 0..rule.n_points() {
                            let z = rule.point(q);
                            for m in 0..dim_y {
                                let mut shift = 0.0;
                                for c in 0..coeffs.dim_b {
                                    shift += sigma[(m, c)] * (sqrt_h * z[c]);
                                }
                                point[m] = base[m] + shift;
                            }
                            let (v, cl) = lattice.interpolate(next, &point);
                            clamped += u64::from(cl);
                            acc += rule.weight(q) * v;
                        }
                        acc
                    };
                    let run = (problem.running_cost)(t, y, a);
                    let run = if negate { -run } else { run };
                    let total = run * h + expected;
                    if !total.is_finite() {
                        return Err(Error::numerical(format!(
                            "non-finite cost at t = {t}, node {node}, control {ai}"
                        )));
                    }
                    if total < best {
                        best = total;
                        best_idx = ai as u32;
                    }
                }
                Ok((best, best_idx, clamped))
            })
            .collect();

        let per_node = per_node?;
        let mut slice_values = Vec::with_capacity(n_nodes);
        let mut slice_policy = Vec::with_capacity(n_nodes);
        for (v, p, cl) in per_node {
            slice_values.push(v);
            slice_policy.push(p);
            boundary_hits += cl;
        }
        values[k] = slice_values;
        policy[k] = slice_policy;
    }

    if negate {
        for slice in values.iter_mut() {
            for v in slice.iter_mut() {
                *v = -*v;
            }
        }
    }

    Ok(ValueGrid {
        grid: *rp.grid(),
        lattice: lattice.clone(),
        controls: problem.controls.clone(),
        values,
        policy,
        boundary_hits,
    })
}

/// Monte Carlo estimate (mean, standard error) of the cost of a control law.
pub fn policy_value_mc(
    problem: &ControlProblem,
    law: &ControlLaw,
    rp: &RoughPath,
    y0: &DVector<f64>,
    start_node: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    problem.validate()?;
    if n_paths == 0 {
        return Err(Error::invalid("need at least one sample path"));
    }
    let n = rp.n_steps();
    let h = rp.grid().step();
    let noise = NoiseBundle::sample(seed, n_paths, n - start_node, problem.coeffs.dim_b, h);
    let batch = solve_rsde(&problem.coeffs, law, rp, &noise, y0, start_node)?;
    let mut costs = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut cost = 0.0;
        for k in start_node..n {
            let t = rp.grid().node(k);
            let y = batch.state(p, k - start_node);
            let a = law.at(k, t, y);
            cost += (problem.running_cost)(t, y, &a) * h;
        }
        cost += (problem.terminal_cost)(batch.terminal(p));
        if !cost.is_finite() {
            return Err(Error::numerical(format!("non-finite cost on path {p}")));
        }
        costs.push(cost);
    }
    let mean = costs.iter().sum::<f64>() / n_paths as f64;
    let stderr = if n_paths > 1 {
        let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
            / (n_paths - 1) as f64;
        (var / n_paths as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// Dynamic-programming composition defect: solve the tail problem on
/// `[t_j, T]`, feed its time-`t_j` slice to a head problem on `[0, t_j]` as
/// terminal cost, and report the max deviation from the single-pass value on
/// the initial slice.
pub fn dpp_consistency(
    problem: &ControlProblem,
    rp: &RoughPath,
    lattice: &StateLattice,
    quad_nodes: usize,
    split: usize,
) -> Result<f64> {
    let n = rp.n_steps();
    if split == 0 || split >= n {
        return Err(Error::invalid(format!("split index must satisfy 0 < j < {n}")));
    }
    let single = dpp_solve(problem, rp, lattice, quad_nodes)?;

    let tail_rp = rp.restrict(split, n)?;
    let mut tail_problem = problem.clone();
    tail_problem.horizon = *tail_rp.grid();
    let tail = dpp_solve(&tail_problem, &tail_rp, lattice, quad_nodes)?;

    let head_rp = rp.restrict(0, split)?;
    let mut head_problem = problem.clone();
    head_problem.horizon = *head_rp.grid();
    let stitched: Arc<Vec<f64>> = Arc::new(tail.slice(0).to_vec());
    let stitched_lattice = lattice.clone();
    head_problem.terminal_cost = Arc::new(move |y| {
        stitched_lattice.interpolate(&stitched, y.as_slice()).0
    });
    let head = dpp_solve(&head_problem, &head_rp, lattice, quad_nodes)?;

    let defect = head
        .slice(0)
        .iter()
        .zip(single.slice(0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(defect)
}

/// Output of [`value_continuity_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationReport {
    /// ρ_α distance between the two drivers.
    pub rho: f64,
    /// sup over lattice nodes of |V − V′| on the initial slice.
    pub sup_dv: f64,
    /// sup_dv / rho, reported as 0 when both vanish.
    pub ratio: f64,
}

/// Solve the same problem under two drivers and compare initial-slice values.
pub fn value_continuity_probe(
    problem: &ControlProblem,
    rp: &RoughPath,
    rp_perturbed: &RoughPath,
    lattice: &StateLattice,
    quad_nodes: usize,
    alpha: f64,
) -> Result<PerturbationReport> {
    let rho = rho_alpha(rp, rp_perturbed, alpha)?;
    let base = dpp_solve(problem, rp, lattice, quad_nodes)?;
    let mut perturbed_problem = problem.clone();
    perturbed_problem.horizon = *rp_perturbed.grid();
    let perturbed = dpp_solve(&perturbed_problem, rp_perturbed, lattice, quad_nodes)?;
    let sup_dv = base
        .slice(0)
        .iter()
        .zip(perturbed.slice(0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let ratio = if rho > 0.0 { sup_dv / rho } else { 0.0 };
    Ok(PerturbationReport { rho, sup_dv, ratio })
}
