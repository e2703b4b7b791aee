//! Randomization of the rough driver and pathwise consistency.
//!
//! Substituting a sampled Brownian rough path for the deterministic driver
//! turns the rough value function into a random field; sampling it only
//! needs the deterministic machinery plus a seeded outer loop. The second
//! half of this module verifies that solving the rough SDE along an Itô
//! Brownian lift agrees with the classical two-noise SDE: the Davie scheme
//! driven by (W, 𝕎^Itô) is compared against Euler–Maruyama driven by the
//! same W, coupled increment by increment.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{make_rng, mix};
use crate::roughpath::{BrownianMode, RoughPath, RoughPathMode};
use crate::rsde::{solve_rsde, CoefficientSet, ControlLaw, NoiseBundle};

const TAG_OUTER: u64 = 0x4f55_5445_52; // "OUTER"
const TAG_DRIVER_W: u64 = 0x5741_5645; // "WAVE"
const TAG_ITO_B: u64 = 0x4954_4f42; // "ITOB"

/// How to sample the randomized driver 𝕎(ω″).
#[derive(Debug, Clone, Copy)]
pub struct RandomizationSpec {
    pub seed: u64,
    pub n_outer: usize,
    pub grid: TimeGrid,
    pub dim: usize,
    pub refinement: usize,
    pub mode: BrownianMode,
}

/// Samples of the randomized value together with summary statistics.
#[derive(Debug, Clone)]
pub struct RandomizedValues {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

/// Draw `n_outer` Brownian rough paths and evaluate the given value
/// functional on each. Sample k is keyed by `(seed, k)`, so the output is
/// independent of batching and outer-loop scheduling.
pub fn sample_randomized_values<F>(spec: &RandomizationSpec, eval: F) -> Result<RandomizedValues>
where
    F: Fn(&RoughPath) -> Result<f64> + Sync,
{
    if spec.n_outer == 0 {
        return Err(Error::invalid("need at least one outer sample"));
    }
    let samples: Result<Vec<f64>> = (0..spec.n_outer)
        .into_par_iter()
        .map(|k| {
            let sample_seed = mix(spec.seed, TAG_OUTER, k as u64);
            let rp =
                RoughPath::brownian(sample_seed, spec.dim, spec.grid, spec.refinement, spec.mode)?;
            eval(&rp).map_err(|e| Error::numerical(format!("outer sample {k}: {e}")))
        })
        .collect();
    let samples = samples?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stderr = if samples.len() > 1 {
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(RandomizedValues { samples, mean, stderr, min, max })
}

/// Per-mesh mean terminal gap between the Davie scheme along the Itô lift
/// and Euler–Maruyama along the same Brownian path.
#[derive(Debug, Clone)]
pub struct PathwiseReport {
    pub meshes: Vec<usize>,
    pub mean_gaps: Vec<f64>,
    pub n_paths: usize,
}

/// Couple the randomized rough SDE with the classical SDE.
///
/// For every mesh n in `meshes` (each must divide the finest mesh), the same
/// fine realizations of W and B drive both solvers: the Davie scheme sees
/// the Itô rough path over W, Euler–Maruyama sees the increments of W as an
/// extra additive noise. Reported is the mean |Ȳ_T − Y_T^EM| over paths.
pub fn pathwise_consistency(
    coeffs: &CoefficientSet,
    control: &DVector<f64>,
    grid_span: (f64, f64),
    meshes: &[usize],
    n_paths: usize,
    seed: u64,
    fine_factor: usize,
    y0: &DVector<f64>,
) -> Result<PathwiseReport> {
    if meshes.is_empty() || n_paths == 0 {
        return Err(Error::invalid("need meshes and at least one path"));
    }
    let max_mesh = *meshes.iter().max().unwrap();
    let n_fine = max_mesh
        .checked_mul(fine_factor.max(1))
        .ok_or_else(|| Error::invalid("fine mesh overflow"))?;
    if meshes.iter().any(|&n| n == 0 || n_fine % n != 0) {
        return Err(Error::invalid("every mesh must divide the finest mesh"));
    }
    let (t0, t1) = grid_span;
    let law = ControlLaw::Constant(control.clone());

    let mut mean_gaps = Vec::with_capacity(meshes.len());
    for &n in meshes {
        let grid = TimeGrid::new(t0, t1, n)?;
        let refinement = n_fine / n;
        let h = grid.step();
        let h_fine = h / refinement as f64;
        let sqrt_h_fine = h_fine.sqrt();

        let gaps: Result<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                // Rough driver over W, fine stream shared across meshes.
                let w_seed = mix(seed, TAG_DRIVER_W, p as u64);
                let rough = RoughPath::brownian(w_seed, coeffs.dim_x, grid, refinement, BrownianMode::Ito)?;
                // Euler–Maruyama sees the same W but no level-2 data.
                let stripped = RoughPath::from_parts(
                    grid,
                    rough.values().to_vec(),
                    vec![nalgebra::DMatrix::zeros(coeffs.dim_x, coeffs.dim_x); n],
                    RoughPathMode::Custom,
                )?;
                // Brownian noise B, drawn fine and aggregated per mesh.
                let mut rng = make_rng(mix(seed, TAG_ITO_B, p as u64));
                let mut db = vec![0.0; n * coeffs.dim_b];
                for step_db in db.chunks_mut(coeffs.dim_b) {
                    for _ in 0..refinement {
                        for slot in step_db.iter_mut() {
                            let z: f64 = rng.sample(StandardNormal);
                            *slot += sqrt_h_fine * z;
                        }
                    }
                }
                let noise = NoiseBundle::from_increments(1, n, coeffs.dim_b, db)?;
                let davie = solve_rsde(coeffs, &law, &rough, &noise, y0, 0)?;
                let euler = solve_rsde(coeffs, &law, &stripped, &noise, y0, 0)?;
                Ok((davie.terminal(0) - euler.terminal(0)).norm())
            })
            .collect();
        let gaps = gaps?;
        mean_gaps.push(gaps.iter().sum::<f64>() / n_paths as f64);
    }
    Ok(PathwiseReport { meshes: meshes.to_vec(), mean_gaps, n_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{linear_target_value, LinearTargetSpec};
    use crate::rsde::Tensor3;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn spec(seed: u64, n_outer: usize) -> RandomizationSpec {
        RandomizationSpec {
            seed,
            n_outer,
            grid: TimeGrid::new(0.0, 1.0, 64).unwrap(),
            dim: 1,
            refinement: 1,
            mode: BrownianMode::Ito,
        }
    }

    fn linear_target_eval(
        f_scalar: f64,
        grid: TimeGrid,
    ) -> impl Fn(&RoughPath) -> crate::error::Result<f64> + Sync {
        move |rp: &RoughPath| {
            let lt = LinearTargetSpec {
                mats: vec![DMatrix::from_vec(1, 1, vec![f_scalar])],
                v: DVector::from_vec(vec![1.0]),
                horizon: grid,
            };
            Ok(linear_target_value(&lt, rp)?.value)
        }
    }

    #[test]
    fn sampling_is_deterministic_and_batch_invariant() {
        let s = spec(21, 6);
        let eval = linear_target_eval(1.0, s.grid);
        let a = sample_randomized_values(&s, &eval).unwrap();
        let b = sample_randomized_values(&s, &eval).unwrap();
        assert_eq!(a.samples, b.samples);
        let shorter = sample_randomized_values(&spec(21, 3), &eval).unwrap();
        assert_eq!(&a.samples[..3], &shorter.samples[..]);
    }

    #[test]
    fn flowless_target_ignores_the_driver() {
        let s = RandomizationSpec { mode: BrownianMode::Strato, ..spec(5, 8) };
        let eval = linear_target_eval(0.0, s.grid);
        let out = sample_randomized_values(&s, &eval).unwrap();
        // M_T = |v| T = 1 ⇒ value 0 regardless of ω″.
        assert!(out.samples.iter().all(|v| *v == out.samples[0]));
        assert_relative_eq!(out.samples[0], 0.0, epsilon = 1e-12);
        assert_eq!(out.stderr, 0.0);
    }

    #[test]
    fn randomized_target_values_stay_in_unit_interval() {
        let s = spec(33, 64);
        let eval = linear_target_eval(1.0, s.grid);
        let out = sample_randomized_values(&s, &eval).unwrap();
        assert!(out.min >= 0.0 && out.max <= 1.0);
        assert!(out.stderr > 0.0, "nondegenerate spread expected");
    }

    #[test]
    fn mean_is_stable_across_disjoint_seeds() {
        let eval = linear_target_eval(1.0, spec(0, 0).grid);
        let a = sample_randomized_values(&spec(1001, 500), &eval).unwrap();
        let b = sample_randomized_values(&spec(2002, 500), &eval).unwrap();
        let gap = (a.mean - b.mean).abs();
        let spread = 3.0 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!(gap <= spread, "means {} vs {} differ by {gap} > {spread}", a.mean, b.mean);
    }

    fn exponential_coeffs() -> CoefficientSet {
        CoefficientSet::zero(1, 1, 1, 0).with_rough(
            |_, y| DMatrix::from_vec(1, 1, vec![y[0]]),
            |_, _| Tensor3::from_fn(1, 1, 1, |_, _, _| 1.0),
        )
    }

    #[test]
    fn zero_rough_field_gives_exactly_zero_gap() {
        let coeffs = CoefficientSet::zero(1, 1, 1, 0)
            .with_drift(|_, y, _| DVector::from_vec(vec![0.5 - y[0]]))
            .with_diffusion(|_, y, _| DMatrix::from_vec(1, 1, vec![0.3 + 0.1 * y[0].tanh()]));
        let report = pathwiseconsistency_helper(&coeffs, &[8, 16, 32], 16);
        assert!(report.mean_gaps.iter().all(|g| *g == 0.0));
    }

    fn pathwiseconsistency_helper(
        coeffs: &CoefficientSet,
        meshes: &[usize],
        n_paths: usize,
    ) -> PathwiseReport {
        pathwise_consistency(
            coeffs,
            &DVector::zeros(0),
            (0.0, 1.0),
            meshes,
            n_paths,
            77,
            1,
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn exponential_gap_decays_with_the_mesh() {
        let coeffs = exponential_coeffs();
        let report = pathwiseconsistency_helper(&coeffs, &[16, 32, 64, 128], 64);
        for w in report.mean_gaps.windows(2) {
            assert!(w[1] < w[0] / 1.3, "gaps {:?} decay too slowly", report.mean_gaps);
        }
    }

    #[test]
    fn davie_tracks_the_ito_exponential() {
        // Ȳ_T should approach y0 · exp(W_T − T/2) as the mesh refines.
        let coeffs = exponential_coeffs();
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let w_seed = mix(3, TAG_DRIVER_W, 0);
        let rough = RoughPath::brownian(w_seed, 1, grid, 1, BrownianMode::Ito).unwrap();
        let noise = NoiseBundle::from_increments(1, 256, 1, vec![0.0; 256]).unwrap();
        let law = ControlLaw::Constant(DVector::zeros(0));
        let davie = solve_rsde(&coeffs, &law, &rough, &noise, &DVector::from_vec(vec![1.0]), 0)
            .unwrap();
        let w_t = rough.value(256)[0];
        let exact = (w_t - 0.5).exp();
        assert_relative_eq!(davie.terminal(0)[0], exact, max_relative = 2e-2);
    }

    #[test]
    fn generic_coefficients_gap_is_monotone() {
        let coeffs = CoefficientSet::zero(1, 1, 1, 0)
            .with_drift(|t, y, _| DVector::from_vec(vec![(y[0] + t).cos() * 0.4]))
            .with_diffusion(|_, y, _| DMatrix::from_vec(1, 1, vec![0.25 * (1.0 + y[0].sin())]))
            .with_rough(
                |_, y| DMatrix::from_vec(1, 1, vec![0.6 * y[0].tanh() + 0.2]),
                |_, y| {
                    let c = 1.0 / y[0].cosh();
                    Tensor3::from_fn(1, 1, 1, |_, _, _| 0.6 * c * c)
                },
            );
        let report = pathwiseconsistency_helper(&coeffs, &[16, 32, 64, 128], 48);
        for w in report.mean_gaps.windows(2) {
            assert!(w[1] < w[0], "gaps {:?} not monotone", report.mean_gaps);
        }
    }

    #[test]
    fn meshes_must_divide_the_finest() {
        let coeffs = exponential_coeffs();
        let err = pathwise_consistency(
            &coeffs,
            &DVector::zeros(0),
            (0.0, 1.0),
            &[12, 32],
            4,
            1,
            1,
            &DVector::from_vec(vec![1.0]),
        );
        assert!(err.is_err());
    }
}
