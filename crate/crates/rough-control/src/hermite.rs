//! Gauss–Hermite quadrature for Gaussian conditional expectations.
//!
//! Nodes and weights come from the Golub–Welsch algorithm: the Hermite
//! three-term recurrence yields a symmetric tridiagonal companion matrix with
//! zeros on the diagonal and √(k/2) on the off-diagonal; its eigenvalues are
//! the nodes and the squared first eigenvector components (times √π) the
//! weights.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Quadrature rule for E[φ(Z)], Z ~ N(0, 1).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    /// Standard-normal evaluation points (already scaled by √2).
    nodes: Vec<f64>,
    /// Probability weights, summing to one.
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        if n_nodes == 1 {
            return Ok(GaussHermite { nodes: vec![0.0], weights: vec![1.0] });
        }
        let mut companion = DMatrix::zeros(n_nodes, n_nodes);
        for k in 1..n_nodes {
            let off = (k as f64 / 2.0).sqrt();
            companion[(k - 1, k)] = off;
            companion[(k, k - 1)] = off;
        }
        let eigen = companion.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let v0 = eigen.eigenvectors[(0, i)];
                (x, v0 * v0) // already normalized: Σ v0² = 1
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Physicists' nodes integrate against e^{-x²}; substitute x = z/√2 to
        // land on the standard normal scale.
        let nodes = pairs.iter().map(|(x, _)| x * std::f64::consts::SQRT_2).collect();
        let weights = pairs.iter().map(|(_, w)| *w).collect();
        Ok(GaussHermite { nodes, weights })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Standard-normal nodes z_i.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Probability weights w_i with Σ w_i = 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// E[φ(Z)] for Z ~ N(0, 1).
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut phi: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * phi(z))
            .sum()
    }
}

/// Tensorized rule over `dim` independent standard normals.
///
/// Nodes are enumerated in odometer order (last coordinate fastest), which
/// fixes the reduction order for reproducibility.
#[derive(Debug, Clone)]
pub struct TensorGaussHermite {
    dim: usize,
    base: GaussHermite,
    /// Flattened nodes: entry k holds `dim` coordinates.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TensorGaussHermite {
    pub fn new(dim: usize, n_nodes: usize) -> Result<Self> {
        let base = GaussHermite::new(n_nodes)?;
        if dim == 0 {
            return Err(Error::invalid("tensor quadrature needs dim ≥ 1"));
        }
        let total = n_nodes.checked_pow(dim as u32).ok_or_else(|| {
            Error::invalid("tensor quadrature size overflow")
        })?;
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for &i in &idx {
                nodes.push(base.nodes[i]);
                w *= base.weights[i];
            }
            weights.push(w);
            for c in (0..dim).rev() {
                idx[c] += 1;
                if idx[c] < n_nodes {
                    break;
                }
                idx[c] = 0;
            }
        }
        Ok(TensorGaussHermite { dim, base, nodes, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn base(&self) -> &GaussHermite {
        &self.base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_node_is_the_mean() {
        let q = GaussHermite::new(1).unwrap();
        assert_eq!(q.nodes(), &[0.0]);
        assert_eq!(q.weights(), &[1.0]);
    }

    #[test]
    fn weights_sum_to_one_and_nodes_are_symmetric() {
        for n in [2usize, 3, 5, 8, 13] {
            let q = GaussHermite::new(n).unwrap();
            let total: f64 = q.weights().iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            for i in 0..n {
                assert_relative_eq!(q.nodes()[i], -q.nodes()[n - 1 - i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn matches_gaussian_moments() {
        let q = GaussHermite::new(5).unwrap();
        assert_relative_eq!(q.expect(|_| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(q.expect(|z| z), 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.expect(|z| z * z), 1.0, epsilon = 1e-11);
        assert_relative_eq!(q.expect(|z| z.powi(4)), 3.0, epsilon = 1e-10);
        assert_relative_eq!(q.expect(|z| z.powi(6)), 15.0, epsilon = 1e-9);
        // E[e^Z] = e^{1/2}; 5 nodes are not exact but close.
        assert_relative_eq!(q.expect(|z| z.exp()), 0.5_f64.exp(), epsilon = 1e-4);
    }

    #[test]
    fn tensor_rule_integrates_cross_moments() {
        let q = TensorGaussHermite::new(2, 4).unwrap();
        assert_eq!(q.n_points(), 16);
        let mut ez1z2 = 0.0;
        let mut ez1sq = 0.0;
        let mut total = 0.0;
        for k in 0..q.n_points() {
            let p = q.point(k);
            let w = q.weight(k);
            ez1z2 += w * p[0] * p[1];
            ez1sq += w * p[0] * p[0];
            total += w;
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ez1z2, 0.0, epsilon = 1e-11);
        assert_relative_eq!(ez1sq, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(GaussHermite::new(0).is_err());
        assert!(TensorGaussHermite::new(0, 3).is_err());
    }
}
