//! Uniform time grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform partition of `[start, end]` into `n_steps` intervals.
///
/// Nodes are `t_k = start + k * step()` for `k = 0..=n_steps`. Everything in
/// this crate (lifts, schemes, value functions) lives on such grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, n_steps: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) {
            return Err(Error::invalid("time grid endpoints must be finite"));
        }
        if end <= start {
            return Err(Error::invalid(format!(
                "time grid needs end > start, got [{start}, {end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { start, end, n_steps })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Uniform spacing h = (end - start) / n_steps.
    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.n_steps as f64
    }

    /// Node t_k. Exact at both endpoints.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_steps);
        if k == self.n_steps {
            self.end
        } else {
            self.start + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Sub-grid spanning nodes `i..=k` of this grid.
    pub fn restrict(&self, i: usize, k: usize) -> Result<Self> {
        if i >= k || k > self.n_steps {
            return Err(Error::invalid(format!(
                "bad restriction {i}..{k} of a {}-step grid",
                self.n_steps
            )));
        }
        TimeGrid::new(self.node(i), self.node(k), k - i)
    }

    /// Same span, `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        TimeGrid::new(self.start, self.end, self.n_steps * factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_hit_endpoints() {
        let g = TimeGrid::new(0.25, 1.25, 4).unwrap();
        let ts: Vec<f64> = g.nodes().collect();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.25);
        assert_eq!(ts[4], 1.25);
        for w in ts.windows(2) {
            assert!((w[1] - w[0] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, -1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 1.0, 1).is_err());
    }

    #[test]
    fn restriction_keeps_nodes() {
        let g = TimeGrid::new(0.0, 2.0, 8).unwrap();
        let sub = g.restrict(2, 6).unwrap();
        assert_eq!(sub.n_steps(), 4);
        assert!((sub.start() - g.node(2)).abs() < 1e-15);
        assert!((sub.end() - g.node(6)).abs() < 1e-15);
        assert!((sub.step() - g.step()).abs() < 1e-15);
        assert!(g.restrict(3, 3).is_err());
        assert!(g.restrict(0, 9).is_err());
    }
}
