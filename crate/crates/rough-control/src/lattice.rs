//! Regular state lattices and multilinear interpolation.
//!
//! Dynamic programming stores one value per lattice node; off-lattice
//! evaluation clamps the query point into the box and interpolates
//! multilinearly over the 2^d cell corners. Clamping events are reported to
//! the caller so the boundary bias stays visible.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension extent of a lattice: `nodes` equally spaced points on
/// `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Self {
        AxisSpec { lo, hi, nodes }
    }

    fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }
}

/// Largest state dimension served at full lattice resolution.
pub const MAX_STATE_DIM: usize = 3;

/// A regular grid over a box in ℝ^d, d ≤ [`MAX_STATE_DIM`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLattice {
    axes: Vec<AxisSpec>,
}

impl StateLattice {
    pub fn new(axes: Vec<AxisSpec>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_STATE_DIM {
            return Err(Error::invalid(format!(
                "state lattice supports 1..={MAX_STATE_DIM} dimensions, got {}",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(Error::invalid(format!(
                    "axis {i} needs finite lo < hi, got [{}, {}]",
                    a.lo, a.hi
                )));
            }
            if a.nodes < 2 {
                return Err(Error::invalid(format!("axis {i} needs at least 2 nodes")));
            }
        }
        Ok(StateLattice { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    /// Row-major flat index of a multi-index (last axis fastest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &i) in self.axes.iter().zip(multi) {
            idx = idx * a.nodes + i;
        }
        idx
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for (c, a) in self.axes.iter().enumerate().rev() {
            multi[c] = flat % a.nodes;
            flat /= a.nodes;
        }
        multi
    }

    /// Coordinates of a node, written into `out`.
    pub fn coord_into(&self, flat: usize, out: &mut [f64]) {
        let multi = self.multi_index(flat);
        for (c, a) in self.axes.iter().enumerate() {
            out[c] = a.lo + multi[c] as f64 * a.spacing();
        }
    }

    pub fn coord(&self, flat: usize) -> DVector<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coord_into(flat, &mut out);
        DVector::from_vec(out)
    }

    /// All node coordinates, flattened node-major.
    pub fn all_coords(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.n_nodes() * d];
        for k in 0..self.n_nodes() {
            self.coord_into(k, &mut out[k * d..(k + 1) * d]);
        }
        out
    }

    /// Flat index of the nearest node to `point` (coordinates clamped).
    pub fn nearest(&self, point: &[f64]) -> usize {
        let mut idx = 0;
        for (a, &p) in self.axes.iter().zip(point) {
            let u = ((p - a.lo) / a.spacing()).round();
            let i = (u.max(0.0) as usize).min(a.nodes - 1);
            idx = idx * a.nodes + i;
        }
        idx
    }

    /// Multilinear interpolation of `values` (one per node, row-major) at
    /// `point`. Returns the value and whether the point had to be clamped
    /// into the box.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> (f64, bool) {
        debug_assert_eq!(values.len(), self.n_nodes());
        let d = self.dim();
        debug_assert!(d <= MAX_STATE_DIM && point.len() == d);
        let mut cell = [0usize; MAX_STATE_DIM];
        let mut frac = [0.0f64; MAX_STATE_DIM];
        let mut clamped = false;
        for c in 0..d {
            let a = &self.axes[c];
            let mut u = (point[c] - a.lo) / a.spacing();
            if u < 0.0 {
                u = 0.0;
                clamped = true;
            }
            let max_u = (a.nodes - 1) as f64;
            if u > max_u {
                u = max_u;
                clamped = true;
            }
            let mut i = u.floor() as usize;
            if i >= a.nodes - 1 {
                i = a.nodes - 2;
            }
            cell[c] = i;
            frac[c] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for c in 0..d {
                let hi = (corner >> c) & 1 == 1;
                w *= if hi { frac[c] } else { 1.0 - frac[c] };
                idx = idx * self.axes[c].nodes + cell[c] + usize::from(hi);
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        (acc, clamped)
    }
}
