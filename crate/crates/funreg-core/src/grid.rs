//! Ordered sample points on `[0, 1]` with the quadrature weights
//! `w(i) = (n+1) * (p_i - p_{i-1})`, `p_0 = 0` by convention. The weighted
//! Riemann sum `(1/n) * sum_i w(i) f(p_i)` approximates `int_0^1 f`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SampleGrid {
    /// Builds a grid from strictly increasing points in `(0, 1]`.
    ///
    /// A first point at exactly 0 is rejected: under the `p_0 = 0` convention
    /// its weight would vanish. When the points are bit-identical to the
    /// canonical equispaced layout `i / (n+1)` the weights are set to exactly
    /// 1.0 rather than recomputed through differences, so equispaced grids
    /// survive serialization round trips with exact unit weights.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Grid("a grid needs at least one point".into()));
        }
        let n = points.len();
        let mut prev = 0.0;
        for (i, &p) in points.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Grid(format!("point {p} at index {i} lies outside [0, 1]")));
            }
            if p <= prev {
                return Err(Error::Grid(format!(
                    "points must be strictly increasing away from 0; offending value {p} at index {i}"
                )));
            }
            prev = p;
        }
        let canonical = points
            .iter()
            .enumerate()
            .all(|(i, &p)| p == (i + 1) as f64 / (n + 1) as f64);
        let weights = if canonical {
            vec![1.0; n]
        } else {
            let scale = (n + 1) as f64;
            let mut prev = 0.0;
            points
                .iter()
                .map(|&p| {
                    let w = scale * (p - prev);
                    prev = p;
                    w
                })
                .collect()
        };
        Ok(SampleGrid { points, weights })
    }

    /// The canonical equispaced grid `p_i = i / (n+1)`, `i = 1..=n`, whose
    /// quadrature weights are all exactly 1.
    pub fn equispaced(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Grid("a grid needs at least one point".into()));
        }
        let points = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        Ok(SampleGrid {
            points,
            weights: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted Riemann approximation of `int_0^1 f` from values of `f` at
    /// the grid points.
    pub fn quadrature(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        let n = self.len() as f64;
        Ok(self
            .weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            / n)
    }
}
