//! Containers and numerics for functional time series sampled on a dense
//! common grid: quadrature inner products, norms, mean curves, centering.

use crate::error::{Error, Result};

/// Ordered abscissae over the function support, with trapezoidal
/// quadrature weights derived from the spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Build a grid from strictly increasing points (at least 2).
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Degenerate("grid needs at least 2 points".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Degenerate(
                "grid points must be finite and strictly increasing".into(),
            ));
        }
        let p = points.len();
        let mut weights = vec![0.0; p];
        weights[0] = (points[1] - points[0]) / 2.0;
        weights[p - 1] = (points[p - 1] - points[p - 2]) / 2.0;
        for i in 1..p - 1 {
            weights[i] = (points[i + 1] - points[i - 1]) / 2.0;
        }
        Ok(Grid { points, weights })
    }

    /// Uniform grid of `p` points over `[a, b]`.
    pub fn uniform(a: f64, b: f64, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::Degenerate("grid needs at least 2 points".into()));
        }
        let step = (b - a) / (p - 1) as f64;
        Grid::new((0..p).map(|i| a + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoidal quadrature weights; positive, summing to the interval length.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval_length(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }
}

/// `n` curves observed on one common grid; row `i` is curve `i`.
#[derive(Debug, Clone)]
pub struct FunctionalTimeSeries {
    grid: Grid,
    values: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl FunctionalTimeSeries {
    pub fn new(grid: Grid, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(grid, values, None)
    }

    pub fn with_labels(
        grid: Grid,
        values: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Degenerate("series needs at least one curve".into()));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(Error::Dimension(format!(
                    "curve {i} has {} points, grid has {}",
                    row.len(),
                    grid.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate(format!("curve {i} has non-finite values")));
            }
        }
        if let Some(ref l) = labels {
            if l.len() != values.len() {
                return Err(Error::Dimension("label count != curve count".into()));
            }
        }
        Ok(FunctionalTimeSeries { grid, values, labels })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of curves `n`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn curves(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Sub-series over curve index range `[start, end)`, labels carried along.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Degenerate(format!(
                "invalid slice {start}..{end} of {} curves",
                self.len()
            )));
        }
        FunctionalTimeSeries::with_labels(
            self.grid.clone(),
            self.values[start..end].to_vec(),
            self.labels.as_ref().map(|l| l[start..end].to_vec()),
        )
    }
}

/// Mean curve on the same grid as its source series.
#[derive(Debug, Clone)]
pub struct MeanCurve {
    grid: Grid,
    values: Vec<f64>,
}

impl MeanCurve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension("mean curve length != grid size".into()));
        }
        Ok(MeanCurve { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Quadrature approximation of the L2 inner product of two curves.
pub fn inner_product(f: &[f64], g: &[f64], grid: &Grid) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "curve lengths {}, {} do not match grid size {}",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    Ok(f.iter()
        .zip(g)
        .zip(grid.weights())
        .map(|((a, b), w)| a * b * w)
        .sum())
}

/// Quadrature L2 norm.
pub fn norm(f: &[f64], grid: &Grid) -> Result<f64> {
    inner_product(f, f, grid).map(f64::sqrt)
}

/// Pointwise (optionally weighted) average across curves. Weights are
/// expected in `[0, 1]` and must not be all zero.
pub fn mean_curve(x: &FunctionalTimeSeries, weights: Option<&[f64]>) -> Result<MeanCurve> {
    let n = x.len();
    let p = x.grid().len();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension("weight count != curve count".into()));
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("all-zero weights in mean_curve".into()));
        }
        let mut out = vec![0.0; p];
        for (row, wi) in x.curves().iter().zip(w) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += wi * v;
            }
        }
        for o in &mut out {
            *o /= total;
        }
        MeanCurve::new(x.grid().clone(), out)
    } else {
        let mut out = vec![0.0; p];
        for row in x.curves() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        MeanCurve::new(x.grid().clone(), out)
    }
}

/// Subtract a mean curve from every curve of the series.
pub fn center(x: &FunctionalTimeSeries, mu: &MeanCurve) -> Result<FunctionalTimeSeries> {
    if mu.grid() != x.grid() {
        return Err(Error::Dimension("grid mismatch in center".into()));
    }
    let values = x
        .curves()
        .iter()
        .map(|row| row.iter().zip(mu.values()).map(|(v, m)| v - m).collect())
        .collect();
    FunctionalTimeSeries::with_labels(x.grid().clone(), values, x.labels().map(|l| l.to_vec()))
}
