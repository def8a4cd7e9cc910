//! Functional principal component decomposition from a covariance surface
//! (static or long-run), score projection, reconstruction, and predictive
//! cross-validation choice of the number of components.
//!
//! The discretized operator is `M = D^{1/2} C D^{1/2}` with `D` the diagonal
//! quadrature-weight matrix; eigenvectors are mapped back by `D^{-1/2}` so
//! discrete orthonormality matches functional orthonormality.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fcurve::{self, FunctionalTimeSeries, MeanCurve};
use crate::longrun::CovarianceSurface;

/// Mean curve, orthonormal component curves, eigenvalues, scores, and
/// per-curve weights (all ones for the non-robust fit).
#[derive(Debug, Clone)]
pub struct PrincipalDecomposition {
    pub mean: MeanCurve,
    /// K component curves on the grid, eigenvalue order.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
    /// n x K score matrix.
    pub scores: DMatrix<f64>,
    /// Per-curve 0/1 weights.
    pub weights: Vec<f64>,
}

impl PrincipalDecomposition {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Fractions `λ_k / Σ λ` of variance explained by each component.
    pub fn explained_variance(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.eigenvalues.len()];
        }
        self.eigenvalues.iter().map(|l| l / total).collect()
    }
}

/// Top-K eigenpairs of the quadrature-weighted covariance operator.
/// Eigenfunctions are unit-norm under the quadrature inner product, sign
/// fixed so the entry of largest magnitude is positive.
pub fn eigen_decompose(c: &CovarianceSurface, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = c.grid.len();
    if k == 0 || k > p {
        return Err(Error::Config(format!("K = {k} outside 1..={p}")));
    }
    if c.surface.nrows() != p || c.surface.ncols() != p {
        return Err(Error::Dimension("surface does not match grid".into()));
    }
    let w = c.grid.weights();
    let mut m = c.surface.clone();
    for a in 0..p {
        for b in 0..p {
            m[(a, b)] *= (w[a] * w[b]).sqrt();
        }
    }
    let m = (&m + m.transpose()) / 2.0;
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut eigenvalues = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        let v = eig.eigenvectors.column(idx);
        let mut phi: Vec<f64> = (0..p).map(|a| v[a] / w[a].sqrt()).collect();
        fix_sign(&mut phi);
        components.push(phi);
    }
    Ok((eigenvalues, components))
}

/// Flip so the entry of largest magnitude is positive (lowest index on ties).
pub(crate) fn fix_sign(phi: &mut [f64]) {
    let mut best = 0;
    for (i, v) in phi.iter().enumerate() {
        if v.abs() > phi[best].abs() {
            best = i;
        }
    }
    if phi[best] < 0.0 {
        for v in phi.iter_mut() {
            *v = -*v;
        }
    }
}

/// Score matrix `β_{i,k} = <Xc_i, φ_k>` by quadrature.
pub fn project_scores(xc: &FunctionalTimeSeries, components: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = xc.len();
    let k = components.len();
    let mut scores = DMatrix::<f64>::zeros(n, k);
    for i in 0..n {
        for (j, phi) in components.iter().enumerate() {
            scores[(i, j)] = fcurve::inner_product(xc.curve(i), phi, xc.grid())?;
        }
    }
    Ok(scores)
}

/// Reconstruction `μ + Σ_k β_{i,k} φ_k` of curve `i`.
pub fn reconstruct(decomp: &PrincipalDecomposition, i: usize) -> Result<Vec<f64>> {
    if i >= decomp.scores.nrows() {
        return Err(Error::Dimension(format!("curve index {i} out of range")));
    }
    let mut out = decomp.mean.values().to_vec();
    for (k, phi) in decomp.components.iter().enumerate() {
        let beta = decomp.scores[(i, k)];
        for (o, v) in out.iter_mut().zip(phi) {
            *o += beta * v;
        }
    }
    Ok(out)
}

/// Curve from an explicit score row: `μ + Σ_k β_k φ_k`.
pub fn curve_from_scores(
    mean: &MeanCurve,
    components: &[Vec<f64>],
    score_row: &[f64],
) -> Result<Vec<f64>> {
    if score_row.len() != components.len() {
        return Err(Error::Dimension("score length != component count".into()));
    }
    let mut out = mean.values().to_vec();
    for (beta, phi) in score_row.iter().zip(components) {
        for (o, v) in out.iter_mut().zip(phi) {
            *o += beta * v;
        }
    }
    Ok(out)
}

/// A forecaster for CV: given the training series and K, produce forecasts
/// for the `n_1` validation curves (one row per validation curve).
pub type CvForecaster<'a> =
    &'a dyn Fn(&FunctionalTimeSeries, usize, usize) -> Result<Vec<Vec<f64>>>;

/// Predictive cross-validation choice of K: scans `1..=k_max`, scoring
/// `(1/(p n_1)) Σ_w Σ_υ [X_υ(t_w) − X̂_υ(t_w)]²` on the validation set.
/// Ties break toward smaller K.
pub fn select_k_cv(
    train: &FunctionalTimeSeries,
    validation: &FunctionalTimeSeries,
    forecaster: CvForecaster,
    k_max: usize,
) -> Result<usize> {
    if k_max < 1 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    let n1 = validation.len();
    let p = validation.grid().len();
    let mut best = (1usize, f64::INFINITY);
    for k in 1..=k_max {
        let forecasts = forecaster(train, k, n1)?;
        if forecasts.len() != n1 {
            return Err(Error::Dimension("forecaster returned wrong count".into()));
        }
        let mut err = 0.0;
        for (fc, idx) in forecasts.iter().zip(0..n1) {
            let actual = validation.curve(idx);
            for (a, b) in fc.iter().zip(actual) {
                err += (a - b) * (a - b);
            }
        }
        err /= (p * n1) as f64;
        // ties (within numerical slack) go to the smaller K already held
        if err < best.1 - 1e-12 * (1.0 + best.1.min(err).abs()) {
            best = (k, err);
        }
    }
    Ok(best.0)
}

/// Classical FPCA: mean, center, eigen-decompose the given covariance
/// surface (PSD-clipped), project scores. Unit weights.
pub fn fit(
    x: &FunctionalTimeSeries,
    surface: &CovarianceSurface,
    k: usize,
) -> Result<PrincipalDecomposition> {
    let mean = fcurve::mean_curve(x, None)?;
    let xc = fcurve::center(x, &mean)?;
    let clipped = surface.psd_clipped();
    let (eigenvalues, components) = eigen_decompose(&clipped, k)?;
    let scores = project_scores(&xc, &components)?;
    Ok(PrincipalDecomposition {
        mean,
        components,
        eigenvalues,
        scores,
        weights: vec![1.0; x.len()],
    })
}

/// Lag-0 ("static") covariance surface of a centered series.
pub fn static_covariance(xc: &FunctionalTimeSeries) -> Result<CovarianceSurface> {
    let a0 = crate::longrun::autocov(xc, 0)?;
    let sym = (&a0.surface + a0.surface.transpose()) / 2.0;
    Ok(CovarianceSurface { grid: xc.grid().clone(), surface: sym, kernel: None })
}

/// Upper bound for the CV scan over K.
pub fn k_search_bound(p: usize, n: usize) -> usize {
    50usize.min(p).min(n.saturating_sub(1)).max(1)
}
