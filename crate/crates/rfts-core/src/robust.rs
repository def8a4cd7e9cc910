//! Projection-pursuit robust FPCA: RAPCA component extraction driven by a
//! pairwise-difference dispersion, integrated-error outlier weights, and
//! re-estimation on the surviving curves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fcurve::{self, FunctionalTimeSeries};
use crate::fpca::{self, PrincipalDecomposition};
use crate::longrun::{self, CovarianceSurface, KernelSpec};

const QN_CONSTANT: f64 = 2.2219;

/// Small-sample correction factor `c_n` for the pairwise dispersion.
/// Tabulated for n <= 9; parity formulas beyond.
pub fn qn_correction(n: usize) -> f64 {
    match n {
        2 => 0.399,
        3 => 0.994,
        4 => 0.512,
        5 => 0.844,
        6 => 0.611,
        7 => 0.857,
        8 => 0.669,
        9 => 0.872,
        n if n % 2 == 1 => n as f64 / (n as f64 + 1.4),
        n => n as f64 / (n as f64 + 3.8),
    }
}

/// Robust scale: `2.2219 · c_n ·` the τ-th smallest pairwise absolute
/// difference, with `τ = C(⌊n/2⌋ + 1, 2)`.
pub fn qn_dispersion(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Degenerate("qn_dispersion needs n >= 2".into()));
    }
    let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            diffs.push((x[i] - x[j]).abs());
        }
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let half = n / 2;
    let tau = half * (half + 1) / 2; // C(half + 1, 2)
    Ok(QN_CONSTANT * qn_correction(n) * diffs[tau - 1])
}

/// Lower median: order statistic ⌊(n+1)/2⌋.
pub fn lower_median(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[(sorted.len() + 1) / 2 - 1]
}

/// Integrated squared errors and the 0/1 keep-weights they induce.
#[derive(Debug, Clone)]
pub struct OutlierWeights {
    pub errors: Vec<f64>,
    pub median: f64,
    pub lambda: f64,
    pub weights: Vec<f64>,
}

/// Threshold the integrated errors at `s + λ√s`, `s` the (lower) median.
pub fn outlier_weights(v: &[f64], lambda: f64) -> Result<OutlierWeights> {
    if !(lambda > 0.0) {
        return Err(Error::Config("lambda must be positive".into()));
    }
    if v.is_empty() {
        return Err(Error::Degenerate("empty error vector".into()));
    }
    let s = lower_median(v);
    let threshold = s + lambda * s.sqrt();
    let weights = v.iter().map(|&vi| if vi < threshold { 1.0 } else { 0.0 }).collect();
    Ok(OutlierWeights { errors: v.to_vec(), median: s, lambda, weights })
}

/// L1-median (spatial median) of the curves under the quadrature norm,
/// by Weiszfeld iteration. Robust location for the initial RAPCA phase:
/// mean centering would leak gross outliers into every candidate direction.
pub fn l1_median_curve(x: &FunctionalTimeSeries) -> Result<Vec<f64>> {
    let p = x.grid().len();
    let mut m = fcurve::mean_curve(x, None)?.values().to_vec();
    for _ in 0..200 {
        let mut num = vec![0.0; p];
        let mut den = 0.0;
        let mut at_point = false;
        for row in x.curves() {
            let diff: Vec<f64> = row.iter().zip(&m).map(|(a, b)| a - b).collect();
            let d = fcurve::norm(&diff, x.grid())?;
            if d < 1e-12 {
                at_point = true;
                continue;
            }
            for (nu, v) in num.iter_mut().zip(row) {
                *nu += v / d;
            }
            den += 1.0 / d;
        }
        if den == 0.0 {
            break;
        }
        let next: Vec<f64> = num.iter().map(|v| v / den).collect();
        let step: Vec<f64> = next.iter().zip(&m).map(|(a, b)| a - b).collect();
        let moved = fcurve::norm(&step, x.grid())?;
        m = next;
        if moved < 1e-10 || at_point {
            break;
        }
    }
    Ok(m)
}

/// RAPCA initial fit: direction curves extracted sequentially, each
/// maximizing the Qn dispersion of projected scores over the current
/// (deflated, normalized) data curves; deflation by Householder reflection.
///
/// Works in `y = D^{1/2} x` coordinates, where the quadrature inner product
/// is the plain dot product. Returns orthonormal component curves on the
/// grid and the n x K score matrix of the input data.
pub fn rapca(xc: &FunctionalTimeSeries, k: usize) -> Result<(Vec<Vec<f64>>, DMatrix<f64>)> {
    let n = xc.len();
    let p = xc.grid().len();
    if k > n.saturating_sub(1).min(p) {
        return Err(Error::Config(format!(
            "K = {k} exceeds min(n-1, p) = {}",
            n.saturating_sub(1).min(p)
        )));
    }
    let w = xc.grid().weights();
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    // data rows in y-space
    let mut data: Vec<Vec<f64>> = xc
        .curves()
        .iter()
        .map(|row| row.iter().zip(&sqrt_w).map(|(v, s)| v * s).collect())
        .collect();
    let orig = data.clone();
    // accumulated Householder vectors with their pivot coordinates
    let mut reflections: Vec<Vec<f64>> = Vec::new();
    let mut dead: Vec<bool> = vec![false; p];
    let mut components: Vec<Vec<f64>> = Vec::new();

    for _ in 0..k {
        // candidate directions: normalized current data rows
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (i, row) in data.iter().enumerate() {
            let nrm = dot(row, row).sqrt();
            if nrm < 1e-12 {
                continue;
            }
            let dir: Vec<f64> = row.iter().map(|v| v / nrm).collect();
            let scores: Vec<f64> = data.iter().map(|r| dot(r, &dir)).collect();
            let disp = qn_dispersion(&scores)?;
            let better = match &best {
                None => true,
                Some((_, d, _)) => disp > *d,
            };
            if better {
                best = Some((i, disp, dir));
            }
        }
        let (_, _, dir) = best.ok_or_else(|| {
            Error::Degenerate("no candidate direction with positive norm".into())
        })?;

        // map the direction found in reflected coordinates back to y-space
        let mut u = dir.clone();
        for refl in reflections.iter().rev() {
            apply_householder(refl, &mut u);
        }
        components.push(u);

        if components.len() == k {
            break;
        }

        // deflate: reflect `dir` onto a live basis coordinate, apply the
        // reflection to the data, and retire that coordinate
        let pivot = dir
            .iter()
            .enumerate()
            .filter(|(c, _)| !dead[*c])
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(c, _)| c)
            .ok_or_else(|| Error::Degenerate("no live coordinate left".into()))?;
        let mut v = dir.clone();
        let sign = if v[pivot] >= 0.0 { 1.0 } else { -1.0 };
        v[pivot] += sign; // maps dir to -sign * e_pivot
        let vnorm = dot(&v, &v).sqrt();
        if vnorm > 1e-12 {
            for entry in v.iter_mut() {
                *entry /= vnorm;
            }
            for row in data.iter_mut() {
                apply_householder(&v, row);
            }
            reflections.push(v);
        } else {
            reflections.push(vec![0.0; p]);
        }
        dead[pivot] = true;
        for row in data.iter_mut() {
            row[pivot] = 0.0;
        }
    }

    // orthonormalize against drift, map to curve space, fix signs
    gram_schmidt(&mut components);
    let mut curves = Vec::with_capacity(components.len());
    for comp in &components {
        let mut phi: Vec<f64> = comp.iter().zip(&sqrt_w).map(|(v, s)| v / s).collect();
        fpca::fix_sign(&mut phi);
        curves.push(phi);
    }
    let mut scores = DMatrix::<f64>::zeros(n, curves.len());
    for (i, row) in orig.iter().enumerate() {
        for (j, comp) in components.iter().enumerate() {
            // scores in y-space equal quadrature scores in curve space,
            // up to the sign fix
            let s = dot(row, comp);
            let flipped = {
                let phi_raw: Vec<f64> =
                    comp.iter().zip(&sqrt_w).map(|(v, sq)| v / sq).collect();
                let mut phi = phi_raw.clone();
                fpca::fix_sign(&mut phi);
                phi_raw.iter().zip(&phi).any(|(a, b)| (a + b).abs() < (a - b).abs())
            };
            scores[(i, j)] = if flipped { -s } else { s };
        }
    }
    Ok((curves, scores))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn apply_householder(v: &[f64], x: &mut [f64]) {
    let proj = 2.0 * dot(v, x);
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= proj * vi;
    }
}

fn gram_schmidt(vectors: &mut Vec<Vec<f64>>) {
    for i in 0..vectors.len() {
        for j in 0..i {
            let prev = vectors[j].clone();
            let proj = dot(&vectors[i], &prev);
            for (a, b) in vectors[i].iter_mut().zip(&prev) {
                *a -= proj * b;
            }
        }
        let nrm = dot(&vectors[i], &vectors[i]).sqrt();
        if nrm > 1e-12 {
            for a in vectors[i].iter_mut() {
                *a /= nrm;
            }
        }
    }
}

/// Integrated squared reconstruction errors `v_i = ∫ [Xc_i − Σ β φ]² dt`.
pub fn integrated_errors(
    xc: &FunctionalTimeSeries,
    components: &[Vec<f64>],
    scores: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = xc.len();
    if scores.nrows() != n || scores.ncols() != components.len() {
        return Err(Error::Dimension("scores shape inconsistent with decomposition".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut resid = xc.curve(i).to_vec();
        for (k, phi) in components.iter().enumerate() {
            let beta = scores[(i, k)];
            for (r, v) in resid.iter_mut().zip(phi) {
                *r -= beta * v;
            }
        }
        out.push(fcurve::inner_product(&resid, &resid, xc.grid())?);
    }
    Ok(out)
}

/// Robust FPCA pipeline: RAPCA initial fit on the centered data, integrated
/// errors and 0/1 outlier weights, then a classical decomposition on the
/// surviving curves. The final surface is the long-run covariance of the
/// survivors when `kernel` is given, the lag-0 covariance otherwise.
/// Scores are projected for every curve; weights are recorded in the result.
pub fn robust_fpca(
    x: &FunctionalTimeSeries,
    k: usize,
    lambda: f64,
    kernel: Option<&KernelSpec>,
) -> Result<PrincipalDecomposition> {
    let med = l1_median_curve(x)?;
    let mean0 = crate::fcurve::MeanCurve::new(x.grid().clone(), med)?;
    let xc0 = fcurve::center(x, &mean0)?;
    let (init_comps, init_scores) = rapca(&xc0, k)?;
    let v = integrated_errors(&xc0, &init_comps, &init_scores)?;
    let ow = outlier_weights(&v, lambda)?;
    robust_refit(x, k, kernel, ow)
}

/// Final weighted re-estimation given precomputed keep-weights.
pub fn robust_refit(
    x: &FunctionalTimeSeries,
    k: usize,
    kernel: Option<&KernelSpec>,
    ow: OutlierWeights,
) -> Result<PrincipalDecomposition> {
    let survivors: Vec<usize> = ow
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.5)
        .map(|(i, _)| i)
        .collect();
    if survivors.len() <= k {
        return Err(Error::Degenerate(format!(
            "only {} curves survive weighting; need more than K = {k}",
            survivors.len()
        )));
    }
    let kept = FunctionalTimeSeries::new(
        x.grid().clone(),
        survivors.iter().map(|&i| x.curve(i).to_vec()).collect(),
    )?;
    let mean = fcurve::mean_curve(&kept, None)?;
    let kept_c = fcurve::center(&kept, &mean)?;
    let surface: CovarianceSurface = match kernel {
        Some(spec) => longrun::long_run_cov(&kept_c, spec)?,
        None => fpca::static_covariance(&kept_c)?,
    };
    let (eigenvalues, components) = fpca::eigen_decompose(&surface.psd_clipped(), k)?;
    let xc = fcurve::center(x, &mean)?;
    let scores = fpca::project_scores(&xc, &components)?;
    Ok(PrincipalDecomposition { mean, components, eigenvalues, scores, weights: ow.weights })
}
