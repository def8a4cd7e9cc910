//! VAR(ω) modeling of principal component scores: OLS, MLTS and RMLTS
//! estimation, BIC order selection, and h-step score/curve forecasts.
//!
//! MLTS follows the concentration (C-step) machinery: random elemental
//! starts, a couple of refinement steps each, then full iteration of the
//! most promising candidates to convergence.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chi2;
use crate::error::{Error, Result};
use crate::fcurve::MeanCurve;
use crate::fpca;

/// Stacked lagged regression form of a VAR(ω): response rows `β_i` for
/// `i = ω+1..n`, design rows `(1, β_{i-1}, …, β_{i-ω})`, `q = Kω + 1`.
#[derive(Debug, Clone)]
pub struct VarDesign {
    pub order: usize,
    pub k: usize,
    pub design: DMatrix<f64>,
    pub response: DMatrix<f64>,
}

impl VarDesign {
    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn q(&self) -> usize {
        self.k * self.order + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EstimatorKind {
    Ols,
    Mlts,
    Rmlts,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Ols => write!(f, "OLS"),
            EstimatorKind::Mlts => write!(f, "MLTS"),
            EstimatorKind::Rmlts => write!(f, "RMLTS"),
        }
    }
}

/// A fitted VAR: coefficients `B` (q x K), residual covariance `Σ` (K x K),
/// the observation subset the robust estimators settled on, and the BIC of
/// the fit (populated by order selection).
#[derive(Debug, Clone)]
pub struct VarFit {
    pub estimator: EstimatorKind,
    pub order: usize,
    pub coefficients: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub subset: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub bic: Option<f64>,
}

/// Build the stacked lagged design from an n x K score matrix.
pub fn build_design(scores: &DMatrix<f64>, order: usize) -> Result<VarDesign> {
    let n = scores.nrows();
    let k = scores.ncols();
    if order < 1 {
        return Err(Error::Config("VAR order must be >= 1".into()));
    }
    if n <= order {
        return Err(Error::Degenerate(format!("n = {n} <= order = {order}")));
    }
    let rows = n - order;
    let q = k * order + 1;
    let mut design = DMatrix::<f64>::zeros(rows, q);
    let mut response = DMatrix::<f64>::zeros(rows, k);
    for r in 0..rows {
        let i = r + order; // response time index
        design[(r, 0)] = 1.0;
        for lag in 1..=order {
            for c in 0..k {
                design[(r, 1 + (lag - 1) * k + c)] = scores[(i - lag, c)];
            }
        }
        for c in 0..k {
            response[(r, c)] = scores[(i, c)];
        }
    }
    Ok(VarDesign { order, k, design, response })
}

/// Least-squares fit on a row subset; residual covariance divided by
/// `|subset| - q`.
fn ols_on_rows(d: &VarDesign, rows: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = d.q();
    let k = d.k;
    if rows.len() <= q {
        return Err(Error::Degenerate(format!(
            "subset of {} rows cannot identify q = {q} parameters",
            rows.len()
        )));
    }
    let mut x = DMatrix::<f64>::zeros(rows.len(), q);
    let mut y = DMatrix::<f64>::zeros(rows.len(), k);
    for (r, &idx) in rows.iter().enumerate() {
        x.set_row(r, &d.design.row(idx));
        y.set_row(r, &d.response.row(idx));
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let chol = xtx.clone().cholesky().ok_or_else(|| {
        Error::Singular(format!("design Gram matrix singular at dimension q = {q}"))
    })?;
    let b = chol.solve(&xty);
    let resid = &y - &x * &b;
    let denom = (rows.len() - q) as f64;
    let sigma = if denom > 0.0 {
        resid.transpose() * &resid / denom
    } else {
        resid.transpose() * &resid
    };
    Ok((b, sigma))
}

/// OLS estimator on the full design; residuals are orthogonal to the
/// design columns and `Σ` uses the effective-sample-size divisor.
pub fn ols_fit(d: &VarDesign) -> Result<VarFit> {
    let all: Vec<usize> = (0..d.rows()).collect();
    let (b, sigma) = ols_on_rows(d, &all)?;
    Ok(VarFit {
        estimator: EstimatorKind::Ols,
        order: d.order,
        coefficients: b,
        sigma,
        subset: None,
        alpha: None,
        delta: None,
        bic: None,
    })
}

/// Squared residual Mahalanobis distances for every design row, under
/// coefficients `b` and covariance `sigma`. A singular `sigma` gets a
/// diagonal ridge for the distance computation only.
fn squared_distances(d: &VarDesign, b: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Vec<f64> {
    let k = d.k;
    let mut sig = sigma.clone();
    let mut chol = sig.clone().cholesky();
    if chol.is_none() {
        let ridge = 1e-10 * sig.trace().max(1e-300) / k as f64;
        for i in 0..k {
            sig[(i, i)] += ridge.max(1e-300);
        }
        chol = sig.clone().cholesky();
    }
    let resid = &d.response - &d.design * b;
    match chol {
        Some(ch) => (0..d.rows())
            .map(|r| {
                let u = resid.row(r).transpose();
                let z = ch.solve(&u);
                (u.transpose() * z)[(0, 0)]
            })
            .collect(),
        // fully degenerate covariance: fall back to plain squared norms
        None => (0..d.rows()).map(|r| resid.row(r).norm_squared()).collect(),
    }
}

fn indices_of_smallest(dist: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap().then(a.cmp(&b)));
    let mut sel: Vec<usize> = idx.into_iter().take(h).collect();
    sel.sort_unstable();
    sel
}

fn det(sigma: &DMatrix<f64>) -> f64 {
    sigma.determinant()
}

/// One concentration step: distances under the current fit, keep the `h`
/// closest rows, refit. Does not increase `det Σ̂(H)`.
fn c_step(
    d: &VarDesign,
    b: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    h: usize,
) -> Result<(Vec<usize>, DMatrix<f64>, DMatrix<f64>)> {
    let dist = squared_distances(d, b, sigma);
    let subset = indices_of_smallest(&dist, h);
    let (b2, s2) = ols_on_rows(d, &subset)?;
    Ok((subset, b2, s2))
}

/// Multivariate least trimmed squares: approximate the minimum-determinant
/// subset of size `h = ⌈(1-α)(n-ω)⌉` by concentration from seeded random
/// elemental starts, then scale `Σ` by the consistency factor `c_α`.
pub fn mlts_fit(d: &VarDesign, alpha: f64, seed: u64) -> Result<VarFit> {
    if !(0.0..=0.5).contains(&alpha) {
        return Err(Error::Config(format!("trimming fraction {alpha} outside [0, 0.5]")));
    }
    let rows = d.rows();
    let q = d.q();
    let h = (((1.0 - alpha) * rows as f64).ceil() as usize).min(rows);
    if h <= q {
        return Err(Error::Degenerate(format!(
            "h = {h} observations cannot identify q = {q} parameters"
        )));
    }
    let c_alpha = chi2::consistency_factor(d.k, alpha)?;
    if h == rows {
        // no trimming: plain OLS with c_0 = 1 scaling
        let base = ols_fit(d)?;
        return Ok(VarFit {
            estimator: EstimatorKind::Mlts,
            subset: Some((0..rows).collect()),
            alpha: Some(alpha),
            sigma: base.sigma * c_alpha,
            ..base
        });
    }

    const STARTS: usize = 500;
    const KEEP: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..rows).collect();
    let mut candidates: Vec<(f64, Vec<usize>, DMatrix<f64>, DMatrix<f64>, usize)> = Vec::new();

    for start in 0..STARTS {
        pool.shuffle(&mut rng);
        let elemental: Vec<usize> = {
            let mut e: Vec<usize> = pool.iter().copied().take((q + 1).min(rows)).collect();
            e.sort_unstable();
            e
        };
        let Ok((b0, s0)) = ols_on_rows_ridged(d, &elemental) else {
            continue;
        };
        let mut state = (b0, s0);
        let mut subset = elemental;
        let mut ok = true;
        for _ in 0..2 {
            match c_step(d, &state.0, &state.1, h) {
                Ok((sub, b, s)) => {
                    subset = sub;
                    state = (b, s);
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            candidates.push((det(&state.1), subset, state.0, state.1, start));
        }
    }
    if candidates.is_empty() {
        return Err(Error::Singular("no MLTS start produced a non-singular fit".into()));
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.4.cmp(&b.4)));
    candidates.truncate(KEEP);

    let mut best: Option<(f64, Vec<usize>, DMatrix<f64>, DMatrix<f64>, usize)> = None;
    for (mut obj, mut subset, mut b, mut sigma, start) in candidates {
        for _ in 0..200 {
            let (sub, b2, s2) = c_step(d, &b, &sigma, h)?;
            let obj2 = det(&s2);
            debug_assert!(obj2 <= obj + 1e-9 * obj.abs().max(1e-300), "C-step increased det");
            let converged = (obj - obj2).abs() < 1e-12 * obj.abs().max(1e-300) || sub == subset;
            subset = sub;
            b = b2;
            sigma = s2;
            obj = obj2;
            if converged {
                break;
            }
        }
        let better = match &best {
            None => true,
            Some((bo, _, _, _, bs)) => obj < *bo || (obj == *bo && start < *bs),
        };
        if better {
            best = Some((obj, subset, b, sigma, start));
        }
    }
    let (_, subset, b, sigma, _) = best.unwrap();
    Ok(VarFit {
        estimator: EstimatorKind::Mlts,
        order: d.order,
        coefficients: b,
        sigma: sigma * c_alpha,
        subset: Some(subset),
        alpha: Some(alpha),
        delta: None,
        bic: None,
    })
}

/// Elemental-start OLS: like `ols_on_rows` but tolerates exactly-determined
/// subsets and collinearity via a tiny ridge, since elemental fits only
/// seed the concentration.
fn ols_on_rows_ridged(d: &VarDesign, rows: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = d.q();
    let k = d.k;
    let mut x = DMatrix::<f64>::zeros(rows.len(), q);
    let mut y = DMatrix::<f64>::zeros(rows.len(), k);
    for (r, &idx) in rows.iter().enumerate() {
        x.set_row(r, &d.design.row(idx));
        y.set_row(r, &d.response.row(idx));
    }
    let mut xtx = x.transpose() * &x;
    let ridge = 1e-10 * xtx.trace().max(1.0) / q as f64;
    for i in 0..q {
        xtx[(i, i)] += ridge;
    }
    let xty = x.transpose() * &y;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Singular("elemental subset degenerate".into()))?;
    let b = chol.solve(&xty);
    let resid = &y - &x * &b;
    let sigma = resid.transpose() * &resid / rows.len() as f64;
    Ok((b, sigma))
}

/// One-step reweighted MLTS: keep every observation whose squared residual
/// Mahalanobis distance under the MLTS fit is within the χ²_{K,1-δ}
/// cutoff, refit by OLS on that set, and rescale `Σ` by `c_δ` with the
/// `m - (K+1)ω - 1` divisor.
pub fn rmlts_fit(d: &VarDesign, alpha: f64, delta: f64, seed: u64) -> Result<VarFit> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::Config(format!("reweighting level {delta} outside [0, 0.5)")));
    }
    let mlts = mlts_fit(d, alpha, seed)?;
    let cutoff = if delta == 0.0 {
        f64::INFINITY
    } else {
        chi2::chi2_quantile(d.k as f64, 1.0 - delta)?
    };
    let dist = squared_distances(d, &mlts.coefficients, &mlts.sigma);
    let kept: Vec<usize> = (0..d.rows()).filter(|&r| dist[r] <= cutoff).collect();
    let q = d.q();
    if kept.len() <= q {
        return Err(Error::Degenerate(format!(
            "reweighted set of {} rows cannot identify q = {q} parameters",
            kept.len()
        )));
    }
    let (b, _) = ols_on_rows(d, &kept)?;
    // residual cross-product over the kept set with the verbatim
    // m - (K+1)ω - 1 divisor
    let m = kept.len();
    let denom = m as f64 - (d.k + 1) as f64 * d.order as f64 - 1.0;
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "reweighted divisor m - (K+1)ω - 1 = {denom} not positive"
        )));
    }
    let mut cross = DMatrix::<f64>::zeros(d.k, d.k);
    let resid = &d.response - &d.design * &b;
    for &r in &kept {
        let u = resid.row(r);
        cross += u.transpose() * u;
    }
    let c_delta = chi2::consistency_factor(d.k, delta)?;
    Ok(VarFit {
        estimator: EstimatorKind::Rmlts,
        order: d.order,
        coefficients: b,
        sigma: cross * (c_delta / denom),
        subset: Some(kept),
        alpha: Some(alpha),
        delta: Some(delta),
        bic: None,
    })
}

/// BIC of a fitted VAR: `ln det Σ + K ln 2π + (n-ω)^{-1} Σ ûᵀ Σ^{-1} û
/// + ln(n-ω) Kq/(n-ω)`, residuals over every design row under the fit's
/// coefficients, `Σ` the fit's (possibly robust) covariance.
pub fn bic(d: &VarDesign, fit: &VarFit) -> Result<f64> {
    let rows = d.rows() as f64;
    let k = d.k as f64;
    let q = d.q() as f64;
    let det_sigma = det(&fit.sigma);
    if !(det_sigma > 0.0) {
        return Err(Error::Singular("residual covariance not positive definite".into()));
    }
    let chol = fit
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("residual covariance not positive definite".into()))?;
    let resid = &d.response - &d.design * &fit.coefficients;
    let mut quad = 0.0;
    for r in 0..d.rows() {
        let u = resid.row(r).transpose();
        let z = chol.solve(&u);
        quad += (u.transpose() * z)[(0, 0)];
    }
    Ok(det_sigma.ln()
        + k * (2.0 * std::f64::consts::PI).ln()
        + quad / rows
        + rows.ln() * k * q / rows)
}

/// Fit one order with the named estimator.
pub fn fit_estimator(
    scores: &DMatrix<f64>,
    order: usize,
    estimator: EstimatorKind,
    alpha: f64,
    delta: f64,
    seed: u64,
) -> Result<VarFit> {
    let d = build_design(scores, order)?;
    let mut fit = match estimator {
        EstimatorKind::Ols => ols_fit(&d)?,
        EstimatorKind::Mlts => mlts_fit(&d, alpha, seed)?,
        EstimatorKind::Rmlts => rmlts_fit(&d, alpha, delta, seed)?,
    };
    fit.bic = Some(bic(&d, &fit)?);
    Ok(fit)
}

/// Scan orders `1..=ω_max`, return the minimum-BIC fit; ties to smaller ω.
pub fn select_order(
    scores: &DMatrix<f64>,
    max_order: usize,
    estimator: EstimatorKind,
    alpha: f64,
    delta: f64,
    seed: u64,
) -> Result<(usize, VarFit)> {
    if max_order < 1 {
        return Err(Error::Config("max order must be >= 1".into()));
    }
    let mut best: Option<(usize, VarFit)> = None;
    for order in 1..=max_order {
        let fit = fit_estimator(scores, order, estimator, alpha, delta, seed)?;
        let bic_val = fit.bic.unwrap();
        let better = match &best {
            None => true,
            Some((_, b)) => bic_val < b.bic.unwrap(),
        };
        if better {
            best = Some((order, fit));
        }
    }
    Ok(best.unwrap())
}

/// Iterated one-step score forecasts: `β̂_{n+j} = B̂ᵀ x_{n+j}`, with
/// forecasts substituted for actuals once the history runs out. `history`
/// holds the last ω score rows in chronological order.
pub fn forecast_scores(fit: &VarFit, history: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
    let order = fit.order;
    let k = fit.coefficients.ncols();
    let q = fit.coefficients.nrows();
    if history.len() != order {
        return Err(Error::Dimension(format!(
            "history has {} rows; order is {order}",
            history.len()
        )));
    }
    if q != k * order + 1 {
        return Err(Error::Dimension("coefficient shape inconsistent with order".into()));
    }
    let mut window: Vec<Vec<f64>> = history.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut x = Vec::with_capacity(q);
        x.push(1.0);
        for lag in 1..=order {
            let row = &window[window.len() - lag];
            if row.len() != k {
                return Err(Error::Dimension("history row length != K".into()));
            }
            x.extend_from_slice(row);
        }
        let mut pred = vec![0.0; k];
        for (c, p) in pred.iter_mut().enumerate() {
            *p = (0..q).map(|r| fit.coefficients[(r, c)] * x[r]).sum();
        }
        window.push(pred.clone());
        out.push(pred);
    }
    Ok(out)
}

/// Curve forecasts `μ + Σ_k β̂_{n+h,k} φ_k` from forecast score rows.
pub fn forecast_curves(
    mean: &MeanCurve,
    components: &[Vec<f64>],
    score_forecasts: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    score_forecasts
        .iter()
        .map(|row| fpca::curve_from_scores(mean, components, row))
        .collect()
}
