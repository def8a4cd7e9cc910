//! Lag autocovariance surfaces and the kernel-sandwich long-run covariance
//! estimator for centered functional time series.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fcurve::{FunctionalTimeSeries, Grid};

/// Discretized lag-ϑ autocovariance surface; entry `(a, b)` pairs grid
/// point `a` of the leading curve with grid point `b` of the lagged one.
#[derive(Debug, Clone)]
pub struct AutocovSurface {
    pub lag: i64,
    pub surface: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    FlatTop,
    Bartlett,
    Parzen,
}

/// Symmetric weight function with bounded support, plus its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn bartlett(bandwidth: f64) -> Self {
        KernelSpec { family: KernelFamily::Bartlett, bandwidth }
    }

    /// Support bound `m`: the weight vanishes for `|u| > m`.
    pub fn support(&self) -> f64 {
        match self.family {
            KernelFamily::Bartlett | KernelFamily::Parzen => 1.0,
            KernelFamily::FlatTop => 1.1,
        }
    }
}

/// Long-run (or lag-0) covariance surface with the kernel that produced it.
#[derive(Debug, Clone)]
pub struct CovarianceSurface {
    pub grid: Grid,
    pub surface: DMatrix<f64>,
    pub kernel: Option<KernelSpec>,
}

impl CovarianceSurface {
    /// Clip negative eigenvalues of the discretized surface to zero.
    /// Finite-sample kernel sums need not be PSD; FPCA requires it.
    pub fn psd_clipped(&self) -> CovarianceSurface {
        let sym = (&self.surface + self.surface.transpose()) / 2.0;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let p = self.surface.nrows();
        let mut out = DMatrix::<f64>::zeros(p, p);
        for k in 0..p {
            let lam = eig.eigenvalues[k];
            if lam > 0.0 {
                let v = eig.eigenvectors.column(k);
                out += lam * &v * v.transpose();
            }
        }
        // re-symmetrize against roundoff from the rank-1 accumulation
        let out = (&out + out.transpose()) / 2.0;
        CovarianceSurface { grid: self.grid.clone(), surface: out, kernel: self.kernel }
    }
}

/// Lag-ϑ autocovariance estimate from a centered series: the two-branch
/// sum over `j` with divisor `n`, for either sign of ϑ.
pub fn autocov(xc: &FunctionalTimeSeries, lag: i64) -> Result<AutocovSurface> {
    let n = xc.len() as i64;
    if lag.abs() >= n {
        return Err(Error::Degenerate(format!("empty sum: |lag| {} >= n {}", lag.abs(), n)));
    }
    let p = xc.grid().len();
    let mut surface = DMatrix::<f64>::zeros(p, p);
    let (j_start, j_end) = if lag >= 0 { (0, n - lag) } else { (-lag, n) };
    for j in j_start..j_end {
        let lead = xc.curve(j as usize);
        let lagged = xc.curve((j + lag) as usize);
        for a in 0..p {
            for b in 0..p {
                surface[(a, b)] += lead[a] * lagged[b];
            }
        }
    }
    surface /= n as f64;
    Ok(AutocovSurface { lag, surface })
}

/// Kernel weight `W(ϑ / h)`.
pub fn kernel_weight(spec: &KernelSpec, lag: i64) -> f64 {
    let u = (lag as f64 / spec.bandwidth).abs();
    match spec.family {
        KernelFamily::Bartlett => {
            if u < 1.0 {
                1.0 - u
            } else {
                0.0
            }
        }
        KernelFamily::Parzen => {
            if u <= 0.5 {
                1.0 - 6.0 * u * u + 6.0 * u * u * u
            } else if u <= 1.0 {
                2.0 * (1.0 - u).powi(3)
            } else {
                0.0
            }
        }
        KernelFamily::FlatTop => {
            if u <= 0.1 {
                1.0
            } else if u <= 1.1 {
                1.1 - u
            } else {
                0.0
            }
        }
    }
}

/// Kernel-sandwich long-run covariance: the weighted sum of lag
/// autocovariances over lags with nonzero weight, symmetrized.
pub fn long_run_cov(xc: &FunctionalTimeSeries, spec: &KernelSpec) -> Result<CovarianceSurface> {
    if xc.len() < 2 {
        return Err(Error::Degenerate("long_run_cov needs n >= 2".into()));
    }
    if !(spec.bandwidth > 0.0) {
        return Err(Error::Config("bandwidth must be positive".into()));
    }
    let n = xc.len() as i64;
    // largest lag with W(lag/h) possibly nonzero
    let max_lag = ((spec.support() * spec.bandwidth).ceil() as i64).min(n - 1);
    let p = xc.grid().len();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    let mut any = false;
    for lag in -max_lag..=max_lag {
        let w = kernel_weight(spec, lag);
        if w == 0.0 {
            continue;
        }
        any = true;
        acc += w * autocov(xc, lag)?.surface;
    }
    if !any {
        return Err(Error::Config("kernel support excludes every lag".into()));
    }
    let sym = (&acc + acc.transpose()) / 2.0;
    Ok(CovarianceSurface { grid: xc.grid().clone(), surface: sym, kernel: Some(*spec) })
}

/// Deterministic default bandwidth rule `h = n^{1/3}`; an explicit
/// override passes through unchanged.
pub fn select_bandwidth(n: usize, override_h: Option<f64>) -> Result<f64> {
    if let Some(h) = override_h {
        if !(h > 0.0) {
            return Err(Error::Config("bandwidth override must be positive".into()));
        }
        return Ok(h);
    }
    if n < 10 {
        return Err(Error::Degenerate(format!("n = {n} too small for bandwidth selection")));
    }
    Ok((n as f64).powf(1.0 / 3.0))
}
