//! Chi-square CDF/quantile and the trimming consistency factors that
//! depend on them.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn chi2_cdf(df: f64, x: f64) -> Result<f64> {
    let dist = ChiSquared::new(df)
        .map_err(|e| Error::Config(format!("bad chi-square df {df}: {e}")))?;
    Ok(dist.cdf(x))
}

/// Quantile at probability `p` (the upper `1-p` tail starts here).
pub fn chi2_quantile(df: f64, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("quantile level {p} outside [0,1)")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let dist = ChiSquared::new(df)
        .map_err(|e| Error::Config(format!("bad chi-square df {df}: {e}")))?;
    // the library inversion is only coarse; polish with Newton on the CDF
    let mut x = dist.inverse_cdf(p).max(f64::MIN_POSITIVE);
    for _ in 0..60 {
        let err = dist.cdf(x) - p;
        if err.abs() < 1e-14 {
            break;
        }
        let dens = statrs::distribution::Continuous::pdf(&dist, x);
        if dens <= 0.0 {
            break;
        }
        x = (x - err / dens).max(x / 2.0);
    }
    Ok(x)
}

/// Consistency factor `(1-α) / F_{χ²_{q+2}}(χ²_{q,1-α})` making trimmed
/// covariance estimates consistent under Gaussian errors. `q` is the
/// response dimension; `alpha` the trimming fraction.
pub fn consistency_factor(q: usize, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("trimming fraction {alpha} outside [0,1)")));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    let q_alpha = chi2_quantile(q as f64, 1.0 - alpha)?;
    let denom = chi2_cdf((q + 2) as f64, q_alpha)?;
    if denom <= 0.0 {
        return Err(Error::Numerical("degenerate consistency denominator".into()));
    }
    Ok((1.0 - alpha) / denom)
}
