//! Forecast scoring (MSFE) and the model confidence set procedure with a
//! moving-block bootstrap null.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-model squared-error losses: row `i` is an evaluation time point,
/// column `ρ` a model.
#[derive(Debug, Clone)]
pub struct LossMatrix {
    pub losses: DMatrix<f64>,
    pub names: Vec<String>,
}

impl LossMatrix {
    pub fn new(losses: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != losses.ncols() {
            return Err(Error::Dimension("model name count != loss columns".into()));
        }
        if losses.nrows() == 0 || losses.ncols() == 0 {
            return Err(Error::Degenerate("empty loss matrix".into()));
        }
        if losses.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("losses must be finite and non-negative".into()));
        }
        Ok(LossMatrix { losses, names })
    }

    pub fn n_eval(&self) -> usize {
        self.losses.nrows()
    }

    pub fn n_models(&self) -> usize {
        self.losses.ncols()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.names).map_err(|e| Error::Data(e.to_string()))?;
        for r in 0..self.n_eval() {
            let row: Vec<String> = (0..self.n_models())
                .map(|c| format!("{}", self.losses[(r, c)]))
                .collect();
            wtr.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("loss CSV record {}: {e}", i + 2)))?;
            let row: Vec<f64> = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::Data(format!("loss CSV record {}: bad number {f:?}", i + 2))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != names.len() {
                return Err(Error::Data(format!(
                    "loss CSV record {}: {} fields, expected {}",
                    i + 2,
                    row.len(),
                    names.len()
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Degenerate("loss CSV has no data rows".into()));
        }
        let m = names.len();
        let losses = DMatrix::from_fn(rows.len(), m, |r, c| rows[r][c]);
        LossMatrix::new(losses, names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum McsStatistic {
    /// range statistic `max |t_{ρξ}|` with elimination `argmax sup t_{ρξ}`
    TR,
    /// max statistic `max t_{ρ·}` with elimination `argmax t_{ρ·}`
    TMax,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BootstrapSpec {
    pub samples: usize,
    /// `None` selects the AR significance rule from the differentials.
    pub block_length: Option<usize>,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec { samples: 5000, block_length: None, seed: 0 }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EliminationStep {
    pub model: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct McsResult {
    pub survivors: Vec<String>,
    pub trace: Vec<EliminationStep>,
    pub statistic: McsStatistic,
    pub level: f64,
    pub block_length: usize,
    pub bootstrap_samples: usize,
}

/// Mean squared forecast error over curves and grid points.
pub fn msfe(forecasts: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<f64> {
    if forecasts.len() != actuals.len() || forecasts.is_empty() {
        return Err(Error::Dimension(format!(
            "{} forecast curves vs {} actual curves",
            forecasts.len(),
            actuals.len()
        )));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (f, a) in forecasts.iter().zip(actuals) {
        if f.len() != a.len() {
            return Err(Error::Dimension("forecast/actual grid size mismatch".into()));
        }
        for (x, y) in f.iter().zip(a) {
            acc += (x - y) * (x - y);
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Pairwise differentials `d_{ρξ,i} = l_{ρ,i} - l_{ξ,i}` (indexed
/// `[ρ][ξ]` as series over `i`) and the relative losses
/// `d_{ρ·,i} = (1/m) Σ_ξ d_{ρξ,i}`, self-term included.
pub fn loss_differentials(l: &LossMatrix) -> Result<(Vec<Vec<Vec<f64>>>, DMatrix<f64>)> {
    let m = l.n_models();
    if m < 2 {
        return Err(Error::Degenerate("differentials need at least 2 models".into()));
    }
    let n = l.n_eval();
    let mut pair = vec![vec![vec![0.0; n]; m]; m];
    for rho in 0..m {
        for xi in 0..m {
            for i in 0..n {
                pair[rho][xi][i] = l.losses[(i, rho)] - l.losses[(i, xi)];
            }
        }
    }
    let mut rel = DMatrix::<f64>::zeros(n, m);
    for rho in 0..m {
        for i in 0..n {
            rel[(i, rho)] = (0..m).map(|xi| pair[rho][xi][i]).sum::<f64>() / m as f64;
        }
    }
    Ok((pair, rel))
}

/// Moving-block resample indices: enough whole blocks to cover `n`, then
/// truncated.
fn block_resample(rng: &mut ChaCha8Rng, n: usize, block: usize) -> Vec<usize> {
    let block = block.min(n);
    let mut idx = Vec::with_capacity(n + block);
    while idx.len() < n {
        let start = rng.gen_range(0..=n - block);
        idx.extend(start..start + block);
    }
    idx.truncate(n);
    idx
}

/// Bootstrap variance of the sample mean of a series under moving-block
/// resampling.
pub fn bootstrap_variance(series: &[f64], samples: usize, block: usize, seed: u64) -> Result<f64> {
    let n = series.len();
    if block < 1 || samples < 1 {
        return Err(Error::Config("bootstrap needs block >= 1 and samples >= 1".into()));
    }
    if n < block {
        return Err(Error::Degenerate(format!(
            "series of length {n} shorter than block length {block}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(samples);
    for _ in 0..samples {
        let idx = block_resample(&mut rng, n, block);
        let m: f64 = idx.iter().map(|&i| series[i]).sum::<f64>() / n as f64;
        means.push(m);
    }
    let grand: f64 = means.iter().sum::<f64>() / samples as f64;
    Ok(means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / samples as f64)
}

/// AR(p)-based block length: for every pairwise differential series and
/// p = 1..10, count AR coefficients significant at the 5% level; the
/// block length is the largest count seen, floored at 1.
pub fn ar_block_length(pair: &[Vec<Vec<f64>>]) -> usize {
    let m = pair.len();
    let mut best = 1usize;
    for rho in 0..m {
        for xi in rho + 1..m {
            let series = &pair[rho][xi];
            for p in 1..=10usize {
                if let Some(count) = significant_ar_coefficients(series, p) {
                    best = best.max(count);
                }
            }
        }
    }
    best
}

/// OLS AR(p) fit with intercept; returns the number of lag coefficients
/// with |t| > 1.96, or `None` when the regression is infeasible.
fn significant_ar_coefficients(series: &[f64], p: usize) -> Option<usize> {
    let n = series.len();
    if n < p + (p + 2) {
        return None;
    }
    let rows = n - p;
    let q = p + 1;
    let mut x = DMatrix::<f64>::zeros(rows, q);
    let mut y = DMatrix::<f64>::zeros(rows, 1);
    for r in 0..rows {
        x[(r, 0)] = 1.0;
        for lag in 1..=p {
            x[(r, lag)] = series[r + p - lag];
        }
        y[(r, 0)] = series[r + p];
    }
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse()?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let dof = rows.checked_sub(q)?;
    if dof == 0 {
        return None;
    }
    let s2 = resid.norm_squared() / dof as f64;
    let mut count = 0;
    for j in 1..q {
        let se = (s2 * inv[(j, j)]).sqrt();
        if se > 0.0 && (beta[(j, 0)] / se).abs() > 1.96 {
            count += 1;
        }
    }
    Some(count)
}

fn t_ratio(mean: f64, var: f64) -> f64 {
    if var > 0.0 {
        mean / var.sqrt()
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

/// Sequential MCS: test equal predictive ability over the current set,
/// eliminate the worst model while the hypothesis is rejected at the
/// given confidence level, return the surviving set.
pub fn mcs(
    l: &LossMatrix,
    level: f64,
    statistic: McsStatistic,
    bootstrap: &BootstrapSpec,
) -> Result<McsResult> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Config(format!("confidence level {level} outside [0, 1)")));
    }
    let m = l.n_models();
    if m < 2 {
        return Err(Error::Degenerate("MCS needs at least 2 models".into()));
    }
    let n = l.n_eval();
    let (pair, _) = loss_differentials(l)?;
    let block = bootstrap.block_length.unwrap_or_else(|| ar_block_length(&pair)).min(n);
    let b = bootstrap.samples;
    // common resample index sets: shared across series so every statistic
    // is evaluated on the same bootstrap worlds, and independent of model
    // labeling
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
    let resamples: Vec<Vec<usize>> = (0..b).map(|_| block_resample(&mut rng, n, block)).collect();

    let mut active: Vec<usize> = (0..m).collect();
    let mut trace = Vec::new();
    let alpha = 1.0 - level;

    while active.len() >= 2 {
        let k = active.len();
        // observed and bootstrap means of every pairwise differential
        let mut mean = vec![vec![0.0; k]; k];
        let mut boot = vec![vec![vec![0.0; b]; k]; k];
        for a in 0..k {
            for c in a + 1..k {
                let series = &pair[active[a]][active[c]];
                let mu: f64 = series.iter().sum::<f64>() / n as f64;
                mean[a][c] = mu;
                mean[c][a] = -mu;
                for (bi, idx) in resamples.iter().enumerate() {
                    let v: f64 = idx.iter().map(|&i| series[i]).sum::<f64>() / n as f64;
                    boot[a][c][bi] = v;
                    boot[c][a][bi] = -v;
                }
            }
        }
        let var_pair: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|c| {
                        if a == c {
                            return 0.0;
                        }
                        boot[a][c].iter().map(|v| (v - mean[a][c]).powi(2)).sum::<f64>()
                            / b as f64
                    })
                    .collect()
            })
            .collect();

        let (observed, null, worst) = match statistic {
            McsStatistic::TR => {
                let mut obs = 0.0;
                for a in 0..k {
                    for c in a + 1..k {
                        obs = f64::max(obs, t_ratio(mean[a][c], var_pair[a][c]).abs());
                    }
                }
                let null: Vec<f64> = (0..b)
                    .map(|bi| {
                        let mut t = 0.0;
                        for a in 0..k {
                            for c in a + 1..k {
                                t = f64::max(
                                    t,
                                    t_ratio(boot[a][c][bi] - mean[a][c], var_pair[a][c]).abs(),
                                );
                            }
                        }
                        t
                    })
                    .collect();
                let mut worst = 0usize;
                let mut worst_val = f64::NEG_INFINITY;
                for a in 0..k {
                    let sup = (0..k)
                        .filter(|&c| c != a)
                        .map(|c| t_ratio(mean[a][c], var_pair[a][c]))
                        .fold(f64::NEG_INFINITY, f64::max);
                    if sup > worst_val {
                        worst_val = sup;
                        worst = a;
                    }
                }
                (obs, null, worst)
            }
            McsStatistic::TMax => {
                let rel_mean: Vec<f64> =
                    (0..k).map(|a| (0..k).map(|c| mean[a][c]).sum::<f64>() / k as f64).collect();
                let rel_boot: Vec<Vec<f64>> = (0..k)
                    .map(|a| {
                        (0..b)
                            .map(|bi| (0..k).map(|c| boot[a][c][bi]).sum::<f64>() / k as f64)
                            .collect()
                    })
                    .collect();
                let rel_var: Vec<f64> = (0..k)
                    .map(|a| {
                        rel_boot[a].iter().map(|v| (v - rel_mean[a]).powi(2)).sum::<f64>()
                            / b as f64
                    })
                    .collect();
                let t_obs: Vec<f64> =
                    (0..k).map(|a| t_ratio(rel_mean[a], rel_var[a])).collect();
                let obs = t_obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let null: Vec<f64> = (0..b)
                    .map(|bi| {
                        (0..k)
                            .map(|a| t_ratio(rel_boot[a][bi] - rel_mean[a], rel_var[a]))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect();
                let mut worst = 0usize;
                for a in 1..k {
                    if t_obs[a] > t_obs[worst] {
                        worst = a;
                    }
                }
                (obs, null, worst)
            }
        };

        let p_value = null.iter().filter(|&&t| t >= observed).count() as f64 / b as f64;
        if p_value < alpha {
            trace.push(EliminationStep {
                model: l.names[active[worst]].clone(),
                statistic: observed,
                p_value,
            });
            active.remove(worst);
        } else {
            break;
        }
    }

    Ok(McsResult {
        survivors: active.iter().map(|&i| l.names[i].clone()).collect(),
        trace,
        statistic,
        level,
        block_length: block,
        bootstrap_samples: b,
    })
}
