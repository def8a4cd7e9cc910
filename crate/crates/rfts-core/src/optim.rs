//! Derivative-free simplex minimization with an evaluation budget and
//! jittered restarts, for tuning-parameter search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// true when the budget ran out before the simplex collapsed
    pub budget_exhausted: bool,
}

/// Nelder-Mead with standard coefficients (reflect 1, expand 2, contract
/// 0.5, shrink 0.5). `budget` caps objective evaluations across all
/// `restarts + 1` simplex runs; restarts begin from the incumbent best
/// point, jittered with the seeded generator.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    scale: f64,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    if dim == 0 {
        return Err(Error::Config("cannot optimize over zero dimensions".into()));
    }
    if budget < dim + 2 {
        return Err(Error::Config(format!("budget {budget} too small for dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evals = 0usize;
    let mut best_x = x0.to_vec();
    let mut best_v = f(&best_x);
    evals += 1;
    let mut exhausted = false;

    'runs: for run in 0..=restarts {
        let mut start = best_x.clone();
        if run > 0 {
            for s in start.iter_mut() {
                *s += scale * rng.gen_range(-0.5..0.5);
            }
        }
        // initial simplex: start point plus one perturbed vertex per axis
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let sv = f(&start);
        evals += 1;
        simplex.push((start.clone(), sv));
        for d in 0..dim {
            if evals >= budget {
                exhausted = true;
                break 'runs;
            }
            let mut v = start.clone();
            v[d] += scale;
            let fv = f(&v);
            evals += 1;
            simplex.push((v, fv));
        }

        loop {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            if simplex[0].1 < best_v {
                best_v = simplex[0].1;
                best_x = simplex[0].0.clone();
            }
            let spread = simplex[dim].1 - simplex[0].1;
            let size: f64 = (0..dim)
                .map(|d| (simplex[dim].0[d] - simplex[0].0[d]).abs())
                .fold(0.0, f64::max);
            if spread.abs() < 1e-12 * (1.0 + simplex[0].1.abs()) && size < 1e-8 * (1.0 + scale) {
                break;
            }
            if evals >= budget {
                exhausted = true;
                break 'runs;
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|d| simplex[..dim].iter().map(|(v, _)| v[d]).sum::<f64>() / dim as f64)
                .collect();
            let worst = simplex[dim].clone();
            let reflect: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + (centroid[d] - worst.0[d]))
                .collect();
            let fr = f(&reflect);
            evals += 1;
            if fr < simplex[0].1 {
                if evals >= budget {
                    simplex[dim] = (reflect, fr);
                    continue;
                }
                let expand: Vec<f64> = (0..dim)
                    .map(|d| centroid[d] + 2.0 * (centroid[d] - worst.0[d]))
                    .collect();
                let fe = f(&expand);
                evals += 1;
                simplex[dim] = if fe < fr { (expand, fe) } else { (reflect, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (reflect, fr);
            } else {
                if evals >= budget {
                    exhausted = true;
                    break 'runs;
                }
                let contract: Vec<f64> = (0..dim)
                    .map(|d| centroid[d] + 0.5 * (worst.0[d] - centroid[d]))
                    .collect();
                let fc = f(&contract);
                evals += 1;
                if fc < worst.1 {
                    simplex[dim] = (contract, fc);
                } else {
                    // shrink toward the best vertex
                    let anchor = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        for d in 0..dim {
                            item.0[d] = anchor[d] + 0.5 * (item.0[d] - anchor[d]);
                        }
                        if evals >= budget {
                            exhausted = true;
                            break 'runs;
                        }
                        item.1 = f(&item.0);
                        evals += 1;
                    }
                }
            }
        }
    }

    Ok(OptimResult { x: best_x, value: best_v, evaluations: evals, budget_exhausted: exhausted })
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
