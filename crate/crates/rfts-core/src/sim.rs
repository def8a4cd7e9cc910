//! FAR(1) simulation on a Fourier basis, with optional additive outlier
//! contamination of a random subset of curves.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fcurve::{FunctionalTimeSeries, Grid};

/// First-order functional autoregression in coefficient space:
/// `c_i = Ψ c_{i-1} + A_i` with independent `A_{i,l} ~ N(0, σ_l²)`,
/// mapped to curves through the first `D` Fourier basis functions.
#[derive(Debug, Clone)]
pub struct FarSpec {
    pub dim: usize,
    pub psi: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub burn_in: usize,
    pub n: usize,
    pub grid: Grid,
}

impl FarSpec {
    pub fn new(psi: DMatrix<f64>, sigma: Vec<f64>, n: usize, grid: Grid) -> Result<Self> {
        let dim = psi.nrows();
        if psi.ncols() != dim {
            return Err(Error::Dimension(format!(
                "operator matrix is {}x{}, must be square",
                psi.nrows(),
                psi.ncols()
            )));
        }
        if sigma.len() != dim {
            return Err(Error::Dimension("innovation scale count != basis dimension".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("innovation scales must be positive".into()));
        }
        if n == 0 {
            return Err(Error::Config("sample length must be positive".into()));
        }
        Ok(FarSpec { dim, psi, sigma, burn_in: 10, n, grid })
    }

    /// The operator matrix used in the contamination experiments:
    /// moderately dependent, spectral radius below one.
    pub fn reference_psi() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[-0.05, -0.23, 0.76, 0.80, -0.05, 0.04, 0.04, 0.76, 0.23],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContaminationShape {
    ConstantShift,
    RandomBasisShift,
}

/// Additive outlier contamination: `⌊rate·n⌋` curves drawn without
/// replacement get a shift of the given magnitude.
#[derive(Debug, Clone)]
pub struct ContaminationSpec {
    pub rate: f64,
    pub magnitude: f64,
    pub shape: ContaminationShape,
    pub seed: u64,
}

impl ContaminationSpec {
    pub fn new(rate: f64, magnitude: f64, shape: ContaminationShape, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&rate) {
            return Err(Error::Config(format!("contamination rate {rate} outside [0, 0.5]")));
        }
        Ok(ContaminationSpec { rate, magnitude, shape, seed })
    }
}

/// Orthonormal Fourier system on [0, 1] in the fixed ordering
/// `1, √2 sin(2πt), √2 cos(2πt), √2 sin(4πt), √2 cos(4πt), …`.
pub fn fourier_basis(dim: usize, grid: &Grid) -> Result<Vec<Vec<f64>>> {
    if dim < 1 {
        return Err(Error::Config("basis dimension must be >= 1".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let sqrt2 = 2f64.sqrt();
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let curve: Vec<f64> = if j == 0 {
            grid.points().iter().map(|_| 1.0).collect()
        } else {
            let m = ((j + 1) / 2) as f64;
            if j % 2 == 1 {
                grid.points().iter().map(|t| sqrt2 * (two_pi * m * t).sin()).collect()
            } else {
                grid.points().iter().map(|t| sqrt2 * (two_pi * m * t).cos()).collect()
            }
        };
        out.push(curve);
    }
    Ok(out)
}

/// Gelfand estimate `‖M^k‖_F^{1/k}`; an upper bound that converges to the
/// spectral radius, accurate enough for a stationarity warning.
fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    // six squarings give M^64; norms are pulled out at each step to dodge
    // overflow, then recombined on the log scale
    let mut q = m.clone();
    let mut log_norm = 0.0;
    for _ in 0..6 {
        q = &q * &q;
        let norm = q.norm();
        if norm == 0.0 {
            return 0.0;
        }
        log_norm = 2.0 * log_norm + norm.ln();
        q /= norm;
    }
    (log_norm / 64.0).exp()
}

/// Generate `n` curves from the FAR(1) recursion. The initial coefficient
/// state is standard normal, the first `burn_in` states are discarded, and
/// the draw sequence is strictly temporal so that longer runs extend
/// shorter ones under the same seed.
pub fn simulate_far1(spec: &FarSpec, seed: u64) -> Result<FunctionalTimeSeries> {
    let rho = spectral_radius(&spec.psi);
    if rho >= 1.0 {
        eprintln!("warning: FAR operator spectral radius {rho:.3} >= 1; series is nonstationary");
    }
    let basis = fourier_basis(spec.dim, &spec.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let mut c = DMatrix::<f64>::zeros(d, 1);
    for l in 0..d {
        let z: f64 = StandardNormal.sample(&mut rng);
        c[(l, 0)] = z;
    }
    let mut curves = Vec::with_capacity(spec.n);
    let emit = |c: &DMatrix<f64>, curves: &mut Vec<Vec<f64>>| {
        let mut row = vec![0.0; spec.grid.len()];
        for l in 0..d {
            for (v, b) in row.iter_mut().zip(&basis[l]) {
                *v += c[(l, 0)] * b;
            }
        }
        curves.push(row);
    };
    let mut produced = 0usize;
    if spec.burn_in == 0 {
        emit(&c, &mut curves);
        produced = 1;
    }
    let mut state_index = 1usize;
    while produced < spec.n {
        let mut next = &spec.psi * &c;
        for l in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            next[(l, 0)] += spec.sigma[l] * z;
        }
        c = next;
        state_index += 1;
        if state_index > spec.burn_in {
            emit(&c, &mut curves);
            produced += 1;
        }
    }
    FunctionalTimeSeries::new(spec.grid.clone(), curves)
}

/// Apply additive outliers to a random subset of curves; returns the
/// modified series and the sorted ground-truth outlier index set.
pub fn contaminate(
    x: &FunctionalTimeSeries,
    spec: &ContaminationSpec,
) -> Result<(FunctionalTimeSeries, Vec<usize>)> {
    let n = x.len();
    let count = (spec.rate * n as f64).floor() as usize;
    if count == 0 {
        return Ok((x.clone(), Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut indices: Vec<usize> = sample(&mut rng, n, count).into_vec();
    indices.sort_unstable();
    let p = x.grid().len();
    let shift: Vec<f64> = match spec.shape {
        ContaminationShape::ConstantShift => vec![spec.magnitude; p],
        ContaminationShape::RandomBasisShift => {
            // unit-norm random combination of the leading basis functions,
            // scaled by the magnitude
            let d = 5usize;
            let basis = fourier_basis(d, x.grid())?;
            let coef: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm: f64 = coef.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let mut s = vec![0.0; p];
            for (cl, b) in coef.iter().zip(&basis) {
                for (si, bi) in s.iter_mut().zip(b) {
                    *si += spec.magnitude * cl / norm * bi;
                }
            }
            s
        }
    };
    let mut values: Vec<Vec<f64>> = x.curves().to_vec();
    for &i in &indices {
        for (v, s) in values[i].iter_mut().zip(&shift) {
            *v += s;
        }
    }
    let out = FunctionalTimeSeries::with_labels(
        x.grid().clone(),
        values,
        x.labels().map(|l| l.to_vec()),
    )?;
    Ok((out, indices))
}
