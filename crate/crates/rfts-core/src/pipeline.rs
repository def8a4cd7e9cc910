//! Experiment orchestration: method definitions, validation tuning,
//! expanding-window evaluation, and the replicated simulation study.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fcurve::{self, FunctionalTimeSeries};
use crate::fpca::{self, PrincipalDecomposition};
use crate::longrun::{select_bandwidth, KernelSpec};
use crate::mcs;
use crate::optim::{self, inv_logit, logit};
use crate::robust;
use crate::sim::{contaminate, simulate_far1, ContaminationShape, ContaminationSpec, FarSpec};
use crate::var::{self, EstimatorKind, VarFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpcaKind {
    /// classical decomposition of the lag-0 covariance
    StaticClassical,
    /// robust initial fit, outlier down-weighting, long-run covariance
    RobustDynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tunables {
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl Default for Tunables {
    fn default() -> Self {
        Tunables { k: 3, lambda: 3.0, alpha: 0.25, delta: 0.01 }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub fpca: FpcaKind,
    pub estimator: EstimatorKind,
}

impl MethodSpec {
    pub fn new(name: &str, fpca: FpcaKind, estimator: EstimatorKind) -> Self {
        MethodSpec { name: name.to_string(), fpca, estimator }
    }

    /// The four compared methods: static FPCA with OLS scores, and the
    /// robust dynamic decomposition with OLS, MLTS and RMLTS scores.
    pub fn standard_four() -> Vec<MethodSpec> {
        vec![
            MethodSpec::new("FPCA", FpcaKind::StaticClassical, EstimatorKind::Ols),
            MethodSpec::new("RFPCA", FpcaKind::RobustDynamic, EstimatorKind::Ols),
            MethodSpec::new("MLTS", FpcaKind::RobustDynamic, EstimatorKind::Mlts),
            MethodSpec::new("RMLTS", FpcaKind::RobustDynamic, EstimatorKind::Rmlts),
        ]
    }

    fn uses_lambda(&self) -> bool {
        self.fpca == FpcaKind::RobustDynamic
    }

    fn uses_alpha(&self) -> bool {
        matches!(self.estimator, EstimatorKind::Mlts | EstimatorKind::Rmlts)
    }

    fn uses_delta(&self) -> bool {
        self.estimator == EstimatorKind::Rmlts
    }
}

/// Contiguous index ranges `0..train_end` (training),
/// `train_end..validation_end` (validation), `validation_end..test_end`
/// (test), with one-step-ahead evaluation.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EvaluationPlan {
    pub train_end: usize,
    pub validation_end: usize,
    pub test_end: usize,
}

impl EvaluationPlan {
    pub fn new(train_end: usize, validation_end: usize, test_end: usize) -> Result<Self> {
        if train_end == 0 || train_end >= validation_end || validation_end >= test_end {
            return Err(Error::Config(format!(
                "plan ranges must be ordered and nonempty: {train_end}, {validation_end}, {test_end}"
            )));
        }
        Ok(EvaluationPlan { train_end, validation_end, test_end })
    }

    pub fn test_len(&self) -> usize {
        self.test_end - self.validation_end
    }
}

/// A method fitted on a training window: decomposition plus the VAR on
/// its scores.
#[derive(Debug, Clone)]
pub struct FittedMethod {
    pub decomposition: PrincipalDecomposition,
    pub var_fit: VarFit,
    pub order: usize,
}

fn intercept_only_fallback(scores: &DMatrix<f64>, estimator: EstimatorKind) -> VarFit {
    let k = scores.ncols();
    let n = scores.nrows();
    let mut coefficients = DMatrix::<f64>::zeros(k + 1, k);
    for c in 0..k {
        coefficients[(0, c)] = scores.column(c).sum() / n as f64;
    }
    VarFit {
        estimator,
        order: 1,
        coefficients,
        sigma: DMatrix::identity(k, k) * 1e-12,
        subset: None,
        alpha: None,
        delta: None,
        bic: None,
    }
}

/// Fit one method on a training series with the given tunables. VAR order
/// is chosen by the estimator's own BIC over `1..=max_order`.
pub fn fit_method(
    x: &FunctionalTimeSeries,
    method: &MethodSpec,
    t: &Tunables,
    max_order: usize,
    seed: u64,
) -> Result<FittedMethod> {
    let n = x.len();
    let p = x.grid().len();
    let k = t.k.clamp(1, fpca::k_search_bound(p, n));
    let decomposition = match method.fpca {
        FpcaKind::StaticClassical => {
            let mean = fcurve::mean_curve(x, None)?;
            let xc = fcurve::center(x, &mean)?;
            let surface = fpca::static_covariance(&xc)?;
            fpca::fit(x, &surface, k)?
        }
        FpcaKind::RobustDynamic => {
            let kernel = KernelSpec::bartlett(select_bandwidth(n, None)?);
            robust::robust_fpca(x, k, t.lambda, Some(&kernel))?
        }
    };
    let scores = decomposition.scores.clone();
    let fitted = var::select_order(&scores, max_order, method.estimator, t.alpha, t.delta, seed);
    let (order, var_fit) = match fitted {
        Ok((order, f)) => (order, f),
        // degenerate score processes (e.g. constant curves) have singular
        // designs; fall back to forecasting the score mean
        Err(Error::Singular(_)) | Err(Error::Degenerate(_)) => {
            (1, intercept_only_fallback(&scores, method.estimator))
        }
        Err(e) => return Err(e),
    };
    Ok(FittedMethod { decomposition, var_fit, order })
}

/// One-step-ahead curve forecasts for each target index: score history is
/// projected from the observed curves preceding the target, so a forecast
/// at index `i` depends only on the fit and on curves `< i`.
pub fn one_step_forecasts(
    fitted: &FittedMethod,
    data: &FunctionalTimeSeries,
    targets: std::ops::Range<usize>,
) -> Result<Vec<Vec<f64>>> {
    let order = fitted.order;
    if targets.start < order {
        return Err(Error::Config(format!(
            "target index {} needs {} preceding curves",
            targets.start, order
        )));
    }
    if targets.end > data.len() {
        return Err(Error::Dimension("target range exceeds the series".into()));
    }
    let xc = fcurve::center(data, &fitted.decomposition.mean)?;
    let scores = fpca::project_scores(&xc, &fitted.decomposition.components)?;
    let k = scores.ncols();
    let mut out = Vec::with_capacity(targets.len());
    for i in targets {
        let history: Vec<Vec<f64>> = (i - order..i)
            .map(|r| (0..k).map(|c| scores[(r, c)]).collect())
            .collect();
        let beta = var::forecast_scores(&fitted.var_fit, &history, 1)?;
        let curve = var::forecast_curves(
            &fitted.decomposition.mean,
            &fitted.decomposition.components,
            &beta,
        )?;
        out.push(curve.into_iter().next().unwrap());
    }
    Ok(out)
}

const ALPHA_LO: f64 = 0.01;
const ALPHA_HI: f64 = 0.5;
const DELTA_LO: f64 = 0.001;
const DELTA_HI: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
enum Dim {
    K,
    Lambda,
    Alpha,
    Delta,
}

fn encode(t: &Tunables, dims: &[Dim]) -> Vec<f64> {
    dims.iter()
        .map(|d| match d {
            Dim::K => logit((t.k as f64 / 50.0).clamp(0.02, 0.98)),
            Dim::Lambda => t.lambda.ln(),
            Dim::Alpha => logit(((t.alpha - ALPHA_LO) / (ALPHA_HI - ALPHA_LO)).clamp(0.001, 0.999)),
            Dim::Delta => logit(((t.delta - DELTA_LO) / (DELTA_HI - DELTA_LO)).clamp(0.001, 0.999)),
        })
        .collect()
}

fn decode(theta: &[f64], dims: &[Dim], base: &Tunables, k_max: usize) -> Tunables {
    let mut t = *base;
    for (v, d) in theta.iter().zip(dims) {
        match d {
            Dim::K => t.k = ((50.0 * inv_logit(*v)).round() as usize).clamp(1, k_max),
            Dim::Lambda => t.lambda = v.exp(),
            Dim::Alpha => t.alpha = ALPHA_LO + (ALPHA_HI - ALPHA_LO) * inv_logit(*v),
            Dim::Delta => t.delta = DELTA_LO + (DELTA_HI - DELTA_LO) * inv_logit(*v),
        }
    }
    t
}

#[derive(Debug, Clone, Copy)]
pub struct TuneOptions {
    pub budget: usize,
    pub restarts: usize,
    pub max_order: usize,
    /// cap on K during the search (in addition to the data-driven bound)
    pub k_max: Option<usize>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { budget: 200, restarts: 3, max_order: 2, k_max: None }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub tunables: Tunables,
    pub msfe: f64,
    pub budget_exhausted: bool,
    pub evaluations: usize,
}

/// Validation-MSFE minimization over the transformed tunables of a method
/// by the simplex search: fit on the training range, score one-step
/// forecasts over the validation range.
pub fn tune(
    x: &FunctionalTimeSeries,
    method: &MethodSpec,
    plan: &EvaluationPlan,
    opts: &TuneOptions,
    seed: u64,
) -> Result<TuneOutcome> {
    if plan.validation_end > x.len() {
        return Err(Error::Dimension("plan validation range exceeds the series".into()));
    }
    let train = x.slice(0, plan.train_end)?;
    let k_bound = fpca::k_search_bound(x.grid().len(), plan.train_end);
    let k_max = opts.k_max.map_or(k_bound, |m| m.min(k_bound)).max(1);
    let base = Tunables { k: 3.min(k_max), ..Tunables::default() };

    let mut dims = Vec::new();
    if k_max > 1 {
        dims.push(Dim::K);
    }
    if method.uses_lambda() {
        dims.push(Dim::Lambda);
    }
    if method.uses_alpha() {
        dims.push(Dim::Alpha);
    }
    if method.uses_delta() {
        dims.push(Dim::Delta);
    }

    let objective = |t: &Tunables| -> f64 {
        let fitted = match fit_method(&train, method, t, opts.max_order, seed) {
            Ok(f) => f,
            Err(_) => return f64::INFINITY,
        };
        let forecasts =
            match one_step_forecasts(&fitted, x, plan.train_end..plan.validation_end) {
                Ok(f) => f,
                Err(_) => return f64::INFINITY,
            };
        let actual: Vec<Vec<f64>> = (plan.train_end..plan.validation_end)
            .map(|i| x.curve(i).to_vec())
            .collect();
        mcs::msfe(&forecasts, &actual).unwrap_or(f64::INFINITY)
    };

    if dims.is_empty() {
        // every parameter pinned: single candidate
        let value = objective(&base);
        return Ok(TuneOutcome {
            tunables: decode(&[], &dims, &base, k_max),
            msfe: value,
            budget_exhausted: false,
            evaluations: 1,
        });
    }

    let x0 = encode(&base, &dims);
    let result = optim::nelder_mead(
        |theta: &[f64]| objective(&decode(theta, &dims, &base, k_max)),
        &x0,
        1.0,
        opts.budget,
        opts.restarts,
        seed ^ 0x5eed_7u64,
    )?;
    let mut tunables = decode(&result.x, &dims, &base, k_max);
    let mut best = result.value;
    let mut evaluations = result.evaluations;
    // the objective is flat in K past the true rank; walk ties down to the
    // smallest K that achieves the optimum
    if dims.iter().any(|d| matches!(d, Dim::K)) && best.is_finite() {
        while tunables.k > 1 {
            let candidate = Tunables { k: tunables.k - 1, ..tunables };
            let value = objective(&candidate);
            evaluations += 1;
            if value <= best * (1.0 + 1e-9) + 1e-12 {
                tunables = candidate;
                best = best.min(value);
            } else {
                break;
            }
        }
    }
    Ok(TuneOutcome {
        tunables,
        msfe: best,
        budget_exhausted: result.budget_exhausted,
        evaluations,
    })
}

/// Per-step outcome of expanding-window evaluation; failures carry a
/// diagnostic instead of silently dropping the step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub index: usize,
    pub loss: Option<f64>,
    pub forecast: Option<Vec<f64>>,
    pub diagnostic: Option<String>,
}

/// Expanding-window evaluation over the plan's test range: each step refits
/// on every curve before the target and forecasts one step ahead, using
/// tunables fixed from the validation phase.
pub fn run_expanding_window(
    x: &FunctionalTimeSeries,
    method: &MethodSpec,
    plan: &EvaluationPlan,
    tunables: &Tunables,
    max_order: usize,
    seed: u64,
) -> Result<Vec<StepOutcome>> {
    if plan.test_end > x.len() {
        return Err(Error::Dimension("plan test range exceeds the series".into()));
    }
    let steps: Vec<usize> = (plan.validation_end..plan.test_end).collect();
    let outcomes: Vec<StepOutcome> = steps
        .par_iter()
        .map(|&i| {
            let run = || -> Result<(f64, Vec<f64>)> {
                let train = x.slice(0, i)?;
                let fitted = fit_method(&train, method, tunables, max_order, seed)?;
                let fc = one_step_forecasts(&fitted, x, i..i + 1)?;
                let loss = mcs::msfe(&fc, &[x.curve(i).to_vec()])?;
                Ok((loss, fc.into_iter().next().unwrap()))
            };
            match run() {
                Ok((loss, forecast)) => StepOutcome {
                    index: i,
                    loss: Some(loss),
                    forecast: Some(forecast),
                    diagnostic: None,
                },
                Err(e) => StepOutcome {
                    index: i,
                    loss: None,
                    forecast: None,
                    diagnostic: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(outcomes)
}

/// Summary over replications, mirroring the usual seven-row table.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
    pub sd: f64,
}

pub const SUMMARY_ROWS: [&str; 7] =
    ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max.", "sd"];

impl Summary {
    pub fn rows(&self) -> [(&'static str, f64); 7] {
        [
            ("Min.", self.min),
            ("1st Qu.", self.q1),
            ("Median", self.median),
            ("Mean", self.mean),
            ("3rd Qu.", self.q3),
            ("Max.", self.max),
            ("sd", self.sd),
        ]
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("summary needs nonempty finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        mean,
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        sd,
    })
}

/// Splitmix-style seed derivation so parallel streams never share state.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub contamination_rate: f64,
    pub contamination_magnitude: f64,
    pub contamination_shape: ContaminationShape,
    pub replications: usize,
    pub tune: TuneOptions,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub replication: usize,
    /// per method, against the contaminated test curves
    pub contaminated_msfe: Vec<f64>,
    /// per method, against the clean test curves
    pub clean_msfe: Vec<f64>,
    pub tuned: Vec<Tunables>,
}

#[derive(Debug, Clone)]
pub struct SimulationStudyResult {
    pub methods: Vec<String>,
    pub outcomes: Vec<ReplicationOutcome>,
    pub skipped: Vec<(usize, String)>,
}

impl SimulationStudyResult {
    pub fn msfe_column(&self, method: usize, clean: bool) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| if clean { o.clean_msfe[method] } else { o.contaminated_msfe[method] })
            .collect()
    }
}

/// Replicated simulation experiment: simulate, contaminate, tune each
/// method on the validation window, fit on the first 120 curves, forecast
/// the last 80 one step ahead, and score against both the contaminated
/// and the clean test curves. The FAR model's `n` must be 200 to match
/// the window layout. Failed replications are skipped and reported.
pub fn run_simulation_study(
    far: &FarSpec,
    methods: &[MethodSpec],
    config: &StudyConfig,
) -> Result<SimulationStudyResult> {
    if far.n != 200 {
        return Err(Error::Config(format!(
            "simulation study expects n = 200 curves, got {}",
            far.n
        )));
    }
    if methods.is_empty() || config.replications == 0 {
        return Err(Error::Config("study needs methods and replications".into()));
    }
    let plan = EvaluationPlan::new(60, 120, 200)?;
    let results: Vec<std::result::Result<ReplicationOutcome, (usize, String)>> = (0..config
        .replications)
        .into_par_iter()
        .map(|rep| {
            let run = || -> Result<ReplicationOutcome> {
                let sim_seed = derive_seed(config.seed, 2 * rep as u64);
                let clean = simulate_far1(far, sim_seed)?;
                let cspec = ContaminationSpec::new(
                    config.contamination_rate,
                    config.contamination_magnitude,
                    config.contamination_shape,
                    derive_seed(config.seed, 2 * rep as u64 + 1),
                )?;
                let (data, _outliers) = contaminate(&clean, &cspec)?;
                let mut contaminated_msfe = Vec::with_capacity(methods.len());
                let mut clean_msfe = Vec::with_capacity(methods.len());
                let mut tuned = Vec::with_capacity(methods.len());
                for (mi, method) in methods.iter().enumerate() {
                    let mseed = derive_seed(sim_seed, 100 + mi as u64);
                    let outcome = tune(&data, method, &plan, &config.tune, mseed)?;
                    let fit_train = data.slice(0, plan.validation_end)?;
                    let fitted = fit_method(
                        &fit_train,
                        method,
                        &outcome.tunables,
                        config.tune.max_order,
                        mseed,
                    )?;
                    let forecasts =
                        one_step_forecasts(&fitted, &data, plan.validation_end..plan.test_end)?;
                    let test_dirty: Vec<Vec<f64>> = (plan.validation_end..plan.test_end)
                        .map(|i| data.curve(i).to_vec())
                        .collect();
                    let test_clean: Vec<Vec<f64>> = (plan.validation_end..plan.test_end)
                        .map(|i| clean.curve(i).to_vec())
                        .collect();
                    contaminated_msfe.push(mcs::msfe(&forecasts, &test_dirty)?);
                    clean_msfe.push(mcs::msfe(&forecasts, &test_clean)?);
                    tuned.push(outcome.tunables);
                }
                Ok(ReplicationOutcome { replication: rep, contaminated_msfe, clean_msfe, tuned })
            };
            run().map_err(|e| (rep, e.to_string()))
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(s) => skipped.push(s),
        }
    }
    outcomes.sort_by_key(|o| o.replication);
    skipped.sort();
    if outcomes.is_empty() {
        return Err(Error::Numerical(format!(
            "all {} replications failed; first: {}",
            config.replications,
            skipped
                .first()
                .map(|(_, m)| m.as_str())
                .unwrap_or("unknown")
        )));
    }
    Ok(SimulationStudyResult {
        methods: methods.iter().map(|m| m.name.clone()).collect(),
        outcomes,
        skipped,
    })
}
