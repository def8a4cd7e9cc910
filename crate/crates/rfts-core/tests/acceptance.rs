//! Release gate: the checks a build must pass before it ships. Each
//! criterion prints one line; the suite fails if any line fails. Oracles
//! here are written from scratch against the definitions, not by calling
//! back into the library code they verify.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rfts_core::fcurve::{self, FunctionalTimeSeries, Grid};
use rfts_core::fpca;
use rfts_core::longrun::{kernel_weight, long_run_cov, CovarianceSurface, KernelSpec};
use rfts_core::mcs::{self, BootstrapSpec, LossMatrix, McsStatistic};
use rfts_core::pipeline::{
    run_simulation_study, tune, EvaluationPlan, MethodSpec, StudyConfig, TuneOptions,
};
use rfts_core::robust::{qn_correction, qn_dispersion, robust_fpca};
use rfts_core::sim::{simulate_far1, contaminate, ContaminationShape, ContaminationSpec, FarSpec};
use rfts_core::var::{self, build_design, EstimatorKind};
use rfts_core::chi2;

type CheckResult = Result<(), String>;

fn fail(msg: impl Into<String>) -> CheckResult {
    Err(msg.into())
}

// ---------------------------------------------------------------- 1

fn check_correction_table() -> CheckResult {
    let table = [
        (2, 0.399),
        (3, 0.994),
        (4, 0.512),
        (5, 0.844),
        (6, 0.611),
        (7, 0.857),
        (8, 0.669),
        (9, 0.872),
    ];
    for (n, want) in table {
        let got = qn_correction(n);
        if got != want {
            return fail(format!("c_{n} = {got}, want {want}"));
        }
    }
    for n in 10..200usize {
        let want = if n % 2 == 1 {
            n as f64 / (n as f64 + 1.4)
        } else {
            n as f64 / (n as f64 + 3.8)
        };
        let got = qn_correction(n);
        if (got - want).abs() > 1e-15 {
            return fail(format!("c_{n} = {got}, want parity value {want}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- 2

/// Scale oracle straight from the definition: the tau-th smallest of all
/// pairwise absolute differences, tau = C(floor(n/2) + 1, 2), scaled by
/// 2.2219 c_n.
fn dispersion_oracle(x: &[f64]) -> f64 {
    let n = x.len();
    let mut diffs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j {
                diffs.push((x[i] - x[j]).abs());
            }
        }
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = n / 2;
    let tau = (h + 1) * h / 2;
    2.2219 * qn_correction(n) * diffs[tau - 1]
}

fn check_dispersion_oracle() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..200 {
        let n = rng.gen_range(2..=40usize);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let got = qn_dispersion(&x).map_err(|e| format!("case {case}: {e}"))?;
        let want = dispersion_oracle(&x);
        if (got - want).abs() > 1e-10 {
            return fail(format!("case {case} (n = {n}): {got} vs oracle {want}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- 3

/// Naive long-run covariance: for every lag with nonzero weight, sum the
/// lag products curve by curve, divide by n, weight, accumulate, then
/// symmetrize. Triple loop, no shared code with the estimator.
fn long_run_oracle(x: &[Vec<f64>], spec: &KernelSpec) -> DMatrix<f64> {
    let n = x.len() as i64;
    let p = x[0].len();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    for lag in -(n - 1)..=(n - 1) {
        let w = kernel_weight(spec, lag);
        if w == 0.0 {
            continue;
        }
        let mut gamma = DMatrix::<f64>::zeros(p, p);
        for j in 0..n {
            let jl = j + lag;
            if jl < 0 || jl >= n {
                continue;
            }
            for a in 0..p {
                for b in 0..p {
                    gamma[(a, b)] += x[j as usize][a] * x[jl as usize][b];
                }
            }
        }
        acc += w / n as f64 * gamma;
    }
    (&acc + acc.transpose()) / 2.0
}

fn check_long_run_oracle() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for n in 2..=6usize {
        for p in 2..=4usize {
            for trial in 0..4 {
                let grid = Grid::uniform(0.0, 1.0, p).unwrap();
                let values: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect();
                let series = FunctionalTimeSeries::new(grid, values.clone()).unwrap();
                for bw in [1.0, 2.5, 6.0] {
                    let spec = KernelSpec::bartlett(bw);
                    let got = long_run_cov(&series, &spec)
                        .map_err(|e| format!("n={n} p={p}: {e}"))?;
                    let want = long_run_oracle(&values, &spec);
                    let diff = (&got.surface - &want).abs().max();
                    if diff > 1e-12 {
                        return fail(format!(
                            "n={n} p={p} trial={trial} bw={bw}: max deviation {diff:.3e}"
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- 4

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance the rightmost index that can still move
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - (k - i) {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Determinant of the raw subset residual covariance under a from-scratch
/// least-squares solve. Divisor fixed at |rows| - q so subsets of equal
/// size are comparable.
fn subset_det(design: &DMatrix<f64>, response: &DMatrix<f64>, rows: &[usize]) -> Option<f64> {
    let q = design.ncols();
    let k = response.ncols();
    if rows.len() <= q {
        return None;
    }
    let mut x = DMatrix::<f64>::zeros(rows.len(), q);
    let mut y = DMatrix::<f64>::zeros(rows.len(), k);
    for (r, &idx) in rows.iter().enumerate() {
        x.set_row(r, &design.row(idx));
        y.set_row(r, &response.row(idx));
    }
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse()?;
    let b = inv * x.transpose() * &y;
    let resid = &y - &x * &b;
    let sigma = resid.transpose() * &resid / (rows.len() - q) as f64;
    Some(sigma.determinant())
}

fn check_trimmed_subset_oracle() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut hits = 0usize;
    let fixtures = 50usize;
    for fixture in 0..fixtures {
        // AR(1) scores, one dimension, with two gross outliers
        let n = rng.gen_range(11..=13usize); // design rows n - 1 <= 12
        let mut scores = DMatrix::<f64>::zeros(n, 1);
        let mut s = 0.0f64;
        for i in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            s = 0.6 * s + e;
            scores[(i, 0)] = s;
        }
        for _ in 0..2 {
            let at = rng.gen_range(1..n);
            scores[(at, 0)] += 12.0 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }

        let alpha = 0.25;
        let d = build_design(&scores, 1).unwrap();
        let rows = d.rows();
        let h = ((1.0 - alpha) * rows as f64).ceil() as usize;
        let mut best = f64::INFINITY;
        for subset in combinations(rows, h) {
            if let Some(det) = subset_det(&d.design, &d.response, &subset) {
                if det < best {
                    best = det;
                }
            }
        }
        let fit = var::mlts_fit(&d, alpha, 1000 + fixture as u64)
            .map_err(|e| format!("fixture {fixture}: {e}"))?;
        let subset = fit.subset.clone().ok_or("missing subset")?;
        let got = subset_det(&d.design, &d.response, &subset)
            .ok_or_else(|| format!("fixture {fixture}: singular subset fit"))?;
        let tol = best.abs().max(1e-12) * 1e-9;
        if got < best - tol {
            return fail(format!(
                "fixture {fixture}: concentration determinant {got:.6e} below exhaustive minimum {best:.6e}"
            ));
        }
        if got <= best + tol {
            hits += 1;
        }
    }
    if hits * 100 < fixtures * 95 {
        return fail(format!("optimum attained in only {hits}/{fixtures} fixtures"));
    }
    println!("    (exhaustive optimum attained in {hits}/{fixtures} fixtures)");
    Ok(())
}

// ---------------------------------------------------------------- 5

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn check_degenerate_equivalence() -> CheckResult {
    let grid = Grid::uniform(0.0, 1.0, 21).unwrap();
    let spec = FarSpec::new(FarSpec::reference_psi(), vec![1.0, 1.0, 1.0], 80, grid).unwrap();
    let x = simulate_far1(&spec, 55).unwrap();

    // estimator equivalences on the projected score design
    let cov = fpca::static_covariance(&fcurve::center(&x, &fcurve::mean_curve(&x, None).unwrap()).unwrap()).unwrap();
    let decomp = fpca::fit(&x, &cov, 2).unwrap();
    let d = build_design(&decomp.scores, 1).unwrap();
    let ols = var::ols_fit(&d).unwrap();
    let mlts0 = var::mlts_fit(&d, 0.0, 9).map_err(|e| e.to_string())?;
    if max_abs_diff(&mlts0.coefficients, &ols.coefficients) > 1e-10 {
        return fail("untrimmed robust fit differs from least squares");
    }
    let rmlts0 = var::rmlts_fit(&d, 0.0, 0.0, 9).map_err(|e| e.to_string())?;
    if max_abs_diff(&rmlts0.coefficients, &ols.coefficients) > 1e-10 {
        return fail("unreweighted, untrimmed fit differs from least squares");
    }

    // component subspace: a huge threshold keeps every curve, so the
    // robust decomposition must collapse onto the classical one
    let robust = robust_fpca(&x, 2, 1e9, None).map_err(|e| e.to_string())?;
    if robust.weights.iter().any(|w| *w < 0.5) {
        return fail("huge threshold still flagged a curve");
    }
    let k = 2;
    let mut g = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g[(i, j)] = fcurve::inner_product(
                &robust.components[i],
                &decomp.components[j],
                x.grid(),
            )
            .unwrap();
        }
    }
    let sigma_min = g
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let angle = sigma_min.min(1.0).acos();
    if angle > 1e-6 {
        return fail(format!("principal angle {angle:.3e} between component subspaces"));
    }
    Ok(())
}

// ---------------------------------------------------------------- 6 (and reused by 8)

struct StudyLosses {
    methods: Vec<String>,
    /// 10% contamination during estimation, scored against the clean
    /// test curves (per replication, per method)
    contaminated: Vec<Vec<f64>>,
    clean_setting: Vec<Vec<f64>>,
}

fn desk_scale_study() -> &'static Result<StudyLosses, String> {
    static STUDY: OnceLock<Result<StudyLosses, String>> = OnceLock::new();
    STUDY.get_or_init(|| {
        let grid = Grid::uniform(0.0, 1.0, 51).map_err(|e| e.to_string())?;
        let far = FarSpec::new(FarSpec::reference_psi(), vec![1.0, 1.0, 1.0], 200, grid)
            .map_err(|e| e.to_string())?;
        let methods = MethodSpec::standard_four();
        let tune_opts = TuneOptions { budget: 24, restarts: 1, max_order: 2, k_max: Some(4) };
        let run = |rate: f64, seed: u64| -> Result<Vec<Vec<f64>>, String> {
            let config = StudyConfig {
                contamination_rate: rate,
                contamination_magnitude: 8.0,
                contamination_shape: ContaminationShape::ConstantShift,
                replications: 25,
                tune: tune_opts,
                seed,
            };
            let study = run_simulation_study(&far, &methods, &config).map_err(|e| e.to_string())?;
            if study.outcomes.len() < 20 {
                return Err(format!("only {} replications completed", study.outcomes.len()));
            }
            Ok(study.outcomes.iter().map(|o| o.clean_msfe.clone()).collect())
        };
        Ok(StudyLosses {
            methods: methods.iter().map(|m| m.name.clone()).collect(),
            contaminated: run(0.10, 606)?,
            clean_setting: run(0.0, 607)?,
        })
    })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

fn check_simulation_ordering() -> CheckResult {
    let study = desk_scale_study().as_ref().map_err(|e| e.clone())?;
    let idx = |name: &str| study.methods.iter().position(|m| m == name).unwrap();
    let (fpca_i, rfpca_i, mlts_i, rmlts_i) =
        (idx("FPCA"), idx("RFPCA"), idx("MLTS"), idx("RMLTS"));

    let med = |rows: &[Vec<f64>], c: usize| median(&column(rows, c));
    let dirty = &study.contaminated;
    let m_fpca = med(dirty, fpca_i);
    let m_rfpca = med(dirty, rfpca_i);
    let m_mlts = med(dirty, mlts_i);
    let m_rmlts = med(dirty, rmlts_i);
    println!(
        "    (contaminated medians: FPCA {m_fpca:.4}, RFPCA {m_rfpca:.4}, MLTS {m_mlts:.4}, RMLTS {m_rmlts:.4})"
    );
    if m_rmlts > m_mlts {
        return fail(format!("reweighted median {m_rmlts:.4} above trimmed median {m_mlts:.4}"));
    }
    if m_rfpca > m_fpca {
        return fail(format!("robust-component median {m_rfpca:.4} above classical {m_fpca:.4}"));
    }
    if !(m_rmlts < m_fpca) {
        return fail(format!("reweighted median {m_rmlts:.4} not strictly below classical {m_fpca:.4}"));
    }

    let clean = &study.clean_setting;
    let meds = [med(clean, 0), med(clean, 1), med(clean, 2), med(clean, 3)];
    let lo = meds.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = meds.iter().fold(0.0f64, |a, &b| a.max(b));
    if hi > lo * 1.10 {
        return fail(format!("clean-data medians spread beyond 10%: {meds:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- 7

fn check_order_recovery() -> CheckResult {
    let psi = FarSpec::reference_psi();
    let runs = 100usize;
    let n = 500usize;
    let burn = 100usize;
    let mut standard_hits = 0usize;
    let mut robust_hits = 0usize;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + run as u64);
        let mut state = nalgebra::DVector::<f64>::zeros(3);
        let mut scores = DMatrix::<f64>::zeros(n, 3);
        for i in 0..burn + n {
            let eps = nalgebra::DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            state = &psi * &state + eps;
            if i >= burn {
                for c in 0..3 {
                    scores[(i - burn, c)] = state[c];
                }
            }
        }
        let (order_std, _) =
            var::select_order(&scores, 3, EstimatorKind::Ols, 0.0, 0.0, run as u64)
                .map_err(|e| format!("run {run}: {e}"))?;
        let (order_rob, _) =
            var::select_order(&scores, 3, EstimatorKind::Rmlts, 0.25, 0.01, run as u64)
                .map_err(|e| format!("run {run}: {e}"))?;
        if order_std == 1 {
            standard_hits += 1;
        }
        if order_rob == 1 {
            robust_hits += 1;
        }
    }
    println!("    (first-order lag selected: standard {standard_hits}/{runs}, robust {robust_hits}/{runs})");
    if standard_hits < 90 {
        return fail(format!("standard criterion picked lag one in only {standard_hits}/{runs}"));
    }
    if robust_hits < 90 {
        return fail(format!("robust criterion picked lag one in only {robust_hits}/{runs}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- 8

fn check_confidence_set_sanity() -> CheckResult {
    let runs = 100usize;
    let n_eval = 60usize;
    let mut dominated_first = 0usize;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + run as u64);
        let base: Vec<f64> = (0..n_eval)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.0 + e.abs()
            })
            .collect();
        let losses = DMatrix::from_fn(n_eval, 3, |r, c| match c {
            0 | 1 => base[r], // identical pair
            _ => base[r] + 10.0,
        });
        let lm = LossMatrix::new(losses, vec!["A".into(), "B".into(), "C".into()]).unwrap();
        let spec = BootstrapSpec { samples: 500, block_length: None, seed: run as u64 };
        let result = mcs::mcs(&lm, 0.90, McsStatistic::TMax, &spec).map_err(|e| e.to_string())?;
        if !(result.survivors.contains(&"A".to_string())
            && result.survivors.contains(&"B".to_string()))
        {
            return fail(format!("run {run}: an identical-loss model was eliminated"));
        }
        if result.trace.first().map(|s| s.model.as_str()) == Some("C") {
            dominated_first += 1;
        }
    }
    println!("    (dominated model eliminated first in {dominated_first}/{runs} runs)");
    if dominated_first < 95 {
        return fail(format!("dominated model went first in only {dominated_first}/{runs}"));
    }

    // the desk-scale contaminated losses must keep the reweighted robust
    // method in the superior set
    let study = desk_scale_study().as_ref().map_err(|e| e.clone())?;
    let rows = &study.contaminated;
    let losses = DMatrix::from_fn(rows.len(), study.methods.len(), |r, c| rows[r][c]);
    let lm = LossMatrix::new(losses, study.methods.clone()).unwrap();
    let spec = BootstrapSpec { samples: 500, block_length: None, seed: 88 };
    let result = mcs::mcs(&lm, 0.90, McsStatistic::TMax, &spec).map_err(|e| e.to_string())?;
    println!("    (survivors on the contaminated study: {:?})", result.survivors);
    if !result.survivors.contains(&"RMLTS".to_string()) {
        return fail("reweighted robust method not in the superior set");
    }
    Ok(())
}

// ---------------------------------------------------------------- 9

fn check_cli_comparison() -> CheckResult {
    let dir = std::env::temp_dir().join(format!("rfts-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;

    // pollutant-style fixture: 82 day-curves of 24 hourly points with
    // additive contamination, written in the long CSV layout
    let grid = Grid::uniform(0.0, 1.0, 24).map_err(|e| e.to_string())?;
    let far = FarSpec::new(FarSpec::reference_psi(), vec![1.0, 1.0, 1.0], 82, grid)
        .map_err(|e| e.to_string())?;
    let clean = simulate_far1(&far, 20260823).map_err(|e| e.to_string())?;
    // contamination confined to the history; the evaluation window (the
    // last 33 curves under the default layout) stays clean so the loss
    // measures forecast quality, not outlier magnitude
    let history = clean.slice(0, 49).map_err(|e| e.to_string())?;
    let cspec = ContaminationSpec::new(0.20, 8.0, ContaminationShape::ConstantShift, 91)
        .map_err(|e| e.to_string())?;
    let (dirty, _) = contaminate(&history, &cspec).map_err(|e| e.to_string())?;
    let values: Vec<Vec<f64>> = (0..clean.len())
        .map(|i| if i < 49 { dirty.curve(i).to_vec() } else { clean.curve(i).to_vec() })
        .collect();
    let data = FunctionalTimeSeries::new(clean.grid().clone(), values).map_err(|e| e.to_string())?;
    let mut csv = String::from("time,value\n");
    for (day, curve) in data.curves().iter().enumerate() {
        for (h, v) in curve.iter().enumerate() {
            csv.push_str(&format!("d{day}h{h},{v}\n"));
        }
    }
    std::fs::write(dir.join("data.csv"), csv).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.join("run.toml"),
        format!(
            r#"
seed = 17

[ingest]
input = "{}"
value-column = "value"
timestamp-column = "time"
curve-length = 24

[tune]
budget = 16
restarts = 1
max-order = 2
k-max = 4

[mcs]
samples = 200
levels = [0.9]
"#,
            dir.join("data.csv").display()
        ),
    )
    .map_err(|e| e.to_string())?;

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_rfts"))
        .arg("compare")
        .arg("--manifest")
        .arg(dir.join("run.toml"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return fail(format!(
            "compare run failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }

    let summary =
        std::fs::read_to_string(dir.join("out").join("summary.csv")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = summary.lines().collect();
    if lines.len() != 8 {
        return fail(format!("summary has {} lines, want 8", lines.len()));
    }
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| -> Result<usize, String> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| format!("no column {name:?} in summary"))
    };
    let expected_rows = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max.", "sd"];
    let mut sd_row: Option<Vec<f64>> = None;
    for (line, want) in lines[1..].iter().zip(expected_rows) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] != want {
            return fail(format!("summary row {:?}, want {want:?}", fields[0]));
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        if values.len() != 4 || values.iter().any(|v| !v.is_finite()) {
            return fail(format!("non-finite or missing values in row {want:?}"));
        }
        if want == "sd" {
            sd_row = Some(values);
        }
    }
    let sd = sd_row.unwrap();
    let sd_fpca = sd[col("FPCA")? - 1];
    let sd_rmlts = sd[col("RMLTS")? - 1];
    println!("    (forecast-error sd: FPCA {sd_fpca:.4}, RMLTS {sd_rmlts:.4})");
    if sd_rmlts > sd_fpca {
        return fail(format!("reweighted sd {sd_rmlts:.4} above classical sd {sd_fpca:.4}"));
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

// ---------------------------------------------------------------- 10

fn ln_gamma(z: f64) -> f64 {
    // Lanczos, g = 7
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// CDF by Simpson quadrature after the substitution t = u^2, which removes
/// the integrable singularity at zero for one degree of freedom.
fn chi2_cdf_oracle(df: f64, x: f64) -> f64 {
    let upper = x.sqrt();
    let steps = 40_000usize;
    let h = upper / steps as f64;
    let f = |u: f64| -> f64 {
        if u == 0.0 {
            return if df == 1.0 { 2.0 } else { 0.0 };
        }
        2.0 * u.powf(df - 1.0) * (-u * u / 2.0).exp()
    };
    let mut sum = f(0.0) + f(upper);
    for i in 1..steps {
        let u = i as f64 * h;
        sum += f(u) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = sum * h / 3.0;
    integral / ((df / 2.0) * 2.0f64.ln() + ln_gamma(df / 2.0)).exp()
}

fn check_numerical_hygiene() -> CheckResult {
    // distribution function against the quadrature oracle
    for df in 1..=10usize {
        for alpha in [0.01, 0.1, 0.25, 0.5] {
            let x = chi2::chi2_quantile(df as f64, 1.0 - alpha).map_err(|e| e.to_string())?;
            let got = chi2::chi2_cdf(df as f64, x).map_err(|e| e.to_string())?;
            let want = chi2_cdf_oracle(df as f64, x);
            if (got - want).abs() > 1e-8 {
                return fail(format!(
                    "df {df}, tail {alpha}: cdf {got:.12} vs oracle {want:.12}"
                ));
            }
            if (got - (1.0 - alpha)).abs() > 1e-8 {
                return fail(format!("df {df}: quantile does not invert the cdf"));
            }
        }
    }

    // eigenfunctions orthonormal under the quadrature inner product
    let p = 31usize;
    let grid = Grid::uniform(0.0, 1.0, p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let b = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    let surface = b.transpose() * &b;
    let cov = CovarianceSurface { grid: grid.clone(), surface, kernel: None };
    let (_, components) = fpca::eigen_decompose(&cov, 6).map_err(|e| e.to_string())?;
    for i in 0..6 {
        for j in 0..6 {
            let ip = fcurve::inner_product(&components[i], &components[j], &grid).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            if (ip - want).abs() > 1e-8 {
                return fail(format!("<phi_{i}, phi_{j}> = {ip:.3e}, want {want}"));
            }
        }
    }

    // leakage sentinel: curves past the validation boundary must not
    // influence tuning
    let grid = Grid::uniform(0.0, 1.0, 15).unwrap();
    let far = FarSpec::new(FarSpec::reference_psi(), vec![1.0, 1.0, 1.0], 60, grid.clone())
        .unwrap();
    let base = simulate_far1(&far, 33).unwrap();
    let mut altered = base.curves().to_vec();
    for curve in altered.iter_mut().skip(50) {
        for v in curve.iter_mut() {
            *v = *v * 100.0 + 50.0;
        }
    }
    let altered = FunctionalTimeSeries::new(grid, altered).unwrap();
    let plan = EvaluationPlan::new(25, 50, 60).unwrap();
    let opts = TuneOptions { budget: 12, restarts: 0, max_order: 2, k_max: Some(3) };
    let method = &MethodSpec::standard_four()[3];
    let a = tune(&base, method, &plan, &opts, 5).map_err(|e| e.to_string())?;
    let b = tune(&altered, method, &plan, &opts, 5).map_err(|e| e.to_string())?;
    if a.tunables != b.tunables || a.msfe.to_bits() != b.msfe.to_bits() {
        return fail("tuning outcome changed when post-validation curves changed");
    }
    Ok(())
}

// ----------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let checks: Vec<(&str, fn() -> CheckResult)> = vec![
        ("01 correction-factor table and parity rules", check_correction_table),
        ("02 pairwise-difference dispersion oracle", check_dispersion_oracle),
        ("03 long-run covariance vs naive triple loop", check_long_run_oracle),
        ("04 trimmed-subset concentration vs exhaustive search", check_trimmed_subset_oracle),
        ("05 degenerate settings collapse to classical fits", check_degenerate_equivalence),
        ("06 contaminated-study forecast-error ordering", check_simulation_ordering),
        ("07 lag-order recovery by both criteria", check_order_recovery),
        ("08 confidence-set elimination sanity", check_confidence_set_sanity),
        ("09 end-to-end comparison on a pollutant-style fixture", check_cli_comparison),
        ("10 numerical hygiene and leakage sentinel", check_numerical_hygiene),
    ];
    // narrow to matching criteria during development, e.g. ACCEPT_ONLY=09
    let only = std::env::var("ACCEPT_ONLY").ok();
    let mut failures = Vec::new();
    for (name, check) in checks {
        if let Some(filter) = &only {
            if !name.contains(filter.as_str()) {
                continue;
            }
        }
        match check() {
            Ok(()) => println!("criterion {name}: pass"),
            Err(msg) => {
                println!("criterion {name}: FAIL ({msg})");
                failures.push(format!("{name}: {msg}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
