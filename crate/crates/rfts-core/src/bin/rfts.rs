//! Command-line driver: simulation studies, single-method forecasting,
//! and expanding-window method comparison with significance testing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use rfts_core::error::Error;
use rfts_core::fcurve::FunctionalTimeSeries;
use rfts_core::ingest;
use rfts_core::manifest::{statistics, Manifest};
use rfts_core::mcs::{self, LossMatrix};
use rfts_core::pipeline::{
    derive_seed, fit_method, run_expanding_window, run_simulation_study, summarize, tune,
    MethodSpec, Summary, SUMMARY_ROWS,
};

#[derive(Parser)]
#[command(name = "rfts", version, about = "robust functional time series forecasting")]
struct Cli {
    /// master seed; omitted = drawn from the OS and printed for replay
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker thread cap (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// run a replicated simulation study from a manifest
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// fit one method on ingested data and write forecast curves
    Forecast {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// overrides the manifest's forecast horizon
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// expanding-window comparison of all methods plus the confidence-set test
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Dimension(_) => 3,
        Error::Degenerate(_) | Error::Singular(_) | Error::Numerical(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
        {
            eprintln!("error: thread pool: {e}");
            std::process::exit(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate { manifest, out_dir } => cmd_simulate(manifest, out_dir, cli.seed),
        Command::Forecast { manifest, out_dir, horizon } => {
            cmd_forecast(manifest, out_dir, cli.seed, *horizon)
        }
        Command::Compare { manifest, out_dir } => cmd_compare(manifest, out_dir, cli.seed),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

/// Seed priority: explicit flag, then the manifest, then a drawn seed
/// printed so the run can be replayed.
fn load(path: &Path, flag_seed: Option<u64>) -> Result<(Manifest, u64), Error> {
    let manifest = Manifest::from_path(path)?;
    let seed = flag_seed.or(manifest.seed).unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("no seed given; using seed {s} (pass --seed {s} to reproduce)");
        s
    });
    Ok((manifest, seed))
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("create {dir:?}: {e}")))?;
    let path = dir.join(name);
    let mut f =
        std::fs::File::create(&path).map_err(|e| Error::Data(format!("create {path:?}: {e}")))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::Data(format!("write {path:?}: {e}")))?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

fn summary_csv(methods: &[String], summaries: &[Summary]) -> String {
    let mut out = String::from("statistic");
    for m in methods {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for (ri, row) in SUMMARY_ROWS.iter().enumerate() {
        out.push_str(row);
        for s in summaries {
            out.push(',');
            out.push_str(&fmt(s.rows()[ri].1));
        }
        out.push('\n');
    }
    out
}

fn losses_csv(methods: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = methods.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn run_report(seed: u64, entries: BTreeMap<String, serde_json::Value>) -> String {
    let mut map = serde_json::Map::new();
    map.insert("seed".into(), serde_json::json!(seed));
    for (k, v) in entries {
        map.insert(k, v);
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
}

fn cmd_simulate(manifest_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), Error> {
    let (manifest, seed) = load(manifest_path, seed)?;
    let section = manifest
        .simulate
        .clone()
        .ok_or_else(|| Error::Config("manifest needs a [simulate] section".into()))?;
    let far = section.far_spec()?;
    let methods = manifest.methods();
    let config = section.study_config(manifest.tune.options(), seed);
    let started = Instant::now();
    let study = run_simulation_study(&far, &methods, &config)?;
    let elapsed = started.elapsed().as_secs_f64();

    let dirty: Vec<Vec<f64>> =
        study.outcomes.iter().map(|o| o.contaminated_msfe.clone()).collect();
    let clean: Vec<Vec<f64>> = study.outcomes.iter().map(|o| o.clean_msfe.clone()).collect();
    write_file(out_dir, "losses.csv", &losses_csv(&study.methods, &dirty))?;
    write_file(out_dir, "losses-clean.csv", &losses_csv(&study.methods, &clean))?;

    let mut summaries = Vec::new();
    let mut summaries_clean = Vec::new();
    for m in 0..study.methods.len() {
        summaries.push(summarize(&study.msfe_column(m, false))?);
        summaries_clean.push(summarize(&study.msfe_column(m, true))?);
    }
    write_file(out_dir, "summary.csv", &summary_csv(&study.methods, &summaries))?;
    write_file(out_dir, "summary-clean.csv", &summary_csv(&study.methods, &summaries_clean))?;

    // significance of per-replication MSFE differences across methods
    let n = dirty.len();
    let m = study.methods.len();
    let loss = LossMatrix::new(
        DMatrix::from_fn(n, m, |r, c| dirty[r][c]),
        study.methods.clone(),
    )?;
    let mut mcs_results = Vec::new();
    for level in &manifest.mcs.levels {
        for stat in statistics() {
            mcs_results.push(mcs::mcs(
                &loss,
                *level,
                stat,
                &manifest.mcs.bootstrap(derive_seed(seed, 0xb007)),
            )?);
        }
    }
    write_file(
        out_dir,
        "mcs.json",
        &serde_json::to_string_pretty(&mcs_results).unwrap(),
    )?;

    let mut entries = BTreeMap::new();
    entries.insert("command".into(), serde_json::json!("simulate"));
    entries.insert("replications".into(), serde_json::json!(config.replications));
    entries.insert(
        "skipped".into(),
        serde_json::json!(study
            .skipped
            .iter()
            .map(|(r, msg)| serde_json::json!({"replication": r, "reason": msg}))
            .collect::<Vec<_>>()),
    );
    entries.insert(
        "tuned".into(),
        serde_json::to_value(
            study
                .outcomes
                .iter()
                .map(|o| &o.tuned)
                .collect::<Vec<_>>(),
        )
        .unwrap(),
    );
    entries.insert("elapsed-seconds".into(), serde_json::json!(elapsed));
    write_file(out_dir, "run-report.json", &run_report(seed, entries))?;
    Ok(())
}

fn ingest_series(manifest: &Manifest) -> Result<FunctionalTimeSeries, Error> {
    ingest::ingest(manifest.ingest_spec()?)
}

fn cmd_forecast(
    manifest_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    horizon_override: Option<usize>,
) -> Result<(), Error> {
    let (manifest, seed) = load(manifest_path, seed)?;
    let data = ingest_series(&manifest)?;
    let methods = manifest.methods();
    let section = manifest.forecast.clone();
    let method: MethodSpec = match &section {
        Some(f) => methods
            .iter()
            .find(|m| m.name == f.method)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown forecast method {:?}", f.method)))?,
        None => methods[0].clone(),
    };
    let horizon = horizon_override.or(section.map(|f| f.horizon)).unwrap_or(1);
    if horizon < 1 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    let plan = manifest.plan_for(data.len())?;
    let opts = manifest.tune.options();
    let started = Instant::now();
    let tuned = tune(&data, &method, &plan, &opts, derive_seed(seed, 1))?;
    let fitted = fit_method(&data, &method, &tuned.tunables, opts.max_order, derive_seed(seed, 2))?;
    // roll the VAR forward from the end of the observed scores
    let order = fitted.order;
    let scores = &fitted.decomposition.scores;
    let k = scores.ncols();
    let history: Vec<Vec<f64>> = (data.len() - order..data.len())
        .map(|r| (0..k).map(|c| scores[(r, c)]).collect())
        .collect();
    let beta = rfts_core::var::forecast_scores(&fitted.var_fit, &history, horizon)?;
    let curves = rfts_core::var::forecast_curves(
        &fitted.decomposition.mean,
        &fitted.decomposition.components,
        &beta,
    )?;
    let elapsed = started.elapsed().as_secs_f64();

    // tidy layout: one row per forecast point
    let mut out = String::from("series,x,y\n");
    for (h, curve) in curves.iter().enumerate() {
        for (x, y) in data.grid().points().iter().zip(curve) {
            out.push_str(&format!("h{},{},{}\n", h + 1, x, fmt(*y)));
        }
    }
    write_file(out_dir, "forecast.csv", &out)?;

    let mut entries = BTreeMap::new();
    entries.insert("command".into(), serde_json::json!("forecast"));
    entries.insert("method".into(), serde_json::json!(method.name));
    entries.insert("horizon".into(), serde_json::json!(horizon));
    entries.insert("tunables".into(), serde_json::to_value(tuned.tunables).unwrap());
    entries.insert("validation-msfe".into(), serde_json::json!(tuned.msfe));
    entries.insert("var-order".into(), serde_json::json!(fitted.order));
    let flagged =
        fitted.decomposition.weights.iter().filter(|w| **w < 0.5).count();
    entries.insert("flagged-outliers".into(), serde_json::json!(flagged));
    entries.insert("elapsed-seconds".into(), serde_json::json!(elapsed));
    write_file(out_dir, "run-report.json", &run_report(seed, entries))?;
    Ok(())
}

fn cmd_compare(manifest_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), Error> {
    let (manifest, seed) = load(manifest_path, seed)?;
    let data = ingest_series(&manifest)?;
    let methods = manifest.methods();
    let plan = manifest.plan_for(data.len())?;
    let opts = manifest.tune.options();
    let started = Instant::now();

    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    let mut tuned_all = Vec::new();
    let mut orders = Vec::new();
    let mut diagnostics: Vec<serde_json::Value> = Vec::new();
    let mut timings = BTreeMap::new();
    for (mi, method) in methods.iter().enumerate() {
        let t0 = Instant::now();
        let mseed = derive_seed(seed, 10 + mi as u64);
        let tuned = tune(&data, method, &plan, &opts, mseed)?;
        let steps =
            run_expanding_window(&data, method, &plan, &tuned.tunables, opts.max_order, mseed)?;
        let final_fit = fit_method(
            &data.slice(0, plan.validation_end)?,
            method,
            &tuned.tunables,
            opts.max_order,
            mseed,
        )?;
        orders.push(final_fit.order);
        for s in &steps {
            if let Some(d) = &s.diagnostic {
                diagnostics.push(serde_json::json!({
                    "method": method.name, "step": s.index, "reason": d,
                }));
            }
        }
        columns.push(steps.iter().map(|s| s.loss).collect());
        tuned_all.push(tuned.tunables);
        timings.insert(method.name.clone(), t0.elapsed().as_secs_f64());
    }

    // keep steps where every method produced a loss
    let complete: Vec<usize> = (0..plan.test_len())
        .filter(|&r| columns.iter().all(|c| c[r].is_some()))
        .collect();
    if complete.is_empty() {
        return Err(Error::Numerical("no evaluation step succeeded for all methods".into()));
    }
    let names: Vec<String> = methods.iter().map(|m| m.name.clone()).collect();
    let rows: Vec<Vec<f64>> = complete
        .iter()
        .map(|&r| columns.iter().map(|c| c[r].unwrap()).collect())
        .collect();
    write_file(out_dir, "losses.csv", &losses_csv(&names, &rows))?;

    let summaries: Vec<Summary> = (0..names.len())
        .map(|m| summarize(&rows.iter().map(|r| r[m]).collect::<Vec<f64>>()))
        .collect::<Result<_, _>>()?;
    write_file(out_dir, "summary.csv", &summary_csv(&names, &summaries))?;

    let loss = LossMatrix::new(
        DMatrix::from_fn(rows.len(), names.len(), |r, c| rows[r][c]),
        names.clone(),
    )?;
    let mut mcs_results = Vec::new();
    for level in &manifest.mcs.levels {
        for stat in statistics() {
            mcs_results.push(mcs::mcs(
                &loss,
                *level,
                stat,
                &manifest.mcs.bootstrap(derive_seed(seed, 0xb007)),
            )?);
        }
    }
    write_file(out_dir, "mcs.json", &serde_json::to_string_pretty(&mcs_results).unwrap())?;

    let elapsed = started.elapsed().as_secs_f64();
    let mut entries = BTreeMap::new();
    entries.insert("command".into(), serde_json::json!("compare"));
    entries.insert("methods".into(), serde_json::json!(names));
    entries.insert("tuned".into(), serde_json::to_value(&tuned_all).unwrap());
    entries.insert("var-orders".into(), serde_json::json!(orders));
    entries.insert("evaluated-steps".into(), serde_json::json!(complete.len()));
    entries.insert("failed-steps".into(), serde_json::json!(diagnostics));
    entries.insert("timings-seconds".into(), serde_json::to_value(timings).unwrap());
    entries.insert("elapsed-seconds".into(), serde_json::json!(elapsed));
    write_file(out_dir, "run-report.json", &run_report(seed, entries))?;
    Ok(())
}
