//! C ABI over rfts-core. Handles are opaque pointers owned by the
//! caller and released with the matching `_free` function; every
//! fallible call returns a status code and leaves a human-readable
//! message retrievable with `rfts_last_error_message`.

// C-facing names keep the conventional lower-case prefix style
#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CString};

use rfts_core::fcurve::{FunctionalTimeSeries, Grid};
use rfts_core::pipeline::{fit_method, FittedMethod, MethodSpec, Tunables};
use rfts_core::sim::{simulate_far1, FarSpec};
use rfts_core::var;
use rfts_core::Error;

pub const RFTS_OK: c_int = 0;
pub const RFTS_ERR_CONFIG: c_int = 1;
pub const RFTS_ERR_DATA: c_int = 2;
pub const RFTS_ERR_NUMERICAL: c_int = 3;
pub const RFTS_ERR_NULL: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_of(e: &Error) -> c_int {
    match e {
        Error::Config(_) => RFTS_ERR_CONFIG,
        Error::Data(_) | Error::Dimension(_) => RFTS_ERR_DATA,
        Error::Degenerate(_) | Error::Singular(_) | Error::Numerical(_) => RFTS_ERR_NUMERICAL,
    }
}

fn fail(e: Error) -> c_int {
    let code = code_of(&e);
    set_error(&e.to_string());
    code
}

fn fail_null(what: &str) -> c_int {
    set_error(&format!("{what} is null"));
    RFTS_ERR_NULL
}

/// A functional time series: n curves sampled on a shared grid.
pub struct rfts_series {
    inner: FunctionalTimeSeries,
}

/// A fitted model: principal decomposition plus a score VAR, ready to
/// roll forecasts forward from the end of the series it was fit on.
pub struct rfts_fit {
    fitted: FittedMethod,
    n: usize,
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rfts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a series from a row-major buffer of `n * p` values on a
/// uniform grid over [0, 1].
#[no_mangle]
pub unsafe extern "C" fn rfts_series_create(
    values: *const c_double,
    n: usize,
    p: usize,
    out: *mut *mut rfts_series,
) -> c_int {
    if out.is_null() {
        return fail_null("out");
    }
    if values.is_null() {
        return fail_null("values");
    }
    let grid = match Grid::uniform(0.0, 1.0, p) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    let flat = std::slice::from_raw_parts(values, n * p);
    let curves: Vec<Vec<f64>> = (0..n).map(|i| flat[i * p..(i + 1) * p].to_vec()).collect();
    match FunctionalTimeSeries::new(grid, curves) {
        Ok(series) => {
            *out = Box::into_raw(Box::new(rfts_series { inner: series }));
            RFTS_OK
        }
        Err(e) => fail(e),
    }
}

/// Simulate a stationary functional autoregression with the built-in
/// reference operator: `n` curves on `grid_points` uniform points.
#[no_mangle]
pub unsafe extern "C" fn rfts_series_simulate(
    n: usize,
    grid_points: usize,
    seed: u64,
    out: *mut *mut rfts_series,
) -> c_int {
    if out.is_null() {
        return fail_null("out");
    }
    let build = || -> Result<FunctionalTimeSeries, Error> {
        let grid = Grid::uniform(0.0, 1.0, grid_points)?;
        let spec = FarSpec::new(FarSpec::reference_psi(), vec![1.0, 1.0, 1.0], n, grid)?;
        simulate_far1(&spec, seed)
    };
    match build() {
        Ok(series) => {
            *out = Box::into_raw(Box::new(rfts_series { inner: series }));
            RFTS_OK
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn rfts_series_free(series: *mut rfts_series) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Number of curves, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfts_series_len(series: *const rfts_series) -> usize {
    if series.is_null() {
        return 0;
    }
    (*series).inner.len()
}

/// Points per curve, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfts_series_grid_len(series: *const rfts_series) -> usize {
    if series.is_null() {
        return 0;
    }
    (*series).inner.grid().len()
}

/// Copy curve `i` into `out` (length `p`).
#[no_mangle]
pub unsafe extern "C" fn rfts_series_curve(
    series: *const rfts_series,
    i: usize,
    out: *mut c_double,
) -> c_int {
    if series.is_null() {
        return fail_null("series");
    }
    if out.is_null() {
        return fail_null("out");
    }
    let inner = &(*series).inner;
    if i >= inner.len() {
        set_error(&format!("curve index {i} out of range for {} curves", inner.len()));
        return RFTS_ERR_DATA;
    }
    let curve = inner.curve(i);
    std::slice::from_raw_parts_mut(out, curve.len()).copy_from_slice(curve);
    RFTS_OK
}

/// Forecasting method selectors; these mirror the four methods the
/// command-line tool compares.
#[repr(C)]
#[derive(Clone, Copy)]
pub enum rfts_method {
    /// static covariance components, least-squares score model
    RFTS_METHOD_FPCA = 0,
    /// robust dynamic components, least-squares score model
    RFTS_METHOD_RFPCA = 1,
    /// robust dynamic components, trimmed-squares score model
    RFTS_METHOD_MLTS = 2,
    /// robust dynamic components, reweighted trimmed-squares score model
    RFTS_METHOD_RMLTS = 3,
}

/// Fit one method on a series. `k` is the number of components,
/// `lambda` the outlier-weighting threshold, `alpha` the trimming
/// fraction, `delta` the reweighting tail probability; pass the
/// defaults (3, 3.0, 0.25, 0.01) when in doubt. `max_order` caps the
/// score autoregression order searched by the information criterion.
#[no_mangle]
pub unsafe extern "C" fn rfts_fit_create(
    series: *const rfts_series,
    method: rfts_method,
    k: usize,
    lambda: c_double,
    alpha: c_double,
    delta: c_double,
    max_order: usize,
    seed: u64,
    out: *mut *mut rfts_fit,
) -> c_int {
    if out.is_null() {
        return fail_null("out");
    }
    if series.is_null() {
        return fail_null("series");
    }
    let data = &(*series).inner;
    let spec = &MethodSpec::standard_four()[method as usize];
    let tunables = Tunables { k, lambda, alpha, delta };
    match fit_method(data, spec, &tunables, max_order, seed) {
        Ok(fitted) => {
            *out = Box::into_raw(Box::new(rfts_fit { fitted, n: data.len() }));
            RFTS_OK
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn rfts_fit_free(fit: *mut rfts_fit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Selected autoregression order, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfts_fit_order(fit: *const rfts_fit) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).fitted.order
}

/// Forecast `horizon` curves past the end of the fitted series into
/// `out`, a caller buffer of `horizon * p` values laid out row-major
/// (first forecast curve first).
#[no_mangle]
pub unsafe extern "C" fn rfts_forecast(
    fit: *const rfts_fit,
    horizon: usize,
    out: *mut c_double,
) -> c_int {
    if fit.is_null() {
        return fail_null("fit");
    }
    if out.is_null() {
        return fail_null("out");
    }
    if horizon == 0 {
        set_error("horizon must be >= 1");
        return RFTS_ERR_CONFIG;
    }
    let handle = &*fit;
    let fitted = &handle.fitted;
    let scores = &fitted.decomposition.scores;
    let k = scores.ncols();
    let order = fitted.order;
    let history: Vec<Vec<f64>> = (handle.n - order..handle.n)
        .map(|r| (0..k).map(|c| scores[(r, c)]).collect())
        .collect();
    let curves = var::forecast_scores(&fitted.var_fit, &history, horizon)
        .and_then(|beta| {
            var::forecast_curves(
                &fitted.decomposition.mean,
                &fitted.decomposition.components,
                &beta,
            )
        });
    match curves {
        Ok(curves) => {
            let p = fitted.decomposition.mean.values().len();
            let dst = std::slice::from_raw_parts_mut(out, horizon * p);
            for (h, curve) in curves.iter().enumerate() {
                dst[h * p..(h + 1) * p].copy_from_slice(curve);
            }
            RFTS_OK
        }
        Err(e) => fail(e),
    }
}
