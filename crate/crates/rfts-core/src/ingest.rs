//! Hourly-records CSV ingestion: reshape a univariate series into
//! day-curves, impute missing values, optionally square-root transform.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fcurve::{FunctionalTimeSeries, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    None,
    Sqrt,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct IngestSpec {
    pub input: String,
    pub value_column: String,
    pub timestamp_column: Option<String>,
    pub curve_length: usize,
    #[serde(default)]
    pub transform: Transform,
}

impl IngestSpec {
    pub fn validate(&self) -> Result<()> {
        if self.curve_length < 2 {
            return Err(Error::Config(format!(
                "curve length {} too short; need at least 2 points per curve",
                self.curve_length
            )));
        }
        Ok(())
    }
}

/// Fill gaps inside one curve: interior runs of missing values are
/// linearly interpolated between their neighbors, missing runs touching
/// a boundary take the nearest observed value. A fully missing curve is
/// unrecoverable.
fn impute_curve(values: &mut [Option<f64>], day: usize) -> Result<()> {
    let p = values.len();
    let observed: Vec<usize> = (0..p).filter(|&i| values[i].is_some()).collect();
    if observed.is_empty() {
        return Err(Error::Data(format!("day {day} has no observed values")));
    }
    for i in 0..p {
        if values[i].is_some() {
            continue;
        }
        let prev = observed.iter().rev().find(|&&j| j < i).copied();
        let next = observed.iter().find(|&&j| j > i).copied();
        values[i] = Some(match (prev, next) {
            (Some(a), Some(b)) => {
                let va = values[a].unwrap();
                let vb = values[b].unwrap();
                va + (vb - va) * (i - a) as f64 / (b - a) as f64
            }
            (Some(a), None) => values[a].unwrap(),
            (None, Some(b)) => values[b].unwrap(),
            (None, None) => unreachable!(),
        });
    }
    Ok(())
}

/// Ingest from any reader; `ingest` is the path-based wrapper.
pub fn ingest_reader<R: std::io::Read>(spec: &IngestSpec, reader: R) -> Result<FunctionalTimeSeries> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("header row: {e}")))?.clone();
    let value_idx = headers
        .iter()
        .position(|h| h == spec.value_column)
        .ok_or_else(|| Error::Config(format!("no column named {:?}", spec.value_column)))?;
    let ts_idx = match &spec.timestamp_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("no column named {name:?}")))?,
        ),
        None => None,
    };

    let mut raw: Vec<Option<f64>> = Vec::new();
    let mut stamps: Vec<String> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        let field = rec
            .get(value_idx)
            .ok_or_else(|| Error::Data(format!("line {line}: missing value field")))?
            .trim();
        let value = if field.is_empty() || field.eq_ignore_ascii_case("na") {
            None
        } else {
            Some(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("line {line}: unparseable value {field:?}")))?,
            )
        };
        raw.push(value);
        if let Some(t) = ts_idx {
            stamps.push(rec.get(t).unwrap_or("").to_string());
        }
    }

    let p = spec.curve_length;
    if raw.is_empty() || raw.len() % p != 0 {
        return Err(Error::Data(format!(
            "{} records do not form whole curves of length {p}",
            raw.len()
        )));
    }
    let n = raw.len() / p;
    let mut curves = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for day in 0..n {
        let mut vals: Vec<Option<f64>> = raw[day * p..(day + 1) * p].to_vec();
        impute_curve(&mut vals, day + 1)?;
        let mut curve: Vec<f64> = vals.into_iter().map(|v| v.unwrap()).collect();
        if spec.transform == Transform::Sqrt {
            if let Some(bad) = curve.iter().find(|v| **v < 0.0) {
                return Err(Error::Data(format!(
                    "day {}: negative value {bad} under sqrt transform",
                    day + 1
                )));
            }
            for v in curve.iter_mut() {
                *v = v.sqrt();
            }
        }
        curves.push(curve);
        labels.push(if ts_idx.is_some() {
            stamps[day * p].clone()
        } else {
            format!("{}", day + 1)
        });
    }
    let grid = Grid::uniform(0.0, 1.0, p)?;
    FunctionalTimeSeries::with_labels(grid, curves, Some(labels))
}

pub fn ingest(spec: &IngestSpec) -> Result<FunctionalTimeSeries> {
    let file = std::fs::File::open(Path::new(&spec.input))
        .map_err(|e| Error::Data(format!("open {:?}: {e}", spec.input)))?;
    ingest_reader(spec, std::io::BufReader::new(file))
}
