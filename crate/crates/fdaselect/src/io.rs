//! CSV ingestion and the plain-text output tables.
//!
//! Every floating-point value is written with 17 significant digits so a
//! parse of the text reproduces the binary value exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use fdaselect_core::rng::{substream, TAG_JITTER};
use fdaselect_core::{Band, Bands, CoefficientEstimates, Curve, CurveSet, Error as CoreError};
use rand::Rng;

use crate::error::{AppError, Result};

pub const CURVE_HEADER: [&str; 3] = ["curve_id", "t", "y"];
pub const COEFFICIENT_HEADER: [&str; 4] = ["curve_id", "basis", "xi_hat", "inclusion_prob"];
pub const FITTED_HEADER: [&str; 5] = ["curve_id", "t", "fitted", "lower", "upper"];
pub const BAND_HEADER: [&str; 4] = ["curve_id", "t", "lower", "upper"];
pub const SUMMARY_HEADER: [&str; 3] = ["k", "mean", "sd"];
pub const CHAIN_HEADER: [&str; 4] = ["chain", "iteration", "parameter", "value"];

/// Curve id used for the cross-curve averaged band.
pub const AVERAGE_ID: &str = "average";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Read `curve_id,t,y` rows, grouped by id in order of first appearance and
/// sorted by t. With `jitter`, curves containing tied points get every
/// point shifted by U(-δ/2, δ/2), δ a tenth of the smallest positive gap.
pub fn read_curves<R: Read>(reader: R, jitter: Option<u64>) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(AppError::Parse {
            line: 1,
            message: format!("expected header `{}`", CURVE_HEADER.join(",")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(AppError::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = &record[idx];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(AppError::Parse {
                    line,
                    message: format!("{name} is not a finite number: `{raw}`"),
                }),
            }
        };
        let (t, y) = (field(1, "t")?, field(2, "y")?);
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(AppError::Parse {
                line,
                message: "empty curve_id".into(),
            });
        }
        rows.entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push((t, y));
    }
    if order.is_empty() {
        return Err(CoreError::Shape("no data rows".into()).into());
    }

    let mut curves = Vec::with_capacity(order.len());
    for (index, id) in order.into_iter().enumerate() {
        let mut pts = rows.remove(&id).unwrap_or_default();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if has_ties(&pts) {
            let Some(seed) = jitter else {
                return Err(CoreError::Degenerate(format!(
                    "curve {id} has repeated t values; enable jitter"
                ))
                .into());
            };
            jitter_points(&mut pts, seed, index as u64)
                .map_err(|e| CoreError::Degenerate(format!("curve {id}: {e}")))?;
            if has_ties(&pts) {
                return Err(CoreError::Degenerate(format!(
                    "curve {id} still has repeated t values after jitter"
                ))
                .into());
            }
        }
        let (t, y) = pts.into_iter().unzip();
        curves.push(Curve::new(id, t, y)?);
    }
    Ok(CurveSet::new(curves)?)
}

fn has_ties(sorted: &[(f64, f64)]) -> bool {
    sorted.windows(2).any(|w| w[0].0 == w[1].0)
}

fn jitter_points(pts: &mut [(f64, f64)], seed: u64, curve: u64) -> std::result::Result<(), String> {
    let gap = pts
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !gap.is_finite() {
        return Err("all t values coincide".into());
    }
    let delta = gap / 10.0;
    let mut rng = substream(seed, &[TAG_JITTER, curve]);
    for p in pts.iter_mut() {
        p.0 += delta * (rng.random::<f64>() - 0.5);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(())
}

pub fn ingest_csv(path: &Path, jitter: Option<u64>) -> Result<CurveSet> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_curves(file, jitter)
}

pub fn write_curves<W: Write>(out: W, data: &CurveSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for c in &data.curves {
        for (t, y) in c.t.iter().zip(&c.y) {
            w.write_record([c.id.as_str(), &fmt_f64(*t), &fmt_f64(*y)])?;
        }
    }
    w.flush().map_err(|e| AppError::io("<curves>", e))?;
    Ok(())
}

pub fn write_coefficients<W: Write>(
    out: W,
    ids: &[String],
    est: &CoefficientEstimates,
    p: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COEFFICIENT_HEADER)?;
    for (i, id) in ids.iter().enumerate() {
        for k in 0..est.xi_hat.ncols() {
            w.write_record([
                id.as_str(),
                &(k + 1).to_string(),
                &fmt_f64(est.xi_hat[(i, k)]),
                &fmt_f64(p[i][k]),
            ])?;
        }
    }
    w.flush().map_err(|e| AppError::io("<coefficients>", e))?;
    Ok(())
}

/// One parsed row of a coefficients table.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub curve_id: String,
    pub basis: usize,
    pub xi_hat: f64,
    pub inclusion_prob: f64,
}

pub fn read_coefficients<R: Read>(reader: R) -> Result<Vec<CoefficientRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != COEFFICIENT_HEADER {
        return Err(AppError::Parse {
            line: 1,
            message: "unexpected coefficient header".into(),
        });
    }
    rdr.records()
        .map(|r| {
            let r = r?;
            let line = r.position().map_or(0, |p| p.line());
            let bad = |m: &str| AppError::Parse {
                line,
                message: m.to_string(),
            };
            Ok(CoefficientRow {
                curve_id: r[0].to_string(),
                basis: r[1].parse().map_err(|_| bad("bad basis index"))?,
                xi_hat: r[2].parse().map_err(|_| bad("bad xi_hat"))?,
                inclusion_prob: r[3].parse().map_err(|_| bad("bad inclusion_prob"))?,
            })
        })
        .collect()
}

pub fn write_fitted<W: Write>(
    out: W,
    data: &CurveSet,
    fitted: &[Vec<f64>],
    bands: &[Band],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FITTED_HEADER)?;
    for ((c, f), b) in data.curves.iter().zip(fitted).zip(bands) {
        for j in 0..c.t.len() {
            w.write_record([
                c.id.as_str(),
                &fmt_f64(c.t[j]),
                &fmt_f64(f[j]),
                &fmt_f64(b.lower[j]),
                &fmt_f64(b.upper[j]),
            ])?;
        }
    }
    w.flush().map_err(|e| AppError::io("<curve>", e))?;
    Ok(())
}

/// Per-curve bands followed by the averaged band when the grid is shared.
pub fn write_bands<W: Write>(
    out: W,
    ids: &[String],
    points: &[Vec<f64>],
    bands: &Bands,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BAND_HEADER)?;
    for ((id, t), b) in ids.iter().zip(points).zip(&bands.per_curve) {
        for j in 0..t.len() {
            w.write_record([
                id.as_str(),
                &fmt_f64(t[j]),
                &fmt_f64(b.lower[j]),
                &fmt_f64(b.upper[j]),
            ])?;
        }
    }
    if let Some(avg) = &bands.averaged {
        for j in 0..points[0].len() {
            w.write_record([
                AVERAGE_ID,
                &fmt_f64(points[0][j]),
                &fmt_f64(avg.lower[j]),
                &fmt_f64(avg.upper[j]),
            ])?;
        }
    }
    w.flush().map_err(|e| AppError::io("<bands>", e))?;
    Ok(())
}

/// `k,mean,sd` with one-based k.
pub fn write_summary<W: Write>(out: W, mean: &[f64], sd: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for (k, (m, s)) in mean.iter().zip(sd).enumerate() {
        w.write_record([&(k + 1).to_string(), &fmt_f64(*m), &fmt_f64(*s)])?;
    }
    w.flush().map_err(|e| AppError::io("<summary>", e))?;
    Ok(())
}

/// Retained chain draws in long format; `iteration` counts retained draws
/// from one.
pub fn write_chains<W: Write>(out: W, names: &[String], chains: &[Vec<Vec<f64>>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CHAIN_HEADER)?;
    for (c, chain) in chains.iter().enumerate() {
        for (p, draws) in chain.iter().enumerate() {
            for (d, v) in draws.iter().enumerate() {
                w.write_record([
                    &(c + 1).to_string(),
                    &(d + 1).to_string(),
                    names[p].as_str(),
                    &fmt_f64(*v),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| AppError::io("<chains>", e))?;
    Ok(())
}

pub fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| AppError::io(path, e))
}
