//! Flat CSV views of a run report.

use serde::de::DeserializeOwned;

use super::run::{CapacityRow, ExitKernelRow, FkRow, PointFineLimit, ResolventRow, RevuzRow, RunReport};
use crate::error::{Error, Result};
use crate::maxprinciple::ClassificationReport;

pub const PLOT_KINDS: [&str; 7] = [
    "fine-limit",
    "classify",
    "capacity",
    "fk",
    "resolvent",
    "revuz",
    "exit-kernel",
];

fn section<T: DeserializeOwned>(report: &RunReport, key: &str, what: &str) -> Result<T> {
    let v = report
        .outputs
        .get(key)
        .ok_or_else(|| Error::Domain(format!("report of kind {:?} has no {what} data", report.kind)))?;
    Ok(serde_json::from_value(v.clone())?)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// CSV text for `what`, headed by the config hash.
pub fn emit_plotdata(report: &RunReport, what: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match what {
        "fine-limit" => {
            let f: PointFineLimit = section(report, "fine_limits", what)?;
            w.write_record(["r", "average", "extrapolated", "point"])?;
            for (k, res) in f.results.iter().enumerate() {
                for (r, a) in res.radii.iter().zip(&res.averages) {
                    w.write_record([num(*r), num(*a), num(res.limit), k.to_string()])?;
                }
            }
        }
        "classify" => {
            let reps: Vec<ClassificationReport> = match section(report, "classifications", what) {
                Ok(v) => v,
                Err(_) => {
                    let d: crate::maxprinciple::DichotomyReport = section(report, "dichotomy", what)?;
                    d.classifications
                }
            };
            w.write_record(["delta", "J", "fit_a", "fit_b", "fit_c", "fit_gamma", "point"])?;
            for (k, c) in reps.iter().enumerate() {
                for (d, j) in c.deltas.iter().zip(&c.values) {
                    let f = c.fit.as_ref();
                    w.write_record([
                        num(*d),
                        num(*j),
                        opt(f.map(|f| f.a)),
                        opt(f.map(|f| f.b)),
                        opt(f.map(|f| f.c)),
                        opt(f.map(|f| f.gamma)),
                        k.to_string(),
                    ])?;
                }
            }
        }
        "capacity" => {
            let rows: Vec<CapacityRow> = section(report, "capacity", what)?;
            w.write_record(["h", "value", "dual_value"])?;
            for r in rows {
                w.write_record([num(r.h), num(r.value), opt(r.dual_value)])?;
            }
        }
        "fk" => {
            let rows: Vec<FkRow> = section(report, "fk", what)?;
            w.write_record(["dt", "estimate", "stderr", "point"])?;
            for r in rows {
                w.write_record([
                    num(r.dt),
                    num(r.estimate.estimate),
                    num(r.estimate.stderr),
                    fmt_point(&r.estimate.point),
                ])?;
            }
        }
        "resolvent" => {
            let rows: Vec<ResolventRow> = section(report, "resolvent", what)?;
            w.write_record(["dt", "estimate", "stderr", "series", "point"])?;
            for r in rows {
                w.write_record([
                    num(r.dt),
                    num(r.monte_carlo.estimate),
                    num(r.monte_carlo.stderr),
                    opt(r.series.map(|s| s.value)),
                    fmt_point(&r.point),
                ])?;
            }
        }
        "revuz" => {
            let rows: Vec<RevuzRow> = section(report, "revuz", what)?;
            w.write_record(["dt", "mean", "stderr", "median", "oracle", "point"])?;
            for r in rows {
                w.write_record([
                    num(r.dt),
                    num(r.mean),
                    num(r.stderr),
                    num(r.median),
                    if r.oracle_infinite { "inf".into() } else { num(r.oracle) },
                    fmt_point(&r.point),
                ])?;
            }
        }
        "exit-kernel" => {
            let rows: Vec<ExitKernelRow> = section(report, "exit_kernel", what)?;
            w.write_record([
                "dim",
                "alpha",
                "normalized_mass",
                "as_printed_mass",
                "as_printed_diverged",
                "ks_normalized",
                "ks_as_printed",
            ])?;
            for r in rows {
                w.write_record([
                    r.dim.to_string(),
                    num(r.alpha),
                    num(r.normalized_mass),
                    num(r.as_printed_mass),
                    r.as_printed_diverged.to_string(),
                    opt(r.ks_normalized),
                    opt(r.ks_as_printed),
                ])?;
            }
        }
        other => {
            return Err(Error::Domain(format!(
                "unknown plot data {other:?}; options: {}",
                PLOT_KINDS.join(", ")
            )))
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8");
    Ok(format!("{}\n{body}", report.csv_header()))
}

fn fmt_point(p: &[f64]) -> String {
    p.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}
