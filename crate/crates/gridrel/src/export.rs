//! CSV output for estimates, adaptation traces, mixture weights and
//! benchmark tables. Floats are printed in scientific notation with 17
//! significant digits so round-tripping through text is lossless.

use std::io::{self, Write};

use crate::bench::{BenchResult, Method};
use crate::gaussian::HalfspaceConstraint;
use crate::optimizer::TraceRow;

/// Lossless float formatting: 17 significant digits, scientific.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out)
}

/// Single-row estimate summary.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub case: String,
    pub method: Method,
    pub seed: u64,
    pub samples: u64,
    pub pi_hat: f64,
    pub std_err: f64,
    pub avg_violated: f64,
    pub union_lower: f64,
    pub union_upper: f64,
    pub all_vacuous: bool,
}

pub fn write_estimate_csv<W: Write>(out: W, row: &EstimateRow) -> io::Result<()> {
    let mut wtr = csv_writer(out);
    wtr.write_record([
        "case",
        "method",
        "seed",
        "samples",
        "pi_hat",
        "std_err",
        "avg_violated",
        "union_lower",
        "union_upper",
        "all_vacuous",
    ])?;
    wtr.write_record([
        row.case.clone(),
        row.method.to_string(),
        row.seed.to_string(),
        row.samples.to_string(),
        fmt_float(row.pi_hat),
        fmt_float(row.std_err),
        fmt_float(row.avg_violated),
        fmt_float(row.union_lower),
        fmt_float(row.union_upper),
        row.all_vacuous.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

/// Per-batch adaptation trace.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRow]) -> io::Result<()> {
    let mut wtr = csv_writer(out);
    wtr.write_record(["batch", "samples", "pi_hat", "std_err", "batch_variance", "eta"])?;
    for row in trace {
        wtr.write_record([
            row.batch.to_string(),
            row.samples.to_string(),
            fmt_float(row.pi_hat),
            fmt_float(row.std_err),
            fmt_float(row.batch_variance),
            fmt_float(row.eta),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-row tail probabilities with initial and final mixture weights.
pub fn write_weights_csv<W: Write>(
    out: W,
    labels: &[String],
    constraints: &[HalfspaceConstraint],
    initial: &[f64],
    final_: &[f64],
) -> io::Result<()> {
    let mut wtr = csv_writer(out);
    wtr.write_record(["row_label", "tail_prob", "x_initial", "x_final"])?;
    for (i, c) in constraints.iter().enumerate() {
        wtr.write_record([
            labels[i].clone(),
            fmt_float(c.tail_prob),
            fmt_float(initial[i]),
            fmt_float(final_[i]),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One benchmark matrix cell, aggregated over repeated runs.
#[derive(Debug, Clone)]
pub struct BenchmarkCell {
    pub case: String,
    pub method: Method,
    pub theta_bound: Option<f64>,
    /// Analytic or recorded reference value, when one exists.
    pub oracle_pi: Option<f64>,
    pub samples: u64,
    /// Mean estimate over the runs.
    pub pi_hat: f64,
    /// Spread across runs (estimator standard error for a single run).
    pub std_err: f64,
    /// Tolerance-band check against the oracle, when one exists.
    pub stop_pass: Option<bool>,
    pub wall_ms: f64,
}

pub fn write_benchmark_csv<W: Write>(out: W, cells: &[BenchmarkCell]) -> io::Result<()> {
    let mut wtr = csv_writer(out);
    wtr.write_record([
        "case",
        "method",
        "theta_bound",
        "oracle_pi",
        "samples",
        "pi_hat",
        "std_err",
        "stop_pass",
        "wall_ms",
    ])?;
    for c in cells {
        wtr.write_record([
            c.case.clone(),
            c.method.to_string(),
            c.theta_bound.map(fmt_float).unwrap_or_default(),
            c.oracle_pi.map(fmt_float).unwrap_or_default(),
            c.samples.to_string(),
            fmt_float(c.pi_hat),
            fmt_float(c.std_err),
            c.stop_pass.map(|b| b.to_string()).unwrap_or_default(),
            fmt_float(c.wall_ms),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-run benchmark detail behind the aggregated cells.
pub fn write_runs_csv<W: Write>(
    out: W,
    rows: &[(String, Option<f64>, u64, BenchResult)],
) -> io::Result<()> {
    let mut wtr = csv_writer(out);
    wtr.write_record([
        "case",
        "theta_bound",
        "run",
        "method",
        "samples",
        "pi_hat",
        "std_err",
        "avg_violated",
        "wall_ms",
    ])?;
    for (case, theta, run, r) in rows {
        wtr.write_record([
            case.clone(),
            theta.map(fmt_float).unwrap_or_default(),
            run.to_string(),
            r.method.to_string(),
            r.samples.to_string(),
            fmt_float(r.pi_hat),
            fmt_float(r.std_err),
            fmt_float(r.avg_violated),
            fmt_float(r.wall_ms),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
