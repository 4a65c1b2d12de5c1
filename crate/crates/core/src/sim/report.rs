//! Plot-ready tables and summary statistics from a trace.

use serde::{Deserialize, Serialize};

use crate::metrics::{sublinearity_check, Sublinearity};

use super::trace::Trace;
use super::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub rounds: usize,
    pub n: usize,
    pub d: usize,
    pub initial_disagreement: f64,
    pub final_disagreement: f64,
    pub max_disagreement: f64,
    pub final_regret: Vec<f64>,
    pub final_regret_over_t: Vec<f64>,
    /// Per agent; `None` when the trace is shorter than four rounds.
    pub sublinearity: Vec<Option<Sublinearity>>,
}

fn non_empty(trace: &Trace) -> Result<(), SimError> {
    if trace.rows.is_empty() {
        Err(SimError::Trace("trace has no rows".into()))
    } else {
        Ok(())
    }
}

/// One aligned table: `t`, every estimate coordinate, every `regret_t/t`, and
/// the disagreement.
pub fn aligned_csv(trace: &Trace) -> Result<String, SimError> {
    non_empty(trace)?;
    let mut cols = vec!["t".to_string()];
    for i in 1..=trace.n {
        cols.extend((1..=trace.d).map(|k| format!("x{i}_{k}")));
    }
    cols.extend((1..=trace.n).map(|i| format!("regret_over_t{i}")));
    cols.push("disagreement".into());
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| SimError::Trace(e.to_string());
    w.write_record(&cols).map_err(err)?;
    for row in &trace.rows {
        let mut rec = vec![row.t.to_string()];
        rec.extend(row.x.iter().flatten().map(f64::to_string));
        rec.extend(row.regret_over_t.iter().map(f64::to_string));
        rec.push(row.disagreement.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Trace(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn summarize(trace: &Trace) -> Result<ReportStats, SimError> {
    non_empty(trace)?;
    let first = &trace.rows[0];
    let last = &trace.rows[trace.rows.len() - 1];
    let sublinearity = (0..trace.n)
        .map(|i| {
            let series: Vec<f64> = trace.rows.iter().map(|r| r.regret_over_t[i]).collect();
            sublinearity_check(&series).ok()
        })
        .collect();
    Ok(ReportStats {
        rounds: trace.rows.len(),
        n: trace.n,
        d: trace.d,
        initial_disagreement: first.disagreement,
        final_disagreement: last.disagreement,
        max_disagreement: trace.rows.iter().map(|r| r.disagreement).fold(0.0, f64::max),
        final_regret: last.regret.clone(),
        final_regret_over_t: last.regret_over_t.clone(),
        sublinearity,
    })
}
