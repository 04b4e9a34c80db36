//! Ranking traces against each other at a shared SFO budget.

use crate::error::{Error, Result};

use super::trace::{Metric, TraceRecord};

/// Last value of `metric` recorded at `sfo ≤ budget`.
pub fn value_at_budget(records: &[TraceRecord], metric: Metric, budget: u64) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty trace".into()))?;
    if budget < first.sfo {
        return Err(Error::InvalidParameter(format!(
            "budget {budget} precedes the first snapshot at sfo {}",
            first.sfo
        )));
    }
    let r = records.iter().take_while(|r| r.sfo <= budget).last().expect("first record qualifies");
    metric
        .of(r)
        .ok_or_else(|| Error::MetricUnavailable(metric.name().into()))
}

/// Labels sorted ascending by [`value_at_budget`]; ties keep label order.
pub fn compare(traces: &[(&str, &[TraceRecord])], metric: Metric, budget: u64) -> Result<Vec<String>> {
    let mut scored = traces
        .iter()
        .map(|(label, recs)| Ok((value_at_budget(recs, metric, budget)?, label.to_string())))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, l)| l).collect())
}

/// SFO of the first snapshot whose `metric` is at or below `target`.
pub fn sfo_to_target(records: &[TraceRecord], metric: Metric, target: f64) -> Option<u64> {
    records
        .iter()
        .find(|r| metric.of(r).is_some_and(|v| v <= target))
        .map(|r| r.sfo)
}
