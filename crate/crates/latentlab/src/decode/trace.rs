//! Line-delimited trace files.
//!
//! One record per generated item: `step  strategy  support_ids  weights
//! stop`, tab-separated. Support ids are a comma list (a greedy step is
//! its single token at weight 1, a pure latent step has no support,
//! written `-`); weights carry 8 significant digits; the stop column is
//! `-` on every line except the last, which names the trace's stop
//! reason.

use super::{DecodeTrace, StepStrategy};
use crate::model::Scalar;
use std::io::Write;
use std::path::Path;

pub fn write_trace_file<T: Scalar>(trace: &DecodeTrace<T>, path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = trace.steps.len();
    for (i, step) in trace.steps.iter().enumerate() {
        let (ids, weights) = match (&step.soft, step.strategy) {
            (Some(soft), _) => (
                soft.support
                    .iter()
                    .map(|(id, _)| id.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                soft.support
                    .iter()
                    .map(|(_, w)| format!("{:.7e}", w.into_f64()))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (None, StepStrategy::Greedy) => {
                let tok = step
                    .token
                    .map(|t| t.to_string())
                    .unwrap_or_else(|| "-".into());
                (tok, format!("{:.7e}", 1.0))
            }
            (None, _) => ("-".into(), "-".into()),
        };
        let stop = if i + 1 == n {
            trace.stop_reason.label()
        } else {
            "-"
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            step.index,
            step.strategy.label(),
            ids,
            weights,
            stop
        )?;
    }
    out.flush()
}
