//! Dice overlap and per-stage comparison tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// `2|A ∩ B| / (|A| + |B|)`, with two empty volumes scoring 1.
pub fn dice(a: &LabelVolume, b: &LabelVolume) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape("dice operands", a.dims().to_vec(), b.dims().to_vec()));
    }
    let both = a.labels().iter().zip(b.labels()).filter(|(&x, &y)| x == 1 && y == 1).count();
    let total = a.foreground() + b.foreground();
    Ok(if total == 0 { 1.0 } else { 2.0 * both as f64 / total as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageDice {
    pub stage: String,
    pub dice: f64,
}

/// Dice of every stage against the reference, in input order.
pub fn stage_report(truth: &LabelVolume, stages: &[(String, LabelVolume)]) -> Result<Vec<StageDice>> {
    stages.iter().map(|(name, labels)| Ok(StageDice { stage: name.clone(), dice: dice(labels, truth)? })).collect()
}

/// `stage,dice` CSV with six decimals.
pub fn report_csv(rows: &[StageDice]) -> String {
    let mut out = String::from("stage,dice\n");
    for row in rows {
        writeln!(out, "{},{:.6}", row.stage, row.dice).expect("writing to a String");
    }
    out
}
