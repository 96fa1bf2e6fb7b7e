//! Paired AUC comparison between two report records.

use neopain_core::eval::{compare_auc, AucComparison};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StageExt};
use crate::run::{ExperimentRecord, RunReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub result: AucComparison,
}

/// DeLong test on the two records' test scores; they must cover the same
/// test instances.
pub fn compare_records(a: &ExperimentRecord, b: &ExperimentRecord) -> Result<ComparisonRecord> {
    let result = compare_auc(&a.scored_set()?, &b.scored_set()?).stage("compare")?;
    Ok(ComparisonRecord {
        a: a.key(),
        b: b.key(),
        result,
    })
}

/// Compares two records of `report` by key and appends the result.
pub fn compare_in_report(report: &mut RunReport, a: &str, b: &str) -> Result<ComparisonRecord> {
    let rec = compare_records(report.find(a)?, report.find(b)?)?;
    report.comparisons.push(rec.clone());
    Ok(rec)
}

/// Like [`compare_records`] but across two reports, which must share a split.
pub fn compare_across(ra: &RunReport, a: &str, rb: &RunReport, b: &str) -> Result<ComparisonRecord> {
    if ra.split != rb.split {
        return Err(neopain_core::Error::Contract(
            "reports were evaluated on different subject splits".into(),
        ))
        .stage("compare");
    }
    compare_records(ra.find(a)?, rb.find(b)?)
}
