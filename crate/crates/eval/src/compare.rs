use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::record::RunRecord;

/// How each task of the new run moved relative to the base run. The five
/// main buckets partition the new run; `dropped` lists base-only tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub base_run: String,
    pub new_run: String,
    pub resolved: BTreeSet<String>,
    pub regressed: BTreeSet<String>,
    pub newly_covered: BTreeSet<String>,
    pub persistent_failures: BTreeSet<String>,
    pub persistent_passes: BTreeSet<String>,
    pub dropped: BTreeSet<String>,
}

pub fn compare_runs(base: &RunRecord, new: &RunRecord) -> ComparisonReport {
    let mut report = ComparisonReport {
        base_run: base.run_id.clone(),
        new_run: new.run_id.clone(),
        resolved: BTreeSet::new(),
        regressed: BTreeSet::new(),
        newly_covered: BTreeSet::new(),
        persistent_failures: BTreeSet::new(),
        persistent_passes: BTreeSet::new(),
        dropped: BTreeSet::new(),
    };
    for (id, now) in &new.results {
        let bucket = match base.results.get(id).map(|b| b.passed()) {
            None => &mut report.newly_covered,
            Some(false) if now.passed() => &mut report.resolved,
            Some(true) if !now.passed() => &mut report.regressed,
            Some(true) => &mut report.persistent_passes,
            Some(false) => &mut report.persistent_failures,
        };
        bucket.insert(id.clone());
    }
    report.dropped = base
        .results
        .keys()
        .filter(|k| !new.results.contains_key(*k))
        .cloned()
        .collect();
    report
}
