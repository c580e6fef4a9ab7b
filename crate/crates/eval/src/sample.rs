//! Progressive sample ladder. Every sample is a prefix of one seeded task
//! order, so a larger level always contains the smaller ones.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::BenchTask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleName {
    Initial,
    Nano,
    Micro,
    Mini,
    Full,
}

impl SampleName {
    pub const LADDER: [SampleName; 5] =
        [SampleName::Initial, SampleName::Nano, SampleName::Micro, SampleName::Mini, SampleName::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            SampleName::Initial => "initial",
            SampleName::Nano => "nano",
            SampleName::Micro => "micro",
            SampleName::Mini => "mini",
            SampleName::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<SampleName> {
        SampleName::LADDER.into_iter().find(|n| n.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    PerTemplateRepresentatives,
    TemplateCoverage50,
    AllTemplates,
    AllTasks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub name: SampleName,
    pub size: usize,
    pub selection: Selection,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 7;

impl SampleSpec {
    /// Standard ladder level for the bundled manifest.
    pub fn ladder(name: SampleName, seed: u64) -> SampleSpec {
        let (size, selection) = match name {
            SampleName::Initial => (22, Selection::PerTemplateRepresentatives),
            SampleName::Nano => (44, Selection::PerTemplateRepresentatives),
            SampleName::Micro => (90, Selection::TemplateCoverage50),
            SampleName::Mini => (190, Selection::AllTemplates),
            SampleName::Full => (812, Selection::AllTasks),
        };
        SampleSpec {
            name,
            size,
            selection,
            seed,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("manifest has {available} tasks, sample needs {requested}")]
    ManifestTooSmall { requested: usize, available: usize },
    #[error("a {selection:?} sample of {size} tasks cannot be drawn from {templates} templates")]
    SelectionUnsatisfiable {
        selection: Selection,
        size: usize,
        templates: usize,
    },
}

/// The full seeded order over `manifest`.
///
/// Templates are shuffled within their domain, domains are interleaved
/// round-robin, and each template's own tasks are shuffled. Round `r` then
/// emits the `r`-th task of every template that still has one.
pub fn task_order(manifest: &[BenchTask], seed: u64) -> Vec<usize> {
    let mut domains: Vec<&str> = Vec::new();
    let mut templates: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut by_domain: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (i, t) in manifest.iter().enumerate() {
        if !domains.contains(&t.domain.as_str()) {
            domains.push(&t.domain);
        }
        templates.entry(&t.template_id).or_default().push(i);
        by_domain.entry(&t.domain).or_default().insert(&t.template_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<&str>> = domains
        .iter()
        .map(|d| {
            let mut ts: Vec<&str> = by_domain[d].iter().copied().collect();
            ts.shuffle(&mut rng);
            ts
        })
        .collect();
    let mut template_order = Vec::new();
    let mut row = 0;
    while columns.iter().any(|c| row < c.len()) {
        for c in &mut columns {
            if let Some(t) = c.get(row) {
                template_order.push(*t);
            }
        }
        row += 1;
    }
    let mut queues: Vec<Vec<usize>> = template_order
        .iter()
        .map(|t| {
            let mut q = templates[t].clone();
            q.shuffle(&mut rng);
            q
        })
        .collect();
    let mut order = Vec::with_capacity(manifest.len());
    let mut round = 0;
    while order.len() < manifest.len() {
        for q in &mut queues {
            if let Some(i) = q.get(round) {
                order.push(*i);
            }
        }
        round += 1;
    }
    order
}

/// Draws a ladder sample: the first `spec.size` tasks of the seeded order.
pub fn draw_sample(manifest: &[BenchTask], spec: &SampleSpec) -> Result<Vec<BenchTask>, SampleError> {
    if spec.size > manifest.len() {
        return Err(SampleError::ManifestTooSmall {
            requested: spec.size,
            available: manifest.len(),
        });
    }
    let order = task_order(manifest, spec.seed);
    let picked: Vec<BenchTask> = order[..spec.size].iter().map(|&i| manifest[i].clone()).collect();
    let templates: BTreeSet<&str> = manifest.iter().map(|t| t.template_id.as_str()).collect();
    let covered: BTreeSet<&str> = picked.iter().map(|t| t.template_id.as_str()).collect();
    let ok = match spec.selection {
        Selection::PerTemplateRepresentatives => covered.len() == picked.len(),
        Selection::TemplateCoverage50 => covered.len() * 2 >= templates.len(),
        Selection::AllTemplates => covered.len() == templates.len(),
        Selection::AllTasks => picked.len() == manifest.len(),
    };
    if !ok {
        return Err(SampleError::SelectionUnsatisfiable {
            selection: spec.selection,
            size: spec.size,
            templates: templates.len(),
        });
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::bundled_manifest;

    #[test]
    fn standard_sizes() {
        let m = bundled_manifest();
        for name in SampleName::LADDER {
            let spec = SampleSpec::ladder(name, DEFAULT_SEED);
            assert_eq!(draw_sample(&m, &spec).unwrap().len(), spec.size);
        }
    }

    #[test]
    fn too_small() {
        let m = bundled_manifest();
        let spec = SampleSpec::ladder(SampleName::Full, 1);
        assert_eq!(
            draw_sample(&m[..100], &spec),
            Err(SampleError::ManifestTooSmall {
                requested: 812,
                available: 100
            })
        );
    }

    #[test]
    fn selection_is_checked() {
        let m = bundled_manifest();
        let spec = SampleSpec {
            name: SampleName::Mini,
            size: 100,
            selection: Selection::AllTemplates,
            seed: 3,
        };
        assert!(matches!(draw_sample(&m, &spec), Err(SampleError::SelectionUnsatisfiable { .. })));
    }
}
