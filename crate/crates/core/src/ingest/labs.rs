use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EventKind, PatientRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLabs {
    pub categories: BTreeSet<String>,
    /// Fraction of lab events whose category is retained.
    pub coverage: f64,
    pub total_lab_events: usize,
}

/// The `k` most frequent lab categories. Equal counts are ordered by name so
/// the choice is deterministic.
pub fn select_top_labs<'a, I>(records: I, k: usize) -> TopLabs
where
    I: IntoIterator<Item = &'a PatientRecord>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        for e in &r.events {
            if let EventKind::Lab { category, .. } = &e.kind {
                *counts.entry(category.as_str()).or_insert(0) += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(k.max(1));
    let kept: usize = ranked.iter().map(|(_, c)| c).sum();
    TopLabs {
        categories: ranked.into_iter().map(|(n, _)| n.to_string()).collect(),
        coverage: if total == 0 { 1.0 } else { kept as f64 / total as f64 },
        total_lab_events: total,
    }
}

/// Drops lab events outside `keep`; returns the number removed.
pub fn retain_labs<'a, I>(records: I, keep: &BTreeSet<String>) -> usize
where
    I: IntoIterator<Item = &'a mut PatientRecord>,
{
    let mut removed = 0;
    for r in records {
        let before = r.events.len();
        r.events.retain(|e| match &e.kind {
            EventKind::Lab { category, .. } => keep.contains(category),
            _ => true,
        });
        removed += before - r.events.len();
    }
    removed
}
