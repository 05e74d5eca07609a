//! Task output files: one CSV row per case plus an optional trace dump.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tasks::{Label, TaskResult};
use super::{Context, InferenceError, StopReason};
use crate::tokenizer::{build_corpus, PatientTimeline, TokenId, Vocabulary};

/// Number of DRG classes kept per row.
pub const RANKING_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case_id: String,
    pub patient_id: u64,
    pub index: usize,
    pub task: String,
    /// Empty when undefined.
    pub estimate: Option<f64>,
    /// 0/1, a number, or a DRG token name.
    pub label: String,
    pub n_stop_token_hit: usize,
    pub n_time_budget_exceeded: usize,
    pub n_token_cap: usize,
    /// Space-separated DRG tokens, most probable first.
    pub ranking: String,
    pub flag: String,
}

impl ResultRow {
    pub fn from_result(r: &TaskResult, vocab: &Vocabulary) -> ResultRow {
        let name = |t: TokenId| vocab.token(t).unwrap_or("?").to_string();
        ResultRow {
            case_id: r.case_id.clone(),
            patient_id: r.patient_id,
            index: r.index,
            task: r.task.name().to_string(),
            estimate: r.estimate,
            label: match &r.label {
                Label::Binary(b) => (*b as u8).to_string(),
                Label::Value(v) => format!("{v}"),
                Label::Class(t) => name(*t),
            },
            n_stop_token_hit: r.stop_counts.get(&StopReason::StopTokenHit).copied().unwrap_or(0),
            n_time_budget_exceeded: r.stop_counts.get(&StopReason::TimeBudgetExceeded).copied().unwrap_or(0),
            n_token_cap: r.stop_counts.get(&StopReason::TokenCap).copied().unwrap_or(0),
            ranking: r.ranking.iter().take(RANKING_DEPTH).map(|(t, _)| name(*t)).collect::<Vec<_>>().join(" "),
            flag: r.flag.clone().unwrap_or_default(),
        }
    }

    pub fn binary_label(&self) -> Option<bool> {
        match self.label.as_str() {
            "0" => Some(false),
            "1" => Some(true),
            _ => None,
        }
    }

    pub fn value_label(&self) -> Option<f64> {
        self.label.parse().ok()
    }

    pub fn ranked(&self) -> Vec<&str> {
        self.ranking.split_whitespace().collect()
    }
}

pub fn write_results(path: &Path, results: &[TaskResult], vocab: &Vocabulary) -> Result<(), InferenceError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        w.serialize(ResultRow::from_result(r, vocab))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, InferenceError> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    entry: usize,
    case_id: String,
    replicate: usize,
    stop: StopReason,
    n_tokens: usize,
}

/// Writes generated replicates in the corpus binary format (one entry per
/// replicate, the case header in front) plus `traces.csv` naming them.
pub fn write_traces(
    dir: &Path,
    results: &[TaskResult],
    contexts: &[&Context],
    end_of_timeline: TokenId,
) -> Result<(), InferenceError> {
    let mut phts = Vec::new();
    let mut rows = Vec::new();
    for (r, ctx) in results.iter().zip(contexts) {
        for (k, t) in r.traces.iter().enumerate() {
            rows.push(TraceRow {
                entry: phts.len(),
                case_id: r.case_id.clone(),
                replicate: k,
                stop: t.stop,
                n_tokens: t.tokens.len(),
            });
            phts.push(PatientTimeline {
                patient_id: r.patient_id,
                header: ctx.header,
                body: t.tokens.clone(),
                anchor: ctx.anchor,
                timestamps: None,
            });
        }
    }
    build_corpus(&phts, end_of_timeline).save(dir)?;
    let mut w = csv::Writer::from_path(dir.join("traces.csv"))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
