//! Metrics report for one task's result rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::inference::output::ResultRow;
use crate::inference::Task;
use crate::metrics::{self, BootstrapCi, MetricsError};

pub const TOP_K: [usize; 4] = [1, 2, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    /// Rows with a defined estimate and label.
    pub n: usize,
    /// Rows dropped because the estimate was undefined.
    pub n_undefined: usize,
    pub n_flagged: usize,
    pub prevalence: Option<f64>,
    pub auc_fit: Option<f64>,
    pub binormal_a: Option<f64>,
    pub binormal_b: Option<f64>,
    pub auc_emp: Option<f64>,
    pub auc_ci: Option<BootstrapCi>,
    pub auprc: Option<f64>,
    pub mae: Option<f64>,
    pub mae_ci: Option<BootstrapCi>,
    pub topk: Vec<(usize, f64)>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub roc_points: Vec<(f64, f64)>,
    #[serde(skip)]
    pub pr_points: Vec<(f64, f64)>,
}

impl EvalReport {
    fn empty(task: &str) -> EvalReport {
        EvalReport {
            task: task.to_string(),
            n: 0,
            n_undefined: 0,
            n_flagged: 0,
            prevalence: None,
            auc_fit: None,
            binormal_a: None,
            binormal_b: None,
            auc_emp: None,
            auc_ci: None,
            auprc: None,
            mae: None,
            mae_ci: None,
            topk: Vec::new(),
            notes: Vec::new(),
            roc_points: Vec::new(),
            pr_points: Vec::new(),
        }
    }
}

/// Scores rows of a single task. Binary tasks get ROC/PR metrics, value
/// tasks MAE, DRG top-k accuracy; bootstrap intervals use `n_boot`
/// resamples at 95%.
pub fn evaluate(rows: &[ResultRow], n_boot: usize, seed: u64) -> Result<EvalReport, MetricsError> {
    let first = rows.first().ok_or(MetricsError::Empty)?;
    if let Some(other) = rows.iter().find(|r| r.task != first.task) {
        return Err(MetricsError::Invalid(format!("mixed tasks {} and {}", first.task, other.task)));
    }
    let task: Task = first.task.parse().map_err(MetricsError::Invalid)?;
    let mut rep = EvalReport::empty(&first.task);
    rep.n_flagged = rows.iter().filter(|r| !r.flag.is_empty()).count();
    match task {
        Task::Drg => {
            let ranked: Vec<Vec<&str>> = rows.iter().map(|r| r.ranked()).collect();
            let truth: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
            rep.n = rows.len();
            for k in TOP_K {
                rep.topk.push((k, metrics::topk_accuracy(&ranked, &truth, k)?));
            }
        }
        t if t.is_binary() => {
            let (scores, labels): (Vec<f64>, Vec<bool>) =
                rows.iter().filter_map(|r| Some((r.estimate?, r.binary_label()?))).unzip();
            rep.n = scores.len();
            rep.n_undefined = rows.len() - rep.n;
            if rep.n == 0 {
                return Err(MetricsError::Empty);
            }
            rep.prevalence = Some(labels.iter().filter(|&&l| l).count() as f64 / rep.n as f64);
            match metrics::roc_fit(&scores, &labels) {
                Ok(fit) => {
                    if let Some(why) = &fit.fallback {
                        rep.notes.push(format!("binormal fit unavailable ({why}); auc_fit is empirical"));
                    } else {
                        rep.binormal_a = Some(fit.a);
                        rep.binormal_b = Some(fit.b);
                    }
                    rep.auc_fit = Some(fit.auc);
                    rep.roc_points = fit.points;
                    rep.auc_emp = Some(metrics::auc_empirical(&scores, &labels)?);
                    rep.auc_ci = Some(metrics::auc_ci(&scores, &labels, n_boot, 0.05, seed)?);
                    let pr = metrics::pr_curve(&scores, &labels)?;
                    rep.auprc = Some(pr.auprc);
                    rep.pr_points = pr.points;
                }
                Err(MetricsError::SingleClass) => rep.notes.push("single class; AUC undefined".into()),
                Err(e) => return Err(e),
            }
        }
        _ => {
            let (pred, target): (Vec<f64>, Vec<f64>) =
                rows.iter().filter_map(|r| Some((r.estimate?, r.value_label()?))).unzip();
            rep.n = pred.len();
            rep.n_undefined = rows.len() - rep.n;
            rep.mae = Some(metrics::mae(&pred, &target)?);
            let abs: Vec<f64> = pred.iter().zip(&target).map(|(p, t)| (p - t).abs()).collect();
            let mean = |idx: &[usize]| Some(idx.iter().map(|&i| abs[i]).sum::<f64>() / idx.len() as f64);
            rep.mae_ci = Some(metrics::bootstrap_ci(abs.len(), mean, n_boot, 0.05, seed)?);
        }
    }
    Ok(rep)
}

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const ROC_POINTS: &str = "roc_points.csv";
pub const PR_POINTS: &str = "pr_points.csv";

#[derive(Serialize)]
struct MetricsRow<'a> {
    task: &'a str,
    n: usize,
    n_undefined: usize,
    n_flagged: usize,
    prevalence: Option<f64>,
    auc_fit: Option<f64>,
    auc_emp: Option<f64>,
    auc_ci_lower: Option<f64>,
    auc_ci_upper: Option<f64>,
    auprc: Option<f64>,
    mae: Option<f64>,
    mae_ci_lower: Option<f64>,
    mae_ci_upper: Option<f64>,
    top1: Option<f64>,
    top2: Option<f64>,
    top3: Option<f64>,
    top5: Option<f64>,
}

fn write_points(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<(), MetricsError> {
    let io = |e: csv::Error| MetricsError::Invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))
}

/// Writes the JSON report, a one-row CSV and the ROC/PR point files.
pub fn write_report(dir: &Path, rep: &EvalReport) -> Result<(), MetricsError> {
    let io = |e: std::io::Error| MetricsError::Invalid(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(rep).map_err(|e| MetricsError::Invalid(e.to_string()))?;
    std::fs::write(dir.join(METRICS_JSON), json).map_err(io)?;
    let top = |k: usize| rep.topk.iter().find(|(j, _)| *j == k).map(|(_, v)| *v);
    let row = MetricsRow {
        task: &rep.task,
        n: rep.n,
        n_undefined: rep.n_undefined,
        n_flagged: rep.n_flagged,
        prevalence: rep.prevalence,
        auc_fit: rep.auc_fit,
        auc_emp: rep.auc_emp,
        auc_ci_lower: rep.auc_ci.as_ref().map(|c| c.lower),
        auc_ci_upper: rep.auc_ci.as_ref().map(|c| c.upper),
        auprc: rep.auprc,
        mae: rep.mae,
        mae_ci_lower: rep.mae_ci.as_ref().map(|c| c.lower),
        mae_ci_upper: rep.mae_ci.as_ref().map(|c| c.upper),
        top1: top(1),
        top2: top(2),
        top3: top(3),
        top5: top(5),
    };
    let path = dir.join(METRICS_CSV);
    let csv_err = |e: csv::Error| MetricsError::Invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.serialize(row).map_err(csv_err)?;
    w.flush().map_err(io)?;
    if !rep.roc_points.is_empty() {
        write_points(&dir.join(ROC_POINTS), ["fpr", "tpr"], &rep.roc_points)?;
    }
    if !rep.pr_points.is_empty() {
        write_points(&dir.join(PR_POINTS), ["recall", "precision"], &rep.pr_points)?;
    }
    Ok(())
}
