//! ROC analysis, bootstrap intervals, regression/ranking scores and PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::split::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least {need} interior ROC points, have {have}")]
    TooFewPoints { need: usize, have: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn probit(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::Invalid("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// Cumulative (positives, negatives) at or above each distinct score,
/// scanning from the highest score down.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        if k + 1 == order.len() || scores[order[k + 1]] != scores[i] {
            out.push((tp, fp));
        }
    }
    out
}

/// ROC operating points `(FPR, TPR)`, one per distinct threshold, starting
/// at (0, 0) and ending at (1, 1).
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (pos, neg) = check(scores, labels)?;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(sweep(scores, labels).into_iter().map(|(tp, fp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)));
    Ok(pts)
}

/// Mann-Whitney AUC with half credit for ties.
pub fn auc_empirical(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * mid_rank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocFit {
    pub a: f64,
    pub b: f64,
    pub auc: f64,
    pub points: Vec<(f64, f64)>,
    /// Set when the probit fit was impossible and `auc` is empirical.
    pub fallback: Option<String>,
}

/// Least-squares line `z_TPR = a + b·z_FPR` through the interior points in
/// double-probit space.
pub fn fit_binormal(points: &[(f64, f64)]) -> Result<RocFit, MetricsError> {
    let z: Vec<(f64, f64)> = points
        .iter()
        .filter(|(f, t)| *f > 0.0 && *f < 1.0 && *t > 0.0 && *t < 1.0)
        .map(|&(f, t)| (probit(f), probit(t)))
        .collect();
    if z.len() < 2 {
        return Err(MetricsError::TooFewPoints { need: 2, have: z.len() });
    }
    let n = z.len() as f64;
    let mx = z.iter().map(|p| p.0).sum::<f64>() / n;
    let my = z.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = z.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = z.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(MetricsError::TooFewPoints { need: 2, have: 1 });
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    Ok(RocFit { a, b, auc: binormal_auc(a, b), points: points.to_vec(), fallback: None })
}

pub fn binormal_auc(a: f64, b: f64) -> f64 {
    phi(a / (1.0 + b * b).sqrt())
}

/// Binormal fit of the scores' ROC, falling back to the empirical AUC when
/// there are fewer than two interior points.
pub fn roc_fit(scores: &[f64], labels: &[bool]) -> Result<RocFit, MetricsError> {
    let points = roc_points(scores, labels)?;
    match fit_binormal(&points) {
        Ok(f) => Ok(f),
        Err(e @ MetricsError::TooFewPoints { .. }) => Ok(RocFit {
            a: f64::NAN,
            b: f64::NAN,
            auc: auc_empirical(scores, labels)?,
            points,
            fallback: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_boot: usize,
    pub seed: u64,
    /// Resamples redrawn because the statistic was undefined on them.
    pub redraws: usize,
}

/// Percentile bootstrap over case indices `0..n`. `statistic` returns
/// `None` for a degenerate resample, which is then redrawn. The interval is
/// widened to contain the point estimate if needed.
pub fn bootstrap_ci(
    n: usize,
    statistic: impl Fn(&[usize]) -> Option<f64>,
    n_boot: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapCi, MetricsError> {
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if n_boot < 100 {
        return Err(MetricsError::Invalid(format!("n_boot {n_boot} < 100")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::Invalid(format!("alpha {alpha}")));
    }
    let all: Vec<usize> = (0..n).collect();
    let point = statistic(&all).ok_or(MetricsError::SingleClass)?;
    let mut stats = Vec::with_capacity(n_boot);
    let mut redraws = 0;
    let mut idx = vec![0usize; n];
    for b in 0..n_boot {
        let mut attempt = 0u64;
        loop {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b as u64, attempt]));
            idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
            if let Some(s) = statistic(&idx) {
                stats.push(s);
                break;
            }
            redraws += 1;
            attempt += 1;
            if attempt > 1000 {
                return Err(MetricsError::Invalid("resamples keep degenerating".into()));
            }
        }
    }
    stats.sort_by(f64::total_cmp);
    let lower = quantile_sorted(&stats, alpha / 2.0).min(point);
    let upper = quantile_sorted(&stats, 1.0 - alpha / 2.0).max(point);
    Ok(BootstrapCi { point, lower, upper, level: 1.0 - alpha, n_boot, seed, redraws })
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(x: &[f64], q: f64) -> f64 {
    let h = (x.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    x[lo] + (h - lo as f64) * (x[hi] - x[lo])
}

/// Bootstrap CI of the empirical AUC.
pub fn auc_ci(scores: &[f64], labels: &[bool], n_boot: usize, alpha: f64, seed: u64) -> Result<BootstrapCi, MetricsError> {
    check(scores, labels)?;
    let statistic = |idx: &[usize]| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        auc_empirical(&s, &l).ok()
    };
    bootstrap_ci(scores.len(), statistic, n_boot, alpha, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` per distinct threshold, highest threshold first.
    pub points: Vec<(f64, f64)>,
    pub auprc: f64,
}

/// Precision-recall sweep; AUPRC as Σ ΔRecall · Precision.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve, MetricsError> {
    let (pos, _) = check(scores, labels)?;
    let mut points = Vec::new();
    let mut auprc = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp) in sweep(scores, labels) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        auprc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrCurve { points, auprc })
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64, MetricsError> {
    if predictions.len() != targets.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / predictions.len() as f64)
}

/// Fraction of cases whose true class is among the first `k` ranked entries.
pub fn topk_accuracy<T: PartialEq>(ranked: &[Vec<T>], truth: &[T], k: usize) -> Result<f64, MetricsError> {
    if ranked.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(ranked.len(), truth.len()));
    }
    if ranked.is_empty() {
        return Err(MetricsError::Empty);
    }
    if k == 0 {
        return Err(MetricsError::Invalid("k must be at least 1".into()));
    }
    let hits = ranked.iter().zip(truth).filter(|(r, t)| r.iter().take(k).any(|x| x == *t)).count();
    Ok(hits as f64 / ranked.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub coords: Vec<[f64; 2]>,
    /// Share of total variance on each axis.
    pub explained: [f64; 2],
    /// Principal axes (columns of the loading matrix).
    pub axes: [Vec<f64>; 2],
    /// Data has fewer than two directions of variance.
    pub rank_deficient: bool,
}

/// Projects centered rows onto the top two principal axes. Each axis is
/// oriented so its first non-zero loading is positive.
pub fn pca_project(rows: &[Vec<f64>]) -> Result<Pca, MetricsError> {
    if rows.len() < 3 {
        return Err(MetricsError::Invalid(format!("need at least 3 rows, have {}", rows.len())));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(MetricsError::Invalid("rows must share a positive width".into()));
    }
    let n = rows.len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let scale = total.max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale.max(1.0);
    let mut axes: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    let mut rank_deficient = false;
    for k in 0..2 {
        let Some(&col) = order.get(k) else {
            rank_deficient = true;
            continue;
        };
        let lambda = eig.eigenvalues[col].max(0.0);
        if lambda <= tol {
            rank_deficient = true;
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
        }
        explained[k] = lambda / scale;
        axes[k] = v;
    }
    let coords = (0..n)
        .map(|i| {
            let row = x.row(i);
            let proj = |a: &Vec<f64>| row.iter().zip(a).map(|(x, a)| x * a).sum::<f64>();
            [proj(&axes[0]), proj(&axes[1])]
        })
        .collect();
    Ok(Pca { coords, explained, axes, rank_deficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_small_cases() {
        let l = [true, true, true, true, true, false, false, false, false, false];
        let s = [0.9, 0.8, 0.35, 0.35, 0.1, 0.7, 0.35, 0.2, 0.1, 0.05];
        assert!((auc_empirical(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
        assert_eq!(auc_empirical(&[1.0, 1.0, 0.0], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc_empirical(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc_empirical(&[0.3; 2], &[true, true]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn roc_points_shapes() {
        let p = roc_points(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert!(p.contains(&(0.0, 1.0)));
        let p = roc_points(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(p, vec![(0.0, 0.0), (1.0, 1.0)]);
        // 20-replicate grid: at most 21 distinct thresholds
        let s: Vec<f64> = (0..500).map(|i| ((i * 7) % 21) as f64 / 20.0).collect();
        let l: Vec<bool> = (0..500).map(|i| i % 3 == 0).collect();
        assert!(roc_points(&s, &l).unwrap().len() <= 22);
    }

    #[test]
    fn binormal_basics() {
        assert_eq!(binormal_auc(0.0, 0.7), 0.5);
        // points generated exactly from a = 1, b = 1
        let pts: Vec<(f64, f64)> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|&f| (f, phi(1.0 + probit(f)))).collect();
        let fit = fit_binormal(&pts).unwrap();
        assert!((fit.a - 1.0).abs() < 1e-9 && (fit.b - 1.0).abs() < 1e-9);
        assert!(fit_binormal(&[(0.0, 0.0), (0.5, 0.7), (1.0, 1.0)]).is_err());
        let f = roc_fit(&[0.9, 0.1, 0.8, 0.2], &[true, false, true, false]).unwrap();
        assert!(f.fallback.is_some());
        assert_eq!(f.auc, 1.0);
    }

    #[test]
    fn bootstrap_basics() {
        let data = [2.0; 50];
        let mean = |idx: &[usize]| Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64);
        let ci = bootstrap_ci(50, mean, 200, 0.05, 1).unwrap();
        assert_eq!((ci.lower, ci.point, ci.upper), (2.0, 2.0, 2.0));
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mean = |idx: &[usize]| Some(idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64);
        let a = bootstrap_ci(40, mean, 300, 0.05, 7).unwrap();
        let b = bootstrap_ci(40, mean, 300, 0.05, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.lower <= a.point && a.point <= a.upper);
        // a statistic undefined on some resamples forces redraws
        let picky = |idx: &[usize]| idx.contains(&0).then_some(1.0);
        let c = bootstrap_ci(5, picky, 100, 0.05, 3).unwrap();
        assert!(c.redraws > 0);
    }

    #[test]
    fn pr_curve_basics() {
        let c = pr_curve(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert!((c.auprc - 1.0).abs() < 1e-12);
        assert!(c.points.windows(2).all(|w| w[1].0 >= w[0].0));
    }

    #[test]
    fn mae_and_topk() {
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.5, 2.5], &[1.5, 2.5]).unwrap(), 0.0);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        let ranked = vec![vec![1, 2, 3], vec![3, 1, 2], vec![2, 3, 1]];
        let truth = [1, 1, 1];
        assert_eq!(topk_accuracy(&ranked, &truth, 3).unwrap(), 1.0);
        assert!((topk_accuracy(&ranked, &truth, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(topk_accuracy::<u32>(&[], &[], 1).is_err());
    }

    /// Cyclic Jacobi eigenvalues of a symmetric matrix.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-15 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn pca_explained_variance_matches_jacobi() {
        let rows = vec![
            vec![2.0, 0.5, -1.0, 3.0],
            vec![1.0, 1.5, 0.0, 2.0],
            vec![-1.0, 0.3, 2.0, 0.5],
            vec![0.5, -2.0, 1.0, 1.0],
            vec![3.0, 0.0, -0.5, -1.0],
        ];
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0))
                    .collect()
            })
            .collect();
        let ev = jacobi_eigenvalues(cov);
        let total: f64 = ev.iter().sum();
        let p = pca_project(&rows).unwrap();
        assert!((p.explained[0] - ev[0] / total).abs() < 1e-9);
        assert!((p.explained[1] - ev[1] / total).abs() < 1e-9);
        assert!(!p.rank_deficient);
    }

    #[test]
    fn pca_degenerate_and_isometric() {
        let line: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let p = pca_project(&line).unwrap();
        assert!((p.explained[0] - 1.0).abs() < 1e-9);
        assert!(p.rank_deficient);
        assert!(p.coords.iter().all(|c| c[1] == 0.0));
        let flat = vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![1.0, 4.0], vec![-2.0, 2.0]];
        let p = pca_project(&flat).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d0 = ((flat[i][0] - flat[j][0]).powi(2) + (flat[i][1] - flat[j][1]).powi(2)).sqrt();
                let d1 = ((p.coords[i][0] - p.coords[j][0]).powi(2) + (p.coords[i][1] - p.coords[j][1]).powi(2)).sqrt();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(s in prop::collection::vec(0u8..6, 2..30), l in prop::collection::vec(any::<bool>(), 2..30)) {
            let n = s.len().min(l.len());
            let (s, l): (Vec<f64>, Vec<bool>) = (s[..n].iter().map(|&x| x as f64).collect(), l[..n].to_vec());
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            prop_assert!((auc_empirical(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
        }

        #[test]
        fn better_ranked_positive_never_lowers_auc(
            s in prop::collection::vec(0.0f64..1.0, 4..30),
            l in prop::collection::vec(any::<bool>(), 4..30),
            bump in 0.0f64..1.0,
        ) {
            let n = s.len().min(l.len());
            let (mut s, l) = (s[..n].to_vec(), l[..n].to_vec());
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let before = auc_empirical(&s, &l).unwrap();
            let i = l.iter().position(|&x| x).unwrap();
            s[i] += bump;
            prop_assert!(auc_empirical(&s, &l).unwrap() >= before - 1e-12);
        }

        #[test]
        fn topk_is_monotone(ranked in prop::collection::vec(prop::collection::vec(0u8..8, 5), 1..20), seed in 0u8..8) {
            let truth: Vec<u8> = ranked.iter().enumerate().map(|(i, _)| (i as u8 + seed) % 8).collect();
            let acc: Vec<f64> = [1, 2, 3, 5].iter().map(|&k| topk_accuracy(&ranked, &truth, k).unwrap()).collect();
            prop_assert!(acc.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn pca_row_permutation_invariant(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..10)) {
            let a = pca_project(&rows).unwrap();
            let mut rev = rows.clone();
            rev.reverse();
            let b = pca_project(&rev).unwrap();
            prop_assert!((a.explained[0] - b.explained[0]).abs() < 1e-9);
            prop_assert!((a.explained[1] - b.explained[1]).abs() < 1e-9);
            // projections agree up to axis sign when eigenvalues are separated
            if !a.rank_deficient && (a.explained[0] - a.explained[1]).abs() > 1e-3 {
                let n = rows.len();
                for i in 0..n {
                    prop_assert!((a.coords[i][0].abs() - b.coords[n - 1 - i][0].abs()).abs() < 1e-6);
                }
            }
        }
    }
}
