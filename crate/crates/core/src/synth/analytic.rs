//! Closed-form targets of the synthetic world.

use statrs::distribution::{Binomial, Discrete};

use super::{logistic, logit, world, SynthConfig, LAB_LEVELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticTask {
    InpatientMortality,
    IcuMortality,
    Readmission30d,
    /// Expected ICU length of stay in days (given survival).
    IcuLos,
    /// Expected SOFA score.
    Sofa,
}

/// Target value of `task` for an admission whose informative lab sits
/// `lab_offset` levels above the mean level.
pub fn analytic_task_probability(config: &SynthConfig, task: AnalyticTask, lab_offset: f64) -> f64 {
    match task {
        AnalyticTask::InpatientMortality | AnalyticTask::IcuMortality => {
            logistic(logit(config.base_mortality) + config.lab_effect * lab_offset)
        }
        AnalyticTask::Readmission30d => config.readmit_30d_prob,
        AnalyticTask::IcuLos => config.los_distribution.mean_days,
        AnalyticTask::Sofa => {
            let level = super::MEAN_LAB_LEVEL + lab_offset;
            world::SOFA_TRIALS as f64 * (0.05 + 0.04 * (level - 1.0))
        }
    }
}

/// AUC of two discrete score distributions given as per-score masses of
/// positives and negatives (same support order, ascending score).
fn discrete_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let (sp, sn): (f64, f64) = (pos.iter().sum(), neg.iter().sum());
    let mut below = 0.0;
    let mut auc = 0.0;
    for (p, n) in pos.iter().zip(neg) {
        auc += p / sp * (below + 0.5 * n / sn);
        below += n / sn;
    }
    auc
}

/// Best achievable mortality AUC when the informative level is known exactly.
pub fn bayes_auc(config: &SynthConfig) -> f64 {
    let mut levels: Vec<f64> = (1..=LAB_LEVELS).map(|l| config.mortality(l)).collect();
    if config.lab_effect < 0.0 {
        levels.reverse();
    }
    let pos: Vec<f64> = levels.clone();
    let neg: Vec<f64> = levels.iter().map(|m| 1.0 - m).collect();
    discrete_auc(&pos, &neg)
}

/// Expected AUC of the estimate k/reps where k ~ Binomial(reps, m(level)),
/// i.e. the ceiling for a perfect generator sampled `reps` times per case.
pub fn replicate_auc(config: &SynthConfig, reps: u64) -> f64 {
    let n = reps as usize + 1;
    let mut pos = vec![0.0; n];
    let mut neg = vec![0.0; n];
    for l in 1..=LAB_LEVELS {
        let m = config.mortality(l);
        let b = Binomial::new(m, reps).expect("probability in range");
        for k in 0..n {
            let p = b.pmf(k as u64);
            pos[k] += m * p;
            neg[k] += (1.0 - m) * p;
        }
    }
    discrete_auc(&pos, &neg)
}

/// Mean absolute error of a fixed SOFA estimate against the score
/// distribution at `level`.
pub fn sofa_expected_abs_error(level: u8, estimate: f64) -> f64 {
    let b = Binomial::new(world::sofa_p(level), world::SOFA_TRIALS).expect("probability in range");
    (0..=world::SOFA_TRIALS).map(|s| b.pmf(s) * (estimate - s as f64).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mortality_offset_shifts_log_odds() {
        let c = SynthConfig { base_mortality: 0.2, lab_effect: 0.5, ..Default::default() };
        let p = analytic_task_probability(&c, AnalyticTask::InpatientMortality, 2.0);
        let expect = 1.0 / (1.0 + (-((0.2f64 / 0.8).ln() + 1.0)).exp());
        assert!((p - expect).abs() < 1e-12);
    }

    #[test]
    fn auc_by_pair_enumeration() {
        // pairwise P(score_pos > score_neg) with ties counted half
        let c = SynthConfig::default();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 1..=LAB_LEVELS {
            for j in 1..=LAB_LEVELS {
                let w = c.mortality(i) * (1.0 - c.mortality(j));
                den += w;
                num += w * if i > j { 1.0 } else if i == j { 0.5 } else { 0.0 };
            }
        }
        assert!((bayes_auc(&c) - num / den).abs() < 1e-12);
        assert!(bayes_auc(&c) > 0.88 && bayes_auc(&c) < 0.92);
        let r = replicate_auc(&c, 20);
        assert!(r < bayes_auc(&c) && r > 0.85);
        let flat = SynthConfig { lab_effect: 0.0, ..Default::default() };
        assert!((bayes_auc(&flat) - 0.5).abs() < 1e-12);
    }
}
