//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so every line is shown.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use ethos_core::evaluation::{evaluate, write_report};
use ethos_core::inference::output::{write_results, ResultRow};
use ethos_core::inference::tasks::{audit_case, run_cases, TaskTokens};
use ethos_core::inference::{extract_cases, Case, GenerationParams, Label, ModelSource, OracleSource, Task};
use ethos_core::ingest::{load_tables, EventKind, RawEvent};
use ethos_core::metrics::{auc_ci, auc_empirical, phi, roc_fit, topk_accuracy};
use ethos_core::model::gpt::{batch_loss, sequence_logits};
use ethos_core::model::{loss_and_grad, train, Batch, Model, ModelConfig, TrainConfig};
use ethos_core::pipeline::Prepared;
use ethos_core::split::Split;
use ethos_core::synth::{bayes_auc, gen_cohort, MarkovOracle, SynthConfig};
use ethos_core::tokenizer::statics::{sofa_quantile, sofa_quantile_mean};
use ethos_core::tokenizer::{
    encode_atc, encode_icd10cm, encode_icd10pcs, fit_quantiles, names, TimeIntervalScheme, TokenizerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const MINUTES_PER_YEAR: f64 = 365.25 * 24.0 * 60.0;

fn prepared(cfg: &SynthConfig, dir: &Path) -> Result<Prepared, String> {
    gen_cohort(cfg, dir).map_err(err)?;
    Prepared::build(&load_tables(dir).map_err(err)?, TokenizerConfig::default()).map_err(err)
}

fn token_names(v: Vec<(String, ethos_core::tokenizer::TokenClass)>) -> Vec<String> {
    v.into_iter().map(|(t, _)| t).collect()
}

fn ac1_tokenizer_conformance() -> Outcome {
    let icd = token_names(encode_icd10cm("R4182").map_err(err)?);
    ensure!(icd == ["ICD_R41", "ICD_4-5_82"], "R4182 -> {icd:?}");
    let atc = token_names(encode_atc("A06AD04").map_err(err)?);
    ensure!(atc == ["ATC_A06", "ATC_4_A", "ATC_SUFFIX_D04"], "A06AD04 -> {atc:?}");
    let pcs = token_names(encode_icd10pcs("0DTJ4ZZ").map_err(err)?);
    ensure!(pcs.len() == 7, "0DTJ4ZZ -> {pcs:?}");
    ensure!(pcs.iter().enumerate().all(|(i, t)| t.starts_with(&format!("PCS{}_", i + 1))), "{pcs:?}");

    // A single blood-pressure event through the full timeline builder.
    let dir = tempfile::tempdir().map_err(err)?;
    let prep = prepared(&SynthConfig { n_patients: 40, ..Default::default() }, dir.path())?;
    let cohort = load_tables(dir.path()).map_err(err)?;
    let mut record = cohort.records().next().ok_or("empty cohort")?.clone();
    let t0 = record.events[0].timestamp;
    record.events = vec![RawEvent {
        patient_id: record.patient_id,
        timestamp: t0,
        kind: EventKind::BloodPressure { systolic: 120.0, diastolic: 80.0 },
    }];
    let (pht, _) = prep.tokenizer.build_pht(&record).map_err(err)?;
    let body: Vec<&str> = pht.body.iter().map(|&t| prep.tokenizer.vocab.token(t).unwrap_or("?")).collect();
    ensure!(body.len() == 3 && body[0] == names::BLOOD_PRESSURE, "BP -> {body:?}");
    ensure!(body[1].starts_with("_Q") && body[2].starts_with("_Q"), "BP -> {body:?}");
    Ok(format!("R4182 {icd:?}, ATC 3, PCS 7, BP {body:?}"))
}

fn ac2_interval_encoding() -> Outcome {
    let s = TimeIntervalScheme::standard();
    ensure!(s.encode(4.0).is_empty(), "4 min -> {:?}", s.encode_names(4.0));
    let a = s.encode_names(1.4 * MINUTES_PER_YEAR);
    ensure!(a == vec!["_=6mt"; 3], "1.4 y -> {a:?}");
    let b = s.encode_names(1.76 * MINUTES_PER_YEAR);
    ensure!(b == vec!["_=6mt"; 4], "1.76 y -> {b:?}");
    Ok("4 min -> [], 1.4 y -> 3 x _=6mt, 1.76 y -> 4 x _=6mt".into())
}

fn ac3_sofa_quantile_map() -> Outcome {
    let (q1, q2) = (sofa_quantile_mean(1), sofa_quantile_mean(2));
    ensure!(q1 == 1.0 && q2 == 3.5, "Q1 mean {q1}, Q2 mean {q2}");
    ensure!(sofa_quantile(23) == Some(10), "q(23) = {:?}", sofa_quantile(23));
    Ok(format!("Q1 mean {q1}, Q2 mean {q2}, q(23) = Q10"))
}

fn ac4_quantile_binner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let binner = fit_quantiles(xs.iter().map(|&x| ("x", x))).map_err(err)?;
    let bins = binner.category("x").ok_or("category missing")?;
    let mut counts = [0usize; 10];
    for &x in &xs {
        counts[bins.bin(x) as usize - 1] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / xs.len() as f64).collect();
    ensure!(freqs.iter().all(|f| (f - 0.1).abs() <= 0.01), "decile frequencies {freqs:?}");
    for _ in 0..10_000 {
        let a: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let b: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        ensure!(bins.bin(lo) <= bins.bin(hi), "bin({lo}) > bin({hi})");
    }
    let worst = freqs.iter().map(|f| (f - 0.1).abs()).fold(0.0, f64::max);
    Ok(format!("max |freq - 0.1| = {worst:.4}, 10^4 ordered pairs monotone"))
}

fn ac5_gradient_check() -> Outcome {
    let cfg = ModelConfig { vocab_size: 29, n_layer: 2, n_head: 2, d_model: 16, ctx_len: 16, tie_embeddings: false };
    let model = Model::<f64>::init(cfg.clone(), 5).map_err(err)?;
    let params = model.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n_seq, len) = (2, 16);
    let batch = Batch {
        tokens: (0..n_seq * len).map(|_| rng.gen_range(0..29)).collect(),
        targets: (0..n_seq * len).map(|_| rng.gen_range(0..29)).collect(),
        weights: vec![1.0; n_seq * len],
        n_seq,
        seq_len: len,
    };
    let mut grads = Vec::new();
    loss_and_grad(&cfg, &params, &batch, &mut grads, 1).map_err(err)?;
    let h = 1e-5;
    // roundoff of a central difference is ~1e-16 * |loss| / h, about 1e-10
    let floor = 1e-5;
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    let n_checked = 250;
    for _ in 0..n_checked {
        let i = rng.gen_range(0..p.len());
        p[i] = params[i] + h;
        let up = batch_loss(&cfg, &p, &batch).map_err(err)?;
        p[i] = params[i] - h;
        let down = batch_loss(&cfg, &p, &batch).map_err(err)?;
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - grads[i]).abs() / (numeric.abs() + grads[i].abs()).max(floor));
    }
    ensure!(worst < 1e-4, "max relative error {worst:.3e}");
    Ok(format!("max relative error {worst:.2e} over {n_checked} parameters (d=16, L=2, window 16, f64)"))
}

fn ac6_overfit() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let prep = prepared(&SynthConfig { n_patients: 60, ..Default::default() }, dir.path())?;
    let full = prep.train_corpus();
    let keep: Vec<u64> = full.entries.iter().take(32).map(|e| e.patient_id).collect();
    ensure!(keep.len() == 32, "only {} training timelines", keep.len());
    let corpus = full.select(|id| keep.contains(&id));
    let cfg = TrainConfig {
        ctx_len: 128,
        steps: 800,
        batch_size: 8,
        lr: 3e-3,
        min_lr: 3e-4,
        weight_decay: 0.0,
        eval_every: 0,
        ..Default::default()
    };
    let (_, report) = train(&corpus, None, &prep.tokenizer, &cfg).map_err(err)?;
    let tail = report.tail_loss(50);
    ensure!(tail < 0.1, "mean loss over the last 50 steps {tail:.4}");
    Ok(format!("32 timelines, {} steps: loss {:.3} -> {tail:.4}", report.steps, report.initial_loss))
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn oracle_estimates(
    cfg: &SynthConfig,
    task: Task,
    max_cases: usize,
) -> Result<(Vec<Case>, Vec<ethos_core::inference::TaskResult>), String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let prep = prepared(cfg, dir.path())?;
    let tt = TaskTokens::new(&prep.tokenizer).map_err(err)?;
    let mut cases = Vec::new();
    for p in prep.timelines.values() {
        cases.extend(extract_cases(p, task, &tt).0);
    }
    cases.truncate(max_cases);
    let oracle = OracleSource::new(MarkovOracle::new(cfg, &prep.tokenizer).map_err(err)?, &prep.tokenizer);
    let results = run_cases(&oracle, &cases, &GenerationParams::default(), &tt, 1).map_err(err)?;
    Ok((cases, results))
}

fn ac7_oracle_mortality() -> Outcome {
    // No lab effect: every admission has mortality exactly base_mortality.
    let cfg = SynthConfig { n_patients: 800, base_mortality: 0.2, lab_effect: 0.0, seed: 71, ..Default::default() };
    let (_, results) = oracle_estimates(&cfg, Task::InpatientMortality, 1000)?;
    ensure!(results.len() == 1000, "only {} admissions", results.len());
    let est: Vec<f64> = results.iter().map(|r| r.estimate.unwrap_or(f64::NAN)).collect();
    ensure!(
        est.iter().all(|e| (e * 20.0 - (e * 20.0).round()).abs() < 1e-9 && (0.0..=1.0).contains(e)),
        "estimate off the 21-point grid"
    );
    let (mean, se) = mean_se(&est);
    ensure!((mean - 0.2).abs() <= 2.0 * se, "mean {mean:.4} vs 0.2, 2 SE = {:.4}", 2.0 * se);
    Ok(format!("1000 admissions x 20 replicates: mean {mean:.4} (SE {se:.4}), all on grid"))
}

fn ac8_oracle_readmission_los() -> Outcome {
    let cfg = SynthConfig { n_patients: 1500, seed: 81, ..Default::default() };
    let (_, results) = oracle_estimates(&cfg, Task::Readmission30d, 1000)?;
    let est: Vec<f64> = results.iter().filter_map(|r| r.estimate).collect();
    let (rm, rse) = mean_se(&est);
    ensure!(
        (rm - cfg.readmit_30d_prob).abs() <= 2.0 * rse,
        "readmission mean {rm:.4} vs {}, 2 SE = {:.4}",
        cfg.readmit_30d_prob,
        2.0 * rse
    );
    let (_, results) = oracle_estimates(&cfg, Task::Los, 1000)?;
    let est: Vec<f64> = results.iter().filter_map(|r| r.estimate).collect();
    ensure!(est.len() >= 100, "only {} ICU stays with an estimate", est.len());
    let (lm, lse) = mean_se(&est);
    let target = cfg.los_distribution.mean_days;
    ensure!((lm - target).abs() <= 2.0 * lse, "LOS mean {lm:.3} vs {target}, 2 SE = {:.3}", 2.0 * lse);
    Ok(format!(
        "readmission {rm:.4} (SE {rse:.4}) vs {}; ICU LOS {lm:.3} d (SE {lse:.3}, n {}) vs {target}",
        cfg.readmit_30d_prob,
        est.len()
    ))
}

fn ac9_end_to_end() -> Outcome {
    let cfg = SynthConfig { n_patients: 3000, ..Default::default() };
    let bayes = bayes_auc(&cfg);
    ensure!((bayes - 0.90).abs() < 0.01, "world Bayes AUC {bayes:.3}");
    let dir = tempfile::tempdir().map_err(err)?;
    let prep = prepared(&cfg, dir.path())?;
    let tt = TaskTokens::new(&prep.tokenizer).map_err(err)?;
    let mut cases = Vec::new();
    for p in prep.split_timelines(Split::Test) {
        cases.extend(extract_cases(p, Task::InpatientMortality, &tt).0);
    }
    let labels: Vec<bool> = cases.iter().map(|c| c.label == Label::Binary(true)).collect();
    let tcfg = TrainConfig {
        d_model: 64,
        n_layer: 2,
        n_head: 4,
        ctx_len: 64,
        steps: 2500,
        batch_size: 16,
        eval_every: 0,
        ..Default::default()
    };
    let (model, report) =
        train(&prep.train_corpus(), Some(&prep.validation_corpus()), &prep.tokenizer, &tcfg).map_err(err)?;
    let source = ModelSource::new(&model, &prep.tokenizer).map_err(err)?;
    let results = run_cases(&source, &cases, &GenerationParams::default(), &tt, 1).map_err(err)?;
    let scores: Vec<f64> = results.iter().map(|r| r.estimate.unwrap_or(0.0)).collect();
    let auc = auc_empirical(&scores, &labels).map_err(err)?;
    let fit = roc_fit(&scores, &labels).map_err(err)?.auc;
    ensure!(auc >= 0.80, "model AUC {auc:.3} (fit {fit:.3}) on {} held-out admissions", cases.len());
    Ok(format!(
        "model AUC {auc:.3} (binormal {fit:.3}) on {} held-out admissions; Bayes {bayes:.3}; train loss {:.3}",
        cases.len(),
        report.tail_loss(50)
    ))
}

fn normal_scores(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let pos = Normal::new(1.0, 1.0).expect("valid");
    let neg = Normal::new(0.0, 1.0).expect("valid");
    let mut scores = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for _ in 0..n {
        scores.push(pos.sample(rng));
        labels.push(true);
        scores.push(neg.sample(rng));
        labels.push(false);
    }
    (scores, labels)
}

fn ac10_binormal_fit() -> Outcome {
    let truth = phi(1.0 / 2f64.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (scores, labels) = normal_scores(&mut rng, 10_000);
    let fit = roc_fit(&scores, &labels).map_err(err)?;
    let emp = auc_empirical(&scores, &labels).map_err(err)?;
    ensure!(fit.fallback.is_none(), "binormal fit fell back: {:?}", fit.fallback);
    ensure!((fit.auc - truth).abs() <= 0.02, "fitted AUC {:.4} vs {truth:.4}", fit.auc);
    ensure!((emp - fit.auc).abs() <= 0.03, "empirical {emp:.4} vs fitted {:.4}", fit.auc);
    Ok(format!("fitted {:.4}, empirical {emp:.4}, truth {truth:.4} (a {:.3}, b {:.3})", fit.auc, fit.a, fit.b))
}

fn ac11_bootstrap_coverage() -> Outcome {
    let truth = phi(1.0 / 2f64.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let reps = 200;
    let mut covered = 0;
    for r in 0..reps {
        let (scores, labels) = normal_scores(&mut rng, 100);
        let ci = auc_ci(&scores, &labels, 500, 0.05, r as u64).map_err(err)?;
        covered += (ci.lower <= truth && truth <= ci.upper) as usize;
    }
    let rate = covered as f64 / reps as f64;
    ensure!((0.90..=0.98).contains(&rate), "coverage {rate:.3}");
    Ok(format!("nominal 95% interval covered the true AUC in {covered}/{reps} = {rate:.3}"))
}

fn ac12_drg_ranking() -> Outcome {
    let cfg = SynthConfig { n_patients: 300, seed: 12, ..Default::default() };
    let dir = tempfile::tempdir().map_err(err)?;
    let prep = prepared(&cfg, dir.path())?;
    let tt = TaskTokens::new(&prep.tokenizer).map_err(err)?;
    let mut cases = Vec::new();
    for p in prep.timelines.values() {
        cases.extend(extract_cases(p, Task::Drg, &tt).0);
    }
    ensure!(cases.len() >= 100, "only {} DRG cases", cases.len());
    let oracle = OracleSource::new(MarkovOracle::new(&cfg, &prep.tokenizer).map_err(err)?, &prep.tokenizer);
    let results = run_cases(&oracle, &cases, &GenerationParams::default(), &tt, 1).map_err(err)?;
    let rows: Vec<ResultRow> = results.iter().map(|r| ResultRow::from_result(r, &prep.tokenizer.vocab)).collect();
    let ranked: Vec<Vec<&str>> = rows.iter().map(|r| r.ranked()).collect();
    let truth: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let mut acc = Vec::new();
    for k in 1..=5 {
        acc.push(topk_accuracy(&ranked, &truth, k).map_err(err)?);
    }
    ensure!(acc[0] == 1.0, "top-1 accuracy {:.4}", acc[0]);
    ensure!(acc.windows(2).all(|w| w[0] <= w[1]), "top-k not monotone: {acc:?}");
    Ok(format!("{} discharges: top-1..5 {acc:?}", cases.len()))
}

fn ac13_causality() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = SynthConfig { n_patients: 200, seed: 13, ..Default::default() };
    let prep = prepared(&cfg, dir.path())?;
    let corpus = prep.split_corpus(Split::Train);
    let mcfg = ModelConfig {
        vocab_size: prep.tokenizer.vocab.len(),
        n_layer: 2,
        n_head: 4,
        d_model: 32,
        ctx_len: 64,
        tie_embeddings: false,
    };
    let model = Model::<f32>::init(mcfg.clone(), 13).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v = mcfg.vocab_size;
    for w in 0..100 {
        let start = rng.gen_range(0..corpus.tokens.len() - mcfg.ctx_len);
        let len = rng.gen_range(2..=mcfg.ctx_len);
        let window = &corpus.tokens[start..start + len];
        let t = rng.gen_range(0..len);
        let mut perturbed = window.to_vec();
        perturbed[t] = (perturbed[t] + rng.gen_range(1..v as u32)) % v as u32;
        let a = sequence_logits(&mcfg, &model.params, window).map_err(err)?;
        let b = sequence_logits(&mcfg, &model.params, &perturbed).map_err(err)?;
        ensure!(a[..t * v] == b[..t * v], "window {w}: logits before position {t} changed");
        ensure!(a[t * v..] != b[t * v..], "window {w}: perturbation at {t} had no effect");
    }

    let tt = TaskTokens::new(&prep.tokenizer).map_err(err)?;
    let mut audited = BTreeMap::new();
    for task in Task::ALL {
        for p in prep.timelines.values() {
            for case in extract_cases(p, task, &tt).0 {
                audit_case(&case, p, &tt)?;
                *audited.entry(task.name()).or_insert(0usize) += 1;
            }
        }
    }
    for task in [Task::Sofa, Task::Drg] {
        ensure!(audited.get(task.name()).copied().unwrap_or(0) > 0, "no {task} cases audited");
    }
    let total: usize = audited.values().sum();
    Ok(format!("100 perturbed windows causal; {total} task contexts audited clean {audited:?}"))
}

/// synth -> tokenize -> train -> infer -> eval, all files under `root`.
fn pipeline(root: &Path) -> Result<(), String> {
    let cfg = SynthConfig { n_patients: 150, seed: 14, ..Default::default() };
    let (raw, tok, ckpt, out) = (root.join("raw"), root.join("tok"), root.join("ckpt"), root.join("out"));
    let prep = prepared(&cfg, &raw)?;
    prep.save(&tok).map_err(err)?;
    let prep = Prepared::load(&tok).map_err(err)?;
    let tcfg = TrainConfig {
        d_model: 16,
        n_head: 2,
        n_layer: 1,
        ctx_len: 32,
        steps: 20,
        batch_size: 4,
        eval_every: 10,
        eval_windows: 8,
        ..Default::default()
    };
    let (model, report) = train(&prep.train_corpus(), Some(&prep.validation_corpus()), &prep.tokenizer, &tcfg)
        .map_err(err)?;
    model.save(&ckpt.join("model.ckpt")).map_err(err)?;
    report.write_trace(&ckpt.join("loss_trace.csv")).map_err(err)?;
    fs::write(ckpt.join("train_report.json"), serde_json::to_string_pretty(&report).map_err(err)?).map_err(err)?;

    let tt = TaskTokens::new(&prep.tokenizer).map_err(err)?;
    let mut cases = Vec::new();
    for p in prep.split_timelines(Split::Test) {
        cases.extend(extract_cases(p, Task::InpatientMortality, &tt).0);
    }
    let params = GenerationParams { replicates: 5, ..Default::default() };
    let model_src = ModelSource::new(&model, &prep.tokenizer).map_err(err)?;
    let oracle_src = OracleSource::new(MarkovOracle::new(&cfg, &prep.tokenizer).map_err(err)?, &prep.tokenizer);
    for (name, src) in [("model", &model_src as &dyn ethos_core::inference::DistributionSource), ("oracle", &oracle_src)]
    {
        let results = run_cases(src, &cases, &params, &tt, 1).map_err(err)?;
        let path = out.join(name).join("results.csv");
        write_results(&path, &results, &prep.tokenizer.vocab).map_err(err)?;
        let rows: Vec<ResultRow> = results.iter().map(|r| ResultRow::from_result(r, &prep.tokenizer.vocab)).collect();
        let rep = evaluate(&rows, 200, 1).map_err(err)?;
        write_report(&out.join(name), &rep).map_err(err)?;
    }
    Ok(())
}

fn files(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn ac14_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure!(fa == fb, "different file sets");
    for f in [
        "tok/corpus.bin",
        "tok/corpus.idx",
        "ckpt/model.ckpt",
        "out/model/metrics.json",
        "out/oracle/metrics.json",
    ] {
        ensure!(fa.iter().any(|p| p == Path::new(f)), "{f} not produced");
    }
    for f in &fa {
        let (x, y) = (fs::read(a.path().join(f)).map_err(err)?, fs::read(b.path().join(f)).map_err(err)?);
        ensure!(x == y, "{} differs", f.display());
    }
    Ok(format!("{} files byte-identical across two runs", fa.len()))
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit_s: f64,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: "AC1", name: "tokenizer conformance", limit_s: 1.0, run: ac1_tokenizer_conformance },
        Criterion { id: "AC2", name: "interval encoding", limit_s: 1.0, run: ac2_interval_encoding },
        Criterion { id: "AC3", name: "SOFA quantile map", limit_s: 1.0, run: ac3_sofa_quantile_map },
        Criterion { id: "AC4", name: "quantile binner", limit_s: 5.0, run: ac4_quantile_binner },
        Criterion { id: "AC5", name: "gradient check", limit_s: 60.0, run: ac5_gradient_check },
        Criterion { id: "AC6", name: "overfit smoke test", limit_s: 300.0, run: ac6_overfit },
        Criterion { id: "AC7", name: "oracle equivalence (mortality)", limit_s: 120.0, run: ac7_oracle_mortality },
        Criterion {
            id: "AC8",
            name: "oracle equivalence (readmission, LOS)",
            limit_s: 120.0,
            run: ac8_oracle_readmission_los,
        },
        Criterion { id: "AC9", name: "end-to-end separability", limit_s: 900.0, run: ac9_end_to_end },
        Criterion { id: "AC10", name: "binormal ROC fit", limit_s: 10.0, run: ac10_binormal_fit },
        Criterion { id: "AC11", name: "bootstrap coverage", limit_s: 600.0, run: ac11_bootstrap_coverage },
        Criterion { id: "AC12", name: "DRG ranking", limit_s: 60.0, run: ac12_drg_ranking },
        Criterion { id: "AC13", name: "causality audits", limit_s: 120.0, run: ac13_causality },
        Criterion { id: "AC14", name: "determinism", limit_s: f64::INFINITY, run: ac14_determinism },
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for c in &criteria {
        if !only.is_empty() && !only.iter().any(|o| o.eq_ignore_ascii_case(c.id)) {
            continue;
        }
        let t = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(c.run)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = t.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(d) if secs > c.limit_s => Err(format!("{d}; took {secs:.1} s, limit {} s", c.limit_s)),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("{:<5} PASS  {} ({secs:.1} s): {detail}", c.id, c.name),
            Err(why) => {
                println!("{:<5} FAIL  {} ({secs:.1} s): {why}", c.id, c.name);
                failed.push(c.id);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
