mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ethos_core::evaluation::{evaluate, write_report};
use ethos_core::inference::output::{read_results, write_results, write_traces};
use ethos_core::inference::tasks::{run_cases, TaskTokens};
use ethos_core::inference::{
    extract_cases, Aggregate, DistributionSource, GenerationParams, ModelSource, OracleSource, StopReason, Task,
};
use ethos_core::ingest::load_tables;
use ethos_core::metrics::pca_project;
use ethos_core::model::{train, Model, TrainConfig};
use ethos_core::pipeline::Prepared;
use ethos_core::split::Split;
use ethos_core::synth::{gen_cohort, GenerationManifest, MarkovOracle, SynthConfig};
use ethos_core::tokenizer::{names, Tokenizer, TokenizerConfig};

use manifest::RunManifest;

const CHECKPOINT_FILE: &str = "model.ckpt";
const LOSS_TRACE_FILE: &str = "loss_trace.csv";
const TRAIN_REPORT_FILE: &str = "train_report.json";
const SYNTH_CONFIG_FILE: &str = "synth_config.json";
const INGEST_REPORT_FILE: &str = "ingest_report.json";
const RESULTS_FILE: &str = "results.csv";
const EXCLUSIONS_FILE: &str = "exclusions.csv";

#[derive(Parser)]
#[command(name = "ethos", version, about = "Patient health timeline tokenization, training, zero-shot inference and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic MIMIC-shaped cohort.
    Synth {
        /// Synthetic world config (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "ETHOS_DATA_DIR")]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ingest raw tables, fit the tokenizer on the training split and write the corpus.
    Tokenize {
        #[arg(long, env = "ETHOS_DATA_DIR")]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Tokenizer config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the model on the training split of a tokenized directory.
    Train {
        /// Tokenized directory written by `tokenize`.
        #[arg(long)]
        corpus: PathBuf,
        /// Model and optimizer config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the configured step count.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run zero-shot Monte-Carlo inference for one task.
    Infer(InferArgs),
    /// Score a results file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export token embeddings and their 2-D PCA projection.
    Embed {
        /// Checkpoint file or training output directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Tokenized directory holding the vocabulary.
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one patient's timeline with token classes and ages.
    Inspect {
        #[arg(long, env = "ETHOS_DATA_DIR")]
        data: PathBuf,
        #[arg(long)]
        patient: Option<u64>,
        /// Print at most this many body tokens.
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, value_parser = ["model", "oracle"])]
    source: String,
    /// Tokenized directory written by `tokenize`.
    #[arg(long, env = "ETHOS_DATA_DIR")]
    data: PathBuf,
    /// Checkpoint file or training output directory (model source).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Synthetic world config (oracle source); defaults to the copy made by `tokenize`.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1000)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LOS summary over replicates: mean or median.
    #[arg(long, default_value = "mean")]
    los_aggregate: Aggregate,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Keep only the first N cases.
    #[arg(long)]
    limit: Option<usize>,
    /// Also dump generated token sequences.
    #[arg(long)]
    traces: bool,
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p.to_path_buf()
    }
}

fn synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: SynthConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut m = RunManifest::start("synth", Some(cfg.seed));
    m.config(&cfg)?;
    if let Some(c) = config {
        m.input(c);
    }
    let gm = gen_cohort(&cfg, out).context("generating cohort")?;
    m.output(out);
    println!(
        "{} patients, {} admissions, {} ICU stays, {} deaths -> {}",
        gm.n_patients,
        gm.n_admissions,
        gm.n_icu_stays,
        gm.n_deaths,
        out.display()
    );
    m.finish(out)
}

fn tokenize(data: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg: TokenizerConfig = read_json(config)?;
    let mut m = RunManifest::start("tokenize", None);
    m.config(&cfg)?;
    m.input(data);
    let cohort = load_tables(data).with_context(|| format!("loading tables from {}", data.display()))?;
    let prep = Prepared::build(&cohort, cfg).context("tokenizing")?;
    prep.save(out).with_context(|| format!("writing {}", out.display()))?;
    write_json(&out.join(INGEST_REPORT_FILE), &cohort.report)?;
    if let Ok(gm) = GenerationManifest::load(data) {
        write_json(&out.join(SYNTH_CONFIG_FILE), &gm.config)?;
    }
    m.output(out);
    let n_tokens: usize = prep.timelines.values().map(|p| p.len() + 1).sum();
    println!(
        "{} timelines, {} tokens, vocabulary {} -> {}",
        prep.timelines.len(),
        n_tokens,
        prep.tokenizer.vocab.len(),
        out.display()
    );
    m.finish(out)
}

fn train_cmd(
    corpus: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    steps: Option<usize>,
) -> Result<()> {
    let mut cfg: TrainConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    let mut m = RunManifest::start("train", Some(cfg.seed));
    m.config(&cfg)?;
    m.input(corpus);
    let prep = Prepared::load(corpus).with_context(|| format!("loading {}", corpus.display()))?;
    let (model, report) = train(&prep.train_corpus(), Some(&prep.validation_corpus()), &prep.tokenizer, &cfg)?;
    fs::create_dir_all(out)?;
    model.save(&out.join(CHECKPOINT_FILE))?;
    report.write_trace(&out.join(LOSS_TRACE_FILE))?;
    write_json(&out.join(TRAIN_REPORT_FILE), &report)?;
    m.output(out);
    if let Some(step) = report.diverged_at {
        eprintln!("warning: loss became non-finite at step {step}; saved the last finite parameters");
    }
    println!(
        "{} steps, loss {:.4} -> {:.4}, {:.0} tokens/s, {:.1} s",
        report.steps,
        report.initial_loss,
        report.tail_loss(50),
        report.tokens_per_s,
        report.elapsed_s
    );
    m.finish(out)
}

fn infer(a: &InferArgs) -> Result<()> {
    let params = GenerationParams {
        temperature: a.temperature,
        max_new_tokens: a.max_new_tokens,
        replicates: a.replicates,
        seed: a.seed,
        los_aggregate: a.los_aggregate,
    };
    params.validate()?;
    let mut m = RunManifest::start("infer", Some(a.seed));
    m.config(&serde_json::json!({
        "task": a.task.name(),
        "source": a.source,
        "split": a.split,
        "limit": a.limit,
        "params": params,
    }))?;
    m.input(&a.data);
    let prep = Prepared::load(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let tt = TaskTokens::new(&prep.tokenizer)?;

    let mut cases = Vec::new();
    let mut exclusions = Vec::new();
    for p in prep.split_timelines(a.split) {
        let (c, e) = extract_cases(p, a.task, &tt);
        cases.extend(c);
        exclusions.extend(e);
    }
    if let Some(n) = a.limit {
        cases.truncate(n);
    }
    if cases.is_empty() {
        bail!("no {} cases in the {:?} split", a.task, a.split);
    }

    let model;
    let source: Box<dyn DistributionSource + '_> = match a.source.as_str() {
        "model" => {
            let ckpt = checkpoint_path(a.checkpoint.as_deref().context("--checkpoint is required for --source model")?);
            m.input(&ckpt);
            model = Model::<f32>::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            Box::new(ModelSource::new(&model, &prep.tokenizer)?)
        }
        _ => {
            let path = a.synth_config.clone().unwrap_or_else(|| a.data.join(SYNTH_CONFIG_FILE));
            m.input(&path);
            let cfg: SynthConfig = read_json(Some(&path))?;
            Box::new(OracleSource::new(MarkovOracle::new(&cfg, &prep.tokenizer)?, &prep.tokenizer))
        }
    };

    let results = run_cases(source.as_ref(), &cases, &params, &tt, a.threads)?;
    fs::create_dir_all(&a.out)?;
    write_results(&a.out.join(RESULTS_FILE), &results, &prep.tokenizer.vocab)?;
    let mut w = csv::Writer::from_path(a.out.join(EXCLUSIONS_FILE))?;
    w.write_record(["patient_id", "index", "task", "reason"])?;
    for e in &exclusions {
        w.write_record([e.patient_id.to_string(), e.index.to_string(), a.task.name().to_string(), e.reason.clone()])?;
    }
    w.flush()?;
    if a.traces {
        let contexts: Vec<_> = cases.iter().map(|c| &c.context).collect();
        write_traces(&a.out.join("traces"), &results, &contexts, prep.tokenizer.id(names::END_OF_TIMELINE)?)?;
    }
    m.output(&a.out);
    let capped: usize = results.iter().filter_map(|r| r.stop_counts.get(&StopReason::TokenCap)).sum();
    println!(
        "{} cases ({} excluded), {} replicates each, {} hit the token cap -> {}",
        results.len(),
        exclusions.len(),
        a.replicates,
        capped,
        a.out.display()
    );
    m.finish(&a.out)
}

fn eval(results: &Path, out: &Path, n_boot: usize, seed: u64) -> Result<()> {
    let mut m = RunManifest::start("eval", Some(seed));
    m.config(&serde_json::json!({ "n_boot": n_boot }))?;
    m.input(results);
    let rows = read_results(results).with_context(|| format!("reading {}", results.display()))?;
    let rep = evaluate(&rows, n_boot, seed)?;
    write_report(out, &rep)?;
    m.output(out);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    print!("{}: n={}", rep.task, rep.n);
    if rep.auc_fit.is_some() {
        let ci = rep.auc_ci.as_ref().map(|c| format!(" [{:.3}, {:.3}]", c.lower, c.upper)).unwrap_or_default();
        print!(" auc_fit={} auc_emp={}{ci} auprc={}", fmt(rep.auc_fit), fmt(rep.auc_emp), fmt(rep.auprc));
    }
    if rep.mae.is_some() {
        print!(" mae={}", fmt(rep.mae));
    }
    for (k, v) in &rep.topk {
        print!(" top{k}={v:.3}");
    }
    println!();
    for n in &rep.notes {
        println!("note: {n}");
    }
    m.finish(out)
}

fn embed(checkpoint: &Path, tokenizer_dir: &Path, out: &Path) -> Result<()> {
    let ckpt = checkpoint_path(checkpoint);
    let mut m = RunManifest::start("embed", None);
    m.input(&ckpt);
    m.input(tokenizer_dir);
    let model = Model::<f32>::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let tok = Tokenizer::load(tokenizer_dir)?;
    if tok.vocab.len() != model.config.vocab_size {
        bail!("checkpoint vocabulary {} does not match tokenizer {}", model.config.vocab_size, tok.vocab.len());
    }
    let ids: Vec<u32> = tok.vocab.iter().map(|(id, _, _)| id).collect();
    let emb = model.export_embeddings(&ids)?;
    fs::create_dir_all(out)?;

    let mut w = csv::Writer::from_path(out.join("embeddings.csv"))?;
    let mut header = vec!["token_id".to_string(), "token".into(), "class".into()];
    header.extend((0..model.config.d_model).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for (id, name, class) in tok.vocab.iter() {
        let mut rec = vec![id.to_string(), name.to_string(), class_name(class)];
        rec.extend(emb[id as usize].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let rows: Vec<Vec<f64>> = emb.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let pca = pca_project(&rows)?;
    let mut w = csv::Writer::from_path(out.join("pca.csv"))?;
    w.write_record(["token_id", "token", "class", "pc1", "pc2"])?;
    for (id, name, class) in tok.vocab.iter() {
        let [x, y] = pca.coords[id as usize];
        w.write_record([id.to_string(), name.to_string(), class_name(class), x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    write_json(
        &out.join("pca_summary.json"),
        &serde_json::json!({ "explained": pca.explained, "rank_deficient": pca.rank_deficient }),
    )?;
    m.output(out);
    println!(
        "{} embeddings of width {}; PC1 {:.1}%, PC2 {:.1}% -> {}",
        emb.len(),
        model.config.d_model,
        100.0 * pca.explained[0],
        100.0 * pca.explained[1],
        out.display()
    );
    m.finish(out)
}

fn class_name<T: serde::Serialize>(class: T) -> String {
    serde_json::to_value(class).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn inspect(data: &Path, patient: Option<u64>, limit: Option<usize>) -> Result<()> {
    let prep = Prepared::load(data).with_context(|| format!("loading {}", data.display()))?;
    let pht = match patient {
        Some(id) => prep.timelines.get(&id).with_context(|| format!("patient {id} not found"))?,
        None => prep.timelines.values().next().context("no timelines")?,
    };
    let vocab = &prep.tokenizer.vocab;
    let name = |t| vocab.token(t).unwrap_or("?");
    let class = |t| vocab.class(t).map(class_name).unwrap_or_default();
    println!(
        "patient {} ({:?} split), {} tokens, age at first event {:.2} y",
        pht.patient_id,
        Split::of(pht.patient_id),
        pht.len(),
        pht.anchor.start_age
    );
    for (i, &t) in pht.header.iter().enumerate() {
        println!("  h{i:<5} {:>9} {:<32} {}", "", name(t), class(t));
    }
    let n = limit.unwrap_or(pht.body.len()).min(pht.body.len());
    for (i, &t) in pht.body[..n].iter().enumerate() {
        let age = pht.timestamps.as_ref().map(|ts| format!("{:.4}", ts[i])).unwrap_or_default();
        println!("  {i:<6} {age:>9} {:<32} {}", name(t), class(t));
    }
    if n < pht.body.len() {
        println!("  ... {} more", pht.body.len() - n);
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { config, out, seed } => synth(config.as_deref(), &out, seed),
        Command::Tokenize { data, out, config } => tokenize(&data, &out, config.as_deref()),
        Command::Train { corpus, config, out, seed, threads, steps } => {
            train_cmd(&corpus, config.as_deref(), &out, seed, threads, steps)
        }
        Command::Infer(a) => infer(&a),
        Command::Eval { results, out, n_boot, seed } => eval(&results, &out, n_boot, seed),
        Command::Embed { checkpoint, tokenizer, out } => embed(&checkpoint, &tokenizer, &out),
        Command::Inspect { data, patient, limit } => inspect(&data, patient, limit),
    }
}
