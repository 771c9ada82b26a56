//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
//! configuration error, 3 numeric abort.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::alignment::{corpus_word_error_rate, edit_distance_align, extract_supervised_confusions};
use crate::bilm::{pretrain, BiLm, BiLmConfig, TrainSchedule};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::corpus::{
    load_confusions, load_nbest, load_pairs, load_utterances, tokenize, vocabulary, write_confusions, write_nbest,
    write_pairs, Channel, ConfusionPair, Dataset, StopWordList, Utterance,
};
use crate::error::{Error, Result};
use crate::eval::{run_experiment, synthesize_noisy, ExperimentConfig, NoiseSpec};
use crate::finetune::{joint_finetune, ConfusionBatch, FinetuneConfig, Provenance};
use crate::slu::{train_slu, Encoder, SluConfig, SluModel};
use crate::wcn::{build_wcn, extract_unsupervised_confusions};

#[derive(Debug, Parser)]
#[command(
    name = "aclb",
    version,
    about = "Confusion-aware language-model fine-tuning for intent detection on recognizer output",
    arg_required_else_help = true
)]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align reference and hypothesis transcripts and report word error rate.
    Align(AlignArgs),
    /// Build a word confusion network per recording from an n-best file.
    BuildWcn(BuildWcnArgs),
    /// Mine confusion pairs from transcript pairs or n-best lists.
    ExtractConfusions(ExtractArgs),
    /// Pre-train the bidirectional language model.
    Pretrain(PretrainArgs),
    /// Fine-tune a language model with the joint objective.
    Finetune(FinetuneArgs),
    /// Train the intent classifier on top of a frozen language model.
    TrainSlu(TrainSluArgs),
    /// Predict intents for an utterance file.
    Predict(PredictArgs),
    /// Run clean utterances through the simulated recognizer.
    Synthesize(SynthesizeArgs),
    /// Run the six-variant comparison and write a JSON report.
    Experiment(ExperimentArgs),
    /// Print a checkpoint's metadata and tensor shapes.
    InspectCkpt(InspectArgs),
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Reference text (with --hyp).
    #[arg(long, requires = "hyp", conflicts_with = "pairs")]
    reference: Option<String>,
    /// Hypothesis text (with --reference).
    #[arg(long, requires = "reference")]
    hyp: Option<String>,
    /// Transcript-pair JSONL file; aligns every pair.
    #[arg(long, required_unless_present = "reference")]
    pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildWcnArgs {
    /// N-best file.
    #[arg(long)]
    nbest: PathBuf,
    /// Use at most this many hypotheses per recording.
    #[arg(long, default_value_t = 5)]
    max_hyps: usize,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Mining mode; inferred from the input flag when absent.
    #[arg(long, value_enum)]
    mode: Option<Mining>,
    /// Transcript-pair JSONL file (supervised mining).
    #[arg(long, conflicts_with = "nbest", required_unless_present = "nbest")]
    pairs: Option<PathBuf>,
    /// N-best file (unsupervised mining).
    #[arg(long)]
    nbest: Option<PathBuf>,
    /// Stop-word file; the built-in English list when absent.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Hypotheses per recording for unsupervised mining.
    #[arg(long, default_value_t = 5)]
    max_hyps: usize,
    /// Output TSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mining {
    Supervised,
    Unsupervised,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Utterance JSONL corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// key=value file with: seed, embed_dim, hidden_dim, epochs, batch_size, lr, min_count.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the ACLB_SEED variable and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    /// Input language-model checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Confusion TSV from extract-confusions (either mode).
    #[arg(long)]
    pairs: PathBuf,
    /// Utterance JSONL holding every utterance the pairs refer to; repeatable.
    #[arg(long)]
    utterances: Vec<PathBuf>,
    /// Transcript-pair JSONL whose both sides are added as utterances; repeatable.
    #[arg(long)]
    transcripts: Vec<PathBuf>,
    /// N-best file whose hypotheses are added as utterances; repeatable.
    #[arg(long)]
    nbest: Vec<PathBuf>,
    /// Weight of the confusion loss.
    #[arg(long)]
    beta: Option<f64>,
    /// key=value file with: seed, beta, epochs, batch_size, lr.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the ACLB_SEED variable and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncoderArg {
    Contextual,
    Lookup,
}

#[derive(Debug, Args)]
struct TrainSluArgs {
    /// Language-model checkpoint.
    #[arg(long)]
    lm: PathBuf,
    /// Labeled utterance JSONL.
    #[arg(long)]
    train: PathBuf,
    /// key=value file with: seed, hidden_dim, epochs, batch_size, lr.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input representation.
    #[arg(long, value_enum, default_value_t = EncoderArg::Contextual)]
    encoder: EncoderArg,
    /// Seed; overrides the ACLB_SEED variable and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Language-model checkpoint.
    #[arg(long)]
    lm: PathBuf,
    /// Classifier checkpoint.
    #[arg(long)]
    slu: PathBuf,
    /// Utterance JSONL.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSONL of {"id", "intent", "probs"}.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthesizeArgs {
    /// Clean utterance JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Noise channel JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Output transcript-pair JSONL (manual vs. 1-best).
    #[arg(long)]
    out_pairs: PathBuf,
    /// Output n-best file.
    #[arg(long)]
    out_nbest: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// key=value experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed; overrides the ACLB_SEED variable and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Checkpoint file.
    path: PathBuf,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        // Fails only if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let threads = cli.threads.unwrap_or(1);
    match cli.command {
        Command::Align(a) => align(a),
        Command::BuildWcn(a) => build_wcn_cmd(a),
        Command::ExtractConfusions(a) => extract(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::TrainSlu(a) => train_slu_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Experiment(a) => experiment(a, threads),
        Command::InspectCkpt(a) => inspect(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>, allowed: &[&str]) -> Result<RunConfig> {
    let rc = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(),
    };
    rc.check_keys(allowed)?;
    Ok(rc)
}

fn align(a: AlignArgs) -> Result<()> {
    let pairs: Vec<(String, Vec<_>, Vec<_>)> = match (&a.pairs, a.reference, a.hyp) {
        (Some(p), _, _) => load_pairs(p)?
            .into_iter()
            .map(|p| (p.recording, p.manual.tokens, p.asr.tokens))
            .collect(),
        (None, Some(r), Some(h)) => vec![("input".to_owned(), tokenize(&r), tokenize(&h))],
        _ => return Err(Error::Usage("give --pairs or both --reference and --hyp".into())),
    };
    for (id, r, h) in &pairs {
        let al = edit_distance_align(r, h);
        println!("# {id} edits={}", al.cost);
        println!("{al}");
    }
    let wer = corpus_word_error_rate(pairs.iter().map(|(_, r, h)| (&r[..], &h[..])))?;
    println!("WER {wer:.4}");
    Ok(())
}

fn build_wcn_cmd(a: BuildWcnArgs) -> Result<()> {
    let mut text = String::new();
    for nb in load_nbest(&a.nbest)? {
        let cn = build_wcn(&nb.truncated(a.max_hyps))?;
        text.push_str(&format!("# {}\n", cn.recording));
        text.push_str(&cn.to_text());
    }
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn stop_words(path: Option<&Path>) -> Result<StopWordList> {
    path.map_or_else(|| Ok(StopWordList::default_english()), StopWordList::load)
}

fn extract(a: ExtractArgs) -> Result<()> {
    match (a.mode, &a.pairs, &a.nbest) {
        (Some(Mining::Supervised), None, _) => return Err(Error::Usage("--mode supervised needs --pairs".into())),
        (Some(Mining::Unsupervised), _, None) => return Err(Error::Usage("--mode unsupervised needs --nbest".into())),
        _ => {}
    }
    let stops = stop_words(a.stopwords.as_deref())?;
    let mut found: Vec<ConfusionPair> = Vec::new();
    if let Some(p) = &a.pairs {
        for pair in load_pairs(p)? {
            found.extend(extract_supervised_confusions(&pair, &stops));
        }
    }
    if let Some(p) = &a.nbest {
        for nb in load_nbest(p)? {
            found.extend(extract_unsupervised_confusions(&build_wcn(&nb.truncated(a.max_hyps))?, &stops));
        }
    }
    let mut out = create(&a.out)?;
    write_confusions(&mut out, &found)?;
    finish(out, &a.out)?;
    eprintln!("{} confusion pairs written to {}", found.len(), a.out.display());
    Ok(())
}

const PRETRAIN_KEYS: [&str; 7] = ["seed", "embed_dim", "hidden_dim", "epochs", "batch_size", "lr", "min_count"];

fn pretrain_cmd(a: PretrainArgs) -> Result<()> {
    let rc = load_config(a.config.as_deref(), &PRETRAIN_KEYS)?;
    let corpus = load_utterances(&a.corpus, Channel::Manual)?;
    let config = BiLmConfig {
        embed_dim: rc.get_or("embed_dim", 32)?,
        hidden_dim: rc.get_or("hidden_dim", 32)?,
        seed: rc.resolve_seed(a.seed, 0)?,
    };
    let schedule = TrainSchedule {
        epochs: rc.get_or("epochs", 10)?,
        batch_size: rc.get_or("batch_size", 32)?,
        lr: rc.get_or("lr", 0.001)?,
    };
    let vocab = vocabulary(&[&corpus], rc.get_or("min_count", 1)?);
    let trained = pretrain(config, vocab, &corpus, &schedule)?;
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        eprintln!("epoch {} mean loss {l:.4}", i + 1);
    }
    trained.lm.to_checkpoint().save(&a.out)
}

const FINETUNE_KEYS: [&str; 5] = ["seed", "beta", "epochs", "batch_size", "lr"];

fn finetune_cmd(a: FinetuneArgs) -> Result<()> {
    let rc = load_config(a.config.as_deref(), &FINETUNE_KEYS)?;
    let defaults = FinetuneConfig::default();
    let cfg = FinetuneConfig {
        beta: match a.beta {
            Some(b) => b,
            None => rc.get_or("beta", defaults.beta)?,
        },
        epochs: rc.get_or("epochs", defaults.epochs)?,
        batch_size: rc.get_or("batch_size", defaults.batch_size)?,
        lr: rc.get_or("lr", defaults.lr)?,
        seed: rc.resolve_seed(a.seed, defaults.seed)?,
    };
    let lm = BiLm::from_checkpoint(&Checkpoint::load(&a.ckpt)?)?;
    let pairs = load_confusions(&a.pairs)?;
    let mut utterances: Vec<Utterance> = Vec::new();
    for p in &a.utterances {
        utterances.extend(load_utterances(p, Channel::Manual)?.utterances);
    }
    for p in &a.transcripts {
        for pair in load_pairs(p)? {
            utterances.push(pair.manual);
            utterances.push(pair.asr);
        }
    }
    for p in &a.nbest {
        for nb in load_nbest(p)? {
            utterances.extend(nb.hypotheses);
        }
    }
    let utterances = Dataset::new("finetune", utterances)?.utterances;
    let provenance = if pairs.iter().any(|p| p.right.utterance.ends_with("#asr")) {
        Provenance::Supervised
    } else {
        Provenance::Unsupervised
    };
    let batch = ConfusionBatch::from_pairs(&pairs, &utterances, provenance)?;
    let out = joint_finetune(&lm, &batch, &cfg)?;
    for (i, t) in out.trace.iter().enumerate() {
        eprintln!("epoch {} L_LM {:.4} L_conf {:.4} L_FT {:.4}", i + 1, t.lm, t.conf, t.total);
    }
    out.lm.to_checkpoint().save(&a.out)
}

const SLU_KEYS: [&str; 5] = ["seed", "hidden_dim", "epochs", "batch_size", "lr"];

fn train_slu_cmd(a: TrainSluArgs) -> Result<()> {
    let rc = load_config(a.config.as_deref(), &SLU_KEYS)?;
    let d = SluConfig::default();
    let cfg = SluConfig {
        hidden_dim: rc.get_or("hidden_dim", d.hidden_dim)?,
        epochs: rc.get_or("epochs", d.epochs)?,
        batch_size: rc.get_or("batch_size", d.batch_size)?,
        lr: rc.get_or("lr", d.lr)?,
        seed: rc.resolve_seed(a.seed, d.seed)?,
    };
    let lm = BiLm::from_checkpoint(&Checkpoint::load(&a.lm)?)?;
    let data = load_utterances(&a.train, Channel::Manual)?;
    let encoder = match a.encoder {
        EncoderArg::Contextual => Encoder::Contextual,
        EncoderArg::Lookup => Encoder::Lookup,
    };
    let (model, losses) = train_slu(&lm, &data, encoder, &cfg)?;
    if let Some(last) = losses.last() {
        eprintln!("final epoch mean loss {last:.4}");
    }
    model.to_checkpoint().save(&a.out)
}

fn predict(a: PredictArgs) -> Result<()> {
    let lm = BiLm::from_checkpoint(&Checkpoint::load(&a.lm)?)?;
    let model = SluModel::from_checkpoint(&Checkpoint::load(&a.slu)?)?;
    let data = load_utterances(&a.input, Channel::Manual)?;
    let preds = model.predict(Some(&lm), &data.utterances)?;
    let mut out = create(&a.out)?;
    for (u, p) in data.utterances.iter().zip(&preds) {
        let line = json!({"id": u.id, "intent": p.intent, "probs": p.probs});
        writeln!(out, "{line}").map_err(|e| Error::io(&a.out, e))?;
    }
    finish(out, &a.out)
}

fn synthesize(a: SynthesizeArgs) -> Result<()> {
    let clean = load_utterances(&a.corpus, Channel::Manual)?;
    let spec = NoiseSpec::load(&a.spec)?;
    let (pairs, lists) = synthesize_noisy(&clean, &spec)?;
    let mut out = create(&a.out_pairs)?;
    write_pairs(&mut out, &pairs)?;
    finish(out, &a.out_pairs)?;
    let mut out = create(&a.out_nbest)?;
    write_nbest(&mut out, &lists)?;
    finish(out, &a.out_nbest)?;
    let wer = corpus_word_error_rate(pairs.iter().map(|p| (&p.manual.tokens[..], &p.asr.tokens[..])))?;
    eprintln!("{} utterances, 1-best WER {wer:.4}", pairs.len());
    Ok(())
}

fn experiment(a: ExperimentArgs, threads: usize) -> Result<()> {
    let rc = RunConfig::load(&a.config)?;
    let cfg = ExperimentConfig::from_run_config(&rc, a.seed)?;
    let report = run_experiment(&cfg, threads)?;
    for row in &report.variants {
        eprintln!(
            "({}) {:<20} manual {:.4} ± {:.4}  noisy {:.4} ± {:.4}",
            row.row, row.variant, row.manual_accuracy, row.manual_stdev, row.noisy_accuracy, row.noisy_stdev
        );
    }
    fs::write(&a.out, report.to_json()? + "\n").map_err(|e| Error::io(&a.out, e))
}

fn inspect(a: InspectArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.path)?;
    println!("layout: {}", ck.meta.layout);
    println!("vocabulary: {} entries", ck.meta.vocabulary.len());
    if !ck.meta.intents.is_empty() {
        println!("intents: {}", ck.meta.intents.join(", "));
    }
    for (k, v) in &ck.meta.hyperparameters {
        println!("{k}: {v}");
    }
    let mut total = 0;
    for (name, t) in ck.named() {
        println!("{name}\t{:?}", t.shape());
        total += t.len();
    }
    println!("{} tensors, {total} values", ck.tensors.len());
    Ok(())
}
