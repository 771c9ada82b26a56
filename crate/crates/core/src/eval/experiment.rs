//! The six-variant comparison on the synthetic benchmark.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, mean_stdev};
use super::noise::{synthesize_noisy, NoiseSpec};
use super::synthetic::{generate, SyntheticBenchmark, SyntheticConfig};
use crate::alignment::corpus_word_error_rate;
use crate::bilm::{pretrain, BiLm, BiLmConfig, TrainSchedule};
use crate::config::RunConfig;
use crate::corpus::{vocabulary, Dataset, StopWordList, Utterance};
use crate::error::{Error, Result};
use crate::finetune::{joint_finetune, lm_only_finetune, mean_pair_similarity, ConfusionBatch, FinetuneConfig};
use crate::seed::derive_seed;
use crate::slu::{train_slu, Encoder, SluConfig, SluModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Classifier trained on recognized transcripts.
    Oracle,
    /// Randomly initialized embedding table instead of the language model.
    ContextIndependent,
    /// Pre-trained language model, no adaptation.
    Pretrained,
    /// Adapted with the language-model loss only.
    LmOnly,
    /// Joint objective with confusions from aligned transcript pairs.
    SupConf,
    /// Joint objective with confusions mined from confusion networks.
    UnsupConf,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Oracle,
        Variant::ContextIndependent,
        Variant::Pretrained,
        Variant::LmOnly,
        Variant::SupConf,
        Variant::UnsupConf,
    ];

    pub fn letter(self) -> char {
        (b'a' + Self::ALL.iter().position(|&v| v == self).expect("listed") as u8) as char
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Oracle => "oracle",
            Variant::ContextIndependent => "context-independent",
            Variant::Pretrained => "pretrained",
            Variant::LmOnly => "lm-only",
            Variant::SupConf => "sup-conf",
            Variant::UnsupConf => "unsup-conf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts the name or the row letter.
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s || s.len() == 1 && s.starts_with(v.letter()))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Everything that determines an experiment's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub seeds: usize,
    pub data: SyntheticConfig,
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
    pub n_best: usize,
    pub max_hyps: usize,
    pub min_count: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub lm_epochs: usize,
    pub lm_batch: usize,
    pub lm_lr: f64,
    pub beta: f64,
    pub ft_epochs: usize,
    pub ft_batch: usize,
    pub ft_lr: f64,
    pub slu_hidden: usize,
    pub slu_epochs: usize,
    pub slu_batch: usize,
    pub slu_lr: f64,
    pub variants: Vec<Variant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            seeds: 5,
            data: SyntheticConfig::default(),
            p_sub: 0.25,
            p_del: 0.0,
            p_ins: 0.0,
            n_best: 5,
            max_hyps: 5,
            min_count: 1,
            embed_dim: 16,
            hidden_dim: 16,
            lm_epochs: 10,
            lm_batch: 32,
            lm_lr: 0.005,
            beta: 0.1,
            ft_epochs: 10,
            ft_batch: 64,
            ft_lr: 0.01,
            slu_hidden: 16,
            slu_epochs: 50,
            slu_batch: 64,
            slu_lr: 0.005,
            variants: Variant::ALL.to_vec(),
        }
    }
}

pub const EXPERIMENT_KEYS: [&str; 33] = [
    "seed",
    "seeds",
    "intents",
    "keywords_per_intent",
    "context_per_intent",
    "fillers",
    "general_words",
    "train_size",
    "test_size",
    "adapt_size",
    "general_size",
    "context_purity",
    "p_sub",
    "p_del",
    "p_ins",
    "n_best",
    "max_hyps",
    "min_count",
    "embed_dim",
    "hidden_dim",
    "lm_epochs",
    "lm_batch",
    "lm_lr",
    "beta",
    "ft_epochs",
    "ft_batch",
    "ft_lr",
    "slu_hidden",
    "slu_epochs",
    "slu_batch",
    "slu_lr",
    "variants",
    "corpus",
];

impl ExperimentConfig {
    /// Reads the keys of [`EXPERIMENT_KEYS`] over the defaults. `corpus`
    /// may only name the built-in `synthetic` benchmark.
    pub fn from_run_config(rc: &RunConfig, seed_flag: Option<u64>) -> Result<Self> {
        rc.check_keys(&EXPERIMENT_KEYS)?;
        if let Some(c) = rc.raw("corpus") {
            if c != "synthetic" {
                return Err(Error::Config(format!("unsupported corpus {c:?}; only \"synthetic\" is built in")));
            }
        }
        let d = ExperimentConfig::default();
        let dd = d.data;
        let variants = match rc.raw("variants") {
            None => d.variants.clone(),
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<Variant>>>()?,
        };
        let cfg = ExperimentConfig {
            seed: rc.resolve_seed(seed_flag, d.seed)?,
            seeds: rc.get_or("seeds", d.seeds)?,
            data: SyntheticConfig {
                intents: rc.get_or("intents", dd.intents)?,
                keywords_per_intent: rc.get_or("keywords_per_intent", dd.keywords_per_intent)?,
                context_per_intent: rc.get_or("context_per_intent", dd.context_per_intent)?,
                fillers: rc.get_or("fillers", dd.fillers)?,
                general_words: rc.get_or("general_words", dd.general_words)?,
                train: rc.get_or("train_size", dd.train)?,
                test: rc.get_or("test_size", dd.test)?,
                adapt: rc.get_or("adapt_size", dd.adapt)?,
                general: rc.get_or("general_size", dd.general)?,
                context_purity: rc.get_or("context_purity", dd.context_purity)?,
                seed: 0,
            },
            p_sub: rc.get_or("p_sub", d.p_sub)?,
            p_del: rc.get_or("p_del", d.p_del)?,
            p_ins: rc.get_or("p_ins", d.p_ins)?,
            n_best: rc.get_or("n_best", d.n_best)?,
            max_hyps: rc.get_or("max_hyps", d.max_hyps)?,
            min_count: rc.get_or("min_count", d.min_count)?,
            embed_dim: rc.get_or("embed_dim", d.embed_dim)?,
            hidden_dim: rc.get_or("hidden_dim", d.hidden_dim)?,
            lm_epochs: rc.get_or("lm_epochs", d.lm_epochs)?,
            lm_batch: rc.get_or("lm_batch", d.lm_batch)?,
            lm_lr: rc.get_or("lm_lr", d.lm_lr)?,
            beta: rc.get_or("beta", d.beta)?,
            ft_epochs: rc.get_or("ft_epochs", d.ft_epochs)?,
            ft_batch: rc.get_or("ft_batch", d.ft_batch)?,
            ft_lr: rc.get_or("ft_lr", d.ft_lr)?,
            slu_hidden: rc.get_or("slu_hidden", d.slu_hidden)?,
            slu_epochs: rc.get_or("slu_epochs", d.slu_epochs)?,
            slu_batch: rc.get_or("slu_batch", d.slu_batch)?,
            slu_lr: rc.get_or("slu_lr", d.slu_lr)?,
            variants,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants selected".into()));
        }
        if self.embed_dim != self.hidden_dim {
            return Err(Error::Config(format!(
                "layer mixing needs embed_dim == hidden_dim, got {} and {}",
                self.embed_dim, self.hidden_dim
            )));
        }
        if self.max_hyps == 0 || self.n_best == 0 {
            return Err(Error::Config("n_best and max_hyps must be at least 1".into()));
        }
        self.noise_spec(0, &BTreeMap::new()).validate()
    }

    /// The effective configuration as `key=value` entries; its hash
    /// identifies the run.
    pub fn to_run_config(&self) -> RunConfig {
        let mut rc = RunConfig::new();
        let d = &self.data;
        rc.set("corpus", "synthetic");
        rc.set("seed", self.seed);
        rc.set("seeds", self.seeds);
        rc.set("intents", d.intents);
        rc.set("keywords_per_intent", d.keywords_per_intent);
        rc.set("context_per_intent", d.context_per_intent);
        rc.set("fillers", d.fillers);
        rc.set("general_words", d.general_words);
        rc.set("train_size", d.train);
        rc.set("test_size", d.test);
        rc.set("adapt_size", d.adapt);
        rc.set("general_size", d.general);
        rc.set("context_purity", d.context_purity);
        rc.set("p_sub", self.p_sub);
        rc.set("p_del", self.p_del);
        rc.set("p_ins", self.p_ins);
        rc.set("n_best", self.n_best);
        rc.set("max_hyps", self.max_hyps);
        rc.set("min_count", self.min_count);
        rc.set("embed_dim", self.embed_dim);
        rc.set("hidden_dim", self.hidden_dim);
        rc.set("lm_epochs", self.lm_epochs);
        rc.set("lm_batch", self.lm_batch);
        rc.set("lm_lr", self.lm_lr);
        rc.set("beta", self.beta);
        rc.set("ft_epochs", self.ft_epochs);
        rc.set("ft_batch", self.ft_batch);
        rc.set("ft_lr", self.ft_lr);
        rc.set("slu_hidden", self.slu_hidden);
        rc.set("slu_epochs", self.slu_epochs);
        rc.set("slu_batch", self.slu_batch);
        rc.set("slu_lr", self.slu_lr);
        rc.set(
            "variants",
            self.variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(","),
        );
        rc
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.seed + k).collect()
    }

    fn noise_spec(&self, seed: u64, confusions: &BTreeMap<String, Vec<(String, f64)>>) -> NoiseSpec {
        NoiseSpec {
            confusions: confusions.clone(),
            p_sub: self.p_sub,
            p_del: self.p_del,
            p_ins: self.p_ins,
            n_best: self.n_best,
            seed,
        }
    }

    pub fn finetune_config(&self, seed: u64, beta: f64) -> FinetuneConfig {
        FinetuneConfig {
            beta,
            epochs: self.ft_epochs,
            batch_size: self.ft_batch,
            lr: self.ft_lr,
            seed: derive_seed(seed, "finetune"),
        }
    }

    pub fn slu_config(&self, seed: u64) -> SluConfig {
        SluConfig {
            hidden_dim: self.slu_hidden,
            epochs: self.slu_epochs,
            batch_size: self.slu_batch,
            lr: self.slu_lr,
            seed: derive_seed(seed, "slu"),
        }
    }

    pub fn lm_config(&self, seed: u64) -> BiLmConfig {
        BiLmConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            seed: derive_seed(seed, "lm"),
        }
    }

    pub fn lm_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            epochs: self.lm_epochs,
            batch_size: self.lm_batch,
            lr: self.lm_lr,
        }
    }
}

/// Data of one seed: the clean benchmark and its noisy renderings.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub bench: SyntheticBenchmark,
    pub noisy_train: Dataset,
    pub noisy_test: Dataset,
    pub supervised: ConfusionBatch,
    pub unsupervised: ConfusionBatch,
    pub test_wer: f64,
}

fn asr_side(name: &str, pairs: &[crate::corpus::TranscriptPair]) -> Result<Dataset> {
    Dataset::new(name, pairs.iter().map(|p| p.asr.clone()).collect())
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let bench = generate(&SyntheticConfig {
        seed: derive_seed(seed, "data"),
        ..cfg.data
    })?;
    let spec = |stream: &str| cfg.noise_spec(derive_seed(seed, stream), &bench.confusions);
    let (train_pairs, _) = synthesize_noisy(&bench.train, &spec("noise-train"))?;
    let (adapt_pairs, adapt_nbest) = synthesize_noisy(&bench.adapt, &spec("noise-adapt"))?;
    let (test_pairs, _) = synthesize_noisy(&bench.test, &spec("noise-test"))?;
    let test_wer = corpus_word_error_rate(test_pairs.iter().map(|p| (&p.manual.tokens[..], &p.asr.tokens[..])))?;
    let stops = StopWordList::default_english();
    Ok(SeedData {
        noisy_train: asr_side("train-asr", &train_pairs)?,
        noisy_test: asr_side("test-asr", &test_pairs)?,
        supervised: ConfusionBatch::supervised(&adapt_pairs, &stops)?,
        unsupervised: ConfusionBatch::unsupervised(&adapt_nbest, &stops, cfg.max_hyps)?,
        bench,
        test_wer,
    })
}

/// Manual and noisy test accuracy of one classifier.
fn evaluate(model: &SluModel, lm: &BiLm, data: &SeedData) -> Result<(f64, f64)> {
    let score = |set: &Dataset| -> Result<f64> {
        let preds = model.predict(Some(lm), &set.utterances)?;
        let got: Vec<&str> = preds.iter().map(|p| p.intent.as_str()).collect();
        let gold: Vec<&str> = set.utterances.iter().map(|u| u.intent.as_deref().unwrap_or("")).collect();
        accuracy(&got, &gold)
    };
    Ok((score(&data.bench.test)?, score(&data.noisy_test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub manual_accuracy: f64,
    pub noisy_accuracy: f64,
    /// Mean within-pair cosine similarity of the supervised confusions at
    /// layers 0-1 under this variant's language model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_wer: f64,
    pub supervised_pairs: usize,
    pub unsupervised_pairs: usize,
    pub results: Vec<VariantResult>,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let data = prepare_seed(cfg, seed)?;
    let adapt_text: Vec<&Utterance> = data
        .supervised
        .examples
        .iter()
        .chain(&data.unsupervised.examples)
        .flat_map(|e| e.utterances())
        .collect();
    let adapt_set = Dataset {
        name: "adapt-text".into(),
        utterances: adapt_text.into_iter().cloned().collect(),
        intents: Vec::new(),
    };
    let vocab = vocabulary(&[&data.bench.general, &data.bench.train, &adapt_set], cfg.min_count);
    let base = pretrain(cfg.lm_config(seed), vocab, &data.bench.general, &cfg.lm_schedule())?.lm;
    let slu_cfg = cfg.slu_config(seed);

    let mut results = Vec::with_capacity(cfg.variants.len());
    for &variant in &cfg.variants {
        let (lm, train, encoder) = match variant {
            Variant::Oracle => (base.clone(), &data.noisy_train, Encoder::Contextual),
            Variant::ContextIndependent => (base.clone(), &data.bench.train, Encoder::Lookup),
            Variant::Pretrained => (base.clone(), &data.bench.train, Encoder::Contextual),
            Variant::LmOnly => (
                lm_only_finetune(&base, &data.supervised, &cfg.finetune_config(seed, 0.0))?.lm,
                &data.bench.train,
                Encoder::Contextual,
            ),
            Variant::SupConf => (
                joint_finetune(&base, &data.supervised, &cfg.finetune_config(seed, cfg.beta))?.lm,
                &data.bench.train,
                Encoder::Contextual,
            ),
            Variant::UnsupConf => (
                joint_finetune(&base, &data.unsupervised, &cfg.finetune_config(seed, cfg.beta))?.lm,
                &data.bench.train,
                Encoder::Contextual,
            ),
        };
        let (model, _) = train_slu(&lm, train, encoder, &slu_cfg)?;
        let (manual_accuracy, noisy_accuracy) = evaluate(&model, &lm, &data)?;
        let pair_similarity = match encoder {
            Encoder::Contextual => mean_pair_similarity(&lm, &data.supervised)?,
            Encoder::Lookup => None,
        };
        results.push(VariantResult {
            variant,
            manual_accuracy,
            noisy_accuracy,
            pair_similarity,
        });
    }
    Ok(SeedRun {
        seed,
        test_wer: data.test_wer,
        supervised_pairs: data.supervised.pair_count(),
        unsupervised_pairs: data.unsupervised.pair_count(),
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub row: char,
    pub variant: Variant,
    pub manual_accuracy: f64,
    pub noisy_accuracy: f64,
    pub manual_stdev: f64,
    pub noisy_stdev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantRow>,
    pub runs: Vec<SeedRun>,
    /// Seconds since the Unix epoch at completion; the only field that
    /// differs between repeated runs.
    pub timestamp: u64,
}

impl ExperimentReport {
    pub fn row(&self, v: Variant) -> Option<&VariantRow> {
        self.variants.iter().find(|r| r.variant == v)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    /// Serialization with the timestamp zeroed, for comparing runs.
    pub fn to_json_without_timestamp(&self) -> Result<String> {
        ExperimentReport {
            timestamp: 0,
            ..self.clone()
        }
        .to_json()
    }
}

/// Runs every seed (concurrently on `threads` workers when more than one)
/// and aggregates per-variant means and sample standard deviations.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let seeds = cfg.seed_list();
    let runs: Vec<SeedRun> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<_>>())?
    } else {
        seeds.iter().map(|&s| run_seed(cfg, s)).collect::<Result<_>>()?
    };
    let variants = cfg
        .variants
        .iter()
        .map(|&v| {
            let pick = |f: fn(&VariantResult) -> f64| -> Vec<f64> {
                runs.iter()
                    .map(|r| r.results.iter().find(|x| x.variant == v).map(f).expect("every run has every variant"))
                    .collect()
            };
            let (manual_accuracy, manual_stdev) = mean_stdev(&pick(|x| x.manual_accuracy));
            let (noisy_accuracy, noisy_stdev) = mean_stdev(&pick(|x| x.noisy_accuracy));
            VariantRow {
                row: v.letter(),
                variant: v,
                manual_accuracy,
                noisy_accuracy,
                manual_stdev,
                noisy_stdev,
            }
        })
        .collect();
    let rc = cfg.to_run_config();
    let config = EXPERIMENT_KEYS
        .iter()
        .filter_map(|k| rc.raw(k).map(|v| (k.to_string(), v.to_owned())))
        .collect();
    Ok(ExperimentReport {
        config_hash: rc.hash(),
        config,
        seeds,
        variants,
        runs,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    })
}
