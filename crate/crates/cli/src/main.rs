//! `discoseq`: train, evaluate, and verify paragraph-level discourse
//! relation sequence models.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 training/verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use discoseq_core::corpus::{gen_synthetic, parse_corpus, write_corpus, Corpus, GenConfig, Label, Regime};
use discoseq_core::harness::{
    binary_positive_f1, evaluate, prepare_embeddings, run_ensemble, run_verification_suite,
    train, verification_error, write_bucket_csv, write_metrics, write_run_report, TrainConfig,
};
use discoseq_core::model::{CrfMode, Model, Variant};
use discoseq_core::{Error, Result};

#[derive(Parser)]
#[command(name = "discoseq", version, about = "Paragraph-level discourse relation sequence prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Key-value config file mirroring the training-config field names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model variant: baseline-pair, basic-tied, untied, untied-crf.
    #[arg(long)]
    variant: Option<String>,
    /// Weight of the explicit-slot loss term.
    #[arg(long)]
    alpha: Option<f64>,
    /// CRF state space: off, plain4, typed8.
    #[arg(long)]
    crf: Option<String>,
    /// One-vs-all binary target label (Comp, Cont, Exp, Temp).
    #[arg(long)]
    binary: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bi-LSTM hidden state size.
    #[arg(long)]
    hidden: Option<usize>,
    /// Word-embedding dimensionality.
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = &self.variant {
            let variant = Variant::parse(v)
                .ok_or_else(|| Error::Config(format!("unknown variant '{v}'")))?;
            // Re-derive the implied CRF mode unless --crf overrides it below.
            let keep = config.crf;
            config.variant = variant;
            config.crf = match variant {
                Variant::UntiedCrf if keep == CrfMode::Off => CrfMode::Typed8,
                Variant::UntiedCrf => keep,
                _ => CrfMode::Off,
            };
        }
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(c) = &self.crf {
            config.crf = CrfMode::parse(c).ok_or_else(|| Error::Config(format!("unknown crf mode '{c}'")))?;
        }
        if let Some(b) = &self.binary {
            config.binary = Some(Label::parse(b).ok_or_else(|| Error::Config(format!("unknown label '{b}'")))?);
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(h) = self.hidden {
            config.hidden = h;
        }
        if let Some(w) = self.word_dim {
            config.word_dim = w;
        }
        if let Some(e) = self.max_epochs {
            config.max_epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            config.learning_rate = lr;
        }
        if let Some(d) = self.dropout {
            config.dropout = d;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the snapshot, run report, metrics, and bucket CSV.
    Train {
        /// Corpus directory containing train.txt, dev.txt, test.txt.
        #[arg(long)]
        corpus: PathBuf,
        /// Pretrained embedding file (text format); absent words get seeded draws.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a saved model on one corpus split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Split to score: train, dev, or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Decode a split and write per-slot predictions.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train one model per seed and majority-vote their test predictions.
    Ensemble {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Comma-separated seed list, e.g. 0,1,2,3,4,5,6,7,8,9.
        #[arg(long, default_value = "0,1,2,3,4,5,6,7,8,9")]
        seeds: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a planted-pattern synthetic corpus.
    GenSynth {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        paragraphs: usize,
        /// Pattern regime: connective, context, markov.
        #[arg(long, default_value = "connective")]
        regime: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// P(next = prev) for the markov regime's label chain.
        #[arg(long)]
        stay_prob: Option<f64>,
    },
    /// Run the oracle and gradient verification suites.
    Check,
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    parse_corpus(dir)
}

fn split_of<'c>(corpus: &'c Corpus, name: &str) -> Result<&'c Vec<discoseq_core::corpus::Paragraph>> {
    match name {
        "train" => Ok(&corpus.train),
        "dev" => Ok(&corpus.dev),
        "test" => Ok(&corpus.test),
        other => Err(Error::Config(format!("unknown split '{other}' (want train, dev, or test)"))),
    }
}

fn cmd_train(corpus_dir: &Path, embeddings: Option<&Path>, config_args: &ConfigArgs, out: &Path) -> Result<()> {
    let config = config_args.build()?;
    let corpus = load_corpus(corpus_dir)?;
    let table = prepare_embeddings(config.word_dim, embeddings, config.seed, &corpus)?;
    let (model, report) = train(&config, &corpus, &table)?;

    std::fs::create_dir_all(out)?;
    model.save(&out.join("model.json"))?;
    write_run_report(&report, &out.join("run_report.json"))?;
    write_metrics(&report.dev, &out.join("dev_metrics.json"))?;
    write_bucket_csv(&report.dev, &out.join("dev_buckets.csv"))?;
    if let Some(test) = &report.test {
        write_metrics(test, &out.join("test_metrics.json"))?;
        write_bucket_csv(test, &out.join("test_buckets.csv"))?;
    }

    println!(
        "selected epoch {} of {} | dev implicit macro-F1 {:.4} acc {:.4} | explicit macro-F1 {:.4} acc {:.4}",
        report.selected_epoch,
        config.max_epochs,
        report.dev.implicit.macro_f1,
        report.dev.implicit.accuracy,
        report.dev.explicit.macro_f1,
        report.dev.explicit.accuracy,
    );
    if let Some(test) = &report.test {
        println!(
            "test implicit macro-F1 {:.4} acc {:.4} | explicit macro-F1 {:.4} acc {:.4}",
            test.implicit.macro_f1, test.implicit.accuracy, test.explicit.macro_f1, test.explicit.accuracy
        );
        if config.binary.is_some() {
            println!("test implicit positive-class F1 {:.4}", binary_positive_f1(test));
        }
    }
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn cmd_eval(model_path: &Path, corpus_dir: &Path, embeddings: Option<&Path>, split: &str, out: &Path) -> Result<()> {
    let model = Model::load(model_path)?;
    let corpus = load_corpus(corpus_dir)?;
    let table = prepare_embeddings(model.config.word_dim, embeddings, model.config.embedding_seed, &corpus)?;
    let metrics = evaluate(&model, split_of(&corpus, split)?, &table, true)?;

    std::fs::create_dir_all(out)?;
    write_metrics(&metrics, &out.join(format!("{split}_metrics.json")))?;
    write_bucket_csv(&metrics, &out.join(format!("{split}_buckets.csv")))?;
    println!(
        "{split}: implicit macro-F1 {:.4} acc {:.4} | explicit macro-F1 {:.4} acc {:.4}",
        metrics.implicit.macro_f1, metrics.implicit.accuracy, metrics.explicit.macro_f1, metrics.explicit.accuracy
    );
    Ok(())
}

fn cmd_predict(model_path: &Path, corpus_dir: &Path, embeddings: Option<&Path>, split: &str, out: &Path) -> Result<()> {
    let model = Model::load(model_path)?;
    let corpus = load_corpus(corpus_dir)?;
    let table = prepare_embeddings(model.config.word_dim, embeddings, model.config.embedding_seed, &corpus)?;
    let split_data = split_of(&corpus, split)?;

    let class_names = model.config.class_names();
    let mut lines = String::from("paragraph\tslot\tkind\tpredicted\tgold\tprobs\n");
    for (pi, paragraph) in split_data.iter().enumerate() {
        let preds = model.decode_paragraph(paragraph, &table)?;
        for (si, (slot, pred)) in paragraph.slots.iter().zip(preds.iter()).enumerate() {
            let gold: Vec<&str> = slot.gold.iter().map(|l| l.name()).collect();
            let probs: Vec<String> = pred.probs.iter().map(|p| format!("{p:.6}")).collect();
            lines.push_str(&format!(
                "{pi}\t{si}\t{}\t{}\t{}\t{}\n",
                slot.kind.tag(),
                class_names[pred.label],
                gold.join("|"),
                probs.join(",")
            ));
        }
    }
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{split}_predictions.tsv"));
    std::fs::write(&path, lines)?;
    println!("predictions written to {}", path.display());
    Ok(())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| Error::Config(format!("bad seed '{s}'"))))
        .collect()
}

fn cmd_ensemble(corpus_dir: &Path, embeddings: Option<&Path>, seeds: &str, config_args: &ConfigArgs, out: &Path) -> Result<()> {
    let config = config_args.build()?;
    let seeds = parse_seeds(seeds)?;
    let corpus = load_corpus(corpus_dir)?;
    let report = run_ensemble(&config, &corpus, embeddings, &seeds)?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("ensemble_report.json"), serde_json::to_string_pretty(&report)?)?;
    write_metrics(&report.ensemble, &out.join("ensemble_metrics.json"))?;
    write_bucket_csv(&report.ensemble, &out.join("ensemble_buckets.csv"))?;
    println!(
        "{} runs | mean single implicit macro-F1 {:.4} | ensemble {:.4}",
        report.seeds.len(),
        report.mean_single_implicit_macro_f1,
        report.ensemble.implicit.macro_f1
    );
    Ok(())
}

fn cmd_gen_synth(out: &Path, paragraphs: usize, regime: &str, seed: u64, stay_prob: Option<f64>) -> Result<()> {
    let regime = Regime::parse(regime)
        .ok_or_else(|| Error::Config(format!("unknown regime '{regime}' (want connective, context, or markov)")))?;
    let mut config = GenConfig::new(regime, paragraphs);
    if let Some(stay) = stay_prob {
        if !(0.0..=1.0).contains(&stay) {
            return Err(Error::Config(format!("stay_prob {stay} outside [0, 1]")));
        }
        config.transition = discoseq_core::corpus::synth::sticky_transition(stay);
    }
    let corpus = gen_synthetic(&config, seed);
    write_corpus(&corpus, out)?;
    println!(
        "wrote {} train / {} dev / {} test paragraphs to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_check() -> Result<()> {
    let outcomes = run_verification_suite();
    for o in &outcomes {
        println!("{} {} - {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    verification_error(&outcomes)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { corpus, embeddings, config, out } => cmd_train(corpus, embeddings.as_deref(), config, out),
        Command::Eval { model, corpus, embeddings, split, out } => {
            cmd_eval(model, corpus, embeddings.as_deref(), split, out)
        }
        Command::Predict { model, corpus, embeddings, split, out } => {
            cmd_predict(model, corpus, embeddings.as_deref(), split, out)
        }
        Command::Ensemble { corpus, embeddings, seeds, config, out } => {
            cmd_ensemble(corpus, embeddings.as_deref(), seeds, config, out)
        }
        Command::GenSynth { out, paragraphs, regime, seed, stay_prob } => {
            cmd_gen_synth(out, *paragraphs, regime, *seed, *stay_prob)
        }
        Command::Check => cmd_check(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            if err.use_stderr() {
                eprintln!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
