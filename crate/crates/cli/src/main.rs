use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use simtbp_core::harness::corpus::{split_point, GeneratedCorpus};
use simtbp_core::harness::experiment::SUMMARY_FILE;
use simtbp_core::harness::report::{write_paired, write_runs};
use simtbp_core::harness::{gen_corpus, metrics_from_traces, plot_data, run_experiment, ExperimentConfig};
use simtbp_core::predictor::evaluate;
use simtbp_core::{NgramModel, Sentence, Vocabulary};

/// Branch prediction for simultaneous translation: corpus generation,
/// n-gram predictors, speculative decoding sweeps and metrics.
#[derive(Parser)]
#[command(name = "simtbp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Experiment configuration: a `key = value` file plus overrides.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (`key = value` per line, `#` comments).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set kappa=0.01`. Repeatable.
    ///
    /// Grid keys: `k` (wait-k values), `L` (adaptive latency weights; the
    /// adaptive policy writes an ambiguous token once 1 - L <= 0.5),
    /// `tau`, `predictors`. See the README for the full key list.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (same as `--set seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (same as `--set output=DIR`).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .with_context(|| format!("`--set {item}`: expected KEY=VALUE"))?;
            config.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            config.source.seed = seed;
        }
        if let Some(out) = &self.output {
            config.output = out.clone();
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

impl Split {
    fn apply<T>(self, items: &[T]) -> &[T] {
        let cut = split_point(items.len());
        match self {
            Split::Train => &items[..cut],
            Split::Test => &items[cut..],
            Split::All => items,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Markov corpus, its lexicon and references into the output dir.
    GenCorpus {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train an n-gram branch predictor on a corpus file.
    TrainLm {
        #[command(flatten)]
        config: ConfigArgs,
        /// Source corpus, one sentence per line. Generated from the config if absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        /// Where to write the model.
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Held-out accuracy and perplexity of an n-gram predictor.
    LmStats {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trained model; without it a model is trained on the training split.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Run a single grid point (one policy, predictor and threshold).
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full policy × predictor × threshold grid.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Per-run metrics and paired AL_diff from trace files or directories.
    Metrics {
        /// Trace files or directories searched recursively for `*.jsonl`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Reference translations, indexed by each trace's sentence number.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Directory for `metrics_runs.csv` and `metrics_paired.csv`.
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
    /// Plot-ready CSVs from a results directory.
    PlotData {
        dir: PathBuf,
        /// Drop grid points whose AWR exceeds this value.
        #[arg(long)]
        max_awr: Option<f64>,
    },
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

fn corpus_lines(config: &ExperimentConfig, corpus: Option<&Path>) -> Result<Vec<String>> {
    match corpus.or(config.corpus.as_deref()) {
        Some(path) => read_lines(path),
        None => Ok(gen_corpus(&config.source, config.sentences)?.corpus),
    }
}

fn intern_all(vocab: &mut Vocabulary, lines: &[String]) -> Vec<Sentence> {
    lines
        .iter()
        .map(|l| Sentence::new(l.split_whitespace().map(|t| vocab.intern(t)).collect()))
        .collect()
}

fn trace_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut children = std::fs::read_dir(path)
                .with_context(|| format!("reading {}", path.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<Vec<_>>>()?;
            children.sort();
            let nested: Vec<PathBuf> = children
                .into_iter()
                .filter(|p| p.is_dir() || p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            out.extend(trace_files(&nested)?);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

fn sweep(config: &ExperimentConfig) -> Result<ExitCode> {
    let outcome = run_experiment(config)?;
    println!("policy\tparam\ttau\tpredictor\tAL_base\tAL\tAL_diff\tAWR\tBLEU\tstatus");
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for r in &outcome.summary {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.policy,
            r.param,
            r.tau,
            r.predictor,
            f(r.al_baseline),
            f(r.al),
            f(r.al_diff),
            f(r.awr),
            f(r.bleu),
            r.status
        );
    }
    println!("results: {}", outcome.output.join(SUMMARY_FILE).display());
    if outcome.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &outcome.failures {
            eprintln!("check failed: {failure}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenCorpus { config } => {
            let config = config.resolve()?;
            let generated: GeneratedCorpus = gen_corpus(&config.source, config.sentences)?;
            for path in generated.write(&config.output)? {
                println!("{}", path.display());
            }
        }
        Command::TrainLm {
            config,
            corpus,
            split,
            model,
        } => {
            let config = config.resolve()?;
            let lines = corpus_lines(&config, corpus.as_deref())?;
            let mut vocab = Vocabulary::new();
            let sentences = intern_all(&mut vocab, &lines);
            let alphabet: Vec<_> = vocab.ordinary_ids().collect();
            let lm = NgramModel::train(split.apply(&sentences), &alphabet, config.ngram)?;
            lm.save(&model, &vocab)?;
            println!("{}", model.display());
        }
        Command::LmStats {
            config,
            model,
            corpus,
            split,
        } => {
            let config = config.resolve()?;
            let lines = corpus_lines(&config, corpus.as_deref())?;
            let mut vocab = Vocabulary::new();
            let lm = match &model {
                Some(path) => Some(NgramModel::load(path, &mut vocab)?),
                None => None,
            };
            let sentences = intern_all(&mut vocab, &lines);
            let lm = match lm {
                Some(lm) => lm,
                None => {
                    let alphabet: Vec<_> = vocab.ordinary_ids().collect();
                    NgramModel::train(Split::Train.apply(&sentences), &alphabet, config.ngram)?
                }
            };
            let eval = split.apply(&sentences);
            if eval.is_empty() {
                bail!("no sentences to evaluate");
            }
            let stats = evaluate(&lm, eval);
            println!("sentences\t{}", eval.len());
            println!("predictions\t{}", stats.predictions);
            println!("hits\t{}", stats.hits);
            println!("accuracy\t{}", stats.accuracy);
            println!("perplexity\t{}", stats.perplexity);
        }
        Command::Run { config } => {
            let config = config.resolve()?;
            if config.grid_size() != 1 {
                bail!(
                    "`run` takes one grid point but the config has {}; use `sweep`",
                    config.grid_size()
                );
            }
            return sweep(&config);
        }
        Command::Sweep { config } => return sweep(&config.resolve()?),
        Command::Metrics {
            traces,
            references,
            output,
        } => {
            let files = trace_files(&traces)?;
            if files.is_empty() {
                bail!("no trace files found");
            }
            let refs = references.as_deref().map(read_lines).transpose()?;
            let metrics = metrics_from_traces(&files, refs.as_deref())?;
            std::fs::create_dir_all(&output).with_context(|| format!("creating {}", output.display()))?;
            let runs = output.join("metrics_runs.csv");
            let paired = output.join("metrics_paired.csv");
            write_runs(&runs, &metrics.runs)?;
            write_paired(&paired, &metrics.paired)?;
            println!("{}\n{}", runs.display(), paired.display());
        }
        Command::PlotData { dir, max_awr } => {
            for path in plot_data(&dir, max_awr)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
