//! `pqa`: build parallel-passage QA datasets and run lexical diagnostics.
//!
//! Reports go to stdout, everything else to stderr. Exit status is 0 on
//! success, 2 for bad usage or unreadable input, 1 for internal failures.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use pqa_core::datastore::{compute_stats, load_squad, AnnotationStore, ParallelQaDataset, QaInstance};
use pqa_core::diagnostics::{format_table, report_json, retrieval_rate, Metric};
use pqa_core::evaluation::{evaluate, evaluate_with_categories, PredictionSet};
use pqa_core::lexmetrics::Bm25Params;
use pqa_core::pairing::{
    candidates_to_jsonl, fragment, pair_passages, read_corpus, to_passage_pair, EntityManifest, PairingConfig,
    PassageFragment,
};
use pqa_core::textproc::{tokenize, RawDocument, SourceKind};
use pqa_core::topicmodel::{train_lda, LdaConfig, TopicModel};

#[derive(Parser)]
#[command(name = "pqa", version, about = "Parallel-passage QA toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetFormat {
    Pqa,
    Squad,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    News,
    Wiki,
    Other,
}

impl From<Source> for SourceKind {
    fn from(s: Source) -> Self {
        match s {
            Source::News => SourceKind::News,
            Source::Wiki => SourceKind::Wiki,
            Source::Other => SourceKind::Other,
        }
    }
}

#[derive(clap::Args)]
struct DatasetArgs {
    /// Dataset file (ParallelQA JSON or SQuAD v1.1 JSON).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "pqa")]
    format: DatasetFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Read a directory of .txt files or a JSON-lines corpus and write it as JSON lines.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Source kind for plain-text files.
        #[arg(long, value_enum, default_value = "other")]
        source: Source,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pair news articles with encyclopedia fragments.
    Pair {
        #[arg(long)]
        news: PathBuf,
        /// Encyclopedia corpus: a directory of .txt files or a JSON-lines file.
        #[arg(long)]
        wiki: PathBuf,
        /// JSON map entity -> document; restricts the pool to documents for
        /// each article's most frequent entities.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        entities_per_article: usize,
        #[arg(long = "k", default_value_t = 5)]
        k_neighbors: usize,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 500)]
        max_words: usize,
        #[arg(long, default_value_t = 0.05)]
        min_score: f64,
        #[arg(long, default_value_t = 50)]
        topics: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Load a trained topic model instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Save the trained topic model.
        #[arg(long)]
        save_model: Option<PathBuf>,
        /// Write a ParallelQA skeleton (no questions) for the emitted pairs.
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
    /// Top-sentence answer containment per lexical metric.
    Diagnose {
        #[command(flatten)]
        data: DatasetArgs,
        /// Repeat for several metrics.
        #[arg(long, value_parser = parse_metric, default_value = "jaccard")]
        metric: Vec<Metric>,
        #[arg(long)]
        table: bool,
    },
    /// EM/F1 of a predictions file ({qa_id: answer}).
    Eval {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        predictions: PathBuf,
        /// Also assign error categories, using this metric for the
        /// wrong-sentence check.
        #[arg(long, value_parser = parse_metric)]
        categories: Option<Metric>,
        #[arg(long)]
        table: bool,
        #[arg(long, default_value = "Model")]
        label: String,
    },
    /// Answer-length and entity statistics of a ParallelQA dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        table: bool,
    },
    /// Run the annotation HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, env = "PQA_STORE")]
        store: PathBuf,
        /// Base dataset the journal is replayed onto.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write the base dataset plus all journaled annotations.
    Export {
        #[arg(long, env = "PQA_STORE")]
        store: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse::<Metric>()
        .map_err(|_| format!("unknown metric {s:?} (expected jaccard, tfidf or bm25)"))
}

enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

trait InputContext<T> {
    fn input(self, what: impl FnOnce() -> String) -> Outcome<T>;
    fn internal(self, what: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self, what: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Input(e.into().context(what())))
    }

    fn internal(self, what: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Internal(e.into().context(what())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit(output: Option<&Path>, payload: &str) -> Outcome {
    let mut payload = payload.to_string();
    if !payload.is_empty() && !payload.ends_with('\n') {
        payload.push('\n');
    }
    match output {
        Some(p) => fs::write(p, payload).internal(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .lock()
            .write_all(payload.as_bytes())
            .internal(|| "writing stdout".into()),
    }
}

fn json<T: serde::Serialize>(value: &T) -> Outcome<String> {
    report_json(value).internal(|| "serializing report".into())
}

fn load_instances(args: &DatasetArgs) -> Outcome<(Vec<QaInstance>, &'static str)> {
    let path = &args.dataset;
    match args.format {
        DatasetFormat::Pqa => {
            let ds = ParallelQaDataset::load(path).input(|| format!("loading {}", path.display()))?;
            Ok((ds.instances(), "ParallelQA"))
        }
        DatasetFormat::Squad => {
            let ds = load_squad(path).input(|| format!("loading {}", path.display()))?;
            if !ds.warnings.is_empty() {
                eprintln!(
                    "{} answer offset warnings, {} items without a locatable answer",
                    ds.warnings.len(),
                    ds.invalid_count()
                );
            }
            Ok((ds.instances(), "SQuAD"))
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Ingest { input, source, output } => {
            let docs = read_corpus(&input, source.into()).input(|| format!("reading {}", input.display()))?;
            let mut out = String::new();
            for d in &docs {
                out.push_str(&serde_json::to_string(d).internal(|| "serializing document".into())?);
                out.push('\n');
            }
            eprintln!("{} documents", docs.len());
            emit(output.as_deref(), &out)
        }
        Command::Pair {
            news,
            wiki,
            manifest,
            entities_per_article,
            k_neighbors,
            lambda,
            max_words,
            min_score,
            topics,
            iterations,
            seed,
            model,
            save_model,
            dataset_out,
        } => {
            let config = PairingConfig {
                entities_per_article,
                k_neighbors,
                lambda,
                max_words,
                min_score,
                ..PairingConfig::default()
            };
            config.validate().input(|| "pairing options".into())?;
            let news_docs = read_corpus(&news, SourceKind::News).input(|| format!("reading {}", news.display()))?;
            if news_docs.is_empty() {
                return Err(Failure::Input(anyhow!("empty news corpus: {}", news.display())));
            }
            let wiki_docs: Vec<RawDocument> = match &manifest {
                Some(m) => EntityManifest::load(m)
                    .and_then(|m| m.documents_for(&news_docs, entities_per_article))
                    .input(|| format!("resolving entities via {}", m.display()))?,
                None => read_corpus(&wiki, SourceKind::Wiki).input(|| format!("reading {}", wiki.display()))?,
            };
            let pool: Vec<PassageFragment> = wiki_docs.iter().flat_map(|d| fragment(d, max_words)).collect();
            if pool.is_empty() {
                return Err(Failure::Input(anyhow!(pqa_core::Error::EmptyWikiPool)));
            }
            eprintln!("{} news articles, {} wiki fragments", news_docs.len(), pool.len());

            let topic_model = match &model {
                Some(p) => TopicModel::load(p).input(|| format!("loading model {}", p.display()))?,
                None => {
                    let corpus: Vec<_> = news_docs
                        .iter()
                        .map(|d| tokenize(&d.text))
                        .chain(pool.iter().map(|f| tokenize(&f.text)))
                        .collect();
                    let lda = LdaConfig {
                        iterations,
                        seed,
                        ..LdaConfig::with_topics(topics)
                    };
                    train_lda(&corpus, &lda).input(|| "training topic model".into())?
                }
            };
            if let Some(p) = &save_model {
                topic_model.save(p).internal(|| format!("saving model {}", p.display()))?;
            }

            let outcome = pair_passages(&news_docs, &pool, &topic_model, &config).input(|| "pairing".into())?;
            for s in &outcome.skipped {
                let best = s.best_score.map_or("none".to_string(), |b| format!("{b:.4}"));
                eprintln!("skipped {}: best score {best} below {}", s.news_id, config.min_score);
            }
            if let Some(p) = &dataset_out {
                let pairs = outcome
                    .pairs
                    .iter()
                    .filter_map(|c| {
                        let n = news_docs.iter().find(|d| d.id == c.news_id)?;
                        let f = pool.iter().find(|f| f.reference() == c.wiki_fragment)?;
                        Some(to_passage_pair(n, f))
                    })
                    .collect();
                ParallelQaDataset::new(pairs)
                    .save(p)
                    .internal(|| format!("writing {}", p.display()))?;
            }
            emit(
                None,
                &candidates_to_jsonl(&outcome.pairs).internal(|| "serializing pairs".into())?,
            )
        }
        Command::Diagnose { data, metric, table } => {
            let (items, label) = load_instances(&data)?;
            let reports: Vec<_> = metric
                .iter()
                .map(|&m| retrieval_rate(&items, m, Bm25Params::default()))
                .collect();
            let payload = if table {
                format_table(label, &reports)
            } else if let [single] = reports.as_slice() {
                json(single)?
            } else {
                json(&reports)?
            };
            emit(None, &payload)
        }
        Command::Eval {
            data,
            predictions,
            categories,
            table,
            label,
        } => {
            let (items, _) = load_instances(&data)?;
            let preds = PredictionSet::load(&predictions).input(|| format!("loading {}", predictions.display()))?;
            let report = match categories {
                Some(m) => evaluate_with_categories(&items, &preds, m, Bm25Params::default()),
                None => evaluate(&items, &preds),
            };
            if !report.missing.is_empty() {
                eprintln!(
                    "warning: {} items have no prediction and score 0: {}",
                    report.missing.len(),
                    report.missing.join(", ")
                );
            }
            let payload = if table { report.format_table(&label) } else { json(&report)? };
            emit(None, &payload)
        }
        Command::Stats { dataset, table } => {
            let ds = ParallelQaDataset::load(&dataset).input(|| format!("loading {}", dataset.display()))?;
            let stats = compute_stats(&ds).input(|| format!("statistics of {}", dataset.display()))?;
            let payload = if table {
                format!(
                    "pairs                  {}\nqas                    {}\nanswers                {}\nmean answer tokens     {:.2}\nnamed-entity answers   {:.2}% (approximate)\nanswers in passage a/b {}/{}\n",
                    stats.num_pairs,
                    stats.num_qas,
                    stats.num_answers,
                    stats.mean_answer_len_tokens,
                    stats.named_entity_answer_rate * 100.0,
                    stats.answers_per_passage_index[0],
                    stats.answers_per_passage_index[1],
                )
            } else {
                json(&stats)?
            };
            emit(None, &payload)
        }
        Command::Serve {
            port,
            host,
            store,
            dataset,
        } => {
            let base = ParallelQaDataset::load(&dataset).input(|| format!("loading {}", dataset.display()))?;
            let store = AnnotationStore::open(&store, base).input(|| format!("opening store {}", store.display()))?;
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Runtime::new().internal(|| "starting runtime".into())?;
            eprintln!("listening on http://{addr}");
            runtime
                .block_on(pqa_service::serve(addr, pqa_service::AppState::new(store)))
                .input(|| format!("serving on {addr}"))
        }
        Command::Export { store, dataset, output } => {
            let base = ParallelQaDataset::load(&dataset).input(|| format!("loading {}", dataset.display()))?;
            let store = AnnotationStore::open(&store, base).input(|| format!("opening store {}", store.display()))?;
            eprintln!("{} journaled annotations", store.journaled());
            emit(output.as_deref(), &json(store.dataset())?)
        }
    }
}
