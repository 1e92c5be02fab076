//! `tableqa`: generate datasets, train, evaluate, ask and serve.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 runtime or numeric error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tableqa::datagen::{generate_dataset, Task};
use tableqa::disambig::{disambiguate, load_embeddings, EmbeddingTable, Resolution};
use tableqa::eval::{build_testset, evaluate, evaluate_with, format_results, question_parts, OraclePredictor, ResultRow};
use tableqa::memnet::{load_model, save_model, train, Model, TrainingMeta};
use tableqa::table::{build_vocabulary, read_jsonl, tokenize, write_jsonl, Example, Table};
use tableqa_service::{default_tables, load_tables, AppState, LoadedModel, Settings};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn data_err<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Simple,
    Composite,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Simple => Task::SimpleKey,
            TaskArg::Composite => Task::CompositeKey,
        }
    }
}

#[derive(Parser)]
#[command(name = "tableqa", version, about = "Table question answering with a memory network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic JSONL dataset
    Gen {
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build the 32-sample perturbed test set
    Testset {
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint plus a JSON training report
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the training report (default: `<out>.report.json`)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a model (or the lookup oracle) on a test set
    Eval {
        #[arg(long, required_unless_present = "oracle")]
        model: Option<PathBuf>,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score the exact lookup instead of a model
        #[arg(long)]
        oracle: bool,
    },
    /// Answer one question over a table file
    Ask {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the HTTP API
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        testset: Option<PathBuf>,
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn echo_config(config: &RunConfig) {
    eprintln!("# effective config\n{}", config.echo());
}

fn cmd_gen(
    task: Option<TaskArg>,
    n: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(t) = task {
        cfg.generation.task = Some(t.into());
    }
    cfg.generation.n_examples = n.or(cfg.generation.n_examples);
    cfg.generation.seed = seed.or(cfg.generation.seed);
    echo_config(&cfg);
    let spec = cfg.generation.spec();
    let data = generate_dataset(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_jsonl(out, &data).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    println!("task: {}", spec.task);
    println!("examples: {}", data.len());
    println!("vocabulary size: {}", build_vocabulary(&data).len());
    Ok(())
}

fn cmd_testset(task: Option<TaskArg>, seed: Option<u64>, out: &Path, config: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(t) = task {
        cfg.generation.task = Some(t.into());
    }
    cfg.generation.seed = seed.or(cfg.generation.seed);
    echo_config(&cfg);
    let spec = cfg.generation.spec();
    let base = generate_dataset(&spec.clone().with_examples(200, spec.seed))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let testset = build_testset(&base, &spec, spec.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    write_jsonl(out, &testset).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    println!("samples: {}", testset.len());
    Ok(())
}

/// Datasets from the generator use one key per simple-key question and two
/// per composite-key question.
fn infer_task(examples: &[Example]) -> Option<Task> {
    let e = examples.iter().find(|e| e.adequate)?;
    Some(match question_parts(e).keys.len() {
        0 | 1 => Task::SimpleKey,
        _ => Task::CompositeKey,
    })
}

fn report_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_train(data: &Path, config: Option<&Path>, out: &Path, report: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    echo_config(&cfg);
    let dataset = read_jsonl(data).map_err(|e| CliError::Data(format!("{}: {e}", data.display())))?;
    let vocab = build_vocabulary(&dataset);
    let mut model = Model::init(cfg.model.clone(), vocab).map_err(|e| CliError::Usage(e.to_string()))?;
    eprintln!(
        "training on {} examples, vocabulary {}, hops {}",
        dataset.len(),
        model.vocab().len(),
        model.hops()
    );
    let result = train(&mut model, &dataset, |r| eprintln!("{r}")).map_err(|e| match e {
        tableqa::memnet::TrainError::Numeric { .. } => CliError::Runtime(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    if let Some(end) = result.linear_start_end_epoch {
        eprintln!("linear start ended after epoch {end}");
    }
    let meta = TrainingMeta {
        task: infer_task(&dataset),
        training_examples: dataset.len(),
        epochs: result.epochs.len(),
    };
    save_model(&model, Some(&meta), out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let report = report.map(Path::to_path_buf).unwrap_or_else(|| report_path(out));
    write_json(&report, &result)?;
    let last = result.final_record().expect("at least one epoch");
    println!("epochs: {}", result.epochs.len());
    println!("validation accuracy: {:.4}", last.val_acc);
    println!("checkpoint: {}", out.display());
    println!("report: {}", report.display());
    Ok(())
}

fn cmd_eval(model: Option<&Path>, testset: &Path, report: Option<&Path>, oracle: bool) -> Result<(), CliError> {
    let samples = read_jsonl(testset).map_err(|e| CliError::Data(format!("{}: {e}", testset.display())))?;
    let (result, meta) = if oracle {
        (evaluate_with(&OraclePredictor, &samples), None)
    } else {
        let path = model.expect("clap enforces --model without --oracle");
        let (model, meta) = load_model(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        (evaluate(&model, &samples).map_err(|e| CliError::Data(e.to_string()))?, meta)
    };
    let task = meta
        .as_ref()
        .and_then(|m| m.task)
        .or_else(|| infer_task(&samples))
        .map_or("-".to_string(), |t| t.to_string());
    let row = ResultRow {
        task: if oracle { format!("{task} (oracle)") } else { task },
        test_error: result.overall_error,
        training_set: meta.as_ref().map(|m| m.training_examples),
        epochs: meta.as_ref().map(|m| m.epochs),
    };
    print!("{}", format_results(std::slice::from_ref(&row)));
    println!();
    for (kind, s) in &result.per_type {
        println!(
            "{kind:<14} errors {}/{}  mean confidence {:.3}",
            s.errors, s.total, s.mean_confidence
        );
    }
    if let Some(path) = report {
        let doc = serde_json::json!({ "row": row, "result": result });
        write_json(path, &doc)?;
    }
    Ok(())
}

fn load_embedding_table(cfg: &RunConfig) -> Result<EmbeddingTable, CliError> {
    let Some(path) = &cfg.disambiguation.embeddings else {
        return Ok(EmbeddingTable::default());
    };
    let mut table = load_embeddings(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(sub) = &cfg.disambiguation.subwords {
        table = table
            .load_subwords(sub)
            .map_err(|e| CliError::Data(format!("{}: {e}", sub.display())))?;
    }
    for w in table.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(table)
}

const SHADES: [char; 5] = [' ', '.', ':', '*', '#'];

fn shade(w: f64) -> char {
    SHADES[((w.clamp(0.0, 1.0) * (SHADES.len() - 1) as f64).round()) as usize]
}

fn cmd_ask(
    model: &Path,
    table: &Path,
    question: &str,
    embeddings: Option<&Path>,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(e) = embeddings {
        cfg.disambiguation.embeddings = Some(e.to_path_buf());
    }
    echo_config(&cfg);
    let tokens = tokenize(question);
    if tokens.is_empty() {
        return Err(CliError::Usage("question is empty".into()));
    }
    let (model, _) = load_model(model).map_err(data_err(model.display()))?;
    let text = std::fs::read_to_string(table).map_err(|e| CliError::Data(format!("{}: {e}", table.display())))?;
    let parsed: Table = serde_json::from_str(&text).map_err(data_err(table.display()))?;
    let vectors = load_embedding_table(&cfg)?;
    let threshold = cfg.disambiguation.threshold;
    let (mapped, report) = disambiguate(&tokens, model.vocab(), &vectors, threshold);
    for entry in &report.entries {
        match &entry.resolution {
            Resolution::InVocab => {}
            Resolution::Mapped { to, similarity } => {
                println!("{} → {to} (sim {similarity:.3} ≥ {threshold})", entry.word)
            }
            Resolution::Dropped { best_similarity } => match best_similarity {
                Some(s) => println!("{} dropped (best sim {s:.3} < {threshold})", entry.word),
                None => println!("{} dropped (no vector)", entry.word),
            },
        }
    }
    if mapped.is_empty() {
        return Err(CliError::Usage("question empty after disambiguation".into()));
    }
    let triples = parsed.to_triples();
    let p = model.predict(&triples, &mapped);
    println!("answer: {}", p.answer_token);
    println!("confidence: {:.4}", p.confidence());
    let width = triples.iter().map(|t| t.to_string().len()).max().unwrap_or(0);
    let hops: String = (1..=p.attention.len()).map(|h| format!("  hop{h:<6}")).collect();
    println!("{:<width$}{hops}", "");
    for (i, t) in triples.iter().enumerate() {
        let cells: String = p
            .attention
            .iter()
            .map(|row| format!("  {} {:.3}", shade(row[i]), row[i]))
            .collect();
        println!("{:<width$}{cells}", t.to_string());
    }
    Ok(())
}

fn cmd_serve(
    model: Option<PathBuf>,
    port: Option<u16>,
    testset: Option<PathBuf>,
    tables: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    let svc = &mut cfg.service;
    svc.model = model.or(svc.model.take());
    svc.port = port.unwrap_or(svc.port);
    svc.testset = testset.or(svc.testset.take());
    svc.tables = tables.or(svc.tables.take());
    if let Some(e) = embeddings {
        cfg.disambiguation.embeddings = Some(e);
    }
    echo_config(&cfg);
    let svc = cfg.service.clone();
    let model_path = svc
        .model
        .clone()
        .ok_or_else(|| CliError::Usage("serve needs --model (or service.model in the config)".into()))?;
    if !model_path.is_file() {
        return Err(CliError::Data(format!("checkpoint not found: {}", model_path.display())));
    }
    let mut state = AppState::new(Settings {
        threshold: cfg.disambiguation.threshold,
        top_k: svc.top_k,
        cors_origin: svc.cors_origin.clone(),
    })
    .with_embeddings(load_embedding_table(&cfg)?)
    .with_tables(match &svc.tables {
        Some(p) => load_tables(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => default_tables(),
    });
    if let Some(p) = &svc.testset {
        state = state.with_test_questions(read_jsonl(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?);
    }
    let state = Arc::new(state);

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", svc.host, svc.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?);

        let (fail_tx, mut fail_rx) = tokio::sync::mpsc::channel::<CliError>(1);
        let loader_state = state.clone();
        tokio::task::spawn_blocking(move || match LoadedModel::load(&model_path) {
            Ok(loaded) => {
                let _ = loader_state.set_model(loaded);
                let h = loader_state.health();
                eprintln!(
                    "model loaded: status={} model_version={} vocab_size={} hops={}",
                    h.status,
                    h.model_version.unwrap_or_default(),
                    h.vocab_size.unwrap_or_default(),
                    h.hops.unwrap_or_default()
                );
            }
            Err(e) => {
                let _ = fail_tx.blocking_send(CliError::Data(format!("{}: {e}", model_path.display())));
            }
        });

        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(tableqa_service::serve(listener, state, async {
            let _ = stop_rx.await;
        }));
        let outcome = tokio::select! {
            _ = tokio::signal::ctrl_c() => {
                eprintln!("shutting down");
                Ok(())
            }
            Some(err) = fail_rx.recv() => Err(err),
        };
        let _ = stop_tx.send(());
        match server.await {
            Ok(Ok(())) => outcome,
            Ok(Err(e)) => Err(CliError::Runtime(e.to_string())),
            Err(e) => Err(CliError::Runtime(e.to_string())),
        }
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen {
            task,
            n,
            seed,
            out,
            config,
        } => cmd_gen(task, n, seed, &out, config.as_deref()),
        Command::Testset {
            task,
            seed,
            out,
            config,
        } => cmd_testset(task, seed, &out, config.as_deref()),
        Command::Train {
            data,
            config,
            out,
            report,
        } => cmd_train(&data, config.as_deref(), &out, report.as_deref()),
        Command::Eval {
            model,
            testset,
            report,
            oracle,
        } => cmd_eval(model.as_deref(), &testset, report.as_deref(), oracle),
        Command::Ask {
            model,
            table,
            question,
            embeddings,
            config,
        } => cmd_ask(&model, &table, &question, embeddings.as_deref(), config.as_deref()),
        Command::Serve {
            model,
            port,
            testset,
            tables,
            embeddings,
            config,
        } => cmd_serve(model, port, testset, tables, embeddings, config.as_deref()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
