//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use ndarray::Array2;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tableqa::datagen::{generate_dataset, GenerationSpec, Task};
use tableqa::disambig::{disambiguate, load_embeddings, Resolution};
use tableqa::eval::{build_testset, evaluate, oracle_agreement, PerturbationType};
use tableqa::memnet::{encode_checkpoint, gradients, train, Model, ModelConfig, TrainReport};
use tableqa::rng::SeededRng;
use tableqa::table::{build_vocabulary, read_jsonl, Example, Triple, Vocabulary};
use tableqa_service::{default_tables, router, AppState, LoadedModel, Settings};
use tower::ServiceExt;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Straight transcription of the forward equations with dense bag-of-words
/// vectors, used as an oracle independent of the library's sparse code.
fn reference_loss(embeddings: &[Array2<f64>], vocab: &Vocabulary, softmax: bool, e: &Example) -> f64 {
    let v = vocab.len();
    let bow = |tokens: &mut dyn Iterator<Item = &str>| {
        let mut x = vec![0.0; v];
        for t in tokens {
            if let Some(i) = vocab.index(t) {
                x[i] += 1.0;
            }
        }
        x
    };
    let project = |m: &Array2<f64>, x: &[f64]| -> Vec<f64> {
        (0..m.ncols()).map(|j| (0..v).map(|i| m[[i, j]] * x[i]).sum()).collect()
    };
    let softmax_of = |s: &[f64]| -> Vec<f64> {
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s.iter().map(|x| (x - max).exp()).sum();
        s.iter().map(|x| (x - max).exp() / z).collect()
    };
    let slots: Vec<Vec<f64>> = e.triples.iter().map(|t| bow(&mut t.tokens().into_iter())).collect();
    let hops = embeddings.len() - 1;
    let mut u = project(&embeddings[0], &bow(&mut e.question.iter().map(String::as_str)));
    for k in 0..hops {
        let m: Vec<Vec<f64>> = slots.iter().map(|x| project(&embeddings[k], x)).collect();
        let c: Vec<Vec<f64>> = slots.iter().map(|x| project(&embeddings[k + 1], x)).collect();
        let s: Vec<f64> = m.iter().map(|mi| mi.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
        let p = if softmax { softmax_of(&s) } else { s };
        for (pi, ci) in p.iter().zip(&c) {
            for (uj, cj) in u.iter_mut().zip(ci) {
                *uj += pi * cj;
            }
        }
    }
    let w = &embeddings[hops];
    let logits: Vec<f64> = (0..v).map(|i| (0..u.len()).map(|j| w[[i, j]] * u[j]).sum()).collect();
    let probs = softmax_of(&logits);
    -probs[vocab.index(&e.answer).unwrap()].max(1e-12).ln()
}

fn gradient_correctness() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let vocab = Vocabulary::from_tokens((0..10).map(|i| format!("w{i}")));
    let mut probes = 0;
    let mut worst: f64 = 0.0;
    let mut forward_gap: f64 = 0.0;
    for hops in [1, 3] {
        for linear in [true, false] {
            for _ in 0..2 {
                let word = |rng: &mut SeededRng| format!("w{}", rng.below(10));
                let batch: Vec<Example> = (0..4)
                    .map(|_| {
                        let triples = (0..2).map(|r| Triple::new(format!("w{r}"), word(&mut rng), word(&mut rng))).collect();
                        let question = (0..3).map(|_| word(&mut rng)).collect();
                        Example::new(triples, question, word(&mut rng))
                    })
                    .collect();
                let cfg = ModelConfig {
                    hops,
                    embed_dim: 4,
                    init_std: 0.3,
                    linear_start: linear,
                    seed: rng.next_u64(),
                    ..Default::default()
                };
                let model = Model::init(cfg, vocab.clone()).unwrap();
                let softmax = model.softmax_enabled();
                let mean = |emb: &[Array2<f64>]| {
                    batch.iter().map(|e| reference_loss(emb, &vocab, softmax, e)).sum::<f64>() / batch.len() as f64
                };
                let lib_loss = batch
                    .iter()
                    .map(|e| model.loss(&model.forward(e), &e.answer).unwrap())
                    .sum::<f64>()
                    / batch.len() as f64;
                forward_gap = forward_gap.max((lib_loss - mean(model.embeddings())).abs());
                let grads = gradients(&model, &batch).unwrap();
                let eps = 1e-4;
                for _ in 0..15 {
                    let m = rng.below(hops + 1);
                    let (r, c) = (rng.below(10), rng.below(4));
                    let mut plus = model.embeddings().to_vec();
                    plus[m][[r, c]] += eps;
                    let mut minus = model.embeddings().to_vec();
                    minus[m][[r, c]] -= eps;
                    let numeric = (mean(&plus) - mean(&minus)) / (2.0 * eps);
                    let analytic = grads.embeddings[m][[r, c]];
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                    worst = worst.max(rel);
                    probes += 1;
                }
            }
        }
    }
    check(
        probes >= 100 && worst < 1e-3 && forward_gap < 1e-9,
        format!("{probes} probes, max relative error {worst:.2e}, forward gap {forward_gap:.1e}"),
    )
}

fn normalization() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for case in 0..1000 {
        let n_vocab = 3 + rng.below(20);
        let vocab = Vocabulary::from_tokens((0..n_vocab).map(|i| format!("t{i}")));
        let cfg = ModelConfig {
            hops: 1 + rng.below(4),
            embed_dim: 1 + rng.below(12),
            init_std: 0.01 + 2.0 * rng.unit(),
            linear_start: case % 4 == 0,
            seed: rng.next_u64(),
            ..Default::default()
        };
        let model = Model::init(cfg, vocab).unwrap();
        let tok = |rng: &mut SeededRng| format!("t{}", rng.below(n_vocab + 3));
        let triples: Vec<Triple> = (0..1 + rng.below(12))
            .map(|_| Triple::new(tok(&mut rng), tok(&mut rng), tok(&mut rng)))
            .collect();
        let question: Vec<String> = (0..1 + rng.below(6)).map(|_| tok(&mut rng)).collect();
        let p = model.predict(&triples, &question);
        worst = worst.max((p.distribution.iter().sum::<f64>() - 1.0).abs());
        if model.softmax_enabled() {
            for row in &p.attention {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                rows += 1;
            }
        }
    }
    check(worst <= 1e-6, format!("1000 cases, {rows} attention rows, max deviation {worst:.1e}"))
}

struct Trained {
    task: Task,
    spec: GenerationSpec,
    model: Model,
    report: TrainReport,
    seconds: f64,
}

fn train_task(task: Task, max_epochs: usize, n: usize) -> Trained {
    let spec = GenerationSpec::default_for(task).with_examples(n, 1);
    let data = generate_dataset(&spec).unwrap();
    let cfg = ModelConfig {
        max_epochs,
        ..Default::default()
    };
    let mut model = Model::init(cfg, build_vocabulary(&data)).unwrap();
    let start = Instant::now();
    let report = train(&mut model, &data, |_| {}).unwrap();
    Trained {
        task,
        spec,
        model,
        report,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn oracle_equivalence(t: &Trained, floor: f64) -> Outcome {
    let held_out = generate_dataset(&t.spec.clone().with_examples(500, 1001)).unwrap();
    let agreement = oracle_agreement(&t.model, &held_out);
    check(
        agreement >= floor,
        format!("{}: agreement {agreement:.3} on 500 held-out (need >= {floor})", t.task),
    )
}

fn frozen_testset(task: Task) -> Vec<Example> {
    let name = match task {
        Task::SimpleKey => "testset_simple.jsonl",
        Task::CompositeKey => "testset_composite.jsonl",
    };
    read_jsonl(fixture(name)).unwrap()
}

fn convergence(t: &Trained, epoch_limit: usize, band: (f64, f64)) -> Outcome {
    let epochs = t.report.epochs_to_accuracy(0.95);
    let result = evaluate(&t.model, &frozen_testset(t.task)).unwrap();
    let err = result.overall_error;
    check(
        epochs.is_some_and(|e| e <= epoch_limit) && (band.0..=band.1).contains(&err) && t.seconds < 1800.0,
        format!(
            "{}: val acc >= 0.95 at epoch {} (limit {epoch_limit}), stopped after {} epochs, test error {err:.3} (band [{}, {}]), {:.0}s",
            t.task,
            epochs.map_or("never".to_string(), |e| e.to_string()),
            t.report.epochs.len(),
            band.0,
            band.1,
            t.seconds
        ),
    )
}

fn error_analysis(t: &Trained) -> Outcome {
    let result = evaluate(&t.model, &frozen_testset(t.task)).unwrap();
    let unseen = result.stats(PerturbationType::UnseenColumn).unwrap();
    let inadequate = result.stats(PerturbationType::Inadequate).unwrap();
    check(
        unseen.errors >= 7 && inadequate.errors == 8 && inadequate.mean_confidence > 0.5,
        format!(
            "{}: unseen column wrong {}/8, inadequate wrong {}/8 with mean confidence {:.3}",
            t.task, unseen.errors, inadequate.errors, inadequate.mean_confidence
        ),
    )
}

/// The fixture must equal a rebuild from its seed; the rebuild exposes the
/// unperturbed originals.
fn bow_invariance(t: &Trained) -> Outcome {
    let frozen = frozen_testset(t.task);
    let spec = GenerationSpec::default_for(t.task);
    let base = generate_dataset(&spec.clone().with_examples(200, 2)).unwrap();
    let rebuilt = build_testset(&base, &spec, 2).unwrap();
    if rebuilt != frozen {
        return Err("frozen test set differs from its rebuild".into());
    }
    let mut identical = 0;
    let reorders: Vec<&Example> = frozen
        .iter()
        .filter(|e| e.perturbation == Some(PerturbationType::ReorderWords))
        .collect();
    for e in &reorders {
        let mut sorted = e.question.clone();
        sorted.sort();
        let original = base.iter().find(|b| {
            let mut q = b.question.clone();
            q.sort();
            b.triples == e.triples && q == sorted
        });
        let Some(original) = original else {
            return Err("original of a reordered sample not found".into());
        };
        let (a, b) = (t.model.forward(e), t.model.forward(original));
        identical += usize::from(a.answer_token == b.answer_token && a.distribution == b.distribution);
    }
    check(
        identical == 8 && reorders.len() == 8,
        format!("{}: {identical}/{} reordered samples predict exactly like their originals", t.task, reorders.len()),
    )
}

fn disambiguation(vocab: &Vocabulary) -> Outcome {
    let table = load_embeddings(fixture("embeddings.vec")).map_err(|e| e.to_string())?;
    let question: Vec<String> = "what is the emigration income of the town wien newborns qqqq area"
        .split(' ')
        .map(String::from)
        .collect();
    let mapped_at = |th: f64| {
        let (_, report) = disambiguate(&question, vocab, &table, th);
        report
            .entries
            .into_iter()
            .filter_map(|e| match e.resolution {
                Resolution::Mapped { to, .. } => Some((e.word, to)),
                _ => None,
            })
            .collect::<Vec<_>>()
    };
    let (low, mid, high) = (mapped_at(0.5), mapped_at(0.8), mapped_at(0.95));
    let emigration = mid.iter().any(|(w, to)| w == "emigration" && to == "emigration_total");
    let monotone = high.iter().all(|m| mid.contains(m)) && mid.iter().all(|m| low.contains(m));
    check(
        emigration && monotone,
        format!(
            "emigration -> emigration_total at 0.8: {emigration}; mapped words at 0.5/0.8/0.95: {}/{}/{}",
            low.len(),
            mid.len(),
            high.len()
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tableqa"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("tableqa {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn digest(path: &Path) -> Result<Vec<u8>, String> {
    Ok(Sha256::digest(std::fs::read(path).map_err(|e| e.to_string())?).to_vec())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_string();
    std::fs::write(p("run.toml"), "[model]\nmax_epochs = 4\n").unwrap();
    let testset = fixture("testset_simple.jsonl");
    for run in ["a", "b"] {
        run_cli(&["gen", "--task", "simple", "--n", "600", "--seed", "3", "--out", &s(&p(&format!("{run}.jsonl")))])?;
        run_cli(&[
            "train",
            "--data",
            &s(&p(&format!("{run}.jsonl"))),
            "--config",
            &s(&p("run.toml")),
            "--out",
            &s(&p(&format!("{run}.ckpt"))),
        ])?;
        run_cli(&[
            "eval",
            "--model",
            &s(&p(&format!("{run}.ckpt"))),
            "--testset",
            &s(&testset),
            "--report",
            &s(&p(&format!("{run}.eval.json"))),
        ])?;
    }
    let pairs = [
        ("dataset", "a.jsonl", "b.jsonl"),
        ("checkpoint", "a.ckpt", "b.ckpt"),
        ("train report", "a.ckpt.report.json", "b.ckpt.report.json"),
        ("eval report", "a.eval.json", "b.eval.json"),
    ];
    let mut differing = Vec::new();
    for (what, a, b) in pairs {
        if digest(&p(a))? != digest(&p(b))? {
            differing.push(what);
        }
    }
    check(
        differing.is_empty(),
        if differing.is_empty() {
            "gen, train and eval outputs byte-identical across two runs".into()
        } else {
            format!("outputs differ: {differing:?}")
        },
    )
}

async fn api_contract(model: &Model) -> Outcome {
    let loaded = LoadedModel::from_bytes(&encode_checkpoint(model, None)).map_err(|e| e.to_string())?;
    let hops = model.hops();
    let state = Arc::new(
        AppState::new(Settings::default())
            .with_model(loaded)
            .with_tables(default_tables())
            .with_test_questions(frozen_testset(Task::SimpleKey)),
    );
    let app = router(state);
    let get = Request::get("/api/test-questions").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(get).await.map_err(|e| e.to_string())?;
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let questions: Vec<Value> = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    let mut good = 0;
    for q in &questions {
        let body = json!({"table": q["table"], "question": q["question"]});
        let req = Request::post("/api/ask")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
        if resp.status() != StatusCode::OK {
            continue;
        }
        let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes())
            .map_err(|e| e.to_string())?;
        let n_triples = v["triples"].as_array().map_or(0, Vec::len);
        let attention = v["attention"].as_array().cloned().unwrap_or_default();
        let shaped = attention.len() == hops
            && attention.iter().all(|r| r.as_array().is_some_and(|r| r.len() == n_triples))
            && n_triples > 0;
        let fields = v["answer"].is_string()
            && v["confidence"].is_number()
            && v["distribution_topk"].is_array()
            && v["disambiguation"].is_array();
        good += usize::from(shaped && fields);
    }
    check(
        questions.len() == 32 && good == 32,
        format!("{good}/{} test questions answered with hops x triples attention ({hops} hops)", questions.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("gradient correctness", gradient_correctness()));
    results.push(("normalization invariants", normalization()));

    let simple = train_task(Task::SimpleKey, 40, 5949);
    let composite = train_task(Task::CompositeKey, 110, 18953);

    results.push(("oracle equivalence (simple key)", oracle_equivalence(&simple, 0.95)));
    results.push(("oracle equivalence (composite key)", oracle_equivalence(&composite, 0.90)));
    results.push(("convergence and test error (simple key)", convergence(&simple, 40, (0.35, 0.65))));
    results.push(("convergence and test error (composite key)", convergence(&composite, 110, (0.45, 0.75))));
    results.push(("error analysis (simple key)", error_analysis(&simple)));
    results.push(("error analysis (composite key)", error_analysis(&composite)));
    results.push(("bow invariance (simple key)", bow_invariance(&simple)));
    results.push(("bow invariance (composite key)", bow_invariance(&composite)));
    results.push(("disambiguation fixture", disambiguation(simple.model.vocab())));
    results.push(("determinism", determinism()));
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    results.push(("api contract", runtime.block_on(api_contract(&simple.model))));

    println!();
    let mut failed = false;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed = true;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!();
    if failed {
        std::process::exit(1);
    }
}
