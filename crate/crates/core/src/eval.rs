//! Perturbed test sets and scoring.
//!
//! The robustness test set holds 8 samples for each of four corruptions of
//! template questions: dropped connector words, shuffled word order, a
//! target column never asked about in training, and questions the table
//! cannot answer. Inadequate samples always count as errors, so a perfect
//! lookup scores 8/32 = 0.25 on the default protocol.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::GenerationSpec;
use crate::memnet::Model;
use crate::rng::SeededRng;
use crate::table::{Example, Triple};

/// Expected answer recorded for inadequate samples; never a vocabulary token.
pub const NO_ANSWER: &str = "<no_answer>";

pub const SAMPLES_PER_TYPE: usize = 8;

/// Column words used for inadequate questions that ask about data the
/// table schema does not have.
pub const ABSENT_COLUMNS: [&str; 4] = ["population", "unemployment", "area", "income"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationType {
    OmitWords,
    ReorderWords,
    UnseenColumn,
    Inadequate,
}

impl PerturbationType {
    pub const ALL: [PerturbationType; 4] = [
        PerturbationType::OmitWords,
        PerturbationType::ReorderWords,
        PerturbationType::UnseenColumn,
        PerturbationType::Inadequate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationType::OmitWords => "omit_words",
            PerturbationType::ReorderWords => "reorder_words",
            PerturbationType::UnseenColumn => "unseen_column",
            PerturbationType::Inadequate => "inadequate",
        }
    }
}

impl fmt::Display for PerturbationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("question has {0} token(s); the perturbation needs at least 2")]
    QuestionTooShort(usize),
    #[error("question has no connector word to omit")]
    NoConnector,
    #[error("question tokens are all identical, no permutation changes them")]
    NoReordering,
    #[error("no column is reserved from training questions; unseen-column samples need one")]
    NoReservedColumn,
    #[error("column `{0}` is not in the table")]
    UnknownColumn(String),
    #[error("question does not name a table column")]
    NoTargetColumn,
    #[error("cannot build an inadequate question: {0}")]
    NoAbsentValue(String),
    #[error("need {needed} base examples, got {available}")]
    InsufficientBase { needed: usize, available: usize },
    #[error("sample {sample}: token `{token}` is not in the model vocabulary")]
    VocabularyMismatch { sample: usize, token: String },
}

/// Every value of `target_column` in rows that contain all `keys` as cell values.
pub fn lookup_oracle<S: AsRef<str>>(triples: &[Triple], target_column: &str, keys: &[S]) -> BTreeSet<String> {
    let mut rows: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in triples {
        rows.entry(&t.row_id).or_default().push(t);
    }
    rows.values()
        .filter(|cells| keys.iter().all(|k| cells.iter().any(|c| c.value == k.as_ref())))
        .flat_map(|cells| {
            cells
                .iter()
                .filter(|c| c.column == target_column)
                .map(|c| c.value.clone())
        })
        .collect()
}

/// The structured content of a question, read off against its table: the
/// first token naming a column, and every token that is a cell value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionParts {
    pub column: Option<String>,
    pub keys: Vec<String>,
}

pub fn question_parts(example: &Example) -> QuestionParts {
    let columns: HashSet<&str> = example.triples.iter().map(|t| t.column.as_str()).collect();
    let values: HashSet<&str> = example.triples.iter().map(|t| t.value.as_str()).collect();
    QuestionParts {
        column: example
            .question
            .iter()
            .find(|q| columns.contains(q.as_str()))
            .cloned(),
        keys: example
            .question
            .iter()
            .filter(|q| values.contains(q.as_str()) && !columns.contains(q.as_str()))
            .cloned()
            .collect(),
    }
}

/// The lookup answer when it is unique.
pub fn oracle_answer(example: &Example) -> Option<String> {
    let parts = question_parts(example);
    let column = parts.column?;
    let found = lookup_oracle(&example.triples, &column, &parts.keys);
    (found.len() == 1).then(|| found.into_iter().next().expect("one element"))
}

fn mentioned(triples: &[Triple]) -> HashSet<&str> {
    triples.iter().flat_map(|t| t.tokens()).collect()
}

/// Removes one or two connector words (tokens that are neither a column nor a
/// cell of the table).
pub fn perturb_omit(example: &Example, rng: &mut SeededRng) -> Result<Example, EvalError> {
    let q = &example.question;
    if q.len() < 2 {
        return Err(EvalError::QuestionTooShort(q.len()));
    }
    let table_tokens = mentioned(&example.triples);
    let connectors: Vec<usize> = (0..q.len())
        .filter(|&i| !table_tokens.contains(q[i].as_str()))
        .collect();
    if connectors.is_empty() {
        return Err(EvalError::NoConnector);
    }
    let count = 1 + rng.below(connectors.len().min(2));
    let drop: HashSet<usize> = rng
        .sample_indices(connectors.len(), count)
        .into_iter()
        .map(|i| connectors[i])
        .collect();
    let mut out = example.clone();
    out.question = q
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, t)| t.clone())
        .collect();
    out.perturbation = Some(PerturbationType::OmitWords);
    Ok(out)
}

/// Shuffles the question until its token sequence differs from the original.
pub fn perturb_reorder(example: &Example, rng: &mut SeededRng) -> Result<Example, EvalError> {
    let q = &example.question;
    if q.len() < 2 {
        return Err(EvalError::QuestionTooShort(q.len()));
    }
    if q.iter().all(|t| t == &q[0]) {
        return Err(EvalError::NoReordering);
    }
    let mut shuffled = q.clone();
    while &shuffled == q {
        rng.shuffle(&mut shuffled);
    }
    let mut out = example.clone();
    out.question = shuffled;
    out.perturbation = Some(PerturbationType::ReorderWords);
    Ok(out)
}

/// Re-targets the question at `held_out`, a column no training question asks about.
pub fn perturb_unseen_column(example: &Example, held_out: &str) -> Result<Example, EvalError> {
    if !example.triples.iter().any(|t| t.column == held_out) {
        return Err(EvalError::UnknownColumn(held_out.to_string()));
    }
    let parts = question_parts(example);
    let column = parts.column.ok_or(EvalError::NoTargetColumn)?;
    let mut out = example.clone();
    for t in &mut out.question {
        if *t == column {
            *t = held_out.to_string();
        }
    }
    let answers = lookup_oracle(&out.triples, held_out, &parts.keys);
    out.answer = answers
        .into_iter()
        .next()
        .ok_or(EvalError::NoTargetColumn)?;
    out.perturbation = Some(PerturbationType::UnseenColumn);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InadequateKind {
    /// Swap one key value for a domain value that no row of this table has.
    AbsentKey,
    /// Ask for a column the table schema does not have.
    AbsentColumn,
}

/// Rewrites the question so that the table holds no answer for it.
pub fn make_inadequate(
    example: &Example,
    spec: &GenerationSpec,
    kind: InadequateKind,
    rng: &mut SeededRng,
) -> Result<Example, EvalError> {
    let parts = question_parts(example);
    let mut out = example.clone();
    match kind {
        InadequateKind::AbsentKey => {
            let key_pos = out
                .question
                .iter()
                .position(|q| parts.keys.contains(q))
                .ok_or_else(|| EvalError::NoAbsentValue("question has no key value".into()))?;
            let key = out.question[key_pos].clone();
            let present = mentioned(&example.triples);
            let domain = spec
                .columns
                .iter()
                .find(|c| c.domain.contains(&key))
                .and_then(|c| spec.domain(&c.name))
                .ok_or_else(|| EvalError::NoAbsentValue(format!("`{key}` is in no domain")))?;
            let absent: Vec<&String> = domain.iter().filter(|v| !present.contains(v.as_str())).collect();
            let replacement = rng
                .choose(&absent)
                .ok_or_else(|| EvalError::NoAbsentValue(format!("every value of `{key}`'s domain is present")))?;
            out.question[key_pos] = (*replacement).clone();
        }
        InadequateKind::AbsentColumn => {
            let column = parts.column.ok_or(EvalError::NoTargetColumn)?;
            let replacement = *rng.choose(&ABSENT_COLUMNS).expect("non-empty");
            for t in &mut out.question {
                if *t == column {
                    *t = replacement.to_string();
                }
            }
        }
    }
    out.answer = NO_ANSWER.to_string();
    out.adequate = false;
    out.perturbation = Some(PerturbationType::Inadequate);
    Ok(out)
}

/// Builds the 32-sample robustness set: 8 samples per perturbation type, each
/// from a distinct base example. Inadequate samples alternate between an
/// absent key and an absent column.
pub fn build_testset(base: &[Example], spec: &GenerationSpec, seed: u64) -> Result<Vec<Example>, EvalError> {
    let needed = SAMPLES_PER_TYPE * PerturbationType::ALL.len();
    if base.len() < needed {
        return Err(EvalError::InsufficientBase {
            needed,
            available: base.len(),
        });
    }
    let held_out = spec.reserved_column.as_deref().ok_or(EvalError::NoReservedColumn)?;
    let mut rng = SeededRng::new(seed);
    let picks = rng.sample_indices(base.len(), needed);
    let mut out = Vec::with_capacity(needed);
    for (slot, &i) in picks.iter().enumerate() {
        let e = &base[i];
        let kind = PerturbationType::ALL[slot / SAMPLES_PER_TYPE];
        let sample = match kind {
            PerturbationType::OmitWords => perturb_omit(e, &mut rng)?,
            PerturbationType::ReorderWords => perturb_reorder(e, &mut rng)?,
            PerturbationType::UnseenColumn => perturb_unseen_column(e, held_out)?,
            PerturbationType::Inadequate => {
                let variant = if slot % 2 == 0 {
                    InadequateKind::AbsentKey
                } else {
                    InadequateKind::AbsentColumn
                };
                make_inadequate(e, spec, variant, &mut rng)?
            }
        };
        out.push(sample);
    }
    Ok(out)
}

/// Anything that answers a question over triples, with a confidence.
pub trait Predictor {
    fn answer(&self, example: &Example) -> (String, f64);
}

impl Predictor for Model {
    fn answer(&self, example: &Example) -> (String, f64) {
        let p = self.forward(example);
        let confidence = p.confidence();
        (p.answer_token, confidence)
    }
}

/// Exact relational lookup; answers [`NO_ANSWER`] unless the lookup is unique.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn answer(&self, example: &Example) -> (String, f64) {
        match oracle_answer(example) {
            Some(a) => (a, 1.0),
            None => (NO_ANSWER.to_string(), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeStats {
    pub errors: usize,
    pub total: usize,
    pub mean_confidence: f64,
}

impl TypeStats {
    pub fn error_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.errors as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub question: Vec<String>,
    pub perturbation: Option<PerturbationType>,
    pub adequate: bool,
    pub expected: String,
    pub predicted: String,
    pub correct: bool,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub overall_error: f64,
    /// Keyed by perturbation name; untagged samples go under `none`.
    pub per_type: BTreeMap<String, TypeStats>,
    pub per_sample: Vec<SampleResult>,
}

impl EvalResult {
    pub fn stats(&self, kind: PerturbationType) -> Option<&TypeStats> {
        self.per_type.get(kind.as_str())
    }
}

/// Scores any predictor. Inadequate samples are always errors.
pub fn evaluate_with(predictor: &impl Predictor, testset: &[Example]) -> EvalResult {
    let mut per_type: BTreeMap<String, TypeStats> = BTreeMap::new();
    let mut per_sample = Vec::with_capacity(testset.len());
    for e in testset {
        let (predicted, confidence) = predictor.answer(e);
        let correct = e.adequate && predicted == e.answer;
        let key = e.perturbation.map_or("none", PerturbationType::as_str).to_string();
        let stats = per_type.entry(key).or_insert(TypeStats {
            errors: 0,
            total: 0,
            mean_confidence: 0.0,
        });
        stats.total += 1;
        stats.errors += usize::from(!correct);
        stats.mean_confidence += confidence;
        per_sample.push(SampleResult {
            question: e.question.clone(),
            perturbation: e.perturbation,
            adequate: e.adequate,
            expected: e.answer.clone(),
            predicted,
            correct,
            confidence,
        });
    }
    for s in per_type.values_mut() {
        s.mean_confidence /= s.total as f64;
    }
    let errors: usize = per_type.values().map(|s| s.errors).sum();
    EvalResult {
        overall_error: if testset.is_empty() {
            0.0
        } else {
            errors as f64 / testset.len() as f64
        },
        per_type,
        per_sample,
    }
}

/// Checks that the test set lives on the model's vocabulary, then scores it.
pub fn evaluate(model: &Model, testset: &[Example]) -> Result<EvalResult, EvalError> {
    let vocab = model.vocab();
    for (sample, e) in testset.iter().enumerate() {
        let answer = e.adequate.then_some(e.answer.as_str());
        if let Some(token) = e
            .triples
            .iter()
            .flat_map(|t| t.tokens())
            .chain(answer)
            .find(|t| !vocab.contains(t))
        {
            return Err(EvalError::VocabularyMismatch {
                sample,
                token: token.to_string(),
            });
        }
    }
    Ok(evaluate_with(model, testset))
}

/// Fraction of examples on which the predictor matches the lookup oracle.
pub fn oracle_agreement(predictor: &impl Predictor, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let agree = examples
        .iter()
        .filter(|e| oracle_answer(e).is_some_and(|a| predictor.answer(e).0 == a))
        .count();
    agree as f64 / examples.len() as f64
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub task: String,
    pub test_error: f64,
    pub training_set: Option<usize>,
    pub epochs: Option<usize>,
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Plain-text table with columns Task, Test Error, Training Set, Epochs.
pub fn format_results(rows: &[ResultRow]) -> String {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.task.clone(),
                format!("{:.2}", r.test_error),
                r.training_set.map_or("-".into(), thousands),
                r.epochs.map_or("-".into(), |e| e.to_string()),
            ]
        })
        .collect();
    let header = ["Task", "Test Error", "Training Set", "Epochs"];
    let widths: Vec<usize> = (0..4)
        .map(|c| cells.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |row: [&str; 4]| {
        let mut s = format!("| {:<w$} |", row[0], w = widths[0]);
        for c in 1..4 {
            s.push_str(&format!(" {:>w$} |", row[c], w = widths[c]));
        }
        s.push('\n');
        s
    };
    let rule: String = {
        let mut s = String::from("|");
        for w in &widths {
            s.push_str(&"-".repeat(w + 2));
            s.push('|');
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push_str(&rule);
    for r in &cells {
        out.push_str(&line([&r[0], &r[1], &r[2], &r[3]]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, Task};
    use crate::table::{Table, Vocabulary};

    fn austria() -> Example {
        let t = Table::new(
            vec!["city", "immigration", "emigration_total"],
            vec![vec!["klagenfurt", "110", "140"], vec!["salzburg", "170", "100"]],
        )
        .unwrap();
        Example::from_table(&t, "what is the immigration in salzburg", "170")
    }

    fn composite_example() -> Vec<Triple> {
        let t = Table::new(
            vec!["city", "year", "immigration"],
            vec![
                vec!["klagenfurt", "2010", "130"],
                vec!["salzburg", "2010", "170"],
                vec!["salzburg", "2008", "150"],
            ],
        )
        .unwrap();
        t.to_triples()
    }

    #[test]
    fn lookup_examples() {
        let e = austria();
        assert_eq!(lookup_oracle(&e.triples, "immigration", &["salzburg"]), BTreeSet::from(["170".into()]));
        assert!(lookup_oracle(&e.triples, "immigration", &["graz"]).is_empty());
        let c = composite_example();
        assert_eq!(lookup_oracle(&c, "immigration", &["salzburg"]).len(), 2);
        assert_eq!(lookup_oracle(&c, "immigration", &["2010"]).len(), 2);
        assert_eq!(
            lookup_oracle(&c, "immigration", &["salzburg", "2010"]),
            BTreeSet::from(["170".into()])
        );
    }

    #[test]
    fn question_parts_of_template_question() {
        let parts = question_parts(&austria());
        assert_eq!(parts.column.as_deref(), Some("immigration"));
        assert_eq!(parts.keys, ["salzburg"]);
        assert_eq!(oracle_answer(&austria()).as_deref(), Some("170"));
    }

    #[test]
    fn omit_removes_only_connectors() {
        let e = austria();
        let mut rng = SeededRng::new(4);
        for _ in 0..1000 {
            let p = perturb_omit(&e, &mut rng).unwrap();
            let removed = e.question.len() - p.question.len();
            assert!((1..=2).contains(&removed));
            assert!(p.question.contains(&"immigration".to_string()));
            assert!(p.question.contains(&"salzburg".to_string()));
            assert_eq!(oracle_answer(&p).as_deref(), Some("170"));
            assert_eq!(p.answer, "170");
        }
    }

    #[test]
    fn omit_single_connector() {
        let mut e = austria();
        e.question = vec!["immigration".into(), "in".into(), "salzburg".into()];
        let p = perturb_omit(&e, &mut SeededRng::new(0)).unwrap();
        assert_eq!(p.question, ["immigration", "salzburg"]);
    }

    #[test]
    fn omit_errors() {
        let mut e = austria();
        e.question = vec!["salzburg".into()];
        assert_eq!(perturb_omit(&e, &mut SeededRng::new(0)), Err(EvalError::QuestionTooShort(1)));
        e.question = vec!["immigration".into(), "salzburg".into()];
        assert_eq!(perturb_omit(&e, &mut SeededRng::new(0)), Err(EvalError::NoConnector));
    }

    #[test]
    fn reorder_is_non_identity() {
        let e = austria();
        let mut rng = SeededRng::new(8);
        for _ in 0..200 {
            let p = perturb_reorder(&e, &mut rng).unwrap();
            assert_ne!(p.question, e.question);
            let (mut a, mut b) = (p.question.clone(), e.question.clone());
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        let mut two = austria();
        two.question = vec!["immigration".into(), "salzburg".into()];
        assert_eq!(
            perturb_reorder(&two, &mut rng).unwrap().question,
            ["salzburg", "immigration"]
        );
        two.question = vec!["x".into(), "x".into()];
        assert_eq!(perturb_reorder(&two, &mut rng), Err(EvalError::NoReordering));
    }

    #[test]
    fn unseen_column_retargets() {
        let p = perturb_unseen_column(&austria(), "emigration_total").unwrap();
        assert_eq!(p.question, ["what", "is", "the", "emigration_total", "in", "salzburg"]);
        assert_eq!(p.answer, "100");
        assert_eq!(
            perturb_unseen_column(&austria(), "births"),
            Err(EvalError::UnknownColumn("births".into()))
        );
    }

    #[test]
    fn inadequate_has_no_oracle_answer() {
        let spec = GenerationSpec::default_for(Task::SimpleKey);
        let mut rng = SeededRng::new(2);
        for kind in [InadequateKind::AbsentKey, InadequateKind::AbsentColumn] {
            let p = make_inadequate(&austria(), &spec, kind, &mut rng).unwrap();
            assert!(!p.adequate);
            assert_eq!(p.answer, NO_ANSWER);
            let parts = question_parts(&p);
            let found = parts
                .column
                .map(|c| lookup_oracle(&p.triples, &c, &parts.keys))
                .unwrap_or_default();
            assert!(found.is_empty() || parts.keys.is_empty(), "{p:?}");
            assert_eq!(oracle_answer(&p), None);
        }
    }

    #[test]
    fn graz_question_is_inadequate() {
        let mut e = austria();
        e.question = crate::table::tokenize("what is the immigration in graz");
        assert_eq!(oracle_answer(&e), None);
    }

    fn testset(task: Task, seed: u64) -> Vec<Example> {
        let spec = GenerationSpec::default_for(task).with_examples(100, 1000 + seed);
        build_testset(&generate_dataset(&spec).unwrap(), &spec, seed).unwrap()
    }

    #[test]
    fn testset_shape_and_determinism() {
        for task in [Task::SimpleKey, Task::CompositeKey] {
            let t = testset(task, 3);
            assert_eq!(t.len(), 32);
            for kind in PerturbationType::ALL {
                assert_eq!(t.iter().filter(|e| e.perturbation == Some(kind)).count(), 8);
            }
            for e in &t {
                match e.adequate {
                    true => assert_eq!(oracle_answer(e).as_deref(), Some(e.answer.as_str())),
                    false => assert_eq!(oracle_answer(e), None),
                }
            }
            assert_eq!(t, testset(task, 3));
            assert_ne!(t, testset(task, 4));
        }
    }

    #[test]
    fn testset_disjoint_from_training() {
        let spec = GenerationSpec::default_for(Task::SimpleKey);
        let train = generate_dataset(&spec.clone().with_examples(5949, 1)).unwrap();
        let test = testset(Task::SimpleKey, 3);
        let seen: HashSet<(&[Triple], &[String])> =
            train.iter().map(|e| (e.triples.as_slice(), e.question.as_slice())).collect();
        assert!(test.iter().all(|e| !seen.contains(&(e.triples.as_slice(), e.question.as_slice()))));
    }

    #[test]
    fn insufficient_base_rejected() {
        let spec = GenerationSpec::default_for(Task::SimpleKey).with_examples(10, 1);
        let base = generate_dataset(&spec).unwrap();
        assert_eq!(
            build_testset(&base, &spec, 0),
            Err(EvalError::InsufficientBase { needed: 32, available: 10 })
        );
        let mut no_reserve = spec.with_examples(40, 1);
        no_reserve.reserved_column = None;
        let base = generate_dataset(&no_reserve).unwrap();
        assert_eq!(build_testset(&base, &no_reserve, 0), Err(EvalError::NoReservedColumn));
    }

    #[test]
    fn oracle_floor_is_a_quarter() {
        for task in [Task::SimpleKey, Task::CompositeKey] {
            let result = evaluate_with(&OraclePredictor, &testset(task, 9));
            assert_eq!(result.overall_error, 0.25);
            assert_eq!(result.stats(PerturbationType::Inadequate).unwrap().errors, 8);
            let sum: usize = result.per_type.values().map(|s| s.errors).sum();
            assert_eq!(sum as f64 / 32.0, result.overall_error);
        }
    }

    #[test]
    fn vocabulary_mismatch_detected() {
        let other = Vocabulary::from_tokens(["a", "b"]);
        let model = Model::init(Default::default(), other).unwrap();
        assert!(matches!(evaluate(&model, &[austria()]), Err(EvalError::VocabularyMismatch { sample: 0, .. })));
    }

    #[test]
    fn results_table_layout() {
        let text = format_results(&[
            ResultRow {
                task: "Simple key".into(),
                test_error: 0.5,
                training_set: Some(5949),
                epochs: Some(29),
            },
            ResultRow {
                task: "Composite key".into(),
                test_error: 0.59,
                training_set: Some(18953),
                epochs: Some(88),
            },
        ]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "| Task          | Test Error | Training Set | Epochs |");
        assert_eq!(lines[2], "| Simple key    |       0.50 |        5,949 |     29 |");
        assert_eq!(lines[3], "| Composite key |       0.59 |       18,953 |     88 |");
    }
}
