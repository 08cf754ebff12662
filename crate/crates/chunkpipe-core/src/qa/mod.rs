//! Multiple-choice QA: data model, answer-position balancing, random holdout
//! splits, prompt construction and accuracy evaluation.

mod eval;
mod prompt;

pub use eval::{
    answer_item, evaluate, ContextSource, EvalConfig, EvalDeps, EvalReport, ItemTrace,
    MAX_ANSWER_TOKENS,
};
pub use prompt::{build_prompt, parse_answer, AnswerParseError, SymbolSet, SymbolSetId};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// PRNG recorded alongside seeds in artifacts; the determinism contract is
/// same-implementation reproducibility.
pub const PRNG_ID: &str = "chacha8";

#[derive(Debug, Error)]
pub enum QaError {
    #[error("schema error at line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("line {line}: answer text {answer:?} does not match option {n} {option:?}")]
    AnswerMismatch { line: usize, n: usize, answer: String, option: String },
    #[error("line {line}: answer names option {n} but the item has {len} options")]
    AnswerOutOfRange { line: usize, n: usize, len: usize },
    #[error("eval size {eval_size} must be smaller than the item count {total}")]
    EvalTooLarge { eval_size: usize, total: usize },
    #[error("item has {options} options but the symbol set only has {symbols}")]
    TooManyOptions { options: usize, symbols: usize },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("model unavailable, aborting evaluation: {message}")]
    ModelUnavailable { message: String, partial: Vec<ItemTrace> },
    #[error("evaluation needs {0} for this context source")]
    MissingDependency(&'static str),
    #[error(transparent)]
    Embedx(#[from] crate::embedx::EmbedxError),
    #[error(transparent)]
    Ranker(#[from] crate::ranker::RankerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialize: {0}")]
    Json(#[from] serde_json::Error),
}

/// One multiple-choice record. `answer_index` is 0-based internally; the
/// 1-based "option N" form exists only at the file boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqaItem {
    pub item_id: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl McqaItem {
    pub fn correct_option(&self) -> &str {
        &self.options[self.answer_index]
    }
}

/// Seeded random holdout plan. Splits are independent samples, not a
/// partition: eval sets of different splits may overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_splits: usize,
    pub eval_size: usize,
    pub splits: Vec<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_ids: Vec<String>,
    pub eval_ids: Vec<String>,
}

/// On-disk MC-QA record: five fields, options keyed "option 1".."option 5",
/// answer as "option N: <text>".
#[derive(Debug, Deserialize)]
struct McqaRecord {
    question: String,
    options: serde_json::Map<String, serde_json::Value>,
    answer: String,
    #[serde(default)]
    explanation: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

/// Load MC-QA items from a JSON-lines file.
///
/// Option keys must be contiguous from "option 1" and option texts distinct;
/// the answer's "option N" index is cross-checked against the named option
/// text. Item ids are assigned by file position (`q0000`, `q0001`, ...).
pub fn load_mcqa(path: &Path) -> Result<Vec<McqaItem>, QaError> {
    let file = std::fs::File::open(path)?;
    let mut items = Vec::new();
    let mut idx = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: McqaRecord = serde_json::from_str(&line).map_err(|e| QaError::Schema {
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        items.push(item_from_record(record, idx, lineno + 1)?);
        idx += 1;
    }
    Ok(items)
}

fn item_from_record(record: McqaRecord, idx: usize, line: usize) -> Result<McqaItem, QaError> {
    let schema_err = |reason: String| QaError::Schema { line, reason };

    let mut options = Vec::new();
    for i in 1..=5usize {
        match record.options.get(&format!("option {i}")) {
            Some(serde_json::Value::String(text)) => options.push(text.clone()),
            Some(other) => {
                return Err(schema_err(format!("option {i} is not a string: {other}")));
            }
            None => break,
        }
    }
    if options.len() < 2 {
        return Err(schema_err(format!("need at least 2 options, found {}", options.len())));
    }
    if record.options.len() != options.len() {
        return Err(schema_err(format!(
            "options object has {} keys but only {} contiguous \"option N\" keys",
            record.options.len(),
            options.len()
        )));
    }
    for (i, a) in options.iter().enumerate() {
        if options[..i].contains(a) {
            return Err(schema_err(format!("duplicate option text {a:?}")));
        }
    }

    let rest = record
        .answer
        .strip_prefix("option ")
        .ok_or_else(|| schema_err(format!("answer {:?} lacks the \"option N: \" prefix", record.answer)))?;
    let (n_str, text) = rest
        .split_once(':')
        .ok_or_else(|| schema_err(format!("answer {:?} lacks \":\" after the option number", record.answer)))?;
    let n: usize = n_str
        .trim()
        .parse()
        .map_err(|_| schema_err(format!("answer option number {n_str:?} is not an integer")))?;
    if n == 0 || n > options.len() {
        return Err(QaError::AnswerOutOfRange { line, n, len: options.len() });
    }
    let text = text.trim();
    if text != options[n - 1].trim() {
        return Err(QaError::AnswerMismatch {
            line,
            n,
            answer: text.to_string(),
            option: options[n - 1].clone(),
        });
    }

    Ok(McqaItem {
        item_id: format!("q{idx:04}"),
        question: record.question,
        options,
        answer_index: n - 1,
        explanation: record.explanation,
        category: record.category,
    })
}

/// Shuffle option contents so the correct answer lands uniformly across
/// positions.
///
/// Items are grouped by option count; within each group a seeded shuffle of
/// the group receives target positions round-robin, so position counts
/// differ by at most one. Each item's distractors are then seeded-shuffled
/// and the correct option inserted at its target. Item order and content are
/// unchanged; only option ordering (and `answer_index`) moves.
pub fn balance_answers(items: &[McqaItem], seed: u64) -> Vec<McqaItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(item.options.len()).or_default().push(i);
    }

    let mut targets = vec![0usize; items.len()];
    for (n_options, members) in &groups {
        let mut order = members.clone();
        order.shuffle(&mut rng);
        for (j, &item_idx) in order.iter().enumerate() {
            targets[item_idx] = j % n_options;
        }
    }

    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let target = targets[i];
        let correct = item.options[item.answer_index].clone();
        let mut distractors: Vec<String> = item
            .options
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != item.answer_index)
            .map(|(_, o)| o.clone())
            .collect();
        distractors.shuffle(&mut rng);
        let mut options = distractors;
        options.insert(target, correct);
        out.push(McqaItem { options, answer_index: target, ..item.clone() });
    }
    out
}

/// Draw `n_splits` independent holdouts of `eval_size` items each.
///
/// Every split samples its eval set without replacement from the full id
/// list using a per-split stream of the seeded PRNG; the rest of the ids are
/// the split's training set. Same seed, same plan.
pub fn make_splits(
    item_ids: &[String],
    n_splits: usize,
    eval_size: usize,
    seed: u64,
) -> Result<SplitPlan, QaError> {
    if eval_size >= item_ids.len() {
        return Err(QaError::EvalTooLarge { eval_size, total: item_ids.len() });
    }
    let mut splits = Vec::with_capacity(n_splits);
    for s in 0..n_splits {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        let mut picked = rand::seq::index::sample(&mut rng, item_ids.len(), eval_size).into_vec();
        picked.sort_unstable();
        let in_eval: std::collections::HashSet<usize> = picked.iter().copied().collect();
        let eval_ids = picked.iter().map(|&i| item_ids[i].clone()).collect();
        let train_ids = (0..item_ids.len())
            .filter(|i| !in_eval.contains(i))
            .map(|i| item_ids[i].clone())
            .collect();
        splits.push(Split { train_ids, eval_ids });
    }
    Ok(SplitPlan { seed, n_splits, eval_size, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mcqa.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        (dir, path)
    }

    const GOOD: &str = r#"{"question":"Which beamforming mixes analog and digital stages?","options":{"option 1":"Analog beamforming","option 2":"Digital beamforming","option 3":"Hybrid beamforming","option 4":"No beamforming"},"answer":"option 3: Hybrid beamforming","explanation":"Hybrid architectures split the precoder.","category":"radio"}"#;

    #[test]
    fn load_parses_option_n_answer() {
        let (_d, path) = write_lines(&[GOOD]);
        let items = load_mcqa(&path).unwrap();
        assert_eq!(items.len(), 1);
        let item = &items[0];
        assert_eq!(item.item_id, "q0000");
        assert_eq!(item.answer_index, 2);
        assert_eq!(item.options.len(), 4);
        assert_eq!(item.correct_option(), "Hybrid beamforming");
        assert_eq!(item.category.as_deref(), Some("radio"));
    }

    #[test]
    fn load_rejects_answer_out_of_range() {
        let rec = r#"{"question":"q","options":{"option 1":"a","option 2":"b","option 3":"c","option 4":"d"},"answer":"option 5: x"}"#;
        let (_d, path) = write_lines(&[rec]);
        assert!(matches!(
            load_mcqa(&path),
            Err(QaError::AnswerOutOfRange { line: 1, n: 5, len: 4 })
        ));
    }

    #[test]
    fn load_rejects_answer_text_mismatch() {
        let rec = r#"{"question":"q","options":{"option 1":"a","option 2":"b"},"answer":"option 2: not b"}"#;
        let (_d, path) = write_lines(&[rec]);
        assert!(matches!(load_mcqa(&path), Err(QaError::AnswerMismatch { line: 1, n: 2, .. })));
    }

    #[test]
    fn load_rejects_missing_fields_and_gaps() {
        let missing = r#"{"question":"q","answer":"option 1: a"}"#;
        let (_d, path) = write_lines(&[missing]);
        assert!(matches!(load_mcqa(&path), Err(QaError::Schema { line: 1, .. })));

        let gap = r#"{"question":"q","options":{"option 1":"a","option 3":"c"},"answer":"option 1: a"}"#;
        let (_d2, path2) = write_lines(&[gap]);
        assert!(matches!(load_mcqa(&path2), Err(QaError::Schema { line: 1, .. })));
    }

    fn synthetic_item(i: usize, n_options: usize, answer: usize) -> McqaItem {
        McqaItem {
            item_id: format!("q{i:04}"),
            question: format!("question {i}"),
            options: (0..n_options).map(|o| format!("item{i} option{o}")).collect(),
            answer_index: answer,
            explanation: None,
            category: None,
        }
    }

    fn content_key(item: &McqaItem) -> (String, String, Vec<String>) {
        let mut distractors: Vec<String> = item
            .options
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != item.answer_index)
            .map(|(_, o)| o.clone())
            .collect();
        distractors.sort();
        (item.question.clone(), item.correct_option().to_string(), distractors)
    }

    #[test]
    fn balance_ten_five_option_items_is_exactly_uniform() {
        let items: Vec<McqaItem> = (0..10).map(|i| synthetic_item(i, 5, i % 2)).collect();
        let balanced = balance_answers(&items, 42);
        let mut histogram = [0usize; 5];
        for item in &balanced {
            histogram[item.answer_index] += 1;
        }
        assert_eq!(histogram, [2, 2, 2, 2, 2]);
        for (before, after) in items.iter().zip(&balanced) {
            assert_eq!(content_key(before), content_key(after));
        }
    }

    #[test]
    fn balance_single_item_holds_trivially() {
        let items = vec![synthetic_item(0, 5, 3)];
        let balanced = balance_answers(&items, 1);
        assert_eq!(balanced.len(), 1);
        assert_eq!(content_key(&items[0]), content_key(&balanced[0]));
    }

    #[test]
    fn balance_seven_four_option_items_max_min_one() {
        let items: Vec<McqaItem> = (0..7).map(|i| synthetic_item(i, 4, 0)).collect();
        let balanced = balance_answers(&items, 7);
        let mut histogram = [0usize; 4];
        for item in &balanced {
            histogram[item.answer_index] += 1;
        }
        let mut sorted = histogram;
        sorted.sort_unstable();
        assert_eq!(sorted, [1, 2, 2, 2]);
    }

    #[test]
    fn balance_is_seed_deterministic() {
        let items: Vec<McqaItem> = (0..20).map(|i| synthetic_item(i, 5, i % 5)).collect();
        assert_eq!(balance_answers(&items, 9), balance_answers(&items, 9));
    }

    #[test]
    fn splits_paper_constants() {
        let ids: Vec<String> = (0..1461).map(|i| format!("q{i:04}")).collect();
        let plan = make_splits(&ids, 7, 336, 42).unwrap();
        assert_eq!(plan.splits.len(), 7);
        for split in &plan.splits {
            assert_eq!(split.eval_ids.len(), 336);
            assert_eq!(split.train_ids.len(), 1125);
            let eval: std::collections::HashSet<&String> = split.eval_ids.iter().collect();
            assert!(split.train_ids.iter().all(|id| !eval.contains(id)));
            let mut all: Vec<&String> = split.train_ids.iter().chain(&split.eval_ids).collect();
            all.sort();
            let mut expect: Vec<&String> = ids.iter().collect();
            expect.sort();
            assert_eq!(all, expect);
        }
    }

    #[test]
    fn splits_eval_size_must_leave_training_data() {
        let ids: Vec<String> = (0..10).map(|i| format!("q{i}")).collect();
        assert!(matches!(
            make_splits(&ids, 2, 10, 0),
            Err(QaError::EvalTooLarge { eval_size: 10, total: 10 })
        ));
    }

    #[test]
    fn splits_same_seed_identical_plan() {
        let ids: Vec<String> = (0..50).map(|i| format!("q{i:04}")).collect();
        let a = make_splits(&ids, 3, 10, 7).unwrap();
        let b = make_splits(&ids, 3, 10, 7).unwrap();
        assert_eq!(a, b);
        let c = make_splits(&ids, 3, 10, 8).unwrap();
        assert_ne!(a, c);
    }
}
