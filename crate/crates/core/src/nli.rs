//! Multiple-choice questions recast as one premise/hypothesis pair per choice.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{Corpus, InvertedIndex};

/// One line of the dataset JSONL format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    #[serde(rename = "question")]
    pub stem: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl QaItem {
    pub fn validate(&self) -> Result<()> {
        if self.choices.len() < 2 {
            return Err(Error::Invalid(format!(
                "question {} has {} choices, need at least 2",
                self.id,
                self.choices.len()
            )));
        }
        if self.answer_index >= self.choices.len() {
            return Err(Error::Invalid(format!(
                "question {} answer_index {} out of range",
                self.id, self.answer_index
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
    pub choice_index: usize,
}

pub const WH_WORDS: [&str; 7] = ["what", "which", "where", "who", "when", "why", "how"];

fn wh_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(r"(?i)\b(?:{})\b", WH_WORDS.join("|"))).expect("valid regex")
    })
}

/// Replaces the first WH word of `stem` with `choice` and drops the
/// trailing question mark. Stems without a WH word get the choice appended.
pub fn make_hypothesis(stem: &str, choice: &str) -> String {
    let choice = choice.trim();
    match wh_pattern().find(stem) {
        Some(m) => {
            let replaced = format!("{}{}{}", &stem[..m.start()], choice, &stem[m.end()..]);
            strip_question_mark(&replaced).to_string()
        }
        None => format!("{} {}", strip_question_mark(stem), choice),
    }
}

fn strip_question_mark(s: &str) -> &str {
    let s = s.trim_end();
    s.strip_suffix('?').unwrap_or(s).trim_end()
}

/// Retrieval query for a choice's premise: the stem followed by the choice.
pub fn premise_query(stem: &str, choice: &str) -> String {
    format!("{stem} {choice}")
}

/// The top-`k` retrieved sentences for `stem + choice`, in rank order,
/// joined with single spaces. Empty if nothing matched.
pub fn retrieve_premise(
    index: &InvertedIndex,
    corpus: &Corpus,
    stem: &str,
    choice: &str,
    k: usize,
) -> Result<String> {
    let hits = index.retrieve(&premise_query(stem, choice), k)?;
    Ok(hits
        .iter()
        .map(|(id, _)| corpus.sentence(*id))
        .collect::<Vec<_>>()
        .join(" "))
}

/// One pair per choice, in choice order.
pub fn convert(item: &QaItem, index: &InvertedIndex, corpus: &Corpus, k: usize) -> Result<Vec<NliPair>> {
    item.choices
        .iter()
        .enumerate()
        .map(|(i, choice)| {
            Ok(NliPair {
                premise: retrieve_premise(index, corpus, &item.stem, choice, k)?,
                hypothesis: make_hypothesis(&item.stem, choice),
                choice_index: i,
            })
        })
        .collect()
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<QaItem>> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: QaItem = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        item.validate().map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaItem>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

pub fn dataset_to_jsonl(items: &[QaItem]) -> String {
    items
        .iter()
        .map(|q| serde_json::to_string(q).expect("serializable") + "\n")
        .collect()
}
