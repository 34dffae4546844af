//! In-memory BM25 sentence retrieval over a plain-text corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

pub type SentenceId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    sentences: Vec<String>,
    tokenized: Vec<Vec<String>>,
}

impl Corpus {
    pub fn new(sentences: Vec<String>) -> Self {
        let tokenized = sentences.iter().map(|s| tokenize(s)).collect();
        Corpus {
            sentences,
            tokenized,
        }
    }

    /// One sentence per line; blank lines are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence(&self, id: SentenceId) -> &str {
        &self.sentences[id]
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn tokens(&self, id: SentenceId) -> &[String] {
        &self.tokenized[id]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Posting {
    pub sentence: SentenceId,
    pub term_frequency: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("corpus has no sentences".into()));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        for (id, tokens) in corpus.tokenized.iter().enumerate() {
            doc_lengths.push(tokens.len());
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_default() += 1;
            }
            for (t, tf) in counts {
                postings.entry(t.to_string()).or_default().push(Posting {
                    sentence: id,
                    term_frequency: tf,
                });
            }
        }
        let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64;
        Ok(InvertedIndex {
            postings,
            doc_lengths,
            avg_doc_length,
        })
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn num_sentences(&self) -> usize {
        self.doc_lengths.len()
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, the non-negative BM25 idf.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.postings(token).len() as f64;
        let total = self.num_sentences() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// Top-`k` sentences by BM25 (`k1 = 1.2`, `b = 0.75`). Each distinct
    /// query token contributes once. Scores descend; ties go to the lower
    /// sentence id. Sentences sharing no token with the query are omitted.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(SentenceId, f64)>> {
        if k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scores: BTreeMap<SentenceId, f64> = BTreeMap::new();
        for term in &terms {
            let idf = self.idf(term);
            for p in self.postings(term) {
                let tf = f64::from(p.term_frequency);
                let norm = 1.0 - BM25_B + BM25_B * self.doc_lengths[p.sentence] as f64 / self.avg_doc_length;
                *scores.entry(p.sentence).or_default() += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        let mut ranked: Vec<(SentenceId, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked)
    }
}
