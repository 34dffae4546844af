//! BM25 ranking against a brute-force scan, and hypothesis strings for the
//! two worked examples.

use actknow_core::nli::{convert, make_hypothesis};
use actknow_core::text::tokenize;
use actknow_core::{rng, Corpus, InvertedIndex, QaItem};
use rand::Rng as _;

use crate::oracles::bm25_scan;

pub const WORDS: [&str; 12] = [
    "soil", "water", "wind", "plant", "sun", "energy", "grass", "goat", "erosion", "air", "light", "rock",
];

pub fn random_corpus(n: usize, rng: &mut rng::Rng) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..12);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

fn compare(sentences: &[String], query: &str) -> Result<f64, String> {
    let corpus = Corpus::new(sentences.to_vec());
    let index = InvertedIndex::build(&corpus).map_err(|e| e.to_string())?;
    let tokens: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s)).collect();
    let want = bm25_scan(&tokens, &tokenize(query));
    let got = index.retrieve(query, sentences.len()).map_err(|e| e.to_string())?;
    if got.len() != want.len() {
        return Err(format!("query {query:?}: {} hits vs {}", got.len(), want.len()));
    }
    let mut worst: f64 = 0.0;
    for ((gi, gs), (wi, ws)) in got.iter().zip(&want) {
        if gi != wi || (gs - ws).abs() >= 1e-9 {
            return Err(format!("query {query:?}: ({gi}, {gs}) vs ({wi}, {ws})"));
        }
        worst = worst.max((gs - ws).abs());
    }
    Ok(worst)
}

/// Ten random queries on corpora of 1 to 1000 sentences.
pub fn bm25() -> Result<String, String> {
    let mut rng = rng::stream(0, "bm25-oracle");
    let mut worst: f64 = 0.0;
    let sizes = [1, 7, 60, 400, 1000];
    for size in sizes {
        let sentences = random_corpus(size, &mut rng);
        for _ in 0..10 {
            let len = rng.random_range(1..6);
            let query: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            worst = worst.max(compare(&sentences, &query.join(" "))?);
        }
    }
    Ok(format!("{} queries, order exact, max score deviation {worst:.1e}", sizes.len() * 10))
}

fn item(stem: &str, choices: &[&str]) -> QaItem {
    QaItem {
        id: "q".into(),
        stem: stem.into(),
        choices: choices.iter().map(|c| c.to_string()).collect(),
        answer_index: 0,
    }
}

/// Both directly and through the full QA-to-NLI conversion.
pub fn worked_examples() -> Result<String, String> {
    let easy = item(
        "The movement of soil by wind or water is called ?",
        &["Condensation", "Evaporation", "Erosion", "Friction"],
    );
    let challenge = item(
        "A goat gets energy from the grass it eats. Where does the grass get its energy?",
        &["soil", "sunlight", "water", "air"],
    );
    let want_easy = [
        "The movement of soil by wind or water is called Condensation",
        "The movement of soil by wind or water is called Evaporation",
        "The movement of soil by wind or water is called Erosion",
        "The movement of soil by wind or water is called Friction",
    ];
    let want_challenge = [
        "A goat gets energy from the grass it eats. soil does the grass get its energy",
        "A goat gets energy from the grass it eats. sunlight does the grass get its energy",
        "A goat gets energy from the grass it eats. water does the grass get its energy",
        "A goat gets energy from the grass it eats. air does the grass get its energy",
    ];
    let corpus = Corpus::new(vec![
        "When soil is washed away by water and wind, it's called soil erosion.".into(),
        "Plants get their energy by absorbing sunlight.".into(),
    ]);
    let index = InvertedIndex::build(&corpus).map_err(|e| e.to_string())?;
    for (q, want) in [(&easy, &want_easy), (&challenge, &want_challenge)] {
        for (choice, w) in q.choices.iter().zip(want.iter()) {
            let got = make_hypothesis(&q.stem, choice);
            if got.as_bytes() != w.as_bytes() {
                return Err(format!("{got:?} != {w:?}"));
            }
        }
        let pairs = convert(q, &index, &corpus, 2).map_err(|e| e.to_string())?;
        let got: Vec<&str> = pairs.iter().map(|p| p.hypothesis.as_str()).collect();
        if got != want.to_vec() {
            return Err(format!("conversion gave {got:?}"));
        }
    }
    Ok("8 hypotheses byte-exact".into())
}
