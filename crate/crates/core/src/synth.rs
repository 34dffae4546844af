//! Seeded synthetic question sets that can only be answered by following a
//! knowledge-graph hop.
//!
//! Entities fall into a corpus-visible part (subjects, one trap per subject,
//! fillers) and a hidden part that never appears in the corpus. A question
//! asks "What does S connect to ?"; the answer is a hidden entity at KG
//! distance exactly `hop_depth` from S. Distractors are the subject's trap,
//! which co-occurs with S in the corpus, and hidden entities farther than
//! `hop_depth` from S and from every clean premise entity. The corpus never
//! mentions the answer, so lexical overlap points at the trap.
//!
//! Noise fillers (`noise_fillers_per_subject > 0`) are extra, lower-ranked
//! premise entities whose KG neighborhood reaches the hidden distractors: a
//! subgraph that admits them links distractors to the question as well.

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::nli::{dataset_to_jsonl, retrieve_premise, QaItem};
use crate::retrieval::{Corpus, InvertedIndex};
use crate::rng;
use crate::subgraph::{ConceptMatcher, MentionSource};
use crate::text::tokenize;
use crate::training::Splits;

const TEMPLATE_WORDS: [&str; 13] = [
    "what", "does", "connect", "to", "is", "often", "seen", "with", "appears", "beside", "sometimes", "noted",
    "near",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_questions: usize,
    /// 1 or 2.
    pub hop_depth: usize,
    /// Wrong choices per question; the first is the subject's trap.
    pub distractors: usize,
    pub seed: u64,
    pub fillers_per_subject: usize,
    pub noise_fillers_per_subject: usize,
    /// Hidden neighbors of each noise filler.
    pub noise_degree: usize,
    pub dev_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_entities: 200,
            n_relations: 6,
            n_questions: 600,
            hop_depth: 2,
            distractors: 3,
            seed: 7,
            fillers_per_subject: 2,
            noise_fillers_per_subject: 0,
            noise_degree: 8,
            dev_fraction: 1.0 / 6.0,
            test_fraction: 1.0 / 6.0,
        }
    }
}

impl SyntheticSpec {
    /// The default task with two noise fillers per subject.
    pub fn noisy() -> Self {
        SyntheticSpec {
            noise_fillers_per_subject: 2,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(1..=2).contains(&self.hop_depth) {
            return fail(format!("hop_depth must be 1 or 2, got {}", self.hop_depth));
        }
        if self.distractors == 0 {
            return fail("need at least one distractor".into());
        }
        if self.n_relations == 0 || self.n_questions == 0 {
            return fail("n_relations and n_questions must be positive".into());
        }
        if 1 + self.fillers_per_subject + self.noise_fillers_per_subject > 5 {
            return fail("at most 5 corpus sentences per subject (trap + fillers + noise fillers)".into());
        }
        if !(self.dev_fraction >= 0.0 && self.test_fraction >= 0.0 && self.dev_fraction + self.test_fraction < 1.0) {
            return fail("dev_fraction + test_fraction must be in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub graph: KnowledgeGraph,
    pub corpus: Vec<String>,
    pub splits: Splits,
}

impl SyntheticTask {
    pub fn corpus_text(&self) -> String {
        self.corpus.iter().map(|s| format!("{s}\n")).collect()
    }

    /// `kg.tsv`, `corpus.txt`, `train.jsonl`, `dev.jsonl`, `test.jsonl`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("kg.tsv", self.graph.to_tsv()),
            ("corpus.txt", self.corpus_text()),
            ("train.jsonl", dataset_to_jsonl(&self.splits.train)),
            ("dev.jsonl", dataset_to_jsonl(&self.splits.dev)),
            ("test.jsonl", dataset_to_jsonl(&self.splits.test)),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn all_items(&self) -> Vec<QaItem> {
        let s = &self.splits;
        s.train.iter().chain(&s.dev).chain(&s.test).cloned().collect()
    }
}

fn pseudo_words<R: rand::Rng>(n: usize, rng: &mut R) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut seen: HashSet<String> = TEMPLATE_WORDS.iter().map(|w| w.to_string()).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let word: String = (0..3)
            .flat_map(|_| {
                [
                    CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char,
                    VOWELS[rng.random_range(0..VOWELS.len())] as char,
                ]
            })
            .collect();
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

/// Undirected graph over generator-local indices.
struct Builder {
    adj: Vec<BTreeSet<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Builder {
            adj: vec![BTreeSet::new(); n],
            edges: Vec::new(),
        }
    }

    fn link(&mut self, a: usize, b: usize) -> bool {
        if a == b || self.adj[a].contains(&b) {
            return false;
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a);
        self.edges.push((a, b));
        true
    }

    /// Distances up to `limit` from `source`.
    fn within(&self, source: usize, limit: usize) -> HashMap<usize, usize> {
        let mut dist = HashMap::from([(source, 0)]);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d == limit {
                continue;
            }
            for &v in &self.adj[u] {
                if let Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

struct Subject {
    id: usize,
    trap: usize,
    fillers: Vec<usize>,
    noise: Vec<usize>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let hop = spec.hop_depth;
    let n = spec.n_entities;
    let n_subjects = (n / 5).max(2);
    let n_fillers = (n / 10).max(spec.fillers_per_subject);
    let n_noise = if spec.noise_fillers_per_subject > 0 {
        (n / 20).max(spec.noise_fillers_per_subject)
    } else {
        0
    };
    let visible = 2 * n_subjects + n_fillers + n_noise;
    let n_hidden = n.saturating_sub(visible);
    if n_hidden < 4 * (spec.distractors + 1) {
        return Err(Error::Config(format!(
            "{n} entities leave {n_hidden} hidden entities; too few for {} distractors",
            spec.distractors
        )));
    }
    let per_subject = spec.n_questions.div_ceil(n_subjects);

    let mut rng = rng::stream(spec.seed, "synth");
    let names = pseudo_words(n + spec.n_relations, &mut rng);
    let relations: Vec<String> = names[n..].to_vec();

    // Index layout: subjects, traps, fillers, noise fillers, hidden.
    let subjects_ix: Vec<usize> = (0..n_subjects).collect();
    let fillers_ix: Vec<usize> = (2 * n_subjects..2 * n_subjects + n_fillers).collect();
    let noise_ix: Vec<usize> = (2 * n_subjects + n_fillers..visible).collect();
    let hidden: Vec<usize> = (visible..n).collect();

    let mut b = Builder::new(n);
    for &h in &hidden {
        let mut added = 0;
        while added < 2 {
            let other = hidden[rng.random_range(0..hidden.len())];
            if b.link(h, other) {
                added += 1;
            }
        }
    }
    let subject_degree = if hop == 1 { per_subject + 2 } else { 5 };
    let link_hidden = |b: &mut Builder, e: usize, k: usize, rng: &mut rng::Rng| {
        let mut added = 0;
        while added < k.min(hidden.len()) {
            if b.link(e, hidden[rng.random_range(0..hidden.len())]) {
                added += 1;
            }
        }
    };
    for &s in &subjects_ix {
        link_hidden(&mut b, s, subject_degree, &mut rng);
    }
    // A trap hangs off a hidden entity at least `hop` away from its subject,
    // so the trap itself is never a correct answer.
    for &s in &subjects_ix {
        let from_subject = b.within(s, hop);
        let far: Vec<usize> = hidden
            .iter()
            .copied()
            .filter(|h| from_subject.get(h).is_none_or(|&d| d >= hop))
            .collect();
        if far.is_empty() {
            return Err(Error::Config("graph too dense to place traps".into()));
        }
        b.link(n_subjects + s, far[rng.random_range(0..far.len())]);
    }
    for &f in &fillers_ix {
        link_hidden(&mut b, f, 1, &mut rng);
    }
    for &f in &noise_ix {
        link_hidden(&mut b, f, spec.noise_degree, &mut rng);
    }

    let subjects: Vec<Subject> = subjects_ix
        .iter()
        .map(|&s| {
            let mut fillers = fillers_ix.clone();
            fillers.shuffle(&mut rng);
            fillers.truncate(spec.fillers_per_subject);
            let mut noise = noise_ix.clone();
            noise.shuffle(&mut rng);
            noise.truncate(spec.noise_fillers_per_subject);
            Subject {
                id: s,
                trap: n_subjects + s,
                fillers,
                noise,
            }
        })
        .collect();

    let mut corpus = Vec::new();
    for s in &subjects {
        corpus.push(format!("{} appears beside {}", names[s.id], names[s.trap]));
        for &f in &s.fillers {
            corpus.push(format!("{} is often seen with {}", names[s.id], names[f]));
        }
        for &f in &s.noise {
            corpus.push(format!("{} is sometimes noted near {}", names[s.id], names[f]));
        }
    }

    let mut answer_count = vec![0usize; n];
    let mut distractor_count = vec![0usize; n];
    let mut used_pairs: HashSet<(usize, usize)> = HashSet::new();
    let mut items = Vec::with_capacity(spec.n_questions);
    let mut exhausted = vec![false; n_subjects];
    let mut cursor = 0;
    while items.len() < spec.n_questions {
        if exhausted.iter().all(|&x| x) {
            return Err(Error::Config(format!(
                "only {} questions fit this graph; asked for {}",
                items.len(),
                spec.n_questions
            )));
        }
        let si = cursor % n_subjects;
        cursor += 1;
        if exhausted[si] {
            continue;
        }
        let s = &subjects[si];
        let from_subject = b.within(s.id, hop + 1);
        let mut answers: Vec<usize> = hidden
            .iter()
            .copied()
            .filter(|h| from_subject.get(h) == Some(&hop) && !used_pairs.contains(&(s.id, *h)))
            .collect();
        if answers.is_empty() {
            exhausted[si] = true;
            continue;
        }
        answers.shuffle(&mut rng);
        answers.sort_by_key(|&h| answer_count[h]);
        let answer = answers[0];

        let mut near: HashSet<usize> = from_subject.keys().copied().collect();
        for &e in std::iter::once(&s.trap).chain(&s.fillers) {
            near.extend(b.within(e, hop).into_keys());
        }
        let noisy: HashSet<usize> = s.noise.iter().flat_map(|&e| b.within(e, hop).into_keys()).collect();
        let mut pool: Vec<usize> = hidden.iter().copied().filter(|h| !near.contains(h)).collect();
        pool.shuffle(&mut rng);
        let weight = |h: &usize| distractor_count[*h] as i64 - spec.distractors as i64 * answer_count[*h] as i64;
        pool.sort_by_key(|h| (weight(h) > 0, !s.noise.is_empty() && !noisy.contains(h), weight(h)));
        if pool.len() < spec.distractors - 1 {
            exhausted[si] = true;
            continue;
        }
        used_pairs.insert((s.id, answer));
        answer_count[answer] += 1;
        let mut wrong = vec![s.trap];
        wrong.extend(pool.into_iter().take(spec.distractors - 1));
        for &w in &wrong {
            distractor_count[w] += 1;
        }
        wrong.shuffle(&mut rng);
        let answer_index = rng.random_range(0..=wrong.len());
        let mut choices: Vec<String> = wrong.iter().map(|&w| names[w].clone()).collect();
        choices.insert(answer_index, names[answer].clone());
        items.push(QaItem {
            id: String::new(),
            stem: format!("What does {} connect to ?", names[s.id]),
            choices,
            answer_index,
        });
    }
    items.shuffle(&mut rng);
    for (i, item) in items.iter_mut().enumerate() {
        item.id = format!("synth-{i:04}");
    }
    let n_dev = (spec.dev_fraction * items.len() as f64).round() as usize;
    let n_test = (spec.test_fraction * items.len() as f64).round() as usize;
    let test = items.split_off(items.len() - n_test);
    let dev = items.split_off(items.len() - n_dev);

    let triples: Vec<(String, String, String)> = b
        .edges
        .iter()
        .map(|&(x, y)| {
            let r = &relations[rng.random_range(0..relations.len())];
            (names[x].clone(), r.clone(), names[y].clone())
        })
        .collect();
    let graph = KnowledgeGraph::from_labeled(triples.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())))?;
    Ok(SyntheticTask {
        graph,
        corpus,
        splits: Splits {
            train: items,
            dev,
            test,
        },
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub questions: usize,
    /// Gold answer at distance exactly `hop_depth` from the subject and
    /// every distractor farther away.
    pub kg_answerable: usize,
    /// Gold answer's tokens all occur in its own retrieved premise.
    pub lexically_answerable: usize,
    /// Some distractor's tokens all occur in its own retrieved premise.
    pub distractor_cued: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.kg_answerable == self.questions
            && self.lexically_answerable == 0
            && self.distractor_cued == self.questions
    }
}

fn graph_distances(graph: &KnowledgeGraph, source: EntityId, limit: usize) -> Result<HashMap<EntityId, usize>> {
    let mut dist = HashMap::from([(source, 0)]);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == limit {
            continue;
        }
        for nb in graph.neighbors(u)? {
            if let Entry::Vacant(e) = dist.entry(nb.entity) {
                e.insert(d + 1);
                queue.push_back(nb.entity);
            }
        }
    }
    Ok(dist)
}

/// Re-checks every question against the graph and the retrieval pipeline:
/// the subject is the single entity named in the stem, the answer is
/// exactly `hop_depth` hops away, distractors are farther, the answer never
/// appears in its premise and some distractor does appear in its own.
pub fn verify(graph: &KnowledgeGraph, corpus: &Corpus, items: &[QaItem], hop_depth: usize, k: usize) -> Result<VerifyReport> {
    let index = InvertedIndex::build(corpus)?;
    let matcher = ConceptMatcher::new(graph);
    let mut report = VerifyReport {
        questions: items.len(),
        ..VerifyReport::default()
    };
    for item in items {
        let subjects: BTreeSet<EntityId> = matcher
            .identify(&item.stem, MentionSource::Hypothesis)
            .into_iter()
            .map(|m| m.entity)
            .collect();
        if subjects.len() != 1 {
            report.problems.push(format!("{}: stem names {} entities", item.id, subjects.len()));
            continue;
        }
        let subject = *subjects.first().expect("one subject");
        let dist = graph_distances(graph, subject, hop_depth + 1)?;
        let hops = |choice: &str| graph.entity_id(choice).and_then(|e| dist.get(&e).copied());
        let answer_ok = hops(&item.choices[item.answer_index]) == Some(hop_depth);
        let distractors_far = item
            .choices
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != item.answer_index)
            .all(|(_, c)| hops(c).is_none_or(|d| d > hop_depth));
        if answer_ok && distractors_far {
            report.kg_answerable += 1;
        } else {
            report.problems.push(format!("{}: not answerable from the graph", item.id));
        }

        let mut cued = false;
        for (i, choice) in item.choices.iter().enumerate() {
            let premise: HashSet<String> =
                tokenize(&retrieve_premise(&index, corpus, &item.stem, choice, k)?).into_iter().collect();
            let present = tokenize(choice).iter().all(|t| premise.contains(t));
            if i == item.answer_index && present {
                report.lexically_answerable += 1;
                report.problems.push(format!("{}: answer occurs in its premise", item.id));
            } else if i != item.answer_index && present {
                cued = true;
            }
        }
        if cued {
            report.distractor_cued += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_entities: 120,
            n_questions: 150,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn generated_questions_verify() {
        for hop in [1, 2] {
            let spec = SyntheticSpec {
                hop_depth: hop,
                ..small(3)
            };
            let task = generate(&spec).unwrap();
            let items = task.all_items();
            assert_eq!(items.len(), 150);
            let report = verify(&task.graph, &Corpus::new(task.corpus.clone()), &items, hop, 5).unwrap();
            assert!(report.ok(), "hop {hop}: {:?}", &report.problems[..report.problems.len().min(5)]);
        }
    }

    #[test]
    fn same_seed_same_files() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a.graph.to_tsv(), b.graph.to_tsv());
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.splits, b.splits);
        assert_ne!(generate(&small(6)).unwrap().splits, a.splits);
    }

    #[test]
    fn rejects_unsupported_specs() {
        let bad = |spec: SyntheticSpec| generate(&spec).unwrap_err();
        assert!(matches!(bad(SyntheticSpec { hop_depth: 3, ..small(1) }), Error::Config(_)));
        assert!(matches!(bad(SyntheticSpec { n_entities: 20, ..small(1) }), Error::Config(_)));
        assert!(matches!(bad(SyntheticSpec { distractors: 0, ..small(1) }), Error::Config(_)));
    }

    #[test]
    fn names_avoid_template_words() {
        let words = pseudo_words(5000, &mut rng::stream(0, "names"));
        for w in TEMPLATE_WORDS {
            assert!(!words.iter().any(|x| x == w));
        }
        assert_eq!(words.iter().collect::<HashSet<_>>().len(), words.len());
    }
}
