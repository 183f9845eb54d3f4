//! Triples, vocabularies, dataset loading and the derived indexes used by
//! training and evaluation.

mod category;
mod filter;
mod signature;
mod synthetic;

pub use category::{classify_relations, CategoryKind, RelationCategory, CATEGORY_THRESHOLD};
pub use filter::FilterIndex;
pub use signature::{infer_type_signatures, TypeSignatures};
pub use synthetic::{generate_synthetic_kg, SyntheticConfig, SYNTHETIC_RELATIONS};

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Suffix given to the reverse relation created by [`augment_reciprocal`].
pub const REVERSE_SUFFIX: &str = "__reverse";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: line {line}: unknown {kind} '{token}' (not in the training vocabulary)")]
    UnknownToken {
        path: String,
        line: usize,
        kind: &'static str,
        token: String,
    },
    #[error("triple {triple:?} has an index outside the vocabulary ({entities} entities, {relations} relations)")]
    InvalidIndex {
        triple: Triple,
        entities: usize,
        relations: usize,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl KgError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        KgError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A fact `(head, relation, tail)` over dense 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Bijection between entity/relation names and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self, KgError> {
        let mut vocab = Self::new();
        for name in entities {
            if vocab.entity_index.contains_key(&name) {
                return Err(KgError::Config(format!("duplicate entity name '{name}'")));
            }
            vocab.intern_entity(&name);
        }
        for name in relations {
            if vocab.relation_index.contains_key(&name) {
                return Err(KgError::Config(format!("duplicate relation name '{name}'")));
            }
            vocab.intern_relation(&name);
        }
        Ok(vocab)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    pub fn relation(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> &str {
        &self.entity_names[id]
    }

    pub fn relation_name(&self, id: usize) -> &str {
        &self.relation_names[id]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&id) = self.entity_index.get(name) {
            return id;
        }
        let id = self.entity_names.len();
        self.entity_names.push(name.to_owned());
        self.entity_index.insert(name.to_owned(), id);
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = self.relation_names.len();
        self.relation_names.push(name.to_owned());
        self.relation_index.insert(name.to_owned(), id);
        id
    }

    /// Two-column TSV (`index<TAB>name`) for the entity vocabulary.
    pub fn entities_tsv(&self) -> String {
        names_tsv(&self.entity_names)
    }

    pub fn relations_tsv(&self) -> String {
        names_tsv(&self.relation_names)
    }
}

fn names_tsv(names: &[String]) -> String {
    let mut out = String::new();
    for (i, n) in names.iter().enumerate() {
        out.push_str(&format!("{i}\t{n}\n"));
    }
    out
}

/// How names not present in an existing vocabulary are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMode {
    /// Unknown names are an error (transductive evaluation).
    Fixed,
    /// Unknown names are appended to the vocabulary.
    Extend,
}

#[derive(Debug, Clone)]
pub struct LoadedTriples {
    pub triples: Vec<Triple>,
    pub vocab: Vocabulary,
    /// Number of duplicate lines dropped.
    pub duplicates: usize,
}

/// Loads a TSV triple file (`head<TAB>relation<TAB>tail` per line).
///
/// Empty lines and lines starting with `#` are skipped. Duplicate triples are
/// dropped (first occurrence kept) and counted. With `existing = None` a fresh
/// vocabulary is built.
pub fn load_triples(
    path: &Path,
    existing: Option<&Vocabulary>,
    mode: VocabMode,
) -> Result<LoadedTriples, KgError> {
    let file = File::open(path).map_err(|e| KgError::io(path, e))?;
    parse_triples(BufReader::new(file), &path.display().to_string(), existing, mode)
}

pub fn parse_triples<R: BufRead>(
    reader: R,
    source: &str,
    existing: Option<&Vocabulary>,
    mode: VocabMode,
) -> Result<LoadedTriples, KgError> {
    let fixed = existing.is_some() && mode == VocabMode::Fixed;
    let mut vocab = existing.cloned().unwrap_or_default();
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    let mut duplicates = 0;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| KgError::Io {
            path: PathBuf::from(source),
            source: e,
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgError::Parse {
                path: source.to_owned(),
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let (h, r, t) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        let unknown = |kind: &'static str, token: &str| KgError::UnknownToken {
            path: source.to_owned(),
            line: lineno,
            kind,
            token: token.to_owned(),
        };
        let triple = if fixed {
            Triple::new(
                vocab.entity(h).ok_or_else(|| unknown("entity", h))?,
                vocab.relation(r).ok_or_else(|| unknown("relation", r))?,
                vocab.entity(t).ok_or_else(|| unknown("entity", t))?,
            )
        } else {
            let head = vocab.intern_entity(h);
            let relation = vocab.intern_relation(r);
            let tail = vocab.intern_entity(t);
            Triple::new(head, relation, tail)
        };
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            duplicates += 1;
        }
    }
    Ok(LoadedTriples {
        triples,
        vocab,
        duplicates,
    })
}

/// Renders triples as TSV through the vocabulary, optionally preceded by a
/// `#`-prefixed header line.
pub fn triples_tsv(triples: &[Triple], vocab: &Vocabulary, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    for t in triples {
        out.push_str(vocab.entity_name(t.head));
        out.push('\t');
        out.push_str(vocab.relation_name(t.relation));
        out.push('\t');
        out.push_str(vocab.entity_name(t.tail));
        out.push('\n');
    }
    out
}

fn dedup_preserving_order(triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = HashSet::with_capacity(triples.len());
    triples.into_iter().filter(|t| seen.insert(*t)).collect()
}

/// Vocabulary, three splits, and the filter index over all of them.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub vocab: Vocabulary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub filter: FilterIndex,
    /// Relation count before reciprocal augmentation.
    pub base_relations: usize,
    /// Whether [`augment_reciprocal`] has been applied.
    pub reciprocal: bool,
}

impl KnowledgeGraph {
    /// Validates indices, drops in-split duplicates and builds the filter index.
    pub fn new(
        vocab: Vocabulary,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self, KgError> {
        let (ne, nr) = (vocab.num_entities(), vocab.num_relations());
        for t in train.iter().chain(&valid).chain(&test) {
            if t.head >= ne || t.tail >= ne || t.relation >= nr {
                return Err(KgError::InvalidIndex {
                    triple: *t,
                    entities: ne,
                    relations: nr,
                });
            }
        }
        let train = dedup_preserving_order(train);
        let valid = dedup_preserving_order(valid);
        let test = dedup_preserving_order(test);
        let filter = FilterIndex::build([&train[..], &valid[..], &test[..]]);
        Ok(Self {
            vocab,
            train,
            valid,
            test,
            filter,
            base_relations: nr,
            reciprocal: false,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    /// Train triples whose relation is an original (non-reverse) relation.
    pub fn base_train(&self) -> Vec<Triple> {
        self.train
            .iter()
            .copied()
            .filter(|t| t.relation < self.base_relations)
            .collect()
    }

    /// Returns a copy with the training split replaced; valid/test and the
    /// vocabulary are kept and the filter index is rebuilt.
    pub fn with_train(&self, train: Vec<Triple>) -> Result<Self, KgError> {
        let mut kg = Self::new(
            self.vocab.clone(),
            train,
            self.valid.clone(),
            self.test.clone(),
        )?;
        kg.base_relations = self.base_relations;
        if self.reciprocal {
            kg.reciprocal = true;
            kg.filter = reciprocal_filter(&kg.train, &kg.valid, &kg.test, kg.base_relations);
        }
        Ok(kg)
    }
}

/// Reads `train.txt`, `valid.txt` and `test.txt` from `dir`. Valid/test are
/// loaded against the training vocabulary; `mode` decides whether unseen
/// names are an error.
pub fn load_dataset(dir: &Path, mode: VocabMode) -> Result<KnowledgeGraph, KgError> {
    let train = load_triples(&dir.join("train.txt"), None, VocabMode::Extend)?;
    let valid = load_triples(&dir.join("valid.txt"), Some(&train.vocab), mode)?;
    let test = load_triples(&dir.join("test.txt"), Some(&valid.vocab), mode)?;
    for (name, l) in [("train", &train), ("valid", &valid), ("test", &test)] {
        if l.duplicates > 0 {
            log::info!("{name}: dropped {} duplicate triples", l.duplicates);
        }
    }
    KnowledgeGraph::new(test.vocab, train.triples, valid.triples, test.triples)
}

/// Reads the three splits against a fixed vocabulary (e.g. one restored from
/// a checkpoint); unknown names are an error.
pub fn load_dataset_with_vocab(dir: &Path, vocab: &Vocabulary) -> Result<KnowledgeGraph, KgError> {
    let load = |name: &str| load_triples(&dir.join(name), Some(vocab), VocabMode::Fixed).map(|l| l.triples);
    KnowledgeGraph::new(vocab.clone(), load("train.txt")?, load("valid.txt")?, load("test.txt")?)
}

fn reverse(t: &Triple, base: usize) -> Triple {
    Triple::new(t.tail, t.relation + base, t.head)
}

fn reciprocal_filter(train: &[Triple], valid: &[Triple], test: &[Triple], base: usize) -> FilterIndex {
    let base_only = |ts: &[Triple]| -> Vec<Triple> {
        ts.iter().copied().filter(|t| t.relation < base).collect()
    };
    let mut all: Vec<Triple> = train.to_vec();
    all.extend_from_slice(valid);
    all.extend_from_slice(test);
    let mut reversed: Vec<Triple> = base_only(valid).iter().map(|t| reverse(t, base)).collect();
    reversed.extend(base_only(test).iter().map(|t| reverse(t, base)));
    FilterIndex::build([&all[..], &reversed[..]])
}

/// Adds a reverse relation `r + |R|` for every relation and a reverse triple
/// `(t, r + |R|, h)` for every training triple. Valid/test are unchanged; the
/// filter index also covers the reverses of valid/test so that head queries
/// can be answered as tail queries over the reverse relation.
pub fn augment_reciprocal(kg: &KnowledgeGraph) -> KnowledgeGraph {
    if kg.reciprocal {
        return kg.clone();
    }
    let base = kg.num_relations();
    let mut vocab = kg.vocab.clone();
    for r in 0..base {
        let name = format!("{}{}", kg.vocab.relation_name(r), REVERSE_SUFFIX);
        vocab.intern_relation(&name);
    }
    let mut train = kg.train.clone();
    train.extend(kg.train.iter().map(|t| reverse(t, base)));
    let train = dedup_preserving_order(train);
    let filter = reciprocal_filter(&train, &kg.valid, &kg.test, base);
    KnowledgeGraph {
        vocab,
        train,
        valid: kg.valid.clone(),
        test: kg.test.clone(),
        filter,
        base_relations: base,
        reciprocal: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<LoadedTriples, KgError> {
        parse_triples(text.as_bytes(), "mem", None, VocabMode::Extend)
    }

    #[test]
    fn parses_simple_file() {
        let l = parse("a\tr\tb\nb\tr\tc\n").unwrap();
        assert_eq!(l.triples.len(), 2);
        assert_eq!(l.vocab.num_entities(), 3);
        assert_eq!(l.vocab.num_relations(), 1);
        assert_eq!(l.triples[1], Triple::new(1, 0, 2));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("a\tr\n") {
            Err(KgError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("a\tr\tb\n\nx\ty\tz\tw\n") {
            Err(KgError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_comments_are_skipped() {
        let l = parse("# header\na\tr\tb\r\na\tr\tb\n\n").unwrap();
        assert_eq!(l.triples.len(), 1);
        assert_eq!(l.duplicates, 1);
    }

    #[test]
    fn fixed_vocab_rejects_unknown_tokens() {
        let base = parse("a\tr\tb\n").unwrap().vocab;
        let err = parse_triples("a\tr\tzzz\n".as_bytes(), "valid", Some(&base), VocabMode::Fixed)
            .unwrap_err();
        match err {
            KgError::UnknownToken { token, kind, .. } => {
                assert_eq!(token, "zzz");
                assert_eq!(kind, "entity");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_triples("a\tq\tb\n".as_bytes(), "valid", Some(&base), VocabMode::Fixed)
            .unwrap_err();
        assert!(err.to_string().contains("'q'"));
        let grown =
            parse_triples("a\tq\tzzz\n".as_bytes(), "valid", Some(&base), VocabMode::Extend).unwrap();
        assert_eq!(grown.vocab.num_entities(), 3);
        assert_eq!(grown.vocab.num_relations(), 2);
    }

    #[test]
    fn reciprocal_augmentation_doubles_relations() {
        let vocab = Vocabulary::from_names(vec!["a".into(), "b".into()], vec!["r".into()]).unwrap();
        let kg = KnowledgeGraph::new(vocab.clone(), vec![Triple::new(0, 0, 1)], vec![], vec![]).unwrap();
        let aug = augment_reciprocal(&kg);
        assert_eq!(aug.num_relations(), 2);
        assert_eq!(aug.train, vec![Triple::new(0, 0, 1), Triple::new(1, 1, 0)]);
        assert_eq!(aug.vocab.relation_name(1), "r__reverse");

        let empty = KnowledgeGraph::new(vocab.clone(), vec![], vec![], vec![]).unwrap();
        let aug = augment_reciprocal(&empty);
        assert!(aug.train.is_empty());
        assert_eq!(aug.num_relations(), 2);

        let sym = KnowledgeGraph::new(
            vocab,
            vec![Triple::new(0, 0, 1), Triple::new(1, 0, 0)],
            vec![],
            vec![],
        )
        .unwrap();
        let aug = augment_reciprocal(&sym);
        assert_eq!(aug.train.len(), 4);
    }

    #[test]
    fn reciprocal_filter_answers_head_queries() {
        let vocab = Vocabulary::from_names(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["r".into()],
        )
        .unwrap();
        let kg = KnowledgeGraph::new(
            vocab,
            vec![Triple::new(0, 0, 1)],
            vec![],
            vec![Triple::new(2, 0, 1)],
        )
        .unwrap();
        let aug = augment_reciprocal(&kg);
        let heads: Vec<_> = aug.filter.tails(1, 1).unwrap().iter().copied().collect();
        assert_eq!(heads, vec![0, 2]);
    }

    proptest! {
        #[test]
        fn reciprocal_round_trip(raw in proptest::collection::vec((0usize..6, 0usize..3, 0usize..6), 0..40)) {
            let names = |n: usize, p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
            let vocab = Vocabulary::from_names(names(6, "e"), names(3, "r")).unwrap();
            let train: Vec<Triple> = raw.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect();
            let kg = KnowledgeGraph::new(vocab, train, vec![], vec![]).unwrap();
            let aug = augment_reciprocal(&kg);
            let mut stripped = aug.base_train();
            let mut original = kg.train.clone();
            stripped.sort();
            original.sort();
            prop_assert_eq!(stripped, original);
            prop_assert_eq!(aug.num_relations(), 6);
        }
    }
}
