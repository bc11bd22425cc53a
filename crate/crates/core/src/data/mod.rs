//! Dataset records, JSON-lines I/O, splits, preprocessing and the synthetic
//! movie generators.

mod generate;
mod lexicon;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KgError, KnowledgeGraph};
use crate::model::TrainingExample;
use crate::query::{canonicalize_gold, Form, QueryError, SparqlQuery};
use crate::text::{load_relation_labels, tokenize, RelationCatalog, TextError, TokenVocab};
use crate::util::write_atomic;

pub use generate::{
    gen_kg, gen_questions, question_vocab_jaccard, write_dataset, DatasetManifest, GeneratedKg, KgManifest,
    KgSize, QuestionConfig,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("relation {0} would vanish from training")]
    CoverageViolation(String),
    #[error("unknown profile {0:?} (expected movie-A or movie-B)")]
    UnknownProfile(String),
    #[error("inconsistent record {question:?}: {reason}")]
    Inconsistent { question: String, reason: String },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Text(#[from] TextError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    MovieA,
    MovieB,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::MovieA => "movie-A",
            Profile::MovieB => "movie-B",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s.to_ascii_lowercase().as_str() {
            "movie-a" | "a" => Ok(Profile::MovieA),
            "movie-b" | "b" => Ok(Profile::MovieB),
            _ => Err(DataError::UnknownProfile(s.to_string())),
        }
    }
}

/// The nine semantic movie relations shared by both profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    DirectedBy,
    StarredActors,
    WrittenBy,
    InLanguage,
    HasGenre,
    ReleaseYear,
    HasTags,
    HasImdbRating,
    HasImdbVotes,
}

impl Rel {
    pub const ALL: [Rel; 9] = [
        Rel::DirectedBy,
        Rel::StarredActors,
        Rel::WrittenBy,
        Rel::InLanguage,
        Rel::HasGenre,
        Rel::ReleaseYear,
        Rel::HasTags,
        Rel::HasImdbRating,
        Rel::HasImdbVotes,
    ];

    /// Name used in path signatures.
    pub fn name(self) -> &'static str {
        match self {
            Rel::DirectedBy => "directed_by",
            Rel::StarredActors => "starred_actors",
            Rel::WrittenBy => "written_by",
            Rel::InLanguage => "in_language",
            Rel::HasGenre => "has_genre",
            Rel::ReleaseYear => "release_year",
            Rel::HasTags => "has_tags",
            Rel::HasImdbRating => "has_imdb_rating",
            Rel::HasImdbVotes => "has_imdb_votes",
        }
    }

    pub fn is_person(self) -> bool {
        matches!(self, Rel::DirectedBy | Rel::StarredActors | Rel::WrittenBy)
    }

    pub fn iri(self, profile: Profile) -> String {
        match profile {
            Profile::MovieA => {
                let local = match self {
                    Rel::DirectedBy => "directedBy",
                    Rel::StarredActors => "starredActors",
                    Rel::WrittenBy => "writtenBy",
                    Rel::InLanguage => "inLanguage",
                    Rel::HasGenre => "hasGenre",
                    Rel::ReleaseYear => "releaseYear",
                    Rel::HasTags => "hasTags",
                    Rel::HasImdbRating => "hasImdbRating",
                    Rel::HasImdbVotes => "hasImdbVotes",
                };
                format!("http://movies-a.example.org/ontology/{local}")
            }
            Profile::MovieB => {
                let code = match self {
                    Rel::DirectedBy => "P57",
                    Rel::StarredActors => "P161",
                    Rel::WrittenBy => "P58",
                    Rel::InLanguage => "P364",
                    Rel::HasGenre => "P136",
                    Rel::ReleaseYear => "P577",
                    Rel::HasTags => "P921",
                    Rel::HasImdbRating => "P9001",
                    Rel::HasImdbVotes => "P9002",
                };
                format!("http://movies-b.example.org/prop/{code}")
            }
        }
    }

    /// Explicit relation label; movie-A relies on IRI-derived surfaces.
    pub fn label(self, profile: Profile) -> Option<&'static str> {
        match profile {
            Profile::MovieA => None,
            Profile::MovieB => Some(match self {
                Rel::DirectedBy => "director",
                Rel::StarredActors => "cast member",
                Rel::WrittenBy => "screenwriter",
                Rel::InLanguage => "original language of film",
                Rel::HasGenre => "genre",
                Rel::ReleaseYear => "publication year",
                Rel::HasTags => "main subject",
                Rel::HasImdbRating => "imdb rating",
                Rel::HasImdbVotes => "number of imdb votes",
            }),
        }
    }
}

/// One question with its gold query. `answers` holds entity IRIs, or a
/// single `true`/`false`/count string for ASK and COUNT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub question: String,
    pub sparql: String,
    pub entity_order: Vec<String>,
    pub answers: Vec<String>,
    pub path_signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Category {
    Ask,
    Count,
    OneHop,
    TwoHop,
    ThreeHop,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::OneHop,
        Category::TwoHop,
        Category::ThreeHop,
        Category::Ask,
        Category::Count,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Ask => "ask",
            Category::Count => "count",
            Category::OneHop => "1-hop",
            Category::TwoHop => "2-hop",
            Category::ThreeHop => "3-hop",
        }
    }
}

impl DatasetRecord {
    pub fn category(&self) -> Category {
        if let Ok(q) = SparqlQuery::parse(&self.sparql) {
            match q.form {
                Form::Ask => return Category::Ask,
                Form::Count => return Category::Count,
                Form::Select => {}
            }
        }
        match self.path_signature.split('>').count() {
            0 | 1 => Category::OneHop,
            2 => Category::TwoHop,
            _ => Category::ThreeHop,
        }
    }

    fn signature_parts(&self) -> Vec<&str> {
        self.path_signature.split('>').filter(|s| !s.is_empty()).collect()
    }
}

/// Whether `pattern` (a `>`-joined relation chain) occurs contiguously in
/// `signature`.
pub fn signature_contains(signature: &str, pattern: &str) -> bool {
    let sig: Vec<&str> = signature.split('>').collect();
    let pat: Vec<&str> = pattern.split('>').collect();
    !pat.is_empty() && sig.windows(pat.len()).any(|w| w == pat.as_slice())
}

pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<DatasetRecord>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| DataError::Malformed {
            path: origin.to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<(), DataError> {
    write_atomic(path, to_jsonl(records).as_bytes()).map_err(io_err(path))
}

/// Loads `triples.tsv` and `labels.tsv` from `dir` and builds the relation
/// catalog from `relation_labels`, else `dir/relations.tsv` when present,
/// else from the relation IRIs alone.
pub fn load_kg_dir(
    dir: &Path,
    entity_labels: Option<&Path>,
    relation_labels: Option<&Path>,
) -> Result<(KnowledgeGraph, RelationCatalog), DataError> {
    let labels = entity_labels.map(Path::to_path_buf).unwrap_or_else(|| dir.join("labels.tsv"));
    let kg = KnowledgeGraph::load(&dir.join("triples.tsv"), &labels)?;
    let default_rel = dir.join("relations.tsv");
    let rel_path = relation_labels.or_else(|| default_rel.exists().then_some(default_rel.as_path()));
    let rel_labels = rel_path.map(load_relation_labels).transpose()?;
    let catalog = RelationCatalog::build(kg.relations(), rel_labels.as_ref())?;
    Ok((kg, catalog))
}

/// Records whose `split` equals `name`.
pub fn filter_split(records: &[DatasetRecord], name: &str) -> Vec<DatasetRecord> {
    records
        .iter()
        .filter(|r| r.split.as_deref() == Some(name))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnseenSplit {
    pub train: Vec<DatasetRecord>,
    pub seen_dev: Vec<DatasetRecord>,
    pub unseen_dev: Vec<DatasetRecord>,
}

/// Moves every record containing an excluded relation chain into
/// `unseen_dev`, whatever its split. Remaining `train` records (or records
/// without a split) stay in `train`; everything else becomes `seen_dev`.
pub fn make_unseen_split(records: &[DatasetRecord], excluded: &[String]) -> Result<UnseenSplit, DataError> {
    let mut out = UnseenSplit::default();
    for r in records {
        if excluded.iter().any(|p| signature_contains(&r.path_signature, p)) {
            out.unseen_dev.push(r.clone());
        } else if matches!(r.split.as_deref(), None | Some("train")) {
            out.train.push(r.clone());
        } else {
            out.seen_dev.push(r.clone());
        }
    }
    let covered: BTreeSet<&str> = out.train.iter().flat_map(|r| r.signature_parts()).collect();
    for pattern in excluded {
        for rel in pattern.split('>') {
            if !covered.contains(rel) {
                return Err(DataError::CoverageViolation(rel.to_string()));
            }
        }
    }
    Ok(out)
}

/// Why records were left out of a training set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectionReport {
    pub accepted: usize,
    pub question_too_long: usize,
    pub skeleton_too_long: usize,
    pub entity_order: usize,
    pub unknown_relation: usize,
    pub invalid: usize,
}

impl RejectionReport {
    pub fn rejected(&self) -> usize {
        self.question_too_long + self.skeleton_too_long + self.entity_order + self.unknown_relation + self.invalid
    }
}

/// Converts records into model inputs. Framed question length and skeleton
/// length (with BOS/EOS) are checked against the limits.
pub fn preprocess(
    records: &[DatasetRecord],
    catalog: &RelationCatalog,
    vocab: &TokenVocab,
    max_question_len: usize,
    max_skeleton_len: usize,
) -> (Vec<TrainingExample>, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut out = Vec::new();
    for r in records {
        if tokenize(&r.question).len() > max_question_len {
            report.question_too_long += 1;
            continue;
        }
        let gold = match canonicalize_gold(&r.sparql, &r.entity_order, catalog) {
            Ok(g) => g,
            Err(QueryError::UnknownEntityOrder(_)) => {
                report.entity_order += 1;
                continue;
            }
            Err(QueryError::UnknownRelation(_)) => {
                report.unknown_relation += 1;
                continue;
            }
            Err(_) => {
                report.invalid += 1;
                continue;
            }
        };
        // Every listed entity must be used, or ENT numbering drifts.
        if gold.skeleton.ent_count() != r.entity_order.len() {
            report.entity_order += 1;
            continue;
        }
        if gold.skeleton.serialize().len() > max_skeleton_len {
            report.skeleton_too_long += 1;
            continue;
        }
        let surfaces = gold
            .surfaces
            .iter()
            .map(|s| catalog.surface_index(s).expect("surface from catalog"))
            .collect();
        out.push(TrainingExample::new(
            vocab,
            &r.question,
            &gold.skeleton,
            surfaces,
            r.entity_order.clone(),
        ));
        report.accepted += 1;
    }
    (out, report)
}

/// Token vocabulary over the questions and relation surfaces.
pub fn build_vocab(records: &[DatasetRecord], catalogs: &[&RelationCatalog]) -> TokenVocab {
    let mut tokens: Vec<String> = Vec::new();
    for r in records {
        tokens.extend(tokenize(&r.question));
    }
    for c in catalogs {
        for s in c.surfaces() {
            tokens.extend(tokenize(s));
        }
    }
    TokenVocab::build(tokens)
}
