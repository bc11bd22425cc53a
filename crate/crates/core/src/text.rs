//! Word-level tokenization, the question token vocabulary, and the relation
//! catalog that maps KG relations to textual surface forms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::kg::RelationId;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("relation {0} has an empty surface form")]
    EmptySurface(String),
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_lowercase().collect());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    /// Reserved tokens take indices 0..4; the rest are sorted.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| !RESERVED.contains(&t.as_str()))
            .collect();
        let all = RESERVED.iter().map(|s| s.to_string()).chain(set).collect();
        Self::from_tokens(all)
    }

    /// Rebuilds a vocabulary from its index-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// `[CLS] tokens [SEP]`
    pub fn encode_framed(&self, tokens: &[String]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(CLS);
        ids.extend(tokens.iter().map(|t| self.id(t)));
        ids.push(SEP);
        ids
    }
}

/// Derives a surface form from a relation IRI: the last segment after `/`,
/// `#`, `:` or `.`, with `_` and camelCase boundaries turned into spaces.
pub fn surface_from_iri(iri: &str) -> String {
    let segment = iri
        .trim_end_matches(|c| c == '/' || c == '#' || c == '>')
        .rsplit(|c| c == '/' || c == '#' || c == ':' || c == '.')
        .next()
        .unwrap_or("");
    let mut spaced = String::new();
    let mut prev: Option<char> = None;
    for ch in segment.chars() {
        if ch.is_uppercase() && prev.is_some_and(|p| p.is_lowercase()) {
            spaced.push(' ');
        }
        spaced.push(ch);
        prev = Some(ch);
    }
    normalize(&spaced)
}

/// Mapping between KG relations and (possibly shared) surface forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationCatalog {
    surfaces: Vec<String>,
    surface_to_relations: Vec<Vec<RelationId>>,
    relation_to_surface: Vec<usize>,
    relation_iris: Vec<String>,
}

impl RelationCatalog {
    /// Builds the catalog for a relation table indexed by `RelationId`.
    ///
    /// Surfaces come from `labels` when present for an IRI, otherwise from
    /// the IRI itself. Equal surfaces are merged.
    pub fn build(
        relation_iris: &[String],
        labels: Option<&HashMap<String, String>>,
    ) -> Result<Self, TextError> {
        let mut per_relation = Vec::with_capacity(relation_iris.len());
        for iri in relation_iris {
            let surface = match labels.and_then(|l| l.get(iri)) {
                Some(label) => normalize(label),
                None => surface_from_iri(iri),
            };
            if surface.is_empty() {
                return Err(TextError::EmptySurface(iri.clone()));
            }
            per_relation.push(surface);
        }
        let mut grouped: BTreeMap<&str, Vec<RelationId>> = BTreeMap::new();
        for (i, s) in per_relation.iter().enumerate() {
            grouped.entry(s).or_default().push(RelationId(i as u32));
        }
        let surfaces: Vec<String> = grouped.keys().map(|s| s.to_string()).collect();
        let surface_to_relations: Vec<Vec<RelationId>> = grouped.into_values().collect();
        let mut relation_to_surface = vec![0; relation_iris.len()];
        for (si, rels) in surface_to_relations.iter().enumerate() {
            for r in rels {
                relation_to_surface[r.index()] = si;
            }
        }
        Ok(Self {
            surfaces,
            surface_to_relations,
            relation_to_surface,
            relation_iris: relation_iris.to_vec(),
        })
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, idx: usize) -> &str {
        &self.surfaces[idx]
    }

    pub fn surface_index(&self, surface: &str) -> Option<usize> {
        self.surfaces.binary_search_by(|s| s.as_str().cmp(surface)).ok()
    }

    pub fn relations_for(&self, surface_idx: usize) -> &[RelationId] {
        &self.surface_to_relations[surface_idx]
    }

    pub fn surface_of(&self, rel: RelationId) -> usize {
        self.relation_to_surface[rel.index()]
    }

    pub fn relation_iri(&self, rel: RelationId) -> &str {
        &self.relation_iris[rel.index()]
    }

    pub fn relation_count(&self) -> usize {
        self.relation_iris.len()
    }

    pub fn relation_by_iri(&self, iri: &str) -> Option<RelationId> {
        self.relation_iris
            .iter()
            .position(|r| r == iri)
            .map(|i| RelationId(i as u32))
    }

    /// `surface \t relation_iri`, one line per pair.
    pub fn export_tsv(&self) -> String {
        let mut out = String::new();
        for (s, rels) in self.surfaces.iter().zip(&self.surface_to_relations) {
            for r in rels {
                let _ = writeln!(out, "{s}\t{}", self.relation_iri(*r));
            }
        }
        out
    }
}

/// Reads a `relation_iri \t surface form` file. `#` lines are comments.
pub fn load_relation_labels(path: &Path) -> Result<HashMap<String, String>, TextError> {
    let text = std::fs::read_to_string(path)?;
    parse_relation_labels(&text, &path.display().to_string())
}

pub fn parse_relation_labels(text: &str, origin: &str) -> Result<HashMap<String, String>, TextError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (iri, label) = line.split_once('\t').ok_or_else(|| TextError::Malformed {
            path: origin.to_string(),
            line: i + 1,
            reason: "expected `relation_iri<TAB>surface`".into(),
        })?;
        out.insert(iri.trim().to_string(), label.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Who directed Titanic?"), vec!["who", "directed", "titanic", "?"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  rated 7.5, ok"), vec!["rated", "7", ".", "5", ",", "ok"]);
    }

    #[test]
    fn normalize_collapses() {
        assert_eq!(normalize("  John   Krasinski! "), "john krasinski");
        assert_eq!(normalize("7.5"), "7 5");
        assert_eq!(normalize("?!"), "");
    }

    #[test]
    fn vocab_reserved_and_unknown() {
        let v = TokenVocab::build(["who", "directed", "who"]);
        assert_eq!(v.token(PAD), "[PAD]");
        assert_eq!(v.token(SEP), "[SEP]");
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("nope"), UNK);
        assert_eq!(v.encode_framed(&tokenize("who")), vec![CLS, v.id("who"), SEP]);
    }

    #[test]
    fn surface_derivation_rules() {
        assert_eq!(
            surface_from_iri("http://rdf.freebase.com/ns/people.ethnicity.languages_spoken"),
            "languages spoken"
        );
        assert_eq!(surface_from_iri("http://example.org/ontology/hasImdbRating"), "has imdb rating");
        assert_eq!(surface_from_iri("dbo:language"), "language");
        assert_eq!(surface_from_iri("http://www.wikidata.org/prop/direct/P364"), "p364");
    }

    #[test]
    fn many_to_one_labels_merge() {
        let iris = vec![
            "http://dbpedia.org/ontology/language".to_string(),
            "http://dbpedia.org/property/language".to_string(),
            "http://dbpedia.org/property/languages".to_string(),
        ];
        let labels: HashMap<String, String> = [
            (iris[0].clone(), "language".to_string()),
            (iris[1].clone(), "language".to_string()),
        ]
        .into_iter()
        .collect();
        let cat = RelationCatalog::build(&iris, Some(&labels)).unwrap();
        assert_eq!(cat.surfaces(), ["language", "languages"]);
        assert_eq!(cat.relations_for(0), [RelationId(0), RelationId(1)]);
        assert_eq!(cat.surface_of(RelationId(2)), 1);
    }

    #[test]
    fn wikidata_label_used_verbatim() {
        let iris = vec!["http://www.wikidata.org/prop/direct/P364".to_string()];
        let labels: HashMap<String, String> =
            [(iris[0].clone(), "original language of film or TV show".to_string())]
                .into_iter()
                .collect();
        let cat = RelationCatalog::build(&iris, Some(&labels)).unwrap();
        assert_eq!(cat.surfaces(), ["original language of film or tv show"]);
    }

    #[test]
    fn empty_surface_is_an_error() {
        let iris = vec!["http://example.org/x/__".to_string()];
        assert!(matches!(
            RelationCatalog::build(&iris, None),
            Err(TextError::EmptySurface(_))
        ));
    }

    #[test]
    fn export_lists_every_pair() {
        let iris = vec!["a:directedBy".to_string(), "b:directed_by".to_string()];
        let cat = RelationCatalog::build(&iris, None).unwrap();
        assert_eq!(cat.export_tsv(), "directed by\ta:directedBy\ndirected by\tb:directed_by\n");
    }
}
