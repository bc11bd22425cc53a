//! Immutable in-memory knowledge graph.
//!
//! Entities and relations are interned into dense ids. Triples are kept
//! sorted by `(subject, predicate, object)` and deduplicated; predicate-major
//! indices answer every pattern shape the executor produces. A label index
//! plus a character-trigram index back the entity linker.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
}

/// `None` positions are wildcards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TriplePattern {
    pub subject: Option<EntityId>,
    pub predicate: Option<RelationId>,
    pub object: Option<EntityId>,
}

impl TriplePattern {
    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.map_or(true, |s| s == t.subject)
            && self.predicate.map_or(true, |p| p == t.predicate)
            && self.object.map_or(true, |o| o == t.object)
    }
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub iri: String,
    pub label: String,
}

/// Minimum Jaccard similarity for a fuzzy label match.
pub const FUZZY_THRESHOLD: f64 = 0.5;
const FUZZY_MIN_CHARS: usize = 4;

/// An entity mention found in a question. Spans are token offsets
/// `[start, end)`; `entities` holds every entity sharing the matched label,
/// ascending by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub entities: Vec<EntityId>,
    pub score: f64,
    pub exact: bool,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    entity_ids: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    by_pred: Vec<Vec<u32>>,
    by_pred_subj: HashMap<(RelationId, EntityId), Vec<u32>>,
    by_pred_obj: HashMap<(RelationId, EntityId), Vec<u32>>,
    by_subj: Vec<Vec<u32>>,
    by_obj: Vec<Vec<u32>>,
    label_keys: Vec<String>,
    label_entities: Vec<Vec<EntityId>>,
    label_lookup: HashMap<String, usize>,
    trigram_index: HashMap<String, Vec<u32>>,
    label_trigrams: Vec<BTreeSet<String>>,
    max_label_tokens: usize,
    unlabeled: usize,
}

/// Accumulates entities and triples before freezing them into a graph.
#[derive(Debug, Default, Clone)]
pub struct KgBuilder {
    entities: Vec<Entity>,
    entity_ids: HashMap<String, EntityId>,
    triples: Vec<(EntityId, String, EntityId)>,
    unlabeled: usize,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an entity; a repeated IRI keeps its first non-empty label.
    pub fn entity(&mut self, iri: &str, label: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(iri) {
            let e = &mut self.entities[id.index()];
            if e.label.is_empty() && !label.is_empty() {
                e.label = label.to_string();
            }
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(Entity {
            iri: iri.to_string(),
            label: label.to_string(),
        });
        self.entity_ids.insert(iri.to_string(), id);
        id
    }

    fn entity_or_unlabeled(&mut self, iri: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(iri) {
            return id;
        }
        self.unlabeled += 1;
        self.entity(iri, "")
    }

    pub fn triple(&mut self, subject: &str, predicate: &str, object: &str) -> &mut Self {
        let s = self.entity_or_unlabeled(subject);
        let o = self.entity_or_unlabeled(object);
        self.triples.push((s, predicate.to_string(), o));
        self
    }

    pub fn build(self) -> KnowledgeGraph {
        let rel_set: BTreeSet<&str> = self.triples.iter().map(|(_, p, _)| p.as_str()).collect();
        let relations: Vec<String> = rel_set.into_iter().map(str::to_string).collect();
        let relation_ids: HashMap<String, RelationId> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), RelationId(i as u32)))
            .collect();
        let mut triples: Vec<Triple> = self
            .triples
            .iter()
            .map(|(s, p, o)| Triple {
                subject: *s,
                predicate: relation_ids[p],
                object: *o,
            })
            .collect();
        triples.sort_unstable();
        triples.dedup();
        KnowledgeGraph::index(self.entities, self.entity_ids, relations, relation_ids, triples, self.unlabeled)
    }
}

fn read_file(path: &Path) -> Result<String, KgError> {
    std::fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Padded character trigrams of a normalized string.
pub fn char_trigrams(normalized: &str) -> BTreeSet<String> {
    let padded: Vec<char> = format!(" {normalized} ").chars().collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl KnowledgeGraph {
    /// Loads `subject \t predicate \t object` triples and `iri \t label`
    /// entity labels.
    pub fn load(triples_path: &Path, labels_path: &Path) -> Result<Self, KgError> {
        let labels = read_file(labels_path)?;
        let triples = read_file(triples_path)?;
        Self::parse(
            &triples,
            &labels,
            &triples_path.display().to_string(),
            &labels_path.display().to_string(),
        )
    }

    pub fn parse(triples: &str, labels: &str, triples_origin: &str, labels_origin: &str) -> Result<Self, KgError> {
        let mut b = KgBuilder::new();
        for (line_no, line) in content_lines(labels) {
            let (iri, label) = line.split_once('\t').ok_or_else(|| KgError::Malformed {
                path: labels_origin.to_string(),
                line: line_no,
                reason: "expected `entity_iri<TAB>label`".into(),
            })?;
            b.entity(iri.trim(), label.trim());
        }
        for (line_no, line) in content_lines(triples) {
            let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
            if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
                return Err(KgError::Malformed {
                    path: triples_origin.to_string(),
                    line: line_no,
                    reason: format!("expected 3 tab-separated fields, found {}", parts.len()),
                });
            }
            b.triple(parts[0], parts[1], parts[2]);
        }
        Ok(b.build())
    }

    fn index(
        entities: Vec<Entity>,
        entity_ids: HashMap<String, EntityId>,
        relations: Vec<String>,
        relation_ids: HashMap<String, RelationId>,
        triples: Vec<Triple>,
        unlabeled: usize,
    ) -> Self {
        let mut by_pred = vec![Vec::new(); relations.len()];
        let mut by_subj = vec![Vec::new(); entities.len()];
        let mut by_obj = vec![Vec::new(); entities.len()];
        let mut by_pred_subj: HashMap<_, Vec<u32>> = HashMap::new();
        let mut by_pred_obj: HashMap<_, Vec<u32>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            let i = i as u32;
            by_pred[t.predicate.index()].push(i);
            by_subj[t.subject.index()].push(i);
            by_obj[t.object.index()].push(i);
            by_pred_subj.entry((t.predicate, t.subject)).or_default().push(i);
            by_pred_obj.entry((t.predicate, t.object)).or_default().push(i);
        }
        // posting lists are built in triple order, which is already (s,p,o) sorted

        let mut label_lookup: HashMap<String, usize> = HashMap::new();
        let mut label_keys = Vec::new();
        let mut label_entities: Vec<Vec<EntityId>> = Vec::new();
        for (i, e) in entities.iter().enumerate() {
            let key = normalize(&e.label);
            if key.is_empty() {
                continue;
            }
            let slot = *label_lookup.entry(key.clone()).or_insert_with(|| {
                label_keys.push(key.clone());
                label_entities.push(Vec::new());
                label_keys.len() - 1
            });
            label_entities[slot].push(EntityId(i as u32));
        }
        let mut trigram_index: HashMap<String, Vec<u32>> = HashMap::new();
        let mut label_trigrams = Vec::with_capacity(label_keys.len());
        let mut max_label_tokens = 0;
        for (i, key) in label_keys.iter().enumerate() {
            let grams = char_trigrams(key);
            for g in &grams {
                trigram_index.entry(g.clone()).or_default().push(i as u32);
            }
            label_trigrams.push(grams);
            max_label_tokens = max_label_tokens.max(tokenize(key).len());
        }

        Self {
            entities,
            entity_ids,
            relations,
            relation_ids,
            triples,
            by_pred,
            by_pred_subj,
            by_pred_obj,
            by_subj,
            by_obj,
            label_keys,
            label_entities,
            label_lookup,
            trigram_index,
            label_trigrams,
            max_label_tokens,
            unlabeled,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Entities referenced by triples but missing from the label file.
    pub fn unlabeled_count(&self) -> usize {
        self.unlabeled
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.index()]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity_id(&self, iri: &str) -> Option<EntityId> {
        self.entity_ids.get(iri).copied()
    }

    pub fn relation_iri(&self, id: RelationId) -> &str {
        &self.relations[id.index()]
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn relation_id(&self, iri: &str) -> Option<RelationId> {
        self.relation_ids.get(iri).copied()
    }

    /// Entities whose normalized label equals `normalize(label)`.
    pub fn entities_with_label(&self, label: &str) -> &[EntityId] {
        self.label_lookup
            .get(&normalize(label))
            .map(|&i| self.label_entities[i].as_slice())
            .unwrap_or(&[])
    }

    fn posting(&self, pat: &TriplePattern) -> Option<&[u32]> {
        let empty: &[u32] = &[];
        Some(match (pat.subject, pat.predicate, pat.object) {
            (_, Some(p), Some(o)) => self.by_pred_obj.get(&(p, o)).map_or(empty, Vec::as_slice),
            (Some(s), Some(p), None) => self.by_pred_subj.get(&(p, s)).map_or(empty, Vec::as_slice),
            (None, Some(p), None) => self.by_pred.get(p.index()).map_or(empty, Vec::as_slice),
            (Some(s), None, _) => self.by_subj.get(s.index()).map_or(empty, Vec::as_slice),
            (None, None, Some(o)) => self.by_obj.get(o.index()).map_or(empty, Vec::as_slice),
            (None, None, None) => return None,
        })
    }

    /// All triples matching the bound positions, sorted by (s, p, o).
    pub fn match_pattern(&self, pat: &TriplePattern) -> Vec<Triple> {
        match self.posting(pat) {
            Some(list) => list
                .iter()
                .map(|&i| self.triples[i as usize])
                .filter(|t| pat.matches(t))
                .collect(),
            None => self.triples.clone(),
        }
    }

    /// Upper bound on `match_pattern(pat).len()` read from index sizes.
    pub fn match_estimate(&self, pat: &TriplePattern) -> usize {
        self.posting(pat).map_or(self.triples.len(), <[u32]>::len)
    }

    /// Index sizes and contents, for consistency checks.
    pub fn index_postings(&self) -> Vec<(&'static str, Vec<u32>)> {
        let mut out = Vec::new();
        let flat = |lists: &mut dyn Iterator<Item = &Vec<u32>>| lists.flatten().copied().collect::<Vec<u32>>();
        out.push(("pred", flat(&mut self.by_pred.iter())));
        out.push(("subj", flat(&mut self.by_subj.iter())));
        out.push(("obj", flat(&mut self.by_obj.iter())));
        out.push(("pred_subj", flat(&mut self.by_pred_subj.values())));
        out.push(("pred_obj", flat(&mut self.by_pred_obj.values())));
        out
    }

    /// Serializes the triple set back to TSV (sorted order).
    pub fn to_triples_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entity(t.subject).iri,
                self.relation_iri(t.predicate),
                self.entity(t.object).iri
            );
        }
        out
    }

    /// Label-matching entity linker over the word tokens of `question`.
    ///
    /// Exact normalized-label matches score 1.0 and are taken longest-first;
    /// remaining spans fall back to trigram Jaccard (>= 0.5), best score first.
    /// Returned mentions do not overlap and are sorted by start offset.
    pub fn link_entities(&self, question: &str) -> Vec<Mention> {
        let tokens = tokenize(question);
        let wordy = |t: &String| t.chars().any(char::is_alphanumeric);
        let max_len = self.max_label_tokens + 1;
        let mut candidates: Vec<Mention> = Vec::new();
        for start in 0..tokens.len() {
            if !wordy(&tokens[start]) {
                continue;
            }
            for end in start + 1..=(start + max_len).min(tokens.len()) {
                if !wordy(&tokens[end - 1]) {
                    continue;
                }
                let key = normalize(&tokens[start..end].join(" "));
                if let Some(&slot) = self.label_lookup.get(&key) {
                    candidates.push(Mention {
                        start,
                        end,
                        entities: self.label_entities[slot].clone(),
                        score: 1.0,
                        exact: true,
                    });
                } else if key.chars().count() >= FUZZY_MIN_CHARS {
                    if let Some((slot, score)) = self.best_fuzzy(&key) {
                        candidates.push(Mention {
                            start,
                            end,
                            entities: self.label_entities[slot].clone(),
                            score,
                            exact: false,
                        });
                    }
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.exact
                .cmp(&a.exact)
                .then_with(|| {
                    if a.exact {
                        (b.end - b.start).cmp(&(a.end - a.start))
                    } else {
                        b.score
                            .total_cmp(&a.score)
                            .then_with(|| (b.end - b.start).cmp(&(a.end - a.start)))
                    }
                })
                .then_with(|| a.start.cmp(&b.start))
        });
        let mut taken = vec![false; tokens.len()];
        let mut chosen = Vec::new();
        for m in candidates {
            if taken[m.start..m.end].iter().any(|&t| t) {
                continue;
            }
            taken[m.start..m.end].iter_mut().for_each(|t| *t = true);
            chosen.push(m);
        }
        chosen.sort_by_key(|m| m.start);
        chosen
    }

    fn best_fuzzy(&self, key: &str) -> Option<(usize, f64)> {
        let grams = char_trigrams(key);
        let mut seen = BTreeSet::new();
        for g in &grams {
            if let Some(list) = self.trigram_index.get(g) {
                seen.extend(list.iter().copied());
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for slot in seen {
            let slot = slot as usize;
            let score = jaccard(&grams, &self.label_trigrams[slot]);
            if score < FUZZY_THRESHOLD {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, bscore)) => {
                    score > bscore || (score == bscore && self.label_keys[slot] < self.label_keys[bs])
                }
            };
            if better {
                best = Some((slot, score));
            }
        }
        best
    }
}
