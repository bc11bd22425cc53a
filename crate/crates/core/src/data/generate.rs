//! Synthetic movie KGs and templated questions over them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{self, lexicon};
use super::{io_err, to_jsonl, DataError, DatasetRecord, Profile, Rel};
use crate::executor::{execute, QueryResult};
use crate::kg::{EntityId, KgBuilder, KnowledgeGraph, Triple, TriplePattern};
use crate::query::ground_sparql;
use crate::text::{surface_from_iri, tokenize, RelationCatalog};
use crate::util::{sha256_hex, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgSize {
    pub movies: usize,
    pub persons: usize,
}

impl Default for KgSize {
    fn default() -> Self {
        Self {
            movies: 180,
            persons: 220,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgManifest {
    pub profile: String,
    pub seed: u64,
    pub size: KgSize,
    pub entity_count: usize,
    pub relation_count: usize,
    pub triple_count: usize,
    /// File name to sha256 of its contents.
    pub files: BTreeMap<String, String>,
}

/// A generated graph in IRI form, ready to be written or indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedKg {
    pub profile: Profile,
    pub seed: u64,
    pub size: KgSize,
    /// Distinct `(subject, predicate, object)` IRIs in emission order.
    pub triples: Vec<(String, String, String)>,
    /// `(entity IRI, label)` for every entity used by a triple.
    pub labels: Vec<(String, String)>,
}

struct Movie {
    title: String,
    directors: Vec<usize>,
    actors: Vec<usize>,
    writers: Vec<usize>,
    language: usize,
    genres: Vec<usize>,
    year: usize,
    tags: Vec<usize>,
    rating: Option<usize>,
    votes: Option<usize>,
}

fn pick_distinct(rng: &mut ChaCha8Rng, pool: std::ops::Range<usize>, n: usize) -> Vec<usize> {
    let all: Vec<usize> = pool.collect();
    let mut v: Vec<usize> = all.choose_multiple(rng, n).copied().collect();
    v.sort_unstable();
    v
}

fn unique_names<F>(rng: &mut ChaCha8Rng, n: usize, mut make: F) -> Vec<String>
where
    F: FnMut(&mut ChaCha8Rng) -> (String, String),
{
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (key, name) = make(rng);
        if seen.insert(key) {
            out.push(name);
        }
    }
    out
}

const FIRST_YEAR: usize = 1970;
const YEARS: usize = 50;

/// Generates a movie graph for `profile`. Both profiles share the same
/// nine relations; they differ in IRIs, relation labels and (via the seed)
/// in content.
pub fn gen_kg(profile: Profile, seed: u64, size: KgSize) -> GeneratedKg {
    let salt = match profile {
        Profile::MovieA => 0x6b67_5f61,
        Profile::MovieB => 0x6b67_5f62,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (salt << 16));
    let max_titles = lexicon::TITLE_ADJECTIVES.len() * lexicon::TITLE_NOUNS.len();
    let max_people = lexicon::FIRST_NAMES.len() * lexicon::LAST_NAMES.len();
    let movies_n = size.movies.clamp(1, max_titles);
    let persons_n = size.persons.clamp(4, max_people);

    let persons = unique_names(&mut rng, persons_n, |r| {
        let f = lexicon::FIRST_NAMES.choose(r).unwrap();
        let l = lexicon::LAST_NAMES.choose(r).unwrap();
        let name = format!("{f} {l}");
        (name.clone(), name)
    });
    let titles = unique_names(&mut rng, movies_n, |r| {
        let a = lexicon::TITLE_ADJECTIVES.choose(r).unwrap();
        let n = lexicon::TITLE_NOUNS.choose(r).unwrap();
        let key = format!("{a} {n}");
        let title = if r.gen_bool(0.3) { format!("The {key}") } else { key.clone() };
        (key, title)
    });

    // Directors and writers come from overlapping slices of the people pool,
    // actors from the rest plus a few directors.
    let directors_end = (persons_n / 4).max(1);
    let writers = (persons_n / 6)..(persons_n * 2 / 5).max(persons_n / 6 + 1);
    let actors = (persons_n / 5)..persons_n;

    let mut movies = Vec::with_capacity(movies_n);
    for title in titles {
        let n_dir = if rng.gen_bool(0.1) { 2 } else { 1 };
        let n_act = rng.gen_range(2..=3);
        let n_wri = if rng.gen_bool(0.35) { 2 } else { 1 };
        let n_gen = if rng.gen_bool(0.2) { 2 } else { 1 };
        let n_tag = rng.gen_range(1..=2);
        movies.push(Movie {
            title,
            directors: pick_distinct(&mut rng, 0..directors_end, n_dir.min(directors_end)),
            actors: pick_distinct(&mut rng, actors.clone(), n_act.min(actors.len())),
            writers: pick_distinct(&mut rng, writers.clone(), n_wri.min(writers.len())),
            language: rng.gen_range(0..lexicon::LANGUAGES.len()),
            genres: pick_distinct(&mut rng, 0..lexicon::GENRES.len(), n_gen),
            year: rng.gen_range(0..YEARS),
            tags: pick_distinct(&mut rng, 0..lexicon::TAGS.len(), n_tag),
            rating: rng.gen_bool(0.8).then(|| rng.gen_range(0..lexicon::RATINGS.len())),
            votes: rng.gen_bool(0.7).then(|| rng.gen_range(0..lexicon::VOTES.len())),
        });
    }

    let mut emitter = Emitter::new(profile);
    for m in &movies {
        let subj = emitter.entity("movie", &m.title);
        let edge = |e: &mut Emitter, rel: Rel, kind: &str, label: &str| {
            let obj = e.entity(kind, label);
            e.triples.push((subj.clone(), rel.iri(profile), obj));
        };
        for &p in &m.directors {
            edge(&mut emitter, Rel::DirectedBy, "person", &persons[p]);
        }
        for &p in &m.actors {
            edge(&mut emitter, Rel::StarredActors, "person", &persons[p]);
        }
        for &p in &m.writers {
            edge(&mut emitter, Rel::WrittenBy, "person", &persons[p]);
        }
        edge(&mut emitter, Rel::InLanguage, "language", lexicon::LANGUAGES[m.language]);
        for &g in &m.genres {
            edge(&mut emitter, Rel::HasGenre, "genre", lexicon::GENRES[g]);
        }
        edge(&mut emitter, Rel::ReleaseYear, "year", &(FIRST_YEAR + m.year).to_string());
        for &t in &m.tags {
            edge(&mut emitter, Rel::HasTags, "tag", lexicon::TAGS[t]);
        }
        if let Some(r) = m.rating {
            edge(&mut emitter, Rel::HasImdbRating, "rating", lexicon::RATINGS[r]);
        }
        if let Some(v) = m.votes {
            edge(&mut emitter, Rel::HasImdbVotes, "votes", lexicon::VOTES[v]);
        }
    }
    GeneratedKg {
        profile,
        seed,
        size,
        triples: emitter.triples,
        labels: emitter.labels,
    }
}

struct Emitter {
    profile: Profile,
    ids: HashMap<String, String>,
    labels: Vec<(String, String)>,
    triples: Vec<(String, String, String)>,
}

impl Emitter {
    fn new(profile: Profile) -> Self {
        Self {
            profile,
            ids: HashMap::new(),
            labels: Vec::new(),
            triples: Vec::new(),
        }
    }

    /// IRI for a labelled entity. Labels are unique across kinds by
    /// construction, so the label alone keys the entity.
    fn entity(&mut self, kind: &str, label: &str) -> String {
        if let Some(iri) = self.ids.get(label) {
            return iri.clone();
        }
        let iri = match self.profile {
            Profile::MovieA => {
                let local = label.replace(' ', "_");
                match kind {
                    "year" => format!("http://movies-a.example.org/resource/year_{local}"),
                    _ => format!("http://movies-a.example.org/resource/{local}"),
                }
            }
            Profile::MovieB => format!("http://movies-b.example.org/entity/Q{}", 1000 + self.labels.len()),
        };
        self.ids.insert(label.to_string(), iri.clone());
        self.labels.push((iri.clone(), label.to_string()));
        iri
    }
}

impl GeneratedKg {
    pub fn triples_tsv(&self) -> String {
        let mut out = String::new();
        for (s, p, o) in &self.triples {
            out.push_str(&format!("{s}\t{p}\t{o}\n"));
        }
        out
    }

    pub fn labels_tsv(&self) -> String {
        let mut out = String::new();
        for (iri, label) in &self.labels {
            out.push_str(&format!("{iri}\t{label}\n"));
        }
        out
    }

    /// Relation label file. Movie-A labels equal the IRI-derived surfaces.
    pub fn relations_tsv(&self) -> String {
        let mut out = String::new();
        for rel in Rel::ALL {
            let iri = rel.iri(self.profile);
            let label = rel
                .label(self.profile)
                .map(str::to_string)
                .unwrap_or_else(|| surface_from_iri(&iri));
            out.push_str(&format!("{iri}\t{label}\n"));
        }
        out
    }

    pub fn relation_labels(&self) -> HashMap<String, String> {
        Rel::ALL
            .iter()
            .filter_map(|r| r.label(self.profile).map(|l| (r.iri(self.profile), l.to_string())))
            .collect()
    }

    pub fn to_kg(&self) -> KnowledgeGraph {
        let mut b = KgBuilder::new();
        for (iri, label) in &self.labels {
            b.entity(iri, label);
        }
        for (s, p, o) in &self.triples {
            b.triple(s, p, o);
        }
        b.build()
    }

    pub fn catalog(&self, kg: &KnowledgeGraph) -> RelationCatalog {
        RelationCatalog::build(kg.relations(), Some(&self.relation_labels())).expect("relation surfaces are non-empty")
    }

    pub fn manifest(&self) -> KgManifest {
        let mut files = BTreeMap::new();
        files.insert("triples.tsv".to_string(), sha256_hex(self.triples_tsv().as_bytes()));
        files.insert("labels.tsv".to_string(), sha256_hex(self.labels_tsv().as_bytes()));
        files.insert("relations.tsv".to_string(), sha256_hex(self.relations_tsv().as_bytes()));
        let relations: BTreeSet<&str> = self.triples.iter().map(|t| t.1.as_str()).collect();
        KgManifest {
            profile: self.profile.name().to_string(),
            seed: self.seed,
            size: self.size,
            entity_count: self.labels.len(),
            relation_count: relations.len(),
            triple_count: self.triples.len(),
            files,
        }
    }

    /// Writes `triples.tsv`, `labels.tsv`, `relations.tsv` and
    /// `manifest.json` into `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<KgManifest, DataError> {
        let manifest = self.manifest();
        let files = [
            ("triples.tsv", self.triples_tsv()),
            ("labels.tsv", self.labels_tsv()),
            ("relations.tsv", self.relations_tsv()),
            (
                "manifest.json",
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            ),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes()).map_err(io_err(&path))?;
        }
        Ok(manifest)
    }
}

/// Instantiations requested per template family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionConfig {
    /// Per relation and direction.
    pub one_hop: usize,
    /// Per 2-hop path signature.
    pub two_hop: usize,
    /// Per 3-hop path signature.
    pub three_hop: usize,
    /// Per relation, split evenly between true and false.
    pub ask: usize,
    /// Per COUNT template family.
    pub count: usize,
    /// Composed phrasings kept per multi-hop signature.
    pub phrasings: usize,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        Self {
            one_hop: 40,
            two_hop: 15,
            three_hop: 20,
            ask: 34,
            count: 25,
            phrasings: 5,
        }
    }
}

/// Summary written next to a generated dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub profile: String,
    pub seed: u64,
    pub records: usize,
    pub per_category: BTreeMap<String, usize>,
    pub per_split: BTreeMap<String, usize>,
    pub signatures: usize,
    /// Instantiations the entity linker could not align with the gold order.
    pub dropped_linker: usize,
    pub dropped_duplicate: usize,
    pub dropped_empty: usize,
    pub kg_triples_sha256: String,
    pub files: BTreeMap<String, String>,
}

struct Family {
    signature: String,
    /// Whole-question phrasings.
    templates: Vec<String>,
    kind: Shape,
    target: usize,
}

#[derive(Clone, Copy)]
enum Shape {
    Forward(Rel),
    Inverse(Rel),
    Chain(Rel, Rel),
    SameValue(Rel),
    SharedPerson(Rel, Rel),
    Ask(Rel),
    CountInverse(Rel),
    CountForward(Rel),
}

fn families(profile: Profile, cfg: &QuestionConfig, rng: &mut ChaCha8Rng) -> Vec<Family> {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let compose = |sets: &[&str], attrs: &[&str], rng: &mut ChaCha8Rng| {
        let mut all = Vec::new();
        for s in sets {
            for a in attrs {
                all.push(a.replace("{S}", s));
            }
        }
        all.shuffle(rng);
        all.truncate(cfg.phrasings.max(1));
        all
    };
    let mut out = Vec::new();
    for r in Rel::ALL {
        let lx = lexicon(profile, r);
        out.push(Family {
            signature: r.name().into(),
            templates: own(lx.fwd),
            kind: Shape::Forward(r),
            target: cfg.one_hop,
        });
        out.push(Family {
            signature: r.name().into(),
            templates: own(lx.inv),
            kind: Shape::Inverse(r),
            target: cfg.one_hop,
        });
    }
    for r1 in Rel::ALL {
        for r2 in Rel::ALL {
            let (templates, kind) = if r1 == r2 {
                (own(lexicon(profile, r1).same), Shape::SameValue(r1))
            } else {
                (
                    compose(lexicon(profile, r1).set, lexicon(profile, r2).attr, rng),
                    Shape::Chain(r1, r2),
                )
            };
            out.push(Family {
                signature: format!("{}>{}", r1.name(), r2.name()),
                templates,
                kind,
                target: cfg.two_hop,
            });
        }
    }
    for r1 in Rel::ALL.into_iter().filter(|r| r.is_person()) {
        for r2 in Rel::ALL.into_iter().filter(|&r| r != r1) {
            out.push(Family {
                signature: format!("{0}>{0}>{1}", r1.name(), r2.name()),
                templates: compose(lexicon(profile, r1).share, lexicon(profile, r2).attr, rng),
                kind: Shape::SharedPerson(r1, r2),
                target: cfg.three_hop,
            });
        }
    }
    for r in Rel::ALL {
        let lx = lexicon(profile, r);
        out.push(Family {
            signature: r.name().into(),
            templates: own(lx.ask),
            kind: Shape::Ask(r),
            target: cfg.ask,
        });
        out.push(Family {
            signature: r.name().into(),
            templates: own(lx.count_inv),
            kind: Shape::CountInverse(r),
            target: cfg.count,
        });
        if !lx.count_fwd.is_empty() {
            out.push(Family {
                signature: r.name().into(),
                templates: own(lx.count_fwd),
                kind: Shape::CountForward(r),
                target: cfg.count,
            });
        }
    }
    out
}

const ANSWER_VARS: &[&str] = &["?x", "?uri", "?answer", "?a"];
const MID_VARS: &[&str] = &["?film", "?m", "?movie", "?y"];
const HUB_VARS: &[&str] = &["?p", "?z", "?b", "?person"];

struct Instance {
    sparql: String,
    movie: Option<EntityId>,
    other: Option<EntityId>,
}

struct Sampler<'a> {
    kg: &'a KnowledgeGraph,
    by_rel: HashMap<Rel, Vec<Triple>>,
    objects: HashMap<Rel, Vec<EntityId>>,
    iris: HashMap<Rel, String>,
}

impl<'a> Sampler<'a> {
    fn new(kg: &'a KnowledgeGraph, profile: Profile) -> Self {
        let mut by_rel = HashMap::new();
        let mut objects = HashMap::new();
        let mut iris = HashMap::new();
        for r in Rel::ALL {
            let iri = r.iri(profile);
            let triples = match kg.relation_id(&iri) {
                Some(id) => kg.match_pattern(&TriplePattern {
                    predicate: Some(id),
                    ..Default::default()
                }),
                None => Vec::new(),
            };
            let objs: BTreeSet<EntityId> = triples.iter().map(|t| t.object).collect();
            objects.insert(r, objs.into_iter().collect());
            by_rel.insert(r, triples);
            iris.insert(r, iri);
        }
        Self {
            kg,
            by_rel,
            objects,
            iris,
        }
    }

    fn iri(&self, e: EntityId) -> &str {
        &self.kg.entity(e).iri
    }

    fn triple(&self, r: Rel, rng: &mut ChaCha8Rng) -> Option<Triple> {
        self.by_rel[&r].choose(rng).copied()
    }

    fn sample(&self, shape: Shape, rng: &mut ChaCha8Rng) -> Option<Instance> {
        let x = *ANSWER_VARS.choose(rng).unwrap();
        let m = *MID_VARS.choose(rng).unwrap();
        let p = *HUB_VARS.choose(rng).unwrap();
        Some(match shape {
            Shape::Forward(r) => {
                let t = self.triple(r, rng)?;
                Instance {
                    sparql: format!("SELECT {x} WHERE {{ <{}> <{}> {x} . }}", self.iri(t.subject), self.iris[&r]),
                    movie: Some(t.subject),
                    other: None,
                }
            }
            Shape::Inverse(r) => {
                let t = self.triple(r, rng)?;
                Instance {
                    sparql: format!("SELECT {x} WHERE {{ {x} <{}> <{}> . }}", self.iris[&r], self.iri(t.object)),
                    movie: None,
                    other: Some(t.object),
                }
            }
            Shape::Chain(r1, r2) => {
                let t = self.triple(r1, rng)?;
                Instance {
                    sparql: format!(
                        "SELECT {x} WHERE {{ {m} <{}> <{}> . {m} <{}> {x} . }}",
                        self.iris[&r1],
                        self.iri(t.object),
                        self.iris[&r2]
                    ),
                    movie: None,
                    other: Some(t.object),
                }
            }
            Shape::SameValue(r) => {
                let t = self.triple(r, rng)?;
                Instance {
                    sparql: format!(
                        "SELECT {x} WHERE {{ <{}> <{r}> {p} . {x} <{r}> {p} . }}",
                        self.iri(t.subject),
                        r = self.iris[&r]
                    ),
                    movie: Some(t.subject),
                    other: None,
                }
            }
            Shape::SharedPerson(r1, r2) => {
                let t = self.triple(r1, rng)?;
                Instance {
                    sparql: format!(
                        "SELECT {x} WHERE {{ <{}> <{r1}> {p} . {m} <{r1}> {p} . {m} <{r2}> {x} . }}",
                        self.iri(t.subject),
                        r1 = self.iris[&r1],
                        r2 = self.iris[&r2]
                    ),
                    movie: Some(t.subject),
                    other: None,
                }
            }
            Shape::Ask(r) => {
                let t = self.triple(r, rng)?;
                let object = if rng.gen_bool(0.5) {
                    t.object
                } else {
                    let o = *self.objects[&r].choose(rng)?;
                    let present = !self
                        .kg
                        .match_pattern(&TriplePattern {
                            subject: Some(t.subject),
                            predicate: Some(t.predicate),
                            object: Some(o),
                        })
                        .is_empty();
                    if present {
                        return None;
                    }
                    o
                };
                Instance {
                    sparql: format!(
                        "ASK WHERE {{ <{}> <{}> <{}> . }}",
                        self.iri(t.subject),
                        self.iris[&r],
                        self.iri(object)
                    ),
                    movie: Some(t.subject),
                    other: Some(object),
                }
            }
            Shape::CountInverse(r) => {
                let t = self.triple(r, rng)?;
                Instance {
                    sparql: format!(
                        "SELECT COUNT({x}) WHERE {{ {x} <{}> <{}> . }}",
                        self.iris[&r],
                        self.iri(t.object)
                    ),
                    movie: None,
                    other: Some(t.object),
                }
            }
            Shape::CountForward(r) => {
                let t = self.triple(r, rng)?;
                Instance {
                    sparql: format!(
                        "SELECT COUNT({x}) WHERE {{ <{}> <{}> {x} . }}",
                        self.iri(t.subject),
                        self.iris[&r]
                    ),
                    movie: Some(t.subject),
                    other: None,
                }
            }
        })
    }
}

/// Fills `{M}` and `{X}` and returns the entities in mention order.
fn render(template: &str, inst: &Instance, kg: &KnowledgeGraph) -> Option<(String, Vec<EntityId>)> {
    let mut slots: Vec<(usize, EntityId)> = Vec::new();
    let mut text = template.to_string();
    for (slot, ent) in [("{M}", inst.movie), ("{X}", inst.other)] {
        match (template.find(slot), ent) {
            (Some(pos), Some(e)) => {
                slots.push((pos, e));
                text = text.replace(slot, &kg.entity(e).label);
            }
            (None, None) => {}
            _ => return None,
        }
    }
    slots.sort_unstable();
    Some((text, slots.into_iter().map(|(_, e)| e).collect()))
}

/// Whether the linker finds exactly the intended entities in order.
fn linker_agrees(kg: &KnowledgeGraph, question: &str, order: &[EntityId]) -> bool {
    let mentions = kg.link_entities(question);
    mentions.len() == order.len() && mentions.iter().zip(order).all(|(m, e)| m.entities.contains(e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenStats {
    pub dropped_linker: usize,
    pub dropped_duplicate: usize,
    pub dropped_empty: usize,
}

/// Instantiates every template family against `kg`. Gold queries are
/// executed to fill the answers; empty SELECT answers, duplicate questions
/// and questions the entity linker misreads are discarded. Each family is
/// split 80/10/10 into train/dev/test.
pub fn gen_questions(
    kg: &KnowledgeGraph,
    profile: Profile,
    cfg: &QuestionConfig,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, GenStats), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7175_6573_7469_6f6e);
    let sampler = Sampler::new(kg, profile);
    let mut stats = GenStats::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for fam in families(profile, cfg, &mut rng) {
        let mut batch = Vec::new();
        let mut attempts = 0;
        while batch.len() < fam.target && attempts < fam.target * 30 {
            attempts += 1;
            let Some(inst) = sampler.sample(fam.kind, &mut rng) else {
                continue;
            };
            let template = fam.templates.choose(&mut rng).expect("family has templates");
            let Some((question, order)) = render(template, &inst, kg) else {
                continue;
            };
            if seen.contains(&question) {
                stats.dropped_duplicate += 1;
                continue;
            }
            let grounded = ground_sparql(&inst.sparql, kg)?.ok_or_else(|| DataError::Inconsistent {
                question: question.clone(),
                reason: "gold query mentions unknown IRIs".into(),
            })?;
            let result = execute(kg, &grounded).map_err(|e| DataError::Inconsistent {
                question: question.clone(),
                reason: e.to_string(),
            })?;
            if matches!(&result, QueryResult::Entities(v) if v.is_empty()) {
                stats.dropped_empty += 1;
                continue;
            }
            if !linker_agrees(kg, &question, &order) {
                stats.dropped_linker += 1;
                continue;
            }
            seen.insert(question.clone());
            batch.push(DatasetRecord {
                question,
                sparql: inst.sparql,
                entity_order: order.iter().map(|&e| kg.entity(e).iri.clone()).collect(),
                answers: result.to_answer_strings(kg),
                path_signature: fam.signature.clone(),
                split: None,
            });
        }
        batch.shuffle(&mut rng);
        let n = batch.len();
        let n_train = (n as f64 * 0.8).round() as usize;
        let n_dev = (n as f64 * 0.1).round() as usize;
        for (i, r) in batch.iter_mut().enumerate() {
            let split = if i < n_train {
                "train"
            } else if i < n_train + n_dev {
                "dev"
            } else {
                "test"
            };
            r.split = Some(split.to_string());
        }
        out.extend(batch);
    }
    Ok((out, stats))
}

fn word_vocab(records: &[DatasetRecord]) -> BTreeSet<String> {
    records
        .iter()
        .flat_map(|r| tokenize(&r.question))
        .filter(|t| t.chars().any(char::is_alphabetic))
        .collect()
}

/// Jaccard overlap of the word-token vocabularies of two question sets.
pub fn question_vocab_jaccard(a: &[DatasetRecord], b: &[DatasetRecord]) -> f64 {
    let va = word_vocab(a);
    let vb = word_vocab(b);
    let union = va.union(&vb).count();
    if union == 0 {
        return 0.0;
    }
    va.intersection(&vb).count() as f64 / union as f64
}

/// Writes `all.jsonl`, the per-split files and `manifest.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    profile: Profile,
    seed: u64,
    records: &[DatasetRecord],
    stats: GenStats,
    kg: &GeneratedKg,
) -> Result<DatasetManifest, DataError> {
    let mut manifest = DatasetManifest {
        profile: profile.name().to_string(),
        seed,
        records: records.len(),
        dropped_linker: stats.dropped_linker,
        dropped_duplicate: stats.dropped_duplicate,
        dropped_empty: stats.dropped_empty,
        kg_triples_sha256: sha256_hex(kg.triples_tsv().as_bytes()),
        ..Default::default()
    };
    let mut signatures = BTreeSet::new();
    for r in records {
        *manifest.per_category.entry(r.category().name().to_string()).or_default() += 1;
        let split = r.split.clone().unwrap_or_else(|| "train".into());
        *manifest.per_split.entry(split).or_default() += 1;
        signatures.insert(r.path_signature.as_str());
    }
    manifest.signatures = signatures.len();
    let mut files: Vec<(String, String)> = vec![("all.jsonl".into(), to_jsonl(records))];
    for split in ["train", "dev", "test"] {
        files.push((format!("{split}.jsonl"), to_jsonl(&super::filter_split(records, split))));
    }
    for (name, body) in &files {
        manifest.files.insert(name.clone(), sha256_hex(body.as_bytes()));
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes()).map_err(io_err(&path))?;
    }
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&path, body.as_bytes()).map_err(io_err(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kg_is_deterministic_and_has_nine_relations() {
        for profile in [Profile::MovieA, Profile::MovieB] {
            let a = gen_kg(profile, 3, KgSize::default());
            let b = gen_kg(profile, 3, KgSize::default());
            assert_eq!(a, b);
            let kg = a.to_kg();
            assert_eq!(kg.relation_count(), 9);
            assert_eq!(kg.triple_count(), a.triples.len());
            assert_eq!(kg.unlabeled_count(), 0);
        }
        assert_ne!(gen_kg(Profile::MovieA, 3, KgSize::default()), gen_kg(Profile::MovieA, 4, KgSize::default()));
    }

    #[test]
    fn every_movie_has_a_director() {
        let g = gen_kg(Profile::MovieA, 11, KgSize::default());
        let kg = g.to_kg();
        let dir = kg.relation_id(&Rel::DirectedBy.iri(Profile::MovieA)).unwrap();
        let lang = kg.relation_id(&Rel::InLanguage.iri(Profile::MovieA)).unwrap();
        let movies: BTreeSet<EntityId> = kg.triples().iter().filter(|t| t.predicate == lang).map(|t| t.subject).collect();
        assert_eq!(movies.len(), 180);
        for m in movies {
            assert!(kg.triples().iter().any(|t| t.subject == m && t.predicate == dir));
        }
    }

    #[test]
    fn movie_b_surfaces_come_from_labels() {
        let g = gen_kg(Profile::MovieB, 1, KgSize::default());
        let kg = g.to_kg();
        let cat = g.catalog(&kg);
        assert!(cat.surface_index("original language of film").is_some());
        assert!(cat.surface_index("director").is_some());
        let ga = gen_kg(Profile::MovieA, 1, KgSize::default());
        let cata = ga.catalog(&ga.to_kg());
        assert!(cata.surface_index("directed by").is_some());
        assert!(cata.surface_index("has imdb votes").is_some());
    }

    #[test]
    fn render_orders_entities_by_position() {
        let g = gen_kg(Profile::MovieA, 2, KgSize::default());
        let kg = g.to_kg();
        let inst = Instance {
            sparql: String::new(),
            movie: Some(EntityId(0)),
            other: Some(EntityId(1)),
        };
        let (q, order) = render("did {X} direct {M}", &inst, &kg).unwrap();
        assert_eq!(order, vec![EntityId(1), EntityId(0)]);
        assert!(q.ends_with(&kg.entity(EntityId(0)).label));
        assert!(render("who directed {M}", &Instance { movie: None, ..inst }, &kg).is_none());
    }
}
