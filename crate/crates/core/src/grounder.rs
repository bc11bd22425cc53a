//! Stage 2: binds sketches to a knowledge graph, executes the grounded
//! candidates, and picks the answer.

use serde::Serialize;
use thiserror::Error;

use crate::executor::{execute, QueryResult};
use crate::kg::{EntityId, KnowledgeGraph, Mention, RelationId};
use crate::model::{Model, ModelError, SketchCandidate};
use crate::query::skeleton::Form;
use crate::query::{print_sparql, GroundedQuery, QuerySkeleton};
use crate::tensor::Tensor;
use crate::text::RelationCatalog;

/// Maximum entity assignments tried per skeleton when labels are ambiguous.
pub const MAX_ENTITY_COMBINATIONS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundError {
    #[error("skeleton needs {needed} entities, question has {found}")]
    NotEnoughEntities { needed: usize, found: usize },
}

/// Entity assignments for the `ENT_k` placeholders: mention `k` binds
/// `ENT_k`. Ambiguous mentions yield one assignment per combination, ordered
/// by the product of linker scores (then by entity ids), at most
/// [`MAX_ENTITY_COMBINATIONS`].
pub fn bind_entities(skeleton: &QuerySkeleton, mentions: &[Mention]) -> Result<Vec<(Vec<EntityId>, f64)>, GroundError> {
    let needed = skeleton.ent_count();
    if mentions.len() < needed {
        return Err(GroundError::NotEnoughEntities {
            needed,
            found: mentions.len(),
        });
    }
    let mut combos: Vec<(Vec<EntityId>, f64)> = vec![(Vec::new(), 1.0)];
    for m in &mentions[..needed] {
        let mut next = Vec::with_capacity(combos.len() * m.entities.len());
        for (prefix, score) in &combos {
            for &e in &m.entities {
                let mut ids = prefix.clone();
                ids.push(e);
                next.push((ids, score * m.score));
            }
        }
        combos = next;
    }
    combos.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    combos.truncate(MAX_ENTITY_COMBINATIONS);
    Ok(combos)
}

/// Every per-placeholder relation assignment for the candidate's chosen
/// surfaces, in ascending `RelationId` tuple order.
pub fn expand_relations(candidate: &SketchCandidate, catalog: &RelationCatalog) -> Vec<Vec<RelationId>> {
    let mut out: Vec<Vec<RelationId>> = vec![Vec::new()];
    for &(surface, _) in &candidate.surfaces {
        let mut rels = catalog.relations_for(surface).to_vec();
        rels.sort();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                rels.iter().map(move |&r| {
                    let mut p = prefix.clone();
                    p.push(r);
                    p
                })
            })
            .collect();
    }
    out
}

/// One grounded candidate as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCandidate {
    pub skeleton: String,
    pub surfaces: Vec<String>,
    pub relations: Vec<String>,
    pub entities: Vec<String>,
    pub score: f64,
    pub sparql: String,
    /// Size of the result when the candidate was executed.
    pub result_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    /// `None` when no candidate could be grounded.
    pub result: Option<QueryResult>,
    pub chosen: Option<GroundedQuery>,
    pub chosen_index: Option<usize>,
    /// Every candidate was empty; `result` is the top candidate's.
    pub flagged_empty: bool,
    pub candidates: Vec<GroundedQuery>,
    pub result_sizes: Vec<Option<usize>>,
    /// Why the question went unanswered, if it did.
    pub unanswered: Option<String>,
}

impl Answer {
    fn unanswered(reason: String) -> Self {
        Self {
            result: None,
            chosen: None,
            chosen_index: None,
            flagged_empty: false,
            candidates: Vec::new(),
            result_sizes: Vec::new(),
            unanswered: Some(reason),
        }
    }

    /// Answer strings, empty when unanswered or flagged.
    pub fn answer_strings(&self, kg: &KnowledgeGraph) -> Vec<String> {
        match (&self.result, self.flagged_empty) {
            (Some(r), false) => r.to_answer_strings(kg),
            _ => Vec::new(),
        }
    }

    pub fn trace(&self, question: &str, kg: &KnowledgeGraph) -> serde_json::Value {
        let candidates: Vec<TraceCandidate> = self
            .candidates
            .iter()
            .zip(&self.result_sizes)
            .map(|(q, &size)| TraceCandidate {
                skeleton: q.provenance.skeleton.clone(),
                surfaces: q.provenance.surfaces.clone(),
                relations: q.provenance.relations.iter().map(|&r| kg.relation_iri(r).to_string()).collect(),
                entities: q.provenance.entities.iter().map(|&e| kg.entity(e).iri.clone()).collect(),
                score: q.score,
                sparql: print_sparql(q, kg),
                result_size: size,
            })
            .collect();
        serde_json::json!({
            "question": question,
            "candidates": candidates,
            "chosen": self.chosen_index,
            "answer": self.result.as_ref().map(|r| r.to_answer_strings(kg)),
            "flagged_empty": self.flagged_empty,
            "unanswered": self.unanswered,
        })
    }
}

fn result_size(r: &QueryResult) -> usize {
    match r {
        QueryResult::Entities(e) => e.len(),
        QueryResult::Boolean(b) => usize::from(*b),
        QueryResult::Count(c) => *c,
    }
}

/// Grounds ranked sketches and applies the selection rule: the first
/// candidate (by score) that is an ASK, or a SELECT/COUNT with a non-empty
/// result, wins; otherwise the top candidate's empty result is returned and
/// flagged.
pub fn ground_and_answer(
    kg: &KnowledgeGraph,
    catalog: &RelationCatalog,
    mentions: &[Mention],
    sketches: &[SketchCandidate],
    candidate_cap: usize,
) -> Answer {
    let mut grounded: Vec<GroundedQuery> = Vec::new();
    let mut max_fanout = 1;
    let mut binding_error = None;
    for sketch in sketches {
        let bindings = match bind_entities(&sketch.skeleton, mentions) {
            Ok(b) => b,
            Err(e) => {
                binding_error.get_or_insert(e.to_string());
                continue;
            }
        };
        let assignments = expand_relations(sketch, catalog);
        max_fanout = max_fanout.max(assignments.len());
        let surfaces: Vec<String> = sketch.surfaces.iter().map(|&(s, _)| catalog.surface(s).to_string()).collect();
        for (entities, _) in &bindings {
            for rels in &assignments {
                if let Ok(q) = GroundedQuery::bind(&sketch.skeleton, entities, rels, surfaces.clone(), sketch.joint_score) {
                    grounded.push(q);
                }
            }
        }
    }
    if grounded.is_empty() {
        return Answer::unanswered(binding_error.unwrap_or_else(|| "no groundable candidate".into()));
    }
    grounded.sort_by(|a, b| b.score.total_cmp(&a.score));
    grounded.truncate(candidate_cap * max_fanout);

    let mut sizes = vec![None; grounded.len()];
    let mut top: Option<QueryResult> = None;
    for (i, q) in grounded.iter().enumerate() {
        let result = execute(kg, q).unwrap_or(match q.form {
            Form::Ask => QueryResult::Boolean(false),
            Form::Count => QueryResult::Count(0),
            Form::Select => QueryResult::Entities(Vec::new()),
        });
        sizes[i] = Some(result_size(&result));
        if q.form == Form::Ask || !result.is_empty() {
            return Answer {
                result: Some(result),
                chosen: Some(q.clone()),
                chosen_index: Some(i),
                flagged_empty: false,
                candidates: grounded,
                result_sizes: sizes,
                unanswered: None,
            };
        }
        top.get_or_insert(result);
    }
    Answer {
        result: top,
        chosen: Some(grounded[0].clone()),
        chosen_index: Some(0),
        flagged_empty: true,
        candidates: grounded,
        result_sizes: sizes,
        unanswered: None,
    }
}

/// A model bound to one knowledge graph, with relation encodings cached.
pub struct Grounder<'a> {
    pub kg: &'a KnowledgeGraph,
    pub catalog: &'a RelationCatalog,
    relations: Tensor,
}

impl<'a> Grounder<'a> {
    pub fn new(model: &Model, kg: &'a KnowledgeGraph, catalog: &'a RelationCatalog) -> Self {
        Self {
            kg,
            catalog,
            relations: model.relation_matrix(catalog),
        }
    }

    pub fn sketches(&self, model: &Model, question: &str) -> Result<Vec<SketchCandidate>, ModelError> {
        let ids = model.question_ids(question)?;
        model.infer_ids(&ids, &self.relations)
    }

    pub fn answer(&self, model: &Model, question: &str) -> Answer {
        let sketches = match self.sketches(model, question) {
            Ok(s) => s,
            Err(e) => return Answer::unanswered(e.to_string()),
        };
        let mentions = self.kg.link_entities(question);
        ground_and_answer(self.kg, self.catalog, &mentions, &sketches, model.config().candidate_cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KgBuilder;
    use crate::query::skeleton::{SkeletonPattern, Term};

    fn mention(entities: Vec<EntityId>, score: f64, start: usize) -> Mention {
        Mention {
            start,
            end: start + 1,
            entities,
            score,
            exact: score == 1.0,
        }
    }

    fn two_hop() -> QuerySkeleton {
        QuerySkeleton {
            form: Form::Select,
            projection: Some(0),
            patterns: vec![
                SkeletonPattern {
                    subject: Term::Var(1),
                    prop: 0,
                    object: Term::Ent(0),
                },
                SkeletonPattern {
                    subject: Term::Var(1),
                    prop: 1,
                    object: Term::Var(0),
                },
            ],
        }
    }

    #[test]
    fn entities_bind_in_mention_order() {
        let sk = QuerySkeleton {
            form: Form::Ask,
            projection: None,
            patterns: vec![SkeletonPattern {
                subject: Term::Ent(0),
                prop: 0,
                object: Term::Ent(1),
            }],
        };
        let ms = [mention(vec![EntityId(5)], 1.0, 0), mention(vec![EntityId(2)], 1.0, 3)];
        let b = bind_entities(&sk, &ms).unwrap();
        assert_eq!(b, vec![(vec![EntityId(5), EntityId(2)], 1.0)]);
        assert_eq!(
            bind_entities(&two_hop(), &[]),
            Err(GroundError::NotEnoughEntities { needed: 1, found: 0 })
        );
    }

    #[test]
    fn ambiguous_mentions_are_capped() {
        let sk = QuerySkeleton {
            form: Form::Ask,
            projection: None,
            patterns: vec![SkeletonPattern {
                subject: Term::Ent(0),
                prop: 0,
                object: Term::Ent(1),
            }],
        };
        let many: Vec<EntityId> = (0..4).map(EntityId).collect();
        let ms = [mention(many.clone(), 0.8, 0), mention(many, 1.0, 2)];
        let b = bind_entities(&sk, &ms).unwrap();
        assert_eq!(b.len(), MAX_ENTITY_COMBINATIONS);
        assert_eq!(b[0].0, vec![EntityId(0), EntityId(0)]);
        assert!(b.iter().all(|(_, s)| (*s - 0.8).abs() < 1e-12));
    }

    #[test]
    fn fan_out_is_the_product_of_relation_lists() {
        let iris: Vec<String> = ["http://a/director", "http://b/director", "http://a/language", "http://b/language"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cat = RelationCatalog::build(&iris, None).unwrap();
        let d = cat.surface_index("director").unwrap();
        let l = cat.surface_index("language").unwrap();
        let cand = SketchCandidate {
            skeleton: two_hop(),
            seq_prob: 1.0,
            ranked: vec![],
            surfaces: vec![(d, 0.5), (l, 0.5)],
            joint_score: 0.25,
        };
        let rels = expand_relations(&cand, &cat);
        assert_eq!(rels.len(), 4);
        let mut sorted = rels.clone();
        sorted.sort();
        assert_eq!(rels, sorted);
        let mut single = cand.clone();
        single.surfaces.truncate(1);
        single.skeleton.patterns.truncate(1);
        single.skeleton.patterns[0].subject = Term::Var(0);
        assert_eq!(expand_relations(&single, &cat).len(), 2);
    }

    #[test]
    fn all_empty_is_flagged_with_the_top_candidate() {
        let mut b = KgBuilder::new();
        b.entity("http://e/jk", "john krasinski");
        b.triple("http://e/m", "http://a/director", "http://e/other");
        b.triple("http://e/m", "http://a/language", "http://e/en");
        let kg = b.build();
        let cat = RelationCatalog::build(kg.relations(), None).unwrap();
        let cand = SketchCandidate {
            skeleton: two_hop(),
            seq_prob: 1.0,
            ranked: vec![],
            surfaces: vec![
                (cat.surface_index("director").unwrap(), 1.0),
                (cat.surface_index("language").unwrap(), 1.0),
            ],
            joint_score: 1.0,
        };
        let ms = kg.link_entities("films by john krasinski");
        let a = ground_and_answer(&kg, &cat, &ms, &[cand], 25);
        assert!(a.flagged_empty);
        assert_eq!(a.chosen_index, Some(0));
        assert_eq!(a.result, Some(QueryResult::Entities(vec![])));
        assert!(a.answer_strings(&kg).is_empty());
    }

    #[test]
    fn no_entities_means_unanswered() {
        let kg = KgBuilder::new().build();
        let cat = RelationCatalog::build(&["http://a/director".to_string(), "http://a/language".to_string()], None)
            .unwrap();
        let cand = SketchCandidate {
            skeleton: two_hop(),
            seq_prob: 1.0,
            ranked: vec![],
            surfaces: vec![(0, 1.0), (1, 1.0)],
            joint_score: 1.0,
        };
        let a = ground_and_answer(&kg, &cat, &[], &[cand], 25);
        assert!(a.result.is_none());
        assert!(a.unanswered.unwrap().contains("needs 1 entities"));
    }
}
