//! Index nested-loop evaluation of grounded basic graph patterns.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, TriplePattern};
use crate::query::skeleton::{Form, MAX_VARS};
use crate::query::{GroundedPattern, GroundedQuery, GroundedTerm};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("entity id {0} out of range")]
    UnknownEntity(u32),
    #[error("relation id {0} out of range")]
    UnknownRelation(u32),
    #[error("variable {0} out of range")]
    BadVariable(u8),
    #[error("projection variable not bound by any pattern")]
    UnboundProjection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryResult {
    /// Sorted, duplicate-free.
    Entities(Vec<EntityId>),
    Boolean(bool),
    Count(usize),
}

impl QueryResult {
    /// Empty entity set, `false`, or zero.
    pub fn is_empty(&self) -> bool {
        match self {
            QueryResult::Entities(e) => e.is_empty(),
            QueryResult::Boolean(b) => !b,
            QueryResult::Count(c) => *c == 0,
        }
    }

    /// Answer strings as stored in datasets: sorted IRIs, `true`/`false`, or the count.
    pub fn to_answer_strings(&self, kg: &KnowledgeGraph) -> Vec<String> {
        match self {
            QueryResult::Entities(ids) => {
                let mut v: Vec<String> = ids.iter().map(|&e| kg.entity(e).iri.clone()).collect();
                v.sort();
                v
            }
            QueryResult::Boolean(b) => vec![b.to_string()],
            QueryResult::Count(c) => vec![c.to_string()],
        }
    }
}

type Bindings = [Option<EntityId>; MAX_VARS];

fn check(kg: &KnowledgeGraph, q: &GroundedQuery) -> Result<(), ExecError> {
    let term = |t: GroundedTerm| match t {
        GroundedTerm::Var(v) if v as usize >= MAX_VARS => Err(ExecError::BadVariable(v)),
        GroundedTerm::Entity(e) if e.index() >= kg.entity_count() => Err(ExecError::UnknownEntity(e.0)),
        _ => Ok(()),
    };
    for p in &q.patterns {
        term(p.subject)?;
        term(p.object)?;
        if p.predicate.index() >= kg.relation_count() {
            return Err(ExecError::UnknownRelation(p.predicate.0));
        }
    }
    if let (Some(v), Form::Select | Form::Count) = (q.projection, q.form) {
        let bound = q
            .patterns
            .iter()
            .any(|p| p.subject == GroundedTerm::Var(v) || p.object == GroundedTerm::Var(v));
        if !bound {
            return Err(ExecError::UnboundProjection);
        }
    }
    Ok(())
}

fn resolve(t: GroundedTerm, b: &Bindings) -> Option<EntityId> {
    match t {
        GroundedTerm::Entity(e) => Some(e),
        GroundedTerm::Var(v) => b[v as usize],
    }
}

fn instantiate(p: &GroundedPattern, b: &Bindings) -> TriplePattern {
    TriplePattern {
        subject: resolve(p.subject, b),
        predicate: Some(p.predicate),
        object: resolve(p.object, b),
    }
}

struct Search<'a> {
    kg: &'a KnowledgeGraph,
    patterns: &'a [GroundedPattern],
    projection: Option<u8>,
    ask: bool,
    found: bool,
    out: BTreeSet<EntityId>,
}

impl Search<'_> {
    /// Picks the next pattern: connected to what is bound, then fewest candidates.
    fn choose(&self, remaining: u32, b: &Bindings) -> usize {
        let mut best = None;
        for (i, p) in self.patterns.iter().enumerate() {
            if remaining & (1 << i) == 0 {
                continue;
            }
            let inst = instantiate(p, b);
            let connected = inst.subject.is_some() || inst.object.is_some();
            let key = (!connected, self.kg.match_estimate(&inst), i);
            if best.as_ref().map_or(true, |(k, _)| key < *k) {
                best = Some((key, i));
            }
        }
        best.expect("remaining pattern").1
    }

    fn run(&mut self, remaining: u32, b: &mut Bindings) {
        if self.ask && self.found {
            return;
        }
        if remaining == 0 {
            self.found = true;
            if let Some(v) = self.projection {
                if let Some(e) = b[v as usize] {
                    self.out.insert(e);
                }
            }
            return;
        }
        let i = self.choose(remaining, b);
        let p = self.patterns[i];
        let inst = instantiate(&p, b);
        for t in self.kg.match_pattern(&inst) {
            let saved = *b;
            if bind(p.subject, t.subject, b) && bind(p.object, t.object, b) {
                self.run(remaining & !(1 << i), b);
            }
            *b = saved;
            if self.ask && self.found {
                return;
            }
        }
    }
}

fn bind(t: GroundedTerm, value: EntityId, b: &mut Bindings) -> bool {
    match t {
        GroundedTerm::Entity(e) => e == value,
        GroundedTerm::Var(v) => match b[v as usize] {
            Some(x) => x == value,
            None => {
                b[v as usize] = Some(value);
                true
            }
        },
    }
}

/// Evaluates a grounded query with set semantics.
pub fn execute(kg: &KnowledgeGraph, q: &GroundedQuery) -> Result<QueryResult, ExecError> {
    check(kg, q)?;
    let mut search = Search {
        kg,
        patterns: &q.patterns,
        projection: if q.form == Form::Ask { None } else { q.projection },
        ask: q.form == Form::Ask,
        found: false,
        out: BTreeSet::new(),
    };
    let all = (1u32 << q.patterns.len()) - 1;
    if !q.patterns.is_empty() {
        search.run(all, &mut [None; MAX_VARS]);
    }
    Ok(match q.form {
        Form::Ask => QueryResult::Boolean(search.found),
        Form::Select => QueryResult::Entities(search.out.into_iter().collect()),
        Form::Count => QueryResult::Count(search.out.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KgBuilder;
    use crate::query::Provenance;

    fn kg() -> KnowledgeGraph {
        let mut b = KgBuilder::new();
        b.triple("m1", "directedBy", "p1")
            .triple("m2", "directedBy", "p1")
            .triple("m3", "directedBy", "p2")
            .triple("m1", "language", "en")
            .triple("m2", "language", "fr")
            .triple("m3", "language", "en")
            .triple("p1", "knows", "p1");
        b.build()
    }

    fn q(kg: &KnowledgeGraph, form: Form, pats: &[(GroundedTerm, &str, GroundedTerm)]) -> GroundedQuery {
        GroundedQuery {
            form,
            projection: if form == Form::Ask { None } else { Some(0) },
            patterns: pats
                .iter()
                .map(|&(s, p, o)| GroundedPattern {
                    subject: s,
                    predicate: kg.relation_id(p).unwrap(),
                    object: o,
                })
                .collect(),
            provenance: Provenance {
                skeleton: String::new(),
                surfaces: vec![],
                relations: vec![],
                entities: vec![],
            },
            score: 1.0,
        }
    }

    fn e(kg: &KnowledgeGraph, iri: &str) -> GroundedTerm {
        GroundedTerm::Entity(kg.entity_id(iri).unwrap())
    }

    use GroundedTerm::Var;

    #[test]
    fn two_hop_select() {
        let g = kg();
        let query = q(&g, Form::Select, &[(Var(1), "directedBy", e(&g, "p1")), (Var(1), "language", Var(0))]);
        let r = execute(&g, &query).unwrap();
        assert_eq!(r.to_answer_strings(&g), vec!["en", "fr"]);
    }

    #[test]
    fn count_uses_set_semantics() {
        let g = kg();
        let query = q(&g, Form::Count, &[(Var(1), "language", Var(0))]);
        assert_eq!(execute(&g, &query).unwrap(), QueryResult::Count(2));
    }

    #[test]
    fn ask_true_and_false() {
        let g = kg();
        let yes = q(&g, Form::Ask, &[(e(&g, "m1"), "directedBy", e(&g, "p1"))]);
        let no = q(&g, Form::Ask, &[(e(&g, "m3"), "directedBy", e(&g, "p1"))]);
        assert_eq!(execute(&g, &yes).unwrap(), QueryResult::Boolean(true));
        assert_eq!(execute(&g, &no).unwrap(), QueryResult::Boolean(false));
    }

    #[test]
    fn repeated_variable_in_one_pattern() {
        let g = kg();
        let query = q(&g, Form::Select, &[(Var(0), "knows", Var(0))]);
        assert_eq!(execute(&g, &query).unwrap().to_answer_strings(&g), vec!["p1"]);
    }

    #[test]
    fn unbound_projection_is_an_error() {
        let g = kg();
        let mut query = q(&g, Form::Select, &[(Var(1), "language", e(&g, "en"))]);
        query.projection = Some(0);
        assert_eq!(execute(&g, &query), Err(ExecError::UnboundProjection));
    }
}
