//! Query skeletons, the SPARQL subset, and grounded queries.

pub mod skeleton;
pub mod sparql;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, RelationId};
pub use skeleton::{Form, QuerySkeleton, SkeletonPattern, SkeletonToken, Term};
pub use sparql::{canonicalize, canonicalize_gold, ground_sparql, print_sparql, CanonicalQuery, GoldSketch, SparqlQuery};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("unsupported SPARQL syntax: {0}")]
    UnsupportedSyntax(String),
    #[error("entity not in entity order: {0}")]
    UnknownEntityOrder(String),
    #[error("relation not in catalog: {0}")]
    UnknownRelation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundedTerm {
    Var(u8),
    Entity(EntityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundedPattern {
    pub subject: GroundedTerm,
    pub predicate: RelationId,
    pub object: GroundedTerm,
}

/// Which skeleton, surfaces, relations and entities produced a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub skeleton: String,
    pub surfaces: Vec<String>,
    pub relations: Vec<RelationId>,
    pub entities: Vec<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedQuery {
    pub form: Form,
    pub projection: Option<u8>,
    pub patterns: Vec<GroundedPattern>,
    pub provenance: Provenance,
    pub score: f64,
}

impl GroundedQuery {
    /// Substitutes `ENT_k` with `entities[k]` and `PROP_k` with `relations[k]`.
    pub fn bind(
        skeleton: &QuerySkeleton,
        entities: &[EntityId],
        relations: &[RelationId],
        surfaces: Vec<String>,
        score: f64,
    ) -> Result<Self, QueryError> {
        if entities.len() != skeleton.ent_count() {
            return Err(QueryError::InvalidSkeleton(format!(
                "skeleton needs {} entities, got {}",
                skeleton.ent_count(),
                entities.len()
            )));
        }
        if relations.len() != skeleton.prop_count() {
            return Err(QueryError::InvalidSkeleton(format!(
                "skeleton needs {} relations, got {}",
                skeleton.prop_count(),
                relations.len()
            )));
        }
        let term = |t: Term| match t {
            Term::Var(k) => GroundedTerm::Var(k),
            Term::Ent(k) => GroundedTerm::Entity(entities[k as usize]),
        };
        let patterns = skeleton
            .patterns
            .iter()
            .map(|p| GroundedPattern {
                subject: term(p.subject),
                predicate: relations[p.prop as usize],
                object: term(p.object),
            })
            .collect();
        Ok(Self {
            form: skeleton.form,
            projection: skeleton.projection,
            patterns,
            provenance: Provenance {
                skeleton: skeleton.to_text(),
                surfaces,
                relations: relations.to_vec(),
                entities: entities.to_vec(),
            },
            score,
        })
    }
}
