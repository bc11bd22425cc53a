//! The supported SPARQL subset:
//!
//! ```text
//! SELECT ?v WHERE { t* }
//! ASK WHERE { t* }
//! SELECT COUNT(?v) WHERE { t* }
//! t    := term <iri> term .
//! term := ?name | <iri>
//! ```
//!
//! Keywords are case-insensitive. Prefixed names are not accepted.

use std::collections::HashMap;

use super::skeleton::{Form, QuerySkeleton, SkeletonPattern, Term};
use super::{GroundedQuery, GroundedTerm, QueryError};
use crate::kg::KnowledgeGraph;
use crate::text::RelationCatalog;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SparqlTerm {
    Var(String),
    Iri(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparqlPattern {
    pub subject: SparqlTerm,
    pub predicate: String,
    pub object: SparqlTerm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparqlQuery {
    pub form: Form,
    pub projection: Option<String>,
    pub patterns: Vec<SparqlPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    Punct(char),
}

fn lex(text: &str) -> Result<Vec<Tok>, QueryError> {
    let unsupported = |m: String| QueryError::UnsupportedSyntax(m);
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '<' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '>' {
                if chars[j].is_whitespace() {
                    return Err(unsupported("whitespace inside IRI".into()));
                }
                j += 1;
            }
            if j == chars.len() {
                return Err(unsupported("unterminated IRI".into()));
            }
            out.push(Tok::Iri(chars[start..j].iter().collect()));
            i = j + 1;
        } else if c == '?' || c == '$' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            if j == start {
                return Err(unsupported("empty variable name".into()));
            }
            out.push(Tok::Var(chars[start..j].iter().collect()));
            i = j;
        } else if "{}().".contains(c) {
            out.push(Tok::Punct(c));
            i += 1;
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect::<String>().to_ascii_uppercase()));
        } else {
            return Err(unsupported(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<Tok>,
    pos: usize,
}

impl Cursor {
    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn expect_word(&mut self, w: &str) -> Result<(), QueryError> {
        match self.next() {
            Some(Tok::Word(x)) if x == w => Ok(()),
            other => Err(QueryError::UnsupportedSyntax(format!("expected {w}, found {other:?}"))),
        }
    }

    fn expect_punct(&mut self, p: char) -> Result<(), QueryError> {
        match self.next() {
            Some(Tok::Punct(x)) if x == p => Ok(()),
            other => Err(QueryError::UnsupportedSyntax(format!("expected {p:?}, found {other:?}"))),
        }
    }

    fn term(&mut self) -> Result<SparqlTerm, QueryError> {
        match self.next() {
            Some(Tok::Var(v)) => Ok(SparqlTerm::Var(v)),
            Some(Tok::Iri(i)) => Ok(SparqlTerm::Iri(i)),
            other => Err(QueryError::UnsupportedSyntax(format!("expected term, found {other:?}"))),
        }
    }
}

impl SparqlQuery {
    pub fn parse(text: &str) -> Result<Self, QueryError> {
        let mut c = Cursor {
            toks: lex(text)?,
            pos: 0,
        };
        let (form, projection) = match c.next() {
            Some(Tok::Word(w)) if w == "ASK" => (Form::Ask, None),
            Some(Tok::Word(w)) if w == "SELECT" => match c.next() {
                Some(Tok::Var(v)) => (Form::Select, Some(v)),
                Some(Tok::Word(w)) if w == "COUNT" => {
                    c.expect_punct('(')?;
                    let v = match c.next() {
                        Some(Tok::Var(v)) => v,
                        other => {
                            return Err(QueryError::UnsupportedSyntax(format!(
                                "expected variable in COUNT, found {other:?}"
                            )))
                        }
                    };
                    c.expect_punct(')')?;
                    (Form::Count, Some(v))
                }
                other => {
                    return Err(QueryError::UnsupportedSyntax(format!(
                        "expected projection, found {other:?}"
                    )))
                }
            },
            other => return Err(QueryError::UnsupportedSyntax(format!("expected SELECT or ASK, found {other:?}"))),
        };
        c.expect_word("WHERE")?;
        c.expect_punct('{')?;
        let mut patterns = Vec::new();
        while c.peek() != Some(&Tok::Punct('}')) {
            let subject = c.term()?;
            let predicate = match c.next() {
                Some(Tok::Iri(i)) => i,
                other => {
                    return Err(QueryError::UnsupportedSyntax(format!(
                        "predicate must be an IRI, found {other:?}"
                    )))
                }
            };
            let object = c.term()?;
            c.expect_punct('.')?;
            patterns.push(SparqlPattern {
                subject,
                predicate,
                object,
            });
        }
        c.expect_punct('}')?;
        if let Some(t) = c.next() {
            return Err(QueryError::UnsupportedSyntax(format!("trailing input {t:?}")));
        }
        Ok(Self {
            form,
            projection,
            patterns,
        })
    }

    /// Entity IRIs in first-occurrence order.
    pub fn entity_iris(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.patterns {
            for t in [&p.subject, &p.object] {
                if let SparqlTerm::Iri(i) = t {
                    if !out.contains(i) {
                        out.push(i.clone());
                    }
                }
            }
        }
        out
    }
}

/// A gold query with its KG vocabulary abstracted into placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalQuery {
    pub skeleton: QuerySkeleton,
    /// Relation IRI per `PROP_k`.
    pub relation_iris: Vec<String>,
}

/// Replaces entities by `ENT_k` (position in `entity_order`), relations by
/// `PROP_k` (first occurrence), and renumbers variables by first occurrence.
pub fn canonicalize(sparql_text: &str, entity_order: &[String]) -> Result<CanonicalQuery, QueryError> {
    let q = SparqlQuery::parse(sparql_text)?;
    let mut vars: HashMap<String, u8> = HashMap::new();
    let var_of = |name: &str, vars: &mut HashMap<String, u8>| -> Result<u8, QueryError> {
        if let Some(&k) = vars.get(name) {
            return Ok(k);
        }
        let k = vars.len();
        if k >= super::skeleton::MAX_VARS {
            return Err(QueryError::InvalidSkeleton("too many variables".into()));
        }
        vars.insert(name.to_string(), k as u8);
        Ok(k as u8)
    };
    let projection = match &q.projection {
        Some(v) => Some(var_of(v, &mut vars)?),
        None => None,
    };
    let mut relation_iris: Vec<String> = Vec::new();
    let mut patterns = Vec::new();
    let term = |t: &SparqlTerm, vars: &mut HashMap<String, u8>| -> Result<Term, QueryError> {
        match t {
            SparqlTerm::Var(v) => Ok(Term::Var(var_of(v, vars)?)),
            SparqlTerm::Iri(iri) => {
                let k = entity_order
                    .iter()
                    .position(|e| e == iri)
                    .ok_or_else(|| QueryError::UnknownEntityOrder(iri.clone()))?;
                if k >= super::skeleton::MAX_ENTS {
                    return Err(QueryError::InvalidSkeleton("too many entities".into()));
                }
                Ok(Term::Ent(k as u8))
            }
        }
    };
    for p in &q.patterns {
        let subject = term(&p.subject, &mut vars)?;
        let prop = match relation_iris.iter().position(|r| r == &p.predicate) {
            Some(k) => k,
            None => {
                relation_iris.push(p.predicate.clone());
                relation_iris.len() - 1
            }
        };
        if prop >= super::skeleton::MAX_PROPS {
            return Err(QueryError::InvalidSkeleton("too many relation placeholders".into()));
        }
        let object = term(&p.object, &mut vars)?;
        patterns.push(SkeletonPattern {
            subject,
            prop: prop as u8,
            object,
        });
    }
    let skeleton = QuerySkeleton {
        form: q.form,
        projection,
        patterns,
    };
    skeleton.validate()?;
    Ok(CanonicalQuery {
        skeleton,
        relation_iris,
    })
}

/// Canonical gold target with the surface form of every relation placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSketch {
    pub skeleton: QuerySkeleton,
    pub relation_iris: Vec<String>,
    pub surfaces: Vec<String>,
}

pub fn canonicalize_gold(
    sparql_text: &str,
    entity_order: &[String],
    catalog: &RelationCatalog,
) -> Result<GoldSketch, QueryError> {
    let c = canonicalize(sparql_text, entity_order)?;
    let surfaces = c
        .relation_iris
        .iter()
        .map(|iri| {
            catalog
                .relation_by_iri(iri)
                .map(|r| catalog.surface(catalog.surface_of(r)).to_string())
                .ok_or_else(|| QueryError::UnknownRelation(iri.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok(GoldSketch {
        skeleton: c.skeleton,
        relation_iris: c.relation_iris,
        surfaces,
    })
}

/// Binds a subset-SPARQL query to KG ids. Returns `None` when it mentions an
/// IRI the graph does not contain (such a query has no solutions).
pub fn ground_sparql(sparql_text: &str, kg: &KnowledgeGraph) -> Result<Option<GroundedQuery>, QueryError> {
    let q = SparqlQuery::parse(sparql_text)?;
    let order = q.entity_iris();
    let c = canonicalize(sparql_text, &order)?;
    let Some(entities) = order.iter().map(|i| kg.entity_id(i)).collect::<Option<Vec<_>>>() else {
        return Ok(None);
    };
    let Some(relations) = c
        .relation_iris
        .iter()
        .map(|i| kg.relation_id(i))
        .collect::<Option<Vec<_>>>()
    else {
        return Ok(None);
    };
    let surfaces = c.relation_iris.clone();
    GroundedQuery::bind(&c.skeleton, &entities, &relations, surfaces, 1.0).map(Some)
}

fn print_term(t: GroundedTerm, kg: &KnowledgeGraph) -> String {
    match t {
        GroundedTerm::Var(k) => format!("?var{k}"),
        GroundedTerm::Entity(e) => format!("<{}>", kg.entity(e).iri),
    }
}

/// Renders an executable subset-SPARQL string.
pub fn print_sparql(q: &GroundedQuery, kg: &KnowledgeGraph) -> String {
    let head = match (q.form, q.projection) {
        (Form::Ask, _) => "ASK WHERE {".to_string(),
        (Form::Count, Some(v)) => format!("SELECT COUNT(?var{v}) WHERE {{"),
        (_, v) => format!("SELECT ?var{} WHERE {{", v.unwrap_or(0)),
    };
    let mut out = head;
    for p in &q.patterns {
        out.push_str(&format!(
            " {} <{}> {} .",
            print_term(p.subject, kg),
            kg.relation_iri(p.predicate),
            print_term(p.object, kg)
        ));
    }
    out.push_str(" }");
    out
}
