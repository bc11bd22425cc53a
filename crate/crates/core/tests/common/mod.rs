//! Random generators and brute-force oracles shared by the property suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use kbqa::executor::QueryResult;
use kbqa::kg::{EntityId, KgBuilder, KnowledgeGraph, RelationId, Triple, TriplePattern};
use kbqa::query::skeleton::{Form, QuerySkeleton, SkeletonPattern, Term, MAX_ENTS, MAX_PATTERNS, MAX_PROPS, MAX_VARS};
use kbqa::query::{GroundedQuery, GroundedTerm};
use rand::seq::SliceRandom;
use rand::Rng;

fn pick(rng: &mut impl Rng, next: &mut u8, max: usize) -> u8 {
    let hi = if (*next as usize) < max { *next } else { *next - 1 };
    let k = rng.gen_range(0..=hi);
    if k == *next {
        *next += 1;
    }
    k
}

fn fresh(rng: &mut impl Rng, vars: &mut u8, ents: &mut u8) -> Term {
    if rng.gen_bool(0.6) {
        Term::Var(pick(rng, vars, MAX_VARS))
    } else {
        Term::Ent(pick(rng, ents, MAX_ENTS))
    }
}

/// A structurally valid skeleton: connected patterns, first-occurrence
/// numbering, projection on VAR0.
pub fn random_skeleton<R: Rng>(rng: &mut R) -> QuerySkeleton {
    let n = rng.gen_range(1..=MAX_PATTERNS);
    let (mut vars, mut props, mut ents) = (0u8, 0u8, 0u8);
    let mut seen: Vec<Term> = Vec::new();
    let mut patterns: Vec<SkeletonPattern> = Vec::new();
    for i in 0..n {
        let (subject, object) = if i == 0 {
            let s = fresh(rng, &mut vars, &mut ents);
            let o = fresh(rng, &mut vars, &mut ents);
            (s, o)
        } else {
            let anchor = *seen.choose(rng).unwrap();
            let other = if rng.gen_bool(0.3) {
                *seen.choose(rng).unwrap()
            } else {
                fresh(rng, &mut vars, &mut ents)
            };
            if rng.gen_bool(0.5) {
                (anchor, other)
            } else {
                (other, anchor)
            }
        };
        let prop = pick(rng, &mut props, MAX_PROPS);
        seen.extend([subject, object]);
        patterns.push(SkeletonPattern { subject, prop, object });
    }
    let form = if vars == 0 {
        Form::Ask
    } else {
        *[Form::Select, Form::Ask, Form::Count].choose(rng).unwrap()
    };
    let projection = (form != Form::Ask).then_some(0);
    QuerySkeleton {
        form,
        projection,
        patterns,
    }
}

pub fn random_kg<R: Rng>(rng: &mut R, max_triples: usize) -> KnowledgeGraph {
    let n_ent = rng.gen_range(2..=12);
    let n_rel = rng.gen_range(1..=4);
    let n_tri = rng.gen_range(1..=max_triples);
    let mut b = KgBuilder::new();
    for e in 0..n_ent {
        b.entity(&format!("http://t/e{e}"), &format!("entity {e}"));
    }
    for _ in 0..n_tri {
        let s = rng.gen_range(0..n_ent);
        let p = rng.gen_range(0..n_rel);
        let o = rng.gen_range(0..n_ent);
        b.triple(&format!("http://t/e{s}"), &format!("http://t/r{p}"), &format!("http://t/e{o}"));
    }
    b.build()
}

/// A random skeleton bound to random entities and relations of `kg`.
pub fn random_query<R: Rng>(rng: &mut R, kg: &KnowledgeGraph) -> GroundedQuery {
    let sk = random_skeleton(rng);
    let ents: Vec<EntityId> = (0..sk.ent_count())
        .map(|_| EntityId(rng.gen_range(0..kg.entity_count()) as u32))
        .collect();
    let rels: Vec<RelationId> = (0..sk.prop_count())
        .map(|_| RelationId(rng.gen_range(0..kg.relation_count()) as u32))
        .collect();
    GroundedQuery::bind(&sk, &ents, &rels, vec![], 1.0).unwrap()
}

/// Enumerates every assignment of every variable and checks each pattern
/// against the raw triple list.
pub fn oracle(kg: &KnowledgeGraph, q: &GroundedQuery) -> QueryResult {
    let triples: BTreeSet<Triple> = kg.triples().iter().copied().collect();
    let n_vars = q
        .patterns
        .iter()
        .flat_map(|p| [p.subject, p.object])
        .filter_map(|t| match t {
            GroundedTerm::Var(v) => Some(v as usize + 1),
            GroundedTerm::Entity(_) => None,
        })
        .max()
        .unwrap_or(0);
    let n_ent = kg.entity_count();
    let mut found = false;
    let mut out = BTreeSet::new();
    let total = n_ent.pow(n_vars as u32);
    for code in 0..total {
        let mut assign = [EntityId(0); MAX_VARS];
        let mut c = code;
        for slot in assign.iter_mut().take(n_vars) {
            *slot = EntityId((c % n_ent) as u32);
            c /= n_ent;
        }
        let val = |t: GroundedTerm| match t {
            GroundedTerm::Var(v) => assign[v as usize],
            GroundedTerm::Entity(e) => e,
        };
        let ok = q.patterns.iter().all(|p| {
            triples.contains(&Triple {
                subject: val(p.subject),
                predicate: p.predicate,
                object: val(p.object),
            })
        });
        if ok {
            found = true;
            if let Some(v) = q.projection {
                out.insert(assign[v as usize]);
            }
        }
    }
    match q.form {
        Form::Ask => QueryResult::Boolean(found),
        Form::Select => QueryResult::Entities(out.into_iter().collect()),
        Form::Count => QueryResult::Count(out.len()),
    }
}

pub fn brute_match(kg: &KnowledgeGraph, pat: &TriplePattern) -> Vec<Triple> {
    let mut v: Vec<Triple> = kg.triples().iter().filter(|t| pat.matches(t)).copied().collect();
    v.sort();
    v
}

const NAMES: [&str; 8] = ["x", "film", "uri", "a1", "person", "m_2", "answer", "y"];

/// Renders `sk` as SPARQL with randomly chosen variable names, keyword case
/// and spacing. Entity `k` is `http://t/e{k}`, relation `k` is `http://t/r{k}`.
pub fn render_sparql<R: Rng>(rng: &mut R, sk: &QuerySkeleton) -> String {
    let mut names = NAMES.to_vec();
    names.shuffle(rng);
    let sp = |rng: &mut R| [" ", "  ", "\n", "\t "][rng.gen_range(0..4)];
    let kw = |rng: &mut R, w: &str| if rng.gen_bool(0.5) { w.to_lowercase() } else { w.to_string() };
    let term = |t: Term| match t {
        Term::Var(k) => format!("?{}", names[k as usize]),
        Term::Ent(k) => format!("<http://t/e{k}>"),
    };
    let mut s = match (sk.form, sk.projection) {
        (Form::Ask, _) => kw(rng, "ASK"),
        (Form::Count, Some(v)) => format!("{}{}{}(?{})", kw(rng, "SELECT"), sp(rng), kw(rng, "COUNT"), names[v as usize]),
        (_, v) => format!("{}{}?{}", kw(rng, "SELECT"), sp(rng), names[v.unwrap_or(0) as usize]),
    };
    s.push_str(sp(rng));
    s.push_str(&kw(rng, "WHERE"));
    s.push_str(if rng.gen_bool(0.5) { "{" } else { " { " });
    for p in &sk.patterns {
        s.push_str(&format!(
            "{}{}<http://t/r{}>{}{}{}.",
            term(p.subject),
            sp(rng),
            p.prop,
            sp(rng),
            term(p.object),
            if rng.gen_bool(0.5) { "" } else { " " }
        ));
        s.push_str(sp(rng));
    }
    s.push('}');
    s
}

pub fn entity_order(sk: &QuerySkeleton) -> Vec<String> {
    (0..sk.ent_count()).map(|k| format!("http://t/e{k}")).collect()
}
