use std::fmt;

use serde::{Deserialize, Serialize};

use super::QueryError;

pub const MAX_PATTERNS: usize = 4;
pub const MAX_VARS: usize = 4;
pub const MAX_ENTS: usize = 3;
pub const MAX_PROPS: usize = 4;

/// The closed decoder vocabulary: operators, variables, entity and relation
/// placeholders. Its size does not depend on any knowledge graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkeletonToken {
    Bos,
    Eos,
    Select,
    Ask,
    Count,
    Open,
    Close,
    Dot,
    FilterReserved,
    Var(u8),
    Ent(u8),
    Prop(u8),
}

const OPERATORS: [SkeletonToken; 9] = [
    SkeletonToken::Bos,
    SkeletonToken::Eos,
    SkeletonToken::Select,
    SkeletonToken::Ask,
    SkeletonToken::Count,
    SkeletonToken::Open,
    SkeletonToken::Close,
    SkeletonToken::Dot,
    SkeletonToken::FilterReserved,
];

pub const VOCAB_SIZE: usize = OPERATORS.len() + MAX_VARS + MAX_ENTS + MAX_PROPS;

impl SkeletonToken {
    pub fn index(self) -> usize {
        use SkeletonToken::*;
        match self {
            Var(k) => OPERATORS.len() + k as usize,
            Ent(k) => OPERATORS.len() + MAX_VARS + k as usize,
            Prop(k) => OPERATORS.len() + MAX_VARS + MAX_ENTS + k as usize,
            op => OPERATORS.iter().position(|&o| o == op).expect("operator"),
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        let ops = OPERATORS.len();
        if i < ops {
            Some(OPERATORS[i])
        } else if i < ops + MAX_VARS {
            Some(Self::Var((i - ops) as u8))
        } else if i < ops + MAX_VARS + MAX_ENTS {
            Some(Self::Ent((i - ops - MAX_VARS) as u8))
        } else if i < VOCAB_SIZE {
            Some(Self::Prop((i - ops - MAX_VARS - MAX_ENTS) as u8))
        } else {
            None
        }
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..VOCAB_SIZE).map(|i| Self::from_index(i).expect("in range"))
    }
}

impl fmt::Display for SkeletonToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SkeletonToken::*;
        match self {
            Bos => f.write_str("BOS"),
            Eos => f.write_str("EOS"),
            Select => f.write_str("SELECT"),
            Ask => f.write_str("ASK"),
            Count => f.write_str("COUNT"),
            Open => f.write_str("OPEN"),
            Close => f.write_str("CLOSE"),
            Dot => f.write_str("DOT"),
            FilterReserved => f.write_str("FILTER"),
            Var(k) => write!(f, "VAR{k}"),
            Ent(k) => write!(f, "ENT{k}"),
            Prop(k) => write!(f, "PROP{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Form {
    Select,
    Ask,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(u8),
    Ent(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkeletonPattern {
    pub subject: Term,
    pub prop: u8,
    pub object: Term,
}

/// A KG-agnostic query: operator, projection and triple patterns over
/// placeholder symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuerySkeleton {
    pub form: Form,
    pub projection: Option<u8>,
    pub patterns: Vec<SkeletonPattern>,
}

fn term_token(t: Term) -> SkeletonToken {
    match t {
        Term::Var(k) => SkeletonToken::Var(k),
        Term::Ent(k) => SkeletonToken::Ent(k),
    }
}

impl QuerySkeleton {
    pub fn prop_count(&self) -> usize {
        self.patterns.iter().map(|p| p.prop as usize + 1).max().unwrap_or(0)
    }

    pub fn ent_count(&self) -> usize {
        self.patterns
            .iter()
            .flat_map(|p| [p.subject, p.object])
            .filter_map(|t| match t {
                Term::Ent(k) => Some(k as usize + 1),
                Term::Var(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn var_count(&self) -> usize {
        self.patterns
            .iter()
            .flat_map(|p| [p.subject, p.object])
            .filter_map(|t| match t {
                Term::Var(k) => Some(k as usize + 1),
                Term::Ent(_) => None,
            })
            .chain(self.projection.map(|v| v as usize + 1))
            .max()
            .unwrap_or(0)
    }

    /// `BOS form [VAR] OPEN (s p o DOT)* CLOSE EOS`
    pub fn serialize(&self) -> Vec<SkeletonToken> {
        let mut out = vec![SkeletonToken::Bos];
        out.push(match self.form {
            Form::Select => SkeletonToken::Select,
            Form::Ask => SkeletonToken::Ask,
            Form::Count => SkeletonToken::Count,
        });
        if let Some(v) = self.projection {
            out.push(SkeletonToken::Var(v));
        }
        out.push(SkeletonToken::Open);
        for p in &self.patterns {
            out.push(term_token(p.subject));
            out.push(SkeletonToken::Prop(p.prop));
            out.push(term_token(p.object));
            out.push(SkeletonToken::Dot);
        }
        out.push(SkeletonToken::Close);
        out.push(SkeletonToken::Eos);
        out
    }

    /// Inverse of [`serialize`](Self::serialize); validates every skeleton
    /// invariant.
    pub fn parse(tokens: &[SkeletonToken]) -> Result<Self, QueryError> {
        use SkeletonToken as T;
        let bad = |r: &str| QueryError::InvalidSkeleton(r.to_string());
        let mut it = tokens.iter().copied().peekable();
        if it.next() != Some(T::Bos) {
            return Err(bad("missing BOS"));
        }
        let form = match it.next() {
            Some(T::Select) => Form::Select,
            Some(T::Ask) => Form::Ask,
            Some(T::Count) => Form::Count,
            _ => return Err(bad("expected query form")),
        };
        let mut numbering = Numbering::default();
        let projection = match form {
            Form::Ask => None,
            _ => match it.next() {
                Some(T::Var(k)) => {
                    numbering.var(k)?;
                    Some(k)
                }
                _ => return Err(bad("expected projection variable")),
            },
        };
        if it.next() != Some(T::Open) {
            return Err(bad("expected OPEN"));
        }
        let mut patterns = Vec::new();
        loop {
            match it.next() {
                Some(T::Close) => break,
                Some(first) => {
                    let subject = numbering.term(first)?;
                    let prop = match it.next() {
                        Some(T::Prop(k)) => {
                            numbering.prop(k)?;
                            k
                        }
                        _ => return Err(bad("expected relation placeholder")),
                    };
                    let object = match it.next() {
                        Some(t) => numbering.term(t)?,
                        None => return Err(bad("truncated pattern")),
                    };
                    if it.next() != Some(T::Dot) {
                        return Err(bad("expected DOT"));
                    }
                    patterns.push(SkeletonPattern {
                        subject,
                        prop,
                        object,
                    });
                    if patterns.len() > MAX_PATTERNS {
                        return Err(bad("too many patterns"));
                    }
                }
                None => return Err(bad("missing CLOSE")),
            }
        }
        if it.next() != Some(T::Eos) {
            return Err(bad("missing EOS"));
        }
        if it.next().is_some() {
            return Err(bad("tokens after EOS"));
        }
        let sk = QuerySkeleton {
            form,
            projection,
            patterns,
        };
        sk.validate()?;
        Ok(sk)
    }

    /// Checks the structural invariants shared by parsed and constructed
    /// skeletons.
    pub fn validate(&self) -> Result<(), QueryError> {
        let bad = |r: &str| Err(QueryError::InvalidSkeleton(r.to_string()));
        if self.patterns.is_empty() {
            return bad("no patterns");
        }
        if self.patterns.len() > MAX_PATTERNS {
            return bad("too many patterns");
        }
        if (self.form == Form::Ask) != self.projection.is_none() {
            return bad("projection does not match form");
        }
        // first-occurrence numbering for variables and props
        let mut numbering = Numbering::default();
        if let Some(v) = self.projection {
            numbering.var(v)?;
        }
        let mut ents = [false; MAX_ENTS];
        for p in &self.patterns {
            for t in [p.subject, p.object] {
                match t {
                    Term::Var(k) => numbering.var(k)?,
                    Term::Ent(k) => {
                        if k as usize >= MAX_ENTS {
                            return bad("too many entities");
                        }
                        ents[k as usize] = true;
                    }
                }
            }
            numbering.prop(p.prop)?;
        }
        let used = ents.iter().filter(|&&e| e).count();
        if ents[..used].iter().any(|&e| !e) {
            return bad("gapped placeholders");
        }
        if let Some(v) = self.projection {
            let bound = self
                .patterns
                .iter()
                .any(|p| p.subject == Term::Var(v) || p.object == Term::Var(v));
            if !bound {
                return bad("projection variable not bound");
            }
        }
        for (i, p) in self.patterns.iter().enumerate().skip(1) {
            let connected = self.patterns[..i].iter().any(|q| {
                [q.subject, q.object]
                    .iter()
                    .any(|t| *t == p.subject || *t == p.object)
            });
            if !connected {
                return bad("disconnected pattern graph");
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.serialize()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Default)]
struct Numbering {
    next_var: u8,
    next_prop: u8,
}

impl Numbering {
    fn var(&mut self, k: u8) -> Result<(), QueryError> {
        if k as usize >= MAX_VARS {
            return Err(QueryError::InvalidSkeleton("too many variables".into()));
        }
        if k > self.next_var {
            return Err(QueryError::InvalidSkeleton("gapped placeholders".into()));
        }
        if k == self.next_var {
            self.next_var += 1;
        }
        Ok(())
    }

    fn prop(&mut self, k: u8) -> Result<(), QueryError> {
        if k as usize >= MAX_PROPS {
            return Err(QueryError::InvalidSkeleton("too many relation placeholders".into()));
        }
        if k > self.next_prop {
            return Err(QueryError::InvalidSkeleton("gapped placeholders".into()));
        }
        if k == self.next_prop {
            self.next_prop += 1;
        }
        Ok(())
    }

    fn term(&mut self, t: SkeletonToken) -> Result<Term, QueryError> {
        match t {
            SkeletonToken::Var(k) => {
                self.var(k)?;
                Ok(Term::Var(k))
            }
            SkeletonToken::Ent(k) => Ok(Term::Ent(k)),
            other => Err(QueryError::InvalidSkeleton(format!("unexpected {other} in term position"))),
        }
    }
}
