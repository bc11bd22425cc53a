use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::data::{Category, DatasetRecord};
use crate::grounder::Grounder;
use crate::kg::KnowledgeGraph;
use crate::model::Model;
use crate::text::RelationCatalog;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionScore {
    pub question: String,
    pub category: Category,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hit: f64,
    /// Set when the answer was flagged empty or no query could be grounded;
    /// such questions score zero.
    pub no_answer: bool,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
}

/// Precision, recall, F1 and Hits@1 of one prediction.
///
/// With `exact` (ASK and COUNT) all four are 1 iff the single value matches.
/// Otherwise the prediction is an answer set; Hits@1 is 1 iff it meets the
/// gold set. An empty prediction scores zero.
pub fn score_question(predicted: &[String], gold: &[String], exact: bool) -> (f64, f64, f64, f64) {
    if exact {
        let v = if !predicted.is_empty() && predicted == gold { 1.0 } else { 0.0 };
        return (v, v, v, v);
    }
    let p_set: BTreeSet<&String> = predicted.iter().collect();
    let g_set: BTreeSet<&String> = gold.iter().collect();
    if p_set.is_empty() || g_set.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let inter = p_set.intersection(&g_set).count() as f64;
    let p = inter / p_set.len() as f64;
    let r = inter / g_set.len() as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let hit = if inter > 0.0 { 1.0 } else { 0.0 };
    (p, r, f1, hit)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hits_at_1: f64,
}

impl Summary {
    fn of<'a>(scores: impl Iterator<Item = &'a QuestionScore>) -> Self {
        let mut s = Summary::default();
        for q in scores {
            s.count += 1;
            s.precision += q.precision;
            s.recall += q.recall;
            s.f1 += q.f1;
            s.hits_at_1 += q.hit;
        }
        if s.count > 0 {
            let n = s.count as f64;
            s.precision /= n;
            s.recall /= n;
            s.f1 /= n;
            s.hits_at_1 /= n;
        }
        s
    }
}

/// Macro-averaged metrics over questions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hits_at_1: f64,
    pub per_category: BTreeMap<String, Summary>,
    pub per_question: Vec<QuestionScore>,
}

impl Metrics {
    pub fn from_scores(per_question: Vec<QuestionScore>) -> Self {
        let all = Summary::of(per_question.iter());
        let mut per_category = BTreeMap::new();
        for c in Category::ALL {
            let s = Summary::of(per_question.iter().filter(|q| q.category == c));
            if s.count > 0 {
                per_category.insert(c.name().to_string(), s);
            }
        }
        Self {
            count: all.count,
            precision: all.precision,
            recall: all.recall,
            f1: all.f1,
            hits_at_1: all.hits_at_1,
            per_category,
            per_question,
        }
    }

    pub fn category(&self, c: Category) -> Option<&Summary> {
        self.per_category.get(c.name())
    }

    /// `P=… R=… F1=… Hits@1=… n=…` with four decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "P={:.4} R={:.4} F1={:.4} Hits@1={:.4} n={}",
            self.precision, self.recall, self.f1, self.hits_at_1, self.count
        )
    }
}

/// Answers every record with the full pipeline and scores it against the
/// gold answers.
pub fn evaluate(model: &Model, kg: &KnowledgeGraph, catalog: &RelationCatalog, records: &[DatasetRecord]) -> Metrics {
    let grounder = Grounder::new(model, kg, catalog);
    let scores = records
        .iter()
        .map(|r| {
            let answer = grounder.answer(model, &r.question);
            let predicted = answer.answer_strings(kg);
            let category = r.category();
            let exact = matches!(category, Category::Ask | Category::Count);
            let (precision, recall, f1, hit) = score_question(&predicted, &r.answers, exact);
            QuestionScore {
                question: r.question.clone(),
                category,
                precision,
                recall,
                f1,
                hit,
                no_answer: answer.flagged_empty || answer.result.is_none(),
                predicted,
                gold: r.answers.clone(),
            }
        })
        .collect();
    Metrics::from_scores(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn set_scores() {
        assert_eq!(score_question(&s(&["a", "b"]), &s(&["a", "b"]), false), (1.0, 1.0, 1.0, 1.0));
        let (p, r, f1, hit) = score_question(&s(&["a"]), &s(&["a", "b"]), false);
        assert_eq!((p, r, hit), (1.0, 0.5, 1.0));
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(score_question(&[], &s(&["a"]), false), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(score_question(&s(&["c"]), &s(&["a"]), false), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn exact_scores() {
        assert_eq!(score_question(&s(&["true"]), &s(&["true"]), true), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(score_question(&s(&["3"]), &s(&["4"]), true), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(score_question(&[], &s(&["false"]), true), (0.0, 0.0, 0.0, 0.0));
    }
}
