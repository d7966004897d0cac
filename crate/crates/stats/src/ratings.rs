//! Aggregating per-item Likert ratings of two competing systems.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::mann_whitney::{mann_whitney_u, MwError, MwMode};

pub const QUESTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rating {
    Score(u8),
    NotApplicable,
}

impl Rating {
    pub fn score(self) -> Option<f64> {
        match self {
            Rating::Score(s) => Some(f64::from(s)),
            Rating::NotApplicable => None,
        }
    }
}

/// Question numbers are 1-based.
pub fn allows_not_applicable(question: usize) -> bool {
    question >= 3
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterScores {
    pub rater: String,
    pub question: usize,
    pub a: Rating,
    pub b: Rating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingItem {
    pub id: String,
    pub context: String,
    pub doctor: String,
    pub response_a: String,
    pub response_b: String,
    /// Engine behind response A, then response B.
    pub systems: [String; 2],
    pub ratings: Vec<RaterScores>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingsError {
    #[error("no rating items")]
    Empty,
    #[error("no valid ratings for system {system} on question {question}")]
    AllNA { question: usize, system: String },
    #[error("item {item}: question {question} does not allow N/A")]
    NotApplicableNotAllowed { item: String, question: usize },
    #[error("item {item}: score {score} outside 1-5")]
    OutOfRange { item: String, score: u8 },
    #[error("item {item}: question {question} outside 1-{QUESTIONS}")]
    BadQuestion { item: String, question: usize },
    #[error("expected two systems across items, found {0:?}")]
    Systems(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub system: String,
    pub mean: f64,
    pub median: f64,
    /// Per-item averages that went into the mean.
    pub item_averages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionSummary {
    pub question: usize,
    pub first: SystemSummary,
    pub second: SystemSummary,
    pub diff_mean: f64,
    pub diff_median: f64,
}

impl QuestionSummary {
    /// Two-sided test on the per-item averages.
    pub fn mann_whitney_p(&self) -> Result<f64, MwError> {
        let (x, y) = (&self.first.item_averages, &self.second.item_averages);
        let mode = if x.len() + y.len() <= crate::mann_whitney::EXACT_MAX { MwMode::Exact } else { MwMode::NormalApprox };
        mann_whitney_u(x, y, mode).map(|r| r.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingSummary {
    pub systems: [String; 2],
    pub questions: Vec<QuestionSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check(items: &[RatingItem]) -> Result<(), RatingsError> {
    for item in items {
        for r in &item.ratings {
            if !(1..=QUESTIONS).contains(&r.question) {
                return Err(RatingsError::BadQuestion { item: item.id.clone(), question: r.question });
            }
            for rating in [r.a, r.b] {
                match rating {
                    Rating::NotApplicable if !allows_not_applicable(r.question) => {
                        return Err(RatingsError::NotApplicableNotAllowed { item: item.id.clone(), question: r.question })
                    }
                    Rating::Score(s) if !(1..=5).contains(&s) => {
                        return Err(RatingsError::OutOfRange { item: item.id.clone(), score: s })
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(())
}

/// Systems in order of first appearance.
fn system_order(items: &[RatingItem]) -> Vec<String> {
    let mut seen = Vec::new();
    for item in items {
        for s in &item.systems {
            if !seen.contains(s) {
                seen.push(s.clone());
            }
        }
    }
    seen
}

/// Summarizes with the two systems ordered as they first appear in `items`.
pub fn summarize_ratings(items: &[RatingItem]) -> Result<RatingSummary, RatingsError> {
    let order = system_order(items);
    match order.as_slice() {
        [a, b] => summarize_ratings_for(items, [a.clone(), b.clone()]),
        _ if items.is_empty() => Err(RatingsError::Empty),
        _ => Err(RatingsError::Systems(order)),
    }
}

/// Diff rows are `systems[1]` minus `systems[0]`.
pub fn summarize_ratings_for(items: &[RatingItem], systems: [String; 2]) -> Result<RatingSummary, RatingsError> {
    if items.is_empty() {
        return Err(RatingsError::Empty);
    }
    check(items)?;
    let present: BTreeSet<&String> = items.iter().flat_map(|i| i.systems.iter()).collect();
    if present.len() != 2 || !systems.iter().all(|s| present.contains(s)) {
        return Err(RatingsError::Systems(present.into_iter().cloned().collect()));
    }
    let mut questions = Vec::with_capacity(QUESTIONS);
    for q in 1..=QUESTIONS {
        let mut per_system: Vec<SystemSummary> = Vec::with_capacity(2);
        for system in &systems {
            let mut averages = Vec::new();
            for item in items {
                let slot = if &item.systems[0] == system { 0 } else if &item.systems[1] == system { 1 } else { continue };
                let scores: Vec<f64> = item
                    .ratings
                    .iter()
                    .filter(|r| r.question == q)
                    .filter_map(|r| if slot == 0 { r.a.score() } else { r.b.score() })
                    .collect();
                if !scores.is_empty() {
                    averages.push(mean(&scores));
                }
            }
            if averages.is_empty() {
                return Err(RatingsError::AllNA { question: q, system: system.clone() });
            }
            per_system.push(SystemSummary {
                system: system.clone(),
                mean: mean(&averages),
                median: median(&averages),
                item_averages: averages,
            });
        }
        let second = per_system.pop().expect("two systems");
        let first = per_system.pop().expect("two systems");
        questions.push(QuestionSummary {
            question: q,
            diff_mean: second.mean - first.mean,
            diff_median: second.median - first.median,
            first,
            second,
        });
    }
    Ok(RatingSummary { systems, questions })
}

impl RatingSummary {
    pub fn render(&self) -> String {
        let mut out = String::from("                 Q1     Q2     Q3     Q4\n");
        let row = |label: String, f: &dyn Fn(&QuestionSummary) -> f64, signed: bool| {
            let mut line = format!("{label:<14}");
            for q in &self.questions {
                let v = f(q);
                if signed {
                    line.push_str(&format!(" {v:>+6.2}"));
                } else {
                    line.push_str(&format!(" {v:>6.2}"));
                }
            }
            line.push('\n');
            line
        };
        let [a, b] = &self.systems;
        out.push_str(&row(format!("{a} mean"), &|q| q.first.mean, false));
        out.push_str(&row(format!("{b} mean"), &|q| q.second.mean, false));
        out.push_str(&row("Diff mean".into(), &|q| q.diff_mean, true));
        out.push_str(&row(format!("{a} median"), &|q| q.first.median, false));
        out.push_str(&row(format!("{b} median"), &|q| q.second.median, false));
        out.push_str(&row("Diff median".into(), &|q| q.diff_median, true));
        let mut line = format!("{:<14}", "MWU p");
        for q in &self.questions {
            match q.mann_whitney_p() {
                Ok(p) => line.push_str(&format!(" {p:>6.3}")),
                Err(_) => line.push_str(&format!(" {:>6}", "n/a")),
            }
        }
        out.push_str(&line);
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, systems: [&str; 2], ratings: &[(usize, Rating, Rating)]) -> RatingItem {
        RatingItem {
            id: id.into(),
            context: String::new(),
            doctor: String::new(),
            response_a: String::new(),
            response_b: String::new(),
            systems: systems.map(String::from),
            ratings: ratings
                .iter()
                .enumerate()
                .map(|(i, &(question, a, b))| RaterScores { rater: format!("r{i}"), question, a, b })
                .collect(),
        }
    }

    fn full(id: &str, systems: [&str; 2], a: u8, b: u8) -> RatingItem {
        let s = |v| Rating::Score(v);
        item(id, systems, &(1..=4).map(|q| (q, s(a), s(b))).collect::<Vec<_>>())
    }

    #[test]
    fn single_item_single_rater() {
        let s = summarize_ratings(&[full("1", ["x", "y"], 3, 5)]).unwrap();
        for q in &s.questions {
            assert_eq!((q.first.mean, q.first.median, q.second.mean, q.second.median), (3.0, 3.0, 5.0, 5.0));
            assert_eq!(q.diff_mean, 2.0);
        }
    }

    #[test]
    fn assignment_is_respected() {
        let s = summarize_ratings_for(&[full("1", ["x", "y"], 2, 4), full("2", ["y", "x"], 5, 1)], ["x".into(), "y".into()])
            .unwrap();
        assert_eq!(s.questions[0].first.mean, 1.5);
        assert_eq!(s.questions[0].second.mean, 4.5);
    }

    #[test]
    fn na_rules() {
        let na = Rating::NotApplicable;
        let bad = item("1", ["x", "y"], &[(2, na, Rating::Score(3))]);
        assert_eq!(
            summarize_ratings(&[bad]),
            Err(RatingsError::NotApplicableNotAllowed { item: "1".into(), question: 2 })
        );
        let mut it = full("1", ["x", "y"], 3, 3);
        for r in &mut it.ratings {
            if r.question == 4 {
                r.a = na;
            }
        }
        assert_eq!(summarize_ratings(&[it]), Err(RatingsError::AllNA { question: 4, system: "x".into() }));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
