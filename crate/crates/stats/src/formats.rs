//! Delimited input files. Comma or tab separated, with a header row.
//!
//! Annotations: `turn,annotator,gist,response,asr`
//!   gist is correct|none|incorrect, response is
//!   appropriate|clarification|inappropriate, asr is 0|1.
//!
//! Ratings: `item,system_a,system_b,rater,question,a,b` plus optional
//!   `context,doctor,response_a,response_b` columns. Scores are 1-5 or NA.
//!
//! Balance items: `id`, then `quality*` columns (0|1) and any number of text
//!   columns whose character lengths are balanced.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::annotation::{GistLabel, ResponseLabel, TurnAnnotation};
use crate::balance::BalanceItem;
use crate::ratings::{RaterScores, Rating, RatingItem};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Row { file: String, line: u64, message: String },
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    let first = text.lines().next().unwrap_or("");
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes())
}

fn row_error(file: &str, err: csv::Error) -> FormatError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    let message = match err.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => err.to_string(),
    };
    FormatError::Row { file: file.into(), line, message }
}

pub fn read_file(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { file: path.display().to_string(), source })
}

#[derive(Deserialize)]
struct AnnotationRow {
    turn: String,
    annotator: String,
    gist: GistLabel,
    response: ResponseLabel,
    asr: u8,
}

/// Turn ids in first-seen order, and each annotator's labels in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub turns: Vec<String>,
    pub annotators: BTreeMap<String, Vec<TurnAnnotation>>,
}

pub fn parse_annotations(file: &str, text: &str) -> Result<AnnotationSet, FormatError> {
    let mut turns: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, BTreeMap<String, (u64, TurnAnnotation)>> = BTreeMap::new();
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| row_error(file, e))?.clone();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| row_error(file, e))? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: AnnotationRow = record
            .deserialize(Some(&headers))
            .map_err(|e| FormatError::Row { file: file.into(), line, message: e.to_string() })?;
        if row.asr > 1 {
            return Err(FormatError::Row { file: file.into(), line, message: format!("asr must be 0 or 1, got {}", row.asr) });
        }
        if !turns.contains(&row.turn) {
            turns.push(row.turn.clone());
        }
        let ann = TurnAnnotation::new(row.gist, row.response, row.asr == 1);
        if rows.entry(row.annotator.clone()).or_default().insert(row.turn.clone(), (line, ann)).is_some() {
            return Err(FormatError::Row {
                file: file.into(),
                line,
                message: format!("turn {} labelled twice by {}", row.turn, row.annotator),
            });
        }
    }
    let mut annotators = BTreeMap::new();
    for (name, labelled) in rows {
        let mut list = Vec::with_capacity(turns.len());
        for t in &turns {
            match labelled.get(t) {
                Some((_, a)) => list.push(*a),
                None => {
                    return Err(FormatError::Row {
                        file: file.into(),
                        line: 0,
                        message: format!("annotator {name} has no label for turn {t}"),
                    })
                }
            }
        }
        annotators.insert(name, list);
    }
    Ok(AnnotationSet { turns, annotators })
}

fn parse_rating(s: &str) -> Result<Rating, String> {
    if s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("n/a") {
        return Ok(Rating::NotApplicable);
    }
    s.parse::<u8>().map(Rating::Score).map_err(|_| format!("bad rating {s:?}"))
}

#[derive(Deserialize)]
struct RatingRow {
    item: String,
    system_a: String,
    system_b: String,
    rater: String,
    question: usize,
    a: String,
    b: String,
    #[serde(default)]
    context: String,
    #[serde(default)]
    doctor: String,
    #[serde(default)]
    response_a: String,
    #[serde(default)]
    response_b: String,
}

pub fn parse_ratings(file: &str, text: &str) -> Result<Vec<RatingItem>, FormatError> {
    let mut items: Vec<RatingItem> = Vec::new();
    let mut rdr = reader(text);
    let mut record = csv::StringRecord::new();
    let headers = rdr.headers().map_err(|e| row_error(file, e))?.clone();
    while rdr.read_record(&mut record).map_err(|e| row_error(file, e))? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| FormatError::Row { file: file.into(), line, message };
        let row: RatingRow = record.deserialize(Some(&headers)).map_err(|e| err(e.to_string()))?;
        let a = parse_rating(&row.a).map_err(err)?;
        let b = parse_rating(&row.b).map_err(err)?;
        let systems = [row.system_a, row.system_b];
        let pos = match items.iter().position(|i| i.id == row.item) {
            Some(p) => {
                if items[p].systems != systems {
                    return Err(err(format!("item {} changes its system assignment", row.item)));
                }
                p
            }
            None => {
                items.push(RatingItem {
                    id: row.item.clone(),
                    context: row.context,
                    doctor: row.doctor,
                    response_a: row.response_a,
                    response_b: row.response_b,
                    systems,
                    ratings: Vec::new(),
                });
                items.len() - 1
            }
        };
        items[pos].ratings.push(RaterScores { rater: row.rater, question: row.question, a, b });
    }
    Ok(items)
}

pub fn parse_balance_items(file: &str, text: &str) -> Result<Vec<BalanceItem>, FormatError> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| row_error(file, e))?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| FormatError::Row { file: file.into(), line: 1, message: "missing id column".into() })?;
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| row_error(file, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut item = BalanceItem { id: rec[id_col].to_string(), field_lengths: Vec::new(), quality: Vec::new() };
        for (h, v) in headers.iter().zip(rec.iter()).enumerate().filter(|(i, _)| *i != id_col).map(|(_, p)| p) {
            if h.starts_with("quality") {
                item.quality.push(match v {
                    "1" => true,
                    "0" => false,
                    _ => return Err(FormatError::Row { file: file.into(), line, message: format!("{h} must be 0 or 1") }),
                });
            } else {
                item.field_lengths.push(v.chars().count());
            }
        }
        items.push(item);
    }
    Ok(items)
}
