//! Evaluation report over annotation and rating files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use dialschema::session::{read_transcript, Speaker};
use dialstats::formats::{parse_annotations, parse_ratings, read_file};
use dialstats::{averaged_metrics, cohens_kappa, summarize_ratings, CorrectionOrder, MetricTable, RatingSummary, TurnAnnotation};
use serde::Serialize;

#[derive(Debug, Default)]
pub struct EvalInputs {
    pub annotations: Vec<PathBuf>,
    pub ratings: Vec<PathBuf>,
    pub transcripts: Vec<PathBuf>,
    pub order: CorrectionOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaRow {
    pub label: &'static str,
    pub first: String,
    pub second: String,
    /// `None` when chance agreement is total.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatingReport {
    pub summary: RatingSummary,
    pub mann_whitney_p: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub turns: usize,
    pub annotators: Vec<String>,
    pub metrics: Option<MetricTable>,
    pub kappa: Vec<KappaRow>,
    pub ratings: Option<RatingReport>,
}

type Annotators = BTreeMap<String, Vec<TurnAnnotation>>;

/// Annotators keyed by name, aligned on the turn order of the first file.
fn load_annotations(files: &[PathBuf]) -> anyhow::Result<(Vec<String>, Annotators)> {
    let mut turns: Vec<String> = Vec::new();
    let mut by_name: BTreeMap<String, BTreeMap<String, TurnAnnotation>> = BTreeMap::new();
    for f in files {
        let name = f.display().to_string();
        let set = parse_annotations(&name, &read_file(f)?)?;
        for t in &set.turns {
            if !turns.contains(t) {
                turns.push(t.clone());
            }
        }
        for (annotator, labels) in set.annotators {
            if by_name.contains_key(&annotator) {
                bail!("{name}: annotator {annotator} also appears in an earlier file");
            }
            by_name.insert(annotator, set.turns.iter().cloned().zip(labels).collect());
        }
    }
    let mut aligned = BTreeMap::new();
    for (annotator, labels) in by_name {
        let list = turns
            .iter()
            .map(|t| labels.get(t).copied().ok_or_else(|| anyhow!("annotator {annotator} has no label for turn {t}")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        aligned.insert(annotator, list);
    }
    Ok((turns, aligned))
}

fn transcript_key(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Annotated turn ids must name user turns. With one transcript an id is a
/// seq; with several it is `<file stem>:<seq>`.
fn check_turns(turns: &[String], transcripts: &[PathBuf]) -> anyhow::Result<()> {
    let mut known: Vec<String> = Vec::new();
    for path in transcripts {
        let file = std::fs::File::open(path).with_context(|| path.display().to_string())?;
        let records = read_transcript(std::io::BufReader::new(file)).with_context(|| path.display().to_string())?;
        for r in records.iter().filter(|r| r.speaker == Speaker::User) {
            known.push(if transcripts.len() == 1 { r.seq.to_string() } else { format!("{}:{}", transcript_key(path), r.seq) });
        }
    }
    for t in turns {
        if !known.contains(t) {
            bail!("annotated turn {t} is not a user turn in the given transcripts");
        }
    }
    Ok(())
}

pub fn build_report(inputs: &EvalInputs) -> anyhow::Result<Report> {
    let mut report = Report { turns: 0, annotators: Vec::new(), metrics: None, kappa: Vec::new(), ratings: None };
    if !inputs.annotations.is_empty() {
        let (turns, annotators) = load_annotations(&inputs.annotations)?;
        if !inputs.transcripts.is_empty() {
            check_turns(&turns, &inputs.transcripts)?;
        }
        let lists: Vec<Vec<TurnAnnotation>> = annotators.values().cloned().collect();
        report.turns = turns.len();
        report.annotators = annotators.keys().cloned().collect();
        report.metrics = Some(averaged_metrics(&lists, inputs.order)?);
        let names: Vec<&String> = annotators.keys().collect();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                let (a, b) = (&annotators[names[i]], &annotators[names[j]]);
                let pair = |label, ka: Result<f64, dialstats::KappaError>| -> anyhow::Result<KappaRow> {
                    let kappa = match ka {
                        Ok(k) => Some(k),
                        Err(dialstats::KappaError::DegenerateAgreement) => None,
                        Err(e) => return Err(e.into()),
                    };
                    Ok(KappaRow { label, first: names[i].clone(), second: names[j].clone(), kappa })
                };
                let g = |v: &[TurnAnnotation]| v.iter().map(|t| t.gist).collect::<Vec<_>>();
                let r = |v: &[TurnAnnotation]| v.iter().map(|t| t.response).collect::<Vec<_>>();
                let s = |v: &[TurnAnnotation]| v.iter().map(|t| t.asr_error).collect::<Vec<_>>();
                report.kappa.push(pair("Gist", cohens_kappa(&g(a), &g(b)))?);
                report.kappa.push(pair("Response", cohens_kappa(&r(a), &r(b)))?);
                report.kappa.push(pair("ASR", cohens_kappa(&s(a), &s(b)))?);
            }
        }
    }
    if !inputs.ratings.is_empty() {
        let mut items = Vec::new();
        for f in &inputs.ratings {
            items.extend(parse_ratings(&f.display().to_string(), &read_file(f)?)?);
        }
        let summary = summarize_ratings(&items)?;
        let mann_whitney_p = summary.questions.iter().map(|q| q.mann_whitney_p().ok()).collect();
        report.ratings = Some(RatingReport { summary, mann_whitney_p });
    }
    Ok(report)
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.metrics {
            let _ = writeln!(out, "Expert annotations ({} turns, {} annotator(s))", self.turns, self.annotators.len());
            out.push_str(&m.render());
        }
        if !self.kappa.is_empty() {
            out.push_str("\nInter-annotator agreement (Cohen's kappa)\n");
            for k in &self.kappa {
                let v = k.kappa.map(|v| format!("{v:.2}")).unwrap_or_else(|| "undefined".into());
                let _ = writeln!(out, "{:<10} {} vs {}: {v}", k.label, k.first, k.second);
            }
        }
        if let Some(r) = &self.ratings {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str("Crowd ratings\n");
            out.push_str(&r.summary.render());
        }
        out
    }
}
