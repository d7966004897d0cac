//! Turn-level annotation metrics in the shape of an expert-annotation table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GistLabel {
    Correct,
    None,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseLabel {
    Appropriate,
    Clarification,
    Inappropriate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAnnotation {
    pub gist: GistLabel,
    pub response: ResponseLabel,
    /// Significant transcription or turn-taking error in the user input.
    pub asr_error: bool,
}

impl TurnAnnotation {
    pub fn new(gist: GistLabel, response: ResponseLabel, asr_error: bool) -> Self {
        TurnAnnotation { gist, response, asr_error }
    }

    /// A clarification request is the right move when the input was garbled
    /// and nothing could be extracted from it.
    pub fn clarification_excused(&self) -> bool {
        self.asr_error && self.gist == GistLabel::None && self.response == ResponseLabel::Clarification
    }

    /// Response label after the ASR correction.
    pub fn corrected_response(&self) -> ResponseLabel {
        if self.clarification_excused() {
            ResponseLabel::Appropriate
        } else {
            self.response
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no annotations")]
    EmptyInput,
    #[error("annotator {annotator} labelled {got} turns, expected {expected}")]
    LengthMismatch { annotator: usize, expected: usize, got: usize },
}

/// Fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricTable {
    pub turns: usize,
    pub asr_errors: f64,
    pub gist_correct: f64,
    pub gist_none: f64,
    pub gist_incorrect: f64,
    pub appropriate: f64,
    pub clarification: f64,
    pub inappropriate: f64,
    /// Appropriate responses among turns where some gist clause was extracted.
    /// `None` when no gist was extracted anywhere.
    pub appropriate_given_gist: Option<f64>,
}

/// Rounds a fraction to a whole percentage, halves going up.
pub fn percent(fraction: f64) -> u32 {
    (fraction * 100.0 + 0.5 + 1e-9).floor() as u32
}

impl MetricTable {
    /// Rows with their display labels, as whole percentages.
    pub fn rows(&self) -> Vec<(&'static str, Option<u32>)> {
        vec![
            ("ASR Errors", Some(percent(self.asr_errors))),
            ("Correct Gist Extracted", Some(percent(self.gist_correct))),
            ("No Gist Extracted", Some(percent(self.gist_none))),
            ("Incorrect Gist Extracted", Some(percent(self.gist_incorrect))),
            ("Appropriate Response", Some(percent(self.appropriate))),
            ("Clarification Request Response", Some(percent(self.clarification))),
            ("Inappropriate Response", Some(percent(self.inappropriate))),
            ("Appropriate Response Given Gist Clause Extracted", self.appropriate_given_gist.map(percent)),
        ]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (label, value) in self.rows() {
            let v = value.map(|p| format!("{p}%")).unwrap_or_else(|| "n/a".into());
            out.push_str(&format!("{label:<50} {v:>5}\n"));
        }
        out
    }
}

/// Metrics for one annotator, with the ASR correction applied.
pub fn annotation_metrics(annotations: &[TurnAnnotation]) -> Result<MetricTable, MetricsError> {
    let n = annotations.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let frac = |pred: &dyn Fn(&TurnAnnotation) -> bool| annotations.iter().filter(|a| pred(a)).count() as f64 / n as f64;
    let extracted: Vec<_> = annotations.iter().filter(|a| a.gist != GistLabel::None).collect();
    let given = (!extracted.is_empty()).then(|| {
        extracted.iter().filter(|a| a.corrected_response() == ResponseLabel::Appropriate).count() as f64
            / extracted.len() as f64
    });
    Ok(MetricTable {
        turns: n,
        asr_errors: frac(&|a| a.asr_error),
        gist_correct: frac(&|a| a.gist == GistLabel::Correct),
        gist_none: frac(&|a| a.gist == GistLabel::None),
        gist_incorrect: frac(&|a| a.gist == GistLabel::Incorrect),
        appropriate: frac(&|a| a.corrected_response() == ResponseLabel::Appropriate),
        clarification: frac(&|a| a.corrected_response() == ResponseLabel::Clarification),
        inappropriate: frac(&|a| a.corrected_response() == ResponseLabel::Inappropriate),
        appropriate_given_gist: given,
    })
}

/// When the ASR correction happens relative to averaging over annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionOrder {
    /// Each annotator's own ASR flags correct their own labels; the
    /// corrected tables are then averaged.
    #[default]
    PerAnnotator,
    /// Labels are averaged first. A turn is corrected for everyone when at
    /// least half of the annotators saw an excusable clarification on it.
    Pooled,
}

/// Averages tables over annotators who labelled the same turns in the same order.
pub fn averaged_metrics(
    annotators: &[Vec<TurnAnnotation>],
    order: CorrectionOrder,
) -> Result<MetricTable, MetricsError> {
    let first = annotators.first().ok_or(MetricsError::EmptyInput)?;
    for (i, a) in annotators.iter().enumerate() {
        if a.len() != first.len() {
            return Err(MetricsError::LengthMismatch { annotator: i, expected: first.len(), got: a.len() });
        }
    }
    let tables: Vec<MetricTable> = match order {
        CorrectionOrder::PerAnnotator => annotators.iter().map(|a| annotation_metrics(a)).collect::<Result<_, _>>()?,
        CorrectionOrder::Pooled => {
            let k = annotators.len();
            let excused: Vec<bool> = (0..first.len())
                .map(|t| 2 * annotators.iter().filter(|a| a[t].clarification_excused()).count() >= k)
                .collect();
            annotators
                .iter()
                .map(|a| {
                    let relabelled: Vec<TurnAnnotation> = a
                        .iter()
                        .zip(&excused)
                        .map(|(t, &ex)| {
                            let mut t = *t;
                            t.asr_error = false;
                            if ex {
                                t.response = ResponseLabel::Appropriate;
                            }
                            t
                        })
                        .collect();
                    let mut table = annotation_metrics(&relabelled)?;
                    table.asr_errors = a.iter().filter(|t| t.asr_error).count() as f64 / a.len() as f64;
                    Ok(table)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let k = tables.len() as f64;
    let mean = |f: fn(&MetricTable) -> f64| tables.iter().map(f).sum::<f64>() / k;
    let given: Vec<f64> = tables.iter().filter_map(|t| t.appropriate_given_gist).collect();
    Ok(MetricTable {
        turns: first.len(),
        asr_errors: mean(|t| t.asr_errors),
        gist_correct: mean(|t| t.gist_correct),
        gist_none: mean(|t| t.gist_none),
        gist_incorrect: mean(|t| t.gist_incorrect),
        appropriate: mean(|t| t.appropriate),
        clarification: mean(|t| t.clarification),
        inappropriate: mean(|t| t.inappropriate),
        appropriate_given_gist: (!given.is_empty()).then(|| given.iter().sum::<f64>() / given.len() as f64),
    })
}
