//! Shared data types for traces, hidden states, boundaries, and built
//! steering vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath;

/// A single hidden-state row (one paragraph-final residual-stream vector).
pub type HiddenVector = Vec<f64>;

/// Paragraph classification. `Reflection` and `Transition` together form the
/// behavior class; everything else is `Execution`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLabel {
    Reflection,
    Transition,
    Execution,
}

impl SegmentLabel {
    /// Reflection and transition paragraphs mark candidate behavior onsets.
    pub fn is_behavior(self) -> bool {
        matches!(self, SegmentLabel::Reflection | SegmentLabel::Transition)
    }
}

/// One row of a `traces.jsonl` file, before segmentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawTrace {
    pub question_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

/// A contiguous paragraph inside the reasoning block.
///
/// `start..end` are byte offsets into the full raw text, so slicing the
/// original string with them reproduces the paragraph exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub label: SegmentLabel,
}

/// A segmented trace: the reasoning-block span plus labeled paragraphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub question_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gold_answer: Option<String>,
    pub raw_text: String,
    pub think_start: usize,
    pub think_end: usize,
    /// Set when the reasoning block was opened but never closed; the span
    /// then runs to the end of the text.
    #[serde(default)]
    pub unclosed_think: bool,
    pub paragraphs: Vec<Paragraph>,
}

impl TraceRecord {
    /// Indices of behavior-labeled paragraphs, ascending.
    pub fn boundary_indices(&self) -> Vec<usize> {
        self.paragraphs
            .iter()
            .filter(|p| p.label.is_behavior())
            .map(|p| p.index)
            .collect()
    }

    /// Indices of execution-labeled paragraphs, ascending.
    pub fn execution_indices(&self) -> Vec<usize> {
        self.paragraphs
            .iter()
            .filter(|p| !p.label.is_behavior())
            .map(|p| p.index)
            .collect()
    }

    /// Checks span ordering and containment invariants.
    pub fn validate(&self) -> Result<()> {
        if self.think_end > self.raw_text.len() || self.think_start > self.think_end {
            return Err(Error::Ingest(format!(
                "trace {}: think span {}..{} outside text of {} bytes",
                self.question_id,
                self.think_start,
                self.think_end,
                self.raw_text.len()
            )));
        }
        let mut prev_end = self.think_start;
        for (i, p) in self.paragraphs.iter().enumerate() {
            if p.index != i {
                return Err(Error::Ingest(format!(
                    "trace {}: paragraph index {} at position {}",
                    self.question_id, p.index, i
                )));
            }
            if p.start < prev_end || p.end > self.think_end || p.start >= p.end {
                return Err(Error::Ingest(format!(
                    "trace {}: paragraph {} span {}..{} violates ordering",
                    self.question_id, p.index, p.start, p.end
                )));
            }
            prev_end = p.end;
        }
        Ok(())
    }
}

/// Dense row-major matrix of hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    got: r.len(),
                    context: "Matrix::from_rows".into(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }
}

/// Paragraph-aligned hidden states for one trace at one layer.
///
/// Row `i` is the hidden state for paragraph `i` of the corresponding
/// [`TraceRecord`]; every entry must be finite.
#[derive(Debug, Clone)]
pub struct HiddenStateSet {
    pub question_id: String,
    pub layer: u32,
    pub states: Matrix,
}

impl HiddenStateSet {
    pub fn validate(&self) -> Result<()> {
        if !vecmath::all_finite(&self.states.data) {
            return Err(Error::Ingest(format!(
                "hidden states for {}: non-finite entry",
                self.question_id
            )));
        }
        Ok(())
    }
}

/// A candidate behavior onset: one behavior-labeled paragraph boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub boundary_id: String,
    pub question_id: String,
    pub paragraph_index: usize,
    /// Byte offset of the boundary paragraph's start; continuations are
    /// regenerated from the text prefix that ends here.
    pub prefix_end: usize,
    pub label: SegmentLabel,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stability: Option<f64>,
}

impl BoundaryRecord {
    /// Stable identifier: `<question_id>#p<paragraph_index>`.
    pub fn make_id(question_id: &str, paragraph_index: usize) -> String {
        format!("{question_id}#p{paragraph_index}")
    }

    /// Checks that an attached stability score sits on the 1/M grid.
    pub fn validate_stability(&self, m: u32) -> Result<()> {
        if let Some(s) = self.stability {
            let scaled = s * f64::from(m);
            if !(0.0..=f64::from(m)).contains(&scaled) || (scaled - scaled.round()).abs() > 1e-9 {
                return Err(Error::Ingest(format!(
                    "boundary {}: stability {} is not a multiple of 1/{}",
                    self.boundary_id, s, m
                )));
            }
        }
        Ok(())
    }
}

/// Construction method of a steering vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Seal,
    Stable,
    Soft,
    Projected,
    Combined,
    Prompt,
    Control,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Seal => "seal",
            Method::Stable => "stable",
            Method::Soft => "soft",
            Method::Projected => "projected",
            Method::Combined => "combined",
            Method::Prompt => "prompt",
            Method::Control => "control",
        };
        f.write_str(s)
    }
}

/// A unit-norm steering direction plus the provenance needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringVector {
    pub method: Method,
    pub layer: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Problems that contributed at least one difference term.
    pub n_problems: u32,
    /// Boundary rows that contributed.
    pub n_boundaries: u32,
    pub lexicon_hash: String,
    #[serde(skip)]
    pub direction: Vec<f64>,
}

impl SteeringVector {
    /// Confirms the direction is unit norm within 1e-6.
    pub fn validate(&self) -> Result<()> {
        let norm = vecmath::l2_norm(&self.direction);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Normalization {
                norm,
                context: format!("{} steering vector not unit norm", self.method),
            });
        }
        Ok(())
    }
}
