//! Trace parsing: think-block extraction, paragraph segmentation, keyword
//! classification, and the per-trace text metrics (word count, reflection
//! count, boxed-answer matching).
//!
//! All spans are byte offsets into the original raw text, so a trace can be
//! reconstructed exactly from its paragraph ranges plus the gaps between
//! them. Paragraphs are the segments between runs of blank lines;
//! whitespace-only segments are dropped.

use regex::Regex;

use crate::error::{Error, Result};
use crate::lexicon::KeywordLexicon;
use crate::types::{BoundaryRecord, Paragraph, RawTrace, TraceRecord};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Span of the reasoning block, as byte offsets into `raw_text`, plus a flag
/// set when an opening tag has no matching close (the block then extends to
/// the end of the text and callers should surface a warning).
///
/// No tags at all means the whole text is treated as the reasoning block.
/// Only the first block counts; later blocks are ignored.
pub fn extract_think_block(raw_text: &str) -> (usize, usize, bool) {
    match raw_text.find(THINK_OPEN) {
        None => (0, raw_text.len(), false),
        Some(open) => {
            let content_start = open + THINK_OPEN.len();
            match raw_text[content_start..].find(THINK_CLOSE) {
                Some(rel) => (content_start, content_start + rel, false),
                None => (content_start, raw_text.len(), true),
            }
        }
    }
}

/// Default paragraph delimiter: a newline followed by one or more blank
/// (whitespace-only) lines.
pub fn default_delimiter() -> Regex {
    Regex::new(r"\n(?:[ \t\r]*\n)+").expect("static pattern compiles")
}

/// Splits `text` into paragraph spans on the delimiter, returning byte
/// ranges shifted by `base` (the span's offset within the full raw text).
/// Whitespace-only segments are dropped; surviving spans are ordered and
/// disjoint, and together with the inter-span gaps reconstruct `text`.
pub fn split_paragraph_spans(text: &str, base: usize, delimiter: &Regex) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut cursor = 0usize;
    for m in delimiter.find_iter(text) {
        if !text[cursor..m.start()].trim().is_empty() {
            spans.push((base + cursor, base + m.start()));
        }
        cursor = m.end();
    }
    if !text[cursor..].trim().is_empty() {
        spans.push((base + cursor, base + text.len()));
    }
    spans
}

/// Parses one raw trace into a labeled record: extracts the think block,
/// segments it into paragraphs, and classifies each with the lexicon.
pub fn segment_trace(
    raw: &RawTrace,
    lexicon: &KeywordLexicon,
    delimiter: &Regex,
) -> Result<TraceRecord> {
    let (think_start, think_end, unclosed_think) = extract_think_block(&raw.text);
    if unclosed_think {
        log::warn!(
            "trace {}: unclosed think block, treating it as running to end of text",
            raw.question_id
        );
    }
    let body = &raw.text[think_start..think_end];
    let paragraphs = split_paragraph_spans(body, think_start, delimiter)
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Paragraph {
            index,
            start,
            end,
            label: lexicon.classify(&raw.text[start..end]),
        })
        .collect();
    let record = TraceRecord {
        question_id: raw.question_id.clone(),
        subject: raw.subject.clone(),
        gold_answer: raw.gold_answer.clone(),
        raw_text: raw.text.clone(),
        think_start,
        think_end,
        unclosed_think,
        paragraphs,
    };
    record.validate()?;
    Ok(record)
}

/// Splits paragraph indices into (behavior, execution). Reflection and
/// transition paragraphs both count as behavior; the two lists together
/// cover every paragraph.
pub fn partition_boundaries(trace: &TraceRecord) -> (Vec<usize>, Vec<usize>) {
    (trace.boundary_indices(), trace.execution_indices())
}

/// One boundary record per behavior paragraph. `prefix_end` is the byte
/// offset of the paragraph start: the prefix fed to the model when sampling
/// continuations ends exactly where the behavior paragraph begins.
pub fn boundary_records(trace: &TraceRecord) -> Vec<BoundaryRecord> {
    trace
        .boundary_indices()
        .into_iter()
        .map(|i| {
            let p = &trace.paragraphs[i];
            BoundaryRecord {
                boundary_id: BoundaryRecord::make_id(&trace.question_id, i),
                question_id: trace.question_id.clone(),
                paragraph_index: i,
                prefix_end: p.start,
                label: p.label,
                stability: None,
            }
        })
        .collect()
}

/// Total reflection-term occurrences inside the think block.
pub fn count_reflection_keywords(raw_text: &str, lexicon: &KeywordLexicon) -> usize {
    let (start, end, _) = extract_think_block(raw_text);
    lexicon.count_reflection(&raw_text[start..end])
}

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Contents of the last balanced `\boxed{...}` group, brace-aware so nested
/// braces survive. Returns `None` when no group is present; unbalanced
/// braces after the last opener are a parse error.
pub fn extract_boxed_answer(text: &str) -> Result<Option<String>> {
    const MARKER: &str = r"\boxed{";
    let Some(pos) = text.rfind(MARKER) else {
        return Ok(None);
    };
    let inner_start = pos + MARKER.len();
    let mut depth = 1usize;
    for (i, c) in text[inner_start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(Some(text[inner_start..inner_start + i].to_string()));
                }
            }
            _ => {}
        }
    }
    Err(Error::Parse(
        "unbalanced braces after last \\boxed{".into(),
    ))
}

/// Whitespace-trimmed string equality; no LaTeX normalization by design,
/// so "1/2" and "\frac{1}{2}" do not match.
pub fn exact_match(predicted: &str, gold: &str) -> bool {
    predicted.trim() == gold.trim()
}
