//! Keyword lexicon for labeling reasoning paragraphs.
//!
//! Two term classes: reflection cues ("wait", "verify", ...) and strategy
//! transitions ("alternatively", "instead", ...). Matching is
//! case-insensitive; reflection takes precedence when a paragraph matches
//! both classes. The lexicon ships as a small TOML file so deployments can
//! swap cue sets, and every report records the lexicon fingerprint so scores
//! produced under different lexicons are never silently mixed.

use regex::Regex;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::SegmentLabel;

pub const DEFAULT_REFLECTION_TERMS: &[&str] = &[
    "wait",
    "verify",
    "check",
    "re-check",
    "double-check",
    "make sure",
    "hmm",
    "mistake",
];

pub const DEFAULT_TRANSITION_TERMS: &[&str] = &[
    "alternatively",
    "instead",
    "another approach",
    "let's try",
    "switch",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    WordBoundary,
    Substring,
}

impl MatchMode {
    fn as_str(self) -> &'static str {
        match self {
            MatchMode::WordBoundary => "word-boundary",
            MatchMode::Substring => "substring",
        }
    }
}

/// FNV-1a 64-bit fingerprint, used for lexicon and config provenance.
pub fn fingerprint64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    reflection_terms: Vec<String>,
    transition_terms: Vec<String>,
    #[serde(default)]
    match_mode: Option<String>,
}

/// Compiled keyword lexicon.
#[derive(Debug, Clone)]
pub struct KeywordLexicon {
    reflection_terms: Vec<String>,
    transition_terms: Vec<String>,
    match_mode: MatchMode,
    reflection_patterns: Vec<Regex>,
    transition_patterns: Vec<Regex>,
}

impl Default for KeywordLexicon {
    fn default() -> Self {
        KeywordLexicon::new(
            DEFAULT_REFLECTION_TERMS.iter().map(|s| s.to_string()),
            DEFAULT_TRANSITION_TERMS.iter().map(|s| s.to_string()),
            MatchMode::WordBoundary,
        )
        .expect("default lexicon compiles")
    }
}

impl KeywordLexicon {
    pub fn new<I, J>(reflection: I, transition: J, match_mode: MatchMode) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
        J: IntoIterator<Item = String>,
    {
        let normalize = |it: Vec<String>| -> Vec<String> {
            it.into_iter().map(|t| t.trim().to_lowercase()).collect()
        };
        let reflection_terms = normalize(reflection.into_iter().collect());
        let transition_terms = normalize(transition.into_iter().collect());
        if reflection_terms.is_empty() || transition_terms.is_empty() {
            return Err(Error::Config("lexicon term lists must be nonempty".into()));
        }
        if reflection_terms.iter().any(|t| t.is_empty())
            || transition_terms.iter().any(|t| t.is_empty())
        {
            return Err(Error::Config("lexicon contains an empty term".into()));
        }
        if let Some(dup) = reflection_terms
            .iter()
            .find(|t| transition_terms.contains(t))
        {
            return Err(Error::Config(format!(
                "term `{dup}` appears in both reflection and transition lists"
            )));
        }
        let compile = |terms: &[String]| -> Result<Vec<Regex>> {
            terms
                .iter()
                .map(|t| {
                    let escaped = regex::escape(t);
                    let pat = match match_mode {
                        MatchMode::WordBoundary => format!(r"(?i)\b{escaped}\b"),
                        MatchMode::Substring => format!(r"(?i){escaped}"),
                    };
                    Regex::new(&pat).map_err(|e| Error::Config(format!("bad term `{t}`: {e}")))
                })
                .collect()
        };
        let reflection_patterns = compile(&reflection_terms)?;
        let transition_patterns = compile(&transition_terms)?;
        Ok(KeywordLexicon {
            reflection_terms,
            transition_terms,
            match_mode,
            reflection_patterns,
            transition_patterns,
        })
    }

    /// Parses the TOML lexicon format:
    ///
    /// ```toml
    /// reflection_terms = ["wait", "verify"]
    /// transition_terms = ["instead"]
    /// match_mode = "word-boundary"   # or "substring"
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: LexiconFile =
            toml::from_str(s).map_err(|e| Error::Parse(format!("lexicon: {e}")))?;
        let mode = match file.match_mode.as_deref() {
            None | Some("word-boundary") => MatchMode::WordBoundary,
            Some("substring") => MatchMode::Substring,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown match_mode `{other}` (expected word-boundary or substring)"
                )))
            }
        };
        KeywordLexicon::new(file.reflection_terms, file.transition_terms, mode)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn reflection_terms(&self) -> &[String] {
        &self.reflection_terms
    }

    pub fn transition_terms(&self) -> &[String] {
        &self.transition_terms
    }

    pub fn match_mode(&self) -> MatchMode {
        self.match_mode
    }

    /// Canonical form hashed into reports: lowercased terms in file order.
    pub fn canonical_string(&self) -> String {
        let mut s = String::from("reflection:");
        s.push_str(&self.reflection_terms.join(","));
        s.push_str(";transition:");
        s.push_str(&self.transition_terms.join(","));
        s.push_str(";mode:");
        s.push_str(self.match_mode.as_str());
        s
    }

    /// Hex fingerprint of the canonical form.
    pub fn hash(&self) -> String {
        format!("{:016x}", fingerprint64(self.canonical_string().as_bytes()))
    }

    fn matches_any(patterns: &[Regex], text: &str) -> bool {
        patterns.iter().any(|p| p.is_match(text))
    }

    /// Labels a paragraph. Reflection wins over transition when both match;
    /// no match means execution.
    pub fn classify(&self, text: &str) -> SegmentLabel {
        if Self::matches_any(&self.reflection_patterns, text) {
            SegmentLabel::Reflection
        } else if Self::matches_any(&self.transition_patterns, text) {
            SegmentLabel::Transition
        } else {
            SegmentLabel::Execution
        }
    }

    /// Total occurrences of reflection terms, summed per term.
    ///
    /// Terms are counted independently, so text matched by two different
    /// terms contributes to both counts.
    pub fn count_reflection(&self, text: &str) -> usize {
        self.reflection_patterns
            .iter()
            .map(|p| p.find_iter(text).count())
            .sum()
    }
}
