//! Document structuring: parse heading markup into section trees, extract
//! tables and figures, and emit deduplicated, header-enriched chunks with
//! sliding-window sub-chunking.
//!
//! The input format is line-oriented heading markup: lines starting with 1-6
//! `#` characters plus a space are headings (the count is the level), a block
//! of two or more consecutive lines that start and end with `|` is a table,
//! a line that is `[FIGURE]` or an image reference `![...](...)` is a figure
//! marker, and everything else is body text.

mod chunker;
mod markup;
mod store;

pub use chunker::{dedup_chunks, make_chunks, split_oversize};
pub use markup::{extract_assets, parse_document};
pub use store::{read_chunks_jsonl, write_chunks_jsonl, ChunkStore};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::{Tokenizer, DEFAULT_TOKENIZER_ID};

/// Separator used when rendering a heading chain into a chunk header.
pub const HEADER_JOIN: &str = " > ";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {doc_id:?} is empty")]
    EmptyDocument { doc_id: String },
    #[error("malformed heading at line {line}: {reason}")]
    MalformedHeading { line: usize, reason: String },
    #[error("chunk {0:?} is not oversize for the given policy")]
    NotOversize(String),
    #[error("duplicate chunk id {0:?}")]
    DuplicateChunkId(String),
    #[error(transparent)]
    UnknownTokenizer(#[from] crate::tokenize::UnknownTokenizer),
    #[error("invalid chunk policy: {0}")]
    InvalidPolicy(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad chunk record: {0}")]
    BadRecord(#[from] serde_json::Error),
}

/// A parsed document: ordered tree of sections under a title.
///
/// Invariants: heading levels strictly increase along any root-to-leaf path,
/// and section bodies contain no heading lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTree {
    pub doc_id: String,
    /// Document title used as the first element of every heading chain. The
    /// markup format has no title line, so this defaults to the doc id.
    pub title: String,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub level: u32,
    pub body: String,
    pub children: Vec<Section>,
}

/// A table or figure lifted out of a section body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: String,
    pub kind: AssetKind,
    /// Dotted 1-based ordinal path of the section the asset came from,
    /// e.g. `"2.1"`; `"preamble"`-less, matches the chunk id section path.
    pub source_section: String,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    Table,
    Figure,
}

/// A retrievable text unit.
///
/// `heading_chain` runs outermost-first: document title, then every ancestor
/// heading down to the chunk's own section heading. `header` is the chain
/// joined with `" > "`. `token_count` counts the body only. Sub-chunks carry
/// `parent_id` (the id of the oversize chunk they replaced; the first
/// sub-chunk reuses that id) and a contiguous `seq` starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub heading_chain: Vec<String>,
    pub header: String,
    pub body: String,
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub seq: usize,
}

impl Chunk {
    /// Header, blank line, body: the serialization used for embedding and
    /// prompting.
    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.header, self.body)
    }
}

/// Render a heading chain into a chunk header.
pub fn render_header(heading_chain: &[String]) -> String {
    heading_chain.join(HEADER_JOIN)
}

/// Window/stride policy for sub-chunking, in tokens.
///
/// 128, 192, 256 and 512 are the preset window sizes used by the experiment
/// sweeps; any positive window is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    pub window: usize,
    pub stride: usize,
    pub tokenizer_id: String,
}

impl ChunkPolicy {
    pub const PRESET_WINDOWS: [usize; 4] = [128, 192, 256, 512];
    pub const DEFAULT_STRIDE: usize = 64;

    pub fn new(window: usize, stride: usize) -> Result<Self, CorpusError> {
        let policy = ChunkPolicy { window, stride, tokenizer_id: DEFAULT_TOKENIZER_ID.to_string() };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.window == 0 {
            return Err(CorpusError::InvalidPolicy("window must be positive".into()));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(CorpusError::InvalidPolicy(format!(
                "stride must satisfy 0 < stride <= window, got stride={} window={}",
                self.stride, self.window
            )));
        }
        Tokenizer::from_id(&self.tokenizer_id)?;
        Ok(())
    }

    pub fn tokenizer(&self) -> Result<Tokenizer, CorpusError> {
        Ok(Tokenizer::from_id(&self.tokenizer_id)?)
    }
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            window: 128,
            stride: Self::DEFAULT_STRIDE,
            tokenizer_id: DEFAULT_TOKENIZER_ID.to_string(),
        }
    }
}

impl DocumentTree {
    /// Depth-first walk in document order. The callback receives each section
    /// with its dotted ordinal path (`"2.1"` for the first child of the
    /// second root section) and the headings of its ancestors.
    pub fn walk<'a>(&'a self, mut f: impl FnMut(&'a Section, &str, &[&'a str])) {
        fn rec<'a>(
            sections: &'a [Section],
            prefix: &str,
            ancestors: &mut Vec<&'a str>,
            f: &mut impl FnMut(&'a Section, &str, &[&'a str]),
        ) {
            for (i, section) in sections.iter().enumerate() {
                let path = if prefix.is_empty() {
                    format!("{}", i + 1)
                } else {
                    format!("{prefix}.{}", i + 1)
                };
                f(section, &path, ancestors);
                ancestors.push(&section.heading);
                rec(&section.children, &path, ancestors, f);
                ancestors.pop();
            }
        }
        let mut ancestors = Vec::new();
        rec(&self.sections, "", &mut ancestors, &mut f);
    }
}
