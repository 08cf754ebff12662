//! Section-to-chunk conversion, sliding-window splitting and deduplication.

use std::collections::HashSet;

use super::{render_header, Chunk, ChunkPolicy, CorpusError, DocumentTree};

/// Emit one chunk per section with a non-empty body, in document order.
///
/// The heading chain is `[document title, ancestor headings.., own heading]`.
/// Sections whose body exceeds the window are replaced in place by their
/// [`split_oversize`] sub-chunks. Chunk ids are
/// `<doc_id>#<dotted section path>#<seq>`.
pub fn make_chunks(tree: &DocumentTree, policy: &ChunkPolicy) -> Result<Vec<Chunk>, CorpusError> {
    policy.validate()?;
    let tokenizer = policy.tokenizer()?;
    let mut chunks = Vec::new();

    let mut walk_err = None;
    tree.walk(|section, path, ancestors| {
        if walk_err.is_some() {
            return;
        }
        let token_count = tokenizer.count(&section.body);
        if token_count == 0 {
            return;
        }
        let mut heading_chain = Vec::with_capacity(ancestors.len() + 2);
        heading_chain.push(tree.title.clone());
        heading_chain.extend(ancestors.iter().map(|h| h.to_string()));
        heading_chain.push(section.heading.clone());
        let header = render_header(&heading_chain);
        let chunk = Chunk {
            chunk_id: format!("{}#{path}#0", tree.doc_id),
            doc_id: tree.doc_id.clone(),
            heading_chain,
            header,
            body: section.body.clone(),
            token_count,
            parent_id: None,
            seq: 0,
        };
        if token_count > policy.window {
            match split_oversize(&chunk, policy) {
                Ok(subs) => chunks.extend(subs),
                Err(e) => walk_err = Some(e),
            }
        } else {
            chunks.push(chunk);
        }
    });
    match walk_err {
        Some(e) => Err(e),
        None => Ok(chunks),
    }
}

/// Split an oversize chunk into sliding-window sub-chunks.
///
/// Window `i` covers tokens `[i*stride, i*stride + window)` of the body,
/// clipped at the end; a window fully contained in the previous one is
/// suppressed. Every sub-chunk keeps the full header. The original chunk id
/// becomes `parent_id`; sub-chunk ids reuse the id stem with `seq = i`, so
/// the first sub-chunk takes over the id of the chunk it replaced.
pub fn split_oversize(chunk: &Chunk, policy: &ChunkPolicy) -> Result<Vec<Chunk>, CorpusError> {
    policy.validate()?;
    let tokenizer = policy.tokenizer()?;
    let tokens = tokenizer.tokenize(&chunk.body);
    let n = tokens.len();
    if n <= policy.window {
        return Err(CorpusError::NotOversize(chunk.chunk_id.clone()));
    }

    let stem = chunk
        .chunk_id
        .rsplit_once('#')
        .map(|(stem, _)| stem)
        .unwrap_or(chunk.chunk_id.as_str());

    let mut subs = Vec::new();
    let mut start = 0usize;
    let mut prev_end: Option<usize> = None;
    while start < n {
        let end = (start + policy.window).min(n);
        if prev_end.is_some_and(|pe| end <= pe) {
            break; // fully contained in the previous window
        }
        let seq = subs.len();
        let body = chunk.body[tokens[start].start..tokens[end - 1].end].to_string();
        subs.push(Chunk {
            chunk_id: format!("{stem}#{seq}"),
            doc_id: chunk.doc_id.clone(),
            heading_chain: chunk.heading_chain.clone(),
            header: chunk.header.clone(),
            body,
            token_count: end - start,
            parent_id: Some(chunk.chunk_id.clone()),
            seq,
        });
        prev_end = Some(end);
        start += policy.stride;
    }
    Ok(subs)
}

/// Drop chunks whose normalized body (lowercased, whitespace runs collapsed,
/// trimmed) repeats an earlier chunk's, corpus-wide. First occurrence wins;
/// relative order is preserved.
pub fn dedup_chunks(chunks: Vec<Chunk>) -> Vec<Chunk> {
    let mut seen = HashSet::new();
    chunks
        .into_iter()
        .filter(|c| seen.insert(normalize_body(&c.body)))
        .collect()
}

fn normalize_body(body: &str) -> String {
    body.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}
