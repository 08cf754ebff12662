//! Heading-markup parsing and table/figure extraction.

use super::{Asset, AssetKind, CorpusError, DocumentTree, Section};

/// Heading carved from a markup line: 1-6 `#` characters plus a space.
fn parse_heading(line: &str) -> Option<(u32, &str)> {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let rest = &line[hashes..];
    rest.strip_prefix(' ').map(|text| (hashes as u32, text))
}

/// Parse heading markup into a section tree.
///
/// Body text before the first heading becomes a synthetic level-1 "Preamble"
/// section. A heading marker with an empty title is `MalformedHeading`; a
/// document with no headings and no body is `EmptyDocument`. The tree title
/// is the doc id (the markup format carries no separate title line).
pub fn parse_document(markup: &str, doc_id: &str) -> Result<DocumentTree, CorpusError> {
    assert!(!doc_id.is_empty(), "doc_id must be non-empty");

    // (level, section, body lines); children are attached as levels close.
    struct Open {
        level: u32,
        heading: String,
        lines: Vec<String>,
        children: Vec<Section>,
    }

    fn close(open: Open) -> Section {
        Section {
            heading: open.heading,
            level: open.level,
            body: join_body(&open.lines),
            children: open.children,
        }
    }

    let mut stack: Vec<Open> = Vec::new();
    let mut roots: Vec<Section> = Vec::new();
    let mut preamble: Vec<String> = Vec::new();

    for (lineno, line) in markup.lines().enumerate() {
        match parse_heading(line) {
            Some((level, text)) => {
                let text = text.trim();
                if text.is_empty() {
                    return Err(CorpusError::MalformedHeading {
                        line: lineno + 1,
                        reason: "heading has no title text".into(),
                    });
                }
                if stack.is_empty() && !preamble.iter().all(|l| l.trim().is_empty()) {
                    roots.push(Section {
                        heading: "Preamble".into(),
                        level: 1,
                        body: join_body(&preamble),
                        children: Vec::new(),
                    });
                    preamble.clear();
                }
                while stack.last().is_some_and(|top| top.level >= level) {
                    let done = close(stack.pop().expect("stack non-empty"));
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(done),
                        None => roots.push(done),
                    }
                }
                stack.push(Open {
                    level,
                    heading: text.to_string(),
                    lines: Vec::new(),
                    children: Vec::new(),
                });
            }
            None => match stack.last_mut() {
                Some(top) => top.lines.push(line.to_string()),
                None => preamble.push(line.to_string()),
            },
        }
    }

    while let Some(open) = stack.pop() {
        let done = close(open);
        match stack.last_mut() {
            Some(parent) => parent.children.push(done),
            None => roots.push(done),
        }
    }
    if roots.is_empty() && !preamble.iter().all(|l| l.trim().is_empty()) {
        roots.push(Section {
            heading: "Preamble".into(),
            level: 1,
            body: join_body(&preamble),
            children: Vec::new(),
        });
    }

    if roots.is_empty() {
        return Err(CorpusError::EmptyDocument { doc_id: doc_id.to_string() });
    }

    Ok(DocumentTree { doc_id: doc_id.to_string(), title: doc_id.to_string(), sections: roots })
}

/// Join body lines, dropping leading/trailing blank lines but keeping the
/// interior verbatim.
fn join_body(lines: &[String]) -> String {
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    match (first, last) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}

fn is_table_line(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 2 && t.starts_with('|') && t.ends_with('|')
}

fn is_figure_line(line: &str) -> bool {
    let t = line.trim();
    t == "[FIGURE]" || (t.starts_with("![") && t.contains("](") && t.ends_with(')'))
}

/// Lift pipe-table blocks (two or more consecutive `|...|` lines) and figure
/// markers out of section bodies. Remaining body text is unchanged apart from
/// re-trimmed blank edges. Asset ids are `<doc_id>#asset<n>` in document
/// order.
pub fn extract_assets(tree: DocumentTree) -> (DocumentTree, Vec<Asset>) {
    let mut assets = Vec::new();
    let mut counter = 0usize;
    let doc_id = tree.doc_id.clone();

    fn next_id(doc_id: &str, counter: &mut usize) -> String {
        let id = format!("{doc_id}#asset{counter}");
        *counter += 1;
        id
    }

    fn strip_body(
        body: &str,
        path: &str,
        doc_id: &str,
        counter: &mut usize,
        assets: &mut Vec<Asset>,
    ) -> String {
        let lines: Vec<&str> = body.lines().collect();
        let mut kept: Vec<String> = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            if is_table_line(lines[i]) {
                let mut j = i + 1;
                while j < lines.len() && is_table_line(lines[j]) {
                    j += 1;
                }
                if j - i >= 2 {
                    assets.push(Asset {
                        asset_id: next_id(doc_id, counter),
                        kind: AssetKind::Table,
                        source_section: path.to_string(),
                        raw: lines[i..j].join("\n"),
                    });
                    i = j;
                    continue;
                }
            }
            if is_figure_line(lines[i]) {
                assets.push(Asset {
                    asset_id: next_id(doc_id, counter),
                    kind: AssetKind::Figure,
                    source_section: path.to_string(),
                    raw: lines[i].trim().to_string(),
                });
                i += 1;
                continue;
            }
            kept.push(lines[i].to_string());
            i += 1;
        }
        join_body(&kept)
    }

    fn rec(
        sections: Vec<Section>,
        prefix: &str,
        doc_id: &str,
        counter: &mut usize,
        assets: &mut Vec<Asset>,
    ) -> Vec<Section> {
        sections
            .into_iter()
            .enumerate()
            .map(|(i, mut section)| {
                let path = if prefix.is_empty() {
                    format!("{}", i + 1)
                } else {
                    format!("{prefix}.{}", i + 1)
                };
                section.body = strip_body(&section.body, &path, doc_id, counter, assets);
                section.children =
                    rec(std::mem::take(&mut section.children), &path, doc_id, counter, assets);
                section
            })
            .collect()
    }

    let sections = rec(tree.sections, "", &doc_id, &mut counter, &mut assets);
    (DocumentTree { sections, ..tree }, assets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_section_identity() {
        let tree = parse_document("# T\nbody", "d").unwrap();
        assert_eq!(tree.sections.len(), 1);
        let s = &tree.sections[0];
        assert_eq!((s.heading.as_str(), s.level, s.body.as_str()), ("T", 1, "body"));
        assert!(s.children.is_empty());
    }

    #[test]
    fn nested_sections_hand_built() {
        let tree = parse_document("# A\n## B\nx\n## C\ny", "d").unwrap();
        let expect = DocumentTree {
            doc_id: "d".into(),
            title: "d".into(),
            sections: vec![Section {
                heading: "A".into(),
                level: 1,
                body: String::new(),
                children: vec![
                    Section { heading: "B".into(), level: 2, body: "x".into(), children: vec![] },
                    Section { heading: "C".into(), level: 2, body: "y".into(), children: vec![] },
                ],
            }],
        };
        assert_eq!(tree, expect);
    }

    #[test]
    fn empty_document_rejected() {
        assert!(matches!(
            parse_document("", "d"),
            Err(CorpusError::EmptyDocument { .. })
        ));
        assert!(matches!(
            parse_document("  \n\n", "d"),
            Err(CorpusError::EmptyDocument { .. })
        ));
    }

    #[test]
    fn body_before_heading_becomes_preamble() {
        let tree = parse_document("front matter\n# A\nx", "d").unwrap();
        assert_eq!(tree.sections.len(), 2);
        assert_eq!(tree.sections[0].heading, "Preamble");
        assert_eq!(tree.sections[0].body, "front matter");
        assert_eq!(tree.sections[1].heading, "A");
    }

    #[test]
    fn document_with_only_body_is_all_preamble() {
        let tree = parse_document("just text\nmore text", "d").unwrap();
        assert_eq!(tree.sections.len(), 1);
        assert_eq!(tree.sections[0].heading, "Preamble");
        assert_eq!(tree.sections[0].body, "just text\nmore text");
    }

    #[test]
    fn empty_heading_title_is_malformed() {
        let err = parse_document("#  \nbody", "d").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedHeading { line: 1, .. }));
    }

    #[test]
    fn seven_hashes_and_no_space_are_body() {
        let tree = parse_document("# A\n####### deep\n#tag", "d").unwrap();
        assert_eq!(tree.sections[0].body, "####### deep\n#tag");
    }

    #[test]
    fn level_jump_down_is_fine() {
        // A then ### C: child relationship only requires child level > parent.
        let tree = parse_document("# A\n### C\nz", "d").unwrap();
        assert_eq!(tree.sections[0].children[0].level, 3);
        assert_eq!(tree.sections[0].children[0].body, "z");
    }

    #[test]
    fn table_block_extracted() {
        let markup = "# A\nintro\n| h1 | h2 |\n| -- | -- |\n| a  | b  |\noutro";
        let (tree, assets) = extract_assets(parse_document(markup, "d").unwrap());
        assert_eq!(tree.sections[0].body, "intro\noutro");
        assert_eq!(assets.len(), 1);
        assert_eq!(assets[0].kind, AssetKind::Table);
        assert_eq!(assets[0].raw.lines().count(), 3);
        assert_eq!(assets[0].asset_id, "d#asset0");
        assert_eq!(assets[0].source_section, "1");
    }

    #[test]
    fn no_assets_is_identity() {
        let tree = parse_document("# A\nplain text only", "d").unwrap();
        let (out, assets) = extract_assets(tree.clone());
        assert_eq!(out, tree);
        assert!(assets.is_empty());
    }

    #[test]
    fn figure_only_body_empties_section() {
        let tree = parse_document("# A\n[FIGURE]", "d").unwrap();
        let (out, assets) = extract_assets(tree);
        assert_eq!(out.sections[0].body, "");
        assert_eq!(assets.len(), 1);
        assert_eq!(assets[0].kind, AssetKind::Figure);
    }

    #[test]
    fn image_reference_is_a_figure() {
        let tree = parse_document("# A\n![antenna diagram](fig/ant.png)\ntext", "d").unwrap();
        let (out, assets) = extract_assets(tree);
        assert_eq!(out.sections[0].body, "text");
        assert_eq!(assets[0].kind, AssetKind::Figure);
        assert_eq!(assets[0].raw, "![antenna diagram](fig/ant.png)");
    }

    #[test]
    fn single_pipe_line_stays_in_body() {
        let tree = parse_document("# A\n| lonely |\ntext", "d").unwrap();
        let (out, assets) = extract_assets(tree);
        assert!(assets.is_empty());
        assert_eq!(out.sections[0].body, "| lonely |\ntext");
    }

    #[test]
    fn asset_ids_unique_across_nested_sections() {
        let markup = "# A\n[FIGURE]\n## B\n| a |\n| b |\n[FIGURE]";
        let (_, assets) = extract_assets(parse_document(markup, "d").unwrap());
        let ids: Vec<&str> = assets.iter().map(|a| a.asset_id.as_str()).collect();
        assert_eq!(ids, ["d#asset0", "d#asset1", "d#asset2"]);
        assert_eq!(assets[1].source_section, "1.1");
    }
}
