//! Rule-based decomposition of a normalized markdown survey into its outline
//! tree, content sections, bibliography and citation-bearing sentences.
//!
//! The input grammar is plain ATX markdown: `#`, `##` and `###` headings
//! define the outline (deeper levels are clipped to depth 3), a heading named
//! `References` or `Bibliography` opens the bibliography, and citations are
//! numeric square-bracket markers such as `[3]`, `[1, 4]` or `[2-5]`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deepest outline level kept; deeper headings are clipped.
pub const MAX_HEADING_DEPTH: usize = 3;

/// Title given to nodes inserted to repair skipped heading levels.
pub const UNTITLED: &str = "(untitled)";

const PATH_JOINER: &str = " > ";
const LEAF_JOINER: &str = "; ";

/// Longest citation range (`[n-m]`) that is expanded.
const MAX_CITATION_RANGE: usize = 1000;

const ABBREVIATIONS: &[&str] = &[
    "al.", "fig.", "figs.", "eq.", "eqs.", "e.g.", "i.e.", "vs.", "cf.", "sec.", "secs.", "tab.", "no.", "nos.",
    "ref.", "refs.", "etc.", "approx.", "resp.", "ch.", "vol.", "pp.", "dr.", "mr.", "ms.", "prof.",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("document contains no outline headings")]
    NoHeadings,
    #[error("duplicate reference key [{0}]")]
    DuplicateReferenceKey(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineNode {
    pub title: String,
    pub depth: usize,
    /// 1-based position among siblings; 0 for the virtual root.
    pub ordinal: usize,
    pub children: Vec<OutlineNode>,
}

impl OutlineNode {
    fn new(title: impl Into<String>, depth: usize, ordinal: usize) -> Self {
        Self { title: title.into(), depth, ordinal, children: Vec::new() }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(OutlineNode::count).sum::<usize>()
    }

    fn max_depth(&self) -> usize {
        self.children.iter().map(OutlineNode::max_depth).max().unwrap_or(self.depth)
    }

    fn push_child(&mut self, title: impl Into<String>) -> &mut OutlineNode {
        let ordinal = self.children.len() + 1;
        self.children.push(OutlineNode::new(title, self.depth + 1, ordinal));
        self.children.last_mut().expect("just pushed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineTree {
    /// Virtual root at depth 0; its title is empty.
    pub root: OutlineNode,
    pub max_depth: usize,
}

impl OutlineTree {
    /// Number of real (non-root) nodes.
    pub fn node_count(&self) -> usize {
        self.root.count() - 1
    }

    pub fn leaf_count(&self) -> usize {
        fn leaves(n: &OutlineNode) -> usize {
            if n.is_leaf() {
                1
            } else {
                n.children.iter().map(leaves).sum()
            }
        }
        self.root.children.iter().map(leaves).sum()
    }

    /// Visits every node with children (root included) in pre-order, passing
    /// the root-to-node title path.
    pub fn for_each_parent<F: FnMut(&[String], &OutlineNode)>(&self, mut f: F) {
        fn walk<F: FnMut(&[String], &OutlineNode)>(node: &OutlineNode, path: &mut Vec<String>, f: &mut F) {
            if node.is_leaf() {
                return;
            }
            f(path, node);
            for child in &node.children {
                path.push(child.title.clone());
                walk(child, path, f);
                path.pop();
            }
        }
        walk(&self.root, &mut Vec::new(), &mut f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentSection {
    pub heading_path: Vec<String>,
    pub body: String,
    /// 1-based position in document order.
    pub index: usize,
    pub is_container: bool,
}

impl ContentSection {
    pub fn title(&self) -> &str {
        self.heading_path.last().map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub key: u32,
    pub text: String,
    /// 1-based position in the bibliography.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationSentence {
    pub section_index: usize,
    pub sentence: String,
    pub cited_keys: Vec<u32>,
    pub dangling_keys: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlinePathDocument {
    pub parent_path: Vec<String>,
    pub leaf_titles: Vec<String>,
    pub rendered_text: String,
}

/// Everything extracted from one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub outline: OutlineTree,
    pub outline_paths: Vec<OutlinePathDocument>,
    pub sections: Vec<ContentSection>,
    pub references: Vec<ReferenceEntry>,
    pub citations: Vec<CitationSentence>,
    pub warnings: Vec<String>,
}

pub fn decompose(document: &str) -> Result<Decomposition, DecomposeError> {
    let scan = scan(document);
    let mut warnings = scan.warnings.clone();
    let outline = build_tree(&scan)?.0;
    let outline_paths = split_outline_paths(&outline);
    let sections = sections_from_scan(&scan);
    let references = references_from_scan(&scan)?;
    if scan.reference_section.is_none() {
        warnings.push("no References/Bibliography section found".into());
    } else if references.is_empty() {
        warnings.push("References section contains no numbered entries".into());
    }
    let citations = extract_citation_sentences(&sections, &references);
    let dangling: BTreeSet<u32> = citations.iter().flat_map(|c| c.dangling_keys.iter().copied()).collect();
    if !dangling.is_empty() {
        warnings.push(format!("dangling citation keys: {dangling:?}"));
    }
    Ok(Decomposition { outline, outline_paths, sections, references, citations, warnings })
}

// ---------------------------------------------------------------------------
// Line scanning

#[derive(Debug, Clone)]
struct Heading {
    line: usize,
    level: usize,
    title: String,
}

#[derive(Debug, Default)]
struct Scan<'a> {
    lines: Vec<&'a str>,
    /// Outline headings (references heading and anything nested under it excluded).
    headings: Vec<Heading>,
    /// Line range of the bibliography body.
    reference_section: Option<(usize, usize)>,
    warnings: Vec<String>,
}

fn parse_heading(line: &str) -> Option<(usize, String)> {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    let hashes = trimmed.bytes().take_while(|&b| b == b'#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &trimmed[hashes..];
    if !rest.is_empty() && !rest.starts_with([' ', '\t']) {
        return None;
    }
    let title = rest.trim().trim_end_matches('#').trim_end().to_string();
    Some((hashes, title))
}

fn is_reference_title(title: &str) -> bool {
    let t = title.trim().trim_end_matches(':').trim();
    t.eq_ignore_ascii_case("references") || t.eq_ignore_ascii_case("bibliography")
}

fn scan(document: &str) -> Scan<'_> {
    let mut out = Scan { lines: document.lines().collect(), ..Default::default() };
    let mut in_fence = false;
    let mut all: Vec<Heading> = Vec::new();
    for (i, line) in out.lines.iter().enumerate() {
        let t = line.trim_start();
        if t.starts_with("```") || t.starts_with("~~~") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some((level, title)) = parse_heading(line) {
            all.push(Heading { line: i, level, title });
        }
    }

    let mut skip_until_level: Option<usize> = None;
    for (pos, h) in all.iter().enumerate() {
        if let Some(level) = skip_until_level {
            if h.level > level {
                continue;
            }
            skip_until_level = None;
        }
        if is_reference_title(&h.title) {
            if out.reference_section.is_none() {
                let end = all[pos + 1..].iter().find(|n| n.level <= h.level).map_or(out.lines.len(), |n| n.line);
                out.reference_section = Some((h.line + 1, end));
            }
            skip_until_level = Some(h.level);
            continue;
        }
        let mut h = h.clone();
        if h.level > MAX_HEADING_DEPTH {
            out.warnings
                .push(format!("heading '{}' at level {} clipped to depth {MAX_HEADING_DEPTH}", h.title, h.level));
            h.level = MAX_HEADING_DEPTH;
        }
        if h.title.is_empty() {
            out.warnings.push(format!("empty heading on line {} titled {UNTITLED}", h.line + 1));
            h.title = UNTITLED.to_string();
        }
        out.headings.push(h);
    }
    out
}

/// Builds the tree and, for every outline heading, its root-to-node path.
fn build_tree(scan: &Scan<'_>) -> Result<(OutlineTree, Vec<Vec<String>>), DecomposeError> {
    if scan.headings.is_empty() {
        return Err(DecomposeError::NoHeadings);
    }
    let mut root = OutlineNode::new("", 0, 0);
    // Child-index path from root to the most recently inserted node.
    let mut cursor: Vec<usize> = Vec::new();
    let mut paths = Vec::with_capacity(scan.headings.len());
    for h in &scan.headings {
        cursor.truncate(h.level - 1);
        let mut node = &mut root;
        for &i in &cursor {
            node = &mut node.children[i];
        }
        // Repair skipped levels.
        while node.depth + 1 < h.level {
            node.push_child(UNTITLED);
            cursor.push(node.children.len() - 1);
            node = node.children.last_mut().expect("just pushed");
        }
        node.push_child(h.title.clone());
        cursor.push(node.children.len() - 1);

        let mut path = Vec::with_capacity(cursor.len());
        let mut n = &root;
        for &i in &cursor {
            n = &n.children[i];
            path.push(n.title.clone());
        }
        paths.push(path);
    }
    let max_depth = root.max_depth();
    Ok((OutlineTree { root, max_depth }, paths))
}

pub fn parse_outline(document: &str) -> Result<OutlineTree, DecomposeError> {
    build_tree(&scan(document)).map(|(tree, _)| tree)
}

/// Renders the outline back to heading lines; parsing the result yields the
/// same tree.
pub fn render_outline(tree: &OutlineTree) -> String {
    fn walk(node: &OutlineNode, out: &mut String) {
        for child in &node.children {
            out.push_str(&"#".repeat(child.depth));
            out.push(' ');
            out.push_str(&child.title);
            out.push('\n');
            walk(child, out);
        }
    }
    let mut out = String::new();
    walk(&tree.root, &mut out);
    out
}

/// Groups sibling leaves under their common parent, one document per parent
/// that has at least one leaf child. Parents are visited in pre-order.
pub fn split_outline_paths(tree: &OutlineTree) -> Vec<OutlinePathDocument> {
    let mut docs = Vec::new();
    tree.for_each_parent(|path, node| {
        let leaf_titles: Vec<String> = node.children.iter().filter(|c| c.is_leaf()).map(|c| c.title.clone()).collect();
        if leaf_titles.is_empty() {
            return;
        }
        let mut rendered_text = path.join(PATH_JOINER);
        if !rendered_text.is_empty() {
            rendered_text.push_str(PATH_JOINER);
        }
        rendered_text.push_str(&leaf_titles.join(LEAF_JOINER));
        docs.push(OutlinePathDocument { parent_path: path.to_vec(), leaf_titles, rendered_text });
    });
    docs
}

fn sections_from_scan(scan: &Scan<'_>) -> Vec<ContentSection> {
    let Ok((_, paths)) = build_tree(scan) else {
        return Vec::new();
    };
    // Every heading line (outline or not) terminates a body.
    let mut boundaries: Vec<usize> = scan.headings.iter().map(|h| h.line).collect();
    if let Some((start, _)) = scan.reference_section {
        boundaries.push(start - 1);
    }
    for (i, line) in scan.lines.iter().enumerate() {
        if parse_heading(line).is_some() {
            boundaries.push(i);
        }
    }
    boundaries.sort_unstable();
    boundaries.dedup();

    scan.headings
        .iter()
        .zip(paths)
        .enumerate()
        .map(|(i, (h, heading_path))| {
            let end = boundaries.iter().copied().find(|&b| b > h.line).unwrap_or(scan.lines.len());
            let body = scan.lines[h.line + 1..end].join("\n").trim().to_string();
            ContentSection { heading_path, is_container: body.is_empty(), body, index: i + 1 }
        })
        .collect()
}

/// Splits the document into content sections, one per outline heading, in
/// document order. The bibliography is excluded.
pub fn parse_sections(document: &str) -> Vec<ContentSection> {
    sections_from_scan(&scan(document))
}

static NUMBERED_ENTRY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\[(\d+)\]|(\d+)\.)\s+(.*)$").expect("valid regex"));

fn references_from_scan(scan: &Scan<'_>) -> Result<Vec<ReferenceEntry>, DecomposeError> {
    let Some((start, end)) = scan.reference_section else {
        return Ok(Vec::new());
    };
    let mut entries: Vec<ReferenceEntry> = Vec::new();
    let mut seen = HashSet::new();
    for line in &scan.lines[start..end] {
        if line.trim().is_empty() || parse_heading(line).is_some() {
            continue;
        }
        let numbered = NUMBERED_ENTRY.captures(line).and_then(|c| {
            let key = c.get(1).or_else(|| c.get(2))?.as_str().parse::<u32>().ok()?;
            (key >= 1).then(|| (key, c[3].trim().to_string()))
        });
        match numbered {
            Some((key, text)) => {
                if !seen.insert(key) {
                    return Err(DecomposeError::DuplicateReferenceKey(key));
                }
                let index = entries.len() + 1;
                entries.push(ReferenceEntry { key, text, index });
            }
            None => {
                if let Some(last) = entries.last_mut() {
                    if !last.text.is_empty() {
                        last.text.push(' ');
                    }
                    last.text.push_str(line.trim());
                }
            }
        }
    }
    Ok(entries)
}

/// Reads the bibliography: one entry per `[n] text` or `n. text` line, with
/// unnumbered lines appended to the previous entry. A missing section yields
/// an empty list.
pub fn parse_references(document: &str) -> Result<Vec<ReferenceEntry>, DecomposeError> {
    references_from_scan(&scan(document))
}

pub fn has_reference_section(document: &str) -> bool {
    scan(document).reference_section.is_some()
}

// ---------------------------------------------------------------------------
// Sentences and citations

fn is_abbreviation(text_before: &str) -> bool {
    let word = text_before.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(['(', '[', '"', '\'']);
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Single initials such as "J." in author lists.
    let stem = word.trim_end_matches('.');
    stem.chars().count() == 1 && stem.chars().all(char::is_uppercase)
}

/// Splits text into sentences on `.`, `?` or `!` followed by whitespace (or
/// end of text), skipping known abbreviations. Every non-whitespace character
/// of the input lands in exactly one sentence.
pub fn segment_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let end = i + c.len_utf8();
        let boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if !boundary || (c == '.' && is_abbreviation(&text[start..end])) {
            continue;
        }
        let sentence = text[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence);
        }
        start = end;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

static CITATION_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[\s*(\d+(?:\s*[-–]\s*\d+)?(?:\s*,\s*\d+(?:\s*[-–]\s*\d+)?)*)\s*\]").expect("valid regex")
});

/// All keys cited in `sentence`, deduplicated in textual order with ranges
/// expanded.
pub fn citation_keys(sentence: &str) -> Vec<u32> {
    let mut keys = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |k: u32, keys: &mut Vec<u32>| {
        if seen.insert(k) {
            keys.push(k);
        }
    };
    for caps in CITATION_MARKER.captures_iter(sentence) {
        for item in caps[1].split(',') {
            let mut bounds = item.split(['-', '–']).map(|s| s.trim().parse::<u32>());
            match (bounds.next(), bounds.next()) {
                (Some(Ok(a)), None) => push(a, &mut keys),
                (Some(Ok(a)), Some(Ok(b))) if a <= b && ((b - a) as usize) < MAX_CITATION_RANGE => {
                    for k in a..=b {
                        push(k, &mut keys);
                    }
                }
                _ => {}
            }
        }
    }
    keys
}

pub fn extract_citation_sentences(sections: &[ContentSection], references: &[ReferenceEntry]) -> Vec<CitationSentence> {
    let known: HashSet<u32> = references.iter().map(|r| r.key).collect();
    let mut out = Vec::new();
    for section in sections {
        for sentence in segment_sentences(&section.body) {
            let keys = citation_keys(sentence);
            if keys.is_empty() {
                continue;
            }
            let (cited_keys, dangling_keys) = keys.into_iter().partition(|k| known.contains(k));
            out.push(CitationSentence {
                section_index: section.index,
                sentence: sentence.to_string(),
                cited_keys,
                dangling_keys,
            });
        }
    }
    out
}

/// Structural invariants of a decomposition, as human-readable violations:
/// every leaf lands in exactly one outline-path document, every citation key
/// is classified against the bibliography, and sentence segmentation keeps
/// every non-whitespace character of every section body.
pub fn audit(d: &Decomposition) -> Vec<String> {
    let mut violations = Vec::new();

    let mut leaves: HashMap<(Vec<String>, &str), usize> = HashMap::new();
    fn collect<'a>(node: &'a OutlineNode, path: &mut Vec<String>, out: &mut HashMap<(Vec<String>, &'a str), usize>) {
        for child in &node.children {
            if child.is_leaf() {
                *out.entry((path.clone(), child.title.as_str())).or_default() += 1;
            } else {
                path.push(child.title.clone());
                collect(child, path, out);
                path.pop();
            }
        }
    }
    collect(&d.outline.root, &mut Vec::new(), &mut leaves);
    let mut placed: HashMap<(Vec<String>, &str), usize> = HashMap::new();
    for doc in &d.outline_paths {
        for t in &doc.leaf_titles {
            *placed.entry((doc.parent_path.clone(), t.as_str())).or_default() += 1;
        }
    }
    for (leaf, n) in &leaves {
        let got = placed.get(leaf).copied().unwrap_or(0);
        if got != *n {
            violations.push(format!("leaf {:?} under {:?} appears {got} times, expected {n}", leaf.1, leaf.0));
        }
    }
    for leaf in placed.keys().filter(|k| !leaves.contains_key(*k)) {
        violations.push(format!("outline-path document lists unknown leaf {:?} under {:?}", leaf.1, leaf.0));
    }

    let known: HashSet<u32> = d.references.iter().map(|r| r.key).collect();
    for c in &d.citations {
        for k in c.cited_keys.iter().filter(|k| !known.contains(k)) {
            violations.push(format!("section {}: cited key {k} has no reference entry", c.section_index));
        }
        for k in c.dangling_keys.iter().filter(|k| known.contains(k)) {
            violations.push(format!("section {}: key {k} marked dangling but resolves", c.section_index));
        }
    }

    let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
    for s in &d.sections {
        let joined: String = segment_sentences(&s.body).concat();
        if squash(&joined) != squash(&s.body) {
            violations.push(format!("section {}: segmentation drops or reorders text", s.index));
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn titles(node: &OutlineNode) -> Vec<&str> {
        node.children.iter().map(|c| c.title.as_str()).collect()
    }

    #[test]
    fn outline_maps_heading_levels() {
        let tree = parse_outline("# A\n## A1\n## A2\n# B").unwrap();
        assert_eq!(titles(&tree.root), ["A", "B"]);
        assert_eq!(titles(&tree.root.children[0]), ["A1", "A2"]);
        assert_eq!(tree.max_depth, 2);
        assert_eq!(tree.root.children[0].children[1].ordinal, 2);
        assert_eq!(tree.root.children[0].children[1].depth, 2);
    }

    #[test]
    fn skipped_level_gets_untitled_node() {
        let tree = parse_outline("# A\n### deep").unwrap();
        let a = &tree.root.children[0];
        assert_eq!(titles(a), [UNTITLED]);
        assert_eq!(titles(&a.children[0]), ["deep"]);
        assert_eq!(a.children[0].children[0].depth, 3);
        assert_eq!(tree.max_depth, 3);
    }

    #[test]
    fn deep_headings_are_clipped() {
        let d = decompose("# A\n## B\n### C\n#### D\nbody").unwrap();
        assert_eq!(d.outline.max_depth, 3);
        assert_eq!(titles(&d.outline.root.children[0].children[0]), ["C", "D"]);
        assert!(d.warnings.iter().any(|w| w.contains("clipped")));
    }

    #[test]
    fn no_headings_is_an_error() {
        assert_eq!(parse_outline("just text\nmore"), Err(DecomposeError::NoHeadings));
        assert_eq!(parse_outline(""), Err(DecomposeError::NoHeadings));
        assert_eq!(parse_outline("# References\n[1] x"), Err(DecomposeError::NoHeadings));
    }

    #[test]
    fn not_headings() {
        assert!(parse_heading("#hashtag").is_none());
        assert!(parse_heading("    # indented code").is_none());
        assert_eq!(parse_heading("## Title ##"), Some((2, "Title".into())));
        let tree = parse_outline("# A\n```\n# not a heading\n```\n").unwrap();
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn outline_paths_group_sibling_leaves() {
        let tree = parse_outline("# A\n## A1\n## A2\n# B").unwrap();
        let docs = split_outline_paths(&tree);
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].parent_path, Vec::<String>::new());
        assert_eq!(docs[0].leaf_titles, ["B"]);
        assert_eq!(docs[0].rendered_text, "B");
        assert_eq!(docs[1].parent_path, ["A"]);
        assert_eq!(docs[1].leaf_titles, ["A1", "A2"]);
        assert_eq!(docs[1].rendered_text, "A > A1; A2");
    }

    #[test]
    fn outline_paths_chain_and_flat() {
        let chain = split_outline_paths(&parse_outline("# A\n## A1").unwrap());
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].parent_path, ["A"]);
        assert_eq!(chain[0].leaf_titles, ["A1"]);

        let flat = split_outline_paths(&parse_outline("# A\n# B\n# C").unwrap());
        assert_eq!(flat.len(), 1);
        assert!(flat[0].parent_path.is_empty());
        assert_eq!(flat[0].leaf_titles, ["A", "B", "C"]);
        assert_eq!(flat[0].rendered_text, "A; B; C");
    }

    #[test]
    fn sections_slice_between_headings() {
        let s = parse_sections("# A\npara1\n## A1\npara2");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].heading_path, ["A"]);
        assert_eq!(s[0].body, "para1");
        assert_eq!(s[1].heading_path, ["A", "A1"]);
        assert_eq!(s[1].body, "para2");
        assert!(!s[0].is_container);
    }

    #[test]
    fn empty_section_is_container() {
        let s = parse_sections("# A\n## A1\ntext");
        assert_eq!(s[0].body, "");
        assert!(s[0].is_container);
    }

    #[test]
    fn references_excluded_from_sections_and_outline() {
        let doc = "# Intro\ntext [1].\n# References\n[1] Foo\n";
        let d = decompose(doc).unwrap();
        assert_eq!(d.sections.len(), 1);
        assert_eq!(d.sections[0].body, "text [1].");
        assert_eq!(d.outline.node_count(), 1);
        assert_eq!(d.references.len(), 1);
    }

    #[test]
    fn references_parse_both_numbering_styles() {
        let r = parse_references("## References\n[1] Foo\n[2] Bar").unwrap();
        assert_eq!(
            r,
            vec![
                ReferenceEntry { key: 1, text: "Foo".into(), index: 1 },
                ReferenceEntry { key: 2, text: "Bar".into(), index: 2 },
            ]
        );
        let r = parse_references("# Bibliography\n1. Foo\n2. Bar").unwrap();
        assert_eq!(r[1].key, 2);
        assert_eq!(r[1].text, "Bar");
    }

    #[test]
    fn wrapped_reference_is_joined() {
        let r = parse_references("# references\n[1] Foo\n    et al.").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].text, "Foo et al.");
    }

    #[test]
    fn duplicate_reference_key() {
        assert_eq!(parse_references("# References\n[1] a\n[1] b"), Err(DecomposeError::DuplicateReferenceKey(1)));
    }

    #[test]
    fn missing_reference_section_warns() {
        let d = decompose("# A\ntext").unwrap();
        assert!(d.references.is_empty());
        assert!(!has_reference_section("# A\ntext"));
        assert!(d.warnings.iter().any(|w| w.contains("References")));
    }

    #[test]
    fn segmentation_guards_abbreviations() {
        let s = segment_sentences("Smith et al. show this [1]. See Fig. 2 for details! Why? Done");
        assert_eq!(s, ["Smith et al. show this [1].", "See Fig. 2 for details!", "Why?", "Done"]);
        assert_eq!(segment_sentences("Value 3.5 is high. Next."), ["Value 3.5 is high.", "Next."]);
    }

    #[test]
    fn citation_markers() {
        assert_eq!(citation_keys("X is true [1,3]."), [1, 3]);
        assert_eq!(citation_keys("Y holds [2-4]."), [2, 3, 4]);
        assert_eq!(citation_keys("A [3] and [1, 3] and [2–3]"), [3, 1, 2]);
        assert!(citation_keys("no [markers] here [a]").is_empty());
        assert!(citation_keys("bad range [5-2]").is_empty());
    }

    fn refs(keys: &[u32]) -> Vec<ReferenceEntry> {
        keys.iter()
            .enumerate()
            .map(|(i, &k)| ReferenceEntry { key: k, text: format!("ref {k}"), index: i + 1 })
            .collect()
    }

    fn section(body: &str) -> ContentSection {
        ContentSection { heading_path: vec!["S".into()], body: body.into(), index: 1, is_container: false }
    }

    #[test]
    fn citation_sentences_resolve_keys() {
        let c = extract_citation_sentences(&[section("X is true [1,3].")], &refs(&[1, 2, 3]));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].cited_keys, [1, 3]);

        let c = extract_citation_sentences(&[section("Y holds [2-4].")], &refs(&[2, 3, 4]));
        assert_eq!(c[0].cited_keys, [2, 3, 4]);

        let c = extract_citation_sentences(&[section("Z [9].")], &refs(&[1]));
        assert_eq!(c.len(), 1);
        assert!(c[0].cited_keys.is_empty());
        assert_eq!(c[0].dangling_keys, [9]);
    }

    #[test]
    fn render_then_parse_is_stable() {
        let tree = parse_outline("# A\n### x\n## B\n# C\n#### deep").unwrap();
        let again = parse_outline(&render_outline(&tree)).unwrap();
        assert_eq!(tree, again);
    }

    #[test]
    fn audit_flags_tampering() {
        let doc = "# A\nText [1]. More [9].\n## A1\n## A2\n# B\n# References\n[1] Ref.";
        let mut d = decompose(doc).unwrap();
        assert!(audit(&d).is_empty(), "{:?}", audit(&d));
        d.outline_paths[0].leaf_titles.pop();
        d.citations[0].cited_keys.push(4);
        assert_eq!(audit(&d).len(), 2, "{:?}", audit(&d));
    }
}
