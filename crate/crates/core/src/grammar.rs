//! Scanner for the `Name:{value}` reply grammar.
//!
//! A pair is a name, a colon, optional horizontal whitespace, and a value
//! running from `{` to the first following `}`. Values are opaque: nothing
//! inside them (blank lines, fences, list markers, other pairs) is seen by
//! block splitting, which only inspects the gaps between pairs.
//!
//! All spans are byte offsets into the scanned text.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

/// One `Name:{value}` occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPair {
    /// Name as written, trimmed of whitespace and markdown emphasis.
    pub name: String,
    /// Lowercase, whitespace-collapsed form of `name`.
    pub key: String,
    /// Value with surrounding whitespace trimmed.
    pub value: String,
    pub span: Range<usize>,
}

/// An ordered run of pairs that belongs to one prompt. Keys are unique
/// within a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBlock {
    pub pairs: Vec<ParsedPair>,
    pub span: Range<usize>,
}

impl ParsedBlock {
    fn from_pairs(pairs: Vec<ParsedPair>) -> Self {
        let span = match (pairs.first(), pairs.last()) {
            (Some(a), Some(b)) => a.span.start..b.span.end,
            _ => 0..0,
        };
        ParsedBlock { pairs, span }
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphabetic() || matches!(c, ' ' | '\t' | '_' | '-' | '&' | '*')
}

fn trim_name(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '-' | '_'))
}

/// Lowercases and collapses runs of whitespace, `_` and `-` to one space.
pub fn canonical_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_space = false;
    for c in name.chars() {
        if c.is_whitespace() || c == '_' || c == '-' {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Resolves a canonical key against `(alias, target)` pairs: an exact alias
/// wins, otherwise the longest alias that ends the key on a word boundary
/// (so `"here is the style age"` resolves to `age`).
pub fn resolve_key<T: Copy>(key: &str, table: &[(&str, T)]) -> Option<T> {
    if let Some(&(_, t)) = table.iter().find(|(a, _)| *a == key) {
        return Some(t);
    }
    table
        .iter()
        .filter(|(a, _)| {
            key.len() > a.len()
                && key.ends_with(a)
                && key.as_bytes()[key.len() - a.len() - 1] == b' '
        })
        .max_by_key(|(a, _)| a.len())
        .map(|&(_, t)| t)
}

/// Finds every pair in `text`, in order.
pub fn scan_pairs(text: &str) -> Vec<ParsedPair> {
    let mut out = Vec::new();
    let mut pos = 0;
    let mut floor = 0;
    while let Some(rel) = text[pos..].find('{') {
        let brace = pos + rel;
        pos = brace + 1;
        let before = text[floor..brace].trim_end_matches([' ', '\t']);
        if !before.ends_with(':') {
            continue;
        }
        let colon = floor + before.len() - 1;
        let head = &text[floor..colon];
        let name_start = head
            .char_indices()
            .rev()
            .take_while(|&(_, c)| is_name_char(c))
            .last()
            .map_or(colon, |(i, _)| floor + i);
        let raw = &text[name_start..colon];
        let name = trim_name(raw);
        if name.is_empty() || !name.chars().any(char::is_alphabetic) {
            continue;
        }
        let Some(crel) = text[brace + 1..].find('}') else {
            break;
        };
        let close = brace + 1 + crel;
        let start =
            name_start + (raw.len() - raw.trim_start_matches(|c: char| !c.is_alphabetic()).len());
        out.push(ParsedPair {
            name: name.into(),
            key: canonical_name(name),
            value: text[brace + 1..close].trim().into(),
            span: start..close + 1,
        });
        pos = close + 1;
        floor = close + 1;
    }
    out
}

/// Byte ranges of fenced code cells (content between ``` lines). Fence lines
/// inside pair values are ignored. An unterminated fence runs to the end.
fn fenced_regions(text: &str, pairs: &[ParsedPair]) -> Vec<Range<usize>> {
    let inside_value = |at: usize| pairs.iter().any(|p| p.span.start < at && at < p.span.end);
    let mut fences = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("```") && !inside_value(line_start) {
            fences.push((line_start, line_start + line.len()));
        }
        line_start += line.len();
    }
    fences
        .chunks(2)
        .map(|c| match c {
            [open, close] => open.1..close.0,
            [open] => open.1..text.len(),
            _ => unreachable!(),
        })
        .collect()
}

/// Lines of `gap` that begin after a newline, i.e. real line starts.
fn gap_lines(gap: &str) -> impl Iterator<Item = &str> {
    gap.split('\n').skip(1)
}

fn is_numbered_marker(line: &str) -> bool {
    let s = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '#' | '*' | '>'));
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        return matches!(s.as_bytes().get(digits), Some(b'.' | b')' | b':'));
    }
    let word_len = s.bytes().take_while(u8::is_ascii_alphabetic).count();
    let word = s[..word_len].to_ascii_lowercase();
    if !matches!(
        word.as_str(),
        "prompt" | "frame" | "scene" | "image" | "part" | "panel" | "shot"
    ) {
        return false;
    }
    let rest = s[word_len..].trim_start_matches([' ', '#']);
    rest.bytes().next().is_some_and(|b| b.is_ascii_digit())
}

fn has_numbered_marker(gap: &str) -> bool {
    gap_lines(gap).any(is_numbered_marker)
}

fn has_blank_line(gap: &str) -> bool {
    let mut lines = gap.split('\n');
    lines.next();
    // a blank line is a full line (followed by another newline) holding only whitespace
    let full: Vec<&str> = lines.collect();
    full.len() >= 2 && full[..full.len() - 1].iter().any(|l| l.trim().is_empty())
}

/// Pairs that belong to the reply's payload: those inside fenced cells when
/// any cell holds pairs, otherwise all of them. Each pair is tagged with
/// its cell number (0 when unfenced).
pub(crate) fn payload_pairs(text: &str) -> Vec<(usize, ParsedPair)> {
    let pairs = scan_pairs(text);
    let regions = fenced_regions(text, &pairs);
    let cell_of = |p: &ParsedPair| {
        regions
            .iter()
            .position(|r| r.start <= p.span.start && p.span.end <= r.end)
    };
    if pairs.iter().any(|p| cell_of(p).is_some()) {
        pairs
            .into_iter()
            .filter_map(|p| cell_of(&p).map(|c| (c, p)))
            .collect()
    } else {
        pairs.into_iter().map(|p| (0, p)).collect()
    }
}

/// Splits a reply into prompt blocks.
///
/// Boundaries, strongest first: separate fenced cells; numbered list
/// markers (`1.`, `2)`, `Prompt 3:`) when the reply uses them, otherwise
/// blank lines; finally a name repeating inside a block starts a new block.
pub fn split_blocks(text: &str) -> Vec<ParsedBlock> {
    let pairs = payload_pairs(text);
    if pairs.is_empty() {
        return Vec::new();
    }
    let gaps: Vec<&str> = pairs
        .windows(2)
        .map(|w| &text[w[0].1.span.end..w[1].1.span.start])
        .collect();
    let numbered = gaps.iter().any(|g| has_numbered_marker(g));
    let boundary = |i: usize| {
        let (ca, cb) = (pairs[i].0, pairs[i + 1].0);
        ca != cb
            || if numbered {
                has_numbered_marker(gaps[i])
            } else {
                has_blank_line(gaps[i])
            }
    };

    let mut blocks = Vec::new();
    let mut current: Vec<ParsedPair> = Vec::new();
    for (i, (_, pair)) in pairs.iter().enumerate() {
        let repeats = current.iter().any(|p| p.key == pair.key);
        let breaks = i > 0 && boundary(i - 1);
        if (breaks || repeats) && !current.is_empty() {
            blocks.push(ParsedBlock::from_pairs(core::mem::take(&mut current)));
        }
        current.push(pair.clone());
    }
    if !current.is_empty() {
        blocks.push(ParsedBlock::from_pairs(current));
    }
    blocks
}
