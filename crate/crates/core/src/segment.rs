//! Splitting a narrative into per-frame passages.

use alloc::string::String;
use alloc::vec::Vec;

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(if c.is_whitespace() { ' ' } else { c });
        let terminal = matches!(c, '.' | '!' | '?' | '。' | '！' | '？');
        if terminal && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = cur.trim();
            if !s.is_empty() {
                out.push(String::from(s));
            }
            cur.clear();
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(String::from(s));
    }
    out
}

/// Splits `narrative` into exactly `n` passages, in order.
///
/// Non-empty lines are used when there are exactly `n` of them (a narrative
/// written one frame per line); otherwise sentences are distributed as evenly
/// as possible, earlier passages taking the remainder. When there are fewer
/// sentences than `n`, the last sentence repeats. Returns an empty vector for
/// `n == 0` or a blank narrative.
pub fn split_narrative(narrative: &str, n: usize) -> Vec<String> {
    if n == 0 || narrative.trim().is_empty() {
        return Vec::new();
    }
    let lines: Vec<&str> = narrative
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.len() == n {
        return lines.into_iter().map(String::from).collect();
    }
    let sents = sentences(narrative);
    if sents.len() <= n {
        let last = sents.len() - 1;
        return (0..n).map(|i| sents[i.min(last)].clone()).collect();
    }
    let base = sents.len() / n;
    let extra = sents.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut it = sents.into_iter();
    for i in 0..n {
        let take = base + usize::from(i < extra);
        let chunk: Vec<String> = it.by_ref().take(take).collect();
        out.push(chunk.join(" "));
    }
    out
}
