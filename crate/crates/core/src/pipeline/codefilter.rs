//! Heuristic removal of code-related samples.

use super::tuples::InstructionRecord;

const CODE_SYMBOLS: &[char] = &['{', '}', '(', ')', ';', '<', '>', '=', '[', ']'];
const LINE_KEYWORDS: &[&str] = &["def", "class", "import", "function"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeHeuristic {
    /// Lines that look like code needed before a text counts as code.
    pub min_code_lines: usize,
    /// Share of code-symbol characters at which a text counts as code.
    pub symbol_ratio: f64,
}

impl Default for CodeHeuristic {
    fn default() -> Self {
        CodeHeuristic {
            min_code_lines: 3,
            symbol_ratio: 0.30,
        }
    }
}

fn is_code_line(line: &str) -> bool {
    let t = line.trim();
    if t.ends_with([';', '{', '}']) {
        return true;
    }
    LINE_KEYWORDS.iter().any(|kw| {
        t.strip_prefix(kw)
            .and_then(|rest| rest.chars().next())
            .is_some_and(char::is_whitespace)
    })
}

pub fn is_code_like(text: &str, h: &CodeHeuristic) -> bool {
    if text.contains("```") {
        return true;
    }
    if text.lines().filter(|l| is_code_line(l)).count() >= h.min_code_lines {
        return true;
    }
    let total = text.chars().count();
    if total == 0 {
        return false;
    }
    let symbols = text.chars().filter(|c| CODE_SYMBOLS.contains(c)).count();
    symbols as f64 >= h.symbol_ratio * total as f64
}

pub fn record_is_code(r: &InstructionRecord, h: &CodeHeuristic) -> bool {
    is_code_like(&r.instruction, h) || is_code_like(&r.response, h)
}

/// Keeps non-code records in order; returns them with the dropped count.
pub fn filter_code_samples<I>(records: I, h: &CodeHeuristic) -> (Vec<InstructionRecord>, usize)
where
    I: IntoIterator<Item = InstructionRecord>,
{
    let mut dropped = 0;
    let kept = records
        .into_iter()
        .filter(|r| {
            let code = record_is_code(r, h);
            dropped += code as usize;
            !code
        })
        .collect();
    (kept, dropped)
}
