//! Code-point spans and text helpers.
//!
//! All offsets in corpora, predictions and the line protocol count Unicode
//! scalar values (code points), never bytes.

use serde::{Deserialize, Serialize};

/// Half-open code-point range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn shift(&self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }

    /// True when `0 <= start < end <= text_len`.
    pub fn is_valid_in(&self, text_len: usize) -> bool {
        self.start < self.end && self.end <= text_len
    }
}

/// Sorted union of spans; overlapping and touching spans are merged.
pub fn merge_spans(spans: &[Span]) -> Vec<Span> {
    let mut sorted: Vec<Span> = spans.iter().copied().filter(|s| !s.is_empty()).collect();
    sorted.sort_unstable();
    let mut merged: Vec<Span> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match merged.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    merged
}

/// True when every code point of `target` lies inside `union` (a merged span list).
pub fn covered_by(target: Span, union: &[Span]) -> bool {
    if target.is_empty() {
        return true;
    }
    union
        .iter()
        .any(|u| u.start <= target.start && target.end <= u.end)
}

/// Number of code points in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte offset of every code point, plus the total byte length at the end.
pub fn char_byte_offsets(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect()
}

/// Slices `text` by a code-point span. Panics if the span is out of range.
pub fn slice_chars(text: &str, span: Span) -> &str {
    let offsets = char_byte_offsets(text);
    &text[offsets[span.start]..offsets[span.end]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merge_touching_and_overlapping() {
        let merged = merge_spans(&[Span::new(5, 8), Span::new(3, 5), Span::new(10, 12), Span::new(11, 11)]);
        assert_eq!(merged, vec![Span::new(3, 8), Span::new(10, 12)]);
    }

    #[test]
    fn slicing_counts_code_points() {
        let text = "Zoë Ngô sees Dr. Ahmed";
        assert_eq!(slice_chars(text, Span::new(4, 7)), "Ngô");
        assert_eq!(char_len(text), 22);
    }

    proptest! {
        #[test]
        fn merged_union_covers_exactly_the_inputs(raw in prop::collection::vec((0usize..60, 0usize..8), 0..12)) {
            let spans: Vec<Span> = raw.iter().map(|&(s, l)| Span::new(s, s + l)).collect();
            let merged = merge_spans(&spans);
            for w in merged.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for p in 0..70 {
                let point = Span::new(p, p + 1);
                let in_input = spans.iter().any(|s| s.start <= p && p < s.end);
                prop_assert_eq!(in_input, covered_by(point, &merged));
            }
        }
    }
}
