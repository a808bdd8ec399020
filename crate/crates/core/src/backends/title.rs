//! Removing honorifics from the front of predicted spans.

use crate::span::Span;

pub const DEFAULT_TITLES: [&str; 5] = ["Dr.", "Mr.", "Mrs.", "Ms.", "Prof."];

/// Advances `span.start` past a leading title and the whitespace after it.
/// The title must be followed by whitespace inside the span, so "Drive Smith"
/// is left alone.
///
/// ```
/// use deidaudit::backends::title::{strip_title, DEFAULT_TITLES};
/// use deidaudit::Span;
///
/// let text = "Dr. Smith";
/// assert_eq!(strip_title(Span::new(0, 9), text, &DEFAULT_TITLES), Span::new(4, 9));
/// ```
pub fn strip_title<S: AsRef<str>>(span: Span, text: &str, titles: &[S]) -> Span {
    let chars: Vec<char> = text.chars().skip(span.start).take(span.len()).collect();
    for t in titles {
        let t: Vec<char> = t.as_ref().chars().collect();
        if chars.len() > t.len() && chars.starts_with(&t) && chars[t.len()].is_whitespace() {
            let ws = chars[t.len()..].iter().take_while(|c| c.is_whitespace()).count();
            let start = span.start + t.len() + ws;
            if start < span.end {
                return Span::new(start, span.end);
            }
        }
    }
    span
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_real_titles_are_stripped() {
        assert_eq!(strip_title(Span::new(0, 5), "Smith", &DEFAULT_TITLES), Span::new(0, 5));
        assert_eq!(strip_title(Span::new(0, 11), "Drive Smith", &DEFAULT_TITLES), Span::new(0, 11));
        assert_eq!(strip_title(Span::new(3, 15), "Pt Mrs. Ana Lee", &DEFAULT_TITLES), Span::new(8, 15));
        assert_eq!(strip_title(Span::new(0, 3), "Dr. ", &DEFAULT_TITLES), Span::new(0, 3));
        assert_eq!(strip_title(Span::new(0, 10), "Prof. Ngo!", &["Prof."]), Span::new(6, 10));
    }
}
