//! Splitting notes to fit a backend's input limit, and mapping chunk-local
//! spans back to note offsets.

use super::BackendError;
use crate::span::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    /// Code-point offset of the chunk's first character in the note.
    pub offset: usize,
}

/// Splits `text` into consecutive chunks of at most `max_input_chars` code
/// points. A chunk ends after the last newline that fits; failing that, after
/// the last period followed by whitespace; failing that, at the limit.
///
/// ```
/// use deidaudit::backends::chunk::chunk_note;
///
/// let chunks = chunk_note("First line.\nSecond line. Third", 16);
/// assert_eq!(chunks[0].text, "First line.\n");
/// assert_eq!(chunks[1].offset, 12);
/// let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
/// assert_eq!(joined, "First line.\nSecond line. Third");
/// ```
pub fn chunk_note(text: &str, max_input_chars: usize) -> Vec<Chunk> {
    assert!(max_input_chars >= 1, "max_input_chars must be positive");
    let chars: Vec<char> = text.chars().collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while chars.len() - start > max_input_chars {
        let window = &chars[start..start + max_input_chars];
        let newline = window.iter().rposition(|&c| c == '\n').map(|i| i + 1);
        let sentence = || {
            (0..window.len().saturating_sub(1))
                .rev()
                .find(|&i| window[i] == '.' && window[i + 1].is_whitespace())
                .map(|i| i + 2)
        };
        let len = newline.or_else(sentence).unwrap_or(max_input_chars);
        chunks.push(Chunk {
            text: window[..len].iter().collect(),
            offset: start,
        });
        start += len;
    }
    if start < chars.len() || chunks.is_empty() {
        chunks.push(Chunk {
            text: chars[start..].iter().collect(),
            offset: start,
        });
    }
    chunks
}

/// Shifts chunk-local spans to note offsets. Every span must lie within the
/// chunk, which has `chunk_len` code points.
pub fn remap_spans(spans: &[Span], offset: usize, chunk_len: usize) -> Result<Vec<Span>, BackendError> {
    spans
        .iter()
        .map(|s| {
            if s.start > s.end || s.end > chunk_len {
                Err(BackendError::SpanOutsideChunk {
                    start: s.start,
                    end: s.end,
                    len: chunk_len,
                })
            } else {
                Ok(s.shift(offset))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::char_len;
    use proptest::prelude::*;

    #[test]
    fn short_text_is_one_chunk() {
        assert_eq!(chunk_note("abc", 5120), vec![Chunk { text: "abc".into(), offset: 0 }]);
        assert_eq!(chunk_note("", 10).len(), 1);
    }

    #[test]
    fn long_note_at_api_limit() {
        let para = "Patient resting comfortably. Vitals stable overnight.\n".repeat(230);
        assert!(char_len(&para) >= 12_000);
        let chunks = chunk_note(&para, 5120);
        assert!(chunks.len() >= 3);
        assert!(chunks.iter().all(|c| char_len(&c.text) <= 5120));
        assert!(chunks[..chunks.len() - 1].iter().all(|c| c.text.ends_with('\n')));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), para);
    }

    #[test]
    fn prefers_sentence_end_then_hard_cut() {
        let c = chunk_note("Aa bb. Cc dd ee", 10);
        assert_eq!(c[0].text, "Aa bb. ");
        let c = chunk_note("abcdefghij", 4);
        assert_eq!(c.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(), ["abcd", "efgh", "ij"]);
    }

    #[test]
    fn remapping() {
        assert_eq!(remap_spans(&[Span::new(0, 5)], 5120, 100).unwrap(), vec![Span::new(5120, 5125)]);
        assert_eq!(remap_spans(&[Span::new(2, 4)], 0, 10).unwrap(), vec![Span::new(2, 4)]);
        assert!(remap_spans(&[Span::new(2, 11)], 0, 10).is_err());
    }

    proptest! {
        #[test]
        fn chunks_reassemble(text in "[a-c .\n°]{0,300}", max in 1usize..40) {
            let chunks = chunk_note(&text, max);
            let mut expected_offset = 0;
            for c in &chunks {
                prop_assert_eq!(c.offset, expected_offset);
                prop_assert!(char_len(&c.text) <= max);
                expected_offset += char_len(&c.text);
            }
            prop_assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
        }
    }
}
