//! Offset-preserving tokenization and BIO/character-span conversion.
//!
//! All offsets are Unicode scalar indices into the sentence, and ranges are
//! inclusive on both ends, matching the gold annotation files.

use serde::{Deserialize, Serialize};

/// Inclusive character range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharRange {
    pub start: usize,
    pub end: usize,
}

impl CharRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        start <= self.end && end >= self.start
    }

    /// Number of characters shared with `other`.
    pub fn intersection_len(&self, other: &CharRange) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    }

    /// The covered slice of `text`, by character.
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        let mut indices = text.char_indices().map(|(b, _)| b).chain([text.len()]);
        let lo = indices.nth(self.start).unwrap_or(text.len());
        let hi = indices.nth(self.end - self.start).unwrap_or(text.len());
        &text[lo..hi]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn range(&self) -> CharRange {
        CharRange::new(self.char_start, self.char_end)
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Whitespace tokenizer that splits leading and trailing punctuation into
/// single-character tokens and keeps internal punctuation ("wouldn't", "1.5").
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let single = |at: usize| Token {
        surface: chars[at].to_string(),
        char_start: at,
        char_end: at,
    };
    let mut lo = start;
    while lo < end && is_punct(chars[lo]) {
        out.push(single(lo));
        lo += 1;
    }
    if lo == end {
        return;
    }
    let mut hi = end;
    while hi > lo && is_punct(chars[hi - 1]) {
        hi -= 1;
    }
    out.push(Token {
        surface: chars[lo..hi].iter().collect(),
        char_start: lo,
        char_end: hi - 1,
    });
    for at in hi..end {
        out.push(single(at));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bio {
    B,
    I,
    O,
}

impl Bio {
    pub const ALL: [Bio; 3] = [Bio::B, Bio::I, Bio::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Bio {
        Self::ALL[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Antecedent,
    Consequent,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Antecedent => "antecedent",
            Role::Consequent => "consequent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSequence {
    pub tags: Vec<Bio>,
    pub role: Role,
}

impl TagSequence {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Rewrites every `I` that opens a run (position 0 or after `O`) to `B`.
    pub fn repair(&mut self) {
        let mut prev = Bio::O;
        for tag in &mut self.tags {
            if *tag == Bio::I && prev == Bio::O {
                *tag = Bio::B;
            }
            prev = *tag;
        }
    }
}

/// Tags every token overlapping `span`; the first one gets `B`.
pub fn spans_to_bio(tokens: &[Token], span: Option<CharRange>, role: Role) -> TagSequence {
    let mut tags = vec![Bio::O; tokens.len()];
    if let Some(span) = span {
        let mut inside = false;
        for (tag, tok) in tags.iter_mut().zip(tokens) {
            if span.overlaps(tok.char_start, tok.char_end) {
                *tag = if inside { Bio::I } else { Bio::B };
                inside = true;
            } else {
                inside = false;
            }
        }
    }
    TagSequence { tags, role }
}

/// Character range of the longest B/I run (earliest on ties), or `None` for
/// an all-`O` sequence.
pub fn bio_to_spans(tokens: &[Token], tags: &TagSequence) -> Option<CharRange> {
    debug_assert_eq!(tokens.len(), tags.len());
    let mut best: Option<(usize, usize)> = None;
    let mut run: Option<usize> = None;
    let n = tags.len().min(tokens.len());
    for i in 0..=n {
        let tag = if i < n { tags.tags[i] } else { Bio::O };
        let continues = tag == Bio::I && run.is_some();
        if !continues {
            if let Some(start) = run.take() {
                let better = match best {
                    Some((s, e)) => i - start > e - s + 1,
                    None => true,
                };
                if better {
                    best = Some((start, i - 1));
                }
            }
            if tag != Bio::O {
                run = Some(i);
            }
        }
    }
    best.map(|(s, e)| CharRange::new(tokens[s].char_start, tokens[e].char_end))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn tokenizes_wish_sentence_with_offsets() {
        let toks = tokenize("I wish it had more.");
        assert_eq!(surfaces(&toks), ["I", "wish", "it", "had", "more", "."]);
        let starts: Vec<usize> = toks.iter().map(|t| t.char_start).collect();
        assert_eq!(starts, [0, 2, 7, 10, 14, 18]);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t").is_empty());
    }

    #[test]
    fn keeps_internal_apostrophe() {
        let toks = tokenize("wouldn't!");
        assert_eq!(surfaces(&toks), ["wouldn't", "!"]);
        assert_eq!((toks[1].char_start, toks[1].char_end), (8, 8));
    }

    #[test]
    fn splits_leading_quotes_and_multichar_punct() {
        let toks = tokenize("\"Hi...\" (x)");
        assert_eq!(
            surfaces(&toks),
            ["\"", "Hi", ".", ".", ".", "\"", "(", "x", ")"]
        );
    }

    #[test]
    fn offsets_are_char_indices_not_bytes() {
        let text = "café déjà vu";
        for t in tokenize(text) {
            assert_eq!(t.range().slice(text), t.surface);
        }
    }

    fn four() -> Vec<Token> {
        tokenize("aa bb cc dd")
    }

    #[test]
    fn bio_from_span() {
        let toks = four();
        let tags = spans_to_bio(&toks, Some(CharRange::new(3, 7)), Role::Antecedent);
        assert_eq!(tags.tags, [Bio::O, Bio::B, Bio::I, Bio::O]);
        let none = spans_to_bio(&toks, None, Role::Consequent);
        assert_eq!(none.tags, [Bio::O; 4]);
        let all = spans_to_bio(&toks, Some(CharRange::new(0, 10)), Role::Antecedent);
        assert_eq!(all.tags, [Bio::B, Bio::I, Bio::I, Bio::I]);
    }

    #[test]
    fn partial_overlap_counts_as_inside() {
        let toks = four();
        let tags = spans_to_bio(&toks, Some(CharRange::new(4, 6)), Role::Antecedent);
        assert_eq!(tags.tags, [Bio::O, Bio::B, Bio::I, Bio::O]);
    }

    #[test]
    fn spans_from_bio() {
        let toks = four();
        let seq = |tags: Vec<Bio>| TagSequence {
            tags,
            role: Role::Antecedent,
        };
        assert_eq!(
            bio_to_spans(&toks, &seq(vec![Bio::O, Bio::B, Bio::I, Bio::O])),
            Some(CharRange::new(3, 7))
        );
        assert_eq!(bio_to_spans(&toks, &seq(vec![Bio::O; 4])), None);
        assert_eq!(
            bio_to_spans(&toks, &seq(vec![Bio::B, Bio::O, Bio::B, Bio::I])),
            Some(CharRange::new(6, 10))
        );
        // leading I and I after O open runs
        assert_eq!(
            bio_to_spans(&toks, &seq(vec![Bio::I, Bio::O, Bio::O, Bio::O])),
            Some(CharRange::new(0, 1))
        );
        // equal-length runs: earliest wins
        assert_eq!(
            bio_to_spans(&toks, &seq(vec![Bio::B, Bio::O, Bio::I, Bio::O])),
            Some(CharRange::new(0, 1))
        );
    }

    #[test]
    fn repair_rewrites_dangling_inside() {
        let mut seq = TagSequence {
            tags: vec![Bio::I, Bio::O, Bio::I, Bio::I],
            role: Role::Consequent,
        };
        seq.repair();
        assert_eq!(seq.tags, [Bio::B, Bio::O, Bio::B, Bio::I]);
    }

    #[test]
    fn slice_of_range() {
        assert_eq!(CharRange::new(2, 5).slice("I wish it"), "wish");
        assert_eq!(CharRange::new(0, 0).slice("é"), "é");
    }
}
