//! Lexical helpers shared by resolution, discovery, validation and scoring.
//!
//! Everything here works on a locale-independent lowercase fold and treats
//! ASCII alphanumerics, `_` and any non-ASCII alphabetic character as word
//! characters. Phrase matching respects word boundaries so that `ARR` never
//! matches inside `arrive`.

use std::collections::BTreeSet;

/// Locale-independent lowercase fold.
pub fn fold(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// A word token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Splits `s` into maximal runs of word characters.
pub fn word_tokens(s: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                out.push(Token { text: &s[st..i], start: st, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push(Token { text: &s[st..], start: st, end: s.len() });
    }
    out
}

/// Distinct folded word terms of `s`.
pub fn term_set(s: &str) -> BTreeSet<String> {
    word_tokens(s).into_iter().map(|t| fold(t.text)).collect()
}

/// Normalizes a phrase to its folded word sequence joined by single spaces.
///
/// `"Combined  Ratio"` and `"combined-ratio"` both become `"combined ratio"`.
pub fn phrase_key(s: &str) -> String {
    word_tokens(s)
        .into_iter()
        .map(|t| fold(t.text))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A folded, tokenized view of a text that supports boundary-respecting
/// phrase search with byte spans into the original.
pub struct FoldedText<'a> {
    source: &'a str,
    tokens: Vec<Token<'a>>,
    folded: Vec<String>,
}

impl<'a> FoldedText<'a> {
    pub fn new(source: &'a str) -> Self {
        let tokens = word_tokens(source);
        let folded = tokens.iter().map(|t| fold(t.text)).collect();
        Self { source, tokens, folded }
    }

    pub fn source(&self) -> &'a str {
        self.source
    }

    pub fn tokens(&self) -> &[Token<'a>] {
        &self.tokens
    }

    pub fn folded(&self) -> &[String] {
        &self.folded
    }

    /// All occurrences of `phrase` as `(first_token, token_len)` pairs.
    pub fn find_phrase(&self, phrase: &str) -> Vec<(usize, usize)> {
        let needle: Vec<String> = word_tokens(phrase).iter().map(|t| fold(t.text)).collect();
        if needle.is_empty() || needle.len() > self.folded.len() {
            return Vec::new();
        }
        (0..=self.folded.len() - needle.len())
            .filter(|&i| self.folded[i..i + needle.len()] == needle[..])
            .map(|i| (i, needle.len()))
            .collect()
    }

    pub fn contains_phrase(&self, phrase: &str) -> bool {
        !self.find_phrase(phrase).is_empty()
    }

    /// Byte span covered by tokens `[first, first + len)`.
    pub fn span(&self, first: usize, len: usize) -> (usize, usize) {
        (self.tokens[first].start, self.tokens[first + len - 1].end)
    }
}

/// Optimal string alignment distance: Levenshtein plus adjacent
/// transpositions, each edit costing one.
pub fn osa_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    d[0] = (0..=m).collect();
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = v;
        }
    }
    d[n][m]
}

/// Whether `a` and `b` are exactly one OSA edit apart.
pub fn one_edit_apart(a: &str, b: &str) -> bool {
    a.chars().count().abs_diff(b.chars().count()) <= 1 && osa_distance(a, b) == 1
}

/// Byte offsets of sentence boundaries. A sentence ends at `.`, `!`, `?` or
/// `;` followed by whitespace or end of text, or at a newline. A period
/// between digits (`2.5`) does not end a sentence.
pub fn sentence_spans(s: &str) -> Vec<(usize, usize)> {
    let bytes = s.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let ends = match b {
            b'\n' => true,
            b'.' | b'!' | b'?' | b';' => i + 1 >= bytes.len() || bytes[i + 1].is_ascii_whitespace(),
            _ => false,
        };
        if ends {
            if i > start {
                spans.push((start, i));
            }
            start = i + 1;
        }
        i += 1;
    }
    if start < bytes.len() {
        spans.push((start, bytes.len()));
    }
    spans
}

/// A number literal found in text.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberSpan {
    pub value: f64,
    pub start: usize,
    pub end: usize,
}

/// Finds standalone decimal numbers (optionally signed, with `,` thousands
/// separators). Digits glued to letters (`Q3`, `SOC2`) are not numbers.
pub fn find_numbers(s: &str) -> Vec<NumberSpan> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let prev_word = s[..i].chars().next_back().is_some_and(|c| is_word_char(c) || c == '.');
        let mut j = i;
        while j < bytes.len()
            && (bytes[j].is_ascii_digit()
                || (matches!(bytes[j], b'.' | b',')
                    && j + 1 < bytes.len()
                    && bytes[j + 1].is_ascii_digit()))
        {
            j += 1;
        }
        let next_word = s[j..].chars().next().is_some_and(is_word_char);
        if !prev_word && !next_word {
            let mut start = i;
            if i > 0 && bytes[i - 1] == b'-' {
                let before = s[..i - 1].chars().next_back();
                if before.is_none_or(|c| !is_word_char(c)) {
                    start = i - 1;
                }
            }
            let literal: String = s[start..j].chars().filter(|&c| c != ',').collect();
            if let Ok(value) = literal.parse::<f64>() {
                out.push(NumberSpan { value, start, end: j });
            }
        }
        i = j.max(i + 1);
    }
    out
}

/// FNV-1a, used wherever a hash must be stable across processes.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
