//! Word-level tokenizer with atomic special tokens.
//!
//! Text is split on whitespace; any reserved special token occurring inside a
//! chunk is cut out and kept whole, so `"<|belief|>train"` yields two tokens.
//! Words outside the vocabulary map to `<unk>`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";

/// Hard upper bound on encoded sequence length.
pub const MAX_SEQUENCE_LEN: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    special_ids: Vec<TokenId>,
    // Longest first, for greedy matching inside whitespace chunks.
    specials_by_len: Vec<String>,
}

impl Vocab {
    /// Builds a vocabulary: `<unk>` first, then `special_tokens` in the given
    /// order, then corpus words in order of first occurrence.
    pub fn build<S: AsRef<str>>(corpus_texts: &[S], special_tokens: &[&str]) -> Result<Self> {
        if corpus_texts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Self::empty();
        vocab.push(UNK, true);
        for special in special_tokens {
            vocab.push(special, true);
        }
        vocab.refresh_specials();
        for text in corpus_texts {
            for piece in vocab.pieces(text.as_ref()) {
                if !vocab.token_to_id.contains_key(piece) {
                    vocab.push(piece, false);
                }
            }
        }
        Ok(vocab)
    }

    fn empty() -> Self {
        Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            special_ids: Vec::new(),
            specials_by_len: Vec::new(),
        }
    }

    fn push(&mut self, token: &str, special: bool) {
        if self.token_to_id.contains_key(token) {
            return;
        }
        let id = self.id_to_token.len() as TokenId;
        self.token_to_id.insert(token.to_string(), id);
        self.id_to_token.push(token.to_string());
        if special {
            self.special_ids.push(id);
        }
    }

    fn refresh_specials(&mut self) {
        let mut specials: Vec<String> = self
            .special_ids
            .iter()
            .map(|&id| self.id_to_token[id as usize].clone())
            .filter(|t| t != UNK)
            .collect();
        specials.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        self.specials_by_len = specials;
    }

    /// Adds words (not special tokens) that are not yet known. Used to extend
    /// a corpus vocabulary with database values.
    pub fn extend_words<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) {
        for word in words {
            for piece in word.split_whitespace() {
                self.push(piece, false);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn unk_id(&self) -> TokenId {
        self.token_to_id[UNK]
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn special_ids(&self) -> &[TokenId] {
        &self.special_ids
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special_ids.contains(&id)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Splits text into surface pieces: whitespace chunks with special tokens
    /// cut out atomically.
    fn pieces<'t>(&self, text: &'t str) -> Vec<&'t str> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let mut rest = chunk;
            while !rest.is_empty() {
                match self.find_special(rest) {
                    Some((start, len)) => {
                        if start > 0 {
                            out.push(&rest[..start]);
                        }
                        out.push(&rest[start..start + len]);
                        rest = &rest[start + len..];
                    }
                    None => {
                        out.push(rest);
                        break;
                    }
                }
            }
        }
        out
    }

    /// Leftmost special-token occurrence; the longest token wins at a tie.
    fn find_special(&self, s: &str) -> Option<(usize, usize)> {
        if !s.contains("<") {
            return None;
        }
        let mut best: Option<(usize, usize)> = None;
        for special in &self.specials_by_len {
            if let Some(pos) = s.find(special.as_str()) {
                let better = match best {
                    None => true,
                    Some((b, _)) => pos < b,
                };
                if better {
                    best = Some((pos, special.len()));
                }
            }
        }
        best
    }

    /// Encodes text, truncating to [`MAX_SEQUENCE_LEN`].
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_with_limit(text, MAX_SEQUENCE_LEN)
    }

    pub fn encode_with_limit(&self, text: &str, max_len: usize) -> Vec<TokenId> {
        let unk = self.unk_id();
        self.pieces(text)
            .into_iter()
            .take(max_len)
            .map(|p| self.id(p).unwrap_or(unk))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let token = self.token(id).ok_or(Error::TokenOutOfRange {
                id,
                size: self.len(),
            })?;
            words.push(token);
        }
        Ok(words.join(" "))
    }

    /// Writes one token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for token in &self.id_to_token {
            writeln!(file, "{token}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Loads a vocabulary file. Tokens listed in `special_tokens` (and `<unk>`)
    /// are marked special.
    pub fn load(path: &Path, special_tokens: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(text.lines(), special_tokens)
    }

    pub fn from_lines<'a>(
        lines: impl IntoIterator<Item = &'a str>,
        special_tokens: &[&str],
    ) -> Result<Self> {
        let mut vocab = Self::empty();
        for (lineno, line) in lines.into_iter().enumerate() {
            if line.is_empty() || line.contains(char::is_whitespace) {
                return Err(Error::Schema {
                    path: format!("vocab line {}", lineno + 1),
                    message: format!("invalid token {line:?}"),
                });
            }
            if vocab.token_to_id.contains_key(line) {
                return Err(Error::Schema {
                    path: format!("vocab line {}", lineno + 1),
                    message: format!("duplicate token {line:?}"),
                });
            }
            let special = line == UNK || special_tokens.contains(&line);
            vocab.push(line, special);
        }
        if !vocab.token_to_id.contains_key(UNK) {
            return Err(Error::Schema {
                path: "vocab".into(),
                message: format!("missing {UNK}"),
            });
        }
        vocab.refresh_specials();
        Ok(vocab)
    }
}
