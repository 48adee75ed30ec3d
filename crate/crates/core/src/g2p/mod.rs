//! Rule-based Polish grapheme-to-phoneme conversion.
//!
//! A word is looked up in the exception [`Lexicon`] first; only unknown
//! words go through the [`RuleSet`], whose output then gets word-internal
//! voicing. Canonical (running text) mode adds cross-word voicing
//! assimilation within phrases and attaches the prepositions `w` / `z` to
//! the following word.

pub mod inventory;
pub mod lexicon;
pub mod rules;
pub mod syllable;
pub mod voicing;

use std::path::Path;
use std::sync::OnceLock;

pub use inventory::{inventory_table, Phone, PhoneClass, PhoneSeq, UnknownPhone, Voicing};
pub use lexicon::Lexicon;
pub use rules::{RewriteRule, RuleSet};
pub use syllable::{syllabify, Syllable};

pub const DEFAULT_RULES: &str = include_str!("../../data/pl.rules");
pub const DEFAULT_LEXICON: &str = include_str!("../../data/pl.lex");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum G2pError {
    #[error("no rule covers {grapheme:?} at offset {offset} in {word:?}")]
    UnmappableGrapheme { grapheme: char, offset: usize, word: String },
    #[error("empty word")]
    EmptyWord,
    #[error("no vowel to syllabify in [{0}]")]
    NoNucleus(String),
    #[error("rule file line {line}: {message}")]
    RuleSyntax { line: usize, message: String },
    #[error("lexicon line {line}: {message}")]
    LexiconSyntax { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("input is not UTF-8 text (invalid byte at offset {offset})")]
    NotText { offset: usize },
}

/// Strict UTF-8 decoding; control characters other than whitespace are
/// rejected too, since they only occur in binary input.
pub fn decode_text(bytes: &[u8]) -> Result<&str, G2pError> {
    let s = std::str::from_utf8(bytes).map_err(|e| G2pError::NotText { offset: e.valid_up_to() })?;
    match s.char_indices().find(|(_, c)| c.is_control() && !c.is_whitespace()) {
        Some((offset, _)) => Err(G2pError::NotText { offset }),
        None => Ok(s),
    }
}

/// Single-consonant prepositions and their underlying (voiced) phone.
const PREPOSITIONS: &[(&str, &str)] = &[("w", "v"), ("z", "z")];

/// Rule set plus exception lexicon. Immutable once built.
#[derive(Debug, Clone)]
pub struct G2p {
    rules: RuleSet,
    lexicon: Lexicon,
}

impl G2p {
    pub fn new(rules: RuleSet, lexicon: Lexicon) -> Self {
        G2p { rules, lexicon }
    }

    /// The bundled Polish rules and exception list.
    pub fn polish() -> G2p {
        G2p::new(
            RuleSet::parse(DEFAULT_RULES).expect("bundled rules parse"),
            Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon parses"),
        )
    }

    /// Process-wide instance of [`G2p::polish`].
    pub fn shared() -> &'static G2p {
        static SHARED: OnceLock<G2p> = OnceLock::new();
        SHARED.get_or_init(G2p::polish)
    }

    pub fn from_files(rules: Option<&Path>, lexicon: Option<&Path>) -> Result<G2p, G2pError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| G2pError::Io(format!("{}: {e}", p.display())));
        let rules = match rules {
            Some(p) => RuleSet::parse(&read(p)?)?,
            None => RuleSet::parse(DEFAULT_RULES)?,
        };
        let lexicon = match lexicon {
            Some(p) => Lexicon::parse(&read(p)?)?,
            None => Lexicon::parse(DEFAULT_LEXICON)?,
        };
        Ok(G2p::new(rules, lexicon))
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    /// All pronunciations of one orthographic token; never empty on success.
    pub fn transcribe_word(&self, word: &str) -> Result<Vec<PhoneSeq>, G2pError> {
        let word = word.trim().to_lowercase();
        if word.is_empty() {
            return Err(G2pError::EmptyWord);
        }
        if let Some(prons) = self.lexicon.get(&word) {
            return Ok(prons.to_vec());
        }
        self.transcribe_by_rules(&word)
    }

    /// Pronunciations as produced by the rules alone (no lexicon lookup).
    pub fn transcribe_by_rules(&self, word: &str) -> Result<Vec<PhoneSeq>, G2pError> {
        let word = word.trim().to_lowercase();
        if word.is_empty() {
            return Err(G2pError::EmptyWord);
        }
        let mut out: Vec<PhoneSeq> = Vec::new();
        for mut p in self.rules.apply(&word)? {
            voicing::word_internal(&mut p);
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Word list mode: every distinct token of `text` (first-occurrence
    /// order) with all of its pronunciations.
    pub fn word_list(&self, text: &str) -> Result<Vec<(String, Vec<PhoneSeq>)>, G2pError> {
        let mut out: Vec<(String, Vec<PhoneSeq>)> = Vec::new();
        for phrase in tokenize(text) {
            for w in phrase {
                if out.iter().any(|(x, _)| *x == w) {
                    continue;
                }
                let prons = self.transcribe_word(&w)?;
                out.push((w, prons));
            }
        }
        Ok(out)
    }

    /// Canonical transcription of running text.
    pub fn transcribe_canonical(&self, text: &str) -> Result<PhoneSeq, G2pError> {
        let mut out = PhoneSeq::new();
        for phrase in tokenize(text) {
            let mut words = self.phrase_words(&phrase)?;
            voicing::sandhi_phrase(&mut words);
            for w in &words {
                out.extend(w);
            }
        }
        Ok(out)
    }

    /// First pronunciation of every word of a phrase with prepositions
    /// attached, before the cross-word pass.
    fn phrase_words(&self, phrase: &[String]) -> Result<Vec<PhoneSeq>, G2pError> {
        let mut words = Vec::with_capacity(phrase.len());
        let mut i = 0;
        while i < phrase.len() {
            let prep = PREPOSITIONS
                .iter()
                .find(|(w, _)| *w == phrase[i])
                .map(|(_, p)| Phone::from_symbol(p).expect("inventory phone"));
            match (prep, phrase.get(i + 1)) {
                (Some(prep), Some(next)) => {
                    let next = self.first_pronunciation(next)?;
                    words.push(voicing::attach_preposition(prep, &next));
                    i += 2;
                }
                _ => {
                    words.push(self.first_pronunciation(&phrase[i])?);
                    i += 1;
                }
            }
        }
        Ok(words)
    }

    fn first_pronunciation(&self, word: &str) -> Result<PhoneSeq, G2pError> {
        Ok(self.transcribe_word(word)?.swap_remove(0))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '’'
}

/// Splits text into phrases of lowercase words. Punctuation ends a phrase;
/// whitespace and hyphens separate words. Anything alphanumeric is kept so
/// that unsupported characters surface as [`G2pError::UnmappableGrapheme`].
pub fn tokenize(text: &str) -> Vec<Vec<String>> {
    let mut phrases = Vec::new();
    let mut phrase: Vec<String> = Vec::new();
    let mut word = String::new();
    let flush_word = |word: &mut String, phrase: &mut Vec<String>| {
        if !word.is_empty() {
            phrase.push(std::mem::take(word).to_lowercase().replace('’', "'"));
        }
    };
    for c in text.chars() {
        if is_word_char(c) {
            word.push(c);
        } else if c.is_whitespace() || c == '-' || c == '‐' {
            flush_word(&mut word, &mut phrase);
        } else {
            flush_word(&mut word, &mut phrase);
            if !phrase.is_empty() {
                phrases.push(std::mem::take(&mut phrase));
            }
        }
    }
    flush_word(&mut word, &mut phrase);
    if !phrase.is_empty() {
        phrases.push(phrase);
    }
    phrases
}

/// Flat list of tokens, phrase structure dropped.
pub fn words_of(text: &str) -> Vec<String> {
    tokenize(text).into_iter().flatten().collect()
}
