use std::collections::BTreeMap;

use super::inventory::PhoneSeq;
use super::G2pError;

/// Exception lexicon: lowercase word → ordered pronunciations (never empty).
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<PhoneSeq>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `word phone phone ...` lines; `%` starts a comment.
    pub fn parse(text: &str) -> Result<Lexicon, G2pError> {
        let mut lex = Lexicon::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('%').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let word = parts.next().unwrap_or_default();
            let phones = parts.next().unwrap_or("").trim();
            if phones.is_empty() {
                return Err(G2pError::LexiconSyntax {
                    line: idx + 1,
                    message: format!("no pronunciation for {word:?}"),
                });
            }
            let seq: PhoneSeq = phones.parse().map_err(|e| G2pError::LexiconSyntax {
                line: idx + 1,
                message: format!("{e}"),
            })?;
            lex.insert(word, seq);
        }
        Ok(lex)
    }

    pub fn insert(&mut self, word: &str, pron: PhoneSeq) {
        let prons = self.entries.entry(word.to_lowercase()).or_default();
        if !prons.contains(&pron) {
            prons.push(pron);
        }
    }

    pub fn get(&self, word: &str) -> Option<&[PhoneSeq]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[PhoneSeq])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }
}
