//! Context-sensitive grapheme rewrite rules.
//!
//! File format, one item per line (`%` starts a comment):
//!
//! ```text
//! @VL = p t k f s h ś ć c sz cz ch      class definition
//! @VL | rz |     -> S                   left | focus | right -> output
//!     | au |     -> a w / a u           alternatives separated by `/`
//!     | '  |     -> _                   `_` is the empty output
//! ```
//!
//! Contexts are whitespace-separated tokens: a literal grapheme string, a
//! class reference `@NAME`, or `#` for the word boundary. Rules are tried
//! longest focus first; among equal focus lengths, file order decides.

use std::collections::{BTreeMap, HashSet};

use super::inventory::{Phone, PhoneSeq};
use super::G2pError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Token {
    Lit(Vec<char>),
    Class(usize),
    Boundary,
}

#[derive(Debug, Clone)]
pub struct RewriteRule {
    left: Vec<Token>,
    focus: Vec<char>,
    right: Vec<Token>,
    /// First alternative is the canonical output.
    outputs: Vec<PhoneSeq>,
    /// Position in the file; lower wins among equal focus lengths.
    pub priority: usize,
    pub line: usize,
}

impl RewriteRule {
    pub fn focus(&self) -> String {
        self.focus.iter().collect()
    }

    pub fn outputs(&self) -> &[PhoneSeq] {
        &self.outputs
    }
}

/// An immutable, priority-sorted rule set.
#[derive(Debug, Clone)]
pub struct RuleSet {
    classes: Vec<Vec<Vec<char>>>,
    rules: Vec<RewriteRule>,
}

/// One step of a transcription: the rule that fired and where.
#[derive(Debug, Clone)]
struct Step {
    rule: usize,
    start: usize,
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<RuleSet, G2pError> {
        let mut class_ids: BTreeMap<String, usize> = BTreeMap::new();
        let mut classes: Vec<Vec<Vec<char>>> = Vec::new();
        let mut rules = Vec::new();
        let mut seen: HashSet<(Vec<Token>, Vec<char>, Vec<Token>)> = HashSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('%').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| G2pError::RuleSyntax {
                line: line_no,
                message: msg.to_string(),
            };

            if let Some(def) = line.strip_prefix('@').filter(|_| !line.contains("->")) {
                let (name, members) = def.split_once('=').ok_or_else(|| err("class needs `=`"))?;
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(err("empty class name"));
                }
                let members: Vec<Vec<char>> = members.split_whitespace().map(|m| m.chars().collect()).collect();
                if members.is_empty() {
                    return Err(err("empty class"));
                }
                if class_ids.contains_key(&name) {
                    return Err(err("class redefined"));
                }
                class_ids.insert(name, classes.len());
                classes.push(members);
                continue;
            }

            let (lhs, rhs) = line.split_once("->").ok_or_else(|| err("rule needs `->`"))?;
            let parts: Vec<&str> = lhs.split('|').collect();
            if parts.len() != 3 {
                return Err(err("rule needs `left | focus | right`"));
            }
            let tokens = |s: &str| -> Result<Vec<Token>, G2pError> {
                s.split_whitespace()
                    .map(|t| {
                        if t == "#" {
                            Ok(Token::Boundary)
                        } else if let Some(name) = t.strip_prefix('@') {
                            class_ids
                                .get(name)
                                .map(|&i| Token::Class(i))
                                .ok_or_else(|| err(&format!("undefined class @{name}")))
                        } else {
                            Ok(Token::Lit(t.chars().collect()))
                        }
                    })
                    .collect()
            };
            let left = tokens(parts[0])?;
            let right = tokens(parts[2])?;
            let focus: Vec<char> = parts[1].split_whitespace().flat_map(str::chars).collect();
            if focus.is_empty() {
                return Err(err("empty focus"));
            }

            let mut outputs = Vec::new();
            for alt in rhs.split('/') {
                let alt = alt.trim();
                if alt.is_empty() {
                    return Err(err("empty output alternative (use `_`)"));
                }
                let seq = if alt == "_" {
                    PhoneSeq::new()
                } else {
                    alt.parse::<PhoneSeq>().map_err(|e| err(&format!("{e}")))?
                };
                outputs.push(seq);
            }

            if !seen.insert((left.clone(), focus.clone(), right.clone())) {
                return Err(err("duplicate rule (same focus and contexts)"));
            }
            rules.push(RewriteRule {
                left,
                focus,
                right,
                outputs,
                priority: rules.len(),
                line: line_no,
            });
        }

        // Longest focus first, then file order. Stable sort keeps file order.
        rules.sort_by(|a, b| b.focus.len().cmp(&a.focus.len()).then(a.priority.cmp(&b.priority)));
        Ok(RuleSet { classes, rules })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    fn matches_forward(&self, toks: &[Token], text: &[char], pos: usize) -> bool {
        let Some((first, rest)) = toks.split_first() else {
            return true;
        };
        match first {
            Token::Boundary => pos == text.len() && rest.is_empty(),
            Token::Lit(s) => text[pos..].starts_with(s) && self.matches_forward(rest, text, pos + s.len()),
            Token::Class(c) => self.classes[*c]
                .iter()
                .any(|m| text[pos..].starts_with(m) && self.matches_forward(rest, text, pos + m.len())),
        }
    }

    /// `toks` is matched right-to-left ending at `end` (exclusive).
    fn matches_backward(&self, toks: &[Token], text: &[char], end: usize) -> bool {
        let Some((last, rest)) = toks.split_last() else {
            return true;
        };
        match last {
            Token::Boundary => end == 0 && rest.is_empty(),
            Token::Lit(s) => text[..end].ends_with(s) && self.matches_backward(rest, text, end - s.len()),
            Token::Class(c) => self.classes[*c]
                .iter()
                .any(|m| text[..end].ends_with(m) && self.matches_backward(rest, text, end - m.len())),
        }
    }

    fn steps(&self, word: &[char]) -> Result<Vec<Step>, G2pError> {
        let mut steps = Vec::new();
        let mut pos = 0;
        while pos < word.len() {
            let hit = self.rules.iter().position(|r| {
                word[pos..].starts_with(&r.focus) && self.matches_backward(&r.left, word, pos) && self.matches_forward(&r.right, word, pos + r.focus.len())
            });
            match hit {
                Some(i) => {
                    steps.push(Step { rule: i, start: pos });
                    pos += self.rules[i].focus.len();
                }
                None => {
                    return Err(G2pError::UnmappableGrapheme {
                        grapheme: word[pos],
                        offset: pos,
                        word: word.iter().collect(),
                    })
                }
            }
        }
        Ok(steps)
    }

    /// Applies the rules to a lowercase word. The first result uses the
    /// canonical output of every rule; each further result switches exactly
    /// one alternation site to one of its other outputs.
    pub fn apply(&self, word: &str) -> Result<Vec<PhoneSeq>, G2pError> {
        let chars: Vec<char> = word.chars().collect();
        let steps = self.steps(&chars)?;
        let build = |site: Option<(usize, usize)>| -> PhoneSeq {
            let mut out: Vec<Phone> = Vec::new();
            for (k, s) in steps.iter().enumerate() {
                let alt = match site {
                    Some((i, a)) if i == k => a,
                    _ => 0,
                };
                out.extend_from_slice(self.rules[s.rule].outputs[alt].as_slice());
            }
            PhoneSeq(out)
        };
        let mut result = vec![build(None)];
        for (k, s) in steps.iter().enumerate() {
            for alt in 1..self.rules[s.rule].outputs.len() {
                let v = build(Some((k, alt)));
                if !result.contains(&v) {
                    result.push(v);
                }
            }
        }
        debug_assert!(steps.windows(2).all(|w| w[0].start < w[1].start));
        Ok(result)
    }
}
