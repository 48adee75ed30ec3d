//! Annotation JSON consumed by the browser editor.
//!
//! ```json
//! {
//!   "version": 1,
//!   "audio": { "name": "a.wav", "sample_rate": 16000, "samples": 48000 },
//!   "low_confidence": false,
//!   "levels": [
//!     { "name": "words", "type": "SEGMENT",
//!       "items": [ { "id": 0, "label": "pan", "start": 3200, "duration": 4800, "score": -1.5 } ] },
//!     { "name": "phones", "type": "SEGMENT",
//!       "items": [ { "id": 1, "label": "p", "start": 3200, "duration": 1600, "parent": 0 }, ... ] }
//!   ]
//! }
//! ```
//!
//! Positions are sample indices. Ids are unique across the document;
//! `parent` points into another level and children tile their parent.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::align::{AlignedInterval, Alignment};

pub const ANNOTATION_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioMeta {
    pub name: String,
    pub sample_rate: u32,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LevelKind {
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: u64,
    pub label: String,
    pub start: u64,
    pub duration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u64>,
}

impl Item {
    pub fn end(&self) -> u64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: LevelKind,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDoc {
    pub version: u32,
    pub audio: AudioMeta,
    #[serde(default)]
    pub low_confidence: bool,
    pub levels: Vec<Level>,
}

impl AnnotationDoc {
    pub fn empty(audio: AudioMeta) -> AnnotationDoc {
        AnnotationDoc {
            version: ANNOTATION_VERSION,
            audio,
            low_confidence: false,
            levels: Vec::new(),
        }
    }

    /// "words" and "phones" levels; phones carry their word as parent.
    pub fn from_alignment(a: &Alignment, audio: AudioMeta) -> AnnotationDoc {
        let sr = audio.sample_rate as f64;
        let pos = |t: f64| (t * sr).round().max(0.0) as u64;
        let item = |id: u64, iv: &AlignedInterval, parent: Option<u64>| {
            let start = pos(iv.start);
            Item {
                id,
                label: iv.label.clone(),
                start,
                duration: pos(iv.end) - start,
                score: iv.score.is_finite().then_some(iv.score),
                parent,
            }
        };
        let words: Vec<Item> = a.words.iter().enumerate().map(|(i, w)| item(i as u64, w, None)).collect();
        let mut phones = Vec::with_capacity(a.phones.len());
        let mut id = words.len() as u64;
        for (w, ps) in a.phones_by_word().into_iter().enumerate() {
            for p in ps {
                phones.push(item(id, p, Some(w as u64)));
                id += 1;
            }
        }
        AnnotationDoc {
            version: ANNOTATION_VERSION,
            audio,
            low_confidence: a.low_confidence,
            levels: vec![
                Level {
                    name: "words".into(),
                    kind: LevelKind::Segment,
                    items: words,
                },
                Level {
                    name: "phones".into(),
                    kind: LevelKind::Segment,
                    items: phones,
                },
            ],
        }
    }

    pub fn level(&self, name: &str) -> Option<&Level> {
        self.levels.iter().find(|l| l.name == name)
    }

    /// Alignment from the "words" and "phones" levels, in seconds.
    pub fn to_alignment(&self) -> Result<Alignment, FormatError> {
        self.validate()?;
        let sr = self.audio.sample_rate as f64;
        let conv = |name: &str| -> Vec<AlignedInterval> {
            self.level(name)
                .map(|l| {
                    l.items
                        .iter()
                        .map(|i| AlignedInterval {
                            label: i.label.clone(),
                            start: i.start as f64 / sr,
                            end: i.end() as f64 / sr,
                            score: i.score.unwrap_or(f64::NAN),
                        })
                        .collect()
                })
                .unwrap_or_default()
        };
        Ok(Alignment {
            words: conv("words"),
            phones: conv("phones"),
            duration: self.audio.samples as f64 / sr,
            low_confidence: self.low_confidence,
        })
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let bad = |m: String| Err(FormatError::InvariantViolation(m));
        if self.version != ANNOTATION_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.audio.sample_rate == 0 {
            return bad("sample rate is zero".into());
        }
        let mut where_is: HashMap<u64, (usize, usize)> = HashMap::new();
        for (li, level) in self.levels.iter().enumerate() {
            let mut prev_end = 0;
            for (ii, it) in level.items.iter().enumerate() {
                if it.duration == 0 || it.start < prev_end || it.end() > self.audio.samples {
                    return bad(format!(
                        "level {:?} item {} [{}, +{}] is empty, overlaps or leaves the audio",
                        level.name, it.id, it.start, it.duration
                    ));
                }
                if it.score.is_some_and(|s| !s.is_finite()) {
                    return bad(format!("item {} has a non-finite score", it.id));
                }
                prev_end = it.end();
                if where_is.insert(it.id, (li, ii)).is_some() {
                    return bad(format!("duplicate item id {}", it.id));
                }
            }
        }
        // children per parent, in document order
        let mut children: HashMap<u64, Vec<&Item>> = HashMap::new();
        for (li, level) in self.levels.iter().enumerate() {
            for it in &level.items {
                let Some(p) = it.parent else { continue };
                match where_is.get(&p) {
                    Some(&(pl, _)) if pl != li => children.entry(p).or_default().push(it),
                    _ => return bad(format!("item {} has parent {p} outside every other level", it.id)),
                }
            }
        }
        for (p, kids) in children {
            let (pl, pi) = where_is[&p];
            let parent = &self.levels[pl].items[pi];
            let mut t = parent.start;
            for k in &kids {
                if k.start != t {
                    return bad(format!("children of item {p} do not tile it"));
                }
                t = k.end();
            }
            if t != parent.end() {
                return bad(format!("children of item {p} do not tile it"));
            }
            if kids.windows(2).any(|w| self.level_of(w[0].id) != self.level_of(w[1].id)) {
                return bad(format!("children of item {p} span several levels"));
            }
        }
        Ok(())
    }

    fn level_of(&self, id: u64) -> Option<usize> {
        self.levels.iter().position(|l| l.items.iter().any(|i| i.id == id))
    }
}

pub fn write_annotation_json(doc: &AnnotationDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("annotation documents serialize");
    s.push('\n');
    s
}

pub fn parse_annotation_json(text: &str) -> Result<AnnotationDoc, FormatError> {
    let doc: AnnotationDoc = serde_json::from_str(text).map_err(|e| FormatError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    doc.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> AudioMeta {
        AudioMeta {
            name: "a.wav".into(),
            sample_rate: 16000,
            samples: 16000,
        }
    }

    fn iv(l: &str, s: f64, e: f64) -> AlignedInterval {
        AlignedInterval {
            label: l.into(),
            start: s,
            end: e,
            score: -1.0,
        }
    }

    #[test]
    fn skeleton() {
        let doc = AnnotationDoc::from_alignment(
            &Alignment {
                duration: 1.0,
                ..Alignment::default()
            },
            meta(),
        );
        assert_eq!(doc.levels.len(), 2);
        assert!(doc.levels.iter().all(|l| l.items.is_empty()));
        let text = write_annotation_json(&doc);
        assert!(text.starts_with("{\n  \"version\": 1,\n  \"audio\": {"));
        assert_eq!(parse_annotation_json(&text).unwrap(), doc);
    }

    #[test]
    fn nesting() {
        let a = Alignment {
            words: vec![iv("pan", 0.2, 0.5)],
            phones: vec![iv("p", 0.2, 0.3), iv("a", 0.3, 0.4), iv("n", 0.4, 0.5)],
            duration: 1.0,
            low_confidence: false,
        };
        let doc = AnnotationDoc::from_alignment(&a, meta());
        let w = &doc.levels[0].items[0];
        assert_eq!((w.start, w.duration), (3200, 4800));
        let ps = &doc.levels[1].items;
        assert_eq!(ps.first().unwrap().start, w.start);
        assert_eq!(ps.last().unwrap().end(), w.end());
        assert!(ps.iter().all(|p| p.parent == Some(0)));
        let back = doc.to_alignment().unwrap();
        assert_eq!(back.validate(), Ok(()));
        assert_eq!(back.words[0].label, "pan");

        let mut broken = doc.clone();
        broken.levels[1].items[1].duration -= 1;
        assert!(matches!(broken.validate(), Err(FormatError::InvariantViolation(_))));
    }
}
