//! Corpus manifests, splits and statistics.
//!
//! A manifest is UTF-8 text with one item per line and five tab-separated
//! columns:
//!
//! ```text
//! session  speaker  kind  audio  transcription
//! ```
//!
//! `kind` is `sentence` or `word`; `audio` is relative to the manifest's
//! directory. Blank lines and lines starting with `#` are skipped, and a
//! first line starting with `session<TAB>` is a header. All items of a
//! session are contiguous.
//!
//! Tokens are whitespace-separated pieces holding at least one letter or
//! digit. The vocabulary counts distinct tokens after lowercasing and
//! trimming surrounding punctuation.

pub mod mini;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{wav_info, DspError};

/// Items per complete session in the recording protocol.
pub const SESSION_SENTENCES: usize = 20;
pub const SESSION_WORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{} audio file(s) missing: {}", .0.len(), .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingAudio(Vec<PathBuf>),
    #[error("session {session:?} appears again at line {line}")]
    DuplicateSession { session: String, line: usize },
    #[error("{path}: {source}")]
    Audio { path: PathBuf, source: DspError },
    #[error("need at least 2 sessions to split, have {0}")]
    TooFewSessions(usize),
    #[error("test fraction {0} is not in (0, 1)")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Sentence,
    Word,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Sentence => "sentence",
            ItemKind::Word => "word",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub audio: PathBuf,
    pub transcription: String,
    pub kind: ItemKind,
    /// Audio length read from the file header.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub speaker: String,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub speakers: u64,
    pub sessions: u64,
    pub tokens: u64,
    pub vocabulary: u64,
    pub hours: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sessions: Vec<Session>,
    pub stats: CorpusStats,
}

/// Whitespace tokens with at least one letter or digit.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().filter(|t| t.chars().any(char::is_alphanumeric))
}

/// Vocabulary key of a token.
pub fn normalize_token(t: &str) -> String {
    t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn compute_stats(sessions: &[Session]) -> CorpusStats {
    let speakers: BTreeSet<&str> = sessions.iter().map(|s| s.speaker.as_str()).collect();
    let mut vocab = BTreeSet::new();
    let mut tokens_n = 0;
    let mut seconds = 0.0;
    for it in sessions.iter().flat_map(|s| &s.items) {
        for t in tokens(&it.transcription) {
            tokens_n += 1;
            vocab.insert(normalize_token(t));
        }
        seconds += it.seconds;
    }
    CorpusStats {
        speakers: speakers.len() as u64,
        sessions: sessions.len() as u64,
        tokens: tokens_n,
        vocabulary: vocab.len() as u64,
        hours: seconds / 3600.0,
    }
}

impl CorpusManifest {
    pub fn new(sessions: Vec<Session>) -> CorpusManifest {
        let stats = compute_stats(&sessions);
        CorpusManifest { sessions, stats }
    }

    /// Sessions that deviate from the 20 sentence + 10 word protocol.
    pub fn warnings(&self) -> Vec<String> {
        self.sessions
            .iter()
            .filter_map(|s| {
                let n = |k| s.items.iter().filter(|i| i.kind == k).count();
                let (a, b) = (n(ItemKind::Sentence), n(ItemKind::Word));
                (a != SESSION_SENTENCES || b != SESSION_WORDS).then(|| {
                    format!(
                        "session {}: {a} sentences and {b} words (expected {SESSION_SENTENCES} and {SESSION_WORDS})",
                        s.id
                    )
                })
            })
            .collect()
    }

    /// Manifest text; audio paths are written as stored.
    pub fn to_tsv(&self) -> String {
        let mut o = String::from("session\tspeaker\tkind\taudio\ttranscription\n");
        for s in &self.sessions {
            for it in &s.items {
                o.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    s.id,
                    s.speaker,
                    it.kind.as_str(),
                    it.audio.display(),
                    it.transcription
                ));
            }
        }
        o
    }
}

struct Row {
    line: usize,
    session: String,
    speaker: String,
    kind: ItemKind,
    audio: PathBuf,
    transcription: String,
}

fn parse_rows(text: &str, base: &Path) -> Result<Vec<Row>, CorpusError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.strip_suffix('\r').unwrap_or(raw);
        if l.trim().is_empty() || l.starts_with('#') || (rows.is_empty() && l.starts_with("session\t")) {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 5 {
            return Err(CorpusError::Parse {
                line,
                message: format!("expected 5 tab-separated columns, found {}", f.len()),
            });
        }
        let kind = match f[2] {
            "sentence" => ItemKind::Sentence,
            "word" => ItemKind::Word,
            k => {
                return Err(CorpusError::Parse {
                    line,
                    message: format!("kind must be sentence or word, not {k:?}"),
                })
            }
        };
        if f[0].is_empty() || f[1].is_empty() || f[3].is_empty() {
            return Err(CorpusError::Parse {
                line,
                message: "session, speaker and audio must be non-empty".into(),
            });
        }
        rows.push(Row {
            line,
            session: f[0].to_string(),
            speaker: f[1].to_string(),
            kind,
            audio: base.join(f[3]),
            transcription: f[4].to_string(),
        });
    }
    Ok(rows)
}

/// Reads a manifest and the headers of every audio file it names.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rows = parse_rows(&text, base)?;

    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for r in &rows {
        if current != Some(r.session.as_str()) {
            if seen.contains_key(r.session.as_str()) {
                return Err(CorpusError::DuplicateSession {
                    session: r.session.clone(),
                    line: r.line,
                });
            }
            seen.insert(&r.session, &r.speaker);
            current = Some(&r.session);
        } else if seen[r.session.as_str()] != r.speaker {
            return Err(CorpusError::Parse {
                line: r.line,
                message: format!("session {:?} changes speaker", r.session),
            });
        }
    }
    let missing: Vec<PathBuf> = rows.iter().filter(|r| !r.audio.is_file()).map(|r| r.audio.clone()).collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingAudio(missing));
    }

    let mut sessions: Vec<Session> = Vec::new();
    for r in rows {
        let (samples, rate) = wav_info(&r.audio).map_err(|source| CorpusError::Audio { path: r.audio.clone(), source })?;
        let item = Item {
            seconds: samples as f64 / rate as f64,
            audio: r.audio,
            transcription: r.transcription,
            kind: r.kind,
        };
        match sessions.last_mut() {
            Some(s) if s.id == r.session => s.items.push(item),
            _ => sessions.push(Session {
                id: r.session,
                speaker: r.speaker,
                items: vec![item],
            }),
        }
    }
    Ok(CorpusManifest::new(sessions))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub seed: u64,
    /// Keep every speaker's sessions on one side. Off by default.
    pub speaker_disjoint: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            test_fraction: 0.1,
            seed: 0,
            speaker_disjoint: false,
        }
    }
}

/// Number of test sessions: `round(fraction · n)`, kept within `[1, n − 1]`.
pub fn test_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Session-level split `(train, test)`, deterministic under the seed.
/// Both halves keep manifest order. With `speaker_disjoint`, whole speakers
/// are moved to the test side in shuffled order until it holds at least
/// the target number of sessions.
pub fn split(m: &CorpusManifest, opts: &SplitOptions) -> Result<(CorpusManifest, CorpusManifest), CorpusError> {
    let n = m.sessions.len();
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(opts.test_fraction));
    }
    if n < 2 {
        return Err(CorpusError::TooFewSessions(n));
    }
    let target = test_count(n, opts.test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut in_test = vec![false; n];
    if opts.speaker_disjoint {
        let mut speakers: Vec<&str> = m.sessions.iter().map(|s| s.speaker.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        speakers.shuffle(&mut rng);
        let mut count = 0;
        for sp in speakers {
            if count >= target {
                break;
            }
            for (i, s) in m.sessions.iter().enumerate() {
                if s.speaker == sp {
                    in_test[i] = true;
                    count += 1;
                }
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..target] {
            in_test[i] = true;
        }
    }
    let pick = |want: bool| CorpusManifest::new(m.sessions.iter().zip(&in_test).filter(|(_, &t)| t == want).map(|(s, _)| s.clone()).collect());
    Ok((pick(false), pick(true)))
}

/// Expected values; `None` fields are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub speakers: Option<u64>,
    pub sessions: Option<u64>,
    pub tokens: Option<u64>,
    pub vocabulary: Option<u64>,
    pub hours: Option<f64>,
}

impl ExpectedStats {
    /// Published statistics of the studio corpus.
    pub fn studio_corpus() -> ExpectedStats {
        ExpectedStats {
            speakers: Some(317),
            sessions: Some(554),
            tokens: Some(356_674),
            vocabulary: Some(46_361),
            hours: Some(56.0),
        }
    }

    pub fn exact(s: &CorpusStats) -> ExpectedStats {
        ExpectedStats {
            speakers: Some(s.speakers),
            sessions: Some(s.sessions),
            tokens: Some(s.tokens),
            vocabulary: Some(s.vocabulary),
            hours: Some(s.hours),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatCheck {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub matches: bool,
}

/// Hours match when they differ by at most half a second.
pub const HOURS_TOLERANCE: f64 = 0.5 / 3600.0;

/// One check per expected value, in the order speakers, sessions, tokens,
/// vocabulary, hours.
pub fn validate_stats(stats: &CorpusStats, expected: &ExpectedStats) -> Vec<StatCheck> {
    let mut out = Vec::new();
    let mut int = |name: &str, e: Option<u64>, a: u64| {
        if let Some(e) = e {
            out.push(StatCheck {
                name: name.into(),
                expected: e.to_string(),
                actual: a.to_string(),
                matches: e == a,
            });
        }
    };
    int("speakers", expected.speakers, stats.speakers);
    int("sessions", expected.sessions, stats.sessions);
    int("tokens", expected.tokens, stats.tokens);
    int("vocabulary", expected.vocabulary, stats.vocabulary);
    if let Some(e) = expected.hours {
        out.push(StatCheck {
            name: "hours".into(),
            expected: format!("{e:.4}"),
            actual: format!("{:.4}", stats.hours),
            matches: (e - stats.hours).abs() <= HOURS_TOLERANCE,
        });
    }
    out
}

pub fn format_report(checks: &[StatCheck]) -> String {
    checks
        .iter()
        .map(|c| {
            format!(
                "{:<10} {} expected {} actual {}\n",
                c.name,
                if c.matches { "match" } else { "MISMATCH" },
                c.expected,
                c.actual
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, speaker: &str, items: usize) -> Session {
        Session {
            id: id.into(),
            speaker: speaker.into(),
            items: (0..items)
                .map(|i| Item {
                    audio: format!("{id}_{i}.wav").into(),
                    transcription: "Ala ma kota, ala!".into(),
                    kind: ItemKind::Sentence,
                    seconds: 1.8,
                })
                .collect(),
        }
    }

    #[test]
    fn stats_by_hand() {
        let m = CorpusManifest::new(vec![session("a", "x", 2), session("b", "y", 1)]);
        // 4 tokens per item, vocabulary {ala, ma, kota}
        assert_eq!(m.stats.speakers, 2);
        assert_eq!(m.stats.sessions, 2);
        assert_eq!(m.stats.tokens, 12);
        assert_eq!(m.stats.vocabulary, 3);
        assert!((m.stats.hours - 5.4 / 3600.0).abs() < 1e-12);
        assert!(validate_stats(&m.stats, &ExpectedStats::exact(&m.stats)).iter().all(|c| c.matches));
        let r = validate_stats(&m.stats, &ExpectedStats::studio_corpus());
        assert!(!r.iter().find(|c| c.name == "speakers").unwrap().matches);
        assert!(validate_stats(&m.stats, &ExpectedStats::default()).is_empty());
        assert_eq!(CorpusManifest::default().stats, CorpusStats::default());
    }

    #[test]
    fn split_counts() {
        assert_eq!(test_count(554, 0.1), 55);
        let m = CorpusManifest::new((0..4).map(|i| session(&i.to_string(), "s", 1)).collect());
        let (tr, te) = split(
            &m,
            &SplitOptions {
                test_fraction: 0.5,
                ..SplitOptions::default()
            },
        )
        .unwrap();
        assert_eq!((tr.sessions.len(), te.sessions.len()), (2, 2));
        let one = CorpusManifest::new(vec![session("a", "s", 1)]);
        assert_eq!(split(&one, &SplitOptions::default()).unwrap_err(), CorpusError::TooFewSessions(1));
        assert!(matches!(
            split(
                &m,
                &SplitOptions {
                    test_fraction: 1.0,
                    ..SplitOptions::default()
                }
            ),
            Err(CorpusError::InvalidFraction(_))
        ));
    }
}
