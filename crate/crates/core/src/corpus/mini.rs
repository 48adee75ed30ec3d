//! Miniature synthetic corpus with the layout of the studio corpus: each
//! session is one speaker reading sentences and single words.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::{random_voice, Synth, SynthUtterance, UtteranceShape};
use super::{CorpusError, ExpectedStats, ItemKind};
use crate::dsp::write_wav;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiniConfig {
    pub speakers: usize,
    pub sessions: usize,
    pub sentences: usize,
    pub words: usize,
    pub words_per_sentence: (usize, usize),
    pub vocabulary: usize,
    pub seed: u64,
}

impl Default for MiniConfig {
    fn default() -> Self {
        MiniConfig {
            speakers: 3,
            sessions: 4,
            sentences: 20,
            words: 10,
            words_per_sentence: (2, 4),
            vocabulary: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiniItem {
    pub session: String,
    pub speaker: String,
    pub kind: ItemKind,
    /// Sentences are capitalized and end with a full stop.
    pub transcription: String,
    pub utterance: SynthUtterance,
}

/// Session `i` is read by speaker `i % speakers`.
pub fn mini_items(cfg: &MiniConfig) -> Vec<MiniItem> {
    let mut s = Synth::new(cfg.seed);
    s.shape = UtteranceShape::training();
    let vocab = s.default_vocabulary(cfg.vocabulary);
    let voices: Vec<_> = (0..cfg.speakers).map(|_| random_voice(s.rng(), 0.85, 1.2)).collect();
    let mut out = Vec::new();
    for i in 0..cfg.sessions {
        let session = format!("s{i:03}");
        let sp = i % cfg.speakers.max(1);
        let speaker = format!("spk{sp:02}");
        for k in 0..cfg.sentences + cfg.words {
            let (kind, n) = if k < cfg.sentences {
                let (lo, hi) = cfg.words_per_sentence;
                (ItemKind::Sentence, lo + (k * 7 + i) % (hi - lo + 1))
            } else {
                (ItemKind::Word, 1)
            };
            let words = s.sentence(&vocab, n);
            let u = s.utterance(&words, voices[sp]);
            let transcription = if kind == ItemKind::Sentence {
                let mut t = u.text.clone();
                t[..1].make_ascii_uppercase();
                t.push('.');
                t
            } else {
                u.text.clone()
            };
            out.push(MiniItem {
                session: session.clone(),
                speaker: speaker.clone(),
                kind,
                transcription,
                utterance: u,
            });
        }
    }
    out
}

/// Statistics known from construction, not from reading the files back.
pub fn expected_stats(items: &[MiniItem]) -> ExpectedStats {
    let speakers: BTreeSet<&str> = items.iter().map(|i| i.speaker.as_str()).collect();
    let sessions: BTreeSet<&str> = items.iter().map(|i| i.session.as_str()).collect();
    let words: Vec<&str> = items.iter().flat_map(|i| i.utterance.words.iter().map(|w| w.label.as_str())).collect();
    let vocab: BTreeSet<&str> = words.iter().copied().collect();
    let samples: usize = items.iter().map(|i| i.utterance.audio.len()).sum();
    ExpectedStats {
        speakers: Some(speakers.len() as u64),
        sessions: Some(sessions.len() as u64),
        tokens: Some(words.len() as u64),
        vocabulary: Some(vocab.len() as u64),
        hours: Some(samples as f64 / crate::dsp::SAMPLE_RATE as f64 / 3600.0),
    }
}

#[derive(Debug, Clone)]
pub struct MiniCorpus {
    pub manifest: PathBuf,
    pub expected: ExpectedStats,
}

/// Writes `manifest.tsv`, `expected.json` and one WAV per item under `dir`.
pub fn write_mini_corpus(dir: impl AsRef<Path>, cfg: &MiniConfig) -> Result<MiniCorpus, CorpusError> {
    let dir = dir.as_ref();
    let io = |p: &Path, e: std::io::Error| CorpusError::Io {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    let items = mini_items(cfg);
    let mut tsv = String::from("session\tspeaker\tkind\taudio\ttranscription\n");
    for (k, it) in items.iter().enumerate() {
        let rel = format!("{}/{}{k:03}.wav", it.session, it.kind.as_str());
        let path = dir.join(&rel);
        let parent = path.parent().expect("item path has a directory");
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        write_wav(&path, &it.utterance.audio).map_err(|source| CorpusError::Audio { path: path.clone(), source })?;
        tsv.push_str(&format!("{}\t{}\t{}\t{rel}\t{}\n", it.session, it.speaker, it.kind.as_str(), it.transcription));
    }
    let manifest = dir.join("manifest.tsv");
    std::fs::write(&manifest, tsv).map_err(|e| io(&manifest, e))?;
    let expected = expected_stats(&items);
    let ej = dir.join("expected.json");
    std::fs::write(&ej, serde_json::to_string_pretty(&expected).expect("stats serialize")).map_err(|e| io(&ej, e))?;
    Ok(MiniCorpus { manifest, expected })
}
