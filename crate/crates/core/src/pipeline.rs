//! Whole-tool runs over in-memory inputs. The command line and the HTTP
//! service both go through here so their outputs are byte-identical.

use std::fmt::Write as _;

use crate::align::{align_long, speech_frames, AlignError, Alignment, LongOptions};
use crate::am::{self, utterance_units, AcousticModel, AmError, TrainConfig, TrainReport, Utterance};
use crate::diarize::{diarize, DiarizeConfig, DiarizeError, SpeakerSegment};
use crate::dsp::{AudioBuffer, DspError, Frontend};
use crate::formats::{AnnotationDoc, AudioMeta, FormatError, Interval, TextGridDoc, Tier};
use crate::g2p::{words_of, G2p, G2pError};
use crate::kws::{build_query, search_all, KeywordHit, KwsConfig, KwsError};
use crate::vad::{energy_model, vad_segment, SegmentList, Smoothing, VadError, VadModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    G2p(#[from] G2pError),
    #[error(transparent)]
    Audio(#[from] DspError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Model(#[from] AmError),
    #[error(transparent)]
    Vad(#[from] VadError),
    #[error(transparent)]
    Diarize(#[from] DiarizeError),
    #[error(transparent)]
    Kws(#[from] KwsError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Input(String),
}

impl PipelineError {
    /// Short machine-readable name of the failing stage.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::G2p(_) => "g2p",
            PipelineError::Audio(_) => "audio",
            PipelineError::Align(_) => "align",
            PipelineError::Model(_) => "model",
            PipelineError::Vad(_) => "vad",
            PipelineError::Diarize(_) => "diarize",
            PipelineError::Kws(_) => "kws",
            PipelineError::Format(_) => "format",
            PipelineError::Input(_) => "input",
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum G2pMode {
    /// One line: the sandhi-applied transcription of the whole text.
    Canonical,
    /// `word<TAB>phones`, one line per pronunciation.
    Words,
}

pub fn g2p_text(g2p: &G2p, text: &str, mode: G2pMode) -> Result<String> {
    let mut o = String::new();
    match mode {
        G2pMode::Canonical => {
            let _ = writeln!(o, "{}", g2p.transcribe_canonical(text)?);
        }
        G2pMode::Words => {
            for (w, prons) in g2p.word_list(text)? {
                for p in prons {
                    let _ = writeln!(o, "{w}\t{p}");
                }
            }
        }
    }
    Ok(o)
}

pub fn align_text(
    audio: &AudioBuffer,
    text: &str,
    model: &AcousticModel,
    g2p: &G2p,
    fe: &Frontend,
    vad: Option<&VadModel>,
    opts: &LongOptions,
) -> Result<Alignment> {
    let words = words_of(text);
    Ok(align_long(audio, &words, model, g2p, fe, vad, opts)?)
}

pub fn audio_meta(name: &str, audio: &AudioBuffer) -> AudioMeta {
    AudioMeta {
        name: name.to_string(),
        sample_rate: audio.sample_rate,
        samples: audio.len() as u64,
    }
}

/// TextGrid and annotation JSON of an alignment.
pub fn alignment_outputs(a: &Alignment, meta: AudioMeta) -> Result<(String, String)> {
    let tg = crate::formats::write_textgrid(&TextGridDoc::from_alignment(a)?)?;
    let json = crate::formats::write_annotation_json(&AnnotationDoc::from_alignment(a, meta));
    Ok((tg, json))
}

pub fn vad_segments(audio: &AudioBuffer, fe: &Frontend, vad: Option<&VadModel>, smoothing: &Smoothing) -> Result<SegmentList> {
    let vf = fe.vad_features(audio)?;
    let fallback;
    let model = match vad {
        Some(m) => m,
        None => {
            fallback = energy_model(vf.fingerprint.clone(), 8.0);
            &fallback
        }
    };
    Ok(vad_segment(&vf, model, audio.duration(), smoothing)?)
}

fn single_tier(name: &str, duration: f64, intervals: Vec<Interval>) -> Result<String> {
    let doc = TextGridDoc::from_sparse(
        0.0,
        duration,
        vec![Tier {
            name: name.to_string(),
            intervals,
        }],
    )?;
    Ok(crate::formats::write_textgrid(&doc)?)
}

/// Speech segments as a one-tier TextGrid.
pub fn segments_textgrid(list: &SegmentList) -> Result<String> {
    let ivs = list
        .speech()
        .map(|s| Interval {
            xmin: s.start,
            xmax: s.end,
            text: "speech".into(),
        })
        .collect();
    single_tier("speech", list.duration, ivs)
}

pub fn diarize_audio(audio: &AudioBuffer, fe: &Frontend, vad: Option<&VadModel>, cfg: &DiarizeConfig) -> Result<Vec<SpeakerSegment>> {
    let f = fe.mfcc(audio)?;
    let speech = speech_frames(audio, fe, vad, &Smoothing::default())?;
    Ok(diarize(&f, &speech, audio.duration(), cfg)?)
}

pub fn speakers_textgrid(segments: &[SpeakerSegment], duration: f64) -> Result<String> {
    let ivs = segments
        .iter()
        .map(|s| Interval {
            xmin: s.start,
            xmax: s.end,
            text: s.speaker.clone(),
        })
        .collect();
    single_tier("speakers", duration, ivs)
}

/// Keywords separated by commas or whitespace, lowercased, duplicates
/// dropped.
pub fn parse_keywords(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in text.split(|c: char| c == ',' || c.is_whitespace()) {
        let k = k.trim().to_lowercase();
        if !k.is_empty() && !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

pub fn spot_keywords<S: AsRef<str>>(
    audio: &AudioBuffer,
    keywords: &[S],
    model: &AcousticModel,
    g2p: &G2p,
    fe: &Frontend,
    cfg: &KwsConfig,
) -> Result<Vec<KeywordHit>> {
    let queries = keywords
        .iter()
        .map(|k| build_query(k.as_ref(), g2p.lexicon(), g2p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let f = fe.mfcc(audio)?;
    Ok(search_all(&f, &queries, model, cfg)?)
}

pub fn hits_json(hits: &[KeywordHit]) -> String {
    let mut s = serde_json::to_string_pretty(hits).expect("hits serialize");
    s.push('\n');
    s
}

/// Training pair: features plus `sil` + canonical phones + `sil`.
pub fn training_utterance(audio: &AudioBuffer, text: &str, g2p: &G2p, fe: &Frontend) -> Result<Utterance> {
    let phones = g2p.transcribe_canonical(text)?;
    if phones.is_empty() {
        return Err(PipelineError::Input("empty transcription".into()));
    }
    Ok(Utterance {
        features: fe.mfcc(audio)?,
        units: utterance_units(&phones),
    })
}

pub fn train_model(pairs: &[(AudioBuffer, String)], g2p: &G2p, fe: &Frontend, cfg: &TrainConfig) -> Result<(AcousticModel, TrainReport)> {
    let corpus = pairs.iter().map(|(a, t)| training_utterance(a, t, g2p, fe)).collect::<Result<Vec<_>>>()?;
    Ok(am::train(&corpus, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_lists() {
        assert_eq!(parse_keywords("że,listopada, Polityki\nże"), ["że", "listopada", "polityki"]);
        assert!(parse_keywords(" ,, ").is_empty());
    }

    #[test]
    fn word_mode_lines() {
        let out = g2p_text(G2p::shared(), "pan", G2pMode::Words).unwrap();
        assert_eq!(out, "pan\tp a n\n");
    }

    #[test]
    fn binary_input_is_not_text() {
        assert!(matches!(crate::g2p::decode_text(&[0x61, 0xff, 0x00]), Err(G2pError::NotText { offset: 1 })));
        assert!(matches!(crate::g2p::decode_text(b"ab\x00"), Err(G2pError::NotText { offset: 2 })));
        assert_eq!(crate::g2p::decode_text("pan\n".as_bytes()).unwrap(), "pan\n");
    }
}
