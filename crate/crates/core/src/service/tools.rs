//! Tool manifests and job execution.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::store::ArtifactRef;
use crate::align::{realign_region, Alignment, LongOptions};
use crate::am::{AcousticModel, TrainConfig};
use crate::diarize::DiarizeConfig;
use crate::dsp::{load_wav_bytes, AudioBuffer, Frontend};
use crate::formats::{parse_annotation_json, write_rttm, write_segments, AnnotationDoc, AudioMeta};
use crate::g2p::{decode_text, G2p};
use crate::kws::{format_hits, KwsConfig};
use crate::pipeline::{self, G2pMode, PipelineError};
use crate::vad::{Smoothing, VadModel};

pub const TEXT: &str = "text/plain; charset=utf-8";
pub const JSON: &str = "application/json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    G2p,
    Align,
    Vad,
    Diarize,
    Kws,
    Train,
}

impl Tool {
    pub fn parse(s: &str) -> Option<Tool> {
        Some(match s.trim() {
            "g2p" => Tool::G2p,
            "align" => Tool::Align,
            "vad" => Tool::Vad,
            "diarize" => Tool::Diarize,
            "kws" => Tool::Kws,
            "train" => Tool::Train,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::G2p => "g2p",
            Tool::Align => "align",
            Tool::Vad => "vad",
            Tool::Diarize => "diarize",
            Tool::Kws => "kws",
            Tool::Train => "train",
        }
    }

    /// Required parts, optional parts and the one part allowed to repeat.
    pub fn manifest(self) -> (&'static [&'static str], &'static [&'static str], Option<&'static str>) {
        match self {
            Tool::G2p => (&["text"], &["mode"], None),
            // `alignment` and `region` together turn the job into a region
            // re-alignment of an earlier result.
            Tool::Align => (&["audio", "transcript"], &["model", "vad_model", "alignment", "region"], None),
            Tool::Vad | Tool::Diarize => (&["audio"], &["vad_model"], None),
            Tool::Kws => (&["audio", "keywords"], &["model", "threshold"], None),
            Tool::Train => (&["transcripts", "audio"], &[], Some("audio")),
        }
    }

    fn needs_model(self) -> bool {
        matches!(self, Tool::Align | Tool::Kws)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ManifestMismatch {
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

impl std::fmt::Display for ManifestMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if !self.missing.is_empty() {
            parts.push(format!("missing part(s): {}", self.missing.join(", ")));
        }
        if !self.extra.is_empty() {
            parts.push(format!("unexpected part(s): {}", self.extra.join(", ")));
        }
        f.write_str(&parts.join("; "))
    }
}

/// Checks uploaded part names against the tool's manifest. A model part
/// is required only when the service has no default model.
pub fn check_parts<S: AsRef<str>>(tool: Tool, names: &[S], default_model: bool) -> Result<(), ManifestMismatch> {
    let (required, optional, repeated) = tool.manifest();
    let mut m = ManifestMismatch::default();
    let count = |n: &str| names.iter().filter(|x| x.as_ref() == n).count();
    for &r in required {
        if count(r) == 0 {
            m.missing.push(r.to_string());
        }
    }
    if tool.needs_model() && !default_model && count("model") == 0 {
        m.missing.push("model".into());
    }
    if tool == Tool::Align && (count("alignment") == 0) != (count("region") == 0) {
        m.missing.push(if count("region") == 0 { "region" } else { "alignment" }.into());
    }
    for n in names {
        let n = n.as_ref();
        let known = required.contains(&n) || optional.contains(&n);
        let dup = count(n) > 1 && repeated != Some(n);
        if (!known || dup) && !m.extra.iter().any(|e| e == n) {
            m.extra.push(n.to_string());
        }
    }
    if m.missing.is_empty() && m.extra.is_empty() {
        Ok(())
    } else {
        Err(m)
    }
}

/// Body of a region re-alignment request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRequest {
    pub t0: f64,
    pub t1: f64,
    /// Replacement for the words inside the region.
    pub words: Vec<String>,
}

/// Immutable state shared by all workers.
pub struct Engine {
    pub g2p: Arc<G2p>,
    pub frontend: Frontend,
    pub model: Option<Arc<AcousticModel>>,
    pub vad: Option<Arc<VadModel>>,
}

pub struct Output {
    pub name: &'static str,
    pub media_type: &'static str,
    pub bytes: Vec<u8>,
}

fn out(name: &'static str, media_type: &'static str, s: String) -> Output {
    Output {
        name,
        media_type,
        bytes: s.into_bytes(),
    }
}

/// `"<ErrorType>: message"`, as stored on failed jobs.
pub fn describe(e: &PipelineError) -> String {
    let ty = match e {
        PipelineError::G2p(_) => "G2pError",
        PipelineError::Audio(_) => "AudioError",
        PipelineError::Align(_) => "AlignError",
        PipelineError::Model(_) => "ModelError",
        PipelineError::Vad(_) => "VadError",
        PipelineError::Diarize(_) => "DiarizeError",
        PipelineError::Kws(_) => "KwsError",
        PipelineError::Format(_) => "FormatError",
        PipelineError::Input(_) => "InputError",
    };
    format!("{ty}: {e}")
}

/// Inputs of one job, already read from the store.
pub struct JobInputs {
    pub parts: Vec<(ArtifactRef, Vec<u8>)>,
}

impl JobInputs {
    fn get(&self, name: &str) -> Option<&(ArtifactRef, Vec<u8>)> {
        self.parts.iter().find(|(a, _)| a.name == name)
    }

    fn text(&self, name: &str) -> Result<Option<&str>, PipelineError> {
        match self.get(name) {
            Some((_, b)) => Ok(Some(decode_text(b)?)),
            None => Ok(None),
        }
    }

    fn required_text(&self, name: &str) -> Result<&str, PipelineError> {
        self.text(name)?.ok_or_else(|| PipelineError::Input(format!("missing part {name}")))
    }

    fn audio(&self) -> Result<(AudioBuffer, AudioMeta), PipelineError> {
        let (a, b) = self.get("audio").ok_or_else(|| PipelineError::Input("missing part audio".into()))?;
        let audio = load_wav_bytes(b)?;
        let meta = pipeline::audio_meta(a.filename.as_deref().unwrap_or("audio.wav"), &audio);
        Ok((audio, meta))
    }
}

fn model(inputs: &JobInputs, engine: &Engine) -> Result<Arc<AcousticModel>, PipelineError> {
    match inputs.text("model")? {
        Some(t) => Ok(Arc::new(AcousticModel::from_text(t)?)),
        None => engine
            .model
            .clone()
            .ok_or_else(|| PipelineError::Input("no acoustic model uploaded or configured".into())),
    }
}

fn vad_model(inputs: &JobInputs, engine: &Engine) -> Result<Option<Arc<VadModel>>, PipelineError> {
    match inputs.text("vad_model")? {
        Some(t) => Ok(Some(Arc::new(VadModel::from_json(t)?))),
        None => Ok(engine.vad.clone()),
    }
}

/// Alignment snapped to sample positions, the resolution of the
/// annotation JSON. Re-alignments start from that JSON, so snapping here
/// keeps untouched intervals identical between a job and its re-alignment.
fn snapped(a: &Alignment, meta: &AudioMeta) -> Result<(Alignment, AnnotationDoc), PipelineError> {
    let doc = AnnotationDoc::from_alignment(a, meta.clone());
    Ok((doc.to_alignment()?, doc))
}

fn alignment_outputs(a: &Alignment, meta: &AudioMeta) -> Result<Vec<Output>, PipelineError> {
    let (a, _) = snapped(a, meta)?;
    let (tg, json) = pipeline::alignment_outputs(&a, meta.clone())?;
    Ok(vec![out("alignment.TextGrid", TEXT, tg), out("alignment.json", JSON, json)])
}

pub fn run(tool: Tool, inputs: &JobInputs, engine: &Engine) -> Result<Vec<Output>, PipelineError> {
    let g2p = &*engine.g2p;
    let fe = &engine.frontend;
    match tool {
        Tool::G2p => {
            let mode = match inputs.text("mode")?.map(str::trim) {
                None | Some("canonical") => G2pMode::Canonical,
                Some("words") => G2pMode::Words,
                Some(m) => return Err(PipelineError::Input(format!("mode must be canonical or words, not {m:?}"))),
            };
            let text = inputs.required_text("text")?;
            Ok(vec![out("phones.txt", TEXT, pipeline::g2p_text(g2p, text, mode)?)])
        }
        Tool::Align => {
            let (audio, meta) = inputs.audio()?;
            let model = model(inputs, engine)?;
            let opts = LongOptions::default();
            let a = match (inputs.text("alignment")?, inputs.text("region")?) {
                (Some(doc), Some(region)) => {
                    let r: RegionRequest = serde_json::from_str(region).map_err(|e| PipelineError::Input(format!("region: {e}")))?;
                    let original = parse_annotation_json(doc)?.to_alignment()?;
                    let f = fe.mfcc(&audio)?;
                    realign_region(&original, (r.t0, r.t1), &r.words, &f, &model, g2p, &opts.align)?
                }
                _ => {
                    let text = inputs.required_text("transcript")?;
                    let vad = vad_model(inputs, engine)?;
                    pipeline::align_text(&audio, text, &model, g2p, fe, vad.as_deref(), &opts)?
                }
            };
            alignment_outputs(&a, &meta)
        }
        Tool::Vad => {
            let (audio, _) = inputs.audio()?;
            let vad = vad_model(inputs, engine)?;
            let segs = pipeline::vad_segments(&audio, fe, vad.as_deref(), &Smoothing::default())?;
            Ok(vec![
                out("segments.txt", TEXT, write_segments(&segs)),
                out("segments.TextGrid", TEXT, pipeline::segments_textgrid(&segs)?),
            ])
        }
        Tool::Diarize => {
            let (audio, meta) = inputs.audio()?;
            let vad = vad_model(inputs, engine)?;
            let segs = pipeline::diarize_audio(&audio, fe, vad.as_deref(), &DiarizeConfig::default())?;
            let stem = meta.name.rsplit_once('.').map_or(meta.name.as_str(), |(s, _)| s);
            Ok(vec![
                out("speakers.rttm", TEXT, write_rttm(stem, &segs)),
                out("speakers.TextGrid", TEXT, pipeline::speakers_textgrid(&segs, audio.duration())?),
            ])
        }
        Tool::Kws => {
            let (audio, _) = inputs.audio()?;
            let model = model(inputs, engine)?;
            let keywords = pipeline::parse_keywords(inputs.required_text("keywords")?);
            let mut cfg = KwsConfig::default();
            if let Some(t) = inputs.text("threshold")? {
                cfg.threshold = t.trim().parse().map_err(|_| PipelineError::Input(format!("threshold {t:?} is not a number")))?;
            }
            let hits = pipeline::spot_keywords(&audio, &keywords, &model, g2p, fe, &cfg)?;
            Ok(vec![
                out("hits.txt", TEXT, format_hits(&hits)),
                out("hits.json", JSON, pipeline::hits_json(&hits)),
            ])
        }
        Tool::Train => {
            let list = inputs.required_text("transcripts")?;
            let mut pairs = Vec::new();
            for (i, line) in list.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (file, text) = line
                    .split_once('\t')
                    .ok_or_else(|| PipelineError::Input(format!("transcripts line {}: expected <file><TAB><text>", i + 1)))?;
                let (_, bytes) = inputs
                    .parts
                    .iter()
                    .find(|(a, _)| a.name == "audio" && a.filename.as_deref() == Some(file.trim()))
                    .ok_or_else(|| PipelineError::Input(format!("transcripts line {}: no uploaded audio named {file:?}", i + 1)))?;
                pairs.push((load_wav_bytes(bytes)?, text.to_string()));
            }
            let (model, report) = pipeline::train_model(&pairs, g2p, fe, &TrainConfig::default())?;
            let report = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
            Ok(vec![out("model.am", TEXT, model.to_text()), out("report.json", JSON, report)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifests() {
        assert_eq!(check_parts(Tool::G2p, &["text"], false), Ok(()));
        let m = check_parts(Tool::Align, &["audio", "text"], false).unwrap_err();
        assert_eq!(m.missing, ["transcript", "model"]);
        assert_eq!(m.extra, ["text"]);
        assert_eq!(check_parts(Tool::Align, &["audio", "transcript"], true), Ok(()));
        assert_eq!(
            check_parts(Tool::Align, &["audio", "transcript", "region"], true).unwrap_err().missing,
            ["alignment"]
        );
        assert_eq!(check_parts(Tool::Vad, &["audio", "audio"], false).unwrap_err().extra, ["audio"]);
        assert_eq!(check_parts(Tool::Train, &["audio", "audio", "transcripts"], false), Ok(()));
        assert_eq!(m.to_string(), "missing part(s): transcript, model; unexpected part(s): text");
    }
}
