//! Command-line front end. Failures print one `error:<kind>: message` line
//! on stderr and exit with 1 (usage), 2 (bad input) or 3 (processing).

use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::align::{force_align, AlignOptions, LongOptions};
use crate::am::{AcousticModel, TrainConfig};
use crate::corpus::mini::{write_mini_corpus, MiniConfig};
use crate::corpus::{self, format_report, load_manifest, split, validate_stats, CorpusError, ExpectedStats, SplitOptions};
use crate::diarize::DiarizeConfig;
use crate::dsp::{load_wav, AudioBuffer, Frontend};
use crate::formats::{parse_segments, write_annotation_json, write_rttm, write_segments, write_textgrid, AnnotationDoc, TextGridDoc};
use crate::g2p::{decode_text, words_of, G2p};
use crate::kws::{format_hits, KwsConfig};
use crate::pipeline::{self, G2pMode, PipelineError};
use crate::service::{self, ServiceConfig, DEFAULT_PAYLOAD_LIMIT};
use crate::vad::{vad_train, SegmentKind, Smoothing, VadModel, VadTrainConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PROCESSING: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "speechtools",
    version,
    about = "Polish speech toolkit: G2P, alignment, VAD, diarization and keyword spotting"
)]
pub struct Cli {
    /// TOML file with defaults; command-line flags win.
    #[arg(long, global = true, env = "SPEECHTOOLS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Threads for internal parallelism (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for the stochastic steps (corpus split and generation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grapheme-to-phoneme conversion.
    G2p(G2pArgs),
    /// Forced alignment of a short recording in one piece.
    Align(AlignArgs),
    /// Anchored alignment of a recording of any length.
    AlignLong(AlignLongArgs),
    /// Voice activity detection.
    Vad(VadArgs),
    /// Speaker diarization.
    Diarize(DiarizeArgs),
    /// Keyword spotting.
    Kws(KwsArgs),
    /// Train an acoustic model from a corpus manifest.
    TrainAm(TrainAmArgs),
    /// Train a speech/nonspeech classifier from labeled recordings.
    TrainVad(TrainVadArgs),
    /// Corpus manifests: statistics, splits, synthetic corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct G2pArgs {
    /// UTF-8 text file; standard input when absent or `-`.
    pub input: Option<PathBuf>,
    /// One sandhi-applied transcription of the whole text instead of a
    /// word list.
    #[arg(long)]
    pub canonical: bool,
    /// Rewrite rule file replacing the built-in rules.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Exception lexicon replacing the built-in one.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignFormat {
    Textgrid,
    Json,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    pub audio: PathBuf,
    /// Transcription, UTF-8 text.
    pub text: PathBuf,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Acoustic model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output format; by default taken from the output extension
    /// (`.json` for annotation JSON, TextGrid otherwise).
    #[arg(long, value_enum)]
    pub format: Option<AlignFormat>,
}

#[derive(Debug, Args)]
pub struct AlignLongArgs {
    #[command(flatten)]
    pub align: AlignArgs,
    /// Speech/nonspeech model; an energy gate is used without one.
    #[arg(long)]
    pub vad_model: Option<PathBuf>,
    /// Recordings longer than this are chunked.
    #[arg(long, default_value_t = 60.0)]
    pub chunk_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VadFormat {
    Segments,
    Textgrid,
}

#[derive(Debug, Args)]
pub struct VadArgs {
    pub audio: PathBuf,
    #[arg(long)]
    pub vad_model: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// `start end speech|nonspeech` lines or a TextGrid; by default from
    /// the output extension.
    #[arg(long, value_enum)]
    pub format: Option<VadFormat>,
    /// Speech kept after each detected run, in seconds.
    #[arg(long)]
    pub hangover: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiarizeFormat {
    Rttm,
    Textgrid,
}

#[derive(Debug, Args)]
pub struct DiarizeArgs {
    pub audio: PathBuf,
    #[arg(long)]
    pub vad_model: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<DiarizeFormat>,
    /// BIC penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KwsArgs {
    pub audio: PathBuf,
    /// Comma-separated keywords.
    #[arg(long, required = true)]
    pub keywords: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Detection threshold on the per-frame score.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// One JSON record per hit instead of the text listing.
    #[arg(long)]
    pub json: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainAmArgs {
    /// Corpus manifest (TSV: session, speaker, kind, audio, transcription).
    pub manifest: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Re-estimation rounds per stage.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Mixture sizes to grow to, comma-separated; empty for single
    /// Gaussians.
    #[arg(long)]
    pub mixtures: Option<String>,
    /// Per-iteration log-likelihoods as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainVadArgs {
    /// TSV lines `audio<TAB>segments`, the segments file holding
    /// `start end speech|nonspeech` lines. Paths are relative to the list.
    pub list: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Frame recall the threshold is chosen for.
    #[arg(long, default_value_t = 0.99)]
    pub recall: f64,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Speaker, session, token, vocabulary and duration counts.
    Stats {
        manifest: PathBuf,
        /// Compare against `studio` (published statistics) or a JSON file of
        /// expected values; exits 3 on a mismatch.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Session-level train/test split.
    Split {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        /// Keep every speaker on one side.
        #[arg(long)]
        speaker_disjoint: bool,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Write a miniature synthetic corpus with manifest and expected
    /// statistics.
    Mini {
        dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        speakers: usize,
        #[arg(long, default_value_t = 4)]
        sessions: usize,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SPEECHTOOLS_LISTEN")]
    pub listen: Option<SocketAddr>,
    /// Concurrent jobs; 0 stores jobs without running them.
    #[arg(long, env = "SPEECHTOOLS_WORKERS")]
    pub workers: Option<usize>,
    /// Directory for the job log and artifacts.
    #[arg(long, env = "SPEECHTOOLS_STORAGE")]
    pub storage: Option<PathBuf>,
    /// Largest accepted request body in bytes.
    #[arg(long, env = "SPEECHTOOLS_PAYLOAD_LIMIT")]
    pub payload_limit: Option<usize>,
    /// Shared secret expected in the x-api-key header.
    #[arg(long, env = "SPEECHTOOLS_API_KEY")]
    pub api_key: Option<String>,
    /// Default acoustic model for align and kws jobs.
    #[arg(long, env = "SPEECHTOOLS_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "SPEECHTOOLS_VAD_MODEL")]
    pub vad_model: Option<PathBuf>,
}

/// Optional config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<PathBuf>,
    pub vad_model: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub serve: ServeFileConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeFileConfig {
    pub listen: Option<SocketAddr>,
    pub workers: Option<usize>,
    pub storage: Option<PathBuf>,
    pub payload_limit: Option<usize>,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("error:{kind}: {message}")]
pub struct CliError {
    pub kind: &'static str,
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(kind: &'static str, message: impl Into<String>) -> CliError {
        CliError {
            kind,
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn processing(kind: &'static str, message: impl Into<String>) -> CliError {
        CliError {
            kind,
            code: EXIT_PROCESSING,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let kind = e.kind();
        match e {
            PipelineError::G2p(_) | PipelineError::Audio(_) | PipelineError::Format(_) | PipelineError::Input(_) => CliError::input(kind, e.to_string()),
            _ => CliError::processing(kind, e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::TooFewSessions(_) | CorpusError::InvalidFraction(_) => CliError::processing("corpus", e.to_string()),
            _ => CliError::input("corpus", e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_bytes(path: Option<&Path>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match path {
        None => std::io::stdin().read_to_end(&mut buf).map(|_| buf),
        Some(p) if p == Path::new("-") => std::io::stdin().read_to_end(&mut buf).map(|_| buf),
        Some(p) => std::fs::read(p),
    }
    .map_err(|e| CliError::input("io", format!("{}: {e}", path.map_or("<stdin>".into(), |p| p.display().to_string()))))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(Some(path))?;
    decode_text(&bytes)
        .map(str::to_string)
        .map_err(|e| CliError::input("input", format!("{}: {e}", path.display())))
}

fn audio(path: &Path) -> Result<AudioBuffer> {
    load_wav(path).map_err(|e| CliError::input("audio", format!("{}: {e}", path.display())))
}

fn acoustic_model(path: Option<&PathBuf>) -> Result<AcousticModel> {
    let p = path.ok_or_else(|| CliError::input("model", "an acoustic model is required (--model or `model` in the config file)"))?;
    AcousticModel::load(p).map_err(|e| CliError::input("model", format!("{}: {e}", p.display())))
}

fn vad_model(path: Option<&PathBuf>) -> Result<Option<VadModel>> {
    let Some(p) = path else { return Ok(None) };
    let text = read_text(p)?;
    VadModel::from_json(&text)
        .map(Some)
        .map_err(|e| CliError::input("model", format!("{}: {e}", p.display())))
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// so a failed run never leaves a partial file. `None` or `-` is stdout.
pub fn write_atomic(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| CliError::processing("io", format!("{}: {e}", p.display()));
    match path {
        None => std::io::stdout().write_all(bytes).map_err(|e| io(Path::new("<stdout>"), e)),
        Some(p) if p == Path::new("-") => std::io::stdout().write_all(bytes).map_err(|e| io(Path::new("<stdout>"), e)),
        Some(p) => {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(p, e))?;
            tmp.write_all(bytes).map_err(|e| io(p, e))?;
            tmp.as_file().sync_all().map_err(|e| io(p, e))?;
            tmp.persist(p).map_err(|e| io(p, e.error))?;
            Ok(())
        }
    }
}

fn has_ext(path: Option<&PathBuf>, ext: &str) -> bool {
    path.and_then(|p| p.extension()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Context {
    file: FileConfig,
    seed: u64,
}

fn write_alignment(args: &AlignArgs, a: &crate::align::Alignment, audio: &AudioBuffer) -> Result<()> {
    let json = match args.format {
        Some(f) => f == AlignFormat::Json,
        None => has_ext(args.output.as_ref(), "json"),
    };
    let text = if json {
        write_annotation_json(&AnnotationDoc::from_alignment(a, pipeline::audio_meta(&file_name(&args.audio), audio)))
    } else {
        let doc = TextGridDoc::from_alignment(a).map_err(|e| CliError::processing("format", e.to_string()))?;
        write_textgrid(&doc).map_err(|e| CliError::processing("format", e.to_string()))?
    };
    write_atomic(args.output.as_deref(), text.as_bytes())
}

fn run_command(cmd: Command, ctx: &Context) -> Result<()> {
    let fe = Frontend::default();
    match cmd {
        Command::G2p(a) => {
            let g2p = if a.rules.is_some() || a.lexicon.is_some() {
                G2p::from_files(a.rules.as_deref(), a.lexicon.as_deref()).map_err(|e| CliError::input("g2p", e.to_string()))?
            } else {
                G2p::polish()
            };
            let bytes = read_bytes(a.input.as_deref())?;
            let text = decode_text(&bytes).map_err(|e| CliError::input("g2p", e.to_string()))?;
            let mode = if a.canonical { G2pMode::Canonical } else { G2pMode::Words };
            let out = pipeline::g2p_text(&g2p, text, mode)?;
            write_atomic(a.output.as_deref(), out.as_bytes())
        }
        Command::Align(a) => {
            let model = acoustic_model(a.model.as_ref().or(ctx.file.model.as_ref()))?;
            let audio = audio(&a.audio)?;
            let words = words_of(&read_text(&a.text)?);
            let f = fe.mfcc(&audio).map_err(PipelineError::from)?;
            let opts = AlignOptions {
                duration: Some(audio.duration()),
                ..AlignOptions::default()
            };
            let al = if words.is_empty() {
                crate::align::Alignment {
                    duration: audio.duration(),
                    ..Default::default()
                }
            } else {
                force_align(&f, &words, &model, G2p::shared(), &opts).map_err(PipelineError::from)?
            };
            write_alignment(&a, &al, &audio)
        }
        Command::AlignLong(a) => {
            let model = acoustic_model(a.align.model.as_ref().or(ctx.file.model.as_ref()))?;
            let vad = vad_model(a.vad_model.as_ref().or(ctx.file.vad_model.as_ref()))?;
            let audio = audio(&a.align.audio)?;
            let text = read_text(&a.align.text)?;
            let opts = LongOptions {
                chunk_seconds: a.chunk_seconds,
                ..LongOptions::default()
            };
            let al = pipeline::align_text(&audio, &text, &model, G2p::shared(), &fe, vad.as_ref(), &opts)?;
            if al.low_confidence {
                tracing::warn!("alignment is flagged low-confidence");
            }
            write_alignment(&a.align, &al, &audio)
        }
        Command::Vad(a) => {
            let vad = vad_model(a.vad_model.as_ref().or(ctx.file.vad_model.as_ref()))?;
            let audio = audio(&a.audio)?;
            let mut smoothing = Smoothing::default();
            if let Some(h) = a.hangover {
                smoothing.hangover = h;
            }
            let segs = pipeline::vad_segments(&audio, &fe, vad.as_ref(), &smoothing)?;
            let tg = match a.format {
                Some(f) => f == VadFormat::Textgrid,
                None => has_ext(a.output.as_ref(), "textgrid"),
            };
            let text = if tg { pipeline::segments_textgrid(&segs)? } else { write_segments(&segs) };
            write_atomic(a.output.as_deref(), text.as_bytes())
        }
        Command::Diarize(a) => {
            let vad = vad_model(a.vad_model.as_ref().or(ctx.file.vad_model.as_ref()))?;
            let audio = audio(&a.audio)?;
            let mut cfg = DiarizeConfig::default();
            if let Some(l) = a.lambda {
                cfg.lambda = l;
            }
            let segs = pipeline::diarize_audio(&audio, &fe, vad.as_ref(), &cfg)?;
            let tg = match a.format {
                Some(f) => f == DiarizeFormat::Textgrid,
                None => has_ext(a.output.as_ref(), "textgrid"),
            };
            let text = if tg {
                pipeline::speakers_textgrid(&segs, audio.duration())?
            } else {
                let name = a.audio.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                write_rttm(&name, &segs)
            };
            write_atomic(a.output.as_deref(), text.as_bytes())
        }
        Command::Kws(a) => {
            let model = acoustic_model(a.model.as_ref().or(ctx.file.model.as_ref()))?;
            let audio = audio(&a.audio)?;
            let keywords = pipeline::parse_keywords(&a.keywords);
            if keywords.is_empty() {
                return Err(CliError::input("input", "no keywords given"));
            }
            let mut cfg = KwsConfig::default();
            if let Some(t) = a.threshold.or(ctx.file.threshold) {
                cfg.threshold = t;
            }
            let hits = pipeline::spot_keywords(&audio, &keywords, &model, G2p::shared(), &fe, &cfg)?;
            let text = if a.json { pipeline::hits_json(&hits) } else { format_hits(&hits) };
            write_atomic(a.output.as_deref(), text.as_bytes())
        }
        Command::TrainAm(a) => {
            let m = load_manifest(&a.manifest)?;
            let mut pairs = Vec::new();
            for s in &m.sessions {
                for it in &s.items {
                    pairs.push((audio(&it.audio)?, it.transcription.clone()));
                }
            }
            let mut cfg = TrainConfig::default();
            if let Some(i) = a.iters {
                cfg.iters = i;
            }
            if let Some(list) = &a.mixtures {
                cfg.mixtures = list
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|_| CliError::input("usage", format!("bad mixture size {s:?}"))))
                    .collect::<Result<_>>()?;
            }
            let (model, report) = pipeline::train_model(&pairs, G2p::shared(), &fe, &cfg)?;
            if !report.skipped.is_empty() {
                tracing::warn!("{} utterance(s) could not be aligned and were skipped", report.skipped.len());
            }
            if let Some(r) = &a.report {
                let json = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
                write_atomic(Some(r), json.as_bytes())?;
            }
            write_atomic(Some(&a.output), model.to_text().as_bytes())
        }
        Command::TrainVad(a) => {
            let list = read_text(&a.list)?;
            let base = a.list.parent().unwrap_or(Path::new("."));
            let mut labeled = Vec::new();
            for (i, line) in list.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (wav, segs) = line
                    .split_once('\t')
                    .ok_or_else(|| CliError::input("input", format!("{} line {}: expected <audio><TAB><segments>", a.list.display(), i + 1)))?;
                let audio = audio(&base.join(wav.trim()))?;
                let seg_path = base.join(segs.trim());
                let segs = parse_segments(&read_text(&seg_path)?).map_err(|e| CliError::input("format", format!("{}: {e}", seg_path.display())))?;
                let f = fe.vad_features(&audio).map_err(PipelineError::from)?;
                let labels = (0..f.rows())
                    .map(|t| {
                        let c = t as f64 * f.hop + f.win / 2.0;
                        segs.iter().any(|&(s, e, k)| k == SegmentKind::Speech && s <= c && c < e)
                    })
                    .collect();
                labeled.push((f, labels));
            }
            let cfg = VadTrainConfig {
                recall_target: a.recall,
                ..VadTrainConfig::default()
            };
            let (model, report) = vad_train(&labeled, &cfg).map_err(|e| CliError::processing("vad", e.to_string()))?;
            eprintln!("recall {:.4} precision {:.4} after {} epochs", report.recall, report.precision, report.epochs);
            write_atomic(Some(&a.output), model.to_json().as_bytes())
        }
        Command::Corpus(c) => run_corpus(c, ctx),
        Command::Serve(a) => {
            let s = &ctx.file.serve;
            let defaults = ServiceConfig::default();
            let cfg = ServiceConfig {
                listen: a.listen.or(s.listen).unwrap_or(defaults.listen),
                workers: a.workers.or(s.workers).unwrap_or(defaults.workers),
                storage: a.storage.or(s.storage.clone()).unwrap_or(defaults.storage),
                payload_limit: a.payload_limit.or(s.payload_limit).unwrap_or(DEFAULT_PAYLOAD_LIMIT),
                api_key: a.api_key.or(s.api_key.clone()),
                model: a.model.or(ctx.file.model.clone()),
                vad_model: a.vad_model.or(ctx.file.vad_model.clone()),
            };
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::processing("service", e.to_string()))?;
            rt.block_on(service::serve(cfg)).map_err(|e| CliError::processing("service", e.to_string()))
        }
    }
}

fn run_corpus(c: CorpusCommand, ctx: &Context) -> Result<()> {
    match c {
        CorpusCommand::Stats { manifest, expect } => {
            let m = load_manifest(&manifest)?;
            for w in m.warnings() {
                eprintln!("warning: {w}");
            }
            let s = &m.stats;
            let mut out = format!(
                "speakers   {}\nsessions   {}\ntokens     {}\nvocabulary {}\nhours      {:.4}\n",
                s.speakers, s.sessions, s.tokens, s.vocabulary, s.hours
            );
            let Some(expect) = expect else {
                return write_atomic(None, out.as_bytes());
            };
            let expected = if expect == "studio" {
                ExpectedStats::studio_corpus()
            } else {
                let text = read_text(Path::new(&expect))?;
                serde_json::from_str(&text).map_err(|e| CliError::input("format", format!("{expect}: {e}")))?
            };
            let checks = validate_stats(s, &expected);
            out.push_str(&format_report(&checks));
            write_atomic(None, out.as_bytes())?;
            match checks.iter().filter(|c| !c.matches).count() {
                0 => Ok(()),
                n => Err(CliError::processing("stats", format!("{n} statistic(s) differ from the expected values"))),
            }
        }
        CorpusCommand::Split {
            manifest,
            test_fraction,
            speaker_disjoint,
            train_out,
            test_out,
        } => {
            let m = load_manifest(&manifest)?;
            let opts = SplitOptions {
                test_fraction,
                seed: ctx.seed,
                speaker_disjoint,
            };
            let (train, test) = split(&m, &opts)?;
            write_atomic(Some(&train_out), train.to_tsv().as_bytes())?;
            write_atomic(Some(&test_out), test.to_tsv().as_bytes())?;
            eprintln!("{} train and {} test sessions", train.sessions.len(), test.sessions.len());
            Ok(())
        }
        CorpusCommand::Mini { dir, speakers, sessions } => {
            let cfg = MiniConfig {
                speakers,
                sessions,
                seed: ctx.seed,
                ..MiniConfig::default()
            };
            let c = write_mini_corpus(&dir, &cfg)?;
            let stats = corpus::load_manifest(&c.manifest)?.stats;
            eprintln!("wrote {} ({} sessions, {:.4} hours)", c.manifest.display(), stats.sessions, stats.hours);
            Ok(())
        }
    }
}

fn init_logging(serve: bool) {
    let default = if serve { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(p) = path else { return Ok(FileConfig::default()) };
    let text = read_text(p)?;
    toml::from_str(&text).map_err(|e| CliError::input("config", format!("{}: {e}", p.display())))
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    EXIT_USAGE
                } else {
                    0
                };
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error:usage: {first}");
            eprint!("{}", msg.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
            return EXIT_USAGE;
        }
    };
    init_logging(matches!(cli.command, Command::Serve(_)));
    let result = load_config(cli.config.as_deref()).and_then(|file| {
        if let Some(n) = cli.jobs.or(file.jobs) {
            if n == 0 {
                return Err(CliError {
                    kind: "usage",
                    code: EXIT_USAGE,
                    message: "--jobs must be at least 1".into(),
                });
            }
            // fails only when a pool already exists, as in repeated in-process runs
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let ctx = Context {
            seed: cli.seed.or(file.seed).unwrap_or(0),
            file,
        };
        run_command(cli.command, &ctx)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(Some(&p), b"first").unwrap();
        write_atomic(Some(&p), b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let missing = dir.path().join("no/such/dir/out.txt");
        assert_eq!(write_atomic(Some(&missing), b"x").unwrap_err().code, EXIT_PROCESSING);
    }

    #[test]
    fn config_file_keys() {
        let c: FileConfig = toml::from_str("model = \"m.am\"\nseed = 4\n[serve]\nworkers = 0\n").unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.serve.workers, Some(0));
        assert!(toml::from_str::<FileConfig>("modle = 1").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["speechtools", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["speechtools", "kws", "a.wav"]), EXIT_USAGE);
    }
}
