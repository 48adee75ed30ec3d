//! C interface to speechtools.
//!
//! Every call returns an `StStatus`. On failure a message is kept per
//! thread and read with `st_last_error`. Handles are opaque and released
//! with their `_free` function; strings returned through `out` pointers are
//! released with `st_string_free`. Audio is mono `float` samples in
//! [-1, 1].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use speechtools::align::LongOptions;
use speechtools::am::AcousticModel;
use speechtools::dsp::{AudioBuffer, Frontend};
use speechtools::formats::write_segments;
use speechtools::g2p::G2p;
use speechtools::kws::{format_hits, KwsConfig};
use speechtools::pipeline::{self, G2pMode, PipelineError};
use speechtools::vad::Smoothing;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullArgument = 1,
    /// A string argument is not UTF-8 or the input is otherwise malformed.
    InvalidInput = 2,
    G2p = 3,
    Audio = 4,
    Model = 5,
    Align = 6,
    Vad = 7,
    Kws = 8,
    Format = 9,
    /// Internal error; the library caught a panic.
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StAlignFormat {
    TextGrid = 0,
    AnnotationJson = 1,
}

/// Grapheme-to-phoneme converter with the built-in rules and lexicon.
pub struct StG2p(G2p);

/// Acoustic model.
pub struct StModel(AcousticModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Fail = (StStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            StStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            StStatus::Panic
        }
    }
}

fn pipeline_fail(e: PipelineError) -> Fail {
    let status = match e {
        PipelineError::G2p(_) => StStatus::G2p,
        PipelineError::Audio(_) => StStatus::Audio,
        PipelineError::Align(_) => StStatus::Align,
        PipelineError::Model(_) => StStatus::Model,
        PipelineError::Vad(_) | PipelineError::Diarize(_) => StStatus::Vad,
        PipelineError::Kws(_) => StStatus::Kws,
        PipelineError::Format(_) => StStatus::Format,
        PipelineError::Input(_) => StStatus::InvalidInput,
    };
    (status, e.to_string())
}

fn null(name: &str) -> Fail {
    (StStatus::NullArgument, format!("{name} is null"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (StStatus::InvalidInput, format!("{name}: {e}")))
}

unsafe fn audio(samples: *const f32, n: usize, sample_rate: u32) -> Result<AudioBuffer, Fail> {
    if samples.is_null() && n > 0 {
        return Err(null("samples"));
    }
    let s = if n == 0 { &[][..] } else { std::slice::from_raw_parts(samples, n) };
    AudioBuffer::new(s.to_vec(), sample_rate).map_err(|e| (StStatus::Audio, e.to_string()))
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| (StStatus::Format, "output contains a NUL byte".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn model<'a>(m: *const StModel) -> Result<&'a AcousticModel, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn st_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn st_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn st_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_g2p_new(out: *mut *mut StG2p) -> StStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(StG2p(G2p::polish())));
        Ok(())
    })
}

/// # Safety
/// `g` must come from `st_g2p_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn st_g2p_free(g: *mut StG2p) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Phonemic transcription of UTF-8 `text`: one line for the whole text
/// when `canonical` is non-zero, otherwise `word<TAB>phones` lines.
///
/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn st_g2p_transcribe(g: *const StG2p, text_in: *const c_char, canonical: c_int, out: *mut *mut c_char) -> StStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g2p"))?;
        let t = text(text_in, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mode = if canonical != 0 { G2pMode::Canonical } else { G2pMode::Words };
        let s = pipeline::g2p_text(&g.0, t, mode).map_err(pipeline_fail)?;
        give_string(out, s)
    })
}

/// Loads an acoustic model file.
///
/// # Safety
/// `path` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn st_model_load(path: *const c_char, out: *mut *mut StModel) -> StStatus {
    guard(|| {
        let p = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = AcousticModel::load(p).map_err(|e| (StStatus::Model, format!("{p}: {e}")))?;
        *out = Box::into_raw(Box::new(StModel(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from `st_model_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn st_model_free(m: *mut StModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Aligns `transcript` to the audio; the result is a TextGrid or
/// annotation JSON.
///
/// # Safety
/// `samples` holds `n` floats; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn st_align(
    m: *const StModel,
    samples: *const f32,
    n: usize,
    sample_rate: u32,
    transcript: *const c_char,
    format: StAlignFormat,
    out: *mut *mut c_char,
) -> StStatus {
    guard(|| {
        let model = model(m)?;
        let t = text(transcript, "transcript")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let audio = audio(samples, n, sample_rate)?;
        let a = pipeline::align_text(&audio, t, model, G2p::shared(), &Frontend::default(), None, &LongOptions::default()).map_err(pipeline_fail)?;
        let (tg, json) = pipeline::alignment_outputs(&a, pipeline::audio_meta("audio.wav", &audio)).map_err(pipeline_fail)?;
        give_string(out, if format == StAlignFormat::AnnotationJson { json } else { tg })
    })
}

/// Speech segments as `start end speech|nonspeech` lines, from an energy
/// gate.
///
/// # Safety
/// `samples` holds `n` floats; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn st_vad(samples: *const f32, n: usize, sample_rate: u32, out: *mut *mut c_char) -> StStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let audio = audio(samples, n, sample_rate)?;
        let segs = pipeline::vad_segments(&audio, &Frontend::default(), None, &Smoothing::default()).map_err(pipeline_fail)?;
        give_string(out, write_segments(&segs))
    })
}

/// Keyword hits in the text listing format. `keywords` is comma
/// separated; a NaN `threshold` selects the default.
///
/// # Safety
/// `samples` holds `n` floats; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn st_kws(
    m: *const StModel,
    samples: *const f32,
    n: usize,
    sample_rate: u32,
    keywords: *const c_char,
    threshold: f64,
    out: *mut *mut c_char,
) -> StStatus {
    guard(|| {
        let model = model(m)?;
        let k = pipeline::parse_keywords(text(keywords, "keywords")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let audio = audio(samples, n, sample_rate)?;
        let mut cfg = KwsConfig::default();
        if !threshold.is_nan() {
            cfg.threshold = threshold;
        }
        let hits = pipeline::spot_keywords(&audio, &k, model, G2p::shared(), &Frontend::default(), &cfg).map_err(pipeline_fail)?;
        give_string(out, format_hits(&hits))
    })
}
