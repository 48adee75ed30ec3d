use std::ffi::{CStr, CString};
use std::ptr;

use speechtools::am::{train, TrainConfig};
use speechtools::corpus::synth::{Synth, UtteranceShape, Voice};
use speechtools::dsp::Frontend;
use speechtools::formats::parse_annotation_json;
use speechtools_ffi::*;

fn owned(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { st_string_free(p) };
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(st_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn g2p_through_handles() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { st_g2p_new(&mut g) }, StStatus::Ok);
    let text = CString::new("pan tak brzęczy").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { st_g2p_transcribe(g, text.as_ptr(), 1, &mut out) }, StStatus::Ok);
    assert_eq!(owned(out), "p a n t a g b Z en tS I\n");
    assert_eq!(last_error(), "");

    assert_eq!(unsafe { st_g2p_transcribe(g, ptr::null(), 1, &mut out) }, StStatus::NullArgument);
    assert_eq!(last_error(), "text is null");
    let bad = CString::new(vec![0xffu8, 0xfe]).unwrap();
    assert_eq!(unsafe { st_g2p_transcribe(g, bad.as_ptr(), 1, &mut out) }, StStatus::InvalidInput);
    unsafe { st_g2p_free(g) };
    unsafe { st_g2p_free(ptr::null_mut()) };
    assert!(!unsafe { CStr::from_ptr(st_version()) }.to_bytes().is_empty());
}

#[test]
fn align_and_spot_with_a_loaded_model() {
    let mut s = Synth::new(5);
    let vocab = s.vocabulary(12, &["a"], &["m", "s"]);
    let fe = Frontend::default();
    s.shape = UtteranceShape::training();
    let corpus: Vec<_> = (0..20)
        .map(|_| {
            let w = s.sentence(&vocab, 4);
            s.utterance(&w, Voice::default()).training(&fe).unwrap()
        })
        .collect();
    let (model, _) = train(&corpus, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.am");
    model.save(&path).unwrap();

    let mut m = ptr::null_mut();
    let missing = CString::new(dir.path().join("absent.am").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { st_model_load(missing.as_ptr(), &mut m) }, StStatus::Model);
    assert!(last_error().contains("absent.am"));
    let p = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { st_model_load(p.as_ptr(), &mut m) }, StStatus::Ok);

    s.shape = UtteranceShape::default();
    let words = s.sentence(&vocab, 4);
    let u = s.utterance(&words, Voice::default());
    let samples = &u.audio.samples;
    let text = CString::new(u.text.clone()).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe {
        st_align(
            m,
            samples.as_ptr(),
            samples.len(),
            u.audio.sample_rate,
            text.as_ptr(),
            StAlignFormat::AnnotationJson,
            &mut out,
        )
    };
    assert_eq!(st, StStatus::Ok, "{}", last_error());
    let doc = parse_annotation_json(&owned(out)).unwrap();
    let labels: Vec<&str> = doc.level("words").unwrap().items.iter().map(|i| i.label.as_str()).collect();
    assert_eq!(labels, u.word_labels());

    let st = unsafe {
        st_align(
            m,
            samples.as_ptr(),
            samples.len(),
            u.audio.sample_rate,
            text.as_ptr(),
            StAlignFormat::TextGrid,
            &mut out,
        )
    };
    assert_eq!(st, StStatus::Ok);
    assert!(owned(out).starts_with("File type = \"ooTextFile\""));

    let kw = CString::new(words[1]).unwrap();
    let st = unsafe { st_kws(m, samples.as_ptr(), samples.len(), u.audio.sample_rate, kw.as_ptr(), -1e9, &mut out) };
    assert_eq!(st, StStatus::Ok, "{}", last_error());
    let hits = owned(out);
    assert!(!hits.is_empty() && hits.lines().all(|l| l.starts_with(&format!("{} ", words[1]))), "{hits}");

    let st = unsafe { st_vad(samples.as_ptr(), samples.len(), u.audio.sample_rate, &mut out) };
    assert_eq!(st, StStatus::Ok);
    assert!(owned(out).contains(" speech\n"));

    assert_eq!(unsafe { st_vad(ptr::null(), 10, 16000, &mut out) }, StStatus::NullArgument);
    assert_eq!(
        unsafe { st_align(ptr::null(), samples.as_ptr(), 1, 16000, text.as_ptr(), StAlignFormat::TextGrid, &mut out) },
        StStatus::NullArgument
    );
    unsafe { st_model_free(m) };
}

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/speechtools.h")).unwrap();
    for f in [
        "st_g2p_new",
        "st_g2p_transcribe",
        "st_model_load",
        "st_align",
        "st_vad",
        "st_kws",
        "st_string_free",
        "st_last_error",
        "ST_STATUS_NULL_ARGUMENT",
        "typedef struct StModel StModel",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
