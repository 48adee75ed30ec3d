use speechtools::align::{align_long, force_align, realign_region, AlignOptions, Alignment, LongOptions};
use speechtools::am::{train, AcousticModel, TrainConfig};
use speechtools::corpus::synth::{Synth, SynthUtterance, Truth, UtteranceShape, Voice};
use speechtools::dsp::{AudioBuffer, FeatureMatrix, Frontend};
use speechtools::g2p::G2p;

fn three_phone_setup(seed: u64) -> (AcousticModel, Vec<SynthUtterance>) {
    let mut s = Synth::new(seed);
    let vocab = s.vocabulary(24, &["a"], &["m", "s"]);
    let fe = Frontend::default();
    let mut corpus = Vec::new();
    s.shape = UtteranceShape::training();
    for _ in 0..40 {
        let words = s.sentence(&vocab, 4);
        corpus.push(s.utterance(&words, Voice::default()).training(&fe).unwrap());
    }
    let (model, _) = train(&corpus, &TrainConfig::default()).unwrap();
    s.shape = UtteranceShape::default();
    let held_out = (0..10)
        .map(|_| {
            let words = s.sentence(&vocab, 5);
            s.utterance(&words, Voice::default())
        })
        .collect();
    (model, held_out)
}

fn boundaries(tier: &[Truth]) -> Vec<f64> {
    tier.iter().flat_map(|t| [t.start, t.end]).collect()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn align(u: &SynthUtterance, model: &AcousticModel) -> (FeatureMatrix, Alignment) {
    let f = Frontend::default().mfcc(&u.audio).unwrap();
    let opts = AlignOptions {
        duration: Some(u.audio.duration()),
        ..AlignOptions::default()
    };
    let a = force_align(&f, &u.word_labels(), model, G2p::shared(), &opts).unwrap();
    (f, a)
}

#[test]
fn recovers_synthetic_boundaries() {
    let (model, held_out) = three_phone_setup(11);
    let mut errors = Vec::new();
    for u in &held_out {
        let (_, a) = align(u, &model);
        a.validate().unwrap();
        assert_eq!(a.words.len(), u.words.len());
        assert_eq!(a.phones.len(), u.phones.len());
        let got: Vec<f64> = a.phones.iter().flat_map(|p| [p.start, p.end]).collect();
        for (g, t) in got.iter().zip(boundaries(&u.phones)) {
            errors.push((g - t).abs());
        }
    }
    errors.sort_by(f64::total_cmp);
    let (med, p95) = (percentile(&errors, 0.5), percentile(&errors, 0.95));
    eprintln!("median {med:.4} p95 {p95:.4}");
    assert!(med <= 0.020, "median {med}");
    assert!(p95 <= 0.050, "p95 {p95}");
}

#[test]
fn realign_identity_and_locality() {
    let (model, held_out) = three_phone_setup(12);
    let g2p = G2p::shared();
    let u = &held_out[0];
    let (f, a) = align(u, &model);
    let opts = AlignOptions::default();
    let (w1, w3) = (&a.words[1], &a.words[3]);
    let region = (w1.start + 0.01, w3.end - 0.01);
    let same: Vec<String> = a.words[1..4].iter().map(|w| w.label.clone()).collect();
    let b = realign_region(&a, region, &same, &f, &model, g2p, &opts).unwrap();
    b.validate().unwrap();
    assert_eq!(b.words.len(), a.words.len());
    for (x, y) in a.words.iter().zip(&b.words).chain(a.phones.iter().zip(&b.phones)) {
        assert_eq!(x.label, y.label);
        assert!((x.start - y.start).abs() <= 0.0100001 && (x.end - y.end).abs() <= 0.0100001);
    }
    // outside intervals are copied bit for bit
    assert_eq!(b.words[0], a.words[0]);
    assert_eq!(b.words[4], a.words[4]);

    // a different word in the middle leaves the neighbours alone
    let mut changed = same.clone();
    changed[1] = "sasa".into();
    let c = realign_region(&a, region, &changed, &f, &model, g2p, &opts).unwrap();
    c.validate().unwrap();
    assert_eq!(c.words[0], a.words[0]);
    assert_eq!(c.words[4], a.words[4]);
    assert_eq!(c.words[2].label, "sasa");

    // the whole file equals a fresh alignment of the corrected text
    let whole = realign_region(&a, (0.0, a.duration), &u.word_labels(), &f, &model, g2p, &opts).unwrap();
    let fresh = force_align(
        &f,
        &u.word_labels(),
        &model,
        g2p,
        &AlignOptions {
            duration: Some(a.duration),
            ..opts
        },
    )
    .unwrap();
    assert_eq!(whole, fresh);

    assert!(realign_region(&a, (-1.0, 0.5), &same, &f, &model, g2p, &opts).is_err());
    assert!(realign_region(&a, (0.5, a.duration + 1.0), &same, &f, &model, g2p, &opts).is_err());
}

/// Utterances joined with `gap` seconds of silence between them.
fn concat(parts: &[SynthUtterance], gap: f64, s: &mut Synth) -> (AudioBuffer, Vec<Truth>) {
    let mut samples = Vec::new();
    let mut words = Vec::new();
    for (i, u) in parts.iter().enumerate() {
        if i > 0 {
            let n = (gap * 16000.0) as usize;
            samples.extend(s.silence(n).into_iter().map(|v| v as f32));
        }
        let off = samples.len() as f64 / 16000.0;
        words.extend(u.words.iter().map(|w| Truth {
            label: w.label.clone(),
            start: w.start + off,
            end: w.end + off,
        }));
        samples.extend_from_slice(&u.audio.samples);
    }
    (AudioBuffer::new(samples, 16000).unwrap(), words)
}

#[test]
fn long_audio_is_chunked_and_anchored() {
    let (model, _) = three_phone_setup(13);
    let mut s = Synth::new(99);
    let vocab = s.vocabulary(24, &["a"], &["m", "s"]);
    let parts: Vec<SynthUtterance> = (0..12)
        .map(|_| {
            let w = s.sentence(&vocab, 6);
            s.utterance(&w, Voice::default())
        })
        .collect();
    let (audio, truth) = concat(&parts, 2.0, &mut s);
    assert!(audio.duration() > 40.0);
    let text: Vec<String> = truth.iter().map(|t| t.label.clone()).collect();
    let fe = Frontend::default();
    let opts = LongOptions {
        chunk_seconds: 8.0,
        ..LongOptions::default()
    };
    let a = align_long(&audio, &text, &model, G2p::shared(), &fe, None, &opts).unwrap();
    a.validate().unwrap();
    assert!(!a.low_confidence);
    let labels: Vec<&str> = a.words.iter().map(|w| w.label.as_str()).collect();
    assert_eq!(labels, text.iter().map(String::as_str).collect::<Vec<_>>());
    let mut errors: Vec<f64> = a
        .words
        .iter()
        .zip(&truth)
        .flat_map(|(x, t)| [(x.start - t.start).abs(), (x.end - t.end).abs()])
        .collect();
    errors.sort_by(f64::total_cmp);
    assert!(percentile(&errors, 0.5) <= 0.02, "median {}", percentile(&errors, 0.5));
    // nothing placed inside the pauses between the utterances
    for pair in truth.windows(2) {
        let (gap0, gap1) = (pair[0].end, pair[1].start);
        if gap1 - gap0 < 1.5 {
            continue;
        }
        for w in &a.words {
            let overlap = w.end.min(gap1 - 0.1) - w.start.max(gap0 + 0.1);
            assert!(overlap <= 0.01, "{} [{}, {}] inside gap [{gap0}, {gap1}]", w.label, w.start, w.end);
        }
    }
}

#[test]
fn short_long_alignment_equals_force_align() {
    let (model, held_out) = three_phone_setup(14);
    let u = &held_out[1];
    let fe = Frontend::default();
    let long = align_long(&u.audio, &u.word_labels(), &model, G2p::shared(), &fe, None, &LongOptions::default()).unwrap();
    let (_, direct) = align(u, &model);
    assert_eq!(long, direct);
    let empty: Vec<String> = Vec::new();
    let e = align_long(&u.audio, &empty, &model, G2p::shared(), &fe, None, &LongOptions::default()).unwrap();
    assert!(e.words.is_empty() && e.phones.is_empty());
}
