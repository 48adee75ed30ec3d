use speechtools::am::{train, AcousticModel, TrainConfig};
use speechtools::corpus::synth::{Synth, SynthUtterance, UtteranceShape, Voice};
use speechtools::dsp::{AudioBuffer, Frontend, SAMPLE_RATE};
use speechtools::g2p::{G2p, Lexicon};
use speechtools::kws::{build_query, search, KeywordHit, KwsConfig, QueryMode};

fn model(seed: u64) -> (AcousticModel, Vec<String>) {
    let mut s = Synth::new(seed);
    let vocab = s.default_vocabulary(60);
    let fe = Frontend::default();
    s.shape = UtteranceShape::training();
    let corpus: Vec<_> = (0..60)
        .map(|_| {
            let words = s.sentence(&vocab, 4);
            s.utterance(&words, Voice::default()).training(&fe).unwrap()
        })
        .collect();
    (train(&corpus, &TrainConfig::default()).unwrap().0, vocab)
}

/// Eight filler words with `kw` as the fifth word. Fillers never contain
/// the keyword or sit inside it, and the keyword's neighbours do not repeat
/// its edge phones: "lum moles" has one long `m` and no audible boundary.
fn planted(s: &mut Synth, vocab: &[String], kw: &str) -> SynthUtterance {
    let fillers: Vec<String> = vocab.iter().filter(|w| !w.contains(kw) && !kw.contains(w.as_str())).cloned().collect();
    let (first, last) = (kw.chars().next().unwrap(), kw.chars().last().unwrap());
    let before: Vec<String> = fillers.iter().filter(|w| !w.ends_with(first)).cloned().collect();
    let after: Vec<String> = fillers.iter().filter(|w| !w.starts_with(last)).cloned().collect();
    let mut words = s.sentence(&fillers, 3);
    words.extend(s.sentence(&before, 1));
    words.push(kw);
    words.extend(s.sentence(&after, 1));
    words.extend(s.sentence(&fillers, 3));
    s.utterance(&words, Voice::default())
}

fn run(u: &AudioBuffer, kw: &str, m: &AcousticModel, cfg: &KwsConfig) -> Vec<KeywordHit> {
    let f = Frontend::default().mfcc(u).unwrap();
    let q = build_query(kw, &Lexicon::new(), G2p::shared()).unwrap();
    search(&f, &q, m, cfg).unwrap()
}

#[test]
fn planted_keywords_are_found() {
    let (m, vocab) = model(5);
    let mut s = Synth::new(77);
    let long: Vec<&String> = vocab.iter().filter(|w| w.len() >= 5).collect();
    let (mut hits, mut correct, mut found) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    let trials = 20;
    for trial in 0..trials {
        let kw = long[trial % long.len()].as_str();
        let u = planted(&mut s, &vocab, kw);
        let truth = u.words[4].start;
        let out = run(&u.audio, kw, &m, &KwsConfig::default());
        hits += out.len();
        if let Some(h) = out.iter().find(|h| (h.start - truth).abs() <= 0.05) {
            correct += 1;
            found += 1;
            worst = worst.max((h.start - truth).abs());
        }
    }
    let precision = correct as f64 / hits as f64;
    eprintln!(
        "precision {precision:.3}, recall {:.3}, worst start error {worst:.3}",
        found as f64 / trials as f64
    );
    assert!(precision >= 0.9);
    assert!(found >= 18);
}

#[test]
fn hit_at_three_seconds() {
    let (m, vocab) = model(5);
    let mut s = Synth::new(8);
    let kw = vocab.iter().find(|w| w.len() >= 5).unwrap().clone();
    let u = planted(&mut s, &vocab, &kw);
    // pad the front so the keyword starts at exactly 3.0 s
    let pad = ((3.0 - u.words[4].start) * SAMPLE_RATE as f64).round() as usize;
    assert!(pad > 0);
    let mut samples: Vec<f32> = s.silence(pad).into_iter().map(|v| v as f32).collect();
    samples.extend_from_slice(&u.audio.samples);
    let audio = AudioBuffer::new(samples, SAMPLE_RATE).unwrap();
    let truth = u.words[4].start + pad as f64 / SAMPLE_RATE as f64;
    assert!((truth - 3.0).abs() < 1e-3);
    let hits = run(&audio, &kw, &m, &KwsConfig::default());
    assert_eq!(hits.len(), 1, "{hits:?}");
    assert!((hits[0].start - 3.0).abs() <= 0.05, "{hits:?}");
}

#[test]
fn threshold_behaviour() {
    let (m, vocab) = model(5);
    let mut s = Synth::new(9);
    let kw = vocab.iter().find(|w| w.len() >= 5).unwrap().clone();
    let u = planted(&mut s, &vocab, &kw);
    let at = |theta: f64| {
        run(
            &u.audio,
            &kw,
            &m,
            &KwsConfig {
                threshold: theta,
                ..KwsConfig::default()
            },
        )
    };
    assert!(at(f64::INFINITY).is_empty());
    let mut prev = at(-1e9);
    assert!(prev.len() > 1);
    for w in prev.windows(2) {
        assert!(w[0].likelihood >= w[1].likelihood);
        let (a, b) = (&w[0], &w[1]);
        assert!(a.start + a.duration <= b.start + 1e-9 || b.start + b.duration <= a.start + 1e-9);
    }
    for theta in [-10.0, -5.0, -2.0, -1.0, -0.5, 0.0] {
        let next = at(theta);
        assert!(next.iter().all(|h| prev.contains(h)), "theta {theta}");
        prev = next;
    }
    // the low floor reports zero likelihood for weak hits
    assert!(at(-1e9).iter().any(|h| h.likelihood == 0.0));
}

#[test]
fn substring_of_a_longer_word_is_hit() {
    let (m, vocab) = model(5);
    let mut s = Synth::new(10);
    // "les" is out of vocabulary and sits inside the planted word
    let host = "molesan";
    let u = planted(&mut s, &vocab, host);
    let q = build_query("les", &Lexicon::new(), G2p::shared()).unwrap();
    assert_eq!(q.mode, QueryMode::SyllableFallback);
    let hits = run(&u.audio, "les", &m, &KwsConfig::default());
    let (a, b) = (u.words[4].start, u.words[4].end);
    assert!(hits.iter().any(|h| h.start >= a - 0.05 && h.start + h.duration <= b + 0.05), "{hits:?}");
}
