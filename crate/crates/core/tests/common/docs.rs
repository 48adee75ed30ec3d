//! Strategies for fuzzed valid TextGrid and annotation documents.

use proptest::prelude::*;
use speechtools::formats::{AnnotationDoc, AudioMeta, Interval, Item, Level, LevelKind, TextGridDoc, Tier};

/// Sorted distinct cut points strictly inside `(lo, hi)`.
fn cuts(lo: f64, hi: f64, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 0..n).prop_map(move |mut v| {
        v.iter_mut().for_each(|x| *x = lo + (hi - lo) * *x);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.retain(|&x| x > lo && x < hi);
        v
    })
}

fn label() -> impl Strategy<Value = String> {
    prop_oneof![Just(String::new()), "[a-zżółćęśąźń \"']{1,8}", any::<String>()]
}

fn tier(xmin: f64, xmax: f64) -> impl Strategy<Value = Tier> {
    (label(), cuts(xmin, xmax, 12)).prop_flat_map(move |(name, c)| {
        let mut edges = vec![xmin];
        edges.extend(c);
        edges.push(xmax);
        let n = edges.len() - 1;
        prop::collection::vec(label(), n).prop_map(move |texts| Tier {
            name: name.clone(),
            intervals: edges.windows(2).zip(texts).map(|(w, text)| Interval { xmin: w[0], xmax: w[1], text }).collect(),
        })
    })
}

pub fn textgrid() -> impl Strategy<Value = TextGridDoc> {
    (0.0..100.0f64, 1e-3..1e4f64).prop_flat_map(|(xmin, len)| {
        let xmax = xmin + len;
        prop::collection::vec(tier(xmin, xmax), 0..4).prop_map(move |tiers| TextGridDoc { xmin, xmax, tiers })
    })
}

pub fn annotation() -> impl Strategy<Value = AnnotationDoc> {
    (
        1u32..96000,
        1u64..10_000_000,
        prop::collection::vec((1u64..5000, 0u64..3000, label(), prop::option::of(-1e6..1e6f64), 1usize..4), 0..20),
    )
        .prop_map(|(sample_rate, total, words)| {
            let mut w_items = Vec::new();
            let mut p_items = Vec::new();
            let mut t = 0;
            let mut id = 0;
            for (len, gap, lab, score, parts) in words {
                let start = t + gap;
                let len = len.max(parts as u64);
                if start + len > total {
                    break;
                }
                let wid = id;
                w_items.push(Item {
                    id: wid,
                    label: lab.clone(),
                    start,
                    duration: len,
                    score,
                    parent: None,
                });
                id += 1;
                let step = len / parts as u64;
                for k in 0..parts as u64 {
                    let s = start + k * step;
                    let e = if k + 1 == parts as u64 { start + len } else { s + step };
                    p_items.push(Item {
                        id,
                        label: format!("{lab}{k}"),
                        start: s,
                        duration: e - s,
                        score: None,
                        parent: Some(wid),
                    });
                    id += 1;
                }
                t = start + len;
            }
            AnnotationDoc {
                version: 1,
                audio: AudioMeta {
                    name: "x.wav".into(),
                    sample_rate,
                    samples: total,
                },
                low_confidence: total % 2 == 0,
                levels: vec![
                    Level {
                        name: "words".into(),
                        kind: LevelKind::Segment,
                        items: w_items,
                    },
                    Level {
                        name: "phones".into(),
                        kind: LevelKind::Segment,
                        items: p_items,
                    },
                ],
            }
        })
}
