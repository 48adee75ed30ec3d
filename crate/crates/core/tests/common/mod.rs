//! Fixtures and an HTTP client shared by the service and acceptance tests.
#![allow(dead_code)]

pub mod docs;

use std::time::{Duration, Instant};

use reqwest::multipart::{Form, Part};
use reqwest::StatusCode;
use serde_json::Value;
use speechtools::am::{train, AcousticModel, TrainConfig};
use speechtools::corpus::synth::{Synth, SynthUtterance, UtteranceShape, Voice};
use speechtools::dsp::{wav_bytes, Frontend};
use speechtools::service::{spawn, RunningService, ServiceConfig};

pub const POEM: &str =
    "W Szczebrzeszynie chrząszcz brzmi w trzcinie i Szczebrzeszyn z tego słynie. Wół go pyta: panie chrząszczu, po cóż pan tak brzęczy w gąszczu?";
pub const POEM_PHONES: &str = "f S tS e b Z e S I ni e x S on S tS b Z m i f t S tsi i ni e i S tS e b Z e S I n s t e g o s w I ni e v u w g o p I t a p a ni e x S on S tS u p o ts u S p a n t a g b Z en tS I v g on S tS u";

/// A model trained on three-phone synthetic speech plus held-out
/// utterances from the same vocabulary.
pub struct Fixture {
    pub model: AcousticModel,
    pub vocab: Vec<String>,
    pub held_out: Vec<SynthUtterance>,
}

pub fn fixture(seed: u64) -> Fixture {
    let mut s = Synth::new(seed);
    let vocab = s.vocabulary(24, &["a"], &["m", "s"]);
    let fe = Frontend::default();
    s.shape = UtteranceShape::training();
    let corpus: Vec<_> = (0..40)
        .map(|_| {
            let words = s.sentence(&vocab, 4);
            s.utterance(&words, Voice::default()).training(&fe).unwrap()
        })
        .collect();
    let (model, _) = train(&corpus, &TrainConfig::default()).unwrap();
    s.shape = UtteranceShape::default();
    let held_out = (0..4)
        .map(|_| {
            let words = s.sentence(&vocab, 5);
            s.utterance(&words, Voice::default())
        })
        .collect();
    Fixture { model, vocab, held_out }
}

pub fn wav(u: &SynthUtterance) -> Vec<u8> {
    wav_bytes(&u.audio).unwrap()
}

pub async fn start(storage: &std::path::Path, workers: usize) -> RunningService {
    start_with(ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        workers,
        storage: storage.to_path_buf(),
        ..ServiceConfig::default()
    })
    .await
}

pub async fn start_with(cfg: ServiceConfig) -> RunningService {
    spawn(cfg).await.unwrap()
}

pub struct Client {
    http: reqwest::Client,
    base: String,
    pub key: Option<String>,
}

/// `(name, file name, bytes)`; parts with a file name are sent as files.
pub type PartSpec<'a> = (&'a str, Option<&'a str>, Vec<u8>);

impl Client {
    pub fn new(svc: &RunningService) -> Client {
        Client {
            http: reqwest::Client::new(),
            base: format!("http://{}", svc.addr),
            key: None,
        }
    }

    fn with_key(&self, r: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.key {
            Some(k) => r.header("x-api-key", k),
            None => r,
        }
    }

    async fn json(r: reqwest::Response) -> (StatusCode, Value) {
        let status = r.status();
        let v = r.json().await.unwrap_or(Value::Null);
        (status, v)
    }

    pub async fn submit(&self, tool: &str, parts: Vec<PartSpec<'_>>) -> (StatusCode, Value) {
        let mut form = Form::new().text("tool", tool.to_string());
        for (name, file, bytes) in parts {
            let mut p = Part::bytes(bytes);
            if let Some(f) = file {
                p = p.file_name(f.to_string());
            }
            form = form.part(name.to_string(), p);
        }
        let r = self
            .with_key(self.http.post(format!("{}/jobs", self.base)).multipart(form))
            .send()
            .await
            .unwrap();
        Self::json(r).await
    }

    /// Submits and returns the new job id, panicking on rejection.
    pub async fn submit_ok(&self, tool: &str, parts: Vec<PartSpec<'_>>) -> String {
        let (status, v) = self.submit(tool, parts).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    pub async fn job(&self, id: &str) -> (StatusCode, Value) {
        let r = self.with_key(self.http.get(format!("{}/jobs/{id}", self.base))).send().await.unwrap();
        Self::json(r).await
    }

    /// Polls until the job is done or failed.
    pub async fn wait(&self, id: &str) -> Value {
        let t0 = Instant::now();
        loop {
            let (status, v) = self.job(id).await;
            assert_eq!(status, StatusCode::OK, "{v}");
            if v["state"] == "done" || v["state"] == "failed" {
                return v;
            }
            assert!(t0.elapsed() < Duration::from_secs(120), "job {id} still {}", v["state"]);
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    pub async fn artifact(&self, id: &str, name: &str) -> (StatusCode, Vec<u8>) {
        let r = self
            .with_key(self.http.get(format!("{}/jobs/{id}/artifacts/{name}", self.base)))
            .send()
            .await
            .unwrap();
        (r.status(), r.bytes().await.unwrap().to_vec())
    }

    pub async fn text(&self, id: &str, name: &str) -> String {
        let (status, b) = self.artifact(id, name).await;
        assert_eq!(status, StatusCode::OK);
        String::from_utf8(b).unwrap()
    }

    pub async fn peaks(&self, id: &str, bins: usize) -> (StatusCode, Value) {
        let r = self
            .with_key(self.http.get(format!("{}/jobs/{id}/peaks?bins={bins}", self.base)))
            .send()
            .await
            .unwrap();
        Self::json(r).await
    }

    pub async fn realign(&self, id: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .with_key(self.http.post(format!("{}/jobs/{id}/realign", self.base)).json(&body))
            .send()
            .await
            .unwrap();
        Self::json(r).await
    }
}

pub fn text_part<'a>(name: &'a str, s: &str) -> PartSpec<'a> {
    (name, None, s.as_bytes().to_vec())
}

/// Parts of an align job over `u` with the fixture model.
pub fn align_parts<'a>(fx: &Fixture, u: &SynthUtterance) -> Vec<PartSpec<'a>> {
    vec![
        ("audio", Some("utt.wav"), wav(u)),
        text_part("transcript", &u.text),
        ("model", Some("model.am"), fx.model.to_text().into_bytes()),
    ]
}

/// Items of `level` lying entirely outside samples `[a, b)`, as
/// `(label, start, duration, score)`.
pub fn outside(doc: &speechtools::formats::AnnotationDoc, level: &str, a: u64, b: u64) -> Vec<(String, u64, u64, Option<u64>)> {
    doc.level(level)
        .map(|l| {
            l.items
                .iter()
                .filter(|i| i.end() <= a || i.start >= b)
                .map(|i| (i.label.clone(), i.start, i.duration, i.score.map(f64::to_bits)))
                .collect()
        })
        .unwrap_or_default()
}

/// Sample span of the words a region `[t0, t1]` snaps out to.
pub fn snapped_span(doc: &speechtools::formats::AnnotationDoc, t0: f64, t1: f64) -> (u64, u64) {
    let sr = doc.audio.sample_rate as f64;
    let (s0, s1) = ((t0 * sr) as u64, (t1 * sr).ceil() as u64);
    let bounds = doc
        .level("words")
        .unwrap()
        .items
        .iter()
        .flat_map(|i| [i.start, i.end()])
        .chain([0, doc.audio.samples]);
    let (mut a, mut b) = (0, doc.audio.samples);
    for x in bounds {
        if x <= s0 && x > a {
            a = x;
        }
        if x >= s1 && x < b {
            b = x;
        }
    }
    (a, b)
}
