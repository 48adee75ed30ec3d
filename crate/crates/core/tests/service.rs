mod common;

use common::*;
use reqwest::StatusCode;
use serde_json::json;
use speechtools::formats::{parse_annotation_json, parse_textgrid, AnnotationDoc};
use speechtools::service::ServiceConfig;

fn doc(text: &str) -> AnnotationDoc {
    parse_annotation_json(text).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn tools_end_to_end() {
    let fx = fixture(11);
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), 2).await;
    let c = Client::new(&svc);

    let g1 = c.submit_ok("g2p", vec![text_part("text", POEM)]).await;
    let g2 = c.submit_ok("g2p", vec![text_part("text", "pan"), text_part("mode", "words")]).await;
    assert_ne!(g1, g2);
    let u = &fx.held_out[0];
    let al = c.submit_ok("align", align_parts(&fx, u)).await;
    let kw = u.words[2].label.clone();
    let ks = c
        .submit_ok(
            "kws",
            vec![
                ("audio", Some("utt.wav"), wav(u)),
                text_part("keywords", &kw),
                ("model", Some("model.am"), fx.model.to_text().into_bytes()),
            ],
        )
        .await;

    let j = c.wait(&g1).await;
    assert_eq!(j["state"], "done", "{j}");
    assert_eq!(c.text(&g1, "phones.txt").await, format!("{POEM_PHONES}\n"));
    c.wait(&g2).await;
    assert_eq!(c.text(&g2, "phones.txt").await, "pan\tp a n\n");

    let j = c.wait(&al).await;
    assert_eq!(j["state"], "done", "{j}");
    assert!(j.get("error").is_none());
    let names: Vec<&str> = j["results"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["alignment.TextGrid", "alignment.json"]);
    let tg = parse_textgrid(&c.text(&al, "alignment.TextGrid").await).unwrap();
    assert_eq!(tg.tiers.len(), 2);
    let d = doc(&c.text(&al, "alignment.json").await);
    let words: Vec<&str> = d.level("words").unwrap().items.iter().map(|i| i.label.as_str()).collect();
    assert_eq!(words, u.word_labels());
    assert_eq!(d.audio.samples, u.audio.len() as u64);

    let j = c.wait(&ks).await;
    assert_eq!(j["state"], "done", "{j}");
    let hits = c.text(&ks, "hits.txt").await;
    assert!(!hits.is_empty() && hits.lines().all(|l| l.starts_with(&format!("{kw} "))), "{hits}");
    let structured: serde_json::Value = serde_json::from_str(&c.text(&ks, "hits.json").await).unwrap();
    assert!(structured.as_array().unwrap().iter().all(|h| h["keyword"] == kw.as_str()));

    let (status, p) = c.peaks(&al, 100).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["peaks"].as_array().unwrap().len(), 100);
    assert_eq!(p["samples"], u.audio.len());
    assert!(p["peaks"].as_array().unwrap().iter().all(|b| b[0].as_f64() <= b[1].as_f64()));

    let (status, _) = c.artifact(&al, "nothing.txt").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    svc.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rejected_requests() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), 1).await;
    let c = Client::new(&svc);

    let (status, v) = c.submit("align", vec![("audio", Some("a.wav"), vec![0; 64])]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "BadInputManifest");
    assert_eq!(v["error"]["missing"], json!(["transcript", "model"]));

    let (status, v) = c.submit("g2p", vec![text_part("text", "pan"), text_part("speed", "2")]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["extra"], json!(["speed"]));

    let (status, v) = c.submit("transcribe", vec![text_part("text", "pan")]).await;
    assert_eq!((status, v["error"]["kind"].as_str()), (StatusCode::BAD_REQUEST, Some("UnknownTool")));

    let (status, v) = c.job("0123").await;
    assert_eq!((status, v["error"]["kind"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownJob")));
    let (status, v) = c.realign("0123", json!({"t0": 0.0, "t1": 1.0, "words": []})).await;
    assert_eq!((status, v["error"]["kind"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownJob")));

    // binary input fails the job, not the request
    let id = c
        .submit_ok(
            "g2p",
            vec![("text", Some("x.bin"), vec![0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0xff, 0x00])],
        )
        .await;
    let j = c.wait(&id).await;
    assert_eq!(j["state"], "failed");
    assert!(j["error"].as_str().unwrap().starts_with("G2pError: "), "{j}");
    assert_eq!(j["results"], json!([]));

    let (status, v) = c.realign(&id, json!({"t0": 0.0, "t1": 1.0, "words": []})).await;
    assert_eq!((status, v["error"]["kind"].as_str()), (StatusCode::CONFLICT, Some("NotAnAlignment")));
    svc.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn payload_limit_and_api_key() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start_with(ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        workers: 1,
        storage: dir.path().to_path_buf(),
        payload_limit: 4096,
        api_key: Some("sekret".into()),
        ..ServiceConfig::default()
    })
    .await;
    let mut c = Client::new(&svc);
    let (status, v) = c.submit("g2p", vec![text_part("text", "pan")]).await;
    assert_eq!((status, v["error"]["kind"].as_str()), (StatusCode::UNAUTHORIZED, Some("Unauthorized")));
    c.key = Some("sekret".into());
    let (status, v) = c.submit("g2p", vec![text_part("text", &"pan ".repeat(2000))]).await;
    assert_eq!(
        (status, v["error"]["kind"].as_str()),
        (StatusCode::PAYLOAD_TOO_LARGE, Some("PayloadTooLarge")),
        "{v}"
    );
    let id = c.submit_ok("g2p", vec![text_part("text", "pan")]).await;
    assert_eq!(c.wait(&id).await["state"], "done");
    svc.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn realign_through_the_api() {
    let fx = fixture(11);
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), 2).await;
    let c = Client::new(&svc);
    let u = &fx.held_out[1];
    let al = c.submit_ok("align", align_parts(&fx, u)).await;
    assert_eq!(c.wait(&al).await["state"], "done");
    let before_json = c.text(&al, "alignment.json").await;
    let original = doc(&before_json);
    let w = &original.level("words").unwrap().items[2];
    let sr = original.audio.sample_rate as f64;
    let (t0, t1) = ((w.start as f64 + 80.0) / sr, (w.end() as f64 - 80.0) / sr);
    let (a, b) = snapped_span(&original, t0, t1);

    // identity correction
    let (status, v) = c.realign(&al, json!({"t0": t0, "t1": t1, "words": [w.label]})).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    assert_eq!(v["parent"], al.as_str());
    let j = c.wait(&id).await;
    assert_eq!(j["state"], "done", "{j}");
    let same = doc(&c.text(&id, "alignment.json").await);
    for level in ["words", "phones"] {
        assert_eq!(outside(&same, level, a, b), outside(&original, level, a, b));
        let (x, y) = (&same.level(level).unwrap().items, &original.level(level).unwrap().items);
        assert_eq!(x.len(), y.len());
        for (p, q) in x.iter().zip(y) {
            assert_eq!(p.label, q.label);
            assert!(p.start.abs_diff(q.start) <= 160 && p.end().abs_diff(q.end()) <= 160, "{level} {p:?} vs {q:?}");
        }
    }

    // a different word inside the region
    let other = fx.vocab.iter().find(|x| **x != w.label).unwrap();
    let (_, v) = c.realign(&al, json!({"t0": t0, "t1": t1, "words": [other]})).await;
    let id = v["id"].as_str().unwrap().to_string();
    assert_eq!(c.wait(&id).await["state"], "done");
    let changed = doc(&c.text(&id, "alignment.json").await);
    assert_eq!(changed.level("words").unwrap().items[2].label, *other);
    for level in ["words", "phones"] {
        assert_eq!(outside(&changed, level, a, b), outside(&original, level, a, b));
    }
    assert_eq!(c.text(&al, "alignment.json").await, before_json);

    let (status, v) = c.realign(&al, json!({"t0": 0.5, "t1": 1e3, "words": ["sam"]})).await;
    assert_eq!(
        (status, v["error"]["kind"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("RegionOutOfRange"))
    );
    svc.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn jobs_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), 1).await;
    let c = Client::new(&svc);
    let done = c.submit_ok("g2p", vec![text_part("text", "tak brzęczy")]).await;
    assert_eq!(c.wait(&done).await["state"], "done");
    svc.shutdown().await;

    // queue only
    let svc = start(dir.path(), 0).await;
    let c = Client::new(&svc);
    let queued = c.submit_ok("g2p", vec![text_part("text", "pan")]).await;
    let (_, j) = c.job(&queued).await;
    assert_eq!(j["state"], "queued");
    assert_eq!(j["results"], json!([]));
    svc.shutdown().await;

    let svc = start(dir.path(), 1).await;
    let c = Client::new(&svc);
    let (_, j) = c.job(&done).await;
    assert_eq!(j["state"], "done");
    assert_eq!(c.text(&done, "phones.txt").await, "t a g b Z en tS I\n");
    let j = c.wait(&queued).await;
    assert_eq!(j["state"], "done");
    assert_eq!(c.text(&queued, "phones.txt").await, "p a n\n");
    svc.shutdown().await;
}
