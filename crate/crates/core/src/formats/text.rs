//! Line formats: VAD segments, RTTM speaker turns, phoneme text.

use std::fmt::Write as _;

use super::FormatError;
use crate::diarize::SpeakerSegment;
use crate::vad::{SegmentKind, SegmentList};

/// `<start> <end> <speech|nonspeech>` per line, times in seconds.
pub fn write_segments(list: &SegmentList) -> String {
    let mut o = String::new();
    for s in &list.segments {
        let _ = writeln!(o, "{} {} {}", s.start, s.end, s.kind.as_str());
    }
    o
}

pub fn parse_segments(text: &str) -> Result<Vec<(f64, f64, SegmentKind)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |m: &str| FormatError::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let [a, b, k] = f[..] else { return Err(err("expected three fields")) };
        let a: f64 = a.parse().map_err(|_| err("bad start"))?;
        let b: f64 = b.parse().map_err(|_| err("bad end"))?;
        let k = match k {
            "speech" => SegmentKind::Speech,
            "nonspeech" => SegmentKind::Nonspeech,
            _ => return Err(err("kind must be speech or nonspeech")),
        };
        out.push((a, b, k));
    }
    Ok(out)
}

/// Standard ten-field RTTM:
/// `SPEAKER <file> 1 <start> <dur> <NA> <NA> <speaker> <NA> <NA>`.
pub fn write_rttm(file: &str, segments: &[SpeakerSegment]) -> String {
    let file = if file.is_empty() { "audio" } else { file };
    let file: String = file.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    let mut o = String::new();
    for s in segments {
        let _ = writeln!(o, "SPEAKER {file} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>", s.start, s.end - s.start, s.speaker);
    }
    o
}

pub fn parse_rttm(text: &str) -> Result<Vec<(String, SpeakerSegment)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |m: &str| FormatError::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() < 8 || f[0] != "SPEAKER" {
            return Err(err("expected a SPEAKER line with at least 8 fields"));
        }
        let start: f64 = f[3].parse().map_err(|_| err("bad start"))?;
        let dur: f64 = f[4].parse().map_err(|_| err("bad duration"))?;
        out.push((
            f[1].to_string(),
            SpeakerSegment {
                start,
                end: start + dur,
                speaker: f[7].to_string(),
            },
        ));
    }
    Ok(out)
}
