use std::io::{Read, Seek};
use std::path::Path;

use super::{AudioBuffer, DspError, SAMPLE_RATE};

fn read<R: Read>(reader: hound::WavReader<R>) -> Result<AudioBuffer, DspError> {
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int || !(1..=2).contains(&spec.channels) {
        return Err(DspError::UnsupportedFormat {
            sample_rate: spec.sample_rate,
            bits_per_sample: spec.bits_per_sample,
            channels: spec.channels,
            float: spec.sample_format == hound::SampleFormat::Float,
        });
    }
    let channels = spec.channels as usize;
    let raw: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(|e| DspError::CorruptFile(e.to_string()))?;
    if raw.len() % channels != 0 {
        return Err(DspError::CorruptFile("truncated stereo frame".into()));
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|c| {
            let sum: f32 = c.iter().map(|&s| s as f32 / 32768.0).sum();
            sum / channels as f32
        })
        .collect();
    AudioBuffer::new(samples, SAMPLE_RATE)
}

fn corrupt(e: hound::Error) -> DspError {
    DspError::CorruptFile(e.to_string())
}

fn write_err(e: hound::Error) -> DspError {
    DspError::Io(e.to_string())
}

/// Reads a 16 kHz, 16-bit PCM RIFF/WAVE file. Stereo is downmixed by
/// averaging; samples are scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, DspError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DspError::Io(format!("{}: {e}", path.display())))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| DspError::CorruptFile(format!("{}: {e}", path.display())))?;
    read(reader)
}

pub fn load_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    read(hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(corrupt)?)
}

/// Header-only probe: number of samples per channel and the sample rate.
pub fn wav_info(path: impl AsRef<Path>) -> Result<(u32, u32), DspError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| DspError::Io(e.to_string()))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(corrupt)?;
    Ok((reader.duration(), reader.spec().sample_rate))
}

fn write<W: std::io::Write + Seek>(w: W, audio: &AudioBuffer) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::new(w, spec).map_err(write_err)?;
    for &s in &audio.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(write_err)?;
    }
    writer.finalize().map_err(write_err)
}

/// Writes mono 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), DspError> {
    let file = std::fs::File::create(path.as_ref()).map_err(|e| DspError::Io(e.to_string()))?;
    write(std::io::BufWriter::new(file), audio)
}

pub fn wav_bytes(audio: &AudioBuffer) -> Result<Vec<u8>, DspError> {
    let mut cur = std::io::Cursor::new(Vec::new());
    write(&mut cur, audio)?;
    Ok(cur.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_with(spec: hound::WavSpec, samples: &[i16]) -> Vec<u8> {
        let mut cur = std::io::Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cur, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        cur.into_inner()
    }

    fn spec(rate: u32, channels: u16) -> hound::WavSpec {
        hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        }
    }

    #[test]
    fn one_second_of_silence() {
        let a = load_wav_bytes(&wav_with(spec(16000, 1), &vec![0; 16000])).unwrap();
        assert_eq!(a.samples.len(), 16000);
        assert!(a.samples.iter().all(|&s| s == 0.0));
        assert_eq!(a.duration(), 1.0);
    }

    #[test]
    fn scaling_convention() {
        let a = load_wav_bytes(&wav_with(spec(16000, 1), &[32767, -32768])).unwrap();
        assert_eq!(a.samples[0], 32767.0 / 32768.0);
        assert_eq!(a.samples[1], -1.0);
    }

    #[test]
    fn stereo_is_averaged() {
        let a = load_wav_bytes(&wav_with(spec(16000, 2), &[16384, 0, -16384, -16384])).unwrap();
        assert_eq!(a.samples, vec![0.25, -0.5]);
    }

    #[test]
    fn wrong_rate_is_unsupported() {
        match load_wav_bytes(&wav_with(spec(44100, 1), &[0; 10])) {
            Err(DspError::UnsupportedFormat { sample_rate, .. }) => assert_eq!(sample_rate, 44100),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(load_wav_bytes(b"RIFFxxxxWAVEjunk"), Err(DspError::CorruptFile(_))));
        assert!(matches!(load_wav_bytes(b"hello"), Err(DspError::CorruptFile(_))));
    }

    #[test]
    fn write_then_read() {
        let a = AudioBuffer::new(vec![0.5, -0.25, 0.0], 16000).unwrap();
        let b = load_wav_bytes(&wav_bytes(&a).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
