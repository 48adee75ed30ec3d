//! Binary feature dump: `FMAT`, u32 T, u32 D (little-endian), then T·D
//! little-endian f32 values in row-major order. Frame timing and the
//! fingerprint are not stored; the reader assumes the default front-end.

use std::io::{Read, Write};

use super::{DspError, FeatureMatrix, MfccConfig};

pub const FEATURE_MAGIC: &[u8; 4] = b"FMAT";

pub fn write_features<W: Write>(mut w: W, m: &FeatureMatrix) -> Result<(), DspError> {
    let io = |e: std::io::Error| DspError::Io(e.to_string());
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    w.write_all(&(m.rows() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.cols() as u32).to_le_bytes()).map_err(io)?;
    for &v in m.data() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureMatrix, DspError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| DspError::Io(e.to_string()))?;
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(DspError::BadFeatureFile("missing FMAT header".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (t, d) = (u32_at(4), u32_at(8));
    let body = &bytes[12..];
    if body.len() != t * d * 4 {
        return Err(DspError::BadFeatureFile(format!("expected {} values, found {} bytes", t * d, body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let cfg = MfccConfig::default();
    let sr = cfg.sample_rate as f64;
    Ok(FeatureMatrix::new(data, t, d, cfg.hop as f64 / sr, cfg.window as f64 / sr, "raw"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.5, -4.0], vec![0.0, 0.25]], 0.01, 0.025, "x");
        let mut buf = Vec::new();
        write_features(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"FMAT");
        assert_eq!(&buf[4..12], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(buf.len(), 12 + 6 * 4);
        assert_eq!(&buf[12..16], &1.0f32.to_le_bytes());
        let back = read_features(&buf[..]).unwrap();
        assert_eq!(back.data(), m.data());
        assert!(read_features(&buf[..20]).is_err());
        assert!(read_features(&b"NOPE00000000"[..]).is_err());
    }
}
