use super::force::{force_align_frames, AlignOptions, WordPron};
use super::{boundary_frame, AlignError, Alignment};
use crate::am::AcousticModel;
use crate::dsp::FeatureMatrix;
use crate::g2p::G2p;

/// Re-aligns `[t0, t1]`, widened outward to the nearest word boundaries,
/// with `corrected` replacing the words inside. Intervals outside the
/// widened region are copied unchanged.
pub fn realign_region<S: AsRef<str>>(
    alignment: &Alignment,
    region: (f64, f64),
    corrected: &[S],
    f: &FeatureMatrix,
    model: &AcousticModel,
    g2p: &G2p,
    opts: &AlignOptions,
) -> Result<Alignment, AlignError> {
    let (t0, t1) = region;
    let duration = alignment.duration;
    if !(t0.is_finite() && t1.is_finite() && 0.0 <= t0 && t0 < t1 && t1 <= duration) {
        return Err(AlignError::RegionOutOfRange { t0, t1, duration });
    }
    let bounds = alignment.words.iter().flat_map(|w| [w.start, w.end]).chain([0.0, duration]);
    let (mut a, mut b) = (0.0, duration);
    for x in bounds {
        if x <= t0 && x > a {
            a = x;
        }
        if x >= t1 && x < b {
            b = x;
        }
    }
    let prons = WordPron::lookup_all(g2p, corrected)?;
    model.check_features(f)?;
    let (k0, k1) = (
        boundary_frame(a, f.rows(), f.hop, f.win, duration),
        boundary_frame(b, f.rows(), f.hop, f.win, duration),
    );
    let inner = force_align_frames(&f.slice(k0, k1), &prons, model, opts)?.shifted(k0).to_seconds(f, duration);

    let before = |s: f64, e: f64| e <= a && s < a;
    let after = |s: f64, _e: f64| s >= b;
    let mut out = Alignment {
        duration,
        low_confidence: alignment.low_confidence,
        ..Alignment::default()
    };
    out.words.extend(alignment.words.iter().filter(|w| before(w.start, w.end)).cloned());
    out.words.extend(inner.words);
    out.words.extend(alignment.words.iter().filter(|w| after(w.start, w.end)).cloned());
    out.phones.extend(alignment.phones.iter().filter(|p| before(p.start, p.end)).cloned());
    out.phones.extend(inner.phones);
    out.phones.extend(alignment.phones.iter().filter(|p| after(p.start, p.end)).cloned());
    Ok(out)
}
