//! Interchange formats: TextGrid, annotation JSON, segment and RTTM text.

pub mod annotation;
pub mod text;
pub mod textgrid;

pub use annotation::{parse_annotation_json, write_annotation_json, AnnotationDoc, AudioMeta, Item, Level, LevelKind, ANNOTATION_VERSION};
pub use text::{parse_rttm, parse_segments, write_rttm, write_segments};
pub use textgrid::{parse_textgrid, write_textgrid, Interval, TextGridDoc, Tier};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid tiers: {0}")]
    InvalidTiers(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}
