pub mod align;
pub mod am;
pub mod cli;
pub mod corpus;
pub mod diarize;
pub mod dsp;
pub mod formats;
pub mod g2p;
pub mod kws;
pub mod pipeline;
pub mod service;
pub mod vad;
