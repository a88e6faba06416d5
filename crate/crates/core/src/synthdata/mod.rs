//! Synthetic i-vector-like corpora, their text format, and a moment-based
//! normality diagnostic.

mod corpus;
mod generate;
mod io;
mod normality;

pub use corpus::{Corpus, Utterance};
pub use generate::{generate_corpus, GenConfig, NoiseFamily, UttsPerSpeaker};
pub use io::{corpus_to_string, load_corpus, parse_corpus, save_corpus, UNLABELED};
pub use normality::{
    jarque_bera, jb_critical_1pct, normality_diagnostic, DimNormality, NormalityReport, MIN_SAMPLES,
};

pub(crate) use io::{fmt_f64, parse_header};
