//! Corpus text format.
//!
//! ```text
//! #corpus v1 dim=<D>
//! utt_id,speaker_id,v1,...,vD
//! ```
//!
//! `?` as speaker id marks an unlabeled utterance. Values are written with 17
//! significant digits so a save/load cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::corpus::{valid_id, Corpus, Utterance};
use crate::error::{Error, Result};

pub const UNLABELED: &str = "?";

/// Formats a float with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = format!("#corpus v1 dim={}\n", corpus.dim());
    for u in corpus.utterances() {
        out.push_str(&u.id);
        out.push(',');
        out.push_str(u.speaker.as_deref().unwrap_or(UNLABELED));
        for v in &u.embedding {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, corpus_to_string(corpus)).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

pub(crate) fn parse_header(line: &str, magic: &str, key: &str) -> Option<usize> {
    let rest = line.strip_prefix(magic)?.strip_prefix(' ')?;
    rest.trim_end().strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

pub fn parse_corpus(text: &str, path: &Path) -> Result<Corpus> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let dim = parse_header(header, "#corpus v1", "dim")
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(path, 1, format!("malformed header `{header}`")))?;

    let mut utterances = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let id = fields[0];
        if fields.len() != dim + 2 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "row `{id}` has {} values, header says dim={dim}",
                    fields.len().saturating_sub(2)
                ),
            ));
        }
        if !valid_id(id) {
            return Err(Error::parse(path, lineno, format!("invalid utterance id `{id}`")));
        }
        let speaker = match fields[1] {
            UNLABELED => None,
            s if valid_id(s) => Some(s.to_string()),
            s => return Err(Error::parse(path, lineno, format!("invalid speaker id `{s}`"))),
        };
        let embedding = fields[2..]
            .iter()
            .enumerate()
            .map(|(k, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::parse(path, lineno, format!("field {} of `{id}` is not a number: `{f}`", k + 3))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        utterances.push(Utterance {
            id: id.to_string(),
            speaker,
            embedding,
        });
    }
    Corpus::new(dim, utterances).map_err(|e| Error::parse(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_corpus, GenConfig};
    use proptest::prelude::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = generate_corpus(&GenConfig::balanced(3, 7, 5, 4)).unwrap();
        save_corpus(&c, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
    }

    #[test]
    fn short_row_is_reported_with_line_and_id() {
        let mut text = String::from("#corpus v1 dim=20\n");
        text.push_str(&format!("a1,s1{}\n", ",0.5".repeat(20)));
        text.push_str(&format!("a2,s1{}\n", ",0.5".repeat(19)));
        let err = parse_corpus(&text, Path::new("x.csv")).unwrap_err();
        match &err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(*line, 3);
                assert!(msg.contains("a2"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unlabeled_rows_load_without_speaker() {
        let text = "#corpus v1 dim=2\nu1,?,1.0,2.0\nu2,spk1,3.0,4.0\n";
        let c = parse_corpus(text, Path::new("x")).unwrap();
        assert_eq!(c.utterances()[0].speaker, None);
        assert_eq!(c.utterances()[1].speaker.as_deref(), Some("spk1"));
        assert!(c.speaker_labels().is_none());
    }

    #[test]
    fn malformed_inputs() {
        let p = Path::new("x");
        assert!(matches!(parse_corpus("#corpus v2 dim=2\n", p), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_corpus("", p), Err(Error::Parse { line: 1, .. })));
        let bad_num = "#corpus v1 dim=2\nu1,s,1.0,abc\n";
        assert!(matches!(parse_corpus(bad_num, p), Err(Error::Parse { line: 2, .. })));
        let dup = "#corpus v1 dim=1\nu1,s,1.0\nu1,s,2.0\n";
        assert!(parse_corpus(dup, p).is_err());
        let bad_id = "#corpus v1 dim=1\nu 1,s,1.0\n";
        assert!(parse_corpus(bad_id, p).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(values in prop::collection::vec(-1e300f64..1e300, 1..40), labeled in any::<bool>()) {
            let utterances = values
                .chunks(2)
                .filter(|c| c.len() == 2)
                .enumerate()
                .map(|(i, c)| Utterance {
                    id: format!("u{i}"),
                    speaker: labeled.then(|| format!("s{}", i % 3)),
                    embedding: c.to_vec(),
                })
                .collect();
            let c = Corpus::new(2, utterances).unwrap();
            let back = parse_corpus(&corpus_to_string(&c), Path::new("mem")).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
