use std::collections::{HashMap, HashSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: Option<String>,
    pub embedding: Vec<f64>,
}

/// Ordered collection of utterance embeddings of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    utterances: Vec<Utterance>,
}

pub(crate) fn valid_id(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl Corpus {
    pub fn new(dim: usize, utterances: Vec<Utterance>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("corpus dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(utterances.len());
        for u in &utterances {
            if !valid_id(&u.id) {
                return Err(Error::Invalid(format!("invalid utterance id `{}`", u.id)));
            }
            if let Some(s) = &u.speaker {
                if !valid_id(s) {
                    return Err(Error::Invalid(format!("invalid speaker id `{s}`")));
                }
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate utterance id `{}`", u.id)));
            }
            if u.embedding.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: u.embedding.len(),
                });
            }
            if u.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite value in `{}`", u.id)));
            }
        }
        Ok(Self { dim, utterances })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn embeddings(&self) -> Vec<&[f64]> {
        self.utterances.iter().map(|u| u.embedding.as_slice()).collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.utterances.iter().all(|u| u.speaker.is_some())
    }

    /// Dense speaker indices in order of first appearance, or `None` when
    /// any utterance is unlabeled.
    pub fn speaker_labels(&self) -> Option<Vec<usize>> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        self.utterances
            .iter()
            .map(|u| {
                let s = u.speaker.as_deref()?;
                let next = index.len();
                Some(*index.entry(s).or_insert(next))
            })
            .collect()
    }

    pub fn speaker_count(&self) -> usize {
        self.utterances
            .iter()
            .filter_map(|u| u.speaker.as_deref())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Copy with speaker labels removed.
    pub fn unlabeled(&self) -> Corpus {
        Corpus {
            dim: self.dim,
            utterances: self
                .utterances
                .iter()
                .map(|u| Utterance {
                    speaker: None,
                    ..u.clone()
                })
                .collect(),
        }
    }

    /// Stable content hash used to check that reports describe the same corpus.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.dim.hash(&mut h);
        for u in &self.utterances {
            u.id.hash(&mut h);
            for v in &u.embedding {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}
