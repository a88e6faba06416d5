//! Two-covariance PLDA backend: EM training, pairwise log-likelihood-ratio
//! scoring, and p-score / distance conversion for AHC.

mod io;
mod model;
mod scoring;

pub use io::{load_plda, parse_plda, plda_to_string, save_plda};
pub use model::{train_plda, train_plda_from, PldaModel, PldaTraining, WITHIN_FLOOR};
pub use scoring::{score_matrix, score_pair, PldaScorer, ScoreKind, ScoreMatrix};

#[cfg(test)]
mod tests;
