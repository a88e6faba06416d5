//! Discrete tied VAE: an encoder with a Gaussian latent head and a softmax
//! class head, a Gaussian decoder, the reconstruction and
//! mutual-information losses, training, and argmax grouping.

mod config;
mod io;
mod loss;
mod net;
mod train;

pub use config::{Activation, DtvaeConfig};
pub use io::{dtvae_to_string, load_dtvae, parse_dtvae, save_dtvae};
pub use loss::{
    discriminator, evaluate_loss, loss_gradients, loss_mi, loss_reconstruction, total_loss, LossBreakdown, Noise,
    Objective,
};
pub use net::{
    argmax, sample_y, sample_z, Dims, DtvaeParams, EncoderOutput, LatentSample, LOGVAR_MAX, LOGVAR_MIN, PARAM_NAMES,
};
pub use train::{assign_groups, classify, standardization, train, DtvaeTraining};
