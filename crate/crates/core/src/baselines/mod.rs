//! Reference models the convolutional classifier is compared against:
//! linear classifiers on flattened features and per-class HMMs.

pub mod hmm;
pub mod linear;

pub use hmm::{
    hmm_baum_welch, hmm_classify, hmm_init, seed_emissions, sequence_frames, train_hmm,
    GmmState, HmmModel,
};
pub use linear::{train_linear_svm, train_softmax, FeatureKind, LinearModel, LinearWeights};
