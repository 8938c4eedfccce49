//! Triplet similarity/distance embeddings, scoring primitives, and pyramid
//! feature standardisation.

mod objective;
mod project;
mod pyramid;
mod select;
mod train;
mod vector;

pub use objective::{tde_loss, triplet_loss, tse_sgd_step, Objective};
pub use project::{project, project_scored, project_set};
pub use pyramid::{normalize_pyramid, PyramidLevel, STDDEV_FLOOR};
pub use select::{pairwise_tar_at_far, select_output_dim, DEFAULT_DIM_CANDIDATES, SELECTION_FAR};
pub use train::{
    initial_matrix, mean_loss, sample_hard_triplet, subject_folds, train, train_tde, train_tse, write_training_log,
    TrainConfig, TrainState, TripletSampler,
};
pub use vector::{cosine_similarity, l2_normalize, UNIT_NORM_TOLERANCE};
