//! Cascaded shape regression and 7-point similarity alignment.

mod align;
mod cascade;
mod features;
mod image;
mod shape;

pub use align::{align_face, similarity_transform, AlignmentIndices, SimilarityTransform};
pub use cascade::{
    cascade_predict, cascade_train, decode_model, encode_model, load_model, write_model, CascadeConfig, StageRegressor,
    TrainedCascade, DEFAULT_PATCH_SCALES,
};
pub use features::{ConstantFeature, FeatureFunction, PixelDifference};
pub use image::GrayImage;
pub use shape::{load_shape, normalized_error, parse_shape, shape_csv, write_shape, ErrorNorm, Point, Shape};
