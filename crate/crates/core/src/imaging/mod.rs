//! Image loading, geometric normalization and CLAHE.

mod annotations;
mod clahe;
mod geometry;
mod io;

pub use annotations::read_annotations;
pub use clahe::{clahe, DEFAULT_CLIP_LIMIT, DEFAULT_TILES};
pub use geometry::{
    normalization_transform, normalize_geometry, resize, Annotation, NormalizationSpec, NormalizationStyle,
    SimilarityTransform,
};
pub use io::{decode_pgm, encode_pgm, load_gray, save_pgm};
