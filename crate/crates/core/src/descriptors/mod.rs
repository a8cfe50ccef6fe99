//! Dense feature extractors.
//!
//! Every extractor is a pure function of the image and its parameters and
//! returns a [`Template`](crate::model::Template).

pub(crate) mod filters;
mod grid;
mod ntnu;
mod safe;
mod texture;

pub use grid::{default_wavelengths, BlockRect, GaborGrid};
pub use ntnu::{extract_ntnu, PyramidParams, NTNU_ID};
pub use safe::{extract_safe, SafeParams, SAFE_ID};
pub use texture::{extract_gabor, extract_hog, extract_lbp, GABOR_ID, HOG_ID, LBP_ID};
pub(crate) use texture::to_pdf;
