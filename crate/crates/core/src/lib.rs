//! Learning-free uplifting of 2D feature maps and masks onto Gaussian
//! splatting scenes, with kNN graph diffusion, segmentation and
//! open-vocabulary localization on top.

pub mod error;
pub mod features;
pub mod graph;
pub mod openvocab;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod segmentation;
pub mod synthetic;
pub mod uplift;

pub use error::{Error, Result};
