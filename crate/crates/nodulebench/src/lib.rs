//! Server-side machinery for a chest X-ray nodule detection benchmark:
//! detection scoring (ROC/AUC, FROC, rank metric, DeLong comparison),
//! prediction ensembling (weighted box fusion, non-maximum suppression),
//! anatomically constrained nodule-box placement, CT-template-based nodule
//! synthesis with Poisson blending, and the radiograph preprocessing chain.

pub mod ensemble;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod placement;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod synthesis;

pub use geometry::{
    iou, mask_bounding_box, mm_to_pixels, round_half_up, BinaryMask, BoundingBox, Detection,
    GeometryError, GrayImage, PixelSpacing,
};
