//! Static output-feedback synthesis for uncertain rational systems with
//! input saturation, written in differential-algebraic form.

pub mod affine;
pub mod error;
pub mod files;
pub mod library;
pub mod lmi;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod synthesis;
pub mod verifier;

pub use affine::{product_vertices, AffineMatrix, BoxPolytope, Polytope};
pub use error::{Error, Result};
pub use model::{deadzone, saturate, DarModel, DarModelParts, Dims, GainMatrix, LoopPoint};
pub use oracle::PiOracle;
