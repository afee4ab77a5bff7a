//! Toolkit for a structured indoor-scene language.
//!
//! * [`lang`] command data model, text format, validation and transforms
//! * [`geom`] interpretation into corner quads, boxes and meshes; OBJ export
//! * [`tokens`] bijective token encoding and the decoding grammar mask
//! * [`eval`] layout, detection and geometry metrics
//! * [`gen`] procedural scenes and simulated point clouds
//! * [`model`] point-cloud encoder, transformer decoder, training and decoding

pub mod eval;
pub mod gen;
pub mod geom;
pub mod lang;
pub mod model;
pub mod tokens;

pub use lang::{Command, CommandKind, SceneProgram};
