//! Weakly-supervised cross-view metric learning at desk scale.
//!
//! The pipeline: a synthetic generator produces identity-labelled
//! observations whose dominant nuisance factor is a continuous viewpoint
//! angle; a small feedforward encoder with a shared trunk and two heads is
//! trained in two stages (a discriminative main head on cross-entropy plus
//! batch-hard triplet loss, then a cross-view head regressed onto the
//! hardest positive's frozen feature); at inference the two features are
//! fused by normalized averaging and scored with CMC, mAP and a
//! scatter-matrix class-separability criterion.
//!
//! Everything is deterministic: a single master seed derives every stream,
//! file formats are fixed-width little-endian, and reruns reproduce
//! datasets, checkpoints and reports byte for byte.

pub mod cli;
pub mod data;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod trainer;
