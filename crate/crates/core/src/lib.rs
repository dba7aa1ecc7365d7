//! Respiratory signal extraction from multi-slice real-time cardiac cine.
//!
//! Each slice's pixel × frame matrix is low-pass filtered and decomposed; the
//! second right singular vector carries respiration. Its arbitrary sign is
//! fixed first relative to the neighbouring slice (eigen-image correlation)
//! and then for the whole stack against a centre-of-mass motion curve.

pub mod error;
pub mod eval;
pub mod gating;
pub mod io;
pub mod linalg;
pub mod manifest;
pub mod pca;
pub mod phantom;
pub mod preprocess;
pub mod signcorrect;
pub mod types;

pub use error::{Error, Result};
pub use eval::{agreement, odd_slice_experiment, roi_reference, AgreementReport, Roi};
pub use gating::{segment_heartbeats, select_beats, Convention, GateOptions, Heartbeat};
pub use pca::{extract_v2, SliceModes};
pub use phantom::{generate_phantom, GroundTruth, PhantomConfig};
pub use preprocess::{lowpass_temporal, FilterSpec, FirFilter};
pub use signcorrect::{correct_signs, correct_signs_with, CorrectionOptions};
pub use types::{
    EigenBasis, RespiratorySignal, SiAxis, SiOrientation, SignReport, SignalStage, SliceSeries, SliceStack,
};
