//! Two-dancer, music-conditioned motion toolkit.
//!
//! `duetgen` models a *leader/follower* dancing pair. It provides every stage
//! of a small but complete pipeline, built desk-scale so the whole thing runs
//! (and is tested) on a laptop CPU:
//!
//! * [`body`] — a fixed 55-joint skeleton with 655 skinned surface points,
//!   forward kinematics, and a capsule-union signed distance field used as a
//!   cheap differentiable body volume.
//! * [`rep`] — the per-frame motion encoding: root trajectory, heading,
//!   heading-canonical joint/vertex offsets, their velocities, and binary
//!   foot-floor plus person-person contact labels (4981 channels per frame).
//! * [`data`] — motion/music/representation/checkpoint file formats, the
//!   synthetic duet scenario generator, and deterministic dataset splits.
//! * [`diffusion`] — a DDPM noise schedule with an x0-predicting sampler,
//!   the full training loss stack (reconstruction, velocity, acceleration,
//!   foot-skate, distance-matrix, relative-orientation, contact), and a
//!   seeded training loop.
//! * [`denoiser`] — a from-scratch two-stream transformer denoiser (paired
//!   self/cross-attention towers with adaptive-norm conditioning) including
//!   hand-written reverse-mode gradients; no autodiff framework involved.
//! * [`guidance`] — inference-time interaction refinement: gradient steps on
//!   a contact-closing objective and a capsule-penetration objective applied
//!   to the denoised estimate inside the sampling loop.
//! * [`eval`] — metrics: Fréchet distances over kinetic/geometric/
//!   cross-distance features, diversity, contact frequency, penetration
//!   rate, contact recall ratios, and beat-alignment scores, plus a
//!   deterministic metronome music-feature generator.
//!
//! # Where to start
//!
//! The `examples/` directory is the front door; each example exercises one
//! capability end to end and prints what it did:
//!
//! ```text
//! cargo run --release --example synth_scenarios   # generate the 5 synthetic duet scenes
//! cargo run --release --example encode_roundtrip  # motion -> representation -> motion
//! cargo run --release --example train_overfit     # overfit the denoiser on one duet
//! cargo run --release --example sample_guided     # sampling with/without guidance
//! cargo run --release --example duet_mode         # both dancers denoised jointly
//! cargo run --release --example metrics_report    # full metrics on synthetic data
//! cargo run --release --example export_body_model # dump the body model + rest pose
//! ```
//!
//! The same functionality is scriptable through the thin `duetgen` binary
//! (`cargo run --release --bin duetgen -- --help`), which exposes `synth`,
//! `encode`, `decode`, `train`, `sample`, `eval`, `gradcheck`, and
//! `export-csv` subcommands over the library.
//!
//! # Conventions
//!
//! * Y is up, the floor is the plane `y = 0`, and a dancer at rest faces +Z.
//! * Distances are meters, angles radians, time is measured in frames unless
//!   a name says otherwise (`fps` converts).
//! * Every stochastic entry point takes an explicit seed and is bitwise
//!   reproducible for a given seed and thread-independent workload.

pub mod body;
pub mod cli;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod guidance;
pub mod rep;

pub use error::{Error, ErrorKind, Result};
