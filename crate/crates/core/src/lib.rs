//! Neural-field simulator of covert and overt spatial attention.
//!
//! * [`field`]: one map, its difference-of-Gaussians lateral kernel and the
//!   forward-Euler integration of `τ·du/dt = −u + Σ w·u + I`.
//! * [`network`]: maps and scalar units joined by afferent, gated and remap
//!   projections, stepped synchronously.
//! * [`scenario`]: stimulus scenes rendered into four feature channels.
//! * [`model`]: the attention architecture and its scan/saccade loop.
//! * [`io`]: run configuration, trial logs, traces and map snapshots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod io;
pub mod model;
pub mod network;
pub mod scenario;

pub use error::{Error, Result};
pub use field::{
    decode_peak, euler_step, find_bubbles, lateral_term, make_dog_kernel, Bubble, DogParams,
    FieldMap, Grid, LateralKernel, StepParams,
};
pub use io::{load_config, Outcome, RunConfig};
pub use model::{
    build_model, move_switch_drive, Attend, AttentionModel, Decision, EventKind, Handles, Limits,
    ModelConfig, Observer, ScanEvent, TargetSpec, Taus, TrialLog, TIE_RADIUS,
};
pub use network::{
    remap_correlate, step_network, Input, MapId, Network, Node, Projection, Reduction, UnitId,
};
pub use scenario::{
    apply_saccade, distance, render_channels, Color, Extent, FeatureChannel, Gaze, Orientation,
    Stimulus, World,
};
