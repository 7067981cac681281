//! hapgrip: simulation and analysis toolkit for a hand-held haptic guidance
//! gripper with two five-bar pantograph finger modules.
//!
//! The crate covers four areas:
//!
//! * [`kinematics`] — planar five-bar forward/inverse kinematics, Jacobians,
//!   and isotropic-force maps over the workspace.
//! * [`actuation`] — discrete-time simulation of the current-controlled
//!   motor/gearbox/encoder plant running the PD tracking loop.
//! * [`cues`] — the 4-DOF guidance cue set encoded as synchronized left/right
//!   end-effector waveforms.
//! * [`synth`] / [`analysis`] — a deterministic synthetic-study generator and
//!   the motion-trial statistics pipeline (delay detection, peak
//!   displacement, clustering, mixtures, OLS, ANOVA, confusion matrices).
//!
//! All simulation and analysis entry points are deterministic: identical
//! configuration, seeds, and inputs produce byte-identical outputs. Heavy
//! inner loops (force maps, per-subject generation, per-trial feature
//! extraction) run on rayon when the default `parallel` feature is enabled
//! and fall back to sequential iteration without it; results are identical
//! either way.

pub mod actuation;
pub mod analysis;
pub mod config;
pub mod cues;
pub mod kinematics;
pub mod synth;
pub mod trial;

pub use config::DeviceConfig;
pub use kinematics::{JointAngles, Pantograph, PlanarPoint};
