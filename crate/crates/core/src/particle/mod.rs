//! Euler-Maruyama particle systems.
//!
//! Four drivers share one stepping kernel:
//!
//! * [`simulate_mckean`]: each particle interacts with the cloud itself;
//! * [`simulate_linearized`]: the measure argument is read from a frozen flow;
//! * [`simulate_two_copy`]: two clouds with independent drivers, each
//!   interacting with the other;
//! * [`picard_fixed_point`]: repeated linearized solves, each frozen against
//!   the previous output.
//!
//! Noise for particle `i` at step `k` comes from its own counter-based stream,
//! so results do not depend on the number of worker threads.

mod cloud;
mod engine;
mod init;
mod picard;

pub use cloud::{FlowOfMarginals, ParticleCloud, PathEnsemble};
pub use engine::{
    initial_cloud, simulate_linearized, simulate_mckean, simulate_two_copy, step_euler, Interaction, SimConfig,
    TwoCopyOutput,
};
pub use init::InitialLaw;
pub use picard::{picard_fixed_point, PicardOptions, PicardOutput};
