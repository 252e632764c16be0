//! Particle simulation and numerical checks for degenerate McKean-Vlasov
//! SDEs of kinetic type.
//!
//! The state splits as `x = (x0, x1)`: `x1` carries `d` noise directions,
//! `x0` is driven only through its drift. Coefficients are averaged against
//! the law of the solution, which is approximated by an empirical particle
//! cloud. Around that core sit the regularization operators used to smooth
//! rough coefficients, Picard iteration over flows of marginals, empirical
//! distances between measures, Girsanov and contraction diagnostics, and
//! explicit epsilon-nets over Holder balls.

pub mod coefficients;
pub mod error;
pub mod holder_net;
pub mod io;
pub mod measure;
pub mod mollify;
pub mod particle;
pub mod rng;
pub mod scenarios;
pub mod verify;

pub use coefficients::{
    check_ellipticity, check_linear_growth, eval_mean_field, CoefficientField, Dims, MeanField,
    SampleSpec, StructuralReport,
};
pub use error::{Error, Result};
pub use holder_net::{build_net, classify_path, coverage_test, holder_seminorm, EpsNet, HolderBallSpec};
pub use measure::{moment, tv_distance, w1_distance, EmpiricalMeasure, HistogramGrid};
pub use mollify::{extend_time, mollify, truncate, MollifierSpec, RegularizedField};
pub use particle::{
    picard_fixed_point, simulate_linearized, simulate_mckean, simulate_two_copy, step_euler,
    FlowOfMarginals, InitialLaw, Interaction, ParticleCloud, PathEnsemble, SimConfig,
};
pub use scenarios::{ScenarioParams, ScenarioRegistry};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
