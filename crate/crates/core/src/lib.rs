//! Max-min SINR relay beamforming for two-way (MABC) amplify-and-forward
//! cognitive-radio relay networks operating in the presence of interferers.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: network parameters, channel realisations, CSI uncertainty and
//!   the derived quadratic-form data every constraint is built from.
//! - [`metrics`]: analytic SINR / relay-power evaluation and a symbol-level
//!   Monte Carlo simulator used to cross-check them.
//! - [`feasibility`]: per-constraint feasibility tests and the resulting upper
//!   bound on the achievable max-min level.
//! - [`robust`]: worst-case closed forms over norm-bounded interferer CSI.
//! - [`conic`]: real-lifted SOC/PSD feasibility problems and the solver back end.
//! - [`optimizer`]: bisection over the max-min level with post-verification.
//! - [`experiment`]: seeded Monte Carlo sweeps and CSV/JSON output.

pub mod conic;
pub mod error;
pub mod experiment;
pub mod feasibility;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod robust;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use metrics::{BeamformingSolution, User};
pub use model::{ChannelSet, DerivedQuantities, NetworkConfig, UncertaintyModel};
pub use num_complex::Complex64;
