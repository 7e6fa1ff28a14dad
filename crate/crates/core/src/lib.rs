//! Forward self-similar profiles for the damped viscoelastic Navier-Stokes
//! system: caloric data, the Duhamel fixed-point map, a mild-solution
//! evolver and a diagnostic suite.

pub mod error;
pub mod exec;
pub mod fd;
pub mod field;
pub mod grid;
pub mod harmonics;
pub mod interp;
pub mod io;
pub mod norms;
pub mod quadrature;
pub mod remap;
pub mod spectral;
pub mod stokes;
pub mod sphere;
pub mod caloric;
pub mod datum;
pub mod solver;
pub mod evolver;
pub mod diagnostics;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use field::{Profile, ScalarProfile, TensorProfile, VectorProfile};
pub use grid::GridSpec;
pub use norms::{x_gamma_norm, xgamma4, XGammaNorm};
pub use spectral::{spectral_divergence, FourierWorkspace};
pub use sphere::{curl_of_degree0_potential, sample_trace, SphereQuadrature, SphericalTrace};
