//! Point-vortex dynamics on a sphere with a conformal metric `e^{2 rho} g_0`.

pub mod bands;
pub mod contact;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod exec;
pub mod hamiltonian;
pub mod invariants;
pub mod orbits;
pub mod spectral;
pub mod sphere;

pub use error::{Result, VortexError};
pub use exec::Execution;
pub use hamiltonian::{EnergyReport, MetricContext};
pub use spectral::{ConformalFactor, HarmonicField, QuadratureGrid, SpectrumReport};
pub use sphere::{Configuration, Rotation, SpherePoint, TangentBasis, VorticityVector};
