pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod integrator;
pub mod paracalc;
pub mod sem;
pub mod spectral;

pub use dynamics::{FluidParams, MuskatModel};
pub use elliptic::{DnOperator, DnPair, EllipticSolveConfig};
pub use error::{MuskatError, Result};
pub use geometry::{Bottom, DomainSpec, Interface, Side, Top};
pub use integrator::{integrate, EvolutionModel, SimConfig, SimState, TimeSeries};
pub use spectral::{PeriodicGrid, SpectralField};
