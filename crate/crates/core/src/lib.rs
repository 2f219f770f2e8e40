//! Rank-deficient MIMO interference channels with output feedback: channel
//! synthesis, beamformer construction, two-slot simulation, closed-form DoF
//! formulas and exact checks of the allocation constraint systems.

pub mod beamformer;
pub mod channel;
pub mod dof_formulas;
pub mod error;
pub mod harness;
pub mod numkernel;
pub mod polytope;
pub mod simulator;
mod stream;

pub use beamformer::{BeamformerSet, BlockKind, SymbolAllocation};
pub use channel::{ChannelInstance, NetworkConfig, SymmetricConfig};
pub use dof_formulas::{SymmetricParams, TwoUserParams};
pub use error::{Error, Node, Result};
pub use numkernel::{ComplexMatrix, ComplexVector, Rational, Tolerance};
pub use polytope::Polyhedron;
pub use simulator::{DofReport, TransmissionTrace};
