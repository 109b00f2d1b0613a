//! Common information of N finite-alphabet random variables.
//!
//! * [`dist`]: joint probability tensors, entropies and divergences.
//! * [`measures`]: Gács–Körner common randomness and the measure ordering.
//! * [`wyner`]: Wyner common information by two cross-checked optimizers.
//! * [`csbs`]: circularly symmetric binary sources and their closed forms.
//! * [`graywyner`]: corner points and certificates for the Gray-Wyner region.
//! * [`sim`]: synthesis and coding simulations at short block lengths.

pub mod csbs;
pub mod dist;
pub mod graywyner;
pub mod measures;
pub mod seed;
pub mod sim;
pub mod wyner;

pub use dist::{AlphabetSpec, Coupling, DistError, JointPmf};
