//! Concrete mean-field functionals: linear potentials (vanilla Langevin),
//! two-layer network empirical risk, MMD density fitting, and KSD
//! minimization.

pub mod dataset;
pub mod ksd;
pub mod linear;
pub mod mmd;
pub mod two_layer;

pub use dataset::{parse_dataset, Dataset};
pub use ksd::{KsdModel, Score, ScoreFn};
pub use linear::{LinearModel, LinearPotential};
pub use mmd::{MmdModel, MmdParam};
pub use two_layer::{Loss, Neuron, TwoLayerNetModel};
