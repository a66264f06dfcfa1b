//! Simulation, adversarial testing and trace checking for a two-step BFT
//! consensus protocol with `n = 5f + 1` replicas.

pub mod adversary;
pub mod explore;
pub mod protocol;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod verifier;
