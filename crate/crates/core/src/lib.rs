//! Search for adversarial road markings against a closed-loop, vision-based
//! driving controller in a 2-D driving simulator.

pub mod bayesopt;
pub mod controller;
pub mod geom;
pub mod harness;
pub mod objective;
pub mod pattern;
pub mod simulate;
pub mod world;
