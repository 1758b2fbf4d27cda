//! Dense, overfit-aware stochastic weight averaging (SWAD) with SWA/EMA/SAM/ERM
//! baselines on a small from-scratch MLP trainer, plus flat-minima analysis
//! tools (local flatness probes, loss planes, robust risk) and a
//! leave-one-domain-out benchmark harness on synthetic multi-domain data.

pub mod averaging;
pub mod bench;
pub mod error;
pub mod flatness;
pub mod nn;
pub mod optim;
pub mod param;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use param::{ParamVector, RunningMean};
pub use rng::SeededRng;
