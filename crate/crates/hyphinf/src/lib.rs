//! Suboptimal H-infinity synthesis for boundary-controlled, boundary-observed
//! transport PDEs.
//!
//! The plant class is a one-dimensional transport equation on [0, 1] with a
//! scalar positive speed profile, driven and measured only through boundary
//! traces. Such a plant is equivalent to a finite-dimensional discrete-time
//! system whose step is the characteristic travel time; the crate builds that
//! discrete system, solves the associated indefinite Riccati / KSPY systems,
//! assembles the optimal compensator through a linear fractional
//! transformation, corrects for direct feedthrough, and verifies/simulates
//! the closed loop.
//!
//! Module map:
//! - [`numkernel`]: dense eigen/SVD/Cholesky kernels and the stable deflating
//!   subspace of a pencil (QZ with reordering).
//! - [`pde`]: the hyperbolic plant, well-posedness, travel time, and the
//!   discrete-time representation.
//! - [`kspy`]: Kalman-Szego-Popov-Yakubovich systems (stabilizing Riccati
//!   solution plus block-triangular J-factorization).
//! - [`synth`]: the full synthesis pipeline (scaling, the three Popov
//!   triplets, solvability conditions, the compensator generator, LFT
//!   assembly, feedthrough correction).
//! - [`clp`]: closed-loop assembly, assumption checks, transfer evaluation
//!   and H-infinity norms in the discrete and continuous frames.
//! - [`sim`]: exact simulation through the discrete representation plus an
//!   independent method-of-characteristics oracle.
//! - [`string_example`]: the vibrating-string benchmark with its tabulated
//!   reference values.
//! - [`cli`]: the command-line pipeline (check / synthesize / freqresp /
//!   simulate / string-example).

pub mod cli;
pub mod clp;
pub mod error;
pub mod kspy;
pub mod numkernel;
pub mod pde;
pub mod sim;
pub mod string_example;
pub mod synth;

pub use error::{Error, Result};
