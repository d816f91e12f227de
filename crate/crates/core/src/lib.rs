//! Random-design ordinary least squares and ridge regression.
//!
//! The crate covers four layers:
//!
//! * exact, samplable population models whose second moments, targets and
//!   leverage constants are available in closed form ([`population`]);
//! * the estimators themselves and their loss functionals ([`estimators`]);
//! * evaluators for the finite-sample risk bounds and the tail inequalities
//!   they rest on ([`risk`], [`tail`]), plus per-sample checks of the exact
//!   decompositions behind them ([`diagnostics`]);
//! * a rotate-then-subsample fast least squares solver ([`sketch`]).
//!
//! Every random quantity is drawn from an explicit [`rng::Stream`], so any
//! trial can be replayed from `(master seed, label, index)`.

pub mod coverage;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod population;
pub mod risk;
pub mod rng;
pub mod sketch;
pub mod tail;

pub use error::{Error, Result};
pub use estimators::RegressionFit;
pub use linalg::{Spectrum, SymMatrix, TOL_PSD};
pub use population::{
    BiasSpec, DesignSpec, ModelConstants, NoiseSpec, PopulationModel, RawBias, Sample,
};
pub use risk::{BoundReport, Condition, OlsBoundInputs, RidgeBoundInputs};
pub use rng::{Stream, StreamId};

pub use nalgebra::{DMatrix, DVector};
