//! Bayesian joint modeling of marked spatial point processes.
//!
//! Point locations follow a non-homogeneous Poisson process with log-linear
//! intensity `λ(s) = λ0·exp(X(s)ᵀβ)`; binary marks follow a logistic model
//! whose predictor includes the intensity itself, `ξ·λ(s) + Z(s)ᵀα`. The
//! crate provides the likelihood on a grid, an adaptive Metropolis-within-
//! Gibbs sampler, DIC/LPML model comparison split into intensity and mark
//! parts, simulation studies, NMF shot-type bases, and Ward clustering.

pub mod basis;
pub mod cluster;
pub mod court;
pub mod error;
pub mod grid;
pub mod intensity;
pub mod io;
pub mod joint;
pub mod mark;
pub mod mcmc;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod simstudy;

pub use error::{Error, Result};
pub use grid::{Domain, DomainGrid, Field, Point};
pub use intensity::{CovariateStack, IntensityParams};
pub use joint::{JointModel, ModelParams, PriorSpec};
pub use mark::{IntensityLink, MarkCovariates, MarkParams, MarkedPattern};
pub use mcmc::{ChainConfig, IntervalKind, PosteriorDraws, Summary};
pub use par::Exec;
