//! Computational tools around Vinogradov's mean value theorem and
//! decoupling for the moment curve.
//!
//! * [`counting`]: exact solution counts `J_{s,n}(N)` by three routes
//! * [`expsum`]: Weyl sums, the extension operator and weighted norms
//! * [`arcs`]: major/minor arc classification and sampling
//! * [`weights`] and [`appendix`]: exact-rational weight recursions
//! * [`decouple`]: empirical ratio experiments for decoupling inequalities

pub mod appendix;
pub mod arcs;
pub mod counting;
pub mod decouple;
pub mod domain;
pub mod error;
pub mod expsum;
pub mod fit;
pub mod linalg;
pub mod quadrature;
pub mod rational;
pub mod weights;

pub use domain::{e_of, weight_eval, Ball, CellRange, Instance, PowerSumKey, StepFunction, TorusPoint, WeightProfile};
pub use error::{Error, Result};
pub use rational::Rational;
