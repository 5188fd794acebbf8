//! Constructive tools for polynomial dynamics: Green functions and external
//! rays, rational laminations, mapping schemes, Yoccoz puzzles, Thurston
//! pull-back on marked portraits, and the tuning/straightening pair for
//! postcritically finite hyperbolic polynomials.

pub mod error;
pub mod fixtures;
pub mod lamination;
pub mod polycore;
pub mod potential;
pub mod puzzle;
pub mod roots;
pub mod scheme;
pub mod thurston;
pub mod tuner;

pub use error::{Error, Result};
pub use lamination::{RationalAngle, RationalLamination};
pub use polycore::{Cycle, CycleKind, DynClass, MonicPolynomial};
pub use potential::{Equipotential, ExternalRay};

pub use num_complex::Complex64;
