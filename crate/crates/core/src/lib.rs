//! Randomized-measurement error suppression for entanglement witnesses.
//!
//! Imperfect local measurements bias witness expectations and can produce
//! false certificates of entanglement. Randomizing each measurement with
//! phase gates diagonal in its target basis replaces the laboratory POVM by a
//! "tuned" POVM that is diagonal in that basis, which shrinks the worst-case
//! separable bias from order `sqrt(eps)` to order `eps`.

pub mod bounds;
pub mod error;
pub mod measurements;
pub mod noise;
pub mod operator;
pub mod optimizer;
pub mod random;
pub mod sampling;
pub mod witnesses;

pub use error::{Error, Result};
pub use measurements::{Povm, TargetMeasurement};
pub use operator::{ComplexOperator, C64};
pub use witnesses::{MeasurementAssignment, ProductTermWitness};
