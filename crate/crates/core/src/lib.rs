//! Exact symbolic and truncated-Fock numeric toolkit for the q-oscillator
//! lattice model with a reflecting boundary.
//!
//! The crate is layered bottom-up:
//!
//! * [`coeffring`] holds Laurent polynomials in `q` with big-integer coefficients.
//! * [`oscalgebra`] normal-orders words in several q-oscillator site algebras,
//!   including the boundary exchange symbol `K`.
//! * [`opmatrix`] provides sparse operator-valued matrices over auxiliary spaces.
//! * [`eqverify`] builds the named matrices and checks the finite identities.
//! * [`transfer`] builds torus and half-plane transfer matrices.
//! * [`classical`] covers the Poisson limit, Korepanov determinant and the
//!   refactorization map.
//! * [`focknum`] evaluates everything in Fock representations and solves for
//!   intertwiners.
//! * [`suite`] runs named checks and renders the JSON report.

pub mod classical;
pub mod coeffring;
pub mod eqverify;
pub mod focknum;
pub mod linalg;
pub mod opmatrix;
pub mod oscalgebra;
pub mod report;
pub mod suite;
pub mod transfer;

pub use coeffring::{DeformParam, LaurentPoly};
pub use opmatrix::{AuxShape, OpMatrix};
pub use oscalgebra::{AlgElem, Algebra, Gen, SiteId, SiteMonomial, TensorMonomial};
pub use report::{CheckReport, Mode, Residual};
