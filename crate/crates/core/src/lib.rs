//! Spectral decomposition with operator-valued eigenvalues.
//!
//! The algebra at the bottom is a finite direct sum of complex matrix
//! factors with a weighted trace. On top of it sit free modules of
//! finite rank, positive module operators, their diagonalization into
//! orthonormal module vectors with operator eigenvalues, the trace
//! quantile (spectral scale) with its minimax characterization,
//! perturbation pairing, an eigenvalue-exchange ordering procedure with a
//! dyadic refinement iteration, and a magnetic band-structure demo built
//! from fibered Hermitian matrix fields.

pub mod algebra;
pub mod diag;
pub mod eig;
pub mod error;
pub mod hilbert;
pub mod rng;
pub mod serial;
pub mod verify;
pub mod weak;

pub use algebra::{AlgebraElement, AlgebraShape, CenterElement, SpectralForm};
pub use diag::{Diagonalization, PairedPartition, SpectralScale};
pub use error::{CoreError, Result};
pub use hilbert::{ModuleOperator, ModuleVector};
pub use weak::{BandSystem, IterationTrace, OperatorField, SelectionReport};
