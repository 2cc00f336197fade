//! Lower bounds for the first non-trivial Neumann–Laplace eigenvalue of
//! planar domains given as images of the disc or the square under
//! quasiconformal maps, with a finite-element oracle to check them against.

pub mod bounds;
pub mod fem;
pub mod maps;
pub mod quadrature;
pub mod search;
pub mod sparse;
pub mod report;
