//! Dense complex linear algebra.

pub mod eigen;
pub mod kron;
pub mod lu;
pub mod matrix;
pub mod pfaffian;

pub use eigen::{eigenvalues, hermitian_eigenvalues, hermitian_sqrt, init_sequential_linalg};
pub use kron::{kron, permute, tensor_swap_permutation};
pub use lu::{condition_number_1, det, inverse, log_det, LogScaled, Lu};
pub use matrix::{ComplexMatrix, C64, I, ONE, ZERO};
pub use pfaffian::{check_antisymmetric, pfaffian, pfaffian_congruence_check, pfaffian_with_tol, PfaffianResult};
