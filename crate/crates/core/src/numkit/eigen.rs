//! Eigenvalue solvers, backed by faer.

use faer::{Par, Side};

use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

pub const MAX_EIGEN_DIM: usize = 4096;

/// Relative Hermiticity tolerance for the self-adjoint routines.
const HERMITIAN_TOL: f64 = 1e-10;

/// Forces faer onto the calling thread. Parallelism in this crate lives at the replica
/// level; nested thread pools would only oversubscribe.
pub fn init_sequential_linalg() {
    faer::set_global_parallelism(Par::Seq);
}

/// All eigenvalues of a general complex square matrix (Hessenberg reduction + shifted QR).
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("eigenvalues need a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    if m.rows() > MAX_EIGEN_DIM {
        return Err(Error::Domain(format!("dimension {} exceeds {MAX_EIGEN_DIM}", m.rows())));
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    m.to_faer().eigenvalues().map_err(|_| Error::NoConvergence { partial: Vec::new() })
}

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("expected a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let n = m.rows();
    for i in 0..n {
        for j in i..n {
            let r = (m[(i, j)] - m[(j, i)].conj()).norm();
            if r > HERMITIAN_TOL * scale {
                return Err(Error::Structure(format!("matrix is not Hermitian at ({i},{j}): residual {r:.3e}")));
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix, nondecreasing.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    m.to_faer().self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::NoConvergence { partial: Vec::new() })
}

/// Hermitian positive semidefinite square root via unitary diagonalization.
///
/// Eigenvalues in `[-1e-10, 0)` are treated as round-off and clamped to zero.
pub fn hermitian_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_hermitian(m)?;
    let n = m.rows();
    if n == 0 {
        return Ok(m.clone());
    }
    let evd = m.to_faer().self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence { partial: Vec::new() })?;
    let s = evd.S().column_vector();
    let min_eig = (0..n).map(|i| s[i].re).fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 {
        return Err(Error::Indefinite { min_eig });
    }
    let u = ComplexMatrix::from_faer(evd.U());
    let roots: Vec<f64> = (0..n).map(|i| s[i].re.max(0.0).sqrt()).collect();
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += u[(i, k)] * roots[k] * u[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::lu::det;
    use crate::numkit::matrix::ONE;
    use crate::numkit::testutil::random_matrix;

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn triangular_gives_diagonal() {
        let mut m = random_matrix(6, 6, 3);
        for i in 0..6 {
            for j in 0..i {
                m[(i, j)] = ZERO;
            }
        }
        let ev = sorted(eigenvalues(&m).unwrap());
        let diag = sorted(m.diagonal());
        for (a, b) in ev.iter().zip(&diag) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn nilpotent_perturbation_spreads_on_circle() {
        let n = 16;
        let eps = 2f64.powi(-16);
        let mut j = ComplexMatrix::zeros(n, n);
        for i in 0..n - 1 {
            j[(i, i + 1)] = ONE;
        }
        j[(n - 1, 0)] = C64::new(eps, 0.0);
        let mut ev = eigenvalues(&j).unwrap();
        ev.sort_by(|a, b| a.arg().partial_cmp(&b.arg()).unwrap());
        for (k, z) in ev.iter().enumerate() {
            assert!((z.norm() - 0.5).abs() < 1e-10, "{z}");
            if k > 0 {
                let gap = z.arg() - ev[k - 1].arg();
                assert!((gap - std::f64::consts::TAU / 16.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn backward_error_trace_and_det() {
        for seed in 0..5 {
            let n = 30;
            let m = random_matrix(n, n, seed);
            let ev = eigenvalues(&m).unwrap();
            let tr: C64 = ev.iter().sum();
            assert!((tr - m.trace()).norm() <= 1e-8 * n as f64 * m.max_abs());
            let prod = ev.iter().fold(ONE, |acc, z| acc * z);
            let d = det(&m).unwrap();
            assert!((prod - d).norm() <= 1e-7 * d.norm());
        }
    }

    #[test]
    fn matches_polynomial_roots() {
        // companion matrix of (x-1)(x+2)(x-i)(x+0.5i)(x-3)
        let roots = [C64::new(1.0, 0.0), C64::new(-2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -0.5), C64::new(3.0, 0.0)];
        let mut coeffs = vec![ONE];
        for r in roots {
            let mut next = vec![ZERO; coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k + 1] += *c;
                next[k] -= c * r;
            }
            coeffs = next;
        }
        let n = roots.len();
        let mut comp = ComplexMatrix::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = ONE;
        }
        for i in 0..n {
            comp[(i, n - 1)] = -coeffs[i];
        }
        let ev = sorted(eigenvalues(&comp).unwrap());
        for (a, b) in ev.iter().zip(sorted(roots.to_vec()).iter()) {
            assert!((a - b).norm() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn sqrt_of_diagonal_and_identity() {
        let id = ComplexMatrix::identity(3);
        assert!(hermitian_sqrt(&id).unwrap().max_abs_diff(&id) < 1e-14);
        let d = ComplexMatrix::diag(&[C64::new(4.0, 0.0), C64::new(9.0, 0.0)]);
        let s = hermitian_sqrt(&d).unwrap();
        assert!(s.max_abs_diff(&ComplexMatrix::diag(&[C64::new(2.0, 0.0), C64::new(3.0, 0.0)])) < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        for seed in 0..5 {
            let b = random_matrix(5, 5, seed);
            let m = b.matmul(&b.adjoint());
            let s = hermitian_sqrt(&m).unwrap();
            assert!(s.matmul(&s).max_abs_diff(&m) < 1e-10 * m.max_abs());
            assert!(s.max_abs_diff(&s.adjoint()) < 1e-12);
        }
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = ComplexMatrix::diag(&[C64::new(1.0, 0.0), C64::new(-0.5, 0.0)]);
        match hermitian_sqrt(&m) {
            Err(Error::Indefinite { min_eig }) => assert!((min_eig + 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
