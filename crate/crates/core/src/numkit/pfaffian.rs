//! Pfaffians of complex antisymmetric matrices.
//!
//! Skew-symmetric Gaussian elimination (Parlett–Reid): at each step the largest entry
//! of the active column is pivoted into the subdiagonal position, then a rank-2
//! update eliminates the remaining entries of that row/column pair. The Pfaffian is
//! the product of the pivots with the sign flipped for every interchange.

use super::lu::{log_det, LogScaled};
use super::matrix::{ComplexMatrix, C64, ONE};
use crate::error::{Error, Result};

pub type PfaffianResult = LogScaled;

/// Relative antisymmetry tolerance, `‖M + Mᵗ‖_max ≤ tol · ‖M‖_max`.
pub const ANTISYMMETRY_TOL: f64 = 1e-10;

/// Checks `M = -Mᵗ` (transpose, not adjoint) and reports the worst offending pair.
pub fn check_antisymmetric(m: &ComplexMatrix, rel_tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("Pfaffian needs a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    let scale = m.max_abs();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in i..n {
            let r = (m[(i, j)] + m[(j, i)]).norm();
            if r > worst.2 {
                worst = (i, j, r);
            }
        }
    }
    if worst.2 > rel_tol * scale {
        return Err(Error::NotAntisymmetric { i: worst.0, j: worst.1, residual: worst.2 });
    }
    Ok(())
}

pub fn pfaffian(m: &ComplexMatrix) -> Result<PfaffianResult> {
    pfaffian_with_tol(m, ANTISYMMETRY_TOL)
}

pub fn pfaffian_with_tol(m: &ComplexMatrix, rel_tol: f64) -> Result<PfaffianResult> {
    check_antisymmetric(m, rel_tol)?;
    let n = m.rows();
    if n % 2 == 1 {
        return Ok(LogScaled::ZERO);
    }
    if n == 0 {
        return Ok(LogScaled::from_value(ONE));
    }
    let mut a = m.clone();
    let mut phase = ONE;
    let mut log_abs = 0.0;
    let mut k = 0;
    while k + 1 < n {
        let (kp, pmax) = (k + 1..n).map(|i| (i, a[(i, k)].norm())).fold((k + 1, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax == 0.0 {
            return Ok(LogScaled::ZERO);
        }
        if kp != k + 1 {
            swap_rows_cols(&mut a, k + 1, kp);
            phase = -phase;
        }
        let pivot = a[(k, k + 1)];
        let r = pivot.norm();
        phase *= pivot / r;
        log_abs += r.ln();
        if k + 2 < n {
            // tau_i = a[k, i] / a[k, k+1] for the trailing indices.
            let tau: Vec<C64> = (k + 2..n).map(|i| a[(k, i)] / pivot).collect();
            let col: Vec<C64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    Ok(LogScaled { mantissa: phase, log_scale: log_abs })
}

fn swap_rows_cols(a: &mut ComplexMatrix, p: usize, q: usize) {
    let n = a.rows();
    for j in 0..n {
        let t = a[(p, j)];
        a[(p, j)] = a[(q, j)];
        a[(q, j)] = t;
    }
    for i in 0..n {
        let t = a[(i, p)];
        a[(i, p)] = a[(i, q)];
        a[(i, q)] = t;
    }
}

/// Self-test of `Pf(B A Bᵗ) = det(B) Pf(A)` at relative tolerance 1e-8.
pub fn pfaffian_congruence_check(b: &ComplexMatrix, a: &ComplexMatrix) -> Result<bool> {
    if b.rows() != a.rows() || !b.is_square() {
        return Err(Error::Shape("congruence check needs B and A of equal square size".into()));
    }
    let pf_a = pfaffian(a)?;
    let bab = b.matmul(a).matmul(&b.transpose());
    // B A Bᵗ is antisymmetric up to round-off proportional to ‖B‖² ‖A‖.
    let pf_bab = pfaffian_with_tol(&bab, 1e-9)?;
    let rhs = log_det(b)?.mul(&pf_a);
    Ok(relative_close(&pf_bab, &rhs, 1e-8))
}

pub(crate) fn relative_close(x: &LogScaled, y: &LogScaled, tol: f64) -> bool {
    if x.is_zero() || y.is_zero() {
        return x.is_zero() && y.is_zero();
    }
    let reference = x.log_scale.max(y.log_scale);
    let (a, b) = (x.relative_to(reference), y.relative_to(reference));
    (a - b).norm() <= tol * a.norm().max(b.norm())
}

/// Pfaffian by explicit sum over perfect matchings; exponential cost, for tests only.
#[cfg(test)]
pub(crate) fn pfaffian_by_matchings(m: &ComplexMatrix) -> C64 {
    fn rec(m: &ComplexMatrix, remaining: &mut Vec<usize>) -> C64 {
        if remaining.is_empty() {
            return ONE;
        }
        let first = remaining.remove(0);
        let mut total = C64::new(0.0, 0.0);
        for idx in 0..remaining.len() {
            let partner = remaining.remove(idx);
            let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
            total += m[(first, partner)] * rec(m, remaining) * sign;
            remaining.insert(idx, partner);
        }
        remaining.insert(0, first);
        total
    }
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    rec(m, &mut idx)
}
