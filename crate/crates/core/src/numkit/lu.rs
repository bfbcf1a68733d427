//! Pivoted LU factorization, determinants and inverses.

use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// A complex number stored as `mantissa * exp(log_scale)`.
///
/// Determinants and Pfaffians of the block observables overflow `f64` long before the
/// matrices get large, so they travel in this form until they are averaged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScaled {
    pub mantissa: C64,
    pub log_scale: f64,
}

impl LogScaled {
    pub const ZERO: Self = Self { mantissa: ZERO, log_scale: 0.0 };

    pub fn from_value(z: C64) -> Self {
        Self { mantissa: z, log_scale: 0.0 }
    }

    pub fn value(&self) -> C64 {
        self.mantissa * self.log_scale.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == ZERO
    }

    /// `ln |value|`, or `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.norm().ln() + self.log_scale
        }
    }

    /// The value expressed relative to `exp(reference)`.
    pub fn relative_to(&self, reference: f64) -> C64 {
        if self.is_zero() {
            ZERO
        } else {
            self.mantissa * (self.log_scale - reference).exp()
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self { mantissa: self.mantissa * other.mantissa, log_scale: self.log_scale + other.log_scale }.normalized()
    }

    pub fn mul_scalar(&self, z: C64) -> Self {
        Self { mantissa: self.mantissa * z, log_scale: self.log_scale }.normalized()
    }

    /// Moves the magnitude of the mantissa into the exponent.
    pub fn normalized(self) -> Self {
        let r = self.mantissa.norm();
        if r == 0.0 || !r.is_finite() {
            return if r == 0.0 { Self::ZERO } else { self };
        }
        Self { mantissa: self.mantissa / r, log_scale: self.log_scale + r.ln() }
    }
}

/// Partial-pivoted LU factorization `P A = L U` stored compactly.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    factors: ComplexMatrix,
    perm: Vec<usize>,
    swaps: usize,
    singular: bool,
}

impl Lu {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Shape(format!("LU needs a square matrix, got {}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut f = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let mut singular = false;
        for k in 0..n {
            let (p, pmax) = (k..n).map(|i| (i, f[(i, k)].norm())).fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let t = f[(k, j)];
                    f[(k, j)] = f[(p, j)];
                    f[(p, j)] = t;
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = f[(k, k)];
            for i in k + 1..n {
                let l = f[(i, k)] / pivot;
                f[(i, k)] = l;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = f[(k, j)];
                    f[(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { n, factors: f, perm, swaps, singular })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn log_det(&self) -> LogScaled {
        if self.singular {
            return LogScaled::ZERO;
        }
        let mut phase = if self.swaps.is_multiple_of(2) { ONE } else { -ONE };
        let mut log_abs = 0.0;
        for k in 0..self.n {
            let u = self.factors[(k, k)];
            let r = u.norm();
            phase *= u / r;
            log_abs += r.ln();
        }
        LogScaled { mantissa: phase, log_scale: log_abs }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        if self.singular {
            return Err(Error::Structure("solve with a singular matrix".into()));
        }
        let n = self.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: C64 = (0..i).map(|j| self.factors[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: C64 = (i + 1..n).map(|j| self.factors[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.factors[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<ComplexMatrix> {
        let n = self.n;
        let mut inv = ComplexMatrix::zeros(n, n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = ZERO);
            e[j] = ONE;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Log-scaled determinant via pivoted LU.
pub fn log_det(m: &ComplexMatrix) -> Result<LogScaled> {
    Ok(Lu::new(m)?.log_det())
}

pub fn det(m: &ComplexMatrix) -> Result<C64> {
    Ok(log_det(m)?.value())
}

pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    Lu::new(m)?.inverse()
}

/// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`; infinite for singular input.
pub fn condition_number_1(m: &ComplexMatrix) -> Result<f64> {
    let lu = Lu::new(m)?;
    if lu.is_singular() {
        return Ok(f64::INFINITY);
    }
    let inv = lu.inverse()?;
    let norm1 = |a: &ComplexMatrix| (0..a.cols()).map(|j| (0..a.rows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    Ok(norm1(m) * norm1(&inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::testutil::random_matrix;

    #[test]
    fn identity_has_unit_determinant() {
        let d = det(&ComplexMatrix::identity(5)).unwrap();
        assert!((d - ONE).norm() < 1e-15);
    }

    #[test]
    fn diagonal_determinant() {
        let m = ComplexMatrix::diag(&[C64::new(2.0, 0.0), C64::new(0.0, 3.0)]);
        let d = det(&m).unwrap();
        assert!((d - C64::new(0.0, 6.0)).norm() < 1e-14);
    }

    #[test]
    fn determinant_of_inverse_round_trip() {
        for seed in 0..10 {
            let m = random_matrix(8, 8, seed);
            let inv = inverse(&m).unwrap();
            let prod = det(&m).unwrap() * det(&inv).unwrap();
            assert!((prod - ONE).norm() < 1e-9, "seed {seed}: {prod}");
            let id = m.matmul(&inv);
            assert!(id.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_gives_zero() {
        let m = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(det(&m).unwrap(), ZERO);
        assert!(condition_number_1(&m).unwrap().is_infinite());
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(det(&ComplexMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn log_scale_survives_overflow() {
        let m = ComplexMatrix::identity(300).scale_real(1e5);
        let ld = log_det(&m).unwrap();
        assert!((ld.ln_abs() - 300.0 * 1e5f64.ln()).abs() < 1e-9);
        assert!((ld.mantissa - ONE).norm() < 1e-12);
    }
}
