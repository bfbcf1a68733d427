use super::matrix::{ComplexMatrix, ZERO};

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (m, n) = (b.rows(), b.cols());
    let mut out = ComplexMatrix::zeros(a.rows() * m, a.cols() * n);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..m {
                for l in 0..n {
                    out[(i * m + k, j * n + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Perfect shuffle σ with `σ[k·p + i] = i·m + k` for `i < p`, `k < m`.
///
/// For `A` of size p×q and `B` of size m×n,
/// `(B ⊗ A)[a, b] = (A ⊗ B)[σ(p,m)[a], σ(q,n)[b]]`.
pub fn tensor_swap_permutation(p: usize, m: usize) -> Vec<usize> {
    let mut perm = vec![0; p * m];
    for k in 0..m {
        for i in 0..p {
            perm[k * p + i] = i * m + k;
        }
    }
    perm
}

/// `out[a, b] = m[rows[a], cols[b]]`.
pub fn permute(m: &ComplexMatrix, rows: &[usize], cols: &[usize]) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::matrix::C64;
    use crate::numkit::testutil::random_matrix;
    use proptest::prelude::*;

    #[test]
    fn identity_kron_is_block_diagonal() {
        let m = random_matrix(3, 2, 5);
        let k = kron(&ComplexMatrix::identity(2), &m);
        assert_eq!(k, ComplexMatrix::direct_sum(&[&m, &m]));
    }

    #[test]
    fn mixed_product() {
        let (a, b, c, d) = (random_matrix(2, 2, 1), random_matrix(2, 2, 2), random_matrix(2, 2, 3), random_matrix(2, 2, 4));
        let lhs = kron(&a, &b).matmul(&kron(&c, &d));
        let rhs = kron(&a.matmul(&c), &b.matmul(&d));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn known_shuffle() {
        assert_eq!(tensor_swap_permutation(1, 1), vec![0]);
        assert_eq!(tensor_swap_permutation(2, 3), vec![0, 3, 1, 4, 2, 5]);
    }

    #[test]
    fn swap_realizes_commutation_exactly_on_integers() {
        let a = ComplexMatrix::from_fn(3, 3, |i, j| C64::new((i * 3 + j) as f64 - 4.0, (i as f64) - (j as f64)));
        let b = ComplexMatrix::from_fn(2, 2, |i, j| C64::new((2 * i + j + 1) as f64, 0.0));
        let r = tensor_swap_permutation(3, 2);
        assert_eq!(permute(&kron(&a, &b), &r, &r), kron(&b, &a));
    }

    proptest! {
        #[test]
        fn swap_rectangular(p in 1usize..4, q in 1usize..4, m in 1usize..4, n in 1usize..4, seed in 0u64..1000) {
            let a = random_matrix(p, q, seed);
            let b = random_matrix(m, n, seed + 7);
            let lhs = permute(&kron(&a, &b), &tensor_swap_permutation(p, m), &tensor_swap_permutation(q, n));
            prop_assert_eq!(lhs, kron(&b, &a));
        }

        #[test]
        fn swap_twice_is_identity(p in 1usize..7, m in 1usize..7) {
            let s = tensor_swap_permutation(p, m);
            let t = tensor_swap_permutation(m, p);
            for x in 0..p * m {
                prop_assert_eq!(s[t[x]], x);
            }
        }
    }
}
