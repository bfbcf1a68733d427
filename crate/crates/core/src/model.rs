//! Jordan data of the finite-rank perturbation and ensemble configurations.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::{condition_number_1, hermitian_eigenvalues, inverse, ComplexMatrix, C64, ONE};

/// Reciprocal condition numbers below this reject a similarity transform.
pub const MIN_RCOND: f64 = 1e-12;

/// One Jordan block size with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub size: usize,
    pub multiplicity: usize,
}

/// Jordan data `A₀ = P J P⁻¹`, `J = ⊕_i ⊕_j R_{p_ij}(θ_i)^{⊕β_ij}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JordanSpecRepr", into = "JordanSpecRepr")]
pub struct JordanSpec {
    eigenvalues: Vec<C64>,
    blocks: Vec<Vec<BlockSpec>>,
    transform: Option<ComplexMatrix>,
}

impl JordanSpec {
    /// Validates sizes, multiplicities and eigenvalue distinctness. A transform, if
    /// given, must be r×r (or 2r×2r in quaternion block form, see [`embed_quaternion`]).
    pub fn new(eigenvalues: Vec<C64>, blocks: Vec<Vec<BlockSpec>>, transform: Option<ComplexMatrix>) -> Result<Self> {
        if eigenvalues.len() != blocks.len() {
            return Err(Error::Jordan(format!("{} eigenvalues but {} block tables", eigenvalues.len(), blocks.len())));
        }
        for (i, table) in blocks.iter().enumerate() {
            if table.is_empty() {
                return Err(Error::Jordan(format!("eigenvalue {} has no Jordan blocks", i + 1)));
            }
            for (j, b) in table.iter().enumerate() {
                if b.size == 0 {
                    return Err(Error::Jordan(format!("block ({}, {}) has size 0", i + 1, j + 1)));
                }
                if b.multiplicity == 0 {
                    return Err(Error::Jordan(format!("block ({}, {}) has multiplicity 0", i + 1, j + 1)));
                }
                if j > 0 && table[j - 1].size >= b.size {
                    return Err(Error::Jordan(format!(
                        "block sizes of eigenvalue {} must strictly increase: p({},{}) = {} is not below p({},{}) = {}",
                        i + 1,
                        i + 1,
                        j,
                        table[j - 1].size,
                        i + 1,
                        j + 1,
                        b.size
                    )));
                }
            }
        }
        for i in 0..eigenvalues.len() {
            if !(eigenvalues[i].re.is_finite() && eigenvalues[i].im.is_finite()) {
                return Err(Error::Jordan(format!("eigenvalue {} is not finite", i + 1)));
            }
            for j in 0..i {
                if canonical(eigenvalues[i]) == canonical(eigenvalues[j]) {
                    return Err(Error::Jordan(format!("eigenvalues {} and {} coincide", j + 1, i + 1)));
                }
            }
        }
        let spec = Self { eigenvalues: eigenvalues.into_iter().map(canonical).collect(), blocks, transform };
        if let Some(p) = &spec.transform {
            let r = spec.dimension();
            if !(p.is_square() && (p.rows() == r || p.rows() == 2 * r)) {
                return Err(Error::Jordan(format!(
                    "transform is {}x{}, expected {r}x{r} (or {r2}x{r2} in quaternion form)",
                    p.rows(),
                    p.cols(),
                    r2 = 2 * r
                )));
            }
            let cond = condition_number_1(p)?;
            if !cond.is_finite() || 1.0 / cond < MIN_RCOND {
                return Err(Error::IllConditioned { cond });
            }
        }
        Ok(spec)
    }

    /// A single eigenvalue with one block table.
    pub fn single(theta: C64, blocks: &[(usize, usize)]) -> Result<Self> {
        Self::new(vec![theta], vec![to_blocks(blocks)], None)
    }

    pub fn with_transform(mut self, p: ComplexMatrix) -> Result<Self> {
        self.transform = Some(p);
        Self::new(self.eigenvalues, self.blocks, self.transform)
    }

    /// The zero-rank spec (no perturbation).
    pub fn empty() -> Self {
        Self { eigenvalues: Vec::new(), blocks: Vec::new(), transform: None }
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn blocks(&self) -> &[Vec<BlockSpec>] {
        &self.blocks
    }

    pub fn transform(&self) -> Option<&ComplexMatrix> {
        self.transform.as_ref()
    }

    /// `r = Σ_i Σ_j β_ij p_ij`.
    pub fn dimension(&self) -> usize {
        self.blocks.iter().flatten().map(|b| b.size * b.multiplicity).sum()
    }

    /// 1-norm condition number of the transform (1 for the identity).
    pub fn transform_condition(&self) -> f64 {
        self.transform.as_ref().map_or(1.0, |p| condition_number_1(p).unwrap_or(f64::INFINITY))
    }

    /// The Jordan matrix `J`.
    pub fn jordan_matrix(&self) -> ComplexMatrix {
        let r = self.dimension();
        let mut j = ComplexMatrix::zeros(r, r);
        let mut offset = 0;
        for (theta, table) in self.eigenvalues.iter().zip(&self.blocks) {
            for b in table {
                for _ in 0..b.multiplicity {
                    for k in 0..b.size {
                        j[(offset + k, offset + k)] = *theta;
                        if k + 1 < b.size {
                            j[(offset + k, offset + k + 1)] = ONE;
                        }
                    }
                    offset += b.size;
                }
            }
        }
        j
    }
}

fn canonical(z: C64) -> C64 {
    // folds -0.0 into 0.0 so equality is purely by value
    C64::new(z.re + 0.0, z.im + 0.0)
}

fn to_blocks(pairs: &[(usize, usize)]) -> Vec<BlockSpec> {
    pairs.iter().map(|&(size, multiplicity)| BlockSpec { size, multiplicity }).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenEntry {
    theta_re: f64,
    #[serde(default)]
    theta_im: f64,
    /// `[p, β]` pairs.
    blocks: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JordanSpecRepr {
    eigenvalues: Vec<EigenEntry>,
    /// Row-major interleaved re/im pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<Vec<f64>>,
}

impl TryFrom<JordanSpecRepr> for JordanSpec {
    type Error = Error;

    fn try_from(r: JordanSpecRepr) -> Result<Self> {
        let eigenvalues = r.eigenvalues.iter().map(|e| C64::new(e.theta_re, e.theta_im)).collect();
        let blocks =
            r.eigenvalues.iter().map(|e| e.blocks.iter().map(|&[size, multiplicity]| BlockSpec { size, multiplicity }).collect()).collect();
        let transform = match r.transform {
            None => None,
            Some(data) => {
                let entries = data.len() / 2;
                let n = (entries as f64).sqrt().round() as usize;
                if data.len() % 2 != 0 || n * n != entries {
                    return Err(Error::Jordan(format!("transform must hold 2·n² interleaved values, got {}", data.len())));
                }
                let values = data.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
                Some(ComplexMatrix::from_row_major(n, n, values)?)
            }
        };
        JordanSpec::new(eigenvalues, blocks, transform)
    }
}

impl From<JordanSpec> for JordanSpecRepr {
    fn from(s: JordanSpec) -> Self {
        let eigenvalues = s
            .eigenvalues
            .iter()
            .zip(&s.blocks)
            .map(|(t, table)| EigenEntry {
                theta_re: t.re,
                theta_im: t.im,
                blocks: table.iter().map(|b| [b.size, b.multiplicity]).collect(),
            })
            .collect();
        let transform = s.transform.map(|p| p.as_slice().iter().flat_map(|z| [z.re, z.im]).collect());
        Self { eigenvalues, transform }
    }
}

/// `A₀ = P J P⁻¹` (or `J` when no transform is given).
pub fn build_deformation(spec: &JordanSpec) -> Result<ComplexMatrix> {
    let j = spec.jordan_matrix();
    match spec.transform() {
        None => Ok(j),
        Some(p) if p.rows() == j.rows() => Ok(p.matmul(&j).matmul(&inverse(p)?)),
        Some(p) => {
            Err(Error::Jordan(format!("transform is {}x{}: quaternion-form transforms only apply to embed_quaternion", p.rows(), p.cols())))
        }
    }
}

/// `𝕁_n = [[0, I_n], [-I_n, 0]]`.
pub fn symplectic_unit(n: usize) -> ComplexMatrix {
    let mut j = ComplexMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = ONE;
        j[(n + i, i)] = -ONE;
    }
    j
}

/// Max-entry residual of `M 𝕁 - 𝕁 conj(M)`.
pub fn quaternion_residual(m: &ComplexMatrix) -> f64 {
    if !m.is_square() || !m.rows().is_multiple_of(2) {
        return f64::INFINITY;
    }
    let j = symplectic_unit(m.rows() / 2);
    m.matmul(&j).max_abs_diff(&j.matmul(&m.conj()))
}

pub fn is_quaternion(m: &ComplexMatrix, tol: f64) -> bool {
    quaternion_residual(m) <= tol * m.max_abs().max(1.0)
}

/// `[[A, B], [-B̄, Ā]]`.
pub fn quaternion_from_blocks(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let nb = -&b.conj();
    let ac = a.conj();
    ComplexMatrix::from_blocks(&[vec![a, b], vec![&nb, &ac]])
}

/// `P diag(J, J̄) P⁻¹`, a 2r×2r matrix satisfying `A₀𝕁 = 𝕁 conj(A₀)`.
///
/// An r×r transform `P₁` is used as `diag(P₁, P̄₁)`; a 2r×2r transform must itself be
/// in quaternion form.
pub fn embed_quaternion(spec: &JordanSpec) -> Result<ComplexMatrix> {
    if let Some((i, t)) = spec.eigenvalues().iter().enumerate().find(|(_, t)| t.im < 0.0) {
        return Err(Error::Jordan(format!("eigenvalue {} = {t} has negative imaginary part", i + 1)));
    }
    let j = spec.jordan_matrix();
    let r = j.rows();
    let d = ComplexMatrix::direct_sum(&[&j, &j.conj()]);
    let p = match spec.transform() {
        None => return Ok(d),
        Some(p) if p.rows() == r => quaternion_from_blocks(p, &ComplexMatrix::zeros(r, r))?,
        Some(p) => {
            if !is_quaternion(p, 1e-12) {
                return Err(Error::Jordan("2r×2r transform is not in quaternion form".into()));
            }
            p.clone()
        }
    };
    Ok(p.matmul(&d).matmul(&inverse(&p)?))
}

/// `diag(A₀, 0)` of size `n`.
pub fn pad_mean(a0: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    if !a0.is_square() || a0.rows() > n {
        return Err(Error::Shape(format!("cannot pad a {}x{} block into size {n}", a0.rows(), a0.cols())));
    }
    let mut x0 = ComplexMatrix::zeros(n, n);
    x0.set_block(0, 0, a0);
    Ok(x0)
}

/// Pads a 2r×2r quaternion matrix `[[A₁, A₂], [-Ā₂, Ā₁]]` to the 2N×2N matrix with blocks
/// `diag(A₁, 0)`, `diag(A₂, 0)`.
pub fn pad_quaternion(a0: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    if !a0.is_square() || !a0.rows().is_multiple_of(2) || a0.rows() > 2 * n {
        return Err(Error::Shape(format!("cannot pad a {}x{} quaternion block into size {}", a0.rows(), a0.cols(), 2 * n)));
    }
    let r = a0.rows() / 2;
    let a1 = pad_mean(&a0.submatrix(0, 0, r, r), n)?;
    let a2 = pad_mean(&a0.submatrix(0, r, r, r), n)?;
    let x0 = quaternion_from_blocks(&a1, &a2)?;
    if x0.max_abs_diff(&pad_general(a0, r, n)) > 1e-14 * a0.max_abs().max(1.0) {
        return Err(Error::Structure("mean matrix is not in quaternion form".into()));
    }
    Ok(x0)
}

fn pad_general(a0: &ComplexMatrix, r: usize, n: usize) -> ComplexMatrix {
    let mut x0 = ComplexMatrix::zeros(2 * n, 2 * n);
    for (bi, oi) in [(0, 0), (r, n)] {
        for (bj, oj) in [(0, 0), (r, n)] {
            x0.set_block(oi, oj, &a0.submatrix(bi, bj, r, r));
        }
    }
    x0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierExponent {
    pub index: usize,
    pub theta: C64,
    pub smallest_block: usize,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityDescriptor {
    pub z0: C64,
    /// Number of eigenvalues equal to `z₀` (0 or 1, since eigenvalues are distinct).
    pub m: usize,
    /// Number of Jordan blocks at `z₀`.
    pub t: usize,
    pub critical_indices: Vec<usize>,
    /// Predicted fluctuation exponents `1/(2 p_{i,1})` for `|θ_i| > 1`.
    pub outliers: Vec<OutlierExponent>,
}

/// Which eigenvalues sit at `z₀` (exact equality of the declared values), the geometric
/// multiplicity `t` there, and the outlier exponents.
pub fn describe_criticality(spec: &JordanSpec, z0: C64) -> Result<CriticalityDescriptor> {
    if z0.norm() < 1.0 - 1e-9 {
        return Err(Error::Domain(format!("z0 = {z0} lies inside the unit disk")));
    }
    let z0 = canonical(z0);
    let critical_indices: Vec<usize> = spec.eigenvalues().iter().enumerate().filter(|(_, t)| **t == z0).map(|(i, _)| i).collect();
    let t = critical_indices.iter().map(|&i| spec.blocks()[i].iter().map(|b| b.multiplicity).sum::<usize>()).sum();
    let outliers = spec
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.norm() > 1.0)
        .map(|(i, &theta)| {
            let p = spec.blocks()[i][0].size;
            OutlierExponent { index: i, theta, smallest_block: p, exponent: 1.0 / (2.0 * p as f64) }
        })
        .collect();
    Ok(CriticalityDescriptor { z0, m: critical_indices.len(), t, critical_indices, outliers })
}

/// How the mean matrix is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Deformation {
    #[default]
    None,
    Jordan(JordanSpec),
    /// Explicit top-left block `A₀`; r×r for β = 1, 2, 2r×2r quaternion form for β = 4.
    Matrix(ComplexMatrix),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub beta: u8,
    /// N; the β = 4 matrix is 2N×2N.
    pub n: usize,
    #[serde(default)]
    pub deformation: Deformation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(beta: u8, n: usize, deformation: Deformation, seed: u64) -> Self {
        Self { beta, n, deformation, sigma: None, gamma: None, tau: None, seed }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(2.0 / self.beta as f64)
    }

    /// Side length of the sampled matrix.
    pub fn matrix_dim(&self) -> usize {
        if self.beta == 4 {
            2 * self.n
        } else {
            self.n
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.beta) {
            return Err(Error::Config(format!("beta must be 1, 2 or 4, got {}", self.beta)));
        }
        if self.n == 0 {
            return Err(Error::Config("N must be positive".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        let d = self.matrix_dim();
        for (name, m) in [("sigma", &self.sigma), ("gamma", &self.gamma)] {
            if let Some(m) = m {
                if m.rows() != d || m.cols() != d {
                    return Err(Error::Config(format!("{name} is {}x{}, expected {d}x{d}", m.rows(), m.cols())));
                }
                let min_eig = hermitian_eigenvalues(m).map_err(|e| Error::Config(format!("{name}: {e}")))?.first().copied().unwrap_or(0.0);
                if min_eig <= 0.0 {
                    return Err(Error::Indefinite { min_eig });
                }
                if self.beta == 4 && !is_quaternion(m, 1e-12) {
                    return Err(Error::Config(format!("{name} must satisfy the quaternion relation for beta = 4")));
                }
                if self.beta == 1 && !m.is_real() {
                    return Err(Error::Config(format!("{name} must be real for beta = 1")));
                }
            }
        }
        self.mean_matrix().map(|_| ())
    }

    /// The full mean `X₀ = diag(A₀, 0)`.
    pub fn mean_matrix(&self) -> Result<ComplexMatrix> {
        let d = self.matrix_dim();
        let x0 = match (&self.deformation, self.beta) {
            (Deformation::None, _) => ComplexMatrix::zeros(d, d),
            (Deformation::Jordan(spec), 4) => pad_quaternion(&embed_quaternion(spec)?, self.n)?,
            (Deformation::Jordan(spec), _) => pad_mean(&build_deformation(spec)?, self.n)?,
            (Deformation::Matrix(a0), 4) => pad_quaternion(a0, self.n)?,
            (Deformation::Matrix(a0), _) => pad_mean(a0, self.n)?,
        };
        if self.beta == 1 && !x0.is_real() {
            return Err(Error::Config("beta = 1 needs a real mean matrix".into()));
        }
        Ok(x0)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
