//! Replica samplers for the deformed Ginibre ensembles and the dual Gaussian ensembles.
//!
//! Per-entry variances (complex entries: `E|x|²`; real entries: `E x²`):
//!
//! | ensemble                    | entries                           | variance     |
//! |-----------------------------|-----------------------------------|--------------|
//! | deformed, β = 1             | real                              | τ/(2N)       |
//! | deformed, β = 2             | complex                           | τ/N          |
//! | deformed, β = 4             | complex blocks `X₁`, `X₂`         | τ/N          |
//! | dual rectangular (β = 2)    | complex                           | τ/N          |
//! | dual symmetric (β = 4)      | complex, diagonal / off-diagonal  | 2τ/N, τ/N    |
//! | dual antisymmetric (β = 1)  | complex, off-diagonal             | τ/(2N)       |

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{quaternion_from_blocks, EnsembleConfig};
use crate::numkit::{eigenvalues, hermitian_sqrt, ComplexMatrix, C64, ZERO};
use crate::rng::{stream_rng, stream_seed, Purpose};

/// Real and imaginary parts below this are treated as lying on the real axis when pairing.
pub const REAL_AXIS_TOL: f64 = 1e-12;
/// Relative tolerance of the β = 4 conjugate pairing (times the Frobenius norm of X).
pub const PAIRING_TOL: f64 = 1e-6;

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Complex Gaussian with `E|z|² = var`.
pub fn complex_normal(rng: &mut impl Rng, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    C64::new(s * normal(rng), s * normal(rng))
}

fn complex_gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, var: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, var))
}

/// A validated configuration with its square roots and mean precomputed.
#[derive(Clone, Debug)]
pub struct DeformedSampler {
    config: EnsembleConfig,
    mean: ComplexMatrix,
    sigma_sqrt: Option<ComplexMatrix>,
    gamma_sqrt: Option<ComplexMatrix>,
    fingerprint: String,
}

impl DeformedSampler {
    pub fn new(config: &EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let sqrt = |m: &Option<ComplexMatrix>| m.as_ref().map(hermitian_sqrt).transpose();
        Ok(Self {
            mean: config.mean_matrix()?,
            sigma_sqrt: sqrt(&config.sigma)?,
            gamma_sqrt: sqrt(&config.gamma)?,
            fingerprint: config.fingerprint(),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn mean(&self) -> &ComplexMatrix {
        &self.mean
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Centered noise `W` with the β-appropriate per-entry variances, before the covariances.
    pub fn noise(&self, rng: &mut impl Rng) -> ComplexMatrix {
        let n = self.config.n;
        let tau = self.config.tau();
        match self.config.beta {
            1 => {
                let s = (tau / (2.0 * n as f64)).sqrt();
                ComplexMatrix::from_fn(n, n, |_, _| C64::new(s * normal(rng), 0.0))
            }
            2 => complex_gaussian_matrix(rng, n, n, tau / n as f64),
            _ => {
                let x1 = complex_gaussian_matrix(rng, n, n, tau / n as f64);
                let x2 = complex_gaussian_matrix(rng, n, n, tau / n as f64);
                quaternion_from_blocks(&x1, &x2).expect("square blocks of equal size")
            }
        }
    }

    /// `X₀ + Σ^{1/2} W Γ^{1/2}` from an explicit generator.
    pub fn sample_with(&self, rng: &mut impl Rng) -> ComplexMatrix {
        let mut w = self.noise(rng);
        if let Some(s) = &self.sigma_sqrt {
            w = s.matmul(&w);
        }
        if let Some(g) = &self.gamma_sqrt {
            w = w.matmul(g);
        }
        &self.mean + &w
    }

    /// Deterministic in `(config.seed, replica)`.
    pub fn sample(&self, replica: u64) -> ComplexMatrix {
        self.sample_with(&mut self.replica_rng(replica))
    }

    pub fn replica_rng(&self, replica: u64) -> ChaCha8Rng {
        stream_rng(self.config.seed, replica, Purpose::Deformed)
    }

    pub fn spectrum(&self, replica: u64) -> Result<SpectrumSample> {
        let start = Instant::now();
        let x = self.sample(replica);
        let raw = eigenvalues(&x).map_err(|e| Error::Replica { replica, source: Box::new(e) })?;
        let eigenvalues = if self.config.beta == 4 {
            pair_conjugates(&raw, PAIRING_TOL * x.frobenius_norm()).map_err(|e| Error::Replica { replica, source: Box::new(e) })?
        } else {
            raw
        };
        Ok(SpectrumSample {
            eigenvalues,
            fingerprint: self.fingerprint.clone(),
            replica,
            seed: stream_seed(self.config.seed, replica, Purpose::Deformed),
            elapsed_secs: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn sample_deformed(config: &EnsembleConfig, replica: u64) -> Result<ComplexMatrix> {
    Ok(DeformedSampler::new(config)?.sample(replica))
}

pub fn spectrum(config: &EnsembleConfig, replica: u64) -> Result<SpectrumSample> {
    DeformedSampler::new(config)?.spectrum(replica)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<C64>,
    pub fingerprint: String,
    pub replica: u64,
    /// Derived stream seed of this replica.
    pub seed: u64,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// Greedy nearest-conjugate matching of a β = 4 spectrum. Each pair is replaced by
/// `(λ̂, conj λ̂)` with `λ̂` the member in the closed upper half-plane.
pub fn pair_conjugates(values: &[C64], tol: f64) -> Result<Vec<C64>> {
    if !values.len().is_multiple_of(2) {
        return Err(Error::Pairing(format!("odd number of eigenvalues ({})", values.len())));
    }
    if let Some(z) = values.iter().find(|z| z.im.abs() < REAL_AXIS_TOL) {
        return Err(Error::Pairing(format!("eigenvalue {z} on the real axis is ambiguous")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.im.total_cmp(&a.im));
    let half = sorted.len() / 2;
    let (upper, lower) = sorted.split_at(half);
    if upper.iter().any(|z| z.im < 0.0) || lower.iter().any(|z| z.im > 0.0) {
        return Err(Error::Pairing("unequal numbers of eigenvalues above and below the real axis".into()));
    }
    let mut used = vec![false; half];
    let mut out = Vec::with_capacity(values.len());
    let mut unmatched = 0;
    for &u in upper {
        let target = u.conj();
        let best = (0..half).filter(|&k| !used[k]).min_by(|&a, &b| (lower[a] - target).norm().total_cmp(&(lower[b] - target).norm()));
        match best {
            Some(k) if (lower[k] - target).norm() <= tol => {
                used[k] = true;
                out.push(u);
                out.push(target);
            }
            _ => unmatched += 1,
        }
    }
    if unmatched > 0 {
        return Err(Error::Pairing(format!("{unmatched} eigenvalues without a conjugate partner within {tol:.3e}")));
    }
    Ok(out)
}

/// Dual ensemble partners: β = 1 ↔ antisymmetric, β = 2 ↔ rectangular, β = 4 ↔ symmetric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    Symmetric,
    Rectangular,
    Antisymmetric,
}

impl DualKind {
    pub fn partner_of(beta: u8) -> Result<Self> {
        match beta {
            1 => Ok(DualKind::Antisymmetric),
            2 => Ok(DualKind::Rectangular),
            4 => Ok(DualKind::Symmetric),
            _ => Err(Error::Config(format!("no dual ensemble for beta = {beta}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSample {
    pub kind: DualKind,
    pub y: ComplexMatrix,
}

/// Parameters of a dual draw; `rows × cols` is `K₂ × K₁` for the rectangular kind and
/// `K × K` otherwise.
#[derive(Clone, Debug)]
pub struct DualSpec {
    pub kind: DualKind,
    pub rows: usize,
    pub cols: usize,
    pub tau: f64,
    pub n: usize,
    pub mean: Option<ComplexMatrix>,
}

impl DualSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !(self.tau > 0.0) {
            return Err(Error::Config(format!("dual ensemble needs N > 0 and tau > 0, got N={}, tau={}", self.n, self.tau)));
        }
        if self.kind != DualKind::Rectangular && self.rows != self.cols {
            return Err(Error::Shape(format!("{:?} dual matrix must be square, got {}x{}", self.kind, self.rows, self.cols)));
        }
        if let Some(y0) = &self.mean {
            if y0.rows() != self.rows || y0.cols() != self.cols {
                return Err(Error::Shape(format!("dual mean is {}x{}, expected {}x{}", y0.rows(), y0.cols(), self.rows, self.cols)));
            }
            let residual = match self.kind {
                DualKind::Symmetric => y0.max_abs_diff(&y0.transpose()),
                DualKind::Antisymmetric => y0.max_abs_diff(&-&y0.transpose()),
                DualKind::Rectangular => 0.0,
            };
            if residual > 0.0 {
                return Err(Error::Structure(format!("dual mean does not have {:?} structure", self.kind)));
            }
        }
        Ok(())
    }
}

pub fn sample_dual_with(spec: &DualSpec, rng: &mut impl Rng) -> ComplexMatrix {
    let nf = spec.n as f64;
    let k = spec.rows;
    let mut y = match spec.kind {
        DualKind::Rectangular => complex_gaussian_matrix(rng, spec.rows, spec.cols, spec.tau / nf),
        DualKind::Symmetric => {
            let mut y = ComplexMatrix::zeros(k, k);
            for i in 0..k {
                y[(i, i)] = complex_normal(rng, 2.0 * spec.tau / nf);
                for j in i + 1..k {
                    let v = complex_normal(rng, spec.tau / nf);
                    y[(i, j)] = v;
                    y[(j, i)] = v;
                }
            }
            y
        }
        DualKind::Antisymmetric => {
            let mut y = ComplexMatrix::zeros(k, k);
            for i in 0..k {
                for j in i + 1..k {
                    let v = complex_normal(rng, spec.tau / (2.0 * nf));
                    y[(i, j)] = v;
                    y[(j, i)] = -v;
                }
            }
            y
        }
    };
    if let Some(y0) = &spec.mean {
        y = &y + y0;
    }
    y
}

pub fn sample_dual(spec: &DualSpec, seed: u64, replica: u64) -> Result<DualSample> {
    spec.validate()?;
    let y = sample_dual_with(spec, &mut stream_rng(seed, replica, Purpose::Dual));
    Ok(DualSample { kind: spec.kind, y })
}

/// Block upper-Hessenberg model of `diag(A₀, 0) + G` for β = 2, `Σ = Γ = I`, with the
/// Gaussian part `G` reduced by unitary conjugation that fixes the first `r` coordinates.
///
/// 1-indexed: `H[i, j] ~ CN(0, τ/N)` for `i < j + r`, `H[j + r, j] = √(τ/N · Gamma(N − j − r + 1))`,
/// zero below. Only the leading `n_eff × n_eff` block is generated; eigenvalues of `A₀`
/// outside the unit disk have eigenvectors decaying like `|θ|^{-k}` along the band, so the
/// truncation is invisible to the outliers once `n_eff` is a few hundred.
#[derive(Clone, Debug)]
pub struct ReducedOutlierModel {
    pub a0: ComplexMatrix,
    pub n: usize,
    pub tau: f64,
    pub n_eff: usize,
}

impl ReducedOutlierModel {
    pub fn new(a0: ComplexMatrix, n: usize, tau: f64, n_eff: usize) -> Result<Self> {
        let r = a0.rows();
        if !a0.is_square() || r == 0 || r > n {
            return Err(Error::Shape(format!("A0 must be square with 0 < r <= N, got {}x{} for N={n}", a0.rows(), a0.cols())));
        }
        if n_eff < r || !(tau > 0.0) {
            return Err(Error::Config(format!("n_eff = {n_eff} must be at least r = {r}, tau positive")));
        }
        Ok(Self { a0, n, tau, n_eff: n_eff.min(n) })
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> Result<ComplexMatrix> {
        let (n, m, r) = (self.n, self.n_eff, self.a0.rows());
        let var = self.tau / n as f64;
        let mut h = ComplexMatrix::zeros(m, m);
        for j in 0..m {
            // rows 0..j+r are free Gaussians; row j+r carries the reflected column norm
            for i in 0..(j + r).min(m) {
                h[(i, j)] = complex_normal(rng, var);
            }
            if j + r < m {
                let dof = (n - j - r) as f64;
                let g: f64 = Gamma::new(dof, 1.0).map_err(|e| Error::Domain(e.to_string()))?.sample(rng);
                h[(j + r, j)] = C64::new((var * g).sqrt(), 0.0);
            }
        }
        for i in 0..r {
            for j in 0..r {
                h[(i, j)] += self.a0[(i, j)];
            }
        }
        Ok(h)
    }

    pub fn eigenvalues(&self, rng: &mut impl Rng) -> Result<Vec<C64>> {
        eigenvalues(&self.sample_with(rng)?)
    }
}

/// Unitary reduction of `X` to block upper-Hessenberg form with `r` sub-diagonals, fixing
/// the first `r` coordinates (so `diag(A₀, 0)` is untouched). Used to cross-check the
/// reduced model.
pub fn block_hessenberg(x: &ComplexMatrix, r: usize) -> ComplexMatrix {
    let n = x.rows();
    let mut h = x.clone();
    for j in 0..n.saturating_sub(r + 1) {
        let start = j + r;
        let col: Vec<C64> = (start..n).map(|i| h[(i, j)]).collect();
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        // reflector (I - 2vv*) mapping col to (-e^{i arg c0}·‖col‖, 0, …)
        let phase = if col[0].norm() > 0.0 { col[0] / col[0].norm() } else { C64::new(1.0, 0.0) };
        let mut v = col.clone();
        v[0] += phase * norm;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut v {
            *z /= vn;
        }
        // left: rows start.., all columns
        for c in 0..n {
            let dot: C64 = (0..v.len()).map(|k| v[k].conj() * h[(start + k, c)]).sum();
            for k in 0..v.len() {
                h[(start + k, c)] -= 2.0 * v[k] * dot;
            }
        }
        // right: columns start.., all rows
        for rr in 0..n {
            let dot: C64 = (0..v.len()).map(|k| h[(rr, start + k)] * v[k]).sum();
            for k in 0..v.len() {
                h[(rr, start + k)] -= 2.0 * dot * v[k].conj();
            }
        }
        for i in start + 1..n {
            h[(i, j)] = ZERO;
        }
    }
    h
}
