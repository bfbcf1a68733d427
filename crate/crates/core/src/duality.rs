//! Determinant/Pfaffian observables `Q_β` and two-sided Monte Carlo checks of the
//! duality between the deformed ensembles and their dual Gaussian ensembles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{par_map, z_score, z_score_exact, MCEstimate};
use crate::model::{quaternion_from_blocks, symplectic_unit, Deformation, EnsembleConfig};
use crate::numkit::{kron, log_det, pfaffian_with_tol, ComplexMatrix, LogScaled, C64, I, ONE};
use crate::rng::{stream_rng, Purpose};
use crate::sampler::{sample_dual_with, DeformedSampler, DualKind, DualSpec};

/// Antisymmetry tolerance for the assembled Pfaffian blocks.
pub const ASSEMBLY_TOL: f64 = 1e-10;
/// Acceptance threshold on the two-sided z-score.
pub const Z_THRESHOLD: f64 = 3.0;

/// Spectral parameter matrix `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralParameter {
    /// Explicit `A` of order `(K₁ + K₂)·dim X`; for β = 2 it must be block diagonal
    /// `diag(A₁, A₂)`.
    Matrix(ComplexMatrix),
    /// `A = diag(Z ⊗ I, W* ⊗ I)` with `Z = diag(z)`, `W = diag(w)`.
    Charpoly { z: Vec<C64>, w: Vec<C64> },
}

/// One duality configuration. The dual matrix `Y` is `K₂ × K₁` (β = 2) or `K × K` with
/// `K = K₁ + K₂` (β = 1: antisymmetric, β = 4: symmetric).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityCase {
    pub beta: u8,
    pub n: usize,
    pub k1: usize,
    #[serde(default)]
    pub k2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Full mean `X₀` (N×N, or 2N×2N quaternion for β = 4); zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<ComplexMatrix>,
    pub a: SpectralParameter,
    #[serde(default = "default_samples")]
    pub samples: u64,
    pub seed: u64,
}

fn default_samples() -> u64 {
    100_000
}

impl DualityCase {
    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(2.0 / self.beta as f64)
    }

    /// Side length of `X`.
    pub fn x_dim(&self) -> usize {
        if self.beta == 4 {
            2 * self.n
        } else {
            self.n
        }
    }

    pub fn dual_spec(&self) -> Result<DualSpec> {
        let kind = DualKind::partner_of(self.beta)?;
        let (rows, cols) = match kind {
            DualKind::Rectangular => (self.k2, self.k1),
            _ => (self.k1 + self.k2, self.k1 + self.k2),
        };
        Ok(DualSpec { kind, rows, cols, tau: self.tau(), n: self.n, mean: self.y0.clone() })
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        let deformation = self.x0.clone().map_or(Deformation::None, Deformation::Matrix);
        let mut cfg = EnsembleConfig::new(self.beta, self.n, deformation, self.seed);
        cfg.sigma = self.sigma.clone();
        cfg.gamma = self.gamma.clone();
        cfg.tau = self.tau;
        cfg
    }

    pub fn x0_full(&self) -> ComplexMatrix {
        let d = self.x_dim();
        self.x0.clone().unwrap_or_else(|| ComplexMatrix::zeros(d, d))
    }

    fn sigma_or_identity(&self) -> ComplexMatrix {
        self.sigma.clone().unwrap_or_else(|| ComplexMatrix::identity(self.x_dim()))
    }

    fn gamma_or_identity(&self) -> ComplexMatrix {
        self.gamma.clone().unwrap_or_else(|| ComplexMatrix::identity(self.x_dim()))
    }

    /// The matrix `A`.
    pub fn a_matrix(&self) -> Result<ComplexMatrix> {
        let d = self.x_dim();
        match &self.a {
            SpectralParameter::Matrix(a) => Ok(a.clone()),
            SpectralParameter::Charpoly { z, w } => {
                if z.len() != self.k1 || w.len() != self.k2 {
                    return Err(Error::Shape(format!(
                        "charpoly parameters need {} z and {} w values, got {} and {}",
                        self.k1,
                        self.k2,
                        z.len(),
                        w.len()
                    )));
                }
                let id = ComplexMatrix::identity(d);
                let zz = kron(&ComplexMatrix::diag(z), &id);
                let wc: Vec<C64> = w.iter().map(|v| v.conj()).collect();
                let ww = kron(&ComplexMatrix::diag(&wc), &id);
                Ok(ComplexMatrix::direct_sum(&[&zz, &ww]))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 + self.k2 == 0 {
            return Err(Error::Config("K1 + K2 must be positive".into()));
        }
        if self.beta == 2 && (self.k1 == 0 || self.k2 == 0) {
            return Err(Error::Config("beta = 2 needs K1 >= 1 and K2 >= 1".into()));
        }
        self.ensemble().validate()?;
        self.dual_spec()?.validate()?;
        let d = self.x_dim();
        let order = (self.k1 + self.k2) * d;
        let a = self.a_matrix()?;
        if a.rows() != order || a.cols() != order {
            return Err(Error::Shape(format!("A is {}x{}, expected order {order}", a.rows(), a.cols())));
        }
        if self.beta == 2 {
            let (p, q) = (self.k1 * d, self.k2 * d);
            let off = a.submatrix(0, p, p, q).max_abs().max(a.submatrix(p, 0, q, p).max_abs());
            if off != 0.0 {
                return Err(Error::Shape("beta = 2 needs A = diag(A1, A2)".into()));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("sample budget must be positive".into()));
        }
        Ok(())
    }
}

/// `Q_β(A; X, Y)` in log-scaled form.
pub fn q_observable(case: &DualityCase, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<LogScaled> {
    let a = case.a_matrix()?;
    q_with(case.beta, case.k1, case.k2, &a, x, y, &case.sigma_or_identity(), &case.gamma_or_identity())
}

#[allow(clippy::too_many_arguments)]
fn q_with(
    beta: u8,
    k1: usize,
    k2: usize,
    a: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    sigma: &ComplexMatrix,
    gamma: &ComplexMatrix,
) -> Result<LogScaled> {
    let d = x.rows();
    match beta {
        2 => {
            let (p, q) = (k1 * d, k2 * d);
            let a1 = a.submatrix(0, 0, p, p);
            let a2 = a.submatrix(p, p, q, q);
            let tl = &a1 - &kron(&ComplexMatrix::identity(k1), x);
            let tr = -&kron(&y.adjoint(), sigma);
            let bl = kron(y, gamma);
            let br = &a2 - &kron(&ComplexMatrix::identity(k2), &x.adjoint());
            log_det(&ComplexMatrix::from_blocks(&[vec![&tl, &tr], vec![&bl, &br]])?)
        }
        1 | 4 => {
            let k = k1 + k2;
            let b = a - &kron(&ComplexMatrix::identity(k), x);
            let bt = -&b.transpose();
            let (tl, br) = if beta == 1 {
                (kron(y, sigma), kron(&y.adjoint(), gamma))
            } else {
                let j = symplectic_unit(d / 2);
                (kron(&y.scale(I), &sigma.matmul(&j)), kron(&y.adjoint().scale(I), &j.matmul(gamma)))
            };
            let m = ComplexMatrix::from_blocks(&[vec![&tl, &b], vec![&bt, &br]])?;
            let pf = pfaffian_with_tol(&m, ASSEMBLY_TOL).map_err(|e| Error::Structure(format!("Q{beta} block assembly: {e}")))?;
            let kn = (k * d / if beta == 4 { 2 } else { 1 }) as u64;
            let odd = if beta == 1 { (kn * (kn.saturating_sub(1)) / 2) % 2 == 1 } else { kn % 2 == 1 };
            Ok(if odd { pf.mul_scalar(-ONE) } else { pf })
        }
        _ => Err(Error::Config(format!("beta must be 1, 2 or 4, got {beta}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub zscore: f64,
    /// Sample budget per side of the decisive attempt.
    pub samples: u64,
    pub attempts: u32,
    pub pass: bool,
    /// z-score against the closed form, when one exists (scalar β = 2 case).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form_zscore: Option<f64>,
}

/// `(z − x₀)(w̄ − x̄₀) + (τ + |y₀|²)·σγ` for β = 2, N = K₁ = K₂ = 1.
pub fn scalar_closed_form(case: &DualityCase) -> Option<C64> {
    if case.beta != 2 || case.n != 1 || case.k1 != 1 || case.k2 != 1 {
        return None;
    }
    let a = case.a_matrix().ok()?;
    let x0 = case.x0_full()[(0, 0)];
    let y0 = case.y0.as_ref().map_or(0.0, |y| y[(0, 0)].norm_sqr());
    let s = case.sigma_or_identity()[(0, 0)].re * case.gamma_or_identity()[(0, 0)].re;
    Some((a[(0, 0)] - x0) * (a[(1, 1)] - x0.conj()) + (case.tau() + y0) * s)
}

/// Which left-hand side estimator a two-sided check uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lhs {
    Observable,
    CharacteristicPolynomials,
}

fn two_sided(case: &DualityCase, lhs_kind: Lhs, samples: u64) -> Result<(MCEstimate, MCEstimate)> {
    let sampler = DeformedSampler::new(&case.ensemble())?;
    let a = case.a_matrix()?;
    let (sigma, gamma) = (case.sigma_or_identity(), case.gamma_or_identity());
    let y0 = case.y0.clone().unwrap_or_else(|| {
        let s = case.dual_spec().expect("validated");
        ComplexMatrix::zeros(s.rows, s.cols)
    });
    let lhs_vals = par_map(samples, |r| {
        let x = sampler.sample(r);
        match lhs_kind {
            Lhs::Observable => q_with(case.beta, case.k1, case.k2, &a, &x, &y0, &sigma, &gamma),
            Lhs::CharacteristicPolynomials => charpoly_product(case, &x),
        }
    })?;
    let dual = case.dual_spec()?;
    let x0 = case.x0_full();
    let rhs_vals = par_map(samples, |r| {
        let y = sample_dual_with(&dual, &mut stream_rng(case.seed, r, Purpose::Dual));
        q_with(case.beta, case.k1, case.k2, &a, &x0, &y, &sigma, &gamma)
    })?;
    Ok((MCEstimate::from_log_scaled(&lhs_vals), MCEstimate::from_log_scaled(&rhs_vals)))
}

/// `∏ det(z_i − X) · ∏ det(w̄_j − X*)` straight from `X`.
pub fn charpoly_product(case: &DualityCase, x: &ComplexMatrix) -> Result<LogScaled> {
    let SpectralParameter::Charpoly { z, w } = &case.a else {
        return Err(Error::Config("characteristic-polynomial check needs A of charpoly form".into()));
    };
    let id = ComplexMatrix::identity(x.rows());
    let xa = x.adjoint();
    let mut acc = LogScaled::from_value(ONE);
    for &zi in z {
        acc = acc.mul(&log_det(&(&id.scale(zi) - x))?);
    }
    for &wj in w {
        acc = acc.mul(&log_det(&(&id.scale(wj.conj()) - &xa))?);
    }
    Ok(acc)
}

fn run_with_retry(case: &DualityCase, lhs_kind: Lhs) -> Result<DualityReport> {
    case.validate()?;
    let mut samples = case.samples;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let (lhs, rhs) = two_sided(case, lhs_kind, samples)?;
        let zscore = z_score(&lhs, &rhs);
        if !zscore.is_finite() && !(lhs.is_finite() && rhs.is_finite()) {
            return Err(Error::Structure("non-finite Monte Carlo estimate".into()));
        }
        let pass = zscore <= Z_THRESHOLD;
        if pass || attempts == 2 {
            let closed_form = scalar_closed_form(case);
            let closed_form_zscore = closed_form.map(|c| z_score_exact(&lhs, c).max(z_score_exact(&rhs, c)));
            let pass = pass && closed_form_zscore.is_none_or(|z| z <= Z_THRESHOLD);
            return Ok(DualityReport { lhs, rhs, zscore, samples, attempts, pass, closed_form, closed_form_zscore });
        }
        log::warn!("z-score {zscore:.2} above {Z_THRESHOLD}; rerunning with {} samples", 4 * samples);
        samples *= 4;
    }
}

/// `E_X Q(A; X, Y₀)` against `E_Y Q(A; X₀, Y)`; one rerun with 4× samples before failing.
pub fn verify_duality(case: &DualityCase) -> Result<DualityReport> {
    run_with_retry(case, Lhs::Observable)
}

/// `E_X ∏det(z_i − X)∏det(w̄_j − X*)` against `E_Y Q(A; X₀, Y)` with `Y₀ = 0`.
pub fn verify_charpoly(case: &DualityCase) -> Result<DualityReport> {
    if !matches!(case.a, SpectralParameter::Charpoly { .. }) {
        return Err(Error::Config("charpoly check needs A given by z and w".into()));
    }
    if case.y0.as_ref().is_some_and(|y| y.max_abs() != 0.0) {
        return Err(Error::Config("charpoly check needs Y0 = 0".into()));
    }
    run_with_retry(case, Lhs::CharacteristicPolynomials)
}

/// Random Hermitian positive definite matrix `I + c·GG*/d` with the β structure.
pub fn random_covariance(beta: u8, n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = random_structured(beta, n, rng);
    let d = g.rows();
    let gg = g.matmul(&g.adjoint()).scale_real(0.5 / d as f64);
    let mut s = &ComplexMatrix::identity(d) + &gg;
    // exact Hermitian symmetry so downstream checks see no round-off asymmetry
    for i in 0..d {
        s[(i, i)] = C64::new(s[(i, i)].re, 0.0);
        for j in i + 1..d {
            s[(j, i)] = s[(i, j)].conj();
        }
    }
    if beta == 4 {
        let a = s.submatrix(0, 0, n, n);
        let b = s.submatrix(0, n, n, n);
        s = quaternion_from_blocks(&a, &b).expect("square blocks");
    }
    s
}

/// Standard Gaussian matrix with the β structure (real, complex, or quaternion 2N×2N).
pub fn random_structured(beta: u8, n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let cn = |rng: &mut _| crate::sampler::complex_normal(rng, 1.0);
    match beta {
        1 => ComplexMatrix::from_fn(n, n, |_, _| C64::new(cn(rng).re * std::f64::consts::SQRT_2, 0.0)),
        2 => ComplexMatrix::from_fn(n, n, |_, _| cn(rng)),
        _ => {
            let a = ComplexMatrix::from_fn(n, n, |_, _| cn(rng));
            let b = ComplexMatrix::from_fn(n, n, |_, _| cn(rng));
            quaternion_from_blocks(&a, &b).expect("square blocks")
        }
    }
}

/// Rank-one mean `s·u vᵗ`-type matrix with the β structure.
pub fn random_rank_one_mean(beta: u8, n: usize, scale: f64, rng: &mut impl Rng) -> ComplexMatrix {
    let cn = |rng: &mut _| crate::sampler::complex_normal(rng, 1.0);
    let real = beta == 1;
    let u: Vec<C64> = (0..n).map(|_| if real { C64::new(cn(rng).re, 0.0) } else { cn(rng) }).collect();
    let v: Vec<C64> = (0..n).map(|_| if real { C64::new(cn(rng).re, 0.0) } else { cn(rng) }).collect();
    let m = ComplexMatrix::from_fn(n, n, |i, j| u[i] * v[j].conj() * (scale / n as f64));
    if beta == 4 {
        quaternion_from_blocks(&m, &ComplexMatrix::zeros(n, n)).expect("square blocks")
    } else {
        m
    }
}

/// Random dual mean with the structure of the dual partner of `beta`.
pub fn random_dual_mean(spec: &DualSpec, scale: f64, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(spec.rows, spec.cols, |_, _| crate::sampler::complex_normal(rng, scale * scale));
    match spec.kind {
        DualKind::Rectangular => g,
        DualKind::Symmetric => (&g + &g.transpose()).scale_real(0.5),
        DualKind::Antisymmetric => (&g - &g.transpose()).scale_real(0.5),
    }
}

/// The seeded duality suite: random Σ, Γ, rank-one `X₀`, dual mean `Y₀` and diagonal `A`.
pub fn random_case(beta: u8, n: usize, k1: usize, k2: usize, samples: u64, seed: u64) -> DualityCase {
    let mut rng = stream_rng(seed, 0, Purpose::Other(17));
    let d = if beta == 4 { 2 * n } else { n };
    let k = k1 + k2;
    let mut diag: Vec<C64> = Vec::with_capacity(k * d);
    for _ in 0..k * d {
        diag.push(C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    }
    let a = ComplexMatrix::diag(&diag);
    let mut case = DualityCase {
        beta,
        n,
        k1,
        k2,
        tau: None,
        x0: Some(random_rank_one_mean(beta, n, 1.0, &mut rng)),
        y0: None,
        sigma: Some(random_covariance(beta, n, &mut rng)),
        gamma: Some(random_covariance(beta, n, &mut rng)),
        a: SpectralParameter::Matrix(a),
        samples,
        seed,
    };
    if beta == 1 {
        case.sigma = case.sigma.map(|s| real_part(&s));
        case.gamma = case.gamma.map(|s| real_part(&s));
    }
    let spec = case.dual_spec().expect("valid beta");
    case.y0 = Some(random_dual_mean(&spec, 0.5, &mut rng));
    case
}

/// The seeded characteristic-polynomial suite: as [`random_case`] with `Y₀ = 0` and `A`
/// given by random `z ∈ C^{K₁}`, `w ∈ C^{K₂}` in the square `|Re|, |Im| < 1`.
pub fn random_charpoly_case(beta: u8, n: usize, k1: usize, k2: usize, samples: u64, seed: u64) -> DualityCase {
    let mut case = random_case(beta, n, k1, k2, samples, seed);
    let mut rng = stream_rng(seed, 1, Purpose::Other(17));
    let mut draw = |k: usize| -> Vec<C64> { (0..k).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect() };
    let z = draw(k1);
    let w = draw(k2);
    case.a = SpectralParameter::Charpoly { z, w };
    case.y0 = None;
    case
}

/// `(β, N, K₁, K₂)` of the seeded suites. β = 1 and β = 4 use `K = K₁` and `K₂ = 0`.
pub const SUITE_SIZES: [(u8, usize, usize, usize); 6] =
    [(2, 1, 1, 1), (2, 3, 1, 1), (2, 3, 2, 1), (1, 2, 1, 0), (1, 3, 2, 0), (4, 2, 1, 0)];

/// The seeded duality suite, restricted to `beta` when given.
pub fn standard_suite(beta: Option<u8>, samples: u64, seed: u64) -> Vec<DualityCase> {
    SUITE_SIZES
        .iter()
        .enumerate()
        .filter(|(_, s)| beta.is_none_or(|b| b == s.0))
        .map(|(i, &(b, n, k1, k2))| random_case(b, n, k1, k2, samples, seed + i as u64))
        .collect()
}

/// The seeded characteristic-polynomial suite at the same sizes.
pub fn standard_charpoly_suite(beta: Option<u8>, samples: u64, seed: u64) -> Vec<DualityCase> {
    SUITE_SIZES
        .iter()
        .enumerate()
        .filter(|(_, s)| beta.is_none_or(|b| b == s.0))
        .map(|(i, &(b, n, k1, k2))| random_charpoly_case(b, n, k1, k2, samples, seed + i as u64))
        .collect()
}

fn real_part(m: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| C64::new(m[(i, j)].re, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::det;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn base(beta: u8, n: usize, k1: usize, k2: usize, a: SpectralParameter) -> DualityCase {
        DualityCase { beta, n, k1, k2, tau: None, x0: None, y0: None, sigma: None, gamma: None, a, samples: 1000, seed: 1 }
    }

    #[test]
    fn scalar_q2() {
        let (z, w) = (c(0.3, 0.2), c(-0.1, 0.7));
        let case = base(2, 1, 1, 1, SpectralParameter::Charpoly { z: vec![z], w: vec![w] });
        let x = ComplexMatrix::scalar(c(0.5, -0.4));
        let y = ComplexMatrix::scalar(c(1.1, 0.6));
        let q = q_observable(&case, &x, &y).unwrap().value();
        let expected = (z - x[(0, 0)]) * (w.conj() - x[(0, 0)].conj()) + y[(0, 0)].norm_sqr();
        assert!((q - expected).norm() < 1e-14);
    }

    #[test]
    fn q2_with_zero_y_factorizes() {
        let mut rng = stream_rng(3, 0, Purpose::Other(0));
        let x = random_structured(2, 3, &mut rng);
        let case = base(2, 3, 2, 1, SpectralParameter::Charpoly { z: vec![c(0.5, 0.1), c(-0.2, 0.3)], w: vec![c(0.1, -0.9)] });
        let q = q_observable(&case, &x, &ComplexMatrix::zeros(1, 2)).unwrap().value();
        let direct = charpoly_product(&case, &x).unwrap().value();
        assert!((q - direct).norm() < 1e-12 * direct.norm().max(1.0), "{q} vs {direct}");
    }

    #[test]
    fn q1_with_zero_y_is_determinant() {
        let mut rng = stream_rng(4, 0, Purpose::Other(0));
        let x = random_structured(1, 2, &mut rng);
        let z = c(0.7, 0.2);
        let case = base(1, 2, 1, 0, SpectralParameter::Matrix(ComplexMatrix::identity(2).scale(z)));
        let q = q_observable(&case, &x, &ComplexMatrix::zeros(1, 1)).unwrap().value();
        let d = det(&(&ComplexMatrix::identity(2).scale(z) - &x)).unwrap();
        assert!((q - d).norm() < 1e-13, "{q} vs {d}");
        // K = 3: sign (−1)^{KN(KN−1)/2} with KN = 6 is odd
        let x3 = random_structured(1, 2, &mut rng);
        let a3 = ComplexMatrix::diag(&[c(0.1, 0.0), c(0.2, 0.1), c(-0.3, 0.0), c(0.4, 0.4), c(0.0, 1.0), c(1.0, 0.0)]);
        let case3 = base(1, 2, 3, 0, SpectralParameter::Matrix(a3.clone()));
        let q3 = q_observable(&case3, &x3, &ComplexMatrix::zeros(3, 3)).unwrap().value();
        let d3 = det(&(&a3 - &kron(&ComplexMatrix::identity(3), &x3))).unwrap();
        assert!((q3 - d3).norm() < 1e-12 * d3.norm().max(1.0));
    }

    #[test]
    fn q4_with_zero_y_is_determinant() {
        let mut rng = stream_rng(5, 0, Purpose::Other(0));
        for k in 1..=2 {
            let x = random_structured(4, 2, &mut rng);
            let diag: Vec<C64> = (0..4 * k).map(|i| c(0.1 * i as f64, -0.2)).collect();
            let a = ComplexMatrix::diag(&diag);
            let case = base(4, 2, k, 0, SpectralParameter::Matrix(a.clone()));
            let q = q_observable(&case, &x, &ComplexMatrix::zeros(k, k)).unwrap().value();
            let d = det(&(&a - &kron(&ComplexMatrix::identity(k), &x))).unwrap();
            assert!((q - d).norm() < 1e-12 * d.norm().max(1.0), "K={k}: {q} vs {d}");
        }
    }

    #[test]
    fn small_cases_by_hand() {
        // β = 1, N = 1, K = 2: Q₁ = det(A − x) + |y|²
        let a = ComplexMatrix::from_rows(&[vec![c(0.3, 0.1), c(0.2, 0.0)], vec![c(-0.5, 0.2), c(0.9, -0.3)]]).unwrap();
        let case = base(1, 1, 2, 0, SpectralParameter::Matrix(a.clone()));
        let x = ComplexMatrix::scalar(c(0.4, 0.0));
        let yv = c(0.6, -0.8);
        let y = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), yv], vec![-yv, c(0.0, 0.0)]]).unwrap();
        let q = q_observable(&case, &x, &y).unwrap().value();
        let expected = det(&(&a - &ComplexMatrix::identity(2).scale(x[(0, 0)]))).unwrap() + yv.norm_sqr();
        assert!((q - expected).norm() < 1e-14, "{q} vs {expected}");
        // β = 4, N = 1, K = 1: Q₄ = det(A − X) + |y|²
        let a4 = ComplexMatrix::from_rows(&[vec![c(0.3, 0.1), c(0.2, 0.0)], vec![c(-0.5, 0.2), c(0.9, -0.3)]]).unwrap();
        let case4 = base(4, 1, 1, 0, SpectralParameter::Matrix(a4.clone()));
        let x4 = quaternion_from_blocks(&ComplexMatrix::scalar(c(0.2, 0.5)), &ComplexMatrix::scalar(c(-0.1, 0.3))).unwrap();
        let y4 = ComplexMatrix::scalar(c(0.7, 0.1));
        let q4 = q_observable(&case4, &x4, &y4).unwrap().value();
        let expected4 = det(&(&a4 - &x4)).unwrap() + y4[(0, 0)].norm_sqr();
        assert!((q4 - expected4).norm() < 1e-14, "{q4} vs {expected4}");
    }

    #[test]
    fn assembly_sign_bug_is_detected() {
        let mut case = base(1, 1, 2, 0, SpectralParameter::Matrix(ComplexMatrix::identity(2)));
        case.sigma = Some(ComplexMatrix::scalar(ONE));
        // a non-antisymmetric Y breaks the assembled block matrix
        let y = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let err = q_observable(&case, &ComplexMatrix::scalar(ONE), &y).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn scalar_duality_and_closed_form() {
        let mut case = base(2, 1, 1, 1, SpectralParameter::Charpoly { z: vec![c(0.2, 0.4)], w: vec![c(-0.3, 0.1)] });
        case.tau = Some(1.0);
        case.x0 = Some(ComplexMatrix::scalar(c(0.3, 0.1)));
        case.samples = 20_000;
        let r = verify_duality(&case).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.closed_form_zscore.unwrap() <= 3.0);
    }

    #[test]
    fn charpoly_matches_duality_at_zero_y0() {
        let case = DualityCase {
            samples: 20_000,
            x0: Some(ComplexMatrix::diag(&[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)])),
            ..base(2, 3, 1, 1, SpectralParameter::Charpoly { z: vec![c(0.4, 0.2)], w: vec![c(0.4, 0.2)] })
        };
        let a = verify_charpoly(&case).unwrap();
        let b = verify_duality(&case).unwrap();
        assert!(a.pass && b.pass, "{a:?} {b:?}");
        assert!(z_score(&a.lhs, &b.lhs) < 4.0);
        // z = w: E|det(z − X)|² is real positive
        assert!(a.lhs.mean.re > 0.0);
    }

    #[test]
    fn small_random_suite() {
        for (beta, n, k1, k2) in [(2, 2, 1, 1), (1, 2, 2, 0), (4, 1, 1, 0), (4, 1, 2, 0)] {
            let case = random_case(beta, n, k1, k2, 20_000, 40 + beta as u64);
            let r = verify_duality(&case).unwrap();
            assert!(r.pass, "beta={beta} N={n} K=({k1},{k2}): {r:?}");
        }
    }

    #[test]
    fn case_json_round_trip() {
        let case = random_case(2, 2, 1, 1, 10, 3);
        let s = serde_json::to_string(&case).unwrap();
        let back: DualityCase = serde_json::from_str(&s).unwrap();
        assert_eq!(case, back);
        let bad = r#"{"beta":2,"n":1,"k1":1,"k2":1,"a":{"charpoly":{"z":[[0,0]],"w":[[0,0]]}},"seed":1,"extra":1}"#;
        assert!(serde_json::from_str::<DualityCase>(bad).is_err());
    }
}
