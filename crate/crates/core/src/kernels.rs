//! Edge kernels `K_t` (complex and quaternion complex edge) and `K^re_t` (quaternion
//! real edge), and the correlation functions assembled from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{det, hermitian_eigenvalues, pfaffian, pfaffian::check_antisymmetric, ComplexMatrix, C64, ONE};
use crate::specialfn::{f_kernel, gamma, ie, ie_scaled};

/// Predictions with `|value| < CLAMP_TOL` are reported as zero in plotted output.
pub const CLAMP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// Determinantal kernel `K_t`: every β = 2 edge point and β = 4 with `Im z₀ > 0`.
    Complex,
    /// Pfaffian kernel `K^re_t`: β = 4 at `z₀ = ±1`.
    Real,
}

/// Local coordinates at an edge point: `λ = z₀ + ẑ / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrame {
    pub z0: C64,
    pub beta: u8,
    pub t: u32,
    pub scale_factor: f64,
    pub mode: EdgeMode,
}

impl EdgeFrame {
    /// `n` is the matrix dimension parameter N (the β = 4 matrix is 2N×2N).
    pub fn new(z0: C64, beta: u8, t: u32, n: usize) -> Result<Self> {
        if (z0.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("edge point {z0} is not on the unit circle")));
        }
        let (scale_factor, mode) = match beta {
            2 => ((n as f64).sqrt(), EdgeMode::Complex),
            4 => {
                let mode = if z0.im.abs() <= 1e-12 {
                    EdgeMode::Real
                } else if z0.im > 0.0 {
                    EdgeMode::Complex
                } else {
                    return Err(Error::Domain("quaternion edge points need Im z0 >= 0".into()));
                };
                ((2.0 * n as f64).sqrt(), mode)
            }
            _ => return Err(Error::Domain(format!("no edge kernel for beta = {beta}"))),
        };
        let z0 = if mode == EdgeMode::Real { C64::new(z0.re.signum(), 0.0) } else { z0 };
        Ok(Self { z0, beta, t, scale_factor, mode })
    }

    /// `ẑ = scale · (λ - z₀)`.
    pub fn to_local(&self, lambda: C64) -> C64 {
        (lambda - self.z0) * self.scale_factor
    }

    /// Local coordinate rotated so the outward normal points along `+Re`: `z₀⁻¹ ẑ`.
    pub fn to_rotated(&self, lambda: C64) -> C64 {
        self.to_local(lambda) / self.z0
    }
}

/// `K_t(ẑ, ŵ) = √(2/π) Γ(t+1) e^{(ẑ+ŵ̄)²/2} √(IE_{t-1}(-2Re ẑ) IE_{t-1}(-2Re ŵ)) IE_t(ẑ+ŵ̄)`,
/// evaluated through the scaled functions so nothing overflows.
pub fn k_edge(t: u32, z: C64, w: C64) -> Result<C64> {
    let t = t as f64;
    let sz = ie_scaled(t - 1.0, C64::new(-2.0 * z.re, 0.0))?.re;
    let sw = ie_scaled(t - 1.0, C64::new(-2.0 * w.re, 0.0))?.re;
    let st = ie_scaled(t, z + w.conj())?;
    let damp = (-(z.re * z.re + w.re * w.re)).exp();
    Ok(st * ((2.0 / PI).sqrt() * gamma(t + 1.0) * damp * (sz * sw).sqrt()))
}

/// `K^re_t(ẑ, ŵ) = √(IE_{2t-1}(-2Re ẑ) IE_{2t-1}(-2Re ŵ)) f_t(ẑ, ŵ)`.
pub fn k_edge_real(t: u32, z: C64, w: C64) -> Result<C64> {
    let order = 2.0 * t as f64 - 1.0;
    let az = ie(order, C64::new(-2.0 * z.re, 0.0))?.re;
    let aw = ie(order, C64::new(-2.0 * w.re, 0.0))?.re;
    Ok(f_kernel(t, z, w)? * (az * aw).sqrt())
}

/// Gram matrix `[K_t(u_i, u_j)]`.
pub fn gram_matrix(t: u32, points: &[C64]) -> Result<ComplexMatrix> {
    let n = points.len();
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = k_edge(t, points[i], points[j])?;
            g[(i, j)] = v;
            // K_t(w, z) = conj K_t(z, w) by construction; fill the mirror explicitly
            g[(j, i)] = if i == j { C64::new(v.re, 0.0) } else { k_edge(t, points[j], points[i])? };
        }
    }
    Ok(g)
}

fn real_part_checked(value: C64, what: &str) -> Result<f64> {
    if value.im.abs() > 1e-9 * value.norm().max(1.0) {
        return Err(Error::Structure(format!("{what} has imaginary residue {:.3e}", value.im)));
    }
    Ok(value.re)
}

/// `det[K_t(z₀⁻¹ẑ_i, z₀⁻¹ẑ_j)]`, the n-point function of the determinantal edge process.
pub fn predict_correlation_ue(frame: &EdgeFrame, points: &[C64]) -> Result<f64> {
    if frame.mode != EdgeMode::Complex {
        return Err(Error::Domain("determinantal prediction needs a complex-edge frame".into()));
    }
    let rotated: Vec<C64> = points.iter().map(|p| p / frame.z0).collect();
    if rotated.len() == 1 {
        return Ok(k_edge(frame.t, rotated[0], rotated[0])?.re);
    }
    let g = gram_matrix(frame.t, &rotated)?;
    real_part_checked(det(&g)?, "kernel determinant")
}

/// The interleaved `2n × 2n` block matrix with blocks
/// `[[K(u_i,u_j), K(u_i,ū_j)], [K(ū_i,u_j), K(ū_i,ū_j)]]`, `K = K^re_t`.
pub fn real_edge_block_matrix(t: u32, rotated: &[C64]) -> Result<ComplexMatrix> {
    let n = rotated.len();
    let nodes: Vec<C64> = rotated.iter().flat_map(|&u| [u, u.conj()]).collect();
    let mut m = ComplexMatrix::zeros(2 * n, 2 * n);
    for a in 0..2 * n {
        for b in a + 1..2 * n {
            m[(a, b)] = k_edge_real(t, nodes[a], nodes[b])?;
            m[(b, a)] = k_edge_real(t, nodes[b], nodes[a])?;
        }
    }
    Ok(m)
}

/// n-point function of the quaternion edge process.
///
/// Real edge: `∏_k (z₀⁻¹ẑ̄_k - z₀⁻¹ẑ_k) · Pf[K^re_t blocks]`. Complex edge: the
/// determinantal form with `K_t`.
pub fn predict_correlation_se(frame: &EdgeFrame, points: &[C64]) -> Result<f64> {
    if frame.beta != 4 {
        return Err(Error::Domain("quaternion prediction needs a beta = 4 frame".into()));
    }
    match frame.mode {
        EdgeMode::Complex => {
            let rotated: Vec<C64> = points.iter().map(|p| p / frame.z0).collect();
            let g = gram_matrix(frame.t, &rotated)?;
            real_part_checked(det(&g)?, "kernel determinant")
        }
        EdgeMode::Real => {
            let rotated: Vec<C64> = points.iter().map(|p| p / frame.z0).collect();
            let prefactor = rotated.iter().fold(ONE, |acc, u| acc * (u.conj() - u));
            if prefactor.norm() == 0.0 {
                return Ok(0.0);
            }
            let m = real_edge_block_matrix(frame.t, &rotated)?;
            check_antisymmetric(&m, 1e-8).map_err(|e| Error::Structure(format!("real-edge kernel matrix: {e}")))?;
            let pf = pfaffian::pfaffian_with_tol(&m, 1e-8)?.value();
            real_part_checked(prefactor * pf, "Pfaffian prediction")
        }
    }
}

/// Dispatches on the frame's β.
pub fn predict_one_point(frame: &EdgeFrame, zhat: C64) -> Result<f64> {
    match frame.beta {
        2 => predict_correlation_ue(frame, &[zhat]),
        _ => predict_correlation_se(frame, &[zhat]),
    }
}

pub fn clamp_for_plot(value: f64) -> f64 {
    if value.abs() < CLAMP_TOL {
        0.0
    } else {
        value
    }
}

/// Smallest eigenvalue of the Hermitian Gram matrix, scaled by its largest diagonal entry.
pub fn gram_min_eigenvalue(t: u32, points: &[C64]) -> Result<f64> {
    let g = gram_matrix(t, points)?;
    let scale = g.diagonal().iter().map(|z| z.re).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let ev = hermitian_eigenvalues(&g)?;
    Ok(ev[0] / scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub re_zhat: f64,
    pub im_zhat: f64,
    pub prediction: f64,
}

/// One-point predictions on the tensor grid `res × ims` of local coordinates.
pub fn evaluate_grid(frame: &EdgeFrame, res: &[f64], ims: &[f64]) -> Result<Vec<GridPoint>> {
    let mut out = Vec::with_capacity(res.len() * ims.len());
    for &im in ims {
        for &re in res {
            let prediction = predict_one_point(frame, C64::new(re, im))?;
            out.push(GridPoint { re_zhat: re, im_zhat: im, prediction });
        }
    }
    Ok(out)
}
