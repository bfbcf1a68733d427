//! Empirical edge statistics: zoomed histograms near an edge point compared against the
//! kernel predictions, two-sample invariance tests, and outlier fluctuation scaling.
//!
//! Local coordinates are polar. For an eigenvalue `λ` near `z₀` with scale factor `s`,
//! `Re u = s·(|λ| − 1)` (outward normal) and `Im u = s·arg(λ/z₀)` (tangential). To first
//! order `u = z₀⁻¹ẑ`; unlike the Cartesian map the unit circle stays at `Re u = 0` over the
//! whole window, which matters at `N ~ 10³` where `|Im u| = 5` would otherwise displace the
//! edge by `≈ 25/(2s)`. Bins are squares in `u`; their areas are the exact annular-sector
//! areas in ẑ units, `Δ·Δ·(1 + Re u_c/s)`.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::integrals::rank_one_density;
use crate::kernels::{predict_one_point, EdgeFrame, EdgeMode};
use crate::model::{build_deformation, describe_criticality, Deformation, EnsembleConfig, JordanSpec};
use crate::numkit::C64;
use crate::rng::{stream_rng, Purpose};
use crate::sampler::{DeformedSampler, ReducedOutlierModel};

/// Multiplier applied to the quaternion real-edge Pfaffian one-point function so that it
/// is the density per unit ẑ-area of all eigenvalues (both members of every conjugate
/// pair). The Pfaffian expression as written tends to `1/(2π)` in the bulk, while the
/// circular law at scale `√(2N)` gives `1/π`; simulation confirms a uniform factor 2.
pub const REAL_EDGE_NORMALIZATION: f64 = 2.0;

/// Largest admissible window half-width.
pub const MAX_WINDOW: f64 = 6.0;

/// Deep-bulk bins are those with `Re u ≤ BULK_EDGE`.
pub const BULK_EDGE: f64 = -4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeOptions {
    /// Half-width `W` of the square window in local coordinates.
    pub window: f64,
    pub bin_side: f64,
    pub replicas: u64,
    /// Bins are merged along the tangential direction until the expected count reaches this.
    pub min_expected: f64,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self { window: 5.0, bin_side: 0.25, replicas: 200, min_expected: 5.0 }
    }
}

impl EdgeOptions {
    pub fn bins_per_side(&self) -> usize {
        (2.0 * self.window / self.bin_side).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0 && self.window <= MAX_WINDOW) {
            return Err(Error::Config(format!("window must lie in (0, {MAX_WINDOW}], got {}", self.window)));
        }
        if !(self.bin_side > 0.0) {
            return Err(Error::Config(format!("bin side must be positive, got {}", self.bin_side)));
        }
        let k = 2.0 * self.window / self.bin_side;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("bin side {} does not tile the window [-{w}, {w}]", self.bin_side, w = self.window)));
        }
        if self.replicas == 0 {
            return Err(Error::Config("at least one replica is required".into()));
        }
        if !(self.min_expected > 0.0) {
            return Err(Error::Config("min_expected must be positive".into()));
        }
        Ok(())
    }
}

/// Polar local coordinate `u` of `λ` (see the module docs).
pub fn polar_local(frame: &EdgeFrame, lambda: C64) -> C64 {
    let s = frame.scale_factor;
    C64::new(s * (lambda.norm() - 1.0), s * (lambda / frame.z0).arg())
}

/// Inverse of [`polar_local`].
pub fn from_polar_local(frame: &EdgeFrame, u: C64) -> C64 {
    let s = frame.scale_factor;
    frame.z0 * C64::from_polar(1.0 + u.re / s, u.im / s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeBin {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
    pub re_center: f64,
    pub im_center: f64,
    /// Exact area in ẑ units.
    pub area: f64,
    pub count: u64,
    pub empirical: f64,
    pub predicted: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareSummary {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub max_abs_z: f64,
    /// Number of merged groups entering the statistic.
    pub groups: usize,
    /// Bins left out because their whole tangential column fell below the expected-count floor.
    pub excluded_bins: usize,
}

/// Aggregate density over a set of bins against a reference value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCheck {
    pub density: f64,
    pub se: f64,
    pub reference: f64,
    pub zscore: f64,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub frame: EdgeFrame,
    pub window: f64,
    pub bin_side: f64,
    /// Replicas entering the statistics (requested minus discarded).
    pub replica_count: u64,
    pub discarded_replicas: Vec<u64>,
    pub prediction_factor: f64,
    pub bins: Vec<EdgeBin>,
    pub total_collected: u64,
    pub summary: ChiSquareSummary,
    /// Deep-bulk density against `1/π`.
    pub bulk: Option<DensityCheck>,
    /// Bins touching the real axis (quaternion real edge) against the prediction there.
    pub real_axis: Option<DensityCheck>,
    pub warnings: Vec<String>,
}

impl EdgeReport {
    /// Acceptance rule for a single profile: `p > alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.summary.p_value > alpha
    }
}

/// Raw window counts, `counts[i_re · k + i_im]` for `k` bins per side.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeHistogram {
    pub counts: Vec<u64>,
    pub bins_per_side: usize,
    pub replicas_used: u64,
    pub discarded: Vec<u64>,
}

impl EdgeHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Pools two histograms over disjoint replica sets.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.bins_per_side != other.bins_per_side {
            return Err(Error::Shape("histograms have different binnings".into()));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        let discarded = self.discarded.iter().chain(&other.discarded).copied().collect();
        Ok(Self { counts, bins_per_side: self.bins_per_side, replicas_used: self.replicas_used + other.replicas_used, discarded })
    }
}

fn is_discardable(e: &Error) -> bool {
    match e {
        Error::Replica { source, .. } => is_discardable(source),
        Error::Pairing(_) | Error::NoConvergence { .. } => true,
        _ => false,
    }
}

/// Geometric multiplicity at `z₀` implied by the configuration's deformation.
pub fn multiplicity_at(config: &EnsembleConfig, z0: C64) -> Result<u32> {
    match &config.deformation {
        Deformation::None => Ok(0),
        Deformation::Jordan(spec) => Ok(describe_criticality(spec, z0)?.t as u32),
        Deformation::Matrix(_) => {
            Err(Error::Config("edge statistics need the deformation as Jordan data so that t at z0 is defined".into()))
        }
    }
}

/// The edge frame at `z₀` for `config`, with `t` read off the Jordan data.
pub fn frame_for(config: &EnsembleConfig, z0: C64) -> Result<EdgeFrame> {
    if (z0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("edge point {z0} is not on the unit circle")));
    }
    EdgeFrame::new(z0, config.beta, multiplicity_at(config, z0)?, config.n)
}

fn check_frame(config: &EnsembleConfig, frame: &EdgeFrame, opts: &EdgeOptions) -> Result<()> {
    opts.validate()?;
    config.validate()?;
    if frame.beta != config.beta {
        return Err(Error::Config(format!("frame is for beta = {}, ensemble has beta = {}", frame.beta, config.beta)));
    }
    if (frame.z0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("edge point {} is not on the unit circle", frame.z0)));
    }
    if opts.window / frame.scale_factor >= 0.5 {
        return Err(Error::Config(format!("window {} is too wide for scale factor {:.3}; increase N", opts.window, frame.scale_factor)));
    }
    Ok(())
}

/// Histogram of eigenvalues in the square window around `frame.z0`, over replicas
/// `0..opts.replicas`. Replicas whose spectrum could not be computed (eigensolver failure or
/// an unpairable quaternion spectrum) are dropped and listed.
pub fn collect_histogram(config: &EnsembleConfig, frame: &EdgeFrame, opts: &EdgeOptions) -> Result<EdgeHistogram> {
    collect_histogram_range(config, frame, opts, 0..opts.replicas)
}

/// As [`collect_histogram`] over the replica indices in `replicas` (`opts.replicas` is
/// ignored), so that a run can be extended or split without resampling.
pub fn collect_histogram_range(
    config: &EnsembleConfig,
    frame: &EdgeFrame,
    opts: &EdgeOptions,
    replicas: std::ops::Range<u64>,
) -> Result<EdgeHistogram> {
    check_frame(config, frame, &EdgeOptions { replicas: replicas.end.saturating_sub(replicas.start), ..*opts })?;
    let sampler = DeformedSampler::new(config)?;
    let k = opts.bins_per_side();
    let (w, h) = (opts.window, opts.bin_side);
    let requested = replicas.end - replicas.start;
    let per_replica: Vec<(u64, Result<Vec<usize>>)> = replicas
        .into_par_iter()
        .map(|r| {
            let idx = sampler.spectrum(r).map(|s| {
                s.eigenvalues
                    .iter()
                    .filter_map(|&l| {
                        let u = polar_local(frame, l);
                        let (a, b) = ((u.re + w) / h, (u.im + w) / h);
                        (a >= 0.0 && b >= 0.0 && a < k as f64 && b < k as f64).then(|| a as usize * k + b as usize)
                    })
                    .collect()
            });
            (r, idx)
        })
        .collect();
    let mut counts = vec![0u64; k * k];
    let mut discarded = Vec::new();
    for (r, res) in per_replica {
        match res {
            Ok(idx) => idx.into_iter().for_each(|i| counts[i] += 1),
            Err(e) if is_discardable(&e) => {
                warn!("discarding replica {r}: {e}");
                discarded.push(r);
            }
            Err(e) => return Err(e),
        }
    }
    let replicas_used = requested - discarded.len() as u64;
    if replicas_used == 0 {
        return Err(Error::Domain("every replica was discarded".into()));
    }
    Ok(EdgeHistogram { counts, bins_per_side: k, replicas_used, discarded })
}

/// `(re_lo, im_lo, area)` of bin `(i, j)`.
fn bin_geometry(frame: &EdgeFrame, opts: &EdgeOptions, i: usize, j: usize) -> (f64, f64, f64) {
    let h = opts.bin_side;
    let re_lo = -opts.window + i as f64 * h;
    let im_lo = -opts.window + j as f64 * h;
    let area = h * h * (1.0 + (re_lo + h / 2.0) / frame.scale_factor);
    (re_lo, im_lo, area)
}

fn chi_square_sf(chi2: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Ok(1.0);
    }
    let d = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(d.sf(chi2))
}

/// Consecutive index ranges along one tangential column whose weight reaches `min`;
/// a short tail is folded into the previous group. Returns `None` when the whole column
/// falls short.
fn merge_column(weights: &[f64], min: f64) -> Option<Vec<std::ops::Range<usize>>> {
    let mut groups = Vec::new();
    let (mut start, mut acc) = (0, 0.0);
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= min {
            groups.push(start..j + 1);
            start = j + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        {
            let last = groups.last_mut()?;
            last.end = weights.len()
        }
    }
    Some(groups)
}

fn density_check(bins: &[&EdgeBin], replicas: u64, reference: Option<f64>) -> Option<DensityCheck> {
    if bins.is_empty() {
        return None;
    }
    let m = replicas as f64;
    let area: f64 = bins.iter().map(|b| b.area).sum();
    let count: u64 = bins.iter().map(|b| b.count).sum();
    let density = count as f64 / (m * area);
    let predicted = bins.iter().map(|b| b.predicted * b.area).sum::<f64>() / area;
    let reference = reference.unwrap_or(predicted);
    // Poisson error at the reference rate, so an empty region is not a zero-error estimate
    let se = (reference.max(density) / (m * area)).sqrt();
    Some(DensityCheck { density, se, reference, zscore: (density - reference).abs() / se, bins: bins.len() })
}

/// Pearson chi-square of the bin counts against per-bin densities `predicted` (same order
/// as `bins`), merging along the tangential direction. Returns the summary and the number
/// of merged groups.
pub fn pearson_chi_square(
    bins: &[EdgeBin],
    predicted: &[f64],
    k: usize,
    replicas: u64,
    min_expected: f64,
) -> Result<(ChiSquareSummary, usize)> {
    if bins.len() != k * k || predicted.len() != bins.len() {
        return Err(Error::Shape(format!("expected {} bins and predictions", k * k)));
    }
    let m = replicas as f64;
    let (mut chi2, mut groups, mut excluded, mut max_z, mut merged) = (0.0, 0usize, 0usize, 0.0f64, 0usize);
    for i in 0..k {
        let col = &bins[i * k..(i + 1) * k];
        let expected: Vec<f64> = col.iter().zip(&predicted[i * k..(i + 1) * k]).map(|(b, p)| (p * b.area * m).max(0.0)).collect();
        match merge_column(&expected, min_expected) {
            None => excluded += k,
            Some(gs) => {
                for g in gs {
                    if g.len() > 1 {
                        merged += 1;
                    }
                    let e: f64 = expected[g.clone()].iter().sum();
                    let o: f64 = col[g].iter().map(|b| b.count as f64).sum();
                    chi2 += (o - e).powi(2) / e;
                    max_z = max_z.max((o - e).abs() / e.sqrt());
                    groups += 1;
                }
            }
        }
    }
    if groups == 0 {
        return Err(Error::Domain("no bin group reaches the expected-count floor; increase replicas".into()));
    }
    let p_value = chi_square_sf(chi2, groups)?;
    Ok((ChiSquareSummary { chi_square: chi2, dof: groups, p_value, max_abs_z: max_z, groups, excluded_bins: excluded }, merged))
}

/// Exact finite-N density per unit ẑ-area at the bin centres for `A₀ = [a]`, β = 2.
/// Separates finite-N bias from kernel errors when a limit profile is rejected.
pub fn rank_one_reference(frame: &EdgeFrame, n: usize, a: C64, bins: &[EdgeBin]) -> Result<Vec<f64>> {
    if frame.beta != 2 {
        return Err(Error::Domain("the rank-one reference is for beta = 2".into()));
    }
    let s2 = frame.scale_factor * frame.scale_factor;
    bins.iter()
        .map(|b| {
            let lambda = from_polar_local(frame, C64::new(b.re_center, b.im_center));
            Ok(rank_one_density(n, a, lambda)? / s2)
        })
        .collect()
}

fn build_report(frame: &EdgeFrame, opts: &EdgeOptions, hist: EdgeHistogram, factor: f64) -> Result<EdgeReport> {
    let k = hist.bins_per_side;
    let h = opts.bin_side;
    let m = hist.replicas_used as f64;
    let mut bins = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let (re_lo, im_lo, area) = bin_geometry(frame, opts, i, j);
            let center = C64::new(re_lo + h / 2.0, im_lo + h / 2.0);
            // predictions take ẑ in the unrotated frame
            let predicted = factor * predict_one_point(frame, center * frame.z0)?;
            let count = hist.counts[i * k + j];
            bins.push(EdgeBin {
                re_lo,
                re_hi: re_lo + h,
                im_lo,
                im_hi: im_lo + h,
                re_center: center.re,
                im_center: center.im,
                area,
                count,
                empirical: count as f64 / (m * area),
                predicted,
                se: (count as f64).sqrt() / (m * area),
            });
        }
    }

    let predicted: Vec<f64> = bins.iter().map(|b| b.predicted).collect();
    let (summary, merged) = pearson_chi_square(&bins, &predicted, k, hist.replicas_used, opts.min_expected)?;
    let mut warnings = Vec::new();
    if merged > 0 {
        warnings.push(format!("{merged} groups formed by merging bins with expected count < {}", opts.min_expected));
    }
    if summary.excluded_bins > 0 {
        warnings.push(format!("{} bins excluded from the chi-square (expected count < {})", summary.excluded_bins, opts.min_expected));
    }
    for w in &warnings {
        warn!("{w}");
    }

    let bulk_bins: Vec<&EdgeBin> = bins.iter().filter(|b| b.re_hi <= BULK_EDGE + 1e-12).collect();
    let bulk = density_check(&bulk_bins, hist.replicas_used, Some(1.0 / PI));
    let real_axis = if frame.mode == EdgeMode::Real {
        let axis: Vec<&EdgeBin> = bins.iter().filter(|b| b.im_lo.abs() < 1e-12 || b.im_hi.abs() < 1e-12).collect();
        density_check(&axis, hist.replicas_used, None)
    } else {
        None
    };

    let total_collected = hist.total();
    Ok(EdgeReport {
        frame: *frame,
        window: opts.window,
        bin_side: opts.bin_side,
        replica_count: hist.replicas_used,
        discarded_replicas: hist.discarded,
        prediction_factor: factor,
        bins,
        total_collected,
        summary,
        bulk,
        real_axis,
        warnings,
    })
}

/// Report for an already collected histogram; the prediction factor follows the frame.
pub fn report_from_histogram(frame: &EdgeFrame, opts: &EdgeOptions, hist: EdgeHistogram) -> Result<EdgeReport> {
    let factor = if frame.beta == 4 && frame.mode == EdgeMode::Real { REAL_EDGE_NORMALIZATION } else { 1.0 };
    build_report(frame, opts, hist, factor)
}

/// Edge profile of a β = 2 ensemble against `K_t(u, u)`.
pub fn collect_edge(config: &EnsembleConfig, frame: &EdgeFrame, opts: &EdgeOptions) -> Result<EdgeReport> {
    if config.beta != 2 {
        return Err(Error::Config(format!("collect_edge needs beta = 2, got {}", config.beta)));
    }
    let hist = collect_histogram(config, frame, opts)?;
    report_from_histogram(frame, opts, hist)
}

/// Edge profile of a β = 4 ensemble: Pfaffian prediction at `z₀ = ±1`, determinantal at a
/// complex edge point. Both members of each conjugate pair are counted.
pub fn collect_edge_se(config: &EnsembleConfig, frame: &EdgeFrame, opts: &EdgeOptions) -> Result<EdgeReport> {
    if config.beta != 4 {
        return Err(Error::Config(format!("collect_edge_se needs beta = 4, got {}", config.beta)));
    }
    let hist = collect_histogram(config, frame, opts)?;
    report_from_histogram(frame, opts, hist)
}

/// Dispatches on β.
pub fn collect(config: &EnsembleConfig, frame: &EdgeFrame, opts: &EdgeOptions) -> Result<EdgeReport> {
    match config.beta {
        2 => collect_edge(config, frame, opts),
        4 => collect_edge_se(config, frame, opts),
        b => Err(Error::Config(format!("no edge kernel for beta = {b}"))),
    }
}

/// Significance levels of the invariance test.
pub const SAME_T_ALPHA: f64 = 0.01;
pub const DIFFERENT_T_ALPHA: f64 = 0.001;
/// Replicas per ensemble needed for the distinguishability claim.
pub const DISTINGUISH_MIN_REPLICAS: u64 = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleSummary {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub total_a: u64,
    pub total_b: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub t_a: u32,
    pub t_b: u32,
    pub replicas_a: u64,
    pub replicas_b: u64,
    pub summary: TwoSampleSummary,
    /// `p > 0.01` when `t_A = t_B`, `p < 0.001` otherwise.
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Conditional-binomial chi-square of two histograms over the same bins: given the combined
/// count `n_i` of a group, the first sample's share is `Binomial(n_i, M_A/(M_A+M_B))` under
/// equal per-replica intensities. Groups are formed along the tangential direction until
/// `n_i ≥ 2·min_expected`.
pub fn two_sample_chi_square(a: &EdgeHistogram, b: &EdgeHistogram, min_expected: f64) -> Result<TwoSampleSummary> {
    if a.bins_per_side != b.bins_per_side {
        return Err(Error::Shape("histograms have different binnings".into()));
    }
    let k = a.bins_per_side;
    let p = a.replicas_used as f64 / (a.replicas_used + b.replicas_used) as f64;
    let (mut chi2, mut dof) = (0.0, 0usize);
    for i in 0..k {
        let range = i * k..(i + 1) * k;
        let combined: Vec<f64> = a.counts[range.clone()].iter().zip(&b.counts[range.clone()]).map(|(x, y)| (x + y) as f64).collect();
        let Some(groups) = merge_column(&combined, 2.0 * min_expected) else { continue };
        for g in groups {
            let n: f64 = combined[g.clone()].iter().sum();
            let x: f64 = a.counts[range.start + g.start..range.start + g.end].iter().sum::<u64>() as f64;
            chi2 += (x - n * p).powi(2) / (n * p * (1.0 - p));
            dof += 1;
        }
    }
    Ok(TwoSampleSummary { chi_square: chi2, dof, p_value: chi_square_sf(chi2, dof)?, total_a: a.total(), total_b: b.total() })
}

/// Compares the edge profiles of two ensembles at the same `z₀`.
pub fn invariance_test(a: &EnsembleConfig, b: &EnsembleConfig, z0: C64, opts: &EdgeOptions) -> Result<InvarianceReport> {
    if a.beta != b.beta || a.n != b.n {
        return Err(Error::Config("invariance test needs equal beta and N".into()));
    }
    let fa = frame_for(a, z0)?;
    let fb = frame_for(b, z0)?;
    let mut warnings = Vec::new();
    if a.seed == b.seed {
        warnings.push("both ensembles use the same seed; their noise is shared and the samples are not independent".into());
    }
    let ha = collect_histogram(a, &fa, opts)?;
    let hb = collect_histogram(b, &fb, opts)?;
    let summary = two_sample_chi_square(&ha, &hb, opts.min_expected)?;
    let pass = if fa.t == fb.t {
        summary.p_value > SAME_T_ALPHA
    } else {
        if ha.replicas_used.min(hb.replicas_used) < DISTINGUISH_MIN_REPLICAS {
            warnings.push(format!("distinguishability is only asserted with at least {DISTINGUISH_MIN_REPLICAS} replicas per ensemble"));
        }
        summary.p_value < DIFFERENT_T_ALPHA
    };
    for w in &warnings {
        warn!("{w}");
    }
    Ok(InvarianceReport { t_a: fa.t, t_b: fb.t, replicas_a: ha.replicas_used, replicas_b: hb.replicas_used, summary, pass, warnings })
}

/// Ordinary least-squares slope of `y` against `x`, with the error propagated from
/// independent per-point standard errors `sy`.
pub fn fit_slope(x: &[f64], y: &[f64], sy: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let slope = x.iter().zip(y).map(|(a, b)| (a - xm) * b).sum::<f64>() / sxx;
    let var: f64 = x.iter().zip(sy).map(|(a, s)| ((a - xm) / sxx).powi(2) * s * s).sum();
    (slope, var.sqrt())
}

fn validate_ns(ns: &[usize], min_span: f64) -> Result<()> {
    if ns.len() < 4 {
        return Err(Error::Config(format!("need at least 4 dimensions, got {}", ns.len())));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("dimensions must be strictly increasing".into()));
    }
    let span = *ns.last().unwrap() as f64 / ns[0] as f64;
    if span < min_span {
        return Err(Error::Config(format!("dimensions span a factor {span}, need at least {min_span}")));
    }
    Ok(())
}

/// Outlier sweep: a single Jordan block `R_p(θ)` with `|θ| > 1`, β = 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierScalingSpec {
    pub p: usize,
    pub theta: C64,
    pub ns: Vec<usize>,
    #[serde(default = "default_outlier_replicas")]
    pub replicas: u64,
    /// Leading block of the reduced model that is actually generated.
    #[serde(default = "default_n_eff")]
    pub n_eff: usize,
    pub seed: u64,
}

fn default_outlier_replicas() -> u64 {
    300
}

fn default_n_eff() -> usize {
    256
}

impl OutlierScalingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.p) {
            return Err(Error::Config(format!("block size p must be 1, 2 or 3, got {}", self.p)));
        }
        if self.theta.norm() < 1.3 {
            return Err(Error::Config(format!("|theta| = {} is below 1.3", self.theta.norm())));
        }
        if self.replicas < 2 {
            return Err(Error::Config("need at least 2 replicas".into()));
        }
        validate_ns(&self.ns, 16.0)
    }
}

/// Fraction of replicas above which outlier identification is reported as unreliable.
pub const AMBIGUITY_WARN_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairAngle {
    /// Mean of `|arg((λ₁−θ)/(λ₂−θ))|` over all replicas and dimensions.
    pub mean_abs_angle: f64,
    pub mean_cos: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub ns: Vec<usize>,
    pub mean_spread: Vec<f64>,
    pub spread_se: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub expected_slope: f64,
    pub ambiguous_fraction: Vec<f64>,
    pub pair_angle: Option<PairAngle>,
    pub warnings: Vec<String>,
}

impl ScalingFit {
    pub fn passes(&self, tol: f64) -> bool {
        (self.slope - self.expected_slope).abs() <= tol
    }
}

/// The `p` eigenvalues nearest `θ`, nearest first, and whether a `(p+1)`-th one lies
/// within twice the `p`-th distance.
pub fn nearest_outliers(eigs: &[C64], theta: C64, p: usize) -> (Vec<C64>, bool) {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| (a - theta).norm().total_cmp(&(b - theta).norm()));
    let dp = (sorted[p - 1] - theta).norm();
    let ambiguous = sorted.get(p).is_some_and(|z| (z - theta).norm() <= 2.0 * dp);
    sorted.truncate(p);
    (sorted, ambiguous)
}

/// Spread `max_i |λ_i − θ|` of the outliers as a function of N, fitted on a log-log scale.
pub fn outlier_scaling(spec: &OutlierScalingSpec) -> Result<ScalingFit> {
    spec.validate()?;
    let a0 = build_deformation(&JordanSpec::single(spec.theta, &[(spec.p, 1)])?)?;
    let (mut mean_spread, mut spread_se, mut ambiguous_fraction) = (vec![], vec![], vec![]);
    let (mut angle_abs, mut angle_cos, mut angle_n) = (0.0, 0.0, 0.0);
    let mut warnings = Vec::new();
    for (idx, &n) in spec.ns.iter().enumerate() {
        let model = ReducedOutlierModel::new(a0.clone(), n, 1.0, spec.n_eff)?;
        let per: Vec<(f64, bool, Option<f64>)> = crate::mc::par_map(spec.replicas, |r| {
            let mut rng = stream_rng(spec.seed, r, Purpose::Sweep(idx as u32));
            let eigs = model.eigenvalues(&mut rng)?;
            let (near, ambiguous) = nearest_outliers(&eigs, spec.theta, spec.p);
            let spread = near.iter().map(|z| (z - spec.theta).norm()).fold(0.0, f64::max);
            let angle = (spec.p == 2).then(|| ((near[0] - spec.theta) / (near[1] - spec.theta)).arg());
            Ok((spread, ambiguous, angle))
        })?;
        let m = per.len() as f64;
        let mean = per.iter().map(|v| v.0).sum::<f64>() / m;
        let var = per.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let amb = per.iter().filter(|v| v.1).count() as f64 / m;
        for a in per.iter().filter_map(|v| v.2) {
            angle_abs += a.abs();
            angle_cos += a.cos();
            angle_n += 1.0;
        }
        if amb > AMBIGUITY_WARN_FRACTION {
            let w = format!("N = {n}: outlier identification ambiguous in {:.1}% of replicas", 100.0 * amb);
            warn!("{w}");
            warnings.push(w);
        }
        mean_spread.push(mean);
        spread_se.push((var / m).sqrt());
        ambiguous_fraction.push(amb);
    }
    let x: Vec<f64> = spec.ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = mean_spread.iter().map(|v| v.ln()).collect();
    let sy: Vec<f64> = mean_spread.iter().zip(&spread_se).map(|(m, s)| s / m).collect();
    let (slope, slope_se) = fit_slope(&x, &y, &sy);
    let pair_angle = (angle_n > 0.0).then(|| PairAngle { mean_abs_angle: angle_abs / angle_n, mean_cos: angle_cos / angle_n });
    Ok(ScalingFit {
        ns: spec.ns.clone(),
        mean_spread,
        spread_se,
        slope,
        slope_se,
        expected_slope: -1.0 / (2.0 * spec.p as f64),
        ambiguous_fraction,
        pair_angle,
        warnings,
    })
}

/// Critical sweep: a single block `R_p(θ_N)`, `θ_N = z₀ + N^{−1/(4p)}·θ̂`, β = 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalScalingSpec {
    pub p: usize,
    pub z0: C64,
    pub theta_hat: C64,
    pub ns: Vec<usize>,
    pub replicas: u64,
    #[serde(default = "default_critical_window")]
    pub window: f64,
    pub seed: u64,
}

fn default_critical_window() -> f64 {
    5.0
}

impl CriticalScalingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.p) {
            return Err(Error::Config(format!("block size p must be 1, 2 or 3, got {}", self.p)));
        }
        if (self.z0.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("edge point {} is not on the unit circle", self.z0)));
        }
        if !(self.window > 0.0 && self.window <= MAX_WINDOW) {
            return Err(Error::Config(format!("window must lie in (0, {MAX_WINDOW}]")));
        }
        if self.replicas < 2 {
            return Err(Error::Config("need at least 2 replicas".into()));
        }
        validate_ns(&self.ns, 1.0)
    }

    pub fn theta(&self, n: usize) -> C64 {
        self.z0 + self.theta_hat * (n as f64).powf(-1.0 / (4.0 * self.p as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalFit {
    pub ns: Vec<usize>,
    /// Mean normal coordinate `Re u` of the eigenvalues inside the window.
    pub mean_re: Vec<f64>,
    pub se: Vec<f64>,
    /// Slope of `mean_re` against `ln N`.
    pub slope: f64,
    pub slope_se: f64,
    /// `|slope| ≤ 3·slope_se`.
    pub pass: bool,
}

/// Drift of the edge profile under the critical scaling of the outlier position.
pub fn critical_scaling(spec: &CriticalScalingSpec) -> Result<CriticalFit> {
    spec.validate()?;
    let (mut mean_re, mut se) = (vec![], vec![]);
    for (idx, &n) in spec.ns.iter().enumerate() {
        let jordan = JordanSpec::single(spec.theta(n), &[(spec.p, 1)])?;
        let config = EnsembleConfig::new(2, n, Deformation::Jordan(jordan), spec.seed.wrapping_add(idx as u64));
        // the frame only supplies z₀ and the scale; t at z₀ is 0 once θ_N ≠ z₀
        let frame = EdgeFrame::new(spec.z0, 2, 0, n)?;
        let sampler = DeformedSampler::new(&config)?;
        let per: Vec<f64> = crate::mc::par_map(spec.replicas, |r| {
            let s = sampler.spectrum(r)?;
            let inside: Vec<f64> = s
                .eigenvalues
                .iter()
                .map(|&l| polar_local(&frame, l))
                .filter(|u| u.re.abs() <= spec.window && u.im.abs() <= spec.window)
                .map(|u| u.re)
                .collect();
            if inside.is_empty() {
                return Err(Error::Domain(format!("no eigenvalue inside the window at N = {n}")));
            }
            Ok(inside.iter().sum::<f64>() / inside.len() as f64)
        })?;
        let m = per.len() as f64;
        let mean = per.iter().sum::<f64>() / m;
        let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        mean_re.push(mean);
        se.push((var / m).sqrt());
    }
    let x: Vec<f64> = spec.ns.iter().map(|&n| (n as f64).ln()).collect();
    let (slope, slope_se) = fit_slope(&x, &mean_re, &se);
    Ok(CriticalFit { ns: spec.ns.clone(), mean_re, se, slope, slope_se, pass: slope.abs() <= 3.0 * slope_se })
}
