//! Repeated integrals of the complementary error function and the double-integral
//! kernel ingredient `f_n`.
//!
//! `IE_n(z) = 1/(√(2π) Γ(n+1)) ∫₀^∞ vⁿ e^{-(v+z)²/2} dv`, so `IE_0(z) = erfc(z/√2)/2`
//! and `IE_n(z) = 2^{n/2-1} iⁿerfc(z/√2)`.
//!
//! Both the kernels and the quadrature evaluator work with the scaled form
//! `S_n(z) = e^{z²/2} IE_n(z) = 1/(√(2π) Γ(n+1)) ∫₀^∞ vⁿ e^{-v²/2 - zv} dv`,
//! which stays representable where `IE_n` itself under- or overflows.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::numkit::{C64, ZERO};
use crate::quad::{integrate, QuadOptions};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Validated domain of [`ie`].
pub const MAX_RE: f64 = 30.0;
pub const MAX_IM: f64 = 10.0;
/// Inside this radius the power series is used.
pub const SERIES_RADIUS: f64 = 4.0;
/// Domain of [`f_kernel`].
pub const F_KERNEL_MAX_ABS: f64 = 8.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `Γ(x)` for real `x` away from the poles.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    if x == x.floor() && x <= 171.0 {
        return (1..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    ln_gamma(x).exp()
}

/// `1/Γ(x)`, entire: exactly zero at the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x < 0.5 {
        return (PI * x).sin() * gamma(1.0 - x) / PI;
    }
    1.0 / gamma(x)
}

fn check_order(n: f64) -> Result<()> {
    if !(n >= -1.0) || !n.is_finite() {
        return Err(Error::Domain(format!("IE order must be >= -1, got {n}")));
    }
    Ok(())
}

fn check_domain(z: C64) -> Result<()> {
    if !(z.re.abs() <= MAX_RE && z.im.abs() <= MAX_IM) {
        return Err(Error::Domain(format!("IE argument {z} outside |Re| <= {MAX_RE}, |Im| <= {MAX_IM}")));
    }
    Ok(())
}

/// `IE_n(z)` on the validated domain: closed form for `n = -1`, the power series for
/// `|z| <= 4`, contour quadrature otherwise.
pub fn ie(n: f64, z: C64) -> Result<C64> {
    check_order(n)?;
    check_domain(z)?;
    if n == -1.0 {
        return Ok(ie_minus_one(z));
    }
    if z.norm() <= SERIES_RADIUS {
        Ok(ie_series(n, z))
    } else {
        ie_quad(n, z)
    }
}

/// The scaled function `S_n(z) = e^{z²/2} IE_n(z)`.
pub fn ie_scaled(n: f64, z: C64) -> Result<C64> {
    check_order(n)?;
    check_domain(z)?;
    if n == -1.0 {
        return Ok(C64::new(1.0 / SQRT_2PI, 0.0));
    }
    if z.norm() <= SERIES_RADIUS {
        Ok((z * z * 0.5).exp() * ie_series(n, z))
    } else {
        ie_scaled_quad(n, z)
    }
}

fn ie_minus_one(z: C64) -> C64 {
    (-z * z * 0.5).exp() / SQRT_2PI
}

/// Power series `IE_n(z) = 2^{-1-n/2} Σ_k (-√2 z)^k / (k! Γ(1 + (n-k)/2))`.
pub fn ie_series(n: f64, z: C64) -> C64 {
    if n == -1.0 {
        return ie_minus_one(z);
    }
    let w = -z * SQRT_2;
    let mut power = C64::new(1.0, 0.0); // w^k / k!
    let mut sum = ZERO;
    let mut largest: f64 = 0.0;
    let mut previous: f64 = f64::INFINITY;
    for k in 0..400 {
        let term = power * rgamma(1.0 + (n - k as f64) / 2.0);
        sum += term;
        largest = largest.max(term.norm());
        // every other term vanishes for integer n, so look at consecutive pairs
        let tail = term.norm().max(previous);
        if k > 8 && k as f64 > 2.0 * w.norm_sqr() && tail < 1e-18 * largest.max(f64::MIN_POSITIVE) {
            break;
        }
        previous = term.norm();
        power = power * w / (k + 1) as f64;
    }
    sum * 2f64.powf(-1.0 - n / 2.0)
}

fn power(base: C64, n: f64) -> C64 {
    if n == n.floor() && n.abs() < 64.0 {
        base.powi(n as i32)
    } else if base == ZERO {
        ZERO
    } else {
        base.powf(n)
    }
}

/// `∫₀^b s^n g(s) ds`, removing an integrable `s^n` singularity (`-1 < n < 0`) with
/// `s = w^{1/(n+1)}`.
fn integrate_power_weight(n: f64, b: f64, g: impl Fn(f64) -> C64, opts: QuadOptions) -> Result<C64> {
    if b <= 0.0 {
        return Ok(ZERO);
    }
    if n >= 0.0 {
        let breaks = split_points(b);
        let mut acc = ZERO;
        for w in breaks.windows(2) {
            acc += integrate(|s| g(s) * power(C64::new(s, 0.0), n), w[0], w[1], opts)?;
        }
        Ok(acc)
    } else {
        let p = 1.0 / (n + 1.0);
        Ok(integrate(|w| g(w.powf(p)), 0.0, b.powf(n + 1.0), opts)? / (n + 1.0))
    }
}

/// Quadrature evaluation of `IE_n(z)` for `n > -1`.
///
/// With `u = v + z` the defining integral runs from `z` to `z + ∞`; the path is moved to
/// the vertical segment `z → Re z` followed by the real half-line `[Re z, ∞)`. Neither
/// piece suffers the cancellation the straight path has when `|Im z|` is large.
pub fn ie_quad(n: f64, z: C64) -> Result<C64> {
    check_order(n)?;
    if n == -1.0 {
        return Ok(ie_minus_one(z));
    }
    let (x, y) = (z.re, z.im);
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 4000 };
    let mut total = ZERO;
    if y != 0.0 {
        // u = x + i(y - sgn(y) r), r ∈ [0, |y|]; u - z = -i sgn(y) r, du = -i sgn(y) dr
        let dir = C64::new(0.0, -y.signum());
        let phase = power(dir, n);
        let vertical = integrate_power_weight(
            n,
            y.abs(),
            |r| {
                let u = z + dir * r;
                (-u * u * 0.5).exp()
            },
            opts,
        )?;
        total += vertical * phase * dir;
    }
    // real half-line: u ∈ [x, ∞), truncated where e^{-u²/2} is negligible
    let peak = x.max(0.0);
    let upper = peak + 12.0 + 2.0 * n.max(0.0).sqrt() - x;
    let horizontal = if y == 0.0 {
        integrate_power_weight(
            n,
            upper,
            |v| {
                let u = x + v;
                C64::new((-u * u * 0.5).exp(), 0.0)
            },
            opts,
        )?
    } else {
        let breaks = split_points(upper);
        let mut acc = ZERO;
        for w in breaks.windows(2) {
            acc += integrate(
                |v| {
                    let u = x + v;
                    power(C64::new(v, -y), n) * (-u * u * 0.5).exp()
                },
                w[0],
                w[1],
                opts,
            )?;
        }
        acc
    };
    total += horizontal;
    Ok(total * rgamma(n + 1.0) / SQRT_2PI)
}

/// Quadrature evaluation of `S_n(z)`, any order `n > -1`.
///
/// For `Re z >= 0` the scaled integrand `vⁿ e^{-v²/2 - zv}` is integrated directly; on the
/// left half-plane the contour form of [`ie_quad`] is rescaled.
pub fn ie_scaled_quad(n: f64, z: C64) -> Result<C64> {
    check_order(n)?;
    if n == -1.0 {
        return Ok(C64::new(1.0 / SQRT_2PI, 0.0));
    }
    if z.re < 0.0 {
        return Ok((z * z * 0.5).exp() * ie_quad(n, z)?);
    }
    let upper = 12.0 + 2.0 * n.max(0.0).sqrt();
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 4000 };
    let value = integrate_power_weight(n, upper, |v| (-(v * v) * 0.5 - z * v).exp(), opts)?;
    Ok(value * rgamma(n + 1.0) / SQRT_2PI)
}

fn split_points(upper: f64) -> Vec<f64> {
    let pieces = (upper / 4.0).ceil().max(1.0) as usize;
    (0..=pieces).map(|k| upper * k as f64 / pieces as f64).collect()
}

/// `|IE_n(z) - ∫₀^∞ IE_{n-1}(z + v) dv|` with the integral done by quadrature.
pub fn ie_recursion_check(n: f64, z: C64) -> Result<f64> {
    check_order(n - 1.0)?;
    let direct = ie(n, z)?;
    let upper = (-z.re).max(0.0) + 14.0;
    if z.re + upper > MAX_RE {
        return Err(Error::Domain(format!("recursion integral leaves the validated domain at {z}")));
    }
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 4000 };
    let mut first_err = None;
    let integral = integrate(
        |v| match ie(n - 1.0, z + v) {
            Ok(x) => x,
            Err(e) => {
                first_err.get_or_insert(e);
                ZERO
            }
        },
        0.0,
        upper,
        opts,
    )?;
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok((direct - integral).norm())
}

/// The double integral
/// `f_n(z,w) = (1/2π) e^{(z+w)²/2} ∫₀^∞ e^{-v²/2} sinh(v(z-w)) ∫_{v/√2}^∞ (u²-v²)ⁿ e^{-(u+z+w)²/2} du dv`.
///
/// The `e^{(z+w)²/2}` prefactor is folded into the inner integrand. The outer range is
/// truncated at `14 + 2|Re(z-w)|` (14 when `Re z = Re w`), the inner at `14 + |z+w|`.
pub fn f_kernel(n: u32, z: C64, w: C64) -> Result<C64> {
    if z.norm() > F_KERNEL_MAX_ABS || w.norm() > F_KERNEL_MAX_ABS {
        return Err(Error::Domain(format!("f_kernel arguments {z}, {w} exceed modulus {F_KERNEL_MAX_ABS}")));
    }
    if z == w {
        return Ok(ZERO);
    }
    let s = z + w;
    let d = z - w;
    let v_upper = 14.0 + 2.0 * d.re.abs();
    let u_upper = 14.0 + s.norm();
    let inner_opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 2000 };
    let outer_opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-11, max_intervals: 2000 };
    let mut first_err = None;
    let inner = |v: f64| -> Result<C64> {
        let lo = v / SQRT_2;
        if lo >= u_upper {
            return Ok(ZERO);
        }
        let v2 = v * v;
        // split at the peak of e^{-u²/2 - u Re s} so the adaptive rule sees it
        let peak = (-s.re).clamp(lo, u_upper);
        // the polynomial factor changes sign at u = v, so the integral can cancel to ~0;
        // the absolute floor is tied to the largest integrand value
        let size = (-(peak * peak) * 0.5 - s.re * peak).exp() * (u_upper * u_upper).max(1.0).powi(n as i32);
        let opts = QuadOptions { abs_tol: 1e-14 * size, ..inner_opts };
        let mut cuts = [lo, peak, v.clamp(lo, u_upper), u_upper];
        cuts.sort_by(f64::total_cmp);
        let mut acc = ZERO;
        for ab in cuts.windows(2) {
            if ab[1] > ab[0] {
                acc += integrate(|u| (-(u * u) * 0.5 - s * u).exp() * (u * u - v2).powi(n as i32), ab[0], ab[1], opts)?;
            }
        }
        Ok(acc)
    };
    let outer = integrate(
        |v| {
            let weight = (-(v * v) * 0.5).exp();
            if weight == 0.0 {
                return ZERO;
            }
            match inner(v) {
                Ok(g) => (d * v).sinh() * g * weight,
                Err(e) => {
                    first_err.get_or_insert(e);
                    ZERO
                }
            }
        },
        0.0,
        v_upper,
        outer_opts,
    )?;
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(outer / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::function::erf::erfc;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// iⁿerfc(x) by the standard three-term recurrence, starting from
    /// i⁻¹erfc(x) = 2e^{-x²}/√π and i⁰erfc(x) = erfc(x).
    fn inerfc(n: usize, x: f64) -> f64 {
        let mut prev = 2.0 * (-x * x).exp() / PI.sqrt();
        let mut cur = erfc(x);
        for k in 1..=n {
            let next = -x / k as f64 * cur + prev / (2.0 * k as f64);
            prev = cur;
            cur = next;
        }
        cur
    }

    #[test]
    fn gamma_values() {
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(1.5) - PI.sqrt() / 2.0).abs() < 1e-14);
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
        assert!((gamma(7.3) / 1_271.423_633_663_908_5 - 1.0).abs() < 1e-13);
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-3.0), 0.0);
        assert!((rgamma(-2.5) - 1.0 / (-0.945_308_720_482_941_9)).abs() < 1e-13);
    }

    #[test]
    fn special_values() {
        assert!((ie(-1.0, ZERO).unwrap() - c(1.0 / SQRT_2PI, 0.0)).norm() < 1e-15);
        assert!((ie(0.0, ZERO).unwrap() - c(0.5, 0.0)).norm() < 1e-12);
        assert!((ie(1.0, ZERO).unwrap() - c(1.0 / SQRT_2PI, 0.0)).norm() < 1e-12);
        // quadrature route for the same values
        assert!((ie_scaled_quad(0.0, ZERO).unwrap() - c(0.5, 0.0)).norm() < 1e-12);
        assert!((ie_scaled_quad(1.0, ZERO).unwrap() - c(1.0 / SQRT_2PI, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_inerfc_recurrence() {
        for n in 0..=3usize {
            for k in 0..=24 {
                let x = -3.0 + 0.25 * k as f64;
                let expected = 2f64.powf(n as f64 / 2.0 - 1.0) * inerfc(n, x / SQRT_2);
                let got = ie(n as f64, c(x, 0.0)).unwrap();
                assert!((got.re - expected).abs() < 1e-10 && got.im.abs() < 1e-14, "n={n} x={x}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn series_and_quadrature_agree_on_overlap() {
        for n in -1..=5 {
            for r in [2.0, 2.5, 3.0, 3.5, 4.0] {
                for k in 0..12 {
                    let z = C64::from_polar(r, k as f64 * PI / 6.0 + 0.1);
                    let s = ie_series(n as f64, z);
                    let q = if n == -1 { ie_minus_one(z) } else { ie_quad(n as f64, z).unwrap() };
                    let qs = if n == -1 { ie_minus_one(z) } else { (-z * z * 0.5).exp() * ie_scaled_quad(n as f64, z).unwrap() };
                    assert!((s - qs).norm() < 1e-9, "scaled n={n} z={z}: {s} vs {qs}");
                    assert!((s - q).norm() < 1e-9, "n={n} z={z}: {s} vs {q}");
                }
            }
        }
    }

    #[test]
    fn fractional_order_matches_series() {
        for n in [-0.5, -0.9, 0.5, 2.5] {
            for z in [c(0.3, 0.2), c(-1.5, 0.5), c(2.0, -1.0)] {
                let s = ie_series(n, z);
                let q = ie_quad(n, z).unwrap();
                assert!((s - q).norm() < 1e-9, "n={n} z={z}: {s} vs {q}");
            }
        }
    }

    #[test]
    fn recursion_holds() {
        assert!(ie_recursion_check(0.0, ZERO).unwrap() < 1e-7);
        assert!(ie_recursion_check(1.0, c(1.0, 0.0)).unwrap() < 1e-7);
        assert!(ie_recursion_check(3.0, c(-2.0, 0.0)).unwrap() < 1e-7);
        assert!(ie_recursion_check(2.0, c(0.5, 1.5)).unwrap() < 1e-7);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(ie(-1.5, ZERO), Err(Error::Domain(_))));
        assert!(matches!(ie(1.0, c(31.0, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(ie(1.0, c(0.0, 10.5)), Err(Error::Domain(_))));
        assert!(matches!(f_kernel(0, c(9.0, 0.0), ZERO), Err(Error::Domain(_))));
    }

    #[test]
    fn large_arguments_stay_finite() {
        assert!(ie(3.0, c(30.0, 0.0)).unwrap().norm() < 1e-150);
        let big = ie(2.0, c(-30.0, 0.0)).unwrap();
        // IE_n(x) → E[Vⁿ]/n! with V ~ N(-x, 1) as x → -∞
        assert!((big.re / (901.0 / 2.0) - 1.0).abs() < 1e-12);
        assert!(ie(1.0, c(-3.0, 10.0)).unwrap().norm().is_finite());
    }

    /// Midpoint Riemann sum of the defining double integral.
    fn f_bruteforce(n: u32, z: C64, w: C64, h: f64) -> C64 {
        let (s, d) = (z + w, z - w);
        let mut acc = ZERO;
        let mut v = h / 2.0;
        while v < 14.0 {
            let mut inner = ZERO;
            let lo = v / SQRT_2;
            let steps = ((14.0 + s.norm() - lo) / h).ceil() as usize;
            let hu = (14.0 + s.norm() - lo) / steps as f64;
            for k in 0..steps {
                let u = lo + (k as f64 + 0.5) * hu;
                inner += (-(u * u) * 0.5 - s * u).exp() * (u * u - v * v).powi(n as i32) * hu;
            }
            acc += (-(v * v) * 0.5).exp() * (d * v).sinh() * inner * h;
            v += h;
        }
        acc / (2.0 * PI)
    }

    #[test]
    fn f_kernel_matches_bruteforce() {
        let z = c(0.5, 0.0);
        let w = c(-0.5, 0.0);
        let q = f_kernel(0, z, w).unwrap();
        let b = f_bruteforce(0, z, w, 0.004);
        assert!((q - b).norm() < 1e-5, "{q} vs {b}");
        let q1 = f_kernel(1, c(0.3, 0.2), c(0.3, -0.2)).unwrap();
        let b1 = f_bruteforce(1, c(0.3, 0.2), c(0.3, -0.2), 0.004);
        assert!((q1 - b1).norm() < 1e-5, "{q1} vs {b1}");
    }

    #[test]
    fn frozen_high_precision_values() {
        // defining integral evaluated in 60-digit arithmetic
        let cases = [
            (0.0, c(5.0, 3.0), c(-2.220_096_099_457_28e-5, -4.309_189_205_426_121e-6)),
            (1.0, c(-6.0, 2.0), c(6.000_000_001_058_451, -1.999_999_999_960_236_5)),
            (2.0, c(-5.0, -5.8), c(-3.887_168_155_604_073_6, 29.004_012_145_002_882)),
            (3.0, c(4.5, 8.0), c(-142_115.646_246_901_7, -123_470.702_410_348_97)),
            (5.0, c(-12.0, 1.0), c(2072.6, -888.05)),
            (2.0, c(10.0, -9.0), c(-5.974_789_679_643_124e-9, -1.064_904_689_178_323_4e-8)),
            (0.5, c(-4.5, 1.0), c(2.394_243_389_794_132_4, -0.269_474_190_819_900_5)),
            (-0.5, c(6.0, 2.0), c(1.624_727_205_369_424_3e-8, 7.075_321_690_940_493e-9)),
            (4.0, c(0.5, 9.5), c(207339132524138.99127, 52_016_019_463_724.36)),
        ];
        for (n, z, expected) in cases {
            let got = ie(n, z).unwrap();
            assert!((got - expected).norm() <= 1e-10 * expected.norm().max(1.0), "n={n} z={z}: {got} vs {expected}");
        }
    }

    #[test]
    fn minus_one_order_is_positive_gaussian() {
        for k in 0..=40 {
            let x = -10.0 + 0.5 * k as f64;
            let v = ie(-1.0, c(x, 0.0)).unwrap();
            assert!(v.re > 0.0 && v.im == 0.0);
        }
    }

    #[test]
    fn f_kernel_diagonal_vanishes() {
        for n in 0..3 {
            assert_eq!(f_kernel(n, c(0.7, -1.1), c(0.7, -1.1)).unwrap(), ZERO);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn positive_and_decreasing_on_real_axis(n in 0i32..=5, x in -6.0f64..6.0, dx in 0.05f64..2.0) {
            let a = ie(n as f64, c(x, 0.0)).unwrap().re;
            let b = ie(n as f64, c(x + dx, 0.0)).unwrap().re;
            prop_assert!(a > 0.0 && b > 0.0);
            prop_assert!(a > b);
        }

        #[test]
        fn conjugation_symmetry(n in -1i32..=5, re in -8.0f64..8.0, im in -6.0f64..6.0) {
            let z = c(re, im);
            let a = ie(n as f64, z.conj()).unwrap();
            let b = ie(n as f64, z).unwrap().conj();
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        }

        #[test]
        fn f_kernel_antisymmetric_and_conjugate(n in 0u32..=2, zr in -2.0f64..2.0, zi in -2.0f64..2.0, wr in -2.0f64..2.0, wi in -2.0f64..2.0) {
            let (z, w) = (c(zr, zi), c(wr, wi));
            let a = f_kernel(n, z, w).unwrap();
            let b = f_kernel(n, w, z).unwrap();
            prop_assert!((a + b).norm() <= 1e-9 * a.norm().max(1.0));
            let cc = f_kernel(n, z.conj(), w.conj()).unwrap();
            prop_assert!((cc - a.conj()).norm() <= 1e-9 * a.norm().max(1.0));
        }
    }
}
