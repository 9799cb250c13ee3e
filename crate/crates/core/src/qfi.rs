//! Quantum Fisher information of one measurement window.
//!
//! For a Gaussian state whose mean depends linearly on the force amplitude
//! while the covariance does not, the QFI is the quadratic form
//! H = b^T sigma^{-1} b of the response vector with the inverse covariance.
//! The module also provides two independent consistency routes: the QFI
//! extracted from the Uhlmann fidelity between neighbouring amplitudes, and
//! the sensitivity of the best homodyne (linear quadrature) measurement,
//! which saturates 1/H for Gaussian states.

use crate::dynamics::{
    covariance_markovian, markovian_response, Bath, Cov2, CovarianceState, ForceShape,
    SqueezeParams, WindowTables,
};
use crate::error::{Error, Result};
use std::f64::consts::PI;

const DET_GUARD: f64 = 1e-14;
/// Golden-ratio constants for the bounded 1-D maximizer.
const PHI: f64 = 1.618_033_988_749_895;
const RESP: f64 = 2.0 - PHI;

/// H = b^T sigma^{-1} b for the response vector (bx, bp).
pub fn qfi(sigma: &Cov2, bx: f64, bp: f64) -> Result<f64> {
    let det = sigma.det();
    if det <= DET_GUARD || sigma.xx <= 0.0 {
        return Err(Error::NotPositiveDefinite { det });
    }
    Ok((sigma.pp * bx * bx - 2.0 * sigma.xp * bx * bp + sigma.xx * bp * bp) / det)
}

/// Uhlmann fidelity of two single-mode Gaussian states with means `u1`, `u2`
/// and covariances `sigma1`, `sigma2` (vacuum normalization det >= 1/4).
pub fn gaussian_fidelity(
    sigma1: &Cov2,
    u1: (f64, f64),
    sigma2: &Cov2,
    u2: (f64, f64),
) -> Result<f64> {
    let (d1, d2) = (sigma1.det(), sigma2.det());
    let floor = 0.25 * (1.0 - 1e-9);
    if d1 < floor || d2 < floor {
        return Err(Error::NotPositiveDefinite { det: d1.min(d2) });
    }
    let sum = Cov2 {
        xx: sigma1.xx + sigma2.xx,
        xp: sigma1.xp + sigma2.xp,
        pp: sigma1.pp + sigma2.pp,
    };
    let gamma = sum.det();
    if gamma <= DET_GUARD {
        return Err(Error::Singular("sum of covariances"));
    }
    let pi_term = ((d1 - 0.25) * (d2 - 0.25)).max(0.0);
    let (dx, dp) = (u1.0 - u2.0, u1.1 - u2.1);
    let quad_form = (sum.pp * dx * dx - 2.0 * sum.xp * dx * dp + sum.xx * dp * dp) / gamma;
    let denom = (gamma + 4.0 * pi_term).sqrt() - (4.0 * pi_term).sqrt();
    let f_sq = (-0.5 * quad_form).exp() / denom;
    if !f_sq.is_finite() {
        return Err(Error::NonFinite("fidelity".into()));
    }
    Ok(f_sq.min(1.0).sqrt())
}

/// QFI recovered from the fidelity between the states at amplitudes `f0` and
/// `f0 + df` (same covariance, means f*b): H = 4 (1 - F^2) / df^2. Agrees
/// with `qfi` up to an O(df^2 H / 8) discretization bias.
pub fn qfi_from_fidelity(sigma: &Cov2, bx: f64, bp: f64, f0: f64, df: f64) -> Result<f64> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::InvalidParameter { name: "df", reason: format!("got {df}") });
    }
    let u1 = (f0 * bx, f0 * bp);
    let f1 = f0 + df;
    let u2 = (f1 * bx, f1 * bp);
    let f = gaussian_fidelity(sigma, u1, sigma, u2)?;
    Ok(4.0 * (1.0 - f * f) / (df * df))
}

/// Variance of the amplitude estimate from the optimal homodyne quadrature
/// w = sigma^{-1} b: delta^2 f = (w^T sigma w) / (b^T w)^2. For Gaussian
/// states this equals 1/H exactly.
pub fn homodyne_sensitivity(sigma: &Cov2, bx: f64, bp: f64) -> Result<f64> {
    let det = sigma.det();
    if det <= DET_GUARD || sigma.xx <= 0.0 {
        return Err(Error::NotPositiveDefinite { det });
    }
    let wx = (sigma.pp * bx - sigma.xp * bp) / det;
    let wp = (-sigma.xp * bx + sigma.xx * bp) / det;
    let var = sigma.xx * wx * wx + 2.0 * sigma.xp * wx * wp + sigma.pp * wp * wp;
    let slope = bx * wx + bp * wp;
    if slope.abs() <= f64::MIN_POSITIVE.sqrt() {
        return Err(Error::ZeroResponse);
    }
    Ok(var / (slope * slope))
}

/// Dynamical branch an optimization runs against.
#[derive(Debug, Clone, Copy)]
pub enum WindowContext<'a> {
    /// Free oscillator.
    Ideal,
    /// Memoryless damping toward a thermal state.
    Markovian { gamma: f64, nbar: f64 },
    /// Exact dynamics via precomputed window tables.
    NonMarkovian(&'a WindowTables),
}

/// Result of a single-window QFI evaluation at the optimal squeezing angle.
#[derive(Debug, Clone, Copy)]
pub struct QfiResult {
    pub h: f64,
    pub theta: f64,
    pub window: f64,
    /// Sensitivity delta^2 f of the optimal homodyne readout; equals 1/h.
    pub sensitivity: f64,
    pub state: CovarianceState,
}

/// Maximize the window QFI over the squeezing angle for fixed magnitude `r`.
///
/// The free and Markovian branches use the closed form: the squeezed
/// quadrature, after rotating for the window duration, must align with the
/// response vector, giving theta = window - atan2(bx, bp) (mod pi). The
/// exact branch scans 64 angles and refines the best by golden section.
pub fn optimize_theta(
    ctx: &WindowContext,
    shape: &ForceShape,
    r: f64,
    start: f64,
    window: f64,
) -> Result<QfiResult> {
    match *ctx {
        WindowContext::Ideal => closed_form_theta(Bath::Ideal, 0.0, 0.0, shape, r, start, window),
        WindowContext::Markovian { gamma, nbar } => {
            closed_form_theta(Bath::Markovian, gamma, nbar, shape, r, start, window)
        }
        WindowContext::NonMarkovian(tables) => scan_theta(tables, shape, r, start, window),
    }
}

fn closed_form_theta(
    bath: Bath,
    gamma: f64,
    nbar: f64,
    shape: &ForceShape,
    r: f64,
    start: f64,
    window: f64,
) -> Result<QfiResult> {
    let (bx, bp) = markovian_response(shape, gamma, start, window)?;
    if bx * bx + bp * bp < 1e-28 {
        return Err(Error::ZeroResponse);
    }
    let theta = (window - bx.atan2(bp)).rem_euclid(PI);
    let sq = SqueezeParams::new(r, theta)?;
    let sigma = covariance_markovian(gamma, nbar, sq, window);
    let h = qfi(&sigma, bx, bp)?;

    // The closed-form angle must dominate a dense scan; cheap enough to keep
    // as a development-time check on every call.
    #[cfg(debug_assertions)]
    for k in 0..64 {
        let probe = SqueezeParams { r, theta: k as f64 * PI / 64.0 };
        let h_probe = qfi(&covariance_markovian(gamma, nbar, probe, window), bx, bp)?;
        debug_assert!(
            h >= h_probe * (1.0 - 1e-8),
            "scan angle {} beat the closed form: {h_probe} > {h}",
            probe.theta
        );
    }

    Ok(QfiResult {
        h,
        theta,
        window,
        sensitivity: homodyne_sensitivity(&sigma, bx, bp)?,
        state: CovarianceState {
            start,
            window,
            sigma,
            bx,
            bp,
            squeeze: sq,
            bath,
            shape: shape.tag(),
        },
    })
}

fn scan_theta(
    tables: &WindowTables,
    shape: &ForceShape,
    r: f64,
    start: f64,
    window: f64,
) -> Result<QfiResult> {
    let idx = tables.index_of(window)?;
    let (bx, bp) = tables.response(shape, start, idx);
    if bx * bx + bp * bp < 1e-28 {
        return Err(Error::ZeroResponse);
    }
    let eval = |theta: f64| -> Result<f64> {
        let sq = SqueezeParams { r, theta };
        qfi(&tables.sigma_nm(idx, sq), bx, bp)
    };

    const COARSE: usize = 64;
    let mut best_k = 0;
    let mut best_h = f64::NEG_INFINITY;
    for k in 0..COARSE {
        let h = eval(k as f64 * PI / COARSE as f64)?;
        if h > best_h {
            best_h = h;
            best_k = k;
        }
    }
    // The maximum of the pi-periodic profile lies within one coarse cell of
    // the best sample; golden-section refine that bracket.
    let center = best_k as f64 * PI / COARSE as f64;
    let cell = PI / COARSE as f64;
    let (theta, h) = golden_section_max(&eval, center - cell, center + cell, 1e-6)?;
    let theta = theta.rem_euclid(PI);
    let sq = SqueezeParams::new(r, theta)?;
    let sigma = tables.sigma_nm(idx, sq);
    Ok(QfiResult {
        h,
        theta,
        window,
        sensitivity: homodyne_sensitivity(&sigma, bx, bp)?,
        state: CovarianceState {
            start,
            window,
            sigma,
            bx,
            bp,
            squeeze: sq,
            bath: Bath::NonMarkovian,
            shape: shape.tag(),
        },
    })
}

/// Golden-section search for the maximum of `f` on [a, b] to width `tol`.
fn golden_section_max(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    let (mut a, mut b) = (a, b);
    let mut x1 = a + RESP * (b - a);
    let mut x2 = b - RESP * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - RESP * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + RESP * (b - a);
            f1 = f(x1)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, f(mid)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn vacuum_with_unit_response_gives_four() {
        let sigma = Cov2 { xx: 0.5, xp: 0.0, pp: 0.5 };
        assert!((qfi(&sigma, 1.0, 1.0).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn fidelity_of_identical_states_is_one() {
        let sigma = Cov2 { xx: 1.3, xp: 0.2, pp: 0.9 };
        let f = gaussian_fidelity(&sigma, (0.4, -1.0), &sigma, (0.4, -1.0)).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_thermal_against_vacuum() {
        // F(thermal nbar, vacuum) = 1/sqrt(nbar + 1); nbar = 1 gives 2^{-1/2}.
        let thermal = Cov2 { xx: 1.5, xp: 0.0, pp: 1.5 };
        let vacuum = Cov2 { xx: 0.5, xp: 0.0, pp: 0.5 };
        let f = gaussian_fidelity(&thermal, (0.0, 0.0), &vacuum, (0.0, 0.0)).unwrap();
        assert!((f - 0.5f64.sqrt()).abs() < 1e-12, "f = {f}");
    }

    #[test]
    fn fidelity_of_displaced_squeezed_states() {
        // Pure x-squeezed states displaced along x by u: F = exp(-xi u^2 / 4).
        let xi = 2.0f64;
        let sigma = Cov2 { xx: 0.5 / xi, xp: 0.0, pp: 0.5 * xi };
        let u = 0.3;
        let f = gaussian_fidelity(&sigma, (0.0, 0.0), &sigma, (u, 0.0)).unwrap();
        assert!((f - (-xi * u * u / 4.0).exp()).abs() < 1e-12);
    }

    fn random_state(rng: &mut ChaCha8Rng) -> (Cov2, f64, f64) {
        // Rotations of diag(l1, l2) with log-uniform eigenvalues, rejected
        // until the determinant lies in the physical window [1/4, 100].
        let (lo, hi) = (0.05f64.ln(), 50f64.ln());
        let (l1, l2) = loop {
            let l1 = rng.random_range(lo..hi).exp();
            let l2 = rng.random_range(lo..hi).exp();
            let det = l1 * l2;
            if (0.25..=100.0).contains(&det) {
                break (l1, l2);
            }
        };
        let phi = rng.random_range(0.0..PI);
        let (s, c) = phi.sin_cos();
        let sigma = Cov2 {
            xx: c * c * l1 + s * s * l2,
            xp: s * c * (l1 - l2),
            pp: s * s * l1 + c * c * l2,
        };
        let mut bx = rng.random_range(-2.0..2.0);
        let mut bp = rng.random_range(-2.0..2.0);
        if bx * bx + bp * bp < 0.01 {
            bx = 1.0;
            bp = -0.5;
        }
        (sigma, bx, bp)
    }

    #[test]
    fn fidelity_route_reproduces_the_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let (sigma, bx, bp) = random_state(&mut rng);
            let h = qfi(&sigma, bx, bp).unwrap();
            // Step small enough for the O(df^2) bias, large enough to stay
            // above the cancellation noise of the fidelity denominator.
            let df = 1e-2 / h.sqrt();
            let h_fd = qfi_from_fidelity(&sigma, bx, bp, 0.7, df).unwrap();
            assert!((h_fd - h).abs() < 1e-4 * h, "h {h} vs fd {h_fd}");
        }
    }

    #[test]
    fn fidelity_route_bias_is_second_order_in_the_step() {
        // Pure state: the denominator is exactly 1, so the finite-difference
        // bias H^2 df^2 / 8 is the only error and must scale as df^2.
        let sigma = Cov2 { xx: 0.25, xp: 0.0, pp: 1.0 };
        let (bx, bp) = (1.0, 0.5);
        let h = qfi(&sigma, bx, bp).unwrap();
        let bias = |df: f64| (qfi_from_fidelity(&sigma, bx, bp, 0.0, df).unwrap() - h).abs();
        let ratio = bias(2e-2) / bias(1e-2);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn squeezed_displacement_fidelity_across_magnitudes() {
        // Pure x-squeezed states, xi log-uniform over [1, e^10], displaced
        // along the squeezed axis: F = exp(-xi u^2 / 4).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let xi = rng.random_range(0.0..10.0f64).exp();
            let sigma = Cov2 { xx: 0.5 / xi, xp: 0.0, pp: 0.5 * xi };
            let u = 0.5 / xi.sqrt();
            let f = gaussian_fidelity(&sigma, (0.0, 0.0), &sigma, (u, 0.0)).unwrap();
            let expected = (-xi * u * u / 4.0).exp();
            assert!((f - expected).abs() < 1e-10, "xi {xi}: {f} vs {expected}");
        }
    }

    #[test]
    fn homodyne_saturates_the_quantum_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (sigma, bx, bp) = random_state(&mut rng);
            let h = qfi(&sigma, bx, bp).unwrap();
            let var = homodyne_sensitivity(&sigma, bx, bp).unwrap();
            assert!((var * h - 1.0).abs() < 1e-12, "var*h = {}", var * h);
        }
    }

    #[test]
    fn homodyne_vacuum_single_quadrature() {
        let sigma = Cov2 { xx: 0.5, xp: 0.0, pp: 0.5 };
        assert!((homodyne_sensitivity(&sigma, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn quadratic_form_matches_an_elimination_solve() {
        // Independent route: solve sigma w = b by Gaussian elimination with
        // partial pivoting, then H = b . w.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let (sigma, bx, bp) = random_state(&mut rng);
            let h = qfi(&sigma, bx, bp).unwrap();
            let (w0, w1) = if sigma.xx.abs() >= sigma.xp.abs() {
                let m = sigma.xp / sigma.xx;
                let w1 = (bp - m * bx) / (sigma.pp - m * sigma.xp);
                ((bx - sigma.xp * w1) / sigma.xx, w1)
            } else {
                let m = sigma.xx / sigma.xp;
                let w1 = (bx - m * bp) / (sigma.xp - m * sigma.pp);
                ((bp - sigma.pp * w1) / sigma.xp, w1)
            };
            let direct = bx * w0 + bp * w1;
            assert!((h - direct).abs() < 1e-9 * direct.abs().max(1.0), "{h} vs {direct}");
        }
    }

    #[test]
    fn constant_mean_carries_no_information() {
        let sigma = Cov2 { xx: 0.7, xp: 0.1, pp: 0.6 };
        let h = qfi_from_fidelity(&sigma, 0.0, 0.0, 0.3, 1e-3).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn added_noise_never_helps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (sigma, bx, bp) = random_state(&mut rng);
            let h = qfi(&sigma, bx, bp).unwrap();
            let noisy = Cov2 { xx: sigma.xx + 0.1, xp: sigma.xp, pp: sigma.pp + 0.1 };
            assert!(qfi(&noisy, bx, bp).unwrap() < h);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let flat = Cov2 { xx: 1.0, xp: 1.0, pp: 1.0 };
        assert!(matches!(qfi(&flat, 1.0, 0.0), Err(Error::NotPositiveDefinite { .. })));
        assert!(homodyne_sensitivity(&flat, 1.0, 0.0).is_err());
        // Below the vacuum floor.
        let thin = Cov2 { xx: 0.1, xp: 0.0, pp: 0.1 };
        assert!(gaussian_fidelity(&thin, (0.0, 0.0), &thin, (0.0, 0.0)).is_err());
        let ok = Cov2 { xx: 0.5, xp: 0.0, pp: 0.5 };
        assert!(qfi_from_fidelity(&ok, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(qfi_from_fidelity(&ok, 1.0, 0.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn free_window_reaches_four_xi() {
        let r = 1.0;
        let res =
            optimize_theta(&WindowContext::Ideal, &ForceShape::Constant, r, 0.0, FRAC_PI_2)
                .unwrap();
        let xi = (2.0 * r).exp();
        assert!((res.h - 4.0 * xi).abs() < 1e-10 * 4.0 * xi, "h = {}", res.h);
        assert!((res.state.bx - 1.0).abs() < 1e-12);
        assert!((res.state.bp - 1.0).abs() < 1e-12);
        assert!((res.theta - (FRAC_PI_2 - PI / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_angle_beats_a_dense_scan() {
        for gamma in [0.0, 0.1, 0.4] {
            for window in [0.3, 1.0, FRAC_PI_2] {
                for shape in [ForceShape::Constant, ForceShape::Resonant] {
                    let ctx = WindowContext::Markovian { gamma, nbar: 0.3 };
                    let best = optimize_theta(&ctx, &shape, 1.2, 0.8, window).unwrap();
                    let (bx, bp) = markovian_response(&shape, gamma, 0.8, window).unwrap();
                    for k in 0..64 {
                        let theta = k as f64 * PI / 64.0;
                        let sq = SqueezeParams::new(1.2, theta).unwrap();
                        let sigma = covariance_markovian(gamma, 0.3, sq, window);
                        let h = qfi(&sigma, bx, bp).unwrap();
                        assert!(best.h >= h * (1.0 - 1e-9), "scan beat closed form");
                    }
                }
            }
        }
    }

    #[test]
    fn scan_refinement_reaches_the_closed_form_value() {
        // Running the scan-and-refine machinery on the Markovian profile must
        // land on the closed-form optimum to high accuracy.
        for (gamma, window, r) in [(0.1, 1.0, 1.2), (0.3, FRAC_PI_2, 2.0), (0.05, 0.4, 0.5)] {
            let ctx = WindowContext::Markovian { gamma, nbar: 0.2 };
            let shape = ForceShape::Constant;
            let closed = optimize_theta(&ctx, &shape, r, 0.0, window).unwrap();
            let (bx, bp) = markovian_response(&shape, gamma, 0.0, window).unwrap();
            let eval = |theta: f64| -> Result<f64> {
                let sq = SqueezeParams { r, theta };
                qfi(&covariance_markovian(gamma, 0.2, sq, window), bx, bp)
            };
            let mut best_k = 0;
            let mut best_h = f64::NEG_INFINITY;
            for k in 0..64 {
                let h = eval(k as f64 * PI / 64.0).unwrap();
                if h > best_h {
                    best_h = h;
                    best_k = k;
                }
            }
            let center = best_k as f64 * PI / 64.0;
            let (_, h_scan) =
                golden_section_max(&eval, center - PI / 64.0, center + PI / 64.0, 1e-6).unwrap();
            assert!(
                (h_scan - closed.h).abs() < 1e-8 * closed.h,
                "scan {h_scan} vs closed {}",
                closed.h
            );
        }
    }

    #[test]
    fn sensitivity_inverts_the_qfi() {
        let res = optimize_theta(
            &WindowContext::Markovian { gamma: 0.1, nbar: 0.0 },
            &ForceShape::Resonant,
            1.5,
            0.7,
            1.1,
        )
        .unwrap();
        assert!((res.sensitivity * res.h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_branch_angle_matches_closed_form_at_weak_coupling() {
        let spec = BathSpec::new(1e-5, 10.0, 0.0).unwrap();
        let tables = WindowTables::build(&spec, FRAC_PI_2, 0.005).unwrap();
        let nm = optimize_theta(
            &WindowContext::NonMarkovian(&tables),
            &ForceShape::Constant,
            1.0,
            0.0,
            FRAC_PI_2,
        )
        .unwrap();
        let free =
            optimize_theta(&WindowContext::Ideal, &ForceShape::Constant, 1.0, 0.0, FRAC_PI_2)
                .unwrap();
        assert!((nm.theta - free.theta).abs() < 1e-3, "{} vs {}", nm.theta, free.theta);
        assert!((nm.h - free.h).abs() < 1e-2 * free.h);
    }

    #[test]
    fn short_window_angle_is_half_the_window() {
        let spec = BathSpec::new(0.1, 10.0, 0.0).unwrap();
        let tau = 2e-4;
        let tables = WindowTables::build(&spec, tau, tau / 64.0).unwrap();
        let res = optimize_theta(
            &WindowContext::NonMarkovian(&tables),
            &ForceShape::Constant,
            2.5,
            0.0,
            tau,
        )
        .unwrap();
        assert!((res.theta / (0.5 * tau) - 1.0).abs() < 0.05, "theta = {}", res.theta);
    }

    #[test]
    fn zero_response_is_an_error() {
        // A full free period integrates the constant force response to zero.
        let res = optimize_theta(
            &WindowContext::Ideal,
            &ForceShape::Constant,
            1.0,
            0.0,
            2.0 * PI,
        );
        assert!(matches!(res, Err(Error::ZeroResponse)));
    }
}
