//! Gaussian state dynamics for one measurement window.
//!
//! A window starts from a squeezed vacuum, evolves under the damped
//! oscillator dynamics while the signal force acts, and ends in a Gaussian
//! state whose first moment is proportional to the force amplitude and whose
//! covariance is amplitude-independent. This module computes both pieces for
//! the exact (non-Markovian) evolution, for the Markovian limit in closed
//! form, and for the free oscillator (the Markovian branch at zero coupling).

use crate::bath::{BathSpec, KernelTable};
use crate::error::{Error, Result};
use crate::green::{solve_green, GreenTable};
use crate::quad;
use std::fmt;
use std::sync::Arc;

/// Mean thermal occupation of the oscillator mode at temperature `t` (units
/// of the oscillator frequency); zero at zero temperature.
pub fn thermal_occupancy(temperature: f64) -> f64 {
    if temperature <= 0.0 {
        0.0
    } else {
        1.0 / (1.0 / temperature).exp_m1()
    }
}

/// Squeezing of the prepared state: magnitude `r` and quadrature angle
/// `theta`. The x variance at theta = 0 is e^{2r}/2 (anti-squeezed) and the
/// p variance e^{-2r}/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams {
    pub r: f64,
    pub theta: f64,
}

impl SqueezeParams {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter { name: "r", reason: format!("got {r}") });
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter { name: "theta", reason: format!("got {theta}") });
        }
        Ok(Self { r, theta })
    }

    /// Variance ratio xi = e^{2r}.
    pub fn xi(&self) -> f64 {
        (2.0 * self.r).exp()
    }

    /// Mean energy of the squeezed vacuum, (xi + 1/xi)/4 = cosh(2r)/2.
    pub fn energy(&self) -> f64 {
        0.5 * (2.0 * self.r).cosh()
    }
}

/// Which dynamical branch produced a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bath {
    /// Free oscillator, no environment.
    Ideal,
    /// Memoryless damping at rate gamma toward the thermal state.
    Markovian,
    /// Full evolution with the regularized Ohmic bath.
    NonMarkovian,
}

/// Discriminant of `ForceShape`, kept alongside results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeTag {
    Constant,
    Resonant,
    Custom,
}

/// Time profile of the signal force (unit amplitude).
#[derive(Clone)]
pub enum ForceShape {
    /// s(t) = 1.
    Constant,
    /// s(t) = cos t, resonant with the oscillator.
    Resonant,
    /// Arbitrary profile of the absolute time.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ForceShape {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ForceShape::Constant => 1.0,
            ForceShape::Resonant => t.cos(),
            ForceShape::Custom(f) => f(t),
        }
    }

    pub fn tag(&self) -> ShapeTag {
        match self {
            ForceShape::Constant => ShapeTag::Constant,
            ForceShape::Resonant => ShapeTag::Resonant,
            ForceShape::Custom(_) => ShapeTag::Custom,
        }
    }
}

impl fmt::Debug for ForceShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ForceShape::{:?}", self.tag())
    }
}

/// Symmetric 2x2 covariance matrix in the (x, p) quadrature basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xp: f64,
    pub pp: f64,
}

impl Cov2 {
    pub fn det(&self) -> f64 {
        self.xx * self.pp - self.xp * self.xp
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mean = 0.5 * (self.xx + self.pp);
        let half_diff = 0.5 * (self.xx - self.pp);
        mean - (half_diff * half_diff + self.xp * self.xp).sqrt()
    }
}

/// End-of-window Gaussian state summary: covariance plus the first-moment
/// response (bx, bp) per unit force amplitude.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceState {
    /// Absolute time at which the window began.
    pub start: f64,
    /// Window length.
    pub window: f64,
    pub sigma: Cov2,
    pub bx: f64,
    pub bp: f64,
    pub squeeze: SqueezeParams,
    pub bath: Bath,
    pub shape: ShapeTag,
}

/// Covariance after time `t` of Markovian damping at rate `gamma` toward a
/// thermal state of occupation `nbar`, starting from a squeezed vacuum. Both
/// quadratures relax at the same rate while rotating at the oscillator
/// frequency; `gamma = 0` gives the free oscillator.
pub fn covariance_markovian(gamma: f64, nbar: f64, sq: SqueezeParams, t: f64) -> Cov2 {
    let decay = (-gamma * t).exp();
    let c = decay * (2.0 * sq.r).cosh() + (1.0 - decay) * (2.0 * nbar + 1.0);
    let amp = decay * (2.0 * sq.r).sinh();
    let phase = 2.0 * (sq.theta - t);
    let d_r = amp * phase.cos();
    let d_i = amp * phase.sin();
    Cov2 { xx: 0.5 * (c + d_r), xp: 0.5 * d_i, pp: 0.5 * (c - d_r) }
}

/// Smallest covariance eigenvalue of the Markovian state, independent of the
/// squeezing angle: the squeezed variance relaxing toward thermal.
pub fn markovian_min_eigenvalue(gamma: f64, nbar: f64, r: f64, t: f64) -> f64 {
    let decay = (-gamma * t).exp();
    0.5 * ((1.0 - decay) * (2.0 * nbar + 1.0) + decay * (-2.0 * r).exp())
}

/// First-moment response of the Markovian branch for a window of length
/// `window` starting at absolute time `start`: the integral of the shape
/// against the damped rotation e^{-gamma t/2} (sin t, cos t). Constant and
/// resonant shapes are closed-form; custom shapes fall back to quadrature.
pub fn markovian_response(
    shape: &ForceShape,
    gamma: f64,
    start: f64,
    window: f64,
) -> Result<(f64, f64)> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParameter { name: "gamma", reason: format!("got {gamma}") });
    }
    if !window.is_finite() || window < 0.0 {
        return Err(Error::InvalidParameter { name: "window", reason: format!("got {window}") });
    }
    if !start.is_finite() {
        return Err(Error::InvalidParameter { name: "start", reason: format!("got {start}") });
    }
    let a = 0.5 * gamma;
    let tau = window;
    let decay = (-a * tau).exp();
    match shape {
        ForceShape::Constant => {
            let den = 1.0 + a * a;
            let bx = (1.0 - decay * (tau.cos() + a * tau.sin())) / den;
            let bp = (a + decay * (tau.sin() - a * tau.cos())) / den;
            Ok((bx, bp))
        }
        ForceShape::Resonant => {
            // Products of cos(start + tau - t') with e^{-a t'} sin/cos t',
            // reduced to single-frequency integrals over the window.
            let den = a * a + 4.0;
            let (s2, c2) = (2.0 * tau).sin_cos();
            let i_sc = (2.0 - decay * (2.0 * c2 + a * s2)) / (2.0 * den);
            let i_cc2 = (a + decay * (2.0 * s2 - a * c2)) / den;
            let j_dc = if a == 0.0 { tau } else { (1.0 - decay) / a };
            let i_ss = 0.5 * (j_dc - i_cc2);
            let i_cc = 0.5 * (j_dc + i_cc2);
            let (sin_e, cos_e) = (start + tau).sin_cos();
            let bx = cos_e * i_sc + sin_e * i_ss;
            let bp = cos_e * i_cc + sin_e * i_sc;
            Ok((bx, bp))
        }
        ForceShape::Custom(f) => {
            if tau == 0.0 {
                return Ok((0.0, 0.0));
            }
            let scale = tau.max(1e-6);
            let fx = |t: f64| f(start + tau - t) * (-a * t).exp() * t.sin();
            let fp = |t: f64| f(start + tau - t) * (-a * t).exp() * t.cos();
            let (bx, _) = quad::integrate_adaptive(&fx, 0.0, tau, 32, 1e-10, scale)?;
            let (bp, _) = quad::integrate_adaptive(&fp, 0.0, tau, 32, 1e-10, scale)?;
            Ok((bx, bp))
        }
    }
}

/// Force-free noise contributions to the covariance, accumulated on the
/// window grid: beta_x[i], beta_p[i], beta_xp[i] are the double time
/// integrals of the noise kernel against G, Gd over [0, t_i]^2.
#[derive(Debug, Clone)]
pub struct NoiseMoments {
    pub step: f64,
    pub beta_x: Vec<f64>,
    pub beta_p: Vec<f64>,
    pub beta_xp: Vec<f64>,
}

/// Evaluate the noise double integrals with trapezoid weights on every
/// prefix of the grid in one O(n^2) sweep. The running inner-convolution
/// vectors turn each grid extension into an O(n) update; the result matches
/// the brute-force double sum to rounding.
pub fn accumulate_noise_moments(
    green: &GreenTable,
    kernels: &KernelTable,
) -> Result<NoiseMoments> {
    let h = green.step;
    if (h - kernels.step).abs() > 1e-12 * h {
        return Err(Error::GridMismatch(format!(
            "green step {h} vs kernel step {}",
            kernels.step
        )));
    }
    let n = green.len();
    if kernels.nu.len() < n {
        return Err(Error::GridMismatch(format!(
            "kernel table has {} samples, green table needs {n}",
            kernels.nu.len()
        )));
    }
    let mut beta_x = vec![0.0; n];
    let mut beta_p = vec![0.0; n];
    let mut beta_xp = vec![0.0; n];
    if n <= 1 || kernels.spec.gamma == 0.0 {
        return Ok(NoiseMoments { step: h, beta_x, beta_p, beta_xp });
    }

    let g = &green.g;
    let v = &green.gdot;
    let nu = &kernels.nu;
    let h2 = h * h;

    // Direct double sums on the two-point grid.
    let mut tx = 0.25 * (g[0] * g[0] + g[1] * g[1]) * nu[0] + 0.5 * g[0] * g[1] * nu[1];
    let mut tp = 0.25 * (v[0] * v[0] + v[1] * v[1]) * nu[0] + 0.5 * v[0] * v[1] * nu[1];
    let mut txp = 0.25 * (v[0] * g[0] + v[1] * g[1]) * nu[0]
        + 0.25 * (v[0] * g[1] + v[1] * g[0]) * nu[1];
    beta_x[1] = h2 * tx;
    beta_p[1] = h2 * tp;
    beta_xp[1] = h2 * txp;

    // Running convolutions P_i = sum_j w_j G_j nu_{i-j} (trapezoid in j).
    let mut pg = 0.5 * g[0] * nu[1] + 0.5 * g[1] * nu[0];
    let mut pgd = 0.5 * v[0] * nu[1] + 0.5 * v[1] * nu[0];

    for i in 1..n - 1 {
        // Convolutions against the extended kernel row, right endpoint open.
        let mut qg = 0.5 * g[0] * nu[i + 1];
        let mut qgd = 0.5 * v[0] * nu[i + 1];
        for j in 1..=i {
            let k = nu[i + 1 - j];
            qg += g[j] * k;
            qgd += v[j] * k;
        }
        tx += g[i] * pg + 0.25 * g[i] * g[i] * nu[0]
            + g[i + 1] * qg
            + 0.25 * g[i + 1] * g[i + 1] * nu[0];
        tp += v[i] * pgd + 0.25 * v[i] * v[i] * nu[0]
            + v[i + 1] * qgd
            + 0.25 * v[i + 1] * v[i + 1] * nu[0];
        txp += 0.5 * (v[i] * pg + g[i] * pgd) + 0.25 * v[i] * g[i] * nu[0]
            + 0.5 * (v[i + 1] * qg + g[i + 1] * qgd)
            + 0.25 * v[i + 1] * g[i + 1] * nu[0];
        beta_x[i + 1] = h2 * tx;
        beta_p[i + 1] = h2 * tp;
        beta_xp[i + 1] = h2 * txp;
        pg = qg + 0.5 * g[i + 1] * nu[0];
        pgd = qgd + 0.5 * v[i + 1] * nu[0];
    }
    Ok(NoiseMoments { step: h, beta_x, beta_p, beta_xp })
}

/// First-moment response of the exact dynamics: trapezoid integral of the
/// shape (evaluated at absolute time) against (G, Gd) over a window that must
/// end on a grid point.
pub fn response_vector(
    green: &GreenTable,
    shape: &ForceShape,
    start: f64,
    window: f64,
) -> Result<(f64, f64)> {
    let h = green.step;
    let steps_f = window / h;
    let steps = steps_f.round();
    if (steps_f - steps).abs() > 1e-6 {
        return Err(Error::OffGrid { t: window, step: h });
    }
    let idx = steps as usize;
    if idx >= green.len() {
        return Err(Error::HorizonExceeded { t: window, horizon: green.t_max() });
    }
    let mut bx = 0.0;
    let mut bp = 0.0;
    for j in 0..=idx {
        let w = if j == 0 || j == idx { 0.5 } else { 1.0 };
        let t_local = j as f64 * h;
        let s = shape.eval(start + window - t_local);
        bx += w * s * green.g[j];
        bp += w * s * green.gdot[j];
    }
    Ok((bx * h, bp * h))
}

/// Precomputed per-window tables for the exact dynamics: kernels, Green
/// function, noise moments and prefix integrals of G and Gd against 1, cos
/// and sin, so covariance and response at any grid time are O(1).
#[derive(Debug, Clone)]
pub struct WindowTables {
    pub kernels: KernelTable,
    pub green: GreenTable,
    pub moments: NoiseMoments,
    ig_1: Vec<f64>,
    ig_cos: Vec<f64>,
    ig_sin: Vec<f64>,
    igd_1: Vec<f64>,
    igd_cos: Vec<f64>,
    igd_sin: Vec<f64>,
}

impl WindowTables {
    /// Build tables covering [0, horizon]. The step is `h_target` snapped
    /// down so the horizon lands exactly on the grid.
    pub fn build(spec: &BathSpec, horizon: f64, h_target: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("got {horizon}"),
            });
        }
        if !(h_target > 0.0 && h_target.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "h_target",
                reason: format!("got {h_target}"),
            });
        }
        let steps = ((horizon / h_target) - 1e-9).ceil().max(1.0) as usize;
        let h = horizon / steps as f64;
        let kernels = crate::bath::tabulate_kernels(spec, h, horizon)?;
        let green = solve_green(&kernels, horizon)?;
        let moments = accumulate_noise_moments(&green, &kernels)?;

        let n = green.len();
        let mut ig_1 = vec![0.0; n];
        let mut ig_cos = vec![0.0; n];
        let mut ig_sin = vec![0.0; n];
        let mut igd_1 = vec![0.0; n];
        let mut igd_cos = vec![0.0; n];
        let mut igd_sin = vec![0.0; n];
        for i in 0..n - 1 {
            let (t0, t1) = (i as f64 * h, (i + 1) as f64 * h);
            let half = 0.5 * h;
            let (g0, g1) = (green.g[i], green.g[i + 1]);
            let (v0, v1) = (green.gdot[i], green.gdot[i + 1]);
            ig_1[i + 1] = ig_1[i] + half * (g0 + g1);
            ig_cos[i + 1] = ig_cos[i] + half * (g0 * t0.cos() + g1 * t1.cos());
            ig_sin[i + 1] = ig_sin[i] + half * (g0 * t0.sin() + g1 * t1.sin());
            igd_1[i + 1] = igd_1[i] + half * (v0 + v1);
            igd_cos[i + 1] = igd_cos[i] + half * (v0 * t0.cos() + v1 * t1.cos());
            igd_sin[i + 1] = igd_sin[i] + half * (v0 * t0.sin() + v1 * t1.sin());
        }
        Ok(Self { kernels, green, moments, ig_1, ig_cos, ig_sin, igd_1, igd_cos, igd_sin })
    }

    pub fn step(&self) -> f64 {
        self.green.step
    }

    pub fn len(&self) -> usize {
        self.green.len()
    }

    pub fn is_empty(&self) -> bool {
        self.green.is_empty()
    }

    /// Grid index of time `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let steps_f = t / self.step();
        let steps = steps_f.round();
        if (steps_f - steps).abs() > 1e-6 {
            return Err(Error::OffGrid { t, step: self.step() });
        }
        let idx = steps as usize;
        if idx >= self.len() {
            return Err(Error::HorizonExceeded { t, horizon: self.green.t_max() });
        }
        Ok(idx)
    }

    /// Covariance of the exact dynamics at grid index `idx`, starting from a
    /// squeezed vacuum: homogeneous propagation of the initial variances plus
    /// the accumulated noise.
    pub fn sigma_nm(&self, idx: usize, sq: SqueezeParams) -> Cov2 {
        let (g, v, a) = (self.green.g[idx], self.green.gdot[idx], self.green.gddot[idx]);
        let (sin_t, cos_t) = sq.theta.sin_cos();
        let gx = g * cos_t - v * sin_t;
        let gp = g * sin_t + v * cos_t;
        let gdx = v * cos_t - a * sin_t;
        let gdp = v * sin_t + a * cos_t;
        let xi = sq.xi();
        let (anti, sqz) = (0.5 * xi, 0.5 / xi);
        Cov2 {
            xx: gx * gx * sqz + gp * gp * anti + self.moments.beta_x[idx],
            xp: gx * gdx * sqz + gp * gdp * anti + self.moments.beta_xp[idx],
            pp: gdx * gdx * sqz + gdp * gdp * anti + self.moments.beta_p[idx],
        }
    }

    /// First-moment response over the window [start, start + idx * step],
    /// using prefix integrals for the constant and resonant shapes.
    pub fn response(&self, shape: &ForceShape, start: f64, idx: usize) -> (f64, f64) {
        match shape {
            ForceShape::Constant => (self.ig_1[idx], self.igd_1[idx]),
            ForceShape::Resonant => {
                // cos(end - t') = cos(end) cos t' + sin(end) sin t'.
                let end = start + idx as f64 * self.step();
                let (sin_e, cos_e) = end.sin_cos();
                (
                    cos_e * self.ig_cos[idx] + sin_e * self.ig_sin[idx],
                    cos_e * self.igd_cos[idx] + sin_e * self.igd_sin[idx],
                )
            }
            ForceShape::Custom(_) => {
                let window = idx as f64 * self.step();
                response_vector(&self.green, shape, start, window)
                    .expect("grid time is always on-grid")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::tabulate_kernels;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn tables(gamma: f64, temperature: f64, horizon: f64, h: f64) -> WindowTables {
        let spec = BathSpec::new(gamma, 10.0, temperature).unwrap();
        WindowTables::build(&spec, horizon, h).unwrap()
    }

    /// Brute-force trapezoid double sum for the noise moments at one time.
    fn brute_betas(green: &GreenTable, kernels: &KernelTable, n: usize) -> (f64, f64, f64) {
        let h = green.step;
        let w = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
        let (mut bx, mut bp, mut bxp) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            for j in 0..=n {
                let k = w(i) * w(j) * kernels.nu[i.abs_diff(j)];
                bx += k * green.g[i] * green.g[j];
                bp += k * green.gdot[i] * green.gdot[j];
                bxp += k * green.gdot[i] * green.g[j];
            }
        }
        (bx * h * h, bp * h * h, bxp * h * h)
    }

    #[test]
    fn decoupled_oscillator_accumulates_no_noise() {
        let t = tables(0.0, 0.0, 1.0, 0.01);
        assert!(t.moments.beta_x.iter().all(|&b| b == 0.0));
        assert!(t.moments.beta_p.iter().all(|&b| b == 0.0));
        assert!(t.moments.beta_xp.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn incremental_moments_match_brute_force() {
        for temperature in [0.0, 1.0] {
            let spec = BathSpec::new(0.1, 10.0, temperature).unwrap();
            let kernels = tabulate_kernels(&spec, 0.02, 3.0).unwrap();
            let green = solve_green(&kernels, 3.0).unwrap();
            let moments = accumulate_noise_moments(&green, &kernels).unwrap();
            for n in [1, 2, 3, 17, 80, green.len() - 1] {
                let (bx, bp, bxp) = brute_betas(&green, &kernels, n);
                assert!((moments.beta_x[n] - bx).abs() < 1e-12 * bx.abs().max(1.0));
                assert!((moments.beta_p[n] - bp).abs() < 1e-12 * bp.abs().max(1.0));
                assert!((moments.beta_xp[n] - bxp).abs() < 1e-12 * bxp.abs().max(1.0));
            }
        }
    }

    #[test]
    fn first_step_noise_follows_quartic_law() {
        // beta_x after one step of size h is nu0 h^4 / 4 to O(h^2).
        let t = tables(0.1, 0.0, 1.0, 0.005);
        let nu0 = t.kernels.nu[0];
        let h = t.step();
        let expected = 0.25 * nu0 * h.powi(4);
        assert!((t.moments.beta_x[1] - expected).abs() < 1e-4 * expected);
    }

    #[test]
    fn noise_moments_satisfy_cauchy_schwarz() {
        let t = tables(0.1, 1.0, 4.0, 0.01);
        for i in 0..t.len() {
            let (bx, bp, bxp) = (t.moments.beta_x[i], t.moments.beta_p[i], t.moments.beta_xp[i]);
            assert!(bx >= 0.0 && bp >= 0.0);
            assert!(bxp * bxp <= bx * bp * (1.0 + 1e-10) + 1e-30);
        }
    }

    #[test]
    fn cross_moment_is_half_the_rate_of_the_position_moment() {
        // beta_xp = d(beta_x)/dt / 2, checked by central differences with a
        // second-order convergence ratio between two step sizes.
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let t = tables(0.1, 0.0, 2.0, h);
                let m = &t.moments;
                let mut worst = 0.0f64;
                for i in (t.len() / 2)..(t.len() - 1) {
                    let fd = (m.beta_x[i + 1] - m.beta_x[i - 1]) / (4.0 * h);
                    worst = worst.max((fd - m.beta_xp[i]).abs());
                }
                worst
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.0..=5.0).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn initial_covariance_is_the_squeezed_vacuum() {
        let t = tables(0.1, 0.0, 1.0, 0.01);
        let sq = SqueezeParams::new(1.0, 0.7).unwrap();
        let sigma = t.sigma_nm(0, sq);
        let xi = sq.xi();
        let (s, c) = (sq.theta.sin(), sq.theta.cos());
        assert!((sigma.xx - (s * s / (2.0 * xi) + c * c * xi / 2.0)).abs() < 1e-14);
        assert!((sigma.pp - (c * c / (2.0 * xi) + s * s * xi / 2.0)).abs() < 1e-14);
        assert!((sigma.xp - s * c * (xi - 1.0 / xi) / 2.0).abs() < 1e-14);
        assert!((sigma.det() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn decoupled_covariance_stays_pure() {
        let t = tables(0.0, 0.0, FRAC_PI_2, 0.005);
        let sq = SqueezeParams::new(1.5, 0.3).unwrap();
        for idx in [0, t.len() / 3, t.len() - 1] {
            let sigma = t.sigma_nm(idx, sq);
            assert!((sigma.det() - 0.25).abs() < 1e-10, "det {}", sigma.det());
        }
    }

    #[test]
    fn exact_and_markovian_covariances_agree_at_zero_time() {
        let t = tables(0.1, 0.5, 1.0, 0.01);
        let sq = SqueezeParams::new(0.8, 1.1).unwrap();
        let nbar = thermal_occupancy(0.5);
        let nm = t.sigma_nm(0, sq);
        let mk = covariance_markovian(0.1, nbar, sq, 0.0);
        assert!((nm.xx - mk.xx).abs() < 1e-14);
        assert!((nm.xp - mk.xp).abs() < 1e-14);
        assert!((nm.pp - mk.pp).abs() < 1e-14);
    }

    #[test]
    fn markovian_state_thermalizes() {
        let sq = SqueezeParams::new(1.0, 0.4).unwrap();
        let nbar = 2.0;
        let sigma = covariance_markovian(0.2, nbar, sq, 500.0);
        let iso = 0.5 * (2.0 * nbar + 1.0);
        assert!((sigma.xx - iso).abs() < 1e-12);
        assert!((sigma.pp - iso).abs() < 1e-12);
        assert!(sigma.xp.abs() < 1e-12);
    }

    #[test]
    fn markovian_eigenvalues_do_not_depend_on_angle() {
        for theta in [0.0, 0.3, 1.0, 2.8] {
            let sq = SqueezeParams::new(0.9, theta).unwrap();
            let sigma = covariance_markovian(0.15, 0.7, sq, 1.3);
            let expected = markovian_min_eigenvalue(0.15, 0.7, 0.9, 1.3);
            assert!((sigma.min_eigenvalue() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn free_constant_response_at_quarter_period_is_unit() {
        let (bx, bp) = markovian_response(&ForceShape::Constant, 0.0, 0.0, FRAC_PI_2).unwrap();
        assert!((bx - 1.0).abs() < 1e-14);
        assert!((bp - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_window_gives_zero_response() {
        for shape in [ForceShape::Constant, ForceShape::Resonant] {
            let (bx, bp) = markovian_response(&shape, 0.1, 2.0, 0.0).unwrap();
            assert_eq!((bx, bp), (0.0, 0.0));
        }
        let t = tables(0.1, 0.0, 1.0, 0.01);
        assert_eq!(t.response(&ForceShape::Constant, 0.0, 0), (0.0, 0.0));
    }

    #[test]
    fn short_window_response_scaling() {
        let tau = 1e-3;
        for (shape, start) in [(ForceShape::Constant, 0.0), (ForceShape::Resonant, 0.0)] {
            let (bx, bp) = markovian_response(&shape, 0.1, start, tau).unwrap();
            assert!((bx - 0.5 * tau * tau).abs() < 1e-3 * 0.5 * tau * tau);
            assert!((bp - tau).abs() < 1e-3 * tau);
        }
    }

    #[test]
    fn markovian_closed_forms_match_quadrature() {
        // The custom-shape path integrates numerically; feeding it the same
        // profiles as the closed forms must reproduce them.
        for (shape, clone) in [
            (ForceShape::Constant, ForceShape::Custom(Arc::new(|_| 1.0))),
            (ForceShape::Resonant, ForceShape::Custom(Arc::new(|s: f64| s.cos()))),
        ] {
            for (start, tau) in [(0.0, 0.4), (3.7, 1.9), (10.0, FRAC_PI_2)] {
                let (bx, bp) = markovian_response(&shape, 0.1, start, tau).unwrap();
                let (qx, qp) = markovian_response(&clone, 0.1, start, tau).unwrap();
                assert!((bx - qx).abs() < 1e-8, "bx {bx} vs {qx}");
                assert!((bp - qp).abs() < 1e-8, "bp {bp} vs {qp}");
            }
        }
    }

    #[test]
    fn prefix_response_matches_direct_trapezoid() {
        let t = tables(0.1, 0.0, FRAC_PI_2, 0.005);
        for shape in [ForceShape::Constant, ForceShape::Resonant] {
            for start in [0.0, 2.9] {
                for idx in [1, 57, t.len() - 1] {
                    let window = idx as f64 * t.step();
                    let (bx, bp) = t.response(&shape, start, idx);
                    let (dx, dp) = response_vector(&t.green, &shape, start, window).unwrap();
                    assert!((bx - dx).abs() < 1e-12);
                    assert!((bp - dp).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_response_approaches_markovian_at_weak_coupling() {
        // With a tiny coupling the exact propagator is nearly the free one,
        // as is the Markovian response; both should agree to O(gamma).
        let spec = BathSpec::new(1e-4, 10.0, 0.0).unwrap();
        let t = WindowTables::build(&spec, FRAC_PI_2, 0.002).unwrap();
        let idx = t.len() - 1;
        let (bx, bp) = t.response(&ForceShape::Constant, 0.0, idx);
        let (mx, mp) = markovian_response(&ForceShape::Constant, 1e-4, 0.0, FRAC_PI_2).unwrap();
        assert!((bx - mx).abs() < 1e-3);
        assert!((bp - mp).abs() < 1e-3);
    }

    #[test]
    fn off_grid_and_horizon_requests_are_rejected() {
        let t = tables(0.1, 0.0, 1.0, 0.01);
        assert!(matches!(
            response_vector(&t.green, &ForceShape::Constant, 0.0, 0.505),
            Err(Error::OffGrid { .. })
        ));
        assert!(matches!(
            response_vector(&t.green, &ForceShape::Constant, 0.0, 2.0),
            Err(Error::HorizonExceeded { .. })
        ));
        assert!(t.index_of(0.5).is_ok());
        assert!(t.index_of(0.5049).is_err());
        assert!(t.index_of(1.5).is_err());
    }

    #[test]
    fn thermal_occupancy_anchors() {
        assert_eq!(thermal_occupancy(0.0), 0.0);
        assert!((thermal_occupancy(1.0) - 1.0 / (1.0f64.exp() - 1.0)).abs() < 1e-15);
        // High temperature: nbar -> T - 1/2.
        assert!((thermal_occupancy(50.0) - (50.0 - 0.5)).abs() < 1e-2);
    }

    #[test]
    fn squeeze_params_energy_and_ratio() {
        let sq = SqueezeParams::new(0.0, 0.0).unwrap();
        assert_eq!(sq.xi(), 1.0);
        assert_eq!(sq.energy(), 0.5);
        let sq = SqueezeParams::new(2.0, PI).unwrap();
        assert!((sq.xi() - 4.0f64.exp()).abs() < 1e-12);
        assert!((sq.energy() - 0.25 * (sq.xi() + 1.0 / sq.xi())).abs() < 1e-12);
        assert!(SqueezeParams::new(-1.0, 0.0).is_err());
        assert!(SqueezeParams::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn window_grid_snaps_to_the_horizon() {
        let t = tables(0.1, 0.0, FRAC_PI_2, 0.005);
        let n = t.len() - 1;
        assert!((n as f64 * t.step() - FRAC_PI_2).abs() < 1e-12);
        assert!(t.step() <= 0.005 + 1e-12);
    }
}
