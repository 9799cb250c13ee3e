//! Bath description: regularized Ohmic spectral density, the memory (damping)
//! kernel, the symmetrized noise kernel and its small-frequency moments.
//!
//! The memory kernel has a verified Gaussian closed form and is evaluated
//! directly; the noise kernel has no elementary closed form at T > 0 and is
//! always computed by quadrature (split at omega = lambda, order doubled
//! until 1e-9 relative agreement).

use crate::error::{Error, Result};
use crate::quad;
use std::f64::consts::PI;

/// Relative tolerance of every kernel quadrature.
const QUAD_REL_TOL: f64 = 1e-9;
/// Spectral support is cut at `OMEGA_CUT_FACTOR * lambda`; the Gaussian factor
/// makes the discarded tail ~ e^{-36} of the total.
const OMEGA_CUT_FACTOR: f64 = 6.0;

/// Bath parameters: coupling `gamma`, spectral cutoff `lambda`, temperature.
/// `gamma = 0` is accepted and means the oscillator is decoupled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub gamma: f64,
    pub lambda: f64,
    pub temperature: f64,
}

impl BathSpec {
    pub fn new(gamma: f64, lambda: f64, temperature: f64) -> Result<Self> {
        let check = |name: &'static str, v: f64, lo_ok: bool| -> Result<()> {
            if !v.is_finite() || !lo_ok {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("got {v}, must be finite and in range"),
                });
            }
            Ok(())
        };
        check("gamma", gamma, gamma >= 0.0)?;
        check("lambda", lambda, lambda > 0.0)?;
        check("temperature", temperature, temperature >= 0.0)?;
        Ok(Self { gamma, lambda, temperature })
    }

    /// Spectral density J(omega) = (2 gamma omega / pi) exp(-omega^2/lambda^2),
    /// defined for omega >= 0.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        debug_assert!(omega >= 0.0);
        2.0 * self.gamma * omega / PI * (-omega * omega / (self.lambda * self.lambda)).exp()
    }

    /// J(omega)/2 * coth(omega / 2T): the integrand of the noise kernel at
    /// cos(omega t) = 1. Removable singularity at omega -> 0 handled by series.
    fn noise_weight(&self, omega: f64) -> f64 {
        let t = self.temperature;
        if t == 0.0 {
            return 0.5 * self.spectral_density(omega);
        }
        let x = 0.5 * omega / t;
        if omega < 1e-6 * t {
            // J/2 coth -> (2 gamma T / pi)(1 + x^2/3) e^{-omega^2/lambda^2}
            let gauss = (-omega * omega / (self.lambda * self.lambda)).exp();
            return 2.0 * self.gamma * t / PI * gauss * (1.0 + x * x / 3.0);
        }
        let coth = if x > 20.0 { 1.0 } else { 1.0 + 2.0 / (2.0 * x).exp_m1() };
        0.5 * self.spectral_density(omega) * coth
    }

    /// Magnitude used as the absolute floor in quadrature tolerances.
    fn noise_scale(&self) -> f64 {
        self.gamma * self.lambda * self.lambda / (2.0 * PI)
            + 4.0 * self.gamma * self.temperature / PI
    }
}

/// Damping kernel gamma(t) = int_0^inf J(omega) cos(omega t)/omega d omega.
/// For the regularized Ohmic density the integral is Gaussian:
/// gamma lambda / sqrt(pi) * exp(-lambda^2 t^2 / 4). The closed form is pinned
/// against direct quadrature in the test suite.
pub fn memory_kernel(spec: &BathSpec, t: f64) -> f64 {
    spec.gamma * spec.lambda / PI.sqrt() * (-0.25 * spec.lambda * spec.lambda * t * t).exp()
}

/// Noise kernel nu(t) = int_0^inf J(omega)/2 coth(omega/2T) cos(omega t).
/// Quadrature split at omega = lambda; each panel's order grows until two
/// refinements agree to 1e-9.
pub fn noise_kernel(spec: &BathSpec, t: f64) -> Result<f64> {
    if spec.gamma == 0.0 {
        return Ok(0.0);
    }
    noise_transform(spec, |omega| (omega * t).cos(), t.abs())
}

/// Shared machinery for nu(t) and its moments: integrates
/// noise_weight(omega) * factor(omega) over the spectral support.
fn noise_transform(spec: &BathSpec, factor: impl Fn(f64) -> f64, osc: f64) -> Result<f64> {
    let cut = OMEGA_CUT_FACTOR * spec.lambda;
    let f = |omega: f64| spec.noise_weight(omega) * factor(omega);
    let scale = spec.noise_scale();
    // Base order tracks the number of cos oscillations across each panel.
    let base = |width: f64| -> usize {
        let cycles = width * osc / (2.0 * PI);
        ((4.0 * cycles) as usize).clamp(16, 4096).next_power_of_two()
    };
    let (left, _) =
        quad::integrate_adaptive(&f, 0.0, spec.lambda, base(spec.lambda), QUAD_REL_TOL, scale)?;
    let (right, _) = quad::integrate_adaptive(
        &f,
        spec.lambda,
        cut,
        base(cut - spec.lambda),
        QUAD_REL_TOL,
        scale,
    )?;
    let val = left + right;
    if !val.is_finite() {
        return Err(Error::NonFinite("noise kernel quadrature".into()));
    }
    Ok(val)
}

/// Zeroth and second frequency moments of the noise kernel:
/// nu0 = nu(0), nu2 = -int omega^2 J/2 coth(omega/2T) d omega.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuMoments {
    pub nu0: f64,
    pub nu2: f64,
}

pub fn nu_moments(spec: &BathSpec) -> Result<NuMoments> {
    if spec.gamma == 0.0 {
        return Ok(NuMoments { nu0: 0.0, nu2: 0.0 });
    }
    let nu0 = noise_kernel(spec, 0.0)?;
    let nu2 = -noise_transform(spec, |omega| omega * omega, 0.0)?;
    Ok(NuMoments { nu0, nu2 })
}

/// Both kernels sampled on the uniform grid t_i = i h, i = 0..ceil(t_max/h).
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub spec: BathSpec,
    pub step: f64,
    pub gamma: Vec<f64>,
    pub nu: Vec<f64>,
}

impl KernelTable {
    pub fn t_max(&self) -> f64 {
        self.step * (self.gamma.len() - 1) as f64
    }
}

pub fn tabulate_kernels(spec: &BathSpec, h: f64, t_max: f64) -> Result<KernelTable> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter { name: "h", reason: format!("got {h}") });
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter { name: "t_max", reason: format!("got {t_max}") });
    }
    let n = (t_max / h).ceil() as usize + 1;
    let mut gamma = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * h;
        gamma.push(memory_kernel(spec, t));
        nu.push(noise_kernel(spec, t)?);
    }
    Ok(KernelTable { spec: *spec, step: h, gamma, nu })
}
