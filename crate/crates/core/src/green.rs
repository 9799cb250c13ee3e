//! Green function of the damped oscillator with memory:
//!
//!   Gdd(t) + int_0^t gamma(t - t') Gd(t') dt' + G(t) = 0,
//!   G(0) = 0, Gd(0) = 1.
//!
//! Solved by second-order product integration: the memory integral is
//! discretized with trapezoidal weights on the kernel grid and the resulting
//! implicit (Crank-Nicolson) update is solved for Gd at each step. The scheme
//! conserves G^2 + Gd^2 exactly when gamma = 0 and converges at O(h^2).

use crate::bath::{BathSpec, KernelTable};
use crate::error::{Error, Result};

/// G, Gd and Gdd sampled on the same uniform grid as the kernel table.
#[derive(Debug, Clone)]
pub struct GreenTable {
    pub spec: BathSpec,
    pub step: f64,
    pub g: Vec<f64>,
    pub gdot: Vec<f64>,
    pub gddot: Vec<f64>,
}

impl GreenTable {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.step * (self.g.len() - 1) as f64
    }
}

/// March the Volterra integro-differential equation to `t_max` on the grid of
/// `kernels`. Fails if the kernel table does not reach `t_max`.
pub fn solve_green(kernels: &KernelTable, t_max: f64) -> Result<GreenTable> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter { name: "t_max", reason: format!("got {t_max}") });
    }
    let h = kernels.step;
    let steps = ((t_max / h) - 1e-9).ceil().max(1.0) as usize;
    if steps + 1 > kernels.gamma.len() {
        return Err(Error::HorizonExceeded { t: t_max, horizon: kernels.t_max() });
    }

    // The damping kernel decays fast; past `support` samples every entry is
    // below 1e-18 of the peak and the convolution sum can skip it.
    let support = {
        let peak = kernels.gamma.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if peak == 0.0 {
            0
        } else {
            let thr = peak * 1e-18;
            kernels.gamma.iter().rposition(|k| k.abs() >= thr).map_or(0, |i| i + 1)
        }
    };

    let g0k = kernels.gamma[0];
    let denom = 1.0 + 0.25 * h * h * (1.0 + g0k);
    let mut g = Vec::with_capacity(steps + 1);
    let mut v = Vec::with_capacity(steps + 1);
    let mut a = Vec::with_capacity(steps + 1);
    g.push(0.0);
    v.push(1.0);
    a.push(0.0);

    for i in 0..steps {
        // Trapezoidal convolution over the already-known slope history:
        // s = h (1/2 gamma_{i+1} v_0 + sum_{j=1..i} gamma_{i+1-j} v_j),
        // restricted to kernel indices inside the support window.
        let mut s = 0.0;
        if support > 0 {
            let kmax = i.min(support - 1);
            for k in 1..=kmax {
                s += kernels.gamma[k] * v[i + 1 - k];
            }
            if i + 1 < support {
                s += 0.5 * kernels.gamma[i + 1] * v[0];
            }
            s *= h;
        }
        let vn = (v[i] * (1.0 - 0.25 * h * h) + 0.5 * h * (a[i] - g[i] - s)) / denom;
        let gn = g[i] + 0.5 * h * (v[i] + vn);
        let an = -gn - (s + 0.5 * h * g0k * vn);
        if !(vn.is_finite() && gn.is_finite()) {
            return Err(Error::NonFinite(format!("green solve diverged at step {}", i + 1)));
        }
        g.push(gn);
        v.push(vn);
        a.push(an);
    }

    Ok(GreenTable { spec: kernels.spec, step: h, g, gdot: v, gddot: a })
}

/// Leading short-time correction of the Green function, G(t) ~ t + g3 t^3/6,
/// fitted by least squares on the first `m` interior grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesFit {
    pub g3: f64,
    /// Relative rms misfit of the cubic model over the fit window.
    pub residual: f64,
}

pub fn series_coefficients(green: &GreenTable, m: usize) -> Result<SeriesFit> {
    if m < 3 {
        return Err(Error::InvalidParameter { name: "m", reason: format!("got {m}, need >= 3") });
    }
    if green.g.len() < m + 1 {
        return Err(Error::InsufficientSamples {
            what: "green samples",
            min: m + 1,
            got: green.g.len(),
        });
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 1..=m {
        let t = i as f64 * green.step;
        let x = t * t * t / 6.0;
        let y = green.g[i] - t;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    if sxx == 0.0 {
        return Err(Error::Singular("series design matrix"));
    }
    let g3 = sxy / sxx;
    let misfit = (syy - g3 * sxy).max(0.0);
    let residual = (misfit / syy.max(f64::MIN_POSITIVE)).sqrt();
    Ok(SeriesFit { g3, residual })
}
