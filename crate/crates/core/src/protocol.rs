//! Sequential measurement protocol: split a fixed total time into N equal
//! prepare-evolve-measure windows, optimize the squeezing angle of every
//! window independently (the QFI is additive over windows), and scan N for
//! the optimum. Includes the closed-form asymptotics, the power-law fits of
//! N_opt and H_opt against the preparation energy, and the rescaling of both
//! onto a common total-energy axis.

use crate::bath::{nu_moments, BathSpec};
use crate::dynamics::{thermal_occupancy, Bath, ForceShape, ShapeTag, SqueezeParams, WindowTables};
use crate::error::{Error, Result};
use crate::qfi::{optimize_theta, WindowContext};
use crate::quad;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Everything needed to evaluate the protocol at one squeeze magnitude.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub spec: BathSpec,
    pub bath: Bath,
    pub shape: ForceShape,
    pub r: f64,
    pub t_tot: f64,
    /// Largest N the scan may visit; `None` derives a cap of four times the
    /// predicted optimum (at least 16).
    pub n_max: Option<u32>,
    /// Upper bound on the window grid step.
    pub h_max: f64,
    /// Minimum number of grid cells per window.
    pub window_subdiv: u32,
}

impl ProtocolConfig {
    pub fn new(spec: BathSpec, bath: Bath, shape: ForceShape, r: f64, t_tot: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter { name: "r", reason: format!("got {r}") });
        }
        if !(t_tot > 0.0 && t_tot.is_finite()) {
            return Err(Error::InvalidParameter { name: "t_tot", reason: format!("got {t_tot}") });
        }
        Ok(Self { spec, bath, shape, r, t_tot, n_max: None, h_max: 0.005, window_subdiv: 64 })
    }

    pub fn with_n_max(mut self, n_max: u32) -> Self {
        self.n_max = Some(n_max.max(1));
        self
    }

    pub fn with_grid(mut self, h_max: f64, window_subdiv: u32) -> Result<Self> {
        if !(h_max > 0.0 && h_max.is_finite()) {
            return Err(Error::InvalidParameter { name: "h_max", reason: format!("got {h_max}") });
        }
        if window_subdiv == 0 {
            return Err(Error::InvalidParameter {
                name: "window_subdiv",
                reason: "got 0".into(),
            });
        }
        self.h_max = h_max;
        self.window_subdiv = window_subdiv;
        Ok(self)
    }

    fn window_step(&self, tau: f64) -> f64 {
        self.h_max.min(tau / self.window_subdiv as f64)
    }

    fn nbar(&self) -> f64 {
        thermal_occupancy(self.spec.temperature)
    }

    /// Scan cap: four times the predicted optimal window count,
    /// N_pred = t_tot sqrt(2 nu0 xi), floored at 16.
    fn resolved_n_max(&self) -> Result<u32> {
        if let Some(m) = self.n_max {
            return Ok(m.max(1));
        }
        let xi = (2.0 * self.r).exp();
        let nu0 = nu_moments(&self.spec)?.nu0;
        let predicted = self.t_tot * (2.0 * nu0 * xi).sqrt();
        Ok(((4.0 * predicted).ceil() as u32).max(16))
    }
}

/// Cache of per-window tables keyed by N. Windows of the same length share
/// their kernel, Green and noise tables across squeeze magnitudes and force
/// shapes, which is what makes r-sweeps affordable. The cache is locked to
/// the first configuration it serves.
#[derive(Debug, Default)]
pub struct WindowCache {
    inner: Mutex<CacheState>,
}

#[derive(Debug, Default)]
struct CacheState {
    fingerprint: Option<[f64; 6]>,
    tables: HashMap<u32, Arc<WindowTables>>,
}

impl WindowCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn tables_for(&self, cfg: &ProtocolConfig, n: u32) -> Result<Arc<WindowTables>> {
        let fp = [
            cfg.spec.gamma,
            cfg.spec.lambda,
            cfg.spec.temperature,
            cfg.t_tot,
            cfg.h_max,
            cfg.window_subdiv as f64,
        ];
        {
            let mut state = self.inner.lock().unwrap();
            match state.fingerprint {
                Some(existing) if existing != fp => {
                    return Err(Error::GridMismatch(
                        "window cache reused across different configurations".into(),
                    ))
                }
                Some(_) => {}
                None => state.fingerprint = Some(fp),
            }
            if let Some(tables) = state.tables.get(&n) {
                return Ok(tables.clone());
            }
        }
        // Build outside the lock so other window sizes can proceed.
        let tau = cfg.t_tot / n as f64;
        let tables = Arc::new(WindowTables::build(&cfg.spec, tau, cfg.window_step(tau))?);
        let mut state = self.inner.lock().unwrap();
        Ok(state.tables.entry(n).or_insert(tables).clone())
    }
}

/// Outcome of running the protocol at a fixed window count.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub n: u32,
    pub tau: f64,
    /// Total QFI, the sum of the per-window contributions.
    pub h_total: f64,
    pub h_per_step: Vec<f64>,
    /// Optimal squeezing angle of each window. Windows with an exactly
    /// vanishing response contribute zero QFI and report angle 0.
    pub thetas: Vec<f64>,
}

/// Evaluate the protocol at window count `n`: each window is re-prepared in
/// the same squeezed state, its angle optimized independently, and the force
/// shape is evaluated at absolute time.
pub fn sequential_qfi(cfg: &ProtocolConfig, n: u32, cache: &WindowCache) -> Result<ProtocolResult> {
    if n < 1 {
        return Err(Error::InvalidParameter { name: "n", reason: "got 0".into() });
    }
    let tau = cfg.t_tot / n as f64;
    let tables = match cfg.bath {
        Bath::NonMarkovian => Some(cache.tables_for(cfg, n)?),
        _ => None,
    };
    let ctx = match cfg.bath {
        Bath::Ideal => WindowContext::Ideal,
        Bath::Markovian => WindowContext::Markovian { gamma: cfg.spec.gamma, nbar: cfg.nbar() },
        Bath::NonMarkovian => WindowContext::NonMarkovian(tables.as_deref().unwrap()),
    };

    let window = |start: f64| -> Result<(f64, f64)> {
        match optimize_theta(&ctx, &cfg.shape, cfg.r, start, tau) {
            Ok(res) => Ok((res.h, res.theta)),
            Err(Error::ZeroResponse) => Ok((0.0, 0.0)),
            Err(e) => Err(e),
        }
    };

    let (h_per_step, thetas) = match cfg.shape {
        // Constant force: every window sees the same problem.
        ForceShape::Constant => {
            let (h, theta) = window(0.0)?;
            (vec![h; n as usize], vec![theta; n as usize])
        }
        _ => {
            let mut hs = Vec::with_capacity(n as usize);
            let mut ts = Vec::with_capacity(n as usize);
            for k in 0..n {
                let (h, theta) = window(k as f64 * tau)?;
                hs.push(h);
                ts.push(theta);
            }
            (hs, ts)
        }
    };
    let h_total = h_per_step.iter().sum();
    Ok(ProtocolResult { n, tau, h_total, h_per_step, thetas })
}

/// Scan result: the optimum plus the full H(N) curve (sorted by N).
#[derive(Debug, Clone)]
pub struct ProtocolScan {
    pub n_opt: u32,
    pub best: ProtocolResult,
    pub curve: Vec<(u32, f64)>,
}

/// Find the window count maximizing the total QFI. N <= 256 is scanned
/// exhaustively; above that a geometric (x1.1) ladder reaches the cap and
/// the neighborhood of the coarse optimum is re-scanned exhaustively. An
/// optimum at the cap itself is reported as unconverged.
pub fn optimize_protocol(cfg: &ProtocolConfig, cache: &WindowCache) -> Result<ProtocolScan> {
    let n_max = cfg.resolved_n_max()?;
    let exact_hi = n_max.min(256);
    let mut candidates: Vec<u32> = (1..=exact_hi).collect();
    if n_max > exact_hi {
        let mut x = exact_hi as f64;
        loop {
            x *= 1.1;
            let v = x.ceil() as u32;
            if v >= n_max {
                break;
            }
            candidates.push(v);
        }
        candidates.push(n_max);
    }

    let mut curve = eval_candidates(cfg, cache, &candidates)?;

    // Exhaustive pass over the cell of the geometric ladder containing the
    // coarse optimum (plus its lower neighbor cell).
    let coarse_best = argmax(&curve);
    if curve[coarse_best].0 > exact_hi {
        let lo = if coarse_best > 0 { curve[coarse_best - 1].0 } else { 1 };
        let hi = curve.get(coarse_best + 1).map_or(curve[coarse_best].0, |&(n, _)| n);
        let fill: Vec<u32> =
            (lo + 1..hi).filter(|n| curve.binary_search_by_key(n, |&(m, _)| m).is_err()).collect();
        let extra = eval_candidates(cfg, cache, &fill)?;
        curve.extend(extra);
        curve.sort_unstable_by_key(|&(n, _)| n);
    }

    let best_i = argmax(&curve);
    let n_opt = curve[best_i].0;
    if n_opt == n_max && n_max > 1 {
        return Err(Error::ScanBoundary(n_max));
    }
    let best = sequential_qfi(cfg, n_opt, cache)?;
    Ok(ProtocolScan { n_opt, best, curve })
}

fn eval_candidates(
    cfg: &ProtocolConfig,
    cache: &WindowCache,
    candidates: &[u32],
) -> Result<Vec<(u32, f64)>> {
    candidates
        .par_iter()
        .map(|&n| sequential_qfi(cfg, n, cache).map(|res| (n, res.h_total)))
        .collect()
}

fn argmax(curve: &[(u32, f64)]) -> usize {
    let mut best = 0;
    for (i, &(_, h)) in curve.iter().enumerate() {
        if h > curve[best].1 {
            best = i;
        }
    }
    best
}

/// Closed-form large-xi optimum of the protocol.
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticQfi {
    pub n_opt: f64,
    pub h_opt: f64,
    pub tau_opt: f64,
    /// Whether the fast-measurement conditions behind the formulas hold.
    pub in_regime: bool,
}

/// Integral of the squared force shape over the full probing time.
fn shape_power(shape: &ForceShape, t_tot: f64) -> Result<f64> {
    match shape {
        ForceShape::Constant => Ok(t_tot),
        ForceShape::Resonant => Ok(0.5 * t_tot + 0.25 * (2.0 * t_tot).sin()),
        ForceShape::Custom(f) => {
            let squared = |s: f64| f(s) * f(s);
            let (val, _) = quad::integrate_adaptive(&squared, 0.0, t_tot, 32, 1e-10, t_tot)?;
            Ok(val)
        }
    }
}

/// Closed-form predictions for the optimal window count and total QFI in the
/// many-window regime.
///
/// Exact bath: tau_opt = (2 nu0 xi)^{-1/2}, N_opt = t_tot/tau_opt and
/// H_opt = sqrt(xi / 2 nu0) * int s^2. Markovian bath: expanding
/// |b|^2/lambda_min per window gives tau_opt = (6/(gamma xi))^{1/3} and
/// H_opt = (2/gamma) int s^2 - (int s^2 / 2 gamma) tau_opt^2.
pub fn asymptotic_qfi(cfg: &ProtocolConfig) -> Result<AsymptoticQfi> {
    let xi = (2.0 * cfg.r).exp();
    let s2 = shape_power(&cfg.shape, cfg.t_tot)?;
    match cfg.bath {
        Bath::NonMarkovian => {
            let nu0 = nu_moments(&cfg.spec)?.nu0;
            if nu0 <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "spec.gamma",
                    reason: "the exact-bath asymptotics need a coupled bath (nu0 > 0)".into(),
                });
            }
            let tau_opt = 1.0 / (2.0 * nu0 * xi).sqrt();
            let n_opt = cfg.t_tot / tau_opt;
            let h_opt = (xi / (2.0 * nu0)).sqrt() * s2;
            Ok(AsymptoticQfi { n_opt, h_opt, tau_opt, in_regime: in_regime(cfg, tau_opt, n_opt) })
        }
        Bath::Markovian => {
            let gamma = cfg.spec.gamma;
            if gamma <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "spec.gamma",
                    reason: "the Markovian asymptotics need gamma > 0".into(),
                });
            }
            let tau_opt = (6.0 / (gamma * xi)).cbrt();
            let n_opt = cfg.t_tot / tau_opt;
            let h_opt = 2.0 * s2 / gamma - s2 / (2.0 * gamma) * tau_opt * tau_opt;
            Ok(AsymptoticQfi { n_opt, h_opt, tau_opt, in_regime: in_regime(cfg, tau_opt, n_opt) })
        }
        Bath::Ideal => Err(Error::InvalidParameter {
            name: "bath",
            reason: "the free oscillator has no optimal window count (N = 1 is best)".into(),
        }),
    }
}

/// Fast-measurement validity: the optimal window must be much shorter than
/// the slowest dynamical timescale, and the window count large.
fn in_regime(cfg: &ProtocolConfig, tau_opt: f64, n_opt: f64) -> bool {
    let slowest = if cfg.spec.gamma > 0.0 {
        (1.0 / cfg.spec.gamma).max(1.0).max(1.0 / cfg.spec.lambda)
    } else {
        1.0f64.max(1.0 / cfg.spec.lambda)
    };
    tau_opt <= 0.1 * slowest && n_opt >= 10.0
}

/// Models for the energy-scaling fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel {
    /// y = amplitude * x^exponent, exponent pinned.
    Power { exponent: f64 },
    /// y = plateau - drop * x^exponent, exponent pinned (negative here).
    ShiftedPower { exponent: f64 },
}

#[derive(Debug, Clone, Copy)]
pub enum ScalingFit {
    Power { amplitude: f64, residual: f64 },
    Shifted { plateau: f64, drop: f64, residual: f64 },
}

impl ScalingFit {
    pub fn residual(&self) -> f64 {
        match *self {
            ScalingFit::Power { residual, .. } | ScalingFit::Shifted { residual, .. } => residual,
        }
    }
}

/// Least-squares fit of `ys` against `xs` under the given model. Residual is
/// the rms misfit relative to the rms of the data.
pub fn fit_scaling(xs: &[f64], ys: &[f64], model: FitModel) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::GridMismatch(format!("{} xs vs {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 6 {
        return Err(Error::InsufficientSamples { what: "fit samples", min: 6, got: xs.len() });
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite(format!("fit sample ({x}, {y})")));
        }
    }
    let n = xs.len() as f64;
    let rms_y = (ys.iter().map(|y| y * y).sum::<f64>() / n).sqrt().max(f64::MIN_POSITIVE);
    match model {
        FitModel::Power { exponent } => {
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for (&x, &y) in xs.iter().zip(ys) {
                let z = x.powf(exponent);
                sxx += z * z;
                sxy += z * y;
            }
            if sxx <= 0.0 {
                return Err(Error::Singular("power-fit design matrix"));
            }
            let amplitude = sxy / sxx;
            let misfit = xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| {
                    let e = y - amplitude * x.powf(exponent);
                    e * e
                })
                .sum::<f64>()
                / n;
            Ok(ScalingFit::Power { amplitude, residual: misfit.sqrt() / rms_y })
        }
        FitModel::ShiftedPower { exponent } => {
            let (mut sz, mut szz, mut sy, mut szy) = (0.0, 0.0, 0.0, 0.0);
            for (&x, &y) in xs.iter().zip(ys) {
                let z = x.powf(exponent);
                sz += z;
                szz += z * z;
                sy += y;
                szy += z * y;
            }
            // Normal equations of y = a - b z.
            let det = sz * sz - n * szz;
            if det.abs() <= 1e-12 * (n * szz).abs().max(1.0) {
                return Err(Error::Singular("shifted-fit design matrix"));
            }
            let plateau = (sz * szy - sy * szz) / det;
            let drop = (n * szy - sz * sy) / det;
            let misfit = xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| {
                    let e = y - (plateau - drop * x.powf(exponent));
                    e * e
                })
                .sum::<f64>()
                / n;
            Ok(ScalingFit::Shifted { plateau, drop, residual: misfit.sqrt() / rms_y })
        }
    }
}

/// One point of an r-sweep: the protocol optimum and the preparation energy.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub r: f64,
    pub energy: f64,
    pub n_opt: u32,
    pub h_opt: f64,
}

/// Optimize the protocol at every squeeze magnitude in `rs` (shared window
/// tables make this far cheaper than independent runs).
pub fn sweep_r(cfg: &ProtocolConfig, rs: &[f64], cache: &WindowCache) -> Result<Vec<SweepPoint>> {
    rs.par_iter()
        .map(|&r| {
            let cfg_r = ProtocolConfig { r, ..cfg.clone() };
            let energy = SqueezeParams::new(r, 0.0)?.energy();
            let scan = optimize_protocol(&cfg_r, cache)?;
            Ok(SweepPoint { r, energy, n_opt: scan.n_opt, h_opt: scan.best.h_total })
        })
        .collect()
}

/// Sweep plus the branch-appropriate scaling fits: the exact bath follows
/// N_opt, H_opt ~ sqrt(E); the Markovian bath follows N_opt ~ E^{1/3} and a
/// plateau H_opt = c1 - c2 E^{-2/3}.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub t_tot: f64,
    pub bath: Bath,
    pub shape: ShapeTag,
    pub points: Vec<SweepPoint>,
    pub n_fit: ScalingFit,
    pub h_fit: ScalingFit,
}

pub fn scaling_report(
    cfg: &ProtocolConfig,
    rs: &[f64],
    cache: &WindowCache,
) -> Result<ScalingReport> {
    let points = sweep_r(cfg, rs, cache)?;
    let es: Vec<f64> = points.iter().map(|p| p.energy).collect();
    let ns: Vec<f64> = points.iter().map(|p| p.n_opt as f64).collect();
    let hs: Vec<f64> = points.iter().map(|p| p.h_opt).collect();
    let (n_fit, h_fit) = match cfg.bath {
        Bath::NonMarkovian => (
            fit_scaling(&es, &ns, FitModel::Power { exponent: 0.5 })?,
            fit_scaling(&es, &hs, FitModel::Power { exponent: 0.5 })?,
        ),
        Bath::Markovian => (
            fit_scaling(&es, &ns, FitModel::Power { exponent: 1.0 / 3.0 })?,
            fit_scaling(&es, &hs, FitModel::ShiftedPower { exponent: -2.0 / 3.0 })?,
        ),
        Bath::Ideal => {
            return Err(Error::InvalidParameter {
                name: "bath",
                reason: "scaling fits apply to the damped branches".into(),
            })
        }
    };
    Ok(ScalingReport { t_tot: cfg.t_tot, bath: cfg.bath, shape: cfg.shape.tag(), points, n_fit, h_fit })
}

/// Both branches rescaled onto the total-energy axis E_tot = N_opt * E:
/// the exact-bath rate H_opt/t_tot grows without bound as
/// d1' (E_tot/t_tot)^{1/3} while the Markovian rate saturates at c1' with a
/// c2' (E_tot/t_tot)^{-1/2} approach.
#[derive(Debug, Clone)]
pub struct TotalEnergyView {
    pub d1_prime: f64,
    pub c1_prime: f64,
    pub c2_prime: f64,
    /// (E_tot/t_tot, H_opt/t_tot) for the exact branch.
    pub nm_curve: Vec<(f64, f64)>,
    /// Same axes for the Markovian branch.
    pub mk_curve: Vec<(f64, f64)>,
}

pub fn total_energy_view(nm: &ScalingReport, mk: &ScalingReport) -> Result<TotalEnergyView> {
    if nm.bath != Bath::NonMarkovian || mk.bath != Bath::Markovian {
        return Err(Error::InvalidParameter {
            name: "bath",
            reason: "expected one exact-bath and one Markovian report".into(),
        });
    }
    if (nm.t_tot - mk.t_tot).abs() > 1e-12 * nm.t_tot {
        return Err(Error::GridMismatch(format!(
            "reports cover different probing times: {} vs {}",
            nm.t_tot, mk.t_tot
        )));
    }
    let t = nm.t_tot;
    let (d0, d1) = match (nm.n_fit, nm.h_fit) {
        (
            ScalingFit::Power { amplitude: d0, .. },
            ScalingFit::Power { amplitude: d1, .. },
        ) => (d0, d1),
        _ => return Err(Error::InvalidParameter { name: "nm", reason: "wrong fit models".into() }),
    };
    let (c0, c1, c2) = match (mk.n_fit, mk.h_fit) {
        (
            ScalingFit::Power { amplitude: c0, .. },
            ScalingFit::Shifted { plateau: c1, drop: c2, .. },
        ) => (c0, c1, c2),
        _ => return Err(Error::InvalidParameter { name: "mk", reason: "wrong fit models".into() }),
    };
    // Substituting E = (E_tot/(d0 t))^{2/3} resp. (E_tot/(c0 t))^{3/4} into
    // the fitted laws and dividing by t_tot.
    let d1_prime = d1 * (d0 * t * t).powf(-1.0 / 3.0);
    let c1_prime = c1 / t;
    let c2_prime = c2 * (c0 / (t * t * t)).sqrt();
    let rescale = |points: &[SweepPoint]| -> Vec<(f64, f64)> {
        points
            .iter()
            .map(|p| (p.n_opt as f64 * p.energy / t, p.h_opt / t))
            .collect()
    };
    Ok(TotalEnergyView {
        d1_prime,
        c1_prime,
        c2_prime,
        nm_curve: rescale(&nm.points),
        mk_curve: rescale(&mk.points),
    })
}

/// One sample of the single-window QFI curve H_opt(t).
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub t: f64,
    pub h_opt: f64,
    pub theta_opt: f64,
}

/// Single-window optimized QFI on a uniform grid of `steps` intervals over
/// [0, t_tot]. The first row is the trivial (0, 0, 0) point.
pub fn qfi_curve(cfg: &ProtocolConfig, steps: u32) -> Result<Vec<CurvePoint>> {
    if steps < 1 {
        return Err(Error::InvalidParameter { name: "steps", reason: "got 0".into() });
    }
    let dt = cfg.t_tot / steps as f64;
    let tables = match cfg.bath {
        Bath::NonMarkovian => {
            // Refine the sample spacing to at most h_max so every sample time
            // lands exactly on the table grid.
            let per_cell = (dt / cfg.h_max).ceil().max(1.0) as u32;
            let h_target = cfg.t_tot / (steps * per_cell) as f64;
            Some(Arc::new(WindowTables::build(&cfg.spec, cfg.t_tot, h_target)?))
        }
        _ => None,
    };
    let ctx = match cfg.bath {
        Bath::Ideal => WindowContext::Ideal,
        Bath::Markovian => WindowContext::Markovian { gamma: cfg.spec.gamma, nbar: cfg.nbar() },
        Bath::NonMarkovian => WindowContext::NonMarkovian(tables.as_deref().unwrap()),
    };
    let mut curve = Vec::with_capacity(steps as usize + 1);
    curve.push(CurvePoint { t: 0.0, h_opt: 0.0, theta_opt: 0.0 });
    for i in 1..=steps {
        let t = i as f64 * dt;
        match optimize_theta(&ctx, &cfg.shape, cfg.r, 0.0, t) {
            Ok(res) => curve.push(CurvePoint { t, h_opt: res.h, theta_opt: res.theta }),
            Err(Error::ZeroResponse) => curve.push(CurvePoint { t, h_opt: 0.0, theta_opt: 0.0 }),
            Err(e) => return Err(e),
        }
    }
    Ok(curve)
}
