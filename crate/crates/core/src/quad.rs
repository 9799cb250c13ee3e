//! Gauss-Legendre quadrature with a node cache and a self-validating
//! integrator that doubles the rule order until two refinements agree.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of a quadrature rule on [-1, 1].
type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Computed by Newton iteration on the Legendre polynomial; cached because the
/// noise-kernel quadrature requests the same sizes millions of times.
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Recurrence for P_n(z) and its derivative.
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// n-point Gauss-Legendre approximation of the integral of `f` over [a, b].
pub fn integrate_fixed(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let (x, w) = (&rule.0, &rule.1);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += w[i] * f(mid + half * x[i]);
    }
    acc * half
}

/// Integrate `f` over [a, b], doubling the rule order from `n0` until two
/// successive rules agree to `rel_tol` relative to max(|I|, `scale`).
/// Returns the value together with the achieved error estimate.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    n0: usize,
    rel_tol: f64,
    scale: f64,
) -> Result<(f64, f64)> {
    let mut n = n0.max(8);
    let mut prev = integrate_fixed(f, a, b, n);
    let mut last_err = f64::INFINITY;
    while n < 16384 {
        n *= 2;
        let cur = integrate_fixed(f, a, b, n);
        last_err = (cur - prev).abs();
        if last_err <= rel_tol * cur.abs().max(scale) {
            return Ok((cur, last_err));
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged { achieved: last_err, requested: rel_tol })
}
