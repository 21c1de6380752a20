//! Double-exponential quadrature.
//!
//! Used for the heat-kernel moment oracle and the Duhamel time-kernel
//! identity; both integrands have algebraic endpoint singularities that
//! tanh-sinh handles without special casing.

use std::f64::consts::FRAC_PI_2;

const MAX_LEVELS: usize = 12;

/// `int_a^b f`, where `f(x, x - a, b - x)` receives both endpoint distances
/// computed without cancellation.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, rel_tol: f64) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    let half = 0.5 * (b - a);
    // Far enough out that the endpoint distance underflows, which strong
    // algebraic singularities need.
    let t_max = 6.5;
    let node = |t: f64| -> Option<f64> {
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cu * cu);
        // 1 - tanh|u| = 2 / (1 + e^{2|u|})
        let gap = half * 2.0 / (1.0 + (2.0 * u.abs()).exp());
        if gap <= 0.0 || w == 0.0 {
            return None;
        }
        let (x, da, db) = if u >= 0.0 {
            (b - gap, 2.0 * half - gap, gap)
        } else {
            (a + gap, gap, 2.0 * half - gap)
        };
        let v = f(x, da, db);
        Some(half * w * v)
    };
    let mut h = 1.0;
    let mut sum = node(0.0).unwrap_or(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        let t = k as f64 * h;
        sum += node(t).unwrap_or(0.0) + node(-t).unwrap_or(0.0);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..MAX_LEVELS {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            let t = k as f64 * h;
            sum += node(t).unwrap_or(0.0) + node(-t).unwrap_or(0.0);
            k += 2;
        }
        let next = sum * h;
        let done = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// `int_0^inf f` via `x = exp(pi/2 sinh t)`.
pub fn exp_sinh<F>(f: F, rel_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let t_lo = -4.5;
    let t_hi = 4.0;
    let node = |t: f64| -> f64 {
        let x = (FRAC_PI_2 * t.sinh()).exp();
        if x == 0.0 || !x.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            FRAC_PI_2 * t.cosh() * x * v
        }
    };
    let mut h = 0.5;
    let count = |h: f64| ((t_hi - t_lo) / h).round() as usize;
    let mut sum: f64 = (0..=count(h)).map(|k| node(t_lo + k as f64 * h)).sum();
    let mut estimate = sum * h;
    for _ in 0..MAX_LEVELS {
        h *= 0.5;
        let n = count(h);
        sum += (1..n)
            .step_by(2)
            .map(|k| node(t_lo + k as f64 * h))
            .sum::<f64>();
        let next = sum * h;
        let done = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}
