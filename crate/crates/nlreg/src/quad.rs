//! Quadrature building blocks used across the crate: cached Gauss-Legendre
//! rules, adaptive bisection with an error estimate, dyadic decompositions
//! for integrands with a power singularity at zero or a power tail at
//! infinity, and oscillatory power-tail integrals evaluated by an
//! integration-by-parts series with a certified truncation bound.

use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Nodes and weights of a Gauss-Legendre rule on [-1, 1], nodes ascending.
#[derive(Debug, Clone)]
pub struct GlRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static RULES: Lazy<Mutex<HashMap<usize, Arc<GlRule>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Legendre P_n and its derivative at x by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn build_rule(n: usize) -> GlRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Root i counted from the right; standard cosine initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, d) = legendre(n, x);
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        // Enforce exact symmetry of the rule.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    GlRule { nodes, weights }
}

/// The `order`-point Gauss-Legendre rule, computed once per process.
pub fn gauss_legendre(order: usize) -> Arc<GlRule> {
    assert!((1..=256).contains(&order), "unsupported rule order {order}");
    let mut cache = RULES.lock().unwrap();
    cache
        .entry(order)
        .or_insert_with(|| Arc::new(build_rule(order)))
        .clone()
}

/// Fixed-order Gauss-Legendre integral of f over [a, b].
pub fn gl_integrate<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rule: &GlRule) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive bisection with an embedded GL(8)/GL(16) error estimate.
/// Returns (value, error_estimate). The budget is generous; integrands in
/// this crate are smooth away from endpoints.
pub fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let coarse_rule = gauss_legendre(8);
    let fine_rule = gauss_legendre(16);
    struct Seg {
        a: f64,
        b: f64,
        fine: f64,
        err: f64,
        depth: u32,
    }
    let make = |f: &mut F, a: f64, b: f64, depth: u32| {
        let coarse = gl_integrate(f, a, b, &coarse_rule);
        let fine = gl_integrate(f, a, b, &fine_rule);
        Seg { a, b, fine, err: (fine - coarse).abs(), depth }
    };
    let whole = make(f, a, b, 0);
    let mut scale = whole.fine.abs().max(1e-300);
    let mut done_val = 0.0;
    let mut done_err = 0.0;
    let mut stack = vec![whole];
    while let Some(seg) = stack.pop() {
        let local_tol = rel_tol * scale * ((seg.b - seg.a) / (b - a)).max(1e-6);
        if seg.err <= local_tol || seg.depth >= 44 {
            done_val += seg.fine;
            done_err += seg.err;
        } else {
            let mid = 0.5 * (seg.a + seg.b);
            let left = make(f, seg.a, mid, seg.depth + 1);
            let right = make(f, mid, seg.b, seg.depth + 1);
            scale = scale.max(done_val.abs() + left.fine.abs() + right.fine.abs());
            stack.push(left);
            stack.push(right);
        }
    }
    (done_val, done_err)
}

/// Adaptive integral that ignores the error estimate.
pub fn integrate<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rel_tol: f64) -> f64 {
    adaptive(f, a, b, rel_tol).0
}

/// Integral of f over (0, hi] for integrands with an integrable power
/// singularity at 0. Dyadic annuli toward zero with GL(16) per annulus;
/// stops when contributions decay geometrically and appends the geometric
/// continuation of the remainder.
pub fn dyadic_lower<F: FnMut(f64) -> f64>(f: &mut F, hi: f64, rel_tol: f64) -> f64 {
    assert!(hi > 0.0);
    let rule = gauss_legendre(16);
    let mut total = 0.0;
    let mut prev = f64::INFINITY;
    let mut small_run = 0;
    let mut upper = hi;
    for level in 0..1000 {
        let lower = 0.5 * upper;
        let c = gl_integrate(f, lower, upper, &rule);
        total += c;
        if level > 0 {
            if c.abs() <= rel_tol * total.abs().max(1e-300) {
                small_run += 1;
            } else {
                small_run = 0;
            }
            if small_run >= 2 && level >= 4 {
                let q = (c.abs() / prev.abs().max(1e-300)).min(0.95);
                total += c * q / (1.0 - q);
                return total;
            }
        }
        prev = c;
        upper = lower;
        if upper < 1e-290 {
            break;
        }
    }
    total
}

/// Integral of f over [lo, inf) for integrands with power decay, via the
/// substitution y = lo / t mapping onto (0, 1].
pub fn tail_integral<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, rel_tol: f64) -> f64 {
    assert!(lo > 0.0);
    dyadic_lower(&mut |t: f64| f(lo / t) * lo / (t * t), 1.0, rel_tol)
}

/// Oscillatory power tail: the integral of y^{-a} cos(omega*y + phi) over
/// [r0, inf) for a > 1, omega >= 0.
///
/// The head [r0, R] with omega*R = a + 45 is integrated adaptively; beyond R
/// the integration-by-parts series is summed until its certified remainder
/// bound (the crude integral bound on the next level) drops below abs_tol.
pub fn osc_power_tail(a: f64, omega: f64, phi: f64, r0: f64, abs_tol: f64) -> f64 {
    assert!(a > 1.0 && r0 > 0.0 && omega >= 0.0);
    if omega == 0.0 {
        return phi.cos() * r0.powf(1.0 - a) / (a - 1.0);
    }
    let safe = ((a + 45.0) / omega).max(r0);
    let mut head = 0.0;
    if safe > r0 {
        head = integrate(&mut |y: f64| y.powf(-a) * (omega * y + phi).cos(), r0, safe, 1e-13);
    }
    // C(alpha) = -sin(wR+phi) R^-alpha / w + (alpha/w) S(alpha+1)
    // S(alpha) =  cos(wR+phi) R^-alpha / w - (alpha/w) C(alpha+1)
    let r = safe;
    let (sn, cs) = (omega * r + phi).sin_cos();
    let mut coef = 1.0;
    let mut alpha = a;
    let mut value = 0.0;
    let mut want_cos = true;
    let mut sign = 1.0;
    let mut prev_bound = f64::INFINITY;
    for _ in 0..90 {
        let scale = r.powf(-alpha) / omega;
        if want_cos {
            value += sign * coef * (-sn) * scale;
        } else {
            value += sign * coef * cs * scale;
            sign = -sign;
        }
        coef *= alpha / omega;
        alpha += 1.0;
        want_cos = !want_cos;
        let remainder_bound = coef * r.powf(1.0 - alpha) / (alpha - 1.0);
        // The expansion is asymptotic: stop at the smallest-term floor even
        // if the requested tolerance was not reached.
        if remainder_bound <= abs_tol || remainder_bound > prev_bound {
            break;
        }
        prev_bound = remainder_bound;
    }
    head + value
}

/// Bessel J0 by the averaged cosine integral, trapezoid with doubling.
/// Converges superalgebraically because the integrand's odd derivatives
/// vanish at both endpoints.
pub fn bessel_j0(r: f64) -> f64 {
    let mut m = 32usize;
    let mut prev = f64::INFINITY;
    loop {
        let mut acc = 0.5 * ((r * (0.0f64).sin()).cos() + (r * (std::f64::consts::PI).sin()).cos());
        for k in 1..m {
            let theta = std::f64::consts::PI * k as f64 / m as f64;
            acc += (r * theta.sin()).cos();
        }
        let val = acc / m as f64;
        if (val - prev).abs() <= 1e-14 * (1.0 + val.abs()) || m >= 1 << 17 {
            return val;
        }
        prev = val;
        m *= 2;
    }
}

/// Tail integral of J0(y) y^{-a} over [r0, inf) for a > 1, via the standard
/// large-argument asymptotic expansion of J0 combined with osc_power_tail.
/// r0 must be large enough (>= 64) for the three-term expansion to sit well
/// below the requested tolerance.
pub fn bessel_j0_power_tail(a: f64, r0: f64, abs_tol: f64) -> f64 {
    assert!(r0 >= 64.0, "asymptotic J0 tail needs a large start radius");
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    // J0(y) ~ sqrt(2/(pi y)) [ P(y) cos(y - pi/4) - Q(y) sin(y - pi/4) ],
    // P = 1 - 9/(128 y^2) + 3675/(32768 y^4), Q = -1/(8y) + 75/(1024 y^3).
    let p = [1.0, -9.0 / 128.0, 3675.0 / 32768.0];
    let q = [-1.0 / 8.0, 75.0 / 1024.0, -59535.0 / 262144.0];
    let pref = (2.0 / std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        let aa = a + 0.5 + 2.0 * k as f64;
        acc += pk * osc_power_tail(aa, 1.0, -quarter_pi, r0, abs_tol / 6.0);
    }
    for (k, qk) in q.iter().enumerate() {
        let aa = a + 0.5 + (2.0 * k as f64 + 1.0);
        // sin(y - pi/4) = cos(y - 3 pi/4)
        acc -= qk * osc_power_tail(aa, 1.0, -3.0 * quarter_pi, r0, abs_tol / 6.0);
    }
    pref * acc
}
