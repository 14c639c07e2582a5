//! Shared fixtures for the integration suites: an independent spectral
//! reference for the fractional Laplacian, the closed-form ball solution,
//! and a plain adaptive quadrature used to cross-check convolutions.
#![allow(dead_code)]

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::function::gamma::gamma;

/// The infinitely smooth bump exp(-1/(1-x^2)) on (-1,1), zero outside.
pub fn smooth_bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// (-Delta)^s of the periodization of u on [-half_box, half_box), computed
/// with the discrete Fourier multiplier |xi|^{2s} and read off at the
/// points xs, which must lie on the sampling lattice.
fn periodic_frac_laplacian(
    u: &dyn Fn(f64) -> f64,
    s: f64,
    h: f64,
    half_box: f64,
    xs: &[f64],
) -> Vec<f64> {
    let n = (2.0 * half_box / h).round() as usize;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> =
        (0..n).map(|j| Complex::new(u(-half_box + j as f64 * h), 0.0)).collect();
    fft.process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let wave = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let xi = std::f64::consts::PI * wave / half_box;
        *v *= xi.abs().powf(2.0 * s) / n as f64;
    }
    ifft.process(&mut buf);
    xs.iter()
        .map(|&x| {
            let j = ((x + half_box) / h).round() as usize;
            buf[j].re
        })
        .collect()
}

/// Free-space (-Delta)^s u at the points xs, for u smooth and supported in
/// (-1,1). Periodizing on a box of half-width L adds image terms whose
/// even part scales as L^{-1-2s}; evaluating on two boxes and
/// extrapolating in that exponent cancels them, leaving an error orders of
/// magnitude below the tolerances it certifies.
pub fn spectral_frac_laplacian(u: &dyn Fn(f64) -> f64, s: f64, h: f64, xs: &[f64]) -> Vec<f64> {
    let coarse = periodic_frac_laplacian(u, s, h, 16.0, xs);
    let fine = periodic_frac_laplacian(u, s, h, 32.0, xs);
    let r = 2f64.powf(-(1.0 + 2.0 * s));
    fine.iter().zip(&coarse).map(|(f, c)| (f - r * c) / (1.0 - r)).collect()
}

/// Coefficient of the closed-form ball solution: (-Delta)^s u = 1 on the
/// unit ball with zero exterior data is solved by coeff * (1 - |x|^2)_+^s
/// with coeff = 4^{-s} Gamma(n/2) / (Gamma((n+2s)/2) Gamma(1+s)).
pub fn ball_solution_coefficient(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    4f64.powf(-s) * gamma(nf / 2.0) / (gamma((nf + 2.0 * s) / 2.0) * gamma(1.0 + s))
}

/// Adaptive Simpson quadrature with absolute tolerance, used as an
/// integration route that shares no code with the library's quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

