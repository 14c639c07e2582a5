//! Mollification: the normalized C-infinity bump family phi_eps, the fixed
//! radial cutoff psi, kernel mollification (pure power kernel implanted near
//! the singularity, x-convolved kernel outside, cutoff-blended between), and
//! discrete function mollification with ball truncation.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Tail};
use crate::kernels::{check_ellipticity, Kernel, KernelForm};
use crate::quad;
use once_cell::sync::Lazy;

/// Unnormalized profile exp(-1/(1-t^2)) on (-1,1), zero outside.
fn raw_bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

static BUMP_MASS_1D: Lazy<f64> =
    Lazy::new(|| 2.0 * quad::integrate(&mut raw_bump, 0.0, 1.0, 1e-13));
static BUMP_MASS_2D: Lazy<f64> = Lazy::new(|| {
    std::f64::consts::TAU * quad::integrate(&mut |r: f64| raw_bump(r) * r, 0.0, 1.0, 1e-13)
});

fn bump_mass(n: usize) -> f64 {
    match n {
        1 => *BUMP_MASS_1D,
        _ => *BUMP_MASS_2D,
    }
}

/// The mollifier phi_eps(z) = eps^{-n} phi(z/eps): radial, supported in
/// B_eps, total integral 1.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub n: usize,
    pub epsilon: f64,
    normalization: f64,
}

impl Mollifier {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let rho = match self.n {
            1 => z[0].abs(),
            _ => (z[0] * z[0] + z[1] * z[1]).sqrt(),
        };
        self.eval_radial(rho)
    }

    pub fn eval_radial(&self, rho: f64) -> f64 {
        self.normalization * raw_bump(rho / self.epsilon)
            / self.epsilon.powi(self.n as i32)
    }
}

pub fn make_mollifier(n: usize, epsilon: f64) -> Result<Mollifier> {
    if n != 1 && n != 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("mollifier radius must be positive, got {epsilon}")));
    }
    Ok(Mollifier { n, epsilon, normalization: 1.0 / bump_mass(n) })
}

/// The fixed cutoff psi: 1 on [0, 1/2], 0 on [1, infinity), a smooth
/// monotone transition between.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cutoff;

impl Cutoff {
    pub fn eval(&self, t: f64) -> f64 {
        cutoff_value(t)
    }
}

pub fn make_cutoff() -> Cutoff {
    Cutoff
}

/// psi(t): the standard C-infinity smoothstep on [1/2, 1], run downhill.
pub fn cutoff_value(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let tau = 2.0 * t - 1.0;
        let rising = (-1.0 / tau).exp();
        let falling = (-1.0 / (1.0 - tau)).exp();
        falling / (rising + falling)
    }
}

/// Attenuation factor of a frequency-omega modulation under x-convolution
/// with phi_eps: the integral of phi_eps(z) cos(omega z_1) over B_eps.
pub fn modulation_damp(n: usize, eps: f64, freq: f64) -> f64 {
    let k = freq * eps;
    if k == 0.0 {
        return 1.0;
    }
    match n {
        1 => {
            2.0 * quad::integrate(&mut |u: f64| raw_bump(u) * (k * u).cos(), 0.0, 1.0, 1e-13)
                / bump_mass(1)
        }
        _ => {
            std::f64::consts::TAU
                * quad::integrate(
                    &mut |r: f64| raw_bump(r) * r * quad::bessel_j0(k * r),
                    0.0,
                    1.0,
                    1e-12,
                )
                / bump_mass(2)
        }
    }
}

/// Mollified kernel K_eps: equals |y|^{-n-2s} exactly for |y| <= eps/2,
/// equals the x-convolved kernel for |y| >= eps, and blends through the
/// cutoff in between. Requires lambda <= 1 <= Lambda so the implanted power
/// kernel stays inside the class.
pub fn mollify_kernel(kernel: &Kernel, eps: f64) -> Result<Kernel> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("mollification radius must be positive, got {eps}")));
    }
    kernel.validate()?;
    if kernel.params.lambda > 1.0 || kernel.params.lambda_max < 1.0 {
        return Err(Error::ClassViolation(format!(
            "implanting |y|^(-n-2s) needs lambda <= 1 <= Lambda, got lambda={}, Lambda={}",
            kernel.params.lambda, kernel.params.lambda_max
        )));
    }
    let report = check_ellipticity(kernel, 200, 0x6d6f6c6c)?;
    if !report.pass {
        return Err(Error::InvalidKernel(format!(
            "kernel failed ellipticity sampling before mollification: {} of {} samples out of bounds",
            report.failures, report.samples
        )));
    }
    Kernel::new(
        kernel.params,
        KernelForm::Mollified { inner: Box::new(kernel.form.clone()), eps },
    )
}

/// Discrete mollification with truncation: convolves u times the indicator
/// of the ball of the given radius against phi_eps, sampled on u's grid.
/// The output has zero tail; the sup norm does not increase.
pub fn mollify_function(
    u: &GridFunction,
    eps: f64,
    truncation_radius: f64,
) -> Result<GridFunction> {
    let spec = &u.spec;
    spec.validate()?;
    if !(eps > 0.0) || !(truncation_radius > 0.0) {
        return Err(Error::Config(
            "mollification radius and truncation radius must be positive".into(),
        ));
    }
    let h = spec.h;
    if eps < 2.0 * h {
        return Err(Error::Resolution(format!(
            "mollifier of radius {eps} is unresolvable on a grid of spacing {h}; need eps >= 2h"
        )));
    }
    if truncation_radius > spec.r_ext * (1.0 + 1e-9) && u.tail.as_constant().is_none() {
        return Err(Error::UnsupportedTail(format!(
            "truncation radius {truncation_radius} exceeds the grid extent {} and the tail is not constant",
            spec.r_ext
        )));
    }
    let n = spec.n;
    let m_win = (eps / h).ceil() as i64;
    let mut offsets: Vec<([i64; 2], f64)> = Vec::new();
    let mut total = 0.0;
    let push = |j: [i64; 2], offsets: &mut Vec<([i64; 2], f64)>, total: &mut f64| {
        let rho = h * ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt();
        let w = raw_bump(rho / eps);
        if w > 0.0 {
            offsets.push((j, w));
            *total += w;
        }
    };
    if n == 1 {
        for j1 in -m_win..=m_win {
            push([j1, 0], &mut offsets, &mut total);
        }
    } else {
        for j1 in -m_win..=m_win {
            for j2 in -m_win..=m_win {
                push([j1, j2], &mut offsets, &mut total);
            }
        }
    }
    for (_, w) in offsets.iter_mut() {
        *w /= total;
    }
    let trunc_slack = truncation_radius * (1.0 + 1e-12);
    let truncated = |mi: [i64; 2]| -> f64 {
        let p = [mi[0] as f64 * h, mi[1] as f64 * h];
        let norm = match n {
            1 => p[0].abs(),
            _ => (p[0] * p[0] + p[1] * p[1]).sqrt(),
        };
        if norm <= trunc_slack {
            u.value_at(&mi[..n])
        } else {
            0.0
        }
    };
    let count = spec.node_count();
    let mut values = vec![0.0; count];
    for (idx, v) in values.iter_mut().enumerate() {
        let mi = spec.multi_index(idx);
        let mut acc = 0.0;
        for (j, w) in &offsets {
            acc += w * truncated([mi[0] - j[0], mi[1] - j[1]]);
        }
        *v = acc;
    }
    GridFunction::new(*spec, values, Tail::Zero)
}
