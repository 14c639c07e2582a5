//! Kernel classes for uniformly elliptic nonlocal operators: K(x, y) is
//! trapped between lambda and Lambda times |y|^{-n-2s}, symmetric in y.
//! Every supported form factors as
//!     K(x, y) = (g0(|y|) + xf(x) * g1(|y|)) * |y|^{-n-2s},
//! which the quadrature stencils exploit; this module also certifies
//! ellipticity and estimates the x- and y-regularity seminorms.

use crate::error::{Error, Result};
use crate::grid::Modulus;
use crate::quad;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};

/// Dimension, order, and the ellipticity bounds of the kernel class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityParams {
    pub n: usize,
    pub s: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub lambda_max: f64,
}

impl EllipticityParams {
    pub fn new(n: usize, s: f64, lambda: f64, lambda_max: f64) -> Result<Self> {
        let p = EllipticityParams { n, s, lambda, lambda_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 1 && self.n != 2 {
            return Err(Error::UnsupportedDimension(self.n));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s must be in (0,1), got {}", self.s)));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.lambda_max) || !self.lambda_max.is_finite() {
            return Err(Error::Config(format!(
                "need 0 < lambda <= Lambda, got lambda={}, Lambda={}",
                self.lambda, self.lambda_max
            )));
        }
        Ok(())
    }

    /// Surface measure of the unit sphere: 2 for n=1, 2 pi for n=2.
    pub fn sphere_measure(&self) -> f64 {
        match self.n {
            1 => 2.0,
            _ => 2.0 * std::f64::consts::PI,
        }
    }

    /// The scale-free annulus integral r^{2s} * int_{r<|y|<2r} |y|^{-n-2s} dy.
    pub fn annulus_power_integral(&self) -> f64 {
        self.sphere_measure() * (1.0 - 2f64.powf(-2.0 * self.s)) / (2.0 * self.s)
    }
}

/// Structural form of the kernel; all forms are radial in y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelForm {
    /// coeff * |y|^{-n-2s}.
    Power {
        #[serde(default = "default_one")]
        coeff: f64,
    },
    /// (base + amplitude * sin(frequency * x_1 + phase)) * |y|^{-n-2s}.
    ModulatedPower {
        base: f64,
        amplitude: f64,
        #[serde(default = "default_one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Translation-invariant multiplier tabulated at radii, log-log
    /// interpolated and clamped to the end values outside the table.
    Table { radii: Vec<f64>, multipliers: Vec<f64> },
    /// coeff plus a smooth compactly supported radial bump of the given
    /// height centered at |y| = center with the given half-width.
    BumpedPower { coeff: f64, height: f64, center: f64, width: f64 },
    /// Mollified kernel: the pure power kernel implanted for |y| <= eps/2,
    /// the x-convolved inner kernel for |y| >= eps, cutoff-blended between.
    Mollified { inner: Box<KernelForm>, eps: f64 },
    /// t * first + (1 - t) * second.
    Convex { t: f64, first: Box<KernelForm>, second: Box<KernelForm> },
}

fn default_one() -> f64 {
    1.0
}

/// A kernel in the ellipticity class: the form plus its class parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel {
    #[serde(flatten)]
    pub params: EllipticityParams,
    #[serde(flatten)]
    pub form: KernelForm,
    #[serde(skip)]
    damp: OnceCell<f64>,
}

fn count_modulated_leaves(form: &KernelForm) -> usize {
    match form {
        KernelForm::ModulatedPower { .. } => 1,
        KernelForm::Mollified { inner, .. } => count_modulated_leaves(inner),
        KernelForm::Convex { first, second, .. } => {
            count_modulated_leaves(first) + count_modulated_leaves(second)
        }
        _ => 0,
    }
}

fn contains_mollified(form: &KernelForm) -> bool {
    match form {
        KernelForm::Mollified { .. } => true,
        KernelForm::Convex { first, second, .. } => {
            contains_mollified(first) || contains_mollified(second)
        }
        _ => false,
    }
}

fn validate_form(form: &KernelForm) -> Result<()> {
    match form {
        KernelForm::Power { coeff } => {
            if !(*coeff > 0.0) {
                return Err(Error::InvalidKernel(format!("power coefficient must be positive, got {coeff}")));
            }
        }
        KernelForm::ModulatedPower { base, amplitude, frequency, .. } => {
            if !(*base > amplitude.abs()) {
                return Err(Error::InvalidKernel(format!(
                    "modulated multiplier must stay positive: base {base} <= |amplitude| {amplitude}"
                )));
            }
            if *frequency < 0.0 {
                return Err(Error::InvalidKernel("negative modulation frequency".into()));
            }
        }
        KernelForm::Table { radii, multipliers } => {
            if radii.is_empty() || radii.len() != multipliers.len() {
                return Err(Error::InvalidKernel(
                    "table kernel needs matching nonempty radii and multipliers".into(),
                ));
            }
            if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
                return Err(Error::InvalidKernel("table radii must be positive and increasing".into()));
            }
            if multipliers.iter().any(|&m| !(m > 0.0)) {
                return Err(Error::InvalidKernel("table multipliers must be positive".into()));
            }
        }
        KernelForm::BumpedPower { coeff, height, center, width } => {
            if !(*coeff > 0.0 && *coeff + *height > 0.0 && *center > 0.0 && *width > 0.0) {
                return Err(Error::InvalidKernel(
                    "bumped kernel needs positive coeff, center, width, and coeff + height".into(),
                ));
            }
        }
        KernelForm::Mollified { inner, eps } => {
            if !(*eps > 0.0) {
                return Err(Error::InvalidKernel(format!("mollification radius must be positive, got {eps}")));
            }
            if contains_mollified(inner) {
                return Err(Error::Config("kernel is already mollified; nested mollification is not supported".into()));
            }
            validate_form(inner)?;
        }
        KernelForm::Convex { t, first, second } => {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::InvalidKernel(format!("convex weight must lie in [0,1], got {t}")));
            }
            validate_form(first)?;
            validate_form(second)?;
        }
    }
    Ok(())
}

fn split_form(form: &KernelForm, rho: f64) -> (f64, f64) {
    match form {
        KernelForm::Power { coeff } => (*coeff, 0.0),
        KernelForm::ModulatedPower { base, .. } => (*base, 1.0),
        KernelForm::Table { radii, multipliers } => {
            let lr = rho.ln();
            let v = if lr <= radii[0].ln() {
                multipliers[0]
            } else if lr >= radii[radii.len() - 1].ln() {
                multipliers[multipliers.len() - 1]
            } else {
                let mut v = multipliers[multipliers.len() - 1];
                for i in 0..radii.len() - 1 {
                    let (l0, l1) = (radii[i].ln(), radii[i + 1].ln());
                    if lr <= l1 {
                        let lam = (lr - l0) / (l1 - l0);
                        v = (multipliers[i].ln() * (1.0 - lam) + multipliers[i + 1].ln() * lam).exp();
                        break;
                    }
                }
                v
            };
            (v, 0.0)
        }
        KernelForm::BumpedPower { coeff, height, center, width } => {
            let t = (rho - center) / width;
            let b = if t.abs() < 1.0 { (1.0 - 1.0 / (1.0 - t * t)).exp() } else { 0.0 };
            (coeff + height * b, 0.0)
        }
        KernelForm::Mollified { inner, eps } => {
            let t = rho / eps;
            if t <= 0.5 {
                (1.0, 0.0)
            } else {
                let (i0, i1) = split_form(inner, rho);
                if t >= 1.0 {
                    (i0, i1)
                } else {
                    let psi = crate::mollify::cutoff_value(t);
                    (psi + (1.0 - psi) * i0, (1.0 - psi) * i1)
                }
            }
        }
        KernelForm::Convex { t, first, second } => {
            let (a0, a1) = split_form(first, rho);
            let (b0, b1) = split_form(second, rho);
            (t * a0 + (1.0 - t) * b0, t * a1 + (1.0 - t) * b1)
        }
    }
}

impl Kernel {
    pub fn new(params: EllipticityParams, form: KernelForm) -> Result<Self> {
        params.validate()?;
        validate_form(&form)?;
        if count_modulated_leaves(&form) > 1 {
            return Err(Error::Unsupported(
                "kernels with more than one modulated component are not supported".into(),
            ));
        }
        Ok(Kernel { params, form, damp: OnceCell::new() })
    }

    /// The pure power kernel coeff * |y|^{-n-2s} with lambda = Lambda = coeff.
    pub fn power(n: usize, s: f64, coeff: f64) -> Result<Self> {
        Kernel::new(EllipticityParams::new(n, s, coeff, coeff)?, KernelForm::Power { coeff })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        validate_form(&self.form)?;
        if count_modulated_leaves(&self.form) > 1 {
            return Err(Error::Unsupported(
                "kernels with more than one modulated component are not supported".into(),
            ));
        }
        Ok(())
    }

    /// Attenuation of the modulation after x-convolution against the
    /// mollifier bump; 1 when no mollified modulated component exists.
    fn damp_factor(&self) -> f64 {
        *self.damp.get_or_init(|| {
            fn find(form: &KernelForm, n: usize) -> f64 {
                match form {
                    KernelForm::Mollified { inner, eps } => {
                        fn freq_of(form: &KernelForm) -> Option<f64> {
                            match form {
                                KernelForm::ModulatedPower { frequency, .. } => Some(*frequency),
                                KernelForm::Convex { first, second, .. } => {
                                    freq_of(first).or_else(|| freq_of(second))
                                }
                                _ => None,
                            }
                        }
                        match freq_of(inner) {
                            Some(freq) => crate::mollify::modulation_damp(n, *eps, freq),
                            None => 1.0,
                        }
                    }
                    KernelForm::Convex { first, second, .. } => {
                        if contains_mollified(first) {
                            find(first, n)
                        } else {
                            find(second, n)
                        }
                    }
                    _ => 1.0,
                }
            }
            find(&self.form, self.params.n)
        })
    }

    /// Base and scaled multiplier parts at radius rho: the multiplier is
    /// base + x_factor(x) * scaled.
    pub fn multiplier_split(&self, rho: f64) -> (f64, f64) {
        split_form(&self.form, rho)
    }

    /// The x-dependent factor multiplying the scaled part; 0 for
    /// translation-invariant kernels.
    pub fn x_factor(&self, x: &[f64]) -> f64 {
        fn walk(form: &KernelForm, x: &[f64], damp: f64) -> f64 {
            match form {
                KernelForm::ModulatedPower { amplitude, frequency, phase, .. } => {
                    amplitude * (frequency * x[0] + phase).sin() * damp
                }
                KernelForm::Mollified { inner, .. } => walk(inner, x, damp),
                KernelForm::Convex { first, second, .. } => {
                    walk(first, x, damp) + walk(second, x, damp)
                }
                _ => 0.0,
            }
        }
        if self.translation_invariant() {
            return 0.0;
        }
        let damp = if contains_mollified(&self.form) { self.damp_factor() } else { 1.0 };
        walk(&self.form, x, damp)
    }

    /// Range of x_factor over all x: the scaled multiplier part is bounded
    /// between these two values times g1.
    pub fn x_factor_range(&self) -> (f64, f64) {
        fn walk(form: &KernelForm) -> (f64, f64) {
            match form {
                KernelForm::ModulatedPower { amplitude, .. } => (-amplitude.abs(), amplitude.abs()),
                KernelForm::Mollified { inner, .. } => walk(inner),
                KernelForm::Convex { first, second, .. } => {
                    let a = walk(first);
                    let b = walk(second);
                    (a.0 + b.0, a.1 + b.1)
                }
                _ => (0.0, 0.0),
            }
        }
        if self.translation_invariant() {
            return (0.0, 0.0);
        }
        let damp = if contains_mollified(&self.form) { self.damp_factor() } else { 1.0 };
        let (lo, hi) = walk(&self.form);
        if damp >= 0.0 {
            (lo * damp, hi * damp)
        } else {
            (hi * damp, lo * damp)
        }
    }

    /// Multiplier K(x,y) |y|^{n+2s} at |y| = rho.
    pub fn radial_multiplier(&self, x: &[f64], rho: f64) -> f64 {
        let (g0, g1) = self.multiplier_split(rho);
        if g1 == 0.0 {
            g0
        } else {
            g0 + self.x_factor(x) * g1
        }
    }

    /// K(x, y); radial in y, so automatically symmetric.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let rho = match self.params.n {
            1 => y[0].abs(),
            _ => (y[0] * y[0] + y[1] * y[1]).sqrt(),
        };
        self.radial_multiplier(x, rho) * rho.powf(-(self.params.n as f64) - 2.0 * self.params.s)
    }

    pub fn translation_invariant(&self) -> bool {
        count_modulated_leaves(&self.form) == 0
    }

    /// Modulus bounding r^{2s} int_{r<|y|<2r} |K(x,y)-K(x',y)| dy by
    /// omega(|x-x'|); zero for translation-invariant kernels.
    pub fn x_modulus(&self) -> Modulus {
        fn leaf_slope(form: &KernelForm, outer_scale: f64) -> f64 {
            match form {
                KernelForm::ModulatedPower { amplitude, frequency, .. } => {
                    (amplitude * frequency).abs() * outer_scale
                }
                KernelForm::Mollified { inner, .. } => leaf_slope(inner, outer_scale),
                KernelForm::Convex { t, first, second } => {
                    leaf_slope(first, outer_scale * t) + leaf_slope(second, outer_scale * (1.0 - t))
                }
                _ => 0.0,
            }
        }
        if self.translation_invariant() {
            return Modulus::zero();
        }
        let damp = if contains_mollified(&self.form) { self.damp_factor().abs() } else { 1.0 };
        let slope = leaf_slope(&self.form, 1.0) * damp * self.params.annulus_power_integral();
        Modulus::Linear { slope }
    }

    /// Radius beyond which the multiplier split no longer depends on rho.
    pub fn far_onset(&self) -> f64 {
        fn onset(form: &KernelForm) -> f64 {
            match form {
                KernelForm::Power { .. } | KernelForm::ModulatedPower { .. } => 0.0,
                KernelForm::Table { radii, .. } => radii[radii.len() - 1],
                KernelForm::BumpedPower { center, width, .. } => center + width,
                KernelForm::Mollified { inner, eps } => eps.max(onset(inner)),
                KernelForm::Convex { first, second, .. } => onset(first).max(onset(second)),
            }
        }
        onset(&self.form)
    }

    /// Region |y| <= radius on which the kernel equals coeff * |y|^{-n-2s}
    /// exactly, when such a region exists by construction.
    pub fn power_core(&self) -> Option<(f64, f64)> {
        match &self.form {
            KernelForm::Power { coeff } => Some((f64::INFINITY, *coeff)),
            KernelForm::Mollified { eps, .. } => Some((eps / 2.0, 1.0)),
            KernelForm::Convex { t, first, second } => {
                let a = Kernel { params: self.params, form: (**first).clone(), damp: OnceCell::new() }.power_core()?;
                let b = Kernel { params: self.params, form: (**second).clone(), damp: OnceCell::new() }.power_core()?;
                Some((a.0.min(b.0), t * a.1 + (1.0 - t) * b.1))
            }
            _ => None,
        }
    }

    /// Stable content hash for stencil caching.
    pub fn fingerprint(&self) -> u64 {
        fn mix(h: &mut u64, v: u64) {
            *h ^= v;
            *h = h.wrapping_mul(0x100000001b3);
        }
        fn hash_form(h: &mut u64, form: &KernelForm) {
            match form {
                KernelForm::Power { coeff } => {
                    mix(h, 1);
                    mix(h, coeff.to_bits());
                }
                KernelForm::ModulatedPower { base, amplitude, frequency, phase } => {
                    mix(h, 2);
                    for v in [base, amplitude, frequency, phase] {
                        mix(h, v.to_bits());
                    }
                }
                KernelForm::Table { radii, multipliers } => {
                    mix(h, 3);
                    for v in radii.iter().chain(multipliers.iter()) {
                        mix(h, v.to_bits());
                    }
                }
                KernelForm::BumpedPower { coeff, height, center, width } => {
                    mix(h, 4);
                    for v in [coeff, height, center, width] {
                        mix(h, v.to_bits());
                    }
                }
                KernelForm::Mollified { inner, eps } => {
                    mix(h, 5);
                    mix(h, eps.to_bits());
                    hash_form(h, inner);
                }
                KernelForm::Convex { t, first, second } => {
                    mix(h, 6);
                    mix(h, t.to_bits());
                    hash_form(h, first);
                    hash_form(h, second);
                }
            }
        }
        let mut h = 0xcbf29ce484222325u64;
        mix(&mut h, self.params.n as u64);
        mix(&mut h, self.params.s.to_bits());
        mix(&mut h, self.params.lambda.to_bits());
        mix(&mut h, self.params.lambda_max.to_bits());
        hash_form(&mut h, &self.form);
        h
    }
}

/// Outcome of sampling the ellipticity bounds.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub samples: usize,
    /// Smallest sampled ratio K(x,y) |y|^{n+2s}.
    pub worst_low: f64,
    /// Largest sampled ratio.
    pub worst_high: f64,
    pub failures: usize,
}

/// Samples the ratio K(x,y) |y|^{n+2s} over random x in [-2,2]^n and |y|
/// spread over 6 dyadic scales; passes iff every ratio lies in [lambda,
/// Lambda] up to roundoff.
pub fn check_ellipticity(kernel: &Kernel, samples: usize, seed: u64) -> Result<EllipticityReport> {
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let n = kernel.params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::NEG_INFINITY;
    let mut failures = 0usize;
    let slack = 1e-12 * kernel.params.lambda_max;
    for _ in 0..samples {
        let mut x = [0.0; 2];
        for xk in x.iter_mut().take(n) {
            *xk = rng.gen_range(-2.0..2.0);
        }
        let scale = 2f64.powi(rng.gen_range(-3..3));
        let rho = rng.gen_range(scale..2.0 * scale);
        let mut y = [0.0; 2];
        if n == 1 {
            y[0] = if rng.gen_bool(0.5) { rho } else { -rho };
        } else {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            y[0] = rho * theta.cos();
            y[1] = rho * theta.sin();
        }
        let value = kernel.eval(&x[..n], &y[..n]);
        let mirrored = kernel.eval(&x[..n], &[-y[0], -y[1]][..n]);
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidKernel(format!(
                "kernel evaluated to {value} at x={:?}, y={:?}",
                &x[..n],
                &y[..n]
            )));
        }
        debug_assert_eq!(value, mirrored, "radial forms are symmetric by construction");
        let ratio = value * rho.powf(n as f64 + 2.0 * kernel.params.s);
        worst_low = worst_low.min(ratio);
        worst_high = worst_high.max(ratio);
        if ratio < kernel.params.lambda - slack || ratio > kernel.params.lambda_max + slack {
            failures += 1;
        }
    }
    Ok(EllipticityReport { pass: failures == 0, samples, worst_low, worst_high, failures })
}

/// Which seminorm a report estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeminormKind {
    XContinuity,
    XOrderMu,
    YOrderMu,
}

/// Estimated seminorm: the max over tested scales and sampled point pairs
/// of the scale-normalized annular integral.
#[derive(Debug, Clone, Serialize)]
pub struct SeminormReport {
    pub kind: SeminormKind,
    pub estimate: f64,
    pub scales_tested: Vec<f64>,
    pub pairs_tested: usize,
}

/// Annular integral int_{r<|y|<2r} |K(x, z-y) - K(x, z'-y)| dy, for z and
/// z' well inside B_r so the integrand stays away from the singularity.
fn y_difference_annulus(kernel: &Kernel, x: &[f64], z: &[f64], zp: &[f64], r: f64) -> f64 {
    let n = kernel.params.n;
    match n {
        1 => {
            let mut f = |t: f64| {
                let a = (kernel.eval(x, &[z[0] - t]) - kernel.eval(x, &[zp[0] - t])).abs();
                let b = (kernel.eval(x, &[z[0] + t]) - kernel.eval(x, &[zp[0] + t])).abs();
                a + b
            };
            quad::integrate(&mut f, r, 2.0 * r, 1e-8)
        }
        _ => {
            let m = 48usize;
            let mut f = |t: f64| {
                let mut acc = 0.0;
                for k in 0..m {
                    let theta = std::f64::consts::TAU * k as f64 / m as f64;
                    let y = [t * theta.cos(), t * theta.sin()];
                    let a = kernel.eval(x, &[z[0] - y[0], z[1] - y[1]]);
                    let b = kernel.eval(x, &[zp[0] - y[0], zp[1] - y[1]]);
                    acc += (a - b).abs();
                }
                acc * std::f64::consts::TAU / m as f64 * t
            };
            quad::integrate(&mut f, r, 2.0 * r, 1e-7)
        }
    }
}

/// The x-continuity integral of the kernel class: returns
/// r^{2s} int_{r<|y|<2r} |K(x,y) - K(x',y)| dy; exactly 0 for
/// translation-invariant kernels. Comparing against omega(|x-x'|) is the
/// caller's job.
pub fn estimate_x_continuity(kernel: &Kernel, r: f64, x: &[f64], xp: &[f64]) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {r}")));
    }
    if kernel.translation_invariant() || x == xp {
        return Ok(0.0);
    }
    let p = kernel.params.n as f64 + 2.0 * kernel.params.s;
    let dm = (kernel.x_factor(x) - kernel.x_factor(xp)).abs();
    let (value, err) = quad::adaptive(
        &mut |rho: f64| {
            let (_, g1) = kernel.multiplier_split(rho);
            dm * g1.abs() * rho.powf(-p) * rho.powf(kernel.params.n as f64 - 1.0)
        },
        r,
        2.0 * r,
        1e-9,
    );
    let value = value * kernel.params.sphere_measure();
    if !value.is_finite() || err * kernel.params.sphere_measure() > 1e-6 * value.abs() + 1e-12 {
        return Err(Error::Quadrature(format!(
            "annulus integral did not settle: value {value}, error estimate {err}"
        )));
    }
    Ok(value * r.powf(2.0 * kernel.params.s))
}

fn sample_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> [f64; 2] {
    loop {
        let mut z = [0.0; 2];
        let mut norm2 = 0.0;
        for zk in z.iter_mut().take(n) {
            *zk = rng.gen_range(-radius..radius);
            norm2 += *zk * *zk;
        }
        if norm2 <= radius * radius {
            return z;
        }
    }
}

/// Estimates the order-mu y-regularity seminorm: max over scales r and
/// sampled x, z, z' in B_{r/2} of the annular integral normalized by
/// |z-z'|^mu r^{-2s-mu}. Only mu in (0,1) is supported (no y-derivatives
/// are taken). Point pairs are drawn once in unit coordinates and rescaled
/// per scale, so scale stability is measured on matched configurations.
pub fn estimate_y_seminorm(
    kernel: &Kernel,
    mu: f64,
    scales: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<SeminormReport> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Unsupported(format!(
            "y-seminorm of order {mu}: only orders in (0,1) are implemented"
        )));
    }
    if scales.is_empty() || pairs == 0 {
        return Err(Error::Config("need at least one scale and one pair".into()));
    }
    let n = kernel.params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut configs = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let mut x = [0.0; 2];
        for xk in x.iter_mut().take(n) {
            *xk = rng.gen_range(-1.0..1.0);
        }
        let z = sample_ball(&mut rng, n, 0.5);
        let zp = sample_ball(&mut rng, n, 0.5);
        configs.push((x, z, zp));
    }
    let mut estimate = 0.0f64;
    for &r in scales {
        for (x, zu, zpu) in &configs {
            let z = [zu[0] * r, zu[1] * r];
            let zp = [zpu[0] * r, zpu[1] * r];
            let dz = ((z[0] - zp[0]).powi(2) + (z[1] - zp[1]).powi(2)).sqrt();
            if dz == 0.0 {
                continue;
            }
            let integral = y_difference_annulus(kernel, &x[..n], &z[..n], &zp[..n], r);
            if !integral.is_finite() {
                return Err(Error::InvalidKernel(format!(
                    "non-finite annulus integral at scale {r}"
                )));
            }
            estimate = estimate.max(integral * r.powf(2.0 * kernel.params.s + mu) / dz.powf(mu));
        }
    }
    Ok(SeminormReport {
        kind: SeminormKind::YOrderMu,
        estimate,
        scales_tested: scales.to_vec(),
        pairs_tested: pairs,
    })
}

/// Estimates the order-mu x-regularity seminorm: max over scales and
/// sampled pairs x, x' (separation proportional to the scale) of
/// r^{2s} int_{r<|y|<2r} |K(x,y)-K(x',y)| dy / |x-x'|^mu.
pub fn estimate_x_order_mu(
    kernel: &Kernel,
    mu: f64,
    scales: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<SeminormReport> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Unsupported(format!(
            "x-seminorm of order {mu}: only orders in (0,1) are implemented"
        )));
    }
    if scales.is_empty() || pairs == 0 {
        return Err(Error::Config("need at least one scale and one pair".into()));
    }
    let n = kernel.params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut configs = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let mut x = [0.0; 2];
        for xk in x.iter_mut().take(n) {
            *xk = rng.gen_range(-1.0..1.0);
        }
        let d = sample_ball(&mut rng, n, 0.5);
        configs.push((x, d));
    }
    let mut estimate = 0.0f64;
    for &r in scales {
        for (x, d) in &configs {
            let xp = [x[0] + d[0] * r, x[1] + d[1] * r];
            let dx = ((x[0] - xp[0]).powi(2) + (x[1] - xp[1]).powi(2)).sqrt();
            if dx == 0.0 {
                continue;
            }
            let integral = estimate_x_continuity(kernel, r, &x[..n], &xp[..n])?;
            estimate = estimate.max(integral / dx.powf(mu));
        }
    }
    Ok(SeminormReport {
        kind: SeminormKind::XOrderMu,
        estimate,
        scales_tested: scales.to_vec(),
        pairs_tested: pairs,
    })
}
