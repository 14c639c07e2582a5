//! Pointwise evaluation of the nonlocal operators: linear operators from
//! kernels by singular quadrature, the Fourier-normalized fractional
//! Laplacian, the extremal operators, finite inf-sup Isaacs operators, and
//! the splitting of a mollified operator into its leading fractional
//! Laplacian and a bounded zeroth-order remainder.
//!
//! All evaluations reduce to nonnegative stencil weights on symmetric
//! second differences 2u(x) - u(x+y) - u(x-y), so monotonicity (and with it
//! the comparison principle) survives discretization.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, Modulus, Tail};
use crate::kernels::{EllipticityParams, Kernel};
use crate::mollify::{modulation_damp, mollify_function};
use crate::quad;
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Quadrature configuration for singular integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    /// Inner cutoff radius; defaults to (and must equal) the grid spacing.
    pub r0: Option<f64>,
    /// Outer radius where the analytic tail takes over; defaults to
    /// r_dom + r_ext, which keeps every sampled point at or beyond the grid
    /// boundary inside the tail region.
    pub r_far: Option<f64>,
    /// Gauss-Legendre points per radial cell.
    pub cell_points: usize,
    /// Angular sample count for n = 2 (must be even).
    pub n_theta: usize,
    /// Apply the interpolation-bias correction to the cell weights.
    pub curvature_correction: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            r0: None,
            r_far: None,
            cell_points: 8,
            n_theta: 32,
            curvature_correction: true,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.cell_points) {
            return Err(Error::Config(format!(
                "cell_points must lie in [2, 32], got {}",
                self.cell_points
            )));
        }
        if self.n_theta < 8 || !self.n_theta.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_theta must be even and at least 8, got {}",
                self.n_theta
            )));
        }
        if let Some(r) = self.r_far {
            if !(r > 0.0) {
                return Err(Error::Config(format!("r_far must be positive, got {r}")));
            }
        }
        if let Some(r) = self.r0 {
            if !(r > 0.0) {
                return Err(Error::Config(format!("r0 must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// A linear nonlocal operator: a kernel plus its quadrature configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearOperatorSpec {
    pub kernel: Kernel,
    #[serde(default)]
    pub quad: QuadConfig,
}

impl LinearOperatorSpec {
    pub fn new(kernel: Kernel, quad: QuadConfig) -> Result<Self> {
        kernel.validate()?;
        quad.validate()?;
        Ok(LinearOperatorSpec { kernel, quad })
    }
}

/// One angular sample point on a ring: the bilinear interpolation footprint
/// of x + rho e_theta, relative to x, in index units. The mirrored point
/// x - rho e_theta uses the negated footprint with the same weights.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RingPoint {
    pub(crate) base: [i64; 2],
    pub(crate) beta: [f64; 4],
    /// Total interpolation weight landing on the center node itself.
    pub(crate) self_beta: f64,
}

pub(crate) const CORNERS: [[i64; 2]; 4] = [[0, 0], [1, 0], [0, 1], [1, 1]];

/// Precomputed quadrature stencil for one (kernel, grid, config) triple.
/// Weights come in base and scaled parts: the weight at x is
/// base + x_factor(x) * scaled.
#[derive(Debug)]
pub(crate) struct Stencil {
    pub(crate) n: usize,
    pub(crate) h: f64,
    pub(crate) s: f64,
    pub(crate) m_far: usize,
    pub(crate) far_radius: f64,
    /// n=1: index m-1 holds the weight of atom m. n=2: index
    /// (m-1)*n_theta + j holds ring m, angle j.
    pub(crate) w_base: Vec<f64>,
    pub(crate) w_scaled: Vec<f64>,
    pub(crate) has_scaled: bool,
    pub(crate) rings: Vec<RingPoint>,
    /// Full-measure kernel mass beyond far_radius, split into parts.
    pub(crate) tail_base: f64,
    pub(crate) tail_scaled: f64,
    /// Multiplier parts at the far radius, for oscillatory tails.
    pub(crate) far_mult_base: f64,
    pub(crate) far_mult_scaled: f64,
}

/// Something indexable at signed grid multi-indices; either a GridFunction
/// (tail fallback per access) or a pre-extended dense array.
pub(crate) trait ValueSource {
    fn at(&self, i: i64, j: i64) -> f64;
}

impl ValueSource for GridFunction {
    fn at(&self, i: i64, j: i64) -> f64 {
        let idx = [i, j];
        self.value_at(&idx[..self.spec.n])
    }
}

/// Dense copy of a GridFunction extended by a halo of tail evaluations, for
/// fast repeated sweeps.
pub(crate) struct Padded {
    n: usize,
    m_tot: i64,
    stride: usize,
    values: Vec<f64>,
}

impl Padded {
    pub(crate) fn new(u: &GridFunction, halo: i64) -> Padded {
        let n = u.spec.n;
        let m_tot = u.spec.m_ext() + halo;
        let side = (2 * m_tot + 1) as usize;
        let mut values = vec![0.0; if n == 1 { side } else { side * side }];
        if n == 1 {
            for i in -m_tot..=m_tot {
                values[(i + m_tot) as usize] = u.at(i, 0);
            }
        } else {
            for j in -m_tot..=m_tot {
                for i in -m_tot..=m_tot {
                    values[(j + m_tot) as usize * side + (i + m_tot) as usize] = u.at(i, j);
                }
            }
        }
        Padded { n, m_tot, stride: side, values }
    }
}

impl Padded {
    #[inline]
    fn slot(&self, i: i64, j: i64) -> usize {
        if self.n == 1 {
            (i + self.m_tot) as usize
        } else {
            (j + self.m_tot) as usize * self.stride + (i + self.m_tot) as usize
        }
    }

    pub(crate) fn set(&mut self, i: i64, j: i64, v: f64) {
        let k = self.slot(i, j);
        self.values[k] = v;
    }
}

impl ValueSource for Padded {
    #[inline]
    fn at(&self, i: i64, j: i64) -> f64 {
        self.values[self.slot(i, j)]
    }
}

fn fnv(h: &mut u64, v: u64) {
    *h ^= v;
    *h = h.wrapping_mul(0x100000001b3);
}

#[derive(PartialEq, Eq, Hash, Clone)]
struct StencilKey {
    kernel: u64,
    grid: u64,
    quad: u64,
    remainder: bool,
}

static STENCILS: Lazy<Mutex<HashMap<StencilKey, Arc<Stencil>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Builds (or fetches from the global cache) the stencil for a kernel on a
/// grid. With `remainder` set, the multiplier base is shifted down by 1:
/// the stencil then integrates K - |y|^{-n-2s}, which vanishes near the
/// origin for mollified kernels.
pub(crate) fn stencil_for(
    kernel: &Kernel,
    grid: &GridSpec,
    quad: &QuadConfig,
    remainder: bool,
) -> Result<Arc<Stencil>> {
    kernel.validate()?;
    quad.validate()?;
    grid.validate()?;
    if kernel.params.n != grid.n {
        return Err(Error::Config(format!(
            "kernel dimension {} does not match grid dimension {}",
            kernel.params.n, grid.n
        )));
    }
    let h = grid.h;
    let r0 = quad.r0.unwrap_or(h);
    if (r0 - h).abs() > 1e-12 * h {
        return Err(Error::Config(format!(
            "inner cutoff r0 = {r0} must equal the grid spacing {h} in this implementation"
        )));
    }
    let r_far = quad.r_far.unwrap_or(grid.r_dom + grid.r_ext);
    if r_far < grid.r_ext * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "far radius {r_far} must be at least the grid extent {}",
            grid.r_ext
        )));
    }
    let m_far = (r_far / h + 1e-9).floor() as usize;
    if m_far < 2 {
        return Err(Error::Config("far radius must span at least two grid cells".into()));
    }
    let far_radius = m_far as f64 * h;
    if kernel.far_onset() > far_radius * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "kernel multiplier still varies at the far radius {far_radius}; increase r_far beyond {}",
            kernel.far_onset()
        )));
    }
    let mut grid_fp = 0xcbf29ce484222325u64;
    fnv(&mut grid_fp, grid.n as u64);
    fnv(&mut grid_fp, grid.h.to_bits());
    fnv(&mut grid_fp, grid.r_dom.to_bits());
    fnv(&mut grid_fp, grid.r_ext.to_bits());
    let mut quad_fp = 0xcbf29ce484222325u64;
    fnv(&mut quad_fp, m_far as u64);
    fnv(&mut quad_fp, quad.cell_points as u64);
    fnv(&mut quad_fp, quad.n_theta as u64);
    fnv(&mut quad_fp, quad.curvature_correction as u64);
    let key = StencilKey { kernel: kernel.fingerprint(), grid: grid_fp, quad: quad_fp, remainder };
    if let Some(st) = STENCILS.lock().unwrap().get(&key) {
        return Ok(st.clone());
    }
    let st = Arc::new(build_stencil(kernel, grid, quad, m_far, remainder)?);
    STENCILS.lock().unwrap().insert(key, st.clone());
    Ok(st)
}

fn build_stencil(
    kernel: &Kernel,
    grid: &GridSpec,
    quad: &QuadConfig,
    m_far: usize,
    remainder: bool,
) -> Result<Stencil> {
    let n = grid.n;
    let h = grid.h;
    let s = kernel.params.s;
    let far_radius = m_far as f64 * h;
    let shift = if remainder { 1.0 } else { 0.0 };
    let split = |rho: f64| {
        let (g0, g1) = kernel.multiplier_split(rho);
        (g0 - shift, g1)
    };
    let p = 1.0 + 2.0 * s;

    // Radial assembly in the one-sided convention: the full operator is
    // int_0^inf delta_u(t) * mult(t) t^{-1-2s} dt for n=1; rings scale it.
    let mut base0 = vec![0.0; m_far + 1];
    let mut base1 = vec![0.0; m_far + 1];
    let mut corr0 = vec![0.0; m_far + 1];
    let mut corr1 = vec![0.0; m_far + 1];

    // Inner moment: int_0^h t^2 K dt / h^2 lands on atom 1, via the
    // substitution t = h w^{1/(2-2s)} that removes the endpoint weight.
    let rule16 = quad::gauss_legendre(16);
    let expo = 1.0 / (2.0 - 2.0 * s);
    let inner0 = quad::gl_integrate(&mut |w: f64| split(h * w.powf(expo)).0, 0.0, 1.0, &rule16);
    let inner1 = quad::gl_integrate(&mut |w: f64| split(h * w.powf(expo)).1, 0.0, 1.0, &rule16);
    let inner_scale = h.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s) / (h * h);
    base0[1] += inner0 * inner_scale;
    base1[1] += inner1 * inner_scale;

    let rule = quad::gauss_legendre(quad.cell_points);
    for m in 1..m_far {
        let (a, b) = (m as f64 * h, (m + 1) as f64 * h);
        let mut acc = [0.0f64; 6]; // A0, B0, I0, A1, B1, I1
        for (node, weight) in rule.nodes.iter().zip(rule.weights.iter()) {
            let t = 0.5 * (a + b) + 0.5 * (b - a) * node;
            let tau = (t - a) / h;
            let (g0, g1) = split(t);
            let k0 = g0 * t.powf(-p);
            let k1 = g1 * t.powf(-p);
            let w = weight * 0.5 * (b - a);
            acc[0] += w * (1.0 - tau) * k0;
            acc[1] += w * tau * k0;
            acc[2] += w * tau * (1.0 - tau) * k0;
            acc[3] += w * (1.0 - tau) * k1;
            acc[4] += w * tau * k1;
            acc[5] += w * tau * (1.0 - tau) * k1;
        }
        base0[m] += acc[0];
        base0[m + 1] += acc[1];
        base1[m] += acc[3];
        base1[m + 1] += acc[4];
        // Interpolation-bias correction, skipped on the outermost cell where
        // the forward second difference would need an atom beyond the range.
        if quad.curvature_correction && m + 2 <= m_far {
            for (corr, i_int) in [(&mut corr0, acc[2]), (&mut corr1, acc[5])] {
                let q = i_int / 4.0;
                corr[m] += q;
                corr[m + 1] += q;
                if m >= 2 {
                    corr[m - 1] -= q;
                }
                corr[m + 2] -= q;
            }
        }
    }

    // Positivity safeguard: scale all corrections by the largest gamma in
    // [0,1] keeping every weight nonnegative at the extreme x-factors.
    // Signed remainder stencils skip this (they are not schemes).
    let mut gamma = 1.0f64;
    if !remainder && quad.curvature_correction {
        let (lo, hi) = kernel.x_factor_range();
        for &xf in &[lo, hi] {
            for m in 1..=m_far {
                let b = base0[m] + xf * base1[m];
                let c = corr0[m] + xf * corr1[m];
                if c < 0.0 && b + c < 0.0 {
                    gamma = gamma.min(b / -c);
                }
            }
        }
    }
    let radial0: Vec<f64> = (1..=m_far).map(|m| base0[m] + gamma * corr0[m]).collect();
    let radial1: Vec<f64> = (1..=m_far).map(|m| base1[m] + gamma * corr1[m]).collect();

    let (g0_far, g1_far) = split(far_radius);
    let sphere = kernel.params.sphere_measure();
    let tail_scale = sphere * far_radius.powf(-2.0 * s) / (2.0 * s);

    let (w_base, w_scaled, rings) = if n == 1 {
        (radial0, radial1, Vec::new())
    } else {
        let n_theta = quad.n_theta;
        let factor = std::f64::consts::PI / n_theta as f64;
        let mut wb = Vec::with_capacity(m_far * n_theta);
        let mut ws = Vec::with_capacity(m_far * n_theta);
        let mut rings = Vec::with_capacity(m_far * n_theta);
        for m in 1..=m_far {
            for j in 0..n_theta {
                let theta = std::f64::consts::TAU * j as f64 / n_theta as f64;
                let px = m as f64 * theta.cos();
                let py = m as f64 * theta.sin();
                let bx = px.floor();
                let by = py.floor();
                let (fx, fy) = (px - bx, py - by);
                let beta = [
                    (1.0 - fx) * (1.0 - fy),
                    fx * (1.0 - fy),
                    (1.0 - fx) * fy,
                    fx * fy,
                ];
                let base = [bx as i64, by as i64];
                let mut self_beta = 0.0;
                for (c, b) in CORNERS.iter().zip(beta.iter()) {
                    if base[0] + c[0] == 0 && base[1] + c[1] == 0 {
                        self_beta += b;
                    }
                }
                rings.push(RingPoint { base, beta, self_beta });
                wb.push(radial0[m - 1] * factor);
                ws.push(radial1[m - 1] * factor);
            }
        }
        (wb, ws, rings)
    };

    let has_scaled = w_scaled.iter().any(|&w| w != 0.0) || g1_far != 0.0;
    Ok(Stencil {
        n,
        h,
        s,
        m_far,
        far_radius,
        w_base,
        w_scaled,
        has_scaled,
        rings,
        tail_base: g0_far * tail_scale,
        tail_scaled: g1_far * tail_scale,
        far_mult_base: g0_far,
        far_mult_scaled: g1_far,
    })
}

impl Stencil {
    /// Halo of indices beyond the grid box that evaluation may touch.
    pub(crate) fn halo(&self) -> i64 {
        self.m_far as i64 + if self.n == 2 { 1 } else { 0 }
    }

    #[inline]
    fn atom<V: ValueSource>(&self, v: &V, u0: f64, xi: [i64; 2], k: usize) -> f64 {
        if self.n == 1 {
            let m = (k + 1) as i64;
            2.0 * u0 - v.at(xi[0] + m, 0) - v.at(xi[0] - m, 0)
        } else {
            let rp = &self.rings[k];
            let mut plus = 0.0;
            let mut minus = 0.0;
            for (c, b) in CORNERS.iter().zip(rp.beta.iter()) {
                plus += b * v.at(xi[0] + rp.base[0] + c[0], xi[1] + rp.base[1] + c[1]);
                minus += b * v.at(xi[0] - rp.base[0] - c[0], xi[1] - rp.base[1] - c[1]);
            }
            2.0 * u0 - plus - minus
        }
    }

    /// Base and scaled weighted sums over all atoms.
    pub(crate) fn eval_parts<V: ValueSource>(&self, v: &V, xi: [i64; 2]) -> (f64, f64) {
        let u0 = v.at(xi[0], xi[1]);
        let mut acc0 = 0.0;
        if self.has_scaled {
            let mut acc1 = 0.0;
            for k in 0..self.w_base.len() {
                let a = self.atom(v, u0, xi, k);
                acc0 += self.w_base[k] * a;
                acc1 += self.w_scaled[k] * a;
            }
            (acc0, acc1)
        } else {
            for k in 0..self.w_base.len() {
                acc0 += self.w_base[k] * self.atom(v, u0, xi, k);
            }
            (acc0, 0.0)
        }
    }

    /// Extremal sum over a unit power stencil: cpos (-a)_+ - cneg (a)_+ per
    /// atom a, which collapses to -a exactly when cpos = cneg = 1.
    pub(crate) fn eval_extremal<V: ValueSource>(
        &self,
        v: &V,
        xi: [i64; 2],
        cpos: f64,
        cneg: f64,
    ) -> f64 {
        let u0 = v.at(xi[0], xi[1]);
        let mut acc = 0.0;
        for k in 0..self.w_base.len() {
            let a = self.atom(v, u0, xi, k);
            acc += self.w_base[k] * (cpos * (-a).max(0.0) - cneg * a.max(0.0));
        }
        acc
    }

    /// Derivative of the evaluation with respect to u(x), at x-factor xf.
    pub(crate) fn diagonal(&self, xf: f64) -> f64 {
        let mut d = 0.0;
        for k in 0..self.w_base.len() {
            let w = self.w_base[k] + xf * self.w_scaled.get(k).copied().unwrap_or(0.0);
            let self_beta = if self.n == 2 { self.rings[k].self_beta } else { 0.0 };
            d += w * (2.0 - 2.0 * self_beta);
        }
        d + self.tail_base + xf * self.tail_scaled
    }

    /// Tail contribution of eval_linear for a function with value ux at the
    /// evaluation point x (coordinates xc), at x-factor xf.
    pub(crate) fn tail_linear(&self, tail: &Tail, ux: f64, xc: &[f64], xf: f64) -> Result<f64> {
        let t_mass = self.tail_base + xf * self.tail_scaled;
        match tail {
            Tail::Zero => Ok(ux * t_mass),
            Tail::Constant { value } => Ok((ux - value) * t_mass),
            Tail::Cosine { amplitude, frequency, phase, offset } => {
                if self.n == 2 {
                    return Err(Error::UnsupportedTail(
                        "oscillatory tails are only supported in dimension 1".into(),
                    ));
                }
                let base = (ux - offset) * t_mass;
                let osc =
                    quad::osc_power_tail(1.0 + 2.0 * self.s, *frequency, 0.0, self.far_radius, 1e-13);
                let mfar = self.far_mult_base + xf * self.far_mult_scaled;
                Ok(base - 2.0 * amplitude * (frequency * xc[0] + phase).cos() * mfar * osc)
            }
        }
    }
}

fn check_eval_point(grid: &GridSpec, x: &[i64]) -> Result<[i64; 2]> {
    if x.len() != grid.n {
        return Err(Error::Config(format!(
            "evaluation point has {} indices but the grid dimension is {}",
            x.len(),
            grid.n
        )));
    }
    let mut xi = [0i64; 2];
    xi[..grid.n].copy_from_slice(x);
    let m_dom = grid.m_dom();
    for c in xi.iter().take(grid.n) {
        if c.abs() > m_dom {
            return Err(Error::Stencil(format!(
                "evaluation point {:?} lies outside the interior region |x| <= {}",
                x, grid.r_dom
            )));
        }
    }
    Ok(xi)
}

fn eval_with_stencil(
    st: &Stencil,
    kernel: &Kernel,
    u: &GridFunction,
    xi: [i64; 2],
) -> Result<f64> {
    let xc = [xi[0] as f64 * st.h, xi[1] as f64 * st.h];
    let (b, sc) = st.eval_parts(u, xi);
    let xf = if st.has_scaled { kernel.x_factor(&xc[..st.n]) } else { 0.0 };
    let core = b + xf * sc;
    let ux = u.at(xi[0], xi[1]);
    let tail = st.tail_linear(&u.tail, ux, &xc[..st.n], xf)?;
    Ok(core + tail)
}

/// Evaluates the linear operator
///   L u(x) = 1/2 int (2u(x) - u(x+y) - u(x-y)) K(x,y) dy
/// at a grid node in the interior region: inner ball by the second-difference
/// surrogate, middle range by cellwise quadrature of the interpolant, far
/// range analytically from the tail descriptor. Positive at strict interior
/// maxima (this is the (-Delta)^s sign convention).
pub fn eval_linear(spec: &LinearOperatorSpec, u: &GridFunction, x: &[i64]) -> Result<f64> {
    let xi = check_eval_point(&u.spec, x)?;
    let st = stencil_for(&spec.kernel, &u.spec, &spec.quad, false)?;
    eval_with_stencil(&st, &spec.kernel, u, xi)
}

/// The normalization constant of the fractional Laplacian, defined by
/// c_{n,s}^{-1} |xi|^{2s} = int (1 - cos(xi . y)) |y|^{-n-2s} dy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FracLapConstant {
    pub n: usize,
    pub s: f64,
    pub value: f64,
}

fn one_minus_cos_over_sq(y: f64) -> f64 {
    if y.abs() < 1e-2 {
        let y2 = y * y;
        0.5 - y2 / 24.0 + y2 * y2 / 720.0 - y2 * y2 * y2 / 40320.0
    } else {
        (1.0 - y.cos()) / (y * y)
    }
}

fn one_minus_j0_over_sq(r: f64) -> f64 {
    if r < 1e-2 {
        let r2 = r * r;
        0.25 - r2 / 64.0 + r2 * r2 / 2304.0
    } else {
        (1.0 - quad::bessel_j0(r)) / (r * r)
    }
}

static CNS: Lazy<Mutex<HashMap<(usize, u64), f64>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Computes (and caches) c_{n,s} from its defining integral.
pub fn frac_lap_constant(n: usize, s: f64) -> Result<FracLapConstant> {
    if n != 1 && n != 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config(format!("s must be in (0,1), got {s}")));
    }
    let key = (n, s.to_bits());
    if let Some(&v) = CNS.lock().unwrap().get(&key) {
        return Ok(FracLapConstant { n, s, value: v });
    }
    // Head: int_0^A phi(y) y^{1-2s} dy with phi the regularized difference
    // quotient, under the substitution y = A w^{1/(2-2s)} that flattens the
    // endpoint weight; then the power tail minus the oscillatory tail.
    let expo = 1.0 / (2.0 - 2.0 * s);
    let inv = match n {
        1 => {
            let a: f64 = 50.0;
            let head = a.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
                * quad::integrate(
                    &mut |w: f64| one_minus_cos_over_sq(a * w.powf(expo)),
                    0.0,
                    1.0,
                    1e-13,
                );
            2.0 * (head + a.powf(-2.0 * s) / (2.0 * s)
                - quad::osc_power_tail(1.0 + 2.0 * s, 1.0, 0.0, a, 1e-16))
        }
        _ => {
            let a: f64 = 64.0;
            let head = a.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
                * quad::integrate(
                    &mut |w: f64| one_minus_j0_over_sq(a * w.powf(expo)),
                    0.0,
                    1.0,
                    1e-11,
                );
            std::f64::consts::TAU
                * (head + a.powf(-2.0 * s) / (2.0 * s)
                    - quad::bessel_j0_power_tail(1.0 + 2.0 * s, a, 1e-15))
        }
    };
    let value = 1.0 / inv;
    CNS.lock().unwrap().insert(key, value);
    Ok(FracLapConstant { n, s, value })
}

/// The Fourier-normalized fractional Laplacian (-Delta)^s u(x):
/// c_{n,s} times eval_linear with the unit power kernel.
pub fn frac_laplacian(u: &GridFunction, x: &[i64], s: f64) -> Result<f64> {
    let c = frac_lap_constant(u.spec.n, s)?;
    let kernel = Kernel::power(u.spec.n, s, 1.0)?;
    let spec = LinearOperatorSpec::new(kernel, QuadConfig::default())?;
    Ok(c.value * eval_linear(&spec, u, x)?)
}

fn extremal(u: &GridFunction, x: &[i64], params: &EllipticityParams, plus: bool) -> Result<f64> {
    params.validate()?;
    if params.n != u.spec.n {
        return Err(Error::Config(format!(
            "parameter dimension {} does not match grid dimension {}",
            params.n, u.spec.n
        )));
    }
    let xi = check_eval_point(&u.spec, x)?;
    let kernel = Kernel::power(params.n, params.s, 1.0)?;
    let st = stencil_for(&kernel, &u.spec, &QuadConfig::default(), false)?;
    let (cpos, cneg) =
        if plus { (params.lambda_max, params.lambda) } else { (params.lambda, params.lambda_max) };
    let core = st.eval_extremal(u, xi, cpos, cneg);
    let ux = u.at(xi[0], xi[1]);
    let sigma = match &u.tail {
        Tail::Zero => ux,
        Tail::Constant { value } => ux - value,
        Tail::Cosine { .. } => {
            return Err(Error::UnsupportedTail(
                "extremal operators need a tail of resolved sign; oscillatory tails are not supported"
                    .into(),
            ));
        }
    };
    Ok(core + st.tail_base * (cpos * (-sigma).max(0.0) - cneg * sigma.max(0.0)))
}

/// The maximal Pucci-type extremal operator: over all kernels in the class,
/// the largest value of -L u(x). Weights Lambda on the positive part of the
/// centered second difference u(x+y)+u(x-y)-2u(x), lambda on the negative.
pub fn extremal_plus(u: &GridFunction, x: &[i64], params: &EllipticityParams) -> Result<f64> {
    extremal(u, x, params, true)
}

/// The minimal extremal operator; mirrors extremal_plus with the weights
/// swapped, so extremal_minus(u) = -extremal_plus(-u) exactly.
pub fn extremal_minus(u: &GridFunction, x: &[i64], params: &EllipticityParams) -> Result<f64> {
    extremal(u, x, params, false)
}

/// A zeroth-order coefficient c(x): a constant, a sinusoid in x_1, or a
/// sampled grid function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Zeroth {
    Constant { value: f64 },
    Sinusoid { amplitude: f64, frequency: f64, phase: f64, offset: f64 },
    Grid { f: GridFunction },
}

impl Zeroth {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Zeroth::Constant { value } => *value,
            Zeroth::Sinusoid { amplitude, frequency, phase, offset } => {
                offset + amplitude * (frequency * x[0] + phase).sin()
            }
            Zeroth::Grid { f } => f.eval(x),
        }
    }

    /// x-convolution against the mollifier: exact for constants and
    /// sinusoids (the modulation is damped, odd moments vanish), discrete
    /// convolution for grid data.
    pub fn mollified(&self, n: usize, eps: f64) -> Result<Zeroth> {
        match self {
            Zeroth::Constant { .. } => Ok(self.clone()),
            Zeroth::Sinusoid { amplitude, frequency, phase, offset } => Ok(Zeroth::Sinusoid {
                amplitude: amplitude * modulation_damp(n, eps, *frequency),
                frequency: *frequency,
                phase: *phase,
                offset: *offset,
            }),
            Zeroth::Grid { f } => {
                // Mollifying an exactly constant function is the identity.
                if let Some(c) = f.tail.as_constant() {
                    if f.values.iter().all(|&v| v == c) {
                        return Ok(self.clone());
                    }
                }
                Ok(Zeroth::Grid { f: mollify_function(f, eps, f.spec.r_ext)? })
            }
        }
    }

    /// A modulus of continuity when one is known in closed form.
    pub fn modulus_bound(&self) -> Option<Modulus> {
        match self {
            Zeroth::Constant { .. } => Some(Modulus::zero()),
            Zeroth::Sinusoid { amplitude, frequency, .. } => {
                Some(Modulus::Linear { slope: (amplitude * frequency).abs() })
            }
            Zeroth::Grid { .. } => None,
        }
    }
}

/// A finite inf-sup Isaacs operator
///   I(u, x) = min_b max_a { -L_ab u(x) + c_ab(x) },
/// with all kernels sharing one set of ellipticity parameters and all
/// zeroth-order terms sharing the modulus omega.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsaacsSpec {
    /// kernels[b][a]: outer index is the inf family, inner the sup family.
    pub kernels: Vec<Vec<Kernel>>,
    /// zeroth[b][a], matching the kernel layout.
    pub zeroth: Vec<Vec<Zeroth>>,
    /// Shared modulus of continuity for all zeroth-order terms.
    pub omega: Modulus,
    #[serde(default)]
    pub quad: QuadConfig,
}

impl IsaacsSpec {
    pub fn new(
        kernels: Vec<Vec<Kernel>>,
        zeroth: Vec<Vec<Zeroth>>,
        omega: Modulus,
        quad: QuadConfig,
    ) -> Result<Self> {
        let spec = IsaacsSpec { kernels, zeroth, omega, quad };
        spec.validate()?;
        Ok(spec)
    }

    pub fn b_count(&self) -> usize {
        self.kernels.len()
    }

    pub fn a_count(&self) -> usize {
        self.kernels.first().map_or(0, |row| row.len())
    }

    pub fn params(&self) -> &EllipticityParams {
        &self.kernels[0][0].params
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.kernels[0].is_empty() {
            return Err(Error::EmptyFamily("an Isaacs operator needs nonempty index families".into()));
        }
        let a_count = self.kernels[0].len();
        if self.kernels.iter().any(|row| row.len() != a_count) {
            return Err(Error::Config("kernel rows must all have the same length".into()));
        }
        if self.zeroth.len() != self.kernels.len()
            || self.zeroth.iter().any(|row| row.len() != a_count)
        {
            return Err(Error::Config(
                "zeroth-order table must match the kernel table shape".into(),
            ));
        }
        let params = self.kernels[0][0].params;
        for row in &self.kernels {
            for k in row {
                k.validate()?;
                if k.params != params {
                    return Err(Error::Config(
                        "all kernels of an Isaacs operator must share one set of ellipticity parameters"
                            .into(),
                    ));
                }
            }
        }
        self.omega.validate()?;
        self.quad.validate()?;
        // The zeroth-order terms must share omega as a modulus; check on a
        // fixed deterministic family of point pairs.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x636d6f64);
        for _ in 0..48 {
            let mut a = [0.0f64; 2];
            let mut b = [0.0f64; 2];
            let mut d2 = 0.0f64;
            for k in 0..params.n {
                a[k] = rng.gen_range(-1.0..1.0);
                b[k] = rng.gen_range(-1.0..1.0);
                d2 += (a[k] - b[k]).powi(2);
            }
            let dist = d2.sqrt();
            let allowed = self.omega.eval(dist) * (1.0 + 1e-9) + 1e-12;
            for row in &self.zeroth {
                for c in row {
                    let gap = (c.eval(&a[..params.n]) - c.eval(&b[..params.n])).abs();
                    if gap > allowed {
                        return Err(Error::ClassViolation(format!(
                            "zeroth-order term varies by {gap} over distance {dist}, beyond the declared modulus"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The linear operator of one (a, b) entry.
    pub fn linear_spec(&self, b: usize, a: usize) -> LinearOperatorSpec {
        LinearOperatorSpec { kernel: self.kernels[b][a].clone(), quad: self.quad }
    }
}

/// Evaluates every family entry -L_ab u(x) + c_ab(x) at a grid node,
/// returning the value table indexed [b][a].
pub fn entry_values(spec: &IsaacsSpec, u: &GridFunction, x: &[i64]) -> Result<Vec<Vec<f64>>> {
    let xi = check_eval_point(&u.spec, x)?;
    let xc = [xi[0] as f64 * u.spec.h, xi[1] as f64 * u.spec.h];
    let mut table = Vec::with_capacity(spec.b_count());
    for (krow, crow) in spec.kernels.iter().zip(spec.zeroth.iter()) {
        let mut row = Vec::with_capacity(krow.len());
        for (kernel, c) in krow.iter().zip(crow.iter()) {
            let st = stencil_for(kernel, &u.spec, &spec.quad, false)?;
            row.push(-eval_with_stencil(&st, kernel, u, xi)? + c.eval(&xc[..u.spec.n]));
        }
        table.push(row);
    }
    Ok(table)
}

/// Min-max scan of a value table; ties go to the lowest index. Returns
/// the value and the attaining (a, b) pair.
pub fn min_max_scan(table: &[Vec<f64>]) -> (f64, (usize, usize)) {
    let mut best: Option<(f64, usize, usize)> = None;
    for (bi, row) in table.iter().enumerate() {
        let mut row_best: Option<(f64, usize)> = None;
        for (ai, &val) in row.iter().enumerate() {
            if row_best.is_none_or(|(v, _)| val > v) {
                row_best = Some((val, ai));
            }
        }
        let (row_val, row_a) = row_best.unwrap();
        if best.is_none_or(|(v, _, _)| row_val < v) {
            best = Some((row_val, row_a, bi));
        }
    }
    let (value, a, b) = best.unwrap();
    (value, (a, b))
}

/// Evaluates the Isaacs operator at a grid node, returning the value and
/// the attaining (a, b) index pair; ties go to the lowest index.
pub fn isaacs_eval(spec: &IsaacsSpec, u: &GridFunction, x: &[i64]) -> Result<(f64, (usize, usize))> {
    Ok(min_max_scan(&entry_values(spec, u, x)?))
}

/// For an operator built from mollified kernels (all equal to |y|^{-n-2s}
/// near the origin), evaluates the bounded zeroth-order part
///   f_eps(x) = inf_b sup_a { -L~_ab v(x) + c_ab(x) },
/// where L~_ab has the remainder kernel K_ab - |y|^{-n-2s} vanishing near 0.
/// Equivalently f_eps = isaacs_eval + c^{-1} frac_laplacian.
pub fn split_zeroth(ihat: &IsaacsSpec, v: &GridFunction, x: &[i64]) -> Result<f64> {
    ihat.validate()?;
    for row in &ihat.kernels {
        for k in row {
            match k.power_core() {
                Some((radius, coeff)) if coeff == 1.0 && radius > 0.0 => {}
                _ => {
                    return Err(Error::Precondition(
                        "splitting off the fractional Laplacian requires kernels that implant the unit power kernel near the origin (mollified kernels)"
                            .into(),
                    ));
                }
            }
        }
    }
    let xi = check_eval_point(&v.spec, x)?;
    let xc = [xi[0] as f64 * v.spec.h, xi[1] as f64 * v.spec.h];
    let mut best: Option<f64> = None;
    for (krow, crow) in ihat.kernels.iter().zip(ihat.zeroth.iter()) {
        let mut row_best: Option<f64> = None;
        for (kernel, c) in krow.iter().zip(crow.iter()) {
            let st = stencil_for(kernel, &v.spec, &ihat.quad, true)?;
            let val = -eval_with_stencil(&st, kernel, v, xi)? + c.eval(&xc[..v.spec.n]);
            if row_best.is_none_or(|b| val > b) {
                row_best = Some(val);
            }
        }
        let row_val = row_best.unwrap();
        if best.is_none_or(|b| row_val < b) {
            best = Some(row_val);
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::kernels::KernelForm;
    use crate::mollify::mollify_kernel;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn power_spec(n: usize, s: f64) -> LinearOperatorSpec {
        LinearOperatorSpec::new(Kernel::power(n, s, 1.0).unwrap(), QuadConfig::default()).unwrap()
    }

    fn modulated_spec(s: f64) -> LinearOperatorSpec {
        LinearOperatorSpec::new(
            Kernel::new(
                EllipticityParams::new(1, s, 1.0, 3.0).unwrap(),
                KernelForm::ModulatedPower { base: 2.0, amplitude: 1.0, frequency: 1.0, phase: 0.0 },
            )
            .unwrap(),
            QuadConfig::default(),
        )
        .unwrap()
    }

    fn random_grid_function(spec: &crate::grid::GridSpec, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::new(*spec, values, Tail::Zero).unwrap()
    }

    #[test]
    fn linear_operator_annihilates_constants() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let u = GridFunction::constant(spec, 3.25);
        for op in [power_spec(1, 0.5), modulated_spec(0.3)] {
            for x in [-16i64, 0, 20] {
                assert_eq!(eval_linear(&op, &u, &[x]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn eval_point_outside_interior_region_is_rejected() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 8.0).unwrap();
        let u = GridFunction::zero(spec);
        let op = power_spec(1, 0.5);
        assert!(matches!(eval_linear(&op, &u, &[9]), Err(Error::Stencil(_))));
    }

    #[test]
    fn frac_lap_constant_matches_the_gamma_closed_form() {
        // Reference: c_{n,s} = 4^s Gamma(n/2 + s) s / (pi^{n/2} Gamma(1-s)).
        use statrs::function::gamma::gamma;
        for n in [1usize, 2] {
            for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
                let got = frac_lap_constant(n, s).unwrap().value;
                let want = 4f64.powf(s) * gamma(n as f64 / 2.0 + s) * s
                    / (std::f64::consts::PI.powf(n as f64 / 2.0) * gamma(1.0 - s));
                assert!(
                    (got / want - 1.0).abs() < 1e-6,
                    "n={n}, s={s}: integral gives {got}, closed form {want}"
                );
            }
        }
        let half = frac_lap_constant(1, 0.5).unwrap().value;
        assert!(
            (half - 1.0 / std::f64::consts::PI).abs() < 1e-6 / std::f64::consts::PI,
            "c(1, 1/2) = 1/pi, got {half}"
        );
    }

    #[test]
    fn frac_laplacian_of_cosine_is_the_fourier_multiplier() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 128.0).unwrap();
        let tail = Tail::Cosine { amplitude: 1.0, frequency: 1.0, phase: 0.0, offset: 0.0 };
        let u = GridFunction::from_fn(spec, tail, |p| p[0].cos());
        for s in [0.25, 0.5, 0.75] {
            let got = frac_laplacian(&u, &[0], s).unwrap();
            assert!(
                (got - 1.0).abs() < 1e-3,
                "s={s}: (-Delta)^s cos at 0 should be |1|^(2s) = 1, got {got}"
            );
        }
    }

    #[test]
    fn frac_laplacian_of_constant_vanishes() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 16.0).unwrap();
        let u = GridFunction::constant(spec, -2.0);
        assert_eq!(frac_laplacian(&u, &[3], 0.6).unwrap(), 0.0);
    }

    #[test]
    fn positive_at_a_strict_interior_maximum() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 64.0).unwrap();
        let u = GridFunction::from_fn(spec, Tail::Zero, |p| (-p[0] * p[0]).exp());
        for op in [power_spec(1, 0.4), modulated_spec(0.4)] {
            let v = eval_linear(&op, &u, &[0]).unwrap();
            assert!(v > 0.0, "value at the maximum must be positive, got {v}");
        }
    }

    #[test]
    fn matches_dense_quadrature_away_from_the_grid() {
        // Independent oracle: brute-force adaptive quadrature on the
        // analytic profile, far from any grid structure.
        let s = 0.3;
        let profile = |t: f64| (-4.0 * t * t).exp();
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 64.0).unwrap();
        let u = GridFunction::from_fn(spec, Tail::Zero, |p| profile(p[0]));
        let x = 0.5;
        let mut integrand = |t: f64| {
            (2.0 * profile(x) - profile(x + t) - profile(x - t)) * t.powf(-1.0 - 2.0 * s)
        };
        let head = quad::integrate(&mut integrand, 1e-9, 60.0, 1e-10);
        let tail = 2.0 * profile(x) * 60f64.powf(-2.0 * s) / (2.0 * s);
        let want = head + tail;
        let got = eval_linear(&power_spec(1, s), &u, &[32]).unwrap();
        assert!(
            (got / want - 1.0).abs() < 1e-3,
            "stencil {got} vs dense quadrature {want}"
        );
    }

    #[test]
    fn degree_2s_homogeneity_under_rescaling() {
        let s = 0.4;
        let profile = |t: f64| (-4.0 * t * t).exp();
        let base_spec = make_grid(1, 1.0, 2.0, 1.0 / 128.0).unwrap();
        let base = GridFunction::from_fn(base_spec, Tail::Zero, |p| profile(p[0]));
        let op = power_spec(1, s);
        let v0 = eval_linear(&op, &base, &[0]).unwrap();
        for r in [0.5f64, 2.0] {
            let spec = make_grid(1, r, 2.0 * r, r / 128.0).unwrap();
            let ur = GridFunction::from_fn(spec, Tail::Zero, |p| profile(p[0] / r));
            let vr = eval_linear(&op, &ur, &[0]).unwrap();
            let want = r.powf(-2.0 * s) * v0;
            assert!(
                (vr / want - 1.0).abs() < 0.01,
                "r={r}: got {vr}, want {want} (degree-2s homogeneity)"
            );
        }
    }

    #[test]
    fn comparison_monotonicity_in_the_ordered_input() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let u = random_grid_function(&spec, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = 7i64;
        let xs = spec.storage_index(&[x]);
        let mut bigger = u.values.clone();
        for (i, v) in bigger.iter_mut().enumerate() {
            if i != xs {
                *v += rng.gen_range(0.0..0.5);
            }
        }
        let v = GridFunction::new(spec, bigger, Tail::Zero).unwrap();
        for op in [power_spec(1, 0.5), modulated_spec(0.3)] {
            let eu = eval_linear(&op, &u, &[x]).unwrap();
            let ev = eval_linear(&op, &v, &[x]).unwrap();
            assert!(
                eu >= ev - 1e-12,
                "raising u away from x must not raise the value: {eu} < {ev}"
            );
        }
    }

    #[test]
    fn extremal_collapse_at_equal_bounds_is_exact() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let params = EllipticityParams::new(1, 0.5, 1.0, 1.0).unwrap();
        for seed in 0..20u64 {
            let mut u = random_grid_function(&spec, seed);
            if seed % 3 == 0 {
                u.tail = Tail::Constant { value: 0.3 };
            }
            let x = [(seed as i64 % 17) - 8];
            let mp = extremal_plus(&u, &x, &params).unwrap();
            let el = eval_linear(&power_spec(1, 0.5), &u, &x).unwrap();
            assert_eq!(mp, -el, "lambda = Lambda collapses the extremal exactly");
            let mm = extremal_minus(&u, &x, &params).unwrap();
            assert_eq!(mm, mp, "both extremals coincide when lambda = Lambda");
        }
    }

    #[test]
    fn extremal_antisymmetry_is_exact() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let params = EllipticityParams::new(1, 0.4, 1.0, 2.5).unwrap();
        for seed in 20..40u64 {
            let u = random_grid_function(&spec, seed);
            let neg = GridFunction::new(
                u.spec,
                u.values.iter().map(|v| -v).collect(),
                Tail::Zero,
            )
            .unwrap();
            let x = [(seed as i64 % 13) - 6];
            let plus_of_neg = extremal_plus(&neg, &x, &params).unwrap();
            let minus_of_u = extremal_minus(&u, &x, &params).unwrap();
            assert_eq!(plus_of_neg, -minus_of_u, "M+(-u) = -M-(u) termwise");
        }
    }

    #[test]
    fn extremal_minus_never_exceeds_extremal_plus() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let params = EllipticityParams::new(1, 0.6, 1.0, 2.0).unwrap();
        for seed in 40..60u64 {
            let u = random_grid_function(&spec, seed);
            let x = [(seed as i64 % 15) - 7];
            let lo = extremal_minus(&u, &x, &params).unwrap();
            let hi = extremal_plus(&u, &x, &params).unwrap();
            assert!(lo <= hi + 1e-14, "M- {lo} must not exceed M+ {hi}");
        }
    }

    #[test]
    fn extremal_matches_sign_split_dense_quadrature() {
        let s = 0.3;
        let (lambda, lambda_max) = (1.0, 2.0);
        let profile = |t: f64| (-4.0 * t * t).exp();
        let x = 0.5;
        // Oracle: M+ = int_0^inf [Lambda (d)_+ - lambda (d)_-] t^{-1-2s} dt
        // with d(t) = u(x+t) + u(x-t) - 2u(x), by adaptive quadrature.
        let mut integrand = |t: f64| {
            let d = profile(x + t) + profile(x - t) - 2.0 * profile(x);
            (lambda_max * d.max(0.0) - lambda * (-d).max(0.0)) * t.powf(-1.0 - 2.0 * s)
        };
        let head = quad::integrate(&mut integrand, 1e-9, 60.0, 1e-10);
        let far = -lambda * 2.0 * profile(x) * 60f64.powf(-2.0 * s) / (2.0 * s);
        let want = head + far;
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 64.0).unwrap();
        let u = GridFunction::from_fn(spec, Tail::Zero, |p| profile(p[0]));
        let params = EllipticityParams::new(1, s, lambda, lambda_max).unwrap();
        let got = extremal_plus(&u, &[32], &params).unwrap();
        assert!(
            (got / want - 1.0).abs() < 1e-2,
            "extremal {got} vs sign-split quadrature {want}"
        );
    }

    fn constant_isaacs(c: Vec<Vec<f64>>, s: f64) -> IsaacsSpec {
        let k = Kernel::power(1, s, 1.0).unwrap();
        let kernels = c.iter().map(|row| vec![k.clone(); row.len()]).collect();
        let zeroth = c
            .iter()
            .map(|row| row.iter().map(|&v| Zeroth::Constant { value: v }).collect())
            .collect();
        IsaacsSpec::new(kernels, zeroth, Modulus::zero(), QuadConfig::default()).unwrap()
    }

    #[test]
    fn single_entry_isaacs_is_minus_linear_plus_zeroth() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let u = random_grid_function(&spec, 77);
        let isaacs = constant_isaacs(vec![vec![0.7]], 0.5);
        let (val, (a, b)) = isaacs_eval(&isaacs, &u, &[5]).unwrap();
        let linear = eval_linear(&power_spec(1, 0.5), &u, &[5]).unwrap();
        assert_eq!(val, -linear + 0.7);
        assert_eq!((a, b), (0, 0));
    }

    #[test]
    fn isaacs_of_zero_is_inf_sup_of_the_zeroth_terms() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 16.0).unwrap();
        let u = GridFunction::zero(spec);
        let isaacs = constant_isaacs(vec![vec![5.0, 7.0], vec![1.0, 3.0]], 0.5);
        let (val, (a, b)) = isaacs_eval(&isaacs, &u, &[0]).unwrap();
        assert_eq!(val, 3.0, "row maxima are 7 and 3; the min is 3");
        assert_eq!((a, b), (1, 1), "attained by entry (a=1, b=1)");
    }

    #[test]
    fn isaacs_ties_break_to_the_lowest_indices() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 16.0).unwrap();
        let u = GridFunction::zero(spec);
        let isaacs = constant_isaacs(vec![vec![2.0, 2.0], vec![2.0, 2.0]], 0.5);
        let (val, pair) = isaacs_eval(&isaacs, &u, &[0]).unwrap();
        assert_eq!(val, 2.0);
        assert_eq!(pair, (0, 0));
    }

    #[test]
    fn isaacs_is_nonexpansive_in_the_zeroth_terms() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let u = random_grid_function(&spec, 11);
        let base = vec![vec![0.3, -0.2], vec![0.0, 0.5]];
        let isaacs = constant_isaacs(base.clone(), 0.5);
        let delta = 0.07;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let perturbed: Vec<Vec<f64>> = base
            .iter()
            .map(|row| row.iter().map(|v| v + rng.gen_range(-delta..delta)).collect())
            .collect();
        let isaacs_p = constant_isaacs(perturbed, 0.5);
        let (v0, _) = isaacs_eval(&isaacs, &u, &[4]).unwrap();
        let (v1, _) = isaacs_eval(&isaacs_p, &u, &[4]).unwrap();
        assert!(
            (v1 - v0).abs() <= delta + 1e-12,
            "perturbing every c by at most {delta} moved the value by {}",
            (v1 - v0).abs()
        );
    }

    #[test]
    fn ellipticity_sandwich_for_a_power_coefficient_family() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let s = 0.5;
        let params = EllipticityParams::new(1, s, 1.0, 2.0).unwrap();
        let coeff = [vec![1.0, 1.3], vec![1.7, 2.0]];
        let kernels: Vec<Vec<Kernel>> = coeff
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&c| {
                        Kernel::new(params, KernelForm::Power { coeff: c }).unwrap()
                    })
                    .collect()
            })
            .collect();
        let zeroth = vec![
            vec![Zeroth::Constant { value: 0.4 }, Zeroth::Constant { value: -0.1 }],
            vec![Zeroth::Constant { value: 0.0 }, Zeroth::Constant { value: 0.2 }],
        ];
        let isaacs =
            IsaacsSpec::new(kernels, zeroth, Modulus::zero(), QuadConfig::default()).unwrap();
        for seed in 100..110u64 {
            let u = random_grid_function(&spec, seed);
            let v = random_grid_function(&spec, seed + 1000);
            let sum = GridFunction::new(
                spec,
                u.values.iter().zip(v.values.iter()).map(|(a, b)| a + b).collect(),
                Tail::Zero,
            )
            .unwrap();
            let x = [(seed as i64 % 19) - 9];
            let diff = isaacs_eval(&isaacs, &sum, &x).unwrap().0
                - isaacs_eval(&isaacs, &u, &x).unwrap().0;
            let lo = extremal_minus(&v, &x, &params).unwrap();
            let hi = extremal_plus(&v, &x, &params).unwrap();
            assert!(
                lo - 1e-11 <= diff && diff <= hi + 1e-11,
                "sandwich violated: {lo} <= {diff} <= {hi}"
            );
        }
    }

    fn mollified_isaacs(eps: f64, s: f64) -> IsaacsSpec {
        let params = EllipticityParams::new(1, s, 0.9, 3.1).unwrap();
        let mk = |amp: f64, phase: f64| {
            mollify_kernel(
                &Kernel::new(
                    params,
                    KernelForm::ModulatedPower { base: 2.0, amplitude: amp, frequency: 1.0, phase },
                )
                .unwrap(),
                eps,
            )
            .unwrap()
        };
        let kernels = vec![vec![mk(0.5, 0.0), mk(1.0, 0.3)], vec![mk(0.8, 1.0), mk(0.2, 2.0)]];
        let zeroth = vec![
            vec![
                Zeroth::Sinusoid { amplitude: 0.3, frequency: 1.0, phase: 0.0, offset: 0.1 },
                Zeroth::Constant { value: -0.2 },
            ],
            vec![
                Zeroth::Constant { value: 0.4 },
                Zeroth::Sinusoid { amplitude: 0.2, frequency: 2.0, phase: 0.5, offset: 0.0 },
            ],
        ];
        IsaacsSpec::new(kernels, zeroth, Modulus::Linear { slope: 0.4 }, QuadConfig::default())
            .unwrap()
    }

    #[test]
    fn split_zeroth_of_the_pure_power_operator_vanishes() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let v = random_grid_function(&spec, 8);
        let isaacs = constant_isaacs(vec![vec![0.0]], 0.5);
        for x in [-10i64, 0, 15] {
            assert_eq!(
                split_zeroth(&isaacs, &v, &[x]).unwrap(),
                0.0,
                "the remainder kernel of the pure power kernel is zero"
            );
        }
    }

    #[test]
    fn split_zeroth_of_the_zero_function_is_inf_sup_c() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let v = GridFunction::zero(spec);
        let ihat = mollified_isaacs(0.25, 0.4);
        let x = [6i64];
        let xc = [6.0 * spec.h];
        let want = ihat
            .zeroth
            .iter()
            .map(|row| {
                row.iter().map(|c| c.eval(&xc)).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(split_zeroth(&ihat, &v, &x).unwrap(), want);
    }

    #[test]
    fn split_zeroth_rejects_unmollified_kernels() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 16.0).unwrap();
        let v = GridFunction::zero(spec);
        let isaacs = constant_isaacs(vec![vec![0.0]], 0.5);
        let mut bad = isaacs.clone();
        bad.kernels[0][0] = Kernel::new(
            EllipticityParams::new(1, 0.5, 1.0, 2.0).unwrap(),
            KernelForm::BumpedPower { coeff: 1.0, height: 1.0, center: 1.0, width: 0.25 },
        )
        .unwrap();
        assert!(matches!(split_zeroth(&bad, &v, &[0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn operator_splitting_is_consistent() {
        // isaacs_eval = -c^{-1} (-Delta)^s v + split_zeroth, checked
        // numerically: both sides assemble the same integrals through
        // different stencils.
        let s = 0.4;
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let ihat = mollified_isaacs(0.25, s);
        let power = power_spec(1, s);
        for seed in 200..203u64 {
            let v = random_grid_function(&spec, seed);
            for x in [-12i64, 3, 9] {
                let (full, _) = isaacs_eval(&ihat, &v, &[x]).unwrap();
                let lead = -eval_linear(&power, &v, &[x]).unwrap();
                let f_eps = split_zeroth(&ihat, &v, &[x]).unwrap();
                assert!(
                    (full - (lead + f_eps)).abs() < 1e-8,
                    "splitting identity off by {}",
                    (full - (lead + f_eps)).abs()
                );
            }
        }
    }

    #[test]
    fn sinusoid_mollification_matches_direct_convolution() {
        let eps = 0.25;
        let z = Zeroth::Sinusoid { amplitude: 0.8, frequency: 2.0, phase: 0.4, offset: -0.3 };
        let zm = z.mollified(1, eps).unwrap();
        let phi = crate::mollify::make_mollifier(1, eps).unwrap();
        for x in [-1.0, 0.0, 0.6] {
            let direct = quad::integrate(
                &mut |t: f64| phi.eval(&[t]) * z.eval(&[x - t]),
                -eps,
                eps,
                1e-12,
            );
            let got = zm.eval(&[x]);
            assert!(
                (got - direct).abs() < 1e-10,
                "x={x}: damped sinusoid {got} vs direct convolution {direct}"
            );
        }
    }

    #[test]
    fn padded_and_direct_evaluation_agree_bitwise() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 32.0).unwrap();
        let mut u = random_grid_function(&spec, 31);
        u.tail = Tail::Constant { value: 0.2 };
        let op = modulated_spec(0.5);
        let st = stencil_for(&op.kernel, &spec, &op.quad, false).unwrap();
        let padded = Padded::new(&u, st.halo());
        for x in [-20i64, 0, 13] {
            let direct = st.eval_parts(&u, [x, 0]);
            let fast = st.eval_parts(&padded, [x, 0]);
            assert_eq!(direct, fast, "padded evaluation must be a pure refactoring");
        }
    }

    #[test]
    fn two_dimensional_radial_bump_matches_radial_quadrature() {
        let s = 0.5;
        let profile = |r2: f64| (-4.0 * r2).exp();
        // Oracle: for radial u, the operator at 0 is
        // 2 pi int_0^inf (u(0) - u(rho)) rho^{-1-2s} drho.
        let mut integrand =
            |rho: f64| (profile(0.0) - profile(rho * rho)) * rho.powf(-1.0 - 2.0 * s);
        let head = quad::integrate(&mut integrand, 1e-9, 60.0, 1e-10);
        let far = profile(0.0) * 60f64.powf(-2.0 * s) / (2.0 * s);
        let want = std::f64::consts::TAU * (head + far);
        let mut errors = Vec::new();
        for k in [16.0, 32.0] {
            let spec = make_grid(2, 1.0, 2.0, 1.0 / k).unwrap();
            let u =
                GridFunction::from_fn(spec, Tail::Zero, |p| profile(p[0] * p[0] + p[1] * p[1]));
            let got = eval_linear(&power_spec(2, s), &u, &[0, 0]).unwrap();
            errors.push((got / want - 1.0).abs());
        }
        assert!(
            errors[0] < 0.05,
            "2d stencil off by {} relative at h = 1/16",
            errors[0]
        );
        assert!(
            errors[1] < 0.6 * errors[0],
            "refinement must shrink the error: {errors:?}"
        );
    }

    #[test]
    fn cosine_tails_are_rejected_where_unsupported() {
        let spec2 = make_grid(2, 1.0, 2.0, 1.0 / 8.0).unwrap();
        let tail = Tail::Cosine { amplitude: 1.0, frequency: 1.0, phase: 0.0, offset: 0.0 };
        let u2 = GridFunction::new(spec2, vec![0.0; spec2.node_count()], tail)
            .unwrap();
        assert!(matches!(
            eval_linear(&power_spec(2, 0.5), &u2, &[0, 0]),
            Err(Error::UnsupportedTail(_))
        ));
        let spec1 = make_grid(1, 1.0, 2.0, 1.0 / 8.0).unwrap();
        let u1 = GridFunction::new(spec1, vec![0.0; spec1.node_count()], tail).unwrap();
        let params = EllipticityParams::new(1, 0.5, 1.0, 2.0).unwrap();
        assert!(matches!(extremal_plus(&u1, &[0], &params), Err(Error::UnsupportedTail(_))));
    }

    #[test]
    fn quadrature_config_invariants_are_enforced() {
        let spec = make_grid(1, 1.0, 2.0, 1.0 / 8.0).unwrap();
        let u = GridFunction::zero(spec);
        let mut op = power_spec(1, 0.5);
        op.quad.r_far = Some(1.0);
        assert!(matches!(eval_linear(&op, &u, &[0]), Err(Error::Config(_))));
        let mut op = power_spec(1, 0.5);
        op.quad.r0 = Some(0.05);
        assert!(matches!(eval_linear(&op, &u, &[0]), Err(Error::Config(_))));
        assert!(QuadConfig { n_theta: 9, ..QuadConfig::default() }.validate().is_err());
    }

    #[test]
    fn empty_families_are_rejected() {
        assert!(matches!(
            IsaacsSpec::new(vec![], vec![], Modulus::zero(), QuadConfig::default()),
            Err(Error::EmptyFamily(_))
        ));
    }

    #[test]
    fn zeroth_terms_must_respect_the_shared_modulus() {
        let k = Kernel::power(1, 0.5, 1.0).unwrap();
        let fast = Zeroth::Sinusoid { amplitude: 1.0, frequency: 5.0, phase: 0.0, offset: 0.0 };
        let err = IsaacsSpec::new(
            vec![vec![k]],
            vec![vec![fast]],
            Modulus::Linear { slope: 0.1 },
            QuadConfig::default(),
        );
        assert!(matches!(err, Err(Error::ClassViolation(_))));
    }
}
