//! Uniform symmetric grids on [-R_ext, R_ext]^n, grid functions with an
//! exterior tail descriptor, moduli of continuity, and the discrete norms
//! used throughout: sup distance, Holder seminorms, and the weighted L^1
//! norm with weight 1/(1 + |x|^{n+2s}).

use crate::error::{Error, Result};
use crate::quad;
use serde::{Deserialize, Serialize};

/// Uniform grid on the box [-R_ext, R_ext]^n with nodes every h, aligned so
/// that the origin, +-R_dom, and +-R_ext are all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub r_dom: f64,
    pub r_ext: f64,
    pub h: f64,
}

fn aligned_steps(radius: f64, h: f64) -> Result<i64> {
    let ratio = radius / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::Config(format!(
            "radius {radius} is not an integer multiple of spacing {h}"
        )));
    }
    Ok(rounded as i64)
}

impl GridSpec {
    /// Validated constructor; see also the free function make_grid.
    pub fn new(n: usize, r_dom: f64, r_ext: f64, h: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!("spacing must be positive, got {h}")));
        }
        if !(r_dom > 0.0) || r_ext < 2.0 * r_dom - 1e-12 {
            return Err(Error::Config(format!(
                "radii must satisfy 0 < R_dom and R_ext >= 2 R_dom, got R_dom={r_dom}, R_ext={r_ext}"
            )));
        }
        let spec = GridSpec { n, r_dom, r_ext, h };
        aligned_steps(r_dom, h)?;
        aligned_steps(r_ext, h)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.n, self.r_dom, self.r_ext, self.h).map(|_| ())
    }

    /// Steps from the origin to R_ext along one axis.
    pub fn m_ext(&self) -> i64 {
        (self.r_ext / self.h).round() as i64
    }

    /// Steps from the origin to R_dom along one axis.
    pub fn m_dom(&self) -> i64 {
        (self.r_dom / self.h).round() as i64
    }

    /// Nodes per axis: 2 m_ext + 1.
    pub fn per_axis(&self) -> usize {
        (2 * self.m_ext() + 1) as usize
    }

    pub fn node_count(&self) -> usize {
        self.per_axis().pow(self.n as u32)
    }

    /// Coordinate of a signed per-axis index; index 0 is exactly the origin.
    pub fn coord(&self, i: i64) -> f64 {
        i as f64 * self.h
    }

    /// Storage index of a signed multi-index, lexicographic with x outermost.
    pub fn storage_index(&self, idx: &[i64]) -> usize {
        let m = self.m_ext();
        debug_assert_eq!(idx.len(), self.n);
        match self.n {
            1 => (idx[0] + m) as usize,
            _ => ((idx[0] + m) as usize) * self.per_axis() + (idx[1] + m) as usize,
        }
    }

    /// Signed multi-index of a storage index.
    pub fn multi_index(&self, idx: usize) -> [i64; 2] {
        let m = self.m_ext();
        match self.n {
            1 => [idx as i64 - m, 0],
            _ => {
                let p = self.per_axis();
                [(idx / p) as i64 - m, (idx % p) as i64 - m]
            }
        }
    }

    /// Coordinates of a storage index; the second entry is 0 when n = 1.
    pub fn node_coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        [self.coord(mi[0]), self.coord(mi[1])]
    }

    /// True when the signed multi-index lies inside the grid box.
    pub fn in_box(&self, idx: &[i64]) -> bool {
        let m = self.m_ext();
        idx.iter().take(self.n).all(|&i| -m <= i && i <= m)
    }

    /// Storage index of the node nearest to x, if x is one (within 1e-9 h).
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        let m = self.m_ext();
        let mut idx = [0i64; 2];
        for k in 0..self.n {
            let t = x[k] / self.h;
            let i = t.round();
            if (t - i).abs() > 1e-9 || i.abs() > m as f64 {
                return None;
            }
            idx[k] = i as i64;
        }
        Some(self.storage_index(&idx[..self.n]))
    }
}

/// Builds a validated GridSpec; node 0 is the origin and nodes are
/// enumerated lexicographically (x outermost).
pub fn make_grid(n: usize, r_dom: f64, r_ext: f64, h: f64) -> Result<GridSpec> {
    GridSpec::new(n, r_dom, r_ext, h)
}

/// Exterior extension of a grid function for |x| outside the grid box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Tail {
    Zero,
    Constant { value: f64 },
    /// Plane wave along the first axis:
    /// amplitude * cos(frequency * x_1 + phase) + offset.
    Cosine { amplitude: f64, frequency: f64, phase: f64, offset: f64 },
}

impl Tail {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Tail::Zero => 0.0,
            Tail::Constant { value } => value,
            Tail::Cosine { amplitude, frequency, phase, offset } => {
                amplitude * (frequency * x[0] + phase).cos() + offset
            }
        }
    }

    /// True when the tail is a constant (zero counts as constant 0).
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Tail::Zero => Some(0.0),
            Tail::Constant { value } => Some(value),
            Tail::Cosine { .. } => None,
        }
    }
}

/// A function sampled on a grid plus an exterior tail; this is the carrier
/// for solutions, boundary data, and right-hand sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub tail: Tail,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>, tail: Tail) -> Result<Self> {
        if values.len() != spec.node_count() {
            return Err(Error::Config(format!(
                "value count {} does not match node count {}",
                values.len(),
                spec.node_count()
            )));
        }
        Ok(GridFunction { spec, values, tail })
    }

    pub fn zero(spec: GridSpec) -> Self {
        GridFunction { spec, values: vec![0.0; spec.node_count()], tail: Tail::Zero }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        GridFunction {
            spec,
            values: vec![c; spec.node_count()],
            tail: Tail::Constant { value: c },
        }
    }

    /// Samples f on every node; the tail is taken as given.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(spec: GridSpec, tail: Tail, mut f: F) -> Self {
        let mut values = Vec::with_capacity(spec.node_count());
        for idx in 0..spec.node_count() {
            let x = spec.node_coords(idx);
            values.push(f(&x[..spec.n]));
        }
        GridFunction { spec, values, tail }
    }

    /// Value at a signed multi-index, falling back to the tail outside the box.
    pub fn value_at(&self, idx: &[i64]) -> f64 {
        if self.spec.in_box(idx) {
            self.values[self.spec.storage_index(idx)]
        } else {
            let mut x = [0.0; 2];
            for k in 0..self.spec.n {
                x[k] = self.spec.coord(idx[k]);
            }
            self.tail.eval(&x[..self.spec.n])
        }
    }

    /// Multilinear interpolation inside the box, tail outside.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let m = self.spec.m_ext();
        let n = self.spec.n;
        let slack = 1e-12 * self.spec.r_ext.max(1.0);
        for k in 0..n {
            if x[k].abs() > self.spec.r_ext + slack {
                return self.tail.eval(x);
            }
        }
        let mut base = [0i64; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..n {
            let t = x[k] / self.spec.h;
            let mut i = t.floor() as i64;
            i = i.clamp(-m, m - 1);
            base[k] = i;
            frac[k] = (t - i as f64).clamp(0.0, 1.0);
        }
        match n {
            1 => {
                let v0 = self.values[self.spec.storage_index(&[base[0]])];
                let v1 = self.values[self.spec.storage_index(&[base[0] + 1])];
                (1.0 - frac[0]) * v0 + frac[0] * v1
            }
            _ => {
                let mut acc = 0.0;
                for (di, wi) in [(0i64, 1.0 - frac[0]), (1, frac[0])] {
                    for (dj, wj) in [(0i64, 1.0 - frac[1]), (1, frac[1])] {
                        let v = self.values[self.spec.storage_index(&[base[0] + di, base[1] + dj])];
                        acc += wi * wj * v;
                    }
                }
                acc
            }
        }
    }

    /// Maps the node values (tail untouched).
    pub fn map<F: FnMut(f64) -> f64>(&self, mut f: F) -> Self {
        GridFunction {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
            tail: self.tail,
        }
    }
}

/// Modulus of continuity: a nonnegative, nondecreasing, concave function
/// with omega(0) = 0, in closed form or as a piecewise-linear envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Modulus {
    Linear { slope: f64 },
    /// coeff * t^exponent with exponent in (0, 1].
    PowerLaw { coeff: f64, exponent: f64 },
    /// Piecewise-linear upper envelope through (t, omega(t)) knots starting
    /// at (0, 0); extended beyond the last knot with the final slope.
    Envelope { knots: Vec<(f64, f64)> },
}

impl Modulus {
    pub fn zero() -> Self {
        Modulus::Linear { slope: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Modulus::Linear { slope } => {
                if *slope < 0.0 || !slope.is_finite() {
                    return Err(Error::Config(format!("modulus slope must be >= 0, got {slope}")));
                }
            }
            Modulus::PowerLaw { coeff, exponent } => {
                if *coeff < 0.0 || !(*exponent > 0.0 && *exponent <= 1.0) {
                    return Err(Error::Config(format!(
                        "power modulus needs coeff >= 0 and exponent in (0,1], got {coeff}, {exponent}"
                    )));
                }
            }
            Modulus::Envelope { knots } => {
                if knots.is_empty() || knots[0] != (0.0, 0.0) {
                    return Err(Error::Config(
                        "envelope modulus must start at the knot (0, 0)".into(),
                    ));
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 || w[1].1 < w[0].1 - 1e-12 {
                        return Err(Error::Config(
                            "envelope knots must be strictly increasing in t and nondecreasing in value"
                                .into(),
                        ));
                    }
                }
                for w in knots.windows(3) {
                    let s01 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    let s12 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
                    if s12 > s01 + 1e-9 * (1.0 + s01.abs()) {
                        return Err(Error::Config(
                            "envelope modulus fails the concavity midpoint test".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match self {
            Modulus::Linear { slope } => slope * t,
            Modulus::PowerLaw { coeff, exponent } => coeff * t.powf(*exponent),
            Modulus::Envelope { knots } => {
                if knots.len() == 1 {
                    return 0.0;
                }
                for w in knots.windows(2) {
                    if t <= w[1].0 {
                        let lam = (t - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + lam * (w[1].1 - w[0].1);
                    }
                }
                let last = knots[knots.len() - 1];
                let prev = knots[knots.len() - 2];
                let slope = (last.1 - prev.1) / (last.0 - prev.0);
                last.1 + slope * (t - last.0)
            }
        }
    }

    /// Largest t with omega(t) <= target; infinity when omega never exceeds it.
    pub fn inverse_sup(&self, target: f64) -> f64 {
        assert!(target >= 0.0);
        match self {
            Modulus::Linear { slope } => {
                if *slope == 0.0 {
                    f64::INFINITY
                } else {
                    target / slope
                }
            }
            Modulus::PowerLaw { coeff, exponent } => {
                if *coeff == 0.0 {
                    f64::INFINITY
                } else {
                    (target / coeff).powf(1.0 / exponent)
                }
            }
            Modulus::Envelope { knots } => {
                let last = knots[knots.len() - 1];
                if last.1 <= target {
                    let prev = if knots.len() >= 2 { knots[knots.len() - 2] } else { last };
                    let slope =
                        if knots.len() >= 2 { (last.1 - prev.1) / (last.0 - prev.0) } else { 0.0 };
                    if slope <= 0.0 {
                        return f64::INFINITY;
                    }
                    return last.0 + (target - last.1) / slope;
                }
                for w in knots.windows(2) {
                    if w[1].1 > target {
                        if w[1].1 == w[0].1 {
                            return w[0].0;
                        }
                        let lam = (target - w[0].1) / (w[1].1 - w[0].1);
                        return w[0].0 + lam * (w[1].0 - w[0].0);
                    }
                }
                unreachable!("envelope scan covers all knots");
            }
        }
    }

    /// Exponent of decay near zero, used as a reference convergence rate;
    /// infinite for the zero modulus.
    pub fn decay_exponent(&self) -> f64 {
        match self {
            Modulus::Linear { slope } => {
                if *slope == 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                }
            }
            Modulus::PowerLaw { coeff, exponent } => {
                if *coeff == 0.0 {
                    f64::INFINITY
                } else {
                    *exponent
                }
            }
            Modulus::Envelope { knots } => {
                // Log-log least-squares slope over the positive knots.
                let pts: Vec<(f64, f64)> = knots
                    .iter()
                    .filter(|(t, v)| *t > 0.0 && *v > 0.0)
                    .map(|(t, v)| (t.ln(), v.ln()))
                    .collect();
                if pts.len() < 2 {
                    return f64::INFINITY;
                }
                let n = pts.len() as f64;
                let sx: f64 = pts.iter().map(|p| p.0).sum();
                let sy: f64 = pts.iter().map(|p| p.1).sum();
                let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
                let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
                ((n * sxy - sx * sy) / (n * sxx - sx * sx)).clamp(0.0, 1.0)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(
            self,
            Modulus::Linear { slope: 0.0 } | Modulus::PowerLaw { coeff: 0.0, .. }
        )
    }
}

/// Axis-aligned closed box used to restrict norms and solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub n: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Region {
    /// The sup-norm ball [-radius, radius]^n.
    pub fn ball(n: usize, radius: f64) -> Self {
        Region { n, lo: [-radius; 2], hi: [radius; 2] }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Region { n: 1, lo: [lo, 0.0], hi: [hi, 0.0] }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Region { n: 2, lo, hi }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.n).all(|k| self.lo[k] - tol <= x[k] && x[k] <= self.hi[k] + tol)
    }

    fn strictly_contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.n).all(|k| self.lo[k] + tol < x[k] && x[k] < self.hi[k] - tol)
    }

    /// Sup-norm diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.n).map(|k| self.hi[k] - self.lo[k]).fold(0.0, f64::max)
    }

    /// Storage indices of grid nodes inside the closed box, ascending.
    pub fn nodes_in(&self, spec: &GridSpec) -> Vec<usize> {
        let tol = 1e-9 * spec.h;
        (0..spec.node_count())
            .filter(|&idx| {
                let x = spec.node_coords(idx);
                self.contains(&x[..spec.n], tol)
            })
            .collect()
    }

    /// Storage indices strictly inside the open box, ascending.
    pub fn nodes_strictly_in(&self, spec: &GridSpec) -> Vec<usize> {
        let tol = 1e-9 * spec.h;
        (0..spec.node_count())
            .filter(|&idx| {
                let x = spec.node_coords(idx);
                self.strictly_contains(&x[..spec.n], tol)
            })
            .collect()
    }
}

fn check_region_in_grid(region: &Region, spec: &GridSpec) -> Result<()> {
    if region.n != spec.n {
        return Err(Error::Config(format!(
            "region dimension {} does not match grid dimension {}",
            region.n, spec.n
        )));
    }
    let tol = 1e-9 * spec.h;
    for k in 0..spec.n {
        if region.lo[k] < -spec.r_ext - tol || region.hi[k] > spec.r_ext + tol {
            return Err(Error::Config(format!(
                "region [{}, {}] leaves the grid box of radius {}",
                region.lo[k], region.hi[k], spec.r_ext
            )));
        }
    }
    Ok(())
}

/// Max node-wise |f - g| over the region. Both functions must share a grid.
pub fn sup_distance(f: &GridFunction, g: &GridFunction, region: &Region) -> Result<f64> {
    if f.spec != g.spec {
        return Err(Error::IncompatibleGrid(format!(
            "grids differ: {:?} vs {:?}",
            f.spec, g.spec
        )));
    }
    check_region_in_grid(region, &f.spec)?;
    let nodes = region.nodes_in(&f.spec);
    if nodes.is_empty() {
        return Err(Error::EmptyRegion("no grid nodes in region".into()));
    }
    Ok(nodes
        .iter()
        .map(|&i| (f.values[i] - g.values[i]).abs())
        .fold(0.0, f64::max))
}

/// Sup norm of f over the region.
pub fn sup_norm(f: &GridFunction, region: &Region) -> Result<f64> {
    sup_distance(f, &GridFunction::zero(f.spec), region)
}

/// Discrete Holder seminorm: sup over node pairs of |f(x)-f(y)| / |x-y|^alpha
/// with the Euclidean distance.
pub fn holder_seminorm(f: &GridFunction, alpha: f64, region: &Region) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("Holder exponent must be in (0,1], got {alpha}")));
    }
    check_region_in_grid(region, &f.spec)?;
    let nodes = region.nodes_in(&f.spec);
    if nodes.len() < 2 {
        return Err(Error::EmptyRegion(format!(
            "need at least 2 nodes in region, found {}",
            nodes.len()
        )));
    }
    let coords: Vec<[f64; 2]> = nodes.iter().map(|&i| f.spec.node_coords(i)).collect();
    let mut best = 0.0f64;
    for a in 0..nodes.len() {
        for b in (a + 1)..nodes.len() {
            let dx = coords[a][0] - coords[b][0];
            let dy = coords[a][1] - coords[b][1];
            let dist = (dx * dx + dy * dy).sqrt();
            let num = (f.values[nodes[a]] - f.values[nodes[b]]).abs();
            best = best.max(num / dist.powf(alpha));
        }
    }
    Ok(best)
}

/// Total mass of the weight 1/(1+|x|^{n+2s}) over all of R^n.
pub fn weight_full_mass(n: usize, s: f64) -> f64 {
    let p = n as f64 + 2.0 * s;
    match n {
        1 => {
            let head = quad::integrate(&mut |x: f64| 1.0 / (1.0 + x.powf(p)), 0.0, 8.0, 1e-13);
            let tail = quad::tail_integral(&mut |x: f64| 1.0 / (1.0 + x.powf(p)), 8.0, 1e-13);
            2.0 * (head + tail)
        }
        _ => {
            let head =
                quad::integrate(&mut |r: f64| r / (1.0 + r.powf(p)), 0.0, 8.0, 1e-13);
            let tail = quad::tail_integral(&mut |r: f64| r / (1.0 + r.powf(p)), 8.0, 1e-13);
            2.0 * std::f64::consts::PI * (head + tail)
        }
    }
}

fn weight_box_mass(spec: &GridSpec, s: f64) -> f64 {
    let p = spec.n as f64 + 2.0 * s;
    let r = spec.r_ext;
    match spec.n {
        1 => quad::integrate(&mut |x: f64| 1.0 / (1.0 + x.abs().powf(p)), -r, r, 1e-12),
        _ => quad::integrate(
            &mut |x: f64| {
                quad::integrate(
                    &mut |y: f64| 1.0 / (1.0 + (x * x + y * y).powf(0.5 * p)),
                    -r,
                    r,
                    1e-10,
                )
            },
            -r,
            r,
            1e-10,
        ),
    }
}

/// Weighted L^1 norm: trapezoid quadrature of |f| w_s over the grid box plus
/// the analytic tail mass for zero or constant tails.
pub fn weighted_l1_norm(f: &GridFunction, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config(format!("s must be in (0,1), got {s}")));
    }
    let tail_c = match f.tail.as_constant() {
        Some(c) => c,
        None => {
            return Err(Error::UnsupportedTail(
                "weighted L1 norm needs a zero or constant tail; an oscillatory tail carries no integrability certificate"
                    .into(),
            ))
        }
    };
    let spec = &f.spec;
    let p = spec.n as f64 + 2.0 * s;
    let m = spec.m_ext();
    let mut grid_part = 0.0;
    for idx in 0..spec.node_count() {
        let mi = spec.multi_index(idx);
        let x = spec.node_coords(idx);
        let mut w_trap = 1.0;
        for mik in mi.iter().take(spec.n) {
            if mik.abs() == m {
                w_trap *= 0.5;
            }
        }
        let r2 = x[0] * x[0] + x[1] * x[1];
        let weight = 1.0 / (1.0 + r2.powf(0.5 * p));
        grid_part += w_trap * f.values[idx].abs() * weight;
    }
    grid_part *= spec.h.powi(spec.n as i32);
    let tail_part = if tail_c == 0.0 {
        0.0
    } else {
        tail_c.abs() * (weight_full_mass(spec.n, s) - weight_box_mass(spec, s))
    };
    Ok(grid_part + tail_part)
}
