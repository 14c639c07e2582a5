//! Regularization of inf-sup equations: each scale eps produces a smooth
//! approximate solution together with a smoothed finite inf-sup operator
//! that it solves up to a controlled defect.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    sup_distance, weighted_l1_norm, GridFunction, GridSpec, Modulus, Region, Tail,
};
use crate::kernels::Kernel;
use crate::mollify::{mollify_function, mollify_kernel};
use crate::operators::{entry_values, isaacs_eval, min_max_scan, IsaacsSpec, Zeroth};
use crate::solver::{solve_dirichlet, SolveConfig};

/// Tail of c - f outside the grid box, for a zeroth term c with a closed
/// form and a right-hand side f with a representable tail.
fn fold_tail(c: &Zeroth, f: &GridFunction) -> Result<Tail> {
    use std::f64::consts::FRAC_PI_2;
    match c {
        Zeroth::Constant { value } => match f.tail {
            Tail::Zero => Ok(Tail::Constant { value: *value }),
            Tail::Constant { value: w } => Ok(Tail::Constant { value: value - w }),
            Tail::Cosine { amplitude, frequency, phase, offset } => Ok(Tail::Cosine {
                amplitude: -amplitude,
                frequency,
                phase,
                offset: value - offset,
            }),
        },
        Zeroth::Sinusoid { amplitude, frequency, phase, offset } => match f.tail.as_constant() {
            // sin(w x + p) = cos(w x + p - pi/2).
            Some(w) => Ok(Tail::Cosine {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: phase - FRAC_PI_2,
                offset: offset - w,
            }),
            None => Err(Error::UnsupportedTail(
                "cannot fold an oscillating right-hand-side tail into an oscillating zeroth term"
                    .into(),
            )),
        },
        Zeroth::Grid { f: g } => {
            if g.tail == f.tail {
                Ok(Tail::Zero)
            } else {
                match (g.tail.as_constant(), f.tail.as_constant()) {
                    (Some(p), Some(q)) => Ok(Tail::Constant { value: p - q }),
                    _ => Err(Error::UnsupportedTail(
                        "zeroth-term and right-hand-side tails do not combine to a representable tail"
                            .into(),
                    )),
                }
            }
        }
    }
}

/// Largest first-difference quotient over grid neighbors along each axis:
/// a Lipschitz bound for the sampled function.
fn grid_lipschitz(f: &GridFunction) -> f64 {
    let spec = &f.spec;
    let mut lip = 0.0f64;
    for idx in 0..spec.node_count() {
        let mi = spec.multi_index(idx);
        for k in 0..spec.n {
            let mut nb = mi;
            nb[k] += 1;
            if spec.in_box(&nb[..spec.n]) {
                let d = (f.values[spec.storage_index(&nb[..spec.n])] - f.values[idx]).abs();
                lip = lip.max(d / spec.h);
            }
        }
    }
    lip
}

/// Sum of two moduli: exact for linear pairs, otherwise a concave envelope
/// sampled on a dense geometric grid so the interpolation defect stays
/// well below a percent.
fn modulus_add(a: &Modulus, b: &Modulus) -> Modulus {
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    if let (Modulus::Linear { slope: p }, Modulus::Linear { slope: q }) = (a, b) {
        return Modulus::Linear { slope: p + q };
    }
    let t_max = 8.0f64;
    let mut knots = vec![(0.0, 0.0)];
    for k in (0..=112).rev() {
        let t = t_max * 2.0f64.powf(-(k as f64) / 4.0);
        knots.push((t, a.eval(t) + b.eval(t)));
    }
    Modulus::Envelope { knots }
}

/// Folds the right-hand side into the zeroth-order terms, producing
/// J(u, x) = I(u, x) - f(x): solving J = 0 is equivalent to I = f, and
/// mollifying J mollifies f along with the zeroth terms.
pub fn fold_rhs(spec: &IsaacsSpec, f: &GridFunction) -> Result<IsaacsSpec> {
    spec.validate()?;
    f.spec.validate()?;
    if f.spec.n != spec.params().n {
        return Err(Error::IncompatibleGrid(format!(
            "right-hand side dimension {} does not match the operator dimension {}",
            f.spec.n,
            spec.params().n
        )));
    }
    let mut zeroth = Vec::with_capacity(spec.b_count());
    for row in &spec.zeroth {
        let mut out = Vec::with_capacity(row.len());
        for c in row {
            if let Zeroth::Grid { f: g } = c {
                if g.spec != f.spec {
                    return Err(Error::IncompatibleGrid(
                        "zeroth-term grid does not match the right-hand-side grid".into(),
                    ));
                }
            }
            let tail = fold_tail(c, f)?;
            let mut values = Vec::with_capacity(f.spec.node_count());
            for idx in 0..f.spec.node_count() {
                let x = f.spec.node_coords(idx);
                values.push(c.eval(&x[..f.spec.n]) - f.values[idx]);
            }
            out.push(Zeroth::Grid { f: GridFunction::new(f.spec, values, tail)? });
        }
        zeroth.push(out);
    }
    let omega = modulus_add(&spec.omega, &Modulus::Linear { slope: grid_lipschitz(f) });
    IsaacsSpec::new(spec.kernels.clone(), zeroth, omega, spec.quad)
}

/// Mollifies every kernel and zeroth term at scale eps. The result keeps
/// the ellipticity class, implants the exact power kernel near the origin
/// of every kernel, and never worsens the zeroth-term modulus.
pub fn build_ihat(spec: &IsaacsSpec, eps: f64) -> Result<IsaacsSpec> {
    spec.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("mollification scale must be positive, got {eps}")));
    }
    let n = spec.params().n;
    let mut kernels = Vec::with_capacity(spec.b_count());
    let mut zeroth = Vec::with_capacity(spec.b_count());
    for (krow, crow) in spec.kernels.iter().zip(spec.zeroth.iter()) {
        let mut kout = Vec::with_capacity(krow.len());
        let mut cout = Vec::with_capacity(crow.len());
        for k in krow {
            kout.push(mollify_kernel(k, eps)?);
        }
        for c in crow {
            cout.push(c.mollified(n, eps)?);
        }
        kernels.push(kout);
        zeroth.push(cout);
    }
    IsaacsSpec::new(kernels, zeroth, spec.omega.clone(), spec.quad)
}

/// Replaces a viscosity solution by a smooth one: solves the mollified
/// folded equation J_eps(w) = 0 on B_{3/4} with the mollified solution as
/// exterior data. By the comparison principle the result stays within the
/// exterior-data defect of the input solution.
pub fn approximate_by_strong(
    spec: &IsaacsSpec,
    u: &GridFunction,
    f: &GridFunction,
    eps: f64,
    cfg: &SolveConfig,
) -> Result<GridFunction> {
    let ihat = build_ihat(&fold_rhs(spec, f)?, eps)?;
    let g = mollify_function(u, eps, 1.0 / eps)?;
    let region = Region::ball(u.spec.n, 0.75);
    let zero_rhs = GridFunction::zero(u.spec);
    Ok(solve_dirichlet(&ihat, &zero_rhs, &g, &region, cfg)?.u)
}

/// Largest covering radius zeta with omega_circ(zeta) <= eps / 4.
pub fn covering_radius(eps: f64, omega_circ: &Modulus) -> f64 {
    omega_circ.inverse_sup(eps / 4.0)
}

/// Empirical equicontinuity modulus of the centered family value maps
/// x -> -L_ab v(x) + c_ab(x) minus their per-point family mean, over all
/// entries and probe functions on the region: pairwise gaps binned by
/// distance, cumulative max, least concave majorant, then a safety factor
/// of two. Centering is sound for sizing the extraction net: drift common
/// to every entry moves the min-max and all selections together, so only
/// the centered variation can destabilize them, and a single-entry family
/// correctly yields the zero modulus. The result bounds every sampled
/// centered pair gap by construction.
pub fn empirical_value_modulus(
    spec: &IsaacsSpec,
    probes: &[&GridFunction],
    region: &Region,
) -> Result<Modulus> {
    spec.validate()?;
    let first = probes
        .first()
        .ok_or_else(|| Error::Config("at least one probe function is required".into()))?;
    let gspec = first.spec;
    for p in probes {
        if p.spec != gspec {
            return Err(Error::IncompatibleGrid("probe functions live on different grids".into()));
        }
    }
    let nodes = region.nodes_in(&gspec);
    if nodes.len() < 2 {
        return Err(Error::EmptyRegion(format!(
            "need at least two region nodes to estimate a modulus, got {}",
            nodes.len()
        )));
    }
    let h = gspec.h;
    let coords: Vec<[f64; 2]> = nodes.iter().map(|&idx| gspec.node_coords(idx)).collect();
    // Value samples: one row per probe and family entry, one column per node.
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for p in probes {
        let mut per_entry: Vec<Vec<f64>> =
            vec![Vec::with_capacity(nodes.len()); spec.b_count() * spec.a_count()];
        for &idx in &nodes {
            let mi = gspec.multi_index(idx);
            let table = entry_values(spec, p, &mi[..gspec.n])?;
            for (bi, row) in table.iter().enumerate() {
                for (ai, &v) in row.iter().enumerate() {
                    per_entry[bi * spec.a_count() + ai].push(v);
                }
            }
        }
        // Center per node within this probe block: subtracting the family
        // mean removes drift shared by every entry, which cannot move any
        // selection relative to another.
        let entries = per_entry.len() as f64;
        for col in 0..nodes.len() {
            let mean = per_entry.iter().map(|row| row[col]).sum::<f64>() / entries;
            for row in per_entry.iter_mut() {
                row[col] -= mean;
            }
        }
        samples.extend(per_entry);
    }
    // Staircase: bin each pair gap at floor(distance / h) * h, a distance
    // at or below the true one, so the staircase majorizes sampled gaps.
    let count = nodes.len();
    let mut bins: Vec<f64> = vec![0.0; 2];
    for i in 0..count {
        for j in (i + 1)..count {
            let mut d2 = 0.0;
            for (ci, cj) in coords[i].iter().zip(&coords[j]).take(gspec.n) {
                let d = ci - cj;
                d2 += d * d;
            }
            let kbin = ((d2.sqrt() / h + 1e-9).floor() as usize).max(1);
            let mut gap = 0.0f64;
            for row in &samples {
                gap = gap.max((row[i] - row[j]).abs());
            }
            if kbin >= bins.len() {
                bins.resize(kbin + 1, 0.0);
            }
            if gap > bins[kbin] {
                bins[kbin] = gap;
            }
        }
    }
    let mut acc = 0.0f64;
    let mut stairs: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for (k, g) in bins.iter().enumerate().skip(1) {
        acc = acc.max(*g);
        stairs.push((k as f64 * h, acc));
    }
    // Least concave majorant: upper hull with nonincreasing slopes.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &stairs {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let s_ab = (b.1 - a.1) / (b.0 - a.0);
            let s_bp = (p.1 - b.1) / (p.0 - b.0);
            if s_bp > s_ab - 1e-15 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let knots: Vec<(f64, f64)> = hull.into_iter().map(|(t, v)| (t, 2.0 * v)).collect();
    let m = Modulus::Envelope { knots };
    m.validate()?;
    Ok(m)
}

/// Chooses grid nodes forming a net over the region whose covering radius
/// zeta satisfies omega_circ(zeta) <= eps / 4, so family values move by at
/// most eps / 4 between any region point and its nearest net point.
pub fn select_grid_points(
    eps: f64,
    region: &Region,
    spec: &GridSpec,
    omega_circ: &Modulus,
) -> Result<Vec<Vec<i64>>> {
    spec.validate()?;
    omega_circ.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {eps}")));
    }
    if region.n != spec.n {
        return Err(Error::IncompatibleGrid(format!(
            "region dimension {} does not match grid dimension {}",
            region.n, spec.n
        )));
    }
    let zeta = covering_radius(eps, omega_circ);
    let h = spec.h;
    let n = spec.n;
    let diam2: f64 = (0..n).map(|k| (region.hi[k] - region.lo[k]).powi(2)).sum();
    if zeta.is_infinite() || zeta >= diam2.sqrt() {
        // One point covers the region: the node nearest its center.
        let mut center = Vec::with_capacity(n);
        for k in 0..n {
            center.push((0.5 * (region.lo[k] + region.hi[k]) / h).round() as i64);
        }
        return Ok(vec![center]);
    }
    if zeta < h {
        return Err(Error::Resolution(format!(
            "covering radius {zeta:.6e} is below the grid spacing {h:.6e}; refine the grid until h <= zeta"
        )));
    }
    // Per-axis stride 2 zeta / sqrt(n) keeps the Euclidean covering radius
    // of the product net at zeta.
    let stride = ((2.0 * zeta / (n as f64).sqrt() / h).floor() as i64).max(1);
    let mut axes: Vec<Vec<i64>> = Vec::with_capacity(n);
    for k in 0..n {
        let lo = (region.lo[k] / h - 1e-9).ceil() as i64;
        let hi = (region.hi[k] / h + 1e-9).floor() as i64;
        let mut ms = Vec::new();
        let mut m = lo;
        while m < hi {
            ms.push(m);
            m += stride;
        }
        ms.push(hi);
        axes.push(ms);
    }
    let mut points = Vec::new();
    if n == 1 {
        for &m in &axes[0] {
            points.push(vec![m]);
        }
    } else {
        for &m1 in &axes[0] {
            for &m2 in &axes[1] {
                let x = [m1 as f64 * h, m2 as f64 * h];
                if region.contains(&x, 0.5 * h) {
                    points.push(vec![m1, m2]);
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyRegion(format!("no net points found in region {region:?}")));
    }
    Ok(points)
}

/// Finite inf-sup family indexing into a mollified source operator: entry
/// (i, j) uses source kernel rows[i] and column cols[i][j], so the family
/// is the source restricted to the extracted selections and evaluating it
/// costs one pass over the distinct source entries.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteInfSup {
    pub source: IsaacsSpec,
    /// Source inf-index backing each extracted row.
    pub rows: Vec<usize>,
    /// Source sup-index backing each entry, indexed [row][column].
    pub cols: Vec<Vec<usize>>,
    /// Scale the extraction was certified at.
    pub epsilon: f64,
}

impl FiniteInfSup {
    /// Number of rows, which equals the number of columns.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// Source (a, b) indices behind entry (i, j).
    pub fn provenance(&self, i: usize, j: usize) -> (usize, usize) {
        (self.cols[i][j], self.rows[i])
    }

    pub fn kernel(&self, i: usize, j: usize) -> &Kernel {
        &self.source.kernels[self.rows[i]][self.cols[i][j]]
    }

    pub fn zeroth(&self, i: usize, j: usize) -> &Zeroth {
        &self.source.zeroth[self.rows[i]][self.cols[i][j]]
    }

    /// Entry value matrix at a node: each distinct source entry is
    /// evaluated once and fanned out by provenance.
    pub fn entry_matrix(&self, u: &GridFunction, x: &[i64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.entry_matrix_from(&entry_values(&self.source, u, x)?))
    }

    fn entry_matrix_from(&self, table: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .zip(&self.cols)
            .map(|(&b, crow)| crow.iter().map(|&a| table[b][a]).collect())
            .collect()
    }

    /// Exact min-max value at a node.
    pub fn eval_exact(&self, u: &GridFunction, x: &[i64]) -> Result<f64> {
        eval_f(&self.entry_matrix(u, x)?)
    }

    /// True when every row makes the same selections, so the min collapses
    /// and the family is a pure sup.
    pub fn sup_only(&self) -> bool {
        self.rows.windows(2).all(|w| w[0] == w[1])
            && self.cols.windows(2).all(|w| w[0] == w[1])
    }

    /// True when every referenced kernel is translation invariant and
    /// every referenced zeroth term is constant in x.
    pub fn translation_invariant(&self) -> bool {
        self.rows.iter().zip(&self.cols).all(|(&b, crow)| {
            crow.iter().all(|&a| {
                self.source.kernels[b][a].translation_invariant()
                    && zeroth_constant(&self.source.zeroth[b][a])
            })
        })
    }
}

fn zeroth_constant(z: &Zeroth) -> bool {
    match z {
        Zeroth::Constant { .. } => true,
        Zeroth::Sinusoid { amplitude, .. } => *amplitude == 0.0,
        Zeroth::Grid { f } => {
            let c = f.values.first().copied().unwrap_or(0.0);
            f.values.iter().all(|&v| v == c) && f.tail.as_constant() == Some(c)
        }
    }
}

/// Doubled finite extraction at the net points: rows are the inf-attaining
/// source rows at each point for the probe and for zero, columns the
/// sup-attaining source columns within each extracted row at each point,
/// again for both. The extraction is certified against the full operator
/// on every B_{3/4} node before it is returned.
pub fn finite_infsup_reduce(
    ihat: &IsaacsSpec,
    u_eps: &GridFunction,
    points: &[Vec<i64>],
    eps: f64,
) -> Result<FiniteInfSup> {
    ihat.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyFamily("no net points to extract a finite family from".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {eps}")));
    }
    let zero = GridFunction::zero(u_eps.spec);
    let tables_u: Vec<Vec<Vec<f64>>> =
        points.iter().map(|y| entry_values(ihat, u_eps, y)).collect::<Result<_>>()?;
    let tables_0: Vec<Vec<Vec<f64>>> =
        points.iter().map(|y| entry_values(ihat, &zero, y)).collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(2 * points.len());
    for table in tables_u.iter().chain(tables_0.iter()) {
        rows.push(min_max_scan(table).1 .1);
    }
    let argmax_in_row = |table: &Vec<Vec<f64>>, b: usize| -> usize {
        let row = &table[b];
        let mut best = 0;
        for (ai, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = ai;
            }
        }
        best
    };
    let mut cols = Vec::with_capacity(rows.len());
    for &b in &rows {
        let mut crow = Vec::with_capacity(rows.len());
        for table in tables_u.iter().chain(tables_0.iter()) {
            crow.push(argmax_in_row(table, b));
        }
        cols.push(crow);
    }
    let fis = FiniteInfSup { source: ihat.clone(), rows, cols, epsilon: eps };

    // Certify |min-max over the finite family - full operator| <= eps at
    // every region node, for the probe and for zero.
    let region = Region::ball(u_eps.spec.n, 0.75);
    let slack = eps * (1.0 + 1e-9) + 1e-12;
    let mut worst: Option<(f64, Vec<i64>, &str)> = None;
    for &idx in &region.nodes_in(&u_eps.spec) {
        let mi = u_eps.spec.multi_index(idx);
        let x = &mi[..u_eps.spec.n];
        for (probe, name) in [(u_eps, "solution"), (&zero, "zero")] {
            let table = entry_values(ihat, probe, x)?;
            let exact = min_max_scan(&table).0;
            let finite = eval_f(&fis.entry_matrix_from(&table))?;
            let gap = (exact - finite).abs();
            if gap > slack && worst.as_ref().is_none_or(|(g, _, _)| gap > *g) {
                worst = Some((gap, x.to_vec(), name));
            }
        }
    }
    if let Some((gap, node, name)) = worst {
        return Err(Error::Reduction(format!(
            "finite family misses the operator by {gap:.3e} > eps = {eps:.3e} at node {node:?} \
             (probe: {name}); enlarge the net or the scale"
        )));
    }
    Ok(fis)
}

/// Exact min over rows of the max over row entries.
pub fn eval_f(matrix: &[Vec<f64>]) -> Result<f64> {
    if matrix.is_empty() || matrix.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyFamily("min-max of an empty value matrix".into()));
    }
    Ok(matrix
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min))
}

/// Smoothed min-max at temperature tau: a softmin over rows of softmaxes
/// over row entries, computed with shifted exponentials so it cannot
/// overflow. Returns the value together with the chain-rule weight matrix,
/// which lies exactly on the probability simplex; the value differs from
/// eval_f by at most 2 tau ln(max dimension), and a 1 x 1 matrix is exact.
pub fn eval_f_smooth(tau: f64, matrix: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!(
            "smoothing temperature must be positive and finite, got {tau}"
        )));
    }
    if matrix.is_empty() || matrix.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyFamily("smoothed min-max of an empty value matrix".into()));
    }
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Config(format!("matrix entry ({i}, {j}) is not finite: {v}")));
            }
        }
    }
    let mut row_vals = Vec::with_capacity(matrix.len());
    let mut row_weights = Vec::with_capacity(matrix.len());
    for row in matrix {
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expd: Vec<f64> = row.iter().map(|&v| ((v - top) / tau).exp()).collect();
        let z: f64 = expd.iter().sum();
        row_vals.push(top + tau * z.ln());
        row_weights.push(expd.into_iter().map(|e| e / z).collect::<Vec<f64>>());
    }
    let bot = row_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let expd: Vec<f64> = row_vals.iter().map(|&m| (-(m - bot) / tau).exp()).collect();
    let q: f64 = expd.iter().sum();
    let value = bot - tau * q.ln();
    let weights = expd
        .iter()
        .zip(row_weights)
        .map(|(&e, wrow)| wrow.into_iter().map(|w| w * e / q).collect::<Vec<f64>>())
        .collect();
    Ok((value, weights))
}

/// Finite family together with its smoothing temperature.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothInfSup {
    pub base: FiniteInfSup,
    /// Log-sum-exp temperature eps / (2 ln N), which turns the smoothing
    /// defect bound 2 tau ln N into exactly eps.
    pub tau: f64,
}

impl SmoothInfSup {
    /// Smoothed operator value and its chain-rule weight matrix at a node.
    pub fn eval(&self, u: &GridFunction, x: &[i64]) -> Result<(f64, Vec<Vec<f64>>)> {
        eval_f_smooth(self.tau, &self.base.entry_matrix(u, x)?)
    }
}

/// Wraps a finite family in its smoothed evaluation at eps / (2 ln N);
/// a single-entry family gets tau = eps, where the smoothing is exact
/// anyway.
pub fn smooth_operator(base: FiniteInfSup, eps: f64) -> Result<SmoothInfSup> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {eps}")));
    }
    let n = base.size();
    if n == 0 || base.cols.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyFamily("cannot smooth an empty finite family".into()));
    }
    let tau = if n > 1 { eps / (2.0 * (n as f64).ln()) } else { eps };
    Ok(SmoothInfSup { base, tau })
}

/// Diagnostics of one regularization step, all measured on B_{3/4} nodes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepDiagnostics {
    /// sup |u_eps - u|.
    pub sup_error: f64,
    /// Weighted L1 distance between u_eps and u.
    pub weighted_l1_error: f64,
    /// sup |I_eps(u_eps, x) - f_eps(x)|: the defect of the smooth pair.
    pub operator_residual: f64,
    /// sup |I_eps(0, x) - I(0, x)|: operator drift at the zero function.
    pub zeroth_gap: f64,
}

/// One scale of the regularization: a smooth approximate solution, the
/// mollified right-hand side, and the smoothed finite operator for the
/// folded equation, so I_eps(v, x) = op(v, x) + f_eps(x).
#[derive(Debug, Clone, Serialize)]
pub struct RegularizationStep {
    pub epsilon: f64,
    pub u_eps: GridFunction,
    pub f_eps: GridFunction,
    /// Smoothed finite family for the folded operator J = I - f; add
    /// f_eps back to evaluate I_eps.
    pub op: SmoothInfSup,
    pub diagnostics: StepDiagnostics,
}

impl RegularizationStep {
    /// Value of I_eps at a node: the smoothed folded operator plus the
    /// mollified right-hand side.
    pub fn operator_value(&self, v: &GridFunction, x: &[i64]) -> Result<f64> {
        Ok(self.op.eval(v, x)?.0 + self.f_eps.value_at(x))
    }
}

/// Node-wise difference a - b with a representable combined tail.
pub(crate) fn grid_difference(a: &GridFunction, b: &GridFunction) -> Result<GridFunction> {
    if a.spec != b.spec {
        return Err(Error::IncompatibleGrid(
            "cannot subtract functions on different grids".into(),
        ));
    }
    let tail = if a.tail == b.tail {
        Tail::Zero
    } else {
        match (a.tail.as_constant(), b.tail.as_constant()) {
            (Some(p), Some(q)) => Tail::Constant { value: p - q },
            _ => {
                return Err(Error::UnsupportedTail(
                    "difference of unequal non-constant tails is not representable".into(),
                ))
            }
        }
    };
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    GridFunction::new(a.spec, values, tail)
}

/// Runs the regularization schedule: for each scale, a smooth approximate
/// solution via the mollified Dirichlet solve, a net extraction sized by
/// the empirical value modulus, and a smoothed finite operator. Returns
/// one step per scale with diagnostics measured on B_{3/4}.
pub fn pipeline(
    spec: &IsaacsSpec,
    u: &GridFunction,
    f: &GridFunction,
    epsilons: &[f64],
    cfg: &SolveConfig,
) -> Result<Vec<RegularizationStep>> {
    spec.validate()?;
    if epsilons.is_empty() {
        return Err(Error::Config("the scale schedule is empty".into()));
    }
    if !(epsilons[epsilons.len() - 1] > 0.0) {
        return Err(Error::Config("scales must be positive".into()));
    }
    for w in epsilons.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config(format!(
                "scales must strictly decrease, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if u.spec != f.spec {
        return Err(Error::IncompatibleGrid("solution and right-hand side grids differ".into()));
    }
    let n = u.spec.n;
    let region = Region::ball(n, 0.75);
    let zero = GridFunction::zero(u.spec);
    let folded = fold_rhs(spec, f)?;
    let s = spec.params().s;
    let mut steps = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let ihat = build_ihat(&folded, eps)?;
        let g = mollify_function(u, eps, 1.0 / eps)?;
        let u_hat = solve_dirichlet(&ihat, &zero, &g, &region, cfg)?.u;
        let u_eps = mollify_function(&u_hat, eps, 1.0 / eps)?;
        let f_eps = mollify_function(f, eps, 1.0 / eps)?;
        let omega_circ = empirical_value_modulus(&ihat, &[&u_eps, &zero], &region)?;
        let points = select_grid_points(eps, &region, &u.spec, &omega_circ)?;
        let fis = finite_infsup_reduce(&ihat, &u_eps, &points, eps)?;
        let op = smooth_operator(fis, eps)?;

        let diff = grid_difference(&u_eps, u)?;
        let sup_error = sup_distance(&u_eps, u, &region)?;
        let weighted_l1_error = weighted_l1_norm(&diff, s)?;
        let mut operator_residual = 0.0f64;
        let mut zeroth_gap = 0.0f64;
        for &idx in &region.nodes_in(&u.spec) {
            let mi = u.spec.multi_index(idx);
            let x = &mi[..n];
            operator_residual = operator_residual.max(op.eval(&u_eps, x)?.0.abs());
            let at_zero = op.eval(&zero, x)?.0 + f_eps.value_at(x);
            let original = isaacs_eval(spec, &zero, x)?.0;
            zeroth_gap = zeroth_gap.max((at_zero - original).abs());
        }
        steps.push(RegularizationStep {
            epsilon: eps,
            u_eps,
            f_eps,
            op,
            diagnostics: StepDiagnostics {
                sup_error,
                weighted_l1_error,
                operator_residual,
                zeroth_gap,
            },
        });
    }
    Ok(steps)
}
