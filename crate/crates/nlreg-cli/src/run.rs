//! Stage runners: load the inputs, run the library stage, and write the
//! artifacts under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use nlreg::grid::{GridFunction, Region};
use nlreg::io;
use nlreg::operators::{eval_linear, isaacs_eval, IsaacsSpec, LinearOperatorSpec, QuadConfig};
use nlreg::regularize::{pipeline, RegularizationStep};
use nlreg::solver::{solve_dirichlet, SolveConfig, SolveResult};
use nlreg::verify::{distributional_residual, weak_convergence_gap};

use crate::manifest::{
    read_family, read_grid, read_kernel, required, stage_err, CheckKind, CliError, Command,
    Manifest, Params, Result,
};
use crate::Cli;

struct Ctx {
    out: PathBuf,
    seed: Option<u64>,
    verbosity: u8,
}

impl Ctx {
    fn say(&self, msg: &str) {
        if self.verbosity >= 1 {
            eprintln!("{msg}");
        }
    }

    fn detail(&self, msg: &str) {
        if self.verbosity >= 2 {
            eprintln!("{msg}");
        }
    }

    fn write(&self, name: &str, body: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, body).map_err(|e| CliError::Stage {
            stage: "output",
            eps: None,
            message: format!("{}: {e}", path.display()),
        })
    }

    fn write_grid(&self, name: &str, f: &GridFunction) -> Result<()> {
        io::write_grid_function(&self.out.join(name), f).map_err(stage_err("output", None))
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    io::to_json(value).map_err(stage_err("output", None))
}

/// Runs the manifest named on the command line and writes its artifacts.
pub fn run(cli: &Cli) -> Result<()> {
    let m = Manifest::load(&cli.manifest, cli.command)?;
    let out = cli.output_dir.clone().or_else(|| m.output_dir.clone()).ok_or_else(|| {
        CliError::Parse(
            "no output directory: set output_dir in the manifest or pass --output-dir".into(),
        )
    })?;
    fs::create_dir_all(&out).map_err(|e| CliError::Stage {
        stage: "output",
        eps: None,
        message: format!("{}: {e}", out.display()),
    })?;
    let ctx = Ctx { out, seed: cli.seed.or(m.seed), verbosity: cli.verbosity };
    match m.command {
        Command::Eval => eval(&m, &ctx),
        Command::Solve => solve(&m, &ctx).map(|_| ()),
        Command::Regularize => regularize(&m, &ctx),
        Command::Verify => verify(&m, &ctx),
    }
}

fn solve_config(p: &Params) -> SolveConfig {
    let mut cfg = SolveConfig::default();
    if let Some(method) = p.method {
        cfg.method = method;
    }
    if let Some(tol) = p.tolerance {
        cfg.tol = tol;
    }
    if let Some(max_iters) = p.max_iters {
        cfg.max_iters = max_iters;
    }
    cfg
}

enum Operator {
    Linear(LinearOperatorSpec),
    InfSup(IsaacsSpec),
}

/// Evaluates the operator at the requested nodes (default: every node of
/// the region) and writes eval.csv plus an eval.json summary. The sweep is
/// a parallel map over nodes; results keep node order, so the CSV body is
/// identical for any worker count.
fn eval(m: &Manifest, ctx: &Ctx) -> Result<()> {
    let start = Instant::now();
    let u = read_grid(required("u", &m.problem.u)?)?;
    let op = match (&m.problem.kernel, &m.problem.family) {
        (Some(k), None) => Operator::Linear(
            LinearOperatorSpec::new(read_kernel(k)?, QuadConfig::default())
                .map_err(|e| CliError::Parse(e.to_string()))?,
        ),
        (None, Some(f)) => Operator::InfSup(read_family(f)?),
        _ => {
            return Err(CliError::Parse(
                "eval needs exactly one of problem.kernel or problem.family".into(),
            ))
        }
    };
    let n = u.spec.n;
    let points: Vec<Vec<i64>> = match &m.params.points {
        Some(ps) => {
            for p in ps {
                if p.len() != n {
                    return Err(CliError::Parse(format!(
                        "params.points entries need {n} coordinates, got {p:?}"
                    )));
                }
            }
            ps.clone()
        }
        None => {
            let region = match m.params.region {
                Some(r) => r.region(),
                None => Region::ball(n, u.spec.r_dom),
            };
            region.nodes_in(&u.spec).iter().map(|&idx| u.spec.multi_index(idx)[..n].to_vec()).collect()
        }
    };
    let values: Vec<(f64, Option<(usize, usize)>)> = points
        .par_iter()
        .map(|x| match &op {
            Operator::Linear(spec) => eval_linear(spec, &u, x).map(|v| (v, None)),
            Operator::InfSup(spec) => isaacs_eval(spec, &u, x).map(|(v, ab)| (v, Some(ab))),
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(stage_err("eval", None))?;

    let linear = matches!(op, Operator::Linear(_));
    let mut csv = String::from(match (n, linear) {
        (1, true) => "x,value\n",
        (1, false) => "x,value,a,b\n",
        (_, true) => "x,y,value\n",
        (_, false) => "x,y,value,a,b\n",
    });
    for (p, (v, ab)) in points.iter().zip(&values) {
        for &pk in p.iter() {
            let _ = write!(csv, "{},", pk as f64 * u.spec.h);
        }
        let _ = write!(csv, "{v}");
        if let Some((a, b)) = ab {
            let _ = write!(csv, ",{a},{b}");
        }
        csv.push('\n');
    }
    ctx.write("eval.csv", &csv)?;
    let sup = values.iter().fold(0.0f64, |acc, (v, _)| acc.max(v.abs()));
    let summary = json!({
        "command": "eval",
        "operator": if linear { "linear" } else { "inf-sup" },
        "points": points.len(),
        "sup_abs": sup,
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    ctx.write("eval.json", &to_json(&summary)?)?;
    ctx.say(&format!("eval: {} points, sup |value| = {sup:.6e}", points.len()));
    Ok(())
}

/// Solves the Dirichlet problem and writes solution.csv (with its sidecar)
/// plus a solve.json summary carrying the residual history.
fn solve(m: &Manifest, ctx: &Ctx) -> Result<SolveResult> {
    let start = Instant::now();
    let family = read_family(required("family", &m.problem.family)?)?;
    let f = read_grid(required("f", &m.problem.f)?)?;
    let g = read_grid(required("g", &m.problem.g)?)?;
    let region = m
        .params
        .region
        .ok_or_else(|| CliError::Parse("params.region is required for solve".into()))?
        .region();
    let cfg = solve_config(&m.params);
    let result =
        solve_dirichlet(&family, &f, &g, &region, &cfg).map_err(stage_err("solve", None))?;
    ctx.write_grid("solution.csv", &result.u)?;
    let summary = json!({
        "command": "solve",
        "residual": result.residual,
        "iterations": result.iterations,
        "time_step": result.time_step,
        "kappa": result.kappa,
        "region": result.region,
        "residual_history": result.residual_history,
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    ctx.write("solve.json", &to_json(&summary)?)?;
    ctx.say(&format!(
        "solve: residual {:.3e} after {} sweeps",
        result.residual, result.iterations
    ));
    Ok(result)
}

/// Runs the regularization schedule one scale at a time (so a failure names
/// its eps), then writes per-step grid functions, operator descriptions,
/// the diagnostics table, and tidy plot data.
fn regularize(m: &Manifest, ctx: &Ctx) -> Result<()> {
    let start = Instant::now();
    let family = read_family(required("family", &m.problem.family)?)?;
    let f = read_grid(required("f", &m.problem.f)?)?;
    let epsilons = m
        .params
        .epsilons
        .clone()
        .ok_or_else(|| CliError::Parse("params.epsilons is required for regularize".into()))?;
    let u = match &m.problem.u {
        Some(path) => read_grid(path)?,
        // No precomputed solution given: run the Dirichlet solve first,
        // which needs problem.g and params.region.
        None => solve(m, ctx)?.u,
    };
    let cfg = solve_config(&m.params);
    let mut steps: Vec<RegularizationStep> = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        ctx.detail(&format!("regularize: starting eps = {eps}"));
        let step =
            pipeline(&family, &u, &f, &[eps], &cfg).map_err(stage_err("regularize", Some(eps)))?;
        steps.extend(step);
    }
    let mut files = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let u_name = format!("u_eps_{i}.csv");
        let f_name = format!("f_eps_{i}.csv");
        let op_name = format!("operator_{i}.json");
        ctx.write_grid(&u_name, &step.u_eps)?;
        ctx.write_grid(&f_name, &step.f_eps)?;
        let op = json!({
            "epsilon": step.epsilon,
            "tau": step.op.tau,
            "size": step.op.base.size(),
            "rows": step.op.base.rows,
            "cols": step.op.base.cols,
            "sup_only": step.op.base.sup_only(),
            "translation_invariant": step.op.base.translation_invariant(),
        });
        ctx.write(&op_name, &to_json(&op)?)?;
        files.push(json!({
            "epsilon": step.epsilon,
            "u_eps": u_name,
            "f_eps": f_name,
            "operator": op_name,
        }));
    }
    ctx.write("diagnostics.csv", &io::step_diagnostics_csv(&steps))?;
    let rows: Vec<serde_json::Value> = steps
        .iter()
        .map(|s| {
            json!({
                "epsilon": s.epsilon,
                "sup_error": s.diagnostics.sup_error,
                "weighted_l1_error": s.diagnostics.weighted_l1_error,
                "operator_residual": s.diagnostics.operator_residual,
                "zeroth_gap": s.diagnostics.zeroth_gap,
            })
        })
        .collect();
    let plot =
        io::emit_plot_data(&[json!({ "rows": rows })]).map_err(stage_err("output", None))?;
    ctx.write("plot_data.csv", &plot)?;
    let summary = json!({
        "command": "regularize",
        "epsilons": epsilons,
        "steps": files,
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    ctx.write("regularize.json", &to_json(&summary)?)?;
    for step in &steps {
        ctx.say(&format!(
            "regularize: eps = {} sup_error = {:.4e} operator_residual = {:.4e}",
            step.epsilon, step.diagnostics.sup_error, step.diagnostics.operator_residual
        ));
    }
    Ok(())
}

/// Runs one verification check, writes report.json/report.csv (and plot
/// data where the report is scale-indexed), writes the PASS/FAIL verdict
/// file, and fails with status 3 when the gate does not hold.
fn verify(m: &Manifest, ctx: &Ctx) -> Result<()> {
    let start = Instant::now();
    let kind = m.params.kind.ok_or_else(|| {
        CliError::Parse(
            "params.kind is required for verify: weak-convergence or distributional".into(),
        )
    })?;
    let (report, csv, plot, pass, gate_msg) = match kind {
        CheckKind::WeakConvergence => weak_convergence_check(m)?,
        CheckKind::Distributional => distributional_check(m, ctx)?,
    };
    ctx.write("report.json", &to_json(&report)?)?;
    ctx.write("report.csv", &csv)?;
    if let Some(p) = plot {
        ctx.write("plot_data.csv", &p)?;
    }
    let verdict = if pass { "PASS" } else { "FAIL" };
    ctx.write("verdict.txt", &format!("{verdict}\n"))?;
    println!("{verdict}");
    ctx.say(&format!("verify: {gate_msg} ({:.2}s)", start.elapsed().as_secs_f64()));
    if pass {
        Ok(())
    } else {
        Err(CliError::Gate(gate_msg))
    }
}

type CheckOutput = (serde_json::Value, String, Option<String>, bool, String);

fn weak_convergence_check(m: &Manifest) -> Result<CheckOutput> {
    let family = read_family(required("family", &m.problem.family)?)?;
    let v = read_grid(required("u", &m.problem.u)?)?;
    let epsilons = m.params.epsilons.clone().ok_or_else(|| {
        CliError::Parse("params.epsilons is required for the weak-convergence check".into())
    })?;
    if epsilons.len() < 3 {
        return Err(CliError::Parse(format!(
            "the weak-convergence check needs at least 3 scales, got {}",
            epsilons.len()
        )));
    }
    let region = m
        .params
        .region
        .ok_or_else(|| {
            CliError::Parse("params.region is required for the weak-convergence check".into())
        })?
        .region();
    let report =
        weak_convergence_gap(&family, &epsilons, &v, &region).map_err(stage_err("verify", None))?;
    let mut csv = String::from("epsilon,gap\n");
    for (e, g) in report.epsilons.iter().zip(&report.gaps) {
        let _ = writeln!(csv, "{e},{g}");
    }
    let report_json = serde_json::to_value(&report).map_err(|e| CliError::Stage {
        stage: "output",
        eps: None,
        message: e.to_string(),
    })?;
    let plot = io::emit_plot_data(std::slice::from_ref(&report_json))
        .map_err(stage_err("output", None))?;
    let msg = format!(
        "fitted slope {:.4} vs reference {:.4}, single-constant cover {}",
        report.fitted_slope,
        report.reference_slope,
        if report.pass { "holds" } else { "fails" }
    );
    Ok((report_json, csv, Some(plot), report.pass, msg))
}

fn distributional_check(m: &Manifest, ctx: &Ctx) -> Result<CheckOutput> {
    let family = read_family(required("family", &m.problem.family)?)?;
    if family.b_count() != 1 || family.a_count() != 1 {
        return Err(CliError::Parse(format!(
            "the distributional check needs a 1x1 family whose single entry is the linear \
             operator, got {}x{}",
            family.b_count(),
            family.a_count()
        )));
    }
    let u = read_grid(required("u", &m.problem.u)?)?;
    let f = read_grid(required("f", &m.problem.f)?)?;
    let count = m.params.test_count.unwrap_or(20);
    let seed = ctx.seed.ok_or_else(|| {
        CliError::Parse(
            "the distributional check draws random test functions: set seed in the manifest \
             or pass --seed"
                .into(),
        )
    })?;
    let threshold = m.params.threshold.ok_or_else(|| {
        CliError::Parse("params.threshold is required for the distributional check".into())
    })?;
    let op = family.linear_spec(0, 0);
    let report =
        distributional_residual(&op, &u, &f, count, seed).map_err(stage_err("verify", None))?;
    let mut csv = String::from("seed,residual\n");
    for (s, r) in report.seeds.iter().zip(&report.residuals) {
        let _ = writeln!(csv, "{s},{r}");
    }
    let pass = report.max_residual <= threshold;
    let msg = format!(
        "max residual {:.6e} against threshold {:.6e}",
        report.max_residual, threshold
    );
    let report_json = serde_json::to_value(&report).map_err(|e| CliError::Stage {
        stage: "output",
        eps: None,
        message: e.to_string(),
    })?;
    Ok((report_json, csv, None, pass, msg))
}
