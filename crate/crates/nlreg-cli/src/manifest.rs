//! Declarative JSON manifests: the command, the input files, and the
//! command-specific parameters for one experiment run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use nlreg::grid::{GridFunction, Region};
use nlreg::io;
use nlreg::kernels::Kernel;
use nlreg::operators::IsaacsSpec;
use nlreg::solver::Method;

/// Error carrying the process exit status: 2 for invalid manifests or
/// inputs, 1 for failed compute stages, 3 for failed gated checks.
#[derive(Debug)]
pub enum CliError {
    /// The manifest or a referenced input failed to load, parse, or validate.
    Parse(String),
    /// A compute stage returned an error.
    Stage { stage: &'static str, eps: Option<f64>, message: String },
    /// A gated check ran to completion and failed.
    Gate(String),
}

impl CliError {
    pub fn status(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Stage { .. } => 1,
            CliError::Gate(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(msg) => write!(f, "parse error: {msg}"),
            CliError::Stage { stage, eps: Some(e), message } => {
                write!(f, "stage '{stage}' failed at eps = {e}: {message}")
            }
            CliError::Stage { stage, eps: None, message } => {
                write!(f, "stage '{stage}' failed: {message}")
            }
            CliError::Gate(msg) => write!(f, "gated check failed: {msg}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Wraps a library error from a named compute stage, keeping the scale at
/// which a schedule stage died.
pub fn stage_err(stage: &'static str, eps: Option<f64>) -> impl Fn(nlreg::Error) -> CliError {
    move |e| CliError::Stage { stage, eps, message: e.to_string() }
}

/// The four stages the tool can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Evaluate a linear or inf-sup operator at grid nodes.
    Eval,
    /// Solve the Dirichlet problem I(u) = f in a region with exterior data.
    Solve,
    /// Run the viscosity-to-smooth regularization schedule.
    Regularize,
    /// Run a verification check and write a PASS/FAIL verdict.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eval => "eval",
            Command::Solve => "solve",
            Command::Regularize => "regularize",
            Command::Verify => "verify",
        }
    }
}

/// Input files for the run; relative paths resolve against the manifest's
/// own directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem {
    /// Kernel specification for a linear operator (eval).
    pub kernel: Option<PathBuf>,
    /// Inf-sup family specification (eval, solve, regularize, verify).
    pub family: Option<PathBuf>,
    /// Grid function: the evaluation input, the pipeline's solution, or the
    /// verification probe.
    pub u: Option<PathBuf>,
    /// Right-hand side grid function.
    pub f: Option<PathBuf>,
    /// Exterior data grid function.
    pub g: Option<PathBuf>,
}

/// Region parameter: a sup-norm ball or an explicit box.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    /// `{"ball": {"n": 1, "radius": 0.75}}`
    Ball { ball: BallParams },
    /// `{"n": 1, "lo": [-0.75, 0.0], "hi": [0.75, 0.0]}`
    Box(Region),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallParams {
    pub n: usize,
    pub radius: f64,
}

impl RegionSpec {
    pub fn region(self) -> Region {
        match self {
            RegionSpec::Ball { ball } => Region::ball(ball.n, ball.radius),
            RegionSpec::Box(r) => r,
        }
    }
}

/// Verification checks runnable by the verify command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Gap between the exact and the scale-eps operators on a probe function,
    /// with a fitted convergence slope; gated on the report's pass flag.
    WeakConvergence,
    /// Residual of the linear equation against random smooth test functions;
    /// gated on the max residual staying under the threshold.
    Distributional,
}

/// Command-specific parameters.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Solve region or verification domain.
    pub region: Option<RegionSpec>,
    /// Mollification scale schedule, strictly decreasing.
    pub epsilons: Option<Vec<f64>>,
    /// Solver residual target.
    pub tolerance: Option<f64>,
    /// Solver sweep budget.
    pub max_iters: Option<usize>,
    /// Solver iteration scheme.
    pub method: Option<Method>,
    /// Multi-indices to evaluate at; defaults to every node of the region.
    pub points: Option<Vec<Vec<i64>>>,
    /// Which verification to run.
    pub kind: Option<CheckKind>,
    /// Number of random test functions for the distributional check.
    pub test_count: Option<usize>,
    /// Gate for the distributional check: largest residual allowed.
    pub threshold: Option<f64>,
}

/// One experiment: a command, its inputs, and its parameters.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: Command,
    #[serde(default)]
    pub problem: Problem,
    #[serde(default)]
    pub params: Params,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Manifest {
    /// Reads and validates a manifest; the declared command must match the
    /// invoked one, and problem paths become absolute relative to the
    /// manifest's directory.
    pub fn load(path: &Path, invoked: Command) -> Result<Manifest> {
        let body = fs::read_to_string(path).map_err(|e| {
            CliError::Parse(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let mut m: Manifest = serde_json::from_str(&body)
            .map_err(|e| CliError::Parse(format!("manifest {}: {e}", path.display())))?;
        if m.command != invoked {
            return Err(CliError::Parse(format!(
                "manifest {} declares command '{}' but '{}' was invoked",
                path.display(),
                m.command.name(),
                invoked.name()
            )));
        }
        m.validate_params()?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let problem = &mut m.problem;
        for p in [
            &mut problem.kernel,
            &mut problem.family,
            &mut problem.u,
            &mut problem.f,
            &mut problem.g,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        }
        Ok(m)
    }

    fn validate_params(&self) -> Result<()> {
        let p = &self.params;
        if let Some(t) = p.tolerance {
            if !(t > 0.0) {
                return Err(CliError::Parse(format!(
                    "params.tolerance must be positive, got {t}"
                )));
            }
        }
        if let Some(eps) = &p.epsilons {
            if eps.is_empty() {
                return Err(CliError::Parse("params.epsilons must be nonempty".into()));
            }
            if !(eps[eps.len() - 1] > 0.0) {
                return Err(CliError::Parse("params.epsilons must be positive".into()));
            }
            for w in eps.windows(2) {
                if !(w[1] < w[0]) {
                    return Err(CliError::Parse(format!(
                        "params.epsilons must strictly decrease, got {} then {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        if p.test_count == Some(0) {
            return Err(CliError::Parse("params.test_count must be at least 1".into()));
        }
        if p.max_iters == Some(0) {
            return Err(CliError::Parse("params.max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// The named problem file, required by the current command.
pub fn required<'a>(field: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| {
        CliError::Parse(format!("problem.{field} is required for this command"))
    })
}

fn must_exist(role: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Parse(format!("{role} {} does not exist", path.display())))
    }
}

/// Reads a kernel specification file.
pub fn read_kernel(path: &Path) -> Result<Kernel> {
    must_exist("kernel file", path)?;
    io::read_kernel(path)
        .map_err(|e| CliError::Parse(format!("kernel file {}: {e}", path.display())))
}

/// Reads and validates an inf-sup family specification file.
pub fn read_family(path: &Path) -> Result<IsaacsSpec> {
    must_exist("family file", path)?;
    let body = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("family file {}: {e}", path.display())))?;
    let spec: IsaacsSpec = serde_json::from_str(&body)
        .map_err(|e| CliError::Parse(format!("family file {}: {e}", path.display())))?;
    spec.validate()
        .map_err(|e| CliError::Parse(format!("family file {}: {e}", path.display())))?;
    Ok(spec)
}

/// Reads a grid function CSV together with its JSON sidecar.
pub fn read_grid(path: &Path) -> Result<GridFunction> {
    must_exist("grid function", path)?;
    io::read_grid_function(path)
        .map_err(|e| CliError::Parse(format!("grid function {}: {e}", path.display())))
}
