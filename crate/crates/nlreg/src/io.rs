//! File formats: grid functions as CSV with JSON sidecars, kernel
//! specification files, report tables, and long-format plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, Tail};
use crate::kernels::{EllipticityParams, Kernel, KernelForm};
use crate::regularize::RegularizationStep;

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// CSV body of a grid function: header `x,value` or `x,y,value`, one row
/// per node in lexicographic storage order. Deterministic byte-for-byte.
pub fn grid_function_csv(f: &GridFunction) -> String {
    let spec = f.spec;
    let mut out = String::new();
    out.push_str(if spec.n == 1 { "x,value\n" } else { "x,y,value\n" });
    for idx in 0..spec.node_count() {
        let x = spec.node_coords(idx);
        if spec.n == 1 {
            let _ = writeln!(out, "{},{}", x[0], f.values[idx]);
        } else {
            let _ = writeln!(out, "{},{},{}", x[0], x[1], f.values[idx]);
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct GridSidecar {
    spec: GridSpec,
    tail: Tail,
}

/// Path of the JSON sidecar describing a grid-function CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes a grid function as CSV plus a JSON sidecar holding the grid
/// parameters and the tail descriptor.
pub fn write_grid_function(path: &Path, f: &GridFunction) -> Result<()> {
    fs::write(path, grid_function_csv(f)).map_err(|e| io_context(path, e))?;
    let meta = sidecar_path(path);
    let body = serde_json::to_string_pretty(&GridSidecar { spec: f.spec, tail: f.tail })?;
    fs::write(&meta, body + "\n").map_err(|e| io_context(&meta, e))?;
    Ok(())
}

/// Reads a grid function written by `write_grid_function`, validating the
/// header, the node count, and every node coordinate against the sidecar.
pub fn read_grid_function(path: &Path) -> Result<GridFunction> {
    let meta = sidecar_path(path);
    let sidecar: GridSidecar =
        serde_json::from_str(&fs::read_to_string(&meta).map_err(|e| io_context(&meta, e))?)?;
    sidecar.spec.validate()?;
    let body = fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    let spec = sidecar.spec;
    let expected_header = if spec.n == 1 { "x,value" } else { "x,y,value" };
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == expected_header => {}
        Some((_, h)) => {
            return Err(Error::Parse(format!(
                "line 1, column 1: expected header {expected_header:?}, got {h:?}"
            )))
        }
        None => return Err(Error::Parse("line 1, column 1: empty file".into())),
    }
    let mut values = Vec::with_capacity(spec.node_count());
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != spec.n + 1 {
            return Err(Error::Parse(format!(
                "line {}, column 1: expected {} fields, got {}",
                lineno + 1,
                spec.n + 1,
                fields.len()
            )));
        }
        let idx = values.len();
        if idx >= spec.node_count() {
            return Err(Error::Parse(format!(
                "line {}, column 1: more rows than the {} grid nodes",
                lineno + 1,
                spec.node_count()
            )));
        }
        let coords = spec.node_coords(idx);
        let mut column = 1usize;
        for (k, field) in fields.iter().take(spec.n).enumerate() {
            let x: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!("line {}, column {column}: bad number {field:?}", lineno + 1))
            })?;
            if (x - coords[k]).abs() > 1e-9 * spec.h.max(1.0) {
                return Err(Error::Parse(format!(
                    "line {}, column {column}: coordinate {x} does not match node {} of the sidecar grid",
                    lineno + 1,
                    coords[k]
                )));
            }
            column += field.len() + 1;
        }
        let vf = fields[spec.n].trim();
        let v: f64 = vf.parse().map_err(|_| {
            Error::Parse(format!("line {}, column {column}: bad number {vf:?}", lineno + 1))
        })?;
        values.push(v);
    }
    if values.len() != spec.node_count() {
        return Err(Error::Parse(format!(
            "expected {} rows, got {}",
            spec.node_count(),
            values.len()
        )));
    }
    GridFunction::new(spec, values, sidecar.tail)
}

/// Kernel specification file: a flat JSON object tagged by `type`, carrying
/// the ellipticity parameters and the form-specific fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelFile {
    Power {
        n: usize,
        s: f64,
        lambda: f64,
        #[serde(rename = "Lambda")]
        lambda_max: f64,
        #[serde(default = "one")]
        coeff: f64,
    },
    ModulatedPower {
        n: usize,
        s: f64,
        lambda: f64,
        #[serde(rename = "Lambda")]
        lambda_max: f64,
        base: f64,
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Table {
        n: usize,
        s: f64,
        lambda: f64,
        #[serde(rename = "Lambda")]
        lambda_max: f64,
        radii: Vec<f64>,
        multipliers: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl KernelFile {
    /// Validated kernel named by this file entry.
    pub fn build(&self) -> Result<Kernel> {
        match self.clone() {
            KernelFile::Power { n, s, lambda, lambda_max, coeff } => Kernel::new(
                EllipticityParams::new(n, s, lambda, lambda_max)?,
                KernelForm::Power { coeff },
            ),
            KernelFile::ModulatedPower {
                n,
                s,
                lambda,
                lambda_max,
                base,
                amplitude,
                frequency,
                phase,
            } => Kernel::new(
                EllipticityParams::new(n, s, lambda, lambda_max)?,
                KernelForm::ModulatedPower { base, amplitude, frequency, phase },
            ),
            KernelFile::Table { n, s, lambda, lambda_max, radii, multipliers } => Kernel::new(
                EllipticityParams::new(n, s, lambda, lambda_max)?,
                KernelForm::Table { radii, multipliers },
            ),
        }
    }
}

/// Reads and validates a kernel from its JSON specification file.
pub fn read_kernel(path: &Path) -> Result<Kernel> {
    let body = fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    let file: KernelFile = serde_json::from_str(&body)?;
    file.build()
}

/// Serializes any report as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Diagnostics CSV for a regularization run: one row per scale.
pub fn step_diagnostics_csv(steps: &[RegularizationStep]) -> String {
    let mut out =
        String::from("epsilon,sup_error,weighted_l1_error,operator_residual,zeroth_gap\n");
    for step in steps {
        let d = &step.diagnostics;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            step.epsilon, d.sup_error, d.weighted_l1_error, d.operator_residual, d.zeroth_gap
        );
    }
    out
}

/// Tidies report JSON values into long-format `quantity,epsilon,value` rows
/// sorted by quantity then scale, ready for external plotting. Recognizes
/// gap reports (`epsilons` + `gaps`) and per-scale row tables (`rows` with
/// an `epsilon` field); a report of any other shape is a parse error.
pub fn emit_plot_data(reports: &[serde_json::Value]) -> Result<String> {
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for (i, report) in reports.iter().enumerate() {
        let obj = report
            .as_object()
            .ok_or_else(|| Error::Parse(format!("report {i}: not a JSON object")))?;
        if let (Some(eps), Some(gaps)) = (obj.get("epsilons"), obj.get("gaps")) {
            let eps = number_array(eps, i, "epsilons")?;
            let gaps = number_array(gaps, i, "gaps")?;
            if eps.len() != gaps.len() {
                return Err(Error::Parse(format!(
                    "report {i}: {} scales but {} gaps",
                    eps.len(),
                    gaps.len()
                )));
            }
            for (e, g) in eps.iter().zip(&gaps) {
                rows.push(("gap".into(), *e, *g));
            }
        } else if let Some(table) = obj.get("rows") {
            let table = table
                .as_array()
                .ok_or_else(|| Error::Parse(format!("report {i}: rows is not an array")))?;
            for row in table {
                let row = row
                    .as_object()
                    .ok_or_else(|| Error::Parse(format!("report {i}: row is not an object")))?;
                let eps = row
                    .get("epsilon")
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::Parse(format!("report {i}: row without epsilon")))?;
                for (key, value) in row {
                    if key == "epsilon" {
                        continue;
                    }
                    if let Some(v) = value.as_f64() {
                        rows.push((key.clone(), eps, v));
                    }
                }
            }
        } else {
            return Err(Error::Parse(format!(
                "report {i}: neither a gap report nor a per-scale table"
            )));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut out = String::from("quantity,epsilon,value\n");
    for (q, e, v) in rows {
        let _ = writeln!(out, "{q},{e},{v}");
    }
    Ok(out)
}

fn number_array(v: &serde_json::Value, report: usize, field: &str) -> Result<Vec<f64>> {
    v.as_array()
        .and_then(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
        .ok_or_else(|| Error::Parse(format!("report {report}: {field} is not a number array")))
}
