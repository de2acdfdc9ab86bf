//! Command-line front end: `classify`, `killing` and `selftest`.
//!
//! Exit codes: 0 success, 1 self-test failure, 2 unreadable or malformed
//! input, 3 failed precondition (invalid metric, non-constant curvature).

pub mod metric_file;
pub mod report;
pub mod selftest;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::algebroid::{expected_fiber_dim, fiber_basis};
use crate::curvature::{algebroid_curvature, constant_curvature_fit, mc_constants, FIT_TOL};
use crate::expr::Expr;
use crate::geom::{sym_cholesky_upper, GeometricObject};
use crate::integrator::{default_loops, killing_algebra_unchecked, monodromy_defect, IntegratorError};
use crate::jet::StructureKind;

pub use metric_file::{MetricFile, ParseError};
pub use report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

/// Seed for the sample points drawn from the domain box.
pub const SAMPLE_SEED: u64 = 0x5a3b1e;

/// Threshold for the vanishing checks in reports.
pub const VANISH_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "jetgeom", version, about = "Classify metrics by their groupoid curvature and integrate Killing jets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit constant curvature and report the space-form class.
    Classify { file: PathBuf },
    /// Compute the Killing algebra at the base point and the monodromy defect.
    Killing { file: PathBuf },
    /// Run the built-in property suites.
    Selftest {
        /// Flip the curvature sign convention (negative control).
        #[arg(long, hide = true)]
        corrupt_convention: bool,
    },
}

/// Outcome of a command: a report (possibly partial) and an exit code.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub code: i32,
    pub diagnostic: Option<String>,
}

impl Outcome {
    fn ok(report: Report) -> Self {
        Outcome { report, code: EXIT_OK, diagnostic: None }
    }

    fn fail(report: Report, code: i32, diagnostic: impl Into<String>) -> Self {
        Outcome { report, code, diagnostic: Some(diagnostic.into()) }
    }
}

/// Parses argv, runs the command and writes to the given streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Classify { file } => cmd_classify(&file),
        Command::Killing { file } => cmd_killing(&file),
        Command::Selftest { corrupt_convention } => {
            cmd_selftest(&selftest::Options { corrupt_convention, group_samples: 0 })
        }
    };
    let _ = out.write_all(outcome.report.render().as_bytes());
    if let Some(d) = &outcome.diagnostic {
        let _ = writeln!(err, "jetgeom: {d}");
    }
    outcome.code
}

fn load(path: &Path, report: &mut Report) -> Result<(MetricFile, GeometricObject), Outcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Outcome::fail(Report::default(), EXIT_PARSE, format!("{}: {e}", path.display())))?;
    let file = MetricFile::parse(&text)
        .map_err(|e| Outcome::fail(Report::default(), EXIT_PARSE, format!("{}: {e}", path.display())))?;
    report.text("file", path.display().to_string());
    report.text("kind", file.kind.name());
    report.int("dimension", file.dimension);
    let g = file
        .object()
        .map_err(|e| Outcome::fail(report.clone(), EXIT_PRECONDITION, format!("{}: {e}", path.display())))?;
    Ok((file, g))
}

fn sample_points(file: &MetricFile) -> Vec<Vec<f64>> {
    let mut pts = vec![file.base_point.clone()];
    pts.extend(file.domain.random_points(file.samples.saturating_sub(1), SAMPLE_SEED, 0.9));
    pts
}

fn orthonormal_frame(file: &MetricFile, g: &GeometricObject) -> Vec<Expr> {
    let n = file.dimension;
    match g.metric_exprs() {
        Some(m) => sym_cholesky_upper(m, n),
        None => (0..n * n).map(|q| if q / n == q % n { Expr::one() } else { Expr::zero() }).collect(),
    }
}

pub fn cmd_classify(path: &Path) -> Outcome {
    let mut r = Report::default();
    let (file, g) = match load(path, &mut r) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let samples = sample_points(&file);
    let verdict = match constant_curvature_fit(&g, &samples) {
        Ok(v) => v,
        Err(e) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
    };
    let n = file.dimension;
    let fiber = match fiber_basis(&g, &file.base_point) {
        Ok(b) => b.len(),
        Err(e) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
    };
    let mut curv: f64 = 0.0;
    for p in &samples {
        let ac = algebroid_curvature(&g, p);
        let basis = fiber_basis(&g, p);
        match (ac, basis) {
            (Ok(ac), Ok(basis)) => {
                for b in &basis {
                    curv = curv.max(ac.evaluate(b).relative());
                }
            }
            (Err(e), _) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
            (_, Err(e)) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
        }
    }
    let constant = verdict.residual <= FIT_TOL;
    let mc = if constant { mc_constants(&g, &orthonormal_frame(&file, &g), &samples).ok() } else { None };

    r.human(format!("{}, c={:.6e}, residual={:.3e}", verdict.class.name(), verdict.c, verdict.residual));
    r.text("class", verdict.class.name());
    r.real("c", verdict.c);
    r.real("residual", verdict.residual);
    r.int("samples", samples.len());
    r.int("fiber_dim", fiber);
    r.real("algebroid_curvature", curv);
    if let Some(mc) = &mc {
        r.real("mc_defect", mc.defect);
    }
    r.check("constant_curvature", verdict.residual, FIT_TOL, false);
    r.check("fiber_rank", (fiber as f64 - expected_fiber_dim(n, file.kind) as f64).abs(), 0.0, false);
    r.check("algebroid_curvature", curv, VANISH_TOL, false);
    if let Some(mc) = &mc {
        r.check("mc_constancy", mc.defect, VANISH_TOL, false);
    }
    Outcome::ok(r)
}

pub fn cmd_killing(path: &Path) -> Outcome {
    let mut r = Report::default();
    let (file, g) = match load(path, &mut r) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let samples = sample_points(&file);
    let verdict = match constant_curvature_fit(&g, &samples) {
        Ok(v) => v,
        Err(e) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
    };
    let loops = default_loops(&file.domain, &file.base_point, file.rk_step);
    let (defect, drift_stop) = match monodromy_defect(&g, &file.base_point, &loops) {
        Ok(d) => (d, false),
        Err(IntegratorError::ConstraintDrift { drift, .. }) => (drift, true),
        Err(e) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
    };
    r.int("loops", loops.len());
    r.real("defect", defect);
    if drift_stop {
        r.text("defect_source", "constraint_drift");
    }
    r.real("fit_residual", verdict.residual);
    if verdict.residual > FIT_TOL {
        r.human(format!("not a space form: fit residual={:.3e} defect={:.3e}", verdict.residual, defect));
        r.check("constant_curvature", verdict.residual, FIT_TOL, false);
        return Outcome::fail(
            r,
            EXIT_PRECONDITION,
            format!("curvature is not constant (fit residual {:e}, monodromy defect {:e})", verdict.residual, defect),
        );
    }
    let kb = match killing_algebra_unchecked(&g, &file.base_point) {
        Ok(kb) => kb,
        Err(e) => return Outcome::fail(r, EXIT_PRECONDITION, e.to_string()),
    };
    let (p, z, m) = kb.signature;
    r.human(format!("dim={} signature=({p},{z},{m}) defect={defect:.3e}", kb.dim()));
    r.int("dim", kb.dim());
    r.text("signature", report::ints(&[p, z, m]));
    r.text("class", verdict.class.name());
    r.real("c", verdict.c);
    let flat: Vec<f64> = kb.structure.iter().flatten().copied().collect();
    r.text("structure_constants", report::reals(&flat));
    r.text("killing_form", report::reals(kb.killing_form().transpose().as_slice()));
    r.real("jacobi_residual", kb.jacobi_residual);
    r.real("closure_residual", kb.closure_residual);
    let expected = expected_fiber_dim(file.dimension, file.kind) as f64;
    r.check("dimension", (kb.dim() as f64 - expected).abs(), 0.0, false);
    r.check("jacobi", kb.jacobi_residual, 1e-8, false);
    r.check("monodromy", defect, VANISH_TOL, false);
    if file.kind == StructureKind::Riemannian {
        r.check("closure", kb.closure_residual, 1e-8, false);
    }
    Outcome::ok(r)
}

pub fn cmd_selftest(opts: &selftest::Options) -> Outcome {
    let suites = selftest::run(opts);
    let mut r = Report::default();
    r.human(format!("{:<14} {:>7} {:>7} {:>14}  status", "suite", "checks", "failed", "max_residual"));
    for s in &suites {
        r.human(format!(
            "{:<14} {:>7} {:>7} {:>14.3e}  {}",
            s.name,
            s.checks,
            s.failures.len(),
            s.max_residual,
            if s.passed() { "pass" } else { "FAIL" }
        ));
        r.int(&format!("suite.{}.checks", s.name), s.checks);
        r.int(&format!("suite.{}.failed", s.name), s.failures.len());
        r.real(&format!("suite.{}.max_residual", s.name), s.max_residual);
        r.text(&format!("suite.{}", s.name), if s.passed() { "pass" } else { "fail" });
    }
    let failing: Vec<&SuiteSummary> = suites.iter().filter(|s| !s.passed()).collect();
    if failing.is_empty() {
        return Outcome::ok(r);
    }
    let mut msg = String::new();
    for s in &failing {
        msg += &format!("failing suite: {}\n", s.name);
        for f in s.failures.iter().take(5) {
            msg += &format!("  {f}\n");
        }
    }
    Outcome::fail(r, EXIT_SELFTEST, msg.trim_end().to_string())
}

type SuiteSummary = selftest::SuiteResult;
