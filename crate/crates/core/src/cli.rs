//! Command-line front end.
//!
//! Exit codes: 0 success, 2 malformed input or usage, 3 singular pencil,
//! 4 solved as optimal for an inconsistent problem, 5 solver precondition or
//! numerical refusal, 6 verification failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::bvp::{
    assemble_bundle, solve_bvp, BvpSolution, Case, ConsistencyReport, SolutionBundle,
};
use crate::error::BvpError;
use crate::linalg::ComplexMatrix;
use crate::oracle::{certify, CertifyOptions};
use crate::pencil::{
    is_regular, verify_wcf, weierstrass_decompose_with, DecomposeOptions, WeierstrassForm,
};
use crate::problem::{entry_value, number, vector_value, ProblemFile, StrategyChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;
pub const EXIT_INCONSISTENT: i32 = 4;
pub const EXIT_PRECONDITION: i32 = 5;
pub const EXIT_VERIFY_FAILED: i32 = 6;

/// Environment variable supplying the default relative rank tolerance.
pub const TOL_ENV: &str = "DESCRIPTOR_BVP_TOL";

#[derive(Debug, Parser)]
#[command(
    name = "descriptor-bvp",
    version,
    about = "Boundary value problems for descriptor difference equations F·Y[k+1] = G·Y[k]"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regularity, canonical-form structure and finite spectrum of the pencil.
    Analyze(CommonArgs),
    /// Classify the problem and compute its optimal solution.
    Solve(SolveArgs),
    /// Solve and run the optimality and residual certificates.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Relative rank tolerance for K (overrides the file and the environment).
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for the regularity test and randomized certificates.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct StrategyArgs {
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<StrategyChoice>,
    /// Tikhonov weight θ of the default regularizer E = θ·I.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Add DELTA to the first coefficient of the solution before certifying.
    #[arg(long, value_name = "DELTA", allow_negative_numbers = true)]
    corrupt: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_strategy(s: &str) -> Result<StrategyChoice, String> {
    s.parse()
}

/// A failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<BvpError> for Failure {
    fn from(e: BvpError) -> Self {
        let code = match e {
            BvpError::SingularPencil => EXIT_SINGULAR,
            BvpError::DimensionMismatch(_) | BvpError::NonFinite { .. } => EXIT_PARSE,
            _ => EXIT_PRECONDITION,
        };
        Self::new(code, e.to_string())
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Results go to `out` unless `--output` is given.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(done) => {
            if let Some(note) = &done.note {
                let _ = writeln!(err, "{note}");
            }
            match emit(&done.text, done.output.as_deref(), out) {
                Ok(()) => done.code,
                Err(f) => {
                    let _ = writeln!(err, "error: {}", f.message);
                    f.code
                }
            }
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// A completed command: its output text, destination and exit code.
struct Done {
    text: String,
    output: Option<PathBuf>,
    code: i32,
    note: Option<String>,
}

impl Done {
    fn new(text: String, output: &Option<PathBuf>, code: i32) -> Self {
        Self {
            text,
            output: output.clone(),
            code,
            note: None,
        }
    }
}

type Outcome = Result<Done, Failure>;

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("cannot write {}: {e}", p.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::new(EXIT_PARSE, format!("cannot write output: {e}"))),
    }
}

fn load(common: &CommonArgs) -> Result<ProblemFile, Failure> {
    let text = std::fs::read_to_string(&common.input).map_err(|e| {
        Failure::new(
            EXIT_PARSE,
            format!("cannot read {}: {e}", common.input.display()),
        )
    })?;
    let mut file = ProblemFile::parse(&text)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", common.input.display())))?;
    if let Some(s) = common.seed {
        file.options.seed = s;
    }
    file.options.tol = match common.tol.or(file.options.tol) {
        Some(t) => Some(t),
        None => env_tol()?,
    };
    if let Some(t) = file.options.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Failure::new(
                EXIT_PARSE,
                format!("tolerance {t} is not a finite non-negative number"),
            ));
        }
    }
    Ok(file)
}

fn env_tol() -> Result<Option<f64>, Failure> {
    match std::env::var(TOL_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Failure::new(EXIT_PARSE, format!("{TOL_ENV}={v} is not a number"))),
        _ => Ok(None),
    }
}

fn apply_strategy(file: &mut ProblemFile, args: &StrategyArgs) -> Result<(), Failure> {
    if let Some(s) = args.strategy {
        file.options.strategy = s;
    }
    if let Some(t) = args.theta {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Failure::new(
                EXIT_PARSE,
                format!("theta {t} is not a finite non-negative number"),
            ));
        }
        file.options.theta = t;
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values are finite");
    s.push('\n');
    s
}

fn spectrum_value(form: &WeierstrassForm) -> Value {
    Value::Array(
        form.finite_eigenvalues
            .iter()
            .map(|e| json!({ "value": entry_value(e.value), "multiplicity": e.algebraic_multiplicity }))
            .collect(),
    )
}

fn analyze(args: &CommonArgs) -> Outcome {
    let file = load(args)?;
    let pencil = file.pencil()?;
    let verdict = is_regular(&pencil, file.options.seed);
    let mut report = serde_json::Map::new();
    report.insert("regular".into(), json!(verdict.regular));
    report.insert(
        "witness".into(),
        serde_json::to_value(&verdict.witness).expect("finite"),
    );
    if !verdict.regular {
        let mut done = Done::new(pretty(&Value::Object(report)), &args.output, EXIT_SINGULAR);
        done.note = Some(format!("error: {}", BvpError::SingularPencil));
        return Ok(done);
    }
    let decompose = DecomposeOptions {
        seed: file.options.seed,
        ..DecomposeOptions::default()
    };
    let (form, _) = weierstrass_decompose_with(&pencil, &decompose)?;
    let residuals = verify_wcf(&pencil, &form)?;
    report.insert("m".into(), json!(pencil.dim()));
    report.insert("p".into(), json!(form.p));
    report.insert("q".into(), json!(form.q));
    report.insert("q_star".into(), json!(form.q_star));
    report.insert("finite_eigenvalues".into(), spectrum_value(&form));
    report.insert(
        "wcf_residuals".into(),
        json!({ "f": number(residuals.f_residual), "g": number(residuals.g_residual) }),
    );
    if let Some(spec) = &file.options.wcf {
        let injected = spec.resolve(&pencil)?;
        let r = verify_wcf(&pencil, &injected)?;
        report.insert(
            "injected_wcf".into(),
            json!({
                "p": injected.p,
                "q": injected.q,
                "finite_eigenvalues": spectrum_value(&injected),
                "residuals": { "f": number(r.f_residual), "g": number(r.g_residual) },
            }),
        );
    }
    Ok(Done::new(
        pretty(&Value::Object(report)),
        &args.output,
        EXIT_OK,
    ))
}

fn report_value(report: &ConsistencyReport) -> Value {
    serde_json::to_value(report).expect("report values are finite")
}

fn bundle_value(b: &SolutionBundle) -> Value {
    json!({
        "c_hat": vector_value(&b.c_hat),
        "strategy": b.strategy.name(),
        "trajectory": b.trajectory.iter().map(vector_value).collect::<Vec<_>>(),
        "dynamics_residual": number(b.dynamics_residual),
        "boundary_residual": [number(b.boundary_residual.0), number(b.boundary_residual.1)],
        "perturbation_magnitude": number(b.perturbation_magnitude),
        "warnings": b.warnings,
    })
}

fn trajectory_csv(traj: &[ComplexMatrix]) -> String {
    let m = traj.first().map_or(0, |y| y.rows());
    let mut s = String::from("k");
    for i in 1..=m {
        let _ = write!(s, ",y{i}_re,y{i}_im");
    }
    s.push('\n');
    for (k, y) in traj.iter().enumerate() {
        let _ = write!(s, "{k}");
        for z in y.as_slice() {
            let _ = write!(s, ",{},{}", z.re, z.im);
        }
        s.push('\n');
    }
    s
}

/// Outcome of the pipeline, with the `p = 0` case made explicit.
enum Pipeline {
    Solved(Box<BvpSolution>),
    NoFiniteDynamics {
        trajectory: Vec<ComplexMatrix>,
        boundary: (f64, f64),
    },
}

fn run_pipeline(file: &ProblemFile) -> Result<Pipeline, Failure> {
    let bvp = file.bvp()?;
    let options = file.solve_options()?;
    match solve_bvp(&bvp, &options) {
        Ok(sol) => Ok(Pipeline::Solved(Box::new(sol))),
        Err(BvpError::NoFiniteDynamics) => {
            let m = bvp.pencil().dim();
            Ok(Pipeline::NoFiniteDynamics {
                trajectory: vec![ComplexMatrix::zeros(m, 1); bvp.horizon() + 1],
                boundary: (bvp.b1().norm_fro(), bvp.b2().norm_fro()),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn no_dynamics_value(trajectory: &[ComplexMatrix], boundary: (f64, f64)) -> Value {
    let consistent = boundary.0 == 0.0 && boundary.1 == 0.0;
    json!({
        "p": 0,
        "no_finite_dynamics": true,
        "case": if consistent { "UniqueSolution" } else { "NoSolution" },
        "trajectory": trajectory.iter().map(vector_value).collect::<Vec<_>>(),
        "boundary_residual": [number(boundary.0), number(boundary.1)],
    })
}

fn solve(args: &SolveArgs) -> Outcome {
    let mut file = load(&args.common)?;
    apply_strategy(&mut file, &args.strategy)?;
    let (text, code) = match run_pipeline(&file)? {
        Pipeline::Solved(sol) => {
            let code = if sol.report.case == Case::NoSolution {
                EXIT_INCONSISTENT
            } else {
                EXIT_OK
            };
            let text = match args.format {
                Format::Csv => trajectory_csv(&sol.bundle.trajectory),
                Format::Json => pretty(&json!({
                    "pencil": {
                        "p": sol.form.p,
                        "q": sol.form.q,
                        "q_star": sol.form.q_star,
                        "source": if file.options.wcf.is_some() { "injected" } else { "decomposed" },
                    },
                    "report": report_value(&sol.report),
                    "solution": bundle_value(&sol.bundle),
                })),
            };
            (text, code)
        }
        Pipeline::NoFiniteDynamics {
            trajectory,
            boundary,
        } => {
            let code = if boundary == (0.0, 0.0) {
                EXIT_OK
            } else {
                EXIT_INCONSISTENT
            };
            let text = match args.format {
                Format::Csv => trajectory_csv(&trajectory),
                Format::Json => pretty(&no_dynamics_value(&trajectory, boundary)),
            };
            (text, code)
        }
    };
    Ok(Done::new(text, &args.common.output, code))
}

fn verify(args: &VerifyArgs) -> Outcome {
    let mut file = load(&args.common)?;
    apply_strategy(&mut file, &args.strategy)?;
    let mut sol = match run_pipeline(&file)? {
        Pipeline::Solved(sol) => sol,
        Pipeline::NoFiniteDynamics {
            trajectory,
            boundary,
        } => {
            let mut v = no_dynamics_value(&trajectory, boundary);
            v["certificates"] = json!([]);
            v["passed"] = json!(true);
            return Ok(Done::new(pretty(&v), &args.common.output, EXIT_OK));
        }
    };
    if let Some(delta) = args.corrupt {
        if sol.bundle.c_hat.rows() > 0 {
            let mut c = sol.bundle.c_hat.clone();
            c[(0, 0)] += delta;
            let bvp = file.bvp()?;
            sol.bundle = assemble_bundle(
                &bvp,
                &sol.form,
                &sol.reduced,
                sol.bundle.strategy,
                c,
                sol.bundle.warnings.clone(),
            )?;
        }
    }
    let reg = file.solve_options()?.regularizer();
    let certificates = certify(
        &sol,
        file.bvp()?.pencil(),
        &reg,
        &CertifyOptions {
            seed: file.options.seed,
            ..CertifyOptions::default()
        },
    )?;
    let passed = certificates.iter().all(|c| c.passed);
    let mut v = json!({
        "report": report_value(&sol.report),
        "solution": bundle_value(&sol.bundle),
        "certificates": serde_json::to_value(&certificates).expect("finite"),
        "passed": passed,
    });
    if let Some(delta) = args.corrupt {
        v["corrupted_by"] = number(delta);
    }
    let code = if passed { EXIT_OK } else { EXIT_VERIFY_FAILED };
    Ok(Done::new(pretty(&v), &args.common.output, code))
}
