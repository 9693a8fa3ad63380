//! Batch front end: reads a pencil from JSON, runs one command and writes its
//! artifacts to an output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use triquad::numfmt::format_f64;
use triquad::oracle::{
    default_resolution, run_oracle, sample_csv, verify_bound, OracleResult, Verdict, VerifyOutcome,
    DEFAULT_RESIDUAL_TOL,
};
use triquad::pipeline::{
    analyze, inertia_summary, Analysis, AnalysisReport, InertiaSummary, PipelineConfig, INERTIA_SAMPLES,
};
use triquad::quadform::{inertia_descartes, inertia_eigen, Pencil, QuadraticForm, DEFAULT_ZERO_TOL};
use triquad::spectral_curve::mesh::MAX_DEPTH;

/// Relative asymmetry `max|Q − Qᵀ| / max|Q|` above which input is rejected.
pub const SYMMETRY_TOL: f64 = 1e-6;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_NOT_AUTHORITATIVE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Analyze,
    Trace,
    Verify,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Trace => "trace",
            Command::Verify => "verify",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Io { path: PathBuf, message: String },
    MalformedJson(String),
    Asymmetric { form: usize, deviation: f64 },
    Core(triquad::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io_error",
            CliError::MalformedJson(_) => "malformed_json",
            CliError::Asymmetric { .. } => "asymmetric_matrix",
            CliError::Core(e) => e.code(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::MalformedJson(m) => write!(f, "malformed input: {m}"),
            CliError::Asymmetric { form, deviation } => {
                write!(
                    f,
                    "quadric {form} is not symmetric (relative asymmetry {deviation:e} > {SYMMETRY_TOL:e})"
                )
            }
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<triquad::Error> for CliError {
    fn from(e: triquad::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub command: Command,
    /// Required by every command except `selftest`.
    pub input: Option<PathBuf>,
    pub depth: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    /// Finest oracle level; chosen from the dimension when absent.
    pub oracle_res: Option<usize>,
    pub out: PathBuf,
}

impl JobConfig {
    pub fn new(command: Command, input: Option<PathBuf>, out: PathBuf) -> Self {
        JobConfig {
            command,
            input,
            depth: triquad::pipeline::DEFAULT_DEPTH,
            epsilon: None,
            seed: 0,
            oracle_res: None,
            out,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let invalid = |m: String| CliError::Core(triquad::Error::InvalidParameter(m));
        if self.depth > MAX_DEPTH {
            return Err(invalid(format!(
                "depth must lie in [0, {MAX_DEPTH}], got {}",
                self.depth
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(invalid(format!("epsilon override must be positive, got {eps}")));
            }
        }
        if self.command != Command::Selftest && self.input.is_none() {
            return Err(invalid(format!("{} needs --input", self.command.name())));
        }
        Ok(())
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            depth: self.depth,
            seed: self.seed,
            epsilon: self.epsilon,
            ..PipelineConfig::default()
        }
    }
}

/// A parsed input file.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub pencil: Pencil,
    pub comment: Option<String>,
}

pub fn parse_input(path: &Path) -> CliResult<Input> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_input_str(&text)
}

/// Parses `{"n": int, "quadrics": [matrix, …], "comment": string?}`, where each
/// matrix is a list of rows or a flat row-major list of `(n + 1)²` numbers.
pub fn parse_input_str(text: &str) -> CliResult<Input> {
    let malformed = |m: &str| CliError::MalformedJson(m.to_string());
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("top level must be an object"))?;
    let n = obj
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("\"n\" must be a non-negative integer"))? as usize;
    let comment = match obj.get("comment") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(malformed("\"comment\" must be a string")),
    };
    let quadrics = obj
        .get("quadrics")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("\"quadrics\" must be an array"))?;
    if quadrics.is_empty() {
        return Err(malformed("\"quadrics\" is empty"));
    }
    let dim = n + 1;
    let mut forms = Vec::with_capacity(quadrics.len());
    for (index, q) in quadrics.iter().enumerate() {
        let rows = matrix_rows(q, index)?;
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            let found = if rows.len() != dim {
                rows.len()
            } else {
                rows.iter().find(|r| r.len() != dim).map_or(dim, Vec::len)
            };
            return Err(CliError::Core(triquad::Error::DimensionMismatch {
                expected: dim,
                found,
            }));
        }
        let scale = rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut deviation = 0.0f64;
        for i in 0..dim {
            for j in 0..i {
                deviation = deviation.max((rows[i][j] - rows[j][i]).abs());
            }
        }
        if scale > 0.0 && deviation / scale > SYMMETRY_TOL {
            return Err(CliError::Asymmetric {
                form: index,
                deviation: deviation / scale,
            });
        }
        forms.push(QuadraticForm::from_rows(&rows)?);
    }
    Ok(Input {
        pencil: Pencil::new(forms)?,
        comment,
    })
}

fn matrix_rows(q: &Value, index: usize) -> CliResult<Vec<Vec<f64>>> {
    let bad = || CliError::MalformedJson(format!("quadric {index} must be a matrix of finite numbers"));
    let number = |v: &Value| v.as_f64().filter(|x| x.is_finite()).ok_or_else(bad);
    let items = q.as_array().ok_or_else(bad)?;
    if items.iter().all(Value::is_array) {
        return items
            .iter()
            .map(|row| row.as_array().ok_or_else(bad)?.iter().map(number).collect())
            .collect();
    }
    let flat: Vec<f64> = items.iter().map(number).collect::<CliResult<_>>()?;
    let side = (flat.len() as f64).sqrt().round() as usize;
    if side * side != flat.len() {
        return Err(CliError::MalformedJson(format!(
            "quadric {index} has {} entries, not a square count",
            flat.len()
        )));
    }
    Ok(flat.chunks(side.max(1)).map(<[f64]>::to_vec).collect())
}

fn require_three_forms(pencil: &Pencil) -> CliResult<()> {
    if pencil.k() != 2 {
        return Err(CliError::Core(triquad::Error::UnsupportedK { k: pencil.k() }));
    }
    Ok(())
}

fn write(out: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::Io {
        path: out.to_path_buf(),
        message: e.to_string(),
    })?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io {
        path,
        message: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

#[derive(Debug, Serialize)]
struct CurveReport<'a> {
    command: &'static str,
    comment: Option<&'a str>,
    analysis: AnalysisReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<&'a OracleResult>,
}

#[derive(Debug, Serialize)]
struct InertiaReport<'a> {
    command: &'static str,
    comment: Option<&'a str>,
    inertia: InertiaSummary,
}

#[derive(Debug, Serialize)]
struct ErrorReport {
    command: &'static str,
    error: ErrorBody,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
}

/// JSON body written to `error.json` and standard error on failure.
pub fn error_json(command: Command, err: &CliError) -> String {
    to_json(&ErrorReport {
        command: command.name(),
        error: ErrorBody {
            code: err.code(),
            message: err.to_string(),
        },
    })
}

/// Error JSON for command lines that do not parse.
pub fn usage_error_json(message: &str) -> String {
    #[derive(Serialize)]
    struct Usage<'a> {
        error: UsageBody<'a>,
    }
    #[derive(Serialize)]
    struct UsageBody<'a> {
        code: &'static str,
        message: &'a str,
    }
    to_json(&Usage {
        error: UsageBody {
            code: "invalid_arguments",
            message: message.trim_end(),
        },
    })
}

/// `oval_id,point_index,x,y,z` rows, 17 significant digits.
pub fn ovals_csv(analysis: &Analysis) -> String {
    let mut out = String::from("oval_id,point_index,x,y,z\n");
    for oval in 0..analysis.trace.ovals.len() {
        for (i, p) in analysis.trace.oval_points(oval).enumerate() {
            out.push_str(&format!(
                "{oval},{i},{},{},{}\n",
                format_f64(p[0]),
                format_f64(p[1]),
                format_f64(p[2])
            ));
        }
    }
    out
}

fn authority_exit(authoritative: bool) -> i32 {
    if authoritative {
        EXIT_OK
    } else {
        EXIT_NOT_AUTHORITATIVE
    }
}

fn load(config: &JobConfig) -> CliResult<Input> {
    config.validate()?;
    parse_input(config.input.as_deref().expect("validated"))
}

/// BoundReport JSON for three forms, an inertia-only summary otherwise.
pub fn run_analyze(config: &JobConfig) -> CliResult<i32> {
    let input = load(config)?;
    if input.pencil.k() != 2 {
        let inertia = inertia_summary(&input.pencil, INERTIA_SAMPLES, config.seed)?;
        let report = InertiaReport {
            command: Command::Analyze.name(),
            comment: input.comment.as_deref(),
            inertia,
        };
        write(&config.out, "report.json", &to_json(&report))?;
        return Ok(EXIT_OK);
    }
    let analysis = analyze(&input.pencil, &config.pipeline())?;
    let report = CurveReport {
        command: Command::Analyze.name(),
        comment: input.comment.as_deref(),
        analysis: analysis.report(),
        oracle: None,
    };
    write(&config.out, "report.json", &to_json(&report))?;
    Ok(authority_exit(analysis.authority().authoritative))
}

pub fn run_trace(config: &JobConfig) -> CliResult<i32> {
    let input = load(config)?;
    require_three_forms(&input.pencil)?;
    let analysis = analyze(&input.pencil, &config.pipeline())?;
    let report = CurveReport {
        command: Command::Trace.name(),
        comment: input.comment.as_deref(),
        analysis: analysis.report(),
        oracle: None,
    };
    write(&config.out, "report.json", &to_json(&report))?;
    write(&config.out, "ovals.csv", &ovals_csv(&analysis))?;
    Ok(authority_exit(analysis.authority().authoritative))
}

#[derive(Debug, Serialize)]
struct VerdictReport<'a> {
    #[serde(flatten)]
    outcome: &'a VerifyOutcome,
    oracle_resolution: usize,
    oracle_flag: triquad::oracle::EstimateFlag,
    oracle_authoritative: bool,
    analysis_authoritative: bool,
}

pub fn run_verify(config: &JobConfig) -> CliResult<i32> {
    let input = load(config)?;
    require_three_forms(&input.pencil)?;
    let analysis = analyze(&input.pencil, &config.pipeline())?;
    let resolution = config
        .oracle_res
        .unwrap_or_else(|| default_resolution(input.pencil.dim()));
    let (oracle, sample, estimate) = run_oracle(&input.pencil, resolution, DEFAULT_RESIDUAL_TOL)?;
    let analysis_authoritative = analysis.authority().authoritative;
    let outcome = verify_bound(&analysis.bounds, &oracle, analysis_authoritative);
    let report = CurveReport {
        command: Command::Verify.name(),
        comment: input.comment.as_deref(),
        analysis: analysis.report(),
        oracle: Some(&oracle),
    };
    let verdict = VerdictReport {
        outcome: &outcome,
        oracle_resolution: resolution,
        oracle_flag: oracle.flag,
        oracle_authoritative: oracle.authoritative,
        analysis_authoritative,
    };
    write(&config.out, "report.json", &to_json(&report))?;
    write(&config.out, "sample.csv", &sample_csv(&sample, &estimate))?;
    write(&config.out, "verdict.json", &to_json(&verdict))?;
    Ok(if !outcome.authoritative {
        EXIT_NOT_AUTHORITATIVE
    } else if outcome.verdict == Verdict::Fail {
        EXIT_FAIL
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn coordinate_points() -> Pencil {
    let form = |i: usize, j: usize| {
        let mut rows = vec![vec![0.0; 3]; 3];
        rows[i][j] = 0.5;
        rows[j][i] = 0.5;
        QuadraticForm::from_rows(&rows).expect("3 × 3")
    };
    Pencil::new(vec![form(0, 1), form(0, 2), form(1, 2)]).expect("same size")
}

/// Small built-in checks of every stage; writes `selftest.json`.
pub fn selftest(config: &JobConfig) -> CliResult<i32> {
    config.validate()?;
    let pipeline = config.pipeline();
    let mut cases = Vec::new();

    let mut agree = 0;
    let mut tried = 0;
    for seed in 0..200u64 {
        let dim = 2 + (seed % 11) as usize;
        let form = triquad::quadform::random_integer_pencil(dim, 1, 9, seed).forms()[0].clone();
        let eig = form.eigenvalues()?;
        let scale = eig.amax().max(f64::MIN_POSITIVE);
        if eig.iter().any(|x| x.abs() <= 10.0 * DEFAULT_ZERO_TOL * scale) {
            continue;
        }
        tried += 1;
        if inertia_descartes(&form, DEFAULT_ZERO_TOL) == inertia_eigen(&form, DEFAULT_ZERO_TOL)?.positive {
            agree += 1;
        }
    }
    cases.push(SelftestCase {
        name: "inertia_routes_agree",
        passed: agree == tried,
        detail: format!("{agree}/{tried}"),
    });

    let zero = Pencil::new(vec![QuadraticForm::zeros(3); 3])?;
    let a = analyze(&zero, &pipeline)?;
    cases.push(SelftestCase {
        name: "zero_pencil_bound",
        passed: a.trace.ovals.is_empty() && a.bounds.refined_bound == 3,
        detail: format!("ovals {} refined_bound {}", a.trace.ovals.len(), a.bounds.refined_bound),
    });

    let diagonal = Pencil::diagonal(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])?;
    let a = analyze(
        &diagonal,
        &PipelineConfig {
            epsilon: Some(0.8),
            ..pipeline.clone()
        },
    )?;
    cases.push(SelftestCase {
        name: "diagonal_pencil_three_ovals",
        passed: a.trace.ovals.len() == 3 && a.jumps.valid && a.bounds.filtration_sum == 3,
        detail: format!(
            "ovals {} filtration_sum {}",
            a.trace.ovals.len(),
            a.bounds.filtration_sum
        ),
    });

    let points = coordinate_points();
    let a = analyze(&points, &pipeline)?;
    let (oracle, _, _) = run_oracle(&points, default_resolution(3), DEFAULT_RESIDUAL_TOL)?;
    let outcome = verify_bound(&a.bounds, &oracle, a.authority().authoritative);
    cases.push(SelftestCase {
        name: "coordinate_points_verify",
        passed: outcome.verdict == Verdict::Pass && outcome.authoritative && oracle.estimate == 3,
        detail: format!(
            "oracle {} refined_bound {} cap {}",
            outcome.oracle_estimate, outcome.refined_bound, outcome.theorem_cap
        ),
    });

    let all = cases.iter().all(|c| c.passed);
    write(&config.out, "selftest.json", &to_json(&cases))?;
    Ok(if all { EXIT_OK } else { EXIT_FAIL })
}

/// Runs the configured command; on error writes `error.json` when the output
/// directory is usable and returns the error with exit code 1.
pub fn run(config: &JobConfig) -> (i32, Option<CliError>) {
    let result = match config.command {
        Command::Analyze => run_analyze(config),
        Command::Trace => run_trace(config),
        Command::Verify => run_verify(config),
        Command::Selftest => selftest(config),
    };
    match result {
        Ok(code) => (code, None),
        Err(e) => {
            let _ = write(&config.out, "error.json", &error_json(config.command, &e));
            (EXIT_ERROR, Some(e))
        }
    }
}
