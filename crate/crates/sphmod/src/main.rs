use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sphmod::approximation::{best_approx_curve, random_ball_points, random_sphere_points, vn_mu_operator, vn_operator};
use sphmod::core_math::Domain;
use sphmod::error::Error;
use sphmod::poly::Polynomial;
use sphmod::quadrature::{ball_rule, sphere_rule};
use sphmod::rates::{
    catalog, fit_loglog, run_example, write_curve_csv, CurveMeta, ExampleId, ExampleSpec, Provenance, Quantity,
    RateCurve,
};
use sphmod::smoothness::NormQuadrature;
use sphmod::verify::{run_suite, SuiteOptions};

#[derive(Parser)]
#[command(name = "sphmod", version, about = "Moduli of smoothness and polynomial approximation on spheres and balls")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Modulus curve of a catalog function, with a log-log fit.
    Modulus(RunArgs),
    /// Best-approximation curve `E_n`, with a log-log fit.
    Approx(RunArgs),
    /// Seeded invariant suite; exits 2 if any check fails.
    Verify(RunArgs),
    /// Lists the example ids and their admissible parameters.
    Catalog,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    example: Option<ExampleId>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Per-coordinate exponents for S1, B3 and E1, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha_vec: Option<Vec<f64>>,
    #[arg(long)]
    r: Option<usize>,
    /// Norm of the pole `y_0` for S4, B1, E4 and E6.
    #[arg(long, allow_negative_numbers = true)]
    y0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tmin: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tmax: Option<f64>,
    #[arg(long)]
    tsteps: Option<usize>,
    /// Largest degree; the degrees are the multiples of 4 from 8 to this.
    #[arg(long)]
    nmax: Option<usize>,
    /// Nodes per panel of the graded rules; exact degree of the rules in `verify`.
    #[arg(long)]
    quad_degree: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the CSV here and the JSON report next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// A JSON run config, or an output file whose embedded config is rerun.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the example function by a seeded random polynomial of this degree.
    #[arg(long)]
    poly_degree: Option<usize>,
    /// Adds `‖V_k P - P‖_∞` for the polynomial input to the report.
    #[arg(long)]
    reproduce: bool,
    /// Multiplies every tolerance in `verify`.
    #[arg(long, allow_negative_numbers = true)]
    tol_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    Modulus,
    Approx,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Modulus => "modulus",
            Command::Approx => "approx",
            Command::Verify => "verify",
        }
    }
}

/// Everything a run depends on; embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    command: Command,
    example: ExampleSpec,
    poly_degree: Option<usize>,
    reproduce: bool,
    quad_degree: Option<usize>,
    tol_scale: f64,
    #[serde(skip_serializing)]
    out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Modulus,
            example: ExampleSpec::default(),
            poly_degree: None,
            reproduce: false,
            quad_degree: None,
            tol_scale: 1.0,
            out: None,
        }
    }
}

enum Failure {
    Validation(String),
    Assertion(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::NonFinite { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Cmd::Catalog => print_catalog(),
        Cmd::Modulus(a) => resolve(Command::Modulus, a).and_then(|c| run_curve(&c)),
        Cmd::Approx(a) => resolve(Command::Approx, a).and_then(|c| run_curve(&c)),
        Cmd::Verify(a) => resolve(Command::Verify, a).and_then(|c| run_verify(&c)),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("assertion failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}

fn print_catalog() -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    for e in catalog() {
        let q = match e.quantity {
            Quantity::Modulus => "modulus",
            Quantity::DiscIntegral => "modulus",
            Quantity::BestApprox => "approx",
        };
        writeln!(out, "{:<3} {:<8} {:<48} {}", e.id, q, e.strip, e.description).map_err(io_fail)?;
    }
    Ok(())
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::Validation(format!("{}: {e}", path.display()));
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# provenance ")) {
        let prov: Provenance<RunConfig> = serde_json::from_str(line).map_err(bad)?;
        return Ok(prov.config);
    }
    let v: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let v = match (v.get("provenance"), v.get("config")) {
        (Some(p), _) => p.get("config").cloned().unwrap_or(serde_json::Value::Null),
        (None, Some(c)) if v.get("version").is_some() => c.clone(),
        _ => v,
    };
    serde_json::from_value(v).map_err(bad)
}

fn resolve(command: Command, a: RunArgs) -> CliResult<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let c = load_config(path)?;
            if c.command != command {
                return Err(Failure::Validation(format!("{} holds a `{}` config", path.display(), c.command.name())));
            }
            c
        }
        None => {
            let id = a.example.unwrap_or(match command {
                Command::Approx => ExampleId::E2,
                _ => ExampleId::S2,
            });
            RunConfig { command, example: ExampleSpec::new(id), ..RunConfig::default() }
        }
    };
    let s = &mut cfg.example;
    if let (Some(id), Some(_)) = (a.example, &a.config) {
        s.id = id;
    }
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {$( if let Some(v) = a.$flag.clone() { $field = v; } )*};
    }
    set!(d => s.d, p => s.p, mu => s.mu, alpha => s.alpha, r => s.r, y0 => s.y0_norm,
         tmin => s.tmin, tmax => s.tmax, tsteps => s.tsteps, seed => s.seed);
    if let Some(v) = a.alpha_vec {
        s.alpha_vec = Some(v);
    }
    if let Some(n) = a.nmax {
        if n < 8 {
            return Err(Failure::Validation(format!("--nmax must be >= 8, got {n}")));
        }
        s.ns = (2..=n / 4).map(|k| 4 * k).collect();
    }
    if let Some(q) = a.quad_degree {
        if q == 0 {
            return Err(Failure::Validation("--quad-degree must be >= 1".into()));
        }
        cfg.quad_degree = Some(q);
        if command != Command::Verify {
            cfg.example.quad.points_per_panel = q;
        }
    }
    if a.poly_degree.is_some() {
        cfg.poly_degree = a.poly_degree;
    }
    cfg.reproduce |= a.reproduce;
    if let Some(t) = a.tol_scale {
        cfg.tol_scale = t;
    }
    cfg.out = a.out;
    check_config(&cfg)?;
    Ok(cfg)
}

fn check_config(cfg: &RunConfig) -> CliResult<()> {
    let id = cfg.example.id;
    let invalid = |m: String| Err(Failure::Validation(m));
    match cfg.command {
        Command::Modulus if id.quantity() == Quantity::BestApprox => {
            invalid(format!("{id} is a best-approximation example; use `approx`"))
        }
        Command::Approx if id.quantity() != Quantity::BestApprox => {
            invalid(format!("{id} is a modulus example; use `modulus`"))
        }
        Command::Modulus if cfg.poly_degree.is_some() || cfg.reproduce => {
            invalid("--poly-degree and --reproduce belong to `approx`".into())
        }
        Command::Approx if cfg.reproduce && cfg.poly_degree.is_none() => {
            invalid("--reproduce needs --poly-degree".into())
        }
        Command::Verify if !(cfg.tol_scale > 0.0 && cfg.tol_scale.is_finite()) => {
            invalid(format!("--tol-scale must be positive, got {}", cfg.tol_scale))
        }
        Command::Verify => Ok(()),
        _ if cfg.poly_degree.is_some() => {
            let s = &cfg.example;
            if s.p.is_nan() || s.p < 1.0 {
                return invalid(format!("p must lie in [1, ∞], got {}", s.p));
            }
            if s.ns.len() < 4 || s.ns.windows(2).any(|w| w[1] <= w[0]) || s.ns[0] == 0 {
                return invalid("need at least 4 increasing degrees".into());
            }
            Ok(())
        }
        _ => Ok(cfg.example.validate()?),
    }
}

fn io_fail(e: std::io::Error) -> Failure {
    Failure::Validation(format!("cannot write output: {e}"))
}

fn json_string<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Numerical(e.to_string()))
}

/// Writes the CSV and the JSON report to `--out` or to stdout and stderr.
fn emit(cfg: &RunConfig, csv: Option<&[u8]>, report: &str) -> CliResult<()> {
    match &cfg.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_fail)?;
            }
            match csv {
                Some(bytes) => {
                    fs::write(path, bytes).map_err(io_fail)?;
                    fs::write(path.with_extension("json"), format!("{report}\n")).map_err(io_fail)?;
                }
                None => fs::write(path, format!("{report}\n")).map_err(io_fail)?,
            }
            Ok(())
        }
        None => {
            match csv {
                Some(bytes) => {
                    std::io::stdout().write_all(bytes).map_err(io_fail)?;
                    eprintln!("{report}");
                }
                None => println!("{report}"),
            }
            Ok(())
        }
    }
}

fn run_curve(cfg: &RunConfig) -> CliResult<()> {
    let prov = Provenance::new(cfg.clone(), cfg.example.seed);
    let (curve, mut report) = match cfg.poly_degree {
        Some(k) => polynomial_curve(cfg, k)?,
        None => {
            let run = run_example(&cfg.example)?;
            let report = json!({
                "fit": run.fit,
                "expected": run.expected,
                "quad_error": run.quad_error,
            });
            (run.curve, report)
        }
    };
    report["provenance"] = serde_json::to_value(&prov).map_err(|e| Failure::Numerical(e.to_string()))?;
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &curve, &prov)?;
    emit(cfg, Some(&buf), &json_string(&report)?)
}

fn polynomial_curve(cfg: &RunConfig, k: usize) -> CliResult<(RateCurve, serde_json::Value)> {
    let s = &cfg.example;
    let domain = if s.id.on_sphere() { Domain::Sphere(s.d) } else { Domain::Ball(s.d) };
    let poly = Polynomial::random(s.d, k, s.seed);
    let f = poly.to_handle(domain)?;
    let vals = best_approx_curve(&f, &s.ns, s.p, &NormQuadrature::auto(&f, s.p), s.approx_variant())?;
    let meta = CurveMeta {
        example: s.id,
        quantity: Quantity::BestApprox,
        d: s.d,
        p: s.p,
        mu: s.mu,
        alpha: vec![],
        r: s.r,
        y0_norm: None,
    };
    let curve = RateCurve::new(s.ns.iter().map(|&n| n as f64).zip(vals).collect(), meta)?;
    let mut report = json!({ "function": format!("random polynomial of degree {k} in {} variables", s.d) });
    if curve.samples.iter().all(|&(_, v)| v == 0.0) {
        report["note"] = json!("exact reproduction: E_n vanishes for every n above the degree");
    } else {
        report["fit"] = match fit_loglog(&curve, None) {
            Ok(fit) => json!(fit),
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    if cfg.reproduce {
        let n = k.max(1);
        let (g, pts) = match domain {
            Domain::Sphere(d) => {
                (vn_operator(&f, n, &sphere_rule(d, 3 * n + 2)?)?, random_sphere_points(d, 32, s.seed))
            }
            _ => (
                vn_mu_operator(&f, n, s.mu, &ball_rule(s.d, s.mu, 3 * n + 2)?)?,
                random_ball_points(s.d, 32, 1.0, s.seed),
            ),
        };
        let residual = pts.iter().map(|x| (g.eval(x) - f.eval(x)).abs()).fold(0.0, f64::max);
        report["reproduction"] = json!({ "n": n, "sup_residual": residual, "points": pts.len() });
    }
    Ok((curve, report))
}

fn run_verify(cfg: &RunConfig) -> CliResult<()> {
    let opts = SuiteOptions {
        seed: cfg.example.seed,
        tol_scale: cfg.tol_scale,
        quad_degree: cfg.quad_degree.unwrap_or(SuiteOptions::default().quad_degree),
    };
    let report = run_suite(&opts)?;
    let prov = Provenance::new(cfg.clone(), cfg.example.seed);
    let text = json_string(&json!({ "report": report, "provenance": prov }))?;
    emit(cfg, None, &text)?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Assertion(format!("failed checks: {}", failed.join(", "))))
    }
}
