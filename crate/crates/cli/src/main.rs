use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kpp_core::eigen::{principal_eigen, RouteChoice};
use kpp_core::fields::{parse_expression, CellGeometry, CoefficientSet, PeriodicField, ScalarFn};
use kpp_core::operator::Grid;
use kpp_core::speed::{spreading_speed, SpeedOptions};
use kpp_speed::report::{file_stem, snapshots_csv};
use kpp_speed::{load_scenario, run_with_artifacts, write_report, Format, Scenario};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kpp-speed", version, about = "Principal eigenvalues and spreading speeds of periodic KPP problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        /// Worker threads for sweep rows (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Seed of randomized sweeps; overrides `[sweep] seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write `t,x_index,u` snapshots of Cauchy runs.
        #[arg(long)]
        snapshots: bool,
    },
    /// Principal eigenvalue `k_λ` for one set of coefficients.
    Eig {
        #[command(flatten)]
        problem: Problem,
        /// Wavevector, comma separated.
        #[arg(long, default_value = "0", value_delimiter = ',', allow_negative_numbers = true)]
        lambda: Vec<f64>,
    },
    /// Spreading speed `c*_e` for one set of coefficients.
    Speed {
        #[command(flatten)]
        problem: Problem,
        /// Unit direction, comma separated.
        #[arg(long, default_value = "1", value_delimiter = ',', allow_negative_numbers = true)]
        e: Vec<f64>,
        /// Also minimize over ray directions (2D).
        #[arg(long)]
        refine: bool,
    },
}

#[derive(Args)]
struct Problem {
    /// Diffusion: one formula for `a·I`, or three (`a11 a12 a22`) in 2D.
    #[arg(long = "A", num_args = 1.., default_value = "1")]
    a: Vec<String>,
    /// Drift, one formula per axis (default zero).
    #[arg(long = "q", num_args = 1..)]
    q: Vec<String>,
    /// Growth rate.
    #[arg(long = "mu", default_value = "1")]
    mu: String,
    /// Time period.
    #[arg(long = "T", default_value_t = 1.0)]
    period: f64,
    /// Cell lengths, comma separated; their count sets the dimension.
    #[arg(long = "L", default_value = "1", value_delimiter = ',')]
    lengths: Vec<f64>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Time steps per period (default: n).
    #[arg(long)]
    nt: Option<usize>,
    /// Named parameter `name=value`, repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long, value_enum, default_value = "auto")]
    route: RouteArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RouteArg {
    Auto,
    Steady,
    Floquet,
}

impl From<RouteArg> for RouteChoice {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Auto => RouteChoice::Auto,
            RouteArg::Steady => RouteChoice::Steady,
            RouteArg::Floquet => RouteChoice::Floquet,
        }
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

impl Problem {
    fn build(&self) -> Result<(CoefficientSet, Grid)> {
        let geometry = CellGeometry::new(self.period, &self.lengths)?;
        let dim = geometry.dim();
        let params: BTreeMap<String, f64> = self.params.iter().cloned().collect();
        let parse = |flag: &str, s: &str| -> Result<ScalarFn> {
            parse_expression(s, &params)
                .map(ScalarFn::expr)
                .with_context(|| format!("--{flag} \"{s}\""))
        };
        let diffusion = match (dim, self.a.len()) {
            (_, 1) => PeriodicField::isotropic(&geometry, parse("A", &self.a[0])?)?,
            (2, 3) => PeriodicField::matrix(&geometry, self.a.iter().map(|s| parse("A", s)).collect::<Result<_>>()?)?,
            (d, k) => bail!("--A: {k} formulas do not fit a {d}D cell"),
        };
        let q: Vec<String> = if self.q.is_empty() { vec!["0".into(); dim] } else { self.q.clone() };
        if q.len() != dim {
            bail!("--q: {} formulas for a {dim}D cell", q.len());
        }
        let drift = PeriodicField::vector(&geometry, q.iter().map(|s| parse("q", s)).collect::<Result<_>>()?)?;
        let growth = PeriodicField::scalar(&geometry, parse("mu", &self.mu)?)?;
        let coeffs = CoefficientSet::new(diffusion, drift, growth)?;
        let grid = Grid::new(&geometry, &vec![self.n; dim], self.nt.unwrap_or(self.n))?;
        Ok((coeffs, grid))
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            format,
            jobs,
            seed,
            snapshots,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.file.sweep.seed = Some(seed);
            }
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
            let (report, artifacts) = pool.install(|| run_with_artifacts(&s))?;
            let dir = out
                .or_else(|| s.file.output.dir.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            let format = format.unwrap_or(s.file.output.format);
            for a in &report.assertions {
                let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.10e}"));
                println!(
                    "{:<13} {}  [{} {} {}, tol {:e}]",
                    a.verdict.to_string(),
                    a.label,
                    show(a.left),
                    a.relation.symbol(),
                    show(a.right),
                    a.tolerance
                );
            }
            for r in report.rows.iter().filter(|r| r.error.is_some()) {
                println!("row error     {}: {}", r.label, r.error.as_deref().unwrap_or_default());
            }
            let mut written = write_report(&report, format, &dir)?;
            if snapshots || s.file.output.snapshots {
                written.extend(write_snapshots(&s, &artifacts.snapshots, &dir)?);
            }
            for p in &written {
                println!("wrote {}", p.display());
            }
            let failed = report.failures();
            println!(
                "{}: {} assertions, {} failed, {:.2} s",
                report.name,
                report.assertions.len(),
                failed,
                report.seconds
            );
            Ok(if failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Eig { problem, lambda } => {
            let (coeffs, grid) = problem.build()?;
            let r = principal_eigen(&coeffs, &lambda, &grid, problem.route.into())?;
            println!("k = {}", r.k);
            println!("bounds = [{}, {}]", r.lower, r.upper);
            println!("route = {:?}", r.route);
            println!("iterations = {}", r.iterations);
            Ok(ExitCode::SUCCESS)
        }
        Command::Speed { problem, e, refine } => {
            let (coeffs, grid) = problem.build()?;
            let opts = SpeedOptions {
                route: problem.route.into(),
                refine,
                ..SpeedOptions::default()
            };
            let r = spreading_speed(&coeffs, &e, &grid, &opts)?;
            println!("c_star = {}", r.c_star);
            println!("ray_c_star = {}", r.ray_c_star);
            println!("lambda_star = {:?}", r.lambda_star);
            println!("route = {:?}", r.route);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_snapshots(s: &Scenario, snaps: &[(String, kpp_speed::experiments::Snapshots)], dir: &std::path::Path) -> Result<Vec<PathBuf>> {
    let stem = file_stem(&s.file.name);
    let mut out = Vec::new();
    for (label, data) in snaps {
        let p = dir.join(format!("{stem}.{}.snapshots.csv", file_stem(label)));
        std::fs::write(&p, snapshots_csv(data)?).with_context(|| format!("writing {}", p.display()))?;
        out.push(p);
    }
    Ok(out)
}
