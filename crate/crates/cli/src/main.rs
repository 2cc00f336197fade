//! `qcbound`: eigenvalue lower bounds for quasiconformal images of the disc
//! and the square, checked against a finite-element oracle.
//!
//! JSON (or CSV for `sweep`) goes to stdout, a short table to stderr.
//! Exit codes: 0 ok, 1 sandwich violation, 2 no admissible beta, 3 parse
//! error, 4 mesh failure, 5 other failures.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcbound::maps::Source;
use qcbound::report::{self, DomainSpec, MapSpec, RunConfig, RunError};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "qcbound", version, about = "Neumann eigenvalue lower bounds for quasiconformal domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower bound for mu1 from the distortion and jacobian of the map.
    Bound(Run),
    /// Finite-element estimate of mu1 with Richardson extrapolation.
    Oracle(Run),
    /// Bound and oracle side by side; exit 1 if the bound exceeds mu1.
    Compare(Run),
    /// One row per k of a one-parameter family, as CSV.
    Sweep(Run),
    /// Numerical Poincare checks over monomials of degree <= 3.
    VerifyPoincare(Run),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Disc,
    Square,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Disc => Source::UnitDisc,
            SourceArg::Square => Source::CenteredSquare,
        }
    }
}

#[derive(Args, Debug)]
struct Run {
    /// TOML domain file; overrides the map flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// identity, radial-power, cardioid or moebius.
    #[arg(long)]
    family: Option<String>,
    /// Family parameter; for `sweep`, a range `A..B` or a list `a,b,c`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long, value_enum, default_value = "disc")]
    source: SourceArg,
    #[arg(long, allow_hyphen_values = true)]
    a_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 64.0)]
    beta_max: f64,
    #[arg(long, default_value_t = 1)]
    quad_level: u32,
    /// Inclusive range of mesh levels, e.g. `2..4`.
    #[arg(long, default_value = "2..4")]
    fem_levels: String,
    /// Also write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write the sweep table here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run the finite-element oracle in `sweep`.
    #[arg(long)]
    verify: bool,
    /// Attach Payne-Weinberger and the competing constant.
    #[arg(long)]
    baselines: bool,
}

impl Run {
    fn config(&self) -> Result<RunConfig, RunError> {
        Ok(RunConfig {
            beta_max: self.beta_max,
            quadrature_level: self.quad_level,
            fem_levels: report::parse_levels(&self.fem_levels)?,
            json: self.json.clone(),
            csv: self.csv.clone(),
            verify: self.verify,
            baselines: self.baselines,
        })
    }

    fn domain(&self) -> Result<DomainSpec, RunError> {
        if let Some(path) = &self.spec {
            let text = fs::read_to_string(path)
                .map_err(|e| RunError::Parse(format!("{}: {e}", path.display())))?;
            return DomainSpec::from_toml(&text);
        }
        let family = self.family.as_deref().unwrap_or("identity");
        let map = if family == "moebius" {
            MapSpec::Moebius {
                a_re: self.a_re.unwrap_or(0.0),
                a_im: self.a_im.unwrap_or(0.0),
                theta: self.theta.unwrap_or(0.0),
            }
        } else {
            MapSpec::from_family(family, self.single_k()?)?
        };
        DomainSpec::new(map, self.source.into())
    }

    fn single_k(&self) -> Result<Option<f64>, RunError> {
        self.k
            .as_deref()
            .map(|k| {
                k.parse::<f64>()
                    .map_err(|_| RunError::Parse(format!("bad --k value {k:?}")))
            })
            .transpose()
    }
}

fn emit_json(value: &Value, config: &RunConfig) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    println!("{text}");
    if let Some(path) = &config.json {
        fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn run(command: Command) -> Result<u8, RunError> {
    match command {
        Command::Bound(args) => {
            let config = args.config()?;
            let run = report::cmd_bound(&args.domain()?, &config)?;
            eprint!("{}", report::bound_summary(&run));
            emit_json(&report::bound_json(&run.domain, &run.report), &config)?;
            Ok(0)
        }
        Command::Oracle(args) => {
            let config = args.config()?;
            let spec = args.domain()?;
            let est = report::cmd_oracle(&spec, &config)?;
            eprint!("{}", report::oracle_summary(&est));
            emit_json(&report::oracle_json(&spec.name, &est), &config)?;
            Ok(0)
        }
        Command::Compare(args) => {
            let config = args.config()?;
            let run = report::cmd_compare(&args.domain()?, &config)?;
            eprint!("{}", report::compare_summary(&run));
            emit_json(&report::compare_json(&run), &config)?;
            Ok(if run.sandwich.hard_pass { 0 } else { 1 })
        }
        Command::Sweep(args) => {
            let config = args.config()?;
            let family = args
                .family
                .clone()
                .ok_or_else(|| RunError::Parse("sweep needs --family".into()))?;
            let ks = report::parse_k_values(args.k.as_deref().unwrap_or("0..4"))?;
            let rows = report::cmd_sweep(&family, &ks, args.source.into(), &config);
            let mut buf = Vec::new();
            report::write_sweep_csv(&rows, &mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
            if let Some(path) = &config.csv {
                fs::write(path, &buf)?;
            }
            let violated = rows.iter().any(|r| r.status == "sandwich_violation");
            Ok(if violated { 1 } else { 0 })
        }
        Command::VerifyPoincare(args) => {
            let config = args.config()?;
            let spec = args.domain()?;
            let rows = report::cmd_verify_poincare(&spec, &config)?;
            let failed = rows.iter().filter(|r| !r.pass).count();
            eprintln!("{} checks, {} failed", rows.len(), failed);
            emit_json(&report::poincare_json(&spec.name, &rows), &config)?;
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
