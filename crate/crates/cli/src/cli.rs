//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rmpower_core::power::{TestKind, DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_F, DEFAULT_POWER, DEFAULT_RHO};
use rmpower_core::mcvalidate::DEFAULT_REPLICATIONS;

use crate::csvio;
use crate::http::{self, ServerConfig};
use crate::report::{to_json, to_text, Report, ReportBody};
use crate::service::{self, AnovaOptions, CurveRequest, SimulateRequest, StudyRequest, DEFAULT_CURVE_N_MAX};
use crate::svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rmpower", version, about = "Power analysis and repeated-measures ANOVA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Hypothesis tested: between, within or interaction.
    #[arg(long)]
    pub kind: TestKind,
    /// Number of groups g.
    #[arg(long)]
    pub groups: usize,
    /// Number of repeated measurements t.
    #[arg(long)]
    pub times: usize,
    /// Correlation among repeated measures.
    #[arg(long, default_value_t = DEFAULT_RHO, allow_negative_numbers = true)]
    pub rho: f64,
    /// Nonsphericity correction epsilon.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Print the JSON report instead of text.
    #[arg(long)]
    pub json: bool,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Power at a given total sample size.
    Power {
        #[command(flatten)]
        design: DesignArgs,
        /// Effect size f.
        #[arg(long, default_value_t = DEFAULT_F)]
        f: f64,
        /// Total sample size N.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Smallest total sample size reaching the target power.
    Nsize {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = DEFAULT_F)]
        f: f64,
        /// Target power.
        #[arg(long, default_value_t = DEFAULT_POWER)]
        power: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Smallest effect size detectable at a given N.
    Mde {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_POWER)]
        power: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Power over a grid of effect sizes and sample sizes (CSV; optional SVG).
    Curve {
        #[command(flatten)]
        design: DesignArgs,
        /// Comma-separated effect sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        f: Vec<f64>,
        /// Smallest N (default 2g).
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_CURVE_N_MAX)]
        n_max: usize,
        /// Step between N values (default g).
        #[arg(long)]
        n_step: Option<usize>,
        /// Also draw the curves to this SVG file (CSV written alongside).
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Repeated-measures ANOVA on a wide or long CSV file.
    Anova {
        file: PathBuf,
        /// Add Greenhouse-Geisser adjusted p-values.
        #[arg(long)]
        gg: bool,
        /// Add Huynh-Feldt adjusted p-values.
        #[arg(long)]
        hf: bool,
        /// Add a Friedman rank test (one group only).
        #[arg(long)]
        friedman: bool,
        /// Add p-values adjusted with this epsilon.
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo check of the analytic power.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = DEFAULT_F)]
        f: f64,
        /// Total sample size (default: the required N for --power).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_POWER)]
        power: f64,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rewrite a long-format CSV (group,subject,time,value) in wide format.
    Convert {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Interface to listen on.
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        /// Port (default: $RMPOWER_PORT or 8707).
        #[arg(long)]
        port: Option<u16>,
        /// Directory with the browser UI.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Largest replication count accepted by /api/simulate.
        #[arg(long, default_value_t = service::DEFAULT_REPLICATION_CAP)]
        max_reps: usize,
    },
}

impl DesignArgs {
    fn request(&self, f: f64, power: f64, n: Option<usize>) -> StudyRequest {
        StudyRequest {
            kind: self.kind,
            g: self.groups,
            t: self.times,
            f,
            rho: self.rho,
            eps: self.eps,
            alpha: self.alpha,
            power,
            n,
        }
    }
}

fn emit(report: &Report, output: &OutputArgs, stdout: &mut dyn Write) -> Result<()> {
    let text = if output.json { to_json(report) } else { to_text(report) };
    match &output.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => stdout.write_all(text.as_bytes()).context("cannot write to stdout"),
    }
}

fn read_file(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn execute(cmd: Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Power { design, f, n, output } => {
            emit(&service::power(&design.request(f, DEFAULT_POWER, Some(n)))?, &output, stdout)
        }
        Command::Nsize {
            design,
            f,
            power,
            output,
        } => emit(&service::nsize(&design.request(f, power, None))?, &output, stdout),
        Command::Mde {
            design,
            n,
            power,
            output,
        } => emit(&service::mde(&design.request(DEFAULT_F, power, Some(n)))?, &output, stdout),
        Command::Curve {
            design,
            f,
            n_min,
            n_max,
            n_step,
            svg: svg_path,
            output,
        } => {
            let req = CurveRequest {
                kind: design.kind,
                g: design.groups,
                t: design.times,
                f_values: f,
                rho: design.rho,
                eps: design.eps,
                alpha: design.alpha,
                n_min,
                n_max,
                n_step,
            };
            let report = service::curve(&req)?;
            if let (Some(path), ReportBody::Curve(c)) = (&svg_path, &report.body) {
                let table = rmpower_core::power::CurveTable {
                    rows: c.rows.clone(),
                    skipped: c.skipped.clone(),
                };
                svg::emit_curve_svg(&table, path)?;
            }
            emit(&report, &output, stdout)
        }
        Command::Anova {
            file,
            gg,
            hf,
            friedman,
            eps,
            output,
        } => {
            let text = read_file(&file)?;
            let opts = AnovaOptions { gg, hf, friedman, eps };
            emit(&service::anova(&text, &opts)?, &output, stdout)
        }
        Command::Simulate {
            design,
            f,
            n,
            power,
            reps,
            seed,
            output,
        } => {
            let req = SimulateRequest {
                kind: design.kind,
                g: design.groups,
                t: design.times,
                f,
                rho: design.rho,
                eps: design.eps,
                alpha: design.alpha,
                power,
                n,
                reps,
                seed,
            };
            emit(&service::simulate(&req, usize::MAX)?, &output, stdout)
        }
        Command::Convert { file, out } => {
            let data = csvio::parse_csv(&read_file(&file)?)?;
            let text = csvio::to_wide_csv(&data);
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display())),
                None => stdout.write_all(text.as_bytes()).context("cannot write to stdout"),
            }
        }
        Command::Serve {
            bind,
            port,
            ui_dir,
            max_reps,
        } => {
            let port = http::resolve_port(port).map_err(anyhow::Error::msg)?;
            let cfg = ServerConfig {
                replication_cap: max_reps,
                ui_dir,
            };
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .context("cannot start the async runtime")?;
            let addr = SocketAddr::new(bind, port);
            writeln!(stdout, "serving on http://{addr}")?;
            stdout.flush()?;
            rt.block_on(http::serve(addr, cfg))
                .with_context(|| format!("cannot serve on {addr}"))
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return if code == EXIT_OK { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}
