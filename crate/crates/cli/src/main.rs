mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gspt_core::verify::Fault;

use config::{GridSpec, RunConfig};
use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "gspt",
    version,
    about = "Slow-fast parasite-host model experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate the full field from one or more initial conditions.
    Simulate,
    /// Report the regime case and predicted attractor.
    Classify,
    /// DFE and endemic equilibrium with stability.
    Equilibria,
    /// Emit the nullcline branches as CSV.
    Nullclines,
    /// Sweep beta and track the endemic branch.
    Sweep,
    /// Check the blow-up chart algebra and section transits.
    BlowupVerify,
    /// Produce the data behind one figure (fig4, fig5, fig6, fig7).
    Figure { name: String },
    /// Run the invariant suite.
    Selfcheck,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $GSPT_OUT_DIR or ./gspt-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    d: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    tol_rel: Option<f64>,
    #[arg(long, global = true)]
    tol_abs: Option<f64>,
    #[arg(long, global = true)]
    t_max: Option<f64>,
    /// Single initial condition; needs --v0 as well.
    #[arg(long, global = true, allow_negative_numbers = true)]
    u0: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    v0: Option<f64>,
    #[arg(long, global = true)]
    grid_nu: Option<usize>,
    #[arg(long, global = true)]
    grid_nv: Option<usize>,
    #[arg(long, global = true)]
    grid_jitter: Option<f64>,
    #[arg(long, global = true)]
    beta_min: Option<f64>,
    #[arg(long, global = true)]
    beta_max: Option<f64>,
    /// Sample count (sweep points, curve points, fig4 grid side, fig5 launches).
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, hide = true)]
    inject_fault: Option<String>,
}

impl Flags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        macro_rules! set {
            ($($f:ident => $c:ident),* $(,)?) => {
                $(if let Some(x) = self.$f.clone() { cfg.$c = Some(x); })*
            };
        }
        set!(preset => preset, alpha => alpha, theta => theta, beta => beta, d => d, eps => eps,
             tol_rel => rel_tol, tol_abs => abs_tol, t_max => t_max, beta_min => beta_min,
             beta_max => beta_max, n => n, out => out);
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        match (self.u0, self.v0) {
            (Some(u), Some(v)) => cfg.ics = vec![[u, v]],
            (None, None) => {}
            _ => return Err(CliError::Config("--u0 and --v0 go together".into())),
        }
        if self.grid_nu.is_some() || self.grid_nv.is_some() || self.grid_jitter.is_some() {
            let g = cfg.grid.get_or_insert_with(GridSpec::default);
            if let Some(n) = self.grid_nu {
                g.nu = n;
            }
            if let Some(n) = self.grid_nv {
                g.nv = n;
            }
            if let Some(j) = self.grid_jitter {
                g.jitter = j;
            }
        }
        Ok(())
    }

    fn fault(&self) -> Result<Fault> {
        match self.inject_fault.as_deref() {
            None => Ok(Fault::None),
            Some("chart-field") => Ok(Fault::ChartField),
            Some(f) => Err(CliError::Config(format!("unknown fault '{f}'"))),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.flags.apply(&mut cfg)?;
    match &cli.cmd {
        Cmd::Simulate => commands::simulate(&cfg),
        Cmd::Classify => commands::classify(&cfg),
        Cmd::Equilibria => commands::equilibria(&cfg),
        Cmd::Nullclines => commands::nullclines(&cfg),
        Cmd::Sweep => commands::sweep(&cfg),
        Cmd::BlowupVerify => commands::blowup_verify(&cfg),
        Cmd::Figure { name } => commands::figure(name, &cfg),
        Cmd::Selfcheck => commands::selfcheck_cmd(&cfg, cli.flags.fault()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gspt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
