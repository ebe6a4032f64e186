use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use radwave::{run, Command, ProfileFamily, RunConfig};

#[derive(Parser)]
#[command(
    name = "radwave",
    version,
    about = "Radial wave operators for weakly coupled systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML file with [exponents] [data] [grid] [solver] [output] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    p: Option<f64>,

    #[arg(long, global = true)]
    q: Option<f64>,

    /// `κ1` override for p = 2.
    #[arg(long, global = true)]
    kappa1: Option<f64>,

    #[arg(long, global = true)]
    eps: Option<f64>,

    /// Comma-separated amplitudes for `rates`.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,

    #[arg(long, global = true, value_enum)]
    family: Option<Family>,

    #[arg(long, global = true)]
    r_max: Option<f64>,

    #[arg(long, global = true)]
    t_max: Option<f64>,

    /// Characteristic cells along [0, t_max].
    #[arg(long, global = true)]
    cells: Option<usize>,

    #[arg(long, global = true)]
    horizon: Option<f64>,

    #[arg(long, global = true)]
    tol: Option<f64>,

    #[arg(long, global = true)]
    max_iters: Option<usize>,

    #[arg(long, global = true)]
    ratio_bound: Option<f64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write full field snapshots.
    #[arg(long, global = true)]
    fields: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Initial value problem from the configured data.
    Forward,
    /// Wave operator (generalized for 1 < p <= 2) with diagnostics.
    Final,
    /// Scattering map and round trip.
    Scatter,
    /// Decay exponents and amplitude scaling from an ε pair.
    Rates,
    /// Invariant suite on the configured cell count.
    Verify,
}

#[derive(ValueEnum, Clone, Copy)]
enum Family {
    Gaussian,
    Algebraic,
}

impl Cli {
    fn config(&self) -> radwave::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.exponents.p, self.p);
        set(&mut c.exponents.q, self.q);
        if self.kappa1.is_some() {
            c.exponents.kappa1 = self.kappa1;
        }
        set(&mut c.data.eps, self.eps);
        if let Some(list) = &self.eps_list {
            c.data.eps_list = list.clone();
        }
        if let Some(f) = self.family {
            let fam = match f {
                Family::Gaussian => ProfileFamily::Gaussian,
                Family::Algebraic => ProfileFamily::Algebraic,
            };
            c.data.family1 = fam;
            c.data.family2 = fam;
        }
        set(&mut c.grid.r_max, self.r_max);
        set(&mut c.grid.t_max, self.t_max);
        if let Some(n) = self.cells {
            c.grid.cells = n;
        }
        if self.horizon.is_some() {
            c.grid.horizon = self.horizon;
        }
        set(&mut c.solver.tol, self.tol);
        if let Some(n) = self.max_iters {
            c.solver.max_iters = n;
        }
        set(&mut c.solver.ratio_bound, self.ratio_bound);
        if let Some(dir) = &self.out {
            c.output.dir = dir.clone();
        }
        c.output.fields |= self.fields;
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Cmd::Forward => Command::Forward,
        Cmd::Final => Command::Final,
        Cmd::Scatter => Command::Scatter,
        Cmd::Rates => Command::Rates,
        Cmd::Verify => Command::Verify,
    };
    match cli.config().and_then(|c| run(&c, cmd)) {
        Ok(summary) => {
            for f in &summary.fitted_exponents {
                match f.observed {
                    Some(o) => println!(
                        "{}: slope {o:.3}, expected {:.3} ({})",
                        f.label,
                        f.expected,
                        if f.passed { "pass" } else { "fail" }
                    ),
                    None => println!("{}: no fit", f.label),
                }
            }
            for s in &summary.scaling_ratios {
                println!(
                    "{}: power {}, expected {:.3}",
                    s.label,
                    s.observed.map_or("n/a".into(), |o| format!("{o:.3}")),
                    s.expected
                );
            }
            for (name, v) in &summary.values {
                println!("{name}: {v:e}");
            }
            for c in &summary.checks {
                println!(
                    "{} {}: {:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
