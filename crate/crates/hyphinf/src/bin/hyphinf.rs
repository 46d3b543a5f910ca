//! `hyphinf`: H-infinity synthesis for boundary-controlled transport PDEs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyphinf::cli::{self, RunConfig};
use hyphinf::string_example::StringParams;

#[derive(Parser)]
#[command(
    name = "hyphinf",
    about = "Suboptimal H-infinity synthesis for boundary-controlled transport PDEs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Plant description (JSON).
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Performance level gamma.
    #[arg(long)]
    gamma: Option<f64>,
    /// Free parameter: a state-space JSON file, or "zero".
    #[arg(long, default_value = "zero")]
    sigma_q: String,
    /// Reuse a previously synthesized controller (JSON) instead of solving.
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Frequency-grid resolution.
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    /// Spatial cells for simulation.
    #[arg(long, default_value_t = 256)]
    cells: usize,
    /// Simulation steps (boundary reflections).
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

impl CommonArgs {
    fn into_config(self, default_gamma: f64) -> RunConfig {
        RunConfig {
            plant_path: self.plant,
            gamma: self.gamma.unwrap_or(default_gamma),
            sigma_q_path: match self.sigma_q.as_str() {
                "zero" => None,
                path => Some(PathBuf::from(path)),
            },
            controller_path: self.controller,
            out_dir: self.out,
            grid: self.grid,
            cells: self.cells,
            steps: self.steps,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Well-posedness, discrete form and rank-condition checks.
    Check(CommonArgs),
    /// Full synthesis: controller.json + synthesis_report.json.
    Synthesize(CommonArgs),
    /// Closed-loop frequency response CSV and supremum summary.
    Freqresp(CommonArgs),
    /// Closed-loop simulation traces and reconstruction CSV.
    Simulate(CommonArgs),
    /// The vibrating-string benchmark with its comparison report.
    StringExample {
        #[command(flatten)]
        common: CommonArgs,
        /// Mass density of the string.
        #[arg(long, default_value_t = 1.0 / 6.0)]
        rho: f64,
        /// Young's modulus of the string.
        #[arg(long, default_value_t = 1.0 / 6.0)]
        t_mod: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(args) => cli::cmd_check(&args.into_config(1.0)),
        Command::Synthesize(args) => cli::cmd_synthesize(&args.into_config(1.0)),
        Command::Freqresp(args) => cli::cmd_freqresp(&args.into_config(1.0)),
        Command::Simulate(args) => cli::cmd_simulate(&args.into_config(1.0)),
        Command::StringExample { common, rho, t_mod } => {
            let params = StringParams {
                rho,
                t_mod,
                gamma: common.gamma.unwrap_or(0.2),
                ..StringParams::default()
            };
            cli::cmd_string_example(&common.into_config(params.gamma), &params)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("hyphinf: {e}");
            ExitCode::from(cli::exit_code_for(&e) as u8)
        }
    }
}
