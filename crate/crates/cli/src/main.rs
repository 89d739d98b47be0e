use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skt_rom::config::{ExperimentConfig, RomMode};
use skt_rom::experiment::{self, rom_dir_name, ExperimentReport, Method, RunKind};
use skt_rom::{Result, SktError};

/// Environment variable that relocates every output directory.
const OUTPUT_ROOT_VAR: &str = "SKT_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "skt", version, about = "Full- and reduced-order SKT experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed of the random initial perturbation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Only log errors and print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Run the full-order model only.
    Fom,
    /// Full-order run followed by the configured reduction.
    Rom,
    /// Full-order run followed by every RIC tolerance of the sweep list.
    Sweep,
    /// Integrate persisted reduced models again without the full-order model.
    Replay {
        /// Directory holding the models and their manifest.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Collect the convergence tables of finished runs into one CSV.
    Tables {
        /// Run directories; defaults to the resolved output directory.
        dirs: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| SktError::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.initial.seed = seed;
    }
    Ok(cfg)
}

/// `--out`, else the configured directory under the output root, else the
/// configured directory itself.
fn output_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    if let Some(out) = &cli.out {
        return Ok(out.clone());
    }
    let cfg = cfg.ok_or_else(|| SktError::Config("either --out or --config is required".into()))?;
    Ok(match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => Path::new(&root).join(&cfg.output.dir),
        None => cfg.output.dir.clone(),
    })
}

fn print_report(report: &ExperimentReport, out: &Path) {
    let f = &report.fom;
    println!("{}: {} nodes, {} steps to t = {}", report.name, report.n_states, f.steps, f.final_time);
    match f.steady_time {
        Some(t) => println!("  steady state at t = {t}"),
        None => println!("  no steady state before the horizon"),
    }
    if let Some(t) = f.transition_time {
        println!("  density transition at t = {t}");
    }
    println!("  pattern amplitude {:.4e}, entropy decreasing: {}", f.pattern_amplitude, f.entropy_decreasing);
    for r in &report.roms {
        let modes: Vec<String> = r.modes.iter().map(|(a, b)| format!("{a}({b})")).collect();
        println!(
            "  {} tol {:e}: modes {} error-u {:.3e} error-v {:.3e} final {:.3e} {:.3e}",
            r.method.label(),
            r.tol_ric,
            modes.join(" / "),
            r.error_u,
            r.error_v,
            r.final_error_u,
            r.final_error_v
        );
    }
    println!("  artifacts in {}", out.display());
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.verb {
        Verb::Fom | Verb::Rom | Verb::Sweep => {
            let cfg = load_config(cli)?;
            let out = output_dir(cli, Some(&cfg))?;
            let kind = match cli.verb {
                Verb::Fom => RunKind::Fom,
                Verb::Rom => RunKind::Rom,
                _ => RunKind::Sweep,
            };
            let report = experiment::run_experiment(&cfg, kind, Some(&out))?;
            if !cli.quiet {
                print_report(&report, &out);
            }
        }
        Verb::Replay { model } => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let model_dir = match (model, &cfg) {
                (Some(m), _) => m.clone(),
                (None, Some(c)) => {
                    let method = match c.rom.mode {
                        RomMode::Gpod => Method::Gpod,
                        RomMode::Ppod => Method::Ppod,
                        RomMode::None => {
                            return Err(SktError::Config("replay needs rom.mode gpod or ppod".into()))
                        }
                    };
                    output_dir(cli, cfg.as_ref())?.join(rom_dir_name(method, c.rom.tol_ric))
                }
                (None, None) => return Err(SktError::Config("replay needs --model or --config".into())),
            };
            let out = cli.out.as_ref().filter(|_| model.is_some() || cfg.is_none());
            let report = experiment::replay(&model_dir, out.map(PathBuf::as_path))?;
            if !cli.quiet {
                println!(
                    "{} tol {:e}: {} samples to t = {} in {:.3}s",
                    report.method.label(),
                    report.tol_ric,
                    report.samples,
                    report.final_time,
                    report.online_secs
                );
                if let Some(d) = report.max_deviation {
                    println!("  max deviation from the recorded trajectory {d:e}");
                }
            }
        }
        Verb::Tables { dirs } => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let out = output_dir(cli, cfg.as_ref())?;
            let dirs = if dirs.is_empty() { vec![out.clone()] } else { dirs.clone() };
            std::fs::create_dir_all(&out)?;
            let path = out.join("tables.csv");
            let rows = experiment::collect_tables(&dirs, &path)?;
            if !cli.quiet {
                println!("{rows} rows written to {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
