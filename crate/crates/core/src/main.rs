use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use qpdephase::harness::{self, Bundle, ExperimentConfig, Regime, SweepKind, WALK_SPECTRUM_HEADER};
use qpdephase::spectra::Generator;
use qpdephase::Result;

#[derive(Parser)]
#[command(name = "qpdephase", version, about = "Dephasing and localization in quasiperiodic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: config `output`, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues, IPR and mobility edge of the configured operator.
    Spectrum {
        /// Also write the dense matrix.
        #[arg(long)]
        matrix: bool,
    },
    /// Single-site excitation in the configured regime.
    Dynamics,
    /// Markov matrix spectrum and classical spreading.
    Markov {
        #[arg(long)]
        matrix: bool,
    },
    /// Full Liouvillian spectrum.
    Liouvillian,
    /// Walk propagator spectrum and intensity spreading.
    Walk,
    /// Resumable kappa sweep.
    Sweep,
    /// Finite-size scaling of tracked states.
    Scaling,
    /// Reproduce a figure preset; `--config` keys override the preset.
    Figure { id: String },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.command, &cli.config) {
        (Command::Figure { id }, path) => ExperimentConfig::with_overrides(id, path.as_deref())?,
        (_, Some(path)) => ExperimentConfig::load(path)?,
        (_, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    cfg.resolved()
}

fn execute(cli: &Cli) -> Result<Bundle> {
    let cfg = load(cli)?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let dir: &Path = &out;
    if let Command::Figure { id } = &cli.command {
        return harness::run_figure(id, &cfg, dir);
    }
    let mut b = Bundle::create(dir)?;
    let (name, summary) = match &cli.command {
        Command::Spectrum { matrix } => {
            let lat = cfg.lattice()?;
            if *matrix {
                harness::export_matrix(lat, cfg.spectrum.generator, &mut b, "spectrum")?;
            }
            ("spectrum", json!(harness::run_spectrum(&cfg, lat, cfg.spectrum.generator, &mut b, "spectrum")?))
        }
        Command::Dynamics => {
            ("dynamics", json!(harness::run_dynamics(&cfg, cfg.lattice()?, cfg.dynamics.regime, &mut b, "dynamics")?))
        }
        Command::Markov { matrix } => {
            let lat = cfg.lattice()?;
            let gen = Generator::Markov { gamma: cfg.dynamics.gamma };
            if *matrix {
                harness::export_matrix(lat, gen, &mut b, "markov")?;
            }
            let s = harness::run_spectrum(&cfg, lat, gen, &mut b, "markov")?;
            let d = harness::run_dynamics(&cfg, lat, Regime::Markov, &mut b, "markov")?;
            ("markov", json!({ "spectrum": s, "dynamics": d }))
        }
        Command::Liouvillian => {
            let c = &cfg.liouvillian;
            ("liouvillian", json!(harness::run_liouvillian(cfg.lattice()?, c.gamma, c.cap, &mut b, "liouvillian")?))
        }
        Command::Walk => {
            let mut rows = Vec::new();
            let s = harness::run_walk_spectrum(&cfg, cfg.walk.kappa, &mut rows)?;
            b.table("walk_spectrum.csv", &WALK_SPECTRUM_HEADER.map(String::from), &rows)?;
            let d = harness::run_walk_dynamics(&cfg, cfg.walk.kappa, &mut b, "walk")?;
            ("walk", json!({ "spectrum": s, "dynamics": d }))
        }
        Command::Sweep => match cfg.sweep.kind {
            SweepKind::Markov => ("sweep", json!(harness::run_markov_sweep(&cfg, &mut b, "sweep")?)),
            SweepKind::Liouvillian => ("sweep", json!(harness::run_liouvillian_grid(&cfg, &mut b, "sweep")?)),
            SweepKind::Walk => ("sweep", json!(harness::run_walk_grid(&cfg, &mut b, "sweep")?)),
        },
        Command::Scaling => ("scaling", json!(harness::run_scaling(&cfg, &mut b, "scaling")?.rows)),
        Command::Figure { .. } => unreachable!(),
    };
    b.finish(name, &cfg, &summary)
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("threads", e.to_string(), 2);
        }
    }
    match execute(&cli) {
        Ok(b) => {
            let files: Vec<String> = b.files.iter().map(|p| p.display().to_string()).collect();
            println!("{}", json!({ "status": "ok", "files": files }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
