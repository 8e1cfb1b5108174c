use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use aircorridor::cli::bundle::ExportKind;
use aircorridor::cli::commands::{
    cmd_ckm_build, cmd_export, cmd_plan, cmd_scene_gen, cmd_sweep, exit_code, load_bundle, load_scene, parse_range,
    sweep_csv, write_text, SweepParam, Workspace,
};
use aircorridor::cli::config::ScenarioConfig;
use aircorridor::ilp::ExternalSolver;
use aircorridor::planner::Method;

/// Joint air-corridor and sensing-site planning on channel knowledge maps.
#[derive(Parser)]
#[command(name = "aircorridor", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the effective scenario configuration as JSON.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic urban scene.
    SceneGen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample one channel knowledge map per candidate site.
    CkmBuild {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for the maps and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a corridor and deployment; exit 0 feasible, 2 infeasible, 3 budget exhausted.
    Plan {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "joint")]
        method: MethodArg,
        /// Result bundle path.
        #[arg(long)]
        out: PathBuf,
        /// Leave wall-clock timings out of the bundle (byte-stable output).
        #[arg(long)]
        no_timings: bool,
    },
    /// Write files derived from a result bundle.
    Export {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum)]
        kind: ExportKind,
        #[arg(long)]
        out: PathBuf,
        /// Also write an 8-bit PGM next to a heatmap.
        #[arg(long)]
        pgm: bool,
        /// Lower end of the PGM dB window.
        #[arg(long, requires = "db_max", allow_negative_numbers = true)]
        db_min: Option<f64>,
        /// Upper end of the PGM dB window.
        #[arg(long, requires = "db_min", allow_negative_numbers = true)]
        db_max: Option<f64>,
        /// Scene file, to add site coordinates to deployment-csv.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Re-plan over a range of thresholds and tabulate cost per method.
    Sweep {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated threshold values.
        #[arg(long, value_delimiter = ',', required_unless_present = "range", conflicts_with = "range")]
        values: Vec<f64>,
        /// Threshold range as start:stop:step, e.g. 2.0:4.0:0.4.
        #[arg(long)]
        range: Option<String>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "joint,astar,random")]
        methods: Vec<MethodArg>,
        /// Runs of the random baseline averaged per threshold.
        #[arg(long, default_value_t = 100)]
        realizations: usize,
        /// CSV table path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario JSON; defaults to the built-in preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: full-size or small desk scene.
    #[arg(long, value_enum, default_value = "full")]
    preset: Preset,
    /// Scene and random-baseline seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Sensing threshold in dBm (overrides the config).
    #[arg(long, allow_negative_numbers = true)]
    eps1: Option<f64>,
    /// SINR threshold in dB (overrides the config).
    #[arg(long, allow_negative_numbers = true)]
    eps2: Option<f64>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    scene: PathBuf,
    /// Directory written by ckm-build.
    #[arg(long)]
    ckm: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Seed of the random baseline (overrides the config).
    #[arg(long)]
    random_seed: Option<u64>,
    /// Dump every assembled model as MPS into this directory.
    #[arg(long)]
    dump_models: Option<PathBuf>,
    /// External MILP solver program used instead of the built-in solver.
    #[arg(long)]
    external_solver: Option<PathBuf>,
    /// Argument for the external solver; {mps} and {solution} are replaced.
    #[arg(long = "solver-arg", allow_hyphen_values = true, requires = "external_solver")]
    solver_args: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Joint,
    Astar,
    Random,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Joint => Method::Joint,
            MethodArg::Astar => Method::Astar,
            MethodArg::Random => Method::Random,
        }
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => match self.preset {
                Preset::Full => ScenarioConfig::full_scale(),
                Preset::Desk => ScenarioConfig::desk(0),
            },
        };
        if let Some(s) = self.seed {
            c.scene.seed = s;
            c.plan.random_seed = s;
        }
        if let Some(v) = self.eps1 {
            c.radio.sense_threshold_dbm = v;
        }
        if let Some(v) = self.eps2 {
            c.radio.sinr_threshold_db = v;
        }
        c.validate()?;
        Ok(c)
    }
}

impl Inputs {
    fn workspace(&self) -> Result<Workspace> {
        let mut c = self.cfg.resolve()?;
        if let Some(s) = self.random_seed {
            c.plan.random_seed = s;
        }
        if let Some(d) = &self.dump_models {
            c.plan.model_dump_dir = Some(d.clone());
        }
        if let Some(p) = &self.external_solver {
            c.plan.external_solver = Some(ExternalSolver {
                program: p.clone(),
                args: self.solver_args.clone(),
            });
        }
        Workspace::load(&self.scene, &self.ckm, c)
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Config { cfg, out } => {
            write_text(&out, &(cfg.resolve()?.to_json() + "\n"))?;
        }
        Command::SceneGen { cfg, out } => {
            cmd_scene_gen(&cfg.resolve()?, &out)?;
        }
        Command::CkmBuild { scene, cfg, out } => {
            let m = cmd_ckm_build(&scene, &cfg.resolve()?, &out)?;
            println!("{} maps written to {}", m.files.len(), out.display());
        }
        Command::Plan {
            inputs,
            method,
            out,
            no_timings,
        } => {
            let ws = inputs.workspace()?;
            let bundle = cmd_plan(&ws, method.into(), !no_timings)?;
            write_text(&out, &bundle.to_json())?;
            let r = &bundle.result;
            match (r.corridor_length, r.deployed_sites, r.final_cost) {
                (Some(len), Some(sites), Some(cost)) if r.is_feasible() => {
                    println!("{:?}: length {len}, sites {sites}, cost {cost}", bundle.status)
                }
                _ => println!(
                    "{:?}: {}",
                    bundle.status,
                    r.failure.as_deref().unwrap_or("no plan")
                ),
            }
            return Ok(exit_code(bundle.status));
        }
        Command::Export {
            bundle,
            kind,
            out,
            pgm,
            db_min,
            db_max,
            scene,
        } => {
            let b = load_bundle(&bundle)?;
            let scene = scene.map(|p| load_scene(&p).map(|(s, _)| s)).transpose()?;
            let range = db_min.zip(db_max);
            for f in cmd_export(&b, kind, &out, pgm, range, scene.as_ref())? {
                println!("{}", f.display());
            }
        }
        Command::Sweep {
            inputs,
            param,
            values,
            range,
            methods,
            realizations,
            out,
        } => {
            let values = match range {
                Some(r) => parse_range(&r)?,
                None => values,
            };
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
            let mut ws = inputs.workspace()?;
            let rows = cmd_sweep(&mut ws, param, &values, &methods, realizations)?;
            let table = sweep_csv(&rows);
            match out {
                Some(p) => write_text(&p, &table).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
        }
    }
    Ok(0)
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
