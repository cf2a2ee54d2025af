use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use serde_json::json;

use kanesim::adiabaticity::compare_profiles;
use kanesim::config::ConfigFile;
use kanesim::gate::{calibrate_bac, measure_swap, run_inputs, DriveSetting, InputLabel};
use kanesim::parallel::resolve_parallelism;
use kanesim::pulses::build_cnot_schedule;
use kanesim::sweep;
use kanesim::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "kanesim", version, about = "Adiabatic Kane CNOT simulator with sigma-z dephasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration document; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for independent runs.
    #[arg(long, global = true, env = "KANESIM_PARALLELISM")]
    parallelism: Option<usize>,

    /// Reserved; the simulation has no stochastic parts.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value = "warn")]
    log_level: LevelFilter,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the gate on one or all basis inputs and report errors as JSON.
    Simulate {
        /// 00, 01, 10, 11 or all.
        #[arg(long, default_value = "all")]
        input: String,
        /// CSV trajectory; with several inputs the label is appended to the file stem.
        #[arg(long)]
        dump_trajectory: Option<PathBuf>,
        /// Trajectory sample spacing in μs.
        #[arg(long, default_value_t = 0.05)]
        sample_interval: f64,
    },
    /// Worst-case error over the configured (tau_e, tau_n) grid as CSV.
    Sweep {
        /// Gridded worst-case matrix (rows tau_n, columns tau_e).
        #[arg(long)]
        contour: Option<PathBuf>,
        /// Full result with provenance as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Adiabaticity measure over stage 2 for every J profile as CSV.
    Theta,
    /// Drive amplitude giving one swap in the stage-4 duration, as JSON.
    Calibrate,
    /// Control values sampled over the whole schedule as CSV.
    ScheduleDump {
        #[arg(long, default_value_t = 2001)]
        samples: usize,
    },
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn with_label(path: &Path, label: InputLabel) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{label}.{ext}"),
        None => format!("{stem}_{label}"),
    };
    path.with_file_name(name)
}

fn simulate(cli: &Cli, input: &str, dump: Option<&Path>, sample_interval: f64) -> Result<()> {
    let file = load(cli.config.as_deref())?;
    let inputs: Vec<InputLabel> = if input == "all" {
        InputLabel::ALL.to_vec()
    } else {
        vec![input.parse().map_err(|_| Error::Config(format!("--input must be 00, 01, 10, 11 or all, got {input:?}")))?]
    };
    let mut cfg = file.cnot()?;
    if dump.is_some() && cfg.integrator.sample_interval.is_none() {
        cfg.integrator.sample_interval = Some(sample_interval);
    }
    cfg.integrator.validate()?;
    let gate = cfg.resolve()?;
    let runs = run_inputs(&cfg, &gate, &inputs, dump.is_some())?;
    if let Some(path) = dump {
        for r in &runs {
            let p = if runs.len() == 1 { path.to_path_buf() } else { with_label(path, r.input) };
            r.trajectory.write_csv(&p)?;
        }
    }
    let worst = runs.iter().map(|r| r.error).fold(0.0, f64::max);
    let doc = json!({
        "schema_version": kanesim::config::SCHEMA_VERSION,
        "config_sha256": file.sha256(),
        "config": file,
        "b_ac_t": gate.b_ac,
        "calibration": gate.calibration,
        "results": runs.iter().map(|r| json!({
            "input": r.input,
            "output": r.input.cnot(),
            "error": r.error,
            "nuclear_error": r.nuclear_error,
            "full_error": r.full_error,
            "purity": r.final_rho.purity(),
            "stats": r.stats,
        })).collect::<Vec<_>>(),
        "worst_case_error": worst,
    });
    write_out(cli.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn run_sweep(cli: &Cli, contour: Option<&Path>, json_out: Option<&Path>) -> Result<bool> {
    let file = load(cli.config.as_deref())?;
    let grid = file.grid()?;
    let result = sweep::run_sweep(&file, &grid, resolve_parallelism(cli.parallelism))?;
    write_out(cli.out.as_deref(), &sweep::csv_string(&result))?;
    if let Some(p) = contour {
        sweep::emit_contour(&result, p)?;
    }
    if let Some(p) = json_out {
        sweep::emit_json(&result, p)?;
    }
    let failed = result.failures();
    if failed > 0 {
        log::error!("{failed} grid point(s) failed");
    }
    Ok(failed == 0)
}

fn theta(cli: &Cli) -> Result<()> {
    let file = load(cli.config.as_deref())?;
    let cfg = file.cnot()?;
    let spec = cfg.schedule_spec(1e-3);
    let t = file.theta;
    let series = compare_profiles(
        &cfg.constants,
        &spec,
        t.n_samples,
        t.gap_floor,
        t.selection,
        resolve_parallelism(cli.parallelism),
    )?;
    let mut out = format!("# config_sha256={}\nprofile,t_us,theta,level_a,level_b\n", file.sha256());
    for (kind, s) in &series {
        log::info!("{}: max theta {:.6e}", kind.name(), s.max());
        for ((time, th), (a, b)) in s.times.iter().zip(&s.theta).zip(&s.pairs) {
            out.push_str(&format!("{},{time:.16e},{th:.16e},{a},{b}\n", kind.name()));
        }
    }
    write_out(cli.out.as_deref(), &out)
}

fn calibrate(cli: &Cli) -> Result<()> {
    let file = load(cli.config.as_deref())?;
    let cfg = file.cnot()?;
    cfg.validate()?;
    let cal = match cfg.b_ac {
        DriveSetting::Calibrate => calibrate_bac(&cfg)?,
        DriveSetting::Fixed(b) => measure_swap(&cfg, b)?,
    };
    let doc = json!({
        "config_sha256": file.sha256(),
        "b_ac_t": cal.b_ac,
        "swap_duration_us": cal.swap_duration,
        "target_duration_us": cfg.durations.stage4,
        "peak_transfer": cal.peak_transfer,
        "omega_rad_per_us": cal.omega,
    });
    write_out(cli.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn schedule_dump(cli: &Cli, samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::Config("--samples must be >= 2".into()));
    }
    let file = load(cli.config.as_deref())?;
    let cfg = file.cnot()?;
    let b_ac = match cfg.b_ac {
        DriveSetting::Fixed(b) => b,
        DriveSetting::Calibrate => calibrate_bac(&cfg)?.b_ac,
    };
    let schedule = build_cnot_schedule(&cfg.constants, &cfg.schedule_spec(b_ac))?;
    let mut out = format!("# config_sha256={}\nt_us,stage,a1,a2,j,b_ac_t,omega_rad_per_us\n", file.sha256());
    for (t, label, p) in schedule.sample(samples) {
        let b = if p.ac_on { p.b_ac } else { 0.0 };
        out.push_str(&format!(
            "{t:.16e},{label},{:.16e},{:.16e},{:.16e},{b:.16e},{:.16e}\n",
            p.a1, p.a2, p.j, p.omega
        ));
    }
    write_out(cli.out.as_deref(), &out)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(seed) = cli.seed {
        log::debug!("seed {seed} accepted; no stochastic components");
    }
    match &cli.command {
        Command::Simulate { input, dump_trajectory, sample_interval } => {
            simulate(cli, input, dump_trajectory.as_deref(), *sample_interval).map(|_| true)
        }
        Command::Sweep { contour, json } => run_sweep(cli, contour.as_deref(), json.as_deref()),
        Command::Theta => theta(cli).map(|_| true),
        Command::Calibrate => calibrate(cli).map(|_| true),
        Command::ScheduleDump { samples } => schedule_dump(cli, *samples).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
