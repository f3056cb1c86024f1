use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use granular_chain::assimilation::{run_perturbed_observer, run_recorded};
use granular_chain::config::{parse_override, AssimilateMode, OrbitSystem, RunConfig};
use granular_chain::integrate::{integrate, integrate_to_stationary, IntegrationPlan, Trajectory};
use granular_chain::model::{ChainSystem, ExtendedSystem, Lattice, LeftBoundary, State};
use granular_chain::orbit::{floquet, newton_periodic, PeriodicOrbit};
use granular_chain::output::{
    write_residual_history_csv, write_spectrum_csv, write_sweep_csv, write_trajectory_csv, LinePlot,
};
use granular_chain::record::ForceRecord;
use granular_chain::sweep::{classify_extrema, classify_resonance, run_sweep, stationary_input_force};
use granular_chain::{Error, Result};

/// Forced granular chain simulations.
#[derive(Parser, Debug)]
#[command(name = "granular", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary trajectory at one drive frequency.
    Simulate(RunArgs),
    /// Maximum transmitted force over a frequency grid.
    Sweep(RunArgs),
    /// 1:n order of the stationary response at one drive frequency.
    Classify(RunArgs),
    /// Periodic orbit by Newton shooting and its Floquet multipliers.
    Floquet(RunArgs),
    /// Driver/observer synchronization or a recorded-force observer run.
    Assimilate(RunArgs),
    /// List configuration keys and presets.
    Keys,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML file with flat keys, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shipped preset to start from.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a key, `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        RunConfig::load(self.preset.as_deref(), self.config.as_deref(), &overrides)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| {
            Error::Config(format!("cannot create output directory {}: {e}", self.out.display()))
        })?;
        Ok(&self.out)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_svg(dir: &Path, name: &str, plot: &LinePlot) -> Result<()> {
    std::fs::write(dir.join(name), plot.render())?;
    Ok(())
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let dir = args.out_dir()?;
    let s = cfg.scaled()?;
    let chain = ChainSystem::scaled(&s);
    let traj = integrate_to_stationary(&chain, s.drive_period(), &cfg.plan)?;
    write_trajectory_csv(create(dir, "trajectory.csv")?, &chain, &traj, Some(&s))?;
    if args.plot {
        let fs = s.force_scale();
        let t: Vec<f64> = traj.times.iter().map(|&t| s.physical_time(t)).collect();
        let f_in = traj.map(|t, y| chain.input_force_at(t, y).unwrap_or(f64::NAN) * fs);
        let f_out = traj.map(|_, y| chain.transmitted_force_at(y) * fs);
        let mut plot = LinePlot::new(&format!("{} Hz", cfg.frequency), "time (s)", "force (N)");
        plot.add_series("F_in", t.iter().copied().zip(f_in).collect());
        plot.add_series("F_out", t.iter().copied().zip(f_out).collect());
        write_svg(dir, "forces.svg", &plot)?;
    }
    println!("wrote {} samples to {}", traj.len(), dir.join("trajectory.csv").display());
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let dir = args.out_dir()?;
    let spec = cfg.sweep_spec();
    let mut result = run_sweep(&spec, &cfg.plan)?;
    classify_extrema(&mut result, &spec, &cfg.plan)?;
    write_sweep_csv(create(dir, "sweep.csv")?, &result)?;

    let mut summary = String::new();
    for e in &result.extrema {
        let i = e.index;
        summary.push_str(&format!(
            "{:10.3} Hz  {:12.6e} N  {}\n",
            e.frequency,
            result.points[i].max_force,
            result.label(i)
        ));
    }
    std::fs::write(dir.join("extrema.txt"), &summary)?;
    print!("{summary}");
    if args.plot {
        let mut plot = LinePlot::new("maximum transmitted force", "frequency (Hz)", "force (N)");
        plot.add_series("max F_out", result.points.iter().map(|p| (p.frequency, p.max_force)).collect());
        write_svg(dir, "sweep.svg", &plot)?;
    }
    Ok(())
}

fn classify(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let dir = args.out_dir()?;
    let s = cfg.scaled()?;
    let (times, forces) = stationary_input_force(&s, &cfg.plan)?;
    let n = classify_resonance(&times, &forces, s.drive_period())?;
    std::fs::write(dir.join("classify.txt"), format!("frequency_hz,order\n{},{n}\n", cfg.frequency))?;
    println!("1:{n} at {} Hz", cfg.frequency);
    Ok(())
}

/// Settled state at the start of the measurement window, with time reset to
/// zero (the transient covers whole drive periods).
fn settled_chain_state(chain: &ChainSystem, period: f64, plan: &IntegrationPlan) -> Result<State> {
    let plan = plan.with_periods(plan.transient_periods, 1).with_stride(usize::MAX);
    let traj = integrate_to_stationary(chain, period, &plan)?;
    let mut s = traj.state(0);
    s.time = 0.0;
    Ok(s)
}

fn orbit_trajectory(sys: &dyn granular_chain::integrate::Dynamics, orbit: &PeriodicOrbit, plan: &IntegrationPlan) -> Result<Trajectory> {
    let (steps, h) = plan.steps_per_period(orbit.period);
    let run = plan.with_dt(h).with_t_end(steps as f64 * h);
    integrate(&sys, &orbit.anchor_state, &run)
}

fn floquet_cmd(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let dir = args.out_dir()?;
    let s = cfg.scaled()?;
    let opts = cfg.shooting();
    let chain = ChainSystem::scaled(&s);
    let period = cfg.orbit_periods as f64 * s.drive_period();
    let driver = settled_chain_state(&chain, s.drive_period(), &cfg.plan)?;

    let ext = ExtendedSystem::new(&s);
    let (orbit, spectrum) = match cfg.orbit_system {
        OrbitSystem::Chain => {
            let orbit = newton_periodic(&driver, &chain, period, &opts)?;
            let spectrum = orbit.converged.then(|| floquet(&orbit, &chain, &opts)).transpose()?;
            (orbit, spectrum)
        }
        OrbitSystem::Extended => {
            let x = driver.to_flat();
            let guess = State::from_flat(0.0, &ext.join(&x, &x));
            let orbit = newton_periodic(&guess, &ext, period, &opts)?;
            let spectrum = orbit.converged.then(|| floquet(&orbit, &ext, &opts)).transpose()?;
            (orbit, spectrum)
        }
    };
    write_residual_history_csv(create(dir, "residual_history.csv")?, &orbit.residual_history)?;
    let Some(spectrum) = spectrum else {
        return Err(Error::NotConverged {
            residual: orbit.residual,
            iterations: orbit.residual_history.len() - 1,
        });
    };

    let traj = match cfg.orbit_system {
        OrbitSystem::Chain => orbit_trajectory(&chain, &orbit, &cfg.plan)?,
        OrbitSystem::Extended => {
            let full = orbit_trajectory(&ext, &orbit, &cfg.plan)?;
            Trajectory {
                times: full.times.clone(),
                states: full.states.iter().map(|y| ext.split(y).0).collect(),
            }
        }
    };
    write_trajectory_csv(create(dir, "orbit.csv")?, &chain, &traj, None)?;
    write_spectrum_csv(create(dir, "spectrum.csv")?, &spectrum)?;
    println!(
        "residual {:.3e}, max |multiplier| {:.6}, {} outside the unit circle, verdict {:?}",
        orbit.residual,
        spectrum.max_modulus,
        spectrum.unstable_count(),
        spectrum.verdict
    );
    if args.plot {
        let n = spectrum.multipliers.len() as f64;
        let mut plot = LinePlot::new("Floquet multipliers", "index (by modulus)", "modulus");
        plot.add_series(
            "|multiplier|",
            spectrum.multipliers.iter().enumerate().map(|(i, z)| (i as f64, z.norm())).collect(),
        );
        plot.add_series("unit circle", vec![(0.0, 1.0), (n - 1.0, 1.0)]);
        write_svg(dir, "spectrum.svg", &plot)?;
    }
    Ok(())
}

fn assimilate(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let dir = args.out_dir()?;
    let s = cfg.scaled()?;
    match cfg.assimilate_mode {
        AssimilateMode::Extended => {
            let plan = cfg.plan.with_t_end(cfg.sync_periods as f64 * s.drive_period());
            let run = run_perturbed_observer(&s, cfg.observer_perturbation, &plan)?;
            let chain = ChainSystem::scaled(&s);
            run.write_sync_csv(create(dir, "sync.csv")?)?;
            write_trajectory_csv(create(dir, "driver.csv")?, &chain, &run.driver_trajectory, Some(&s))?;
            let observer = ChainSystem::new(chain.lattice, LeftBoundary::Open);
            write_trajectory_csv(create(dir, "observer.csv")?, &observer, &run.observer_trajectory, Some(&s))?;
            println!(
                "terminal sync error {:.3e}: {}",
                run.terminal_error,
                if run.synchronized { "synchronized" } else { "not synchronized" }
            );
            if args.plot {
                let mut plot = LinePlot::new("synchronization error", "scaled time", "log10 |x - y|");
                plot.add_series("sync error", run.sync_error.iter().map(|&(t, e)| (t, e.max(1e-300).log10())).collect());
                write_svg(dir, "sync.svg", &plot)?;
            }
        }
        AssimilateMode::Recorded => {
            let path = cfg
                .force_record_path
                .as_deref()
                .ok_or_else(|| Error::Config("recorded assimilation needs force_record_path".into()))?;
            let record = ForceRecord::from_csv_path(path)?;
            let plan = cfg
                .plan
                .with_dt(cfg.plan.dt / s.phi)
                .with_t_end(record.end() - record.start());
            let mut start = State::zeros(cfg.chain.n_beads);
            start.time = record.start();
            let traj = run_recorded(&cfg.chain, &record, &start, &plan)?;
            let chain = ChainSystem::new(Lattice::from_config(&cfg.chain), LeftBoundary::Force(record));
            write_trajectory_csv(create(dir, "trajectory.csv")?, &chain, &traj, None)?;
            println!("wrote {} samples to {}", traj.len(), dir.join("trajectory.csv").display());
        }
    }
    Ok(())
}

fn keys() {
    println!("keys:");
    for (k, doc) in granular_chain::config::KEYS {
        println!("  {k:28} {doc}");
    }
    println!("presets:");
    for (name, _) in granular_chain::config::PRESETS {
        println!("  {name}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Classify(a) => classify(a),
        Command::Floquet(a) => floquet_cmd(a),
        Command::Assimilate(a) => assimilate(a),
        Command::Keys => {
            keys();
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
