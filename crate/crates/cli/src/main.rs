mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clustersync::cluster::{self, solve_phases, ClusterState, Partition, SolveOptions};
use clustersync::portrait::{self, DEFAULT_GRID_DENSITY};
use clustersync::simulator::{self, InitialCondition, ItineraryOptions, SimConfig};
use clustersync::stability::{self, DesignRow};
use clustersync::{Exec, FourierCoupling};

use config::RunConfig;

const VERSION: &str = env!("CLUSTERSYNC_VERSION");

#[derive(Parser)]
#[command(name = "clustersync", version = VERSION, about = "Cluster states of globally coupled phase oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in coupling: case0, case1 or case2
    #[arg(long)]
    preset: Option<String>,
    /// JSON config file; flags given here take precedence over its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = "CLUSTERSYNC_OUT", default_value = "clustersync-out")]
    out: PathBuf,
    /// Seed for every random draw of the run
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps and ensembles (0: one per processor)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Format of tabular output
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Clone, Default)]
struct StateArgs {
    /// Cluster sizes, e.g. 2,2,2
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Initial Newton guess for the cluster phases
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    guess: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Isotropy subgroups of S_N, one per cluster-size pattern
    Enumerate {
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Newton solve for the phases of a periodic cluster state
    Solve {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Tangential and transverse stability of a solved cluster state
    Stability {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the bump strength r and report transverse stability
    Design {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, allow_hyphen_values = true)]
        r_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        r_max: Option<f64>,
        #[arg(long)]
        r_steps: Option<usize>,
        /// Bump half-width; defaults to half the smallest cluster separation
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate the full network and extract the saddle itinerary
    Simulate {
        #[arg(long = "n")]
        n: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        record_stride: Option<usize>,
        /// Reference oscillator for the observables, 1-based
        #[arg(long)]
        reference: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample the reduced three-cluster field and locate its fixed points
    Portrait {
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        grid_density: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn io_failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

impl From<clustersync::Error> for Failure {
    fn from(e: clustersync::Error) -> Self {
        use clustersync::Error::*;
        let code = match e {
            NonConvergence { .. }
            | SingularJacobian { .. }
            | EigenNonConvergence { .. }
            | NonFiniteState { .. }
            | WrongStabilitySignature(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_digest: String,
    seed: u64,
    tool_version: &'a str,
    wall_time: f64,
}

struct Run {
    command: &'static str,
    cfg: RunConfig,
    common: Common,
    started: Instant,
}

impl Run {
    fn new(command: &'static str, common: Common, flags: RunConfig) -> Outcome<Run> {
        let mut cfg = match &common.config {
            Some(path) => RunConfig::load(path).map_err(usage)?,
            None => RunConfig::default(),
        };
        cfg.overlay(&flags);
        cfg.overlay(&RunConfig {
            preset: common.preset.clone(),
            seed: common.seed,
            ..Default::default()
        });
        fs::create_dir_all(&common.out)
            .with_context(|| format!("creating {}", common.out.display()))
            .map_err(io_failure)?;
        Ok(Run {
            command,
            cfg,
            common,
            started: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.common.out.join(name)
    }

    fn create(&self, name: &str) -> Outcome<BufWriter<File>> {
        let p = self.path(name);
        File::create(&p)
            .map(BufWriter::new)
            .with_context(|| format!("creating {}", p.display()))
            .map_err(io_failure)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Outcome<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(io_failure)?;
        writeln!(w).and_then(|_| w.flush()).map_err(io_failure)
    }

    fn coupling(&self) -> Outcome<FourierCoupling> {
        self.cfg.coupling().map_err(usage)
    }

    fn solve(&self, g: &FourierCoupling) -> Outcome<ClusterState> {
        let partition = Partition::new(self.cfg.sizes_or_default())?;
        let mut opts = SolveOptions {
            omega: self.cfg.omega.unwrap_or(0.0),
            ..SolveOptions::default()
        };
        if let Some(m) = self.cfg.max_iterations {
            opts.max_iterations = m;
        }
        Ok(solve_phases(g, &partition, &self.cfg.guess_or_default(), opts)?)
    }

    /// Echoes the merged config and writes the run manifest.
    fn finish(self) -> Outcome<()> {
        let manifest = RunManifest {
            command: self.command,
            config_digest: self.cfg.digest(),
            seed: self.cfg.seed.unwrap_or(0),
            tool_version: VERSION,
            wall_time: self.started.elapsed().as_secs_f64(),
        };
        let mut w = self.create("config.json")?;
        writeln!(w, "{}", self.cfg.canonical()).and_then(|_| w.flush()).map_err(io_failure)?;
        self.write_json("manifest.json", &manifest)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome<()> {
    let common = match &command {
        Command::Enumerate { common, .. }
        | Command::Solve { common, .. }
        | Command::Stability { common, .. }
        | Command::Design { common, .. }
        | Command::Simulate { common, .. }
        | Command::Portrait { common, .. } => common,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build_global()
        .map_err(usage)?;

    match command {
        Command::Enumerate { n, common } => cmd_enumerate(n, common),
        Command::Solve { state, common } => cmd_solve(state, common),
        Command::Stability { state, common } => cmd_stability(state, common),
        Command::Design {
            state,
            r_min,
            r_max,
            r_steps,
            epsilon,
            common,
        } => cmd_design(
            RunConfig {
                r_min,
                r_max,
                r_steps,
                epsilon,
                ..state_flags(state)
            },
            common,
        ),
        Command::Simulate {
            n,
            t_end,
            dt,
            noise,
            record_stride,
            reference,
            common,
        } => cmd_simulate(
            RunConfig {
                n,
                t_end,
                dt,
                noise_amplitude: noise,
                record_stride,
                reference,
                ..Default::default()
            },
            common,
        ),
        Command::Portrait {
            resolution,
            grid_density,
            sizes,
            common,
        } => cmd_portrait(
            RunConfig {
                resolution,
                grid_density,
                sizes,
                ..Default::default()
            },
            common,
        ),
    }
}

fn state_flags(s: StateArgs) -> RunConfig {
    RunConfig {
        sizes: s.sizes,
        guess: s.guess,
        omega: s.omega,
        ..Default::default()
    }
}

fn cmd_enumerate(n: usize, common: Common) -> Outcome<()> {
    let format = common.format;
    let run = Run::new(
        "enumerate",
        common,
        RunConfig {
            n: Some(n),
            ..Default::default()
        },
    )?;
    let classes = cluster::enumerate_isotropy(n)?;
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{:<16} {:<14} {:>4} {:>10} {:>12}", "group", "sizes", "dim", "conjugates", "orbit");
    for c in &classes {
        let _ = writeln!(
            out,
            "{:<16} {:<14} {:>4} {:>10} {:>12}",
            c.label(),
            c.sizes_string(),
            c.fix_dim,
            c.num_conjugates,
            c.orbit_size
        );
    }
    match format {
        Format::Csv => {
            let w = run.create("isotropy.csv")?;
            cluster::write_isotropy_csv(&classes, w).map_err(io_failure)?;
        }
        Format::Json => run.write_json("isotropy.json", &classes)?,
    }
    run.finish()
}

fn cmd_solve(state: StateArgs, common: Common) -> Outcome<()> {
    let run = Run::new("solve", common, state_flags(state))?;
    let g = run.coupling()?;
    let s = run.solve(&g)?;
    let phases: Vec<String> = s.phase_values().iter().map(|p| format!("{p:.12}")).collect();
    println!("phases {}", phases.join(" "));
    println!("Omega {:.12}", s.frequency);
    run.write_json("state.json", &s)?;
    run.finish()
}

#[derive(Serialize)]
struct StabilityOutput<'a> {
    state: &'a ClusterState,
    report: stability::StabilityReport,
}

fn cmd_stability(state: StateArgs, common: Common) -> Outcome<()> {
    let run = Run::new("stability", common, state_flags(state))?;
    let g = run.coupling()?;
    let s = run.solve(&g)?;
    let report = stability::stability_report(&g, &s.partition, &s.phase_values())?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
    println!("phases {}", fmt(&s.phase_values()));
    let tan: Vec<String> = report
        .tangential
        .iter()
        .map(|z| {
            if z.im == 0.0 {
                format!("{:.6}", z.re)
            } else {
                format!("{:.6}{:+.6}i", z.re, z.im)
            }
        })
        .collect();
    println!("tangential {}", tan.join(" "));
    let tr: Vec<String> = report
        .transverse
        .iter()
        .map(|t| t.exponent.map_or("-".into(), |e| format!("{e:.6}")))
        .collect();
    println!("transverse {}", tr.join(" "));
    if let Some(c) = report.classification {
        println!("classification {c:?}");
    }
    if !report.tangentially_stable {
        log::warn!("state is tangentially unstable");
    }
    run.write_json("stability.json", &StabilityOutput { state: &s, report })?;
    run.finish()
}

#[derive(Serialize)]
struct DesignOutput<'a> {
    state: &'a ClusterState,
    thresholds: stability::BifurcationThresholds,
    rows: &'a [DesignRow],
}

fn cmd_design(flags: RunConfig, common: Common) -> Outcome<()> {
    let format = common.format;
    let mut run = Run::new("design", common, flags)?;
    let g = run.coupling()?;
    let s = run.solve(&g)?;
    let phases = s.phase_values();
    let thresholds = stability::bifurcation_thresholds(&g, &s.partition, &phases, run.cfg.epsilon)?;
    let first = thresholds.r_values.first().copied().unwrap_or(0.0);
    let last = thresholds.r_values.last().copied().unwrap_or(0.0);
    let r_min = *run.cfg.r_min.get_or_insert(first - 0.5);
    let r_max = *run.cfg.r_max.get_or_insert(last + 0.5);
    let steps = *run.cfg.r_steps.get_or_insert(101);
    if !(r_max > r_min) || steps < 2 {
        return Err(usage(anyhow!("need r_max > r_min and r_steps >= 2")));
    }
    let r_values: Vec<f64> = (0..steps)
        .map(|i| r_min + (r_max - r_min) * i as f64 / (steps - 1) as f64)
        .collect();
    let rows = stability::design_sweep(&g, &s.partition, &phases, thresholds.epsilon_used, &r_values, Exec::Parallel)?;

    for (r, c) in thresholds.r_values.iter().zip(&thresholds.clusters) {
        println!("threshold r = {r:.10} (cluster {})", c + 1);
    }
    let counts: Vec<usize> = rows.iter().map(|r| r.stable_clusters).collect();
    let mut steps_seen = counts.clone();
    steps_seen.dedup();
    println!("stable clusters along sweep: {steps_seen:?}");

    match format {
        Format::Csv => {
            let mut w = run.create("design.csv")?;
            let m = s.partition.num_clusters();
            let mut header = vec!["r".to_string()];
            header.extend((1..=m).map(|k| format!("lambda_{k}")));
            header.extend(["stable_clusters".to_string(), "classification".to_string()]);
            let line = |w: &mut BufWriter<File>, fields: Vec<String>| writeln!(w, "{}", fields.join(","));
            line(&mut w, header).map_err(io_failure)?;
            for row in &rows {
                let mut f = vec![row.r.to_string()];
                f.extend(row.exponents.iter().map(|e| e.map_or(String::new(), |x| x.to_string())));
                f.push(row.stable_clusters.to_string());
                f.push(row.classification.map_or(String::new(), |c| format!("{c:?}")));
                line(&mut w, f).map_err(io_failure)?;
            }
            w.flush().map_err(io_failure)?;
            run.write_json("thresholds.json", &thresholds)?;
        }
        Format::Json => run.write_json(
            "design.json",
            &DesignOutput {
                state: &s,
                thresholds,
                rows: &rows,
            },
        )?,
    }
    run.finish()
}

fn cmd_simulate(flags: RunConfig, common: Common) -> Outcome<()> {
    let mut run = Run::new("simulate", common, flags)?;
    let g = run.coupling()?;
    let cfg = &mut run.cfg;
    let n = *cfg.n.get_or_insert(6);
    let noise = *cfg.noise_amplitude.get_or_insert(1e-12);
    let mut sim = SimConfig {
        omega: cfg.omega.unwrap_or(0.0),
        dt: cfg.dt,
        noise_amplitude: noise,
        rng_seed: *cfg.seed.get_or_insert(0),
        initial: cfg.initial.get_or_insert(InitialCondition::Random).clone(),
        record_stride: 1,
        ..SimConfig::new(n, g.clone(), *cfg.t_end.get_or_insert(500.0))
    };
    // default: one record every 0.1 time units
    sim.record_stride = *cfg
        .record_stride
        .get_or_insert(((0.1 / sim.effective_dt()).round() as usize).max(1));
    let reference = *cfg.reference.get_or_insert(n);
    if reference == 0 || reference > n {
        return Err(usage(anyhow!("--reference must be in 1..={n}")));
    }

    let traj = simulator::integrate(&sim)?;
    simulator::write_trajectory_csv(&traj, run.create("trajectory.csv")?).map_err(io_failure)?;
    let y = simulator::observables(&traj, reference - 1)?;
    simulator::write_observables_csv(&traj, &y, run.create("observables.csv")?).map_err(io_failure)?;

    if n == 6 {
        let opts = ItineraryOptions {
            enter_tol: *run.cfg.enter_tol.get_or_insert(simulator::DEFAULT_ENTER_TOL),
            min_dwell: *run.cfg.min_dwell.get_or_insert(simulator::DEFAULT_MIN_DWELL),
            align_pairing: true,
        };
        match saddles_for(&run, &g) {
            Ok(saddles) => {
                let events = simulator::itinerary(&traj, &saddles, opts)?;
                let returns = simulator::saddle_returns(&traj, &saddles, opts)?;
                let seq: Vec<String> = events.iter().map(|e| e.saddle_index.to_string()).collect();
                println!("itinerary {}", seq.join(" "));
                println!("saddle-set returns {returns}");
                run.write_json("itinerary.json", &ItineraryOutput {
                    saddles: &saddles,
                    events: &events,
                    saddle_returns: returns,
                })?;
            }
            Err(e) => log::warn!("no itinerary: {e:#}"),
        }
    }
    println!("{} records, t_end {}", traj.len(), sim.t_end);
    run.finish()
}

#[derive(Serialize)]
struct ItineraryOutput<'a> {
    saddles: &'a simulator::SaddleSet,
    events: &'a [simulator::ItineraryEvent],
    saddle_returns: usize,
}

fn saddles_for(run: &Run, g: &FourierCoupling) -> anyhow::Result<simulator::SaddleSet> {
    let p = Partition::new(vec![2, 2, 2])?;
    let s = solve_phases(g, &p, &run.cfg.guess_or_default(), SolveOptions::default())?;
    let ph = s.phase_values();
    let (a, b) = if ph[1] < ph[2] { (ph[1], ph[2]) } else { (ph[2], ph[1]) };
    Ok(simulator::saddle_set(a, b)?)
}

fn cmd_portrait(flags: RunConfig, common: Common) -> Outcome<()> {
    let mut run = Run::new("portrait", common, flags)?;
    let g = run.coupling()?;
    let resolution = *run.cfg.resolution.get_or_insert(64);
    let density = *run.cfg.grid_density.get_or_insert(DEFAULT_GRID_DENSITY);
    let partition = Partition::new(run.cfg.sizes_or_default())?;
    let port = portrait::export_portrait(&g, &partition, resolution, density, Exec::Parallel)?;
    portrait::write_field_csv(&port, run.create("portrait.csv")?).map_err(io_failure)?;
    let w = run.create("fixed_points.json")?;
    portrait::write_fixed_points_json(&port.fixed_points, w).map_err(io_failure)?;
    for p in &port.fixed_points {
        println!("{:.6} {:.6} {:?}", p.u.value(), p.v.value(), p.kind);
    }
    run.finish()
}
