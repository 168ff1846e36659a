use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use netsir::dataio::{load_cumulative_csv, preprocess, PreprocessConfig};
use netsir::estimation::{estimate_per_phase, PhaseEstimate, DEFAULT_LAMBDA_REG};
use netsir::experiments::{
    convergence_sweep, converse_gap, edge_age_distribution, edge_density_check, ode_reference,
    write_convergence_csv, write_gap_csv, ConvergenceSetup, ConverseSetup,
};
use netsir::model::{GroupMatrix, ModelParams, Trajectory};
use netsir::phase::{detect_phases, PhaseConfig, PhaseReport};
use netsir::scenario::Scenario;
use netsir::sim::{
    ensemble, init_network, simulate, write_events_csv, InitSpec, SimConfig, SimMode,
};

#[derive(Parser, Debug)]
#[command(
    name = "netsir",
    version,
    about = "Network SIR simulation, mean-field ODE and phase-wise estimation"
)]
struct Cli {
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for the primary result.
    #[arg(long, global = true, value_enum)]
    emit: Option<Emit>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the mean-field ODE of a scenario.
    Ode(RunArgs),
    /// One network simulation; writes the trajectory and, with --out, the event log.
    Simulate(RunArgs),
    /// Mean trajectory over independent runs.
    Ensemble(RunArgs),
    /// Per-phase parameter estimates from a trajectory CSV.
    Estimate(EstimateArgs),
    /// Phase boundaries of a trajectory CSV.
    DetectPhases(DetectArgs),
    /// Cumulative case counts to a trajectory CSV.
    Preprocess(PreprocessArgs),
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    /// ODE step size.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    lambda_edge: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Dense,
    Lazy,
}

impl From<ModeArg> for SimMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Dense => SimMode::Dense,
            ModeArg::Lazy => SimMode::Lazy,
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Trajectory CSV sampled daily.
    #[arg(long)]
    data: PathBuf,
    /// Phases JSON; one phase over the whole series when absent.
    #[arg(long)]
    phases: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_REG)]
    lambda_reg: f64,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    data: PathBuf,
    /// Phase-detection config JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    dp: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    min_phase: Option<usize>,
    #[arg(long)]
    zero_floor: Option<f64>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Cumulative counts CSV: date,group_1,...,group_m.
    #[arg(long)]
    data: PathBuf,
    /// JSON with populations, T_R and smoothing_window.
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "t-r")]
    t_r: Option<usize>,
    #[arg(long)]
    smoothing_window: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Mean-square gap to the ODE across population sizes.
    Converge(ConvergeArgs),
    /// Gap of the mean susceptible fraction at fixed edge rate.
    Converse(ConverseArgs),
    /// Distribution of the time since an edge's last update.
    EdgeAge(EdgeAgeArgs),
    /// Directed-edge counts against the stationary density.
    EdgeDensity(EdgeDensityArgs),
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [100u64, 400, 1600])]
    n_list: Vec<u64>,
    /// Edge rate is `lambda_coeff * n^lambda_exponent`.
    #[arg(long, default_value_t = 10.0)]
    lambda_coeff: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_exponent: f64,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ConverseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    #[arg(long)]
    lambda_edge: Option<f64>,
    #[arg(long)]
    group: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EdgeAgeArgs {
    /// Scenario JSON for the network; a two-node graph at `--lambda` when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    t: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Ordered pair `target,source`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0usize, 1])]
    pair: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EdgeDensityArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Core(netsir::Error),
}

impl From<netsir::Error> for CliError {
    fn from(e: netsir::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, result: netsir::Result<T>) -> CliResult<T> {
    result.map_err(|e| match e {
        e if e.is_numerical() => CliError::Core(e),
        e => CliError::Input(format!("{}: {e}", path.display())),
    })
}

/// Destination for named outputs.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(dir) = &dir {
            fs::create_dir_all(dir)?;
        }
        Ok(Self { dir })
    }

    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> netsir::Result<()>,
    ) -> CliResult {
        match &self.dir {
            Some(dir) => {
                let mut file = io::BufWriter::new(fs::File::create(dir.join(name))?);
                body(&mut file)?;
                file.flush()?;
            }
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                body(&mut lock)?;
                lock.flush()?;
            }
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn trajectory(&self, name: &str, emit: Emit, traj: &Trajectory) -> CliResult {
        match emit {
            Emit::Csv => self.write(&format!("{name}.csv"), |w| traj.write_csv(w)),
            Emit::Json => self.json(&format!("{name}.json"), traj),
        }
    }
}

fn load_scenario(args: &RunArgs) -> CliResult<Scenario> {
    let mut scenario: Scenario = with_path(
        &args.config,
        serde_json::from_str(&read(&args.config)?).map_err(Into::into),
    )?;
    if let Some(v) = args.seed {
        scenario.seed = v;
    }
    if let Some(v) = args.t_end {
        scenario.t_end = v;
    }
    if let Some(v) = args.sample_dt {
        scenario.sample_dt = v;
    }
    if let Some(v) = args.dt {
        scenario.dt = v;
    }
    if let Some(v) = args.lambda_edge {
        scenario.lambda_edge = v;
    }
    if let Some(v) = args.mode {
        scenario.mode = v.into();
    }
    if let Some(v) = args.runs {
        scenario.runs = v;
    }
    with_path(&args.config, scenario.params())?;
    Ok(scenario)
}

fn run_ode(args: &RunArgs, sink: &Sink, emit: Emit) -> CliResult {
    let scenario = load_scenario(args)?;
    let params = with_path(&args.config, scenario.params())?;
    let init = with_path(&args.config, scenario.initial_fractions())?;
    let traj = ode_reference(
        &params,
        &init,
        scenario.t_end,
        scenario.sample_dt,
        scenario.dt,
    )?;
    sink.trajectory("trajectory", emit, &traj)
}

fn run_simulate(args: &RunArgs, sink: &Sink, emit: Emit) -> CliResult {
    let scenario = load_scenario(args)?;
    let params = with_path(&args.config, scenario.params())?;
    let infected = with_path(&args.config, scenario.initial_counts())?;
    let mut state = init_network(&params, &infected, scenario.seed, scenario.mode)?;
    let config = SimConfig {
        t_end: scenario.t_end,
        sample_dt: scenario.sample_dt,
        record_events: sink.dir.is_some(),
    };
    let out = simulate(&mut state, &params, &config)?;
    sink.trajectory("trajectory", emit, &out.trajectory)?;
    if sink.dir.is_some() {
        sink.write("events.csv", |w| write_events_csv(w, &out.events))?;
    }
    Ok(())
}

fn run_ensemble(args: &RunArgs, sink: &Sink, emit: Emit) -> CliResult {
    let scenario = load_scenario(args)?;
    let params = with_path(&args.config, scenario.params())?;
    let init = InitSpec {
        initial_infected: with_path(&args.config, scenario.initial_counts())?,
        mode: scenario.mode,
    };
    let summary = ensemble(
        &params,
        &init,
        scenario.runs,
        scenario.t_end,
        scenario.sample_dt,
        scenario.seed,
    )?;
    sink.trajectory("mean", emit, &summary.mean)?;
    if sink.dir.is_some() {
        let variance = Trajectory {
            times: summary.mean.times.clone(),
            states: summary.variance.clone(),
        };
        sink.write("variance.csv", |w| variance.write_csv(w))?;
    }
    Ok(())
}

fn load_trajectory(path: &Path) -> CliResult<Trajectory> {
    let file =
        fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    with_path(path, Trajectory::read_csv(file))
}

fn run_estimate(args: &EstimateArgs, sink: &Sink, emit: Emit) -> CliResult {
    let data = load_trajectory(&args.data)?;
    let boundaries = match &args.phases {
        Some(path) => {
            let report: PhaseReport =
                with_path(path, serde_json::from_str(&read(path)?).map_err(Into::into))?;
            report.boundaries
        }
        None => Vec::new(),
    };
    let estimates = with_path(
        &args.data,
        estimate_per_phase(&data, &boundaries, args.lambda_reg),
    )?;
    match emit {
        Emit::Json => sink.json("estimates.json", &estimates),
        Emit::Csv => sink.write("estimates.csv", |w| write_estimates_csv(w, &estimates)),
    }
}

fn write_estimates_csv(w: &mut dyn Write, estimates: &[PhaseEstimate]) -> netsir::Result<()> {
    let m = estimates.first().map_or(0, |e| e.gamma.len());
    let mut header = vec![
        "phase_index".to_string(),
        "start_day".into(),
        "end_day".into(),
    ];
    for i in 1..=m {
        for j in 1..=m {
            header.push(format!("A_{i}_{j}"));
        }
    }
    header.extend((1..=m).map(|i| format!("gamma_{i}")));
    header.extend(["residual_norm", "kkt_residual", "degenerate"].map(String::from));
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(&header)?;
    for e in estimates {
        let mut row = vec![
            e.phase_index.to_string(),
            e.start_day.to_string(),
            e.end_day.to_string(),
        ];
        row.extend(
            e.contact
                .as_slice()
                .iter()
                .chain(&e.gamma)
                .map(|v| format!("{v:.16e}")),
        );
        row.push(format!("{:.16e}", e.residual_norm));
        row.push(format!("{:.16e}", e.kkt_residual));
        row.push(e.degenerate.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn run_detect(args: &DetectArgs, sink: &Sink, emit: Emit) -> CliResult {
    let data = load_trajectory(&args.data)?;
    let mut cfg = match &args.config {
        Some(path) => with_path(
            path,
            serde_json::from_str::<PhaseConfig>(&read(path)?).map_err(Into::into),
        )?,
        None => PhaseConfig::default(),
    };
    if let Some(v) = args.w {
        cfg.w = v;
    }
    if let Some(v) = args.dp {
        cfg.dp = v;
    }
    if let Some(v) = args.eps {
        cfg.eps = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.min_phase {
        cfg.min_phase = v;
    }
    if let Some(v) = args.zero_floor {
        cfg.zero_floor = v;
    }
    let report = with_path(&args.data, detect_phases(&data, &cfg))?;
    match emit {
        Emit::Json => sink.json("phases.json", &report),
        Emit::Csv => sink.write("phases.csv", |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["p", "E_a", "E_b", "ratio", "flagged"])?;
            for win in &report.windows {
                wtr.write_record([
                    win.p.to_string(),
                    format!("{:.16e}", win.e_a),
                    format!("{:.16e}", win.e_b),
                    win.ratio.map_or("inf".to_string(), |r| format!("{r:.16e}")),
                    win.flagged.to_string(),
                ])?;
            }
            wtr.flush()?;
            Ok(())
        }),
    }
}

fn run_preprocess(args: &PreprocessArgs, sink: &Sink, emit: Emit) -> CliResult {
    let mut cfg: PreprocessConfig = with_path(
        &args.config,
        serde_json::from_str(&read(&args.config)?).map_err(Into::into),
    )?;
    if let Some(v) = args.t_r {
        cfg.recovery_days = v;
    }
    if let Some(v) = args.smoothing_window {
        cfg.smoothing_window = v;
    }
    with_path(&args.config, cfg.validate())?;
    let series = with_path(
        &args.data,
        load_cumulative_csv(&args.data, &cfg.populations),
    )?;
    let (_, traj) = with_path(&args.data, preprocess(&series, &cfg))?;
    sink.trajectory("trajectory", emit, &traj)
}

fn run_experiment(exp: &Experiment, sink: &Sink, emit: Emit) -> CliResult {
    match exp {
        Experiment::Converge(a) => {
            let mut setup: ConvergenceSetup = with_path(
                &a.config,
                serde_json::from_str(&read(&a.config)?).map_err(Into::into),
            )?;
            if let Some(v) = a.runs {
                setup.runs = v;
            }
            if let Some(v) = a.t_end {
                setup.t_end = v;
            }
            if let Some(v) = a.sample_dt {
                setup.sample_dt = v;
            }
            if let Some(v) = a.seed {
                setup.seed = v;
            }
            let rows = with_path(
                &a.config,
                convergence_sweep(&setup, &a.n_list, |n| {
                    a.lambda_coeff * (n as f64).powf(a.lambda_exponent)
                }),
            )?;
            match emit {
                Emit::Csv => sink.write("converge.csv", |w| write_convergence_csv(w, &rows)),
                Emit::Json => sink.json("converge.json", &rows),
            }
        }
        Experiment::Converse(a) => {
            let mut setup: ConverseSetup = with_path(
                &a.config,
                serde_json::from_str(&read(&a.config)?).map_err(Into::into),
            )?;
            if let Some(v) = a.runs {
                setup.runs = v;
            }
            if let Some(v) = a.t1 {
                setup.t1 = v;
            }
            if let Some(v) = a.t2 {
                setup.t2 = v;
            }
            if let Some(v) = a.sample_dt {
                setup.sample_dt = v;
            }
            if let Some(v) = a.lambda_edge {
                setup.params.lambda_edge = v;
            }
            if let Some(v) = a.group {
                setup.group = v;
            }
            if let Some(v) = a.seed {
                setup.seed = v;
            }
            let rows = with_path(&a.config, converse_gap(&setup))?;
            match emit {
                Emit::Csv => sink.write("converse.csv", |w| write_gap_csv(w, &rows)),
                Emit::Json => sink.json("converse.json", &rows),
            }
        }
        Experiment::EdgeAge(a) => {
            let params = match &a.config {
                Some(path) => {
                    let scenario = with_path(path, Scenario::from_json(&read(path)?))?;
                    with_path(path, scenario.params())?
                }
                None => ModelParams::network(
                    GroupMatrix::from_rows(&[vec![0.0]])?,
                    GroupMatrix::from_rows(&[vec![1.0]])?,
                    vec![1.0],
                    a.lambda,
                    vec![2],
                )?,
            };
            let report =
                edge_age_distribution(&params, (a.pair[0], a.pair[1]), a.t, a.samples, a.seed)?;
            sink.json("edge_age.json", &report)
        }
        Experiment::EdgeDensity(a) => {
            let scenario = with_path(&a.config, Scenario::from_json(&read(&a.config)?))?;
            let params = with_path(&a.config, scenario.params())?;
            let rows =
                edge_density_check(&params, a.t, a.samples, a.seed.unwrap_or(scenario.seed))?;
            sink.json("edge_density.json", &rows)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let sink = Sink::new(cli.out)?;
    match &cli.command {
        Command::Ode(a) => run_ode(a, &sink, cli.emit.unwrap_or(Emit::Csv)),
        Command::Simulate(a) => run_simulate(a, &sink, cli.emit.unwrap_or(Emit::Csv)),
        Command::Ensemble(a) => run_ensemble(a, &sink, cli.emit.unwrap_or(Emit::Csv)),
        Command::Estimate(a) => run_estimate(a, &sink, cli.emit.unwrap_or(Emit::Json)),
        Command::DetectPhases(a) => run_detect(a, &sink, cli.emit.unwrap_or(Emit::Json)),
        Command::Preprocess(a) => run_preprocess(a, &sink, cli.emit.unwrap_or(Emit::Csv)),
        Command::Experiment(e) => run_experiment(e, &sink, cli.emit.unwrap_or(Emit::Csv)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
