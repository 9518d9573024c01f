//! Command-line front end: run one controller, compare all of them, and
//! generate grids, flows and communication-delay estimates.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsc_core::harness::{
    compare, horizon_for, run_experiment, simulate_comm_delay, write_comparison_csv, write_metrics_csv, ControllerKind,
    DelayModel, Metrics, Scenario, GRID_LINK_M,
};
use tsc_core::network::DEFAULT_SAT_FLOW;
use tsc_core::nl_coor::CoorBudget;
use tsc_core::sim::{generate_uniform_flow, load_flow, FlowSpec};
use tsc_core::{build_cg, build_grid, load_network, Error, QueueState, RoadNetwork, SimConfig, TurningModel};

#[derive(Parser, Debug)]
#[command(name = "tsc", version, about = "Traffic signal control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one controller and write the per-period metrics.
    Run(RunArgs),
    /// Run every controller on the same scenario.
    Compare(CompareArgs),
    /// Write a grid road network as JSON.
    GenGrid(GenGridArgs),
    /// Write a uniform random flow as JSON.
    GenFlow(GenFlowArgs),
    /// Modeled message-passing latency of one decision on a grid.
    CommDelay(CommDelayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct GridSize {
    rows: usize,
    cols: usize,
}

fn parse_grid(s: &str) -> Result<GridSize, String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let dim = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad grid dimension `{v}`: {e}"))
    };
    let g = GridSize {
        rows: dim(r)?,
        cols: dim(c)?,
    };
    if g.rows == 0 || g.cols == 0 {
        return Err(format!("grid needs at least one row and column, got `{s}`"));
    }
    Ok(g)
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct NetworkSource {
    /// Road network JSON file.
    #[arg(long)]
    roadnet: Option<PathBuf>,
    /// Generated grid, e.g. 4x4.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridSize>,
}

impl NetworkSource {
    fn load(&self) -> tsc_core::Result<RoadNetwork> {
        match (&self.roadnet, self.grid) {
            (Some(path), _) => load_network(path),
            (None, Some(g)) => build_grid(g.rows, g.cols, GRID_LINK_M, GRID_LINK_M, DEFAULT_SAT_FLOW),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[command(flatten)]
    network: NetworkSource,
    /// Flow JSON file: a vehicle list or an arrival rate.
    #[arg(long, conflicts_with = "rate")]
    flow: Option<PathBuf>,
    /// Arrivals per second, spread uniformly over entry links.
    #[arg(long, required_unless_present = "flow")]
    rate: Option<f64>,
    /// Simulated seconds.
    #[arg(long, default_value_t = 3600.0)]
    duration: f64,
    /// Wall-clock budget per EMC decision, ms.
    #[arg(long, default_value_t = tsc_core::loc_iai::DEFAULT_BUDGET_MS)]
    budget_ms: f64,
    /// Budget share for network-level coordination.
    #[arg(long, default_value_t = tsc_core::loc_iai::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Seconds per period.
    #[arg(long, default_value_t = 10.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean per-message latency, ms; enables the delay model.
    #[arg(long)]
    mu_ms: Option<f64>,
    /// Hosts the agents are spread over.
    #[arg(long, requires = "mu_ms")]
    nodes: Option<usize>,
}

impl ScenarioArgs {
    fn scenario(&self) -> tsc_core::Result<Scenario> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if !(self.budget_ms > 0.0 && self.budget_ms.is_finite()) {
            return Err(Error::InvalidArgument("budget must be a positive number of ms".into()));
        }
        let network = self.network.load()?;
        let vehicles = match (&self.flow, self.rate) {
            (Some(path), _) => load_flow(path, &network)?,
            (None, Some(rate)) => generate_uniform_flow(&network, rate, self.duration, self.seed)?,
            (None, None) => unreachable!("clap requires a flow or a rate"),
        };
        let sim = SimConfig {
            tau: self.tau,
            horizon: horizon_for(self.duration, self.tau),
            seed: self.seed,
            ..SimConfig::default()
        };
        sim.validate()?;
        let mut sc = Scenario::new(network, vehicles, sim);
        sc.emc.budget = CoorBudget::millis(self.budget_ms);
        sc.emc.epsilon = self.epsilon;
        sc.emc.validate()?;
        sc.delay = self.delay_model();
        if let Some(d) = &sc.delay {
            d.validate()?;
        }
        Ok(sc)
    }

    fn delay_model(&self) -> Option<DelayModel> {
        let model = DelayModel::new(self.mu_ms?, self.seed);
        Some(match self.nodes {
            Some(n) => model.partitioned(n),
            None => model,
        })
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ControllerArg {
    Fixedtime,
    Maxpressure,
    Nlcoor,
    Emc,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Fixedtime => ControllerKind::FixedTime,
            ControllerArg::Maxpressure => ControllerKind::MaxPressure,
            ControllerArg::Nlcoor => ControllerKind::NlCoorOnly,
            ControllerArg::Emc => ControllerKind::Emc,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "emc")]
    controller: ControllerArg,
    /// Per-period metrics CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comparison CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenGridArgs {
    #[arg(long, value_parser = parse_grid)]
    grid: GridSize,
    /// Link length, meters.
    #[arg(long, default_value_t = GRID_LINK_M)]
    link_m: f64,
    /// Saturation flow of phased movements, vehicles per period.
    #[arg(long, default_value_t = DEFAULT_SAT_FLOW)]
    sat_flow: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenFlowArgs {
    #[command(flatten)]
    network: NetworkSource,
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CommDelayArgs {
    #[arg(long, value_parser = parse_grid)]
    grid: GridSize,
    #[arg(long)]
    mu_ms: f64,
    /// Forward plus reverse sweeps.
    #[arg(long, default_value_t = 2)]
    passes: usize,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn summary(m: &Metrics) -> String {
    let tt = m
        .avg_travel_time
        .map_or_else(|| "n/a".to_string(), |t| format!("{t:.1} s"));
    format!(
        "{}: avg travel time {tt}, throughput {:.0}, mean balance {:.1}, max queue {:.0}, decision {:.2} ms, comm delay {:.1} ms",
        m.controller, m.throughput, m.mean_balance, m.max_total_queue, m.mean_decision_ms, m.mean_comm_delay_ms
    )
}

fn execute(cmd: Command) -> tsc_core::Result<()> {
    match cmd {
        Command::Run(args) => {
            let sc = args.scenario.scenario()?.with_controller(args.controller.into());
            let m = run_experiment(&sc)?;
            if let Some(path) = &args.out {
                write_metrics_csv(&m, File::create(path)?)?;
            }
            eprintln!("{}", summary(&m));
        }
        Command::Compare(args) => {
            let sc = args.scenario.scenario()?;
            let rows = compare(&sc, &ControllerKind::ALL)?;
            for m in &rows {
                eprintln!("{}", summary(m));
            }
            write_comparison_csv(&rows, output(args.out.as_deref())?)?;
        }
        Command::GenGrid(args) => {
            let net = build_grid(args.grid.rows, args.grid.cols, args.link_m, args.link_m, args.sat_flow)?;
            let mut w = output(args.out.as_deref())?;
            writeln!(w, "{}", net.to_json_string()?)?;
        }
        Command::GenFlow(args) => {
            let net = args.network.load()?;
            let vehicles = generate_uniform_flow(&net, args.rate, args.duration, args.seed)?;
            let spec = FlowSpec::Vehicles(vehicles.iter().map(|v| v.record()).collect());
            let mut w = output(args.out.as_deref())?;
            writeln!(w, "{}", spec.to_json_string()?)?;
        }
        Command::CommDelay(args) => {
            let net = build_grid(
                args.grid.rows,
                args.grid.cols,
                GRID_LINK_M,
                GRID_LINK_M,
                DEFAULT_SAT_FLOW,
            )?;
            let cg = build_cg(&QueueState::zeros(&net), &net, &TurningModel::uniform(&net))?;
            let order = tsc_core::dag::min_diameter_dag(&cg)?;
            let mut model = DelayModel::new(args.mu_ms, args.seed);
            if let Some(n) = args.nodes {
                model = model.partitioned(n);
            }
            let ms = simulate_comm_delay(&order, args.passes, &model)?;
            println!("{ms:.3}");
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
