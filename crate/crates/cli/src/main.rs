//! `amm`: device-independent and trusted-side steering and incompatibility
//! bounds from the command line. Reports are JSON; sweeps are CSV.
//!
//! Exit codes: 0 success, 1 infeasible or failed assertion, 2 usage or input
//! error, 3 solver failure.

mod inputs;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use amm::conic::SolverOptions;
use amm::incompat::{self, QubitBinaryObservable};
use amm::moments::{block_stats, build_layout, parse_word, LayoutOptions};
use amm::programs::{self, DiInput, DiOptions, Quantity, ReportStatus, RobustnessReport, TrustedOptions};
use amm::quantum::{self, MeasurementsJson, StateAssemblage};
use amm::scenario::{CorrelationTable, TableJson, DEFAULT_STRATEGY_CAP};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or malformed input.
    Usage(String),
    /// Infeasible program or violated assertion.
    Infeasible(String),
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<amm::Error> for CliError {
    fn from(e: amm::Error) -> Self {
        match e {
            amm::Error::UnattainableValue { .. } => CliError::Infeasible(e.to_string()),
            amm::Error::NoConvergence | amm::Error::Solver(_) => CliError::Solver(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "amm", version, about = "Assemblage-moment-matrix bounds on steering, nonlocality and incompatibility")]
struct Cli {
    /// Repeat for more detail; `-vv` streams solver iterations.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Write the report here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Default for both the gap and feasibility tolerances.
    #[arg(long, env = "AMM_TOL", global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    gap_tol: Option<f64>,
    #[arg(long, global = true)]
    feas_tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 200)]
    max_iter: usize,
    /// Maximum number of deterministic strategies.
    #[arg(long, global = true, default_value_t = DEFAULT_STRATEGY_CAP)]
    strategy_cap: usize,
}

impl SolverArgs {
    fn options(&self) -> Result<SolverOptions, CliError> {
        let d = SolverOptions::default();
        let opts = SolverOptions {
            gap_tol: self.gap_tol.or(self.tol).unwrap_or(d.gap_tol),
            feas_tol: self.feas_tol.or(self.tol).unwrap_or(d.feas_tol),
            max_iter: self.max_iter,
        };
        if !(opts.gap_tol > 0.0 && opts.feas_tol > 0.0) {
            return Err(CliError::Usage("tolerances must be positive".into()));
        }
        Ok(opts)
    }

    fn trusted(&self) -> Result<TrustedOptions, CliError> {
        Ok(TrustedOptions {
            solver: self.options()?,
            strategy_cap: self.strategy_cap,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Born-rule correlation table of a state and two measurement sets.
    Simulate(SimulateArgs),
    /// Level-ℓ quantum membership test of a table.
    Membership(MembershipArgs),
    /// Level-ℓ upper bound on a functional's quantum maximum.
    Tsirelson(TsirelsonArgs),
    /// Device-independent lower bound on steering robustness.
    SrDi(DiArgs),
    /// Device-independent lower bound on steerable weight.
    SwDi(DiArgs),
    /// Steering robustness of an assemblage.
    Sr(AssemblageArgs),
    /// Steerable weight of an assemblage.
    Sw(AssemblageArgs),
    /// Incompatibility robustness of a measurement set.
    Ir(IrArgs),
    /// Steering-equivalent observables of an assemblage.
    SeObs(SeArgs),
    /// Busch joint-measurability criterion for two unbiased qubit observables.
    Busch(BuschArgs),
    /// IR(A) ≥ IR(SE) ≥ SR for a state and Alice's measurements.
    Chain(ChainArgs),
    /// CSV of a DI bound over a grid of Bell values.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct QuantumArgs {
    /// State fixture (`phi-plus-d2`, `mixed-d3`, …) or JSON file.
    #[arg(long)]
    state: Option<String>,
    /// Alice's measurement fixture (`mub-pair`, `chsh-alice`, …) or JSON file.
    #[arg(long)]
    alice: Option<String>,
    /// Bob's measurement fixture or JSON file.
    #[arg(long)]
    bob: Option<String>,
}

impl QuantumArgs {
    fn state_and_alice(&self) -> Result<(quantum::DensityMatrix, quantum::MeasurementAssemblage), CliError> {
        let (Some(s), Some(a)) = (&self.state, &self.alice) else {
            return Err(CliError::Usage("--state and --alice are required".into()));
        };
        Ok((inputs::state(s)?, inputs::measurements(a)?))
    }

    fn table(&self) -> Result<CorrelationTable, CliError> {
        let (state, alice) = self.state_and_alice()?;
        let Some(b) = &self.bob else {
            return Err(CliError::Usage("--bob is required to simulate a table".into()));
        };
        Ok(quantum::born_table(&state, &alice, &inputs::measurements(b)?)?)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    quantum: QuantumArgs,
    /// Also simulate with Bob's measurements replaced by their Neumark
    /// dilation and report the largest probability change.
    #[arg(long)]
    dilate: bool,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Correlation table JSON file.
    #[arg(long, conflicts_with_all = ["state", "alice", "bob"])]
    table: Option<PathBuf>,
    #[command(flatten)]
    quantum: QuantumArgs,
}

impl TableArgs {
    fn load(&self) -> Result<CorrelationTable, CliError> {
        match &self.table {
            Some(p) => inputs::table(p),
            None => self.quantum.table(),
        }
    }
}

#[derive(Args, Debug)]
struct LevelArgs {
    /// Hierarchy level ℓ.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    level: u64,
    /// Extra moment-matrix row such as "B1|1 B1|2" (1-based outcome|setting).
    #[arg(long = "word")]
    words: Vec<String>,
    /// Include block dimensions and counts in the report.
    #[arg(long)]
    layout_stats: bool,
}

impl LevelArgs {
    fn options(&self, solver: &SolverArgs, at_least: bool) -> Result<DiOptions, CliError> {
        let mut o = DiOptions::level(self.level as usize);
        o.extra_words = self.words.iter().map(|w| parse_word(w)).collect::<amm::Result<_>>()?;
        o.solver = solver.options()?;
        o.strategy_cap = solver.strategy_cap;
        o.at_least = at_least;
        Ok(o)
    }
}

#[derive(Args, Debug)]
struct MembershipArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    level: LevelArgs,
}

#[derive(Args, Debug)]
struct TsirelsonArgs {
    /// Built-in functional (chsh, elegant, i3322, i2233, i3plus) or JSON file.
    #[arg(long)]
    functional: String,
    /// Use the functional with Alice and Bob exchanged.
    #[arg(long)]
    swap: bool,
    #[command(flatten)]
    level: LevelArgs,
}

#[derive(Args, Debug)]
struct DiArgs {
    /// Functional for the Bell-value form.
    #[arg(long, requires = "value", conflicts_with = "table")]
    functional: Option<String>,
    /// Observed Bell value S_obs.
    #[arg(long, requires = "functional", allow_hyphen_values = true)]
    value: Option<f64>,
    /// Constrain S ≥ S_obs instead of S = S_obs.
    #[arg(long)]
    at_least: bool,
    /// Bound Bob's steering of Alice instead (transposed data).
    #[arg(long)]
    swap: bool,
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    level: LevelArgs,
}

#[derive(Args, Debug)]
struct AssemblageArgs {
    /// Assemblage JSON file; otherwise steer --state with --alice.
    #[arg(long, conflicts_with_all = ["state", "alice"])]
    assemblage: Option<PathBuf>,
    #[command(flatten)]
    quantum: QuantumArgs,
}

impl AssemblageArgs {
    fn load(&self) -> Result<StateAssemblage, CliError> {
        match &self.assemblage {
            Some(p) => inputs::assemblage(p),
            None => {
                let (s, a) = self.quantum.state_and_alice()?;
                Ok(quantum::steer(&s, &a)?)
            }
        }
    }
}

#[derive(Args, Debug)]
struct IrArgs {
    /// Measurement fixture or JSON file.
    #[arg(long, conflicts_with = "observables")]
    alice: Option<String>,
    /// JSON list of binary qubit observables `[{"alpha": 0, "r": [x, y, z]}, …]`.
    #[arg(long)]
    observables: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeArgs {
    #[command(flatten)]
    source: AssemblageArgs,
    /// Relative eigenvalue cutoff defining the range of the reduced state.
    #[arg(long, default_value_t = amm::matlin::DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Also compute the IR of the observables.
    #[arg(long)]
    with_ir: bool,
}

#[derive(Args, Debug)]
struct BuschArgs {
    /// Bloch vector `x,y,z` of the first observable.
    #[arg(long, value_parser = inputs::vector3, allow_hyphen_values = true, required_unless_present = "mub")]
    r1: Option<[f64; 3]>,
    /// Bloch vector `x,y,z` of the second observable.
    #[arg(long, value_parser = inputs::vector3, allow_hyphen_values = true, required_unless_present = "mub")]
    r2: Option<[f64; 3]>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha2: f64,
    /// Closed-form IR of the qubit X/Z pair instead.
    #[arg(long, conflicts_with_all = ["r1", "r2"])]
    mub: bool,
}

#[derive(Args, Debug)]
struct ChainArgs {
    #[command(flatten)]
    quantum: QuantumArgs,
    /// Run the three solves on separate threads.
    #[arg(long)]
    concurrent: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SweepQuantity {
    Sr,
    Sw,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    functional: String,
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, allow_hyphen_values = true)]
    to: f64,
    #[arg(long, default_value_t = 9)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = SweepQuantity::Sr)]
    quantity: SweepQuantity,
    #[arg(long)]
    at_least: bool,
    #[arg(long)]
    swap: bool,
    /// Concurrent solves.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    level: LevelArgs,
}

fn status_code(status: ReportStatus) -> u8 {
    match status {
        ReportStatus::Optimal | ReportStatus::NearOptimal | ReportStatus::Feasible => 0,
        ReportStatus::Infeasible => 1,
        ReportStatus::Inconclusive | ReportStatus::MaxIter | ReportStatus::NumericalFailure => 3,
    }
}

fn with_layout(report: &RobustnessReport, args: &LevelArgs, opts: &DiOptions) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(report).map_err(amm::Error::from)?;
    if args.layout_stats {
        if let Some(s) = report.scenario {
            let layout = build_layout(&s, opts.level, &opts.extra_words, LayoutOptions::default())?;
            v["layout"] = serde_json::to_value(block_stats(&layout, &s)).map_err(amm::Error::from)?;
        }
    }
    Ok(v)
}

struct Outcome {
    body: String,
    code: u8,
}

fn json_outcome(v: &Value, code: u8) -> Result<Outcome, CliError> {
    let mut body = serde_json::to_string_pretty(v).map_err(amm::Error::from)?;
    body.push('\n');
    Ok(Outcome { body, code })
}

fn report_outcome(v: Value, status: ReportStatus) -> Result<Outcome, CliError> {
    json_outcome(&v, status_code(status))
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let sa = &cli.solver;
    match &cli.command {
        Command::Simulate(args) => {
            let (state, alice) = args.quantum.state_and_alice()?;
            let Some(b) = &args.quantum.bob else {
                return Err(CliError::Usage("--bob is required".into()));
            };
            let bob = inputs::measurements(b)?;
            let table = quantum::born_table(&state, &alice, &bob)?;
            let mut v = serde_json::to_value(TableJson::from_table(&table)).map_err(amm::Error::from)?;
            if args.dilate {
                let asm = quantum::steer(&state, &alice)?;
                let dil = quantum::neumark_dilate(&bob)?;
                let embedded = (0..asm.n_settings())
                    .map(|x| (0..asm.n_outcomes()).map(|a| dil.embed(asm.get(a, x))).collect())
                    .collect::<amm::Result<Vec<Vec<_>>>>()?;
                let dilated = StateAssemblage::from_parts(embedded)?.born_table(&dil.assemblage)?;
                v["neumark"] = json!({
                    "dim": dil.dim,
                    "projective": dil.assemblage.is_projective(1e-9),
                    "max_probability_change": table.max_abs_diff(&dilated),
                });
            }
            json_outcome(&v, 0)
        }
        Command::Membership(args) => {
            let table = args.table.load()?;
            let opts = args.level.options(sa, false)?;
            let r = programs::di_membership(&table, &opts)?;
            report_outcome(with_layout(&r, &args.level, &opts)?, r.status)
        }
        Command::Tsirelson(args) => {
            let mut f = inputs::functional(&args.functional)?;
            if args.swap {
                f = f.swapped();
            }
            let opts = args.level.options(sa, false)?;
            let r = programs::di_tsirelson(&f, &opts)?;
            report_outcome(with_layout(&r, &args.level, &opts)?, r.status)
        }
        Command::SrDi(args) | Command::SwDi(args) => {
            let quantity = if matches!(cli.command, Command::SrDi(_)) {
                Quantity::Sr
            } else {
                Quantity::Sw
            };
            let opts = args.level.options(sa, args.at_least)?;
            let r = match (&args.functional, args.value) {
                (Some(name), Some(s_obs)) => {
                    let mut f = inputs::functional(name)?;
                    if args.swap {
                        f = f.swapped();
                    }
                    let input = DiInput::BellValue { functional: &f, s_obs };
                    match quantity {
                        Quantity::Sr => programs::di_sr(input, &opts)?,
                        _ => programs::di_sw(input, &opts)?,
                    }
                }
                _ => {
                    let mut t = args.table.load()?;
                    if args.swap {
                        t = programs::swap_roles(&t);
                    }
                    let input = DiInput::Table(&t);
                    match quantity {
                        Quantity::Sr => programs::di_sr(input, &opts)?,
                        _ => programs::di_sw(input, &opts)?,
                    }
                }
            };
            report_outcome(with_layout(&r, &args.level, &opts)?, r.status)
        }
        Command::Sr(args) | Command::Sw(args) => {
            let asm = args.load()?;
            let opts = sa.trusted()?;
            let r = if matches!(cli.command, Command::Sr(_)) {
                programs::sr_assemblage(&asm, &opts)?
            } else {
                programs::sw_assemblage(&asm, &opts)?
            };
            report_outcome(serde_json::to_value(&r).map_err(amm::Error::from)?, r.status)
        }
        Command::Ir(args) => {
            let m = match (&args.alice, &args.observables) {
                (Some(a), None) => inputs::measurements(a)?,
                (None, Some(p)) => incompat::observables_assemblage(&inputs::observables(p)?)?,
                _ => return Err(CliError::Usage("give exactly one of --alice or --observables".into())),
            };
            let r = incompat::ir(&m, &sa.trusted()?)?;
            report_outcome(serde_json::to_value(&r).map_err(amm::Error::from)?, r.status)
        }
        Command::SeObs(args) => {
            let asm = args.source.load()?;
            let se = incompat::se_observables(&asm, args.rank_tol)?;
            let mut v = serde_json::to_value(MeasurementsJson::from_assemblage(&se)).map_err(amm::Error::from)?;
            let mut code = 0;
            if args.with_ir {
                let r = incompat::ir(&se, &sa.trusted()?)?;
                code = status_code(r.status);
                v["ir"] = serde_json::to_value(&r).map_err(amm::Error::from)?;
            }
            json_outcome(&v, code)
        }
        Command::Busch(args) => {
            if args.mub {
                let cert = incompat::busch_ir_mub();
                return json_outcome(&serde_json::to_value(&cert).map_err(amm::Error::from)?, 0);
            }
            let (Some(r1), Some(r2)) = (args.r1, args.r2) else {
                return Err(CliError::Usage("--r1 and --r2 are required".into()));
            };
            let o1 = QubitBinaryObservable::new(args.alpha1, r1)?;
            let o2 = QubitBinaryObservable::new(args.alpha2, r2)?;
            let jm = incompat::busch_jm(&o1, &o2)?;
            let v = json!({
                "schema_version": amm::SCHEMA_VERSION,
                "jointly_measurable": jm,
                "lhs": incompat::busch_lhs(r1, r2),
                "bound": 2.0,
            });
            json_outcome(&v, 0)
        }
        Command::Chain(args) => {
            let (state, alice) = args.quantum.state_and_alice()?;
            let report = incompat::verify_chain(&state, &alice, &sa.trusted()?, args.concurrent)?;
            let statuses = [report.ir_alice.status, report.ir_se.status, report.sr.status];
            let code = statuses.iter().map(|s| status_code(*s)).max().unwrap_or(0);
            let code = if code == 0 && !report.ordered { 1 } else { code };
            let mut v = serde_json::to_value(&report).map_err(amm::Error::from)?;
            v["schema_version"] = json!(amm::SCHEMA_VERSION);
            json_outcome(&v, code)
        }
        Command::Sweep(args) => {
            let mut f = inputs::functional(&args.functional)?;
            if args.swap {
                f = f.swapped();
            }
            let opts = args.level.options(sa, args.at_least)?;
            let quantity = match args.quantity {
                SweepQuantity::Sr => Quantity::Sr,
                SweepQuantity::Sw => Quantity::Sw,
            };
            let rows = programs::sweep(&f, args.from, args.to, args.steps, quantity, &opts, args.jobs)?;
            let mut body = String::from("s_obs,bound,level\n");
            let mut code = 0;
            for r in &rows {
                body.push_str(&format!("{},{},{}\n", r.s_obs, r.bound, r.level));
                code = code.max(status_code(r.status));
            }
            Ok(Outcome { body, code })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_env("AMM_LOG").init();
    match run(&cli) {
        Ok(out) => {
            let written = match &cli.output {
                Some(p) => std::fs::write(p, &out.body),
                None => std::io::stdout().write_all(out.body.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Infeasible(m) | CliError::Solver(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}
