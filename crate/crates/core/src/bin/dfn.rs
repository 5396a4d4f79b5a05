use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use dfn::diagnostics::{duality_check, gradient_check, hessian_check, monotonicity_suite, CheckOutcome};
use dfn::format::{from_file, parse_file, read_file, FormatError, Instance, Units};
use dfn::gas::potential_to_pressure;
use dfn::micp::{optimality_gap, solve_micp, BnbSettings, MicpResult, MicpStatus};
use dfn::report::{sweep, GapTable};
use dfn::throughput::{solve_throughput_energy, EnergySettings, Formulation, ThroughputSolution};
use dfn::{solve_nf, Injections, ModelError, Network, NewtonSettings, OptimizeError, SolveError};

const BUILTIN_EXAMPLE: &str = include_str!("../../examples/paper_like.json");

#[derive(Parser)]
#[command(name = "dfn", version, about = "Dissipative flow networks: flow solves and max-throughput bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the network-flow equations for the injections in the file.
    SolveNf(SolveNfArgs),
    /// Maximize throughput: heuristic upper bound, MICP lower bound, or both.
    Maxflow(MaxflowArgs),
    /// Randomized self-checks of gradients, Hessians, monotonicity and duality.
    Check(CheckArgs),
    /// Gap tables over the standard potential-cap sweep.
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Network file (JSON).
    file: PathBuf,
    /// Interpret node values as potentials or pressures, overriding the file.
    #[arg(long, value_enum)]
    units: Option<UnitsArg>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Potential,
    Pressure,
}

#[derive(Args)]
struct NewtonArgs {
    /// Newton gradient tolerance.
    #[arg(long, default_value_t = 1e-10, value_parser = positive)]
    grad_tol: f64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
}

impl NewtonArgs {
    fn settings(&self) -> NewtonSettings {
        NewtonSettings {
            grad_tol: self.grad_tol,
            max_iter: self.max_iter as usize,
            ..NewtonSettings::default()
        }
    }
}

#[derive(Args)]
struct SolveNfArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    newton: NewtonArgs,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Energy,
    Micp,
    Both,
}

#[derive(Args)]
struct MaxflowArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    method: Method,
    /// Treat every compressor range in the file as a decision variable.
    #[arg(long)]
    with_compressors: bool,
    /// Final penalty weight of the energy heuristic.
    #[arg(long, default_value_t = 1e4, value_parser = positive)]
    big_m: f64,
    /// Gap tolerance of the constrained formulation.
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = FormulationArg::Penalty)]
    formulation: FormulationArg,
    /// Relative optimality gap at which branch-and-bound stops.
    #[arg(long, default_value_t = 1e-6, value_parser = nonnegative)]
    gap_tol: f64,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    node_limit: u64,
    /// Objective of a known feasible point, used as the initial incumbent.
    #[arg(long)]
    seed_upper: Option<f64>,
    #[command(flatten)]
    newton: NewtonArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    /// Fenchel-gap constraint `≤ ε`.
    Constrained,
    /// Big-M penalty.
    Penalty,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    gradients: bool,
    #[arg(long)]
    hessians: bool,
    #[arg(long)]
    monotonicity: bool,
    #[arg(long)]
    duality: bool,
    /// Seed of the random instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances per check.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    cases: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Network file; the bundled 16-node example when omitted.
    file: Option<PathBuf>,
    #[arg(long, value_enum)]
    units: Option<UnitsArg>,
    #[arg(long, value_enum, default_value_t = Compression::Both)]
    compression: Compression,
    /// Render a table from a JSON fixture instead of solving.
    #[arg(long, conflicts_with_all = ["file", "compression"])]
    fixture: Option<PathBuf>,
    /// Emit CSV instead of the aligned text table.
    #[arg(long)]
    csv: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    node_limit: u64,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Compression {
    Off,
    On,
    Both,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a nonnegative number, got {s:?}")),
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Format(_) | CliError::Model(_) => 2,
            CliError::Solve(SolveError::Model(_)) | CliError::Optimize(OptimizeError::Model(_)) => 2,
            CliError::Optimize(OptimizeError::Solve(SolveError::Model(_))) => 2,
            CliError::Optimize(OptimizeError::MismatchedScenario(_)) => 2,
            CliError::Infeasible(_) | CliError::Optimize(OptimizeError::InfeasibleScenario(_)) => 4,
            CliError::Solve(_) | CliError::Optimize(_) => 3,
            CliError::Io(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveNf(args) => solve_nf_cmd(&args),
        Command::Maxflow(args) => maxflow_cmd(&args),
        Command::Check(args) => check_cmd(&args),
        Command::Report(args) => report_cmd(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(path: &Path, units: Option<UnitsArg>) -> Result<Instance, CliError> {
    let mut file = read_file(path)?;
    override_units(&mut file.meta.units, units);
    Ok(from_file(&file)?)
}

fn override_units(units: &mut Units, flag: Option<UnitsArg>) {
    match flag {
        Some(UnitsArg::Potential) => *units = Units::Potential,
        Some(UnitsArg::Pressure) => *units = Units::Pressure,
        None => {}
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(value: &Value, output: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize") + "\n";
    emit(&text, output)
}

fn by_node(network: &Network, values: &[f64]) -> BTreeMap<String, f64> {
    network.node_names().iter().cloned().zip(values.iter().copied()).collect()
}

fn by_edge(network: &Network, values: &[f64]) -> BTreeMap<String, f64> {
    (0..network.num_edges())
        .map(|e| (network.edge_name(e).to_string(), values[e]))
        .collect()
}

fn pressures(inst: &Instance, pi: &[f64]) -> Option<BTreeMap<String, f64>> {
    (inst.units == Units::Pressure).then(|| {
        let p: Vec<f64> = pi.iter().map(|v| potential_to_pressure(*v)).collect();
        by_node(&inst.network, &p)
    })
}

fn solve_nf_cmd(args: &SolveNfArgs) -> Result<(), CliError> {
    let inst = load(&args.input.file, args.input.units)?;
    let net = &inst.network;
    let x = inst.injections.clone().unwrap_or_else(|| Injections::zeros(net));
    let b = net.nominal_boosts();
    let sol = solve_nf(net, &x, &b, &args.newton.settings())?;
    let mut out = json!({
        "iterations": sol.iterations,
        "kkt_residual": sol.kkt_residual,
        "slack_injection": sol.slack_injection,
        "energy": sol.dual_value,
        "potentials": by_node(net, &sol.state.pi),
        "flows": by_edge(net, &sol.state.phi),
    });
    if let Some(p) = pressures(&inst, &sol.state.pi) {
        out["pressures"] = json!(p);
    }
    emit_json(&out, args.input.output.as_deref())
}

fn energy_json(inst: &Instance, s: &ThroughputSolution) -> Value {
    let net = &inst.network;
    let mut v = json!({
        "objective": s.objective,
        "feasible": s.feasible,
        "converged": s.converged,
        "penalty_gap": s.penalty_gap,
        "max_violation": s.max_violation,
        "outer_iterations": s.outer_iterations,
        "injections": by_node(net, &s.x.full()),
        "potentials": by_node(net, &s.pi),
        "boosts": by_edge(net, &s.b),
        "flows": by_edge(net, &s.phi),
    });
    if let Some(p) = pressures(inst, &s.pi) {
        v["pressures"] = json!(p);
    }
    v
}

fn micp_json(inst: &Instance, m: &MicpResult) -> Value {
    let mut v = json!({
        "lower_bound": m.lower_bound,
        "incumbent": m.incumbent,
        "status": format!("{:?}", m.status),
        "nodes_explored": m.nodes_explored,
    });
    if let Some(p) = &m.best_point {
        v["relaxed_point"] = json!({
            "injections": by_node(&inst.network, &p.x.full()),
            "potentials": by_node(&inst.network, &p.pi),
            "flows": by_edge(&inst.network, &p.phi),
        });
    }
    v
}

fn maxflow_cmd(args: &MaxflowArgs) -> Result<(), CliError> {
    let mut inst = load(&args.input.file, args.input.units)?;
    inst.scenario = inst.scenario.with_compression(args.with_compressors);
    let energy_settings = EnergySettings {
        method: match args.formulation {
            FormulationArg::Constrained => Formulation::Formulation1,
            FormulationArg::Penalty => Formulation::Formulation2,
        },
        epsilon: args.epsilon,
        big_m: args.big_m,
        b_variable: args.with_compressors,
        newton: args.newton.settings(),
        ..EnergySettings::default()
    };
    let mut out = json!({
        "method": match args.method {
            Method::Energy => "energy",
            Method::Micp => "micp",
            Method::Both => "both",
        }
    });

    let mut upper = None;
    if args.method != Method::Micp {
        let s = solve_throughput_energy(&inst.network, &inst.scenario, &energy_settings)?;
        out["energy"] = energy_json(&inst, &s);
        upper = Some(s);
    }
    if args.method != Method::Energy {
        let bnb = BnbSettings {
            rel_gap_tol: args.gap_tol,
            max_nodes: args.node_limit as usize,
            seed_upper: args.seed_upper.or(upper.as_ref().map(|s| s.objective)),
            ..BnbSettings::default()
        };
        let m = solve_micp(&inst.network, &inst.scenario, &bnb)?;
        out["micp"] = micp_json(&inst, &m);
        if m.status == MicpStatus::Infeasible {
            emit_json(&out, args.input.output.as_deref())?;
            return Err(CliError::Infeasible("the relaxation is infeasible, so is the scenario".into()));
        }
        if let Some(s) = &upper {
            let gap = optimality_gap(s, &m)?;
            out["gap"] = json!(gap);
            out["gap_percent"] = json!(if s.objective != 0.0 { 100.0 * gap / s.objective.abs() } else { 0.0 });
        }
    }
    emit_json(&out, args.input.output.as_deref())
}

fn check_cmd(args: &CheckArgs) -> Result<(), CliError> {
    let all = !(args.gradients || args.hessians || args.monotonicity || args.duality);
    let settings = NewtonSettings::default();
    let cases = args.cases as usize;
    let mut outcomes: Vec<CheckOutcome> = Vec::new();
    if all || args.gradients {
        outcomes.push(gradient_check(args.seed, cases, &settings)?);
    }
    if all || args.hessians {
        outcomes.push(hessian_check(args.seed, cases, &settings)?);
    }
    if all || args.monotonicity {
        outcomes.push(monotonicity_suite(args.seed, cases, &settings)?);
    }
    if all || args.duality {
        outcomes.push(duality_check(args.seed, cases, &settings)?);
    }
    for o in &outcomes {
        println!("{o}");
    }
    match outcomes.iter().filter(|o| !o.passed()).count() {
        0 => Ok(()),
        n => Err(CliError::ChecksFailed(n)),
    }
}

fn report_cmd(args: &ReportArgs) -> Result<(), CliError> {
    let render = |t: &GapTable| if args.csv { t.to_csv() } else { t.to_text() };
    if let Some(path) = &args.fixture {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let table: GapTable = serde_json::from_str(&text).map_err(|e| FormatError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        return emit(&render(&table), args.output.as_deref());
    }
    let inst = match &args.file {
        Some(path) => load(path, args.units)?,
        None => {
            let mut file = parse_file(BUILTIN_EXAMPLE)?;
            override_units(&mut file.meta.units, args.units);
            from_file(&file)?
        }
    };
    let bnb = BnbSettings {
        max_nodes: args.node_limit as usize,
        ..BnbSettings::default()
    };
    let modes: &[bool] = match args.compression {
        Compression::Off => &[false],
        Compression::On => &[true],
        Compression::Both => &[false, true],
    };
    let mut text = String::new();
    for (k, &on) in modes.iter().enumerate() {
        let table = sweep(&inst.network, &inst.scenario, on, &EnergySettings::default(), &bnb);
        if k > 0 && !args.csv {
            text.push('\n');
        }
        let rendered = render(&table);
        if args.csv && k > 0 {
            // one header for the whole file
            text.extend(rendered.lines().skip(1).map(|l| format!("{l}\n")));
        } else {
            text.push_str(&rendered);
        }
    }
    emit(&text, args.output.as_deref())
}
