//! `quip` command-line front end.
//!
//! Exit codes: 0 success (optimal or certified), 2 a time limit cut a solve
//! short and the incumbent was returned, 1 any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use quip::acquisition::{enumerate_acquisition, optimize_acquisition, AcqStatus, AcquisitionSpec, DEFAULT_GAP, DEFAULT_LAMBDA};
use quip::bench::{
    bound_oracle_scatter, initial_design, initial_design_bench, run_bench, BenchPlan, ProblemKind, ProblemSpec,
    ScatterPlan,
};
use quip::bounds::{q0, BoundQuery};
use quip::encoding::SCHEMA_VERSION;
use quip::gp::FitConfig;
use quip::maximin::{brute_force_maximin, optimize_maximin, TraceEntry};
use quip::sequential::{run_campaign, CampaignConfig, Method};
use quip::simulators::{maze_cost, rover_cost, snake_reward, Action, GridWorld, ObstacleCourse, Objective, TableObjective};
use quip::{Design, Error, GpModel, Point};

#[derive(Parser)]
#[command(name = "quip", version, about = "Maximin designs, Gaussian-process surrogates and certified acquisition search on categorical lattices")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Seconds allowed per solve (feasibility program or acquisition search).
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Relative optimality gap at which acquisition search stops, in [0, 1).
    #[arg(long, global = true, default_value_t = DEFAULT_GAP)]
    gap: f64,
    /// Progress on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn time_limit(&self) -> Option<Duration> {
        self.time_limit.map(Duration::from_secs_f64)
    }

    fn validate(&self) -> Result<(), Error> {
        if !(0.0..1.0).contains(&self.gap) {
            return Err(Error::InvalidParameter(format!("--gap must lie in [0, 1), got {}", self.gap)));
        }
        if let Some(t) = self.time_limit {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidParameter(format!("--time-limit must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct Lattice {
    /// Number of design points.
    #[arg(long)]
    n: usize,
    /// Number of factors.
    #[arg(long)]
    d: usize,
    /// Levels per factor.
    #[arg(long = "M", value_name = "M")]
    m: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Acq {
    Alm,
    Ucb,
}

#[derive(Args)]
struct AcqArgs {
    #[arg(long, value_enum, default_value_t = Acq::Ucb)]
    acq: Acq,
    /// UCB exploration weight.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

impl AcqArgs {
    fn spec(&self, global: &Global) -> AcquisitionSpec {
        let spec = match self.acq {
            Acq::Alm => AcquisitionSpec::alm(),
            Acq::Ucb => AcquisitionSpec::ucb(self.lambda),
        };
        spec.with_gap(global.gap).with_time_limit(global.time_limit())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Maze,
    Snake,
    Rover,
}

impl From<Problem> for ProblemKind {
    fn from(p: Problem) -> Self {
        match p {
            Problem::Maze => ProblemKind::Maze,
            Problem::Snake => ProblemKind::Snake,
            Problem::Rover => ProblemKind::Rover,
        }
    }
}

#[derive(Args)]
struct ProblemArgs {
    /// Built-in simulator.
    #[arg(long, value_enum)]
    problem: Option<Problem>,
    /// Alternative world or course JSON for the simulator.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Decision-path length (number of factors).
    #[arg(long)]
    path_length: Option<usize>,
    /// Comma-separated action subset for grid problems, e.g. `up,right,stay`.
    #[arg(long, value_delimiter = ',')]
    actions: Option<Vec<String>>,
    /// Lookup-table objective instead of a simulator: CSV rows `l1,...,ld,value`.
    #[arg(long, conflicts_with = "problem")]
    table: Option<PathBuf>,
    /// Level count for `--table`.
    #[arg(long = "M", value_name = "M", requires = "table")]
    m: Option<u32>,
}

fn parse_actions(names: &[String]) -> Result<Vec<Action>, Error> {
    names
        .iter()
        .map(|s| {
            serde_json::from_value(json!(s.trim().to_lowercase()))
                .map_err(|_| Error::Parse(format!("unknown action {s:?} (expected up, down, left, right, stay)")))
        })
        .collect()
}

impl ProblemArgs {
    fn spec(&self, kind: Problem) -> Result<ProblemSpec, Error> {
        Ok(ProblemSpec {
            kind: kind.into(),
            config: self.config.clone(),
            path_length: self.path_length,
            actions: self.actions.as_deref().map(parse_actions).transpose()?,
        })
    }

    fn objective(&self) -> Result<Box<dyn Objective>, Error> {
        match (&self.table, self.problem) {
            (Some(path), _) => {
                let m = self.m.ok_or_else(|| Error::InvalidParameter("--table needs --M".into()))?;
                Ok(Box::new(TableObjective::from_csv_str(&std::fs::read_to_string(path)?, m)?))
            }
            (None, Some(kind)) => self.spec(kind)?.objective(),
            (None, None) => Err(Error::InvalidParameter("give --problem or --table".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Quip,
    Random,
    Candidate,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    /// Replicated sequential campaigns (a `BenchPlan`).
    Campaign,
    /// Certified bound versus enumerated optimum (a `ScatterPlan`).
    Scatter,
    /// Maximin quality over `{"cases": [[n, d, M], ...]}`.
    Designs,
}

#[derive(Subcommand)]
enum Command {
    /// Starting distance q0 for the maximin search.
    Bound {
        #[command(flatten)]
        lattice: Lattice,
        /// Emit JSON.
        #[arg(long)]
        json: bool,
    },
    /// Maximin design by iterated feasibility programs.
    Design {
        #[command(flatten)]
        lattice: Lattice,
        /// Write the design JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum-likelihood fit of the exchangeable-kernel GP.
    Fit {
        /// Design file (`.json` or headerless `.csv`).
        #[arg(long)]
        design: PathBuf,
        /// One response per line, in design order.
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Next point by branch-and-bound acquisition optimization.
    Suggest {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        acq: AcqArgs,
    },
    /// Sequential design campaign against a simulator or lookup table.
    Sequential {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Initial design file; a maximin design of `--n-init` points otherwise.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_init: usize,
        #[arg(long, default_value_t = 20)]
        n_seq: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Quip)]
        method: MethodArg,
        /// Candidates per iteration for `--method candidate`.
        #[arg(long, default_value_t = 1000)]
        candidates: usize,
        #[command(flatten)]
        acq: AcqArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one decision path and print the step-by-step trace.
    Simulate {
        #[arg(long, value_enum)]
        problem: Problem,
        /// Comma-separated 1-based action codes.
        #[arg(long, value_delimiter = ',', required = true)]
        path: Vec<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        actions: Option<Vec<String>>,
    },
    /// Benchmarks: campaign comparisons, bound scatter, initial-design quality.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, value_enum, default_value_t = BenchKind::Campaign)]
        kind: BenchKind,
        /// Output directory.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Exhaustive reference solvers.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Brute-force maximin over all designs.
    Maximin {
        #[command(flatten)]
        lattice: Lattice,
    },
    /// Acquisition optimum by full lattice enumeration.
    Acquisition {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        acq: AcqArgs,
    },
}

/// What a subcommand finished with.
enum Outcome {
    Done,
    Incumbent,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values serialize")
}

fn read_responses(path: &Path) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|e| Error::Parse(format!("{}: line {}, field 1: {field:?}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn read_model(path: &Path) -> Result<GpModel, Error> {
    GpModel::from_json_str(&std::fs::read_to_string(path)?)
}

fn acq_json(kind: &str, point: &Point, value: f64) -> serde_json::Value {
    json!({"schema_version": SCHEMA_VERSION, "acquisition": kind, "point": point.levels(), "value": value})
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    let g = &cli.global;
    g.validate()?;
    match &cli.command {
        Command::Bound { lattice, json } => {
            let r = q0(BoundQuery::new(lattice.n, lattice.d, lattice.m)?);
            if *json {
                println!(
                    "{}",
                    pretty(&json!({
                        "schema_version": SCHEMA_VERSION,
                        "n": lattice.n, "d": lattice.d, "M": lattice.m,
                        "q0": r.q0,
                        "lattice_size": r.lattice_size.to_string(),
                        "sphere_sum": r.sphere_sum.to_string(),
                        "condition_met": r.condition_met,
                    }))
                );
            } else {
                println!("q0 = {}", r.q0);
                if g.verbose > 0 {
                    eprintln!("M^d = {}, sphere sum at q0 = {}, condition met: {}", r.lattice_size, r.sphere_sum, r.condition_met);
                }
            }
            Ok(Outcome::Done)
        }
        Command::Design { lattice, out } => {
            let res = optimize_maximin(lattice.n, lattice.d, lattice.m, g.time_limit())?;
            println!("q* = {}", res.q_star);
            eprintln!(
                "q0 = {}, certified: {}, {} programs, {} nodes, {:.3}s",
                res.q0,
                res.certified,
                res.trace.len(),
                res.total_nodes(),
                res.total_elapsed()
            );
            if g.verbose > 0 {
                for t in res.trace.iter().map(TraceEntry::from) {
                    eprintln!("{}", serde_json::to_string(&t)?);
                }
            }
            let mut file = serde_json::to_value(res.design.to_file())?;
            file["q_star"] = json!(res.q_star);
            file["certified"] = json!(res.certified);
            file["q0"] = json!(res.q0);
            emit(out.as_deref(), &pretty(&file))?;
            Ok(if res.certified { Outcome::Done } else { Outcome::Incumbent })
        }
        Command::Fit { design, responses, out } => {
            let design = Design::read(design, None)?;
            let f = read_responses(responses)?;
            let model = GpModel::fit_mle(design, f, &FitConfig::default().with_seed(g.seed()))?;
            if g.verbose > 0 {
                eprintln!("theta = {:?}, log-likelihood = {}", model.params().theta, model.log_likelihood());
            }
            emit(out.as_deref(), &model.to_json())?;
            Ok(Outcome::Done)
        }
        Command::Suggest { model, acq } => {
            let model = read_model(model)?;
            let spec = acq.spec(g);
            let r = optimize_acquisition(&model, &spec)?;
            let mut v = acq_json(spec.kind.name(), &r.best_point, r.best_value);
            v["certified_bound"] = json!(r.certified_bound);
            v["relative_gap"] = json!(r.relative_gap);
            v["status"] = json!(r.status);
            v["nodes"] = json!(r.nodes);
            v["elapsed"] = json!(r.elapsed);
            if g.verbose > 0 {
                v["snapshots"] = json!(r.snapshots);
            }
            println!("{}", pretty(&v));
            Ok(if r.status == AcqStatus::TimeLimit { Outcome::Incumbent } else { Outcome::Done })
        }
        Command::Sequential { problem, design, n_init, n_seq, method, candidates, acq, out } => {
            let objective = problem.objective()?;
            let initial = match design {
                Some(path) => Design::read(path, Some(objective.m()))?,
                None => initial_design(*n_init, objective.d(), objective.m(), g.time_limit())?.0,
            };
            let f_init = initial.points().iter().map(|p| objective.evaluate(p)).collect::<Result<Vec<_>, _>>()?;
            let method = match method {
                MethodArg::Quip => Method::Quip,
                MethodArg::Random => Method::Random,
                MethodArg::Candidate => Method::Candidate { c: *candidates },
            };
            let config = CampaignConfig::new(method, acq.spec(g), *n_seq, g.seed());
            match run_campaign(initial, f_init, objective.as_ref(), &config) {
                Ok(campaign) => {
                    if g.verbose > 0 {
                        for r in &campaign.history {
                            eprintln!("iteration {}: {:?} -> {}", r.iteration, r.point, r.response);
                        }
                    }
                    emit(out.as_deref(), &campaign.to_json())?;
                    let cut = campaign.history.iter().any(|r| r.acq_status.as_deref() == Some("time_limit"));
                    Ok(if cut { Outcome::Incumbent } else { Outcome::Done })
                }
                Err(aborted) => {
                    emit(out.as_deref(), &aborted.partial.to_json())?;
                    Err(aborted.source)
                }
            }
        }
        Command::Simulate { problem, path, config, actions } => {
            let actions = actions.as_deref().map(parse_actions).transpose()?;
            let result = match problem {
                Problem::Maze | Problem::Snake => {
                    let mut world = match (config, problem) {
                        (Some(p), _) => GridWorld::read(p)?,
                        (None, Problem::Maze) => GridWorld::maze(),
                        (None, _) => GridWorld::snake(),
                    };
                    if let Some(a) = actions {
                        world = world.with_actions(a)?;
                    }
                    let world = world.with_path_length(path.len())?;
                    let point = Point::new(path.clone(), world.m())?;
                    if matches!(problem, Problem::Maze) {
                        maze_cost(&world, &point)?
                    } else {
                        snake_reward(&world, &point)?
                    }
                }
                Problem::Rover => {
                    if actions.is_some() {
                        return Err(Error::InvalidParameter("the rover problem has a fixed decision set".into()));
                    }
                    let mut course = match config {
                        Some(p) => ObstacleCourse::read(p)?,
                        None => ObstacleCourse::shipped(),
                    };
                    course.path_length = path.len();
                    course.validate()?;
                    rover_cost(&course, &Point::new(path.clone(), 9)?)?
                }
            };
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(Outcome::Done)
        }
        Command::Bench { plan, kind, out } => {
            let text = std::fs::read_to_string(plan)?;
            std::fs::create_dir_all(out)?;
            match kind {
                BenchKind::Campaign => {
                    let mut plan = BenchPlan::from_json_str(&text)?;
                    if let Some(seed) = g.seed {
                        plan.seed = seed;
                    }
                    let report = run_bench(&plan)?;
                    report.write(out)?;
                    print!("{}", report.comparison_table());
                }
                BenchKind::Scatter => {
                    let mut plan: ScatterPlan =
                        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("scatter plan JSON: {e}")))?;
                    if let Some(seed) = g.seed {
                        plan.seed = seed;
                    }
                    let rows = bound_oracle_scatter(&plan)?;
                    let body = pretty(&json!({"schema_version": SCHEMA_VERSION, "plan": plan, "rows": rows}));
                    std::fs::write(out.join("scatter.json"), body)?;
                    let ok = rows.iter().filter(|r| r.certified_bound >= r.true_optimum).count();
                    let slack: Vec<f64> = rows.iter().map(|r| r.relative_slack).collect();
                    println!("conservative: {ok}/{}, median relative slack: {:.4}", rows.len(), quip::bench::median(&slack));
                }
                BenchKind::Designs => {
                    let cases: Vec<(usize, usize, u32)> = serde_json::from_str::<serde_json::Value>(&text)
                        .ok()
                        .and_then(|v| serde_json::from_value(v.get("cases")?.clone()).ok())
                        .ok_or_else(|| Error::Parse("design plan JSON: expected {\"cases\": [[n, d, M], ...]}".into()))?;
                    let rows = initial_design_bench(&cases, g.time_limit())?;
                    let body = pretty(&json!({"schema_version": SCHEMA_VERSION, "rows": rows}));
                    std::fs::write(out.join("designs.json"), body)?;
                    println!("{:>4} {:>4} {:>4} {:>4} {:>6} {:>4} {:>9} {:>9}", "n", "d", "M", "q0", "upper", "q*", "certified", "seconds");
                    for r in &rows {
                        println!(
                            "{:>4} {:>4} {:>4} {:>4} {:>6} {:>4} {:>9} {:>9.3}",
                            r.n, r.d, r.m, r.q0, r.upper_bound, r.q_star, r.certified, r.elapsed
                        );
                    }
                    if rows.iter().any(|r| !r.certified) {
                        return Ok(Outcome::Incumbent);
                    }
                }
            }
            Ok(Outcome::Done)
        }
        Command::Oracle { which } => {
            match which {
                Oracle::Maximin { lattice } => {
                    let (q, design) = brute_force_maximin(lattice.n, lattice.d, lattice.m)?;
                    let mut file = serde_json::to_value(design.to_file())?;
                    file["q_star"] = json!(q);
                    println!("{}", pretty(&file));
                }
                Oracle::Acquisition { model, acq } => {
                    let model = read_model(model)?;
                    let spec = acq.spec(g);
                    let (point, value) = enumerate_acquisition(&model, &spec)?;
                    println!("{}", pretty(&acq_json(spec.kind.name(), &point, value)));
                }
            }
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Incumbent) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
