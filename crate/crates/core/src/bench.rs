//! Benchmark harness: replicated sequential campaigns with best-so-far and
//! RRMSE curves, initial-design quality runs, and bound-versus-oracle data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{enumerate_acquisition, optimize_acquisition, sample_point, AcquisitionSpec, DEFAULT_GAP, DEFAULT_LAMBDA};
use crate::bounds::{agreement_upper_bound, q0_value};
use crate::encoding::{Design, Point, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, GpModel};
use crate::maximin::{optimize_maximin, TraceEntry};
use crate::seeding;
use crate::sequential::{run_campaign, CampaignConfig, Method};
use crate::simulators::{
    Action, GridWorld, MazeObjective, ObstacleCourse, Objective, RoverObjective, SnakeObjective,
};

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_gap() -> f64 {
    DEFAULT_GAP
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Maze,
    Snake,
    Rover,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Alternative world or course file; the shipped layout otherwise.
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub path_length: Option<usize>,
    /// Action subset for grid problems.
    #[serde(default)]
    pub actions: Option<Vec<Action>>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        Self { kind, config: None, path_length: None, actions: None }
    }

    pub fn objective(&self) -> Result<Box<dyn Objective>> {
        match self.kind {
            ProblemKind::Maze | ProblemKind::Snake => {
                let mut world = match (&self.config, self.kind) {
                    (Some(p), _) => GridWorld::read(p)?,
                    (None, ProblemKind::Maze) => GridWorld::maze(),
                    (None, _) => GridWorld::snake(),
                };
                if let Some(d) = self.path_length {
                    world = world.with_path_length(d)?;
                }
                if let Some(a) = &self.actions {
                    world = world.with_actions(a.clone())?;
                }
                Ok(if self.kind == ProblemKind::Maze {
                    Box::new(MazeObjective(world))
                } else {
                    Box::new(SnakeObjective(world))
                })
            }
            ProblemKind::Rover => {
                let mut course = match &self.config {
                    Some(p) => ObstacleCourse::read(p)?,
                    None => ObstacleCourse::shipped(),
                };
                if let Some(d) = self.path_length {
                    course.path_length = d;
                    course.validate()?;
                }
                if self.actions.is_some() {
                    return Err(Error::InvalidParameter("the rover problem has a fixed decision set".into()));
                }
                Ok(Box::new(RoverObjective(course)))
            }
        }
    }

    /// Whether the native objective is a cost (reported negated internally).
    pub fn is_cost(&self) -> bool {
        matches!(self.kind, ProblemKind::Maze | ProblemKind::Rover)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// UCB black-box optimization, best-so-far curves.
    Optimization,
    /// ALM active learning, RRMSE curves on a held-out set.
    ActiveLearning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Quip,
    Random,
    Candidate {
        c: usize,
        #[serde(default)]
        schedule: Vec<usize>,
    },
}

impl MethodSpec {
    fn method(&self) -> Method {
        match self {
            MethodSpec::Quip => Method::Quip,
            MethodSpec::Random => Method::Random,
            MethodSpec::Candidate { c, .. } => Method::Candidate { c: *c },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub mode: BenchMode,
    pub methods: Vec<MethodSpec>,
    pub replications: usize,
    pub seed: u64,
    pub n_init: usize,
    pub n_seq: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Seconds per acquisition solve.
    #[serde(default)]
    pub acq_time_limit: Option<f64>,
    /// Seconds per maximin feasibility program for the initial design.
    #[serde(default)]
    pub design_time_limit: Option<f64>,
    /// Held-out test-set size for RRMSE (active-learning mode).
    #[serde(default)]
    pub test_size: usize,
    #[serde(default)]
    pub test_seed: u64,
}

impl BenchPlan {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("bench plan JSON: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("methods must be non-empty".into()));
        }
        if self.n_init < 2 {
            return Err(Error::NeedsTwoPoints(self.n_init));
        }
        if self.mode == BenchMode::ActiveLearning && self.test_size == 0 {
            return Err(Error::InvalidParameter("active-learning mode needs test_size >= 1".into()));
        }
        self.spec().validate()
    }

    fn spec(&self) -> AcquisitionSpec {
        let spec = match self.mode {
            BenchMode::Optimization => AcquisitionSpec::ucb(self.lambda),
            BenchMode::ActiveLearning => AcquisitionSpec::alm(),
        };
        spec.with_gap(self.gap).with_time_limit(self.acq_time_limit.map(Duration::from_secs_f64))
    }
}

/// One (method, replication, iteration) measurement. Iteration 0 is the
/// initial design.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub replication: usize,
    pub seed: u64,
    pub iteration: usize,
    pub evaluations: usize,
    /// Best value so far in the problem's native orientation (cost or reward).
    pub best_so_far: f64,
    pub rrmse: Option<f64>,
    pub wall_time: f64,
    pub candidates: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub iteration: usize,
    pub best_median: f64,
    pub best_lo: f64,
    pub best_hi: f64,
    pub rrmse_median: Option<f64>,
    pub rrmse_lo: Option<f64>,
    pub rrmse_hi: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub plan: BenchPlan,
    pub initial_q_star: usize,
    pub initial_certified: bool,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SummaryRow>,
}

impl BenchReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("method,replication,seed,iteration,evaluations,best_so_far,rrmse,wall_time,candidates\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                r.replication,
                r.seed,
                r.iteration,
                r.evaluations,
                r.best_so_far,
                r.rrmse.map(|v| v.to_string()).unwrap_or_default(),
                r.wall_time,
                r.candidates.map(|v| v.to_string()).unwrap_or_default()
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "plan": self.plan,
            "initial_q_star": self.initial_q_star,
            "initial_certified": self.initial_certified,
            "summary": self.summary,
        }))
        .expect("summary serializes")
    }

    /// Writes `rows.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }

    /// Plain-text table of the final iteration per method: median and 95%
    /// band of best-so-far (and RRMSE when measured), plus median wall time.
    pub fn comparison_table(&self) -> String {
        let last = self.plan.n_seq;
        let mut out = format!(
            "{:<10} {:>6} {:>14} {:>14} {:>14} {:>10} {:>10}\n",
            "method", "evals", "best_median", "best_p2.5", "best_p97.5", "rrmse_med", "wall_s"
        );
        for s in self.summary.iter().filter(|s| s.iteration == last) {
            let wall: Vec<f64> =
                self.rows.iter().filter(|r| r.method == s.method && r.iteration == last).map(|r| r.wall_time).collect();
            let rr = s.rrmse_median.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>14.4} {:>14.4} {:>14.4} {:>10} {:>10.2}",
                s.method,
                self.plan.n_init + last,
                s.best_median,
                s.best_lo,
                s.best_hi,
                rr,
                median(&wall)
            );
        }
        out
    }

    /// Per-replication final best-so-far for one method, ordered by replication.
    pub fn finals(&self, method: &str) -> Vec<f64> {
        let last = self.plan.n_seq;
        let mut rows: Vec<&BenchRow> = self.rows.iter().filter(|r| r.method == method && r.iteration == last).collect();
        rows.sort_by_key(|r| r.replication);
        rows.iter().map(|r| r.best_so_far).collect()
    }
}

/// Empirical percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

/// The maximin initial design for a bench, computed once.
pub fn initial_design(n: usize, d: usize, m: u32, time_limit: Option<Duration>) -> Result<(Design, usize, bool)> {
    let res = optimize_maximin(n, d, m, time_limit)?;
    Ok((res.design, res.q_star, res.certified))
}

/// Applies a seeded random level relabelling per column and a random row
/// order. Hamming distances, and hence the maximin value, are unchanged.
pub fn randomize_design(design: &Design, seed: u64) -> Design {
    let mut rng = seeding::rng(seed, "init-relabel", 0);
    let (d, m) = (design.d(), design.m());
    let maps: Vec<Vec<u32>> = (0..d)
        .map(|_| {
            let mut perm: Vec<u32> = (1..=m).collect();
            perm.shuffle(&mut rng);
            perm
        })
        .collect();
    let mut rows: Vec<Vec<u32>> = design
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().map(|(j, &l)| maps[j][l as usize - 1]).collect())
        .collect();
    rows.shuffle(&mut rng);
    Design::from_rows(rows, m).expect("relabelled levels stay in range")
}

fn test_set(objective: &dyn Objective, size: usize, seed: u64) -> Result<(Vec<Point>, Vec<f64>)> {
    let mut rng = seeding::rng(seed, "test-set", 0);
    let points: Vec<Point> = (0..size).map(|_| sample_point(&mut rng, objective.d(), objective.m())).collect();
    let values = points.iter().map(|p| objective.evaluate(p)).collect::<Result<Vec<_>>>()?;
    Ok((points, values))
}

fn prefix_rrmse(design: &Design, f: &[f64], upto: usize, test: &(Vec<Point>, Vec<f64>), seed: u64) -> Result<f64> {
    let prefix = Design::new(design.points()[..upto].to_vec())?;
    let model = GpModel::fit_mle(prefix, f[..upto].to_vec(), &FitConfig::default().with_seed(seed))?;
    let preds = test.0.iter().map(|p| model.predict(p).map(|(m, _)| m)).collect::<Result<Vec<_>>>()?;
    crate::sequential::rrmse(&test.1, &preds)
}

/// Runs every (method, replication) campaign of the plan in parallel and
/// aggregates the curves.
pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let probe = plan.problem.objective()?;
    let (d, m) = (probe.d(), probe.m());
    let (base, q_star, certified) =
        initial_design(plan.n_init, d, m, plan.design_time_limit.map(Duration::from_secs_f64))?;
    let test = match plan.mode {
        BenchMode::ActiveLearning => Some(test_set(probe.as_ref(), plan.test_size, plan.test_seed)?),
        BenchMode::Optimization => None,
    };
    let sign = if plan.problem.is_cost() { -1.0 } else { 1.0 };
    let spec = plan.spec();

    let jobs: Vec<(usize, usize)> =
        (0..plan.methods.len()).flat_map(|mi| (0..plan.replications).map(move |r| (mi, r))).collect();
    let results: Vec<Result<Vec<BenchRow>>> = jobs
        .par_iter()
        .map(|&(mi, rep)| {
            let objective = plan.problem.objective()?;
            let method_spec = &plan.methods[mi];
            let rep_seed = seeding::derive_seed(plan.seed, "replication", rep as u64);
            let initial = randomize_design(&base, rep_seed);
            let f_init = initial.points().iter().map(|p| objective.evaluate(p)).collect::<Result<Vec<_>>>()?;
            let mut config = CampaignConfig::new(method_spec.method(), spec.clone(), plan.n_seq, rep_seed);
            if let MethodSpec::Candidate { schedule, .. } = method_spec {
                config.candidate_schedule = schedule.clone();
            }
            let campaign = run_campaign(initial, f_init, objective.as_ref(), &config).map_err(|e| e.source)?;
            let name = method_spec.method().name().to_string();
            let mut rows = Vec::with_capacity(plan.n_seq + 1);
            let mut best = f64::NEG_INFINITY;
            let mut elapsed = 0.0;
            for it in 0..=plan.n_seq {
                let upto = campaign.n_init + it;
                for &v in &campaign.responses[..upto] {
                    best = best.max(v);
                }
                let mut candidates = None;
                if it > 0 {
                    let rec = &campaign.history[it - 1];
                    elapsed += rec.wall_time;
                    candidates = rec.candidates;
                }
                let rrmse = match &test {
                    Some(t) => Some(prefix_rrmse(
                        &campaign.design,
                        &campaign.responses,
                        upto,
                        t,
                        seeding::derive_seed(rep_seed, "rrmse-fit", it as u64),
                    )?),
                    None => None,
                };
                rows.push(BenchRow {
                    method: name.clone(),
                    replication: rep,
                    seed: rep_seed,
                    iteration: it,
                    evaluations: upto,
                    best_so_far: sign * best,
                    rrmse,
                    wall_time: elapsed,
                    candidates,
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }

    let mut summary = Vec::new();
    for ms in &plan.methods {
        let name = ms.method().name();
        for it in 0..=plan.n_seq {
            let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.method == name && r.iteration == it).collect();
            let best: Vec<f64> = sel.iter().map(|r| r.best_so_far).collect();
            let rr: Vec<f64> = sel.iter().filter_map(|r| r.rrmse).collect();
            let band = |v: &[f64], p: f64| (!v.is_empty()).then(|| percentile(v, p));
            summary.push(SummaryRow {
                method: name.to_string(),
                iteration: it,
                best_median: median(&best),
                best_lo: percentile(&best, 0.025),
                best_hi: percentile(&best, 0.975),
                rrmse_median: band(&rr, 0.5),
                rrmse_lo: band(&rr, 0.025),
                rrmse_hi: band(&rr, 0.975),
            });
        }
    }
    Ok(BenchReport { schema_version: SCHEMA_VERSION, plan: plan.clone(), initial_q_star: q_star, initial_certified: certified, rows, summary })
}

/// Maximin quality for one `(n, d, M)`.
#[derive(Clone, Debug, Serialize)]
pub struct InitialDesignRow {
    pub n: usize,
    pub d: usize,
    pub m: u32,
    pub q0: usize,
    pub upper_bound: usize,
    pub q_star: usize,
    /// `q* / d`.
    pub scaled: f64,
    pub certified: bool,
    pub nodes: u64,
    pub elapsed: f64,
    /// Feasibility programs in solve order (quality-versus-time curve).
    pub trace: Vec<TraceEntry>,
}

pub fn initial_design_bench(cases: &[(usize, usize, u32)], time_limit: Option<Duration>) -> Result<Vec<InitialDesignRow>> {
    cases
        .par_iter()
        .map(|&(n, d, m)| {
            let res = optimize_maximin(n, d, m, time_limit)?;
            Ok(InitialDesignRow {
                n,
                d,
                m,
                q0: q0_value(n, d, m)?,
                upper_bound: agreement_upper_bound(n, d, m),
                q_star: res.q_star,
                scaled: res.q_star as f64 / d as f64,
                certified: res.certified,
                nodes: res.total_nodes(),
                elapsed: res.total_elapsed(),
                trace: res.trace.iter().map(TraceEntry::from).collect(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPlan {
    pub problem: ProblemSpec,
    pub replications: usize,
    pub seed: u64,
    /// Random training points per replication.
    pub n_train: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gap")]
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterRow {
    pub replication: usize,
    pub certified_bound: f64,
    pub incumbent: f64,
    pub true_optimum: f64,
    pub relative_gap: f64,
    /// `(bound - optimum) / |optimum|`.
    pub relative_slack: f64,
    pub nodes: u64,
}

/// For each replication: fit a model on random data, stop the UCB
/// branch-and-bound at the gap tolerance and record its bound next to the
/// enumerated optimum.
pub fn bound_oracle_scatter(plan: &ScatterPlan) -> Result<Vec<ScatterRow>> {
    if plan.replications == 0 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    let spec = AcquisitionSpec::ucb(plan.lambda).with_gap(plan.gap);
    spec.validate()?;
    (0..plan.replications)
        .into_par_iter()
        .map(|rep| {
            let objective = plan.problem.objective()?;
            let mut rng = seeding::rng(plan.seed, "scatter-train", rep as u64);
            let points: Vec<Point> =
                (0..plan.n_train).map(|_| sample_point(&mut rng, objective.d(), objective.m())).collect();
            let f = points.iter().map(|p| objective.evaluate(p)).collect::<Result<Vec<_>>>()?;
            let fit = FitConfig::default().with_seed(seeding::derive_seed(plan.seed, "scatter-fit", rep as u64));
            let model = GpModel::fit_mle(Design::new(points)?, f, &fit)?;
            let report = optimize_acquisition(&model, &spec)?;
            let (_, optimum) = enumerate_acquisition(&model, &spec)?;
            Ok(ScatterRow {
                replication: rep,
                certified_bound: report.certified_bound,
                incumbent: report.best_value,
                true_optimum: optimum,
                relative_gap: report.relative_gap,
                relative_slack: (report.certified_bound - optimum) / optimum.abs().max(1e-12),
                nodes: report.nodes,
            })
        })
        .collect()
}
