//! Acquisition functions and their global optimization over the lattice.
//!
//! The variance-reduction criterion (ALM) picks the point with the largest
//! posterior variance, equivalently the smallest `Q(x) = gamma^T Gamma^{-1}
//! gamma`. UCB maximizes `mu_n(x) + lambda sigma_n(x)`.
//!
//! [`optimize_acquisition`] is a best-first branch-and-bound that fixes one
//! factor per tree level. Fixing a set of factors pins each correlation
//! `gamma_r = prod_l t_rl` (with `t_rl` either 1 or `e^{-theta_l}`) to an
//! interval `[L_r, U_r]`: fixed factors contribute their exact term and free
//! factors anything in `[e^{-theta_l}, 1]`. Bounding each term of the
//! quadratic form and of `alpha^T gamma` by the sign of its coefficient gives
//! a bound that is admissible everywhere and exact at the leaves. Internally
//! everything is maximized; ALM is handled as `-Q`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::encoding::{lattice_size, Point};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::seeding;

pub const DEFAULT_LAMBDA: f64 = 2.96;
pub const DEFAULT_GAP: f64 = 0.10;
/// Largest lattice [`enumerate_acquisition`] will scan.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AcquisitionKind {
    Alm,
    Ucb { lambda: f64 },
}

impl AcquisitionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionKind::Alm => "alm",
            AcquisitionKind::Ucb { .. } => "ucb",
        }
    }

    /// True when the native value is minimized (ALM's `Q`).
    pub fn minimizes(&self) -> bool {
        matches!(self, AcquisitionKind::Alm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub gap_tolerance: f64,
    pub time_limit: Option<Duration>,
}

impl AcquisitionSpec {
    pub fn alm() -> Self {
        Self { kind: AcquisitionKind::Alm, gap_tolerance: DEFAULT_GAP, time_limit: None }
    }

    pub fn ucb(lambda: f64) -> Self {
        Self { kind: AcquisitionKind::Ucb { lambda }, gap_tolerance: DEFAULT_GAP, time_limit: None }
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap_tolerance = gap;
        self
    }

    pub fn with_time_limit(mut self, limit: Option<Duration>) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let AcquisitionKind::Ucb { lambda } = self.kind {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
            }
        }
        if !(0.0..1.0).contains(&self.gap_tolerance) {
            return Err(Error::InvalidParameter(format!("gap tolerance must lie in [0, 1), got {}", self.gap_tolerance)));
        }
        Ok(())
    }
}

/// `gamma^T Gamma^{-1} gamma`, the quantity ALM minimizes. The posterior
/// variance is `tau2 (1 - value)`.
pub fn eval_alm(model: &GpModel, x: &Point) -> Result<f64> {
    let gamma = model.cross_correlation(x)?;
    Ok(model.explained(&gamma))
}

/// `mu_n(x) + lambda sigma_n(x)`.
pub fn eval_ucb(model: &GpModel, x: &Point, lambda: f64) -> Result<f64> {
    let (mean, var) = model.predict(x)?;
    Ok(mean + lambda * var.sqrt())
}

/// Native acquisition value (ALM: `Q`, to be minimized; UCB: to be maximized).
pub fn eval(model: &GpModel, kind: AcquisitionKind, x: &Point) -> Result<f64> {
    match kind {
        AcquisitionKind::Alm => eval_alm(model, x),
        AcquisitionKind::Ucb { lambda } => eval_ucb(model, x, lambda),
    }
}

/// Value on the internal maximization scale.
fn score(model: &GpModel, kind: AcquisitionKind, x: &Point) -> Result<f64> {
    let v = eval(model, kind, x)?;
    Ok(if kind.minimizes() { -v } else { v })
}

fn native(kind: AcquisitionKind, score: f64) -> f64 {
    if kind.minimizes() {
        -score
    } else {
        score
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AcqStatus {
    Optimal,
    GapReached,
    TimeLimit,
}

/// Incumbent and bound at one moment of a solve, on the internal
/// maximization scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapSnapshot {
    pub nodes: u64,
    pub incumbent: f64,
    pub bound: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcqSolveReport {
    pub best_point: Point,
    /// Native acquisition value at `best_point`.
    pub best_value: f64,
    /// Admissible bound on the global optimum in native terms: at least the
    /// optimum for UCB, at most the optimum for ALM's minimized `Q`.
    pub certified_bound: f64,
    pub relative_gap: f64,
    pub nodes: u64,
    pub status: AcqStatus,
    pub elapsed: f64,
    pub snapshots: Vec<GapSnapshot>,
}

/// `(bound - incumbent) / max(|bound|, 1e-12)` on the maximization scale.
pub fn relative_gap(bound: f64, incumbent: f64) -> f64 {
    ((bound - incumbent) / bound.abs().max(1e-12)).max(0.0)
}

/// Precomputed model quantities shared by every node.
struct Bounder {
    kind: AcquisitionKind,
    n: usize,
    w: DMatrix<f64>,
    alpha: DVector<f64>,
    mu: f64,
    sigma_scale: f64,
    /// `e^{-theta_l}`.
    decay: Vec<f64>,
    /// Training levels, 0-indexed, `levels[r][l]`.
    levels: Vec<Vec<usize>>,
}

impl Bounder {
    fn new(model: &GpModel, kind: AcquisitionKind) -> Self {
        let design = model.design();
        Self {
            kind,
            n: design.n(),
            w: model.precision(),
            alpha: model.alpha().clone(),
            mu: model.params().mu,
            sigma_scale: model.sigma_scale(),
            decay: model.params().theta.iter().map(|t| (-t).exp()).collect(),
            levels: design.points().iter().map(|p| (0..p.d()).map(|l| p.zero_based(l)).collect()).collect(),
        }
    }

    /// Bound (maximization scale) given upper correlations `upper` and the
    /// product `slack` of `e^{-theta}` over the free factors.
    fn bound(&self, upper: &[f64], slack: f64) -> f64 {
        let n = self.n;
        let mut q_lb = 0.0;
        let mut magnitude = 0.0;
        for r in 0..n {
            let (ur, lr) = (upper[r], upper[r] * slack);
            for s in 0..n {
                let wrs = self.w[(r, s)];
                q_lb += if wrs >= 0.0 { wrs * lr * upper[s] * slack } else { wrs * ur * upper[s] };
                magnitude += wrs.abs() * ur * upper[s];
            }
        }
        // Round-off allowance: exact evaluations factor the matrix instead of
        // using its inverse, and near training points the UCB square root
        // magnifies the difference.
        let q_lb = (q_lb - 4.0 * n as f64 * f64::EPSILON * magnitude).max(0.0);
        match self.kind {
            AcquisitionKind::Alm => -q_lb,
            AcquisitionKind::Ucb { lambda } => {
                let mut mean = self.mu;
                for r in 0..n {
                    let a = self.alpha[r];
                    mean += if a >= 0.0 { a * upper[r] } else { a * upper[r] * slack };
                }
                mean + lambda * self.sigma_scale * (1.0 - q_lb).max(0.0).sqrt()
            }
        }
    }

    fn child_upper(&self, upper: &[f64], factor: usize, level: usize) -> Vec<f64> {
        (0..self.n)
            .map(|r| if self.levels[r][factor] == level { upper[r] } else { upper[r] * self.decay[factor] })
            .collect()
    }
}

/// Admissible bound (native terms) on the acquisition over all completions
/// of a partial assignment; `partial[l] = None` leaves factor `l` free.
/// Tight when every factor is fixed, up to a small round-off allowance.
pub fn node_bound(model: &GpModel, kind: AcquisitionKind, partial: &[Option<u32>]) -> Result<f64> {
    let (d, m) = (model.design().d(), model.design().m());
    if partial.len() != d {
        return Err(Error::InvalidParameter(format!("partial assignment has {} factors, expected {d}", partial.len())));
    }
    let b = Bounder::new(model, kind);
    let mut upper = vec![1.0; b.n];
    let mut slack = 1.0;
    for (l, v) in partial.iter().enumerate() {
        match v {
            Some(level) => {
                if *level == 0 || *level > m {
                    return Err(Error::InvalidLevel { factor: l, level: *level, m });
                }
                upper = b.child_upper(&upper, l, *level as usize - 1);
            }
            None => slack *= b.decay[l],
        }
    }
    Ok(native(kind, b.bound(&upper, slack)))
}

struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    levels: Vec<u8>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: larger bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Global optimization of the acquisition by branch-and-bound, stopping
/// when the relative gap reaches `spec.gap_tolerance` (0 forces a proof of
/// optimality) or the time limit expires.
pub fn optimize_acquisition(model: &GpModel, spec: &AcquisitionSpec) -> Result<AcqSolveReport> {
    spec.validate()?;
    let start = Instant::now();
    let deadline = spec.time_limit.map(|t| start + t);
    let kind = spec.kind;
    let design = model.design();
    let (d, m) = (design.d(), design.m() as usize);
    let b = Bounder::new(model, kind);

    // Most influential factors first; ties by index.
    let theta = &model.params().theta;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &c| theta[c].total_cmp(&theta[a]).then(a.cmp(&c)));
    // slack[k]: product of e^{-theta} over the factors still free at depth k.
    let mut slack = vec![1.0; d + 1];
    for k in (0..d).rev() {
        slack[k] = slack[k + 1] * b.decay[order[k]];
    }

    let to_point = |levels: &[u8]| {
        let mut natural = vec![0usize; d];
        for (k, &v) in levels.iter().enumerate() {
            natural[order[k]] = v as usize;
        }
        Point::from_zero_based(natural, m as u32)
    };

    let mut nodes: u64 = 0;
    let mut seq: u64 = 0;

    // Greedy dive for an initial incumbent.
    let mut upper = vec![1.0; b.n];
    let mut levels = Vec::with_capacity(d);
    for k in 0..d {
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for v in 0..m {
            let child = b.child_upper(&upper, order[k], v);
            let cb = b.bound(&child, slack[k + 1]);
            nodes += 1;
            if best.as_ref().is_none_or(|(bb, _, _)| cb > *bb) {
                best = Some((cb, v, child));
            }
        }
        let (_, v, child) = best.expect("M >= 2");
        levels.push(v as u8);
        upper = child;
    }
    let mut best_point = to_point(&levels);
    let mut incumbent = score(model, kind, &best_point)?;
    if let AcquisitionKind::Ucb { .. } = kind {
        for p in design.points() {
            let s = score(model, kind, p)?;
            if s > incumbent || (s == incumbent && *p < best_point) {
                incumbent = s;
                best_point = p.clone();
            }
        }
    }

    let root_upper = vec![1.0; b.n];
    let root_bound = b.bound(&root_upper, slack[0]).max(incumbent);
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: root_bound, depth: 0, seq, levels: Vec::new(), upper: root_upper });
    seq += 1;

    let mut snapshots = vec![GapSnapshot {
        nodes,
        incumbent,
        bound: root_bound,
        relative_gap: relative_gap(root_bound, incumbent),
    }];
    let mut last_bound = root_bound;
    let mut expansions: u64 = 0;
    let status;
    let mut global_bound;
    loop {
        let Some(node) = heap.peek() else {
            status = AcqStatus::Optimal;
            global_bound = incumbent;
            break;
        };
        if node.bound <= incumbent {
            status = AcqStatus::Optimal;
            global_bound = incumbent;
            break;
        }
        global_bound = node.bound;
        if global_bound < last_bound {
            last_bound = global_bound;
            if snapshots.len() < 4096 {
                snapshots.push(GapSnapshot { nodes, incumbent, bound: global_bound, relative_gap: relative_gap(global_bound, incumbent) });
            }
        }
        if relative_gap(global_bound, incumbent) <= spec.gap_tolerance && spec.gap_tolerance > 0.0 {
            status = AcqStatus::GapReached;
            break;
        }
        if let Some(deadline) = deadline {
            if expansions.is_multiple_of(64) && Instant::now() >= deadline {
                status = AcqStatus::TimeLimit;
                break;
            }
        }
        let node = heap.pop().expect("peeked");
        expansions += 1;
        let k = node.depth;
        for v in 0..m {
            nodes += 1;
            let child_upper = b.child_upper(&node.upper, order[k], v);
            let mut child_levels = node.levels.clone();
            child_levels.push(v as u8);
            if k + 1 == d {
                let p = to_point(&child_levels);
                let s = score(model, kind, &p)?;
                if s > incumbent || (s == incumbent && p < best_point) {
                    let improved = s > incumbent;
                    incumbent = s;
                    best_point = p;
                    if improved && snapshots.len() < 4096 {
                        snapshots.push(GapSnapshot {
                            nodes,
                            incumbent,
                            bound: last_bound,
                            relative_gap: relative_gap(last_bound, incumbent),
                        });
                    }
                }
                continue;
            }
            let cb = b.bound(&child_upper, slack[k + 1]).min(node.bound);
            if cb <= incumbent {
                continue;
            }
            heap.push(Node { bound: cb, depth: k + 1, seq, levels: child_levels, upper: child_upper });
            seq += 1;
        }
    }
    let global_bound = global_bound.max(incumbent);
    let gap = if status == AcqStatus::Optimal { 0.0 } else { relative_gap(global_bound, incumbent) };
    snapshots.push(GapSnapshot { nodes, incumbent, bound: global_bound, relative_gap: gap });
    Ok(AcqSolveReport {
        best_value: native(kind, incumbent),
        best_point,
        certified_bound: native(kind, global_bound),
        relative_gap: gap,
        nodes,
        status,
        elapsed: start.elapsed().as_secs_f64(),
        snapshots,
    })
}

/// Exact optimum by scanning the whole lattice in lexicographic order; ties
/// go to the lexicographically smallest point.
pub fn enumerate_acquisition(model: &GpModel, spec: &AcquisitionSpec) -> Result<(Point, f64)> {
    spec.validate()?;
    let (d, m) = (model.design().d(), model.design().m());
    let size = lattice_size(d, m).filter(|&s| s <= ENUMERATION_LIMIT).ok_or(Error::TooLarge {
        what: "lattice for acquisition enumeration",
        size: (m as f64).powi(d as i32),
        limit: ENUMERATION_LIMIT as f64,
    })?;
    let mut best: Option<(Point, f64)> = None;
    for i in 0..size {
        let p = Point::from_index(i, d, m)?;
        let s = score(model, spec.kind, &p)?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((p, s));
        }
    }
    let (p, s) = best.expect("lattice is non-empty");
    Ok((p, native(spec.kind, s)))
}

/// One uniform point drawn from `rng`.
pub fn sample_point<R: Rng + ?Sized>(rng: &mut R, d: usize, m: u32) -> Point {
    Point::from_zero_based((0..d).map(|_| rng.random_range(0..m as usize)), m)
}

/// Uniform point from a seeded stream.
pub fn random_point(d: usize, m: u32, seed: u64) -> Result<Point> {
    if d == 0 || m < 2 {
        return Err(Error::InvalidLattice { d, m });
    }
    Ok(sample_point(&mut seeding::rng(seed, "random-point", 0), d, m))
}

/// Best of `c` uniform draws (the candidate-set baseline). Draws come from a
/// single seeded stream, so a larger `c` extends the same candidates.
pub fn candidate_set_acquisition(model: &GpModel, spec: &AcquisitionSpec, c: usize, seed: u64) -> Result<(Point, f64)> {
    spec.validate()?;
    if c == 0 {
        return Err(Error::InvalidParameter("candidate count must be >= 1".into()));
    }
    let (d, m) = (model.design().d(), model.design().m());
    let mut rng = seeding::rng(seed, "candidate-set", 0);
    let mut best: Option<(Point, f64)> = None;
    for _ in 0..c {
        let p = sample_point(&mut rng, d, m);
        let s = score(model, spec.kind, &p)?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((p, s));
        }
    }
    let (p, s) = best.expect("c >= 1");
    Ok((p, native(spec.kind, s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, Design};
    use crate::gp::{FitConfig, KernelParams, NUGGET};

    fn model(rows: Vec<Vec<u32>>, m: u32, f: Vec<f64>, theta: Vec<f64>) -> GpModel {
        let design = Design::from_rows(rows, m).unwrap();
        GpModel::with_params(design, f, KernelParams::new(theta, 0.3, 1.7).unwrap(), NUGGET).unwrap()
    }

    #[test]
    fn single_point_alm_closed_form() {
        let theta = vec![0.4, 0.9, 1.3];
        let md = model(vec![vec![1, 2, 1]], 3, vec![2.0], theta.clone());
        let x = Point::new(vec![2, 2, 3], 3).unwrap();
        let want = (-2.0 * (0.4 + 1.3f64)).exp();
        assert!((eval_alm(&md, &x).unwrap() - want).abs() < 1e-7);

        let report = optimize_acquisition(&md, &AcquisitionSpec::alm().with_gap(0.0)).unwrap();
        let sum: f64 = theta.iter().sum();
        assert!((report.best_value - (-2.0 * sum).exp()).abs() < 1e-7);
        assert!(report.best_point.levels().iter().zip([1, 2, 1]).all(|(a, b)| *a != b));
        assert_eq!(report.status, AcqStatus::Optimal);
    }

    #[test]
    fn ucb_lambda_zero_is_mean() {
        let md = model(vec![vec![1, 1], vec![2, 1], vec![1, 2]], 2, vec![0.0, 1.0, -1.0], vec![0.5, 0.7]);
        let x = Point::new(vec![2, 2], 2).unwrap();
        let tiny = eval_ucb(&md, &x, 0.0).unwrap();
        assert_eq!(tiny, md.predict(&x).unwrap().0);
        assert!(AcquisitionSpec::ucb(0.0).validate().is_err());
    }

    #[test]
    fn multilinear_form_matches_on_two_by_two() {
        // Materialize the degree-d coefficient tensor on d = 2, M = 2 and
        // evaluate it against one-hot encodings.
        let theta = vec![0.6, 1.1];
        let md = model(vec![vec![1, 1], vec![2, 1], vec![2, 2]], 2, vec![1.0, 0.0, 2.0], theta.clone());
        let w = md.precision();
        let train: Vec<_> = md.design().points().iter().map(encode).collect();
        let mut xi = [[0.0; 2]; 2];
        for (k1, row) in xi.iter_mut().enumerate() {
            for (k2, cell) in row.iter_mut().enumerate() {
                let ks = [k1, k2];
                let g: Vec<f64> = train
                    .iter()
                    .map(|ir| {
                        (0..2)
                            .map(|j| 1.0 + (1.0 - ir.get(j, ks[j]) as f64) * ((-theta[j]).exp() - 1.0))
                            .product()
                    })
                    .collect();
                *cell = (0..3).flat_map(|r| (0..3).map(move |s| (r, s))).map(|(r, s)| w[(r, s)] * g[r] * g[s]).sum();
            }
        }
        for idx in 0..4 {
            let x = Point::from_index(idx, 2, 2).unwrap();
            let ix = encode(&x);
            let mut form = 0.0;
            for k1 in 0..2 {
                for k2 in 0..2 {
                    form += xi[k1][k2] * ix.get(0, k1) as f64 * ix.get(1, k2) as f64;
                }
            }
            assert!((form - eval_alm(&md, &x).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn full_coverage_leaves_no_variance() {
        let rows: Vec<Vec<u32>> = (0..4).map(|i| Point::from_index(i, 2, 2).unwrap().levels().to_vec()).collect();
        let md = model(rows, 2, vec![0.1, 0.4, -0.3, 0.9], vec![1.0, 1.0]);
        let (_, q) = enumerate_acquisition(&md, &AcquisitionSpec::alm()).unwrap();
        assert!(1.0 - q < 1e-6);
    }

    #[test]
    fn random_points_reproducible_and_valid() {
        let a = random_point(6, 4, 11).unwrap();
        assert_eq!(a, random_point(6, 4, 11).unwrap());
        assert!(a.levels().iter().all(|&l| (1..=4).contains(&l)));
    }

    #[test]
    fn candidate_set_is_prefix_monotone() {
        let design = Design::from_rows(vec![vec![1, 1, 1], vec![2, 3, 1], vec![3, 2, 2], vec![1, 3, 3]], 3).unwrap();
        let md = GpModel::fit_mle(design, vec![0.2, 1.5, -0.7, 0.9], &FitConfig::default()).unwrap();
        let spec = AcquisitionSpec::ucb(DEFAULT_LAMBDA);
        let mut prev = f64::NEG_INFINITY;
        for c in 1..20 {
            let (_, v) = candidate_set_acquisition(&md, &spec, c, 5).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let (_, best) = enumerate_acquisition(&md, &spec).unwrap();
        assert!(prev <= best);
    }

    #[test]
    fn node_bound_exact_at_leaf() {
        let md = model(vec![vec![1, 2, 3], vec![3, 1, 2]], 3, vec![0.5, -0.5], vec![0.3, 0.8, 1.2]);
        let x = Point::new(vec![2, 2, 3], 3).unwrap();
        let partial: Vec<Option<u32>> = x.levels().iter().map(|&l| Some(l)).collect();
        for kind in [AcquisitionKind::Alm, AcquisitionKind::Ucb { lambda: DEFAULT_LAMBDA }] {
            let b = node_bound(&md, kind, &partial).unwrap();
            assert!((b - eval(&md, kind, &x).unwrap()).abs() < 1e-9);
        }
    }
}
