//! Exact maximin initial designs.
//!
//! The maximin problem is solved as a sequence of feasibility programs:
//! "is there an `n`-run design whose pairwise Hamming distances are all at
//! least `q`?". Each program is decided by a complete depth-first search that
//! fills the design row by row, cell by cell, so an exhausted search is a
//! certificate of infeasibility.
//!
//! Symmetry breaking relies on the lexicographic leader of each orbit under
//! row permutations and per-column level relabelings (taking the row-major
//! flattening as the order). That leader has
//!
//! * non-decreasing rows,
//! * in every column, level `k + 1` appearing only below the first `k`,
//! * and hence an all-ones first row,
//!
//! so restricting the search to designs with these properties loses no
//! feasible solution.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::bounds::{agreement_upper_bound, q0_value};
use crate::encoding::{lattice_size, min_pairwise_distance, Design, Point};
use crate::error::{Error, Result};

/// Enumeration budget for [`brute_force_maximin`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e8;

#[derive(Clone, Debug)]
pub struct FeasibilityInstance {
    pub n: usize,
    pub d: usize,
    pub m: u32,
    pub q: usize,
    pub time_limit: Option<Duration>,
    pub warm_start: Option<Design>,
}

impl FeasibilityInstance {
    pub fn new(n: usize, d: usize, m: u32, q: usize) -> Self {
        Self { n, d, m, q, time_limit: None, warm_start: None }
    }

    pub fn with_time_limit(mut self, limit: Option<Duration>) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn with_warm_start(mut self, design: Option<Design>) -> Self {
        self.warm_start = design;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("run size n must be >= 1".into()));
        }
        if self.d == 0 || self.m < 2 {
            return Err(Error::InvalidLattice { d: self.d, m: self.m });
        }
        if self.m > 255 {
            return Err(Error::InvalidParameter("maximin search supports M <= 255".into()));
        }
        if self.q > self.d {
            return Err(Error::InvalidQ { q: self.q as i64, d: self.d });
        }
        if let Some(w) = &self.warm_start {
            if w.d() != self.d || w.m() != self.m {
                return Err(Error::DimensionMismatch {
                    expected_d: self.d,
                    expected_m: self.m,
                    got_d: w.d(),
                    got_m: w.m(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible(Design),
    InfeasibleCertified,
    /// The search was cut off. The payload is the best complete design seen
    /// (from the warm start or its repair), which does not reach `q`.
    TimeLimit(Option<Design>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub q: usize,
    pub status: SolveStatus,
    pub nodes_explored: u64,
    pub elapsed: f64,
    /// Minimum pairwise distance of the returned design, if any.
    pub achieved_q: Option<usize>,
}

impl SolveReport {
    pub fn design(&self) -> Option<&Design> {
        match &self.status {
            SolveStatus::Feasible(d) => Some(d),
            SolveStatus::TimeLimit(d) => d.as_ref(),
            SolveStatus::InfeasibleCertified => None,
        }
    }

    pub fn status_name(&self) -> &'static str {
        match self.status {
            SolveStatus::Feasible(_) => "feasible",
            SolveStatus::InfeasibleCertified => "infeasible",
            SolveStatus::TimeLimit(_) => "time_limit",
        }
    }
}

fn achieved(design: &Design) -> usize {
    if design.n() < 2 {
        design.d()
    } else {
        min_pairwise_distance(design).expect("n >= 2")
    }
}

/// Decides whether an `n`-run design with minimum distance `q` exists.
pub fn solve_feasibility(inst: &FeasibilityInstance) -> Result<SolveReport> {
    inst.validate()?;
    let start = Instant::now();
    let finish = |status: SolveStatus, nodes: u64| {
        let achieved_q = match &status {
            SolveStatus::Feasible(d) => Some(achieved(d)),
            SolveStatus::TimeLimit(Some(d)) => Some(achieved(d)),
            _ => None,
        };
        SolveReport {
            q: inst.q,
            status,
            nodes_explored: nodes,
            elapsed: start.elapsed().as_secs_f64(),
            achieved_q,
        }
    };

    // Root propagation: the pair-agreement count caps the reachable distance.
    if inst.n >= 2 && inst.q > agreement_upper_bound(inst.n, inst.d, inst.m) {
        return Ok(finish(SolveStatus::InfeasibleCertified, 0));
    }
    if inst.q >= 1 {
        if let Some(size) = lattice_size(inst.d, inst.m) {
            if (inst.n as u64) > size {
                return Ok(finish(SolveStatus::InfeasibleCertified, 0));
            }
        }
    }

    let mut incumbent: Option<Design> = None;
    let mut hint = None;
    if let Some(warm) = inst.warm_start.as_ref().filter(|w| w.n() == inst.n) {
        let repaired = repair(warm, inst.q, 10 * inst.n * inst.d);
        if achieved(&repaired) >= inst.q {
            return Ok(finish(SolveStatus::Feasible(repaired), 0));
        }
        let better = if achieved(&repaired) >= achieved(warm) { repaired } else { warm.clone() };
        hint = Some(canonical_levels(warm));
        incumbent = Some(better);
    }

    let deadline = inst.time_limit.map(|t| start + t);
    let mut search = Search::new(inst, hint, deadline);
    let outcome = search.dfs(0);
    let nodes = search.nodes;
    let status = match outcome {
        Outcome::Found => SolveStatus::Feasible(search.design()),
        Outcome::Exhausted => SolveStatus::InfeasibleCertified,
        Outcome::Timeout => SolveStatus::TimeLimit(incumbent),
    };
    Ok(finish(status, nodes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Found,
    Exhausted,
    Timeout,
}

struct Search {
    n: usize,
    d: usize,
    m: usize,
    max_agree: usize,
    allow_equal_rows: bool,
    grid: Vec<u8>,
    /// Number of distinct levels used so far in each column.
    col_used: Vec<u8>,
    /// `rows_with[j * m + v]`: assigned rows holding level `v` in column `j`.
    rows_with: Vec<Vec<u16>>,
    /// Agreements between the row being filled and each earlier row.
    agree: Vec<u16>,
    /// Whether the current row still equals the previous one on its prefix.
    tight: Vec<bool>,
    hint: Option<Vec<u8>>,
    deadline: Option<Instant>,
    nodes: u64,
}

impl Search {
    fn new(inst: &FeasibilityInstance, hint: Option<Vec<u8>>, deadline: Option<Instant>) -> Self {
        let (n, d, m) = (inst.n, inst.d, inst.m as usize);
        Self {
            n,
            d,
            m,
            max_agree: d - inst.q,
            allow_equal_rows: inst.q == 0,
            grid: vec![0; n * d],
            col_used: vec![0; d],
            rows_with: vec![Vec::new(); d * m],
            agree: vec![0; n],
            tight: vec![true; d + 1],
            hint,
            deadline,
            nodes: 0,
        }
    }

    fn design(&self) -> Design {
        let points = (0..self.n)
            .map(|i| {
                Point::from_zero_based(
                    self.grid[i * self.d..(i + 1) * self.d].iter().map(|&v| v as usize),
                    self.m as u32,
                )
            })
            .collect();
        Design::new(points).expect("search rows share (d, M)")
    }

    fn candidates(&self, row: usize, col: usize) -> Vec<u8> {
        let top = (self.col_used[col] as usize).min(self.m - 1);
        let low = if row > 0 && self.tight[col] { self.grid[(row - 1) * self.d + col] as usize } else { 0 };
        if low > top {
            return Vec::new();
        }
        let mut out: Vec<u8> = Vec::with_capacity(top - low + 1);
        if let Some(h) = &self.hint {
            let v = h[row * self.d + col] as usize;
            if (low..=top).contains(&v) {
                out.push(v as u8);
            }
        }
        for v in low..=top {
            if out.first() != Some(&(v as u8)) {
                out.push(v as u8);
            }
        }
        out
    }

    fn dfs(&mut self, cell: usize) -> Outcome {
        if cell == self.n * self.d {
            return Outcome::Found;
        }
        let (row, col) = (cell / self.d, cell % self.d);
        if col == 0 && row > 0 {
            // A fresh row: the previous row's counters must survive backtracking.
            let saved = self.agree[..row].to_vec();
            self.agree[..row].iter_mut().for_each(|a| *a = 0);
            let res = self.fill(row, col, cell);
            self.agree[..row].copy_from_slice(&saved);
            return res;
        }
        self.fill(row, col, cell)
    }

    fn fill(&mut self, row: usize, col: usize, cell: usize) -> Outcome {
        for v in self.candidates(row, col) {
            self.nodes += 1;
            if self.nodes & 0xfff == 0 {
                if let Some(deadline) = self.deadline {
                    if Instant::now() >= deadline {
                        return Outcome::Timeout;
                    }
                }
            }
            let slot = col * self.m + v as usize;
            let mut ok = true;
            let mut touched = 0;
            for idx in 0..self.rows_with[slot].len() {
                let other = self.rows_with[slot][idx] as usize;
                self.agree[other] += 1;
                touched += 1;
                if self.agree[other] as usize > self.max_agree {
                    ok = false;
                    break;
                }
            }
            if ok && col == self.d - 1 && row > 0 && !self.allow_equal_rows {
                let prev_equal = self.tight[col] && self.grid[(row - 1) * self.d + col] == v;
                ok = !prev_equal;
            }
            if ok {
                self.grid[row * self.d + col] = v;
                let prev_used = self.col_used[col];
                if v == prev_used {
                    self.col_used[col] += 1;
                }
                let prev_tight = self.tight[col + 1];
                self.tight[col + 1] = row > 0 && self.tight[col] && self.grid[(row - 1) * self.d + col] == v;
                self.rows_with[slot].push(row as u16);

                let res = self.dfs(cell + 1);

                self.rows_with[slot].pop();
                self.tight[col + 1] = prev_tight;
                self.col_used[col] = prev_used;
                if res != Outcome::Exhausted {
                    return res;
                }
            }
            for idx in 0..touched {
                let other = self.rows_with[slot][idx] as usize;
                self.agree[other] -= 1;
            }
        }
        Outcome::Exhausted
    }
}

/// 0-indexed levels of the canonical representative of `design`'s orbit
/// reached by alternately relabelling columns by first appearance and
/// sorting rows. Each step can only lower the row-major flattening, so the
/// loop terminates at a design satisfying both symmetry-breaking rules.
pub(crate) fn canonical_levels(design: &Design) -> Vec<u8> {
    let (d, m) = (design.d(), design.m() as usize);
    let mut rows: Vec<Vec<u8>> = design
        .points()
        .iter()
        .map(|p| p.levels().iter().map(|&l| (l - 1) as u8).collect())
        .collect();
    loop {
        let before = rows.clone();
        for j in 0..d {
            let mut map = vec![u8::MAX; m];
            let mut next = 0u8;
            for r in rows.iter_mut() {
                let v = r[j] as usize;
                if map[v] == u8::MAX {
                    map[v] = next;
                    next += 1;
                }
                r[j] = map[v];
            }
        }
        rows.sort();
        if rows == before {
            break;
        }
    }
    rows.concat()
}

/// Bounded local search on single cells, lifting `design` towards minimum
/// distance `q`. Moves are accepted when they raise the minimum distance or
/// keep it while reducing the number of pairs attaining it.
fn repair(design: &Design, q: usize, max_moves: usize) -> Design {
    let (n, d, m) = (design.n(), design.d(), design.m() as usize);
    if n < 2 {
        return design.clone();
    }
    let mut rows: Vec<Vec<u32>> = design.rows();
    let mut dist = vec![0usize; n * n];
    let mut hist = vec![0usize; d + 1];
    for i in 0..n {
        for k in (i + 1)..n {
            let h = rows[i].iter().zip(&rows[k]).filter(|(a, b)| a != b).count();
            dist[i * n + k] = h;
            dist[k * n + i] = h;
            hist[h] += 1;
        }
    }
    let objective = |hist: &[usize]| {
        let min = hist.iter().position(|&c| c > 0).unwrap_or(d);
        (min, hist.get(min).copied().unwrap_or(0))
    };
    let better = |a: (usize, usize), b: (usize, usize)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);

    for _ in 0..max_moves {
        let current = objective(&hist);
        if current.0 >= q {
            break;
        }
        let mut best: Option<((usize, usize), usize, usize, u32)> = None;
        'pairs: for i in 0..n {
            for k in (i + 1)..n {
                if dist[i * n + k] != current.0 {
                    continue;
                }
                for &r in &[i, k] {
                    for j in 0..d {
                        let old = rows[r][j];
                        for level in 1..=m as u32 {
                            if level == old {
                                continue;
                            }
                            let mut h = hist.clone();
                            for o in 0..n {
                                if o == r {
                                    continue;
                                }
                                let before = dist[r * n + o];
                                let delta_old = (rows[o][j] != old) as isize;
                                let delta_new = (rows[o][j] != level) as isize;
                                let after = (before as isize - delta_old + delta_new) as usize;
                                h[before] -= 1;
                                h[after] += 1;
                            }
                            let obj = objective(&h);
                            if better(obj, best.map_or(current, |b| b.0)) {
                                best = Some((obj, r, j, level));
                            }
                        }
                    }
                }
                if best.is_some() {
                    break 'pairs;
                }
            }
        }
        let Some((_, r, j, level)) = best else { break };
        let old = rows[r][j];
        for o in 0..n {
            if o == r {
                continue;
            }
            let before = dist[r * n + o];
            let after = (before as isize - (rows[o][j] != old) as isize + (rows[o][j] != level) as isize) as usize;
            hist[before] -= 1;
            hist[after] += 1;
            dist[r * n + o] = after;
            dist[o * n + r] = after;
        }
        rows[r][j] = level;
    }
    Design::from_rows(rows, m as u32).expect("repair keeps levels in range")
}

#[derive(Clone, Debug)]
pub struct MaximinResult {
    pub design: Design,
    pub q_star: usize,
    /// True when `q_star` is proven optimal (the next distance was certified
    /// infeasible, or `q_star = d`). False when a time limit intervened and
    /// `q_star` is only a lower bound.
    pub certified: bool,
    pub q0: usize,
    pub trace: Vec<SolveReport>,
}

impl MaximinResult {
    pub fn total_nodes(&self) -> u64 {
        self.trace.iter().map(|r| r.nodes_explored).sum()
    }

    pub fn total_elapsed(&self) -> f64 {
        self.trace.iter().map(|r| r.elapsed).sum()
    }
}

/// Maximin design by iterated feasibility programs, starting from `q0`.
///
/// The first program is solved at `q0(n, d, M)`. If it is feasible the
/// distance is raised one step at a time, warm-starting each program from
/// the previous design, until a program is certified infeasible or `q = d`.
/// If the starting program is not feasible the distance is lowered until one
/// is. `time_limit` applies to each program separately.
pub fn optimize_maximin(n: usize, d: usize, m: u32, time_limit: Option<Duration>) -> Result<MaximinResult> {
    if n < 2 {
        return Err(Error::NeedsTwoPoints(n));
    }
    let start_q = q0_value(n, d, m)?;
    let mut trace = Vec::new();

    let mut q = start_q;
    let mut descended = false;
    let mut upper_certified = true;
    let (mut design, mut q_star) = loop {
        let report = solve_feasibility(&FeasibilityInstance::new(n, d, m, q).with_time_limit(time_limit))?;
        let status = report.status.clone();
        trace.push(report);
        match status {
            SolveStatus::Feasible(design) => break (design, q),
            SolveStatus::InfeasibleCertified => {}
            SolveStatus::TimeLimit(_) => upper_certified = false,
        }
        descended = true;
        // q = 0 is always feasible, so this cannot underflow.
        q -= 1;
    };

    let mut certified = if descended { upper_certified } else { q_star == d };
    if !descended {
        while q_star < d {
            let inst = FeasibilityInstance::new(n, d, m, q_star + 1)
                .with_time_limit(time_limit)
                .with_warm_start(Some(design.clone()));
            let report = solve_feasibility(&inst)?;
            let status = report.status.clone();
            trace.push(report);
            match status {
                SolveStatus::Feasible(next) => {
                    design = next;
                    q_star += 1;
                    certified = q_star == d;
                }
                SolveStatus::InfeasibleCertified => {
                    certified = true;
                    break;
                }
                SolveStatus::TimeLimit(_) => {
                    certified = false;
                    break;
                }
            }
        }
    }
    Ok(MaximinResult { design, q_star, certified, q0: start_q, trace })
}

/// Exact maximin distance by enumerating every multiset of `n` lattice
/// points. Test oracle; guarded to at most [`BRUTE_FORCE_LIMIT`] multisets.
pub fn brute_force_maximin(n: usize, d: usize, m: u32) -> Result<(usize, Design)> {
    if n == 0 {
        return Err(Error::InvalidParameter("run size n must be >= 1".into()));
    }
    if d == 0 || m < 2 {
        return Err(Error::InvalidLattice { d, m });
    }
    let size = lattice_size(d, m).filter(|&s| s <= 1 << 20).ok_or(Error::TooLarge {
        what: "lattice for brute-force maximin",
        size: (m as f64).powi(d as i32),
        limit: (1u64 << 20) as f64,
    })? as usize;
    // C(size + n - 1, n) multisets.
    let mut count = 1f64;
    for i in 0..n {
        count = count * (size + n - 1 - i) as f64 / (i + 1) as f64;
    }
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { what: "multisets for brute-force maximin", size: count, limit: BRUTE_FORCE_LIMIT });
    }
    let points: Vec<Point> = (0..size as u64).map(|i| Point::from_index(i, d, m)).collect::<Result<_>>()?;
    let mut table = vec![0u8; size * size];
    for a in 0..size {
        for b in 0..size {
            table[a * size + b] = points[a].levels().iter().zip(points[b].levels()).filter(|(x, y)| x != y).count() as u8;
        }
    }

    struct Enum<'a> {
        n: usize,
        size: usize,
        d: usize,
        table: &'a [u8],
        chosen: Vec<usize>,
        best: isize,
        witness: Vec<usize>,
    }
    impl Enum<'_> {
        fn go(&mut self, from: usize, current_min: usize) {
            if self.best as usize == self.d && self.best >= 0 {
                return;
            }
            if self.chosen.len() == self.n {
                if current_min as isize > self.best {
                    self.best = current_min as isize;
                    self.witness = self.chosen.clone();
                }
                return;
            }
            for p in from..self.size {
                let mut mn = current_min;
                for &c in &self.chosen {
                    mn = mn.min(self.table[c * self.size + p] as usize);
                }
                if mn as isize <= self.best {
                    continue;
                }
                self.chosen.push(p);
                self.go(p, mn);
                self.chosen.pop();
            }
        }
    }
    let mut e = Enum { n, size, d, table: &table, chosen: Vec::with_capacity(n), best: -1, witness: Vec::new() };
    e.go(0, d);
    let witness = Design::new(e.witness.iter().map(|&i| points[i].clone()).collect())?;
    Ok((e.best as usize, witness))
}

/// One line of a maximin solve trace, for JSON output.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub q: usize,
    pub status: &'static str,
    pub nodes: u64,
    pub elapsed: f64,
    pub achieved_q: Option<usize>,
}

impl From<&SolveReport> for TraceEntry {
    fn from(r: &SolveReport) -> Self {
        Self { q: r.q, status: r.status_name(), nodes: r.nodes_explored, elapsed: r.elapsed, achieved_q: r.achieved_q }
    }
}
