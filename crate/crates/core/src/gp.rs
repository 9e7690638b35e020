//! Gaussian-process surrogate with the exchangeable categorical kernel
//! `exp(-sum_l theta_l * 1(x_l != y_l))`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{lattice_size, Design, DesignFile, Point, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::maximin::brute_force_maximin;
use crate::seeding;

/// Diagonal jitter added before factorization.
pub const NUGGET: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub theta: Vec<f64>,
    pub mu: f64,
    pub tau2: f64,
}

impl KernelParams {
    pub fn new(theta: Vec<f64>, mu: f64, tau2: f64) -> Result<Self> {
        check_theta(&theta)?;
        if !(tau2 > 0.0 && tau2.is_finite()) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("need finite mu and tau2 > 0, got mu = {mu}, tau2 = {tau2}")));
        }
        Ok(Self { theta, mu, tau2 })
    }

    pub fn isotropic(d: usize, theta: f64, mu: f64, tau2: f64) -> Result<Self> {
        Self::new(vec![theta; d], mu, tau2)
    }
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.is_empty() || theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!("length-scales must be finite and positive: {theta:?}")));
    }
    Ok(())
}

/// Per-factor correlation terms: `e^{-theta_l}` for a differing factor.
fn kernel_unchecked(x: &Point, y: &Point, theta: &[f64]) -> f64 {
    let s: f64 = x
        .levels()
        .iter()
        .zip(y.levels())
        .zip(theta)
        .filter(|((a, b), _)| a != b)
        .map(|(_, t)| t)
        .sum();
    (-s).exp()
}

pub fn kernel(x: &Point, y: &Point, theta: &[f64]) -> Result<f64> {
    if x.d() != y.d() || x.m() != y.m() {
        return Err(Error::DimensionMismatch { expected_d: x.d(), expected_m: x.m(), got_d: y.d(), got_m: y.m() });
    }
    if theta.len() != x.d() {
        return Err(Error::InvalidParameter(format!("theta has {} entries, expected d = {}", theta.len(), x.d())));
    }
    Ok(kernel_unchecked(x, y, theta))
}

/// Correlation matrix of a design (unit diagonal, no jitter).
pub fn covariance_matrix(design: &Design, theta: &[f64]) -> Result<DMatrix<f64>> {
    if theta.len() != design.d() {
        return Err(Error::InvalidParameter(format!("theta has {} entries, expected d = {}", theta.len(), design.d())));
    }
    let n = design.n();
    let pts = design.points();
    let mut g = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel_unchecked(&pts[i], &pts[j], theta);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

fn factor(design: &Design, theta: &[f64], nugget: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut g = covariance_matrix(design, theta)?;
    for i in 0..design.n() {
        g[(i, i)] += nugget;
    }
    Cholesky::new(g).ok_or(Error::NotPositiveDefinite)
}

/// Pulls the jittered solve toward the unjittered weights `G^-1 r` by
/// iterative refinement, keeping the jittered factor as preconditioner.
/// Stops as soon as the residual stops shrinking, so a singular `G` (repeated
/// points with conflicting responses) keeps the jittered answer.
fn refine_weights(g: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, r: &DVector<f64>, mut alpha: DVector<f64>) -> DVector<f64> {
    let mut resid = r - g * &alpha;
    let mut norm = resid.norm();
    for _ in 0..50 {
        let step = chol.solve(&resid);
        let next = &alpha + step;
        let next_resid = r - g * &next;
        let next_norm = next_resid.norm();
        if !(next_norm < 0.5 * norm) {
            break;
        }
        alpha = next;
        resid = next_resid;
        norm = next_norm;
    }
    alpha
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Maximum-likelihood values of `mu` and `tau2` at fixed `theta`, with the
/// resulting (concentrated) log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile {
    pub mu: f64,
    pub tau2: f64,
    pub log_likelihood: f64,
}

pub fn profile_likelihood(design: &Design, f: &[f64], theta: &[f64], nugget: f64) -> Result<Profile> {
    if f.len() != design.n() {
        return Err(Error::LengthMismatch(f.len(), design.n()));
    }
    let chol = factor(design, theta, nugget)?;
    Ok(profile_from_factor(&chol, f))
}

fn profile_from_factor(chol: &Cholesky<f64, Dyn>, f: &[f64]) -> Profile {
    let n = f.len();
    let fv = DVector::from_column_slice(f);
    let ones = DVector::from_element(n, 1.0);
    let w1 = chol.solve(&ones);
    let mu = w1.dot(&fv) / w1.sum();
    let r = fv.add_scalar(-mu);
    let tau2 = chol.solve(&r).dot(&r) / n as f64;
    let nf = n as f64;
    let log_likelihood = if tau2 > 0.0 {
        -0.5 * (nf * (2.0 * std::f64::consts::PI * tau2).ln() + log_det(chol) + nf)
    } else {
        f64::INFINITY
    };
    Profile { mu, tau2, log_likelihood }
}

/// Gaussian log-likelihood at arbitrary `(theta, mu, tau2)`.
pub fn log_likelihood(design: &Design, f: &[f64], params: &KernelParams, nugget: f64) -> Result<f64> {
    if f.len() != design.n() {
        return Err(Error::LengthMismatch(f.len(), design.n()));
    }
    let chol = factor(design, &params.theta, nugget)?;
    let r = DVector::from_column_slice(f).add_scalar(-params.mu);
    let quad = chol.solve(&r).dot(&r);
    let nf = f.len() as f64;
    Ok(-0.5 * (nf * (2.0 * std::f64::consts::PI * params.tau2).ln() + log_det(&chol) + quad / params.tau2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub starts: usize,
    pub iterations: usize,
    pub log_theta_min: f64,
    pub log_theta_max: f64,
    pub nugget: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            iterations: 200,
            log_theta_min: 1e-3f64.ln(),
            log_theta_max: 10f64.ln(),
            nugget: NUGGET,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut scale = inv;
    while i > 0 {
        out += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    out
}

/// Starting points in log-theta space: the origin, then a Halton sequence
/// under a seeded random shift (mod 1), scaled into the box.
pub fn multistart_points(d: usize, config: &FitConfig) -> Vec<Vec<f64>> {
    let mut rng = seeding::rng(config.seed, "gp-multistart", d as u64);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let bases = primes(d);
    let (lo, hi) = (config.log_theta_min, config.log_theta_max);
    let mut out = Vec::with_capacity(config.starts);
    if config.starts > 0 {
        out.push(vec![0f64.clamp(lo, hi); d]);
    }
    for i in 1..config.starts {
        out.push(
            (0..d)
                .map(|l| {
                    let u = (radical_inverse(i as u64, bases[l]) + shift[l]).fract();
                    lo + u * (hi - lo)
                })
                .collect(),
        );
    }
    out
}

/// Nelder-Mead minimization with every vertex clamped into `[lo, hi]^d`.
fn nelder_mead<F: Fn(&[f64]) -> f64>(objective: F, start: &[f64], lo: f64, hi: f64, iterations: usize) -> (Vec<f64>, f64) {
    let d = start.len();
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(lo, hi)).collect() };
    let step = 0.1 * (hi - lo);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let s0 = clamp(start.to_vec());
    let f0 = objective(&s0);
    simplex.push((s0.clone(), f0));
    for l in 0..d {
        let mut v = s0.clone();
        v[l] = if v[l] + step <= hi { v[l] + step } else { v[l] - step };
        let fv = objective(&v);
        simplex.push((v, fv));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..iterations {
        order(&mut simplex);
        let worst = simplex[d].clone();
        let centroid: Vec<f64> = (0..d).map(|l| simplex[..d].iter().map(|v| v.0[l]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| clamp(centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect());
        let reflected = along(1.0);
        let fr = objective(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(2.0);
            let fe = objective(&expanded);
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { along(0.5) } else { along(-0.5) };
            let fc = objective(&contracted);
            if fc < worst.1.min(fr) {
                simplex[d] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    v.1 = objective(&shrunk);
                    v.0 = shrunk;
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

#[derive(Clone, Debug)]
pub struct GpModel {
    design: Design,
    responses: Vec<f64>,
    params: KernelParams,
    nugget: f64,
    constant: bool,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

impl GpModel {
    /// Model with fixed kernel parameters (no fitting).
    pub fn with_params(design: Design, responses: Vec<f64>, params: KernelParams, nugget: f64) -> Result<Self> {
        if responses.len() != design.n() {
            return Err(Error::LengthMismatch(responses.len(), design.n()));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("responses must be finite".into()));
        }
        if params.theta.len() != design.d() {
            return Err(Error::InvalidParameter(format!(
                "theta has {} entries, expected d = {}",
                params.theta.len(),
                design.d()
            )));
        }
        let params = KernelParams::new(params.theta, params.mu, params.tau2)?;
        let chol = factor(&design, &params.theta, nugget)?;
        let r = DVector::from_column_slice(&responses).add_scalar(-params.mu);
        let alpha = chol.solve(&r);
        let log_likelihood = -0.5
            * (responses.len() as f64 * (2.0 * std::f64::consts::PI * params.tau2).ln()
                + log_det(&chol)
                + alpha.dot(&r) / params.tau2);
        let alpha = refine_weights(&covariance_matrix(&design, &params.theta)?, &chol, &r, alpha);
        Ok(Self { design, responses, params, nugget, constant: false, chol, alpha, log_likelihood })
    }

    /// Flagged constant predictor for data with no spread. The kernel
    /// parameters are nominal (`theta = 1`, `tau2 = 1`) and only matter for
    /// the correlation-based variance-reduction criterion.
    fn constant_model(design: Design, responses: Vec<f64>, nugget: f64) -> Result<Self> {
        let params = KernelParams::isotropic(design.d(), 1.0, responses[0], 1.0)?;
        let chol = factor(&design, &params.theta, nugget)?;
        let alpha = DVector::zeros(design.n());
        Ok(Self { design, responses, params, nugget, constant: true, chol, alpha, log_likelihood: f64::INFINITY })
    }

    /// Maximum-likelihood fit with `mu` and `tau2` profiled out and
    /// multi-start Nelder-Mead over log-theta.
    pub fn fit_mle(design: Design, responses: Vec<f64>, config: &FitConfig) -> Result<Self> {
        if design.n() < 2 {
            return Err(Error::NeedsTwoPoints(design.n()));
        }
        if responses.len() != design.n() {
            return Err(Error::LengthMismatch(responses.len(), design.n()));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("responses must be finite".into()));
        }
        if responses.iter().all(|&v| v == responses[0]) {
            return Self::constant_model(design, responses, config.nugget);
        }
        let objective = |log_theta: &[f64]| -> f64 {
            let theta: Vec<f64> = log_theta.iter().map(|v| v.exp()).collect();
            match profile_likelihood(&design, &responses, &theta, config.nugget) {
                Ok(p) if p.log_likelihood.is_finite() => -p.log_likelihood,
                _ => f64::INFINITY,
            }
        };
        let starts = multistart_points(design.d(), config);
        let results: Vec<(Vec<f64>, f64)> = starts
            .par_iter()
            .map(|s| nelder_mead(objective, s, config.log_theta_min, config.log_theta_max, config.iterations))
            .collect();
        let mut best = 0;
        for (i, r) in results.iter().enumerate() {
            if r.1 < results[best].1 {
                best = i;
            }
        }
        let theta: Vec<f64> = results[best].0.iter().map(|v| v.exp()).collect();
        let profile = profile_likelihood(&design, &responses, &theta, config.nugget)?;
        if !(profile.tau2 > 0.0) {
            return Self::constant_model(design, responses, config.nugget);
        }
        Self::with_params(design, responses, KernelParams::new(theta, profile.mu, profile.tau2)?, config.nugget)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// `Gamma^{-1} (f - mu 1)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Scale multiplying the posterior standard deviation; zero for the
    /// constant predictor.
    pub fn sigma_scale(&self) -> f64 {
        if self.constant {
            0.0
        } else {
            self.params.tau2.sqrt()
        }
    }

    /// Inverse of the jittered correlation matrix.
    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn lower_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Correlations between `x` and each design point.
    pub fn cross_correlation(&self, x: &Point) -> Result<DVector<f64>> {
        let first = self.design.point(0);
        if x.d() != first.d() || x.m() != first.m() {
            return Err(Error::DimensionMismatch {
                expected_d: first.d(),
                expected_m: first.m(),
                got_d: x.d(),
                got_m: x.m(),
            });
        }
        Ok(DVector::from_iterator(
            self.design.n(),
            self.design.points().iter().map(|p| kernel_unchecked(x, p, &self.params.theta)),
        ))
    }

    /// `gamma^T Gamma^{-1} gamma` for a cross-correlation vector.
    pub fn explained(&self, gamma: &DVector<f64>) -> f64 {
        let v = self.chol.l_dirty().solve_lower_triangular(gamma).expect("factor has a positive diagonal");
        v.norm_squared()
    }

    /// Posterior mean and variance at `x`.
    pub fn predict(&self, x: &Point) -> Result<(f64, f64)> {
        let gamma = self.cross_correlation(x)?;
        if self.constant {
            return Ok((self.responses[0], 0.0));
        }
        let mean = self.params.mu + gamma.dot(&self.alpha);
        let var = self.params.tau2 * (1.0 - self.explained(&gamma)).max(0.0);
        Ok((mean, var))
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            design: self.design.to_file(),
            responses: self.responses.clone(),
            theta: self.params.theta.clone(),
            mu: self.params.mu,
            tau2: self.params.tau2,
            nugget: self.nugget,
            constant: self.constant,
            log_likelihood: self.log_likelihood.is_finite().then_some(self.log_likelihood),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
        file.into_model()
    }
}

/// On-disk JSON form of a [`GpModel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub design: DesignFile,
    pub responses: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: f64,
    pub tau2: f64,
    pub nugget: f64,
    #[serde(default)]
    pub constant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl ModelFile {
    pub fn into_model(self) -> Result<GpModel> {
        let design = self.design.into_design()?;
        if self.constant {
            if self.responses.is_empty() || self.responses.len() != design.n() {
                return Err(Error::LengthMismatch(self.responses.len(), design.n()));
            }
            return GpModel::constant_model(design, self.responses, self.nugget);
        }
        GpModel::with_params(design, self.responses, KernelParams::new(self.theta, self.mu, self.tau2)?, self.nugget)
    }
}

/// Enumeration budget for [`d_optimality_ratio`].
pub const D_OPTIMALITY_LIMIT: f64 = 1e6;

/// `(1 + max det Gamma_k) / (1 + det Gamma_k(maximin))`, where `Gamma_k` is
/// the correlation matrix under the powered kernel `gamma^k`. The maximum is
/// over every `n`-point multiset of the lattice and the maximin design is the
/// exhaustive-search witness.
pub fn d_optimality_ratio(n: usize, d: usize, m: u32, theta: &[f64], k: u32) -> Result<f64> {
    check_theta(theta)?;
    if theta.len() != d {
        return Err(Error::InvalidParameter(format!("theta has {} entries, expected d = {d}", theta.len())));
    }
    if n < 2 {
        return Err(Error::NeedsTwoPoints(n));
    }
    let size = lattice_size(d, m).filter(|&s| s <= 4096).ok_or(Error::TooLarge {
        what: "lattice for D-optimality enumeration",
        size: (m as f64).powi(d as i32),
        limit: 4096.0,
    })? as usize;
    let mut count = 1f64;
    for i in 0..n {
        count = count * (size + n - 1 - i) as f64 / (i + 1) as f64;
    }
    if count > D_OPTIMALITY_LIMIT {
        return Err(Error::TooLarge { what: "designs for D-optimality enumeration", size: count, limit: D_OPTIMALITY_LIMIT });
    }
    let powered: Vec<f64> = theta.iter().map(|t| t * k as f64).collect();
    let points: Vec<Point> = (0..size as u64).map(|i| Point::from_index(i, d, m)).collect::<Result<_>>()?;
    let det_of = |idx: &[usize]| -> f64 {
        let design = Design::new(idx.iter().map(|&i| points[i].clone()).collect()).expect("non-empty");
        covariance_matrix(&design, &powered).expect("theta checked").determinant()
    };

    let mut best = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = vec![0; n];
    loop {
        best = best.max(det_of(&idx));
        // Next non-decreasing index sequence.
        let mut pos = n;
        while pos > 0 && idx[pos - 1] == size - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        let v = idx[pos - 1] + 1;
        idx[pos - 1..].iter_mut().for_each(|x| *x = v);
    }

    let (_, witness) = brute_force_maximin(n, d, m)?;
    let maximin_det = covariance_matrix(&witness, &powered)?.determinant();
    Ok((1.0 + best) / (1.0 + maximin_det))
}
