//! Sequential design loop: refit the surrogate, optimize the acquisition,
//! evaluate the objective, repeat.

use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::acquisition::{candidate_set_acquisition, optimize_acquisition, sample_point, AcquisitionKind, AcquisitionSpec};
use crate::encoding::{Design, Point, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, GpModel, KernelParams};
use crate::seeding;
use crate::simulators::Objective;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Method {
    /// Branch-and-bound acquisition optimization.
    Quip,
    /// Uniform random points, no model.
    Random,
    /// Best of `c` uniform candidates under the acquisition.
    Candidate { c: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Quip => "quip",
            Method::Random => "random",
            Method::Candidate { .. } => "candidate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub method: Method,
    pub spec: AcquisitionSpec,
    pub n_seq: usize,
    pub seed: u64,
    pub fit: FitConfig,
    /// Skip refitting and keep these kernel parameters throughout.
    pub frozen: Option<KernelParams>,
    /// Per-iteration candidate counts for [`Method::Candidate`]; the last
    /// entry repeats. Empty means the method's own `c`.
    pub candidate_schedule: Vec<usize>,
}

impl CampaignConfig {
    pub fn new(method: Method, spec: AcquisitionSpec, n_seq: usize, seed: u64) -> Self {
        Self { method, spec, n_seq, seed, fit: FitConfig::default(), frozen: None, candidate_schedule: Vec::new() }
    }

    pub fn with_frozen(mut self, params: KernelParams) -> Self {
        self.frozen = Some(params);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub point: Vec<u32>,
    pub response: f64,
    pub acquisition_value: Option<f64>,
    pub certified_bound: Option<f64>,
    pub relative_gap: Option<f64>,
    pub acq_status: Option<String>,
    pub nodes: Option<u64>,
    pub candidates: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub tau2: Option<f64>,
    pub constant_model: Option<bool>,
    pub log_likelihood: Option<f64>,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub design: Design,
    pub responses: Vec<f64>,
    pub n_init: usize,
    pub method: Method,
    pub kind: AcquisitionKind,
    pub seed: u64,
    pub objective: String,
    pub history: Vec<IterationRecord>,
}

impl Campaign {
    pub fn to_json(&self) -> String {
        let (lambda, acq) = match self.kind {
            AcquisitionKind::Alm => (None, "alm"),
            AcquisitionKind::Ucb { lambda } => (Some(lambda), "ucb"),
        };
        let best = best_so_far(self);
        serde_json::to_string_pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "objective": self.objective,
            "method": self.method,
            "acquisition": acq,
            "lambda": lambda,
            "seed": self.seed,
            "n_init": self.n_init,
            "design": self.design.to_file(),
            "responses": self.responses,
            "best_point": best.0.levels(),
            "best_value": best.1,
            "best_so_far": best_so_far_curve(&self.responses),
            "history": self.history,
        }))
        .expect("campaign serializes")
    }
}

/// A campaign stopped by an error, with every completed iteration kept.
#[derive(Debug, thiserror::Error)]
#[error("campaign aborted after {} iterations: {source}", partial.history.len())]
pub struct CampaignAborted {
    pub partial: Box<Campaign>,
    #[source]
    pub source: Error,
}

/// Runs `config.n_seq` sequential iterations from the initial data. The
/// objective is maximized.
pub fn run_campaign(
    initial: Design,
    f_init: Vec<f64>,
    objective: &dyn Objective,
    config: &CampaignConfig,
) -> std::result::Result<Campaign, CampaignAborted> {
    let mut campaign = Campaign {
        n_init: initial.n(),
        design: initial,
        responses: f_init,
        method: config.method,
        kind: config.spec.kind,
        seed: config.seed,
        objective: objective.name().to_string(),
        history: Vec::new(),
    };
    let abort = |campaign: Campaign, source: Error| CampaignAborted { partial: Box::new(campaign), source };

    if campaign.responses.len() != campaign.design.n() {
        let e = Error::LengthMismatch(campaign.responses.len(), campaign.design.n());
        return Err(abort(campaign, e));
    }
    if campaign.design.d() != objective.d() || campaign.design.m() != objective.m() {
        let e = Error::DimensionMismatch {
            expected_d: objective.d(),
            expected_m: objective.m(),
            got_d: campaign.design.d(),
            got_m: campaign.design.m(),
        };
        return Err(abort(campaign, e));
    }
    if let Err(e) = config.spec.validate() {
        return Err(abort(campaign, e));
    }

    let mut random = seeding::rng(config.seed, "campaign-random", 0);
    for iteration in 1..=config.n_seq {
        match step(&mut campaign, objective, config, iteration, &mut random) {
            Ok(record) => campaign.history.push(record),
            Err(e) => return Err(abort(campaign, e)),
        }
    }
    Ok(campaign)
}

fn fit(campaign: &Campaign, config: &CampaignConfig, iteration: usize) -> Result<GpModel> {
    let design = campaign.design.clone();
    let f = campaign.responses.clone();
    match &config.frozen {
        Some(params) => GpModel::with_params(design, f, params.clone(), config.fit.nugget),
        None => {
            let fit = config.fit.clone().with_seed(seeding::derive_seed(config.seed, "fit", iteration as u64));
            GpModel::fit_mle(design, f, &fit)
        }
    }
}

fn step(
    campaign: &mut Campaign,
    objective: &dyn Objective,
    config: &CampaignConfig,
    iteration: usize,
    random: &mut rand_chacha::ChaCha8Rng,
) -> Result<IterationRecord> {
    let start = Instant::now();
    let (d, m) = (campaign.design.d(), campaign.design.m());
    let mut record = IterationRecord {
        iteration,
        point: Vec::new(),
        response: f64::NAN,
        acquisition_value: None,
        certified_bound: None,
        relative_gap: None,
        acq_status: None,
        nodes: None,
        candidates: None,
        theta: None,
        mu: None,
        tau2: None,
        constant_model: None,
        log_likelihood: None,
        wall_time: 0.0,
    };
    let point: Point = match config.method {
        Method::Random => sample_point(random, d, m),
        Method::Quip | Method::Candidate { .. } => {
            let model = fit(campaign, config, iteration)?;
            record.theta = Some(model.params().theta.clone());
            record.mu = Some(model.params().mu);
            record.tau2 = Some(model.params().tau2);
            record.constant_model = Some(model.is_constant());
            record.log_likelihood = model.log_likelihood().is_finite().then(|| model.log_likelihood());
            match config.method {
                Method::Quip => {
                    let report = optimize_acquisition(&model, &config.spec)?;
                    record.acquisition_value = Some(report.best_value);
                    record.certified_bound = Some(report.certified_bound);
                    record.relative_gap = Some(report.relative_gap);
                    record.acq_status = Some(format!("{:?}", report.status).to_lowercase());
                    record.nodes = Some(report.nodes);
                    report.best_point
                }
                Method::Candidate { c } => {
                    let c = match config.candidate_schedule.as_slice() {
                        [] => c,
                        s => s[(iteration - 1).min(s.len() - 1)],
                    };
                    let seed = seeding::derive_seed(config.seed, "candidate", iteration as u64);
                    let (p, v) = candidate_set_acquisition(&model, &config.spec, c, seed)?;
                    record.acquisition_value = Some(v);
                    record.candidates = Some(c);
                    p
                }
                Method::Random => unreachable!(),
            }
        }
    };
    let response = objective.evaluate(&point)?;
    if !response.is_finite() {
        return Err(Error::Simulator(format!("non-finite response at {point}")));
    }
    campaign.design.push(point.clone())?;
    campaign.responses.push(response);
    record.point = point.levels().to_vec();
    record.response = response;
    record.wall_time = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Best evaluated point so far (first index on ties).
pub fn best_so_far(campaign: &Campaign) -> (Point, f64) {
    let mut best = 0;
    for (i, &v) in campaign.responses.iter().enumerate() {
        if v > campaign.responses[best] {
            best = i;
        }
    }
    (campaign.design.point(best).clone(), campaign.responses[best])
}

/// Running maximum of a response sequence.
pub fn best_so_far_curve(responses: &[f64]) -> Vec<f64> {
    responses
        .iter()
        .scan(f64::NEG_INFINITY, |acc, &v| {
            *acc = acc.max(v);
            Some(*acc)
        })
        .collect()
}

/// Relative root-mean-squared error: `sqrt(sum (y - yhat)^2 / sum (y - ybar)^2)`.
pub fn rrmse(truth: &[f64], predictions: &[f64]) -> Result<f64> {
    if truth.len() != predictions.len() {
        return Err(Error::LengthMismatch(truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("RRMSE needs at least one value".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let spread: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if spread == 0.0 {
        return Err(Error::ConstantTruth);
    }
    let resid: f64 = truth.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    Ok((resid / spread).sqrt())
}
