//! Random, grid and Bayesian adversary search over a pattern parameter space.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gp::{GpModel, HyperPolicy};
use super::BayesError;
use crate::pattern::{grid_points, sample_unit, ParamSpace, PatternParams};
use crate::simulate::InfractionReport;

/// Result of evaluating one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infractions: Option<InfractionReport>,
    /// Scored as zero because the canvas never came into view.
    #[serde(default)]
    pub sentinel: bool,
    /// Free-form payload carried into the iteration record.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl Evaluation {
    pub fn score(score: f64) -> Self {
        Evaluation {
            score,
            infractions: None,
            sentinel: false,
            extra: serde_json::Value::Null,
        }
    }
}

/// Black-box objective. Implementations must be deterministic in
/// `(iteration, params)` for searches to be reproducible.
pub trait Evaluator: Sync {
    fn evaluate(&self, iteration: usize, params: &PatternParams) -> Result<Evaluation, String>;
}

/// Adapter for plain score functions.
pub struct FnEvaluator<F>(pub F);

impl<F: Fn(&PatternParams) -> f64 + Sync> Evaluator for FnEvaluator<F> {
    fn evaluate(&self, _iteration: usize, params: &PatternParams) -> Result<Evaluation, String> {
        let s = (self.0)(params);
        if s.is_finite() {
            Ok(Evaluation::score(s))
        } else {
            Err(format!("non-finite score {s}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Grid,
    Bayes,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Grid, Strategy::Bayes];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Grid => "grid",
            Strategy::Bayes => "bayes",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = BayesError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BayesError::Parameter(format!("unknown strategy `{s}`")))
    }
}

/// How an iterate was proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Random,
    Grid,
    Acquisition,
    /// The surrogate could not be fitted; a uniform sample was used instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub params: PatternParams,
    /// Parameters in the unit cube.
    pub unit: Vec<f64>,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infractions: Option<InfractionReport>,
    #[serde(default)]
    pub sentinel: bool,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
    /// Running best score including this iteration.
    pub best_score: Option<f64>,
    pub best_iteration: Option<usize>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub strategy: Strategy,
    pub records: Vec<IterationRecord>,
    /// Index into `records` of the best successful iteration.
    pub best: Option<usize>,
}

impl SearchResult {
    pub fn best_record(&self) -> Option<&IterationRecord> {
        self.best.map(|i| &self.records[i])
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best_record().and_then(|r| r.score)
    }

    /// Running maximum after each iteration.
    pub fn running_best(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.best_score).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    /// Worker threads for independent evaluations; zero uses all cores.
    pub workers: usize,
    /// Uniform starts of the acquisition ascent, in addition to the incumbent.
    pub restarts: usize,
    pub hyper: HyperPolicy,
    /// Largest grid `grid_search` accepts.
    pub grid_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            workers: 0,
            restarts: 32,
            hyper: HyperPolicy::default(),
            grid_cap: 100_000,
        }
    }
}

/// Receives every record in iteration order; an error aborts the search.
pub type Sink<'a> = &'a mut dyn FnMut(&IterationRecord) -> Result<(), BayesError>;

/// GP training data in the unit cube.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl ObservationSet {
    pub const DUPLICATE_TOL: f64 = 1e-10;
    pub const JITTER: f64 = 1e-8;

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Append an observation, nudging the first coordinate by multiples of
    /// `JITTER` (towards the interior) while it duplicates an earlier input.
    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        let dup = |c: &[f64]| {
            self.inputs.iter().any(|p| {
                p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= Self::DUPLICATE_TOL
            })
        };
        let mut candidate = x.clone();
        let mut k = 1.0;
        while !candidate.is_empty() && dup(&candidate) {
            let dir = if x[0] + k * Self::JITTER <= 1.0 { 1.0 } else { -1.0 };
            candidate[0] = x[0] + dir * k * Self::JITTER;
            k += 1.0;
        }
        self.inputs.push(candidate);
        self.outputs.push(y);
    }

    pub fn fit(&self, policy: &HyperPolicy) -> Result<GpModel, BayesError> {
        GpModel::fit(&self.inputs, &self.outputs, policy)
    }
}

/// Best point found by the acquisition ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionPoint {
    pub unit: Vec<f64>,
    pub params: PatternParams,
    pub value: f64,
}

const MAX_ASCENT_EVALS: usize = 4000;

/// Bounded coordinate ascent on the unit cube: try `±step` along each axis,
/// take the first strict improvement, halve the step when none exists, stop
/// once the step falls below `1e-4`.
pub fn coordinate_ascent<F: Fn(&[f64]) -> f64>(f: F, start: Vec<f64>) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = 0.25;
    let mut evals = 1;
    while step >= 1e-4 && evals < MAX_ASCENT_EVALS {
        let mut moved = false;
        'dims: for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let v = (x[d] + dir * step).clamp(0.0, 1.0);
                if v == x[d] {
                    continue;
                }
                let mut y = x.clone();
                y[d] = v;
                let fy = f(&y);
                evals += 1;
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                    break 'dims;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Multi-start maximization of expected improvement.
pub fn maximize_acquisition(
    model: &GpModel,
    space: &ParamSpace,
    restarts: usize,
    incumbent: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
) -> AcquisitionPoint {
    let d = space.dimension();
    let mut starts: Vec<Vec<f64>> = (0..restarts.max(1)).map(|_| sample_unit(d, rng)).collect();
    if let Some(inc) = incumbent {
        starts.push(inc.to_vec());
    }
    let results: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|s| coordinate_ascent(|x| model.expected_improvement(x), s))
        .collect();
    let (unit, value) = results
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("at least one start");
    AcquisitionPoint {
        params: space.params_from_unit(&unit),
        unit,
        value,
    }
}

struct Runner<'a> {
    evaluator: &'a dyn Evaluator,
    pool: rayon::ThreadPool,
    sink: Sink<'a>,
    records: Vec<IterationRecord>,
    best: Option<usize>,
}

impl<'a> Runner<'a> {
    fn new(evaluator: &'a dyn Evaluator, opts: &SearchOptions, sink: Sink<'a>) -> Result<Self, BayesError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| BayesError::Parameter(e.to_string()))?;
        Ok(Runner {
            evaluator,
            pool,
            sink,
            records: Vec::new(),
            best: None,
        })
    }

    fn batch_size(&self) -> usize {
        2 * self.pool.current_num_threads().max(1)
    }

    /// Evaluate proposals concurrently and commit them in order.
    fn run(&mut self, proposals: Vec<(Phase, Vec<f64>, PatternParams)>) -> Result<(), BayesError> {
        let chunk = self.batch_size();
        let mut proposals = proposals.into_iter().peekable();
        while proposals.peek().is_some() {
            let batch: Vec<_> = proposals.by_ref().take(chunk).collect();
            let first = self.records.len();
            let ev = self.evaluator;
            let outcomes: Vec<(Result<Evaluation, String>, f64)> = self.pool.install(|| {
                batch
                    .par_iter()
                    .enumerate()
                    .map(|(k, (_, _, params))| {
                        let t = Instant::now();
                        let r = ev.evaluate(first + k, params);
                        (r, t.elapsed().as_secs_f64())
                    })
                    .collect()
            });
            for ((phase, unit, params), (outcome, secs)) in batch.into_iter().zip(outcomes) {
                self.commit(phase, unit, params, outcome, secs)?;
            }
        }
        Ok(())
    }

    fn commit(
        &mut self,
        phase: Phase,
        unit: Vec<f64>,
        params: PatternParams,
        outcome: Result<Evaluation, String>,
        wall_seconds: f64,
    ) -> Result<(), BayesError> {
        let iteration = self.records.len();
        let mut rec = IterationRecord {
            iteration,
            phase,
            params,
            unit,
            score: None,
            error: None,
            infractions: None,
            sentinel: false,
            extra: serde_json::Value::Null,
            best_score: None,
            best_iteration: None,
            wall_seconds,
        };
        match outcome {
            Ok(e) if e.score.is_finite() => {
                rec.score = Some(e.score);
                rec.infractions = e.infractions;
                rec.sentinel = e.sentinel;
                rec.extra = e.extra;
                let better = match self.best {
                    None => true,
                    Some(b) => e.score > self.records[b].score.unwrap_or(f64::NEG_INFINITY),
                };
                if better {
                    self.best = Some(iteration);
                }
            }
            Ok(e) => rec.error = Some(format!("non-finite score {}", e.score)),
            Err(msg) => rec.error = Some(msg),
        }
        if let Some(b) = self.best {
            rec.best_iteration = Some(b);
            rec.best_score = if b == iteration { rec.score } else { self.records[b].score };
        }
        (self.sink)(&rec)?;
        self.records.push(rec);
        Ok(())
    }

    fn observations(&self) -> ObservationSet {
        let mut set = ObservationSet::default();
        for r in &self.records {
            if let Some(s) = r.score {
                set.push(r.unit.clone(), s);
            }
        }
        set
    }

    fn finish(self, strategy: Strategy) -> SearchResult {
        SearchResult {
            strategy,
            records: self.records,
            best: self.best,
        }
    }
}

fn uniform_proposals(space: &ParamSpace, n: usize, phase: Phase, rng: &mut ChaCha8Rng) -> Vec<(Phase, Vec<f64>, PatternParams)> {
    (0..n)
        .map(|_| {
            let unit = sample_unit(space.dimension(), rng);
            let params = space.params_from_unit(&unit);
            (phase, unit, params)
        })
        .collect()
}

/// `budget` i.i.d. uniform samples.
pub fn random_search(
    space: &ParamSpace,
    budget: usize,
    evaluator: &dyn Evaluator,
    seed: u64,
    opts: &SearchOptions,
    sink: Sink<'_>,
) -> Result<SearchResult, BayesError> {
    if budget == 0 {
        return Err(BayesError::Parameter("budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runner = Runner::new(evaluator, opts, sink)?;
    runner.run(uniform_proposals(space, budget, Phase::Random, &mut rng))?;
    Ok(runner.finish(Strategy::Random))
}

/// Every grid node in lexicographic order.
pub fn grid_search(
    space: &ParamSpace,
    evaluator: &dyn Evaluator,
    opts: &SearchOptions,
    sink: Sink<'_>,
) -> Result<SearchResult, BayesError> {
    let points = grid_points(space, opts.grid_cap)?;
    let proposals = points
        .into_iter()
        .map(|p| (Phase::Grid, space.normalize(&p.values), p))
        .collect();
    let mut runner = Runner::new(evaluator, opts, sink)?;
    runner.run(proposals)?;
    Ok(runner.finish(Strategy::Grid))
}

/// Uniform warm-up, then fit / maximize EI / evaluate until `budget` iterations.
pub fn bayes_search(
    space: &ParamSpace,
    warmup: usize,
    budget: usize,
    evaluator: &dyn Evaluator,
    seed: u64,
    opts: &SearchOptions,
    sink: Sink<'_>,
) -> Result<SearchResult, BayesError> {
    if warmup < 2 || budget < warmup {
        return Err(BayesError::Parameter(format!(
            "need 2 <= warmup <= budget, got warmup {warmup} and budget {budget}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acq_rng = ChaCha8Rng::seed_from_u64(seed);
    acq_rng.set_stream(1);
    let mut runner = Runner::new(evaluator, opts, sink)?;
    // same draws as random_search with the same seed
    runner.run(uniform_proposals(space, warmup, Phase::Warmup, &mut rng))?;
    for _ in warmup..budget {
        let data = runner.observations();
        let incumbent = runner.best.map(|b| runner.records[b].unit.clone());
        let model = if data.len() >= 2 { data.fit(&opts.hyper).ok() } else { None };
        let proposal = match model {
            Some(m) => {
                let p = maximize_acquisition(&m, space, opts.restarts, incumbent.as_deref(), &mut acq_rng);
                (Phase::Acquisition, p.unit, p.params)
            }
            None => uniform_proposals(space, 1, Phase::Fallback, &mut acq_rng).remove(0),
        };
        runner.run(vec![proposal])?;
    }
    Ok(runner.finish(Strategy::Bayes))
}
