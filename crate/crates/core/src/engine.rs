//! The Go-Explore loop over a dissimilarity space, plus a pure-exploration
//! baseline variant.
//!
//! Each epoch refreshes the per-cell elites, weights them by magnitude at
//! their scale cutoff, forms the go distribution balancing diversity against
//! objective value, and sizes the expedition count by a coupon-collector
//! lower bound on the draws needed to visit half the elites. Each expedition
//! returns to a sampled elite, fits a local surrogate, adapts the local
//! generator's bandwidth until probes stay in the elite's cell, and selects
//! the least Pareto-dominated probes under (estimated objective, negated
//! weighting). Selected probes are evaluated in one batch at epoch end.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coupon::{partial_collection_bounds, CouponError, ProbabilityVector};
use crate::discretize::{
    generate_landmarks, state_cell, CellId, DiscretizeError, LandmarkSet,
};
use crate::magnitude::{
    max_diversity_distribution, positive_cutoff, similarity, solve_weighting, strong_cutoff,
    DissimilarityMatrix, MagnitudeError, Weighting,
};
use crate::problems::Problem;
use crate::sqrt_eps;
use crate::surrogate::{fit_linear_rbf, SurrogateError};

/// Probes drawn per bandwidth round, as a multiple of the effort cap.
const PROBE_FACTOR: usize = 2;
/// Bandwidth halvings allowed before the generator is deemed non-localizing.
const MAX_HALVINGS: usize = 60;
/// Fixed per-expedition effort of the baseline algorithm.
const BASELINE_EFFORT: usize = 10;
/// Epochs allowed to add no evaluations before the run is declared stalled.
const MAX_EMPTY_EPOCHS: usize = 50;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Magnitude(#[from] MagnitudeError),
    #[error(transparent)]
    Coupon(#[from] CouponError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("local generator failed to localize after {MAX_HALVINGS} bandwidth halvings")]
    NonLocalizingGenerator,
    #[error("run stalled: {MAX_EMPTY_EPOCHS} consecutive epochs without evaluations (epoch {epoch})")]
    Stalled { epoch: u32 },
}

/// Which variant of the loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Surrogate- and weighting-guided Go-Explore.
    Full,
    /// Pure exploration: max-diversity go distribution, fixed effort, fixed
    /// bandwidth, no surrogate, no Pareto selection.
    Baseline,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Number of landmarks (L).
    pub landmark_count: usize,
    /// Number of initial states (T >= L).
    pub initial_states: usize,
    /// Cell hash depth (K <= L).
    pub rank_cutoff: usize,
    /// Total objective evaluation budget (M >= T).
    pub eval_budget: usize,
    /// Maximum per-expedition exploration effort (mu).
    pub max_effort: usize,
    /// Master RNG seed; identical seeds reproduce runs byte for byte.
    pub seed: u64,
    /// Skip the eigenvalue check in scale cutoffs (valid when `exp(-t d)` is
    /// always positive definite, e.g. Euclidean-embeddable dissimilarities).
    pub metric_is_euclidean: bool,
    pub algorithm: Algorithm,
    /// Fixed local-generator bandwidth for the baseline.
    pub baseline_bandwidth: Option<f64>,
    /// Normalize the bi-objective by variance instead of standard deviation
    /// (legacy behavior; off by default).
    pub variance_normalization: bool,
    /// Threads for batched objective evaluation; results are committed in
    /// submission order, so outputs do not depend on this.
    pub workers: usize,
}

impl EngineConfig {
    pub fn new(
        landmark_count: usize,
        initial_states: usize,
        rank_cutoff: usize,
        eval_budget: usize,
        max_effort: usize,
        seed: u64,
    ) -> Self {
        Self {
            landmark_count,
            initial_states,
            rank_cutoff,
            eval_budget,
            max_effort,
            seed,
            metric_is_euclidean: true,
            algorithm: Algorithm::Full,
            baseline_bandwidth: None,
            variance_normalization: false,
            workers: 1,
        }
    }

    /// The default initial-state count `ceil(L ln L)`.
    pub fn default_initial_states(landmark_count: usize) -> usize {
        let l = landmark_count as f64;
        (l * l.ln()).ceil().max(landmark_count as f64) as usize
    }

    fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.rank_cutoff < 1 {
            return fail("rank cutoff K must be at least 1".into());
        }
        if self.landmark_count < self.rank_cutoff {
            return fail(format!(
                "need L >= K, got L={} K={}",
                self.landmark_count, self.rank_cutoff
            ));
        }
        if self.initial_states < self.landmark_count {
            return fail(format!(
                "need T >= L, got T={} L={}",
                self.initial_states, self.landmark_count
            ));
        }
        if self.eval_budget < self.initial_states {
            return fail(format!(
                "evaluation budget M={} is below the initial state count T={}",
                self.eval_budget, self.initial_states
            ));
        }
        if self.max_effort < 1 {
            return fail("max effort mu must be at least 1".into());
        }
        if self.workers < 1 {
            return fail("workers must be at least 1".into());
        }
        if self.algorithm == Algorithm::Baseline {
            match self.baseline_bandwidth {
                Some(theta) if theta > 0.0 && theta.is_finite() => {}
                other => {
                    return fail(format!(
                        "baseline requires a positive finite bandwidth, got {other:?}"
                    ))
                }
            }
        }
        Ok(())
    }
}

/// One objective evaluation and its bookkeeping.
#[derive(Debug, Clone)]
pub struct HistoryEntry<S> {
    pub state: S,
    pub cell: CellId,
    /// Epoch the state was evaluated in (>= 1).
    pub birth: u32,
    /// Last epoch this entry was its cell's elite; 0 = never.
    pub reign: u32,
    pub objective: f64,
}

/// Per-epoch progress emitted on the diagnostics channel.
#[derive(Debug, Clone, Copy)]
pub struct EpochProgress {
    pub epoch: u32,
    pub evaluations: usize,
    pub expeditions: usize,
}

#[derive(Debug)]
pub struct RunOutput<S> {
    pub history: Vec<HistoryEntry<S>>,
    pub landmarks: LandmarkSet<S>,
    /// Final epoch index (the largest reign in the history).
    pub final_epoch: u32,
}

impl<S> RunOutput<S> {
    /// Indices of the entries that reign at the final epoch.
    pub fn elite_indices(&self) -> Vec<usize> {
        elite_indices_at(&self.history, self.final_epoch)
    }
}

pub(crate) fn elite_indices_at<S>(history: &[HistoryEntry<S>], epoch: u32) -> Vec<usize> {
    history
        .iter()
        .enumerate()
        .filter(|(_, e)| e.reign == epoch)
        .map(|(i, _)| i)
        .collect()
}

/// `(phi - median phi) / (max phi - median phi)`, with a zero denominator
/// replaced by 1 so constant vectors normalize to zero.
pub fn quantile_normalize(phi: &[f64]) -> Vec<f64> {
    let median = median_of(phi);
    let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = max - median;
    if denom == 0.0 {
        denom = 1.0;
    }
    phi.iter().map(|&v| (v - median) / denom).collect()
}

fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Probability distribution over the current elites.
#[derive(Debug, Clone)]
pub struct GoDistribution {
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl GoDistribution {
    fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let mut cdf = probabilities.clone();
        for i in 1..cdf.len() {
            cdf[i] += cdf[i - 1];
        }
        GoDistribution { probabilities, cdf }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Inverse-CDF lookup for a uniform draw in [0, 1).
    pub fn sample_index(&self, r: f64) -> usize {
        self.cdf
            .iter()
            .position(|&c| r < c)
            .unwrap_or(self.cdf.len() - 1)
    }
}

/// The go distribution `p ilto exp([log w]_norm - [f_E]_norm)`: elites with
/// large weighting components (diversity) or low objectives (quality) are
/// favored. A lone elite gets probability 1; zero weighting components
/// contribute `-inf` log terms that quantile normalization turns into zero
/// probability.
pub fn go_distribution(weighting: &Weighting, elite_objectives: &[f64]) -> GoDistribution {
    let n = weighting.len();
    debug_assert_eq!(n, elite_objectives.len());
    if n == 1 {
        return GoDistribution::from_probabilities(vec![1.0]);
    }
    let total: f64 = weighting.magnitude();
    let pdf: Vec<f64> = if total > 0.0 {
        weighting.components().iter().map(|c| c / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let log_pdf: Vec<f64> = pdf.iter().map(|&v| v.ln()).collect();
    let diversity_term = quantile_normalize(&log_pdf);
    let objective_term = quantile_normalize(elite_objectives);
    let mut raw: Vec<f64> = diversity_term
        .iter()
        .zip(&objective_term)
        // The exponent is clamped so pathological objective spreads cannot
        // overflow; NaN (from -inf minus -inf upstream) becomes zero mass.
        .map(|(d, o)| {
            let e = d - o;
            if e.is_nan() {
                0.0
            } else {
                e.clamp(-300.0, 300.0).exp()
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        raw = vec![1.0 / n as f64; n];
    } else {
        for v in &mut raw {
            *v /= sum;
        }
    }
    GoDistribution::from_probabilities(raw)
}

/// Effort for the next expedition: double on a full-range improvement of the
/// cell's elite, halve on a full-range regress, clamped to `[1, cap]`.
/// `f_prev` and `f_cur` are the cell's best objectives from its two most
/// recent visits, normalized to the global objective range.
pub fn exploration_effort(f_prev: f64, f_cur: f64, prior_effort: f64, cap: usize) -> usize {
    let scaled = (prior_effort * (-(f_cur - f_prev)).exp2()).max(1.0);
    scaled.min(cap as f64).ceil() as usize
}

/// Centers each row to zero mean and scales to unit variance (or divides by
/// the variance itself when `divide_by_variance`); zero-variance rows are
/// left centered only.
pub fn normalize_objective_rows(rows: &mut [Vec<f64>], divide_by_variance: bool) {
    for row in rows {
        let n = row.len();
        if n == 0 {
            continue;
        }
        let mean = row.iter().sum::<f64>() / n as f64;
        for v in row.iter_mut() {
            *v -= mean;
        }
        if n < 2 {
            continue;
        }
        let variance = row.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
        if variance == 0.0 {
            continue;
        }
        let scale = if divide_by_variance {
            variance
        } else {
            variance.sqrt()
        };
        for v in row.iter_mut() {
            *v /= scale;
        }
    }
}

/// Pareto domination of each column: `max_j' min_i (a_i[j] - a_i[j'])`.
/// Lower is less dominated, i.e. better.
pub fn pareto_domination(objective_rows: &[Vec<f64>]) -> Vec<f64> {
    let cols = objective_rows.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| {
            (0..cols)
                .map(|other| {
                    objective_rows
                        .iter()
                        .map(|row| row[j] - row[other])
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Draws batches of `2 mu` probes from the local generator, halving the
/// bandwidth until at least a quarter of them share the base cell. Returns
/// the final bandwidth and probe batch.
pub fn adapt_bandwidth<S, D, G>(
    dis: &D,
    landmarks: &[S],
    rank_cutoff: usize,
    base_cell: &CellId,
    theta_init: f64,
    max_effort: usize,
    mut draw: G,
) -> Result<(f64, Vec<S>), EngineError>
where
    S: Clone + PartialEq,
    D: Fn(&S, &S) -> f64,
    G: FnMut(f64) -> S,
{
    let num_probes = PROBE_FACTOR * max_effort;
    let threshold = num_probes as f64 / 4.0;
    let mut theta = theta_init;
    let mut halvings = 0usize;
    loop {
        let probes: Vec<S> = (0..num_probes).map(|_| draw(theta)).collect();
        let mut in_cell = 0usize;
        for probe in &probes {
            if state_cell(dis, landmarks, rank_cutoff, probe)? == *base_cell {
                in_cell += 1;
            }
        }
        if in_cell as f64 >= threshold {
            return Ok((theta, probes));
        }
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(EngineError::NonLocalizingGenerator);
        }
        theta /= 2.0;
    }
}

fn evaluate_batch<P: Problem>(problem: &P, states: &[P::State], workers: usize) -> Vec<f64> {
    if workers <= 1 || states.len() < 2 {
        return states.iter().map(|s| problem.objective(s)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| {
            states
                .par_iter()
                .map(|s| problem.objective(s))
                .collect::<Vec<_>>()
        }),
        Err(_) => states.iter().map(|s| problem.objective(s)).collect(),
    }
}

fn update_reigns<S>(history: &mut [HistoryEntry<S>], epoch: u32) {
    let mut winners: HashMap<CellId, usize> = HashMap::new();
    for (i, entry) in history.iter().enumerate() {
        winners
            .entry(entry.cell.clone())
            .and_modify(|best| {
                // Strict improvement keeps the earliest entry on ties.
                if entry.objective < history[*best].objective {
                    *best = i;
                }
            })
            .or_insert(i);
    }
    for &i in winners.values() {
        history[i].reign = epoch;
    }
}

/// Weighting of a state set at its own scale cutoff times `1 + sqrt(eps)`.
/// A single state gets the unit weighting directly.
fn weighting_at_cutoff<S, D>(
    states: &[&S],
    dis: &D,
    metric_is_euclidean: bool,
) -> Result<(Weighting, f64), EngineError>
where
    D: Fn(&S, &S) -> f64,
{
    if states.len() == 1 {
        return Ok((Weighting::single_point(0.0), 0.0));
    }
    let d = DissimilarityMatrix::from_fn(states.len(), |j, k| dis(states[j], states[k]))?;
    let cutoff = if metric_is_euclidean {
        positive_cutoff(&d)?
    } else {
        strong_cutoff(&d)?
    };
    let t = cutoff * (1.0 + sqrt_eps());
    let w = solve_weighting(&similarity(&d, t)?)?;
    Ok((w, t))
}

struct Engine<'a, P: Problem> {
    problem: &'a P,
    cfg: &'a EngineConfig,
    rng: ChaCha8Rng,
    landmark_states: Vec<P::State>,
    history: Vec<HistoryEntry<P::State>>,
    epoch: u32,
}

impl<'a, P: Problem> Engine<'a, P> {
    fn initialize(problem: &'a P, cfg: &'a EngineConfig) -> Result<(Self, LandmarkSet<P::State>), EngineError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let landmarks = {
            let rng = &mut rng;
            generate_landmarks(
                |a: &P::State, b: &P::State| problem.dissimilarity(a, b),
                cfg.landmark_count,
                cfg.initial_states,
                || problem.generate_global(&mut *rng),
            )?
        };
        let landmark_states = landmarks.cloned_landmarks();
        let objectives = evaluate_batch(problem, &landmarks.states, cfg.workers);
        let dis = |a: &P::State, b: &P::State| problem.dissimilarity(a, b);
        let mut history = Vec::with_capacity(cfg.eval_budget);
        for (state, objective) in landmarks.states.iter().zip(objectives) {
            let cell = state_cell(dis, &landmark_states, cfg.rank_cutoff, state)?;
            history.push(HistoryEntry {
                state: state.clone(),
                cell,
                birth: 1,
                reign: 0,
                objective,
            });
        }
        update_reigns(&mut history, 1);
        Ok((
            Engine {
                problem,
                cfg,
                rng,
                landmark_states,
                history,
                epoch: 1,
            },
            landmarks,
        ))
    }

    fn cell_of(&self, state: &P::State) -> Result<CellId, EngineError> {
        let dis = |a: &P::State, b: &P::State| self.problem.dissimilarity(a, b);
        Ok(state_cell(dis, &self.landmark_states, self.cfg.rank_cutoff, state)?)
    }

    /// Go distribution and expedition budget for the epoch.
    fn epoch_preamble(&self, elites: &[usize]) -> Result<(GoDistribution, usize), EngineError> {
        let elite_states: Vec<&P::State> = elites.iter().map(|&i| &self.history[i].state).collect();
        let dis = |a: &P::State, b: &P::State| self.problem.dissimilarity(a, b);
        let (weighting, _) = weighting_at_cutoff(&elite_states, &dis, self.cfg.metric_is_euclidean)?;
        let objectives: Vec<f64> = elites.iter().map(|&i| self.history[i].objective).collect();
        let go = go_distribution(&weighting, &objectives);
        let p = ProbabilityVector::new(go.probabilities().to_vec())?;
        let m = go.probabilities().len().div_ceil(2);
        let bounds = partial_collection_bounds(&p, m, go.probabilities().len())?;
        let expeditions = bounds.lower.ceil().max(1.0) as usize;
        Ok((go, expeditions))
    }

    /// Best-objective progression of the base cell over its two most recent
    /// visit epochs, plus the effort spent on the most recent one.
    fn cell_effort(&self, in_base: &[usize], global_min: f64, global_max: f64) -> usize {
        let mut visit_epochs: Vec<u32> = in_base.iter().map(|&i| self.history[i].birth).collect();
        visit_epochs.sort_unstable();
        visit_epochs.dedup();
        let last = *visit_epochs.last().expect("base cell is never empty");
        let previous = if visit_epochs.len() > 1 {
            visit_epochs[visit_epochs.len() - 2]
        } else {
            last
        };
        let mut denom = global_max - global_min;
        if denom == 0.0 {
            denom = 1.0;
        }
        let best_normed = |epoch: u32| {
            in_base
                .iter()
                .filter(|&&i| self.history[i].birth == epoch)
                .map(|&i| (self.history[i].objective - global_min) / denom)
                .fold(f64::INFINITY, f64::min)
        };
        let f_cur = best_normed(last);
        let f_prev = best_normed(previous);
        let prior = if self.epoch > 2 {
            in_base
                .iter()
                .filter(|&&i| self.history[i].birth == last)
                .count() as f64
        } else {
            (self.cfg.max_effort as f64).sqrt().ceil()
        };
        exploration_effort(f_prev, f_cur, prior, self.cfg.max_effort)
    }

    /// One full-algorithm expedition; returns the probes chosen for
    /// evaluation (possibly none).
    fn run_expedition(
        &mut self,
        elites: &[usize],
        go: &GoDistribution,
        global_min: f64,
        global_max: f64,
    ) -> Result<Vec<P::State>, EngineError> {
        let draw: f64 = self.rng.random();
        let base_index = elites[go.sample_index(draw)];
        let base_state = self.history[base_index].state.clone();
        let base_cell = self.history[base_index].cell.clone();

        let in_base: Vec<usize> = self
            .history
            .iter()
            .enumerate()
            .filter(|(_, e)| e.cell == base_cell)
            .map(|(i, _)| i)
            .collect();
        let effort = self.cell_effort(&in_base, global_min, global_max);

        // U: nearest history states to the base elite; V: the base cell.
        let num_nearest = self.history.len().min(self.cfg.max_effort.div_ceil(2));
        let mut by_distance: Vec<(f64, usize)> = self
            .history
            .iter()
            .enumerate()
            .map(|(i, e)| (self.problem.dissimilarity(&base_state, &e.state), i))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut near_set: BTreeSet<usize> = in_base.iter().copied().collect();
        near_set.extend(by_distance.iter().take(num_nearest).map(|&(_, i)| i));
        // Duplicate states would make the local similarity matrix singular;
        // keep the earliest entry of each.
        let mut near: Vec<usize> = Vec::with_capacity(near_set.len());
        for i in near_set {
            if !near
                .iter()
                .any(|&j| self.history[j].state == self.history[i].state)
            {
                near.push(i);
            }
        }

        let nodes: Vec<Vec<f64>> = near
            .iter()
            .map(|&i| self.problem.encode(&self.history[i].state))
            .collect();
        let node_values: Vec<f64> = near.iter().map(|&i| self.history[i].objective).collect();
        let interpolant = fit_linear_rbf(&nodes, &node_values)?;

        let mut theta_init = elites
            .iter()
            .map(|&i| self.problem.dissimilarity(&base_state, &self.history[i].state))
            .fold(0.0, f64::max);
        if theta_init <= 0.0 {
            // Single-elite degenerate case; any positive scale lets the
            // halving loop find locality.
            theta_init = 1.0;
        }

        let problem = self.problem;
        let rng = &mut self.rng;
        let dis = |a: &P::State, b: &P::State| problem.dissimilarity(a, b);
        let (_theta, raw_probes) = adapt_bandwidth(
            &dis,
            &self.landmark_states,
            self.cfg.rank_cutoff,
            &base_cell,
            theta_init,
            self.cfg.max_effort,
            |theta| problem.generate_local(&base_state, theta, &mut *rng),
        )?;

        // Dedupe probes against themselves and against U u V.
        let mut probes: Vec<P::State> = Vec::with_capacity(raw_probes.len());
        for p in raw_probes {
            if probes.contains(&p) {
                continue;
            }
            if near.iter().any(|&j| self.history[j].state == p) {
                continue;
            }
            probes.push(p);
        }
        if probes.is_empty() {
            return Ok(Vec::new());
        }

        // Weighting over Lambda = (U u V) ++ probes at its own cutoff.
        let lambda: Vec<&P::State> = near
            .iter()
            .map(|&i| &self.history[i].state)
            .chain(probes.iter())
            .collect();
        let (local_weighting, _) =
            weighting_at_cutoff(&lambda, &dis, self.cfg.metric_is_euclidean)?;

        let mut estimates = node_values.clone();
        for p in &probes {
            estimates.push(interpolant.evaluate(&self.problem.encode(p))?);
        }
        let negated_weighting: Vec<f64> =
            local_weighting.components().iter().map(|&w| -w).collect();
        let mut rows = vec![estimates, negated_weighting];
        normalize_objective_rows(&mut rows, self.cfg.variance_normalization);
        let domination = pareto_domination(&rows);

        // Only probes are eligible; the history block just shapes the trade
        // space.
        let probe_domination = &domination[near.len()..];
        let mut order: Vec<usize> = (0..probes.len()).collect();
        order.sort_by(|&a, &b| {
            probe_domination[a]
                .total_cmp(&probe_domination[b])
                .then(a.cmp(&b))
        });
        let take = effort.min(probes.len());
        let mut selected = Vec::with_capacity(take);
        for &i in order.iter().take(take) {
            selected.push(probes[i].clone());
        }
        Ok(selected)
    }

    /// Appends the epoch's batch to the history and refreshes reigns.
    fn commit_epoch(&mut self, new_states: Vec<P::State>) -> Result<(), EngineError> {
        let objectives = evaluate_batch(self.problem, &new_states, self.cfg.workers);
        for (state, objective) in new_states.into_iter().zip(objectives) {
            let cell = self.cell_of(&state)?;
            self.history.push(HistoryEntry {
                state,
                cell,
                birth: self.epoch,
                reign: 0,
                objective,
            });
        }
        update_reigns(&mut self.history, self.epoch);
        Ok(())
    }

    fn run(mut self, mut on_epoch: impl FnMut(&EpochProgress)) -> Result<Vec<HistoryEntry<P::State>>, EngineError> {
        let budget = self.cfg.eval_budget;
        let mut empty_epochs = 0usize;
        while self.history.len() < budget {
            let elites = elite_indices_at(&self.history, self.epoch);
            self.epoch += 1;

            let new_states = match self.cfg.algorithm {
                Algorithm::Full => self.full_epoch(&elites, &mut on_epoch)?,
                Algorithm::Baseline => self.baseline_epoch(&elites, &mut on_epoch)?,
            };

            if new_states.is_empty() {
                empty_epochs += 1;
                if empty_epochs >= MAX_EMPTY_EPOCHS {
                    return Err(EngineError::Stalled { epoch: self.epoch });
                }
            } else {
                empty_epochs = 0;
            }
            self.commit_epoch(new_states)?;
        }
        Ok(self.history)
    }

    fn full_epoch(
        &mut self,
        elites: &[usize],
        on_epoch: &mut impl FnMut(&EpochProgress),
    ) -> Result<Vec<P::State>, EngineError> {
        let (go, expeditions) = self.epoch_preamble(elites)?;
        on_epoch(&EpochProgress {
            epoch: self.epoch,
            evaluations: self.history.len(),
            expeditions,
        });
        let global_max = self
            .history
            .iter()
            .map(|e| e.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let global_min = self
            .history
            .iter()
            .map(|e| e.objective)
            .fold(f64::INFINITY, f64::min);

        let budget = self.cfg.eval_budget;
        let mut evaluations = self.history.len();
        let mut new_states: Vec<P::State> = Vec::new();
        for _ in 0..expeditions {
            let selected = self.run_expedition(elites, &go, global_min, global_max)?;
            evaluations += selected.len();
            new_states.extend(selected);
            if evaluations > budget {
                let excess = evaluations - budget;
                new_states.truncate(new_states.len() - excess);
                break;
            }
        }
        Ok(new_states)
    }

    fn baseline_epoch(
        &mut self,
        elites: &[usize],
        on_epoch: &mut impl FnMut(&EpochProgress),
    ) -> Result<Vec<P::State>, EngineError> {
        let elite_states: Vec<&P::State> = elites.iter().map(|&i| &self.history[i].state).collect();
        let dis = |a: &P::State, b: &P::State| self.problem.dissimilarity(a, b);
        let (weighting, _) = weighting_at_cutoff(&elite_states, &dis, self.cfg.metric_is_euclidean)?;
        let p = max_diversity_distribution(&weighting)?;
        let go = GoDistribution::from_probabilities(p);
        let count = elites.len() as f64;
        // ceil(|E| log |E|) deadlocks at a single elite; floor at one.
        let expeditions = ((count * count.ln()).ceil() as usize).max(1);
        on_epoch(&EpochProgress {
            epoch: self.epoch,
            evaluations: self.history.len(),
            expeditions,
        });
        let theta = self
            .cfg
            .baseline_bandwidth
            .expect("validated for baseline runs");

        let budget = self.cfg.eval_budget;
        let mut evaluations = self.history.len();
        let mut new_states: Vec<P::State> = Vec::new();
        for _ in 0..expeditions {
            let draw: f64 = self.rng.random();
            let base_index = elites[go.sample_index(draw)];
            let base_state = self.history[base_index].state.clone();
            for _ in 0..BASELINE_EFFORT {
                let probe = self
                    .problem
                    .generate_local(&base_state, theta, &mut self.rng);
                new_states.push(probe);
            }
            evaluations += BASELINE_EFFORT;
            if evaluations > budget {
                let excess = evaluations - budget;
                new_states.truncate(new_states.len() - excess);
                break;
            }
        }
        Ok(new_states)
    }
}

/// Runs the configured algorithm to exactly `eval_budget` objective
/// evaluations.
pub fn run<P: Problem>(problem: &P, cfg: &EngineConfig) -> Result<RunOutput<P::State>, EngineError> {
    run_with_progress(problem, cfg, |_| {})
}

/// As [`run`], emitting one progress event per epoch.
pub fn run_with_progress<P: Problem>(
    problem: &P,
    cfg: &EngineConfig,
    on_epoch: impl FnMut(&EpochProgress),
) -> Result<RunOutput<P::State>, EngineError> {
    let (engine, landmarks) = Engine::initialize(problem, cfg)?;
    let history = engine.run(on_epoch)?;
    let final_epoch = history.iter().map(|e| e.reign).max().unwrap_or(1);
    Ok(RunOutput {
        history,
        landmarks,
        final_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_normalize_examples() {
        assert_eq!(quantile_normalize(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(quantile_normalize(&[5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(quantile_normalize(&[0.0, 0.0, 10.0]), vec![0.0, 0.0, 1.0]);
    }

    fn weighting_of(components: Vec<f64>) -> Weighting {
        Weighting::from_components(components, 1.0)
    }

    #[test]
    fn go_distribution_singleton() {
        let w = Weighting::single_point(1.0);
        let go = go_distribution(&w, &[0.3]);
        assert_eq!(go.probabilities(), &[1.0]);
    }

    #[test]
    fn go_distribution_favors_better_objective() {
        let w = weighting_of(vec![1.0, 1.0]);
        let go = go_distribution(&w, &[0.0, 1.0]);
        assert!(go.probabilities()[0] > go.probabilities()[1]);
        let total: f64 = go.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn go_distribution_favors_heavier_weighting() {
        let w = weighting_of(vec![1.0, 1.0, 4.0]);
        let go = go_distribution(&w, &[0.7, 0.7, 0.7]);
        let p = go.probabilities();
        assert!(p[2] > p[0] && p[2] > p[1]);
    }

    #[test]
    fn go_distribution_monotone_in_objective() {
        let w = weighting_of(vec![1.0, 2.0, 3.0]);
        let base = go_distribution(&w, &[0.5, 0.4, 0.9]);
        let improved = go_distribution(&w, &[0.1, 0.4, 0.9]);
        assert!(improved.probabilities()[0] >= base.probabilities()[0]);
    }

    #[test]
    fn sampling_covers_the_cdf() {
        let go = GoDistribution::from_probabilities(vec![0.25, 0.5, 0.25]);
        assert_eq!(go.sample_index(0.0), 0);
        assert_eq!(go.sample_index(0.3), 1);
        assert_eq!(go.sample_index(0.9), 2);
        assert_eq!(go.sample_index(0.999999999), 2);
    }

    #[test]
    fn exploration_effort_examples() {
        assert_eq!(exploration_effort(0.4, 0.4, 32.0, 128), 32);
        assert_eq!(exploration_effort(0.4, 0.4, 200.0, 128), 128);
        assert_eq!(exploration_effort(1.0, 0.0, 32.0, 128), 64);
        assert_eq!(exploration_effort(0.0, 1.0, 1.0, 128), 1);
    }

    #[test]
    fn pareto_domination_hand_case() {
        // Points (0,0), (1,1), (0,1) as two objective rows.
        let rows = vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]];
        let dom = pareto_domination(&rows);
        assert_eq!(dom, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn pareto_identical_points_tie() {
        let rows = vec![vec![0.5, 0.5], vec![-1.0, -1.0]];
        let dom = pareto_domination(&rows);
        assert_eq!(dom[0], dom[1]);
    }

    #[test]
    fn pareto_minimal_point_is_row_minimum() {
        let rows = vec![vec![-1.0, 0.3, 2.0], vec![-2.0, 0.1, 0.2]];
        let dom = pareto_domination(&rows);
        assert!(dom[0] <= 0.0);
        assert!(dom.iter().all(|&d| d >= dom[0]));
    }

    #[test]
    fn normalize_rows_zero_mean_unit_variance() {
        let mut rows = vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 5.0, 5.0, 5.0]];
        normalize_objective_rows(&mut rows, false);
        let mean: f64 = rows[0].iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        let var: f64 = rows[0].iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
        // Constant row is centered only.
        assert!(rows[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adapt_bandwidth_immediate_when_local() {
        let landmarks = vec![vec![0.0], vec![100.0]];
        let dis = |a: &Vec<f64>, b: &Vec<f64>| (a[0] - b[0]).abs();
        let base_cell = state_cell(dis, &landmarks, 1, &vec![0.0]).unwrap();
        let mut calls = 0usize;
        let (theta, probes) = adapt_bandwidth(
            &dis,
            &landmarks,
            1,
            &base_cell,
            0.5,
            8,
            |t| {
                calls += 1;
                vec![0.1 * t * ((calls % 5) as f64)]
            },
        )
        .unwrap();
        assert_eq!(theta, 0.5);
        assert_eq!(probes.len(), 16);
    }

    #[test]
    fn adapt_bandwidth_single_cell_space() {
        let landmarks = vec![vec![0.0]];
        let dis = |a: &Vec<f64>, b: &Vec<f64>| (a[0] - b[0]).abs();
        let base_cell = state_cell(dis, &landmarks, 1, &vec![0.0]).unwrap();
        let (theta, _) = adapt_bandwidth(&dis, &landmarks, 1, &base_cell, 10.0, 4, |t| {
            vec![t * 1000.0]
        })
        .unwrap();
        assert_eq!(theta, 10.0);
    }

    #[test]
    fn adapt_bandwidth_localizes_gaussian_probes() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        use rand_distr::{Distribution, StandardNormal};

        // A unit-spaced 3x3 grid bounds the central cell to diameter ~1; a
        // wildly global initial bandwidth must shrink until a quarter of the
        // probes stay in that cell.
        let mut landmarks = vec![vec![0.0, 0.0]];
        for x in [-1.0, 0.0, 1.0] {
            for y in [-1.0, 0.0, 1.0] {
                if (x, y) != (0.0, 0.0) {
                    landmarks.push(vec![x, y]);
                }
            }
        }
        let dis = |a: &Vec<f64>, b: &Vec<f64>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let base = vec![0.0, 0.0];
        let base_cell = state_cell(dis, &landmarks, 1, &base).unwrap();
        let max_effort = 16;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (theta, probes) = adapt_bandwidth(
                &dis,
                &landmarks,
                1,
                &base_cell,
                10.0,
                max_effort,
                |t| {
                    base.iter()
                        .map(|&v| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            v + t * z
                        })
                        .collect::<Vec<f64>>()
                },
            )
            .unwrap();
            assert!(theta < 10.0, "seed {seed}: bandwidth never shrank");
            let in_cell = probes
                .iter()
                .filter(|p| state_cell(dis, &landmarks, 1, p).unwrap() == base_cell)
                .count();
            assert!(
                in_cell >= max_effort / 2,
                "seed {seed}: only {in_cell} probes in the base cell"
            );
        }
    }

    #[test]
    fn adapt_bandwidth_errors_on_non_localizing_generator() {
        let landmarks = vec![vec![0.0], vec![1.0]];
        let dis = |a: &Vec<f64>, b: &Vec<f64>| (a[0] - b[0]).abs();
        let base_cell = state_cell(dis, &landmarks, 1, &vec![0.0]).unwrap();
        // Probes always land in the other landmark's cell.
        let err = adapt_bandwidth(&dis, &landmarks, 1, &base_cell, 1.0, 4, |_| vec![1.0])
            .unwrap_err();
        assert!(matches!(err, EngineError::NonLocalizingGenerator));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EngineConfig::new(4, 8, 2, 100, 16, 0);
        assert!(cfg.validate().is_ok());
        cfg.eval_budget = 7;
        assert!(cfg.validate().is_err());
        cfg.eval_budget = 100;
        cfg.rank_cutoff = 5;
        assert!(cfg.validate().is_err());
        cfg.rank_cutoff = 2;
        cfg.algorithm = Algorithm::Baseline;
        assert!(cfg.validate().is_err());
        cfg.baseline_bandwidth = Some(0.2);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn default_initial_states_is_l_log_l() {
        assert_eq!(EngineConfig::default_initial_states(15), 41);
        assert_eq!(EngineConfig::default_initial_states(10), 24);
        assert_eq!(EngineConfig::default_initial_states(1), 1);
    }
}
