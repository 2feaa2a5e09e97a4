//! Discretization of a dissimilarity space: diverse landmark generation by
//! greedy magnitude maximization, and the rank-K nearest-landmark hash that
//! assigns every state to a cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::magnitude::{
    raw_weighting, similarity, strong_cutoff, DissimilarityMatrix, MagnitudeError,
};
use crate::sqrt_eps;

/// Retries allowed per generated state before concluding the generator
/// cannot produce distinct states.
const DUPLICATE_RETRY_BUDGET: usize = 100;

#[derive(Debug, Error)]
pub enum DiscretizeError {
    #[error("landmark count must satisfy 1 <= L <= T, got L={landmarks}, T={states}")]
    InvalidCounts { landmarks: usize, states: usize },
    #[error("global generator produced {0} duplicate states in a row")]
    DuplicateStates(usize),
    #[error("rank cutoff K={rank} out of range [1, {landmarks}]")]
    RankOutOfRange { rank: usize, landmarks: usize },
    #[error(transparent)]
    Magnitude(#[from] MagnitudeError),
}

/// Cell identifier: the ordered tuple of the K nearest landmark positions,
/// nearest first (ties broken by lower landmark index). Entries index into
/// the landmark list, not the full state list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    ranks: Vec<u32>,
}

impl CellId {
    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    pub fn from_ranks(ranks: Vec<u32>) -> Self {
        CellId { ranks }
    }

    /// Cells refine by prefix: any (K+1)-cell determines the K-cell.
    pub fn prefix(&self, len: usize) -> CellId {
        CellId {
            ranks: self.ranks[..len.min(self.ranks.len())].to_vec(),
        }
    }
}

/// Product of landmark generation: all generated states, which of them are
/// the landmarks, the frozen scale, and the magnitude after each greedy step.
#[derive(Debug, Clone)]
pub struct LandmarkSet<S> {
    pub states: Vec<S>,
    pub landmark_indices: Vec<usize>,
    /// Strong cutoff of the initial landmark matrix times `1 + sqrt(eps)`,
    /// held fixed through all replacement decisions.
    pub scale: f64,
    /// Magnitudes after seeding and after each candidate step
    /// (`states.len() - landmark_indices.len() + 1` entries, nondecreasing).
    pub magnitude_trace: Vec<f64>,
}

impl<S> LandmarkSet<S> {
    pub fn landmark_count(&self) -> usize {
        self.landmark_indices.len()
    }

    /// Landmark states in index order.
    pub fn landmark_states(&self) -> Vec<&S> {
        self.landmark_indices.iter().map(|&i| &self.states[i]).collect()
    }
}

impl<S: Clone> LandmarkSet<S> {
    pub fn cloned_landmarks(&self) -> Vec<S> {
        self.landmark_indices
            .iter()
            .map(|&i| self.states[i].clone())
            .collect()
    }
}

fn draw_distinct<S, G>(states: &[S], generate: &mut G) -> Result<S, DiscretizeError>
where
    S: PartialEq,
    G: FnMut() -> S,
{
    for _ in 0..DUPLICATE_RETRY_BUDGET {
        let candidate = generate();
        if !states.contains(&candidate) {
            return Ok(candidate);
        }
    }
    Err(DiscretizeError::DuplicateStates(DUPLICATE_RETRY_BUDGET))
}

/// Solve for the weighting of `exp(-t d)`, treating a numerically all-ones
/// matrix as the degenerate unit weighting (the two-landmark case freezes
/// `t = 0`). A singular candidate system yields `None`, which the greedy
/// loop reads as "no improvement".
fn greedy_magnitude(d: &DissimilarityMatrix, t: f64) -> Result<Option<Vec<f64>>, MagnitudeError> {
    let z = similarity(d, t)?;
    if z
        .entries()
        .iter()
        .all(|&v| (v - 1.0).abs() < f64::EPSILON.powf(0.75))
    {
        return Ok(Some(vec![1.0; d.size()]));
    }
    Ok(raw_weighting(z.entries()).map(|w| w.iter().copied().collect()))
}

/// Generates `state_count` states and greedily selects `landmark_count` of
/// them to (approximately) maximize magnitude: the first L states seed the
/// landmark set and fix the scale; each later state replaces the landmark
/// with the least weighting component iff that strictly increases magnitude.
pub fn generate_landmarks<S, D, G>(
    dis: D,
    landmark_count: usize,
    state_count: usize,
    mut generate: G,
) -> Result<LandmarkSet<S>, DiscretizeError>
where
    S: Clone + PartialEq,
    D: Fn(&S, &S) -> f64,
    G: FnMut() -> S,
{
    if landmark_count < 1 || state_count < landmark_count {
        return Err(DiscretizeError::InvalidCounts {
            landmarks: landmark_count,
            states: state_count,
        });
    }

    let mut states: Vec<S> = Vec::with_capacity(state_count);
    for _ in 0..landmark_count {
        let s = draw_distinct(&states, &mut generate)?;
        states.push(s);
    }
    let mut landmark_indices: Vec<usize> = (0..landmark_count).collect();

    // A single landmark has magnitude 1 at every scale; candidates can never
    // improve on it.
    if landmark_count == 1 {
        for _ in 1..state_count {
            let s = draw_distinct(&states, &mut generate)?;
            states.push(s);
        }
        return Ok(LandmarkSet {
            states,
            landmark_indices,
            scale: 0.0,
            magnitude_trace: vec![1.0; state_count],
        });
    }

    let d = DissimilarityMatrix::from_fn(landmark_count, |j, k| dis(&states[j], &states[k]))?;
    let scale = strong_cutoff(&d)? * (1.0 + sqrt_eps());
    let mut weights = greedy_magnitude(&d, scale)?.ok_or(MagnitudeError::SingularSystem)?;
    let mut mag: f64 = weights.iter().sum();
    let mut trace = Vec::with_capacity(state_count - landmark_count + 1);
    trace.push(mag);

    for _ in landmark_count..state_count {
        let candidate = draw_distinct(&states, &mut generate)?;
        states.push(candidate);
        let candidate_index = states.len() - 1;

        // Replace the landmark with the least weighting component (ties to
        // the lower position).
        let weakest = weights
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("landmark set is nonempty");

        let mut trial = landmark_indices.clone();
        trial[weakest] = candidate_index;
        let trial_d = DissimilarityMatrix::from_fn(landmark_count, |j, k| {
            dis(&states[trial[j]], &states[trial[k]])
        })?;
        if let Some(trial_w) = greedy_magnitude(&trial_d, scale)? {
            let trial_mag: f64 = trial_w.iter().sum();
            if trial_mag > mag {
                landmark_indices = trial;
                weights = trial_w;
                mag = trial_mag;
            }
        }
        trace.push(mag);
    }

    Ok(LandmarkSet {
        states,
        landmark_indices,
        scale,
        magnitude_trace: trace,
    })
}

/// Maps a state to its cell: the positions of its `rank_cutoff` nearest
/// landmarks sorted by increasing dissimilarity, ties broken by lower
/// landmark index.
pub fn state_cell<S, D>(
    dis: D,
    landmarks: &[S],
    rank_cutoff: usize,
    x: &S,
) -> Result<CellId, DiscretizeError>
where
    D: Fn(&S, &S) -> f64,
{
    let count = landmarks.len();
    if rank_cutoff < 1 || rank_cutoff > count {
        return Err(DiscretizeError::RankOutOfRange {
            rank: rank_cutoff,
            landmarks: count,
        });
    }
    let mut order: Vec<(f64, u32)> = landmarks
        .iter()
        .enumerate()
        .map(|(j, l)| (dis(x, l), j as u32))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(CellId {
        ranks: order.into_iter().take(rank_cutoff).map(|(_, j)| j).collect(),
    })
}
