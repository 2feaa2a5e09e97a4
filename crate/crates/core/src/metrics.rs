//! Post-hoc scoring of run histories: quality-diversity and weighted
//! quality-diversity per epoch, magnitude traces, and per-elite detail.
//!
//! The epoch-`j` elites are the entries elite at `j` even if later dethroned
//! (`reign >= j` and `birth <= j`). All epochs share the scale fixed from the
//! final epoch's positive cutoff, so magnitudes are comparable across the
//! trace.

use std::collections::HashMap;

use thiserror::Error;

use crate::discretize::CellId;
use crate::engine::HistoryEntry;
use crate::magnitude::{
    positive_cutoff, similarity, solve_weighting, DissimilarityMatrix, MagnitudeError,
};
use crate::sqrt_eps;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("no elites found for epoch {0}")]
    EmptyEliteSet(u32),
    #[error(transparent)]
    Magnitude(#[from] MagnitudeError),
}

/// Elite-level detail for one epoch.
#[derive(Debug, Clone)]
pub struct EpochEliteDetail {
    pub objectives: Vec<f64>,
    pub weights: Vec<f64>,
    /// History entries sharing each elite's cell (over the whole run).
    pub cell_counts: Vec<usize>,
}

/// Per-epoch score vectors; index `j - 1` holds epoch `j`.
#[derive(Debug, Clone)]
pub struct EpochScores {
    pub qd: Vec<f64>,
    pub wqd: Vec<f64>,
    pub num_evals: Vec<usize>,
    pub magnitude: Vec<f64>,
    pub details: Vec<EpochEliteDetail>,
    /// Scale used for every epoch's weighting (from the final epoch).
    pub scale: f64,
    /// Normalization bounds actually applied.
    pub min_objective: f64,
    pub max_objective: f64,
}

impl EpochScores {
    pub fn epochs(&self) -> usize {
        self.qd.len()
    }
}

/// Scores a history. `normalization` supplies shared `(min_f, max_f)` bounds
/// for cross-run comparisons; by default the run's own range is used.
pub fn score_history<S, D>(
    history: &[HistoryEntry<S>],
    dis: D,
    normalization: Option<(f64, f64)>,
) -> Result<EpochScores, MetricsError>
where
    D: Fn(&S, &S) -> f64,
{
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let num_epochs = history.iter().map(|e| e.birth).max().unwrap_or(1);
    let (min_objective, max_objective) = normalization.unwrap_or_else(|| {
        let min = history.iter().map(|e| e.objective).fold(f64::INFINITY, f64::min);
        let max = history
            .iter()
            .map(|e| e.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    });
    let mut range = max_objective - min_objective;
    if range == 0.0 {
        range = 1.0;
    }

    let mut cell_population: HashMap<&CellId, usize> = HashMap::new();
    for entry in history {
        *cell_population.entry(&entry.cell).or_insert(0) += 1;
    }

    let n = num_epochs as usize;
    let mut qd = vec![0.0; n];
    let mut wqd = vec![0.0; n];
    let mut num_evals = vec![0usize; n];
    let mut magnitude = vec![0.0; n];
    let mut details: Vec<Option<EpochEliteDetail>> = vec![None; n];
    let mut scale = 0.0;

    // Scanned from the final epoch backward so the scale is fixed first.
    for j in (1..=num_epochs).rev() {
        let elites: Vec<&HistoryEntry<S>> = history
            .iter()
            .filter(|e| e.reign >= j && e.birth <= j)
            .collect();
        if elites.is_empty() {
            return Err(MetricsError::EmptyEliteSet(j));
        }

        let weights = if elites.len() == 1 {
            vec![1.0]
        } else {
            let d = DissimilarityMatrix::from_fn(elites.len(), |a, b| {
                dis(&elites[a].state, &elites[b].state)
            })?;
            if j == num_epochs {
                scale = positive_cutoff(&d)? * (1.0 + sqrt_eps());
            }
            let w = solve_weighting(&similarity(&d, scale)?)?;
            w.components().to_vec()
        };

        let idx = (j - 1) as usize;
        let total_weight: f64 = weights.iter().sum();
        let count = weights.len() as f64;
        let objectives: Vec<f64> = elites.iter().map(|e| e.objective).collect();
        qd[idx] = objectives.iter().map(|f| max_objective - f).sum::<f64>() / range;
        wqd[idx] = objectives
            .iter()
            .zip(&weights)
            .map(|(f, w)| (max_objective - f) * w * count / total_weight)
            .sum::<f64>()
            / range;
        num_evals[idx] = history.iter().filter(|e| e.birth <= j).count();
        magnitude[idx] = total_weight;
        details[idx] = Some(EpochEliteDetail {
            objectives,
            weights,
            cell_counts: elites
                .iter()
                .map(|e| cell_population[&e.cell])
                .collect(),
        });
    }

    Ok(EpochScores {
        qd,
        wqd,
        num_evals,
        magnitude,
        details: details.into_iter().map(|d| d.expect("all epochs scored")).collect(),
        scale,
        min_objective,
        max_objective,
    })
}
