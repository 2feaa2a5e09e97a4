//! Cheap local objective estimation by radial-basis-function interpolation
//! with the linear kernel `phi(r) = r`, which needs no shape parameter.
//!
//! Distances are plain Euclidean on the state's numeric encoding regardless
//! of the search dissimilarity; binary states interpolate on their 0/1
//! vectors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least one node")]
    NoNodes,
    #[error("got {nodes} nodes but {values} values")]
    CountMismatch { nodes: usize, values: usize },
    #[error("node {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite input at node {0}")]
    NonFinite(usize),
    #[error("query has dimension {got}, expected {expected}")]
    QueryDimension { got: usize, expected: usize },
    #[error("interpolation system unsolvable")]
    Unsolvable,
}

/// Fitted interpolant `q -> offset + sum_i c_i ||q - x_i||`.
#[derive(Debug, Clone)]
pub struct RbfInterpolant {
    nodes: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    offset: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fits a linear RBF through `(x_i, y_i)`. Exact duplicate nodes are dropped,
/// keeping the first occurrence's value; a single surviving node yields the
/// constant interpolant. Rank-deficient systems fall back to a least-squares
/// solve.
pub fn fit_linear_rbf(x: &[Vec<f64>], y: &[f64]) -> Result<RbfInterpolant, SurrogateError> {
    if x.is_empty() {
        return Err(SurrogateError::NoNodes);
    }
    if x.len() != y.len() {
        return Err(SurrogateError::CountMismatch {
            nodes: x.len(),
            values: y.len(),
        });
    }
    let dim = x[0].len();
    for (index, node) in x.iter().enumerate() {
        if node.len() != dim {
            return Err(SurrogateError::DimensionMismatch {
                index,
                got: node.len(),
                expected: dim,
            });
        }
        if node.iter().any(|v| !v.is_finite()) || !y[index].is_finite() {
            return Err(SurrogateError::NonFinite(index));
        }
    }

    let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut values: Vec<f64> = Vec::with_capacity(y.len());
    for (node, &value) in x.iter().zip(y) {
        if !nodes.iter().any(|n| n == node) {
            nodes.push(node.clone());
            values.push(value);
        }
    }

    if nodes.len() == 1 {
        return Ok(RbfInterpolant {
            nodes,
            coefficients: vec![0.0],
            offset: values[0],
        });
    }

    let n = nodes.len();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in (j + 1)..n {
            let r = euclidean(&nodes[j], &nodes[k]);
            a[(j, k)] = r;
            a[(k, j)] = r;
        }
    }
    let rhs = DVector::from_column_slice(&values);
    let coefficients = match a.clone().lu().solve(&rhs) {
        Some(c) => c,
        None => a
            .svd(true, true)
            .solve(&rhs, f64::EPSILON)
            .map_err(|_| SurrogateError::Unsolvable)?,
    };
    Ok(RbfInterpolant {
        nodes,
        coefficients: coefficients.iter().copied().collect(),
        offset: 0.0,
    })
}

impl RbfInterpolant {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dimension(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn evaluate(&self, q: &[f64]) -> Result<f64, SurrogateError> {
        if q.len() != self.dimension() {
            return Err(SurrogateError::QueryDimension {
                got: q.len(),
                expected: self.dimension(),
            });
        }
        Ok(self.offset
            + self
                .nodes
                .iter()
                .zip(&self.coefficients)
                .map(|(node, c)| c * euclidean(q, node))
                .sum::<f64>())
    }
}
