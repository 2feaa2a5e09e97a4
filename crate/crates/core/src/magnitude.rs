//! Magnitude, weightings, diversity, and scale cutoffs of finite
//! dissimilarity spaces.
//!
//! A dissimilarity matrix `d` induces a one-parameter family of similarity
//! matrices `Z = exp(-t d)`. A weighting `w` solves `Z w = 1`; its sum is the
//! magnitude, a scale-dependent effective number of points, and for symmetric
//! positive-definite `Z` with nonnegative `w` the normalized weighting is the
//! distribution maximizing diversity of every order.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sqrt_eps;

/// Bisection safety cap; the relative-width exit fires long before this
/// unless the accept test never fails, which the NaN exit also catches.
const MAX_BISECTION_STEPS: usize = 20_000;

#[derive(Debug, Error)]
pub enum MagnitudeError {
    #[error("dissimilarity matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dissimilarity entry ({row},{col}) is NaN")]
    NanEntry { row: usize, col: usize },
    #[error("dissimilarity entry ({row},{col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("dissimilarity diagonal entry {index} = {value} is not zero")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("off-diagonal dissimilarity ({row},{col}) is zero (degenerate pair)")]
    DegeneratePair { row: usize, col: usize },
    #[error("dissimilarity matrix asymmetric at ({row},{col}): {a} vs {b}")]
    Asymmetric { row: usize, col: usize, a: f64, b: f64 },
    #[error("scale parameter t = {0} must be nonnegative and finite")]
    InvalidScale(f64),
    #[error("similarity system is singular; no weighting exists")]
    SingularSystem,
    #[error("weighting sums to zero; no max-diversity distribution")]
    ZeroSumWeighting,
    #[error("weighting has negative component {0}; repair before normalizing")]
    NegativeWeighting(f64),
    #[error("probability vector invalid: {0}")]
    InvalidProbability(String),
    #[error("diversity order q = {0} must be >= 1 (or infinity)")]
    InvalidOrder(f64),
    #[error("cutoffs require at least 2 points, got {0}")]
    InsufficientPoints(usize),
    #[error("cutoff bisection failed to converge")]
    BisectionStalled,
}

/// Square symmetric matrix of pairwise dissimilarities in `[0, +inf]`,
/// zero exactly on the diagonal.
#[derive(Debug, Clone)]
pub struct DissimilarityMatrix {
    entries: DMatrix<f64>,
}

impl DissimilarityMatrix {
    /// Validates and wraps a raw matrix: square, zero diagonal, strictly
    /// positive off-diagonal, NaN-free, symmetric within relative `sqrt(eps)`.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self, MagnitudeError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(MagnitudeError::NotSquare { rows, cols });
        }
        let tol = sqrt_eps();
        for j in 0..rows {
            for k in 0..cols {
                let v = entries[(j, k)];
                if v.is_nan() {
                    return Err(MagnitudeError::NanEntry { row: j, col: k });
                }
                if v < 0.0 {
                    return Err(MagnitudeError::NegativeEntry { row: j, col: k, value: v });
                }
            }
            let diag = entries[(j, j)];
            if diag != 0.0 {
                return Err(MagnitudeError::NonzeroDiagonal { index: j, value: diag });
            }
        }
        for j in 0..rows {
            for k in (j + 1)..cols {
                let a = entries[(j, k)];
                let b = entries[(k, j)];
                if a == 0.0 || b == 0.0 {
                    return Err(MagnitudeError::DegeneratePair { row: j, col: k });
                }
                // inf/inf compares equal above; mixed inf/finite gives a
                // NaN ratio and fails here.
                let relative = (b / a - 1.0).abs();
                if a != b && (relative.is_nan() || relative > tol) {
                    return Err(MagnitudeError::Asymmetric { row: j, col: k, a, b });
                }
            }
        }
        Ok(Self { entries })
    }

    /// Builds the matrix from a pairwise function evaluated on the upper
    /// triangle and mirrored, so the result is exactly symmetric.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(
        n: usize,
        mut dis: F,
    ) -> Result<Self, MagnitudeError> {
        let mut entries = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in (j + 1)..n {
                let v = dis(j, k);
                entries[(j, k)] = v;
                entries[(k, j)] = v;
            }
        }
        Self::from_entries(entries)
    }

    /// Euclidean distance matrix of a point set.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, MagnitudeError> {
        Self::from_fn(points.len(), |j, k| {
            points[j]
                .iter()
                .zip(&points[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Smallest off-diagonal entry.
    fn min_off_diagonal(&self) -> f64 {
        let n = self.size();
        let mut m = f64::INFINITY;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    m = m.min(self.entries[(j, k)]);
                }
            }
        }
        m
    }
}

/// Entrywise `exp(-t d)` at a fixed scale `t`; entries in `[0, 1]` with unit
/// diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    entries: DMatrix<f64>,
    scale: f64,
}

impl SimilarityMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// `Z = exp(-t d)` entrywise. Infinite dissimilarities map to exactly 0;
/// `t = 0` is accepted and yields the all-ones similarity pattern that the
/// degenerate branch of [`solve_weighting`] handles (this is how two-point
/// spaces, whose cutoff is 0, flow through the engine).
pub fn similarity(d: &DissimilarityMatrix, t: f64) -> Result<SimilarityMatrix, MagnitudeError> {
    if t.is_nan() || t < 0.0 || t.is_infinite() {
        return Err(MagnitudeError::InvalidScale(t));
    }
    let n = d.size();
    let mut entries = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let v = d.entry(j, k);
            entries[(j, k)] = if v.is_infinite() { 0.0 } else { (-t * v).exp() };
        }
    }
    Ok(SimilarityMatrix { entries, scale: t })
}

/// A solution of `Z w = 1` together with provenance flags.
#[derive(Debug, Clone)]
pub struct Weighting {
    components: Vec<f64>,
    scale: f64,
    /// Negative components were shifted up by `-min(w)` after the solve.
    repaired: bool,
    /// `Z` was indistinguishable from all-ones; the all-ones vector was
    /// returned instead of solving.
    degenerate: bool,
    /// `max_j |(Z w - 1)_j|` of the raw solution (0 for the degenerate case).
    residual: f64,
    /// Component sum of the raw solution, before any repair shift.
    raw_magnitude: f64,
}

impl Weighting {
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn repaired(&self) -> bool {
        self.repaired
    }

    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Sum of components.
    pub fn magnitude(&self) -> f64 {
        self.components.iter().sum()
    }

    /// Component sum of the raw solve, before the nonnegativity repair.
    pub fn raw_magnitude(&self) -> f64 {
        self.raw_magnitude
    }

    /// Builds a single-point weighting; the magnitude of a one-point space is
    /// 1 at every scale.
    pub fn single_point(scale: f64) -> Self {
        Weighting {
            components: vec![1.0],
            scale,
            repaired: false,
            degenerate: false,
            residual: 0.0,
            raw_magnitude: 1.0,
        }
    }

    /// Wraps precomputed components. No residual guarantee is attached; use
    /// [`solve_weighting`] when the similarity matrix is at hand.
    pub fn from_components(components: Vec<f64>, scale: f64) -> Self {
        let raw_magnitude = components.iter().sum();
        Weighting {
            components,
            scale,
            repaired: false,
            degenerate: false,
            residual: f64::NAN,
            raw_magnitude,
        }
    }
}

/// Plain dense solve of `Z w = 1`, Cholesky first (Z is symmetric and
/// positive definite above the cutoff), LU as fallback. `None` if singular.
pub(crate) fn raw_weighting(z: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = z.nrows();
    let entries = z.as_slice();
    let solution = crate::lapack::cholesky_solve_ones(entries.to_vec(), n)
        .or_else(|| crate::lapack::lu_solve_ones(entries.to_vec(), n))?;
    Some(DVector::from_vec(solution))
}

/// Solves `Z w = 1`. When `Z` is indistinguishable from the all-ones matrix
/// (entrywise within `eps^0.75`) the all-ones vector is returned and flagged
/// degenerate; negative solutions are shifted by `-min(w)` and flagged
/// repaired.
pub fn solve_weighting(z: &SimilarityMatrix) -> Result<Weighting, MagnitudeError> {
    let n = z.size();
    let near_ones = z
        .entries()
        .iter()
        .all(|&v| (v - 1.0).abs() < f64::EPSILON.powf(0.75));
    if near_ones {
        return Ok(Weighting {
            components: vec![1.0; n],
            scale: z.scale(),
            repaired: false,
            degenerate: true,
            residual: 0.0,
            raw_magnitude: n as f64,
        });
    }
    let w = raw_weighting(z.entries()).ok_or(MagnitudeError::SingularSystem)?;
    let residual = (z.entries() * &w)
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    let mut components: Vec<f64> = w.iter().copied().collect();
    let raw_magnitude: f64 = components.iter().sum();
    let min = components.iter().copied().fold(f64::INFINITY, f64::min);
    let repaired = min < 0.0;
    if repaired {
        for c in &mut components {
            *c -= min;
        }
    }
    Ok(Weighting {
        components,
        scale: z.scale(),
        repaired,
        degenerate: false,
        residual,
        raw_magnitude,
    })
}

/// Sum of weighting components.
pub fn magnitude(w: &Weighting) -> f64 {
    w.magnitude()
}

/// Normalizes a nonnegative weighting into the diversity-maximizing
/// distribution `w / sum(w)`.
pub fn max_diversity_distribution(w: &Weighting) -> Result<Vec<f64>, MagnitudeError> {
    if let Some(&neg) = w.components().iter().find(|&&c| c < 0.0) {
        return Err(MagnitudeError::NegativeWeighting(neg));
    }
    let total = w.magnitude();
    if total <= 0.0 {
        return Err(MagnitudeError::ZeroSumWeighting);
    }
    Ok(w.components().iter().map(|c| c / total).collect())
}

/// Diversity of order `q` of a distribution `p` under similarity `Z`:
/// `exp((1/(1-q)) log sum_{j: p_j>0} p_j (Zp)_j^{q-1})`, with the usual
/// limits at `q = 1` (exponential Shannon-like sum) and `q = inf`
/// (`1 / max_j (Zp)_j` over the support).
pub fn diversity(z: &SimilarityMatrix, p: &[f64], q: f64) -> Result<f64, MagnitudeError> {
    if q.is_nan() || q < 1.0 {
        return Err(MagnitudeError::InvalidOrder(q));
    }
    let n = z.size();
    if p.len() != n {
        return Err(MagnitudeError::InvalidProbability(format!(
            "length {} does not match matrix size {}",
            p.len(),
            n
        )));
    }
    if p.iter().any(|&v| v.is_nan() || v < 0.0) {
        return Err(MagnitudeError::InvalidProbability(
            "negative or NaN component".into(),
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(MagnitudeError::InvalidProbability(format!(
            "sums to {sum}, not 1 within 1e-12"
        )));
    }
    let pv = DVector::from_column_slice(p);
    let zp = z.entries() * &pv;
    let support = (0..n).filter(|&j| p[j] > 0.0);
    if q.is_infinite() {
        let max = support.map(|j| zp[j]).fold(f64::NEG_INFINITY, f64::max);
        return Ok(1.0 / max);
    }
    if q == 1.0 {
        let s: f64 = support.map(|j| p[j] * zp[j].ln()).sum();
        return Ok((-s).exp());
    }
    let s: f64 = support.map(|j| p[j] * zp[j].powf(q - 1.0)).sum();
    Ok((s.ln() / (1.0 - q)).exp())
}

/// Bounds on the minimal scale making `exp(-t d)` diagonally dominant:
/// `log(n-1)/min_j max_k d_jk <= t_d <= log(n-1)/min_{j != k} d_jk`.
pub fn diag_dominance_bounds(d: &DissimilarityMatrix) -> Result<(f64, f64), MagnitudeError> {
    let n = d.size();
    if n < 2 {
        return Err(MagnitudeError::InsufficientPoints(n));
    }
    let log_nm1 = ((n - 1) as f64).ln();
    let min_of_row_max = (0..n)
        .map(|j| (0..n).map(|k| d.entry(j, k)).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    let lower = log_nm1 / min_of_row_max;
    let upper = log_nm1 / d.min_off_diagonal();
    Ok((lower, upper))
}

/// Scale thresholds of a dissimilarity matrix.
#[derive(Debug, Clone, Copy)]
pub struct ScaleCutoffs {
    /// Lower bound on the diagonal-dominance threshold.
    pub diag_lower: f64,
    /// Upper bound on the diagonal-dominance threshold.
    pub diag_upper: f64,
    /// Minimal scale at which `exp(-t d)` is PSD with a positive weighting.
    pub strong: f64,
    /// Minimal scale giving a positive weighting, without the PSD check.
    pub positive: f64,
}

impl ScaleCutoffs {
    pub fn compute(d: &DissimilarityMatrix) -> Result<Self, MagnitudeError> {
        let (diag_lower, diag_upper) = diag_dominance_bounds(d)?;
        Ok(ScaleCutoffs {
            diag_lower,
            diag_upper,
            strong: strong_cutoff(d)?,
            positive: positive_cutoff(d)?,
        })
    }
}

/// Scratch for the cutoff bisections: the dissimilarities flattened
/// column-major plus a similarity buffer refilled and factored in place at
/// each step.
struct CutoffScratch {
    n: usize,
    d_flat: Vec<f64>,
    z: Vec<f64>,
}

impl CutoffScratch {
    fn new(d: &DissimilarityMatrix) -> Self {
        let n = d.size();
        let mut d_flat = vec![0.0; n * n];
        for col in 0..n {
            for row in 0..n {
                d_flat[col * n + row] = d.entry(row, col);
            }
        }
        CutoffScratch {
            n,
            d_flat,
            z: vec![0.0; n * n],
        }
    }

    /// Fills the lower triangle of `exp(-t d)`, all that the symmetric
    /// LAPACK routines read.
    fn fill_lower(&mut self, t: f64) {
        for col in 0..self.n {
            for row in col..self.n {
                let v = self.d_flat[col * self.n + row];
                self.z[col * self.n + row] = if v.is_infinite() { 0.0 } else { (-t * v).exp() };
            }
        }
    }

    fn fill_full(&mut self, t: f64) {
        for (zv, dv) in self.z.iter_mut().zip(&self.d_flat) {
            *zv = if dv.is_infinite() { 0.0 } else { (-t * dv).exp() };
        }
    }

    /// Raw weighting at scale `t`: Cholesky first, LU on failure.
    fn weighting(&mut self, t: f64) -> Option<Vec<f64>> {
        self.fill_lower(t);
        if let Some(w) = crate::lapack::cholesky_solve_ones_in_place(&mut self.z, self.n) {
            return Some(w);
        }
        self.fill_full(t);
        crate::lapack::lu_solve_ones_in_place(&mut self.z, self.n)
    }

    fn positive_weighting(&mut self, t: f64) -> bool {
        match self.weighting(t) {
            Some(w) => w.iter().all(|&v| v > 0.0),
            None => false,
        }
    }

    fn psd(&mut self, t: f64, tolerance: f64) -> bool {
        self.fill_lower(t);
        crate::lapack::symmetric_eigenvalues_in_place(&mut self.z, self.n)
            .is_some_and(|eigs| eigs.iter().all(|&v| v >= tolerance))
    }
}

fn bisect_cutoff<F: FnMut(&mut CutoffScratch, f64) -> bool>(
    d: &DissimilarityMatrix,
    mut accepts: F,
) -> Result<f64, MagnitudeError> {
    let n = d.size();
    if n < 2 {
        return Err(MagnitudeError::InsufficientPoints(n));
    }
    // Initial bracket: the diagonal-dominance upper bound. A zero bracket
    // (n = 2, or all-infinite d) means every positive scale works.
    let upper0 = ((n - 1) as f64).ln() / d.min_off_diagonal();
    if upper0 == 0.0 {
        return Ok(0.0);
    }
    let mut scratch = CutoffScratch::new(d);
    let mut lower = 0.0_f64;
    let mut upper = upper0;
    let mut t = upper0;
    let tol = sqrt_eps();
    for _ in 0..MAX_BISECTION_STEPS {
        // NaN (e.g. 0/0 once both ends underflow) exits, matching the
        // termination criterion 1 - lower/upper <= sqrt(eps).
        let width = 1.0 - lower / upper;
        if width.is_nan() || width <= tol {
            return Ok(t);
        }
        t = 0.5 * (lower + upper);
        if accepts(&mut scratch, t) {
            upper = t;
        } else {
            lower = t;
        }
    }
    Err(MagnitudeError::BisectionStalled)
}

/// Minimal scale `t` such that `exp(-t d)` has a strictly positive weighting,
/// located by bisection on `(0, log(n-1)/min d]` to relative width
/// `sqrt(eps)`. Returns the final midpoint; callers scale by `1 + sqrt(eps)`.
pub fn positive_cutoff(d: &DissimilarityMatrix) -> Result<f64, MagnitudeError> {
    bisect_cutoff(d, |scratch, t| scratch.positive_weighting(t))
}

/// Strong cutoff: as [`positive_cutoff`] but also requiring `exp(-t d)` to be
/// positive semidefinite (minimum eigenvalue at least `-1e-10 n`).
pub fn strong_cutoff(d: &DissimilarityMatrix) -> Result<f64, MagnitudeError> {
    let eig_tol = -1e-10 * d.size() as f64;
    bisect_cutoff(d, |scratch, t| {
        scratch.psd(t, eig_tol) && scratch.positive_weighting(t)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn isoceles() -> DissimilarityMatrix {
        DissimilarityMatrix::from_entries(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 1e-3, 1.0, 1e-3, 0.0],
        ))
        .unwrap()
    }

    fn magnitude_at(d: &DissimilarityMatrix, t: f64) -> f64 {
        solve_weighting(&similarity(d, t).unwrap()).unwrap().magnitude()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn construction_rejects_violations() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(
            DissimilarityMatrix::from_entries(asym),
            Err(MagnitudeError::Asymmetric { .. })
        ));
        let diag = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.0]);
        assert!(matches!(
            DissimilarityMatrix::from_entries(diag),
            Err(MagnitudeError::NonzeroDiagonal { .. })
        ));
        let degen = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            DissimilarityMatrix::from_entries(degen),
            Err(MagnitudeError::DegeneratePair { .. })
        ));
        let nan = DMatrix::from_row_slice(2, 2, &[0.0, f64::NAN, f64::NAN, 0.0]);
        assert!(matches!(
            DissimilarityMatrix::from_entries(nan),
            Err(MagnitudeError::NanEntry { .. })
        ));
        // Infinite off-diagonals are legal extended reals.
        let inf = DMatrix::from_row_slice(2, 2, &[0.0, f64::INFINITY, f64::INFINITY, 0.0]);
        assert!(DissimilarityMatrix::from_entries(inf).is_ok());
    }

    #[test]
    fn similarity_single_point_is_one() {
        let d = DissimilarityMatrix::from_entries(DMatrix::zeros(1, 1)).unwrap();
        let z = similarity(&d, 3.7).unwrap();
        assert_eq!(z.entry(0, 0), 1.0);
    }

    #[test]
    fn similarity_infinite_dissimilarity_gives_identity() {
        let d = DissimilarityMatrix::from_fn(3, |_, _| f64::INFINITY).unwrap();
        let z = similarity(&d, 2.0).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(z.entry(j, k), if j == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn similarity_isoceles_entries() {
        let z = similarity(&isoceles(), 10.0).unwrap();
        assert_eq!(z.entry(0, 1), (-10.0_f64).exp());
        assert_eq!(z.entry(0, 2), (-10.0_f64).exp());
        assert_eq!(z.entry(1, 2), (-0.01_f64).exp());
        assert_eq!(z.entry(1, 1), 1.0);
    }

    #[test]
    fn weighting_of_identity_is_ones() {
        let d = DissimilarityMatrix::from_fn(4, |_, _| f64::INFINITY).unwrap();
        let w = solve_weighting(&similarity(&d, 1.0).unwrap()).unwrap();
        assert_eq!(w.components(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(magnitude(&w), 4.0);
    }

    #[test]
    fn isoceles_effective_point_counts() {
        let d = isoceles();
        let w = solve_weighting(&similarity(&d, 1e-2).unwrap()).unwrap();
        assert!((w.magnitude() - 1.0).abs() < 0.1);
        assert!((w.components()[0] - 0.5).abs() < 0.05);
        assert!((w.components()[1] - 0.25).abs() < 0.05);
        assert!((w.components()[2] - 0.25).abs() < 0.05);
        assert!((magnitude_at(&d, 10.0) - 2.0).abs() < 0.1);
        assert!((magnitude_at(&d, 1e4) - 3.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_near_ones_returns_unit_vector() {
        let d = isoceles();
        let w = solve_weighting(&similarity(&d, 0.0).unwrap()).unwrap();
        assert!(w.degenerate());
        assert_eq!(w.components(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn magnitude_not_submodular_at_unit_scale() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let with = |extra: &[Vec<f64>]| {
            let mut pts = x.clone();
            pts.extend_from_slice(extra);
            magnitude_at(&DissimilarityMatrix::from_points(&pts).unwrap(), 1.0)
        };
        let x1 = vec![-1.0, 0.0];
        let x2 = vec![2.0, 0.0];
        let lhs = with(std::slice::from_ref(&x1)) + with(std::slice::from_ref(&x2));
        let rhs = with(&[x1, x2]) + with(&[]);
        assert!((lhs - 4.1773).abs() < 1e-3, "lhs = {lhs}");
        assert!((rhs - 4.1815).abs() < 1e-3, "rhs = {rhs}");
        assert!(lhs < rhs);
    }

    #[test]
    fn max_diversity_distribution_examples() {
        let w = Weighting {
            components: vec![1.0, 1.0],
            scale: 1.0,
            repaired: false,
            degenerate: false,
            residual: 0.0,
            raw_magnitude: 2.0,
        };
        assert_eq!(max_diversity_distribution(&w).unwrap(), vec![0.5, 0.5]);
        let w = Weighting {
            components: vec![0.0, 1.0, 3.0],
            ..w
        };
        assert_eq!(max_diversity_distribution(&w).unwrap(), vec![0.0, 0.25, 0.75]);
        let w = Weighting {
            components: vec![0.0, 0.0],
            ..w
        };
        assert!(matches!(
            max_diversity_distribution(&w),
            Err(MagnitudeError::ZeroSumWeighting)
        ));
        let d = isoceles();
        let w = solve_weighting(&similarity(&d, 1e-2).unwrap()).unwrap();
        let p = max_diversity_distribution(&w).unwrap();
        assert!((p[0] - 0.5).abs() < 0.01);
        assert!((p[1] - 0.25).abs() < 0.01);
    }

    #[test]
    fn diversity_identity_matrix_reduces_to_renyi() {
        let d = DissimilarityMatrix::from_fn(5, |_, _| f64::INFINITY).unwrap();
        let z = similarity(&d, 1.0).unwrap();
        let uniform = vec![0.2; 5];
        assert!((diversity(&z, &uniform, 2.0).unwrap() - 5.0).abs() < 1e-12);
        let point = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        for q in [1.0, 2.0, 7.5, f64::INFINITY] {
            assert!((diversity(&z, &point, q).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diversity_rejects_bad_inputs() {
        let d = isoceles();
        let z = similarity(&d, 1.0).unwrap();
        assert!(diversity(&z, &[0.5, 0.5, 0.5], 2.0).is_err());
        assert!(diversity(&z, &[1.0, 0.0, 0.0], 0.5).is_err());
        assert!(diversity(&z, &[1.0, 0.0, 0.0], f64::NAN).is_err());
    }

    // Triangle plus its centroid: the interior point's weight is negative at
    // coarse scales, so the cutoffs are genuinely positive (unlike spaces
    // whose weighting is positive at every scale, where bisection collapses
    // to the numerical floor).
    fn triangle_with_centroid() -> DissimilarityMatrix {
        DissimilarityMatrix::from_points(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.5, 0.866_025_4],
            vec![0.5, 0.288_675_1],
        ])
        .unwrap()
    }

    fn check_weighting_diversity_identity(d: &DissimilarityMatrix, t: f64) {
        let z = similarity(d, t).unwrap();
        let w = solve_weighting(&z).unwrap();
        assert!(!w.degenerate() && !w.repaired());
        let mag = w.magnitude();
        let p = max_diversity_distribution(&w).unwrap();
        for q in [1.0, 2.0, f64::INFINITY] {
            let dq = diversity(&z, &p, q).unwrap();
            assert!((dq - mag).abs() < 1e-8, "q={q}: {dq} vs {mag}");
        }
    }

    #[test]
    fn diversity_at_weighting_equals_magnitude_across_orders() {
        // The isoceles weighting is positive at every scale (its cutoff is
        // the numerical zero floor), so the identity is checked at a plainly
        // positive scale there and at the strong cutoff of a space whose
        // cutoff is genuinely positive.
        check_weighting_diversity_identity(&isoceles(), 1e-2);
        let d = triangle_with_centroid();
        let t = strong_cutoff(&d).unwrap();
        assert!(t > 0.5 && t < 1.0, "expected an interior cutoff, got {t}");
        check_weighting_diversity_identity(&d, t * (1.0 + sqrt_eps()));
    }

    #[test]
    fn diag_bounds_examples() {
        let equi = DissimilarityMatrix::from_fn(3, |_, _| 1.0).unwrap();
        let (lo, hi) = diag_dominance_bounds(&equi).unwrap();
        assert!((lo - 2.0_f64.ln()).abs() < 1e-15);
        assert!((hi - 2.0_f64.ln()).abs() < 1e-15);

        let (lo, hi) = diag_dominance_bounds(&isoceles()).unwrap();
        assert!((lo - 2.0_f64.ln()).abs() < 1e-15);
        assert!((hi - 2.0_f64.ln() / 1e-3).abs() < 1e-9);

        let two = DissimilarityMatrix::from_fn(2, |_, _| 0.37).unwrap();
        let (lo, hi) = diag_dominance_bounds(&two).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn cutoffs_two_point_space_is_zero() {
        let two = DissimilarityMatrix::from_fn(2, |_, _| 0.37).unwrap();
        assert_eq!(strong_cutoff(&two).unwrap(), 0.0);
        assert_eq!(positive_cutoff(&two).unwrap(), 0.0);
    }

    #[test]
    fn strong_cutoff_equilateral_is_zero() {
        // For the equilateral, exp(-t d) is PSD with a positive weighting at
        // every positive scale, so the bisection descends to the numerical
        // floor: the cutoff is zero for practical purposes.
        let equi = DissimilarityMatrix::from_fn(3, |_, _| 1.0).unwrap();
        let t = strong_cutoff(&equi).unwrap();
        assert!(t < 1e-10, "expected a vanishing cutoff, got {t}");
        // Direct eigenvalue + weighting check at representative scales.
        let mut scratch = CutoffScratch::new(&equi);
        for scale in [1e-3, 2.0_f64.ln(), 5.0] {
            assert!(scratch.psd(scale, -3e-10));
            assert!(scratch.positive_weighting(scale));
        }
    }

    #[test]
    fn strong_cutoff_brackets_a_positive_threshold() {
        let d = triangle_with_centroid();
        let t = strong_cutoff(&d).unwrap();
        let eps = sqrt_eps();
        let mut scratch = CutoffScratch::new(&d);
        let mut check = |t: f64| scratch.psd(t, -4e-10) && scratch.positive_weighting(t);
        assert!(check(t * (1.0 + eps)));
        assert!(!check(t * (1.0 - 10.0 * eps)));
    }

    #[test]
    fn positive_cutoff_matches_strong_on_equilateral() {
        let equi = DissimilarityMatrix::from_fn(3, |_, _| 1.0).unwrap();
        let pos = positive_cutoff(&equi).unwrap();
        let strong = strong_cutoff(&equi).unwrap();
        let scale = strong.max(pos).max(f64::MIN_POSITIVE);
        assert!((pos - strong).abs() <= 4.0 * sqrt_eps() * scale);
    }

    /// Bisection for the diagonal-dominance threshold itself, as an oracle
    /// for the closed-form bounds.
    fn dominance_threshold(d: &DissimilarityMatrix) -> f64 {
        let n = d.size();
        let dominant = |t: f64| {
            let z = similarity(d, t).unwrap();
            (0..n).all(|j| {
                let off: f64 = (0..n).filter(|&k| k != j).map(|k| z.entry(j, k)).sum();
                off < 1.0
            })
        };
        let mut lower = 0.0;
        let mut upper = ((n - 1) as f64).ln() / d.min_off_diagonal();
        if upper == 0.0 {
            return 0.0;
        }
        // The diagonal-dominance upper bound always satisfies the predicate.
        for _ in 0..200 {
            if 1.0 - lower / upper <= sqrt_eps() {
                break;
            }
            let mid = 0.5 * (lower + upper);
            if dominant(mid) {
                upper = mid;
            } else {
                lower = mid;
            }
        }
        upper
    }

    #[test]
    fn cutoff_ordering_on_random_euclidean_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3usize, 5, 8] {
            let pts = random_points(&mut rng, n, 3);
            let d = DissimilarityMatrix::from_points(&pts).unwrap();
            let pos = positive_cutoff(&d).unwrap();
            let strong = strong_cutoff(&d).unwrap();
            assert!(pos <= strong * (1.0 + 4.0 * sqrt_eps()), "{pos} vs {strong}");
            let (lo, hi) = diag_dominance_bounds(&d).unwrap();
            let t_d = dominance_threshold(&d);
            assert!(lo <= t_d * (1.0 + 4.0 * sqrt_eps()), "{lo} vs {t_d}");
            assert!(t_d <= hi * (1.0 + 4.0 * sqrt_eps()), "{t_d} vs {hi}");
            // The strong cutoff never exceeds the dominance threshold, which
            // already guarantees a positive-definite Z with positive w.
            assert!(strong <= t_d * (1.0 + 4.0 * sqrt_eps()));
            assert!(strong <= hi * (1.0 + sqrt_eps()));
            let cuts = ScaleCutoffs::compute(&d).unwrap();
            assert!(cuts.diag_lower <= cuts.diag_upper);
        }
    }

    #[test]
    fn isoceles_strong_at_least_positive() {
        let d = isoceles();
        let pos = positive_cutoff(&d).unwrap();
        let strong = strong_cutoff(&d).unwrap();
        assert!(strong >= pos * (1.0 - 4.0 * sqrt_eps()));
    }

    #[test]
    fn one_point_space_has_unit_magnitude_at_every_scale() {
        let d = DissimilarityMatrix::from_entries(DMatrix::zeros(1, 1)).unwrap();
        for t in [0.0, 1e-6, 1.0, 1e8] {
            let w = solve_weighting(&similarity(&d, t).unwrap()).unwrap();
            assert_eq!(w.components(), &[1.0]);
            assert_eq!(magnitude(&w), 1.0);
        }
    }

    #[test]
    fn magnitude_tends_to_count_at_large_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 4, 7] {
            let pts = random_points(&mut rng, n, 2);
            let d = DissimilarityMatrix::from_points(&pts).unwrap();
            let t = 1e4 / d.min_off_diagonal();
            let m = magnitude_at(&d, t);
            assert!((m - n as f64).abs() < 1e-2, "n={n}, m={m}");
        }
    }

    #[test]
    fn magnitude_monotone_above_strong_cutoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n: usize = rng.random_range(2..=10);
            let pts = random_points(&mut rng, n, 2);
            let d = DissimilarityMatrix::from_points(&pts).unwrap();
            let t0 = strong_cutoff(&d).unwrap().max(1e-8) * (1.0 + sqrt_eps());
            for i in 0..5 {
                let t = t0 * 2.0_f64.powi(i);
                let lo = magnitude_at(&d, t);
                let hi = magnitude_at(&d, 2.0 * t);
                assert!(hi >= lo - 1e-9, "magnitude decreased: {lo} -> {hi}");
            }
        }
    }

    #[test]
    fn diversity_constant_in_q_at_strong_cutoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let n: usize = rng.random_range(3..=8);
            let pts = random_points(&mut rng, n, 2);
            let d = DissimilarityMatrix::from_points(&pts).unwrap();
            let t = strong_cutoff(&d).unwrap() * (1.0 + sqrt_eps());
            let z = similarity(&d, t).unwrap();
            let w = solve_weighting(&z).unwrap();
            if w.degenerate() || w.repaired() {
                continue;
            }
            let p = max_diversity_distribution(&w).unwrap();
            let base = diversity(&z, &p, 1.0).unwrap();
            for q in [2.0, 5.0, f64::INFINITY] {
                let dq = diversity(&z, &p, q).unwrap();
                assert!(
                    (dq - base).abs() <= 1e-6 * base.abs(),
                    "q={q}: {dq} vs {base}"
                );
            }
        }
    }

    proptest! {
        // Closed form for any 2-point space: magnitude = 2/(1+exp(-t*delta)).
        #[test]
        fn two_point_magnitude_closed_form(delta in 1e-3..10.0f64, t in 1e-3..10.0f64) {
            let d = DissimilarityMatrix::from_fn(2, |_, _| delta).unwrap();
            let m = magnitude_at(&d, t);
            let expected = 2.0 / (1.0 + (-t * delta).exp());
            prop_assert!((m - expected).abs() < 1e-10 * expected);
        }

        #[test]
        fn weighting_residual_small_above_cutoff(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n: usize = rng.random_range(2..=9);
            let pts = random_points(&mut rng, n, 3);
            let d = DissimilarityMatrix::from_points(&pts).unwrap();
            let t = strong_cutoff(&d).unwrap() * (1.0 + sqrt_eps());
            let w = solve_weighting(&similarity(&d, t).unwrap()).unwrap();
            if !w.degenerate() {
                prop_assert!(w.residual() < 1e-8 * n as f64);
            }
        }
    }
}
