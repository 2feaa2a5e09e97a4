//! Expected waiting times for partial coupon collection under a non-uniform
//! distribution, with computable lower/upper bounds for the regimes where the
//! exact alternating sum is combinatorially infeasible.
//!
//! The engine draws elites IID from the go distribution; the expected number
//! of draws to visit half the elites sizes each epoch's expedition count.

use thiserror::Error;

use crate::sqrt_eps;

/// Exact alternating sum is enumerated only up to this many coupon types.
const EXACT_LIMIT: usize = 16;
/// Cutoff-partition bounds enumerate a power set of up to this many indices.
const CUTOFF_LIMIT: usize = 16;
/// Nodes of the trapezoid rule for the full-collection integral.
const INTEGRAL_NODES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CouponError {
    #[error("probability vector is empty")]
    Empty,
    #[error("probability component {index} = {value} is not a finite nonnegative real")]
    InvalidComponent { index: usize, value: f64 },
    #[error("probabilities sum to {0}, beyond sqrt(eps) of 1")]
    NotNormalized(f64),
    #[error("requested {requested} coupon types but only {support} have positive probability")]
    InsufficientSupport { requested: usize, support: usize },
    #[error("coupon count m must be at least 1")]
    ZeroCount,
    #[error("cutoff c must be at least 1")]
    ZeroCutoff,
    #[error("exact sum infeasible for {0} coupon types (limit {EXACT_LIMIT})")]
    ExactInfeasible(usize),
    #[error("full-collection integral requires strictly positive probabilities")]
    ZeroComponent,
}

/// A validated probability vector. Inputs that sum to 1 only within
/// `sqrt(eps)` are rescaled and flagged; anything further off is rejected.
#[derive(Debug, Clone)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    normalized_on_construction: bool,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CouponError> {
        if values.is_empty() {
            return Err(CouponError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(CouponError::InvalidComponent { index, value });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > sqrt_eps() {
            return Err(CouponError::NotNormalized(sum));
        }
        let normalized = sum != 1.0;
        let values = if normalized {
            values.iter().map(|v| v / sum).collect()
        } else {
            values
        };
        Ok(Self {
            values,
            normalized_on_construction: normalized,
        })
    }

    pub fn uniform(n: usize) -> Result<Self, CouponError> {
        if n == 0 {
            return Err(CouponError::Empty);
        }
        Ok(Self {
            values: vec![1.0 / n as f64; n],
            normalized_on_construction: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when construction had to rescale the input.
    pub fn was_normalized(&self) -> bool {
        self.normalized_on_construction
    }

    fn support(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Lower/upper bounds on an expected collection time, with the exact value
/// when it was computable.
#[derive(Debug, Clone, Copy)]
pub struct CouponBounds {
    pub exact: Option<f64>,
    pub lower: f64,
    pub upper: f64,
}

fn ln_factorials(up_to: usize) -> Vec<f64> {
    let mut table = vec![0.0; up_to + 1];
    for k in 2..=up_to {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

/// Binomial coefficient in log space, exponentiated; finite for every
/// argument that arises here. Used in the bound routes, where arguments can
/// be large but a relative error of ~1e-13 is immaterial.
fn choose(lnf: &[f64], n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    (lnf[n] - lnf[k] - lnf[n - k]).exp()
}

/// Exact binomial coefficient for the small arguments of the exact sum; the
/// values stay far below 2^53 for n <= 16, so the f64 is exact.
fn choose_exact(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    let mut value: u128 = 1;
    for i in 0..k {
        value = value * (n - i) as u128 / (i + 1) as u128;
    }
    value as f64
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Universal lower bound `n (H_n - H_{n-m})`: the uniform distribution
/// minimizes the expected collection time.
pub fn harmonic_lower_bound(n: usize, m: usize) -> f64 {
    n as f64 * (harmonic(n) - harmonic(n - m))
}

fn validate_counts(p: &ProbabilityVector, m: usize) -> Result<(), CouponError> {
    if m == 0 {
        return Err(CouponError::ZeroCount);
    }
    let support = p.support();
    if m > support {
        return Err(CouponError::InsufficientSupport {
            requested: m,
            support,
        });
    }
    Ok(())
}

/// Expected number of IID draws from `p` needed to see `m` distinct coupon
/// types, by the exact inclusion-exclusion sum over all index subsets of
/// size below `m`. Feasible only for small vectors.
pub fn expected_partial_exact(p: &ProbabilityVector, m: usize) -> Result<f64, CouponError> {
    validate_counts(p, m)?;
    if m == 1 {
        return Ok(1.0);
    }
    let n = p.len();
    if n > EXACT_LIMIT {
        return Err(CouponError::ExactInfeasible(n));
    }
    let mut sorted = p.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));

    // Subset-sum table over all masks, then bucket 1/(1 - P_L) by |L|.
    // Buckets hold up to C(16,8) terms, so plain accumulation would lose
    // ~1e-8 absolute; compensated summation keeps the alternating total
    // accurate to ~1e-11.
    let mut subset_sum = vec![0.0f64; 1 << n];
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        subset_sum[mask] = subset_sum[mask & (mask - 1)] + sorted[low];
    }
    let mut bucket = vec![0.0f64; m];
    let mut compensation = vec![0.0f64; m];
    for (mask, &s) in subset_sum.iter().enumerate() {
        let size = mask.count_ones() as usize;
        if size < m {
            let term = 1.0 / (1.0 - s) - compensation[size];
            let next = bucket[size] + term;
            compensation[size] = (next - bucket[size]) - term;
            bucket[size] = next;
        }
    }

    let mut total = 0.0;
    for (ell, &s) in bucket.iter().enumerate() {
        let sign = if (m - 1 - ell).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * choose_exact(n - ell - 1, n - m) * s;
    }
    Ok(total)
}

/// Expected time to collect every type, via the integral representation
/// `int_0^inf (1 - prod_k [1 - exp(-p_k t)]) dt`: the domain is extended by
/// factors of 10 until the integrand falls below machine epsilon, then a
/// uniform trapezoid rule is applied.
pub fn expected_full_integral(p: &ProbabilityVector) -> Result<f64, CouponError> {
    if p.values().contains(&0.0) {
        return Err(CouponError::ZeroComponent);
    }
    let integrand = |t: f64| -> f64 {
        1.0 - p.values().iter().map(|&v| 1.0 - (-v * t).exp()).product::<f64>()
    };
    let mut x = 1.0f64;
    while integrand(x) > f64::EPSILON {
        x *= 10.0;
    }
    let h = x / (INTEGRAL_NODES - 1) as f64;
    let mut total = 0.5 * (integrand(0.0) + integrand(x));
    for i in 1..INTEGRAL_NODES - 1 {
        total += integrand(h * i as f64);
    }
    Ok(total * h)
}

/// One alternating bound accumulation: `per_ell` returns, for each subset
/// size `ell`, a pair whose min/max sandwiches the true inner sum
/// `sum_{|L| = ell} 1/(1 - P_L)`.
fn alternating_bounds<F: FnMut(usize) -> (f64, f64)>(
    n: usize,
    m: usize,
    lnf: &[f64],
    mut per_ell: F,
) -> (f64, f64) {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for ell in 0..m {
        let (a, b) = per_ell(ell);
        let sign = if (m - 1 - ell).is_multiple_of(2) { 1.0 } else { -1.0 };
        let coeff = sign * choose(lnf, n - ell - 1, n - m);
        lower += (coeff * a).min(coeff * b);
        upper += (coeff * a).max(coeff * b);
    }
    (lower, upper)
}

/// Bounds from the largest-probability partition: subsets are split by their
/// intersection with the top `lambda = min(c, ell)` indices of the sorted
/// distribution, Vandermonde-counted, and the tail contribution is replaced
/// by its best feasible lower/upper sums.
fn cutoff_probability_bounds(sorted: &[f64], m: usize, c: usize, lnf: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let mut prefix = vec![0.0f64; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let tail = |from: usize, len: usize| prefix[from + len] - prefix[from];

    alternating_bounds(n, m, lnf, |ell| {
        let lambda = c.min(ell);
        let mut sum_lo = 0.0;
        let mut sum_hi = 0.0;
        for mask in 0usize..(1 << lambda) {
            let mu = mask.count_ones() as usize;
            let r = ell - mu;
            if r > n - lambda {
                continue;
            }
            let p_m: f64 = (0..lambda)
                .filter(|j| mask >> j & 1 == 1)
                .map(|j| sorted[j])
                .sum();
            let count = choose(lnf, n - lambda, r);
            // Least / greatest feasible tail mass outside the partition.
            let pi_lo = tail(n - r, r);
            let pi_hi = tail(lambda.min(n - r), r);
            let denom_lo = (1.0 - p_m - pi_lo).max(f64::EPSILON);
            let denom_hi = (1.0 - p_m - pi_hi).max(f64::EPSILON);
            sum_lo += count / denom_lo;
            sum_hi += count / denom_hi;
        }
        (sum_lo, sum_hi)
    })
}

/// Bounds via the deviations `delta_k = n p_k - 1`, ordered by decreasing
/// magnitude; the tail deviation sum is bracketed by `+-pi*` where `pi*` is
/// the largest feasible sum of tail magnitudes.
fn deviation_bounds(sorted: &[f64], m: usize, c: usize, lnf: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let mut deltas: Vec<f64> = sorted.iter().map(|&v| n as f64 * v - 1.0).collect();
    deltas.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut abs_prefix = vec![0.0f64; n + 1];
    for (i, &v) in deltas.iter().enumerate() {
        abs_prefix[i + 1] = abs_prefix[i] + v.abs();
    }

    alternating_bounds(n, m, lnf, |ell| {
        let lambda = c.min(ell);
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        for mask in 0usize..(1 << lambda) {
            let mu = mask.count_ones() as usize;
            let r = ell - mu;
            if r > n - lambda {
                continue;
            }
            let delta_m: f64 = (0..lambda)
                .filter(|j| mask >> j & 1 == 1)
                .map(|j| deltas[j])
                .sum();
            let start = lambda.min(n - r);
            let pi_star = abs_prefix[start + r] - abs_prefix[start];
            let count = choose(lnf, n - lambda, r);
            let denom_a = (1.0 - (ell as f64 + delta_m + pi_star) / n as f64).max(f64::EPSILON);
            let denom_b = (1.0 - (ell as f64 + delta_m - pi_star) / n as f64).max(f64::EPSILON);
            sum_a += count / denom_a;
            sum_b += count / denom_b;
        }
        (sum_a, sum_b)
    })
}

fn bounds_impl(
    p: &ProbabilityVector,
    m: usize,
    c: usize,
    use_exact: bool,
) -> Result<CouponBounds, CouponError> {
    validate_counts(p, m)?;
    if c == 0 {
        return Err(CouponError::ZeroCutoff);
    }
    if m == 1 {
        return Ok(CouponBounds {
            exact: Some(1.0),
            lower: 1.0,
            upper: 1.0,
        });
    }
    let n = p.len();
    if use_exact && n <= EXACT_LIMIT {
        let exact = expected_partial_exact(p, m)?;
        return Ok(CouponBounds {
            exact: Some(exact),
            lower: exact,
            upper: exact,
        });
    }

    // Full-collection integral caps the upper bound; infinite when some type
    // is never drawn (then m = n is unreachable anyway).
    let total = if p.support() == n {
        expected_full_integral(p)?
    } else {
        f64::INFINITY
    };
    if use_exact && m == n {
        return Ok(CouponBounds {
            exact: Some(total),
            lower: total,
            upper: total,
        });
    }

    let mut lower = 0.0f64;
    let mut upper = total;
    if c <= CUTOFF_LIMIT {
        let mut sorted = p.values().to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let lnf = ln_factorials(n);
        let (lo, hi) = cutoff_probability_bounds(&sorted, m, c, &lnf);
        lower = lower.max(lo);
        upper = upper.min(hi);
        let (lo, hi) = deviation_bounds(&sorted, m, c, &lnf);
        lower = lower.max(lo);
        upper = upper.min(hi);
    }
    lower = lower.max(harmonic_lower_bound(n, m));
    Ok(CouponBounds {
        exact: None,
        lower,
        upper,
    })
}

/// Tightest available bounds on the expected time to collect `m` of the
/// coupon types, using the exact sum when feasible (then both bounds equal
/// it), cutoff-partition and deviation bounds for cutoffs up to 16, the
/// harmonic lower bound, and the full-collection integral as an upper cap.
pub fn partial_collection_bounds(
    p: &ProbabilityVector,
    m: usize,
    c: usize,
) -> Result<CouponBounds, CouponError> {
    bounds_impl(p, m, c, true)
}

/// The bound routes alone, never collapsing to the exact value; `exact` is
/// always `None`. This is the sandwich that tests verify against
/// [`expected_partial_exact`] on small instances.
pub fn bounds_without_exact(
    p: &ProbabilityVector,
    m: usize,
    c: usize,
) -> Result<CouponBounds, CouponError> {
    bounds_impl(p, m, c, false)
}
