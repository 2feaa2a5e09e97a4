//! Built-in problem suite: objectives, dissimilarities, and generators for
//! real vectors, integer lattices, and bit strings, plus the `Problem`
//! contract the engine runs against.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem name '{0}' (expected rastrigin, int-rastrigin, sk, or labs)")]
    UnknownProblem(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("domain lower bound {lo} must be below upper bound {hi}")]
    EmptyDomain { lo: f64, hi: f64 },
    #[error("lambda must be at least 1")]
    ZeroLambda,
    #[error("spin vector component {index} = {value} is not +-1")]
    NotSpin { index: usize, value: i8 },
    #[error("bit vectors have mismatched lengths {a} and {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("elite count {elites} exceeds the 2^{dimension} states of the space")]
    TooManyElites { elites: u64, dimension: u32 },
    #[error("figure of merit supports dimensions up to 126, got {0}")]
    DimensionTooLarge(u32),
}

/// A search space the engine can explore: an objective to minimize, a
/// symmetric nondegenerate dissimilarity, global and local state generators,
/// and a numeric codec for the surrogate and file outputs.
pub trait Problem: Sync {
    type State: Clone + PartialEq + Send + Sync + std::fmt::Debug;

    fn objective(&self, state: &Self::State) -> f64;
    fn dissimilarity(&self, a: &Self::State, b: &Self::State) -> f64;
    fn generate_global<R: Rng>(&self, rng: &mut R) -> Self::State;
    fn generate_local<R: Rng>(&self, base: &Self::State, bandwidth: f64, rng: &mut R)
        -> Self::State;
    fn encode(&self, state: &Self::State) -> Vec<f64>;
    fn decode(&self, encoded: &[f64]) -> Self::State;

    /// Whether `exp(-t d)` is positive definite for every `t > 0` (true for
    /// Euclidean-embeddable dissimilarities), letting the engine skip the
    /// eigenvalue check in its scale cutoffs.
    fn metric_is_euclidean(&self) -> bool {
        true
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Rastrigin objective `A N + sum_j (x_j^2 - A cos 2 pi x_j)`: global minimum
/// 0 at the origin, local minima near the integer lattice.
pub fn rastrigin(x: &[f64], amplitude: f64) -> f64 {
    let n = x.len() as f64;
    amplitude * n
        + x.iter()
            .map(|&v| v * v - amplitude * (2.0 * std::f64::consts::PI * v).cos())
            .sum::<f64>()
}

/// Rastrigin on the integer lattice under the substitution `x <- x/lambda`;
/// minima sit on `(lambda Z)^N`.
pub fn integer_rastrigin(x: &[i64], lambda: u32, amplitude: f64) -> f64 {
    let scaled: Vec<f64> = x.iter().map(|&v| v as f64 / lambda as f64).collect();
    rastrigin(&scaled, amplitude)
}

fn check_spins(s: &[i8]) -> Result<(), ProblemError> {
    for (index, &value) in s.iter().enumerate() {
        if value != 1 && value != -1 {
            return Err(ProblemError::NotSpin { index, value });
        }
    }
    Ok(())
}

/// A Sherrington-Kirkpatrick coupling matrix: symmetric with zero diagonal,
/// off-diagonal entries standard normal, reproducible from the seed.
#[derive(Debug, Clone)]
pub struct SkInstance {
    dimension: usize,
    /// Row-major `dimension x dimension` couplings.
    couplings: Vec<f64>,
}

impl SkInstance {
    /// Draws the upper triangle IID standard normal (row-major order) and
    /// mirrors it; the diagonal stays zero so energies differ only by the
    /// constant it would contribute.
    pub fn from_seed(dimension: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut couplings = vec![0.0; dimension * dimension];
        for j in 0..dimension {
            for k in (j + 1)..dimension {
                let v: f64 = StandardNormal.sample(&mut rng);
                couplings[j * dimension + k] = v;
                couplings[k * dimension + j] = v;
            }
        }
        Self {
            dimension,
            couplings,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn coupling(&self, j: usize, k: usize) -> f64 {
        self.couplings[j * self.dimension + k]
    }
}

/// Spin-glass energy `(1/sqrt(N)) sum_{jk} J_jk s_j s_k` over all ordered
/// pairs.
pub fn sk_energy(instance: &SkInstance, s: &[i8]) -> Result<f64, ProblemError> {
    check_spins(s)?;
    let n = instance.dimension();
    if s.len() != n {
        return Err(ProblemError::LengthMismatch { a: s.len(), b: n });
    }
    let mut total = 0.0;
    for j in 0..n {
        for k in (j + 1)..n {
            total += 2.0 * instance.coupling(j, k) * (s[j] as f64) * (s[k] as f64);
        }
    }
    Ok(total / (n as f64).sqrt())
}

/// Low-autocorrelation binary sequence energy `sum_{k=1}^{N-1} R_k(s)^2`
/// with `R_k = sum_j s_j s_{j+k}`.
pub fn labs_energy(s: &[i8]) -> Result<f64, ProblemError> {
    check_spins(s)?;
    let n = s.len();
    let mut total = 0.0;
    for k in 1..n {
        let r: i64 = (0..n - k).map(|j| (s[j] * s[j + k]) as i64).sum();
        total += (r * r) as f64;
    }
    Ok(total)
}

/// Square root of the Hamming distance between equal-length bit vectors.
pub fn binary_dissimilarity(a: &[bool], b: &[bool]) -> Result<f64, ProblemError> {
    if a.len() != b.len() {
        return Err(ProblemError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let hamming = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok((hamming as f64).sqrt())
}

/// Spherical Gaussian perturbation with standard deviation `bandwidth`.
pub fn gaussian_local_generator<R: Rng>(x: &[f64], bandwidth: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + bandwidth * z
        })
        .collect()
}

/// Integer perturbation: a continuous Gaussian step rounded away from zero,
/// so any nonzero draw moves the coordinate by at least one.
pub fn rounded_gaussian_local_generator<R: Rng>(
    x: &[i64],
    bandwidth: f64,
    rng: &mut R,
) -> Vec<i64> {
    x.iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            let delta = bandwidth * z;
            v + (delta.signum() * delta.abs().ceil()) as i64
        })
        .collect()
}

/// Flips each bit independently with probability `min(rate, 1)`.
pub fn bernoulli_flip_generator<R: Rng>(bits: &[bool], rate: f64, rng: &mut R) -> Vec<bool> {
    let rate = rate.clamp(0.0, 1.0);
    bits.iter()
        .map(|&b| {
            if rng.random::<f64>() < rate {
                !b
            } else {
                b
            }
        })
        .collect()
}

/// Hamming-bound figure of merit: the largest radius `r` such that
/// `num_elites <= 2^dimension / sum_{k<=r} C(dimension, k)`, i.e. the packing
/// radius consistent with that many balls in the hypercube.
pub fn hamming_figure_of_merit(num_elites: u64, dimension: u32) -> Result<u32, ProblemError> {
    if dimension > 126 {
        return Err(ProblemError::DimensionTooLarge(dimension));
    }
    let space: u128 = 1u128 << dimension;
    if num_elites as u128 > space {
        return Err(ProblemError::TooManyElites {
            elites: num_elites,
            dimension,
        });
    }
    let mut volume: u128 = 1; // Hamming ball of radius 0
    let mut binom: u128 = 1;
    let mut best = 0;
    for r in 1..=dimension {
        binom = binom * (dimension - r + 1) as u128 / r as u128;
        volume += binom;
        let fits = (num_elites as u128)
            .checked_mul(volume)
            .map(|product| product <= space)
            .unwrap_or(false);
        if fits {
            best = r;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Rastrigin on a box in real space.
#[derive(Debug, Clone)]
pub struct RastriginProblem {
    dimension: usize,
    amplitude: f64,
    lo: f64,
    hi: f64,
}

impl RastriginProblem {
    pub fn new(dimension: usize, amplitude: f64, domain: (f64, f64)) -> Result<Self, ProblemError> {
        if dimension == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        if domain.0.is_nan() || domain.1.is_nan() || domain.0 >= domain.1 {
            return Err(ProblemError::EmptyDomain {
                lo: domain.0,
                hi: domain.1,
            });
        }
        Ok(Self {
            dimension,
            amplitude,
            lo: domain.0,
            hi: domain.1,
        })
    }
}

impl Problem for RastriginProblem {
    type State = Vec<f64>;

    fn objective(&self, state: &Vec<f64>) -> f64 {
        rastrigin(state, self.amplitude)
    }

    fn dissimilarity(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        euclidean(a, b)
    }

    fn generate_global<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dimension)
            .map(|_| rng.random_range(self.lo..self.hi))
            .collect()
    }

    fn generate_local<R: Rng>(&self, base: &Vec<f64>, bandwidth: f64, rng: &mut R) -> Vec<f64> {
        gaussian_local_generator(base, bandwidth, rng)
    }

    fn encode(&self, state: &Vec<f64>) -> Vec<f64> {
        state.clone()
    }

    fn decode(&self, encoded: &[f64]) -> Vec<f64> {
        encoded.to_vec()
    }
}

/// Scaled-integer Rastrigin on `(lambda * [lo, hi])^N` intersected with the
/// integer lattice.
#[derive(Debug, Clone)]
pub struct IntegerRastriginProblem {
    dimension: usize,
    amplitude: f64,
    lambda: u32,
    lo: f64,
    hi: f64,
}

impl IntegerRastriginProblem {
    pub fn new(
        dimension: usize,
        amplitude: f64,
        lambda: u32,
        domain: (f64, f64),
    ) -> Result<Self, ProblemError> {
        if dimension == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        if lambda == 0 {
            return Err(ProblemError::ZeroLambda);
        }
        if domain.0.is_nan() || domain.1.is_nan() || domain.0 >= domain.1 {
            return Err(ProblemError::EmptyDomain {
                lo: domain.0,
                hi: domain.1,
            });
        }
        Ok(Self {
            dimension,
            amplitude,
            lambda,
            lo: domain.0,
            hi: domain.1,
        })
    }
}

impl Problem for IntegerRastriginProblem {
    type State = Vec<i64>;

    fn objective(&self, state: &Vec<i64>) -> f64 {
        integer_rastrigin(state, self.lambda, self.amplitude)
    }

    fn dissimilarity(&self, a: &Vec<i64>, b: &Vec<i64>) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    fn generate_global<R: Rng>(&self, rng: &mut R) -> Vec<i64> {
        let scale = self.lambda as f64;
        (0..self.dimension)
            .map(|_| rng.random_range(scale * self.lo..scale * self.hi).round() as i64)
            .collect()
    }

    fn generate_local<R: Rng>(&self, base: &Vec<i64>, bandwidth: f64, rng: &mut R) -> Vec<i64> {
        rounded_gaussian_local_generator(base, bandwidth, rng)
    }

    fn encode(&self, state: &Vec<i64>) -> Vec<f64> {
        state.iter().map(|&v| v as f64).collect()
    }

    fn decode(&self, encoded: &[f64]) -> Vec<i64> {
        encoded.iter().map(|&v| v.round() as i64).collect()
    }
}

fn bits_to_spins(bits: &[bool]) -> Vec<i8> {
    bits.iter().map(|&b| if b { 1 } else { -1 }).collect()
}

fn uniform_bits<R: Rng>(dimension: usize, rng: &mut R) -> Vec<bool> {
    (0..dimension).map(|_| rng.random::<bool>()).collect()
}

/// Maps the engine's bandwidth (a square-root-Hamming scale) to a Bernoulli
/// flip rate with matching expected displacement.
fn flip_rate(bandwidth: f64, dimension: usize) -> f64 {
    (bandwidth * bandwidth / dimension as f64).min(1.0)
}

/// Sherrington-Kirkpatrick spin glass over bit strings (bits embed spins via
/// `s = 2b - 1`), with square-root-Hamming dissimilarity.
#[derive(Debug, Clone)]
pub struct SkProblem {
    instance: SkInstance,
}

impl SkProblem {
    pub fn new(dimension: usize, instance_seed: u64) -> Result<Self, ProblemError> {
        if dimension == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        Ok(Self {
            instance: SkInstance::from_seed(dimension, instance_seed),
        })
    }

    pub fn instance(&self) -> &SkInstance {
        &self.instance
    }
}

impl Problem for SkProblem {
    type State = Vec<bool>;

    fn objective(&self, state: &Vec<bool>) -> f64 {
        sk_energy(&self.instance, &bits_to_spins(state)).expect("bits are valid spins")
    }

    fn dissimilarity(&self, a: &Vec<bool>, b: &Vec<bool>) -> f64 {
        binary_dissimilarity(a, b).expect("states share the instance dimension")
    }

    fn generate_global<R: Rng>(&self, rng: &mut R) -> Vec<bool> {
        uniform_bits(self.instance.dimension(), rng)
    }

    fn generate_local<R: Rng>(&self, base: &Vec<bool>, bandwidth: f64, rng: &mut R) -> Vec<bool> {
        bernoulli_flip_generator(base, flip_rate(bandwidth, base.len()), rng)
    }

    fn encode(&self, state: &Vec<bool>) -> Vec<f64> {
        state.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    fn decode(&self, encoded: &[f64]) -> Vec<bool> {
        encoded.iter().map(|&v| v > 0.5).collect()
    }
}

/// Low-autocorrelation binary sequences over bit strings.
#[derive(Debug, Clone)]
pub struct LabsProblem {
    dimension: usize,
}

impl LabsProblem {
    pub fn new(dimension: usize) -> Result<Self, ProblemError> {
        if dimension == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        Ok(Self { dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

impl Problem for LabsProblem {
    type State = Vec<bool>;

    fn objective(&self, state: &Vec<bool>) -> f64 {
        labs_energy(&bits_to_spins(state)).expect("bits are valid spins")
    }

    fn dissimilarity(&self, a: &Vec<bool>, b: &Vec<bool>) -> f64 {
        binary_dissimilarity(a, b).expect("states share the problem dimension")
    }

    fn generate_global<R: Rng>(&self, rng: &mut R) -> Vec<bool> {
        uniform_bits(self.dimension, rng)
    }

    fn generate_local<R: Rng>(&self, base: &Vec<bool>, bandwidth: f64, rng: &mut R) -> Vec<bool> {
        bernoulli_flip_generator(base, flip_rate(bandwidth, base.len()), rng)
    }

    fn encode(&self, state: &Vec<bool>) -> Vec<f64> {
        state.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    fn decode(&self, encoded: &[f64]) -> Vec<bool> {
        encoded.iter().map(|&v| v > 0.5).collect()
    }
}

/// Parameters shared by the built-in problems; fields irrelevant to a
/// problem are ignored by it.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    pub dimension: usize,
    pub amplitude: f64,
    pub domain: (f64, f64),
    pub lambda: u32,
    pub instance_seed: u64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            dimension: 2,
            amplitude: 10.0,
            domain: (-2.0, 3.0),
            lambda: 100,
            instance_seed: 0,
        }
    }
}

/// One of the built-in problems, dispatched by registry name.
#[derive(Debug, Clone)]
pub enum BuiltinProblem {
    Rastrigin(RastriginProblem),
    IntegerRastrigin(IntegerRastriginProblem),
    Sk(SkProblem),
    Labs(LabsProblem),
}

/// Names accepted by [`build_problem`].
pub const PROBLEM_NAMES: [&str; 4] = ["rastrigin", "int-rastrigin", "sk", "labs"];

/// Problem registry keyed by name.
pub fn build_problem(name: &str, params: &ProblemParams) -> Result<BuiltinProblem, ProblemError> {
    match name {
        "rastrigin" => Ok(BuiltinProblem::Rastrigin(RastriginProblem::new(
            params.dimension,
            params.amplitude,
            params.domain,
        )?)),
        "int-rastrigin" => Ok(BuiltinProblem::IntegerRastrigin(
            IntegerRastriginProblem::new(
                params.dimension,
                params.amplitude,
                params.lambda,
                params.domain,
            )?,
        )),
        "sk" => Ok(BuiltinProblem::Sk(SkProblem::new(
            params.dimension,
            params.instance_seed,
        )?)),
        "labs" => Ok(BuiltinProblem::Labs(LabsProblem::new(params.dimension)?)),
        other => Err(ProblemError::UnknownProblem(other.to_string())),
    }
}

/// Convenience for callers that only need raw bytes of randomness.
pub fn seeded_rng(seed: u64) -> impl RngCore {
    ChaCha8Rng::seed_from_u64(seed)
}
