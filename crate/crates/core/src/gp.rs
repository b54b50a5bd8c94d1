//! Exact GP posterior inference with incremental updates, plus a consistent
//! lazily-extended sample path from the prior that acts as the black-box
//! function in experiments.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{CholeskyFactor, SymMatrix};
use crate::rng::{stream, Purpose};

/// Jitter policy shared by every factorization in the crate: add
/// `attempt * 1e-10 * trace / n` to the diagonal, retry up to three times.
pub(crate) const JITTER_UNIT: f64 = 1e-10;
pub(crate) const JITTER_ATTEMPTS: usize = 3;

/// Accumulated evaluations.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub noise_var: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Incremental posterior over a [`Dataset`], holding a factorization of
/// `J_t = K + noise_var * I` and the solved observation vector.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    kernel: KernelSpec,
    dataset: Dataset,
    factor: CholeskyFactor,
    solved_obs: Vec<f64>,
    version: u64,
}

impl PosteriorState {
    pub fn new(kernel: KernelSpec, noise_var: f64) -> Self {
        PosteriorState {
            kernel,
            dataset: Dataset {
                points: Vec::new(),
                observations: Vec::new(),
                noise_var,
            },
            factor: CholeskyFactor::empty(),
            solved_obs: Vec::new(),
            version: 0,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    /// Bumped on every update; lets callers cache posterior evaluations.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Posterior mean and standard deviation at `x`. The variance is the
    /// standard conditional form `k(x,x) - k(x,X) J⁻¹ k(X,x)`, clamped to
    /// `[0, k(x,x)]`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        let kxx = self.kernel.covariance(x, x)?;
        if self.dataset.is_empty() {
            return Ok((0.0, kxx.sqrt()));
        }
        let kvec: Vec<f64> = self
            .dataset
            .points
            .iter()
            .map(|p| self.kernel.covariance(x, p))
            .collect::<Result<_>>()?;
        let mean = kvec
            .iter()
            .zip(&self.solved_obs)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        let v = self.factor.solve_lower(&kvec);
        let var = (kxx - v.iter().map(|a| a * a).sum::<f64>()).clamp(0.0, kxx);
        Ok((mean, var.sqrt()))
    }

    /// Appends one observation. The factor is extended in O(t²); if the
    /// extension fails numerically the whole factor is rebuilt under the
    /// jitter policy.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        let cov: Vec<f64> = self
            .dataset
            .points
            .iter()
            .map(|p| self.kernel.covariance(x, p))
            .collect::<Result<_>>()?;
        let diag = self.kernel.covariance(x, x)? + self.dataset.noise_var;
        self.dataset.points.push(x.to_vec());
        self.dataset.observations.push(y);
        if self.factor.push_row(&cov, diag).is_err() {
            self.factor = self.refactorize()?;
        }
        self.solved_obs = self.factor.solve(&self.dataset.observations);
        self.version += 1;
        Ok(())
    }

    fn gram(&self) -> Result<SymMatrix> {
        let pts = &self.dataset.points;
        let n = pts.len();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut v = self.kernel.covariance(&pts[i], &pts[j])?;
                if i == j {
                    v += self.dataset.noise_var;
                }
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    fn refactorize(&self) -> Result<CholeskyFactor> {
        let j = self.gram()?;
        factorize_with_jitter(&j)
    }
}

/// Factorizes `j`, retrying with diagonal jitter on failure.
pub(crate) fn factorize_with_jitter(j: &SymMatrix) -> Result<CholeskyFactor> {
    let n = j.n().max(1);
    let unit = JITTER_UNIT * j.trace() / n as f64;
    for attempt in 0..=JITTER_ATTEMPTS {
        let mut m = j.clone();
        m.add_diagonal(attempt as f64 * unit);
        if let Ok(f) = CholeskyFactor::from_spd(&m) {
            return Ok(f);
        }
    }
    Err(Error::Factorization {
        attempts: JITTER_ATTEMPTS,
    })
}

fn point_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// A sample path of the prior over `[0,1]^dim`, materialized lazily by exact
/// sequential conditioning. The dense evaluation grid is sampled up front;
/// every later query extends the same joint draw, so repeated queries agree
/// bit for bit.
pub struct GroundTruth {
    kernel: KernelSpec,
    noise_var: f64,
    dim: usize,
    grid_resolution: usize,
    n_grid: usize,
    points: Vec<Vec<f64>>,
    factor: CholeskyFactor,
    draws: Vec<f64>,
    ordered_values: Vec<f64>,
    values: HashMap<Vec<u64>, f64>,
    var_floor: f64,
    path_rng: ChaCha12Rng,
    noise_rng: ChaCha12Rng,
    seed: u64,
}

impl GroundTruth {
    /// `grid_resolution` is points per axis; zero disables the grid.
    pub fn new(
        kernel: KernelSpec,
        dim: usize,
        noise_var: f64,
        grid_resolution: usize,
        seed: u64,
    ) -> Result<Self> {
        kernel.validate()?;
        let mut gt = GroundTruth {
            // The path is a joint draw of k + nugget * I. The nugget keeps
            // sequential conditioning positive even on near-singular grids
            // (dense SE grids are numerically rank-deficient).
            var_floor: 1e-8 * kernel.total_scale(),
            kernel,
            noise_var,
            dim,
            grid_resolution,
            n_grid: 0,
            points: Vec::new(),
            factor: CholeskyFactor::empty(),
            draws: Vec::new(),
            ordered_values: Vec::new(),
            values: HashMap::new(),
            path_rng: stream(seed, Purpose::Path),
            noise_rng: stream(seed, Purpose::Noise),
            seed,
        };
        for p in grid_points(dim, grid_resolution) {
            gt.extend(&p)?;
        }
        gt.n_grid = gt.points.len();
        Ok(gt)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
    }

    pub fn grid_points(&self) -> &[Vec<f64>] {
        &self.points[..self.n_grid]
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.ordered_values[..self.n_grid]
    }

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        Ok(())
    }

    /// Materializes `f(x)` by drawing from the conditional Gaussian given
    /// everything materialized so far.
    fn extend(&mut self, x: &[f64]) -> Result<f64> {
        let cov: Vec<f64> = self
            .points
            .iter()
            .map(|p| self.kernel.covariance(x, p))
            .collect::<Result<_>>()?;
        let kxx = self.kernel.covariance(x, x)?;
        let w = self.factor.solve_lower(&cov);
        let s2 = kxx + self.var_floor - w.iter().map(|v| v * v).sum::<f64>();
        if s2 < -1e-10 {
            return Err(Error::NegativeVariance { value: s2 });
        }
        let s2f = s2.max(0.01 * self.var_floor);
        let u: f64 = self.path_rng.sample(StandardNormal);
        let mean: f64 = w.iter().zip(&self.draws).map(|(a, b)| a * b).sum();
        let value = mean + s2f.sqrt() * u;
        let ww = w.iter().map(|v| v * v).sum::<f64>();
        self.factor
            .push_row(&cov, ww + s2f)
            .expect("floored row extension cannot fail");
        self.draws.push(u);
        self.points.push(x.to_vec());
        self.ordered_values.push(value);
        self.values.insert(point_key(x), value);
        Ok(value)
    }

    /// Noiseless `f(x)`, memoized.
    pub fn value(&mut self, x: &[f64]) -> Result<f64> {
        self.check_domain(x)?;
        if let Some(v) = self.values.get(&point_key(x)) {
            return Ok(*v);
        }
        self.extend(x)
    }

    /// `f(x)`, plus fresh `N(0, noise_var)` noise when asked for.
    pub fn query(&mut self, x: &[f64], with_noise: bool) -> Result<f64> {
        let f = self.value(x)?;
        if with_noise {
            let eta: f64 = self.noise_rng.sample(StandardNormal);
            Ok(f + self.noise_var.sqrt() * eta)
        } else {
            Ok(f)
        }
    }

    /// An observation per the noisy evaluation model.
    pub fn observe(&mut self, x: &[f64]) -> Result<f64> {
        self.query(x, true)
    }

    /// Both the latent value and a noisy observation of it, drawing one
    /// noise sample (what the run loop needs for its diagnostics).
    pub fn observe_with_value(&mut self, x: &[f64]) -> Result<(f64, f64)> {
        let f = self.value(x)?;
        let eta: f64 = self.noise_rng.sample(StandardNormal);
        Ok((f, f + self.noise_var.sqrt() * eta))
    }
}

/// The dense evaluation grid: `resolution` points per axis (inclusive of the
/// box corners), in lexicographic order with axis 0 slowest.
pub fn grid_points(dim: usize, resolution: usize) -> Vec<Vec<f64>> {
    if resolution == 0 {
        return Vec::new();
    }
    let axis: Vec<f64> = if resolution == 1 {
        vec![0.5]
    } else {
        (0..resolution)
            .map(|j| j as f64 / (resolution - 1) as f64)
            .collect()
    };
    let mut pts = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(pts.len() * axis.len());
        for p in &pts {
            for v in &axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn se() -> KernelSpec {
        KernelSpec::se(1.0, 1.0)
    }

    #[test]
    fn empty_dataset_returns_prior() {
        let state = PosteriorState::new(se(), 0.1);
        let (mu, sd) = state.posterior(&[0.3]).unwrap();
        assert_eq!(mu, 0.0);
        assert_relative_eq!(sd, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn single_observation_closed_form() {
        // One observation y = 1 at x = 0 with noise 0.1: the 1x1 solve gives
        // mean k/(k + s2) and variance k - k²/(k + s2).
        let mut state = PosteriorState::new(se(), 0.1);
        state.update(&[0.0], 1.0).unwrap();
        let (mu, sd) = state.posterior(&[0.0]).unwrap();
        assert_relative_eq!(mu, 1.0 / 1.1, epsilon = 1e-12);
        assert_relative_eq!(sd * sd, 1.0 - 1.0 / 1.1, epsilon = 1e-12);
        assert_relative_eq!(mu, 0.90909, epsilon = 1e-5);
        assert_relative_eq!(sd * sd, 0.09091, epsilon = 1e-5);
    }

    #[test]
    fn repeated_observations_variance_bound() {
        // m repeats of the same point: var = (1/k + m/s2)⁻¹ <= s2/m.
        let noise = 0.1;
        for m in [1usize, 3, 10] {
            let mut state = PosteriorState::new(se(), noise);
            for _ in 0..m {
                state.update(&[0.4], 0.7).unwrap();
            }
            let (_, sd) = state.posterior(&[0.4]).unwrap();
            let expected = 1.0 / (1.0 + m as f64 / noise);
            assert_relative_eq!(sd * sd, expected, epsilon = 1e-10);
            assert!(sd * sd <= noise / m as f64 + 1e-10);
        }
    }

    #[test]
    fn incremental_equals_rebuild() {
        let mut rng = crate::rng::stream(3, Purpose::Net);
        let mut state = PosteriorState::new(se(), 0.05);
        for _ in 0..50 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let y: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            state.update(&x, y).unwrap();
        }
        // From-scratch factorization of the same dataset.
        let rebuilt = state.refactorize().unwrap();
        let solved = rebuilt.solve(&state.dataset.observations);
        let probe = [0.5, 0.5];
        let kvec: Vec<f64> = state
            .dataset
            .points
            .iter()
            .map(|p| state.kernel.covariance(&probe, p).unwrap())
            .collect();
        let mu_oracle: f64 = kvec.iter().zip(&solved).map(|(a, b)| a * b).sum();
        let v = rebuilt.solve_lower(&kvec);
        let var_oracle = 1.0 - v.iter().map(|a| a * a).sum::<f64>();
        let (mu, sd) = state.posterior(&probe).unwrap();
        assert_relative_eq!(mu, mu_oracle, max_relative = 1e-8);
        assert_relative_eq!(sd * sd, var_oracle, max_relative = 1e-8);
    }

    #[test]
    fn posterior_stddev_non_increasing() {
        let mut rng = crate::rng::stream(5, Purpose::Net);
        let mut state = PosteriorState::new(se(), 0.1);
        let probe = [0.25];
        let (_, mut prev) = state.posterior(&probe).unwrap();
        for _ in 0..30 {
            let x = [rng.gen::<f64>()];
            state.update(&x, rng.gen::<f64>()).unwrap();
            let (_, sd) = state.posterior(&probe).unwrap();
            assert!(sd <= prev + 1e-10);
            prev = sd;
        }
    }

    #[test]
    fn grid_query_returns_presampled_value() {
        let mut gt = GroundTruth::new(se(), 1, 0.1, 41, 9).unwrap();
        let g = gt.grid_points()[7].clone();
        let v_grid = gt.grid_values()[7];
        assert_eq!(gt.query(&g, false).unwrap(), v_grid);
    }

    #[test]
    fn path_queries_are_consistent() {
        let mut gt = GroundTruth::new(se(), 2, 0.1, 5, 21).unwrap();
        let x = [0.123456, 0.77];
        let a = gt.query(&x, false).unwrap();
        let b = gt.query(&x, false).unwrap();
        assert_eq!(a, b);
        // Noisy queries differ from the path value (almost surely).
        let noisy = gt.query(&x, true).unwrap();
        assert_ne!(noisy, a);
    }

    #[test]
    fn same_seed_same_path() {
        let mut a = GroundTruth::new(se(), 1, 0.1, 17, 4).unwrap();
        let mut b = GroundTruth::new(se(), 1, 0.1, 17, 4).unwrap();
        let x = [0.3141];
        assert_eq!(a.query(&x, false).unwrap(), b.query(&x, false).unwrap());
        assert_eq!(a.grid_values(), b.grid_values());
    }

    #[test]
    fn out_of_domain_rejected() {
        let mut gt = GroundTruth::new(se(), 1, 0.1, 3, 1).unwrap();
        assert!(gt.query(&[1.5], false).is_err());
        assert!(gt.query(&[0.1, 0.2], false).is_err());
    }

    #[test]
    fn monte_carlo_covariance_matches_kernel() {
        // Fresh paths across seeds: cov(f(x1), f(x2)) should estimate
        // k(x1, x2) within three standard errors.
        let x1 = [0.2];
        let x2 = [0.6];
        let n = 2000;
        let mut f1 = Vec::with_capacity(n);
        let mut f2 = Vec::with_capacity(n);
        for seed in 0..n as u64 {
            let mut gt = GroundTruth::new(se(), 1, 0.1, 0, seed).unwrap();
            f1.push(gt.query(&x1, false).unwrap());
            f2.push(gt.query(&x2, false).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (m1, m2) = (mean(&f1), mean(&f2));
        let cov = f1
            .iter()
            .zip(&f2)
            .map(|(a, b)| (a - m1) * (b - m2))
            .sum::<f64>()
            / (n - 1) as f64;
        let expected = se().covariance(&x1, &x2).unwrap();
        // var of the product estimator ~ (1 + k²)/n for unit-variance GPs
        let se3 = 3.0 * ((1.0 + expected * expected) / n as f64).sqrt();
        assert!(
            (cov - expected).abs() <= se3,
            "cov {cov} vs kernel {expected} (3se {se3})"
        );
    }

    #[test]
    fn grid_values_mean_zero_over_seeds() {
        let n_seeds = 400u64;
        let mut acc = 0.0;
        for seed in 0..n_seeds {
            let mut gt = GroundTruth::new(se(), 1, 0.1, 0, seed).unwrap();
            acc += gt.query(&[0.5], false).unwrap();
        }
        let mean = acc / n_seeds as f64;
        assert!(mean.abs() <= 4.0 * (1.0 / n_seeds as f64).sqrt());
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_points(1, 0).len(), 0);
        assert_eq!(grid_points(1, 1), vec![vec![0.5]]);
        assert_eq!(grid_points(2, 3).len(), 9);
        let g = grid_points(1, 5);
        assert_eq!(g[0], vec![0.0]);
        assert_eq!(g[4], vec![1.0]);
    }
}
