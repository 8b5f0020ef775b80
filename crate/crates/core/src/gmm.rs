//! Full-covariance Gaussian mixtures in 3D, fitted by expectation
//! maximization, with BIC-driven choice of the component count.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NbvError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy)]
pub struct GmmConfig {
    /// Lower bound on every covariance eigenvalue (m²).
    pub reg_floor: f64,
    /// EM stops once the log-likelihood gain drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl GmmConfig {
    /// Floor of `(resolution / 4)²`, the lattice-aware default.
    pub fn for_resolution(resolution: f64) -> Self {
        Self {
            reg_floor: (resolution / 4.0).powi(2),
            ..Self::default()
        }
    }
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            reg_floor: 1e-6,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GaussianComponent>,
    /// Total log-likelihood `ln L` of the fitted data.
    pub log_likelihood: f64,
    /// `ln L` after every E-step, first entry from the initialization.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// Point indices per component; some may be empty.
    pub clusters: Vec<Vec<usize>>,
}

/// Outcome of a BIC sweep over component counts.
#[derive(Debug, Clone)]
pub struct Selection {
    pub components: usize,
    pub model: GmmModel,
    pub assignment: ClusterAssignment,
    /// `(T, BIC)` for every count that was fitted.
    pub scores: Vec<(usize, f64)>,
}

/// Cached per-component terms for density evaluation.
struct Prepared {
    log_weight: f64,
    mean: Vector3<f64>,
    inv_chol: Matrix3<f64>,
    log_norm: f64,
}

impl GmmModel {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    fn prepare(&self) -> Result<Vec<Prepared>> {
        self.components
            .iter()
            .map(|c| {
                let chol = c.cov.cholesky().ok_or_else(|| {
                    NbvError::Numerical("covariance is not positive definite".into())
                })?;
                let l = chol.l();
                let log_det = 2.0 * (0..3).map(|k| l[(k, k)].ln()).sum::<f64>();
                let inv_chol = l
                    .try_inverse()
                    .ok_or_else(|| NbvError::Numerical("singular Cholesky factor".into()))?;
                Ok(Prepared {
                    log_weight: c.weight.ln(),
                    mean: c.mean,
                    inv_chol,
                    log_norm: -0.5 * (3.0 * LN_2PI + log_det),
                })
            })
            .collect()
    }

    /// Per-point log joint densities `ln π_t + ln N(x | μ_t, Σ_t)` written
    /// into `out` (row-major, `n × T`); returns `ln L`.
    fn log_joint(&self, points: &[Vector3<f64>], out: &mut Vec<f64>) -> Result<f64> {
        let prep = self.prepare()?;
        let t = prep.len();
        out.clear();
        out.reserve(points.len() * t);
        let mut total = 0.0;
        for x in points {
            let row_start = out.len();
            for p in &prep {
                let z = p.inv_chol * (x - p.mean);
                out.push(p.log_weight + p.log_norm - 0.5 * z.norm_squared());
            }
            total += log_sum_exp(&out[row_start..]);
        }
        Ok(total)
    }

    /// Posterior component probabilities for each point; rows sum to one.
    pub fn responsibilities(&self, points: &[Point3<f64>]) -> Result<Vec<Vec<f64>>> {
        let xs: Vec<Vector3<f64>> = points.iter().map(|p| p.coords).collect();
        let mut lj = Vec::new();
        self.log_joint(&xs, &mut lj)?;
        let t = self.components.len();
        Ok(lj
            .chunks(t)
            .map(|row| {
                let lse = log_sum_exp(row);
                row.iter().map(|v| (v - lse).exp()).collect()
            })
            .collect())
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Projects a symmetric matrix onto `{Σ : λ_min(Σ) ≥ floor}`.
///
/// This is the exact maximizer of the Gaussian likelihood term under the
/// eigenvalue constraint, so EM with it stays monotone.
fn clip_eigen(m: &Matrix3<f64>, floor: f64) -> Matrix3<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let out = eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

fn sample_covariance(points: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points
        .iter()
        .map(|x| (x - mean) * (x - mean).transpose())
        .sum::<Matrix3<f64>>()
        / n;
    (mean, cov)
}

/// Seeded farthest-point choice of `t` initial means.
fn farthest_point_seeds(points: &[Vector3<f64>], t: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|x| (x - points[first]).norm_squared())
        .collect();
    while chosen.len() < t {
        let mut best = 0;
        for (i, &d) in dist.iter().enumerate() {
            if d > dist[best] {
                best = i;
            }
        }
        chosen.push(best);
        for (i, x) in points.iter().enumerate() {
            dist[i] = dist[i].min((x - points[best]).norm_squared());
        }
    }
    chosen
}

/// Fits a `t`-component mixture by EM and hard-assigns each point to its
/// most responsible component.
pub fn fit_gmm(
    points: &[Point3<f64>],
    t: usize,
    seed: u64,
    cfg: &GmmConfig,
) -> Result<(GmmModel, ClusterAssignment)> {
    if t == 0 || points.len() < t {
        return Err(NbvError::InfeasibleModel {
            points: points.len(),
            components: t,
        });
    }
    let xs: Vec<Vector3<f64>> = points.iter().map(|p| p.coords).collect();
    let n = xs.len();
    let (_, global_cov) = sample_covariance(&xs);
    let init_cov = clip_eigen(&(global_cov / t as f64), cfg.reg_floor);
    let mut model = GmmModel {
        components: farthest_point_seeds(&xs, t, seed)
            .into_iter()
            .map(|i| GaussianComponent {
                weight: 1.0 / t as f64,
                mean: xs[i],
                cov: init_cov,
            })
            .collect(),
        log_likelihood: f64::NEG_INFINITY,
        history: Vec::new(),
    };

    let mut lj = Vec::with_capacity(n * t);
    let mut resp = vec![0.0; n * t];
    for iter in 0..=cfg.max_iter {
        let ll = model.log_joint(&xs, &mut lj)?;
        let prev = model.log_likelihood;
        model.log_likelihood = ll;
        model.history.push(ll);
        if iter == cfg.max_iter || (iter > 0 && (ll - prev).abs() < cfg.tol) {
            break;
        }
        // E-step
        for (row, out) in lj.chunks(t).zip(resp.chunks_mut(t)) {
            let lse = log_sum_exp(row);
            for (o, v) in out.iter_mut().zip(row) {
                *o = (v - lse).exp();
            }
        }
        // M-step
        for (k, comp) in model.components.iter_mut().enumerate() {
            let nk: f64 = (0..n).map(|i| resp[i * t + k]).sum();
            comp.weight = nk / n as f64;
            if nk <= f64::MIN_POSITIVE {
                continue;
            }
            let mean = (0..n)
                .map(|i| xs[i] * resp[i * t + k])
                .sum::<Vector3<f64>>()
                / nk;
            let scatter = (0..n)
                .map(|i| {
                    let d = xs[i] - mean;
                    d * d.transpose() * resp[i * t + k]
                })
                .sum::<Matrix3<f64>>()
                / nk;
            comp.mean = mean;
            comp.cov = clip_eigen(&scatter, cfg.reg_floor);
        }
    }

    let mut labels = Vec::with_capacity(n);
    let mut clusters = vec![Vec::new(); t];
    for (i, row) in lj.chunks(t).enumerate() {
        let mut best = 0;
        for k in 1..t {
            if row[k] > row[best] {
                best = k;
            }
        }
        labels.push(best);
        clusters[best].push(i);
    }
    Ok((model, ClusterAssignment { labels, clusters }))
}

/// Free parameters of a `t`-component full-covariance 3D mixture:
/// 3 mean + 6 covariance + 1 weight per component, minus the weight
/// sum constraint.
pub fn parameter_count(t: usize) -> usize {
    10 * t - 1
}

/// `k·ln(n) − 2·ln L`.
pub fn bic_value(k: usize, n: usize, log_likelihood: f64) -> f64 {
    k as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

pub fn bic(model: &GmmModel, n: usize) -> f64 {
    bic_value(
        parameter_count(model.num_components()),
        n,
        model.log_likelihood,
    )
}

/// Fits `T = 1..=min(t_max, n)` and keeps the smallest BIC (ties go to the
/// smaller `T`).
pub fn select_components(
    points: &[Point3<f64>],
    t_max: usize,
    seed: u64,
    cfg: &GmmConfig,
) -> Result<Selection> {
    if points.is_empty() {
        return Err(NbvError::EmptyInput("no points to cluster".into()));
    }
    let upper = t_max.max(1).min(points.len());
    let mut best: Option<(f64, usize, GmmModel, ClusterAssignment)> = None;
    let mut scores = Vec::with_capacity(upper);
    for t in 1..=upper {
        let (model, assignment) = match fit_gmm(points, t, seed, cfg) {
            Ok(fit) => fit,
            Err(NbvError::InfeasibleModel { .. }) => continue,
            Err(e) => return Err(e),
        };
        let score = bic(&model, points.len());
        scores.push((t, score));
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, t, model, assignment));
        }
    }
    let (_, components, model, assignment) =
        best.ok_or_else(|| NbvError::Numerical("no mixture could be fitted".into()))?;
    Ok(Selection {
        components,
        model,
        assignment,
        scores,
    })
}
