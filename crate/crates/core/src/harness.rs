//! Monte Carlo experiments: error curves, log-log fits, fixed-gain plateaus,
//! and the estimator-level probes used to check the benchmark family.
//!
//! Paths run in parallel on a rayon pool, but every aggregate is reduced in
//! path-index order, so results are bit-identical for any worker count.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::engine::{self, Divisor, PathResult, StepSpec};
use crate::noise::{derive_seed, NoiseKind, NoiseModel, PairingMode};
use crate::objective::{benchmark_j, closed_form_for, Benchmark, ClosedForm};
use crate::ode::{estimate_stability, MeanField};
use crate::schedules::{FixedGain, Gain, GainTable};
use crate::{Error, Result};

/// Decreasing schedules up to this many steps are tabulated once per experiment.
const MAX_TABLE_STEPS: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<RegressionFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 paired points, got {}/{}", xs.len(), ys.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::Fit("non-finite regression coefficients".into()));
    }
    Ok(RegressionFit { slope, intercept, r_squared })
}

/// Mean absolute error `E|θ_k − θ*|` across paths at each checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub checkpoints: Vec<u64>,
    pub mean_abs_error: Vec<f64>,
    /// Sample standard deviation over `√n_effective`.
    pub std_error: Vec<f64>,
    pub n_effective: usize,
    pub diverged: usize,
}

impl ErrorCurve {
    /// Aggregates per-path error vectors; `None` marks a diverged path, which
    /// is excluded from every checkpoint but counted.
    pub fn aggregate(checkpoints: Vec<u64>, paths: &[Option<Vec<f64>>]) -> Result<Self> {
        let diverged = paths.iter().filter(|p| p.is_none()).count();
        let live: Vec<&Vec<f64>> = paths.iter().flatten().collect();
        if live.is_empty() {
            return Err(Error::AllDiverged(paths.len()));
        }
        let n = live.len();
        let m = checkpoints.len();
        let mut mean_abs_error = Vec::with_capacity(m);
        let mut std_error = Vec::with_capacity(m);
        for j in 0..m {
            let mut sum = 0.0;
            for p in &live {
                sum += p[j];
            }
            let mean = sum / n as f64;
            let se = if n > 1 {
                let mut ss = 0.0;
                for p in &live {
                    let d = p[j] - mean;
                    ss += d * d;
                }
                (ss / (n - 1) as f64 / n as f64).sqrt()
            } else {
                0.0
            };
            mean_abs_error.push(mean);
            std_error.push(se);
        }
        Ok(Self { checkpoints, mean_abs_error, std_error, n_effective: n, diverged })
    }

    pub fn point(&self, k: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&c| c == k).map(|i| self.mean_abs_error[i])
    }
}

/// Least-squares slope of `ln E|θ_k − θ*|` on `ln k` over checkpoints in
/// `[lo, hi]`.
pub fn fit_loglog(curve: &ErrorCurve, window: (u64, u64)) -> Result<RegressionFit> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&k, &e) in curve.checkpoints.iter().zip(&curve.mean_abs_error) {
        if k < lo || k > hi || k == 0 {
            continue;
        }
        if !(e > 0.0) {
            return Err(Error::Fit(format!("error at k={k} is {e}; log undefined")));
        }
        xs.push((k as f64).ln());
        ys.push(e.ln());
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("only {} checkpoints inside [{lo}, {hi}]", xs.len())));
    }
    linear_fit(&xs, &ys)
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub curve: ErrorCurve,
    pub theta_star: f64,
}

fn step_spec(cfg: &RunConfig) -> StepSpec {
    StepSpec::new(cfg.scheme, cfg.divisor, cfg.direction)
}

fn path_errors(
    cfg: &RunConfig,
    spec: &StepSpec,
    table: &GainTable,
    theta_star: f64,
    index: u64,
) -> Result<Option<Vec<f64>>> {
    let mut noise = NoiseModel::new(cfg.noise, derive_seed(cfg.master_seed, index)).paired(cfg.pairing)?;
    let path: PathResult =
        engine::run_with_gains(&Benchmark, spec, table, &mut noise, &[cfg.theta0], cfg.n_steps, &cfg.checkpoints)?;
    if path.diverged() {
        return Ok(None);
    }
    Ok(Some(path.thetas.iter().map(|t| (t[0] - theta_star).abs()).collect()))
}

/// Executes `cfg.n_paths` independent paths and aggregates the error curve.
pub fn run_experiment(cfg: &RunConfig, workers: Option<usize>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let cf = closed_form_for(&cfg.noise)?;
    let spec = step_spec(cfg);
    let table = GainTable::new(cfg.scheme, if cfg.n_steps <= MAX_TABLE_STEPS { cfg.n_steps } else { 0 });
    let theta_star = cf.theta_star;
    let paths = with_workers(workers, || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| path_errors(cfg, &spec, &table, theta_star, i))
            .collect::<Result<Vec<_>>>()
    })??;
    let curve = ErrorCurve::aggregate(cfg.checkpoints.clone(), &paths)?;
    Ok(ExperimentOutcome { curve, theta_star })
}

impl Divisor {
    /// Ratio of the mean increment to `G` (`H/2c` averages to `G`, `H/c` to `2G`).
    pub fn mean_factor(self) -> f64 {
        match self {
            Divisor::TwoC => 1.0,
            Divisor::C => 2.0,
        }
    }
}

/// Exponential contraction rate of the unit-gain fixed mean field
/// `ẏ = ±factor · G(y)`, estimated from two nearby trajectories.
pub fn fixed_gain_rate(cf: &ClosedForm, divisor: Divisor, xi: f64) -> Result<f64> {
    let factor = divisor.mean_factor();
    let est = estimate_stability(|y| factor * cf.drift(y), MeanField::Fixed { lambda: 1.0 }, 0.0, 5.0, xi, 1e-4)?;
    if est.underflow || !(est.alpha_hat > 0.0) {
        return Err(Error::Integration(format!("no usable contraction rate: {est:?}")));
    }
    Ok(est.alpha_hat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauPoint {
    pub a: f64,
    pub c: f64,
    pub n_steps: u64,
    /// Path mean of the time-averaged `|θ_k − θ*|` over the last quarter of steps.
    pub plateau_error: f64,
    pub std_error: f64,
    pub diverged: usize,
}

/// Long-run error of the fixed-gain scheme for each `a`, with `c = a^(1/5)`.
///
/// Each run lasts `n = ⌈20 / (a α̂)⌉` steps, where `α̂` is the contraction rate
/// of the mean field, so the initial transient has decayed by `e^{−20}`.
pub fn plateau_study(base: &RunConfig, gains: &[f64], workers: Option<usize>) -> Result<Vec<PlateauPoint>> {
    if !matches!(base.scheme, Gain::Fixed(_)) {
        return Err(Error::Config("plateau study needs a fixed-gain base configuration".into()));
    }
    base.validate()?;
    let cf = closed_form_for(&base.noise)?;
    let rate = fixed_gain_rate(&cf, base.divisor, base.theta0)?;
    let theta_star = cf.theta_star;

    let mut out = Vec::with_capacity(gains.len());
    for &a in gains {
        let fixed = FixedGain::coupled(a)?;
        let n_steps = (20.0 / (a * rate)).ceil() as u64;
        let tail_start = n_steps - n_steps / 4;
        let spec = StepSpec::new(Gain::Fixed(fixed), base.divisor, base.direction);
        let per_path = with_workers(workers, || {
            (0..base.n_paths as u64)
                .into_par_iter()
                .map(|i| -> Result<Option<f64>> {
                    let mut noise =
                        NoiseModel::new(base.noise, derive_seed(base.master_seed, i)).paired(base.pairing)?;
                    let mut sum = 0.0;
                    let mut count = 0u64;
                    let mut path = PathResult { checkpoints: Vec::new(), thetas: Vec::new(), diverged_at: None };
                    engine::walk(
                        &Benchmark,
                        &spec,
                        &spec.gain,
                        &mut noise,
                        &[base.theta0],
                        n_steps,
                        &[],
                        |step, theta| {
                            if step > tail_start {
                                sum += (theta[0] - theta_star).abs();
                                count += 1;
                            }
                        },
                        &mut path,
                    )?;
                    Ok((!path.diverged() && count > 0).then(|| sum / count as f64))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let diverged = per_path.iter().filter(|p| p.is_none()).count();
        let live: Vec<f64> = per_path.into_iter().flatten().collect();
        if live.is_empty() {
            return Err(Error::AllDiverged(base.n_paths));
        }
        let m = SampleMoments::from_values(&live);
        out.push(PlateauPoint { a, c: fixed.c, n_steps, plateau_error: m.mean, std_error: m.std_error, diverged });
    }
    Ok(out)
}

/// Sample mean, variance and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl SampleMoments {
    pub fn from_values(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance =
            if n > 1 { xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { n, mean, variance, std_error: (variance / n as f64).sqrt() }
    }

    /// Same as [`from_values`](Self::from_values) but with the standard error
    /// taken from `batches` contiguous batch means, for serially dependent data.
    pub fn from_dependent(xs: &[f64], batches: usize) -> Self {
        let mut m = Self::from_values(xs);
        let size = xs.len() / batches.max(1);
        if batches >= 2 && size >= 1 {
            let means: Vec<f64> =
                xs.chunks_exact(size).take(batches).map(|b| b.iter().sum::<f64>() / size as f64).collect();
            m.std_error = SampleMoments::from_values(&means).std_error;
        }
        m
    }
}

/// Monte Carlo moments of the benchmark's finite-difference estimate `H(θ, X, c)`
/// under the stationary law of `kind`.
pub fn estimator_moments(
    kind: NoiseKind,
    pairing: PairingMode,
    theta: f64,
    c: f64,
    divisor: Divisor,
    n_draws: usize,
    seed: u64,
) -> Result<SampleMoments> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("perturbation c must be > 0, got {c}")));
    }
    let mut noise = NoiseModel::new(kind, seed).paired(pairing)?;
    let denom = divisor.denominator(c);
    let values: Vec<f64> = (0..n_draws)
        .map(|_| {
            let p = noise.next_pair();
            (benchmark_j(theta + c, p.x_plus) - benchmark_j(theta - c, p.x_minus)) / denom
        })
        .collect();
    Ok(if kind.is_iid() { SampleMoments::from_values(&values) } else { SampleMoments::from_dependent(&values, 100) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityCell {
    pub theta1: f64,
    pub theta2: f64,
    pub c: f64,
    /// Monte Carlo `E|ΔJ(θ₁, c) − ΔJ(θ₂, c)|`.
    pub mean_abs_diff: f64,
    /// `mean_abs_diff / (|θ₁ − θ₂| + c²)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityProbe {
    pub cells: Vec<RegularityCell>,
    /// Smallest `C` with `E|ΔJ(θ₁) − ΔJ(θ₂)| ≤ C (|θ₁ − θ₂| + c²)` on the grid.
    pub constant: f64,
}

/// Empirical Lipschitz-type regularity of `ΔJ(θ, c) = J(θ + c, X) − J(θ − c, X)`
/// across all pairs of distinct `thetas` and every `c`, using one shared sample.
pub fn difference_regularity_probe(
    kind: NoiseKind,
    thetas: &[f64],
    cs: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<RegularityProbe> {
    let mut stream = NoiseModel::new(kind, seed).stream()?;
    let xs: Vec<f64> = (0..n_draws).map(|_| crate::noise::NoiseSource::draw(&mut stream)).collect();
    let delta = |t: f64, c: f64, x: f64| benchmark_j(t + c, x) - benchmark_j(t - c, x);
    let mut cells = Vec::new();
    for (i, &t1) in thetas.iter().enumerate() {
        for &t2 in &thetas[i + 1..] {
            for &c in cs {
                let mean_abs_diff =
                    xs.iter().map(|&x| (delta(t1, c, x) - delta(t2, c, x)).abs()).sum::<f64>() / n_draws as f64;
                let ratio = mean_abs_diff / ((t1 - t2).abs() + c * c);
                cells.push(RegularityCell { theta1: t1, theta2: t2, c, mean_abs_diff, ratio });
            }
        }
    }
    let constant = cells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Ok(RegularityProbe { cells, constant })
}
