//! Stochastic representations `J(θ, x)` with `E J(θ, X) = U(θ)`.
//!
//! The shipped benchmark is the discontinuous quadratic
//! `J(θ, x) = (θ − x)² + 1{x ≤ θ}`, whose expectation
//! `U(θ) = E X² − 2θ E X + θ² + F(θ)` is smooth whenever the noise CDF `F` is.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::noise::NoiseKind;
use crate::special::{normal_cdf, normal_pdf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    /// `+1` for ascent, `−1` for descent.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Direction::Minimize => -1.0,
            Direction::Maximize => 1.0,
        }
    }
}

/// Noisy objective evaluated by the finite-difference engine.
pub trait StochasticObjective: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, theta: &[f64], x: f64) -> f64;
}

/// `(θ − x)² + 1` if `x ≤ θ`, `(θ − x)²` otherwise.
#[inline]
pub fn benchmark_j(theta: f64, x: f64) -> f64 {
    let d = theta - x;
    if x <= theta {
        d * d + 1.0
    } else {
        d * d
    }
}

/// The one-dimensional benchmark as a [`StochasticObjective`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Benchmark;

impl StochasticObjective for Benchmark {
    #[inline]
    fn dim(&self) -> usize {
        1
    }

    #[inline]
    fn eval(&self, theta: &[f64], x: f64) -> f64 {
        benchmark_j(theta[0], x)
    }
}

type EvalFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// A user-supplied `J` of arbitrary dimension.
#[derive(Clone)]
pub struct Objective {
    dim: usize,
    eval: Arc<EvalFn>,
    pub direction: Direction,
}

impl Objective {
    pub fn new<F>(dim: usize, direction: Direction, eval: F) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::Domain("objective dimension must be >= 1".into()));
        }
        Ok(Self { dim, eval: Arc::new(eval), direction })
    }

    pub fn benchmark() -> Self {
        Self { dim: 1, eval: Arc::new(|t, x| benchmark_j(t[0], x)), direction: Direction::Minimize }
    }
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective").field("dim", &self.dim).field("direction", &self.direction).finish_non_exhaustive()
    }
}

impl StochasticObjective for Objective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &[f64], x: f64) -> f64 {
        (self.eval)(theta, x)
    }
}

/// Marginal law entering the closed-form expectation of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectationLaw {
    /// `X ~ N(mean, sd²)`; covers i.i.d. normals and the stationary AR(1) marginal.
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Uniform01,
    Beta22,
}

impl ExpectationLaw {
    fn u(&self, t: f64) -> f64 {
        match *self {
            ExpectationLaw::Gaussian { mean, sd } => {
                let d = t - mean;
                sd * sd + d * d + normal_cdf(d / sd)
            }
            ExpectationLaw::Uniform01 => 1.0 / 3.0 - t + t * t + t.clamp(0.0, 1.0),
            ExpectationLaw::Beta22 => {
                let f = if t <= 0.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    t * t * (3.0 - 2.0 * t)
                };
                0.3 - t + t * t + f
            }
        }
    }

    // Densities are taken right-continuous, so at a kink the right derivative
    // is returned.
    fn g(&self, t: f64) -> f64 {
        match *self {
            ExpectationLaw::Gaussian { mean, sd } => {
                let d = t - mean;
                2.0 * d + normal_pdf(d / sd) / sd
            }
            ExpectationLaw::Uniform01 => {
                let f = if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
                2.0 * t - 1.0 + f
            }
            ExpectationLaw::Beta22 => {
                let f = if (0.0..1.0).contains(&t) { 6.0 * t * (1.0 - t) } else { 0.0 };
                2.0 * t - 1.0 + f
            }
        }
    }

    /// Root bracket for `g` and the centre of the grid scan.
    fn bracket(&self) -> (f64, f64, f64) {
        match *self {
            // |θ* − μ| ≤ φ(0)/(2 sd²) < 0.2/sd², so this interval always brackets.
            ExpectationLaw::Gaussian { mean, sd } => (mean - 1.0 - 1.0 / (sd * sd), mean, mean),
            ExpectationLaw::Uniform01 => (-0.5, 0.5, 0.0),
            ExpectationLaw::Beta22 => (0.0, 0.5, 0.0),
        }
    }
}

/// Closed-form expectation `U`, its derivative `G = U'` and stationary point `θ*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub law: ExpectationLaw,
    pub direction: Direction,
    pub theta_star: f64,
}

impl ClosedForm {
    /// Builds the closed form and locates `θ*` with [`solve_theta_star`];
    /// checks `|G(θ*)| < 1e-8` and that a grid scan agrees on the extremum.
    pub fn new(law: ExpectationLaw) -> Result<Self> {
        let (lo, hi, centre) = law.bracket();
        let theta_star = solve_theta_star(|t| law.g(t), lo, hi)?;
        let cf = Self { law, direction: Direction::Minimize, theta_star };
        if cf.g(theta_star).abs() >= 1e-8 {
            return Err(Error::RootFinding(format!(
                "|G(theta*)| = {} at theta* = {theta_star}",
                cf.g(theta_star).abs()
            )));
        }
        let best = grid_argmin(|t| cf.u(t), centre - 3.0, centre + 3.0, 1e-3);
        if (best - theta_star).abs() > 1e-3 {
            return Err(Error::RootFinding(format!(
                "grid scan minimum at {best} disagrees with theta* = {theta_star}"
            )));
        }
        Ok(cf)
    }

    pub fn u(&self, theta: f64) -> f64 {
        self.law.u(theta)
    }

    pub fn g(&self, theta: f64) -> f64 {
        self.law.g(theta)
    }

    /// Mean-field drift of the recursion, `−G` when minimizing.
    pub fn drift(&self, theta: f64) -> f64 {
        self.direction.sign() * self.g(theta)
    }
}

fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let t = lo + i as f64 * step;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best.0
}

/// Closed form of the benchmark under the stationary law of `kind`.
pub fn closed_form_for(kind: &NoiseKind) -> Result<ClosedForm> {
    kind.validate()?;
    let law = match *kind {
        NoiseKind::Normal { mean, sd } => ExpectationLaw::Gaussian { mean, sd },
        NoiseKind::Uniform01 => ExpectationLaw::Uniform01,
        NoiseKind::Beta22 => ExpectationLaw::Beta22,
        NoiseKind::Ar1 { kappa, innovation_sd } => {
            ExpectationLaw::Gaussian { mean: 0.0, sd: innovation_sd / (1.0 - kappa * kappa).sqrt() }
        }
    };
    ClosedForm::new(law)
}

/// Root of `g` in `[lo, hi]`: bisection to a narrow bracket, then Newton steps
/// (central-difference slope) kept inside the bracket, falling back to
/// bisection whenever a Newton step would leave it.
pub fn solve_theta_star<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::RootFinding(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (glo, ghi) = (g(lo), g(hi));
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if !(glo * ghi < 0.0) {
        return Err(Error::RootFinding(format!("no sign change on [{lo}, {hi}]: g(lo)={glo}, g(hi)={ghi}")));
    }
    let (mut neg, mut pos) = if glo < 0.0 { (lo, hi) } else { (hi, lo) };

    for _ in 0..20 {
        let mid = 0.5 * (neg + pos);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            neg = mid;
        } else {
            pos = mid;
        }
    }

    let mut x = 0.5 * (neg + pos);
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            neg = x;
        } else {
            pos = x;
        }
        let (a, b) = (neg.min(pos), neg.max(pos));
        if b - a <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let h = 1e-7 * (1.0 + x.abs());
        let slope = (g(x + h) - g(x - h)) / (2.0 * h);
        let mut next = x - gx / slope;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if next == x {
            break;
        }
        x = next;
    }

    // pick the better of the final iterate and the bracket ends
    let best = [x, neg, pos].into_iter().min_by(|p, q| g(*p).abs().total_cmp(&g(*q).abs())).unwrap_or(x);
    let residual = g(best).abs();
    if residual < 1e-10 {
        Ok(best)
    } else {
        Err(Error::RootFinding(format!("converged to {best} with |g| = {residual}; g likely jumps across zero")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseSource, NoiseStream};
    use crate::special::lambert_w0;

    const KINDS: [NoiseKind; 4] = [
        NoiseKind::Normal { mean: 0.0, sd: 1.0 },
        NoiseKind::Uniform01,
        NoiseKind::Beta22,
        NoiseKind::Ar1 { kappa: 0.75, innovation_sd: 1.0 },
    ];

    /// Plain bisection to machine precision; independent of the solver above.
    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let glo = g(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (g(mid) < 0.0) == (glo < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn benchmark_j_examples() {
        assert!((benchmark_j(0.5, 0.3) - 1.04).abs() < 1e-15);
        assert!((benchmark_j(0.5, 0.7) - 0.04).abs() < 1e-15);
        assert_eq!(benchmark_j(0.3, 0.3), 1.0);
    }

    #[test]
    fn closed_form_values() {
        let normal = closed_form_for(&KINDS[0]).unwrap();
        assert_eq!(normal.u(0.0), 1.5);
        let theta_w = -lambert_w0(1.0 / (8.0 * std::f64::consts::PI)).unwrap().sqrt();
        assert!((normal.theta_star - theta_w).abs() < 1e-12);
        assert!((normal.theta_star - (-0.19569)).abs() < 5e-6);

        assert_eq!(closed_form_for(&KINDS[1]).unwrap().theta_star, 0.0);

        let beta = closed_form_for(&KINDS[2]).unwrap();
        assert!((beta.theta_star - (2.0 - 2.5f64.sqrt()) / 3.0).abs() < 1e-12);
        assert!((beta.theta_star - 0.13962).abs() < 5e-6);

        let ar = closed_form_for(&KINDS[3]).unwrap();
        assert!((ar.theta_star - (-0.13144)).abs() < 5e-6);
        // U₄(θ) = θ² + 1/(1−κ²) + Φ(θ√(1−κ²))
        let k2: f64 = 1.0 - 0.75 * 0.75;
        for t in [-0.4, 0.0, 0.9] {
            let u4 = t * t + 1.0 / k2 + normal_cdf(t * k2.sqrt());
            assert!((ar.u(t) - u4).abs() < 1e-14);
        }
    }

    #[test]
    fn solver_against_bisection_oracle() {
        let g1 = |t: f64| 2.0 * t + normal_pdf(t);
        let want = bisect(g1, -1.0, 0.0);
        let got = solve_theta_star(g1, -1.0, 0.0).unwrap();
        assert!((got - want).abs() < 1e-8);
        assert!((got - (-0.19569)).abs() < 5e-6);
        assert!(g1(got).abs() < 1e-10);

        let g2 = |t: f64| -6.0 * t * t + 8.0 * t - 1.0;
        let got = solve_theta_star(g2, 0.0, 0.5).unwrap();
        assert!((got - (2.0 - 2.5f64.sqrt()) / 3.0).abs() < 1e-12);

        let s = 0.4375f64.sqrt();
        let g3 = |t: f64| 2.0 * t + s * normal_pdf(t * s);
        let want = bisect(g3, -1.0, 0.0);
        let got = solve_theta_star(g3, -1.0, 0.0).unwrap();
        assert!((got - want).abs() < 1e-8);
        assert!((got - (-0.13144)).abs() < 5e-6);
    }

    #[test]
    fn solver_requires_sign_change() {
        let err = solve_theta_star(|t| t * t + 1.0, -1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::RootFinding(_)));
        assert!(solve_theta_star(|t| t, 1.0, -1.0).is_err());
    }

    #[test]
    fn stationarity_of_theta_star() {
        for kind in KINDS {
            let cf = closed_form_for(&kind).unwrap();
            assert!(cf.g(cf.theta_star).abs() < 1e-8, "{kind:?}");
        }
    }

    #[test]
    fn unsupported_parameters_rejected() {
        assert!(closed_form_for(&NoiseKind::Ar1 { kappa: 1.2, innovation_sd: 1.0 }).is_err());
    }

    #[test]
    fn gradient_matches_central_difference_of_u() {
        for kind in KINDS {
            let cf = closed_form_for(&kind).unwrap();
            for t in [-1.0, 0.3] {
                for h in [1e-3, 1e-4] {
                    let fd = (cf.u(t + h) - cf.u(t - h)) / (2.0 * h);
                    assert!((fd - cf.g(t)).abs() < 5.0 * h * h + 1e-10, "{kind:?} t={t} h={h}");
                }
            }
        }
    }

    #[test]
    fn monte_carlo_average_matches_u() {
        let n = 1_000_000;
        for kind in KINDS {
            let cf = closed_form_for(&kind).unwrap();
            for t in [-0.5, 0.0, 0.5] {
                let mut s = NoiseStream::new(kind, 31).unwrap();
                let vals: Vec<f64> = (0..n).map(|_| benchmark_j(t, s.draw())).collect();
                let m = vals.iter().sum::<f64>() / n as f64;
                let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
                // AR(1) draws are dependent; J inherits at most the (1+κ)/(1−κ) inflation
                let infl = if kind.is_iid() { 1.0 } else { 7.0 };
                let se = (v * infl / n as f64).sqrt();
                assert!((m - cf.u(t)).abs() < 4.0 * se, "{kind:?} t={t}: {m} vs {}", cf.u(t));
            }
        }
    }

    #[test]
    fn user_objective_hook() {
        let obj = Objective::new(2, Direction::Minimize, |t, x| t[0] * t[0] + t[1] * x).unwrap();
        assert_eq!(obj.dim(), 2);
        assert_eq!(obj.eval(&[2.0, 3.0], 1.0), 7.0);
        assert!(Objective::new(0, Direction::Minimize, |_, _| 0.0).is_err());
        assert_eq!(Objective::benchmark().eval(&[0.5], 0.3), benchmark_j(0.5, 0.3));
    }
}
