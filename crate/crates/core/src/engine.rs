//! Finite-difference gradient estimator and the two iteration schemes.
//!
//! One step is `θ ← θ ± λ H(θ, X, c)` with
//! `Hᵢ = (J(θ + c eᵢ, X⁺ᵢ) − J(θ − c eᵢ, X⁻ᵢ)) / (2c)` (or `/ c`), using `+`
//! to maximize and `−` to minimize.

use serde::{Deserialize, Serialize};

use crate::noise::{NoisePair, NoiseSource, PairedNoise};
use crate::objective::{Direction, StochasticObjective};
use crate::schedules::{Gain, GainSequence};
use crate::{Error, Result};

/// Iterates beyond this magnitude are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Denominator of the central difference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divisor {
    /// `(J⁺ − J⁻) / 2c`, the symmetric difference quotient.
    #[default]
    #[serde(rename = "two_c")]
    TwoC,
    /// `(J⁺ − J⁻) / c`, twice the above.
    #[serde(rename = "c")]
    C,
}

impl Divisor {
    #[inline]
    pub fn denominator(self, c: f64) -> f64 {
        match self {
            Divisor::TwoC => 2.0 * c,
            Divisor::C => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    pub gain: Gain,
    pub divisor: Divisor,
    pub direction: Direction,
}

impl StepSpec {
    pub fn new(gain: Gain, divisor: Divisor, direction: Direction) -> Self {
        Self { gain, divisor, direction }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterState {
    pub theta: Vec<f64>,
    /// Number of steps taken so far.
    pub k: u64,
}

impl IterState {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta, k: 0 }
    }

    pub fn is_diverged(&self) -> bool {
        self.theta.iter().any(|t| !t.is_finite() || t.abs() > DIVERGENCE_BOUND)
    }
}

/// Finite-difference estimate `H(θ, x, c)`; `pairs[i]` feeds coordinate `i`.
pub fn h_estimate<O: StochasticObjective + ?Sized>(
    obj: &O,
    theta: &[f64],
    pairs: &[NoisePair],
    c: f64,
    divisor: Divisor,
) -> Result<Vec<f64>> {
    let mut scratch = theta.to_vec();
    let mut out = vec![0.0; theta.len()];
    h_estimate_into(obj, theta, pairs, c, divisor, &mut scratch, &mut out)?;
    Ok(out)
}

fn h_estimate_into<O: StochasticObjective + ?Sized>(
    obj: &O,
    theta: &[f64],
    pairs: &[NoisePair],
    c: f64,
    divisor: Divisor,
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("perturbation c must be > 0, got {c}")));
    }
    let d = obj.dim();
    if theta.len() != d || pairs.len() != d {
        return Err(Error::Domain(format!(
            "dimension mismatch: objective d={d}, theta {}, pairs {}",
            theta.len(),
            pairs.len()
        )));
    }
    let denom = divisor.denominator(c);
    scratch.copy_from_slice(theta);
    for i in 0..d {
        let NoisePair { x_plus, x_minus } = pairs[i];
        scratch[i] = theta[i] + c;
        let j_plus = obj.eval(scratch, x_plus);
        if !j_plus.is_finite() {
            return Err(Error::NonFinite { theta: scratch.to_vec(), x: x_plus, c });
        }
        scratch[i] = theta[i] - c;
        let j_minus = obj.eval(scratch, x_minus);
        if !j_minus.is_finite() {
            return Err(Error::NonFinite { theta: scratch.to_vec(), x: x_minus, c });
        }
        scratch[i] = theta[i];
        out[i] = (j_plus - j_minus) / denom;
    }
    Ok(())
}

/// Reusable buffers so that stepping does not allocate.
#[derive(Debug, Clone)]
struct Workspace {
    scratch: Vec<f64>,
    h: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Self { scratch: vec![0.0; d], h: vec![0.0; d] }
    }

    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn step<O: StochasticObjective + ?Sized>(
        &mut self,
        obj: &O,
        state: &mut IterState,
        lambda: f64,
        c: f64,
        divisor: Divisor,
        direction: Direction,
        pairs: &[NoisePair],
    ) -> Result<()> {
        h_estimate_into(obj, &state.theta, pairs, c, divisor, &mut self.scratch, &mut self.h)?;
        let s = direction.sign() * lambda;
        for (t, h) in state.theta.iter_mut().zip(&self.h) {
            *t += s * h;
        }
        state.k += 1;
        Ok(())
    }
}

/// One decreasing-gain step, using schedule index `state.k + 1 + k0`.
pub fn step_decreasing<O: StochasticObjective + ?Sized>(
    state: &IterState,
    spec: &StepSpec,
    obj: &O,
    pairs: &[NoisePair],
) -> Result<IterState> {
    let Gain::Decreasing(_) = spec.gain else {
        return Err(Error::Config("step_decreasing needs a decreasing gain".into()));
    };
    let (lambda, c) = spec.gain.at_step(state.k + 1);
    let mut next = state.clone();
    Workspace::new(state.theta.len()).step(obj, &mut next, lambda, c, spec.divisor, spec.direction, pairs)?;
    Ok(next)
}

/// One fixed-gain step `θ ± a H(θ, X, c)`.
pub fn step_fixed<O: StochasticObjective + ?Sized>(
    state: &IterState,
    spec: &StepSpec,
    obj: &O,
    pairs: &[NoisePair],
) -> Result<IterState> {
    let Gain::Fixed(g) = spec.gain else {
        return Err(Error::Config("step_fixed needs a fixed gain".into()));
    };
    let mut next = state.clone();
    Workspace::new(state.theta.len()).step(obj, &mut next, g.a, g.c, spec.divisor, spec.direction, pairs)?;
    Ok(next)
}

/// Checkpointed iterates of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub checkpoints: Vec<u64>,
    /// `thetas[j]` is θ at `checkpoints[j]`; shorter than `checkpoints` when
    /// the path diverged first.
    pub thetas: Vec<Vec<f64>>,
    /// Step at which the iterate left the finite region, if it did.
    pub diverged_at: Option<u64>,
}

impl PathResult {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

pub(crate) fn check_checkpoints(checkpoints: &[u64], n_steps: u64) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("checkpoints must be strictly increasing".into()));
    }
    if checkpoints.last().is_some_and(|&k| k > n_steps) {
        return Err(Error::Config(format!("checkpoint beyond n_steps = {n_steps}")));
    }
    Ok(())
}

/// Iterates `spec` for `n_steps` from `theta0`, recording θ at each checkpoint.
pub fn run<O, S>(
    obj: &O,
    spec: &StepSpec,
    noise: &mut PairedNoise<S>,
    theta0: &[f64],
    n_steps: u64,
    checkpoints: &[u64],
) -> Result<PathResult>
where
    O: StochasticObjective + ?Sized,
    S: NoiseSource,
{
    spec.gain.validate().into_result()?;
    run_with_gains(obj, spec, &spec.gain, noise, theta0, n_steps, checkpoints)
}

/// [`run`] with the `(λ, c)` sequence supplied separately, e.g. a shared
/// [`GainTable`](crate::schedules::GainTable). `spec.gain` is ignored.
pub fn run_with_gains<O, S, G>(
    obj: &O,
    spec: &StepSpec,
    gains: &G,
    noise: &mut PairedNoise<S>,
    theta0: &[f64],
    n_steps: u64,
    checkpoints: &[u64],
) -> Result<PathResult>
where
    O: StochasticObjective + ?Sized,
    S: NoiseSource,
    G: GainSequence + ?Sized,
{
    let mut result = PathResult {
        checkpoints: checkpoints.to_vec(),
        thetas: Vec::with_capacity(checkpoints.len()),
        diverged_at: None,
    };
    walk(obj, spec, gains, noise, theta0, n_steps, checkpoints, |_, _| {}, &mut result)?;
    Ok(result)
}

/// Core loop shared by [`run_with_gains`] and the plateau study; `visit` sees
/// every post-step state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn walk<O, S, G, V>(
    obj: &O,
    spec: &StepSpec,
    gains: &G,
    noise: &mut PairedNoise<S>,
    theta0: &[f64],
    n_steps: u64,
    checkpoints: &[u64],
    mut visit: V,
    result: &mut PathResult,
) -> Result<()>
where
    O: StochasticObjective + ?Sized,
    S: NoiseSource,
    G: GainSequence + ?Sized,
    V: FnMut(u64, &[f64]),
{
    let d = obj.dim();
    if theta0.len() != d {
        return Err(Error::Config(format!("theta0 has length {}, objective d={d}", theta0.len())));
    }
    check_checkpoints(checkpoints, n_steps)?;

    let mut state = IterState::new(theta0.to_vec());
    let mut ws = Workspace::new(d);
    let mut pairs = vec![NoisePair { x_plus: 0.0, x_minus: 0.0 }; d];
    let mut next_cp = 0;
    if checkpoints.first() == Some(&0) {
        result.thetas.push(state.theta.clone());
        next_cp = 1;
    }
    if state.is_diverged() {
        result.diverged_at = Some(0);
        return Ok(());
    }

    for step in 1..=n_steps {
        // one pair per step, shared by all coordinates
        let pair = noise.next_pair();
        pairs.fill(pair);
        let (lambda, c) = gains.gains(step);
        match ws.step(obj, &mut state, lambda, c, spec.divisor, spec.direction, &pairs) {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => {
                result.diverged_at = Some(step);
                return Ok(());
            }
            Err(e) => return Err(e),
        }
        if state.is_diverged() {
            result.diverged_at = Some(step);
            return Ok(());
        }
        visit(step, &state.theta);
        if checkpoints.get(next_cp) == Some(&step) {
            result.thetas.push(state.theta.clone());
            next_cp += 1;
        }
    }
    Ok(())
}
