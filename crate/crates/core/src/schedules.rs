//! Gain and perturbation sequences.
//!
//! The decreasing-gain scheme uses `λ_k = λ₀ ∫_k^{k+1} du/u = λ₀ ln(1 + 1/k)` and
//! `c_k = c₀ k^(−γ)` with `γ ∈ (0, 1/3)` and `c₀ ∈ (0, 1]`. For this family the
//! bounds on `γ` are exactly what makes `Σ λ_k = ∞` and `Σ λ_k² c_k⁻² < ∞` hold.
//! The fixed-gain scheme uses constants `(a, c)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Decreasing gain `λ_k = λ₀ ln(1 + 1/k)`, perturbation `c_k = c₀ k^(−γ)`.
///
/// `k0` is an index offset applied by callers that iterate the scheme (the
/// experiments start the schedule at `k0 + 1`); the sequence functions
/// themselves take the already-shifted index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecreasingGain {
    pub lambda0: f64,
    pub c0: f64,
    pub gamma: f64,
    #[serde(default)]
    pub k0: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedGain {
    pub a: f64,
    pub c: f64,
}

/// A condition violated by a schedule parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    GammaOutOfRange,
    C0NotPositive,
    C0AboveOne,
    Lambda0NotPositive,
    StepNotPositive,
    PerturbationNotPositive,
    PerturbationAboveOne,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            Violation::GammaOutOfRange => "gamma outside (0,1/3)",
            Violation::C0NotPositive => "c0 <= 0",
            Violation::C0AboveOne => "c0 > 1",
            Violation::Lambda0NotPositive => "lambda0 <= 0",
            Violation::StepNotPositive => "a <= 0",
            Violation::PerturbationNotPositive => "c <= 0",
            Violation::PerturbationAboveOne => "c > 1",
        };
        f.write_str(msg)
    }
}

/// Outcome of [`DecreasingGain::validate`] / [`FixedGain::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Config(self.to_string()))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

// NaN fails every comparison below, so it is reported as out of range.
fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl DecreasingGain {
    pub fn new(lambda0: f64, c0: f64, gamma: f64, k0: u64) -> Result<Self> {
        let sched = Self { lambda0, c0, gamma, k0 };
        sched.validate().into_result()?;
        Ok(sched)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0 / 3.0) {
            violations.push(Violation::GammaOutOfRange);
        }
        if !positive(self.c0) {
            violations.push(Violation::C0NotPositive);
        } else if self.c0 > 1.0 {
            violations.push(Violation::C0AboveOne);
        }
        if !positive(self.lambda0) {
            violations.push(Violation::Lambda0NotPositive);
        }
        ValidationReport { violations }
    }

    /// `λ₀ ln((k+1)/k)`.
    pub fn lambda_at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::Domain("gain index must be >= 1".into()));
        }
        Ok(self.lambda_unchecked(k))
    }

    /// `c₀ k^(−γ)`.
    pub fn c_at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::Domain("perturbation index must be >= 1".into()));
        }
        Ok(self.c_unchecked(k))
    }

    #[inline]
    pub(crate) fn lambda_unchecked(&self, k: u64) -> f64 {
        self.lambda0 * (1.0 / k as f64).ln_1p()
    }

    #[inline]
    pub(crate) fn c_unchecked(&self, k: u64) -> f64 {
        self.c0 * (k as f64).powf(-self.gamma)
    }
}

impl FixedGain {
    pub fn new(a: f64, c: f64) -> Result<Self> {
        let g = Self { a, c };
        g.validate().into_result()?;
        Ok(g)
    }

    /// Couples the perturbation to the step as `c = a^(1/5)`, which balances
    /// the bias term `c²` against the noise term `√(a/c)`.
    pub fn coupled(a: f64) -> Result<Self> {
        if !positive(a) {
            return Err(Error::Domain(format!("fixed gain a must be > 0, got {a}")));
        }
        Self::new(a, a.powf(0.2))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if !positive(self.a) {
            violations.push(Violation::StepNotPositive);
        }
        if !positive(self.c) {
            violations.push(Violation::PerturbationNotPositive);
        } else if self.c > 1.0 {
            violations.push(Violation::PerturbationAboveOne);
        }
        ValidationReport { violations }
    }
}

/// `coupled_fixed_gain(a)`: fixed gain with `c = a^(1/5)`.
pub fn coupled_fixed_gain(a: f64) -> Result<FixedGain> {
    FixedGain::coupled(a)
}

/// Either schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gain {
    Decreasing(DecreasingGain),
    Fixed(FixedGain),
}

impl Gain {
    pub fn validate(&self) -> ValidationReport {
        match self {
            Gain::Decreasing(g) => g.validate(),
            Gain::Fixed(g) => g.validate(),
        }
    }

    /// Step size and perturbation used for the `step`-th iteration
    /// (`step ≥ 1`). The decreasing schedule is evaluated at `step + k0`.
    #[inline]
    pub fn at_step(&self, step: u64) -> (f64, f64) {
        match self {
            Gain::Decreasing(g) => {
                let k = step + g.k0;
                (g.lambda_unchecked(k), g.c_unchecked(k))
            }
            Gain::Fixed(g) => (g.a, g.c),
        }
    }
}

/// Something that yields `(step size, perturbation)` for each 1-based step.
pub trait GainSequence {
    fn gains(&self, step: u64) -> (f64, f64);
}

impl GainSequence for Gain {
    #[inline]
    fn gains(&self, step: u64) -> (f64, f64) {
        self.at_step(step)
    }
}

/// Precomputed `(λ, c)` pairs for steps `1..=len`, bit-identical to
/// [`Gain::at_step`]. Shared read-only across Monte Carlo paths so the
/// transcendental evaluations are paid once per experiment.
#[derive(Debug, Clone)]
pub struct GainTable {
    gain: Gain,
    values: Vec<(f64, f64)>,
}

impl GainTable {
    pub fn new(gain: Gain, len: u64) -> Self {
        let values = match gain {
            Gain::Fixed(_) => Vec::new(),
            Gain::Decreasing(_) => (1..=len).map(|s| gain.at_step(s)).collect(),
        };
        Self { gain, values }
    }

    pub fn gain(&self) -> &Gain {
        &self.gain
    }
}

impl GainSequence for GainTable {
    #[inline]
    fn gains(&self, step: u64) -> (f64, f64) {
        match self.values.get((step as usize).wrapping_sub(1)) {
            Some(&v) => v,
            None => self.gain.at_step(step),
        }
    }
}
