//! Seeded stationary noise processes and the pairing of the `±` draws.
//!
//! Every process is driven by a `ChaCha8Rng` seeded from a 64-bit seed, so a
//! `(model, seed, mode)` triple fully determines the sequence of pairs.
//! Normals come from `rand_distr::StandardNormal` (ziggurat); Beta(2,2) is
//! the median of three uniforms, whose density is exactly `6x(1−x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stationary marginal law of the measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    Normal {
        mean: f64,
        sd: f64,
    },
    #[serde(rename = "uniform01")]
    Uniform01,
    #[serde(rename = "beta22")]
    Beta22,
    /// `Y_{t+1} = κ Y_t + σ ε_{t+1}` with standard normal `ε`.
    Ar1 {
        kappa: f64,
        innovation_sd: f64,
    },
}

impl NoiseKind {
    pub fn standard_normal() -> Self {
        NoiseKind::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Normal { mean, sd } => {
                if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::Config(format!(
                        "normal noise needs finite mean and sd > 0 (mean={mean}, sd={sd})"
                    )));
                }
            }
            NoiseKind::Ar1 { kappa, innovation_sd } => {
                if !(kappa.abs() < 1.0) {
                    return Err(Error::Config(format!("ar1 needs |kappa| < 1, got {kappa}")));
                }
                if !(innovation_sd > 0.0 && innovation_sd.is_finite()) {
                    return Err(Error::Config(format!("ar1 needs innovation_sd > 0, got {innovation_sd}")));
                }
            }
            NoiseKind::Uniform01 | NoiseKind::Beta22 => {}
        }
        Ok(())
    }

    pub fn is_iid(&self) -> bool {
        !matches!(self, NoiseKind::Ar1 { .. })
    }

    /// Closed-form stationary `(E X, E X²)`.
    pub fn stationary_moments(&self) -> (f64, f64) {
        match *self {
            NoiseKind::Normal { mean, sd } => (mean, sd * sd + mean * mean),
            NoiseKind::Uniform01 => (0.5, 1.0 / 3.0),
            NoiseKind::Beta22 => (0.5, 0.3),
            NoiseKind::Ar1 { kappa, innovation_sd } => (0.0, innovation_sd * innovation_sd / (1.0 - kappa * kappa)),
        }
    }
}

/// A noise law together with the seed of its generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn stream(&self) -> Result<NoiseStream> {
        NoiseStream::new(self.kind, self.seed)
    }

    pub fn paired(&self, mode: PairingMode) -> Result<PairedNoise<NoiseStream>> {
        PairedNoise::new(self.stream()?, mode)
    }
}

pub fn stationary_moments(model: &NoiseModel) -> (f64, f64) {
    model.kind.stationary_moments()
}

/// How the draws for `J(θ + c eᵢ, ·)` and `J(θ − c eᵢ, ·)` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// Two independent realizations; only for i.i.d. sources.
    Independent,
    /// Common random numbers: one realization used for both evaluations.
    Identical,
    /// Two successive values of one path: `X_k = Y_{2k−1}`, `X'_k = Y_{2k}`.
    Consecutive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePair {
    pub x_plus: f64,
    pub x_minus: f64,
}

/// A scalar stationary process.
pub trait NoiseSource {
    fn draw(&mut self) -> f64;

    /// Whether successive draws are independent.
    fn is_iid(&self) -> bool;
}

/// Built-in generator for every [`NoiseKind`].
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    kind: NoiseKind,
    ar_state: f64,
}

impl NoiseStream {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ar_state = match kind {
            NoiseKind::Ar1 { kappa, innovation_sd } => {
                // start in the stationary law N(0, σ²/(1−κ²))
                let z: f64 = rng.sample(StandardNormal);
                z * innovation_sd / (1.0 - kappa * kappa).sqrt()
            }
            _ => 0.0,
        };
        Ok(Self { rng, kind, ar_state })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }
}

#[inline]
fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

impl NoiseSource for NoiseStream {
    #[inline]
    fn draw(&mut self) -> f64 {
        match self.kind {
            NoiseKind::Normal { mean, sd } => {
                let z: f64 = self.rng.sample(StandardNormal);
                mean + sd * z
            }
            NoiseKind::Uniform01 => self.rng.random::<f64>(),
            NoiseKind::Beta22 => {
                let a = self.rng.random::<f64>();
                let b = self.rng.random::<f64>();
                let c = self.rng.random::<f64>();
                median3(a, b, c)
            }
            NoiseKind::Ar1 { kappa, innovation_sd } => {
                let e: f64 = self.rng.sample(StandardNormal);
                self.ar_state = kappa * self.ar_state + innovation_sd * e;
                self.ar_state
            }
        }
    }

    fn is_iid(&self) -> bool {
        self.kind.is_iid()
    }
}

/// Adapter for user-supplied generators (e.g. a truncated moving average).
pub struct FnSource<F> {
    f: F,
    iid: bool,
}

impl<F: FnMut() -> f64> FnSource<F> {
    pub fn new(f: F, iid: bool) -> Self {
        Self { f, iid }
    }
}

impl<F: FnMut() -> f64> NoiseSource for FnSource<F> {
    fn draw(&mut self) -> f64 {
        (self.f)()
    }

    fn is_iid(&self) -> bool {
        self.iid
    }
}

/// A source plus a pairing rule; yields one [`NoisePair`] per call.
#[derive(Debug, Clone)]
pub struct PairedNoise<S> {
    source: S,
    mode: PairingMode,
}

impl<S: NoiseSource> PairedNoise<S> {
    pub fn new(source: S, mode: PairingMode) -> Result<Self> {
        if mode == PairingMode::Independent && !source.is_iid() {
            return Err(Error::Config(
                "independent pairing requires an i.i.d. noise source; use identical or consecutive".into(),
            ));
        }
        Ok(Self { source, mode })
    }

    pub fn mode(&self) -> PairingMode {
        self.mode
    }

    #[inline]
    pub fn next_pair(&mut self) -> NoisePair {
        match self.mode {
            PairingMode::Identical => {
                let x = self.source.draw();
                NoisePair { x_plus: x, x_minus: x }
            }
            PairingMode::Independent | PairingMode::Consecutive => {
                let x_plus = self.source.draw();
                let x_minus = self.source.draw();
                NoisePair { x_plus, x_minus }
            }
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for path `index` of an experiment with `master` seed.
///
/// `splitmix64(master ⊕ splitmix64(index))`: the inner finalizer scatters
/// consecutive indices over the whole 64-bit range before they are combined
/// with the master seed, and the outer one decorrelates the result.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}
