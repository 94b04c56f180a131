//! Reference integrator for the mean-field ODEs `ẏ = (λ₀/t) G(y)` and
//! `ẏ = λ G(y)`, plus an empirical probe of how fast the flow forgets its
//! initial condition.

use std::cell::Cell;

use crate::harness::linear_fit;
use crate::{Error, Result};

/// Which mean-field equation to integrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanField {
    /// `ẏ = (λ₀/t) G(y)`, the limit of the decreasing-gain scheme.
    Decreasing { lambda0: f64 },
    /// `ẏ = λ G(y)`, the limit of the fixed-gain scheme.
    Fixed { lambda: f64 },
}

impl MeanField {
    #[inline]
    fn coefficient(&self, t: f64) -> f64 {
        match *self {
            MeanField::Decreasing { lambda0 } => lambda0 / t,
            MeanField::Fixed { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub variant: MeanField,
}

impl OdeSolution {
    pub fn final_value(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order minus embedded fourth-order weights
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

const MAX_STEPS: usize = 10_000_000;

/// Integrates `ẏ = coef(t) G(y)` from `(s, xi)` to `t_end` with adaptive
/// Dormand–Prince steps. A step is accepted when every component's local
/// error estimate is below `tol · (1 + |y|)`.
pub fn integrate<G>(g: G, variant: MeanField, s: f64, t_end: f64, xi: &[f64], tol: f64) -> Result<OdeSolution>
where
    G: Fn(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {tol}")));
    }
    if !(t_end > s) || !s.is_finite() || !t_end.is_finite() {
        return Err(Error::Domain(format!("need finite s < t_end, got [{s}, {t_end}]")));
    }
    if matches!(variant, MeanField::Decreasing { .. }) && !(s > 0.0) {
        return Err(Error::Domain("decreasing-gain mean field needs s > 0".into()));
    }

    let d = xi.len();
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| {
        g(y, out);
        let k = variant.coefficient(t);
        out.iter_mut().for_each(|v| *v *= k);
    };

    let mut grid = vec![s];
    let mut values = vec![xi.to_vec()];
    let mut t = s;
    let mut y = xi.to_vec();
    let mut k = vec![vec![0.0; d]; 7];
    let mut stage = vec![0.0; d];
    let mut y_new = vec![0.0; d];
    rhs(t, &y, &mut k[0]);

    let span = t_end - s;
    let mut h = 1e-3 * span.min(s.abs().max(1.0));
    for _ in 0..MAX_STEPS {
        if t >= t_end {
            return Ok(OdeSolution { grid, values, variant });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for i in 1..7 {
            for j in 0..d {
                let mut acc = y[j];
                for (m, km) in k.iter().enumerate().take(i) {
                    acc += h * A[i][m] * km[j];
                }
                stage[j] = acc;
            }
            rhs(t + C[i] * h, &stage, &mut k[i]);
        }
        // stage 7 was evaluated at the fifth-order solution itself
        y_new.copy_from_slice(&stage);

        let mut err: f64 = 0.0;
        for j in 0..d {
            let e: f64 = (0..7).map(|m| E[m] * k[m][j]).sum::<f64>() * h;
            let scale = tol * h * (1.0 + y[j].abs().max(y_new[j].abs()));
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Integration(format!("non-finite state near t = {t}")));
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            grid.push(t);
            values.push(y.clone());
            // first-same-as-last
            k.swap(0, 6);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.25)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration(format!("step size underflow at t = {t}")));
        }
    }
    Err(Error::Integration(format!("exceeded {MAX_STEPS} steps")))
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<G>(g: G, variant: MeanField, s: f64, t_end: f64, xi: f64, tol: f64) -> Result<OdeSolution>
where
    G: Fn(f64) -> f64,
{
    integrate(|y, out| out[0] = g(y[0]), variant, s, t_end, &[xi], tol)
}

/// Form of the contraction that was fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayLaw {
    /// `r(t) ≈ C* (s/t)^α`, decreasing-gain flow.
    Polynomial,
    /// `r(t) ≈ C* e^{−α (t−s)}`, fixed-gain flow; the polynomial fit does not apply.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityEstimate {
    pub alpha_hat: f64,
    pub cstar_hat: f64,
    pub law: DecayLaw,
    /// The separation between the two trajectories was lost to rounding;
    /// `alpha_hat` is then `+∞`.
    pub underflow: bool,
}

pub const STABILITY_TOL: f64 = 1e-10;

/// Estimates the decay of `|∂y(t, s, ξ)/∂ξ|` from two trajectories started at
/// `ξ` and `ξ + d_xi`, integrated together so they share one step sequence.
/// The pair is carried as `(y, ln r)` and the separation is renormalized to
/// `d_xi` at every evaluation, as in Lyapunov-exponent estimation, so `r`
/// stays resolved long after the raw separation would drop below the
/// integration tolerance.
/// The fit uses the second half of the accepted grid.
pub fn estimate_stability<G>(
    g: G,
    variant: MeanField,
    s: f64,
    t_end: f64,
    xi: f64,
    d_xi: f64,
) -> Result<StabilityEstimate>
where
    G: Fn(f64) -> f64,
{
    if !(d_xi > 0.0) {
        return Err(Error::Domain(format!("d_xi must be > 0, got {d_xi}")));
    }
    let lost = Cell::new((xi + d_xi) - xi == 0.0);
    let sol = integrate(
        |v, out| {
            let gap = (v[0] + d_xi) - v[0];
            if gap == 0.0 {
                lost.set(true);
                out[0] = g(v[0]);
                out[1] = 0.0;
                return;
            }
            let g0 = g(v[0]);
            out[0] = g0;
            out[1] = (g(v[0] + d_xi) - g0) / gap;
        },
        variant,
        s,
        t_end,
        &[xi, 0.0],
        STABILITY_TOL,
    )?;
    let law = match variant {
        MeanField::Decreasing { .. } => DecayLaw::Polynomial,
        MeanField::Fixed { .. } => DecayLaw::Exponential,
    };

    if lost.get() {
        return Ok(StabilityEstimate { alpha_hat: f64::INFINITY, cstar_hat: 0.0, law, underflow: true });
    }
    let start = sol.grid.len() / 2;
    let xs: Vec<f64> = sol.grid[start..]
        .iter()
        .map(|t| match law {
            DecayLaw::Polynomial => (s / t).ln(),
            DecayLaw::Exponential => -(t - s),
        })
        .collect();
    let ys: Vec<f64> = sol.values[start..].iter().map(|v| v[1]).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(StabilityEstimate { alpha_hat: fit.slope, cstar_hat: fit.intercept.exp(), law, underflow: false })
}
