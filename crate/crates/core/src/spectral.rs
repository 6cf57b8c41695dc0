//! Fourier components of the phase-space density and their response to the
//! initial displacement.
//!
//! On the unit torus the wavevectors are `k = 2π (m1, m2)` and
//! `n_k = Σ_i exp(-i k·X_i)`; the probability-density component is
//! `ñ_k = n_k / N`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::{GasState, Trajectory};
use crate::maps::{CollisionModel, PhasePoint, TangentVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub m1: i32,
    pub m2: i32,
}

impl ModeIndex {
    pub const ZERO: ModeIndex = ModeIndex { m1: 0, m2: 0 };

    pub const fn new(m1: i32, m2: i32) -> Self {
        Self { m1, m2 }
    }

    /// `k = 2π (m1, m2)`.
    pub fn wavevector(&self) -> TangentVector {
        TangentVector::new(TAU * self.m1 as f64, TAU * self.m2 as f64)
    }

    pub fn is_zero(&self) -> bool {
        self.m1 == 0 && self.m2 == 0
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.m1, -self.m2)
    }

    /// Phase `k·X` reduced by integer turns before scaling, to keep the
    /// argument of `exp` small.
    #[inline]
    fn phase(&self, x: PhasePoint) -> f64 {
        let turns = self.m1 as f64 * x.x() + self.m2 as f64 * x.p();
        TAU * (turns - turns.round())
    }
}

/// All nonzero modes with `max(|m1|, |m2|) <= max`, ordered by `(m1, m2)`.
pub fn modes_up_to(max: i32) -> Vec<ModeIndex> {
    (-max..=max)
        .flat_map(|m1| (-max..=max).map(move |m2| ModeIndex::new(m1, m2)))
        .filter(|m| !m.is_zero())
        .collect()
}

/// `n_k = Σ_i exp(-i k·X_i)`.
pub fn fourier_component(points: &[PhasePoint], mode: ModeIndex) -> Complex64 {
    points
        .iter()
        .map(|&x| Complex64::from_polar(1.0, -mode.phase(x)))
        .sum()
}

/// `ñ_k = n_k / N`.
pub fn normalized_component(points: &[PhasePoint], mode: ModeIndex) -> Complex64 {
    fourier_component(points, mode) / points.len() as f64
}

/// Tangent-linear response `(-i/N) Σ_i exp(-i k·X_i) (k·dX_i)`.
pub fn linear_delta(points: &[PhasePoint], tangents: &[TangentVector], mode: ModeIndex) -> Complex64 {
    let k = mode.wavevector();
    let sum: Complex64 = points
        .iter()
        .zip(tangents)
        .filter(|(_, d)| !d.is_zero())
        .map(|(&x, d)| Complex64::from_polar(k.dot(d), -mode.phase(x)))
        .sum();
    Complex64::new(0.0, -1.0) * sum / points.len() as f64
}

/// Exact `ñ_k(perturbed) - ñ_k(reference)`, summed particle by particle so the
/// identical terms of untouched particles cancel exactly.
pub fn twin_delta(reference: &[PhasePoint], perturbed: &[PhasePoint], mode: ModeIndex) -> Result<Complex64> {
    if reference.len() != perturbed.len() {
        return Err(Error::Mismatch(format!(
            "reference has {} particles, perturbed has {}",
            reference.len(),
            perturbed.len()
        )));
    }
    let sum: Complex64 = reference
        .iter()
        .zip(perturbed)
        .filter(|(r, p)| r != p)
        .map(|(&r, &p)| Complex64::from_polar(1.0, -mode.phase(p)) - Complex64::from_polar(1.0, -mode.phase(r)))
        .sum();
    Ok(sum / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub mode: ModeIndex,
    /// `ñ_k(t)` of the reference gas.
    pub values: Vec<Complex64>,
    /// Tangent-linear `Δñ_k(t)`.
    pub linear_deltas: Vec<Complex64>,
    /// Twin difference `Δñ_k(t)`, when a perturbed trajectory exists.
    pub twin_deltas: Option<Vec<Complex64>>,
}

/// Builds the series for one mode from reference states and, optionally, the
/// perturbed points of a twin run under the same pairings.
pub fn delta_series_from(
    reference: &[&GasState],
    perturbed: Option<&[&[PhasePoint]]>,
    mode: ModeIndex,
) -> Result<SpectrumSeries> {
    if let Some(p) = perturbed {
        if p.len() != reference.len() {
            return Err(Error::Mismatch(format!(
                "reference has {} steps, perturbed has {}",
                reference.len(),
                p.len()
            )));
        }
    }
    if let Some(first) = reference.first() {
        if reference.iter().any(|s| s.len() != first.len()) {
            return Err(Error::Mismatch("particle count changes along the reference".into()));
        }
    }
    let values = reference.iter().map(|s| normalized_component(&s.points, mode)).collect();
    let linear_deltas = reference
        .iter()
        .map(|s| linear_delta(&s.points, &s.tangents, mode))
        .collect();
    let twin_deltas = match perturbed {
        Some(p) => Some(
            reference
                .iter()
                .zip(p)
                .map(|(s, pts)| twin_delta(&s.points, pts, mode))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(SpectrumSeries {
        mode,
        values,
        linear_deltas,
        twin_deltas,
    })
}

pub fn delta_series(trajectory: &Trajectory, mode: ModeIndex) -> Result<SpectrumSeries> {
    let reference: Vec<&GasState> = trajectory.frames.iter().map(|f| &f.state).collect();
    let twins: Option<Vec<&[PhasePoint]>> = trajectory
        .frames
        .iter()
        .map(|f| f.twin.as_deref())
        .collect();
    delta_series_from(&reference, twins.as_deref(), mode)
}

/// The exponent estimate split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub t: usize,
    /// `None` when the phase sum vanishes and the logarithm is singular.
    pub lambda: Option<f64>,
    pub term1: Option<f64>,
    /// `ln sqrt|kp km|`.
    pub term2: f64,
    /// The rounded value `ln 1.2`.
    pub term2_rounded: f64,
    pub degenerate: bool,
}

/// `ln sqrt|kp km|`, the per-step log-dilation of a typical path.
pub fn exponent_base(model: &CollisionModel) -> f64 {
    0.5 * model.mixed_dilation().ln()
}

/// Evaluates `(1/t) ln|S (k·ξ+) / N| + ln sqrt|kp km|` for a given phase sum `S`.
pub fn exponent_from_phase_sum(
    phase_sum: Complex64,
    k_dot_xi: f64,
    n_particles: usize,
    t: usize,
    model: &CollisionModel,
) -> Result<ExponentEstimate> {
    if t == 0 {
        return Err(Error::InvalidInput("exponent needs t >= 1".into()));
    }
    let term2 = exponent_base(model);
    let magnitude = (phase_sum * k_dot_xi / n_particles as f64).norm();
    let degenerate = magnitude == 0.0 || !magnitude.is_finite();
    let term1 = (!degenerate).then(|| magnitude.ln() / t as f64);
    Ok(ExponentEstimate {
        t,
        lambda: term1.map(|v| v + term2),
        term1,
        term2,
        term2_rounded: 1.2f64.ln(),
        degenerate,
    })
}

/// The exponent for `mode` at step `t`, with the phase sum over affected particles.
pub fn exponent_estimate(
    state: &GasState,
    mode: ModeIndex,
    model: &CollisionModel,
    t: usize,
) -> Result<ExponentEstimate> {
    if mode.is_zero() {
        return Err(Error::InvalidInput("exponent needs a nonzero mode".into()));
    }
    let phase_sum: Complex64 = state
        .points
        .iter()
        .zip(&state.affected)
        .filter(|(_, &a)| a)
        .map(|(&x, _)| Complex64::from_polar(1.0, -mode.phase(x)))
        .sum();
    let k_dot_xi = mode.wavevector().dot(&model.xi_plus);
    exponent_from_phase_sum(phase_sum, k_dot_xi, state.len(), t, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(t, ln|deltas[t]|)` for `t` in `[from, to]`.
pub fn fit_growth(deltas: &[Complex64], window: (usize, usize)) -> Result<GrowthFit> {
    let (from, to) = window;
    if to < from + 3 {
        return Err(Error::InvalidInput(format!(
            "fit window [{from}, {to}] must span at least 3 steps"
        )));
    }
    if to >= deltas.len() {
        return Err(Error::InvalidInput(format!(
            "fit window ends at {to} but the series has {} points",
            deltas.len()
        )));
    }
    let mut pts = Vec::with_capacity(to - from + 1);
    for (t, d) in deltas.iter().enumerate().take(to + 1).skip(from) {
        let m = d.norm();
        if m == 0.0 || !m.is_finite() {
            return Err(Error::InvalidInput(format!("|delta| is zero at t = {t}")));
        }
        pts.push((t as f64, m.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(GrowthFit { slope, intercept, r2 })
}

/// Default fit window `[2, min(t_saturation, ceil log2 N)]`, clipped to the run.
pub fn default_window(n_particles: usize, saturation: Option<usize>, steps: usize) -> (usize, usize) {
    let log2n = (n_particles as f64).log2().ceil() as usize;
    let end = saturation.map_or(log2n, |s| s.min(log2n)).min(steps);
    (2, end)
}
