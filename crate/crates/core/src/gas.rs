//! Full N-particle gas with one collision per particle per step.
//!
//! Every step draws a pairing, collides each pair and pushes the displacement
//! of every particle through the linearised pair map. A twin copy of the gas,
//! started from the same points with particle 0 moved by the initial
//! displacement, can be evolved under the identical pairings for comparison.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{torus_diff, CollisionModel, PhasePoint, TangentVector};
use crate::tree::PathLabel;

/// Generator used for initial points and pairings.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9)";

/// Twin simulation is refused above this many particles by default.
pub const DEFAULT_TWIN_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Uniformly random perfect matching.
    Random,
    /// Affected particles meet fresh unaffected partners while any remain.
    TreeFaithful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_particles: usize,
    pub steps: usize,
    pub epsilon: f64,
    /// Initial displacement direction; `None` means `xi_plus`.
    pub direction: Option<TangentVector>,
    pub seed: u64,
    pub pairing: Pairing,
    pub twin: bool,
    pub twin_cap: usize,
}

impl RunConfig {
    pub fn new(n_particles: usize, steps: usize, seed: u64, pairing: Pairing) -> Self {
        Self {
            n_particles,
            steps,
            epsilon: 1e-9,
            direction: None,
            seed,
            pairing,
            twin: false,
            twin_cap: DEFAULT_TWIN_CAP,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_twin(mut self, twin: bool) -> Self {
        self.twin = twin;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 particles, got {}",
                self.n_particles
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if let Some(d) = self.direction {
            if d.is_zero() || !d.is_finite() {
                return Err(Error::InvalidInput("direction must be nonzero".into()));
            }
        }
        if self.twin && self.n_particles > self.twin_cap {
            return Err(Error::Budget(format!(
                "twin simulation of {} particles exceeds the cap of {}",
                self.n_particles, self.twin_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasState {
    pub points: Vec<PhasePoint>,
    pub tangents: Vec<TangentVector>,
    pub affected: Vec<bool>,
    pub path_counts: Vec<PathLabel>,
    pub t: usize,
}

impl GasState {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn affected_count(&self) -> usize {
        self.affected.iter().filter(|&&a| a).count()
    }

    /// `sqrt(sum |dX_i|^2)` over the whole gas.
    pub fn tangent_norm(&self) -> f64 {
        self.tangents.iter().map(TangentVector::norm_sq).sum::<f64>().sqrt()
    }
}

/// Draws N uniform points; particle 0 carries `epsilon * direction`.
pub fn init_gas(config: &RunConfig, model: &CollisionModel, rng: &mut ChaCha8Rng) -> Result<GasState> {
    config.validate()?;
    let n = config.n_particles;
    let points = (0..n)
        .map(|_| PhasePoint::new(rng.random(), rng.random()))
        .collect();
    let mut tangents = vec![TangentVector::ZERO; n];
    tangents[0] = config.direction.unwrap_or(model.xi_plus) * config.epsilon;
    let mut affected = vec![false; n];
    affected[0] = true;
    Ok(GasState {
        points,
        tangents,
        affected,
        path_counts: vec![PathLabel::default(); n],
        t: 0,
    })
}

/// Pairs for one step. With an odd count, one particle sits the step out.
pub fn draw_pairs(state: &GasState, pairing: Pairing, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = state.len();
    match pairing {
        Pairing::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks_exact(2).map(|c| (c[0], c[1])).collect()
        }
        Pairing::TreeFaithful => {
            let (affected, mut fresh): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| state.affected[i]);
            fresh.shuffle(rng);
            let matched = affected.len().min(fresh.len());
            let mut pairs: Vec<(usize, usize)> =
                affected[..matched].iter().copied().zip(fresh[..matched].iter().copied()).collect();
            let mut rest: Vec<usize> = affected[matched..]
                .iter()
                .chain(&fresh[matched..])
                .copied()
                .collect();
            rest.shuffle(rng);
            pairs.extend(rest.chunks_exact(2).map(|c| (c[0], c[1])));
            pairs
        }
    }
}

/// Collides every pair and propagates tangents, flags and path labels.
pub fn apply_pairs(state: &mut GasState, model: &CollisionModel, pairs: &[(usize, usize)]) {
    use crate::maps::Role::{Direct, Switch};
    for &(a, b) in pairs {
        let (pa, pb) = model.collide(state.points[a], state.points[b]);
        state.points[a] = pa;
        state.points[b] = pb;

        let (da, db) = model.collide_tangents(state.tangents[a], state.tangents[b]);
        state.tangents[a] = da;
        state.tangents[b] = db;

        // An affected particle keeps its own path (direct); a newly affected
        // particle inherits its partner's path through a switch.
        let (la, lb) = (state.path_counts[a], state.path_counts[b]);
        match (state.affected[a], state.affected[b]) {
            (true, true) => {
                state.path_counts[a] = la.after(Direct);
                state.path_counts[b] = lb.after(Direct);
            }
            (true, false) => {
                state.path_counts[a] = la.after(Direct);
                state.path_counts[b] = la.after(Switch);
                state.affected[b] = true;
            }
            (false, true) => {
                state.path_counts[b] = lb.after(Direct);
                state.path_counts[a] = lb.after(Switch);
                state.affected[a] = true;
            }
            (false, false) => {}
        }
    }
    state.t += 1;
}

/// Point-only collisions for the twin copy.
pub fn apply_pairs_to_points(points: &mut [PhasePoint], model: &CollisionModel, pairs: &[(usize, usize)]) {
    for &(a, b) in pairs {
        let (pa, pb) = model.collide(points[a], points[b]);
        points[a] = pa;
        points[b] = pb;
    }
}

/// Draws a pairing and applies it.
pub fn step(state: &mut GasState, model: &CollisionModel, rng: &mut ChaCha8Rng, pairing: Pairing) {
    let pairs = draw_pairs(state, pairing, rng);
    apply_pairs(state, model, &pairs);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: usize,
    pub affected: usize,
    pub norm: f64,
    pub max_disp: f64,
    pub median_disp: f64,
    /// Whole-gas minimal-image distance between twin and reference.
    pub twin_distance: Option<f64>,
    /// `|twin difference - tangents| / |tangents|` over the whole gas.
    pub twin_discrepancy: Option<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn diagnose(state: &GasState, twin: Option<&[PhasePoint]>) -> StepDiagnostics {
    let mut disps: Vec<f64> = state.tangents.iter().map(TangentVector::norm).collect();
    let max_disp = disps.iter().copied().fold(0.0, f64::max);
    let norm = state.tangent_norm();
    let (twin_distance, twin_discrepancy) = match twin {
        Some(twin) => {
            let (mut dist_sq, mut err_sq) = (0.0, 0.0);
            for ((p, r), d) in twin.iter().zip(&state.points).zip(&state.tangents) {
                let diff = torus_diff(*p, *r);
                dist_sq += diff.norm_sq();
                err_sq += (diff - *d).norm_sq();
            }
            (Some(dist_sq.sqrt()), Some(err_sq.sqrt() / norm))
        }
        None => (None, None),
    };
    StepDiagnostics {
        t: state.t,
        affected: state.affected_count(),
        norm,
        max_disp,
        median_disp: median(&mut disps),
        twin_distance,
        twin_discrepancy,
    }
}

/// A gas run in progress: reference state, optional twin, and the generator.
pub struct GasRun {
    model: CollisionModel,
    config: RunConfig,
    state: GasState,
    twin: Option<Vec<PhasePoint>>,
    rng: ChaCha8Rng,
}

impl GasRun {
    pub fn new(config: &RunConfig, model: &CollisionModel) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = init_gas(config, model, &mut rng)?;
        let twin = config.twin.then(|| {
            let mut pts = state.points.clone();
            pts[0] = pts[0].displaced(state.tangents[0]);
            pts
        });
        Ok(Self {
            model: model.clone(),
            config: config.clone(),
            state,
            twin,
            rng,
        })
    }

    pub fn state(&self) -> &GasState {
        &self.state
    }

    pub fn twin(&self) -> Option<&[PhasePoint]> {
        self.twin.as_deref()
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> StepDiagnostics {
        diagnose(&self.state, self.twin())
    }

    pub fn advance(&mut self) {
        let pairs = draw_pairs(&self.state, self.config.pairing, &mut self.rng);
        apply_pairs(&mut self.state, &self.model, &pairs);
        if let Some(twin) = self.twin.as_mut() {
            apply_pairs_to_points(twin, &self.model, &pairs);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub state: GasState,
    pub twin: Option<Vec<PhasePoint>>,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: RunConfig,
    /// `frames[t]` is the gas after `t` steps, for `t = 0..=steps`.
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn diagnostics(&self) -> Vec<StepDiagnostics> {
        self.frames.iter().map(|f| f.diagnostics).collect()
    }

    pub fn significance_time(&self) -> Option<usize> {
        significance_time(&self.diagnostics(), self.config.epsilon)
    }

    pub fn saturation_time(&self) -> Option<usize> {
        saturation_time(&self.diagnostics(), self.config.n_particles)
    }
}

/// Evolves the gas for `config.steps` steps, calling `observe` on the initial
/// state and after every step. Returns the per-step diagnostics.
pub fn run_observed(
    config: &RunConfig,
    model: &CollisionModel,
    mut observe: impl FnMut(&GasRun, &StepDiagnostics),
) -> Result<Vec<StepDiagnostics>> {
    let mut run = GasRun::new(config, model)?;
    let mut out = Vec::with_capacity(config.steps + 1);
    for i in 0..=config.steps {
        if i > 0 {
            run.advance();
        }
        let diag = run.diagnostics();
        observe(&run, &diag);
        out.push(diag);
    }
    Ok(out)
}

/// Evolves the gas and keeps every intermediate state.
pub fn run_paired(config: &RunConfig, model: &CollisionModel) -> Result<Trajectory> {
    let mut frames = Vec::with_capacity(config.steps + 1);
    run_observed(config, model, |run, diag| {
        frames.push(Frame {
            state: run.state().clone(),
            twin: run.twin().map(<[PhasePoint]>::to_vec),
            diagnostics: *diag,
        })
    })?;
    Ok(Trajectory {
        config: config.clone(),
        frames,
    })
}

/// First step at which the median particle displacement reaches `epsilon`.
pub fn significance_time(diagnostics: &[StepDiagnostics], epsilon: f64) -> Option<usize> {
    diagnostics.iter().find(|d| d.median_disp >= epsilon).map(|d| d.t)
}

/// First step at which every particle is affected.
pub fn saturation_time(diagnostics: &[StepDiagnostics], n_particles: usize) -> Option<usize> {
    diagnostics.iter().find(|d| d.affected >= n_particles).map(|d| d.t)
}

/// Least-squares slope of `ln(norm)` over steps `[from, to]`.
pub fn norm_growth_exponent(diagnostics: &[StepDiagnostics], from: usize, to: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = diagnostics
        .iter()
        .filter(|d| d.t >= from && d.t <= to && d.norm > 0.0)
        .map(|d| (d.t as f64, d.norm.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CollisionModel {
        CollisionModel::cat()
    }

    #[test]
    fn init_is_deterministic_and_singly_affected() {
        let cfg = RunConfig::new(2, 0, 17, Pairing::Random).with_epsilon(1e-3);
        let a = GasRun::new(&cfg, &model()).unwrap();
        let b = GasRun::new(&cfg, &model()).unwrap();
        assert_eq!(a.state(), b.state());
        for n in [2, 3, 50] {
            let cfg = RunConfig::new(n, 0, 3, Pairing::Random).with_epsilon(1e-3);
            let run = GasRun::new(&cfg, &model()).unwrap();
            assert_eq!(run.state().affected_count(), 1);
            let total: f64 = run.state().tangents.iter().map(TangentVector::norm).sum();
            assert!((total - 1e-3).abs() < 1e-18);
            assert!(run.state().points.iter().all(|p| (0.0..1.0).contains(&p.x()) && (0.0..1.0).contains(&p.p())));
        }
    }

    #[test]
    fn init_rejects_bad_configs() {
        let m = model();
        assert!(matches!(GasRun::new(&RunConfig::new(1, 0, 0, Pairing::Random), &m), Err(Error::InvalidInput(_))));
        let cfg = RunConfig::new(4, 0, 0, Pairing::Random).with_epsilon(0.0);
        assert!(GasRun::new(&cfg, &m).is_err());
        let mut cfg = RunConfig::new(100, 0, 0, Pairing::Random).with_twin(true);
        cfg.twin_cap = 64;
        assert!(matches!(GasRun::new(&cfg, &m), Err(Error::Budget(_))));
    }

    #[test]
    fn zero_tangents_stay_zero() {
        let m = model();
        let cfg = RunConfig::new(16, 0, 5, Pairing::Random);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = init_gas(&cfg, &m, &mut rng).unwrap();
        state.tangents.iter_mut().for_each(|t| *t = TangentVector::ZERO);
        for _ in 0..10 {
            step(&mut state, &m, &mut rng, Pairing::Random);
        }
        assert!(state.tangents.iter().all(TangentVector::is_zero));
        let diags = vec![diagnose(&state, None)];
        assert_eq!(significance_time(&diags, 1e-9), None);
    }

    #[test]
    fn two_particles_collide_every_step() {
        let cfg = RunConfig::new(2, 3, 11, Pairing::Random).with_epsilon(1e-6);
        let traj = run_paired(&cfg, &model()).unwrap();
        assert_eq!(traj.frames[1].diagnostics.affected, 2);
        // After one step: |kp| eps and |km| eps; their mean 1.309 eps is the median.
        let d1 = traj.frames[1].diagnostics;
        assert!((d1.median_disp / 1e-6 - 1.309_016_994_4).abs() < 1e-9);
        assert!((d1.max_disp / 1e-6 - 1.809_016_994_4).abs() < 1e-9);
        assert_eq!(traj.significance_time(), Some(1));
    }

    #[test]
    fn steps_zero_has_norm_epsilon() {
        let cfg = RunConfig::new(8, 0, 1, Pairing::Random).with_epsilon(2e-7);
        let traj = run_paired(&cfg, &model()).unwrap();
        assert_eq!(traj.frames.len(), 1);
        assert!((traj.frames[0].diagnostics.norm - 2e-7).abs() < 1e-22);
    }

    #[test]
    fn odd_particle_count_idles_one() {
        let cfg = RunConfig::new(7, 0, 1, Pairing::Random);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = init_gas(&cfg, &model(), &mut rng).unwrap();
        for pairing in [Pairing::Random, Pairing::TreeFaithful] {
            let pairs = draw_pairs(&state, pairing, &mut rng);
            assert_eq!(pairs.len(), 3);
            let mut used: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            used.sort();
            used.dedup();
            assert_eq!(used.len(), 6);
        }
    }

    #[test]
    fn conserves_count_and_pair_sums() {
        let m = model();
        let cfg = RunConfig::new(32, 0, 9, Pairing::Random);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = init_gas(&cfg, &m, &mut rng).unwrap();
        for _ in 0..8 {
            let before = state.points.clone();
            let pairs = draw_pairs(&state, Pairing::Random, &mut rng);
            apply_pairs(&mut state, &m, &pairs);
            assert_eq!(state.len(), 32);
            assert_eq!(state.tangents.len(), 32);
            for &(a, b) in &pairs {
                let s0 = PhasePoint::new(before[a].x() + before[b].x(), before[a].p() + before[b].p());
                let s1 = PhasePoint::new(
                    state.points[a].x() + state.points[b].x(),
                    state.points[a].p() + state.points[b].p(),
                );
                assert!(torus_diff(s0, s1).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn affected_growth_is_bounded_and_monotone() {
        let m = model();
        for pairing in [Pairing::Random, Pairing::TreeFaithful] {
            let cfg = RunConfig::new(100, 12, 21, pairing);
            let traj = run_paired(&cfg, &m).unwrap();
            for w in traj.frames.windows(2) {
                for (a, b) in w[0].state.affected.iter().zip(&w[1].state.affected) {
                    assert!(!a || *b);
                }
            }
            for f in &traj.frames {
                let t = f.diagnostics.t;
                let cap = if t >= 63 { usize::MAX } else { 1usize << t };
                assert!(f.diagnostics.affected <= cap.min(100));
            }
        }
    }

    #[test]
    fn tree_faithful_doubles_exactly() {
        let cfg = RunConfig::new(1024, 12, 4, Pairing::TreeFaithful);
        let traj = run_paired(&cfg, &model()).unwrap();
        for f in &traj.frames {
            let t = f.diagnostics.t;
            if t <= 10 {
                assert_eq!(f.diagnostics.affected, 1 << t);
            }
        }
        assert_eq!(traj.saturation_time(), Some(10));
        assert_eq!(traj.significance_time(), Some(10));
    }

    #[test]
    fn tree_faithful_labels_follow_the_tree() {
        let m = model();
        let cfg = RunConfig::new(256, 8, 2, Pairing::TreeFaithful).with_epsilon(1.0);
        let traj = run_paired(&cfg, &m).unwrap();
        let last = &traj.frames[8].state;
        let mut hist = [0usize; 9];
        for (label, d) in last.path_counts.iter().zip(&last.tangents) {
            assert_eq!(label.stages(), 8);
            hist[label.n1 as usize] += 1;
            let want = crate::tree::path_dilation(&m, *label);
            assert!((d.norm() / want - 1.0).abs() < 1e-12);
        }
        assert_eq!(hist, [1, 8, 28, 56, 70, 56, 28, 8, 1]);
    }

    #[test]
    fn tangents_agree_with_twin() {
        let m = model();
        for pairing in [Pairing::Random, Pairing::TreeFaithful] {
            for seed in 0..5 {
                let cfg = RunConfig::new(64, 10, seed, pairing).with_twin(true);
                let traj = run_paired(&cfg, &m).unwrap();
                for f in &traj.frames {
                    let disc = f.diagnostics.twin_discrepancy.unwrap();
                    assert!(disc < 1e-4, "{pairing:?} seed {seed} t {}: {disc}", f.diagnostics.t);
                }
            }
        }
    }

    #[test]
    fn bit_identical_reruns() {
        let cfg = RunConfig::new(128, 15, 77, Pairing::Random).with_twin(true);
        let a = run_paired(&cfg, &model()).unwrap();
        let b = run_paired(&cfg, &model()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn median_definition() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
