//! Staged doubling collision tree.
//!
//! At stage `s` every particle of the influenced subsystem meets a fresh
//! particle from outside it, so the subsystem doubles. Leaf `j` of stage `s`
//! keeps its index; its fresh partner gets index `j + 2^s`. The incumbent picks
//! up the direct factor `K+`, the newcomer the switch factor `K-`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{torus_diff, CollisionModel, PhasePoint, Role, TangentVector};

/// Largest stage count for which leaves are stored explicitly, by default.
pub const DEFAULT_MAX_STAGES: u32 = 24;

/// Counts of direct (`n1`) and switch (`n2`) collisions along a path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathLabel {
    pub n1: u32,
    pub n2: u32,
}

impl PathLabel {
    pub fn new(n1: u32, n2: u32) -> Self {
        Self { n1, n2 }
    }

    pub fn stages(&self) -> u32 {
        self.n1 + self.n2
    }

    pub fn after(self, role: Role) -> Self {
        match role {
            Role::Direct => Self::new(self.n1 + 1, self.n2),
            Role::Switch => Self::new(self.n1, self.n2 + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub label: PathLabel,
    pub displacement: TangentVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Refuse to store leaves beyond this many stages.
    pub max_stages: u32,
    /// Size of the particle reservoir; `None` means unlimited.
    pub reservoir_size: Option<u64>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            max_stages: DEFAULT_MAX_STAGES,
            reservoir_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRun {
    /// Requested number of stages.
    pub stages: u32,
    /// Stages actually expanded; less than `stages` only when the reservoir ran out.
    pub stages_completed: u32,
    pub epsilon: f64,
    pub direction: TangentVector,
    pub leaves: Vec<Leaf>,
    pub reservoir_size: Option<u64>,
    /// First stage that would have needed more particles than the reservoir holds.
    pub saturated_at: Option<u32>,
}

/// Expands the collision tree for `stages` stages from `epsilon * direction`.
pub fn run_tree(
    model: &CollisionModel,
    stages: u32,
    epsilon: f64,
    direction: TangentVector,
    opts: &TreeOptions,
) -> Result<TreeRun> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if direction.is_zero() || !direction.is_finite() {
        return Err(Error::InvalidInput("direction must be a nonzero finite vector".into()));
    }
    if stages > opts.max_stages {
        return Err(Error::Budget(format!(
            "{stages} stages would store 2^{stages} leaves; the limit is {} stages \
             (use aggregate-only mode for closed-form results)",
            opts.max_stages
        )));
    }

    let mut saturated_at = None;
    let mut leaves = vec![Leaf {
        label: PathLabel::default(),
        displacement: direction * epsilon,
    }];
    let mut completed = 0;
    for s in 0..stages {
        let needed = 1u64 << (s + 1);
        if opts.reservoir_size.is_some_and(|n| needed > n) {
            saturated_at = Some(s + 1);
            break;
        }
        let fresh: Vec<Leaf> = leaves
            .iter()
            .map(|leaf| Leaf {
                label: leaf.label.after(Role::Switch),
                displacement: model.propagate_tangent(leaf.displacement, Role::Switch),
            })
            .collect();
        for leaf in leaves.iter_mut() {
            leaf.label = leaf.label.after(Role::Direct);
            leaf.displacement = model.propagate_tangent(leaf.displacement, Role::Direct);
        }
        leaves.extend(fresh);
        completed = s + 1;
    }

    Ok(TreeRun {
        stages,
        stages_completed: completed,
        epsilon,
        direction,
        leaves,
        reservoir_size: opts.reservoir_size,
        saturated_at,
    })
}

/// `|kp|^n1 * |km|^n2`: dilation of a path when the initial displacement lies
/// along `xi_plus`.
pub fn path_dilation(model: &CollisionModel, label: PathLabel) -> f64 {
    model.kp.abs().powi(label.n1 as i32) * model.km.abs().powi(label.n2 as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDilations {
    pub geometric: f64,
    pub arithmetic: f64,
}

/// Closed-form aggregates for a tree of `stages` stages started along `xi_plus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeAggregate {
    pub stages: u32,
    /// `|kp km|^(n/2)`
    pub geometric_mean: f64,
    /// `((|kp| + |km|)/2)^n`
    pub arithmetic_mean: f64,
    /// `(kp^2 + km^2)^(n/2)`
    pub gas_dilation: f64,
    /// `2^(n/2)`
    pub gas_bound: f64,
}

impl TreeAggregate {
    pub fn closed_form(model: &CollisionModel, stages: u32) -> Self {
        let n = stages as f64;
        Self {
            stages,
            geometric_mean: model.mixed_dilation().powf(0.5 * n),
            arithmetic_mean: (0.5 * (model.kp.abs() + model.km.abs())).powf(n),
            gas_dilation: model.square_sum().powf(0.5 * n),
            gas_bound: 2f64.powf(0.5 * n),
        }
    }

    pub fn bound_holds(&self) -> bool {
        self.gas_dilation >= self.gas_bound
    }
}

impl TreeRun {
    /// Geometric and arithmetic means of the leaf dilations `|d| / epsilon`.
    pub fn mean_dilations(&self) -> MeanDilations {
        let count = self.leaves.len() as f64;
        let (log_sum, sum) = self.leaves.iter().fold((0.0, 0.0), |(ls, s), leaf| {
            let r = leaf.displacement.norm() / self.epsilon;
            (ls + r.ln(), s + r)
        });
        MeanDilations {
            geometric: (log_sum / count).exp(),
            arithmetic: sum / count,
        }
    }

    /// Whole-subsystem dilation `sqrt(sum |d|^2) / epsilon`.
    pub fn gas_dilation(&self) -> f64 {
        let sq: f64 = self.leaves.iter().map(|l| l.displacement.norm_sq()).sum();
        sq.sqrt() / self.epsilon
    }

    /// `count[n1]` over leaves.
    pub fn n1_histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.stages_completed as usize + 1];
        for leaf in &self.leaves {
            counts[leaf.label.n1 as usize] += 1;
        }
        counts
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignificanceStage {
    /// Smallest `n` with `2^n >= N`.
    pub saturation_stage: u32,
    /// Smallest `n` with whole-subsystem dilation `>= sqrt(N)`.
    pub dilation_stage: u32,
}

pub fn significance_stage(reservoir: u64, model: &CollisionModel) -> Result<SignificanceStage> {
    if reservoir == 0 {
        return Err(Error::InvalidInput("reservoir size must be at least 1".into()));
    }
    let saturation_stage = 64 - (reservoir - 1).leading_zeros();
    let saturation_stage = if reservoir == 1 { 0 } else { saturation_stage };
    // sqrt(square_sum)^n >= sqrt(N)  <=>  n >= ln N / ln square_sum
    let mut dilation_stage = ((reservoir as f64).ln() / model.square_sum().ln()).ceil().max(0.0) as u32;
    while dilation_stage > 0
        && TreeAggregate::closed_form(model, dilation_stage - 1).gas_dilation >= (reservoir as f64).sqrt()
    {
        dilation_stage -= 1;
    }
    Ok(SignificanceStage {
        saturation_stage,
        dilation_stage,
    })
}

/// Result of comparing tree tangents against two fully simulated trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinCheck {
    pub max_relative_error: f64,
    pub whole_relative_error: f64,
}

/// Runs the same collision schedule on a reference and a perturbed set of
/// particles (partners drawn uniformly with `seed`) and compares the
/// minimal-image differences with the tangent leaves of `run`.
pub fn twin_check(model: &CollisionModel, run: &TreeRun, seed: u64) -> TwinCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = PhasePoint::new(rng.random(), rng.random());
    let mut reference = vec![start];
    let mut perturbed = vec![start.displaced(run.direction * run.epsilon)];
    for _ in 0..run.stages_completed {
        let fresh: Vec<PhasePoint> = (0..reference.len())
            .map(|_| PhasePoint::new(rng.random(), rng.random()))
            .collect();
        let width = reference.len();
        let mut ref_new = Vec::with_capacity(width);
        let mut per_new = Vec::with_capacity(width);
        for j in 0..width {
            let (a0, a1) = model.collide(reference[j], fresh[j]);
            let (b0, b1) = model.collide(perturbed[j], fresh[j]);
            reference[j] = a0;
            perturbed[j] = b0;
            ref_new.push(a1);
            per_new.push(b1);
        }
        reference.extend(ref_new);
        perturbed.extend(per_new);
    }

    let mut max_rel: f64 = 0.0;
    let (mut err_sq, mut norm_sq) = (0.0, 0.0);
    for ((r, p), leaf) in reference.iter().zip(&perturbed).zip(&run.leaves) {
        let err = (torus_diff(*p, *r) - leaf.displacement).norm();
        let n = leaf.displacement.norm();
        max_rel = max_rel.max(err / n);
        err_sq += err * err;
        norm_sq += n * n;
    }
    TwinCheck {
        max_relative_error: max_rel,
        whole_relative_error: (err_sq / norm_sq).sqrt(),
    }
}
