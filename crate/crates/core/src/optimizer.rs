//! Frank-Wolfe over sparse ranking policies.
//!
//! Each iteration turns the current user utilities and item exposures into
//! per-user linear scores `mu_ij (a_i + c_j) + d_j`, takes the top-K of every
//! row as the new vertex, and mixes it in with step `2 / (t + 2)`. For GGF
//! objectives the scores come from projections onto permutahedra (the
//! gradient of the Moreau-smoothed objective) or from supergradients.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::isotonic::moreau_grad_dual;
use crate::model::{
    assign_top_k, Assignment, ExposureWeights, PolicyBuilder, PreferenceMatrix, RankingPolicy, MERIT_EPS,
};
use crate::objectives::{eq_exposure_objective, std_penalty_gradient, welf_objective, welfare_slope};
use crate::reciprocal::{eq_utility_gradient, eq_utility_objective, ReciprocalInstance};
use crate::welfare::{ggf_supergradient, ggf_value, GgfWeights, WeightScheme};

/// Objective maximized by the optimizer. `lambda` from [`OptimizerConfig`]
/// is the user/item trade-off for one-sided kinds and the std-penalty weight
/// for `EqUtility`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveKind {
    TwoSidedGgf,
    Welf {
        alpha_user: f64,
        alpha_item: f64,
    },
    EqExposure,
    ReciprocalGgf {
        #[serde(default = "half")]
        side_balance: f64,
    },
    EqUtility {
        #[serde(default = "half")]
        side_balance: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoSidedGgf => "two-sided-ggf",
            Self::Welf { .. } => "welf",
            Self::EqExposure => "eq-exposure",
            Self::ReciprocalGgf { .. } => "reciprocal-ggf",
            Self::EqUtility { .. } => "eq-utility",
        }
    }

    pub fn is_reciprocal(&self) -> bool {
        matches!(self, Self::ReciprocalGgf { .. } | Self::EqUtility { .. })
    }

    fn is_ggf(&self) -> bool {
        matches!(self, Self::TwoSidedGgf | Self::ReciprocalGgf { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Smoothing,
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub iterations: usize,
    /// Initial smoothing; `None` selects [`default_beta0`].
    #[serde(default)]
    pub beta0: Option<f64>,
    pub lambda: f64,
    pub user_weights: WeightScheme,
    pub item_weights: WeightScheme,
    pub k: usize,
    pub objective: ObjectiveKind,
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    /// Apply the item-side welfare to exposure divided by item merit.
    #[serde(default)]
    pub merit_weighted: bool,
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

fn default_trace_every() -> usize {
    10
}

fn default_true() -> bool {
    true
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            beta0: None,
            lambda: 0.5,
            user_weights: WeightScheme::Uniform,
            item_weights: WeightScheme::Gini,
            k: 1,
            objective: ObjectiveKind::TwoSidedGgf,
            variant: Variant::Smoothing,
            seed: 0,
            trace_every: default_trace_every(),
            merit_weighted: false,
            record_wall_time: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return invalid("iterations must be at least 1");
        }
        if let Some(b) = self.beta0 {
            if !b.is_finite() || b <= 0.0 {
                return invalid(format!("beta0 must be positive, got {b}"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return invalid(format!("lambda {} must lie in [0, 1]", self.lambda));
        }
        if self.trace_every < 1 {
            return invalid("trace_every must be at least 1");
        }
        if self.variant == Variant::Subgradient && !self.objective.is_ggf() {
            return invalid(format!(
                "the subgradient variant needs a GGF objective, not {}",
                self.objective.name()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub beta: f64,
    pub objective: f64,
    pub wall_ms: f64,
}

/// Exact (non-smoothed) objective values at logged iterations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_objective(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Running maximum of the objective.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.objective);
                best
            })
            .collect()
    }
}

/// `beta0 / sqrt(t)`.
pub fn beta_schedule(beta0: f64, t: usize) -> Result<f64> {
    if t < 1 {
        return invalid("iteration index must be at least 1");
    }
    Ok(beta0 / (t as f64).sqrt())
}

/// Bound `sqrt(2 n m)` on the diameter of the policy set.
pub fn diameter_bound(n: usize, m: usize) -> f64 {
    (2.0 * n as f64 * m as f64).sqrt()
}

/// Norm of the concatenated `((1 - lambda) w_user, lambda w_item)`.
pub fn combined_weight_norm(lambda: f64, w_user: &GgfWeights, w_item: &GgfWeights) -> f64 {
    ((1.0 - lambda).powi(2) * w_user.norm().powi(2) + lambda.powi(2) * w_item.norm().powi(2)).sqrt()
}

/// `2 D b_1 / ||w||` with `D = sqrt(2 n m)`.
pub fn default_beta0(n: usize, exp: &ExposureWeights, lambda: f64, w_user: &GgfWeights, w_item: &GgfWeights) -> f64 {
    let norm = combined_weight_norm(lambda, w_user, w_item);
    2.0 * diameter_bound(n, exp.m()) * exp.first() / norm
}

/// Convergence bound `2 D b_1 ||w|| / sqrt(t)` on `F* - F(P_t)`.
pub fn convergence_bound(n: usize, exp: &ExposureWeights, weight_norm: f64, t: usize) -> f64 {
    2.0 * diameter_bound(n, exp.m()) * exp.first() * weight_norm / (t as f64).sqrt()
}

/// Frank-Wolfe vertex for the two-sided GGF: each user sorts
/// `-[(1 - lambda) y1_i mu_ij + lambda y2_j]` decreasingly and keeps the top K.
pub fn update_direction(
    user_proj: &[f64],
    item_proj: &[f64],
    prefs: &PreferenceMatrix,
    lambda: f64,
    k: usize,
) -> Result<Assignment> {
    if user_proj.len() != prefs.n() || item_proj.len() != prefs.m() {
        return invalid("projection lengths do not match the preference matrix");
    }
    if k < 1 || k > prefs.m() {
        return invalid(format!("top size K={k} must lie in [1, {}]", prefs.m()));
    }
    Ok(assign_top_k(prefs.n(), prefs.m(), k, false, |i, j| {
        -((1.0 - lambda) * user_proj[i] * prefs.get(i, j) + lambda * item_proj[j])
    }))
}

/// Running sums of an assignment mixture: utility received per user, plain
/// exposure per item and preference-weighted exposure per item.
#[derive(Debug, Clone)]
struct Totals {
    received: Vec<f64>,
    exposure: Vec<f64>,
    given: Vec<f64>,
}

impl Totals {
    fn of(a: &Assignment, prefs: &PreferenceMatrix, b: &[f64]) -> Self {
        let mut t = Self {
            received: vec![0.0; prefs.n()],
            exposure: vec![0.0; prefs.m()],
            given: vec![0.0; prefs.m()],
        };
        for (i, list) in a.rows().enumerate() {
            let mut acc = 0.0;
            for (&j, &bk) in list.iter().zip(b) {
                let j = j as usize;
                let gain = prefs.get(i, j) * bk;
                acc += gain;
                t.exposure[j] += bk;
                t.given[j] += gain;
            }
            t.received[i] = acc;
        }
        t
    }

    fn mix_in(&mut self, other: &Totals, step: f64) {
        for (dst, src) in [
            (&mut self.received, &other.received),
            (&mut self.exposure, &other.exposure),
            (&mut self.given, &other.given),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (1.0 - step) * *d + step * s;
            }
        }
    }
}

/// Scores `mu_ij (user_scale_i + item_scale_j) + item_bias_j`; top-K per user.
struct LinearScores {
    user_scale: Vec<f64>,
    item_scale: Option<Vec<f64>>,
    item_bias: Option<Vec<f64>>,
}

impl LinearScores {
    fn assign(&self, prefs: &PreferenceMatrix, k: usize, exclude_self: bool) -> Assignment {
        let zeros = vec![0.0; prefs.m()];
        let scale = self.item_scale.as_deref().unwrap_or(&zeros);
        let bias = self.item_bias.as_deref().unwrap_or(&zeros);
        assign_top_k(prefs.n(), prefs.m(), k, exclude_self, |i, j| {
            prefs.get(i, j) * (self.user_scale[i] + scale[j]) + bias[j]
        })
    }
}

/// Fully resolved problem: weights sized to the instance, merit divisors,
/// reciprocal masking.
struct Problem<'a> {
    config: &'a OptimizerConfig,
    prefs: PreferenceMatrix,
    exp: &'a ExposureWeights,
    w_user: GgfWeights,
    w_item: GgfWeights,
    merit: Option<Vec<f64>>,
    reciprocal: Option<ReciprocalInstance>,
}

impl<'a> Problem<'a> {
    fn new(config: &'a OptimizerConfig, prefs: &PreferenceMatrix, exp: &'a ExposureWeights) -> Result<Self> {
        config.validate()?;
        if exp.m() != prefs.m() {
            return invalid(format!("exposure model has {} slots for {} items", exp.m(), prefs.m()));
        }
        if exp.k() != config.k {
            return invalid(format!("config K={} but exposure model has K={}", config.k, exp.k()));
        }
        let reciprocal = match config.objective {
            ObjectiveKind::ReciprocalGgf { side_balance } | ObjectiveKind::EqUtility { side_balance } => {
                let inst = ReciprocalInstance::new(prefs, side_balance)?;
                inst.check_k(config.k)?;
                Some(inst)
            }
            _ => None,
        };
        let merit = config
            .merit_weighted
            .then(|| prefs.item_merits().into_iter().map(|q| q.max(MERIT_EPS)).collect());
        Ok(Self {
            config,
            prefs: reciprocal.as_ref().map_or_else(|| prefs.clone(), |r| r.prefs().clone()),
            exp,
            w_user: config.user_weights.resolve(prefs.n())?,
            w_item: config.item_weights.resolve(prefs.m())?,
            merit,
            reciprocal,
        })
    }

    fn lambda(&self) -> f64 {
        self.config.lambda
    }

    fn item_side(&self, exposure: &[f64]) -> Vec<f64> {
        match &self.merit {
            Some(q) => exposure.iter().zip(q).map(|(v, q)| v / q).collect(),
            None => exposure.to_vec(),
        }
    }

    /// Chain rule factor of the item-side transform.
    fn item_factor(&self, grad: Vec<f64>) -> Vec<f64> {
        match &self.merit {
            Some(q) => grad.iter().zip(q).map(|(g, q)| g / q).collect(),
            None => grad,
        }
    }

    fn two_sided(&self, totals: &Totals) -> Vec<f64> {
        self.reciprocal
            .as_ref()
            .expect("reciprocal objective")
            .blend(&totals.received, &totals.given)
    }

    fn weight_norm(&self) -> f64 {
        if self.config.objective.is_reciprocal() {
            self.w_user.norm()
        } else {
            combined_weight_norm(self.lambda(), &self.w_user, &self.w_item)
        }
    }

    fn beta0(&self) -> f64 {
        self.config.beta0.unwrap_or_else(|| {
            2.0 * diameter_bound(self.prefs.n(), self.prefs.m()) * self.exp.first() / self.weight_norm()
        })
    }

    /// Exact objective.
    fn value(&self, totals: &Totals) -> Result<f64> {
        let lambda = self.lambda();
        let v = self.item_side(&totals.exposure);
        match self.config.objective {
            ObjectiveKind::TwoSidedGgf => {
                let mut f = 0.0;
                if lambda < 1.0 {
                    f += (1.0 - lambda) * ggf_value(&self.w_user, &totals.received)?;
                }
                if lambda > 0.0 {
                    f += lambda * ggf_value(&self.w_item, &v)?;
                }
                Ok(f)
            }
            ObjectiveKind::Welf { alpha_user, alpha_item } => {
                welf_objective(&totals.received, &v, alpha_user, alpha_item, lambda)
            }
            ObjectiveKind::EqExposure => eq_exposure_objective(&totals.received, &v, lambda),
            ObjectiveKind::ReciprocalGgf { .. } => ggf_value(&self.w_user, &self.two_sided(totals)),
            ObjectiveKind::EqUtility { .. } => eq_utility_objective(&self.two_sided(totals), lambda),
        }
    }

    /// Ascent direction on `z` for the GGF `g_w`: minus the projection for
    /// the smoothed objective, a supergradient otherwise.
    fn ggf_ascent(&self, w: &GgfWeights, z: &[f64], beta: f64) -> Result<Vec<f64>> {
        match self.config.variant {
            Variant::Smoothing => Ok(moreau_grad_dual(w, z, beta)?.into_iter().map(|y| -y).collect()),
            Variant::Subgradient => ggf_supergradient(w, z),
        }
    }

    fn direction(&self, totals: &Totals, beta: f64) -> Result<Assignment> {
        let lambda = self.lambda();
        let k = self.config.k;
        let n = self.prefs.n();
        let scores = match self.config.objective {
            ObjectiveKind::TwoSidedGgf => {
                let user_scale = if lambda < 1.0 {
                    let a = self.ggf_ascent(&self.w_user, &totals.received, beta)?;
                    a.into_iter().map(|x| (1.0 - lambda) * x).collect()
                } else {
                    vec![0.0; n]
                };
                let item_bias = if lambda > 0.0 {
                    let v = self.item_side(&totals.exposure);
                    let a = self.ggf_ascent(&self.w_item, &v, beta)?;
                    Some(self.item_factor(a.into_iter().map(|x| lambda * x).collect()))
                } else {
                    None
                };
                LinearScores {
                    user_scale,
                    item_scale: None,
                    item_bias,
                }
            }
            ObjectiveKind::Welf { alpha_user, alpha_item } => {
                let v = self.item_side(&totals.exposure);
                LinearScores {
                    user_scale: totals
                        .received
                        .iter()
                        .map(|&u| (1.0 - lambda) * welfare_slope(u, alpha_user))
                        .collect(),
                    item_scale: None,
                    item_bias: Some(
                        self.item_factor(v.iter().map(|&x| lambda * welfare_slope(x, alpha_item)).collect()),
                    ),
                }
            }
            ObjectiveKind::EqExposure => {
                let v = self.item_side(&totals.exposure);
                LinearScores {
                    user_scale: vec![1.0; n],
                    item_scale: None,
                    item_bias: Some(self.item_factor(std_penalty_gradient(&v, lambda))),
                }
            }
            ObjectiveKind::ReciprocalGgf { .. } | ObjectiveKind::EqUtility { .. } => {
                let inst = self.reciprocal.as_ref().expect("reciprocal instance");
                let u = self.two_sided(totals);
                let ascent = match self.config.objective {
                    ObjectiveKind::ReciprocalGgf { .. } => self.ggf_ascent(&self.w_user, &u, beta)?,
                    _ => eq_utility_gradient(&u, lambda)?,
                };
                return Ok(inst.assign_by_gradient(&ascent, k));
            }
        };
        Ok(scores.assign(&self.prefs, k, false))
    }

    fn uses_smoothing(&self) -> bool {
        self.config.objective.is_ggf() && self.config.variant == Variant::Smoothing
    }
}

/// Runs Frank-Wolfe with the variant selected in `config`.
pub fn optimize(
    config: &OptimizerConfig,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
) -> Result<(RankingPolicy, ConvergenceTrace)> {
    let problem = Problem::new(config, prefs, exp)?;
    let prefs = &problem.prefs;
    let (n, m, k) = (prefs.n(), prefs.m(), config.k);
    let b = exp.top();
    let beta0 = problem.beta0();
    let start = Instant::now();

    let initial = assign_top_k(n, m, k, problem.reciprocal.is_some(), |i, j| prefs.get(i, j));
    let mut totals = Totals::of(&initial, prefs, b);
    // Unnormalized weights: the initial vertex keeps weight 1 and the vertex
    // chosen at iteration t enters with weight t + 1, which reproduces the
    // 2 / (t + 2) step exactly.
    let mut builder = PolicyBuilder::new(n, m, k);
    builder.add(initial, 1.0);

    let mut trace = ConvergenceTrace::default();
    let iterations = config.iterations;
    for t in 1..=iterations {
        let beta = beta_schedule(beta0, t)?;
        let vertex = problem.direction(&totals, beta)?;
        let step = 2.0 / (t as f64 + 2.0);
        totals.mix_in(&Totals::of(&vertex, prefs, b), step);
        builder.add(vertex, t as f64 + 1.0);

        if t == 1 || t % config.trace_every == 0 || t == iterations {
            trace.records.push(TraceRecord {
                t,
                beta: if problem.uses_smoothing() { beta } else { 0.0 },
                objective: problem.value(&totals)?,
                wall_ms: if config.record_wall_time {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                },
            });
        }
    }
    debug_assert!(builder.len() <= iterations + 1);
    Ok((builder.finish()?, trace))
}

/// FW-smoothing: Moreau-smoothed GGF gradients with `beta_t = beta0 / sqrt(t)`.
pub fn fw_smoothing(
    config: &OptimizerConfig,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
) -> Result<(RankingPolicy, ConvergenceTrace)> {
    let config = OptimizerConfig {
        variant: Variant::Smoothing,
        ..config.clone()
    };
    optimize(&config, prefs, exp)
}

/// Ablation using GGF supergradients in place of smoothed gradients.
pub fn fw_subgradient(
    config: &OptimizerConfig,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
) -> Result<(RankingPolicy, ConvergenceTrace)> {
    let config = OptimizerConfig {
        variant: Variant::Subgradient,
        ..config.clone()
    };
    optimize(&config, prefs, exp)
}

/// Exact objective of an arbitrary policy under `config`.
pub fn evaluate_objective(
    config: &OptimizerConfig,
    policy: &RankingPolicy,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
) -> Result<f64> {
    let problem = Problem::new(config, prefs, exp)?;
    if policy.n() != prefs.n() || policy.m() != prefs.m() || policy.k() != exp.k() {
        return invalid("policy shape does not match the instance");
    }
    let mut totals = Totals {
        received: vec![0.0; prefs.n()],
        exposure: vec![0.0; prefs.m()],
        given: vec![0.0; prefs.m()],
    };
    for c in policy.components() {
        let part = Totals::of(&c.assignment, &problem.prefs, exp.top());
        for (dst, src) in [
            (&mut totals.received, &part.received),
            (&mut totals.exposure, &part.exposure),
            (&mut totals.given, &part.given),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c.coefficient * s;
            }
        }
    }
    problem.value(&totals)
}
