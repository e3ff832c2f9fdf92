//! Experiment helpers: seeded synthetic preferences, lambda sweeps with
//! fairness metrics, joint Lorenz-dominance audits, a brute-force grid oracle
//! for tiny instances and smoothing/subgradient convergence comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{item_exposures, user_utilities, ExposureWeights, PreferenceMatrix, RankingPolicy};
use crate::optimizer::{fw_smoothing, fw_subgradient, optimize, ConvergenceTrace, ObjectiveKind, OptimizerConfig};
use crate::reciprocal::{two_sided_utilities, ReciprocalInstance};
use crate::welfare::{gini_index, lorenz_curve, lorenz_dominance_with_tol, quantile_index, GgfWeights, WeightScheme};

/// Seeded popularity-skewed preferences:
/// `mu_ij = clip(p_j * s_i * eps_ij, 0, 1)` with `p_j = j^-skew`,
/// `s_i ~ U[0.5, 1]` and `eps_ij ~ LogNormal(0, 0.25)`.
pub fn synthetic_prefs(n: usize, m: usize, skew: f64, seed: u64) -> Result<PreferenceMatrix> {
    if n == 0 || m == 0 {
        return invalid("synthetic instance needs n, m >= 1");
    }
    if skew.is_nan() || skew < 0.0 {
        return invalid(format!("skew must be non-negative, got {skew}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = LogNormal::new(0.0, 0.25).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let popularity: Vec<f64> = (1..=m).map(|j| (j as f64).powf(-skew)).collect();
    let scale: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=1.0)).collect();
    let mut values = Vec::with_capacity(n * m);
    for s in &scale {
        for p in &popularity {
            let e: f64 = rng.sample(noise);
            values.push((p * s * e).clamp(0.0, 1.0));
        }
    }
    PreferenceMatrix::new(n, m, values)
}

/// Cumulative utility of the `floor(q n)` worst-off entries.
pub fn quantile_cumulative_utility(x: &[f64], q: f64) -> Result<f64> {
    let idx = quantile_index(x.len(), q)?;
    Ok(lorenz_curve(x).as_slice()[idx - 1])
}

/// One point of a Pareto sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub objective_kind: String,
    pub weights_user: String,
    pub weights_item: String,
    pub total_utility: f64,
    pub gini_exposure: f64,
    /// `(q, cumulative utility of the q worst-off fraction)`.
    pub quantile_utilities: Vec<(f64, f64)>,
    pub final_objective: f64,
    pub iterations: usize,
    pub seed: u64,
    pub user_utilities: Vec<f64>,
    pub item_exposures: Vec<f64>,
}

/// User utilities (two-sided in reciprocal mode) and item exposures.
pub fn policy_vectors(
    config: &OptimizerConfig,
    policy: &RankingPolicy,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = match config.objective {
        ObjectiveKind::ReciprocalGgf { side_balance } | ObjectiveKind::EqUtility { side_balance } => {
            two_sided_utilities(policy, &ReciprocalInstance::new(prefs, side_balance)?, exp)?
        }
        _ => user_utilities(policy, prefs, exp)?,
    };
    Ok((u, item_exposures(policy, exp)?))
}

/// Metrics of a finished run.
pub fn summarize(
    config: &OptimizerConfig,
    policy: &RankingPolicy,
    final_objective: f64,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
    quantiles: &[f64],
) -> Result<SweepRecord> {
    let (u, v) = policy_vectors(config, policy, prefs, exp)?;
    let quantile_utilities = quantiles
        .iter()
        .map(|&q| Ok((q, quantile_cumulative_utility(&u, q)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepRecord {
        lambda: config.lambda,
        objective_kind: config.objective.name().to_string(),
        weights_user: config.user_weights.to_string(),
        weights_item: config.item_weights.to_string(),
        total_utility: u.iter().sum(),
        gini_exposure: gini_index(&v)?,
        quantile_utilities,
        final_objective,
        iterations: config.iterations,
        seed: config.seed,
        user_utilities: u,
        item_exposures: v,
    })
}

/// Configuration of one sweep point. For the reciprocal GGF with trade-off
/// weights the swept value drives the weights, since `lambda` is otherwise
/// unused by that objective.
pub fn sweep_point_config(base: &OptimizerConfig, lambda: f64) -> OptimizerConfig {
    let mut config = OptimizerConfig { lambda, ..base.clone() };
    if matches!(config.objective, ObjectiveKind::ReciprocalGgf { .. }) {
        if let WeightScheme::Tradeoff { .. } = config.user_weights {
            config.user_weights = WeightScheme::Tradeoff { t: lambda };
        }
    }
    config
}

/// One optimizer run per grid value; records come back in grid order.
pub fn pareto_sweep(
    base: &OptimizerConfig,
    lambda_grid: &[f64],
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
    quantiles: &[f64],
) -> Result<Vec<SweepRecord>> {
    if let Some(bad) = lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return invalid(format!("sweep value {bad} outside [0, 1]"));
    }
    lambda_grid
        .par_iter()
        .map(|&lambda| {
            let config = sweep_point_config(base, lambda);
            let (policy, trace) = optimize(&config, prefs, exp)?;
            summarize(&config, &policy, trace.final_objective(), prefs, exp, quantiles)
        })
        .collect()
}

/// Pair of sweep points where `dominating` jointly Lorenz-dominates `dominated`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditViolation {
    pub dominated: usize,
    pub dominating: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub pairs_checked: usize,
    pub violations: Vec<AuditViolation>,
}

/// Default tolerance of [`lorenz_audit`].
pub const AUDIT_TOL: f64 = 1e-6;

fn jointly_dominates(b: &SweepRecord, a: &SweepRecord, tol: f64) -> Result<bool> {
    let du = lorenz_dominance_with_tol(&b.user_utilities, &a.user_utilities, tol)?;
    let dv = lorenz_dominance_with_tol(&b.item_exposures, &a.item_exposures, tol)?;
    Ok((du.is_weakly_dominating() && dv.is_strictly_dominating())
        || (du.is_strictly_dominating() && dv.is_weakly_dominating()))
}

/// Flags every pair of records where one jointly dominates the other on the
/// user and item generalized Lorenz curves (one side strictly).
pub fn lorenz_audit(records: &[SweepRecord], tol: f64) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    for a in 0..records.len() {
        for b in a + 1..records.len() {
            report.pairs_checked += 1;
            if jointly_dominates(&records[b], &records[a], tol)? {
                report.violations.push(AuditViolation {
                    dominated: a,
                    dominating: b,
                });
            }
            if jointly_dominates(&records[a], &records[b], tol)? {
                report.violations.push(AuditViolation {
                    dominated: b,
                    dominating: a,
                });
            }
        }
    }
    Ok(report)
}

/// Instance small enough for exhaustive search: one slot (`K = 1`), so each
/// user's policy is a distribution over its candidate items.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub prefs: PreferenceMatrix,
    pub exp: ExposureWeights,
    pub exclude_self: bool,
}

/// Objective evaluated by the grid oracle.
#[derive(Debug, Clone)]
pub enum TinyObjective {
    TwoSided {
        lambda: f64,
        w_user: GgfWeights,
        w_item: GgfWeights,
    },
    Reciprocal {
        side_balance: f64,
        w: GgfWeights,
    },
}

/// Best grid point of a tiny instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Objective of the best grid policy; a lower bound on the optimum.
    pub optimum: f64,
    /// Per-user item distributions of the best grid policy.
    pub argmax: Vec<Vec<f64>>,
    pub resolution: f64,
    /// `F* <= optimum + lipschitz * resolution`.
    pub lipschitz: f64,
    pub evaluated: usize,
}

impl OracleResult {
    pub fn upper_bound(&self) -> f64 {
        self.optimum + self.lipschitz * self.resolution
    }
}

/// Maximum number of free policy parameters the grid oracle accepts.
pub const ORACLE_MAX_PARAMS: usize = 4;

/// All distributions over `parts` outcomes with masses in multiples of `1/steps`.
fn simplex_grid(parts: usize, steps: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=left {
            prefix.push(take);
            rec(parts - 1, left - take, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, steps, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Exhaustive evaluation of the objective over a uniform grid of policies.
pub fn grid_oracle(instance: &TinyInstance, objective: &TinyObjective, resolution: f64) -> Result<OracleResult> {
    let prefs = &instance.prefs;
    let (n, m) = (prefs.n(), prefs.m());
    if instance.exp.k() != 1 || instance.exp.m() != m {
        return Err(Error::Unsupported(
            "grid oracle handles single-slot instances only".into(),
        ));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return invalid(format!("resolution {resolution} must lie in (0, 1]"));
    }
    let steps = (1.0 / resolution).round() as usize;
    if ((steps as f64) * resolution - 1.0).abs() > 1e-9 {
        return invalid(format!("1/resolution must be an integer, got {}", 1.0 / resolution));
    }
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..m).filter(|&j| !(instance.exclude_self && j == i)).collect())
        .collect();
    let params: usize = candidates.iter().map(|c| c.len().saturating_sub(1)).sum();
    if params > ORACLE_MAX_PARAMS {
        return Err(Error::Unsupported(format!(
            "{params} free parameters exceed the oracle limit of {ORACLE_MAX_PARAMS}"
        )));
    }
    if candidates.iter().any(Vec::is_empty) {
        return invalid("a user has no candidate items");
    }
    let b1 = instance.exp.first();
    let scale = 1.0 / steps as f64;
    let (lambda, side) = match objective {
        TinyObjective::TwoSided { lambda, w_user, w_item } => {
            if w_user.len() != n || w_item.len() != m {
                return invalid("weight lengths do not match the instance");
            }
            (*lambda, 0.0)
        }
        TinyObjective::Reciprocal { side_balance, w } => {
            if n != m || w.len() != n {
                return invalid("reciprocal oracle needs a square instance and n weights");
            }
            (0.0, *side_balance)
        }
    };

    // Per user and grid distribution: received utility and per-item
    // (exposure, preference-weighted exposure) contributions.
    struct Choice {
        dist: Vec<f64>,
        received: f64,
        exposure: Vec<f64>,
        given: Vec<f64>,
    }
    let choices: Vec<Vec<Choice>> = candidates
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            simplex_grid(cand.len(), steps)
                .into_iter()
                .map(|counts| {
                    let mut dist = vec![0.0; m];
                    for (&j, &c) in cand.iter().zip(&counts) {
                        dist[j] = c as f64 * scale;
                    }
                    let exposure: Vec<f64> = dist.iter().map(|p| p * b1).collect();
                    let given: Vec<f64> = exposure.iter().enumerate().map(|(j, e)| e * prefs.get(i, j)).collect();
                    Choice {
                        received: given.iter().sum(),
                        dist,
                        exposure,
                        given,
                    }
                })
                .collect()
        })
        .collect();

    let evaluate = |picks: &[usize]| -> Result<f64> {
        let mut received = vec![0.0; n];
        let mut exposure = vec![0.0; m];
        let mut given = vec![0.0; m];
        for (i, &c) in picks.iter().enumerate() {
            let ch = &choices[i][c];
            received[i] = ch.received;
            for j in 0..m {
                exposure[j] += ch.exposure[j];
                given[j] += ch.given[j];
            }
        }
        match objective {
            TinyObjective::TwoSided { w_user, w_item, .. } => Ok((1.0 - lambda)
                * crate::welfare::ggf_value(w_user, &received)?
                + lambda * crate::welfare::ggf_value(w_item, &exposure)?),
            TinyObjective::Reciprocal { w, .. } => {
                let u: Vec<f64> = received
                    .iter()
                    .zip(&given)
                    .map(|(r, g)| 2.0 * ((1.0 - side) * r + side * g))
                    .collect();
                crate::welfare::ggf_value(w, &u)
            }
        }
    };

    let mut picks = vec![0usize; n];
    let mut best = (f64::NEG_INFINITY, picks.clone());
    let mut evaluated = 0usize;
    loop {
        let f = evaluate(&picks)?;
        evaluated += 1;
        if f > best.0 {
            best = (f, picks.clone());
        }
        // odometer over users
        let mut i = 0;
        loop {
            if i == n {
                let argmax = best
                    .1
                    .iter()
                    .enumerate()
                    .map(|(u, &c)| choices[u][c].dist.clone())
                    .collect();
                let lipschitz = match objective {
                    TinyObjective::TwoSided { .. } => 1.0,
                    TinyObjective::Reciprocal { .. } => 2.0,
                } * b1
                    * candidates.iter().map(|c| c.len() as f64).sum::<f64>();
                return Ok(OracleResult {
                    optimum: best.0,
                    argmax,
                    resolution,
                    lipschitz,
                    evaluated,
                });
            }
            picks[i] += 1;
            if picks[i] < choices[i].len() {
                break;
            }
            picks[i] = 0;
            i += 1;
        }
    }
}

/// Smoothing traces for several `beta0` values next to the subgradient trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceComparison {
    pub subgradient: ConvergenceTrace,
    pub smoothing: Vec<(f64, ConvergenceTrace)>,
}

pub fn convergence_compare(
    config: &OptimizerConfig,
    prefs: &PreferenceMatrix,
    exp: &ExposureWeights,
    beta0s: &[f64],
) -> Result<ConvergenceComparison> {
    if beta0s.is_empty() {
        return invalid("at least one beta0 is needed");
    }
    let (_, subgradient) = fw_subgradient(config, prefs, exp)?;
    let smoothing = beta0s
        .par_iter()
        .map(|&b| {
            let c = OptimizerConfig {
                beta0: Some(b),
                ..config.clone()
            };
            Ok((b, fw_smoothing(&c, prefs, exp)?.1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceComparison { subgradient, smoothing })
}
