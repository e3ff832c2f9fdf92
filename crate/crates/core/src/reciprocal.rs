//! Reciprocal recommendation: users are also the items. A user's two-sided
//! utility blends the value received from its own recommendations with the
//! value it brings when recommended to others.

use crate::error::{invalid, Result};
use crate::model::{assign_top_k, Assignment, ExposureWeights, PreferenceMatrix, RankingPolicy};
use crate::objectives::std_penalty_gradient;
use crate::welfare::{ggf_value, gini_tradeoff_weights, GgfWeights};

/// Square preference matrix with zeroed diagonal and a side balance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocalInstance {
    prefs: PreferenceMatrix,
    side_balance: f64,
}

impl ReciprocalInstance {
    pub fn new(prefs: &PreferenceMatrix, side_balance: f64) -> Result<Self> {
        if !prefs.is_square() {
            return invalid(format!(
                "reciprocal mode needs a square matrix, got {}x{}",
                prefs.n(),
                prefs.m()
            ));
        }
        if !(0.0..=1.0).contains(&side_balance) {
            return invalid(format!("side balance {side_balance} must lie in [0, 1]"));
        }
        let n = prefs.n();
        let mut values = prefs.values().to_vec();
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        Ok(Self {
            prefs: PreferenceMatrix::new(n, n, values)?,
            side_balance,
        })
    }

    pub fn prefs(&self) -> &PreferenceMatrix {
        &self.prefs
    }

    pub fn side_balance(&self) -> f64 {
        self.side_balance
    }

    pub fn n(&self) -> usize {
        self.prefs.n()
    }

    /// `2 [(1 - s) received_i + s given_i]`.
    pub(crate) fn blend(&self, received: &[f64], given: &[f64]) -> Vec<f64> {
        let s = self.side_balance;
        received
            .iter()
            .zip(given)
            .map(|(r, g)| 2.0 * ((1.0 - s) * r + s * g))
            .collect()
    }

    /// Direction scores `mu_ij * 2 [(1 - s) a_i + s a_j]` for an ascent
    /// gradient `a` on two-sided utilities, top-K per user, self excluded.
    pub(crate) fn assign_by_gradient(&self, ascent: &[f64], k: usize) -> Assignment {
        let n = self.n();
        let s = self.side_balance;
        let own: Vec<f64> = ascent.iter().map(|a| 2.0 * (1.0 - s) * a).collect();
        let other: Vec<f64> = ascent.iter().map(|a| 2.0 * s * a).collect();
        assign_top_k(n, n, k, true, |i, j| self.prefs.get(i, j) * (own[i] + other[j]))
    }

    pub(crate) fn check_k(&self, k: usize) -> Result<()> {
        if k < 1 || k >= self.n() {
            return invalid(format!("reciprocal top size K={k} must lie in [1, {}]", self.n() - 1));
        }
        Ok(())
    }
}

/// Two-sided utilities of every user under `policy`.
pub fn two_sided_utilities(
    policy: &RankingPolicy,
    instance: &ReciprocalInstance,
    exp: &ExposureWeights,
) -> Result<Vec<f64>> {
    let n = instance.n();
    if policy.n() != n || policy.m() != n || exp.m() != n || policy.k() != exp.k() {
        return invalid("policy, instance and exposure model disagree in shape");
    }
    let b = exp.top();
    let (mut received, mut given) = (vec![0.0; n], vec![0.0; n]);
    for c in policy.components() {
        for (i, list) in c.assignment.rows().enumerate() {
            for (&j, &bk) in list.iter().zip(b) {
                let value = c.coefficient * instance.prefs.get(i, j as usize) * bk;
                received[i] += value;
                given[j as usize] += value;
            }
        }
    }
    Ok(instance.blend(&received, &given))
}

/// Single GGF of two-sided utilities.
pub fn reciprocal_objective(w: &GgfWeights, u: &[f64]) -> Result<f64> {
    ggf_value(w, u)
}

/// `w_i = (1 - t) + t (n - i + 1) / n`.
pub fn reciprocal_tradeoff_weights(n: usize, t: f64) -> Result<GgfWeights> {
    gini_tradeoff_weights(n, t)
}

/// Frank-Wolfe direction from the projected gradient `y` of the smoothed
/// negated GGF: each user ranks candidates by `-mu_ij [(1 - s) y_i + s y_j]`.
pub fn reciprocal_update_direction(y: &[f64], instance: &ReciprocalInstance, k: usize) -> Result<Assignment> {
    if y.len() != instance.n() {
        return invalid(format!("{} projected values for {} users", y.len(), instance.n()));
    }
    instance.check_k(k)?;
    let ascent: Vec<f64> = y.iter().map(|v| -v).collect();
    Ok(instance.assign_by_gradient(&ascent, k))
}

/// `sum u - (lambda / n) sqrt(sum (u_i - mean u)^2)`.
pub fn eq_utility_objective(u: &[f64], lambda: f64) -> Result<f64> {
    if u.is_empty() {
        return invalid("utility vector must be non-empty");
    }
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let ss: f64 = u.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok(u.iter().sum::<f64>() - lambda / u.len() as f64 * ss.sqrt())
}

/// Gradient of [`eq_utility_objective`] in `u` (with the `eps` guard).
pub fn eq_utility_gradient(u: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if u.is_empty() {
        return invalid("utility vector must be non-empty");
    }
    Ok(std_penalty_gradient(u, lambda).into_iter().map(|g| 1.0 + g).collect())
}

/// Row-major `n x n` gradient of the eq-utility objective with respect to
/// the exposure `e_ij` user `i` gives user `j`.
pub fn eq_utility_gradient_scores(u: &[f64], instance: &ReciprocalInstance, lambda: f64) -> Result<Vec<f64>> {
    let g = eq_utility_gradient(u, lambda)?;
    if g.len() != instance.n() {
        return invalid("utility length does not match the instance");
    }
    let n = instance.n();
    let s = instance.side_balance;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(instance.prefs.get(i, j) * 2.0 * ((1.0 - s) * g[i] + s * g[j]));
        }
    }
    Ok(out)
}
