//! Preferences, position-based exposure, and sparse stochastic ranking policies.
//!
//! A ranking policy is kept as a convex combination of deterministic top-K
//! assignments. Utilities and exposures are linear in the mixture, so every
//! quantity below is a coefficient-weighted sum over components.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Floor applied to item merits before dividing exposures by them.
pub const MERIT_EPS: f64 = 1e-9;

/// Dense `n x m` matrix of user/item values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl PreferenceMatrix {
    pub fn new(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return invalid(format!("preference matrix must be non-empty, got {n}x{m}"));
        }
        if values.len() != n * m {
            return invalid(format!(
                "expected {} values for a {n}x{m} matrix, got {}",
                n * m,
                values.len()
            ));
        }
        for (idx, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return invalid(format!(
                    "value {v} at (user {}, item {}) is outside [0, 1]",
                    idx / m + 1,
                    idx % m + 1
                ));
            }
        }
        Ok(Self { n, m, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return invalid("ragged preference rows");
        }
        Self::new(n, m, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.values[user * self.m + item]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.m..(user + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Item merits `q_j = sum_i mu_ij`.
    pub fn item_merits(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.m];
        for row in self.values.chunks_exact(self.m) {
            for (acc, &v) in q.iter_mut().zip(row) {
                *acc += v;
            }
        }
        q
    }

    pub fn is_square(&self) -> bool {
        self.n == self.m
    }
}

/// Examination probabilities of the `m` ranking slots; only the first `k`
/// are non-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureWeights {
    k: usize,
    b: Vec<f64>,
}

impl ExposureWeights {
    pub fn new(k: usize, b: Vec<f64>) -> Result<Self> {
        let m = b.len();
        if k < 1 || k > m {
            return invalid(format!("top size K={k} must lie in [1, {m}]"));
        }
        if b[..k].iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return invalid("exposure weights of the top-K slots must be positive");
        }
        if b[..k].windows(2).any(|w| w[1] > w[0]) {
            return invalid("exposure weights must be non-increasing");
        }
        if b[k..].iter().any(|&x| x != 0.0) {
            return invalid("exposure weights beyond slot K must be zero");
        }
        Ok(Self { k, b })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Weights of the `k` exposed slots.
    pub fn top(&self) -> &[f64] {
        &self.b[..self.k]
    }

    pub fn all(&self) -> &[f64] {
        &self.b
    }

    pub fn first(&self) -> f64 {
        self.b[0]
    }

    /// `b_1 + ... + b_K`.
    pub fn total(&self) -> f64 {
        self.top().iter().sum()
    }
}

/// DCG position weights `b_k = 1 / log2(1 + k)` for the top `k` of `m` slots.
pub fn dcg_exposure_weights(m: usize, k: usize) -> Result<ExposureWeights> {
    if k < 1 || k > m {
        return invalid(format!("top size K={k} must lie in [1, {m}]"));
    }
    let b = (1..=m)
        .map(|pos| if pos <= k { 1.0 / ((1 + pos) as f64).log2() } else { 0.0 })
        .collect();
    ExposureWeights::new(k, b)
}

/// One deterministic ranking per user: `items[i*k + s]` is the (0-based)
/// item shown to user `i` in slot `s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    n: usize,
    k: usize,
    items: Vec<u32>,
}

impl Assignment {
    pub fn new(n: usize, m: usize, k: usize, items: Vec<u32>) -> Result<Self> {
        if items.len() != n * k {
            return invalid(format!("expected {} item slots, got {}", n * k, items.len()));
        }
        for (user, list) in items.chunks_exact(k.max(1)).enumerate() {
            for (s, &item) in list.iter().enumerate() {
                if item as usize >= m {
                    return invalid(format!("user {}: item index {} out of range", user + 1, item + 1));
                }
                if list[..s].contains(&item) {
                    return invalid(format!("user {}: duplicate item {}", user + 1, item + 1));
                }
            }
        }
        Ok(Self { n, k, items })
    }

    pub fn from_rows(m: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return invalid("every user needs the same non-zero number of slots");
        }
        let items = rows.iter().flatten().map(|&j| j as u32).collect();
        Self::new(rows.len(), m, k, items)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Ranked items of one user, best slot first.
    pub fn user(&self, i: usize) -> &[u32] {
        &self.items[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.items.chunks_exact(self.k)
    }
}

/// Orders `(score, index)` pairs by decreasing score, lower index first on ties.
#[inline]
fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Writes the `out.len()` best-scoring candidates into `out`, best first.
pub(crate) fn top_k_into(scratch: &mut Vec<(f64, u32)>, out: &mut [u32]) {
    let k = out.len();
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, rank_order);
        scratch.truncate(k);
    }
    scratch.sort_unstable_by(rank_order);
    for (slot, &(_, j)) in out.iter_mut().zip(scratch.iter()) {
        *slot = j;
    }
}

/// Builds an assignment by taking, for each user, the top-`k` items under
/// `score(i, j)`. When `exclude_self` is set, item `i` is never offered to
/// user `i`. Users are processed in parallel; each row only depends on its
/// own scores so the result does not depend on the worker count.
pub(crate) fn assign_top_k<F>(n: usize, m: usize, k: usize, exclude_self: bool, score: F) -> Assignment
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut items = vec![0u32; n * k];
    items.par_chunks_mut(k).enumerate().with_min_len(64).for_each_init(
        || Vec::with_capacity(m),
        |scratch, (i, out)| {
            scratch.clear();
            scratch.extend(
                (0..m)
                    .filter(|&j| !(exclude_self && j == i))
                    .map(|j| (score(i, j), j as u32)),
            );
            top_k_into(scratch, out);
        },
    );
    Assignment { n, k, items }
}

/// Per-user top-`k` of an arbitrary `n x m` score matrix (row-major).
pub fn deterministic_policy(scores: &[f64], n: usize, m: usize, k: usize) -> Result<Assignment> {
    if n == 0 || m == 0 || scores.len() != n * m {
        return invalid(format!(
            "score matrix of length {} does not match {n}x{m}",
            scores.len()
        ));
    }
    if k < 1 || k > m {
        return invalid(format!("top size K={k} must lie in [1, {m}]"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return invalid("scores must be finite");
    }
    Ok(assign_top_k(n, m, k, false, |i, j| scores[i * m + j]))
}

/// Weighted component of a [`RankingPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub coefficient: f64,
    pub assignment: Assignment,
}

/// Convex combination of deterministic top-K assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingPolicy {
    n: usize,
    m: usize,
    k: usize,
    components: Vec<Component>,
}

impl RankingPolicy {
    pub fn new(n: usize, m: usize, k: usize, components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return invalid("a policy needs at least one component");
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.coefficient > 0.0 && c.coefficient <= 1.0) {
                return invalid(format!("coefficient {} not in (0, 1]", c.coefficient));
            }
            if c.assignment.n() != n || c.assignment.k() != k {
                return invalid("component shape does not match the policy");
            }
            if c.assignment.items.iter().any(|&j| j as usize >= m) {
                return invalid("component references an item out of range");
            }
            total += c.coefficient;
        }
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("coefficients sum to {total}, expected 1"));
        }
        Ok(Self { n, m, k, components })
    }

    pub fn deterministic(m: usize, assignment: Assignment) -> Result<Self> {
        let (n, k) = (assignment.n(), assignment.k());
        Self::new(
            n,
            m,
            k,
            vec![Component {
                coefficient: 1.0,
                assignment,
            }],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Mixture `alpha * self + (1 - alpha) * other`, merging equal assignments.
    pub fn mix(&self, alpha: f64, other: &RankingPolicy) -> Result<RankingPolicy> {
        if !(0.0..=1.0).contains(&alpha) {
            return invalid("mixing weight must lie in [0, 1]");
        }
        if (self.n, self.m, self.k) != (other.n, other.m, other.k) {
            return invalid("cannot mix policies of different shapes");
        }
        let mut builder = PolicyBuilder::new(self.n, self.m, self.k);
        for c in &self.components {
            builder.add(c.assignment.clone(), alpha * c.coefficient);
        }
        for c in &other.components {
            builder.add(c.assignment.clone(), (1.0 - alpha) * c.coefficient);
        }
        builder.finish()
    }
}

/// Accumulates unnormalized component weights, merging repeated assignments.
#[derive(Debug)]
pub(crate) struct PolicyBuilder {
    n: usize,
    m: usize,
    k: usize,
    index: HashMap<Assignment, usize>,
    entries: Vec<(Assignment, f64)>,
}

impl PolicyBuilder {
    pub(crate) fn new(n: usize, m: usize, k: usize) -> Self {
        Self {
            n,
            m,
            k,
            index: HashMap::new(),
            entries: Vec::new(),
        }
    }

    pub(crate) fn add(&mut self, assignment: Assignment, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        match self.index.get(&assignment) {
            Some(&pos) => self.entries[pos].1 += weight,
            None => {
                self.index.insert(assignment.clone(), self.entries.len());
                self.entries.push((assignment, weight));
            }
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.entries.len()
    }

    pub(crate) fn finish(self) -> Result<RankingPolicy> {
        let total: f64 = self.entries.iter().map(|e| e.1).sum();
        let mut components: Vec<Component> = self
            .entries
            .into_iter()
            .map(|(assignment, w)| Component {
                coefficient: w / total,
                assignment,
            })
            .collect();
        // Renormalize once more so the sum is 1 to within a few ulps.
        let sum: f64 = components.iter().map(|c| c.coefficient).sum();
        for c in &mut components {
            c.coefficient = (c.coefficient / sum).min(1.0);
        }
        RankingPolicy::new(self.n, self.m, self.k, components)
    }
}

fn check_shapes(policy: &RankingPolicy, m: usize, exp: &ExposureWeights) -> Result<()> {
    if policy.m != m || exp.m() != m {
        return invalid(format!(
            "item counts disagree: policy {}, preferences {m}, exposure {}",
            policy.m,
            exp.m()
        ));
    }
    if policy.k != exp.k() {
        return invalid(format!(
            "policy has K={} but exposure model has K={}",
            policy.k,
            exp.k()
        ));
    }
    Ok(())
}

/// Expected utility of each user: `u_i = sum_j mu_ij <P_ij, b>`.
pub fn user_utilities(policy: &RankingPolicy, prefs: &PreferenceMatrix, exp: &ExposureWeights) -> Result<Vec<f64>> {
    check_shapes(policy, prefs.m(), exp)?;
    if policy.n != prefs.n() {
        return invalid(format!("policy has {} users, preferences have {}", policy.n, prefs.n()));
    }
    let b = exp.top();
    let mut u = vec![0.0; policy.n];
    for c in &policy.components {
        for (i, (ui, list)) in u.iter_mut().zip(c.assignment.rows()).enumerate() {
            let row = prefs.row(i);
            let gain: f64 = list.iter().zip(b).map(|(&j, &bk)| row[j as usize] * bk).sum();
            *ui += c.coefficient * gain;
        }
    }
    Ok(u)
}

/// Expected exposure of each item: `v_j = sum_i <P_ij, b>`.
pub fn item_exposures(policy: &RankingPolicy, exp: &ExposureWeights) -> Result<Vec<f64>> {
    check_shapes(policy, policy.m, exp)?;
    let b = exp.top();
    let mut v = vec![0.0; policy.m];
    for c in &policy.components {
        for list in c.assignment.rows() {
            for (&j, &bk) in list.iter().zip(b) {
                v[j as usize] += c.coefficient * bk;
            }
        }
    }
    Ok(v)
}

/// Divides each exposure by the item's merit `q_j = sum_i mu_ij`, floored at
/// [`MERIT_EPS`].
pub fn merit_weighted_exposures(v: &[f64], prefs: &PreferenceMatrix) -> Result<Vec<f64>> {
    if v.len() != prefs.m() {
        return invalid(format!("{} exposures for {} items", v.len(), prefs.m()));
    }
    Ok(v.iter()
        .zip(prefs.item_merits())
        .map(|(&vj, q)| vj / q.max(MERIT_EPS))
        .collect())
}

/// Dense `m x K` slot-occupancy matrix of one user (row-major, item rows):
/// entry `(j, s)` is the probability that item `j` is shown in slot `s`.
pub fn reconstruct_dense(policy: &RankingPolicy, user: usize) -> Result<Vec<Vec<f64>>> {
    if user >= policy.n {
        return invalid(format!("user {user} out of range for {} users", policy.n));
    }
    let mut dense = vec![vec![0.0; policy.k]; policy.m];
    for c in &policy.components {
        for (s, &j) in c.assignment.user(user).iter().enumerate() {
            dense[j as usize][s] += c.coefficient;
        }
    }
    Ok(dense)
}

/// User utilities and item exposures of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityProfile {
    pub user_utilities: Vec<f64>,
    pub item_exposures: Vec<f64>,
}

impl UtilityProfile {
    pub fn of(policy: &RankingPolicy, prefs: &PreferenceMatrix, exp: &ExposureWeights) -> Result<Self> {
        Ok(Self {
            user_utilities: user_utilities(policy, prefs, exp)?,
            item_exposures: item_exposures(policy, exp)?,
        })
    }
}
