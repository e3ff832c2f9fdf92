//! Generalized Gini welfare functions (ordered weighted averages with
//! non-increasing weights), generalized Lorenz curves and inequality metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default absolute tolerance for Lorenz dominance comparisons.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// OWA weights `1 = w_1 >= w_2 >= ... >= w_n >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GgfWeights(Vec<f64>);

impl GgfWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return invalid("weights must be non-empty");
        }
        if w.iter().any(|x| !x.is_finite()) {
            return invalid("weights must be finite");
        }
        if (w[0] - 1.0).abs() > 1e-12 {
            return invalid(format!("first weight must be 1, got {}", w[0]));
        }
        if w.windows(2).any(|p| p[1] > p[0] + 1e-15) {
            return invalid("weights must be non-increasing");
        }
        if *w.last().unwrap() < 0.0 {
            return invalid("weights must be non-negative");
        }
        let mut w = w;
        w[0] = 1.0;
        Ok(Self(w))
    }

    /// All-ones weights: the GGF is the plain sum.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("n must be at least 1");
        }
        Ok(Self(vec![1.0; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Lorenz-space weights `w'_i = w_i - w_{i+1}` with `w_{n+1} = 0`.
    pub fn lorenz_weights(&self) -> Vec<f64> {
        let w = &self.0;
        (0..w.len())
            .map(|i| w[i] - w.get(i + 1).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for GgfWeights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<GgfWeights> for Vec<f64> {
    fn from(w: GgfWeights) -> Self {
        w.0
    }
}

/// `w_i = (n - i + 1) / n`.
pub fn gini_weights(n: usize) -> Result<GgfWeights> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let nf = n as f64;
    Ok(GgfWeights((0..n).map(|i| (n - i) as f64 / nf).collect()))
}

/// Bonferroni weights `w_i = (1/n) sum_{l >= i} 1/l`, rescaled so `w_1 = 1`.
pub fn bonferroni_weights(n: usize) -> Result<GgfWeights> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let mut tail = vec![0.0; n];
    let mut acc = 0.0;
    for l in (0..n).rev() {
        acc += 1.0 / (l + 1) as f64;
        tail[l] = acc;
    }
    let head = tail[0];
    Ok(GgfWeights(tail.into_iter().map(|t| t / head).collect()))
}

/// Index `floor(q n)` clamped to `[1, n]`; errors when it would be zero.
pub fn quantile_index(n: usize, q: f64) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return invalid(format!("quantile {q} must lie in (0, 1]"));
    }
    // small slack so that e.g. 0.29 * 100 lands on 29
    let idx = (q * n as f64 + 1e-9).floor() as usize;
    if idx < 1 {
        return invalid(format!("quantile {q} selects no user out of {n}"));
    }
    Ok(idx.min(n))
}

/// Weights putting Lorenz mass `omega` on the `floor(q n)`-th point and
/// `1 - omega` on the total.
pub fn quantile_owa_weights(n: usize, q: f64, omega: f64) -> Result<GgfWeights> {
    if !(0.0..=1.0).contains(&omega) {
        return invalid(format!("omega {omega} must lie in [0, 1]"));
    }
    let idx = quantile_index(n, q)?;
    let mut lorenz = vec![0.0; n];
    lorenz[idx - 1] += omega;
    lorenz[n - 1] += 1.0 - omega;
    lorenz_to_owa(&lorenz)
}

/// `w_i = (1 - t) + t (n - i + 1) / n`: interpolates between the sum and the
/// Gini-weighted GGF.
pub fn gini_tradeoff_weights(n: usize, t: f64) -> Result<GgfWeights> {
    if !(0.0..=1.0).contains(&t) {
        return invalid(format!("trade-off {t} must lie in [0, 1]"));
    }
    let g = gini_weights(n)?;
    Ok(GgfWeights(g.0.iter().map(|gi| (1.0 - t) + t * gi).collect()))
}

/// Inverts the Lorenz-weight map: `w_i = sum_{l >= i} w'_l`.
pub fn lorenz_to_owa(lorenz: &[f64]) -> Result<GgfWeights> {
    if lorenz.is_empty() {
        return invalid("Lorenz weights must be non-empty");
    }
    if lorenz.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return invalid("Lorenz weights must be non-negative");
    }
    let total: f64 = lorenz.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return invalid(format!("Lorenz weights sum to {total}, expected 1"));
    }
    let mut w = vec![0.0; lorenz.len()];
    let mut acc = 0.0;
    for i in (0..lorenz.len()).rev() {
        acc += lorenz[i];
        w[i] = acc;
    }
    w[0] = 1.0;
    Ok(GgfWeights(w))
}

fn sorted_ascending(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `g_w(x) = sum_i w_i x_(i)` with `x` sorted ascending.
pub fn ggf_value(w: &GgfWeights, x: &[f64]) -> Result<f64> {
    if w.len() != x.len() {
        return invalid(format!("{} weights for {} values", w.len(), x.len()));
    }
    Ok(sorted_ascending(x).iter().zip(&w.0).map(|(a, b)| a * b).sum())
}

/// Permutation `rank` such that `x[rank[0]] <= x[rank[1]] <= ...`, ties by index.
pub(crate) fn ascending_order(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    idx
}

/// Supergradient of the concave `g_w` at `x`: `s_i = w_{rank(i)}` where rank
/// is the ascending position of `x_i` (ties by index).
pub fn ggf_supergradient(w: &GgfWeights, x: &[f64]) -> Result<Vec<f64>> {
    if w.len() != x.len() {
        return invalid(format!("{} weights for {} values", w.len(), x.len()));
    }
    let mut s = vec![0.0; x.len()];
    for (pos, i) in ascending_order(x).into_iter().enumerate() {
        s[i] = w.0[pos];
    }
    Ok(s)
}

/// Generalized Lorenz curve: cumulative sums of the ascending-sorted values.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzVector(Vec<f64>);

impl LorenzVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn lorenz_curve(x: &[f64]) -> LorenzVector {
    let mut acc = 0.0;
    LorenzVector(
        sorted_ascending(x)
            .into_iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect(),
    )
}

/// Outcome of comparing two generalized Lorenz curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// At least as high everywhere and higher by more than the tolerance somewhere.
    StrictlyDominates,
    /// Within tolerance everywhere but not identical, first curve not below.
    WeaklyDominates,
    Equal,
    WeaklyDominatedBy,
    StrictlyDominatedBy,
    Incomparable,
}

impl Dominance {
    /// `x ⪰_L x'` up to the tolerance.
    pub fn is_weakly_dominating(self) -> bool {
        matches!(self, Self::StrictlyDominates | Self::WeaklyDominates | Self::Equal)
    }

    pub fn is_strictly_dominating(self) -> bool {
        self == Self::StrictlyDominates
    }

    pub fn reversed(self) -> Self {
        match self {
            Self::StrictlyDominates => Self::StrictlyDominatedBy,
            Self::WeaklyDominates => Self::WeaklyDominatedBy,
            Self::Equal => Self::Equal,
            Self::WeaklyDominatedBy => Self::WeaklyDominates,
            Self::StrictlyDominatedBy => Self::StrictlyDominates,
            Self::Incomparable => Self::Incomparable,
        }
    }
}

/// Compares the generalized Lorenz curves of `x` and `other` with an
/// absolute tolerance.
pub fn lorenz_dominance_with_tol(x: &[f64], other: &[f64], tol: f64) -> Result<Dominance> {
    if x.len() != other.len() {
        return invalid(format!(
            "cannot compare vectors of length {} and {}",
            x.len(),
            other.len()
        ));
    }
    let a = lorenz_curve(x);
    let b = lorenz_curve(other);
    let (mut above, mut below, mut differs, mut exceeds_tol_above, mut exceeds_tol_below) =
        (true, true, false, false, false);
    for (xa, xb) in a.0.iter().zip(&b.0) {
        let d = xa - xb;
        if d != 0.0 {
            differs = true;
        }
        if d < -tol {
            above = false;
        }
        if d > tol {
            below = false;
        }
        if d > tol {
            exceeds_tol_above = true;
        }
        if d < -tol {
            exceeds_tol_below = true;
        }
    }
    Ok(match (above, below) {
        (true, true) if !differs => Dominance::Equal,
        (true, true) => {
            // tie within tolerance; orient by the larger cumulative sum gap
            let net: f64 = a.0.iter().zip(&b.0).map(|(p, q)| p - q).sum();
            if net >= 0.0 {
                Dominance::WeaklyDominates
            } else {
                Dominance::WeaklyDominatedBy
            }
        }
        (true, false) if exceeds_tol_above => Dominance::StrictlyDominates,
        (false, true) if exceeds_tol_below => Dominance::StrictlyDominatedBy,
        _ => Dominance::Incomparable,
    })
}

pub fn lorenz_dominance(x: &[f64], other: &[f64]) -> Result<Dominance> {
    lorenz_dominance_with_tol(x, other, DOMINANCE_TOL)
}

/// Discrete Gini index `1 + 1/n - 2 sum_i X_i / (n sum x)`.
pub fn gini_index(x: &[f64]) -> Result<f64> {
    let total: f64 = x.iter().sum();
    if x.is_empty() || total.is_nan() || total <= 0.0 {
        return invalid("Gini index needs a positive total");
    }
    let n = x.len() as f64;
    let cum: f64 = lorenz_curve(x).0.iter().sum();
    Ok(1.0 + 1.0 / n - 2.0 * cum / (n * total))
}

/// `(1 - lambda) g_{w_user}(u) + lambda g_{w_item}(v)`.
pub fn two_sided_objective(lambda: f64, w_user: &GgfWeights, w_item: &GgfWeights, u: &[f64], v: &[f64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return invalid(format!("lambda {lambda} must lie in [0, 1]"));
    }
    let mut f = 0.0;
    if lambda < 1.0 {
        f += (1.0 - lambda) * ggf_value(w_user, u)?;
    }
    if lambda > 0.0 {
        f += lambda * ggf_value(w_item, v)?;
    }
    Ok(f)
}

/// Named weight family, resolved against a population size.
///
/// Textual forms: `gini`, `bonferroni`, `uniform`, `quantile:q=<f>,omega=<f>`,
/// `tradeoff:t=<f>`, `explicit:<w1>,<w2>,...`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    Gini,
    Bonferroni,
    Uniform,
    Quantile { q: f64, omega: f64 },
    Tradeoff { t: f64 },
    Explicit(Vec<f64>),
}

impl WeightScheme {
    pub fn resolve(&self, n: usize) -> Result<GgfWeights> {
        match self {
            Self::Gini => gini_weights(n),
            Self::Bonferroni => bonferroni_weights(n),
            Self::Uniform => GgfWeights::uniform(n),
            Self::Quantile { q, omega } => quantile_owa_weights(n, *q, *omega),
            Self::Tradeoff { t } => gini_tradeoff_weights(n, *t),
            Self::Explicit(w) => {
                if w.len() != n {
                    return invalid(format!("explicit weights have length {}, expected {n}", w.len()));
                }
                GgfWeights::new(w.clone())
            }
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(&str, f64)>> {
    body.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{v}` for `{k}`")))?;
            Ok((k.trim(), v))
        })
        .collect()
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, body) = match s.split_once(':') {
            Some((h, b)) => (h, Some(b)),
            None => (s, None),
        };
        match (head, body) {
            ("gini", None) => Ok(Self::Gini),
            ("bonferroni", None) => Ok(Self::Bonferroni),
            ("uniform", None) => Ok(Self::Uniform),
            ("quantile", Some(body)) => {
                let (mut q, mut omega) = (None, None);
                for (k, v) in parse_params(body)? {
                    match k {
                        "q" => q = Some(v),
                        "omega" => omega = Some(v),
                        other => return invalid(format!("unknown quantile parameter `{other}`")),
                    }
                }
                match (q, omega) {
                    (Some(q), Some(omega)) => Ok(Self::Quantile { q, omega }),
                    _ => invalid("quantile scheme needs both q and omega"),
                }
            }
            ("tradeoff", Some(body)) => match parse_params(body)?.as_slice() {
                [("t", t)] => Ok(Self::Tradeoff { t: *t }),
                _ => invalid("tradeoff scheme expects `tradeoff:t=<f>`"),
            },
            ("explicit", Some(body)) => body
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad weight `{v}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Self::Explicit),
            _ => invalid(format!("unknown weight scheme `{s}`")),
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gini => write!(f, "gini"),
            Self::Bonferroni => write!(f, "bonferroni"),
            Self::Uniform => write!(f, "uniform"),
            Self::Quantile { q, omega } => write!(f, "quantile:q={q},omega={omega}"),
            Self::Tradeoff { t } => write!(f, "tradeoff:t={t}"),
            Self::Explicit(w) => {
                write!(f, "explicit:")?;
                for (i, x) in w.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for WeightScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WeightScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
