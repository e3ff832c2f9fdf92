//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lorenz_rank::harness::{
    convergence_compare, grid_oracle, lorenz_audit, pareto_sweep, quantile_cumulative_utility, synthetic_prefs,
    TinyInstance, TinyObjective,
};
use lorenz_rank::isotonic::{moreau_envelope_value, moreau_grad_dual, pav_fit, permutahedron_project};
use lorenz_rank::model::{dcg_exposure_weights, user_utilities};
use lorenz_rank::optimizer::{fw_smoothing, optimize, update_direction};
use lorenz_rank::welfare::{ggf_value, gini_index, gini_weights};
use lorenz_rank::{GgfWeights, ObjectiveKind, OptimizerConfig, PreferenceMatrix, WeightScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

// Shared synthetic instance for the 50x50 criteria.
const SYN_N: usize = 50;
const SYN_SKEW: f64 = 0.5;
const SYN_K: usize = 5;
const SYN_SEED: u64 = 1;
const LAMBDA_GRID: [f64; 7] = [0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> GgfWeights {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.2) {
                // coarse values produce ties in w
                (rng.gen_range(0..=4) as f64) / 4.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    w.sort_by(|a, b| b.total_cmp(a));
    w[0] = 1.0;
    GgfWeights::new(w).unwrap()
}

fn permutations(v: &[f64]) -> Vec<Vec<f64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest `<z - y, v - y>` over all vertices `v` of the permutahedron.
fn variational_slack(w: &GgfWeights, z: &[f64], y: &[f64]) -> f64 {
    let gen: Vec<f64> = w.as_slice().iter().rev().map(|x| -x).collect();
    let r: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
    permutations(&gen)
        .iter()
        .map(|v| {
            let d: Vec<f64> = v.iter().zip(y).map(|(a, b)| a - b).collect();
            dot(&r, &d)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn c1_projection() -> Outcome {
    let start = Instant::now();
    let fixed = GgfWeights::new(vec![1.0, 0.5]).unwrap();
    for (z, want) in [
        ([0.0, 0.0], [-0.75, -0.75]),
        ([10.0, 0.0], [-0.5, -1.0]),
        ([0.0, 10.0], [-1.0, -0.5]),
    ] {
        let y = permutahedron_project(&fixed, &z).unwrap().y;
        ensure(y.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12), || {
            format!("fixture z={z:?}: got {y:?}, want {want:?}")
        })?;
        let s = variational_slack(&fixed, &z, &y);
        ensure(s <= 1e-9, || format!("fixture z={z:?}: slack {s:e}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::NEG_INFINITY;
    for case in 0..200 {
        let n = rng.gen_range(2..=6);
        let w = random_weights(&mut rng, n);
        let z: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    rng.gen_range(-2..=2) as f64
                } else {
                    rng.gen_range(-3.0..3.0)
                }
            })
            .collect();
        let y = permutahedron_project(&w, &z).unwrap().y;
        let s = variational_slack(&w, &z, &y);
        worst = worst.max(s);
        ensure(s <= 1e-9, || {
            format!("case {case}: w={:?} z={z:?} slack {s:e}", w.as_slice())
        })?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "3 fixtures + 200 cases, worst slack {worst:.2e}, {:.2?}",
        start.elapsed()
    ))
}

/// Grid minimizer of `||x - s||^2` over non-decreasing `x` in `{0, h, ..., 1}^n`, n <= 3.
fn pav_grid(s: &[f64], steps: usize) -> Vec<f64> {
    let h = 1.0 / steps as f64;
    let cost = |x: &[f64]| x.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    // the last coordinate is minimized exactly over grid points >= its predecessor
    let last = |lo: usize, target: f64| -> usize { ((target / h).round().max(0.0) as usize).clamp(lo, steps) };
    let mut best = (f64::INFINITY, Vec::new());
    match s.len() {
        1 => {
            for a in 0..=steps {
                let x = [a as f64 * h];
                let c = cost(&x);
                if c < best.0 {
                    best = (c, x.to_vec());
                }
            }
        }
        2 => {
            for a in 0..=steps {
                let x = [a as f64 * h, last(a, s[1]) as f64 * h];
                let c = cost(&x);
                if c < best.0 {
                    best = (c, x.to_vec());
                }
            }
        }
        3 => {
            for a in 0..=steps {
                for b in a..=steps {
                    let x = [a as f64 * h, b as f64 * h, last(b, s[2]) as f64 * h];
                    let c = cost(&x);
                    if c < best.0 {
                        best = (c, x.to_vec());
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    best.1
}

fn check_pav_invariants(s: &[f64]) -> Result<(), String> {
    let fit = pav_fit(s);
    let x = &fit.values;
    ensure(x.windows(2).all(|p| p[0] <= p[1]), || format!("not monotone for {s:?}"))?;
    let mut next = 0;
    for r in &fit.blocks {
        ensure(r.start == next && !r.is_empty(), || {
            format!("blocks do not tile for {s:?}")
        })?;
        next = r.end;
        let mean = s[r.clone()].iter().sum::<f64>() / r.len() as f64;
        ensure(x[r.clone()].iter().all(|&v| v == mean), || {
            format!("block {r:?} is not its mean for {s:?}")
        })?;
        // KKT: prefix sums of s - x inside a block are >= 0 and vanish at its end
        let scale = 1.0 + s[r.clone()].iter().map(|v| v.abs()).sum::<f64>();
        let mut acc = 0.0;
        for i in r.clone() {
            acc += s[i] - x[i];
            ensure(acc >= -1e-13 * scale, || format!("KKT prefix {acc:e} at {i} for {s:?}"))?;
        }
        ensure(acc.abs() <= 1e-13 * scale, || {
            format!("KKT block sum {acc:e} for {s:?}")
        })?;
    }
    ensure(next == s.len(), || format!("blocks do not cover {s:?}"))
}

/// Integer inputs: KKT checked in exact integer arithmetic.
fn check_pav_integer(s: &[i64]) -> Result<(), String> {
    let sf: Vec<f64> = s.iter().map(|&v| v as f64).collect();
    let fit = pav_fit(&sf);
    for r in &fit.blocks {
        let len = r.len() as i64;
        let total: i64 = s[r.clone()].iter().sum();
        let mut prefix = 0i64;
        for (c, i) in r.clone().enumerate() {
            prefix += s[i];
            ensure(prefix * len >= total * (c as i64 + 1), || {
                format!("integer KKT fails in {r:?} for {s:?}")
            })?;
        }
        ensure(fit.values[r.start] == total as f64 / len as f64, || {
            format!("integer block mean for {s:?}")
        })?;
    }
    Ok(())
}

fn c2_pav() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = 1 + case % 3;
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = pav_fit(&s).values;
        let g = pav_grid(&s, 1000);
        let err = x.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err <= 2e-3, || {
            format!("grid mismatch {err:e} on {s:?}: pav {x:?}, grid {g:?}")
        })?;
    }
    for _ in 0..5_000 {
        let n = rng.gen_range(1..=100);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        check_pav_invariants(&s)?;
    }
    for _ in 0..5_000 {
        let n = rng.gen_range(1..=100);
        let s: Vec<i64> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
        check_pav_integer(&s)?;
        check_pav_invariants(&s.iter().map(|&v| v as f64).collect::<Vec<_>>())?;
    }
    Ok(format!(
        "grid sup error {worst:.2e} on 100 inputs, invariants on 10^4 inputs"
    ))
}

fn c3_moreau() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-6;
    let mut worst_rel: f64 = 0.0;
    for case in 0..100 {
        let n = rng.gen_range(1..=8);
        let w = random_weights(&mut rng, n);
        let beta = rng.gen_range(0.1..10.0);
        // a few shared levels, then a small jitter to separate the ties
        let levels: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z: Vec<f64> = (0..n)
            .map(|_| levels[rng.gen_range(0..3)] + rng.gen_range(-1e-3..1e-3))
            .collect();
        let grad = moreau_grad_dual(&w, &z, beta).unwrap();
        let fd: Vec<f64> = (0..n)
            .map(|i| {
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[i] += h;
                zm[i] -= h;
                (moreau_envelope_value(&w, &zp, beta).unwrap() - moreau_envelope_value(&w, &zm, beta).unwrap())
                    / (2.0 * h)
            })
            .collect();
        let diff = fd.iter().zip(&grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rel = diff / dot(&grad, &grad).sqrt().max(1e-300);
        worst_rel = worst_rel.max(rel);
        ensure(rel <= 1e-5, || {
            format!("case {case}: relative error {rel:e}, fd {fd:?}, grad {grad:?}")
        })?;
    }
    let mut worst_slack = f64::NEG_INFINITY;
    for case in 0..1000 {
        let n = rng.gen_range(1..=12);
        let w = random_weights(&mut rng, n);
        let beta = rng.gen_range(0.1..10.0);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let env = moreau_envelope_value(&w, &z, beta).unwrap();
        let exact = -ggf_value(&w, &z).unwrap();
        let gap = 0.5 * beta * dot(w.as_slice(), w.as_slice());
        let slack = (env - exact).max(exact - env - gap);
        worst_slack = worst_slack.max(slack);
        ensure(slack <= 1e-9, || {
            format!("sandwich case {case}: env {env}, h {exact}, gap {gap}")
        })?;
    }
    Ok(format!(
        "fd relative error {worst_rel:.2e}, sandwich slack {worst_slack:.2e}"
    ))
}

/// Ordered K-tuples of distinct items out of `m`.
fn ordered_tuples(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for t in ordered_tuples(m, k - 1) {
        for j in 0..m {
            if !t.contains(&j) {
                let mut t = t.clone();
                t.push(j);
                out.push(t);
            }
        }
    }
    out
}

fn c4_direction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let shapes: Vec<(usize, usize, usize)> = (1..=3)
        .flat_map(|n| (1..=3).flat_map(move |m| (1..=m.min(2)).map(move |k| (n, m, k))))
        .collect();
    for draw in 0..1024 {
        let (n, m, k) = shapes[draw % shapes.len()];
        let mu: Vec<f64> = (0..n * m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let prefs = PreferenceMatrix::new(n, m, mu.clone()).unwrap();
        let exp = dcg_exposure_weights(m, k).unwrap();
        let b = exp.top().to_vec();
        let lambda = rng.gen_range(0.0..=1.0);
        let beta = rng.gen_range(0.1..5.0);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let y1 = moreau_grad_dual(&random_weights(&mut rng, n), &u, beta).unwrap();
        let y2 = moreau_grad_dual(&random_weights(&mut rng, m), &v, beta).unwrap();
        let got = update_direction(&y1, &y2, &prefs, lambda, k).unwrap();
        // linearized objective (1 - lambda) <-y1, u(Q)> + lambda <-y2, v(Q)>, user by user
        let gain = |i: usize, items: &[usize]| -> f64 {
            items
                .iter()
                .zip(&b)
                .map(|(&j, &bk)| (1.0 - lambda) * -y1[i] * mu[i * m + j] * bk + lambda * -y2[j] * bk)
                .sum()
        };
        for i in 0..n {
            let chosen: Vec<usize> = got.user(i).iter().map(|&j| j as usize).collect();
            let mut distinct = chosen.clone();
            distinct.sort_unstable();
            distinct.dedup();
            ensure(distinct.len() == k, || format!("draw {draw}: user {i} got {chosen:?}"))?;
            let best = ordered_tuples(m, k)
                .iter()
                .map(|t| gain(i, t))
                .fold(f64::NEG_INFINITY, f64::max);
            let mine = gain(i, &chosen);
            ensure(mine >= best - 1e-12, || {
                format!("draw {draw} (n={n}, m={m}, K={k}): user {i} gain {mine} < enumerated {best}")
            })?;
        }
    }
    Ok(format!("1024 draws over {} shapes", shapes.len()))
}

fn tiny_prefs() -> PreferenceMatrix {
    PreferenceMatrix::from_rows(&[vec![0.9, 0.1], vec![0.7, 0.3]]).unwrap()
}

fn tiny_config() -> OptimizerConfig {
    OptimizerConfig {
        iterations: 2000,
        k: 1,
        lambda: 1.0,
        user_weights: WeightScheme::Uniform,
        item_weights: WeightScheme::Explicit(vec![1.0, 0.5]),
        record_wall_time: false,
        ..Default::default()
    }
}

fn c5_tiny() -> Outcome {
    let start = Instant::now();
    let prefs = tiny_prefs();
    let exp = dcg_exposure_weights(2, 1).unwrap();
    let oracle = grid_oracle(
        &TinyInstance {
            prefs: prefs.clone(),
            exp: exp.clone(),
            exclude_self: false,
        },
        &TinyObjective::TwoSided {
            lambda: 1.0,
            w_user: GgfWeights::uniform(2).unwrap(),
            w_item: GgfWeights::new(vec![1.0, 0.5]).unwrap(),
        },
        1e-3,
    )
    .unwrap();
    ensure((oracle.optimum - 1.5).abs() <= 1e-12, || {
        format!("oracle optimum {}", oracle.optimum)
    })?;
    let (_, trace) = fw_smoothing(&tiny_config(), &prefs, &exp).unwrap();
    let last = trace.final_objective();
    ensure(last >= oracle.optimum - 0.01, || {
        format!("final {last} < {} - 0.01", oracle.optimum)
    })?;
    // 2 D b1 ||w|| / sqrt(t) with D = sqrt(2 n m), b1 = 1, w = (1, 0.5)
    let scale = 2.0 * (2.0f64 * 2.0 * 2.0).sqrt() * 1.0 * (1.0f64 + 0.25).sqrt();
    let f_star = oracle.upper_bound();
    for r in &trace.records {
        let bound = scale / (r.t as f64).sqrt();
        ensure(f_star - r.objective <= bound, || {
            format!("t={}: gap {} exceeds bound {bound}", r.t, f_star - r.objective)
        })?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "oracle {:.4}, final {last:.6}, bound held at {} logged t, {:.2?}",
        oracle.optimum,
        trace.records.len(),
        start.elapsed()
    ))
}

fn synthetic_config(iterations: usize) -> OptimizerConfig {
    OptimizerConfig {
        iterations,
        k: SYN_K,
        lambda: 0.5,
        user_weights: WeightScheme::Uniform,
        item_weights: WeightScheme::Gini,
        record_wall_time: false,
        ..Default::default()
    }
}

fn c6_smoothing_vs_subgradient() -> Outcome {
    let betas = [1.0, 10.0, 100.0];
    let mut notes = Vec::new();
    let tiny = convergence_compare(
        &tiny_config(),
        &tiny_prefs(),
        &dcg_exposure_weights(2, 1).unwrap(),
        &betas,
    )
    .unwrap();
    let prefs = synthetic_prefs(SYN_N, SYN_N, SYN_SKEW, SYN_SEED).unwrap();
    let exp = dcg_exposure_weights(SYN_N, SYN_K).unwrap();
    let big = convergence_compare(&synthetic_config(2000), &prefs, &exp, &betas).unwrap();
    for (name, cmp) in [("tiny", &tiny), ("50x50", &big)] {
        let sub = cmp.subgradient.final_objective();
        for (b, tr) in &cmp.smoothing {
            let s = tr.final_objective();
            ensure(s >= sub - 1e-8, || {
                format!("{name} beta0={b}: smoothing {s} < subgradient {sub}")
            })?;
            notes.push(format!("{name} b0={b}: {s:.4}>={sub:.4}"));
        }
    }
    Ok(notes.join(", "))
}

fn c7_gini_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.gen_range(1..=200);
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        if x.iter().sum::<f64>() == 0.0 {
            x[0] = 1.0;
        }
        let total: f64 = x.iter().sum();
        // mean absolute difference form of the Gini index
        let pairs: f64 = x.iter().flat_map(|a| x.iter().map(move |b| (a - b).abs())).sum();
        let g_pairs = pairs / (2.0 * n as f64 * total);
        let g = gini_index(&x).unwrap();
        ensure((g - g_pairs).abs() <= 1e-9, || {
            format!("case {case}: gini {g} vs pairwise {g_pairs}")
        })?;
        let lhs = ggf_value(&gini_weights(n).unwrap(), &x).unwrap();
        let rhs = total / 2.0 * (1.0 + 1.0 / n as f64 - g);
        worst = worst.max((lhs - rhs).abs());
        ensure((lhs - rhs).abs() <= 1e-9, || format!("case {case}: {lhs} vs {rhs}"))?;
    }
    Ok(format!("1000 vectors, worst error {worst:.2e}"))
}

fn c8_sweep_audit() -> Outcome {
    let start = Instant::now();
    let prefs = synthetic_prefs(SYN_N, SYN_N, SYN_SKEW, SYN_SEED).unwrap();
    let exp = dcg_exposure_weights(SYN_N, SYN_K).unwrap();
    let records = pareto_sweep(&synthetic_config(2000), &LAMBDA_GRID, &prefs, &exp, &[0.25, 0.5]).unwrap();
    let audit = lorenz_audit(&records, 1e-6).unwrap();
    ensure(audit.violations.is_empty(), || {
        format!("audit violations {:?}", audit.violations)
    })?;
    let (first, last) = (&records[0], &records[records.len() - 1]);
    ensure(last.gini_exposure < first.gini_exposure, || {
        format!(
            "item gini {} at 0.99 vs {} at 0.01",
            last.gini_exposure, first.gini_exposure
        )
    })?;
    let b = exp.top();
    let best: f64 = (0..SYN_N)
        .map(|i| {
            let mut row = prefs.row(i).to_vec();
            row.sort_by(|a, b| b.total_cmp(a));
            row.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum();
    let gap = (first.total_utility - best).abs();
    ensure(gap <= 1e-3, || {
        format!("total utility {} vs utilitarian {best}", first.total_utility)
    })?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{} pairs, 0 violations, gini {:.4} -> {:.4}, utility gap {gap:.2e}, {:.2?}",
        audit.pairs_checked,
        first.gini_exposure,
        last.gini_exposure,
        start.elapsed()
    ))
}

fn c9_quantile() -> Outcome {
    let exp = dcg_exposure_weights(SYN_N, SYN_K).unwrap();
    let mut notes = Vec::new();
    for seed in [1u64, 2, 3] {
        let prefs = synthetic_prefs(SYN_N, SYN_N, SYN_SKEW, seed).unwrap();
        let uniform = synthetic_config(2000);
        let quantile = OptimizerConfig {
            user_weights: WeightScheme::Quantile { q: 0.25, omega: 1.0 },
            ..uniform.clone()
        };
        let q25 = |config: &OptimizerConfig| {
            let (p, _) = optimize(config, &prefs, &exp).unwrap();
            quantile_cumulative_utility(&user_utilities(&p, &prefs, &exp).unwrap(), 0.25).unwrap()
        };
        let (a, b) = (q25(&quantile), q25(&uniform));
        ensure(a >= b, || format!("seed {seed}: quantile weights {a} < all-ones {b}"))?;
        notes.push(format!("seed {seed}: {a:.4}>={b:.4}"));
    }
    Ok(notes.join(", "))
}

fn c10_reciprocal() -> Outcome {
    let prefs = PreferenceMatrix::from_rows(&[vec![0.0, 0.9, 0.3], vec![0.9, 0.0, 0.5], vec![0.3, 0.5, 0.0]]).unwrap();
    let exp = dcg_exposure_weights(3, 1).unwrap();
    let instance = TinyInstance {
        prefs: prefs.clone(),
        exp: exp.clone(),
        exclude_self: true,
    };
    let mut notes = Vec::new();
    for t in [0.0, 0.5, 1.0] {
        let scheme = WeightScheme::Tradeoff { t };
        let oracle = grid_oracle(
            &instance,
            &TinyObjective::Reciprocal {
                side_balance: 0.5,
                w: scheme.resolve(3).unwrap(),
            },
            0.01,
        )
        .unwrap();
        let config = OptimizerConfig {
            iterations: 1000,
            k: 1,
            user_weights: scheme,
            item_weights: WeightScheme::Uniform,
            objective: ObjectiveKind::ReciprocalGgf { side_balance: 0.5 },
            record_wall_time: false,
            ..Default::default()
        };
        let (policy, trace) = fw_smoothing(&config, &prefs, &exp).unwrap();
        let f = trace.final_objective();
        ensure(f >= oracle.optimum - 0.01, || {
            format!("t={t}: final {f} < oracle {} - 0.01", oracle.optimum)
        })?;
        for c in policy.components() {
            for i in 0..3 {
                ensure(!c.assignment.user(i).contains(&(i as u32)), || {
                    format!("t={t}: user {i} recommended itself")
                })?;
            }
        }
        notes.push(format!("t={t}: {f:.4} vs oracle {:.4}", oracle.optimum));
    }
    Ok(notes.join(", "))
}

fn run_cli(threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lorenz-rank"))
        .env("LORENZ_RANK_THREADS", threads)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} with {threads} threads: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

const OUTPUTS: [&str; 6] = [
    "policy.json",
    "trace.csv",
    "sweep.csv",
    "compare.csv",
    "recip.json",
    "recip.csv",
];

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let prefs = d.join("prefs.txt");
    let square = d.join("tiny.txt");
    run_cli(
        "1",
        &[
            "gen",
            "--n",
            "50",
            "--m",
            "50",
            "--skew",
            "0.5",
            "--seed",
            "1",
            "--out",
            &s(&prefs),
        ],
    )?;
    std::fs::write(&square, "# dense 3 3\n0,0.9,0.3\n0.9,0,0.5\n0.3,0.5,0\n").map_err(|e| e.to_string())?;
    let config = d.join("config.json");
    std::fs::write(
        &config,
        r#"{"iterations": 2000, "k": 5, "lambda": 0.5, "user_weights": "uniform", "item_weights": "gini",
            "seed": 1, "record_wall_time": false}"#,
    )
    .map_err(|e| e.to_string())?;
    let recip = d.join("recip.json");
    std::fs::write(
        &recip,
        r#"{"iterations": 1000, "k": 1, "user_weights": "tradeoff:t=0.5", "item_weights": "uniform",
            "objective": {"kind": "reciprocal-ggf", "side_balance": 0.5}, "record_wall_time": false}"#,
    )
    .map_err(|e| e.to_string())?;

    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for threads in ["1", "4"] {
        let f = |name: &str| d.join(format!("{name}-{threads}"));
        run_cli(
            threads,
            &[
                "optimize",
                "--prefs",
                &s(&prefs),
                "--config",
                &s(&config),
                "--out",
                &s(&f("policy.json")),
                "--trace",
                &s(&f("trace.csv")),
            ],
        )?;
        run_cli(
            threads,
            &[
                "sweep",
                "--prefs",
                &s(&prefs),
                "--config",
                &s(&config),
                "--out",
                &s(&f("sweep.csv")),
            ],
        )?;
        run_cli(
            threads,
            &[
                "compare",
                "--prefs",
                &s(&prefs),
                "--config",
                &s(&config),
                "--out",
                &s(&f("compare.csv")),
            ],
        )?;
        run_cli(
            threads,
            &[
                "optimize",
                "--prefs",
                &s(&square),
                "--config",
                &s(&recip),
                "--out",
                &s(&f("recip.json")),
                "--trace",
                &s(&f("recip.csv")),
            ],
        )?;
        outputs.push(OUTPUTS.iter().map(|n| read(&f(n))).collect());
    }
    for (i, name) in OUTPUTS.iter().enumerate() {
        ensure(!outputs[0][i].is_empty(), || format!("{name} is empty"))?;
        ensure(outputs[0][i] == outputs[1][i], || {
            format!("{name} differs between 1 and 4 threads")
        })?;
    }
    Ok(format!(
        "{} output files byte-identical across 1 and 4 threads",
        OUTPUTS.len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("projection oracle", c1_projection),
        ("PAV oracle", c2_pav),
        ("Moreau gradient", c3_moreau),
        ("direction optimality", c4_direction),
        ("tiny-instance optimality and rate", c5_tiny),
        ("smoothing vs subgradient", c6_smoothing_vs_subgradient),
        ("Gini identity", c7_gini_identity),
        ("sweep audit", c8_sweep_audit),
        ("quantile task", c9_quantile),
        ("reciprocal", c10_reciprocal),
        ("determinism", c11_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
