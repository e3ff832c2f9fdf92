//! Smooth baseline objectives: additive concave welfare (`welf`) and the
//! standard-deviation exposure penalty (`eq-exposure`). Gradient scores are
//! derivatives with respect to the exposure `e_ij` that user `i` gives item
//! `j`, which is what the top-K direction step consumes.

use crate::error::{invalid, Error, Result};
use crate::model::PreferenceMatrix;

/// Floor applied to utilities before evaluating `log` or negative powers.
pub const POS_EPS: f64 = 1e-12;
/// Added under the square root of the std penalty when differentiating.
pub const SQ_EPS: f64 = 1e-12;

/// `phi(x, a) = x^a` (a > 0), `log x` (a = 0), `-x^a` (a < 0).
pub fn welfare_power(x: f64, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 && x <= 0.0 {
        return Err(Error::Domain(format!("phi({x}, {alpha}) needs a positive argument")));
    }
    Ok(if alpha > 0.0 {
        x.powf(alpha)
    } else if alpha == 0.0 {
        x.ln()
    } else {
        -x.powf(alpha)
    })
}

/// Derivative of [`welfare_power`] in `x`.
pub fn welfare_power_derivative(x: f64, alpha: f64) -> Result<f64> {
    if alpha < 1.0 && x <= 0.0 {
        return Err(Error::Domain(format!("phi'({x}, {alpha}) needs a positive argument")));
    }
    Ok(if alpha > 0.0 {
        alpha * x.powf(alpha - 1.0)
    } else if alpha == 0.0 {
        1.0 / x
    } else {
        -alpha * x.powf(alpha - 1.0)
    })
}

fn floored(x: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        x.max(POS_EPS)
    } else {
        x
    }
}

/// Derivative with the floor also applied for `0 < alpha < 1`, where the
/// slope is unbounded at zero.
pub(crate) fn welfare_slope(x: f64, alpha: f64) -> f64 {
    let x = if alpha < 1.0 { x.max(POS_EPS) } else { x };
    welfare_power_derivative(x, alpha).expect("argument floored above zero")
}

/// `(1 - lambda) sum_i phi(u_i, a1) + lambda sum_j phi(v_j, a2)`.
pub fn welf_objective(u: &[f64], v: &[f64], alpha_user: f64, alpha_item: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mut total = 0.0;
    for &x in u {
        total += (1.0 - lambda) * welfare_power(floored(x, alpha_user), alpha_user)?;
    }
    for &x in v {
        total += lambda * welfare_power(floored(x, alpha_item), alpha_item)?;
    }
    Ok(total)
}

/// Row-major `n x m` gradient of [`welf_objective`] with respect to `e_ij`.
pub fn welf_gradient_scores(
    u: &[f64],
    v: &[f64],
    prefs: &PreferenceMatrix,
    alpha_user: f64,
    alpha_item: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_dims(u, v, prefs)?;
    check_lambda(lambda)?;
    let user: Vec<f64> = u
        .iter()
        .map(|&x| (1.0 - lambda) * welfare_slope(x, alpha_user))
        .collect();
    let item: Vec<f64> = v.iter().map(|&x| lambda * welfare_slope(x, alpha_item)).collect();
    Ok(dense_scores(prefs, &user, &item))
}

/// `sqrt(sum (x - mean)^2)` and the centred values.
fn spread(x: &[f64]) -> (f64, Vec<f64>) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centred: Vec<f64> = x.iter().map(|xi| xi - mean).collect();
    (centred.iter().map(|c| c * c).sum(), centred)
}

/// `sum_i u_i - (lambda / m) sqrt(sum_j (v_j - mean v)^2)`.
pub fn eq_exposure_objective(u: &[f64], v: &[f64], lambda: f64) -> Result<f64> {
    if v.is_empty() {
        return invalid("exposure vector must be non-empty");
    }
    let (ss, _) = spread(v);
    Ok(u.iter().sum::<f64>() - lambda / v.len() as f64 * ss.sqrt())
}

/// Gradient of the std penalty term `-(lambda / len) sqrt(ss + eps)`.
pub(crate) fn std_penalty_gradient(x: &[f64], lambda: f64) -> Vec<f64> {
    let (ss, centred) = spread(x);
    let scale = lambda / x.len() as f64 / (ss + SQ_EPS).sqrt();
    centred.into_iter().map(|c| -scale * c).collect()
}

/// Row-major `n x m` gradient of [`eq_exposure_objective`] with respect to `e_ij`.
pub fn eq_exposure_gradient_scores(u: &[f64], v: &[f64], prefs: &PreferenceMatrix, lambda: f64) -> Result<Vec<f64>> {
    check_dims(u, v, prefs)?;
    Ok(dense_scores(
        prefs,
        &vec![1.0; u.len()],
        &std_penalty_gradient(v, lambda),
    ))
}

fn dense_scores(prefs: &PreferenceMatrix, user: &[f64], item: &[f64]) -> Vec<f64> {
    let m = prefs.m();
    let mut out = Vec::with_capacity(prefs.n() * m);
    for (i, &a) in user.iter().enumerate() {
        out.extend(prefs.row(i).iter().zip(item).map(|(&mu, &d)| a * mu + d));
    }
    out
}

fn check_dims(u: &[f64], v: &[f64], prefs: &PreferenceMatrix) -> Result<()> {
    if u.len() != prefs.n() || v.len() != prefs.m() {
        return invalid(format!(
            "utility/exposure lengths {}/{} do not match a {}x{} matrix",
            u.len(),
            v.len(),
            prefs.n(),
            prefs.m()
        ));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return invalid(format!("lambda {lambda} must lie in [0, 1]"));
    }
    Ok(())
}
