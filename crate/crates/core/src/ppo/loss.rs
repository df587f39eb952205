use crate::error::{shape_err, Error, Result};
use crate::nn::loss::log_softmax;
use crate::nn::Real;

use super::PpoConfig;

/// Means over a minibatch. `policy_loss` is the negated clipped surrogate,
/// `value_loss` the plain mean squared error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl LossReport {
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        self.policy_loss + cfg.value_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }

    pub(crate) fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut out = LossReport::default();
        for r in reports {
            out.policy_loss += r.policy_loss / n;
            out.value_loss += r.value_loss / n;
            out.entropy += r.entropy / n;
            out.clip_fraction += r.clip_fraction / n;
        }
        out
    }
}

/// `min(ratio·A, clip(ratio, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_surrogate`] w.r.t. the ratio: `A` on the
/// unclipped branch, zero where the clipped branch is the minimum.
pub fn surrogate_ratio_grad(ratio: f64, adv: f64, eps: f64) -> f64 {
    if ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
        adv
    } else {
        0.0
    }
}

/// PPO loss over `n` rows and its gradient w.r.t. logits `[n, k]` and
/// values `[n]`. The minimised quantity is
/// `−surrogate + value_coef·(V − target)² − entropy_coef·H`, averaged.
#[allow(clippy::too_many_arguments)]
pub fn ppo_loss<T: Real>(
    logits: &[T],
    values: &[T],
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    targets: &[f64],
    cfg: &PpoConfig,
) -> Result<(LossReport, Vec<T>, Vec<T>)> {
    let n = actions.len();
    if n == 0
        || values.len() != n
        || old_log_probs.len() != n
        || advantages.len() != n
        || targets.len() != n
        || logits.len() % n != 0
    {
        return Err(shape_err("ppo loss", format!("{n} actions, {} logits", logits.len())));
    }
    let k = logits.len() / n;
    let inv_n = 1.0 / n as f64;
    let mut report = LossReport::default();
    let mut dlogits = vec![T::zero(); logits.len()];
    let mut dvalues = vec![T::zero(); n];
    for r in 0..n {
        let a = actions[r];
        if a >= k {
            return Err(Error::OutOfRange { what: "action", value: a, limit: k });
        }
        let lp: Vec<f64> = log_softmax(&logits[r * k..(r + 1) * k]).iter().map(|v| v.f64()).collect();
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let h: f64 = -p.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
        let ratio = (lp[a] - old_log_probs[r]).exp();
        let adv = advantages[r];
        report.policy_loss -= clipped_surrogate(ratio, adv, cfg.clip_eps) * inv_n;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            report.clip_fraction += inv_n;
        }
        let v = values[r].f64();
        report.value_loss += (v - targets[r]).powi(2) * inv_n;
        report.entropy += h * inv_n;

        // d(−surrogate)/dlogp_a = −ratio·g, and dlogp_a/dz = onehot − p.
        let g = -ratio * surrogate_ratio_grad(ratio, adv, cfg.clip_eps);
        let row = &mut dlogits[r * k..(r + 1) * k];
        for j in 0..k {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let d_pg = g * (onehot - p[j]);
            // d(−H)/dz_j = p_j (log p_j + H)
            let d_ent = p[j] * (lp[j] + h);
            row[j] = T::of((d_pg + cfg.entropy_coef * d_ent) * inv_n);
        }
        dvalues[r] = T::of(2.0 * cfg.value_coef * (v - targets[r]) * inv_n);
    }
    let total = report.total(cfg);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "ppo loss (policy {}, value {}, entropy {})",
            report.policy_loss, report.value_loss, report.entropy
        )));
    }
    Ok((report, dlogits, dvalues))
}
