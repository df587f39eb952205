use crate::error::{shape_err, Error, Result};

/// `Σ γ^i r_i`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

/// Generalised advantage estimates and value targets for one worker's
/// trajectory. `dones[t]` marks that step `t` ended an episode, so nothing
/// after it leaks into `A_t`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(shape_err(
            "gae",
            format!("rewards {n}, values {}, dones {}", values.len(), dones.len()),
        ));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Shifts to mean 0 and scales to unit (population) std, with 1e-8 in the
/// denominator.
pub fn normalize_advantages(adv: &mut [f64]) -> Result<()> {
    if adv.is_empty() {
        return Ok(());
    }
    if adv.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("advantages".into()));
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) * scale);
    Ok(())
}
