use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::ensure_finite;
use crate::nn::Real;

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut p: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = p.iter().copied().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

/// Shannon entropy (nats) of `softmax(logits)`.
pub fn entropy<T: Real>(logits: &[T]) -> T {
    let logp = log_softmax(logits);
    -logp.iter().map(|&l| l.exp() * l).sum::<T>()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from `softmax(logits)`; returns it with its log-probability.
pub fn categorical<T: Real, R: Rng + ?Sized>(logits: &[T], rng: &mut R) -> Result<(usize, T)> {
    if logits.len() < 2 {
        return Err(Error::Shape {
            op: "categorical",
            detail: format!("need at least 2 logits, got {}", logits.len()),
        });
    }
    ensure_finite(logits, "categorical logits")?;
    let logp = log_softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &l) in logp.iter().enumerate() {
        acc += l.f64().exp();
        if u < acc {
            chosen = Some(i);
            break;
        }
    }
    // Rounding can leave the cumulative sum just under 1.
    let idx = chosen.unwrap_or_else(|| argmax(&logp));
    Ok((idx, logp[idx]))
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> Result<T> {
    if target >= logits.len() {
        return Err(Error::OutOfRange {
            what: "cross-entropy target",
            value: target,
            limit: logits.len(),
        });
    }
    Ok(-log_softmax(logits)[target])
}

/// Loss and its gradient w.r.t. the logits: `softmax - onehot(target)`.
pub fn cross_entropy_grad<T: Real>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    let loss = cross_entropy(logits, target)?;
    let mut grad = softmax(logits);
    grad[target] -= T::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_sample_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = [0.0f64; 4];
        let p = softmax(&logits);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[categorical(&logits, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn dominant_logit_wins() {
        let p = softmax(&[10.0f64, -10.0]);
        assert!(p[0] > 0.9999);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zeros = (0..1000)
            .filter(|_| categorical(&[10.0f64, -10.0], &mut rng).unwrap().0 == 0)
            .count();
        assert!(zeros >= 999);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalised() {
        let z = [0.3f64, -1.2, 2.5, 0.0, 4.1];
        let shifted: Vec<f64> = z.iter().map(|v| v + 7.3).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let a32 = softmax(&z.map(|v| v as f32));
        assert!((a32.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sampled_log_prob_matches_log_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = [0.5f64, 1.5, -0.5];
        let ls = log_softmax(&z);
        for _ in 0..50 {
            let (a, lp) = categorical(&z, &mut rng).unwrap();
            assert_eq!(lp, ls[a]);
        }
    }

    #[test]
    fn categorical_rejects_bad_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(categorical(&[f64::NAN, 0.0], &mut rng).is_err());
        assert!(categorical(&[1.0f64], &mut rng).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let mut peaked = [0.0f64; 5];
        peaked[2] = 20.0;
        assert!(cross_entropy(&peaked, 2).unwrap() < 1e-8);
        let ce = cross_entropy(&[0.0f64; 15], 9).unwrap();
        assert!((ce - 15f64.ln()).abs() < 1e-12);
        assert!((ce - 2.708).abs() < 1e-3);
        assert!(cross_entropy(&[0.0f64; 3], 3).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1f64, 2.0, -1.0, 0.0]), 1);
        assert_eq!(argmax(&[1.0f64, 1.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn uniform_entropy_is_log_k() {
        assert!((entropy(&[0.0f64; 4]) - 4f64.ln()).abs() < 1e-12);
    }
}
