use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::nn::{Real, Tensor};

/// Orthogonal initialisation of a `rows × cols` matrix scaled by `gain`;
/// higher-rank shapes are flattened to `shape[0] × rest`.
pub fn orthogonal<T: Real, R: Rng + ?Sized>(shape: &[usize], gain: f64, rng: &mut R) -> Tensor<T> {
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    let (long, short) = (rows.max(cols), rows.min(cols));
    // `short` orthonormal vectors of length `long`, by modified Gram-Schmidt.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Tensor::from_fn(shape, |idx| {
        let (r, c) = (idx / cols, idx % cols);
        let v = if rows >= cols { basis[c][r] } else { basis[r][c] };
        T::of(gain * v)
    })
}

pub fn uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
}
