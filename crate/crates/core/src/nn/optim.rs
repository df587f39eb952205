use crate::error::{shape_err, Error, Result};
use crate::nn::{ParamStore, Real, Tensor};

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>], lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Tensor<T>], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn for_store(store: &ParamStore<T>, lr: f64) -> Self {
        Self::new(store.values(), lr)
    }

    /// Applies one update using the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        let (values, grads) = store.values_and_grads_mut();
        adam_update(values, grads, self)
    }
}

/// One bias-corrected Adam step. Fails without touching `params` if any
/// gradient is non-finite.
pub fn adam_update<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err("adam", "parameter, gradient and moment counts differ"));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(shape_err("adam", format!("parameter {i} shape mismatch")));
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (b1t, b2t) = (T::of(b1), T::of(b2));
    let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    // lr * mhat / (sqrt(vhat) + eps) with the corrections folded in.
    let step = T::of(state.lr / c1);
    let sc2 = T::of(c2.sqrt());
    let eps = T::of(state.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = b1t * *mv + ob1 * gv;
            *vv = b2t * *vv + ob2 * gv * gv;
            *pv -= step * *mv / (vv.sqrt() / sc2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::new(vec![1], vec![v]).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::from_fn(&[3, 2], |i| i as f64)];
        let before = p.clone();
        let g = vec![Tensor::zeros(&[3, 2])];
        let mut st = AdamState::new(&p, 0.01);
        for _ in 0..5 {
            adam_update(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p, 0.001);
        adam_update(&mut p, &scalar(1.0), &mut st).unwrap();
        let expect = -0.001 / (1.0 + st.eps);
        assert!((p[0].data()[0] - expect).abs() < 1e-9);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_is_bounded_by_lr() {
        let mut p = vec![Tensor::from_fn(&[50], |_| 0.0)];
        let g = vec![Tensor::from_fn(&[50], |i| ((i as f64) - 25.0) * 3.7)];
        let mut st = AdamState::new(&p, 0.01);
        adam_update(&mut p, &g, &mut st).unwrap();
        assert!(p[0].data().iter().all(|v| v.abs() <= 0.01 * (1.0 + 1e-6)));
    }

    #[test]
    fn descends_a_parabola() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(&p, 0.1);
        for _ in 0..100 {
            let g = scalar(2.0 * p[0].data()[0]);
            adam_update(&mut p, &g, &mut st).unwrap();
        }
        assert!(p[0].data()[0].abs() < 0.05, "{}", p[0].data()[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(&p, 0.1);
        assert!(adam_update(&mut p, &scalar(f64::INFINITY), &mut st).is_err());
        assert_eq!(p[0].data()[0], 1.0);
        assert_eq!(st.t, 0);
    }
}
