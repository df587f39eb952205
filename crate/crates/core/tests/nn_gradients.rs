//! Analytic gradients against central finite differences (64-bit, h = 1e-5).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use worldprobe::nn::gradcheck::{central_difference, max_relative_error, STEP};
use worldprobe::nn::layers::*;
use worldprobe::nn::loss::{cross_entropy, cross_entropy_grad};
use worldprobe::nn::{Activation, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Scalar projection loss `sum(out * proj)`.
fn project(out: &[f64], proj: &[f64]) -> f64 {
    out.iter().zip(proj).map(|(a, b)| a * b).sum()
}

#[test]
fn embedding_gradient_matches_finite_differences() {
    let mut r = rng(1);
    let table = rand_tensor(&[8, 5], &mut r);
    let ids: Vec<u8> = (0..9).map(|_| r.random_range(0..8u8)).collect();
    let proj: Vec<f64> = (0..45).map(|_| r.random_range(-1.0..1.0)).collect();

    let mut grad = Tensor::zeros(&[8, 5]);
    embedding_backward(&ids, &proj, &mut grad);
    let numeric = central_difference(
        |w| {
            let out = embedding_forward(&ids, &t(&[8, 5], w)).unwrap();
            project(out.data(), &proj)
        },
        table.data(),
        STEP,
    );
    let err = max_relative_error(grad.data(), &numeric);
    assert!(err < 1e-6, "embedding max rel err {err}");
}

#[test]
fn conv2d_gradient_matches_finite_differences() {
    let mut r = rng(2);
    let input = rand_tensor(&[2, 4, 4], &mut r);
    let kernel = rand_tensor(&[3, 2, 3, 3], &mut r);
    let bias = rand_tensor(&[3], &mut r);
    let proj: Vec<f64> = (0..48).map(|_| r.random_range(-1.0..1.0)).collect();

    let mut gk = Tensor::zeros(kernel.shape());
    let mut gb = Tensor::zeros(bias.shape());
    let gx = conv2d_backward(&input, &kernel, &proj, &mut gk, &mut gb).unwrap();

    let f_in = |x: &[f64]| {
        project(conv2d_forward(&t(&[2, 4, 4], x), &kernel, &bias).unwrap().data(), &proj)
    };
    let f_k = |k: &[f64]| {
        project(conv2d_forward(&input, &t(&[3, 2, 3, 3], k), &bias).unwrap().data(), &proj)
    };
    let f_b = |b: &[f64]| {
        project(conv2d_forward(&input, &kernel, &t(&[3], b)).unwrap().data(), &proj)
    };
    for (name, analytic, numeric) in [
        ("input", gx.data().to_vec(), central_difference(f_in, input.data(), STEP)),
        ("kernel", gk.data().to_vec(), central_difference(f_k, kernel.data(), STEP)),
        ("bias", gb.data().to_vec(), central_difference(f_b, bias.data(), STEP)),
    ] {
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "conv2d {name} max rel err {err}");
    }
}

#[test]
fn batched_conv_matches_per_sample_conv() {
    let mut r = rng(3);
    let input = rand_tensor(&[3, 2, 5, 4], &mut r);
    let kernel = rand_tensor(&[4, 2, 3, 3], &mut r);
    let bias = rand_tensor(&[4], &mut r);
    let batched = conv2d_forward(&input, &kernel, &bias).unwrap();
    for s in 0..3 {
        let one = t(&[2, 5, 4], &input.data()[s * 40..(s + 1) * 40]);
        let out = conv2d_forward(&one, &kernel, &bias).unwrap();
        assert_eq!(out.data(), &batched.data()[s * 80..(s + 1) * 80]);
    }
}

#[test]
fn linear_gradient_matches_finite_differences() {
    let mut r = rng(4);
    let x = rand_tensor(&[8], &mut r);
    let w = rand_tensor(&[5, 8], &mut r);
    let b = rand_tensor(&[5], &mut r);
    let proj: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();

    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(b.shape());
    let gx = linear_backward(&x, &w, &proj, &mut gw, &mut gb);

    let f_x = |v: &[f64]| project(linear_forward(&t(&[8], v), &w, &b).unwrap().data(), &proj);
    let f_w = |v: &[f64]| project(linear_forward(&x, &t(&[5, 8], v), &b).unwrap().data(), &proj);
    let f_b = |v: &[f64]| project(linear_forward(&x, &w, &t(&[5], v)).unwrap().data(), &proj);
    for (name, analytic, numeric) in [
        ("input", gx.data().to_vec(), central_difference(f_x, x.data(), STEP)),
        ("weight", gw.data().to_vec(), central_difference(f_w, w.data(), STEP)),
        ("bias", gb.data().to_vec(), central_difference(f_b, b.data(), STEP)),
    ] {
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "linear {name} max rel err {err}");
    }
}

#[test]
fn activations_gradient_matches_finite_differences() {
    let mut r = rng(5);
    // Keep inputs away from the kink at zero.
    let x: Vec<f64> = (0..20)
        .map(|_| {
            let v: f64 = r.random_range(0.05..2.0);
            if r.random_bool(0.5) { v } else { -v }
        })
        .collect();
    let proj: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
    for act in [Activation::Elu, Activation::Relu] {
        let mut y = x.clone();
        act.forward(&mut y);
        let mut g = proj.clone();
        act.backward(&y, &mut g);
        let numeric = central_difference(
            |v| {
                let mut y = v.to_vec();
                act.forward(&mut y);
                project(&y, &proj)
            },
            &x,
            STEP,
        );
        let err = max_relative_error(&g, &numeric);
        assert!(err < 1e-6, "{act:?} max rel err {err}");
    }
}

/// Three chained LSTM steps; loss projects every h and the final c.
fn lstm_chain_loss(
    xs: &[Tensor<f64>],
    h0: &Tensor<f64>,
    c0: &Tensor<f64>,
    w_ih: &Tensor<f64>,
    w_hh: &Tensor<f64>,
    bias: &Tensor<f64>,
    proj: &[f64],
) -> f64 {
    let w = LstmWeights { w_ih, w_hh, bias };
    let (mut h, mut c) = (h0.clone(), c0.clone());
    let hs = h0.len();
    let mut loss = 0.0;
    for (step, x) in xs.iter().enumerate() {
        let (h2, c2, _) = lstm_step(x, &h, &c, &w).unwrap();
        loss += project(h2.data(), &proj[step * hs..(step + 1) * hs]);
        h = h2;
        c = c2;
    }
    loss + project(c.data(), &proj[xs.len() * hs..])
}

#[test]
fn lstm_gradient_through_three_steps() {
    let mut r = rng(6);
    let (n, hs) = (4, 6);
    let xs: Vec<_> = (0..3).map(|_| rand_tensor(&[n], &mut r)).collect();
    let h0 = rand_tensor(&[hs], &mut r);
    let c0 = rand_tensor(&[hs], &mut r);
    let w_ih = rand_tensor(&[4 * hs, n], &mut r);
    let w_hh = rand_tensor(&[4 * hs, hs], &mut r);
    let bias = rand_tensor(&[4 * hs], &mut r);
    let proj: Vec<f64> = (0..4 * hs).map(|_| r.random_range(-1.0..1.0)).collect();

    // Analytic: forward keeping caches, then reverse.
    let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, bias: &bias };
    let (mut h, mut c) = (h0.clone(), c0.clone());
    let mut caches = Vec::new();
    for x in &xs {
        let (h2, c2, cache) = lstm_step(x, &h, &c, &w).unwrap();
        caches.push(cache);
        h = h2;
        c = c2;
    }
    let (mut gi, mut gh, mut gbias) = (
        Tensor::zeros(w_ih.shape()),
        Tensor::zeros(w_hh.shape()),
        Tensor::zeros(bias.shape()),
    );
    let mut grads = LstmGrads { w_ih: &mut gi, w_hh: &mut gh, bias: &mut gbias };
    let mut dh = vec![0.0; hs];
    let mut dc = proj[3 * hs..].to_vec();
    let mut dxs = vec![Vec::new(); 3];
    for step in (0..3).rev() {
        for j in 0..hs {
            dh[j] += proj[step * hs + j];
        }
        let (dx, dhp, dcp) = lstm_step_backward(&caches[step], &dh, &dc, &w, &mut grads);
        dxs[step] = dx.data().to_vec();
        dh = dhp.data().to_vec();
        dc = dcp.data().to_vec();
    }

    let num_ih = central_difference(
        |v| lstm_chain_loss(&xs, &h0, &c0, &t(&[4 * hs, n], v), &w_hh, &bias, &proj),
        w_ih.data(),
        STEP,
    );
    let num_hh = central_difference(
        |v| lstm_chain_loss(&xs, &h0, &c0, &w_ih, &t(&[4 * hs, hs], v), &bias, &proj),
        w_hh.data(),
        STEP,
    );
    let num_b = central_difference(
        |v| lstm_chain_loss(&xs, &h0, &c0, &w_ih, &w_hh, &t(&[4 * hs], v), &proj),
        bias.data(),
        STEP,
    );
    let num_h0 = central_difference(
        |v| lstm_chain_loss(&xs, &t(&[hs], v), &c0, &w_ih, &w_hh, &bias, &proj),
        h0.data(),
        STEP,
    );
    let num_c0 = central_difference(
        |v| lstm_chain_loss(&xs, &h0, &t(&[hs], v), &w_ih, &w_hh, &bias, &proj),
        c0.data(),
        STEP,
    );
    let num_x0 = central_difference(
        |v| {
            let mut xs2 = xs.clone();
            xs2[0] = t(&[n], v);
            lstm_chain_loss(&xs2, &h0, &c0, &w_ih, &w_hh, &bias, &proj)
        },
        xs[0].data(),
        STEP,
    );
    for (name, a, nm) in [
        ("w_ih", gi.data().to_vec(), num_ih),
        ("w_hh", gh.data().to_vec(), num_hh),
        ("bias", gbias.data().to_vec(), num_b),
        ("h0", dh.clone(), num_h0),
        ("c0", dc.clone(), num_c0),
        ("x0", dxs[0].clone(), num_x0),
    ] {
        let err = max_relative_error(&a, &nm);
        assert!(err < 1e-5, "lstm {name} max rel err {err}");
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut r = rng(7);
    let logits: Vec<f64> = (0..13).map(|_| r.random_range(-3.0..3.0)).collect();
    let (_, grad) = cross_entropy_grad(&logits, 4).unwrap();
    let numeric = central_difference(|z| cross_entropy(z, 4).unwrap(), &logits, STEP);
    let err = max_relative_error(&grad, &numeric);
    assert!(err < 1e-6, "cross-entropy max rel err {err}");
}

#[test]
fn three_layer_net_composes_by_chain_rule() {
    // linear(6→5) → ELU → linear(5→4) → ReLU → linear(4→3) → cross-entropy.
    let mut r = rng(8);
    let x = rand_tensor(&[2, 6], &mut r);
    let shapes = [([5, 6], 5), ([4, 5], 4), ([3, 4], 3)];
    let params: Vec<(Tensor<f64>, Tensor<f64>)> = shapes
        .iter()
        .map(|(ws, b)| (rand_tensor(ws, &mut r), rand_tensor(&[*b], &mut r)))
        .collect();
    let targets = [2usize, 0];
    let acts = [Some(Activation::Elu), Some(Activation::Relu), None];

    let loss_of = |ps: &[(Tensor<f64>, Tensor<f64>)]| -> f64 {
        let mut h = x.clone();
        for ((w, b), act) in ps.iter().zip(&acts) {
            h = linear_forward(&h, w, b).unwrap();
            if let Some(a) = act {
                a.forward(h.data_mut());
            }
        }
        h.data()
            .chunks(3)
            .zip(&targets)
            .map(|(z, &tg)| cross_entropy(z, tg).unwrap())
            .sum()
    };

    let mut inputs = vec![x.clone()];
    let mut h = x.clone();
    for ((w, b), act) in params.iter().zip(&acts) {
        h = linear_forward(&h, w, b).unwrap();
        if let Some(a) = act {
            a.forward(h.data_mut());
        }
        inputs.push(h.clone());
    }
    let mut grad: Vec<f64> = h
        .data()
        .chunks(3)
        .zip(&targets)
        .flat_map(|(z, &tg)| cross_entropy_grad(z, tg).unwrap().1)
        .collect();
    let mut analytic = vec![Vec::new(); 3];
    for layer in (0..3).rev() {
        if let Some(a) = acts[layer] {
            a.backward(inputs[layer + 1].data(), &mut grad);
        }
        let (w, _) = &params[layer];
        let mut gw = Tensor::zeros(w.shape());
        let mut gb = Tensor::zeros(&[w.shape()[0]]);
        let gx = linear_backward(&inputs[layer], w, &grad, &mut gw, &mut gb);
        analytic[layer] = [gw.data(), gb.data()].concat();
        grad = gx.into_data();
    }
    for layer in 0..3 {
        let (w, b) = &params[layer];
        let flat = [w.data(), b.data()].concat();
        let numeric = central_difference(
            |v| {
                let mut ps = params.clone();
                let nw = w.len();
                ps[layer] = (t(w.shape(), &v[..nw]), t(b.shape(), &v[nw..]));
                loss_of(&ps)
            },
            &flat,
            STEP,
        );
        let err = max_relative_error(&analytic[layer], &numeric);
        assert!(err < 1e-6, "layer {layer} max rel err {err}");
    }
}
