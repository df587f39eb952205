use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AgentConfig;
use crate::env::{Observation, GLYPH_COUNT};
use crate::error::{shape_err, Error, Result};
use crate::nn::layers::{
    conv2d_backward, conv2d_forward, embedding_backward, embedding_forward, linear_backward,
    linear_forward, lstm_gate_grads, lstm_step, lstm_weight_grads, LstmCache, LstmGrads,
    LstmWeights,
};
use crate::nn::{gemm, init, MatRef, ParamId, ParamStore, Real, Tensor};

#[derive(Debug, Clone, Copy)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: ParamId,
    crop: Vec<Affine>,
    map: Option<Vec<Affine>>,
    linear1: Affine,
    linear2: Affine,
    lstm: Option<LstmIds>,
    policy: Affine,
    value: Affine,
}

/// Actor-critic network: shared glyph embedding, a conv stack per input
/// stream, two trunk linears, optional LSTM, then policy and value heads.
#[derive(Debug, Clone)]
pub struct AgentNet<T: Real> {
    config: AgentConfig,
    params: ParamStore<T>,
    layout: Layout,
}

/// A batch of observations, row-major per observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsBatch {
    pub len: usize,
    pub crops: Vec<u8>,
    pub maps: Option<Vec<u8>>,
}

impl ObsBatch {
    pub fn from_observations<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Self {
        let mut batch = ObsBatch {
            len: 0,
            crops: Vec::new(),
            maps: None,
        };
        for o in obs {
            batch.push(o);
        }
        batch
    }

    pub fn push(&mut self, o: &Observation) {
        self.crops.extend_from_slice(&o.crop);
        if let Some(m) = &o.full_map {
            self.maps.get_or_insert_with(Vec::new).extend_from_slice(m);
        }
        self.len += 1;
    }

    /// Rows `idx` gathered in order.
    pub fn gather(&self, idx: &[usize]) -> ObsBatch {
        let crop_len = self.crops.len() / self.len.max(1);
        let mut out = ObsBatch {
            len: idx.len(),
            crops: Vec::with_capacity(idx.len() * crop_len),
            maps: None,
        };
        for &i in idx {
            out.crops.extend_from_slice(&self.crops[i * crop_len..(i + 1) * crop_len]);
        }
        if let Some(maps) = &self.maps {
            let map_len = maps.len() / self.len.max(1);
            let mut m = Vec::with_capacity(idx.len() * map_len);
            for &i in idx {
                m.extend_from_slice(&maps[i * map_len..(i + 1) * map_len]);
            }
            out.maps = Some(m);
        }
        out
    }
}

/// Recurrent state for a batch: `h` and `c`, each `[B, lstm_size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(batch: usize, size: usize) -> Self {
        Self {
            h: Tensor::zeros(&[batch, size]),
            c: Tensor::zeros(&[batch, size]),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.rows()
    }

    /// State of row `b` as a batch of one.
    pub fn row(&self, b: usize) -> LstmState<T> {
        let hs = self.h.last_dim();
        LstmState {
            h: Tensor::new(vec![1, hs], self.h.data()[b * hs..(b + 1) * hs].to_vec()).unwrap(),
            c: Tensor::new(vec![1, hs], self.c.data()[b * hs..(b + 1) * hs].to_vec()).unwrap(),
        }
    }

    /// Stacks single-row states into one batch.
    pub fn stack(rows: &[LstmState<T>]) -> LstmState<T> {
        let hs = rows[0].h.last_dim();
        let mut h = Vec::with_capacity(rows.len() * hs);
        let mut c = Vec::with_capacity(rows.len() * hs);
        for r in rows {
            h.extend_from_slice(r.h.data());
            c.extend_from_slice(r.c.data());
        }
        LstmState {
            h: Tensor::new(vec![rows.len(), hs], h).unwrap(),
            c: Tensor::new(vec![rows.len(), hs], c).unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
struct StreamCache<T> {
    ids: Vec<u8>,
    /// Input of every conv layer (embedding output first), `[N, C, H, W]`.
    inputs: Vec<Tensor<T>>,
    /// Post-activation output of every conv layer.
    outputs: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct LstmSeqCache<T> {
    steps: Vec<LstmCache<T>>,
    /// `keep[t*B + b]` is 0 where the state was reset before step t.
    keep: Vec<T>,
    hidden: Vec<T>,
    cell: Vec<T>,
}

/// Everything the backward pass and tap extraction need.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    steps: usize,
    batch: usize,
    map: Option<StreamCache<T>>,
    crop: StreamCache<T>,
    features: Tensor<T>,
    hidden1: Tensor<T>,
    hidden2: Tensor<T>,
    lstm: Option<LstmSeqCache<T>>,
    core: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    /// `[N, n_actions]`, rows time-major (`t * batch + b`).
    pub logits: Vec<T>,
    pub values: Vec<T>,
    pub state: Option<LstmState<T>>,
    pub cache: ForwardCache<T>,
}

/// Named activation vectors, each `[N, dim]`.
pub type ActivationTaps<T> = Vec<(String, Vec<T>)>;

/// Result of a single-observation forward pass.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub logits: Vec<T>,
    pub value: T,
    pub state: Option<LstmState<T>>,
    pub taps: ActivationTaps<T>,
}

fn hwc_to_chw<T: Real>(src: &[T], n: usize, plane: usize, ch: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for s in 0..n {
        for p in 0..plane {
            for c in 0..ch {
                out[s * plane * ch + c * plane + p] = src[s * plane * ch + p * ch + c];
            }
        }
    }
    out
}

fn chw_to_hwc<T: Real>(src: &[T], n: usize, plane: usize, ch: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for s in 0..n {
        for c in 0..ch {
            for p in 0..plane {
                out[s * plane * ch + p * ch + c] = src[s * plane * ch + c * plane + p];
            }
        }
    }
    out
}

impl<T: Real> AgentNet<T> {
    /// Deterministic initialisation: orthogonal (gain √2) conv and trunk
    /// weights, orthogonal LSTM weights, small policy head, unit-gain
    /// value head, zero biases, uniform embedding.
    pub fn build(config: &AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let d = config.embed_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let embed = p.add("embed", init::uniform(&[GLYPH_COUNT, d], bound, &mut rng));
        let gain = std::f64::consts::SQRT_2;

        let conv_stack = |prefix: &str, p: &mut ParamStore<T>, rng: &mut ChaCha8Rng| {
            let mut c_in = d;
            let mut ids = Vec::new();
            for (i, &c_out) in config.conv_channels.iter().enumerate() {
                let w = p.add(
                    format!("{prefix}.conv{}.weight", i + 1),
                    init::orthogonal(&[c_out, c_in, 3, 3], gain, rng),
                );
                let b = p.add(format!("{prefix}.conv{}.bias", i + 1), Tensor::zeros(&[c_out]));
                ids.push(Affine { w, b });
                c_in = c_out;
            }
            ids
        };
        let map = config
            .use_full_map
            .then(|| conv_stack("map", &mut p, &mut rng));
        let crop = conv_stack("crop", &mut p, &mut rng);

        let affine = |name: &str, out: usize, inp: usize, g: f64, p: &mut ParamStore<T>, rng: &mut ChaCha8Rng| Affine {
            w: p.add(format!("{name}.weight"), init::orthogonal(&[out, inp], g, rng)),
            b: p.add(format!("{name}.bias"), Tensor::zeros(&[out])),
        };
        let feat = config.map_features() + config.crop_features();
        let h = config.hidden_dim;
        let linear1 = affine("linear1", h, feat, gain, &mut p, &mut rng);
        let linear2 = affine("linear2", h, h, gain, &mut p, &mut rng);
        let lstm = config.lstm.then(|| {
            let s = config.lstm_size;
            LstmIds {
                w_ih: p.add("lstm.w_ih", init::orthogonal(&[4 * s, h], 1.0, &mut rng)),
                w_hh: p.add("lstm.w_hh", init::orthogonal(&[4 * s, s], 1.0, &mut rng)),
                b: p.add("lstm.bias", Tensor::zeros(&[4 * s])),
            }
        });
        let core = config.core_dim();
        let policy = affine("policy", config.n_actions, core, 0.01, &mut p, &mut rng);
        let value = affine("value", 1, core, 1.0, &mut p, &mut rng);
        Ok(Self {
            config: config.clone(),
            params: p,
            layout: Layout {
                embed,
                crop,
                map,
                linear1,
                linear2,
                lstm,
                policy,
                value,
            },
        })
    }

    /// Rebuilds a network from saved parameters; names and shapes must
    /// match what `config` produces.
    pub fn from_params(config: &AgentConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut net = Self::build(config, 0)?;
        if named.len() != net.params.len() {
            return Err(Error::Format {
                expected: format!("{} parameters", net.params.len()),
                found: named.len().to_string(),
            });
        }
        for (name, value) in named {
            net.params.set(&name, value)?;
        }
        Ok(net)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> AgentNet<U> {
        AgentNet {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn initial_state(&self, batch: usize) -> Option<LstmState<T>> {
        self.config
            .lstm
            .then(|| LstmState::zeros(batch, self.config.lstm_size))
    }

    fn stream_forward(
        &self,
        ids: &[u8],
        n: usize,
        (h, w): (usize, usize),
        convs: &[Affine],
    ) -> Result<StreamCache<T>> {
        let d = self.config.embed_dim;
        let emb = embedding_forward(ids, self.params.value(self.layout.embed))?;
        let plane = h * w;
        let x = Tensor::new(vec![n, d, h, w], hwc_to_chw(emb.data(), n, plane, d))?;
        let mut inputs = vec![x];
        let mut outputs = Vec::with_capacity(convs.len());
        for (i, layer) in convs.iter().enumerate() {
            let mut y = conv2d_forward(
                &inputs[i],
                self.params.value(layer.w),
                self.params.value(layer.b),
            )?;
            self.config.activation.forward(y.data_mut());
            if i + 1 < convs.len() {
                inputs.push(y.clone());
            }
            outputs.push(y);
        }
        Ok(StreamCache {
            ids: ids.to_vec(),
            inputs,
            outputs,
        })
    }

    fn affine(&self, x: &Tensor<T>, a: Affine) -> Result<Tensor<T>> {
        linear_forward(x, self.params.value(a.w), self.params.value(a.b))
    }

    fn lstm_weights(&self) -> Option<LstmWeights<'_, T>> {
        self.layout.lstm.map(|ids| LstmWeights {
            w_ih: self.params.value(ids.w_ih),
            w_hh: self.params.value(ids.w_hh),
            bias: self.params.value(ids.b),
        })
    }

    /// Runs `steps × batch` observations laid out time-major. `resets`
    /// (same layout) zeroes the recurrent state before a step; `init` is
    /// the state entering step 0 and is required iff the LSTM is enabled.
    pub fn forward_seq(
        &self,
        obs: &ObsBatch,
        steps: usize,
        batch: usize,
        init: Option<&LstmState<T>>,
        resets: Option<&[bool]>,
    ) -> Result<Forward<T>> {
        let cfg = &self.config;
        let n = steps * batch;
        if obs.len != n || n == 0 {
            return Err(shape_err("agent", format!("{} observations for {steps}x{batch}", obs.len)));
        }
        let k = cfg.crop_size;
        if obs.crops.len() != n * k * k {
            return Err(shape_err("agent", format!("crop data {} != {n}x{k}x{k}", obs.crops.len())));
        }
        let map = match (&obs.maps, &self.layout.map) {
            (Some(maps), Some(convs)) => {
                let (r, c) = cfg.map_dims;
                if maps.len() != n * r * c {
                    return Err(shape_err("agent", "full-map data size"));
                }
                Some(self.stream_forward(maps, n, (r, c), convs)?)
            }
            (None, None) => None,
            (Some(_), None) => return Err(shape_err("agent", "full map given to a crop-only agent")),
            (None, Some(_)) => return Err(shape_err("agent", "agent expects a full map")),
        };
        let crop = self.stream_forward(&obs.crops, n, (k, k), &self.layout.crop)?;

        let (mf, cf) = (cfg.map_features(), cfg.crop_features());
        let mut feat = Vec::with_capacity(n * (mf + cf));
        let crop_out = crop.outputs.last().unwrap().data();
        for row in 0..n {
            if let Some(m) = &map {
                feat.extend_from_slice(&m.outputs.last().unwrap().data()[row * mf..(row + 1) * mf]);
            }
            feat.extend_from_slice(&crop_out[row * cf..(row + 1) * cf]);
        }
        let features = Tensor::new(vec![n, mf + cf], feat)?;
        let mut hidden1 = self.affine(&features, self.layout.linear1)?;
        cfg.activation.forward(hidden1.data_mut());
        let mut hidden2 = self.affine(&hidden1, self.layout.linear2)?;
        cfg.activation.forward(hidden2.data_mut());

        let (lstm, core, state) = match self.lstm_weights() {
            None => {
                if init.is_some() {
                    return Err(shape_err("agent", "recurrent state given to a feed-forward agent"));
                }
                (None, hidden2.clone(), None)
            }
            Some(w) => {
                let init = init.ok_or_else(|| shape_err("agent", "missing recurrent state"))?;
                let hs = cfg.lstm_size;
                if init.batch() != batch || init.h.last_dim() != hs {
                    return Err(shape_err("agent", "recurrent state shape"));
                }
                let (mut h, mut c) = (init.h.clone(), init.c.clone());
                let hd = cfg.hidden_dim;
                let mut caches = Vec::with_capacity(steps);
                let mut keep = vec![T::one(); n];
                let mut hidden = Vec::with_capacity(n * hs);
                let mut cell = Vec::with_capacity(n * hs);
                for t in 0..steps {
                    if let Some(r) = resets {
                        for b in 0..batch {
                            if r[t * batch + b] {
                                keep[t * batch + b] = T::zero();
                                h.data_mut()[b * hs..(b + 1) * hs].fill(T::zero());
                                c.data_mut()[b * hs..(b + 1) * hs].fill(T::zero());
                            }
                        }
                    }
                    let x = Tensor::new(
                        vec![batch, hd],
                        hidden2.data()[t * batch * hd..(t + 1) * batch * hd].to_vec(),
                    )?;
                    let (h2, c2, cache) = lstm_step(&x, &h, &c, &w)?;
                    hidden.extend_from_slice(h2.data());
                    cell.extend_from_slice(c2.data());
                    caches.push(cache);
                    h = h2;
                    c = c2;
                }
                let core = Tensor::new(vec![n, hs], hidden.clone())?;
                (
                    Some(LstmSeqCache {
                        steps: caches,
                        keep,
                        hidden,
                        cell,
                    }),
                    core,
                    Some(LstmState { h, c }),
                )
            }
        };

        let logits = self.affine(&core, self.layout.policy)?;
        let values = self.affine(&core, self.layout.value)?;
        logits.ensure_finite("policy logits")?;
        values.ensure_finite("value estimates")?;
        Ok(Forward {
            logits: logits.into_data(),
            values: values.into_data(),
            state,
            cache: ForwardCache {
                steps,
                batch,
                map,
                crop,
                features,
                hidden1,
                hidden2,
                lstm,
                core,
            },
        })
    }

    /// Single observation: logits, value, next state and every tap.
    pub fn step(&self, obs: &Observation, state: Option<&LstmState<T>>) -> Result<StepOutput<T>> {
        let batch = ObsBatch::from_observations([obs]);
        let f = self.forward_seq(&batch, 1, 1, state, None)?;
        let names: Vec<String> = self.config.tap_dims().into_iter().map(|(n, _)| n).collect();
        let taps = self.taps(&f.cache, &names)?;
        Ok(StepOutput {
            logits: f.logits,
            value: f.values[0],
            state: f.state,
            taps,
        })
    }

    /// Extracts the named activations from a forward cache. Conv taps read
    /// the full-map stream when present, otherwise the crop stream.
    pub fn taps(&self, cache: &ForwardCache<T>, names: &[String]) -> Result<ActivationTaps<T>> {
        let conv_src = cache.map.as_ref().unwrap_or(&cache.crop);
        names
            .iter()
            .map(|name| {
                self.config.tap_dim(name)?;
                let data = match name.as_str() {
                    "linear1" => cache.hidden1.data().to_vec(),
                    "linear2" => cache.hidden2.data().to_vec(),
                    "lstm_hidden" => cache.lstm.as_ref().expect("validated").hidden.clone(),
                    "lstm_cell" => cache.lstm.as_ref().expect("validated").cell.clone(),
                    conv => {
                        let i: usize = conv[4..].parse().expect("validated conv tap");
                        conv_src.outputs[i - 1].data().to_vec()
                    }
                };
                Ok((name.clone(), data))
            })
            .collect()
    }

    fn stream_backward(&mut self, cache: &StreamCache<T>, grad_out: Vec<T>, convs: &[Affine]) -> Result<()> {
        let act = self.config.activation;
        let mut grad = grad_out;
        for (i, layer) in convs.iter().enumerate().rev() {
            act.backward(cache.outputs[i].data(), &mut grad);
            let (values, mut grads) = self.params.split_mut();
            let [gw, gb] = grads.many([layer.w, layer.b]);
            let gx = conv2d_backward(&cache.inputs[i], &values[layer.w], &grad, gw, gb)?;
            grad = gx.into_data();
        }
        let x = &cache.inputs[0];
        let (n, d, plane) = (x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]);
        let hwc = chw_to_hwc(&grad, n, plane, d);
        embedding_backward(&cache.ids, &hwc, self.params.grad_mut(self.layout.embed));
        Ok(())
    }

    fn affine_backward(&mut self, x: &Tensor<T>, a: Affine, grad: &[T]) -> Tensor<T> {
        let (values, mut grads) = self.params.split_mut();
        let [gw, gb] = grads.many([a.w, a.b]);
        linear_backward(x, &values[a.w], grad, gw, gb)
    }

    /// Accumulates parameter gradients of `Σ dlogits·logits + Σ dvalues·values`.
    /// Gradients into the initial recurrent state are dropped.
    pub fn backward(&mut self, cache: &ForwardCache<T>, dlogits: &[T], dvalues: &[T]) -> Result<()> {
        let n = cache.steps * cache.batch;
        if dlogits.len() != n * self.config.n_actions || dvalues.len() != n {
            return Err(shape_err("agent backward", "gradient sizes"));
        }
        let layout = self.layout.clone();
        let act = self.config.activation;
        let mut dcore = self.affine_backward(&cache.core, layout.policy, dlogits);
        let dv = self.affine_backward(&cache.core, layout.value, dvalues);
        dcore.data_mut().iter_mut().zip(dv.data()).for_each(|(a, &b)| *a += b);

        let mut dh2 = match (&cache.lstm, layout.lstm) {
            (None, _) => dcore.into_data(),
            (Some(lc), Some(ids)) => {
                let (b, hs, hd) = (cache.batch, self.config.lstm_size, self.config.hidden_dim);
                let g4 = 4 * hs;
                let mut dz_all = vec![T::zero(); n * g4];
                let mut h_prev_all = Vec::with_capacity(n * hs);
                for step in &lc.steps {
                    h_prev_all.extend_from_slice(step.h_prev.data());
                }
                let mut dh = vec![T::zero(); b * hs];
                let mut dc = vec![T::zero(); b * hs];
                let (values, mut grads) = self.params.split_mut();
                let w_hh = &values[ids.w_hh];
                for t in (0..cache.steps).rev() {
                    let rows = t * b..(t + 1) * b;
                    dh.iter_mut()
                        .zip(&dcore.data()[rows.start * hs..rows.end * hs])
                        .for_each(|(a, &g)| *a += g);
                    let (dz, dcp) = lstm_gate_grads(&lc.steps[t], &dh, &dc);
                    gemm(
                        MatRef::new(&dz, b, g4),
                        MatRef::new(w_hh.data(), g4, hs),
                        T::zero(),
                        &mut dh,
                    );
                    dz_all[rows.start * g4..rows.end * g4].copy_from_slice(&dz);
                    dc = dcp;
                    for bi in 0..b {
                        let k = lc.keep[t * b + bi];
                        dh[bi * hs..(bi + 1) * hs].iter_mut().for_each(|v| *v *= k);
                        dc[bi * hs..(bi + 1) * hs].iter_mut().for_each(|v| *v *= k);
                    }
                }
                let [gi, gh, gb] = grads.many([ids.w_ih, ids.w_hh, ids.b]);
                let mut lg = LstmGrads {
                    w_ih: gi,
                    w_hh: gh,
                    bias: gb,
                };
                lstm_weight_grads(&dz_all, cache.hidden2.data(), &h_prev_all, n, &mut lg);
                let mut dx_all = vec![T::zero(); n * hd];
                gemm(
                    MatRef::new(&dz_all, n, g4),
                    MatRef::new(values[ids.w_ih].data(), g4, hd),
                    T::zero(),
                    &mut dx_all,
                );
                dx_all
            }
            (Some(_), None) => unreachable!("lstm cache without lstm layer"),
        };
        act.backward(cache.hidden2.data(), &mut dh2);
        let dh2 = Tensor::new(cache.hidden2.shape().to_vec(), dh2)?;
        let mut dh1 = self
            .affine_backward(&cache.hidden1, layout.linear2, dh2.data())
            .into_data();
        act.backward(cache.hidden1.data(), &mut dh1);
        let dfeat = self.affine_backward(&cache.features, layout.linear1, &dh1);

        let (mf, cf) = (self.config.map_features(), self.config.crop_features());
        let mut dmap = Vec::with_capacity(n * mf);
        let mut dcrop = Vec::with_capacity(n * cf);
        for row in dfeat.data().chunks(mf + cf) {
            dmap.extend_from_slice(&row[..mf]);
            dcrop.extend_from_slice(&row[mf..]);
        }
        if let (Some(mc), Some(convs)) = (&cache.map, &layout.map) {
            self.stream_backward(mc, dmap, convs)?;
        }
        self.stream_backward(&cache.crop, dcrop, &layout.crop)?;
        Ok(())
    }
}
