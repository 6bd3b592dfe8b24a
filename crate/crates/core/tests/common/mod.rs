#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stae_core::model::{ModelConfig, SpatioTemporalAE};
use stae_core::recurrent::{ConvLstmCell, ConvLstmSpec, ConvLstmStack, FcLstmCell, Peephole};
use stae_core::tensor::{conv2d, conv2d_backward, deconv2d, deconv2d_backward, ConvSpec, Tensor};
use stae_core::Parameters;

pub const STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Worst relative error between `analytic` (aligned with `params.tensors()`)
/// and central differences of `loss` over every entry.
pub fn fd_check<P: Parameters<f64>>(params: &mut P, analytic: &[&Tensor<f64>], loss: impl Fn(&P) -> f64) -> f64 {
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "gradient bundle misaligned");
    let mut worst: f64 = 0.0;
    for (k, &n) in sizes.iter().enumerate() {
        assert_eq!(analytic[k].len(), n);
        for j in 0..n {
            let orig = params.tensors_mut()[k].data()[j];
            params.tensors_mut()[k].data_mut()[j] = orig + STEP;
            let up = loss(params);
            params.tensors_mut()[k].data_mut()[j] = orig - STEP;
            let down = loss(params);
            params.tensors_mut()[k].data_mut()[j] = orig;
            worst = worst.max(rel_err(analytic[k].data()[j], (up - down) / (2.0 * STEP)));
        }
    }
    worst
}

/// Filters, bias and input of one layer, perturbed together.
#[derive(Clone)]
struct Layer {
    x: Tensor<f64>,
    k: Tensor<f64>,
    b: Tensor<f64>,
}

impl Parameters<f64> for Layer {
    fn named(&self) -> Vec<(String, &Tensor<f64>)> {
        vec![("x".into(), &self.x), ("k".into(), &self.k), ("b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![&mut self.x, &mut self.k, &mut self.b]
    }
}

/// `(in channels, out channels, input side, kernel, stride, padding)`
pub const LAYER_CASES: [(usize, usize, usize, usize, usize, usize); 5] = [
    (2, 3, 7, 3, 1, 0),
    (2, 3, 8, 3, 2, 1),
    (1, 2, 9, 4, 2, 0),
    (3, 2, 6, 5, 1, 2),
    (1, 1, 11, 11, 4, 0),
];

/// Worst relative error of conv2d (or deconv2d) gradients over [`LAYER_CASES`].
pub fn layer_gradient_error(transposed: bool) -> f64 {
    let mut r = rng(if transposed { 2 } else { 1 });
    let mut worst: f64 = 0.0;
    for &(ci, co, n, m, s, p) in &LAYER_CASES {
        let spec = ConvSpec::new(ci, co, m, s, p);
        let (kshape, out_n) = if transposed {
            ([ci, co, m, m], spec.transposed_output_size(n).unwrap())
        } else {
            ([co, ci, m, m], spec.output_size(n).unwrap())
        };
        let mut layer = Layer {
            x: rand_tensor(&[ci, n, n], &mut r),
            k: rand_tensor(&kshape, &mut r),
            b: rand_tensor(&[co], &mut r),
        };
        let w = rand_tensor(&[co, out_n, out_n], &mut r);
        let forward = |l: &Layer| {
            if transposed {
                deconv2d(&l.x, &l.k, &l.b, &spec).unwrap()
            } else {
                conv2d(&l.x, &l.k, &l.b, &spec).unwrap()
            }
        };
        let g = if transposed {
            deconv2d_backward(&w, &layer.x, &layer.k, &spec).unwrap()
        } else {
            conv2d_backward(&w, &layer.x, &layer.k, &spec).unwrap()
        };
        let e = fd_check(&mut layer, &[&g.input, &g.filters, &g.bias], |l| forward(l).dot(&w).unwrap());
        worst = worst.max(e);
    }
    worst
}

#[derive(Clone)]
struct FcProblem {
    cell: FcLstmCell<f64>,
    xs: Vec<Tensor<f64>>,
}

impl Parameters<f64> for FcProblem {
    fn named(&self) -> Vec<(String, &Tensor<f64>)> {
        let mut out = self.cell.params.named();
        out.extend(self.xs.iter().map(|x| ("x".to_string(), x)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut out = self.cell.params.tensors_mut();
        out.extend(self.xs.iter_mut());
        out
    }
}

fn randomize<P: Parameters<f64>>(p: &mut P, scale: f64, r: &mut ChaCha8Rng) {
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-scale..scale));
    }
}

/// FC-LSTM over `t_len` steps, loss `sum_t <w_t, h_t>`.
pub fn fc_lstm_gradient_error(t_len: usize) -> f64 {
    let mut r = rng(10 + t_len as u64);
    let mut cell = FcLstmCell::<f64>::new(3, 4, &mut r);
    randomize(&mut cell.params, 0.8, &mut r);
    let xs = (0..t_len).map(|_| rand_tensor(&[3], &mut r)).collect();
    let ws: Vec<Tensor<f64>> = (0..t_len).map(|_| rand_tensor(&[4], &mut r)).collect();
    let mut prob = FcProblem { cell, xs };
    let (_, cache) = prob.cell.sequence(&prob.xs).unwrap();
    let (dxs, grads) = prob.cell.sequence_backward(&cache, &ws).unwrap();
    let mut analytic = grads.tensors();
    analytic.extend(dxs.iter());
    let analytic: Vec<Tensor<f64>> = analytic.into_iter().cloned().collect();
    let refs: Vec<&Tensor<f64>> = analytic.iter().collect();
    fd_check(&mut prob, &refs, |p| {
        let (hs, _) = p.cell.sequence(&p.xs).unwrap();
        hs.iter().zip(&ws).map(|(h, w)| h.dot(w).unwrap()).sum()
    })
}

#[derive(Clone)]
struct StackProblem {
    stack: ConvLstmStack<f64>,
    xs: Vec<Tensor<f64>>,
}

impl Parameters<f64> for StackProblem {
    fn named(&self) -> Vec<(String, &Tensor<f64>)> {
        let mut out: Vec<(String, &Tensor<f64>)> = self.stack.cells.iter().flat_map(|c| c.params.named()).collect();
        out.extend(self.xs.iter().map(|x| ("x".to_string(), x)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut out: Vec<&mut Tensor<f64>> = self
            .stack
            .cells
            .iter_mut()
            .flat_map(|c| c.params.tensors_mut())
            .collect();
        out.extend(self.xs.iter_mut());
        out
    }
}

/// Two stacked ConvLSTM cells (2 -> 3 -> 2 channels, 5x4 state) over `t_len` steps.
pub fn conv_lstm_gradient_error(t_len: usize, peephole: Peephole) -> f64 {
    let mut r = rng(20 + t_len as u64);
    let (h, w) = (5, 4);
    let mut cells = vec![
        ConvLstmCell::<f64>::new(ConvLstmSpec::new(2, 3, 3, peephole), (h, w), &mut r).unwrap(),
        ConvLstmCell::<f64>::new(ConvLstmSpec::new(3, 2, 3, peephole), (h, w), &mut r).unwrap(),
    ];
    for c in &mut cells {
        randomize(&mut c.params, 0.5, &mut r);
    }
    let xs = (0..t_len).map(|_| rand_tensor(&[2, h, w], &mut r)).collect();
    let ws: Vec<Tensor<f64>> = (0..t_len).map(|_| rand_tensor(&[2, h, w], &mut r)).collect();
    let mut prob = StackProblem {
        stack: ConvLstmStack::new(cells).unwrap(),
        xs,
    };
    let (_, cache) = prob.stack.forward(&prob.xs).unwrap();
    let (dxs, grads) = prob.stack.backward(&cache, &ws).unwrap();
    let mut analytic: Vec<Tensor<f64>> = grads.iter().flat_map(|g| g.tensors()).cloned().collect();
    analytic.extend(dxs);
    let refs: Vec<&Tensor<f64>> = analytic.iter().collect();
    fd_check(&mut prob, &refs, |p| {
        let (hs, _) = p.stack.forward(&p.xs).unwrap();
        hs.iter().zip(&ws).map(|(h, w)| h.dot(w).unwrap()).sum()
    })
}

/// Tiny config (T=3, 16x16, 4 filters per layer) with non-zero biases.
pub fn tiny_model(peephole: Peephole, seed: u64) -> SpatioTemporalAE<f64> {
    let mut cfg = ModelConfig::tiny();
    cfg.seed = seed;
    for l in &mut cfg.temporal {
        l.peephole = peephole;
    }
    let mut model = SpatioTemporalAE::<f64>::build(cfg).unwrap();
    let mut r = rng(seed + 100);
    let names: Vec<String> = model.named().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(model.tensors_mut()) {
        if name.contains(".b") || name.contains("bias") || name.contains("w_c") && !name.ends_with("w_c") {
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
        }
    }
    model
}

pub fn tiny_volume(seed: u64) -> Tensor<f64> {
    rand_tensor(&[3, 1, 16, 16], &mut rng(seed))
}

/// Full-model gradient check over every parameter.
pub fn tiny_model_gradient_error(peephole: Peephole) -> f64 {
    let mut model = tiny_model(peephole, 5);
    let x = tiny_volume(6);
    let (_, grads) = model.loss_and_gradients(&x).unwrap();
    let analytic: Vec<Tensor<f64>> = grads.tensors().into_iter().cloned().collect();
    let refs: Vec<&Tensor<f64>> = analytic.iter().collect();
    fd_check(&mut model, &refs, |m| m.loss(&x).unwrap())
}

/// Random stride-1 `(n, m)` pairs run through conv2d; returns the cases whose
/// output side differs from `n - m + 1`. The (227, 11) case is always included.
pub fn stride_one_size_failures(cases: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let mut r = rng(seed);
    let mut pairs = vec![(227, 11)];
    while pairs.len() < cases {
        let n = r.random_range(1..=48);
        pairs.push((n, r.random_range(1..=n)));
    }
    pairs
        .into_iter()
        .filter_map(|(n, m)| {
            let spec = ConvSpec::new(1, 1, m, 1, 0);
            let x = rand_tensor(&[1, n, n], &mut r);
            let k = rand_tensor(&[1, 1, m, m], &mut r);
            let y = conv2d(&x, &k, &Tensor::zeros(&[1]), &spec).unwrap();
            (y.shape() != [1, n - m + 1, n - m + 1]).then(|| (n, m, y.shape()[1]))
        })
        .collect()
}

/// Runs one frame through the default config's encoder and back through its
/// decoder (one channel per layer, geometry unchanged); returns every side length.
pub fn default_chain_sizes() -> Vec<usize> {
    let cfg = ModelConfig::default();
    let single = |s: &ConvSpec| ConvSpec::new(1, 1, s.kernel, s.stride, s.padding);
    let mut r = rng(7);
    let mut x = rand_tensor(&[1, cfg.input_size, cfg.input_size], &mut r);
    let mut sizes = vec![x.shape()[1]];
    for s in cfg.encoder_specs().iter().map(single) {
        x = conv2d(&x, &rand_tensor(&[1, 1, s.kernel, s.kernel], &mut r), &Tensor::zeros(&[1]), &s).unwrap();
        sizes.push(x.shape()[1]);
    }
    for s in cfg.decoder_specs().iter().map(single) {
        x = deconv2d(&x, &rand_tensor(&[1, 1, s.kernel, s.kernel], &mut r), &Tensor::zeros(&[1]), &s).unwrap();
        sizes.push(x.shape()[1]);
    }
    sizes
}

/// Max deviation between a 1x1-kernel ConvLSTM and an FC-LSTM with the same
/// weights applied at every pixel, over a 4-step sequence.
pub fn one_by_one_equivalence_error() -> f64 {
    let mut r = rng(30);
    let (cin, hc, h, w) = (3, 4, 5, 6);
    let mut conv = ConvLstmCell::<f64>::new(ConvLstmSpec::new(cin, hc, 1, Peephole::None), (h, w), &mut r).unwrap();
    randomize(&mut conv.params, 0.9, &mut r);
    let mut fc = FcLstmCell::<f64>::new(cin, hc, &mut r);
    for (dst, src) in fc.params.tensors_mut().into_iter().zip(conv.params.gates.tensors()) {
        *dst = Tensor::new(dst.shape().to_vec(), src.data().to_vec()).unwrap();
    }
    let xs: Vec<Tensor<f64>> = (0..4).map(|_| rand_tensor(&[cin, h, w], &mut r)).collect();
    let (conv_hs, _) = ConvLstmStack::new(vec![conv]).unwrap().forward(&xs).unwrap();

    let mut worst: f64 = 0.0;
    for p in 0..h * w {
        let pixel_xs: Vec<Tensor<f64>> = xs
            .iter()
            .map(|x| Tensor::from_fn(&[cin], |c| x.data()[c * h * w + p]))
            .collect();
        let (fc_hs, _) = fc.sequence(&pixel_xs).unwrap();
        for (ch, fh) in conv_hs.iter().zip(&fc_hs) {
            for k in 0..hc {
                worst = worst.max((ch.data()[k * h * w + p] - fh.data()[k]).abs());
            }
        }
    }
    worst
}

/// Count of entries where zero-parameter cells miss `C_t = C_{t-1}/2`,
/// `h_t = tanh(C_t)/2` exactly, across both cell types and every peephole mode.
pub fn zero_parameter_violations() -> usize {
    let mut r = rng(31);
    let mut bad = 0;
    let mut check = |c_prev: &Tensor<f64>, next: &stae_core::recurrent::LstmState<f64>| {
        for k in 0..c_prev.len() {
            let c = 0.5 * c_prev.data()[k];
            if next.c.data()[k] != c || next.h.data()[k] != 0.5 * c.tanh() {
                bad += 1;
            }
        }
    };
    let prev = stae_core::recurrent::LstmState {
        h: rand_tensor(&[3], &mut r),
        c: rand_tensor(&[3], &mut r).scale(3.0),
    };
    let p = FcLstmCell::<f64>::new(2, 3, &mut r).params.zeros_like();
    let next = stae_core::recurrent::fc_lstm_step(&rand_tensor(&[2], &mut r), &prev, &p).unwrap();
    check(&prev.c, &next);
    for mode in [Peephole::None, Peephole::Concat, Peephole::Hadamard] {
        let mut cell = ConvLstmCell::<f64>::new(ConvLstmSpec::new(2, 3, 3, mode), (4, 4), &mut r).unwrap();
        cell.params = cell.params.zeros_like();
        let prev = stae_core::recurrent::LstmState {
            h: rand_tensor(&[3, 4, 4], &mut r),
            c: rand_tensor(&[3, 4, 4], &mut r).scale(3.0),
        };
        let (next, _) = cell.step(&rand_tensor(&[2, 4, 4], &mut r), &prev).unwrap();
        check(&prev.c, &next);
    }
    bad
}

/// Independent composition of the public layer ops for one volume `[T, C, H, W]`.
pub fn compose_forward(model: &SpatioTemporalAE<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    use stae_core::tensor::Activation;
    let cfg = model.config();
    let tanh = |t: Tensor<f64>| Activation::Tanh.forward(&t);
    let codes: Vec<Tensor<f64>> = (0..cfg.time_steps)
        .map(|t| {
            let mut a = x.slice0(t);
            for (spec, p) in cfg.encoder_specs().iter().zip(&model.encoder) {
                a = tanh(conv2d(&a, &p.filters, &p.bias, spec).unwrap());
            }
            a
        })
        .collect();
    let hidden =
        stae_core::recurrent::conv_lstm_sequence(&Tensor::stack(&codes).unwrap(), &model.temporal.cells).unwrap();
    let frames: Vec<Tensor<f64>> = (0..cfg.time_steps)
        .map(|t| {
            let mut a = hidden.slice0(t);
            for (spec, p) in cfg.decoder_specs().iter().zip(&model.decoder) {
                a = tanh(deconv2d(&a, &p.filters, &p.bias, spec).unwrap());
            }
            a
        })
        .collect();
    Tensor::stack(&frames).unwrap()
}

/// The first 100 stride-{1,2,3} volumes of a preprocessed 16x16 synthetic
/// training video, shaped for [`ModelConfig::tiny`].
pub fn smoke_volumes() -> Vec<stae_core::model::VideoVolume<f64>> {
    use stae_core::pipeline::{build_volumes, generate_synthetic, preprocess, PreprocessConfig, StrideSet, SyntheticSpec};
    let spec = SyntheticSpec {
        width: 16,
        height: 16,
        train_frames: 60,
        test_frames: 10,
        sprite_count: 2,
        sprite_size: 5.0,
        anomalies: vec![],
        ..SyntheticSpec::default()
    };
    let video = generate_synthetic::<f64>(&spec, 3).unwrap();
    let pcfg = PreprocessConfig {
        target_size: 16,
        ..PreprocessConfig::default()
    };
    let (seq, _) = preprocess(&video.train, None, &pcfg).unwrap();
    let strides = StrideSet {
        strides: vec![1, 2, 3],
        time_steps: 3,
    };
    let mut vols = build_volumes(&seq, &strides).unwrap();
    vols.truncate(100);
    vols
}

/// Trains the tiny config on [`smoke_volumes`]; returns the report.
pub fn training_smoke() -> stae_core::optim::TrainReport {
    use stae_core::optim::{train, AdamConfig, TrainSettings};
    let vols = smoke_volumes();
    assert_eq!(vols.len(), 100);
    let mut model = SpatioTemporalAE::<f64>::build(ModelConfig::tiny()).unwrap();
    let settings = TrainSettings {
        batch_size: 10,
        max_epochs: 50,
        adam: AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainSettings::default()
    };
    train(&mut model, &vols, &settings, |_, _| Ok(())).unwrap()
}

/// A model whose loss never moves: one improving epoch, then a plateau.
#[derive(Clone)]
pub struct Frozen(pub Tensor<f64>);

impl Parameters<f64> for Frozen {
    fn named(&self) -> Vec<(String, &Tensor<f64>)> {
        vec![("w".into(), &self.0)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![&mut self.0]
    }
}

impl stae_core::optim::Trainable<f64> for Frozen {
    type Grads = Frozen;

    fn loss(&self, input: &Tensor<f64>) -> stae_core::Result<f64> {
        Ok(input.sum_sq() + self.0.sum_sq())
    }

    fn loss_and_gradients(&self, input: &Tensor<f64>) -> stae_core::Result<(f64, Frozen)> {
        Ok((self.loss(input)?, Frozen(Tensor::zeros(self.0.shape()))))
    }
}

/// Epochs run before stopping on a plateau that starts right after epoch 1.
pub fn plateau_epochs(patience: usize) -> (usize, bool) {
    use stae_core::optim::{train_with_validation, TrainSettings};
    let vol = |v: f64| stae_core::model::VideoVolume::new(Tensor::full(&[2, 1, 2, 2], v), vec![1, 2]).unwrap();
    let mut model = Frozen(Tensor::full(&[3], 0.5));
    let settings = TrainSettings {
        batch_size: 2,
        max_epochs: 50,
        patience,
        ..TrainSettings::default()
    };
    let report = train_with_validation(&mut model, &[vol(0.1), vol(0.2)], &[vol(0.3)], &settings, |_, _| Ok(())).unwrap();
    (report.history.len(), report.early_stopped)
}
