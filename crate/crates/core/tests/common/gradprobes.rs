//! Probe modules wrapping one layer plus its inputs, for finite-difference checks.
//! Each probe's loss is `sum(r * y)` with a fixed random projection `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semg_fin::nn::param::{scoped, scoped_mut};
use semg_fin::nn::*;
use semg_fin::Result;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so kinks are never straddled by the difference step.
fn rand_away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

macro_rules! probe_module {
    ($ty:ty, $($field:ident),+) => {
        impl Module<f64> for $ty {
            fn params(&self) -> Vec<(String, &Param<f64>)> {
                let mut v = Vec::new();
                $( v.extend(scoped(stringify!($field), self.$field.params())); )+
                v
            }
            fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
                let mut v = Vec::new();
                $( v.extend(scoped_mut(stringify!($field), self.$field.params_mut())); )+
                v
            }
        }
    };
}

pub struct Input(pub Param<f64>);

impl Module<f64> for Input {
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        vec![("value".into(), &self.0)]
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
        vec![("value".into(), &mut self.0)]
    }
}

struct DenseProbe {
    layer: Dense<f64>,
    x: Input,
    r: Tensor<f64>,
}
probe_module!(DenseProbe, layer, x);

pub fn dense(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = DenseProbe {
        layer: Dense::new(4, 5, &mut rng),
        x: Input(Param::new(rand_tensor(&[3, 4], &mut rng))),
        r: rand_tensor(&[3, 5], &mut rng),
    };
    p.layer.bias.value = rand_tensor(&[5], &mut rng);
    grad_check(
        &mut p,
        |m: &mut DenseProbe| {
            let (y, cache) = m.layer.forward(&m.x.0.value)?;
            let dx = m.layer.backward(&cache, &m.r);
            m.x.0.grad.add_assign(&dx);
            Ok(y.dot(&m.r))
        },
        FD_STEP,
    )
}

struct LstmStepProbe {
    cell: LstmCell<f64>,
    x: Input,
    h: Input,
    c: Input,
    rh: Tensor<f64>,
    rc: Tensor<f64>,
}
probe_module!(LstmStepProbe, cell, x, h, c);

pub fn lstm_step(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cell = LstmCell::new(3, 4, &mut rng);
    cell.bias.value = rand_tensor(&[16], &mut rng);
    let mut p = LstmStepProbe {
        cell,
        x: Input(Param::new(rand_tensor(&[2, 3], &mut rng))),
        h: Input(Param::new(rand_tensor(&[2, 4], &mut rng))),
        c: Input(Param::new(rand_tensor(&[2, 4], &mut rng))),
        rh: rand_tensor(&[2, 4], &mut rng),
        rc: rand_tensor(&[2, 4], &mut rng),
    };
    grad_check(
        &mut p,
        |m: &mut LstmStepProbe| {
            let (h, c, cache) = m.cell.step(&m.x.0.value, &m.h.0.value, &m.c.0.value)?;
            let (dx, dh, dc) = m.cell.step_backward(&cache, &m.rh, &m.rc);
            m.x.0.grad.add_assign(&dx);
            m.h.0.grad.add_assign(&dh);
            m.c.0.grad.add_assign(&dc);
            Ok(h.dot(&m.rh) + c.dot(&m.rc))
        },
        FD_STEP,
    )
}

struct BiLstmProbe {
    net: BiLstm<f64>,
    x: Input,
    r: Tensor<f64>,
}
probe_module!(BiLstmProbe, net, x);

/// 3-layer bidirectional stack, 8 steps, hidden 4.
pub fn bilstm(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = BiLstm::new(8, 2, 4, 3, &mut rng);
    for (_, p) in net.params_mut() {
        if p.shape().len() == 1 {
            let n = p.len();
            p.value = rand_tensor(&[n], &mut rng);
        }
    }
    let mut p = BiLstmProbe {
        net,
        x: Input(Param::new(rand_tensor(&[2, 8, 2], &mut rng))),
        r: rand_tensor(&[2, 8], &mut rng),
    };
    grad_check(
        &mut p,
        |m: &mut BiLstmProbe| {
            let (y, cache) = m.net.forward(&m.x.0.value)?;
            let dx = m.net.backward(&cache, &m.r);
            m.x.0.grad.add_assign(&dx);
            Ok(y.dot(&m.r))
        },
        FD_STEP,
    )
}

struct ConvProbe {
    conv: Conv2d<f64>,
    x: Input,
    r: Tensor<f64>,
}
probe_module!(ConvProbe, conv, x);

pub fn conv2d(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv2d::new(3, 4, 3, &mut rng);
    conv.bias.value = rand_tensor(&[4], &mut rng);
    let mut p = ConvProbe {
        conv,
        x: Input(Param::new(rand_tensor(&[2, 3, 5, 4], &mut rng))),
        r: rand_tensor(&[2, 4, 5, 4], &mut rng),
    };
    grad_check(
        &mut p,
        |m: &mut ConvProbe| {
            let (y, cache) = m.conv.forward(&m.x.0.value)?;
            let dx = m.conv.backward(&cache, &m.r);
            m.x.0.grad.add_assign(&dx);
            Ok(y.dot(&m.r))
        },
        FD_STEP,
    )
}

struct BnProbe {
    bn: BatchNorm2d<f64>,
    x: Input,
    r: Tensor<f64>,
    mode: Mode,
}
probe_module!(BnProbe, bn, x);

pub fn batchnorm(seed: u64, mode: Mode) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bn = BatchNorm2d::new(2);
    bn.gamma.value = rand_away_from_zero(&[2], &mut rng);
    bn.beta.value = rand_tensor(&[2], &mut rng);
    let x = rand_tensor(&[3, 2, 3, 3], &mut rng);
    bn.forward(&x, Mode::Train)?;
    let mut p = BnProbe {
        bn,
        x: Input(Param::new(x)),
        r: rand_tensor(&[3, 2, 3, 3], &mut rng),
        mode,
    };
    grad_check(
        &mut p,
        |m: &mut BnProbe| {
            let (y, cache) = m.bn.forward(&m.x.0.value, m.mode)?;
            let dx = m.bn.backward(&cache, &m.r);
            m.x.0.grad.add_assign(&dx);
            Ok(y.dot(&m.r))
        },
        FD_STEP,
    )
}

struct PReluProbe {
    act: PRelu<f64>,
    x: Input,
    r: Tensor<f64>,
}
probe_module!(PReluProbe, act, x);

pub fn prelu(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PReluProbe {
        act: PRelu::with_alpha(rng.random_range(0.05..0.5)),
        x: Input(Param::new(rand_away_from_zero(&[4, 6], &mut rng))),
        r: rand_tensor(&[4, 6], &mut rng),
    };
    grad_check(
        &mut p,
        |m: &mut PReluProbe| {
            let (y, cache) = m.act.forward(&m.x.0.value);
            let dx = m.act.backward(&cache, &m.r);
            m.x.0.grad.add_assign(&dx);
            Ok(y.dot(&m.r))
        },
        FD_STEP,
    )
}

pub fn softmax_ce(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = Input(Param::new(rand_tensor(&[4, 17], &mut rng).map(|v| 3.0 * v)));
    let targets: Vec<usize> = (0..4).map(|_| rng.random_range(0..17)).collect();
    grad_check(
        &mut logits,
        |m: &mut Input| {
            let (l, g) = softmax_cross_entropy(&m.0.value, &targets)?;
            m.0.grad.add_assign(&g);
            Ok(l)
        },
        FD_STEP,
    )
}

pub fn mse(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = Input(Param::new(rand_tensor(&[5, 3], &mut rng)));
    let target = rand_tensor(&[5, 3], &mut rng);
    grad_check(
        &mut pred,
        |m: &mut Input| {
            let (l, g) = mse_loss(&m.0.value, &target)?;
            m.0.grad.add_assign(&g);
            Ok(l)
        },
        FD_STEP,
    )
}

struct CnnProbe {
    cnn: semg_fin::classifier::CnnModel<f64>,
    x: Input,
    targets: Vec<usize>,
    mask_seed: u64,
}

// A conv bias feeding train-mode batch norm is cancelled by the mean subtraction, so its
// exact gradient is zero and finite differences only see rounding noise. Those biases are
// checked separately by `cnn_inert_bias_grad`.
fn inert(name: &str) -> bool {
    name.ends_with("conv.bias")
}

impl Module<f64> for CnnProbe {
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        let mut v: Vec<_> = scoped("cnn", self.cnn.params()).filter(|(n, _)| !inert(n)).collect();
        v.extend(scoped("x", self.x.params()));
        v
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
        let mut v: Vec<_> = scoped_mut("cnn", self.cnn.params_mut()).filter(|(n, _)| !inert(n)).collect();
        v.extend(scoped_mut("x", self.x.params_mut()));
        v
    }
}

fn cnn_probe(seed: u64) -> Result<CnnProbe> {
    use semg_fin::classifier::{CnnArch, CnnModel};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = CnnArch {
        widths: [4, 4, 4],
        ..CnnArch::default()
    };
    let mut cnn = CnnModel::new(arch, &mut rng)?;
    for a in &mut cnn.acts {
        a.alpha.value.fill(rng.random_range(0.05..0.5));
    }
    Ok(CnnProbe {
        cnn,
        x: Input(Param::new(rand_tensor(&[3, 4, 4, 4], &mut rng))),
        targets: (0..3).map(|_| rng.random_range(0..17)).collect(),
        mask_seed: seed,
    })
}

fn cnn_loss(m: &mut CnnProbe) -> Result<f64> {
    let mut mask_rng = ChaCha8Rng::seed_from_u64(m.mask_seed);
    let (logits, cache) = m.cnn.forward(&m.x.0.value, Mode::Train, &mut mask_rng)?;
    let (l, g) = softmax_cross_entropy(&logits, &m.targets)?;
    let dx = m.cnn.backward(&cache, &g);
    m.x.0.grad.add_assign(&dx);
    Ok(l)
}

/// The classifier at reduced width on 4x4 feature maps, trained-mode forward with a fixed
/// dropout mask, cross-entropy loss.
/// PReLU makes the loss piecewise smooth, so entries whose step straddles a kink are skipped.
pub fn cnn(seed: u64) -> Result<GradCheckReport> {
    let mut p = cnn_probe(seed)?;
    grad_check_piecewise(&mut p, cnn_loss, FD_STEP, 1e-3)
}

/// Largest analytic gradient magnitude over the conv biases that batch norm cancels.
pub fn cnn_inert_bias_grad(seed: u64) -> Result<f64> {
    let mut p = cnn_probe(seed)?;
    p.cnn.zero_grad();
    cnn_loss(&mut p)?;
    Ok(p.cnn
        .params()
        .iter()
        .filter(|(n, _)| inert(n))
        .flat_map(|(_, q)| q.grad.data().to_vec())
        .fold(0.0, |m, g| m.max(g.abs())))
}
