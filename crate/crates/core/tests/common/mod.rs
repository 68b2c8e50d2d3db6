#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vsp_spectrum::nn::{Activation, Layer, Mlp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Plain reference forward pass. Returns the outputs and the sign pattern of
/// every hidden pre-activation, so callers can tell when a perturbation crosses
/// a ReLU kink.
pub fn reference_forward(net: &Mlp, input: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut x = input.to_vec();
    let mut pattern = Vec::new();
    let n = net.layers().len();
    for (l, layer) in net.layers().iter().enumerate() {
        let mut z = vec![0.0; layer.outputs()];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &layer.weights()[o * layer.inputs()..(o + 1) * layer.inputs()];
            *zo = layer.biases()[o] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
        }
        x = if l + 1 < n {
            z.iter()
                .map(|&v| {
                    pattern.push(v > 0.0);
                    v.max(0.0)
                })
                .collect()
        } else {
            z.iter()
                .map(|&v| match net.output_activation() {
                    Activation::Identity => v,
                    Activation::Softplus => (1.0 + v.exp()).ln(),
                    Activation::ScaledSigmoid(s) => s * sigmoid(v),
                })
                .collect()
        };
    }
    (x, pattern)
}

pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates skipped because the finite difference straddles a ReLU kink.
    pub kinks: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// `sum_k upstream_k * f(x)_k` over a single input.
fn objective(net: &Mlp, input: &[f64], upstream: &[f64]) -> (f64, Vec<bool>) {
    let (out, pat) = reference_forward(net, input);
    (out.iter().zip(upstream).map(|(o, u)| o * u).sum(), pat)
}

/// Compares `Mlp::gradient` against central differences (step `h`) for every
/// parameter and input coordinate.
pub fn gradient_check(net: &Mlp, input: &[f64], upstream: &[f64], h: f64) -> GradCheck {
    let (_, cache) = net.forward(input).unwrap();
    let (grads, d_input) = net.gradient(&cache, upstream).unwrap();
    let analytic = grads.flatten();
    let base = net.parameters();
    let (_, base_pat) = objective(net, input, upstream);
    let mut res = GradCheck {
        max_rel: 0.0,
        checked: 0,
        kinks: 0,
    };
    let mut probe = net.clone();
    for (k, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_parameters(&p).unwrap();
        let (fp, pp) = objective(&probe, input, upstream);
        p[k] = base[k] - h;
        probe.set_parameters(&p).unwrap();
        let (fm, pm) = objective(&probe, input, upstream);
        if pp != base_pat || pm != base_pat {
            res.kinks += 1;
            continue;
        }
        res.max_rel = res.max_rel.max(rel_err(g, (fp - fm) / (2.0 * h)));
        res.checked += 1;
    }
    for (k, &g) in d_input.iter().enumerate() {
        let mut x = input.to_vec();
        x[k] = input[k] + h;
        let (fp, pp) = objective(net, &x, upstream);
        x[k] = input[k] - h;
        let (fm, pm) = objective(net, &x, upstream);
        if pp != base_pat || pm != base_pat {
            res.kinks += 1;
            continue;
        }
        res.max_rel = res.max_rel.max(rel_err(g, (fp - fm) / (2.0 * h)));
        res.checked += 1;
    }
    res
}

/// Random network with 1 to 3 layers of at most 16 units.
pub fn random_small_mlp<R: Rng>(rng: &mut R) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=16)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=16));
    }
    let act = match rng.random_range(0..3) {
        0 => Activation::Identity,
        1 => Activation::Softplus,
        _ => Activation::ScaledSigmoid(rng.random_range(0.5..5.0)),
    };
    let layers = sizes
        .windows(2)
        .map(|w| {
            let weights = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let biases = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            Layer::new(w[0], w[1], weights, biases).unwrap()
        })
        .collect();
    Mlp::from_layers(layers, act).unwrap()
}
