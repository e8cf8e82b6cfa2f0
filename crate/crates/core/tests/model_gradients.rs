use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_surrogate_core::features::{Channel, ChannelMask};
use reach_surrogate_core::model::{self, ModelConfig, ModelParams};
use reach_surrogate_core::Tensor;

fn cfg(mask: ChannelMask, fno_blocks: usize) -> ModelConfig {
    ModelConfig {
        hidden: 5,
        max_modes: 3,
        seq_len: 3,
        fno_blocks,
        residual: false,
        ..ModelConfig::default()
    }
    .with_mask(mask)
}

fn random(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn coords(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn objective(cfg: &ModelConfig, p: &ModelParams, w: &Tensor, x: &[f64], seed: &Tensor) -> f64 {
    let out = model::forward(cfg, p, w, x).unwrap();
    out.data().iter().zip(seed.data()).map(|(a, b)| a * b).sum()
}

fn check_gradients(cfg: ModelConfig, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(&cfg, n, &mut rng).unwrap();
    // Non-zero biases so every path carries signal.
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let batch = 2;
    let w = random(&[batch, cfg.seq_len, n, 8], 1.0, &mut rng);
    let x = coords(n);
    let seed_grad = random(&[batch, n, 2], 1.0, &mut rng);

    let (_, cache) = model::forward_cached(&cfg, &params, &w, &x).unwrap();
    let grads = model::backward(&cfg, &params, &cache, &seed_grad).unwrap();

    let h = 1e-6;
    let names = params.names();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data().to_vec()).collect();
    let mut worst = 0.0f64;
    for (k, name) in names.iter().enumerate() {
        for (i, &g) in analytic[k].iter().enumerate() {
            let orig = params.tensors()[k].data()[i];
            params.tensors_mut()[k].data_mut()[i] = orig + h;
            let up = objective(&cfg, &params, &w, &x, &seed_grad);
            params.tensors_mut()[k].data_mut()[i] = orig - h;
            let down = objective(&cfg, &params, &w, &x, &seed_grad);
            params.tensors_mut()[k].data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-3);
            worst = worst.max(err);
            assert!(err < 1e-4, "{name}[{i}]: analytic {g}, finite difference {fd}");
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn gradients_match_finite_differences() {
    check_gradients(cfg(ChannelMask::all(), 1), 6, 11);
}

#[test]
fn gradients_with_odd_sections_and_two_blocks() {
    check_gradients(cfg(ChannelMask::all(), 2), 7, 12);
}

#[test]
fn gradients_with_residual_output() {
    let c = ModelConfig {
        residual: true,
        ..cfg(ChannelMask::all(), 1)
    };
    check_gradients(c, 6, 14);
}

#[test]
fn gradients_with_masked_channels() {
    let mask = ChannelMask::without(&[Channel::NMan, Channel::ZBank]).unwrap();
    check_gradients(cfg(mask, 1), 5, 13);
}

#[test]
fn gru_state_only_sees_its_own_section() {
    let c = cfg(ChannelMask::all(), 1);
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::init(&c, n, &mut rng).unwrap();
    let w = random(&[1, c.seq_len, n, 8], 1.0, &mut rng);
    let x = coords(n);
    let (out, base) = model::forward_cached(&c, &params, &w, &x).unwrap();
    let target = 2;
    let mut bumped = w.clone();
    for l in 0..c.seq_len {
        for ch in 0..8 {
            let v = bumped.get(&[0, l, target, ch]);
            bumped.set(&[0, l, target, ch], v + 0.5);
        }
    }
    let (out2, pert) = model::forward_cached(&c, &params, &bumped, &x).unwrap();
    for i in 0..n {
        let a = &base.gru_output()[i * c.hidden..][..c.hidden];
        let b = &pert.gru_output()[i * c.hidden..][..c.hidden];
        if i == target {
            assert_ne!(a, b);
        } else {
            assert_eq!(a, b, "section {i} changed");
        }
    }
    // The spectral block mixes sections, so the output moves elsewhere too.
    assert!((0..n).filter(|&i| i != target).any(|i| out.get(&[0, i, 0]) != out2.get(&[0, i, 0])));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn outputs_are_finite(seed in any::<u64>(), n in 3usize..12, scale in 0.01f64..6.0) {
        let c = cfg(ChannelMask::all(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&c, n, &mut rng).unwrap();
        let w = random(&[1, c.seq_len, n, 8], scale, &mut rng);
        let out = model::forward(&c, &params, &w, &coords(n)).unwrap();
        prop_assert!(out.is_finite());
    }

    #[test]
    fn batching_does_not_change_predictions(seed in any::<u64>(), n in 3usize..9, batch in 2usize..5) {
        let c = cfg(ChannelMask::all(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&c, n, &mut rng).unwrap();
        let w = random(&[batch, c.seq_len, n, 8], 1.0, &mut rng);
        let x = coords(n);
        let joint = model::forward(&c, &params, &w, &x).unwrap();
        let per = c.seq_len * n * 8;
        for b in 0..batch {
            let single = Tensor::from_vec(&[1, c.seq_len, n, 8], w.data()[b * per..][..per].to_vec()).unwrap();
            let alone = model::forward(&c, &params, &single, &x).unwrap();
            for (u, v) in alone.data().iter().zip(&joint.data()[b * n * 2..][..n * 2]) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }
}
