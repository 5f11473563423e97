//! Finite-difference checks of every backward pass, in f64.

use presence_nn::{grad_check, seeded_rng, Encoder, EncoderSpec, LinearHead, Mode, Module, ProjectionHead};
use rand::Rng;

fn random(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn flat<M: Module<f64>>(m: &M) -> Vec<f64> {
    m.named_params("").into_iter().filter(|(_, p)| p.is_trainable()).flat_map(|(_, p)| p.value.data.clone()).collect()
}

fn set_flat<M: Module<f64>>(m: &mut M, values: &[f64]) {
    let mut offset = 0;
    for (_, p) in m.named_params_mut("").into_iter().filter(|(_, p)| p.is_trainable()) {
        let n = p.value.len();
        p.value.data.copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, values.len());
}

fn flat_grad<M: Module<f64>>(m: &M) -> Vec<f64> {
    m.named_params("").into_iter().filter(|(_, p)| p.is_trainable()).flat_map(|(_, p)| p.grad.clone()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tiny_spec(blocks: usize) -> EncoderSpec {
    EncoderSpec { in_channels: 2, stage_channels: vec![3, 4], blocks_per_stage: blocks, ..EncoderSpec::default() }
}

fn check_encoder(spec: EncoderSpec, seed: u64) {
    let (n, h, w) = (4, 6, 5);
    let images = random(n * spec.in_channels * h * w, seed);
    let weights = random(n * 512, seed + 1);
    let mut encoder = Encoder::<f64>::new(spec, &mut seeded_rng(seed + 2)).unwrap();
    let params = flat(&encoder);
    let mut probe = encoder.clone();
    let err = grad_check(
        |p| {
            set_flat(&mut probe, p);
            Ok(dot(&probe.forward(&images, n, h, w, Mode::Train)?, &weights))
        },
        |p| {
            set_flat(&mut encoder, p);
            encoder.zero_grad();
            encoder.forward(&images, n, h, w, Mode::Train)?;
            encoder.backward(&weights)?;
            Ok(flat_grad(&encoder))
        },
        &params,
        1e-5,
    )
    .unwrap();
    println!("encoder max relative error {err:e} over {} params", params.len());
    assert!(err < 1e-4, "{err}");
}

#[test]
fn encoder_gradients() {
    check_encoder(tiny_spec(1), 1);
}

#[test]
fn deep_encoder_gradients() {
    check_encoder(EncoderSpec { in_channels: 1, ..tiny_spec(2) }, 5);
}

#[test]
fn projection_head_gradients() {
    let n = 4;
    let v = random(n * 512, 10);
    let weights = random(n * 128, 11);
    let mut head = ProjectionHead::<f64>::new(&mut seeded_rng(12));
    // Check only a slice of coordinates to keep the run short: perturb the
    // input representation instead of all 320k weights, and sample weights.
    let mut probe = head.clone();
    let err = grad_check(
        |x| Ok(dot(&probe.forward(x, Mode::Train)?, &weights)),
        |x| {
            head.forward(x, Mode::Train)?;
            head.backward(&weights)
        },
        &v,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "input gradient {err}");

    let mut head = ProjectionHead::<f64>::new(&mut seeded_rng(12));
    head.forward(&v, Mode::Train).unwrap();
    head.backward(&weights).unwrap();
    let mut worst = 0.0f64;
    for idx in (0..512 * 512).step_by(4099) {
        let mut numeric = 0.0;
        for sign in [1.0, -1.0] {
            let mut p = head.clone();
            p.w1.weight.value.data[idx] += sign * 1e-5;
            numeric += sign * dot(&p.infer(&v).unwrap(), &weights) / 2e-5;
        }
        worst = worst.max(presence_nn::relative_error(head.w1.weight.grad[idx], numeric));
    }
    assert!(worst < 1e-4, "W1 gradient {worst}");
}

#[test]
fn linear_head_gradients_through_softmax() {
    let n = 4;
    let v = random(n * 512, 20);
    let weights = random(n * 4, 21);
    let mut head = LinearHead::<f64>::new(&mut seeded_rng(22));
    let params = flat(&head);
    let mut probe = head.clone();
    let err = grad_check(
        |p| {
            set_flat(&mut probe, p);
            Ok(dot(&probe.probabilities(&v)?, &weights))
        },
        |p| {
            set_flat(&mut head, p);
            head.zero_grad();
            let logits = head.forward(&v, Mode::Train)?;
            let mut d = Vec::new();
            for (l, w) in logits.chunks(4).zip(weights.chunks(4)) {
                d.extend(presence_nn::softmax_backward(&presence_nn::softmax(l), w));
            }
            head.backward(&d)?;
            Ok(flat_grad(&head))
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}
