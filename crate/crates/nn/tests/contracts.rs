use presence_nn::checkpoint::{self, decode, encode, restore};
use presence_nn::{
    seeded_rng, softmax, Adam, AdamConfig, Encoder, EncoderSpec, LinearHead, Mode, Module, NnError, Param,
    ProjectionHead, Tensor, ZeroNormPolicy,
};
use proptest::prelude::*;
use rand::Rng;

fn random(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = seeded_rng(seed);
    (0..len).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn small_spec(in_channels: usize) -> EncoderSpec {
    EncoderSpec { in_channels, stage_channels: vec![4, 8, 8, 16], ..EncoderSpec::default() }
}

#[test]
fn output_is_512_for_rp_and_ratio_inputs() {
    for c in [1, 3] {
        let encoder = Encoder::<f32>::new(small_spec(c), &mut seeded_rng(1)).unwrap();
        let out = encoder.infer(&random(2 * c * 32 * 32, 2), 2, 32, 32).unwrap();
        assert_eq!(out.len(), 2 * 512);
    }
    let encoder = Encoder::<f32>::new(EncoderSpec::with_in_channels(3), &mut seeded_rng(1)).unwrap();
    assert_eq!(encoder.infer(&random(3 * 32 * 32, 2), 1, 32, 32).unwrap().len(), 512);
}

#[test]
fn channel_mismatch_is_rejected() {
    let encoder = Encoder::<f32>::new(small_spec(3), &mut seeded_rng(1)).unwrap();
    assert!(matches!(encoder.infer(&random(32 * 32, 2), 1, 32, 32), Err(NnError::Shape(_))));
    assert!(EncoderSpec { out_dim: 256, ..EncoderSpec::default() }.validate().is_err());
}

#[test]
fn inference_is_deterministic_and_batch_independent() {
    let mut encoder = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(3)).unwrap();
    // Move running statistics away from their initial values first.
    encoder.forward(&random(4 * 32 * 32, 4), 4, 32, 32, Mode::Train).unwrap();
    let images = random(3 * 32 * 32, 5);
    let a = encoder.infer(&images, 3, 32, 32).unwrap();
    let b = encoder.forward(&images, 3, 32, 32, Mode::Eval).unwrap();
    assert_eq!(a, b);
    let single = encoder.infer(&images[32 * 32..2 * 32 * 32], 1, 32, 32).unwrap();
    for (x, y) in single.iter().zip(&a[512..1024]) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn same_seed_same_weights() {
    let a = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(9)).unwrap();
    let b = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(9)).unwrap();
    let names = |e: &Encoder<f32>| e.named_params("x").into_iter().map(|(n, p)| (n, p.value.data.clone())).collect::<Vec<_>>();
    assert_eq!(names(&a), names(&b));
}

#[test]
fn zeroed_parameters_give_zero_output() {
    let mut encoder = Encoder::<f32>::new(small_spec(2), &mut seeded_rng(4)).unwrap();
    for (_, p) in encoder.named_params_mut("") {
        if p.is_trainable() {
            p.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let out = encoder.infer(&random(2 * 2 * 32 * 32, 6), 2, 32, 32).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_input_depends_only_on_normalization_offsets() {
    // With zero input every conv output is zero, so each block output is a
    // function of the batch-norm shifts alone: identical across samples.
    let encoder = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(4)).unwrap();
    let out = encoder.infer(&vec![0.0; 2 * 32 * 32], 2, 32, 32).unwrap();
    assert_eq!(out[..512], out[512..]);
    let mut shifted = encoder.clone();
    shifted.fc.bias.as_mut().unwrap().value.data.iter_mut().for_each(|v| *v = 0.0);
    shifted.stem_bn.beta.value.data.iter_mut().for_each(|v| *v = 0.0);
    for block in &mut shifted.blocks {
        block.bn1.beta.value.data.iter_mut().for_each(|v| *v = 0.0);
        block.bn2.beta.value.data.iter_mut().for_each(|v| *v = 0.0);
        if let Some((_, bn)) = block.shortcut.as_mut() {
            bn.beta.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    assert!(shifted.infer(&vec![0.0; 32 * 32], 1, 32, 32).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn parameter_names_are_dotted_paths() {
    let encoder = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(4)).unwrap();
    let names: Vec<String> = encoder.named_params("stage2.encoder").into_iter().map(|(n, _)| n).collect();
    assert_eq!(names[0], "stage2.encoder.stem.weight");
    assert!(names.contains(&"stage2.encoder.blocks.1.shortcut.conv.weight".to_string()));
    assert!(names.contains(&"stage2.encoder.blocks.0.bn1.running_var".to_string()));
    assert_eq!(names.last().unwrap(), "stage2.encoder.fc.bias");
    let deep = Encoder::<f32>::new(EncoderSpec { blocks_per_stage: 2, ..small_spec(1) }, &mut seeded_rng(4)).unwrap();
    assert_eq!(deep.blocks.len(), 8);
}

fn identity_head() -> ProjectionHead<f64> {
    let mut head = ProjectionHead::new(&mut seeded_rng(0));
    head.w1.weight.value.data.iter_mut().enumerate().for_each(|(i, w)| *w = if i / 512 == i % 512 { 1.0 } else { 0.0 });
    // Row r of W2 selects coordinate 2r.
    head.w2.weight.value.data.iter_mut().enumerate().for_each(|(i, w)| *w = if i % 512 == 2 * (i / 512) { 1.0 } else { 0.0 });
    head
}

#[test]
fn projection_with_selector_weights() {
    let head = identity_head();
    let v: Vec<f64> = (0..512).map(|i| 1.0 + i as f64).collect();
    let z = head.infer(&v).unwrap();
    let selected: Vec<f64> = (0..128).map(|r| v[2 * r]).collect();
    let norm = selected.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (a, b) in z.iter().zip(&selected) {
        assert!((a - b / norm).abs() < 1e-12);
    }
}

#[test]
fn projection_relu_zeroes_negative_channels() {
    let head = identity_head();
    // Even coordinates alternate sign; negative ones must vanish.
    let v: Vec<f64> = (0..512).map(|i| if (i / 2) % 2 == 0 { 2.0 } else { -3.0 }).collect();
    let z = head.infer(&v).unwrap();
    let expected = 1.0 / 64f64.sqrt();
    for (r, &zr) in z.iter().enumerate() {
        let want = if r % 2 == 0 { expected } else { 0.0 };
        assert!((zr - want).abs() < 1e-12, "row {r}: {zr}");
    }
}

#[test]
fn zero_projection_policy() {
    let mut head = identity_head();
    let v = vec![-1.0; 512];
    assert!(matches!(head.infer(&v), Err(NnError::ZeroNorm)));
    head.zero_norm = ZeroNormPolicy::Zero;
    assert!(head.infer(&v).unwrap().iter().all(|&x| x == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projections_are_unit_norm(seed in 0u64..1000) {
        let head = ProjectionHead::<f32>::new(&mut seeded_rng(seed));
        let v: Vec<f32> = random(3 * 512, seed + 7).into_iter().map(|x| x - 0.3).collect();
        let z = head.infer(&v).unwrap();
        for row in z.chunks(128) {
            let norm = row.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-1e4f64..1e4, 4)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn linear_head_probabilities_sum_to_one() {
    let head = LinearHead::<f32>::new(&mut seeded_rng(2));
    let p = head.probabilities(&random(5 * 512, 3)).unwrap();
    for row in p.chunks(4) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}

fn scalar(v: f64) -> Param<f64> {
    Param::trainable(Tensor::new(vec![1], vec![v]).unwrap())
}

#[test]
fn adam_first_step_is_learning_rate() {
    for g in [1e-3, 0.5, 40.0, -2.0] {
        let mut p = scalar(1.0);
        p.grad[0] = g;
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(vec![("w".into(), &mut p)]).unwrap();
        let step = 1.0 - p.value.data[0];
        // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps).
        let want = 1e-3 * g / (g.abs() + 1e-8);
        assert!((step - want).abs() < 1e-15, "g={g}: {step}");
    }
}

#[test]
fn adam_zero_gradient_and_buffers_are_untouched() {
    let mut p = scalar(0.25);
    let mut buffer = Param::buffer(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
    let mut adam = Adam::new(AdamConfig::default()).unwrap();
    adam.step(vec![("w".into(), &mut p), ("b".into(), &mut buffer)]).unwrap();
    assert_eq!(p.value.data, [0.25]);
    assert_eq!(buffer.value.data, [3.0, 4.0]);
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut a = scalar(1.0);
    let mut b = scalar(1.0);
    a.grad[0] = 1.0;
    b.grad[0] = f64::NAN;
    let mut adam = Adam::new(AdamConfig::default()).unwrap();
    assert!(matches!(adam.step(vec![("a".into(), &mut a), ("b".into(), &mut b)]), Err(NnError::NonFinite(_))));
    assert_eq!(a.value.data, [1.0]);
}

fn train_steps(seed: u64) -> Vec<(String, Vec<f32>)> {
    let mut encoder = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(seed)).unwrap();
    let mut adam = Adam::new(AdamConfig::default()).unwrap();
    let images = random(4 * 16 * 16, seed + 1);
    let target = random(4 * 512, seed + 2);
    for _ in 0..3 {
        encoder.zero_grad();
        let out = encoder.forward(&images, 4, 16, 16, Mode::Train).unwrap();
        let grad: Vec<f32> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
        encoder.backward(&grad).unwrap();
        adam.step(encoder.named_params_mut("")).unwrap();
    }
    encoder.named_params("").into_iter().map(|(n, p)| (n, p.value.data.clone())).collect()
}

#[test]
fn identical_runs_follow_identical_trajectories() {
    assert_eq!(train_steps(5), train_steps(5));
    assert_ne!(train_steps(5), train_steps(6));
}

#[test]
fn checkpoint_round_trip() {
    let mut encoder = Encoder::<f32>::new(small_spec(3), &mut seeded_rng(8)).unwrap();
    encoder.forward(&random(2 * 3 * 32 * 32, 9), 2, 32, 32, Mode::Train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.crnm");
    checkpoint::save(&path, &encoder, "stage2.encoder").unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"CRNM");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let name = "stage2.encoder.stem.weight";
    assert_eq!(u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize, name.len());
    assert_eq!(&bytes[10..10 + name.len()], name.as_bytes());
    assert_eq!(bytes[10 + name.len()], 0, "f32 dtype code");
    assert_eq!(bytes[11 + name.len()], 4, "rank");

    let mut other = Encoder::<f32>::new(small_spec(3), &mut seeded_rng(99)).unwrap();
    restore(&checkpoint::read(&path).unwrap(), &mut other, "stage2.encoder").unwrap();
    let images = random(3 * 32 * 32, 10);
    assert_eq!(encoder.infer(&images, 1, 32, 32).unwrap(), other.infer(&images, 1, 32, 32).unwrap());

    // Wrong prefix, wrong shape, truncation.
    let stored = checkpoint::read(&path).unwrap();
    assert!(restore(&stored, &mut other, "stage1.encoder").is_err());
    let mut wide = Encoder::<f32>::new(small_spec(1), &mut seeded_rng(1)).unwrap();
    assert!(matches!(restore(&stored, &mut wide, "stage2.encoder"), Err(NnError::Checkpoint(_))));
    assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    assert!(decode(b"CRNX\x01\0\0\0").is_err());
    assert!(!dir.path().join(".enc.crnm.tmp").exists());
}

#[test]
fn f64_checkpoints_load_into_f32_models() {
    let source = LinearHead::<f64>::new(&mut seeded_rng(3));
    let bytes = encode(&source.named_params("head")).unwrap();
    let stored = decode(&bytes).unwrap();
    assert_eq!(stored["head.weight"].dtype, 1);
    let mut target = LinearHead::<f32>::new(&mut seeded_rng(4));
    restore(&stored, &mut target, "head").unwrap();
    assert_eq!(target.linear.weight.value.data[7], source.linear.weight.value.data[7] as f32);
}
