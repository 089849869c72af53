use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shadow_core::nn::gradcheck::{broken_backward_check, run_suite, COMPOSITE_TOL, OP_TOL, SUITE_SEED};
use shadow_core::nn::{
    clip_grad_norm, gaussian_log_prob, global_norm, select_embedding, AdamW, AdamWConfig, CriticNet, Encoder,
    EncoderConfig, NetDims, NetworkConfig, ObsBatch, ObsRef, ParamSet, PolicyNet, Tape, Tensor,
};

const DEFAULT_DIMS: NetDims = NetDims { obs: 135, token: 52, actions: 7 };

fn small_cfg() -> NetworkConfig {
    NetworkConfig {
        encoder: EncoderConfig { num_heads: 2, d_model: 8, feedforward: 12, output: 6, ..Default::default() },
        mlp_hidden: vec![10, 10],
        ..Default::default()
    }
}

#[test]
fn gradient_suite_passes_and_catches_broken_backward() {
    let start = std::time::Instant::now();
    let results = run_suite(SUITE_SEED).unwrap();
    for r in &results {
        assert!(r.passed(), "{}: max rel err {:e} over {} cases", r.name, r.max_rel_err, r.cases);
        assert!(r.tol == OP_TOL || r.tol == COMPOSITE_TOL);
        assert!(r.cases >= 1);
    }
    assert!(results.iter().filter(|r| r.tol == OP_TOL).all(|r| r.cases >= 10));
    assert!(results.iter().any(|r| r.name.contains("encoder")));
    assert!(start.elapsed().as_secs() < 120);
    assert!(!broken_backward_check(1).unwrap().passed());
}

fn encode(enc: &Encoder, ps: &ParamSet, tokens: &Tensor, n: usize) -> Tensor {
    let mut t = Tape::new();
    let p = ps.constants(&mut t);
    let x = t.constant(tokens.clone());
    let mask = t.constant(Tensor::zeros(&[1, n, n]));
    let out = enc.forward(&mut t, &p, x, mask, 1, n).unwrap();
    t.value(out).clone()
}

#[test]
fn encoder_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ps = ParamSet::new();
    let cfg = EncoderConfig { num_heads: 2, d_model: 8, feedforward: 16, output: 5, num_layers: 2 };
    let enc = Encoder::new(&mut ps, "enc", 4, &cfg, &mut rng).unwrap();
    let n = 5;
    let tokens = Tensor::randn(&[n, 4], 1.0, &mut rng);
    let perm = [3, 0, 4, 1, 2];
    let mut shuffled = Tensor::zeros(&[n, 4]);
    for (i, &j) in perm.iter().enumerate() {
        shuffled.data[i * 4..(i + 1) * 4].copy_from_slice(tokens.row(j));
    }
    let a = encode(&enc, &ps, &tokens, n);
    let b = encode(&enc, &ps, &shuffled, n);
    for (i, &j) in perm.iter().enumerate() {
        for (x, y) in b.row(i).iter().zip(a.row(j)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn default_encoder_emits_one_row_per_token() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ps = ParamSet::new();
    let enc = Encoder::new(&mut ps, "enc", 52, &EncoderConfig::default(), &mut rng).unwrap();
    for k in 0..=5 {
        let out = encode(&enc, &ps, &Tensor::randn(&[k + 1, 52], 1.0, &mut rng), k + 1);
        assert_eq!(out.shape, vec![k + 1, 128]);
    }
}

#[test]
fn only_the_selected_embedding_receives_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = Tape::new();
    let emb = t.param(Tensor::randn(&[4, 3], 1.0, &mut rng));
    let sel = select_embedding(&mut t, emb, &[-0.2, 0.4, 0.1], 3).unwrap();
    let loss = t.sum(sel);
    let g = t.backward(loss).unwrap().get(emb);
    for r in 0..4 {
        let expect = if r == 2 { 1.0 } else { 0.0 };
        assert!(g.row(r).iter().all(|&v| v == expect), "row {r}: {:?}", g.row(r));
    }
}

struct Sample {
    proprio: Vec<f64>,
    tokens: Vec<f64>,
    n_tokens: usize,
}

fn samples(dims: &NetDims, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    [3usize, 1, 6, 2]
        .iter()
        .map(|&n| Sample {
            proprio: Tensor::randn(&[dims.obs], 1.0, rng).data,
            tokens: Tensor::randn(&[n * dims.token], 1.0, rng).data,
            n_tokens: n,
        })
        .collect()
}

fn batch(items: &[&Sample], dims: &NetDims, max_tokens: usize) -> ObsBatch {
    let refs: Vec<ObsRef<'_>> =
        items.iter().map(|s| ObsRef { proprio: &s.proprio, tokens: &s.tokens, n_tokens: s.n_tokens }).collect();
    ObsBatch::new(&refs, dims, max_tokens).unwrap()
}

#[test]
fn outputs_do_not_depend_on_batch_order_or_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = NetDims { obs: 5, token: 6, actions: 3 };
    let policy = PolicyNet::new(&small_cfg(), dims, &mut rng).unwrap();
    let critic = CriticNet::new(&small_cfg(), dims, &mut rng).unwrap();
    let s = samples(&dims, &mut rng);
    let all: Vec<&Sample> = s.iter().collect();
    let (mean, _) = policy.act(&batch(&all, &dims, 6)).unwrap();
    let values = critic.values(&batch(&all, &dims, 6)).unwrap();
    let reversed: Vec<&Sample> = s.iter().rev().collect();
    let (mean_r, _) = policy.act(&batch(&reversed, &dims, 8)).unwrap();
    let values_r = critic.values(&batch(&reversed, &dims, 8)).unwrap();
    for i in 0..s.len() {
        let j = s.len() - 1 - i;
        for (a, b) in mean.row(i).iter().zip(mean_r.row(j)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((values[i] - values_r[j]).abs() < 1e-12);
        let (alone, _) = policy.act(&batch(&[&s[i]], &dims, s[i].n_tokens)).unwrap();
        for (a, b) in mean.row(i).iter().zip(alone.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn default_parameter_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = NetworkConfig::default();
    // encoder: proj 52·128+128, two blocks of (2 layer norms, q k v o, two ff layers),
    // final layer norm, output 128·128+128; mlp 263→512→256→256→head
    let block = 2 * 256 + 4 * (128 * 128 + 128) + 2 * (128 * 128 + 128);
    let encoder = (52 * 128 + 128) + 2 * block + 256 + (128 * 128 + 128);
    let mlp = (263 * 512 + 512) + (512 * 256 + 256) + (256 * 256 + 256);
    let policy = PolicyNet::new(&cfg, DEFAULT_DIMS, &mut rng).unwrap();
    assert_eq!(policy.params.num_scalars(), encoder + mlp + (256 * 7 + 7) + 7);
    let critic = CriticNet::new(&cfg, DEFAULT_DIMS, &mut rng).unwrap();
    assert_eq!(critic.params.num_scalars(), encoder + mlp + 257);
}

/// Textbook Adam on flat vectors.
struct RefAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl RefAdam {
    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        for i in 0..p.len() {
            self.m[i] = 0.9 * self.m[i] + 0.1 * g[i];
            self.v[i] = 0.999 * self.v[i] + 0.001 * g[i] * g[i];
            let mh = self.m[i] / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v[i] / (1.0 - 0.999f64.powi(self.t));
            p[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
}

#[test]
fn adamw_without_decay_matches_reference_adam() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ps = ParamSet::new();
    ps.add("a", Tensor::randn(&[3, 4], 1.0, &mut rng));
    ps.add("b", Tensor::randn(&[5], 1.0, &mut rng));
    let mut flat: Vec<f64> = ps.tensors().iter().flat_map(|t| t.data.clone()).collect();
    let mut opt = AdamW::new(&ps, AdamWConfig { weight_decay: 0.0, ..Default::default() });
    let mut reference = RefAdam { m: vec![0.0; flat.len()], v: vec![0.0; flat.len()], t: 0 };
    for _ in 0..50 {
        let grads = vec![Tensor::randn(&[3, 4], 1.0, &mut rng), Tensor::randn(&[5], 1.0, &mut rng)];
        let g: Vec<f64> = grads.iter().flat_map(|t| t.data.clone()).collect();
        opt.step(&mut ps, &grads, 1e-2).unwrap();
        reference.step(&mut flat, &g, 1e-2);
    }
    let got: Vec<f64> = ps.tensors().iter().flat_map(|t| t.data.clone()).collect();
    for (a, b) in got.iter().zip(&flat) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

#[test]
fn log_density_integrates_to_one() {
    for (mean, std) in [(0.0, 1.0), (0.7, 0.2), (-1.5, 2.5)] {
        let (lo, hi, n) = (mean - 12.0 * std, mean + 12.0 * std, 20_000);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| gaussian_log_prob(&[mean], &[std], &[x]).exp();
        let mut simpson = f(lo) + f(hi);
        for i in 1..n {
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        let mass = simpson * h / 3.0;
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass} for N({mean}, {std}²)");
    }
}

proptest! {
    #[test]
    fn clipping_bounds_norm_and_keeps_direction(
        a in prop::collection::vec(-10.0..10.0f64, 1..20),
        b in prop::collection::vec(-10.0..10.0f64, 1..20),
        max_norm in 0.01..20.0f64,
    ) {
        let orig = vec![Tensor::from_vec(a), Tensor::from_vec(b)];
        let mut g = orig.clone();
        let before = clip_grad_norm(&mut g, max_norm);
        prop_assert!((before - global_norm(&orig)).abs() < 1e-12);
        let after = global_norm(&g);
        prop_assert!(after <= max_norm * (1.0 + 1e-12));
        if before <= max_norm {
            prop_assert_eq!(&g, &orig);
        } else {
            let s = max_norm / before;
            for (x, y) in g.iter().flat_map(|t| &t.data).zip(orig.iter().flat_map(|t| &t.data)) {
                prop_assert!((x - s * y).abs() < 1e-12);
            }
        }
    }
}
