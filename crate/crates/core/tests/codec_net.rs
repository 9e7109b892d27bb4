use pcnic::codec::{decode, encode, estimated_bits, reconstruct};
use pcnic::net::{causal_mask, rd_loss, Binding, Codec, CodecConfig, ContextModel, Noise, TrainConfig, Trainer};
use pcnic::stats::bin_mass;
use pcnic::tensor::gradcheck::check_gradients;
use pcnic::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn toy(n: usize, m: usize) -> CodecConfig {
    CodecConfig::with_channels(n, m, 0.015)
}

fn sample(h: usize, w: usize, seed: u64) -> Tensor<f64> {
    random(&[4, h, w], seed)
}

#[test]
fn geometry_follows_the_sixteen_fold_downsampling() {
    let model = Codec::<f64>::new(toy(8, 12), 1).unwrap();
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let xi = g.constant(random(&[3, 64, 64], 2));
    let xd = g.constant(random(&[1, 64, 64], 3));
    let yi = model.analysis_image(&mut g, &b, xi).unwrap();
    let yp = model.analysis_pointcloud(&mut g, &b, xd).unwrap();
    assert_eq!((g.shape(yi), g.shape(yp)), (&[8usize, 4, 4][..], &[8usize, 4, 4][..]));
    let y = model.fused_latent(&mut g, &b, xi, xd).unwrap();
    assert_eq!(g.shape(y), &[12, 4, 4]);
    let z = model.hyper_analysis(&mut g, &b, y).unwrap();
    assert_eq!(g.shape(z), &[8, 1, 1]);
    let raw = model.hyper_synthesis(&mut g, &b, z, 4, 4).unwrap();
    let (mu, sigma) = model.gaussian_from_raw(&mut g, raw).unwrap();
    assert_eq!((g.shape(mu), g.shape(sigma)), (&[12usize, 4, 4][..], &[12usize, 4, 4][..]));
    assert!(g.value(sigma).data().iter().all(|&s| s >= 0.11));
    let x = model.synthesis(&mut g, &b, y, 64, 64).unwrap();
    assert_eq!(g.shape(x), &[3, 64, 64]);

    let bad = g.constant(random(&[3, 40, 64], 4));
    assert!(model.analysis_image(&mut g, &b, bad).is_err());
}

#[test]
fn zero_input_with_zero_biases_gives_zero_latent() {
    let mut model = Codec::<f64>::new(toy(8, 12), 5).unwrap();
    let names: Vec<String> = model.params.names().filter(|n| n.ends_with(".bias")).map(str::to_string).collect();
    for n in names {
        model.params.get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let x = g.constant(Tensor::zeros(vec![3, 32, 32]));
    let y = model.analysis_image(&mut g, &b, x).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_depth_is_deterministic_and_branches_are_separate() {
    let model = Codec::<f64>::new(toy(8, 12), 6).unwrap();
    let run = |m: &Codec<f64>| {
        let mut g = Graph::new();
        let b = m.bind(&mut g, false);
        let xd = g.constant(Tensor::zeros(vec![1, 32, 32]));
        let y = m.analysis_pointcloud(&mut g, &b, xd).unwrap();
        g.value(y).clone()
    };
    let first = run(&model);
    assert_eq!(first, run(&model));
    assert!(first.data().iter().any(|&v| v != 0.0));

    let mut other = model.clone();
    let img_names: Vec<String> = other.params.names().filter(|n| n.starts_with("ga_img.")).map(str::to_string).collect();
    assert!(!img_names.is_empty());
    assert!(other.params.names().all(|n| !n.starts_with("ga_") || n.starts_with("ga_img.") || n.starts_with("ga_pc.")));
    for n in img_names {
        for v in other.params.get_mut(&n).unwrap().data_mut() {
            *v = *v * 1.7 + 0.3;
        }
    }
    assert_eq!(run(&other), first);
}

fn fused_pair(model: &Codec<f64>, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let yi = g.constant(random(&[8, 2, 2], seed));
    let yp = g.constant(random(&[8, 2, 2], seed + 1));
    let t = g.concat_channels(&[yi, yp]).unwrap();
    let x = g.conv2d(t, b.get("fuse.conv.weight").unwrap(), Some(b.get("fuse.conv.bias").unwrap()), 1, 1).unwrap();
    let y = model.mmfft(&mut g, &b, yi, yp).unwrap();
    (g.value(x).clone(), g.value(y).clone())
}

#[test]
fn saturated_gate_gives_identity_or_doubling() {
    let mut model = Codec::<f64>::new(toy(8, 12), 7).unwrap();
    model.params.get_mut("fuse.fc2.bias").unwrap().data_mut().fill(-1000.0);
    let (x, y) = fused_pair(&model, 10);
    assert_eq!(x, y);
    model.params.get_mut("fuse.fc2.bias").unwrap().data_mut().fill(1000.0);
    let (x, y) = fused_pair(&model, 10);
    for (a, b) in x.data().iter().zip(y.data()) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn fusion_without_attention_is_the_bare_conv() {
    let mut cfg = toy(8, 12);
    cfg.attention = false;
    let model = Codec::<f64>::new(cfg, 8).unwrap();
    assert!(model.params.get("fuse.fc1.weight").is_err());
    let (x, y) = fused_pair(&model, 11);
    assert_eq!(x, y);

    // straight loops over the concatenation
    let yi = random(&[8, 2, 2], 11);
    let yp = random(&[8, 2, 2], 12);
    let w = model.params.get("fuse.conv.weight").unwrap();
    let bias = model.params.get("fuse.conv.bias").unwrap();
    for o in 0..12 {
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = bias.data()[o];
                for c in 0..16 {
                    let src = if c < 8 { yi.data() } else { yp.data() };
                    for di in 0..3 {
                        for dj in 0..3 {
                            let (r, s) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                            if (0..2).contains(&r) && (0..2).contains(&s) {
                                acc += w.data()[((o * 16 + c) * 3 + di) * 3 + dj] * src[(c % 8) * 4 + r as usize * 2 + s as usize];
                            }
                        }
                    }
                }
                assert!((acc - y.data()[o * 4 + i * 2 + j]).abs() < 1e-12);
            }
        }
    }
}

/// Gate recomputed by hand: pooled statistics through fc1, leaky ReLU, fc2,
/// sigmoid of the sum.
fn oracle_gate(model: &Codec<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let (m, plane) = (x.shape()[0], x.shape()[1] * x.shape()[2]);
    let r = model.config.bottleneck();
    let (w1, b1) = (model.params.get("fuse.fc1.weight").unwrap().data(), model.params.get("fuse.fc1.bias").unwrap().data());
    let (w2, b2) = (model.params.get("fuse.fc2.weight").unwrap().data(), model.params.get("fuse.fc2.bias").unwrap().data());
    let f = |v: &[f64]| -> Vec<f64> {
        let hidden: Vec<f64> = (0..r)
            .map(|k| {
                let a = b1[k] + (0..m).map(|c| w1[k * m + c] * v[c]).sum::<f64>();
                if a > 0.0 { a } else { 0.01 * a }
            })
            .collect();
        (0..m).map(|c| b2[c] + (0..r).map(|k| w2[c * r + k] * hidden[k]).sum::<f64>()).collect()
    };
    let ch = |c: usize| &x.data()[c * plane..(c + 1) * plane];
    let avg: Vec<f64> = (0..m).map(|c| ch(c).iter().sum::<f64>() / plane as f64).collect();
    let max: Vec<f64> = (0..m).map(|c| ch(c).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let (fa, fm) = (f(&avg), f(&max));
    (0..m).map(|c| 1.0 / (1.0 + (-(fa[c] + fm[c])).exp())).collect()
}

#[test]
fn gate_tracks_per_channel_rescaling() {
    let model = Codec::<f64>::new(toy(8, 12), 9).unwrap();
    let x = random(&[12, 3, 3], 20).map(|v| v - 0.5);
    let scales: Vec<f64> = (0..12).map(|c| 0.5 + 0.25 * c as f64).collect();
    let scaled = Tensor::new(vec![12, 3, 3], x.data().iter().enumerate().map(|(i, v)| v * scales[i / 9]).collect()).unwrap();
    for t in [&x, &scaled] {
        let mut g = Graph::new();
        let b = model.bind(&mut g, false);
        let v = g.constant(t.clone());
        let s = model.channel_gate(&mut g, &b, v).unwrap();
        let got = g.value(s).data().to_vec();
        let want = oracle_gate(&model, t);
        let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }
}

#[test]
fn context_predictions_are_causal() {
    let mut cfg = toy(4, 6);
    cfg.context = true;
    let model = Codec::<f64>::new(cfg, 10).unwrap();
    let ctx = ContextModel::new(&model.params, 6).unwrap();
    let (h, w) = (4, 5);
    let hyper = random(&[12, h, w], 30).into_data();
    let base: Vec<f64> = random(&[6, h, w], 31).data().iter().map(|v| (v * 6.0 - 3.0).round()).collect();
    let all = |y: &[f64]| (0..h * w).map(|p| ctx.params_at(y, &hyper, h, w, p / w, p % w)).collect::<Vec<_>>();
    let reference = all(&base);
    for p in [0, 7, 12, h * w - 1] {
        let mut y = base.clone();
        for c in 0..6 {
            y[c * h * w + p] += 5.0;
        }
        let got = all(&y);
        assert_eq!(got[..=p], reference[..=p], "position {p}");
    }

    // zero latent: only the hyper branch matters
    let zero = vec![0.0; 6 * h * w];
    let other_hyper = random(&[12, h, w], 32).into_data();
    let a = ctx.params_at(&zero, &hyper, h, w, 2, 2);
    let b = ctx.params_at(&zero, &other_hyper, h, w, 2, 2);
    assert_ne!(a, b);
    assert_eq!(a, ctx.params_at(&zero, &hyper, h, w, 2, 2));
}

#[test]
fn serial_context_matches_whole_latent_graph() {
    let mut cfg = toy(4, 6);
    cfg.context = true;
    let model = Codec::<f64>::new(cfg, 11).unwrap();
    let ctx = ContextModel::new(&model.params, 6).unwrap();
    let (h, w) = (4, 4);
    let hyper = random(&[12, h, w], 40);
    let y: Vec<f64> = random(&[6, h, w], 41).data().iter().map(|v| (v * 8.0 - 4.0).round()).collect();
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let yv = g.constant(Tensor::new(vec![6, h, w], y.clone()).unwrap());
    let hv = g.constant(hyper.clone());
    let (mu, sigma) = model.context_gaussian(&mut g, &b, yv, hv).unwrap();
    for p in 0..h * w {
        let (m, s) = ctx.params_at(&y, hyper.data(), h, w, p / w, p % w);
        for c in 0..6 {
            assert!((m[c] - g.value(mu).data()[c * 16 + p]).abs() < 1e-12);
            assert!((s[c] - g.value(sigma).data()[c * 16 + p]).abs() < 1e-12);
        }
    }
    assert_eq!(causal_mask::<f64>(1, 1).data().iter().sum::<f64>(), 12.0);
}

#[test]
fn bin_masses_sum_to_one_up_to_truncation() {
    for &sigma in &[0.11, 0.3, 1.0, 4.0, 20.0] {
        for &mu in &[-2.0, -0.7, 0.0, 0.4, 2.0] {
            // series over integers k, far enough out that the tail is below 1e-12
            let total: f64 = (-400..=400).map(|k: i32| bin_mass(k as f64 - mu, sigma)).sum();
            assert!(total <= 1.0 + 1e-12 && total >= 1.0 - 1e-4, "σ={sigma} μ={mu}: {total}");
        }
    }
    assert_eq!(bin_mass(1.3, 0.8), bin_mass(-1.3, 0.8));
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let cfg = toy(8, 12);
    let model = Codec::<f64>::new(cfg.clone(), 12).unwrap();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    let inputs: Vec<Tensor<f64>> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let s = sample(32, 32, 13);
    let (img, depth) = Codec::split_sample(&s).unwrap();
    let noise = Noise::sample(&cfg, 32, 32, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
    // The loss is O(100): steps below ~1e-6 drown in round-off, steps above
    // ~1e-4 start crossing leaky-ReLU and max-pool kinks.
    let report = check_gradients(&inputs, 2, 1e-5, 15, |g: &mut Graph<f64>, vars: &[Var]| {
        let b = Binding::from_vars(names.iter().map(String::as_str).zip(vars.iter().copied()));
        let xi = g.constant(img.clone());
        let xd = g.constant(depth.clone());
        let out = model.forward(g, &b, xi, xd, &noise).map_err(|e| match e {
            pcnic::net::NetError::Tensor(t) => t,
            other => panic!("{other}"),
        })?;
        Ok(out.loss)
    })
    .unwrap();
    assert!(report.passes(1e-3), "{report:?}");
}

#[test]
fn rd_loss_is_linear_in_lambda() {
    assert_eq!(rd_loss(0.0, 0.0, 0.0016, 64), 0.0);
    let (a, b) = (rd_loss(100.0, 0.01, 0.015, 64), rd_loss(100.0, 0.01, 0.03, 64));
    assert!(((b - 100.0 / 64.0) - 2.0 * (a - 100.0 / 64.0)).abs() < 1e-12);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let model = Codec::<f64>::new(toy(4, 6), 16).unwrap();
    let before = model.params.clone();
    let mut t = Trainer::new(model, TrainConfig { lr: 0.0, batch_size: 2, ..Default::default() }).unwrap();
    let data = [sample(32, 32, 17), sample(32, 32, 18)];
    let stats = t.step(&[&data[0], &data[1]]).unwrap();
    assert!(stats.loss.is_finite());
    assert_eq!(t.model.params, before);
}

#[test]
fn loss_ignores_the_depth_channel_given_the_latent() {
    let cfg = toy(4, 6);
    let model = Codec::<f64>::new(cfg.clone(), 19).unwrap();
    let s = sample(32, 32, 20);
    let (img, _) = Codec::split_sample(&s).unwrap();
    let noise = Noise::<f64>::zeros(&cfg, 32, 32).unwrap();
    let loss_with = |depth: Tensor<f64>| {
        let mut g = Graph::new();
        let b = model.bind(&mut g, false);
        let xi = g.constant(img.clone());
        let xd = g.constant(depth);
        let y = model.fused_latent(&mut g, &b, xi, xd).unwrap();
        // hold ŷ fixed, then build the distortion from it
        let fixed = g.constant(g.value(y).clone());
        let x_hat = model.synthesis(&mut g, &b, fixed, 32, 32).unwrap();
        let mse = g.mse(xi, x_hat).unwrap();
        (g.value(y).clone(), g.value(mse).data()[0])
    };
    let (y0, d0) = loss_with(random(&[1, 32, 32], 21));
    let (y1, _) = loss_with(random(&[1, 32, 32], 22));
    assert_ne!(y0, y1);
    // with the latent held, the depth input has no path to the loss
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let xi = g.constant(img.clone());
    let fixed = g.constant(y0);
    let x_hat = model.synthesis(&mut g, &b, fixed, 32, 32).unwrap();
    let mse = g.mse(xi, x_hat).unwrap();
    assert_eq!(g.value(mse).data()[0], d0);
    let _ = noise;
}

#[test]
fn toy_training_descends() {
    let model = Codec::<f64>::new(toy(4, 6), 23).unwrap();
    let data: Vec<Tensor<f64>> = (0..4).map(|k| sample(32, 32, 100 + k)).collect();
    let mut t = Trainer::new(model, TrainConfig { lr: 1e-3, batch_size: 4, ..Default::default() }).unwrap();
    let mut losses = Vec::new();
    t.run(&data, 80, |s| {
        assert!(s.loss.is_finite());
        losses.push(s.loss);
        Ok(())
    })
    .unwrap();
    assert!(losses.last().unwrap() < &(0.7 * losses[0]), "{losses:?}");
}

fn trained_like(cfg: CodecConfig, seed: u64) -> Codec<f64> {
    Codec::<f64>::new(cfg, seed).unwrap()
}

#[test]
fn estimated_rate_matches_coder_output() {
    for context in [false, true] {
        let mut cfg = toy(8, 12);
        cfg.context = context;
        let model = trained_like(cfg, 24);
        for seed in 0..3 {
            let s = sample(64, 64, 200 + seed).map(|v| v * 40.0);
            let enc = encode(&model, &s).unwrap();
            let est = enc.estimated_y_bits + enc.estimated_z_bits;
            let actual = 8.0 * (enc.y_bytes + enc.z_bytes) as f64;
            assert!((est - actual).abs() <= 0.01 * est + 64.0, "context={context}: est {est} vs {actual}");
        }
    }
}

#[test]
fn serial_decode_reproduces_encoder_parameters() {
    let mut cfg = toy(8, 12);
    cfg.context = true;
    let model = trained_like(cfg, 25);
    // 64×64 input → 4×4×M latent
    let s = sample(64, 64, 300).map(|v| v * 20.0 - 10.0);
    let enc = encode(&model, &s).unwrap();
    assert_eq!(enc.y_params.shape, [12, 4, 4]);
    let dec = decode(&model, &enc.bytes).unwrap();
    assert_eq!(dec.y_hat, enc.y_hat);
    assert_eq!(dec.y_params, enc.y_params);
    assert_eq!(estimated_bits(&dec.y_hat, &dec.y_params), enc.estimated_y_bits);
}

#[test]
fn decoder_needs_only_the_bitstream() {
    let model = trained_like(toy(8, 12), 26);
    let s = sample(32, 48, 400);
    let mut zeroed = s.clone();
    zeroed.data_mut()[3 * 32 * 48..].fill(0.0);
    let a = encode(&model, &s).unwrap();
    let b = encode(&model, &zeroed).unwrap();
    // the depth channel reaches the reconstruction only through ŷ
    let ra = reconstruct(&model, &a.y_hat, 32, 48).unwrap();
    assert_eq!(decode(&model, &a.bytes).unwrap().image, ra);
    if a.y_hat == b.y_hat {
        assert_eq!(reconstruct(&model, &b.y_hat, 32, 48).unwrap(), ra);
    }
    assert_eq!(ra.shape(), &[3, 32, 48]);
    assert!(ra.data().iter().all(|&v| (0.0..=1.0).contains(&v) && (v * 255.0).round() / 255.0 == v));
    assert_eq!(encode(&model, &s).unwrap().bytes, a.bytes);
}

#[test]
fn mismatched_model_is_refused() {
    let a = trained_like(toy(8, 12), 27);
    let b = trained_like(toy(8, 12), 28);
    let enc = encode(&a, &sample(32, 32, 500)).unwrap();
    let err = decode(&b, &enc.bytes).unwrap_err();
    assert!(err.to_string().contains("hash"), "{err}");
}

#[test]
fn checkpoint_round_trip_preserves_hash() {
    let dir = tempfile::tempdir().unwrap();
    let model = Codec::<f32>::new(toy(8, 12), 29).unwrap();
    model.save(dir.path()).unwrap();
    let back = Codec::<f32>::load(dir.path()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.config_hash(), model.config_hash());
}


