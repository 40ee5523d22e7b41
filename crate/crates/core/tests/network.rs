use lagvae::nn::*;
use lagvae::objective::KlForm;
use lagvae::rng::{gaussian, seeded};
use lagvae::trainer::{objective_and_gradients, objective_value};
use proptest::prelude::*;
use rand::Rng;

fn random_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n).map(|_| gaussian(&mut rng)).collect()
}

fn random_input(arch: &ArchSpec, m: usize, seed: u64) -> BatchTensor {
    BatchTensor::from_vec(
        m,
        arch.input_channels,
        arch.input_length,
        random_vec(seed, m * arch.input_channels * arch.input_length),
    )
    .unwrap()
}

/// Direct evaluation of the padded strided correlation, reading zero
/// outside the input.
fn direct_conv(
    x: &[f64],
    b: usize,
    cin: usize,
    lin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
) -> Vec<f64> {
    let lout = lin / s;
    let mut y = vec![0.0; b * cout * lout];
    for n in 0..b {
        for o in 0..cout {
            for j in 0..lout {
                let mut acc = 0.0;
                for c in 0..cin {
                    for t in 0..k {
                        let pos = (j * s + t) as isize - p as isize;
                        if pos >= 0 && (pos as usize) < lin {
                            acc += w[(o * cin + c) * k + t] * x[(n * cin + c) * lin + pos as usize];
                        }
                    }
                }
                y[(n * cout + o) * lout + j] = acc;
            }
        }
    }
    y
}

/// Transposed convolution by scatter-add: every input sample spreads a
/// kernel-wide footprint onto the output, which is then cropped by `p`.
fn scatter_tconv(
    x: &[f64],
    b: usize,
    cin: usize,
    lin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
) -> Vec<f64> {
    let full = (lin - 1) * s + k;
    let lout = lin * s;
    let mut y = vec![0.0; b * cout * lout];
    for n in 0..b {
        let mut buf = vec![0.0; cout * full];
        for c in 0..cin {
            for j in 0..lin {
                let v = x[(n * cin + c) * lin + j];
                for o in 0..cout {
                    for t in 0..k {
                        buf[o * full + j * s + t] += v * w[(c * cout + o) * k + t];
                    }
                }
            }
        }
        for o in 0..cout {
            for q in 0..lout {
                y[(n * cout + o) * lout + q] = buf[o * full + q + p];
            }
        }
    }
    y
}

#[test]
fn strided_conv_matches_direct_oracle() {
    for (k, s, lin, cin, cout) in [(8, 4, 64, 3, 5), (4, 2, 16, 2, 3), (2, 2, 10, 1, 1), (6, 2, 12, 4, 2)] {
        let g = ConvGeometry { kernel: k, stride: s, pad: (k - s) / 2 };
        let x = random_vec(1, 2 * cin * lin);
        let w = random_vec(2, cout * cin * k);
        let lout = g.out_len(lin);
        assert_eq!(lout, lin / s);
        let fast = conv1d(&x, 2, cin, lin, &w, cout, g, lout);
        let slow = direct_conv(&x, 2, cin, lin, &w, cout, k, s, g.pad);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn transposed_conv_matches_scatter_oracle() {
    for (k, s, lin, cin, cout) in [(8, 4, 16, 5, 3), (4, 2, 8, 3, 2), (2, 2, 5, 1, 1)] {
        let g = ConvGeometry { kernel: k, stride: s, pad: (k - s) / 2 };
        let x = random_vec(3, 2 * cin * lin);
        // Stored in x out x k, which is the forward conv's out x in layout.
        let w = random_vec(4, cin * cout * k);
        let fast = conv1d_input_grad(&x, 2, cin, lin, &w, cout, g, lin * s);
        let slow = scatter_tconv(&x, 2, cin, lin, &w, cout, k, s, g.pad);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_weight_gradient_matches_finite_differences() {
    let g = ConvGeometry { kernel: 4, stride: 2, pad: 1 };
    let (cin, cout, lin) = (2, 3, 10);
    let x = random_vec(5, cin * lin);
    let w = random_vec(6, cout * cin * 4);
    let dy = random_vec(7, cout * lin / 2);
    let loss =
        |w: &[f64]| -> f64 { conv1d(&x, 1, cin, lin, w, cout, g, lin / 2).iter().zip(&dy).map(|(a, b)| a * b).sum() };
    let dw = conv1d_weight_grad(&x, 1, cin, lin, &dy, cout, g, lin / 2);
    for i in 0..w.len() {
        let mut wp = w.clone();
        wp[i] += 1e-5;
        let mut wm = w.clone();
        wm[i] -= 1e-5;
        let num = (loss(&wp) - loss(&wm)) / 2e-5;
        assert!((num - dw[i]).abs() < 1e-8);
    }
}

#[test]
fn tiny_network_gradients_match_central_differences() {
    let arch = ArchSpec::tiny();
    let params = init_params(arch, 9).unwrap();
    let x = random_input(&arch, 2, 10);
    for form in [KlForm::Printed, KlForm::Standard] {
        let (_, grads) = objective_and_gradients(&params, &x, 0.3, form, &mut seeded(77)).unwrap();
        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        // Smaller steps hit round-off on the sub-1e-6 gradients.
        let h = 1e-5;
        for t in 0..grads.tensors().len() {
            for i in 0..grads.tensors()[t].data.len() {
                let orig = probe.tensors()[t].data[i];
                probe.tensors_mut()[t].data[i] = orig + h;
                let plus = objective_value(&probe, &x, 0.3, form, &mut seeded(77)).unwrap().j_total;
                probe.tensors_mut()[t].data[i] = orig - h;
                let minus = objective_value(&probe, &x, 0.3, form, &mut seeded(77)).unwrap().j_total;
                probe.tensors_mut()[t].data[i] = orig;
                let num = (plus - minus) / (2.0 * h);
                let ana = grads.tensors()[t].data[i];
                worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-6));
            }
        }
        assert!(worst < 1e-4, "{form:?}: {worst}");
    }
}

#[test]
fn latent_samples_have_requested_moments() {
    let draws = 100_000;
    let (mu, lv) = (1.5, (0.25f64).ln());
    let code = sample_latent(&vec![mu; draws], &vec![lv; draws], 1, &mut seeded(21)).unwrap();
    let mean = code.sample.iter().sum::<f64>() / draws as f64;
    let var = code.sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws as f64;
    // Standard errors: 0.5 / sqrt(1e5) ~ 1.6e-3 for the mean, ~1.1e-3 for the variance.
    assert!((mean - mu).abs() < 0.01, "{mean}");
    assert!((var - 0.25).abs() < 0.01, "{var}");
    assert!(code.sigma.iter().all(|&s| (s - 0.5).abs() < 1e-15));
}

#[test]
fn vanishing_variance_makes_forward_deterministic() {
    let arch = ArchSpec::tiny();
    let mut params = init_params(arch, 3).unwrap();
    for v in params.logvar_head.weight.data.iter_mut() {
        *v = 0.0;
    }
    for v in params.logvar_head.bias.data.iter_mut() {
        *v = -60.0;
    }
    let x = random_input(&arch, 3, 4);
    let a = forward(&params, &x, &mut seeded(1)).unwrap();
    let b = forward(&params, &x, &mut seeded(2)).unwrap();
    let (mu, _) = encode(&params, &x).unwrap();
    let direct = decode(&params, &mu, 3).unwrap();
    for ((p, q), r) in a.generated.data().iter().zip(b.generated.data()).zip(direct.data()) {
        assert!((p - q).abs() < 1e-9);
        assert!((p - r).abs() < 1e-9);
    }
}

#[test]
fn output_bias_gradient_is_summed_upstream_gradient() {
    let arch = ArchSpec::tiny();
    let params = init_params(arch, 12).unwrap();
    let x = random_input(&arch, 2, 13);
    let out = forward(&params, &x, &mut seeded(14)).unwrap();
    let up = random_input(&arch, 2, 15);
    let zeros = vec![0.0; 2 * arch.latent_dim];
    let g = backward(&params, &out.cache, &up, &zeros, &zeros).unwrap();
    for c in 0..arch.input_channels {
        let expect: f64 = (0..2).map(|n| up.row(n, c).iter().sum::<f64>()).sum();
        assert!((g.decoder[2].bias.data[c] - expect).abs() < 1e-12);
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let arch = ArchSpec::tiny();
    let params = init_params(arch, 16).unwrap();
    let x = random_input(&arch, 2, 17);
    let out = forward(&params, &x, &mut seeded(18)).unwrap();
    let zeros = vec![0.0; 2 * arch.latent_dim];
    let g = backward(&params, &out.cache, &BatchTensor::zeros(2, 3, arch.input_length), &zeros, &zeros).unwrap();
    assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
}

#[test]
fn default_network_shapes() {
    let arch = ArchSpec::default();
    let params = init_params(arch, 0).unwrap();
    let x = random_input(&arch, 2, 1);
    let out = forward(&params, &x, &mut seeded(0)).unwrap();
    assert_eq!(out.generated.shape(), (2, 3, 1024));
    assert_eq!(out.mu.len(), 64);
    assert_eq!(arch.feature_size(), 1024);
    assert!(params.all_finite());
}

#[test]
fn forward_is_finite_across_seeds() {
    let arch = ArchSpec { input_length: 256, ..ArchSpec::default() };
    let x = random_input(&arch, 2, 99);
    for seed in 0..100 {
        let params = init_params(arch, seed).unwrap();
        let out = forward(&params, &x, &mut seeded(seed + 1000)).unwrap();
        assert!(out.generated.data().iter().all(|v| v.is_finite()), "seed {seed}");
        assert!(out.mu.iter().chain(&out.logvar).all(|v| v.is_finite()));
    }
}

#[test]
fn backward_rejects_stale_cache() {
    let arch = ArchSpec::tiny();
    let mut params = init_params(arch, 1).unwrap();
    let x = random_input(&arch, 1, 2);
    let out = forward(&params, &x, &mut seeded(3)).unwrap();
    params.decoder[0].bias.data[0] += 1.0;
    let zeros = vec![0.0; arch.latent_dim];
    assert!(backward(&params, &out.cache, &out.generated, &zeros, &zeros).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transposed_conv_is_adjoint(seed in any::<u64>(), lin in 1usize..12, cin in 1usize..4, cout in 1usize..4, half in 0usize..3, s in 1usize..4) {
        let k = s + 2 * half;
        let g = ConvGeometry { kernel: k, stride: s, pad: half };
        let lout = lin;
        let lbig = lin * s;
        let mut rng = seeded(seed);
        let mut rv = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = rv(cin * lbig);
        let w = rv(cout * cin * k);
        let y = rv(cout * lout);
        let ax = conv1d(&x, 1, cin, lbig, &w, cout, g, lout);
        let aty = conv1d_input_grad(&y, 1, cout, lout, &w, cin, g, lbig);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn encoder_rows_are_independent(seed in any::<u64>()) {
        let arch = ArchSpec::tiny();
        let params = init_params(arch, seed).unwrap();
        let x = random_input(&arch, 3, seed.wrapping_add(1));
        let (mu, lv) = encode(&params, &x).unwrap();
        let (mu1, lv1) = encode(&params, &x.select(&[2, 0])).unwrap();
        let d = arch.latent_dim;
        prop_assert_eq!(&mu1[..d], &mu[2 * d..]);
        prop_assert_eq!(&mu1[d..], &mu[..d]);
        prop_assert_eq!(&lv1[..d], &lv[2 * d..]);
    }
}
