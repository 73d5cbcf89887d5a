//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything. Pass substrings as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- metrics`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use affdetect::audio_io::AudioClip;
use affdetect::blocks::{
    AttentionalFusion, BackboneConfig, BlockKind, DetectorModel, FusionMode, MsCam,
    SeResidualBlock, SqueezeExcitation, Variant,
};
use affdetect::dsp::{
    extract_lfcc, extract_mfcc, fft, frame_signal, power_spectrum, CepstralConfig, Dct2,
    FeatureKind, FeatureMatrix,
};
use affdetect::features::{apply_mask, pad_center, MaskAxis, MaskSpec};
use affdetect::metrics::{auc, eer, roc_curve, Label, ScoredSample};
use affdetect::nn::{
    gradient_check, relative_error, softmax_cross_entropy, BatchNorm2d, Conv2d, GlobalAvgPool,
    Linear, Mode, Module, Padding, ParamKind, Relu, Sigmoid, Tensor,
};
use affdetect::pipeline::{
    evaluate_split, extract, train, train_mlp, write_corpus, ArtifactMode, Detector, FeatureIndex,
    RunConfig, Split, SynthSpec, CHECKPOINT_FILE, INDEX_FILE,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed of the end-to-end synthetic experiment, pinned after the first run.
const E2E_SEED: u64 = 7;
/// Seed of the fusion-vs-single ablation.
const ABLATION_SEED: u64 = 21;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed.as_secs_f64() <= limit_secs as f64
}

// --- DSP oracles --------------------------------------------------------------

fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    let a = -std::f64::consts::TAU * ((k * t) % n) as f64 / n as f64;
                    Complex64::new(v * a.cos(), v * a.sin())
                })
                .sum()
        })
        .collect()
}

fn dsp_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut fft_err = 0.0f64;
    let mut vectors = 0;
    for log2 in 0..=10 {
        let n = 1usize << log2;
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = fft(&x, n).unwrap();
            for (a, b) in fast.iter().zip(naive_dft(&x)) {
                fft_err = fft_err.max((a - b).norm());
            }
            vectors += 1;
        }
    }

    let samples: Vec<f32> = (0..16000).map(|_| rng.random_range(-0.5..0.5)).collect();
    let clip = AudioClip::new(samples, 16000).unwrap();
    let cfg = CepstralConfig::lfcc_default().frame;
    let frames = frame_signal(&clip, &cfg).unwrap();
    let mut parseval = 0.0f64;
    for f in frames.iter() {
        let p = power_spectrum(f, cfg.n_fft).unwrap();
        let n = cfg.n_fft;
        let spectral = (p[0] + p[n / 2] + 2.0 * p[1..n / 2].iter().sum::<f64>()) / n as f64;
        let time: f64 = f.iter().map(|v| v * v).sum();
        parseval = parseval.max((spectral - time).abs() / time);
    }

    let mut dct_err = 0.0f64;
    for n in [2, 13, 20, 64, 128] {
        let d = Dct2::new(n, n).unwrap();
        for _ in 0..20 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let back = d.transpose(&d.forward(&v));
            for (a, b) in back.iter().zip(&v) {
                dct_err = dct_err.max((a - b).abs());
            }
        }
    }
    let el = t0.elapsed();
    outcome(
        fft_err < 1e-9 && parseval < 1e-6 && dct_err < 1e-9 && within(el, 30),
        format!(
            "fft vs dft {fft_err:.2e} over {vectors} vectors (< 1e-9), parseval {parseval:.2e} (< 1e-6), \
             dct round trip {dct_err:.2e} (< 1e-9), {:.1}s",
            el.as_secs_f64()
        ),
    )
}

// --- feature geometry ---------------------------------------------------------

fn feature_geometry() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut ok = true;
    let mut shapes = Vec::new();
    for sr in [16000u32, 22050, 44100] {
        let s: Vec<f32> = (0..sr).map(|_| rng.random_range(-0.3..0.3)).collect();
        let clip = AudioClip::new(s, sr).unwrap();
        let m = extract_mfcc(&clip, &CepstralConfig::mfcc_default()).unwrap();
        ok &= m.shape() == (20, 44);
        shapes.push(format!("{sr} Hz mfcc {}x{}", m.rows(), m.cols()));
        let p = pad_center(&m);
        ok &= (p.rows(), p.cols()) == (136, 44) && p.origin() == (58, 0);
        for r in 0..136 {
            for c in 0..44 {
                let want = if (58..=77).contains(&r) {
                    m.get(r - 58, c)
                } else {
                    0.0
                };
                ok &= p.get(r, c) == want;
            }
        }
    }
    let s: Vec<f32> = (0..16000).map(|_| rng.random_range(-0.3..0.3)).collect();
    let l = extract_lfcc(
        &AudioClip::new(s, 16000).unwrap(),
        &CepstralConfig::lfcc_default(),
    )
    .unwrap();
    let p = pad_center(&l);
    let pl = p.placement();
    let trailing = 44 - pl.col - pl.cols;
    ok &= l.shape() == (98, 13) && (p.rows(), p.cols()) == (136, 44);
    ok &= pl.col == 15 && trailing == 16 && p.embedded() == l.values();
    let el = t0.elapsed();
    outcome(
        ok && within(el, 5),
        format!(
            "{}; lfcc {}x{} -> 136x44 at column offsets {}/{trailing}, {:.2}s",
            shapes.join(", "),
            l.rows(),
            l.cols(),
            pl.col,
            el.as_secs_f64()
        ),
    )
}

// --- masking ------------------------------------------------------------------

fn masking() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut ok = true;
    let mut worst_sum = 0.0f64;
    let mut widths = Vec::new();
    for seed in 0..50u64 {
        let values: Vec<f32> = (0..136 * 44)
            .map(|_| rng.random_range(-30.0..30.0))
            .collect();
        let m = FeatureMatrix::new(
            136,
            44,
            values,
            FeatureKind::Lfcc,
            FeatureKind::Lfcc.default_axes(),
        )
        .unwrap();
        let p = pad_center(&m);
        for axis in [MaskAxis::Frequency, MaskAxis::Time] {
            let spec = MaskSpec::new(axis, 0.07, seed).unwrap();
            let q = apply_mask(&p, &spec);
            let rows_are_lines = axis == MaskAxis::Frequency;
            let (n_lines, len) = if rows_are_lines { (136, 44) } else { (44, 136) };
            let at = |g: &affdetect::features::PaddedFeature, line: usize, i: usize| {
                if rows_are_lines {
                    g.get(line, i)
                } else {
                    g.get(i, line)
                }
            };
            let changed: Vec<usize> = (0..n_lines)
                .filter(|&line| (0..len).any(|i| at(&p, line, i) != at(&q, line, i)))
                .collect();
            if axis == MaskAxis::Frequency {
                widths.push(changed.len());
                ok &= spec.band_width(136) == 9;
            }
            // Changed lines form one band no wider than floor(0.07 * n).
            ok &= changed.len() <= spec.band_width(n_lines);
            ok &= changed.windows(2).all(|w| w[1] == w[0] + 1);
            for line in 0..n_lines {
                let a: f64 = (0..len).map(|i| at(&p, line, i) as f64).sum();
                let b: f64 = (0..len).map(|i| at(&q, line, i) as f64).sum();
                worst_sum = worst_sum.max((a - b).abs() / a.abs().max(1e-12));
            }
        }
    }
    let constant = FeatureMatrix::new(
        136,
        44,
        vec![-4.25; 136 * 44],
        FeatureKind::Lfcc,
        FeatureKind::Lfcc.default_axes(),
    )
    .unwrap();
    let cp = pad_center(&constant);
    for axis in [MaskAxis::Frequency, MaskAxis::Time] {
        for seed in 0..10 {
            ok &=
                apply_mask(&cp, &MaskSpec::new(axis, 0.07, seed).unwrap()).values() == cp.values();
        }
    }
    let nine = widths.iter().filter(|&&w| w == 9).count();
    let el = t0.elapsed();
    outcome(
        ok && worst_sum < 1e-5 && within(el, 5),
        format!(
            "band width floor(0.07*136) = 9 ({nine}/{} random grids changed exactly 9 rows), \
             per-line sum drift {worst_sum:.2e} (< 1e-5), constant grid fixed, {:.2}s",
            widths.len(),
            el.as_secs_f64()
        ),
    )
}

// --- gradient suite -----------------------------------------------------------

const EPS: f64 = 1e-5;
type T4 = Tensor<f64>;

fn random(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> T4 {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &T4, b: &T4) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Parameter-free layer wrapper so one checker covers everything.
#[derive(Clone)]
struct Stateless<L>(L);

impl<L> Module<f64> for Stateless<L> {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut T4, ParamKind)) {}
}

/// Worst relative error between backprop and central differences, over every
/// input coordinate and up to `per_tensor` coordinates of each trainable tensor.
fn check<M: Module<f64> + Clone>(
    m: &M,
    inputs: &[T4],
    per_tensor: usize,
    fwd: impl Fn(&mut M, &[T4]) -> T4,
    bwd: impl Fn(&mut M, &T4) -> Vec<T4>,
    loss: impl Fn(&T4) -> (f64, T4),
) -> f64 {
    let mut a = m.clone();
    a.zero_grad();
    let y = fwd(&mut a, inputs);
    let (_, dy) = loss(&y);
    let dx = bwd(&mut a, &dy);
    let eval = |mm: &mut M, xs: &[T4]| loss(&fwd(mm, xs)).0;

    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let mut probe = m.clone();
        let err = gradient_check(
            |v| {
                let mut xs = inputs.to_vec();
                xs[i] = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
                eval(&mut probe, &xs)
            },
            x.data(),
            dx[i].data(),
            EPS,
        );
        worst = worst.max(err);
    }
    let mut grads = Vec::new();
    a.visit("", &mut |name, t, kind| {
        if kind == ParamKind::Trainable {
            grads.push((name.to_string(), t.grad().unwrap().to_vec()));
        }
    });
    for (name, g) in grads {
        let picks: Vec<usize> = if g.len() <= per_tensor {
            (0..g.len()).collect()
        } else {
            (0..per_tensor).map(|i| i * g.len() / per_tensor).collect()
        };
        for idx in picks {
            let shifted = |delta: f64| {
                let mut p = m.clone();
                p.visit("", &mut |n, t, _| {
                    if n == name {
                        t.data_mut()[idx] += delta;
                    }
                });
                eval(&mut p, inputs)
            };
            let numeric = (shifted(EPS) - shifted(-EPS)) / (2.0 * EPS);
            worst = worst.max(relative_error(g[idx], numeric));
        }
    }
    worst
}

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut results: Vec<(&str, f64, f64)> = Vec::new();
    let r_for = |rng: &mut ChaCha8Rng, shape| random(rng, shape);

    // Layers.
    let conv = Conv2d::<f64>::new(&mut rng, 3, 4, (3, 3), 2, Padding::Same, true);
    let x = random(&mut rng, [2, 3, 7, 6]);
    let r = r_for(&mut rng, [2, 4, 4, 3]);
    let e = check(
        &conv,
        &[x],
        usize::MAX,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("conv2d", e, 1e-4));

    let mut bn = BatchNorm2d::<f64>::new(4);
    bn.visit("", &mut |n, t, _| {
        if n.ends_with("gamma") || n.ends_with("weight") {
            t.data_mut().copy_from_slice(&[0.7, 1.3, -0.4, 1.1]);
        }
    });
    let x = random(&mut rng, [3, 4, 3, 3]);
    let r = r_for(&mut rng, [3, 4, 3, 3]);
    let e = check(
        &bn,
        &[x],
        usize::MAX,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("batchnorm", e, 1e-4));

    let fc = Linear::<f64>::new(&mut rng, 12, 5);
    let x = random(&mut rng, [3, 3, 2, 2]);
    let r = r_for(&mut rng, [3, 5, 1, 1]);
    let e = check(
        &fc,
        &[x],
        usize::MAX,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("linear", e, 1e-4));

    // Keep inputs away from the ReLU kink.
    let x = random(&mut rng, [2, 3, 4, 4]).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let r = r_for(&mut rng, [2, 3, 4, 4]);
    let e = check(
        &Stateless(Relu::<f64>::new()),
        &[x.clone()],
        0,
        |m, xs| m.0.forward(&xs[0]),
        |m, dy| vec![m.0.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("relu", e, 1e-4));
    let e = check(
        &Stateless(Sigmoid::<f64>::new()),
        &[x.clone()],
        0,
        |m, xs| m.0.forward(&xs[0]),
        |m, dy| vec![m.0.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("sigmoid", e, 1e-4));
    let rp = r_for(&mut rng, [2, 3, 1, 1]);
    let e = check(
        &Stateless(GlobalAvgPool::new()),
        &[x],
        0,
        |m, xs| m.0.forward(&xs[0]),
        |m, dy| vec![m.0.backward(dy).unwrap()],
        |y| (dot(y, &rp), rp.clone()),
    );
    results.push(("global avg pool", e, 1e-4));

    let logits = random(&mut rng, [4, 3, 1, 1]).map(|v| 3.0 * v);
    let labels = [0usize, 2, 1, 2];
    let e = check(
        &Stateless(()),
        &[logits],
        0,
        |_, xs| xs[0].clone(),
        |_, dy| vec![dy.clone()],
        |y| softmax_cross_entropy(y, &labels).unwrap(),
    );
    results.push(("softmax cross-entropy", e, 1e-4));

    // Blocks.
    let se = SqueezeExcitation::<f64>::new(&mut rng, 8, 4);
    let x = random(&mut rng, [2, 8, 4, 4]);
    let r = r_for(&mut rng, [2, 8, 4, 4]);
    let e = check(
        &se,
        &[x],
        usize::MAX,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("squeeze-excitation", e, 1e-4));

    let cam = MsCam::<f64>::new(&mut rng, 8, 4);
    let x = random(&mut rng, [2, 8, 6, 6]);
    let r = r_for(&mut rng, [2, 8, 6, 6]);
    let e = check(
        &cam,
        &[x],
        8,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("ms-cam", e, 1e-4));

    // Batch 4: with two items the batch-norm over pooled vectors saturates.
    let aff = AttentionalFusion::<f64>::new(&mut rng, 8, 4);
    let (x, y) = (
        random(&mut rng, [4, 8, 5, 5]),
        random(&mut rng, [4, 8, 5, 5]),
    );
    let r = r_for(&mut rng, [4, 8, 5, 5]);
    let e = check(
        &aff,
        &[x, y],
        8,
        |m, xs| m.forward(&xs[0], &xs[1], Mode::Train).unwrap(),
        |m, dy| {
            let (a, b) = m.backward(dy).unwrap();
            vec![a, b]
        },
        |z| (dot(z, &r), r.clone()),
    );
    results.push(("aff", e, 1e-4));

    let basic = SeResidualBlock::<f64>::new(&mut rng, BlockKind::Basic, 4, 8, 2, 4);
    let x = random(&mut rng, [2, 4, 6, 6]);
    let r = r_for(&mut rng, [2, 8, 3, 3]);
    let e = check(
        &basic,
        &[x],
        8,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("se-residual basic", e, 1e-4));

    let bottleneck = SeResidualBlock::<f64>::new(&mut rng, BlockKind::Bottleneck, 8, 4, 1, 4);
    let x = random(&mut rng, [2, 8, 4, 4]);
    let r = r_for(&mut rng, [2, 16, 4, 4]);
    let e = check(
        &bottleneck,
        &[x],
        8,
        |m, xs| m.forward(&xs[0], Mode::Train).unwrap(),
        |m, dy| vec![m.backward(dy).unwrap()],
        |y| (dot(y, &r), r.clone()),
    );
    results.push(("se-residual bottleneck", e, 1e-4));

    let model = DetectorModel::<f64>::new(
        BackboneConfig::toy(Variant::Resnet34Se, FusionMode::Aff),
        103,
    )
    .unwrap();
    let (xm, xl) = (
        random(&mut rng, [4, 1, 12, 10]),
        random(&mut rng, [4, 1, 12, 10]),
    );
    let labels = [0usize, 1, 0, 1];
    let e = check(
        &model,
        &[xm, xl],
        4,
        |m, xs| m.forward(Some(&xs[0]), Some(&xs[1]), Mode::Train).unwrap(),
        |m, dy| {
            let g = m.backward(dy).unwrap();
            vec![g.mfcc.unwrap(), g.lfcc.unwrap()]
        },
        |y| softmax_cross_entropy(y, &labels).unwrap(),
    );
    results.push(("full toy model", e, 1e-3));

    let el = t0.elapsed();
    let pass = results.iter().all(|&(_, e, tol)| e < tol) && within(el, 120);
    let detail = results
        .iter()
        .map(|(n, e, tol)| format!("{n} {e:.1e}{}", if e < tol { "" } else { " (!)" }))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        pass,
        format!(
            "{detail}; tolerances 1e-4 layers/blocks, 1e-3 full model; {:.1}s",
            el.as_secs_f64()
        ),
    )
}

// --- block identities ---------------------------------------------------------

fn block_identities() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut aff = AttentionalFusion::<f64>::new(&mut rng, 16, 4);
    let mut identical = 0;
    let mut gates_ok = true;
    for i in 0..100 {
        let scale = if i % 10 == 0 { 50.0 } else { 1.0 };
        let x = random(&mut rng, [2, 16, 5, 4]).map(|v| v * scale);
        let mode = if i % 2 == 0 { Mode::Train } else { Mode::Eval };
        let z = aff.forward(&x, &x, mode).unwrap();
        identical += usize::from(z == x);
        gates_ok &= aff
            .last_gate()
            .unwrap()
            .data()
            .iter()
            .all(|&g| g > 0.0 && g < 1.0);
    }
    let mut se = SqueezeExcitation::<f64>::new(&mut rng, 16, 4);
    let mut cam = MsCam::<f64>::new(&mut rng, 16, 4);
    for _ in 0..20 {
        let x = random(&mut rng, [3, 16, 4, 4]).map(|v| v * 10.0);
        se.forward(&x, Mode::Train).unwrap();
        gates_ok &= se
            .last_gates()
            .unwrap()
            .data()
            .iter()
            .all(|&g| g > 0.0 && g < 1.0);
        let g = cam.forward(&x, Mode::Train).unwrap();
        gates_ok &= g.data().iter().all(|&g| g > 0.0 && g < 1.0);
    }
    let el = t0.elapsed();
    outcome(
        identical == 100 && gates_ok && within(el, 10),
        format!(
            "aff(x, x) == x bitwise for {identical}/100, gates in (0, 1): {gates_ok}, {:.2}s",
            el.as_secs_f64()
        ),
    )
}

// --- metrics oracles ----------------------------------------------------------

fn pairwise_auc(s: &[ScoredSample]) -> f64 {
    let fake: Vec<f64> = s
        .iter()
        .filter(|x| x.label == Label::Fake)
        .map(|x| x.score)
        .collect();
    let real: Vec<f64> = s
        .iter()
        .filter(|x| x.label == Label::Real)
        .map(|x| x.score)
        .collect();
    let mut wins = 0.0;
    for &f in &fake {
        for &r in &real {
            wins += if f > r {
                1.0
            } else if f == r {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (fake.len() * real.len()) as f64
}

/// EER from a dense sweep: the threshold where |FPR - FNR| is smallest.
fn swept_eer(s: &[ScoredSample], steps: usize) -> f64 {
    let mut fake: Vec<f64> = s
        .iter()
        .filter(|x| x.label == Label::Fake)
        .map(|x| x.score)
        .collect();
    let mut real: Vec<f64> = s
        .iter()
        .filter(|x| x.label == Label::Real)
        .map(|x| x.score)
        .collect();
    fake.sort_by(f64::total_cmp);
    real.sort_by(f64::total_cmp);
    let lo = fake[0].min(real[0]);
    let hi = fake[fake.len() - 1].max(real[real.len() - 1]);
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let t = lo + (hi - lo) * k as f64 / steps as f64;
        let fpr = (real.len() - real.partition_point(|&v| v < t)) as f64 / real.len() as f64;
        let fnr = fake.partition_point(|&v| v < t) as f64 / fake.len() as f64;
        if (fpr - fnr).abs() < best.0 {
            best = ((fpr - fnr).abs(), (fpr + fnr) / 2.0);
        }
    }
    best.1
}

fn metrics_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut auc_err, mut eer_err) = (0.0f64, 0.0f64);
    let mut symmetric = true;
    for set in 0..20 {
        let shift = set as f64 * 0.1;
        let quantize = set % 3 == 0;
        let samples: Vec<ScoredSample> = (0..1000)
            .map(|i| {
                let label = if rng.random_bool(0.5) {
                    Label::Fake
                } else {
                    Label::Real
                };
                let mut score: f64 =
                    rng.random_range(0.0..1.0) + if label == Label::Fake { shift } else { 0.0 };
                if quantize {
                    score = (score * 20.0).round() / 20.0;
                }
                ScoredSample::new(score, label, format!("t{}", i % 3))
            })
            .collect();
        let roc = roc_curve(&samples).unwrap();
        let a = auc(&roc);
        auc_err = auc_err.max((a - pairwise_auc(&samples)).abs());
        let (e, _) = eer(&roc);
        if !quantize {
            eer_err = eer_err.max((e - swept_eer(&samples, 100_000)).abs());
        }
        let swapped: Vec<ScoredSample> = samples
            .iter()
            .map(|s| ScoredSample::new(-s.score, s.label.flipped(), s.source_tag.clone()))
            .collect();
        let roc2 = roc_curve(&swapped).unwrap();
        symmetric &= auc(&roc2) == a && eer(&roc2).0 == e;
        let flipped: Vec<ScoredSample> = samples
            .iter()
            .map(|s| ScoredSample::new(s.score, s.label.flipped(), s.source_tag.clone()))
            .collect();
        let roc3 = roc_curve(&flipped).unwrap();
        symmetric &= (auc(&roc3) - (1.0 - a)).abs() < 1e-12;
    }
    let el = t0.elapsed();
    outcome(
        auc_err < 1e-9 && eer_err < 5e-3 && symmetric && within(el, 30),
        format!(
            "auc vs pairwise {auc_err:.1e} (< 1e-9), eer vs 1e5-point sweep {eer_err:.1e} (< 5e-3), \
             symmetry exact: {symmetric}, {:.2}s",
            el.as_secs_f64()
        ),
    )
}

// --- pipeline experiments -----------------------------------------------------

fn prepare(dir: &Path, cfg: &RunConfig) -> FeatureIndex {
    let manifest = write_corpus(&cfg.synth, cfg.seed, dir.join("corpus")).unwrap();
    let kinds = [FeatureKind::Mfcc, FeatureKind::Lfcc];
    extract(&manifest, &cfg.features, &kinds, dir.join("features")).unwrap();
    FeatureIndex::load(dir.join("features").join(INDEX_FILE)).unwrap()
}

fn end_to_end() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.seed = E2E_SEED;
    cfg.synth = SynthSpec {
        n_per_class: 250,
        split: [0.8, 0.2, 0.0],
        artifacts: ArtifactMode::HighBand,
        ..SynthSpec::default()
    };
    cfg.model = BackboneConfig::toy(Variant::Resnet34Se, FusionMode::Aff);
    let index = prepare(dir.path(), &cfg);
    let n_train = index.split(Split::Train).len();
    let n_test = index.split(Split::Test).len();
    let det = Detector::from_trained(train(&index, &cfg).unwrap());
    let test = evaluate_split(&det, &index, Split::Test, 0.5, false)
        .unwrap()
        .report;
    let on_train = evaluate_split(&det, &index, Split::Train, 0.5, false)
        .unwrap()
        .report;
    let mlp = train_mlp(&index, &cfg.mlp, cfg.seed, Split::Test, 0.5)
        .unwrap()
        .report;
    let mlp_ok = [mlp.accuracy, mlp.auc, mlp.eer]
        .iter()
        .all(|v| v.is_finite());
    let el = t0.elapsed();
    outcome(
        n_train == 400
            && n_test == 100
            && test.accuracy >= 0.95
            && test.eer <= 0.10
            && on_train.accuracy >= test.accuracy
            && mlp_ok
            && within(el, 600),
        format!(
            "seed {E2E_SEED}, {n_train} train / {n_test} test clips, toy aff se-resnet34 30 epochs: \
             test acc {:.2}% (>= 95), eer {:.3} (<= 0.10), auc {:.3}; train acc {:.2}% (>= test); \
             mlp baseline acc {:.2}% auc {:.3} eer {:.3}; {:.0}s (<= 600)",
            100.0 * test.accuracy,
            test.eer,
            test.auc,
            100.0 * on_train.accuracy,
            100.0 * mlp.accuracy,
            mlp.auc,
            mlp.eer,
            el.as_secs_f64()
        ),
    )
}

fn ablation() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.seed = ABLATION_SEED;
    cfg.train.epochs = 15;
    cfg.synth = SynthSpec {
        n_per_class: 100,
        split: [0.7, 0.3, 0.0],
        artifacts: ArtifactMode::SplitBand,
        ..SynthSpec::default()
    };
    let index = prepare(dir.path(), &cfg);
    let mut aucs = Vec::new();
    for fusion in [FusionMode::MfccOnly, FusionMode::LfccOnly, FusionMode::Aff] {
        cfg.model = BackboneConfig::toy(Variant::Resnet34Se, fusion);
        let det = Detector::from_trained(train(&index, &cfg).unwrap());
        aucs.push(
            evaluate_split(&det, &index, Split::Test, 0.5, false)
                .unwrap()
                .report
                .auc,
        );
    }
    let best_single = aucs[0].max(aucs[1]);
    let el = t0.elapsed();
    outcome(
        aucs[2] >= best_single - 0.02,
        format!(
            "seed {ABLATION_SEED}, split-band artifacts, 140 train / 60 test clips, 15 epochs: \
             test auc mfcc {:.4}, lfcc {:.4}, aff {:.4} (>= {:.4}); {:.0}s",
            aucs[0],
            aucs[1],
            aucs[2],
            best_single - 0.02,
            el.as_secs_f64()
        ),
    )
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = RunConfig::default();
    cfg.seed = 3;
    cfg.model = BackboneConfig::toy(Variant::Resnet34Se, FusionMode::Aff);
    cfg.model.masking = true;
    cfg.train.epochs = 2;
    cfg.synth = SynthSpec {
        n_per_class: 8,
        ..SynthSpec::default()
    };
    let index = prepare(dir, &cfg);
    let mut trained = train(&index, &cfg).unwrap();
    trained.save(dir.join("run")).unwrap();
    let det = Detector::load(dir.join("run").join(CHECKPOINT_FILE)).unwrap();
    evaluate_split(&det, &index, Split::Test, 0.5, false)
        .unwrap()
        .save(dir.join("eval"))
        .unwrap();
    let mut files = Vec::new();
    for sub in ["run", "eval"] {
        let mut names: Vec<_> = std::fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        for n in names {
            let bytes = std::fs::read(dir.join(sub).join(&n)).unwrap();
            files.push((format!("{sub}/{n}"), bytes));
        }
    }
    files
}

fn reproducibility() -> Outcome {
    let t0 = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = run_pipeline(a.path());
    let fb = run_pipeline(b.path());
    let same = fa == fb;
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    outcome(
        same && names.contains(&"run/checkpoint.affc") && names.contains(&"eval/report.txt"),
        format!(
            "two seeded single-threaded runs, {} output files byte-identical: {same}; {:.0}s",
            fa.len(),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .unwrap();
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("dsp oracles", dsp_oracles),
        ("feature geometry", feature_geometry),
        ("masking", masking),
        ("gradient suite", gradient_suite),
        ("block identities", block_identities),
        ("metrics oracles", metrics_oracles),
        ("end-to-end synthetic", end_to_end),
        ("fusion vs single ablation", ablation),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
