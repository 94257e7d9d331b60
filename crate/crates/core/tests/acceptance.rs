//! Acceptance criteria for the whole pipeline. Runs as a plain binary so
//! every criterion prints a PASS or FAIL line, then exits non-zero if any
//! failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use cpd_core::dataset::generate_split;
use cpd_core::eval::{compute_metrics, decisions, flip_count, smooth_probabilities, Metrics};
use cpd_core::features::{acf, acf_matrix, acf_with_zero_lag, AcfParams, AcfSample, Provenance};
use cpd_core::model::*;
use cpd_core::sim::{synth_csi, BankSettings, Class, ScenarioConfig, Split};
use cpd_core::train::*;
use cpd_core::Error;
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn fft_correlation() -> Verdict {
    let mut g = rng(101);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let l = g.random_range(1..=64);
        let d = g.random_range(1..=8);
        let scale = 10f64.powf(g.random_range(-3.0..3.0));
        let q = random_matrix(&mut g, l, d, scale);
        let k = random_matrix(&mut g, l, d, scale);
        let fast = cross_correlation_fft(q.view(), k.view());
        let slow = brute_force_correlation(&q, &k);
        let peak = slow.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
        worst = worst.max(err);
        ensure(err < 1e-9, || {
            format!("case {case} (l={l}, d={d}): relative error {err:e}")
        })?;
    }
    Ok(format!("200 cases, l <= 64, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

fn attention_equivalence() -> Verdict {
    let config = tiny_config(3);
    ensure(config.top_k() == 3 && config.num_heads == 2, || {
        "toy attention is not h=2, k=3".into()
    })?;
    let mut g = rng(102);
    let mut worst = 0.0f64;
    for draw in 0..50 {
        let params = ModelParams::init(&config, 1000 + draw).unwrap();
        let layer = &params.encoder[0];
        let x = random_matrix(&mut g, 16, 8, 1.0);
        let (fast, _) = autocorrelation_attention(x.view(), layer, &config);
        let slow = brute_force_attention(&x, layer, &config);
        let err = max_relative_error(fast.as_slice().unwrap(), slow.as_slice().unwrap());
        worst = worst.max(err);
        ensure(err < 1e-6, || format!("draw {draw}: relative error {err:e}"))?;
    }
    Ok(format!("50 draws at l=16, N_s=8, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

const FD_STEP: f64 = 1e-4;

fn matrix_fd(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let x = x.as_standard_layout().into_owned();
    let flat = finite_difference(x.as_slice().unwrap(), FD_STEP, |v| {
        f(&Array2::from_shape_vec(x.dim(), v.to_vec()).unwrap())
    });
    Array2::from_shape_vec(x.dim(), flat).unwrap()
}

fn rel(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    max_relative_error(
        analytic.as_standard_layout().as_slice().unwrap(),
        numeric.as_slice().unwrap(),
    )
}

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(Axis(0))
}

fn weighted(a: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (a * w).sum()
}

/// Hidden head biases of +-0.2 keep pre-activations away from the ReLU kink.
fn off_kink(mut params: ModelParams, seed: u64) -> ModelParams {
    let mut g = rng(seed);
    let hidden = params.head.len() - 1;
    for d in &mut params.head[..hidden] {
        d.b.mapv_inplace(|_| if g.random::<bool>() { 0.2 } else { -0.2 });
    }
    params
}

fn attention_audit(config: &ModelConfig, g: &mut impl Rng) -> f64 {
    let params = ModelParams::init(config, 7).unwrap();
    let layer = &params.encoder[0];
    let x = random_matrix(g, 16, 8, 1.0);
    let up = random_matrix(g, 16, 8, 1.0);
    let loss =
        |x: &Array2<f64>, l: &EncoderLayerParams| weighted(&autocorrelation_attention(x.view(), l, config).0, &up);
    let (_, cache) = autocorrelation_attention(x.view(), layer, config);
    let a = attention_backward(up.view(), &cache, layer, config);
    let mut worst = rel(&a.dx, &matrix_fd(&x, |x| loss(x, layer)));
    type Pick = fn(&mut EncoderLayerParams) -> &mut Array2<f64>;
    let picks: [(Pick, &Array2<f64>); 4] = [
        (|l| &mut l.w_q, &a.w_q),
        (|l| &mut l.w_k, &a.w_k),
        (|l| &mut l.w_v, &a.w_v),
        (|l| &mut l.w_out, &a.w_out),
    ];
    for (pick, analytic) in picks {
        let w0 = pick(&mut layer.clone()).clone();
        let numeric = matrix_fd(&w0, |w| {
            let mut l = layer.clone();
            *pick(&mut l) = w.clone();
            loss(&x, &l)
        });
        worst = worst.max(rel(analytic, &numeric));
    }
    worst
}

fn ffn_audit(config: &ModelConfig, g: &mut impl Rng) -> f64 {
    let mut params = ModelParams::init(config, 8).unwrap();
    params.encoder[0].ffn1_b = Array1::from_shape_fn(config.ffn_hidden, |_| g.random_range(-0.5..0.5));
    params.encoder[0].ffn2_b = Array1::from_shape_fn(8, |_| g.random_range(-0.5..0.5));
    let layer = &params.encoder[0];
    let x = random_matrix(g, 16, 8, 1.0);
    let up = random_matrix(g, 16, 8, 1.0);
    let loss = |x: &Array2<f64>, l: &EncoderLayerParams| weighted(&feed_forward(x.view(), l).0, &up);
    let (_, cache) = feed_forward(x.view(), layer);
    let f = feed_forward_backward(up.view(), &cache, layer);
    let mut worst = rel(&f.dx, &matrix_fd(&x, |x| loss(x, layer)));
    let w1 = matrix_fd(&layer.ffn1_w, |w| {
        loss(
            &x,
            &EncoderLayerParams {
                ffn1_w: w.clone(),
                ..layer.clone()
            },
        )
    });
    let w2 = matrix_fd(&layer.ffn2_w, |w| {
        loss(
            &x,
            &EncoderLayerParams {
                ffn2_w: w.clone(),
                ..layer.clone()
            },
        )
    });
    let b1 = matrix_fd(&row(&layer.ffn1_b), |b| {
        loss(
            &x,
            &EncoderLayerParams {
                ffn1_b: b.row(0).to_owned(),
                ..layer.clone()
            },
        )
    });
    let b2 = matrix_fd(&row(&layer.ffn2_b), |b| {
        loss(
            &x,
            &EncoderLayerParams {
                ffn2_b: b.row(0).to_owned(),
                ..layer.clone()
            },
        )
    });
    for (a, n) in [
        (&f.ffn1_w, &w1),
        (&f.ffn2_w, &w2),
        (&row(&f.ffn1_b), &b1),
        (&row(&f.ffn2_b), &b2),
    ] {
        worst = worst.max(rel(a, n));
    }
    worst
}

fn decomposition_audit(g: &mut impl Rng) -> f64 {
    let mut worst = 0.0f64;
    for (l, kernel) in [(16, 5), (20, 7), (9, 9), (50, 25)] {
        let x = random_matrix(g, l, 3, 1.0);
        let up = random_matrix(g, l, 3, 1.0);
        let numeric = matrix_fd(&x, |x| weighted(&series_decompose(x.view(), kernel).0, &up));
        worst = worst.max(rel(&seasonal_adjoint(up.view(), kernel), &numeric));
    }
    worst
}

fn head_audit(config: &ModelConfig, g: &mut impl Rng) -> f64 {
    let params = off_kink(ModelParams::init(config, 9).unwrap(), 10);
    let features = Array1::from_shape_fn(8, |_| g.random_range(-1.0..1.0));
    let up = [0.3, -1.2, 0.7];
    let loss = |f: &Array1<f64>, head: &[DenseParams]| {
        mlp_head(f.view(), head)
            .iter()
            .zip(&up)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let (_, grads, dfeatures) = mlp_head_backward(features.view(), &params.head, &up);
    let mut worst = rel(
        &row(&dfeatures),
        &matrix_fd(&row(&features), |f| loss(&f.row(0).to_owned(), &params.head)),
    );
    for i in 0..params.head.len() {
        let nw = matrix_fd(&params.head[i].w, |w| {
            let mut h = params.head.clone();
            h[i].w = w.clone();
            loss(&features, &h)
        });
        let nb = matrix_fd(&row(&params.head[i].b), |b| {
            let mut h = params.head.clone();
            h[i].b = b.row(0).to_owned();
            loss(&features, &h)
        });
        worst = worst.max(rel(&grads[i].w, &nw)).max(rel(&row(&grads[i].b), &nb));
    }
    worst
}

fn end_to_end_audit(g: &mut impl Rng) -> f64 {
    let mut worst = 0.0f64;
    for (classes, kind) in [(3, LossKind::CrossEntropy), (2, LossKind::Bce)] {
        let config = tiny_config(classes);
        let params = off_kink(ModelParams::init(&config, 11).unwrap(), 12);
        let data: Vec<(Array2<f64>, usize)> = (0..2)
            .map(|_| (random_matrix(g, 16, 8, 1.0), g.random_range(0..classes)))
            .collect();
        let batch: Vec<_> = data.iter().map(|(x, y)| (x.view(), *y)).collect();
        let spec = LossSpec::mean(kind);
        let analytic = model_gradients(&batch, &params, &config, &spec)
            .unwrap()
            .grads
            .to_flat();
        let numeric = finite_difference(&params.to_flat(), FD_STEP, |flat| {
            let mut p = params.clone();
            p.set_flat(flat).unwrap();
            model_gradients(&batch, &p, &config, &spec).unwrap().loss
        });
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

fn gradient_audit() -> Verdict {
    let config = tiny_config(3);
    let mut g = rng(103);
    let results = [
        ("attention", attention_audit(&config, &mut g)),
        ("feed-forward", ffn_audit(&config, &mut g)),
        ("decomposition", decomposition_audit(&mut g)),
        ("head", head_audit(&config, &mut g)),
        ("end-to-end", end_to_end_audit(&mut g)),
    ];
    let summary = results
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    for (name, err) in results {
        ensure(err < 1e-4, || format!("{name} relative error {err:e} ({summary})"))?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------- 4

fn first_peak(rho: &[f64]) -> Option<usize> {
    // rho[i] is the lag i + 1
    let neg = rho.iter().position(|v| *v < 0.0)?;
    (neg + 1..rho.len() - 1)
        .find(|&i| rho[i] >= rho[i - 1] && rho[i] >= rho[i + 1])
        .map(|i| i + 1)
}

fn acf_invariants() -> Verdict {
    let mut g = rng(104);
    let mut worst_scale = 0.0f64;
    for case in 0..200 {
        let n = g.random_range(60..400);
        let series: Vec<f64> = (0..n).map(|_| g.random_range(0.0..5.0)).collect();
        let full = acf_with_zero_lag(&series, 50).unwrap();
        ensure((full[0] - 1.0).abs() <= 1e-12, || {
            format!("case {case}: rho(0) = {}", full[0])
        })?;
        ensure(full.iter().all(|r| r.abs() <= 1.0 + 1e-6), || {
            format!("case {case}: |rho| > 1")
        })?;
        let c = 10f64.powf(g.random_range(-3.0..3.0));
        let scaled: Vec<f64> = series.iter().map(|v| v * c).collect();
        let a = acf(&series, 50).unwrap();
        let b = acf(&scaled, 50).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst_scale = worst_scale.max(diff);
        ensure(diff < 1e-9, || {
            format!("case {case}: scale {c} changes rho by {diff:e}")
        })?;
    }
    for class in Class::ALL {
        let mut scenario = ScenarioConfig::new(class, 5);
        scenario.num_subcarriers_per_link = 8;
        let rec = synth_csi(&scenario).unwrap();
        let m = acf_matrix(
            &rec,
            0.0,
            &AcfParams {
                lags: 150,
                ..AcfParams::default()
            },
        )
        .unwrap();
        ensure(m.matrix.iter().all(|r| r.abs() <= 1.0 + 1e-6), || {
            format!("{class} recording: |rho| > 1")
        })?;
    }
    ensure(matches!(acf(&[2.5; 100], 10), Err(Error::DegenerateSeries)), || {
        "constant input accepted".into()
    })?;

    let mut worst_period = 0.0f64;
    for case in 0..200 {
        let period = g.random_range(4.0..40.0);
        let phase = g.random_range(0.0..std::f64::consts::TAU);
        let series: Vec<f64> = (0..300)
            .map(|t| (std::f64::consts::TAU * t as f64 / period + phase).sin())
            .collect();
        let rho = acf(&series, 60).unwrap();
        let peak = first_peak(&rho).ok_or_else(|| format!("case {case}: no peak for period {period}"))?;
        let miss = (peak as f64 - period).abs();
        worst_period = worst_period.max(miss);
        ensure(miss <= 1.0, || {
            format!("case {case}: period {period:.2} recovered as {peak}")
        })?;
    }
    Ok(format!(
        "200 random series, 3 recordings, scale drift {worst_scale:.1e}, worst period miss {worst_period:.2} samples"
    ))
}

// ---------------------------------------------------------------- 5

fn decomposition_and_roll() -> Verdict {
    let mut g = rng(105);
    for case in 0..300 {
        let l = g.random_range(1..=64);
        let n = g.random_range(1..=8);
        let kernel = 2 * g.random_range(0..=(l - 1) / 2) + 1;
        let scale = 10f64.powf(g.random_range(-6.0..6.0));
        let x = random_matrix(&mut g, l, n, scale);
        let (seasonal, trend) = series_decompose(x.view(), kernel);
        let exact = (&seasonal + &trend)
            .iter()
            .zip(&x)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(exact, || {
            format!("case {case} (l={l}, kernel={kernel}): seasonal + trend != input")
        })?;

        let tau = g.random_range(0..l);
        let rolled = roll(x.view(), tau);
        let back = roll(rolled.view(), (l - tau) % l);
        ensure(back == x, || format!("case {case}: roll by {tau} is not undone"))?;
        for t in 0..l {
            ensure(rolled.row(t) == x.row((t + tau) % l), || {
                format!("case {case}: row {t} misplaced")
            })?;
        }
    }
    Ok("300 random matrices, bitwise reconstruction and exact inverse roll".into())
}

// ---------------------------------------------------------------- 6

fn random_sample(g: &mut impl Rng, label: Class, links: usize, per_link: usize, lags: usize) -> AcfSample {
    let mut s = AcfSample {
        matrix: random_matrix(g, lags, links * per_link, 1.0),
        lag_step_s: 1.0 / 30.0,
        label,
        num_links: links,
        per_link_motion_stat: Vec::new(),
        window_start_s: g.random_range(0..100) as f64,
        source: format!("rec-{}", g.random::<u32>()),
        dead_columns: Vec::new(),
        provenance: Provenance::Original,
    };
    s.recompute_link_stats();
    s
}

fn blocks(s: &AcfSample) -> Vec<Array2<f64>> {
    let k = s.subcarriers_per_link();
    (0..s.num_links)
        .map(|l| s.matrix.slice(s![.., l * k..(l + 1) * k]).to_owned())
        .collect()
}

fn bits(a: &Array2<f64>) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

fn augmentation_audit() -> Verdict {
    let mut g = rng(106);
    for case in 0..1000 {
        let links = g.random_range(1..=6);
        let per = g.random_range(1..=4);
        let s = random_sample(&mut g, Class::ALL[case % 3], links, per, 8);
        let p = augment_link_permutation(&s, &mut g);
        ensure((p.label, p.matrix.dim()) == (s.label, s.matrix.dim()), || {
            format!("permutation case {case}: label or shape changed")
        })?;
        let mut before: Vec<Vec<u64>> = blocks(&s).iter().map(bits).collect();
        let mut after: Vec<Vec<u64>> = blocks(&p).iter().map(bits).collect();
        before.sort();
        after.sort();
        ensure(before == after, || {
            format!("permutation case {case}: link-block multiset changed")
        })?;
    }
    for case in 0..1000 {
        let links = g.random_range(1..=6);
        let per = g.random_range(1..=4);
        let label = Class::ALL[case % 3];
        let a = random_sample(&mut g, label, links, per, 8);
        let b = random_sample(&mut g, label, links, per, 8);
        let m = augment_link_mix(&a, &b).map_err(|e| format!("mix case {case}: {e}"))?;
        ensure((m.label, m.matrix.dim()) == (label, a.matrix.dim()), || {
            format!("mix case {case}: label or shape changed")
        })?;
        let Provenance::Mixed { parents, .. } = &m.provenance else {
            return Err(format!("mix case {case}: parents not recorded"));
        };
        ensure(parents == &[a.id(), b.id()], || {
            format!("mix case {case}: wrong parents")
        })?;
        let (ba, bb) = (blocks(&a), blocks(&b));
        for (l, out) in blocks(&m).iter().enumerate() {
            let from_a = bits(out) == bits(&ba[l]);
            let from_b = bits(out) == bits(&bb[l]);
            ensure(from_a != from_b, || {
                format!("mix case {case}: block {l} has no single parent")
            })?;
        }
    }
    Ok("1000 permutations and 1000 mixes".into())
}

// ---------------------------------------------------------------- 7

fn simplex(g: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..3).map(|_| -(1.0 - g.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn smoothing_property() -> Verdict {
    let mut g = rng(107);
    let (mut raw_total, mut smooth_total) = (0, 0);
    for case in 0..500 {
        let len = g.random_range(1..150);
        let seq: Vec<Vec<f64>> = if case % 2 == 0 {
            (0..len).map(|_| simplex(&mut g)).collect()
        } else {
            let mut cur = simplex(&mut g);
            (0..len)
                .map(|_| {
                    if g.random::<f64>() < 0.1 {
                        cur = simplex(&mut g);
                    }
                    cur.clone()
                })
                .collect()
        };
        let raw = flip_count(&decisions(&seq));
        for window in [1, 5, 15] {
            let flips = flip_count(&decisions(&smooth_probabilities(&seq, window).unwrap()));
            ensure(flips <= raw, || {
                format!("case {case}, window {window}: {flips} flips > {raw}")
            })?;
            raw_total += raw;
            smooth_total += flips;
        }
    }
    Ok(format!(
        "500 sequences x windows 1/5/15, {smooth_total} smoothed vs {raw_total} raw flips"
    ))
}

// ---------------------------------------------------------------- 8-10

const SEEDS: [u64; 3] = [1, 2, 3];
const EPOCHS: usize = 20;
const LAGS: usize = 50;

struct Data {
    pretrain: Vec<AcfSample>,
    train: Vec<AcfSample>,
    val: Vec<AcfSample>,
    test: Vec<AcfSample>,
    elapsed: Duration,
}

fn toy_data(seed: u64) -> Data {
    let start = Instant::now();
    let settings = BankSettings {
        num_links: 4,
        num_subcarriers_per_link: 8,
        ..BankSettings::default()
    };
    let acf = AcfParams {
        lags: LAGS,
        ..AcfParams::default()
    };
    let split = |s, n| generate_split(s, n, seed, &settings, &acf).unwrap();
    Data {
        pretrain: split(Split::Pretrain, 300),
        train: split(Split::Train, 300),
        val: split(Split::Val, 60),
        test: split(Split::Test, 100),
        elapsed: start.elapsed(),
    }
}

/// Optional stage 1, stage 2, then test metrics. Returns the metrics and the
/// wall time of training plus evaluation.
fn two_stage(data: &Data, seed: u64, pretrain: bool, decomposition: bool) -> (Metrics, Duration) {
    let start = Instant::now();
    let mut model = ModelConfig::new(LAGS, 32, 2);
    model.use_decomposition = decomposition;
    let stage1_config = TrainConfig {
        epochs: EPOCHS,
        seed,
        ..TrainConfig::default()
    };
    let stage1 = pretrain.then(|| {
        train_stage1(&data.pretrain, &data.val, &model, &stage1_config, None)
            .unwrap()
            .best
    });
    model.num_classes = 3;
    let stage2_config = TrainConfig {
        stage: 2,
        ..stage1_config
    };
    let outcome = train_stage2(&data.train, &data.val, stage1.as_ref(), &model, &stage2_config, None).unwrap();
    let e = evaluate(&data.test, &outcome.best.params, &model, LossKind::CrossEntropy).unwrap();
    let predicted: Vec<Class> = e.predictions.iter().map(|&i| Class::ALL[i]).collect();
    let labels: Vec<Class> = data.test.iter().map(|s| s.label).collect();
    (compute_metrics(&predicted, &labels).unwrap(), start.elapsed())
}

struct SeedRuns {
    seed: u64,
    base: Metrics,
    base_time: Duration,
    data_time: Duration,
    test_samples: usize,
    train_samples: usize,
    no_pretrain: Metrics,
    no_decomposition: Metrics,
}

fn seed_runs(seed: u64) -> SeedRuns {
    let data = toy_data(seed);
    let (base, base_time) = two_stage(&data, seed, true, true);
    let (no_pretrain, _) = two_stage(&data, seed, false, true);
    let (no_decomposition, _) = two_stage(&data, seed, true, false);
    eprintln!(
        "  seed {seed}: base {:.3}, no stage 1 {:.3}, no decomposition {:.3}",
        base.accuracy, no_pretrain.accuracy, no_decomposition.accuracy
    );
    SeedRuns {
        seed,
        base,
        base_time,
        data_time: data.elapsed,
        test_samples: data.test.len(),
        train_samples: data.train.len(),
        no_pretrain,
        no_decomposition,
    }
}

fn end_to_end(runs: &[SeedRuns]) -> Verdict {
    let r = &runs[0];
    let total = r.data_time + r.base_time;
    let detail = format!(
        "seed {}: {} train / {} test windows, accuracy {:.3}, child FPR {:.3}, {:.0} s",
        r.seed,
        r.train_samples,
        r.test_samples,
        r.base.accuracy,
        r.base.fpr,
        total.as_secs_f64()
    );
    ensure(r.train_samples >= 300 && r.test_samples >= 100, || {
        format!("too few samples ({detail})")
    })?;
    ensure(r.base.accuracy >= 0.90, || format!("accuracy below 0.90 ({detail})"))?;
    ensure(r.base.fpr <= 0.10, || format!("child FPR above 0.10 ({detail})"))?;
    ensure(total <= Duration::from_secs(600), || {
        format!("over 10 minutes ({detail})")
    })?;
    Ok(detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn pretraining_ablation(runs: &[SeedRuns]) -> Verdict {
    let with = median(runs.iter().map(|r| r.base.accuracy).collect());
    let without = median(runs.iter().map(|r| r.no_pretrain.accuracy).collect());
    let detail = format!("median accuracy {with:.3} with stage 1, {without:.3} without");
    ensure(with >= without, || detail.clone())?;
    Ok(detail)
}

fn decomposition_ablation(runs: &[SeedRuns]) -> Verdict {
    let n = runs.len() as f64;
    let base = runs.iter().map(|r| r.base.accuracy).sum::<f64>() / n;
    let without = runs.iter().map(|r| r.no_decomposition.accuracy).sum::<f64>() / n;
    let detail = format!("mean accuracy {base:.3} with decomposition, {without:.3} without");
    ensure(without <= base + 0.01, || detail.clone())?;
    Ok(detail)
}

// ----------------------------------------------------------------

fn check(id: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match verdict {
        Ok(detail) => {
            println!("criterion {id:>2} PASS  {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("criterion {id:>2} FAIL  {name}: {detail}");
            false
        }
    }
}

fn main() {
    // libtest flags such as --nocapture or a filter are accepted and ignored
    let mut ok = true;
    ok &= check(1, "FFT cross-correlation matches direct summation", fft_correlation);
    ok &= check(2, "attention block matches loop implementation", attention_equivalence);
    ok &= check(3, "gradients match central differences", gradient_audit);
    ok &= check(4, "ACF invariants", acf_invariants);
    ok &= check(5, "decomposition and roll are exact", decomposition_and_roll);
    ok &= check(6, "augmentation audit", augmentation_audit);
    ok &= check(7, "smoothing never adds decision flips", smoothing_property);

    let runs: Vec<SeedRuns> = SEEDS.iter().map(|&s| seed_runs(s)).collect();
    ok &= check(8, "synthetic end-to-end accuracy and budget", || end_to_end(&runs));
    ok &= check(9, "stage-1 pretraining does not hurt", || pretraining_ablation(&runs));
    ok &= check(10, "removing decomposition does not help", || {
        decomposition_ablation(&runs)
    });
    if !ok {
        std::process::exit(1);
    }
}
