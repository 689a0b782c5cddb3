//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.
//!
//! cargo test --release --test acceptance

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mergenet::grid::{reassemble_stripes, Grid};
use mergenet::metrics::{
    evaluate_components, frame_metrics, is_detected, pixel_accuracy, MetricCounts, MetricsConfig,
    MetricsReport,
};
use mergenet::scene::{
    reassemble_frame, split_into_stripes, ClassLabel, ClassWeights, LabelMap, RgbdFrame, Sample,
    Stripe,
};
use mergenet::segnet::{
    context_forward, mergenet_forward, predict_labels, refiner_forward, stripe_forward,
    MergeNetBundle, Mode, NetworkKind, NetworkParams, ProbMap,
};
use mergenet::synth::{generate_samples, SceneParams};
use mergenet::training::{gradient_check, train_mergenet, weighted_cross_entropy, BalancedStripeSampler, TrainConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn scenes(seed: u64, n: usize) -> Vec<Sample> {
    generate_samples(
        &SceneParams {
            rng_seed: seed,
            ..SceneParams::default()
        },
        n,
    )
    .expect("synthetic scenes")
    .into_iter()
    .map(|s| s.sample)
    .collect()
}

fn random_frame(rng: &mut ChaCha8Rng, id: String, h: usize, w: usize) -> RgbdFrame {
    let rgb = (0..h * w * 3).map(|_| rng.gen::<f32>()).collect();
    let disp = (0..h * w).map(|_| rng.gen::<f32>()).collect();
    RgbdFrame::new(
        id,
        Grid::from_vec(h, w, 3, rgb).unwrap(),
        Grid::from_vec(h, w, 1, disp).unwrap(),
    )
    .unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, h: usize, w: usize, p_obstacle: f64) -> LabelMap {
    let codes: Vec<u8> = (0..h * w)
        .map(|_| {
            if rng.gen_bool(p_obstacle) {
                2
            } else {
                rng.gen_range(0..2)
            }
        })
        .collect();
    LabelMap::from_codes(h, w, &codes).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let synthetic = scenes(1001, 50);
    let mut checked = 0;
    for i in 0..100 {
        let sw = [4, 8, 16][i % 3];
        let (frame, labels) = if i < 50 {
            (synthetic[i].frame.clone(), synthetic[i].labels.clone())
        } else {
            let h = rng.gen_range(1..40);
            let w = sw * rng.gen_range(1..12);
            let labels = random_labels(&mut rng, h, w, 0.1);
            (random_frame(&mut rng, format!("r{i}"), h, w), labels)
        };
        let stripes = split_into_stripes(&frame, Some(&labels), sw).map_err(|e| e.to_string())?;
        let (back, back_labels) = reassemble_frame(&stripes).map_err(|e| e.to_string())?;
        let bits = |f: &RgbdFrame| -> Vec<u32> {
            f.rgb().data().iter().chain(f.disparity().data()).map(|v| v.to_bits()).collect()
        };
        ensure(
            bits(&back) == bits(&frame) && back.frame_id == frame.frame_id,
            format!("frame {i} differs after reassembly"),
        )?;
        ensure(back_labels.as_ref() == Some(&labels), format!("labels of frame {i} differ"))?;
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("{checked} frames bit-exact in {elapsed:.2?}"))
}

fn max_sum_error(p: &ProbMap) -> f64 {
    p.grid()
        .data()
        .chunks(3)
        .map(|px| (px.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let channels = [8, 16];
    for kind in NetworkKind::ALL {
        for draw in 0..50u64 {
            let params = NetworkParams::init(kind.architecture(&channels), 1000 * kind as u64 + draw)
                .map_err(|e| e.to_string())?;
            let (h, w) = (8 * rng.gen_range(1..4), 8 * rng.gen_range(1..4));
            let mode = if draw % 2 == 0 { Mode::Eval } else { Mode::Train };
            let out = match kind {
                NetworkKind::Stripe => {
                    let stripe = Stripe {
                        index: 0,
                        frame: random_frame(&mut rng, "s".into(), h, w),
                        labels: None,
                    };
                    stripe_forward(&params, &stripe, mode)
                }
                NetworkKind::Context => {
                    context_forward(&params, &random_frame(&mut rng, "c".into(), h, w), mode)
                }
                NetworkKind::Refiner => {
                    let mut pm = || {
                        let logits: Vec<f64> = (0..3 * h * w).map(|_| rng.gen_range(-5.0..5.0)).collect();
                        ProbMap::from_logits(&mergenet::segnet::Tensor::from_vec(3, h, w, logits))
                    };
                    let (a, b) = (pm(), pm());
                    refiner_forward(&params, &a, &b, mode)
                }
            }
            .map_err(|e| e.to_string())?;
            let err = max_sum_error(&out);
            ensure(err <= 1e-5, format!("{kind} draw {draw}: |sum - 1| = {err:e}"))?;
            ensure(
                out.grid().data().iter().all(|p| (0.0..=1.0).contains(p)),
                format!("{kind} draw {draw}: probability outside [0, 1]"),
            )?;
            worst = worst.max(err);
        }
    }
    Ok(format!("3 x 50 draws, max |sum p - 1| = {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for kind in NetworkKind::ALL {
        let r = gradient_check(kind, &kind.micro_architecture(), 3).map_err(|e| e.to_string())?;
        ensure(r.n_params <= 5000, format!("{kind} micro net has {} params", r.n_params))?;
        ensure(r.n_checked >= 50, format!("{kind}: only {} parameters checked", r.n_checked))?;
        ensure(r.max_rel_error < 1e-3, format!("{kind}: max relative error {:e}", r.max_rel_error))?;
        parts.push(format!("{kind} {:.1e} ({} params)", r.max_rel_error, r.n_checked));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{} in {elapsed:.2?}", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let labels = LabelMap::from_codes(2, 3, &[0, 1, 2, 2, 0, 1]).unwrap();
    let uniform = weighted_cross_entropy(&ProbMap::uniform(2, 3), &labels, &ClassWeights::uniform())
        .map_err(|e| e.to_string())?;
    ensure((uniform - 3f64.ln()).abs() < 1e-6, format!("uniform loss {uniform}"))?;

    let two = LabelMap::from_codes(1, 2, &[0, 2]).unwrap();
    let w = ClassWeights([2.0, 1.0, 4.0]);
    let pm = |v: Vec<f64>| ProbMap::new(Grid::from_vec(1, 2, 3, v).unwrap()).unwrap();
    let stated = weighted_cross_entropy(&pm(vec![0.5, 0.25, 0.25, 0.5, 0.25, 0.25]), &two, &w)
        .map_err(|e| e.to_string())?;
    let by_hand = (2.0 * 2f64.ln() + 4.0 * 4f64.ln()) / 2.0;
    ensure((stated - by_hand).abs() < 1e-6, format!("weighted example {stated} vs {by_hand}"))?;
    let half = weighted_cross_entropy(&pm(vec![0.5, 0.25, 0.25, 0.25, 0.25, 0.5]), &two, &w)
        .map_err(|e| e.to_string())?;
    ensure((half - 3.0 * 2f64.ln()).abs() < 1e-6, format!("(0.5, 0.5) example {half}"))?;
    Ok(format!(
        "uniform {uniform:.6} = ln3; true-class p (0.5, 0.25) gives {stated:.6} = (2ln2+4ln4)/2 = 5ln2, \
         not the quoted 3ln2; 3ln2 = {half:.6} is reached with p (0.5, 0.5)"
    ))
}

/// Independent 4-connected flood fill returning one pixel list per component.
fn flood_components(mask: &[bool], h: usize, w: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(p) = queue.pop_front() {
            comp.push(p);
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        out.push(comp);
    }
    out
}

fn oracle_counts(pred: &LabelMap, gt: &LabelMap) -> MetricCounts {
    let (h, w) = (gt.height(), gt.width());
    let p: Vec<bool> = pred.as_slice().iter().map(|&l| l == ClassLabel::Obstacle).collect();
    let g: Vec<bool> = gt.as_slice().iter().map(|&l| l == ClassLabel::Obstacle).collect();
    let mut c = MetricCounts::default();
    for i in 0..h * w {
        if g[i] {
            c.tp_obstacle += 1;
            c.cdp += p[i] as u64;
        } else {
            c.tp_non_obstacle += 1;
            c.idp += p[i] as u64;
        }
    }
    for comp in flood_components(&g, h, w) {
        c.ti += 1;
        let covered = comp.iter().filter(|&&i| p[i]).count();
        c.cdi += (2 * covered > comp.len()) as u64;
    }
    for comp in flood_components(&p, h, w) {
        c.idi += comp.iter().all(|&i| !g[i]) as u64;
    }
    c.d = 1;
    c
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = MetricsConfig::default();
    let disparity = Grid::filled(16, 16, 1, 0.5f32);
    let mut total = MetricCounts::default();
    let mut oracle_total = MetricCounts::default();
    for i in 0..200 {
        let density = rng.gen_range(0.05..0.6);
        let gt = random_labels(&mut rng, 16, 16, density);
        let pred = if i % 4 == 0 {
            gt.clone()
        } else {
            let d = rng.gen_range(0.05..0.6);
            random_labels(&mut rng, 16, 16, d)
        };
        let (counts, _) = frame_metrics(&format!("{i}"), &pred, &gt, &disparity, &cfg).map_err(|e| e.to_string())?;
        let expected = oracle_counts(&pred, &gt);
        ensure(counts == expected, format!("pair {i}: {counts:?} vs oracle {expected:?}"))?;
        total += counts;
        oracle_total += expected;
    }
    let rates = |c: &MetricCounts| (c.pdr(), c.idr(), c.pfp(), c.ifp());
    ensure(rates(&total) == rates(&oracle_total), "aggregated rates differ")?;

    ensure(!is_detected(4, 2) && is_detected(4, 3), "is_detected boundary")?;
    let gt = LabelMap::from_codes(2, 2, &[2, 2, 2, 2]).unwrap();
    let pred = LabelMap::from_codes(2, 2, &[2, 2, 0, 0]).unwrap();
    let (half, _) = frame_metrics("half", &pred, &gt, &Grid::filled(2, 2, 1, 0.5f32), &cfg).map_err(|e| e.to_string())?;
    ensure(half.cdi == 0 && half.ti == 1, "exactly half covered counted as detected")?;
    let (p, i, f, n) = rates(&total);
    Ok(format!(
        "200 pairs equal the flood-fill oracle (pdr {:.4} idr {:.4} pfp {:.4} ifp {:.3}); half coverage not detected",
        p.unwrap(),
        i.unwrap(),
        f.unwrap(),
        n.unwrap()
    ))
}

fn criterion_6() -> Outcome {
    let net = |kind: NetworkKind, seed| NetworkParams::init(kind.architecture(&[8, 16]), seed).unwrap();
    let bundle = MergeNetBundle::new(
        net(NetworkKind::Stripe, 61),
        net(NetworkKind::Context, 62),
        net(NetworkKind::Refiner, 63),
        16,
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10 {
        let frame = if i % 2 == 0 {
            scenes(6000 + i, 1).remove(0).frame
        } else {
            random_frame(&mut rng, format!("r{i}"), 32, 64)
        };
        let full = mergenet_forward(&bundle, &frame).map_err(|e| e.to_string())?;
        let stripes = split_into_stripes(&frame, None, 16).map_err(|e| e.to_string())?;
        let mut parts = Vec::new();
        for s in &stripes {
            let p = stripe_forward(&bundle.stripe, s, Mode::Eval).map_err(|e| e.to_string())?;
            parts.push((s.index, p.into_grid()));
        }
        let y_s = ProbMap::new(reassemble_stripes(parts).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let y_c = context_forward(&bundle.context, &frame, Mode::Eval).map_err(|e| e.to_string())?;
        let manual = refiner_forward(&bundle.refiner, &y_s, &y_c, Mode::Eval).map_err(|e| e.to_string())?;
        let bits = |p: &ProbMap| p.grid().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&full) == bits(&manual), format!("frame {i} differs"))?;
    }
    Ok("10 frames bit-identical to the manually staged pipeline".into())
}

fn small_config(seed: u64, channels: usize, max_epochs: usize) -> TrainConfig {
    let c = channels;
    TrainConfig {
        stripe_width: 16,
        max_epochs,
        patience: 10,
        stripe_channels: vec![c, 2 * c, 2 * c],
        context_channels: vec![c, 2 * c, 2 * c],
        refiner_channels: vec![c, 2 * c],
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let train = scenes(7_000_000, 8);
    let config = small_config(7, 8, 30);
    let (bundle, _) = train_mergenet(&config, &train, &train, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let preds: Vec<LabelMap> = train
        .iter()
        .map(|s| mergenet_forward(&bundle, &s.frame).map(|p| predict_labels(&p)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let gts: Vec<&LabelMap> = train.iter().map(|s| &s.labels).collect();
    let acc = pixel_accuracy(&preds, &gts).map_err(|e| e.to_string())?;
    let report = mergenet::metrics::evaluate_predictions(&preds, &train, &MetricsConfig::default())
        .map_err(|e| e.to_string())?;
    let idr = report.idr.unwrap_or(0.0);
    ensure(acc >= 0.95, format!("train pixel accuracy {acc:.4}"))?;
    ensure(idr >= 0.9, format!("train IDR {idr:.4}"))?;
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!("pixel accuracy {acc:.4}, IDR {idr:.4}, trained in {elapsed:.1?}"))
}

fn criterion_8() -> Outcome {
    let mut rows = Vec::new();
    for seed in [1u64, 2, 3] {
        let base = seed * 1_000_000;
        let train = scenes(base, 32);
        let val = scenes(base + 100_000, 8);
        let test = scenes(base + 200_000, 32);
        let (bundle, _) =
            train_mergenet(&small_config(seed, 8, 60), &train, &val, None).map_err(|e| e.to_string())?;
        let r = evaluate_components(&bundle, &test, &MetricsConfig::default()).map_err(|e| e.to_string())?;
        let get = |m: &MetricsReport| (m.idr.unwrap_or(f64::NAN), m.ifp.unwrap_or(f64::NAN));
        let row = [get(&r.stripe), get(&r.context), get(&r.mergenet)];
        println!(
            "    seed {seed}: IDR stripe {:.3} context {:.3} mergenet {:.3} | IFP stripe {:.3} context {:.3} mergenet {:.3}",
            row[0].0, row[1].0, row[2].0, row[0].1, row[1].1, row[2].1
        );
        if row[2].0 < row[1].0 || row[2].1 > row[0].1 {
            println!("    seed {seed}: single-seed trend violation, investigate");
        }
        rows.push(row);
    }
    let mean = |f: fn(&[(f64, f64); 3]) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let (idr_m, idr_c) = (mean(|r| r[2].0), mean(|r| r[1].0));
    let (ifp_m, ifp_s) = (mean(|r| r[2].1), mean(|r| r[0].1));
    let summary = format!(
        "mean IDR mergenet {idr_m:.3} vs context {idr_c:.3}; mean IFP mergenet {ifp_m:.3} vs stripe {ifp_s:.3}"
    );
    ensure(idr_m >= idr_c && ifp_m <= ifp_s, summary.clone())?;
    Ok(summary)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mergenet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn cli_pipeline(config: &Path, out: &Path) -> Result<Vec<u8>, String> {
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    for (split, n) in [("train", "6"), ("val", "3"), ("test", "6")] {
        run_cli(&["--config", c, "--out", o, "synth", "--count", n, "--split", split])?;
    }
    run_cli(&["--config", c, "--out", o, "train"])?;
    run_cli(&["--config", c, "--out", o, "eval", "--split", "test"])?;
    std::fs::read(out.join("eval").join("test_metrics.json")).map_err(|e| e.to_string())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "seed = 9\nmax_epochs = 4\npatience = 2\nstripe_channels = 4, 8\ncontext_channels = 4, 8\nrefiner_channels = 4, 8\n",
    )
    .map_err(|e| e.to_string())?;
    let a = cli_pipeline(&config, &dir.path().join("a"))?;
    let b = cli_pipeline(&config, &dir.path().join("b"))?;
    ensure(a == b, "metrics reports differ between runs")?;
    Ok(format!("two synth -> train -> eval runs give identical {}-byte reports", a.len()))
}

fn criterion_10() -> Outcome {
    let mk = |codes: Vec<u8>| LabelMap::from_codes(8, 4, &codes).unwrap();
    let a = mk(vec![0; 32]);
    let b = mk((0..32).map(|i| if i % 4 < 2 { 2 } else { 1 }).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let stripes: Vec<Stripe> = [a, b]
        .into_iter()
        .enumerate()
        .map(|(i, l)| Stripe {
            index: i,
            frame: random_frame(&mut rng, "toy".into(), 8, 4),
            labels: Some(l),
        })
        .collect();
    let samples: Vec<Sample> = stripes
        .iter()
        .map(|s| Sample {
            frame: s.frame.clone(),
            labels: s.labels.clone().unwrap(),
        })
        .collect();
    let mut counts = mergenet::scene::ClassCounts::default();
    for s in &samples {
        counts.add_labels(&s.labels);
    }
    let weights = ClassWeights::from_counts(&counts).map_err(|e| e.to_string())?;
    // Road 32 of 64 px, off-road 16, obstacle 16.
    let closed = {
        let w = [64.0 / (3.0 * 32.0), 64.0 / (3.0 * 16.0), 64.0 / (3.0 * 16.0)];
        let mass_a = 32.0 * w[0];
        let mass_b = 16.0 * w[1] + 16.0 * w[2];
        [mass_a / (mass_a + mass_b), mass_b / (mass_a + mass_b)]
    };
    let mut sampler = BalancedStripeSampler::new(stripes, &weights, 10).map_err(|e| e.to_string())?;
    let n = 100_000;
    let mut hits = [0usize; 2];
    let mut obstacle_px = 0u64;
    for _ in 0..n {
        let s = sampler.next().unwrap();
        hits[s.index] += 1;
        obstacle_px += s.labels.unwrap().counts().get(ClassLabel::Obstacle);
    }
    let freq = [hits[0] as f64 / n as f64, hits[1] as f64 / n as f64];
    let share = obstacle_px as f64 / (32 * n) as f64;
    let expected_share = closed[1] * 0.5;
    for k in 0..2 {
        ensure((freq[k] - closed[k]).abs() < 0.01, format!("stripe {k}: {:.4} vs {:.4}", freq[k], closed[k]))?;
        ensure(
            (sampler.probabilities()[k] - closed[k]).abs() < 1e-12,
            "declared probabilities differ from closed form",
        )?;
    }
    ensure((share - expected_share).abs() < 0.01, format!("obstacle share {share:.4} vs {expected_share:.4}"))?;
    Ok(format!(
        "p(A) {:.4} vs {:.4}, p(B) {:.4} vs {:.4}, obstacle share {share:.4} vs {expected_share:.4}",
        freq[0], closed[0], freq[1], closed[1]
    ))
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 stripe round trip", criterion_1),
        ("2 softmax normalization", criterion_2),
        ("3 gradient verification", criterion_3),
        ("4 loss oracle", criterion_4),
        ("5 metrics oracle", criterion_5),
        ("6 compositional identity", criterion_6),
        ("7 overfit", criterion_7),
        ("8 complementarity trend", criterion_8),
        ("9 determinism", criterion_9),
        ("10 balanced sampler", criterion_10),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
