use std::collections::VecDeque;

use proptest::prelude::*;

use mergenet::config::RunConfig;
use mergenet::grid::Grid;
use mergenet::metrics::{connected_components_4, frame_metrics, MetricsConfig};
use mergenet::scene::{
    reassemble_frame, split_into_stripes, ClassCounts, ClassLabel, ClassWeights, LabelMap, RgbdFrame, Stripe,
};
use mergenet::segnet::layers::{max_pool2, max_unpool2};
use mergenet::segnet::{
    context_forward, predict_labels, refiner_forward, stripe_forward, Mode, NetworkKind, NetworkParams, ProbMap,
    Tensor,
};
use mergenet::synth::{generate_indexed_scene, SceneParams};
use mergenet::training::{weighted_cross_entropy, BalancedStripeSampler, PROB_EPS};

fn frame_strategy(max_h: usize, max_k: usize) -> impl Strategy<Value = (RgbdFrame, LabelMap, usize)> {
    (1..=max_h, 1..=max_k, prop::sample::select(vec![1usize, 2, 4, 8])).prop_flat_map(|(h, k, sw)| {
        let w = k * sw;
        (
            prop::collection::vec(0.0f32..=1.0, h * w * 3),
            prop::collection::vec(0.0f32..=1.0, h * w),
            prop::collection::vec(0u8..3, h * w),
        )
            .prop_map(move |(rgb, disp, codes)| {
                let frame = RgbdFrame::new(
                    "p",
                    Grid::from_vec(h, w, 3, rgb).unwrap(),
                    Grid::from_vec(h, w, 1, disp).unwrap(),
                )
                .unwrap();
                (frame, LabelMap::from_codes(h, w, &codes).unwrap(), sw)
            })
    })
}

fn label_strategy(h: usize, w: usize) -> impl Strategy<Value = LabelMap> {
    prop::collection::vec(0u8..3, h * w).prop_map(move |c| LabelMap::from_codes(h, w, &c).unwrap())
}

fn flood_fill(mask: &Grid<bool>) -> Vec<Vec<usize>> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut comps = Vec::new();
    for s in 0..h * w {
        if !mask.data()[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        let mut comp = Vec::new();
        while let Some(p) = q.pop_front() {
            comp.push(p);
            let (r, c) = (p / w, p % w);
            let mut n = Vec::new();
            if r > 0 {
                n.push(p - w);
            }
            if r + 1 < h {
                n.push(p + w);
            }
            if c > 0 {
                n.push(p - 1);
            }
            if c + 1 < w {
                n.push(p + 1);
            }
            for x in n {
                if mask.data()[x] && !seen[x] {
                    seen[x] = true;
                    q.push_back(x);
                }
            }
        }
        comp.sort();
        comps.push(comp);
    }
    comps
}

fn random_probmap(h: usize, w: usize, logits: &[f64]) -> ProbMap {
    ProbMap::from_logits(&Tensor::from_vec(3, h, w, logits.to_vec()))
}

proptest! {
    #[test]
    fn split_then_reassemble_is_identity((frame, labels, sw) in frame_strategy(12, 6)) {
        let stripes = split_into_stripes(&frame, Some(&labels), sw).unwrap();
        prop_assert_eq!(stripes.len(), frame.width() / sw);
        let (back, back_labels) = reassemble_frame(&stripes).unwrap();
        prop_assert_eq!(back, frame);
        prop_assert_eq!(back_labels, Some(labels));
    }

    #[test]
    fn reassembly_ignores_stripe_order((frame, labels, sw) in frame_strategy(6, 6), seed in any::<u64>()) {
        let mut stripes = split_into_stripes(&frame, Some(&labels), sw).unwrap();
        let n = stripes.len();
        for i in 0..n {
            let j = (seed as usize).wrapping_add(i * 7) % n;
            stripes.swap(i, j);
        }
        let (back, _) = reassemble_frame(&stripes).unwrap();
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn a_pixel_edit_touches_one_stripe(
        (frame, _labels, sw) in frame_strategy(6, 6),
        r in any::<prop::sample::Index>(),
        c in any::<prop::sample::Index>(),
    ) {
        let (h, w) = (frame.height(), frame.width());
        let (r, c) = (r.index(h), c.index(w));
        let mut rgb = frame.rgb().clone();
        let old = rgb.get(r, c, 0);
        rgb.set(r, c, 0, if old > 0.5 { 0.0 } else { 1.0 });
        let edited = RgbdFrame::new("p", rgb, frame.disparity().clone()).unwrap();
        let a = split_into_stripes(&frame, None, sw).unwrap();
        let b = split_into_stripes(&edited, None, sw).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.frame != y.frame, x.index == c / sw);
        }
    }

    #[test]
    fn class_weights_are_normalized(road in 1u64..10_000, off in 1u64..10_000, obs in 1u64..10_000) {
        let codes: Vec<u8> = [(0u8, road), (1, off), (2, obs)]
            .iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(c, n as usize))
            .collect();
        let labels = LabelMap::from_codes(1, codes.len(), &codes).unwrap();
        let mut counts = ClassCounts::default();
        counts.add_labels(&labels);
        let w = ClassWeights::from_counts(&counts).unwrap();
        let f = counts.fractions();
        let s: f64 = (0..3).map(|i| w.0[i] * f[i]).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn components_match_flood_fill(cells in prop::collection::vec(any::<bool>(), 1..=144), w in 1usize..13) {
        let h = cells.len() / w;
        prop_assume!(h > 0);
        let mask = Grid::from_vec(h, w, 1, cells[..h * w].to_vec()).unwrap();
        let cc = connected_components_4(&mask);
        let oracle = flood_fill(&mask);
        prop_assert_eq!(cc.count(), oracle.len());
        for comp in &oracle {
            let id = cc.ids().data()[comp[0]];
            prop_assert!(id > 0);
            let mine: Vec<usize> = (0..h * w).filter(|&p| cc.ids().data()[p] == id).collect();
            prop_assert_eq!(&mine, comp);
        }
        for (p, &m) in mask.data().iter().enumerate() {
            prop_assert_eq!(m, cc.ids().data()[p] > 0);
        }
    }

    #[test]
    fn metric_bounds_and_couplings(gt in label_strategy(10, 10), pred in label_strategy(10, 10)) {
        let cfg = MetricsConfig::default();
        let d = Grid::filled(10, 10, 1, 0.3f32);
        let (c, _) = frame_metrics("p", &pred, &gt, &d, &cfg).unwrap();
        for r in [c.pdr(), c.idr(), c.pfp()].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        prop_assert!(c.ifp().unwrap() >= 0.0);
        if c.tp_obstacle > 0 {
            prop_assert_eq!(c.pdr().unwrap(), c.cdp as f64 / c.tp_obstacle as f64);
        }
        prop_assert_eq!(c.ifp().unwrap(), c.idi as f64);

        // Swapping roles: falsely flagged pixels become missed pixels.
        let (s, _) = frame_metrics("p", &gt, &pred, &d, &cfg).unwrap();
        prop_assert_eq!(c.idp, s.tp_obstacle - s.cdp);
        prop_assert_eq!(s.idp, c.tp_obstacle - c.cdp);
    }

    #[test]
    fn full_pixel_coverage_detects_every_instance(gt in label_strategy(9, 9), extra in label_strategy(9, 9)) {
        let codes: Vec<u8> = gt
            .codes()
            .iter()
            .zip(extra.codes())
            .map(|(&g, e)| if g == 2 { 2 } else { e })
            .collect();
        let pred = LabelMap::from_codes(9, 9, &codes).unwrap();
        let (c, _) = frame_metrics("p", &pred, &gt, &Grid::filled(9, 9, 1, 0.3f32), &MetricsConfig::default()).unwrap();
        if c.tp_obstacle > 0 {
            prop_assert_eq!(c.pdr(), Some(1.0));
            prop_assert_eq!(c.idr(), Some(1.0));
        }
    }

    #[test]
    fn loss_is_bounded(labels in label_strategy(3, 4), logits in prop::collection::vec(-30.0f64..30.0, 36), w in prop::array::uniform3(0.01f64..20.0)) {
        let weights = ClassWeights(w);
        let p = random_probmap(3, 4, &logits);
        let loss = weighted_cross_entropy(&p, &labels, &weights).unwrap();
        let wmax = w.iter().cloned().fold(0.0, f64::max);
        prop_assert!(loss >= 0.0);
        prop_assert!(loss <= wmax * (1.0 / PROB_EPS).ln() + 1e-9);
        if loss < 1e-6 {
            prop_assert_eq!(predict_labels(&p), labels);
        }
    }

    #[test]
    fn pool_then_unpool_keeps_maxima(vals in prop::collection::vec(-100.0f64..100.0, 2 * 6 * 8)) {
        let x = Tensor::from_vec(2, 6, 8, vals);
        let (pooled, idx) = max_pool2(&x);
        let back = max_unpool2(&pooled, &idx, 6, 8);
        for c in 0..2 {
            for y in 0..6 {
                for xx in 0..8 {
                    let v = back.at(c, y, xx);
                    if v != 0.0 {
                        prop_assert_eq!(v, x.at(c, y, xx));
                    }
                }
            }
            for py in 0..3 {
                for px in 0..4 {
                    let window = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|&(dy, dx)| x.at(c, 2 * py + dy, 2 * px + dx))
                        .fold(f64::NEG_INFINITY, f64::max);
                    prop_assert_eq!(pooled.at(c, py, px), window);
                }
            }
        }
    }

    #[test]
    fn synthetic_obstacles_stand_above_the_ground(seed in any::<u64>(), i in 0usize..1000) {
        let params = SceneParams { rng_seed: seed, ..SceneParams::default() };
        let scene = generate_indexed_scene(&params, i).unwrap();
        let labels = &scene.sample.labels;
        let disp = scene.sample.frame.disparity();
        let counts = labels.counts();
        for class in ClassLabel::ALL {
            prop_assert!(counts.get(class) > 0);
        }
        for r in 0..labels.height() {
            for c in 0..labels.width() {
                if labels.get(r, c) == ClassLabel::Obstacle {
                    prop_assert!(disp.get(r, c, 0) as f64 > params.ground_disparity(r));
                }
            }
        }
    }

    #[test]
    fn sampler_probabilities_follow_weighted_mass(
        maps in prop::collection::vec(label_strategy(4, 2), 1..6),
        seed in any::<u64>(),
    ) {
        let stripes: Vec<Stripe> = maps
            .iter()
            .enumerate()
            .map(|(i, l)| Stripe {
                index: i,
                frame: RgbdFrame::new("p", Grid::filled(4, 2, 3, 0.5), Grid::filled(4, 2, 1, 0.5)).unwrap(),
                labels: Some(l.clone()),
            })
            .collect();
        let w = ClassWeights([0.5, 1.5, 7.0]);
        let sampler = BalancedStripeSampler::new(stripes, &w, seed).unwrap();
        let mass: Vec<f64> = maps
            .iter()
            .map(|l| ClassLabel::ALL.iter().map(|&c| w.get(c) * l.counts().get(c) as f64).sum())
            .collect();
        let total: f64 = mass.iter().sum();
        for (p, m) in sampler.probabilities().iter().zip(&mass) {
            prop_assert!((p - m / total).abs() < 1e-12);
        }
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), lr in 1e-5f64..1.0, bins in 1usize..50, patience in 1usize..20) {
        let mut cfg = RunConfig::default();
        cfg.set_seed(seed);
        cfg.train.learning_rate = lr;
        cfg.train.patience = patience;
        cfg.curve_bins = bins;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), cfg.to_text());
        prop_assert_eq!(back.train.learning_rate, lr);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn networks_emit_distributions_at_input_resolution(
        seed in any::<u64>(),
        kind_ix in 0usize..3,
        hk in 1usize..4,
        wk in 1usize..4,
        vals in prop::collection::vec(0.0f32..=1.0, 16 * 16 * 4),
        train_mode in any::<bool>(),
    ) {
        let kind = NetworkKind::ALL[kind_ix];
        let params = NetworkParams::init(kind.micro_architecture(), seed).unwrap();
        let (h, w) = (4 * hk, 4 * wk);
        let n = h * w;
        let frame = RgbdFrame::new(
            "p",
            Grid::from_vec(h, w, 3, vals[..3 * n].to_vec()).unwrap(),
            Grid::from_vec(h, w, 1, vals[3 * n..4 * n].to_vec()).unwrap(),
        )
        .unwrap();
        let mode = if train_mode { Mode::Train } else { Mode::Eval };
        let run = |mode| match kind {
            NetworkKind::Stripe => stripe_forward(&params, &Stripe { index: 0, frame: frame.clone(), labels: None }, mode),
            NetworkKind::Context => context_forward(&params, &frame, mode),
            NetworkKind::Refiner => {
                let logits: Vec<f64> = vals[..3 * n].iter().map(|&v| 8.0 * v as f64 - 4.0).collect();
                let y = random_probmap(h, w, &logits);
                let y2 = random_probmap(h, w, &logits.iter().rev().cloned().collect::<Vec<_>>());
                refiner_forward(&params, &y, &y2, mode)
            }
        };
        let out = run(mode).unwrap();
        prop_assert_eq!((out.height(), out.width()), (h, w));
        for px in out.grid().data().chunks(3) {
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
        let again = run(Mode::Eval).unwrap();
        prop_assert_eq!(run(Mode::Eval).unwrap(), again);
    }

    #[test]
    fn stripe_outputs_do_not_depend_on_batch_order(seed in any::<u64>(), vals in prop::collection::vec(0.0f32..=1.0, 8 * 16 * 4)) {
        let params = NetworkParams::init(NetworkKind::Stripe.micro_architecture(), seed).unwrap();
        let n = 8 * 16;
        let frame = RgbdFrame::new(
            "p",
            Grid::from_vec(8, 16, 3, vals[..3 * n].to_vec()).unwrap(),
            Grid::from_vec(8, 16, 1, vals[3 * n..].to_vec()).unwrap(),
        )
        .unwrap();
        let stripes = split_into_stripes(&frame, None, 4).unwrap();
        let forward: Vec<ProbMap> = stripes.iter().map(|s| stripe_forward(&params, s, Mode::Eval).unwrap()).collect();
        let mut reversed: Vec<ProbMap> = stripes.iter().rev().map(|s| stripe_forward(&params, s, Mode::Eval).unwrap()).collect();
        reversed.reverse();
        prop_assert_eq!(forward, reversed);
        let batch = mergenet::segnet::stripe_forward_batch(&params, &stripes, Mode::Eval).unwrap();
        let mut rev_stripes = stripes.clone();
        rev_stripes.reverse();
        let mut rev_batch = mergenet::segnet::stripe_forward_batch(&params, &rev_stripes, Mode::Eval).unwrap();
        rev_batch.reverse();
        prop_assert_eq!(batch, rev_batch);
    }
}
