mod common;

use common::*;
use hetrec_core::eval::{evaluate, recommend, topn_similar, EmbeddingMatrix, EvalConfig, EvalData, Strategy};
use hetrec_core::model::{DenseParams, EgoForward, ModelConfig, ModelKind, PhiMode, Tree};
use hetrec_core::rng::rng_for;
use hetrec_core::sample::sample_ego;
use proptest::prelude::*;
use rand::Rng as _;

#[test]
fn light_gcn_without_residual_is_linear() {
    let mut worst: f64 = 0.0;
    for case in 0..500u64 {
        let mut rng = rng_for(&[case, 0x6c69]);
        let (g, _) = random_graph(&mut rng, 10, false);
        let nodes = all_nodes(&g);
        let channels: Vec<usize> = (0..g.channels().len()).collect();
        let layers = rng.gen_range(1..=2);
        let d = rng.gen_range(1..=8);
        let cfg = ModelConfig {
            kind: ModelKind::LightGcn,
            layers,
            dim: d,
            alpha: 0.0,
            phi: PhiMode::Uniform,
            relations: vec![],
            use_side_info: false,
        };
        let center = nodes[rng.gen_range(0..nodes.len())];
        let tree = Tree::from_ego(&sample_ego(&g, center, &channels, &[4, 3][..layers], &mut rng));
        let params: DenseParams<f64> = DenseParams::init(&cfg, channels.len(), case);
        let mut draw = || -> Vec<Vec<f64>> { (0..tree.len()).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
        let (x, y) = (draw(), draw());
        let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let mix: Vec<Vec<f64>> =
            x.iter().zip(&y).map(|(xr, yr)| xr.iter().zip(yr).map(|(p, q)| a * p + b * q).collect()).collect();
        let run = |h: Vec<Vec<f64>>| EgoForward::run(tree.clone(), h, &cfg, &params).output().to_vec();
        let (fx, fy, fm) = (run(x), run(y), run(mix));
        for i in 0..d {
            worst = worst.max((fm[i] - (a * fx[i] + b * fy[i])).abs());
        }
    }
    assert!(worst < 1e-10, "max deviation {worst}");
}

fn matrix(rows: &[Vec<f32>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows[0].len(), rows.iter().cloned().enumerate().map(|(i, v)| (i as u64, v)))
}

/// Full sort by descending score, ties by ascending id.
fn oracle_topn(query: &[f32], rows: &[Vec<f32>], n: usize, exclude: &dyn Fn(u64) -> bool) -> Vec<(u64, f32)> {
    let mut all: Vec<(u64, f32)> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude(*i as u64))
        .map(|(i, r)| (i as u64, r.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(n);
    all
}

#[test]
fn topn_matches_full_sort() {
    for case in 0..300u64 {
        let mut rng = rng_for(&[case, 0x746f70]);
        // Coarse values force plenty of exact ties.
        let rows: Vec<Vec<f32>> =
            (0..50).map(|_| (0..8).map(|_| f32::from(rng.gen_range(-2i8..=2))).collect()).collect();
        let query: Vec<f32> = (0..8).map(|_| f32::from(rng.gen_range(-2i8..=2))).collect();
        let m = matrix(&rows);
        let banned = rng.gen_range(0..50u64);
        let exclude = |id: u64| id % 7 == banned % 7;
        for n in [0, 1, 5, 20, 43, 50, 80] {
            let got = topn_similar(&query, &m, n, &exclude);
            // Order within equal scores must follow id, so compare ids too.
            assert_eq!(got, oracle_topn(&query, &rows, n, &exclude), "case {case} n {n}");
        }
    }
}

fn fixture(seed: u64) -> (EvalData, hetrec_core::eval::GroundTruth) {
    let mut rng = rng_for(&[seed, 0x6576]);
    let (nu, ni, d) = (15, 25, 4);
    let users: Vec<Vec<f32>> = (0..nu).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let items: Vec<Vec<f32>> = (0..ni).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let train: Vec<(u64, u64)> = (0..40).map(|_| (rng.gen_range(0..nu), rng.gen_range(0..ni))).collect();
    let truth: Vec<(u64, u64)> = (0..30).map(|_| (rng.gen_range(0..nu), rng.gen_range(0..ni))).collect();
    (EvalData::new(matrix(&users), matrix(&items), train), hetrec_core::eval::ground_truth(truth))
}

fn scaled_data(seed: u64, c: f32) -> EvalData {
    let (mut data, _) = fixture(seed);
    let scale = |m: &EmbeddingMatrix| {
        EmbeddingMatrix::from_rows(m.dim(), m.iter().map(|(id, v)| (id, v.iter().map(|x| x * c).collect())))
    };
    data.users = scale(&data.users);
    data.items = scale(&data.items);
    data
}

const STRATEGIES: [Strategy; 3] = [Strategy::U2i, Strategy::Icf, Strategy::Ucf];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rankings_survive_positive_rescaling(seed in any::<u64>(), power in -4i32..5, k in 1usize..12, n in 1usize..6) {
        let (data, _) = fixture(seed);
        let c = 2f32.powi(power);
        let scaled = scaled_data(seed, c);
        for strategy in STRATEGIES {
            let cfg = EvalConfig { n, k, strategy, exclude_train: true };
            for u in 0..15u64 {
                prop_assert_eq!(recommend(strategy, u, &data, &cfg), recommend(strategy, u, &scaled, &cfg));
            }
        }
    }

    #[test]
    fn recall_grows_with_k(seed in any::<u64>(), n in 1usize..6) {
        let (data, truth) = fixture(seed);
        for strategy in STRATEGIES {
            let mut last = 0.0;
            for k in [1, 2, 5, 10, 25] {
                let r = evaluate(&data, &truth, &EvalConfig { n, k, strategy, exclude_train: false }).recall;
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r >= last - 1e-12, "{:?} k={} {} < {}", strategy, k, r, last);
                last = r;
            }
        }
    }

    #[test]
    fn recommendations_are_distinct_and_bounded(seed in any::<u64>(), k in 0usize..30, n in 0usize..6) {
        let (data, _) = fixture(seed);
        for strategy in STRATEGIES {
            for exclude_train in [false, true] {
                let cfg = EvalConfig { n, k, strategy, exclude_train };
                for u in 0..15u64 {
                    let recs = recommend(strategy, u, &data, &cfg);
                    prop_assert!(recs.len() <= k);
                    let mut sorted = recs.clone();
                    sorted.sort();
                    sorted.dedup();
                    prop_assert_eq!(sorted.len(), recs.len());
                    prop_assert!(recs.iter().all(|&i| i < 25));
                    if strategy == Strategy::U2i && k <= 25 && !exclude_train {
                        prop_assert_eq!(recs.len(), k);
                    }
                }
            }
        }
    }
}
