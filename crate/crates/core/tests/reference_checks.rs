//! Library routines compared with the independent implementations in
//! `oracles`.

mod oracles;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use oracles::{KnnRule, LossSpec};
use tnnspk_core::classifiers::{KnnModel, ScoreRule, SvmEnsemble, SvmParams};
use tnnspk_core::metrics::{eer, ScoredTrial};
use tnnspk_core::net::EmbeddingParams;
use tnnspk_core::projection::pca_project;
use tnnspk_core::trainer::{loss_gradients, LossOptions};

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(
        seed in any::<u64>(),
        dim_in in 2usize..8,
        dim_out in 2usize..8,
        same_positive in any::<bool>(),
        squared in any::<bool>(),
        normalize in any::<bool>(),
        slack in 0.05f64..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = EmbeddingParams::init(dim_in, dim_out, seed).unwrap();
        let bias: Vec<f64> = gaussian(&mut rng, dim_out).iter().map(|v| 0.1 * v).collect();
        let params = EmbeddingParams::from_parts(dim_in, dim_out, init.weights().to_vec(), bias).unwrap();
        let (w, b) = (params.weights(), params.bias());
        let xa = gaussian(&mut rng, dim_in);
        let xp = if same_positive { xa.clone() } else { gaussian(&mut rng, dim_in) };
        let xn = gaussian(&mut rng, dim_in);
        let xs: [&[f64]; 3] = [&xa, &xp, &xn];
        prop_assume!(xs.iter().all(|x| oracles::pre_activations(w, b, x).iter().all(|z| z.abs() > 1e-3)));
        prop_assume!(xs.iter().all(|x| oracles::forward(w, b, x, false).iter().any(|v| *v > 1e-3)));

        let margin = slack - oracles::distance_gap(w, b, xs, squared, normalize);
        let spec = LossSpec { margin, squared, normalize };
        let opts = LossOptions { margin, squared_distance: squared, normalize_embeddings: normalize };
        let (loss, grads) = loss_gradients(&params, &xa, &xp, &xn, &opts).unwrap();
        prop_assert!((loss - oracles::triplet_loss(w, b, xs, spec)).abs() < 1e-10);
        let (gw, gb) = oracles::fd_gradient(w, b, xs, spec, 1e-5);
        let analytic: Vec<f64> = grads.weights.iter().chain(&grads.bias).copied().collect();
        let numeric: Vec<f64> = gw.iter().chain(&gb).copied().collect();
        prop_assert!(oracles::relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn eer_matches_threshold_sweep(
        raw in prop::collection::vec((0u32..=20, any::<bool>()), 2..60),
    ) {
        let mut scores: Vec<(f64, bool)> = raw.iter().map(|&(k, t)| (k as f64 / 20.0, t)).collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let trials: Vec<ScoredTrial> = scores.iter().map(|&(s, t)| ScoredTrial::new(s, t)).collect();
        let got = eer(&trials).unwrap().eer;
        let grid = (0..=42_000).map(|j| -0.001 + j as f64 * (1.002 / 42_000.0));
        let want = oracles::sweep_eer(&scores, grid);
        prop_assert!((got - want).abs() <= 1e-9, "eer {} vs sweep {}", got, want);
    }
}

#[test]
fn knn_thirty_references_thousand_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let refs: Vec<Vec<f64>> = (0..30).map(|_| gaussian(&mut rng, 4)).collect();
    let labels: Vec<usize> = (0..30).map(|i| i % 6).collect();
    let blacklisted: Vec<bool> = (0..30).map(|i| i % 6 < 4).collect();
    for (rule, oracle_rule) in [
        (ScoreRule::WeightedVote, KnnRule::Weighted),
        (ScoreRule::PlainVote, KnnRule::Plain),
        (ScoreRule::NegNearestBlDistance, KnnRule::NearestBl),
    ] {
        for k in [1, 3, 4] {
            let model = KnnModel::new(refs.clone(), labels.clone(), blacklisted.clone(), k, rule).unwrap();
            for _ in 0..1000 {
                let x = gaussian(&mut rng, 4);
                let got = model.predict(&x).unwrap();
                let want = oracles::knn_brute(&refs, &labels, &blacklisted, k, oracle_rule, &x);
                let idx: Vec<usize> = got.neighbors.iter().map(|p| p.0).collect();
                assert_eq!(idx, want.neighbors);
                assert_eq!(got.label, want.label);
                assert!((got.task1_score - want.score).abs() <= 1e-12 * want.score.abs().max(1.0));
            }
        }
    }
}

#[test]
fn one_nearest_neighbour_on_noiseless_clusters_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let means: Vec<Vec<f64>> = (0..12).map(|_| gaussian(&mut rng, 6)).collect();
    let refs: Vec<Vec<f64>> = means.iter().flat_map(|m| [m.clone(), m.clone()]).collect();
    let labels: Vec<usize> = (0..24).map(|i| i / 2).collect();
    let model = KnnModel::new(refs, labels, vec![true; 24], 1, ScoreRule::PlainVote).unwrap();
    for (c, m) in means.iter().enumerate() {
        let p = model.predict(m).unwrap();
        assert_eq!(p.label, c);
        assert_eq!(p.neighbors[0].1, 0.0);
    }
}

#[test]
fn six_point_svm_matches_dual_reference() {
    let points = vec![
        vec![0.0, 0.0],
        vec![0.4, 0.2],
        vec![-0.3, 0.5],
        vec![2.0, 2.0],
        vec![2.5, 1.6],
        vec![1.7, 2.4],
    ];
    let targets: Vec<Option<usize>> = (0..6).map(|i| Some(i / 3)).collect();
    let params = SvmParams {
        c: 1.0,
        gamma: Some(0.5),
        tol: 1e-5,
        ..SvmParams::default()
    };
    let model = SvmEnsemble::train(&points, &targets, &params).unwrap();
    let mut probes = points.clone();
    probes.extend([vec![1.0, 1.0], vec![-1.0, 3.0], vec![3.0, -1.0]]);
    for (c, class) in model.classes().into_iter().enumerate() {
        let y: Vec<f64> = targets.iter().map(|t| if *t == Some(class) { 1.0 } else { -1.0 }).collect();
        let (alpha, bias) = oracles::svm_dual_reference(&points, &y, 1.0, 0.5);
        for q in &probes {
            let want = oracles::svm_decision(&points, &y, &alpha, bias, 0.5, q);
            let got = model.predict(q).unwrap().decision_values[c];
            assert!((got - want).abs() < 1e-4, "class {class}: {got} vs {want}");
        }
    }
    for (i, p) in points.iter().enumerate() {
        assert_eq!(model.predict(p).unwrap().label, i / 3);
    }
}

#[test]
fn pca_agrees_with_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (n, dim) = (50, 10);
    // anisotropic so the spectrum has no repeated values
    let data: Vec<Vec<f64>> = (0..n)
        .map(|_| gaussian(&mut rng, dim).iter().enumerate().map(|(j, v)| v * (dim - j) as f64 + 1.0).collect())
        .collect();
    let full = pca_project(&data, dim).unwrap();
    for (x, p) in data.iter().zip(&full.points) {
        for (j, xj) in x.iter().enumerate() {
            let back: f64 = full.mean[j] + (0..dim).map(|c| p[c] * full.directions[c][j]).sum::<f64>();
            assert!((back - xj).abs() < 1e-8);
        }
    }

    let centered = DMatrix::from_fn(n, dim, |i, j| data[i][j] - full.mean[j]);
    let svd = centered.svd(false, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    for (var, s) in full.variances.iter().zip(&sv) {
        assert!((var - s * s / (n - 1) as f64).abs() < 1e-8 * var.max(1.0));
    }

    let k = 3;
    let top = pca_project(&data, k).unwrap();
    let residual: f64 = data
        .iter()
        .zip(&top.points)
        .map(|(x, p)| {
            (0..dim)
                .map(|j| {
                    let back = top.mean[j] + (0..k).map(|c| p[c] * top.directions[c][j]).sum::<f64>();
                    (back - x[j]).powi(2)
                })
                .sum::<f64>()
        })
        .sum();
    let want: f64 = sv[k..].iter().map(|s| s * s).sum();
    assert!((residual - want).abs() < 1e-8 * want);
}
