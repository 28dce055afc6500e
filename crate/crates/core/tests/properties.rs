//! Property suites for the core invariants. Every block runs at least 128 cases.

use proptest::prelude::*;

use vsf_core::dataset::{
    apply_normalizer, fit_normalizer, make_windows, scale_values, split_chronological, Instance, RawSeries, SplitSpec,
};
use vsf_core::ensemble::{
    ddw_weights, ensemble_detailed, fdw_weights, forecast_distance, uniform_weights, EnsembleConfig, Scheme,
};
use vsf_core::eval::{delta_vs_oracle, mae, rmse};
use vsf_core::forecast::{mean_model, persistence_model, ForecastMatrix, ForecastModel};
use vsf_core::retrieval::{splice_instance, subset_distance, top_m_neighbors, RetrievalCorpus};
use vsf_core::scalable::{build_query_table, range_candidates, ThresholdVector};
use vsf_core::subset::{
    average_ranks, correlation_distance, dbscan_clusters, spearman_matrix, CorrelationDistanceMatrix, SubsetMask,
};
use vsf_core::tensor::{Matrix, Tensor3};

fn cfg() -> ProptestConfig {
    ProptestConfig::with_cases(128)
}

fn tensor(steps: usize, vars: usize, features: usize) -> impl Strategy<Value = Tensor3> {
    prop::collection::vec(-5.0f64..5.0, steps * vars * features)
        .prop_map(move |data| Tensor3::from_vec(steps, vars, features, data).unwrap())
}

/// A non-empty subset of `0..n` as a sorted mask.
fn subset(n: usize) -> impl Strategy<Value = SubsetMask> {
    prop::collection::vec(any::<bool>(), n).prop_flat_map(move |bits| {
        let mut idx: Vec<usize> = (0..n).filter(|&i| bits[i]).collect();
        if idx.is_empty() {
            idx.push(0);
        }
        Just(SubsetMask::new(idx, n).unwrap())
    })
}

fn series(t: usize, n: usize) -> impl Strategy<Value = RawSeries> {
    prop::collection::vec(-100.0f64..100.0, t * n)
        .prop_map(move |v| RawSeries::from_matrix(Matrix::from_vec(t, n, v).unwrap()).unwrap())
}

fn corpus_of(tensors: Vec<Tensor3>) -> RetrievalCorpus {
    RetrievalCorpus::new(
        tensors
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let v = x.vars();
                let last: Vec<f64> = (0..v).map(|n| x.get(x.steps() - 1, n, 0)).collect();
                Instance {
                    y: Matrix::from_vec(1, v, last).unwrap(),
                    x,
                    origin_index: i,
                }
            })
            .collect(),
    )
    .unwrap()
}

fn is_simplex(w: &[f64]) -> bool {
    w.iter().all(|&x| x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn weights_lie_on_simplex(d in prop::collection::vec(0.0f64..50.0, 1..20), tau in 1e-3f64..10.0) {
        prop_assert!(is_simplex(&uniform_weights(d.len()).w));
        prop_assert!(is_simplex(&ddw_weights(&d, tau).w));
        prop_assert!(is_simplex(&fdw_weights(&d, tau).w));
    }

    #[test]
    fn softmax_is_shift_invariant(
        d in prop::collection::vec(0.0f64..10.0, 1..20),
        shift in -100.0f64..100.0,
        tau in 1e-2f64..10.0,
    ) {
        let shifted: Vec<f64> = d.iter().map(|x| x + shift).collect();
        let a = ddw_weights(&d, tau);
        let b = ddw_weights(&shifted, tau);
        for (x, y) in a.w.iter().zip(&b.w) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let c = fdw_weights(&shifted, tau);
        for (x, y) in a.w.iter().zip(&c.w) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn smallest_distance_gets_largest_weight(d in prop::collection::vec(0.0f64..10.0, 1..20), tau in 1e-2f64..10.0) {
        let w = ddw_weights(&d, tau);
        let argmin = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))).unwrap();
        let max = w.w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(w.w[argmin], max);
        prop_assert_eq!(w.ranking()[0], argmin);
    }

    #[test]
    fn ensemble_stays_in_member_hull(
        tensors in prop::collection::vec(tensor(3, 4, 1), 6..12),
        query in tensor(3, 4, 1),
        s in subset(4),
        scheme in prop_oneof![Just(Scheme::Uw), Just(Scheme::Ddw), Just(Scheme::Fdw)],
        tau in 1e-2f64..5.0,
    ) {
        let corpus = corpus_of(tensors);
        let model = mean_model(2);
        let x = query.project(&s).unwrap();
        let neighbors = top_m_neighbors(&corpus, &x, &s, 0.5, 5).unwrap();
        let cfg = EnsembleConfig { scheme, tau, m: 5, exponent_b: 0.5 };
        let out = ensemble_detailed(&model, &x, &s, &neighbors, &corpus, &cfg, None).unwrap();
        prop_assert!(is_simplex(&out.weights.w));
        for r in 0..s.len() {
            for q in 0..2 {
                let vals: Vec<f64> = out.members.iter().map(|m| m.get(r, q)).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let v = out.forecast.yhat.get(r, q);
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn splice_is_idempotent(nn in tensor(4, 5, 2), full_query in tensor(4, 5, 2), s in subset(5)) {
        let x = full_query.project(&s).unwrap();
        let once = splice_instance(&x, &nn, &s).unwrap();
        let twice = splice_instance(&x, &once, &s).unwrap();
        prop_assert_eq!(&once, &twice);
        for p in 0..4 {
            for v in 0..5 {
                let src = if s.contains(v) { &full_query } else { &nn };
                prop_assert_eq!(once.cell(p, v), src.cell(p, v));
            }
        }
    }

    #[test]
    fn range_candidates_match_predicate_brute_force(
        tensors in prop::collection::vec(tensor(2, 3, 1), 1..25),
        query in tensor(2, 3, 1),
        s in subset(3),
        widths in prop::collection::vec(0.1f64..6.0, 3),
    ) {
        let corpus = corpus_of(tensors);
        let table = build_query_table(&corpus);
        let x = query.project(&s).unwrap();
        let th = ThresholdVector { b_sigma: widths.clone(), k_hat: 1 };
        let got = range_candidates(&table, &x, &s, &th).unwrap();
        let expected: Vec<usize> = (0..corpus.len())
            .filter(|&r| {
                let inst = &corpus.get(r).x;
                (0..2).all(|p| {
                    s.indices().iter().enumerate().all(|(row, &v)| (x.get(p, row, 0) - inst.get(p, v, 0)).abs() <= widths[v])
                })
            })
            .collect();
        // Soundness and completeness at once; the brute force is order-free.
        prop_assert_eq!(&got.ids, &expected);
        prop_assert_eq!(got.rounds_used, 1);
    }

    #[test]
    fn range_candidates_grow_with_thresholds(
        tensors in prop::collection::vec(tensor(2, 3, 1), 1..25),
        query in tensor(2, 3, 1),
        s in subset(3),
        widths in prop::collection::vec(0.1f64..4.0, 3),
        var in 0usize..3,
        factor in 1.0f64..4.0,
    ) {
        let corpus = corpus_of(tensors);
        let table = build_query_table(&corpus);
        let x = query.project(&s).unwrap();
        let small = ThresholdVector { b_sigma: widths.clone(), k_hat: 1 };
        let mut wide = widths.clone();
        wide[var] *= factor;
        let big = ThresholdVector { b_sigma: wide, k_hat: 1 };
        let a = range_candidates(&table, &x, &s, &small).unwrap().ids;
        let b = range_candidates(&table, &x, &s, &big).unwrap().ids;
        prop_assert!(a.iter().all(|id| b.contains(id)));
    }

    #[test]
    fn range_candidates_ignore_variable_order(
        tensors in prop::collection::vec(tensor(2, 4, 1), 1..20),
        query in tensor(2, 4, 1),
        widths in prop::collection::vec(0.5f64..5.0, 4),
        perm in Just(vec![3usize, 1, 0, 2]),
    ) {
        // Relabel variables; the candidate set must not depend on sub-query order.
        let corpus = corpus_of(tensors.clone());
        let permuted = corpus_of(tensors.iter().map(|t| t.select_vars(&perm)).collect());
        let s = SubsetMask::full(4);
        let a = range_candidates(
            &build_query_table(&corpus),
            &query,
            &s,
            &ThresholdVector { b_sigma: widths.clone(), k_hat: 1 },
        ).unwrap();
        let pw: Vec<f64> = perm.iter().map(|&v| widths[v]).collect();
        let b = range_candidates(
            &build_query_table(&permuted),
            &query.select_vars(&perm),
            &s,
            &ThresholdVector { b_sigma: pw, k_hat: 1 },
        ).unwrap();
        prop_assert_eq!(a.ids, b.ids);
    }

    #[test]
    fn normalization_round_trips(s in series(20, 3)) {
        let n = fit_normalizer(&s).unwrap();
        let back = apply_normalizer(&apply_normalizer(&s, &n, false), &n, true);
        for (a, b) in s.values().as_slice().iter().zip(back.values().as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn window_count_matches_formula(t in 2usize..80, p in 1usize..10, q in 1usize..10, stride in 1usize..6) {
        let s = RawSeries::from_matrix(Matrix::from_vec(t, 1, (0..t).map(|i| i as f64).collect()).unwrap()).unwrap();
        match make_windows(&s, p, q, stride) {
            Ok(w) => {
                prop_assert!(t >= p + q);
                prop_assert_eq!(w.len(), (t - p - q) / stride + 1);
                for (i, inst) in w.iter().enumerate() {
                    prop_assert_eq!(inst.origin_index, i * stride);
                    prop_assert_eq!(inst.x.get(0, 0, 0), (i * stride) as f64);
                    prop_assert_eq!(inst.y.get(0, 0), (i * stride + p) as f64);
                }
            }
            Err(_) => prop_assert!(t < p + q),
        }
    }

    #[test]
    fn splits_partition_the_series(s in series(60, 2), train in 0.3f64..0.6, val in 0.1f64..0.2) {
        let spec = SplitSpec { train, val, test: 1.0 - train - val };
        let (a, b, c) = split_chronological(&s, &spec, 1).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), s.len());
        let mut joined = a.values().as_slice().to_vec();
        joined.extend_from_slice(b.values().as_slice());
        joined.extend_from_slice(c.values().as_slice());
        prop_assert_eq!(joined.as_slice(), s.values().as_slice());
    }

    #[test]
    fn scaling_composes(s in series(5, 2), a in 0.1f64..10.0, b in 0.1f64..10.0) {
        let twice = scale_values(&scale_values(&s, a).unwrap(), b).unwrap();
        let once = scale_values(&s, a * b).unwrap();
        for (x, y) in twice.values().as_slice().iter().zip(once.values().as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn subset_distance_is_symmetric_and_zero_on_equal(
        a in tensor(3, 4, 2),
        b in tensor(3, 4, 2),
        s in subset(4),
        exponent in prop_oneof![Just(0.33), Just(0.5), Just(1.0), Just(2.0), 0.1f64..3.0],
    ) {
        let ab = subset_distance(&a, &b, &s, exponent).unwrap();
        let ba = subset_distance(&b, &a, &s, exponent).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(subset_distance(&a, &a, &s, exponent).unwrap(), 0.0);
        let equal_on_s = s.indices().iter().all(|&v| (0..3).all(|p| a.cell(p, v) == b.cell(p, v)));
        prop_assert_eq!(ab == 0.0, equal_on_s);
    }

    #[test]
    fn unnormalized_distance_grows_with_subset(
        a in tensor(3, 5, 1),
        b in tensor(3, 5, 1),
        s in subset(5),
        extra in 0usize..5,
        exponent in 0.1f64..3.0,
    ) {
        let mut grown = s.indices().to_vec();
        if !grown.contains(&extra) {
            grown.push(extra);
        }
        let grown = SubsetMask::from_unsorted(grown, 5).unwrap();
        let sum = |m: &SubsetMask| subset_distance(&a, &b, m, exponent).unwrap() * (3 * m.len()) as f64;
        prop_assert!(sum(&grown) >= sum(&s) * (1.0 - 1e-12));
    }

    #[test]
    fn spearman_ignores_monotone_transforms(x in prop::collection::vec(-3.0f64..3.0, 5..30), seed in any::<u64>()) {
        let t = x.len();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + ((i as u64 ^ seed) % 7) as f64).collect();
        let build = |col0: &[f64]| {
            let mut data = Vec::with_capacity(2 * t);
            for i in 0..t {
                data.push(col0[i]);
                data.push(y[i]);
            }
            RawSeries::from_matrix(Matrix::from_vec(t, 2, data).unwrap()).unwrap()
        };
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let exp_x: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let a = spearman_matrix(&build(&x)).unwrap();
        let b = spearman_matrix(&build(&exp_x)).unwrap();
        prop_assert_eq!(a.get(0, 1), b.get(0, 1));
        prop_assert_eq!(average_ranks(&x), average_ranks(&exp_x));
    }

    #[test]
    fn correlation_distance_is_valid(values in prop::collection::vec(-1.0f64..1.0, 15)) {
        // Symmetric rho with unit diagonal from the upper triangle of a 6x6 matrix.
        let n = 6;
        let mut rho = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            rho.set(i, i, 1.0);
            for j in i + 1..n {
                rho.set(i, j, values[k]);
                rho.set(j, i, values[k]);
                k += 1;
            }
        }
        let d = correlation_distance(&rho);
        prop_assert!(CorrelationDistanceMatrix::new(d.matrix().clone()).is_ok());
    }

    #[test]
    fn dbscan_is_permutation_invariant(
        points in prop::collection::vec(0.0f64..1.0, 4..14),
        eps in 0.02f64..0.3,
        min_pts in 1usize..4,
        rot in 0usize..14,
    ) {
        let n = points.len();
        let dist = |p: &[f64]| {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m.set(i, j, (p[i] - p[j]).abs().min(1.0));
                }
            }
            CorrelationDistanceMatrix::new(m).unwrap()
        };
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let permuted: Vec<f64> = perm.iter().map(|&i| points[i]).collect();
        let a = dbscan_clusters(&dist(&points), eps, min_pts);
        let b = dbscan_clusters(&dist(&permuted), eps, min_pts);
        prop_assert_eq!(a.n_clusters, b.n_clusters);
        // Core-point membership and noise are order-free; compare co-membership of core points
        // and the noise set.
        let core = |i: usize, p: &[f64]| (0..n).filter(|&j| (p[i] - p[j]).abs() <= eps).count() >= min_pts;
        for i in 0..n {
            for j in 0..n {
                let (pi, pj) = (perm.iter().position(|&x| x == i).unwrap(), perm.iter().position(|&x| x == j).unwrap());
                if core(i, &points) && core(j, &points) {
                    prop_assert_eq!(a.labels[i] == a.labels[j], b.labels[pi] == b.labels[pj]);
                }
            }
            let pi = perm.iter().position(|&x| x == i).unwrap();
            prop_assert_eq!(a.labels[i].is_none(), b.labels[pi].is_none());
        }
    }

    #[test]
    fn errors_are_translation_invariant_and_scale_linearly(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..10),
        shift in -50.0f64..50.0,
        c in 0.1f64..10.0,
    ) {
        let n = pairs.len();
        let yhat = Matrix::from_vec(n, 1, pairs.iter().map(|p| p.0).collect()).unwrap();
        let y = Matrix::from_vec(n, 1, pairs.iter().map(|p| p.1).collect()).unwrap();
        let (m0, r0) = (mae(&yhat, &y, 1).unwrap(), rmse(&yhat, &y, 1).unwrap());
        let (ys, yhs) = (y.map(|v| v + shift), yhat.map(|v| v + shift));
        prop_assert!((mae(&yhs, &ys, 1).unwrap() - m0).abs() < 1e-9);
        prop_assert!((rmse(&yhs, &ys, 1).unwrap() - r0).abs() < 1e-9);
        let (yc, yhc) = (y.map(|v| v * c), yhat.map(|v| v * c));
        prop_assert!((mae(&yhc, &yc, 1).unwrap() - c * m0).abs() < 1e-9 * (1.0 + c * m0));
        prop_assert!((rmse(&yhc, &yc, 1).unwrap() - c * r0).abs() < 1e-9 * (1.0 + c * r0));
    }

    #[test]
    fn delta_is_zero_on_equality_and_increasing(o in 0.01f64..100.0, a in 0.0f64..100.0, b in 0.0f64..100.0) {
        prop_assert_eq!(delta_vs_oracle(o, o).unwrap(), 0.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(lo < hi);
        prop_assert!(delta_vs_oracle(lo, o).unwrap() < delta_vs_oracle(hi, o).unwrap());
    }

    #[test]
    fn per_variable_models_ignore_missing_variables(x in tensor(6, 5, 1), s in subset(5)) {
        let models: Vec<Box<dyn ForecastModel>> = vec![Box::new(persistence_model(3)), Box::new(mean_model(3))];
        for model in &models {
            let full = model.predict(&x, None).unwrap();
            let part = model.predict(&x.project(&s).unwrap(), Some(&s)).unwrap();
            prop_assert_eq!(part.rows(), s.len());
            prop_assert_eq!(part.cols(), 3);
            prop_assert_eq!(full.select_rows(s.indices()), part.clone());
            prop_assert_eq!(model.predict(&x, None).unwrap(), full);
        }
    }

    #[test]
    fn forecast_distance_matches_weighted_mae(
        a in prop::collection::vec(-5.0f64..5.0, 12),
        b in prop::collection::vec(-5.0f64..5.0, 12),
        s in subset(4),
    ) {
        let ya = ForecastMatrix { yhat: Matrix::from_vec(4, 3, a.clone()).unwrap(), subset: None };
        let yb = ForecastMatrix { yhat: Matrix::from_vec(4, 3, b.clone()).unwrap(), subset: None };
        let got = forecast_distance(&ya, &yb, &s, 3).unwrap();
        let mut expected = 0.0;
        for &v in s.indices() {
            for q in 0..3 {
                expected += (a[v * 3 + q] - b[v * 3 + q]).abs() / (q + 1) as f64;
            }
        }
        expected /= (3 * s.len()) as f64;
        prop_assert!((got - expected).abs() < 1e-12);
    }
}
