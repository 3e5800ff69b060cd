mod common;

use std::collections::BTreeMap;

use factprobe::baselines::{self, KnnModel, Metric};
use factprobe::dataset_prep::{
    crop_evidence, parse_verdict, stratified_split, stratified_val_counts,
};
use factprobe::embedding_store::{
    decode_embedding_set, encode_embedding_set, join_setups, mean_pool, EmbeddingManifest,
    EmbeddingSet,
};
use factprobe::label::Veracity;
use factprobe::metrics::{confusion, f1_macro, f1_per_class};
use factprobe::probe_model::{self, argmax, Checkpoint, Mode, ProbeConfig};
use factprobe::trainer::softmax;
use factprobe::{rng, DatasetId, InputSetup, PooledEmbedding, Split};
use proptest::prelude::*;
use rand::Rng;

fn label_strategy() -> impl Strategy<Value = Veracity> {
    (0usize..3).prop_map(|i| Veracity::from_index(i).unwrap())
}

fn finite_f32() -> impl Strategy<Value = f32> {
    -1e6f32..1e6f32
}

fn record_map(
    ndim: usize,
    max: usize,
) -> impl Strategy<Value = BTreeMap<String, (Veracity, Vec<f32>)>> {
    prop::collection::btree_map(
        "[a-z0-9_]{1,12}",
        (label_strategy(), prop::collection::vec(finite_f32(), ndim)),
        0..max,
    )
}

fn to_set(
    setup: InputSetup,
    ndim: usize,
    map: &BTreeMap<String, (Veracity, Vec<f32>)>,
) -> EmbeddingSet {
    let records: Vec<PooledEmbedding> = map
        .iter()
        .map(|(id, (label, v))| PooledEmbedding {
            instance_id: id.clone(),
            vector: v.clone(),
            label: *label,
        })
        .collect();
    EmbeddingSet {
        manifest: EmbeddingManifest::new(
            DatasetId::Factify2,
            Split::Train,
            setup,
            "prop",
            ndim,
            records.len(),
        ),
        records,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_round_trip((ndim, map) in (1usize..8).prop_flat_map(|d| (Just(d), record_map(d, 20)))) {
        let set = to_set(InputSetup::MmClaim, ndim, &map);
        let bytes = encode_embedding_set(&set.manifest, &set.records).unwrap();
        let back = decode_embedding_set(&bytes).unwrap();
        prop_assert_eq!(back.manifest, set.manifest);
        prop_assert_eq!(back.records.len(), set.records.len());
        for (a, b) in back.records.iter().zip(&set.records) {
            prop_assert_eq!(&a.instance_id, &b.instance_id);
            prop_assert_eq!(a.label, b.label);
            let bits_a: Vec<u32> = a.vector.iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u32> = b.vector.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn encoding_ignores_record_order(map in record_map(3, 12), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let set = to_set(InputSetup::Claim, 3, &map);
        let mut shuffled = set.records.clone();
        shuffled.shuffle(&mut rng::stream(seed, &[]));
        prop_assert_eq!(
            encode_embedding_set(&set.manifest, &set.records).unwrap(),
            encode_embedding_set(&set.manifest, &shuffled).unwrap()
        );
    }

    #[test]
    fn mean_pool_matches_oracle_and_ignores_order(
        tokens in (1usize..6).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, d), 1..12)),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let pooled = mean_pool(&tokens).unwrap();
        let ndim = tokens[0].len();
        for j in 0..ndim {
            let mut s = 0.0;
            for row in &tokens {
                s += row[j];
            }
            let oracle = s / tokens.len() as f64;
            let err = (pooled[j] as f64 - oracle).abs();
            prop_assert!(err <= 1e-6 * oracle.abs().max(1.0), "col {}: {} vs {}", j, pooled[j], oracle);
        }
        let mut perm = tokens.clone();
        perm.shuffle(&mut rng::stream(seed, &[]));
        let again = mean_pool(&perm).unwrap();
        for (a, b) in pooled.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn join_is_bounded_and_deterministic(a in record_map(2, 15), b in record_map(3, 15)) {
        // force agreeing labels on shared ids
        let mut b = b;
        for (id, (label, _)) in b.iter_mut() {
            if let Some((la, _)) = a.get(id) {
                *label = *la;
            }
        }
        let sa = to_set(InputSetup::Claim, 2, &a);
        let sb = to_set(InputSetup::ClaimImage, 3, &b);
        let joined = join_setups(&[sa.clone(), sb.clone()]).unwrap();
        prop_assert!(joined.len() <= a.len().min(b.len()));
        let shared = a.keys().filter(|k| b.contains_key(*k)).count();
        prop_assert_eq!(joined.len(), shared);
        let union = a.len() + b.len() - shared;
        prop_assert_eq!(joined.diagnostics.dropped, union - shared);
        prop_assert!(joined.rows.windows(2).all(|w| w[0].instance_id < w[1].instance_id));
        prop_assert_eq!(join_setups(&[sa, sb]).unwrap(), joined);
    }

    #[test]
    fn crop_is_idempotent(words in prop::collection::vec("[a-zA-Z]{1,6}", 0..40), max in 0usize..30) {
        let text = words.join("  ");
        let once = crop_evidence(&text, max);
        prop_assert!(once.split_whitespace().count() <= max);
        prop_assert_eq!(crop_evidence(&once, max), once.clone());
        if words.len() <= max {
            prop_assert_eq!(once, text);
        }
    }

    #[test]
    fn verdict_needs_a_keyword(s in "[a-z ,.]{0,60}") {
        let lower = s.to_lowercase();
        prop_assume!(!["supported", "refuted", "not enough info"].iter().any(|k| lower.contains(k)));
        prop_assert_eq!(parse_verdict(&s), None);
    }

    #[test]
    fn f1_matches_oracle(pairs in prop::collection::vec((0usize..3, 0usize..3), 0..300), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let cm = confusion(&common::idx_to_labels(&preds), &common::idx_to_labels(&labels)).unwrap();
        let f1 = f1_per_class(&cm);
        let oracle = common::f1_oracle(&preds, &labels);
        for c in 0..3 {
            prop_assert!((f1[c] - oracle[c]).abs() <= 1e-12);
        }
        let mut perm = pairs.clone();
        perm.shuffle(&mut rng::stream(seed, &[]));
        let (p2, l2): (Vec<usize>, Vec<usize>) = perm.into_iter().unzip();
        let cm2 = confusion(&common::idx_to_labels(&p2), &common::idx_to_labels(&l2)).unwrap();
        prop_assert_eq!(cm, cm2);
        prop_assert_eq!(f1_macro(&f1).to_bits(), f1_macro(&f1_per_class(&cm2)).to_bits());
    }

    #[test]
    fn knn_matches_sort_oracle(seed in any::<u64>(), k in 1usize..10, cosine in any::<bool>()) {
        let mut r = rng::stream(seed, &[]);
        let n = 40;
        let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..4).map(|_| r.gen_range(-3i32..=3) as f32).collect()).collect();
        let labels: Vec<Veracity> = (0..n).map(|_| Veracity::from_index(r.gen_range(0..3)).unwrap()).collect();
        let metric = if cosine { Metric::Cosine } else { Metric::Euclidean };
        let model = KnnModel::new(rows.clone(), labels.clone(), k, metric).unwrap();
        // integer coordinates produce many exact distance ties
        let queries: Vec<Vec<f32>> = (0..10).map(|_| (0..4).map(|_| r.gen_range(-3i32..=3) as f32).collect()).collect();
        let batch = baselines::knn_predict_batch(&model, &queries).unwrap();
        for (q, p) in queries.iter().zip(&batch) {
            prop_assert_eq!(*p, common::knn_oracle(&rows, &labels, k, metric, q));
        }
        // scaling every vector by a power of two is exact and keeps distance order
        let scaled = |v: &Vec<f32>| v.iter().map(|x| x * 4.0).collect::<Vec<f32>>();
        let model2 = KnnModel::new(rows.iter().map(scaled).collect(), labels, k, metric).unwrap();
        let batch2 = baselines::knn_predict_batch(&model2, &queries.iter().map(scaled).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(batch, batch2);
    }

    #[test]
    fn prediction_ignores_logit_shift_and_scale(
        logits in prop::collection::vec(-50f64..50.0, 3),
        shift in -100f64..100.0,
        scale in 0.01f64..100.0,
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let ps = softmax(&shifted);
        for (a, b) in p.iter().zip(&ps) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let top = argmax(&logits);
        prop_assume!(logits.iter().enumerate().all(|(i, &l)| i == top || logits[top] - l > 1e-9));
        prop_assert_eq!(argmax(&shifted), top);
        prop_assert_eq!(argmax(&logits.iter().map(|l| l * scale).collect::<Vec<_>>()), top);
    }

    #[test]
    fn zero_dropout_train_equals_eval(seed in any::<u64>(), k in 1usize..4, h in 1usize..12) {
        let dims: Vec<usize> = (0..k).map(|i| 2 + i).collect();
        let cfg = ProbeConfig::new(dims.clone(), h, 0.0, seed);
        let params = probe_model::init_probe(&cfg).unwrap();
        let mut r = rng::stream(seed, &[1]);
        let xs: Vec<Vec<f32>> = dims.iter().map(|&d| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let row: Vec<&[f32]> = xs.iter().map(Vec::as_slice).collect();
        let (train, _) = probe_model::forward(&params, &row, Mode::Train { dropout: 0.0 }, &mut r).unwrap();
        let eval = probe_model::logits(&params, &row).unwrap();
        prop_assert_eq!(train, eval);
    }

    #[test]
    fn stratified_split_keeps_proportions(counts in prop::collection::vec(1usize..200, 3), seed in any::<u64>()) {
        let val = stratified_val_counts(&counts, 0.1);
        let total: usize = counts.iter().sum();
        prop_assert_eq!(val.iter().sum::<usize>(), ((0.1 * total as f64) + 0.5).floor() as usize);
        for (&v, &n) in val.iter().zip(&counts) {
            prop_assert!((v as f64 - 0.1 * n as f64).abs() <= 1.0, "{:?} -> {:?}", counts, val);
            prop_assert!(v <= n);
            if n >= 10 {
                prop_assert!(v >= 1);
            }
        }
        let labels: Vec<Veracity> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(Veracity::from_index(c).unwrap(), n))
            .collect();
        let split = stratified_split(&labels, 0.1, seed).unwrap();
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        prop_assert_eq!(split.clone(), stratified_split(&labels, 0.1, seed).unwrap());
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), k in 1usize..4, h in 1usize..10) {
        let cfg = ProbeConfig::new((0..k).map(|i| 1 + 2 * i).collect(), h, 0.1, seed);
        let params = probe_model::init_probe(&cfg).unwrap();
        let ck = Checkpoint { config: cfg, epoch: 3, val_loss: Some(0.25), params };
        prop_assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), k in prop::sample::select(vec![1usize, 2, 4]), h in 2usize..9, p in prop::sample::select(vec![0.0, 0.3])) {
        let mut r = rng::stream(seed, &[]);
        let dims: Vec<usize> = (0..k).map(|_| r.gen_range(1..9)).collect();
        let cfg = ProbeConfig::new(dims, h, p, seed);
        let err = common::gradient_check(&cfg, 4, 1e-5);
        prop_assert!(err < 1e-4, "relative error {}", err);
    }
}

#[test]
fn dropout_is_unbiased() {
    let p = 0.3;
    let cfg = ProbeConfig::new(vec![6, 4], 16, p, 11);
    let params = probe_model::init_probe(&cfg).unwrap();
    let x1: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
    let x2: Vec<f64> = (0..4).map(|i| 0.5 - 0.2 * i as f64).collect();
    let row: Vec<&[f64]> = vec![&x1, &x2];
    let mut r = rng::stream(0, &[]);
    let (_, clean) =
        probe_model::forward(&params, &row, Mode::Train { dropout: 0.0 }, &mut r).unwrap();
    let base: f64 = clean.concat.iter().sum();
    let sq: f64 = clean.concat.iter().map(|a| a * a).sum();
    let n = 20_000;
    let mut mean = 0.0;
    for i in 0..n {
        let mut r = rng::stream(1, &[i]);
        let (_, c) =
            probe_model::forward(&params, &row, Mode::Train { dropout: p }, &mut r).unwrap();
        mean += c.concat.iter().sum::<f64>();
    }
    mean /= n as f64;
    // each unit is a / (1-p) with prob 1-p, else 0: variance a^2 p / (1-p)
    let sigma = (sq * p / (1.0 - p) / n as f64).sqrt();
    assert!(base > 0.0);
    assert!(
        (mean - base).abs() <= 3.0 * sigma,
        "mean {mean} vs {base}, sigma {sigma}"
    );
}

#[test]
fn svm_objective_non_increasing_in_epochs() {
    let mut r = rng::stream(3, &[]);
    let rows: Vec<Vec<f32>> = (0..120)
        .map(|i| {
            let c = (i % 3) as f32;
            vec![
                c + r.gen_range(-1.0..1.0),
                2.0 * c + r.gen_range(-1.5..1.5),
                r.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let labels: Vec<Veracity> = (0..120)
        .map(|i| Veracity::from_index(i % 3).unwrap())
        .collect();
    let lambda = 1e-2;
    let avg = |epochs: usize| -> f64 {
        (0..8u64)
            .map(|seed| {
                let m = baselines::svm_train(&rows, &labels, lambda, epochs, seed).unwrap();
                baselines::svm_objective(&m, &rows, &labels)
            })
            .sum::<f64>()
            / 8.0
    };
    let objectives: Vec<f64> = [1, 4, 16, 64].iter().map(|&e| avg(e)).collect();
    for w in objectives.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{objectives:?}");
    }
}
