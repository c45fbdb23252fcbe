use std::path::Path;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsl_core::encoder::{EncoderParams, PointSet};
use zsl_core::eval::{accuracy, harmonic_mean, Aggregation};
use zsl_core::losses::{
    histogram, loss_hubness, loss_s2f, loss_transductive, loss_unbias, LabelSpace, LossWeights, Mode,
};
use zsl_core::net::{AdamState, Checkpoint, Activation, Dims, Direction, ProjectionNet};
use zsl_core::store::{make_synthetic, read_embeddings, read_semantics, write_embeddings, write_semantics, SyntheticSpec};

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_seen_classes: 3,
        num_unseen_classes: 2,
        feature_dim: 5,
        semantic_dim: 3,
        instances_per_class: 6,
        seed,
        ..Default::default()
    }
}

proptest! {
    #[test]
    fn harmonic_mean_is_bounded(a in 1e-6f64..=100.0, b in 1e-6f64..=100.0) {
        let h = harmonic_mean(a, b).unwrap();
        prop_assert!(h >= a.min(b) * (1.0 - 1e-12));
        prop_assert!(h <= (a + b) / 2.0 * (1.0 + 1e-12));
        prop_assert_eq!(h, harmonic_mean(b, a).unwrap());
        prop_assert_eq!(harmonic_mean(a, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn histogram_counts_sum_to_batch(labels in prop::collection::vec(0usize..7, 0..200)) {
        let space: Vec<usize> = (0..7).collect();
        let h = histogram(&labels, &space).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<usize>(), labels.len());
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>(), hidden in 1usize..9, relu in any::<bool>()) {
        let act = if relu { Activation::Relu } else { Activation::Tanh };
        let net = ProjectionNet::init(Direction::F2S, Dims::new(4, hidden, 3), act, seed).unwrap();
        let adam = AdamState::new(&net, 1e-3);
        let text = Checkpoint::new(&net, Some(&adam)).to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        prop_assert_eq!(back.net().unwrap(), net);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>()) {
        let (data, table) = make_synthetic(&small_spec(seed)).unwrap();
        let mut sem = Vec::new();
        write_semantics(&mut sem, &table).unwrap();
        let table2 = read_semantics(sem.as_slice(), Path::new("mem")).unwrap();
        prop_assert_eq!(table2.vectors(), table.vectors());
        let mut emb = Vec::new();
        write_embeddings(&mut emb, &data, &table).unwrap();
        let data2 = read_embeddings(emb.as_slice(), Path::new("mem"), &table2).unwrap();
        prop_assert_eq!(data2.features(), data.features());
        prop_assert_eq!(data2.labels(), data.labels());
        prop_assert_eq!(data2.splits(), data.splits());
    }

    #[test]
    fn batch_losses_ignore_row_order(seed in any::<u64>()) {
        let (data, table) = make_synthetic(&small_spec(seed)).unwrap();
        let net = ProjectionNet::init(Direction::S2F, Dims::new(3, 6, 5), Activation::Tanh, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let a = data.rows(&order);
        order.shuffle(&mut rng);
        let b = data.rows(&order);

        let w = LossWeights { alpha1: 0.5, alpha2: 0.3, alpha3: 0.2, ..Default::default() };
        for mode in [Mode::Zsl, Mode::Gzsl] {
            let la = loss_transductive(&a, &table, &net, &w, mode, LabelSpace::All).unwrap();
            let lb = loss_transductive(&b, &table, &net, &w, mode, LabelSpace::All).unwrap();
            prop_assert!((la.total - lb.total).abs() < 1e-12);
            prop_assert!((la.discarded_fraction - lb.discarded_fraction).abs() < 1e-15);
        }
        prop_assert!((loss_hubness(&a, &table, &net, LabelSpace::All).unwrap()
            - loss_hubness(&b, &table, &net, LabelSpace::All).unwrap()).abs() < 1e-12);
        prop_assert!((loss_unbias(&a, &table, &net).unwrap() - loss_unbias(&b, &table, &net).unwrap()).abs() < 1e-12);

        let seen = data.indices(&[zsl_core::store::Split::SeenTrain]);
        let labels: Vec<usize> = seen.iter().map(|&i| data.labels()[i].unwrap()).collect();
        let mut perm: Vec<usize> = (0..seen.len()).collect();
        perm.shuffle(&mut rng);
        let la = loss_s2f(&data.rows(&seen), &labels, &table, &net, 1e-3).unwrap();
        let seen_p: Vec<usize> = perm.iter().map(|&i| seen[i]).collect();
        let labels_p: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let lb = loss_s2f(&data.rows(&seen_p), &labels_p, &table, &net, 1e-3).unwrap();
        prop_assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn encoder_ignores_point_order(seed in any::<u64>(), n in 1usize..60) {
        let enc = EncoderParams::init(16, 8, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let base = enc.encode(&PointSet::new(pts.clone()).unwrap()).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled = enc.encode(&PointSet::new(pts.select(Axis(0), &order)).unwrap()).unwrap();
        prop_assert_eq!(base, shuffled);
    }

    #[test]
    fn per_class_mean_ignores_imbalance(correct_a in 0usize..5, total_a in 5usize..10, factor in 1usize..6) {
        // class 0 keeps its accuracy when replicated `factor` times; class 1 is always right
        let make = |reps: usize| {
            let mut p = Vec::new();
            let mut t = Vec::new();
            for _ in 0..reps {
                for i in 0..total_a {
                    t.push(0);
                    p.push(if i < correct_a { 0 } else { 1 });
                }
            }
            for _ in 0..3 {
                t.push(1);
                p.push(1);
            }
            (p, t)
        };
        let (p1, t1) = make(1);
        let (pf, tf) = make(factor);
        let a = accuracy(&p1, &t1).unwrap().get(Aggregation::PerClassMean);
        let b = accuracy(&pf, &tf).unwrap().get(Aggregation::PerClassMean);
        prop_assert!((a - b).abs() < 1e-12);
    }
}
