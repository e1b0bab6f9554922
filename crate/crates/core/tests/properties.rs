use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use mygo::autograd::Tape;
use mygo::config::ExperimentConfig;
use mygo::container::{Container, ContainerKind};
use mygo::data::{batch_iter, build_vocab, split_tasks, tokenize, Dataset, Example};
use mygo::eval::{average_accuracy, AccuracyMatrix};
use mygo::nn::Modality;
use mygo::report::{matrix_csv, percent};
use mygo::rng::Rng;
use mygo::Tensor;

fn shape_and_values() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
    prop::collection::vec(1usize..4, 1..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        (Just(shape), prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))
    })
}

/// Images whose class is `labels[i]`; pixel content is irrelevant here.
fn toy_dataset(classes: usize, labels: &[usize]) -> Dataset {
    let examples = labels.iter().map(|&y| Example::Image(vec![y as u8; 784])).collect();
    Dataset::new(Modality::Cv, classes, examples, labels.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mse_is_zero_on_itself_and_symmetric((shape, a, b) in shape_and_values()) {
        let mut t = Tape::new();
        let va = t.input(&shape, a.clone(), false).unwrap();
        let va2 = t.input(&shape, a, false).unwrap();
        let vb = t.input(&shape, b, false).unwrap();
        let same = t.mse(va, va2).unwrap();
        prop_assert_eq!(t.item(same), 0.0);
        let ab = t.mse(va, vb).unwrap();
        let ba = t.mse(vb, va).unwrap();
        prop_assert_eq!(t.item(ab), t.item(ba));
    }

    #[test]
    fn cross_entropy_is_non_negative_and_ln_k_at_uniform(
        rows in 1usize..5,
        k in 2usize..8,
        level in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let labels: Vec<usize> = (0..rows).map(|_| rng.below(k)).collect();
        let mut t = Tape::new();
        let uniform = t.input(&[rows, k], vec![level; rows * k], false).unwrap();
        let ce = t.cross_entropy(uniform, &labels).unwrap();
        prop_assert!((t.item(ce) - (k as f64).ln()).abs() < 1e-12);
        let random = t.input(&[rows, k], rng.normals(rows * k), false).unwrap();
        let ce = t.cross_entropy(random, &labels).unwrap();
        prop_assert!(t.item(ce) >= 0.0);
    }

    #[test]
    fn reusing_a_value_accumulates_its_gradient((shape, x, _) in shape_and_values()) {
        let mut t1 = Tape::new();
        let v = t1.input(&shape, x.clone(), true).unwrap();
        let twice = t1.add(v, v).unwrap();
        let s = t1.sum(twice);
        t1.backward(s).unwrap();
        let mut t2 = Tape::new();
        let w = t2.input(&shape, x, true).unwrap();
        let scaled = t2.scale(w, 2.0);
        let s2 = t2.sum(scaled);
        t2.backward(s2).unwrap();
        prop_assert_eq!(t1.grad(v).unwrap(), t2.grad(w).unwrap());
    }

    #[test]
    fn averages_match_a_brute_force_mean(rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 5), 1..6)) {
        let stair: Vec<Vec<f64>> = rows.iter().enumerate().map(|(j, r)| r[..(j + 1).min(5)].to_vec()).collect();
        let stair: Vec<Vec<f64>> = stair.into_iter().take(5).collect();
        let m = AccuracyMatrix::from_rows(stair.clone()).unwrap();
        for (row, avg) in stair.iter().zip(m.averages()) {
            let mut total = 0.0;
            for v in row {
                total += v;
            }
            prop_assert!((avg - total / row.len() as f64).abs() < 1e-12);
            prop_assert_eq!(average_accuracy(row).unwrap(), avg);
        }
        // The CSV average column agrees with the row mean after rounding.
        let csv = matrix_csv(&m);
        for (line, row) in csv.lines().skip(1).zip(&stair) {
            let cells: Vec<&str> = line.split(',').collect();
            let avg: f64 = cells.last().unwrap().parse().unwrap();
            prop_assert!((avg - 100.0 * average_accuracy(row).unwrap()).abs() <= 0.005 + 1e-9);
            let filled = cells[1..cells.len() - 1].iter().filter(|c| !c.is_empty()).count();
            prop_assert_eq!(filled, row.len());
        }
    }

    #[test]
    fn percentages_keep_two_decimals(v in 0.0f64..=1.0) {
        let s = percent(v);
        let (_, frac) = s.split_once('.').unwrap();
        prop_assert_eq!(frac.len(), 2);
        prop_assert!((s.parse::<f64>().unwrap() - 100.0 * v).abs() <= 0.005 + 1e-9);
    }

    #[test]
    fn tasks_partition_classes_and_examples(
        pairs in 1usize..5,
        per_class in prop::collection::vec(2usize..6, 8),
    ) {
        let classes = 2 * pairs;
        let labels: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat(c).take(per_class[c])).collect();
        let train = toy_dataset(classes, &labels);
        let test = toy_dataset(classes, &labels);
        let tasks = split_tasks(&train, &test, 2).unwrap();
        prop_assert_eq!(tasks.len(), pairs);
        let mut seen = BTreeSet::new();
        let mut total = 0;
        for (i, t) in tasks.iter().enumerate() {
            prop_assert_eq!(t.task_id, i + 1);
            prop_assert_eq!(&t.classes, &vec![2 * i, 2 * i + 1]);
            for &c in &t.classes {
                prop_assert!(seen.insert(c));
            }
            total += t.train.len();
            for (j, (e, &local)) in t.train.examples.iter().zip(&t.train.local_labels).enumerate() {
                let global = t.global_label(local).unwrap();
                prop_assert_eq!(t.train.global_labels[j], global);
                prop_assert_eq!(e, &Example::Image(vec![global as u8; 784]));
                prop_assert_eq!(t.local_label(global), Some(local));
            }
        }
        prop_assert_eq!(seen.len(), classes);
        prop_assert_eq!(total, train.len());
    }

    #[test]
    fn subsampling_is_balanced_and_seeded(per_class in 1usize..5, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let data = toy_dataset(3, &labels);
        let a = data.subsample(per_class, &mut Rng::new(seed)).unwrap();
        let b = data.subsample(per_class, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(a.class_counts(), vec![per_class; 3]);
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert!(data.subsample(21, &mut Rng::new(seed)).is_err());
    }

    #[test]
    fn an_epoch_visits_every_example_once(n in 4usize..40, batch in 1usize..9, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let data = toy_dataset(2, &labels);
        let tasks = split_tasks(&data, &data, 2).unwrap();
        let it = batch_iter(&tasks[0].train, batch, &mut Rng::new(seed), false).unwrap();
        let expected = it.batch_count();
        let batches: Vec<_> = it.collect();
        prop_assert_eq!(batches.len(), expected);
        let mut idx: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        idx.sort_unstable();
        prop_assert_eq!(idx, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn containers_round_trip(
        tensors in prop::collection::vec(shape_and_values(), 0..4),
        meta in prop::collection::vec(("[a-z_]{1,8}", "[ -~]{0,12}"), 0..4),
    ) {
        let mut c = Container::new(ContainerKind::Memory);
        for (k, v) in &meta {
            c.meta(k, v);
        }
        for (i, (shape, values, _)) in tensors.into_iter().enumerate() {
            c.tensors.push((format!("t{i}"), Tensor::new(&shape, values, false).unwrap()));
        }
        let bytes = c.encode();
        prop_assert_eq!(bytes.len(), c.encoded_len());
        prop_assert_eq!(Container::decode(&bytes).unwrap(), c);
    }

    #[test]
    fn vocab_orders_by_frequency_then_token(texts in prop::collection::vec("[a-e ]{0,20}", 1..10)) {
        let vocab = build_vocab(&texts, 1).unwrap();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in &texts {
            for tok in tokenize(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        prop_assert_eq!(vocab.len(), counts.len() + 1);
        let ordered: Vec<&str> = (1..vocab.len()).map(|i| vocab.token(i).unwrap()).collect();
        for w in ordered.windows(2) {
            let (a, b) = (counts[w[0]], counts[w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]), "{:?} before {:?}", w[0], w[1]);
        }
        prop_assert_eq!(vocab.id("zzz"), 0);
    }

    #[test]
    fn resolved_configs_reparse_to_themselves(seed in any::<u64>(), lr in 1e-4f64..1e-1, epochs in 1usize..20) {
        let cfg = ExperimentConfig::from_text(
            &format!("seed = {seed}\nlr_fast = {lr}\nlr_slow = {}\ngan_epochs = {epochs}\n", lr / 10.0),
            &[],
        )
        .unwrap();
        let text: String = cfg.to_map().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let again = ExperimentConfig::from_text(&text, &[]).unwrap();
        prop_assert_eq!(again.to_map(), cfg.to_map());
    }
}
