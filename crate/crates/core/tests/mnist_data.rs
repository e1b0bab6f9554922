//! Checks against the real MNIST files.

#[path = "support/mnist.rs"]
mod mnist;

use mygo::data::load_mnist_dir;
use mygo::nn::ModelInput;

const TRAIN_COUNTS: [usize; 10] = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];
const TEST_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];

#[test]
fn full_files_match_published_class_counts() {
    let (train, test) = load_mnist_dir(&mnist::data_root().join("mnist")).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.class_counts(), TRAIN_COUNTS);
    assert_eq!(test.class_counts(), TEST_COUNTS);
}

#[test]
fn desk_tasks_are_ascending_pairs_with_scaled_pixels() {
    let tasks = mnist::desk_tasks();
    assert_eq!(tasks.len(), 5);
    for (i, t) in tasks.iter().enumerate() {
        assert_eq!(t.classes, vec![2 * i, 2 * i + 1]);
        assert_eq!(t.train.len(), 1000);
        assert_eq!(t.test.len(), 500);
        for split in [&t.train, &t.test] {
            for (&g, &l) in split.global_labels.iter().zip(&split.local_labels) {
                assert_eq!(t.global_label(l), Some(g));
            }
            let ModelInput::Images { pixels, count } = split.input() else { panic!("expected images") };
            assert_eq!(count * 784, pixels.len());
            assert!(pixels.iter().all(|p| (-1.0..=1.0).contains(p)));
        }
    }
}

#[test]
fn desk_split_is_seeded() {
    let a = mnist::desk_tasks();
    let b = mnist::desk_tasks();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.train.examples, y.train.examples);
        assert_eq!(x.test.global_labels, y.test.global_labels);
    }
}
