//! Statistical checks on dream labels and memory selection.

use mygo::data::{split_tasks, Dataset, Example};
use mygo::memory::{sample_dreams, select_memory, train_gan, GanTrainConfig};
use mygo::nn::{ArchConfig, Modality, ModelState};
use mygo::rng::Rng;

/// Central interval holding at least 99% of Binomial(n, 1/2), from the exact pmf.
fn binomial_99(n: usize) -> (usize, usize) {
    let mut pmf = vec![0.0f64; n + 1];
    pmf[0] = 0.5f64.powi(n as i32);
    for k in 1..=n {
        pmf[k] = pmf[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    let (mut lo, mut tail) = (0, 0.0);
    while tail + pmf[lo] <= 0.005 {
        tail += pmf[lo];
        lo += 1;
    }
    (lo, n - lo)
}

#[test]
fn binomial_bounds_for_64_draws() {
    assert_eq!(binomial_99(64), (22, 42));
}

#[test]
fn dream_labels_stay_within_binomial_bounds() {
    let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let examples = labels.iter().map(|&y| Example::Image(vec![100 + 50 * y as u8; 784])).collect();
    let data = Dataset::new(Modality::Cv, 2, examples, labels).unwrap();
    let task = &split_tasks(&data, &data, 2).unwrap()[0];
    let mut rng = Rng::new(1);
    let model = ModelState::new(Modality::Cv, ArchConfig::default(), &mut rng).unwrap();
    let cfg = GanTrainConfig {
        epochs: 1,
        batch_size: 16,
        latent_dim: 8,
        generator_hidden: vec![16],
        discriminator_hidden: vec![16],
        ..GanTrainConfig::default()
    };
    let (memory, _) = train_gan(task, Modality::Cv, &model, &cfg, &mut rng).unwrap();
    let (lo, hi) = binomial_99(64);
    for seed in 0..20 {
        let dreams = sample_dreams(&memory, 64, &mut Rng::new(seed), None).unwrap();
        let ones = dreams.local_labels.iter().filter(|&&y| y == 1).count();
        assert!((lo..=hi).contains(&ones), "seed {seed}: {ones} of 64 labelled 1");
        assert_eq!(dreams.data.shape(), &[64, 1, 28, 28]);
        assert!(dreams.data.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn memory_selection_is_uniform() {
    let memories = [1usize, 2, 3, 4, 5];
    let mut rng = Rng::new(77);
    let draws = 10_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        counts[*select_memory(&memories, &mut rng).unwrap() - 1] += 1;
    }
    let expected = draws as f64 / 5.0;
    let mut chi2 = 0.0;
    for &c in &counts {
        let freq = c as f64 / draws as f64;
        assert!((0.17..=0.23).contains(&freq), "counts {counts:?}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 99.9% quantile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 18.467, "chi-square {chi2} for {counts:?}");
}
