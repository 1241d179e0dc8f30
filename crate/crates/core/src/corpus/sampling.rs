use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// Positions (into `dataset.instances`) of the labeled train instances in a
/// seeded random order. Every labeled-fraction subset is a prefix of it.
pub fn shuffled_labeled_order(dataset: &Dataset, seed: u64) -> Vec<usize> {
    let index = dataset.sentence_index();
    let mut order: Vec<usize> = dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| inst.gold_polarity.is_some() && index[inst.sentence_id.as_str()].split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Keeps `ceil(fraction * N)` of the N labeled train instances, chosen by a
/// seeded shuffle. Test instances and all sentences are kept unchanged.
pub fn sample_labeled_fraction(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!(
            "labeled fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let order = shuffled_labeled_order(dataset, seed);
    if order.is_empty() {
        return Err(Error::Argument(format!(
            "dataset `{}` has no labeled train instances",
            dataset.name
        )));
    }
    let keep = sample_size(order.len(), fraction);
    let mut chosen = vec![false; dataset.instances.len()];
    for &i in &order[..keep] {
        chosen[i] = true;
    }
    let index = dataset.sentence_index();
    let instances = dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(i, inst)| chosen[*i] || index[inst.sentence_id.as_str()].split == Split::Test)
        .map(|(_, inst)| inst.clone())
        .collect();
    Ok(Dataset {
        name: dataset.name.clone(),
        sentences: dataset.sentences.clone(),
        instances,
    })
}

pub(crate) fn sample_size(n: usize, fraction: f64) -> usize {
    // 0.1 * 30 lands a hair above 3 in floating point
    let raw = fraction * n as f64;
    ((raw - 1e-9).ceil() as usize).clamp(1, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::*;
    use crate::corpus::Polarity;
    use proptest::prelude::*;

    fn dataset(n_train: usize, n_test: usize) -> Dataset {
        let mut sentences = Vec::new();
        let mut instances = Vec::new();
        for i in 0..n_train + n_test {
            let split = if i < n_train { Split::Train } else { Split::Test };
            sentences.push(sentence(&format!("s{i}"), "good food", split));
            instances.push(instance(&format!("s{i}"), 5, "food", Some(Polarity::Positive)));
        }
        Dataset::new("R14", sentences, instances).unwrap()
    }

    fn train_ids(ds: &Dataset) -> Vec<String> {
        ds.instances_in(Split::Train)
            .into_iter()
            .map(|(s, _)| s.id.clone())
            .collect()
    }

    #[test]
    fn quarter_of_hundred() {
        let ds = dataset(100, 10);
        let sampled = sample_labeled_fraction(&ds, 0.25, 7).unwrap();
        assert_eq!(sampled.instances_in(Split::Train).len(), 25);
        assert_eq!(sampled.instances_in(Split::Test).len(), 10);
    }

    #[test]
    fn full_fraction_is_identity() {
        let ds = dataset(30, 5);
        assert_eq!(sample_labeled_fraction(&ds, 1.0, 3).unwrap(), ds);
    }

    #[test]
    fn same_seed_same_subset() {
        let ds = dataset(50, 0);
        let a = sample_labeled_fraction(&ds, 0.1, 11).unwrap();
        let b = sample_labeled_fraction(&ds, 0.1, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(train_ids(&a).len(), 5);
    }

    #[test]
    fn rejects_out_of_range_fraction() {
        let ds = dataset(10, 0);
        for f in [0.0, -0.5, 1.01, f64::NAN] {
            assert!(matches!(sample_labeled_fraction(&ds, f, 0), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn ceil_rule_is_exact_for_round_products() {
        assert_eq!(sample_size(30, 0.1), 3);
        assert_eq!(sample_size(100, 0.05), 5);
        assert_eq!(sample_size(7, 0.5), 4);
        assert_eq!(sample_size(3, 0.01), 1);
    }

    proptest! {
        #[test]
        fn smaller_fraction_is_subset(n in 1usize..80, seed in any::<u64>(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ds = dataset(n, 2);
            let small = train_ids(&sample_labeled_fraction(&ds, lo, seed).unwrap());
            let large = train_ids(&sample_labeled_fraction(&ds, hi, seed).unwrap());
            prop_assert!(small.iter().all(|id| large.contains(id)));
        }
    }
}
