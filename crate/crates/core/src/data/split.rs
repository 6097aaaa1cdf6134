use log::info;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::manifest::{Label, Manifest, Origin, Record, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_ratio: 0.7,
            seed: 0,
        }
    }
}

/// Per class, `floor(train_ratio * n)` records go to train after a seeded
/// shuffle; the rest go to test.
pub fn stratified_split(manifest: &Manifest, spec: SplitSpec) -> Result<Manifest> {
    if !(spec.train_ratio > 0.0 && spec.train_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "train ratio {} outside (0, 1)",
            spec.train_ratio
        )));
    }
    if manifest.records.iter().any(|r| r.origin.is_some()) {
        return Err(Error::Dataset(
            "split must happen before augmentation".into(),
        ));
    }
    let mut out = manifest.clone();
    let mut rng = Rng::new(spec.seed);
    for label in Label::ALL {
        let mut idx: Vec<usize> = out
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 2 {
            return Err(Error::Dataset(format!(
                "class `{label}` has {} record(s); stratified split needs at least 2",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n_train = (spec.train_ratio * idx.len() as f64).floor() as usize;
        for (k, &i) in idx.iter().enumerate() {
            out.records[i].split = Some(if k < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(out)
}

/// Augment the minority training class until both classes have equal counts,
/// then grow each class to `multiplier` times its balanced size. Augmented
/// copies are drawn from randomly chosen original training records of the same
/// class; the test split is never touched.
pub fn balance_train_set(
    manifest: &Manifest,
    cfg: &AugmentConfig,
    rng: &mut Rng,
    multiplier: usize,
) -> Result<Manifest> {
    if multiplier < 1 {
        return Err(Error::invalid("augmentation multiplier must be at least 1"));
    }
    cfg.validate()?;
    if manifest.records.iter().any(|r| r.split.is_none()) {
        return Err(Error::Dataset("balance requires an assigned split".into()));
    }
    let sources: Vec<Vec<usize>> = Label::ALL
        .iter()
        .map(|&label| {
            manifest
                .records
                .iter()
                .enumerate()
                .filter(|(_, r)| {
                    r.label == label && r.split == Some(Split::Train) && r.origin.is_none()
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    if sources.iter().any(|s| s.is_empty()) {
        return Err(Error::Dataset(
            "both classes need at least one training record to balance".into(),
        ));
    }
    let mut out = manifest.clone();
    let counts = out.split_counts(Split::Train);
    let target = counts[0].max(counts[1]);
    for label in Label::ALL {
        let have = counts[label as usize];
        let want = target * multiplier;
        let pool = &sources[label as usize];
        for _ in have..want {
            let src = pool[rng.below(pool.len())];
            out.records.push(Record {
                path: manifest.records[src].path.clone(),
                label,
                split: Some(Split::Train),
                origin: Some(Origin {
                    source: src,
                    seed: rng.next_u64(),
                }),
            });
        }
    }
    if out.records.len() > manifest.records.len() {
        out.augment = Some(cfg.clone());
    }
    let [n, t] = out.split_counts(Split::Train);
    info!(
        "balanced training set: {n} normal / {t} tumor ({} augmented copies)",
        out.records.len() - manifest.records.len()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(normal: usize, tumor: usize) -> Manifest {
        let mut records = Vec::new();
        for (label, n) in [(Label::Normal, normal), (Label::Tumor, tumor)] {
            for i in 0..n {
                records.push(Record {
                    path: format!("{label}/{i}.png").into(),
                    label,
                    split: None,
                    origin: None,
                });
            }
        }
        Manifest::new(records)
    }

    #[test]
    fn brain_split_sizes() {
        let m = stratified_split(&fake(1500, 1500), SplitSpec::default()).unwrap();
        assert_eq!(m.split_counts(Split::Test), [450, 450]);
        assert_eq!(m.split_counts(Split::Train), [1050, 1050]);
    }

    #[test]
    fn lung_split_sizes() {
        let m = stratified_split(&fake(416, 681), SplitSpec::default()).unwrap();
        assert_eq!(m.split_counts(Split::Train), [291, 476]);
        let test: usize = m.split_counts(Split::Test).iter().sum();
        assert!((test as i64 - 329).abs() <= 1, "test size {test}");
    }

    #[test]
    fn split_is_deterministic() {
        let spec = SplitSpec {
            train_ratio: 0.7,
            seed: 5,
        };
        let a = stratified_split(&fake(20, 30), spec).unwrap();
        let b = stratified_split(&fake(20, 30), spec).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&fake(20, 30), SplitSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn singleton_class_rejected() {
        assert!(stratified_split(&fake(1, 10), SplitSpec::default()).is_err());
    }

    #[test]
    fn lung_balancing() {
        let m = stratified_split(&fake(416, 681), SplitSpec::default()).unwrap();
        let test_before = m.split_counts(Split::Test);
        let b = balance_train_set(&m, &AugmentConfig::default(), &mut Rng::new(1), 1).unwrap();
        assert_eq!(b.split_counts(Split::Train), [476, 476]);
        assert_eq!(b.len() - m.len(), 185);
        assert_eq!(b.split_counts(Split::Test), test_before);
        for r in b.records.iter().filter(|r| r.origin.is_some()) {
            assert_eq!(r.split, Some(Split::Train));
            let src = &b.records[r.origin.unwrap().source];
            assert_eq!(src.split, Some(Split::Train));
            assert_eq!(src.label, r.label);
        }
    }

    #[test]
    fn balanced_set_unchanged_and_multiplier() {
        let m = stratified_split(&fake(1500, 1500), SplitSpec::default()).unwrap();
        let cfg = AugmentConfig::default();
        let same = balance_train_set(&m, &cfg, &mut Rng::new(2), 1).unwrap();
        assert_eq!(same, m);
        let doubled = balance_train_set(&m, &cfg, &mut Rng::new(2), 2).unwrap();
        assert_eq!(doubled.split_counts(Split::Train), [2100, 2100]);
        assert!(balance_train_set(&m, &cfg, &mut Rng::new(2), 0).is_err());
        assert!(balance_train_set(&fake(3, 3), &cfg, &mut Rng::new(2), 1).is_err());
    }
}
