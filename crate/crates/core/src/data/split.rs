use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, TaskKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub folds: Option<usize>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            stratified: false,
            folds: None,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self, task: TaskKind) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.stratified && task != TaskKind::Classification {
            return Err(Error::Config(
                "stratified splitting requires a classification task".into(),
            ));
        }
        if matches!(self.folds, Some(k) if k < 2) {
            return Err(Error::Config("k-fold needs at least 2 folds".into()));
        }
        Ok(())
    }
}

/// Row indices grouped by class label (0 then 1).
fn class_groups(y: &[f64]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(), Vec::new()];
    for (i, &v) in y.iter().enumerate() {
        groups[usize::from(v != 0.0)].push(i);
    }
    groups
}

fn strata(dataset: &Dataset, stratified: bool) -> Result<Vec<Vec<usize>>> {
    if !stratified {
        return Ok(vec![(0..dataset.n_rows()).collect()]);
    }
    let groups = class_groups(&dataset.y);
    for (label, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::InvalidData(format!(
                "class {label} has {} member(s); stratification needs at least 2",
                g.len()
            )));
        }
    }
    Ok(groups)
}

/// Deterministic train/test split. Returns sorted `(train, test)` row indices.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate(dataset.task)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let groups = strata(dataset, spec.stratified)?;
    let mut remaining = ((dataset.n_rows() as f64) * spec.train_fraction).round() as usize;
    let last = groups.len() - 1;
    for (g, mut group) in groups.into_iter().enumerate() {
        group.shuffle(&mut rng);
        let share = if g == last {
            remaining
        } else {
            ((group.len() as f64) * spec.train_fraction).round() as usize
        };
        let n_train = share.clamp(1, group.len() - 1);
        remaining = remaining.saturating_sub(n_train);
        train.extend_from_slice(&group[..n_train]);
        test.extend_from_slice(&group[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Deterministic k-fold partition: one `(train, test)` pair per fold.
pub fn kfold(
    dataset: &Dataset,
    k: usize,
    stratified: bool,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > dataset.n_rows() {
        return Err(Error::Config(format!(
            "cannot make {k} folds from {} rows",
            dataset.n_rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; dataset.n_rows()];
    let mut offset = 0;
    for mut group in strata(dataset, stratified)? {
        group.shuffle(&mut rng);
        for (pos, &row) in group.iter().enumerate() {
            assignment[row] = (pos + offset) % k;
        }
        offset += group.len();
    }
    Ok((0..k)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..dataset.n_rows()).partition(|&i| assignment[i] == fold);
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;

    fn dataset(d: usize, positives: usize) -> Dataset {
        let x = FeatureMatrix::from_columns(vec![(0..d).map(|i| i as f64).collect()]).unwrap();
        let y = (0..d).map(|i| if i < positives { 1.0 } else { 0.0 }).collect();
        Dataset::new(x, y, vec!["x".into()], TaskKind::Classification).unwrap()
    }

    #[test]
    fn seventy_five_twenty_five() {
        let ds = dataset(100, 50);
        let (tr, te) = split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), te.len()), (75, 25));
    }

    #[test]
    fn stratified_keeps_positive_share() {
        let ds = dataset(100, 10);
        for seed in 0..20 {
            let spec = SplitSpec {
                stratified: true,
                seed,
                ..SplitSpec::default()
            };
            let (_, te) = split(&ds, &spec).unwrap();
            let pos = te.iter().filter(|&&i| ds.y[i] == 1.0).count();
            assert!(pos == 2 || pos == 3, "test positives {pos}");
            assert_eq!(te.len(), 25);
        }
    }

    #[test]
    fn same_seed_same_indices() {
        let ds = dataset(60, 20);
        let spec = SplitSpec {
            seed: 42,
            ..SplitSpec::default()
        };
        assert_eq!(split(&ds, &spec).unwrap(), split(&ds, &spec).unwrap());
    }

    #[test]
    fn stratification_rejects_singleton_class() {
        let ds = dataset(20, 1);
        let spec = SplitSpec {
            stratified: true,
            ..SplitSpec::default()
        };
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn folds_cover_every_row_once() {
        let ds = dataset(53, 11);
        let folds = kfold(&ds, 5, true, 3).unwrap();
        let mut seen = vec![0; 53];
        for (train, test) in &folds {
            assert_eq!(train.len() + test.len(), 53);
            for &i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}
