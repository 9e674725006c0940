use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::{FeatureTensor, FAILURE};

/// Row indices of a stratified train/test partition with cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub folds: Vec<Vec<usize>>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn train(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Training rows outside fold `k`, and fold `k` itself.
    pub fn cv_pair(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        let fit = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        (fit, self.folds[k].clone())
    }
}

/// Holds out `round(test_frac · n_c)` rows of each class, then deals the
/// remaining rows of each class round-robin into `folds` folds.
pub fn split_stratified(t: &FeatureTensor, test_frac: f64, folds: usize, seed: u64) -> Result<Split> {
    split_labels(t.labels()?, test_frac, folds, seed)
}

pub fn split_labels(labels: &[i8], test_frac: f64, folds: usize, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&test_frac) {
        return Err(Error::invalid(format!("test fraction {test_frac} outside [0,1)")));
    }
    if folds == 0 {
        return Err(Error::invalid("at least one fold required"));
    }
    let mut rng = crate::seed::rng(seed);
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        classes[usize::from(l != FAILURE)].push(i);
    }
    let mut out = Split { folds: vec![Vec::new(); folds], test: Vec::new() };
    let mut offset = 0;
    for (c, members) in classes.iter_mut().enumerate() {
        let name = if c == 0 { "failure" } else { "non-failure" };
        let n_test = (test_frac * members.len() as f64).round() as usize;
        if members.len() - n_test < folds {
            return Err(Error::data(format!(
                "{name} class has {} training rows, fewer than {folds} folds",
                members.len() - n_test
            )));
        }
        members.shuffle(&mut rng);
        out.test.extend_from_slice(&members[..n_test]);
        for &i in &members[n_test..] {
            out.folds[offset % folds].push(i);
            offset += 1;
        }
    }
    out.test.sort_unstable();
    for f in &mut out.folds {
        f.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, fails: usize) -> Vec<i8> {
        (0..n).map(|i| if i < fails { -1 } else { 1 }).collect()
    }

    #[test]
    fn exact_stratification() {
        let l = labels(100, 40);
        let s = split_labels(&l, 0.2, 5, 1).unwrap();
        let test_fail = s.test.iter().filter(|&&i| l[i] == -1).count();
        assert_eq!((test_fail, s.test.len() - test_fail), (8, 12));
        assert!(s.folds.iter().all(|f| f.len() == 16));
        let mut all = s.train();
        all.extend(&s.test);
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        for f in &s.folds {
            let k = f.iter().filter(|&&i| l[i] == -1).count();
            assert!((6..=7).contains(&k), "{k}");
        }
    }

    #[test]
    fn deterministic() {
        let l = labels(57, 20);
        assert_eq!(split_labels(&l, 0.2, 3, 9).unwrap(), split_labels(&l, 0.2, 3, 9).unwrap());
        assert_ne!(split_labels(&l, 0.2, 3, 9).unwrap(), split_labels(&l, 0.2, 3, 10).unwrap());
    }

    #[test]
    fn too_few_members() {
        assert!(split_labels(&labels(20, 3), 0.2, 5, 1).is_err());
    }
}
