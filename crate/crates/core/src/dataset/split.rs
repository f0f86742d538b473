use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded;

use super::Dataset;

/// Train/test partition of one dataset. Row indices refer to the source and
/// are ascending within each side.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub fraction: f64,
    pub stratify_on: String,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Per class, shuffles that class's rows with `seed` and sends
/// `floor(fraction * class_count)` of them to train; the rest go to test.
pub fn stratified_split(ds: &Dataset, fraction: f64, label: &str, seed: u64) -> Result<SplitPair> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let (train_rows, test_rows) = stratified_indices(ds.label(label)?, fraction, seed, true)?;
    Ok(SplitPair {
        train: ds.select_rows(&train_rows),
        test: ds.select_rows(&test_rows),
        fraction,
        stratify_on: label.to_string(),
        train_rows,
        test_rows,
    })
}

/// Index-level stratified draw; shared with the tuning subset sampler.
pub(crate) fn stratified_indices(
    y: &[u8],
    fraction: f64,
    seed: u64,
    require_both: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if rows.is_empty() && require_both {
            return Err(Error::SingleClass("stratified split"));
        }
        rows.shuffle(&mut rng);
        let take = (fraction * rows.len() as f64).floor() as usize;
        train.extend_from_slice(&rows[..take]);
        test.extend_from_slice(&rows[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labelled(neg: usize, pos: usize) -> Dataset {
        let n = neg + pos;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let mut y = vec![0u8; neg];
        y.extend(std::iter::repeat_n(1u8, pos));
        Dataset::from_rows(&["id"], &rows).unwrap().with_label("y", y).unwrap()
    }

    #[test]
    fn floor_rule_rare_class() {
        let s = stratified_split(&labelled(996, 4), 0.75, "y", 1).unwrap();
        assert_eq!(s.train.positives("y").unwrap(), 3);
        assert_eq!(s.train.rows() - 3, 747);
        assert_eq!(s.test.positives("y").unwrap(), 1);
        assert_eq!(s.test.rows() - 1, 249);
    }

    #[test]
    fn floor_rule_balanced() {
        let s = stratified_split(&labelled(4, 4), 0.75, "y", 9).unwrap();
        assert_eq!(s.train.positives("y").unwrap(), 3);
        assert_eq!(s.train.rows(), 6);
        assert_eq!(s.test.rows(), 2);
        assert_eq!(s.test.positives("y").unwrap(), 1);
    }

    #[test]
    fn bad_fraction_and_label() {
        let ds = labelled(5, 5);
        assert!(matches!(
            stratified_split(&ds, 1.0, "y", 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(stratified_split(&ds, 0.0, "y", 1).is_err());
        assert!(matches!(
            stratified_split(&ds, 0.5, "nope", 1),
            Err(Error::UnknownLabel(_))
        ));
        assert!(matches!(
            stratified_split(&labelled(5, 0), 0.5, "y", 1),
            Err(Error::SingleClass(_))
        ));
    }

    proptest! {
        #[test]
        fn split_is_stratified_partition(neg in 1usize..300, pos in 1usize..60,
                                         fraction in 0.05f64..0.95, seed in any::<u64>()) {
            let ds = labelled(neg, pos);
            let s = stratified_split(&ds, fraction, "y", seed).unwrap();
            prop_assert_eq!(s.train.rows() + s.test.rows(), ds.rows());
            let mut all: Vec<usize> = s.train_rows.iter().chain(&s.test_rows).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.rows()).collect::<Vec<_>>());
            // the id column identifies source rows
            for (k, &i) in s.train_rows.iter().enumerate() {
                prop_assert_eq!(s.train.value(k, 0), i as f64);
            }
            if s.train.rows() > 0 {
                let src = pos as f64 / ds.rows() as f64;
                let tr = s.train.positives("y").unwrap() as f64 / s.train.rows() as f64;
                prop_assert!((tr - src).abs() <= 1.0 / s.train.rows() as f64 + 1e-12);
            }
            let again = stratified_split(&ds, fraction, "y", seed).unwrap();
            prop_assert_eq!(again.train_rows, s.train_rows);
        }
    }
}
