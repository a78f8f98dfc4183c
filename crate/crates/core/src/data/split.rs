use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Trip-atomic assignment of trips to train/validation/test.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl SplitManifest {
    pub fn split_of(&self, trip: &str) -> Option<Split> {
        let has = |v: &[String]| v.iter().any(|t| t == trip);
        if has(&self.train) {
            Some(Split::Train)
        } else if has(&self.val) {
            Some(Split::Val)
        } else if has(&self.test) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn trips(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Shuffles the distinct trip ids with `seed` and cuts them by `ratios`
/// using largest-remainder rounding. Every split with a positive ratio gets
/// at least one trip.
pub fn split_by_trip<'a>(trips: impl IntoIterator<Item = &'a str>, ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || libm::fabs(sum - 1.0) > 1e-9 {
        return Err(Error::invalid("split_by_trip", format!("ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut ids: Vec<String> = trips.into_iter().collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
    let n = ids.len();
    let wanted = ratios.iter().filter(|r| **r > 0.0).count();
    if n < wanted {
        return Err(Error::TooFewTrips { trips: n, splits: wanted });
    }
    ids.shuffle(&mut rng::stream(seed, &[0x5370_6c69_74]));

    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - counts[b] as f64).total_cmp(&(exact[a] - counts[a] as f64)).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    for i in 0..3 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], usize::MAX - j)).expect("three splits");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    let test = ids.split_off(counts[0] + counts[1]);
    let val = ids.split_off(counts[0]);
    Ok(SplitManifest { train: ids, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_trips() {
        let names: Vec<String> = (0..10).map(|i| format!("trip{i}")).collect();
        let m = split_by_trip(names.iter().map(|s| s.as_str()), [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (8, 1, 1));
        let again = split_by_trip(names.iter().rev().map(|s| s.as_str()), [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!(m, again);
        for n in &names {
            assert!(m.split_of(n).is_some());
        }
        assert!(matches!(
            split_by_trip(["a", "b"], [0.8, 0.1, 0.1], 0),
            Err(Error::TooFewTrips { trips: 2, splits: 3 })
        ));
        let three = split_by_trip(["a", "b", "c"], [0.8, 0.1, 0.1], 0).unwrap();
        assert_eq!((three.train.len(), three.val.len(), three.test.len()), (1, 1, 1));
    }
}
