use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Split sizes: validation and test get `floor(f * n)`, train gets the rest.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    const NAMES: [&str; 3] = ["train", "val", "test"];
    for (f, name) in fractions.iter().zip(NAMES) {
        if !(f.is_finite() && *f > 0.0) {
            return Err(Error::config(
                "split",
                format!("{name} fraction must be positive, got {f}"),
            ));
        }
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "split",
            format!("fractions must sum to 1, got {total}"),
        ));
    }
    // small slack so that e.g. 0.2 * 10 is not floored to 1
    let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
    let val = floor(fractions[1]);
    let test = floor(fractions[2]);
    let train = n.saturating_sub(val + test);
    let sizes = [train, val, test];
    for (s, name) in sizes.iter().zip(NAMES) {
        if *s == 0 {
            return Err(Error::config(
                "split",
                format!("{name} split would be empty for {n} documents"),
            ));
        }
    }
    Ok(sizes)
}

/// Deterministic document-level partition into train/val/test.
///
/// Items are shuffled with a seeded ChaCha8 stream, cut by [`split_sizes`],
/// and each split keeps the original relative order.
pub fn split<T: Clone>(
    items: &[T],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let [train, val, _] = split_sizes(items.len(), fractions)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| items[i].clone()).collect::<Vec<T>>()
    };
    Ok((
        pick(&order[..train]),
        pick(&order[train..train + val]),
        pick(&order[train + val..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_floor_rule() {
        assert_eq!(split_sizes(10, [0.6, 0.2, 0.2]).unwrap(), [6, 2, 2]);
        assert_eq!(split_sizes(11, [0.6, 0.2, 0.2]).unwrap(), [7, 2, 2]);
        assert_eq!(
            split_sizes(300, [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]).unwrap(),
            [200, 50, 50]
        );
        // brute force: every n, sizes sum to n and val/test are floors
        for n in 3..200 {
            if let Ok(s) = split_sizes(n, [0.5, 0.3, 0.2]) {
                assert_eq!(s.iter().sum::<usize>(), n);
                assert_eq!(s[1], (3 * n) / 10);
                assert_eq!(s[2], (2 * n) / 10);
            }
        }
    }

    #[test]
    fn rejects_degenerate_fractions() {
        assert!(split_sizes(10, [1.0, 0.0, 0.0]).is_err());
        assert!(split_sizes(10, [0.5, 0.3, 0.3]).is_err());
        assert!(split_sizes(3, [0.8, 0.1, 0.1]).is_err());
        let err = split_sizes(10, [1.0, 0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("split"));
    }

    #[test]
    fn partition_is_deterministic_and_disjoint() {
        let items: Vec<u32> = (0..50).collect();
        let a = split(&items, [0.6, 0.2, 0.2], 9).unwrap();
        let b = split(&items, [0.6, 0.2, 0.2], 9).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<u32> = a.0.iter().chain(&a.1).chain(&a.2).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        let c = split(&items, [0.6, 0.2, 0.2], 10).unwrap();
        assert_ne!(a, c);
    }
}
