//! Agreement between labelings.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labelings of the same points. Identical
/// partitions score 1; independent ones score about 0.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // Both labelings are trivial (all one cluster or all singletons).
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_up_to_renaming() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [5, 5, 3, 3, 9, 9];
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn known_value() {
        // Every cell holds one point: index 0, row and column sums 2, expected 2*2/6.
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        let expected_index = 2.0 * 2.0 / 6.0;
        let want = (0.0 - expected_index) / (2.0 - expected_index);
        assert!((adjusted_rand_index(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }
}
