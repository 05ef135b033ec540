//! Top-K selections with the smallest sums, one index per array.
//!
//! Built recursively: the K smallest elements of the first array, then for
//! every further array each kept prefix is extended by every element and
//! the K smallest candidates are kept. A selection in the global top-K
//! always has its prefix in the prefix problem's top-K, so nothing is lost.

use std::cmp::Ordering;

use super::AssignmentError;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub sum: f64,
}

fn by_sum(a: &Selection, b: &Selection) -> Ordering {
    a.sum
        .total_cmp(&b.sum)
        .then_with(|| a.indices.cmp(&b.indices))
}

pub fn k_min_sum(arrays: &[Vec<f64>], k: usize) -> Result<Vec<Selection>, AssignmentError> {
    if k == 0 {
        return Err(AssignmentError::ZeroBudget);
    }
    if let Some(i) = arrays.iter().position(Vec::is_empty) {
        return Err(AssignmentError::EmptyArray(i));
    }
    let mut kept = vec![Selection {
        indices: Vec::new(),
        sum: 0.0,
    }];
    for array in arrays {
        let mut candidates = Vec::with_capacity(kept.len() * array.len());
        for prefix in &kept {
            for (j, &v) in array.iter().enumerate() {
                let mut indices = Vec::with_capacity(prefix.indices.len() + 1);
                indices.extend_from_slice(&prefix.indices);
                indices.push(j);
                candidates.push(Selection {
                    indices,
                    sum: prefix.sum + v,
                });
            }
        }
        candidates.sort_by(by_sum);
        candidates.truncate(k);
        kept = candidates;
    }
    Ok(kept)
}
