//! Ranked enumeration of assignments (Murty's partitioning), exposed as an
//! iterator so that callers can pull one more-expensive solution at a time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::munkres::{munkres, solve};
use super::{Assignment, AssignmentError, CostMatrix};

#[derive(Debug, Clone)]
struct Node {
    solution: Assignment,
    /// Row -> column pairs every solution in this subspace must use.
    fixed: Vec<Option<usize>>,
    /// Pairs no solution in this subspace may use.
    excluded: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so that BinaryHeap pops the cheapest, then lexicographically
    // smallest, solution first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .solution
            .cost
            .total_cmp(&self.solution.cost)
            .then_with(|| other.solution.row_to_col.cmp(&self.solution.row_to_col))
    }
}

/// Yields every finite-cost assignment of a cost matrix in nondecreasing
/// cost order.
#[derive(Debug, Clone)]
pub struct MurtyIter {
    matrix: CostMatrix,
    queue: BinaryHeap<Node>,
}

pub fn murty_iterator(c: &CostMatrix) -> Result<MurtyIter, AssignmentError> {
    MurtyIter::new(c.clone())
}

impl MurtyIter {
    pub fn new(matrix: CostMatrix) -> Result<Self, AssignmentError> {
        let root = munkres(&matrix)?;
        let mut queue = BinaryHeap::new();
        queue.push(Node {
            solution: root,
            fixed: vec![None; matrix.rows()],
            excluded: Vec::new(),
        });
        Ok(Self { matrix, queue })
    }

    pub fn matrix(&self) -> &CostMatrix {
        &self.matrix
    }

    pub fn has_next(&self) -> bool {
        !self.queue.is_empty()
    }

    /// Next-best assignment. Calling this after exhaustion is a contract
    /// violation; check `has_next` first.
    pub fn get_next(&mut self) -> Assignment {
        self.next()
            .expect("get_next called on an exhausted Murty iterator")
    }

    fn constrained(&self, fixed: &[Option<usize>], excluded: &[(usize, usize)]) -> CostMatrix {
        let mut c = self.matrix.clone();
        for &(r, col) in excluded {
            c.set(r, col, f64::INFINITY);
        }
        for (r, f) in fixed.iter().enumerate() {
            if let Some(col) = *f {
                for j in 0..c.cols() {
                    if j != col {
                        c.set(r, j, f64::INFINITY);
                    }
                }
                for i in 0..c.rows() {
                    if i != r {
                        c.set(i, col, f64::INFINITY);
                    }
                }
            }
        }
        c
    }

    fn partition(&mut self, node: &Node) {
        let mut fixed = node.fixed.clone();
        for row in 0..self.matrix.rows() {
            if fixed[row].is_some() {
                continue;
            }
            let col = node.solution.row_to_col[row];
            let mut excluded = node.excluded.clone();
            excluded.push((row, col));
            let sub = self.constrained(&fixed, &excluded);
            if let Ok(sol) = solve(&sub) {
                let solution = Assignment::from_cols(&self.matrix, sol.row_to_col);
                if solution.cost.is_finite() {
                    self.queue.push(Node {
                        solution,
                        fixed: fixed.clone(),
                        excluded,
                    });
                }
            }
            fixed[row] = Some(col);
        }
    }
}

impl Iterator for MurtyIter {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let node = self.queue.pop()?;
        self.partition(&node);
        Some(node.solution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::oracle::{all_assignments, table_shaped};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_in_cost_order() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let mut it = murty_iterator(&c).unwrap();
        let a = it.get_next();
        assert_eq!((a.row_to_col, a.cost), (vec![1, 0], 4.0));
        assert!(it.has_next());
        let b = it.get_next();
        assert_eq!((b.row_to_col, b.cost), (vec![0, 1], 5.0));
        assert!(!it.has_next());
    }

    #[test]
    fn single_row_ranks_columns() {
        let c = CostMatrix::from_rows(&[vec![5.0, 1.0, 3.0]]);
        let got: Vec<(Vec<usize>, f64)> = murty_iterator(&c)
            .unwrap()
            .map(|a| (a.row_to_col, a.cost))
            .collect();
        assert_eq!(got, vec![(vec![1], 1.0), (vec![2], 3.0), (vec![0], 5.0)]);
    }

    #[test]
    fn zero_rows_yield_one_empty_assignment() {
        let c = CostMatrix::filled(0, 3, 1.0);
        let got: Vec<Assignment> = murty_iterator(&c).unwrap().collect();
        assert_eq!(got.len(), 1);
        assert!(got[0].row_to_col.is_empty());
    }

    #[test]
    fn exhausts_exactly_the_valid_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..60 {
            let rows = 1 + trial % 4;
            let meas = trial % 5;
            let c = table_shaped(rows, meas, || rng.random::<f64>());
            let expected = all_assignments(&c);
            let got: Vec<Assignment> = murty_iterator(&c).unwrap().collect();
            assert_eq!(got.len(), expected.len());
            for w in got.windows(2) {
                assert!(w[0].cost <= w[1].cost);
            }
            let mut got_sets: Vec<Vec<usize>> = got.iter().map(|a| a.row_to_col.clone()).collect();
            let mut exp_sets: Vec<Vec<usize>> = expected.iter().map(|e| e.0.clone()).collect();
            got_sets.sort();
            exp_sets.sort();
            assert_eq!(got_sets, exp_sets);
        }
    }

    #[test]
    fn first_yields_match_sorted_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let c = table_shaped(4, 6, || rng.random::<f64>());
            let expected = all_assignments(&c);
            let got: Vec<Assignment> = murty_iterator(&c).unwrap().take(8).collect();
            for (g, e) in got.iter().zip(&expected) {
                assert_eq!(g.cost, e.1);
                assert_eq!(g.row_to_col, e.0);
            }
        }
    }
}
