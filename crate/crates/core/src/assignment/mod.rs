//! Combinatorial engines used by the filter: optimal assignment, ranked
//! assignment enumeration, and top-K selection over sums of arrays.

mod kmin;
mod munkres;
mod murty;

use std::fmt;

use thiserror::Error;

pub use kmin::{k_min_sum, Selection};
pub use munkres::munkres;
pub use murty::{murty_iterator, MurtyIter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("no assignment with finite cost exists")]
    Infeasible,
    #[error("array {0} is empty")]
    EmptyArray(usize),
    #[error("K must be at least 1")]
    ZeroBudget,
}

/// Dense row-major cost matrix. `+inf` marks forbidden pairs.
#[derive(Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "cost matrix rows must have equal length"
        );
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Sum of the selected entries in row order.
    pub fn cost_of(&self, row_to_col: &[usize]) -> f64 {
        row_to_col
            .iter()
            .enumerate()
            .map(|(r, &c)| self.get(r, c))
            .fold(0.0, |acc, v| acc + v)
    }
}

impl fmt::Debug for CostMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CostMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

/// Every row mapped to a distinct column.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

impl Assignment {
    pub(crate) fn from_cols(c: &CostMatrix, row_to_col: Vec<usize>) -> Self {
        let cost = c.cost_of(&row_to_col);
        Self { row_to_col, cost }
    }
}
