//! Merging factors into product hypotheses, the independence test, and
//! splitting a factor into two.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::assignment::{k_min_sum, AssignmentError};
use crate::model::{
    normalize, Factor, FactorId, FilterState, HypoSignature, Hypothesis, LabeledTrack,
    MeasurementId, ModelError, NodeId, TrackLabel,
};

use super::GateMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("label {0} appears in more than one factor")]
    LabelCollision(TrackLabel),
    #[error("nothing to merge")]
    NoFactors,
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Top-`cap` product hypotheses of the given factors, as a new factor.
pub fn merge_factors(fs: &[Factor], cap: usize, id: FactorId) -> Result<Factor, MergeError> {
    merge_factors_traced(fs, cap, id).map(|(f, _)| f)
}

/// [`merge_factors`] that also reports the pedigree nodes of the hypotheses
/// combined into each product.
pub fn merge_factors_traced(
    fs: &[Factor],
    cap: usize,
    id: FactorId,
) -> Result<(Factor, Vec<Vec<NodeId>>), MergeError> {
    if fs.is_empty() {
        return Err(MergeError::NoFactors);
    }
    let mut seen = BTreeSet::new();
    for f in fs {
        for &l in f.label_set() {
            if !seen.insert(l) {
                return Err(MergeError::LabelCollision(l));
            }
        }
    }
    let arrays: Vec<Vec<f64>> = fs
        .iter()
        .map(|f| f.hypotheses().iter().map(|h| -h.log_weight).collect())
        .collect();
    let picks = k_min_sum(&arrays, cap)?;
    let mut hyps = Vec::with_capacity(picks.len());
    let mut parents = Vec::with_capacity(picks.len());
    for s in &picks {
        let mut tracks = Vec::new();
        let mut nodes = Vec::with_capacity(fs.len());
        for (f, &i) in fs.iter().zip(&s.indices) {
            let h = &f.hypotheses()[i];
            tracks.extend(h.tracks.iter().cloned());
            nodes.push(h.node);
        }
        hyps.push(Hypothesis::from_log_weight(-s.sum, tracks));
        parents.push(nodes);
    }
    Ok((normalize(&Factor::new(id, hyps))?, parents))
}

/// Splits the factor's labels into those that gate any of the group's
/// measurements and those that gate none.
pub fn partition_gated(
    f: &Factor,
    meas_in_group: &BTreeSet<MeasurementId>,
    gm: &GateMatrix,
) -> (BTreeSet<TrackLabel>, BTreeSet<TrackLabel>) {
    f.label_set()
        .iter()
        .copied()
        .partition(|&l| gm.label_gates_any(l, meas_in_group))
}

/// Weight table over (gated-side, non-gated-side) sub-hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub row_labels: Vec<HypoSignature>,
    pub col_labels: Vec<HypoSignature>,
    pub p: DMatrix<f64>,
    row_tracks: Vec<Vec<LabeledTrack>>,
    col_tracks: Vec<Vec<LabeledTrack>>,
    row_nodes: Vec<Vec<NodeId>>,
    col_nodes: Vec<Vec<NodeId>>,
}

impl JointTable {
    pub fn row_marginals(&self) -> Vec<f64> {
        self.p.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_marginals(&self) -> Vec<f64> {
        self.p.column_iter().map(|c| c.sum()).collect()
    }
}

struct Side {
    labels: Vec<HypoSignature>,
    tracks: Vec<Vec<LabeledTrack>>,
    nodes: Vec<Vec<NodeId>>,
    slot: HashMap<HypoSignature, usize>,
}

impl Side {
    fn new() -> Self {
        Self {
            labels: Vec::new(),
            tracks: Vec::new(),
            nodes: Vec::new(),
            slot: HashMap::new(),
        }
    }

    fn index(&mut self, tracks: Vec<LabeledTrack>, node: NodeId) -> usize {
        let sig = HypoSignature(
            tracks
                .iter()
                .map(|t| (t.label, t.density_index.clone()))
                .collect(),
        );
        let i = *self.slot.entry(sig.clone()).or_insert_with(|| {
            self.labels.push(sig);
            self.tracks.push(tracks);
            self.nodes.push(Vec::new());
            self.labels.len() - 1
        });
        if !self.nodes[i].contains(&node) {
            self.nodes[i].push(node);
        }
        i
    }
}

/// Restricts every hypothesis to each side of the partition and sums the
/// weights of hypotheses that land in the same (row, column) cell.
pub fn build_joint_table(
    f: &Factor,
    gated: &BTreeSet<TrackLabel>,
    nongated: &BTreeSet<TrackLabel>,
) -> JointTable {
    let mut rows = Side::new();
    let mut cols = Side::new();
    let mut cells = Vec::with_capacity(f.len());
    for h in f.hypotheses() {
        let (g, n): (Vec<LabeledTrack>, Vec<LabeledTrack>) = h
            .tracks
            .iter()
            .cloned()
            .partition(|t| gated.contains(&t.label));
        debug_assert!(n.iter().all(|t| nongated.contains(&t.label)));
        let i = rows.index(g, h.node);
        let j = cols.index(n, h.node);
        cells.push((i, j, h.weight()));
    }
    let mut p = DMatrix::zeros(rows.labels.len(), cols.labels.len());
    for (i, j, w) in cells {
        p[(i, j)] += w;
    }
    JointTable {
        row_labels: rows.labels,
        col_labels: cols.labels,
        p,
        row_tracks: rows.tracks,
        col_tracks: cols.tracks,
        row_nodes: rows.nodes,
        col_nodes: cols.nodes,
    }
}

/// Largest absolute difference between the table and the outer product of
/// its marginals.
pub fn independence_epsilon(t: &JointTable) -> f64 {
    let pr = t.row_marginals();
    let pc = t.col_marginals();
    let mut eps: f64 = 0.0;
    for (i, a) in pr.iter().enumerate() {
        for (j, b) in pc.iter().enumerate() {
            eps = eps.max((t.p[(i, j)] - a * b).abs());
        }
    }
    eps
}

/// The two marginal factors of a table: gated side first.
pub fn split_factor(t: &JointTable, gated_id: FactorId, nongated_id: FactorId) -> (Factor, Factor) {
    let (g, n, _) = split_factor_traced(t, gated_id, nongated_id);
    (g, n)
}

/// Split factors plus, for each of their hypotheses, the source nodes:
/// `(gated, nongated, (gated_parents, nongated_parents))`.
#[allow(clippy::type_complexity)]
pub fn split_factor_traced(
    t: &JointTable,
    gated_id: FactorId,
    nongated_id: FactorId,
) -> (Factor, Factor, (Vec<Vec<NodeId>>, Vec<Vec<NodeId>>)) {
    let side = |tracks: &[Vec<LabeledTrack>], marg: Vec<f64>, id: FactorId| {
        let hyps = tracks
            .iter()
            .zip(marg)
            .map(|(ts, w)| Hypothesis::new(w, ts.clone()))
            .collect();
        let f = Factor::new(id, hyps);
        normalize(&f).unwrap_or(f)
    };
    let g = side(&t.row_tracks, t.row_marginals(), gated_id);
    let n = side(&t.col_tracks, t.col_marginals(), nongated_id);
    (g, n, (t.row_nodes.clone(), t.col_nodes.clone()))
}

/// Drops factors that hold a track with probability below
/// `empty_factor_tol` (or exactly zero). Returns the removed ids.
pub fn delete_empty(state: &mut FilterState) -> Vec<FactorId> {
    let tol = state.config.empty_factor_tol;
    let mut removed = Vec::new();
    state.factors.retain(|f| {
        let p = f.existence_prob();
        let keep = !f.is_empty() && p > 0.0 && p >= tol && f.total_weight() > 0.0;
        if !keep {
            removed.push(f.id);
        }
        keep
    });
    removed
}
