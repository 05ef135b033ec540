//! Per-factor joint prediction and update.
//!
//! Each parent hypothesis gets a likelihood matrix; ranked assignments of
//! that matrix are its children. A selection buffer pulls children across
//! parents in global weight order, then mixture posteriors are expanded into
//! one hypothesis per mode and hypotheses that agree on the recent
//! association window are merged.

mod config;
mod likelihood;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

use crate::assignment::{murty_iterator, Assignment, AssignmentError, MurtyIter};
use crate::kinematics::{predict, GaussianDensity, KinematicsError, Measurement};
use crate::model::{
    log_sum_exp, merge_equal_signatures, normalize, AssocOutcome, DensityIndex, Factor, Hypothesis,
    LabeledTrack, ModelError, NodeId, TrackLabel,
};

pub use config::{Factoring, TrackerConfig};
pub use likelihood::{
    build_likelihood_matrix, DetectionEntry, LikelihoodMatrix, ModeComponent, RowKind, TrackRow,
};

use likelihood::{build_cached, DetectionCache};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmbError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// One ranked assignment of a parent's likelihood matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildCandidate {
    pub parent_index: usize,
    pub assignment: Assignment,
    /// Parent log weight minus assignment cost (unnormalized).
    pub log_weight: f64,
}

impl ChildCandidate {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Children of one parent, best first, at most `budget` of them.
#[derive(Debug, Clone)]
pub struct ChildIter {
    parent_index: usize,
    parent_log_weight: f64,
    remaining: usize,
    murty: Option<MurtyIter>,
}

impl Iterator for ChildIter {
    type Item = ChildCandidate;

    fn next(&mut self) -> Option<ChildCandidate> {
        if self.remaining == 0 {
            return None;
        }
        let assignment = self.murty.as_mut()?.next()?;
        self.remaining -= 1;
        Some(ChildCandidate {
            parent_index: self.parent_index,
            log_weight: self.parent_log_weight - assignment.cost,
            assignment,
        })
    }
}

/// Ranked children of `h`. A matrix with no finite assignment yields none.
pub fn children_of(
    parent_index: usize,
    h: &Hypothesis,
    matrix: &LikelihoodMatrix,
    budget: usize,
) -> Result<ChildIter, GlmbError> {
    if budget == 0 {
        return Err(AssignmentError::ZeroBudget.into());
    }
    let murty = match murty_iterator(&matrix.cost_matrix()) {
        Ok(it) => Some(it),
        Err(AssignmentError::Infeasible) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(ChildIter {
        parent_index,
        parent_log_weight: h.log_weight,
        remaining: budget,
        murty,
    })
}

struct Buffered(ChildCandidate);

impl PartialEq for Buffered {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Buffered {}

impl PartialOrd for Buffered {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Buffered {
    // Max-heap on weight; ties go to the lower parent index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .log_weight
            .total_cmp(&other.0.log_weight)
            .then_with(|| other.0.parent_index.cmp(&self.0.parent_index))
            .then_with(|| {
                other
                    .0
                    .assignment
                    .row_to_col
                    .cmp(&self.0.assignment.row_to_col)
            })
    }
}

/// Global top-`k` children by weight. The buffer holds the best unconsumed
/// child of every parent; the winner is replaced by the next child of the
/// same parent. Each parent iterator yields in nonincreasing weight order,
/// so the result is exact.
pub fn select_top_k<I>(parents: Vec<I>, k: usize) -> Vec<ChildCandidate>
where
    I: Iterator<Item = ChildCandidate>,
{
    let mut parents = parents;
    let mut buffer = BinaryHeap::new();
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (slot, it) in parents.iter_mut().enumerate() {
        if let Some(c) = it.next() {
            owner.insert(c.parent_index, slot);
            buffer.push(Buffered(c));
        }
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let Some(Buffered(best)) = buffer.pop() else {
            break;
        };
        let slot = owner[&best.parent_index];
        if let Some(c) = parents[slot].next() {
            owner.insert(c.parent_index, slot);
            buffer.push(Buffered(c));
        }
        out.push(best);
    }
    out
}

/// One weighted alternative for a track after the update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackComponent {
    pub density_index: DensityIndex,
    pub density: GaussianDensity,
    /// Log of the component's share of the track's mixture (sums to one).
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTrack {
    pub label: TrackLabel,
    pub components: Vec<TrackComponent>,
}

/// A child whose tracks may still carry multimodal posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureHypothesis {
    pub log_weight: f64,
    pub tracks: Vec<MixtureTrack>,
    pub node: NodeId,
}

/// Builds the child's track set from its assignment: detected rows take the
/// per-mode posteriors, missed rows keep the predicted density, died rows
/// (and unused birth candidates) are dropped.
pub fn realize_child(
    parent: &Hypothesis,
    matrix: &LikelihoodMatrix,
    child: &ChildCandidate,
    frame: u64,
    window: usize,
) -> MixtureHypothesis {
    let m = matrix.num_meas();
    let mut tracks = Vec::new();
    for (r, &col) in child.assignment.row_to_col.iter().enumerate() {
        let row = &matrix.track_rows[r];
        if col < m {
            let entry = matrix
                .detection(r, col)
                .expect("finite-cost assignment uses a gated pair");
            let id = matrix.meas_cols[col].id;
            let components = entry
                .components
                .iter()
                .map(|c| TrackComponent {
                    density_index: row
                        .density_index
                        .push_outcome(AssocOutcome::Detected(id.with_mode(c.mode)), window),
                    density: c.posterior.clone(),
                    log_weight: c.log_eta - entry.log_eta,
                })
                .collect();
            tracks.push(MixtureTrack {
                label: row.label,
                components,
            });
        } else if col == matrix.missed_col(r) {
            tracks.push(MixtureTrack {
                label: row.label,
                components: vec![TrackComponent {
                    density_index: row
                        .density_index
                        .push_outcome(AssocOutcome::Missed(frame), window),
                    density: row.predicted.clone(),
                    log_weight: 0.0,
                }],
            });
        }
    }
    tracks.sort_by_key(|t| t.label);
    MixtureHypothesis {
        log_weight: child.log_weight,
        tracks,
        node: parent.node,
    }
}

/// Expands every multimodal track into one hypothesis per mode, weights
/// scaled by the mode posteriors. Several multimodal tracks give the product
/// of their modes.
pub fn split_modes(hyps: Vec<MixtureHypothesis>) -> Vec<Hypothesis> {
    split_modes_traced(hyps).0
}

fn split_modes_traced(hyps: Vec<MixtureHypothesis>) -> (Vec<Hypothesis>, Vec<usize>) {
    let mut out = Vec::new();
    let mut source = Vec::new();
    for (i, h) in hyps.into_iter().enumerate() {
        let mut partial = vec![(h.log_weight, Vec::with_capacity(h.tracks.len()))];
        for t in &h.tracks {
            let mut next = Vec::with_capacity(partial.len() * t.components.len());
            for (w, tracks) in &partial {
                for c in &t.components {
                    let mut tracks: Vec<LabeledTrack> = tracks.clone();
                    tracks.push(LabeledTrack {
                        label: t.label,
                        density_index: c.density_index.clone(),
                        density: c.density.clone(),
                    });
                    next.push((w + c.log_weight, tracks));
                }
            }
            partial = next;
        }
        for (w, tracks) in partial {
            let mut hyp = Hypothesis::from_log_weight(w, tracks);
            hyp.node = h.node;
            out.push(hyp);
            source.push(i);
        }
    }
    (out, source)
}

/// Collapses hypotheses whose tracks agree on label and association window,
/// keeping the first of each group with the group's summed weight.
pub fn marginalize_history(f: &Factor) -> Factor {
    let (kept, _) = merge_equal_signatures(f.hypotheses().to_vec());
    Factor::new(f.id, kept)
}

/// One birth candidate per measurement, labelled by the frame and the
/// measurement's index, at the zero-velocity lift of the measurement.
pub fn make_birth_candidates(
    meas: &[Measurement],
    frame: u64,
    cfg: &TrackerConfig,
) -> Vec<LabeledTrack> {
    meas.iter()
        .map(|z| LabeledTrack {
            label: TrackLabel::new(frame, z.id.index),
            density_index: DensityIndex::new(),
            density: GaussianDensity {
                mean: cfg.sensor.lift(&z.z),
                cov: cfg.birth_cov.clone(),
            },
        })
        .collect()
}

/// Predicts and updates one factor with the given measurements and birth
/// candidates, keeping at most `max_hypos_per_factor` hypotheses.
pub fn update_factor(
    f: &Factor,
    meas: &[Measurement],
    births: &[LabeledTrack],
    frame: u64,
    cfg: &TrackerConfig,
) -> Result<Factor, GlmbError> {
    update_factor_traced(f, meas, births, frame, cfg).map(|(f, _)| f)
}

/// [`update_factor`] that also reports, for every output hypothesis, the
/// pedigree nodes of the parents whose children were merged into it.
pub fn update_factor_traced(
    f: &Factor,
    meas: &[Measurement],
    births: &[LabeledTrack],
    frame: u64,
    cfg: &TrackerConfig,
) -> Result<(Factor, Vec<Vec<NodeId>>), GlmbError> {
    if f.is_empty() {
        return Err(ModelError::AllWeightsZero(f.id).into());
    }
    let window = cfg.window_n;

    let mut predicted: HashMap<(TrackLabel, DensityIndex), GaussianDensity> = HashMap::new();
    let mut cache = DetectionCache::default();
    let mut parents = Vec::with_capacity(f.len());
    let mut matrices = Vec::with_capacity(f.len());
    for h in f.hypotheses() {
        debug_assert!(births.iter().all(|b| h.track(b.label).is_none()));
        let tracks = h
            .tracks
            .iter()
            .map(|t| LabeledTrack {
                label: t.label,
                density_index: t.density_index.clone(),
                density: predicted
                    .entry((t.label, t.density_index.clone()))
                    .or_insert_with(|| predict(&t.density, &cfg.motion))
                    .clone(),
            })
            .collect();
        let ph = Hypothesis {
            log_weight: h.log_weight,
            tracks,
            node: h.node,
        };
        matrices.push(build_cached(&ph, births, meas, cfg, &mut cache)?);
        parents.push(ph);
    }

    let iters = parents
        .iter()
        .zip(&matrices)
        .enumerate()
        .map(|(i, (h, m))| children_of(i, h, m, cfg.max_children_per_hypo))
        .collect::<Result<Vec<_>, _>>()?;
    let chosen = select_top_k(iters, cfg.max_hypos_per_factor);

    let mixtures: Vec<MixtureHypothesis> = chosen
        .iter()
        .map(|c| {
            realize_child(
                &parents[c.parent_index],
                &matrices[c.parent_index],
                c,
                frame,
                window,
            )
        })
        .collect();
    let (split, source) = split_modes_traced(mixtures);
    let (mut kept, groups) = merge_equal_signatures(split);

    let mut lineage: Vec<Vec<NodeId>> = groups
        .iter()
        .map(|g| {
            let mut nodes: Vec<NodeId> = g
                .iter()
                .map(|&i| parents[chosen[source[i]].parent_index].node)
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            nodes
        })
        .collect();

    // Mode splitting can exceed the budget again; keep the heaviest.
    if kept.len() > cfg.max_hypos_per_factor {
        let mut order: Vec<usize> = (0..kept.len()).collect();
        order.sort_by(|&a, &b| {
            kept[b]
                .log_weight
                .total_cmp(&kept[a].log_weight)
                .then(a.cmp(&b))
        });
        order.truncate(cfg.max_hypos_per_factor);
        order.sort_unstable();
        kept = order.iter().map(|&i| kept[i].clone()).collect();
        lineage = order.iter().map(|&i| lineage[i].clone()).collect();
    }

    let total = log_sum_exp(kept.iter().map(|h| h.log_weight));
    if !total.is_finite() {
        return Err(ModelError::AllWeightsZero(f.id).into());
    }
    let out = normalize(&Factor::new(f.id, kept))?;
    Ok((out, lineage))
}
