//! Frame driver: clusters measurements and tracks, merges factors that
//! share measurements, splits merged factors when their two halves are
//! independent, and drops factors that no longer hold a track.

mod events;
mod factor_ops;
mod gate;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::glmb::{
    make_birth_candidates, update_factor_traced, Factoring, GlmbError, TrackerConfig,
};
use crate::kinematics::{KinematicsError, Measurement};
use crate::model::{Factor, FactorId, FilterState, MeasurementId, ModelError, NodeId};

pub use events::{EventSink, NodeKind, NullSink, PedigreeEvent, TrackerEvent};
pub use factor_ops::{
    build_joint_table, delete_empty, independence_epsilon, merge_factors, merge_factors_traced,
    partition_gated, split_factor, split_factor_traced, JointTable, MergeError,
};
pub use gate::{
    birth_gate_radius, cluster_stage1, cluster_stage2, Cluster, GateMatrix, SuperGroup,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("frame {got} does not follow frame {previous}")]
    FrameOrder { previous: u64, got: u64 },
    #[error("measurement {id} does not belong to frame {frame}")]
    ForeignMeasurement { id: MeasurementId, frame: u64 },
    #[error(transparent)]
    Glmb(#[from] GlmbError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

struct Driver<'a> {
    state: &'a mut FilterState,
    sink: &'a mut dyn EventSink,
    frame: u64,
    cfg: TrackerConfig,
}

impl Driver<'_> {
    /// Gives every hypothesis of `f` a fresh pedigree node.
    fn adopt(&mut self, mut f: Factor, parents: Vec<Vec<NodeId>>, kind: NodeKind) -> Factor {
        let pedigree = self.sink.wants_pedigree();
        for (h, parents) in f.hypotheses_mut().iter_mut().zip(parents) {
            h.node = self.state.fresh_node_id();
            if pedigree {
                let event = PedigreeEvent::for_hypothesis(self.frame, h, parents, kind);
                self.sink.record(TrackerEvent::Hypothesis(event));
            }
        }
        f
    }

    fn new_factor(&mut self) -> Factor {
        let id = self.state.fresh_factor_id();
        self.sink.record(TrackerEvent::FactorCreated {
            frame: self.frame,
            id,
        });
        Factor::empty(id)
    }

    /// Updates a factor; a factor left with no weight is reported deleted.
    fn update(&mut self, f: &Factor, meas: &[Measurement]) -> Result<Option<Factor>, TrackError> {
        let births = make_birth_candidates(meas, self.frame, &self.cfg);
        match update_factor_traced(f, meas, &births, self.frame, &self.cfg) {
            Ok((out, lineage)) => Ok(Some(self.adopt(out, lineage, NodeKind::Child))),
            Err(GlmbError::Model(ModelError::AllWeightsZero(_))) => {
                self.sink.record(TrackerEvent::FactorDeleted {
                    frame: self.frame,
                    id: f.id,
                });
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn merge(&mut self, fs: &[Factor]) -> Result<Factor, TrackError> {
        let id = self.state.fresh_factor_id();
        let (merged, parents) = merge_factors_traced(fs, self.cfg.max_product_hypos, id)?;
        self.sink.record(TrackerEvent::FactorsMerged {
            frame: self.frame,
            sources: fs.iter().map(|f| f.id).collect(),
            merged: id,
            labels: merged.label_set().clone(),
        });
        Ok(self.adopt(merged, parents, NodeKind::Merged))
    }

    /// Tries to split off the labels that gate none of the group's
    /// measurements, then updates. Returns the resulting factors.
    fn split_and_update(
        &mut self,
        f: Factor,
        meas: &[Measurement],
        gm: &GateMatrix,
    ) -> Result<Vec<Factor>, TrackError> {
        let ids: BTreeSet<MeasurementId> = meas.iter().map(|z| z.id).collect();
        let (gated, nongated) = partition_gated(&f, &ids, gm);
        if !gated.is_empty() && !nongated.is_empty() {
            let table = build_joint_table(&f, &gated, &nongated);
            let epsilon = independence_epsilon(&table);
            if epsilon <= self.cfg.independence_tol {
                let gid = self.state.fresh_factor_id();
                let nid = self.state.fresh_factor_id();
                let (g, n, (gp, np)) = split_factor_traced(&table, gid, nid);
                self.sink.record(TrackerEvent::FactorSplit {
                    frame: self.frame,
                    source: f.id,
                    gated: gid,
                    gated_labels: g.label_set().clone(),
                    nongated: nid,
                    nongated_labels: n.label_set().clone(),
                    epsilon,
                });
                let g = self.adopt(g, gp, NodeKind::SplitWithMeas);
                let n = self.adopt(n, np, NodeKind::SplitWithoutMeas);
                let mut out = Vec::with_capacity(2);
                out.extend(self.update(&g, meas)?);
                out.extend(self.update(&n, &[])?);
                return Ok(out);
            }
            self.sink.record(TrackerEvent::SplitRefused {
                frame: self.frame,
                source: f.id,
                epsilon,
            });
        }
        Ok(self.update(&f, meas)?.into_iter().collect())
    }

    fn merge_split(&mut self, meas: &[Measurement]) -> Result<Vec<Factor>, TrackError> {
        let gm = GateMatrix::build(&self.state.factors, meas, &self.cfg)?;
        let clusters = cluster_stage1(&gm);
        let groups = cluster_stage2(&self.state.factors, &clusters);
        let mut live: BTreeMap<FactorId, Factor> = std::mem::take(&mut self.state.factors)
            .into_iter()
            .map(|f| (f.id, f))
            .collect();
        let mut out = Vec::new();
        for g in groups {
            let ids: BTreeSet<MeasurementId> = g
                .cluster_ids
                .iter()
                .flat_map(|&c| clusters[c].measurement_ids.iter().copied())
                .collect();
            let group_meas: Vec<Measurement> = meas
                .iter()
                .filter(|z| ids.contains(&z.id))
                .cloned()
                .collect();
            let fs: Vec<Factor> = g
                .factor_ids
                .iter()
                .map(|id| live.remove(id).expect("super group names a live factor"))
                .collect();
            if group_meas.is_empty() {
                // no measurement reaches these factors: negative information
                for f in &fs {
                    out.extend(self.update(f, &[])?);
                }
            } else if fs.is_empty() {
                let f = self.new_factor();
                out.extend(self.update(&f, &group_meas)?);
            } else if fs.len() == 1 {
                let f = fs.into_iter().next().expect("one factor");
                out.extend(self.split_and_update(f, &group_meas, &gm)?);
            } else {
                let merged = self.merge(&fs)?;
                out.extend(self.split_and_update(merged, &group_meas, &gm)?);
            }
        }
        debug_assert!(live.is_empty());
        Ok(out)
    }

    fn single(&mut self, meas: &[Measurement]) -> Result<Vec<Factor>, TrackError> {
        let fs = std::mem::take(&mut self.state.factors);
        let f = match fs.len() {
            0 => self.new_factor(),
            1 => fs.into_iter().next().expect("one factor"),
            _ => self.merge(&fs)?,
        };
        Ok(self.update(&f, meas)?.into_iter().collect())
    }
}

/// Advances the filter by one frame.
pub fn process_frame(
    state: &mut FilterState,
    frame: u64,
    meas: &[Measurement],
    sink: &mut dyn EventSink,
) -> Result<(), TrackError> {
    if let Some(previous) = state.frame {
        if frame <= previous {
            return Err(TrackError::FrameOrder {
                previous,
                got: frame,
            });
        }
    }
    if let Some(z) = meas.iter().find(|z| z.id.frame != frame) {
        return Err(TrackError::ForeignMeasurement { id: z.id, frame });
    }
    let cfg = state.config.clone();
    let factoring = cfg.factoring;
    let mut driver = Driver {
        state,
        sink,
        frame,
        cfg,
    };
    let factors = match factoring {
        Factoring::MergeSplit => driver.merge_split(meas)?,
        Factoring::Single => driver.single(meas)?,
    };
    state.factors = factors;
    for id in delete_empty(state) {
        sink.record(TrackerEvent::FactorDeleted { frame, id });
    }
    state.frame = Some(frame);
    Ok(())
}
