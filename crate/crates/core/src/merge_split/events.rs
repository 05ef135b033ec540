use std::collections::BTreeSet;

use crate::model::{FactorId, Hypothesis, NodeId, TrackLabel};

/// How a pedigree node came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Child,
    Merged,
    SplitWithMeas,
    SplitWithoutMeas,
}

impl NodeKind {
    /// Marker written in front of the weight in the hypothesis tree.
    pub fn weight_prefix(self) -> Option<&'static str> {
        match self {
            NodeKind::Child => None,
            NodeKind::Merged => Some("-1"),
            NodeKind::SplitWithMeas => Some("-2"),
            NodeKind::SplitWithoutMeas => Some("-3"),
        }
    }
}

/// One hypothesis in the pedigree. Parent node 0 is the virtual root.
#[derive(Debug, Clone, PartialEq)]
pub struct PedigreeEvent {
    pub frame: u64,
    pub node: NodeId,
    pub parents: Vec<NodeId>,
    pub kind: NodeKind,
    pub weight: f64,
    /// `track.measurement` for every track, using its latest association.
    pub track_assoc: Vec<String>,
}

impl PedigreeEvent {
    pub fn for_hypothesis(
        frame: u64,
        h: &Hypothesis,
        parents: Vec<NodeId>,
        kind: NodeKind,
    ) -> Self {
        let track_assoc = h
            .tracks
            .iter()
            .map(|t| match t.density_index.last() {
                Some(o) => format!("{}.{}", t.label, o),
                None => t.label.to_string(),
            })
            .collect();
        Self {
            frame,
            node: h.node,
            parents,
            kind,
            weight: h.weight(),
            track_assoc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrackerEvent {
    FactorCreated {
        frame: u64,
        id: FactorId,
    },
    FactorsMerged {
        frame: u64,
        sources: Vec<FactorId>,
        merged: FactorId,
        labels: BTreeSet<TrackLabel>,
    },
    FactorSplit {
        frame: u64,
        source: FactorId,
        gated: FactorId,
        gated_labels: BTreeSet<TrackLabel>,
        nongated: FactorId,
        nongated_labels: BTreeSet<TrackLabel>,
        epsilon: f64,
    },
    /// The independence test failed; the factor stays whole.
    SplitRefused {
        frame: u64,
        source: FactorId,
        epsilon: f64,
    },
    FactorDeleted {
        frame: u64,
        id: FactorId,
    },
    Hypothesis(PedigreeEvent),
}

pub trait EventSink {
    fn record(&mut self, event: TrackerEvent);

    /// Whether per-hypothesis pedigree events should be produced at all.
    fn wants_pedigree(&self) -> bool {
        false
    }
}

/// Discards everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _: TrackerEvent) {}
}

impl EventSink for Vec<TrackerEvent> {
    fn record(&mut self, event: TrackerEvent) {
        self.push(event);
    }

    fn wants_pedigree(&self) -> bool {
        true
    }
}
