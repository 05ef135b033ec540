//! Gating incidence and the two clustering stages.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::glmb::TrackerConfig;
use crate::kinematics::{gate, predict, GaussianDensity, KinematicsError, Measurement};
use crate::model::{DensityIndex, Factor, FactorId, MeasurementId, TrackLabel};

/// Which live track labels and which other measurements each current
/// measurement gates with.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub meas: Vec<MeasurementId>,
    pub labels: Vec<TrackLabel>,
    track_gate: Vec<bool>,
    meas_gate: Vec<bool>,
}

impl GateMatrix {
    /// A label gates a measurement when any predicted density carrying that
    /// label, in any hypothesis of any factor, gates it. Two measurements
    /// gate each other when they are closer than twice the gate radius of a
    /// freshly born track.
    pub fn build(
        factors: &[Factor],
        meas: &[Measurement],
        cfg: &TrackerConfig,
    ) -> Result<Self, KinematicsError> {
        let mut densities: BTreeMap<TrackLabel, Vec<GaussianDensity>> = BTreeMap::new();
        let mut seen: HashSet<(TrackLabel, DensityIndex)> = HashSet::new();
        for f in factors {
            for h in f.hypotheses() {
                for t in &h.tracks {
                    if seen.insert((t.label, t.density_index.clone())) {
                        densities
                            .entry(t.label)
                            .or_default()
                            .push(predict(&t.density, &cfg.motion));
                    }
                }
            }
            for &l in f.label_set() {
                densities.entry(l).or_default();
            }
        }
        let labels: Vec<TrackLabel> = densities.keys().copied().collect();
        let m = meas.len();
        let mut track_gate = vec![false; m * labels.len()];
        for (li, l) in labels.iter().enumerate() {
            for (j, z) in meas.iter().enumerate() {
                for g in &densities[l] {
                    if gate(g, &cfg.sensor, &z.z, cfg.gate_gamma)? {
                        track_gate[j * labels.len() + li] = true;
                        break;
                    }
                }
            }
        }
        let radius = 2.0 * birth_gate_radius(cfg);
        let mut meas_gate = vec![false; m * m];
        for a in 0..m {
            for b in 0..m {
                meas_gate[a * m + b] = (&meas[a].z - &meas[b].z).norm() <= radius;
            }
        }
        Ok(Self {
            meas: meas.iter().map(|z| z.id).collect(),
            labels,
            track_gate,
            meas_gate,
        })
    }

    pub fn track_gates(&self, meas: usize, label: usize) -> bool {
        self.track_gate[meas * self.labels.len() + label]
    }

    pub fn meas_gates(&self, a: usize, b: usize) -> bool {
        self.meas_gate[a * self.meas.len() + b]
    }

    /// True when `label` gates any of the given measurements.
    pub fn label_gates_any(&self, label: TrackLabel, meas: &BTreeSet<MeasurementId>) -> bool {
        let Ok(li) = self.labels.binary_search(&label) else {
            return false;
        };
        self.meas
            .iter()
            .enumerate()
            .any(|(j, id)| meas.contains(id) && self.track_gates(j, li))
    }
}

/// Gate radius of a track born at the measurement, in measurement space:
/// `sqrt(gamma * largest eigenvalue of (R + H P_b H^T))`.
pub fn birth_gate_radius(cfg: &TrackerConfig) -> f64 {
    let h = &cfg.sensor.observation;
    let s = &cfg.sensor.noise + h * &cfg.birth_cov * h.transpose();
    let lmax = s.symmetric_eigenvalues().max();
    (cfg.gate_gamma * lmax).sqrt()
}

#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so component order is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    /// Members of every component, ordered by their smallest element.
    pub(crate) fn components(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..self.parent.len() {
            let r = self.find(x);
            by_root.entry(r).or_default().push(x);
        }
        by_root.into_values().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cluster {
    pub measurement_ids: BTreeSet<MeasurementId>,
    pub track_labels: BTreeSet<TrackLabel>,
}

impl Cluster {
    /// A track that gates nothing; it takes no part in the update.
    pub fn is_ignored(&self) -> bool {
        self.measurement_ids.is_empty()
    }
}

/// Connected components of the gate matrix. Labels that gate nothing end up
/// as singleton clusters.
pub fn cluster_stage1(gm: &GateMatrix) -> Vec<Cluster> {
    let m = gm.meas.len();
    let mut uf = UnionFind::new(m + gm.labels.len());
    for a in 0..m {
        for b in a + 1..m {
            if gm.meas_gates(a, b) {
                uf.union(a, b);
            }
        }
        for l in 0..gm.labels.len() {
            if gm.track_gates(a, l) {
                uf.union(a, m + l);
            }
        }
    }
    uf.components()
        .into_iter()
        .map(|members| {
            let mut c = Cluster::default();
            for x in members {
                if x < m {
                    c.measurement_ids.insert(gm.meas[x]);
                } else {
                    c.track_labels.insert(gm.labels[x - m]);
                }
            }
            c
        })
        .collect()
}

/// Factors and measurement clusters joined through shared labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuperGroup {
    pub factor_ids: BTreeSet<FactorId>,
    /// Indices into the cluster list given to [`cluster_stage2`].
    pub cluster_ids: BTreeSet<usize>,
}

/// Second-stage clustering over the factor x cluster incidence. Clusters
/// without measurements are skipped; factors touching no cluster form
/// groups of their own.
pub fn cluster_stage2(factors: &[Factor], clusters: &[Cluster]) -> Vec<SuperGroup> {
    let nf = factors.len();
    let mut uf = UnionFind::new(nf + clusters.len());
    for (fi, f) in factors.iter().enumerate() {
        for (ci, c) in clusters.iter().enumerate() {
            if !c.is_ignored() && !f.label_set().is_disjoint(&c.track_labels) {
                uf.union(fi, nf + ci);
            }
        }
    }
    uf.components()
        .into_iter()
        .filter_map(|members| {
            let mut g = SuperGroup::default();
            for x in members {
                if x < nf {
                    g.factor_ids.insert(factors[x].id);
                } else if !clusters[x - nf].is_ignored() {
                    g.cluster_ids.insert(x - nf);
                }
            }
            (!g.factor_ids.is_empty() || !g.cluster_ids.is_empty()).then_some(g)
        })
        .collect()
}
