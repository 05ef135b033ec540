//! Labels, identifiers, hypotheses and factors.
//!
//! A factor is a normalized set of weighted hypotheses over a subset of track
//! labels. The full multitarget density is the product of all live factors,
//! whose label sets are pairwise disjoint.
//!
//! Weights are kept in the log domain throughout; `normalize` works with
//! log-sum-exp so that products of many small weights do not underflow.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::glmb::TrackerConfig;
use crate::kinematics::GaussianDensity;

/// Identity of a born object: the frame it was born in and its ordinal among
/// that frame's birth candidates. Ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackLabel {
    pub birth_frame: u64,
    pub birth_index: u32,
}

impl TrackLabel {
    pub fn new(birth_frame: u64, birth_index: u32) -> Self {
        Self {
            birth_frame,
            birth_index,
        }
    }
}

impl fmt::Display for TrackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.birth_frame, self.birth_index)
    }
}

/// One mode of one measurement. `mode` is zero unless the sensor declares a
/// mixture likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeasurementId {
    pub frame: u64,
    pub index: u32,
    pub mode: u32,
}

impl MeasurementId {
    pub fn new(frame: u64, index: u32) -> Self {
        Self {
            frame,
            index,
            mode: 0,
        }
    }

    pub fn with_mode(self, mode: u32) -> Self {
        Self { mode, ..self }
    }
}

impl fmt::Display for MeasurementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mode == 0 {
            write!(f, "{}:{}", self.frame, self.index)
        } else {
            write!(f, "{}:{}~{}", self.frame, self.index, self.mode)
        }
    }
}

/// What happened to a track at one update step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssocOutcome {
    Detected(MeasurementId),
    Missed(u64),
}

impl fmt::Display for AssocOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssocOutcome::Detected(id) => write!(f, "{id}"),
            AssocOutcome::Missed(frame) => write!(f, "{frame}:-"),
        }
    }
}

/// The most recent association outcomes of a density, oldest first.
///
/// Two densities carrying equal windows are treated as the same density.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DensityIndex(Vec<AssocOutcome>);

impl DensityIndex {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_outcomes(outcomes: Vec<AssocOutcome>) -> Self {
        Self(outcomes)
    }

    pub fn outcomes(&self) -> &[AssocOutcome] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&AssocOutcome> {
        self.0.last()
    }

    /// Appends `outcome`, evicting from the front so that at most `window`
    /// entries remain.
    pub fn push_outcome(&self, outcome: AssocOutcome, window: usize) -> Self {
        assert!(window >= 1, "density window must hold at least one outcome");
        let keep = self.0.len().min(window - 1);
        let mut next = Vec::with_capacity(keep + 1);
        next.extend_from_slice(&self.0[self.0.len() - keep..]);
        next.push(outcome);
        Self(next)
    }
}

impl fmt::Display for DensityIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, "]")
    }
}

/// Free-function form of [`DensityIndex::push_outcome`].
pub fn push_outcome(index: &DensityIndex, outcome: AssocOutcome, window: usize) -> DensityIndex {
    index.push_outcome(outcome, window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrack {
    pub label: TrackLabel,
    pub density_index: DensityIndex,
    pub density: GaussianDensity,
}

/// Node identifier in the hypothesis pedigree. Zero means "not yet assigned".
pub type NodeId = u64;

/// A weighted set of labeled tracks, sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub log_weight: f64,
    pub tracks: Vec<LabeledTrack>,
    pub node: NodeId,
}

impl Hypothesis {
    pub fn new(weight: f64, mut tracks: Vec<LabeledTrack>) -> Self {
        tracks.sort_by_key(|t| t.label);
        Self {
            log_weight: weight.ln(),
            tracks,
            node: 0,
        }
    }

    pub fn from_log_weight(log_weight: f64, mut tracks: Vec<LabeledTrack>) -> Self {
        tracks.sort_by_key(|t| t.label);
        Self {
            log_weight,
            tracks,
            node: 0,
        }
    }

    /// The "no targets" hypothesis.
    pub fn empty(weight: f64) -> Self {
        Self::new(weight, Vec::new())
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = TrackLabel> + '_ {
        self.tracks.iter().map(|t| t.label)
    }

    pub fn track(&self, label: TrackLabel) -> Option<&LabeledTrack> {
        self.tracks
            .binary_search_by_key(&label, |t| t.label)
            .ok()
            .map(|i| &self.tracks[i])
    }

    pub fn signature(&self) -> HypoSignature {
        signature_of(self)
    }
}

/// The (label, density index) pairs of a hypothesis, in label order.
/// Hypotheses with equal signatures describe the same discretized state.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HypoSignature(pub Vec<(TrackLabel, DensityIndex)>);

impl HypoSignature {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn signature_of(h: &Hypothesis) -> HypoSignature {
    debug_assert!(h.tracks.windows(2).all(|w| w[0].label < w[1].label));
    HypoSignature(
        h.tracks
            .iter()
            .map(|t| (t.label, t.density_index.clone()))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactorId(pub u64);

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("factor {0} has no hypothesis with positive weight")]
    AllWeightsZero(FactorId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub id: FactorId,
    hypotheses: Vec<Hypothesis>,
    label_set: BTreeSet<TrackLabel>,
}

impl Factor {
    pub fn new(id: FactorId, hypotheses: Vec<Hypothesis>) -> Self {
        let label_set = hypotheses.iter().flat_map(|h| h.labels()).collect();
        Self {
            id,
            hypotheses,
            label_set,
        }
    }

    /// A factor holding only the "no targets" hypothesis with weight one.
    pub fn empty(id: FactorId) -> Self {
        Self::new(id, vec![Hypothesis::empty(1.0)])
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn into_hypotheses(self) -> Vec<Hypothesis> {
        self.hypotheses
    }

    pub fn label_set(&self) -> &BTreeSet<TrackLabel> {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        log_sum_exp(self.hypotheses.iter().map(|h| h.log_weight)).exp()
    }

    /// Probability that the factor holds at least one track.
    pub fn existence_prob(&self) -> f64 {
        let nonempty = log_sum_exp(
            self.hypotheses
                .iter()
                .filter(|h| !h.is_empty())
                .map(|h| h.log_weight),
        );
        let all = log_sum_exp(self.hypotheses.iter().map(|h| h.log_weight));
        if nonempty == f64::NEG_INFINITY {
            0.0
        } else {
            (nonempty - all).exp()
        }
    }

    /// Index of the maximum-weight hypothesis (first one on ties).
    pub fn map_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, h) in self.hypotheses.iter().enumerate() {
            match best {
                Some(b) if self.hypotheses[b].log_weight >= h.log_weight => {}
                _ => best = Some(i),
            }
        }
        best
    }

    pub fn map_hypothesis(&self) -> Option<&Hypothesis> {
        self.map_index().map(|i| &self.hypotheses[i])
    }

    pub fn with_id(mut self, id: FactorId) -> Self {
        self.id = id;
        self
    }

    pub fn hypotheses_mut(&mut self) -> &mut [Hypothesis] {
        &mut self.hypotheses
    }

    pub fn normalize(&self) -> Result<Factor, ModelError> {
        normalize(self)
    }
}

/// Numerically stable `ln(sum(exp(x)))`; `-inf` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Rescales the factor's weights to sum to one, preserving hypothesis order.
pub fn normalize(f: &Factor) -> Result<Factor, ModelError> {
    let total = log_sum_exp(f.hypotheses.iter().map(|h| h.log_weight));
    if !total.is_finite() {
        return Err(ModelError::AllWeightsZero(f.id));
    }
    let hypotheses = f
        .hypotheses
        .iter()
        .map(|h| Hypothesis {
            log_weight: h.log_weight - total,
            ..h.clone()
        })
        .collect();
    Ok(Factor {
        id: f.id,
        hypotheses,
        label_set: f.label_set.clone(),
    })
}

/// Collapses hypotheses with equal signatures into their first member,
/// which carries the summed weight. Returns, for every kept hypothesis, the
/// indices of the inputs it absorbed.
pub fn merge_equal_signatures(hypotheses: Vec<Hypothesis>) -> (Vec<Hypothesis>, Vec<Vec<usize>>) {
    let mut slot: HashMap<HypoSignature, usize> = HashMap::new();
    let mut kept: Vec<Hypothesis> = Vec::new();
    let mut members: Vec<Vec<f64>> = Vec::new();
    let mut sources: Vec<Vec<usize>> = Vec::new();
    for (i, h) in hypotheses.into_iter().enumerate() {
        let sig = h.signature();
        match slot.get(&sig) {
            Some(&k) => {
                members[k].push(h.log_weight);
                sources[k].push(i);
            }
            None => {
                slot.insert(sig, kept.len());
                members.push(vec![h.log_weight]);
                sources.push(vec![i]);
                kept.push(h);
            }
        }
    }
    for (h, ws) in kept.iter_mut().zip(members) {
        if ws.len() > 1 {
            h.log_weight = log_sum_exp(ws);
        }
    }
    (kept, sources)
}

/// Whole-filter state: the live factors, id counters and configuration.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub factors: Vec<Factor>,
    pub next_factor_id: u64,
    pub next_node_id: NodeId,
    pub frame: Option<u64>,
    pub config: TrackerConfig,
}

impl FilterState {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            factors: Vec::new(),
            next_factor_id: 1,
            next_node_id: 1,
            frame: None,
            config,
        }
    }

    pub fn fresh_factor_id(&mut self) -> FactorId {
        let id = FactorId(self.next_factor_id);
        self.next_factor_id += 1;
        id
    }

    pub fn fresh_node_id(&mut self) -> NodeId {
        let id = self.next_node_id;
        self.next_node_id += 1;
        id
    }

    pub fn total_hypotheses(&self) -> usize {
        self.factors.iter().map(Factor::len).sum()
    }

    pub fn factor(&self, id: FactorId) -> Option<&Factor> {
        self.factors.iter().find(|f| f.id == id)
    }

    /// True when no label appears in more than one factor.
    pub fn labels_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.factors
            .iter()
            .flat_map(|f| f.label_set().iter())
            .all(|l| seen.insert(*l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn density() -> GaussianDensity {
        GaussianDensity::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap()
    }

    fn det(frame: u64, index: u32) -> AssocOutcome {
        AssocOutcome::Detected(MeasurementId::new(frame, index))
    }

    fn track(frame: u64, idx: u32, window: Vec<AssocOutcome>) -> LabeledTrack {
        LabeledTrack {
            label: TrackLabel::new(frame, idx),
            density_index: DensityIndex::from_outcomes(window),
            density: density(),
        }
    }

    #[test]
    fn labels_order_lexicographically() {
        assert!(TrackLabel::new(1, 9) < TrackLabel::new(2, 0));
        assert!(TrackLabel::new(2, 0) < TrackLabel::new(2, 1));
    }

    #[test]
    fn signature_of_empty_hypothesis_is_empty() {
        assert!(Hypothesis::empty(1.0).signature().is_empty());
    }

    #[test]
    fn signature_lists_pairs_in_label_order() {
        let a = track(1, 0, vec![det(1, 0)]);
        let b = track(1, 1, vec![det(1, 1)]);
        let h = Hypothesis::new(0.4, vec![b.clone(), a.clone()]);
        assert_eq!(
            h.signature().0,
            vec![
                (a.label, a.density_index.clone()),
                (b.label, b.density_index.clone())
            ]
        );
    }

    #[test]
    fn signature_ignores_weight() {
        let a = track(1, 0, vec![det(1, 0)]);
        let h1 = Hypothesis::new(0.1, vec![a.clone()]);
        let h2 = Hypothesis::new(0.9, vec![a]);
        assert_eq!(h1.signature(), h2.signature());
    }

    fn weights_of(f: &Factor) -> Vec<f64> {
        f.hypotheses().iter().map(Hypothesis::weight).collect()
    }

    #[test]
    fn normalize_equal_weights() {
        let f = Factor::new(
            FactorId(1),
            vec![Hypothesis::empty(0.2), Hypothesis::empty(0.2)],
        );
        let w = weights_of(&normalize(&f).unwrap());
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalize_single_weight_is_identity() {
        let f = Factor::new(FactorId(1), vec![Hypothesis::empty(1.0)]);
        assert_eq!(weights_of(&normalize(&f).unwrap()), vec![1.0]);
    }

    #[test]
    fn normalize_tiny_weights_without_underflow() {
        let f = Factor::new(
            FactorId(1),
            vec![Hypothesis::empty(3e-300), Hypothesis::empty(1e-300)],
        );
        let w = weights_of(&normalize(&f).unwrap());
        assert!((w[0] - 0.75).abs() < 1e-12);
        assert!((w[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn normalize_survives_log_weights_below_f64_range() {
        let f = Factor::new(
            FactorId(1),
            vec![
                Hypothesis::from_log_weight(-2000.0, vec![]),
                Hypothesis::from_log_weight(-2000.0 + 3f64.ln(), vec![]),
            ],
        );
        let w = weights_of(&normalize(&f).unwrap());
        assert!((w[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn normalize_all_zero_is_an_error() {
        let f = Factor::new(
            FactorId(4),
            vec![Hypothesis::empty(0.0), Hypothesis::empty(0.0)],
        );
        assert_eq!(normalize(&f), Err(ModelError::AllWeightsZero(FactorId(4))));
    }

    #[test]
    fn push_outcome_evicts_oldest() {
        let d = DensityIndex::from_outcomes(vec![det(1, 0), det(2, 0), det(3, 0)]);
        let d = d.push_outcome(det(4, 0), 3);
        assert_eq!(d.outcomes(), &[det(2, 0), det(3, 0), det(4, 0)]);
    }

    #[test]
    fn push_outcome_grows_until_full() {
        let d = DensityIndex::new().push_outcome(det(1, 0), 3);
        assert_eq!(d.outcomes(), &[det(1, 0)]);
    }

    #[test]
    fn push_outcome_window_of_one_replaces() {
        let d = DensityIndex::from_outcomes(vec![det(1, 0)]);
        let d = push_outcome(&d, AssocOutcome::Missed(7), 1);
        assert_eq!(d.outcomes(), &[AssocOutcome::Missed(7)]);
    }

    #[test]
    fn merge_equal_signatures_sums_weights() {
        let a = track(1, 0, vec![det(1, 0)]);
        let b = track(1, 1, vec![det(1, 1)]);
        let hs = vec![
            Hypothesis::new(0.3, vec![a.clone()]),
            Hypothesis::new(0.1, vec![b]),
            Hypothesis::new(0.2, vec![a]),
        ];
        let (kept, sources) = merge_equal_signatures(hs);
        assert_eq!(kept.len(), 2);
        assert!((kept[0].weight() - 0.5).abs() < 1e-15);
        assert_eq!(sources, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn existence_and_map() {
        let a = track(1, 0, vec![det(1, 0)]);
        let f = Factor::new(
            FactorId(1),
            vec![Hypothesis::empty(0.3), Hypothesis::new(0.7, vec![a])],
        );
        assert!((f.existence_prob() - 0.7).abs() < 1e-12);
        assert_eq!(f.map_index(), Some(1));
        assert_eq!(f.label_set().len(), 1);
    }

    fn outcome_strategy() -> impl Strategy<Value = AssocOutcome> {
        prop_oneof![
            (0u64..50, 0u32..5).prop_map(|(f, i)| det(f, i)),
            (0u64..50).prop_map(AssocOutcome::Missed),
        ]
    }

    proptest! {
        #[test]
        fn window_keeps_last_n(
            history in proptest::collection::vec(outcome_strategy(), 0..30),
            n in 1usize..6,
        ) {
            let mut d = DensityIndex::new();
            for o in &history {
                d = d.push_outcome(*o, n);
                prop_assert!(d.len() <= n);
            }
            let start = history.len().saturating_sub(n);
            prop_assert_eq!(d.outcomes(), &history[start..]);
        }

        #[test]
        fn normalize_sums_to_one(logs in proptest::collection::vec(-700.0f64..10.0, 1..40)) {
            let f = Factor::new(
                FactorId(1),
                logs.iter().map(|&l| Hypothesis::from_log_weight(l, vec![])).collect(),
            );
            let n = normalize(&f).unwrap();
            let s: f64 = n.hypotheses().iter().map(Hypothesis::weight).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for (a, b) in f.hypotheses().iter().zip(n.hypotheses()) {
                prop_assert!(((a.log_weight - b.log_weight) - (f.hypotheses()[0].log_weight - n.hypotheses()[0].log_weight)).abs() < 1e-9);
            }
        }

        #[test]
        fn merging_signatures_preserves_total(
            picks in proptest::collection::vec((0usize..4, -20.0f64..0.0), 1..30)
        ) {
            let tracks: Vec<LabeledTrack> = (0..4).map(|i| track(0, i as u32, vec![det(0, i as u32)])).collect();
            let hs: Vec<Hypothesis> = picks
                .iter()
                .map(|&(t, lw)| Hypothesis::from_log_weight(lw, vec![tracks[t].clone()]))
                .collect();
            let before = log_sum_exp(hs.iter().map(|h| h.log_weight));
            let (kept, _) = merge_equal_signatures(hs);
            let after = log_sum_exp(kept.iter().map(|h| h.log_weight));
            prop_assert!(((after.exp() - before.exp()) / before.exp()).abs() < 1e-12);
        }
    }
}
