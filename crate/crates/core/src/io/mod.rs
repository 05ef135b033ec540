//! File formats and the two command-line pipelines.
//!
//! * frame file: one JSON object per line,
//!   `{"frame": 3, "time": 0.3, "measurements": [[x, y], ...]}`
//! * tracker config: flat TOML, see [`ConfigFile`]
//! * scenario: TOML, see [`crate::sim::ScenarioSpec`]
//! * outputs: `counts.csv`, `estimates.jsonl`, optional `pedigree.dot`

mod config;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Measurement;
use crate::merge_split::{process_frame, EventSink, NullSink, PedigreeEvent, TrackerEvent};
use crate::model::{FilterState, NodeId};
use crate::sim::{simulate, Frame, ScenarioSpec};

pub use config::{parse_config, ConfigFile, FactoringKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: u64,
    time: f64,
    measurements: Vec<Vec<f64>>,
}

/// Parses one frame-file line (1-based `line` for error messages).
pub fn parse_frame_line(text: &str, line: usize) -> Result<Frame, InputError> {
    let rec: FrameRecord = serde_json::from_str(text).map_err(|e| InputError::Line {
        line,
        message: e.to_string(),
    })?;
    let measurements = rec
        .measurements
        .into_iter()
        .enumerate()
        .map(|(i, z)| Measurement::new(rec.frame, i as u32, DVector::from_vec(z)))
        .collect();
    Ok(Frame {
        frame: rec.frame,
        time: rec.time,
        measurements,
    })
}

/// Reads frames one line at a time, checking that frame numbers increase
/// and measurement dimensions equal `dim` (when given). Blank lines are
/// skipped.
pub struct FrameReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    last: Option<u64>,
    dim: Option<usize>,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(reader: R, dim: Option<usize>) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            last: None,
            dim,
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = anyhow::Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let line = self.line;
            let bad = |message: String| Some(Err(InputError::Line { line, message }.into()));
            let frame = match parse_frame_line(&text, line) {
                Ok(f) => f,
                Err(e) => return Some(Err(e.into())),
            };
            if let Some(prev) = self.last {
                if frame.frame <= prev {
                    return bad(format!(
                        "frame {} does not follow frame {prev}",
                        frame.frame
                    ));
                }
            }
            if let Some(d) = self.dim {
                if let Some(z) = frame.measurements.iter().find(|z| z.z.len() != d) {
                    return bad(format!(
                        "measurement {} has {} entries, expected {d}",
                        z.id.index,
                        z.z.len()
                    ));
                }
            }
            self.last = Some(frame.frame);
            return Some(Ok(frame));
        }
    }
}

pub fn read_frames(path: &Path, dim: Option<usize>) -> anyhow::Result<Vec<Frame>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FrameReader::new(BufReader::new(file), dim).collect()
}

pub fn write_frames<W: Write>(out: &mut W, frames: &[Frame]) -> std::io::Result<()> {
    for f in frames {
        let rec = FrameRecord {
            frame: f.frame,
            time: f.time,
            measurements: f
                .measurements
                .iter()
                .map(|z| z.z.iter().copied().collect())
                .collect(),
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub const COUNTS_HEADER: &str = "frame,num_factors,total_hypos";

pub fn write_counts<W: Write>(
    out: &mut W,
    frame: u64,
    num_factors: usize,
    total_hypos: usize,
) -> std::io::Result<()> {
    writeln!(out, "{frame},{num_factors},{total_hypos}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub factor: u64,
    pub label: String,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimates {
    pub frame: u64,
    pub estimates: Vec<Estimate>,
}

/// The tracks of every factor's maximum-weight hypothesis.
pub fn extract_estimates(state: &FilterState, frame: u64) -> FrameEstimates {
    let mut estimates = Vec::new();
    for f in &state.factors {
        if let Some(h) = f.map_hypothesis() {
            for t in &h.tracks {
                estimates.push(Estimate {
                    factor: f.id.0,
                    label: t.label.to_string(),
                    mean: t.density.mean.iter().copied().collect(),
                });
            }
        }
    }
    FrameEstimates { frame, estimates }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Hypothesis tree in Graphviz form. Node 0 is the virtual `head` root;
/// nodes in `live` (the hypotheses currently held) are drawn as diamonds.
pub fn write_tree<W: Write>(
    out: &mut W,
    events: &[PedigreeEvent],
    live: &BTreeSet<NodeId>,
) -> std::io::Result<()> {
    writeln!(out, "digraph pedigree {{")?;
    writeln!(out, "  n0 [label=\"head\", shape=box];")?;
    for e in events {
        let weight = match e.kind.weight_prefix() {
            Some(p) => format!("{p} {:.4}", e.weight),
            None => format!("{:.4}", e.weight),
        };
        let assoc = if e.track_assoc.is_empty() {
            "{}".to_string()
        } else {
            e.track_assoc.join(" ")
        };
        let shape = if live.contains(&e.node) {
            "diamond"
        } else {
            "ellipse"
        };
        writeln!(
            out,
            "  n{} [label=\"{}\\n{}\\nframe {}\", shape={}];",
            e.node,
            dot_escape(&assoc),
            weight,
            e.frame,
            shape
        )?;
        for p in &e.parents {
            writeln!(out, "  n{} -> n{};", p, e.node)?;
        }
    }
    writeln!(out, "}}")
}

#[derive(Default)]
struct PedigreeLog(Vec<PedigreeEvent>);

impl EventSink for PedigreeLog {
    fn record(&mut self, event: TrackerEvent) {
        if let TrackerEvent::Hypothesis(e) = event {
            self.0.push(e);
        }
    }

    fn wants_pedigree(&self) -> bool {
        true
    }
}

/// Runs the tracker over a frame file, writing `counts.csv`,
/// `estimates.jsonl` and, with `debug_tree`, `pedigree.dot` into `out_dir`.
pub fn run_track(
    frames_path: &Path,
    config_path: &Path,
    out_dir: &Path,
    debug_tree: bool,
) -> anyhow::Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let cfg = parse_config(&text)?;
    let dim = cfg.sensor.meas_dim();
    let file =
        File::open(frames_path).with_context(|| format!("opening {}", frames_path.display()))?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut counts = BufWriter::new(File::create(out_dir.join("counts.csv"))?);
    let mut estimates = BufWriter::new(File::create(out_dir.join("estimates.jsonl"))?);
    writeln!(counts, "{COUNTS_HEADER}")?;

    let mut state = FilterState::new(cfg);
    let mut log = PedigreeLog::default();
    let mut null = NullSink;
    for frame in FrameReader::new(BufReader::new(file), Some(dim)) {
        let frame = frame.with_context(|| format!("reading {}", frames_path.display()))?;
        let sink: &mut dyn EventSink = if debug_tree { &mut log } else { &mut null };
        process_frame(&mut state, frame.frame, &frame.measurements, sink)
            .with_context(|| format!("processing frame {}", frame.frame))?;
        write_counts(
            &mut counts,
            frame.frame,
            state.factors.len(),
            state.total_hypotheses(),
        )?;
        serde_json::to_writer(&mut estimates, &extract_estimates(&state, frame.frame))?;
        estimates.write_all(b"\n")?;
    }
    counts.flush()?;
    estimates.flush()?;

    if debug_tree {
        let live: BTreeSet<NodeId> = state
            .factors
            .iter()
            .flat_map(|f| f.hypotheses().iter().map(|h| h.node))
            .collect();
        let mut dot = BufWriter::new(File::create(out_dir.join("pedigree.dot"))?);
        write_tree(&mut dot, &log.0, &live)?;
        dot.flush()?;
    }
    Ok(())
}

/// Simulates a scenario and writes it as a frame file.
pub fn run_simulate(spec_path: &Path, out_path: &Path, seed: u64) -> anyhow::Result<()> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: ScenarioSpec =
        toml::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    let frames = simulate(&spec, seed)?;
    let mut out = BufWriter::new(
        File::create(out_path).with_context(|| format!("creating {}", out_path.display()))?,
    );
    write_frames(&mut out, &frames)?;
    out.flush()?;
    Ok(())
}
