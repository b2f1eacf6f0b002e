//! Response variables: multiplex count strength, duration shares, and the
//! log-and-center transform used by the regressions.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, WeightedGraph, LAYER_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum StrengthError {
    #[error("edge ({src}, {dst}) has weight {weight}; multiplex strength needs an integer layer count in 1..={max}")]
    NotLayerCount { src: NodeId, dst: NodeId, weight: f64, max: u8 },
    #[error("node {0} has zero strength")]
    ZeroStrength(NodeId),
    #[error("row {row} has nonpositive value {value}; cannot take a logarithm")]
    NonPositive { row: usize, value: f64 },
    #[error("target CSV line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("target CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Number of distinct relationship layers.
    MultiplexW,
    /// Share of the source's total duration spent on the tie.
    NormalizedY,
    /// Mean of the two directed shares.
    AveragedZ,
}

impl TargetKind {
    pub fn short(self) -> &'static str {
        match self {
            TargetKind::MultiplexW => "w",
            TargetKind::NormalizedY => "y",
            TargetKind::AveragedZ => "z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Value seen from `src`.
    Ij,
    /// Value seen from `dst`.
    Ji,
    /// Symmetric value.
    Sym,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Ij => "ij",
            Orientation::Ji => "ji",
            Orientation::Sym => "sym",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub src: NodeId,
    pub dst: NodeId,
    pub orientation: Orientation,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    None,
    LogCentered { center: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieStrengthTarget {
    pub kind: TargetKind,
    pub rows: Vec<TargetRow>,
    pub transform: Transform,
}

impl TieStrengthTarget {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Layer count of every edge, in canonical edge order.
pub fn multiplex_strength(g: &WeightedGraph) -> Result<TieStrengthTarget, StrengthError> {
    let mut rows = Vec::with_capacity(g.edge_count());
    for (src, dst, w) in g.edges() {
        if w.fract() != 0.0 || !(1.0..=LAYER_COUNT as f64).contains(&w) {
            return Err(StrengthError::NotLayerCount { src, dst, weight: w, max: LAYER_COUNT });
        }
        rows.push(TargetRow { src, dst, orientation: Orientation::Sym, value: w });
    }
    Ok(TieStrengthTarget { kind: TargetKind::MultiplexW, rows, transform: Transform::None })
}

fn strength_of(g: &WeightedGraph, v: NodeId) -> Result<f64, StrengthError> {
    let s = g.strength(v);
    if s > 0.0 {
        Ok(s)
    } else {
        Err(StrengthError::ZeroStrength(v))
    }
}

/// Directed duration shares. With `both` every edge gives an `ij` row
/// followed by a `ji` row; otherwise only the `ij` row is kept.
pub fn normalized_strengths(g: &WeightedGraph, both: bool) -> Result<TieStrengthTarget, StrengthError> {
    let mut rows = Vec::with_capacity(g.edge_count() * if both { 2 } else { 1 });
    for (i, j, w) in g.edges() {
        rows.push(TargetRow { src: i, dst: j, orientation: Orientation::Ij, value: w / strength_of(g, i)? });
        if both {
            rows.push(TargetRow { src: i, dst: j, orientation: Orientation::Ji, value: w / strength_of(g, j)? });
        }
    }
    Ok(TieStrengthTarget { kind: TargetKind::NormalizedY, rows, transform: Transform::None })
}

pub fn averaged_strength(g: &WeightedGraph) -> Result<TieStrengthTarget, StrengthError> {
    let mut rows = Vec::with_capacity(g.edge_count());
    for (i, j, w) in g.edges() {
        let z = (w / strength_of(g, i)? + w / strength_of(g, j)?) / 2.0;
        rows.push(TargetRow { src: i, dst: j, orientation: Orientation::Sym, value: z });
    }
    Ok(TieStrengthTarget { kind: TargetKind::AveragedZ, rows, transform: Transform::None })
}

/// `v <- ln v - mean(ln v)`. A target that is already transformed is returned unchanged.
pub fn apply_transform(t: &TieStrengthTarget) -> Result<TieStrengthTarget, StrengthError> {
    if let Transform::LogCentered { .. } = t.transform {
        return Ok(t.clone());
    }
    let mut logs = Vec::with_capacity(t.rows.len());
    for (row, r) in t.rows.iter().enumerate() {
        if !(r.value > 0.0) {
            return Err(StrengthError::NonPositive { row, value: r.value });
        }
        logs.push(r.value.ln());
    }
    let center = if logs.is_empty() { 0.0 } else { logs.iter().sum::<f64>() / logs.len() as f64 };
    let rows = t
        .rows
        .iter()
        .zip(&logs)
        .map(|(r, l)| TargetRow { value: l - center, ..*r })
        .collect();
    Ok(TieStrengthTarget { kind: t.kind, rows, transform: Transform::LogCentered { center } })
}

pub fn invert_value(transform: Transform, v: f64) -> f64 {
    match transform {
        Transform::None => v,
        Transform::LogCentered { center } => (v + center).exp(),
    }
}

pub fn invert(t: &TieStrengthTarget) -> TieStrengthTarget {
    TieStrengthTarget {
        kind: t.kind,
        rows: t
            .rows
            .iter()
            .map(|r| TargetRow { value: invert_value(t.transform, r.value), ..*r })
            .collect(),
        transform: Transform::None,
    }
}

pub fn write_target_csv<W: Write>(
    mut out: W,
    t: &TieStrengthTarget,
    provenance: Option<&str>,
) -> std::io::Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    writeln!(out, "src,dst,orientation,value")?;
    for r in &t.rows {
        writeln!(out, "{},{},{},{}", r.src, r.dst, r.orientation.as_str(), r.value)?;
    }
    Ok(())
}

/// Reads `src,dst,orientation,value`. The caller supplies the kind since
/// the file does not carry it.
pub fn read_target_csv<R: Read>(input: R, kind: TargetKind) -> Result<TieStrengthTarget, StrengthError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers().map_err(|e| StrengthError::Csv(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["src", "dst", "orientation", "value"] {
        return Err(StrengthError::Parse { line: 1, message: format!("unexpected header {header:?}") });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| StrengthError::Csv(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| StrengthError::Parse { line, message };
        let orientation = match &rec[2] {
            "ij" => Orientation::Ij,
            "ji" => Orientation::Ji,
            "sym" => Orientation::Sym,
            o => return Err(bad(format!("orientation must be ij, ji or sym, found '{o}'"))),
        };
        rows.push(TargetRow {
            src: rec[0].parse().map_err(|e| bad(format!("src: {e}")))?,
            dst: rec[1].parse().map_err(|e| bad(format!("dst: {e}")))?,
            orientation,
            value: rec[3].parse().map_err(|e| bad(format!("value: {e}")))?,
        });
    }
    Ok(TieStrengthTarget { kind, rows, transform: Transform::None })
}
