//! Named predictor columns, the feature-matrix CSV format, and conversion of
//! feature vectors into model design matrices.
//!
//! The CSV has one row per tie: `src,dst` followed by the predictor columns in
//! the order of [`Feature::ALL`]. Missing attribute cells are empty. A leading
//! `#` line may carry run provenance and is skipped by the reader.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::SexPair;
use crate::bowtie::FeatureVector;
use crate::graph::NodeId;
use crate::learn::{Column, FeatureMatrix, LearnError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("feature CSV line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("row {row} is missing attribute {column}; impute or restrict to complete cases")]
    MissingAttribute { row: usize, column: &'static str },
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    DegreeSum,
    DegreeDiff,
    StrengthSum,
    StrengthDiff,
    ClusteringSum,
    ClusteringDiff,
    WeightedClusteringSum,
    WeightedClusteringDiff,
    AgeSum,
    AgeDiff,
    SexPair,
    SameZip,
    Overlap,
    WeightedOverlap,
    SharedNodes,
    SharedEdges,
    NonsharedNodesSum,
    NonsharedNodesDiff,
    NonsharedEdgesSum,
    NonsharedEdgesDiff,
}

/// Storage type of a column in the feature CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Count,
    Real,
    Category,
    Binary,
}

impl Feature {
    pub const ALL: [Feature; 20] = [
        Feature::DegreeSum,
        Feature::DegreeDiff,
        Feature::StrengthSum,
        Feature::StrengthDiff,
        Feature::ClusteringSum,
        Feature::ClusteringDiff,
        Feature::WeightedClusteringSum,
        Feature::WeightedClusteringDiff,
        Feature::AgeSum,
        Feature::AgeDiff,
        Feature::SexPair,
        Feature::SameZip,
        Feature::Overlap,
        Feature::WeightedOverlap,
        Feature::SharedNodes,
        Feature::SharedEdges,
        Feature::NonsharedNodesSum,
        Feature::NonsharedNodesDiff,
        Feature::NonsharedEdgesSum,
        Feature::NonsharedEdgesDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::DegreeSum => "k_s",
            Feature::DegreeDiff => "k_d",
            Feature::StrengthSum => "s_s",
            Feature::StrengthDiff => "s_d",
            Feature::ClusteringSum => "cc_s",
            Feature::ClusteringDiff => "cc_d",
            Feature::WeightedClusteringSum => "wcc_s",
            Feature::WeightedClusteringDiff => "wcc_d",
            Feature::AgeSum => "a_s",
            Feature::AgeDiff => "a_d",
            Feature::SexPair => "sex",
            Feature::SameZip => "z",
            Feature::Overlap => "o",
            Feature::WeightedOverlap => "wo",
            Feature::SharedNodes => "n_ij",
            Feature::SharedEdges => "e_ij",
            Feature::NonsharedNodesSum => "n_s",
            Feature::NonsharedNodesDiff => "n_d",
            Feature::NonsharedEdgesSum => "e_s",
            Feature::NonsharedEdgesDiff => "e_d",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Feature::DegreeSum => "sum of the degrees of i and j",
            Feature::DegreeDiff => "absolute difference of the degrees of i and j",
            Feature::StrengthSum => "sum of the strengths of i and j",
            Feature::StrengthDiff => "absolute difference of the strengths of i and j",
            Feature::ClusteringSum => "sum of the non-shared clustering coefficients",
            Feature::ClusteringDiff => "absolute difference of the non-shared clustering coefficients",
            Feature::WeightedClusteringSum => "sum of the non-shared weighted clustering coefficients",
            Feature::WeightedClusteringDiff => {
                "absolute difference of the non-shared weighted clustering coefficients"
            }
            Feature::AgeSum => "sum of the ages of i and j",
            Feature::AgeDiff => "absolute difference of the ages of i and j",
            Feature::SexPair => "sex pairing of the tie (MM, FF, FM)",
            Feature::SameZip => "1 if i and j share a billing zip code",
            Feature::Overlap => "unweighted edge overlap",
            Feature::WeightedOverlap => "weighted edge overlap",
            Feature::SharedNodes => "number of common friends",
            Feature::SharedEdges => "number of edges among the common friends",
            Feature::NonsharedNodesSum => "sum of the node counts of the non-shared groups",
            Feature::NonsharedNodesDiff => "absolute difference of the node counts of the non-shared groups",
            Feature::NonsharedEdgesSum => "sum of the edge counts of the non-shared groups",
            Feature::NonsharedEdgesDiff => "absolute difference of the edge counts of the non-shared groups",
        }
    }

    pub fn value_type(self) -> ValueType {
        match self {
            Feature::DegreeSum
            | Feature::DegreeDiff
            | Feature::SharedNodes
            | Feature::SharedEdges
            | Feature::NonsharedNodesSum
            | Feature::NonsharedNodesDiff
            | Feature::NonsharedEdgesSum
            | Feature::NonsharedEdgesDiff => ValueType::Count,
            Feature::SexPair => ValueType::Category,
            Feature::SameZip => ValueType::Binary,
            _ => ValueType::Real,
        }
    }

    pub fn is_attribute(self) -> bool {
        matches!(self, Feature::AgeSum | Feature::AgeDiff | Feature::SexPair | Feature::SameZip)
    }

    /// Numeric value of a non-categorical feature; `None` when missing.
    pub fn numeric(self, fv: &FeatureVector) -> Option<f64> {
        Some(match self {
            Feature::DegreeSum => fv.degree_sum as f64,
            Feature::DegreeDiff => fv.degree_diff as f64,
            Feature::StrengthSum => fv.strength_sum,
            Feature::StrengthDiff => fv.strength_diff,
            Feature::ClusteringSum => fv.clustering_sum,
            Feature::ClusteringDiff => fv.clustering_diff,
            Feature::WeightedClusteringSum => fv.wclustering_sum,
            Feature::WeightedClusteringDiff => fv.wclustering_diff,
            Feature::AgeSum => fv.age_sum?,
            Feature::AgeDiff => fv.age_diff?,
            Feature::SexPair => fv.sex_pair?.level() as f64,
            Feature::SameZip => fv.same_zip? as u8 as f64,
            Feature::Overlap => fv.overlap,
            Feature::WeightedOverlap => fv.weighted_overlap,
            Feature::SharedNodes => fv.shared_nodes as f64,
            Feature::SharedEdges => fv.shared_edges as f64,
            Feature::NonsharedNodesSum => fv.nonshared_nodes_sum as f64,
            Feature::NonsharedNodesDiff => fv.nonshared_nodes_diff as f64,
            Feature::NonsharedEdgesSum => fv.nonshared_edges_sum as f64,
            Feature::NonsharedEdgesDiff => fv.nonshared_edges_diff as f64,
        })
    }

    fn cell(self, fv: &FeatureVector) -> String {
        match self {
            Feature::SexPair => fv.sex_pair.map(|s| s.as_str().to_string()).unwrap_or_default(),
            Feature::SameZip => fv.same_zip.map(|z| (z as u8).to_string()).unwrap_or_default(),
            Feature::AgeSum | Feature::AgeDiff => {
                self.numeric(fv).map(|v| v.to_string()).unwrap_or_default()
            }
            f if f.value_type() == ValueType::Count => {
                format!("{}", self.numeric(fv).unwrap() as u64)
            }
            _ => self.numeric(fv).unwrap().to_string(),
        }
    }
}

/// Column names of the feature CSV, including the leading `src,dst`.
pub fn csv_header() -> Vec<&'static str> {
    let mut h = vec!["src", "dst"];
    h.extend(Feature::ALL.iter().map(|f| f.name()));
    h
}

/// Sidecar description of the feature CSV columns.
pub fn schema_document() -> serde_json::Value {
    let mut columns = vec![
        serde_json::json!({"name": "src", "type": "node_id", "description": "focal node i"}),
        serde_json::json!({"name": "dst", "type": "node_id", "description": "focal node j"}),
    ];
    for f in Feature::ALL {
        columns.push(serde_json::json!({
            "name": f.name(),
            "type": f.value_type(),
            "attribute": f.is_attribute(),
            "description": f.description(),
        }));
    }
    serde_json::json!({ "format": "bowtie-features", "version": 1, "columns": columns })
}

pub fn write_feature_csv<W: Write>(
    mut out: W,
    pairs: &[(NodeId, NodeId)],
    feats: &[FeatureVector],
    provenance: Option<&str>,
) -> Result<(), FeatureError> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    let mut record = Vec::with_capacity(22);
    for (&(i, j), fv) in pairs.iter().zip(feats) {
        record.clear();
        record.push(i.to_string());
        record.push(j.to_string());
        record.extend(Feature::ALL.iter().map(|f| f.cell(fv)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(
    input: R,
) -> Result<(Vec<(NodeId, NodeId)>, Vec<FeatureVector>), FeatureError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != csv_header() {
        return Err(FeatureError::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut pairs = Vec::new();
    let mut feats = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| FeatureError::Parse { line, message };
        let num = |k: usize| -> Result<f64, FeatureError> {
            rec[k].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", csv_header()[k])))
        };
        let count = |k: usize| -> Result<usize, FeatureError> {
            rec[k].parse::<usize>().map_err(|e| bad(format!("column {}: {e}", csv_header()[k])))
        };
        let opt = |k: usize| -> Result<Option<f64>, FeatureError> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        let node = |k: usize| -> Result<NodeId, FeatureError> {
            rec[k].parse::<NodeId>().map_err(|e| bad(format!("node id: {e}")))
        };
        pairs.push((node(0)?, node(1)?));
        let sex_pair = match &rec[12] {
            "" => None,
            s => Some(s.parse::<SexPair>().map_err(bad)?),
        };
        let same_zip = match &rec[13] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(bad(format!("z must be 0 or 1, found '{other}'"))),
        };
        feats.push(FeatureVector {
            degree_sum: count(2)?,
            degree_diff: count(3)?,
            strength_sum: num(4)?,
            strength_diff: num(5)?,
            clustering_sum: num(6)?,
            clustering_diff: num(7)?,
            wclustering_sum: num(8)?,
            wclustering_diff: num(9)?,
            age_sum: opt(10)?,
            age_diff: opt(11)?,
            sex_pair,
            same_zip,
            overlap: num(14)?,
            weighted_overlap: num(15)?,
            shared_nodes: count(16)?,
            shared_edges: count(17)?,
            nonshared_nodes_sum: count(18)?,
            nonshared_nodes_diff: count(19)?,
            nonshared_edges_sum: count(20)?,
            nonshared_edges_diff: count(21)?,
        });
    }
    Ok((pairs, feats))
}

/// Predictor subsets compared in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Every predictor.
    Model1,
    /// Every predictor except weighted overlap.
    Model2,
    /// Every predictor except unweighted overlap.
    Model3,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Model1, FeatureSet::Model2, FeatureSet::Model3];

    pub fn excluded(self) -> Option<Feature> {
        match self {
            FeatureSet::Model1 => None,
            FeatureSet::Model2 => Some(Feature::WeightedOverlap),
            FeatureSet::Model3 => Some(Feature::Overlap),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            FeatureSet::Model1 => 1,
            FeatureSet::Model2 => 2,
            FeatureSet::Model3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(FeatureSet::Model1),
            2 => Some(FeatureSet::Model2),
            3 => Some(FeatureSet::Model3),
            _ => None,
        }
    }
}

/// How the sex pairing enters a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// One three-level categorical column (forests).
    Categorical,
    /// Indicators `I_FF` and `I_FM` with male-male as reference (regressions).
    Dummies,
}

pub const DUMMY_FF: &str = "I_FF";
pub const DUMMY_FM: &str = "I_FM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub set: FeatureSet,
    pub encoding: Encoding,
    /// Include age and sex predictors.
    pub demographics: bool,
    /// Include the same-zip indicator.
    pub zip: bool,
}

impl DesignSpec {
    pub fn features(&self) -> Vec<Feature> {
        Feature::ALL
            .iter()
            .copied()
            .filter(|f| Some(*f) != self.set.excluded())
            .filter(|f| match f {
                Feature::AgeSum | Feature::AgeDiff | Feature::SexPair => self.demographics,
                Feature::SameZip => self.zip,
                _ => true,
            })
            .collect()
    }

    pub fn columns(&self) -> Vec<Column> {
        let mut cols = Vec::new();
        for f in self.features() {
            match (f, self.encoding) {
                (Feature::SexPair, Encoding::Categorical) => cols.push(Column::categorical("sex", 3)),
                (Feature::SexPair, Encoding::Dummies) => {
                    cols.push(Column::numeric(DUMMY_FF));
                    cols.push(Column::numeric(DUMMY_FM));
                }
                _ => cols.push(Column::numeric(f.name())),
            }
        }
        cols
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns().into_iter().map(|c| c.name).collect()
    }

    pub fn matrix(&self, feats: &[FeatureVector]) -> Result<FeatureMatrix, FeatureError> {
        let features = self.features();
        let columns = self.columns();
        let mut values = Vec::with_capacity(feats.len() * columns.len());
        for (row, fv) in feats.iter().enumerate() {
            for &f in &features {
                match (f, self.encoding) {
                    (Feature::SexPair, Encoding::Dummies) => {
                        let pair = fv
                            .sex_pair
                            .ok_or(FeatureError::MissingAttribute { row, column: f.name() })?;
                        values.push((pair == SexPair::FF) as u8 as f64);
                        values.push((pair == SexPair::FM) as u8 as f64);
                    }
                    _ => values.push(
                        f.numeric(fv)
                            .ok_or(FeatureError::MissingAttribute { row, column: f.name() })?,
                    ),
                }
            }
        }
        Ok(FeatureMatrix::new(columns, feats.len(), values)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::{AttributeTable, Sex};
    use crate::bowtie::all_edge_features;
    use crate::graph::WeightedGraph;

    fn sample() -> (Vec<(NodeId, NodeId)>, Vec<FeatureVector>) {
        let g = WeightedGraph::from_edges(&[
            (0, 1, 1.5),
            (0, 2, 0.1),
            (1, 2, 3.0),
            (2, 3, 1.0),
            (3, 4, 2.0),
        ])
        .unwrap();
        let mut attrs = AttributeTable::new(5);
        for i in 0..4 {
            attrs.set_age(i, 20.0 + i as f64);
            attrs.set_sex(i, if i % 2 == 0 { Sex::M } else { Sex::F });
            attrs.set_zip(i, if i < 2 { "a" } else { "b" });
        }
        all_edge_features(&g, Some(&attrs))
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (pairs, feats) = sample();
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &pairs, &feats, Some("config_hash=abc seed=1")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_hash=abc seed=1\nsrc,dst,k_s,k_d,"));
        let (p2, f2) = read_feature_csv(&buf[..]).unwrap();
        assert_eq!(p2, pairs);
        assert_eq!(f2, feats);
        // Node 4 has no attributes, so its tie has empty attribute cells.
        assert!(text.lines().last().unwrap().contains(",,,,"));
    }

    #[test]
    fn model_sets_drop_exactly_one_column() {
        let spec = |set| DesignSpec { set, encoding: Encoding::Dummies, demographics: true, zip: true };
        let full = spec(FeatureSet::Model1).column_names();
        let m2 = spec(FeatureSet::Model2).column_names();
        let m3 = spec(FeatureSet::Model3).column_names();
        let diff = |a: &[String], b: &[String]| -> Vec<String> {
            a.iter().filter(|c| !b.contains(c)).cloned().collect()
        };
        assert_eq!(diff(&full, &m2), vec!["wo".to_string()]);
        assert_eq!(diff(&full, &m3), vec!["o".to_string()]);
        assert!(diff(&m2, &full).is_empty() && diff(&m3, &full).is_empty());
    }

    #[test]
    fn dummies_use_male_male_reference() {
        let (_, feats) = sample();
        let spec = DesignSpec {
            set: FeatureSet::Model1,
            encoding: Encoding::Dummies,
            demographics: true,
            zip: true,
        };
        let names = spec.column_names();
        let x = spec.matrix(&feats[..4]).unwrap();
        let ff = names.iter().position(|n| n == DUMMY_FF).unwrap();
        let fm = names.iter().position(|n| n == DUMMY_FM).unwrap();
        for (r, fv) in feats[..4].iter().enumerate() {
            let expect = match fv.sex_pair.unwrap() {
                SexPair::MM => (0.0, 0.0),
                SexPair::FF => (1.0, 0.0),
                SexPair::FM => (0.0, 1.0),
            };
            assert_eq!((x.get(r, ff), x.get(r, fm)), expect);
        }
        assert!(matches!(
            spec.matrix(&feats),
            Err(FeatureError::MissingAttribute { row: 4, .. })
        ));
    }

    #[test]
    fn categorical_encoding_has_single_sex_column() {
        let spec = DesignSpec {
            set: FeatureSet::Model1,
            encoding: Encoding::Categorical,
            demographics: true,
            zip: false,
        };
        let names = spec.column_names();
        assert!(names.contains(&"sex".to_string()));
        assert!(!names.contains(&"z".to_string()));
        assert_eq!(names.len(), 19);
    }
}
