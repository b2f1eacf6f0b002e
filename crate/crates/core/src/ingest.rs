//! CSV readers for the raw inputs: weighted edge lists, layered survey
//! reports, node attributes, and daily call records.
//!
//! Node labels are arbitrary strings. A [`NodeMap`] assigns dense ids in
//! order of first appearance and is written out as `nodemap.csv`
//! (`id,label`) so results can be joined back to the source data.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeTable, NodeAttributes};
use crate::graph::{GraphError, MultiplexRecord, NodeId, LAYER_COUNT};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: {source}")]
    Csv { file: &'static str, source: csv::Error },
    #[error("{file}: missing column '{column}' in header")]
    MissingColumn { file: &'static str, column: &'static str },
    #[error("{file} line {line}: {message}")]
    Parse { file: &'static str, line: u64, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMap {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl NodeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as NodeId;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |source| IngestError::Csv { file: "nodemap", source };
        w.write_record(["id", "label"]).map_err(wrap)?;
        for (id, label) in self.labels.iter().enumerate() {
            w.write_record([id.to_string().as_str(), label]).map_err(wrap)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, IngestError> {
        let mut table = Table::open("nodemap", input, &["id", "label"])?;
        let mut map = NodeMap::new();
        while let Some(row) = table.next()? {
            let id: usize = row.parse(0, "id")?;
            if id != map.len() {
                return Err(row.error(format!("ids must be dense and ascending; expected {}", map.len())));
            }
            map.intern(row.get(1));
        }
        Ok(map)
    }
}

/// Header-indexed CSV reader with line-numbered errors.
struct Table<R: Read> {
    file: &'static str,
    reader: csv::Reader<R>,
    columns: Vec<usize>,
    record: csv::StringRecord,
}

struct Row<'a> {
    file: &'static str,
    line: u64,
    record: &'a csv::StringRecord,
    columns: &'a [usize],
}

impl<R: Read> Table<R> {
    fn open(file: &'static str, input: R, required: &[&'static str]) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader.headers().map_err(|source| IngestError::Csv { file, source })?.clone();
        let mut columns = Vec::with_capacity(required.len());
        for &column in required {
            match header.iter().position(|h| h == column) {
                Some(k) => columns.push(k),
                None => return Err(IngestError::MissingColumn { file, column }),
            }
        }
        Ok(Self { file, reader, columns, record: csv::StringRecord::new() })
    }

    fn next(&mut self) -> Result<Option<Row<'_>>, IngestError> {
        let more = self
            .reader
            .read_record(&mut self.record)
            .map_err(|source| IngestError::Csv { file: self.file, source })?;
        if !more {
            return Ok(None);
        }
        Ok(Some(Row {
            file: self.file,
            line: self.record.position().map(|p| p.line()).unwrap_or(0),
            record: &self.record,
            columns: &self.columns,
        }))
    }
}

impl Row<'_> {
    fn get(&self, k: usize) -> &str {
        self.record.get(self.columns[k]).unwrap_or("")
    }

    fn error(&self, message: String) -> IngestError {
        IngestError::Parse { file: self.file, line: self.line, message }
    }

    fn parse<T: std::str::FromStr>(&self, k: usize, name: &str) -> Result<T, IngestError>
    where
        T::Err: std::fmt::Display,
    {
        let cell = self.get(k);
        cell.parse().map_err(|e| self.error(format!("{name} '{cell}': {e}")))
    }

    fn label(&self, k: usize, name: &str) -> Result<&str, IngestError> {
        match self.get(k) {
            "" => Err(self.error(format!("empty {name}"))),
            s => Ok(s),
        }
    }
}

/// Reads `src,dst,weight`. Duplicate pairs are kept as separate entries;
/// graph construction sums them.
pub fn read_edge_list<R: Read>(
    input: R,
    nodes: &mut NodeMap,
) -> Result<Vec<(NodeId, NodeId, f64)>, IngestError> {
    let mut table = Table::open("edge list", input, &["src", "dst", "weight"])?;
    let mut edges = Vec::new();
    while let Some(row) = table.next()? {
        let src = nodes.intern(row.label(0, "src")?);
        let dst = nodes.intern(row.label(1, "dst")?);
        let weight: f64 = row.parse(2, "weight")?;
        if src == dst {
            return Err(row.error(format!("self-loop on '{}'", row.get(0))));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(row.error(format!("weight must be finite and > 0, found {weight}")));
        }
        edges.push((src, dst, weight));
    }
    Ok(edges)
}

/// Layer names mapped to indices `0..12`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub layers: BTreeMap<String, u8>,
}

impl LayerManifest {
    /// Reads `layer,index`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, IngestError> {
        let mut table = Table::open("layer manifest", input, &["layer", "index"])?;
        let mut layers = BTreeMap::new();
        let mut used = [false; LAYER_COUNT as usize];
        while let Some(row) = table.next()? {
            let index: u8 = row.parse(1, "index")?;
            if index >= LAYER_COUNT {
                return Err(row.error(format!("index {index} outside 0..{LAYER_COUNT}")));
            }
            if std::mem::replace(&mut used[index as usize], true) {
                return Err(row.error(format!("index {index} assigned twice")));
            }
            let name = row.label(0, "layer")?.to_string();
            if layers.insert(name.clone(), index).is_some() {
                return Err(row.error(format!("layer '{name}' listed twice")));
            }
        }
        Ok(Self { layers })
    }

    pub fn index(&self, name: &str) -> Option<u8> {
        self.layers.get(name).copied()
    }
}

/// Reads `src,dst,layer`. A layer cell is looked up in the manifest when one
/// is given, and otherwise must be an index in `0..12`.
pub fn read_multiplex<R: Read>(
    input: R,
    nodes: &mut NodeMap,
    manifest: Option<&LayerManifest>,
) -> Result<Vec<MultiplexRecord>, IngestError> {
    let mut table = Table::open("multiplex list", input, &["src", "dst", "layer"])?;
    let mut records = Vec::new();
    while let Some(row) = table.next()? {
        let src = nodes.intern(row.label(0, "src")?);
        let dst = nodes.intern(row.label(1, "dst")?);
        let cell = row.get(2);
        let layer = match manifest {
            Some(m) => m
                .index(cell)
                .ok_or_else(|| row.error(format!("layer '{cell}' not in manifest")))?,
            None => {
                let l: u8 = row.parse(2, "layer")?;
                if l >= LAYER_COUNT {
                    return Err(row.error(format!("layer {l} outside 0..{LAYER_COUNT}")));
                }
                l
            }
        };
        if src == dst {
            return Err(row.error(format!("self-loop on '{}'", row.get(0))));
        }
        records.push(MultiplexRecord { src, dst, layer });
    }
    Ok(records)
}

/// Reads `node,age,sex,zip,household`; empty cells are missing. Nodes not yet
/// in the map are added, so attribute-only individuals still get ids.
pub fn read_attributes<R: Read>(input: R, nodes: &mut NodeMap) -> Result<AttributeTable, IngestError> {
    let mut table = Table::open("attributes", input, &["node", "age", "sex", "zip", "household"])?;
    let mut rows: Vec<(NodeId, NodeAttributes, u64)> = Vec::new();
    while let Some(row) = table.next()? {
        let node = nodes.intern(row.label(0, "node")?);
        let opt = |k: usize| Some(row.get(k)).filter(|s| !s.is_empty());
        let age = match opt(1) {
            None => None,
            Some(_) => {
                let a: f64 = row.parse(1, "age")?;
                if !a.is_finite() || a < 0.0 {
                    return Err(row.error(format!("age must be a nonnegative number, found {a}")));
                }
                Some(a)
            }
        };
        let sex = match opt(2) {
            None => None,
            Some(s) => Some(s.parse().map_err(|e: String| row.error(e))?),
        };
        let attrs = NodeAttributes {
            age,
            sex,
            zip: opt(3).map(str::to_string),
            household: opt(4).map(str::to_string),
        };
        rows.push((node, attrs, row.line));
    }
    let mut out = AttributeTable::new(nodes.len());
    let mut seen = vec![false; nodes.len()];
    for (node, attrs, line) in rows {
        if std::mem::replace(&mut seen[node as usize], true) {
            return Err(IngestError::Parse {
                file: "attributes",
                line,
                message: format!("node '{}' listed twice", nodes.label(node).unwrap_or("")),
            });
        }
        out.set(node, attrs);
    }
    Ok(out)
}

pub fn write_attributes<W: Write>(out: W, attrs: &AttributeTable, nodes: Option<&NodeMap>) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |source| IngestError::Csv { file: "attributes", source };
    w.write_record(["node", "age", "sex", "zip", "household"]).map_err(wrap)?;
    for (i, a) in attrs.rows().iter().enumerate() {
        let label = nodes
            .and_then(|m| m.label(i as NodeId))
            .map(str::to_string)
            .unwrap_or_else(|| i.to_string());
        w.write_record([
            label,
            a.age.map(|v| v.to_string()).unwrap_or_default(),
            a.sex.map(|s| s.to_string()).unwrap_or_default(),
            a.zip.clone().unwrap_or_default(),
            a.household.clone().unwrap_or_default(),
        ])
        .map_err(wrap)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdrSummary {
    pub records: usize,
    pub self_calls_dropped: usize,
    pub pairs: usize,
    pub zero_duration_pairs_dropped: usize,
}

/// Reads daily records `date,caller,callee,duration_min,calls,sms,mms` and
/// returns one edge per unordered pair whose summed duration is positive.
/// Only the duration column contributes to the weight.
pub fn read_cdr<R: Read>(
    input: R,
    nodes: &mut NodeMap,
) -> Result<(Vec<(NodeId, NodeId, f64)>, CdrSummary), IngestError> {
    let mut table = Table::open(
        "call records",
        input,
        &["date", "caller", "callee", "duration_min", "calls", "sms", "mms"],
    )?;
    let mut totals: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut summary = CdrSummary::default();
    while let Some(row) = table.next()? {
        summary.records += 1;
        let a = nodes.intern(row.label(1, "caller")?);
        let b = nodes.intern(row.label(2, "callee")?);
        let minutes: f64 = row.parse(3, "duration_min")?;
        if !minutes.is_finite() || minutes < 0.0 {
            return Err(row.error(format!("duration must be a nonnegative number, found {minutes}")));
        }
        if a == b {
            summary.self_calls_dropped += 1;
            continue;
        }
        *totals.entry((a.min(b), a.max(b))).or_insert(0.0) += minutes;
    }
    let mut edges = Vec::with_capacity(totals.len());
    for ((u, v), total) in totals {
        if total > 0.0 {
            edges.push((u, v, total));
        } else {
            summary.zero_duration_pairs_dropped += 1;
        }
    }
    summary.pairs = edges.len();
    Ok((edges, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::Sex;
    use crate::graph::{union_multiplex_with_node_count, WeightedGraph};

    #[test]
    fn edge_list_remaps_and_sums_duplicates() {
        let csv = "src,dst,weight\nalice,bob,1.5\nbob,carol,2\nbob,alice,0.5\n";
        let mut nodes = NodeMap::new();
        let edges = read_edge_list(csv.as_bytes(), &mut nodes).unwrap();
        assert_eq!(nodes.get("carol"), Some(2));
        let g = WeightedGraph::with_node_count(nodes.len(), &edges).unwrap();
        assert_eq!(g.weight(0, 1), Some(2.0));
        assert_eq!(g.edge_count(), 2);

        let mut buf = Vec::new();
        nodes.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "id,label\n0,alice\n1,bob\n2,carol\n");
        assert_eq!(NodeMap::read_csv(&buf[..]).unwrap(), nodes);
    }

    #[test]
    fn edge_list_errors_carry_line() {
        let csv = "src,dst,weight\na,b,1\na,c,-1\n";
        let err = read_edge_list(csv.as_bytes(), &mut NodeMap::new()).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 3, .. }), "{err}");
        let err = read_edge_list("a,b\n".as_bytes(), &mut NodeMap::new()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { column: "src", .. }));
    }

    #[test]
    fn multiplex_with_manifest() {
        let manifest = LayerManifest::read_csv("layer,index\nkin,0\nborrow,1\n".as_bytes()).unwrap();
        let csv = "src,dst,layer\n1,2,kin\n2,1,borrow\n2,1,kin\n";
        let mut nodes = NodeMap::new();
        let recs = read_multiplex(csv.as_bytes(), &mut nodes, Some(&manifest)).unwrap();
        let g = union_multiplex_with_node_count(nodes.len(), &recs).unwrap();
        assert_eq!(g.weight(0, 1), Some(2.0));
        assert!(read_multiplex("src,dst,layer\n1,2,x\n".as_bytes(), &mut nodes, Some(&manifest)).is_err());
        assert!(read_multiplex("src,dst,layer\n1,2,12\n".as_bytes(), &mut nodes, None).is_err());
        assert!(LayerManifest::read_csv("layer,index\na,0\nb,0\n".as_bytes()).is_err());
    }

    #[test]
    fn attributes_with_missing_fields() {
        let csv = "node,age,sex,zip,household\na,34,F,,h1\nb,,M,z9,\nc,,,,\n";
        let mut nodes = NodeMap::new();
        nodes.intern("b");
        let attrs = read_attributes(csv.as_bytes(), &mut nodes).unwrap();
        let a = nodes.get("a").unwrap();
        let b = nodes.get("b").unwrap();
        assert_eq!(attrs.age(a), Some(34.0));
        assert_eq!(attrs.sex(b), Some(Sex::M));
        assert_eq!(attrs.zip(a), None);
        assert_eq!(attrs.household(a), Some("h1"));
        assert_eq!(attrs.len(), 3);
        assert!(read_attributes("node,age,sex,zip,household\na,1,X,,\n".as_bytes(), &mut nodes).is_err());
        assert!(read_attributes("node,age,sex,zip,household\na,1,,,\na,2,,,\n".as_bytes(), &mut nodes).is_err());

        let mut buf = Vec::new();
        write_attributes(&mut buf, &attrs, Some(&nodes)).unwrap();
        let mut again = NodeMap::new();
        again.intern("b");
        assert_eq!(read_attributes(&buf[..], &mut again).unwrap(), attrs);
    }

    #[test]
    fn cdr_aggregates_durations() {
        let csv = "date,caller,callee,duration_min,calls,sms,mms\n\
                   2010-01-01,a,b,3.5,1,0,0\n\
                   2010-01-02,b,a,1.5,1,0,0\n\
                   2010-01-02,a,a,9,1,0,0\n\
                   2010-01-03,a,c,0,0,4,0\n";
        let mut nodes = NodeMap::new();
        let (edges, summary) = read_cdr(csv.as_bytes(), &mut nodes).unwrap();
        assert_eq!(edges, vec![(0, 1, 5.0)]);
        assert_eq!(summary, CdrSummary { records: 4, self_calls_dropped: 1, pairs: 1, zero_duration_pairs_dropped: 1 });
    }
}
