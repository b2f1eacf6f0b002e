//! Per-node attributes with explicit missingness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M" => Ok(Sex::M),
            "F" => Ok(Sex::F),
            other => Err(format!("invalid sex '{other}', expected M or F")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
        })
    }
}

/// Unordered sex pairing of a tie's endpoints. `FM` covers both orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SexPair {
    MM,
    FF,
    FM,
}

impl SexPair {
    pub fn of(a: Sex, b: Sex) -> Self {
        match (a, b) {
            (Sex::M, Sex::M) => SexPair::MM,
            (Sex::F, Sex::F) => SexPair::FF,
            _ => SexPair::FM,
        }
    }

    /// Level index used by forests: MM = 0, FF = 1, FM = 2.
    pub fn level(self) -> u32 {
        match self {
            SexPair::MM => 0,
            SexPair::FF => 1,
            SexPair::FM => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SexPair::MM => "MM",
            SexPair::FF => "FF",
            SexPair::FM => "FM",
        }
    }
}

impl FromStr for SexPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MM" => Ok(SexPair::MM),
            "FF" => Ok(SexPair::FF),
            "FM" | "MF" => Ok(SexPair::FM),
            other => Err(format!("invalid sex pair '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeAttributes {
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub zip: Option<String>,
    pub household: Option<String>,
}

impl NodeAttributes {
    /// Age, sex and zip all observed.
    pub fn is_complete(&self, need_zip: bool) -> bool {
        self.age.is_some() && self.sex.is_some() && (!need_zip || self.zip.is_some())
    }
}

/// Attributes indexed by dense node id. Nodes never mentioned are all-missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    rows: Vec<NodeAttributes>,
}

impl AttributeTable {
    pub fn new(node_count: usize) -> Self {
        Self { rows: vec![NodeAttributes::default(); node_count] }
    }

    pub fn from_rows(rows: Vec<NodeAttributes>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Grows the table with all-missing rows so that `node_count` nodes fit.
    pub fn ensure_len(&mut self, node_count: usize) {
        if self.rows.len() < node_count {
            self.rows.resize(node_count, NodeAttributes::default());
        }
    }

    pub fn get(&self, i: NodeId) -> Option<&NodeAttributes> {
        self.rows.get(i as usize)
    }

    pub fn rows(&self) -> &[NodeAttributes] {
        &self.rows
    }

    fn row_mut(&mut self, i: NodeId) -> &mut NodeAttributes {
        self.ensure_len(i as usize + 1);
        &mut self.rows[i as usize]
    }

    pub fn set(&mut self, i: NodeId, attrs: NodeAttributes) {
        *self.row_mut(i) = attrs;
    }

    pub fn set_age(&mut self, i: NodeId, age: f64) {
        self.row_mut(i).age = Some(age);
    }

    pub fn set_sex(&mut self, i: NodeId, sex: Sex) {
        self.row_mut(i).sex = Some(sex);
    }

    pub fn set_zip(&mut self, i: NodeId, zip: impl Into<String>) {
        self.row_mut(i).zip = Some(zip.into());
    }

    pub fn set_household(&mut self, i: NodeId, household: impl Into<String>) {
        self.row_mut(i).household = Some(household.into());
    }

    pub fn age(&self, i: NodeId) -> Option<f64> {
        self.get(i).and_then(|r| r.age)
    }

    pub fn sex(&self, i: NodeId) -> Option<Sex> {
        self.get(i).and_then(|r| r.sex)
    }

    pub fn zip(&self, i: NodeId) -> Option<&str> {
        self.get(i).and_then(|r| r.zip.as_deref())
    }

    pub fn household(&self, i: NodeId) -> Option<&str> {
        self.get(i).and_then(|r| r.household.as_deref())
    }

    pub fn has_any_zip(&self) -> bool {
        self.rows.iter().any(|r| r.zip.is_some())
    }

    pub fn has_any_household(&self) -> bool {
        self.rows.iter().any(|r| r.household.is_some())
    }

    pub fn has_any_demographics(&self) -> bool {
        self.rows.iter().any(|r| r.age.is_some() || r.sex.is_some())
    }
}
