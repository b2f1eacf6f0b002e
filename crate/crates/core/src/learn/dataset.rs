use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ColumnKind {
    Numeric,
    /// Values are level indices `0..levels`.
    Categorical { levels: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Numeric }
    }

    pub fn categorical(name: impl Into<String>, levels: u32) -> Self {
        Self { name: name.into(), kind: ColumnKind::Categorical { levels } }
    }
}

/// Dense row-major predictor matrix with a named schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    schema: Vec<Column>,
    n_rows: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(schema: Vec<Column>, n_rows: usize, values: Vec<f64>) -> Result<Self, LearnError> {
        if values.len() != n_rows * schema.len() {
            return Err(LearnError::Shape(format!(
                "{} values for {} rows x {} columns",
                values.len(),
                n_rows,
                schema.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let p = schema.len().max(1);
            return Err(LearnError::NonFinite {
                row: pos / p,
                column: schema.get(pos % p).map(|c| c.name.clone()).unwrap_or_default(),
            });
        }
        for (c, col) in schema.iter().enumerate() {
            if let ColumnKind::Categorical { levels } = col.kind {
                for r in 0..n_rows {
                    let v = values[r * schema.len() + c];
                    if v < 0.0 || v.fract() != 0.0 || v >= levels as f64 {
                        return Err(LearnError::Shape(format!(
                            "column {} row {r}: {v} is not a level in 0..{levels}",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Self { schema, n_rows, values })
    }

    pub fn schema(&self) -> &[Column] {
        &self.schema
    }

    pub fn names(&self) -> Vec<&str> {
        self.schema.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.schema.len();
        &self.values[r * p..(r + 1) * p]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.schema.len() + c]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |r| self.get(r, c))
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self { schema: self.schema.clone(), n_rows: rows.len(), values }
    }

    /// The named columns, in the order given.
    pub fn select(&self, names: &[String]) -> Result<Self, LearnError> {
        let mut idx = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for name in names {
            match self.schema.iter().position(|c| &c.name == name) {
                Some(k) => idx.push(k),
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(LearnError::SchemaMismatch { missing, unexpected: Vec::new() });
        }
        let schema = idx.iter().map(|&k| self.schema[k].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows * idx.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            values.extend(idx.iter().map(|&k| row[k]));
        }
        Ok(Self { schema, n_rows: self.n_rows, values })
    }

    /// Checks that `self` carries exactly the columns of `expected`, in order.
    pub fn check_schema(&self, expected: &[String]) -> Result<(), LearnError> {
        let have: Vec<&str> = self.names();
        if have.iter().copied().eq(expected.iter().map(String::as_str)) {
            return Ok(());
        }
        let missing: Vec<String> =
            expected.iter().filter(|e| !have.contains(&e.as_str())).cloned().collect();
        let unexpected: Vec<String> = have
            .iter()
            .filter(|h| !expected.iter().any(|e| e == *h))
            .map(|s| s.to_string())
            .collect();
        Err(LearnError::SchemaMismatch { missing, unexpected })
    }
}

/// Per-column centering and scaling applied to raw predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation of every column. A constant
    /// column keeps sd = 1 so it maps to all zeros.
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.n_rows().max(1) as f64;
        let (means, sds) = (0..x.n_cols())
            .map(|c| {
                let mean = x.column(c).sum::<f64>() / n;
                let var = x.column(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                (mean, if sd > 0.0 { sd } else { 1.0 })
            })
            .unzip();
        Self { means, sds }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let p = x.n_cols();
        let values = x
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.means[k % p]) / self.sds[k % p])
            .collect();
        FeatureMatrix { schema: x.schema.clone(), n_rows: x.n_rows, values }
    }
}

/// Predictors paired with a response. Missing cells are not representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    /// Set when `x` has been standardized; holds the raw-scale parameters.
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: FeatureMatrix, y: Vec<f64>) -> Result<Self, LearnError> {
        if x.n_rows() != y.len() {
            return Err(LearnError::Shape(format!(
                "{} rows but {} responses",
                x.n_rows(),
                y.len()
            )));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite { row, column: "response".into() });
        }
        Ok(Self { x, y, standardization: None })
    }

    /// Builds a dataset from row vectors of numeric predictors.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self, LearnError> {
        let schema: Vec<Column> = names.iter().map(|n| Column::numeric(*n)).collect();
        let mut values = Vec::with_capacity(rows.len() * names.len());
        for r in rows {
            if r.len() != names.len() {
                return Err(LearnError::Shape(format!(
                    "row of length {} for {} columns",
                    r.len(),
                    names.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(FeatureMatrix::new(schema, rows.len(), values)?, y)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.x.n_cols()
    }

    pub fn names(&self) -> Vec<String> {
        self.x.schema().iter().map(|c| c.name.clone()).collect()
    }

    /// Centers and scales every predictor; the response is left alone.
    pub fn standardized(&self) -> Result<Self, LearnError> {
        if let Some(col) = self
            .x
            .schema()
            .iter()
            .find(|c| matches!(c.kind, ColumnKind::Categorical { .. }))
        {
            return Err(LearnError::Shape(format!(
                "cannot standardize categorical column {}",
                col.name
            )));
        }
        let state = Standardization::fit(&self.x);
        Ok(Self {
            x: state.apply(&self.x),
            y: self.y.clone(),
            standardization: Some(state),
        })
    }

    /// Row subset. A standardization state, if any, is carried along.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.subset(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            standardization: self.standardization.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_columns_have_unit_population_variance() {
        let d = Dataset::from_rows(
            &["a", "b"],
            &[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0], vec![6.0, 5.0]],
            vec![0.0; 4],
        )
        .unwrap();
        let s = d.standardized().unwrap();
        let col: Vec<f64> = s.x.column(0).collect();
        let mean: f64 = col.iter().sum::<f64>() / 4.0;
        let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-12);
        assert!(s.x.column(1).all(|v| v == 0.0));
    }

    #[test]
    fn rejects_nan_and_bad_shapes() {
        assert!(matches!(
            Dataset::from_rows(&["a"], &[vec![f64::NAN]], vec![1.0]),
            Err(LearnError::NonFinite { row: 0, .. })
        ));
        assert!(Dataset::from_rows(&["a"], &[vec![1.0]], vec![1.0, 2.0]).is_err());
        let schema = vec![Column::categorical("sex", 3)];
        assert!(FeatureMatrix::new(schema, 1, vec![3.0]).is_err());
    }

    #[test]
    fn schema_mismatch_names_columns() {
        let d = Dataset::from_rows(&["a", "b"], &[vec![1.0, 2.0]], vec![0.0]).unwrap();
        let err = d.x.check_schema(&["a".into(), "c".into()]).unwrap_err();
        match err {
            LearnError::SchemaMismatch { missing, unexpected } => {
                assert_eq!(missing, vec!["c".to_string()]);
                assert_eq!(unexpected, vec!["b".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
