//! Tabular datasets of (design, measured target) rows.

use std::io::Read;
use std::path::Path;

use crate::oracle::OracleError;
use crate::space::{Design, ParamKind, ParameterSpace, Value};
use crate::task::Direction;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub design: Design,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    pub target_name: String,
    pub direction: Direction,
}

impl Dataset {
    /// Builds a dataset, checking that every target is finite and every
    /// present value names a parameter of `space` with the right kind.
    pub fn new(
        space: &ParameterSpace,
        rows: Vec<Row>,
        target_name: impl Into<String>,
        direction: Direction,
    ) -> Result<Self, OracleError> {
        for (i, row) in rows.iter().enumerate() {
            if !row.target.is_finite() {
                return Err(OracleError::InvalidData(format!(
                    "row {}: target is not finite",
                    i + 1
                )));
            }
            for (name, value) in row.design.iter() {
                let spec = space.param(name).ok_or_else(|| {
                    OracleError::InvalidData(format!("row {}: unknown parameter `{name}`", i + 1))
                })?;
                let ok = match (&spec.kind, value) {
                    (ParamKind::Numeric { .. }, Value::Num(x)) => x.is_finite(),
                    (ParamKind::Categorical { options }, Value::Cat(s)) => options.contains(s),
                    _ => false,
                };
                if !ok {
                    return Err(OracleError::InvalidData(format!(
                        "row {}: invalid value `{value}` for `{name}`",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self {
            rows,
            target_name: target_name.into(),
            direction,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.target)
    }

    /// Copy of the dataset without row `index`.
    pub fn without_row(&self, index: usize) -> Dataset {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, r)| r.clone())
            .collect();
        Dataset {
            rows,
            target_name: self.target_name.clone(),
            direction: self.direction,
        }
    }

    /// Non-missing values of a column, in row order.
    pub fn column(&self, name: &str) -> impl Iterator<Item = &Value> + '_ {
        let name = name.to_string();
        self.rows.iter().filter_map(move |r| r.design.get(&name))
    }

    pub fn load_csv(
        path: &Path,
        space: &ParameterSpace,
        target_name: &str,
        direction: Direction,
    ) -> Result<Self, OracleError> {
        let file = std::fs::File::open(path)
            .map_err(|e| OracleError::InvalidData(format!("{}: {e}", path.display())))?;
        Self::read_csv(file, space, target_name, direction)
    }

    /// Reads a header-first comma-separated table with one column per
    /// parameter plus the target column. Empty cells are missing values.
    pub fn read_csv<R: Read>(
        reader: R,
        space: &ParameterSpace,
        target_name: &str,
        direction: Direction,
    ) -> Result<Self, OracleError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = csv
            .headers()
            .map_err(|e| OracleError::InvalidData(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let target_col = header
            .iter()
            .position(|h| h == target_name)
            .ok_or_else(|| {
                OracleError::InvalidData(format!("missing target column `{target_name}`"))
            })?;
        for h in &header {
            if h != target_name && space.param(h).is_none() {
                return Err(OracleError::InvalidData(format!(
                    "column `{h}` is not a parameter of the space"
                )));
            }
        }
        let mut rows = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record.map_err(|e| OracleError::InvalidData(e.to_string()))?;
            let lineno = line + 2;
            let mut design = Design::new();
            let mut target = None;
            for (col, cell) in record.iter().enumerate() {
                if col == target_col {
                    let t: f64 = cell.parse().map_err(|_| {
                        OracleError::InvalidData(format!(
                            "line {lineno}: target `{cell}` is not a number"
                        ))
                    })?;
                    target = Some(t);
                    continue;
                }
                if cell.is_empty() {
                    continue;
                }
                let name = &header[col];
                let spec = space.param(name).expect("checked above");
                let value = if spec.is_numeric() {
                    Value::Num(cell.parse().map_err(|_| {
                        OracleError::InvalidData(format!(
                            "line {lineno}: `{cell}` in `{name}` is not a number"
                        ))
                    })?)
                } else {
                    Value::Cat(cell.to_string())
                };
                design.insert(name.clone(), value);
            }
            let target = target.ok_or_else(|| {
                OracleError::InvalidData(format!("line {lineno}: missing target value"))
            })?;
            rows.push(Row { design, target });
        }
        Dataset::new(space, rows, target_name, direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;

    fn space() -> ParameterSpace {
        ParameterSpace::new(
            "s",
            vec![
                ParameterSpec::numeric("temp", 20.0, 40.0).unwrap(),
                ParameterSpec::categorical("line", ["K1", "S"]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn reads_missing_cells() {
        let text = "temp,line,titer\n30,K1,1.5\n,S,2.0\n25,,0.5\n";
        let d = Dataset::read_csv(text.as_bytes(), &space(), "titer", Direction::Maximize).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.rows[1].design.get("temp"), None);
        assert_eq!(d.rows[2].design.get("line"), None);
        assert_eq!(d.rows[0].design.get("temp"), Some(&Value::Num(30.0)));
    }

    #[test]
    fn rejects_bad_cells() {
        let s = space();
        for text in [
            "temp,line,titer\nabc,K1,1\n",
            "temp,line,titer\n30,Q,1\n",
            "temp,line,titer\n30,K1,\n",
            "temp,line,bogus,titer\n30,K1,1,1\n",
            "temp,line\n30,K1\n",
        ] {
            assert!(
                Dataset::read_csv(text.as_bytes(), &s, "titer", Direction::Maximize).is_err(),
                "{text}"
            );
        }
    }
}
