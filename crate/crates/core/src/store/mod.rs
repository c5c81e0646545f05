//! Dimension and fact instances, CSV ingestion and grouped aggregation.

mod aggregate;
mod restriction;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::schema::{same_name, Constellation, Dimension, ValueKind};

pub use aggregate::CellGrid;
pub use restriction::{Comparator, Literal, Predicate, Restriction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("unknown {kind} `{name}`")]
    UnknownTable { kind: &'static str, name: String },
    #[error("CSV header for `{table}` does not match the schema: {detail}")]
    HeaderMismatch { table: String, detail: String },
    #[error("duplicate key {key}={value} in `{dimension}`")]
    DuplicateKey { dimension: String, key: String, value: String },
    #[error("functional dependency violated in {0}")]
    DependencyViolation(Box<Conflict>),
    #[error("`{dimension}` row {line}: `{value}` is not a valid {kind:?} for `{attribute}`")]
    InvalidValue { dimension: String, line: usize, attribute: String, kind: ValueKind, value: String },
    #[error("dimension `{dimension}` must be loaded before fact `{fact}`")]
    DimensionNotLoaded { dimension: String, fact: String },
    #[error("`{fact}` row {line}: no `{dimension}` instance with key `{key}`")]
    UnresolvedReference { fact: String, line: usize, dimension: String, key: String },
    #[error("`{fact}` row {line}: measure `{measure}` value `{value}` is not numeric")]
    NonNumericMeasure { fact: String, line: usize, measure: String, value: String },
    #[error("no data loaded for fact `{fact}`")]
    FactNotLoaded { fact: String },
    #[error("`{element}` does not belong to a dimension of `{fact}`")]
    AttrFactMismatch { fact: String, element: String },
    #[error("axis mixes `{first}` and `{second}`; an axis holds one dimension and hierarchy")]
    MixedDimensionAxis { first: String, second: String },
    #[error("`{element}` is not a parameter or weak attribute")]
    NotAnAttribute { element: String },
    #[error("unknown measure `{measure}` for fact `{fact}`")]
    UnknownMeasure { fact: String, measure: String },
    #[error("invalid restriction: {0}")]
    InvalidRestriction(String),
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Two dimension rows that agree on `determinant` but not on `dependent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub dimension: String,
    pub determinant: String,
    pub value: String,
    pub dependent: String,
    pub first: String,
    pub second: String,
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Conflict { dimension, determinant, value, dependent, first, second } = self;
        write!(f, "`{dimension}`: {determinant}={value} maps to both {dependent}={first} and {dependent}={second}")
    }
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownTable { .. } => "unknown-table",
            StoreError::HeaderMismatch { .. } => "header-mismatch",
            StoreError::DuplicateKey { .. } => "duplicate-key",
            StoreError::DependencyViolation(_) => "dependency-violation",
            StoreError::InvalidValue { .. } => "invalid-value",
            StoreError::DimensionNotLoaded { .. } => "dimension-not-loaded",
            StoreError::UnresolvedReference { .. } => "unresolved-reference",
            StoreError::NonNumericMeasure { .. } => "non-numeric-measure",
            StoreError::FactNotLoaded { .. } => "fact-not-loaded",
            StoreError::AttrFactMismatch { .. } => "attr-fact-mismatch",
            StoreError::MixedDimensionAxis { .. } => "mixed-dimension-axis",
            StoreError::NotAnAttribute { .. } => "not-an-attribute",
            StoreError::UnknownMeasure { .. } => "unknown-measure",
            StoreError::InvalidRestriction(_) => "invalid-restriction",
            StoreError::Csv(_) => "csv-error",
            StoreError::Io { .. } => "io-error",
        }
    }
}

impl From<csv::Error> for StoreError {
    fn from(e: csv::Error) -> Self {
        StoreError::Csv(e.to_string())
    }
}

/// Instances of one dimension. Columns follow the schema's attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRows {
    dimension: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    key_column: usize,
    by_key: HashMap<String, usize>,
}

impl DimensionRows {
    pub fn dimension(&self) -> &str {
        &self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, attr: &str) -> Option<usize> {
        self.columns.iter().position(|c| same_name(c, attr))
    }

    pub fn row_by_key(&self, key: &str) -> Option<usize> {
        self.by_key.get(key).copied()
    }

    pub fn value(&self, row: usize, column: usize) -> &str {
        &self.rows[row][column]
    }

    pub fn get(&self, key: &str, attr: &str) -> Option<&str> {
        let row = self.row_by_key(key)?;
        Some(self.value(row, self.column(attr)?))
    }

    pub fn key_values(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[self.key_column].as_str())
    }
}

/// Instances of one fact: measure values plus one key per connected dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FactRows {
    fact: String,
    measures: Vec<String>,
    dimensions: Vec<String>,
    values: Vec<Vec<f64>>,
    refs: Vec<Vec<String>>,
}

impl FactRows {
    pub fn fact(&self) -> &str {
        &self.fact
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn measure_column(&self, measure: &str) -> Option<usize> {
        self.measures.iter().position(|m| same_name(m, measure))
    }

    pub fn dimension_column(&self, dim: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| same_name(d, dim))
    }

    pub fn measure_value(&self, row: usize, column: usize) -> f64 {
        self.values[row][column]
    }

    pub fn reference(&self, row: usize, column: usize) -> &str {
        &self.refs[row][column]
    }
}

/// Parses dimension instances and checks key uniqueness and the functional
/// dependencies implied by every hierarchy.
pub fn load_dimension_rows<R: Read>(c: &Constellation, dim: &str, csv: R) -> Result<DimensionRows, StoreError> {
    let dimension = c
        .dimension(dim)
        .ok_or_else(|| StoreError::UnknownTable { kind: "dimension", name: dim.to_string() })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = dimension.attributes.iter().map(|a| a.name.as_str()).collect();
    let order = match_header(&dimension.name, &header, &expected)?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let mut row = vec![String::new(); expected.len()];
        for (col, field) in record.iter().enumerate() {
            let target = order[col];
            let attr = &dimension.attributes[target];
            check_kind(attr.kind, field).map_err(|_| StoreError::InvalidValue {
                dimension: dimension.name.clone(),
                line,
                attribute: attr.name.clone(),
                kind: attr.kind,
                value: field.to_string(),
            })?;
            row[target] = field.to_string();
        }
        rows.push(row);
    }
    build_dimension_rows(dimension, rows)
}

fn check_kind(kind: ValueKind, value: &str) -> Result<(), ()> {
    match kind {
        ValueKind::Text => Ok(()),
        ValueKind::Integer => value.parse::<i64>().map(drop).map_err(drop),
        ValueKind::Real => value.parse::<f64>().map(drop).map_err(drop),
    }
}

fn build_dimension_rows(dimension: &Dimension, rows: Vec<Vec<String>>) -> Result<DimensionRows, StoreError> {
    let columns: Vec<String> = dimension.attributes.iter().map(|a| a.name.clone()).collect();
    let col = |name: &str| columns.iter().position(|c| same_name(c, name)).expect("validated attribute");
    let key_column = col(dimension.key());

    let mut by_key = HashMap::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if by_key.insert(row[key_column].clone(), i).is_some() {
            return Err(StoreError::DuplicateKey {
                dimension: dimension.name.clone(),
                key: columns[key_column].clone(),
                value: row[key_column].clone(),
            });
        }
    }

    // Every determinant → dependent pair: consecutive parameters, then
    // parameter → weak attribute. Consecutive pairs imply the transitive ones.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for h in &dimension.hierarchies {
        for w in h.params.windows(2) {
            pairs.push((col(&w[0]), col(&w[1])));
        }
        for (owner, weak) in &h.weak {
            for a in weak {
                pairs.push((col(owner), col(a)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    for (det, dep) in pairs {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for row in &rows {
            let first = *seen.entry(&row[det]).or_insert(&row[dep]);
            if first != row[dep] {
                return Err(StoreError::DependencyViolation(Box::new(Conflict {
                    dimension: dimension.name.clone(),
                    determinant: columns[det].clone(),
                    value: row[det].clone(),
                    dependent: columns[dep].clone(),
                    first: first.to_string(),
                    second: row[dep].clone(),
                })));
            }
        }
    }

    Ok(DimensionRows { dimension: dimension.name.clone(), columns, rows, key_column, by_key })
}

/// Maps each CSV column to the index of the expected column it names.
fn match_header(table: &str, header: &[String], expected: &[&str]) -> Result<Vec<usize>, StoreError> {
    let mut order = Vec::with_capacity(header.len());
    for h in header {
        let i = expected.iter().position(|e| same_name(e, h)).ok_or_else(|| StoreError::HeaderMismatch {
            table: table.to_string(),
            detail: format!("unexpected column `{h}`"),
        })?;
        if order.contains(&i) {
            return Err(StoreError::HeaderMismatch {
                table: table.to_string(),
                detail: format!("column `{h}` appears twice"),
            });
        }
        order.push(i);
    }
    if let Some(missing) = (0..expected.len()).find(|i| !order.contains(i)) {
        return Err(StoreError::HeaderMismatch {
            table: table.to_string(),
            detail: format!("missing column `{}`", expected[missing]),
        });
    }
    Ok(order)
}

/// Snapshot of all loaded instances for one constellation.
#[derive(Debug, Clone)]
pub struct DataStore {
    schema: Arc<Constellation>,
    dimensions: BTreeMap<String, DimensionRows>,
    facts: BTreeMap<String, FactRows>,
}

impl DataStore {
    pub fn new(schema: Arc<Constellation>) -> Self {
        Self { schema, dimensions: BTreeMap::new(), facts: BTreeMap::new() }
    }

    pub fn schema(&self) -> &Arc<Constellation> {
        &self.schema
    }

    pub fn dimension_rows(&self, dim: &str) -> Option<&DimensionRows> {
        let d = self.schema.dimension(dim)?;
        self.dimensions.get(&d.name)
    }

    pub fn fact_rows(&self, fact: &str) -> Option<&FactRows> {
        let f = self.schema.fact(fact)?;
        self.facts.get(&f.name)
    }

    /// Loads (or replaces) a dimension's instances. Facts already loaded must
    /// still resolve against the new rows.
    pub fn load_dimension<R: Read>(&mut self, dim: &str, csv: R) -> Result<&DimensionRows, StoreError> {
        let rows = load_dimension_rows(&self.schema, dim, csv)?;
        for facts in self.facts.values() {
            if let Some(col) = facts.dimension_column(&rows.dimension) {
                check_refs(facts, col, &rows)?;
            }
        }
        let name = rows.dimension.clone();
        self.dimensions.insert(name.clone(), rows);
        Ok(&self.dimensions[&name])
    }

    pub fn load_fact<R: Read>(&mut self, fact: &str, csv: R) -> Result<&FactRows, StoreError> {
        let rows = self.parse_fact_rows(fact, csv)?;
        let name = rows.fact.clone();
        self.facts.insert(name.clone(), rows);
        Ok(&self.facts[&name])
    }

    /// Parses fact instances without storing them. Reference columns are
    /// named after the dimension, optionally suffixed with `_ref`.
    pub fn parse_fact_rows<R: Read>(&self, fact: &str, csv: R) -> Result<FactRows, StoreError> {
        let f = self
            .schema
            .fact(fact)
            .ok_or_else(|| StoreError::UnknownTable { kind: "fact", name: fact.to_string() })?;
        let dims: Vec<String> = self.schema.star(&f.name).to_vec();
        for d in &dims {
            if !self.dimensions.contains_key(d) {
                return Err(StoreError::DimensionNotLoaded { dimension: d.clone(), fact: f.name.clone() });
            }
        }

        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv);
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| {
                let lower = h.to_lowercase();
                match lower.strip_suffix("_ref") {
                    Some(base) if dims.iter().any(|d| same_name(d, base)) => base.to_string(),
                    _ => h.to_string(),
                }
            })
            .collect();
        let mut expected: Vec<&str> = f.measures.iter().map(|m| m.measure.as_str()).collect();
        expected.extend(dims.iter().map(String::as_str));
        let order = match_header(&f.name, &header, &expected)?;
        let n_measures = f.measures.len();

        let mut rows = FactRows {
            fact: f.name.clone(),
            measures: f.measures.iter().map(|m| m.measure.clone()).collect(),
            dimensions: dims.clone(),
            values: Vec::new(),
            refs: Vec::new(),
        };
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let mut values = vec![0.0; n_measures];
            let mut refs = vec![String::new(); dims.len()];
            for (col, field) in record.iter().enumerate() {
                let target = order[col];
                if target < n_measures {
                    values[target] = field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        StoreError::NonNumericMeasure {
                            fact: f.name.clone(),
                            line,
                            measure: rows.measures[target].clone(),
                            value: field.to_string(),
                        }
                    })?;
                } else {
                    let d = &dims[target - n_measures];
                    if self.dimensions[d].row_by_key(field).is_none() {
                        return Err(StoreError::UnresolvedReference {
                            fact: f.name.clone(),
                            line,
                            dimension: d.clone(),
                            key: field.to_string(),
                        });
                    }
                    refs[target - n_measures] = field.to_string();
                }
            }
            rows.values.push(values);
            rows.refs.push(refs);
        }
        Ok(rows)
    }

    /// Loads every `<NAME>.csv` in `dir` whose name matches a dimension or a
    /// fact, dimensions first. Returns the table names loaded.
    pub fn load_dir(&mut self, dir: &Path) -> Result<Vec<String>, StoreError> {
        let io = |e: std::io::Error| StoreError::Io { path: dir.display().to_string(), message: e.to_string() };
        let mut files: Vec<(String, std::path::PathBuf)> = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    files.push((stem.to_string(), path.clone()));
                }
            }
        }
        files.sort();

        let open = |path: &Path| {
            fs::File::open(path).map_err(|e| StoreError::Io { path: path.display().to_string(), message: e.to_string() })
        };
        let schema = Arc::clone(&self.schema);
        let mut loaded = Vec::new();
        for (stem, path) in &files {
            if let Some(d) = schema.dimension(stem) {
                self.load_dimension(&d.name, open(path)?)?;
                loaded.push(d.name.clone());
            } else if schema.fact(stem).is_none() {
                return Err(StoreError::UnknownTable { kind: "table", name: stem.clone() });
            }
        }
        for (stem, path) in &files {
            if let Some(f) = schema.fact(stem) {
                self.load_fact(&f.name, open(path)?)?;
                loaded.push(f.name.clone());
            }
        }
        Ok(loaded)
    }
}

fn check_refs(facts: &FactRows, col: usize, rows: &DimensionRows) -> Result<(), StoreError> {
    for (i, r) in facts.refs.iter().enumerate() {
        if rows.row_by_key(&r[col]).is_none() {
            return Err(StoreError::UnresolvedReference {
                fact: facts.fact.clone(),
                line: i + 2,
                dimension: rows.dimension.clone(),
                key: r[col].clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixture {
    use std::path::PathBuf;

    use super::*;

    pub fn data_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/data")
    }

    pub fn store() -> DataStore {
        let mut store = DataStore::new(Arc::new(crate::schema::fixture::constellation()));
        store.load_dir(&data_dir()).unwrap();
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixture::constellation;

    #[test]
    fn loads_fixture_directory() {
        let store = fixture::store();
        let temps = store.dimension_rows("temps").unwrap();
        assert_eq!(temps.len(), 24);
        assert_eq!(temps.get("2006-02", "Trimestre"), Some("2006-T1"));
        assert_eq!(store.dimension_rows("CLIENTS").unwrap().get("C09", "Région"), Some("Bretagne"));
        assert_eq!(store.fact_rows("VENTES").unwrap().len(), 45);
        assert!(!store.fact_rows("ACHATS").unwrap().is_empty());
    }

    #[test]
    fn header_in_any_order() {
        let c = constellation();
        let rows = load_dimension_rows(&c, "PRODUITS", "classe,CodeProduit\nMobilier,P9\n".as_bytes()).unwrap();
        assert_eq!(rows.get("P9", "Classe"), Some("Mobilier"));
    }

    #[test]
    fn header_mismatch() {
        let c = constellation();
        let err = load_dimension_rows(&c, "PRODUITS", "CodeProduit\nP1\n".as_bytes()).unwrap_err();
        assert_eq!(err.code(), "header-mismatch");
        let err = load_dimension_rows(&c, "PRODUITS", "CodeProduit,Classe,Prix\n".as_bytes()).unwrap_err();
        assert_eq!(err.code(), "header-mismatch");
    }

    #[test]
    fn duplicate_key() {
        let c = constellation();
        let csv = "CodeCli,Ville,DeptN,Région\nC1,Toulouse,31,Midi-Pyrénées\nC1,Albi,81,Midi-Pyrénées\n";
        let err = load_dimension_rows(&c, "CLIENTS", csv.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "duplicate-key");
    }

    #[test]
    fn dependency_violation_names_the_pair() {
        let c = constellation();
        let csv = "CodeCli,Ville,DeptN,Région\nC1,Toulouse,31,Midi-Pyrénées\nC2,Muret,31,Aquitaine\n";
        let err = load_dimension_rows(&c, "CLIENTS", csv.as_bytes()).unwrap_err();
        assert_eq!(
            err,
            StoreError::DependencyViolation(Box::new(Conflict {
                dimension: "CLIENTS".into(),
                determinant: "DeptN".into(),
                value: "31".into(),
                dependent: "Région".into(),
                first: "Midi-Pyrénées".into(),
                second: "Aquitaine".into(),
            }))
        );
    }

    #[test]
    fn weak_attribute_dependency_is_checked() {
        let c = constellation();
        let csv = "MoisN,LibelléM,Trimestre,Année\n2006-01,janvier,2006-T1,2006\n2006-02,février,2006-T1,2006\n";
        assert!(load_dimension_rows(&c, "TEMPS", csv.as_bytes()).is_ok());
        let csv = "MoisN,LibelléM,Trimestre,Année\n2006-01,janvier,2006-T1,2006\n2006-01,février,2006-T1,2006\n";
        assert_eq!(load_dimension_rows(&c, "TEMPS", csv.as_bytes()).unwrap_err().code(), "duplicate-key");
    }

    #[test]
    fn integer_attributes_are_validated() {
        let c = constellation();
        let csv = "CodeCli,Ville,DeptN,Région\nC1,Toulouse,trente-et-un,Midi-Pyrénées\n";
        assert_eq!(load_dimension_rows(&c, "CLIENTS", csv.as_bytes()).unwrap_err().code(), "invalid-value");
    }

    #[test]
    fn fact_loading_errors() {
        let mut store = fixture::store();
        let empty = store.load_fact("VENTES", "Montant,TEMPS,CLIENTS,PRODUITS\n".as_bytes()).unwrap();
        assert_eq!(empty.len(), 0);

        let err = store
            .load_fact("VENTES", "Montant,temps_ref,clients_ref,produits_ref\n10,2006-01,C99,P01\n".as_bytes())
            .unwrap_err();
        assert_eq!(err.code(), "unresolved-reference");

        let err = store.load_fact("VENTES", "Montant,TEMPS,CLIENTS,PRODUITS\nNA,2006-01,C01,P01\n".as_bytes()).unwrap_err();
        assert_eq!(err.code(), "non-numeric-measure");

        let mut bare = DataStore::new(Arc::new(constellation()));
        let err = bare.load_fact("ACHATS", "Montant,TEMPS,PRODUITS\n".as_bytes()).unwrap_err();
        assert_eq!(err.code(), "dimension-not-loaded");
    }

    #[test]
    fn dimension_reload_must_keep_fact_references() {
        let mut store = fixture::store();
        let err = store.load_dimension("PRODUITS", "CodeProduit,Classe\nP01,Technologique\n".as_bytes()).unwrap_err();
        assert_eq!(err.code(), "unresolved-reference");
        assert_eq!(store.dimension_rows("PRODUITS").unwrap().len(), 6);
    }
}
