use std::collections::BTreeMap;

use super::{DataStore, DimensionRows, FactRows, Literal, Restriction, StoreError};
use crate::schema::{same_name, Aggregation, ElementRef, MeasureSpec};

/// Aggregated cells addressed by row header, column header and measure.
///
/// Header tuples carry one value per displayed attribute and are sorted by
/// codepoints, leftmost component first. A cell is absent when no fact row
/// contributes to it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellGrid {
    row_headers: Vec<Vec<String>>,
    col_headers: Vec<Vec<String>>,
    measures: Vec<MeasureSpec>,
    cells: BTreeMap<(usize, usize), Vec<f64>>,
}

impl CellGrid {
    pub fn row_headers(&self) -> &[Vec<String>] {
        &self.row_headers
    }

    pub fn col_headers(&self) -> &[Vec<String>] {
        &self.col_headers
    }

    pub fn measures(&self) -> &[MeasureSpec] {
        &self.measures
    }

    /// Number of non-absent (row, column, measure) cells.
    pub fn len(&self) -> usize {
        self.cells.len() * self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Values of every measure at a header-index position.
    pub fn at(&self, row: usize, col: usize) -> Option<&[f64]> {
        self.cells.get(&(row, col)).map(Vec::as_slice)
    }

    pub fn get<S: AsRef<str>>(&self, row: &[S], col: &[S], spec: &MeasureSpec) -> Option<f64> {
        let m = self.measures.iter().position(|s| s == spec)?;
        let r = position(&self.row_headers, row)?;
        let c = position(&self.col_headers, col)?;
        self.cells.get(&(r, c)).map(|v| v[m])
    }

    /// Every present cell in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (&[String], &[String], &MeasureSpec, f64)> + '_ {
        self.cells.iter().flat_map(move |(&(r, c), values)| {
            self.measures.iter().zip(values).map(move |(spec, &v)| {
                (self.row_headers[r].as_slice(), self.col_headers[c].as_slice(), spec, v)
            })
        })
    }
}

fn position<S: AsRef<str>>(headers: &[Vec<String>], tuple: &[S]) -> Option<usize> {
    headers.iter().position(|h| h.len() == tuple.len() && h.iter().zip(tuple).all(|(a, b)| a == b.as_ref()))
}

#[derive(Debug, Clone, Copy)]
struct Acc {
    sum: f64,
    count: usize,
    min: f64,
    max: f64,
}

impl Acc {
    fn new() -> Self {
        Self { sum: 0.0, count: 0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn finish(&self, agg: Aggregation) -> f64 {
        match agg {
            Aggregation::Sum => self.sum,
            Aggregation::Avg => self.sum / self.count as f64,
            Aggregation::Min => self.min,
            Aggregation::Max => self.max,
            Aggregation::Count => self.count as f64,
        }
    }
}

/// Sort values, displayed values and hidden owner values of one group.
type Key = (Vec<String>, Vec<String>, Vec<String>);

/// How one axis maps a fact row to its group.
struct AxisPlan<'a> {
    rows: Option<&'a DimensionRows>,
    fact_column: usize,
    shown: Vec<usize>,
    /// Sort column per shown attribute: a weak attribute sorts by its owner.
    order: Vec<usize>,
    /// Owners of weak attributes displayed without them; grouping still
    /// happens at the owner's granularity.
    hidden: Vec<usize>,
}

impl AxisPlan<'_> {
    fn key(&self, facts: &FactRows, row: usize) -> Key {
        let Some(dim) = self.rows else {
            return (Vec::new(), Vec::new(), Vec::new());
        };
        let r = dim.row_by_key(facts.reference(row, self.fact_column)).expect("references checked at load");
        let pick = |cols: &[usize]| cols.iter().map(|&c| dim.value(r, c).to_string()).collect();
        (pick(&self.order), pick(&self.shown), pick(&self.hidden))
    }
}

enum Filter<'a> {
    Attribute { rows: &'a DimensionRows, fact_column: usize, column: usize, p: &'a super::Predicate },
    Measure { column: usize, p: &'a super::Predicate, value: f64 },
}

impl Filter<'_> {
    fn accepts(&self, facts: &FactRows, row: usize) -> bool {
        match self {
            Filter::Attribute { rows, fact_column, column, p } => {
                let r = rows.row_by_key(facts.reference(row, *fact_column)).expect("references checked at load");
                p.op.holds(p.value.compare_value(rows.value(r, *column)))
            }
            Filter::Measure { column, p, value } => p.op.holds(facts.measure_value(row, *column).total_cmp(value)),
        }
    }
}

impl DataStore {
    /// Groups the fact's rows by the displayed attribute tuples of both axes
    /// and folds each requested measure. An empty axis stands for `All`.
    pub fn aggregate(
        &self,
        fact: &str,
        specs: &[MeasureSpec],
        row_attrs: &[ElementRef],
        col_attrs: &[ElementRef],
        restriction: &Restriction,
    ) -> Result<CellGrid, StoreError> {
        let f = self
            .schema
            .fact(fact)
            .ok_or_else(|| StoreError::UnknownTable { kind: "fact", name: fact.to_string() })?;
        let facts = self.fact_rows(&f.name).ok_or_else(|| StoreError::FactNotLoaded { fact: f.name.clone() })?;

        let mut measure_columns = Vec::with_capacity(specs.len());
        let mut measures = Vec::with_capacity(specs.len());
        for spec in specs {
            let decl = f.measure(&spec.measure).ok_or_else(|| StoreError::UnknownMeasure {
                fact: f.name.clone(),
                measure: spec.measure.clone(),
            })?;
            measure_columns.push(facts.measure_column(&decl.measure).expect("fact rows follow schema"));
            measures.push(MeasureSpec::new(spec.aggregation, decl.measure.clone()));
        }

        let row_plan = self.axis_plan(facts, row_attrs)?;
        let col_plan = self.axis_plan(facts, col_attrs)?;
        let filters = self.filters(facts, restriction)?;

        let mut groups: BTreeMap<(Key, Key), Vec<Acc>> = BTreeMap::new();
        for row in 0..facts.len() {
            if !filters.iter().all(|flt| flt.accepts(facts, row)) {
                continue;
            }
            let accs = groups
                .entry((row_plan.key(facts, row), col_plan.key(facts, row)))
                .or_insert_with(|| vec![Acc::new(); measure_columns.len()]);
            for (acc, &col) in accs.iter_mut().zip(&measure_columns) {
                acc.push(facts.measure_value(row, col));
            }
        }

        let mut row_keys: Vec<&Key> = groups.keys().map(|(r, _)| r).collect();
        let mut col_keys: Vec<&Key> = groups.keys().map(|(_, c)| c).collect();
        row_keys.sort();
        row_keys.dedup();
        col_keys.sort();
        col_keys.dedup();

        let mut cells = BTreeMap::new();
        for ((rk, ck), accs) in &groups {
            let r = row_keys.binary_search(&rk).expect("collected above");
            let c = col_keys.binary_search(&ck).expect("collected above");
            let values = accs.iter().zip(&measures).map(|(acc, spec)| acc.finish(spec.aggregation)).collect();
            cells.insert((r, c), values);
        }

        Ok(CellGrid {
            row_headers: row_keys.iter().map(|k| k.1.clone()).collect(),
            col_headers: col_keys.iter().map(|k| k.1.clone()).collect(),
            measures,
            cells,
        })
    }

    fn axis_plan<'a>(&'a self, facts: &FactRows, attrs: &[ElementRef]) -> Result<AxisPlan<'a>, StoreError> {
        let Some(first) = attrs.first() else {
            return Ok(AxisPlan { rows: None, fact_column: 0, shown: Vec::new(), order: Vec::new(), hidden: Vec::new() });
        };
        let (dim, hier, _) = attribute_of(first)?;
        let fact_column = facts.dimension_column(dim).ok_or_else(|| StoreError::AttrFactMismatch {
            fact: facts.fact().to_string(),
            element: first.to_string(),
        })?;
        let rows = self.dimension_rows(dim).expect("facts load after their dimensions");
        let hierarchy = self
            .schema
            .dimension(dim)
            .and_then(|d| d.hierarchy(hier))
            .ok_or_else(|| StoreError::NotAnAttribute { element: first.to_string() })?;

        let mut shown = Vec::with_capacity(attrs.len());
        let mut order = Vec::with_capacity(attrs.len());
        let mut hidden = Vec::new();
        for a in attrs {
            let (d, h, attr) = attribute_of(a)?;
            if !same_name(d, dim) || !same_name(h, hier) {
                return Err(StoreError::MixedDimensionAxis { first: first.to_string(), second: a.to_string() });
            }
            let column = rows.column(attr).ok_or_else(|| StoreError::NotAnAttribute { element: a.to_string() })?;
            shown.push(column);
            order.push(column);
            if let Some(owner) = hierarchy.owner_of(attr) {
                let owner_shown = attrs
                    .iter()
                    .filter_map(|x| x.as_attribute())
                    .any(|(_, _, x)| same_name(x, owner));
                let owner_col = rows.column(owner).expect("validated schema");
                *order.last_mut().expect("pushed above") = owner_col;
                if !owner_shown && !hidden.contains(&owner_col) {
                    hidden.push(owner_col);
                }
            }
        }
        Ok(AxisPlan { rows: Some(rows), fact_column, shown, order, hidden })
    }

    fn filters<'a>(&'a self, facts: &FactRows, r: &'a Restriction) -> Result<Vec<Filter<'a>>, StoreError> {
        let mut out = Vec::with_capacity(r.predicates.len());
        for p in &r.predicates {
            match &p.element {
                ElementRef::Parameter { dimension, attribute, .. }
                | ElementRef::WeakAttribute { dimension, attribute, .. } => {
                    let fact_column = facts.dimension_column(dimension).ok_or_else(|| {
                        StoreError::AttrFactMismatch { fact: facts.fact().to_string(), element: p.element.to_string() }
                    })?;
                    let rows = self.dimension_rows(dimension).expect("facts load after their dimensions");
                    let column = rows
                        .column(attribute)
                        .ok_or_else(|| StoreError::NotAnAttribute { element: p.element.to_string() })?;
                    out.push(Filter::Attribute { rows, fact_column, column, p });
                }
                ElementRef::Measure { fact, measure } | ElementRef::AggregatedMeasure { fact, measure, .. } => {
                    if !same_name(fact, facts.fact()) {
                        return Err(StoreError::AttrFactMismatch {
                            fact: facts.fact().to_string(),
                            element: p.element.to_string(),
                        });
                    }
                    let column = facts.measure_column(measure).ok_or_else(|| StoreError::UnknownMeasure {
                        fact: fact.clone(),
                        measure: measure.clone(),
                    })?;
                    let Literal::Number(value) = p.value else {
                        return Err(StoreError::InvalidRestriction(format!("`{p}` compares a measure with text")));
                    };
                    out.push(Filter::Measure { column, p, value });
                }
                other => {
                    return Err(StoreError::InvalidRestriction(format!(
                        "`{other}` is a {}, not an attribute or measure",
                        other.kind()
                    )))
                }
            }
        }
        Ok(out)
    }
}

fn attribute_of(e: &ElementRef) -> Result<(&str, &str, &str), StoreError> {
    e.as_attribute().ok_or_else(|| StoreError::NotAnAttribute { element: e.to_string() })
}
