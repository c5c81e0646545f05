//! Multidimensional tables and the four threshold-aware operators.
//!
//! Without a threshold every operator behaves classically and ignores the
//! profile's rules. With one, the operator fires the rules against the
//! prospective table and shows every attribute whose weight reaches the
//! threshold, above a level floor: 0 for DISPLAY and ROTATE, the target's
//! level for DRILLDOWN and ROLLUP. The forage target is always shown.

use serde::Serialize;
use thiserror::Error;

use crate::rules::{
    qualified_attributes, AxisContext, EventKind, Forage, OperationContext, Rotation, RuleEngine, WeightAssignment,
    WeightKey,
};
use crate::schema::{same_name, Constellation, Dimension, Fact, ElementRef, Hierarchy, MeasureSpec, SchemaError, ALL};
use crate::store::{CellGrid, DataStore, Restriction, StoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unknown fact `{0}`")]
    UnknownFact(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("dimension `{dimension}` has no hierarchy `{hierarchy}`")]
    UnknownHierarchy { dimension: String, hierarchy: String },
    #[error("fact `{fact}` is not connected to dimension `{dimension}`")]
    FactNotStarred { fact: String, dimension: String },
    #[error("a table needs at least one measure")]
    EmptySubject,
    #[error("`{0}` cannot be shown on both axes")]
    SameDimensionOnBothAxes(String),
    #[error("dimension `{0}` is not displayed in the table")]
    DimNotInTable(String),
    #[error("`{0}` is already displayed on the other axis")]
    RotationTargetConflict(String),
    #[error("`{attribute}` is a weak attribute; forages target parameters")]
    NotAParameter { attribute: String },
    #[error("`{attribute}` is not finer than `{finest}`, the finest displayed level")]
    AttrNotFiner { attribute: String, finest: String },
    #[error("`{attribute}` is finer than `{finest}`, the finest displayed level")]
    AttrNotCoarser { attribute: String, finest: String },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
}

impl AlgebraError {
    pub fn code(&self) -> &'static str {
        match self {
            AlgebraError::Schema(e) => e.code(),
            AlgebraError::Store(e) => e.code(),
            AlgebraError::UnknownFact(_) => "unknown-fact",
            AlgebraError::UnknownDimension(_) => "unknown-dimension",
            AlgebraError::UnknownHierarchy { .. } => "unknown-hierarchy",
            AlgebraError::FactNotStarred { .. } => "fact-not-starred",
            AlgebraError::EmptySubject => "empty-subject",
            AlgebraError::SameDimensionOnBothAxes(_) => "same-dimension-on-both-axes",
            AlgebraError::DimNotInTable(_) => "dim-not-in-table",
            AlgebraError::RotationTargetConflict(_) => "rotation-target-conflict",
            AlgebraError::NotAParameter { .. } => "not-a-parameter",
            AlgebraError::AttrNotFiner { .. } => "attr-not-finer",
            AlgebraError::AttrNotCoarser { .. } => "attr-not-coarser",
            AlgebraError::InvalidThreshold(_) => "invalid-threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subject {
    pub fact: String,
    pub measures: Vec<MeasureSpec>,
}

/// One axis: a dimension, one of its hierarchies and the displayed
/// attributes, coarsest first. No attributes means the `All` level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub dimension: String,
    pub hierarchy: String,
    pub attributes: Vec<String>,
}

impl Axis {
    pub fn new<S: Into<String>>(dimension: &str, hierarchy: &str, attributes: impl IntoIterator<Item = S>) -> Self {
        Self {
            dimension: dimension.to_string(),
            hierarchy: hierarchy.to_string(),
            attributes: attributes.into_iter().map(Into::into).collect(),
        }
    }

    fn context(&self) -> AxisContext {
        AxisContext::new(&self.dimension, &self.hierarchy, self.attributes.clone())
    }
}

/// A multidimensional table (S, L, C, R) together with its cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MultidimTable {
    pub subject: Subject,
    pub rows: Axis,
    pub cols: Axis,
    pub restriction: Restriction,
    pub grid: CellGrid,
}

impl MultidimTable {
    /// Builds a table and computes its grid.
    pub fn compute(
        store: &DataStore,
        subject: Subject,
        rows: Axis,
        cols: Axis,
        restriction: Restriction,
    ) -> Result<Self, AlgebraError> {
        let c = store.schema();
        let refs = |a: &Axis| -> Result<Vec<ElementRef>, AlgebraError> {
            let (_, h) = lookup_axis(c, &a.dimension, &a.hierarchy)?;
            a.attributes.iter().map(|x| attribute_ref(&a.dimension, h, x)).collect()
        };
        let grid = store.aggregate(&subject.fact, &subject.measures, &refs(&rows)?, &refs(&cols)?, &restriction)?;
        Ok(Self { subject, rows, cols, restriction, grid })
    }

    pub fn axis(&self, dimension: &str) -> Option<&Axis> {
        [&self.rows, &self.cols].into_iter().find(|a| same_name(&a.dimension, dimension))
    }

    /// The prospective context of this table seen as a plain display.
    pub fn context(&self) -> OperationContext {
        OperationContext::displayed(
            &self.subject.fact,
            self.subject.measures.clone(),
            self.rows.context(),
            self.cols.context(),
        )
    }
}

fn attribute_ref(dimension: &str, h: &Hierarchy, attr: &str) -> Result<ElementRef, AlgebraError> {
    let canonical = h
        .canonical(attr)
        .filter(|a| *a != ALL)
        .ok_or_else(|| SchemaError::AttrNotInHierarchy { hierarchy: h.name.clone(), attribute: attr.to_string() })?;
    let (dimension, hierarchy, attribute) = (dimension.to_string(), h.name.clone(), canonical.to_string());
    Ok(if h.is_param(canonical) {
        ElementRef::Parameter { dimension, hierarchy, attribute }
    } else {
        ElementRef::WeakAttribute { dimension, hierarchy, attribute }
    })
}

fn lookup_axis<'c>(c: &'c Constellation, dim: &str, hier: &str) -> Result<(&'c Dimension, &'c Hierarchy), AlgebraError> {
    let d = c.dimension(dim).ok_or_else(|| AlgebraError::UnknownDimension(dim.to_string()))?;
    let h = d.hierarchy(hier).ok_or_else(|| AlgebraError::UnknownHierarchy {
        dimension: d.name.clone(),
        hierarchy: hier.to_string(),
    })?;
    Ok((d, h))
}

fn check_threshold(t: Option<f64>) -> Result<(), AlgebraError> {
    match t {
        Some(v) if !(0.0..=1.0).contains(&v) => Err(AlgebraError::InvalidThreshold(v)),
        _ => Ok(()),
    }
}

/// Level of the finest displayed attribute, `All` for an empty axis.
fn finest_level(h: &Hierarchy, attrs: &[String]) -> usize {
    attrs.iter().filter_map(|a| h.granularity_level(a).ok()).min().unwrap_or(h.all_level())
}

fn level_name(h: &Hierarchy, level: usize) -> String {
    h.params.get(level).cloned().unwrap_or_else(|| ALL.to_string())
}

/// Which axis of a table a dimension sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Rows,
    Cols,
}

/// The operators over one data snapshot and one rule snapshot.
#[derive(Debug, Clone, Copy)]
pub struct Olap<'a> {
    pub store: &'a DataStore,
    pub rules: &'a RuleEngine,
}

impl<'a> Olap<'a> {
    pub fn new(store: &'a DataStore, rules: &'a RuleEngine) -> Self {
        Self { store, rules }
    }

    fn schema(&self) -> &'a Constellation {
        self.store.schema()
    }

    /// DISPLAY(F, specs, DL, HL, DC, HC [, threshold]).
    pub fn display(
        &self,
        profile: &str,
        fact: &str,
        specs: &[MeasureSpec],
        rows: (&str, &str),
        cols: (&str, &str),
        threshold: Option<f64>,
    ) -> Result<MultidimTable, AlgebraError> {
        check_threshold(threshold)?;
        let c = self.schema();
        let f = c.fact(fact).ok_or_else(|| AlgebraError::UnknownFact(fact.to_string()))?;
        if specs.is_empty() {
            return Err(AlgebraError::EmptySubject);
        }
        let mut measures = Vec::with_capacity(specs.len());
        for s in specs {
            let decl = f.measure(&s.measure).ok_or_else(|| StoreError::UnknownMeasure {
                fact: f.name.clone(),
                measure: s.measure.clone(),
            })?;
            measures.push(MeasureSpec::new(s.aggregation, decl.measure.clone()));
        }
        let (dl, hl) = lookup_axis(c, rows.0, rows.1)?;
        let (dc, hc) = lookup_axis(c, cols.0, cols.1)?;
        for d in [dl, dc] {
            if !c.is_starred(&f.name, &d.name) {
                return Err(AlgebraError::FactNotStarred { fact: f.name.clone(), dimension: d.name.clone() });
            }
        }
        if dl.name == dc.name {
            return Err(AlgebraError::SameDimensionOnBothAxes(dl.name.clone()));
        }

        let mut row_axis = Axis::new(&dl.name, &hl.name, [hl.coarsest()]);
        let mut col_axis = Axis::new(&dc.name, &hc.name, [hc.coarsest()]);
        if let Some(t) = threshold {
            let ctx = OperationContext::displayed(&f.name, measures.clone(), row_axis.context(), col_axis.context());
            let wa = self.rules.fire_rules(profile, &ctx);
            row_axis.attributes = qualified_attributes(&wa, t, dl, hl, 0, None);
            col_axis.attributes = qualified_attributes(&wa, t, dc, hc, 0, None);
            append_weighted_measures(&wa, t, f, &mut measures);
        }
        let subject = Subject { fact: f.name.clone(), measures };
        MultidimTable::compute(self.store, subject, row_axis, col_axis, Restriction::none())
    }

    /// ROTATE(T, Dold, Dnew, Hnew [, threshold]).
    pub fn rotate(
        &self,
        t: &MultidimTable,
        profile: &str,
        d_old: &str,
        d_new: &str,
        h_new: &str,
        threshold: Option<f64>,
    ) -> Result<MultidimTable, AlgebraError> {
        check_threshold(threshold)?;
        let c = self.schema();
        let side = side_of(t, d_old)?;
        let (d, h) = lookup_axis(c, d_new, h_new)?;
        if !c.is_starred(&t.subject.fact, &d.name) {
            return Err(AlgebraError::FactNotStarred { fact: t.subject.fact.clone(), dimension: d.name.clone() });
        }
        let retained = match side {
            Side::Rows => &t.cols,
            Side::Cols => &t.rows,
        };
        if same_name(&retained.dimension, &d.name) {
            return Err(AlgebraError::RotationTargetConflict(d.name.clone()));
        }
        let old = match side {
            Side::Rows => &t.rows,
            Side::Cols => &t.cols,
        };

        let mut axis = Axis::new(&d.name, &h.name, [h.coarsest()]);
        if let Some(threshold) = threshold {
            let mut ctx = with_axis(t, side, &axis);
            ctx.event = EventKind::Rotated;
            ctx.rotation = Some(Rotation { from: old.dimension.clone(), to: d.name.clone() });
            let wa = self.rules.fire_rules(profile, &ctx);
            axis.attributes = qualified_attributes(&wa, threshold, d, h, 0, None);
        }
        self.replace(t, side, axis)
    }

    /// DRILLDOWN(T, D, Attinf [, threshold]).
    pub fn drilldown(
        &self,
        t: &MultidimTable,
        profile: &str,
        dim: &str,
        att_inf: &str,
        threshold: Option<f64>,
    ) -> Result<MultidimTable, AlgebraError> {
        check_threshold(threshold)?;
        let (side, current, d, h) = self.forage_axis(t, dim)?;
        let target = forage_target(h, att_inf)?;
        let level = h.granularity_level(&target)?;
        let finest = finest_level(h, &current.attributes);
        if target == ALL || level >= finest {
            return Err(AlgebraError::AttrNotFiner { attribute: target, finest: level_name(h, finest) });
        }

        let mut attrs = current.attributes.clone();
        attrs.push(target.clone());
        let mut axis = Axis::new(&d.name, &h.name, h.canonical_order(&attrs));
        if let Some(threshold) = threshold {
            let wa = self.forage_weights(t, profile, side, &axis, EventKind::DrilledDown, &target);
            axis.attributes = qualified_attributes(&wa, threshold, d, h, level, Some(&target));
        }
        self.replace(t, side, axis)
    }

    /// ROLLUP(T, D, Attsup [, threshold]). `All` rolls the axis up to a
    /// single total line.
    pub fn rollup(
        &self,
        t: &MultidimTable,
        profile: &str,
        dim: &str,
        att_sup: &str,
        threshold: Option<f64>,
    ) -> Result<MultidimTable, AlgebraError> {
        check_threshold(threshold)?;
        let (side, current, d, h) = self.forage_axis(t, dim)?;
        let target = forage_target(h, att_sup)?;
        let level = h.granularity_level(&target)?;
        let finest = finest_level(h, &current.attributes);
        if level < finest {
            return Err(AlgebraError::AttrNotCoarser { attribute: target, finest: level_name(h, finest) });
        }

        let mut attrs: Vec<String> = current
            .attributes
            .iter()
            .filter(|a| h.granularity_level(a).is_ok_and(|l| l >= level))
            .cloned()
            .collect();
        if target != ALL {
            attrs.push(target.clone());
        }
        let mut axis = Axis::new(&d.name, &h.name, h.canonical_order(&attrs));
        if let Some(threshold) = threshold {
            let wa = self.forage_weights(t, profile, side, &axis, EventKind::RolledUp, &target);
            axis.attributes = qualified_attributes(&wa, threshold, d, h, level, Some(&target));
        }
        self.replace(t, side, axis)
    }

    fn forage_axis<'t>(
        &self,
        t: &'t MultidimTable,
        dim: &str,
    ) -> Result<(Side, &'t Axis, &'a Dimension, &'a Hierarchy), AlgebraError> {
        let side = side_of(t, dim)?;
        let axis = match side {
            Side::Rows => &t.rows,
            Side::Cols => &t.cols,
        };
        let (d, h) = lookup_axis(self.schema(), &axis.dimension, &axis.hierarchy)?;
        Ok((side, axis, d, h))
    }

    fn forage_weights(
        &self,
        t: &MultidimTable,
        profile: &str,
        side: Side,
        axis: &Axis,
        event: EventKind,
        target: &str,
    ) -> WeightAssignment {
        let mut ctx = with_axis(t, side, axis);
        ctx.event = event;
        ctx.forage = Some(Forage {
            dimension: axis.dimension.clone(),
            parameter: target.to_string(),
            hierarchy: axis.hierarchy.clone(),
        });
        self.rules.fire_rules(profile, &ctx)
    }

    fn replace(&self, t: &MultidimTable, side: Side, axis: Axis) -> Result<MultidimTable, AlgebraError> {
        let (rows, cols) = match side {
            Side::Rows => (axis, t.cols.clone()),
            Side::Cols => (t.rows.clone(), axis),
        };
        MultidimTable::compute(self.store, t.subject.clone(), rows, cols, t.restriction.clone())
    }
}

fn side_of(t: &MultidimTable, dim: &str) -> Result<Side, AlgebraError> {
    if same_name(&t.rows.dimension, dim) {
        Ok(Side::Rows)
    } else if same_name(&t.cols.dimension, dim) {
        Ok(Side::Cols)
    } else {
        Err(AlgebraError::DimNotInTable(dim.to_string()))
    }
}

/// Canonical spelling of a forage target, which must be a parameter or `All`.
fn forage_target(h: &Hierarchy, attr: &str) -> Result<String, AlgebraError> {
    let canonical = h
        .canonical(attr)
        .ok_or_else(|| SchemaError::AttrNotInHierarchy { hierarchy: h.name.clone(), attribute: attr.to_string() })?;
    if h.is_weak(canonical) {
        return Err(AlgebraError::NotAParameter { attribute: canonical.to_string() });
    }
    Ok(canonical.to_string())
}

/// The table's context with one axis swapped for its prospective version.
fn with_axis(t: &MultidimTable, side: Side, axis: &Axis) -> OperationContext {
    let mut ctx = t.context();
    match side {
        Side::Rows => ctx.rows = axis.context(),
        Side::Cols => ctx.cols = axis.context(),
    }
    ctx
}

/// Adds the fact's measures whose weight reaches the threshold. A weight set
/// through `F[AGG].m` brings that aggregation, otherwise the declared one.
fn append_weighted_measures(wa: &WeightAssignment, threshold: f64, fact: &Fact, measures: &mut Vec<MeasureSpec>) {
    for (key, entry) in wa.iter() {
        let WeightKey::Measure { fact: f, measure } = key else { continue };
        if !same_name(f, &fact.name) || entry.weight < threshold {
            continue;
        }
        let Some(decl) = fact.measure(measure) else { continue };
        let spec = MeasureSpec::new(entry.aggregation.unwrap_or(decl.aggregation), decl.measure.clone());
        if !measures.contains(&spec) {
            measures.push(spec);
        }
    }
}
