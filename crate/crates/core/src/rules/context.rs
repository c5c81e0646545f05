use serde::Serialize;

use super::ast::EventKind;
use crate::schema::{same_name, ElementRef, MeasureSpec};

/// One axis of the prospective table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisContext {
    pub dimension: String,
    pub hierarchy: String,
    pub attributes: Vec<String>,
}

impl AxisContext {
    pub fn new(dimension: &str, hierarchy: &str, attributes: Vec<String>) -> Self {
        Self { dimension: dimension.to_string(), hierarchy: hierarchy.to_string(), attributes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rotation {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forage {
    pub dimension: String,
    pub parameter: String,
    pub hierarchy: String,
}

/// The elements a pending operation is about to put on screen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperationContext {
    pub event: EventKind,
    pub fact: String,
    pub measures: Vec<MeasureSpec>,
    pub rows: AxisContext,
    pub cols: AxisContext,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Rotation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forage: Option<Forage>,
}

impl OperationContext {
    pub fn displayed(fact: &str, measures: Vec<MeasureSpec>, rows: AxisContext, cols: AxisContext) -> Self {
        Self {
            event: EventKind::Displayed,
            fact: fact.to_string(),
            measures,
            rows,
            cols,
            rotation: None,
            forage: None,
        }
    }

    pub fn axes(&self) -> [&AxisContext; 2] {
        [&self.rows, &self.cols]
    }

    /// The same context seen as a plain display, used to compute defaults.
    pub(crate) fn as_displayed(&self) -> OperationContext {
        OperationContext { event: EventKind::Displayed, rotation: None, forage: None, ..self.clone() }
    }
}

/// Whether `e` takes part in the prospective table.
pub fn evaluate_current(ctx: &OperationContext, e: &ElementRef) -> bool {
    let on_axis = |dim: &str, hier: Option<&str>, attr: Option<&str>| {
        ctx.axes().iter().any(|a| {
            same_name(&a.dimension, dim)
                && hier.is_none_or(|h| same_name(&a.hierarchy, h))
                && attr.is_none_or(|x| a.attributes.iter().any(|y| same_name(x, y)))
        })
    };
    match e {
        ElementRef::Fact { fact } => same_name(fact, &ctx.fact),
        ElementRef::Measure { fact, measure } => {
            same_name(fact, &ctx.fact) && ctx.measures.iter().any(|m| same_name(&m.measure, measure))
        }
        ElementRef::AggregatedMeasure { fact, aggregation, measure } => {
            same_name(fact, &ctx.fact)
                && ctx.measures.iter().any(|m| m.aggregation == *aggregation && same_name(&m.measure, measure))
        }
        ElementRef::Dimension { dimension } => on_axis(dimension, None, None),
        ElementRef::Hierarchy { dimension, hierarchy } => on_axis(dimension, Some(hierarchy), None),
        ElementRef::Parameter { dimension, hierarchy, attribute }
        | ElementRef::WeakAttribute { dimension, hierarchy, attribute } => {
            on_axis(dimension, Some(hierarchy), Some(attribute))
        }
    }
}
