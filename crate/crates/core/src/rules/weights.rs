use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::schema::{same_name, Aggregation, Dimension, Hierarchy, ALL};

/// What a weight is attached to. Attribute weights are kept per hierarchy so a
/// parameter shared by two hierarchies can carry two weights.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKey {
    Attribute { dimension: String, hierarchy: String, attribute: String },
    Measure { fact: String, measure: String },
}

impl WeightKey {
    pub fn attribute(dimension: &str, hierarchy: &str, attribute: &str) -> Self {
        WeightKey::Attribute {
            dimension: dimension.to_string(),
            hierarchy: hierarchy.to_string(),
            attribute: attribute.to_string(),
        }
    }

    pub fn measure(fact: &str, measure: &str) -> Self {
        WeightKey::Measure { fact: fact.to_string(), measure: measure.to_string() }
    }

    /// The (dimension, hierarchy) or (fact, none) pair that event-specific
    /// weights shadow as a block.
    pub fn scope(&self) -> (&str, Option<&str>) {
        match self {
            WeightKey::Attribute { dimension, hierarchy, .. } => (dimension, Some(hierarchy)),
            WeightKey::Measure { fact, .. } => (fact, None),
        }
    }
}

impl fmt::Display for WeightKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKey::Attribute { dimension, hierarchy, attribute } => write!(f, "{dimension}.{hierarchy}.{attribute}"),
            WeightKey::Measure { fact, measure } => write!(f, "{fact}.{measure}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightEntry {
    pub weight: f64,
    /// Name of the rule that set this weight last.
    pub rule: String,
    /// Aggregation named by a `F[AGG].m` action, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
}

/// Effective weights for one operation, with provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightAssignment {
    entries: BTreeMap<WeightKey, WeightEntry>,
}

impl WeightAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: WeightKey, entry: WeightEntry) {
        self.entries.insert(key, entry);
    }

    pub fn get(&self, key: &WeightKey) -> Option<&WeightEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WeightKey, &WeightEntry)> {
        self.entries.iter()
    }

    /// Weight of an attribute in a hierarchy; unweighted attributes count as 0.
    pub fn attribute_weight(&self, dimension: &str, hierarchy: &str, attribute: &str) -> f64 {
        self.entries
            .iter()
            .find(|(k, _)| match k {
                WeightKey::Attribute { dimension: d, hierarchy: h, attribute: a } => {
                    same_name(d, dimension) && same_name(h, hierarchy) && same_name(a, attribute)
                }
                WeightKey::Measure { .. } => false,
            })
            .map_or(0.0, |(_, e)| e.weight)
    }

    pub fn measure_weight(&self, fact: &str, measure: &str) -> f64 {
        self.entries
            .iter()
            .find(|(k, _)| matches!(k, WeightKey::Measure { fact: f, measure: m } if same_name(f, fact) && same_name(m, measure)))
            .map_or(0.0, |(_, e)| e.weight)
    }

    /// `attribute name → weight` for one hierarchy, handy in tests and the
    /// weight inspector.
    pub fn for_hierarchy(&self, dimension: &str, hierarchy: &str) -> BTreeMap<String, f64> {
        self.entries
            .iter()
            .filter_map(|(k, e)| match k {
                WeightKey::Attribute { dimension: d, hierarchy: h, attribute }
                    if same_name(d, dimension) && same_name(h, hierarchy) =>
                {
                    Some((attribute.clone(), e.weight))
                }
                _ => None,
            })
            .collect()
    }

    /// Keeps `self` for every scope it covers and takes `defaults` for the
    /// others.
    pub(crate) fn shadowing(mut self, defaults: WeightAssignment) -> WeightAssignment {
        let covered: Vec<(String, Option<String>)> =
            self.entries.keys().map(|k| { let (o, h) = k.scope(); (o.to_string(), h.map(str::to_string)) }).collect();
        for (k, e) in defaults.entries {
            let (o, h) = k.scope();
            if !covered.iter().any(|(co, ch)| co == o && ch.as_deref() == h) {
                self.entries.insert(k, e);
            }
        }
        self
    }
}

impl Serialize for WeightAssignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            element: String,
            #[serde(flatten)]
            key: &'a WeightKey,
            #[serde(flatten)]
            entry: &'a WeightEntry,
        }
        s.collect_seq(self.entries.iter().map(|(key, entry)| Row { element: key.to_string(), key, entry }))
    }
}

/// Attributes of `hier` to display for a given weighting.
///
/// Keeps every parameter and weak attribute at level `level_floor` or above
/// whose weight reaches `threshold`, plus `forced`. A forced `All` keeps the
/// axis empty. Without any qualifying parameter and nothing forced, the
/// coarsest parameter is shown as the classic operators would.
pub fn qualified_attributes(
    wa: &WeightAssignment,
    threshold: f64,
    dim: &Dimension,
    hier: &Hierarchy,
    level_floor: usize,
    forced: Option<&str>,
) -> Vec<String> {
    let forced = forced.and_then(|f| hier.canonical(f));
    let mut keep: Vec<&str> = hier
        .display_order()
        .into_iter()
        .filter(|a| hier.granularity_level(a).is_ok_and(|l| l >= level_floor))
        .filter(|a| wa.attribute_weight(&dim.name, &hier.name, a) >= threshold || Some(*a) == forced)
        .collect();
    if forced.is_none() && !keep.iter().any(|a| hier.is_param(a)) {
        keep.push(hier.coarsest());
    }
    keep.retain(|a| *a != ALL);
    hier.canonical_order(&keep)
}
