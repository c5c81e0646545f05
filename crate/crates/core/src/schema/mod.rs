//! Constellation metamodel: facts, dimensions, hierarchies and the star mapping.
//!
//! Names are matched case-insensitively everywhere; the spelling used at
//! declaration time is the canonical one and is what every lookup returns.

mod ddl;
mod element;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::{LexError, Position};

pub use ddl::parse_ddl;
pub use element::{ElementPath, ElementRef};

/// The implicit total-aggregation level sitting above every hierarchy.
pub const ALL: &str = "All";

/// Case-insensitive name equality.
pub fn same_name(a: &str, b: &str) -> bool {
    a == b || a.to_lowercase() == b.to_lowercase()
}

pub(crate) fn fold(name: &str) -> String {
    name.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("duplicate name `{name}` in {scope}")]
    DuplicateName { scope: String, name: String },
    #[error("star mapping references unknown {kind} `{name}`")]
    DanglingStarReference { kind: &'static str, name: String },
    #[error("fact `{fact}` is not connected to any dimension")]
    EmptyStarEntry { fact: String },
    #[error("hierarchy `{hierarchy}` of `{dimension}` uses unknown attribute `{attribute}`")]
    HierarchyAttributeMissing { dimension: String, hierarchy: String, attribute: String },
    #[error("hierarchy `{hierarchy}` of `{dimension}` is invalid: {reason}")]
    InvalidHierarchy { dimension: String, hierarchy: String, reason: String },
    #[error("dimension `{dimension}` has no hierarchy")]
    MissingHierarchy { dimension: String },
    #[error("hierarchies of `{dimension}` do not share the root parameter `{expected}` (`{hierarchy}` starts at `{found}`)")]
    InconsistentRoot { dimension: String, hierarchy: String, expected: String, found: String },
    #[error("`{name}` is reserved")]
    ReservedName { name: String },
    #[error("unresolved element `{path}`")]
    UnresolvedName { path: String },
    #[error("ambiguous element `{path}`: matches {candidates}")]
    AmbiguousName { path: String, candidates: String },
    #[error("`{attribute}` is not an attribute of hierarchy `{hierarchy}`")]
    AttrNotInHierarchy { hierarchy: String, attribute: String },
    #[error("attribute `{attribute}` of `{dimension}` declared with conflicting kinds")]
    ConflictingKind { dimension: String, attribute: String },
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax { pos: Position, expected: String, found: String },
    #[error("lex error: {0}")]
    Lex(#[from] LexError),
}

impl SchemaError {
    pub fn code(&self) -> &'static str {
        match self {
            SchemaError::DuplicateName { .. } => "duplicate-name",
            SchemaError::DanglingStarReference { .. } => "dangling-star-reference",
            SchemaError::EmptyStarEntry { .. } => "empty-star-entry",
            SchemaError::HierarchyAttributeMissing { .. } => "hierarchy-attribute-missing",
            SchemaError::InvalidHierarchy { .. } => "invalid-hierarchy",
            SchemaError::MissingHierarchy { .. } => "missing-hierarchy",
            SchemaError::InconsistentRoot { .. } => "inconsistent-root",
            SchemaError::ReservedName { .. } => "reserved-name",
            SchemaError::UnresolvedName { .. } => "unresolved-name",
            SchemaError::AmbiguousName { .. } => "ambiguous-name",
            SchemaError::AttrNotInHierarchy { .. } => "attr-not-in-hierarchy",
            SchemaError::ConflictingKind { .. } => "conflicting-kind",
            SchemaError::Syntax { .. } => "syntax-error",
            SchemaError::Lex(_) => "lex-error",
        }
    }

    pub fn position(&self) -> Option<Position> {
        match self {
            SchemaError::Syntax { pos, .. } => Some(*pos),
            SchemaError::Lex(e) => Some(e.pos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    #[default]
    Text,
    Integer,
    Real,
}

impl FromStr for ValueKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.to_ascii_uppercase().as_str() {
            "TEXT" => Ok(ValueKind::Text),
            "INTEGER" | "INT" => Ok(ValueKind::Integer),
            "REAL" => Ok(ValueKind::Real),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(default)]
    pub kind: ValueKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn text(name: impl Into<String>) -> Self {
        Self::new(name, ValueKind::Text)
    }
}

/// An ordered path of parameters from finest (level 0) to coarsest, with weak
/// attributes hanging off individual parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub name: String,
    pub params: Vec<String>,
    /// Owning parameter → weak attributes, in declaration order.
    #[serde(default)]
    pub weak: BTreeMap<String, Vec<String>>,
}

impl Hierarchy {
    pub fn new<I, S>(name: impl Into<String>, params: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            params: params.into_iter().map(Into::into).collect(),
            weak: BTreeMap::new(),
        }
    }

    pub fn with_weak(mut self, attr: impl Into<String>, owner: impl Into<String>) -> Self {
        self.weak.entry(owner.into()).or_default().push(attr.into());
        self
    }

    /// Level of the implicit `All` pseudo-parameter.
    pub fn all_level(&self) -> usize {
        self.params.len()
    }

    pub fn coarsest(&self) -> &str {
        self.params.last().map(String::as_str).unwrap_or(ALL)
    }

    pub fn finest(&self) -> Option<&str> {
        self.params.first().map(String::as_str)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| same_name(p, name))
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.param_index(name).is_some()
    }

    /// Canonical owner of a weak attribute.
    pub fn owner_of(&self, weak: &str) -> Option<&str> {
        self.weak
            .iter()
            .find(|(_, attrs)| attrs.iter().any(|a| same_name(a, weak)))
            .map(|(owner, _)| owner.as_str())
    }

    pub fn is_weak(&self, name: &str) -> bool {
        self.owner_of(name).is_some()
    }

    pub fn weak_of(&self, param: &str) -> &[String] {
        self.weak
            .iter()
            .find(|(owner, _)| same_name(owner, param))
            .map(|(_, attrs)| attrs.as_slice())
            .unwrap_or(&[])
    }

    /// Declared spelling of a parameter, weak attribute or `All`.
    pub fn canonical<'a>(&'a self, name: &str) -> Option<&'a str> {
        if same_name(name, ALL) {
            return Some(ALL);
        }
        if let Some(i) = self.param_index(name) {
            return Some(&self.params[i]);
        }
        self.weak.values().flatten().find(|a| same_name(a, name)).map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.is_param(name) || self.is_weak(name)
    }

    /// Level of a parameter, of a weak attribute (its owner's level) or of `All`.
    pub fn granularity_level(&self, attr: &str) -> Result<usize, SchemaError> {
        if same_name(attr, ALL) {
            return Ok(self.all_level());
        }
        if let Some(i) = self.param_index(attr) {
            return Ok(i);
        }
        self.owner_of(attr)
            .and_then(|owner| self.param_index(owner))
            .ok_or_else(|| SchemaError::AttrNotInHierarchy {
                hierarchy: self.name.clone(),
                attribute: attr.to_string(),
            })
    }

    /// Every parameter and weak attribute, coarsest level first, each
    /// parameter followed by its weak attributes.
    pub fn display_order(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for p in self.params.iter().rev() {
            out.push(p.as_str());
            out.extend(self.weak_of(p).iter().map(String::as_str));
        }
        out
    }

    /// Sorts attribute names into display order and drops duplicates and
    /// names outside the hierarchy.
    pub fn canonical_order<S: AsRef<str>>(&self, attrs: &[S]) -> Vec<String> {
        self.display_order()
            .into_iter()
            .filter(|a| attrs.iter().any(|x| same_name(x.as_ref(), a)))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub hierarchies: Vec<Hierarchy>,
}

impl Dimension {
    pub fn new(name: impl Into<String>, attributes: Vec<Attribute>, hierarchies: Vec<Hierarchy>) -> Self {
        Self { name: name.into(), attributes, hierarchies }
    }

    pub fn hierarchy(&self, name: &str) -> Option<&Hierarchy> {
        self.hierarchies.iter().find(|h| same_name(&h.name, name))
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| same_name(&a.name, name))
    }

    /// The finest parameter shared by every hierarchy; identifies instances.
    pub fn key(&self) -> &str {
        self.hierarchies.first().and_then(Hierarchy::finest).unwrap_or_default()
    }

    pub fn granularity_level(&self, hier: &str, attr: &str) -> Result<usize, SchemaError> {
        let h = self.hierarchy(hier).ok_or_else(|| SchemaError::UnresolvedName {
            path: format!("{}.{}", self.name, hier),
        })?;
        h.granularity_level(attr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Aggregation {
    Sum,
    Avg,
    Min,
    Max,
    Count,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] =
        [Aggregation::Sum, Aggregation::Avg, Aggregation::Min, Aggregation::Max, Aggregation::Count];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Sum => "SUM",
            Aggregation::Avg => "AVG",
            Aggregation::Min => "MIN",
            Aggregation::Max => "MAX",
            Aggregation::Count => "COUNT",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Aggregation::ALL.into_iter().find(|a| a.as_str().eq_ignore_ascii_case(s)).ok_or(())
    }
}

/// A measure observed through an aggregation function, e.g. `SUM(Montant)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub aggregation: Aggregation,
    pub measure: String,
}

impl MeasureSpec {
    pub fn new(aggregation: Aggregation, measure: impl Into<String>) -> Self {
        Self { aggregation, measure: measure.into() }
    }

    pub fn sum(measure: impl Into<String>) -> Self {
        Self::new(Aggregation::Sum, measure)
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.aggregation, self.measure)
    }
}

impl FromStr for MeasureSpec {
    type Err = String;

    /// Parses `AGG(measure)`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| format!("expected AGG(measure), got `{s}`"))?;
        if !s.ends_with(')') {
            return Err(format!("expected AGG(measure), got `{s}`"));
        }
        let aggregation = s[..open]
            .trim()
            .parse()
            .map_err(|_| format!("unknown aggregation `{}`", s[..open].trim()))?;
        let measure = s[open + 1..s.len() - 1].trim();
        if measure.is_empty() {
            return Err(format!("missing measure in `{s}`"));
        }
        Ok(MeasureSpec::new(aggregation, measure))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub name: String,
    /// Measures with their default aggregation.
    pub measures: Vec<MeasureSpec>,
}

impl Fact {
    pub fn new(name: impl Into<String>, measures: Vec<MeasureSpec>) -> Self {
        Self { name: name.into(), measures }
    }

    pub fn measure(&self, name: &str) -> Option<&MeasureSpec> {
        self.measures.iter().find(|m| same_name(&m.measure, name))
    }
}

/// A validated constellation. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constellation {
    name: String,
    facts: Vec<Fact>,
    dimensions: Vec<Dimension>,
    /// Fact name → connected dimension names, all in canonical spelling.
    star: BTreeMap<String, Vec<String>>,
}

impl Constellation {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn fact(&self, name: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| same_name(&f.name, name))
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| same_name(&d.name, name))
    }

    /// Dimensions connected to `fact`, in declaration order of the star entry.
    pub fn star(&self, fact: &str) -> &[String] {
        self.fact(fact)
            .and_then(|f| self.star.get(&f.name))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_starred(&self, fact: &str, dim: &str) -> bool {
        self.star(fact).iter().any(|d| same_name(d, dim))
    }

    pub fn resolve_element(&self, text: &str) -> Result<ElementRef, SchemaError> {
        element::resolve_text(self, text)
    }

    pub fn resolve_path(&self, path: &ElementPath) -> Result<ElementRef, SchemaError> {
        element::resolve_path(self, path)
    }
}

/// Validates the pieces of a constellation and assembles it.
///
/// Checks run in a fixed order (names, hierarchies, star) so the same input
/// always fails with the same error.
pub fn build_constellation(
    name: impl Into<String>,
    dims: Vec<Dimension>,
    facts: Vec<Fact>,
    star: &BTreeMap<String, Vec<String>>,
) -> Result<Constellation, SchemaError> {
    let name = name.into();
    let mut seen = HashSet::new();
    for n in facts.iter().map(|f| &f.name).chain(dims.iter().map(|d| &d.name)) {
        check_reserved(n)?;
        if !seen.insert(fold(n)) {
            return Err(SchemaError::DuplicateName { scope: name.clone(), name: n.clone() });
        }
    }

    for fact in &facts {
        unique(&fact.name, fact.measures.iter().map(|m| &m.measure))?;
    }
    for dim in &dims {
        validate_dimension(dim)?;
    }

    let mut canonical_star = BTreeMap::new();
    for (fact_name, dim_names) in star {
        let fact = facts.iter().find(|f| same_name(&f.name, fact_name)).ok_or_else(|| {
            SchemaError::DanglingStarReference { kind: "fact", name: fact_name.clone() }
        })?;
        let mut connected: Vec<String> = Vec::new();
        for dn in dim_names {
            let dim = dims.iter().find(|d| same_name(&d.name, dn)).ok_or_else(|| {
                SchemaError::DanglingStarReference { kind: "dimension", name: dn.clone() }
            })?;
            if !connected.contains(&dim.name) {
                connected.push(dim.name.clone());
            }
        }
        if canonical_star.insert(fact.name.clone(), connected).is_some() {
            return Err(SchemaError::DuplicateName { scope: "star".into(), name: fact.name.clone() });
        }
    }
    for fact in &facts {
        if canonical_star.get(&fact.name).is_none_or(|d: &Vec<String>| d.is_empty()) {
            return Err(SchemaError::EmptyStarEntry { fact: fact.name.clone() });
        }
    }

    Ok(Constellation { name, facts, dimensions: dims, star: canonical_star })
}

fn check_reserved(name: &str) -> Result<(), SchemaError> {
    if same_name(name, ALL) {
        Err(SchemaError::ReservedName { name: name.to_string() })
    } else {
        Ok(())
    }
}

fn unique<'a>(scope: &str, names: impl Iterator<Item = &'a String>) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(fold(n)) {
            return Err(SchemaError::DuplicateName { scope: scope.to_string(), name: n.clone() });
        }
    }
    Ok(())
}

fn validate_dimension(dim: &Dimension) -> Result<(), SchemaError> {
    unique(&dim.name, dim.attributes.iter().map(|a| &a.name))?;
    unique(&dim.name, dim.hierarchies.iter().map(|h| &h.name))?;
    for a in &dim.attributes {
        check_reserved(&a.name)?;
    }
    let root = dim
        .hierarchies
        .first()
        .ok_or_else(|| SchemaError::MissingHierarchy { dimension: dim.name.clone() })?;

    for h in &dim.hierarchies {
        let invalid = |reason: String| SchemaError::InvalidHierarchy {
            dimension: dim.name.clone(),
            hierarchy: h.name.clone(),
            reason,
        };
        let missing = |attribute: &str| SchemaError::HierarchyAttributeMissing {
            dimension: dim.name.clone(),
            hierarchy: h.name.clone(),
            attribute: attribute.to_string(),
        };
        if h.params.is_empty() {
            return Err(invalid("no parameters".into()));
        }
        let mut seen = HashSet::new();
        for p in &h.params {
            if dim.attribute(p).is_none() {
                return Err(missing(p));
            }
            if !seen.insert(fold(p)) {
                return Err(invalid(format!("parameter `{p}` appears twice")));
            }
        }
        let mut weak_seen = HashSet::new();
        for (owner, attrs) in &h.weak {
            if !h.is_param(owner) {
                return Err(invalid(format!("weak attributes attached to non-parameter `{owner}`")));
            }
            for w in attrs {
                if dim.attribute(w).is_none() {
                    return Err(missing(w));
                }
                if h.is_param(w) {
                    return Err(invalid(format!("`{w}` is both a parameter and a weak attribute")));
                }
                if !weak_seen.insert(fold(w)) {
                    return Err(invalid(format!("weak attribute `{w}` attached twice")));
                }
            }
        }
        let expected = root.params[0].as_str();
        if !same_name(&h.params[0], expected) {
            return Err(SchemaError::InconsistentRoot {
                dimension: dim.name.clone(),
                hierarchy: h.name.clone(),
                expected: expected.to_string(),
                found: h.params[0].clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixture {
    use super::*;

    /// The sales/purchases constellation used throughout the tests.
    pub fn constellation() -> Constellation {
        let temps = Dimension::new(
            "TEMPS",
            vec![
                Attribute::text("MoisN"),
                Attribute::text("LibelléM"),
                Attribute::text("Trimestre"),
                Attribute::new("Année", ValueKind::Integer),
            ],
            vec![Hierarchy::new("HTPS", ["MoisN", "Trimestre", "Année"]).with_weak("LibelléM", "MoisN")],
        );
        let clients = Dimension::new(
            "CLIENTS",
            vec![
                Attribute::text("CodeCli"),
                Attribute::text("Ville"),
                Attribute::new("DeptN", ValueKind::Integer),
                Attribute::text("Région"),
            ],
            vec![Hierarchy::new("HGEO", ["CodeCli", "Ville", "DeptN", "Région"])],
        );
        let produits = Dimension::new(
            "PRODUITS",
            vec![Attribute::text("CodeProduit"), Attribute::text("Classe")],
            vec![Hierarchy::new("HPRO", ["CodeProduit", "Classe"])],
        );
        let facts = vec![
            Fact::new("VENTES", vec![MeasureSpec::sum("Montant")]),
            Fact::new("ACHATS", vec![MeasureSpec::sum("Montant")]),
        ];
        let star = BTreeMap::from([
            ("VENTES".to_string(), vec!["TEMPS".into(), "CLIENTS".into(), "PRODUITS".into()]),
            ("ACHATS".to_string(), vec!["TEMPS".into(), "PRODUITS".into()]),
        ]);
        build_constellation("ventes_achats", vec![temps, clients, produits], facts, &star).unwrap()
    }
}
