use std::fmt;

use serde::Serialize;

use super::{Aggregation, Constellation, Dimension, SchemaError};
use crate::lexer::{tokenize, Cursor, Position, TokenKind};

/// An element reference as written: `A`, `A.b`, `A.b.c` or `A[b].c`.
#[derive(Debug, Clone, Eq)]
pub struct ElementPath {
    pub segments: Vec<String>,
    /// The bracketed qualifier in `A[b].c`.
    pub qualifier: Option<String>,
    pub pos: Position,
}

impl ElementPath {
    pub fn new<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Self {
        Self {
            segments: segments.into_iter().map(Into::into).collect(),
            qualifier: None,
            pos: Position::default(),
        }
    }

    pub fn qualified(head: impl Into<String>, qualifier: impl Into<String>, last: impl Into<String>) -> Self {
        Self {
            segments: vec![head.into(), last.into()],
            qualifier: Some(qualifier.into()),
            pos: Position::default(),
        }
    }

    /// Parses `ident [ "[" ident "]" ] { "." ident }` from a cursor.
    pub(crate) fn parse(cur: &mut Cursor) -> Result<Self, SchemaError> {
        let head = cur.advance();
        let pos = head.pos;
        let first = expect_ident(&head, "element name")?;
        let mut path = ElementPath { segments: vec![first], qualifier: None, pos };
        if cur.eat_punct('[') {
            let q = cur.advance();
            path.qualifier = Some(expect_ident(&q, "qualifier")?);
            let close = cur.advance();
            if close.kind != TokenKind::Punct(']') {
                return Err(syntax(&close, "`]`"));
            }
            let dot = cur.advance();
            if dot.kind != TokenKind::Punct('.') {
                return Err(syntax(&dot, "`.`"));
            }
            let last = cur.advance();
            path.segments.push(expect_ident(&last, "element name")?);
        }
        while cur.eat_punct('.') {
            let seg = cur.advance();
            path.segments.push(expect_ident(&seg, "element name")?);
        }
        Ok(path)
    }
}

// Positions are diagnostic only and do not take part in equality.
impl PartialEq for ElementPath {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments && self.qualifier == other.qualifier
    }
}

impl fmt::Display for ElementPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(seg)?;
            if i == 0 {
                if let Some(q) = &self.qualifier {
                    write!(f, "[{q}]")?;
                }
            }
        }
        Ok(())
    }
}

fn expect_ident(tok: &crate::lexer::Token, what: &str) -> Result<String, SchemaError> {
    tok.ident().map(str::to_string).ok_or_else(|| syntax(tok, what))
}

fn syntax(tok: &crate::lexer::Token, expected: &str) -> SchemaError {
    SchemaError::Syntax { pos: tok.pos, expected: expected.to_string(), found: tok.kind.to_string() }
}

/// A resolved constellation element, in canonical spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ElementRef {
    Dimension { dimension: String },
    Hierarchy { dimension: String, hierarchy: String },
    Parameter { dimension: String, hierarchy: String, attribute: String },
    WeakAttribute { dimension: String, hierarchy: String, attribute: String },
    Fact { fact: String },
    AggregatedMeasure { fact: String, aggregation: Aggregation, measure: String },
    Measure { fact: String, measure: String },
}

impl ElementRef {
    pub fn kind(&self) -> &'static str {
        match self {
            ElementRef::Dimension { .. } => "dimension",
            ElementRef::Hierarchy { .. } => "hierarchy",
            ElementRef::Parameter { .. } => "parameter",
            ElementRef::WeakAttribute { .. } => "weak-attribute",
            ElementRef::Fact { .. } => "fact",
            ElementRef::AggregatedMeasure { .. } => "aggregated-measure",
            ElementRef::Measure { .. } => "measure",
        }
    }

    /// The dimension or fact this element belongs to.
    pub fn owner(&self) -> &str {
        match self {
            ElementRef::Dimension { dimension }
            | ElementRef::Hierarchy { dimension, .. }
            | ElementRef::Parameter { dimension, .. }
            | ElementRef::WeakAttribute { dimension, .. } => dimension,
            ElementRef::Fact { fact }
            | ElementRef::AggregatedMeasure { fact, .. }
            | ElementRef::Measure { fact, .. } => fact,
        }
    }

    /// `(dimension, hierarchy, attribute)` for parameters and weak attributes.
    pub fn as_attribute(&self) -> Option<(&str, &str, &str)> {
        match self {
            ElementRef::Parameter { dimension, hierarchy, attribute }
            | ElementRef::WeakAttribute { dimension, hierarchy, attribute } => {
                Some((dimension, hierarchy, attribute))
            }
            _ => None,
        }
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Dimension { dimension } => f.write_str(dimension),
            ElementRef::Hierarchy { dimension, hierarchy } => write!(f, "{dimension}.{hierarchy}"),
            ElementRef::Parameter { dimension, hierarchy, attribute }
            | ElementRef::WeakAttribute { dimension, hierarchy, attribute } => {
                write!(f, "{dimension}.{hierarchy}.{attribute}")
            }
            ElementRef::Fact { fact } => f.write_str(fact),
            ElementRef::AggregatedMeasure { fact, aggregation, measure } => {
                write!(f, "{fact}[{aggregation}].{measure}")
            }
            ElementRef::Measure { fact, measure } => write!(f, "{fact}.{measure}"),
        }
    }
}

pub(super) fn resolve_text(c: &Constellation, text: &str) -> Result<ElementRef, SchemaError> {
    let mut cur = Cursor::new(tokenize(text)?);
    let path = ElementPath::parse(&mut cur)?;
    if !cur.at_eof() {
        let tok = cur.advance();
        return Err(syntax(&tok, "end of element"));
    }
    resolve_path(c, &path)
}

pub(super) fn resolve_path(c: &Constellation, path: &ElementPath) -> Result<ElementRef, SchemaError> {
    let unresolved = || SchemaError::UnresolvedName { path: path.to_string() };
    let head = &path.segments[0];

    if let Some(q) = &path.qualifier {
        if path.segments.len() != 2 {
            return Err(unresolved());
        }
        let last = &path.segments[1];
        if let Some(dim) = c.dimension(head) {
            let h = dim.hierarchy(q).ok_or_else(unresolved)?;
            return attribute_ref(dim, &h.name, last).ok_or_else(unresolved);
        }
        if let Some(fact) = c.fact(head) {
            let aggregation = q.parse::<Aggregation>().map_err(|_| unresolved())?;
            let m = fact.measure(last).ok_or_else(unresolved)?;
            return Ok(ElementRef::AggregatedMeasure {
                fact: fact.name.clone(),
                aggregation,
                measure: m.measure.clone(),
            });
        }
        return Err(unresolved());
    }

    match path.segments.len() {
        1 => {
            if let Some(f) = c.fact(head) {
                return Ok(ElementRef::Fact { fact: f.name.clone() });
            }
            if let Some(d) = c.dimension(head) {
                return Ok(ElementRef::Dimension { dimension: d.name.clone() });
            }
            // A bare hierarchy name, as in `current(HGEO)`.
            let matches: Vec<ElementRef> = c
                .dimensions()
                .iter()
                .filter_map(|d| {
                    d.hierarchy(head).map(|h| ElementRef::Hierarchy {
                        dimension: d.name.clone(),
                        hierarchy: h.name.clone(),
                    })
                })
                .collect();
            single(path, matches)
        }
        2 => {
            let second = &path.segments[1];
            if let Some(f) = c.fact(head) {
                let m = f.measure(second).ok_or_else(unresolved)?;
                return Ok(ElementRef::Measure { fact: f.name.clone(), measure: m.measure.clone() });
            }
            let dim = c.dimension(head).ok_or_else(unresolved)?;
            if let Some(h) = dim.hierarchy(second) {
                return Ok(ElementRef::Hierarchy { dimension: dim.name.clone(), hierarchy: h.name.clone() });
            }
            let matches: Vec<ElementRef> =
                dim.hierarchies.iter().filter_map(|h| attribute_ref(dim, &h.name, second)).collect();
            single(path, matches)
        }
        3 => {
            let dim = c.dimension(head).ok_or_else(unresolved)?;
            let h = dim.hierarchy(&path.segments[1]).ok_or_else(unresolved)?;
            attribute_ref(dim, &h.name, &path.segments[2]).ok_or_else(unresolved)
        }
        _ => Err(unresolved()),
    }
}

fn attribute_ref(dim: &Dimension, hier: &str, attr: &str) -> Option<ElementRef> {
    let h = dim.hierarchy(hier)?;
    if let Some(i) = h.param_index(attr) {
        return Some(ElementRef::Parameter {
            dimension: dim.name.clone(),
            hierarchy: h.name.clone(),
            attribute: h.params[i].clone(),
        });
    }
    let canonical = h.canonical(attr).filter(|_| h.is_weak(attr))?;
    Some(ElementRef::WeakAttribute {
        dimension: dim.name.clone(),
        hierarchy: h.name.clone(),
        attribute: canonical.to_string(),
    })
}

fn single(path: &ElementPath, mut matches: Vec<ElementRef>) -> Result<ElementRef, SchemaError> {
    match matches.len() {
        0 => Err(SchemaError::UnresolvedName { path: path.to_string() }),
        1 => Ok(matches.remove(0)),
        _ => Err(SchemaError::AmbiguousName {
            path: path.to_string(),
            candidates: matches.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::schema::{build_constellation, fixture, Attribute, Hierarchy};

    #[test]
    fn resolves_dotted_and_bracketed_spellings() {
        let c = fixture::constellation();
        let expected = ElementRef::Parameter {
            dimension: "TEMPS".into(),
            hierarchy: "HTPS".into(),
            attribute: "Année".into(),
        };
        assert_eq!(c.resolve_element("Temps.HTPS.Année").unwrap(), expected);
        assert_eq!(c.resolve_element("Temps[HTPS].Année").unwrap(), expected);
        assert_eq!(c.resolve_element("temps.htps.ANNÉE").unwrap(), expected);
        assert_eq!(c.resolve_element("Ventes").unwrap(), ElementRef::Fact { fact: "VENTES".into() });
        assert_eq!(
            c.resolve_element("Temps.HTPS.Libellém").unwrap(),
            ElementRef::WeakAttribute {
                dimension: "TEMPS".into(),
                hierarchy: "HTPS".into(),
                attribute: "LibelléM".into()
            }
        );
        assert_eq!(
            c.resolve_element("HGEO").unwrap(),
            ElementRef::Hierarchy { dimension: "CLIENTS".into(), hierarchy: "HGEO".into() }
        );
        assert_eq!(
            c.resolve_element("Ventes[sum].montant").unwrap().to_string(),
            "VENTES[SUM].Montant"
        );
        assert_eq!(c.resolve_element("Ventes.Montant").unwrap().kind(), "measure");
        assert_eq!(c.resolve_element("Clients.Ville").unwrap().kind(), "parameter");
    }

    #[test]
    fn unresolved_and_ambiguous() {
        let c = fixture::constellation();
        assert_eq!(c.resolve_element("Temps.HXYZ.Année").unwrap_err().code(), "unresolved-name");
        assert_eq!(c.resolve_element("Produits.HGEO.CodeCli").unwrap_err().code(), "unresolved-name");
        assert_eq!(c.resolve_element("Temps.HTPS.Année.x").unwrap_err().code(), "unresolved-name");
        assert_eq!(c.resolve_element("Temps.").unwrap_err().code(), "syntax-error");

        let d = crate::schema::Dimension::new(
            "D",
            vec![Attribute::text("k"), Attribute::text("a"), Attribute::text("b")],
            vec![Hierarchy::new("h1", ["k", "a"]), Hierarchy::new("h2", ["k", "b"])],
        );
        let c = build_constellation("x", vec![d], vec![], &BTreeMap::new()).unwrap();
        assert_eq!(c.resolve_element("D.k").unwrap_err().code(), "ambiguous-name");
        assert_eq!(c.resolve_element("D.a").unwrap().to_string(), "D.h1.a");
    }

    #[test]
    fn canonical_spelling_resolves_to_itself() {
        let c = fixture::constellation();
        for text in [
            "temps", "temps.htps", "Temps[htps].moisn", "temps.libellém", "hgeo", "ventes", "ventes.montant",
            "achats[avg].montant", "clients.hgeo.région",
        ] {
            let r = c.resolve_element(text).unwrap();
            assert_eq!(c.resolve_element(&r.to_string()).unwrap(), r, "{text}");
        }
    }
}
