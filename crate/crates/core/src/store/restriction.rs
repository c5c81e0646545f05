use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;

use crate::schema::ElementRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<>")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "<>",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

impl Literal {
    fn as_number(&self) -> Option<f64> {
        match self {
            Literal::Number(n) => Some(*n),
            Literal::Text(s) => s.parse().ok(),
        }
    }

    /// Compares a stored attribute value with this literal: numerically when
    /// both sides read as numbers, by codepoints otherwise.
    pub fn compare_value(&self, value: &str) -> Ordering {
        match (value.parse::<f64>(), self.as_number()) {
            (Ok(v), Some(n)) => v.total_cmp(&n),
            _ => match self {
                Literal::Text(s) => value.cmp(s.as_str()),
                Literal::Number(n) => value.cmp(n.to_string().as_str()),
            },
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

/// One atomic predicate over a parameter, weak attribute or measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predicate {
    pub element: ElementRef,
    pub op: Comparator,
    pub value: Literal,
}

impl Predicate {
    pub fn new(element: ElementRef, op: Comparator, value: Literal) -> Self {
        Self { element, op, value }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.element, self.op.as_str(), self.value)
    }
}

/// Conjunction of predicates; the empty conjunction is `true`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct Restriction {
    pub predicates: Vec<Predicate>,
}

impl Restriction {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_true(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn and(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            return f.write_str("true");
        }
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}
