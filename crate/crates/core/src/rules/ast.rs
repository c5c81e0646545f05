use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::ElementPath;

/// The manipulation kinds a rule can observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum EventKind {
    Displayed,
    Rotated,
    DrilledDown,
    RolledUp,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [EventKind::Displayed, EventKind::Rotated, EventKind::DrilledDown, EventKind::RolledUp];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Displayed => "DISPLAYED",
            EventKind::Rotated => "ROTATED",
            EventKind::DrilledDown => "DRILLED-DOWN",
            EventKind::RolledUp => "ROLLED-UP",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || k.as_str().replace('-', "") == norm)
            .ok_or_else(|| format!("unknown event `{s}`"))
    }
}

/// Optional `ON`, `TO` and `ACCORDING TO` filters of a drill or roll event.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ForageFilter {
    pub on: Option<String>,
    pub to: Option<String>,
    pub according_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPattern {
    Displayed,
    Rotated { from: Option<String>, to: Option<String> },
    DrilledDown(ForageFilter),
    RolledUp(ForageFilter),
}

impl EventPattern {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPattern::Displayed => EventKind::Displayed,
            EventPattern::Rotated { .. } => EventKind::Rotated,
            EventPattern::DrilledDown(_) => EventKind::DrilledDown,
            EventPattern::RolledUp(_) => EventKind::RolledUp,
        }
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind())?;
        match self {
            EventPattern::Displayed => {}
            EventPattern::Rotated { from, to } => {
                if let Some(d) = from {
                    write!(f, " FROM {d}")?;
                }
                if let Some(d) = to {
                    write!(f, " TO {d}")?;
                }
            }
            EventPattern::DrilledDown(filter) | EventPattern::RolledUp(filter) => {
                if let Some(d) = &filter.on {
                    write!(f, " ON {d}")?;
                }
                if let Some(p) = &filter.to {
                    write!(f, " TO {p}")?;
                }
                if let Some(h) = &filter.according_to {
                    write!(f, " ACCORDING TO {h}")?;
                }
            }
        }
        Ok(())
    }
}

/// Boolean combination of `current(E)` atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Current(ElementPath),
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

impl Condition {
    fn is_compound(&self) -> bool {
        matches!(self, Condition::And(_) | Condition::Or(_))
    }

    /// Every `current` atom, left to right.
    pub fn atoms(&self) -> Vec<&ElementPath> {
        match self {
            Condition::Current(p) => vec![p],
            Condition::Not(c) => c.atoms(),
            Condition::And(cs) | Condition::Or(cs) => cs.iter().flat_map(Condition::atoms).collect(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let operand = |f: &mut fmt::Formatter<'_>, c: &Condition| {
            if c.is_compound() {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        };
        match self {
            Condition::Current(p) => write!(f, "current({p})"),
            Condition::Not(c) => {
                f.write_str("NOT ")?;
                operand(f, c)
            }
            Condition::And(cs) | Condition::Or(cs) => {
                let sep = if matches!(self, Condition::And(_)) { " AND " } else { " OR " };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    operand(f, c)?;
                }
                Ok(())
            }
        }
    }
}

/// `priority(element, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub element: ElementPath,
    pub weight: f64,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "priority({}, {})", self.element, self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub target: ElementPath,
    pub events: Vec<EventPattern>,
    pub condition: Option<Condition>,
    pub actions: Vec<Action>,
}

impl Rule {
    pub fn is_conditional(&self) -> bool {
        self.condition.is_some()
    }
}

/// Canonical multi-line rendering; parses back to an equal rule.
impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CREATE RULE {} ON {}", self.name, self.target)?;
        f.write_str("WHEN ")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("\n")?;
        if let Some(c) = &self.condition {
            writeln!(f, "IF {c}")?;
        }
        f.write_str("THEN ")?;
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(",\n     ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(";")
    }
}
