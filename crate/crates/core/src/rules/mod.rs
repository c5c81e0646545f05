//! Personalization rules: the ECA language, per-profile rule sets, the
//! materialized weight registry and rule firing against an operation context.

mod ast;
mod context;
mod parser;
mod weights;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use ast::{Action, Condition, EventKind, EventPattern, ForageFilter, Rule};
pub use context::{evaluate_current, AxisContext, Forage, OperationContext, Rotation};
pub use parser::{parse_rule, parse_rules};
pub use weights::{qualified_attributes, WeightAssignment, WeightEntry, WeightKey};

use crate::lexer::{LexError, Position};
use crate::schema::{fold, same_name, Aggregation, Constellation, ElementPath, ElementRef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("lex error: {0}")]
    Lex(#[from] LexError),
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax { pos: Position, expected: String, found: String },
    #[error("weight {value} at {pos} is outside [0, 1]")]
    WeightOutOfRange { pos: Position, value: String },
    #[error("unresolved element `{path}` at {pos}: {reason}")]
    UnresolvedElement { path: String, pos: Position, reason: String },
    #[error("rule target `{path}` is a {kind}; rules attach to a fact, dimension or hierarchy")]
    InvalidTarget { path: String, pos: Position, kind: &'static str },
    #[error("profile `{profile}` already has a rule named `{name}`")]
    DuplicateRuleName { profile: String, name: String },
    #[error("profile `{profile}` has no rule named `{name}`")]
    UnknownRule { profile: String, name: String },
}

impl RuleError {
    pub fn code(&self) -> &'static str {
        match self {
            RuleError::Lex(_) => "lex-error",
            RuleError::Syntax { .. } => "syntax-error",
            RuleError::WeightOutOfRange { .. } => "weight-out-of-range",
            RuleError::UnresolvedElement { .. } => "unresolved-element",
            RuleError::InvalidTarget { .. } => "invalid-target",
            RuleError::DuplicateRuleName { .. } => "duplicate-rule-name",
            RuleError::UnknownRule { .. } => "unknown-rule",
        }
    }

    pub fn position(&self) -> Option<Position> {
        match self {
            RuleError::Lex(e) => Some(e.pos),
            RuleError::Syntax { pos, .. }
            | RuleError::WeightOutOfRange { pos, .. }
            | RuleError::UnresolvedElement { pos, .. }
            | RuleError::InvalidTarget { pos, .. } => Some(*pos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Guard {
    Current(ElementRef),
    Not(Box<Guard>),
    And(Vec<Guard>),
    Or(Vec<Guard>),
}

impl Guard {
    fn holds(&self, ctx: &OperationContext) -> bool {
        match self {
            Guard::Current(e) => evaluate_current(ctx, e),
            Guard::Not(g) => !g.holds(ctx),
            Guard::And(gs) => gs.iter().all(|g| g.holds(ctx)),
            Guard::Or(gs) => gs.iter().any(|g| g.holds(ctx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Assignment {
    key: WeightKey,
    weight: f64,
    aggregation: Option<Aggregation>,
}

/// A rule resolved against a constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    source: Rule,
    target: ElementRef,
    events: Vec<EventPattern>,
    guard: Option<Guard>,
    assignments: Vec<Assignment>,
}

impl CompiledRule {
    pub fn name(&self) -> &str {
        &self.source.name
    }

    pub fn source(&self) -> &Rule {
        &self.source
    }

    pub fn target(&self) -> &ElementRef {
        &self.target
    }

    /// Event patterns with names in their declared spelling.
    pub fn events(&self) -> &[EventPattern] {
        &self.events
    }

    fn fires(&self, ctx: &OperationContext) -> bool {
        self.events.iter().any(|e| pattern_matches(e, ctx))
            && involves(ctx, &self.target)
            && self.guard.as_ref().is_none_or(|g| g.holds(ctx))
    }

    /// Expanded actions with later duplicates folded into the first slot.
    fn net_assignments(&self) -> Vec<&Assignment> {
        let mut out: Vec<&Assignment> = Vec::new();
        for a in &self.assignments {
            match out.iter_mut().find(|x| x.key == a.key) {
                Some(slot) => *slot = a,
                None => out.push(a),
            }
        }
        out
    }
}

fn pattern_matches(p: &EventPattern, ctx: &OperationContext) -> bool {
    let field = |want: &Option<String>, have: Option<&str>| match want {
        None => true,
        Some(w) => have.is_some_and(|h| same_name(w, h)),
    };
    if p.kind() != ctx.event {
        return false;
    }
    match p {
        EventPattern::Displayed => true,
        EventPattern::Rotated { from, to } => {
            let r = ctx.rotation.as_ref();
            field(from, r.map(|r| r.from.as_str())) && field(to, r.map(|r| r.to.as_str()))
        }
        EventPattern::DrilledDown(f) | EventPattern::RolledUp(f) => {
            let g = ctx.forage.as_ref();
            field(&f.on, g.map(|g| g.dimension.as_str()))
                && field(&f.to, g.map(|g| g.parameter.as_str()))
                && field(&f.according_to, g.map(|g| g.hierarchy.as_str()))
        }
    }
}

/// Whether the rule target is the element being manipulated. A rotation also
/// manipulates the dimension it removes.
fn involves(ctx: &OperationContext, target: &ElementRef) -> bool {
    if evaluate_current(ctx, target) {
        return true;
    }
    match (target, &ctx.rotation) {
        (ElementRef::Dimension { dimension } | ElementRef::Hierarchy { dimension, .. }, Some(r)) => {
            same_name(dimension, &r.from)
        }
        _ => false,
    }
}

/// One materialized weight: operation, element, attribute and weight, plus
/// the event filter columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistryRow {
    pub operation: EventKind,
    /// Dimension or fact name.
    pub element: String,
    pub hierarchy: Option<String>,
    pub attribute: String,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub on: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub according_to: Option<String>,
    pub rule: String,
    pub scope: ElementRef,
    #[serde(skip)]
    aggregation: Option<Aggregation>,
}

impl RegistryRow {
    fn key(&self) -> WeightKey {
        match &self.hierarchy {
            Some(h) => WeightKey::attribute(&self.element, h, &self.attribute),
            None => WeightKey::measure(&self.element, &self.attribute),
        }
    }

    fn pattern(&self) -> EventPattern {
        let forage = || ForageFilter { on: self.on.clone(), to: self.to.clone(), according_to: self.according_to.clone() };
        match self.operation {
            EventKind::Displayed => EventPattern::Displayed,
            EventKind::Rotated => EventPattern::Rotated { from: self.from.clone(), to: self.to.clone() },
            EventKind::DrilledDown => EventPattern::DrilledDown(forage()),
            EventKind::RolledUp => EventPattern::RolledUp(forage()),
        }
    }
}

/// A named rule set and its materialized registry.
#[derive(Debug, Clone, Default)]
pub struct Profile {
    name: String,
    rules: Vec<CompiledRule>,
    registry: Vec<RegistryRow>,
}

impl Profile {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    /// Registry rows of the unconditional rules, in registration order.
    pub fn registry(&self) -> &[RegistryRow] {
        &self.registry
    }

    fn rebuild_registry(&mut self) {
        self.registry = self.rules.iter().filter(|r| r.guard.is_none()).flat_map(materialize).collect();
    }
}

fn materialize(rule: &CompiledRule) -> Vec<RegistryRow> {
    let net = rule.net_assignments();
    let mut rows = Vec::new();
    for event in &rule.events {
        let (from, to, on, according_to) = match event {
            EventPattern::Displayed => (None, None, None, None),
            EventPattern::Rotated { from, to } => (from.clone(), to.clone(), None, None),
            EventPattern::DrilledDown(f) | EventPattern::RolledUp(f) => {
                (None, f.to.clone(), f.on.clone(), f.according_to.clone())
            }
        };
        for a in &net {
            let (element, hierarchy, attribute) = match &a.key {
                WeightKey::Attribute { dimension, hierarchy, attribute } => {
                    (dimension.clone(), Some(hierarchy.clone()), attribute.clone())
                }
                WeightKey::Measure { fact, measure } => (fact.clone(), None, measure.clone()),
            };
            rows.push(RegistryRow {
                operation: event.kind(),
                element,
                hierarchy,
                attribute,
                weight: a.weight,
                from: from.clone(),
                to: to.clone(),
                on: on.clone(),
                according_to: according_to.clone(),
                rule: rule.source.name.clone(),
                scope: rule.target.clone(),
                aggregation: a.aggregation,
            });
        }
    }
    rows
}

/// Rule sets of every profile. Profiles come into being on first use.
#[derive(Debug, Clone, Default)]
pub struct RuleEngine {
    profiles: BTreeMap<String, Profile>,
}

impl RuleEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn profile(&self, name: &str) -> Option<&Profile> {
        self.profiles.get(&fold(name))
    }

    pub fn profile_names(&self) -> Vec<&str> {
        self.profiles.values().map(|p| p.name.as_str()).collect()
    }

    pub fn rules(&self, profile: &str) -> &[CompiledRule] {
        self.profile(profile).map_or(&[], |p| &p.rules)
    }

    pub fn registry(&self, profile: &str) -> &[RegistryRow] {
        self.profile(profile).map_or(&[], |p| &p.registry)
    }

    fn profile_mut(&mut self, name: &str) -> &mut Profile {
        self.profiles
            .entry(fold(name))
            .or_insert_with(|| Profile { name: name.to_string(), ..Profile::default() })
    }

    /// Resolves `rule` and appends it to the profile.
    pub fn register_rule(&mut self, profile: &str, c: &Constellation, rule: Rule) -> Result<&CompiledRule, RuleError> {
        self.register_all(profile, c, vec![rule])?;
        Ok(self.rules(profile).last().expect("just registered"))
    }

    /// Parses and registers every rule of `source`; nothing is registered if
    /// any of them fails.
    pub fn register_source(&mut self, profile: &str, c: &Constellation, source: &str) -> Result<Vec<String>, RuleError> {
        let rules = parse_rules(source)?;
        let names = rules.iter().map(|r| r.name.clone()).collect();
        self.register_all(profile, c, rules)?;
        Ok(names)
    }

    fn register_all(&mut self, profile: &str, c: &Constellation, rules: Vec<Rule>) -> Result<(), RuleError> {
        let existing = self.rules(profile);
        let mut compiled: Vec<CompiledRule> = Vec::with_capacity(rules.len());
        for rule in rules {
            let clash = existing.iter().map(CompiledRule::name).chain(compiled.iter().map(CompiledRule::name));
            if clash.into_iter().any(|n| same_name(n, &rule.name)) {
                return Err(RuleError::DuplicateRuleName { profile: profile.to_string(), name: rule.name });
            }
            compiled.push(compile(c, rule)?);
        }
        let p = self.profile_mut(profile);
        p.rules.extend(compiled);
        p.rebuild_registry();
        Ok(())
    }

    pub fn drop_rule(&mut self, profile: &str, name: &str) -> Result<Rule, RuleError> {
        let unknown = || RuleError::UnknownRule { profile: profile.to_string(), name: name.to_string() };
        let p = self.profiles.get_mut(&fold(profile)).ok_or_else(unknown)?;
        let i = p.rules.iter().position(|r| same_name(r.name(), name)).ok_or_else(unknown)?;
        let removed = p.rules.remove(i);
        p.rebuild_registry();
        Ok(removed.source)
    }

    /// Recompiles every rule against a new constellation. Rules that no longer
    /// resolve are dropped and reported.
    pub fn rebind(&mut self, c: &Constellation) -> Vec<(String, String, RuleError)> {
        let mut dropped = Vec::new();
        for p in self.profiles.values_mut() {
            let old = std::mem::take(&mut p.rules);
            for r in old {
                match compile(c, r.source.clone()) {
                    Ok(rule) => p.rules.push(rule),
                    Err(e) => dropped.push((p.name.clone(), r.source.name.clone(), e)),
                }
            }
            p.rebuild_registry();
        }
        dropped
    }

    /// Effective weights for `ctx`: rules fire in registration order and later
    /// assignments win. For events other than DISPLAYED, any hierarchy or fact
    /// the event-specific rules leave untouched takes its DISPLAYED weights.
    pub fn fire_rules(&self, profile: &str, ctx: &OperationContext) -> WeightAssignment {
        let rules = self.rules(profile);
        let run = |ctx: &OperationContext| {
            let mut wa = WeightAssignment::new();
            for r in rules.iter().filter(|r| r.fires(ctx)) {
                for a in &r.assignments {
                    wa.set(a.key.clone(), WeightEntry { weight: a.weight, rule: r.name().to_string(), aggregation: a.aggregation });
                }
            }
            wa
        };
        with_defaults(ctx, run)
    }

    /// The same result as [`RuleEngine::fire_rules`] computed from the
    /// materialized registry alone. Conditional rules are not materialized, so
    /// both agree only when every rule is unconditional.
    pub fn registry_lookup(&self, profile: &str, ctx: &OperationContext) -> WeightAssignment {
        let rows = self.registry(profile);
        let run = |ctx: &OperationContext| {
            let mut wa = WeightAssignment::new();
            for row in rows.iter().filter(|r| pattern_matches(&r.pattern(), ctx) && involves(ctx, &r.scope)) {
                wa.set(row.key(), WeightEntry { weight: row.weight, rule: row.rule.clone(), aggregation: row.aggregation });
            }
            wa
        };
        with_defaults(ctx, run)
    }
}

fn with_defaults(ctx: &OperationContext, run: impl Fn(&OperationContext) -> WeightAssignment) -> WeightAssignment {
    let displayed = run(&ctx.as_displayed());
    if ctx.event == EventKind::Displayed {
        displayed
    } else {
        run(ctx).shadowing(displayed)
    }
}

fn resolve(c: &Constellation, path: &ElementPath) -> Result<ElementRef, RuleError> {
    c.resolve_path(path).map_err(|e| RuleError::UnresolvedElement {
        path: path.to_string(),
        pos: path.pos,
        reason: e.to_string(),
    })
}

fn unresolved_name(name: &str, pos: Position, reason: String) -> RuleError {
    RuleError::UnresolvedElement { path: name.to_string(), pos, reason }
}

fn compile(c: &Constellation, rule: Rule) -> Result<CompiledRule, RuleError> {
    let target = resolve(c, &rule.target)?;
    if !matches!(target, ElementRef::Dimension { .. } | ElementRef::Hierarchy { .. } | ElementRef::Fact { .. }) {
        return Err(RuleError::InvalidTarget { path: rule.target.to_string(), pos: rule.target.pos, kind: target.kind() });
    }
    let pos = rule.target.pos;
    let events = rule.events.iter().map(|e| canonical_event(c, e, pos)).collect::<Result<Vec<_>, _>>()?;
    let guard = rule.condition.as_ref().map(|cond| compile_guard(c, cond)).transpose()?;
    let mut assignments = Vec::new();
    for action in &rule.actions {
        let element = resolve(c, &action.element)?;
        expand(c, &element, action.weight, &mut assignments);
    }
    Ok(CompiledRule { source: rule, target, events, guard, assignments })
}

fn compile_guard(c: &Constellation, cond: &Condition) -> Result<Guard, RuleError> {
    Ok(match cond {
        Condition::Current(p) => Guard::Current(resolve(c, p)?),
        Condition::Not(inner) => Guard::Not(Box::new(compile_guard(c, inner)?)),
        Condition::And(cs) => Guard::And(cs.iter().map(|x| compile_guard(c, x)).collect::<Result<_, _>>()?),
        Condition::Or(cs) => Guard::Or(cs.iter().map(|x| compile_guard(c, x)).collect::<Result<_, _>>()?),
    })
}

fn canonical_event(c: &Constellation, e: &EventPattern, pos: Position) -> Result<EventPattern, RuleError> {
    let dim = |name: &Option<String>| -> Result<Option<String>, RuleError> {
        name.as_ref()
            .map(|n| {
                c.dimension(n)
                    .map(|d| d.name.clone())
                    .ok_or_else(|| unresolved_name(n, pos, format!("`{n}` is not a dimension")))
            })
            .transpose()
    };
    Ok(match e {
        EventPattern::Displayed => EventPattern::Displayed,
        EventPattern::Rotated { from, to } => EventPattern::Rotated { from: dim(from)?, to: dim(to)? },
        EventPattern::DrilledDown(f) | EventPattern::RolledUp(f) => {
            let on = dim(&f.on)?;
            let dims: Vec<_> = c.dimensions().iter().filter(|d| on.as_ref().is_none_or(|o| d.name == *o)).collect();
            let according_to = match &f.according_to {
                None => None,
                Some(h) => Some(
                    dims.iter()
                        .find_map(|d| d.hierarchy(h))
                        .map(|h| h.name.clone())
                        .ok_or_else(|| unresolved_name(h, pos, format!("`{h}` is not a hierarchy")))?,
                ),
            };
            let to = match &f.to {
                None => None,
                Some(p) => Some(
                    dims.iter()
                        .flat_map(|d| &d.hierarchies)
                        .filter(|h| according_to.as_ref().is_none_or(|a| h.name == *a))
                        .find_map(|h| h.param_index(p).map(|i| h.params[i].clone()))
                        .ok_or_else(|| unresolved_name(p, pos, format!("`{p}` is not a parameter")))?,
                ),
            };
            let filter = ForageFilter { on, to, according_to };
            if e.kind() == EventKind::DrilledDown {
                EventPattern::DrilledDown(filter)
            } else {
                EventPattern::RolledUp(filter)
            }
        }
    })
}

/// Dimension, hierarchy and fact actions stand for all their attributes or
/// measures.
fn expand(c: &Constellation, e: &ElementRef, weight: f64, out: &mut Vec<Assignment>) {
    let attr = |d: &str, h: &str, a: &str| Assignment { key: WeightKey::attribute(d, h, a), weight, aggregation: None };
    match e {
        ElementRef::Dimension { dimension } => {
            let d = c.dimension(dimension).expect("resolved");
            for h in &d.hierarchies {
                out.extend(h.display_order().into_iter().map(|a| attr(&d.name, &h.name, a)));
            }
        }
        ElementRef::Hierarchy { dimension, hierarchy } => {
            let h = c.dimension(dimension).and_then(|d| d.hierarchy(hierarchy)).expect("resolved");
            out.extend(h.display_order().into_iter().map(|a| attr(dimension, hierarchy, a)));
        }
        ElementRef::Parameter { dimension, hierarchy, attribute }
        | ElementRef::WeakAttribute { dimension, hierarchy, attribute } => out.push(attr(dimension, hierarchy, attribute)),
        ElementRef::Fact { fact } => {
            let f = c.fact(fact).expect("resolved");
            out.extend(f.measures.iter().map(|m| Assignment {
                key: WeightKey::measure(&f.name, &m.measure),
                weight,
                aggregation: None,
            }));
        }
        ElementRef::Measure { fact, measure } => {
            out.push(Assignment { key: WeightKey::measure(fact, measure), weight, aggregation: None })
        }
        ElementRef::AggregatedMeasure { fact, aggregation, measure } => out.push(Assignment {
            key: WeightKey::measure(fact, measure),
            weight,
            aggregation: Some(*aggregation),
        }),
    }
}
