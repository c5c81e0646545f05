//! Sessions, the command language and the service facade shared by the REPL
//! and the HTTP API.
//!
//! Every table-producing path goes through [`Service::execute`], so the two
//! front ends produce identical payloads for identical operation sequences.

mod command;
mod payload;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use command::{parse_command, Command, Operation};
pub use payload::{format_number, render_text, AxisPayload, CellPayload, SubjectPayload, TablePayload};

use crate::algebra::{AlgebraError, MultidimTable, Olap};
use crate::lexer::Position;
use crate::rules::{
    AxisContext, EventKind, Forage, OperationContext, Rotation, Rule, RuleEngine, RuleError, WeightAssignment,
};
use crate::schema::{parse_ddl, same_name, Constellation, SchemaError};
use crate::store::{DataStore, StoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    CommandSyntax { pos: Position, expected: String, found: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("no schema is loaded")]
    NoSchema,
    #[error("the session has no current table; start with DISPLAY")]
    NoTable,
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid weight query: {0}")]
    InvalidQuery(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Schema(e) => e.code(),
            ServiceError::Store(e) => e.code(),
            ServiceError::Rule(e) => e.code(),
            ServiceError::Algebra(e) => e.code(),
            ServiceError::CommandSyntax { .. } => "command-syntax-error",
            ServiceError::UnknownSession(_) => "unknown-session",
            ServiceError::NoSchema => "no-schema",
            ServiceError::NoTable => "no-current-table",
            ServiceError::Io { .. } => "io-error",
            ServiceError::InvalidMeasure(_) => "invalid-measure",
            ServiceError::InvalidQuery(_) => "invalid-query",
        }
    }

    pub fn position(&self) -> Option<Position> {
        match self {
            ServiceError::Schema(e) | ServiceError::Algebra(AlgebraError::Schema(e)) => e.position(),
            ServiceError::Rule(e) => e.position(),
            ServiceError::CommandSyntax { pos, .. } => Some(*pos),
            _ => None,
        }
    }
}

/// One analyst's workspace.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub profile: String,
    pub table: Option<MultidimTable>,
    /// Canonical text of every operation that produced a table, oldest first.
    pub history: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleInfo {
    pub name: String,
    pub target: String,
    pub conditional: bool,
    pub source: String,
}

/// Describes an operation context for weight inspection. Axes default to
/// their coarsest parameter, as the classic operator would show them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightQuery {
    pub event: String,
    pub fact: String,
    pub rowdim: String,
    pub rowhier: Option<String>,
    pub coldim: Option<String>,
    pub colhier: Option<String>,
    /// ROTATED: the dimension taken off the table.
    pub from: Option<String>,
    /// ROTATED: the dimension brought in; defaults to `rowdim`.
    pub to: Option<String>,
    /// DRILLED-DOWN and ROLLED-UP: the forage dimension; defaults to `rowdim`.
    pub on: Option<String>,
    /// DRILLED-DOWN and ROLLED-UP: the target parameter.
    pub param: Option<String>,
}

/// What a REPL command produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandOutput {
    Table(Box<TablePayload>),
    Text(String),
}

impl CommandOutput {
    pub fn render(&self) -> String {
        match self {
            CommandOutput::Table(t) => render_text(t),
            CommandOutput::Text(s) if s.ends_with('\n') => s.clone(),
            CommandOutput::Text(s) => format!("{s}\n"),
        }
    }
}

#[derive(Debug, Default)]
struct Snapshot {
    store: Option<Arc<DataStore>>,
    rules: Arc<RuleEngine>,
}

/// Loaded schema, data and rules plus the open sessions.
///
/// Lock order is always the snapshot first, then a session. Table
/// computations hold a read guard, so loads wait for them and then clear
/// every session's table in the same writer turn.
#[derive(Debug, Default)]
pub struct Service {
    state: RwLock<Snapshot>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn read_file(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path)
        .map_err(|e| ServiceError::Io { path: path.display().to_string(), message: e.to_string() })
}

impl Service {
    pub fn new() -> Self {
        Self::default()
    }

    /// A service over an already loaded store and rule set.
    pub fn with_store(store: DataStore, rules: RuleEngine) -> Self {
        let s = Self::new();
        *s.state.write().unwrap() = Snapshot { store: Some(Arc::new(store)), rules: Arc::new(rules) };
        s
    }

    fn snapshot(&self) -> std::sync::RwLockReadGuard<'_, Snapshot> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn snapshot_mut(&self) -> std::sync::RwLockWriteGuard<'_, Snapshot> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    fn clear_tables(&self) {
        for s in lock(&self.sessions).values() {
            lock(s).table = None;
        }
    }

    pub fn schema(&self) -> Result<Arc<Constellation>, ServiceError> {
        self.snapshot().store.as_ref().map(|s| s.schema().clone()).ok_or(ServiceError::NoSchema)
    }

    /// Replaces the schema with `ddl` and an empty store. Rules that no longer
    /// resolve are dropped and returned as (profile, rule, error).
    pub fn load_schema(&self, ddl: &str) -> Result<Vec<(String, String, RuleError)>, ServiceError> {
        let c = Arc::new(parse_ddl(ddl)?);
        let mut state = self.snapshot_mut();
        let mut rules = (*state.rules).clone();
        let dropped = rules.rebind(&c);
        *state = Snapshot { store: Some(Arc::new(DataStore::new(c))), rules: Arc::new(rules) };
        self.clear_tables();
        Ok(dropped)
    }

    pub fn load_schema_file(&self, path: &Path) -> Result<Vec<(String, String, RuleError)>, ServiceError> {
        self.load_schema(&read_file(path)?)
    }

    /// Replaces all instances with the CSV files of `dir`.
    pub fn load_data(&self, dir: &Path) -> Result<Vec<String>, ServiceError> {
        let schema = self.schema()?;
        let mut store = DataStore::new(schema);
        let loaded = store.load_dir(dir)?;
        let mut state = self.snapshot_mut();
        if !state.store.as_ref().is_some_and(|s| Arc::ptr_eq(s.schema(), store.schema())) {
            // The schema changed while the files were read.
            return Err(ServiceError::NoSchema);
        }
        state.store = Some(Arc::new(store));
        self.clear_tables();
        Ok(loaded)
    }

    /// Registers every rule of `source` in `profile`, all or nothing.
    pub fn add_rules(&self, profile: &str, source: &str) -> Result<Vec<String>, ServiceError> {
        let mut state = self.snapshot_mut();
        let schema = state.store.as_ref().ok_or(ServiceError::NoSchema)?.schema().clone();
        let names = Arc::make_mut(&mut state.rules).register_source(profile, &schema, source)?;
        Ok(names)
    }

    pub fn drop_rule(&self, profile: &str, name: &str) -> Result<Rule, ServiceError> {
        let mut state = self.snapshot_mut();
        Ok(Arc::make_mut(&mut state.rules).drop_rule(profile, name)?)
    }

    pub fn rules(&self, profile: &str) -> Vec<RuleInfo> {
        self.snapshot()
            .rules
            .rules(profile)
            .iter()
            .map(|r| RuleInfo {
                name: r.name().to_string(),
                target: r.target().to_string(),
                conditional: r.source().is_conditional(),
                source: r.source().to_string(),
            })
            .collect()
    }

    pub fn rule_engine(&self) -> Arc<RuleEngine> {
        self.snapshot().rules.clone()
    }

    /// Effective weights of `profile` in the context described by `q`.
    pub fn weights(&self, profile: &str, q: &WeightQuery) -> Result<WeightAssignment, ServiceError> {
        let state = self.snapshot();
        let store = state.store.as_ref().ok_or(ServiceError::NoSchema)?;
        let ctx = query_context(store.schema(), q)?;
        Ok(state.rules.fire_rules(profile, &ctx))
    }

    pub fn create_session(&self, profile: &str) -> String {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("s{n:04}");
        let session = Session { id: id.clone(), profile: profile.to_string(), table: None, history: Vec::new() };
        lock(&self.sessions).insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    /// A copy of the session's state.
    pub fn session_state(&self, id: &str) -> Result<Session, ServiceError> {
        Ok(lock(&*self.session(id)?).clone())
    }

    pub fn table(&self, id: &str) -> Result<TablePayload, ServiceError> {
        let session = self.session(id)?;
        let s = lock(&session);
        s.table.as_ref().map(TablePayload::from).ok_or(ServiceError::NoTable)
    }

    pub fn history(&self, id: &str) -> Result<Vec<String>, ServiceError> {
        Ok(lock(&*self.session(id)?).history.clone())
    }

    /// Runs `op` against the session's current table and makes the result
    /// current.
    pub fn execute(&self, id: &str, op: &Operation) -> Result<TablePayload, ServiceError> {
        let state = self.snapshot();
        let session = self.session(id)?;
        let mut s = lock(&session);
        let store = state.store.as_ref().ok_or(ServiceError::NoSchema)?;
        let olap = Olap::new(store, &state.rules);
        let p = s.profile.clone();
        let current = || s.table.as_ref().ok_or(ServiceError::NoTable);
        let table = match op {
            Operation::Display { fact, measures, row_dim, row_hier, col_dim, col_hier, threshold } => {
                let specs = Operation::measure_specs(measures)?;
                olap.display(&p, fact, &specs, (row_dim, row_hier), (col_dim, col_hier), *threshold)?
            }
            Operation::Rotate { d_old, d_new, hier, threshold } => {
                olap.rotate(current()?, &p, d_old, d_new, hier, *threshold)?
            }
            Operation::Drilldown { dim, attribute, threshold } => {
                olap.drilldown(current()?, &p, dim, attribute, *threshold)?
            }
            Operation::Rollup { dim, attribute, threshold } => olap.rollup(current()?, &p, dim, attribute, *threshold)?,
        };
        let payload = TablePayload::from(&table);
        s.table = Some(table);
        s.history.push(op.to_string());
        Ok(payload)
    }

    /// Parses and runs one command line on behalf of a session.
    pub fn run_command(&self, id: &str, line: &str) -> Result<CommandOutput, ServiceError> {
        let profile = || -> Result<String, ServiceError> { Ok(lock(&*self.session(id)?).profile.clone()) };
        Ok(match parse_command(line)? {
            Command::Op(op) => CommandOutput::Table(Box::new(self.execute(id, &op)?)),
            Command::ShowTable => CommandOutput::Table(Box::new(self.table(id)?)),
            Command::LoadSchema(path) => {
                let dropped = self.load_schema_file(Path::new(&path))?;
                let c = self.schema()?;
                let mut out = format!("schema {}: {} facts, {} dimensions", c.name(), c.facts().len(), c.dimensions().len());
                for (p, r, e) in dropped {
                    let _ = write!(out, "\ndropped rule {r} of profile {p}: {e}");
                }
                CommandOutput::Text(out)
            }
            Command::LoadData(path) => {
                let loaded = self.load_data(Path::new(&path))?;
                CommandOutput::Text(format!("loaded {}", loaded.join(", ")))
            }
            Command::LoadRules(path) => {
                let names = self.add_rules(&profile()?, &read_file(Path::new(&path))?)?;
                CommandOutput::Text(format!("registered {}", names.join(", ")))
            }
            Command::CreateRule(src) => {
                let names = self.add_rules(&profile()?, &src)?;
                CommandOutput::Text(format!("registered {}", names.join(", ")))
            }
            Command::DropRule(name) => {
                let rule = self.drop_rule(&profile()?, &name)?;
                CommandOutput::Text(format!("dropped {}", rule.name))
            }
            Command::SetProfile(name) => {
                lock(&*self.session(id)?).profile = name.clone();
                CommandOutput::Text(format!("profile {name}"))
            }
            Command::ShowRules => {
                let rules = self.rules(&profile()?);
                if rules.is_empty() {
                    CommandOutput::Text("no rules".into())
                } else {
                    CommandOutput::Text(rules.iter().map(|r| r.source.as_str()).collect::<Vec<_>>().join("\n"))
                }
            }
            Command::ShowHistory => {
                let h = self.history(id)?;
                CommandOutput::Text(if h.is_empty() { "no history".into() } else { h.join("\n") })
            }
            Command::ShowWeights => {
                let state = self.snapshot();
                let session = self.session(id)?;
                let s = lock(&session);
                let table = s.table.as_ref().ok_or(ServiceError::NoTable)?;
                let wa = state.rules.fire_rules(&s.profile, &table.context());
                CommandOutput::Text(render_weights(&wa))
            }
        })
    }
}

/// One line per weight: element, weight and the rule that set it.
pub fn render_weights(wa: &WeightAssignment) -> String {
    if wa.is_empty() {
        return "no weights".into();
    }
    let rows: Vec<(String, String, String)> =
        wa.iter().map(|(k, e)| (k.to_string(), format_number(e.weight), e.rule.clone())).collect();
    let w0 = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, w, r)| format!("{k:<w0$}  {w:>w1$}  {r}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn query_context(c: &Constellation, q: &WeightQuery) -> Result<OperationContext, ServiceError> {
    let bad = |m: String| ServiceError::InvalidQuery(m);
    let event: EventKind = q.event.parse().map_err(|_| bad(format!("unknown event `{}`", q.event)))?;
    let fact = c.fact(&q.fact).ok_or_else(|| AlgebraError::UnknownFact(q.fact.clone()))?;
    let axis = |dim: &str, hier: Option<&str>| -> Result<AxisContext, ServiceError> {
        let d = c.dimension(dim).ok_or_else(|| AlgebraError::UnknownDimension(dim.to_string()))?;
        let h = match hier {
            Some(h) => d.hierarchy(h).ok_or_else(|| AlgebraError::UnknownHierarchy {
                dimension: d.name.clone(),
                hierarchy: h.to_string(),
            })?,
            None => &d.hierarchies[0],
        };
        Ok(AxisContext::new(&d.name, &h.name, vec![h.coarsest().to_string()]))
    };
    let mut rows = axis(&q.rowdim, q.rowhier.as_deref())?;
    let cols = match &q.coldim {
        Some(d) => axis(d, q.colhier.as_deref())?,
        None => AxisContext::new("", "", Vec::new()),
    };
    let canonical_dim = |name: &str| -> Result<String, ServiceError> {
        Ok(c.dimension(name).ok_or_else(|| AlgebraError::UnknownDimension(name.to_string()))?.name.clone())
    };

    let mut ctx = OperationContext::displayed(&fact.name, fact.measures.clone(), rows.clone(), cols.clone());
    ctx.event = event;
    match event {
        EventKind::Displayed => {}
        EventKind::Rotated => {
            let from = q.from.as_deref().ok_or_else(|| bad("a ROTATED context needs `from`".into()))?;
            let to = q.to.as_deref().unwrap_or(&q.rowdim);
            ctx.rotation = Some(Rotation { from: canonical_dim(from)?, to: canonical_dim(to)? });
        }
        EventKind::DrilledDown | EventKind::RolledUp => {
            let param = q.param.as_deref().ok_or_else(|| bad("a forage context needs `param`".into()))?;
            let dim = canonical_dim(q.on.as_deref().unwrap_or(&q.rowdim))?;
            let target = if same_name(&dim, &rows.dimension) {
                &mut rows
            } else if same_name(&dim, &cols.dimension) {
                &mut ctx.cols
            } else {
                return Err(AlgebraError::DimNotInTable(dim).into());
            };
            let h = c.dimension(&dim).and_then(|d| d.hierarchy(&target.hierarchy)).expect("axis resolved above");
            let p = h.canonical(param).ok_or_else(|| bad(format!("`{param}` is not in hierarchy {}", h.name)))?;
            target.attributes = if event == EventKind::DrilledDown {
                h.canonical_order(&[h.coarsest(), p])
            } else {
                vec![p.to_string()]
            };
            ctx.forage = Some(Forage { dimension: dim, parameter: p.to_string(), hierarchy: h.name.clone() });
        }
    }
    ctx.rows = rows;
    Ok(ctx)
}
