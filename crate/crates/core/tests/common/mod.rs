//! Fixtures, strategies and property checks shared by the property suite and
//! the acceptance report.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pmdb_core::algebra::{MultidimTable, Olap};
use pmdb_core::rules::{
    Action, AxisContext, Condition, EventKind, EventPattern, ForageFilter, Forage, OperationContext, Rotation, Rule,
    RuleEngine,
};
use pmdb_core::schema::{parse_ddl, Aggregation, Constellation, ElementPath, ElementRef, MeasureSpec};
use pmdb_core::store::{Comparator, DataStore, Literal, Predicate, Restriction};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn rule_file(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("rules").join(name)).unwrap()
}

pub fn fixture_store() -> DataStore {
    let ddl = std::fs::read_to_string(fixtures().join("schema.ddl")).unwrap();
    let mut store = DataStore::new(Arc::new(parse_ddl(&ddl).unwrap()));
    store.load_dir(&fixtures().join("data")).unwrap();
    store
}

pub fn sum() -> Vec<MeasureSpec> {
    vec![MeasureSpec::sum("Montant")]
}

/// The fixture hierarchies: dimension, hierarchy, parameters finest first,
/// weak attributes.
pub const HIERARCHIES: [(&str, &str, &[&str], &[&str]); 3] = [
    ("TEMPS", "HTPS", &["MoisN", "Trimestre", "Année"], &["LibelléM"]),
    ("CLIENTS", "HGEO", &["CodeCli", "Ville", "DeptN", "Région"], &[]),
    ("PRODUITS", "HPRO", &["CodeProduit", "Classe"], &[]),
];

pub fn attributes_of(dim: usize) -> Vec<&'static str> {
    let (_, _, params, weak) = HIERARCHIES[dim];
    params.iter().chain(weak.iter()).copied().collect()
}

/// Ordered pairs of distinct fixture dimensions, all connected to VENTES.
pub fn axis_pair() -> impl Strategy<Value = (usize, usize)> {
    (0..3usize, 1..3usize).prop_map(|(a, k)| (a, (a + k) % 3))
}

pub type Cells = BTreeMap<(Vec<String>, Vec<String>, String), f64>;

pub fn cells(t: &MultidimTable) -> Cells {
    t.grid.iter().map(|(r, c, m, v)| ((r.to_vec(), c.to_vec(), m.to_string()), v)).collect()
}

pub fn display(olap: &Olap, profile: &str, rows: usize, cols: usize, threshold: Option<f64>) -> MultidimTable {
    let (dl, hl, _, _) = HIERARCHIES[rows];
    let (dc, hc, _, _) = HIERARCHIES[cols];
    olap.display(profile, "VENTES", &sum(), (dl, hl), (dc, hc), threshold).unwrap()
}

/// One unconditional DISPLAYED rule per fixture dimension.
pub fn weight_rules(weights: &[Vec<f64>; 3]) -> String {
    let mut src = String::new();
    for (i, ws) in weights.iter().enumerate() {
        let (d, h, _, _) = HIERARCHIES[i];
        let actions: Vec<String> =
            attributes_of(i).iter().zip(ws).map(|(a, w)| format!("priority({d}.{h}.{a}, {w})")).collect();
        src.push_str(&format!("CREATE RULE w_{d} ON {d} WHEN displayed THEN {};\n", actions.join(", ")));
    }
    src
}

pub fn engine(store: &DataStore, profile: &str, src: &str) -> RuleEngine {
    let mut e = RuleEngine::new();
    if !src.trim().is_empty() {
        e.register_source(profile, store.schema(), src).unwrap();
    }
    e
}

fn weight_vectors() -> impl Strategy<Value = [Vec<f64>; 3]> {
    let v = |i: usize| proptest::collection::vec(0.0..=1.0f64, attributes_of(i).len());
    (v(0), v(1), v(2)).prop_map(|(a, b, c)| [a, b, c])
}

// ---------------------------------------------------------------------------
// Threshold monotonicity

#[derive(Debug, Clone)]
pub struct MonotonicityCase {
    pub weights: [Vec<f64>; 3],
    pub axes: (usize, usize),
    pub lo: f64,
    pub hi: f64,
}

pub fn monotonicity_case() -> impl Strategy<Value = MonotonicityCase> {
    (weight_vectors(), axis_pair(), 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(weights, axes, a, b)| MonotonicityCase {
        weights,
        axes,
        lo: a.min(b),
        hi: a.max(b),
    })
}

/// Raising the threshold never brings in an attribute on the strength of its
/// weight; only the classic fallback may appear.
pub fn check_monotonicity(store: &DataStore, case: &MonotonicityCase) -> Result<(), TestCaseError> {
    let rules = engine(store, "p", &weight_rules(&case.weights));
    let olap = Olap::new(store, &rules);
    let lo = display(&olap, "p", case.axes.0, case.axes.1, Some(case.lo));
    let hi = display(&olap, "p", case.axes.0, case.axes.1, Some(case.hi));
    for (dim, a_lo, a_hi) in [(case.axes.0, &lo.rows, &hi.rows), (case.axes.1, &lo.cols, &hi.cols)] {
        let attrs = attributes_of(dim);
        let weight = |a: &str| case.weights[dim][attrs.iter().position(|x| *x == a).unwrap()];
        for a in &a_hi.attributes {
            if weight(a) >= case.hi {
                prop_assert!(a_lo.attributes.contains(a), "{a} shown at {} but not at {}", case.hi, case.lo);
            }
        }
        prop_assert!(a_hi.attributes.iter().filter(|a| weight(a) >= case.hi).count() <= a_lo.attributes.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Aggregation against a brute-force oracle on random small cubes

/// A random two-dimension cube. Dimension `d` has `levels[d]` parameters;
/// member `i` of level 0 rolls up through `parents[d]`.
#[derive(Debug, Clone)]
pub struct Cube {
    pub levels: [usize; 2],
    pub members: [usize; 2],
    /// parents[d][l][j]: the level l+1 member of level l member j.
    pub parents: [Vec<Vec<usize>>; 2],
    pub facts: Vec<(usize, usize, i32)>,
    pub shown: [Vec<usize>; 2],
    pub aggregation: Aggregation,
}

const DIMS: [&str; 2] = ["D1", "D2"];

impl Cube {
    fn level_name(d: usize, l: usize) -> String {
        format!("{}L{l}", ["A", "B"][d])
    }

    /// Value of member `key` of dimension `d` at level `l`.
    pub fn value(&self, d: usize, key: usize, l: usize) -> String {
        let mut j = key;
        for step in 0..l {
            j = self.parents[d][step][j];
        }
        format!("{}{l}_{j}", ["a", "b"][d])
    }

    pub fn schema(&self) -> Constellation {
        let mut ddl = String::new();
        for (d, name) in DIMS.iter().enumerate() {
            let params: Vec<String> = (0..self.levels[d]).map(|l| Self::level_name(d, l)).collect();
            ddl.push_str(&format!("DEFINE DIMENSION {name} HIERARCHY H{} : {};\n", d + 1, params.join(" -> ")));
        }
        ddl.push_str("DEFINE FACT F (SUM(m)) CONNECT D1, D2;\n");
        parse_ddl(&ddl).unwrap()
    }

    pub fn store(&self) -> DataStore {
        let mut store = DataStore::new(Arc::new(self.schema()));
        for (d, name) in DIMS.iter().enumerate() {
            let header: Vec<String> = (0..self.levels[d]).map(|l| Self::level_name(d, l)).collect();
            let mut csv = header.join(",") + "\n";
            for key in 0..self.members[d] {
                let row: Vec<String> = (0..self.levels[d]).map(|l| self.value(d, key, l)).collect();
                csv.push_str(&(row.join(",") + "\n"));
            }
            store.load_dimension(name, csv.as_bytes()).unwrap();
        }
        let mut csv = String::from("m,D1,D2\n");
        for (k1, k2, v) in &self.facts {
            csv.push_str(&format!("{v},{},{}\n", self.value(0, *k1, 0), self.value(1, *k2, 0)));
        }
        store.load_fact("F", csv.as_bytes()).unwrap();
        store
    }

    /// Displayed attribute references of axis `d`, coarsest first.
    pub fn refs(&self, c: &Constellation, d: usize, levels: &[usize]) -> Vec<ElementRef> {
        let mut ls = levels.to_vec();
        ls.sort_unstable_by(|a, b| b.cmp(a));
        ls.iter()
            .map(|&l| c.resolve_element(&format!("{}.H{}.{}", DIMS[d], d + 1, Self::level_name(d, l))).unwrap())
            .collect()
    }

    /// Brute force: group the fact rows by header tuples and fold.
    pub fn oracle(&self, shown: &[Vec<usize>; 2], agg: Aggregation) -> BTreeMap<(Vec<String>, Vec<String>), f64> {
        let tuple = |d: usize, key: usize| -> Vec<String> {
            let mut ls = shown[d].clone();
            ls.sort_unstable_by(|a, b| b.cmp(a));
            ls.iter().map(|&l| self.value(d, key, l)).collect()
        };
        let mut groups: BTreeMap<(Vec<String>, Vec<String>), Vec<f64>> = BTreeMap::new();
        for &(k1, k2, v) in &self.facts {
            groups.entry((tuple(0, k1), tuple(1, k2))).or_default().push(f64::from(v));
        }
        groups
            .into_iter()
            .map(|(k, vs)| {
                let v = match agg {
                    Aggregation::Sum => vs.iter().sum(),
                    Aggregation::Count => vs.len() as f64,
                    Aggregation::Avg => vs.iter().sum::<f64>() / vs.len() as f64,
                    Aggregation::Min => vs.iter().copied().fold(f64::INFINITY, f64::min),
                    Aggregation::Max => vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                (k, v)
            })
            .collect()
    }
}

fn dimension_shape() -> impl Strategy<Value = (usize, usize, Vec<Vec<usize>>)> {
    (1..=3usize, 1..=8usize).prop_flat_map(|(levels, members)| {
        // Members above level 0 number at most 3; each rolls up into one of 3.
        let steps = proptest::collection::vec(proptest::collection::vec(0..3usize, members.max(3)), levels - 1);
        (Just(levels), Just(members), steps)
    })
}

fn subset(levels: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(any::<bool>(), levels)
        .prop_map(|bits| bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect())
}

pub fn cube() -> impl Strategy<Value = Cube> {
    (dimension_shape(), dimension_shape())
        .prop_flat_map(|(a, b)| {
            let facts = proptest::collection::vec((0..a.1, 0..b.1, -1000..1000i32), 0..=200);
            let agg = proptest::sample::select(Aggregation::ALL.to_vec());
            let (la, lb) = (a.0, b.0);
            (Just((a, b)), facts, subset(la), subset(lb), agg)
        })
        .prop_map(|((a, b), facts, s1, s2, aggregation)| Cube {
            levels: [a.0, b.0],
            members: [a.1, b.1],
            parents: [a.2, b.2],
            facts,
            shown: [s1, s2],
            aggregation,
        })
}

pub fn check_aggregate_oracle(cube: &Cube) -> Result<(), TestCaseError> {
    let store = cube.store();
    let c = store.schema().clone();
    let spec = MeasureSpec::new(cube.aggregation, "m");
    let grid = store
        .aggregate("F", &[spec], &cube.refs(&c, 0, &cube.shown[0]), &cube.refs(&c, 1, &cube.shown[1]), &Restriction::none())
        .unwrap();
    let got: BTreeMap<_, _> = grid.iter().map(|(r, c, _, v)| ((r.to_vec(), c.to_vec()), v)).collect();
    let want = cube.oracle(&cube.shown, cube.aggregation);
    prop_assert_eq!(got.len(), want.len());
    for (k, v) in &want {
        let g = got.get(k).copied();
        prop_assert!(g.is_some_and(|g| (g - v).abs() < 1e-9), "{:?}: got {:?}, want {}", k, g, v);
    }
    Ok(())
}

/// Summing the finer grid over its extra level gives the coarser grid.
pub fn check_additivity(cube: &Cube) -> Result<(), TestCaseError> {
    let store = cube.store();
    let c = store.schema().clone();
    let spec = [MeasureSpec::sum("m")];
    let coarse = &cube.shown[0];
    let Some(extra) = (0..cube.levels[0]).find(|l| !coarse.contains(l)) else { return Ok(()) };
    let mut fine = coarse.clone();
    fine.push(extra);
    let cols = cube.refs(&c, 1, &cube.shown[1]);
    let g_coarse = store.aggregate("F", &spec, &cube.refs(&c, 0, coarse), &cols, &Restriction::none()).unwrap();
    let g_fine = store.aggregate("F", &spec, &cube.refs(&c, 0, &fine), &cols, &Restriction::none()).unwrap();
    // Position of the extra level inside the fine header tuple.
    let mut order = fine.clone();
    order.sort_unstable_by(|a, b| b.cmp(a));
    let at = order.iter().position(|l| *l == extra).unwrap();
    let mut folded: BTreeMap<(Vec<String>, Vec<String>), f64> = BTreeMap::new();
    for (r, col, _, v) in g_fine.iter() {
        let mut r = r.to_vec();
        r.remove(at);
        *folded.entry((r, col.to_vec())).or_default() += v;
    }
    let direct: BTreeMap<_, _> = g_coarse.iter().map(|(r, c, _, v)| ((r.to_vec(), c.to_vec()), v)).collect();
    prop_assert_eq!(folded, direct);
    Ok(())
}

// ---------------------------------------------------------------------------
// Operator algebra on the fixture

#[derive(Debug, Clone)]
pub struct DrillCase {
    pub axes: (usize, usize),
    pub on_rows: bool,
    pub target: usize,
}

pub fn drill_case() -> impl Strategy<Value = DrillCase> {
    (axis_pair(), any::<bool>(), any::<prop::sample::Index>()).prop_map(|(axes, on_rows, idx)| {
        let dim = if on_rows { axes.0 } else { axes.1 };
        let finer = HIERARCHIES[dim].2.len() - 1;
        DrillCase { axes, on_rows, target: idx.index(finer) }
    })
}

/// ROLLUP back to the starting level undoes a classic DRILLDOWN.
pub fn check_drill_roll(store: &DataStore, case: &DrillCase) -> Result<(), TestCaseError> {
    let rules = RuleEngine::new();
    let olap = Olap::new(store, &rules);
    let t = display(&olap, "p", case.axes.0, case.axes.1, None);
    let dim = if case.on_rows { case.axes.0 } else { case.axes.1 };
    let (d, _, params, _) = HIERARCHIES[dim];
    let down = olap.drilldown(&t, "p", d, params[case.target], None).unwrap();
    prop_assert_eq!(down.axis(d).unwrap().attributes.len(), 2);
    let up = olap.rollup(&down, "p", d, params[params.len() - 1], None).unwrap();
    prop_assert_eq!(&up, &t);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RotateCase {
    pub axes: (usize, usize),
    pub on_rows: bool,
}

pub fn rotate_case() -> impl Strategy<Value = RotateCase> {
    (axis_pair(), any::<bool>()).prop_map(|(axes, on_rows)| RotateCase { axes, on_rows })
}

/// Rotating a dimension out and back in restores a classic table.
pub fn check_rotate_involution(store: &DataStore, case: &RotateCase) -> Result<(), TestCaseError> {
    let rules = RuleEngine::new();
    let olap = Olap::new(store, &rules);
    let t = display(&olap, "p", case.axes.0, case.axes.1, None);
    let old = if case.on_rows { case.axes.0 } else { case.axes.1 };
    let new = 3 - case.axes.0 - case.axes.1;
    let (d_old, h_old, _, _) = HIERARCHIES[old];
    let (d_new, h_new, _, _) = HIERARCHIES[new];
    let r = olap.rotate(&t, "p", d_old, d_new, h_new, None).unwrap();
    prop_assert!(r.axis(d_old).is_none());
    let back = olap.rotate(&r, "p", d_new, d_old, h_old, None).unwrap();
    prop_assert_eq!(&back, &t);
    Ok(())
}

// ---------------------------------------------------------------------------
// Random rule sets

/// Source text of one random rule over the fixture schema.
fn random_rule(unconditional: bool) -> impl Strategy<Value = String> {
    let events = proptest::collection::vec(
        prop_oneof![
            Just("displayed".to_string()),
            Just("rotated".to_string()),
            (0..3usize).prop_map(|d| format!("rotated TO {}", HIERARCHIES[d].0)),
            (0..3usize).prop_map(|d| format!("rotated FROM {}", HIERARCHIES[d].0)),
            Just("drilled-down".to_string()),
            (0..3usize).prop_map(|d| format!("drilled-down ON {}", HIERARCHIES[d].0)),
            Just("rolled-up".to_string()),
            Just("rolled-up TO Trimestre".to_string()),
        ],
        1..3,
    );
    let condition = prop_oneof![
        Just(None),
        Just(Some("current(Ventes)".to_string())),
        Just(Some("NOT current(Achats)".to_string())),
        Just(Some("current(Temps.HTPS.Année) OR current(Clients)".to_string())),
        Just(Some("current(HGEO) AND NOT current(Produits)".to_string())),
    ];
    let action = prop_oneof![
        4 => (0..3usize, any::<prop::sample::Index>(), 0.0..=1.0f64).prop_map(|(d, i, w)| {
            let (dim, h, _, _) = HIERARCHIES[d];
            let attrs = attributes_of(d);
            format!("priority({dim}.{h}.{}, {w})", attrs[i.index(attrs.len())])
        }),
        1 => (0..3usize, 0.0..=1.0f64).prop_map(|(d, w)| format!("priority({}, {w})", HIERARCHIES[d].0)),
        1 => (0.0..=1.0f64).prop_map(|w| format!("priority(Ventes[COUNT].Montant, {w})")),
    ];
    let actions = proptest::collection::vec(action, 1..5);
    (0..3usize, events, condition, actions).prop_map(move |(target, events, condition, actions)| {
        let cond = match condition {
            Some(c) if !unconditional => format!(" IF {c}"),
            _ => String::new(),
        };
        format!(
            "CREATE RULE NAME ON {} WHEN {}{cond} THEN {};",
            HIERARCHIES[target].0,
            events.join(" OR "),
            actions.join(", ")
        )
    })
}

pub fn rule_set(unconditional: bool) -> impl Strategy<Value = String> {
    proptest::collection::vec(random_rule(unconditional), 0..6).prop_map(|rules| {
        rules.iter().enumerate().map(|(i, r)| r.replace("NAME", &format!("r{i}")) + "\n").collect()
    })
}

#[derive(Debug, Clone)]
pub struct IndependenceCase {
    pub rules: String,
    pub axes: (usize, usize),
    pub drill: usize,
}

pub fn independence_case() -> impl Strategy<Value = IndependenceCase> {
    (rule_set(false), axis_pair(), any::<prop::sample::Index>()).prop_map(|(rules, axes, i)| IndependenceCase {
        rules,
        axes,
        drill: i.index(HIERARCHIES[axes.0].2.len() - 1),
    })
}

/// Without thresholds, every operator ignores the profile's rules.
pub fn check_rule_independence(store: &DataStore, case: &IndependenceCase) -> Result<(), TestCaseError> {
    let rules = engine(store, "p", &case.rules);
    let none = RuleEngine::new();
    let run = |olap: Olap| -> Vec<MultidimTable> {
        let t1 = display(&olap, "p", case.axes.0, case.axes.1, None);
        let (d, _, params, _) = HIERARCHIES[case.axes.0];
        let t2 = olap.drilldown(&t1, "p", d, params[case.drill], None).unwrap();
        let t3 = olap.rollup(&t2, "p", d, "All", None).unwrap();
        let (old, _, _, _) = HIERARCHIES[case.axes.1];
        let new = 3 - case.axes.0 - case.axes.1;
        let t4 = olap.rotate(&t3, "p", old, HIERARCHIES[new].0, HIERARCHIES[new].1, None).unwrap();
        vec![t1, t2, t3, t4]
    };
    prop_assert_eq!(run(Olap::new(store, &rules)), run(Olap::new(store, &none)));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HeadersCase {
    pub weights: [Vec<f64>; 3],
    /// Fractions used to move each weight within its side of the threshold.
    pub moves: [Vec<f64>; 3],
    pub threshold: f64,
    pub axes: (usize, usize),
}

pub fn headers_case() -> impl Strategy<Value = HeadersCase> {
    let fractions = |i: usize| proptest::collection::vec(0.0..1.0f64, attributes_of(i).len());
    (weight_vectors(), (fractions(0), fractions(1), fractions(2)), 0.05..=1.0f64, axis_pair()).prop_map(
        |(weights, (a, b, c), threshold, axes)| HeadersCase { weights, moves: [a, b, c], threshold, axes },
    )
}

/// Weights only pick header lists: rule sets that qualify the same
/// attributes produce identical tables, equal to a plain recomputation.
pub fn check_headers_only(store: &DataStore, case: &HeadersCase) -> Result<(), TestCaseError> {
    let t = case.threshold;
    let mut moved = case.weights.clone();
    for (ws, fs) in moved.iter_mut().zip(&case.moves) {
        for (w, f) in ws.iter_mut().zip(fs) {
            *w = if *w >= t { t + f * (1.0 - t) } else { f * t };
        }
    }
    let a = engine(store, "p", &weight_rules(&case.weights));
    let b = engine(store, "p", &weight_rules(&moved));
    let ta = display(&Olap::new(store, &a), "p", case.axes.0, case.axes.1, Some(t));
    let tb = display(&Olap::new(store, &b), "p", case.axes.0, case.axes.1, Some(t));
    prop_assert_eq!(&ta.rows, &tb.rows);
    prop_assert_eq!(&ta.cols, &tb.cols);
    prop_assert_eq!(cells(&ta), cells(&tb));
    let fresh =
        MultidimTable::compute(store, ta.subject.clone(), ta.rows.clone(), ta.cols.clone(), Restriction::none()).unwrap();
    prop_assert_eq!(cells(&fresh), cells(&ta));
    Ok(())
}

// ---------------------------------------------------------------------------
// Registry faithfulness

pub fn context() -> impl Strategy<Value = OperationContext> {
    let axis = |d: usize, depth: usize| {
        let (dim, h, params, _) = HIERARCHIES[d];
        let attrs: Vec<String> = params.iter().rev().take(depth.min(params.len())).map(|s| s.to_string()).collect();
        AxisContext::new(dim, h, attrs)
    };
    (0..4usize, prop::bool::ANY, axis_pair(), 0..4usize, 0..4usize, any::<prop::sample::Index>()).prop_map(
        move |(event, ventes, (r, c), dr, dc, idx)| {
            let fact = if ventes { "VENTES" } else { "ACHATS" };
            let mut ctx = OperationContext::displayed(fact, sum(), axis(r, dr), axis(c, dc));
            ctx.event = EventKind::ALL[event];
            match ctx.event {
                EventKind::Rotated => {
                    let from = 3 - r - c;
                    ctx.rotation = Some(Rotation { from: HIERARCHIES[from].0.into(), to: HIERARCHIES[c].0.into() });
                }
                EventKind::DrilledDown | EventKind::RolledUp => {
                    let (dim, h, params, _) = HIERARCHIES[r];
                    let p = params[idx.index(params.len())];
                    ctx.forage = Some(Forage { dimension: dim.into(), parameter: p.into(), hierarchy: h.into() });
                }
                EventKind::Displayed => {}
            }
            ctx
        },
    )
}

/// For unconditional rule sets the materialized registry answers exactly as
/// firing the rules does.
pub fn check_registry(store: &DataStore, rules: &str, ctx: &OperationContext) -> Result<(), TestCaseError> {
    let e = engine(store, "p", rules);
    prop_assert_eq!(e.fire_rules("p", ctx), e.registry_lookup("p", ctx));
    Ok(())
}

// ---------------------------------------------------------------------------
// Restriction monotonicity

pub fn predicate() -> impl Strategy<Value = (usize, usize, Comparator, usize)> {
    let cmp = proptest::sample::select(vec![
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
    ]);
    (0..3usize, any::<prop::sample::Index>(), cmp, 0..40usize).prop_map(|(d, a, cmp, v)| {
        (d, a.index(attributes_of(d).len()), cmp, v)
    })
}

/// Adding a predicate only removes cells and never raises a COUNT or a SUM
/// of non-negative amounts.
pub fn check_restriction(
    store: &DataStore,
    preds: &[(usize, usize, Comparator, usize)],
    axes: (usize, usize),
) -> Result<(), TestCaseError> {
    let c = store.schema();
    let specs = [MeasureSpec::sum("Montant"), MeasureSpec::new(Aggregation::Count, "Montant")];
    let axis_refs = |d: usize| {
        let (dim, h, params, _) = HIERARCHIES[d];
        vec![c.resolve_element(&format!("{dim}.{h}.{}", params[params.len() - 1])).unwrap()]
    };
    let mut restriction = Restriction::none();
    let mut previous = store.aggregate("VENTES", &specs, &axis_refs(axes.0), &axis_refs(axes.1), &restriction).unwrap();
    for &(d, a, cmp, v) in preds {
        let (dim, h, _, _) = HIERARCHIES[d];
        let attr = attributes_of(d)[a];
        let rows = store.dimension_rows(dim).unwrap();
        let col = rows.column(attr).unwrap();
        let value = rows.value(v % rows.len(), col).to_string();
        let element = c.resolve_element(&format!("{dim}.{h}.{attr}")).unwrap();
        restriction = restriction.and(Predicate::new(element, cmp, Literal::Text(value)));
        let next = store.aggregate("VENTES", &specs, &axis_refs(axes.0), &axis_refs(axes.1), &restriction).unwrap();
        for (r, col, m, v) in next.iter() {
            let before = previous.get(r, col, m);
            prop_assert!(before.is_some_and(|b| v <= b), "{r:?} {col:?} {m}: {v} after, {before:?} before");
        }
        previous = next;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Rule ASTs

const KEYWORDS: &[&str] = &[
    "create", "rule", "on", "when", "if", "then", "priority", "current", "and", "or", "not", "displayed", "rotated",
    "drilled", "down", "rolled", "up", "from", "to", "according", "drilled_down", "rolled_up",
];

pub fn ident() -> impl Strategy<Value = String> {
    prop_oneof![
        8 => "[A-Za-z][A-Za-z0-9_]{0,8}".prop_filter("keyword", |s| !KEYWORDS.contains(&s.to_lowercase().as_str())),
        1 => proptest::sample::select(vec!["Année".to_string(), "LibelléM".to_string(), "Région".to_string()]),
    ]
}

fn path() -> impl Strategy<Value = ElementPath> {
    prop_oneof![
        4 => proptest::collection::vec(ident(), 1..=3).prop_map(ElementPath::new),
        1 => (ident(), proptest::sample::select(vec!["SUM", "AVG", "MIN", "MAX", "COUNT"]), ident())
            .prop_map(|(f, a, m)| ElementPath::qualified(f, a, m)),
    ]
}

fn event() -> impl Strategy<Value = EventPattern> {
    let filter = || {
        (proptest::option::of(ident()), proptest::option::of(ident()), proptest::option::of(ident()))
            .prop_map(|(on, to, according_to)| ForageFilter { on, to, according_to })
    };
    prop_oneof![
        Just(EventPattern::Displayed),
        (proptest::option::of(ident()), proptest::option::of(ident()))
            .prop_map(|(from, to)| EventPattern::Rotated { from, to }),
        filter().prop_map(EventPattern::DrilledDown),
        filter().prop_map(EventPattern::RolledUp),
    ]
}

fn condition() -> impl Strategy<Value = Condition> {
    let leaf = path().prop_map(Condition::Current);
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|c| Condition::Not(Box::new(c))),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Condition::And),
            proptest::collection::vec(inner, 2..4).prop_map(Condition::Or),
        ]
    })
}

pub fn rule_ast() -> impl Strategy<Value = Rule> {
    let action = (path(), 0.0..=1.0f64).prop_map(|(element, weight)| Action { element, weight });
    (
        ident(),
        proptest::collection::vec(ident(), 1..=2).prop_map(ElementPath::new),
        proptest::collection::vec(event(), 1..4),
        proptest::option::of(condition()),
        proptest::collection::vec(action, 1..5),
    )
        .prop_map(|(name, target, events, condition, actions)| Rule { name, target, events, condition, actions })
}

pub fn check_round_trip(rule: &Rule) -> Result<(), TestCaseError> {
    let text = rule.to_string();
    let back = pmdb_core::rules::parse_rule(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&back, rule, "{}", text);
    prop_assert_eq!(back.to_string(), text);
    Ok(())
}
