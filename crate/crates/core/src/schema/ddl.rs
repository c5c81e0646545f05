//! Schema definition statements.
//!
//! ```text
//! DEFINE CONSTELLATION <name> ;
//! DEFINE DIMENSION <name> HIERARCHY <h> : <p0> [kind] -> <p1> [kind] ... [WEAK <attr> [kind] ON <param>]* [HIERARCHY ...]* ;
//! DEFINE FACT <name> ( <AGG>(<measure>) [, ...] ) CONNECT <dim> [, <dim>]* ;
//! ```
//!
//! `kind` is one of `TEXT` (default), `INTEGER` or `REAL`.

use std::collections::BTreeMap;

use super::{build_constellation, same_name, Attribute, Constellation, Dimension, Fact, Hierarchy, MeasureSpec, SchemaError, ValueKind};
use crate::lexer::{tokenize, Cursor, Token, TokenKind};

pub fn parse_ddl(src: &str) -> Result<Constellation, SchemaError> {
    let mut cur = Cursor::new(tokenize(src)?);
    let mut name = String::from("constellation");
    let mut dims = Vec::new();
    let mut facts = Vec::new();
    let mut star = BTreeMap::new();

    while !cur.at_eof() {
        expect_keyword(&mut cur, "DEFINE")?;
        if cur.eat_keyword("CONSTELLATION") {
            name = ident(&mut cur, "constellation name")?;
        } else if cur.eat_keyword("DIMENSION") {
            dims.push(dimension(&mut cur)?);
        } else if cur.eat_keyword("FACT") {
            let (fact, connected) = fact(&mut cur)?;
            if star.contains_key(&fact.name) {
                return Err(SchemaError::DuplicateName { scope: name.clone(), name: fact.name });
            }
            star.insert(fact.name.clone(), connected);
            facts.push(fact);
        } else {
            return Err(unexpected(cur.peek(), "CONSTELLATION, DIMENSION or FACT"));
        }
        expect_punct(&mut cur, ';')?;
    }
    build_constellation(name, dims, facts, &star)
}

fn dimension(cur: &mut Cursor) -> Result<Dimension, SchemaError> {
    let name = ident(cur, "dimension name")?;
    let mut attributes: Vec<Attribute> = Vec::new();
    let mut hierarchies = Vec::new();

    let mut declare = |attr: String, kind: Option<ValueKind>| -> Result<String, SchemaError> {
        match attributes.iter_mut().find(|a| same_name(&a.name, &attr)) {
            Some(existing) => {
                if let Some(k) = kind {
                    if existing.kind != k && existing.kind != ValueKind::Text {
                        return Err(SchemaError::ConflictingKind { dimension: name.clone(), attribute: attr });
                    }
                    existing.kind = k;
                }
                Ok(existing.name.clone())
            }
            None => {
                attributes.push(Attribute::new(attr.clone(), kind.unwrap_or_default()));
                Ok(attr)
            }
        }
    };

    expect_keyword(cur, "HIERARCHY")?;
    loop {
        let hname = ident(cur, "hierarchy name")?;
        expect_punct(cur, ':')?;
        let mut params = Vec::new();
        loop {
            let p = ident(cur, "parameter")?;
            let kind = value_kind(cur);
            params.push(declare(p, kind)?);
            if cur.peek().kind == TokenKind::Arrow {
                cur.advance();
            } else {
                break;
            }
        }
        let mut h = Hierarchy::new(hname, params);
        while cur.eat_keyword("WEAK") {
            let w = ident(cur, "weak attribute")?;
            let kind = value_kind(cur);
            let w = declare(w, kind)?;
            expect_keyword(cur, "ON")?;
            let owner_tok = cur.peek().clone();
            let owner = ident(cur, "parameter")?;
            let owner = h
                .params
                .iter()
                .find(|p| same_name(p, &owner))
                .cloned()
                .ok_or_else(|| unexpected(&owner_tok, "a parameter of this hierarchy"))?;
            h = h.with_weak(w, owner);
        }
        hierarchies.push(h);
        if !cur.eat_keyword("HIERARCHY") {
            break;
        }
    }
    Ok(Dimension::new(name, attributes, hierarchies))
}

fn fact(cur: &mut Cursor) -> Result<(Fact, Vec<String>), SchemaError> {
    let name = ident(cur, "fact name")?;
    expect_punct(cur, '(')?;
    let mut measures = Vec::new();
    loop {
        let agg_tok = cur.peek().clone();
        let agg = ident(cur, "aggregation function")?;
        let aggregation = agg.parse().map_err(|_| unexpected(&agg_tok, "SUM, AVG, MIN, MAX or COUNT"))?;
        expect_punct(cur, '(')?;
        let measure = ident(cur, "measure name")?;
        expect_punct(cur, ')')?;
        measures.push(MeasureSpec::new(aggregation, measure));
        if !cur.eat_punct(',') {
            break;
        }
    }
    expect_punct(cur, ')')?;
    expect_keyword(cur, "CONNECT")?;
    let mut dims = vec![ident(cur, "dimension name")?];
    while cur.eat_punct(',') {
        dims.push(ident(cur, "dimension name")?);
    }
    Ok((Fact::new(name, measures), dims))
}

fn value_kind(cur: &mut Cursor) -> Option<ValueKind> {
    let kind = cur.peek().ident().and_then(|s| s.parse().ok())?;
    cur.advance();
    Some(kind)
}

fn ident(cur: &mut Cursor, what: &str) -> Result<String, SchemaError> {
    let tok = cur.advance();
    tok.ident().map(str::to_string).ok_or_else(|| unexpected(&tok, what))
}

fn expect_keyword(cur: &mut Cursor, kw: &str) -> Result<(), SchemaError> {
    if cur.eat_keyword(kw) {
        Ok(())
    } else {
        Err(unexpected(cur.peek(), kw))
    }
}

fn expect_punct(cur: &mut Cursor, c: char) -> Result<(), SchemaError> {
    if cur.eat_punct(c) {
        Ok(())
    } else {
        Err(unexpected(cur.peek(), &format!("`{c}`")))
    }
}

fn unexpected(tok: &Token, expected: &str) -> SchemaError {
    SchemaError::Syntax { pos: tok.pos, expected: expected.to_string(), found: tok.kind.to_string() }
}
