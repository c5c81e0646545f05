//! Recursive-descent parser for personalization rules.

use super::ast::{Action, Condition, EventPattern, ForageFilter, Rule};
use super::RuleError;
use crate::lexer::{tokenize, Cursor, Token, TokenKind};
use crate::schema::{ElementPath, SchemaError};

/// Parses exactly one rule statement.
pub fn parse_rule(source: &str) -> Result<Rule, RuleError> {
    let mut rules = parse_rules(source)?;
    match rules.len() {
        1 => Ok(rules.remove(0)),
        0 => Err(RuleError::Syntax {
            pos: Default::default(),
            expected: "CREATE".into(),
            found: TokenKind::Eof.to_string(),
        }),
        _ => Err(RuleError::Syntax {
            pos: Default::default(),
            expected: "a single rule".into(),
            found: format!("{} rules", rules.len()),
        }),
    }
}

/// Parses any number of rule statements, as found in a `.rul` file.
pub fn parse_rules(source: &str) -> Result<Vec<Rule>, RuleError> {
    let mut p = Parser { cur: Cursor::new(tokenize(source)?) };
    let mut rules = Vec::new();
    while !p.cur.at_eof() {
        rules.push(p.rule()?);
    }
    Ok(rules)
}

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn rule(&mut self) -> Result<Rule, RuleError> {
        self.keyword("CREATE")?;
        self.keyword("RULE")?;
        let name = self.ident("rule name")?;
        self.keyword("ON")?;
        let target = self.element()?;
        self.keyword("WHEN")?;
        let mut events = vec![self.event()?];
        while self.cur.eat_keyword("OR") {
            events.push(self.event()?);
        }
        let condition = if self.cur.eat_keyword("IF") { Some(self.or_expr()?) } else { None };
        self.keyword("THEN")?;
        let mut actions = vec![self.action()?];
        while self.cur.eat_punct(',') {
            actions.push(self.action()?);
        }
        self.punct(';')?;
        Ok(Rule { name, target, events, condition, actions })
    }

    fn event(&mut self) -> Result<EventPattern, RuleError> {
        let tok = self.cur.peek().clone();
        let word = tok.ident().map(str::to_ascii_uppercase).unwrap_or_default();
        let pattern = match word.as_str() {
            "DISPLAYED" => {
                self.cur.advance();
                EventPattern::Displayed
            }
            "ROTATED" => {
                self.cur.advance();
                let from = self.optional("FROM", "dimension")?;
                let to = self.optional("TO", "dimension")?;
                EventPattern::Rotated { from, to }
            }
            "DRILLED" | "DRILLED_DOWN" | "ROLLED" | "ROLLED_UP" => {
                self.cur.advance();
                let drill = word.starts_with("DRILLED");
                if !word.contains('_') {
                    self.punct('-')?;
                    self.keyword(if drill { "DOWN" } else { "UP" })?;
                }
                let on = self.optional("ON", "dimension")?;
                let to = self.optional("TO", "parameter")?;
                let according_to = if self.cur.eat_keyword("ACCORDING") {
                    self.keyword("TO")?;
                    Some(self.ident("hierarchy")?)
                } else {
                    None
                };
                let filter = ForageFilter { on, to, according_to };
                if drill {
                    EventPattern::DrilledDown(filter)
                } else {
                    EventPattern::RolledUp(filter)
                }
            }
            _ => return Err(unexpected(&tok, "DISPLAYED, ROTATED, DRILLED-DOWN or ROLLED-UP")),
        };
        Ok(pattern)
    }

    fn or_expr(&mut self) -> Result<Condition, RuleError> {
        let mut terms = vec![self.and_expr()?];
        while self.cur.eat_keyword("OR") {
            terms.push(self.and_expr()?);
        }
        Ok(if terms.len() == 1 { terms.remove(0) } else { Condition::Or(terms) })
    }

    fn and_expr(&mut self) -> Result<Condition, RuleError> {
        let mut terms = vec![self.atom()?];
        while self.cur.eat_keyword("AND") {
            terms.push(self.atom()?);
        }
        Ok(if terms.len() == 1 { terms.remove(0) } else { Condition::And(terms) })
    }

    fn atom(&mut self) -> Result<Condition, RuleError> {
        if self.cur.eat_keyword("NOT") {
            return Ok(Condition::Not(Box::new(self.atom()?)));
        }
        if self.cur.eat_punct('(') {
            let inner = self.or_expr()?;
            self.punct(')')?;
            return Ok(inner);
        }
        self.keyword("CURRENT")?;
        self.punct('(')?;
        let e = self.element()?;
        self.punct(')')?;
        Ok(Condition::Current(e))
    }

    fn action(&mut self) -> Result<Action, RuleError> {
        self.keyword("PRIORITY")?;
        self.punct('(')?;
        let element = self.element()?;
        self.punct(',')?;
        let tok = self.cur.advance();
        let TokenKind::Number(text) = &tok.kind else {
            return Err(unexpected(&tok, "weight"));
        };
        let weight: f64 = text.parse().map_err(|_| unexpected(&tok, "weight"))?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(RuleError::WeightOutOfRange { pos: tok.pos, value: text.clone() });
        }
        self.punct(')')?;
        Ok(Action { element, weight })
    }

    fn element(&mut self) -> Result<ElementPath, RuleError> {
        ElementPath::parse(&mut self.cur).map_err(|e| match e {
            SchemaError::Syntax { pos, expected, found } => RuleError::Syntax { pos, expected, found },
            other => RuleError::Syntax { pos: Default::default(), expected: "element".into(), found: other.to_string() },
        })
    }

    fn optional(&mut self, kw: &str, what: &str) -> Result<Option<String>, RuleError> {
        if self.cur.eat_keyword(kw) {
            Ok(Some(self.ident(what)?))
        } else {
            Ok(None)
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, RuleError> {
        let tok = self.cur.advance();
        tok.ident().map(str::to_string).ok_or_else(|| unexpected(&tok, what))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), RuleError> {
        if self.cur.eat_keyword(kw) {
            Ok(())
        } else {
            Err(unexpected(self.cur.peek(), kw))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), RuleError> {
        if self.cur.eat_punct(c) {
            Ok(())
        } else {
            Err(unexpected(self.cur.peek(), &format!("`{c}`")))
        }
    }
}

fn unexpected(tok: &Token, expected: &str) -> RuleError {
    RuleError::Syntax { pos: tok.pos, expected: expected.to_string(), found: tok.kind.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(s: &str) -> ElementPath {
        ElementPath::new(s.split('.'))
    }

    #[test]
    fn bracketed_elements_and_compound_conditions() {
        let r = parse_rule(
            "create rule r on Temps when rolled-up on Temps to Année according to HTPS \
             or drilled_down \
             if current(Ventes) and not (current(Achats) or current(Temps[HTPS].MoisN)) \
             then priority(Temps[HTPS].Année, .5e0);",
        );
        // `.5e0` is not a number literal in this language.
        assert_eq!(r.unwrap_err().code(), "lex-error");

        let r = parse_rule(
            "create rule r on Temps when rolled-up on Temps to Année according to HTPS \
             or drilled_down \
             if current(Ventes) and not (current(Achats) or current(Temps[HTPS].MoisN)) \
             then priority(Temps[HTPS].Année, 0.25);",
        )
        .unwrap();
        assert_eq!(
            r.events,
            vec![
                EventPattern::RolledUp(ForageFilter {
                    on: Some("Temps".into()),
                    to: Some("Année".into()),
                    according_to: Some("HTPS".into())
                }),
                EventPattern::DrilledDown(ForageFilter::default()),
            ]
        );
        assert_eq!(
            r.condition,
            Some(Condition::And(vec![
                Condition::Current(path("Ventes")),
                Condition::Not(Box::new(Condition::Or(vec![
                    Condition::Current(path("Achats")),
                    Condition::Current(ElementPath::qualified("Temps", "HTPS", "MoisN")),
                ]))),
            ]))
        );
        assert_eq!(r.actions[0].element, ElementPath::qualified("Temps", "HTPS", "Année"));
        assert_eq!(parse_rule(&r.to_string()).unwrap(), r);
    }

    #[test]
    fn malformed_inputs_are_positioned() {
        let err = parse_rule("CREATE RULE r ON Temps\nWHEN displayed\n  priority(Temps.HTPS.Année, 1);").unwrap_err();
        assert_eq!(err.code(), "syntax-error");
        assert_eq!((err.position().unwrap().line, err.position().unwrap().column), (3, 3));
        assert!(err.to_string().contains("THEN"), "{err}");

        let err = parse_rule("CREATE RULE r ON Temps WHEN displayed THEN priority(Temps.HTPS.Année, 1.5);").unwrap_err();
        assert_eq!(err.code(), "weight-out-of-range");
        assert_eq!(err.position().unwrap().column, 71);

        let err = parse_rule("CREATE RULE r ON Temps WHEN displayed THEN priority(Temps.HTPS.Année, -0.1);").unwrap_err();
        assert_eq!(err.code(), "weight-out-of-range");

        let err = parse_rule("CREATE RULE r ON Temps WHEN clicked THEN priority(Temps, 1);").unwrap_err();
        assert_eq!(err.code(), "syntax-error");
        assert_eq!(err.position().unwrap().column, 29);
        assert!(err.to_string().contains("`clicked`"));

        let err = parse_rule("CREATE RULE r ON Temps WHEN displayed THEN priority(Temps, 1)").unwrap_err();
        assert!(err.to_string().contains("end of input"));

        let err = parse_rule("CREATE RULE r ON Temps WHEN displayed THEN priority(Temps, 1); #").unwrap_err();
        assert_eq!(err.code(), "lex-error");
    }

    #[test]
    fn rule_files_hold_many_statements() {
        let src = "-- two rules\n\
                   CREATE RULE a ON Temps WHEN displayed THEN priority(Temps, 1);\n\
                   CREATE RULE b ON Ventes WHEN rotated FROM Produits TO Temps THEN priority(Ventes.Montant, 0);";
        let rules = parse_rules(src).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[1].events[0], EventPattern::Rotated { from: Some("Produits".into()), to: Some("Temps".into()) });
        assert!(parse_rule(src).is_err());
        assert!(parse_rules("").unwrap().is_empty());
    }
}
