use std::fmt;

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::lexer::{tokenize, Cursor, Position, Token, TokenKind};
use crate::schema::MeasureSpec;

/// A table operation, as sent over HTTP or typed at the REPL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Operation {
    Display {
        fact: String,
        /// `AGG(measure)` texts.
        measures: Vec<String>,
        row_dim: String,
        row_hier: String,
        col_dim: String,
        col_hier: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    Rotate {
        d_old: String,
        d_new: String,
        hier: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    Drilldown {
        dim: String,
        attribute: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    Rollup {
        dim: String,
        attribute: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
}

impl Operation {
    pub fn threshold(&self) -> Option<f64> {
        match self {
            Operation::Display { threshold, .. }
            | Operation::Rotate { threshold, .. }
            | Operation::Drilldown { threshold, .. }
            | Operation::Rollup { threshold, .. } => *threshold,
        }
    }

    pub(crate) fn measure_specs(measures: &[String]) -> Result<Vec<MeasureSpec>, ServiceError> {
        measures.iter().map(|m| m.parse().map_err(ServiceError::InvalidMeasure)).collect()
    }
}

/// The command-language spelling, used for session history.
impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Display { fact, measures, row_dim, row_hier, col_dim, col_hier, .. } => write!(
                f,
                "DISPLAY {fact} ({}) ROWS {row_dim}.{row_hier} COLS {col_dim}.{col_hier}",
                measures.join(", ")
            )?,
            Operation::Rotate { d_old, d_new, hier, .. } => write!(f, "ROTATE {d_old} TO {d_new}.{hier}")?,
            Operation::Drilldown { dim, attribute, .. } => write!(f, "DRILLDOWN {dim} TO {attribute}")?,
            Operation::Rollup { dim, attribute, .. } => write!(f, "ROLLUP {dim} TO {attribute}")?,
        }
        if let Some(t) = self.threshold() {
            write!(f, " THRESHOLD {t}")?;
        }
        f.write_str(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Op(Operation),
    LoadSchema(String),
    LoadData(String),
    LoadRules(String),
    SetProfile(String),
    ShowWeights,
    ShowRules,
    ShowTable,
    ShowHistory,
    /// Full `CREATE RULE ...;` text, handed to the rule parser.
    CreateRule(String),
    DropRule(String),
}

/// Parses one command terminated by `;`.
pub fn parse_command(line: &str) -> Result<Command, ServiceError> {
    let lead = leading_trivia(line);
    let trimmed = &line[lead..];
    let first_word: String = trimmed.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    if first_word.eq_ignore_ascii_case("LOAD") {
        return parse_load(line, lead + first_word.len());
    }
    if first_word.eq_ignore_ascii_case("CREATE") {
        return Ok(Command::CreateRule(line.trim().to_string()));
    }

    let tokens = tokenize(line).map_err(|e| ServiceError::CommandSyntax {
        pos: e.pos,
        expected: "command".into(),
        found: format!("`{}`", e.lexeme),
    })?;
    let mut p = Parser { cur: Cursor::new(tokens) };
    let cmd = p.command()?;
    p.punct(';')?;
    if !p.cur.at_eof() {
        return Err(unexpected(p.cur.peek(), "end of command"));
    }
    Ok(cmd)
}

/// Byte length of the whitespace and `--` comments before the first word.
fn leading_trivia(line: &str) -> usize {
    let mut rest = line;
    loop {
        let t = rest.trim_start();
        match t.strip_prefix("--") {
            Some(c) => rest = c.find('\n').map_or("", |i| &c[i..]),
            None => return line.len() - t.len(),
        }
    }
}

/// `LOAD SCHEMA|DATA|RULES <path>;` where the path runs to the `;` and may be
/// single-quoted.
fn parse_load(line: &str, after_load: usize) -> Result<Command, ServiceError> {
    let rest = &line[after_load..];
    let body = rest.trim_start();
    let kind: String = body.chars().take_while(|c| c.is_alphanumeric()).collect();
    let kind_at = after_load + (rest.len() - body.len());
    let path_text = body[kind.len()..].trim();
    let Some(path_text) = path_text.strip_suffix(';') else {
        return Err(ServiceError::CommandSyntax {
            pos: position_at(line, line.trim_end().len()),
            expected: "`;`".into(),
            found: "end of input".into(),
        });
    };
    let path = path_text.trim().trim_matches('\'').to_string();
    if path.is_empty() {
        return Err(ServiceError::CommandSyntax {
            pos: position_at(line, kind_at + kind.len()),
            expected: "path".into(),
            found: "`;`".into(),
        });
    }
    match kind.to_ascii_uppercase().as_str() {
        "SCHEMA" => Ok(Command::LoadSchema(path)),
        "DATA" => Ok(Command::LoadData(path)),
        "RULES" => Ok(Command::LoadRules(path)),
        _ => Err(ServiceError::CommandSyntax {
            pos: position_at(line, kind_at),
            expected: "SCHEMA, DATA or RULES".into(),
            found: if kind.is_empty() { "nothing".into() } else { format!("`{kind}`") },
        }),
    }
}

fn position_at(src: &str, offset: usize) -> Position {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Position { offset, line, column }
}

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn command(&mut self) -> Result<Command, ServiceError> {
        let tok = self.cur.advance();
        let word = tok.ident().map(str::to_ascii_uppercase).unwrap_or_default();
        Ok(match word.as_str() {
            "DISPLAY" => {
                let fact = self.ident("fact")?;
                self.punct('(')?;
                let mut measures = vec![self.measure()?];
                while self.cur.eat_punct(',') {
                    measures.push(self.measure()?);
                }
                self.punct(')')?;
                self.keyword("ROWS")?;
                let (row_dim, row_hier) = self.dim_hier()?;
                self.keyword("COLS")?;
                let (col_dim, col_hier) = self.dim_hier()?;
                let threshold = self.threshold()?;
                Command::Op(Operation::Display { fact, measures, row_dim, row_hier, col_dim, col_hier, threshold })
            }
            "ROTATE" => {
                let d_old = self.ident("dimension")?;
                self.keyword("TO")?;
                let (d_new, hier) = self.dim_hier()?;
                let threshold = self.threshold()?;
                Command::Op(Operation::Rotate { d_old, d_new, hier, threshold })
            }
            "DRILLDOWN" | "ROLLUP" => {
                let dim = self.ident("dimension")?;
                self.keyword("TO")?;
                let attribute = self.ident("attribute")?;
                let threshold = self.threshold()?;
                if word == "DRILLDOWN" {
                    Command::Op(Operation::Drilldown { dim, attribute, threshold })
                } else {
                    Command::Op(Operation::Rollup { dim, attribute, threshold })
                }
            }
            "SET" => {
                self.keyword("PROFILE")?;
                Command::SetProfile(self.ident("profile name")?)
            }
            "SHOW" => {
                let what = self.cur.advance();
                match what.ident().map(str::to_ascii_uppercase).as_deref() {
                    Some("WEIGHTS") => Command::ShowWeights,
                    Some("RULES") => Command::ShowRules,
                    Some("TABLE") => Command::ShowTable,
                    Some("HISTORY") => Command::ShowHistory,
                    _ => return Err(unexpected(&what, "WEIGHTS, RULES, TABLE or HISTORY")),
                }
            }
            "DROP" => {
                self.keyword("RULE")?;
                Command::DropRule(self.ident("rule name")?)
            }
            _ => {
                return Err(unexpected(
                    &tok,
                    "DISPLAY, ROTATE, DRILLDOWN, ROLLUP, LOAD, SET, SHOW, CREATE or DROP",
                ))
            }
        })
    }

    fn measure(&mut self) -> Result<String, ServiceError> {
        let agg_tok = self.cur.peek().clone();
        let agg = self.ident("aggregation")?;
        self.punct('(')?;
        let m = self.ident("measure")?;
        self.punct(')')?;
        let text = format!("{}({m})", agg.to_ascii_uppercase());
        text.parse::<MeasureSpec>().map_err(|_| unexpected(&agg_tok, "SUM, AVG, MIN, MAX or COUNT"))?;
        Ok(text)
    }

    fn dim_hier(&mut self) -> Result<(String, String), ServiceError> {
        let d = self.ident("dimension")?;
        self.punct('.')?;
        let h = self.ident("hierarchy")?;
        Ok((d, h))
    }

    fn threshold(&mut self) -> Result<Option<f64>, ServiceError> {
        if !self.cur.eat_keyword("THRESHOLD") {
            return Ok(None);
        }
        let tok = self.cur.advance();
        match &tok.kind {
            TokenKind::Number(n) => n.parse().map(Some).map_err(|_| unexpected(&tok, "threshold")),
            _ => Err(unexpected(&tok, "threshold")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ServiceError> {
        let tok = self.cur.advance();
        tok.ident().map(str::to_string).ok_or_else(|| unexpected(&tok, what))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ServiceError> {
        if self.cur.eat_keyword(kw) {
            Ok(())
        } else {
            Err(unexpected(self.cur.peek(), kw))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), ServiceError> {
        if self.cur.eat_punct(c) {
            Ok(())
        } else {
            Err(unexpected(self.cur.peek(), &format!("`{c}`")))
        }
    }
}

fn unexpected(tok: &Token, expected: &str) -> ServiceError {
    ServiceError::CommandSyntax { pos: tok.pos, expected: expected.to_string(), found: tok.kind.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_round_trip_through_their_display() {
        for line in [
            "DISPLAY VENTES (SUM(Montant)) ROWS CLIENTS.HGEO COLS PRODUITS.HPRO;",
            "DISPLAY Ventes (SUM(Montant), AVG(Montant)) ROWS Clients.HGEO COLS Produits.HPRO THRESHOLD 0.5;",
            "ROTATE Produits TO Temps.HTPS THRESHOLD 0.5;",
            "DRILLDOWN Temps TO MoisN;",
            "ROLLUP Temps TO ALL THRESHOLD 1;",
        ] {
            let Command::Op(op) = parse_command(line).unwrap() else { panic!("{line}") };
            assert_eq!(op.to_string(), line);
        }
        let Command::Op(op) = parse_command("display ventes (sum(montant)) rows clients.hgeo cols produits.hpro;").unwrap()
        else {
            panic!()
        };
        assert_eq!(op.to_string(), "DISPLAY ventes (SUM(montant)) ROWS clients.hgeo COLS produits.hpro;");
    }

    #[test]
    fn other_commands() {
        assert_eq!(parse_command("LOAD SCHEMA fixtures/schema.ddl;").unwrap(), Command::LoadSchema("fixtures/schema.ddl".into()));
        assert_eq!(parse_command("load data '/tmp/my data';").unwrap(), Command::LoadData("/tmp/my data".into()));
        assert_eq!(parse_command("LOAD RULES r.rul ;").unwrap(), Command::LoadRules("r.rul".into()));
        assert_eq!(parse_command("SET PROFILE alice;").unwrap(), Command::SetProfile("alice".into()));
        assert_eq!(parse_command("show weights;").unwrap(), Command::ShowWeights);
        assert_eq!(parse_command("DROP RULE r1;").unwrap(), Command::DropRule("r1".into()));
        assert_eq!(parse_command("-- note\n  show table;").unwrap(), Command::ShowTable);
        assert!(matches!(parse_command("-- a\n--b\nCREATE RULE x ON Temps WHEN displayed THEN priority(Temps, 1);").unwrap(), Command::CreateRule(_)));
        assert!(matches!(parse_command("CREATE RULE x ON Temps WHEN displayed THEN priority(Temps, 1);").unwrap(), Command::CreateRule(_)));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_command("ROTATE Produits Temps.HTPS;").unwrap_err();
        assert_eq!(err.code(), "command-syntax-error");
        assert_eq!(err.position().unwrap().column, 17);

        let err = parse_command("DISPLAY VENTES (TOTAL(Montant)) ROWS A.B COLS C.D;").unwrap_err();
        assert_eq!(err.position().unwrap().column, 17);

        let err = parse_command("ROLLUP Temps TO Trimestre").unwrap_err();
        assert!(err.to_string().contains("end of input"));

        let err = parse_command("LOAD TABLES x;").unwrap_err();
        assert_eq!(err.position().unwrap().column, 6);
        assert!(parse_command("LOAD SCHEMA x").is_err());
        assert!(parse_command("SELECT *;").is_err());
        assert_eq!(parse_command("ROTATE $;").unwrap_err().position().unwrap().column, 8);
    }
}
