use std::io::{self, BufRead, Write};

use pmdb_core::shell::{Service, ServiceError};

/// Formats an error the way the REPL prints it.
pub fn describe(e: &ServiceError) -> String {
    match e.position() {
        Some(p) => format!("error [{}] at {p}: {e}", e.code()),
        None => format!("error [{}]: {e}", e.code()),
    }
}

/// True once `buf` holds a complete command: its last non-comment text ends
/// with `;`.
fn complete(buf: &str) -> bool {
    code_lines(buf).last().is_some_and(|l| l.ends_with(';'))
}

fn code_lines(buf: &str) -> impl Iterator<Item = &str> {
    buf.lines().map(|l| l.split("--").next().unwrap_or("").trim()).filter(|l| !l.is_empty())
}

/// Reads commands from `input` until EOF or `QUIT;`, printing each result to
/// `out`. Commands may span lines. Returns the number of failed commands.
pub fn run(
    service: &Service,
    session: &str,
    input: impl BufRead,
    mut out: impl Write,
    prompt: bool,
) -> io::Result<usize> {
    let mut failures = 0;
    let mut buf = String::new();
    if prompt {
        write!(out, "pmdb> ")?;
        out.flush()?;
    }
    for line in input.lines() {
        let line = line?;
        buf.push_str(&line);
        buf.push('\n');
        if !complete(&buf) {
            if prompt && code_lines(&buf).next().is_some() {
                write!(out, "   -> ")?;
                out.flush()?;
            }
            continue;
        }
        let cmd = std::mem::take(&mut buf);
        let word = cmd.trim().trim_end_matches(';').trim();
        if word.eq_ignore_ascii_case("quit") || word.eq_ignore_ascii_case("exit") {
            break;
        }
        match service.run_command(session, &cmd) {
            Ok(output) => out.write_all(output.render().as_bytes())?,
            Err(e) => {
                failures += 1;
                writeln!(out, "{}", describe(&e))?;
            }
        }
        if prompt {
            write!(out, "pmdb> ")?;
            out.flush()?;
        }
    }
    if code_lines(&buf).next().is_some() {
        failures += 1;
        writeln!(out, "error [command-syntax-error]: unterminated command, expected `;`")?;
    }
    Ok(failures)
}
