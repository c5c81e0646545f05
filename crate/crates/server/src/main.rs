use std::io::{self, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Parser};
use pmdb_core::shell::{Service, ServiceError};
use pmdb_server::repl;

#[derive(Debug, Parser)]
#[command(name = "pmdb", version, about = "Personalized multidimensional database")]
#[command(group(ArgGroup::new("mode").required(true).args(["serve", "repl"])))]
struct Args {
    /// Schema DDL file.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Directory of CSV files, one per dimension and fact.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    /// Rule file registered under the default profile.
    #[arg(long, requires = "schema")]
    rules: Option<PathBuf>,
    /// Serve the HTTP API on this address, e.g. 127.0.0.1:8080.
    #[arg(long)]
    serve: Option<String>,
    /// Read commands from standard input.
    #[arg(long)]
    repl: bool,
    /// Profile for the REPL session and for `--rules`.
    #[arg(long, env = "OLAP_PERSONA_PROFILE", default_value = "default")]
    profile: String,
}

fn load(service: &Service, args: &Args) -> Result<(), ServiceError> {
    if let Some(schema) = &args.schema {
        service.load_schema_file(schema)?;
        log::info!("schema loaded from {}", schema.display());
    }
    if let Some(data) = &args.data {
        let tables = service.load_data(data)?;
        log::info!("loaded {}", tables.join(", "));
    }
    if let Some(rules) = &args.rules {
        let source = std::fs::read_to_string(rules)
            .map_err(|e| ServiceError::Io { path: rules.display().to_string(), message: e.to_string() })?;
        let names = service.add_rules(&args.profile, &source)?;
        log::info!("registered {} for profile {}", names.join(", "), args.profile);
    }
    Ok(())
}

async fn serve(service: Arc<Service>, addr: &str) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, pmdb_server::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let service = Arc::new(Service::new());
    if let Err(e) = load(&service, &args) {
        eprintln!("{}", repl::describe(&e));
        return ExitCode::FAILURE;
    }

    let result = if let Some(addr) = &args.serve {
        tokio::runtime::Runtime::new().and_then(|rt| rt.block_on(serve(service, addr)))
    } else {
        let session = service.create_session(&args.profile);
        let stdin = io::stdin();
        let interactive = stdin.is_terminal();
        repl::run(&service, &session, stdin.lock(), io::stdout().lock(), interactive).map(|_| ())
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pmdb: {e}");
            ExitCode::FAILURE
        }
    }
}
