use std::io::{BufRead, IsTerminal, Write};
use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use intentforge_agent::bench::{emit_report, run_scenario, write_report, ReportFormat, Scenario};
use intentforge_agent::cocreation::{backend, CoCreationAgent, Role, SessionStatus};
use intentforge_core::catalog::{validate_catalog, CatalogError};
use intentforge_core::inventory::InventoryStore;
use intentforge_core::traversal::{build_plan, ConfirmedIntent};
use intentforge_gateway::demo::run_e2e_with;
use intentforge_gateway::service::CatalogLoadError;
use intentforge_gateway::{serve, CatalogSource, GatewayConfig, ServeConfig, ServeError};

#[derive(Parser)]
#[command(name = "intentforge", version, about = "Intent-driven network service orchestration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CatalogArg {
    /// Catalog file, or `fixture` for the bundled catalog.
    #[arg(long, env = "INTENTFORGE_CATALOG", default_value = "fixture")]
    catalog: String,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog checks.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Build the orchestration plan for a confirmed intent.
    Plan {
        #[arg(long)]
        intent: PathBuf,
        #[command(flatten)]
        catalog: CatalogArg,
    },
    /// Interactive co-creation.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Convergence benchmark.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Scripted demonstrations.
    #[command(subcommand)]
    Demo(DemoCmd),
    /// Run the HTTP gateway.
    Serve {
        #[arg(long, env = "INTENTFORGE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "INTENTFORGE_HOST", default_value = "127.0.0.1")]
        host: IpAddr,
        /// Require `Authorization: Bearer <token>` on every endpoint but /healthz.
        #[arg(long, env = "INTENTFORGE_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Backend for sessions that do not name one.
        #[arg(long, env = "INTENTFORGE_BACKEND", default_value = "reference")]
        backend: String,
        #[command(flatten)]
        catalog: CatalogArg,
    },
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// Load a catalog and report invariant violations.
    Validate {
        /// Catalog file, or `fixture`.
        file: String,
    },
}

#[derive(Subcommand)]
enum SessionCmd {
    /// Chat with a backend on stdin. `/confirm [name]` confirms, `/tasks`
    /// shows the task board, `/quit` leaves.
    Repl {
        #[arg(long, default_value = "reference")]
        backend: String,
        #[command(flatten)]
        catalog: CatalogArg,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Replay a scenario against one or more backends.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Backend id; repeat for several rows.
        #[arg(long, required = true)]
        backend: Vec<String>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        /// Directory for the timestamped report file.
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        /// Print only; write no report file.
        #[arg(long)]
        no_write: bool,
        #[command(flatten)]
        catalog: CatalogArg,
    },
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Co-create, plan, provision twice (fault-free and fault-injected) and report.
    E2e {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        catalog: CatalogArg,
    },
}

/// Failure already explained to the user.
struct Failed(String);

impl<E: std::fmt::Display> From<E> for Failed {
    fn from(e: E) -> Self {
        Failed(e.to_string())
    }
}

type CmdResult = Result<(), Failed>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Catalog(CatalogCmd::Validate { file }) => validate(&file),
        Command::Plan { intent, catalog } => plan(&intent, &catalog),
        Command::Session(SessionCmd::Repl { backend, catalog }) => repl(&backend, &catalog),
        Command::Bench(BenchCmd::Run { scenario, backend, format, out_dir, no_write, catalog }) => {
            bench(&scenario, &backend, format, (!no_write).then_some(out_dir), &catalog)
        }
        Command::Demo(DemoCmd::E2e { seed, catalog }) => demo(seed, &catalog),
        Command::Serve { port, host, token, backend, catalog } => run_server(ServeConfig {
            host,
            port,
            catalog: catalog.catalog.parse().expect("infallible"),
            gateway: GatewayConfig { default_backend: backend, token: token.filter(|t| !t.is_empty()) },
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failed(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::FAILURE
        }
    }
}

fn load(catalog: &CatalogArg) -> Result<Arc<intentforge_core::catalog::CatalogGraph>, Failed> {
    let source: CatalogSource = catalog.catalog.parse().expect("infallible");
    source.load().map(Arc::new).map_err(|e| {
        print_catalog_error(&e);
        Failed(String::new())
    })
}

fn print_catalog_error(e: &CatalogLoadError) {
    match e {
        CatalogLoadError::Catalog(CatalogError::Invalid { violations }) => {
            eprintln!("catalog has {} invariant violation(s):", violations.len());
            for v in violations {
                eprintln!("  {v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn validate(file: &str) -> CmdResult {
    let graph = load(&CatalogArg { catalog: file.to_string() })?;
    let violations = validate_catalog(&graph);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("  {v}");
        }
        return Err(Failed(format!("{} invariant violation(s)", violations.len())));
    }
    println!("OK");
    Ok(())
}

fn plan(intent: &PathBuf, catalog: &CatalogArg) -> CmdResult {
    let graph = load(catalog)?;
    let text = std::fs::read_to_string(intent).map_err(|e| Failed(format!("cannot read {}: {e}", intent.display())))?;
    let intent: ConfirmedIntent = serde_json::from_str(&text).map_err(|e| Failed(format!("intent JSON: {e}")))?;
    let plan = build_plan(&graph, &intent)?;
    let pretty: serde_json::Value = serde_json::from_str(&plan.to_canonical_json())?;
    println!("{}", serde_json::to_string_pretty(&pretty)?);
    println!("digest {}", plan.canonical_digest);
    Ok(())
}

fn repl(backend_id: &str, catalog: &CatalogArg) -> CmdResult {
    let graph = load(catalog)?;
    let inventory = Arc::new(InventoryStore::in_memory(graph.clone()));
    let mut agent = CoCreationAgent::new("repl", graph, inventory, backend(backend_id)?);
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let mut shown = 0;
    write!(out, "> ")?;
    out.flush()?;
    for line in stdin.lock().lines() {
        let line = line?;
        let line = line.trim();
        let res = match line.split_once(' ').map_or((line, ""), |(a, b)| (a, b.trim())) {
            ("", _) => Ok(Vec::new()),
            ("/quit", _) => break,
            ("/tasks", _) => {
                for t in &agent.session().task_list.tasks {
                    writeln!(out, "  {} {}", t.task_id, t.state)?;
                }
                Ok(Vec::new())
            }
            ("/confirm", who) => agent.confirm(if who.is_empty() { "operator" } else { who }),
            _ => agent.user_message(line),
        };
        if let Err(e) = res {
            writeln!(out, "! {e}")?;
        }
        let s = agent.session();
        for t in &s.transcript[shown..] {
            match (t.role, &t.tool) {
                (Role::User, _) => {}
                (Role::Tool, Some(rec)) => writeln!(out, "  [{}] {}", rec.name, if rec.ok() { "ok" } else { "error" })?,
                _ => writeln!(out, "{}", t.content)?,
            }
        }
        shown = s.transcript.len();
        if matches!(s.status, SessionStatus::Finalized | SessionStatus::Aborted) {
            writeln!(out, "session {:?}", s.status)?;
            break;
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    if let Some(f) = &agent.session().finalized {
        writeln!(out, "{}", serde_json::to_string_pretty(&f.intent)?)?;
    }
    Ok(())
}

fn bench(
    scenario: &PathBuf,
    backends: &[String],
    format: ReportFormat,
    out_dir: Option<PathBuf>,
    catalog: &CatalogArg,
) -> CmdResult {
    let graph = load(catalog)?;
    let scenario = Scenario::load(scenario)?;
    let mut results = Vec::new();
    for id in backends {
        let run = run_scenario(&scenario, backend(id)?, graph.clone())?;
        results.push(run.result);
    }
    print!("{}", emit_report(&results, format)?);
    if let Some(dir) = out_dir {
        let path = write_report(dir, &results, format, chrono::Utc::now())?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}

fn demo(seed: u64, catalog: &CatalogArg) -> CmdResult {
    let graph = load(catalog)?;
    let outcome = run_e2e_with(graph, seed)?;
    print!("{}", outcome.render());
    Ok(())
}

fn run_server(config: ServeConfig) -> CmdResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("INTENTFORGE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let handle = match serve(config).await {
            Ok(h) => h,
            Err(ServeError::Catalog(e)) => {
                print_catalog_error(&e);
                return Err(Failed("refusing to start with an invalid catalog".into()));
            }
            Err(e) => return Err(Failed(e.to_string())),
        };
        tracing::info!(addr = %handle.addr, "listening");
        println!("listening on {}", handle.base_url());
        let stop = handle.stopper();
        tokio::spawn(async move {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
            stop.send_replace(true);
        });
        handle.wait().await.map_err(Failed::from)
    })
}
