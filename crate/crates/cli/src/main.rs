use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context as _;
use chrono::{NaiveDateTime, Utc};
use clap::{Args, Parser, Subcommand};
use fitbot_core::engine::{parse_reference_time, Engine, EngineError, ReformulationInput};
use fitbot_core::eval::{evaluate, parse_corpus};
use fitbot_core::reformulation::{reformulate, RemovalReason, TaskCatalog, UserProfile};
use fitbot_core::service::http::{self, AppState, DEFAULT_PORT};
use fitbot_core::service::{
    FileProfileStore, FileSessionStore, MemoryProfileStore, MemorySessionStore, ProfileStore,
    Service, SessionStore, DEFAULT_SESSION_TTL_SECS,
};
use fitbot_core::skill::{parse_skill_with_warnings, SkillError};
use fitbot_core::text::tokenize;
use fitbot_core::{ReformulatedQuery, SessionState};

#[derive(Parser)]
#[command(name = "fitbot", version, about = "Fitness assistant chatbot engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a skill file and print its diagnostics.
    Validate { skill: PathBuf },
    /// Talk to a skill on the terminal, one line per turn.
    Chat(ChatArgs),
    /// Run the HTTP message service.
    Serve(ServeArgs),
    /// Measure intent accuracy on a `text<TAB>intent` corpus.
    Eval {
        skill: PathBuf,
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(long, value_parser = reference_time)]
        reference_time: Option<NaiveDateTime>,
    },
    /// Show how a query is reformulated, term by term.
    Reformulate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        json: bool,
        #[arg(required = true)]
        query: Vec<String>,
    },
}

#[derive(Args)]
struct ChatArgs {
    skill: PathBuf,
    /// Print intents, entities and reformulations after each reply.
    #[arg(long)]
    debug: bool,
    /// Fixed reference time for dates and times (default: now, UTC).
    #[arg(long, value_parser = reference_time)]
    reference_time: Option<NaiveDateTime>,
    #[arg(long)]
    wordlist: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, requires = "catalog")]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "FITBOT_SKILL")]
    skill: PathBuf,
    #[arg(long, env = "FITBOT_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "FITBOT_HOST", default_value = "127.0.0.1")]
    host: String,
    /// Keep sessions and profiles on disk here instead of in memory.
    #[arg(long, env = "FITBOT_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, env = "FITBOT_SESSION_TTL", default_value_t = DEFAULT_SESSION_TTL_SECS)]
    session_ttl: i64,
    #[arg(long, env = "FITBOT_CATALOG")]
    catalog: Option<PathBuf>,
    #[arg(long, env = "FITBOT_WORDLIST")]
    wordlist: Option<PathBuf>,
    #[arg(long, env = "FITBOT_CORS_ORIGIN", default_value = "*")]
    cors_origin: String,
}

fn reference_time(s: &str) -> Result<NaiveDateTime, String> {
    parse_reference_time(s).ok_or_else(|| format!("'{s}' is not an ISO 8601 datetime"))
}

/// Exit 1 for content the user must fix, 2 for I/O trouble.
enum Failure {
    Invalid(String),
    Io(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Io)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?)
        .map_err(|_| Failure::Invalid(format!("{} is not UTF-8", path.display())))
}

fn load_engine(skill: &Path, wordlist: Option<&Path>) -> Result<Engine, Failure> {
    let (skill, warnings) = parse_skill_with_warnings(&read(skill)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", skill.display())))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let mut engine = Engine::new(skill)?;
    if let Some(path) = wordlist {
        engine = engine.with_wordlist(&read_text(path)?)?;
    }
    Ok(engine)
}

fn load_catalog(path: &Path) -> Result<TaskCatalog, Failure> {
    TaskCatalog::from_json(&read_text(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_profile(path: Option<&Path>) -> Result<UserProfile, Failure> {
    match path {
        None => Ok(UserProfile::new("cli")),
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", p.display()))),
    }
}

fn cmd_validate(path: &Path) -> CliResult {
    let (skill, warnings) = match parse_skill_with_warnings(&read(path)?) {
        Ok(parsed) => parsed,
        Err(e) => {
            let kind = match e {
                SkillError::Syntax { .. } => "syntax error",
                SkillError::Schema(_) => "schema error",
                SkillError::Validation { .. } => "invalid",
            };
            return Err(Failure::Invalid(format!("{}: {kind}: {e}", path.display())));
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: ok ({} intents, {} entities, {} dialog nodes, {} warnings)",
        skill.name,
        skill.intents.len(),
        skill.entities.len(),
        skill.dialog_nodes.len(),
        warnings.len()
    );
    Ok(())
}

fn cmd_chat(args: &ChatArgs) -> CliResult {
    let engine = load_engine(&args.skill, args.wordlist.as_deref())?;
    let catalog = args.catalog.as_deref().map(load_catalog).transpose()?;
    let mut profile = load_profile(args.profile.as_deref())?;
    let reference = args
        .reference_time
        .unwrap_or_else(|| Utc::now().naive_utc());
    let interactive = io::stdin().is_terminal();
    let mut session = SessionState::new("repl", "");
    let mut out = io::stdout().lock();

    let mut lines = io::stdin().lock().lines();
    loop {
        if interactive {
            write!(out, "> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next().transpose()? else {
            break;
        };
        if !interactive {
            writeln!(out, "> {line}")?;
        }
        let input = catalog.as_ref().map(|catalog| ReformulationInput {
            catalog,
            profile: &profile,
        });
        let turn = match engine.turn(&session, &line, reference, input) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {e}");
                continue;
            }
        };
        for r in &turn.result.responses {
            writeln!(out, "{r}")?;
        }
        if args.debug {
            print_debug(&mut out, &turn)?;
        }
        session = turn.result.updated_session;
        if let Some(p) = turn.profile {
            profile = p;
        }
    }
    Ok(())
}

fn print_debug(out: &mut impl Write, turn: &fitbot_core::Turn) -> io::Result<()> {
    let res = &turn.nlu.resolution;
    let ranked: Vec<String> = res
        .ranked
        .iter()
        .map(|p| format!("{}={:.4}", p.intent, p.confidence))
        .collect();
    let verdict = match res.verdict.intent() {
        Some(i) => i.to_string(),
        None => "out of scope".to_string(),
    };
    writeln!(out, "  [intent] {verdict} ({})", ranked.join(", "))?;
    if let Some(c) = &turn.nlu.corrected_text {
        writeln!(out, "  [corrected] {c}")?;
    }
    for m in &turn.nlu.entities {
        writeln!(
            out,
            "  [entity] @{}={} [{},{}] {:.2} {:?}",
            m.entity, m.value, m.start, m.end, m.confidence, m.recognizer
        )?;
    }
    writeln!(out, "  [nodes] {}", turn.result.visited.join(" -> "))?;
    if let Some(q) = &turn.srq {
        writeln!(
            out,
            "  [srq] {} ({})",
            q.final_terms.join(" "),
            q.task_label
        )?;
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> CliResult {
    let ttl = chrono::Duration::seconds(args.session_ttl.max(0));
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| Failure::Invalid(format!("bad listen address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let bound = listener.local_addr()?;
        let state = AppState::pending(&args.cors_origin);
        let server = tokio::spawn(http::serve(listener, state.clone(), async {
            let _ = tokio::signal::ctrl_c().await;
        }));
        eprintln!("listening on http://{bound}");

        let engine = load_engine(&args.skill, args.wordlist.as_deref())?;
        let (sessions, profiles): (Arc<dyn SessionStore>, Arc<dyn ProfileStore>) =
            match &args.data_dir {
                Some(dir) => (
                    Arc::new(FileSessionStore::open(dir, ttl).context("opening session store")?),
                    Arc::new(FileProfileStore::open(dir).context("opening profile store")?),
                ),
                None => (
                    Arc::new(MemorySessionStore::new(ttl)),
                    Arc::new(MemoryProfileStore::default()),
                ),
            };
        let mut service = Service::new(Arc::new(engine), sessions);
        if let Some(path) = &args.catalog {
            service = service.with_reformulation(Arc::new(load_catalog(path)?), profiles);
        }
        let name = service.engine().skill().name.clone();
        state.install(Arc::new(service));
        eprintln!("skill '{name}' loaded");

        server.await.context("server task")?.context("serving")?;
        Ok::<(), Failure>(())
    })
}

fn cmd_eval(
    skill: &Path,
    corpus: &Path,
    json: bool,
    reference: Option<NaiveDateTime>,
) -> CliResult {
    let engine = load_engine(skill, None)?;
    let corpus = parse_corpus(&read_text(corpus)?).map_err(|e| Failure::Invalid(e.to_string()))?;
    let reference = reference.unwrap_or_else(|| Utc::now().naive_utc());
    let report =
        evaluate(&engine, &corpus, reference).map_err(|e| Failure::Invalid(e.to_string()))?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        print!("{report}");
    }
    Ok(())
}

fn print_reformulation(q: &ReformulatedQuery) {
    println!(
        "task: {} state {} \"{}\" (score {})",
        q.task.task_id, q.task.state_index, q.task_label, q.task_score
    );
    println!("original: {}", q.original_terms.join(" "));
    for term in &q.final_terms {
        match q.expansion_terms.iter().find(|c| &c.term == term) {
            Some(c) => println!(
                "  + {term}  expansion (task {} x profile {} = {:.4})",
                c.task_weight, c.profile_weight, c.score
            ),
            None => println!("  = {term}  original"),
        }
    }
    for r in &q.removed {
        let why = match r.reason {
            RemovalReason::Stopword => "stopword",
            RemovalReason::Duplicate => "duplicate",
            RemovalReason::OutOfContext => "out of context",
        };
        println!("  - {}  {why}", r.term);
    }
    println!("final: {}", q.final_terms.join(" "));
}

fn cmd_reformulate(
    catalog: &Path,
    profile: Option<&Path>,
    k: usize,
    json: bool,
    query: &[String],
) -> CliResult {
    let catalog = load_catalog(catalog)?;
    let profile = load_profile(profile)?;
    let text = query.join(" ");
    let terms: Vec<String> = tokenize(&text)
        .map_err(|e| Failure::Invalid(e.to_string()))?
        .into_iter()
        .map(|t| t.normalized)
        .collect();
    let config = fitbot_core::reformulation::ReformulationConfig {
        expansion_k: k,
        ..Default::default()
    };
    let q = reformulate(&terms, &profile, &catalog, None, &config)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&q).expect("query serializes")
        );
    } else {
        print_reformulation(&q);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { skill } => cmd_validate(skill),
        Command::Chat(args) => cmd_chat(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Eval {
            skill,
            corpus,
            json,
            reference_time,
        } => cmd_eval(skill, corpus, *json, *reference_time),
        Command::Reformulate {
            catalog,
            profile,
            k,
            json,
            query,
        } => cmd_reformulate(catalog, profile.as_deref(), *k, *json, query),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
