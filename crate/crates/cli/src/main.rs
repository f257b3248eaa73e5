//! `rdda` — operator surface over the core engine: schema checking,
//! deterministic scenario runs, central queries, and per-user export
//! transparency reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdda_core::central::query_central;
use rdda_core::pds::inspect_exports;
use rdda_core::simnet::{run_scenario, RunError, ScenarioFile, Scheduler, World};
use rdda_core::schema::{parse_ddl, validate};
use rdda_core::value::Scalar;

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 2;
const EXIT_SCENARIO: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "rdda", about = "Partially decentralized data architecture runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a schema; prints one violation per line.
    Check { schema: PathBuf },
    /// Run a scenario and write the event log and state snapshot.
    Run {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        epochs: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run client actors on threads (same output as sequential).
        #[arg(long)]
        concurrent: bool,
    },
    /// Evaluate a SELECT over the central store of a snapshot.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        sql: String,
    },
    /// Report everything one user's store ever exported.
    InspectExports {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 0)]
        since: i64,
    },
}

fn init_logging() {
    let level = match std::env::var("RDDA_LOG_LEVEL").as_deref() {
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        _ => log::LevelFilter::Error,
    };
    env_logger::Builder::new().filter_level(level).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check { schema } => cmd_check(&schema),
        Command::Run {
            schema,
            scenario,
            epochs,
            seed,
            out,
            concurrent,
        } => cmd_run(&schema, &scenario, epochs, seed, &out, concurrent),
        Command::Query { snapshot, sql } => cmd_query(&snapshot, &sql),
        Command::InspectExports {
            snapshot,
            user,
            since,
        } => cmd_inspect_exports(&snapshot, &user, since),
    };
    ExitCode::from(code)
}

fn read(path: &Path) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_SCENARIO
    })
}

fn cmd_check(schema: &Path) -> u8 {
    let source = match read(schema) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match parse_ddl(&source) {
        Err(e) => {
            println!("{}", e.report_line());
            EXIT_VALIDATION
        }
        Ok(statements) => match validate(&statements) {
            Ok(catalog) => {
                log::info!(
                    "schema ok: {} tables, {} views",
                    catalog.tables.len(),
                    catalog.views.len()
                );
                EXIT_OK
            }
            Err(violations) => {
                for v in violations {
                    println!("{}", v.report_line());
                }
                EXIT_VALIDATION
            }
        },
    }
}

fn cmd_run(
    schema: &Path,
    scenario: &Path,
    epochs: i64,
    seed: u64,
    out: &Path,
    concurrent: bool,
) -> u8 {
    let schema_sql = match read(schema) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let scenario_text = match read(scenario) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let scenario_file = match ScenarioFile::from_json(&scenario_text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_SCENARIO;
        }
    };
    if epochs < 0 {
        eprintln!("error: --epochs must be nonnegative");
        return EXIT_SCENARIO;
    }
    let scheduler = if concurrent {
        Scheduler::Concurrent
    } else {
        Scheduler::Sequential
    };
    let world = match run_scenario(&schema_sql, &scenario_file, epochs, seed, scheduler) {
        Ok(w) => w,
        Err(RunError::Schema(violations)) => {
            for v in violations {
                println!("{}", v.report_line());
            }
            return EXIT_VALIDATION;
        }
        Err(RunError::Parse(e)) => {
            println!("{}", e.report_line());
            return EXIT_VALIDATION;
        }
        Err(RunError::Scenario(e)) => {
            eprintln!("error: {e}");
            return EXIT_SCENARIO;
        }
        Err(e) => {
            eprintln!("internal invariant breach: {e}");
            return EXIT_INTERNAL;
        }
    };

    if let Err(e) = write_outputs(&world, out) {
        eprintln!("error: {e}");
        return EXIT_SCENARIO;
    }
    println!(
        "ran {epochs} epochs, {} messages, outputs in {}",
        world.log.len(),
        out.display()
    );
    EXIT_OK
}

fn write_outputs(world: &World, out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out.join("pds"))?;
    std::fs::write(out.join("events.jsonl"), world.event_log_text())?;
    std::fs::write(out.join("snapshot.json"), world.snapshot_json())?;
    for (user, actor) in &world.clients {
        let doc = serde_json::to_string_pretty(&actor.store).expect("store serializes");
        std::fs::write(out.join("pds").join(format!("{user}.json")), doc)?;
    }
    Ok(())
}

fn load_world(snapshot: &Path) -> Result<World, u8> {
    let text = read(snapshot)?;
    World::from_snapshot_json(&text).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_SCENARIO
    })
}

fn cmd_query(snapshot: &Path, sql: &str) -> u8 {
    let world = match load_world(snapshot) {
        Ok(w) => w,
        Err(code) => return code,
    };
    match query_central(&world.central, &world.catalog, sql) {
        Ok(result) => {
            print_table(&result.columns, &result.rows);
            match result.completeness {
                Some(c) if c == 0.0 => println!("completeness: 0 (no data)"),
                Some(c) => println!("completeness: {c}"),
                None => println!("completeness: n/a"),
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn print_table(columns: &[String], rows: &[rdda_core::value::Row]) {
    let render = |s: &Scalar| match s {
        Scalar::Text(t) => t.clone(),
        other => other.to_string(),
    };
    let mut widths: Vec<usize> = columns.iter().map(|c| c.len()).collect();
    let rendered: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.0.iter().map(render).collect::<Vec<_>>())
        .collect();
    for row in &rendered {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let line: Vec<String> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{c:<width$}", width = widths[i]))
        .collect();
    println!("{}", line.join(" | "));
    println!(
        "{}",
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-")
    );
    for row in &rendered {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths[i]))
            .collect();
        println!("{}", cells.join(" | "));
    }
}

fn cmd_inspect_exports(snapshot: &Path, user: &str, since: i64) -> u8 {
    let world = match load_world(snapshot) {
        Ok(w) => w,
        Err(code) => return code,
    };
    match world.clients.get(user) {
        Some(actor) => {
            print!("{}", inspect_exports(&actor.store, since));
            EXIT_OK
        }
        None => {
            eprintln!("error: unknown user {user}");
            EXIT_VALIDATION
        }
    }
}
