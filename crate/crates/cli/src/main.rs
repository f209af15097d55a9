use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rationalizer::run::perturb;
use rationalizer::scenario::{export_models, Command, PerturbKind, Ref};
use rationalizer::{load_scenario, run_scenario, serialize_scenario, Report, Resolved, RunOptions};
use rationalizer_core::solver::Concept;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "rationalizer", version, about = "Exact rationalizability solvers for finite dynamic games")]
struct Cli {
    /// Worker threads (RATIONALIZER_THREADS takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every command of a scenario.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// Solve with this concept instead of the one named in each `solve` command.
        #[arg(long)]
        concept: Option<String>,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a scenario; with --richness also report richness of every structure and hierarchy.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        richness: bool,
    },
    /// Distance between two models (or, failing that, two structures) of a scenario.
    Distance {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Perturb a standard model and solve the result.
    Perturb {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        model: String,
        /// tie_break, graft or selection
        #[arg(long)]
        kind: String,
        #[arg(long)]
        param: u64,
        /// Target profile for selection, e.g. P1=A1.A2,P2=a
        #[arg(long)]
        target: Option<String>,
        #[arg(long = "concept", default_values_t = vec!["efr".to_string()])]
        concepts: Vec<String>,
        /// Write the perturbed model as a standalone scenario.
        #[arg(long)]
        emit: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf) -> Result<Resolved, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    })?;
    load_scenario(&text).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_INVALID)
    })
}

fn emit(report: &Report, out: Option<&PathBuf>) -> ExitCode {
    let text = report.render();
    match out {
        Some(p) => {
            if let Err(e) = fs::write(p, &text) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return ExitCode::from(EXIT_IO);
            }
        }
        None => print!("{text}"),
    }
    if report.budget_failures > 0 {
        ExitCode::from(EXIT_BUDGET)
    } else if report.other_failures > 0 {
        ExitCode::from(EXIT_INVALID)
    } else {
        ExitCode::SUCCESS
    }
}

fn parse_concept(c: &str) -> Result<Concept, ExitCode> {
    Concept::parse(c).ok_or_else(|| {
        eprintln!("error: unknown concept `{c}` (expected efr, br, sefr or icr)");
        ExitCode::from(EXIT_INVALID)
    })
}

fn execute(cmd: Cmd) -> Result<ExitCode, ExitCode> {
    match cmd {
        Cmd::Solve { scenario, concept, max_rounds, out } => {
            let sc = load(&scenario)?;
            let concept = concept.as_deref().map(parse_concept).transpose()?;
            let report = run_scenario(&sc, &RunOptions { concept, max_rounds });
            Ok(emit(&report, out.as_ref()))
        }
        Cmd::Check { scenario, richness } => {
            let mut sc = load(&scenario)?;
            println!(
                "ok: {} structures, {} hierarchies, {} type structures, {} models, {} commands",
                sc.structures.len(),
                sc.hierarchies.len(),
                sc.type_structures.len(),
                sc.models.len(),
                sc.commands.len()
            );
            if !richness {
                return Ok(ExitCode::SUCCESS);
            }
            sc.commands = vec![Command::Check {
                richness: sc.structures.keys().cloned().collect(),
                hierarchies: sc.hierarchies.keys().cloned().collect(),
            }];
            Ok(emit(&run_scenario(&sc, &RunOptions::default()), None))
        }
        Cmd::Distance { scenario, a, b } => {
            let mut sc = load(&scenario)?;
            let pick = |n: &str| -> Result<Ref, ExitCode> {
                if sc.models.contains_key(n) {
                    Ok(Ref::Model(n.to_string()))
                } else if sc.structures.contains_key(n) {
                    Ok(Ref::Structure(n.to_string()))
                } else {
                    eprintln!("error: no model or structure named `{n}`");
                    Err(ExitCode::from(EXIT_INVALID))
                }
            };
            let (ra, rb) = (pick(&a)?, pick(&b)?);
            if std::mem::discriminant(&ra) != std::mem::discriminant(&rb) {
                eprintln!("error: distance compares two models or two structures");
                return Err(ExitCode::from(EXIT_INVALID));
            }
            sc.commands = vec![Command::Distance { a: ra, b: rb }];
            Ok(emit(&run_scenario(&sc, &RunOptions::default()), None))
        }
        Cmd::Perturb { scenario, model, kind, param, target, concepts, emit: emit_path, out } => {
            let mut sc = load(&scenario)?;
            let kind = PerturbKind::parse(&kind).ok_or_else(|| {
                eprintln!("error: unknown perturbation `{kind}` (expected tie_break, graft or selection)");
                ExitCode::from(EXIT_INVALID)
            })?;
            if !sc.models.contains_key(&model) {
                eprintln!("error: unknown model `{model}`");
                return Err(ExitCode::from(EXIT_INVALID));
            }
            for c in &concepts {
                parse_concept(c)?;
            }
            let target: Option<BTreeMap<String, String>> = target.map(|t| {
                t.split(',')
                    .filter_map(|kv| kv.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
                    .collect()
            });
            if let Some(path) = emit_path {
                let models = perturb(&sc, &model, kind, param, target.as_ref()).map_err(|e| {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_INVALID)
                })?;
                let commands = concepts
                    .iter()
                    .map(|c| Command::Solve { model: "perturbed".into(), concept: c.clone(), max_rounds: None })
                    .collect();
                let doc = export_models(&sc.form, &models, "perturbed", commands);
                fs::write(&path, serialize_scenario(&doc)).map_err(|e| {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    ExitCode::from(EXIT_IO)
                })?;
            }
            sc.commands = vec![Command::Perturb { model, kind, param, target, concepts }];
            Ok(emit(&run_scenario(&sc, &RunOptions::default()), out.as_ref()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("RATIONALIZER_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).or(cli.threads);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(EXIT_IO);
        }
    };
    pool.install(|| execute(cli.command)).unwrap_or_else(|code| code)
}
