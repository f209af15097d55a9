//! Executes scenario commands and renders the report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rationalizer_core::epistemic::{higher_order_richness, model_distance, SubjectiveModel};
use rationalizer_core::game::{ExtensiveForm, NodeId, StrategyId};
use rationalizer_core::payoff::{hausdorff_distance, is_rich};
use rationalizer_core::perturb::{graft_models, selection_models, tie_break_models};
use rationalizer_core::rational::format_rational;
use rationalizer_core::solver::{solve, Concept, SolutionTrace, SolveError, SolverConfig};
use serde::Serialize;

use crate::scenario::{Command, PerturbKind, Ref, Resolved};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the concept of every `solve` command.
    pub concept: Option<Concept>,
    /// Replaces every round budget.
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CsvRow {
    pub concept: String,
    pub round: usize,
    pub player: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub strategies: String,
    pub outcomes: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub human: String,
    pub rows: Vec<CsvRow>,
    /// Commands that stopped at the round budget.
    pub budget_failures: usize,
    /// Commands that failed for any other reason.
    pub other_failures: usize,
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = self.human.clone();
        out.push_str("## csv\n");
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(["concept", "round", "player", "type", "strategies", "outcomes"]).unwrap();
        }
        for r in &self.rows {
            w.serialize(r).unwrap();
        }
        out.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
        out
    }
}

fn set_text(form: &ExtensiveForm, player: usize, set: &BTreeSet<StrategyId>) -> String {
    let names: Vec<String> = set.iter().map(|&s| form.strategy_name(player, s)).collect();
    format!("{{{}}}", names.join(", "))
}

fn outcome_text(form: &ExtensiveForm, zs: &BTreeSet<NodeId>) -> String {
    let names: Vec<&str> = zs.iter().map(|&z| form.terminal_label(z)).collect();
    format!("{{{}}}", names.join(", "))
}

/// Outcomes of the root sets after round `k`.
fn round_outcomes(form: &ExtensiveForm, trace: &SolutionTrace, k: usize) -> BTreeSet<NodeId> {
    let sets: Vec<Vec<StrategyId>> =
        (0..form.num_players()).map(|p| trace.set_at(k, trace.root(p)).iter().copied().collect()).collect();
    rationalizer_core::game::cartesian(&sets).into_iter().map(|prof| form.outcome(&prof, 0)).collect()
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (k, c) in r.iter().enumerate() {
            width[k] = width[k].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (k, c) in cells.iter().enumerate() {
            if k + 1 == cells.len() {
                s.push_str(c);
            } else {
                s.push_str(c);
                s.push_str(&" ".repeat(width[k] - c.chars().count() + 2));
            }
        }
        s.trim_end().to_string()
    };
    writeln!(out, "{}", line(header.to_vec())).unwrap();
    for r in rows {
        writeln!(out, "{}", line(r.iter().map(String::as_str).collect())).unwrap();
    }
}

fn trace_section(form: &ExtensiveForm, trace: &SolutionTrace, report: &mut Report) {
    let out = &mut report.human;
    let concept = trace.concept;
    writeln!(out, "{} ({}): fixpoint after round {}", concept, concept.tag(), trace.fixpoint).unwrap();
    let mut rows = Vec::new();
    for (k, round) in trace.rounds.iter().enumerate() {
        let outcomes = outcome_text(form, &round_outcomes(form, trace, k));
        for (node, set) in round.iter().enumerate() {
            let n = &trace.closure.nodes[node];
            let player = form.player_name(n.player).to_string();
            let label = trace.closure.node_label(node);
            let strategies = set_text(form, n.player, set);
            rows.push(vec![k.to_string(), player.clone(), label.clone(), strategies.clone()]);
            report.rows.push(CsvRow {
                concept: concept.tag().to_string(),
                round: k,
                player,
                type_label: label,
                strategies,
                outcomes: outcomes.clone(),
            });
        }
    }
    table(out, &["round", "player", "type", "strategies"], &rows);
    for p in 0..form.num_players() {
        writeln!(out, "final {}: {}", form.player_name(p), set_text(form, p, trace.root_set(p))).unwrap();
    }
    writeln!(out, "outcomes: {}", outcome_text(form, &trace.outcomes(form))).unwrap();
    if concept == Concept::StrictEfr {
        let closure = trace.outcome_class_closure(form);
        for p in 0..form.num_players() {
            writeln!(out, "outcome classes {}: {}", form.player_name(p), set_text(form, p, &closure[trace.root(p)])).unwrap();
        }
    }
}

fn run_concept(
    form: &ExtensiveForm,
    models: &[SubjectiveModel],
    concept: Concept,
    max_rounds: Option<usize>,
    report: &mut Report,
) -> Option<SolutionTrace> {
    match solve(form, models, concept, SolverConfig { max_rounds }) {
        Ok(t) => {
            trace_section(form, &t, report);
            Some(t)
        }
        Err(SolveError::BudgetExceeded { concept, rounds, partial }) => {
            writeln!(report.human, "FAILED: {concept} did not stabilize within {rounds} rounds; partial trace follows").unwrap();
            trace_section(form, &partial, report);
            report.budget_failures += 1;
            None
        }
        Err(e) => {
            writeln!(report.human, "FAILED: {e}").unwrap();
            report.other_failures += 1;
            None
        }
    }
}

pub fn run_scenario(sc: &Resolved, opts: &RunOptions) -> Report {
    let mut report = Report::default();
    writeln!(report.human, "# rationalizer report: {}", sc.name).unwrap();
    writeln!(report.human).unwrap();
    for (k, cmd) in sc.commands.iter().enumerate() {
        run_command(sc, k, cmd, opts, &mut report);
        writeln!(report.human).unwrap();
    }
    report
}

fn concept(c: &str) -> Concept {
    Concept::parse(c).expect("checked at load time")
}

fn run_command(sc: &Resolved, k: usize, cmd: &Command, opts: &RunOptions, report: &mut Report) {
    let form = &sc.form;
    let budget = |own: Option<usize>| opts.max_rounds.or(own);
    match cmd {
        Command::Solve { model, concept: c, max_rounds } => {
            let c = opts.concept.unwrap_or_else(|| concept(c));
            writeln!(report.human, "## {}: solve {} on `{model}`", k + 1, c.tag()).unwrap();
            run_concept(form, &sc.models[model], c, budget(*max_rounds), report);
        }
        Command::Compare { model, concepts } => {
            let tags: Vec<&str> = concepts.iter().map(|c| concept(c).tag()).collect();
            writeln!(report.human, "## {}: compare {} on `{model}`", k + 1, tags.join(" ")).unwrap();
            let mut summary = Vec::new();
            for c in concepts {
                let c = concept(c);
                if let Some(t) = run_concept(form, &sc.models[model], c, budget(None), report) {
                    let mut row = vec![c.tag().to_string()];
                    for p in 0..form.num_players() {
                        row.push(set_text(form, p, t.root_set(p)));
                    }
                    row.push(outcome_text(form, &t.outcomes(form)));
                    summary.push(row);
                }
            }
            writeln!(report.human, "summary:").unwrap();
            let mut header = vec!["concept".to_string()];
            header.extend(form.players().iter().cloned());
            header.push("outcomes".into());
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            table(&mut report.human, &h, &summary);
        }
        Command::Distance { a, b } => {
            let name = |r: &Ref| match r {
                Ref::Model(m) => format!("model `{m}`"),
                Ref::Structure(s) => format!("structure `{s}`"),
            };
            writeln!(report.human, "## {}: distance between {} and {}", k + 1, name(a), name(b)).unwrap();
            let d = match (a, b) {
                (Ref::Model(x), Ref::Model(y)) => model_distance(&sc.models[x], &sc.models[y]).map_err(|e| e.to_string()),
                (Ref::Structure(x), Ref::Structure(y)) => {
                    hausdorff_distance(&sc.structures[x].canonicalize(), &sc.structures[y].canonicalize()).map_err(|e| e.to_string())
                }
                _ => unreachable!("checked at load time"),
            };
            match d {
                Ok(d) => writeln!(report.human, "distance: {}", format_rational(&d)).unwrap(),
                Err(e) => {
                    writeln!(report.human, "FAILED: {e}").unwrap();
                    report.other_failures += 1;
                }
            }
        }
        Command::Check { richness, hierarchies } => {
            writeln!(report.human, "## {}: check", k + 1).unwrap();
            for s in richness {
                let st = &sc.structures[s];
                let r = is_rich(form, st);
                writeln!(report.human, "structure `{s}`: {}", if r.rich { "rich" } else { "not rich" }).unwrap();
                for (p, theta, strat) in &r.missing {
                    writeln!(
                        report.human,
                        "  no dominance type for {} at {} with {}",
                        form.player_name(*p),
                        st.types(*p)[*theta],
                        form.strategy_name(*p, *strat)
                    )
                    .unwrap();
                }
            }
            for h in hierarchies {
                let order = higher_order_richness(form, &sc.hierarchies[h]);
                let text = order.map_or("none".to_string(), |k| k.to_string());
                writeln!(report.human, "hierarchy `{h}`: higher-order richness order {text}").unwrap();
            }
        }
        Command::Perturb { model, kind, param, target, concepts } => {
            let kind_name = match kind {
                PerturbKind::TieBreak => "tie_break",
                PerturbKind::Graft => "graft",
                PerturbKind::Selection => "selection",
            };
            writeln!(report.human, "## {}: perturb `{model}` by {kind_name} with parameter {param}", k + 1).unwrap();
            match perturb(sc, model, *kind, *param, target.as_ref()) {
                Ok(models) => {
                    match model_distance(&models, &sc.models[model]) {
                        Ok(d) => writeln!(report.human, "distance to benchmark: {}", format_rational(&d)).unwrap(),
                        Err(e) => writeln!(report.human, "distance to benchmark: unavailable ({e})").unwrap(),
                    }
                    for c in concepts {
                        run_concept(form, &models, concept(c), budget(None), report);
                    }
                }
                Err(e) => {
                    writeln!(report.human, "FAILED: {e}").unwrap();
                    report.other_failures += 1;
                }
            }
        }
    }
}

/// Builds the perturbed model profile for a `perturb` command.
pub fn perturb(
    sc: &Resolved,
    model: &str,
    kind: PerturbKind,
    param: u64,
    target: Option<&BTreeMap<String, String>>,
) -> Result<Vec<SubjectiveModel>, String> {
    let form = &sc.form;
    let bench = &sc.models[model];
    let r = match kind {
        PerturbKind::TieBreak => tie_break_models(form, bench, param),
        PerturbKind::Graft => graft_models(form, bench, param as usize),
        PerturbKind::Selection => {
            let t = target.ok_or("selection needs a target")?;
            let profile: Vec<StrategyId> = (0..form.num_players())
                .map(|p| {
                    let name = form.player_name(p);
                    t.get(name)
                        .and_then(|s| form.strategy_by_name(p, s))
                        .ok_or_else(|| format!("target lacks a valid strategy for {name}"))
                })
                .collect::<Result<_, _>>()?;
            selection_models(form, bench, &profile, param)
        }
    };
    r.map_err(|e| e.to_string())
}
