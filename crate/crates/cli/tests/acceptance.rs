mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;

use rationalizer_core::conjecture::{Atom, ModelContext};
use rationalizer_core::epistemic::{model_distance, standard_models, SubjectiveModel, TypeSpec, TypeStructure};
use rationalizer_core::game::{ExtensiveForm, ROOT};
use rationalizer_core::payoff::{hausdorff_distance, is_rich, StandardPayoffStructure};
use rationalizer_core::perturb::*;
use rationalizer_core::rational::{int, one, ratio, Rational};
use rationalizer_core::solver::{
    backward, efr, icr, justifiable, reachable_under, strict_efr, KernelError, Mode, Restriction, RestrictionSpec,
    SolutionTrace, SolverConfig,
};
use support::micro::micro_cases;
use support::oracle::Oracle;
use support::{labels, names, set, verdict};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn root_names(form: &ExtensiveForm, t: &SolutionTrace, p: usize) -> BTreeSet<String> {
    names(form, p, t.root_set(p))
}

#[test]
fn criterion_01_limit_centipede() {
    let form = centipede_form();
    let models = centipede_limit_models();
    let e = efr(&form, &models, cfg()).unwrap();
    let b = backward(&form, &models, cfg()).unwrap();
    let (eo, bo) = (labels(&form, &e.outcomes(&form)), labels(&form, &b.outcomes(&form)));
    let f2 = root_names(&form, &e, 1);
    let ok = eo == set(&["D1"]) && bo == set(&["D1"]) && f2 == set(&["d"]);
    verdict(1, ok, &format!("efr outcomes {eo:?}, br outcomes {bo:?}, F2 {f2:?}"));
}

#[test]
fn criterion_02_perturbed_centipede() {
    let form = centipede_form();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1, 10, 100] {
        let models = centipede_models(n);
        let e = efr(&form, &models, cfg()).unwrap();
        let b = backward(&form, &models, cfg()).unwrap();
        let (eo, bo) = (labels(&form, &e.outcomes(&form)), labels(&form, &b.outcomes(&form)));
        let f2 = root_names(&form, &e, 1);
        ok &= eo == set(&["D1", "A1.d", "A1.a.D2"]) && bo == set(&["D1"]) && f2 == set(&["a", "d"]);
        detail.push(format!("n={n}: efr {eo:?} br {bo:?} F2 {f2:?}"));
    }
    verdict(2, ok, &detail.join("; "));
}

#[test]
fn criterion_03_ascribed_reachability() {
    let form = centipede_form();
    let reach = |models: &[SubjectiveModel]| -> BTreeSet<String> {
        let e = efr(&form, models, cfg()).unwrap();
        let w = e.ascribed_correspondence(e.root(1), 1);
        reachable_under(&form, &w, 1).nodes.iter().map(|&h| form.history_name(h)).collect()
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1, 10, 100] {
        let r = reach(&centipede_models(n));
        ok &= r == set(&["h0"]);
        detail.push(format!("n={n}: {r:?}"));
    }
    let r = reach(&centipede_limit_models());
    ok &= r == set(&["h0", "A1"]);
    detail.push(format!("limit: {r:?}"));
    verdict(3, ok, &detail.join("; "));
}

#[test]
fn criterion_04_no_unique_selection() {
    let form = centipede_form();
    let a = form.strategy_by_name(1, "a").unwrap();
    let mix = backward(&form, &two_state_models("t1_theta2", "t2_mix"), cfg()).unwrap();
    let cb = backward(&form, &two_state_models("t1_theta1", "t2_cb1"), cfg()).unwrap();
    let (bm, bc) = (root_names(&form, &mix, 1), root_names(&form, &cb, 1));
    let mut ok = bm == set(&["a"]) && bc == set(&["a", "d"]);
    let mut detail = vec![format!("even split {bm:?}, common belief {bc:?}")];
    for p1 in ["t1_theta1", "t1_theta2"] {
        let bench = two_state_models(p1, "t2_cb1");
        let mut family: Vec<(String, Vec<SubjectiveModel>)> = Vec::new();
        for k in 1..=3 {
            family.push((format!("graft k={k}"), graft_models(&form, &bench, k).unwrap()));
        }
        for n in [1, 10] {
            family.push((format!("tie-break n={n}"), tie_break_models(&form, &bench, n).unwrap()));
        }
        for (name, models) in family {
            let b = backward(&form, &models, cfg()).unwrap();
            let has = b.root_set(1).contains(&a);
            ok &= has;
            if !has {
                detail.push(format!("{p1} {name}: B2 {:?}", root_names(&form, &b, 1)));
            }
        }
    }
    detail.push("a in B2 across graft k=1..3 and tie-break n=1,10".into());
    verdict(4, ok, &detail.join("; "));
}

#[test]
fn criterion_05_concepts_coincide_on_tie_break_models() {
    let form = centipede_form();
    let benchmarks = [
        ("centipede", centipede_limit_models()),
        ("two_state theta1", two_state_models("t1_theta1", "t2_cb1")),
        ("two_state theta2", two_state_models("t1_theta2", "t2_cb1")),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    let (mut mismatched, mut nodes) = (0, 0);
    for (bench_name, bench) in &benchmarks {
        for n in [1, 10] {
            let models = tie_break_models(&form, bench, n).unwrap();
            let rich = is_rich(&form, models[0].structure.level1()).rich;
            let e = efr(&form, &models, cfg()).unwrap();
            let b = backward(&form, &models, cfg()).unwrap();
            let s = strict_efr(&form, &models, cfg()).unwrap();
            let i = icr(&form, &models, cfg()).unwrap();
            let strict = s.outcome_class_closure(&form);
            nodes += e.closure.nodes.len();
            for node in 0..e.closure.nodes.len() {
                let p = e.closure.nodes[node].player;
                let sets = [&e.final_sets()[node], &b.final_sets()[node], &strict[node], &i.final_sets()[node]];
                if sets.iter().any(|x| *x != sets[0]) {
                    ok = false;
                    mismatched += 1;
                    if detail.len() >= 4 {
                        continue;
                    }
                    let show: Vec<String> = sets.iter().map(|x| form.strategy_set_name(p, x)).collect();
                    detail.push(format!(
                        "{bench_name} n={n} (rich={rich}) {}: efr {} br {} strict {} icr {}",
                        e.closure.node_label(node),
                        show[0],
                        show[1],
                        show[2],
                        show[3]
                    ));
                }
            }
        }
    }
    if ok {
        detail.push("all per-type sets agree".into());
    } else {
        detail.push(format!("{mismatched} of {nodes} model nodes disagree"));
    }
    verdict(5, ok, &detail.join("; "));
}

fn spec(label: &str, player: usize, payoff: &str, belief: &[(&str, Rational)]) -> TypeSpec {
    TypeSpec {
        label: label.into(),
        player,
        payoff_type: payoff.into(),
        belief: belief.iter().map(|(t, p)| ("w".to_string(), vec![t.to_string()], p.clone())).collect(),
    }
}

/// Root sets for each `(P1 root, P2 root)` pair of one type structure.
fn root_sets(
    form: &ExtensiveForm,
    ups: &Arc<StandardPayoffStructure>,
    ts: &Arc<TypeStructure>,
    roots: [&str; 2],
    solve: fn(&ExtensiveForm, &[SubjectiveModel], SolverConfig) -> Result<SolutionTrace, rationalizer_core::solver::SolveError>,
) -> [BTreeSet<usize>; 2] {
    let models = standard_models(ups.clone(), ts.clone(), &roots).unwrap();
    let t = solve(form, &models, cfg()).unwrap();
    [t.root_set(0).clone(), t.root_set(1).clone()]
}

fn intersect(sets: &[BTreeSet<usize>]) -> BTreeSet<usize> {
    let mut it = sets.iter();
    let first = it.next().cloned().unwrap_or_default();
    it.fold(first, |acc, s| acc.intersection(s).copied().collect())
}

#[test]
fn criterion_06_upper_hemicontinuity() {
    let form = centipede_form();
    let ms = [2i64, 4, 8, 16, 32];
    let mut ok = true;
    let mut detail = Vec::new();

    // Two-state structure: P2 types converging to common belief in theta1, P1 types of theta2
    // converging to certainty of the theta2 believer.
    let ups = Arc::new(two_state_structure());
    let mut specs = two_state_types().specs();
    for &m in &ms {
        let (near, far) = (one() - ratio(1, m), ratio(1, m));
        specs.push(spec(&format!("t2^{m}"), 1, "p2", &[("t1_theta1", near.clone()), ("t1_theta2", far.clone())]));
        specs.push(spec(&format!("t1^{m}"), 0, "theta2", &[("t2_cb2", near), ("t2_mix", far)]));
    }
    let ts = Arc::new(TypeStructure::new(2, specs).unwrap());
    let families = [("two_state", ups, ts, ["t1_theta2", "t2_cb1"])];

    // Tie-break centipede: types converging to the original types from tie-break alternatives.
    let tb = Arc::new(tie_break(&form, &centipede_family(None, Sign::Plus), 10).unwrap());
    let alt1 = tie_break_label(&form, 0, "p1", form.strategy_by_name(0, "A1.A2").unwrap(), 10);
    let alt2 = tie_break_label(&form, 1, "p2", form.strategy_by_name(1, "a").unwrap(), 10);
    let mut specs = vec![
        spec("t1", 0, "p1", &[("t2", one())]),
        spec("t2", 1, "p2", &[("t1", one())]),
        spec("t1'", 0, &alt1, &[("t2", one())]),
        spec("t2'", 1, &alt2, &[("t1", one())]),
    ];
    for &m in &ms {
        let (near, far) = (one() - ratio(1, m), ratio(1, m));
        specs.push(spec(&format!("t1^{m}"), 0, "p1", &[("t2", near.clone()), ("t2'", far.clone())]));
        specs.push(spec(&format!("t2^{m}"), 1, "p2", &[("t1", near), ("t1'", far)]));
    }
    let ts = Arc::new(TypeStructure::new(2, specs).unwrap());
    let families = [families[0].clone(), ("tie_break centipede", tb, ts, ["t1", "t2"])];

    for (name, ups, ts, limit) in &families {
        let at_limit = root_sets(&form, ups, ts, *limit, efr);
        let mut along: [Vec<BTreeSet<usize>>; 2] = [Vec::new(), Vec::new()];
        for &m in &ms {
            let (r1, r2) = (format!("t1^{m}"), format!("t2^{m}"));
            let s = root_sets(&form, ups, ts, [&r1, &r2], efr);
            along[0].push(s[0].clone());
            along[1].push(s[1].clone());
        }
        for p in 0..2 {
            let common = intersect(&along[p]);
            let holds = common.is_subset(&at_limit[p]);
            ok &= holds;
            detail.push(format!(
                "{name} P{}: common {} within limit {}",
                p + 1,
                form.strategy_set_name(p, &common),
                form.strategy_set_name(p, &at_limit[p])
            ));
        }
    }

    // Backward rationalizability along the centipede model sequence.
    let limit = backward(&form, &centipede_limit_models(), cfg()).unwrap();
    let seq: Vec<SolutionTrace> = [1, 10, 100].iter().map(|&n| backward(&form, &centipede_models(n), cfg()).unwrap()).collect();
    for p in 0..2 {
        let common = intersect(&seq.iter().map(|t| t.root_set(p).clone()).collect::<Vec<_>>());
        ok &= common.is_subset(limit.root_set(p));
        detail.push(format!(
            "br centipede P{}: common {} within limit {}",
            p + 1,
            form.strategy_set_name(p, &common),
            form.strategy_set_name(p, limit.root_set(p))
        ));
    }
    verdict(6, ok, &detail.join("; "));
}

fn approx(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[test]
fn criterion_07_unique_selection_table() {
    let form = centipede_form();
    let benchmarks = [
        ("centipede", centipede_limit_models()),
        ("two_state theta1/cb1", two_state_models("t1_theta1", "t2_cb1")),
        ("two_state theta2/cb1", two_state_models("t1_theta2", "t2_cb1")),
        ("two_state theta2/mix", two_state_models("t1_theta2", "t2_mix")),
        ("centipede tie-break 1", tie_break_models(&form, &centipede_limit_models(), 1).unwrap()),
    ];
    let mut ok = true;
    let mut table = vec![format!("{:<22} {:<9} {:<12} {:>3} {:>10} {}", "benchmark", "outcome", "target", "n", "distance", "efr outcomes")];
    for (name, bench) in &benchmarks {
        let e = efr(&form, bench, cfg()).unwrap();
        for z in e.outcomes(&form) {
            let target = e
                .root_set(0)
                .iter()
                .flat_map(|&s1| e.root_set(1).iter().map(move |&s2| [s1, s2]))
                .find(|prof| form.outcome(prof, ROOT) == z)
                .unwrap();
            let tname = format!("{},{}", form.strategy_name(0, target[0]), form.strategy_name(1, target[1]));
            let mut last: Option<Rational> = None;
            for n in [1, 10] {
                let models = selection_models(&form, bench, &target, n).unwrap();
                let d = model_distance(&models, bench).unwrap();
                let out = efr(&form, &models, cfg()).unwrap().outcomes(&form);
                let single = out == BTreeSet::from([z]);
                let decreasing = last.as_ref().is_none_or(|l| d < *l);
                ok &= single && decreasing;
                table.push(format!(
                    "{:<22} {:<9} {:<12} {:>3} {:>10.6} {:?}{}",
                    name,
                    form.terminal_label(z),
                    tname,
                    n,
                    approx(&d),
                    labels(&form, &out),
                    if single && decreasing { "" } else { "  <- fails" }
                ));
                last = Some(d);
            }
        }
    }
    println!("{}", table.join("\n"));
    verdict(7, ok, "selection sequences single out every benchmark outcome");
}

/// Restriction families used against the oracle: per domain history, none, "not the first
/// opponent profile", or "only the last opponent profile".
fn restriction_choices(ctx: &ModelContext) -> Vec<Option<BTreeSet<Atom>>> {
    let first = ctx.opponent_profiles.first().cloned();
    let last = ctx.opponent_profiles.last().cloned();
    let pick = |keep: &dyn Fn(&Atom) -> bool| -> BTreeSet<Atom> { ctx.atoms.iter().filter(|a| keep(a)).cloned().collect() };
    vec![
        None,
        Some(pick(&|a| Some(&a.strategies) != first.as_ref())),
        Some(pick(&|a| Some(&a.strategies) == last.as_ref())),
    ]
}

fn witness_holds(ctx: &ModelContext, s: usize, spec: &RestrictionSpec, mode: Mode, cps: &rationalizer_core::Cps) -> Result<(), String> {
    let problems = ctx.validate_cps(cps);
    if !problems.is_empty() {
        return Err(format!("invalid cps: {problems:?}"));
    }
    for (h, r) in &spec.per_history {
        if mode == Mode::ExAnte && *h != ROOT {
            continue;
        }
        if let (Restriction::Prob1(g), Some(b)) = (r, cps.belief(*h)) {
            if b.iter().any(|(a, p)| !g.contains(a) && *p > Rational::from_integer(0.into())) {
                return Err(format!("restriction broken at {}", ctx.form.history_name(*h)));
            }
        }
    }
    let form = ctx.form;
    let p = ctx.player;
    let optimal_at = |h| -> bool {
        let b = cps.belief(h).unwrap();
        let u = ctx.expected_utility(b, s, h).unwrap();
        (0..form.num_strategies(p)).all(|t| ctx.expected_utility(b, t, h).unwrap() <= u)
    };
    let ok = match mode {
        Mode::Weak => ctx.best_responses(cps).unwrap().contains(&s),
        Mode::Strict => ctx.best_responses(cps).unwrap() == form.equivalence_classes(p, s, None),
        Mode::Sequential => ctx.domain.iter().all(|&h| optimal_at(h)),
        Mode::ExAnte => optimal_at(ROOT),
    };
    if ok {
        Ok(())
    } else {
        Err("witness does not justify the strategy".into())
    }
}

#[test]
fn criterion_08_kernel_matches_oracle() {
    let modes = [Mode::Weak, Mode::Strict, Mode::Sequential, Mode::ExAnte];
    let mut queries = 0usize;
    let mut mismatches = Vec::new();
    let cases = micro_cases();
    for case in &cases {
        for model in &case.models {
            let ctx = ModelContext::new(&case.form, model);
            let oracle = Oracle::new(&ctx);
            let choices = restriction_choices(&ctx);
            let positions = ctx.domain.len();
            let combos = choices.len().pow(positions as u32);
            for combo in 0..combos {
                let mut spec = RestrictionSpec::default();
                let mut masks = BTreeMap::new();
                let mut code = combo;
                for pos in 0..positions {
                    if let Some(g) = &choices[code % choices.len()] {
                        let h = ctx.domain[pos];
                        spec.per_history.insert(h, Restriction::Prob1(g.clone()));
                        masks.insert(h, ctx.atoms.iter().map(|a| g.contains(a)).collect::<Vec<bool>>());
                    }
                    code /= choices.len();
                }
                for s in 0..case.form.num_strategies(ctx.player) {
                    for mode in modes {
                        queries += 1;
                        let expected = oracle.justifiable(s, &masks, mode);
                        if ctx.atoms.len() <= 8 && expected != oracle.justifiable_by_supports(s, &masks, mode) {
                            mismatches.push(format!("{} P{} s={s} {mode:?}: oracle routes disagree", case.name, ctx.player + 1));
                        }
                        let got = match justifiable(&ctx, s, &spec, mode) {
                            Ok(Some(cps)) => match witness_holds(&ctx, s, &spec, mode, &cps) {
                                Ok(()) => true,
                                Err(e) => {
                                    mismatches.push(format!("{} P{} s={s} {mode:?}: {e}", case.name, ctx.player + 1));
                                    continue;
                                }
                            },
                            Ok(None) => false,
                            Err(KernelError::Inadmissible(_)) => {
                                // Some restricted history has no reachable atom left: nothing can justify.
                                if mode != Mode::ExAnte && expected {
                                    mismatches.push(format!("{} P{} s={s} {mode:?}: inadmissible but oracle feasible", case.name, ctx.player + 1));
                                }
                                continue;
                            }
                            Err(e) => panic!("{e}"),
                        };
                        if got != expected {
                            mismatches.push(format!(
                                "{} P{} s={} {mode:?} combo {combo}: kernel {got}, oracle {expected}",
                                case.name,
                                ctx.player + 1,
                                case.form.strategy_name(ctx.player, s)
                            ));
                        }
                    }
                }
            }
        }
    }
    for m in mismatches.iter().take(10) {
        println!("  {m}");
    }
    verdict(
        8,
        mismatches.is_empty(),
        &format!("{queries} queries over {} micro-games, {} disagreements", cases.len(), mismatches.len()),
    );
}

#[test]
fn criterion_09_metric_laws() {
    let mut ok = true;
    for n in 1..=10u64 {
        let plus = centipede_family(Some(n), Sign::Plus).canonicalize();
        let minus = centipede_family(Some(n), Sign::Minus).canonicalize();
        let limit = centipede_family(None, Sign::Plus).canonicalize();
        ok &= hausdorff_distance(&plus, &minus).unwrap() == ratio(2, n as i64);
        ok &= hausdorff_distance(&plus, &limit).unwrap() == ratio(1, n as i64);
        ok &= hausdorff_distance(&minus, &limit).unwrap() == ratio(1, n as i64);
    }
    let form = centipede_form();
    let limit = centipede_family(None, Sign::Plus);
    let mut pool = vec![limit.clone(), two_state_structure(), default_rich_structure(&form)];
    for n in [1, 2, 3, 7] {
        pool.push(centipede_family(Some(n), Sign::Plus));
        pool.push(centipede_family(Some(n), Sign::Minus));
    }
    pool.push(tie_break(&form, &limit, 2).unwrap());
    pool.push(rich_extension(&form, &two_state_structure()).unwrap());
    pool.push(tie_break(&form, &two_state_structure(), 3).unwrap());
    let reps: Vec<_> = pool.iter().map(|s| s.canonicalize()).collect();
    let d = pairwise(reps.len(), |a, b| hausdorff_distance(&reps[a], &reps[b]).unwrap());
    ok &= pseudometric(&d);
    let triples = reps.len().pow(3);
    let limit_models = centipede_limit_models();
    let (d1d2, d) = (form.strategy_by_name(0, "D1.D2").unwrap(), form.strategy_by_name(1, "d").unwrap());
    let models = [
        centipede_limit_models(),
        centipede_models(1),
        centipede_models(10),
        centipede_models(100),
        selection_models(&form, &limit_models, &[d1d2, d], 1).unwrap(),
        selection_models(&form, &limit_models, &[d1d2, d], 3).unwrap(),
    ];
    let md = pairwise(models.len(), |a, b| model_distance(&models[a], &models[b]).unwrap());
    ok &= pseudometric(&md);
    let model_triples = models.len().pow(3);
    verdict(9, ok, &format!("2/n and 1/n exact for n=1..10; axioms on {triples} structure and {model_triples} model triples"));
}

fn pairwise(n: usize, f: impl Fn(usize, usize) -> Rational) -> Vec<Vec<Rational>> {
    (0..n).map(|a| (0..n).map(|b| f(a, b)).collect()).collect()
}

fn pseudometric(d: &[Vec<Rational>]) -> bool {
    let n = d.len();
    (0..n).all(|a| d[a][a] == int(0))
        && (0..n).all(|a| (0..n).all(|b| d[a][b] == d[b][a] && d[a][b] >= int(0)))
        && (0..n).all(|a| (0..n).all(|b| (0..n).all(|c| d[a][c] <= &d[a][b] + &d[b][c])))
}

fn scenario_files() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_thread_count_determinism() {
    let run = |threads: &str, file: &PathBuf| -> Vec<u8> {
        let out = Command::new(env!("CARGO_BIN_EXE_rationalizer"))
            .env("RATIONALIZER_THREADS", threads)
            .arg("solve")
            .arg("--scenario")
            .arg(file)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}: {}", file.display(), String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let files = scenario_files();
    let mut ok = !files.is_empty();
    for f in &files {
        ok &= run("1", f) == run("8", f);
    }
    verdict(10, ok, &format!("{} scenarios byte-identical with 1 and 8 threads", files.len()));
}
