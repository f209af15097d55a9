//! Benchmark games and perturbation generators.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::conjecture::Belief;
use crate::epistemic::{
    standard_models, EpistemicError, SubjectiveModel, SubjectiveStructure, TypeId, TypeSpec, TypeStructure,
};
use crate::game::{ExtensiveForm, PlayerId, StrategyId, TreeSpec, ROOT};
use crate::payoff::{is_rich, PayoffError, PayoffState, StandardPayoffStructure};
use crate::rational::{int, one, ratio, zero, Rational};
use crate::solver::{efr, SolveError, SolverConfig};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("tie-break parameter must be at least 1")]
    BadParameter,
    #[error("structure `{0}` is not rich")]
    NotRich(String),
    #[error("`{rich}` does not extend `{base}`: {reason}")]
    NotAnExtension { base: String, rich: String, reason: String },
    #[error("benchmark models must be standard (common knowledge of one structure)")]
    NotStandard,
    #[error("target strategy {strategy} of player {player} is not extensive-form rationalizable")]
    TargetNotRationalizable { player: PlayerId, strategy: String },
    #[error(transparent)]
    Payoff(#[from] PayoffError),
    #[error(transparent)]
    Epistemic(#[from] EpistemicError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// The three-stage centipede: P1 chooses D1/A1, P2 d/a, P1 D2/A2.
pub fn centipede_form() -> ExtensiveForm {
    let last = TreeSpec::single(0, vec![("D2", TreeSpec::terminal("A1.a.D2")), ("A2", TreeSpec::terminal("A1.a.A2"))]);
    let middle = TreeSpec::single(1, vec![("d", TreeSpec::terminal("A1.d")), ("a", last)]);
    let tree = TreeSpec::single(0, vec![("D1", TreeSpec::terminal("D1")), ("A1", middle)]);
    ExtensiveForm::new(strings(&["P1", "P2"]), &tree).expect("static tree")
}

/// `Θ^{(n,±)}`; `n = None` gives the limit structure.
pub fn centipede_family(n: Option<u64>, sign: Sign) -> StandardPayoffStructure {
    let d1 = match n {
        None => int(2),
        Some(n) => {
            let e = ratio(1, n as i64);
            match sign {
                Sign::Plus => int(2) + e,
                Sign::Minus => int(2) - e,
            }
        }
    };
    let name = match (n, sign) {
        (None, _) => "theta".to_string(),
        (Some(n), Sign::Plus) => format!("theta({n},+)"),
        (Some(n), Sign::Minus) => format!("theta({n},-)"),
    };
    // Terminal order: D1, A1.d, A1.a.D2, A1.a.A2.
    let rows = [[d1, int(0), int(2), int(1)], [int(0), int(0), int(-1), int(1)]];
    StandardPayoffStructure::from_fn(&name, strings(&["w"]), vec![strings(&["p1"]), strings(&["p2"])], 4, |p, z, _| {
        rows[p][z].clone()
    })
    .expect("static structure")
}

/// `t1` and `t2`, each certain of the other and of the single nature state.
pub fn centipede_types() -> TypeStructure {
    TypeStructure::new(
        2,
        vec![
            TypeSpec::new("t1", 0, "p1", vec![("w", vec!["t2"], int(1))]),
            TypeSpec::new("t2", 1, "p2", vec![("w", vec!["t1"], int(1))]),
        ],
    )
    .expect("static types")
}

/// `(M₁ⁿ, M₂ⁿ)`: P1 holds `Θ^{(n,−)}` and ascribes common knowledge of `Θ^{(n,+)}`; P2 holds the latter.
pub fn centipede_models(n: u64) -> Vec<SubjectiveModel> {
    let plus = Arc::new(centipede_family(Some(n), Sign::Plus));
    let minus = Arc::new(centipede_family(Some(n), Sign::Minus));
    let types = Arc::new(centipede_types());
    let d2 = SubjectiveStructure::common_knowledge(1, plus.clone());
    let d1 = SubjectiveStructure::ascribing(0, minus, vec![SubjectiveStructure::common_knowledge(1, plus)])
        .expect("static hierarchy");
    vec![
        SubjectiveModel::new(d1, types.clone(), 0).expect("consistent"),
        SubjectiveModel::new(d2, types, 1).expect("consistent"),
    ]
}

pub fn centipede_limit_models() -> Vec<SubjectiveModel> {
    standard_models(Arc::new(centipede_family(None, Sign::Plus)), Arc::new(centipede_types()), &["t1", "t2"])
        .expect("static models")
}

/// The two-state game: P1 knows whether the state is `θ1` or `θ2`, P2 never does.
pub fn two_state_structure() -> StandardPayoffStructure {
    let theta1 = [[4, 3, 0, 2], [4, 3, 0, 2]];
    let theta2 = [[0, 3, 1, 2], [0, 0, 1, 2]];
    StandardPayoffStructure::from_fn(
        "two_state",
        strings(&["w"]),
        vec![strings(&["theta1", "theta2"]), strings(&["p2"])],
        4,
        |p, z, st| int(if st.types[0] == 0 { theta1[p][z] } else { theta2[p][z] }),
    )
    .expect("static structure")
}

/// P1 types per state, P2 types certain of `θ1`, certain of `θ2`, or splitting evenly.
pub fn two_state_types() -> TypeStructure {
    TypeStructure::new(
        2,
        vec![
            TypeSpec::new("t1_theta1", 0, "theta1", vec![("w", vec!["t2_cb1"], int(1))]),
            TypeSpec::new("t1_theta2", 0, "theta2", vec![("w", vec!["t2_cb2"], int(1))]),
            TypeSpec::new("t2_cb1", 1, "p2", vec![("w", vec!["t1_theta1"], int(1))]),
            TypeSpec::new("t2_cb2", 1, "p2", vec![("w", vec!["t1_theta2"], int(1))]),
            TypeSpec::new(
                "t2_mix",
                1,
                "p2",
                vec![("w", vec!["t1_theta1"], ratio(1, 2)), ("w", vec!["t1_theta2"], ratio(1, 2))],
            ),
        ],
    )
    .expect("static types")
}

/// Standard model over the two-state structure with the given root types.
pub fn two_state_models(p1: &str, p2: &str) -> Vec<SubjectiveModel> {
    standard_models(Arc::new(two_state_structure()), Arc::new(two_state_types()), &[p1, p2]).expect("static models")
}

/// Label of the tie-break type `θⁿ(sᵢ, θᵢ)`.
pub fn tie_break_label(form: &ExtensiveForm, player: PlayerId, theta: &str, s: StrategyId, n: u64) -> String {
    format!("{theta}^{n}[{}]", form.strategy_name(player, s))
}

/// Label of the dominance type added by [`rich_extension`].
pub fn dominance_label(form: &ExtensiveForm, player: PlayerId, theta: &str, s: StrategyId) -> String {
    format!("{theta}*[{}]", form.strategy_name(player, s))
}

/// Adds, per player and type, derived types indexed by strategy; utilities at a derived type are
/// `own(z, base utility)` for its owner and the base type's utilities for everyone else.
fn extend_types(
    form: &ExtensiveForm,
    base: &StandardPayoffStructure,
    name: &str,
    label: impl Fn(PlayerId, &str, StrategyId) -> String,
    own: impl Fn(PlayerId, StrategyId, usize, &Rational) -> Rational,
) -> Result<StandardPayoffStructure, PayoffError> {
    let np = base.num_players();
    // origin[p][k] = (base type, Some(strategy) for derived types)
    let mut origin: Vec<Vec<(usize, Option<StrategyId>)>> = Vec::new();
    let mut labels: Vec<Vec<String>> = Vec::new();
    for p in 0..np {
        let mut o: Vec<(usize, Option<StrategyId>)> = (0..base.types(p).len()).map(|t| (t, None)).collect();
        let mut l: Vec<String> = base.types(p).to_vec();
        for (t, theta) in base.types(p).iter().enumerate() {
            for s in 0..form.num_strategies(p) {
                // A label already present names the same construction applied earlier.
                let name = label(p, theta, s);
                if !l.contains(&name) {
                    o.push((t, Some(s)));
                    l.push(name);
                }
            }
        }
        origin.push(o);
        labels.push(l);
    }
    let bases = origin.iter().enumerate().map(|(p, o)| o.iter().map(|&(t, _)| base.base_type(p, t)).collect()).collect();
    let s = StandardPayoffStructure::from_fn(name, base.nature().to_vec(), labels, base.num_terminals(), |p, z, st| {
        let base_state = PayoffState {
            nature: st.nature,
            types: st.types.iter().enumerate().map(|(q, &t)| origin[q][t].0).collect(),
        };
        let u = base.utility(p, z, base.state_index(&base_state));
        match origin[p][st.types[p]].1 {
            None => u.clone(),
            Some(s) => own(p, s, z, u),
        }
    })?;
    Ok(s.with_base_types(bases))
}

fn consistent_terminal(form: &ExtensiveForm, player: PlayerId, s: StrategyId, z: usize) -> bool {
    form.consistent_with(player, s, form.terminals()[z])
}

/// `Υⁿ`: keeps every type and adds `θⁿ(sᵢ, θᵢ)` with a `1/n` bonus on `sᵢ`-consistent terminals.
pub fn tie_break(form: &ExtensiveForm, base: &StandardPayoffStructure, n: u64) -> Result<StandardPayoffStructure, PerturbError> {
    if n == 0 {
        return Err(PerturbError::BadParameter);
    }
    let bonus = ratio(1, n as i64);
    Ok(extend_types(
        form,
        base,
        &format!("{}^tb{n}", base.name()),
        |p, theta, s| tie_break_label(form, p, theta, s, n),
        |p, s, z, u| if consistent_terminal(form, p, s, z) { u + &bonus } else { u.clone() },
    )?)
}

/// `base` plus, per `(i, θᵢ, sᵢ)`, a type for which `sᵢ` is conditionally dominant (utility 1 on
/// `sᵢ`-consistent terminals, 0 elsewhere) and which opponents cannot tell apart from `θᵢ`.
pub fn rich_extension(form: &ExtensiveForm, base: &StandardPayoffStructure) -> Result<StandardPayoffStructure, PerturbError> {
    Ok(extend_types(
        form,
        base,
        &format!("{}*", base.name()),
        |p, theta, s| dominance_label(form, p, theta, s),
        |p, s, z, _| if consistent_terminal(form, p, s, z) { one() } else { zero() },
    )?)
}

/// One payoff type per (player, strategy) with utility 1 on that strategy's terminals and 0
/// elsewhere; a single nature state.
pub fn default_rich_structure(form: &ExtensiveForm) -> StandardPayoffStructure {
    let types: Vec<Vec<String>> = (0..form.num_players())
        .map(|p| (0..form.num_strategies(p)).map(|s| format!("r[{}]", form.strategy_name(p, s))).collect())
        .collect();
    StandardPayoffStructure::from_fn("default_rich", strings(&["w"]), types, form.num_terminals(), |p, z, st| {
        if consistent_terminal(form, p, st.types[p], z) {
            one()
        } else {
            zero()
        }
    })
    .expect("non-empty strategy sets")
}

/// `rich` restricted so that `player` keeps only the types it has in `base`.
fn restrict_owner(
    base: &StandardPayoffStructure,
    rich: &StandardPayoffStructure,
    player: PlayerId,
) -> Result<StandardPayoffStructure, PerturbError> {
    let not_ext = |reason: String| PerturbError::NotAnExtension { base: base.name().into(), rich: rich.name().into(), reason };
    if base.nature() != rich.nature() {
        return Err(not_ext("nature states differ".into()));
    }
    let mut keep: Vec<Vec<usize>> = Vec::new();
    for p in 0..rich.num_players() {
        if p == player {
            let idx = base
                .types(p)
                .iter()
                .map(|l| rich.type_index(p, l).ok_or_else(|| not_ext(format!("missing type `{l}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            keep.push(idx);
        } else {
            keep.push((0..rich.types(p).len()).collect());
        }
    }
    let labels: Vec<Vec<String>> =
        keep.iter().enumerate().map(|(p, ks)| ks.iter().map(|&k| rich.types(p)[k].clone()).collect()).collect();
    Ok(StandardPayoffStructure::from_fn(
        &format!("{}|{}", rich.name(), player),
        rich.nature().to_vec(),
        labels,
        rich.num_terminals(),
        |p, z, st| {
            let full =
                PayoffState { nature: st.nature, types: st.types.iter().enumerate().map(|(q, &t)| keep[q][t]).collect() };
            rich.utility(p, z, rich.state_index(&full)).clone()
        },
    )?)
}

/// `dᵏ(Υ)` for every player: `d⁰ = ` common knowledge of `Υ*`; `d¹` holds `Υ*` restricted to the
/// owner's `Υ` types and ascribes `d⁰`; `dᵐ` holds `Υ` and ascribes `dᵐ⁻¹`.
pub fn richness_graft_profile(
    form: &ExtensiveForm,
    base: &StandardPayoffStructure,
    rich: &StandardPayoffStructure,
    k: usize,
) -> Result<Vec<Arc<SubjectiveStructure>>, PerturbError> {
    if !is_rich(form, rich).rich {
        return Err(PerturbError::NotRich(rich.name().into()));
    }
    let np = base.num_players();
    let rich = Arc::new(rich.clone());
    let base = Arc::new(base.clone());
    let mut level: Vec<Arc<SubjectiveStructure>> =
        (0..np).map(|p| SubjectiveStructure::common_knowledge(p, rich.clone())).collect();
    for m in 1..=k {
        let mut next = Vec::with_capacity(np);
        for p in 0..np {
            let l1 = if m == 1 { Arc::new(restrict_owner(&base, &rich, p)?) } else { base.clone() };
            let asc = (0..np).filter(|&j| j != p).map(|j| level[j].clone()).collect();
            next.push(SubjectiveStructure::ascribing(p, l1, asc)?);
        }
        level = next;
    }
    for d in &level {
        let v = d.validate();
        if !v.is_empty() {
            return Err(PerturbError::NotAnExtension {
                base: base.name().into(),
                rich: rich.name().into(),
                reason: v.join("; "),
            });
        }
    }
    Ok(level)
}

pub fn richness_graft(
    form: &ExtensiveForm,
    base: &StandardPayoffStructure,
    rich: &StandardPayoffStructure,
    k: usize,
    player: PlayerId,
) -> Result<Arc<SubjectiveStructure>, PerturbError> {
    Ok(richness_graft_profile(form, base, rich, k)?.swap_remove(player))
}

/// `types` plus one type for every payoff type of `structure` that no existing type carries; each
/// new type is certain of the first nature state and of the opponents' `anchors`.
pub fn augmented_types(
    types: &TypeStructure,
    structure: &StandardPayoffStructure,
    anchors: &[&str],
) -> Result<TypeStructure, PerturbError> {
    let mut specs = types.specs();
    let used: BTreeSet<(PlayerId, String)> = types.types().iter().map(|t| (t.player, t.payoff_type.clone())).collect();
    let nature = structure.nature()[0].clone();
    for p in 0..structure.num_players() {
        for theta in structure.types(p) {
            if used.contains(&(p, theta.clone())) {
                continue;
            }
            let opp: Vec<String> =
                (0..structure.num_players()).filter(|&j| j != p).map(|j| anchors[j].to_string()).collect();
            specs.push(TypeSpec {
                label: theta.clone(),
                player: p,
                payoff_type: theta.clone(),
                belief: vec![(nature.clone(), opp, one())],
            });
        }
    }
    Ok(TypeStructure::new(types.num_players(), specs)?)
}

/// Standard models over `tie_break(Υ, n)` with every new payoff type instantiated by
/// [`augmented_types`] around the benchmark's root types.
pub fn tie_break_models(form: &ExtensiveForm, benchmark: &[SubjectiveModel], n: u64) -> Result<Vec<SubjectiveModel>, PerturbError> {
    let base = standard_level1(benchmark)?;
    let tb = Arc::new(tie_break(form, &base, n)?);
    let anchors: Vec<&str> = benchmark.iter().map(|m| m.root_label()).collect();
    let types = Arc::new(augmented_types(&benchmark[0].types, &tb, &anchors)?);
    Ok(standard_models(tb, types, &anchors)?)
}

/// Graft of depth `k` under the benchmark's structure with `rich_extension` as the rich bottom.
pub fn graft_models(form: &ExtensiveForm, benchmark: &[SubjectiveModel], k: usize) -> Result<Vec<SubjectiveModel>, PerturbError> {
    let base = standard_level1(benchmark)?;
    let rich = rich_extension(form, &base)?;
    let structures = richness_graft_profile(form, &base, &rich, k)?;
    let anchors: Vec<&str> = benchmark.iter().map(|m| m.root_label()).collect();
    let types = Arc::new(augmented_types(&benchmark[0].types, &rich, &anchors)?);
    structures
        .into_iter()
        .zip(benchmark)
        .map(|(d, m)| Ok(SubjectiveModel::new(d, types.clone(), types.id(m.root_label()).unwrap())?))
        .collect()
}

fn standard_level1(models: &[SubjectiveModel]) -> Result<StandardPayoffStructure, PerturbError> {
    let l1 = models[0].structure.level1();
    if models.iter().any(|m| !m.structure.is_common_knowledge() || m.structure.level1() != l1) {
        return Err(PerturbError::NotStandard);
    }
    Ok((**l1).clone())
}

/// Perturbed model profile singling out the outcome of `target` (one strategy per player).
///
/// The structure is a depth-`n` graft of `tie_break(Υ, n)` over its rich extension. Types are
/// built from the benchmark's extensive-form rationalizability witnesses. The depth-`m` type for
/// a surviving pair `(sᵢ, tᵢ)` carries the tie-break payoff type `θⁿ(sᵢ, θᵢ)` of `tᵢ`; its
/// initial belief is the witness's initial belief mixed with weight `εʳ` (`ε = 1/(100n)`, `r` the
/// rank of the history) with the witness's belief at every restart history whose support lies
/// on surviving pairs, each opponent pair replaced by its depth-`m−1` type. Bayes' rule then fixes
/// the conjecture wherever surviving opponents can lead, and the tie-break bonus makes `sᵢ`'s
/// outcome class the only sequential best response there. Depth-0 types carry the dominance payoff
/// type of their strategy.
pub fn selection_models(
    form: &ExtensiveForm,
    benchmark: &[SubjectiveModel],
    target: &[StrategyId],
    n: u64,
) -> Result<Vec<SubjectiveModel>, PerturbError> {
    if n == 0 {
        return Err(PerturbError::BadParameter);
    }
    let base = standard_level1(benchmark)?;
    let trace = efr(form, benchmark, SolverConfig::default())?;
    let closure = &trace.closure;
    let types = &closure.types;
    for (p, &s) in target.iter().enumerate() {
        if !trace.root_set(p).contains(&s) {
            return Err(PerturbError::TargetNotRationalizable { player: p, strategy: form.strategy_name(p, s) });
        }
    }
    let node_of: BTreeMap<TypeId, usize> = (0..closure.nodes.len()).map(|n| (closure.nodes[n].type_id, n)).collect();
    let surviving = |t: TypeId, s: StrategyId| node_of.get(&t).is_some_and(|&node| trace.final_sets()[node].contains(&s));
    let eps = ratio(1, 100 * n as i64);
    type Mixture = BTreeMap<(String, Vec<(StrategyId, TypeId)>), Rational>;
    // Mixed initial belief of each surviving pair over (nature, opponent pairs).
    let witness = |t: TypeId, s: StrategyId| -> Mixture {
        let node = node_of[&t];
        let cps = &trace.stable_witnesses[&(node, s)];
        let ctx = closure.context(form, node);
        let restarts = ctx.scratch_histories(cps);
        let mut components: Vec<&Belief> = vec![&cps.beliefs[&ROOT]];
        for &h in ctx.domain.iter().filter(|&&h| h != ROOT && restarts.contains(h)) {
            let b = &cps.beliefs[&h];
            if b.keys().all(|a| a.strategies.iter().zip(&a.types).all(|(&so, &to)| surviving(to, so))) {
                components.push(b);
            }
        }
        let mut out = Mixture::new();
        let mut rest = one();
        for (r, b) in components.iter().enumerate().rev() {
            let w = if r == 0 { rest.clone() } else { (0..r).fold(one(), |acc, _| acc * &eps) };
            rest -= &w;
            for (a, p) in b.iter() {
                let key = (base.nature()[a.nature].clone(), a.strategies.iter().copied().zip(a.types.iter().copied()).collect());
                *out.entry(key).or_insert_with(zero) += &w * p;
            }
        }
        out
    };
    let tb = tie_break(form, &base, n)?;
    let rich = rich_extension(form, &tb)?;
    let depth = n as usize;
    let structures = richness_graft_profile(form, &tb, &rich, depth)?;
    let label = |t: TypeId, s: StrategyId, m: usize| -> String {
        let p = types.get(t).player;
        format!("{}~{m}[{}]", types.label(t), form.strategy_name(p, s))
    };
    // Pairs reachable from the targets through the mixed beliefs.
    let mut beliefs: BTreeMap<(TypeId, StrategyId), Mixture> = BTreeMap::new();
    let mut stack: Vec<(TypeId, StrategyId)> = benchmark.iter().zip(target).map(|(m, &s)| (m.root, s)).collect();
    while let Some((t, s)) = stack.pop() {
        if beliefs.contains_key(&(t, s)) {
            continue;
        }
        let w = witness(t, s);
        for (_, opp) in w.keys() {
            stack.extend(opp.iter().map(|&(so, to)| (to, so)));
        }
        beliefs.insert((t, s), w);
    }
    let mut specs = Vec::new();
    for m in 0..=depth {
        for (&(t, s), mixture) in &beliefs {
            let def = types.get(t);
            let payoff = if m == 0 {
                dominance_label(form, def.player, &def.payoff_type, s)
            } else {
                tie_break_label(form, def.player, &def.payoff_type, s, n)
            };
            let below = m.saturating_sub(1);
            let mut belief: BTreeMap<(String, Vec<String>), Rational> = BTreeMap::new();
            for ((nature, opp), p) in mixture {
                let key = (nature.clone(), opp.iter().map(|&(so, to)| label(to, so, below)).collect());
                *belief.entry(key).or_insert_with(zero) += p;
            }
            let belief = belief.into_iter().map(|((nature, opp), p)| (nature, opp, p)).collect();
            specs.push(TypeSpec { label: label(t, s, m), player: def.player, payoff_type: payoff, belief });
        }
    }
    let ts = Arc::new(TypeStructure::new(form.num_players(), specs)?);
    structures
        .into_iter()
        .zip(benchmark.iter().zip(target))
        .map(|(d, (m, &s))| {
            let root = ts.id(&label(m.root, s, depth)).unwrap();
            Ok(SubjectiveModel::new(d, ts.clone(), root)?)
        })
        .collect()
}
