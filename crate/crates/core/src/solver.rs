//! Conjecture-feasibility kernel and the iterated solution concepts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::conjecture::{Atom, Belief, Cps, ModelContext};
use crate::epistemic::{consistent_types, EpistemicError, SubjectiveModel, SubjectiveStructure, TypeId, TypeStructure};
use crate::game::{cartesian, ExtensiveForm, HistoryOp, HistorySet, NodeId, PlayerId, StrategyId, ROOT};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::rational::{int, one, zero, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// `sᵢ ∈ rᵢ(μᵢ)`.
    Weak,
    /// `rᵢ(μᵢ) = [sᵢ]`.
    Strict,
    /// Optimal at every history in `Hᵢ ∪ {h⁰}`, reached or not.
    Sequential,
    /// Optimal at `h⁰` against every strategy; only the initial belief matters.
    ExAnte,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Restriction {
    Free,
    /// The belief puts probability one on this set.
    Prob1(BTreeSet<Atom>),
    /// The support lies within this set.
    SupportIn(BTreeSet<Atom>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RestrictionSpec {
    pub per_history: BTreeMap<NodeId, Restriction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("restriction at {0} leaves no admissible belief")]
    Inadmissible(String),
    #[error("history {0} is not in the belief domain")]
    NotInDomain(String),
}

/// Searches for a CPS satisfying `restrictions` under which `s` is a best response in the given
/// mode. Returns a witness, or `None` when no such CPS exists.
pub fn justifiable(
    ctx: &ModelContext,
    s: StrategyId,
    restrictions: &RestrictionSpec,
    mode: Mode,
) -> Result<Option<Cps>, KernelError> {
    let mut allowed: Vec<Option<Vec<bool>>> = vec![None; ctx.domain.len()];
    for (&h, r) in &restrictions.per_history {
        let pos = ctx.position(h).ok_or_else(|| KernelError::NotInDomain(ctx.form.history_name(h)))?;
        let set = match r {
            Restriction::Free => continue,
            Restriction::Prob1(g) | Restriction::SupportIn(g) => g,
        };
        let mask: Vec<bool> = ctx.atoms.iter().map(|a| set.contains(a)).collect();
        if !(0..ctx.atoms.len()).any(|a| mask[a] && ctx.in_support_space(pos, a)) {
            return Err(KernelError::Inadmissible(ctx.form.history_name(h)));
        }
        allowed[pos] = Some(mask);
    }
    Ok(justify(ctx, s, &allowed, mode))
}

/// Kernel on index masks: `allowed[pos]` restricts the support at `domain[pos]`.
pub(crate) fn justify(ctx: &ModelContext, s: StrategyId, allowed: &[Option<Vec<bool>>], mode: Mode) -> Option<Cps> {
    let m = if mode == Mode::ExAnte { 1 } else { ctx.domain.len() };
    let player = ctx.player;
    let form = ctx.form;
    let required: Vec<bool> = (0..m)
        .map(|pos| {
            let h = ctx.domain[pos];
            match mode {
                Mode::Weak | Mode::Strict => form.node(h).is_active(player) && form.reaches(player, s, h),
                Mode::Sequential | Mode::ExAnte => true,
            }
        })
        .collect();
    let parent: Vec<Option<usize>> = (0..m)
        .map(|pos| (0..pos).rev().find(|&q| form.weakly_precedes(ctx.domain[q], ctx.domain[pos])))
        .collect();
    let mut relevant: Vec<bool> = (0..m).map(|pos| pos == 0 || required[pos] || allowed[pos].is_some()).collect();
    for pos in (1..m).rev() {
        if relevant[pos] {
            if let Some(p) = parent[pos] {
                relevant[p] = true;
            }
        }
    }
    let rel: Vec<usize> = (0..m).filter(|&p| relevant[p]).collect();
    let optional: Vec<usize> = rel[1..].to_vec();
    for mask in 0u64..(1u64 << optional.len()) {
        let mut scratch = vec![false; m];
        scratch[0] = true;
        for (bit, &pos) in optional.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                scratch[pos] = true;
            }
        }
        if let Some(w) = solve_regime(ctx, s, allowed, mode, &rel, &parent, &scratch, &required) {
            return Some(w);
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn solve_regime(
    ctx: &ModelContext,
    s: StrategyId,
    allowed: &[Option<Vec<bool>>],
    mode: Mode,
    rel: &[usize],
    parent: &[Option<usize>],
    scratch: &[bool],
    required: &[bool],
) -> Option<Cps> {
    let n_atoms = ctx.atoms.len();
    // Governing scratch history for each relevant position; for a scratch position its own parent.
    let gov = |pos: usize| -> usize {
        let mut cur = pos;
        while !scratch[cur] {
            cur = parent[cur].unwrap();
        }
        cur
    };
    let above = |pos: usize| -> Option<usize> { parent[pos].map(gov) };
    let sigmas: Vec<usize> = rel.iter().copied().filter(|&p| scratch[p]).collect();
    let mut var_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vars: Vec<(usize, usize)> = Vec::new();
    for &sg in &sigmas {
        for a in 0..n_atoms {
            if !ctx.in_support_space(sg, a) || allowed[sg].as_ref().is_some_and(|mk| !mk[a]) {
                continue;
            }
            if sg == 0 && !ctx.prior.contains_key(&(ctx.atoms[a].nature, ctx.atoms[a].types.clone())) {
                continue;
            }
            let eliminated = rel.iter().any(|&pos| {
                pos != sg
                    && ctx.in_support_space(pos, a)
                    && if scratch[pos] {
                        above(pos) == Some(sg)
                    } else {
                        gov(pos) == sg && allowed[pos].as_ref().is_some_and(|mk| !mk[a])
                    }
            });
            if !eliminated {
                var_of.insert((sg, a), vars.len());
                vars.push((sg, a));
            }
        }
        if !vars.iter().any(|&(g, _)| g == sg) {
            return None;
        }
    }
    let t = vars.len();
    let mut rows: Vec<(Vec<(usize, Rational)>, Relation, Rational)> = Vec::new();
    for &sg in &sigmas {
        let coeffs: Vec<(usize, Rational)> =
            vars.iter().enumerate().filter(|(_, &(g, _))| g == sg).map(|(k, _)| (k, one())).collect();
        rows.push((coeffs, Relation::Eq, one()));
    }
    for (key, p) in &ctx.prior {
        let coeffs: Vec<(usize, Rational)> = vars
            .iter()
            .enumerate()
            .filter(|(_, &(g, a))| g == 0 && (ctx.atoms[a].nature, &ctx.atoms[a].types) == (key.0, &key.1))
            .map(|(k, _)| (k, one()))
            .collect();
        if coeffs.is_empty() {
            return None;
        }
        rows.push((coeffs, Relation::Eq, p.clone()));
    }
    let mut strict_rows = false;
    for &pos in rel {
        let g = gov(pos);
        let local: Vec<(usize, usize)> = vars
            .iter()
            .enumerate()
            .filter(|(_, &(sg, a))| sg == g && ctx.in_support_space(pos, a))
            .map(|(k, &(_, a))| (k, a))
            .collect();
        if !scratch[pos] {
            let mut coeffs: Vec<(usize, Rational)> = local.iter().map(|&(k, _)| (k, one())).collect();
            if coeffs.is_empty() {
                return None;
            }
            coeffs.push((t, -one()));
            rows.push((coeffs, Relation::Ge, zero()));
            strict_rows = true;
        }
        if !required[pos] {
            continue;
        }
        let h = ctx.domain[pos];
        let own = ctx.form.choice(ctx.player, s, h);
        let mut seen: BTreeSet<(Vec<(usize, Rational)>, bool)> = BTreeSet::new();
        for alt in 0..ctx.num_strategies() {
            if alt == s || ctx.same_continuation(pos, s, alt) {
                continue;
            }
            let strict = mode == Mode::Strict && ctx.form.choice(ctx.player, alt, h) != own;
            let coeffs: Vec<(usize, Rational)> = local
                .iter()
                .map(|&(k, a)| (k, ctx.utility(pos, s, a) - ctx.utility(pos, alt, a)))
                .filter(|(_, c)| *c != zero())
                .collect();
            if !seen.insert((coeffs.clone(), strict)) {
                continue;
            }
            if coeffs.is_empty() && !strict {
                continue;
            }
            let mut coeffs = coeffs;
            if strict {
                coeffs.push((t, -one()));
                strict_rows = true;
            }
            rows.push((coeffs, Relation::Ge, zero()));
        }
    }
    let point = solve_merged(t, rows, strict_rows)?;
    let mut beliefs: BTreeMap<NodeId, Belief> = BTreeMap::new();
    for (k, &(g, a)) in vars.iter().enumerate() {
        if point[k] > zero() {
            beliefs.entry(ctx.domain[g]).or_default().insert(ctx.atoms[a].clone(), point[k].clone());
        }
    }
    Some(ctx.complete(&beliefs))
}

/// Solves `max t` over the rows with `t ≤ 1`, merging identical variable columns first.
/// Returns the belief weights when the optimum is positive (or when no row uses `t`).
fn solve_merged(t: usize, rows: Vec<(Vec<(usize, Rational)>, Relation, Rational)>, uses_t: bool) -> Option<Vec<Rational>> {
    let mut columns: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); t];
    for (r, (coeffs, _, _)) in rows.iter().enumerate() {
        for (k, c) in coeffs {
            if *k < t {
                columns[*k].push((r, c.clone()));
            }
        }
    }
    let mut rep: HashMap<&Vec<(usize, Rational)>, usize> = HashMap::new();
    let mut new_index = vec![usize::MAX; t];
    let mut kept = Vec::new();
    for k in 0..t {
        match rep.get(&columns[k]) {
            Some(_) => {}
            None => {
                rep.insert(&columns[k], kept.len());
                new_index[k] = kept.len();
                kept.push(k);
            }
        }
    }
    let nt = kept.len();
    let mut lp = LinearProgram::new(nt + 1);
    for (coeffs, rel, rhs) in &rows {
        let c: Vec<(usize, Rational)> = coeffs
            .iter()
            .filter_map(|(k, v)| if *k == t { Some((nt, v.clone())) } else { (new_index[*k] != usize::MAX).then(|| (new_index[*k], v.clone())) })
            .collect();
        lp.constrain(c, *rel, rhs.clone());
    }
    lp.constrain(vec![(nt, one())], Relation::Le, one());
    lp.maximize(vec![(nt, one())]);
    match lp.solve() {
        LpOutcome::Optimal { value, point } => {
            if uses_t && value <= zero() {
                return None;
            }
            let mut out = vec![zero(); t];
            for (j, &k) in kept.iter().enumerate() {
                out[k] = point[j].clone();
            }
            Some(out)
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------------------------
// Iterated concepts

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Concept {
    Efr,
    Br,
    StrictEfr,
    Icr,
}

impl Concept {
    pub fn tag(self) -> &'static str {
        match self {
            Concept::Efr => "efr",
            Concept::Br => "br",
            Concept::StrictEfr => "sefr",
            Concept::Icr => "icr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "efr" => Some(Concept::Efr),
            "br" => Some(Concept::Br),
            "sefr" => Some(Concept::StrictEfr),
            "icr" => Some(Concept::Icr),
            _ => None,
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] EpistemicError),
    #[error("expected one model per player ({expected}), got {got}")]
    ProfileShape { expected: usize, got: usize },
    #[error("models must share one type structure")]
    MixedTypeStructures,
    #[error("{concept}: no fixpoint within {rounds} rounds")]
    BudgetExceeded { concept: Concept, rounds: usize, partial: Box<SolutionTrace> },
}

/// A `(player, subjective structure, type)` triple reached from the root models by ascription.
#[derive(Debug, Clone)]
pub struct SolverNode {
    pub player: PlayerId,
    pub structure: Arc<SubjectiveStructure>,
    pub type_id: TypeId,
    /// Per opponent (increasing player order): admissible types and the node of each.
    pub opponent_types: Vec<Vec<TypeId>>,
    pub opponent_nodes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Closure {
    pub types: Arc<TypeStructure>,
    pub nodes: Vec<SolverNode>,
    /// Root node per player.
    pub roots: Vec<usize>,
}

impl Closure {
    pub fn build(form: &ExtensiveForm, models: &[SubjectiveModel]) -> Result<Self, SolveError> {
        if models.len() != form.num_players() {
            return Err(SolveError::ProfileShape { expected: form.num_players(), got: models.len() });
        }
        let types = models[0].types.clone();
        if models.iter().any(|m| !Arc::ptr_eq(&m.types, &types) && *m.types != *types) {
            return Err(SolveError::MixedTypeStructures);
        }
        for (p, m) in models.iter().enumerate() {
            if m.player() != p {
                return Err(SolveError::Model(EpistemicError::WrongPlayer {
                    label: m.root_label().to_string(),
                    expected: p,
                    actual: m.player(),
                }));
            }
            SubjectiveModel::new(m.structure.clone(), types.clone(), m.root)?;
        }
        let mut index: HashMap<(u64, TypeId), usize> = HashMap::new();
        let mut nodes: Vec<SolverNode> = Vec::new();
        let mut roots = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        for m in models {
            let key = (m.structure.digest(), m.root);
            let id = *index.entry(key).or_insert_with(|| {
                nodes.push(SolverNode {
                    player: m.player(),
                    structure: m.structure.clone(),
                    type_id: m.root,
                    opponent_types: Vec::new(),
                    opponent_nodes: Vec::new(),
                });
                queue.push_back(nodes.len() - 1);
                nodes.len() - 1
            });
            roots.push(id);
        }
        let mut consistent_cache: HashMap<u64, Vec<TypeId>> = HashMap::new();
        while let Some(id) = queue.pop_front() {
            let d = nodes[id].structure.clone();
            let l1 = d.level1().clone();
            let mut opp_types = Vec::new();
            let mut opp_nodes = Vec::new();
            for j in d.opponents() {
                let dj = d.ascribed(j);
                let ts = consistent_cache
                    .entry(dj.digest())
                    .or_insert_with(|| consistent_types(&dj, &types).into_iter().collect())
                    .clone();
                let ts: Vec<TypeId> =
                    ts.into_iter().filter(|&t| l1.type_index(j, &types.get(t).payoff_type).is_some()).collect();
                let mut ids = Vec::new();
                for &t in &ts {
                    let key = (dj.digest(), t);
                    let nid = match index.get(&key) {
                        Some(&n) => n,
                        None => {
                            nodes.push(SolverNode {
                                player: j,
                                structure: dj.clone(),
                                type_id: t,
                                opponent_types: Vec::new(),
                                opponent_nodes: Vec::new(),
                            });
                            let n = nodes.len() - 1;
                            index.insert(key, n);
                            queue.push_back(n);
                            n
                        }
                    };
                    ids.push(nid);
                }
                opp_types.push(ts);
                opp_nodes.push(ids);
            }
            nodes[id].opponent_types = opp_types;
            nodes[id].opponent_nodes = opp_nodes;
        }
        Ok(Closure { types, nodes, roots })
    }

    pub fn context<'a>(&self, form: &'a ExtensiveForm, node: usize) -> ModelContext<'a> {
        let n = &self.nodes[node];
        ModelContext::with_opponent_types(form, n.structure.clone(), self.types.clone(), n.type_id, n.opponent_types.clone())
    }

    pub fn node_label(&self, node: usize) -> String {
        let n = &self.nodes[node];
        format!("{}@{}", self.types.label(n.type_id), n.structure.level1().name())
    }
}

#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub concept: Concept,
    pub closure: Closure,
    /// `rounds[k][node]`: surviving set after round `k`; round 0 is every strategy.
    pub rounds: Vec<Vec<BTreeSet<StrategyId>>>,
    /// `witnesses[k]` justifies every member of `rounds[k]` (empty for `k = 0`).
    pub witnesses: Vec<BTreeMap<(usize, StrategyId), Cps>>,
    /// Witnesses for the final sets against themselves (empty when the budget ran out).
    pub stable_witnesses: BTreeMap<(usize, StrategyId), Cps>,
    /// For backward rationalizability: the sequentially optimal subsets used in the support condition.
    pub sequential: Option<Vec<Vec<BTreeSet<StrategyId>>>>,
    /// First `k` with no change from round `k` to `k + 1`.
    pub fixpoint: usize,
}

impl SolutionTrace {
    pub fn final_sets(&self) -> &[BTreeSet<StrategyId>] {
        self.rounds.last().unwrap()
    }

    pub fn root(&self, player: PlayerId) -> usize {
        self.closure.roots[player]
    }

    pub fn root_set(&self, player: PlayerId) -> &BTreeSet<StrategyId> {
        &self.final_sets()[self.root(player)]
    }

    /// Set for `node` after round `k`, saturating at the fixpoint.
    pub fn set_at(&self, k: usize, node: usize) -> &BTreeSet<StrategyId> {
        &self.rounds[k.min(self.rounds.len() - 1)][node]
    }

    /// `{ z(s|h⁰) | s ∈ ∏ᵢ Xᵢ }` over the root sets.
    pub fn outcomes(&self, form: &ExtensiveForm) -> BTreeSet<NodeId> {
        let sets: Vec<Vec<StrategyId>> =
            (0..form.num_players()).map(|p| self.root_set(p).iter().copied().collect()).collect();
        cartesian(&sets).into_iter().map(|prof| form.outcome(&prof, ROOT)).collect()
    }

    /// The opponents' correspondence ascribed by `node` after round `k`.
    pub fn ascribed_correspondence(&self, node: usize, k: usize) -> Correspondence {
        let n = &self.closure.nodes[node];
        let opponents: Vec<PlayerId> = n.structure.opponents();
        let mut per_player = BTreeMap::new();
        for (idx, &j) in opponents.iter().enumerate() {
            let entries = n.opponent_types[idx]
                .iter()
                .zip(&n.opponent_nodes[idx])
                .map(|(&t, &nid)| (t, self.set_at(k, nid).clone()))
                .collect();
            per_player.insert(j, entries);
        }
        Correspondence { per_player }
    }

    /// Union of outcome classes of the surviving sets (used for strict traces).
    pub fn outcome_class_closure(&self, form: &ExtensiveForm) -> Vec<BTreeSet<StrategyId>> {
        self.final_sets()
            .iter()
            .enumerate()
            .map(|(node, set)| {
                let p = self.closure.nodes[node].player;
                set.iter().flat_map(|&s| form.equivalence_classes(p, s, None)).collect()
            })
            .collect()
    }
}

/// Strategy sets per type, per player.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Correspondence {
    pub per_player: BTreeMap<PlayerId, Vec<(TypeId, BTreeSet<StrategyId>)>>,
}

/// `H_i(W_J)`: histories in `Hᵢ ∪ {h⁰}` reached by some profile in the correspondence's graph.
pub fn reachable_under(form: &ExtensiveForm, w: &Correspondence, observer: PlayerId) -> HistorySet {
    let mut domain = vec![ROOT];
    domain.extend(form.player_nodes(observer).iter().copied().filter(|&h| h != ROOT));
    let opponents: Vec<PlayerId> = (0..form.num_players()).filter(|&j| j != observer).collect();
    let nodes = domain
        .into_iter()
        .filter(|&h| {
            opponents.iter().all(|j| {
                let reach = form.reaching_strategies(h, *j);
                w.per_player
                    .get(j)
                    .is_some_and(|entries| entries.iter().any(|(_, set)| set.iter().any(|s| reach.contains(s))))
            })
        })
        .collect();
    HistorySet { op: HistoryOp::ReachableUnder { observer }, nodes }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverConfig {
    /// Round budget; defaults to the total number of (node, strategy) pairs in the closure.
    pub max_rounds: Option<usize>,
}

pub fn efr(form: &ExtensiveForm, models: &[SubjectiveModel], cfg: SolverConfig) -> Result<SolutionTrace, SolveError> {
    solve(form, models, Concept::Efr, cfg)
}

pub fn backward(form: &ExtensiveForm, models: &[SubjectiveModel], cfg: SolverConfig) -> Result<SolutionTrace, SolveError> {
    solve(form, models, Concept::Br, cfg)
}

pub fn strict_efr(form: &ExtensiveForm, models: &[SubjectiveModel], cfg: SolverConfig) -> Result<SolutionTrace, SolveError> {
    solve(form, models, Concept::StrictEfr, cfg)
}

pub fn icr(form: &ExtensiveForm, models: &[SubjectiveModel], cfg: SolverConfig) -> Result<SolutionTrace, SolveError> {
    solve(form, models, Concept::Icr, cfg)
}

pub fn efr_outcomes(form: &ExtensiveForm, models: &[SubjectiveModel]) -> Result<BTreeSet<NodeId>, SolveError> {
    Ok(efr(form, models, SolverConfig::default())?.outcomes(form))
}

pub fn br_outcomes(form: &ExtensiveForm, models: &[SubjectiveModel]) -> Result<BTreeSet<NodeId>, SolveError> {
    Ok(backward(form, models, SolverConfig::default())?.outcomes(form))
}

/// Opponent node behind each opponent slot of each atom.
fn atom_nodes(closure: &Closure, ctx: &ModelContext, node: usize) -> Vec<Vec<usize>> {
    let n = &closure.nodes[node];
    ctx.atoms
        .iter()
        .map(|a| {
            a.types
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let idx = n.opponent_types[k].iter().position(|x| x == t).unwrap();
                    n.opponent_nodes[k][idx]
                })
                .collect()
        })
        .collect()
}

type Sets = Vec<Vec<bool>>;

pub fn solve(
    form: &ExtensiveForm,
    models: &[SubjectiveModel],
    concept: Concept,
    cfg: SolverConfig,
) -> Result<SolutionTrace, SolveError> {
    let closure = Closure::build(form, models)?;
    let contexts: Vec<ModelContext> = (0..closure.nodes.len()).map(|n| closure.context(form, n)).collect();
    let owners: Vec<Vec<Vec<usize>>> = contexts.iter().enumerate().map(|(n, c)| atom_nodes(&closure, c, n)).collect();
    // Continuation class of each strategy of each player at each node: index of its restriction
    // to the player's nodes weakly following that node.
    let cont_class: Vec<Vec<Vec<usize>>> = (0..form.num_players())
        .map(|j| {
            (0..form.nodes().len())
                .map(|h| {
                    let following = form.player_nodes_following(j, h);
                    let mut ids: BTreeMap<Vec<Option<usize>>, usize> = BTreeMap::new();
                    (0..form.num_strategies(j))
                        .map(|s| {
                            let key: Vec<Option<usize>> = following.iter().map(|&n| form.choice(j, s, n)).collect();
                            let len = ids.len();
                            *ids.entry(key).or_insert(len)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let budget = cfg
        .max_rounds
        .unwrap_or_else(|| closure.nodes.iter().map(|n| form.num_strategies(n.player)).sum::<usize>() + 1);
    let full: Sets = closure.nodes.iter().map(|n| vec![true; form.num_strategies(n.player)]).collect();
    let mut rounds: Vec<Sets> = vec![full.clone()];
    let mut seq: Vec<Sets> = vec![full.clone()];
    let mut witnesses: Vec<BTreeMap<(usize, StrategyId), Cps>> = vec![BTreeMap::new()];
    let mode = match concept {
        Concept::Efr => Mode::Weak,
        Concept::StrictEfr => Mode::Strict,
        Concept::Br => Mode::Weak,
        Concept::Icr => Mode::ExAnte,
    };
    let to_sets = |r: &Sets| -> Vec<BTreeSet<StrategyId>> {
        r.iter().map(|v| (0..v.len()).filter(|&s| v[s]).collect()).collect()
    };
    let stable_witnesses;
    let mut k = 0;
    loop {
        if k >= budget {
            let partial = SolutionTrace {
                concept,
                closure: closure.clone(),
                rounds: rounds.iter().map(to_sets).collect(),
                witnesses: witnesses.clone(),
                stable_witnesses: BTreeMap::new(),
                sequential: (concept == Concept::Br).then(|| seq.iter().map(to_sets).collect()),
                fixpoint: k,
            };
            return Err(SolveError::BudgetExceeded { concept, rounds: budget, partial: Box::new(partial) });
        }
        let allowed: Vec<Vec<Option<Vec<bool>>>> = (0..closure.nodes.len())
            .map(|n| restrictions(concept, &contexts[n], &owners[n], &rounds, &seq, &cont_class, k))
            .collect();
        let mut tasks: Vec<(usize, StrategyId, Mode)> = Vec::new();
        for n in 0..closure.nodes.len() {
            for s in 0..rounds[k][n].len() {
                if rounds[k][n][s] {
                    tasks.push((n, s, mode));
                }
                if concept == Concept::Br && seq[k][n][s] {
                    tasks.push((n, s, Mode::Sequential));
                }
            }
        }
        let results: Vec<Option<Cps>> =
            tasks.par_iter().map(|&(n, s, md)| justify(&contexts[n], s, &allowed[n], md)).collect();
        let mut next: Sets = full.iter().map(|v| vec![false; v.len()]).collect();
        let mut next_seq = next.clone();
        let mut wit = BTreeMap::new();
        for ((n, s, md), r) in tasks.into_iter().zip(results) {
            if let Some(cps) = r {
                if md == Mode::Sequential {
                    next_seq[n][s] = true;
                } else {
                    next[n][s] = true;
                    wit.insert((n, s), cps);
                }
            }
        }
        let stable = next == rounds[k] && (concept != Concept::Br || next_seq == seq[k]);
        if stable {
            stable_witnesses = wit;
            break;
        }
        rounds.push(next);
        seq.push(next_seq);
        witnesses.push(wit);
        k += 1;
    }
    Ok(SolutionTrace {
        concept,
        closure,
        rounds: rounds.iter().map(to_sets).collect(),
        witnesses,
        stable_witnesses,
        sequential: (concept == Concept::Br).then(|| seq.iter().map(to_sets).collect()),
        fixpoint: k,
    })
}

/// Support masks for computing round `k + 1` at one node.
fn restrictions(
    concept: Concept,
    ctx: &ModelContext,
    owners: &[Vec<usize>],
    rounds: &[Sets],
    seq: &[Sets],
    cont_class: &[Vec<Vec<usize>>],
    k: usize,
) -> Vec<Option<Vec<bool>>> {
    let m = ctx.domain.len();
    let mut out = vec![None; m];
    if k == 0 {
        return out;
    }
    let in_graph = |round: &Sets, a: usize| -> bool {
        ctx.atoms[a].strategies.iter().zip(&owners[a]).all(|(&s, &node)| round[node][s])
    };
    match concept {
        Concept::Efr | Concept::StrictEfr | Concept::Icr => {
            let positions = if concept == Concept::Icr { 1 } else { m };
            for (pos, slot) in out.iter_mut().enumerate().take(positions) {
                // Strong belief in every earlier round whose graph can explain the history; the
                // latest such graph is the binding one since graphs shrink.
                for r in (1..=k).rev() {
                    let mask: Vec<bool> = (0..ctx.atoms.len()).map(|a| in_graph(&rounds[r], a)).collect();
                    if (0..ctx.atoms.len()).any(|a| mask[a] && ctx.in_support_space(pos, a)) {
                        *slot = Some(mask);
                        break;
                    }
                }
            }
        }
        Concept::Br => {
            for (pos, slot) in out.iter_mut().enumerate() {
                let h = ctx.domain[pos];
                let mask: Vec<bool> = (0..ctx.atoms.len())
                    .map(|a| {
                        ctx.atoms[a].strategies.iter().zip(&owners[a]).zip(&ctx.opponents).all(|((&s, &node), &j)| {
                            let cls = &cont_class[j][h];
                            let hat = &seq[k][node];
                            (0..hat.len()).any(|x| hat[x] && cls[x] == cls[s])
                        })
                    })
                    .collect();
                *slot = Some(mask);
            }
        }
    }
    out
}

/// Convenience: an integer-weighted point mass belief.
pub fn point_mass(atom: Atom) -> Belief {
    BTreeMap::from([(atom, int(1))])
}
