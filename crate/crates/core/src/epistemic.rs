//! Subjective payoff hierarchies, finite type structures and subjective models.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::game::{ExtensiveForm, PlayerId};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::payoff::{hausdorff_distance, is_rich, CanonicalRepresentation, StandardPayoffStructure};
use crate::rational::{one, pow2_inv, zero, Rational};

pub type TypeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpistemicError {
    #[error("ascription for player {player} is owned by player {owner}")]
    AscriptionOwner { player: PlayerId, owner: PlayerId },
    #[error("structure for player {owner} lacks an ascription for player {missing}")]
    MissingAscription { owner: PlayerId, missing: PlayerId },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("duplicate type `{0}`")]
    DuplicateType(String),
    #[error("type `{label}`: {message}")]
    BadBelief { label: String, message: String },
    #[error("type `{label}` belongs to player {actual}, expected {expected}")]
    WrongPlayer { label: String, expected: PlayerId, actual: PlayerId },
    #[error("type `{0}` is not consistent with the subjective structure")]
    Inconsistent(String),
    #[error("models disagree on the number of players")]
    ProfileShape,
    #[error(transparent)]
    Payoff(#[from] crate::payoff::PayoffError),
}

#[derive(Debug, Clone)]
pub enum Ascriptions {
    /// Common knowledge of level 1 from here on.
    CommonKnowledge,
    /// Indexed by player; `None` at the owner.
    Explicit(Vec<Option<Arc<SubjectiveStructure>>>),
}

/// `dᵢ`: the owner's state space, the spaces ascribed to each opponent, and so on, truncated by
/// a common-knowledge tail.
#[derive(Debug, Clone)]
pub struct SubjectiveStructure {
    owner: PlayerId,
    level1: Arc<StandardPayoffStructure>,
    ascriptions: Ascriptions,
    digest: u64,
}

impl SubjectiveStructure {
    pub fn common_knowledge(owner: PlayerId, level1: Arc<StandardPayoffStructure>) -> Arc<Self> {
        let mut h = DefaultHasher::new();
        (owner, level1.digest(), "ck").hash(&mut h);
        Arc::new(SubjectiveStructure { owner, level1, ascriptions: Ascriptions::CommonKnowledge, digest: h.finish() })
    }

    /// `ascriptions` lists `d_{j|i}` for every opponent `j`, in any order.
    pub fn ascribing(
        owner: PlayerId,
        level1: Arc<StandardPayoffStructure>,
        ascriptions: Vec<Arc<SubjectiveStructure>>,
    ) -> Result<Arc<Self>, EpistemicError> {
        let n = level1.num_players();
        let mut slots: Vec<Option<Arc<SubjectiveStructure>>> = vec![None; n];
        for a in ascriptions {
            let j = a.owner;
            if j >= n || j == owner {
                return Err(EpistemicError::AscriptionOwner { player: j, owner });
            }
            slots[j] = Some(a);
        }
        for (j, slot) in slots.iter().enumerate() {
            if j != owner && slot.is_none() {
                return Err(EpistemicError::MissingAscription { owner, missing: j });
            }
        }
        let mut h = DefaultHasher::new();
        (owner, level1.digest()).hash(&mut h);
        for s in slots.iter().flatten() {
            s.digest.hash(&mut h);
        }
        Ok(Arc::new(SubjectiveStructure { owner, level1, ascriptions: Ascriptions::Explicit(slots), digest: h.finish() }))
    }

    pub fn owner(&self) -> PlayerId {
        self.owner
    }

    pub fn level1(&self) -> &Arc<StandardPayoffStructure> {
        &self.level1
    }

    pub fn ascriptions(&self) -> &Ascriptions {
        &self.ascriptions
    }

    pub fn is_common_knowledge(&self) -> bool {
        matches!(self.ascriptions, Ascriptions::CommonKnowledge)
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// `d_{j|i}`.
    pub fn ascribed(&self, j: PlayerId) -> Arc<SubjectiveStructure> {
        match &self.ascriptions {
            Ascriptions::CommonKnowledge => SubjectiveStructure::common_knowledge(j, self.level1.clone()),
            Ascriptions::Explicit(v) => v[j].clone().expect("ascription for every opponent"),
        }
    }

    pub fn opponents(&self) -> Vec<PlayerId> {
        (0..self.level1.num_players()).filter(|&j| j != self.owner).collect()
    }

    /// Number of explicit levels; common-knowledge structures have depth 1.
    pub fn depth(&self) -> usize {
        match &self.ascriptions {
            Ascriptions::CommonKnowledge => 1,
            Ascriptions::Explicit(v) => 1 + v.iter().flatten().map(|d| d.depth()).max().unwrap_or(0),
        }
    }

    /// Coherence at every level: each opponent's own-utility slices agree between a level and the
    /// level ascribed to that opponent.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.validate_into(&self.level1.name().to_string(), &mut out);
        out
    }

    fn validate_into(&self, path: &str, out: &mut Vec<String>) {
        if let Ascriptions::Explicit(v) = &self.ascriptions {
            for (j, d) in v.iter().enumerate() {
                let Some(d) = d else { continue };
                let here = format!("{path} -> [{j}] {}", d.level1.name());
                if d.level1.num_players() != self.level1.num_players()
                    || d.level1.num_terminals() != self.level1.num_terminals()
                {
                    out.push(format!("{here}: structure shape differs"));
                    continue;
                }
                if self.level1.own_slices(j) != d.level1.own_slices(j) {
                    out.push(format!("{here}: player {j}'s own payoff slices differ from the ascribing level"));
                }
                d.validate_into(&here, out);
            }
        }
    }
}

pub fn validate_hierarchy(d: &SubjectiveStructure) -> Vec<String> {
    d.validate()
}

/// Smallest `k ≤ depth(d)` such that `d` has k-th order richness.
pub fn higher_order_richness(form: &ExtensiveForm, d: &SubjectiveStructure) -> Option<usize> {
    let mut rich_cache: HashMap<u64, bool> = HashMap::new();
    let mut rich = |s: &StandardPayoffStructure| *rich_cache.entry(s.digest()).or_insert_with(|| is_rich(form, s).rich);
    fn sat(d: &SubjectiveStructure, k: usize, rich: &mut dyn FnMut(&StandardPayoffStructure) -> bool) -> bool {
        if k == 1 {
            return rich(&d.level1);
        }
        d.opponents().into_iter().all(|j| sat(&d.ascribed(j), k - 1, rich))
    }
    (1..=d.depth()).find(|&k| sat(d, k, &mut rich))
}

/// A point in a type's belief: nature state label and one type per opponent in increasing player order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BeliefPoint {
    pub nature: String,
    pub opponents: Vec<TypeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDef {
    pub label: String,
    pub player: PlayerId,
    pub payoff_type: String,
    pub belief: BTreeMap<BeliefPoint, Rational>,
}

/// Label-level description of a type, resolved by [`TypeStructure::new`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeSpec {
    pub label: String,
    pub player: PlayerId,
    pub payoff_type: String,
    /// `(nature, opponent type labels in player order, probability)`.
    pub belief: Vec<(String, Vec<String>, Rational)>,
}

impl TypeSpec {
    pub fn new(label: &str, player: PlayerId, payoff_type: &str, belief: Vec<(&str, Vec<&str>, Rational)>) -> Self {
        TypeSpec {
            label: label.into(),
            player,
            payoff_type: payoff_type.into(),
            belief: belief
                .into_iter()
                .map(|(n, ts, p)| (n.to_string(), ts.into_iter().map(String::from).collect(), p))
                .collect(),
        }
    }
}

/// A finite Harsanyi type structure shared by all players.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeStructure {
    players: usize,
    types: Vec<TypeDef>,
    index: BTreeMap<String, TypeId>,
}

impl TypeStructure {
    pub fn new(players: usize, specs: Vec<TypeSpec>) -> Result<Self, EpistemicError> {
        let mut index = BTreeMap::new();
        for (k, s) in specs.iter().enumerate() {
            if index.insert(s.label.clone(), k).is_some() {
                return Err(EpistemicError::DuplicateType(s.label.clone()));
            }
        }
        let mut types = Vec::with_capacity(specs.len());
        for s in &specs {
            if s.player >= players {
                return Err(EpistemicError::BadBelief { label: s.label.clone(), message: "player out of range".into() });
            }
            let opponents: Vec<PlayerId> = (0..players).filter(|&j| j != s.player).collect();
            let mut belief: BTreeMap<BeliefPoint, Rational> = BTreeMap::new();
            let mut total = zero();
            for (nature, labels, p) in &s.belief {
                if *p <= zero() {
                    return Err(EpistemicError::BadBelief {
                        label: s.label.clone(),
                        message: "probabilities must be positive".into(),
                    });
                }
                if labels.len() != opponents.len() {
                    return Err(EpistemicError::BadBelief {
                        label: s.label.clone(),
                        message: format!("expected {} opponent types, got {}", opponents.len(), labels.len()),
                    });
                }
                let mut opp = Vec::new();
                for (&j, l) in opponents.iter().zip(labels) {
                    let t = *index.get(l).ok_or_else(|| EpistemicError::UnknownType(l.clone()))?;
                    if specs[t].player != j {
                        return Err(EpistemicError::WrongPlayer { label: l.clone(), expected: j, actual: specs[t].player });
                    }
                    opp.push(t);
                }
                total += p;
                *belief.entry(BeliefPoint { nature: nature.clone(), opponents: opp }).or_insert_with(zero) += p;
            }
            if total != one() {
                return Err(EpistemicError::BadBelief {
                    label: s.label.clone(),
                    message: format!("probabilities sum to {total}"),
                });
            }
            types.push(TypeDef { label: s.label.clone(), player: s.player, payoff_type: s.payoff_type.clone(), belief });
        }
        Ok(TypeStructure { players, types, index })
    }

    pub fn num_players(&self) -> usize {
        self.players
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, t: TypeId) -> &TypeDef {
        &self.types[t]
    }

    pub fn types(&self) -> &[TypeDef] {
        &self.types
    }

    pub fn id(&self, label: &str) -> Option<TypeId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, t: TypeId) -> &str {
        &self.types[t].label
    }

    pub fn of_player(&self, p: PlayerId) -> Vec<TypeId> {
        (0..self.types.len()).filter(|&t| self.types[t].player == p).collect()
    }

    pub fn specs(&self) -> Vec<TypeSpec> {
        self.types
            .iter()
            .map(|t| TypeSpec {
                label: t.label.clone(),
                player: t.player,
                payoff_type: t.payoff_type.clone(),
                belief: t
                    .belief
                    .iter()
                    .map(|(pt, p)| {
                        (pt.nature.clone(), pt.opponents.iter().map(|&o| self.label(o).to_string()).collect(), p.clone())
                    })
                    .collect(),
            })
            .collect()
    }
}

fn locally_consistent(d: &SubjectiveStructure, ts: &TypeStructure, t: TypeId) -> bool {
    let def = ts.get(t);
    let l1 = &d.level1;
    if def.player != d.owner || l1.type_index(def.player, &def.payoff_type).is_none() {
        return false;
    }
    let opponents = d.opponents();
    def.belief.keys().all(|pt| {
        l1.nature_index(&pt.nature).is_some()
            && opponents.iter().zip(&pt.opponents).all(|(&j, &o)| l1.type_index(j, &ts.get(o).payoff_type).is_some())
    })
}

/// Whether `t` fits `d` at every level: its payoff type and belief support lie in the level's state
/// space, and every supported opponent type fits the ascribed structure.
pub fn type_consistency(d: &Arc<SubjectiveStructure>, ts: &TypeStructure, t: TypeId) -> bool {
    let mut seen: HashSet<(u64, TypeId)> = HashSet::new();
    let mut queue = VecDeque::new();
    queue.push_back((d.clone(), t));
    seen.insert((d.digest, t));
    while let Some((d, t)) = queue.pop_front() {
        if !locally_consistent(&d, ts, t) {
            return false;
        }
        let opponents = d.opponents();
        let asc: Vec<Arc<SubjectiveStructure>> = opponents.iter().map(|&j| d.ascribed(j)).collect();
        for pt in ts.get(t).belief.keys() {
            for (k, &o) in pt.opponents.iter().enumerate() {
                if seen.insert((asc[k].digest, o)) {
                    queue.push_back((asc[k].clone(), o));
                }
            }
        }
    }
    true
}

/// `Tᵢ(dᵢ)`.
pub fn consistent_types(d: &Arc<SubjectiveStructure>, ts: &TypeStructure) -> BTreeSet<TypeId> {
    ts.of_player(d.owner).into_iter().filter(|&t| type_consistency(d, ts, t)).collect()
}

/// `(dᵢ, tᵢ)`.
#[derive(Debug, Clone)]
pub struct SubjectiveModel {
    pub structure: Arc<SubjectiveStructure>,
    pub types: Arc<TypeStructure>,
    pub root: TypeId,
}

impl SubjectiveModel {
    pub fn new(structure: Arc<SubjectiveStructure>, types: Arc<TypeStructure>, root: TypeId) -> Result<Self, EpistemicError> {
        let def = types.get(root);
        if def.player != structure.owner {
            return Err(EpistemicError::WrongPlayer { label: def.label.clone(), expected: structure.owner, actual: def.player });
        }
        if !type_consistency(&structure, &types, root) {
            return Err(EpistemicError::Inconsistent(def.label.clone()));
        }
        Ok(SubjectiveModel { structure, types, root })
    }

    pub fn player(&self) -> PlayerId {
        self.structure.owner
    }

    pub fn root_label(&self) -> &str {
        self.types.label(self.root)
    }
}

/// Common knowledge of `level1` for every player, with the given root type labels.
pub fn standard_models(
    level1: Arc<StandardPayoffStructure>,
    types: Arc<TypeStructure>,
    roots: &[&str],
) -> Result<Vec<SubjectiveModel>, EpistemicError> {
    roots
        .iter()
        .enumerate()
        .map(|(p, label)| {
            let t = types.id(label).ok_or_else(|| EpistemicError::UnknownType(label.to_string()))?;
            SubjectiveModel::new(SubjectiveStructure::common_knowledge(p, level1.clone()), types.clone(), t)
        })
        .collect()
}

/// A payoff type read in the structure it lives in: the label of the type it was derived from and
/// its own utility rows minus those of that base type in the same state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Grounded {
    base: String,
    offsets: BTreeSet<Vec<Rational>>,
}

fn ground(l1: &StandardPayoffStructure, player: PlayerId, label: &str) -> Grounded {
    let Some(idx) = l1.type_index(player, label) else {
        return Grounded { base: label.to_string(), offsets: BTreeSet::from([Vec::new()]) };
    };
    let base = l1.base_type(player, idx);
    let offsets = l1
        .states()
        .filter(|st| st.types[player] == idx)
        .map(|st| {
            let mut at_base = st.clone();
            at_base.types[player] = base;
            let own = l1.utility_row(player, l1.state_index(&st));
            let reference = l1.utility_row(player, l1.state_index(&at_base));
            own.iter().zip(reference).map(|(u, v)| u - v).collect()
        })
        .collect();
    Grounded { base: l1.types(player)[base].clone(), offsets }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Desc {
    Base(Grounded),
    Node(Grounded, Vec<((String, Vec<u32>), Rational)>),
}

impl Desc {
    fn head(&self) -> &Grounded {
        match self {
            Desc::Base(g) | Desc::Node(g, _) => g,
        }
    }
}

#[derive(Default)]
struct Interner {
    ids: HashMap<Desc, u32>,
    descs: Vec<Desc>,
}

impl Interner {
    fn get(&mut self, d: Desc) -> u32 {
        if let Some(&id) = self.ids.get(&d) {
            return id;
        }
        let id = self.descs.len() as u32;
        self.ids.insert(d.clone(), id);
        self.descs.push(d);
        id
    }
}

/// The level-1 structure each type is first reached in, walking beliefs and ascriptions outward
/// from the root. Unreached types fall back to the model's own level-1 structure.
fn home_structures(m: &SubjectiveModel) -> Vec<Arc<StandardPayoffStructure>> {
    let ts = &m.types;
    let mut home: Vec<Option<Arc<StandardPayoffStructure>>> = vec![None; ts.types.len()];
    let mut queue = VecDeque::from([(m.root, m.structure.clone())]);
    while let Some((t, st)) = queue.pop_front() {
        if home[t].is_some() {
            continue;
        }
        home[t] = Some(st.level1().clone());
        let opponents = st.opponents();
        for (pt, _) in &ts.types[t].belief {
            for (&o, &j) in pt.opponents.iter().zip(&opponents) {
                if home[o].is_none() {
                    queue.push_back((o, st.ascribed(j)));
                }
            }
        }
    }
    home.into_iter().map(|h| h.unwrap_or_else(|| m.structure.level1().clone())).collect()
}

/// Order-k hierarchy descriptors for every type of a model.
fn descriptors(m: &SubjectiveModel, orders: usize, interner: &mut Interner) -> Vec<Vec<u32>> {
    let ts = &m.types;
    let grounded: Vec<Grounded> =
        home_structures(m).iter().zip(&ts.types).map(|(l1, t)| ground(l1, t.player, &t.payoff_type)).collect();
    let mut out = vec![grounded.iter().map(|g| interner.get(Desc::Base(g.clone()))).collect::<Vec<_>>()];
    for k in 1..=orders {
        let prev = &out[k - 1];
        let row = ts
            .types
            .iter()
            .zip(&grounded)
            .map(|(t, g)| {
                let mut agg: BTreeMap<(String, Vec<u32>), Rational> = BTreeMap::new();
                for (pt, p) in &t.belief {
                    let key = (pt.nature.clone(), pt.opponents.iter().map(|&o| prev[o]).collect());
                    *agg.entry(key).or_insert_with(zero) += p;
                }
                interner.get(Desc::Node(g.clone(), agg.into_iter().collect()))
            })
            .collect();
        out.push(row);
    }
    out
}

/// Distances between hierarchy descriptors.
///
/// Payoff types are compared through their grounding: different base labels cost 1, otherwise the
/// Hausdorff distance of the offsets, capped at 1. Unperturbed types have zero offset, so equal
/// labels cost 0. Beliefs are compared by the Kantorovich distance over this ground cost
/// (different nature states cost 1), which is total variation whenever all ground costs are 0 or 1.
struct HierarchyMetric<'a> {
    interner: &'a Interner,
    memo: HashMap<(u32, u32), Rational>,
}

fn payoff_cost(a: &Grounded, b: &Grounded) -> Rational {
    if a.base != b.base {
        return one();
    }
    crate::payoff::hausdorff(&a.offsets, &b.offsets, |u, v| crate::payoff::sup_norm(u, v)).min(one())
}

impl HierarchyMetric<'_> {
    fn dist(&mut self, a: u32, b: u32) -> Rational {
        if let Some(d) = self.memo.get(&(a, b)) {
            return d.clone();
        }
        let (da, db) = (&self.interner.descs[a as usize], &self.interner.descs[b as usize]);
        let mut d = payoff_cost(da.head(), db.head());
        if let (Desc::Node(.., ba), Desc::Node(.., bb)) = (da, db) {
            if d < one() {
                let (ba, bb) = (ba.clone(), bb.clone());
                d = d.max(self.transport(&ba, &bb));
            }
        }
        self.memo.insert((a, b), d.clone());
        d
    }

    fn transport(&mut self, a: &[((String, Vec<u32>), Rational)], b: &[((String, Vec<u32>), Rational)]) -> Rational {
        let cost: Vec<Vec<Rational>> = a
            .iter()
            .map(|((na, oa), _)| {
                b.iter()
                    .map(|((nb, ob), _)| {
                        if na != nb {
                            return one();
                        }
                        oa.iter().zip(ob).map(|(&x, &y)| self.dist(x, y)).fold(zero(), |m, c| m.max(c))
                    })
                    .collect()
            })
            .collect();
        if cost.iter().flatten().all(|c| *c == zero() || *c == one()) {
            // Total variation against the zero-cost matching.
            return discrete_transport(a, b, &cost);
        }
        let (na, nb) = (a.len(), b.len());
        let mut lp = LinearProgram::new(na * nb);
        for (i, (_, p)) in a.iter().enumerate() {
            lp.constrain((0..nb).map(|j| (i * nb + j, one())).collect(), Relation::Eq, p.clone());
        }
        for (j, (_, q)) in b.iter().enumerate() {
            lp.constrain((0..na).map(|i| (i * nb + j, one())).collect(), Relation::Eq, q.clone());
        }
        lp.maximize((0..na).flat_map(|i| (0..nb).map(move |j| (i, j))).map(|(i, j)| (i * nb + j, -cost[i][j].clone())).collect());
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => -value,
            other => unreachable!("transport problem is feasible and bounded: {other:?}"),
        }
    }
}

/// Optimal transport when every cost is 0 or 1: one minus the largest mass movable at cost 0.
fn discrete_transport(a: &[((String, Vec<u32>), Rational)], b: &[((String, Vec<u32>), Rational)], cost: &[Vec<Rational>]) -> Rational {
    let (na, nb) = (a.len(), b.len());
    let mut lp = LinearProgram::new(0);
    let mut edges = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            if cost[i][j] == zero() {
                edges.push((i, j, lp.add_var()));
            }
        }
    }
    if edges.is_empty() {
        return one();
    }
    for (i, (_, p)) in a.iter().enumerate() {
        lp.constrain(edges.iter().filter(|e| e.0 == i).map(|e| (e.2, one())).collect(), Relation::Le, p.clone());
    }
    for (j, (_, q)) in b.iter().enumerate() {
        lp.constrain(edges.iter().filter(|e| e.1 == j).map(|e| (e.2, one())).collect(), Relation::Le, q.clone());
    }
    lp.maximize(edges.iter().map(|e| (e.2, one())).collect());
    match lp.solve() {
        LpOutcome::Optimal { value, .. } => one() - value,
        other => unreachable!("matching problem is feasible and bounded: {other:?}"),
    }
}

/// Σₖ 2⁻ᵏ·(structure distance at order k + distance between order-k beliefs), maximized over players.
///
/// Order-k structure distance is the largest Hausdorff distance between the level-1 structures
/// reached along the same ascription path of length k−1. Order-k beliefs are compared as
/// described on [`HierarchyMetric`]. Orders are evaluated until both hierarchies have entered
/// their common-knowledge tails and the type partitions have stabilized; the last term is then
/// repeated in closed form.
pub fn model_distance(a: &[SubjectiveModel], b: &[SubjectiveModel]) -> Result<Rational, EpistemicError> {
    if a.len() != b.len() {
        return Err(EpistemicError::ProfileShape);
    }
    let depth = a.iter().chain(b).map(|m| m.structure.depth()).max().unwrap_or(1);
    let type_count = a.first().map_or(0, |m| m.types.len()) + b.first().map_or(0, |m| m.types.len());
    let orders = depth + type_count + 1;
    let mut interner = Interner::default();
    let descs: Vec<(Vec<Vec<u32>>, Vec<Vec<u32>>)> = a
        .iter()
        .zip(b)
        .map(|(ma, mb)| (descriptors(ma, orders, &mut interner), descriptors(mb, orders, &mut interner)))
        .collect();
    let mut canon: HashMap<u64, CanonicalRepresentation> = HashMap::new();
    let mut best = zero();
    for ((ma, mb), (da, db)) in a.iter().zip(b).zip(&descs) {
        let mut metric = HierarchyMetric { interner: &interner, memo: HashMap::new() };
        let mut frontier: Vec<(Arc<SubjectiveStructure>, Arc<SubjectiveStructure>)> =
            vec![(ma.structure.clone(), mb.structure.clone())];
        let mut total = zero();
        let mut last = zero();
        for k in 1..=orders {
            let mut s_k = zero();
            for (x, y) in &frontier {
                let cx = canon.entry(x.level1.digest()).or_insert_with(|| x.level1.canonicalize()).clone();
                let cy = canon.entry(y.level1.digest()).or_insert_with(|| y.level1.canonicalize()).clone();
                s_k = s_k.max(hausdorff_distance(&cx, &cy)?);
            }
            let beliefs = metric.dist(da[k][ma.root], db[k][mb.root]);
            last = s_k + beliefs;
            total += pow2_inv(k) * &last;
            let mut next = Vec::new();
            let mut seen = HashSet::new();
            for (x, y) in &frontier {
                for j in x.opponents() {
                    let (ax, ay) = (x.ascribed(j), y.ascribed(j));
                    if seen.insert((ax.digest, ay.digest)) {
                        next.push((ax, ay));
                    }
                }
            }
            frontier = next;
        }
        total += pow2_inv(orders) * last;
        best = best.max(total);
    }
    Ok(best)
}
