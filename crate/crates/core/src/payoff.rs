//! Standard payoff structures, canonical representations and richness.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::game::{cartesian, ExtensiveForm, PlayerId, StrategyId};
use crate::rational::{abs_diff, zero, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayoffError {
    #[error("structure `{0}`: empty nature state set")]
    NoNatureStates(String),
    #[error("structure `{name}`: player {player} has no payoff types")]
    NoTypes { name: String, player: PlayerId },
    #[error("structure `{name}`: duplicate label `{label}`")]
    DuplicateLabel { name: String, label: String },
    #[error("structure `{name}`: no utility for player {player} at terminal {terminal} in state {state}")]
    Missing { name: String, player: PlayerId, terminal: usize, state: String },
    #[error("structure `{name}`: table has {got} entries, expected {expected}")]
    TableSize { name: String, got: usize, expected: usize },
    #[error("terminal sets differ ({0} vs {1})")]
    TerminalMismatch(usize, usize),
    #[error("player counts differ ({0} vs {1})")]
    PlayerMismatch(usize, usize),
}

/// A payoff state `θ = (θ₀, (θᵢ))` by index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PayoffState {
    pub nature: usize,
    pub types: Vec<usize>,
}

/// `Υ = (Θ₀, (Θᵢ, uᵢ))` over the terminals of a fixed extensive form.
#[derive(Debug, Clone)]
pub struct StandardPayoffStructure {
    name: String,
    nature: Vec<String>,
    types: Vec<Vec<String>>,
    num_terminals: usize,
    /// Indexed by `(state * players + player) * terminals + terminal`.
    utilities: Vec<Rational>,
    /// Per player and type, the type it was derived from by a perturbation (itself for originals).
    /// Metadata like the name: not part of equality or the digest.
    base_types: Vec<Vec<usize>>,
    digest: u64,
}

impl PartialEq for StandardPayoffStructure {
    fn eq(&self, other: &Self) -> bool {
        self.nature == other.nature
            && self.types == other.types
            && self.num_terminals == other.num_terminals
            && self.utilities == other.utilities
    }
}

impl Eq for StandardPayoffStructure {}

impl StandardPayoffStructure {
    pub fn from_fn(
        name: &str,
        nature: Vec<String>,
        types: Vec<Vec<String>>,
        num_terminals: usize,
        mut u: impl FnMut(PlayerId, usize, &PayoffState) -> Rational,
    ) -> Result<Self, PayoffError> {
        let n = types.len();
        let states = Self::count_states(&nature, &types);
        let mut table = Vec::with_capacity(states * n * num_terminals);
        for idx in 0..states {
            let st = Self::decode(&nature, &types, idx);
            for p in 0..n {
                for z in 0..num_terminals {
                    table.push(Some(u(p, z, &st)));
                }
            }
        }
        Self::from_table(name, nature, types, num_terminals, table)
    }

    /// Builds from a dense table laid out as in [`utility`](Self::utility); `None` entries are reported.
    pub fn from_table(
        name: &str,
        nature: Vec<String>,
        types: Vec<Vec<String>>,
        num_terminals: usize,
        table: Vec<Option<Rational>>,
    ) -> Result<Self, PayoffError> {
        if nature.is_empty() {
            return Err(PayoffError::NoNatureStates(name.into()));
        }
        check_labels(name, &nature)?;
        for (p, t) in types.iter().enumerate() {
            if t.is_empty() {
                return Err(PayoffError::NoTypes { name: name.into(), player: p });
            }
            check_labels(name, t)?;
        }
        let n = types.len();
        let states = Self::count_states(&nature, &types);
        let expected = states * n * num_terminals;
        if table.len() != expected {
            return Err(PayoffError::TableSize { name: name.into(), got: table.len(), expected });
        }
        let mut utilities = Vec::with_capacity(expected);
        for (k, v) in table.into_iter().enumerate() {
            match v {
                Some(q) => utilities.push(q),
                None => {
                    let z = k % num_terminals;
                    let p = (k / num_terminals) % n;
                    let st = Self::decode(&nature, &types, k / num_terminals / n);
                    let label = describe_state(&nature, &types, &st);
                    return Err(PayoffError::Missing { name: name.into(), player: p, terminal: z, state: label });
                }
            }
        }
        let base_types = types.iter().map(|t| (0..t.len()).collect()).collect();
        let mut s =
            StandardPayoffStructure { name: name.into(), nature, types, num_terminals, utilities, base_types, digest: 0 };
        let mut h = DefaultHasher::new();
        s.nature.hash(&mut h);
        s.types.hash(&mut h);
        s.num_terminals.hash(&mut h);
        s.utilities.hash(&mut h);
        s.digest = h.finish();
        Ok(s)
    }

    fn count_states(nature: &[String], types: &[Vec<String>]) -> usize {
        nature.len() * types.iter().map(|t| t.len()).product::<usize>()
    }

    fn decode(nature: &[String], types: &[Vec<String>], mut idx: usize) -> PayoffState {
        let mut ts = vec![0; types.len()];
        for p in (0..types.len()).rev() {
            ts[p] = idx % types[p].len();
            idx /= types[p].len();
        }
        debug_assert!(idx < nature.len());
        PayoffState { nature: idx, types: ts }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Content hash; ignores the name.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn num_players(&self) -> usize {
        self.types.len()
    }

    pub fn num_terminals(&self) -> usize {
        self.num_terminals
    }

    pub fn nature(&self) -> &[String] {
        &self.nature
    }

    /// Records which original type each type was derived from. Chains are collapsed, so the entry
    /// always names a type that is its own base.
    pub fn with_base_types(mut self, base_types: Vec<Vec<usize>>) -> Self {
        assert_eq!(base_types.len(), self.types.len(), "one base list per player");
        for (p, b) in base_types.iter().enumerate() {
            assert_eq!(b.len(), self.types[p].len(), "one base per type");
        }
        let mut collapsed = base_types.clone();
        for (p, b) in collapsed.iter_mut().enumerate() {
            for t in b.iter_mut() {
                for _ in 0..base_types[p].len() {
                    *t = base_types[p][*t];
                }
                assert_eq!(base_types[p][*t], *t, "derivation chains must end at an original type");
            }
        }
        self.base_types = collapsed;
        self
    }

    pub fn base_type(&self, player: PlayerId, t: usize) -> usize {
        self.base_types[player][t]
    }

    pub fn types(&self, player: PlayerId) -> &[String] {
        &self.types[player]
    }

    pub fn nature_index(&self, label: &str) -> Option<usize> {
        self.nature.iter().position(|x| x == label)
    }

    pub fn type_index(&self, player: PlayerId, label: &str) -> Option<usize> {
        self.types.get(player)?.iter().position(|x| x == label)
    }

    pub fn num_states(&self) -> usize {
        Self::count_states(&self.nature, &self.types)
    }

    pub fn state(&self, idx: usize) -> PayoffState {
        Self::decode(&self.nature, &self.types, idx)
    }

    pub fn state_index(&self, st: &PayoffState) -> usize {
        let mut idx = st.nature;
        for (p, &t) in st.types.iter().enumerate() {
            idx = idx * self.types[p].len() + t;
        }
        idx
    }

    pub fn states(&self) -> impl Iterator<Item = PayoffState> + '_ {
        (0..self.num_states()).map(|i| self.state(i))
    }

    pub fn describe(&self, st: &PayoffState) -> String {
        describe_state(&self.nature, &self.types, st)
    }

    /// `uᵢ(z, θ)` with `z` given as a terminal index.
    pub fn utility(&self, player: PlayerId, terminal: usize, state: usize) -> &Rational {
        &self.utilities[(state * self.num_players() + player) * self.num_terminals + terminal]
    }

    /// `uᵢ(·, θ)` over all terminals.
    pub fn utility_row(&self, player: PlayerId, state: usize) -> &[Rational] {
        let start = (state * self.num_players() + player) * self.num_terminals;
        &self.utilities[start..start + self.num_terminals]
    }

    /// Utility profile at a state, player-major.
    pub fn profile(&self, state: usize) -> Vec<Rational> {
        let n = self.num_players() * self.num_terminals;
        self.utilities[state * n..(state + 1) * n].to_vec()
    }

    /// Whether replacing player `i`'s type `a` by `b` leaves every opponent's utilities unchanged.
    pub fn payoff_equivalent_for_opponents(&self, player: PlayerId, a: usize, b: usize) -> bool {
        self.states().filter(|st| st.types[player] == a).all(|st| {
            let mut other = st.clone();
            other.types[player] = b;
            let (x, y) = (self.state_index(&st), self.state_index(&other));
            (0..self.num_players()).filter(|&j| j != player).all(|j| self.utility_row(j, x) == self.utility_row(j, y))
        })
    }

    pub fn canonicalize(&self) -> CanonicalRepresentation {
        let mut level0 = BTreeSet::new();
        let mut per_player = vec![BTreeSet::new(); self.num_players()];
        let mut slices: Vec<Vec<BTreeSet<Vec<Rational>>>> =
            (0..self.num_players()).map(|p| vec![BTreeSet::new(); self.types[p].len()]).collect();
        for st in self.states() {
            let prof = self.profile(self.state_index(&st));
            level0.insert(prof.clone());
            for (p, &t) in st.types.iter().enumerate() {
                slices[p][t].insert(prof.clone());
            }
        }
        for (p, s) in slices.into_iter().enumerate() {
            per_player[p] = s.into_iter().collect();
        }
        CanonicalRepresentation { players: self.num_players(), terminals: self.num_terminals, level0, per_player }
    }

    /// For each of `player`'s types, the set of that player's own utility vectors across states.
    pub fn own_slices(&self, player: PlayerId) -> BTreeSet<BTreeSet<Vec<Rational>>> {
        let mut slices = vec![BTreeSet::new(); self.types[player].len()];
        for st in self.states() {
            let row = self.utility_row(player, self.state_index(&st)).to_vec();
            slices[st.types[player]].insert(row);
        }
        slices.into_iter().collect()
    }
}

fn check_labels(name: &str, labels: &[String]) -> Result<(), PayoffError> {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(PayoffError::DuplicateLabel { name: name.into(), label: l.clone() });
        }
    }
    Ok(())
}

fn describe_state(nature: &[String], types: &[Vec<String>], st: &PayoffState) -> String {
    let mut parts = vec![nature[st.nature].clone()];
    parts.extend(st.types.iter().enumerate().map(|(p, &t)| types[p][t].clone()));
    format!("({})", parts.join(","))
}

/// `𝒞(Υ)`: the set of utility profiles and, per player, the family of type slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalRepresentation {
    pub players: usize,
    pub terminals: usize,
    pub level0: BTreeSet<Vec<Rational>>,
    pub per_player: Vec<BTreeSet<BTreeSet<Vec<Rational>>>>,
}

pub fn sup_norm(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| abs_diff(x, y)).max().unwrap_or_else(zero)
}

/// Hausdorff distance between finite non-empty sets under a given point distance.
pub fn hausdorff<T>(a: &BTreeSet<T>, b: &BTreeSet<T>, d: impl Fn(&T, &T) -> Rational) -> Rational {
    let directed = |x: &BTreeSet<T>, y: &BTreeSet<T>| {
        x.iter().map(|p| y.iter().map(|q| d(p, q)).min().unwrap_or_else(zero)).max().unwrap_or_else(zero)
    };
    directed(a, b).max(directed(b, a))
}

pub fn hausdorff_distance(a: &CanonicalRepresentation, b: &CanonicalRepresentation) -> Result<Rational, PayoffError> {
    if a.terminals != b.terminals {
        return Err(PayoffError::TerminalMismatch(a.terminals, b.terminals));
    }
    if a.players != b.players {
        return Err(PayoffError::PlayerMismatch(a.players, b.players));
    }
    let point = |x: &Vec<Rational>, y: &Vec<Rational>| sup_norm(x, y);
    let mut best = hausdorff(&a.level0, &b.level0, point);
    for (fa, fb) in a.per_player.iter().zip(&b.per_player) {
        best = best.max(hausdorff(fa, fb, |x, y| hausdorff(x, y, point)));
    }
    Ok(best)
}

/// Pairs `(z, z′)` of terminal indices such that conditional dominance of `s` requires `u(z) > u(z′)`.
pub fn dominance_requirements(form: &ExtensiveForm, player: PlayerId, s: StrategyId) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    let opponents: Vec<PlayerId> = (0..form.num_players()).filter(|&p| p != player).collect();
    for &h in &form.own_reachable_histories(player, s).nodes {
        let reach: Vec<Vec<StrategyId>> =
            opponents.iter().map(|&j| form.reaching_strategies(h, j).into_iter().collect()).collect();
        let own = form.choice(player, s, h);
        for alt in 0..form.num_strategies(player) {
            if form.choice(player, alt, h) == own {
                continue;
            }
            for opp in cartesian(&reach) {
                let mut prof = vec![0; form.num_players()];
                for (k, &j) in opponents.iter().enumerate() {
                    prof[j] = opp[k];
                }
                prof[player] = s;
                let z = form.outcome(&prof, h);
                prof[player] = alt;
                let z2 = form.outcome(&prof, h);
                out.insert((form.terminal_index(z).unwrap(), form.terminal_index(z2).unwrap()));
            }
        }
    }
    out
}

fn dominant_under(req: &BTreeSet<(usize, usize)>, row: &[Rational]) -> bool {
    req.iter().all(|&(z, w)| row[z] > row[w])
}

/// Strict superiority of `s` at every own-reachable history against every reaching opponent profile.
pub fn is_conditionally_dominant(
    form: &ExtensiveForm,
    ups: &StandardPayoffStructure,
    state: &PayoffState,
    player: PlayerId,
    s: StrategyId,
) -> bool {
    let req = dominance_requirements(form, player, s);
    dominant_under(&req, ups.utility_row(player, ups.state_index(state)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RichnessReport {
    pub rich: bool,
    /// `(player, type, strategy) ↦ witness type`, for every triple that has one.
    pub witnesses: BTreeMap<(PlayerId, usize, StrategyId), usize>,
    pub missing: Vec<(PlayerId, usize, StrategyId)>,
}

pub fn is_rich(form: &ExtensiveForm, ups: &StandardPayoffStructure) -> RichnessReport {
    let mut witnesses = BTreeMap::new();
    let mut missing = Vec::new();
    for i in 0..ups.num_players() {
        let n_types = ups.types(i).len();
        for s in 0..form.num_strategies(i) {
            let req = dominance_requirements(form, i, s);
            let dominant: Vec<usize> = (0..n_types)
                .filter(|&w| {
                    ups.states()
                        .filter(|st| st.types[i] == w)
                        .all(|st| dominant_under(&req, ups.utility_row(i, ups.state_index(&st))))
                })
                .collect();
            for theta in 0..n_types {
                let found = dominant
                    .iter()
                    .copied()
                    .find(|&w| w == theta)
                    .or_else(|| dominant.iter().copied().find(|&w| ups.payoff_equivalent_for_opponents(i, theta, w)));
                match found {
                    Some(w) => {
                        witnesses.insert((i, theta, s), w);
                    }
                    None => missing.push((i, theta, s)),
                }
            }
        }
    }
    RichnessReport { rich: missing.is_empty(), witnesses, missing }
}
