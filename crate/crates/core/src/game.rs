//! Finite extensive forms with observed actions and possibly simultaneous moves.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub type PlayerId = usize;
pub type NodeId = usize;

/// Index into a player's canonical strategy list.
pub type StrategyId = usize;

pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormError {
    #[error("unknown player `{0}`")]
    UnknownPlayer(String),
    #[error("player index {0} out of range")]
    PlayerOutOfRange(PlayerId),
    #[error("duplicate player `{0}`")]
    DuplicatePlayer(String),
    #[error("at {node}: action `{action}` is not available to {player}")]
    UnknownAction { node: String, player: String, action: String },
    #[error("at {node}: child key has {got} actions, expected {expected}")]
    ChildArity { node: String, got: usize, expected: usize },
    #[error("at {node}: duplicate action `{action}` for {player}")]
    DuplicateAction { node: String, player: String, action: String },
}

/// Recursive description of a game tree, used to build an [`ExtensiveForm`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeSpec {
    Terminal {
        label: Option<String>,
    },
    Decision {
        /// Active players with their action names.
        moves: Vec<(PlayerId, Vec<String>)>,
        /// One entry per joint action; keys list one action per active player in player order.
        children: Vec<(Vec<String>, TreeSpec)>,
    },
}

impl TreeSpec {
    pub fn terminal(label: &str) -> Self {
        TreeSpec::Terminal { label: Some(label.to_string()) }
    }

    /// A node where a single player moves.
    pub fn single(player: PlayerId, children: Vec<(&str, TreeSpec)>) -> Self {
        TreeSpec::Decision {
            moves: vec![(player, children.iter().map(|(a, _)| a.to_string()).collect())],
            children: children.into_iter().map(|(a, t)| (vec![a.to_string()], t)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Terminal {
        label: String,
    },
    Decision {
        /// Per player; empty when the player is inactive.
        actions: Vec<Vec<String>>,
        /// Child keyed by the action indices of the active players, in player order.
        children: Vec<(Vec<usize>, NodeId)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub parent: Option<NodeId>,
    /// Joint action taken at the parent to reach this node: (player, action index) for active players.
    pub incoming: Vec<(PlayerId, usize)>,
    pub depth: usize,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        matches!(self.kind, NodeKind::Terminal { .. })
    }

    pub fn active_players(&self) -> Vec<PlayerId> {
        match &self.kind {
            NodeKind::Terminal { .. } => Vec::new(),
            NodeKind::Decision { actions, .. } => {
                (0..actions.len()).filter(|&p| !actions[p].is_empty()).collect()
            }
        }
    }

    pub fn is_active(&self, player: PlayerId) -> bool {
        match &self.kind {
            NodeKind::Terminal { .. } => false,
            NodeKind::Decision { actions, .. } => actions.get(player).is_some_and(|a| !a.is_empty()),
        }
    }
}

/// A full contingent plan: one action index per node in `H_i`, aligned with
/// [`ExtensiveForm::player_nodes`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Strategy {
    pub player: PlayerId,
    pub choices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HistoryOp {
    OwnReachable { player: PlayerId, strategy: StrategyId },
    Scratch { player: PlayerId },
    ReachableUnder { observer: PlayerId },
    Enumerated,
}

/// A subset of `H ∪ {h⁰}` tagged with the operator that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistorySet {
    pub op: HistoryOp,
    pub nodes: BTreeSet<NodeId>,
}

impl HistorySet {
    pub fn contains(&self, h: NodeId) -> bool {
        self.nodes.contains(&h)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct ExtensiveForm {
    players: Vec<String>,
    nodes: Vec<Node>,
    terminals: Vec<NodeId>,
    terminal_index: Vec<Option<usize>>,
    player_nodes: Vec<Vec<NodeId>>,
    /// `slot[player][node]` = position of node in `player_nodes[player]`.
    slot: Vec<Vec<Option<usize>>>,
    strategies: Vec<Vec<Strategy>>,
    child_lookup: Vec<HashMap<Vec<usize>, NodeId>>,
}

impl ExtensiveForm {
    pub fn new(players: Vec<String>, tree: &TreeSpec) -> Result<Self, FormError> {
        let mut seen = BTreeSet::new();
        for p in &players {
            if !seen.insert(p.clone()) {
                return Err(FormError::DuplicatePlayer(p.clone()));
            }
        }
        let mut nodes = Vec::new();
        build_node(&players, tree, None, Vec::new(), 0, &mut nodes)?;
        Ok(Self::from_nodes(players, nodes))
    }

    fn from_nodes(players: Vec<String>, nodes: Vec<Node>) -> Self {
        let n_players = players.len();
        let mut terminals = Vec::new();
        let mut terminal_index = vec![None; nodes.len()];
        let mut player_nodes = vec![Vec::new(); n_players];
        let mut slot = vec![vec![None; nodes.len()]; n_players];
        for id in 0..nodes.len() {
            if nodes[id].is_terminal() {
                terminal_index[id] = Some(terminals.len());
                terminals.push(id);
            } else {
                for p in nodes[id].active_players() {
                    slot[p][id] = Some(player_nodes[p].len());
                    player_nodes[p].push(id);
                }
            }
        }
        let mut form = ExtensiveForm {
            players,
            nodes,
            terminals,
            terminal_index,
            player_nodes,
            slot,
            strategies: Vec::new(),
            child_lookup: Vec::new(),
        };
        // Unlabelled leaves are named by their action path.
        for id in 0..form.nodes.len() {
            if matches!(&form.nodes[id].kind, NodeKind::Terminal { label } if label.is_empty()) {
                let path = form.history_name(id);
                form.nodes[id].kind = NodeKind::Terminal { label: path };
            }
        }
        form.child_lookup = form
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Terminal { .. } => HashMap::new(),
                NodeKind::Decision { children, .. } => children.iter().cloned().collect(),
            })
            .collect();
        form.strategies = (0..n_players).map(|p| form.build_strategies(p)).collect();
        form
    }

    fn build_strategies(&self, player: PlayerId) -> Vec<Strategy> {
        let radices: Vec<usize> =
            self.player_nodes[player].iter().map(|&h| self.actions(h, player).len()).collect();
        let mut out = Vec::new();
        let mut choices = vec![0usize; radices.len()];
        loop {
            out.push(Strategy { player, choices: choices.clone() });
            // Mixed-radix increment, first node most significant.
            let mut pos = radices.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                choices[pos] += 1;
                if choices[pos] < radices[pos] {
                    break;
                }
                choices[pos] = 0;
            }
        }
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn player_index(&self, name: &str) -> Option<PlayerId> {
        self.players.iter().position(|p| p == name)
    }

    pub fn player_name(&self, p: PlayerId) -> &str {
        &self.players[p]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn terminals(&self) -> &[NodeId] {
        &self.terminals
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    /// Position of a terminal node in [`terminals`](Self::terminals).
    pub fn terminal_index(&self, z: NodeId) -> Option<usize> {
        self.terminal_index.get(z).copied().flatten()
    }

    pub fn terminal_label(&self, z: NodeId) -> &str {
        match &self.nodes[z].kind {
            NodeKind::Terminal { label } => label,
            NodeKind::Decision { .. } => "",
        }
    }

    pub fn terminal_by_label(&self, label: &str) -> Option<NodeId> {
        self.terminals.iter().copied().find(|&z| self.terminal_label(z) == label)
    }

    /// `H_i` in canonical (pre-order) order.
    pub fn player_nodes(&self, player: PlayerId) -> &[NodeId] {
        &self.player_nodes[player]
    }

    pub fn actions(&self, h: NodeId, player: PlayerId) -> &[String] {
        match &self.nodes[h].kind {
            NodeKind::Decision { actions, .. } => &actions[player],
            NodeKind::Terminal { .. } => &[],
        }
    }

    /// Every node weakly preceding `h`, root first.
    pub fn path_to(&self, h: NodeId) -> Vec<NodeId> {
        let mut path = vec![h];
        let mut cur = h;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `a ≼ b`.
    pub fn weakly_precedes(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            if self.nodes[c].depth < self.nodes[a].depth {
                return false;
            }
            cur = self.nodes[c].parent;
        }
        false
    }

    /// Readable path name; the root is `h0` and simultaneous moves are joined with `&`.
    pub fn history_name(&self, h: NodeId) -> String {
        if h == ROOT {
            return "h0".to_string();
        }
        let path = self.path_to(h);
        let mut parts = Vec::new();
        for &n in &path[1..] {
            let parent = self.nodes[n].parent.unwrap();
            let moves: Vec<&str> = self.nodes[n]
                .incoming
                .iter()
                .map(|&(p, a)| self.actions(parent, p)[a].as_str())
                .collect();
            parts.push(moves.join("&"));
        }
        parts.join(".")
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        (0..self.nodes.len()).find(|&h| self.history_name(h) == name)
    }

    /// Label for a node: terminal label at leaves, path name elsewhere.
    pub fn node_label(&self, h: NodeId) -> String {
        if self.nodes[h].is_terminal() {
            self.terminal_label(h).to_string()
        } else {
            self.history_name(h)
        }
    }

    // ---- strategies ----

    pub fn strategies(&self, player: PlayerId) -> &[Strategy] {
        &self.strategies[player]
    }

    pub fn num_strategies(&self, player: PlayerId) -> usize {
        self.strategies[player].len()
    }

    pub fn enumerate_strategies(&self, player: PlayerId) -> Result<&[Strategy], FormError> {
        self.strategies.get(player).map(|v| v.as_slice()).ok_or(FormError::PlayerOutOfRange(player))
    }

    /// Action index chosen by strategy `s` of `player` at `h`.
    pub fn choice(&self, player: PlayerId, s: StrategyId, h: NodeId) -> Option<usize> {
        self.slot[player][h].map(|k| self.strategies[player][s].choices[k])
    }

    pub fn strategy_name(&self, player: PlayerId, s: StrategyId) -> String {
        let st = &self.strategies[player][s];
        if st.choices.is_empty() {
            return "-".to_string();
        }
        st.choices
            .iter()
            .zip(&self.player_nodes[player])
            .map(|(&c, &h)| self.actions(h, player)[c].as_str())
            .collect::<Vec<_>>()
            .join(".")
    }

    pub fn strategy_by_name(&self, player: PlayerId, name: &str) -> Option<StrategyId> {
        (0..self.num_strategies(player)).find(|&s| self.strategy_name(player, s) == name)
    }

    pub fn strategy_set_name(&self, player: PlayerId, set: &BTreeSet<StrategyId>) -> String {
        let names: Vec<String> = set.iter().map(|&s| self.strategy_name(player, s)).collect();
        format!("{{{}}}", names.join(", "))
    }

    /// Leaf reached from `start` when every active player follows `choose(player, node)`.
    pub fn play_from(&self, start: NodeId, mut choose: impl FnMut(PlayerId, NodeId) -> usize) -> NodeId {
        let mut cur = start;
        loop {
            let node = &self.nodes[cur];
            match &node.kind {
                NodeKind::Terminal { .. } => return cur,
                NodeKind::Decision { .. } => {
                    let key: Vec<usize> =
                        node.active_players().into_iter().map(|p| choose(p, cur)).collect();
                    cur = *self.child_lookup[cur]
                        .get(&key)
                        .expect("validated form has a child for every joint action");
                }
            }
        }
    }

    /// `z(s|h)`: the leaf reached by playing `profile` (one strategy id per player) from `start`.
    pub fn outcome(&self, profile: &[StrategyId], start: NodeId) -> NodeId {
        self.play_from(start, |p, h| self.choice(p, profile[p], h).unwrap())
    }

    /// `S_i(h)`.
    pub fn reaching_strategies(&self, h: NodeId, player: PlayerId) -> BTreeSet<StrategyId> {
        let path = self.path_to(h);
        let mut required = Vec::new();
        for &n in &path[1..] {
            let parent = self.nodes[n].parent.unwrap();
            for &(p, a) in &self.nodes[n].incoming {
                if p == player {
                    required.push((self.slot[player][parent].unwrap(), a));
                }
            }
        }
        (0..self.num_strategies(player))
            .filter(|&s| {
                let ch = &self.strategies[player][s].choices;
                required.iter().all(|&(k, a)| ch[k] == a)
            })
            .collect()
    }

    pub fn reaches(&self, player: PlayerId, s: StrategyId, h: NodeId) -> bool {
        let path = self.path_to(h);
        path.windows(2).all(|w| {
            self.nodes[w[1]]
                .incoming
                .iter()
                .all(|&(p, a)| p != player || self.choice(player, s, w[0]) == Some(a))
        })
    }

    /// `H_i(s_i)`.
    pub fn own_reachable_histories(&self, player: PlayerId, s: StrategyId) -> HistorySet {
        let nodes = self.player_nodes[player]
            .iter()
            .copied()
            .filter(|&h| self.reaches(player, s, h))
            .collect();
        HistorySet { op: HistoryOp::OwnReachable { player, strategy: s }, nodes }
    }

    /// Whether the path to leaf `z` follows `s` at each of the player's nodes on it.
    pub fn consistent_with(&self, player: PlayerId, s: StrategyId, z: NodeId) -> bool {
        self.reaches(player, s, z)
    }

    /// Nodes weakly following `h` where `player` is active.
    pub fn player_nodes_following(&self, player: PlayerId, h: NodeId) -> Vec<NodeId> {
        self.player_nodes[player].iter().copied().filter(|&n| self.weakly_precedes(h, n)).collect()
    }

    /// Outcome class `[s]` (agreement on `H_i(s)`), or with `at = Some(h)` the continuation
    /// class `[s]_h` (agreement at the player's nodes weakly following `h`).
    pub fn equivalence_classes(&self, player: PlayerId, s: StrategyId, at: Option<NodeId>) -> BTreeSet<StrategyId> {
        let nodes: Vec<NodeId> = match at {
            None => self.own_reachable_histories(player, s).nodes.into_iter().collect(),
            Some(h) => self.player_nodes_following(player, h),
        };
        (0..self.num_strategies(player))
            .filter(|&t| nodes.iter().all(|&n| self.choice(player, t, n) == self.choice(player, s, n)))
            .collect()
    }

    pub fn agree_at(&self, player: PlayerId, s: StrategyId, t: StrategyId, nodes: &[NodeId]) -> bool {
        nodes.iter().all(|&n| self.choice(player, t, n) == self.choice(player, s, n))
    }

    /// Structural checks; an empty list means the form is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut labels = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let name = self.history_name(id);
            match &node.kind {
                NodeKind::Terminal { label } => {
                    if let Some(prev) = labels.insert(label.clone(), id) {
                        out.push(Violation {
                            node: name,
                            message: format!("terminal label `{label}` also used at {}", self.history_name(prev)),
                        });
                    }
                }
                NodeKind::Decision { actions, children } => {
                    let active = node.active_players();
                    if active.is_empty() {
                        out.push(Violation { node: name.clone(), message: "no active player".into() });
                        continue;
                    }
                    for &p in &active {
                        if actions[p].len() < 2 {
                            out.push(Violation {
                                node: name.clone(),
                                message: format!("{} has fewer than two actions", self.players[p]),
                            });
                        }
                    }
                    let expected: usize = active.iter().map(|&p| actions[p].len()).product();
                    let mut keys = BTreeSet::new();
                    for (key, _) in children {
                        if !keys.insert(key.clone()) {
                            out.push(Violation {
                                node: name.clone(),
                                message: format!("duplicate child for joint action {key:?}"),
                            });
                        }
                    }
                    if keys.len() != expected {
                        out.push(Violation {
                            node: name.clone(),
                            message: format!(
                                "children not in bijection with joint actions: {} of {expected}",
                                keys.len()
                            ),
                        });
                    }
                    if active.len() == 1 {
                        if let Some(parent) = node.parent {
                            let pa = self.nodes[parent].active_players();
                            if pa == active {
                                out.push(Violation {
                                    node: name.clone(),
                                    message: format!(
                                        "{} is the only active player here and at the preceding node",
                                        self.players[active[0]]
                                    ),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cartesian product in lexicographic order; the product of no sets is one empty tuple.
pub fn cartesian<T: Clone>(sets: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for set in sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for x in set {
                let mut v = prefix.clone();
                v.push(x.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}

pub fn validate_extensive_form(form: &ExtensiveForm) -> Vec<Violation> {
    form.validate()
}

fn build_node(
    players: &[String],
    spec: &TreeSpec,
    parent: Option<NodeId>,
    incoming: Vec<(PlayerId, usize)>,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> Result<NodeId, FormError> {
    let id = nodes.len();
    match spec {
        TreeSpec::Terminal { label } => {
            nodes.push(Node {
                parent,
                incoming,
                depth,
                kind: NodeKind::Terminal { label: label.clone().unwrap_or_default() },
            });
            Ok(id)
        }
        TreeSpec::Decision { moves, children } => {
            let mut actions = vec![Vec::new(); players.len()];
            let here = format!("node #{id}");
            for (p, acts) in moves {
                if *p >= players.len() {
                    return Err(FormError::PlayerOutOfRange(*p));
                }
                let mut seen = BTreeSet::new();
                for a in acts {
                    if !seen.insert(a) {
                        return Err(FormError::DuplicateAction {
                            node: here.clone(),
                            player: players[*p].clone(),
                            action: a.clone(),
                        });
                    }
                }
                actions[*p] = acts.clone();
            }
            let active: Vec<PlayerId> = (0..players.len()).filter(|&p| !actions[p].is_empty()).collect();
            nodes.push(Node {
                parent,
                incoming,
                depth,
                kind: NodeKind::Decision { actions: actions.clone(), children: Vec::new() },
            });
            let mut kids = Vec::new();
            for (key, child) in children {
                if key.len() != active.len() {
                    return Err(FormError::ChildArity { node: here, got: key.len(), expected: active.len() });
                }
                let mut idx = Vec::new();
                for (&p, a) in active.iter().zip(key) {
                    let k = actions[p].iter().position(|x| x == a).ok_or_else(|| FormError::UnknownAction {
                        node: here.clone(),
                        player: players[p].clone(),
                        action: a.clone(),
                    })?;
                    idx.push(k);
                }
                let inc = active.iter().copied().zip(idx.iter().copied()).collect();
                let cid = build_node(players, child, Some(id), inc, depth + 1, nodes)?;
                kids.push((idx, cid));
            }
            if let NodeKind::Decision { children, .. } = &mut nodes[id].kind {
                *children = kids;
            }
            Ok(id)
        }
    }
}
