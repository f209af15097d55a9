//! Conditional probability systems over opponents' strategies, nature states and opponent types.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::epistemic::{consistent_types, SubjectiveModel, SubjectiveStructure, TypeId, TypeStructure};
use crate::game::{cartesian, ExtensiveForm, HistoryOp, HistorySet, NodeId, PlayerId, StrategyId, ROOT};
use crate::payoff::PayoffState;
use crate::rational::{format_rational, one, zero, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CpsError {
    #[error("history {0} is not in the belief domain")]
    NotInDomain(String),
    #[error("atom {0} is outside the belief space")]
    UnknownAtom(String),
}

/// One point of `S₋ᵢ × Θ₀ × T₋ᵢ`; opponents in increasing player order, nature indexed in level 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub strategies: Vec<StrategyId>,
    pub nature: usize,
    pub types: Vec<TypeId>,
}

pub type Belief = BTreeMap<Atom, Rational>;

/// `μᵢ`: one belief per history in `Hᵢ ∪ {h⁰}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cps {
    pub owner: PlayerId,
    pub beliefs: BTreeMap<NodeId, Belief>,
}

impl Cps {
    pub fn belief(&self, h: NodeId) -> Option<&Belief> {
        self.beliefs.get(&h)
    }
}

/// Precomputed belief space and payoff tables for one player at one subjective model.
pub struct ModelContext<'a> {
    pub form: &'a ExtensiveForm,
    pub player: PlayerId,
    pub structure: Arc<SubjectiveStructure>,
    pub types: Arc<TypeStructure>,
    pub type_id: TypeId,
    pub opponents: Vec<PlayerId>,
    /// `T_j(d_{j|i})` per opponent, restricted to payoff types the owner's level 1 can evaluate.
    pub opponent_types: Vec<Vec<TypeId>>,
    /// `h⁰` followed by the rest of `Hᵢ`, ancestors first.
    pub domain: Vec<NodeId>,
    pub atoms: Vec<Atom>,
    pub opponent_profiles: Vec<Vec<StrategyId>>,
    atom_index: HashMap<Atom, usize>,
    atom_profile: Vec<usize>,
    atom_state: Vec<usize>,
    /// `reach[pos][a]`: atom `a` lies in `S₋ᵢ(h) × Θ₀ × T₋ᵢ` for `h = domain[pos]`.
    reach: Vec<Vec<bool>>,
    /// `outcome[pos][s][profile]`: terminal index of `z(s₋ᵢ; s | h)`.
    outcome: Vec<Vec<Vec<usize>>>,
    /// `πᵢ(tᵢ)` keyed by `(nature, opponent types)`.
    pub prior: BTreeMap<(usize, Vec<TypeId>), Rational>,
}

impl<'a> ModelContext<'a> {
    pub fn new(form: &'a ExtensiveForm, model: &SubjectiveModel) -> Self {
        let opponent_types = model
            .structure
            .opponents()
            .into_iter()
            .map(|j| consistent_types(&model.structure.ascribed(j), &model.types).into_iter().collect())
            .collect();
        Self::with_opponent_types(form, model.structure.clone(), model.types.clone(), model.root, opponent_types)
    }

    pub fn with_opponent_types(
        form: &'a ExtensiveForm,
        structure: Arc<SubjectiveStructure>,
        types: Arc<TypeStructure>,
        type_id: TypeId,
        opponent_types: Vec<Vec<TypeId>>,
    ) -> Self {
        let player = structure.owner();
        let l1 = structure.level1().clone();
        let opponents = structure.opponents();
        let opponent_types: Vec<Vec<TypeId>> = opponents
            .iter()
            .zip(opponent_types)
            .map(|(&j, ts)| ts.into_iter().filter(|&t| l1.type_index(j, &types.get(t).payoff_type).is_some()).collect())
            .collect();
        let mut domain = vec![ROOT];
        domain.extend(form.player_nodes(player).iter().copied().filter(|&h| h != ROOT));
        let opp_sets: Vec<Vec<StrategyId>> =
            opponents.iter().map(|&j| (0..form.num_strategies(j)).collect()).collect();
        let opponent_profiles = cartesian(&opp_sets);
        let type_profiles = cartesian(&opponent_types);
        let own_type = l1.type_index(player, &types.get(type_id).payoff_type).expect("consistent root type");
        let mut atoms = Vec::new();
        let mut atom_profile = Vec::new();
        let mut atom_state = Vec::new();
        for (pi, prof) in opponent_profiles.iter().enumerate() {
            for nature in 0..l1.nature().len() {
                for tp in &type_profiles {
                    let mut st = PayoffState { nature, types: vec![0; l1.num_players()] };
                    st.types[player] = own_type;
                    for (k, &j) in opponents.iter().enumerate() {
                        st.types[j] = l1.type_index(j, &types.get(tp[k]).payoff_type).unwrap();
                    }
                    atoms.push(Atom { strategies: prof.clone(), nature, types: tp.clone() });
                    atom_profile.push(pi);
                    atom_state.push(l1.state_index(&st));
                }
            }
        }
        let atom_index = atoms.iter().cloned().enumerate().map(|(k, a)| (a, k)).collect();
        let reach_sets: Vec<Vec<Vec<bool>>> = domain
            .iter()
            .map(|&h| {
                opponents
                    .iter()
                    .map(|&j| {
                        let r = form.reaching_strategies(h, j);
                        (0..form.num_strategies(j)).map(|s| r.contains(&s)).collect()
                    })
                    .collect()
            })
            .collect();
        let profile_reach: Vec<Vec<bool>> = reach_sets
            .iter()
            .map(|per| {
                opponent_profiles.iter().map(|prof| prof.iter().enumerate().all(|(k, &s)| per[k][s])).collect()
            })
            .collect();
        let reach = profile_reach.iter().map(|pr| atom_profile.iter().map(|&p| pr[p]).collect()).collect();
        let outcome = domain
            .iter()
            .map(|&h| {
                (0..form.num_strategies(player))
                    .map(|s| {
                        opponent_profiles
                            .iter()
                            .map(|prof| {
                                let mut full = vec![0; form.num_players()];
                                full[player] = s;
                                for (k, &j) in opponents.iter().enumerate() {
                                    full[j] = prof[k];
                                }
                                form.terminal_index(form.outcome(&full, h)).unwrap()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut prior = BTreeMap::new();
        for (pt, p) in &types.get(type_id).belief {
            let nature = l1.nature_index(&pt.nature).expect("consistent root type");
            prior.insert((nature, pt.opponents.clone()), p.clone());
        }
        ModelContext {
            form,
            player,
            structure,
            types,
            type_id,
            opponents,
            opponent_types,
            domain,
            atoms,
            opponent_profiles,
            atom_index,
            atom_profile,
            atom_state,
            reach,
            outcome,
            prior,
        }
    }

    pub fn num_strategies(&self) -> usize {
        self.form.num_strategies(self.player)
    }

    pub fn position(&self, h: NodeId) -> Option<usize> {
        self.domain.iter().position(|&x| x == h)
    }

    pub fn atom_id(&self, a: &Atom) -> Option<usize> {
        self.atom_index.get(a).copied()
    }

    /// Whether atom `a` is admissible at domain position `pos`.
    pub fn in_support_space(&self, pos: usize, a: usize) -> bool {
        self.reach[pos][a]
    }

    /// `uᵢ(z(s₋ᵢ; s | h), θ)` for atom `a` at domain position `pos`.
    pub fn utility(&self, pos: usize, s: StrategyId, a: usize) -> &Rational {
        let z = self.outcome[pos][s][self.atom_profile[a]];
        self.structure.level1().utility(self.player, z, self.atom_state[a])
    }

    /// Whether `s` and `t` induce the same outcome from `domain[pos]` against every opponent profile.
    pub fn same_continuation(&self, pos: usize, s: StrategyId, t: StrategyId) -> bool {
        self.outcome[pos][s] == self.outcome[pos][t]
    }

    pub fn describe_atom(&self, a: &Atom) -> String {
        let strategies: Vec<String> =
            self.opponents.iter().zip(&a.strategies).map(|(&j, &s)| self.form.strategy_name(j, s)).collect();
        let types: Vec<&str> = a.types.iter().map(|&t| self.types.label(t)).collect();
        let nature = self.structure.level1().nature().get(a.nature).map_or("?", |s| s.as_str());
        format!("({}; {}; {})", strategies.join(","), nature, types.join(","))
    }

    /// `Uᵢ(μᵢ, s | θᵢ, h)`.
    pub fn expected_utility(&self, belief: &Belief, s: StrategyId, h: NodeId) -> Result<Rational, CpsError> {
        let pos = self.position(h).ok_or_else(|| CpsError::NotInDomain(self.form.history_name(h)))?;
        let mut total = zero();
        for (atom, p) in belief {
            let a = self.atom_id(atom).ok_or_else(|| CpsError::UnknownAtom(self.describe_atom(atom)))?;
            total += p * self.utility(pos, s, a);
        }
        Ok(total)
    }

    /// `rᵢ(θᵢ, μᵢ)`: strategies optimal at every history they reach.
    pub fn best_responses(&self, cps: &Cps) -> Result<BTreeSet<StrategyId>, CpsError> {
        let n = self.num_strategies();
        let mut optimal = vec![BTreeSet::new(); self.domain.len()];
        for (pos, &h) in self.domain.iter().enumerate() {
            let belief = cps.beliefs.get(&h).ok_or_else(|| CpsError::NotInDomain(self.form.history_name(h)))?;
            let values: Vec<Rational> =
                (0..n).map(|s| self.expected_utility(belief, s, h)).collect::<Result<_, _>>()?;
            let best = values.iter().max().cloned().unwrap_or_else(zero);
            optimal[pos] = (0..n).filter(|&s| values[s] == best).collect();
        }
        Ok((0..n)
            .filter(|&s| {
                self.domain.iter().enumerate().all(|(pos, &h)| {
                    !(self.form.node(h).is_active(self.player) && self.form.reaches(self.player, s, h))
                        || optimal[pos].contains(&s)
                })
            })
            .collect())
    }

    fn mass_on_reach(&self, belief: &Belief, pos: usize) -> Rational {
        belief
            .iter()
            .filter(|(a, _)| self.atom_id(a).is_some_and(|k| self.reach[pos][k]))
            .map(|(_, p)| p.clone())
            .sum()
    }

    fn condition(&self, belief: &Belief, pos: usize) -> Belief {
        let mass = self.mass_on_reach(belief, pos);
        belief
            .iter()
            .filter(|(a, _)| self.atom_id(a).is_some_and(|k| self.reach[pos][k]))
            .map(|(a, p)| (a.clone(), p / &mass))
            .collect()
    }

    fn predecessors(&self, pos: usize) -> Vec<usize> {
        let h = self.domain[pos];
        (0..pos).filter(|&q| self.form.weakly_precedes(self.domain[q], h)).collect()
    }

    /// `Hᵢ(μᵢ)`: `h⁰` and every history all of whose predecessors deem it null.
    pub fn scratch_histories(&self, cps: &Cps) -> HistorySet {
        let mut nodes = BTreeSet::new();
        for pos in 0..self.domain.len() {
            let null = self.predecessors(pos).into_iter().all(|q| {
                cps.beliefs.get(&self.domain[q]).map_or(true, |b| self.mass_on_reach(b, pos) == zero())
            });
            if null {
                nodes.insert(self.domain[pos]);
            }
        }
        HistorySet { op: HistoryOp::Scratch { player: self.player }, nodes }
    }

    /// Rebuilds a full CPS from beliefs at scratch histories by the chain rule. Histories that end
    /// up null without a supplied belief get a point mass on their first admissible atom.
    pub fn complete(&self, scratch: &BTreeMap<NodeId, Belief>) -> Cps {
        let mut beliefs: BTreeMap<NodeId, Belief> = BTreeMap::new();
        for pos in 0..self.domain.len() {
            let h = self.domain[pos];
            let inherited = self.predecessors(pos).into_iter().find_map(|q| {
                let b = &beliefs[&self.domain[q]];
                (self.mass_on_reach(b, pos) > zero()).then(|| self.condition(b, pos))
            });
            let belief = match inherited {
                Some(b) => b,
                None => match scratch.get(&h) {
                    Some(b) => b.clone(),
                    None => {
                        let a = (0..self.atoms.len()).find(|&a| self.reach[pos][a]).expect("non-empty belief space");
                        BTreeMap::from([(self.atoms[a].clone(), one())])
                    }
                },
            };
            beliefs.insert(h, belief);
        }
        Cps { owner: self.player, beliefs }
    }

    /// Restriction of a CPS to its scratch histories.
    pub fn scratch_form(&self, cps: &Cps) -> BTreeMap<NodeId, Belief> {
        let scratch = self.scratch_histories(cps);
        cps.beliefs.iter().filter(|(h, _)| scratch.contains(**h)).map(|(h, b)| (*h, b.clone())).collect()
    }

    /// Support, chain-rule and initial-consistency checks; empty when valid.
    pub fn validate_cps(&self, cps: &Cps) -> Vec<String> {
        let mut out = Vec::new();
        if cps.owner != self.player {
            out.push(format!("owner {} differs from model player {}", cps.owner, self.player));
            return out;
        }
        for h in cps.beliefs.keys() {
            if self.position(*h).is_none() {
                out.push(format!("{}: not in the belief domain", self.form.history_name(*h)));
            }
        }
        for (pos, &h) in self.domain.iter().enumerate() {
            let name = self.form.history_name(h);
            let Some(b) = cps.beliefs.get(&h) else {
                out.push(format!("{name}: missing belief"));
                continue;
            };
            let total: Rational = b.values().cloned().sum();
            if total != one() {
                out.push(format!("{name}: probabilities sum to {}", format_rational(&total)));
            }
            for (a, p) in b {
                if *p <= zero() {
                    out.push(format!("{name}: non-positive probability on {}", self.describe_atom(a)));
                }
                match self.atom_id(a) {
                    None => out.push(format!("{name}: atom {} outside S₋ᵢ × Θ₀ × T₋ᵢ", self.describe_atom(a))),
                    Some(k) if !self.reach[pos][k] => {
                        out.push(format!("{name}: support violation, {} does not reach this history", self.describe_atom(a)))
                    }
                    _ => {}
                }
            }
        }
        for pos in 0..self.domain.len() {
            let h = self.domain[pos];
            let Some(b) = cps.beliefs.get(&h) else { continue };
            for q in self.predecessors(pos) {
                let Some(prev) = cps.beliefs.get(&self.domain[q]) else { continue };
                if self.mass_on_reach(prev, pos) > zero() && self.condition(prev, pos) != *b {
                    out.push(format!(
                        "{}: chain rule violated relative to {}",
                        self.form.history_name(h),
                        self.form.history_name(self.domain[q])
                    ));
                }
            }
        }
        if let Some(b) = cps.beliefs.get(&ROOT) {
            let mut marginal: BTreeMap<(usize, Vec<TypeId>), Rational> = BTreeMap::new();
            for (a, p) in b {
                *marginal.entry((a.nature, a.types.clone())).or_insert_with(zero) += p;
            }
            if marginal != self.prior {
                out.push("h0: marginal over states and types differs from the type's belief".to_string());
            }
        }
        out
    }
}

pub fn validate_cps(form: &ExtensiveForm, model: &SubjectiveModel, cps: &Cps) -> Vec<String> {
    ModelContext::new(form, model).validate_cps(cps)
}

pub fn expected_utility(
    form: &ExtensiveForm,
    model: &SubjectiveModel,
    cps: &Cps,
    s: StrategyId,
    h: NodeId,
) -> Result<Rational, CpsError> {
    let ctx = ModelContext::new(form, model);
    let belief = cps.beliefs.get(&h).ok_or_else(|| CpsError::NotInDomain(form.history_name(h)))?;
    ctx.expected_utility(belief, s, h)
}

pub fn best_responses(form: &ExtensiveForm, model: &SubjectiveModel, cps: &Cps) -> Result<BTreeSet<StrategyId>, CpsError> {
    ModelContext::new(form, model).best_responses(cps)
}

pub fn scratch_histories(form: &ExtensiveForm, model: &SubjectiveModel, cps: &Cps) -> HistorySet {
    ModelContext::new(form, model).scratch_histories(cps)
}
