//! Brute-force feasibility oracles for the conjecture kernel.
//!
//! Two routes, both deciding systems of equalities, weak and strict inequalities by
//! Fourier–Motzkin elimination:
//!
//! * `justifiable_by_supports` enumerates the support of the belief at every history (inherited by
//!   conditioning where a predecessor gives the history positive probability, chosen freely
//!   otherwise). Exponential in the number of atoms.
//! * `justifiable` enumerates only which histories receive positive probability from their nearest
//!   restarted ancestor; within one such pattern the admissible beliefs form a convex set.
//!
//! Neither shares code with the kernel beyond the model primitives.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use rationalizer_core::conjecture::ModelContext;
use rationalizer_core::game::{NodeId, StrategyId};
use rationalizer_core::payoff::PayoffState;
use rationalizer_core::rational::{one, zero, Rational};
use rationalizer_core::solver::Mode;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Eq,
    Ge,
    Gt,
}

#[derive(Clone, PartialEq, Eq, Debug)]
struct Row {
    coeffs: Vec<Rational>,
    kind: Kind,
    rhs: Rational,
}

/// Whether `{ x | rows }` is non-empty.
fn feasible(mut rows: Vec<Row>, mut n: usize) -> bool {
    // Substitute equalities away.
    while let Some(k) = rows.iter().position(|r| r.kind == Kind::Eq) {
        let eq = rows.swap_remove(k);
        let Some(j) = (0..n).find(|&j| !eq.coeffs[j].is_zero()) else {
            if !eq.rhs.is_zero() {
                return false;
            }
            continue;
        };
        let pivot = eq.coeffs[j].clone();
        for r in rows.iter_mut() {
            let f = &r.coeffs[j] / &pivot;
            if f.is_zero() {
                continue;
            }
            for m in 0..n {
                let d = &f * &eq.coeffs[m];
                r.coeffs[m] -= d;
            }
            r.rhs -= &f * &eq.rhs;
        }
        for r in rows.iter_mut() {
            r.coeffs.remove(j);
        }
        n -= 1;
    }
    // Fourier–Motzkin on the inequalities, cheapest column first.
    while n > 0 {
        if rows.is_empty() {
            return true;
        }
        let j = (0..n)
            .min_by_key(|&j| {
                let p = rows.iter().filter(|r| r.coeffs[j].is_positive()).count();
                let q = rows.iter().filter(|r| r.coeffs[j].is_negative()).count();
                p * q
            })
            .unwrap();
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for r in rows {
            if r.coeffs[j].is_positive() {
                pos.push(r);
            } else if r.coeffs[j].is_negative() {
                neg.push(r);
            } else {
                rest.push(r);
            }
        }
        for p in &pos {
            for q in &neg {
                let (a, b) = (p.coeffs[j].clone(), -q.coeffs[j].clone());
                let coeffs: Vec<Rational> = (0..n).map(|m| &p.coeffs[m] * &b + &q.coeffs[m] * &a).collect();
                let rhs = &p.rhs * &b + &q.rhs * &a;
                let kind = if p.kind == Kind::Gt || q.kind == Kind::Gt { Kind::Gt } else { Kind::Ge };
                rest.push(normalize(Row { coeffs, kind, rhs }));
            }
        }
        for r in rest.iter_mut() {
            r.coeffs.remove(j);
        }
        n -= 1;
        let mut seen = BTreeSet::new();
        rows = rest
            .into_iter()
            .filter(|r| seen.insert((r.coeffs.clone(), r.kind == Kind::Gt, r.rhs.clone())))
            .collect();
        if rows.iter().any(|r| r.coeffs.iter().all(Zero::is_zero) && !holds(r)) {
            return false;
        }
        rows.retain(|r| !r.coeffs.iter().all(Zero::is_zero));
    }
    rows.iter().all(holds)
}

fn holds(r: &Row) -> bool {
    match r.kind {
        Kind::Eq => r.rhs.is_zero(),
        Kind::Ge => !r.rhs.is_positive(),
        Kind::Gt => r.rhs.is_negative(),
    }
}

/// Scales a row so its first non-zero coefficient has absolute value one.
fn normalize(mut r: Row) -> Row {
    if let Some(c) = r.coeffs.iter().find(|c| !c.is_zero()).map(|c| c.abs()) {
        for v in r.coeffs.iter_mut() {
            *v /= &c;
        }
        r.rhs /= &c;
    }
    r
}

pub struct Oracle<'a> {
    ctx: &'a ModelContext<'a>,
    /// `reach[pos][a]` recomputed from the tree.
    reach: Vec<Vec<bool>>,
    /// `utility[pos][s][a]`.
    utility: Vec<Vec<Vec<Rational>>>,
    prior: BTreeMap<(usize, Vec<usize>), Rational>,
    predecessors: Vec<Vec<usize>>,
}

impl<'a> Oracle<'a> {
    pub fn new(ctx: &'a ModelContext<'a>) -> Self {
        let form = ctx.form;
        let l1 = ctx.structure.level1();
        let player = ctx.player;
        let own = l1.type_index(player, &ctx.types.get(ctx.type_id).payoff_type).unwrap();
        let reach: Vec<Vec<bool>> = ctx
            .domain
            .iter()
            .map(|&h| {
                let sets: Vec<BTreeSet<StrategyId>> =
                    ctx.opponents.iter().map(|&j| form.reaching_strategies(h, j)).collect();
                ctx.atoms.iter().map(|a| a.strategies.iter().zip(&sets).all(|(s, set)| set.contains(s))).collect()
            })
            .collect();
        let utility = ctx
            .domain
            .iter()
            .map(|&h| {
                (0..form.num_strategies(player))
                    .map(|s| {
                        ctx.atoms
                            .iter()
                            .map(|a| {
                                let mut profile = vec![0; form.num_players()];
                                profile[player] = s;
                                let mut st = PayoffState { nature: a.nature, types: vec![0; form.num_players()] };
                                st.types[player] = own;
                                for (k, &j) in ctx.opponents.iter().enumerate() {
                                    profile[j] = a.strategies[k];
                                    st.types[j] = l1.type_index(j, &ctx.types.get(a.types[k]).payoff_type).unwrap();
                                }
                                let z = form.terminal_index(form.outcome(&profile, h)).unwrap();
                                l1.utility(player, z, l1.state_index(&st)).clone()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut prior = BTreeMap::new();
        for (pt, p) in &ctx.types.get(ctx.type_id).belief {
            prior.insert((l1.nature_index(&pt.nature).unwrap(), pt.opponents.clone()), p.clone());
        }
        let predecessors = (0..ctx.domain.len())
            .map(|p| (0..p).filter(|&q| form.weakly_precedes(ctx.domain[q], ctx.domain[p])).collect())
            .collect();
        Oracle { ctx, reach, utility, prior, predecessors }
    }

    /// Whether some CPS meeting `masks` (support restrictions by history) justifies `s` in `mode`.
    pub fn justifiable_by_supports(&self, s: StrategyId, masks: &BTreeMap<NodeId, Vec<bool>>, mode: Mode) -> bool {
        let m = if mode == Mode::ExAnte { 1 } else { self.ctx.domain.len() };
        let mask: Vec<Option<&Vec<bool>>> = (0..m).map(|p| masks.get(&self.ctx.domain[p])).collect();
        let mut supports: Vec<Vec<usize>> = Vec::new();
        let mut governor: Vec<usize> = Vec::new();
        self.assign(0, m, s, &mask, mode, &mut supports, &mut governor)
    }

    #[allow(clippy::too_many_arguments)]
    fn assign(
        &self,
        pos: usize,
        m: usize,
        s: StrategyId,
        mask: &[Option<&Vec<bool>>],
        mode: Mode,
        supports: &mut Vec<Vec<usize>>,
        governor: &mut Vec<usize>,
    ) -> bool {
        if pos == m {
            return self.solve(s, mode, supports, governor);
        }
        let allowed = |a: usize| self.reach[pos][a] && mask[pos].is_none_or(|mk| mk[a]);
        let inherited = self.predecessors[pos].iter().find(|&&q| supports[q].iter().any(|&a| self.reach[pos][a]));
        if let Some(&q) = inherited {
            let supp: Vec<usize> = supports[q].iter().copied().filter(|&a| self.reach[pos][a]).collect();
            if !supp.iter().all(|&a| allowed(a)) {
                return false;
            }
            supports.push(supp);
            governor.push(governor[q]);
            let ok = self.assign(pos + 1, m, s, mask, mode, supports, governor);
            supports.pop();
            governor.pop();
            return ok;
        }
        let candidates: Vec<usize> = (0..self.ctx.atoms.len())
            .filter(|&a| allowed(a))
            .filter(|&a| pos != 0 || self.prior.contains_key(&self.key(a)))
            .collect();
        for bits in 1u64..(1u64 << candidates.len()) {
            let supp: Vec<usize> =
                candidates.iter().enumerate().filter(|(k, _)| bits >> k & 1 == 1).map(|(_, &a)| a).collect();
            if pos == 0 {
                let keys: BTreeSet<(usize, Vec<usize>)> = supp.iter().map(|&a| self.key(a)).collect();
                if keys.len() != self.prior.len() {
                    continue;
                }
            }
            supports.push(supp);
            governor.push(pos);
            let ok = self.assign(pos + 1, m, s, mask, mode, supports, governor);
            supports.pop();
            governor.pop();
            if ok {
                return true;
            }
        }
        false
    }

    /// Same question as [`Self::justifiable_by_supports`], enumerating restart patterns.
    pub fn justifiable(&self, s: StrategyId, masks: &BTreeMap<NodeId, Vec<bool>>, mode: Mode) -> bool {
        let m = if mode == Mode::ExAnte { 1 } else { self.ctx.domain.len() };
        let mask: Vec<Option<&Vec<bool>>> = (0..m).map(|p| masks.get(&self.ctx.domain[p])).collect();
        for bits in 0u64..(1u64 << (m - 1)) {
            let restart: Vec<bool> = (0..m).map(|p| p == 0 || bits >> (p - 1) & 1 == 1).collect();
            if self.solve_pattern(s, mode, &mask, &restart) {
                return true;
            }
        }
        false
    }

    fn solve_pattern(&self, s: StrategyId, mode: Mode, mask: &[Option<&Vec<bool>>], restart: &[bool]) -> bool {
        let form = self.ctx.form;
        let player = self.ctx.player;
        let m = restart.len();
        let nearest = |p: usize| self.predecessors[p].last().copied();
        let mut governor = vec![0; m];
        for p in 0..m {
            governor[p] = if restart[p] { p } else { governor[nearest(p).unwrap()] };
        }
        let allowed = |p: usize, a: usize| self.reach[p][a] && mask[p].is_none_or(|mk| mk[a]);
        let mut var: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for p in (0..m).filter(|&p| restart[p]) {
            for a in 0..self.ctx.atoms.len() {
                if allowed(p, a) && (p != 0 || self.prior.contains_key(&self.key(a))) {
                    let k = var.len();
                    var.insert((p, a), k);
                }
            }
        }
        let n = var.len();
        let row = |pairs: Vec<(usize, Rational)>, kind: Kind, rhs: Rational| {
            let mut coeffs = vec![zero(); n];
            for (k, c) in pairs {
                coeffs[k] += c;
            }
            Row { coeffs, kind, rhs }
        };
        // Variables of `g` on atoms reaching `p`.
        let mass = |g: usize, p: usize| -> Vec<(usize, usize)> {
            (0..self.ctx.atoms.len()).filter(|&a| self.reach[p][a]).filter_map(|a| var.get(&(g, a)).map(|&k| (a, k))).collect()
        };
        let mut rows = Vec::new();
        for k in 0..n {
            rows.push(row(vec![(k, one())], Kind::Ge, zero()));
        }
        for p in (0..m).filter(|&p| restart[p]) {
            let pairs: Vec<(usize, Rational)> = var.iter().filter(|((g, _), _)| *g == p).map(|(_, &k)| (k, one())).collect();
            if pairs.is_empty() {
                return false;
            }
            rows.push(row(pairs, Kind::Eq, one()));
        }
        for (key, pr) in &self.prior {
            let pairs: Vec<(usize, Rational)> =
                var.iter().filter(|((g, a), _)| *g == 0 && self.key(*a) == *key).map(|(_, &k)| (k, one())).collect();
            rows.push(row(pairs, Kind::Eq, pr.clone()));
        }
        for p in 1..m {
            let g = governor[nearest(p).unwrap()];
            let reaching = mass(g, p);
            if restart[p] {
                // Null under the ancestor's belief.
                for (_, k) in reaching {
                    rows.push(row(vec![(k, one())], Kind::Eq, zero()));
                }
            } else {
                for &(a, k) in &reaching {
                    if !allowed(p, a) {
                        rows.push(row(vec![(k, one())], Kind::Eq, zero()));
                    }
                }
                rows.push(row(reaching.iter().map(|&(_, k)| (k, one())).collect(), Kind::Gt, zero()));
            }
        }
        for p in 0..m {
            let h = self.ctx.domain[p];
            let required = match mode {
                Mode::Weak | Mode::Strict => form.node(h).is_active(player) && form.reaches(player, s, h),
                Mode::Sequential | Mode::ExAnte => true,
            };
            if !required {
                continue;
            }
            let reaching = mass(governor[p], p);
            for alt in (0..form.num_strategies(player)).filter(|&alt| alt != s) {
                let strict = mode == Mode::Strict && form.choice(player, alt, h) != form.choice(player, s, h);
                let pairs = reaching.iter().map(|&(a, k)| (k, &self.utility[p][s][a] - &self.utility[p][alt][a])).collect();
                rows.push(row(pairs, if strict { Kind::Gt } else { Kind::Ge }, zero()));
            }
        }
        feasible(rows, n)
    }

    fn key(&self, a: usize) -> (usize, Vec<usize>) {
        let atom = &self.ctx.atoms[a];
        (atom.nature, atom.types.clone())
    }

    fn solve(&self, s: StrategyId, mode: Mode, supports: &[Vec<usize>], governor: &[usize]) -> bool {
        let form = self.ctx.form;
        let player = self.ctx.player;
        // One variable per (scratch history, supported atom).
        let mut var: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (pos, supp) in supports.iter().enumerate() {
            if governor[pos] == pos {
                for &a in supp {
                    let k = var.len();
                    var.insert((pos, a), k);
                }
            }
        }
        let n = var.len();
        let mut rows = Vec::new();
        let row = |pairs: Vec<(usize, Rational)>, kind: Kind, rhs: Rational| {
            let mut coeffs = vec![zero(); n];
            for (k, c) in pairs {
                coeffs[k] += c;
            }
            Row { coeffs, kind, rhs }
        };
        for k in 0..n {
            rows.push(row(vec![(k, one())], Kind::Gt, zero()));
        }
        for (pos, supp) in supports.iter().enumerate() {
            if governor[pos] == pos {
                rows.push(row(supp.iter().map(|&a| (var[&(pos, a)], one())).collect(), Kind::Eq, one()));
            }
        }
        for (key, p) in &self.prior {
            let pairs = supports[0].iter().filter(|&&a| self.key(a) == *key).map(|&a| (var[&(0, a)], one())).collect();
            rows.push(row(pairs, Kind::Eq, p.clone()));
        }
        for (pos, supp) in supports.iter().enumerate() {
            let h = self.ctx.domain[pos];
            let required = match mode {
                Mode::Weak | Mode::Strict => form.node(h).is_active(player) && form.reaches(player, s, h),
                Mode::Sequential | Mode::ExAnte => true,
            };
            if !required {
                continue;
            }
            let g = governor[pos];
            for alt in 0..form.num_strategies(player) {
                if alt == s {
                    continue;
                }
                let strict = mode == Mode::Strict && form.choice(player, alt, h) != form.choice(player, s, h);
                let pairs: Vec<(usize, Rational)> = supp
                    .iter()
                    .map(|&a| (var[&(g, a)], &self.utility[pos][s][a] - &self.utility[pos][alt][a]))
                    .collect();
                rows.push(row(pairs, if strict { Kind::Gt } else { Kind::Ge }, zero()));
            }
        }
        feasible(rows, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rationalizer_core::rational::int;

    fn r(c: &[i64], kind: Kind, rhs: i64) -> Row {
        Row { coeffs: c.iter().map(|&v| int(v)).collect(), kind, rhs: int(rhs) }
    }

    #[test]
    fn fourier_motzkin_strictness() {
        // x > 0, y > 0, x + y = 1, x - y >= 1
        assert!(feasible(
            vec![r(&[1, 0], Kind::Gt, 0), r(&[0, 1], Kind::Gt, 0), r(&[1, 1], Kind::Eq, 1), r(&[1, -1], Kind::Ge, 1)],
            2
        ) == false);
        assert!(feasible(vec![r(&[1, 0], Kind::Gt, 0), r(&[0, 1], Kind::Gt, 0), r(&[1, 1], Kind::Eq, 1)], 2));
        // x >= 0, -x > 0 is empty
        assert!(!feasible(vec![r(&[1], Kind::Ge, 0), r(&[-1], Kind::Gt, 0)], 1));
    }
}
