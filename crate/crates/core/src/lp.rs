//! Exact rational linear programming: dense two-phase simplex with Bland's rule.
//!
//! Variables are non-negative. The objective is maximized.

use num_traits::{Signed, Zero};

use crate::rational::{one, zero, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, Rational)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: Rational, point: Vec<Rational> },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { num_vars, constraints: Vec::new(), objective: Vec::new() }
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn constrain(&mut self, coeffs: Vec<(usize, Rational)>, relation: Relation, rhs: Rational) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn maximize(&mut self, objective: Vec<(usize, Rational)>) {
        self.objective = objective;
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    cols: usize,
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.num_vars;
        let mut slack_count = 0;
        let mut art_count = 0;
        let mut norm: Vec<(Vec<Rational>, Relation, Rational)> = Vec::with_capacity(m);
        for c in &lp.constraints {
            let mut row = vec![zero(); n];
            for (j, v) in &c.coeffs {
                row[*j] += v;
            }
            let (mut rel, mut rhs) = (c.relation, c.rhs.clone());
            if rhs.is_negative() {
                for v in row.iter_mut() {
                    *v = -v.clone();
                }
                rhs = -rhs;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            match rel {
                Relation::Le => slack_count += 1,
                Relation::Ge => {
                    slack_count += 1;
                    art_count += 1;
                }
                Relation::Eq => art_count += 1,
            }
            norm.push((row, rel, rhs));
        }
        let first_artificial = n + slack_count;
        let cols = first_artificial + art_count;
        let mut rows = Vec::with_capacity(m);
        let mut rhs_col = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut next_slack, mut next_art) = (n, first_artificial);
        for (mut row, rel, rhs) in norm {
            row.resize(cols, zero());
            match rel {
                Relation::Le => {
                    row[next_slack] = one();
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -one();
                    next_slack += 1;
                    row[next_art] = one();
                    basis.push(next_art);
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = one();
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
            rhs_col.push(rhs);
        }
        Tableau { rows, rhs: rhs_col, basis, cols, first_artificial }
    }

    /// Reduced-cost row `c_j − c_B B⁻¹ A_j` and the current objective value for cost vector `c`.
    fn cost_row(&self, c: &[Rational]) -> (Vec<Rational>, Rational) {
        let mut d: Vec<Rational> = c.to_vec();
        let mut value = zero();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = &c[b];
            if cb.is_zero() {
                continue;
            }
            for (j, a) in self.rows[r].iter().enumerate() {
                if !a.is_zero() {
                    d[j] -= cb * a;
                }
            }
            value += cb * &self.rhs[r];
        }
        (d, value)
    }

    fn pivot(&mut self, r: usize, e: usize, d: &mut [Rational], value: &mut Rational) {
        let p = self.rows[r][e].clone();
        if p != one() {
            for v in self.rows[r].iter_mut() {
                if !v.is_zero() {
                    *v /= &p;
                }
            }
            self.rhs[r] /= &p;
        }
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        let nz: Vec<usize> = (0..self.cols).filter(|&j| !pivot_row[j].is_zero()).collect();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][e].clone();
            if f.is_zero() {
                continue;
            }
            for &j in &nz {
                let delta = &f * &pivot_row[j];
                self.rows[i][j] -= delta;
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        let f = d[e].clone();
        if !f.is_zero() {
            for &j in &nz {
                d[j] -= &f * &pivot_row[j];
            }
            *value += &f * &pivot_rhs;
        }
        self.basis[r] = e;
    }

    /// Maximizes with Bland's rule over the allowed columns. Returns false if unbounded.
    fn optimize(&mut self, d: &mut [Rational], value: &mut Rational, allowed: usize) -> bool {
        loop {
            let Some(e) = (0..allowed).find(|&j| d[j].is_positive()) else {
                return true;
            };
            let mut best: Option<(usize, Rational)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][e];
                if a.is_positive() {
                    let ratio = &self.rhs[r] / a;
                    let better = match &best {
                        None => true,
                        Some((br, bv)) => ratio < *bv || (ratio == *bv && self.basis[r] < self.basis[*br]),
                    };
                    if better {
                        best = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = best else {
                return false;
            };
            self.pivot(r, e, d, value);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let n = lp.num_vars;
        if self.first_artificial < self.cols {
            let mut c1 = vec![zero(); self.cols];
            for c in c1.iter_mut().skip(self.first_artificial) {
                *c = -one();
            }
            let (mut d, mut value) = self.cost_row(&c1);
            self.optimize(&mut d, &mut value, self.cols);
            if !value.is_zero() {
                return LpOutcome::Infeasible;
            }
            // Drive remaining artificials out of the basis or drop redundant rows.
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.first_artificial {
                    if let Some(e) = (0..self.first_artificial).find(|&j| !self.rows[r][j].is_zero()) {
                        let mut dd = vec![zero(); self.cols];
                        let mut vv = zero();
                        self.pivot(r, e, &mut dd, &mut vv);
                        r += 1;
                    } else {
                        self.rows.remove(r);
                        self.rhs.remove(r);
                        self.basis.remove(r);
                    }
                } else {
                    r += 1;
                }
            }
        }
        let mut c = vec![zero(); self.cols];
        for (j, v) in &lp.objective {
            c[*j] += v;
        }
        let (mut d, mut value) = self.cost_row(&c);
        if !self.optimize(&mut d, &mut value, self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let mut point = vec![zero(); n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                point[b] = self.rhs[r].clone();
            }
        }
        LpOutcome::Optimal { value, point }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
        let mut lp = LinearProgram::new(2);
        lp.constrain(vec![(0, int(1))], Relation::Le, int(4));
        lp.constrain(vec![(1, int(2))], Relation::Le, int(12));
        lp.constrain(vec![(0, int(3)), (1, int(2))], Relation::Le, int(18));
        lp.maximize(vec![(0, int(3)), (1, int(5))]);
        assert_eq!(lp.solve(), LpOutcome::Optimal { value: int(36), point: vec![int(2), int(6)] });
    }

    #[test]
    fn equalities_and_infeasibility() {
        let mut lp = LinearProgram::new(2);
        lp.constrain(vec![(0, int(1)), (1, int(1))], Relation::Eq, int(1));
        lp.constrain(vec![(0, int(1)), (1, int(-1))], Relation::Ge, ratio(1, 3));
        lp.maximize(vec![(1, int(1))]);
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => assert_eq!(value, ratio(1, 3)),
            other => panic!("{other:?}"),
        }
        lp.constrain(vec![(1, int(1))], Relation::Ge, int(1));
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_and_redundant_rows() {
        let mut lp = LinearProgram::new(2);
        lp.constrain(vec![(0, int(1)), (1, int(-1))], Relation::Eq, int(0));
        lp.constrain(vec![(0, int(2)), (1, int(-2))], Relation::Eq, int(0));
        lp.maximize(vec![(0, int(1))]);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        let mut lp = LinearProgram::new(1);
        lp.constrain(vec![(0, int(-1))], Relation::Le, int(-2));
        lp.maximize(vec![(0, int(-1))]);
        assert_eq!(lp.solve(), LpOutcome::Optimal { value: int(-2), point: vec![int(2)] });
    }
}
