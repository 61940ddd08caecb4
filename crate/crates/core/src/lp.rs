//! Dense two-phase primal simplex.
//!
//! Solves `max c.x` subject to `<=`, `>=` and `=` rows with `x >= 0`. Entering
//! columns follow Dantzig's rule and switch to Bland's rule after a run of
//! degenerate pivots, which rules out cycling. Dual values are reported per
//! constraint in the orientation of the original row.

use thiserror::Error;

const EPS: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` terms.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, relation: Relation::Le, rhs }
    }

    pub fn ge(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, relation: Relation::Ge, rhs }
    }

    pub fn eq(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, relation: Relation::Eq, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs(x);
        match self.relation {
            Relation::Le => (l - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - l).max(0.0),
            Relation::Eq => (l - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow price of each constraint: d(objective)/d(rhs).
    pub duals: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("pivot limit reached")]
    PivotLimit,
    #[error("malformed program: {0}")]
    Malformed(String),
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, objective: vec![0.0; n_vars], constraints: Vec::new() }
    }

    pub fn push(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn maximize(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self)?.solve(self)
    }
}

struct Tableau {
    m: usize,
    cols: usize,
    n: usize,
    /// `m` rows of `cols + 1` entries, rhs last.
    t: Vec<f64>,
    basis: Vec<usize>,
    /// Row sign applied to make rhs nonnegative.
    sign: Vec<f64>,
    /// Column that started in the basis for each row (slack or artificial).
    unit_col: Vec<usize>,
    artificial: Vec<bool>,
    d: Vec<f64>,
    z: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        if lp.objective.len() != lp.n_vars {
            return Err(LpError::Malformed("objective length differs from n_vars".into()));
        }
        let m = lp.constraints.len();
        let n = lp.n_vars;
        // one unit column per row, plus a surplus column per >= row
        let n_surplus = lp
            .constraints
            .iter()
            .filter(|c| effective_relation(c) == Relation::Ge)
            .count();
        let cols = n + n_surplus + m;
        let w = cols + 1;
        let mut t = vec![0.0; m * w];
        let mut basis = vec![0; m];
        let mut sign = vec![1.0; m];
        let mut unit_col = vec![0; m];
        let mut artificial = vec![false; cols];
        let mut next_surplus = n;
        for (i, c) in lp.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has non-finite rhs")));
            }
            let s = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            sign[i] = s;
            let row = &mut t[i * w..(i + 1) * w];
            for &(j, a) in &c.terms {
                if j >= n || !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} term ({j}, {a})")));
                }
                row[j] += s * a;
            }
            row[cols] = s * c.rhs;
            let unit = n + n_surplus + i;
            row[unit] = 1.0;
            unit_col[i] = unit;
            basis[i] = unit;
            match effective_relation(c) {
                Relation::Le => {}
                Relation::Ge => {
                    row[next_surplus] = -1.0;
                    next_surplus += 1;
                    artificial[unit] = true;
                }
                Relation::Eq => artificial[unit] = true,
            }
        }
        Ok(Self { m, cols, n, t, basis, sign, unit_col, artificial, d: vec![0.0; cols], z: 0.0 })
    }

    fn w(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.w() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    /// Reduced costs and objective value for column costs `c`.
    fn price(&mut self, c: &[f64]) {
        let w = self.w();
        self.d.copy_from_slice(c);
        self.z = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for j in 0..self.cols {
                    self.d[j] -= cb * row[j];
                }
                self.z += cb * row[self.cols];
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w();
        let p = self.t[r * w + c];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for j in 0..self.cols {
                self.d[j] -= f * prow[j];
            }
            self.d[c] = 0.0;
            self.z += f * prow[self.cols];
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allowed: &dyn Fn(usize) -> bool) -> Result<(), LpError> {
        let mut degenerate = 0;
        for _ in 0..MAX_PIVOTS {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = EPS;
            for j in 0..self.cols {
                if self.d[j] > best && allowed(j) {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = self.d[j];
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Err(LpError::Unbounded) };
            degenerate = if ratio <= EPS { degenerate + 1 } else { 0 };
            self.pivot(r, c);
        }
        Err(LpError::PivotLimit)
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        if self.artificial.iter().any(|&a| a) {
            let cost: Vec<f64> = (0..self.cols).map(|j| if self.artificial[j] { -1.0 } else { 0.0 }).collect();
            self.price(&cost);
            self.run(&|_| true)?;
            let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
            if self.z < -1e-7 * scale {
                return Err(LpError::Infeasible);
            }
            self.drive_out_artificials();
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.n].copy_from_slice(&lp.objective);
        self.price(&cost);
        let artificial = self.artificial.clone();
        self.run(&|j| !artificial[j])?;

        let mut x = vec![0.0; self.n];
        for i in 0..self.m {
            if self.basis[i] < self.n {
                x[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        let duals = (0..self.m).map(|i| -self.d[self.unit_col[i]] * self.sign[i]).collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective, duals })
    }

    fn drive_out_artificials(&mut self) {
        for i in 0..self.m {
            if !self.artificial[self.basis[i]] {
                continue;
            }
            let col = (0..self.cols).find(|&j| !self.artificial[j] && self.at(i, j).abs() > 1e-7);
            if let Some(c) = col {
                self.pivot(i, c);
            }
        }
    }
}

/// Relation after flipping the row to a nonnegative rhs.
fn effective_relation(c: &Constraint) -> Relation {
    match (c.relation, c.rhs < 0.0) {
        (Relation::Le, true) => Relation::Ge,
        (Relation::Ge, true) => Relation::Le,
        (r, _) => r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-7
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y; x <= 4; 2y <= 12; 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.push(Constraint::le(vec![(0, 1.0)], 4.0));
        lp.push(Constraint::le(vec![(1, 2.0)], 12.0));
        lp.push(Constraint::le(vec![(0, 3.0), (1, 2.0)], 18.0));
        let s = lp.maximize().unwrap();
        assert!(close(s.objective, 36.0));
        assert!(close(s.x[0], 2.0) && close(s.x[1], 6.0));
        // duals: 0, 1.5, 1
        assert!(close(s.duals[0], 0.0) && close(s.duals[1], 1.5) && close(s.duals[2], 1.0));
    }

    #[test]
    fn ge_and_eq_rows() {
        // max -x - y; x + y >= 2; x - y = 1 -> x = 1.5, y = 0.5
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.push(Constraint::ge(vec![(0, 1.0), (1, 1.0)], 2.0));
        lp.push(Constraint::eq(vec![(0, 1.0), (1, -1.0)], 1.0));
        let s = lp.maximize().unwrap();
        assert!(close(s.x[0], 1.5) && close(s.x[1], 0.5));
        assert!(close(s.duals[0], -1.0));
    }

    #[test]
    fn negative_rhs_is_flipped() {
        // -x <= -3 means x >= 3; max -x -> x = 3
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        lp.push(Constraint::le(vec![(0, -1.0)], -3.0));
        let s = lp.maximize().unwrap();
        assert!(close(s.x[0], 3.0));
        assert!(close(s.duals[0], 1.0));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.push(Constraint::le(vec![(0, 1.0)], 1.0));
        lp.push(Constraint::ge(vec![(0, 1.0)], 2.0));
        assert_eq!(lp.maximize(), Err(LpError::Infeasible));

        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.push(Constraint::le(vec![(1, 1.0)], 1.0));
        assert_eq!(lp.maximize(), Err(LpError::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example for Dantzig's rule without anti-cycling.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.push(Constraint::le(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], 0.0));
        lp.push(Constraint::le(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], 0.0));
        lp.push(Constraint::le(vec![(2, 1.0)], 1.0));
        let s = lp.maximize().unwrap();
        assert!(close(s.objective, 0.05));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.push(Constraint::eq(vec![(0, 1.0), (1, 1.0)], 4.0));
        lp.push(Constraint::eq(vec![(0, 2.0), (1, 2.0)], 8.0));
        lp.push(Constraint::le(vec![(0, 1.0)], 1.0));
        let s = lp.maximize().unwrap();
        assert!(close(s.objective, 4.0));
    }
}
