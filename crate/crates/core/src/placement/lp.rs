//! Dense two-phase simplex for the small linear programs of the placement loop.

// Dense tableau code indexes several arrays in step.
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-11;
const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub label: String,
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(label: impl Into<String>, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Constraint { label: label.into(), coeffs, relation, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `min cᵀx` subject to the row constraints and `lower ≤ x ≤ upper`.
/// Lower bounds must be finite; upper bounds may be infinite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Constant added to the objective value.
    pub offset: f64,
}

impl LinearProgram {
    /// Appends a variable and returns its index.
    pub fn add_variable(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.len() - 1
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn variables(&self) -> usize {
        self.objective.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest bound or row violation of `x`.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.variables() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for c in &self.constraints {
            let gap = c.activity(x) - c.rhs;
            worst = worst.max(match c.relation {
                Relation::Le => gap,
                Relation::Ge => -gap,
                Relation::Eq => gap.abs(),
            });
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c = Σ yᵢ aᵢ + z`: `y ≤ 0` on `≤` rows and
    /// `y ≥ 0` on `≥` rows.
    pub duals: Vec<f64>,
    /// `z`: nonnegative at lower bounds, nonpositive at upper bounds.
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    /// Worst violation of the optimality conditions: primal feasibility,
    /// dual sign conditions, complementary slackness and the duality gap.
    pub fn certificate_error(&self, lp: &LinearProgram) -> f64 {
        let scale = 1.0 + self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = lp.infeasibility(&self.x) / scale;
        let mut dual_value = 0.0;
        for (c, &y) in lp.constraints.iter().zip(&self.duals) {
            let sign_violation = match c.relation {
                Relation::Le => y.max(0.0),
                Relation::Ge => (-y).max(0.0),
                Relation::Eq => 0.0,
            };
            worst = worst.max(sign_violation);
            worst = worst.max((y * (c.activity(&self.x) - c.rhs)).abs() / scale);
            dual_value += y * c.rhs;
        }
        let mut z = lp.objective.clone();
        for (c, &y) in lp.constraints.iter().zip(&self.duals) {
            for &(j, a) in &c.coeffs {
                z[j] -= y * a;
            }
        }
        for j in 0..lp.variables() {
            worst = worst.max((z[j] - self.reduced_costs[j]).abs());
            let at_lower = (self.x[j] - lp.lower[j]).abs() <= FEASIBILITY_TOLERANCE * scale;
            let at_upper = lp.upper[j].is_finite() && (lp.upper[j] - self.x[j]).abs() <= FEASIBILITY_TOLERANCE * scale;
            let violation = match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => (-z[j]).max(0.0),
                (false, true) => z[j].max(0.0),
                (false, false) => z[j].abs(),
            };
            worst = worst.max(violation);
            dual_value += if z[j] >= 0.0 {
                z[j] * lp.lower[j]
            } else if lp.upper[j].is_finite() {
                z[j] * lp.upper[j]
            } else {
                0.0
            };
        }
        let gap = (self.objective - dual_value).abs() / (1.0 + self.objective.abs());
        worst.max(gap)
    }
}

/// Standard-form tableau `min cᵀx, Ax = b, x ≥ 0` with `b ≥ 0`.
struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `(rows + 1) × (cols + 1)`; the last row holds reduced
    /// costs and the last column the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * self.t[pr * w + c];
                }
                self.t[r * w + pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Loads the reduced-cost row for `cost` against the current basis.
    fn price(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let last = self.rows * w;
        for c in 0..w {
            self.t[last + c] = if c < self.cols { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.t[last + c] -= cb * self.t[r * w + c];
                }
            }
        }
    }

    /// Bland's rule: lowest-index improving column, then lowest basis index
    /// among tied ratios. `allowed` masks columns that may enter.
    fn optimize(&mut self, allowed: &[bool], pivots: &mut usize) -> Result<()> {
        let cost_scale = (0..self.cols).fold(1.0f64, |m, c| m.max(self.at(self.rows, c).abs()));
        loop {
            let entering =
                (0..self.cols).find(|&c| allowed[c] && self.at(self.rows, c) < -FEASIBILITY_TOLERANCE * cost_scale);
            let Some(pc) = entering else { return Ok(()) };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOLERANCE {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-12 * (1.0 + bv.abs())
                                || (ratio <= bv + 1e-12 * (1.0 + bv.abs()) && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = best else { return Err(Error::Unbounded) };
            self.pivot(pr, pc);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::Config("simplex pivot limit exceeded".into()));
            }
        }
    }
}

/// Solves `lp` to optimality and returns the primal solution together with
/// its dual certificate.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let nv = lp.variables();
    if lp.lower.iter().any(|l| !l.is_finite()) {
        return Err(Error::Config("linear program needs finite lower bounds".into()));
    }
    if (0..nv).any(|j| lp.upper[j] < lp.lower[j]) {
        return Err(Error::Infeasible);
    }

    // Rows of the shifted problem x = lower + x', upper bounds as extra rows.
    struct Row {
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows: Vec<Row> = lp
        .constraints
        .iter()
        .map(|c| Row {
            coeffs: c.coeffs.clone(),
            relation: c.relation,
            rhs: c.rhs - c.coeffs.iter().map(|&(j, a)| a * lp.lower[j]).sum::<f64>(),
        })
        .collect();
    let bound_rows: Vec<usize> = (0..nv).filter(|&j| lp.upper[j].is_finite()).collect();
    for &j in &bound_rows {
        rows.push(Row { coeffs: vec![(j, 1.0)], relation: Relation::Le, rhs: lp.upper[j] - lp.lower[j] });
    }

    let m = rows.len();
    let slack_count = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let cols = nv + slack_count + m;
    let artificial = nv + slack_count;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    let mut row_sign = vec![1.0; m];
    let mut row_scale = vec![1.0; m];
    let mut next_slack = nv;
    for (r, row) in rows.iter().enumerate() {
        let scale = row.coeffs.iter().fold(0.0f64, |s, &(_, a)| s.max(a.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        row_sign[r] = sign;
        row_scale[r] = scale;
        let f = sign / scale;
        for &(j, a) in &row.coeffs {
            t[r * w + j] += a * f;
        }
        match row.relation {
            Relation::Le => {
                t[r * w + next_slack] = f;
                next_slack += 1;
            }
            Relation::Ge => {
                t[r * w + next_slack] = -f;
                next_slack += 1;
            }
            Relation::Eq => {}
        }
        t[r * w + artificial + r] = 1.0;
        t[r * w + cols] = row.rhs * f;
    }
    let mut tab = Tableau { rows: m, cols, t, basis: (artificial..artificial + m).collect() };
    let mut pivots = 0;

    // Phase I: minimise the sum of artificials.
    let mut phase1 = vec![0.0; cols];
    for c in phase1.iter_mut().skip(artificial) {
        *c = 1.0;
    }
    tab.price(&phase1);
    tab.optimize(&vec![true; cols], &mut pivots)?;
    let residual: f64 = (0..m).filter(|&r| tab.basis[r] >= artificial).map(|r| tab.rhs(r)).sum();
    let rhs_scale = (0..m).fold(1.0f64, |s, r| s.max(tab.rhs(r).abs()));
    if residual > FEASIBILITY_TOLERANCE * rhs_scale {
        return Err(Error::Infeasible);
    }
    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= artificial {
            if let Some(c) = (0..artificial).find(|&c| tab.at(r, c).abs() > 1e-9) {
                tab.pivot(r, c);
                pivots += 1;
            }
        }
    }

    // Phase II with artificials barred from entering.
    let mut cost = vec![0.0; cols];
    cost[..nv].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = (0..cols).map(|c| c < artificial).collect();
    tab.price(&cost);
    tab.optimize(&allowed, &mut pivots)?;

    let mut xs = vec![0.0; cols];
    for r in 0..m {
        xs[tab.basis[r]] = tab.rhs(r);
    }
    let x: Vec<f64> = (0..nv).map(|j| (lp.lower[j] + xs[j]).min(lp.upper[j])).collect();

    // Duals of the scaled rows sit under the artificial columns: the reduced
    // cost there is -y_scaled.
    let y_scaled: Vec<f64> = (0..m).map(|r| -tab.at(m, artificial + r)).collect();
    let y_all: Vec<f64> = (0..m).map(|r| y_scaled[r] * row_sign[r] / row_scale[r]).collect();
    let duals = y_all[..lp.constraints.len()].to_vec();
    let mut reduced_costs = lp.objective.clone();
    for (c, &y) in lp.constraints.iter().zip(&duals) {
        for &(j, a) in &c.coeffs {
            reduced_costs[j] -= y * a;
        }
    }
    Ok(LpSolution { objective: lp.value(&x), x, duals, reduced_costs, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn one_variable() {
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", -1.0, 0.0, f64::INFINITY);
        lp.add_constraint(Constraint::new("cap", vec![(x, 1.0)], Relation::Le, 1.0));
        let s = solve_lp(&lp).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.duals[0] + 1.0).abs() < 1e-12);
        assert!(s.certificate_error(&lp) < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", 1.0, 0.0, 1.0);
        lp.add_constraint(Constraint::new("c", vec![(x, 1.0)], Relation::Ge, 2.0));
        assert!(matches!(solve_lp(&lp), Err(Error::Infeasible)));

        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", -1.0, 0.0, f64::INFINITY);
        lp.add_constraint(Constraint::new("c", vec![(x, 1.0)], Relation::Ge, 2.0));
        assert!(matches!(solve_lp(&lp), Err(Error::Unbounded)));
    }

    #[test]
    fn tie_is_broken_towards_low_indices() {
        // Every point of the segment x + y = 1 is optimal.
        let build = || {
            let mut lp = LinearProgram::default();
            let x = lp.add_variable("x", -1.0, 0.0, f64::INFINITY);
            let y = lp.add_variable("y", -1.0, 0.0, f64::INFINITY);
            lp.add_constraint(Constraint::new("sum", vec![(x, 1.0), (y, 1.0)], Relation::Le, 1.0));
            lp
        };
        let a = solve_lp(&build()).unwrap();
        let b = solve_lp(&build()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x, vec![1.0, 0.0]);
    }

    #[test]
    fn negative_lower_bounds_and_equalities() {
        // min x - y, x + y = 1, -2 ≤ x ≤ 2, -3 ≤ y ≤ 3 → x = -2, y = 3
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", 1.0, -2.0, 2.0);
        let y = lp.add_variable("y", -1.0, -3.0, 3.0);
        lp.add_constraint(Constraint::new("eq", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0));
        let s = solve_lp(&lp).unwrap();
        assert!((s.x[0] + 2.0).abs() < 1e-12 && (s.x[1] - 3.0).abs() < 1e-12);
        assert!(s.certificate_error(&lp) < 1e-10);
    }

    /// LPs with a planted optimum: pick x*, a dual y* and reduced costs z*
    /// satisfying complementary slackness, then derive c and b from them.
    #[test]
    fn planted_optima() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(2..8usize);
            let m = rng.random_range(1..8usize);
            let mut lp = LinearProgram::default();
            let xstar: Vec<f64> =
                (0..n).map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.1..2.0) }).collect();
            for j in 0..n {
                lp.add_variable(format!("x{j}"), 0.0, 0.0, 5.0);
            }
            let mut c = vec![0.0; n];
            for i in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let act: f64 = a.iter().zip(&xstar).map(|(a, x)| a * x).sum();
                let tight = rng.random_bool(0.5);
                let (rhs, y) =
                    if tight { (act, -rng.random_range(0.1..1.0)) } else { (act + rng.random_range(0.1..1.0), 0.0) };
                for j in 0..n {
                    c[j] += y * a[j];
                }
                lp.add_constraint(Constraint::new(
                    format!("r{i}"),
                    a.iter().copied().enumerate().collect(),
                    Relation::Le,
                    rhs,
                ));
            }
            for j in 0..n {
                if xstar[j] == 0.0 {
                    c[j] += rng.random_range(0.1..1.0);
                }
            }
            lp.objective = c;
            let expected = lp.value(&xstar);
            let s = solve_lp(&lp).unwrap();
            assert!((s.objective - expected).abs() < 1e-9 * (1.0 + expected.abs()), "{} vs {expected}", s.objective);
            assert!(s.certificate_error(&lp) < 1e-9, "{}", s.certificate_error(&lp));
        }
    }
}
