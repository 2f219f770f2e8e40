//! Exact rational linear inequality systems: the allocation constraint
//! systems, an exact simplex solver and Fourier-Motzkin projection.

use std::collections::HashSet;
use std::fmt;

use num_integer::Integer;
use serde::Serialize;

use crate::dof_formulas::{SymmetricParams, TwoUserParams};
use crate::error::{Error, Result};
use crate::numkernel::{rat, Rational};

/// `coeffs . x <= bound`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Inequality {
    pub coeffs: Vec<Rational>,
    pub bound: Rational,
    /// Free-form tag carried through dumps; ignored by the solvers.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Polyhedron {
    variables: Vec<String>,
    rows: Vec<Inequality>,
    objective: Vec<Rational>,
}

impl Polyhedron {
    /// A system over `variables` holding just the nonnegativity rows.
    pub fn new<S: Into<String>>(variables: impl IntoIterator<Item = S>) -> Self {
        let variables: Vec<String> = variables.into_iter().map(Into::into).collect();
        let n = variables.len();
        let rows = (0..n)
            .map(|k| {
                let mut coeffs = vec![Rational::ZERO; n];
                coeffs[k] = -Rational::ONE;
                Inequality {
                    coeffs,
                    bound: Rational::ZERO,
                    label: format!("nonneg-{}", variables[k]),
                }
            })
            .collect();
        Polyhedron {
            variables,
            rows,
            objective: vec![Rational::ZERO; n],
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[Inequality] {
        &self.rows
    }

    pub fn objective(&self) -> &[Rational] {
        &self.objective
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Add `sum coeff * var <= bound` given as `(name, coeff)` pairs.
    pub fn add_row(&mut self, label: &str, terms: &[(&str, Rational)], bound: Rational) -> Result<()> {
        let mut coeffs = vec![Rational::ZERO; self.variables.len()];
        for (name, c) in terms {
            coeffs[self.index_of(name)?] += *c;
        }
        self.push_row(Inequality {
            coeffs,
            bound,
            label: label.to_string(),
        })
    }

    pub fn push_row(&mut self, row: Inequality) -> Result<()> {
        if row.coeffs.len() != self.variables.len() {
            return Err(Error::Dimension(format!(
                "row has {} coefficients, system has {} variables",
                row.coeffs.len(),
                self.variables.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn set_objective(&mut self, terms: &[(&str, Rational)]) -> Result<()> {
        let mut obj = vec![Rational::ZERO; self.variables.len()];
        for (name, c) in terms {
            obj[self.index_of(name)?] += *c;
        }
        self.objective = obj;
        Ok(())
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        dot(&self.objective, x)
    }

    /// Rows violated by `x`, by index.
    pub fn violations(&self, x: &[Rational]) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| dot(&r.coeffs, x) > r.bound)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        x.len() == self.variables.len() && self.violations(x).is_empty()
    }

    /// Text form: a `vars` line, a `max` line, then one row per line as
    /// `c1 c2 ... <= b`, optionally followed by `# label`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut variables: Option<Vec<String>> = None;
        let mut objective = None;
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let (body, label) = match raw.split_once('#') {
                Some((b, l)) => (b.trim(), l.trim().to_string()),
                None => (raw.trim(), String::new()),
            };
            if body.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse(format!("line {}: {msg}: `{raw}`", lineno + 1));
            let mut words = body.split_whitespace();
            let head = words.next().expect("nonempty");
            match head {
                "vars" => variables = Some(words.map(str::to_string).collect()),
                "max" => {
                    let c: Vec<Rational> = words.map(str::parse).collect::<Result<_>>()?;
                    objective = Some(c);
                }
                _ => {
                    let toks: Vec<&str> = body.split_whitespace().collect();
                    let le = toks.iter().position(|t| *t == "<=").ok_or_else(|| err("expected `<=`"))?;
                    if le + 2 != toks.len() {
                        return Err(err("expected a single bound after `<=`"));
                    }
                    let coeffs = toks[..le].iter().map(|t| t.parse()).collect::<Result<Vec<Rational>>>()?;
                    let bound = toks[le + 1].parse()?;
                    rows.push(Inequality { coeffs, bound, label });
                }
            }
        }
        let variables = variables.ok_or_else(|| Error::Parse("missing `vars` line".into()))?;
        let n = variables.len();
        let objective = objective.unwrap_or_else(|| vec![Rational::ZERO; n]);
        if objective.len() != n {
            return Err(Error::Parse(format!("objective has {} entries, expected {n}", objective.len())));
        }
        let mut p = Polyhedron {
            variables,
            rows: Vec::new(),
            objective,
        };
        for r in rows {
            p.push_row(r)?;
        }
        Ok(p)
    }
}

impl fmt::Display for Polyhedron {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vars {}", self.variables.join(" "))?;
        write!(f, "max")?;
        for c in &self.objective {
            write!(f, " {c}")?;
        }
        writeln!(f)?;
        for r in &self.rows {
            let lhs: Vec<String> = r.coeffs.iter().map(|c| c.to_string()).collect();
            write!(f, "{} <= {}", lhs.join(" "), r.bound)?;
            if !r.label.is_empty() {
                write!(f, " # {}", r.label)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn n(v: usize) -> Rational {
    Rational::from(v)
}

pub const TWO_USER_VARS: [&str; 5] = ["d1_1", "d1_2", "d2_1", "d2_2", "df"];
pub const THREE_USER_VARS: [&str; 7] = ["d1", "d2", "d3", "d4", "d5", "d6", "d7"];

/// Two-user allocation constraints; variables [`TWO_USER_VARS`], objective
/// is the sum of all five.
pub fn two_user_constraints(p: &TwoUserParams) -> Polyhedron {
    let one = Rational::ONE;
    let mut poly = Polyhedron::new(TWO_USER_VARS);
    let rows: [(&str, &[&str], usize); 9] = [
        ("null-cross-tx1", &["d1_1"], p.m1 - p.d21),
        ("null-cross-tx2", &["d2_1"], p.m2 - p.d12),
        ("null-direct", &["df"], (p.m1 - p.d11).min(p.m2 - p.d22)),
        ("rank-direct-1", &["d1_1", "d1_2"], p.d11),
        ("rank-direct-2", &["d2_1", "d2_2"], p.d22),
        ("rank-cross-21", &["d1_2", "df"], p.d21),
        ("rank-cross-12", &["d2_2", "df"], p.d12),
        ("rx-antennas-2", &["d1_2", "df", "d2_1", "d2_2"], p.n2),
        ("rx-antennas-1", &["d2_2", "df", "d1_1", "d1_2"], p.n1),
    ];
    for (label, vars, bound) in rows {
        let terms: Vec<(&str, Rational)> = vars.iter().map(|v| (*v, one)).collect();
        poly.add_row(label, &terms, n(bound)).expect("known variables");
    }
    let obj: Vec<(&str, Rational)> = TWO_USER_VARS.iter().map(|v| (*v, one)).collect();
    poly.set_objective(&obj).expect("known variables");
    poly
}

/// Upper limit on the paired-alignment count: `2M - 4D_d` when
/// `2D_d <= M <= 2D_c`, else zero.
pub fn pair_alignment_limit(m: usize, d_direct: usize, d_cross: usize) -> usize {
    if 2 * d_direct <= m && m <= 2 * d_cross {
        2 * m - 4 * d_direct
    } else {
        0
    }
}

/// Three-user (symmetric) allocation constraints; variables
/// [`THREE_USER_VARS`], per-user objective `d1+d2+d3+d4+(d5+d6+d7)/2`.
pub fn three_user_constraints(p: &SymmetricParams) -> Polyhedron {
    let (m, dd, dc) = (p.m, p.d_direct, p.d_cross);
    let one = Rational::ONE;
    let half = rat(1, 2);
    let mut poly = Polyhedron::new(THREE_USER_VARS);
    let singles: [(&str, &str, usize); 6] = [
        ("null-next", "d1", m - dc),
        ("null-prev", "d2", m - dc),
        ("null-both-cross", "d3", m.saturating_sub(2 * dc)),
        ("pair-alignment", "d5", pair_alignment_limit(m, dd, dc)),
        ("null-direct-next", "d6", m.saturating_sub(dc + dd)),
        ("null-direct-prev", "d7", m.saturating_sub(dc + dd)),
    ];
    for (label, v, bound) in singles {
        poly.add_row(label, &[(v, one)], n(bound)).expect("known variables");
    }
    let ones = |vs: &[&'static str]| vs.iter().map(|v| (*v, one)).collect::<Vec<_>>();
    poly.add_row("rank-direct", &ones(&["d1", "d2", "d3", "d4"]), n(dd))
        .expect("known variables");
    poly.add_row("rank-cross-next", &ones(&["d1", "d4", "d5", "d6"]), n(dc))
        .expect("known variables");
    poly.add_row("rank-cross-prev", &ones(&["d2", "d4", "d5", "d7"]), n(dc))
        .expect("known variables");
    let two = Rational::from(2);
    poly.add_row(
        "rx-antennas",
        &[
            ("d1", two),
            ("d2", two),
            ("d3", one),
            ("d4", two),
            ("d5", rat(3, 2)),
            ("d6", one),
            ("d7", one),
        ],
        n(m),
    )
    .expect("known variables");
    poly.add_row("tx-antennas", &ones(&THREE_USER_VARS), n(m))
        .expect("known variables");
    poly.set_objective(&[
        ("d1", one),
        ("d2", one),
        ("d3", one),
        ("d4", one),
        ("d5", half),
        ("d6", half),
        ("d7", half),
    ])
    .expect("known variables");
    poly
}

// ---- simplex -----------------------------------------------------------

/// A row of the form `-c * x_k <= 0` with `c > 0`.
fn sign_row_var(row: &Inequality) -> Option<usize> {
    if !row.bound.is_zero() {
        return None;
    }
    let mut found = None;
    for (k, c) in row.coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        if !c.is_negative() || found.is_some() {
            return None;
        }
        found = Some(k);
    }
    found
}

struct Tableau {
    /// `rows x (cols + 1)`; last column is the right-hand side.
    a: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        let inv = p.recip();
        for v in self.a[r].iter_mut() {
            *v *= inv;
        }
        let prow = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f.is_zero() {
                continue;
            }
            for (v, pv) in row.iter_mut().zip(&prow) {
                if !pv.is_zero() {
                    *v -= f * *pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximize `cost . x` over the current basis, allowing only columns in
    /// `allowed`. Bland's rule. Returns false if unbounded.
    fn optimize(&mut self, cost: &[Rational], allowed: &dyn Fn(usize) -> bool) -> bool {
        let rhs = self.cols;
        loop {
            // reduced cost of column j: cost_j - sum_i cost_{basis_i} a_ij
            let mut enter = None;
            for j in 0..self.cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    if !cost[b].is_zero() && !self.a[i][j].is_zero() {
                        rc -= cost[b] * self.a[i][j];
                    }
                }
                if rc.is_positive() {
                    enter = Some(j);
                    break;
                }
            }
            let Some(j) = enter else { return true };
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.a.len() {
                let aij = self.a[i][j];
                if !aij.is_positive() {
                    continue;
                }
                let ratio = self.a[i][rhs] / aij;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr || (ratio == lr && self.basis[i] < self.basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            let Some((i, _)) = leave else { return false };
            self.pivot(i, j);
        }
    }
}

/// Exact LP optimum and a witness point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LpSolution {
    pub value: Rational,
    pub witness: Vec<Rational>,
}

/// Maximize the objective over the polyhedron with a rational two-phase
/// simplex. Variables without a sign row are treated as free.
pub fn maximize(poly: &Polyhedron) -> Result<LpSolution> {
    let nv = poly.variables.len();
    let mut nonneg = vec![false; nv];
    let mut rows: Vec<&Inequality> = Vec::new();
    for row in &poly.rows {
        match sign_row_var(row) {
            Some(k) => nonneg[k] = true,
            None => rows.push(row),
        }
    }
    // structural columns: one per sign-restricted variable, two per free one
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(nv);
    let mut ncols = 0;
    for &nn in &nonneg {
        if nn {
            col_of.push((ncols, None));
            ncols += 1;
        } else {
            col_of.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let structural = ncols;
    let m = rows.len();
    let slack0 = structural;
    let art0 = slack0 + m;
    let negatives: Vec<usize> = (0..m).filter(|&i| rows[i].bound.is_negative()).collect();
    let total = art0 + negatives.len();

    let mut a = vec![vec![Rational::ZERO; total + 1]; m];
    let mut basis = vec![0; m];
    let mut art = art0;
    for (i, row) in rows.iter().enumerate() {
        let sign = if row.bound.is_negative() { -Rational::ONE } else { Rational::ONE };
        for (k, c) in row.coeffs.iter().enumerate() {
            let (pos, neg) = col_of[k];
            a[i][pos] = sign * *c;
            if let Some(q) = neg {
                a[i][q] = -(sign * *c);
            }
        }
        a[i][slack0 + i] = sign;
        a[i][total] = sign * row.bound;
        if row.bound.is_negative() {
            a[i][art] = Rational::ONE;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = slack0 + i;
        }
    }
    let mut t = Tableau { a, basis, cols: total };

    if !negatives.is_empty() {
        let mut cost = vec![Rational::ZERO; total];
        for c in cost.iter_mut().skip(art0) {
            *c = -Rational::ONE;
        }
        t.optimize(&cost, &|_| true);
        let infeasible = (0..m).any(|i| t.basis[i] >= art0 && !t.a[i][total].is_zero());
        if infeasible {
            return Err(Error::Infeasible);
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if t.basis[i] >= art0 {
                if let Some(j) = (0..art0).find(|&j| !t.a[i][j].is_zero()) {
                    t.pivot(i, j);
                }
            }
        }
    }

    let mut cost = vec![Rational::ZERO; total];
    for (k, c) in poly.objective.iter().enumerate() {
        let (pos, neg) = col_of[k];
        cost[pos] = *c;
        if let Some(q) = neg {
            cost[q] = -*c;
        }
    }
    if !t.optimize(&cost, &|j| j < art0) {
        return Err(Error::Unbounded);
    }
    let mut col_val = vec![Rational::ZERO; total];
    for (i, &b) in t.basis.iter().enumerate() {
        col_val[b] = t.a[i][total];
    }
    let witness: Vec<Rational> = col_of
        .iter()
        .map(|&(p, q)| col_val[p] - q.map_or(Rational::ZERO, |q| col_val[q]))
        .collect();
    let value = poly.objective_value(&witness);
    debug_assert!(poly.contains(&witness), "simplex witness violates a row");
    Ok(LpSolution { value, witness })
}

// ---- Fourier-Motzkin ---------------------------------------------------

/// Scale a row so its coefficients and bound are coprime integers.
fn normalize(row: &Inequality) -> Inequality {
    let vals = row.coeffs.iter().chain(std::iter::once(&row.bound));
    let lcm = vals.clone().fold(1i128, |acc, v| acc.lcm(&v.denom()));
    let ints: Vec<i128> = vals.map(|v| (*v * Rational::from_int(lcm)).numer()).collect();
    let g = ints.iter().fold(0i128, |acc, v| acc.gcd(v));
    let g = if g == 0 { 1 } else { g };
    let mut coeffs: Vec<Rational> = ints.iter().map(|v| Rational::from_int(v / g)).collect();
    let bound = coeffs.pop().expect("bound present");
    Inequality {
        coeffs,
        bound,
        label: row.label.clone(),
    }
}

/// Project out `var`. The result has one fewer variable; syntactic
/// duplicates (after normalization) are dropped.
pub fn fm_eliminate(poly: &Polyhedron, var: &str) -> Result<Polyhedron> {
    let k = poly.index_of(var)?;
    let drop_k = |c: &[Rational]| -> Vec<Rational> {
        c.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| *v).collect()
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut out_rows = Vec::new();
    for row in &poly.rows {
        let c = row.coeffs[k];
        if c.is_positive() {
            pos.push(row);
        } else if c.is_negative() {
            neg.push(row);
        } else {
            out_rows.push(Inequality {
                coeffs: drop_k(&row.coeffs),
                bound: row.bound,
                label: row.label.clone(),
            });
        }
    }
    for p in &pos {
        for q in &neg {
            // scale so the eliminated coefficients are +1 and -1, then add
            let sp = p.coeffs[k].recip();
            let sq = (-q.coeffs[k]).recip();
            let coeffs: Vec<Rational> = p.coeffs.iter().zip(&q.coeffs).map(|(a, b)| sp * *a + sq * *b).collect();
            let label = if p.label.is_empty() && q.label.is_empty() {
                String::new()
            } else {
                format!("{}+{}", p.label, q.label)
            };
            out_rows.push(Inequality {
                coeffs: drop_k(&coeffs),
                bound: sp * p.bound + sq * q.bound,
                label,
            });
        }
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(out_rows.len());
    for r in out_rows {
        let r = normalize(&r);
        let all_zero = r.coeffs.iter().all(Rational::is_zero);
        if all_zero && !r.bound.is_negative() {
            continue; // 0 <= b, trivially true
        }
        if seen.insert((r.coeffs.clone(), r.bound)) {
            rows.push(r);
        }
    }
    Ok(Polyhedron {
        variables: drop_k_names(&poly.variables, k),
        rows,
        objective: drop_k(&poly.objective),
    })
}

fn drop_k_names(v: &[String], k: usize) -> Vec<String> {
    v.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, s)| s.clone()).collect()
}

/// Name of the auxiliary objective variable used by [`fm_objective_bound`].
pub const OBJECTIVE_VAR: &str = "objective";

/// Add an objective variable `t <= c . x`, eliminate every original
/// variable, and read off the largest feasible `t`.
pub fn fm_objective_bound(poly: &Polyhedron) -> Result<Rational> {
    fm_objective_bound_in_order(poly, &poly.variables.clone())
}

/// As [`fm_objective_bound`] with an explicit elimination order, which must
/// list every variable once.
pub fn fm_objective_bound_in_order(poly: &Polyhedron, order: &[String]) -> Result<Rational> {
    let mut sorted: Vec<&String> = order.iter().collect();
    sorted.sort();
    let mut expected: Vec<&String> = poly.variables.iter().collect();
    expected.sort();
    if sorted != expected {
        return Err(Error::Config("elimination order must list every variable exactly once".into()));
    }
    let mut vars = poly.variables.clone();
    vars.push(OBJECTIVE_VAR.to_string());
    let mut lifted = Polyhedron {
        variables: vars,
        rows: poly
            .rows
            .iter()
            .map(|r| {
                let mut coeffs = r.coeffs.clone();
                coeffs.push(Rational::ZERO);
                Inequality {
                    coeffs,
                    bound: r.bound,
                    label: r.label.clone(),
                }
            })
            .collect(),
        objective: vec![Rational::ZERO; poly.variables.len() + 1],
    };
    let mut link: Vec<Rational> = poly.objective.iter().map(|c| -*c).collect();
    link.push(Rational::ONE);
    lifted.push_row(Inequality {
        coeffs: link,
        bound: Rational::ZERO,
        label: "objective-link".into(),
    })?;
    for v in order {
        lifted = fm_eliminate(&lifted, v)?;
    }
    objective_bound_from_projection(&lifted)
}

/// Given a system in the single objective variable, return its maximum.
fn objective_bound_from_projection(p: &Polyhedron) -> Result<Rational> {
    debug_assert_eq!(p.variables.len(), 1);
    let mut best: Option<Rational> = None;
    for r in &p.rows {
        let c = r.coeffs[0];
        if c.is_zero() {
            if r.bound.is_negative() {
                return Err(Error::Infeasible);
            }
        } else if c.is_positive() {
            let b = r.bound / c;
            best = Some(best.map_or(b, |x| x.min(b)));
        }
    }
    best.ok_or(Error::Unbounded)
}
