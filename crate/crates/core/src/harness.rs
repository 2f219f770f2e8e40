//! Figure sweeps and grid verification.

use std::fmt;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::beamformer::{alloc_three_user, alloc_two_user, build, rank_conditions};
use crate::channel::{generate_with_tol, NetworkConfig, SymmetricConfig};
use crate::dof_formulas::{
    symmetric_two_user_nofeedback, thm1_feedback, thm2_lower, thm3_upper, TwoUserParams,
};
use crate::error::{Error, Result};
use crate::numkernel::{Rational, Tolerance};
use crate::polytope::{maximize, three_user_constraints, two_user_constraints};
use crate::simulator::{dof_from_trace, run_two_slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipReason {
    Integrality,
    Threshold,
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skip {
    pub point: String,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table<R> {
    pub rows: Vec<R>,
    pub skipped: Vec<Skip>,
    pub warnings: Vec<String>,
}

impl<R: Serialize> Table<R> {
    /// CSV with a header row; the header is written even with no rows.
    pub fn to_csv(&self, header: &[&str]) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(header)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fig2Row {
    pub m: usize,
    pub dof_feedback: Rational,
    pub dof_nofeedback: Rational,
    pub gain: Rational,
}

pub const FIG2_HEADER: [&str; 4] = ["M", "dof_feedback", "dof_nofeedback", "gain"];

/// Symmetric two-user sweep over `M` with every link of rank `d`.
pub fn sweep_fig2(d: usize, m_range: RangeInclusive<usize>) -> Result<Table<Fig2Row>> {
    let mut warnings = Vec::new();
    if d % 2 != 0 {
        warnings.push(format!("D={d} is odd; formulas are evaluated anyway"));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for m in m_range {
        if m < d {
            skipped.push(Skip {
                point: format!("M={m}"),
                reason: SkipReason::Invariant,
                detail: format!("rank {d} exceeds {m} antennas"),
            });
            continue;
        }
        let fb = thm1_feedback(&TwoUserParams::symmetric(m, d)?);
        let nofb = symmetric_two_user_nofeedback(m, d);
        rows.push(Fig2Row {
            m,
            dof_feedback: fb,
            dof_nofeedback: nofb,
            gain: fb - nofb,
        });
    }
    Ok(Table { rows, skipped, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "IA")]
    Alignment,
    #[serde(rename = "ZF+IA")]
    Mixed,
    #[serde(rename = "ZF")]
    ZeroForcing,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Alignment => "IA",
            Regime::Mixed => "ZF+IA",
            Regime::ZeroForcing => "ZF",
        })
    }
}

/// Which scheme family attains the three-user lower bound.
pub fn regime(p: &SymmetricConfig) -> Regime {
    let (m, dd, dc) = (p.m, p.d_direct, p.d_cross);
    if m >= 2 * dc {
        return Regime::ZeroForcing;
    }
    // zero-forcing branch strictly above the best pure-alignment branch
    let zf = Rational::from(2 * m) - Rational::from(dc);
    let ia = (Rational::from(3 * m) / Rational::from(2)).min(Rational::from(m + dd));
    if zf > ia {
        Regime::Mixed
    } else {
        Regime::Alignment
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fig4Row {
    pub m: usize,
    pub thm2_lower: Rational,
    pub thm3_upper: Rational,
    pub regime: Regime,
}

pub const FIG4_HEADER: [&str; 4] = ["M", "lower", "upper", "regime"];

/// Symmetric three-user sweep over `M` with cross rank twice the direct rank.
pub fn sweep_fig4(d_direct: usize, m_range: RangeInclusive<usize>) -> Result<Table<Fig4Row>> {
    let dc = 2 * d_direct;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for m in m_range {
        if m < dc {
            skipped.push(Skip {
                point: format!("M={m}"),
                reason: SkipReason::Invariant,
                detail: format!("cross rank {dc} exceeds {m} antennas"),
            });
            continue;
        }
        let p = SymmetricConfig::new(3, m, d_direct, dc)?;
        rows.push(Fig4Row {
            m,
            thm2_lower: thm2_lower(&p)?,
            thm3_upper: thm3_upper(&p),
            regime: regime(&p),
        });
    }
    Ok(Table {
        rows,
        skipped,
        warnings: Vec::new(),
    })
}

// ---- SVG ---------------------------------------------------------------

/// Line plot of one or more integer-x series. Plain SVG text.
pub fn svg_plot(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let pts = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    let y1 = if y1 > 0.0 { y1 * 1.1 } else { 1.0 };
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / y1 * (H - 2.0 * PAD);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s += &format!("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n", W / 2.0);
    s += &format!(
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = H - PAD,
        r = W - PAD
    );
    s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n", W / 2.0, H - 10.0);
    let mut x = x0.ceil();
    while x <= x1 {
        s += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{x}</text>\n", sx(x), H - PAD + 16.0);
        x += 1.0;
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        s += &format!(
            "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        );
        for &(x, y) in pts {
            s += &format!("<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{c}\"/>\n", sx(x), sy(y));
        }
        s += &format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\">{name}</text>\n",
            PAD + 8.0,
            PAD + 14.0 * i as f64
        );
    }
    s += "</svg>\n";
    s
}

pub fn fig2_svg(t: &Table<Fig2Row>) -> String {
    let f = |g: fn(&Fig2Row) -> Rational| t.rows.iter().map(|r| (r.m as f64, g(r).to_f64())).collect();
    svg_plot(
        "two-user total DoF",
        "M",
        &[("with feedback", f(|r| r.dof_feedback)), ("without feedback", f(|r| r.dof_nofeedback))],
    )
}

pub fn fig4_svg(t: &Table<Fig4Row>) -> String {
    let f = |g: fn(&Fig4Row) -> Rational| t.rows.iter().map(|r| (r.m as f64, g(r).to_f64())).collect();
    svg_plot(
        "three-user total DoF",
        "M",
        &[("achievable", f(|r| r.thm2_lower)), ("upper bound", f(|r| r.thm3_upper))],
    )
}

// ---- grid verification -------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    TwoUser,
    ThreeUser,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GridRow {
    pub point: String,
    pub lp_value: Rational,
    pub formula: Rational,
    pub lp_match: bool,
    /// Simulated runs at this point.
    pub runs: usize,
    /// Achieved DoF of the first simulated run.
    pub achieved: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub point: String,
    pub seed: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub kind: GridKind,
    pub rows: Vec<GridRow>,
    pub failures: Vec<Finding>,
    pub skipped: Vec<Skip>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn row(&self, point: &str) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.point == point)
    }

    pub fn to_csv(&self) -> Result<String> {
        let t = Table {
            rows: self.rows.clone(),
            skipped: Vec::new(),
            warnings: Vec::new(),
        };
        t.to_csv(&["point", "lp_value", "formula", "lp_match", "runs", "achieved"])
    }
}

pub const MAX_GRID_ANTENNAS: usize = 8;

struct PointOutcome {
    row: GridRow,
    failures: Vec<Finding>,
    skipped: Option<Skip>,
}

fn simulate_point(
    point: &str,
    network: &NetworkConfig,
    alloc: &crate::beamformer::SymbolAllocation,
    expected: Rational,
    seeds: impl Iterator<Item = u64>,
    tol: &Tolerance,
    failures: &mut Vec<Finding>,
) -> (usize, Option<Rational>) {
    let mut runs = 0;
    let mut first = None;
    for seed in seeds {
        let fail = |detail: String| Finding {
            point: point.to_string(),
            seed: Some(seed),
            detail,
        };
        let outcome = (|| -> Result<Rational> {
            let ch = generate_with_tol(network, seed, tol)?;
            let bf = build(&ch, alloc, tol)?;
            let report = rank_conditions(&ch, &bf, tol)?;
            if let Some(c) = report.checks.iter().find(|c| !c.pass) {
                return Err(Error::Numerical(format!(
                    "rank `{}` at rx{}: {} vs {}",
                    c.name,
                    c.receiver + 1,
                    c.measured,
                    c.expected
                )));
            }
            let trace = run_two_slot(&ch, &bf, alloc, tol)?;
            Ok(dof_from_trace(&trace))
        })();
        runs += 1;
        match outcome {
            Ok(dof) => {
                first.get_or_insert(dof);
                if dof != expected {
                    failures.push(fail(format!("achieved {dof}, expected {expected}")));
                }
            }
            Err(e) => failures.push(fail(e.to_string())),
        }
    }
    (runs, first)
}

fn point_seeds(seed_base: u64, index: usize, seeds: usize) -> impl Iterator<Item = u64> {
    let base = seed_base ^ index as u64;
    (0..seeds as u64).map(move |s| base.wrapping_add(s << 32))
}

fn two_user_point(index: usize, p: &TwoUserParams, seeds: usize, seed_base: u64, tol: &Tolerance) -> Result<PointOutcome> {
    let point = format!(
        "M=({},{}) N=({},{}) D=({},{},{},{})",
        p.m1, p.m2, p.n1, p.n2, p.d11, p.d12, p.d21, p.d22
    );
    let formula = thm1_feedback(p);
    let lp_value = maximize(&two_user_constraints(p))?.value;
    let mut failures = Vec::new();
    if lp_value != formula {
        failures.push(Finding {
            point: point.clone(),
            seed: None,
            detail: format!("LP optimum {lp_value} differs from closed form {formula}"),
        });
    }
    let (runs, achieved) = if seeds > 0 {
        let network = p.network()?;
        let alloc = alloc_two_user(&network)?;
        simulate_point(&point, &network, &alloc, formula, point_seeds(seed_base, index, seeds), tol, &mut failures)
    } else {
        (0, None)
    };
    Ok(PointOutcome {
        row: GridRow {
            point,
            lp_value,
            formula,
            lp_match: lp_value == formula,
            runs,
            achieved,
        },
        failures,
        skipped: None,
    })
}

fn three_user_point(index: usize, s: &SymmetricConfig, seeds: usize, seed_base: u64, tol: &Tolerance) -> Result<PointOutcome> {
    let point = format!("M={} Dd={} Dc={}", s.m, s.d_direct, s.d_cross);
    let formula = thm2_lower(s)?;
    let lp_value = Rational::from(3) * maximize(&three_user_constraints(s))?.value;
    let mut failures = Vec::new();
    if lp_value != formula {
        failures.push(Finding {
            point: point.clone(),
            seed: None,
            detail: format!("three times the LP optimum is {lp_value}, closed form gives {formula}"),
        });
    }
    let mut skipped = None;
    let (runs, achieved) = if seeds == 0 {
        (0, None)
    } else {
        match alloc_three_user(s) {
            Ok(alloc) => simulate_point(
                &point,
                &s.network(),
                &alloc,
                formula,
                point_seeds(seed_base, index, seeds),
                tol,
                &mut failures,
            ),
            Err(Error::Integrality { prescription }) => {
                let text: Vec<String> = prescription.iter().map(Rational::to_string).collect();
                skipped = Some(Skip {
                    point: point.clone(),
                    reason: SkipReason::Integrality,
                    detail: format!("target {formula} needs counts ({})", text.join(", ")),
                });
                (0, None)
            }
            Err(e) => return Err(e),
        }
    };
    Ok(PointOutcome {
        row: GridRow {
            point,
            lp_value,
            formula,
            lp_match: lp_value == formula,
            runs,
            achieved,
        },
        failures,
        skipped,
    })
}

/// LP-versus-formula equality at every point of the grid and, for
/// integral allocations, simulation on `seeds` random instances per point.
/// The seeds of point `n` derive from `seed_base ^ n`.
pub fn verify_grid(
    kind: GridKind,
    max_antennas: usize,
    seeds: usize,
    seed_base: u64,
    tol: &Tolerance,
) -> Result<VerificationReport> {
    if max_antennas == 0 || max_antennas > MAX_GRID_ANTENNAS {
        return Err(Error::Config(format!(
            "grid size must be in 1..={MAX_GRID_ANTENNAS}, got {max_antennas}"
        )));
    }
    let outcomes: Vec<PointOutcome> = match kind {
        GridKind::TwoUser => TwoUserParams::grid(max_antennas)
            .par_iter()
            .enumerate()
            .map(|(n, p)| two_user_point(n, p, seeds, seed_base, tol))
            .collect::<Result<_>>()?,
        GridKind::ThreeUser => {
            let mut points = Vec::new();
            for m in 1..=max_antennas {
                for dd in 0..=m {
                    for dc in 0..=m {
                        points.push(SymmetricConfig::new(3, m, dd, dc)?);
                    }
                }
            }
            points
                .par_iter()
                .enumerate()
                .map(|(n, s)| three_user_point(n, s, seeds, seed_base, tol))
                .collect::<Result<_>>()?
        }
    };
    let mut report = VerificationReport {
        kind,
        rows: Vec::with_capacity(outcomes.len()),
        failures: Vec::new(),
        skipped: Vec::new(),
    };
    for o in outcomes {
        report.rows.push(o.row);
        report.failures.extend(o.failures);
        report.skipped.extend(o.skipped);
    }
    Ok(report)
}
