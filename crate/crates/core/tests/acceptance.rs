//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fbdof_core::beamformer::{alloc_three_user, alloc_two_user, build, build_k_user_corollary};
use fbdof_core::channel::{generate, validate};
use fbdof_core::dof_formulas::{thm1_feedback, thm2_lower, thm3_upper};
use fbdof_core::harness::{sweep_fig2, sweep_fig4, Regime};
use fbdof_core::polytope::{fm_objective_bound, maximize, three_user_constraints, two_user_constraints};
use fbdof_core::simulator::{dof_from_trace, estimate_dof_slope, run_two_slot, verify_rank_conditions};
use fbdof_core::{Rational, SymmetricConfig, Tolerance, TwoUserParams};

const END_TO_END_SEEDS: u64 = 20;
const K_USER_SEEDS: u64 = 10;
const FM_POINTS: usize = 200;
const RANK_INSTANCES: u64 = 100;
const SLOPE_POWERS: [f64; 2] = [1e4, 1e8];
const SLOPE_TOL_TWO_USER: f64 = 0.15;
const SLOPE_TOL_THREE_USER: f64 = 0.25;
const SLOPE_SEEDS: u64 = 5;

const LIMIT_TWO_USER_RUNS: Duration = Duration::from_secs(1);
const LIMIT_THREE_USER_RUNS: Duration = Duration::from_secs(5);
const LIMIT_TWO_USER_LP: Duration = Duration::from_secs(300);
const LIMIT_THREE_USER_LP: Duration = Duration::from_secs(120);
const LIMIT_K_USER: Duration = Duration::from_secs(10);

fn int(n: i64) -> Rational {
    Rational::from(n)
}

/// Outcome of one criterion: pass flag and a one-line summary.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, took: Duration) -> bool {
    took <= limit
}

/// Every simulated run of criteria 1, 2 and 8: (label, achieved, upper bound).
type RunLog = Vec<(String, Rational, Rational)>;

fn two_user_end_to_end(log: &mut RunLog) -> Verdict {
    let start = Instant::now();
    let s = SymmetricConfig::new(2, 2, 1, 1).unwrap();
    let formula = thm1_feedback(&TwoUserParams::symmetric(2, 1).unwrap());
    let tol = Tolerance::default();
    let mut bad = Vec::new();
    for seed in 0..END_TO_END_SEEDS {
        let run = (|| {
            let ch = generate(&s.network(), seed)?;
            let alloc = alloc_two_user(ch.config())?;
            let bf = build(&ch, &alloc, &tol)?;
            run_two_slot(&ch, &bf, &alloc, &tol)
        })();
        match run {
            Ok(trace) => {
                let dof = dof_from_trace(&trace);
                log.push((format!("two-user seed {seed}"), dof, thm3_upper(&s)));
                if trace.delivered() != 6 || trace.slots.len() != 2 || dof != int(3) || dof != formula {
                    bad.push(format!("seed {seed}: {} symbols, DoF {dof}", trace.delivered()));
                }
            }
            Err(e) => bad.push(format!("seed {seed}: {e}")),
        }
    }
    let took = start.elapsed();
    verdict(
        bad.is_empty() && formula == int(3) && within(LIMIT_TWO_USER_RUNS, took),
        format!("{END_TO_END_SEEDS} seeds, 6 symbols and DoF 3 each, {took:.2?}; {}", summary(&bad)),
    )
}

fn three_user_end_to_end(log: &mut RunLog) -> Verdict {
    let start = Instant::now();
    let s = SymmetricConfig::new(3, 5, 1, 5).unwrap();
    let tol = Tolerance::default();
    let mut bad = Vec::new();
    for seed in 0..END_TO_END_SEEDS {
        let run = (|| {
            let ch = generate(&s.network(), seed)?;
            let alloc = alloc_three_user(&s)?;
            let bf = build(&ch, &alloc, &tol)?;
            let ranks = verify_rank_conditions(&ch, &bf, &alloc, &tol)?;
            Ok::<_, fbdof_core::Error>((ranks, run_two_slot(&ch, &bf, &alloc, &tol)?))
        })();
        match run {
            Ok((ranks, trace)) => {
                let dof = dof_from_trace(&trace);
                log.push((format!("three-user seed {seed}"), dof, thm3_upper(&s)));
                // d4 = 1, d5 = 2: ranks 1, 3, 3, 4, 5 at every receiver
                let expected = [("own", 1), ("from-next", 3), ("from-prev", 3), ("interference", 4), ("total", 5)];
                let ranks_ok = ranks.checks.len() == 15
                    && (0..3).all(|rx| {
                        expected.iter().all(|(name, want)| {
                            ranks
                                .get(rx, name)
                                .is_some_and(|c| c.pass && c.expected == *want && c.measured == *want)
                        })
                    });
                if trace.delivered() != 12 || dof != int(6) || !ranks_ok {
                    bad.push(format!("seed {seed}: {} symbols, DoF {dof}, ranks ok {ranks_ok}", trace.delivered()));
                }
            }
            Err(e) => bad.push(format!("seed {seed}: {e}")),
        }
    }
    let took = start.elapsed();
    verdict(
        bad.is_empty() && within(LIMIT_THREE_USER_RUNS, took),
        format!("{END_TO_END_SEEDS} seeds, 12 symbols, DoF 6, 15 rank checks each, {took:.2?}; {}", summary(&bad)),
    )
}

fn two_user_lp() -> Verdict {
    let start = Instant::now();
    let grid = TwoUserParams::grid(6);
    let mismatches: Vec<String> = grid
        .par_iter()
        .filter_map(|p| match maximize(&two_user_constraints(p)) {
            Ok(sol) if sol.value == thm1_feedback(p) => None,
            Ok(sol) => Some(format!("{p:?}: LP {} vs {}", sol.value, thm1_feedback(p))),
            Err(e) => Some(format!("{p:?}: {e}")),
        })
        .collect();
    let took = start.elapsed();
    verdict(
        mismatches.is_empty() && within(LIMIT_TWO_USER_LP, took),
        format!("{} points, {} mismatches, {took:.2?}; {}", grid.len(), mismatches.len(), summary(&mismatches)),
    )
}

fn fm_vs_lp() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf3);
    let mut points = Vec::with_capacity(FM_POINTS);
    while points.len() < FM_POINTS {
        let m1 = rng.random_range(1..=6);
        let m2 = rng.random_range(1..=6);
        let n1 = rng.random_range(1..=6);
        let n2 = rng.random_range(1..=6);
        let p = TwoUserParams::new(
            m1,
            m2,
            n1,
            n2,
            rng.random_range(0..=m1.min(n1)),
            rng.random_range(0..=m2.min(n1)),
            rng.random_range(0..=m1.min(n2)),
            rng.random_range(0..=m2.min(n2)),
        )
        .unwrap();
        points.push(p);
    }
    let bad: Vec<String> = points
        .par_iter()
        .filter_map(|p| {
            let poly = two_user_constraints(p);
            match (fm_objective_bound(&poly), maximize(&poly)) {
                (Ok(fm), Ok(lp)) if fm == lp.value => None,
                (fm, lp) => Some(format!("{p:?}: fm {fm:?} lp {:?}", lp.map(|s| s.value))),
            }
        })
        .collect();
    verdict(bad.is_empty(), format!("{FM_POINTS} points, {} disagreements; {}", bad.len(), summary(&bad)))
}

fn three_user_lp() -> Verdict {
    let start = Instant::now();
    let mut points = Vec::new();
    for m in 1..=12 {
        for dd in 0..=m {
            for dc in 0..=m {
                points.push(SymmetricConfig::new(3, m, dd, dc).unwrap());
            }
        }
    }
    let findings: Vec<String> = points
        .par_iter()
        .filter_map(|s| {
            let formula = match thm2_lower(s) {
                Ok(f) => f,
                Err(e) => return Some(format!("{s:?}: {e}")),
            };
            match maximize(&three_user_constraints(s)) {
                Ok(sol) if int(3) * sol.value == formula => None,
                Ok(sol) => Some(format!(
                    "M={} Dd={} Dc={}: 3 x LP = {} vs closed form {formula} (pair-alignment limit reading)",
                    s.m,
                    s.d_direct,
                    s.d_cross,
                    int(3) * sol.value
                )),
                Err(e) => Some(format!("{s:?}: {e}")),
            }
        })
        .collect();
    for f in &findings {
        println!("  finding: {f}");
    }
    let took = start.elapsed();
    verdict(
        findings.is_empty() && within(LIMIT_THREE_USER_LP, took),
        format!("{} points, {} discrepancies, {took:.2?}", points.len(), findings.len()),
    )
}

fn fig2() -> Verdict {
    let t = sweep_fig2(2, 2..=8).unwrap();
    let fb: Vec<Rational> = t.rows.iter().map(|r| r.dof_feedback).collect();
    let nofb: Vec<Rational> = t.rows.iter().map(|r| r.dof_nofeedback).collect();
    let want_fb: Vec<Rational> = [2, 4, 6, 6, 6, 6, 6].into_iter().map(int).collect();
    let want_nofb: Vec<Rational> = [2, 4, 4, 4, 4, 4, 4].into_iter().map(int).collect();
    // independent evaluation of the symmetric forms
    let d = 2i64;
    let oracle_ok = t.rows.iter().all(|r| {
        let m = r.m as i64;
        r.dof_feedback == int((2 * m - d).min(3 * d).min(m + d)) && r.dof_nofeedback == int((2 * m - d).min(2 * d))
    });
    // 1.5 D = 3: no gain up to it, strictly positive after
    let gain_ok = t
        .rows
        .iter()
        .all(|r| if r.m <= 3 { r.gain == Rational::ZERO } else { r.gain > Rational::ZERO });
    let ms: Vec<usize> = t.rows.iter().map(|r| r.m).collect();
    verdict(
        fb == want_fb && nofb == want_nofb && oracle_ok && gain_ok && ms == (2..=8).collect::<Vec<_>>(),
        format!(
            "feedback {:?}, no feedback {:?}",
            fb.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            nofb.iter().map(|r| r.to_string()).collect::<Vec<_>>()
        ),
    )
}

fn fig4() -> Verdict {
    let t = sweep_fig4(1, 2..=8).unwrap();
    let tight = t
        .rows
        .iter()
        .filter(|r| r.m >= 5)
        .all(|r| r.thm2_lower == int(9) && r.thm3_upper == int(9));
    let flips = t.rows.iter().all(|r| (r.regime == Regime::ZeroForcing) == (r.m >= 4));
    let below = t.rows.iter().filter(|r| r.m < 4).all(|r| r.regime != Regime::ZeroForcing);
    let at4 = t.rows.iter().find(|r| r.m == 4).is_some_and(|r| r.thm2_lower == int(6));
    let labels: Vec<String> = t.rows.iter().map(|r| format!("{}:{}/{}:{}", r.m, r.thm2_lower, r.thm3_upper, r.regime)).collect();
    verdict(tight && flips && below && at4 && t.rows.len() == 7, labels.join(" "))
}

fn k_user(log: &mut RunLog) -> Verdict {
    let start = Instant::now();
    let tol = Tolerance::default();
    let mut bad = Vec::new();
    for k in 2..=4usize {
        let s = SymmetricConfig::new(k, k, 1, 1).unwrap();
        let k_r = int(k as i64);
        let want_dof = k_r + k_r * (k_r - int(1)) / int(2);
        let baseline = k_r; // K * D without feedback
        if want_dof != thm3_upper(&s) || want_dof / baseline != (k_r + int(1)) / int(2) {
            bad.push(format!("K={k}: closed forms disagree"));
        }
        for seed in 0..K_USER_SEEDS {
            let run = (|| {
                let ch = generate(&s.network(), seed)?;
                let (bf, alloc) = build_k_user_corollary(&ch, &tol)?;
                run_two_slot(&ch, &bf, &alloc, &tol)
            })();
            match run {
                Ok(trace) => {
                    let dof = dof_from_trace(&trace);
                    log.push((format!("K={k} seed {seed}"), dof, thm3_upper(&s)));
                    if trace.delivered() != k * (2 + (k - 1)) || dof != want_dof {
                        bad.push(format!("K={k} seed {seed}: {} symbols, DoF {dof}", trace.delivered()));
                    }
                }
                Err(e) => bad.push(format!("K={k} seed {seed}: {e}")),
            }
        }
    }
    let took = start.elapsed();
    verdict(
        bad.is_empty() && within(LIMIT_K_USER, took),
        format!("K = 2, 3, 4 with {K_USER_SEEDS} seeds each, DoF 3, 6, 10, {took:.2?}; {}", summary(&bad)),
    )
}

fn rank_synthesis() -> Verdict {
    let configs: Vec<SymmetricConfig> = [
        (2, 1, 1, 1),
        (2, 2, 1, 1),
        (2, 3, 1, 2),
        (2, 4, 2, 3),
        (2, 5, 0, 5),
        (2, 6, 3, 1),
        (3, 2, 2, 2),
        (3, 3, 1, 3),
        (3, 4, 1, 2),
        (3, 5, 1, 5),
        (3, 6, 1, 2),
        (3, 6, 4, 4),
        (3, 7, 2, 3),
        (3, 8, 4, 5),
        (3, 8, 0, 8),
        (4, 3, 1, 1),
        (4, 5, 2, 1),
        (4, 7, 1, 2),
        (5, 4, 1, 1),
        (5, 6, 3, 2),
    ]
    .iter()
    .map(|&(k, m, dd, dc)| SymmetricConfig::new(k, m, dd, dc).unwrap())
    .collect();
    let tol = Tolerance::default();
    let failures: usize = configs
        .par_iter()
        .map(|s| {
            (0..RANK_INSTANCES)
                .filter(|&seed| generate(&s.network(), seed).map_or(true, |ch| !validate(&ch, &tol).all_pass()))
                .count()
        })
        .sum();
    let total = configs.len() as u64 * RANK_INSTANCES;
    verdict(failures == 0, format!("{total} instances over {} configs, {failures} rank mismatches", configs.len()))
}

fn slopes() -> Verdict {
    let tol = Tolerance::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, m, dd, dc, target, slack) in [
        (2, 2, 1, 1, 3.0, SLOPE_TOL_TWO_USER),
        (3, 5, 1, 5, 6.0, SLOPE_TOL_THREE_USER),
    ] {
        let s = SymmetricConfig::new(k, m, dd, dc).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..SLOPE_SEEDS {
            let slope = (|| {
                let ch = generate(&s.network(), seed)?;
                let alloc = if k == 2 { alloc_two_user(ch.config())? } else { alloc_three_user(&s)? };
                let bf = build(&ch, &alloc, &tol)?;
                estimate_dof_slope(&ch, &bf, &alloc, &SLOPE_POWERS)
            })();
            match slope {
                Ok(v) => worst = worst.max((v - target).abs()),
                Err(_) => worst = f64::INFINITY,
            }
        }
        ok &= worst <= slack;
        lines.push(format!("K={k}: max |slope - {target}| = {worst:.4} (limit {slack})"));
    }
    verdict(ok, lines.join(", "))
}

fn dominance(log: &RunLog) -> Verdict {
    let bad: Vec<String> = log
        .iter()
        .filter(|(_, dof, upper)| dof > upper)
        .map(|(label, dof, upper)| format!("{label}: {dof} > {upper}"))
        .collect();
    verdict(
        bad.is_empty() && !log.is_empty(),
        format!("{} runs, {} above the upper bound; {}", log.len(), bad.len(), summary(&bad)),
    )
}

fn summary(items: &[String]) -> String {
    match items.first() {
        None => "ok".into(),
        Some(first) if items.len() == 1 => first.clone(),
        Some(first) => format!("{first} (+{} more)", items.len() - 1),
    }
}

fn main() -> ExitCode {
    // libtest-style flags are accepted and ignored
    let mut log = RunLog::new();
    let results = [
        (1, "two-user example end to end", two_user_end_to_end(&mut log)),
        (2, "three-user example end to end", three_user_end_to_end(&mut log)),
        (3, "two-user LP equals closed form", two_user_lp()),
        (4, "elimination bound equals LP", fm_vs_lp()),
        (5, "three-user LP equals closed form", three_user_lp()),
        (6, "two-user figure columns", fig2()),
        (7, "three-user figure columns", fig4()),
        (8, "K-user scheme", k_user(&mut log)),
        (9, "channel rank synthesis", rank_synthesis()),
        (10, "finite-power slopes", slopes()),
        (11, "upper bound dominates every run", dominance(&log)),
    ];
    let mut failed = 0;
    for (n, name, v) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
