use proptest::prelude::*;
use proptest::sample::subsequence;

use fbdof_core::beamformer::{
    alloc_three_user, alloc_two_user, build, build_k_user_corollary, rank_conditions, zero_forcing_residuals,
};
use fbdof_core::channel::{generate, validate};
use fbdof_core::dof_formulas::{corollary1_dof, thm1_feedback, thm2_lower, thm3_upper};
use fbdof_core::harness::{sweep_fig4, verify_grid, GridKind, FIG4_HEADER};
use fbdof_core::numkernel::{hstack, nullspace_basis, rank_tol, span_contains};
use fbdof_core::polytope::{fm_objective_bound_in_order, maximize, two_user_constraints};
use fbdof_core::simulator::{dof_from_trace, run_two_slot};
use fbdof_core::{
    BeamformerSet, ChannelInstance, ComplexMatrix, Error, Rational, SymmetricConfig, Tolerance, TwoUserParams,
};

fn tol() -> Tolerance {
    Tolerance::default()
}

fn symmetric(max_m: usize) -> impl Strategy<Value = SymmetricConfig> {
    (1..=max_m)
        .prop_flat_map(|m| (Just(m), 0..=m, 0..=m))
        .prop_map(|(m, dd, dc)| SymmetricConfig::new(3, m, dd, dc).unwrap())
}

fn two_user(max: usize) -> impl Strategy<Value = TwoUserParams> {
    (1..=max, 1..=max, 1..=max, 1..=max)
        .prop_flat_map(|(m1, m2, n1, n2)| {
            (
                Just((m1, m2, n1, n2)),
                0..=m1.min(n1),
                0..=m2.min(n1),
                0..=m1.min(n2),
                0..=m2.min(n2),
            )
        })
        .prop_map(|((m1, m2, n1, n2), a, b, c, d)| TwoUserParams::new(m1, m2, n1, n2, a, b, c, d).unwrap())
}

/// A random complex matrix built from a channel draw, so it shares the
/// crate's Gaussian generator.
fn gaussian(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let cfg = fbdof_core::NetworkConfig::new(vec![cols, 1], vec![rows, 1], vec![vec![rows.min(cols), 0], vec![0, 0]])
        .unwrap();
    generate(&cfg, seed).unwrap().h(0, 0).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn span_membership_matches_rank(rows in 2usize..7, wc in 1usize..4, seed in any::<u64>(), inside in any::<bool>()) {
        let wc = wc.min(rows - 1);
        let w = gaussian(rows, wc, seed);
        let u = if inside { &w * gaussian(wc, 2, seed ^ 1) } else { gaussian(rows, 2, seed ^ 2) };
        let joint = hstack(rows, &[&u, &w]).unwrap();
        let by_rank = rank_tol(&joint, &tol()) == rank_tol(&w, &tol());
        prop_assert_eq!(span_contains(&u, &w, &tol()).unwrap(), by_rank);
        prop_assert_eq!(by_rank, inside);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated(rows in 1usize..6, cols in 1usize..7, seed in any::<u64>()) {
        let a = gaussian(rows, cols, seed);
        let n = nullspace_basis(&a, &tol());
        prop_assert_eq!(rank_tol(&a, &tol()) + n.ncols(), cols);
        for c in n.column_iter() {
            prop_assert!((&a * c).norm() <= 1e-8);
        }
        let gram = n.adjoint() * &n;
        let eye = ComplexMatrix::identity(n.ncols(), n.ncols());
        prop_assert!((gram - eye).norm() <= 1e-8);
    }

    #[test]
    fn generated_ranks_match_and_files_repeat(s in symmetric(6), seed in any::<u64>()) {
        let a = generate(&s.network(), seed).unwrap();
        prop_assert!(validate(&a, &tol()).all_pass());
        let b = generate(&s.network(), seed).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn three_user_scheme_invariants(s in symmetric(8), seed in 0u64..1000) {
        let alloc = match alloc_three_user(&s) {
            Ok(a) => a,
            Err(Error::Integrality { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(alloc.violations(&s.network()).unwrap().is_empty());
        let ch = generate(&s.network(), seed).unwrap();
        let bf = build(&ch, &alloc, &tol()).unwrap();
        check_blocks(&ch, &bf)?;
        prop_assert!(rank_conditions(&ch, &bf, &tol()).unwrap().all_pass());
        let trace = run_two_slot(&ch, &bf, &alloc, &tol()).unwrap();
        let dof = dof_from_trace(&trace);
        prop_assert_eq!(dof, alloc.objective());
        prop_assert_eq!(dof, thm2_lower(&s).unwrap());
        prop_assert!(dof <= thm3_upper(&s));
        prop_assert!(trace.max_residual() <= tol().residual_tol);
        // replay from files
        let ch2 = ChannelInstance::from_json(&ch.to_json().unwrap()).unwrap();
        let bf2 = BeamformerSet::from_json(&bf.to_json().unwrap()).unwrap();
        let again = run_two_slot(&ch2, &bf2, &alloc, &tol()).unwrap();
        prop_assert_eq!(again.symbols, trace.symbols);
    }

    #[test]
    fn two_user_scheme_invariants(p in two_user(5), seed in 0u64..1000) {
        let net = p.network().unwrap();
        let alloc = alloc_two_user(&net).unwrap();
        prop_assert_eq!(alloc.objective(), thm1_feedback(&p));
        prop_assert!(alloc.violations(&net).unwrap().is_empty());
        let ch = generate(&net, seed).unwrap();
        let bf = build(&ch, &alloc, &tol()).unwrap();
        check_blocks(&ch, &bf)?;
        let trace = run_two_slot(&ch, &bf, &alloc, &tol()).unwrap();
        prop_assert_eq!(dof_from_trace(&trace), alloc.objective());
        prop_assert!(trace.max_residual() <= tol().residual_tol);
    }

    #[test]
    fn k_user_scheme_reaches_upper_bound(k in 2usize..5, dd in 0usize..3, dc in 0usize..3, extra in 0usize..2, seed in 0u64..1000) {
        let m = (dd + (k - 1) * dc + extra).max(1);
        let s = SymmetricConfig::new(k, m, dd.min(m), dc.min(m)).unwrap();
        prop_assert_eq!(corollary1_dof(&s).unwrap(), thm3_upper(&s));
        let ch = generate(&s.network(), seed).unwrap();
        let (bf, alloc) = build_k_user_corollary(&ch, &tol()).unwrap();
        check_blocks(&ch, &bf)?;
        let trace = run_two_slot(&ch, &bf, &alloc, &tol()).unwrap();
        prop_assert_eq!(dof_from_trace(&trace), thm3_upper(&s));
    }

    #[test]
    fn lower_meets_upper_above_threshold(s in symmetric(12)) {
        let lower = thm2_lower(&s).unwrap();
        let upper = thm3_upper(&s);
        prop_assert!(lower <= upper);
        if s.m >= 2 * s.d_cross + s.d_direct {
            prop_assert_eq!(lower, upper);
        }
    }

    #[test]
    fn elimination_order_does_not_matter(p in two_user(6), order in Just(vec![0usize, 1, 2, 3, 4]).prop_shuffle()) {
        let poly = two_user_constraints(&p);
        let names: Vec<String> = order.iter().map(|&i| poly.variables()[i].clone()).collect();
        let fm = fm_objective_bound_in_order(&poly, &names).unwrap();
        prop_assert_eq!(fm, maximize(&poly).unwrap().value);
    }

    #[test]
    fn rational_sums_are_exact(xs in subsequence((1i64..40).collect::<Vec<_>>(), 1..12)) {
        // sum of 1/(n(n+1)) telescopes
        let total: Rational = xs.iter().map(|&n| Rational::new(1, (n * (n + 1)) as i128)).sum();
        let by_parts: Rational = xs.iter().map(|&n| Rational::new(1, n as i128) - Rational::new(1, (n + 1) as i128)).sum();
        prop_assert_eq!(total, by_parts);
    }
}

/// Forced zeros are below the residual tolerance; every other product is
/// clearly nonzero.
fn check_blocks(ch: &ChannelInstance, bf: &BeamformerSet) -> Result<(), TestCaseError> {
    for (_, _, _, r) in zero_forcing_residuals(ch, bf) {
        prop_assert!(r <= tol().residual_tol);
    }
    let k = bf.k();
    for tx in 0..k {
        for b in &bf.blocks[tx] {
            for rx in (0..k).filter(|&rx| b.kind.visible_at(tx, rx, k) && ch.config().rank(rx, tx) > 0) {
                for c in b.columns.column_iter() {
                    let n = (ch.h(rx, tx) * c).norm();
                    prop_assert!(n > tol().residual_tol, "tx{} {} invisible at rx{}: {n:e}", tx, b.kind.name(), rx);
                }
            }
        }
    }
    Ok(())
}

#[test]
fn sweeps_and_grids_are_deterministic() {
    let a = sweep_fig4(1, 1..=9).unwrap().to_csv(&FIG4_HEADER).unwrap();
    let b = sweep_fig4(1, 1..=9).unwrap().to_csv(&FIG4_HEADER).unwrap();
    assert_eq!(a, b);
    let g1 = verify_grid(GridKind::TwoUser, 3, 1, 99, &tol()).unwrap();
    let g2 = verify_grid(GridKind::TwoUser, 3, 1, 99, &tol()).unwrap();
    assert!(g1.passed(), "{:?}", g1.failures);
    assert_eq!(g1.to_csv().unwrap(), g2.to_csv().unwrap());
}

#[test]
fn three_user_grid_reports_example_point() {
    let r = verify_grid(GridKind::ThreeUser, 6, 2, 1, &tol()).unwrap();
    assert!(r.passed(), "{:?}", r.failures);
    let row = r.row("M=5 Dd=1 Dc=5").unwrap();
    assert_eq!(row.achieved, Some(Rational::from(6)));
    assert!(row.lp_match);
}
