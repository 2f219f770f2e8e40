//! Beamformer construction for the two-user, three-user and K-user
//! feedback schemes.

mod allocation;
mod set;

use serde::Serialize;

pub use allocation::{
    alloc_k_user, alloc_three_user, alloc_two_user, three_user_prescription, KUserCounts, SymbolAllocation,
    ThreeUserCase, ThreeUserCounts, TwoUserCounts,
};
pub use set::{BeamformerSet, Block, BlockKind};

use crate::channel::ChannelInstance;
use crate::error::{Error, Result};
use crate::numkernel::{
    eigenvalues, eigenvector, hstack, joint_nullspace, normalize_columns, nullspace_basis, rank_tol,
    span_residual, ComplexMatrix, Tolerance,
};
use crate::stream::{self, tag};

/// Cross images below this fraction of a unit column are treated as
/// vanishing when screening alignment solutions.
const VANISHING_IMAGE: f64 = 1e-6;

fn kind_tag(kind: BlockKind) -> u64 {
    match kind {
        BlockKind::ZfCross => 1,
        BlockKind::Random => 2,
        BlockKind::ZfOwn => 3,
        BlockKind::ZfNext => 4,
        BlockKind::ZfPrev => 5,
        BlockKind::Aligned => 6,
        BlockKind::PairNext => 7,
        BlockKind::PairPrev => 8,
        BlockKind::ZfOwnNext => 9,
        BlockKind::ZfOwnPrev => 10,
        BlockKind::OnlyAt(c) => 100 + c as u64,
    }
}

/// `count` random unit-norm combinations of the columns of `basis`.
fn combine(basis: &ComplexMatrix, count: usize, seed: u64, tags: &[u64], what: &str) -> Result<ComplexMatrix> {
    if count > basis.ncols() {
        return Err(Error::InfeasibleAllocation(format!(
            "{what}: need {count} directions, only {} available",
            basis.ncols()
        )));
    }
    let mut rng = stream::substream(seed, tags);
    let g = stream::gaussian_matrix(&mut rng, basis.ncols(), count);
    let mut v = basis * g;
    normalize_columns(&mut v);
    Ok(v)
}

fn block_from_nullspace(
    inst: &ChannelInstance,
    tx: usize,
    kind: BlockKind,
    constraints: &[&ComplexMatrix],
    count: usize,
    tol: &Tolerance,
) -> Result<Block> {
    let basis = if constraints.is_empty() {
        let m = inst.config().tx_antennas[tx];
        ComplexMatrix::identity(m, m)
    } else {
        joint_nullspace(constraints, tol)?
    };
    let what = format!("tx{} {}", tx + 1, kind.name());
    let columns = combine(&basis, count, inst.seed(), &[tag::BEAM, tx as u64, kind_tag(kind)], &what)?;
    Ok(Block { kind, columns })
}

/// Largest `|H_{rx,tx} V| / |H_{rx,tx}|` over every block and every
/// receiver that the block's kind says must not see it.
pub fn zero_forcing_residuals(inst: &ChannelInstance, bf: &BeamformerSet) -> Vec<(usize, usize, BlockKind, f64)> {
    let k = bf.k();
    let mut out = Vec::new();
    for tx in 0..k {
        for b in &bf.blocks[tx] {
            if b.columns.ncols() == 0 {
                continue;
            }
            for rx in 0..k {
                if b.kind.visible_at(tx, rx, k) {
                    continue;
                }
                let h = inst.h(rx, tx);
                let r = (h * &b.columns).norm() / h.norm().max(1.0);
                out.push((tx, rx, b.kind, r));
            }
        }
    }
    out
}

fn check_zero_forcing(inst: &ChannelInstance, bf: &BeamformerSet, tol: &Tolerance) -> Result<()> {
    for (tx, rx, kind, r) in zero_forcing_residuals(inst, bf) {
        if r > tol.residual_tol {
            return Err(Error::InfeasibleAllocation(format!(
                "tx{} {} leaks into rx{} (residual {r:.3e})",
                tx + 1,
                kind.name(),
                rx + 1
            )));
        }
    }
    Ok(())
}

fn check_full_column_rank(bf: &BeamformerSet, tol: &Tolerance) -> Result<()> {
    for tx in 0..bf.k() {
        let v = bf.stacked(tx);
        let r = rank_tol(&v, tol);
        if r != v.ncols() {
            return Err(Error::InfeasibleAllocation(format!(
                "tx{} beamformer has rank {r} < {} columns",
                tx + 1,
                v.ncols()
            )));
        }
    }
    Ok(())
}

fn require_rank_conditions(inst: &ChannelInstance, bf: &BeamformerSet, tol: &Tolerance) -> Result<()> {
    let report = rank_conditions(inst, bf, tol)?;
    if let Some(c) = report.checks.iter().find(|c| !c.pass) {
        return Err(Error::InfeasibleAllocation(format!(
            "receive matrix `{}` at rx{} has rank {}, expected {}",
            c.name,
            c.receiver + 1,
            c.measured,
            c.expected
        )));
    }
    Ok(())
}

// ---- two-user ----------------------------------------------------------

/// Two-user blocks: zero-forced private symbols, random common symbols and
/// relayed symbols zero-forced at the own receiver.
pub fn build_two_user(inst: &ChannelInstance, alloc: &SymbolAllocation, tol: &Tolerance) -> Result<BeamformerSet> {
    let SymbolAllocation::TwoUser(c) = alloc else {
        return Err(Error::Config("two-user construction needs a two-user allocation".into()));
    };
    if inst.k() != 2 {
        return Err(Error::Config(format!("two-user construction on a K={} channel", inst.k())));
    }
    let mut blocks = Vec::with_capacity(2);
    for i in 0..2 {
        let j = 1 - i;
        let private = block_from_nullspace(inst, i, BlockKind::ZfCross, &[inst.h(j, i)], c.private[i], tol)?;
        let common = block_from_nullspace(inst, i, BlockKind::Random, &[], c.common[i], tol)?;
        let relayed = block_from_nullspace(inst, i, BlockKind::ZfOwn, &[inst.h(i, i)], c.relayed, tol)?;
        blocks.push(vec![private, common, relayed]);
    }
    let bf = BeamformerSet {
        allocation: *alloc,
        blocks,
    };
    check_zero_forcing(inst, &bf, tol)?;
    check_full_column_rank(&bf, tol)?;
    require_rank_conditions(inst, &bf, tol)?;
    Ok(bf)
}

// ---- K-user ------------------------------------------------------------

/// The K-user scheme: per transmitter, `D_d` directions zero-forced at all
/// cross receivers and, for each cross receiver, `D_c` directions
/// zero-forced everywhere else.
pub fn build_k_user_corollary(inst: &ChannelInstance, tol: &Tolerance) -> Result<(BeamformerSet, SymbolAllocation)> {
    let s = inst
        .config()
        .as_symmetric()
        .ok_or_else(|| Error::Config("K-user scheme needs a symmetric network".into()))?;
    let alloc = alloc_k_user(&s)?;
    let k = s.k;
    let mut blocks = Vec::with_capacity(k);
    for i in 0..k {
        let mut tx_blocks = Vec::with_capacity(k);
        let cross: Vec<&ComplexMatrix> = (0..k).filter(|&j| j != i).map(|j| inst.h(j, i)).collect();
        tx_blocks.push(block_from_nullspace(inst, i, BlockKind::ZfCross, &cross, s.d_direct, tol)?);
        for c in (0..k).filter(|&c| c != i) {
            let others: Vec<&ComplexMatrix> = (0..k).filter(|&j| j != c).map(|j| inst.h(j, i)).collect();
            tx_blocks.push(block_from_nullspace(inst, i, BlockKind::OnlyAt(c), &others, s.d_cross, tol)?);
        }
        blocks.push(tx_blocks);
    }
    let bf = BeamformerSet {
        allocation: alloc,
        blocks,
    };
    check_zero_forcing(inst, &bf, tol)?;
    check_full_column_rank(&bf, tol)?;
    require_rank_conditions(inst, &bf, tol)?;
    Ok((bf, alloc))
}

// ---- three-user --------------------------------------------------------

/// The pair-alignment system for transmitter pair `(i, i+1)`:
/// `[H_{i+2,i} -H_{i+2,i+1}; H_{i,i} 0; 0 H_{i+1,i+1}] [v; w] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSystem {
    pub first_tx: usize,
    pub system: ComplexMatrix,
    pub nullspace: ComplexMatrix,
    pub measured_rank: usize,
}

impl AlignmentSystem {
    /// Largest `|T v|` over the nullspace columns.
    pub fn residual(&self) -> f64 {
        self.nullspace
            .column_iter()
            .map(|c| (&self.system * c).norm())
            .fold(0.0, f64::max)
    }
}

pub fn alignment_system(inst: &ChannelInstance, i: usize, tol: &Tolerance) -> Result<AlignmentSystem> {
    if inst.k() != 3 {
        return Err(Error::Config("pair alignment is defined for three users".into()));
    }
    let (a, b, c) = (i % 3, (i + 1) % 3, (i + 2) % 3);
    let m = inst.config().tx_antennas[a];
    let n = inst.config().rx_antennas[a];
    let mut t = ComplexMatrix::zeros(3 * n, 2 * m);
    t.view_mut((0, 0), (n, m)).copy_from(inst.h(c, a));
    t.view_mut((0, m), (n, m)).copy_from(&(-inst.h(c, b)));
    t.view_mut((n, 0), (n, m)).copy_from(inst.h(a, a));
    t.view_mut((2 * n, m), (n, m)).copy_from(inst.h(b, b));
    let nullspace = nullspace_basis(&t, tol);
    let measured_rank = rank_tol(&t, tol);
    Ok(AlignmentSystem {
        first_tx: a,
        system: t,
        nullspace,
        measured_rank,
    })
}

/// Solutions `(v_0, v_1, v_2)` of the cyclic alignment chain
/// `H_{i+1,i} v_i ~ H_{i+1,i+2} v_{i+2}`, as a generalized eigenproblem in
/// the scale of the last link.
fn aligned_candidates(inst: &ChannelInstance, seed: u64) -> Result<Vec<[ComplexMatrix; 3]>> {
    let m = inst.config().tx_antennas[0];
    let mut a = ComplexMatrix::zeros(3 * m, 3 * m);
    let mut b = ComplexMatrix::zeros(3 * m, 3 * m);
    for i in 0..3 {
        let (p, q) = ((i + 1) % 3, (i + 2) % 3);
        a.view_mut((i * m, i * m), (m, m)).copy_from(inst.h(p, i));
        let target = if i == 2 { &mut b } else { &mut a };
        target.view_mut((i * m, q * m), (m, m)).copy_from(&(-inst.h(p, q)));
    }
    // (A + lambda B) z = 0  <=>  (A + sB)^{-1} B z = z / (s - lambda)
    let mut rng = stream::substream(seed, &[tag::BEAM, 0xa119]);
    let shift = stream::complex_gaussian(&mut rng);
    let pencil = &a + &b * shift;
    let c = pencil
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("alignment pencil is singular at the chosen shift".into()))?;
    let ws = eigenvalues(&c)?;
    let wmax = ws.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let mut out = Vec::new();
    for w in ws {
        if w.norm() <= 1e-9 * wmax {
            continue; // infinite eigenvalue of the pencil
        }
        let z = eigenvector(&c, w);
        let vs: [ComplexMatrix; 3] = std::array::from_fn(|i| {
            let mut v = ComplexMatrix::from_column_slice(m, 1, z.rows(i * m, m).as_slice());
            normalize_columns(&mut v);
            v
        });
        // every cross image used by the chain must be alive
        let alive = (0..3).all(|i| {
            let p = (i + 1) % 3;
            let q = (i + 2) % 3;
            vs[i].norm() > 0.5
                && (inst.h(p, i) * &vs[i]).norm() > VANISHING_IMAGE
                && (inst.h(i, q) * &vs[q]).norm() > VANISHING_IMAGE
        });
        if alive {
            out.push(vs);
        }
    }
    Ok(out)
}

fn aligned_blocks(
    inst: &ChannelInstance,
    first: &[ComplexMatrix; 3],
    count: usize,
    tol: &Tolerance,
) -> Result<[ComplexMatrix; 3]> {
    let m = inst.config().tx_antennas[0];
    let mut chosen: [ComplexMatrix; 3] = std::array::from_fn(|_| ComplexMatrix::zeros(m, 0));
    if count == 0 {
        return Ok(chosen);
    }
    let candidates = aligned_candidates(inst, inst.seed())?;
    let found = candidates.len();
    for cand in candidates {
        if chosen[0].ncols() == count {
            break;
        }
        let trial: [ComplexMatrix; 3] =
            std::array::from_fn(|i| hstack(m, &[&chosen[i], &cand[i]]).expect("same rows"));
        let ok = (0..3).all(|i| {
            let with_first = hstack(m, &[&first[i], &trial[i]]).expect("same rows");
            let direct = inst.h(i, i) * &with_first;
            rank_tol(&with_first, tol) == with_first.ncols() && rank_tol(&direct, tol) == with_first.ncols()
        });
        if ok {
            chosen = trial;
        }
    }
    if chosen[0].ncols() < count {
        return Err(Error::InfeasibleAllocation(format!(
            "alignment needs {count} directions per transmitter, found {} of {found} candidates usable",
            chosen[0].ncols()
        )));
    }
    Ok(chosen)
}

/// Worst alignment residual of `span(H_{i+1,i} V_i) in span(H_{i+1,i+2} [Z_{i+2} V_{i+2}])`
/// per transmitter `i`, where `Z` is the next-zero-forced block.
pub fn alignment_residuals(inst: &ChannelInstance, bf: &BeamformerSet, tol: &Tolerance) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let (p, q) = ((i + 1) % 3, (i + 2) % 3);
        let v = bf.columns(i, BlockKind::Aligned);
        if v.ncols() == 0 {
            continue;
        }
        let rows = inst.config().rx_antennas[p];
        let target = hstack(
            rows,
            &[&(inst.h(p, q) * bf.columns(q, BlockKind::ZfNext)), &(inst.h(p, q) * bf.columns(q, BlockKind::Aligned))],
        )?;
        *slot = span_residual(&(inst.h(p, i) * v), &target, tol)?;
    }
    Ok(out)
}

/// Three-user blocks for a symmetric instance.
pub fn build_three_user(inst: &ChannelInstance, alloc: &SymbolAllocation, tol: &Tolerance) -> Result<BeamformerSet> {
    let SymbolAllocation::ThreeUser(c) = alloc else {
        return Err(Error::Config("three-user construction needs a three-user allocation".into()));
    };
    if inst.k() != 3 || inst.config().as_symmetric().is_none() {
        return Err(Error::Config("three-user construction needs a symmetric K=3 channel".into()));
    }
    if c.counts[4] % 2 != 0 {
        return Err(Error::InfeasibleAllocation(format!(
            "pair count {} must be even",
            c.counts[4]
        )));
    }
    let h = |rx: usize, tx: usize| inst.h(rx % 3, tx % 3);
    let [n_next, n_prev, n_both, n_align, _, n_own_next, n_own_prev] = c.counts;
    let half = c.pair_half();

    let mut blocks: Vec<Vec<Block>> = Vec::with_capacity(3);
    for i in 0..3 {
        let next = h(i + 1, i);
        let prev = h(i + 2, i);
        blocks.push(vec![
            block_from_nullspace(inst, i, BlockKind::ZfNext, &[next], n_next, tol)?,
            block_from_nullspace(inst, i, BlockKind::ZfPrev, &[prev], n_prev, tol)?,
            block_from_nullspace(inst, i, BlockKind::ZfCross, &[next, prev], n_both, tol)?,
        ]);
    }

    let first: [ComplexMatrix; 3] = std::array::from_fn(|i| blocks[i][0].columns.clone());
    let aligned = aligned_blocks(inst, &first, n_align, tol)?;
    for (i, v) in aligned.into_iter().enumerate() {
        blocks[i].push(Block {
            kind: BlockKind::Aligned,
            columns: v,
        });
    }

    // pairs: system i yields the first half at tx i and the second at tx i+1
    let m = inst.config().tx_antennas[0];
    let mut pair_next: Vec<ComplexMatrix> = vec![ComplexMatrix::zeros(m, 0); 3];
    let mut pair_prev: Vec<ComplexMatrix> = vec![ComplexMatrix::zeros(m, 0); 3];
    if half > 0 {
        for i in 0..3 {
            let sys = alignment_system(inst, i, tol)?;
            let joint = combine(
                &sys.nullspace,
                half,
                inst.seed(),
                &[tag::BEAM, i as u64, kind_tag(BlockKind::PairNext)],
                &format!("pair system {}", i + 1),
            )?;
            let mut top = joint.rows(0, m).into_owned();
            let mut bottom = joint.rows(m, m).into_owned();
            normalize_columns(&mut top);
            normalize_columns(&mut bottom);
            pair_next[i] = top;
            pair_prev[(i + 1) % 3] = bottom;
        }
    }
    for i in 0..3 {
        blocks[i].push(Block {
            kind: BlockKind::PairNext,
            columns: std::mem::replace(&mut pair_next[i], ComplexMatrix::zeros(m, 0)),
        });
        blocks[i].push(Block {
            kind: BlockKind::PairPrev,
            columns: std::mem::replace(&mut pair_prev[i], ComplexMatrix::zeros(m, 0)),
        });
        let (next, prev, own) = (h(i + 1, i), h(i + 2, i), h(i, i));
        blocks[i].push(block_from_nullspace(inst, i, BlockKind::ZfOwnNext, &[own, next], n_own_next, tol)?);
        blocks[i].push(block_from_nullspace(inst, i, BlockKind::ZfOwnPrev, &[own, prev], n_own_prev, tol)?);
    }

    let bf = BeamformerSet {
        allocation: *alloc,
        blocks,
    };
    check_zero_forcing(inst, &bf, tol)?;
    for (i, r) in alignment_residuals(inst, &bf, tol)?.into_iter().enumerate() {
        if r > tol.residual_tol {
            return Err(Error::Alignment {
                transmitter: i + 1,
                residual: r,
            });
        }
    }
    check_full_column_rank(&bf, tol)?;
    require_rank_conditions(inst, &bf, tol)?;
    Ok(bf)
}

/// Build whichever scheme the allocation describes.
pub fn build(inst: &ChannelInstance, alloc: &SymbolAllocation, tol: &Tolerance) -> Result<BeamformerSet> {
    match alloc {
        SymbolAllocation::TwoUser(_) => build_two_user(inst, alloc, tol),
        SymbolAllocation::ThreeUser(_) => build_three_user(inst, alloc, tol),
        SymbolAllocation::KUser(_) => {
            let (bf, a) = build_k_user_corollary(inst, tol)?;
            if a != *alloc {
                return Err(Error::Config("K-user allocation does not match the channel".into()));
            }
            Ok(bf)
        }
    }
}

// ---- receive-side rank conditions -------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankCheck {
    pub receiver: usize,
    pub name: String,
    pub expected: usize,
    pub measured: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct RankConditionReport {
    pub checks: Vec<RankCheck>,
}

impl RankConditionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, receiver: usize, name: &str) -> Option<&RankCheck> {
        self.checks.iter().find(|c| c.receiver == receiver && c.name == name)
    }
}

fn images(inst: &ChannelInstance, bf: &BeamformerSet, rx: usize, tx: usize, kinds: &[BlockKind]) -> ComplexMatrix {
    let h = inst.h(rx, tx);
    let imgs: Vec<ComplexMatrix> = kinds.iter().map(|k| h * bf.columns(tx, *k)).collect();
    let refs: Vec<&ComplexMatrix> = imgs.iter().collect();
    hstack(h.nrows(), &refs).expect("same rows")
}

/// Receive-side rank identities.
///
/// Three-user: for every receiver `i`, the ranks of the own-signal matrix,
/// the images from transmitters `i+1` and `i+2`, their union, and
/// everything together. Other schemes: the matrix of every visible column
/// must have full column rank.
pub fn rank_conditions(inst: &ChannelInstance, bf: &BeamformerSet, tol: &Tolerance) -> Result<RankConditionReport> {
    let k = bf.k();
    let mut checks = Vec::new();
    let mut push = |receiver: usize, name: &str, m: &ComplexMatrix, expected: usize| {
        let measured = rank_tol(m, tol);
        checks.push(RankCheck {
            receiver,
            name: name.to_string(),
            expected,
            measured,
            pass: measured == expected,
        });
    };
    match bf.allocation {
        SymbolAllocation::ThreeUser(c) => {
            use BlockKind::*;
            let d = c.counts;
            let (d1, d2, d3, d4, d5, d6, d7) = (d[0], d[1], d[2], d[3], d[4], d[5], d[6]);
            for i in 0..3 {
                let (p, q) = ((i + 1) % 3, (i + 2) % 3);
                let rows = inst.config().rx_antennas[i];
                let a1 = images(inst, bf, i, i, &[ZfNext, ZfPrev, ZfCross, Aligned]);
                let a2 = images(inst, bf, i, p, &[ZfNext, Aligned, PairNext, PairPrev, ZfOwnNext]);
                let a3 = images(inst, bf, i, q, &[ZfPrev, Aligned, PairNext, PairPrev, ZfOwnPrev]);
                let a23 = hstack(rows, &[&a2, &a3])?;
                let all = hstack(rows, &[&a1, &a2, &a3])?;
                push(i, "own", &a1, d1 + d2 + d3 + d4);
                push(i, "from-next", &a2, d1 + d4 + d5 + d6);
                push(i, "from-prev", &a3, d2 + d4 + d5 + d7);
                push(i, "interference", &a23, d1 + d2 + d4 + 3 * d5 / 2 + d6 + d7);
                push(i, "total", &all, 2 * d1 + 2 * d2 + d3 + 2 * d4 + 3 * d5 / 2 + d6 + d7);
            }
        }
        _ => {
            for rx in 0..k {
                let rows = inst.config().rx_antennas[rx];
                let mut imgs = Vec::new();
                for tx in 0..k {
                    for b in &bf.blocks[tx] {
                        if b.kind.visible_at(tx, rx, k) {
                            imgs.push(inst.h(rx, tx) * &b.columns);
                        }
                    }
                }
                let refs: Vec<&ComplexMatrix> = imgs.iter().collect();
                let g = hstack(rows, &refs)?;
                push(rx, "receive", &g, g.ncols());
            }
        }
    }
    Ok(RankConditionReport { checks })
}
