//! Two-slot feedback protocol: noiseless transmission, linear decoding at
//! receivers and at transmitters (from their fed-back outputs), relaying in
//! the second slot, and DoF accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::beamformer::{rank_conditions, BeamformerSet, BlockKind, RankConditionReport, SymbolAllocation};
use crate::channel::ChannelInstance;
use crate::dof_formulas::{corollary1_dof, thm1_feedback, thm2_lower, thm3_upper, TwoUserParams};
use crate::error::{Error, Node, Result};
use crate::numkernel::{
    hstack, least_squares, log2_det_identity_plus, rank_tol, ComplexMatrix, ComplexVector, Rational, Tolerance,
};
use crate::stream::{self, tag};

/// Relative error allowed between a decoded symbol and the value that was
/// actually sent.
pub const VALUE_TOL: f64 = 1e-6;

const SLOTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeEvent {
    pub node: Node,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub id: usize,
    /// User whose receiver wants the symbol.
    pub owner: usize,
    /// Block that first carried it.
    pub kind: BlockKind,
    pub introduced: usize,
    pub value: [f64; 2],
    pub decoded_by: Vec<DecodeEvent>,
}

impl SymbolRecord {
    pub fn delivered(&self) -> bool {
        self.decoded_by.iter().any(|e| e.node == Node::Rx(self.owner))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub node: Node,
    pub slot: usize,
    pub targets: Vec<usize>,
    /// `|y - G x| / max(|y|, 1)`.
    pub residual: f64,
    pub max_value_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub slot: usize,
    /// `carried[tx][block][column]`: symbol id on that column.
    pub carried: Vec<Vec<Vec<usize>>>,
    pub transmitted: Vec<Vec<[f64; 2]>>,
    pub received: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionTrace {
    pub k: usize,
    pub slots: Vec<SlotTrace>,
    pub symbols: Vec<SymbolRecord>,
    pub decodes: Vec<DecodeRecord>,
    /// Symbols each transmitter learned from its fed-back output.
    pub feedback: Vec<Vec<usize>>,
}

impl TransmissionTrace {
    pub fn delivered(&self) -> usize {
        self.symbols.iter().filter(|s| s.delivered()).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.decodes.iter().map(|d| d.residual).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn pairs(v: &ComplexVector) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

/// Per-slot transmit state while the protocol runs.
struct Slot {
    carried: Vec<Vec<Vec<usize>>>,
    values: Vec<Vec<ComplexVector>>,
    x: Vec<ComplexVector>,
    y: Vec<ComplexVector>,
}

struct Run<'a> {
    inst: &'a ChannelInstance,
    bf: &'a BeamformerSet,
    tol: &'a Tolerance,
    symbols: Vec<SymbolRecord>,
    decodes: Vec<DecodeRecord>,
}

impl Run<'_> {
    fn fresh(&mut self, owner: usize, kind: BlockKind, slot: usize, value: num_complex::Complex64) -> usize {
        let id = self.symbols.len();
        self.symbols.push(SymbolRecord {
            id,
            owner,
            kind,
            introduced: slot,
            value: [value.re, value.im],
            decoded_by: Vec::new(),
        });
        id
    }

    fn transmit(&self, carried: Vec<Vec<Vec<usize>>>, values: Vec<Vec<ComplexVector>>) -> Slot {
        let k = self.bf.k();
        let x: Vec<ComplexVector> = (0..k)
            .map(|i| {
                let mut xi = ComplexVector::zeros(self.inst.config().tx_antennas[i]);
                for (b, v) in self.bf.blocks[i].iter().zip(&values[i]) {
                    xi += &b.columns * v;
                }
                xi
            })
            .collect();
        let y = (0..k)
            .map(|j| {
                let mut yj = ComplexVector::zeros(self.inst.config().rx_antennas[j]);
                for (i, xi) in x.iter().enumerate() {
                    yj += self.inst.h(j, i) * xi;
                }
                yj
            })
            .collect();
        Slot { carried, values, x, y }
    }

    /// Linear decode of `targets` from the output of receiver `port`.
    /// A transmitter decoding from feedback first removes its own signal.
    fn decode(&mut self, node: Node, slot_no: usize, slot: &Slot, targets: &[usize]) -> Result<BTreeMap<usize, num_complex::Complex64>> {
        let k = self.bf.k();
        let (port, known) = match node {
            Node::Rx(j) => (j, None),
            Node::Tx(j) => (j, Some(j)),
        };
        let rows = self.inst.config().rx_antennas[port];
        let mut y = slot.y[port].clone();
        if let Some(own) = known {
            y -= self.inst.h(port, own) * &slot.x[own];
        }
        // effective matrix: one column per symbol id seen at this port
        let mut order: Vec<usize> = Vec::new();
        let mut cols: BTreeMap<usize, ComplexVector> = BTreeMap::new();
        for tx in (0..k).filter(|&t| Some(t) != known) {
            for (bi, b) in self.bf.blocks[tx].iter().enumerate() {
                if !b.kind.visible_at(tx, port, k) || b.columns.ncols() == 0 {
                    continue;
                }
                let img = self.inst.h(port, tx) * &b.columns;
                for (c, &id) in slot.carried[tx][bi].iter().enumerate() {
                    let g = img.column(c).into_owned();
                    cols.entry(id)
                        .and_modify(|acc| *acc += &g)
                        .or_insert_with(|| {
                            order.push(id);
                            g
                        });
                }
            }
        }
        for t in targets {
            if !cols.contains_key(t) {
                return Err(Error::Decode {
                    node,
                    slot: slot_no,
                    detail: format!("symbol {t} does not reach this node"),
                });
            }
        }
        let mut g = ComplexMatrix::zeros(rows, order.len());
        for (c, id) in order.iter().enumerate() {
            g.set_column(c, &cols[id]);
        }
        let full = rank_tol(&g, self.tol);
        for &t in targets {
            let pos = order.iter().position(|&id| id == t).expect("checked above");
            let without = g.clone().remove_column(pos);
            let r = rank_tol(&without, self.tol);
            if full - r != 1 {
                return Err(Error::Decode {
                    node,
                    slot: slot_no,
                    detail: format!(
                        "symbol {t} is not separable: effective matrix {}x{} has rank {full}, {r} without it",
                        g.nrows(),
                        g.ncols()
                    ),
                });
            }
        }
        let (x, abs_res) = least_squares(&g, &y, self.tol)?;
        let residual = abs_res / y.norm().max(1.0);
        if residual > self.tol.residual_tol {
            return Err(Error::Decode {
                node,
                slot: slot_no,
                detail: format!("residual {residual:.3e} exceeds {:.3e}", self.tol.residual_tol),
            });
        }
        let mut out = BTreeMap::new();
        let mut worst: f64 = 0.0;
        for &t in targets {
            let pos = order.iter().position(|&id| id == t).expect("checked above");
            let sent = sent_value(slot, t).expect("target is on air");
            let err = (x[pos] - sent).norm() / sent.norm().max(1.0);
            worst = worst.max(err);
            if err > VALUE_TOL {
                return Err(Error::Decode {
                    node,
                    slot: slot_no,
                    detail: format!("symbol {t} decoded with relative error {err:.3e}"),
                });
            }
            out.insert(t, x[pos]);
            self.symbols[t].decoded_by.push(DecodeEvent { node, slot: slot_no });
        }
        self.decodes.push(DecodeRecord {
            node,
            slot: slot_no,
            targets: targets.to_vec(),
            residual,
            max_value_error: worst,
        });
        Ok(out)
    }

    /// Symbols owned by `rx` on blocks that receiver `rx` sees.
    fn receiver_targets(&self, slot: &Slot, rx: usize) -> Vec<usize> {
        let k = self.bf.k();
        let mut out = Vec::new();
        for tx in 0..k {
            for (bi, b) in self.bf.blocks[tx].iter().enumerate() {
                if b.kind.visible_at(tx, rx, k) {
                    out.extend(slot.carried[tx][bi].iter().filter(|&&id| self.symbols[id].owner == rx));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn sent_value(slot: &Slot, id: usize) -> Option<num_complex::Complex64> {
    for (carried, values) in slot.carried.iter().zip(&slot.values) {
        for (ids, vals) in carried.iter().zip(values) {
            if let Some(c) = ids.iter().position(|&s| s == id) {
                return Some(vals[c]);
            }
        }
    }
    None
}

/// Run the two-slot protocol. Every block carries fresh symbols of its
/// transmitter in the first slot; in the second, relaying blocks carry the
/// symbols their transmitter decoded from feedback and the rest carry fresh
/// symbols.
pub fn run_two_slot(
    inst: &ChannelInstance,
    bf: &BeamformerSet,
    alloc: &SymbolAllocation,
    tol: &Tolerance,
) -> Result<TransmissionTrace> {
    if bf.allocation != *alloc {
        return Err(Error::Config("beamformer set was built for a different allocation".into()));
    }
    let k = bf.k();
    if k != inst.k() {
        return Err(Error::Dimension(format!("beamformers for {k} users, channel has {}", inst.k())));
    }
    for i in 0..k {
        for b in &bf.blocks[i] {
            if b.columns.nrows() != inst.config().tx_antennas[i] {
                return Err(Error::Dimension(format!(
                    "tx{} block {} has {} rows, transmitter has {} antennas",
                    i + 1,
                    b.kind.name(),
                    b.columns.nrows(),
                    inst.config().tx_antennas[i]
                )));
            }
            if let Some((src_tx, src_kind)) = b.kind.relay_source(i, k) {
                let n = bf.columns(src_tx, src_kind).ncols();
                if n != b.columns.ncols() {
                    return Err(Error::Config(format!(
                        "tx{} {} relays {} columns of tx{} {}, which has {n}",
                        i + 1,
                        b.kind.name(),
                        b.columns.ncols(),
                        src_tx + 1,
                        src_kind.name()
                    )));
                }
            }
        }
    }

    let mut run = Run {
        inst,
        bf,
        tol,
        symbols: Vec::new(),
        decodes: Vec::new(),
    };
    let mut feedback: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut slots: Vec<Slot> = Vec::with_capacity(SLOTS);

    // slot 1: fresh symbols everywhere
    let mut carried = vec![Vec::new(); k];
    let mut values = vec![Vec::new(); k];
    for i in 0..k {
        let mut rng = stream::substream(inst.seed(), &[tag::SYMBOL, 1, i as u64]);
        for b in &bf.blocks[i] {
            let mut ids = Vec::with_capacity(b.columns.ncols());
            let mut vals = ComplexVector::zeros(b.columns.ncols());
            for c in 0..b.columns.ncols() {
                let v = stream::complex_gaussian(&mut rng);
                ids.push(run.fresh(i, b.kind, 1, v));
                vals[c] = v;
            }
            carried[i].push(ids);
            values[i].push(vals);
        }
    }
    let first = run.transmit(carried, values);
    for rx in 0..k {
        let targets = run.receiver_targets(&first, rx);
        if !targets.is_empty() {
            run.decode(Node::Rx(rx), 1, &first, &targets)?;
        }
    }
    // transmitters learn the symbols they will relay
    let mut learned: Vec<BTreeMap<usize, num_complex::Complex64>> = vec![BTreeMap::new(); k];
    for j in 0..k {
        let mut targets = Vec::new();
        for b in &bf.blocks[j] {
            if let Some((src_tx, src_kind)) = b.kind.relay_source(j, k) {
                let bi = bf.blocks[src_tx].iter().position(|s| s.kind == src_kind);
                if let Some(bi) = bi {
                    targets.extend(first.carried[src_tx][bi].iter().copied());
                }
            }
        }
        if !targets.is_empty() {
            learned[j] = run.decode(Node::Tx(j), 1, &first, &targets)?;
            feedback[j] = targets;
        }
    }

    // slot 2: relays plus fresh symbols
    let mut carried = vec![Vec::new(); k];
    let mut values = vec![Vec::new(); k];
    for i in 0..k {
        let mut rng = stream::substream(inst.seed(), &[tag::SYMBOL, 2, i as u64]);
        for b in &bf.blocks[i] {
            let n = b.columns.ncols();
            let mut ids = Vec::with_capacity(n);
            let mut vals = ComplexVector::zeros(n);
            match b.kind.relay_source(i, k) {
                Some((src_tx, src_kind)) => {
                    let bi = bf.blocks[src_tx].iter().position(|s| s.kind == src_kind);
                    let src: &[usize] = bi.map_or(&[], |bi| &first.carried[src_tx][bi]);
                    for (c, &id) in src.iter().enumerate() {
                        ids.push(id);
                        vals[c] = learned[i][&id];
                    }
                }
                None => {
                    for c in 0..n {
                        let v = stream::complex_gaussian(&mut rng);
                        ids.push(run.fresh(i, b.kind, 2, v));
                        vals[c] = v;
                    }
                }
            }
            carried[i].push(ids);
            values[i].push(vals);
        }
    }
    let second = run.transmit(carried, values);
    for rx in 0..k {
        let targets = run.receiver_targets(&second, rx);
        if !targets.is_empty() {
            run.decode(Node::Rx(rx), 2, &second, &targets)?;
        }
    }
    slots.push(first);
    slots.push(second);

    if let Some(s) = run.symbols.iter().find(|s| !s.delivered()) {
        return Err(Error::Decode {
            node: Node::Rx(s.owner),
            slot: SLOTS,
            detail: format!("symbol {} ({} from tx{}) never delivered", s.id, s.kind.name(), s.owner + 1),
        });
    }

    let slots = slots
        .into_iter()
        .enumerate()
        .map(|(t, s)| SlotTrace {
            slot: t + 1,
            carried: s.carried,
            transmitted: s.x.iter().map(pairs).collect(),
            received: s.y.iter().map(pairs).collect(),
        })
        .collect();
    Ok(TransmissionTrace {
        k,
        slots,
        symbols: run.symbols,
        decodes: run.decodes,
        feedback,
    })
}

/// Receive-side rank identities for the scheme.
pub fn verify_rank_conditions(
    inst: &ChannelInstance,
    bf: &BeamformerSet,
    alloc: &SymbolAllocation,
    tol: &Tolerance,
) -> Result<RankConditionReport> {
    if bf.allocation != *alloc {
        return Err(Error::Config("beamformer set was built for a different allocation".into()));
    }
    rank_conditions(inst, bf, tol)
}

/// Symbols delivered to their intended receivers per slot.
pub fn dof_from_trace(trace: &TransmissionTrace) -> Rational {
    if trace.slots.is_empty() {
        return Rational::ZERO;
    }
    Rational::from(trace.delivered()) / Rational::from(trace.slots.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DofReport {
    pub decoded_symbols_total: usize,
    pub slots: usize,
    pub achieved_dof: Rational,
    /// Closed-form achievable value for the scheme, when defined.
    pub formula_lower: Option<Rational>,
    /// Closed-form upper bound, for symmetric networks.
    pub formula_upper: Option<Rational>,
    pub matches_lower: bool,
    pub within_upper: bool,
}

pub fn dof_report(inst: &ChannelInstance, alloc: &SymbolAllocation, trace: &TransmissionTrace) -> DofReport {
    let achieved = dof_from_trace(trace);
    let sym = inst.config().as_symmetric();
    let formula_lower = match alloc {
        SymbolAllocation::TwoUser(_) => TwoUserParams::from_network(inst.config()).ok().map(|p| thm1_feedback(&p)),
        SymbolAllocation::ThreeUser(_) => sym.as_ref().and_then(|s| thm2_lower(s).ok()),
        SymbolAllocation::KUser(_) => sym.as_ref().and_then(|s| corollary1_dof(s).ok()),
    };
    let formula_upper = sym.as_ref().map(thm3_upper);
    DofReport {
        decoded_symbols_total: trace.delivered(),
        slots: trace.slots.len(),
        achieved_dof: achieved,
        formula_lower,
        formula_upper,
        matches_lower: formula_lower == Some(achieved),
        within_upper: formula_upper.map_or(true, |u| achieved <= u),
    }
}

/// Sum over slots and receivers of `log2 det(I + S + N) - log2 det(I + N)`
/// at transmit power `power`, per slot. `S` collects the intended streams
/// and `N` the rest; each transmitter splits its power evenly over its
/// columns.
fn sum_rate(inst: &ChannelInstance, bf: &BeamformerSet, power: f64) -> Result<f64> {
    let k = bf.k();
    let mut total = 0.0;
    for slot in 1..=SLOTS {
        for rx in 0..k {
            let rows = inst.config().rx_antennas[rx];
            let mut wanted = Vec::new();
            let mut other = Vec::new();
            for tx in 0..k {
                let n = bf.symbols_at(tx);
                if n == 0 {
                    continue;
                }
                let scale = (power / n as f64).sqrt();
                for b in &bf.blocks[tx] {
                    if !b.kind.visible_at(tx, rx, k) || b.columns.ncols() == 0 {
                        continue;
                    }
                    let img = inst.h(rx, tx) * &b.columns * num_complex::Complex64::from(scale);
                    let owner = match (slot, b.kind.relay_source(tx, k)) {
                        (2, Some((src, _))) => src,
                        _ => tx,
                    };
                    let intended = owner == rx;
                    if intended {
                        wanted.push(img);
                    } else {
                        other.push(img);
                    }
                }
            }
            let gram = |ms: &[ComplexMatrix]| -> Result<ComplexMatrix> {
                let refs: Vec<&ComplexMatrix> = ms.iter().collect();
                let g = hstack(rows, &refs)?;
                Ok(&g * g.adjoint())
            };
            let noise = gram(&other)?;
            let all = gram(&[wanted, other].concat())?;
            total += log2_det_identity_plus(&all)? - log2_det_identity_plus(&noise)?;
        }
    }
    Ok(total / SLOTS as f64)
}

/// Finite-power slope of the scheme's per-slot sum rate against `log2 P`,
/// between the two largest powers.
pub fn estimate_dof_slope(
    inst: &ChannelInstance,
    bf: &BeamformerSet,
    alloc: &SymbolAllocation,
    powers: &[f64],
) -> Result<f64> {
    if bf.allocation != *alloc {
        return Err(Error::Config("beamformer set was built for a different allocation".into()));
    }
    if powers.len() < 2 || powers.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::Domain("need at least two positive finite powers".into()));
    }
    let mut ps = powers.to_vec();
    ps.sort_by(f64::total_cmp);
    let (lo, hi) = (ps[0], ps[ps.len() - 1]);
    if hi / lo < 1e4 {
        return Err(Error::Domain(format!("power range {hi:e}/{lo:e} is narrower than 1e4")));
    }
    let p1 = ps[ps.len() - 2];
    let r1 = sum_rate(inst, bf, p1)?;
    let r2 = sum_rate(inst, bf, hi)?;
    let slope = (r2 - r1) / (hi.log2() - p1.log2());
    if slope.is_finite() {
        Ok(slope)
    } else {
        Err(Error::Numerical("non-finite rate slope".into()))
    }
}
