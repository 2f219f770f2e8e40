//! Typed beamformer blocks and the per-transmitter set.

use serde::{Deserialize, Serialize};

use crate::channel::{pairs_to_vec, vec_to_pairs};
use crate::error::{Error, Result};
use crate::numkernel::{hstack, ComplexMatrix};

use super::allocation::SymbolAllocation;

/// Role of a beamformer block. Visibility (which receivers see the block)
/// and second-slot content are functions of the kind and the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    /// Zero-forced at every cross receiver; seen by the own receiver only.
    ZfCross,
    /// Random directions; seen everywhere (two-user only).
    Random,
    /// Zero-forced at the own receiver; its symbols are relayed by the
    /// other transmitter (two-user only).
    ZfOwn,
    /// Three-user: zero-forced at receiver `i+1`.
    ZfNext,
    /// Three-user: zero-forced at receiver `i+2`.
    ZfPrev,
    /// Three-user: aligned interference, seen everywhere.
    Aligned,
    /// Three-user: first half of an aligned pair; zero at own receiver,
    /// delivered to transmitter `i+1` for relaying.
    PairNext,
    /// Three-user: second half of an aligned pair; delivered to
    /// transmitter `i+2`.
    PairPrev,
    /// Three-user: zero-forced at own and next receiver; seen at `i+2`.
    ZfOwnNext,
    /// Three-user: zero-forced at own and previous receiver; seen at `i+1`.
    ZfOwnPrev,
    /// K-user: seen only at the given receiver (never the own one).
    OnlyAt(usize),
}

impl BlockKind {
    /// Whether receiver `rx` sees this block from transmitter `tx` in a
    /// `k`-user network.
    pub fn visible_at(&self, tx: usize, rx: usize, k: usize) -> bool {
        let offset = (rx + k - tx) % k;
        match self {
            BlockKind::ZfCross => offset == 0,
            BlockKind::Random | BlockKind::Aligned => true,
            BlockKind::ZfOwn => offset != 0,
            BlockKind::ZfNext => offset != 1,
            BlockKind::ZfPrev => offset != 2,
            BlockKind::PairNext | BlockKind::PairPrev => offset != 0,
            BlockKind::ZfOwnNext => offset == 2,
            BlockKind::ZfOwnPrev => offset == 1,
            BlockKind::OnlyAt(c) => rx == *c,
        }
    }

    /// For blocks that relay in the second slot: the `(transmitter, kind)`
    /// whose first-slot symbols this block carries. Column `c` carries the
    /// symbol of column `c` of the source block.
    pub fn relay_source(&self, tx: usize, k: usize) -> Option<(usize, BlockKind)> {
        match self {
            BlockKind::ZfOwn => Some((1 - tx, BlockKind::ZfOwn)),
            BlockKind::PairNext => Some(((tx + 1) % k, BlockKind::PairPrev)),
            BlockKind::PairPrev => Some(((tx + 2) % k, BlockKind::PairNext)),
            BlockKind::ZfOwnNext => Some(((tx + 2) % k, BlockKind::ZfOwnPrev)),
            BlockKind::ZfOwnPrev => Some(((tx + 1) % k, BlockKind::ZfOwnNext)),
            BlockKind::OnlyAt(c) => Some((*c, BlockKind::OnlyAt(tx))),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            BlockKind::OnlyAt(c) => format!("only-at-{}", c + 1),
            other => serde_json::to_value(other)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    /// `M_i x count`, unit-norm columns.
    pub columns: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub allocation: SymbolAllocation,
    /// `blocks[i]`: the blocks of transmitter `i`, in transmission order.
    pub blocks: Vec<Vec<Block>>,
}

impl BeamformerSet {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, tx: usize, kind: BlockKind) -> Option<&Block> {
        self.blocks[tx].iter().find(|b| b.kind == kind)
    }

    pub fn block_mut(&mut self, tx: usize, kind: BlockKind) -> Option<&mut Block> {
        self.blocks[tx].iter_mut().find(|b| b.kind == kind)
    }

    /// Columns of the given kind, or an empty `rows x 0` matrix.
    pub fn columns(&self, tx: usize, kind: BlockKind) -> ComplexMatrix {
        match self.block(tx, kind) {
            Some(b) => b.columns.clone(),
            None => ComplexMatrix::zeros(self.tx_rows(tx), 0),
        }
    }

    fn tx_rows(&self, tx: usize) -> usize {
        self.blocks[tx].first().map_or(0, |b| b.columns.nrows())
    }

    /// All blocks of a transmitter side by side.
    pub fn stacked(&self, tx: usize) -> ComplexMatrix {
        let rows = self.tx_rows(tx);
        let refs: Vec<&ComplexMatrix> = self.blocks[tx].iter().map(|b| &b.columns).collect();
        hstack(rows, &refs).expect("blocks share the antenna count")
    }

    pub fn symbols_at(&self, tx: usize) -> usize {
        self.blocks[tx].iter().map(|b| b.columns.ncols()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BeamformerFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: BeamformerFile = serde_json::from_str(s)?;
        f.into_set()
    }
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    kind: BlockKind,
    rows: usize,
    /// One entry per column.
    columns: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct BeamformerFile {
    allocation: SymbolAllocation,
    transmitters: Vec<Vec<BlockJson>>,
}

impl From<&BeamformerSet> for BeamformerFile {
    fn from(s: &BeamformerSet) -> Self {
        BeamformerFile {
            allocation: s.allocation,
            transmitters: s
                .blocks
                .iter()
                .map(|bs| {
                    bs.iter()
                        .map(|b| BlockJson {
                            kind: b.kind,
                            rows: b.columns.nrows(),
                            columns: b
                                .columns
                                .column_iter()
                                .map(|c| vec_to_pairs(&c.into_owned()))
                                .collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

impl BeamformerFile {
    fn into_set(self) -> Result<BeamformerSet> {
        let mut blocks = Vec::with_capacity(self.transmitters.len());
        for bs in self.transmitters {
            let mut out = Vec::with_capacity(bs.len());
            for b in bs {
                let mut m = ComplexMatrix::zeros(b.rows, b.columns.len());
                for (c, col) in b.columns.iter().enumerate() {
                    if col.len() != b.rows {
                        return Err(Error::Parse(format!(
                            "block {} column {c} has {} entries, expected {}",
                            b.kind.name(),
                            col.len(),
                            b.rows
                        )));
                    }
                    m.set_column(c, &pairs_to_vec(col));
                }
                out.push(Block { kind: b.kind, columns: m });
            }
            blocks.push(out);
        }
        Ok(BeamformerSet {
            allocation: self.allocation,
            blocks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_user_visibility_table() {
        use BlockKind::*;
        // (kind, offsets 0, 1, 2)
        let table = [
            (ZfNext, [true, false, true]),
            (ZfPrev, [true, true, false]),
            (ZfCross, [true, false, false]),
            (Aligned, [true, true, true]),
            (PairNext, [false, true, true]),
            (PairPrev, [false, true, true]),
            (ZfOwnNext, [false, false, true]),
            (ZfOwnPrev, [false, true, false]),
        ];
        for (kind, vis) in table {
            for tx in 0..3 {
                for (o, v) in vis.iter().enumerate() {
                    assert_eq!(kind.visible_at(tx, (tx + o) % 3, 3), *v, "{kind:?} tx{tx} o{o}");
                }
            }
        }
    }

    #[test]
    fn relays_are_seen_by_their_intended_receiver() {
        // a relayed symbol's owner must see the relaying block
        use BlockKind::*;
        for kind in [PairNext, PairPrev, ZfOwnNext, ZfOwnPrev] {
            for tx in 0..3 {
                let (owner, src) = kind.relay_source(tx, 3).unwrap();
                assert!(kind.visible_at(tx, owner, 3), "{kind:?}");
                // and the relaying transmitter saw the source in slot one
                assert!(src.visible_at(owner, tx, 3), "{kind:?}");
                assert!(!src.visible_at(owner, owner, 3));
            }
        }
        for tx in 0..4 {
            for c in (0..4).filter(|&c| c != tx) {
                let (owner, src) = OnlyAt(c).relay_source(tx, 4).unwrap();
                assert_eq!(owner, c);
                assert!(src.visible_at(owner, tx, 4));
            }
        }
    }

    #[test]
    fn names() {
        assert_eq!(BlockKind::PairNext.name(), "pair-next");
        assert_eq!(BlockKind::OnlyAt(2).name(), "only-at-3");
    }
}
