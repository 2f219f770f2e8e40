use std::fmt;

use crate::numkernel::Rational;

/// Node that attempted a decode: a receiver, or a transmitter working from
/// its fed-back received signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Node {
    Rx(usize),
    Tx(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based in user-facing output, matching the channel file keys.
        match self {
            Node::Rx(i) => write!(f, "rx{}", i + 1),
            Node::Tx(i) => write!(f, "tx{}", i + 1),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid tolerance: {0}")]
    Tolerance(String),

    #[error("degenerate channel draw (seed {seed}): H[{rx},{tx}] has rank {measured}, expected {expected}")]
    DegenerateDraw {
        seed: u64,
        rx: usize,
        tx: usize,
        measured: usize,
        expected: usize,
    },

    #[error("joint nullspace requested over an empty constraint set")]
    MissingConstraintSet,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    #[error("allocation needs a symbol extension: prescribed counts {}", fmt_prescription(.prescription))]
    Integrality { prescription: Vec<Rational> },

    #[error("alignment closure failed at transmitter {transmitter} (residual {residual:.3e})")]
    Alignment { transmitter: usize, residual: f64 },

    #[error("decode failed at {node} in slot {slot}: {detail}")]
    Decode { node: Node, slot: usize, detail: String },

    #[error("outside formula domain: {0}")]
    Domain(String),

    #[error("objective is unbounded")]
    Unbounded,

    #[error("inequality system is infeasible")]
    Infeasible,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_prescription(p: &[Rational]) -> String {
    let parts: Vec<String> = p.iter().map(|r| r.to_string()).collect();
    format!("({})", parts.join(", "))
}

pub type Result<T> = std::result::Result<T, Error>;
