//! Symbol allocations: how many symbols each beamformer block carries.

use serde::{Deserialize, Serialize};

use crate::channel::{NetworkConfig, SymmetricConfig};
use crate::dof_formulas::TwoUserParams;
use crate::error::{Error, Result};
use crate::numkernel::{rat, Rational};
use crate::polytope::{three_user_constraints, two_user_constraints};

/// Two-user counts, indexed by transmitter (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwoUserCounts {
    /// Zero-forced at the cross receiver, seen only by the own receiver.
    pub private: [usize; 2],
    /// Random directions, seen by both receivers.
    pub common: [usize; 2],
    /// Zero-forced at the own receiver and relayed by the other
    /// transmitter in the second slot. Equal at both transmitters.
    pub relayed: usize,
}

impl TwoUserCounts {
    pub fn new(private: [usize; 2], common: [usize; 2], relayed: usize) -> Self {
        TwoUserCounts {
            private,
            common,
            relayed,
        }
    }

    /// Order used by the two-user constraint system.
    pub fn as_vector(&self) -> [usize; 5] {
        [self.private[0], self.common[0], self.private[1], self.common[1], self.relayed]
    }
}

/// Which construction the three-user counts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreeUserCase {
    /// Alignment through the direct link: `M+D_d` when `2D_d <= M <= D_d+D_c`.
    AlignedDirect,
    /// Alignment with zero-forced relays: `2M-D_c` when `M >= max(2D_d, D_d+D_c)`.
    AlignedRelay,
    /// Alignment without relays: `3M/2` when `M <= 2D_d`.
    AlignedOnly,
    /// Zero-forcing with relays: `3M-3D_c` when `M >= D_c+D_d`.
    ZeroForcingRelay,
    /// Zero-forcing without relays: `3M-3D_c` when `M <= D_c+D_d`.
    ZeroForcingOnly,
    /// `M >= 2D_c+D_d`: only `2D_c+D_d` dimensions are used.
    ZeroForcingSaturated,
}

impl ThreeUserCase {
    pub fn uses_alignment(&self) -> bool {
        matches!(
            self,
            ThreeUserCase::AlignedDirect | ThreeUserCase::AlignedRelay | ThreeUserCase::AlignedOnly
        )
    }
}

/// Per-transmitter counts of the seven three-user block types, shared by
/// all three transmitters. Index `t` holds the count of type `t+1`:
/// zero-forced at next rx, at previous rx, at both, aligned, paired
/// alignment (split evenly into two halves), zero-forced at own+next,
/// zero-forced at own+previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThreeUserCounts {
    pub counts: [usize; 7],
    pub case: ThreeUserCase,
}

impl ThreeUserCounts {
    pub fn per_user_objective(&self) -> Rational {
        let c = self.counts.map(Rational::from);
        c[0] + c[1] + c[2] + c[3] + (c[4] + c[5] + c[6]) / Rational::from(2)
    }

    pub fn pair_half(&self) -> usize {
        self.counts[4] / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KUserCounts {
    pub k: usize,
    /// Symbols per transmitter on the direct link.
    pub direct: usize,
    /// Symbols per transmitter on each cross link.
    pub cross: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SymbolAllocation {
    TwoUser(TwoUserCounts),
    ThreeUser(ThreeUserCounts),
    KUser(KUserCounts),
}

impl SymbolAllocation {
    /// Total DoF this allocation achieves over the two-slot scheme.
    pub fn objective(&self) -> Rational {
        match self {
            SymbolAllocation::TwoUser(c) => {
                Rational::from(c.private[0] + c.common[0] + c.private[1] + c.common[1] + c.relayed)
            }
            SymbolAllocation::ThreeUser(c) => Rational::from(3) * c.per_user_objective(),
            SymbolAllocation::KUser(c) => {
                let k = c.k;
                Rational::from(k * c.direct) + Rational::from(c.cross * k * (k - 1)) / Rational::from(2)
            }
        }
    }

    pub fn k(&self) -> usize {
        match self {
            SymbolAllocation::TwoUser(_) => 2,
            SymbolAllocation::ThreeUser(_) => 3,
            SymbolAllocation::KUser(c) => c.k,
        }
    }

    /// Rows of the scheme's constraint system violated by this allocation,
    /// by label. Empty means feasible.
    pub fn violations(&self, config: &NetworkConfig) -> Result<Vec<String>> {
        let (poly, x): (_, Vec<Rational>) = match self {
            SymbolAllocation::TwoUser(c) => (
                two_user_constraints(&TwoUserParams::from_network(config)?),
                c.as_vector().iter().map(|&v| Rational::from(v)).collect(),
            ),
            SymbolAllocation::ThreeUser(c) => {
                let s = symmetric(config, 3)?;
                (three_user_constraints(&s), c.counts.iter().map(|&v| Rational::from(v)).collect())
            }
            SymbolAllocation::KUser(c) => {
                let s = symmetric(config, c.k)?;
                let mut bad = Vec::new();
                if c.direct > s.d_direct {
                    bad.push("direct-count".to_string());
                }
                if c.cross > s.d_cross {
                    bad.push("cross-count".to_string());
                }
                if c.direct + (c.k - 1) * c.cross > s.m {
                    bad.push("tx-antennas".to_string());
                }
                return Ok(bad);
            }
        };
        if let SymbolAllocation::ThreeUser(c) = self {
            if c.counts[4] % 2 != 0 {
                return Ok(vec!["pair-parity".into()]);
            }
        }
        Ok(poly.violations(&x).into_iter().map(|k| poly.rows()[k].label.clone()).collect())
    }
}

fn symmetric(config: &NetworkConfig, k: usize) -> Result<SymmetricConfig> {
    let s = config
        .as_symmetric()
        .ok_or_else(|| Error::Config("scheme needs a symmetric network".into()))?;
    if s.k != k {
        return Err(Error::Config(format!("scheme is for K={k}, network has K={}", s.k)));
    }
    Ok(s)
}

/// Best integer two-user allocation, by exhaustive search over the
/// per-variable bounds of the constraint system.
pub fn alloc_two_user(config: &NetworkConfig) -> Result<SymbolAllocation> {
    let p = TwoUserParams::from_network(config)?;
    let poly = two_user_constraints(&p);
    // per-variable upper bounds read off single rows
    let hi = [
        (p.m1 - p.d21).min(p.d11),
        p.d11.min(p.d21),
        (p.m2 - p.d12).min(p.d22),
        p.d22.min(p.d12),
        (p.m1 - p.d11).min(p.m2 - p.d22).min(p.d21).min(p.d12),
    ];
    let mut best: Option<([usize; 5], (usize, isize, usize, usize, usize))> = None;
    let mut x = [0usize; 5];
    let total: usize = hi.iter().map(|h| h + 1).product();
    for mut code in 0..total {
        for (k, h) in hi.iter().enumerate() {
            x[k] = code % (h + 1);
            code /= h + 1;
        }
        let xr: Vec<Rational> = x.iter().map(|&v| Rational::from(v)).collect();
        if !poly.contains(&xr) {
            continue;
        }
        // objective first; then fewer random-direction symbols, more relayed
        // symbols, more private symbols
        let key = (
            x.iter().sum::<usize>(),
            -((x[1] + x[3]) as isize),
            x[4],
            x[0],
            x[2],
        );
        if best.map_or(true, |(_, bk)| key > bk) {
            best = Some((x, key));
        }
    }
    let (x, _) = best.expect("origin is feasible");
    Ok(SymbolAllocation::TwoUser(TwoUserCounts::new([x[0], x[2]], [x[1], x[3]], x[4])))
}

/// One candidate prescription, possibly fractional.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Candidate {
    case: ThreeUserCase,
    counts: [Rational; 7],
}

impl Candidate {
    fn objective(&self) -> Rational {
        let c = &self.counts;
        Rational::from(3) * (c[0] + c[1] + c[2] + c[3] + (c[4] + c[5] + c[6]) / Rational::from(2))
    }

    fn integral(&self) -> Option<[usize; 7]> {
        let mut out = [0usize; 7];
        for (o, c) in out.iter_mut().zip(&self.counts) {
            let v = c.to_integer()?;
            *o = usize::try_from(v).ok()?;
        }
        (out[4] % 2 == 0).then_some(out)
    }
}

fn z() -> Rational {
    Rational::ZERO
}

fn three_user_candidates(s: &SymmetricConfig) -> Vec<Candidate> {
    let (m, dd, dc) = (s.m, s.d_direct, s.d_cross);
    let (mr, ddr, dcr) = (Rational::from(m), Rational::from(dd), Rational::from(dc));
    let half = rat(1, 2);
    let two = Rational::from(2);
    let three = Rational::from(3);
    let mut out = Vec::new();
    if m >= 2 * dc + dd {
        out.push(Candidate {
            case: ThreeUserCase::ZeroForcingSaturated,
            counts: [z(), z(), ddr, z(), z(), dcr, dcr],
        });
    } else if m >= 2 * dc {
        if m >= dc + dd {
            let d12 = (two * dcr + ddr - mr) * half;
            let d67 = mr - dcr - ddr;
            out.push(Candidate {
                case: ThreeUserCase::ZeroForcingRelay,
                counts: [d12, d12, mr - two * dcr, z(), z(), d67, d67],
            });
        }
        if m <= dc + dd {
            let d12 = dcr * half;
            out.push(Candidate {
                case: ThreeUserCase::ZeroForcingOnly,
                counts: [d12, d12, mr - two * dcr, z(), z(), z(), z()],
            });
        }
    } else {
        // dc <= m < 2 dc
        if m >= 2 * dd && m <= dd + dc {
            out.push(Candidate {
                case: ThreeUserCase::AlignedDirect,
                counts: [
                    mr - dcr,
                    z(),
                    z(),
                    ddr + dcr - mr,
                    (two * mr - Rational::from(4) * ddr) / three,
                    z(),
                    z(),
                ],
            });
        }
        if m <= 2 * dd {
            out.push(Candidate {
                case: ThreeUserCase::AlignedOnly,
                counts: [mr - dcr, z(), z(), dcr - mr * half, z(), z(), z()],
            });
        }
        if m >= 2 * dd && m >= dd + dc {
            let d67 = mr - dcr - ddr;
            out.push(Candidate {
                case: ThreeUserCase::AlignedRelay,
                counts: [
                    ddr * half,
                    ddr * half,
                    z(),
                    z(),
                    (Rational::from(4) * dcr - two * mr) / three,
                    d67,
                    d67,
                ],
            });
        }
    }
    out
}

/// Case-based allocation for the symmetric three-user scheme.
///
/// Among the applicable cases the largest objective wins; on ties the
/// alignment-through-direct-link cases are preferred over the relay case,
/// and the relay variants over the plain ones. If every best-objective
/// prescription is fractional (or has an odd pair count), the exact
/// prescription is returned inside [`Error::Integrality`].
pub fn alloc_three_user(config: &SymmetricConfig) -> Result<SymbolAllocation> {
    if config.k != 3 {
        return Err(Error::Config(format!("three-user allocation needs K=3, got K={}", config.k)));
    }
    let cands = three_user_candidates(config);
    let best = cands.iter().map(Candidate::objective).max().ok_or_else(|| {
        Error::InfeasibleAllocation(format!("no case applies at M={}, D_c={}", config.m, config.d_cross))
    })?;
    let top: Vec<&Candidate> = cands.iter().filter(|c| c.objective() == best).collect();
    for c in &top {
        if let Some(counts) = c.integral() {
            return Ok(SymbolAllocation::ThreeUser(ThreeUserCounts { counts, case: c.case }));
        }
    }
    Err(Error::Integrality {
        prescription: top[0].counts.to_vec(),
    })
}

/// Exact (possibly fractional) per-type prescription and its case, for
/// reporting grid points that need a symbol extension.
pub fn three_user_prescription(config: &SymmetricConfig) -> Option<(ThreeUserCase, Vec<Rational>, Rational)> {
    let cands = three_user_candidates(config);
    let best = cands.iter().map(Candidate::objective).max()?;
    let c = cands.into_iter().find(|c| c.objective() == best)?;
    Some((c.case, c.counts.to_vec(), best))
}

/// The K-user allocation: every transmitter sends `D_d` direct symbols and
/// `D_c` symbols per cross link.
pub fn alloc_k_user(config: &SymmetricConfig) -> Result<SymbolAllocation> {
    let need = config.d_direct + (config.k - 1) * config.d_cross;
    if config.m < need {
        return Err(Error::Config(format!(
            "K-user scheme needs M >= D_d + (K-1) D_c = {need}, got M={}",
            config.m
        )));
    }
    Ok(SymbolAllocation::KUser(KUserCounts {
        k: config.k,
        direct: config.d_direct,
        cross: config.d_cross,
    }))
}
