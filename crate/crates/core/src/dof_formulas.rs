//! Closed-form DoF evaluators over exact rationals.

use serde::{Deserialize, Serialize};

use crate::channel::{NetworkConfig, SymmetricConfig};
use crate::error::{Error, Result};
use crate::numkernel::{rat, Rational};

/// Symmetric parameters `(K, M, D_d, D_c)`; same type as the channel's.
pub type SymmetricParams = SymmetricConfig;

/// General two-user parameters. `d_rx_tx` is the rank of the link from
/// transmitter `tx` to receiver `rx`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwoUserParams {
    pub m1: usize,
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
    pub d11: usize,
    pub d12: usize,
    pub d21: usize,
    pub d22: usize,
}

impl TwoUserParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(m1: usize, m2: usize, n1: usize, n2: usize, d11: usize, d12: usize, d21: usize, d22: usize) -> Result<Self> {
        let p = TwoUserParams {
            m1,
            m2,
            n1,
            n2,
            d11,
            d12,
            d21,
            d22,
        };
        p.network()?;
        Ok(p)
    }

    /// All antennas `m`, all ranks `d`.
    pub fn symmetric(m: usize, d: usize) -> Result<Self> {
        TwoUserParams::new(m, m, m, m, d, d, d, d)
    }

    pub fn network(&self) -> Result<NetworkConfig> {
        NetworkConfig::two_user(
            [self.m1, self.m2],
            [self.n1, self.n2],
            [[self.d11, self.d12], [self.d21, self.d22]],
        )
    }

    pub fn from_network(cfg: &NetworkConfig) -> Result<Self> {
        if cfg.k != 2 {
            return Err(Error::Config(format!("expected a two-user network, got K={}", cfg.k)));
        }
        let d = &cfg.rank_map;
        TwoUserParams::new(
            cfg.tx_antennas[0],
            cfg.tx_antennas[1],
            cfg.rx_antennas[0],
            cfg.rx_antennas[1],
            d[0][0],
            d[0][1],
            d[1][0],
            d[1][1],
        )
    }

    /// Every valid parameter point with antenna counts in `1..=max_antennas`.
    pub fn grid(max_antennas: usize) -> Vec<TwoUserParams> {
        let mut out = Vec::new();
        let r = 1..=max_antennas;
        for m1 in r.clone() {
            for m2 in r.clone() {
                for n1 in r.clone() {
                    for n2 in r.clone() {
                        for d11 in 0..=m1.min(n1) {
                            for d12 in 0..=m2.min(n1) {
                                for d21 in 0..=m1.min(n2) {
                                    for d22 in 0..=m2.min(n2) {
                                        out.push(TwoUserParams {
                                            m1,
                                            m2,
                                            n1,
                                            n2,
                                            d11,
                                            d12,
                                            d21,
                                            d22,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn r(n: usize) -> Rational {
    Rational::from(n)
}

fn min_all(vals: &[Rational]) -> Rational {
    vals.iter().copied().min().expect("nonempty")
}

/// Two-user feedback DoF: the six-term minimum.
pub fn thm1_feedback(p: &TwoUserParams) -> Rational {
    let (m1, m2, n1, n2) = (r(p.m1), r(p.m2), r(p.n1), r(p.n2));
    let (d11, d12, d21, d22) = (r(p.d11), r(p.d12), r(p.d21), r(p.d22));
    min_all(&[
        m1 + n2 - d21,
        m2 + n1 - d12,
        d11 + d22 + d12,
        d11 + d22 + d21,
        m1.min(n1) + d22,
        m2.min(n2) + d11,
    ])
}

/// The three-term non-feedback expression, without checking when it applies.
pub fn nofeedback_three_term(p: &TwoUserParams) -> Rational {
    let (m1, m2, n1, n2) = (r(p.m1), r(p.m2), r(p.n1), r(p.n2));
    min_all(&[m1 + n2 - r(p.d21), n1 + m2 - r(p.d12), r(p.d11) + r(p.d22)])
}

/// Non-feedback two-user DoF; only defined when both direct links are
/// full rank.
pub fn remark2_nofeedback(p: &TwoUserParams) -> Result<Rational> {
    if p.d11 != p.m1.min(p.n1) || p.d22 != p.m2.min(p.n2) {
        return Err(Error::Domain(format!(
            "non-feedback formula needs full-rank direct links: D11={} (min(M1,N1)={}), D22={} (min(M2,N2)={})",
            p.d11,
            p.m1.min(p.n1),
            p.d22,
            p.m2.min(p.n2)
        )));
    }
    Ok(nofeedback_three_term(p))
}

fn require_k(p: &SymmetricParams, k: usize) -> Result<()> {
    if p.k != k {
        return Err(Error::Domain(format!("formula is for K={k}, got K={}", p.k)));
    }
    Ok(())
}

/// Three-user achievable DoF, piecewise in `M`.
///
/// Branch intervals are closed; at a shared endpoint both branches are
/// evaluated and must agree.
pub fn thm2_lower(p: &SymmetricParams) -> Result<Rational> {
    require_k(p, 3)?;
    let (m, dd, dc) = (p.m, p.d_direct, p.d_cross);
    if dc > m {
        return Err(Error::Domain(format!("D_c={dc} exceeds M={m}")));
    }
    let (mr, ddr, dcr) = (r(m), r(dd), r(dc));
    let mut values = Vec::with_capacity(2);
    if dc <= m && m <= 2 * dc {
        values.push((rat(3, 2) * mr).min(mr + ddr).max(r(2) * mr - dcr));
    }
    if 2 * dc <= m && m <= 2 * dc + dd {
        values.push(r(3) * mr - r(3) * dcr);
    }
    if 2 * dc + dd <= m {
        values.push(r(3) * ddr + r(3) * dcr);
    }
    let first = values[0];
    assert!(
        values.iter().all(|v| *v == first),
        "branch values disagree at boundary M={m}, D_d={dd}, D_c={dc}: {values:?}"
    );
    Ok(first)
}

/// K-user upper bound `K D_d + D_c K (K-1) / 2`.
pub fn thm3_upper(p: &SymmetricParams) -> Rational {
    let k = r(p.k);
    k * r(p.d_direct) + r(p.d_cross) * k * (k - Rational::ONE) / r(2)
}

/// Antenna threshold above which the K-user upper bound is achievable.
pub fn corollary1_threshold(p: &SymmetricParams) -> usize {
    p.d_direct + (p.k - 1) * p.d_cross
}

/// Exact K-user DoF when `M >= D_d + (K-1) D_c`.
pub fn corollary1_dof(p: &SymmetricParams) -> Result<Rational> {
    let t = corollary1_threshold(p);
    if p.m < t {
        return Err(Error::Domain(format!(
            "K-user DoF needs M >= D_d + (K-1) D_c = {t}, got M={}",
            p.m
        )));
    }
    Ok(thm3_upper(p))
}

/// Symmetric two-user feedback DoF `min{2M-D, 3D, M+D}`.
pub fn symmetric_two_user_feedback(m: usize, d: usize) -> Rational {
    let (m, d) = (r(m), r(d));
    min_all(&[r(2) * m - d, r(3) * d, m + d])
}

/// Symmetric two-user non-feedback baseline `min{2M-D, 2D}`.
pub fn symmetric_two_user_nofeedback(m: usize, d: usize) -> Rational {
    let (m, d) = (r(m), r(d));
    (r(2) * m - d).min(r(2) * d)
}
