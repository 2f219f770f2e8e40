//! Rank-deficient channel synthesis.
//!
//! Each link `H[j][i]` (receiver `j`, transmitter `i`) is the sum of
//! `D[j][i]` rank-one terms `a b^T` with i.i.d. complex Gaussian factors.
//! Indices are 0-based in the API and 1-based in the JSON file keys.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{rank_tol, ComplexMatrix, ComplexVector, Tolerance};
use crate::stream::{self, tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub k: usize,
    pub tx_antennas: Vec<usize>,
    pub rx_antennas: Vec<usize>,
    /// `rank_map[j][i]`: rank of the link from transmitter `i` to receiver `j`.
    pub rank_map: Vec<Vec<usize>>,
}

impl NetworkConfig {
    pub fn new(tx_antennas: Vec<usize>, rx_antennas: Vec<usize>, rank_map: Vec<Vec<usize>>) -> Result<Self> {
        let cfg = NetworkConfig {
            k: tx_antennas.len(),
            tx_antennas,
            rx_antennas,
            rank_map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two-user network from `(M1, M2, N1, N2)` and ranks `D[j][i]`.
    pub fn two_user(m: [usize; 2], n: [usize; 2], d: [[usize; 2]; 2]) -> Result<Self> {
        NetworkConfig::new(m.to_vec(), n.to_vec(), d.iter().map(|r| r.to_vec()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 users, got {k}")));
        }
        if self.tx_antennas.len() != k || self.rx_antennas.len() != k {
            return Err(Error::Config("antenna lists must have one entry per user".into()));
        }
        if self.rank_map.len() != k || self.rank_map.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("rank map must be {k}x{k}")));
        }
        if let Some(z) = self.tx_antennas.iter().chain(&self.rx_antennas).find(|&&a| a == 0) {
            return Err(Error::Config(format!("antenna count {z} must be at least 1")));
        }
        for j in 0..k {
            for i in 0..k {
                let d = self.rank_map[j][i];
                let cap = self.tx_antennas[i].min(self.rx_antennas[j]);
                if d > cap {
                    return Err(Error::Config(format!(
                        "D[{},{}] = {d} exceeds min(M_{}, N_{}) = {cap}",
                        j + 1,
                        i + 1,
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rank(&self, rx: usize, tx: usize) -> usize {
        self.rank_map[rx][tx]
    }

    /// The symmetric parameters, if every node has the same antenna count
    /// and all direct (resp. cross) links share a rank.
    pub fn as_symmetric(&self) -> Option<SymmetricConfig> {
        let m = self.tx_antennas[0];
        if self.tx_antennas.iter().chain(&self.rx_antennas).any(|&a| a != m) {
            return None;
        }
        let dd = self.rank_map[0][0];
        let dc = self.rank_map[1][0];
        for j in 0..self.k {
            for i in 0..self.k {
                let want = if i == j { dd } else { dc };
                if self.rank_map[j][i] != want {
                    return None;
                }
            }
        }
        Some(SymmetricConfig {
            k: self.k,
            m,
            d_direct: dd,
            d_cross: dc,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetricConfig {
    pub k: usize,
    pub m: usize,
    pub d_direct: usize,
    pub d_cross: usize,
}

impl SymmetricConfig {
    pub fn new(k: usize, m: usize, d_direct: usize, d_cross: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 users, got {k}")));
        }
        if m == 0 {
            return Err(Error::Config("antenna count must be at least 1".into()));
        }
        if d_direct > m || d_cross > m {
            return Err(Error::Config(format!(
                "ranks D_d={d_direct}, D_c={d_cross} must not exceed M={m}"
            )));
        }
        Ok(SymmetricConfig {
            k,
            m,
            d_direct,
            d_cross,
        })
    }

    pub fn network(&self) -> NetworkConfig {
        let rank_map = (0..self.k)
            .map(|j| {
                (0..self.k)
                    .map(|i| if i == j { self.d_direct } else { self.d_cross })
                    .collect()
            })
            .collect();
        NetworkConfig {
            k: self.k,
            tx_antennas: vec![self.m; self.k],
            rx_antennas: vec![self.m; self.k],
            rank_map,
        }
    }
}

/// One rank-one path `a b^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFactor {
    pub a: ComplexVector,
    pub b: ComplexVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    config: NetworkConfig,
    seed: u64,
    /// `factors[j][i]` holds the `D[j][i]` paths of link (j, i).
    factors: Vec<Vec<Vec<PathFactor>>>,
    matrices: Vec<Vec<ComplexMatrix>>,
}

impl ChannelInstance {
    /// Assemble from explicit factors. Shapes are checked; ranks are not
    /// (see [`validate`]).
    pub fn from_factors(config: NetworkConfig, seed: u64, factors: Vec<Vec<Vec<PathFactor>>>) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        if factors.len() != k || factors.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("factor table must be {k}x{k}")));
        }
        let mut matrices = Vec::with_capacity(k);
        for j in 0..k {
            let mut row = Vec::with_capacity(k);
            for i in 0..k {
                let (n, m) = (config.rx_antennas[j], config.tx_antennas[i]);
                let paths = &factors[j][i];
                if paths.len() != config.rank_map[j][i] {
                    return Err(Error::Config(format!(
                        "link ({},{}) has {} paths, rank map says {}",
                        j + 1,
                        i + 1,
                        paths.len(),
                        config.rank_map[j][i]
                    )));
                }
                let mut h = ComplexMatrix::zeros(n, m);
                for p in paths {
                    if p.a.len() != n || p.b.len() != m {
                        return Err(Error::Config(format!(
                            "link ({},{}) factor shapes {}x1 / {}x1, expected {n}x1 / {m}x1",
                            j + 1,
                            i + 1,
                            p.a.len(),
                            p.b.len()
                        )));
                    }
                    h += &p.a * p.b.transpose();
                }
                row.push(h);
            }
            matrices.push(row);
        }
        Ok(ChannelInstance {
            config,
            seed,
            factors,
            matrices,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    /// Link from transmitter `tx` to receiver `rx`.
    pub fn h(&self, rx: usize, tx: usize) -> &ComplexMatrix {
        &self.matrices[rx][tx]
    }

    pub fn factors(&self, rx: usize, tx: usize) -> &[PathFactor] {
        &self.factors[rx][tx]
    }

    /// Overwrite one link matrix, bypassing the factor model. Test hook for
    /// forced-failure scenarios.
    #[doc(hidden)]
    pub fn set_matrix_unchecked(&mut self, rx: usize, tx: usize, h: ComplexMatrix) {
        self.matrices[rx][tx] = h;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ChannelFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ChannelFile = serde_json::from_str(s)?;
        file.into_instance()
    }
}

/// Draw a channel instance. Fails with [`Error::DegenerateDraw`] if some
/// link does not come out at its nominal rank; callers retry with another
/// seed.
pub fn generate(config: &NetworkConfig, seed: u64) -> Result<ChannelInstance> {
    generate_with_tol(config, seed, &Tolerance::default())
}

pub fn generate_with_tol(config: &NetworkConfig, seed: u64, tol: &Tolerance) -> Result<ChannelInstance> {
    config.validate()?;
    let k = config.k;
    let factors: Vec<Vec<Vec<PathFactor>>> = (0..k)
        .map(|j| {
            (0..k)
                .map(|i| {
                    (0..config.rank_map[j][i])
                        .map(|p| {
                            let t = [j as u64, i as u64, p as u64];
                            let a = stream::gaussian_matrix(
                                &mut stream::substream(seed, &[tag::CHANNEL_A, t[0], t[1], t[2]]),
                                config.rx_antennas[j],
                                1,
                            );
                            let b = stream::gaussian_matrix(
                                &mut stream::substream(seed, &[tag::CHANNEL_B, t[0], t[1], t[2]]),
                                config.tx_antennas[i],
                                1,
                            );
                            PathFactor {
                                a: a.column(0).into_owned(),
                                b: b.column(0).into_owned(),
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let inst = ChannelInstance::from_factors(config.clone(), seed, factors)?;
    let report = validate(&inst, tol);
    if let Some(bad) = report.entries.iter().find(|e| !e.pass) {
        return Err(Error::DegenerateDraw {
            seed,
            rx: bad.rx + 1,
            tx: bad.tx + 1,
            measured: bad.measured,
            expected: bad.expected,
        });
    }
    Ok(inst)
}

/// Generate, moving on to `seed + 1, seed + 2, ...` on degenerate draws.
pub fn generate_retrying(config: &NetworkConfig, seed: u64, attempts: usize) -> Result<ChannelInstance> {
    let mut last = None;
    for t in 0..attempts.max(1) as u64 {
        match generate(config, seed.wrapping_add(t)) {
            Err(e @ Error::DegenerateDraw { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankEntry {
    pub rx: usize,
    pub tx: usize,
    pub expected: usize,
    pub measured: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub entries: Vec<RankEntry>,
}

impl RankReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Measure every link's rank against the rank map.
pub fn validate(instance: &ChannelInstance, tol: &Tolerance) -> RankReport {
    let k = instance.k();
    let mut entries = Vec::with_capacity(k * k);
    for rx in 0..k {
        for tx in 0..k {
            let expected = instance.config.rank_map[rx][tx];
            let measured = rank_tol(instance.h(rx, tx), tol);
            entries.push(RankEntry {
                rx,
                tx,
                expected,
                measured,
                pass: expected == measured,
            });
        }
    }
    RankReport { entries }
}

// ---- file format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FactorJson {
    a: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    config: NetworkConfig,
    seed: u64,
    factors: BTreeMap<String, Vec<FactorJson>>,
}

pub(crate) fn vec_to_pairs(v: &ComplexVector) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

pub(crate) fn pairs_to_vec(p: &[[f64; 2]]) -> ComplexVector {
    ComplexVector::from_iterator(p.len(), p.iter().map(|&[re, im]| num_complex::Complex64::new(re, im)))
}

impl From<&ChannelInstance> for ChannelFile {
    fn from(inst: &ChannelInstance) -> Self {
        let k = inst.k();
        let mut factors = BTreeMap::new();
        for j in 0..k {
            for i in 0..k {
                let list = inst.factors[j][i]
                    .iter()
                    .map(|p| FactorJson {
                        a: vec_to_pairs(&p.a),
                        b: vec_to_pairs(&p.b),
                    })
                    .collect();
                factors.insert(format!("{},{}", j + 1, i + 1), list);
            }
        }
        ChannelFile {
            config: inst.config.clone(),
            seed: inst.seed,
            factors,
        }
    }
}

impl ChannelFile {
    fn into_instance(self) -> Result<ChannelInstance> {
        self.config.validate()?;
        let k = self.config.k;
        let mut factors: Vec<Vec<Vec<PathFactor>>> = vec![vec![Vec::new(); k]; k];
        for (key, list) in self.factors {
            let (j, i) = parse_link_key(&key, k)?;
            factors[j][i] = list
                .into_iter()
                .map(|f| PathFactor {
                    a: pairs_to_vec(&f.a),
                    b: pairs_to_vec(&f.b),
                })
                .collect();
        }
        ChannelInstance::from_factors(self.config, self.seed, factors)
    }
}

fn parse_link_key(key: &str, k: usize) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("bad link key `{key}` (expected \"j,i\" with 1 <= j,i <= {k})"));
    let (j, i) = key.split_once(',').ok_or_else(bad)?;
    let j: usize = j.trim().parse().map_err(|_| bad())?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    if j == 0 || i == 0 || j > k || i > k {
        return Err(bad());
    }
    Ok((j - 1, i - 1))
}
