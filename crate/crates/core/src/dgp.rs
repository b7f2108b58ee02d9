//! Structural data-generating processes for the point-treatment and
//! two-time-point settings, with quota sampling under the observational
//! (`gamma != 0`) and experimental (`gamma = 0`) regimes.
//!
//! The latent immune status `u` is recorded by the simulator so that balance
//! diagnostics can report it, but it is absent from the observed views that
//! estimators consume. Draw order inside a unit is normative: point units
//! consume `(u, x, z, y)`, longitudinal units `(u, z1, x, z2, y)`.

use crate::rng::{expit, RngState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Safety guard for quota sampling; termination is almost sure long before.
const MAX_QUOTA_DRAWS: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DgpError {
    #[error("quota unreachable after {0} draws")]
    QuotaUnreachable(u64),
    #[error("dataset parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "O")]
    Observational,
    #[serde(rename = "E")]
    Experimental,
}

impl Regime {
    /// The confounding coefficient is the only regime difference: `gamma = 0`
    /// is the experimental mechanism.
    pub fn from_gamma(gamma: f64) -> Self {
        if gamma == 0.0 {
            Regime::Experimental
        } else {
            Regime::Observational
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    Point,
    Long,
}

impl std::str::FromStr for DgpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "point" => Ok(DgpKind::Point),
            "long" => Ok(DgpKind::Long),
            other => Err(format!("unknown dgp kind: {other} (expected point|long)")),
        }
    }
}

/// Generation record for a dataset: everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: DgpKind,
    pub regime: Regime,
    pub gamma: f64,
    pub master_seed: u64,
    pub stream_index: u64,
    pub per_group: u32,
    pub replications: u32,
}

/// One point-treatment unit. `x` is the baseline covariate count, `z` the
/// treatment indicator, `y` the outcome count, `u` the latent immune status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: u32,
    pub z: u8,
    pub y: u32,
    pub u: f64,
}

/// One longitudinal unit over two treatment decisions `z1`, `z2` with the
/// intermediate covariate `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongRecord {
    pub z1: u8,
    pub x: u8,
    pub z2: u8,
    pub y: u32,
    pub u: f64,
}

/// Observed view of a point unit: what estimators are allowed to see.
/// The latent `u` does not exist on this type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedPoint {
    pub x: u32,
    pub z: u8,
    pub y: u32,
}

/// Observed view of a longitudinal unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedLong {
    pub z1: u8,
    pub x: u8,
    pub z2: u8,
    pub y: u32,
}

/// Immutable ordered collection of point records plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDataset {
    records: Vec<PointRecord>,
    provenance: Provenance,
}

/// Immutable ordered collection of longitudinal records plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LongDataset {
    records: Vec<LongRecord>,
    provenance: Provenance,
}

impl PointDataset {
    pub fn from_parts(provenance: Provenance, records: Vec<PointRecord>) -> Self {
        PointDataset {
            records,
            provenance,
        }
    }

    /// Full records including the latent `u`; for diagnostics only.
    pub fn records(&self) -> &[PointRecord] {
        &self.records
    }

    /// Latent-free view consumed by estimators.
    pub fn observed(&self) -> Vec<ObservedPoint> {
        self.records
            .iter()
            .map(|r| ObservedPoint {
                x: r.x,
                z: r.z,
                y: r.y,
            })
            .collect()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl LongDataset {
    pub fn from_parts(provenance: Provenance, records: Vec<LongRecord>) -> Self {
        LongDataset {
            records,
            provenance,
        }
    }

    pub fn records(&self) -> &[LongRecord] {
        &self.records
    }

    pub fn observed(&self) -> Vec<ObservedLong> {
        self.records
            .iter()
            .map(|r| ObservedLong {
                z1: r.z1,
                x: r.x,
                z2: r.z2,
                y: r.y,
            })
            .collect()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Draws one point unit: `u ~ N(0,1)`, `x ~ Poisson(e^u)`,
/// `z ~ Bernoulli(expit(gamma x))`, `y ~ Poisson(x + e^u)`.
///
/// The outcome law reads only `x` and `u`, never `z`: the process encodes no
/// treatment effect.
pub fn gen_point_unit(rng: &mut RngState, gamma: f64) -> PointRecord {
    let u = rng.normal(0.0, 1.0).expect("unit normal parameters are valid");
    let eu = u.exp();
    let x = rng.poisson(eu).expect("e^u is a valid rate") as u32;
    let z = rng
        .bernoulli(expit(gamma * f64::from(x)))
        .expect("expit output is a probability");
    let y = rng
        .poisson(f64::from(x) + eu)
        .expect("x + e^u is a valid rate") as u32;
    PointRecord { x, z, y, u }
}

/// Draws one longitudinal unit: `u ~ N(0,1)`, `z1 ~ Bernoulli(1/2)`,
/// `x ~ Bernoulli(expit(-u + 2 z1))`, `z2 ~ Bernoulli(expit(gamma x + z1))`,
/// `y ~ Poisson(e^u)`. The outcome ignores both treatments (null process).
pub fn gen_long_unit(rng: &mut RngState, gamma: f64) -> LongRecord {
    let u = rng.normal(0.0, 1.0).expect("unit normal parameters are valid");
    let z1 = rng.bernoulli(0.5).expect("0.5 is a probability");
    let x = rng
        .bernoulli(expit(-u + 2.0 * f64::from(z1)))
        .expect("expit output is a probability");
    let z2 = rng
        .bernoulli(expit(gamma * f64::from(x) + f64::from(z1)))
        .expect("expit output is a probability");
    let y = rng.poisson(u.exp()).expect("e^u is a valid rate") as u32;
    LongRecord { z1, x, z2, y, u }
}

/// Quota sampling for the point setting: units are drawn sequentially and
/// kept while their treatment group's quota is unfilled; sampling stops once
/// both groups hold exactly `per_group` units. Draw order is preserved.
pub fn quota_sample_point(
    mut rng: RngState,
    gamma: f64,
    per_group: u32,
) -> Result<PointDataset, DgpError> {
    let target = per_group as usize;
    let mut records = Vec::with_capacity(2 * target);
    let (mut n_treated, mut n_control) = (0usize, 0usize);
    let mut draws: u64 = 0;
    while n_treated < target || n_control < target {
        if draws >= MAX_QUOTA_DRAWS {
            return Err(DgpError::QuotaUnreachable(draws));
        }
        draws += 1;
        let unit = gen_point_unit(&mut rng, gamma);
        let slot = if unit.z == 1 {
            &mut n_treated
        } else {
            &mut n_control
        };
        if *slot < target {
            *slot += 1;
            records.push(unit);
        }
    }
    Ok(PointDataset {
        records,
        provenance: Provenance {
            kind: DgpKind::Point,
            regime: Regime::from_gamma(gamma),
            gamma,
            master_seed: rng.master_seed(),
            stream_index: rng.stream_index(),
            per_group,
            replications: 1,
        },
    })
}

/// Quota sampling over the four `(z1, z2)` groups of the longitudinal
/// setting; each group ends with exactly `per_group` units.
pub fn quota_sample_long(
    mut rng: RngState,
    gamma: f64,
    per_group: u32,
) -> Result<LongDataset, DgpError> {
    let target = per_group as usize;
    let mut records = Vec::with_capacity(4 * target);
    let mut counts = [0usize; 4];
    let mut draws: u64 = 0;
    while counts.iter().any(|&c| c < target) {
        if draws >= MAX_QUOTA_DRAWS {
            return Err(DgpError::QuotaUnreachable(draws));
        }
        draws += 1;
        let unit = gen_long_unit(&mut rng, gamma);
        let g = (unit.z1 as usize) * 2 + unit.z2 as usize;
        if counts[g] < target {
            counts[g] += 1;
            records.push(unit);
        }
    }
    Ok(LongDataset {
        records,
        provenance: Provenance {
            kind: DgpKind::Long,
            regime: Regime::from_gamma(gamma),
            gamma,
            master_seed: rng.master_seed(),
            stream_index: rng.stream_index(),
            per_group,
            replications: 1,
        },
    })
}

/// Concatenates `replications` independent quota samples, one substream per
/// replication index, in index order.
pub fn pooled_point_replications(
    master_seed: u64,
    gamma: f64,
    per_group: u32,
    replications: u32,
) -> Result<PointDataset, DgpError> {
    let root = RngState::new(master_seed);
    let mut records = Vec::with_capacity(2 * per_group as usize * replications as usize);
    for rep in 0..replications {
        let data = quota_sample_point(root.split(u64::from(rep)), gamma, per_group)?;
        records.extend_from_slice(data.records());
    }
    Ok(PointDataset {
        records,
        provenance: Provenance {
            kind: DgpKind::Point,
            regime: Regime::from_gamma(gamma),
            gamma,
            master_seed,
            stream_index: 0,
            per_group,
            replications,
        },
    })
}

/// Longitudinal counterpart of [`pooled_point_replications`].
pub fn pooled_long_replications(
    master_seed: u64,
    gamma: f64,
    per_group: u32,
    replications: u32,
) -> Result<LongDataset, DgpError> {
    let root = RngState::new(master_seed);
    let mut records = Vec::with_capacity(4 * per_group as usize * replications as usize);
    for rep in 0..replications {
        let data = quota_sample_long(root.split(u64::from(rep)), gamma, per_group)?;
        records.extend_from_slice(data.records());
    }
    Ok(LongDataset {
        records,
        provenance: Provenance {
            kind: DgpKind::Long,
            regime: Regime::from_gamma(gamma),
            gamma,
            master_seed,
            stream_index: 0,
            per_group,
            replications,
        },
    })
}

// --- CSV serialization -----------------------------------------------------
//
// Floats are written with 17 significant digits so outputs are
// byte-reproducible and round-trip exactly.

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl PointDataset {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 32 + 16);
        out.push_str("x,z,y,u\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.x, r.z, r.y, fmt_f64(r.u)));
        }
        out
    }

    pub fn from_csv(text: &str, provenance: Provenance) -> Result<Self, DgpError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "x,z,y,u" => {}
            other => {
                return Err(DgpError::Parse {
                    line: 1,
                    message: format!("expected header `x,z,y,u`, got {:?}", other.map(|(_, h)| h)),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |msg: &str| DgpError::Parse {
                line: i + 1,
                message: msg.to_owned(),
            };
            if fields.len() != 4 {
                return Err(parse("expected 4 fields"));
            }
            records.push(PointRecord {
                x: fields[0].trim().parse().map_err(|_| parse("bad x"))?,
                z: fields[1].trim().parse().map_err(|_| parse("bad z"))?,
                y: fields[2].trim().parse().map_err(|_| parse("bad y"))?,
                u: fields[3].trim().parse().map_err(|_| parse("bad u"))?,
            });
        }
        Ok(PointDataset {
            records,
            provenance,
        })
    }
}

impl LongDataset {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 32 + 16);
        out.push_str("z1,x,z2,y,u\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.z1,
                r.x,
                r.z2,
                r.y,
                fmt_f64(r.u)
            ));
        }
        out
    }

    pub fn from_csv(text: &str, provenance: Provenance) -> Result<Self, DgpError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "z1,x,z2,y,u" => {}
            other => {
                return Err(DgpError::Parse {
                    line: 1,
                    message: format!(
                        "expected header `z1,x,z2,y,u`, got {:?}",
                        other.map(|(_, h)| h)
                    ),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |msg: &str| DgpError::Parse {
                line: i + 1,
                message: msg.to_owned(),
            };
            if fields.len() != 5 {
                return Err(parse("expected 5 fields"));
            }
            records.push(LongRecord {
                z1: fields[0].trim().parse().map_err(|_| parse("bad z1"))?,
                x: fields[1].trim().parse().map_err(|_| parse("bad x"))?,
                z2: fields[2].trim().parse().map_err(|_| parse("bad z2"))?,
                y: fields[3].trim().parse().map_err(|_| parse("bad y"))?,
                u: fields[4].trim().parse().map_err(|_| parse("bad u"))?,
            });
        }
        Ok(LongDataset {
            records,
            provenance,
        })
    }
}
