//! Per-slot transmitter sets for each medium access scheme.

mod lattice;
mod rsa;

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_alpha, Point2D, Region, TransmitterSet};

pub use lattice::{gen_grid, reduce_offset, GridKind, Lattice, MIN_GRID_POINTS};
pub use rsa::{AuditEntry, Saturation};

use rsa::{adsorb, CarrierSenseRule, DistanceRule};

/// Largest mean point count `gen_poisson` will draw.
pub const MAX_POISSON_MEAN: f64 = 1e8;

/// Medium access scheme and its single parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Scheme {
    Grid {
        kind: GridKind,
        offset: Point2D,
    },
    /// Slotted ALOHA: uniform Poisson transmitters with intensity `lambda`.
    Poisson {
        lambda: f64,
    },
    /// Node coloring with exclusion distance `d`.
    Coloring {
        d: f64,
    },
    /// Carrier sensing with threshold `theta`.
    Csma {
        theta: f64,
    },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::Grid { kind, .. } => format!("grid:{}", kind.lattice.name()),
            Scheme::Poisson { .. } => "aloha-mc".to_string(),
            Scheme::Coloring { .. } => "coloring".to_string(),
            Scheme::Csma { .. } => "csma".to_string(),
        }
    }

    /// The scheme's own parameter: `d`, `lambda` or `theta`.
    pub fn parameter(&self) -> f64 {
        match *self {
            Scheme::Grid { kind, .. } => kind.spacing,
            Scheme::Poisson { lambda } => lambda,
            Scheme::Coloring { d } => d,
            Scheme::Csma { theta } => theta,
        }
    }

    /// Typical distance between neighboring transmitters, used to scale
    /// step sizes and region checks.
    pub fn length_scale(&self, alpha: f64) -> f64 {
        match *self {
            Scheme::Grid { kind, .. } => kind.spacing,
            Scheme::Poisson { lambda } => lambda.powf(-0.5),
            Scheme::Coloring { d } => d,
            Scheme::Csma { theta } => theta.powf(-1.0 / alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")));
        match *self {
            Scheme::Grid { kind, offset } => {
                GridKind::new(kind.lattice, kind.spacing)?;
                Point2D::try_new(offset.x, offset.y).map(|_| ())
            }
            Scheme::Poisson { lambda } if !(lambda.is_finite() && lambda > 0.0) => bad("lambda", lambda),
            Scheme::Coloring { d } if !(d.is_finite() && d > 0.0) => bad("exclusion distance d", d),
            Scheme::Csma { theta } if !(theta.is_finite() && theta > 0.0) => bad("theta", theta),
            _ => Ok(()),
        }
    }
}

/// Everything needed to draw one transmitter set deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub scheme: Scheme,
    pub region: Region,
    pub seed: u64,
    /// Stopping rule for the adsorption schemes; `None` picks the scheme's
    /// default.
    #[serde(default)]
    pub saturation: Option<Saturation>,
}

impl ProcessSpec {
    pub fn new(scheme: Scheme, region: Region, seed: u64) -> Result<Self> {
        scheme.validate()?;
        Ok(ProcessSpec {
            scheme,
            region,
            seed,
            saturation: None,
        })
    }

    pub fn with_saturation(mut self, saturation: Saturation) -> Self {
        self.saturation = Some(saturation);
        self
    }

    /// The same spec with the seed of sample `index`.
    pub fn for_sample(&self, index: u64) -> ProcessSpec {
        ProcessSpec {
            seed: sample_seed(self.seed, index),
            ..*self
        }
    }

    /// Draws the set. `alpha` is only used by carrier sensing.
    pub fn generate(&self, alpha: f64) -> Result<TransmitterSet> {
        match self.scheme {
            Scheme::Grid { kind, offset } => gen_grid(kind, offset, self.region),
            Scheme::Poisson { lambda } => gen_poisson(lambda, self.region, self.seed),
            Scheme::Coloring { d } => {
                let sat = self.saturation.unwrap_or_default();
                gen_coloring_with(d, self.region, self.seed, &sat)
            }
            Scheme::Csma { theta } => {
                let sat = self.saturation.unwrap_or(Saturation::CARRIER_SENSE);
                gen_csma_with(theta, self.region, self.seed, alpha, &sat, None)
            }
        }
    }
}

/// Derives an independent seed for sample `index` (SplitMix64 finalizer).
pub fn sample_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform Poisson transmitters of intensity `lambda` per square meter.
pub fn gen_poisson(lambda: f64, region: Region, seed: u64) -> Result<TransmitterSet> {
    Scheme::Poisson { lambda }.validate()?;
    let mean = lambda * region.area();
    if mean >= MAX_POISSON_MEAN {
        return Err(Error::ResourceLimit(format!(
            "mean point count {mean:.3e} exceeds {MAX_POISSON_MEAN:e}"
        )));
    }
    let mut rng = rng_for(seed);
    let n = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(&mut rng) as usize;
    let (hw, hh) = (region.half_width(), region.half_height());
    let points = (0..n)
        .map(|_| Point2D::new(rng.random_range(-hw..=hw), rng.random_range(-hh..=hh)))
        .collect();
    Ok(TransmitterSet::from_parts(points, region, "aloha-mc"))
}

/// Node coloring: saturated random sequential inhibition with pairwise
/// distance at least `d`.
pub fn gen_coloring(d: f64, region: Region, seed: u64) -> Result<TransmitterSet> {
    gen_coloring_with(d, region, seed, &Saturation::default())
}

pub fn gen_coloring_with(d: f64, region: Region, seed: u64, saturation: &Saturation) -> Result<TransmitterSet> {
    Scheme::Coloring { d }.validate()?;
    guard_packing(region, d)?;
    let mut rng = rng_for(seed);
    let points = adsorb(DistanceRule::new(region, d), region, saturation, &mut rng, None);
    Ok(TransmitterSet::from_parts(points, region, "coloring"))
}

/// CSMA: a candidate transmits iff the power it senses from transmitters
/// already active is below `theta`. Earlier transmitters may end up above
/// `theta` once later ones start; they do not back off.
pub fn gen_csma(theta: f64, region: Region, seed: u64, alpha: f64) -> Result<TransmitterSet> {
    gen_csma_with(theta, region, seed, alpha, &Saturation::CARRIER_SENSE, None)
}

/// [`gen_csma`] with an explicit stopping rule, optionally logging every
/// candidate decision.
pub fn gen_csma_with(
    theta: f64,
    region: Region,
    seed: u64,
    alpha: f64,
    saturation: &Saturation,
    audit: Option<&mut Vec<AuditEntry>>,
) -> Result<TransmitterSet> {
    Scheme::Csma { theta }.validate()?;
    validate_alpha(alpha)?;
    guard_packing(region, theta.powf(-1.0 / alpha))?;
    let mut rng = rng_for(seed);
    let rule = CarrierSenseRule::new(region, theta, alpha);
    let points = adsorb(rule, region, saturation, &mut rng, audit);
    Ok(TransmitterSet::from_parts(points, region, "csma"))
}

fn guard_packing(region: Region, separation: f64) -> Result<()> {
    // at most one point per separation-sized disk
    let bound = region.area() / (separation * separation);
    if bound > MAX_POISSON_MEAN {
        Err(Error::ResourceLimit(format!(
            "separation {separation} m allows up to {bound:.3e} points"
        )))
    } else {
        Ok(())
    }
}

/// Transmitters per square meter of the set's region.
pub fn density(set: &TransmitterSet) -> f64 {
    set.len() as f64 / set.region().area()
}

/// Transmitters per square meter inside the concentric window whose sides
/// are `fraction` of the region's.
pub fn window_density(set: &TransmitterSet, fraction: f64) -> f64 {
    let r = set.region();
    let (hw, hh) = (r.half_width() * fraction, r.half_height() * fraction);
    let n = set
        .points()
        .iter()
        .filter(|p| p.x.abs() <= hw && p.y.abs() <= hh)
        .count();
    n as f64 / (4.0 * hw * hh)
}

/// Writes `x,y` rows preceded by `#` provenance lines.
pub fn write_csv(set: &TransmitterSet, seed: Option<u64>, mut out: impl Write) -> io::Result<()> {
    let r = set.region();
    writeln!(out, "# scheme_label={}", set.scheme_label())?;
    if let Some(seed) = seed {
        writeln!(out, "# seed={seed}")?;
    }
    writeln!(out, "# region={}x{}", r.width(), r.height())?;
    writeln!(out, "x,y")?;
    for p in set.points() {
        writeln!(out, "{:?},{:?}", p.x, p.y)?;
    }
    Ok(())
}

/// Reads a set written by [`write_csv`], returning it with its seed.
pub fn read_csv(input: impl BufRead) -> Result<(TransmitterSet, Option<u64>)> {
    let bad = |msg: String| Error::InvalidParameter(format!("transmitter CSV: {msg}"));
    let mut label = String::new();
    let mut seed = None;
    let mut region = None;
    let mut points = Vec::new();
    let mut header_seen = false;
    for line in input.lines() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                match k.trim() {
                    "scheme_label" => label = v.trim().to_string(),
                    "seed" => seed = Some(v.trim().parse().map_err(|_| bad(format!("seed {v}")))?),
                    "region" => {
                        let (w, h) = v.trim().split_once('x').ok_or_else(|| bad(format!("region {v}")))?;
                        let w: f64 = w.parse().map_err(|_| bad(format!("region {v}")))?;
                        let h: f64 = h.parse().map_err(|_| bad(format!("region {v}")))?;
                        region = Some(Region::new(w / 2.0, h / 2.0)?);
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            if line != "x,y" {
                return Err(bad(format!("expected header x,y, got {line}")));
            }
            header_seen = true;
            continue;
        }
        let (x, y) = line.split_once(',').ok_or_else(|| bad(format!("row {line}")))?;
        let x: f64 = x.trim().parse().map_err(|_| bad(format!("row {line}")))?;
        let y: f64 = y.trim().parse().map_err(|_| bad(format!("row {line}")))?;
        points.push(Point2D::try_new(x, y)?);
    }
    let region = region.ok_or_else(|| bad("missing region line".into()))?;
    Ok((TransmitterSet::new(points, region, label)?, seed))
}
