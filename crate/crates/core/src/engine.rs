//! Monte Carlo estimation of `sigma`, `lambda` and `c = lambda * sigma`.
//!
//! Each sample draws one transmitter set, traces the reception area of one
//! transmitter away from the region's edges and records the set's density.
//! Samples run in parallel but are reduced in index order, so results do not
//! depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{trace_contour, TraceConfig};
use crate::error::{Error, Result};
use crate::model::{ChannelParams, Point2D, TransmitterSet};
use crate::process::{sample_seed, window_density, ProcessSpec, Scheme};

/// Highest tolerated fraction of samples whose contour could not be traced.
pub const MAX_FAILURE_RATE: f64 = 0.1;

/// Smallest allowed ratio of region half-width to the scheme's length scale.
pub const MIN_REGION_RATIO: f64 = 40.0;

/// Side fraction of the central window used for densities and probes.
pub const CENTRAL_FRACTION: f64 = 0.5;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LC_THREADS";

/// Side fraction of the window the traced transmitter is drawn from.
pub const SELECTION_FRACTION: f64 = 0.25;

const PROBE_STREAM: u64 = 0x5052_4F42_4553;
const SELECT_STREAM: u64 = 0x5345_4C45_4354;
const DIRECT_STREAM: u64 = 0x4449_5245_4354;

/// Which transmitter of a sample gets traced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Uniform among the transmitters in the central window of side
    /// fraction [`SELECTION_FRACTION`]. Every transmitter there is equally
    /// likely, so the mean area is that of a typical transmitter.
    #[default]
    CentralUniform,
    /// The transmitter nearest to the origin. The origin tends to fall in
    /// large cells, so on random sets this overstates `sigma`.
    NearestCenter,
}

impl Selection {
    fn pick(&self, set: &TransmitterSet, seed: u64) -> Result<usize> {
        let empty = || Error::InvalidParameter("empty transmitter set".into());
        match self {
            Selection::NearestCenter => set.nearest_to(Point2D::ORIGIN).ok_or_else(empty),
            Selection::CentralUniform => {
                let r = set.region();
                let (hw, hh) = (
                    r.half_width() * SELECTION_FRACTION,
                    r.half_height() * SELECTION_FRACTION,
                );
                let inside: Vec<usize> = (0..set.len())
                    .filter(|&i| {
                        let p = set.points()[i];
                        p.x.abs() <= hw && p.y.abs() <= hh
                    })
                    .collect();
                if inside.is_empty() {
                    return set.nearest_to(Point2D::ORIGIN).ok_or_else(empty);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, SELECT_STREAM));
                Ok(inside[rng.random_range(0..inside.len())])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    pub seed: u64,
    /// Density used for this sample, per square meter.
    pub lambda: f64,
    pub transmitters: usize,
    /// Reception area in square meters; `None` when tracing failed.
    pub area: Option<f64>,
    /// Polygon area of the traced vertices, for consistency checks.
    pub shoelace_area: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub spec: ProcessSpec,
    pub channel: ChannelParams,
    pub mean_sigma: f64,
    pub stderr_sigma: f64,
    pub mean_lambda: f64,
    pub stderr_lambda: f64,
    pub capacity: f64,
    /// Delta-method standard error of `capacity`; NaN with fewer than two
    /// successful samples.
    pub stderr_capacity: f64,
    pub samples: usize,
    pub failures: usize,
}

impl CapacityEstimate {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.samples as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ENEstimate {
    pub mean_n: f64,
    pub stderr: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomothetyReport {
    pub k: f64,
    pub area: f64,
    pub scaled_area: f64,
    /// `scaled_area / (k^2 area)`.
    pub area_ratio: f64,
    /// Capacity at `k d` over capacity at `d`.
    pub capacity_ratio: f64,
}

impl HomothetyReport {
    pub fn within(&self, tol: f64) -> bool {
        (self.area_ratio - 1.0).abs() <= tol && (self.capacity_ratio - 1.0).abs() <= tol
    }
}

/// Thread pool honoring `LC_THREADS`.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads =
        match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
                Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
            })?,
            Err(_) => 0,
        };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::ResourceLimit(format!("cannot start worker threads: {e}")))
}

fn check_region(spec: &ProcessSpec, alpha: f64) -> Result<()> {
    let scale = spec.scheme.length_scale(alpha);
    let half = spec.region.half_width().min(spec.region.half_height());
    if half < MIN_REGION_RATIO * scale * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "region half-width {half} m is below {MIN_REGION_RATIO} times the length scale {scale} m"
        )));
    }
    Ok(())
}

/// Draws the set of sample `index`. Grids get a uniform random offset over
/// one lattice cell on top of the configured one.
fn sample_set(spec: &ProcessSpec, index: u64, alpha: f64) -> Result<(u64, TransmitterSet)> {
    let seed = sample_seed(spec.seed, index);
    let mut one = ProcessSpec { seed, ..*spec };
    if let Scheme::Grid { kind, offset } = spec.scheme {
        let (a1, a2, _) = kind.cell();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = a1 * rng.random::<f64>() + a2 * rng.random::<f64>();
        one.scheme = Scheme::Grid {
            kind,
            offset: offset + shift,
        };
    }
    Ok((seed, one.generate(alpha)?))
}

/// Density attributed to a set: exact for lattices, counted in the central
/// window otherwise.
fn sample_lambda(spec: &ProcessSpec, set: &TransmitterSet) -> f64 {
    match spec.scheme {
        Scheme::Grid { kind, .. } => kind.density(),
        _ => window_density(set, CENTRAL_FRACTION),
    }
}

fn is_trace_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoClosure { .. } | Error::GradientVanished { .. } | Error::NoConvergence { .. }
    )
}

/// Per-sample records in index order. Errors other than tracing failures
/// abort the run.
pub fn run_samples(
    spec: &ProcessSpec,
    channel: &ChannelParams,
    samples: usize,
    trace: &TraceConfig,
    selection: Selection,
) -> Result<Vec<SampleRecord>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample required".into()));
    }
    trace.validate()?;
    check_region(spec, channel.alpha())?;
    let pool = worker_pool()?;
    let one = |index: u64| -> Result<SampleRecord> {
        let (seed, set) = sample_set(spec, index, channel.alpha())?;
        let traced = selection.pick(&set, seed)?;
        let (area, shoelace_area, failure) = match trace_contour(&set, traced, channel, trace) {
            Ok(c) => (Some(c.area), Some(c.shoelace_area), None),
            Err(e) if is_trace_failure(&e) => (None, None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        Ok(SampleRecord {
            index,
            seed,
            lambda: sample_lambda(spec, &set),
            transmitters: set.len(),
            area,
            shoelace_area,
            failure,
        })
    };
    pool.install(|| (0..samples as u64).into_par_iter().map(one).collect())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        f64::NAN
    };
    (mean, var)
}

/// Reduces records to an estimate; aborts above [`MAX_FAILURE_RATE`].
pub fn aggregate(spec: &ProcessSpec, channel: &ChannelParams, records: &[SampleRecord]) -> Result<CapacityEstimate> {
    let ok: Vec<&SampleRecord> = records.iter().filter(|r| r.area.is_some()).collect();
    let failures = records.len() - ok.len();
    if records.is_empty() || ok.is_empty() || failures as f64 > MAX_FAILURE_RATE * records.len() as f64 {
        return Err(Error::FailureRate {
            failures,
            samples: records.len(),
            max_rate: MAX_FAILURE_RATE,
        });
    }
    let areas: Vec<f64> = ok.iter().filter_map(|r| r.area).collect();
    let lambdas: Vec<f64> = ok.iter().map(|r| r.lambda).collect();
    let n = ok.len() as f64;
    let (ms, vs) = mean_var(&areas);
    let (ml, vl) = mean_var(&lambdas);
    let cov = if ok.len() > 1 {
        areas
            .iter()
            .zip(&lambdas)
            .map(|(a, l)| (a - ms) * (l - ml))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        f64::NAN
    };
    // delta method for the product of two sample means
    let var_c = (ml * ml * vs + ms * ms * vl + 2.0 * ms * ml * cov) / n;
    Ok(CapacityEstimate {
        spec: *spec,
        channel: *channel,
        mean_sigma: ms,
        stderr_sigma: (vs / n).sqrt(),
        mean_lambda: ml,
        stderr_lambda: (vl / n).sqrt(),
        capacity: ml * ms,
        stderr_capacity: if ok.len() > 1 { var_c.max(0.0).sqrt() } else { f64::NAN },
        samples: records.len(),
        failures,
    })
}

/// Mean `lambda`, `sigma` and their product over `samples` sets.
pub fn estimate_capacity(
    spec: &ProcessSpec,
    channel: &ChannelParams,
    samples: usize,
    trace: &TraceConfig,
) -> Result<CapacityEstimate> {
    estimate_capacity_with(spec, channel, samples, trace, Selection::default())
}

pub fn estimate_capacity_with(
    spec: &ProcessSpec,
    channel: &ChannelParams,
    samples: usize,
    trace: &TraceConfig,
    selection: Selection,
) -> Result<CapacityEstimate> {
    let records = run_samples(spec, channel, samples, trace, selection)?;
    aggregate(spec, channel, &records)
}

/// Number of transmitters whose SIR at `z` reaches `beta`.
pub fn decodable_count(set: &TransmitterSet, z: Point2D, channel: &ChannelParams) -> usize {
    let loss = channel.path_loss();
    let guard2 = crate::model::COINCIDENCE_RADIUS.powi(2);
    let mut powers = Vec::with_capacity(set.len());
    for p in set.points() {
        let r2 = p.dist2(z);
        if r2 < guard2 {
            // infinite SIR for this one, zero for everybody else
            return 1;
        }
        powers.push(loss.from_r2(r2));
    }
    let total: f64 = powers.iter().sum();
    let beta = channel.beta();
    powers.iter().filter(|&&p| p >= beta * (total - p)).count()
}

/// Direct count of decodable transmitters at uniform probes in the central
/// window, without contours. Sets come from a seed stream independent of
/// [`estimate_capacity`]'s.
pub fn estimate_en_direct(
    spec: &ProcessSpec,
    channel: &ChannelParams,
    samples: usize,
    probes_per_sample: usize,
) -> Result<ENEstimate> {
    if samples == 0 || probes_per_sample == 0 {
        return Err(Error::InvalidParameter("samples and probes must be positive".into()));
    }
    check_region(spec, channel.alpha())?;
    let pool = worker_pool()?;
    let direct = ProcessSpec {
        seed: sample_seed(spec.seed, DIRECT_STREAM),
        ..*spec
    };
    let hw = spec.region.half_width() * CENTRAL_FRACTION;
    let hh = spec.region.half_height() * CENTRAL_FRACTION;
    let one = |index: u64| -> Result<f64> {
        let (seed, set) = sample_set(&direct, index, channel.alpha())?;
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, PROBE_STREAM));
        let mut hits = 0usize;
        for _ in 0..probes_per_sample {
            let z = Point2D::new(rng.random_range(-hw..hw), rng.random_range(-hh..hh));
            hits += decodable_count(&set, z, channel);
        }
        Ok(hits as f64 / probes_per_sample as f64)
    };
    let means: Vec<f64> = pool.install(|| (0..samples as u64).into_par_iter().map(one).collect::<Result<_>>())?;
    let (mean, var) = mean_var(&means);
    let stderr = if samples > 1 {
        (var / samples as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(ENEstimate {
        mean_n: mean,
        stderr,
        probes: samples * probes_per_sample,
    })
}

/// Traces the center transmitter of a grid at spacing `d` and `k d`, with
/// region and step scaled alike.
pub fn homothety_check(
    spec: &ProcessSpec,
    channel: &ChannelParams,
    k: f64,
    trace: &TraceConfig,
) -> Result<HomothetyReport> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be positive, got {k}"
        )));
    }
    let Scheme::Grid { kind, offset } = spec.scheme else {
        return Err(Error::InvalidParameter("homothety check needs a grid scheme".into()));
    };
    let base = spec.generate(channel.alpha())?;
    let scaled_spec = ProcessSpec {
        scheme: Scheme::Grid {
            kind: crate::process::GridKind::new(kind.lattice, kind.spacing * k)?,
            offset: offset * k,
        },
        region: spec.region.scaled(k)?,
        ..*spec
    };
    let scaled = scaled_spec.generate(channel.alpha())?;
    let mut scaled_trace = *trace;
    scaled_trace.dt *= k;
    scaled_trace.closure_radius *= k;
    let area_of = |set: &TransmitterSet, cfg: &TraceConfig| -> Result<f64> {
        let i = set
            .nearest_to(Point2D::ORIGIN)
            .ok_or_else(|| Error::InvalidParameter("empty transmitter set".into()))?;
        Ok(trace_contour(set, i, channel, cfg)?.area)
    };
    let area = area_of(&base, trace)?;
    let scaled_area = area_of(&scaled, &scaled_trace)?;
    let lambda = kind.density();
    let scaled_lambda = match scaled_spec.scheme {
        Scheme::Grid { kind, .. } => kind.density(),
        _ => unreachable!(),
    };
    Ok(HomothetyReport {
        k,
        area,
        scaled_area,
        area_ratio: scaled_area / (k * k * area),
        capacity_ratio: (scaled_lambda * scaled_area) / (lambda * area),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;
    use crate::process::{GridKind, Lattice};

    fn grid_spec(lattice: Lattice, d: f64, side: f64) -> ProcessSpec {
        let kind = GridKind::new(lattice, d).unwrap();
        ProcessSpec::new(
            Scheme::Grid {
                kind,
                offset: Point2D::ORIGIN,
            },
            Region::square(side).unwrap(),
            7,
        )
        .unwrap()
    }

    #[test]
    fn delta_method_matches_hand_computation() {
        let spec = grid_spec(Lattice::Square, 25.0, 2000.0);
        let ch = ChannelParams::new(10.0, 4.0).unwrap();
        let rec = |i: u64, lambda: f64, area: f64| SampleRecord {
            index: i,
            seed: i,
            lambda,
            transmitters: 1,
            area: Some(area),
            shoelace_area: Some(area),
            failure: None,
        };
        let records = [rec(0, 1.0, 2.0), rec(1, 3.0, 4.0), rec(2, 2.0, 6.0)];
        let est = aggregate(&spec, &ch, &records).unwrap();
        assert_eq!(est.mean_lambda, 2.0);
        assert_eq!(est.mean_sigma, 4.0);
        assert_eq!(est.capacity, 8.0);
        // var(l) = 1, var(a) = 4, cov = 1
        let want = ((4.0 * 4.0 + 16.0 * 1.0 + 2.0 * 8.0 * 1.0) / 3.0f64).sqrt();
        assert!((est.stderr_capacity - want).abs() < 1e-12);
    }

    #[test]
    fn too_many_failures_abort() {
        let spec = grid_spec(Lattice::Square, 25.0, 2000.0);
        let ch = ChannelParams::new(10.0, 4.0).unwrap();
        let mut records: Vec<SampleRecord> = (0..10)
            .map(|i| SampleRecord {
                index: i,
                seed: i,
                lambda: 1.0,
                transmitters: 1,
                area: Some(1.0),
                shoelace_area: Some(1.0),
                failure: None,
            })
            .collect();
        records[0].area = None;
        let est = aggregate(&spec, &ch, &records).unwrap();
        assert_eq!(est.failures, 1);
        assert_eq!(est.samples, 10);
        records[1].area = None;
        assert!(matches!(
            aggregate(&spec, &ch, &records),
            Err(Error::FailureRate { failures: 2, .. })
        ));
    }

    #[test]
    fn grid_samples_agree_under_random_offsets() {
        let ch = ChannelParams::new(10.0, 4.0).unwrap();
        let spec = grid_spec(Lattice::Triangular, 5.0, 400.0);
        let trace = TraceConfig::for_spacing(5.0);
        let records = run_samples(&spec, &ch, 4, &trace, Selection::CentralUniform).unwrap();
        let areas: Vec<f64> = records.iter().map(|r| r.area.unwrap()).collect();
        for a in &areas {
            assert!((a - areas[0]).abs() / areas[0] < 1e-3, "{areas:?}");
        }
        let est = aggregate(&spec, &ch, &records).unwrap();
        assert!((est.capacity - 0.3494).abs() < 2e-3, "{}", est.capacity);
    }

    #[test]
    fn small_regions_are_refused() {
        let ch = ChannelParams::new(10.0, 4.0).unwrap();
        let spec = grid_spec(Lattice::Square, 25.0, 1000.0);
        assert!(matches!(
            estimate_capacity(&spec, &ch, 1, &TraceConfig::default()),
            Err(Error::InvalidParameter(_))
        ));
        assert!(estimate_en_direct(&spec, &ch, 1, 1).is_err());
    }

    #[test]
    fn decodable_count_by_brute_force() {
        let set = crate::process::gen_poisson(1e-2, Region::square(200.0).unwrap(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for beta in [0.05, 0.5, 2.0] {
            let ch = ChannelParams::new(beta, 3.0).unwrap();
            for _ in 0..50 {
                let z = Point2D::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
                let brute = (0..set.len())
                    .filter(|&i| crate::model::sir_at(z, i, &set, 3.0).unwrap() >= beta)
                    .count();
                assert_eq!(decodable_count(&set, z, &ch), brute);
                if beta > 1.0 {
                    assert!(brute <= 1);
                }
            }
        }
    }

    #[test]
    fn homothety_ratios() {
        let ch = ChannelParams::new(10.0, 4.0).unwrap();
        let spec = grid_spec(Lattice::Square, 5.0, 400.0);
        let trace = TraceConfig::for_spacing(5.0);
        let same = homothety_check(&spec, &ch, 1.0, &trace).unwrap();
        assert_eq!(same.area_ratio, 1.0);
        assert_eq!(same.capacity_ratio, 1.0);
        for k in [0.5, 2.0] {
            let r = homothety_check(&spec, &ch, k, &trace).unwrap();
            assert!(r.within(1e-6), "{r:?}");
        }
    }
}
