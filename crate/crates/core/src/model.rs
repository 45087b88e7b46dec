//! Geometric and channel types, plus the interference and SIR fields.
//!
//! All transmitters use unit power and background noise is zero, so every
//! power in this module is dimensionless. The SIR of transmitter `i` at `z`
//! is `|z - z_i|^-alpha / sum_{j != i} |z - z_j|^-alpha`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probe points closer than this to a transmitter are rejected.
pub const COINCIDENCE_RADIUS: f64 = 1e-9;

/// A planar location in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const ORIGIN: Point2D = Point2D { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Point2D { x, y })
        } else {
            Err(Error::InvalidParameter(format!("non-finite point ({x}, {y})")))
        }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn dist2(self, other: Point2D) -> f64 {
        (self - other).norm2()
    }

    #[inline]
    pub fn dist(self, other: Point2D) -> f64 {
        self.dist2(other).sqrt()
    }

    #[inline]
    pub fn dot(self, other: Point2D) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    #[inline]
    pub fn cross(self, other: Point2D) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Clockwise rotation by a quarter turn, `(x, y) -> (y, -x)`.
    #[inline]
    pub fn rotate_cw(self) -> Point2D {
        Point2D::new(self.y, -self.x)
    }

    pub fn rotate(self, angle: f64) -> Point2D {
        let (s, c) = angle.sin_cos();
        Point2D::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2D {
    type Output = Point2D;
    #[inline]
    fn add(self, rhs: Point2D) -> Point2D {
        Point2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2D {
    type Output = Point2D;
    #[inline]
    fn sub(self, rhs: Point2D) -> Point2D {
        Point2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2D {
    type Output = Point2D;
    #[inline]
    fn mul(self, k: f64) -> Point2D {
        Point2D::new(self.x * k, self.y * k)
    }
}

impl fmt::Display for Point2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// SIR threshold and attenuation exponent. Noise is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    beta: f64,
    alpha: f64,
}

impl ChannelParams {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "SIR threshold beta must be positive, got {beta}"
            )));
        }
        validate_alpha(alpha)?;
        Ok(ChannelParams { beta, alpha })
    }

    /// Threshold given in decibels.
    pub fn from_db(beta_db: f64, alpha: f64) -> Result<Self> {
        Self::new(10f64.powf(beta_db / 10.0), alpha)
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn noise(&self) -> f64 {
        0.0
    }

    pub fn path_loss(&self) -> PathLoss {
        PathLoss::new(self.alpha)
    }
}

/// Field evaluations are defined for any positive exponent; only the
/// channel itself requires `alpha > 2`.
fn validate_field_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "path-loss exponent must be positive, got {alpha}"
        )))
    }
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "attenuation alpha must exceed 2, got {alpha}"
        )))
    }
}

/// Axis-aligned rectangle centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    half_width: f64,
    half_height: f64,
}

impl Region {
    pub fn new(half_width: f64, half_height: f64) -> Result<Self> {
        if half_width.is_finite() && half_height.is_finite() && half_width > 0.0 && half_height > 0.0 {
            Ok(Region {
                half_width,
                half_height,
            })
        } else {
            Err(Error::InvalidParameter(format!(
                "region half extents must be positive, got {half_width} x {half_height}"
            )))
        }
    }

    /// Square region with the given side length.
    pub fn square(side: f64) -> Result<Self> {
        Self::new(side / 2.0, side / 2.0)
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn half_height(&self) -> f64 {
        self.half_height
    }

    #[inline]
    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    #[inline]
    pub fn height(&self) -> f64 {
        2.0 * self.half_height
    }

    #[inline]
    pub fn area(&self) -> f64 {
        4.0 * self.half_width * self.half_height
    }

    #[inline]
    pub fn contains(&self, p: Point2D) -> bool {
        p.x.abs() <= self.half_width && p.y.abs() <= self.half_height
    }

    /// The concentric region scaled by `k` along both axes.
    pub fn scaled(&self, k: f64) -> Result<Region> {
        Region::new(self.half_width * k, self.half_height * k)
    }
}

/// One slot's simultaneous transmitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterSet {
    points: Vec<Point2D>,
    region: Region,
    scheme_label: String,
}

impl TransmitterSet {
    /// Checks that every point is finite, inside `region`, and unique.
    pub fn new(points: Vec<Point2D>, region: Region, scheme_label: impl Into<String>) -> Result<Self> {
        for p in &points {
            if !p.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite transmitter {p}")));
            }
            if !region.contains(*p) {
                return Err(Error::InvalidParameter(format!(
                    "transmitter {p} lies outside the region"
                )));
            }
        }
        let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate transmitter location".into()));
        }
        Ok(Self::from_parts(points, region, scheme_label))
    }

    /// Generators that already guarantee the invariants use this.
    pub(crate) fn from_parts(points: Vec<Point2D>, region: Region, scheme_label: impl Into<String>) -> Self {
        TransmitterSet {
            points,
            region,
            scheme_label: scheme_label.into(),
        }
    }

    #[inline]
    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn region(&self) -> Region {
        self.region
    }

    pub fn scheme_label(&self) -> &str {
        &self.scheme_label
    }

    /// Index of the transmitter closest to `p` (first one on ties).
    pub fn nearest_to(&self, p: Point2D) -> Option<usize> {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist2(p).total_cmp(&b.1.dist2(p)))
            .map(|(i, _)| i)
    }

    /// Index and distance of the transmitter closest to transmitter `i`.
    pub fn nearest_neighbor(&self, i: usize) -> Result<(usize, f64)> {
        let zi = self.point(i)?;
        self.points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .min_by(|a, b| a.1.dist2(zi).total_cmp(&b.1.dist2(zi)))
            .map(|(j, p)| (j, p.dist(zi)))
            .ok_or_else(|| Error::InvalidParameter("set has a single transmitter".into()))
    }

    pub fn point(&self, i: usize) -> Result<Point2D> {
        self.points.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.points.len(),
        })
    }

    /// Applies `f` to every point; the region is rescaled by `region_scale`.
    pub fn map_points(&self, region_scale: f64, f: impl Fn(Point2D) -> Point2D) -> Result<TransmitterSet> {
        let region = self.region.scaled(region_scale)?;
        TransmitterSet::new(
            self.points.iter().map(|&p| f(p)).collect(),
            region,
            self.scheme_label.clone(),
        )
    }

    /// Homothety about the origin.
    pub fn scaled(&self, k: f64) -> Result<TransmitterSet> {
        self.map_points(k, |p| p * k)
    }
}

/// `r^-alpha` evaluated from `r^2`, specialized for integer and
/// half-integer `alpha / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    alpha: f64,
    kind: PowKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PowKind {
    Even(i32),
    Odd(i32),
    General(f64),
}

impl PathLoss {
    pub fn new(alpha: f64) -> Self {
        let kind = if alpha.fract() == 0.0 && alpha <= 512.0 {
            let a = alpha as i32;
            if a % 2 == 0 {
                PowKind::Even(a / 2)
            } else {
                PowKind::Odd(a / 2)
            }
        } else {
            PowKind::General(-alpha / 2.0)
        };
        PathLoss { alpha, kind }
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `r^-alpha` given `r^2`.
    #[inline(always)]
    pub fn from_r2(&self, r2: f64) -> f64 {
        match self.kind {
            PowKind::Even(k) => (1.0 / r2).powi(k),
            PowKind::Odd(k) => {
                let inv = 1.0 / r2;
                inv.powi(k) * inv.sqrt()
            }
            PowKind::General(e) => r2.powf(e),
        }
    }

    /// `r^-alpha` given `r`.
    #[inline]
    pub fn at(&self, r: f64) -> f64 {
        self.from_r2(r * r)
    }

    /// Power sums over `pts` at `z`, with the exponent dispatched once.
    pub(crate) fn sums(&self, pts: &[Point2D], z: Point2D) -> PowerSums {
        match self.kind {
            PowKind::Even(2) => power_sums(pts, z, |inv, _| inv * inv),
            PowKind::Even(10) => power_sums(pts, z, |inv, _| {
                let i2 = inv * inv;
                let i4 = i2 * i2;
                i4 * i4 * i2
            }),
            PowKind::Even(25) => power_sums(pts, z, |inv, _| {
                let i2 = inv * inv;
                let i4 = i2 * i2;
                let i8 = i4 * i4;
                let i16 = i8 * i8;
                i16 * i8 * inv
            }),
            PowKind::Even(k) => power_sums(pts, z, |inv, _| inv.powi(k)),
            PowKind::Odd(k) => power_sums(pts, z, |inv, _| inv.powi(k) * inv.sqrt()),
            PowKind::General(e) => power_sums(pts, z, |_, r2| r2.powf(e)),
        }
    }
}

/// Own-signal and interference terms with their gradients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub signal: f64,
    pub interference: f64,
    pub signal_grad: Point2D,
    pub interference_grad: Point2D,
}

impl FieldSample {
    /// SIR, `+inf` when there is no interferer.
    #[inline]
    pub fn sir(&self) -> f64 {
        if self.interference > 0.0 {
            self.signal / self.interference
        } else {
            f64::INFINITY
        }
    }

    /// Quotient-rule gradient of the SIR; zero without interferers.
    #[inline]
    pub fn sir_grad(&self) -> Point2D {
        let v = self.interference;
        if v > 0.0 {
            (self.signal_grad * v - self.interference_grad * self.signal) * (1.0 / (v * v))
        } else {
            Point2D::ORIGIN
        }
    }
}

/// `sum w`, `sum w (z - p) / r^2` and the smallest `r^2` over `pts`, with
/// `w = r^-alpha`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowerSums {
    pub v: f64,
    pub gx: f64,
    pub gy: f64,
    pub min_r2: f64,
}

impl PowerSums {
    pub(crate) fn merge(self, o: PowerSums) -> PowerSums {
        PowerSums {
            v: self.v + o.v,
            gx: self.gx + o.gx,
            gy: self.gy + o.gy,
            min_r2: self.min_r2.min(o.min_r2),
        }
    }
}

/// Four independent lanes so the loop vectorizes; the summation order is
/// fixed, so results do not depend on the target's vector width.
#[inline(always)]
fn power_sums(pts: &[Point2D], z: Point2D, w_of: impl Fn(f64, f64) -> f64) -> PowerSums {
    let mut v = [0.0; 4];
    let mut gx = [0.0; 4];
    let mut gy = [0.0; 4];
    let mut m = [f64::INFINITY; 4];
    let chunks = pts.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for l in 0..4 {
            let dx = z.x - c[l].x;
            let dy = z.y - c[l].y;
            let r2 = dx * dx + dy * dy;
            let inv = 1.0 / r2;
            let w = w_of(inv, r2);
            let s = w * inv;
            v[l] += w;
            gx[l] += s * dx;
            gy[l] += s * dy;
            m[l] = m[l].min(r2);
        }
    }
    for (l, p) in rest.iter().enumerate() {
        let dx = z.x - p.x;
        let dy = z.y - p.y;
        let r2 = dx * dx + dy * dy;
        let inv = 1.0 / r2;
        let w = w_of(inv, r2);
        let s = w * inv;
        v[l] += w;
        gx[l] += s * dx;
        gy[l] += s * dy;
        m[l] = m[l].min(r2);
    }
    PowerSums {
        v: (v[0] + v[1]) + (v[2] + v[3]),
        gx: (gx[0] + gx[1]) + (gx[2] + gx[3]),
        gy: (gy[0] + gy[1]) + (gy[2] + gy[3]),
        min_r2: m[0].min(m[1]).min(m[2].min(m[3])),
    }
}

/// Evaluates signal of transmitter `i` and the interference of all others,
/// with gradients, in one pass over the set.
pub fn field_sample(z: Point2D, i: usize, set: &TransmitterSet, loss: PathLoss) -> Result<FieldSample> {
    let pts = set.points();
    if i >= pts.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: pts.len(),
        });
    }
    let guard2 = COINCIDENCE_RADIUS * COINCIDENCE_RADIUS;
    let sums = loss.sums(&pts[..i], z).merge(loss.sums(&pts[i + 1..], z));
    let PowerSums { v, gx, gy, min_r2 } = sums;
    let d = z - pts[i];
    let r2 = d.norm2();
    if r2.min(min_r2) < guard2 {
        let index = pts.iter().position(|p| p.dist2(z) < guard2).unwrap_or(i);
        return Err(Error::CoincidentPoint {
            index,
            distance: pts[index].dist(z),
        });
    }
    let a = loss.alpha();
    let u = loss.from_r2(r2);
    Ok(FieldSample {
        signal: u,
        interference: v,
        signal_grad: d * (-a * u / r2),
        interference_grad: Point2D::new(-a * gx, -a * gy),
    })
}

/// `W(z, S) = sum_j |z - z_j|^-alpha`.
pub fn interference_field(z: Point2D, set: &TransmitterSet, alpha: f64) -> Result<f64> {
    validate_field_alpha(alpha)?;
    let loss = PathLoss::new(alpha);
    let guard2 = COINCIDENCE_RADIUS * COINCIDENCE_RADIUS;
    let mut total = 0.0;
    for (index, p) in set.points().iter().enumerate() {
        let r2 = p.dist2(z);
        if r2 < guard2 {
            return Err(Error::CoincidentPoint {
                index,
                distance: r2.sqrt(),
            });
        }
        total += loss.from_r2(r2);
    }
    Ok(total)
}

/// SIR of transmitter `i` at `z`; `f64::INFINITY` for a lone transmitter.
pub fn sir_at(z: Point2D, i: usize, set: &TransmitterSet, alpha: f64) -> Result<f64> {
    validate_field_alpha(alpha)?;
    let pts = set.points();
    let zi = set.point(i)?;
    let loss = PathLoss::new(alpha);
    let guard2 = COINCIDENCE_RADIUS * COINCIDENCE_RADIUS;
    let r2 = zi.dist2(z);
    if r2 < guard2 {
        return Err(Error::CoincidentPoint {
            index: i,
            distance: r2.sqrt(),
        });
    }
    let signal = loss.from_r2(r2);
    let mut interference = 0.0;
    for (j, p) in pts.iter().enumerate() {
        if j == i {
            continue;
        }
        let r2 = p.dist2(z);
        if r2 < guard2 {
            return Err(Error::CoincidentPoint {
                index: j,
                distance: r2.sqrt(),
            });
        }
        interference += loss.from_r2(r2);
    }
    if pts.len() == 1 {
        return Ok(f64::INFINITY);
    }
    Ok(signal / interference)
}

/// Analytic gradient of [`sir_at`] with respect to `z`, per meter.
pub fn sir_gradient(z: Point2D, i: usize, set: &TransmitterSet, alpha: f64) -> Result<Point2D> {
    validate_field_alpha(alpha)?;
    Ok(field_sample(z, i, set, PathLoss::new(alpha))?.sir_grad())
}
