use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Point2D, Region, TransmitterSet};

/// Fewest lattice points a region must hold.
pub const MIN_GRID_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    Square,
    /// Honeycomb: two-point basis on a triangular Bravais lattice.
    Hexagonal,
    /// Equilateral triangles.
    Triangular,
}

impl Lattice {
    pub const ALL: [Lattice; 3] = [Lattice::Square, Lattice::Hexagonal, Lattice::Triangular];

    pub fn name(&self) -> &'static str {
        match self {
            Lattice::Square => "square",
            Lattice::Hexagonal => "hexagonal",
            Lattice::Triangular => "triangular",
        }
    }

    /// Angle at the transmitter between the horizontal search ray and its
    /// nearest neighbor, for the lattices as oriented here.
    pub fn corner_angle(&self) -> f64 {
        match self {
            Lattice::Square | Lattice::Triangular => 0.0,
            Lattice::Hexagonal => PI / 6.0,
        }
    }
}

/// A regular grid with nearest-neighbor distance `spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridKind {
    pub lattice: Lattice,
    pub spacing: f64,
}

impl GridKind {
    pub fn new(lattice: Lattice, spacing: f64) -> Result<Self> {
        if spacing.is_finite() && spacing > 0.0 {
            Ok(GridKind { lattice, spacing })
        } else {
            Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing}"
            )))
        }
    }

    /// Points per unit area of the infinite lattice.
    pub fn density(&self) -> f64 {
        let d2 = self.spacing * self.spacing;
        match self.lattice {
            Lattice::Square => 1.0 / d2,
            Lattice::Triangular => 2.0 / (3f64.sqrt() * d2),
            Lattice::Hexagonal => 4.0 / (3.0 * 3f64.sqrt() * d2),
        }
    }

    /// Primitive vectors and basis offsets.
    ///
    /// Square and triangular grids have a neighbor on the +x axis. The
    /// honeycomb is oriented so the horizontal ray from a sublattice-A
    /// transmitter makes `pi / 6` with its nearest neighbor (neighbors at 30,
    /// 150 and 270 degrees).
    pub(crate) fn cell(&self) -> (Point2D, Point2D, Vec<Point2D>) {
        let d = self.spacing;
        let s3 = 3f64.sqrt();
        match self.lattice {
            Lattice::Square => (Point2D::new(d, 0.0), Point2D::new(0.0, d), vec![Point2D::ORIGIN]),
            Lattice::Triangular => (
                Point2D::new(d, 0.0),
                Point2D::new(d / 2.0, s3 * d / 2.0),
                vec![Point2D::ORIGIN],
            ),
            Lattice::Hexagonal => (
                Point2D::new(s3 * d, 0.0),
                Point2D::new(s3 * d / 2.0, 1.5 * d),
                vec![Point2D::ORIGIN, Point2D::new(s3 * d / 2.0, d / 2.0)],
            ),
        }
    }
}

/// Lattice coordinates of `p` in the basis `(a1, a2)`.
fn lattice_coords(p: Point2D, a1: Point2D, a2: Point2D) -> (f64, f64) {
    let det = a1.cross(a2);
    (p.cross(a2) / det, a1.cross(p) / det)
}

/// Reduces an offset to the fundamental cell of the lattice.
pub fn reduce_offset(kind: &GridKind, offset: Point2D) -> Point2D {
    let (a1, a2, _) = kind.cell();
    let (s, t) = lattice_coords(offset, a1, a2);
    a1 * (s - s.floor()) + a2 * (t - t.floor())
}

/// All lattice points inside `region`, translated by `offset` modulo one
/// lattice cell.
pub fn gen_grid(kind: GridKind, offset: Point2D, region: Region) -> Result<TransmitterSet> {
    if !offset.is_finite() {
        return Err(Error::InvalidParameter("non-finite grid offset".into()));
    }
    let (a1, a2, basis) = kind.cell();
    let shift = reduce_offset(&kind, offset);
    let corners = [
        Point2D::new(-region.half_width(), -region.half_height()),
        Point2D::new(region.half_width(), -region.half_height()),
        Point2D::new(-region.half_width(), region.half_height()),
        Point2D::new(region.half_width(), region.half_height()),
    ];
    let (mut smin, mut smax, mut tmin, mut tmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in corners {
        let (s, t) = lattice_coords(c - shift, a1, a2);
        smin = smin.min(s);
        smax = smax.max(s);
        tmin = tmin.min(t);
        tmax = tmax.max(t);
    }
    let (i0, i1) = (smin.floor() as i64 - 1, smax.ceil() as i64 + 1);
    let (j0, j1) = (tmin.floor() as i64 - 1, tmax.ceil() as i64 + 1);
    let span = ((i1 - i0 + 1) as f64) * ((j1 - j0 + 1) as f64) * basis.len() as f64;
    if span > 4e8 {
        return Err(Error::ResourceLimit(format!(
            "grid would enumerate {span:.3e} candidate points"
        )));
    }
    let mut points = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let base = shift + a1 * i as f64 + a2 * j as f64;
            for b in &basis {
                let p = base + *b;
                if region.contains(p) {
                    points.push(p);
                }
            }
        }
    }
    if points.len() < MIN_GRID_POINTS {
        return Err(Error::RegionTooSmall {
            found: points.len(),
            required: MIN_GRID_POINTS,
        });
    }
    Ok(TransmitterSet::from_parts(
        points,
        region,
        format!("grid:{}", kind.lattice.name()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_density(kind: GridKind, side: f64) -> f64 {
        let region = Region::square(side).unwrap();
        let set = gen_grid(kind, Point2D::ORIGIN, region).unwrap();
        set.len() as f64 / region.area()
    }

    #[test]
    fn realized_densities() {
        let side = 10_000.0;
        let sq = count_density(GridKind::new(Lattice::Square, 25.0).unwrap(), side);
        // square: 401 x 401 points on a closed 10 km square
        assert!((sq - 401.0 * 401.0 / 1e8).abs() < 1e-15);
        assert!((sq - 1.6e-3).abs() / 1.6e-3 < 0.01);

        let tri = count_density(GridKind::new(Lattice::Triangular, 25.0).unwrap(), side);
        assert!((tri - 1.848e-3).abs() / 1.848e-3 < 0.01, "{tri}");

        let hex = count_density(GridKind::new(Lattice::Hexagonal, 25.0).unwrap(), side);
        assert!((hex - 1.232e-3).abs() / 1.232e-3 < 0.01, "{hex}");
    }

    #[test]
    fn nearest_neighbor_distance_is_spacing() {
        for lattice in Lattice::ALL {
            let kind = GridKind::new(lattice, 25.0).unwrap();
            let set = gen_grid(kind, Point2D::ORIGIN, Region::square(400.0).unwrap()).unwrap();
            let center = set.nearest_to(Point2D::ORIGIN).unwrap();
            assert_eq!(set.points()[center], Point2D::ORIGIN);
            let (_, dist) = set.nearest_neighbor(center).unwrap();
            assert!((dist - 25.0).abs() < 1e-9, "{lattice:?}: {dist}");
            let ring: Vec<Point2D> = set
                .points()
                .iter()
                .copied()
                .filter(|p| (p.norm() - 25.0).abs() < 1e-6)
                .collect();
            let angle = ring.iter().map(|p| p.y.atan2(p.x).abs()).fold(f64::MAX, f64::min);
            assert!((angle - lattice.corner_angle()).abs() < 1e-9, "{lattice:?}: {angle}");
            let degree = ring.len();
            let want = match lattice {
                Lattice::Square => 4,
                Lattice::Hexagonal => 3,
                Lattice::Triangular => 6,
            };
            assert_eq!(degree, want, "{lattice:?}");
        }
    }

    #[test]
    fn small_region_is_rejected() {
        let kind = GridKind::new(Lattice::Square, 25.0).unwrap();
        let err = gen_grid(kind, Point2D::ORIGIN, Region::square(100.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RegionTooSmall { found: 25, .. }));
    }

    #[test]
    fn offset_translates_the_lattice() {
        for lattice in Lattice::ALL {
            let kind = GridKind::new(lattice, 25.0).unwrap();
            let region = Region::square(1000.0).unwrap();
            let o = Point2D::new(7.3, -3.1);
            let shifted = gen_grid(kind, o, region).unwrap();
            let base = gen_grid(kind, Point2D::ORIGIN, Region::square(1200.0).unwrap()).unwrap();
            let reduced = reduce_offset(&kind, o);
            let mut want: Vec<Point2D> = base
                .points()
                .iter()
                .map(|&p| p + reduced)
                .filter(|&p| region.contains(p))
                .collect();
            let mut got = shifted.points().to_vec();
            let key = |p: &Point2D| ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64);
            want.sort_by_key(key);
            got.sort_by_key(key);
            assert_eq!(got.len(), want.len(), "{lattice:?}");
            for (a, b) in got.iter().zip(&want) {
                assert!(a.dist(*b) < 1e-9);
            }
            // offsets differing by a lattice vector give the same grid
            let (a1, a2, _) = kind.cell();
            let again = gen_grid(kind, o + a1 * 3.0 - a2 * 2.0, region).unwrap();
            assert_eq!(again.len(), shifted.len());
        }
    }
}
