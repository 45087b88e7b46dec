//! Random sequential adsorption under distance and carrier-sense rules.
//!
//! Candidates are drawn uniformly over the region one at a time; each is
//! kept iff the exclusion rule admits it given the points kept so far.
//! Drawing from a continuum is the infinite-node-density limit of picking
//! nodes in random order from a finite population.
//!
//! Generation runs in two phases. The first throws plain darts until
//! `consecutive_rejections` candidates in a row have failed. The second
//! (optional; default for coloring) drives the set to true saturation: the region
//! is tiled with cells, cells that the rule provably blocks are discarded,
//! darts are thrown into the surviving cells and the survivors are refined.
//! Darts are uniform over a superset of the still-admissible area, so the
//! accepted sequence has the same law as plain dart throwing run forever.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{PathLoss, Point2D, Region};

/// When to stop adding points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    /// Phase one ends after this many rejections in a row.
    pub consecutive_rejections: usize,
    /// Run the cell-refinement phase until nothing admissible is left.
    pub fill_voids: bool,
}

impl Saturation {
    /// Carrier sensing stops on the rejection streak alone: exact void
    /// filling there costs tens of times more than generation for well
    /// under one percent more points.
    pub const CARRIER_SENSE: Saturation = Saturation {
        consecutive_rejections: 20_000,
        fill_voids: false,
    };
}

impl Default for Saturation {
    fn default() -> Self {
        Saturation {
            consecutive_rejections: 20_000,
            fill_voids: true,
        }
    }
}

/// Refinement stops once cells are this many halvings below the top size.
const MAX_REFINE_LEVELS: u32 = 24;

/// One candidate decision, for replay audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub candidate: Point2D,
    pub accepted: bool,
}

pub(crate) trait ExclusionRule {
    fn admits(&self, p: Point2D) -> bool;
    fn insert(&mut self, p: Point2D);
    /// True only if no point of the rectangle can be admitted.
    fn blocks_cell(&self, lo: Point2D, hi: Point2D) -> bool;
    fn top_cell_size(&self) -> f64;
    fn into_points(self) -> Vec<Point2D>;
}

/// Uniform bucket grid over the region.
#[derive(Debug, Clone)]
pub(crate) struct CellIndex {
    side: f64,
    x0: f64,
    y0: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    points: Vec<Point2D>,
}

impl CellIndex {
    pub(crate) fn new(region: Region, side: f64) -> Self {
        let nx = ((region.width() / side).ceil() as usize).max(1);
        let ny = ((region.height() / side).ceil() as usize).max(1);
        CellIndex {
            side,
            x0: -region.half_width(),
            y0: -region.half_height(),
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
            points: Vec::new(),
        }
    }

    #[inline]
    fn cell_of(&self, p: Point2D) -> (isize, isize) {
        let ix = ((p.x - self.x0) / self.side).floor() as isize;
        let iy = ((p.y - self.y0) / self.side).floor() as isize;
        (ix.clamp(0, self.nx as isize - 1), iy.clamp(0, self.ny as isize - 1))
    }

    pub(crate) fn insert(&mut self, p: Point2D) {
        let (ix, iy) = self.cell_of(p);
        self.buckets[iy as usize * self.nx + ix as usize].push(self.points.len() as u32);
        self.points.push(p);
    }

    #[inline]
    fn bucket(&self, ix: isize, iy: isize) -> &[u32] {
        if ix < 0 || iy < 0 || ix >= self.nx as isize || iy >= self.ny as isize {
            &[]
        } else {
            &self.buckets[iy as usize * self.nx + ix as usize]
        }
    }

    /// Visits points in cells overlapping the rectangle grown by `margin`.
    fn for_each_near(&self, lo: Point2D, hi: Point2D, margin: f64, mut f: impl FnMut(Point2D) -> bool) {
        let (ax, ay) = self.cell_of(lo - Point2D::new(margin, margin));
        let (bx, by) = self.cell_of(hi + Point2D::new(margin, margin));
        for iy in ay..=by {
            for ix in ax..=bx {
                for &k in self.bucket(ix, iy) {
                    if !f(self.points[k as usize]) {
                        return;
                    }
                }
            }
        }
    }

    /// Points in the cells at Chebyshev ring `k` around cell `(cx, cy)`.
    fn for_each_in_ring(&self, cx: isize, cy: isize, k: isize, mut f: impl FnMut(Point2D)) {
        let mut visit = |ix: isize, iy: isize| {
            for &i in self.bucket(ix, iy) {
                f(self.points[i as usize]);
            }
        };
        if k == 0 {
            visit(cx, cy);
            return;
        }
        for ix in (cx - k)..=(cx + k) {
            visit(ix, cy - k);
            visit(ix, cy + k);
        }
        for iy in (cy - k + 1)..=(cy + k - 1) {
            visit(cx - k, iy);
            visit(cx + k, iy);
        }
    }

    fn max_ring(&self) -> isize {
        self.nx.max(self.ny) as isize
    }
}

#[inline]
fn max_corner_dist2(lo: Point2D, hi: Point2D, p: Point2D) -> f64 {
    let dx = (p.x - lo.x).abs().max((p.x - hi.x).abs());
    let dy = (p.y - lo.y).abs().max((p.y - hi.y).abs());
    dx * dx + dy * dy
}

/// Keeps points pairwise at least `d` apart.
pub(crate) struct DistanceRule {
    d2: f64,
    d: f64,
    index: CellIndex,
}

impl DistanceRule {
    pub(crate) fn new(region: Region, d: f64) -> Self {
        DistanceRule {
            d2: d * d,
            d,
            index: CellIndex::new(region, d),
        }
    }
}

impl ExclusionRule for DistanceRule {
    fn admits(&self, p: Point2D) -> bool {
        let mut ok = true;
        self.index.for_each_near(p, p, self.d, |q| {
            if q.dist2(p) < self.d2 {
                ok = false;
            }
            ok
        });
        ok
    }

    fn insert(&mut self, p: Point2D) {
        self.index.insert(p);
    }

    fn blocks_cell(&self, lo: Point2D, hi: Point2D) -> bool {
        let mut blocked = false;
        self.index.for_each_near(lo, hi, self.d, |q| {
            if max_corner_dist2(lo, hi, q) < self.d2 {
                blocked = true;
            }
            !blocked
        });
        blocked
    }

    fn top_cell_size(&self) -> f64 {
        self.d / std::f64::consts::SQRT_2
    }

    fn into_points(self) -> Vec<Point2D> {
        self.index.points
    }
}

/// Point counts of a [`CellIndex`] aggregated over 2x2, 4x4, ... blocks of
/// buckets, for bounding sums over far-away points without visiting them.
#[derive(Debug, Clone)]
struct CountPyramid {
    /// `levels[l]` has `dims[l]` entries; level 0 mirrors the buckets.
    levels: Vec<Vec<u32>>,
    dims: Vec<(usize, usize)>,
}

impl CountPyramid {
    fn new(nx: usize, ny: usize) -> Self {
        let mut dims = vec![(nx, ny)];
        while dims.last().is_some_and(|&(a, b)| a > 1 || b > 1) {
            let (a, b) = *dims.last().unwrap();
            dims.push((a.div_ceil(2), b.div_ceil(2)));
        }
        CountPyramid {
            levels: dims.iter().map(|&(a, b)| vec![0; a * b]).collect(),
            dims,
        }
    }

    fn insert(&mut self, ix: usize, iy: usize) {
        for (l, counts) in self.levels.iter_mut().enumerate() {
            let (bx, by) = (ix >> l, iy >> l);
            counts[by * self.dims[l].0 + bx] += 1;
        }
    }

    fn count(&self, l: usize, bx: usize, by: usize) -> u32 {
        let (nx, ny) = self.dims[l];
        if bx < nx && by < ny {
            self.levels[l][by * nx + bx]
        } else {
            0
        }
    }

    fn top(&self) -> usize {
        self.levels.len() - 1
    }
}

/// One pending block in a bounded-sum query.
struct Pending {
    gap: f64,
    level: usize,
    bx: usize,
    by: usize,
    lower: f64,
    upper: f64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.gap.total_cmp(&other.gap).is_eq()
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.gap.total_cmp(&other.gap)
    }
}

/// Admits a point iff the summed power it senses from the points already
/// kept is below `theta`.
///
/// The sum is never truncated. Nearby points are visited ring by ring; if
/// that does not settle the comparison, blocks of far points enter with
/// lower and upper bounds on their total, and the block with the widest
/// bound is split (down to exact per-point terms) until the comparison
/// with `theta` is certain.
pub(crate) struct CarrierSenseRule {
    theta: f64,
    loss: PathLoss,
    /// Single-interferer exclusion radius `theta^(-1/alpha)`; kept points
    /// are pairwise farther apart than this.
    radius: f64,
    index: CellIndex,
    pyramid: CountPyramid,
}

#[inline]
fn min_box_dist2(lo: Point2D, hi: Point2D, p: Point2D) -> f64 {
    let dx = (lo.x - p.x).max(p.x - hi.x).max(0.0);
    let dy = (lo.y - p.y).max(p.y - hi.y).max(0.0);
    dx * dx + dy * dy
}

/// Largest distance between a point of box `a` and a point of box `b`.
#[inline]
fn max_box_box_dist2(alo: Point2D, ahi: Point2D, blo: Point2D, bhi: Point2D) -> f64 {
    let dx = (ahi.x - blo.x).abs().max((bhi.x - alo.x).abs());
    let dy = (ahi.y - blo.y).abs().max((bhi.y - alo.y).abs());
    dx * dx + dy * dy
}

impl CarrierSenseRule {
    pub(crate) fn new(region: Region, theta: f64, alpha: f64) -> Self {
        let radius = theta.powf(-1.0 / alpha);
        let index = CellIndex::new(region, radius);
        let pyramid = CountPyramid::new(index.nx, index.ny);
        CarrierSenseRule {
            theta,
            loss: PathLoss::new(alpha),
            radius,
            index,
            pyramid,
        }
    }

    /// Upper bound on `sum |p - q|^-alpha` over kept points `q` at distance
    /// at least `r > radius` from `p`.
    ///
    /// Kept points are more than `radius` apart, so disks of radius
    /// `radius / 2` around them are disjoint; each term is bounded by the
    /// average of `(|x| - radius/2)^-alpha` over its disk.
    pub(crate) fn tail_bound(&self, r: f64) -> f64 {
        let a = self.loss.alpha();
        let h = self.radius * (1.0 - 1e-9);
        let u = r - h;
        if u <= 0.0 {
            return f64::INFINITY;
        }
        8.0 / (h * h) * (u.powf(2.0 - a) / (a - 2.0) + 0.5 * h * u.powf(1.0 - a) / (a - 1.0))
    }

    /// Exact interference at `p` from the kept points.
    #[cfg(test)]
    fn interference(&self, p: Point2D) -> f64 {
        self.index.points.iter().map(|q| self.loss.from_r2(q.dist2(p))).sum()
    }

    fn block_box(&self, level: usize, bx: usize, by: usize) -> (Point2D, Point2D) {
        let s = self.index.side * (1u64 << level) as f64;
        let lo = Point2D::new(self.index.x0 + bx as f64 * s, self.index.y0 + by as f64 * s);
        (lo, lo + Point2D::new(s, s))
    }

    /// Decides `sum_q term(q) >= theta` over all kept points, where
    /// `bounds(lo, hi)` brackets `term` for any point in a block. Gives up
    /// with `None` after `budget` block splits.
    fn reaches_theta(
        &self,
        bounds: impl Fn(Point2D, Point2D) -> (f64, f64),
        term: impl Fn(Point2D) -> f64,
        budget: usize,
    ) -> Option<bool> {
        let mut heap = std::collections::BinaryHeap::new();
        let (mut lower, mut upper, mut unbounded) = (0.0, 0.0, 0usize);
        let push = |heap: &mut std::collections::BinaryHeap<Pending>,
                    lower: &mut f64,
                    upper: &mut f64,
                    unbounded: &mut usize,
                    level: usize,
                    bx: usize,
                    by: usize| {
            let n = self.pyramid.count(level, bx, by);
            if n == 0 {
                return;
            }
            let (lo, hi) = self.block_box(level, bx, by);
            let (l, u) = bounds(lo, hi);
            let (l, u) = (l * n as f64, u * n as f64);
            *lower += l;
            if u.is_finite() {
                *upper += u;
            } else {
                *unbounded += 1;
            }
            heap.push(Pending {
                gap: u - l,
                level,
                bx,
                by,
                lower: l,
                upper: u,
            });
        };
        let top = self.pyramid.top();
        push(&mut heap, &mut lower, &mut upper, &mut unbounded, top, 0, 0);
        let mut splits = 0;
        while let Some(b) = heap.pop() {
            if lower >= self.theta {
                return Some(true);
            }
            if unbounded == 0 && upper < self.theta {
                return Some(false);
            }
            if splits == budget {
                return None;
            }
            splits += 1;
            lower -= b.lower;
            if b.upper.is_finite() {
                upper -= b.upper;
            } else {
                unbounded -= 1;
            }
            if b.level == 0 {
                let exact: f64 = self
                    .index
                    .bucket(b.bx as isize, b.by as isize)
                    .iter()
                    .map(|&k| term(self.index.points[k as usize]))
                    .sum();
                lower += exact;
                upper += exact;
            } else {
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (cx, cy) = (2 * b.bx + dx, 2 * b.by + dy);
                    push(&mut heap, &mut lower, &mut upper, &mut unbounded, b.level - 1, cx, cy);
                }
            }
        }
        Some(lower >= self.theta)
    }
}

/// Rings searched before falling back to block bounds.
const RING_LIMIT: isize = 3;

impl ExclusionRule for CarrierSenseRule {
    fn admits(&self, p: Point2D) -> bool {
        let (cx, cy) = self.index.cell_of(p);
        let mut sum = 0.0;
        for k in 0..=RING_LIMIT.min(self.index.max_ring()) {
            self.index.for_each_in_ring(cx, cy, k, |q| {
                sum += self.loss.from_r2(q.dist2(p));
            });
            if sum >= self.theta {
                return false;
            }
            // anything beyond ring k is at least k cells away
            if k >= 2 && sum + self.tail_bound(k as f64 * self.index.side) < self.theta {
                return true;
            }
        }
        let loss = self.loss;
        !self
            .reaches_theta(
                |lo, hi| {
                    let far = max_corner_dist2(lo, hi, p);
                    let near = min_box_dist2(lo, hi, p);
                    (
                        loss.from_r2(far),
                        if near > 0.0 { loss.from_r2(near) } else { f64::INFINITY },
                    )
                },
                |q| loss.from_r2(q.dist2(p)),
                usize::MAX,
            )
            .expect("unbounded search always decides")
    }

    fn insert(&mut self, p: Point2D) {
        let (ix, iy) = self.index.cell_of(p);
        self.pyramid.insert(ix as usize, iy as usize);
        self.index.insert(p);
    }

    fn blocks_cell(&self, lo: Point2D, hi: Point2D) -> bool {
        // lower bound on the power sensed anywhere in the cell: every kept
        // point at its farthest corner distance
        let loss = self.loss;
        let mut near = 0.0;
        self.index.for_each_near(lo, hi, 2.0 * self.radius, |q| {
            near += loss.from_r2(max_corner_dist2(lo, hi, q));
            near < self.theta
        });
        if near >= self.theta {
            return true;
        }
        let center = (lo + hi) * 0.5;
        self.reaches_theta(
            |blo, bhi| {
                let far = max_box_box_dist2(lo, hi, blo, bhi);
                // a point's farthest corner is no closer than the center is
                let near = min_box_dist2(blo, bhi, center);
                (
                    loss.from_r2(far),
                    if near > 0.0 { loss.from_r2(near) } else { f64::INFINITY },
                )
            },
            |q| loss.from_r2(max_corner_dist2(lo, hi, q)),
            usize::MAX,
        )
        .expect("unbounded search always decides")
    }

    fn top_cell_size(&self) -> f64 {
        self.radius / std::f64::consts::SQRT_2
    }

    fn into_points(self) -> Vec<Point2D> {
        self.index.points
    }
}

#[inline]
fn uniform_in(rng: &mut impl Rng, lo: Point2D, hi: Point2D) -> Point2D {
    Point2D::new(
        lo.x + (hi.x - lo.x) * rng.random::<f64>(),
        lo.y + (hi.y - lo.y) * rng.random::<f64>(),
    )
}

/// Runs both phases and returns the kept points in acceptance order.
pub(crate) fn adsorb<R: ExclusionRule>(
    mut rule: R,
    region: Region,
    saturation: &Saturation,
    rng: &mut impl Rng,
    mut audit: Option<&mut Vec<AuditEntry>>,
) -> Vec<Point2D> {
    let lo = Point2D::new(-region.half_width(), -region.half_height());
    let hi = Point2D::new(region.half_width(), region.half_height());

    let record = |rule: &mut R, p: Point2D, accepted: bool, audit: &mut Option<&mut Vec<AuditEntry>>| {
        if accepted {
            rule.insert(p);
        }
        if let Some(log) = audit.as_deref_mut() {
            log.push(AuditEntry { candidate: p, accepted });
        }
        accepted
    };

    let mut streak = 0usize;
    while streak < saturation.consecutive_rejections {
        let p = uniform_in(rng, lo, hi);
        let accepted = rule.admits(p);
        if record(&mut rule, p, accepted, &mut audit) {
            streak = 0;
        } else {
            streak += 1;
        }
    }

    if saturation.fill_voids {
        let top = rule.top_cell_size();
        let nx = (region.width() / top).ceil() as u64;
        let ny = (region.height() / top).ceil() as u64;
        let cell_box = |level: u32, ix: u64, iy: u64| {
            let s = top / (1u64 << level) as f64;
            let a = Point2D::new(lo.x + ix as f64 * s, lo.y + iy as f64 * s);
            (a, a + Point2D::new(s, s))
        };
        let mut cells: Vec<(u64, u64)> = (0..ny)
            .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| {
                let (a, b) = cell_box(0, ix, iy);
                !rule.blocks_cell(a, b)
            })
            .collect();
        let mut level = 0u32;
        while !cells.is_empty() && level <= MAX_REFINE_LEVELS {
            for _ in 0..cells.len() {
                let (ix, iy) = cells[rng.random_range(0..cells.len())];
                let (a, b) = cell_box(level, ix, iy);
                let p = uniform_in(rng, a, b);
                if region.contains(p) {
                    let accepted = rule.admits(p);
                    record(&mut rule, p, accepted, &mut audit);
                }
            }
            let mut next = Vec::with_capacity(cells.len());
            for &(ix, iy) in &cells {
                for (cx, cy) in [
                    (2 * ix, 2 * iy),
                    (2 * ix + 1, 2 * iy),
                    (2 * ix, 2 * iy + 1),
                    (2 * ix + 1, 2 * iy + 1),
                ] {
                    let (a, b) = cell_box(level + 1, cx, cy);
                    if a.x > hi.x || a.y > hi.y {
                        continue;
                    }
                    if !rule.blocks_cell(a, b) {
                        next.push((cx, cy));
                    }
                }
            }
            cells = next;
            level += 1;
        }
    }
    rule.into_points()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tail_bound_dominates_dense_packing() {
        // a triangular packing at the minimum separation is the densest
        // arrangement the bound must cover
        let region = Region::square(4000.0).unwrap();
        let rule = CarrierSenseRule::new(region, 1e-5, 4.0);
        let h = rule.radius * 1.000001;
        let (a1, a2) = (Point2D::new(h, 0.0), Point2D::new(h / 2.0, h * 3f64.sqrt() / 2.0));
        for r_cells in [2.0, 3.0, 5.0, 10.0] {
            let r = r_cells * rule.radius;
            let mut sum = 0.0;
            for i in -200i32..=200 {
                for j in -200i32..=200 {
                    let q = a1 * i as f64 + a2 * j as f64 + Point2D::new(0.3, 0.1) * h;
                    let d = q.norm();
                    if d >= r {
                        sum += d.powf(-4.0);
                    }
                }
            }
            let bound = rule.tail_bound(r);
            assert!(sum <= bound, "r={r}: sum {sum} > bound {bound}");
        }
    }

    #[test]
    fn ring_search_agrees_with_brute_force() {
        let region = Region::square(600.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rule = CarrierSenseRule::new(region, 1e-5, 4.0);
        let lo = Point2D::new(-300.0, -300.0);
        let hi = Point2D::new(300.0, 300.0);
        let mut checked = 0;
        for _ in 0..20_000 {
            let p = uniform_in(&mut rng, lo, hi);
            let brute = rule.interference(p) < rule.theta;
            assert_eq!(rule.admits(p), brute);
            if brute {
                rule.insert(p);
            }
            checked += 1;
        }
        assert_eq!(checked, 20_000);
        assert!(rule.index.points.len() > 20);
    }

    #[test]
    fn blocked_cells_hold_no_admissible_point() {
        let region = Region::square(300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rule = DistanceRule::new(region, 25.0);
        let sat = Saturation {
            consecutive_rejections: 2000,
            fill_voids: false,
        };
        let pts = adsorb(DistanceRule::new(region, 25.0), region, &sat, &mut rng, None);
        for p in pts {
            rule.insert(p);
        }
        let s = 4.0;
        for iy in 0..75 {
            for ix in 0..75 {
                let a = Point2D::new(-150.0 + ix as f64 * s, -150.0 + iy as f64 * s);
                let b = a + Point2D::new(s, s);
                if rule.blocks_cell(a, b) {
                    for _ in 0..20 {
                        assert!(!rule.admits(uniform_in(&mut rng, a, b)));
                    }
                }
            }
        }
    }

    #[test]
    fn carrier_sense_blocked_cells_hold_no_admissible_point() {
        let region = Region::square(400.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rule = CarrierSenseRule::new(region, 25f64.powi(-4), 4.0);
        let pts = adsorb(
            CarrierSenseRule::new(region, 25f64.powi(-4), 4.0),
            region,
            &Saturation::CARRIER_SENSE,
            &mut rng,
            None,
        );
        for p in pts {
            rule.insert(p);
        }
        let mut blocked = 0;
        for s in [2.0, 8.0] {
            let n = (400.0 / s) as usize;
            for iy in 0..n {
                for ix in 0..n {
                    let a = Point2D::new(-200.0 + ix as f64 * s, -200.0 + iy as f64 * s);
                    let b = a + Point2D::new(s, s);
                    if rule.blocks_cell(a, b) {
                        blocked += 1;
                        for _ in 0..5 {
                            let p = uniform_in(&mut rng, a, b);
                            assert!(rule.interference(p) >= rule.theta);
                        }
                    }
                }
            }
        }
        assert!(blocked > 1000);
    }

    #[test]
    fn carrier_sense_void_filling_saturates() {
        let region = Region::square(300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rule = CarrierSenseRule::new(region, 25f64.powi(-4), 4.0);
        let pts = adsorb(
            CarrierSenseRule::new(region, 25f64.powi(-4), 4.0),
            region,
            &Saturation::default(),
            &mut rng,
            None,
        );
        for p in pts {
            rule.insert(p);
        }
        let (lo, hi) = (Point2D::new(-150.0, -150.0), Point2D::new(150.0, 150.0));
        for _ in 0..20_000 {
            let p = uniform_in(&mut rng, lo, hi);
            assert!(rule.interference(p) >= rule.theta);
        }
    }
}
