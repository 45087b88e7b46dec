//! Reception areas by level-set tracing.
//!
//! The boundary of transmitter `i`'s reception area is the closed curve
//! `S_i(z) = beta`. A first boundary point is located on a ray from `z_i`
//! (single-interferer law-of-cosines guess, then Newton), after which the
//! curve is followed by steps of length `dt` along `J grad S / |grad S|`,
//! `J` the clockwise quarter turn. The area is accumulated as
//! `-1/2 sum (z_k - z_i) . n_k dt` with `n_k` the unit gradient, and
//! cross-checked with the shoelace area of the vertex polygon.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    field_sample, ChannelParams, FieldSample, PathLoss, Point2D, PowerSums, TransmitterSet, COINCIDENCE_RADIUS,
};

/// Gradients smaller than this stop the tracer.
pub const GRADIENT_FLOOR: f64 = 1e-15;

/// Neighbor spacing at which the default step is 0.01 m.
pub const REFERENCE_SPACING: f64 = 25.0;

/// Which ray the boundary search follows out of the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartRay {
    /// Toward the nearest neighbor (corner angle 0).
    TowardNearest,
    /// Along +x; the first guess uses the angle between +x and the nearest
    /// neighbor.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Step length in meters.
    pub dt: f64,
    pub max_steps: usize,
    /// Relative SIR tolerance for the boundary start point.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// The loop closes once a vertex comes back this close to the start.
    pub closure_radius: f64,
    /// Steps before closure is checked.
    pub min_steps: usize,
    /// Newton corrections toward the level set after each step; 0 gives
    /// the bare tangent iteration. Each costs one field evaluation, the
    /// first shared with the step itself.
    pub projection_steps: usize,
    pub start_ray: StartRay,
    /// Interpolated far field; `None` sums every transmitter at every step.
    pub far_field: Option<FarFieldConfig>,
}

/// Splits the interference seen along a trace into near transmitters,
/// summed exactly at every step, and all others, whose power and gradient
/// are interpolated on a square around the traced transmitter from exact
/// sums at tensor Chebyshev nodes. Steps outside the square are evaluated
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldConfig {
    /// Polynomial degree per axis.
    pub degree: usize,
    /// Half-width of the square, in nearest-neighbor distances.
    pub box_factor: f64,
    /// Near radius, in half-widths of the square.
    pub near_factor: f64,
}

impl Default for FarFieldConfig {
    fn default() -> Self {
        FarFieldConfig {
            degree: 24,
            box_factor: 1.5,
            near_factor: 4.0,
        }
    }
}

impl TraceConfig {
    /// Defaults for a grid or process whose neighbor spacing is `spacing`:
    /// `dt = 0.01 * spacing / 25`, i.e. 0.01 m at 25 m spacing.
    pub fn for_spacing(spacing: f64) -> Self {
        Self::with_dt(0.01 * spacing / REFERENCE_SPACING)
    }

    /// Defaults around an explicit step, closure radius `1.5 * dt`.
    pub fn with_dt(dt: f64) -> Self {
        TraceConfig {
            dt,
            max_steps: 5_000_000,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            closure_radius: 1.5 * dt,
            min_steps: 10,
            projection_steps: 1,
            start_ray: StartRay::TowardNearest,
            far_field: Some(FarFieldConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("step dt must be positive, got {}", self.dt));
        }
        if self.max_steps < 3 {
            return bad(format!("max_steps must be at least 3, got {}", self.max_steps));
        }
        if !(self.newton_tol > 0.0) {
            return bad(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if !(self.closure_radius > 0.0) {
            return bad(format!("closure radius must be positive, got {}", self.closure_radius));
        }
        if let Some(f) = self.far_field {
            if f.degree < 2 || !(f.box_factor > 0.0) || !(f.near_factor > std::f64::consts::SQRT_2) {
                return bad(format!("invalid far-field settings {f:?}"));
            }
        }
        Ok(())
    }
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self::for_spacing(REFERENCE_SPACING)
    }
}

/// Positive root of `A r^2 + B r + C = 0` with `A = 1 - beta^(2/alpha)`,
/// `B = -2 d cos(angle)`, `C = d^2`: the boundary distance toward a single
/// interferer at distance `d`, by the law of cosines.
pub fn first_guess_radius(d: f64, beta: f64, alpha: f64, corner_angle: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be positive, got {d}")));
    }
    if !(beta > 1.0) {
        return Err(Error::NoPositiveRoot { beta });
    }
    let a = 1.0 - beta.powf(2.0 / alpha);
    let b = -2.0 * d * corner_angle.cos();
    let c = d * d;
    let disc = b * b - 4.0 * a * c;
    // a < 0 < c, so disc > b^2 and the roots have opposite signs
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, c / q];
    roots
        .into_iter()
        .filter(|r| *r > 0.0 && r.is_finite())
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |m| m.max(r))))
        .ok_or(Error::NoPositiveRoot { beta })
}

/// How a boundary start point was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMethod {
    Newton,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryStart {
    pub point: Point2D,
    pub iterations: usize,
    pub method: StartMethod,
}

struct Ray {
    origin: Point2D,
    dir: Point2D,
    corner_angle: f64,
    /// Distance to the nearest neighbor.
    neighbor: f64,
    /// The ray points at the nearest neighbor, so for `beta > 1` the
    /// boundary lies before the midpoint.
    toward_neighbor: bool,
}

fn search_ray(set: &TransmitterSet, i: usize, config: &TraceConfig) -> Result<Ray> {
    if set.len() < 2 {
        return Err(Error::InvalidParameter(
            "boundary search needs at least two transmitters".into(),
        ));
    }
    let zi = set.point(i)?;
    let (j, dist) = set.nearest_neighbor(i)?;
    let to_nn = (set.points()[j] - zi) * (1.0 / dist);
    Ok(match config.start_ray {
        StartRay::TowardNearest => Ray {
            origin: zi,
            dir: to_nn,
            corner_angle: 0.0,
            neighbor: dist,
            toward_neighbor: true,
        },
        StartRay::Horizontal => {
            let dir = Point2D::new(1.0, 0.0);
            Ray {
                origin: zi,
                dir,
                corner_angle: dir.dot(to_nn).clamp(-1.0, 1.0).acos(),
                neighbor: dist,
                toward_neighbor: false,
            }
        }
    })
}

fn sample_at(set: &TransmitterSet, i: usize, loss: PathLoss, z: Point2D) -> Result<FieldSample> {
    field_sample(z, i, set, loss)
}

/// Newton iteration on `f(t) = S_i(z_i + t u) - beta` from the law-of-cosines
/// guess; `u` is the search ray. Every evaluation narrows a bracket around
/// the root, and a step that would leave it goes to the bracket's midpoint
/// instead (far fields at small `alpha` can put the guess well off).
pub fn newton_start(
    set: &TransmitterSet,
    i: usize,
    channel: &ChannelParams,
    config: &TraceConfig,
) -> Result<BoundaryStart> {
    let ray = search_ray(set, i, config)?;
    let beta = channel.beta();
    let loss = channel.path_loss();
    let mut t = first_guess_radius(ray.neighbor, beta, channel.alpha(), ray.corner_angle)?;
    let mut residual = f64::INFINITY;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for iterations in 0..=config.newton_max_iter {
        let z = ray.origin + ray.dir * t;
        let fs = match sample_at(set, i, loss, z) {
            Ok(fs) => fs,
            Err(Error::CoincidentPoint { .. }) => break,
            Err(e) => return Err(e),
        };
        let s = fs.sir();
        residual = (s - beta).abs() / beta;
        if residual <= config.newton_tol {
            return Ok(BoundaryStart {
                point: z,
                iterations,
                method: StartMethod::Newton,
            });
        }
        if iterations == config.newton_max_iter {
            break;
        }
        if s > beta {
            lo = t;
        } else {
            hi = t;
        }
        let slope = fs.sir_grad().dot(ray.dir);
        let next = t - (s - beta) / slope;
        t = if next.is_finite() && next > lo && next < hi {
            next
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * t
        };
    }
    Err(Error::NoConvergence {
        iterations: config.newton_max_iter,
        residual,
    })
}

/// Bisection on the search ray between the transmitter and a point known to
/// be below threshold.
pub fn bisection_start(
    set: &TransmitterSet,
    i: usize,
    channel: &ChannelParams,
    config: &TraceConfig,
) -> Result<BoundaryStart> {
    let ray = search_ray(set, i, config)?;
    let beta = channel.beta();
    let loss = channel.path_loss();
    let sir = |t: f64| sample_at(set, i, loss, ray.origin + ray.dir * t).map(|f| f.sir());

    let mut lo = ray.neighbor * 1e-9;
    let mut hi = if ray.toward_neighbor && beta > 1.0 {
        ray.neighbor / 2.0
    } else if ray.toward_neighbor {
        ray.neighbor * (1.0 - 1e-9)
    } else {
        ray.neighbor / 2.0
    };
    let mut expansions = 0;
    while sir(hi)? >= beta {
        if ray.toward_neighbor || expansions > 60 {
            return Err(Error::NoConvergence {
                iterations: expansions,
                residual: f64::NAN,
            });
        }
        lo = hi;
        hi *= 2.0;
        expansions += 1;
    }
    if sir(lo)? < beta {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    for iterations in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let s = sir(mid)?;
        let residual = (s - beta).abs() / beta;
        if residual <= config.newton_tol || mid <= lo || mid >= hi {
            return Ok(BoundaryStart {
                point: ray.origin + ray.dir * mid,
                iterations,
                method: StartMethod::Bisection,
            });
        }
        if s >= beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: 200,
        residual: f64::NAN,
    })
}

/// Newton first, bisection when Newton has no root guess or diverges.
pub fn find_start(
    set: &TransmitterSet,
    i: usize,
    channel: &ChannelParams,
    config: &TraceConfig,
) -> Result<BoundaryStart> {
    match newton_start(set, i, channel, config) {
        Ok(start) => Ok(start),
        Err(Error::NoPositiveRoot { .. }) | Err(Error::NoConvergence { .. }) => {
            bisection_start(set, i, channel, config)
        }
        Err(e) => Err(e),
    }
}

/// A traced reception-area boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptionContour {
    pub transmitter: Point2D,
    /// Counterclockwise; the closing edge back to the first vertex is
    /// implicit.
    pub vertices: Vec<Point2D>,
    /// Area from the gradient-normal sum, m^2.
    pub area: f64,
    /// Shoelace area of the vertex polygon, m^2.
    pub shoelace_area: f64,
    pub step: f64,
    pub closed: bool,
    pub start: BoundaryStart,
}

impl ReceptionContour {
    pub fn steps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// Relative disagreement between the two area estimates.
    pub fn area_mismatch(&self) -> f64 {
        (self.area - self.shoelace_area).abs() / self.shoelace_area.abs().max(f64::MIN_POSITIVE)
    }

    /// Sidecar metadata for exported vertex files.
    pub fn sidecar(&self, channel: &ChannelParams) -> ContourSidecar {
        ContourSidecar {
            area: self.area,
            shoelace_area: self.shoelace_area,
            beta: channel.beta(),
            alpha: channel.alpha(),
            dt: self.step,
            steps: self.steps(),
            transmitter: self.transmitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSidecar {
    pub area: f64,
    pub shoelace_area: f64,
    pub beta: f64,
    pub alpha: f64,
    pub dt: f64,
    pub steps: usize,
    pub transmitter: Point2D,
}

/// Shoelace area of a closed polygon, positive when counterclockwise.
pub fn shoelace_area(vertices: &[Point2D]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let origin = vertices[0];
    let mut twice = 0.0;
    for k in 0..n {
        let a = vertices[k] - origin;
        let b = vertices[(k + 1) % n] - origin;
        twice += a.cross(b);
    }
    0.5 * twice
}

/// Tensor Chebyshev interpolant of `(v, gx, gy)` on a square.
#[derive(Debug, Clone)]
struct Chebyshev2 {
    center: Point2D,
    half: f64,
    n: usize,
    /// Row-major `(n+1) x (n+1)` coefficients per component.
    coef: [Vec<f64>; 3],
}

impl Chebyshev2 {
    fn build(center: Point2D, half: f64, n: usize, f: impl Fn(Point2D) -> PowerSums) -> Self {
        let m = n + 1;
        let theta: Vec<f64> = (0..m)
            .map(|k| std::f64::consts::PI * (k as f64 + 0.5) / m as f64)
            .collect();
        let mut values = [vec![0.0; m * m], vec![0.0; m * m], vec![0.0; m * m]];
        for k in 0..m {
            for l in 0..m {
                let z = center + Point2D::new(theta[k].cos(), theta[l].cos()) * half;
                let s = f(z);
                values[0][k * m + l] = s.v;
                values[1][k * m + l] = s.gx;
                values[2][k * m + l] = s.gy;
            }
        }
        let cos_table: Vec<f64> = (0..m)
            .flat_map(|a| theta.iter().map(move |t| (a as f64 * t).cos()))
            .collect();
        let coef = values.map(|vals| {
            // transform along y, then along x
            let mut g = vec![0.0; m * m];
            for k in 0..m {
                for b in 0..m {
                    g[k * m + b] = (0..m).map(|l| vals[k * m + l] * cos_table[b * m + l]).sum();
                }
            }
            let mut c = vec![0.0; m * m];
            let norm = (2.0 / m as f64) * (2.0 / m as f64);
            for a in 0..m {
                for b in 0..m {
                    let mut v: f64 = (0..m).map(|k| cos_table[a * m + k] * g[k * m + b]).sum();
                    v *= norm;
                    if a == 0 {
                        v *= 0.5;
                    }
                    if b == 0 {
                        v *= 0.5;
                    }
                    c[a * m + b] = v;
                }
            }
            c
        });
        Chebyshev2 { center, half, n, coef }
    }

    fn contains(&self, z: Point2D) -> bool {
        (z.x - self.center.x).abs() <= self.half && (z.y - self.center.y).abs() <= self.half
    }

    fn eval(&self, z: Point2D) -> (f64, f64, f64) {
        let m = self.n + 1;
        let u = (z.x - self.center.x) / self.half;
        let w = (z.y - self.center.y) / self.half;
        let mut tx = vec![0.0; m];
        let mut ty = vec![0.0; m];
        tx[0] = 1.0;
        ty[0] = 1.0;
        tx[1] = u;
        ty[1] = w;
        for a in 2..m {
            tx[a] = 2.0 * u * tx[a - 1] - tx[a - 2];
            ty[a] = 2.0 * w * ty[a - 1] - ty[a - 2];
        }
        let mut out = [0.0; 3];
        for (o, c) in out.iter_mut().zip(&self.coef) {
            let mut total = 0.0;
            for a in 0..m {
                let row = &c[a * m..(a + 1) * m];
                let inner: f64 = row.iter().zip(&ty).map(|(c, t)| c * t).sum();
                total += tx[a] * inner;
            }
            *o = total;
        }
        (out[0], out[1], out[2])
    }
}

/// Field of one transmitter for tracing; see [`FarFieldConfig`].
struct LocalField<'a> {
    set: &'a TransmitterSet,
    i: usize,
    loss: PathLoss,
    zi: Point2D,
    near: Vec<Point2D>,
    far: Option<Chebyshev2>,
}

impl<'a> LocalField<'a> {
    fn new(set: &'a TransmitterSet, i: usize, loss: PathLoss, config: Option<FarFieldConfig>) -> Result<Self> {
        let zi = set.point(i)?;
        let exact = LocalField {
            set,
            i,
            loss,
            zi,
            near: Vec::new(),
            far: None,
        };
        let Some(cfg) = config else {
            return Ok(exact);
        };
        let (_, nn) = set.nearest_neighbor(i)?;
        let half = cfg.box_factor * nn;
        let near_r2 = (cfg.near_factor * half).powi(2);
        let (mut near, mut far) = (Vec::new(), Vec::new());
        for (k, p) in set.points().iter().enumerate() {
            if k == i {
                continue;
            }
            if p.dist2(zi) < near_r2 {
                near.push(*p);
            } else {
                far.push(*p);
            }
        }
        // interpolation only pays off when it replaces enough work
        if far.len() < 4 * (cfg.degree + 1) * (cfg.degree + 1) / 10 {
            return Ok(exact);
        }
        let cheb = Chebyshev2::build(zi, half, cfg.degree, |z| loss.sums(&far, z));
        Ok(LocalField {
            near,
            far: Some(cheb),
            ..exact
        })
    }

    fn sample(&self, z: Point2D) -> Result<FieldSample> {
        let Some(cheb) = self.far.as_ref().filter(|c| c.contains(z)) else {
            return field_sample(z, self.i, self.set, self.loss);
        };
        let s = self.loss.sums(&self.near, z);
        let d = z - self.zi;
        let r2 = d.norm2();
        let guard2 = COINCIDENCE_RADIUS * COINCIDENCE_RADIUS;
        if r2.min(s.min_r2) < guard2 {
            // let the exact path report which transmitter
            return field_sample(z, self.i, self.set, self.loss);
        }
        let (fv, fgx, fgy) = cheb.eval(z);
        let a = self.loss.alpha();
        let u = self.loss.from_r2(r2);
        Ok(FieldSample {
            signal: u,
            interference: s.v + fv,
            signal_grad: d * (-a * u / r2),
            interference_grad: Point2D::new(-a * (s.gx + fgx), -a * (s.gy + fgy)),
        })
    }
}

/// Traces the boundary of transmitter `i`'s reception area.
pub fn trace_contour(
    set: &TransmitterSet,
    i: usize,
    channel: &ChannelParams,
    config: &TraceConfig,
) -> Result<ReceptionContour> {
    config.validate()?;
    let zi = set.point(i)?;
    let start = find_start(set, i, channel, config)?;
    let beta = channel.beta();
    let loss = channel.path_loss();
    let dt = config.dt;

    let field = LocalField::new(set, i, loss, config.far_field)?;
    let z0 = start.point;
    let mut z = z0;
    let mut grad = field.sample(z)?.sir_grad();
    let mut vertices = vec![z0];
    let mut area = 0.0;

    for step in 0..config.max_steps {
        let g = grad.norm();
        if !(g >= GRADIENT_FLOOR) {
            return Err(Error::GradientVanished { step });
        }
        let normal = grad * (1.0 / g);
        let tangent = normal.rotate_cw();

        if step >= config.min_steps && z.dist(z0) < config.closure_radius {
            // close the loop with the signed remainder along the tangent
            let remainder = (z0 - z).dot(tangent);
            area -= 0.5 * (z - zi).dot(normal) * remainder;
            let shoelace = shoelace_area(&vertices);
            return Ok(ReceptionContour {
                transmitter: zi,
                vertices,
                area: area.abs(),
                shoelace_area: shoelace.abs(),
                step: dt,
                closed: true,
                start,
            });
        }

        area -= 0.5 * (z - zi).dot(normal) * dt;
        let mut next = z + tangent * dt;
        let mut fs = field.sample(next)?;
        // the gradient at the last evaluated point doubles as the next normal
        for k in 0..config.projection_steps {
            let gp = fs.sir_grad();
            let g2 = gp.norm2();
            if !(g2 > 0.0) {
                break;
            }
            next = next - gp * ((fs.sir() - beta) / g2);
            if k + 1 < config.projection_steps {
                fs = field.sample(next)?;
            }
        }
        grad = fs.sir_grad();
        z = next;
        vertices.push(z);
    }
    Err(Error::NoClosure {
        steps: config.max_steps,
    })
}

/// Even-odd point-in-polygon test; vertices themselves count as inside.
pub fn covers(contour: &ReceptionContour, z: Point2D) -> bool {
    let v = &contour.vertices;
    if v.iter().any(|p| p.dist2(z) <= 1e-24) {
        return true;
    }
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for k in 0..n {
        let (a, b) = (v[k], v[j]);
        if (a.y > z.y) != (b.y > z.y) {
            let x = a.x + (z.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if z.x < x {
                inside = !inside;
            }
        }
        j = k;
    }
    inside
}

/// Vertices as `x,y` rows.
pub fn write_contour_csv(contour: &ReceptionContour, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "x,y")?;
    for p in &contour.vertices {
        writeln!(out, "{:?},{:?}", p.x, p.y)?;
    }
    Ok(())
}
