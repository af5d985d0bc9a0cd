//! Periodic orbits by Newton's method, their multipliers and stability, and
//! sink censuses over seed grids.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{BranchId, ParamPoint, PhasePoint, SystemSpec};
use crate::error::{Error, Result};
use crate::transport::DiscreteMeasure;

pub const NEWTON_STEP_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const DIVISOR_TOL: f64 = 1e-8;
pub const DEDUP_TOL: f64 = 1e-6;
pub const CLASSIFY_TOL: f64 = 1e-6;
pub const BASIN_RADIUS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Sink,
    Source,
    ProjHypSource,
    Saddle,
    NonHyperbolic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    /// Lexicographically smallest point of the orbit.
    pub point: PhasePoint,
    pub period: usize,
    pub orbit: Vec<PhasePoint>,
    /// Eigenvalues of `D f^p` as `[re, im]`, largest modulus first.
    pub multipliers: Vec<[f64; 2]>,
    pub classification: Classification,
    /// `|λ₁ λ₂|` (or `|λ|` in dimension one).
    pub area: f64,
    pub area_contracting: bool,
}

impl PeriodicOrbit {
    pub fn moduli(&self) -> Vec<f64> {
        self.multipliers.iter().map(|m| m[0].hypot(m[1])).collect()
    }
}

/// Result of a Newton search from many seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSearch {
    pub orbits: Vec<PeriodicOrbit>,
    /// Seeds abandoned because `D f^p − I` was singular or an iterate left the domain.
    pub skipped: usize,
    pub diverged: usize,
}

enum SeedOutcome {
    Found(Vec<PhasePoint>, [[f64; 2]; 2]),
    Skipped,
    Diverged,
}

type Mat = [[f64; 2]; 2];

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut m = [[0.0; 2]; 2];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

/// `f^p` along a fixed itinerary with the chain-rule derivative.
fn chain(system: &SystemSpec, param: &ParamPoint, z: &PhasePoint, itinerary: &[BranchId]) -> (Vec<PhasePoint>, Mat) {
    let mut pts = Vec::with_capacity(itinerary.len() + 1);
    let mut m: Mat = [[1.0, 0.0], [0.0, 1.0]];
    let mut cur = *z;
    pts.push(cur);
    for &b in itinerary {
        let j = system.jacobian_on_branch(&cur, b);
        m = mat_mul(&j, &m);
        let c = system.step_on_branch(param, &cur, b);
        cur = PhasePoint {
            coords: if system.dim() == 1 { [c[0], 0.0] } else { c },
            ..cur
        };
        pts.push(cur);
    }
    if system.dim() == 1 {
        m[0][1] = 0.0;
        m[1][0] = 0.0;
        m[1][1] = 1.0;
    }
    (pts, m)
}

fn itinerary_of(system: &SystemSpec, param: &ParamPoint, z: &PhasePoint, p: usize) -> Option<Vec<BranchId>> {
    let mut out = Vec::with_capacity(p);
    let mut cur = *z;
    for _ in 0..p {
        if cur.escaped {
            return None;
        }
        out.push(system.branch_of(&cur)?);
        cur = system.step(param, &cur).ok()?;
    }
    Some(out)
}

fn newton_from_seed(system: &SystemSpec, param: &ParamPoint, p: usize, seed: &PhasePoint) -> SeedOutcome {
    let Some(itinerary) = itinerary_of(system, param, seed, p) else {
        return SeedOutcome::Skipped;
    };
    let dim = system.dim();
    let mut z = *seed;
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let (pts, m) = chain(system, param, &z, &itinerary);
        let fz = pts[p];
        let r = [fz.coords[0] - z.coords[0], fz.coords[1] - z.coords[1]];
        if !(r[0].is_finite() && r[1].is_finite()) {
            return SeedOutcome::Diverged;
        }
        if r[0].hypot(r[1]) <= 1e-14 {
            converged = true;
            break;
        }
        // (M − I) Δ = −r
        let step = if dim == 1 {
            let a = m[0][0] - 1.0;
            if a.abs() < 1e-14 {
                return SeedOutcome::Skipped;
            }
            [-r[0] / a, 0.0]
        } else {
            let (a, b, c, d) = (m[0][0] - 1.0, m[0][1], m[1][0], m[1][1] - 1.0);
            let det = a * d - b * c;
            if det.abs() < 1e-14 {
                return SeedOutcome::Skipped;
            }
            [(-r[0] * d + b * r[1]) / det, (c * r[0] - a * r[1]) / det]
        };
        z.coords[0] += step[0];
        z.coords[1] += step[1];
        if !(z.coords[0].is_finite() && z.coords[1].is_finite()) {
            return SeedOutcome::Diverged;
        }
        if step[0].hypot(step[1]) < NEWTON_STEP_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return SeedOutcome::Diverged;
    }
    // the root must follow its itinerary with the true map
    let mut orbit = Vec::with_capacity(p);
    let mut cur = z;
    if !system.phase_box().contains(&cur) {
        return SeedOutcome::Diverged;
    }
    for &b in &itinerary {
        if system.on_branch_boundary(&cur) || system.branch_of(&cur) != Some(b) {
            return SeedOutcome::Diverged;
        }
        orbit.push(cur);
        cur = match system.step(param, &cur) {
            Ok(n) if !n.escaped => n,
            _ => return SeedOutcome::Diverged,
        };
    }
    if cur.distance(&z) > RESIDUAL_TOL {
        return SeedOutcome::Diverged;
    }
    for q in (1..p).filter(|q| p.is_multiple_of(*q)) {
        if orbit[q].distance(&z) < DIVISOR_TOL {
            return SeedOutcome::Diverged;
        }
    }
    let (_, m) = chain(system, param, &z, &itinerary);
    SeedOutcome::Found(orbit, m)
}

/// Eigenvalues of the derivative of `f^p`, largest modulus first.
pub fn multipliers_of(m: &[[f64; 2]; 2], dim: usize) -> Vec<Complex64> {
    if dim == 1 {
        return vec![Complex64::new(m[0][0], 0.0)];
    }
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
    let half = Complex64::new(0.5 * tr, 0.0);
    let mut v = vec![half + 0.5 * disc, half - 0.5 * disc];
    v.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    v
}

/// Stability class from the multipliers, and whether the orbit contracts area.
pub fn classify(multipliers: &[[f64; 2]], tol: f64) -> (Classification, bool) {
    let mut moduli: Vec<f64> = multipliers.iter().map(|m| m[0].hypot(m[1])).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let area: f64 = moduli.iter().product();
    let below = |m: f64| m < 1.0 - tol;
    let above = |m: f64| m > 1.0 + tol;
    let class = if moduli.iter().all(|&m| below(m)) {
        Classification::Sink
    } else if moduli.iter().all(|&m| above(m)) {
        if moduli.len() == 2 && moduli[0] > moduli[1] * (1.0 + tol) {
            Classification::ProjHypSource
        } else {
            Classification::Source
        }
    } else if moduli.len() == 2 && above(moduli[0]) && below(moduli[1]) {
        Classification::Saddle
    } else {
        Classification::NonHyperbolic
    };
    let area_contracting = class == Classification::Saddle && area < 1.0 - tol;
    (class, area_contracting)
}

fn cmp_points(a: &PhasePoint, b: &PhasePoint) -> std::cmp::Ordering {
    a.coords[0]
        .total_cmp(&b.coords[0])
        .then(a.coords[1].total_cmp(&b.coords[1]))
}

fn build_orbit(system: &SystemSpec, orbit: Vec<PhasePoint>, m: &[[f64; 2]; 2]) -> PeriodicOrbit {
    let period = orbit.len();
    let start = (0..period)
        .min_by(|&i, &j| cmp_points(&orbit[i], &orbit[j]))
        .expect("nonempty orbit");
    let mut rotated = orbit[start..].to_vec();
    rotated.extend_from_slice(&orbit[..start]);
    let mult: Vec<[f64; 2]> = multipliers_of(m, system.dim()).iter().map(|c| [c.re, c.im]).collect();
    let (classification, area_contracting) = classify(&mult, CLASSIFY_TOL);
    PeriodicOrbit {
        point: rotated[0],
        period,
        area: mult.iter().map(|c| c[0].hypot(c[1])).product(),
        orbit: rotated,
        multipliers: mult,
        classification,
        area_contracting,
    }
}

fn same_orbit(a: &PeriodicOrbit, b: &PeriodicOrbit, tol: f64) -> bool {
    a.period == b.period && b.orbit.iter().any(|q| q.distance(&a.point) <= tol)
}

/// Newton's method for period-`p` points from each seed, deduplicated across
/// seeds and cyclic shifts and sorted by coordinates.
pub fn find_periodic(
    system: &SystemSpec,
    param: &ParamPoint,
    p: usize,
    seeds: &[PhasePoint],
) -> Result<PeriodicSearch> {
    if p == 0 {
        return Err(Error::Usage("period must be at least 1".into()));
    }
    if param.len() != system.param_dim() {
        return Err(Error::DimensionMismatch("parameter arity".into()));
    }
    if seeds.iter().any(|s| s.dim != system.dim()) {
        return Err(Error::DimensionMismatch("seed dimension".into()));
    }
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|s| newton_from_seed(system, param, p, s))
        .collect();
    let mut found = Vec::new();
    let (mut skipped, mut diverged) = (0, 0);
    for o in outcomes {
        match o {
            SeedOutcome::Found(orbit, m) => found.push(build_orbit(system, orbit, &m)),
            SeedOutcome::Skipped => skipped += 1,
            SeedOutcome::Diverged => diverged += 1,
        }
    }
    found.sort_by(|a, b| cmp_points(&a.point, &b.point));
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for o in found {
        if !orbits.iter().any(|k| same_orbit(k, &o, DEDUP_TOL)) {
            orbits.push(o);
        }
    }
    Ok(PeriodicSearch {
        orbits,
        skipped,
        diverged,
    })
}

/// Seeds for a census: a regular grid of cell centers, or uniform random
/// points when `seed` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedGrid {
    pub per_axis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SeedGrid {
    fn default() -> Self {
        SeedGrid {
            per_axis: 50,
            seed: None,
        }
    }
}

impl SeedGrid {
    pub fn points(&self, system: &SystemSpec) -> Vec<PhasePoint> {
        let b = system.phase_box();
        match self.seed {
            None => b.grid(self.per_axis),
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let count = self.per_axis.pow(b.dim() as u32);
                (0..count).map(|_| b.sample(&mut rng)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkCensus {
    pub system: SystemSpec,
    pub param: ParamPoint,
    pub max_period: usize,
    pub grid: SeedGrid,
    pub dedup_tol: f64,
    pub sinks: Vec<PeriodicOrbit>,
}

pub fn sink_census(system: &SystemSpec, param: &ParamPoint, max_period: usize, grid: &SeedGrid) -> Result<SinkCensus> {
    if max_period == 0 {
        return Err(Error::Usage("max period must be at least 1".into()));
    }
    let seeds = grid.points(system);
    let mut sinks = Vec::new();
    for p in 1..=max_period {
        let found = find_periodic(system, param, p, &seeds)?;
        sinks.extend(
            found
                .orbits
                .into_iter()
                .filter(|o| o.classification == Classification::Sink),
        );
    }
    Ok(SinkCensus {
        system: system.clone(),
        param: param.clone(),
        max_period,
        grid: grid.clone(),
        dedup_tol: DEDUP_TOL,
        sinks,
    })
}

impl SinkCensus {
    /// One row per sink: period, representative point, multipliers, class.
    pub fn to_csv(&self) -> String {
        let dim = self.system.dim();
        let mut s = String::from("period,x");
        if dim == 2 {
            s.push_str(",y");
        }
        for k in 1..=dim {
            write!(s, ",mult{k}_re,mult{k}_im").unwrap();
        }
        s.push_str(",classification\n");
        for o in &self.sinks {
            write!(s, "{}", o.period).unwrap();
            for c in o.point.as_slice() {
                write!(s, ",{c:.16e}").unwrap();
            }
            for m in &o.multipliers {
                write!(s, ",{:.16e},{:.16e}", m[0], m[1]).unwrap();
            }
            writeln!(s, ",{:?}", o.classification).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinEstimate {
    pub fraction: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Uniform measure on the periodic points of the sink.
    pub limit: DiscreteMeasure,
}

/// Fraction of uniformly sampled initial points whose orbit comes within
/// `1e-6` of the sink within `n` steps.
pub fn basin_measure_estimate(
    system: &SystemSpec,
    param: &ParamPoint,
    sink: &PeriodicOrbit,
    samples: usize,
    n: usize,
    seed: u64,
) -> Result<BasinEstimate> {
    if sink.classification != Classification::Sink {
        return Err(Error::Usage("basin estimates need a sink".into()));
    }
    if samples == 0 {
        return Err(Error::Usage("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<PhasePoint> = (0..samples).map(|_| system.phase_box().sample(&mut rng)).collect();
    let hits: Vec<bool> = starts
        .par_iter()
        .map(|z| {
            let mut cur = *z;
            for _ in 0..=n {
                if sink.orbit.iter().any(|q| q.distance(&cur) <= BASIN_RADIUS) {
                    return true;
                }
                cur = match system.step(param, &cur) {
                    Ok(c) if !c.escaped => c,
                    _ => return false,
                };
            }
            false
        })
        .collect();
    let fraction = hits.iter().filter(|&&h| h).count() as f64 / samples as f64;
    Ok(BasinEstimate {
        fraction,
        stderr: (fraction * (1.0 - fraction) / samples as f64).sqrt(),
        samples,
        limit: DiscreteMeasure::uniform(&sink.orbit)?,
    })
}
