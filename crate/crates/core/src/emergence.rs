//! Emergence estimates: covering the cloud of Birkhoff empirical measures by
//! few measures in mean Wasserstein-1 distance.
//!
//! Centers are restricted to members of the sampled cloud, so every reported
//! `N` is an upper bound for the covering number over all probability
//! measures at the same residual, which in turn is at most twice the optimal
//! unrestricted residual for the same `N`.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{ParamPoint, PhaseBox, PhasePoint, SystemSpec};
use crate::error::{Error, Result};
use crate::transport::{empirical_from_trajectory, quantize, w1, DiscreteMeasure, GroundMetric};

pub const CENTER_RESTRICTION_NOTE: &str =
    "centers are restricted to sampled measures; the residual is at most twice the unrestricted optimum";

/// Survivor fraction below which a run is flagged unreliable.
pub const RELIABLE_SURVIVORS: f64 = 0.5;

const IMPROVE_TOL: f64 = 1e-12;
const KMEDIAN_RESTARTS: usize = 8;
const MAX_SWAPS: usize = 500;
const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmergenceQuery {
    pub n_ladder: Vec<usize>,
    pub sample_count: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize_cell: Option<f64>,
    /// Box to draw initial points from; defaults to the system's phase box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<PhaseBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_centers: Option<usize>,
}

impl Default for EmergenceQuery {
    fn default() -> Self {
        EmergenceQuery {
            n_ladder: vec![1_000, 10_000, 100_000],
            sample_count: 400,
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            seed: 0,
            quantize_cell: None,
            sample_box: None,
            max_centers: None,
        }
    }
}

impl EmergenceQuery {
    pub fn validate(&self) -> Result<()> {
        if self.n_ladder.is_empty() || self.n_ladder.contains(&0) {
            return Err(Error::Usage("n_ladder must be nonempty with positive entries".into()));
        }
        if self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Usage("n_ladder must be strictly increasing".into()));
        }
        if self.sample_count < 10 {
            return Err(Error::Usage("sample_count must be at least 10".into()));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Usage("epsilons must be positive".into()));
        }
        if self.epsilons.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Usage("epsilons must be strictly decreasing".into()));
        }
        if let Some(c) = self.quantize_cell {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Usage("quantize_cell must be positive".into()));
            }
        }
        if self.max_centers == Some(0) {
            return Err(Error::Usage("max_centers must be positive".into()));
        }
        Ok(())
    }
}

/// Empirical measures of the surviving sampled orbits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffCloud {
    pub n: usize,
    pub samples: usize,
    pub starts: Vec<PhasePoint>,
    pub measures: Vec<DiscreteMeasure>,
    pub survivor_fraction: f64,
}

impl BirkhoffCloud {
    /// Uniform weights over the survivors.
    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.measures.len() as f64; self.measures.len()]
    }
}

pub fn sample_starts(system: &SystemSpec, query: &EmergenceQuery) -> Result<Vec<PhasePoint>> {
    let b = query.sample_box.as_ref().unwrap_or(system.phase_box());
    if b.dim() != system.dim() {
        return Err(Error::DimensionMismatch("sample box dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(query.seed);
    Ok((0..query.sample_count).map(|_| b.sample(&mut rng)).collect())
}

pub fn birkhoff_cloud(
    system: &SystemSpec,
    param: &ParamPoint,
    query: &EmergenceQuery,
    n: usize,
) -> Result<BirkhoffCloud> {
    query.validate()?;
    let starts = sample_starts(system, query)?;
    cloud_from_starts(system, param, &starts, n, query.quantize_cell)
}

fn cloud_from_starts(
    system: &SystemSpec,
    param: &ParamPoint,
    starts: &[PhasePoint],
    n: usize,
    cell: Option<f64>,
) -> Result<BirkhoffCloud> {
    let results: Vec<Result<Option<(PhasePoint, DiscreteMeasure)>>> = starts
        .par_iter()
        .map(|z| {
            let t = system.orbit(param, z, n)?;
            match empirical_from_trajectory(&t) {
                Ok(m) => {
                    let m = match cell {
                        Some(c) => quantize(&m, c)?,
                        None => m,
                    };
                    Ok(Some((*z, m)))
                }
                Err(Error::Escaped { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut kept = Vec::new();
    let mut measures = Vec::new();
    for r in results {
        if let Some((z, m)) = r? {
            kept.push(z);
            measures.push(m);
        }
    }
    if measures.is_empty() {
        return Err(Error::DegenerateCloud { samples: starts.len() });
    }
    Ok(BirkhoffCloud {
        n,
        samples: starts.len(),
        survivor_fraction: measures.len() as f64 / starts.len() as f64,
        starts: kept,
        measures,
    })
}

/// Symmetric matrix of pairwise distances, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let vals: Vec<f64> = pairs.par_iter().map(|&(i, j)| f(i, j)).collect();
        let mut d = vec![0.0; n * n];
        for (&(i, j), v) in pairs.iter().zip(vals) {
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
        DistanceMatrix { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

pub fn distance_matrix(measures: &[DiscreteMeasure], g: &GroundMetric) -> Result<DistanceMatrix> {
    if measures.iter().any(|m| m.dim() != measures[0].dim()) {
        return Err(Error::DimensionMismatch("cloud mixes dimensions".into()));
    }
    Ok(DistanceMatrix::from_fn(measures.len(), |i, j| {
        w1(&measures[i], &measures[j], g).expect("validated measures")
    }))
}

/// k-median state over a distance matrix with sample weights.
#[derive(Clone, Debug)]
pub struct KMedian<'a> {
    dist: &'a DistanceMatrix,
    weights: &'a [f64],
    centers: Vec<usize>,
    is_center: Vec<bool>,
    nearest: Vec<f64>,
    second: Vec<f64>,
    owner: Vec<usize>,
}

impl<'a> KMedian<'a> {
    pub fn new(dist: &'a DistanceMatrix, weights: &'a [f64]) -> Self {
        let n = dist.len();
        assert_eq!(weights.len(), n, "one weight per cloud member");
        KMedian {
            dist,
            weights,
            centers: Vec::new(),
            is_center: vec![false; n],
            nearest: vec![f64::INFINITY; n],
            second: vec![f64::INFINITY; n],
            owner: vec![usize::MAX; n],
        }
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    /// Weighted mean distance to the nearest center.
    pub fn objective(&self) -> f64 {
        if self.centers.is_empty() {
            return f64::INFINITY;
        }
        self.weights.iter().zip(&self.nearest).map(|(w, d)| w * d).sum()
    }

    /// Per-sample distance to the nearest center.
    pub fn assignment_costs(&self) -> &[f64] {
        &self.nearest
    }

    fn recompute(&mut self) {
        for i in 0..self.dist.len() {
            let row = self.dist.row(i);
            let (mut d1, mut d2, mut o) = (f64::INFINITY, f64::INFINITY, usize::MAX);
            for &c in &self.centers {
                let d = row[c];
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    o = c;
                } else if d < d2 {
                    d2 = d;
                }
            }
            self.nearest[i] = d1;
            self.second[i] = d2;
            self.owner[i] = o;
        }
    }

    /// Add the center that lowers the objective most (the 1-median first);
    /// returns `false` when every member is already a center.
    pub fn add_greedy(&mut self) -> bool {
        let n = self.dist.len();
        let first = self.centers.is_empty();
        let scores: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&x| !self.is_center[x])
            .map(|x| {
                let s: f64 = (0..n)
                    .map(|i| {
                        let d = self.dist.get(i, x);
                        if first {
                            self.weights[i] * d
                        } else {
                            -self.weights[i] * (self.nearest[i] - d).max(0.0)
                        }
                    })
                    .sum();
                (x, s)
            })
            .collect();
        let Some(&(best, _)) = scores.iter().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))) else {
            return false;
        };
        self.centers.push(best);
        self.is_center[best] = true;
        self.recompute();
        true
    }

    fn push_center(&mut self, c: usize) {
        self.centers.push(c);
        self.is_center[c] = true;
        self.recompute();
    }

    fn remove_last(&mut self) -> Option<usize> {
        let c = self.centers.pop()?;
        self.is_center[c] = false;
        self.recompute();
        Some(c)
    }

    /// Best-improvement single swaps until none lowers the objective;
    /// returns the number of swaps made.
    pub fn swap_search(&mut self) -> usize {
        let n = self.dist.len();
        let k = self.centers.len();
        if k == 0 || k == n {
            return 0;
        }
        let mut swaps = 0;
        while swaps < MAX_SWAPS {
            let slot: Vec<usize> = {
                let mut s = vec![usize::MAX; n];
                for (p, &c) in self.centers.iter().enumerate() {
                    s[c] = p;
                }
                s
            };
            // For candidate x: the change from removing center c and adding x
            // is shared[x] + correction[x][c].
            let best: Vec<(usize, usize, f64)> = (0..n)
                .into_par_iter()
                .filter(|&x| !self.is_center[x])
                .map(|x| {
                    let mut shared = 0.0;
                    let mut corr = vec![0.0; k];
                    for i in 0..n {
                        let w = self.weights[i];
                        let dx = self.dist.get(i, x);
                        let d1 = self.nearest[i];
                        let gain = (dx - d1).min(0.0);
                        shared += w * gain;
                        let replaced = dx.min(self.second[i]) - d1;
                        corr[slot[self.owner[i]]] += w * (replaced - gain);
                    }
                    let (p, c) = corr
                        .iter()
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                        .expect("k > 0");
                    (x, p, shared + c)
                })
                .collect();
            let Some(&(x, p, delta)) = best.iter().min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0))) else {
                break;
            };
            if delta >= -IMPROVE_TOL {
                break;
            }
            let old = self.centers[p];
            self.is_center[old] = false;
            self.centers[p] = x;
            self.is_center[x] = true;
            self.recompute();
            swaps += 1;
        }
        swaps
    }
}

/// Greedy `k` centers followed by swap search, restarted from each of the
/// best few 1-median candidates; the best local optimum is kept.
pub fn kmedian(dist: &DistanceMatrix, weights: &[f64], k: usize) -> (Vec<usize>, f64) {
    let n = dist.len();
    let k = k.min(n);
    let mut firsts: Vec<(usize, f64)> = (0..n)
        .map(|x| (x, (0..n).map(|i| weights[i] * dist.get(i, x)).sum()))
        .collect();
    firsts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let starts = if k <= 1 { 1 } else { KMEDIAN_RESTARTS.min(n) };
    let mut best: (Vec<usize>, f64) = (Vec::new(), f64::INFINITY);
    for &(first, _) in firsts.iter().take(starts) {
        let mut km = KMedian::new(dist, weights);
        km.push_center(first);
        while km.centers.len() < k {
            km.add_greedy();
        }
        km.swap_search();
        if km.objective() < best.1 - IMPROVE_TOL {
            best = (km.centers.clone(), km.objective());
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n_centers: usize,
    pub residual: f64,
    pub center_ids: Vec<usize>,
    /// Bootstrap standard error of the residual over the sampled initial points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_stderr: Option<f64>,
    /// The search is heuristic: `N` is an upper bound on the minimum.
    pub upper_bound: bool,
}

/// Incremental covering over a decreasing sequence of scales.
pub struct Coverer<'a> {
    km: KMedian<'a>,
    max_centers: usize,
}

impl<'a> Coverer<'a> {
    pub fn new(dist: &'a DistanceMatrix, weights: &'a [f64], max_centers: Option<usize>) -> Self {
        Coverer {
            km: KMedian::new(dist, weights),
            max_centers: max_centers.unwrap_or(dist.len()).min(dist.len()),
        }
    }

    pub fn kmedian(&self) -> &KMedian<'a> {
        &self.km
    }

    /// Smallest `N` found with mean distance at most `epsilon`; never fewer
    /// centers than a previous call used.
    pub fn cover(&mut self, epsilon: f64) -> Result<CoverResult> {
        if !(epsilon > 0.0) {
            return Err(Error::Usage("epsilon must be positive".into()));
        }
        let floor = self.km.centers.len().max(1);
        if self.km.centers.is_empty() {
            self.km.add_greedy();
        }
        let mut grew = false;
        while self.km.objective() > epsilon {
            if self.km.centers.len() >= self.max_centers {
                self.km.swap_search();
                if self.km.objective() > epsilon {
                    return Err(Error::Saturation {
                        epsilon,
                        floor: self.km.objective(),
                    });
                }
                break;
            }
            self.km.add_greedy();
            grew = true;
        }
        // try to give back centers greedily added beyond what swaps need
        if grew {
            while self.km.centers.len() > floor {
                let saved = self.km.clone();
                self.km.remove_last();
                self.km.swap_search();
                if self.km.objective() > epsilon {
                    self.km = saved;
                    break;
                }
            }
        }
        self.km.swap_search();
        Ok(CoverResult {
            epsilon,
            n_centers: self.km.centers.len(),
            residual: self.km.objective(),
            center_ids: self.km.centers.clone(),
            residual_stderr: None,
            upper_bound: true,
        })
    }
}

pub fn covering_number_with(
    dist: &DistanceMatrix,
    weights: &[f64],
    epsilon: f64,
    max_centers: Option<usize>,
) -> Result<CoverResult> {
    if dist.is_empty() {
        return Err(Error::Usage("empty cloud".into()));
    }
    Coverer::new(dist, weights, max_centers).cover(epsilon)
}

pub fn covering_number(
    cloud: &[DiscreteMeasure],
    weights: &[f64],
    epsilon: f64,
    g: &GroundMetric,
) -> Result<CoverResult> {
    if cloud.is_empty() {
        return Err(Error::Usage("empty cloud".into()));
    }
    if weights.len() != cloud.len() {
        return Err(Error::DimensionMismatch("one weight per cloud member".into()));
    }
    let d = distance_matrix(cloud, g)?;
    covering_number_with(&d, weights, epsilon, None)
}

/// Standard error of the weighted mean of `values` by resampling members.
pub fn bootstrap_stderr(values: &[f64], weights: &[f64], seed: u64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let (mut s, mut wsum) = (0.0, 0.0);
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                s += weights[i] * values[i];
                wsum += weights[i];
            }
            s / wsum
        })
        .collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    var.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum Scaling {
    F,
    P { exponent: f64 },
    SupP,
    Undetermined,
}

impl std::fmt::Display for Scaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scaling::F => write!(f, "F"),
            Scaling::P { exponent } => write!(f, "P({exponent:.3})"),
            Scaling::SupP => write!(f, "SupP"),
            Scaling::Undetermined => write!(f, "Undetermined"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub scaling: Scaling,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Slopes over windows of three consecutive points.
    pub window_slopes: Vec<f64>,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

/// Fit `log N` against `log(1/ε)` and classify the growth.
///
/// Rules, in order: F when the last `N` equals the first and the slope is
/// below 0.1; SupP when the last three windowed slopes each grow by more than
/// 10%; P(s) when `s ≥ 0.1`, `r² ≥ 0.9` and the slope over the last half of
/// the points is at most `1.5·s`; Undetermined otherwise.
pub fn classify_scaling(epsilons: &[f64], ns: &[usize]) -> Result<ScalingFit> {
    if epsilons.len() != ns.len() {
        return Err(Error::DimensionMismatch("one N per epsilon".into()));
    }
    if epsilons.len() < 4 {
        return Err(Error::Usage("at least four scales are needed".into()));
    }
    if ns.contains(&0) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Usage("N and epsilon must be positive".into()));
    }
    let x: Vec<f64> = epsilons.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let (slope, intercept, r2) = least_squares(&x, &y);
    let window_slopes: Vec<f64> = (0..x.len().saturating_sub(2))
        .map(|s| least_squares(&x[s..s + 3], &y[s..s + 3]).0)
        .collect();
    let half = x.len() / 2;
    let tail_slope = least_squares(&x[half..], &y[half..]).0;

    let scaling = if ns.iter().all(|&n| n == ns[0]) || (ns[ns.len() - 1] == ns[0] && slope < 0.1) {
        Scaling::F
    } else if window_slopes.len() >= 3
        && window_slopes[window_slopes.len() - 3..]
            .windows(2)
            .all(|w| w[0] > 0.0 && w[1] > 1.1 * w[0])
    {
        Scaling::SupP
    } else if slope >= 0.1 && r2 >= 0.9 && tail_slope <= 1.5 * slope {
        Scaling::P { exponent: slope }
    } else {
        Scaling::Undetermined
    };
    Ok(ScalingFit {
        scaling,
        slope,
        intercept,
        r2,
        window_slopes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n: usize,
    pub ns: Vec<usize>,
    pub residuals: Vec<f64>,
    pub survivor_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmergenceCurve {
    pub points: Vec<CoverResult>,
    pub n_used: usize,
    pub survivor_fraction: f64,
    pub fit: Option<ScalingFit>,
    pub scaling: Scaling,
    pub rungs: Vec<Rung>,
    /// Largest relative change of `N` between the last two rungs.
    pub stabilization: f64,
    pub unreliable: bool,
    pub note: String,
}

impl EmergenceCurve {
    /// One row per scale: `epsilon,N,residual,n_used,survivor_fraction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,N,residual,n_used,survivor_fraction\n");
        for p in &self.points {
            writeln!(
                s,
                "{:.16e},{},{:.16e},{},{:.16e}",
                p.epsilon, p.n_centers, p.residual, self.n_used, self.survivor_fraction
            )
            .unwrap();
        }
        s
    }
}

pub fn emergence_curve(system: &SystemSpec, param: &ParamPoint, query: &EmergenceQuery) -> Result<EmergenceCurve> {
    query.validate()?;
    let g = GroundMetric::for_system(system);
    let starts = sample_starts(system, query)?;
    let mut rungs = Vec::new();
    let mut last = None;
    for &n in &query.n_ladder {
        let cloud = cloud_from_starts(system, param, &starts, n, query.quantize_cell)?;
        let dist = distance_matrix(&cloud.measures, &g)?;
        let weights = cloud.weights();
        let mut coverer = Coverer::new(&dist, &weights, query.max_centers);
        let mut points = Vec::with_capacity(query.epsilons.len());
        let mut running_max = 0;
        for (k, &eps) in query.epsilons.iter().enumerate() {
            let mut r = coverer.cover(eps)?;
            let costs = coverer.kmedian().assignment_costs();
            r.residual_stderr = Some(bootstrap_stderr(costs, &weights, query.seed ^ (k as u64 + 1)));
            running_max = running_max.max(r.n_centers);
            r.n_centers = running_max;
            points.push(r);
        }
        rungs.push(Rung {
            n,
            ns: points.iter().map(|p| p.n_centers).collect(),
            residuals: points.iter().map(|p| p.residual).collect(),
            survivor_fraction: cloud.survivor_fraction,
        });
        last = Some((points, cloud.survivor_fraction));
    }
    let (points, survivor_fraction) = last.expect("nonempty ladder");
    let stabilization = match rungs.as_slice() {
        [.., a, b] => {
            a.ns.iter()
                .zip(&b.ns)
                .map(|(&p, &q)| (q as f64 - p as f64).abs() / p as f64)
                .fold(0.0, f64::max)
        }
        _ => 0.0,
    };
    let ns: Vec<usize> = points.iter().map(|p| p.n_centers).collect();
    let fit = if points.len() >= 4 {
        Some(classify_scaling(&query.epsilons, &ns)?)
    } else {
        None
    };
    Ok(EmergenceCurve {
        scaling: fit.as_ref().map_or(Scaling::Undetermined, |f| f.scaling),
        fit,
        n_used: *query.n_ladder.last().unwrap(),
        survivor_fraction,
        points,
        rungs,
        stabilization,
        unreliable: survivor_fraction < RELIABLE_SURVIVORS,
        note: CENTER_RESTRICTION_NOTE.into(),
    })
}

/// Minimal pairwise distance between measures.
pub fn min_pairwise_w1(measures: &[DiscreteMeasure], g: &GroundMetric) -> Result<f64> {
    let mut best = f64::INFINITY;
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            best = best.min(w1(&measures[i], &measures[j], g)?);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::SystemKind;

    fn points_on_line(xs: &[f64]) -> Vec<DiscreteMeasure> {
        xs.iter()
            .map(|&x| DiscreteMeasure::dirac(&PhasePoint::new1(x)))
            .collect()
    }

    #[test]
    fn single_measure_cloud() {
        let c = points_on_line(&[0.3]);
        let r = covering_number(&c, &[1.0], 1e-3, &GroundMetric::default()).unwrap();
        assert_eq!((r.n_centers, r.residual), (1, 0.0));
    }

    #[test]
    fn two_clusters() {
        let c = points_on_line(&[0.0, 0.0, 0.0, 1.0, 1.0]);
        let w = vec![0.2; 5];
        let r = covering_number(&c, &w, 0.1, &GroundMetric::default()).unwrap();
        assert_eq!(r.n_centers, 2);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn saturation_reports_floor() {
        let c = points_on_line(&[0.0, 0.5, 1.0]);
        let d = distance_matrix(&c, &GroundMetric::default()).unwrap();
        let w = vec![1.0 / 3.0; 3];
        match covering_number_with(&d, &w, 0.01, Some(2)) {
            Err(Error::Saturation { floor, .. }) => assert!((floor - 0.5 / 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn greedy_first_center_is_the_median() {
        let c = points_on_line(&[0.0, 0.1, 0.2, 0.9]);
        let d = distance_matrix(&c, &GroundMetric::default()).unwrap();
        let w = vec![0.25; 4];
        let mut km = KMedian::new(&d, &w);
        km.add_greedy();
        assert!(km.centers() == [1] || km.centers() == [2]);
    }

    #[test]
    fn identity_samples_need_about_five_centers() {
        let id = SystemSpec::new(SystemKind::Identity { dim: 1 }).unwrap();
        let q = EmergenceQuery {
            n_ladder: vec![10],
            sample_count: 100,
            epsilons: vec![0.05],
            seed: 3,
            ..EmergenceQuery::default()
        };
        let cloud = birkhoff_cloud(&id, &ParamPoint::empty(), &q, 10).unwrap();
        assert_eq!(cloud.measures.len(), 100);
        assert!(cloud.measures.iter().all(|m| m.len() == 1));
        let r = covering_number(&cloud.measures, &cloud.weights(), 0.05, &GroundMetric::default()).unwrap();
        assert!((4..=6).contains(&r.n_centers), "{}", r.n_centers);
        assert!(r.residual <= 0.05);
    }

    #[test]
    fn classify_synthetic_curves() {
        let eps = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let fit = classify_scaling(&eps, &[1; 5]).unwrap();
        assert_eq!(fit.scaling, Scaling::F);
        let ns: Vec<usize> = eps.iter().map(|e| (1.0 / (4.0 * e)).round() as usize).collect();
        match classify_scaling(&eps, &ns).unwrap().scaling {
            Scaling::P { exponent } => assert!((exponent - 1.0).abs() <= 0.1, "{exponent}"),
            s => panic!("{s:?}"),
        }
        let eps: Vec<f64> = (0..8).map(|k| 0.5 * 0.7f64.powi(k)).collect();
        let ns: Vec<usize> = eps
            .iter()
            .map(|e| ((1.0 / e).ln().powi(2)).exp().round() as usize)
            .collect();
        assert_eq!(classify_scaling(&eps, &ns).unwrap().scaling, Scaling::SupP);
        assert!(classify_scaling(&eps[..3], &ns[..3]).is_err());
    }

    #[test]
    fn query_validation() {
        let mut q = EmergenceQuery::default();
        assert!(q.validate().is_ok());
        q.epsilons = vec![0.1, 0.2];
        assert!(q.validate().is_err());
        q = EmergenceQuery {
            sample_count: 5,
            ..EmergenceQuery::default()
        };
        assert!(q.validate().is_err());
    }

    #[test]
    fn all_escaping_is_degenerate() {
        let h = SystemSpec::new(SystemKind::Henon { a: 1.4, b: 0.3 }).unwrap();
        let q = EmergenceQuery {
            n_ladder: vec![200],
            sample_count: 10,
            sample_box: Some(PhaseBox::new(vec![3.5, 3.5], vec![4.0, 4.0]).unwrap()),
            ..EmergenceQuery::default()
        };
        assert!(matches!(
            birkhoff_cloud(&h, &ParamPoint::empty(), &q, 200),
            Err(Error::DegenerateCloud { samples: 10 })
        ));
    }
}
