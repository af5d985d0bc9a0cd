//! Finitely supported probability measures and exact Wasserstein-1 distance.
//!
//! The distance uses the ground cost `min(scale·|x − y|, cap)` with `cap = 2`,
//! which by Kantorovich duality equals the supremum of `∫φ dμ − ∫φ dν` over
//! 1-Lipschitz `φ` with values in `[−1, 1]`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynsys::{PhasePoint, SystemSpec, Trajectory};
use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// A probability measure with finitely many atoms in a 1- or 2-dimensional space.
///
/// Atoms are kept sorted by coordinates and pairwise distinct, and weights are
/// strictly positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for DiscreteMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        let atoms = r
            .atoms
            .iter()
            .map(|a| {
                if a.len() != r.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "atom {a:?} in a {}-dimensional measure",
                        r.dim
                    )));
                }
                Ok([a[0], a.get(1).copied().unwrap_or(0.0)])
            })
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(r.dim, atoms, r.weights)
    }
}

impl From<DiscreteMeasure> for MeasureRepr {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureRepr {
            dim: m.dim,
            atoms: m.atoms.iter().map(|a| a[..m.dim].to_vec()).collect(),
            weights: m.weights,
        }
    }
}

fn cmp_atoms(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

impl DiscreteMeasure {
    /// Atoms with equal coordinates are merged; zero weights are dropped.
    pub fn new(dim: usize, atoms: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::DimensionMismatch(format!("dimension {dim}")));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch("atoms and weights differ in length".into()));
        }
        if atoms.is_empty() {
            return Err(Error::Usage("empty measure".into()));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Usage("non-finite atom coordinate".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Usage("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Usage(format!("weights sum to {total}, not 1")));
        }
        let mut pairs: Vec<([f64; 2], f64)> = atoms
            .into_iter()
            .map(|mut a| {
                if dim == 1 {
                    a[1] = 0.0;
                }
                a
            })
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .collect();
        pairs.sort_by(|a, b| cmp_atoms(&a.0, &b.0));
        let mut atoms: Vec<[f64; 2]> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            if atoms.last() == Some(&a) {
                *weights.last_mut().unwrap() += w;
            } else {
                atoms.push(a);
                weights.push(w);
            }
        }
        Ok(DiscreteMeasure { dim, atoms, weights })
    }

    pub fn dirac(p: &PhasePoint) -> Self {
        DiscreteMeasure {
            dim: p.dim,
            atoms: vec![p.coords],
            weights: vec![1.0],
        }
    }

    /// Uniform measure on the given points, counting multiplicity.
    pub fn uniform(points: &[PhasePoint]) -> Result<Self> {
        let dim = points.first().map_or(1, |p| p.dim);
        if points.iter().any(|p| p.dim != dim) {
            return Err(Error::DimensionMismatch("mixed point dimensions".into()));
        }
        let mut atoms: Vec<[f64; 2]> = points.iter().map(|p| p.coords).collect();
        if atoms.is_empty() {
            return Err(Error::Usage("empty measure".into()));
        }
        atoms.sort_by(cmp_atoms);
        let n = atoms.len() as f64;
        let mut out_atoms: Vec<[f64; 2]> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for a in atoms {
            if out_atoms.last() == Some(&a) {
                *counts.last_mut().unwrap() += 1;
            } else {
                out_atoms.push(a);
                counts.push(1);
            }
        }
        Ok(DiscreteMeasure {
            dim,
            atoms: out_atoms,
            weights: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[[f64; 2]] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(if self.dim == 1 { "x,weight\n" } else { "x,y,weight\n" });
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for c in &a[..self.dim] {
                write!(s, "{c:.16e},").unwrap();
            }
            writeln!(s, "{w:.16e}").unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Usage("empty CSV".into()))?;
        let dim = header.split(',').count().saturating_sub(1);
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Usage(format!("bad CSV row {line:?}: {e}")))?;
            if vals.len() != dim + 1 {
                return Err(Error::DimensionMismatch(format!("CSV row {line:?}")));
            }
            atoms.push([vals[0], if dim == 2 { vals[1] } else { 0.0 }]);
            weights.push(vals[dim]);
        }
        DiscreteMeasure::new(dim, atoms, weights)
    }
}

/// Uniform measure on the trajectory points.
pub fn empirical_from_trajectory(t: &Trajectory) -> Result<DiscreteMeasure> {
    if let Some(time) = t.escape_time() {
        return Err(Error::Escaped { time });
    }
    DiscreteMeasure::uniform(&t.points)
}

/// Ground cost `min(scale·d(x, y), cap)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundMetric {
    pub scale: f64,
    pub cap: f64,
}

impl Default for GroundMetric {
    fn default() -> Self {
        GroundMetric { scale: 1.0, cap: 2.0 }
    }
}

impl GroundMetric {
    /// Euclidean metric rescaled so that the system's phase box has diameter at most 2.
    pub fn for_system(system: &SystemSpec) -> Self {
        GroundMetric {
            scale: system.metric_normalizer(),
            cap: 2.0,
        }
    }

    pub fn cost(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        (self.scale * d).min(self.cap)
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::Usage("empty measure".into()));
    }
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch(format!(
            "measures of dimension {} and {}",
            mu.dim, nu.dim
        )));
    }
    Ok(())
}

/// Exact Wasserstein-1 distance under the truncated ground cost.
///
/// Single atoms and one-dimensional pairs whose joint support is shorter than
/// the cap are solved in closed form (no leg can reach the cap there, so the
/// quantile coupling is optimal); everything else goes to the network simplex.
pub fn w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &GroundMetric) -> Result<f64> {
    check_pair(mu, nu)?;
    if mu.len() == 1 {
        return Ok(single_atom(&mu.atoms[0], nu, g));
    }
    if nu.len() == 1 {
        return Ok(single_atom(&nu.atoms[0], mu, g));
    }
    if mu.dim == 1 {
        let lo = mu.atoms[0][0].min(nu.atoms[0][0]);
        let hi = mu.atoms[mu.len() - 1][0].max(nu.atoms[nu.len() - 1][0]);
        if g.scale * (hi - lo) <= g.cap {
            return Ok(quantile_coupling_cost(mu, nu, g));
        }
    }
    Ok(w1_network(mu, nu, g)?.cost)
}

fn single_atom(x: &[f64; 2], nu: &DiscreteMeasure, g: &GroundMetric) -> f64 {
    nu.atoms.iter().zip(&nu.weights).map(|(a, w)| w * g.cost(x, a)).sum()
}

/// `∫|F_μ − F_ν|` on the line, computed through the quantile coupling with the
/// cap applied to each transported leg.
pub fn w1_line_closedform(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &GroundMetric) -> Result<f64> {
    check_pair(mu, nu)?;
    if mu.dim != 1 {
        return Err(Error::Usage("closed-form W1 needs one-dimensional atoms".into()));
    }
    Ok(quantile_coupling_cost(mu, nu, g))
}

fn quantile_coupling_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &GroundMetric) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut left_mu, mut left_nu) = (mu.weights[0], nu.weights[0]);
    let mut cost = 0.0;
    loop {
        let m = left_mu.min(left_nu);
        cost += m * g.cost(&mu.atoms[i], &nu.atoms[j]);
        left_mu -= m;
        left_nu -= m;
        if left_mu <= left_nu {
            i += 1;
            if i == mu.len() {
                break;
            }
            left_mu = mu.weights[i];
        } else {
            j += 1;
            if j == nu.len() {
                break;
            }
            left_nu = nu.weights[j];
        }
    }
    cost
}

/// Optimal transport plan as `(source atom, target atom, mass)` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

/// Exact W1 by the network simplex on the bipartite transport graph.
pub fn w1_network(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &GroundMetric) -> Result<TransportPlan> {
    check_pair(mu, nu)?;
    let cost: Vec<f64> = mu
        .atoms
        .iter()
        .flat_map(|a| nu.atoms.iter().map(move |b| g.cost(a, b)))
        .collect();
    Ok(NetworkSimplex::new(&mu.weights, &nu.weights, cost).solve())
}

/// Primal network simplex for a balanced transportation problem.
///
/// Node `i < m` is a supply node, `m + j` a demand node and `m + n` an
/// artificial root joined to every node by an expensive artificial arc; the
/// initial basis is the star of artificial arcs. The leaving arc follows the
/// strongly feasible tree rule, which rules out cycling on degenerate pivots.
struct NetworkSimplex {
    m: usize,
    n: usize,
    supply: Vec<f64>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    tree_adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    next_arc: usize,
}

const PIVOT_TOL: f64 = 1e-12;
const NONE: usize = usize::MAX;

impl NetworkSimplex {
    fn new(a: &[f64], b: &[f64], real_cost: Vec<f64>) -> Self {
        let (m, n) = (a.len(), b.len());
        let nodes = m + n + 1;
        let real = m * n;
        let max_cost = real_cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let art = (max_cost + 1.0) * nodes as f64;
        let mut cost = real_cost;
        cost.extend(std::iter::repeat_n(art, m + n));
        let mut supply: Vec<f64> = a.to_vec();
        supply.extend(b.iter().map(|w| -w));
        let mut flow = vec![0.0; real + m + n];
        let mut in_tree = vec![false; real + m + n];
        let mut tree_adj = vec![Vec::new(); nodes];
        for u in 0..m + n {
            let e = real + u;
            flow[e] = supply[u].abs();
            in_tree[e] = true;
            tree_adj[u].push(e);
            tree_adj[m + n].push(e);
        }
        let mut s = NetworkSimplex {
            m,
            n,
            supply,
            cost,
            flow,
            in_tree,
            tree_adj,
            parent: vec![NONE; nodes],
            pred: vec![NONE; nodes],
            up: vec![false; nodes],
            depth: vec![0; nodes],
            pi: vec![0.0; nodes],
            next_arc: 0,
        };
        s.rebuild_tree();
        s
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    fn ends(&self, e: usize) -> (usize, usize) {
        let real = self.m * self.n;
        if e < real {
            (e / self.n, self.m + e % self.n)
        } else {
            let u = e - real;
            if self.supply[u] >= 0.0 {
                (u, self.root())
            } else {
                (self.root(), u)
            }
        }
    }

    fn rebuild_tree(&mut self) {
        let root = self.root();
        self.parent[root] = NONE;
        self.pred[root] = NONE;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for k in 0..self.tree_adj[u].len() {
                let e = self.tree_adj[u][k];
                if e == self.pred[u] {
                    continue;
                }
                let (s, t) = self.ends(e);
                let v = if s == u { t } else { s };
                self.parent[v] = u;
                self.pred[v] = e;
                self.depth[v] = self.depth[u] + 1;
                // reduced cost c_e + π_s − π_t vanishes on tree arcs
                if s == v {
                    self.up[v] = true;
                    self.pi[v] = self.pi[u] - self.cost[e];
                } else {
                    self.up[v] = false;
                    self.pi[v] = self.pi[u] + self.cost[e];
                }
                stack.push(v);
            }
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        let (s, t) = self.ends(e);
        self.cost[e] + self.pi[s] - self.pi[t]
    }

    /// Block-search pricing over the real arcs.
    fn find_entering(&mut self) -> Option<usize> {
        let arcs = self.m * self.n;
        let block = ((arcs as f64).sqrt().ceil() as usize).max(10);
        let mut best = None;
        let mut best_rc = 0.0;
        let mut seen = 0;
        let mut e = self.next_arc;
        for _ in 0..arcs {
            if !self.in_tree[e] {
                let rc = self.reduced_cost(e);
                let (s, t) = self.ends(e);
                let tol = PIVOT_TOL * (1.0 + self.pi[s].abs() + self.pi[t].abs());
                if rc < -tol && rc < best_rc {
                    best_rc = rc;
                    best = Some(e);
                }
            }
            e += 1;
            if e == arcs {
                e = 0;
            }
            seen += 1;
            if seen == block {
                if best.is_some() {
                    break;
                }
                seen = 0;
            }
        }
        self.next_arc = e;
        best
    }

    fn pivot(&mut self, entering: usize) {
        let (first, second) = self.ends(entering);
        let (mut a, mut b) = (first, second);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        // Flow is pushed along first → second, up to the join and back down.
        let mut delta = f64::INFINITY;
        let mut leaving_node = NONE;
        let mut u = first;
        while u != join {
            if self.up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    leaving_node = u;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    leaving_node = u;
                }
            }
            u = self.parent[u];
        }
        debug_assert!(leaving_node != NONE, "unbounded transport problem");
        let delta = delta.max(0.0);

        if delta > 0.0 {
            self.flow[entering] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += if self.up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let leaving = self.pred[leaving_node];
        self.in_tree[leaving] = false;
        let (ls, lt) = self.ends(leaving);
        for node in [ls, lt] {
            let adj = &mut self.tree_adj[node];
            let pos = adj.iter().position(|&x| x == leaving).expect("tree arc");
            adj.swap_remove(pos);
        }
        self.flow[leaving] = 0.0;
        self.in_tree[entering] = true;
        self.tree_adj[first].push(entering);
        self.tree_adj[second].push(entering);
        // keep adjacency order deterministic
        self.tree_adj[first].sort_unstable();
        self.tree_adj[second].sort_unstable();
        self.tree_adj[ls].sort_unstable();
        self.tree_adj[lt].sort_unstable();
        self.rebuild_tree();
    }

    fn solve(mut self) -> TransportPlan {
        let mut pivots = 0;
        while let Some(e) = self.find_entering() {
            self.pivot(e);
            pivots += 1;
        }
        let mut flows = Vec::new();
        let mut cost = 0.0;
        for e in 0..self.m * self.n {
            if self.flow[e] > 0.0 {
                cost += self.flow[e] * self.cost[e];
                flows.push((e / self.n, e % self.n, self.flow[e]));
            }
        }
        TransportPlan { cost, flows, pivots }
    }
}

/// Bin the atoms to the grid of pitch `cell` anchored at the origin, moving
/// each atom to the center of its cell.
pub fn quantize(mu: &DiscreteMeasure, cell: f64) -> Result<DiscreteMeasure> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::Usage(format!("cell must be positive, got {cell}")));
    }
    let snap = |v: f64| ((v / cell).floor() + 0.5) * cell;
    let atoms = mu
        .atoms
        .iter()
        .map(|a| {
            if mu.dim == 1 {
                [snap(a[0]), 0.0]
            } else {
                [snap(a[0]), snap(a[1])]
            }
        })
        .collect();
    // weights already sum to one; rebuild through `new` to merge bins
    let total: f64 = mu.weights.iter().sum();
    DiscreteMeasure::new(mu.dim, atoms, mu.weights.iter().map(|w| w / total).collect())
}
