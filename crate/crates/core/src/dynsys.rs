//! Phase spaces, the built-in system catalogue and orbit generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{BranchSymbol, MultiIndexSet};

/// A point of a one- or two-dimensional phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub coords: [f64; 2],
    pub dim: usize,
    pub escaped: bool,
}

impl PhasePoint {
    pub fn new1(x: f64) -> Self {
        PhasePoint {
            coords: [x, 0.0],
            dim: 1,
            escaped: false,
        }
    }

    pub fn new2(x: f64, y: f64) -> Self {
        PhasePoint {
            coords: [x, y],
            dim: 2,
            escaped: false,
        }
    }

    pub fn from_slice(c: &[f64]) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage(format!("non-finite coordinates {c:?}")));
        }
        match c {
            [x] => Ok(Self::new1(*x)),
            [x, y] => Ok(Self::new2(*x, *y)),
            _ => Err(Error::DimensionMismatch(format!(
                "points have 1 or 2 coordinates, got {}",
                c.len()
            ))),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    fn with_coords(&self, coords: [f64; 2]) -> Self {
        PhasePoint { coords, ..*self }
    }

    fn escaped_copy(&self) -> Self {
        PhasePoint { escaped: true, ..*self }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let dx = self.coords[0] - other.coords[0];
        let dy = self.coords[1] - other.coords[1];
        dx.hypot(dy)
    }
}

/// A parameter vector in `[-1, 1]^k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if let Some(v) = a.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Usage(format!("parameter entry {v} outside [-1, 1]")));
        }
        Ok(ParamPoint(a))
    }

    pub fn zeros(k: usize) -> Self {
        ParamPoint(vec![0.0; k])
    }

    pub fn empty() -> Self {
        ParamPoint(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ParamPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamPoint::new(v)
    }
}

impl From<ParamPoint> for Vec<f64> {
    fn from(p: ParamPoint) -> Self {
        p.0
    }
}

/// Axis-aligned box `[lo_j, hi_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PhaseBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
            return Err(Error::InvalidSpec("phase box must have 1 or 2 axes".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidSpec(format!("empty phase box {lo:?}..{hi:?}")));
        }
        Ok(PhaseBox { lo, hi })
    }

    fn square(lo: f64, hi: f64, dim: usize) -> Self {
        PhaseBox {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &PhasePoint) -> bool {
        p.as_slice()
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Lebesgue volume of the box.
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> PhasePoint {
        let c: Vec<f64> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| rng.gen_range(*l..*h))
            .collect();
        PhasePoint::from_slice(&c).expect("finite sample")
    }

    /// Cell centres of a regular `per_axis^dim` grid.
    pub fn grid(&self, per_axis: usize) -> Vec<PhasePoint> {
        let axis = |j: usize| -> Vec<f64> {
            let (l, h) = (self.lo[j], self.hi[j]);
            (0..per_axis)
                .map(|i| l + (h - l) * (i as f64 + 0.5) / per_axis as f64)
                .collect()
        };
        match self.dim() {
            1 => axis(0).into_iter().map(PhasePoint::new1).collect(),
            _ => {
                let (xs, ys) = (axis(0), axis(1));
                xs.iter()
                    .flat_map(|&x| ys.iter().map(move |&y| PhasePoint::new2(x, y)))
                    .collect()
            }
        }
    }
}

fn default_contraction() -> f64 {
    2.0 / 3.0
}

fn default_source_width() -> f64 {
    1.0 / 16.0
}

fn default_sink_rate() -> f64 {
    0.5
}

fn default_dim1() -> usize {
    1
}

/// The built-in systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemKind {
    /// `(x, y) ↦ (x² + a + y, −b x)`.
    Henon { a: f64, b: f64 },
    Identity {
        #[serde(default = "default_dim1")]
        dim: usize,
    },
    /// Circle rotation `x ↦ x + α mod 1`; with `dim = 2` the cylinder map
    /// `(x, y) ↦ (x + α mod 1, y)`.
    Rotation {
        alpha: f64,
        #[serde(default = "default_dim1")]
        dim: usize,
    },
    /// `x ↦ 2x mod 1`.
    Doubling,
    /// The parablender family on `D × ℝ`.
    ParablenderCore {
        d: usize,
        k: usize,
        #[serde(default = "default_contraction")]
        contraction: f64,
    },
    /// The parablender family plus a source branch `I_S`, a saddle branch
    /// `I_P` and the folding branch `I_{P'}`.
    ParablenderFull {
        d: usize,
        k: usize,
        #[serde(default = "default_contraction")]
        contraction: f64,
        #[serde(default = "default_source_width")]
        source_width: f64,
    },
    /// `n` attracting cells tiling the unit square; each cell contracts
    /// affinely towards its centre.
    PlantedSinks {
        n: usize,
        #[serde(default = "default_sink_rate")]
        rate: f64,
    },
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Henon { .. } => "henon",
            SystemKind::Identity { .. } => "identity",
            SystemKind::Rotation { .. } => "rotation",
            SystemKind::Doubling => "doubling",
            SystemKind::ParablenderCore { .. } => "parablender_core",
            SystemKind::ParablenderFull { .. } => "parablender_full",
            SystemKind::PlantedSinks { .. } => "planted_sinks",
        }
    }
}

/// Closed segment of the real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn new(lo: f64, hi: f64) -> Self {
        Segment { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Slope of the orientation-preserving affine map onto `[-1, 1]`.
    pub fn slope(&self) -> f64 {
        2.0 / self.len()
    }

    /// `Q(x) = 2(x − c)/|I|`.
    pub fn chart(&self, x: f64) -> f64 {
        self.slope() * (x - self.center())
    }

    pub fn chart_inverse(&self, u: f64) -> f64 {
        self.center() + u / self.slope()
    }

    fn overlaps(&self, other: &Segment) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Placement of the definition intervals of the parablender systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParablenderLayout {
    pub order: usize,
    pub params: usize,
    pub contraction: f64,
    /// `I_δ` for every branch symbol, indexed by [`BranchSymbol::index`].
    pub branches: Vec<Segment>,
    pub source: Option<Segment>,
    pub saddle: Option<Segment>,
    pub fold: Option<Segment>,
}

/// Inner edge of the core intervals when the system has no source branch.
pub const CORE_INNER_EDGE: f64 = 1.0 / 100.0;
/// Inner edge used by the full system so that `I_S` fits around zero.
pub const FULL_INNER_EDGE: f64 = 1.0 / 16.0;
pub const SADDLE_SEGMENT: Segment = Segment { lo: 0.6, hi: 0.7 };
pub const FOLD_SEGMENT: Segment = Segment { lo: -0.75, hi: -0.65 };

impl ParablenderLayout {
    /// `Card Δ` equal intervals of length `1/(2 Card Δ + 2)`, half of them
    /// evenly spaced in `[-1/2, -inner]` and half in `[inner, 1/2]`.
    pub fn core_intervals(order: usize, params: usize, inner: f64) -> Result<Vec<Segment>> {
        let size = MultiIndexSet::new(order, params).len();
        if size > 20 {
            return Err(Error::TooLarge { size, limit: 20 });
        }
        let count = 1usize << size;
        let len = 1.0 / (2.0 * count as f64 + 2.0);
        let half = count / 2;
        let side = 0.5 - inner;
        let gap = (side - half as f64 * len) / (half as f64 + 1.0);
        if gap <= 0.0 {
            return Err(Error::InvalidSpec("intervals do not fit".into()));
        }
        let mut out = Vec::with_capacity(count);
        for j in 0..half {
            let lo = -0.5 + gap + j as f64 * (len + gap);
            out.push(Segment::new(lo, lo + len));
        }
        for j in 0..half {
            let lo = inner + gap + j as f64 * (len + gap);
            out.push(Segment::new(lo, lo + len));
        }
        Ok(out)
    }

    pub fn core(order: usize, params: usize, contraction: f64) -> Result<Self> {
        Ok(ParablenderLayout {
            order,
            params,
            contraction,
            branches: Self::core_intervals(order, params, CORE_INNER_EDGE)?,
            source: None,
            saddle: None,
            fold: None,
        })
    }

    pub fn full(order: usize, params: usize, contraction: f64, source_width: f64) -> Result<Self> {
        if !(source_width > 0.0 && source_width < 2.0 * FULL_INNER_EDGE) {
            return Err(Error::InvalidSpec(format!(
                "source width {source_width} must lie in (0, {})",
                2.0 * FULL_INNER_EDGE
            )));
        }
        Ok(ParablenderLayout {
            order,
            params,
            contraction,
            branches: Self::core_intervals(order, params, FULL_INNER_EDGE)?,
            source: Some(Segment::new(-source_width / 2.0, source_width / 2.0)),
            saddle: Some(SADDLE_SEGMENT),
            fold: Some(FOLD_SEGMENT),
        })
    }

    pub fn all_segments(&self) -> Vec<Segment> {
        let mut v = self.branches.clone();
        v.extend(self.source);
        v.extend(self.saddle);
        v.extend(self.fold);
        v
    }

    fn validate(&self) -> Result<()> {
        let segs = self.all_segments();
        for (i, a) in segs.iter().enumerate() {
            if a.is_empty() || a.lo <= -1.0 || a.hi >= 1.0 {
                return Err(Error::InvalidSpec(format!("segment {a:?} not inside (-1, 1)")));
            }
            if self.source.is_none() && (a.lo <= 0.0 && 0.0 <= a.hi) {
                return Err(Error::InvalidSpec("core segment contains 0".into()));
            }
            if segs[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(Error::InvalidSpec("definition segments overlap".into()));
            }
        }
        Ok(())
    }

    /// Fixed point of `Q` on the saddle segment.
    pub fn saddle_point(&self) -> Option<f64> {
        self.saddle.map(|s| {
            let q = s.slope();
            q * s.center() / (q - 1.0)
        })
    }

    /// Preimage of the saddle fixed point on the fold segment.
    pub fn fold_point(&self) -> Option<f64> {
        Some(self.fold?.chart_inverse(self.saddle_point()?))
    }

    pub fn symbol(&self, branch: usize) -> BranchSymbol {
        BranchSymbol::from_index(branch, MultiIndexSet::new(self.order, self.params).len())
    }

    /// `Σ_i δ(i) a^i` for branch `δ`.
    pub fn offset(&self, set: &MultiIndexSet, branch: usize, a: &[f64]) -> f64 {
        let sym = BranchSymbol::from_index(branch, set.len());
        (0..set.len()).map(|p| sym.sign(p) * set.monomial(p, a)).sum()
    }
}

/// Identifier of a smooth piece of a piecewise-defined map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SystemSpecRepr {
    kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_box: Option<PhaseBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric_normalizer: Option<f64>,
}

/// An immutable, validated system description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemSpecRepr", into = "SystemSpecRepr")]
pub struct SystemSpec {
    kind: SystemKind,
    phase_box: PhaseBox,
    metric_normalizer: f64,
    layout: Option<ParablenderLayout>,
    multi: Option<MultiIndexSet>,
    grid: Option<(usize, usize)>,
}

impl TryFrom<SystemSpecRepr> for SystemSpec {
    type Error = Error;
    fn try_from(r: SystemSpecRepr) -> Result<Self> {
        let mut spec = SystemSpec::new(r.kind)?;
        if let Some(b) = r.phase_box {
            let b = PhaseBox::new(b.lo, b.hi)?;
            if b.dim() != spec.dim() {
                return Err(Error::InvalidSpec("phase box dimension mismatch".into()));
            }
            spec.phase_box = b;
            spec.metric_normalizer = default_normalizer(&spec.phase_box);
        }
        if let Some(m) = r.metric_normalizer {
            if !(m > 0.0) || m * spec.phase_box.diameter() > 2.0 + 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "metric normalizer {m} must be positive and keep the box diameter ≤ 2"
                )));
            }
            spec.metric_normalizer = m;
        }
        Ok(spec)
    }
}

impl From<SystemSpec> for SystemSpecRepr {
    fn from(s: SystemSpec) -> Self {
        SystemSpecRepr {
            kind: s.kind,
            phase_box: Some(s.phase_box),
            metric_normalizer: Some(s.metric_normalizer),
        }
    }
}

fn default_normalizer(b: &PhaseBox) -> f64 {
    (2.0 / b.diameter()).min(1.0)
}

impl SystemSpec {
    pub fn new(kind: SystemKind) -> Result<Self> {
        let mut layout = None;
        let mut multi = None;
        let mut grid = None;
        let phase_box = match &kind {
            SystemKind::Henon { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidSpec("non-finite Hénon parameters".into()));
                }
                PhaseBox::square(-4.0, 4.0, 2)
            }
            SystemKind::Identity { dim } | SystemKind::Rotation { dim, .. } => {
                if !(1..=2).contains(dim) {
                    return Err(Error::InvalidSpec(format!("dimension {dim} not in {{1, 2}}")));
                }
                if let SystemKind::Rotation { alpha, .. } = &kind {
                    if !alpha.is_finite() {
                        return Err(Error::InvalidSpec("non-finite rotation number".into()));
                    }
                }
                PhaseBox::square(0.0, 1.0, *dim)
            }
            SystemKind::Doubling => PhaseBox::square(0.0, 1.0, 1),
            SystemKind::ParablenderCore { d, k, contraction }
            | SystemKind::ParablenderFull { d, k, contraction, .. } => {
                if *k == 0 {
                    return Err(Error::InvalidSpec("parablender needs k ≥ 1".into()));
                }
                if !(*contraction > 0.0 && *contraction < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "contraction {contraction} must lie in (0, 1)"
                    )));
                }
                let l = match &kind {
                    SystemKind::ParablenderFull { source_width, .. } => {
                        ParablenderLayout::full(*d, *k, *contraction, *source_width)?
                    }
                    _ => ParablenderLayout::core(*d, *k, *contraction)?,
                };
                l.validate()?;
                layout = Some(l);
                multi = Some(MultiIndexSet::new(*d, *k));
                PhaseBox::new(vec![-1.0, -4.0], vec![1.0, 4.0])?
            }
            SystemKind::PlantedSinks { n, rate } => {
                if *n == 0 {
                    return Err(Error::InvalidSpec("need at least one planted sink".into()));
                }
                if !(*rate > 0.0 && *rate < 1.0) {
                    return Err(Error::InvalidSpec(format!("sink rate {rate} not in (0, 1)")));
                }
                let rows = (1..=*n).filter(|r| n % r == 0 && r * r <= *n).max().unwrap_or(1);
                grid = Some((rows, n / rows));
                PhaseBox::square(0.0, 1.0, 2)
            }
        };
        let metric_normalizer = default_normalizer(&phase_box);
        Ok(SystemSpec {
            kind,
            phase_box,
            metric_normalizer,
            layout,
            multi,
            grid,
        })
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn phase_box(&self) -> &PhaseBox {
        &self.phase_box
    }

    pub fn metric_normalizer(&self) -> f64 {
        self.metric_normalizer
    }

    pub fn layout(&self) -> Option<&ParablenderLayout> {
        self.layout.as_ref()
    }

    pub fn multi_index(&self) -> Option<&MultiIndexSet> {
        self.multi.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.phase_box.dim()
    }

    /// Number of family parameters `k`.
    pub fn param_dim(&self) -> usize {
        match &self.kind {
            SystemKind::ParablenderCore { k, .. } | SystemKind::ParablenderFull { k, .. } => *k,
            _ => 0,
        }
    }

    pub fn is_piecewise(&self) -> bool {
        !matches!(self.kind, SystemKind::Henon { .. } | SystemKind::Identity { .. })
    }

    /// Planted sink centres, row-major.
    pub fn planted_centers(&self) -> Vec<PhasePoint> {
        let Some((rows, cols)) = self.grid else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(PhasePoint::new2(
                    (c as f64 + 0.5) / cols as f64,
                    (r as f64 + 0.5) / rows as f64,
                ));
            }
        }
        out
    }

    fn check(&self, param: &ParamPoint, z: &PhasePoint) -> Result<()> {
        if param.len() != self.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "system takes {} parameters, got {}",
                self.param_dim(),
                param.len()
            )));
        }
        if z.dim != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "system is {}-dimensional, point has {} coordinates",
                self.dim(),
                z.dim
            )));
        }
        Ok(())
    }

    /// The smooth piece containing `z`, or `None` outside the domain.
    pub fn branch_of(&self, z: &PhasePoint) -> Option<BranchId> {
        match &self.kind {
            SystemKind::Henon { .. } | SystemKind::Identity { .. } => Some(BranchId(0)),
            SystemKind::Rotation { alpha, .. } => {
                let t = z.x() + alpha.rem_euclid(1.0);
                Some(BranchId(usize::from(t >= 1.0)))
            }
            SystemKind::Doubling => Some(BranchId(usize::from(z.x() >= 0.5))),
            SystemKind::PlantedSinks { .. } => {
                let (rows, cols) = self.grid.expect("planted grid");
                let c = ((z.x() * cols as f64).floor().max(0.0) as usize).min(cols - 1);
                let r = ((z.y() * rows as f64).floor().max(0.0) as usize).min(rows - 1);
                Some(BranchId(r * cols + c))
            }
            SystemKind::ParablenderCore { .. } | SystemKind::ParablenderFull { .. } => {
                let layout = self.layout.as_ref().expect("layout");
                layout
                    .all_segments()
                    .iter()
                    .position(|s| s.contains(z.x()))
                    .map(BranchId)
            }
        }
    }

    /// Whether `z` sits on a discontinuity or a domain edge of a piecewise map.
    pub fn on_branch_boundary(&self, z: &PhasePoint) -> bool {
        match &self.kind {
            SystemKind::PlantedSinks { .. } => {
                let (rows, cols) = self.grid.expect("planted grid");
                let on = |v: f64, m: usize| {
                    let t = v * m as f64;
                    t > 0.0 && t < m as f64 && t == t.round()
                };
                on(z.x(), cols) || on(z.y(), rows)
            }
            SystemKind::ParablenderCore { .. } | SystemKind::ParablenderFull { .. } => self
                .layout
                .as_ref()
                .expect("layout")
                .all_segments()
                .iter()
                .any(|s| z.x() == s.lo || z.x() == s.hi),
            _ => false,
        }
    }

    /// Apply the formula of `branch` at `z`, ignoring whether `z` lies in the branch.
    pub fn step_on_branch(&self, param: &ParamPoint, z: &PhasePoint, branch: BranchId) -> [f64; 2] {
        let [x, y] = z.coords;
        match &self.kind {
            SystemKind::Henon { a, b } => [x * x + a + y, -b * x],
            SystemKind::Identity { .. } => [x, y],
            SystemKind::Rotation { alpha, .. } => [x + alpha.rem_euclid(1.0) - branch.0 as f64, y],
            SystemKind::Doubling => [2.0 * x - branch.0 as f64, 0.0],
            SystemKind::PlantedSinks { rate, .. } => {
                let c = self.planted_centers()[branch.0];
                [c.x() + rate * (x - c.x()), c.y() + rate * (y - c.y())]
            }
            SystemKind::ParablenderCore { .. } | SystemKind::ParablenderFull { .. } => {
                let layout = self.layout.as_ref().expect("layout");
                let set = self.multi.as_ref().expect("multi-index set");
                let n = layout.branches.len();
                let b = branch.0;
                if b < n {
                    let seg = layout.branches[b];
                    [
                        seg.chart(x),
                        layout.contraction * y + layout.offset(set, b, param.as_slice()),
                    ]
                } else if b == n {
                    let s = layout.source.expect("source");
                    [s.chart(x), y / s.len().sqrt()]
                } else if b == n + 1 {
                    let p = layout.saddle.expect("saddle");
                    [p.chart(x), p.len() * p.len() * y]
                } else {
                    let xp = layout.saddle_point().expect("saddle point");
                    let xf = layout.fold_point().expect("fold point");
                    [y - (x - xf) * (x - xf) + xp, xf - x]
                }
            }
        }
    }

    pub fn jacobian_on_branch(&self, z: &PhasePoint, branch: BranchId) -> [[f64; 2]; 2] {
        let [x, _] = z.coords;
        match &self.kind {
            SystemKind::Henon { b, .. } => [[2.0 * x, 1.0], [-b, 0.0]],
            SystemKind::Identity { .. } | SystemKind::Rotation { .. } => [[1.0, 0.0], [0.0, 1.0]],
            SystemKind::Doubling => [[2.0, 0.0], [0.0, 1.0]],
            SystemKind::PlantedSinks { rate, .. } => [[*rate, 0.0], [0.0, *rate]],
            SystemKind::ParablenderCore { .. } | SystemKind::ParablenderFull { .. } => {
                let layout = self.layout.as_ref().expect("layout");
                let n = layout.branches.len();
                let b = branch.0;
                if b < n {
                    [[layout.branches[b].slope(), 0.0], [0.0, layout.contraction]]
                } else if b == n {
                    let s = layout.source.expect("source");
                    [[s.slope(), 0.0], [0.0, 1.0 / s.len().sqrt()]]
                } else if b == n + 1 {
                    let p = layout.saddle.expect("saddle");
                    [[p.slope(), 0.0], [0.0, p.len() * p.len()]]
                } else {
                    let xf = layout.fold_point().expect("fold point");
                    [[-2.0 * (x - xf), 1.0], [-1.0, 0.0]]
                }
            }
        }
    }

    /// One application of the map. Points leaving the domain or the phase box
    /// come back flagged as escaped.
    pub fn step(&self, param: &ParamPoint, z: &PhasePoint) -> Result<PhasePoint> {
        self.check(param, z)?;
        if z.escaped {
            return Ok(*z);
        }
        let Some(branch) = self.branch_of(z) else {
            return Ok(z.escaped_copy());
        };
        let mut c = self.step_on_branch(param, z, branch);
        if matches!(self.kind, SystemKind::Rotation { .. } | SystemKind::Doubling) {
            // keep the circle chart half-open
            c[0] = c[0].rem_euclid(1.0);
            if c[0] >= 1.0 {
                c[0] = 0.0;
            }
        }
        let out = z.with_coords(c);
        if c.iter().any(|v| !v.is_finite()) || !self.phase_box.contains(&out) {
            return Ok(z.escaped_copy());
        }
        Ok(out)
    }

    /// Exact Jacobian of [`SystemSpec::step`] at `z`.
    pub fn jacobian(&self, param: &ParamPoint, z: &PhasePoint) -> Result<Jacobian> {
        self.check(param, z)?;
        if z.escaped {
            return Err(Error::OutsideDomain(z.as_slice().to_vec()));
        }
        if self.on_branch_boundary(z) {
            return Err(Error::SingularLocus(z.as_slice().to_vec()));
        }
        let branch = self
            .branch_of(z)
            .ok_or_else(|| Error::OutsideDomain(z.as_slice().to_vec()))?;
        Ok(Jacobian {
            m: self.jacobian_on_branch(z, branch),
            dim: self.dim(),
        })
    }

    /// Preimage of `z` under the branch `branch` of a parablender system.
    pub fn inverse_branch(&self, param: &ParamPoint, z: &PhasePoint, branch: BranchId) -> Result<PhasePoint> {
        self.check(param, z)?;
        let layout = self
            .layout
            .as_ref()
            .ok_or_else(|| Error::Usage("inverse branches exist only for parablender systems".into()))?;
        let set = self.multi.as_ref().expect("multi-index set");
        let n = layout.branches.len();
        let segments = layout.all_segments();
        let b = branch.0;
        if b >= segments.len() {
            return Err(Error::Usage(format!("no branch {b}")));
        }
        let [u, v] = z.coords;
        let no_preimage = || Error::NoPreimage(z.as_slice().to_vec());
        let (x, y) = if b <= n + 1 {
            if !(-1.0..=1.0).contains(&u) {
                return Err(no_preimage());
            }
            let x = segments[b].chart_inverse(u);
            let y = if b < n {
                (v - layout.offset(set, b, param.as_slice())) / layout.contraction
            } else if b == n {
                v * segments[b].len().sqrt()
            } else {
                v / (segments[b].len() * segments[b].len())
            };
            (x, y)
        } else {
            let xp = layout.saddle_point().expect("saddle point");
            let xf = layout.fold_point().expect("fold point");
            let x = xf - v;
            if !segments[b].contains(x) {
                return Err(no_preimage());
            }
            (x, u + (x - xf) * (x - xf) - xp)
        };
        Ok(PhasePoint::new2(x, y))
    }

    /// Iterate `n` times starting from `z0`; the trajectory has `n` points
    /// (`z0` included). After escape the sentinel is repeated.
    pub fn orbit(&self, param: &ParamPoint, z0: &PhasePoint, n: usize) -> Result<Trajectory> {
        if n == 0 {
            return Err(Error::Usage("orbit length must be at least 1".into()));
        }
        self.check(param, z0)?;
        let mut start = *z0;
        if !self.phase_box.contains(&start) {
            start.escaped = true;
        }
        let points = if matches!(self.kind, SystemKind::Doubling) && !start.escaped {
            doubling_orbit(start.x(), n)
        } else {
            let mut points = Vec::with_capacity(n);
            let mut z = start;
            points.push(z);
            for _ in 1..n {
                z = self.step(param, &z)?;
                points.push(z);
            }
            points
        };
        Ok(Trajectory {
            start,
            points,
            param: param.clone(),
        })
    }
}

/// Orbit of `x ↦ 2x mod 1` that does not collapse onto the dyadic zero after
/// 53 steps: `x0` is read as the real number whose binary expansion continues
/// with pseudo-random bits derived from the bits of `x0`.
fn doubling_orbit(x0: f64, n: usize) -> Vec<PhasePoint> {
    const MANTISSA: u32 = 53;
    let scale = (1u64 << MANTISSA) as f64;
    let mut window = (x0 * scale) as u64;
    let mut tail = ChaCha8Rng::seed_from_u64(x0.to_bits());
    let mut bits: u64 = 0;
    let mut left = 0;
    let mut out = Vec::with_capacity(n);
    out.push(PhasePoint::new1(x0));
    for _ in 1..n {
        if left == 0 {
            bits = tail.gen();
            left = 64;
        }
        let next = bits & 1;
        bits >>= 1;
        left -= 1;
        window = ((window << 1) | next) & ((1u64 << MANTISSA) - 1);
        out.push(PhasePoint::new1(window as f64 / scale));
    }
    out
}

/// A 1×1 or 2×2 real matrix stored in the top-left of a 2×2 array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian {
    pub m: [[f64; 2]; 2],
    pub dim: usize,
}

impl Jacobian {
    pub fn identity(dim: usize) -> Self {
        Jacobian {
            m: [[1.0, 0.0], [0.0, 1.0]],
            dim,
        }
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Jacobian) -> Jacobian {
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j];
            }
        }
        if self.dim == 1 {
            m[0][1] = 0.0;
            m[1][0] = 0.0;
            m[1][1] = 1.0;
        }
        Jacobian { m, dim: self.dim }
    }
}

/// A finite orbit segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: PhasePoint,
    pub points: Vec<PhasePoint>,
    pub param: ParamPoint,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the first escaped point, if any.
    pub fn escape_time(&self) -> Option<usize> {
        self.points.iter().position(|p| p.escaped)
    }
}
