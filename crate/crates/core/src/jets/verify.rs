//! Interval verification of the covered-domain property of the jet dynamics.
//!
//! At `a0 = 0` the inverse branch `g_δ` acts on a jet coefficient-wise:
//! `x_i ↦ x_i/q_δ (+ c_δ for i = 0)` and `y_i ↦ (y_i − δ(i))/λ`. A box `B` of
//! jets is certified when, for every `δ`, the part of `B` selected by `δ`
//! (`δ(i)·y_i ≥ 0` for every `i`) is mapped by `g_δ` back into `B`, with all
//! arithmetic rounded outward. Every jet of such a box then has an infinite
//! sequence of preimages inside the box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{jet_branch_inverse_map, BranchSymbol, Jet, JetBranchInverse, MultiIndexSet};
use crate::error::{Error, Result};
use crate::interval::Interval;

/// Largest `|E|` for which all `2^|E|` branch symbols are enumerated.
pub const MAX_INDEX_SET: usize = 12;

/// A box of jets: one interval per x- and y-coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetBox {
    pub x: Vec<Interval>,
    pub y: Vec<Interval>,
}

impl JetBox {
    /// `{|x_i| ≤ x_bound, |y_i| ≤ y_bound}`.
    pub fn symmetric(len: usize, x_bound: f64, y_bound: f64) -> Self {
        JetBox {
            x: vec![Interval::symmetric(x_bound); len],
            y: vec![Interval::symmetric(y_bound); len],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn contains(&self, jet: &Jet) -> bool {
        jet.coeffs.len() == self.len()
            && jet
                .coeffs
                .iter()
                .zip(self.x.iter().zip(&self.y))
                .all(|(c, (x, y))| x.contains(c[0]) && y.contains(c[1]))
    }

    pub fn contains_box(&self, other: &JetBox) -> bool {
        self.x.iter().zip(&other.x).all(|(s, o)| o.is_subset_of(s))
            && self.y.iter().zip(&other.y).all(|(s, o)| o.is_subset_of(s))
    }

    fn excess(&self, other: &JetBox) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(s, o)| o.excess_over(s))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The part of the box where `δ(i)·y_i ≥ 0` for every `i`, or `None` if empty.
    pub fn select(&self, symbol: &BranchSymbol) -> Option<JetBox> {
        let y = self
            .y
            .iter()
            .enumerate()
            .map(|(p, iv)| {
                let half = if symbol.sign(p) > 0.0 {
                    Interval::new(0.0, f64::INFINITY)
                } else {
                    Interval::new(f64::NEG_INFINITY, 0.0)
                };
                iv.intersect(&half)
            })
            .collect::<Option<Vec<_>>>()?;
        Some(JetBox { x: self.x.clone(), y })
    }

    pub fn y_width(&self) -> Vec<f64> {
        self.y.iter().map(Interval::width).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Covered,
    NotCovered,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub y_bound: f64,
    pub closes: bool,
    /// Largest amount by which a branch image leaves the box.
    pub max_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchImage {
    pub symbol: Vec<i8>,
    pub image: JetBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Vertical contraction `λ` of the forward branches.
    pub contraction: f64,
    pub x_bound: f64,
    /// Starting y-bound; `1` is the box `Ô'`.
    pub initial_y_bound: f64,
    pub growth: f64,
    pub y_cap: f64,
    pub max_index_set: usize,
    /// Node budget of the escape search used for negative certificates.
    pub escape_budget: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            contraction: 2.0 / 3.0,
            x_bound: 0.5,
            initial_y_bound: 1.0,
            growth: 1.05,
            y_cap: 3.0,
            max_index_set: MAX_INDEX_SET,
            escape_budget: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverCertificate {
    pub order: usize,
    pub params: usize,
    pub index_set: Vec<Vec<u32>>,
    pub options: VerifyOptions,
    pub verdict: Verdict,
    /// `{|x_i| ≤ 1/2, |y_i| ≤ 1}` and whether it closes on its own.
    pub literal_box: JetBox,
    pub literal_box_closes: bool,
    pub literal_box_excess: f64,
    pub certified_box: Option<JetBox>,
    /// `g_δ` applied to the selected part of the certified box, per symbol.
    pub branch_images: Vec<BranchImage>,
    /// A box of jets none of which has a bounded backward orbit.
    pub counterexample: Option<JetBox>,
    pub trace: Vec<TraceStep>,
}

fn branch_maps(set: &MultiIndexSet, contraction: f64) -> Result<Vec<JetBranchInverse>> {
    let zero = vec![0.0; set.params()];
    (0..set.symbol_count())
        .map(|s| {
            jet_branch_inverse_map(
                &BranchSymbol::from_index(s, set.len()),
                set.order(),
                set.params(),
                contraction,
                &zero,
            )
        })
        .collect()
}

struct BoxCheck {
    closes: bool,
    max_excess: f64,
    images: Vec<BranchImage>,
}

fn check_box(maps: &[JetBranchInverse], b: &JetBox) -> BoxCheck {
    let images: Vec<Option<BranchImage>> = maps
        .par_iter()
        .map(|g| {
            let sel = b.select(&g.symbol)?;
            let (x, y) = g.apply_box(&sel.x, &sel.y);
            Some(BranchImage {
                symbol: g.symbol.signs().to_vec(),
                image: JetBox { x, y },
            })
        })
        .collect();
    let images: Vec<BranchImage> = images.into_iter().flatten().collect();
    let max_excess = images
        .iter()
        .map(|im| b.excess(&im.image))
        .fold(f64::NEG_INFINITY, f64::max);
    BoxCheck {
        closes: images.iter().all(|im| b.contains_box(&im.image)),
        max_excess,
        images,
    }
}

/// Certify the covered-domain property of the core parablender jet dynamics at
/// `a0 = 0` with the default options.
pub fn verify_covered_domain(order: usize, params: usize) -> Result<CoverCertificate> {
    verify_covered_domain_with(order, params, &VerifyOptions::default())
}

pub fn verify_covered_domain_with(order: usize, params: usize, opts: &VerifyOptions) -> Result<CoverCertificate> {
    if params == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    if !(opts.contraction > 0.0 && opts.contraction < 1.0) || !(opts.growth > 1.0) {
        return Err(Error::Usage(
            "contraction must lie in (0, 1) and growth exceed 1".into(),
        ));
    }
    let set = MultiIndexSet::bounded(order, params, opts.max_index_set)?;
    let maps = branch_maps(&set, opts.contraction)?;

    let literal = JetBox::symmetric(set.len(), 0.5, 1.0);
    let literal_check = check_box(&maps, &literal);

    let mut trace = Vec::new();
    let mut y_bound = opts.initial_y_bound;
    let mut certified = None;
    for iteration in 0.. {
        let b = JetBox::symmetric(set.len(), opts.x_bound, y_bound);
        let check = check_box(&maps, &b);
        trace.push(TraceStep {
            iteration,
            y_bound,
            closes: check.closes,
            max_excess: check.max_excess,
        });
        if check.closes {
            certified = Some((b, check.images));
            break;
        }
        if y_bound >= opts.y_cap {
            break;
        }
        y_bound = (y_bound * opts.growth).min(opts.y_cap);
    }

    let (verdict, certified_box, branch_images, counterexample) = match certified {
        Some((b, images)) => (Verdict::Covered, Some(b), images, None),
        None => match find_escaping_box(&set, opts) {
            Some(cx) => (Verdict::NotCovered, None, Vec::new(), Some(cx)),
            None => (Verdict::Inconclusive, None, Vec::new(), None),
        },
    };

    Ok(CoverCertificate {
        order,
        params,
        index_set: set.iter().map(|i| i.to_vec()).collect(),
        options: opts.clone(),
        verdict,
        literal_box: literal,
        literal_box_closes: literal_check.closes,
        literal_box_excess: literal_check.max_excess,
        certified_box,
        branch_images,
        counterexample,
        trace,
    })
}

/// Look for a box of jets with no backward orbit inside `|y_i| ≤ y_cap`.
///
/// At `a0 = 0` the branch maps act on each coefficient separately and every
/// symbol assigns `±1` to the constant coefficient, so it suffices to show
/// that the constant y-coefficient escapes under both one-dimensional
/// inverse branches `y ↦ (y ∓ 1)/λ`.
fn find_escaping_box(set: &MultiIndexSet, opts: &VerifyOptions) -> Option<JetBox> {
    let cap = Interval::symmetric(opts.y_cap);
    let inv = 1.0 / opts.contraction;
    let mut gamma = 0.5 * opts.y_cap;
    for _ in 0..30 {
        let mut budget = opts.escape_budget;
        if escapes(Interval::symmetric(gamma), inv, &cap, 64, &mut budget) {
            let mut b = JetBox::symmetric(set.len(), opts.x_bound, opts.y_cap);
            b.y[0] = Interval::symmetric(gamma);
            return Some(b);
        }
        gamma *= 0.5;
    }
    None
}

fn escapes(iv: Interval, inv: f64, cap: &Interval, depth: usize, budget: &mut usize) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    [-1.0, 1.0].into_iter().all(|delta| {
        let img = iv.shift(-delta).scale(inv);
        match img.intersect(cap) {
            None => true,
            Some(rest) => depth > 0 && escapes(rest, inv, cap, depth - 1, budget),
        }
    })
}

impl CoverCertificate {
    /// Run `count` random backward jet orbits of `steps` steps from points of
    /// the certified box, choosing the admissible symbol at each step, and
    /// count the steps that leave the box.
    pub fn sample_orbits(&self, count: usize, steps: usize, seed: u64) -> Result<usize> {
        let b = self
            .certified_box
            .as_ref()
            .ok_or_else(|| Error::Usage("certificate has no certified box".into()))?;
        let set = MultiIndexSet::new(self.order, self.params);
        let maps = branch_maps(&set, self.options.contraction)?;
        let violations = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let coeffs =
                    b.x.iter()
                        .zip(&b.y)
                        .map(|(x, y)| [rng.gen_range(x.lo()..=x.hi()), rng.gen_range(y.lo()..=y.hi())])
                        .collect();
                let mut jet = Jet::from_coeffs(&set, coeffs).expect("finite");
                let mut bad = 0;
                for _ in 0..steps {
                    let sym = admissible_symbol(&jet, &mut rng);
                    jet = maps[sym.index()].apply(&jet);
                    if !b.contains(&jet) {
                        bad += 1;
                    }
                }
                bad
            })
            .sum();
        Ok(violations)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "covered-domain verification, d = {}, k = {}, |E| = {}, |Δ| = {}\n",
            self.order,
            self.params,
            self.index_set.len(),
            1usize << self.index_set.len()
        ));
        s.push_str(&format!("vertical contraction: {}\n", self.options.contraction));
        s.push_str(&format!("verdict: {:?}\n", self.verdict));
        s.push_str(&format!(
            "literal box |x_i| <= 1/2, |y_i| <= 1 closes: {} (max excess {:.6})\n",
            self.literal_box_closes, self.literal_box_excess
        ));
        if let Some(b) = &self.certified_box {
            s.push_str(&format!(
                "certified box: |x_i| <= {}, |y_i| <= {:.17}\n",
                b.x[0].hi(),
                b.y[0].hi()
            ));
        }
        if let Some(b) = &self.counterexample {
            s.push_str(&format!(
                "counterexample box: y_0 in {} escapes |y| <= {} under every symbol sequence\n",
                b.y[0], self.options.y_cap
            ));
        }
        s.push_str("iteration  y_bound              closes  max_excess\n");
        for t in &self.trace {
            s.push_str(&format!(
                "{:>9}  {:<19.17}  {:<6}  {:.6}\n",
                t.iteration, t.y_bound, t.closes, t.max_excess
            ));
        }
        s
    }
}

fn admissible_symbol(jet: &Jet, rng: &mut impl Rng) -> BranchSymbol {
    let signs = jet
        .coeffs
        .iter()
        .map(|c| match c[1].partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => -1,
            Some(std::cmp::Ordering::Greater) => 1,
            _ => {
                if rng.gen::<bool>() {
                    1
                } else {
                    -1
                }
            }
        })
        .collect();
    BranchSymbol::from_signs(signs).expect("±1")
}

/// Result of pulling a jet back `depth` times and pushing a blender point forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantJetCover {
    /// `δ_{−1}, …, δ_{−m}`.
    pub symbols: Vec<BranchSymbol>,
    /// The deepest pullback `γ^{−m}`.
    pub pullback: Jet,
    /// `|forward jet − target|` per coefficient, `[x, y]`.
    pub residual: Vec<[f64; 2]>,
    /// `width(domain y_i) · λ^m`, an upper bound on the y-residual.
    pub residual_bound: Vec<f64>,
}

/// Pull `target` back `depth` times with the admissible symbols, then push
/// forward the point of `domain` nearest to the blender fixed point of the
/// deepest symbol (keeping the pulled-back x-coefficients, since local
/// unstable leaves are horizontal) and measure the distance to `target`.
///
/// `domain` should be invariant (for instance a certified box) for the
/// residual bound to hold.
pub fn cover_constant_jet(contraction: f64, domain: &JetBox, target: &Jet, depth: usize) -> Result<ConstantJetCover> {
    let set = MultiIndexSet::new(target.order, target.params);
    if domain.len() != set.len() {
        return Err(Error::DimensionMismatch("domain box arity".into()));
    }
    if !domain.contains(target) {
        return Err(Error::OutOfDomain(format!("target {:?}", target.coeffs)));
    }
    let maps = branch_maps(&set, contraction)?;

    let mut symbols = Vec::with_capacity(depth);
    let mut jet = target.clone();
    for _ in 0..depth {
        let sym = BranchSymbol::select(jet.ys());
        jet = maps[sym.index()].apply(&jet);
        symbols.push(sym);
    }
    let pullback = jet.clone();

    // The x-coefficients lie on the horizontal unstable direction and are
    // matched exactly by the pullback; only the y-coefficients are pushed
    // forward (pushing x forward would amplify rounding by q^m).
    let mut ys: Vec<f64> = match symbols.last() {
        None => vec![0.0; set.len()],
        Some(last) => domain
            .y
            .iter()
            .enumerate()
            .map(|(p, yb)| (last.sign(p) / (1.0 - contraction)).clamp(yb.lo(), yb.hi()))
            .collect(),
    };
    for sym in symbols.iter().rev() {
        let g = &maps[sym.index()];
        for (p, y) in ys.iter_mut().enumerate() {
            *y = *y / g.y_scale + g.y_shift[p];
        }
    }
    let residual = target
        .coeffs
        .iter()
        .zip(&ys)
        .map(|(t, y)| {
            let x = if symbols.is_empty() { t[0].abs() } else { 0.0 };
            [x, (y - t[1]).abs()]
        })
        .collect();
    let shrink = contraction.powi(depth as i32);
    let residual_bound = domain.y_width().into_iter().map(|w| w * shrink).collect();
    Ok(ConstantJetCover {
        symbols,
        pullback,
        residual,
        residual_bound,
    })
}
