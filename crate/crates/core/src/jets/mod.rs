//! `C^d` jets of parameter families of points and the jet dynamics of the
//! parablender branches.
//!
//! A jet at `a0` is stored in monomial form `Σ_{i∈E} (x_i, y_i)·h^i` where
//! `h = a − a0`; coefficient `i` is the Taylor coefficient `∂^i z / i!`.

mod multi;
mod verify;

pub use multi::{binomial, BranchSymbol, MultiIndexSet};
pub use verify::{
    cover_constant_jet, verify_covered_domain, verify_covered_domain_with, ConstantJetCover, CoverCertificate, JetBox,
    TraceStep, Verdict, VerifyOptions, MAX_INDEX_SET,
};

use serde::{Deserialize, Serialize};

use crate::dynsys::{BranchId, ParamPoint, PhasePoint, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::interval::Interval;

/// Truncated Taylor data of a family `(z_a)_a` of planar points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub order: usize,
    pub params: usize,
    /// `(x_i, y_i)` in the order of [`MultiIndexSet`].
    pub coeffs: Vec<[f64; 2]>,
}

impl Jet {
    pub fn zero(set: &MultiIndexSet) -> Self {
        Jet {
            order: set.order(),
            params: set.params(),
            coeffs: vec![[0.0; 2]; set.len()],
        }
    }

    /// Jet of the constant family `(z)_a`.
    pub fn constant(set: &MultiIndexSet, z: [f64; 2]) -> Self {
        let mut j = Self::zero(set);
        j.coeffs[0] = z;
        j
    }

    pub fn from_coeffs(set: &MultiIndexSet, coeffs: Vec<[f64; 2]>) -> Result<Self> {
        if coeffs.len() != set.len() {
            return Err(Error::DimensionMismatch(format!(
                "jet needs {} coefficients, got {}",
                set.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Usage("non-finite jet coefficient".into()));
        }
        Ok(Jet {
            order: set.order(),
            params: set.params(),
            coeffs,
        })
    }

    pub fn xs(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[0]).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[1]).collect()
    }

    fn from_parts(set: &MultiIndexSet, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Jet {
            order: set.order(),
            params: set.params(),
            coeffs: xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect(),
        }
    }

    /// The point of the family at `a0 + h`.
    pub fn eval(&self, set: &MultiIndexSet, h: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (p, c) in self.coeffs.iter().enumerate() {
            let m = set.monomial(p, h);
            out[0] += c[0] * m;
            out[1] += c[1] * m;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Jet) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }

    fn check(&self, set: &MultiIndexSet) -> Result<()> {
        if self.order != set.order() || self.params != set.params() || self.coeffs.len() != set.len() {
            return Err(Error::DimensionMismatch(format!(
                "jet of order {} in {} parameters does not match (d, k) = ({}, {})",
                self.order,
                self.params,
                set.order(),
                set.params()
            )));
        }
        Ok(())
    }
}

/// Truncated product of two scalar jets.
pub fn truncated_mul(set: &MultiIndexSet, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; set.len()];
    for &(i, j, k) in set.products() {
        out[k] += a[i] * b[j];
    }
    out
}

/// Jet at `a0` of the parameter polynomial `Σ_j δ(j) a^j`, i.e. the
/// coefficients of `Σ_j δ(j) (a0 + h)^j` in `h`.
pub fn translation_jet(set: &MultiIndexSet, symbol: &BranchSymbol, a0: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; set.len()];
    for (pj, j) in set.iter().enumerate() {
        let sign = symbol.sign(pj);
        // (a0 + h)^j = ∏_l Σ_{i_l ≤ j_l} C(j_l, i_l) a0_l^{j_l − i_l} h_l^{i_l}
        for (pi, i) in set.iter().enumerate() {
            if i.iter().zip(j).any(|(a, b)| a > b) {
                continue;
            }
            let c: f64 = i
                .iter()
                .zip(j)
                .zip(a0)
                .map(|((&il, &jl), &al)| binomial(jl as usize, il as usize) as f64 * al.powi((jl - il) as i32))
                .product();
            out[pi] += sign * c;
        }
    }
    out
}

/// The jet at `a0` of `(f_a(z_a))_a`.
///
/// Piecewise systems need `branch`; the branch formula is then applied as a
/// polynomial in `(x, y)`, whether or not the constant term lies in the
/// branch's interval.
pub fn jet_pushforward(system: &SystemSpec, a0: &ParamPoint, jet: &Jet, branch: Option<BranchId>) -> Result<Jet> {
    let set = MultiIndexSet::new(jet.order, jet.params);
    jet.check(&set)?;
    if system.param_dim() != 0 && system.param_dim() != jet.params {
        return Err(Error::DimensionMismatch(format!(
            "family has {} parameters, jet has {}",
            system.param_dim(),
            jet.params
        )));
    }
    if a0.len() != system.param_dim() {
        return Err(Error::DimensionMismatch("parameter point arity".into()));
    }
    let branch = match (system.is_piecewise(), branch) {
        (true, None) => return Err(Error::BranchRequired),
        (_, b) => b.unwrap_or(BranchId(0)),
    };
    let xs = jet.xs();
    let ys = jet.ys();
    let affine = |scale: f64, v: &[f64], shift: f64| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|c| scale * c).collect();
        out[0] += shift;
        out
    };
    let (nx, ny) = match system.kind() {
        SystemKind::Henon { a, b } => {
            let sq = truncated_mul(&set, &xs, &xs);
            let nx: Vec<f64> = sq.iter().zip(&ys).map(|(s, y)| s + y).collect();
            (affine(1.0, &nx, *a), affine(-b, &xs, 0.0))
        }
        SystemKind::Identity { .. } => (xs, ys),
        SystemKind::Rotation { alpha, .. } => (affine(1.0, &xs, alpha.rem_euclid(1.0) - branch.0 as f64), ys),
        SystemKind::Doubling => (affine(2.0, &xs, -(branch.0 as f64)), ys),
        SystemKind::PlantedSinks { rate, .. } => {
            let centers = system.planted_centers();
            let c = centers
                .get(branch.0)
                .ok_or_else(|| Error::Usage(format!("no branch {}", branch.0)))?;
            (
                affine(*rate, &xs, (1.0 - rate) * c.x()),
                affine(*rate, &ys, (1.0 - rate) * c.y()),
            )
        }
        SystemKind::ParablenderCore { .. } | SystemKind::ParablenderFull { .. } => {
            let layout = system.layout().expect("layout");
            let n = layout.branches.len();
            let b = branch.0;
            if b < n {
                let seg = layout.branches[b];
                let t = translation_jet(&set, &layout.symbol(b), a0.as_slice());
                let ny: Vec<f64> = ys.iter().zip(&t).map(|(y, t)| layout.contraction * y + t).collect();
                (affine(seg.slope(), &xs, -seg.slope() * seg.center()), ny)
            } else if b == n {
                let s = layout.source.expect("source");
                (affine(s.slope(), &xs, 0.0), affine(1.0 / s.len().sqrt(), &ys, 0.0))
            } else if b == n + 1 {
                let p = layout.saddle.expect("saddle");
                (
                    affine(p.slope(), &xs, -p.slope() * p.center()),
                    affine(p.len() * p.len(), &ys, 0.0),
                )
            } else if b == n + 2 {
                let xp = layout.saddle_point().expect("saddle point");
                let xf = layout.fold_point().expect("fold point");
                let shifted = affine(1.0, &xs, -xf);
                let sq = truncated_mul(&set, &shifted, &shifted);
                let nx: Vec<f64> = ys.iter().zip(&sq).map(|(y, s)| y - s).collect();
                (affine(1.0, &nx, xp), affine(-1.0, &xs, xf))
            } else {
                return Err(Error::Usage(format!("no branch {b}")));
            }
        }
    };
    Ok(Jet::from_parts(&set, nx, ny))
}

/// Per-coefficient affine map `x_i ↦ x_i / q + [i = 0] c`,
/// `y_i ↦ (y_i − t_i) / λ`: the jet of the inverse of a parablender branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetBranchInverse {
    pub symbol: BranchSymbol,
    pub x_scale: f64,
    pub x_center: f64,
    pub y_scale: f64,
    pub y_shift: Vec<f64>,
}

impl JetBranchInverse {
    pub fn apply(&self, jet: &Jet) -> Jet {
        let coeffs = jet
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, c)| {
                let x = self.x_scale * c[0] + if p == 0 { self.x_center } else { 0.0 };
                [x, self.y_scale * (c[1] - self.y_shift[p])]
            })
            .collect();
        Jet { coeffs, ..jet.clone() }
    }

    /// The forward branch map, inverse of [`JetBranchInverse::apply`].
    pub fn apply_forward(&self, jet: &Jet) -> Jet {
        let coeffs = jet
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, c)| {
                let x = (c[0] - if p == 0 { self.x_center } else { 0.0 }) / self.x_scale;
                [x, c[1] / self.y_scale + self.y_shift[p]]
            })
            .collect();
        Jet { coeffs, ..jet.clone() }
    }

    /// Outward-rounded image of a box.
    pub fn apply_box(&self, x: &[Interval], y: &[Interval]) -> (Vec<Interval>, Vec<Interval>) {
        let nx = x
            .iter()
            .enumerate()
            .map(|(p, iv)| {
                let v = iv.scale(self.x_scale);
                if p == 0 {
                    v.shift(self.x_center)
                } else {
                    v
                }
            })
            .collect();
        let ny = y
            .iter()
            .zip(&self.y_shift)
            .map(|(iv, t)| iv.shift(-t).scale(self.y_scale))
            .collect();
        (nx, ny)
    }
}

/// Jet of the inverse of the parablender branch `δ` at `a0`, for the core
/// layout with vertical contraction `contraction`.
pub fn jet_branch_inverse_map(
    symbol: &BranchSymbol,
    order: usize,
    params: usize,
    contraction: f64,
    a0: &[f64],
) -> Result<JetBranchInverse> {
    let set = MultiIndexSet::new(order, params);
    if symbol.len() != set.len() {
        return Err(Error::DimensionMismatch(format!(
            "symbol has {} entries, |E| = {}",
            symbol.len(),
            set.len()
        )));
    }
    if a0.len() != params {
        return Err(Error::DimensionMismatch("parameter point arity".into()));
    }
    let branches = crate::dynsys::ParablenderLayout::core_intervals(order, params, crate::dynsys::CORE_INNER_EDGE)?;
    let seg = branches[symbol.index()];
    Ok(JetBranchInverse {
        symbol: symbol.clone(),
        x_scale: 1.0 / seg.slope(),
        x_center: seg.center(),
        y_scale: 1.0 / contraction,
        y_shift: translation_jet(&set, symbol, a0),
    })
}

/// Jet of a family evaluated along the curve `a ↦ system.step(a, z_a)` for use
/// in divided-difference checks: returns `f_{a0+h}(z_{a0+h})`.
pub fn step_family_at(
    system: &SystemSpec,
    a0: &ParamPoint,
    jet: &Jet,
    h: &[f64],
    branch: BranchId,
) -> Result<[f64; 2]> {
    let set = MultiIndexSet::new(jet.order, jet.params);
    let z = jet.eval(&set, h);
    let a: Vec<f64> = a0.as_slice().iter().zip(h).map(|(a, h)| a + h).collect();
    let p = if system.param_dim() == 0 {
        ParamPoint::empty()
    } else {
        ParamPoint::new(a)?
    };
    let pt = if system.dim() == 1 {
        PhasePoint::new1(z[0])
    } else {
        PhasePoint::new2(z[0], z[1])
    };
    Ok(system.step_on_branch(&p, &pt, branch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn core(d: usize, k: usize) -> SystemSpec {
        SystemSpec::new(SystemKind::ParablenderCore {
            d,
            k,
            contraction: 2.0 / 3.0,
        })
        .unwrap()
    }

    fn random_jet(set: &MultiIndexSet, rng: &mut impl Rng) -> Jet {
        let coeffs = (0..set.len())
            .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-1.5..1.5)])
            .collect();
        Jet::from_coeffs(set, coeffs).unwrap()
    }

    #[test]
    fn constant_jet_at_fixed_point_is_fixed() {
        let h = SystemSpec::new(SystemKind::Henon { a: 0.0, b: 0.3 }).unwrap();
        let set = MultiIndexSet::new(2, 1);
        for fp in [[0.0, 0.0], [1.3, -0.39]] {
            let j = Jet::constant(&set, fp);
            let out = jet_pushforward(&h, &ParamPoint::empty(), &j, None).unwrap();
            assert!(out.max_abs_diff(&j) < 1e-12);
        }
    }

    #[test]
    fn core_pushforward_d1_k1() {
        let s = core(1, 1);
        let set = MultiIndexSet::new(1, 1);
        let layout = s.layout().unwrap().clone();
        let j = Jet::from_coeffs(&set, vec![[0.1, 0.4], [0.2, -0.3]]).unwrap();
        for b in 0..layout.branches.len() {
            let sym = layout.symbol(b);
            let q = layout.branches[b].slope();
            let out = jet_pushforward(&s, &ParamPoint::zeros(1), &j, Some(BranchId(b))).unwrap();
            assert_abs_diff_eq!(out.coeffs[1][0], q * 0.2, epsilon = 1e-14);
            assert_abs_diff_eq!(out.coeffs[0][1], (2.0 / 3.0) * 0.4 + sym.sign(0), epsilon = 1e-14);
            assert_abs_diff_eq!(out.coeffs[1][1], (2.0 / 3.0) * -0.3 + sym.sign(1), epsilon = 1e-14);
        }
    }

    #[test]
    fn pushforward_matches_divided_differences() {
        let s = core(1, 1);
        let set = MultiIndexSet::new(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a0 = ParamPoint::zeros(1);
        for b in 0..4 {
            let j = random_jet(&set, &mut rng);
            let out = jet_pushforward(&s, &a0, &j, Some(BranchId(b))).unwrap();
            let h = 1e-4;
            let fp = step_family_at(&s, &a0, &j, &[h], BranchId(b)).unwrap();
            let fm = step_family_at(&s, &a0, &j, &[-h], BranchId(b)).unwrap();
            let f0 = step_family_at(&s, &a0, &j, &[0.0], BranchId(b)).unwrap();
            for c in 0..2 {
                assert_abs_diff_eq!(out.coeffs[0][c], f0[c], epsilon = 1e-12);
                assert!(((fp[c] - fm[c]) / (2.0 * h) - out.coeffs[1][c]).abs() < 1e-6);
            }
        }
    }

    /// Untruncated one-parameter polynomial arithmetic, used as an oracle.
    fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
            .collect()
    }

    #[test]
    fn composition_truncates_like_symbolic_composition() {
        let (a, b) = (1.1, 0.3);
        let h = SystemSpec::new(SystemKind::Henon { a, b }).unwrap();
        for d in 1..=2 {
            let set = MultiIndexSet::new(d, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            let j = random_jet(&set, &mut rng);
            let twice = jet_pushforward(
                &h,
                &ParamPoint::empty(),
                &jet_pushforward(&h, &ParamPoint::empty(), &j, None).unwrap(),
                None,
            )
            .unwrap();
            // exact polynomial composition, then read off degrees ≤ d
            let (mut x, mut y) = (j.xs(), j.ys());
            for _ in 0..2 {
                let nx = poly_add(&poly_add(&poly_mul(&x, &x), &y), &[a]);
                let ny: Vec<f64> = x.iter().map(|v| -b * v).collect();
                x = nx;
                y = ny;
            }
            for p in 0..=d {
                assert_abs_diff_eq!(twice.coeffs[p][0], x[p], epsilon = 1e-12);
                assert_abs_diff_eq!(twice.coeffs[p][1], y[p], epsilon = 1e-12);
            }
        }

        // two parablender branches: y'' = λ(λ y + P₁) + P₂ exactly
        let s = core(2, 1);
        let set = MultiIndexSet::new(2, 1);
        let j = Jet::from_coeffs(&set, vec![[0.0, 0.5], [0.1, -0.2], [0.0, 0.3]]).unwrap();
        let a0 = ParamPoint::new(vec![0.25]).unwrap();
        let (b1, b2) = (3usize, 5usize);
        let out = jet_pushforward(
            &s,
            &a0,
            &jet_pushforward(&s, &a0, &j, Some(BranchId(b1))).unwrap(),
            Some(BranchId(b2)),
        )
        .unwrap();
        let layout = s.layout().unwrap();
        let t1 = translation_jet(&set, &layout.symbol(b1), &[0.25]);
        let t2 = translation_jet(&set, &layout.symbol(b2), &[0.25]);
        let lam = 2.0 / 3.0;
        for p in 0..3 {
            assert_abs_diff_eq!(
                out.coeffs[p][1],
                lam * (lam * j.coeffs[p][1] + t1[p]) + t2[p],
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn translation_jet_expands_binomially() {
        // δ ≡ +1, k = 1, d = 2: 1 + (a0+h) + (a0+h)² = (1 + a0 + a0²) + (1 + 2a0) h + h²
        let set = MultiIndexSet::new(2, 1);
        let t = translation_jet(&set, &BranchSymbol::constant(1, 3), &[0.5]);
        assert_abs_diff_eq!(t[0], 1.75);
        assert_abs_diff_eq!(t[1], 2.0);
        assert_abs_diff_eq!(t[2], 1.0);
        let t0 = translation_jet(&set, &BranchSymbol::from_index(5, 3), &[0.0]);
        assert_eq!(t0, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn inverse_map_examples() {
        let set = MultiIndexSet::new(1, 1);
        let sym = BranchSymbol::constant(1, set.len());
        let g = jet_branch_inverse_map(&sym, 1, 1, 2.0 / 3.0, &[0.0]).unwrap();
        let out = g.apply(&Jet::zero(&set));
        for c in &out.coeffs {
            assert_abs_diff_eq!(c[1], -1.5, epsilon = 1e-15);
        }
        // fixed jet y_i = 3 δ(i)
        for idx in 0..4 {
            let sym = BranchSymbol::from_index(idx, 2);
            let g = jet_branch_inverse_map(&sym, 1, 1, 2.0 / 3.0, &[0.0]).unwrap();
            let fixed = Jet::from_coeffs(&set, vec![[0.0, 3.0 * sym.sign(0)], [0.0, 3.0 * sym.sign(1)]]).unwrap();
            let out = g.apply(&fixed);
            assert!(out.ys().iter().zip(fixed.ys()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn inverse_map_undoes_pushforward() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (d, k) in [(1, 1), (2, 1), (1, 2)] {
            let s = core(d, k);
            let set = MultiIndexSet::new(d, k);
            let a0: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.5..0.5)).collect();
            for b in 0..set.symbol_count() {
                let sym = BranchSymbol::from_index(b, set.len());
                let g = jet_branch_inverse_map(&sym, d, k, 2.0 / 3.0, &a0).unwrap();
                let j = random_jet(&set, &mut rng);
                let there = g.apply(&j);
                let back =
                    jet_pushforward(&s, &ParamPoint::new(a0.clone()).unwrap(), &there, Some(BranchId(b))).unwrap();
                assert!(back.max_abs_diff(&j) < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_map_matches_divided_differences_of_inverse_branch() {
        let s = core(1, 1);
        let set = MultiIndexSet::new(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let b = rng.gen_range(0..4);
            let sym = BranchSymbol::from_index(b, 2);
            let g = jet_branch_inverse_map(&sym, 1, 1, 2.0 / 3.0, &[0.0]).unwrap();
            let j = random_jet(&set, &mut rng);
            let img = g.apply(&j);
            let h = 1e-4;
            let pre = |t: f64| {
                let z = j.eval(&set, &[t]);
                s.inverse_branch(
                    &ParamPoint::new(vec![t]).unwrap(),
                    &PhasePoint::new2(z[0], z[1]),
                    BranchId(b),
                )
                .unwrap()
            };
            let (p, m, c) = (pre(h), pre(-h), pre(0.0));
            assert!((c.x() - img.coeffs[0][0]).abs() < 1e-6);
            assert!((c.y() - img.coeffs[0][1]).abs() < 1e-6);
            assert!(((p.x() - m.x()) / (2.0 * h) - img.coeffs[1][0]).abs() < 1e-6);
            assert!(((p.y() - m.y()) / (2.0 * h) - img.coeffs[1][1]).abs() < 1e-6);
        }
    }

    #[test]
    fn pushforward_requires_branch_for_piecewise() {
        let s = core(1, 1);
        let set = MultiIndexSet::new(1, 1);
        assert_eq!(
            jet_pushforward(&s, &ParamPoint::zeros(1), &Jet::zero(&set), None).unwrap_err(),
            Error::BranchRequired
        );
    }
}
