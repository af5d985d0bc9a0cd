use emergence_core::dynsys::{BranchId, ParamPoint, PhasePoint, SystemKind, SystemSpec};
use emergence_core::interval::Interval;
use emergence_core::jets::{
    cover_constant_jet, jet_branch_inverse_map, verify_covered_domain, BranchSymbol, Jet, JetBox, MultiIndexSet,
    Verdict,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn order_zero_reduces_to_the_blender_ifs() {
    let cert = verify_covered_domain(0, 1).unwrap();
    assert_eq!(cert.verdict, Verdict::Covered);

    // y -> (2/3) y + delta, delta = ±1. Each composition draws its own sign
    // bias so that long runs of one sign (needed near ±3) occur.
    let set = MultiIndexSet::new(0, 1);
    let maps: Vec<_> = (0..2)
        .map(|b| jet_branch_inverse_map(&BranchSymbol::from_index(b, 1), 0, 1, 2.0 / 3.0, &[0.0]).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts: Vec<f64> = (0..10_000)
        .map(|_| {
            let bias: f64 = rng.gen();
            let mut j = Jet::zero(&set);
            for _ in 0..80 {
                let b = usize::from(rng.gen::<f64>() < bias);
                j = maps[b].apply_forward(&j);
            }
            j.coeffs[0][1]
        })
        .collect();
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| (l.min(y), h.max(y)));
    assert!(lo >= -3.0 - 1e-12 && hi <= 3.0 + 1e-12);
    assert!(lo < -3.0 + 1e-3 && hi > 3.0 - 1e-3);

    // every point of [-3, 3] is within 1e-3 of the attractor: code a 1e-3
    // grid by pullbacks and push the IFS fixed point forward
    let cap = JetBox::symmetric(1, 0.5, 3.0);
    let mut worst: f64 = 0.0;
    for g in 0..=6000 {
        let t = -3.0 + g as f64 * 1e-3;
        let target = Jet::constant(&set, [0.0, t]);
        let cover = cover_constant_jet(2.0 / 3.0, &cap, &target, 30).unwrap();
        worst = worst.max(cover.residual[0][1]);
    }
    assert!(worst + 5e-4 < 1e-3, "{worst}");
}

#[test]
fn certified_boxes_are_respected_by_random_orbits() {
    for (d, k) in [(1, 1), (2, 1), (1, 2)] {
        let cert = verify_covered_domain(d, k).unwrap();
        assert_eq!(cert.verdict, Verdict::Covered);
        assert!(!cert.literal_box_closes);
        assert_eq!(cert.sample_orbits(100_000, 20, 5).unwrap(), 0, "({d},{k})");
    }
}

#[test]
fn selection_is_total_on_the_certified_box() {
    for (d, k) in [(1, 1), (2, 1), (1, 2)] {
        let cert = verify_covered_domain(d, k).unwrap();
        let b = cert.certified_box.unwrap();
        // the branch maps act coordinate-wise, so a 1D subdivision per index suffices
        for p in 0..b.len() {
            let yb = b.y[p];
            let cells = (yb.width() / 1e-3).ceil() as usize;
            for c in 0..cells {
                let lo = yb.lo() + c as f64 * 1e-3;
                let cell = Interval::new(lo, (lo + 1e-3).min(yb.hi()));
                let sign = if cell.mid() >= 0.0 { 1 } else { -1 };
                let mut signs = vec![1i8; b.len()];
                signs[p] = sign;
                let mut sub = b.clone();
                sub.y[p] = cell;
                let sym = BranchSymbol::from_signs(signs).unwrap();
                let sel = sub
                    .select(&sym)
                    .unwrap_or_else(|| panic!("({d},{k}) index {p} cell {c}"));
                let g = jet_branch_inverse_map(&sym, d, k, 2.0 / 3.0, &vec![0.0; k]).unwrap();
                let (_, y) = g.apply_box(&sel.x, &sel.y);
                assert!(y[p].is_subset_of(&yb), "({d},{k}) index {p} cell {c}");
            }
        }
    }
}

#[test]
fn inverse_jet_map_matches_divided_differences_at_higher_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-4;
    for (d, k) in [(2, 1), (1, 2)] {
        let sys = SystemSpec::new(SystemKind::ParablenderCore {
            d,
            k,
            contraction: 2.0 / 3.0,
        })
        .unwrap();
        let set = MultiIndexSet::new(d, k);
        for _ in 0..100 {
            let b = rng.gen_range(0..set.symbol_count());
            let sym = BranchSymbol::from_index(b, set.len());
            let g = jet_branch_inverse_map(&sym, d, k, 2.0 / 3.0, &vec![0.0; k]).unwrap();
            let coeffs = (0..set.len())
                .map(|_| [rng.gen_range(-0.2..0.2), rng.gen_range(-1.0..1.0)])
                .collect();
            let j = Jet::from_coeffs(&set, coeffs).unwrap();
            let img = g.apply(&j);
            let pre = |a: &[f64]| -> [f64; 2] {
                let z = j.eval(&set, a);
                let p = sys
                    .inverse_branch(
                        &ParamPoint::new(a.to_vec()).unwrap(),
                        &PhasePoint::new2(z[0], z[1]),
                        BranchId(b),
                    )
                    .unwrap();
                p.coords
            };
            let at = |i: usize, a: &[f64]| pre(a)[i];
            for c in 0..2 {
                if k == 1 {
                    let (p, z, m) = (at(c, &[h]), at(c, &[0.0]), at(c, &[-h]));
                    assert!((z - img.coeffs[0][c]).abs() < 1e-6);
                    assert!(((p - m) / (2.0 * h) - img.coeffs[1][c]).abs() < 1e-6);
                    assert!(((p - 2.0 * z + m) / (2.0 * h * h) - img.coeffs[2][c]).abs() < 1e-6);
                } else {
                    let z = at(c, &[0.0, 0.0]);
                    assert!((z - img.coeffs[0][c]).abs() < 1e-6);
                    for axis in 0..2 {
                        let mut e = [0.0; 2];
                        e[axis] = h;
                        let p = at(c, &e);
                        e[axis] = -h;
                        let m = at(c, &e);
                        let idx: Vec<u32> = (0..2).map(|q| u32::from(q == axis)).collect();
                        let pos = set.position(&idx).unwrap();
                        assert!(((p - m) / (2.0 * h) - img.coeffs[pos][c]).abs() < 1e-6);
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_jet_residual_decays_geometrically(
        y0 in -1.5f64..1.5,
        y1 in -1.5f64..1.5,
        depth in 1usize..40,
    ) {
        let cert = verify_covered_domain(1, 1).unwrap();
        let b: JetBox = cert.certified_box.unwrap();
        let set = MultiIndexSet::new(1, 1);
        let target = Jet::from_coeffs(&set, vec![[0.0, y0], [0.0, y1]]).unwrap();
        prop_assume!(b.contains(&target));
        let shallow = cover_constant_jet(2.0 / 3.0, &b, &target, depth).unwrap();
        let deep = cover_constant_jet(2.0 / 3.0, &b, &target, depth + 1).unwrap();
        for p in 0..2 {
            prop_assert!(deep.residual_bound[p] <= (0.67 + 1e-9) * shallow.residual_bound[p]);
            prop_assert!(shallow.residual[p][1] <= shallow.residual_bound[p] + 1e-12);
            prop_assert!(deep.residual[p][1] <= deep.residual_bound[p] + 1e-12);
        }
    }
}
