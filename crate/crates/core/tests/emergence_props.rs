use emergence_core::dynsys::{ParamPoint, PhasePoint, SystemKind, SystemSpec};
use emergence_core::emergence::{
    birkhoff_cloud, covering_number_with, emergence_curve, kmedian, Coverer, DistanceMatrix, EmergenceQuery, KMedian,
    Scaling,
};
use emergence_core::transport::{w1, DiscreteMeasure, GroundMetric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exhaustive(d: &DistanceMatrix, w: &[f64], k: usize) -> f64 {
    fn rec(d: &DistanceMatrix, w: &[f64], k: usize, start: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            let obj: f64 = (0..d.len())
                .map(|i| w[i] * chosen.iter().map(|&c| d.get(i, c)).fold(f64::INFINITY, f64::min))
                .sum();
            *best = best.min(obj);
            return;
        }
        for c in start..d.len() {
            chosen.push(c);
            rec(d, w, k, c + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(d, w, k, 0, &mut Vec::new(), &mut best);
    best
}

fn random_cloud(rng: &mut impl Rng, n: usize) -> Vec<DiscreteMeasure> {
    (0..n)
        .map(|_| {
            let atoms = rng.gen_range(1..=3);
            let pts: Vec<[f64; 2]> = (0..atoms).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            DiscreteMeasure::new(2, pts, vec![1.0 / atoms as f64; atoms])
                .unwrap_or_else(|_| DiscreteMeasure::dirac(&PhasePoint::new2(rng.gen(), rng.gen())))
        })
        .collect()
}

#[test]
fn greedy_swap_matches_exhaustive_kmedian() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = GroundMetric::default();
    let (mut exact, mut trials) = (0, 0);
    for _ in 0..200 {
        let n = rng.gen_range(5..=20);
        let k = rng.gen_range(1..=4);
        let cloud = random_cloud(&mut rng, n);
        let d = DistanceMatrix::from_fn(n, |i, j| w1(&cloud[i], &cloud[j], &g).unwrap());
        let w = vec![1.0 / n as f64; n];
        let (_, obj) = kmedian(&d, &w, k);
        let best = exhaustive(&d, &w, k);
        assert!(obj >= best - 1e-12, "heuristic beat the optimum: {obj} < {best}");
        if obj - best <= 1e-9 {
            exact += 1;
        }
        trials += 1;
    }
    assert!(exact as f64 >= 0.95 * trials as f64, "{exact}/{trials}");
}

#[test]
fn residual_and_count_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = GroundMetric::default();
    let cloud = random_cloud(&mut rng, 40);
    let d = DistanceMatrix::from_fn(40, |i, j| w1(&cloud[i], &cloud[j], &g).unwrap());
    let w = vec![1.0 / 40.0; 40];

    let mut km = KMedian::new(&d, &w);
    let mut prev = f64::INFINITY;
    while km.add_greedy() {
        km.swap_search();
        assert!(km.objective() <= prev + 1e-15);
        prev = km.objective();
    }
    assert_eq!(prev, 0.0);

    let eps = [0.3, 0.2, 0.1, 0.05, 0.02, 0.01];
    let fresh: Vec<usize> = eps
        .iter()
        .map(|&e| covering_number_with(&d, &w, e, None).unwrap().n_centers)
        .collect();
    assert!(fresh.windows(2).all(|p| p[0] <= p[1]), "{fresh:?}");
    let mut cov = Coverer::new(&d, &w, None);
    let mut last = 0;
    for &e in &eps {
        let r = cov.cover(e).unwrap();
        assert!(r.residual <= e);
        assert!(r.n_centers >= last);
        last = r.n_centers;
    }
}

fn small_query(seed: u64) -> EmergenceQuery {
    EmergenceQuery {
        n_ladder: vec![100, 200],
        sample_count: 40,
        epsilons: vec![0.2, 0.1, 0.05, 0.025],
        seed,
        ..EmergenceQuery::default()
    }
}

#[test]
fn curves_are_seed_deterministic() {
    let sys = SystemSpec::new(SystemKind::Henon { a: -1.4, b: -0.3 }).unwrap();
    let mut q = small_query(8);
    q.sample_box = Some(emergence_core::dynsys::PhaseBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
    q.quantize_cell = Some(0.05);
    let a = serde_json::to_string(&emergence_curve(&sys, &ParamPoint::empty(), &q).unwrap()).unwrap();
    let b = serde_json::to_string(&emergence_curve(&sys, &ParamPoint::empty(), &q).unwrap()).unwrap();
    assert_eq!(a, b);
    q.seed = 9;
    let c = serde_json::to_string(&emergence_curve(&sys, &ParamPoint::empty(), &q).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn henon_cloud_from_unit_square_survives() {
    let sys = SystemSpec::new(SystemKind::Henon { a: -1.4, b: -0.3 }).unwrap();
    let mut q = small_query(1);
    q.sample_box = Some(emergence_core::dynsys::PhaseBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
    let cloud = birkhoff_cloud(&sys, &ParamPoint::empty(), &q, 1000).unwrap();
    assert!(cloud.survivor_fraction > 0.0);
    // conjugate to the classical attractor, which lies inside |x| ≤ 1.8
    for m in &cloud.measures {
        let outside: f64 = m
            .atoms()
            .iter()
            .zip(m.weights())
            .filter(|(a, _)| a[0].abs() > 1.9)
            .map(|(_, w)| w)
            .sum();
        assert!(outside < 0.05);
    }
}

#[test]
fn irrational_rotation_has_emergence_one() {
    let sys = SystemSpec::new(SystemKind::Rotation {
        alpha: std::f64::consts::SQRT_2 - 1.0,
        dim: 1,
    })
    .unwrap();
    let q = EmergenceQuery {
        n_ladder: vec![10_000],
        sample_count: 30,
        epsilons: vec![0.2, 0.1, 0.05],
        seed: 2,
        ..EmergenceQuery::default()
    };
    let cloud = birkhoff_cloud(&sys, &ParamPoint::empty(), &q, 10_000).unwrap();
    let g = GroundMetric::for_system(&sys);
    for a in &cloud.measures {
        for b in &cloud.measures {
            assert!(w1(a, b, &g).unwrap() < 0.01);
        }
    }
    let curve = emergence_curve(&sys, &ParamPoint::empty(), &q).unwrap();
    assert!(curve.points.iter().all(|p| p.n_centers == 1));
}

#[test]
fn planted_sinks_give_finite_emergence() {
    let sys = SystemSpec::new(SystemKind::PlantedSinks { n: 4, rate: 0.5 }).unwrap();
    let q = EmergenceQuery {
        n_ladder: vec![200, 400],
        sample_count: 60,
        epsilons: vec![0.3, 0.1, 0.03, 0.01, 0.005],
        seed: 4,
        ..EmergenceQuery::default()
    };
    let curve = emergence_curve(&sys, &ParamPoint::empty(), &q).unwrap();
    let ns: Vec<usize> = curve.points.iter().map(|p| p.n_centers).collect();
    assert_eq!(&ns[2..], &[4, 4, 4], "{ns:?}");
    assert_eq!(curve.stabilization, 0.0);
    assert!(matches!(
        curve.scaling,
        Scaling::F | Scaling::P { .. } | Scaling::Undetermined
    ));
}
