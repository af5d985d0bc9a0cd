use emergence_core::dynsys::{ParamPoint, PhasePoint, SystemKind, SystemSpec};
use emergence_core::emergence::{
    birkhoff_cloud, covering_number_with, min_pairwise_w1, DistanceMatrix, EmergenceQuery,
};
use emergence_core::sinks::{
    basin_measure_estimate, find_periodic, multipliers_of, sink_census, Classification, PeriodicOrbit, SeedGrid,
};
use emergence_core::transport::{w1, GroundMetric};
use num_complex::Complex64;

fn henon(a: f64, b: f64) -> SystemSpec {
    SystemSpec::new(SystemKind::Henon { a, b }).unwrap()
}

fn fp(sys: &SystemSpec, z: [f64; 2], p: usize) -> [f64; 2] {
    let mut cur = PhasePoint::new2(z[0], z[1]);
    for _ in 0..p {
        cur = sys.step(&ParamPoint::empty(), &cur).unwrap();
    }
    cur.coords
}

fn chain_from(sys: &SystemSpec, orbit: &PeriodicOrbit, start: usize) -> [[f64; 2]; 2] {
    let p = orbit.period;
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for t in 0..p {
        let z = &orbit.orbit[(start + t) % p];
        let j = sys.jacobian(&ParamPoint::empty(), z).unwrap().m;
        m = [
            [
                j[0][0] * m[0][0] + j[0][1] * m[1][0],
                j[0][0] * m[0][1] + j[0][1] * m[1][1],
            ],
            [
                j[1][0] * m[0][0] + j[1][1] * m[1][0],
                j[1][0] * m[0][1] + j[1][1] * m[1][1],
            ],
        ];
    }
    m
}

fn henon_orbits() -> Vec<(SystemSpec, PeriodicOrbit)> {
    let mut out = Vec::new();
    for (a, b) in [(-1.4, -0.3), (-1.0, 0.3), (0.0, 0.3)] {
        let sys = henon(a, b);
        let seeds = sys.phase_box().grid(30);
        for p in 1..=4 {
            for o in find_periodic(&sys, &ParamPoint::empty(), p, &seeds).unwrap().orbits {
                out.push((sys.clone(), o));
            }
        }
    }
    out
}

fn close(a: &[Complex64], b: &[[f64; 2]], rel: f64) -> bool {
    let scale = b.iter().map(|m| m[0].hypot(m[1])).fold(1.0, f64::max);
    // compare as unordered pairs
    let direct = a
        .iter()
        .zip(b)
        .all(|(x, y)| (x - Complex64::new(y[0], y[1])).norm() <= rel * scale);
    let swapped = a.len() == 2
        && (a[0] - Complex64::new(b[1][0], b[1][1])).norm() <= rel * scale
        && (a[1] - Complex64::new(b[0][0], b[0][1])).norm() <= rel * scale;
    direct || swapped
}

#[test]
fn multipliers_match_finite_differences() {
    let orbits = henon_orbits();
    assert!(orbits.len() >= 6, "{}", orbits.len());
    let h = 1e-6;
    for (sys, o) in &orbits {
        let z = o.point.coords;
        let mut m = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[c] += h;
            zm[c] -= h;
            let (fp_, fm) = (fp(sys, zp, o.period), fp(sys, zm, o.period));
            for r in 0..2 {
                m[r][c] = (fp_[r] - fm[r]) / (2.0 * h);
            }
        }
        let fd = multipliers_of(&m, 2);
        assert!(close(&fd, &o.multipliers, 1e-5), "{:?} vs {:?}", fd, o.multipliers);
    }
}

#[test]
fn multipliers_do_not_depend_on_the_representative() {
    for (sys, o) in henon_orbits() {
        for s in 0..o.period {
            let mult = multipliers_of(&chain_from(&sys, &o, s), 2);
            assert!(close(&mult, &o.multipliers, 1e-10), "{mult:?} vs {:?}", o.multipliers);
        }
    }
}

#[test]
fn found_orbits_are_periodic_and_classified_consistently() {
    for (sys, o) in henon_orbits() {
        let back = fp(&sys, o.point.coords, o.period);
        assert!(PhasePoint::new2(back[0], back[1]).distance(&o.point) < 1e-10);
        let mods = o.moduli();
        match o.classification {
            Classification::Sink => assert!(mods.iter().all(|&m| m < 1.0)),
            Classification::Saddle => assert!(mods[0] > 1.0 && mods[1] < 1.0),
            Classification::Source | Classification::ProjHypSource => assert!(mods.iter().all(|&m| m > 1.0)),
            Classification::NonHyperbolic => {}
        }
    }
}

#[test]
fn henon_period_two_census_contains_the_fixed_sink() {
    let census = sink_census(&henon(0.0, 0.3), &ParamPoint::empty(), 2, &SeedGrid::default()).unwrap();
    let s = census
        .sinks
        .iter()
        .find(|o| o.period == 1 && o.point.distance(&PhasePoint::new2(0.0, 0.0)) < 1e-10)
        .expect("fixed sink");
    for m in s.moduli() {
        assert!((m - 0.3f64.sqrt()).abs() < 1e-8);
    }
}

#[test]
fn census_is_deterministic() {
    for grid in [
        SeedGrid::default(),
        SeedGrid {
            per_axis: 20,
            seed: Some(7),
        },
    ] {
        let sys = SystemSpec::new(SystemKind::PlantedSinks { n: 4, rate: 0.5 }).unwrap();
        let a = sink_census(&sys, &ParamPoint::empty(), 2, &grid).unwrap();
        let b = sink_census(&sys, &ParamPoint::empty(), 2, &grid).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
    }
}

#[test]
fn global_contraction_has_full_basin() {
    let sys = SystemSpec::new(SystemKind::PlantedSinks { n: 1, rate: 0.5 }).unwrap();
    let census = sink_census(
        &sys,
        &ParamPoint::empty(),
        1,
        &SeedGrid {
            per_axis: 5,
            seed: None,
        },
    )
    .unwrap();
    assert_eq!(census.sinks.len(), 1);
    let s = &census.sinks[0];
    for m in s.moduli() {
        assert!((m - 0.5).abs() < 1e-12);
    }
    let est = basin_measure_estimate(&sys, &ParamPoint::empty(), s, 500, 60, 1).unwrap();
    assert_eq!(est.fraction, 1.0);
}

#[test]
fn planted_sinks_link_census_and_covering() {
    for n in [2, 4, 8] {
        let sys = SystemSpec::new(SystemKind::PlantedSinks { n, rate: 0.5 }).unwrap();
        let census = sink_census(&sys, &ParamPoint::empty(), 1, &SeedGrid::default()).unwrap();
        assert_eq!(census.sinks.len(), n);

        let g = GroundMetric::for_system(&sys);
        let limits: Vec<_> = census
            .sinks
            .iter()
            .map(|s| {
                basin_measure_estimate(&sys, &ParamPoint::empty(), s, 200, 80, 3)
                    .unwrap()
                    .limit
            })
            .collect();
        let delta = min_pairwise_w1(&limits, &g).unwrap();
        assert!(delta > 0.0);

        let q = EmergenceQuery {
            n_ladder: vec![400],
            sample_count: 20 * n,
            quantize_cell: Some(1e-3),
            seed: 11,
            ..EmergenceQuery::default()
        };
        let cloud = birkhoff_cloud(&sys, &ParamPoint::empty(), &q, 400).unwrap();
        let d = DistanceMatrix::from_fn(cloud.measures.len(), |i, j| {
            w1(&cloud.measures[i], &cloud.measures[j], &g).unwrap()
        });
        let w = cloud.weights();
        // empirical basin weights: assign each cloud member to its nearest limit
        let mut basin = vec![0.0; n];
        for (m, wt) in cloud.measures.iter().zip(&w) {
            let near = (0..n)
                .min_by(|&a, &b| {
                    w1(m, &limits[a], &g)
                        .unwrap()
                        .total_cmp(&w1(m, &limits[b], &g).unwrap())
                })
                .unwrap();
            basin[near] += wt;
        }
        let w_min = basin.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(w_min > 0.0);
        let eps = 0.5 * delta * w_min;
        let full = covering_number_with(&d, &w, eps, None).unwrap();
        assert_eq!(full.n_centers, n, "N = {n}");
        let short = covering_number_with(&d, &w, eps, Some(n - 1));
        assert!(short.is_err(), "N - 1 centers should not reach eps");
    }
}
