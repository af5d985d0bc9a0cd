//! LP oracle and random measures shared by the transport tests and the acceptance run.

#![allow(dead_code)]

use emergence_core::transport::{DiscreteMeasure, GroundMetric};
use rand::Rng;

/// Dense two-phase simplex with Bland's rule for
/// `min c·x` subject to `A x = b`, `x ≥ 0`, `b ≥ 0`, `A` of full row rank.
pub fn lp_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let (rows, cols) = (a.len(), c.len());
    let width = cols + rows + 1;
    let mut t: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let mut r = a[i].clone();
            r.extend((0..rows).map(|k| if k == i { 1.0 } else { 0.0 }));
            r.push(b[i]);
            r
        })
        .collect();
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, col: usize) {
        let p = t[r][col];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        for i in 0..t.len() {
            if i != r {
                let f = t[i][col];
                if f != 0.0 {
                    for j in 0..t[i].len() {
                        t[i][j] -= f * t[r][j];
                    }
                }
            }
        }
        basis[r] = col;
    }

    fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
        let width = t[0].len();
        loop {
            // reduced costs c_j − c_B B⁻¹ A_j
            let entering = (0..allowed).find(|&j| {
                let z: f64 = basis.iter().enumerate().map(|(i, &bi)| cost[bi] * t[i][j]).sum();
                cost[j] - z < -1e-12
            });
            let Some(col) = entering else { return };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..t.len() {
                if t[i][col] > 1e-12 {
                    let ratio = t[i][width - 1] / t[i][col];
                    let key = (ratio, basis[i], i);
                    if best.is_none_or(|b| key.0 < b.0 - 1e-15 || (key.0 <= b.0 + 1e-15 && key.1 < b.1)) {
                        best = Some(key);
                    }
                }
            }
            let (_, _, r) = best.expect("bounded LP");
            pivot(t, basis, r, col);
        }
    }

    let mut phase1 = vec![0.0; width - 1];
    for v in &mut phase1[cols..] {
        *v = 1.0;
    }
    run(&mut t, &mut basis, &phase1, cols + rows);
    for r in 0..rows {
        if basis[r] >= cols {
            assert!(t[r][width - 1].abs() < 1e-9, "infeasible");
            if let Some(col) = (0..cols).find(|&j| t[r][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, r, col);
            }
        }
    }
    let mut phase2 = c.to_vec();
    phase2.extend(vec![0.0; rows]);
    run(&mut t, &mut basis, &phase2, cols);
    basis
        .iter()
        .enumerate()
        .filter(|(_, &bi)| bi < cols)
        .map(|(i, &bi)| c[bi] * t[i][width - 1])
        .sum()
}

/// Transport LP with the last column constraint dropped (it is implied).
pub fn transport_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &GroundMetric) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..m {
        let mut row = vec![0.0; m * n];
        for j in 0..n {
            row[i * n + j] = 1.0;
        }
        a.push(row);
        b.push(mu.weights()[i]);
    }
    for j in 0..n - 1 {
        let mut row = vec![0.0; m * n];
        for i in 0..m {
            row[i * n + j] = 1.0;
        }
        a.push(row);
        b.push(nu.weights()[j]);
    }
    let c: Vec<f64> = mu
        .atoms()
        .iter()
        .flat_map(|x| nu.atoms().iter().map(move |y| g.cost(x, y)))
        .collect();
    lp_min(&a, &b, &c)
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn random_measure(rng: &mut impl Rng, dim: usize, atoms: usize, spread: f64) -> DiscreteMeasure {
    let pts: Vec<[f64; 2]> = (0..atoms)
        .map(|_| {
            let x = rng.gen_range(0.0..spread);
            [x, if dim == 2 { rng.gen_range(0.0..spread) } else { 0.0 }]
        })
        .collect();
    let raw: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..atoms - 1].iter().sum();
    w[atoms - 1] = 1.0 - head;
    DiscreteMeasure::new(dim, pts, w).unwrap()
}
