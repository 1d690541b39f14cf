//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

const EPS: f64 = 1e-12;

/// Minimum-cost transport between point masses on the real line, solved as
/// a dense linear program (two-phase simplex, Bland's rule). Cost is |x - y|.
pub fn transport_lp(xa: &[f64], pa: &[f64], xb: &[f64], pb: &[f64]) -> f64 {
    let (m, n) = (xa.len(), xb.len());
    let vars = m * n;
    // Supply rows for every source and demand rows for all but the last
    // sink; the dropped row is implied by equal total mass.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..m {
        let mut a = vec![0.0; vars];
        for j in 0..n {
            a[i * n + j] = 1.0;
        }
        rows.push((a, pa[i]));
    }
    for j in 0..n.saturating_sub(1) {
        let mut a = vec![0.0; vars];
        for i in 0..m {
            a[i * n + j] = 1.0;
        }
        rows.push((a, pb[j]));
    }
    let cost: Vec<f64> = (0..vars).map(|v| (xa[v / n] - xb[v % n]).abs()).collect();
    minimize(&rows, &cost)
}

/// `min c.x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
pub fn minimize(rows: &[(Vec<f64>, f64)], cost: &[f64]) -> f64 {
    let k = rows.len();
    let vars = cost.len();
    let width = vars + k + 1;
    let mut tab: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let mut r = a.clone();
            r.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            r.push(*b);
            r
        })
        .collect();
    assert!(tab.iter().all(|r| r[width - 1] >= 0.0));
    let mut basis: Vec<usize> = (vars..vars + k).collect();

    let phase1: Vec<f64> = (0..vars + k).map(|j| if j >= vars { 1.0 } else { 0.0 }).collect();
    run(&mut tab, &mut basis, &phase1, vars + k);
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= vars)
        .map(|(i, _)| tab[i][width - 1])
        .sum();
    assert!(infeasibility < 1e-9, "infeasible transport problem");
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..k {
        if basis[i] >= vars {
            if let Some(j) = (0..vars).find(|&j| tab[i][j].abs() > 1e-9) {
                pivot(&mut tab, &mut basis, i, j);
            }
        }
    }
    let mut phase2 = cost.to_vec();
    phase2.extend(vec![0.0; k]);
    run(&mut tab, &mut basis, &phase2, vars);
    basis
        .iter()
        .enumerate()
        .map(|(i, &b)| phase2[b] * tab[i][width - 1])
        .sum()
}

fn run(tab: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enterable: usize) {
    let rhs = tab[0].len() - 1;
    loop {
        let entering = (0..enterable).find(|&j| {
            let reduced = cost[j] - basis.iter().enumerate().map(|(i, &b)| cost[b] * tab[i][j]).sum::<f64>();
            reduced < -EPS
        });
        let Some(j) = entering else { return };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..tab.len() {
            if tab[i][j] > EPS {
                let ratio = tab[i][rhs] / tab[i][j];
                best = match best {
                    Some((r, bi)) if r < ratio - EPS || ((r - ratio).abs() <= EPS && basis[bi] < basis[i]) => {
                        Some((r, bi))
                    }
                    _ => Some((ratio, i)),
                };
            }
        }
        let (_, i) = best.expect("transport LP is bounded");
        pivot(tab, basis, i, j);
    }
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = tab[row].clone();
    for (i, r) in tab.iter_mut().enumerate() {
        if i != row && r[col] != 0.0 {
            let f = r[col];
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    basis[row] = col;
}

/// Random distribution on at most five distinct points in [-3, 3].
pub fn random_distribution(rng: &mut impl rand::Rng) -> (Vec<f64>, Vec<f64>) {
    let k = rng.random_range(1..=5);
    let mut xs: Vec<f64> = Vec::new();
    while xs.len() < k {
        let x: f64 = rng.random_range(-3.0..3.0);
        if !xs.contains(&x) {
            xs.push(x);
        }
    }
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    (xs, w.into_iter().map(|v| v / total).collect())
}
