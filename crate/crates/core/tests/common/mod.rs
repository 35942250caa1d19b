#![allow(dead_code)]

use dgcvc::features::McepSequence;
use ndarray::Array2;
use rand::Rng;

/// Local cost excluding the energy coefficient.
pub fn local_cost(a: &McepSequence, b: &McepSequence, i: usize, j: usize) -> f64 {
    let (ra, rb) = (a.coeffs().row(i), b.coeffs().row(j));
    let mut s = 0.0;
    for d in 1..ra.len() {
        s += (ra[d] - rb[d]).powi(2);
    }
    s.sqrt()
}

/// Every monotone unit-step path from (0,0) to (n-1,m-1).
pub fn all_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(i: usize, j: usize, n: usize, m: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        cur.push((i, j));
        if (i, j) == (n - 1, m - 1) {
            out.push(cur.clone());
        } else {
            if i + 1 < n && j + 1 < m {
                go(i + 1, j + 1, n, m, cur, out);
            }
            if i + 1 < n {
                go(i + 1, j, n, m, cur, out);
            }
            if j + 1 < m {
                go(i, j + 1, n, m, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

/// Minimum total cost over all paths and the distortion of the minimizer.
pub fn brute_force_mcd(a: &McepSequence, b: &McepSequence) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for p in all_paths(a.n_frames(), b.n_frames()) {
        let cost: f64 = p.iter().map(|&(i, j)| local_cost(a, b, i, j)).sum();
        if cost < best.0 {
            let ln10 = std::f64::consts::LN_10;
            let mcd = p
                .iter()
                .map(|&(i, j)| 10.0 / ln10 * (2.0f64).sqrt() * local_cost(a, b, i, j))
                .sum::<f64>()
                / p.len() as f64;
            best = (cost, mcd);
        }
    }
    best
}

pub fn random_mcep(rng: &mut impl Rng, frames: usize, order: usize) -> McepSequence {
    McepSequence::new(Array2::from_shape_fn((frames, order), |_| rng.random_range(-2.0..2.0))).unwrap()
}
