//! Exact minimum-cost assignment via the Hungarian algorithm with potentials
//! (shortest augmenting paths, O(n^3)). Costs are plain f64; the optimum is
//! exact up to floating-point arithmetic in the dual updates.

use crate::error::{MfldError, Result};
use crate::linalg;

/// Minimum total cost of assigning each row to a distinct column.
/// `cost` is row-major n x n.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    // 1-based arrays; column 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n]; // row -> column
    let mut total = 0.0;
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
        total += cost[(p[j] - 1) * n + (j - 1)];
    }
    (assignment, total)
}

/// Exact W2 between the empirical measures of two equal-size clouds
/// (row-major n x d each): W2^2 = (1/n) * min assignment cost with squared
/// Euclidean costs.
pub fn wasserstein2(a: &[f64], b: &[f64], n: usize, d: usize) -> Result<f64> {
    if a.len() != n * d || b.len() != n * d {
        return Err(MfldError::DimensionMismatch(format!(
            "clouds must both be {n}x{d}"
        )));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let ai = &a[i * d..(i + 1) * d];
        for j in 0..n {
            cost[i * n + j] = linalg::dist_sq(ai, &b[j * d..(j + 1) * d]);
        }
    }
    let (_, total) = min_cost_assignment(&cost, n);
    Ok((total / n as f64).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_known_instance() {
        // rows x cols costs; optimum picks 1 + 2 + 3 = 6 on the diagonal
        // after permutation.
        let cost = vec![
            4.0, 1.0, 3.0, //
            2.0, 0.0, 5.0, //
            3.0, 2.0, 2.0,
        ];
        let (asg, total) = min_cost_assignment(&cost, 3);
        assert!((total - 5.0).abs() < 1e-12, "total {total} asg {asg:?}");
    }

    #[test]
    fn permuted_cloud_has_zero_transport_cost() {
        let n = 100;
        let d = 3;
        let mut a = Vec::with_capacity(n * d);
        for i in 0..n * d {
            a.push(((i * 2654435761) % 1000) as f64 / 250.0 - 2.0);
        }
        let mut b = a.clone();
        // rotate rows by 37 positions
        b.rotate_left(37 * d);
        let w = wasserstein2(&a, &b, n, d).unwrap();
        assert!(w < 1e-9, "w {w}");
    }

    #[test]
    fn shifted_cloud_transport_is_the_shift() {
        let n = 16;
        let d = 2;
        let mut a = Vec::new();
        for i in 0..n {
            a.push(i as f64 * 0.37);
            a.push((i * i % 7) as f64 * 0.11);
        }
        let shift = [1.5, -2.0];
        let b: Vec<f64> = a
            .chunks(2)
            .flat_map(|r| vec![r[0] + shift[0], r[1] + shift[1]])
            .collect();
        let w = wasserstein2(&a, &b, n, d).unwrap();
        let expect = (shift[0] * shift[0] + shift[1] * shift[1]).sqrt();
        assert!((w - expect).abs() < 1e-10, "w {w} expect {expect}");
    }
}
