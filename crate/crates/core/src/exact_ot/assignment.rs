//! Dense linear assignment by shortest augmenting paths
//! (Jonker-Volgenant style, O(n^3)).

/// Solve the square assignment problem on a dense cost matrix.
///
/// `cost` is row-major n x n. Returns `(perm, total)` where `perm[i]` is the
/// column assigned to row `i` and `total` is the summed cost.
pub fn solve_dense(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    // 1-based internally; index 0 is the virtual unassigned slot.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);

        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
        total += cost[(p[j] - 1) * n + (j - 1)];
    }
    (perm, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_known_instance() {
        // Optimal: 0->1 (1), 1->0 (2): total 3.
        let cost = vec![4.0, 1.0, 2.0, 5.0];
        let (perm, total) = solve_dense(2, &cost);
        assert_eq!(perm, vec![1, 0]);
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_is_optimal_when_cheapest() {
        let cost = vec![0.0, 9.0, 9.0, 9.0, 0.0, 9.0, 9.0, 9.0, 0.0];
        let (perm, total) = solve_dense(3, &cost);
        assert_eq!(perm, vec![0, 1, 2]);
        assert_eq!(total, 0.0);
    }
}
