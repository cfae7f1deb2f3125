//! Exact transportation solver: successive shortest augmenting paths with
//! node potentials on the complete bipartite graph.
//!
//! Handles arbitrary nonnegative real supplies/demands (summing to the same
//! total). Each phase runs a dense multi-source Dijkstra under reduced costs,
//! then augments the bottleneck flow along the cheapest path to a sink with
//! remaining demand.

use crate::error::{Error, Result};

/// Solve min-cost transport of `supply` onto `demand` under a dense
/// row-major `cost` (n x m). Returns the coupling matrix and its cost.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = supply.len();
    let m = demand.len();
    assert_eq!(cost.len(), n * m);
    let sa: f64 = supply.iter().sum();
    let sb: f64 = demand.iter().sum();
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(Error::validation(format!(
            "supply ({sa}) and demand ({sb}) totals differ"
        )));
    }
    if sa <= 0.0 {
        return Err(Error::validation("total mass must be positive"));
    }

    let v = n + m; // node count: sources then sinks
    let mut flow = vec![0.0; n * m];
    let mut rem_a = supply.to_vec();
    let mut rem_b = demand.to_vec();
    let mut pot = vec![0.0; v];
    let mut dist = vec![0.0; v];
    let mut parent = vec![usize::MAX; v];
    let mut done = vec![false; v];

    let mass_tol = 1e-15 * sa.max(1.0);
    let max_phases = 50 * (n + m) + 100;
    let mut phases = 0usize;

    while rem_a.iter().any(|&r| r > mass_tol) {
        phases += 1;
        if phases > max_phases {
            return Err(Error::numeric(
                "transport solver exceeded its augmentation budget",
            ));
        }

        // Multi-source Dijkstra from all sources with remaining supply.
        for i in 0..v {
            dist[i] = f64::INFINITY;
            parent[i] = usize::MAX;
            done[i] = false;
        }
        for (i, &r) in rem_a.iter().enumerate() {
            if r > mass_tol {
                dist[i] = 0.0;
            }
        }

        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for x in 0..v {
                if !done[x] && dist[x] < best {
                    best = dist[x];
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && rem_b[u - n] > mass_tol {
                target = u;
                break;
            }
            if u < n {
                // Forward arcs to every sink.
                let row = &cost[u * m..(u + 1) * m];
                for j in 0..m {
                    let w = n + j;
                    if done[w] {
                        continue;
                    }
                    let rc = row[j] + pot[u] - pot[w];
                    let cand = dist[u] + rc;
                    if cand < dist[w] {
                        dist[w] = cand;
                        parent[w] = u;
                    }
                }
            } else {
                // Backward arcs along positive flow.
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= 0.0 {
                        continue;
                    }
                    let rc = -cost[i * m + j] + pot[u] - pot[i];
                    let cand = dist[u] + rc;
                    if cand < dist[i] {
                        dist[i] = cand;
                        parent[i] = u;
                    }
                }
            }
        }

        if target == usize::MAX {
            return Err(Error::numeric(
                "transport solver found no augmenting path (mass mismatch)",
            ));
        }

        let d_t = dist[target];
        for x in 0..v {
            pot[x] += dist[x].min(d_t);
        }

        // Trace the path back to its source, collecting the bottleneck.
        let mut bottleneck = rem_b[target - n];
        let mut node = target;
        while parent[node] != usize::MAX {
            let prev = parent[node];
            if prev >= n {
                // prev is a sink, node is a source: backward arc.
                bottleneck = bottleneck.min(flow[node * m + (prev - n)]);
            }
            node = prev;
        }
        bottleneck = bottleneck.min(rem_a[node]);
        let source = node;

        let mut cur = target;
        while parent[cur] != usize::MAX {
            let prev = parent[cur];
            if prev < n {
                flow[prev * m + (cur - n)] += bottleneck;
            } else {
                flow[cur * m + (prev - n)] -= bottleneck;
            }
            cur = prev;
        }
        rem_a[source] -= bottleneck;
        rem_b[target - n] -= bottleneck;
    }

    let value = flow
        .iter()
        .zip(cost)
        .map(|(f, c)| f * c)
        .sum::<f64>();
    Ok((flow, value))
}
