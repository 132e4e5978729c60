//! Independent lower-envelope check of the local-noise search.
//!
//! The reference minimizes total variation by exhaustive dynamic programming
//! over a discretized (A, B) space: for fixed Alice map the TV objective
//! splits into a sum over Bob's outputs, each depending only on the mass
//! that the two input columns send there.

use ppsim::classical_sim::{search_feasibility, Metric, SearchConfig, Target};
use ppsim::closed_form::{amplitude_damping_table, noiseless_table};

fn idx(a: usize, e: usize, b: usize) -> usize {
    (a * 2 + e) * 4 + b
}

fn dp_floor(target: &[f64], alice_steps: usize, bob_units: usize) -> f64 {
    let src = noiseless_table().values().to_vec();
    let n = bob_units;
    let mut best = f64::INFINITY;
    for iu in 0..=alice_steps {
        for iv in 0..=alice_steps {
            let (u, v) = (
                iu as f64 / alice_steps as f64,
                iv as f64 / alice_steps as f64,
            );
            let a_mat = [[u, v], [1.0 - u, 1.0 - v]];
            let mut c = [0.0; 16];
            for ap in 0..2 {
                for e in 0..2 {
                    for b in 0..4 {
                        c[idx(ap, e, b)] =
                            a_mat[ap][0] * src[idx(0, e, b)] + a_mat[ap][1] * src[idx(1, e, b)];
                    }
                }
            }
            let cost = |bp: usize, i: usize, j: usize| {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                let mut s = 0.0;
                for ap in 0..2 {
                    for e in 0..2 {
                        let mut val = x * c[idx(ap, e, 0)] + y * c[idx(ap, e, 1)];
                        if bp >= 2 {
                            val += c[idx(ap, e, bp)];
                        }
                        s += (val - target[idx(ap, e, bp)]).abs();
                    }
                }
                0.5 * s
            };
            // f[i][j]: best cost of outputs processed so far having used i, j units.
            let mut f = vec![vec![f64::INFINITY; n + 1]; n + 1];
            f[0][0] = 0.0;
            for bp in 0..3 {
                let mut g = vec![vec![f64::INFINITY; n + 1]; n + 1];
                for i in 0..=n {
                    for j in 0..=n {
                        if !f[i][j].is_finite() {
                            continue;
                        }
                        for di in 0..=n - i {
                            for dj in 0..=n - j {
                                let val = f[i][j] + cost(bp, di, dj);
                                if val < g[i + di][j + dj] {
                                    g[i + di][j + dj] = val;
                                }
                            }
                        }
                    }
                }
                f = g;
            }
            for (i, fi) in f.iter().enumerate() {
                for (j, &fij) in fi.iter().enumerate() {
                    if fij.is_finite() {
                        best = best.min(fij + cost(3, n - i, n - j));
                    }
                }
            }
        }
    }
    best
}

#[test]
fn dp_reference_brackets_frozen_quoted_floors() {
    for (p, floor) in [(0.2, 0.09), (0.5, 0.1875), (0.8, 0.24)] {
        let t = amplitude_damping_table(p);
        // A discretized optimum can only sit at or above the true floor.
        let d = dp_floor(t.values(), 20, 10);
        assert!(d >= floor - 1e-12, "p={p}: dp {d} below frozen {floor}");
        assert!(d <= floor + 0.01, "p={p}: dp {d} far above frozen {floor}");
        let p2: f64 = p;
        assert!((floor - p2 * (2.0 - p2) / 4.0).abs() < 1e-15);
    }
}

#[test]
fn search_reaches_but_does_not_beat_the_floor() {
    for (p, floor) in [(0.2, 0.09), (0.5, 0.1875), (0.8, 0.24)] {
        let rep = search_feasibility(p, &SearchConfig::default()).unwrap();
        assert!(
            rep.min_distance >= 0.9 * floor,
            "p={p}: {}",
            rep.min_distance
        );
        assert!(
            rep.min_distance <= floor + 1e-6,
            "p={p}: {}",
            rep.min_distance
        );
        assert!(!rep.budget_exhausted);
    }
}

#[test]
fn search_against_simulated_target() {
    for p in [0.2, 0.5, 0.8] {
        let cfg = SearchConfig {
            target: Target::Simulated,
            ..SearchConfig::default()
        };
        let rep = search_feasibility(p, &cfg).unwrap();
        let floor = p / 4.0;
        assert!(
            rep.min_distance >= 0.9 * floor,
            "p={p}: {}",
            rep.min_distance
        );
        assert!(
            rep.min_distance <= floor + 1e-6,
            "p={p}: {}",
            rep.min_distance
        );
    }
}

#[test]
fn l2_search_is_bounded_by_tv_model() {
    // The L2 distance of the TV-optimal model bounds the L2 optimum.
    let p = 0.5;
    let l2 = search_feasibility(
        p,
        &SearchConfig {
            metric: Metric::L2,
            ..SearchConfig::default()
        },
    )
    .unwrap();
    let tv = search_feasibility(p, &SearchConfig::default()).unwrap();
    let out = ppsim::classical_sim::apply_local_noise(&noiseless_table(), &tv.best_model).unwrap();
    let l2_of_tv = Metric::L2.distance(out.values(), amplitude_damping_table(p).values());
    assert!(l2.min_distance <= l2_of_tv + 1e-12);
    assert!(l2.min_distance > 0.0);
}
