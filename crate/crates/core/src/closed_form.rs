//! Analytic expressions for the attacked protocol's statistics, used as
//! independent references for the simulated pipeline.
//!
//! All tables have axes `a` (2) × `e` (2) × `b` (4), matching
//! [`crate::protocol::JointDistribution`].

use num_complex::Complex64;

use crate::qlin::{CMatrix, ProbabilityTable};

pub const AEB_AXES: [(&str, usize); 3] = [("a", 2), ("e", 2), ("b", 4)];

pub(crate) fn aeb_index(a: usize, e: usize, b: usize) -> usize {
    (a * 2 + e) * 4 + b
}

fn table(entries: &[((usize, usize, usize), f64)]) -> ProbabilityTable {
    let mut v = vec![0.0; 16];
    for &((a, e, b), p) in entries {
        v[aeb_index(a, e, b)] = p;
    }
    ProbabilityTable::with_axes(&AEB_AXES, v).expect("closed-form table is normalized")
}

/// Noiseless attack: `P000 = 1/2`, `P100 = P101 = P110 = P111 = 1/8`.
pub fn noiseless_table() -> ProbabilityTable {
    table(&[
        ((0, 0, 0), 0.5),
        ((1, 0, 0), 0.125),
        ((1, 0, 1), 0.125),
        ((1, 1, 0), 0.125),
        ((1, 1, 1), 0.125),
    ])
}

/// Amplitude-damping statistics in their commonly quoted closed form.
///
/// This form books all of the a = 1 |φ±⟩ weight, `(2-p)p/8` per outcome,
/// under `e = 0`. The simulated pipeline keeps the part produced by
/// return-leg damping of the `y = 1` branch, `p(1-p)/8` per outcome, under
/// `e = 1`. Entries with `a = 0`, and those with `b ∈ {0, 1}`, agree.
pub fn amplitude_damping_table(p: f64) -> ProbabilityTable {
    let phi = (2.0 - p) * p / 8.0;
    table(&[
        ((0, 0, 0), (2.0 - p).powi(2) / 8.0),
        ((0, 0, 1), p * p / 8.0),
        ((0, 0, 2), phi),
        ((0, 0, 3), phi),
        ((1, 0, 2), phi),
        ((1, 0, 3), phi),
        ((1, 1, 0), (1.0 - p).powi(2) / 8.0),
        ((1, 1, 1), (1.0 - p).powi(2) / 8.0),
        ((1, 0, 0), 0.125),
        ((1, 0, 1), 0.125),
    ])
}

/// Depolarizing statistics; the `(a, e)` marginal is `(1/2, 0, 1/4, 1/4)`
/// for every `p`.
pub fn depolarizing_table(p: f64) -> ProbabilityTable {
    let a0_err = p * (2.0 - p) / 8.0;
    let a1_bell = 0.125 + p * (p - 2.0) / 16.0;
    let a1_phi = p * (2.0 - p) / 16.0;
    let mut entries = vec![
        ((0, 0, 0), 0.5 + 3.0 * p * (p - 2.0) / 8.0),
        ((0, 0, 1), a0_err),
        ((0, 0, 2), a0_err),
        ((0, 0, 3), a0_err),
    ];
    for e in 0..2 {
        entries.push(((1, e, 0), a1_bell));
        entries.push(((1, e, 1), a1_bell));
        entries.push(((1, e, 2), a1_phi));
        entries.push(((1, e, 3), a1_phi));
    }
    table(&entries)
}

fn real_matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| Complex64::new(f(i, j), 0.0))
}

/// `ht` reduced states under amplitude damping in the basis
/// `{|01⟩, |10⟩, |00⟩}`.
pub fn amplitude_damping_reduced_ht(p: f64) -> [CMatrix; 2] {
    let q = 1.0 - p;
    let damp = p * (2.0 - p);
    let rho0 = [[q * q, q, 0.0], [q, 1.0, 0.0], [0.0, 0.0, damp]];
    let rho1 = [[q * q, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, damp]];
    [
        real_matrix(3, |i, j| rho0[i][j] / 2.0),
        real_matrix(3, |i, j| rho1[i][j] / 2.0),
    ]
}

/// Eigenvalues of the two amplitude-damping `ht` states and of their
/// average, each sorted ascending.
pub fn amplitude_damping_eigenvalues(p: f64) -> [Vec<f64>; 3] {
    let u = (p - 2.0) * p;
    let root = (u * (p - 1.0).powi(2) + 1.0).sqrt();
    sorted([
        vec![0.0, -u / 2.0, (u + 2.0) / 2.0],
        vec![0.5, (p - 1.0).powi(2) / 2.0, -u / 2.0],
        vec![-u / 2.0, (u + root + 2.0) / 4.0, (u - root + 2.0) / 4.0],
    ])
}

/// `ht` reduced states under depolarizing noise in the basis
/// `{|00⟩, |01⟩, |10⟩, |11⟩}`.
pub fn depolarizing_reduced_ht(p: f64) -> [CMatrix; 2] {
    let edge = (2.0 - p) * p;
    let mid = (p - 2.0) * p + 2.0;
    let coh = 2.0 * (p - 1.0).powi(2);
    let rho0 = [
        [edge, 0.0, 0.0, 0.0],
        [0.0, mid, coh, 0.0],
        [0.0, coh, mid, 0.0],
        [0.0, 0.0, 0.0, edge],
    ];
    [
        real_matrix(4, |i, j| rho0[i][j] / 4.0),
        real_matrix(4, |i, j| if i == j { rho0[i][i] / 4.0 } else { 0.0 }),
    ]
}

pub fn depolarizing_eigenvalues(p: f64) -> [Vec<f64>; 3] {
    let edge = (2.0 - p) * p;
    let u = (p - 2.0) * p;
    sorted([
        vec![edge / 4.0, edge / 4.0, edge / 4.0, (3.0 * u + 4.0) / 4.0],
        vec![edge / 4.0, edge / 4.0, (u + 2.0) / 4.0, (u + 2.0) / 4.0],
        vec![0.25, edge / 4.0, edge / 4.0, (2.0 * u + 3.0) / 4.0],
    ])
}

fn sorted(mut sets: [Vec<f64>; 3]) -> [Vec<f64>; 3] {
    for s in &mut sets {
        s.sort_by(f64::total_cmp);
    }
    sets
}
