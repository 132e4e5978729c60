//! Local classical post-processing of the noiseless attack statistics, and
//! a check that no such processing reproduces the amplitude-damping table.
//!
//! Alice relabels her bit `a` and Bob relabels his Bell symbol `b`, each
//! independently and without communication. Eve's symbol `e` is untouched.
//! Whatever the raw parameters, a model acts on the table through two
//! column-stochastic matrices: `A[a'][a]` (2×2) and `B[b'][b]` (4×4). The
//! search works directly in that effective parameterization.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::ChannelKind;
use crate::closed_form::{self, aeb_index, AEB_AXES};
use crate::error::{Error, Result};
use crate::protocol::{run_pipeline, ProtocolConfig};
use crate::qlin::ProbabilityTable;

const PROB_TOL: f64 = 1e-12;

/// Alice's noise: with weight `alpha` the conditional map `P(0|0) = g`,
/// `P(0|1) = h`; otherwise a coin with `P(0) = r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AliceNoise {
    pub alpha: f64,
    pub g: f64,
    pub h: f64,
    pub r: f64,
}

/// Bob's noise: with weight `beta` the conditional rows `given_zero =
/// P(·|0)` and `given_one = P(·|1)` over `{0,1,2,3}`; otherwise a
/// four-outcome coin. Input symbols 2 and 3 pass through the conditional
/// part unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BobNoise {
    pub beta: f64,
    pub given_zero: [f64; 4],
    pub given_one: [f64; 4],
    pub coin: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalNoiseModel {
    pub alice: AliceNoise,
    pub bob: BobNoise,
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&v) || v.is_nan() {
        return Err(Error::InvalidModel(format!(
            "{name} = {v} is not in [0, 1]"
        )));
    }
    Ok(())
}

fn check_distribution(name: &str, v: &[f64; 4]) -> Result<()> {
    for &x in v {
        check_prob(name, x)?;
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{name} sums to {total}")));
    }
    Ok(())
}

impl LocalNoiseModel {
    /// Leaves every record unchanged.
    pub fn identity() -> Self {
        Self {
            alice: AliceNoise {
                alpha: 1.0,
                g: 1.0,
                h: 0.0,
                r: 0.5,
            },
            bob: BobNoise {
                beta: 1.0,
                given_zero: [1.0, 0.0, 0.0, 0.0],
                given_one: [0.0, 1.0, 0.0, 0.0],
                coin: [0.25; 4],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.alice;
        for (name, v) in [("alpha", a.alpha), ("g", a.g), ("h", a.h), ("r", a.r)] {
            check_prob(name, v)?;
        }
        check_prob("beta", self.bob.beta)?;
        check_distribution("P^B(.|0)", &self.bob.given_zero)?;
        check_distribution("P^B(.|1)", &self.bob.given_one)?;
        check_distribution("Bob's coin", &self.bob.coin)
    }

    /// Alice's effective channel, `[output][input]`.
    pub fn alice_matrix(&self) -> [[f64; 2]; 2] {
        let AliceNoise { alpha, g, h, r } = self.alice;
        let zero_given = |cond: f64| alpha * cond + (1.0 - alpha) * r;
        let (z0, z1) = (zero_given(g), zero_given(h));
        [[z0, z1], [1.0 - z0, 1.0 - z1]]
    }

    /// Bob's effective channel, `[output][input]`.
    pub fn bob_matrix(&self) -> [[f64; 4]; 4] {
        let BobNoise {
            beta,
            given_zero,
            given_one,
            coin,
        } = self.bob;
        let mut m = [[0.0; 4]; 4];
        for (out, row) in m.iter_mut().enumerate() {
            for (inp, entry) in row.iter_mut().enumerate() {
                let cond = match inp {
                    0 => given_zero[out],
                    1 => given_one[out],
                    _ => f64::from(u8::from(out == inp)),
                };
                *entry = beta * cond + (1.0 - beta) * coin[out];
            }
        }
        m
    }

    /// Model with `alpha = beta = 1` realizing the given effective maps;
    /// the unused coins are set uniform.
    pub fn from_effective(maps: &EffectiveMaps) -> Self {
        Self {
            alice: AliceNoise {
                alpha: 1.0,
                g: maps.alice_zero[0],
                h: maps.alice_zero[1],
                r: 0.5,
            },
            bob: BobNoise {
                beta: 1.0,
                given_zero: maps.bob[0],
                given_one: maps.bob[1],
                coin: [0.25; 4],
            },
        }
    }
}

/// The effective maps on the symbols that occur in the noiseless table:
/// `alice_zero[y] = A(0|y)` and `bob[y] = B(·|y)` for `y ∈ {0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveMaps {
    pub alice_zero: [f64; 2],
    pub bob: [[f64; 4]; 2],
}

impl EffectiveMaps {
    fn key(&self) -> [f64; 10] {
        let mut k = [0.0; 10];
        k[..2].copy_from_slice(&self.alice_zero);
        k[2..6].copy_from_slice(&self.bob[0]);
        k[6..].copy_from_slice(&self.bob[1]);
        k
    }
}

fn check_aeb(t: &ProbabilityTable) -> Result<()> {
    let names: Vec<&str> = t.axes().iter().map(|a| a.name.as_str()).collect();
    if t.shape() != [2, 2, 4] || names != ["a", "e", "b"] {
        return Err(Error::InvalidArgument(format!(
            "expected an a×e×b = 2×2×4 table, got axes {names:?} with shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Alice's relabeling only.
pub fn apply_alice(table: &ProbabilityTable, m: &LocalNoiseModel) -> Result<ProbabilityTable> {
    check_aeb(table)?;
    m.validate()?;
    let a_mat = m.alice_matrix();
    let mut out = vec![0.0; 16];
    for ap in 0..2 {
        for e in 0..2 {
            for b in 0..4 {
                out[aeb_index(ap, e, b)] =
                    (0..2).map(|a| a_mat[ap][a] * table.get(&[a, e, b])).sum();
            }
        }
    }
    ProbabilityTable::with_axes(&AEB_AXES, clamp(out))
}

/// Bob's relabeling only.
pub fn apply_bob(table: &ProbabilityTable, m: &LocalNoiseModel) -> Result<ProbabilityTable> {
    check_aeb(table)?;
    m.validate()?;
    let b_mat = m.bob_matrix();
    let mut out = vec![0.0; 16];
    for a in 0..2 {
        for e in 0..2 {
            for bp in 0..4 {
                out[aeb_index(a, e, bp)] =
                    (0..4).map(|b| b_mat[bp][b] * table.get(&[a, e, b])).sum();
            }
        }
    }
    ProbabilityTable::with_axes(&AEB_AXES, clamp(out))
}

fn clamp(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    v
}

/// Alice's noise, then Bob's.
pub fn apply_local_noise(
    table: &ProbabilityTable,
    m: &LocalNoiseModel,
) -> Result<ProbabilityTable> {
    apply_bob(&apply_alice(table, m)?, m)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    TotalVariation,
    L2,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::TotalVariation => "total_variation",
            Metric::L2 => "l2",
        }
    }

    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        let diffs = x.iter().zip(y).map(|(a, b)| a - b);
        match self {
            Metric::TotalVariation => 0.5 * diffs.map(f64::abs).sum::<f64>(),
            Metric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" | "total-variation" | "total_variation" => Ok(Metric::TotalVariation),
            "l2" => Ok(Metric::L2),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// Which amplitude-damping table the local model has to reproduce.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// [`closed_form::amplitude_damping_table`].
    #[default]
    Quoted,
    /// The table produced by [`run_pipeline`].
    Simulated,
}

impl Target {
    pub fn table(self, p: f64) -> Result<ProbabilityTable> {
        match self {
            Target::Quoted => {
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    return Err(Error::ParameterOutOfRange(p));
                }
                Ok(closed_form::amplitude_damping_table(p))
            }
            Target::Simulated => {
                Ok(run_pipeline(&ProtocolConfig::new(ChannelKind::AmplitudeDamping, p)?)?.p_aeb)
            }
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quoted" => Ok(Target::Quoted),
            "simulated" => Ok(Target::Simulated),
            other => Err(Error::InvalidArgument(format!("unknown target `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Analytic contradiction checks

/// Step (i): the target has no `(a=0, e=1)` mass, which forces `A(0|1) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VanishingBlockCheck {
    /// Largest target entry `P(0, 1, b)`.
    pub target_block_max: f64,
    /// `P^A(0,1,0) = (αh + (1-α)r)/8` held on every probe model.
    pub alice_identity_holds: bool,
    /// `Σ_b P'(0,1,b) = A(0|1)/4` held on every probe model, so the block
    /// vanishes only if `A(0|1) = 0`: `(α = 0, r = 0)` or `(α = 1, h = 0)`.
    pub block_mass_identity_holds: bool,
    pub passed: bool,
}

/// Step (ii): with `α = 0, r = 0` Alice always outputs 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoinBranchCheck {
    /// Largest `P'(0,0,0)` over the probe models in this branch.
    pub max_p000: f64,
    pub target_p000: f64,
    pub passed: bool,
}

/// Step (iii): `α = 1, h = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalBranchCheck {
    pub target_ratio: f64,
    /// Smallest and largest `P'(0,0,0) / P'(1,0,0)` over the probe models.
    pub model_ratio_range: [f64; 2],
    /// Whether every probe model gave a ratio of exactly 4.
    pub ratio_always_four: bool,
    /// `Σ_{b∈{2,3}} P(0,0,b)` of the target.
    pub target_phi_mass_a0e0: f64,
    /// `Σ_{b∈{2,3}} P(1,1,b)` of the target.
    pub target_phi_mass_a1e1: f64,
    /// In this branch `P'(1,1,b') = (B(b'|0) + B(b'|1))/8` and
    /// `P'(0,0,b') = (g/2) B(b'|0)`, so any reproducible target satisfies
    /// `phi_mass_a0e0 <= 4 · phi_mass_a1e1`.
    pub branch_excluded: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContradictionReport {
    pub vanishing_block: VanishingBlockCheck,
    pub coin_branch: CoinBranchCheck,
    pub conditional_branch: ConditionalBranchCheck,
}

impl ContradictionReport {
    pub fn all_passed(&self) -> bool {
        self.vanishing_block.passed && self.coin_branch.passed && self.conditional_branch.passed
    }
}

fn bob_probe_rows() -> Vec<[f64; 4]> {
    let mut rows = vec![
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.25; 4],
    ];
    rows.extend([
        [0.4, 0.3, 0.2, 0.1],
        [0.1, 0.6, 0.0, 0.3],
        [0.5, 0.5, 0.0, 0.0],
    ]);
    rows
}

fn probe_bobs() -> Vec<BobNoise> {
    let rows = bob_probe_rows();
    let mut out = Vec::new();
    for &beta in &[0.0, 0.5, 1.0] {
        for r0 in &rows {
            for r1 in &rows {
                for coin in [[0.25; 4], [0.7, 0.1, 0.1, 0.1]] {
                    out.push(BobNoise {
                        beta,
                        given_zero: *r0,
                        given_one: *r1,
                        coin,
                    });
                }
            }
        }
    }
    out
}

fn levels() -> [f64; 5] {
    [0.0, 0.25, 0.5, 0.75, 1.0]
}

/// Checks the three analytic steps that rule out local noise, against the
/// given `a × e × b` target, starting from the noiseless table.
pub fn contradiction_checks(target: &ProbabilityTable) -> Result<ContradictionReport> {
    check_aeb(target)?;
    let source = closed_form::noiseless_table();
    let bobs = probe_bobs();

    // (i)
    let target_block_max = (0..4).map(|b| target.get(&[0, 1, b])).fold(0.0, f64::max);
    let mut alice_identity_holds = true;
    let mut block_mass_identity_holds = true;
    for &alpha in &levels() {
        for &h in &levels() {
            for &r in &levels() {
                for bob in bobs.iter().step_by(17) {
                    let m = LocalNoiseModel {
                        alice: AliceNoise {
                            alpha,
                            g: 0.3,
                            h,
                            r,
                        },
                        bob: *bob,
                    };
                    let after_alice = apply_alice(&source, &m)?;
                    let formula = alpha * h / 8.0 + (1.0 - alpha) * r / 8.0;
                    alice_identity_holds &= (after_alice.get(&[0, 1, 0]) - formula).abs() < 1e-15;
                    let out = apply_bob(&after_alice, &m)?;
                    let mass: f64 = (0..4).map(|b| out.get(&[0, 1, b])).sum();
                    block_mass_identity_holds &=
                        (mass - m.alice_matrix()[0][1] / 4.0).abs() < 1e-15;
                }
            }
        }
    }
    let vanishing_block = VanishingBlockCheck {
        target_block_max,
        alice_identity_holds,
        block_mass_identity_holds,
        passed: target_block_max <= PROB_TOL && alice_identity_holds && block_mass_identity_holds,
    };

    // (ii)
    let target_p000 = target.get(&[0, 0, 0]);
    let mut max_p000: f64 = 0.0;
    for &g in &levels() {
        for &h in &levels() {
            for bob in &bobs {
                let m = LocalNoiseModel {
                    alice: AliceNoise {
                        alpha: 0.0,
                        g,
                        h,
                        r: 0.0,
                    },
                    bob: *bob,
                };
                max_p000 = max_p000.max(apply_local_noise(&source, &m)?.get(&[0, 0, 0]));
            }
        }
    }
    let coin_branch = CoinBranchCheck {
        max_p000,
        target_p000,
        passed: max_p000 <= PROB_TOL && target_p000 > PROB_TOL,
    };

    // (iii)
    let target_ratio = target_p000 / target.get(&[1, 0, 0]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &g in &levels()[1..] {
        for &r in &levels() {
            for bob in &bobs {
                let m = LocalNoiseModel {
                    alice: AliceNoise {
                        alpha: 1.0,
                        g,
                        h: 0.0,
                        r,
                    },
                    bob: *bob,
                };
                let out = apply_local_noise(&source, &m)?;
                let (num, den) = (out.get(&[0, 0, 0]), out.get(&[1, 0, 0]));
                if num > PROB_TOL && den > PROB_TOL {
                    lo = lo.min(num / den);
                    hi = hi.max(num / den);
                }
            }
        }
    }
    let phi = |a: usize, e: usize| target.get(&[a, e, 2]) + target.get(&[a, e, 3]);
    let (phi00, phi11) = (phi(0, 0), phi(1, 1));
    let branch_excluded = phi00 > 4.0 * phi11 + PROB_TOL;
    let conditional_branch = ConditionalBranchCheck {
        target_ratio,
        model_ratio_range: [lo, hi],
        ratio_always_four: (lo - 4.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12,
        target_phi_mass_a0e0: phi00,
        target_phi_mass_a1e1: phi11,
        branch_excluded,
        passed: branch_excluded,
    };

    Ok(ContradictionReport {
        vanishing_block,
        coin_branch,
        conditional_branch,
    })
}

// ---------------------------------------------------------------------------
// Numerical search

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub metric: Metric,
    pub target: Target,
    /// Maximum number of objective evaluations.
    pub budget: u64,
    pub seed: u64,
    pub grid_step: f64,
    pub top_k: usize,
    /// Coordinate-descent step at which refinement stops.
    pub tolerance: f64,
    /// Seeded random perturbation restarts after the top-k refinement.
    pub restarts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            metric: Metric::TotalVariation,
            target: Target::Quoted,
            budget: 50_000_000,
            seed: 0,
            grid_step: 0.1,
            top_k: 32,
            tolerance: 1e-9,
            restarts: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub p: f64,
    pub metric: Metric,
    pub target: Target,
    pub min_distance: f64,
    pub best_model: LocalNoiseModel,
    pub best_maps: EffectiveMaps,
    pub evaluations: u64,
    pub budget: u64,
    pub budget_exhausted: bool,
}

/// Objective over effective maps for a fixed source/target pair.
struct Objective {
    source: [f64; 16],
    target: [f64; 16],
    metric: Metric,
}

impl Objective {
    fn eval(&self, x: &EffectiveMaps) -> f64 {
        let s = &self.source;
        let mut out = [0.0; 16];
        for ap in 0..2 {
            for e in 0..2 {
                // Alice first.
                let mut c = [0.0; 4];
                for (b, cb) in c.iter_mut().enumerate() {
                    let z0 = x.alice_zero[0];
                    let z1 = x.alice_zero[1];
                    let (w0, w1) = if ap == 0 {
                        (z0, z1)
                    } else {
                        (1.0 - z0, 1.0 - z1)
                    };
                    *cb = w0 * s[aeb_index(0, e, b)] + w1 * s[aeb_index(1, e, b)];
                }
                for bp in 0..4 {
                    let mut v = c[0] * x.bob[0][bp] + c[1] * x.bob[1][bp];
                    if bp >= 2 {
                        v += c[bp];
                    }
                    out[aeb_index(ap, e, bp)] = v;
                }
            }
        }
        self.metric.distance(&out, &self.target)
    }
}

fn simplex_grid(step: f64) -> Vec<[f64; 4]> {
    let n = (1.0 / step).round() as usize;
    let mut pts = Vec::new();
    for i in 0..=n {
        for j in 0..=n - i {
            for k in 0..=n - i - j {
                let l = n - i - j - k;
                let f = |m: usize| m as f64 / n as f64;
                pts.push([f(i), f(j), f(k), f(l)]);
            }
        }
    }
    pts
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist: f64,
    maps: EffectiveMaps,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.dist.total_cmp(&b.dist) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            let (ka, kb) = (a.maps.key(), b.maps.key());
            ka.iter()
                .zip(&kb)
                .find_map(|(x, y)| match x.total_cmp(y) {
                    std::cmp::Ordering::Equal => None,
                    o => Some(o == std::cmp::Ordering::Less),
                })
                .unwrap_or(false)
        }
    }
}

fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else if better(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
}

fn push_top(top: &mut Vec<Candidate>, c: Candidate, k: usize) {
    if top.len() < k {
        top.push(c);
        sort_candidates(top);
    } else if better(&c, top.last().expect("k > 0")) {
        top.pop();
        top.push(c);
        sort_candidates(top);
    }
}

/// Pairwise mass transfers keep Bob's columns on the simplex.
fn neighbours(x: &EffectiveMaps, step: f64) -> Vec<EffectiveMaps> {
    let mut out = Vec::with_capacity(28);
    for k in 0..2 {
        for sign in [-1.0, 1.0] {
            let mut y = *x;
            y.alice_zero[k] = (y.alice_zero[k] + sign * step).clamp(0.0, 1.0);
            if y.alice_zero[k] != x.alice_zero[k] {
                out.push(y);
            }
        }
    }
    for col in 0..2 {
        for from in 0..4 {
            let amount = step.min(x.bob[col][from]);
            if amount <= 0.0 {
                continue;
            }
            for to in 0..4 {
                if to != from {
                    let mut y = *x;
                    y.bob[col][from] -= amount;
                    y.bob[col][to] += amount;
                    out.push(y);
                }
            }
        }
    }
    out
}

fn refine(obj: &Objective, start: Candidate, tol: f64, budget: u64) -> (Candidate, u64) {
    let mut best = start;
    let mut step = 0.05;
    let mut used = 0u64;
    while step >= tol && used < budget {
        let mut improved = None;
        for y in neighbours(&best.maps, step) {
            if used >= budget {
                break;
            }
            used += 1;
            let c = Candidate {
                dist: obj.eval(&y),
                maps: y,
            };
            if c.dist < best.dist - 1e-15 && improved.as_ref().is_none_or(|b| better(&c, b)) {
                improved = Some(c);
            }
        }
        match improved {
            Some(c) => best = c,
            None => step /= 2.0,
        }
    }
    (best, used)
}

fn perturb(x: &EffectiveMaps, rng: &mut StdRng, scale: f64) -> EffectiveMaps {
    let mut y = *x;
    for v in &mut y.alice_zero {
        *v = (*v + rng.gen_range(-scale..=scale)).clamp(0.0, 1.0);
    }
    for col in &mut y.bob {
        for v in col.iter_mut() {
            *v = (*v + rng.gen_range(0.0..=scale)).max(0.0);
        }
        let total: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= total);
    }
    y
}

/// Minimizes the distance between the locally processed noiseless table and
/// the amplitude-damping target at `p`: a full grid over the effective maps,
/// coordinate-descent refinement of the `top_k` grid points, then seeded
/// perturbation restarts from the best point.
pub fn search_feasibility(p: f64, cfg: &SearchConfig) -> Result<FeasibilityReport> {
    if cfg.grid_step <= 0.0 || cfg.grid_step > 1.0 || cfg.top_k == 0 || cfg.tolerance <= 0.0 {
        return Err(Error::InvalidArgument(
            "invalid search configuration".into(),
        ));
    }
    let target = cfg.target.table(p)?;
    let obj = Objective {
        source: closed_form::noiseless_table()
            .values()
            .try_into()
            .expect("16 entries"),
        target: target.values().try_into().expect("16 entries"),
        metric: cfg.metric,
    };

    let n = (1.0 / cfg.grid_step).round() as usize;
    let axis: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let simplex = simplex_grid(cfg.grid_step);
    let per_row = (axis.len() * simplex.len() * simplex.len()) as u64;

    let mut evaluations = 0u64;
    let mut exhausted = false;
    let mut top: Vec<Candidate> = Vec::new();
    for &u in &axis {
        if evaluations + per_row > cfg.budget {
            exhausted = true;
            break;
        }
        let row_tops: Vec<Vec<Candidate>> = axis
            .par_iter()
            .map(|&v| {
                let mut local = Vec::with_capacity(cfg.top_k + 1);
                for b0 in &simplex {
                    for b1 in &simplex {
                        let maps = EffectiveMaps {
                            alice_zero: [u, v],
                            bob: [*b0, *b1],
                        };
                        push_top(
                            &mut local,
                            Candidate {
                                dist: obj.eval(&maps),
                                maps,
                            },
                            cfg.top_k,
                        );
                    }
                }
                local
            })
            .collect();
        evaluations += per_row;
        for c in row_tops.into_iter().flatten() {
            push_top(&mut top, c, cfg.top_k);
        }
    }
    if top.is_empty() {
        // Budget too small for a single grid row: start from the identity maps.
        let maps = EffectiveMaps {
            alice_zero: [1.0, 0.0],
            bob: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]],
        };
        top.push(Candidate {
            dist: obj.eval(&maps),
            maps,
        });
        evaluations += 1;
    }

    let remaining = cfg.budget.saturating_sub(evaluations);
    let share = remaining / (top.len() + cfg.restarts) as u64;
    let refined: Vec<(Candidate, u64)> = top
        .par_iter()
        .map(|&c| refine(&obj, c, cfg.tolerance, share))
        .collect();
    let mut best = top[0];
    for (c, used) in refined {
        evaluations += used;
        if better(&c, &best) {
            best = c;
        }
    }

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let start = perturb(&best.maps, &mut rng, 0.05);
        evaluations += 1;
        let start = Candidate {
            dist: obj.eval(&start),
            maps: start,
        };
        let (c, used) = refine(&obj, start, cfg.tolerance, share.saturating_sub(1));
        evaluations += used;
        if better(&c, &best) {
            best = c;
        }
    }
    if evaluations >= cfg.budget {
        exhausted = true;
    }

    Ok(FeasibilityReport {
        p,
        metric: cfg.metric,
        target: cfg.target,
        min_distance: best.dist,
        best_model: LocalNoiseModel::from_effective(&best.maps),
        best_maps: best.maps,
        evaluations,
        budget: cfg.budget,
        budget_exhausted: exhausted,
    })
}

/// A search distance at or below this counts as reproducing the target.
pub const FALSIFICATION_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Positive distance and every contradiction step holds.
    InfeasibilityConfirmed,
    /// Positive distance, but some contradiction step did not go through.
    Unconfirmed,
    /// The search found a local model reproducing the target.
    Falsified,
}

pub fn verdict(search: &FeasibilityReport, checks: &ContradictionReport) -> Verdict {
    if search.min_distance <= FALSIFICATION_THRESHOLD {
        Verdict::Falsified
    } else if checks.all_passed() {
        Verdict::InfeasibilityConfirmed
    } else {
        Verdict::Unconfirmed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_from(raw: &[f64]) -> ProbabilityTable {
        let total: f64 = raw.iter().sum();
        ProbabilityTable::with_axes(&AEB_AXES, raw.iter().map(|v| v / total).collect()).unwrap()
    }

    fn simplex_from(raw: &[f64]) -> [f64; 4] {
        let total: f64 = raw.iter().sum();
        [
            raw[0] / total,
            raw[1] / total,
            raw[2] / total,
            raw[3] / total,
        ]
    }

    fn model_strategy() -> impl Strategy<Value = LocalNoiseModel> {
        (
            prop::array::uniform4(0.0f64..=1.0),
            0.0f64..=1.0,
            prop::collection::vec(0.01f64..1.0, 12),
        )
            .prop_map(|(a, beta, rows)| LocalNoiseModel {
                alice: AliceNoise {
                    alpha: a[0],
                    g: a[1],
                    h: a[2],
                    r: a[3],
                },
                bob: BobNoise {
                    beta,
                    given_zero: simplex_from(&rows[0..4]),
                    given_one: simplex_from(&rows[4..8]),
                    coin: simplex_from(&rows[8..12]),
                },
            })
    }

    #[test]
    fn identity_model_is_identity() {
        let src = closed_form::amplitude_damping_table(0.37);
        let out = apply_local_noise(&src, &LocalNoiseModel::identity()).unwrap();
        assert!(out.max_abs_diff(&src).unwrap() < 1e-15);
    }

    #[test]
    fn alice_coin_only_entry() {
        // α = 0: P^A(0,1,0) = r/8.
        let m = LocalNoiseModel {
            alice: AliceNoise {
                alpha: 0.0,
                g: 0.9,
                h: 0.4,
                r: 0.3,
            },
            bob: LocalNoiseModel::identity().bob,
        };
        let out = apply_alice(&closed_form::noiseless_table(), &m).unwrap();
        assert!((out.get(&[0, 1, 0]) - 0.3 / 8.0).abs() < 1e-15);
        let mixed = LocalNoiseModel {
            alice: AliceNoise {
                alpha: 0.6,
                g: 0.9,
                h: 0.4,
                r: 0.3,
            },
            ..m
        };
        let out = apply_alice(&closed_form::noiseless_table(), &mixed).unwrap();
        assert!((out.get(&[0, 1, 0]) - (0.6 * 0.4 / 8.0 + 0.4 * 0.3 / 8.0)).abs() < 1e-15);
    }

    #[test]
    fn bob_only_noise_forces_equal_cross_terms() {
        let m = LocalNoiseModel {
            alice: LocalNoiseModel::identity().alice,
            bob: BobNoise {
                beta: 1.0,
                given_zero: [0.1, 0.5, 0.2, 0.2],
                given_one: [0.3, 0.6, 0.1, 0.0],
                coin: [0.25; 4],
            },
        };
        let out = apply_local_noise(&closed_form::noiseless_table(), &m).unwrap();
        let (a, d) = (0.1, 0.3);
        assert!((out.get(&[1, 0, 1]) - 0.125 * (0.5 + 0.6)).abs() < 1e-15);
        assert!((out.get(&[1, 1, 0]) - (a + d) / 8.0).abs() < 1e-15);
        // The e = 0 and e = 1 halves of the a = 1 block are identical before
        // and after any Bob-only processing.
        assert!((out.get(&[1, 0, 0]) - out.get(&[1, 1, 0])).abs() < 1e-15);
    }

    #[test]
    fn invalid_model_rejected() {
        let mut m = LocalNoiseModel::identity();
        m.bob.given_zero = [0.5, 0.6, 0.0, 0.0];
        assert!(matches!(
            apply_local_noise(&closed_form::noiseless_table(), &m),
            Err(Error::InvalidModel(_))
        ));
        let mut m = LocalNoiseModel::identity();
        m.alice.alpha = 1.2;
        assert!(m.validate().is_err());
    }

    #[test]
    fn wrong_table_shape_rejected() {
        let t = ProbabilityTable::with_axes(&[("a", 2)], vec![0.5, 0.5]).unwrap();
        assert!(apply_local_noise(&t, &LocalNoiseModel::identity()).is_err());
    }

    #[test]
    fn effective_maps_round_trip() {
        let maps = EffectiveMaps {
            alice_zero: [0.7, 0.2],
            bob: [[0.1, 0.2, 0.3, 0.4], [0.0, 0.5, 0.5, 0.0]],
        };
        let m = LocalNoiseModel::from_effective(&maps);
        m.validate().unwrap();
        let src = closed_form::noiseless_table();
        let obj = Objective {
            source: src.values().try_into().unwrap(),
            target: closed_form::amplitude_damping_table(0.5)
                .values()
                .try_into()
                .unwrap(),
            metric: Metric::TotalVariation,
        };
        let via_model = apply_local_noise(&src, &m).unwrap();
        let direct = Metric::TotalVariation.distance(
            via_model.values(),
            closed_form::amplitude_damping_table(0.5).values(),
        );
        assert!((obj.eval(&maps) - direct).abs() < 1e-15);
    }

    #[test]
    fn contradiction_steps_at_half_damping() {
        let r = contradiction_checks(&closed_form::amplitude_damping_table(0.5)).unwrap();
        assert!(r.vanishing_block.passed);
        assert!(r.coin_branch.passed);
        assert_eq!(r.coin_branch.max_p000, 0.0);
        assert!((r.conditional_branch.target_ratio - 2.25).abs() < 1e-12);
        assert!(r.conditional_branch.branch_excluded);
        // The ratio P'000/P'100 is not pinned to 4 inside the branch.
        assert!(!r.conditional_branch.ratio_always_four);
        assert!(r.conditional_branch.model_ratio_range[0] < 4.0);
        assert!((r.conditional_branch.model_ratio_range[1] - 4.0).abs() < 1e-12);
        assert!(r.all_passed());
    }

    #[test]
    fn contradiction_steps_at_zero_noise() {
        let r = contradiction_checks(&closed_form::amplitude_damping_table(0.0)).unwrap();
        assert!(r.vanishing_block.passed);
        assert!((r.conditional_branch.target_ratio - 4.0).abs() < 1e-12);
        assert!(!r.conditional_branch.branch_excluded);
        assert!(!r.all_passed());
    }

    #[test]
    fn search_at_zero_noise_finds_identity() {
        let rep = search_feasibility(0.0, &SearchConfig::default()).unwrap();
        assert_eq!(rep.min_distance, 0.0);
        assert!(!rep.budget_exhausted);
        let out = apply_local_noise(&closed_form::noiseless_table(), &rep.best_model).unwrap();
        assert!(out.max_abs_diff(&closed_form::noiseless_table()).unwrap() < 1e-15);
    }

    #[test]
    fn verdicts() {
        let checks = contradiction_checks(&closed_form::amplitude_damping_table(0.5)).unwrap();
        let mut rep = search_feasibility(0.5, &SearchConfig::default()).unwrap();
        assert_eq!(verdict(&rep, &checks), Verdict::InfeasibilityConfirmed);
        rep.min_distance = 0.0;
        assert_eq!(verdict(&rep, &checks), Verdict::Falsified);
        let zero = contradiction_checks(&closed_form::amplitude_damping_table(0.0)).unwrap();
        rep.min_distance = 0.1;
        assert_eq!(verdict(&rep, &zero), Verdict::Unconfirmed);
    }

    #[test]
    fn search_respects_budget() {
        let cfg = SearchConfig {
            budget: 1000,
            ..SearchConfig::default()
        };
        let rep = search_feasibility(0.5, &cfg).unwrap();
        assert!(rep.budget_exhausted);
        assert!(rep.evaluations <= 1000);
        assert!(rep.min_distance > 0.0);
    }

    #[test]
    fn search_is_deterministic_for_a_seed() {
        let cfg = SearchConfig {
            seed: 7,
            ..SearchConfig::default()
        };
        let a = search_feasibility(0.3, &cfg).unwrap();
        let b = search_feasibility(0.3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l2_metric_search_is_positive() {
        let cfg = SearchConfig {
            metric: Metric::L2,
            ..SearchConfig::default()
        };
        let rep = search_feasibility(0.5, &cfg).unwrap();
        assert!(rep.min_distance > 1e-3);
    }

    proptest! {
        #[test]
        fn local_noise_preserves_normalization(
            m in model_strategy(),
            raw in prop::collection::vec(0.0f64..1.0, 16),
        ) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-3);
            let out = apply_local_noise(&table_from(&raw), &m).unwrap();
            let total: f64 = out.values().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(out.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn alice_and_bob_commute(m in model_strategy(), raw in prop::collection::vec(0.0f64..1.0, 16)) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-3);
            let t = table_from(&raw);
            let ab = apply_bob(&apply_alice(&t, &m).unwrap(), &m).unwrap();
            let ba = apply_alice(&apply_bob(&t, &m).unwrap(), &m).unwrap();
            prop_assert!(ab.max_abs_diff(&ba).unwrap() < 1e-14);
        }

        #[test]
        fn processing_is_affine_in_the_table(
            m in model_strategy(),
            raw1 in prop::collection::vec(0.0f64..1.0, 16),
            raw2 in prop::collection::vec(0.0f64..1.0, 16),
            w in 0.0f64..=1.0,
        ) {
            prop_assume!(raw1.iter().sum::<f64>() > 1e-3 && raw2.iter().sum::<f64>() > 1e-3);
            let (t1, t2) = (table_from(&raw1), table_from(&raw2));
            let mix = ProbabilityTable::with_axes(
                &AEB_AXES,
                t1.values().iter().zip(t2.values()).map(|(a, b)| w * a + (1.0 - w) * b).collect(),
            ).unwrap();
            let lhs = apply_local_noise(&mix, &m).unwrap();
            let (o1, o2) = (apply_local_noise(&t1, &m).unwrap(), apply_local_noise(&t2, &m).unwrap());
            for i in 0..16 {
                let rhs = w * o1.values()[i] + (1.0 - w) * o2.values()[i];
                prop_assert!((lhs.values()[i] - rhs).abs() < 1e-14);
            }
        }

        #[test]
        fn distance_is_convex_along_bob_mixtures(
            m1 in model_strategy(),
            m2 in model_strategy(),
            w in 0.0f64..=1.0,
            p in 0.05f64..0.95,
        ) {
            // Same Alice map, Bob's conditional rows mixed: the output is
            // affine in the mixing weight, so the distance is convex.
            let mut m2 = m2;
            m2.alice = m1.alice;
            m2.bob.beta = m1.bob.beta;
            m2.bob.coin = m1.bob.coin;
            let mix_row = |a: [f64; 4], b: [f64; 4]| {
                let mut r = [0.0; 4];
                for i in 0..4 { r[i] = w * a[i] + (1.0 - w) * b[i]; }
                r
            };
            let mut mw = m1;
            mw.bob.given_zero = mix_row(m1.bob.given_zero, m2.bob.given_zero);
            mw.bob.given_one = mix_row(m1.bob.given_one, m2.bob.given_one);
            let src = closed_form::noiseless_table();
            let target = closed_form::amplitude_damping_table(p);
            let d = |m: &LocalNoiseModel| Metric::TotalVariation.distance(
                apply_local_noise(&src, m).unwrap().values(), target.values());
            prop_assert!(d(&mw) <= w * d(&m1) + (1.0 - w) * d(&m2) + 1e-12);
        }

        #[test]
        fn bob_only_models_keep_cross_terms_equal(m in model_strategy()) {
            let mut m = m;
            m.alice = LocalNoiseModel::identity().alice;
            let out = apply_local_noise(&closed_form::noiseless_table(), &m).unwrap();
            for b in 0..4 {
                prop_assert!((out.get(&[1, 0, b]) - out.get(&[1, 1, b])).abs() < 1e-15);
            }
        }
    }
}
