//! The noisy Ping-Pong pipeline and its information-theoretic metrics.
//!
//! For each encoded bit `a` the state `|ψ⁺⟩_ht |2⟩_x |0⟩_y` goes through
//! noise on `t`, Eve's `Q`, Alice's encoding, `Q⁻¹`, noise on `t` again, and
//! is then measured by Eve (`y`) and Bob (Bell basis on `h t`).

use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{self, AttackOperators, Measurement};
use crate::channels::{ChannelKind, LiftedChannel};
use crate::closed_form::{aeb_index, AEB_AXES};
use crate::error::{Error, Result};
use crate::qlin::{
    hermiticity_defect, mutual_information, partial_trace, von_neumann_entropy, CMatrix, CVector,
    DensityOperator, ProbabilityTable, StateVector, Subsystem, SubsystemLayout,
};

/// Bound on outcome mass outside `e ∈ {0,1}`, `b ∈ {ψ±, φ±}`.
pub const STRAY_TOL: f64 = 1e-10;

/// Where the two noise applications sit relative to Eve's operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOrdering {
    /// Noise before `Q` on the way out and after `Q⁻¹` on the way back.
    #[default]
    OutsideAttack,
    /// Noise between `Q` and the encoding, and between the encoding and `Q⁻¹`.
    InsideAttack,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub channel: ChannelKind,
    pub p: f64,
    pub ordering: NoiseOrdering,
}

impl ProtocolConfig {
    pub fn new(channel: ChannelKind, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::ParameterOutOfRange(p));
        }
        Ok(Self {
            channel,
            p,
            ordering: NoiseOrdering::OutsideAttack,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            channel: ChannelKind::None,
            p: 0.0,
            ordering: NoiseOrdering::OutsideAttack,
        }
    }

    pub fn with_ordering(mut self, ordering: NoiseOrdering) -> Self {
        self.ordering = ordering;
        self
    }
}

#[derive(Clone, Debug)]
pub struct JointDistribution {
    pub config: ProtocolConfig,
    /// Axes `a` (2), `e` (2), `b` (4).
    pub p_aeb: ProbabilityTable,
    /// Final `h t x y` state for each encoding.
    pub states: [DensityOperator; 2],
    /// Bob's `h t` state for each encoding.
    pub reduced_ht: [DensityOperator; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProtocolMetrics {
    pub i_ab: f64,
    pub i_ae: f64,
    pub key_rate: f64,
    pub qber_raw: f64,
    pub qber_sifted: f64,
    pub holevo: f64,
}

pub fn hty_index(h: usize, t: usize, y: usize) -> usize {
    (h * 3 + t) * 3 + y
}

pub fn ht_index(h: usize, t: usize) -> usize {
    h * 3 + t
}

/// `{|00⟩, |01⟩, |10⟩, |11⟩}` inside the 6-dimensional `h t` space.
pub const HT_POLARIZATION: [usize; 4] = [0, 1, 3, 4];

struct Pipeline {
    layout: SubsystemLayout,
    channel: LiftedChannel,
    q: CMatrix,
    q_inverse: CMatrix,
    encodings: [CMatrix; 2],
    ordering: NoiseOrdering,
}

impl Pipeline {
    fn new(cfg: &ProtocolConfig) -> Result<Self> {
        let layout = SubsystemLayout::protocol();
        let channel = cfg.channel.build(cfg.p)?.lift(&layout, Subsystem::Travel)?;
        let AttackOperators { q, q_inverse, .. } = attack::build_q();
        let home = CMatrix::identity(2, 2);
        let lift_t = |m: &CMatrix| home.kronecker(m).kronecker(&CMatrix::identity(9, 9));
        Ok(Self {
            channel,
            q: home.kronecker(&q),
            q_inverse: home.kronecker(&q_inverse),
            encodings: [
                lift_t(&attack::encoding(0)?.matrix),
                lift_t(&attack::encoding(1)?.matrix),
            ],
            ordering: cfg.ordering,
            layout,
        })
    }

    fn initial(&self) -> CMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amp = CVector::zeros(54);
        for (h, t) in [(0, 1), (1, 0)] {
            amp[self.layout.basis_index(&[h, t, 2, 0])] = num_complex::Complex64::new(s, 0.0);
        }
        StateVector::new(self.layout.clone(), amp)
            .expect("|ψ+⟩|2⟩|0⟩ is normalized")
            .density()
            .matrix()
            .clone()
    }

    fn run(&self, bit: usize) -> Result<DensityOperator> {
        let conj = |u: &CMatrix, rho: &CMatrix| u * rho * u.adjoint();
        let enc = &self.encodings[bit];
        let mut rho = self.initial();
        match self.ordering {
            NoiseOrdering::OutsideAttack => {
                rho = self.channel.apply_matrix(&rho);
                rho = conj(&self.q, &rho);
                rho = conj(enc, &rho);
                rho = conj(&self.q_inverse, &rho);
                rho = self.channel.apply_matrix(&rho);
            }
            NoiseOrdering::InsideAttack => {
                rho = conj(&self.q, &rho);
                rho = self.channel.apply_matrix(&rho);
                rho = conj(enc, &rho);
                rho = self.channel.apply_matrix(&rho);
                rho = conj(&self.q_inverse, &rho);
            }
        }
        let herm = hermiticity_defect(&rho);
        let trace = rho.trace().re;
        if herm > 1e-10 || (trace - 1.0).abs() > 1e-10 {
            return Err(Error::Invariant(format!(
                "final state for a = {bit} has trace {trace}, hermiticity defect {herm:e}"
            )));
        }
        DensityOperator::new(self.layout.clone(), (&rho + rho.adjoint()).unscale(2.0))
    }
}

fn final_states_htxy(cfg: &ProtocolConfig) -> Result<[DensityOperator; 2]> {
    let pipeline = Pipeline::new(cfg)?;
    Ok([pipeline.run(0)?, pipeline.run(1)?])
}

fn check_stray(bit: usize, m: &Measurement) -> Result<()> {
    let stray = m.stray_mass();
    if stray > STRAY_TOL {
        return Err(Error::Invariant(format!(
            "a = {bit}: {stray:e} of the outcome mass is on residual or vacuum-probe outcomes"
        )));
    }
    Ok(())
}

/// Runs both encodings and assembles `P(a, e, b)` with `P(a) = 1/2`.
pub fn run_pipeline(cfg: &ProtocolConfig) -> Result<JointDistribution> {
    let states = final_states_htxy(cfg)?;
    let mut values = vec![0.0; 16];
    for (bit, rho) in states.iter().enumerate() {
        let m = attack::measure(rho)?;
        check_stray(bit, &m)?;
        for e in 0..2 {
            for b in 0..4 {
                values[aeb_index(bit, e, b)] = 0.5 * m.probs[e][b];
            }
        }
    }
    // Renormalize away the (sub-tolerance) stray mass.
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    let p_aeb = ProbabilityTable::with_axes(&AEB_AXES, values)?;
    let ht = [Subsystem::Home, Subsystem::Travel];
    let reduced_ht = [
        partial_trace(&states[0], &ht)?,
        partial_trace(&states[1], &ht)?,
    ];
    Ok(JointDistribution {
        config: *cfg,
        p_aeb,
        states,
        reduced_ht,
    })
}

/// Bob–Eve `h t y` states for each encoding, after checking that `x` is
/// still in the vacuum. Index with [`hty_index`].
pub fn final_states(cfg: &ProtocolConfig) -> Result<[DensityOperator; 2]> {
    let states = final_states_htxy(cfg)?;
    let keep = [Subsystem::Home, Subsystem::Travel, Subsystem::ProbeY];
    let mut out = Vec::with_capacity(2);
    for rho in &states {
        let defect = attack::probe_x_defect(rho)?;
        if defect > attack::X_PURITY_TOL {
            return Err(Error::Invariant(format!(
                "probe x left the vacuum ({defect:e})"
            )));
        }
        out.push(partial_trace(rho, &keep)?);
    }
    let [a0, a1]: [DensityOperator; 2] = out.try_into().expect("two encodings");
    Ok([a0, a1])
}

/// `χ = S((ρ₀+ρ₁)/2) - (S(ρ₀)+S(ρ₁))/2` in bits.
pub fn holevo_bound(rho0: &DensityOperator, rho1: &DensityOperator) -> Result<f64> {
    let avg = rho0.average(rho1)?;
    let chi = von_neumann_entropy(&avg)?
        - 0.5 * (von_neumann_entropy(rho0)? + von_neumann_entropy(rho1)?);
    Ok(chi.max(0.0))
}

pub fn metrics(jd: &JointDistribution) -> Result<ProtocolMetrics> {
    let t = &jd.p_aeb;
    if t.shape() != [2, 2, 4] {
        return Err(Error::InvalidArgument(format!(
            "expected an a×e×b = 2×2×4 table, got {:?}",
            t.shape()
        )));
    }
    let i_ab = mutual_information(t, "a", "b")?;
    let i_ae = mutual_information(t, "a", "e")?;
    let (mut raw, mut sifted_err, mut sifted_total) = (0.0, 0.0, 0.0);
    for a in 0..2 {
        for e in 0..2 {
            for b in 0..4 {
                let v = t.get(&[a, e, b]);
                if b != a {
                    raw += v;
                }
                if b < 2 {
                    sifted_total += v;
                    if b != a {
                        sifted_err += v;
                    }
                }
            }
        }
    }
    let qber_sifted = if sifted_total > 0.0 {
        sifted_err / sifted_total
    } else {
        f64::NAN
    };
    Ok(ProtocolMetrics {
        i_ab,
        i_ae,
        key_rate: i_ab - i_ae,
        qber_raw: raw,
        qber_sifted,
        holevo: holevo_bound(&jd.reduced_ht[0], &jd.reduced_ht[1])?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub p: f64,
    pub metrics: ProtocolMetrics,
}

pub fn evaluate(kind: ChannelKind, p: f64) -> Result<SweepPoint> {
    let jd = run_pipeline(&ProtocolConfig::new(kind, p)?)?;
    Ok(SweepPoint {
        p,
        metrics: metrics(&jd)?,
    })
}

/// Evaluates every grid point in parallel on the current rayon pool; the
/// output follows grid order.
pub fn sweep(kind: ChannelKind, grid: &[f64]) -> Result<Vec<SweepPoint>> {
    grid.par_iter().map(|&p| evaluate(kind, p)).collect()
}

pub fn sweep_sequential(kind: ChannelKind, grid: &[f64]) -> Result<Vec<SweepPoint>> {
    grid.iter().map(|&p| evaluate(kind, p)).collect()
}

/// `steps` evenly spaced points from `start` to `end`, endpoints exact.
pub fn p_grid(start: f64, end: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 steps, got {steps}"
        )));
    }
    for v in [start, end] {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(Error::ParameterOutOfRange(v));
        }
    }
    if start > end {
        return Err(Error::InvalidArgument(format!(
            "empty range {start}..{end}"
        )));
    }
    let n = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                end
            } else {
                start + (end - start) * (i as f64) / n
            }
        })
        .collect())
}

/// Eigenvalues (ascending) of `ρ⁰_ht`, `ρ¹_ht` and their average, restricted
/// to the polarization block `{|00⟩, |01⟩, |10⟩, |11⟩}`.
pub fn polarization_spectra(jd: &JointDistribution) -> Result<[Vec<f64>; 3]> {
    let r0 = jd.reduced_ht[0].restrict_to_basis(&HT_POLARIZATION)?;
    let r1 = jd.reduced_ht[1].restrict_to_basis(&HT_POLARIZATION)?;
    let avg = (&r0 + &r1).unscale(2.0);
    Ok([
        crate::qlin::hermitian_spectrum(&r0)?,
        crate::qlin::hermitian_spectrum(&r1)?,
        crate::qlin::hermitian_spectrum(&avg)?,
    ])
}
