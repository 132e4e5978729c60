//! Eve's two-probe attack on the travel photon, Alice's encoding and Bob's
//! Bell measurement.
//!
//! Eve's operators act on `t ⊗ x ⊗ y` (27 dimensions, index `(t*3 + x)*3 + y`).
//! Bob's projectors act on `h ⊗ t` (6 dimensions, index `h*3 + t`).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qlin::{partial_trace, CMatrix, CVector, DensityOperator, Subsystem, SubsystemLayout};

/// Bob's outcome symbols, in order: ψ⁺, ψ⁻, φ⁺, φ⁻, then the projector onto
/// states with an empty travel mode.
pub const BELL_LABELS: [&str; 5] = ["psi+", "psi-", "phi+", "phi-", "residual"];
pub const RESIDUAL: usize = 4;
/// Eve's `y` outcome for the vacuum level.
pub const PROBE_VACUUM: usize = 2;

const TXY: usize = 27;

fn txy(t: usize, x: usize, y: usize) -> usize {
    (t * 3 + x) * 3 + y
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn permutation(dim: usize, map: impl Fn(usize) -> usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(map(i), i)] = one();
    }
    m
}

/// Controlled polarization beam splitter as a permutation of `t x y` basis
/// states: `|020⟩ ↔ |002⟩`, `|121⟩ ↔ |112⟩`, everything else fixed.
pub fn build_cpbs() -> CMatrix {
    let swaps = [(txy(0, 2, 0), txy(0, 0, 2)), (txy(1, 2, 1), txy(1, 1, 2))];
    permutation(TXY, |i| {
        swaps
            .iter()
            .find_map(|&(a, b)| {
                if i == a {
                    Some(b)
                } else if i == b {
                    Some(a)
                } else {
                    None
                }
            })
            .unwrap_or(i)
    })
}

/// Hadamard on the polarization block of a qutrit; fixes `|2⟩`.
pub fn qutrit_hadamard() -> CMatrix {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut h = CMatrix::zeros(3, 3);
    h[(0, 0)] = s;
    h[(0, 1)] = s;
    h[(1, 0)] = s;
    h[(1, 1)] = -s;
    h[(2, 2)] = one();
    h
}

pub fn build_swap_tx() -> CMatrix {
    permutation(TXY, |i| {
        let (t, x, y) = (i / 9, (i / 3) % 3, i % 3);
        txy(x, t, y)
    })
}

#[derive(Clone, Debug)]
pub struct AttackOperators {
    pub cpbs: CMatrix,
    pub h_y: CMatrix,
    pub swap_tx: CMatrix,
    pub q: CMatrix,
    pub q_inverse: CMatrix,
}

/// `Q = SWAP_tx · CPBS · H_y` and its inverse.
pub fn build_q() -> AttackOperators {
    let cpbs = build_cpbs();
    let h_y = qutrit_hadamard();
    let swap_tx = build_swap_tx();
    let h_lift = CMatrix::identity(9, 9).kronecker(&h_y);
    let q = &swap_tx * &cpbs * h_lift;
    let q_inverse = q.adjoint();
    AttackOperators {
        cpbs,
        h_y,
        swap_tx,
        q,
        q_inverse,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodingOperator {
    pub bit: u8,
    pub matrix: CMatrix,
}

/// Alice's encoding on the travel qutrit: identity for 0, polarization phase
/// flip `diag(1, -1, 1)` for 1.
pub fn encoding(bit: u8) -> Result<EncodingOperator> {
    let mut matrix = CMatrix::identity(3, 3);
    match bit {
        0 => {}
        1 => matrix[(1, 1)] = -one(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "encoded bit must be 0 or 1, got {other}"
            )))
        }
    }
    Ok(EncodingOperator { bit, matrix })
}

#[derive(Clone, Debug)]
pub struct BellMeasurement {
    pub projectors: [CMatrix; 5],
}

impl BellMeasurement {
    pub fn new() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ket = |a: (usize, usize), b: (usize, usize), sign: f64| {
            let mut v = CVector::zeros(6);
            v[a.0 * 3 + a.1] = Complex64::new(s, 0.0);
            v[b.0 * 3 + b.1] = Complex64::new(sign * s, 0.0);
            &v * v.adjoint()
        };
        let mut residual = CMatrix::zeros(6, 6);
        residual[(2, 2)] = one();
        residual[(5, 5)] = one();
        Self {
            projectors: [
                ket((0, 1), (1, 0), 1.0),
                ket((0, 1), (1, 0), -1.0),
                ket((0, 0), (1, 1), 1.0),
                ket((0, 0), (1, 1), -1.0),
                residual,
            ],
        }
    }
}

impl Default for BellMeasurement {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome probabilities indexed by Eve's `y` level (0, 1, vacuum) and Bob's
/// Bell symbol (see [`BELL_LABELS`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub probs: [[f64; 5]; 3],
}

impl Measurement {
    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    /// Probability mass on outcomes the ideal attack never produces: Bob's
    /// residual projector or Eve finding `y` in the vacuum.
    pub fn stray_mass(&self) -> f64 {
        let residual: f64 = self.probs[..2].iter().map(|row| row[RESIDUAL]).sum();
        let vacuum: f64 = self.probs[PROBE_VACUUM].iter().sum();
        residual + vacuum
    }
}

pub const X_PURITY_TOL: f64 = 1e-10;

/// Max-entry distance of the reduced `x` state from `|2⟩⟨2|`.
pub fn probe_x_defect(rho_htxy: &DensityOperator) -> Result<f64> {
    let x = partial_trace(rho_htxy, &[Subsystem::ProbeX])?;
    let mut vac = CMatrix::zeros(3, 3);
    vac[(2, 2)] = one();
    Ok(crate::qlin::max_abs_diff(x.matrix(), &vac))
}

/// Joint statistics of Eve's computational-basis measurement of `y` and
/// Bob's Bell measurement on `h t`. The `x` probe must still be `|2⟩`.
pub fn measure(rho_htxy: &DensityOperator) -> Result<Measurement> {
    if rho_htxy.layout() != &SubsystemLayout::protocol() {
        return Err(Error::DimensionMismatch {
            expected: 54,
            actual: rho_htxy.layout().dim(),
        });
    }
    let defect = probe_x_defect(rho_htxy)?;
    if defect > X_PURITY_TOL {
        return Err(Error::Invariant(format!(
            "probe x left the vacuum (deviation {defect:e})"
        )));
    }
    let hty = partial_trace(
        rho_htxy,
        &[Subsystem::Home, Subsystem::Travel, Subsystem::ProbeY],
    )?;
    Ok(measure_hty(hty.matrix()))
}

pub(crate) fn measure_hty(hty: &CMatrix) -> Measurement {
    let bell = BellMeasurement::new();
    let mut probs = [[0.0; 5]; 3];
    for (e, row) in probs.iter_mut().enumerate() {
        let block = CMatrix::from_fn(6, 6, |i, j| hty[(i * 3 + e, j * 3 + e)]);
        for (b, proj) in bell.projectors.iter().enumerate() {
            // Tr(Π ρ), clamped against rounding below zero.
            row[b] = (proj * &block).trace().re.max(0.0);
        }
    }
    Measurement { probs }
}
