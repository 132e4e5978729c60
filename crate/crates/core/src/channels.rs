//! Qutrit noise channels acting on the travel photon.
//!
//! Levels `|0⟩`, `|1⟩` are the two polarizations and `|2⟩` is the vacuum.
//! Both channels act on the polarization block and leave the vacuum alone.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qlin::{CMatrix, DensityOperator, Subsystem, SubsystemLayout};

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    name: &'static str,
    p: f64,
    ops: Vec<CMatrix>,
}

impl KrausChannel {
    /// Builds a channel from explicit Kraus operators. Completeness is not
    /// enforced here; see [`KrausChannel::completeness_defect`].
    pub fn from_operators(name: &'static str, p: f64, ops: Vec<CMatrix>) -> Result<Self> {
        let dim = ops.first().map(|a| a.nrows()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "channel needs at least one operator".into(),
            ));
        }
        for a in &ops {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: a.nrows().max(a.ncols()),
                });
            }
        }
        Ok(Self { name, p, ops })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            name: "identity",
            p: 0.0,
            ops: vec![CMatrix::identity(dim, dim)],
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.ops
    }

    /// Max-entry distance of `Σ A†A` from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.dim();
        let sum = self
            .ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, a| acc + a.adjoint() * a);
        (sum - CMatrix::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `φ(ρ) = Σ A ρ A†` on a bare matrix of the channel's dimension.
    pub fn apply_local(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim();
        self.ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, a| acc + a * rho * a.adjoint())
    }

    /// Embeds every operator as `I ⊗ A ⊗ I` on `target` within `layout`.
    pub fn lift(&self, layout: &SubsystemLayout, target: Subsystem) -> Result<LiftedChannel> {
        let pos = layout.position(target)?;
        let target_dim = layout.parts()[pos].1;
        if target_dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: target_dim,
                actual: self.dim(),
            });
        }
        let before: usize = layout.parts()[..pos].iter().map(|&(_, d)| d).product();
        let after: usize = layout.parts()[pos + 1..].iter().map(|&(_, d)| d).product();
        let left = CMatrix::identity(before, before);
        let right = CMatrix::identity(after, after);
        let ops = self
            .ops
            .iter()
            .map(|a| left.kronecker(a).kronecker(&right))
            .collect();
        Ok(LiftedChannel {
            layout: layout.clone(),
            ops,
        })
    }
}

/// A channel already embedded in a full layout, reusable across applications.
#[derive(Clone, Debug)]
pub struct LiftedChannel {
    layout: SubsystemLayout,
    ops: Vec<CMatrix>,
}

impl LiftedChannel {
    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.layout() != &self.layout {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                actual: rho.layout().dim(),
            });
        }
        Ok(DensityOperator::from_parts_unchecked(
            self.layout.clone(),
            self.apply_matrix(rho.matrix()),
        ))
    }

    pub(crate) fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let d = rho.nrows();
        self.ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, a| acc + a * rho * a.adjoint())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::ParameterOutOfRange(p));
    }
    Ok(())
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Amplitude damping on the polarization block: `E0 = diag(1, √(1-p), 1)`,
/// `E1 = √p |0⟩⟨1|`.
pub fn ad_qutrit(p: f64) -> Result<KrausChannel> {
    check_p(p)?;
    let mut e0 = CMatrix::identity(3, 3);
    e0[(1, 1)] = real((1.0 - p).sqrt());
    let mut e1 = CMatrix::zeros(3, 3);
    e1[(0, 1)] = real(p.sqrt());
    Ok(KrausChannel {
        name: "amplitude_damping",
        p,
        ops: vec![e0, e1],
    })
}

/// The three Pauli-like qutrit operators of the depolarizing extension:
/// X, Y, Z on the polarization block with `+1` on the vacuum.
pub fn polarization_paulis() -> [CMatrix; 3] {
    let i = Complex64::i();
    let mut x = CMatrix::zeros(3, 3);
    x[(0, 1)] = real(1.0);
    x[(1, 0)] = real(1.0);
    x[(2, 2)] = real(1.0);
    let mut y = CMatrix::zeros(3, 3);
    y[(0, 1)] = -i;
    y[(1, 0)] = i;
    y[(2, 2)] = real(1.0);
    let mut z = CMatrix::identity(3, 3);
    z[(1, 1)] = real(-1.0);
    [x, y, z]
}

/// Depolarizing noise `ρ ↦ (1-p) ρ + p I/2` on the polarization block,
/// identity on the vacuum.
///
/// Kraus form: `√(1-3p/4) I₃` and `√(p/4)` times each of
/// [`polarization_paulis`].
pub fn depol_qutrit(p: f64) -> Result<KrausChannel> {
    check_p(p)?;
    let mut ops = vec![CMatrix::identity(3, 3).scale((1.0 - 0.75 * p).sqrt())];
    let w = (p / 4.0).sqrt();
    ops.extend(polarization_paulis().into_iter().map(|m| m.scale(w)));
    Ok(KrausChannel {
        name: "depolarizing",
        p,
        ops,
    })
}

/// `p = 1 - exp(-τ t / 2)`, clamped to `[0, 1]`.
pub fn p_from_time(tau: f64, t: f64) -> f64 {
    (1.0 - (-tau * t / 2.0).exp()).clamp(0.0, 1.0)
}

/// Applies `ch` to subsystem `target` of `rho`.
pub fn apply_channel(
    rho: &DensityOperator,
    ch: &KrausChannel,
    target: Subsystem,
) -> Result<DensityOperator> {
    let out = ch.lift(rho.layout(), target)?.apply(rho)?;
    let tr = out.trace();
    if (tr - rho.trace()).abs() > 1e-10 {
        return Err(Error::Invariant(format!(
            "channel `{}` changed the trace to {tr}",
            ch.name()
        )));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    AmplitudeDamping,
    Depolarizing,
    None,
}

impl ChannelKind {
    pub fn build(self, p: f64) -> Result<KrausChannel> {
        match self {
            ChannelKind::AmplitudeDamping => ad_qutrit(p),
            ChannelKind::Depolarizing => depol_qutrit(p),
            ChannelKind::None => {
                check_p(p)?;
                Ok(KrausChannel::identity(3))
            }
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ChannelKind::AmplitudeDamping => "ad",
            ChannelKind::Depolarizing => "depol",
            ChannelKind::None => "none",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ad" | "amplitude_damping" => Ok(ChannelKind::AmplitudeDamping),
            "depol" | "depolarizing" => Ok(ChannelKind::Depolarizing),
            "none" => Ok(ChannelKind::None),
            other => Err(Error::InvalidArgument(format!("unknown channel `{other}`"))),
        }
    }
}
