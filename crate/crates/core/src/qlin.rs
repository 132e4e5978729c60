//! Dense complex linear algebra over small labeled tensor-product spaces,
//! plus the entropy and mutual-information measures built on top of it.
//!
//! Basis indices are row-major over the layout order, so for the protocol
//! layout `(h, t, x, y)` the index of `|h t x y⟩` is `((h*3 + t)*3 + x)*3 + y`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance for Hermiticity, trace and norm checks on construction.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Eigenvalues below `-POSITIVITY_TOL` are treated as genuine negativity.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Tolerance on the total mass of a probability table.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// The four parties' subsystems: Bob's home photon, the travel photon and
/// Eve's two probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Subsystem {
    Home,
    Travel,
    ProbeX,
    ProbeY,
}

impl Subsystem {
    pub fn symbol(self) -> char {
        match self {
            Subsystem::Home => 'h',
            Subsystem::Travel => 't',
            Subsystem::ProbeX => 'x',
            Subsystem::ProbeY => 'y',
        }
    }

    pub fn from_symbol(c: char) -> Result<Self> {
        match c {
            'h' => Ok(Subsystem::Home),
            't' => Ok(Subsystem::Travel),
            'x' => Ok(Subsystem::ProbeX),
            'y' => Ok(Subsystem::ProbeY),
            other => Err(Error::UnknownLabel(other)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemLayout {
    parts: Vec<(Subsystem, usize)>,
}

impl SubsystemLayout {
    pub fn new(parts: Vec<(Subsystem, usize)>) -> Result<Self> {
        for (i, &(label, dim)) in parts.iter().enumerate() {
            if parts[..i].iter().any(|&(l, _)| l == label) {
                return Err(Error::LabelCollision(label.symbol()));
            }
            if dim != 2 && dim != 3 {
                return Err(Error::InvalidArgument(format!(
                    "subsystem `{}` has dimension {dim}; only qubits and qutrits are supported",
                    label.symbol()
                )));
            }
        }
        Ok(Self { parts })
    }

    pub fn single(label: Subsystem, dim: usize) -> Result<Self> {
        Self::new(vec![(label, dim)])
    }

    /// `h:2, t:3, x:3, y:3`, total dimension 54.
    pub fn protocol() -> Self {
        Self {
            parts: vec![
                (Subsystem::Home, 2),
                (Subsystem::Travel, 3),
                (Subsystem::ProbeX, 3),
                (Subsystem::ProbeY, 3),
            ],
        }
    }

    pub fn parts(&self) -> &[(Subsystem, usize)] {
        &self.parts
    }

    pub fn labels(&self) -> impl Iterator<Item = Subsystem> + '_ {
        self.parts.iter().map(|&(l, _)| l)
    }

    pub fn dim(&self) -> usize {
        self.parts.iter().map(|&(_, d)| d).product()
    }

    pub fn position(&self, label: Subsystem) -> Result<usize> {
        self.parts
            .iter()
            .position(|&(l, _)| l == label)
            .ok_or(Error::UnknownLabel(label.symbol()))
    }

    pub fn dim_of(&self, label: Subsystem) -> Result<usize> {
        Ok(self.parts[self.position(label)?].1)
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.extend_from_slice(&other.parts);
        Self::new(parts)
    }

    pub fn basis_index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.parts.len());
        self.parts
            .iter()
            .zip(digits)
            .fold(0, |acc, (&(_, d), &k)| acc * d + k)
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.parts.len()];
        for (slot, &(_, d)) in out.iter_mut().zip(&self.parts).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Layout of the listed subsystems, in this layout's order.
    pub fn restrict(&self, keep: &[Subsystem]) -> Result<Self> {
        for &k in keep {
            self.position(k)?;
        }
        Ok(Self {
            parts: self
                .parts
                .iter()
                .copied()
                .filter(|(l, _)| keep.contains(l))
                .collect(),
        })
    }
}

pub trait Tensor: Sized {
    /// Kronecker product; the result's layout is `self`'s followed by `other`'s.
    fn tensor(&self, other: &Self) -> Result<Self>;
}

/// A (not necessarily Hermitian) operator on a labeled space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    layout: SubsystemLayout,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(layout: SubsystemLayout, matrix: CMatrix) -> Result<Self> {
        check_square(&matrix, layout.dim())?;
        Ok(Self { layout, matrix })
    }

    pub fn identity(layout: SubsystemLayout) -> Self {
        let d = layout.dim();
        Self {
            layout,
            matrix: CMatrix::identity(d, d),
        }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            layout: self.layout.concat(&other.layout)?,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    layout: SubsystemLayout,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(layout: SubsystemLayout, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                actual: amplitudes.len(),
            });
        }
        let norm_sq = amplitudes.norm_squared();
        if (norm_sq - 1.0).abs() > STRUCTURE_TOL {
            return Err(Error::NotNormalized(norm_sq));
        }
        Ok(Self { layout, amplitudes })
    }

    /// Computational basis state with the given digit per subsystem.
    pub fn basis(layout: SubsystemLayout, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.parts().len() {
            return Err(Error::DimensionMismatch {
                expected: layout.parts().len(),
                actual: digits.len(),
            });
        }
        for (&k, &(label, d)) in digits.iter().zip(layout.parts()) {
            if k >= d {
                return Err(Error::InvalidArgument(format!(
                    "level {k} out of range for `{}`",
                    label.symbol()
                )));
            }
        }
        let mut amplitudes = CVector::zeros(layout.dim());
        amplitudes[layout.basis_index(digits)] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            layout: self.layout.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            layout: self.layout.concat(&other.layout)?,
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        })
    }
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    layout: SubsystemLayout,
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(layout: SubsystemLayout, matrix: CMatrix) -> Result<Self> {
        check_square(&matrix, layout.dim())?;
        let herm = hermiticity_defect(&matrix);
        if herm > STRUCTURE_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STRUCTURE_TOL || tr.im.abs() > STRUCTURE_TOL {
            return Err(Error::BadTrace(tr.re));
        }
        let min = hermitian_spectrum(&matrix)?.first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOL {
            return Err(Error::NegativeEigenvalue(min));
        }
        Ok(Self { layout, matrix })
    }

    /// Maximally mixed state on `layout`.
    pub fn maximally_mixed(layout: SubsystemLayout) -> Self {
        let d = layout.dim();
        Self {
            layout,
            matrix: CMatrix::identity(d, d).unscale(d as f64),
        }
    }

    pub(crate) fn from_parts_unchecked(layout: SubsystemLayout, matrix: CMatrix) -> Self {
        Self { layout, matrix }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Ascending eigenvalues, clamped to `[0, 1]` once they pass the
    /// positivity check.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let eig = hermitian_spectrum(&self.matrix)?;
        if let Some(&min) = eig.first() {
            if min < -POSITIVITY_TOL {
                return Err(Error::NegativeEigenvalue(min));
            }
        }
        Ok(eig.into_iter().map(|l| l.clamp(0.0, 1.0)).collect())
    }

    /// Equal-weight mixture of two states on the same layout.
    pub fn average(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                actual: other.layout.dim(),
            });
        }
        Ok(Self {
            layout: self.layout.clone(),
            matrix: (&self.matrix + &other.matrix).unscale(2.0),
        })
    }

    /// Submatrix on the listed basis indices. Fails if more than
    /// `POSITIVITY_TOL` of the trace lies outside them.
    pub fn restrict_to_basis(&self, basis: &[usize]) -> Result<CMatrix> {
        let d = self.layout.dim();
        if let Some(&bad) = basis.iter().find(|&&i| i >= d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad + 1,
            });
        }
        let n = basis.len();
        let sub = CMatrix::from_fn(n, n, |i, j| self.matrix[(basis[i], basis[j])]);
        let leakage = self.trace() - sub.trace().re;
        if leakage.abs() > POSITIVITY_TOL {
            return Err(Error::SupportLeakage(leakage));
        }
        Ok(sub)
    }
}

impl Tensor for DensityOperator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            layout: self.layout.concat(&other.layout)?,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }
}

fn check_square(m: &CMatrix, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Max-entry distance of `u† u` from the identity.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - CMatrix::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reduced operator on the `keep` subsystems (kept in layout order).
pub fn partial_trace(rho: &DensityOperator, keep: &[Subsystem]) -> Result<DensityOperator> {
    let (layout, matrix) = partial_trace_raw(&rho.layout, &rho.matrix, keep)?;
    Ok(DensityOperator { layout, matrix })
}

pub(crate) fn partial_trace_raw(
    layout: &SubsystemLayout,
    matrix: &CMatrix,
    keep: &[Subsystem],
) -> Result<(SubsystemLayout, CMatrix)> {
    let kept_layout = layout.restrict(keep)?;
    let kept_mask: Vec<bool> = layout.labels().map(|l| keep.contains(&l)).collect();
    let traced_layout = SubsystemLayout {
        parts: layout
            .parts()
            .iter()
            .zip(&kept_mask)
            .filter(|(_, &k)| !k)
            .map(|(&p, _)| p)
            .collect(),
    };

    let d = layout.dim();
    let (mut kept_idx, mut traced_idx) = (vec![0; d], vec![0; d]);
    for i in 0..d {
        let digits = layout.digits(i);
        let (mut k, mut r) = (Vec::new(), Vec::new());
        for (&digit, &is_kept) in digits.iter().zip(&kept_mask) {
            if is_kept {
                k.push(digit);
            } else {
                r.push(digit);
            }
        }
        kept_idx[i] = kept_layout.basis_index(&k);
        traced_idx[i] = traced_layout.basis_index(&r);
    }

    let dk = kept_layout.dim();
    let mut out = CMatrix::zeros(dk, dk);
    for i in 0..d {
        for j in 0..d {
            if traced_idx[i] == traced_idx[j] {
                out[(kept_idx[i], kept_idx[j])] += matrix[(i, j)];
            }
        }
    }
    Ok((kept_layout, out))
}

/// Ascending real eigenvalues of a Hermitian matrix.
pub fn hermitian_spectrum(m: &CMatrix) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let defect = hermiticity_defect(m);
    if defect > POSITIVITY_TOL {
        return Err(Error::NotHermitian(defect));
    }
    // Symmetrize so the solver sees an exactly Hermitian input.
    let h = (m + m.adjoint()).unscale(2.0);
    let mut eig: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    Ok(shannon_entropy(rho.spectrum()?))
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn shannon_entropy<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

/// Normalized joint distribution over named discrete axes, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityTable {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl ProbabilityTable {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        let size: usize = axes.iter().map(|a| a.size).product();
        if values.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                actual: values.len(),
            });
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate axis `{}`",
                    a.name
                )));
            }
        }
        if let Some(&neg) = values.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Unnormalized(format!(
                "entry {neg} is not a probability"
            )));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Unnormalized(format!("entries sum to {total}")));
        }
        Ok(Self { axes, values })
    }

    /// Convenience constructor from `(name, size)` pairs.
    pub fn with_axes(axes: &[(&str, usize)], values: Vec<f64>) -> Result<Self> {
        Self::new(
            axes.iter()
                .map(|&(name, size)| Axis {
                    name: name.to_string(),
                    size,
                })
                .collect(),
            values,
        )
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no axis named `{name}`")))
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.axes.len());
        self.axes.iter().zip(idx).fold(0, |acc, (a, &i)| {
            debug_assert!(i < a.size);
            acc * a.size + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// Marginal over the named axes, in the order given.
    pub fn marginal(&self, names: &[&str]) -> Result<Self> {
        let positions = names
            .iter()
            .map(|n| self.axis_index(n))
            .collect::<Result<Vec<_>>>()?;
        let axes: Vec<Axis> = positions.iter().map(|&p| self.axes[p].clone()).collect();
        let size: usize = axes.iter().map(|a| a.size).product();
        let mut values = vec![0.0; size];
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for &v in &self.values {
            let target = positions.iter().fold(0, |acc, &p| acc * shape[p] + idx[p]);
            values[target] += v;
            increment(&mut idx, &shape);
        }
        Self::new(axes, values)
    }

    pub fn entropy(&self) -> f64 {
        shannon_entropy(self.values.iter().copied())
    }

    /// Largest absolute entrywise difference; tables must have equal shapes.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidArgument("table shapes differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// `I(X;Y)` in bits between two axes of a joint table.
pub fn mutual_information(joint: &ProbabilityTable, axis1: &str, axis2: &str) -> Result<f64> {
    if axis1 == axis2 {
        return Err(Error::InvalidArgument(format!(
            "mutual information needs two distinct axes, got `{axis1}` twice"
        )));
    }
    let pair = joint.marginal(&[axis1, axis2])?;
    let (n1, n2) = (pair.axes[0].size, pair.axes[1].size);
    let row: Vec<f64> = (0..n1)
        .map(|i| (0..n2).map(|j| pair.get(&[i, j])).sum())
        .collect();
    let col: Vec<f64> = (0..n2)
        .map(|j| (0..n1).map(|i| pair.get(&[i, j])).sum())
        .collect();
    let mut info = 0.0;
    for (i, &ri) in row.iter().enumerate() {
        for (j, &cj) in col.iter().enumerate() {
            let pij = pair.get(&[i, j]);
            if pij > 0.0 {
                info += pij * (pij / (ri * cj)).log2();
            }
        }
    }
    Ok(info.max(0.0))
}
