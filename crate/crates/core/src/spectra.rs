//! Instantaneous eigenframes of a time-dependent Hamiltonian.
//!
//! A frame built without a predecessor is sorted by ascending energy and
//! gauge-fixed so the largest component of each eigenvector is real and
//! positive. A frame built from a predecessor is instead matched branch by
//! branch on overlap, and each eigenvector is rephased so that
//! `<n(t_prev)|n(t)>` is real and positive (discrete parallel transport).
//! Labels therefore follow smooth branches through level crossings.

use num_complex::Complex64;

use crate::linalg::{ComplexMatrix, QuantumState, INPUT_HERMITIAN_TOL};
use crate::{Error, Result};

/// Relative gap floor below which couplings are reported as degenerate.
pub const DEFAULT_RELATIVE_GAP_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SpectralFrame {
    t: f64,
    energies: Vec<f64>,
    eigenvectors: Vec<QuantumState>,
    alignment_overlaps: Vec<f64>,
    basis: ComplexMatrix,
}

impl SpectralFrame {
    fn assemble(t: f64, energies: Vec<f64>, eigenvectors: Vec<QuantumState>, alignment_overlaps: Vec<f64>) -> Self {
        let basis = ComplexMatrix::from_columns(&eigenvectors);
        Self {
            t,
            energies,
            eigenvectors,
            alignment_overlaps,
            basis,
        }
    }

    /// Frame from explicitly known eigenpairs (e.g. a closed-form model).
    pub fn from_eigenpairs(t: f64, energies: Vec<f64>, eigenvectors: Vec<QuantumState>) -> Result<Self> {
        if energies.len() != eigenvectors.len() || eigenvectors.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: energies.len(),
                found: eigenvectors.len(),
            });
        }
        let dim = eigenvectors[0].dim();
        if eigenvectors.iter().any(|v| v.dim() != dim) || dim != energies.len() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: energies.len(),
            });
        }
        let overlaps = vec![1.0; dim];
        Ok(Self::assemble(t, energies, eigenvectors, overlaps))
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn eigenvectors(&self) -> &[QuantumState] {
        &self.eigenvectors
    }

    /// `|<n(t_prev)|n(t)>|`, or all ones for a frame without predecessor.
    pub fn alignment_overlaps(&self) -> &[f64] {
        &self.alignment_overlaps
    }

    /// Unitary whose columns are the eigenvectors.
    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    /// Matrix elements `<m|A|n>` in this frame.
    pub fn to_frame(&self, op: &ComplexMatrix) -> Result<ComplexMatrix> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        Ok(op.conjugate_by(&self.basis))
    }

    /// Largest `|E_n|`, the spectral norm of the Hamiltonian.
    pub fn spectral_norm(&self) -> f64 {
        self.energies.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    /// Smallest gap between distinct labels, `+inf` in dimension one.
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, a) in self.energies.iter().enumerate() {
            for b in &self.energies[i + 1..] {
                gap = gap.min((a - b).abs());
            }
        }
        gap
    }

    /// Default absolute gap floor: `1e-8 * |H|`.
    pub fn default_gap_floor(&self) -> f64 {
        DEFAULT_RELATIVE_GAP_FLOOR * self.spectral_norm()
    }

    /// Copy with each eigenvector multiplied by the given phase factor.
    pub fn rephased(&self, phases: &[Complex64]) -> Result<Self> {
        if phases.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: phases.len(),
            });
        }
        let vectors = self
            .eigenvectors
            .iter()
            .zip(phases)
            .map(|(v, &p)| v.with_phase(p / p.norm()))
            .collect();
        Ok(Self::assemble(
            self.t,
            self.energies.clone(),
            vectors,
            self.alignment_overlaps.clone(),
        ))
    }
}

/// `M_{mn} = <m(t)| dH/dt |n(t)>` in a frame's basis.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    entries: ComplexMatrix,
}

impl TransitionMatrix {
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.entries.get(m, n)
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.entries
    }
}

/// Largest-modulus component (first one on ties) made real and positive.
fn fix_gauge(v: Vec<Complex64>) -> Vec<Complex64> {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    v.into_iter().map(|z| z * phase).collect()
}

/// Diagonalizes `h` at time `t`, aligning to `prev` when given.
pub fn diagonalize_instantaneous(
    h: &ComplexMatrix,
    t: f64,
    prev: Option<&SpectralFrame>,
) -> Result<SpectralFrame> {
    h.ensure_hermitian(INPUT_HERMITIAN_TOL)?;
    let dim = h.dim();
    if let Some(p) = prev {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                found: dim,
            });
        }
    }
    let eig = h.hermitian_part().into_inner().symmetric_eigen();
    let raw: Vec<(f64, Vec<Complex64>)> = (0..dim)
        .map(|k| {
            let v: Vec<Complex64> = eig.eigenvectors.column(k).iter().copied().collect();
            (eig.eigenvalues[k], v)
        })
        .collect();

    let Some(prev) = prev else {
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| raw[a].0.total_cmp(&raw[b].0));
        let energies = order.iter().map(|&k| raw[k].0).collect();
        let vectors = order
            .iter()
            .map(|&k| QuantumState::from_unit_unchecked(fix_gauge(raw[k].1.clone())))
            .collect();
        return Ok(SpectralFrame::assemble(t, energies, vectors, vec![1.0; dim]));
    };

    // overlaps[i][k] = <prev_i | new_k>
    let overlaps: Vec<Vec<Complex64>> = prev
        .eigenvectors
        .iter()
        .map(|p| {
            raw.iter()
                .map(|(_, v)| crate::linalg::inner_product(p.amplitudes(), v))
                .collect()
        })
        .collect();
    let mut assigned: Vec<Option<usize>> = vec![None; dim];
    let mut taken = vec![false; dim];
    for _ in 0..dim {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in overlaps.iter().enumerate() {
            if assigned[i].is_some() {
                continue;
            }
            for (k, z) in row.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let mag = z.norm();
                if best.is_none_or(|(_, _, b)| mag > b) {
                    best = Some((i, k, mag));
                }
            }
        }
        let (i, k, _) = best.expect("unassigned pair exists");
        assigned[i] = Some(k);
        taken[k] = true;
    }

    let mut energies = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    let mut alignment = Vec::with_capacity(dim);
    for (i, slot) in assigned.iter().enumerate() {
        let k = slot.expect("all labels assigned");
        let ov = overlaps[i][k];
        let mag = ov.norm();
        if mag <= 0.5 {
            return Err(Error::Continuity { t, overlap: mag });
        }
        let phase = ov.conj() / mag;
        energies.push(raw[k].0);
        vectors.push(QuantumState::from_unit_unchecked(
            raw[k].1.iter().map(|z| z * phase).collect(),
        ));
        alignment.push(mag);
    }
    Ok(SpectralFrame::assemble(t, energies, vectors, alignment))
}

/// `<m| dH/dt |n>` in the frame basis.
pub fn transition_elements(frame: &SpectralFrame, dhdt: &ComplexMatrix) -> Result<TransitionMatrix> {
    dhdt.ensure_hermitian(INPUT_HERMITIAN_TOL)?;
    Ok(TransitionMatrix {
        entries: frame.to_frame(dhdt)?,
    })
}

fn check_gaps(frame: &SpectralFrame, gap_floor: f64) -> Result<()> {
    let gap = frame.min_gap();
    if gap > gap_floor {
        Ok(())
    } else {
        Err(Error::Degenerate {
            gap,
            floor: gap_floor,
        })
    }
}

/// `<m|d/dt n> = M_{mn} / (E_n - E_m)` off the diagonal, zero on it
/// (parallel-transport gauge). `gap_floor` defaults to `1e-8 |H|`.
pub fn nonadiabatic_coupling(
    frame: &SpectralFrame,
    m: &TransitionMatrix,
    gap_floor: Option<f64>,
) -> Result<ComplexMatrix> {
    if m.dim() != frame.dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.dim(),
            found: m.dim(),
        });
    }
    check_gaps(frame, gap_floor.unwrap_or_else(|| frame.default_gap_floor()))?;
    let e = frame.energies();
    Ok(ComplexMatrix::from_fn(frame.dim(), |a, b| {
        if a == b {
            Complex64::new(0.0, 0.0)
        } else {
            m.get(a, b) / (e[b] - e[a])
        }
    }))
}

/// `max_{m != n} |hbar M_{mn} / (E_n - E_m)^2|`.
pub fn adiabatic_parameter(frame: &SpectralFrame, m: &TransitionMatrix, gap_floor: Option<f64>) -> Result<f64> {
    if m.dim() != frame.dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.dim(),
            found: m.dim(),
        });
    }
    check_gaps(frame, gap_floor.unwrap_or_else(|| frame.default_gap_floor()))?;
    let e = frame.energies();
    let mut tau: f64 = 0.0;
    for a in 0..frame.dim() {
        for b in 0..frame.dim() {
            if a != b {
                tau = tau.max(crate::units::HBAR * m.get(a, b).norm() / (e[b] - e[a]).powi(2));
            }
        }
    }
    Ok(tau)
}
