//! Dense complex linear algebra and entropy primitives.
//!
//! Composite systems are described by a list of subsystem dimensions.
//! Indices are big-endian over that list: the leftmost subsystem is the
//! slowest-varying index of the flattened vector.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Tolerance for normalization, Hermiticity and trace checks.
pub const STATE_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn check_dims(len: usize, dims: &[usize]) -> Result<()> {
    let prod: usize = dims.iter().product();
    if dims.is_empty() || dims.contains(&0) || prod != len {
        return Err(Error::Dimension(format!(
            "dims {dims:?} do not multiply to {len}"
        )));
    }
    Ok(())
}

/// Splits a flat index into per-subsystem digits (big-endian).
fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
}

fn flatten(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)
}

/// A pure state over a composite system.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: DVector<Complex64>,
    dims: Vec<usize>,
}

impl StateVector {
    /// Builds a state from raw amplitudes. The vector is not normalized.
    pub fn new(amps: Vec<Complex64>, dims: Vec<usize>) -> Result<Self> {
        check_dims(amps.len(), &dims)?;
        Ok(Self {
            amps: DVector::from_vec(amps),
            dims,
        })
    }

    pub fn from_real(amps: &[f64], dims: Vec<usize>) -> Result<Self> {
        Self::new(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect(), dims)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(index: usize, dims: Vec<usize>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if index >= len {
            return Err(Error::Dimension(format!(
                "basis index {index} out of range {len}"
            )));
        }
        let mut amps = vec![ZERO; len];
        amps[index] = ONE;
        Self::new(amps, dims)
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(vec![ZERO; len], dims)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.amps.as_slice()
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        self.amps.as_mut_slice()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= STATE_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amps: self.amps.unscale(n),
            dims: self.dims.clone(),
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "inner product of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            amps: self.amps.map(|z| z * factor),
            dims: self.dims.clone(),
        }
    }

    /// Applies a full-dimension operator.
    pub fn apply(&self, op: &CMatrix) -> Result<Self> {
        if op.ncols() != self.len() || op.nrows() != self.len() {
            return Err(Error::Dimension(format!(
                "operator {}x{} on state of length {}",
                op.nrows(),
                op.ncols(),
                self.len()
            )));
        }
        Ok(Self {
            amps: op * &self.amps,
            dims: self.dims.clone(),
        })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.len() * other.len());
        for a in self.amps.iter() {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            amps: DVector::from_vec(amps),
            dims,
        }
    }

    /// `|ψ⟩⟨ψ|` without renormalization.
    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            mat: &self.amps * self.amps.adjoint(),
            dims: self.dims.clone(),
        }
    }

    /// Reorders subsystems: output subsystem `k` is input subsystem `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let n = self.dims.len();
        let mut seen = vec![false; n];
        if order.len() != n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {n} subsystems",
                order.len()
            )));
        }
        for &o in order {
            if o >= n {
                return Err(Error::SubsystemOutOfRange { index: o, count: n });
            }
            if std::mem::replace(&mut seen[o], true) {
                return Err(Error::Dimension(format!("repeated subsystem {o}")));
            }
        }
        let new_dims: Vec<usize> = order.iter().map(|&o| self.dims[o]).collect();
        let mut out = vec![ZERO; self.len()];
        let mut old = vec![0; n];
        let mut new = vec![0; n];
        for (idx, amp) in self.amps.iter().enumerate() {
            digits(idx, &self.dims, &mut old);
            for (k, &o) in order.iter().enumerate() {
                new[k] = old[o];
            }
            out[flatten(&new, &new_dims)] = *amp;
        }
        Self::new(out, new_dims)
    }
}

/// A (possibly unnormalized) density operator over a composite system.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
    dims: Vec<usize>,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix, dims: Vec<usize>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix is not square",
                mat.nrows(),
                mat.ncols()
            )));
        }
        check_dims(mat.nrows(), &dims)?;
        Ok(Self { mat, dims })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        state.to_density()
    }

    /// `I/d` over the given dims.
    pub fn maximally_mixed(dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        Self::new(CMatrix::identity(d, d).unscale(d as f64), dims)
    }

    /// Convex (or unnormalized) mixture `Σ w_k |ψ_k⟩⟨ψ_k|`.
    pub fn mixture(weighted: &[(f64, StateVector)]) -> Result<Self> {
        let (_, first) = weighted
            .first()
            .ok_or_else(|| Error::Dimension("empty mixture".into()))?;
        let d = first.len();
        let mut mat = CMatrix::zeros(d, d);
        for (w, s) in weighted {
            if s.dims() != first.dims() {
                return Err(Error::Dimension("mixture components differ".into()));
            }
            mat += s.to_density().mat.scale(*w);
        }
        Self::new(mat, first.dims().to_vec())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.mat - self.mat.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Checks Hermiticity, unit trace and positivity within [`STATE_TOL`].
    pub fn validate(&self) -> Result<()> {
        let dev = self.hermitian_deviation();
        if dev > STATE_TOL {
            return Err(Error::NonHermitian(dev));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::Dimension(format!("trace {tr} is not 1")));
        }
        let min = self
            .eigenvalues()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < -STATE_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(())
    }

    /// Eigenvalues of the Hermitian part, unsorted.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let dev = self.hermitian_deviation();
        if dev > STATE_TOL {
            return Err(Error::NonHermitian(dev));
        }
        let herm = (&self.mat + self.mat.adjoint()).unscale(2.0);
        Ok(herm.symmetric_eigenvalues().iter().copied().collect())
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            mat: self.mat.kronecker(&other.mat),
            dims,
        }
    }

    /// Conjugation `U ρ U†`.
    pub fn conjugate(&self, op: &CMatrix) -> Result<Self> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "operator {}x{} on {}-dim density matrix",
                op.nrows(),
                op.ncols(),
                self.dim()
            )));
        }
        Ok(Self {
            mat: op * &self.mat * op.adjoint(),
            dims: self.dims.clone(),
        })
    }

    /// Expectation `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        if state.len() != self.dim() {
            return Err(Error::Dimension("state/density size mismatch".into()));
        }
        Ok((state.amps.adjoint() * &self.mat * &state.amps)[(0, 0)].re)
    }
}

/// Kronecker product of two pure states.
pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    a.tensor(b)
}

/// Traces out every subsystem not listed in `keep`.
///
/// Kept subsystems appear in ascending order of their original index.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.dims.len();
    let mut kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(Error::SubsystemOutOfRange { index: k, count: n });
        }
        kept[k] = true;
    }
    let keep_idx: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    let trace_idx: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();
    let keep_dims: Vec<usize> = keep_idx.iter().map(|&i| rho.dims[i]).collect();
    let trace_dims: Vec<usize> = trace_idx.iter().map(|&i| rho.dims[i]).collect();
    let dk: usize = keep_dims.iter().product();
    let dt: usize = trace_dims.iter().product();

    // full[row-of-kept][traced] -> flat index into rho
    let mut lookup = vec![0usize; dk * dt];
    let mut kd = vec![0; keep_idx.len()];
    let mut td = vec![0; trace_idx.len()];
    let mut full = vec![0; n];
    for r in 0..dk {
        digits(r, &keep_dims, &mut kd);
        for t in 0..dt {
            digits(t, &trace_dims, &mut td);
            for (p, &i) in keep_idx.iter().enumerate() {
                full[i] = kd[p];
            }
            for (p, &i) in trace_idx.iter().enumerate() {
                full[i] = td[p];
            }
            lookup[r * dt + t] = flatten(&full, &rho.dims);
        }
    }

    let mut out = CMatrix::zeros(dk, dk);
    for r in 0..dk {
        for c in 0..dk {
            let mut acc = ZERO;
            for t in 0..dt {
                acc += rho.mat[(lookup[r * dt + t], lookup[c * dt + t])];
            }
            out[(r, c)] = acc;
        }
    }
    let dims = if keep_dims.is_empty() {
        vec![1]
    } else {
        keep_dims
    };
    DensityMatrix::new(out, dims)
}

/// Outcome of a projective measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub outcome: usize,
    pub state: StateVector,
    pub probability: f64,
}

fn check_projectors(projectors: &[CMatrix], d: usize) -> Result<()> {
    if projectors.is_empty() {
        return Err(Error::IncompleteProjectors("no projectors".into()));
    }
    let mut sum = CMatrix::zeros(d, d);
    for (i, p) in projectors.iter().enumerate() {
        if p.nrows() != d || p.ncols() != d {
            return Err(Error::Dimension(format!(
                "projector {i} is {}x{}, state has dimension {d}",
                p.nrows(),
                p.ncols()
            )));
        }
        sum += p;
    }
    let dev = (sum - CMatrix::identity(d, d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if dev > STATE_TOL {
        return Err(Error::IncompleteProjectors(format!(
            "sum deviates from identity by {dev:.3e}"
        )));
    }
    for (i, p) in projectors.iter().enumerate() {
        for (j, q) in projectors.iter().enumerate().skip(i) {
            let prod = p * q;
            let target = if i == j {
                p.clone()
            } else {
                CMatrix::zeros(d, d)
            };
            let dev = (prod - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if dev > STATE_TOL {
                return Err(Error::IncompleteProjectors(format!(
                    "projectors {i} and {j} violate P_i P_j = δ_ij P_i by {dev:.3e}"
                )));
            }
        }
    }
    Ok(())
}

fn pick(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return i;
        }
    }
    // rounding left the draw past the end; take the last supported outcome
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Born-rule measurement with a complete set of orthogonal projectors.
///
/// `u` is a uniform draw in `[0, 1)`; the outcome is chosen by inverting
/// the cumulative distribution in projector order.
pub fn measure_projective(
    state: &StateVector,
    projectors: &[CMatrix],
    u: f64,
) -> Result<Measurement> {
    check_projectors(projectors, state.len())?;
    let branches: Vec<DVector<Complex64>> = projectors.iter().map(|p| p * &state.amps).collect();
    let probs: Vec<f64> = branches.iter().map(|b| b.norm_squared()).collect();
    let outcome = pick(&probs, u);
    let probability = probs[outcome] / probs.iter().sum::<f64>();
    let norm = probs[outcome].sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(Measurement {
        outcome,
        state: StateVector {
            amps: branches[outcome].unscale(norm),
            dims: state.dims.clone(),
        },
        probability,
    })
}

/// Computational-basis measurement of a single subsystem.
pub fn measure_subsystem(state: &StateVector, subsystem: usize, u: f64) -> Result<Measurement> {
    let n = state.dims.len();
    if subsystem >= n {
        return Err(Error::SubsystemOutOfRange {
            index: subsystem,
            count: n,
        });
    }
    let d = state.dims[subsystem];
    let stride: usize = state.dims[subsystem + 1..].iter().product();
    let outcome_of = |idx: usize| (idx / stride) % d;
    let mut probs = vec![0.0; d];
    for (idx, a) in state.amps.iter().enumerate() {
        probs[outcome_of(idx)] += a.norm_sqr();
    }
    let outcome = pick(&probs, u);
    let total: f64 = probs.iter().sum();
    let norm = probs[outcome].sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let amps = state
        .amps
        .iter()
        .enumerate()
        .map(|(idx, a)| {
            if outcome_of(idx) == outcome {
                a / norm
            } else {
                ZERO
            }
        })
        .collect();
    Ok(Measurement {
        outcome,
        state: StateVector::new(amps, state.dims.clone())?,
        probability: probs[outcome] / total,
    })
}

/// `−Σ p log₂ p` with `0·log 0 = 0`.
pub fn shannon_entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Binary entropy without range checking; arguments are clamped to `[0, 1]`.
pub(crate) fn h2(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    shannon_entropy(&[x, 1.0 - x])
}

/// Binary Shannon entropy `h(x)` in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    const SLACK: f64 = 1e-12;
    if !(-SLACK..=1.0 + SLACK).contains(&x) || x.is_nan() {
        return Err(Error::InvalidParameter {
            name: "x",
            value: x,
            reason: "binary entropy argument must lie in [0, 1]",
        });
    }
    Ok(h2(x))
}

/// Von Neumann entropy in bits.
///
/// Eigenvalues in `[-1e-9, 0)` are treated as zero.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let eig = rho.eigenvalues()?;
    let mut s = 0.0;
    for l in eig {
        if l < -STATE_TOL {
            return Err(Error::NotPositive(l));
        }
        if l > 0.0 {
            s -= l * l.log2();
        }
    }
    Ok(s)
}

/// Single-qubit Pauli matrix by index: 0 = I, 1 = X, 2 = Y, 3 = Z.
pub fn pauli(k: usize) -> CMatrix {
    let z = ZERO;
    let o = ONE;
    let i = Complex64::new(0.0, 1.0);
    match k & 3 {
        0 => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

pub fn hadamard() -> CMatrix {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    CMatrix::from_row_slice(2, 2, &[s, s, s, -s])
}

/// Bell state `|φ_k⟩`:
/// φ0 = (|00⟩+|11⟩)/√2, φ1 = (|00⟩−|11⟩)/√2, φ2 = (|01⟩+|10⟩)/√2,
/// φ3 = (|01⟩−|10⟩)/√2.
pub fn bell_state(k: usize) -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amps = match k & 3 {
        0 => [s, 0.0, 0.0, s],
        1 => [s, 0.0, 0.0, -s],
        2 => [0.0, s, s, 0.0],
        _ => [0.0, s, -s, 0.0],
    };
    StateVector::from_real(&amps, vec![2, 2]).expect("bell state dims")
}

/// Projectors onto the four Bell states, in message order.
pub fn bell_projectors() -> Vec<CMatrix> {
    (0..4)
        .map(|k| bell_state(k).to_density().into_matrix())
        .collect()
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` acting on subsystem `target` of `dims`.
pub fn embed(op: &CMatrix, target: usize, dims: &[usize]) -> Result<CMatrix> {
    if target >= dims.len() {
        return Err(Error::SubsystemOutOfRange {
            index: target,
            count: dims.len(),
        });
    }
    if op.nrows() != dims[target] || op.ncols() != dims[target] {
        return Err(Error::Dimension("embedded operator size".into()));
    }
    let left: usize = dims[..target].iter().product();
    let right: usize = dims[target + 1..].iter().product();
    Ok(CMatrix::identity(left, left)
        .kronecker(op)
        .kronecker(&CMatrix::identity(right, right)))
}

/// Random `rows × cols` matrix with orthonormal columns (Haar-like via
/// Gram–Schmidt on complex Gaussian columns).
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    assert!(cols <= rows, "isometry needs cols <= rows");
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        loop {
            let mut v: DVector<Complex64> = DVector::from_fn(rows, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            for p in 0..c {
                let prev = m.column(p).into_owned();
                let proj = prev.dotc(&v);
                v -= prev * proj;
            }
            let n = v.norm();
            if n > 1e-6 {
                m.set_column(c, &v.unscale(n));
                break;
            }
        }
    }
    m
}

pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    random_isometry(d, d, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        // ρ = G G† / tr(G G†)
        let g = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(
                rand::Rng::sample(rng, StandardNormal),
                rand::Rng::sample(rng, StandardNormal),
            )
        });
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new(m.unscale(tr), vec![d]).unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let zero = StateVector::basis(0, vec![2]).unwrap();
        let zz = tensor(&zero, &zero);
        assert_eq!(zz.amplitudes(), &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert_eq!(zz.dims(), &[2, 2]);
    }

    #[test]
    fn bell_phi0_amplitudes() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zz = StateVector::basis(0, vec![2, 2]).unwrap();
        let oo = StateVector::basis(3, vec![2, 2]).unwrap();
        let sum: Vec<_> = zz
            .amplitudes()
            .iter()
            .zip(oo.amplitudes())
            .map(|(a, b)| (a + b) * s)
            .collect();
        assert_eq!(bell_state(0).amplitudes(), &sum[..]);
        assert_eq!(bell_state(0).amplitudes(), &[c(s), c(0.0), c(0.0), c(s)]);
    }

    #[test]
    fn tensor_preserves_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_density(2, &mut rng);
        let b = random_density(3, &mut rng);
        assert_abs_diff_eq!(a.tensor(&b).trace().re, 1.0, epsilon = 1e-12);
        assert_eq!(a.tensor(&b).dims(), &[2, 3]);
    }

    #[test]
    fn partial_trace_of_bell_state_is_mixed() {
        let rho = bell_state(0).to_density();
        let a = partial_trace(&rho, &[0]).unwrap();
        let expected = DensityMatrix::maximally_mixed(vec![2]).unwrap();
        assert_abs_diff_eq!(
            (a.matrix() - expected.matrix()).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn partial_trace_keep_all_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(4, &mut rng);
        let rho = DensityMatrix::new(rho.into_matrix(), vec![2, 2]).unwrap();
        let same = partial_trace(&rho, &[0, 1]).unwrap();
        assert_eq!(same, rho);
    }

    #[test]
    fn partial_trace_everything_gives_scalar_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho =
            DensityMatrix::new(random_density(4, &mut rng).into_matrix(), vec![2, 2]).unwrap();
        let b = partial_trace(&rho, &[1]).unwrap();
        let none = partial_trace(&b, &[]).unwrap();
        assert_eq!(none.dim(), 1);
        assert_abs_diff_eq!(none.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_index() {
        let rho = bell_state(0).to_density();
        assert!(matches!(
            partial_trace(&rho, &[2]),
            Err(Error::SubsystemOutOfRange { index: 2, count: 2 })
        ));
    }

    #[test]
    fn z_measure_zero() {
        let zero = StateVector::basis(0, vec![2]).unwrap();
        let p0 = StateVector::basis(0, vec![2])
            .unwrap()
            .to_density()
            .into_matrix();
        let p1 = StateVector::basis(1, vec![2])
            .unwrap()
            .to_density()
            .into_matrix();
        for u in [0.0, 0.5, 0.999999] {
            let m = measure_projective(&zero, &[p0.clone(), p1.clone()], u).unwrap();
            assert_eq!(m.outcome, 0);
            assert_abs_diff_eq!(m.probability, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bell_measure_product_state() {
        let zz = StateVector::basis(0, vec![2, 2]).unwrap();
        let proj = bell_projectors();
        let first = measure_projective(&zz, &proj, 0.1).unwrap();
        let second = measure_projective(&zz, &proj, 0.9).unwrap();
        assert_eq!((first.outcome, second.outcome), (0, 1));
        assert_abs_diff_eq!(first.probability, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(second.probability, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            first.state.fidelity(&bell_state(0)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bell_measure_phi2() {
        let m = measure_projective(&bell_state(2), &bell_projectors(), 0.7).unwrap();
        assert_eq!(m.outcome, 2);
        assert_abs_diff_eq!(m.probability, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_projectors_rejected() {
        let proj = &bell_projectors()[..3];
        assert!(matches!(
            measure_projective(&bell_state(0), proj, 0.5),
            Err(Error::IncompleteProjectors(_))
        ));
    }

    #[test]
    fn subsystem_measurement_matches_projective() {
        let s = bell_state(0);
        let m = measure_subsystem(&s, 1, 0.75).unwrap();
        assert_eq!(m.outcome, 1);
        assert_abs_diff_eq!(m.probability, 0.5, epsilon = 1e-12);
        assert_eq!(m.state, StateVector::basis(3, vec![2, 2]).unwrap());
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(
            von_neumann_entropy(&bell_state(1).to_density()).unwrap(),
            0.0,
            epsilon = 1e-10
        );
        let half = DensityMatrix::maximally_mixed(vec![2]).unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&half).unwrap(), 1.0, epsilon = 1e-12);
        let diag =
            CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.45), c(0.05), c(0.05), c(0.45)]));
        let rho = DensityMatrix::new(diag, vec![2, 2]).unwrap();
        // -2(0.45 log2 0.45 + 0.05 log2 0.05)
        let expected = -2.0 * (0.45 * 0.45f64.log2() + 0.05 * 0.05f64.log2());
        assert_abs_diff_eq!(expected, 1.468_996, epsilon = 1e-6);
        assert_abs_diff_eq!(
            von_neumann_entropy(&rho).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.5), c(0.3), c(0.0), c(0.5)]);
        let rho = DensityMatrix::new(m, vec![2]).unwrap();
        assert!(matches!(
            von_neumann_entropy(&rho),
            Err(Error::NonHermitian(_))
        ));
    }

    #[test]
    fn binary_entropy_examples() {
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(-1e-13).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.1).unwrap(), 0.468_996, epsilon = 1e-6);
        assert!(binary_entropy(1.01).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn permute_swaps_subsystems() {
        let s = StateVector::basis(1, vec![2, 3]).unwrap(); // |0,1⟩
        let p = s.permute(&[1, 0]).unwrap();
        assert_eq!(p.dims(), &[3, 2]);
        assert_eq!(p, StateVector::basis(2, vec![3, 2]).unwrap()); // |1,0⟩
    }

    #[test]
    fn random_isometry_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_isometry(12, 4, &mut rng);
        let g = v.adjoint() * &v;
        assert_abs_diff_eq!((g - CMatrix::identity(4, 4)).norm(), 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn tensor_then_trace_recovers_left(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(2, &mut rng);
            let sigma = random_density(3, &mut rng);
            let back = partial_trace(&rho.tensor(&sigma), &[0]).unwrap();
            prop_assert!((back.matrix() - rho.matrix()).norm() < 1e-9);
        }

        #[test]
        fn measurement_probabilities_sum_to_one(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_unitary(4, &mut rng);
            let state = StateVector::new(u.column(0).iter().copied().collect(), vec![2, 2]).unwrap();
            let total: f64 = bell_projectors()
                .iter()
                .map(|p| (p * DVector::from_column_slice(state.amplitudes())).norm_squared())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn entropy_is_unitarily_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(4, &mut rng);
            let u = random_unitary(4, &mut rng);
            let a = von_neumann_entropy(&rho).unwrap();
            let b = von_neumann_entropy(&rho.conjugate(&u).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-8);
        }

        #[test]
        fn binary_entropy_is_symmetric(x in 0.0f64..=1.0) {
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
