//! Prepare-and-measure versus entanglement-based protocol at small `N`.
//!
//! A general `N`-round attack is an initial state `Σ α_ij |i, j, c_ij⟩` and
//! a return isometry `|i, j, c_ij⟩ ↦ Σ_m |m⟩|f^m_ij⟩`. Stored as a matrix,
//! column `(i, j)` holds `Σ_m |m⟩|f^m_ij⟩` with rows ordered `(m, e)`.
//!
//! Register layout for every state here is `(A, B, M, E)` with dimensions
//! `(2^N, 2^N, 4^N, d_E)`. Round 1 is the most significant bit (or base-4
//! digit) of each register.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{AttackModel, MAX_EVE_DIM};
use crate::qmath::{CMatrix, StateVector, STATE_TOL};

pub const MAX_ROUNDS: usize = 2;

/// Largest total dimension of a reduction state.
pub const MAX_TOTAL_DIM: usize = 4096;

/// Non-abort probabilities at or below this count as "always aborts".
pub const ABORT_TOL: f64 = 1e-12;

/// Per-round choices; `true` is Measure-Resend (Z), `false` is Reflect (X).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisChoice {
    pub theta_a: Vec<bool>,
    pub theta_b: Vec<bool>,
}

impl BasisChoice {
    pub fn new(theta_a: Vec<bool>, theta_b: Vec<bool>) -> Result<Self> {
        if theta_a.len() != theta_b.len() || theta_a.is_empty() || theta_a.len() > MAX_ROUNDS {
            return Err(Error::Dimension(format!(
                "basis strings must have equal length in 1..={MAX_ROUNDS}, got {} and {}",
                theta_a.len(),
                theta_b.len()
            )));
        }
        Ok(Self { theta_a, theta_b })
    }

    pub fn rounds(&self) -> usize {
        self.theta_a.len()
    }

    /// All `4^N` choice pairs for `n` rounds.
    pub fn all(n: usize) -> Vec<BasisChoice> {
        let bits = |x: usize| {
            (0..n)
                .map(|r| x >> (n - 1 - r) & 1 == 1)
                .collect::<Vec<_>>()
        };
        (0..1usize << n)
            .flat_map(|a| (0..1usize << n).map(move |b| (a, b)))
            .map(|(a, b)| BasisChoice {
                theta_a: bits(a),
                theta_b: bits(b),
            })
            .collect()
    }

    /// Number of X-basis rounds across both parties.
    pub fn x_rounds(&self) -> usize {
        self.theta_a
            .iter()
            .chain(&self.theta_b)
            .filter(|t| !**t)
            .count()
    }

    fn mask(theta: &[bool]) -> usize {
        theta.iter().fold(0, |acc, &t| acc << 1 | t as usize)
    }
}

/// An arbitrary, possibly round-entangled, `N`-round prepare-and-measure attack.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralAttack {
    rounds: usize,
    alphas: Vec<Complex64>,
    iso: CMatrix,
    dim_e: usize,
}

impl GeneralAttack {
    /// `alphas[i·2^N + j]` weights `|i, j⟩`; `iso` is `(4^N·d_E) × 4^N` with
    /// orthonormal columns.
    pub fn new(rounds: usize, alphas: Vec<Complex64>, iso: CMatrix) -> Result<Self> {
        if rounds == 0 || rounds > MAX_ROUNDS {
            return Err(Error::InvalidAttack(format!(
                "rounds must be 1 or 2, got {rounds}"
            )));
        }
        let pairs = 1usize << (2 * rounds);
        if alphas.len() != pairs || iso.ncols() != pairs || !iso.nrows().is_multiple_of(pairs) {
            return Err(Error::Dimension(format!(
                "{rounds}-round attack needs {pairs} amplitudes and a (4^N·d_E)×{pairs} isometry, got {} and {}×{}",
                alphas.len(),
                iso.nrows(),
                iso.ncols()
            )));
        }
        let dim_e = iso.nrows() / pairs;
        if pairs * pairs * dim_e > MAX_TOTAL_DIM || dim_e > MAX_EVE_DIM {
            return Err(Error::Dimension(format!(
                "total dimension {} exceeds {MAX_TOTAL_DIM}",
                pairs * pairs * dim_e
            )));
        }
        let norm: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidAttack(format!(
                "amplitudes have squared norm {norm}"
            )));
        }
        let gram = iso.adjoint() * &iso;
        let dev = (gram - CMatrix::identity(pairs, pairs)).camax();
        if dev > STATE_TOL {
            return Err(Error::InvalidAttack(format!(
                "return map is not an isometry (deviation {dev:.3e})"
            )));
        }
        Ok(Self {
            rounds,
            alphas,
            iso,
            dim_e,
        })
    }

    /// Random attack with complex Gaussian amplitudes and a Haar-like isometry;
    /// for `n = 2` it correlates the rounds generically.
    pub fn random<R: Rng + ?Sized>(rounds: usize, dim_e: usize, rng: &mut R) -> Result<Self> {
        if rounds == 0 || rounds > MAX_ROUNDS || dim_e == 0 || dim_e > MAX_EVE_DIM {
            return Err(Error::InvalidAttack(format!(
                "random attacks need 1..={MAX_ROUNDS} rounds and ancilla dimension 1..={MAX_EVE_DIM}, got {rounds} and {dim_e}"
            )));
        }
        let pairs = 1usize << (2 * rounds);
        let raw: Vec<Complex64> = (0..pairs)
            .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let alphas = raw.into_iter().map(|a| a / norm).collect();
        let iso = crate::qmath::random_isometry(pairs * dim_e, pairs, rng);
        Self::new(rounds, alphas, iso)
    }

    /// The one-round attack of a collective attack model.
    pub fn from_collective(attack: &AttackModel) -> Result<Self> {
        let d = attack.dim_e();
        let mut iso = CMatrix::zeros(4 * d, 4);
        let mut alphas = vec![Complex64::new(0.0, 0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                alphas[2 * i + j] = Complex64::new(attack.alpha(i, j), 0.0);
                for m in 0..4 {
                    for (e, &z) in attack.vector(i, j, m).iter().enumerate() {
                        iso[(m * d + e, 2 * i + j)] = z;
                    }
                }
            }
        }
        Self::new(1, alphas, iso)
    }

    /// Two independent one-round attacks run back to back.
    pub fn product(first: &GeneralAttack, second: &GeneralAttack) -> Result<Self> {
        if first.rounds != 1 || second.rounds != 1 {
            return Err(Error::InvalidAttack(
                "product takes two one-round attacks".into(),
            ));
        }
        let (d1, d2) = (first.dim_e, second.dim_e);
        let mut alphas = vec![Complex64::new(0.0, 0.0); 16];
        let mut iso = CMatrix::zeros(16 * d1 * d2, 16);
        for i1 in 0..2 {
            for j1 in 0..2 {
                for i2 in 0..2 {
                    for j2 in 0..2 {
                        let (i, j) = (i1 << 1 | i2, j1 << 1 | j2);
                        let col = i * 4 + j;
                        alphas[col] = first.alphas[2 * i1 + j1] * second.alphas[2 * i2 + j2];
                        let c1 = first.column(2 * i1 + j1, 1);
                        let c2 = second.column(2 * i2 + j2, 1);
                        // (m1, e1, m2, e2) → (m1 m2, e1 e2)
                        let joint = c1.tensor(&c2).permute(&[0, 2, 1, 3])?;
                        for (r, &z) in joint.amplitudes().iter().enumerate() {
                            iso[(r, col)] = z;
                        }
                    }
                }
            }
        }
        Self::new(2, alphas, iso)
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    pub fn alphas(&self) -> &[Complex64] {
        &self.alphas
    }

    pub fn isometry(&self) -> &CMatrix {
        &self.iso
    }

    /// Multiplies every returned vector by `e^{iφ}`.
    pub fn with_phase(&self, phi: f64) -> Self {
        let mut out = self.clone();
        out.iso = out.iso.map(|z| z * Complex64::from_polar(1.0, phi));
        out
    }

    fn register_dims(&self) -> Vec<usize> {
        let side = 1usize << self.rounds;
        vec![side, side, side * side, self.dim_e]
    }

    /// Column `Σ_m |m⟩|f^m_ij⟩` as a state over `(M, E)`, or over `(M_1, E)`
    /// split as `[4, d]` when `rounds == 1`.
    fn column(&self, col: usize, rounds: usize) -> StateVector {
        let amps = self.iso.column(col).iter().copied().collect();
        StateVector::new(amps, vec![1usize << (2 * rounds), self.dim_e])
            .expect("column length matches dims")
    }

    /// The entanglement-protocol source `ζ_0 = Σ α_ij |i, j⟩ Σ_m |m⟩|f^m_ij⟩`.
    pub fn source_state(&self) -> StateVector {
        self.assemble(|i, j| (i, j))
    }

    /// `Σ α_ij |a(i, j), b(i, j)⟩ ⊗ column(i, j)` over `(A, B, M, E)`.
    fn assemble(&self, private: impl Fn(usize, usize) -> (usize, usize)) -> StateVector {
        let dims = self.register_dims();
        let side = dims[0];
        let block = dims[2] * dims[3];
        let mut amps = vec![Complex64::new(0.0, 0.0); side * side * block];
        for i in 0..side {
            for j in 0..side {
                let alpha = self.alphas[i * side + j];
                let (a, b) = private(i, j);
                let offset = (a * side + b) * block;
                for (r, &z) in self.iso.column(i * side + j).iter().enumerate() {
                    amps[offset + r] += alpha * z;
                }
            }
        }
        StateVector::new(amps, dims).expect("amplitude count matches register dims")
    }
}

/// The prepare-and-measure state after the return isometry,
/// `Σ α_ij |i∧Θ_A, j∧Θ_B⟩ Σ_m |m⟩|f^m_ij⟩`, over `(A, B, M, E)`.
pub fn build_pm_state(attack: &GeneralAttack, choice: &BasisChoice) -> Result<StateVector> {
    check_rounds(attack, choice)?;
    let (ma, mb) = (
        BasisChoice::mask(&choice.theta_a),
        BasisChoice::mask(&choice.theta_b),
    );
    Ok(attack.assemble(|i, j| (i & ma, j & mb)))
}

fn check_rounds(attack: &GeneralAttack, choice: &BasisChoice) -> Result<()> {
    if choice.rounds() != attack.rounds() {
        return Err(Error::Dimension(format!(
            "choice covers {} rounds, attack {}",
            choice.rounds(),
            attack.rounds()
        )));
    }
    Ok(())
}

/// `⊗_r (Θ_r ? I : |0⟩⟨+|)`: keep Z rounds, post-select X rounds on `+`
/// and relabel it as 0.
fn postselect_plus(theta: &[bool]) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let keep = CMatrix::identity(2, 2);
    let plus_to_zero = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    );
    theta.iter().fold(CMatrix::identity(1, 1), |acc, &z| {
        acc.kronecker(if z { &keep } else { &plus_to_zero })
    })
}

/// Runs the entanglement-based protocol on a source state over
/// `(A, B, M, E)`: Alice and Bob measure their X rounds and abort on any
/// `−`. Returns the non-abort state (`+` relabelled to 0), or `None` when
/// the protocol always aborts, together with the non-abort probability.
pub fn run_entanglement(
    source: &StateVector,
    choice: &BasisChoice,
) -> Result<(Option<StateVector>, f64)> {
    let side = 1usize << choice.rounds();
    let dims = source.dims();
    if dims.len() != 4 || dims[0] != side || dims[1] != side {
        return Err(Error::Dimension(format!(
            "source must be over (A, B, M, E) with {side}-dimensional A and B, got {dims:?}"
        )));
    }
    if source.len() > MAX_TOTAL_DIM {
        return Err(Error::Dimension(format!(
            "total dimension {} exceeds {MAX_TOTAL_DIM}",
            source.len()
        )));
    }
    let (pa, pb) = (
        postselect_plus(&choice.theta_a),
        postselect_plus(&choice.theta_b),
    );
    let block = dims[2] * dims[3];
    let input = source.amplitudes();
    let mut out = vec![Complex64::new(0.0, 0.0); input.len()];
    for a_out in 0..side {
        for b_out in 0..side {
            let dst = (a_out * side + b_out) * block;
            for a in 0..side {
                for b in 0..side {
                    let w = pa[(a_out, a)] * pb[(b_out, b)];
                    if w == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = (a * side + b) * block;
                    for r in 0..block {
                        out[dst + r] += w * input[src + r];
                    }
                }
            }
        }
    }
    let projected = StateVector::new(out, dims.to_vec())?;
    let p = projected.norm_sqr();
    if p <= ABORT_TOL {
        return Ok((None, p));
    }
    Ok((Some(projected.normalized()?), p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceResult {
    pub fidelity: f64,
    pub non_abort_prob: f64,
    pub abort_only: bool,
    pub passed: bool,
}

/// Compares the prepare-and-measure state with the post-selected
/// entanglement-protocol state produced by the matching source.
pub fn verify_equivalence(
    attack: &GeneralAttack,
    choice: &BasisChoice,
    tol: f64,
) -> Result<EquivalenceResult> {
    let pm = build_pm_state(attack, choice)?;
    let (ent, non_abort_prob) = run_entanglement(&attack.source_state(), choice)?;
    let Some(ent) = ent else {
        return Ok(EquivalenceResult {
            fidelity: 0.0,
            non_abort_prob,
            abort_only: true,
            passed: false,
        });
    };
    let fidelity = pm.fidelity(&ent)?;
    Ok(EquivalenceResult {
        fidelity,
        non_abort_prob,
        abort_only: false,
        passed: fidelity >= 1.0 - tol && non_abort_prob > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::DepolarizingChannel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn choice(a: &[bool], b: &[bool]) -> BasisChoice {
        BasisChoice::new(a.to_vec(), b.to_vec()).unwrap()
    }

    fn honest() -> GeneralAttack {
        GeneralAttack::from_collective(&AttackModel::honest()).unwrap()
    }

    #[test]
    fn honest_both_measure_state() {
        let s = build_pm_state(&honest(), &choice(&[true], &[true])).unwrap();
        assert_eq!(s.dims(), &[2, 2, 4, 1]);
        // (|00⟩(|m0⟩+|m1⟩) + |11⟩(|m0⟩−|m1⟩))/2
        let mut expected = vec![c(0.0); 16];
        expected[0] = c(0.5);
        expected[1] = c(0.5);
        expected[12] = c(0.5);
        expected[13] = c(-0.5);
        let e = StateVector::new(expected, vec![2, 2, 4, 1]).unwrap();
        assert_abs_diff_eq!(s.fidelity(&e).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.inner(&e).unwrap().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn honest_both_reflect_state() {
        let s = build_pm_state(&honest(), &choice(&[false], &[false])).unwrap();
        let m0 = StateVector::basis(0, vec![2, 2, 4, 1]).unwrap();
        assert_abs_diff_eq!(s.fidelity(&m0).unwrap(), 1.0, epsilon = 1e-12);
        let (ent, p) =
            run_entanglement(&honest().source_state(), &choice(&[false], &[false])).unwrap();
        assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(ent.unwrap().fidelity(&m0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn honest_all_choices_pass() {
        for ch in BasisChoice::all(1) {
            let r = verify_equivalence(&honest(), &ch, 1e-9).unwrap();
            assert!(r.passed, "{ch:?}: {r:?}");
            assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(
                r.non_abort_prob,
                0.5f64.powi(ch.x_rounds() as i32),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn measuring_everything_never_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=2 {
            let a = GeneralAttack::random(n, 2, &mut rng).unwrap();
            let ch = choice(&vec![true; n], &vec![true; n]);
            let (_, p) = run_entanglement(&a.source_state(), &ch).unwrap();
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn minus_source_always_aborts() {
        let minus = StateVector::from_real(&[0.5f64.sqrt(), -(0.5f64.sqrt())], vec![2]).unwrap();
        let rest = StateVector::basis(0, vec![4, 1]).unwrap();
        let source = minus.tensor(&minus).tensor(&rest);
        let source = StateVector::new(source.amplitudes().to_vec(), vec![2, 2, 4, 1]).unwrap();
        let (state, p) = run_entanglement(&source, &choice(&[false], &[false])).unwrap();
        assert!(state.is_none());
        assert!(p <= ABORT_TOL);
    }

    #[test]
    fn random_one_round_attacks_are_equivalent() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for t in 0..100 {
            let a = GeneralAttack::random(1, 1 + t % 4, &mut rng).unwrap();
            for ch in BasisChoice::all(1) {
                let r = verify_equivalence(&a, &ch, 1e-9).unwrap();
                assert!(r.passed && !r.abort_only, "trial {t}, {ch:?}: {r:?}");
                assert!(r.fidelity <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn entangled_two_round_attacks_are_equivalent() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for t in 0..4 {
            let a = GeneralAttack::random(2, 1 + 5 * t, &mut rng).unwrap();
            for ch in BasisChoice::all(2) {
                let r = verify_equivalence(&a, &ch, 1e-9).unwrap();
                assert!(r.passed, "trial {t}, {ch:?}: {r:?}");
                assert_abs_diff_eq!(
                    r.non_abort_prob,
                    0.5f64.powi(ch.x_rounds() as i32),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn product_attack_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let a = GeneralAttack::random(1, 2, &mut rng).unwrap();
        // a 16-dim honest dilation times a 2-dim ancilla exceeds the cap
        let noisy = GeneralAttack::from_collective(&AttackModel::honest_with_reverse_noise(
            DepolarizingChannel::new(0.1).unwrap(),
        ))
        .unwrap();
        assert!(GeneralAttack::product(&a, &noisy).is_err());
        let b = GeneralAttack::random(1, 3, &mut rng).unwrap();
        let ab = GeneralAttack::product(&a, &b).unwrap();
        for ca in [[true, false], [false, true], [false, false]] {
            for cb in [[true, true], [false, true]] {
                let ch = choice(&ca, &cb);
                let r = verify_equivalence(&ab, &ch, 1e-9).unwrap();
                let r1 = verify_equivalence(&a, &choice(&ca[..1], &cb[..1]), 1e-9).unwrap();
                let r2 = verify_equivalence(&b, &choice(&ca[1..], &cb[1..]), 1e-9).unwrap();
                assert!(r.passed);
                assert_abs_diff_eq!(
                    r.non_abort_prob,
                    r1.non_abort_prob * r2.non_abort_prob,
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(r.fidelity, r1.fidelity * r2.fidelity, epsilon = 1e-9);
                // the two-round PM state is the register-reordered product
                let s1 = build_pm_state(&a, &choice(&ca[..1], &cb[..1])).unwrap();
                let s2 = build_pm_state(&b, &choice(&ca[1..], &cb[1..])).unwrap();
                let joint = s1.tensor(&s2).permute(&[0, 4, 1, 5, 2, 6, 3, 7]).unwrap();
                let joint =
                    StateVector::new(joint.amplitudes().to_vec(), vec![4, 4, 16, 6]).unwrap();
                let direct = build_pm_state(&ab, &ch).unwrap();
                assert_abs_diff_eq!(joint.inner(&direct).unwrap().re, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BasisChoice::new(vec![true], vec![true, false]).is_err());
        assert!(BasisChoice::new(vec![true; 3], vec![true; 3]).is_err());
        let not_iso = CMatrix::from_element(4, 4, c(0.5));
        assert!(matches!(
            GeneralAttack::new(1, vec![c(0.5); 4], not_iso),
            Err(Error::InvalidAttack(_))
        ));
        let unnormalized = vec![c(1.0); 4];
        assert!(GeneralAttack::new(1, unnormalized, CMatrix::identity(4, 4)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(GeneralAttack::random(2, 17, &mut rng).is_err());
        assert!(GeneralAttack::random(3, 1, &mut rng).is_err());
        assert!(GeneralAttack::random(1, 0, &mut rng).is_err());
        let a = GeneralAttack::random(2, 1, &mut rng).unwrap();
        assert!(build_pm_state(&a, &choice(&[true], &[true])).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pm_state_is_normalized(seed in any::<u64>(), d in 1usize..=4, k in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = GeneralAttack::random(1, d, &mut rng).unwrap();
            let s = build_pm_state(&a, &BasisChoice::all(1)[k]).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn fidelity_ignores_global_phase(seed in any::<u64>(), phi in 0.0f64..6.3, k in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = GeneralAttack::random(1, 2, &mut rng).unwrap();
            let ch = &BasisChoice::all(1)[k];
            let r0 = verify_equivalence(&a, ch, 1e-9).unwrap();
            let r1 = verify_equivalence(&a.with_phase(phi), ch, 1e-9).unwrap();
            prop_assert!((r0.fidelity - r1.fidelity).abs() < 1e-12);
            prop_assert!((r0.non_abort_prob - r1.non_abort_prob).abs() < 1e-12);
        }
    }
}
