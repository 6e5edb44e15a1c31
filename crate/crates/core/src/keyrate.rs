//! Asymptotic key rate `H(A|E) − H(A|B)` from observable statistics.
//!
//! `H(A|E)` is lower-bounded by pairing, for every message `m` and Bob bit
//! `j`, Eve's vectors `E = α_{0,j}|e^m_{0,j}⟩` and `F = α_{1,1−j}|e^m_{1,1−j}⟩`
//! in the cq-state entropy bound
//!
//! ```text
//! H(A|E) ≥ Σ (‖E‖² + ‖F‖²)·( h(‖E‖²/(‖E‖²+‖F‖²)) − h(λ) ),
//! λ = ½(1 + √((‖E‖² − ‖F‖²)² + 4·Re²⟨E|F⟩) / (‖E‖² + ‖F‖²)).
//! ```
//!
//! Norms are observable (`‖E‖² = P_{0,j}·P^m_{0,j}`). The cross terms are
//! `R^m_{0011}/2` (j = 0) and `R^m_{0110}/2` (j = 1): mismatched statistics
//! pin down `R^m_{i0i1}` and `R^m_{0j1j}`, the both-Reflect statistics then
//! fix the sum `s_m = R^m_{0011} + R^m_{0110}`, and Cauchy–Schwarz bounds
//! each summand. The remaining freedom, the split `t_m = R^m_{0011}`, is
//! minimized over per message.
//!
//! The bound never reads the mode: tracing out Bob removes the only place
//! the FLIP/NO-FLIP choice enters. The mode matters for `H(A|B)` only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{AttackModel, Mode};
use crate::qmath::{
    h2, partial_trace, shannon_entropy, von_neumann_entropy, DensityMatrix, StateVector,
};
use crate::stats::{predict_depolarization, Cell, ObservedStats, R};

/// Slack allowed when testing whether a split interval is empty.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Grid resolution of the per-message minimization.
pub const GRID_POINTS: usize = 2001;

/// Golden-section convergence tolerance on the split.
pub const SPLIT_TOL: f64 = 1e-9;

/// `H(A|B)` differences below this are treated as a tie (resolved to NO-FLIP).
pub const MODE_TIE_TOL: f64 = 1e-12;

const CLAMP_SLACK: f64 = 1e-12;

/// Derived inner-product constraints, indexed by message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// `R^m_{i0i1}` for Alice bit `i`.
    pub r_i0i1: [[f64; 4]; 2],
    /// `R^m_{0j1j}` for Bob bit `j`.
    pub r_0j1j: [[f64; 4]; 2],
    /// `R^m_{0011} + R^m_{0110}`.
    pub s: [f64; 4],
    /// Cauchy–Schwarz radius of `R^m_{0011}`.
    pub cs_0011: [f64; 4],
    /// Cauchy–Schwarz radius of `R^m_{0110}`.
    pub cs_0110: [f64; 4],
}

impl ConstraintSet {
    /// Raw feasible interval for `t_m = R^m_{0011}`; may be empty.
    pub fn raw_interval(&self, m: usize) -> (f64, f64) {
        let lo = (-self.cs_0011[m]).max(self.s[m] - self.cs_0110[m]);
        let hi = self.cs_0011[m].min(self.s[m] + self.cs_0110[m]);
        (lo, hi)
    }

    /// Feasible interval for `t_m`, with rounding-level inversions collapsed
    /// to their midpoint.
    pub fn split_interval(&self, m: usize) -> (f64, f64) {
        let (lo, hi) = self.raw_interval(m);
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            (mid, mid)
        } else {
            (lo, hi)
        }
    }

    pub fn check_feasible(&self) -> Result<()> {
        for m in 0..4 {
            let (lo, hi) = self.raw_interval(m);
            if lo > hi + FEASIBILITY_TOL {
                return Err(Error::InfeasibleStats { message: m, lo, hi });
            }
        }
        Ok(())
    }
}

/// The statistics entering the bound, with structurally irrelevant cells
/// (zero-probability conditioning events) filled with zero.
#[derive(Clone, Copy, Debug)]
struct Resolved {
    p: [[f64; 2]; 2],
    pm: [[[f64; 4]; 2]; 2],
    alice_reflect_bob: [[f64; 4]; 2],
    alice_bob_reflect: [[f64; 4]; 2],
    both_reflect: [f64; 4],
}

fn row_or_missing(
    stats: &ObservedStats,
    x: usize,
    y: usize,
    needed: bool,
    missing: &mut Vec<String>,
) -> [f64; 4] {
    match stats.p_msg[x][y] {
        Some(row) => row,
        None if !needed => [0.0; 4],
        None => {
            missing.extend((0..4).map(|m| Cell::Msg(x, y, m).to_string()));
            [0.0; 4]
        }
    }
}

/// `P_ij` and the `P^m_ij` rows.
type KeyInputs = ([[f64; 2]; 2], [[[f64; 4]; 2]; 2]);

fn resolve_key(stats: &ObservedStats, missing: &mut Vec<String>) -> Option<KeyInputs> {
    let Some(p) = stats.p_joint else {
        missing.extend((0..4).map(|k| Cell::Joint(k >> 1, k & 1).to_string()));
        return None;
    };
    let pm = std::array::from_fn(|i| {
        std::array::from_fn(|j| row_or_missing(stats, i, j, p[i][j] > 0.0, missing))
    });
    Some((p, pm))
}

fn resolve(stats: &ObservedStats) -> Result<Resolved> {
    let mut missing = Vec::new();
    let key = resolve_key(stats, &mut missing);
    let p = key.map(|k| k.0).unwrap_or([[1.0; 2]; 2]);
    let alice_bob_reflect =
        std::array::from_fn(|i| row_or_missing(stats, i, R, p[i][0] + p[i][1] > 0.0, &mut missing));
    let alice_reflect_bob =
        std::array::from_fn(|j| row_or_missing(stats, R, j, p[0][j] + p[1][j] > 0.0, &mut missing));
    let both_reflect = row_or_missing(stats, R, R, true, &mut missing);
    match key {
        Some((p, pm)) if missing.is_empty() => Ok(Resolved {
            p,
            pm,
            alice_reflect_bob,
            alice_bob_reflect,
            both_reflect,
        }),
        _ => Err(Error::MissingCells(missing)),
    }
}

fn constraints_of(v: &Resolved) -> ConstraintSet {
    let p = &v.p;
    let pm = &v.pm;
    let r_i0i1: [[f64; 4]; 2] = std::array::from_fn(|i| {
        std::array::from_fn(|m| {
            (p[i][0] + p[i][1]) * v.alice_bob_reflect[i][m]
                - p[i][0] * pm[i][0][m]
                - p[i][1] * pm[i][1][m]
        })
    });
    let r_0j1j: [[f64; 4]; 2] = std::array::from_fn(|j| {
        std::array::from_fn(|m| {
            (p[0][j] + p[1][j]) * v.alice_reflect_bob[j][m]
                - p[0][j] * pm[0][j][m]
                - p[1][j] * pm[1][j][m]
        })
    });
    let s = std::array::from_fn(|m| {
        let diagonal: f64 = (0..4)
            .map(|k| p[k >> 1][k & 1] * pm[k >> 1][k & 1][m])
            .sum();
        v.both_reflect[m] - diagonal - r_i0i1[0][m] - r_0j1j[0][m] - r_0j1j[1][m] - r_i0i1[1][m]
    });
    let cs_0011 = std::array::from_fn(|m| {
        2.0 * (p[0][0] * p[1][1]).sqrt() * (pm[0][0][m] * pm[1][1][m]).sqrt()
    });
    let cs_0110 = std::array::from_fn(|m| {
        2.0 * (p[0][1] * p[1][0]).sqrt() * (pm[0][1][m] * pm[1][0][m]).sqrt()
    });
    ConstraintSet {
        r_i0i1,
        r_0j1j,
        s,
        cs_0011,
        cs_0110,
    }
}

/// Derives the inner-product constraints and checks that every split
/// interval is nonempty.
pub fn assemble_constraints(stats: &ObservedStats) -> Result<ConstraintSet> {
    let cons = constraints_of(&resolve(stats)?);
    cons.check_feasible()?;
    Ok(cons)
}

/// One pair's contribution `(‖E‖²+‖F‖²)(h(‖E‖²/Σ) − h(λ))`.
fn pair_term(norm_e: f64, norm_f: f64, re_ef: f64) -> f64 {
    let total = norm_e + norm_f;
    if total <= 0.0 {
        return 0.0;
    }
    let spread = ((norm_e - norm_f).powi(2) + 4.0 * re_ef * re_ef).sqrt();
    let lambda = (0.5 * (1.0 + spread / total)).clamp(0.5, 1.0);
    let ratio = (norm_e / total).clamp(-CLAMP_SLACK, 1.0 + CLAMP_SLACK);
    total * (h2(ratio) - h2(lambda))
}

/// Bound contribution of message `m` at split `t`.
fn message_bound(v: &Resolved, s_m: f64, m: usize, t: f64) -> f64 {
    let (p, pm) = (&v.p, &v.pm);
    let j0 = pair_term(p[0][0] * pm[0][0][m], p[1][1] * pm[1][1][m], 0.5 * t);
    let j1 = pair_term(
        p[0][1] * pm[0][1][m],
        p[1][0] * pm[1][0][m],
        0.5 * (s_m - t),
    );
    j0 + j1
}

/// The entropy lower bound at the given splits `t_m = R^m_{0011}`.
pub fn entropy_bound(stats: &ObservedStats, splits: &[f64; 4]) -> Result<f64> {
    let v = resolve(stats)?;
    let cons = constraints_of(&v);
    Ok((0..4)
        .map(|m| message_bound(&v, cons.s[m], m, splits[m]))
        .sum())
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimizes `f` over `[lo, hi]`: a uniform grid locates the basin, golden
/// section refines it between the neighbouring grid points.
fn minimize_on_interval<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo <= SPLIT_TOL {
        let t = 0.5 * (lo + hi);
        return (t, f(t));
    }
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let at = |k: usize| {
        if k == GRID_POINTS - 1 {
            hi
        } else {
            lo + step * k as f64
        }
    };
    let (best_k, best_val) =
        (0..GRID_POINTS)
            .map(|k| (k, f(at(k))))
            .fold(
                (0, f64::INFINITY),
                |acc, (k, v)| if v < acc.1 { (k, v) } else { acc },
            );
    let a = at(best_k.saturating_sub(1));
    let b = at((best_k + 1).min(GRID_POINTS - 1));
    let (t, val) = golden_section(&f, a, b, SPLIT_TOL);
    if val <= best_val {
        (t, val)
    } else {
        (at(best_k), best_val)
    }
}

/// Minimum of the bound over all feasible splits, with the minimizing splits.
pub fn minimize_entropy(stats: &ObservedStats, cons: &ConstraintSet) -> Result<(f64, [f64; 4])> {
    cons.check_feasible()?;
    let v = resolve(stats)?;
    let mut splits = [0.0; 4];
    let mut total = 0.0;
    for m in 0..4 {
        let (lo, hi) = cons.split_interval(m);
        let (t, val) = minimize_on_interval(|t| message_bound(&v, cons.s[m], m, t), lo, hi);
        splits[m] = t;
        total += val;
    }
    Ok((total, splits))
}

/// Unnormalized raw-key distribution `P^key_{a,b}` for `mode`.
pub fn key_table(stats: &ObservedStats, mode: Mode) -> Result<[[f64; 2]; 2]> {
    let mut missing = Vec::new();
    let Some((p, pm)) = resolve_key(stats, &mut missing).filter(|_| missing.is_empty()) else {
        return Err(Error::MissingCells(missing));
    };
    let table = std::array::from_fn(|i| {
        std::array::from_fn(|j| match mode {
            Mode::NoFlip => p[i][j] * pm[i][j].iter().sum::<f64>(),
            Mode::Flip => {
                p[i][j] * (pm[i][j][0] + pm[i][j][1])
                    + p[i][1 - j] * (pm[i][1 - j][2] + pm[i][1 - j][3])
            }
        })
    });
    Ok(table)
}

/// `H(A|B)` per raw-key bit: `H(P^key) − h(Bob's marginal)` on the
/// renormalized key table.
pub fn conditional_entropy_ab(stats: &ObservedStats, mode: Mode) -> Result<f64> {
    let k = key_table(stats, mode)?;
    let z: f64 = k.iter().flatten().sum();
    if z.is_nan() || z <= 0.0 {
        return Err(Error::EmptyKeyTable);
    }
    let joint: Vec<f64> = k.iter().flatten().map(|x| x / z).collect();
    let bob_zero = (k[0][0] + k[1][0]) / z;
    Ok((shannon_entropy(&joint) - h2(bob_zero)).max(0.0))
}

/// The mode with the smaller `H(A|B)`; ties go to NO-FLIP.
pub fn prefer_mode(h_ab_flip: f64, h_ab_noflip: f64) -> Mode {
    if h_ab_flip < h_ab_noflip - MODE_TIE_TOL {
        Mode::Flip
    } else {
        Mode::NoFlip
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Minimized lower bound on `H(A|E)`, shared by both modes.
    pub h_ae_lower: f64,
    /// Minimizing `t_m = R^m_{0011}`.
    pub splits: [f64; 4],
    pub h_ab_flip: f64,
    pub h_ab_noflip: f64,
    pub rate_flip: f64,
    pub rate_noflip: f64,
    pub chosen_mode: Mode,
    pub p_key_flip: [[f64; 2]; 2],
    pub p_key_noflip: [[f64; 2]; 2],
}

impl KeyRateReport {
    pub fn rate(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Flip => self.rate_flip,
            Mode::NoFlip => self.rate_noflip,
        }
    }

    pub fn h_ab(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Flip => self.h_ab_flip,
            Mode::NoFlip => self.h_ab_noflip,
        }
    }

    pub fn p_key(&self, mode: Mode) -> [[f64; 2]; 2] {
        match mode {
            Mode::Flip => self.p_key_flip,
            Mode::NoFlip => self.p_key_noflip,
        }
    }

    /// Rate of the chosen mode (may be negative).
    pub fn best_rate(&self) -> f64 {
        self.rate(self.chosen_mode)
    }
}

/// Full key-rate report for observed statistics.
pub fn key_rate(stats: &ObservedStats) -> Result<KeyRateReport> {
    let cons = assemble_constraints(stats)?;
    let (h_ae_lower, splits) = minimize_entropy(stats, &cons)?;
    let h_ab_flip = conditional_entropy_ab(stats, Mode::Flip)?;
    let h_ab_noflip = conditional_entropy_ab(stats, Mode::NoFlip)?;
    Ok(KeyRateReport {
        h_ae_lower,
        splits,
        h_ab_flip,
        h_ab_noflip,
        rate_flip: h_ae_lower - h_ab_flip,
        rate_noflip: h_ae_lower - h_ab_noflip,
        chosen_mode: prefer_mode(h_ab_flip, h_ab_noflip),
        p_key_flip: key_table(stats, Mode::Flip)?,
        p_key_noflip: key_table(stats, Mode::NoFlip)?,
    })
}

/// Key rate of the honest server behind depolarizing links.
pub fn depolarizing_key_rate(q_f: f64, q_r: f64) -> Result<KeyRateReport> {
    key_rate(&predict_depolarization(q_f, q_r)?)
}

/// Exact `H(A|E)` of an attack, from the explicit cq-state
/// `ρ_AE = Σ_{i,j,m} α²_ij |i⟩⟨i| ⊗ |m⟩⟨m| ⊗ |e^m_ij⟩⟨e^m_ij|`,
/// as `H(AE) − H(E)` by eigendecomposition. Eve's system is the message
/// register together with her ancilla.
pub fn exact_entropy_oracle(attack: &AttackModel) -> Result<f64> {
    let d = attack.dim_e();
    let mut branches = Vec::with_capacity(32);
    for i in 0..2 {
        for j in 0..2 {
            let w = attack.alpha(i, j).powi(2);
            if w == 0.0 {
                continue;
            }
            for m in 0..4 {
                let a = StateVector::basis(i, vec![2])?;
                let msg = StateVector::basis(m, vec![4])?;
                let e = StateVector::new(attack.vector(i, j, m).to_vec(), vec![d])?;
                branches.push((w, a.tensor(&msg).tensor(&e)));
            }
        }
    }
    let rho_ae = DensityMatrix::mixture(&branches)?;
    let rho_e = partial_trace(&rho_ae, &[1, 2])?;
    Ok(von_neumann_entropy(&rho_ae)? - von_neumann_entropy(&rho_e)?)
}

/// Noise level `Q*` where the best honest-depolarization rate crosses zero
/// along `(Q_F, Q_R) = (forward·Q, reverse·Q)`, found by bisection on
/// `[lo, hi]` to within `tol`.
pub fn zero_rate_threshold(forward: f64, reverse: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let rate = |q: f64| depolarizing_key_rate(forward * q, reverse * q).map(|r| r.best_rate());
    let (mut a, mut b) = (lo, hi);
    if rate(a)? <= 0.0 || rate(b)? > 0.0 {
        return Err(Error::InvalidParameter {
            name: "bracket",
            value: hi,
            reason: "rate must be positive at lo and non-positive at hi",
        });
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if rate(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::predict_from_attack;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn closed(q_f: f64, q_r: f64) -> ObservedStats {
        predict_depolarization(q_f, q_r).unwrap()
    }

    /// `t_m = 2 α00 α11 Re⟨e^m_00|e^m_11⟩` read straight off the attack.
    fn true_splits(a: &AttackModel) -> [f64; 4] {
        std::array::from_fn(|m| 2.0 * a.alpha(0, 0) * a.alpha(1, 1) * a.inner(0, 0, 1, 1, m).re)
    }

    #[test]
    fn noiseless_constraints() {
        let c = assemble_constraints(&closed(0.0, 0.0)).unwrap();
        let expected = [0.5, -0.5, 0.0, 0.0];
        for m in 0..4 {
            assert_abs_diff_eq!(c.s[m], expected[m], epsilon = 1e-12);
            assert_eq!(c.cs_0110[m], 0.0);
            let (lo, hi) = c.split_interval(m);
            assert_abs_diff_eq!(lo, hi, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_statistics_kill_cross_terms() {
        let c = assemble_constraints(&closed(0.5, 0.5)).unwrap();
        for m in 0..4 {
            for i in 0..2 {
                assert_abs_diff_eq!(c.r_i0i1[i][m], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(c.r_0j1j[i][m], 0.0, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(c.s[m], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_interval_is_infeasible() {
        let mut s = closed(0.1, 0.1);
        // push P^0_RR far above what the Cauchy–Schwarz radii allow
        let mut rr = s.p_msg[R][R].unwrap();
        rr[0] = 1.0;
        rr[1] = 0.0;
        rr[2] = 0.0;
        rr[3] = 0.0;
        s.p_msg[R][R] = Some(rr);
        assert!(matches!(
            assemble_constraints(&s),
            Err(Error::InfeasibleStats { message: 0, .. })
        ));
    }

    #[test]
    fn missing_cells_are_named() {
        let mut s = closed(0.1, 0.1);
        s.p_msg[R][R] = None;
        s.p_msg[0][R] = None;
        match assemble_constraints(&s) {
            Err(Error::MissingCells(cells)) => {
                assert!(cells.contains(&"Pm_RR_2".to_string()));
                assert!(cells.contains(&"Pm_0R_0".to_string()));
                assert_eq!(cells.len(), 8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_probability_rows_are_not_required() {
        // noiseless: P_01 = P_10 = 0, so their message rows are irrelevant
        let mut s = closed(0.0, 0.0);
        s.p_msg[0][1] = None;
        s.p_msg[1][0] = None;
        let r = key_rate(&s).unwrap();
        assert_abs_diff_eq!(r.h_ae_lower, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_bound_at_forced_splits() {
        let s = closed(0.0, 0.0);
        let b = entropy_bound(&s, &[0.5, -0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-12);
        let (min, splits) = minimize_entropy(&s, &assemble_constraints(&s).unwrap()).unwrap();
        assert_abs_diff_eq!(min, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(splits[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn pair_term_edge_cases() {
        // E = F: λ = 1, h(½) = 1
        assert_abs_diff_eq!(pair_term(0.2, 0.2, 0.2), 0.4, epsilon = 1e-12);
        // orthogonal, equal norms: λ = ½
        assert_abs_diff_eq!(pair_term(0.2, 0.2, 0.0), 0.0, epsilon = 1e-12);
        assert_eq!(pair_term(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let (x, v) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-7);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        let (x, _) = minimize_on_interval(|x| (x - 0.3).abs(), 0.0, 1.0);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-8);
    }

    #[test]
    fn conditional_entropy_examples() {
        let h01 = crate::qmath::binary_entropy(0.1).unwrap();
        let sym = closed(0.1, 0.1);
        assert_abs_diff_eq!(
            conditional_entropy_ab(&sym, Mode::NoFlip).unwrap(),
            h01,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(h01, 0.468_996, epsilon = 1e-6);
        let fwd = closed(0.1, 0.0);
        assert_abs_diff_eq!(
            conditional_entropy_ab(&fwd, Mode::Flip).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_entropy_ab(&fwd, Mode::NoFlip).unwrap(),
            h01,
            epsilon = 1e-12
        );
        let rev = closed(0.0, 0.1);
        assert_abs_diff_eq!(
            conditional_entropy_ab(&rev, Mode::NoFlip).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_entropy_ab(&rev, Mode::Flip).unwrap(),
            h01,
            epsilon = 1e-12
        );
    }

    #[test]
    fn modes_agree_on_symmetric_noise() {
        for k in 0..=20 {
            let q = 0.025 * k as f64;
            let s = closed(q, q);
            let f = conditional_entropy_ab(&s, Mode::Flip).unwrap();
            let n = conditional_entropy_ab(&s, Mode::NoFlip).unwrap();
            assert_abs_diff_eq!(f, n, epsilon = 1e-12);
        }
    }

    #[test]
    fn key_rate_examples() {
        let r = depolarizing_key_rate(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.rate_flip, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.rate_noflip, 1.0, epsilon = 1e-6);
        let r = depolarizing_key_rate(0.5, 0.5).unwrap();
        assert!(r.best_rate() <= 0.0);
        let r = depolarizing_key_rate(0.1, 0.0).unwrap();
        assert_eq!(r.chosen_mode, Mode::Flip);
    }

    #[test]
    fn report_invariants() {
        for (qf, qr) in [(0.02, 0.01), (0.05, 0.1), (0.1, 0.1)] {
            let s = closed(qf, qr);
            let r = key_rate(&s).unwrap();
            let expected: f64 = (0..4)
                .map(|k| {
                    s.joint(k >> 1, k & 1).unwrap()
                        * s.p_msg[k >> 1][k & 1].unwrap().iter().sum::<f64>()
                })
                .sum();
            for mode in [Mode::Flip, Mode::NoFlip] {
                assert_abs_diff_eq!(r.rate(mode), r.h_ae_lower - r.h_ab(mode), epsilon = 1e-12);
                let total: f64 = r.p_key(mode).iter().flatten().sum();
                assert_abs_diff_eq!(total, expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn honest_oracle_and_bound_are_tight() {
        let a = AttackModel::honest();
        assert_abs_diff_eq!(exact_entropy_oracle(&a).unwrap(), 1.0, epsilon = 1e-9);
        let s = predict_from_attack(&a);
        let (min, _) = minimize_entropy(&s, &assemble_constraints(&s).unwrap()).unwrap();
        assert_abs_diff_eq!(min, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn orthogonal_ancillas_reveal_the_key() {
        // e^m_ij = |m⟩ ⊗ |2i+j⟩ / 2 on a 4-dim ancilla: Eve learns (i, j)
        let c = |x: f64| num_complex::Complex64::new(x, 0.0);
        let eve = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|_m| {
                    let mut v = vec![c(0.0); 4];
                    v[2 * i + j] = c(0.5);
                    v
                })
            })
        });
        let attack = AttackModel::new([[0.5, 0.5], [0.5, 0.5]], eve).unwrap();
        assert_abs_diff_eq!(exact_entropy_oracle(&attack).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn random_attacks_are_bounded_soundly() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..200 {
            let d = 1 + trial % 4;
            let attack = AttackModel::random(d, &mut rng).unwrap();
            let s = predict_from_attack(&attack);
            let cons = assemble_constraints(&s).unwrap();
            let (min, _) = minimize_entropy(&s, &cons).unwrap();
            let at_truth = entropy_bound(&s, &true_splits(&attack)).unwrap();
            let oracle = exact_entropy_oracle(&attack).unwrap();
            assert!(min <= at_truth + 1e-9, "trial {trial}: {min} > {at_truth}");
            assert!(
                at_truth <= oracle + 1e-9,
                "trial {trial}: {at_truth} > {oracle}"
            );
            // the true split must satisfy the derived constraints
            for m in 0..4 {
                let (lo, hi) = cons.split_interval(m);
                let t = true_splits(&attack)[m];
                assert!(t >= lo - 1e-9 && t <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn rate_is_non_increasing_on_the_diagonal() {
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let q = 0.005 * k as f64;
            let r = depolarizing_key_rate(q, q).unwrap().best_rate();
            assert!(r <= prev + 1e-12, "q = {q}: {r} > {prev}");
            prev = r;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn bit_relabelling_preserves_the_rate(seed in any::<u64>(), d in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = predict_from_attack(&AttackModel::random(d, &mut rng).unwrap());
            let a = key_rate(&s).unwrap();
            let b = key_rate(&s.relabeled()).unwrap();
            prop_assert!((a.h_ae_lower - b.h_ae_lower).abs() < 1e-9);
            prop_assert!((a.best_rate() - b.best_rate()).abs() < 1e-9);
        }

        #[test]
        fn bound_never_exceeds_oracle(seed in any::<u64>(), d in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let attack = AttackModel::random(d, &mut rng).unwrap();
            let s = predict_from_attack(&attack);
            let (min, _) = minimize_entropy(&s, &assemble_constraints(&s).unwrap()).unwrap();
            prop_assert!(min <= exact_entropy_oracle(&attack).unwrap() + 1e-9);
        }
    }
}
