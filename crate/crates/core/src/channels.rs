//! Two-qubit depolarizing noise.
//!
//! The channel is parameterized so that `Q` equals the flip rate seen by
//! Z-basis measurements: `E_Q(ρ) = (1 − 2Q)ρ + Q·I/2` with `I` the 4×4
//! identity. For Monte-Carlo rounds it is unravelled exactly as a Pauli
//! twirl: identity with probability `1 − 15Q/8`, each of the fifteen other
//! two-qubit Paulis with probability `Q/8`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{pauli, CMatrix, DensityMatrix, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepolarizingChannel {
    q: f64,
}

impl DepolarizingChannel {
    pub const MAX_Q: f64 = 0.5;

    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=Self::MAX_Q).contains(&q) {
            return Err(Error::InvalidParameter {
                name: "q",
                value: q,
                reason: "depolarization parameter must lie in [0, 0.5]",
            });
        }
        Ok(Self { q })
    }

    pub fn identity() -> Self {
        Self { q: 0.0 }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != 4 {
            return Err(Error::Dimension(format!(
                "depolarizing channel acts on dimension 4, got {}",
                rho.dim()
            )));
        }
        let mixed = CMatrix::identity(4, 4).scale(self.q / 2.0);
        DensityMatrix::new(
            rho.matrix().scale(1.0 - 2.0 * self.q) + mixed,
            rho.dims().to_vec(),
        )
    }

    /// Probabilities of the sixteen two-qubit Paulis, indexed as
    /// [`TwoQubitPauli::index`].
    pub fn twirl_weights(&self) -> [f64; 16] {
        let mut w = [self.q / 8.0; 16];
        w[0] = 1.0 - 2.0 * self.q + self.q / 8.0;
        w
    }

    /// Draws one Pauli of the twirl from a uniform `u ∈ [0, 1)`.
    pub fn sample_pauli(&self, u: f64) -> TwoQubitPauli {
        let w = self.twirl_weights();
        let mut acc = 0.0;
        for (k, &p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                return TwoQubitPauli::from_index(k);
            }
        }
        // u sits in the rounding gap above the last cumulative weight
        if self.q > 0.0 {
            TwoQubitPauli::from_index(15)
        } else {
            TwoQubitPauli::IDENTITY
        }
    }
}

/// `first` followed by `second`, i.e. `second ∘ first`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSequence {
    pub first: DepolarizingChannel,
    pub second: DepolarizingChannel,
}

impl ChannelSequence {
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.second.apply(&self.first.apply(rho)?)
    }
}

pub fn compose(first: DepolarizingChannel, second: DepolarizingChannel) -> ChannelSequence {
    ChannelSequence { first, second }
}

/// A two-qubit Pauli `σ_a ⊗ σ_b` with `0 = I, 1 = X, 2 = Y, 3 = Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TwoQubitPauli {
    pub a: u8,
    pub b: u8,
}

impl TwoQubitPauli {
    pub const IDENTITY: Self = Self { a: 0, b: 0 };

    pub fn from_index(k: usize) -> Self {
        Self {
            a: ((k >> 2) & 3) as u8,
            b: (k & 3) as u8,
        }
    }

    pub fn index(&self) -> usize {
        (self.a as usize) << 2 | self.b as usize
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn matrix(&self) -> CMatrix {
        pauli(self.a as usize).kronecker(&pauli(self.b as usize))
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if self.is_identity() {
            return Ok(state.clone());
        }
        state.apply(&self.matrix())
    }
}
