//! Round-by-round simulation of the quantum stage, the sampling stage and
//! raw-key generation.
//!
//! A round: the server prepares `|φ0⟩` and sends one qubit to each user;
//! each user independently measures-and-resends in Z (probability `p_m`)
//! or reflects; the server announces one of four messages.
//!
//! Two server models are supported. The honest server sits behind
//! depolarizing forward/reverse links, simulated by sampling the channels'
//! Pauli twirls on pure states. An adversarial server is described by an
//! [`AttackModel`]: it sends `Σ α_ij |ij⟩` and answers through the isometry
//! `U|ij⟩ = Σ_m |m⟩|e^m_ij⟩`, measuring the message register at once.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{DepolarizingChannel, TwoQubitPauli};
use crate::error::{Error, Result};
use crate::keyrate;
use crate::qmath::{
    bell_projectors, bell_state, measure_projective, measure_subsystem, random_isometry, CMatrix,
    StateVector,
};
use crate::rng::{stream_rng, SAMPLING_STREAM};
use crate::stats::ObservedStats;

/// Largest supported ancilla dimension per round.
pub const MAX_EVE_DIM: usize = 16;

const ATTACK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    MeasureResend,
    Reflect,
}

impl Choice {
    pub fn is_measure(self) -> bool {
        self == Choice::MeasureResend
    }

    fn token(self) -> &'static str {
        match self {
            Choice::MeasureResend => "MR",
            Choice::Reflect => "R",
        }
    }
}

impl FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MR" => Ok(Choice::MeasureResend),
            "R" => Ok(Choice::Reflect),
            other => Err(Error::Parse(format!("unknown choice {other:?}"))),
        }
    }
}

/// Bob's raw-key post-processing switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Flip,
    NoFlip,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Flip => "FLIP",
            Mode::NoFlip => "NO-FLIP",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModePolicy {
    #[default]
    Auto,
    ForceFlip,
    ForceNoFlip,
}

impl FromStr for ModePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(ModePolicy::Auto),
            "flip" => Ok(ModePolicy::ForceFlip),
            "noflip" | "no-flip" => Ok(ModePolicy::ForceNoFlip),
            other => Err(Error::Parse(format!("unknown mode policy {other:?}"))),
        }
    }
}

/// The server's collective attack.
///
/// `eve[i][j][m]` holds the sub-normalized ancilla vector `e^m_{i,j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAttack", into = "RawAttack")]
pub struct AttackModel {
    alphas: [[f64; 2]; 2],
    eve: [[[Vec<Complex64>; 4]; 2]; 2],
}

#[derive(Serialize, Deserialize)]
struct RawAttack {
    alphas: [[f64; 2]; 2],
    eve_vectors: [[[Vec<Complex64>; 4]; 2]; 2],
}

impl TryFrom<RawAttack> for AttackModel {
    type Error = Error;

    fn try_from(raw: RawAttack) -> Result<Self> {
        AttackModel::new(raw.alphas, raw.eve_vectors)
    }
}

impl From<AttackModel> for RawAttack {
    fn from(a: AttackModel) -> Self {
        RawAttack {
            alphas: a.alphas,
            eve_vectors: a.eve,
        }
    }
}

impl AttackModel {
    pub fn new(alphas: [[f64; 2]; 2], eve: [[[Vec<Complex64>; 4]; 2]; 2]) -> Result<Self> {
        let attack = Self { alphas, eve };
        attack.validate()?;
        Ok(attack)
    }

    fn validate(&self) -> Result<()> {
        let flat = self.alphas.iter().flatten();
        if flat.clone().any(|&a| !a.is_finite() || a < 0.0) {
            return Err(Error::InvalidAttack(
                "amplitudes must be real and non-negative".into(),
            ));
        }
        let norm: f64 = flat.map(|a| a * a).sum();
        if (norm - 1.0).abs() > ATTACK_TOL {
            return Err(Error::InvalidAttack(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        let d = self.eve[0][0][0].len();
        if d == 0 || d > MAX_EVE_DIM {
            return Err(Error::InvalidAttack(format!(
                "ancilla dimension {d} outside 1..={MAX_EVE_DIM}"
            )));
        }
        if self.eve.iter().flatten().flatten().any(|v| v.len() != d) {
            return Err(Error::InvalidAttack(
                "ancilla vectors differ in dimension".into(),
            ));
        }
        for a in 0..4 {
            for b in a..4 {
                let (i, j, k, l) = (a >> 1, a & 1, b >> 1, b & 1);
                let g: Complex64 = (0..4).map(|m| self.inner(i, j, k, l, m)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                if (g - target).norm() > ATTACK_TOL {
                    return Err(Error::InvalidAttack(format!(
                        "isometry violated: Σ_m ⟨e^m_{i}{j}|e^m_{k}{l}⟩ = {g}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds an attack from a `4·d_E × 4` isometry whose column `2i + j`
    /// is `⊕_m e^m_{i,j}` (message-major).
    pub fn from_isometry(alphas: [[f64; 2]; 2], iso: &CMatrix) -> Result<Self> {
        if iso.ncols() != 4 || !iso.nrows().is_multiple_of(4) {
            return Err(Error::InvalidAttack(format!(
                "isometry must be (4·d_E)×4, got {}×{}",
                iso.nrows(),
                iso.ncols()
            )));
        }
        let d = iso.nrows() / 4;
        let eve = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|m| (0..d).map(|e| iso[(m * d + e, 2 * i + j)]).collect())
            })
        });
        Self::new(alphas, eve)
    }

    /// The honest noiseless server: `|φ0⟩` out, Bell measurement back.
    pub fn honest() -> Self {
        Self::honest_with_reverse_noise(DepolarizingChannel::identity())
    }

    /// Honest `|φ0⟩` source, reverse depolarization dilated into a
    /// 16-dimensional ancilla (one basis state per twirl Pauli), then a
    /// Bell measurement.
    pub fn honest_with_reverse_noise(reverse: DepolarizingChannel) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let weights = reverse.twirl_weights();
        let dim = if reverse.q() == 0.0 { 1 } else { 16 };
        let paulis: Vec<CMatrix> = (0..16)
            .map(|k| TwoQubitPauli::from_index(k).matrix())
            .collect();
        let bells: Vec<StateVector> = (0..4).map(bell_state).collect();
        let eve = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let ket = StateVector::basis(2 * i + j, vec![2, 2]).expect("two-qubit basis");
                std::array::from_fn(|m| {
                    (0..dim)
                        .map(|k| {
                            let moved = ket.apply(&paulis[k]).expect("pauli size");
                            bells[m].inner(&moved).expect("bell size") * weights[k].sqrt()
                        })
                        .collect()
                })
            })
        });
        Self::new([[s, 0.0], [0.0, s]], eve).expect("honest attack is a valid isometry")
    }

    /// A random attack with ancilla dimension `dim_e`.
    pub fn random<R: Rng + ?Sized>(dim_e: usize, rng: &mut R) -> Result<Self> {
        if dim_e == 0 || dim_e > MAX_EVE_DIM {
            return Err(Error::InvalidAttack(format!(
                "ancilla dimension {dim_e} outside 1..={MAX_EVE_DIM}"
            )));
        }
        let raw: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        let norm = raw
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let alphas = [
            [raw[0] / norm, raw[1] / norm],
            [raw[2] / norm, raw[3] / norm],
        ];
        let iso = random_isometry(4 * dim_e, 4, rng);
        Self::from_isometry(alphas, &iso)
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.alphas[i][j]
    }

    pub fn alphas(&self) -> [[f64; 2]; 2] {
        self.alphas
    }

    pub fn dim_e(&self) -> usize {
        self.eve[0][0][0].len()
    }

    /// `e^m_{i,j}`.
    pub fn vector(&self, i: usize, j: usize, m: usize) -> &[Complex64] {
        &self.eve[i][j][m]
    }

    /// `⟨e^m_{i,j} | e^m_{k,l}⟩`.
    pub fn inner(&self, i: usize, j: usize, k: usize, l: usize, m: usize) -> Complex64 {
        self.eve[i][j][m]
            .iter()
            .zip(&self.eve[k][l][m])
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies the return isometry to `Σ c_ij |ij⟩`, giving a state over
    /// (message, ancilla).
    pub fn apply_return(&self, state: &StateVector) -> Result<StateVector> {
        if state.dims() != [2, 2] {
            return Err(Error::Dimension(
                "return isometry acts on two qubits".into(),
            ));
        }
        let d = self.dim_e();
        let mut out = vec![Complex64::new(0.0, 0.0); 4 * d];
        for (ij, c) in state.amplitudes().iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for m in 0..4 {
                for (e, v) in self.eve[ij >> 1][ij & 1][m].iter().enumerate() {
                    out[m * d + e] += c * v;
                }
            }
        }
        StateVector::new(out, vec![4, d])
    }

    /// Initial state `Σ α_ij |ij⟩`.
    pub fn initial_state(&self) -> StateVector {
        let amps: Vec<f64> = self.alphas.iter().flatten().copied().collect();
        StateVector::from_real(&amps, vec![2, 2]).expect("two-qubit state")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    /// Honest server behind depolarizing forward and reverse links.
    Depolarizing {
        forward: DepolarizingChannel,
        reverse: DepolarizingChannel,
    },
    /// Adversarial server running a collective attack.
    Attack(Box<AttackModel>),
}

impl Noise {
    pub fn depolarizing(q_f: f64, q_r: f64) -> Result<Self> {
        Ok(Noise::Depolarizing {
            forward: DepolarizingChannel::new(q_f)?,
            reverse: DepolarizingChannel::new(q_r)?,
        })
    }

    pub fn attack(model: AttackModel) -> Self {
        Noise::Attack(Box::new(model))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub rounds: u64,
    /// Probability that a single party chooses Measure-Resend.
    pub p_measure: f64,
    pub sample_fraction: f64,
    pub noise: Noise,
    pub seed: u64,
    pub mode_policy: ModePolicy,
}

impl ProtocolConfig {
    pub fn new(
        rounds: u64,
        p_measure: f64,
        sample_fraction: f64,
        noise: Noise,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            rounds,
            p_measure,
            sample_fraction,
            noise,
            seed,
            mode_policy: ModePolicy::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode_policy(mut self, policy: ModePolicy) -> Self {
        self.mode_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_measure > 0.0 && self.p_measure < 1.0) {
            return Err(Error::InvalidParameter {
                name: "p_measure",
                value: self.p_measure,
                reason: "must lie strictly between 0 and 1",
            });
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return Err(Error::InvalidParameter {
                name: "sample_fraction",
                value: self.sample_fraction,
                reason: "must lie strictly between 0 and 1",
            });
        }
        Ok(())
    }
}

/// One round of the quantum stage plus its sampling flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoundRecord {
    pub index: u64,
    pub choice_a: Choice,
    pub choice_b: Choice,
    pub outcome_a: Option<u8>,
    pub outcome_b: Option<u8>,
    pub msg_to_a: u8,
    pub msg_to_b: u8,
    pub in_sample: bool,
}

impl RoundRecord {
    pub fn both_measured(&self) -> bool {
        self.choice_a.is_measure() && self.choice_b.is_measure()
    }

    pub fn messages_agree(&self) -> bool {
        self.msg_to_a == self.msg_to_b
    }

    /// Transcript line without trailing newline.
    pub fn to_line(&self) -> String {
        let bit = |o: Option<u8>| o.map_or_else(|| "-".to_string(), |b| b.to_string());
        let msg = if self.messages_agree() {
            self.msg_to_a.to_string()
        } else {
            format!("{}/{}", self.msg_to_a, self.msg_to_b)
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.index,
            self.choice_a.token(),
            self.choice_b.token(),
            bit(self.outcome_a),
            bit(self.outcome_b),
            msg,
            u8::from(self.in_sample)
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "expected 7 fields, got {}: {line:?}",
                fields.len()
            )));
        }
        let int = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad {what} {s:?}")))
        };
        let outcome = |s: &str| -> Result<Option<u8>> {
            match s {
                "-" => Ok(None),
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                other => Err(Error::Parse(format!("bad outcome {other:?}"))),
            }
        };
        let msg = |s: &str| -> Result<u8> {
            match int(s, "message")? {
                m @ 0..=3 => Ok(m as u8),
                m => Err(Error::Parse(format!("message {m} out of range"))),
            }
        };
        let (msg_to_a, msg_to_b) = match fields[5].split_once('/') {
            Some((a, b)) => (msg(a)?, msg(b)?),
            None => {
                let m = msg(fields[5])?;
                (m, m)
            }
        };
        let rec = RoundRecord {
            index: int(fields[0], "index")?,
            choice_a: fields[1].parse()?,
            choice_b: fields[2].parse()?,
            outcome_a: outcome(fields[3])?,
            outcome_b: outcome(fields[4])?,
            msg_to_a,
            msg_to_b,
            in_sample: match fields[6] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("bad sample flag {other:?}"))),
            },
        };
        if rec.choice_a.is_measure() != rec.outcome_a.is_some()
            || rec.choice_b.is_measure() != rec.outcome_b.is_some()
        {
            return Err(Error::Parse(format!(
                "outcome present iff Measure-Resend violated: {line:?}"
            )));
        }
        Ok(rec)
    }
}

pub const TRANSCRIPT_HEADER: &str = "index,choice_a,choice_b,outcome_a,outcome_b,msg,in_sample";

pub fn write_transcript<W: Write>(records: &[RoundRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRANSCRIPT_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

pub fn read_transcript<R: BufRead>(input: R) -> Result<Vec<RoundRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == TRANSCRIPT_HEADER {
            continue;
        }
        records.push(RoundRecord::parse_line(trimmed)?);
    }
    Ok(records)
}

fn bell_basis() -> &'static [CMatrix] {
    static BELL: OnceLock<Vec<CMatrix>> = OnceLock::new();
    BELL.get_or_init(bell_projectors)
}

/// Simulates round `index`.
///
/// Exactly seven uniforms are drawn per round, in a fixed order, whichever
/// branch is taken.
pub fn run_round<R: Rng + ?Sized>(cfg: &ProtocolConfig, index: u64, rng: &mut R) -> RoundRecord {
    let u: [f64; 7] = std::array::from_fn(|_| rng.random::<f64>());
    let choose = |x: f64| {
        if x < cfg.p_measure {
            Choice::MeasureResend
        } else {
            Choice::Reflect
        }
    };
    let (choice_a, choice_b) = (choose(u[0]), choose(u[1]));

    let (outcome_a, outcome_b, msg) = match &cfg.noise {
        Noise::Depolarizing { forward, reverse } => {
            let sent = forward
                .sample_pauli(u[2])
                .apply(&bell_state(0))
                .expect("two-qubit state");
            let (state, outcome_a) = measure_party(sent, choice_a, 0, u[3]);
            let (state, outcome_b) = measure_party(state, choice_b, 1, u[4]);
            let state = reverse
                .sample_pauli(u[5])
                .apply(&state)
                .expect("two-qubit state");
            let bell = measure_projective(&state, bell_basis(), u[6]).expect("bell measurement");
            (outcome_a, outcome_b, bell.outcome)
        }
        Noise::Attack(attack) => {
            let (state, outcome_a) = measure_party(attack.initial_state(), choice_a, 0, u[3]);
            let (state, outcome_b) = measure_party(state, choice_b, 1, u[4]);
            let returned = attack.apply_return(&state).expect("attack dims");
            let msg = measure_subsystem(&returned, 0, u[6]).expect("message measurement");
            (outcome_a, outcome_b, msg.outcome)
        }
    };

    RoundRecord {
        index,
        choice_a,
        choice_b,
        outcome_a,
        outcome_b,
        msg_to_a: msg as u8,
        msg_to_b: msg as u8,
        in_sample: false,
    }
}

fn measure_party(
    state: StateVector,
    choice: Choice,
    qubit: usize,
    u: f64,
) -> (StateVector, Option<u8>) {
    match choice {
        Choice::Reflect => (state, None),
        Choice::MeasureResend => {
            let m = measure_subsystem(&state, qubit, u).expect("party measurement");
            (m.state, Some(m.outcome as u8))
        }
    }
}

/// Runs all rounds. Round `i` draws only from stream `i` of the seed, so
/// the transcript does not depend on how rounds are scheduled.
pub fn simulate(cfg: &ProtocolConfig) -> Vec<RoundRecord> {
    (0..cfg.rounds)
        .into_par_iter()
        .map(|i| run_round(cfg, i, &mut stream_rng(cfg.seed, i)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingOutcome {
    pub flagged: usize,
    /// Some round carried different messages to Alice and Bob.
    pub abort: bool,
}

/// Number of rounds placed in the test subset.
pub fn sample_size(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Flags `⌈fraction·N⌉` rounds as the test subset (Fisher–Yates prefix)
/// and checks message consistency across every round.
pub fn sampling_stage<R: Rng + ?Sized>(
    records: &mut [RoundRecord],
    fraction: f64,
    rng: &mut R,
) -> Result<SamplingOutcome> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "sample_fraction",
            value: fraction,
            reason: "must lie strictly between 0 and 1",
        });
    }
    let k = sample_size(records.len(), fraction);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let (chosen, _) = order.partial_shuffle(rng, k);
    for r in records.iter_mut() {
        r.in_sample = false;
    }
    for &i in chosen.iter() {
        records[i].in_sample = true;
    }
    Ok(SamplingOutcome {
        flagged: k,
        abort: records.iter().any(|r| !r.messages_agree()),
    })
}

/// Picks the mode with the smaller `H(A|B)`; ties go to NO-FLIP.
pub fn choose_mode(stats: &ObservedStats) -> Result<Mode> {
    let flip = keyrate::conditional_entropy_ab(stats, Mode::Flip)?;
    let no_flip = keyrate::conditional_entropy_ab(stats, Mode::NoFlip)?;
    Ok(keyrate::prefer_mode(flip, no_flip))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawKey {
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
}

impl RawKey {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    pub fn mismatches(&self) -> usize {
        self.alice
            .iter()
            .zip(&self.bob)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// One key bit per non-sampled round where both parties measured. Under
/// FLIP, Bob inverts his bit when his message is 2 or 3.
pub fn extract_raw_key(records: &[RoundRecord], mode: Mode) -> RawKey {
    let mut key = RawKey::default();
    for r in records.iter().filter(|r| !r.in_sample && r.both_measured()) {
        let (Some(a), Some(b)) = (r.outcome_a, r.outcome_b) else {
            continue;
        };
        let flip = mode == Mode::Flip && r.msg_to_b >= 2;
        key.alice.push(a);
        key.bob.push(b ^ u8::from(flip));
    }
    key
}

/// Transcript, sampling result and tallied statistics of one run.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub records: Vec<RoundRecord>,
    pub sampling: SamplingOutcome,
    pub stats: ObservedStats,
}

/// Quantum stage followed by the sampling stage and tallying.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolRun> {
    cfg.validate()?;
    let mut records = simulate(cfg);
    let sampling = sampling_stage(
        &mut records,
        cfg.sample_fraction,
        &mut stream_rng(cfg.seed, SAMPLING_STREAM),
    )?;
    let stats = crate::stats::tally(&records)?;
    Ok(ProtocolRun {
        records,
        sampling,
        stats,
    })
}

/// Mode dictated by `policy`, falling back to [`choose_mode`] under `Auto`.
pub fn resolve_mode(policy: ModePolicy, stats: &ObservedStats) -> Result<Mode> {
    match policy {
        ModePolicy::ForceFlip => Ok(Mode::Flip),
        ModePolicy::ForceNoFlip => Ok(Mode::NoFlip),
        ModePolicy::Auto => choose_mode(stats),
    }
}
