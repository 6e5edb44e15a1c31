//! Observable statistics: tallies from transcripts, closed-form
//! predictions under depolarization, and exact values for an attack.
//!
//! Party labels `x, y ∈ {0, 1, R}` are indexed `0, 1, 2`. `P_{i,j}` is the
//! joint Z outcome distribution given both parties measured; `P^m_{x,y}` is
//! the probability of message `m` given the parties' (choice, outcome) cell.

use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::protocol::{AttackModel, RoundRecord};

/// Index of the Reflect label in the `x, y` axes.
pub const R: usize = 2;

/// Rows with fewer samples than this are reported as low confidence.
pub const LOW_CONFIDENCE_SAMPLES: u64 = 100;

const LABELS: [&str; 3] = ["0", "1", "R"];

/// Name of one entry of the statistics table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    /// `P_ij`
    Joint(usize, usize),
    /// `P^m_xy`
    Msg(usize, usize, usize),
}

impl Cell {
    /// All cells in serialization order.
    pub fn all() -> impl Iterator<Item = Cell> {
        let joint = (0..4).map(|k| Cell::Joint(k >> 1, k & 1));
        let msg = (0..36).map(|k| Cell::Msg(k / 12, (k / 4) % 3, k % 4));
        joint.chain(msg)
    }

    pub fn parse(name: &str) -> Result<Cell> {
        let bad = || Error::Parse(format!("unknown cell {name:?}"));
        let label = |c: char| LABELS.iter().position(|l| l.starts_with(c)).ok_or_else(bad);
        if let Some(rest) = name.strip_prefix("P_") {
            let c: Vec<char> = rest.chars().collect();
            if c.len() == 2 && c.iter().all(|ch| *ch == '0' || *ch == '1') {
                return Ok(Cell::Joint(label(c[0])?, label(c[1])?));
            }
        } else if let Some(rest) = name.strip_prefix("Pm_") {
            let c: Vec<char> = rest.chars().collect();
            if c.len() == 4 && c[2] == '_' {
                let m = c[3].to_digit(10).filter(|&m| m < 4).ok_or_else(bad)? as usize;
                return Ok(Cell::Msg(label(c[0])?, label(c[1])?, m));
            }
        }
        Err(bad())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Cell::Joint(i, j) => write!(f, "P_{i}{j}"),
            Cell::Msg(x, y, m) => write!(f, "Pm_{}{}_{m}", LABELS[x], LABELS[y]),
        }
    }
}

/// Raw counts behind an estimated table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub joint: [[u64; 2]; 2],
    pub msg: [[[u64; 4]; 3]; 3],
}

impl Tally {
    /// Adds one round under the disclosure rules: outcome-conditioned
    /// cells use sampled rounds only, the both-Reflect cell uses every
    /// round (choices and messages are always disclosed).
    pub fn add(&mut self, r: &RoundRecord) {
        let label = |o: Option<u8>| o.map_or(R, usize::from);
        let (x, y) = (label(r.outcome_a), label(r.outcome_b));
        let m = r.msg_to_a as usize;
        if x == R && y == R {
            self.msg[R][R][m] += 1;
        } else if r.in_sample {
            if x != R && y != R {
                self.joint[x][y] += 1;
            }
            self.msg[x][y][m] += 1;
        }
    }

    pub fn merge(mut self, other: &Tally) -> Tally {
        for i in 0..2 {
            for j in 0..2 {
                self.joint[i][j] += other.joint[i][j];
            }
        }
        for x in 0..3 {
            for y in 0..3 {
                for m in 0..4 {
                    self.msg[x][y][m] += other.msg[x][y][m];
                }
            }
        }
        self
    }

    pub fn from_records(records: &[RoundRecord]) -> Tally {
        records
            .par_chunks(4096)
            .map(|chunk| {
                let mut t = Tally::default();
                chunk.iter().for_each(|r| t.add(r));
                t
            })
            .reduce(Tally::default, |a, b| a.merge(&b))
    }

    /// Maximum-likelihood frequencies; rows with no samples are absent.
    pub fn to_stats(&self) -> ObservedStats {
        let joint_total: u64 = self.joint.iter().flatten().sum();
        let p_joint = (joint_total > 0).then(|| {
            self.joint
                .map(|row| row.map(|c| c as f64 / joint_total as f64))
        });
        let p_msg = self.msg.map(|row| {
            row.map(|counts| {
                let total: u64 = counts.iter().sum();
                (total > 0).then(|| counts.map(|c| c as f64 / total as f64))
            })
        });
        ObservedStats {
            p_joint,
            p_msg,
            counts: Some(*self),
        }
    }
}

/// The full table of observable probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedStats {
    /// `P_ij`; absent when no sampled round had both parties measuring.
    pub p_joint: Option<[[f64; 2]; 2]>,
    /// `P^m_xy` rows; a row is absent when its denominator is zero.
    pub p_msg: [[Option<[f64; 4]>; 3]; 3],
    pub counts: Option<Tally>,
}

impl ObservedStats {
    pub fn joint(&self, i: usize, j: usize) -> Option<f64> {
        self.p_joint.map(|p| p[i][j])
    }

    pub fn msg(&self, x: usize, y: usize, m: usize) -> Option<f64> {
        self.p_msg[x][y].map(|row| row[m])
    }

    pub fn get(&self, cell: Cell) -> Option<f64> {
        match cell {
            Cell::Joint(i, j) => self.joint(i, j),
            Cell::Msg(x, y, m) => self.msg(x, y, m),
        }
    }

    /// Tally count behind a cell, when the table was estimated.
    pub fn count(&self, cell: Cell) -> Option<u64> {
        let t = self.counts.as_ref()?;
        Some(match cell {
            Cell::Joint(i, j) => t.joint[i][j],
            Cell::Msg(x, y, m) => t.msg[x][y][m],
        })
    }

    /// Number of samples behind the row containing `cell`.
    pub fn row_samples(&self, cell: Cell) -> Option<u64> {
        let t = self.counts.as_ref()?;
        Some(match cell {
            Cell::Joint(..) => t.joint.iter().flatten().sum(),
            Cell::Msg(x, y, _) => t.msg[x][y].iter().sum(),
        })
    }

    pub fn missing_cells(&self) -> Vec<Cell> {
        Cell::all().filter(|&c| self.get(c).is_none()).collect()
    }

    /// Errors with the names of any of `cells` that are absent.
    pub fn require(&self, cells: impl IntoIterator<Item = Cell>) -> Result<()> {
        let missing: Vec<String> = cells
            .into_iter()
            .filter(|&c| self.get(c).is_none())
            .map(|c| c.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingCells(missing))
        }
    }

    /// Rows estimated from fewer than `threshold` samples, named by their
    /// first cell (e.g. `Pm_RR_0`).
    pub fn low_confidence_rows(&self, threshold: u64) -> Vec<(Cell, u64)> {
        let Some(_) = self.counts else {
            return Vec::new();
        };
        let mut rows = vec![Cell::Joint(0, 0)];
        rows.extend((0..9).map(|k| Cell::Msg(k / 3, k % 3, 0)));
        rows.into_iter()
            .filter_map(|c| {
                let n = self.row_samples(c)?;
                (n < threshold).then_some((c, n))
            })
            .collect()
    }

    /// Checks that entries lie in `[0, 1]` and each distribution sums to 1.
    pub fn validate(&self) -> Result<()> {
        let check_row = |name: String, row: &[f64]| -> Result<()> {
            if row.iter().any(|p| !(-1e-12..=1.0 + 1e-12).contains(p)) {
                return Err(Error::Parse(format!("{name} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Parse(format!("{name} sums to {s}")));
            }
            Ok(())
        };
        if let Some(p) = self.p_joint {
            check_row("P_ij".into(), &[p[0][0], p[0][1], p[1][0], p[1][1]])?;
        }
        for x in 0..3 {
            for y in 0..3 {
                if let Some(row) = self.p_msg[x][y] {
                    check_row(format!("Pm_{}{}", LABELS[x], LABELS[y]), &row)?;
                }
            }
        }
        Ok(())
    }

    /// The table seen after relabelling both parties' bits `0 ↔ 1`.
    pub fn relabeled(&self) -> ObservedStats {
        let swap = |x: usize| if x == R { R } else { 1 - x };
        let p_joint = self
            .p_joint
            .map(|p| std::array::from_fn(|i| std::array::from_fn(|j| p[1 - i][1 - j])));
        let p_msg = std::array::from_fn(|x| std::array::from_fn(|y| self.p_msg[swap(x)][swap(y)]));
        let counts = self.counts.map(|t| Tally {
            joint: std::array::from_fn(|i| std::array::from_fn(|j| t.joint[1 - i][1 - j])),
            msg: std::array::from_fn(|x| std::array::from_fn(|y| t.msg[swap(x)][swap(y)])),
        });
        ObservedStats {
            p_joint,
            p_msg,
            counts,
        }
    }

    /// Writes the `cell,value,count` table. Absent values are left empty;
    /// counts are `-` for closed-form tables.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cell,value,count")?;
        for cell in Cell::all() {
            let value = self.get(cell).map_or_else(String::new, |v| v.to_string());
            let count = self
                .count(cell)
                .map_or_else(|| "-".to_string(), |c| c.to_string());
            writeln!(out, "{cell},{value},{count}")?;
        }
        Ok(())
    }

    /// Reads a table written by [`ObservedStats::write_table`]. Cells that
    /// are omitted or empty become absent; a row with any absent cell is
    /// absent as a whole.
    pub fn read_table<R: BufRead>(input: R) -> Result<ObservedStats> {
        let mut joint = [[None; 2]; 2];
        let mut msg = [[[None; 4]; 3]; 3];
        let mut tally = Tally::default();
        let mut any_count = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty()
                || line.starts_with('#')
                || (lineno == 0 && line.starts_with("cell,"))
            {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 fields",
                    lineno + 1
                )));
            }
            let cell = Cell::parse(fields[0])?;
            let value =
                match fields[1] {
                    "" => None,
                    v => Some(v.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("line {}: bad value {v:?}", lineno + 1))
                    })?),
                };
            let count =
                match fields[2] {
                    "-" | "" => None,
                    c => Some(c.parse::<u64>().map_err(|_| {
                        Error::Parse(format!("line {}: bad count {c:?}", lineno + 1))
                    })?),
                };
            if let Some(c) = count {
                any_count = true;
                match cell {
                    Cell::Joint(i, j) => tally.joint[i][j] = c,
                    Cell::Msg(x, y, m) => tally.msg[x][y][m] = c,
                }
            }
            match cell {
                Cell::Joint(i, j) => joint[i][j] = value,
                Cell::Msg(x, y, m) => msg[x][y][m] = value,
            }
        }
        let collect4 = |row: [Option<f64>; 4]| -> Option<[f64; 4]> {
            Some([row[0]?, row[1]?, row[2]?, row[3]?])
        };
        let p_joint = (|| Some([[joint[0][0]?, joint[0][1]?], [joint[1][0]?, joint[1][1]?]]))();
        let stats = ObservedStats {
            p_joint,
            p_msg: msg.map(|r| r.map(collect4)),
            counts: any_count.then_some(tally),
        };
        stats.validate()?;
        Ok(stats)
    }
}

/// Tallies a sampled transcript.
pub fn tally(records: &[RoundRecord]) -> Result<ObservedStats> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Tally::from_records(records).to_stats())
}

fn check_q(name: &'static str, q: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&q) {
        return Err(Error::InvalidParameter {
            name,
            value: q,
            reason: "depolarization parameter must lie in [0, 0.5]",
        });
    }
    Ok(())
}

/// Closed-form statistics for an honest server with forward
/// depolarization `q_f` and reverse depolarization `q_r`.
pub fn predict_depolarization(q_f: f64, q_r: f64) -> Result<ObservedStats> {
    check_q("q_f", q_f)?;
    check_q("q_r", q_r)?;
    let same = 0.5 * (1.0 - q_f);
    let diff = 0.5 * q_f;
    let p_joint = [[same, diff], [diff, same]];

    // Z outcomes i == j: messages 0/1 carry 1 − Q_R, messages 2/3 carry Q_R
    let agree = [0.5 * (1.0 - q_r), 0.5 * (1.0 - q_r), 0.5 * q_r, 0.5 * q_r];
    let disagree = [0.5 * q_r, 0.5 * q_r, 0.5 * (1.0 - q_r), 0.5 * (1.0 - q_r)];

    let keep = (1.0 - 2.0 * q_r) * (1.0 - 2.0 * q_f);
    let rr_err = 0.5 * (1.0 - 2.0 * q_r) * q_f + 0.5 * q_r;
    let both_reflect = [keep + rr_err, rr_err, rr_err, rr_err];

    let mixed_err = 0.5 * ((1.0 - 2.0 * q_r) * q_f + q_r);
    let mixed_ok = 0.5 * (keep + (1.0 - 2.0 * q_r) * q_f + q_r);
    let one_reflect = [mixed_ok, mixed_ok, mixed_err, mixed_err];

    let mut p_msg = [[None; 3]; 3];
    for x in 0..3 {
        for y in 0..3 {
            p_msg[x][y] = Some(match (x, y) {
                (R, R) => both_reflect,
                (R, _) | (_, R) => one_reflect,
                (i, j) if i == j => agree,
                _ => disagree,
            });
        }
    }
    Ok(ObservedStats {
        p_joint: Some(p_joint),
        p_msg,
        counts: None,
    })
}

/// Exact statistics produced by an attack.
pub fn predict_from_attack(attack: &AttackModel) -> ObservedStats {
    let a = attack.alphas();
    let d = attack.dim_e();
    // probability of message m for the (unnormalized) superposition Σ c_ij e^m_ij
    let message_weight = |terms: &[(usize, usize, f64)], m: usize| -> f64 {
        (0..d)
            .map(|e| {
                terms
                    .iter()
                    .map(|&(i, j, c)| attack.vector(i, j, m)[e] * c)
                    .sum::<num_complex::Complex64>()
                    .norm_sqr()
            })
            .sum()
    };
    let row = |terms: &[(usize, usize, f64)]| -> Option<[f64; 4]> {
        let norm: f64 = terms.iter().map(|t| t.2 * t.2).sum();
        (norm > 0.0).then(|| std::array::from_fn(|m| message_weight(terms, m) / norm))
    };

    let mut p_msg = [[None; 3]; 3];
    for i in 0..2 {
        for j in 0..2 {
            p_msg[i][j] = row(&[(i, j, 1.0)]);
        }
    }
    for i in 0..2 {
        p_msg[i][R] = row(&[(i, 0, a[i][0]), (i, 1, a[i][1])]);
    }
    for j in 0..2 {
        p_msg[R][j] = row(&[(0, j, a[0][j]), (1, j, a[1][j])]);
    }
    p_msg[R][R] = row(&[
        (0, 0, a[0][0]),
        (0, 1, a[0][1]),
        (1, 0, a[1][0]),
        (1, 1, a[1][1]),
    ]);
    ObservedStats {
        p_joint: Some(a.map(|r| r.map(|x| x * x))),
        p_msg,
        counts: None,
    }
}
