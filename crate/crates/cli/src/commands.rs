//! Subcommand implementations. Each writes its report to `out` and
//! warnings to `err`, so the binary and the tests drive the same code.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use msqkd::keyrate::{depolarizing_key_rate, key_rate, zero_rate_threshold};
use msqkd::protocol::{
    extract_raw_key, read_transcript, resolve_mode, run_protocol, write_transcript,
};
use msqkd::reduction::{verify_equivalence, BasisChoice, EquivalenceResult, GeneralAttack};
use msqkd::rng::{derive_seed, stream_rng};
use msqkd::stats::{predict_depolarization, predict_from_attack, tally, LOW_CONFIDENCE_SAMPLES};
use msqkd::{AttackModel, ModePolicy, Noise, ObservedStats, ProtocolConfig};
use rayon::prelude::*;

use crate::args::{Cli, Command, KeyrateArgs, ReduceCheckArgs, SimulateArgs, StatsArgs, SweepArgs};
use crate::config::ConfigFile;
use crate::format::{mode_token, report_row, report_text, sig9, SWEEP_HEADER};
use crate::{CliError, CliResult};

pub const DEFAULT_ROUNDS: u64 = 10_000;
pub const DEFAULT_P_MEASURE: f64 = 0.5;
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.1;
pub const DEFAULT_Q_MAX: f64 = 0.25;
pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_DIM: usize = 4;

/// Fidelity tolerance of `reduce-check`.
pub const EQUIVALENCE_TOL: f64 = 1e-9;
/// Allowed drift of rate columns against a baseline.
pub const BASELINE_RATE_TOL: f64 = 1e-6;
/// Bisection tolerance of the zero-rate threshold, and its allowed drift.
pub const THRESHOLD_TOL: f64 = 1e-4;

const Q_STAR_PREFIX: &str = "# q_star=";

pub fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(a, &cfg, out, err),
        Command::Keyrate(a) => keyrate(a, &cfg, out, err),
        Command::Sweep(a) => sweep(a, &cfg, out, err),
        Command::ReduceCheck(a) => reduce_check(a, &cfg, out),
        Command::Stats(a) => stats(a, &cfg, out, err),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(CliError::file(path))?,
    ))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(CliError::file(path))?,
    ))
}

pub fn load_attack(path: &Path) -> CliResult<AttackModel> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn warn_low_confidence(stats: &ObservedStats, err: &mut dyn Write) -> CliResult<()> {
    for (cell, n) in stats.low_confidence_rows(LOW_CONFIDENCE_SAMPLES) {
        writeln!(
            err,
            "warning: row {cell} rests on {n} samples (< {LOW_CONFIDENCE_SAMPLES})"
        )?;
    }
    Ok(())
}

fn noise_from(qf: Option<f64>, qr: Option<f64>, attack: Option<PathBuf>) -> CliResult<Noise> {
    match attack {
        Some(_) if qf.is_some() || qr.is_some() => Err(CliError::Invalid(
            "--attack replaces the depolarizing channels; drop --qf/--qr".into(),
        )),
        Some(path) => Ok(Noise::attack(load_attack(&path)?)),
        None => Ok(Noise::depolarizing(qf.unwrap_or(0.0), qr.unwrap_or(0.0))?),
    }
}

pub fn simulate(
    a: &SimulateArgs,
    c: &ConfigFile,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let rounds = c.pick_or(a.rounds, "rounds", DEFAULT_ROUNDS)?;
    let p_m = c.pick_or(a.pm, "pm", DEFAULT_P_MEASURE)?;
    let fraction = c.pick_or(
        a.sample_fraction,
        "sample_fraction",
        DEFAULT_SAMPLE_FRACTION,
    )?;
    let seed = c.seed(a.seed)?;
    let policy: ModePolicy = match c.pick(a.mode.clone(), "mode")? {
        Some(s) => s.parse()?,
        None => ModePolicy::default(),
    };
    let noise = noise_from(
        c.pick(a.qf, "qf")?,
        c.pick(a.qr, "qr")?,
        c.pick(a.attack.clone(), "attack")?,
    )?;
    let transcript_path = c.pick_or(
        a.transcript.clone(),
        "transcript",
        PathBuf::from("transcript.csv"),
    )?;
    let stats_path = c.pick_or(a.stats.clone(), "stats", PathBuf::from("stats.csv"))?;

    let cfg = ProtocolConfig::new(rounds, p_m, fraction, noise, seed)?.with_mode_policy(policy);
    let run = run_protocol(&cfg)?;

    let mut t = create(&transcript_path)?;
    write_transcript(&run.records, &mut t).map_err(CliError::file(&transcript_path))?;
    t.flush().map_err(CliError::file(&transcript_path))?;
    let mut s = create(&stats_path)?;
    run.stats
        .write_table(&mut s)
        .map_err(CliError::file(&stats_path))?;
    s.flush().map_err(CliError::file(&stats_path))?;

    warn_low_confidence(&run.stats, err)?;
    writeln!(out, "rounds={rounds}")?;
    writeln!(out, "seed={seed}")?;
    writeln!(out, "sampled={}", run.sampling.flagged)?;
    writeln!(out, "abort={}", run.sampling.abort)?;
    writeln!(out, "transcript={}", transcript_path.display())?;
    writeln!(out, "stats={}", stats_path.display())?;
    if run.sampling.abort {
        return Err(CliError::Aborted);
    }
    match resolve_mode(policy, &run.stats) {
        Ok(mode) => {
            let key = extract_raw_key(&run.records, mode);
            writeln!(out, "mode={}", mode_token(mode))?;
            writeln!(out, "raw_key_bits={}", key.len())?;
            writeln!(out, "raw_key_mismatches={}", key.mismatches())?;
        }
        Err(e) => writeln!(out, "mode=undetermined ({e})")?,
    }
    Ok(())
}

fn write_csv(path: &Path, rows: &[Vec<String>], preamble: Option<&str>) -> CliResult<()> {
    let mut file = create(path)?;
    write_rows(&mut file, rows, preamble).map_err(|e| match e {
        CliError::Io(source) => CliError::file(path)(source),
        other => other,
    })?;
    file.flush().map_err(CliError::file(path))
}

fn write_rows(out: &mut dyn Write, rows: &[Vec<String>], preamble: Option<&str>) -> CliResult<()> {
    if let Some(p) = preamble {
        writeln!(out, "{p}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Invalid(format!("csv: {other:?}")),
    }
}

pub fn keyrate(
    a: &KeyrateArgs,
    c: &ConfigFile,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let from_stats = c.pick(a.from_stats.clone(), "from_stats")?;
    let (stats, qf, qr) = match from_stats {
        Some(path) => {
            let stats = ObservedStats::read_table(open(&path)?)?;
            warn_low_confidence(&stats, err)?;
            (stats, None, None)
        }
        None => {
            let qf = c.pick_or(a.qf, "qf", 0.0)?;
            let qr = c.pick_or(a.qr, "qr", 0.0)?;
            (predict_depolarization(qf, qr)?, Some(qf), Some(qr))
        }
    };
    let report = key_rate(&stats)?;
    out.write_all(report_text(&report).as_bytes())?;
    if let Some(path) = c.pick(a.csv.clone(), "csv")? {
        write_csv(&path, &[report_row(None, qf, qr, &report)], None)?;
    }
    Ok(())
}

struct SweepPlan {
    q_max: f64,
    steps: usize,
    forward: f64,
    reverse: f64,
}

impl SweepPlan {
    fn from_args(a: &SweepArgs, c: &ConfigFile) -> CliResult<Self> {
        let forward = c.pick_or(a.forward_mult, "forward_mult", 1.0)?;
        let reverse = c.pick_or(a.reverse_mult, "reverse_mult", 1.0)?;
        if !(forward >= 0.0 && reverse >= 0.0 && forward.is_finite() && reverse.is_finite()) {
            return Err(CliError::Invalid(
                "multipliers must be finite and non-negative".into(),
            ));
        }
        let cap = 0.5 / forward.max(reverse);
        let q_max = c.pick_or(a.q_max, "q_max", DEFAULT_Q_MAX.min(cap))?;
        let steps = c.pick_or(a.steps, "steps", DEFAULT_STEPS)?;
        if steps == 0 {
            return Err(CliError::Invalid("steps must be at least 1".into()));
        }
        if q_max.is_nan() || q_max < 0.0 || q_max * forward.max(reverse) > 0.5 {
            return Err(CliError::Invalid(format!(
                "q_max = {q_max} puts a channel outside [0, 0.5] (largest allowed {cap})"
            )));
        }
        Ok(Self {
            q_max,
            steps,
            forward,
            reverse,
        })
    }

    fn grid(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| self.q_max * k as f64 / self.steps as f64)
            .collect()
    }

    fn threshold(&self) -> CliResult<f64> {
        let hi = 0.5 / self.forward.max(self.reverse);
        Ok(zero_rate_threshold(
            self.forward,
            self.reverse,
            0.0,
            hi,
            THRESHOLD_TOL,
        )?)
    }
}

pub fn sweep(
    a: &SweepArgs,
    c: &ConfigFile,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let plan = SweepPlan::from_args(a, c)?;
    let rows = plan
        .grid()
        .into_par_iter()
        .map(|q| {
            let (qf, qr) = (plan.forward * q, plan.reverse * q);
            depolarizing_key_rate(qf, qr).map(|r| report_row(Some(q), Some(qf), Some(qr), &r))
        })
        .collect::<msqkd::Result<Vec<_>>>()?;

    let preamble = if a.pin_threshold {
        Some(format!("{Q_STAR_PREFIX}{}", sig9(plan.threshold()?)))
    } else {
        None
    };
    match c.pick(a.out.clone(), "out")? {
        Some(path) => write_csv(&path, &rows, preamble.as_deref())?,
        None => write_rows(out, &rows, preamble.as_deref())?,
    }

    if let Some(path) = c.pick(a.baseline.clone(), "baseline")? {
        let baseline = Baseline::read(&path)?;
        let mut drift = baseline.compare_rows(&rows);
        if let Some(pinned) = baseline.q_star {
            let q_star = plan.threshold()?;
            if (q_star - pinned).abs() > THRESHOLD_TOL {
                drift.push(format!(
                    "q_star {} differs from pinned {}",
                    sig9(q_star),
                    sig9(pinned)
                ));
            }
        }
        if !drift.is_empty() {
            return Err(CliError::Drift(drift));
        }
        writeln!(err, "baseline {}: no drift", path.display())?;
    }
    Ok(())
}

/// A sweep CSV used as a regression reference, optionally carrying a
/// pinned zero-rate threshold on a leading `# q_star=` line.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub q_star: Option<f64>,
    pub rows: Vec<Vec<String>>,
}

impl Baseline {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::file(path))?;
        Self::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut q_star = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some(v) = line.strip_prefix(Q_STAR_PREFIX) {
                q_star = Some(
                    v.trim()
                        .parse()
                        .map_err(|e| CliError::Invalid(format!("q_star: {e}")))?,
                );
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_error)?.clone();
        if header.iter().ne(SWEEP_HEADER) {
            return Err(CliError::Invalid(format!("unexpected header {header:?}")));
        }
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(csv_error)?;
        Ok(Self { q_star, rows })
    }

    /// Drift messages for rate columns differing by more than the tolerance.
    pub fn compare_rows(&self, rows: &[Vec<String>]) -> Vec<String> {
        if rows.len() != self.rows.len() {
            return vec![format!(
                "{} rows, baseline has {}",
                rows.len(),
                self.rows.len()
            )];
        }
        let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        let mut drift = Vec::new();
        for (k, (new, old)) in rows.iter().zip(&self.rows).enumerate() {
            if (num(&new[0]) - num(&old[0])).abs() > 1e-12 {
                drift.push(format!("row {k}: q {} vs baseline {}", new[0], old[0]));
                continue;
            }
            for col in 6..=8 {
                let (x, y) = (num(&new[col]), num(&old[col]));
                // NaN (unparsable field) counts as drift
                if (x - y).abs().is_nan() || (x - y).abs() > BASELINE_RATE_TOL {
                    drift.push(format!(
                        "row {k} (q={}): {} {} vs baseline {}",
                        new[0], SWEEP_HEADER[col], new[col], old[col]
                    ));
                }
            }
        }
        drift
    }
}

fn bits(theta: &[bool]) -> String {
    theta.iter().map(|&t| if t { '1' } else { '0' }).collect()
}

pub fn reduce_check(a: &ReduceCheckArgs, c: &ConfigFile, out: &mut dyn Write) -> CliResult<()> {
    let trials = c.pick_or(a.trials, "trials", DEFAULT_TRIALS)?;
    let dim = c.pick_or(a.dim, "dim", DEFAULT_DIM)?;
    let rounds = c.pick_or(a.rounds, "rounds", 1)?;
    let seed = c.seed(a.seed)?;

    // (trial, attack seed, choice, result)
    let cases: Vec<(usize, Option<u64>, BasisChoice, EquivalenceResult)> =
        match c.pick(a.attack.clone(), "attack")? {
            Some(path) => {
                let attack = GeneralAttack::from_collective(&load_attack(&path)?)?;
                BasisChoice::all(1)
                    .into_iter()
                    .map(|ch| {
                        Ok((
                            0,
                            None,
                            ch.clone(),
                            verify_equivalence(&attack, &ch, EQUIVALENCE_TOL)?,
                        ))
                    })
                    .collect::<msqkd::Result<_>>()?
            }
            None => {
                let choices = BasisChoice::all(rounds.clamp(1, 2));
                let per_trial = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let s = derive_seed(seed, t as u64);
                        let attack = GeneralAttack::random(rounds, dim, &mut stream_rng(s, 0))?;
                        choices
                            .iter()
                            .map(|ch| {
                                Ok((
                                    t,
                                    Some(s),
                                    ch.clone(),
                                    verify_equivalence(&attack, ch, EQUIVALENCE_TOL)?,
                                ))
                            })
                            .collect::<msqkd::Result<Vec<_>>>()
                    })
                    .collect::<msqkd::Result<Vec<_>>>()?;
                per_trial.into_iter().flatten().collect()
            }
        };

    let mut failures = 0;
    for (t, s, ch, r) in cases.iter().filter(|case| !case.3.passed) {
        failures += 1;
        let seed_field = s.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "FAIL trial={t} seed={seed_field} theta_a={} theta_b={} fidelity={} non_abort_prob={} abort_only={}",
            bits(&ch.theta_a),
            bits(&ch.theta_b),
            sig9(r.fidelity),
            sig9(r.non_abort_prob),
            r.abort_only
        )?;
    }
    let min = |f: fn(&EquivalenceResult) -> f64| {
        cases
            .iter()
            .map(|c| f(&c.3))
            .reduce(f64::min)
            .map(sig9)
            .unwrap_or_else(|| "-".into())
    };
    writeln!(out, "cases={}", cases.len())?;
    writeln!(out, "failures={failures}")?;
    writeln!(out, "min_fidelity={}", min(|r| r.fidelity))?;
    writeln!(out, "min_non_abort_prob={}", min(|r| r.non_abort_prob))?;
    if failures > 0 {
        return Err(CliError::CheckFailed {
            failures,
            cases: cases.len(),
        });
    }
    Ok(())
}

pub fn stats(
    a: &StatsArgs,
    c: &ConfigFile,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let stats = if let Some(path) = c.pick(a.from_transcript.clone(), "from_transcript")? {
        let records = read_transcript(open(&path)?)?;
        tally(&records)?
    } else if let Some(path) = c.pick(a.attack.clone(), "attack")? {
        predict_from_attack(&load_attack(&path)?)
    } else {
        predict_depolarization(c.pick_or(a.qf, "qf", 0.0)?, c.pick_or(a.qr, "qr", 0.0)?)?
    };
    warn_low_confidence(&stats, err)?;
    match c.pick(a.out.clone(), "out")? {
        Some(path) => {
            let mut f = create(&path)?;
            stats.write_table(&mut f).map_err(CliError::file(&path))?;
            f.flush().map_err(CliError::file(&path))?;
        }
        None => stats.write_table(&mut *out)?,
    }
    Ok(())
}
