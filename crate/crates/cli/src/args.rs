use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "msqkd",
    version,
    about = "Mediated semi-quantum key distribution laboratory"
)]
pub struct Cli {
    /// `key=value` configuration file; command-line flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the protocol and write a transcript and a statistics table
    Simulate(SimulateArgs),
    /// Key-rate report from closed-form or observed statistics
    Keyrate(KeyrateArgs),
    /// Key rate over a noise grid, as CSV
    Sweep(SweepArgs),
    /// Check the prepare-and-measure / entanglement-based equivalence
    ReduceCheck(ReduceCheckArgs),
    /// Print a statistics table
    Stats(StatsArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Forward-channel depolarization
    #[arg(long)]
    pub qf: Option<f64>,
    /// Reverse-channel depolarization
    #[arg(long)]
    pub qr: Option<f64>,
    /// Probability that a party chooses Measure-Resend
    #[arg(long)]
    pub pm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sample_fraction: Option<f64>,
    /// auto, flip or noflip
    #[arg(long)]
    pub mode: Option<String>,
    /// Collective attack (JSON) replacing the honest noisy server
    #[arg(long, value_name = "FILE")]
    pub attack: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub transcript: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct KeyrateArgs {
    #[arg(long)]
    pub qf: Option<f64>,
    #[arg(long)]
    pub qr: Option<f64>,
    /// Statistics table written by `simulate` or `stats`
    #[arg(long, value_name = "FILE", conflicts_with_all = ["qf", "qr"])]
    pub from_stats: Option<PathBuf>,
    /// Also write the report as a one-row CSV
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    #[arg(long)]
    pub q_max: Option<f64>,
    /// Grid intervals; the sweep has `steps + 1` rows
    #[arg(long)]
    pub steps: Option<usize>,
    /// Q_F = forward_mult · q
    #[arg(long)]
    pub forward_mult: Option<f64>,
    /// Q_R = reverse_mult · q
    #[arg(long)]
    pub reverse_mult: Option<f64>,
    /// Output CSV (standard output if omitted)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Compare rate columns (and a pinned threshold, if present) against this CSV
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,
    /// Prefix the output with the zero-rate threshold, for use as a baseline
    #[arg(long)]
    pub pin_threshold: bool,
}

#[derive(Debug, Args, Default)]
pub struct ReduceCheckArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    /// Ancilla dimension of the random attacks
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Protocol rounds N (1 or 2)
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Check one collective attack (JSON) instead of random ones
    #[arg(long, value_name = "FILE")]
    pub attack: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct StatsArgs {
    #[arg(long)]
    pub qf: Option<f64>,
    #[arg(long)]
    pub qr: Option<f64>,
    /// Tally a transcript written by `simulate`
    #[arg(long, value_name = "FILE", conflicts_with_all = ["qf", "qr", "attack"])]
    pub from_transcript: Option<PathBuf>,
    /// Exact statistics of a collective attack (JSON)
    #[arg(long, value_name = "FILE", conflicts_with_all = ["qf", "qr"])]
    pub attack: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
