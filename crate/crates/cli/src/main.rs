use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mhmt::channel::{ItiProfile, ProfileKind};
use mhmt::distance::DEFAULT_BUDGET;
use mhmt::eigen::EigenSystem;
use mhmt::signal::TargetPolynomial;
use mhmt::sim::{
    fmt_f, gain_trace_line, parse_grid, run_ber_sweep, run_dmin_table, run_gain_trace, run_sensitivity_sweep, write_csv,
    DminMode, DminRow, DminTable, GainInit, ResultRow, SimConfig, GAIN_TRACE_HEADER,
};

/// Multi-track ITI detection simulator.
#[derive(Parser)]
#[command(name = "mhmt", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// BER/FER against SNR for each detector.
    Ber(SimArgs),
    /// BER with the channel ITI offset from the detectors' nominal level.
    Sensitivity {
        #[command(flatten)]
        sim: SimArgs,
        /// Offsets, as start:stop:step or a comma list.
        #[arg(long, default_value = "-0.05:0.05:0.01", allow_hyphen_values = true)]
        delta: String,
    },
    /// Per-step gains and ITI estimates over one sector.
    Gaintrace(SimArgs),
    /// Minimum distance table.
    Dmin(DminArgs),
    /// Eigenvalues and eigenvectors of the neighbour matrix.
    Eigen {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Static,
    Sin,
}

#[derive(Args)]
struct SimArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated detector names.
    #[arg(long)]
    detectors: Option<String>,
    /// SNR grid in dB, as start:stop:step or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Sinusoid amplitude for `--profile sin`.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long)]
    sectors: Option<usize>,
    #[arg(long)]
    sector_len: Option<usize>,
    /// dicode, epr4 or taps=h0,h1,...
    #[arg(long)]
    target: Option<TargetPolynomial>,
    /// Number of tracks.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    training_len: Option<usize>,
    /// unit, nominal or trained.
    #[arg(long)]
    gain_init: Option<GainInit>,
    /// Stop a point once this many bit errors are seen.
    #[arg(long)]
    min_errors: Option<u64>,
    /// Record wall-clock time per point.
    #[arg(long)]
    timing: bool,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => SimConfig::default(),
        };
        if let Some(d) = &self.detectors {
            cfg.detectors = d.split(',').map(str::parse).collect::<Result<_, _>>()?;
        }
        if let Some(s) = &self.snr {
            cfg.snr_db = parse_grid(s)?;
        }
        let eps0 = self.eps0.unwrap_or(cfg.profile.eps0);
        cfg.profile = match (self.profile, cfg.profile.kind) {
            (Some(ProfileArg::Static), _) => ItiProfile { eps0, kind: ProfileKind::Static },
            (Some(ProfileArg::Sin), ProfileKind::Sinusoidal { amplitude, cycles }) => {
                ItiProfile { eps0, kind: ProfileKind::Sinusoidal { amplitude: self.amplitude.unwrap_or(amplitude), cycles } }
            }
            (Some(ProfileArg::Sin), ProfileKind::Static) => ItiProfile {
                eps0,
                kind: ProfileKind::Sinusoidal {
                    amplitude: self.amplitude.unwrap_or(ItiProfile::DEFAULT_AMPLITUDE),
                    cycles: ItiProfile::DEFAULT_CYCLES,
                },
            },
            (None, kind) => ItiProfile { eps0, kind },
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })* };
        }
        set!(seed, sectors, sector_len, target, n, training_len, gain_init);
        if self.delay.is_some() {
            cfg.delay = self.delay;
        }
        if self.beta.is_some() {
            cfg.beta = self.beta;
        }
        if self.min_errors.is_some() {
            cfg.min_errors = self.min_errors;
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.display().to_string());
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DminArgs {
    /// Track counts, comma-separated.
    #[arg(long, default_value = "2")]
    n: String,
    /// ITI grid (eps0 for mismatch rows).
    #[arg(long, default_value = "0:0.5:0.05")]
    eps: String,
    /// Offsets for the mismatch mode.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    delta: String,
    /// Comma-separated modes: ml, ssjd, mismatch, ml-closed, ssjd-closed,
    /// shst-opt, shst-conv, iti-free.
    #[arg(long, default_value = "ml,ssjd,shst-opt,shst-conv")]
    modes: String,
    #[arg(long, default_value = "dicode")]
    target: TargetPolynomial,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn sink(out: Option<&str>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {p}"))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_rows(cfg: &SimConfig, rows: Vec<ResultRow>) -> Result<()> {
    if rows.is_empty() {
        bail!("no result rows produced");
    }
    write_csv(sink(cfg.out.as_deref())?, ResultRow::HEADER, rows.iter().map(ResultRow::csv_line))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Ber(a) => {
            let cfg = a.config()?;
            emit_rows(&cfg, run_ber_sweep(&cfg)?)
        }
        Cmd::Sensitivity { sim, delta } => {
            let cfg = sim.config()?;
            emit_rows(&cfg, run_sensitivity_sweep(&cfg, &parse_grid(&delta)?)?)
        }
        Cmd::Gaintrace(a) => {
            let cfg = a.config()?;
            let trace = run_gain_trace(&cfg)?;
            write_csv(sink(cfg.out.as_deref())?, GAIN_TRACE_HEADER, trace.iter().map(gain_trace_line))?;
            Ok(())
        }
        Cmd::Dmin(a) => {
            let table = DminTable {
                n_list: a.n.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>().context("parsing --n")?,
                eps_grid: parse_grid(&a.eps)?,
                delta_grid: parse_grid(&a.delta)?,
                modes: a.modes.split(',').map(str::parse::<DminMode>).collect::<Result<_, _>>()?,
                target: a.target,
                max_len: a.max_len,
                budget: a.budget,
            };
            let cfg = SimConfig { jobs: a.jobs, ..SimConfig::default() };
            let rows = cfg.install(|| run_dmin_table(&table))??;
            if rows.is_empty() {
                bail!("no distance rows produced");
            }
            if rows.iter().any(|r| r.partial) {
                eprintln!("warning: search budget exhausted for some rows; their values are upper bounds");
            }
            let out = a.out.map(|p| p.display().to_string());
            write_csv(sink(out.as_deref())?, DminRow::HEADER, rows.iter().map(DminRow::csv_line))?;
            Ok(())
        }
        Cmd::Eigen { n, eps, out } => {
            let sys = EigenSystem::new(n)?;
            let lambda = sys.lambda(eps);
            let header = std::iter::once("j,lambda_hat,lambda".to_string())
                .chain((0..n).map(|i| format!("v{i}")))
                .collect::<Vec<_>>()
                .join(",");
            let lines = (0..n).map(|j| {
                let mut cols = vec![j.to_string(), fmt_f(sys.lambda_hat()[j]), fmt_f(lambda[j])];
                cols.extend((0..n).map(|i| fmt_f(sys.v(i, j))));
                cols.join(",")
            });
            let out = out.map(|p| p.display().to_string());
            write_csv(sink(out.as_deref())?, &header, lines)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
