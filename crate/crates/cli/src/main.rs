use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dopcap_cli::channels;
use dopcap_cli::config::ChannelSource;
use dopcap_cli::{run_sweep, validate, write_csv, write_metadata, BoundName, CliError, Config, SnrConvention, SweepOptions, ValidateOptions};
use dopcap_core::alignment;
use dopcap_core::matrix_io;
use dopcap_core::ofdm;

#[derive(Parser)]
#[command(name = "dopcap", version, about = "Capacity bounds for OFDM links with Doppler uncertainty")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// How `snr_db` maps to total power `P`.
    #[arg(long, global = true, value_enum)]
    snr_convention: Option<SnrConvention>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel matrices.
    Channel {
        #[command(subcommand)]
        action: ChannelCmd,
    },
    /// Bound sweeps.
    Bounds {
        #[command(subcommand)]
        action: BoundsCmd,
    },
    /// Aligning precoder diagnostics.
    Precoder {
        #[command(subcommand)]
        action: PrecoderCmd,
    },
    /// Run the self-check suite. Exits with 2 if any check fails.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Negative control: replace G by its transpose in the derivative check.
        #[arg(long)]
        inject_transposed_g: bool,
    },
    /// Sweep with the two-panel rate-vs-SNR layout (σ = 0.1 and 0.01).
    Figure {
        #[arg(long)]
        out: PathBuf,
        /// N = 1024 instead of 64. Slow.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Subcommand)]
enum ChannelCmd {
    /// Write F, G and H(f_d) in the text matrix format.
    Build {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Realization index.
        #[arg(long, default_value_t = 0)]
        realization: usize,
        /// Normalized Doppler for the exact channel H(f_d).
        #[arg(long, default_value_t = 0.01)]
        doppler: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Run a sweep and write CSV plus `<out>.meta.toml`.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Record per-cell wall time (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Subcommand)]
enum PrecoderCmd {
    /// Print construction diagnostics for one realization.
    Inspect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Command-line values that replace config keys.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<String>>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    tap_seed: Option<u64>,
    #[arg(long)]
    mc_seed: Option<u64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    f_file: Option<PathBuf>,
    #[arg(long)]
    g_file: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) -> Result<(), CliError> {
        let s = &mut cfg.sweep;
        if let Some(v) = &self.snr_db {
            s.snr_db = v.clone();
        }
        if let Some(v) = &self.sigma {
            s.sigma = v.clone();
        }
        if let Some(n) = self.n {
            s.n_subcarriers = n;
        }
        if let Some(names) = &self.bounds {
            s.bounds = names
                .iter()
                .filter(|b| !b.is_empty())
                .map(|b| BoundName::parse(b).ok_or_else(|| CliError::Config(format!("unknown bound `{b}`"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(r) = self.realizations {
            s.realizations = r;
        }
        if let Some(v) = self.tap_seed {
            cfg.channel.tap_seed = v;
        }
        if let Some(v) = self.mc_seed {
            cfg.mc.seed = v;
        }
        if let Some(v) = self.mc_samples {
            cfg.mc.samples = v;
        }
        if self.f_file.is_some() || self.g_file.is_some() {
            cfg.channel.source = ChannelSource::SyntheticFile;
            cfg.channel.f_file = self.f_file.clone();
            cfg.channel.g_file = self.g_file.clone();
        }
        Ok(())
    }
}

fn load_config(path: Option<&Path>, overrides: &Overrides, snr: Option<SnrConvention>) -> Result<Config, CliError> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    overrides.apply(&mut cfg)?;
    if let Some(conv) = snr {
        cfg.sweep.snr_convention = conv;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_to_file(cfg: &Config, out: &Path, opts: &SweepOptions) -> Result<(), CliError> {
    let rows = run_sweep(cfg, opts)?;
    let errors = rows.iter().filter(|r| r.is_error()).count();
    let file = fs::File::create(out)?;
    write_csv(&rows, std::io::BufWriter::new(file))?;
    write_metadata(cfg, opts, out)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    if errors > 0 {
        eprintln!("warning: {errors} rows carry an error marker");
    }
    Ok(())
}

fn channel_build(cfg: &Config, out_dir: &Path, k: usize, doppler: f64) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    let (f, g, h) = match cfg.channel.source {
        ChannelSource::NtnTdlA => {
            let real = channels::draw_realization(cfg, k)?;
            let (_, ocfg) = channels::ofdm_setup(cfg)?;
            let taps = real.taps.as_ref().expect("tap-based realization");
            let h = ofdm::full_channel(&ocfg, taps, doppler)?;
            (real.f, real.g, h)
        }
        ChannelSource::SyntheticFile => {
            let real = channels::load_file_pair(cfg)?;
            // Only the linear model is available for file channels.
            let h = &real.f + &real.g * dopcap_core::linalg::re(doppler);
            (real.f, real.g, h)
        }
    };
    for (name, m) in [("F.txt", &f), ("G.txt", &g), ("H.txt", &h)] {
        fs::write(out_dir.join(name), matrix_io::format_matrix(m))?;
    }
    println!("wrote F.txt, G.txt, H.txt ({n}x{n}, f_d={doppler}) to {}", out_dir.display(), n = f.nrows());
    Ok(())
}

fn precoder_inspect(cfg: &Config, k: usize) -> Result<(), CliError> {
    let real = match cfg.channel.source {
        ChannelSource::NtnTdlA => channels::draw_realization(cfg, k)?,
        ChannelSource::SyntheticFile => channels::load_file_pair(cfg)?,
    };
    let n = real.f.nrows();
    let ch = real.channel(0.0)?;
    let pre = alignment::build_precoder(&ch, cfg.alignment.rank_tol * n as f64)?;
    let pilot = alignment::choose_pilot_direction(ch.g(), &pre.u_perp);
    println!("n = {n}");
    println!("case = {:?}", pre.case);
    if let Some(t) = pre.t_star {
        println!("t_star = {} {}", t.re, t.im);
    }
    println!("d_perp = {}", pre.d_perp);
    println!("rank_ratio = {:e}", pre.rank_ratio);
    println!("leakage = {:e}", pre.leakage);
    println!("orthonormality = {:e}", pre.orthonormality);
    println!("pilot_gain = {:e}", pilot.gain);
    println!("pilot_observable = {}", pilot.observable);
    Ok(())
}

fn figure_config(path: Option<&Path>, overrides: &Overrides, snr: Option<SnrConvention>, full_scale: bool) -> Result<Config, CliError> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => {
            let mut cfg = Config::default();
            cfg.sweep.snr_db = (0..=8).map(|k| 5.0 * k as f64).collect();
            cfg.sweep.sigma = vec![0.1, 0.01];
            cfg
        }
    };
    if full_scale {
        eprintln!("warning: --full-scale runs N = 1024; expect hours of compute");
        cfg.sweep.n_subcarriers = 1024;
    }
    overrides.apply(&mut cfg)?;
    if let Some(conv) = snr {
        cfg.sweep.snr_convention = conv;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let snr = cli.snr_convention;
    match cli.command {
        Command::Channel {
            action: ChannelCmd::Build { config, out_dir, realization, doppler, overrides },
        } => {
            let cfg = load_config(config.as_deref(), &overrides, snr)?;
            channel_build(&cfg, &out_dir, realization, doppler)?;
        }
        Command::Bounds {
            action: BoundsCmd::Sweep { config, out, timing, overrides },
        } => {
            let cfg = load_config(config.as_deref(), &overrides, snr)?;
            sweep_to_file(&cfg, &out, &SweepOptions { timing })?;
        }
        Command::Precoder {
            action: PrecoderCmd::Inspect { config, realization, overrides },
        } => {
            let cfg = load_config(config.as_deref(), &overrides, snr)?;
            precoder_inspect(&cfg, realization)?;
        }
        Command::Validate { seed, inject_transposed_g } => {
            let checks = validate(&ValidateOptions {
                seed,
                corrupt_g: inject_transposed_g,
            });
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!(
                    "{} {} residual={:.3e} threshold={:.3e} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.residual,
                    c.threshold,
                    c.detail
                );
            }
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Figure { out, full_scale, config, overrides } => {
            let cfg = figure_config(config.as_deref(), &overrides, snr, full_scale)?;
            sweep_to_file(&cfg, &out, &SweepOptions::default())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
