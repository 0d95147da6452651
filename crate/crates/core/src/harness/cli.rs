use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{beta_db_for_rate, parse_config};
use super::output::{emit_results, to_csv, to_json, OutputFormat, RunManifest, SweepSettings};
use super::validate::run_validation;
use crate::error::{Error, Result};
use crate::mac_analytics::{
    ps_carrier_sense, ps_exact, ps_nakagami_mc, CsConfig, Interferer, LinkScenario, PsEstimate,
    SlotMode,
};
use crate::propagation::{db_to_linear, interference_radius, FadingModel, PathLoss};
use crate::safety_sim::{
    access_grid, estimate_collision_probability, sweep_channel_access, ChainScenario,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "vanet-safety",
    version,
    about = "Safety-broadcast packet success and rear-end collision experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Packet-success probability of one link.
    Ps(PsArgs),
    /// Interference radius of one link.
    Radius(RadiusArgs),
    /// Mean collision probability of one scenario.
    Sim(SimArgs),
    /// Collision probability over a grid of access probabilities.
    Sweep(SweepArgs),
    /// Run the oracle cross-checks.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FadingArg {
    None,
    Rayleigh,
    Nakagami,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Independent,
    Cs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SlotArg {
    Sync,
    Async,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    #[arg(long, value_enum, default_value = "rayleigh")]
    fading: FadingArg,
    /// Nakagami shape; implies `--fading nakagami` when given alone.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// SIR threshold in dB.
    #[arg(long, conflicts_with_all = ["beta", "rate"])]
    beta_db: Option<f64>,
    /// Linear SIR threshold.
    #[arg(long, conflicts_with = "rate")]
    beta: Option<f64>,
    /// Data rate in Mbps; selects the threshold from the built-in table.
    #[arg(long)]
    rate: Option<f64>,
    /// Link distance, meters.
    #[arg(long, default_value_t = 25.0)]
    r: f64,
}

impl ChannelArgs {
    fn fading(&self) -> Result<FadingModel> {
        match (self.fading, self.m) {
            (FadingArg::None, None) => Ok(FadingModel::NoFading),
            (FadingArg::None, Some(_)) => Err(Error::Validation("--m needs a fading law".into())),
            (FadingArg::Rayleigh, None | Some(1)) => Ok(FadingModel::RAYLEIGH),
            (_, Some(m)) => FadingModel::nakagami(m),
            (FadingArg::Nakagami, None) => {
                Err(Error::Validation("--fading nakagami needs --m".into()))
            }
        }
    }

    fn beta(&self) -> Result<f64> {
        match (self.beta_db, self.beta, self.rate) {
            (Some(db), _, _) => Ok(db_to_linear(db)),
            (_, Some(b), _) => Ok(b),
            (_, _, Some(rate)) => beta_db_for_rate(rate)
                .map(db_to_linear)
                .ok_or_else(|| Error::Validation(format!("no built-in threshold for {rate} Mbps"))),
            (None, None, None) => Ok(db_to_linear(8.0)),
        }
    }
}

#[derive(Debug, Args)]
struct PsArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Interferers as `distance[:access]`, distances from the receiver.
    #[arg(long, value_delimiter = ',')]
    interferers: Vec<String>,
    /// Access probability of interferers given without one, and of the
    /// lattice under carrier sensing.
    #[arg(long, default_value_t = 0.05)]
    access: f64,
    #[arg(long, value_enum, default_value = "independent")]
    scheme: SchemeArg,
    /// Carrier-sensing radius in meters, or `optimal`.
    #[arg(long, default_value = "optimal")]
    r_cs: String,
    /// Lattice spacing for carrier sensing, meters.
    #[arg(long, default_value_t = 25.0)]
    spacing: f64,
    #[arg(long, value_enum, default_value = "sync")]
    slot_mode: SlotArg,
    /// Estimate by sampling instead of evaluating exactly.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RadiusArgs {
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl RunArgs {
    fn scenario(&self) -> Result<ChainScenario> {
        match &self.config {
            Some(p) => parse_config(p),
            None => Ok(ChainScenario::default()),
        }
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Overrides the scenario's access probability.
    #[arg(long)]
    access: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Access grid as `start:stop:step`.
    #[arg(long, default_value = "0.01:0.20:0.01")]
    grid: String,
    /// Nakagami shapes to sweep; 1 is Rayleigh.
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    fadings: Vec<u32>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on usage errors, 2 on validation failures.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::Io(_) => EXIT_USAGE,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

fn run(cmd: Command, out: &mut impl Write) -> Result<i32> {
    match cmd {
        Command::Ps(a) => ps(&a, out)?,
        Command::Radius(a) => {
            let r_i = interference_radius(
                a.channel.r,
                a.channel.beta()?,
                PathLoss::new(a.channel.alpha)?,
                a.channel.fading()?,
            )?;
            writeln!(out, "{r_i:.2} m")?;
        }
        Command::Sim(a) => {
            let mut sc = a.run.scenario()?;
            if let Some(p) = a.access {
                sc.access = p;
            }
            let est = estimate_collision_probability(&sc, a.run.trials, a.run.seed, a.run.workers)?;
            writeln!(
                out,
                "mean collision probability {:.5} ± {:.5} (95% CI, {} trials)",
                est.mean, est.ci_halfwidth, est.trials
            )?;
            if est.cap_hits > 0 {
                writeln!(out, "attempt cap reached {} times", est.cap_hits)?;
            }
        }
        Command::Sweep(a) => sweep(&a, out)?,
        Command::Validate { seed } => {
            let checks = run_validation(seed);
            let mut ok = true;
            for c in &checks {
                writeln!(
                    out,
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )?;
                ok &= c.passed;
            }
            return Ok(if ok { EXIT_OK } else { EXIT_VALIDATION });
        }
    }
    Ok(EXIT_OK)
}

fn parse_interferer(text: &str, default_access: f64) -> Result<Interferer> {
    let bad = || Error::Validation(format!("interferer `{text}` is not `distance[:access]`"));
    let (d, p) = match text.split_once(':') {
        Some((d, p)) => (d, Some(p)),
        None => (text, None),
    };
    Ok(Interferer {
        distance: d.trim().parse().map_err(|_| bad())?,
        access: match p {
            Some(p) => p.trim().parse().map_err(|_| bad())?,
            None => default_access,
        },
    })
}

fn ps(a: &PsArgs, out: &mut impl Write) -> Result<()> {
    let slot_mode = match a.slot_mode {
        SlotArg::Sync => SlotMode::Synchronous,
        SlotArg::Async => SlotMode::Asynchronous,
    };
    let mut interferers = a
        .interferers
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_interferer(s, a.access))
        .collect::<Result<Vec<_>>>()?;
    let fading = a.channel.fading()?;
    let beta = a.channel.beta()?;
    let path_loss = PathLoss::new(a.channel.alpha)?;

    let estimate = match a.scheme {
        SchemeArg::Independent => {
            for it in &mut interferers {
                it.access = slot_mode.interferer_access(it.access, Default::default());
            }
            let link = LinkScenario {
                distance: a.channel.r,
                interferers,
                beta,
                path_loss,
                fading,
            };
            match a.samples {
                Some(n) => ps_nakagami_mc(&link, n, &mut ChaCha8Rng::seed_from_u64(a.seed))?,
                None if fading == FadingModel::NoFading => {
                    return Err(Error::Validation(
                        "exact evaluation needs fading; pass --samples".into(),
                    ))
                }
                None => PsEstimate::exact(ps_exact(&link)?),
            }
        }
        SchemeArg::Cs => {
            let link = LinkScenario {
                distance: a.channel.r,
                interferers: vec![Interferer {
                    distance: a.spacing,
                    access: a.access,
                }],
                beta,
                path_loss,
                fading,
            };
            let r_cs = if a.r_cs.eq_ignore_ascii_case("optimal") {
                a.channel.r + interference_radius(a.channel.r, beta, path_loss, fading)?
            } else {
                a.r_cs.parse().map_err(|_| {
                    Error::Validation(format!("--r-cs `{}` is not a number or `optimal`", a.r_cs))
                })?
            };
            let cs = CsConfig {
                sensing_radius: r_cs,
                slot_mode,
                tx_access: a.access,
                async_rule: Default::default(),
            };
            ps_carrier_sense(&link, &cs, a.spacing)?
        }
    };
    if estimate.samples > 0 {
        writeln!(
            out,
            "{:?} ± {:.2e} (standard error, {} samples)",
            estimate.value, estimate.std_error, estimate.samples
        )?;
    } else {
        writeln!(out, "{:?}", estimate.value)?;
    }
    Ok(())
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Validation(format!("grid `{text}` is not start:stop:step")))?;
    match parts[..] {
        [p] => Ok(vec![p]),
        [start, stop, step] if step > 0.0 && stop >= start => Ok(access_grid(start, stop, step)),
        _ => Err(Error::Validation(format!(
            "grid `{text}` is not start:stop:step"
        ))),
    }
}

fn sweep(a: &SweepArgs, out: &mut impl Write) -> Result<()> {
    let sc = a.run.scenario()?;
    let grid = parse_grid(&a.grid)?;
    let fadings = a
        .fadings
        .iter()
        .map(|&m| FadingModel::nakagami(m))
        .collect::<Result<Vec<_>>>()?;
    let result = sweep_channel_access(
        &sc,
        &grid,
        &fadings,
        a.run.trials,
        a.run.seed,
        a.run.workers,
    )?;
    let manifest = RunManifest::new(sc, a.run.seed).with_sweep(SweepSettings {
        grid,
        fading_m: a.fadings.clone(),
        trials: a.run.trials,
    });
    match &a.out {
        Some(path) => emit_results(&result, &manifest, a.format, path)?,
        None => match a.format {
            OutputFormat::Csv => out.write_all(to_csv(&result).as_bytes())?,
            OutputFormat::Json => out.write_all(to_json(&result, &manifest)?.as_bytes())?,
        },
    }
    Ok(())
}
