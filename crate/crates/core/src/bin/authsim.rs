use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use authsim::channel::ChannelSetting;
use authsim::harness::{self, ExperimentConfig, HarnessError, EXIT_HOLDS, EXIT_VIOLATED};
use authsim::mac::{test_vectors, MacParameters};
use authsim::protocols::{Composition, CoreKind, Mutation};
use authsim::security::checks::CheckName;

/// Exhaustive checker for key post-processing over an abortable
/// authenticated channel.
#[derive(Parser)]
#[command(name = "authsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one property over the configured strategy space.
    Check {
        /// Property to check.
        #[arg(value_parser = parse_check)]
        name: CheckName,
        #[command(flatten)]
        flags: Flags,
    },
    /// Replay a single strategy and print the timed trace.
    Replay {
        /// Strategy file: lines of `direction index action [args]`.
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
        /// Pre-shared key value.
        #[arg(long)]
        key: Option<u64>,
        #[arg(long, value_enum)]
        setting: Option<SettingArg>,
    },
    /// Emit per-strategy security distances.
    Report {
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[command(flatten)]
        flags: Flags,
    },
    /// Print MAC test vectors.
    Vectors {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        mac_k: u32,
        #[arg(long, default_value_t = 2)]
        mac_blocks: usize,
    },
}

#[derive(Args, Default)]
struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Core protocol; every core when omitted.
    #[arg(long, value_parser = parse_core)]
    core: Option<CoreKind>,
    /// Core-phase message budget.
    #[arg(long)]
    messages: Option<u32>,
    /// Payload alphabet size.
    #[arg(long)]
    alphabet: Option<u8>,
    #[arg(long)]
    key_bits: Option<u32>,
    /// Refuse strategy spaces larger than this.
    #[arg(long)]
    cap: Option<u128>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inject a protocol defect as a negative control.
    #[arg(long = "mutate", value_parser = parse_mutation)]
    mutation: Option<Mutation>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    mac_k: Option<u32>,
    #[arg(long)]
    mac_blocks: Option<usize>,
    /// Correct-copy lag in the virtual setting; repeatable.
    #[arg(long = "virtual-lag")]
    virtual_lags: Vec<u64>,
    #[arg(long, value_enum)]
    composition: Option<CompositionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Practical,
    Honest,
    Virtual,
    Insecure,
}

impl From<SettingArg> for ChannelSetting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Practical => ChannelSetting::Practical,
            SettingArg::Honest => ChannelSetting::Honest,
            SettingArg::Virtual => ChannelSetting::Virtual,
            SettingArg::Insecure => ChannelSetting::Insecure,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CompositionArg {
    Core,
    Confirmed,
    Delayed,
}

impl From<CompositionArg> for Composition {
    fn from(c: CompositionArg) -> Self {
        match c {
            CompositionArg::Core => Composition::Core,
            CompositionArg::Confirmed => Composition::Confirmed,
            CompositionArg::Delayed => Composition::Delayed,
        }
    }
}

fn parse_check(s: &str) -> Result<CheckName, String> {
    s.parse()
}

fn parse_core(s: &str) -> Result<CoreKind, String> {
    s.parse()
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    s.parse()
}

impl Flags {
    fn config(self) -> Result<ExperimentConfig, HarnessError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.overlay(ExperimentConfig {
            core: self.core,
            alphabet: self.alphabet,
            messages: self.messages,
            key_bits: self.key_bits,
            cap: self.cap,
            seed: self.seed,
            mutation: self.mutation,
            output: self.output,
            mac_k: self.mac_k,
            mac_blocks: self.mac_blocks,
            virtual_lags: (!self.virtual_lags.is_empty()).then_some(self.virtual_lags),
            composition: self.composition.map(Into::into),
            setting: None,
            key: None,
        }))
    }
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Check { name, flags } => {
            let cfg = flags.config()?;
            let report = harness::check(name, &cfg.params()?)?;
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "{}", report.summary());
            for c in &report.counterexamples {
                let _ = writeln!(err, "  counterexample [{}] {}: {}", c.core, c.strategy, c.detail);
            }
            harness::write_output(cfg.output.as_deref(), &harness::to_json(&report)?)?;
            Ok(if report.holds { EXIT_HOLDS } else { EXIT_VIOLATED })
        }
        Command::Replay { file, flags, key, setting } => {
            let mut cfg = flags.config()?;
            cfg.key = key.or(cfg.key);
            cfg.setting = setting.map(Into::into).or(cfg.setting);
            let text =
                std::fs::read_to_string(&file).map_err(|source| HarnessError::Io { path: file.clone(), source })?;
            let (_, trace) = harness::replay(&text, &cfg)?;
            harness::write_output(cfg.output.as_deref(), &trace)?;
            Ok(EXIT_HOLDS)
        }
        Command::Report { format, flags } => {
            let cfg = flags.config()?;
            let reports = harness::security_reports(&cfg)?;
            let text = match format {
                Format::Json => harness::to_json(&reports)?,
                Format::Csv => harness::reports_csv(&reports)?,
            };
            harness::write_output(cfg.output.as_deref(), text.trim_end())?;
            Ok(EXIT_HOLDS)
        }
        Command::Vectors { count, seed, mac_k, mac_blocks } => {
            let params = MacParameters::new(mac_k, mac_blocks).map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vectors = test_vectors(&params, count, &mut rng).map_err(|e| HarnessError::Config(e.to_string()))?;
            let text: Vec<String> = vectors.iter().map(ToString::to_string).collect();
            harness::write_output(None, &text.join("\n"))?;
            Ok(EXIT_HOLDS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
