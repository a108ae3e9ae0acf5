//! Experiment configuration, check dispatch, report emission and the
//! human-readable replay trace behind the `authsim` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{parse_strategy, ParseError, DEFAULT_CAP};
use crate::channel::{ChannelSetting, Medium};
use crate::core_model::{Bits, KeyRegister, ObservationKind, Outcome, Phase};
use crate::mac::{self, MacParameters};
use crate::protocols::{run_composed, Composition, CoreKind, Ctx, Mutation};
use crate::security::checks::{
    composed_space, core_space, delayed_space, honest_space, run_check, CheckName, CheckParams, CheckReport,
};
use crate::security::{epsilon_secure, SecurityError, SecurityReport};

/// Process exit statuses.
pub const EXIT_HOLDS: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Largest key length whose 2^n keys are enumerated exactly.
const MAX_KEY_BITS: u32 = 8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("strategy file: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

/// Every tunable; all optional so that a JSON file and command-line flags
/// can be layered, flags last.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub core: Option<CoreKind>,
    pub alphabet: Option<u8>,
    pub messages: Option<u32>,
    pub key_bits: Option<u32>,
    pub cap: Option<u128>,
    pub seed: Option<u64>,
    pub mutation: Option<Mutation>,
    pub output: Option<PathBuf>,
    pub mac_k: Option<u32>,
    pub mac_blocks: Option<usize>,
    pub virtual_lags: Option<Vec<u64>>,
    pub composition: Option<Composition>,
    pub setting: Option<ChannelSetting>,
    /// Pre-shared key value used by `replay`.
    pub key: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// `other`'s set fields win.
    pub fn overlay(self, other: ExperimentConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ExperimentConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            core,
            alphabet,
            messages,
            key_bits,
            cap,
            seed,
            mutation,
            output,
            mac_k,
            mac_blocks,
            virtual_lags,
            composition,
            setting,
            key
        )
    }

    pub fn params(&self) -> Result<CheckParams, HarnessError> {
        let d = CheckParams::default();
        let p = CheckParams {
            cores: self.core.map_or(d.cores, |c| vec![c]),
            messages: self.messages.unwrap_or(d.messages),
            key_bits: self.key_bits.unwrap_or(d.key_bits),
            alphabet: self.alphabet.unwrap_or(d.alphabet),
            mutation: self.mutation,
            cap: self.cap.unwrap_or(DEFAULT_CAP),
            mac_k: self.mac_k.unwrap_or(d.mac_k),
            mac_blocks: self.mac_blocks.unwrap_or(d.mac_blocks),
            virtual_lags: self.virtual_lags.clone().unwrap_or(d.virtual_lags),
            seed: self.seed.unwrap_or(d.seed),
        };
        validate(&p)?;
        Ok(p)
    }
}

fn validate(p: &CheckParams) -> Result<(), HarnessError> {
    let bad = |m: String| Err(HarnessError::Config(m));
    if p.messages == 0 {
        return bad("messages must be positive".into());
    }
    if p.key_bits == 0 || p.key_bits > MAX_KEY_BITS {
        return bad(format!("key-bits must be between 1 and {MAX_KEY_BITS}"));
    }
    if p.alphabet == 0 {
        return bad("alphabet must be positive".into());
    }
    if p.cap == 0 {
        return bad("cap must be positive".into());
    }
    if p.virtual_lags.is_empty() || p.virtual_lags.contains(&0) {
        return bad("virtual lags must be a non-empty list of positive ticks".into());
    }
    let params = MacParameters::new(p.mac_k, p.mac_blocks).map_err(|e| HarnessError::Config(e.to_string()))?;
    let top = crate::core_model::MessageContent::sym(p.alphabet - 1);
    if let Err(e) = mac::encode_content(&top, params.field) {
        return bad(format!("alphabet {} does not fit the MAC field: {e}", p.alphabet));
    }
    Ok(())
}

/// Run one check; the space sizes are validated before any work starts.
pub fn check(name: CheckName, p: &CheckParams) -> Result<CheckReport, HarnessError> {
    Ok(run_check(name, p)?)
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(path) => std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.into(), source }),
        None => {
            use std::io::Write as _;
            // A closed downstream pipe is not an error for a CLI filter.
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(HarnessError::Io { path: "<stdout>".into(), source: e })
                }
                _ => Ok(()),
            }
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Security reports for one composition: the composed ε next to the core's
/// honest-channel ε, per core.
pub fn security_reports(cfg: &ExperimentConfig) -> Result<Vec<SecurityReport>, HarnessError> {
    let p = cfg.params()?;
    let composition = cfg.composition.unwrap_or(Composition::Confirmed);
    let mut out = vec![];
    for &core in &p.cores {
        let setup = p.setup(core);
        out.push(epsilon_secure(&setup, Composition::Core, &honest_space(&p)?, &format!("{core} core"))?);
        let (space, label) = match composition {
            Composition::Core => (core_space(&p)?, format!("{core} core")),
            Composition::Confirmed => (composed_space(&p)?, format!("{core} core + confirmation")),
            Composition::Delayed => (delayed_space(&p)?, format!("{core} core + transcript verification")),
        };
        out.push(epsilon_secure(&setup, composition, &space, &label)?);
    }
    Ok(out)
}

/// One CSV row per (report, strategy).
pub fn reports_csv(reports: &[SecurityReport]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["protocol", "setting", "strategy", "numerator", "denominator", "is_witness"])?;
    for r in reports {
        for s in &r.per_strategy {
            let witness = r.witness.as_deref() == Some(s.label.as_str()) && s.distance == r.epsilon_max;
            w.write_record([
                r.protocol.as_str(),
                &r.setting.to_string(),
                &s.label,
                &s.distance.numerator,
                &s.distance.denominator,
                if witness { "true" } else { "false" },
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn key_symbol(k: &KeyRegister) -> &'static str {
    if k.is_bottom() {
        "⊥"
    } else {
        "k"
    }
}

/// Replay one strategy and render the timed event sequence.
pub fn replay(strategy_text: &str, cfg: &ExperimentConfig) -> Result<(Outcome, String), HarnessError> {
    let strategy = parse_strategy(strategy_text)?;
    let p = cfg.params()?;
    let core = cfg.core.unwrap_or(CoreKind::HonestSecure);
    let composition = cfg.composition.unwrap_or(Composition::Confirmed);
    let setting = cfg.setting.unwrap_or(match composition {
        Composition::Delayed => ChannelSetting::Insecure,
        _ => ChannelSetting::Practical,
    });
    let max_delay = strategy.actions().values().map(|a| a.delay()).max().unwrap_or(0).max(1);
    let setup = p.setup(core).with_max_delay(max_delay);
    let key_value = cfg.key.unwrap_or(0);
    let key = Bits::from_value(key_value, p.key_bits)
        .filter(|b| b.value() == key_value)
        .ok_or_else(|| HarnessError::Config(format!("key {key_value} does not fit in {} bits", p.key_bits)))?;
    let mut medium = Medium::Ideal;
    let mut ctx = Ctx::new(&mut medium, &[]);
    let o = run_composed(&setup, composition, &key, &strategy, setting, &mut ctx)
        .map_err(|source| SecurityError::Engine { strategy: strategy.label().to_string(), source })?;
    Ok((o.clone(), render_trace(&o, core, setting, strategy.label(), &key)))
}

pub fn render_trace(o: &Outcome, core: CoreKind, setting: ChannelSetting, label: &str, key: &Bits) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "core {core}, {setting} channel, strategy {label}, pre-shared key {key}");
    let mut events: Vec<_> = o.log.all().collect();
    events.sort_by_key(|a| (a.time, !a.direction.is_sending()));
    let mut phase = None;
    for m in events {
        if phase != Some(m.phase) {
            phase = Some(m.phase);
            let _ = writeln!(t, "-- {} --", if m.phase == Phase::Core { "core" } else { "post-processing" });
        }
        let verb = if m.direction.is_sending() { "sends   " } else { "receives" };
        let who = if m.direction.is_sending() { m.direction.link().sender() } else { m.direction.link().receiver() };
        let _ = writeln!(
            t,
            "t={:<4} {:<5} {verb} {}#{} {}",
            m.time.to_string(),
            who.name(),
            m.direction.link(),
            m.index,
            m.content
        );
    }
    for obs in o.eve.observations() {
        if let ObservationKind::CopyAttack { slot, action, result } = &obs.kind {
            let _ = writeln!(t, "t={:<4} Eve   attacks copy {slot} with {action}: {result}", obs.time.to_string());
        }
    }
    let _ = writeln!(t, "keys: k_A={}, k_B={}", o.k_a, o.k_b);
    let _ = write!(t, "final keys: ({}, {})", key_symbol(&o.k_a), key_symbol(&o.k_b));
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_flags() {
        let file = ExperimentConfig { messages: Some(3), alphabet: Some(2), ..Default::default() };
        let flags = ExperimentConfig { messages: Some(4), ..Default::default() };
        let merged = file.overlay(flags);
        assert_eq!(merged.messages, Some(4));
        assert_eq!(merged.alphabet, Some(2));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig {
            core: Some(CoreKind::Leaky),
            mutation: Some(Mutation::SkipBobReplace),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"skip-bob-replace\""));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<ExperimentConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        for cfg in [
            ExperimentConfig { messages: Some(0), ..Default::default() },
            ExperimentConfig { key_bits: Some(0), ..Default::default() },
            ExperimentConfig { alphabet: Some(200), ..Default::default() },
            ExperimentConfig { virtual_lags: Some(vec![]), ..Default::default() },
        ] {
            assert!(matches!(cfg.params(), Err(HarnessError::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn replay_endings() {
        let cfg = ExperimentConfig::default();
        let (_, t) = replay("", &cfg).unwrap();
        assert!(t.ends_with("final keys: (k, k)"), "{t}");
        let (_, t) = replay("app:A->B 1 block\n", &cfg).unwrap();
        assert!(t.ends_with("final keys: (k, ⊥)"), "{t}");
        let (o, t) = replay("A->B 1 tamper 1\n", &cfg).unwrap();
        assert!(t.ends_with("final keys: (⊥, ⊥)"), "{t}");
        assert!(o.log.received_by_bob[0].content.is_auth_abort());
        assert!(t.contains("Bob   receives A->B#1 AUTH_ABORT"), "{t}");
    }

    #[test]
    fn replay_reports_parse_errors_by_line() {
        let err = replay("A->B 1 forward\nA->B 2 explode\n", &ExperimentConfig::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
