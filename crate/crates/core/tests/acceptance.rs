//! The nine acceptance criteria, one pass/fail line each. Run with
//! `cargo test -p authsim --test acceptance -- --nocapture` to see the lines.

mod common;

use std::time::{Duration, Instant};

use authsim::adversary::AdversaryStrategy;
use authsim::channel::{ChannelAction, ChannelSetting, Medium};
use authsim::core_model::{Link, Slot};
use authsim::protocols::{Composition, CoreKind, Mutation};
use authsim::security::checks::{run_check, CheckName, CheckParams, CheckReport};
use authsim::security::{composed_distribution, Weight};

const CHANNEL_LIMIT: Duration = Duration::from_secs(60);
const SWEEP_LIMIT: Duration = Duration::from_secs(300);
const RANDOM_CASES: u64 = 10_000;
const RANDOM_SEED: u64 = 0x5eed;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn params(messages: u32) -> CheckParams {
    CheckParams { messages, ..CheckParams::default() }
}

fn mutated(messages: u32, m: Mutation) -> CheckParams {
    CheckParams { mutation: Some(m), ..params(messages) }
}

fn run(name: CheckName, p: &CheckParams) -> Result<(CheckReport, Duration), String> {
    let start = Instant::now();
    let r = run_check(name, p).map_err(|e| format!("{name}: {e}"))?;
    Ok((r, start.elapsed()))
}

fn holds(r: &CheckReport) -> Result<(), String> {
    match r.counterexamples.first() {
        _ if r.holds => Ok(()),
        Some(c) => Err(format!("{} [{}] {}: {}", r.summary(), c.core, c.strategy, c.detail)),
        None => Err(r.summary()),
    }
}

fn within(name: CheckName, took: Duration, limit: Duration) -> Result<(), String> {
    if took <= limit {
        Ok(())
    } else {
        Err(format!("{name} took {took:.1?}, limit {limit:?}"))
    }
}

fn refuted(r: &CheckReport) -> Result<u64, String> {
    if !r.holds && r.violations > 0 {
        Ok(r.violations)
    } else {
        Err(format!("negative control not detected: {}", r.summary()))
    }
}

fn metric(r: &CheckReport, key: &str) -> Result<Weight, String> {
    let v = r.metrics.get(key).ok_or_else(|| format!("missing metric {key}"))?;
    v.parse().map_err(|_| format!("metric {key} = {v} is not a rational"))
}

fn channel_conformance() -> Verdict {
    let (r, took) = run(CheckName::ChannelProperties, &params(4))?;
    holds(&r)?;
    within(CheckName::ChannelProperties, took, CHANNEL_LIMIT)?;
    Ok(format!("{} in {took:.1?}", r.summary()))
}

fn both_abort() -> Verdict {
    let (r, _) = run(CheckName::BothAbort, &params(4))?;
    holds(&r)?;
    let (control, _) = run(CheckName::BothAbort, &mutated(4, Mutation::SkipBobReplace))?;
    let n = refuted(&control)?;
    Ok(format!("{}; skip-bob-replace gives {n} counterexamples", r.summary()))
}

fn asymmetric_abort() -> Verdict {
    let (r, _) = run(CheckName::BothAbort, &params(4))?;
    holds(&r)?;
    let count = metric(&r, "strategies_with_asymmetric_abort")?;
    if count == Weight::from_integer(0.into()) {
        return Err("no strategy reaches (k, ⊥)".into());
    }
    // Blocking Alice's final ACCEPT leaves her key and drops Bob's.
    let setup = CheckParams::default().setup(CoreKind::HonestSecure);
    let s = AdversaryStrategy::all_forward().with(Slot::post(Link::AliceToBob, 1), ChannelAction::Block);
    let d = composed_distribution(&setup, Composition::Confirmed, &s, ChannelSetting::Practical, &Medium::Ideal)
        .map_err(|e| e.to_string())?;
    if let Some((o, _)) = d.iter().find(|(o, _)| !(!o.k_a.is_empty() && o.k_b.is_bottom())) {
        return Err(format!("blocking the final ACCEPT gave lengths {:?}", o.lengths()));
    }
    Ok(format!("{count} strategies reach (k, ⊥), unequal nonzero lengths never occur"))
}

fn commutation() -> Verdict {
    let (r, _) = run(CheckName::Commutation, &params(3))?;
    holds(&r)?;
    let (control, _) = run(CheckName::Commutation, &mutated(2, Mutation::BrokenUpdate))?;
    let n = refuted(&control)?;
    Ok(format!("{}; broken-update deviates on {n}", r.summary()))
}

fn virtual_bridge() -> Verdict {
    let (m, _) = run(CheckName::VirtualMarginal, &params(3))?;
    holds(&m)?;
    let (h, _) = run(CheckName::HonestTransform, &params(3))?;
    holds(&h)?;
    Ok(format!("{}; {}", m.summary(), h.summary()))
}

fn practical_vs_honest() -> Verdict {
    let (r, took) = run(CheckName::PracticalVsHonest, &params(3))?;
    holds(&r)?;
    within(CheckName::PracticalVsHonest, took, SWEEP_LIMIT)?;
    let zero = Weight::from_integer(0.into());
    let one = Weight::from_integer(1.into());
    let (sh, sc) = (metric(&r, "honest-secure.epsilon_honest")?, metric(&r, "honest-secure.epsilon_composed")?);
    if sh != zero || sc != zero {
        return Err(format!("honest-secure ε = ({sh}, {sc}), expected (0, 0)"));
    }
    let (lh, lc) = (metric(&r, "leaky.epsilon_honest")?, metric(&r, "leaky.epsilon_composed")?);
    if lh != one || lc > one {
        return Err(format!("leaky ε = ({lh}, {lc}), expected (1, ≤ 1)"));
    }
    let (control, _) = run(CheckName::PracticalVsHonest, &mutated(3, Mutation::SkipBobConfirm))?;
    let n = refuted(&control)?;
    Ok(format!("honest-secure ε 0/0, leaky ε {lh}/{lc} in {took:.1?}; skip-bob-confirm caught on {n}"))
}

fn delayed() -> Verdict {
    let (a, ta) = run(CheckName::DelayedBothAbort, &params(3))?;
    holds(&a)?;
    within(CheckName::DelayedBothAbort, ta, SWEEP_LIMIT)?;
    let (e, te) = run(CheckName::DelayedVsHonest, &params(3))?;
    holds(&e)?;
    within(CheckName::DelayedVsHonest, te, SWEEP_LIMIT)?;
    let eps = metric(&e, "honest-secure.epsilon_composed")?;
    if eps != Weight::from_integer(0.into()) {
        return Err(format!("honest-secure delayed ε = {eps}"));
    }
    for m in [Mutation::SkipTimingCheck, Mutation::SkipContentCheck] {
        let (control, _) = run(CheckName::DelayedBothAbort, &mutated(2, m))?;
        refuted(&control)?;
    }
    Ok(format!("{}; honest-secure ε = 0; both transcript checks are load-bearing", a.summary()))
}

fn mac_soundness() -> Verdict {
    let (r, _) = run(CheckName::MacSoundness, &params(2))?;
    holds(&r)?;
    Ok(r.summary())
}

fn randomized() -> Verdict {
    for seed in RANDOM_SEED..RANDOM_SEED + RANDOM_CASES {
        let c = common::case(seed);
        common::metric_axioms(&c)
            .and_then(|_| common::r_ideal_laws(&c))
            .and_then(|_| common::data_processing(&c))
            .and_then(|_| common::partial_monotonicity(&c))
            .map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("{RANDOM_CASES} cases, zero violations"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("channel conformance", channel_conformance),
        ("both-abort", both_abort),
        ("asymmetric abort", asymmetric_abort),
        ("commutation", commutation),
        ("virtual bridge", virtual_bridge),
        ("practical vs honest", practical_vs_honest),
        ("delayed authentication", delayed),
        ("mac soundness", mac_soundness),
        ("metric and map properties", randomized),
    ];
    let mut failed = vec![];
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {}: FAIL {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
