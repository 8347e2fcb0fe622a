//! Synthetic respondents and Monte-Carlo studies of the adaptive test.
//!
//! Every simulated session draws from its own ChaCha substream of the run
//! seed, so results do not depend on thread scheduling and adding sessions
//! leaves earlier ones untouched.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{Composition, ItemBank, Stimulus, StimulusKind};
use crate::calibration::ResponseMatrix;
use crate::cat::{Answer, CatError, Demographics, Session, SessionConfig, SessionState, Stage};
use crate::irt::prob;
use crate::study::{pearson_r, CleaningRule, StudyRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Cat(#[from] CatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McBehavior {
    /// Picks the synonym whenever the word is known, up to the slip rate.
    Honest,
    /// Picks uniformly among the four options.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryBehavior {
    /// Knows a word with the Rasch probability.
    Honest,
    /// Claims to know any stimulus with this probability.
    RandomKnow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespondentProfile {
    pub true_theta: f64,
    /// Probability of claiming to know a pseudoword.
    pub pseudoword_false_alarm: f64,
    pub mc_behavior: McBehavior,
    pub binary_behavior: BinaryBehavior,
    /// Probability that an honest respondent who knows a word still picks a
    /// wrong definition.
    pub mc_slip: f64,
}

impl RespondentProfile {
    pub fn honest(true_theta: f64) -> Self {
        RespondentProfile {
            true_theta,
            pseudoword_false_alarm: 0.05,
            mc_behavior: McBehavior::Honest,
            binary_behavior: BinaryBehavior::Honest,
            mc_slip: 0.0,
        }
    }

    /// Answers every prompt by a coin flip.
    pub fn random() -> Self {
        RespondentProfile {
            true_theta: 0.0,
            pseudoword_false_alarm: 0.5,
            mc_behavior: McBehavior::Random,
            binary_behavior: BinaryBehavior::RandomKnow(0.5),
            mc_slip: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let unit = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SimError::InvalidArgument(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        if !self.true_theta.is_finite() {
            return Err(SimError::InvalidArgument("true_theta must be finite".into()));
        }
        unit("pseudoword_false_alarm", self.pseudoword_false_alarm)?;
        unit("mc_slip", self.mc_slip)?;
        if let BinaryBehavior::RandomKnow(p) = self.binary_behavior {
            unit("random know probability", p)?;
        }
        Ok(())
    }
}

/// Draws one answer of `profile` to `stimulus` at the given stage.
/// `option_order` is the displayed order of a multiple-choice item's options.
pub fn simulate_answer<R: Rng>(
    profile: &RespondentProfile,
    stimulus: &Stimulus,
    stage: Stage,
    option_order: Option<[u8; 4]>,
    rng: &mut R,
) -> Result<Answer, SimError> {
    let know = |p: f64, rng: &mut R| if rng.random_bool(p) { Answer::Know } else { Answer::DontKnow };
    match (stimulus.kind, stage) {
        (StimulusKind::Pseudoword, Stage::BinaryDecision) => Ok(know(profile.pseudoword_false_alarm, rng)),
        (_, Stage::BinaryDecision) => match profile.binary_behavior {
            BinaryBehavior::RandomKnow(p) => Ok(know(p, rng)),
            BinaryBehavior::Honest => {
                let b = stimulus.difficulty.ok_or_else(|| {
                    SimError::InvalidArgument(format!("stimulus {} has no difficulty", stimulus.id))
                })?;
                Ok(know(prob(profile.true_theta, b), rng))
            }
        },
        (StimulusKind::MultipleChoice, Stage::Definition) => {
            let order = option_order
                .ok_or_else(|| SimError::InvalidArgument("definition stage needs the option order".into()))?;
            let synonym = stimulus
                .synonym_index
                .ok_or_else(|| SimError::InvalidArgument(format!("stimulus {} has no synonym", stimulus.id)))?;
            let correct = order.iter().position(|&o| o == synonym).expect("order is a permutation") as u8;
            let choice = match profile.mc_behavior {
                McBehavior::Random => rng.random_range(0..4u8),
                McBehavior::Honest if rng.random_bool(profile.mc_slip) => {
                    let wrong = rng.random_range(0..3u8);
                    if wrong >= correct {
                        wrong + 1
                    } else {
                        wrong
                    }
                }
                McBehavior::Honest => correct,
            };
            Ok(Answer::Choice(choice))
        }
        (kind, Stage::Definition) => Err(SimError::InvalidArgument(format!(
            "{kind} stimuli have no definition stage"
        ))),
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs one full session for `profile`, finalised with honest demographics.
pub fn run_session<R: Rng>(
    bank: &ItemBank,
    config: &SessionConfig,
    profile: &RespondentProfile,
    rng: &mut R,
) -> Result<Session, SimError> {
    profile.validate()?;
    let config = config.clone().seeded(rng.random());
    let mut session = Session::start("simulated", bank, config)?;
    while matches!(session.state(), SessionState::InProgress | SessionState::AwaitingDefinition) {
        let shown = session.next_item(bank)?;
        let stimulus = bank.get(&shown.item_id).expect("presented item is in the bank");
        let order = session.administered().last().and_then(|a| a.option_order);
        let answer = simulate_answer(profile, stimulus, shown.stage, order, rng)?;
        session.submit_response(bank, &shown.item_id, answer, rng.random_range(1500..6000))?;
    }
    let demographics = Demographics { age: 30, native: true, honest: true };
    session.finalize(bank, Some(demographics))?;
    Ok(session)
}

/// Final estimate of one simulated session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub true_theta: f64,
    pub theta: f64,
    pub se: f64,
    pub attention_index: Option<f64>,
    pub trusted: bool,
}

/// Simulates one session per profile; session `i` uses substream `i` of `seed`.
pub fn simulate_sessions(
    bank: &ItemBank,
    config: &SessionConfig,
    profiles: &[RespondentProfile],
    seed: u64,
) -> Result<Vec<SimOutcome>, SimError> {
    config.validate()?;
    profiles
        .par_iter()
        .enumerate()
        .map(|(i, profile)| {
            let mut rng = substream(seed, i as u64);
            let session = run_session(bank, config, profile, &mut rng)?;
            let r = session.result().expect("finalised session has a result");
            Ok(SimOutcome {
                true_theta: profile.true_theta,
                theta: r.theta,
                se: r.se,
                attention_index: r.attention_index,
                trusted: r.trusted,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n: usize,
    /// Absent when either side has no variance.
    pub correlation: Option<f64>,
    pub rmse: f64,
    pub mean_bias: f64,
    pub mean_se: f64,
    /// Empirical RMSE over mean reported se.
    pub se_calibration_ratio: f64,
    /// Mean over sessions with a defined index.
    pub mean_attention: Option<f64>,
    pub trusted_share: f64,
}

impl RecoveryReport {
    pub fn from_outcomes(outcomes: &[SimOutcome]) -> Result<Self, SimError> {
        if outcomes.is_empty() {
            return Err(SimError::InvalidArgument("recovery needs at least one session".into()));
        }
        let n = outcomes.len() as f64;
        let truth: Vec<f64> = outcomes.iter().map(|o| o.true_theta).collect();
        let est: Vec<f64> = outcomes.iter().map(|o| o.theta).collect();
        let mse = outcomes.iter().map(|o| (o.theta - o.true_theta).powi(2)).sum::<f64>() / n;
        let mean_bias = outcomes.iter().map(|o| o.theta - o.true_theta).sum::<f64>() / n;
        let mean_se = outcomes.iter().map(|o| o.se).sum::<f64>() / n;
        let attention: Vec<f64> = outcomes.iter().filter_map(|o| o.attention_index).collect();
        Ok(RecoveryReport {
            n: outcomes.len(),
            correlation: pearson_r(&truth, &est),
            rmse: mse.sqrt(),
            mean_bias,
            mean_se,
            se_calibration_ratio: mse.sqrt() / mean_se,
            mean_attention: (!attention.is_empty()).then(|| attention.iter().sum::<f64>() / attention.len() as f64),
            trusted_share: outcomes.iter().filter(|o| o.trusted).count() as f64 / n,
        })
    }
}

/// Runs one session per profile and summarises ability recovery.
pub fn run_recovery(
    bank: &ItemBank,
    config: &SessionConfig,
    profiles: &[RespondentProfile],
    seed: u64,
) -> Result<RecoveryReport, SimError> {
    if profiles.is_empty() {
        return Err(SimError::InvalidArgument("recovery needs at least one profile".into()));
    }
    RecoveryReport::from_outcomes(&simulate_sessions(bank, config, profiles, seed)?)
}

/// `n` honest profiles with abilities drawn from `N(mean, sd)`.
pub fn honest_population(n: usize, mean: f64, sd: f64, seed: u64) -> Result<Vec<RespondentProfile>, SimError> {
    let normal = Normal::new(mean, sd).map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| RespondentProfile::honest(normal.sample(&mut rng))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    pub mean_se: f64,
    pub rmse: f64,
}

/// Precision against test length. Every length sees the same population,
/// drawn from `N(0, 2)`, and the same session seed.
pub fn compare_lengths(
    bank: &ItemBank,
    lengths: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<LengthRow>, SimError> {
    if n == 0 {
        return Err(SimError::InvalidArgument("n must be at least 1".into()));
    }
    let profiles = honest_population(n, 0.0, 2.0, seed)?;
    lengths
        .iter()
        .map(|&length| {
            let config = SessionConfig::with_length(length)?;
            let report = run_recovery(bank, &config, &profiles, seed)?;
            Ok(LengthRow {
                length,
                mean_se: report.mean_se,
                rmse: report.rmse,
            })
        })
        .collect()
}

/// Dichotomous responses drawn from the Rasch model for every person × item
/// pair. Persons are `p0001…`, items `i001…`.
pub fn simulate_rasch_matrix(thetas: &[f64], difficulties: &[f64], seed: u64) -> ResponseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::with_capacity(thetas.len() * difficulties.len());
    for (p, &t) in thetas.iter().enumerate() {
        for (i, &b) in difficulties.iter().enumerate() {
            let x = rng.random::<f64>() < prob(t, b);
            triples.push((format!("p{:04}", p + 1), format!("i{:03}", i + 1), u8::from(x)));
        }
    }
    ResponseMatrix::from_triples(triples).expect("simulated scores are dichotomous")
}

/// Bank whose real words cover `[lo, hi]` evenly, stocked for
/// `sessions_worth` sessions of the default composition. Every fourth real
/// word is multiple choice.
pub fn covering_bank(lo: f64, hi: f64, sessions_worth: usize) -> ItemBank {
    let comp = Composition::default();
    let mut bank = crate::bank::demo_bank();
    bank.stimuli.clear();
    let n_real = (comp.binary + comp.multiple_choice) * sessions_worth;
    for i in 0..n_real {
        let b = lo + (hi - lo) * i as f64 / (n_real - 1).max(1) as f64;
        let s = if i % 4 == 1 {
            let options = ["a", "b", "c", "d"].map(|o| format!("{o}{i}"));
            Stimulus::multiple_choice(format!("mc{i:04}"), format!("word{i}"), b, options, (i / 4 % 4) as u8)
        } else {
            Stimulus::binary(format!("bin{i:04}"), format!("word{i}"), b)
        };
        bank.stimuli.push(s);
    }
    for i in 0..comp.pseudoword * sessions_worth {
        bank.stimuli.push(Stimulus::pseudoword(format!("pw{i:04}"), format!("pseudo{i}")));
    }
    bank.version = "covering".into();
    bank
}

/// What a record of a synthetic study was planted to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planted {
    Violation(CleaningRule),
    /// One half of a pair finished four minutes apart by the same age and group.
    Retake,
}

/// Synthetic study export with known violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedStudy {
    pub records: Vec<StudyRecord>,
    /// Session ids of planted records, in record order.
    pub planted: Vec<(String, Planted)>,
}

const STUDY_GROUPS: [(bool, f64, f64); 2] = [(true, 75_000.0, 15_000.0), (false, 40_000.0, 10_000.0)];

/// `n` study records, of which about 9% carry exactly one planted problem:
/// dishonesty, age 6, attention 0.69, a 45 s duration, a vocabulary size
/// five standard deviations from its group, or a four-minute retake pair.
/// Clean vocabulary sizes are uniform on `mean ± half_width` per group, which
/// keeps them inside the default ±2 SD band; clean completions are an hour
/// apart.
pub fn synthetic_study(n: usize, seed: u64) -> Result<PlantedStudy, SimError> {
    let per_rule = n / 50;
    let outliers_per_group = (n / 200).max(1);
    let retake_pairs = n / 100;
    let planted_total = 4 * per_rule + 2 * outliers_per_group + 2 * retake_pairs;
    if per_rule == 0 || planted_total >= n / 2 {
        return Err(SimError::InvalidArgument(format!("a planted study needs at least 50 records, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = DateTime::<Utc>::from_timestamp(1_700_000_000, 0).expect("valid timestamp");
    let conversion = crate::bank::demo_bank().conversion.expect("demo bank has a conversion");
    let mut records = Vec::with_capacity(n);
    let mut planted = Vec::new();
    let clean = |rng: &mut ChaCha8Rng, i: usize, native: bool| {
        let (_, mean, half) = STUDY_GROUPS[usize::from(!native)];
        let vocab = rng.random_range(mean - half..=mean + half).round();
        let share = vocab / conversion.cap;
        StudyRecord {
            session_id: format!("s{i:05}"),
            vocab_words: vocab as u32,
            theta: conversion.midpoint + (share / (1.0 - share)).ln() / conversion.slope,
            se: rng.random_range(0.3..0.45),
            attention: Some(rng.random_range(0.75..=1.0)),
            duration_s: rng.random_range(90.0..900.0),
            age: rng.random_range(10..70),
            native,
            honest: true,
            finished_at: start + chrono::Duration::hours(i as i64),
        }
    };
    let rules = [CleaningRule::Honesty, CleaningRule::Age, CleaningRule::Attention, CleaningRule::Duration];
    for i in 0..n - retake_pairs {
        let native = rng.random_bool(0.6);
        let mut r = clean(&mut rng, i, native);
        let k = i / per_rule;
        let label = if k < rules.len() {
            match rules[k] {
                CleaningRule::Honesty => r.honest = false,
                CleaningRule::Age => r.age = 6,
                CleaningRule::Attention => r.attention = Some(0.69),
                CleaningRule::Duration => r.duration_s = 45.0,
                CleaningRule::Outlier => unreachable!(),
            }
            Some(Planted::Violation(rules[k]))
        } else if i < 4 * per_rule + 2 * outliers_per_group {
            let j = i - 4 * per_rule;
            let native = j % 2 == 0;
            let (_, mean, half) = STUDY_GROUPS[usize::from(!native)];
            let sd = half / 3f64.sqrt();
            let sign = if j / 2 % 2 == 0 { 1.0 } else { -1.0 };
            r = clean(&mut rng, i, native);
            r.vocab_words = (mean + sign * 5.0 * sd).round() as u32;
            Some(Planted::Violation(CleaningRule::Outlier))
        } else if i < 4 * per_rule + 2 * outliers_per_group + retake_pairs {
            let mut twin = clean(&mut rng, n - retake_pairs + (i - 4 * per_rule - 2 * outliers_per_group), native);
            twin.age = r.age;
            twin.finished_at = r.finished_at + chrono::Duration::minutes(4);
            planted.push((r.session_id.clone(), Planted::Retake));
            planted.push((twin.session_id.clone(), Planted::Retake));
            records.push(r);
            records.push(twin);
            continue;
        } else {
            None
        };
        if let Some(label) = label {
            planted.push((r.session_id.clone(), label));
        }
        records.push(r);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);
    let records: Vec<StudyRecord> = order.into_iter().map(|i| records[i].clone()).collect();
    let position = |id: &str| records.iter().position(|r| r.session_id == id);
    planted.sort_by_key(|(id, _)| position(id));
    Ok(PlantedStudy { records, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::demo_bank;
    use crate::cat::McAttentionBase;

    fn midpoint_stimulus() -> Stimulus {
        Stimulus::binary("w", "word", 0.7)
    }

    #[test]
    fn rasch_midpoint_know_rate() {
        let profile = RespondentProfile::honest(0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let knows = (0..n)
            .filter(|_| {
                simulate_answer(&profile, &midpoint_stimulus(), Stage::BinaryDecision, None, &mut rng).unwrap()
                    == Answer::Know
            })
            .count();
        let sd = (0.25 / n as f64).sqrt();
        assert!((knows as f64 / n as f64 - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn random_definition_rate() {
        let profile = RespondentProfile::random();
        let s = Stimulus::multiple_choice("m", "word", 0.0, ["a".into(), "b".into(), "c".into(), "d".into()], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let order = [3, 0, 2, 1];
        let hits = (0..n)
            .filter(|_| {
                simulate_answer(&profile, &s, Stage::Definition, Some(order), &mut rng).unwrap() == Answer::Choice(2)
            })
            .count();
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.25).abs() < 3.0 * sd);
    }

    #[test]
    fn honest_picks_displayed_synonym() {
        let profile = RespondentProfile::honest(0.0);
        let s = Stimulus::multiple_choice("m", "word", 0.0, ["a".into(), "b".into(), "c".into(), "d".into()], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = simulate_answer(&profile, &s, Stage::Definition, Some([2, 3, 1, 0]), &mut rng).unwrap();
        assert_eq!(a, Answer::Choice(2));
    }

    #[test]
    fn zero_false_alarm_never_claims_pseudoword() {
        let profile = RespondentProfile { pseudoword_false_alarm: 0.0, ..RespondentProfile::honest(5.0) };
        let s = Stimulus::pseudoword("pw", "blarg");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert_eq!(
                simulate_answer(&profile, &s, Stage::BinaryDecision, None, &mut rng).unwrap(),
                Answer::DontKnow
            );
        }
    }

    #[test]
    fn invalid_profile_rejected() {
        let p = RespondentProfile { mc_slip: 1.5, ..RespondentProfile::honest(0.0) };
        assert!(p.validate().is_err());
        let p = RespondentProfile { binary_behavior: BinaryBehavior::RandomKnow(-0.1), ..RespondentProfile::honest(0.0) };
        assert!(p.validate().is_err());
    }

    #[test]
    fn recovery_is_bit_reproducible() {
        let bank = demo_bank();
        let profiles = honest_population(40, 0.0, 2.0, 9).unwrap();
        let config = SessionConfig::default();
        let a = run_recovery(&bank, &config, &profiles, 17).unwrap();
        let b = run_recovery(&bank, &config, &profiles, 17).unwrap();
        assert_eq!(a, b);
        let c = run_recovery(&bank, &config, &profiles, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn appending_profiles_keeps_earlier_sessions() {
        let bank = demo_bank();
        let profiles = honest_population(30, 0.0, 2.0, 5).unwrap();
        let config = SessionConfig::default();
        let short = simulate_sessions(&bank, &config, &profiles[..20], 3).unwrap();
        let long = simulate_sessions(&bank, &config, &profiles, 3).unwrap();
        assert_eq!(short[..], long[..20]);
    }

    #[test]
    fn honest_recovery_correlates() {
        let bank = covering_bank(-7.0, 7.0, 8);
        let profiles = honest_population(200, 0.0, 2.0, 21).unwrap();
        let r = run_recovery(&bank, &SessionConfig::default(), &profiles, 22).unwrap();
        assert!(r.correlation.unwrap() > 0.9, "{r:?}");
    }

    #[test]
    fn identical_abilities_se_calibrated() {
        let bank = covering_bank(-7.0, 7.0, 8);
        let profiles = vec![RespondentProfile::honest(0.5); 400];
        let r = run_recovery(&bank, &SessionConfig::default(), &profiles, 23).unwrap();
        assert_eq!(r.correlation, None);
        assert!((0.7..=1.4).contains(&r.se_calibration_ratio), "{r:?}");
    }

    #[test]
    fn random_attention_expectation_with_all_presented_base() {
        let bank = demo_bank();
        let config = SessionConfig {
            mc_attention: McAttentionBase::AllPresented,
            ..SessionConfig::default()
        };
        let profiles = vec![RespondentProfile::random(); 2000];
        let r = run_recovery(&bank, &config, &profiles, 31).unwrap();
        // 12 control opportunities per session, each a Bernoulli(0.5) or (0.125).
        let var = (6.0 * 0.25 + 6.0 * 0.125 * 0.875) / 144.0;
        let tol = 4.0 * (var / 2000.0f64).sqrt();
        assert!((r.mean_attention.unwrap() - 0.3125).abs() < tol, "{r:?}");
    }

    #[test]
    fn extreme_abilities_land_in_outer_deciles() {
        let bank = covering_bank(-7.0, 7.0, 8);
        let mut profiles = honest_population(200, 0.0, 2.0, 41).unwrap();
        profiles.push(RespondentProfile::honest(6.0));
        profiles.push(RespondentProfile::honest(-6.0));
        let out = simulate_sessions(&bank, &SessionConfig::default(), &profiles, 42).unwrap();
        let mut thetas: Vec<f64> = out.iter().map(|o| o.theta).collect();
        thetas.sort_by(f64::total_cmp);
        let n = thetas.len();
        let top = thetas[n - n / 10];
        let bottom = thetas[n / 10 - 1];
        assert!(out[n - 2].theta >= top);
        assert!(out[n - 1].theta <= bottom);
    }

    #[test]
    fn longer_tests_are_more_precise() {
        let bank = covering_bank(-7.0, 7.0, 8);
        let rows = compare_lengths(&bank, &[10, 30, 60], 500, 7).unwrap();
        assert!(rows[2].mean_se < rows[1].mean_se && rows[1].mean_se < rows[0].mean_se, "{rows:?}");
    }

    #[test]
    fn default_length_matches_recovery() {
        let bank = demo_bank();
        let rows = compare_lengths(&bank, &[30], 50, 11).unwrap();
        let profiles = honest_population(50, 0.0, 2.0, 11).unwrap();
        let r = run_recovery(&bank, &SessionConfig::default(), &profiles, 11).unwrap();
        assert_eq!(rows[0].mean_se, r.mean_se);
        assert_eq!(rows[0].rmse, r.rmse);
        assert!(compare_lengths(&bank, &[30], 0, 11).is_err());
    }

    #[test]
    fn rasch_matrix_shape() {
        let m = simulate_rasch_matrix(&[0.0, 1.0], &[-1.0, 0.0, 1.0], 1);
        assert_eq!(m.persons().len(), 2);
        assert_eq!(m.items(), ["i001", "i002", "i003"]);
        assert_eq!(m.n_observations(), 6);
    }

    #[test]
    fn planted_study_is_cleaned_exactly() {
        use crate::study::{clean, CleaningConfig};
        let study = synthetic_study(1000, 5).unwrap();
        assert_eq!(study.records.len(), 1000);
        let (_, report) = clean(&study.records, &CleaningConfig::default());
        let removed: Vec<(String, Planted)> = report
            .removals
            .iter()
            .map(|r| (r.session_id.clone(), Planted::Violation(r.rule)))
            .collect();
        let violations: Vec<(String, Planted)> =
            study.planted.iter().filter(|p| p.1 != Planted::Retake).cloned().collect();
        assert_eq!(removed, violations);
        let retakes: Vec<String> =
            study.planted.iter().filter(|p| p.1 == Planted::Retake).map(|p| p.0.clone()).collect();
        assert_eq!(report.flagged_retakes, retakes);
        assert_eq!(retakes.len(), 20);
    }

    #[test]
    fn planted_study_needs_room() {
        assert!(synthetic_study(10, 1).is_err());
        assert_eq!(synthetic_study(200, 3).unwrap(), synthetic_study(200, 3).unwrap());
    }
}
