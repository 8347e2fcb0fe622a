//! The live adaptive test.
//!
//! A [`Session`] walks a fixed schedule of item kinds (blocks of three binary
//! items, one multiple-choice item and one pseudoword, shuffled within each
//! block). Real-word slots are filled by maximum-information selection with
//! randomesque exposure control; pseudoword slots are drawn uniformly. The
//! ability estimate is refreshed after every scored response.
//!
//! All randomness comes from one ChaCha stream seeded at start, so a seed and
//! an answer script fully determine the transcript.

mod events;
mod scoring;

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{
    validate_for_administration, Composition, ConversionCoefficients, Deficiency, ItemBank,
    Stimulus, StimulusKind,
};
use crate::irt::{estimate_ability, info, Ability, Prior, ScoredResponse};

pub use events::{read_log, write_record, LogError, LogRecord, SessionEvent};
pub use scoring::{attention_index, logits_to_words, AttentionCounters};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatError {
    #[error("bank cannot serve a session: {}", join(.0))]
    Ineligible(Vec<Deficiency>),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("operation `{op}` not allowed in state {state}")]
    WrongState { op: &'static str, state: SessionState },
    #[error("answer does not match the pending stage: {0}")]
    StageMismatch(String),
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("stimulus {0:?} is not the pending item")]
    UnknownStimulus(String),
    #[error("stimulus {0:?} was already answered")]
    DuplicateAnswer(String),
    #[error("bank has no unused {0} item left")]
    BankExhausted(StimulusKind),
    #[error("replay diverged: {0}")]
    ReplayDivergence(String),
}

fn join(d: &[Deficiency]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Top-k most informative items at the current estimate, one drawn uniformly.
    #[default]
    MaxInformation,
    /// Uniform draw among unused items of the scheduled kind (non-adaptive baseline).
    Random,
}

/// Which multiple-choice items count in the attention denominator `ay`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McAttentionBase {
    /// Only items whose definition stage was reached.
    #[default]
    DefinitionStage,
    /// Every presented multiple-choice item.
    AllPresented,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub total_items: usize,
    pub composition: Composition,
    pub prior: Prior,
    pub randomesque_k: usize,
    pub trust_threshold: f64,
    #[serde(default)]
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub selection: SelectionRule,
    #[serde(default = "default_true")]
    pub pseudoword_warning: bool,
    #[serde(default)]
    pub mc_attention: McAttentionBase,
}

fn default_true() -> bool {
    true
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            total_items: 30,
            composition: Composition::default(),
            prior: Prior::default(),
            randomesque_k: 5,
            trust_threshold: 0.70,
            rng_seed: None,
            selection: SelectionRule::MaxInformation,
            pseudoword_warning: true,
            mc_attention: McAttentionBase::DefinitionStage,
        }
    }
}

impl SessionConfig {
    /// Default settings with a test length that is a multiple of 5.
    pub fn with_length(total_items: usize) -> Result<Self, CatError> {
        let composition = Composition::scaled(total_items).ok_or_else(|| {
            CatError::InvalidConfig(format!("length must be a positive multiple of 5, got {total_items}"))
        })?;
        Ok(SessionConfig {
            total_items,
            composition,
            ..Default::default()
        })
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.rng_seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), CatError> {
        let bad = |m: String| Err(CatError::InvalidConfig(m));
        if self.total_items == 0 {
            return bad("total_items must be positive".into());
        }
        if self.composition.total() != self.total_items {
            return bad(format!(
                "composition sums to {}, total_items is {}",
                self.composition.total(),
                self.total_items
            ));
        }
        if self.randomesque_k == 0 {
            return bad("randomesque_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.trust_threshold) {
            return bad(format!("trust_threshold must be in [0, 1], got {}", self.trust_threshold));
        }
        self.prior.validate().map_err(|e| CatError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    InProgress,
    AwaitingDefinition,
    AwaitingDemographics,
    Complete,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionState::InProgress => "in_progress",
            SessionState::AwaitingDefinition => "awaiting_definition",
            SessionState::AwaitingDemographics => "awaiting_demographics",
            SessionState::Complete => "complete",
        })
    }
}

/// A test taker's input. `Choice` indexes the options in presented order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Know,
    DontKnow,
    Choice(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BinaryDecision,
    Definition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Administered {
    pub stimulus_id: String,
    pub kind: StimulusKind,
    /// `option_order[k]` is the bank index of the option shown in position k.
    pub option_order: Option<[u8; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEvent {
    pub stimulus_id: String,
    pub kind: StimulusKind,
    pub knows: bool,
    /// Presented option index chosen at the definition stage.
    pub choice: Option<u8>,
    pub latency_ms: u64,
    /// `None` for pseudowords, which never enter ability estimation.
    pub scored_correct: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub native: bool,
    pub honest: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub theta: f64,
    pub se: f64,
    pub vocab_words: u32,
    pub attention_index: Option<f64>,
    pub trusted: bool,
    pub demographics: Option<Demographics>,
}

/// What the test taker should see next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presentation {
    pub item_id: String,
    pub surface: String,
    pub kind: StimulusKind,
    pub stage: Stage,
    /// Options in presented order, definition stage only.
    pub options: Option<Vec<String>>,
    /// Zero-based index of this item in the session.
    pub position: usize,
    pub total_items: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    /// A pseudoword was claimed as known.
    pub warning: bool,
    pub state: SessionState,
    pub scored_correct: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    seed: u64,
    rng: ChaCha8Rng,
    schedule: Vec<StimulusKind>,
    position: usize,
    administered: Vec<Administered>,
    used: HashSet<String>,
    responses: Vec<ResponseEvent>,
    scored: Vec<ScoredResponse>,
    pending_latency: u64,
    ability: Ability,
    attention: AttentionCounters,
    state: SessionState,
    result: Option<TestResult>,
    transcript: Vec<SessionEvent>,
}

/// A result counts only when honesty was confirmed and the attention index
/// is defined and at least `threshold`.
pub fn is_trusted(attention_index: Option<f64>, threshold: f64, honest: bool) -> bool {
    honest && attention_index.is_some_and(|a| a >= threshold)
}

/// Starts a session with a random id.
pub fn start_session(bank: &ItemBank, config: SessionConfig) -> Result<Session, CatError> {
    Session::start(uuid::Uuid::new_v4().to_string(), bank, config)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn build_schedule(c: &Composition, rng: &mut ChaCha8Rng) -> Vec<StimulusKind> {
    let blocks = gcd(gcd(c.binary, c.multiple_choice), c.pseudoword).max(1);
    let mut schedule = Vec::with_capacity(c.total());
    for _ in 0..blocks {
        let mut block: Vec<StimulusKind> = StimulusKind::ALL
            .iter()
            .flat_map(|&k| std::iter::repeat_n(k, c.count(k) / blocks))
            .collect();
        block.shuffle(rng);
        schedule.extend(block);
    }
    schedule
}

/// Orders candidates by information at `theta` (descending), breaking ties
/// toward the easier item and then by id.
pub fn rank_by_information<'a>(theta: f64, candidates: &[&'a Stimulus]) -> Vec<&'a Stimulus> {
    let mut keyed: Vec<(f64, f64, &Stimulus)> = candidates
        .iter()
        .map(|s| {
            let b = s.difficulty.unwrap_or(f64::NAN);
            (info(theta, b), b, *s)
        })
        .collect();
    keyed.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.total_cmp(&b.1))
            .then_with(|| a.2.id.cmp(&b.2.id))
    });
    keyed.into_iter().map(|(_, _, s)| s).collect()
}

impl Session {
    pub fn start(id: impl Into<String>, bank: &ItemBank, config: SessionConfig) -> Result<Session, CatError> {
        config.validate()?;
        validate_for_administration(bank, &config.composition).map_err(CatError::Ineligible)?;
        let seed = config.rng_seed.unwrap_or_else(rand::random);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = build_schedule(&config.composition, &mut rng);
        let config = SessionConfig {
            rng_seed: Some(seed),
            ..config
        };
        let transcript = vec![SessionEvent::Started {
            config,
            seed,
            schedule: schedule.clone(),
        }];
        Ok(Session {
            id: id.into(),
            ability: Ability {
                theta: config.prior.mean,
                se: config.prior.sd,
            },
            config,
            seed,
            rng,
            schedule,
            position: 0,
            administered: Vec::new(),
            used: HashSet::new(),
            responses: Vec::new(),
            scored: Vec::new(),
            pending_latency: 0,
            attention: AttentionCounters::default(),
            state: SessionState::InProgress,
            result: None,
            transcript,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn schedule(&self) -> &[StimulusKind] {
        &self.schedule
    }
    /// Number of fully answered items.
    pub fn position(&self) -> usize {
        self.position
    }
    pub fn state(&self) -> SessionState {
        self.state
    }
    pub fn ability(&self) -> Ability {
        self.ability
    }
    pub fn attention(&self) -> AttentionCounters {
        self.attention
    }
    pub fn administered(&self) -> &[Administered] {
        &self.administered
    }
    pub fn responses(&self) -> &[ResponseEvent] {
        &self.responses
    }
    pub fn scored_responses(&self) -> &[ScoredResponse] {
        &self.scored
    }
    pub fn result(&self) -> Option<&TestResult> {
        self.result.as_ref()
    }
    pub fn transcript(&self) -> &[SessionEvent] {
        &self.transcript
    }

    /// The transcript as deterministic JSON lines (no timestamps).
    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serialises") + "\n")
            .collect()
    }

    fn pending(&self) -> Option<&Administered> {
        self.administered.get(self.position)
    }

    fn stimulus<'b>(&self, bank: &'b ItemBank, id: &str) -> Result<&'b Stimulus, CatError> {
        bank.get(id)
            .ok_or_else(|| CatError::ReplayDivergence(format!("stimulus {id:?} not in bank")))
    }

    /// Current prompt. Presents a new item if none is pending; otherwise
    /// returns the pending one again (binary decision or definition stage).
    pub fn next_item(&mut self, bank: &ItemBank) -> Result<Presentation, CatError> {
        match self.state {
            SessionState::InProgress | SessionState::AwaitingDefinition => {}
            state => return Err(CatError::WrongState { op: "next_item", state }),
        }
        if self.pending().is_none() {
            self.present_new(bank)?;
        }
        let pending = self.pending().expect("pending item present").clone();
        let stimulus = self.stimulus(bank, &pending.stimulus_id)?;
        let (stage, options) = if self.state == SessionState::AwaitingDefinition {
            let order = pending.option_order.expect("multiple-choice item has an option order");
            let all = stimulus.options.as_ref().expect("validated multiple-choice options");
            let shown = order.iter().map(|&i| all[i as usize].clone()).collect();
            (Stage::Definition, Some(shown))
        } else {
            (Stage::BinaryDecision, None)
        };
        Ok(Presentation {
            item_id: pending.stimulus_id,
            surface: stimulus.surface.clone(),
            kind: stimulus.kind,
            stage,
            options,
            position: self.position,
            total_items: self.config.total_items,
        })
    }

    fn present_new(&mut self, bank: &ItemBank) -> Result<(), CatError> {
        let kind = self.schedule[self.position];
        let candidates: Vec<&Stimulus> = bank
            .administrable(kind)
            .filter(|s| !self.used.contains(&s.id))
            .collect();
        if candidates.is_empty() {
            return Err(CatError::BankExhausted(kind));
        }
        let chosen = if kind == StimulusKind::Pseudoword || self.config.selection == SelectionRule::Random {
            let mut pool = candidates;
            pool.sort_by(|a, b| a.id.cmp(&b.id));
            pool[self.rng.random_range(0..pool.len())]
        } else {
            let ranked = rank_by_information(self.ability.theta, &candidates);
            let top = self.config.randomesque_k.min(ranked.len());
            ranked[self.rng.random_range(0..top)]
        };
        let option_order = (kind == StimulusKind::MultipleChoice).then(|| {
            let mut order = [0u8, 1, 2, 3];
            order.shuffle(&mut self.rng);
            order
        });
        self.used.insert(chosen.id.clone());
        self.administered.push(Administered {
            stimulus_id: chosen.id.clone(),
            kind,
            option_order,
        });
        self.pending_latency = 0;
        self.transcript.push(SessionEvent::Presented {
            item_id: chosen.id.clone(),
            position: self.position,
            option_order,
        });
        Ok(())
    }

    /// Applies one answer to the pending item. On error nothing changes.
    pub fn submit_response(
        &mut self,
        bank: &ItemBank,
        item_id: &str,
        answer: Answer,
        latency_ms: u64,
    ) -> Result<SubmitOutcome, CatError> {
        if self.responses.iter().any(|r| r.stimulus_id == item_id) {
            return Err(CatError::DuplicateAnswer(item_id.to_string()));
        }
        match self.state {
            SessionState::InProgress | SessionState::AwaitingDefinition => {}
            state => return Err(CatError::WrongState { op: "submit_response", state }),
        }
        let pending = match self.pending() {
            Some(p) if p.stimulus_id == item_id => p.clone(),
            _ => return Err(CatError::UnknownStimulus(item_id.to_string())),
        };
        let stimulus = self.stimulus(bank, item_id)?;

        let mut warning = false;
        let mut scored = None;
        let mut finished = true;
        let mut choice = None;
        let mut knows = true;
        match (self.state, answer) {
            (SessionState::InProgress, Answer::Choice(_)) => {
                return Err(CatError::StageMismatch(
                    "binary decision expects know or dont_know".into(),
                ))
            }
            (SessionState::AwaitingDefinition, Answer::Know) => {
                return Err(CatError::DuplicateAnswer(item_id.to_string()))
            }
            (SessionState::AwaitingDefinition, Answer::DontKnow) => {
                return Err(CatError::StageMismatch("definition stage expects a choice".into()))
            }
            (SessionState::AwaitingDefinition, Answer::Choice(i)) => {
                if i > 3 {
                    return Err(CatError::InvalidAnswer(format!("choice index must be 0..=3, got {i}")));
                }
                let order = pending.option_order.expect("multiple-choice item has an option order");
                let correct = Some(order[i as usize]) == stimulus.synonym_index;
                choice = Some(i);
                scored = Some(correct);
                self.attention.ay += 1;
                self.attention.y += u32::from(correct);
            }
            (SessionState::InProgress, stage_one) => {
                knows = stage_one == Answer::Know;
                match stimulus.kind {
                    StimulusKind::Binary => scored = Some(knows),
                    StimulusKind::MultipleChoice if knows => finished = false,
                    StimulusKind::MultipleChoice => {
                        scored = Some(false);
                        if self.config.mc_attention == McAttentionBase::AllPresented {
                            self.attention.ay += 1;
                        }
                    }
                    StimulusKind::Pseudoword => {
                        self.attention.ax += 1;
                        if knows {
                            warning = self.config.pseudoword_warning;
                        } else {
                            self.attention.x += 1;
                        }
                    }
                }
            }
            (SessionState::AwaitingDemographics | SessionState::Complete, _) => unreachable!(),
        }

        self.transcript.push(SessionEvent::Answered {
            item_id: item_id.to_string(),
            answer,
            latency_ms,
        });
        if warning {
            self.transcript.push(SessionEvent::Warned {
                item_id: item_id.to_string(),
            });
        }
        self.pending_latency += latency_ms;
        if !finished {
            self.state = SessionState::AwaitingDefinition;
            return Ok(SubmitOutcome {
                warning,
                state: self.state,
                scored_correct: None,
            });
        }

        self.responses.push(ResponseEvent {
            stimulus_id: item_id.to_string(),
            kind: stimulus.kind,
            knows,
            choice,
            latency_ms: self.pending_latency,
            scored_correct: scored,
        });
        if let Some(correct) = scored {
            let difficulty = stimulus.difficulty.expect("administered real words are calibrated");
            self.scored.push(ScoredResponse::new(difficulty, correct));
            self.ability = estimate_ability(&self.scored, &self.config.prior);
        }
        self.position += 1;
        self.state = if self.position == self.config.total_items {
            SessionState::AwaitingDemographics
        } else {
            SessionState::InProgress
        };
        Ok(SubmitOutcome {
            warning,
            state: self.state,
            scored_correct: scored,
        })
    }

    /// Computes the final result using the bank's conversion coefficients.
    pub fn finalize(&mut self, bank: &ItemBank, demographics: Option<Demographics>) -> Result<TestResult, CatError> {
        let conversion = bank
            .conversion
            .ok_or_else(|| CatError::Configuration("bank has no conversion coefficients".into()))?;
        self.finalize_with(&conversion, demographics)
    }

    pub fn finalize_with(
        &mut self,
        conversion: &ConversionCoefficients,
        demographics: Option<Demographics>,
    ) -> Result<TestResult, CatError> {
        if self.state != SessionState::AwaitingDemographics {
            return Err(CatError::WrongState {
                op: "finalize",
                state: self.state,
            });
        }
        let vocab_words = logits_to_words(self.ability.theta, conversion)?;
        let attention_index = self.attention.index();
        let honest = demographics.is_some_and(|d| d.honest);
        let trusted = is_trusted(attention_index, self.config.trust_threshold, honest);
        let result = TestResult {
            theta: self.ability.theta,
            se: self.ability.se,
            vocab_words,
            attention_index,
            trusted,
            demographics,
        };
        self.transcript.push(SessionEvent::Finalized {
            demographics,
            result: result.clone(),
        });
        self.state = SessionState::Complete;
        self.result = Some(result.clone());
        Ok(result)
    }

    /// Rebuilds a session by re-executing its transcript against `bank`.
    pub fn replay<'e>(
        id: impl Into<String>,
        bank: &ItemBank,
        events: impl IntoIterator<Item = &'e SessionEvent>,
    ) -> Result<Session, CatError> {
        let mut events = events.into_iter();
        let Some(SessionEvent::Started { config, seed, schedule }) = events.next() else {
            return Err(CatError::ReplayDivergence("log does not begin with `started`".into()));
        };
        let mut session = Session::start(id, bank, config.seeded(*seed))?;
        if session.schedule != *schedule {
            return Err(CatError::ReplayDivergence("schedule differs".into()));
        }
        for event in events {
            match event {
                SessionEvent::Started { .. } => {
                    return Err(CatError::ReplayDivergence("second `started` event".into()))
                }
                SessionEvent::Presented { item_id, option_order, .. } => {
                    let shown = session.next_item(bank)?;
                    let order = session.administered.last().and_then(|a| a.option_order);
                    if shown.item_id != *item_id || order != *option_order {
                        return Err(CatError::ReplayDivergence(format!(
                            "expected {item_id:?} to be presented, got {:?}",
                            shown.item_id
                        )));
                    }
                }
                SessionEvent::Answered { item_id, answer, latency_ms } => {
                    session.submit_response(bank, item_id, *answer, *latency_ms)?;
                }
                SessionEvent::Warned { item_id } => {
                    let regenerated = matches!(
                        session.transcript.last(),
                        Some(SessionEvent::Warned { item_id: w }) if w == item_id
                    );
                    if !regenerated {
                        return Err(CatError::ReplayDivergence(format!("unexpected warning for {item_id:?}")));
                    }
                }
                SessionEvent::Finalized { demographics, result } => {
                    let again = session.finalize(bank, *demographics)?;
                    if again != *result {
                        return Err(CatError::ReplayDivergence("final result differs".into()));
                    }
                }
            }
        }
        Ok(session)
    }
}

#[cfg(test)]
mod tests;
