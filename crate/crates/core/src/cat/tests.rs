use proptest::prelude::*;

use super::*;
use crate::bank::{demo_bank, Stimulus};

#[derive(Debug, Clone, Copy)]
struct Step {
    knows: bool,
    picks_synonym: bool,
}

fn choice_for(session: &Session, bank: &ItemBank, synonym: bool) -> u8 {
    let a = session.administered().last().unwrap();
    let order = a.option_order.unwrap();
    let syn = bank.get(&a.stimulus_id).unwrap().synonym_index.unwrap();
    let pos = order.iter().position(|&o| o == syn).unwrap() as u8;
    if synonym {
        pos
    } else {
        (pos + 1) % 4
    }
}

fn run_script(bank: &ItemBank, config: SessionConfig, script: &[Step]) -> Session {
    let mut s = Session::start("scripted", bank, config).unwrap();
    for step in script {
        let p = s.next_item(bank).unwrap();
        let answer = if step.knows { Answer::Know } else { Answer::DontKnow };
        let out = s.submit_response(bank, &p.item_id, answer, 900).unwrap();
        if out.state == SessionState::AwaitingDefinition {
            let c = choice_for(&s, bank, step.picks_synonym);
            s.submit_response(bank, &p.item_id, Answer::Choice(c), 1200).unwrap();
        }
    }
    s
}

fn script_strategy() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec(
        (any::<bool>(), any::<bool>()).prop_map(|(knows, picks_synonym)| Step { knows, picks_synonym }),
        30,
    )
}

fn small_bank(binary: &[f64]) -> ItemBank {
    let mut stimuli: Vec<Stimulus> = binary
        .iter()
        .enumerate()
        .map(|(i, &b)| Stimulus::binary(format!("b{i}"), format!("słowo{i}"), b))
        .collect();
    stimuli.push(Stimulus::multiple_choice(
        "m0",
        "wybór",
        -3.0,
        ["synonim".into(), "x".into(), "y".into(), "z".into()],
        0,
    ));
    stimuli.push(Stimulus::pseudoword("p0", "brzdęk"));
    let mut bank = ItemBank::new(stimuli);
    bank.conversion = Some(ConversionCoefficients { cap: 140_000.0, slope: 0.5, midpoint: 0.0 });
    bank
}

fn one_block_config(prior_mean: f64) -> SessionConfig {
    SessionConfig {
        total_items: 5,
        composition: Composition { binary: 3, multiple_choice: 1, pseudoword: 1 },
        prior: Prior::new(prior_mean, 3.0).unwrap(),
        randomesque_k: 1,
        ..Default::default()
    }
    .seeded(11)
}

#[test]
fn default_schedule_is_six_balanced_blocks() {
    let s = Session::start("s", &demo_bank(), SessionConfig::default().seeded(3)).unwrap();
    assert_eq!(s.schedule().len(), 30);
    for block in s.schedule().chunks(5) {
        let count = |k| block.iter().filter(|&&x| x == k).count();
        assert_eq!(
            (count(StimulusKind::Binary), count(StimulusKind::MultipleChoice), count(StimulusKind::Pseudoword)),
            (3, 1, 1)
        );
    }
    assert_eq!(s.ability(), Ability { theta: 0.0, se: 3.0 });
}

#[test]
fn scaled_config_is_one_block() {
    let s = Session::start("s", &demo_bank(), SessionConfig::with_length(5).unwrap().seeded(1)).unwrap();
    assert_eq!(s.schedule().len(), 5);
}

#[test]
fn same_seed_same_schedule() {
    let bank = demo_bank();
    let a = Session::start("a", &bank, SessionConfig::default().seeded(99)).unwrap();
    let b = Session::start("b", &bank, SessionConfig::default().seeded(99)).unwrap();
    assert_eq!(a.schedule(), b.schedule());
}

#[test]
fn ineligible_bank_lists_deficiencies() {
    let err = Session::start("s", &ItemBank::default(), SessionConfig::default()).unwrap_err();
    match err {
        CatError::Ineligible(d) => assert_eq!(d.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_config_rejected() {
    let cfg = SessionConfig { total_items: 31, ..Default::default() };
    assert!(matches!(Session::start("s", &demo_bank(), cfg), Err(CatError::InvalidConfig(_))));
    assert!(SessionConfig::with_length(12).is_err());
}

#[test]
fn most_informative_item_is_selected() {
    let bank = small_bank(&[-2.0, 0.0, 3.0]);
    let candidates: Vec<&Stimulus> = bank.administrable(StimulusKind::Binary).collect();
    assert_eq!(rank_by_information(0.4, &candidates)[0].difficulty, Some(0.0));

    let cfg = SessionConfig {
        total_items: 3,
        composition: Composition { binary: 3, multiple_choice: 0, pseudoword: 0 },
        ..one_block_config(0.4)
    };
    let mut s = Session::start("s", &bank, cfg).unwrap();
    let p = s.next_item(&bank).unwrap();
    assert_eq!(bank.get(&p.item_id).unwrap().difficulty, Some(0.0));
}

#[test]
fn information_ties_prefer_easier_item() {
    let bank = small_bank(&[1.0, -1.0, 5.0]);
    let candidates: Vec<&Stimulus> = bank.administrable(StimulusKind::Binary).collect();
    let ranked = rank_by_information(0.0, &candidates);
    assert_eq!(ranked[0].difficulty, Some(-1.0));
    assert_eq!(ranked[1].difficulty, Some(1.0));

    let twins = ItemBank::new(vec![Stimulus::binary("zz", "a", 0.5), Stimulus::binary("aa", "b", 0.5)]);
    let c: Vec<&Stimulus> = twins.stimuli.iter().collect();
    assert_eq!(rank_by_information(0.0, &c)[0].id, "aa");
}

#[test]
fn last_remaining_item_is_used() {
    let bank = small_bank(&[-2.0, 0.0, 3.0]);
    let s = run_script(
        &bank,
        one_block_config(0.0),
        &[Step { knows: false, picks_synonym: false }; 4],
    );
    let mut s = s;
    let p = s.next_item(&bank).unwrap();
    let used: Vec<_> = s.administered()[..4].iter().map(|a| a.stimulus_id.clone()).collect();
    assert!(!used.contains(&p.item_id));
}

fn advance_to(s: &mut Session, bank: &ItemBank, kind: StimulusKind) -> Presentation {
    loop {
        let p = s.next_item(bank).unwrap();
        if p.kind == kind {
            return p;
        }
        let out = s.submit_response(bank, &p.item_id, Answer::Know, 10).unwrap();
        if out.state == SessionState::AwaitingDefinition {
            let c = choice_for(s, bank, true);
            s.submit_response(bank, &p.item_id, Answer::Choice(c), 10).unwrap();
        }
    }
}

#[test]
fn pseudoword_claim_warns_without_penalty() {
    let bank = demo_bank();
    let mut s = Session::start("s", &bank, SessionConfig::default().seeded(5)).unwrap();
    let p = advance_to(&mut s, &bank, StimulusKind::Pseudoword);
    let before = (s.ability(), s.attention());
    let out = s.submit_response(&bank, &p.item_id, Answer::Know, 500).unwrap();
    assert!(out.warning);
    assert_eq!(out.scored_correct, None);
    let after = s.attention();
    assert_eq!(s.ability().theta.to_bits(), before.0.theta.to_bits());
    assert_eq!(s.ability().se.to_bits(), before.0.se.to_bits());
    assert_eq!(after.x, before.1.x);
    assert_eq!(after.ax, before.1.ax + 1);
    assert!(matches!(s.transcript().last(), Some(SessionEvent::Warned { .. })));
}

#[test]
fn warning_can_be_switched_off() {
    let bank = demo_bank();
    let cfg = SessionConfig { pseudoword_warning: false, ..SessionConfig::default().seeded(5) };
    let mut s = Session::start("s", &bank, cfg).unwrap();
    let p = advance_to(&mut s, &bank, StimulusKind::Pseudoword);
    assert!(!s.submit_response(&bank, &p.item_id, Answer::Know, 1).unwrap().warning);
}

#[test]
fn correct_definition_on_easy_item_raises_estimate() {
    let bank = demo_bank();
    let mut s = Session::start("s", &bank, SessionConfig::default().seeded(8)).unwrap();
    let p = advance_to(&mut s, &bank, StimulusKind::MultipleChoice);
    let b = bank.get(&p.item_id).unwrap().difficulty.unwrap();
    let theta_before = s.ability().theta;
    let out = s.submit_response(&bank, &p.item_id, Answer::Know, 1).unwrap();
    assert_eq!(out.state, SessionState::AwaitingDefinition);
    let shown = s.next_item(&bank).unwrap();
    assert_eq!(shown.stage, Stage::Definition);
    assert_eq!(shown.options.as_ref().unwrap().len(), 4);
    let c = choice_for(&s, &bank, true);
    let out = s.submit_response(&bank, &p.item_id, Answer::Choice(c), 1).unwrap();
    assert_eq!(out.scored_correct, Some(true));
    // any correct response moves the posterior mean up; the item here is also
    // checked against a direct recomputation of the posterior
    assert!(s.ability().theta > theta_before, "b={b}");
    assert_eq!(s.ability(), estimate_ability(s.scored_responses(), &s.config().prior));
    assert_eq!(s.attention().y, 1);
    assert_eq!(s.attention().ay, 1);
}

#[test]
fn dont_know_on_multiple_choice_is_incorrect_without_definition() {
    let bank = demo_bank();
    let mut s = Session::start("s", &bank, SessionConfig::default().seeded(8)).unwrap();
    let p = advance_to(&mut s, &bank, StimulusKind::MultipleChoice);
    let ay = s.attention().ay;
    let out = s.submit_response(&bank, &p.item_id, Answer::DontKnow, 1).unwrap();
    assert_eq!(out.scored_correct, Some(false));
    assert_eq!(s.attention().ay, ay);

    let paper = SessionConfig { mc_attention: McAttentionBase::AllPresented, ..SessionConfig::default().seeded(8) };
    let mut s = Session::start("s", &bank, paper).unwrap();
    let p = advance_to(&mut s, &bank, StimulusKind::MultipleChoice);
    let ay = s.attention().ay;
    s.submit_response(&bank, &p.item_id, Answer::DontKnow, 1).unwrap();
    assert_eq!(s.attention().ay, ay + 1);
}

#[test]
fn rejected_answers_leave_state_untouched() {
    let bank = demo_bank();
    let mut s = Session::start("s", &bank, SessionConfig::default().seeded(8)).unwrap();
    let p = advance_to(&mut s, &bank, StimulusKind::MultipleChoice);
    let snapshot = |s: &Session| (s.transcript().len(), s.state(), s.position(), s.attention());

    let before = snapshot(&s);
    assert!(matches!(s.submit_response(&bank, &p.item_id, Answer::Choice(0), 1), Err(CatError::StageMismatch(_))));
    assert!(matches!(s.submit_response(&bank, "nope", Answer::Know, 1), Err(CatError::UnknownStimulus(_))));
    assert_eq!(snapshot(&s), before);

    s.submit_response(&bank, &p.item_id, Answer::Know, 1).unwrap();
    let before = snapshot(&s);
    assert!(matches!(s.submit_response(&bank, &p.item_id, Answer::Know, 1), Err(CatError::DuplicateAnswer(_))));
    assert!(matches!(s.submit_response(&bank, &p.item_id, Answer::DontKnow, 1), Err(CatError::StageMismatch(_))));
    assert!(matches!(s.submit_response(&bank, &p.item_id, Answer::Choice(5), 1), Err(CatError::InvalidAnswer(_))));
    assert_eq!(snapshot(&s), before);

    s.submit_response(&bank, &p.item_id, Answer::Choice(2), 1).unwrap();
    let before = snapshot(&s);
    assert!(matches!(s.submit_response(&bank, &p.item_id, Answer::Choice(2), 1), Err(CatError::DuplicateAnswer(_))));
    assert_eq!(snapshot(&s), before);
}

#[test]
fn next_item_is_idempotent_while_pending() {
    let bank = demo_bank();
    let mut s = Session::start("s", &bank, SessionConfig::default().seeded(2)).unwrap();
    let a = s.next_item(&bank).unwrap();
    let b = s.next_item(&bank).unwrap();
    assert_eq!(a, b);
    assert_eq!(s.transcript().len(), 2);
}

fn all_steps(knows: bool, picks_synonym: bool) -> Vec<Step> {
    vec![Step { knows, picks_synonym }; 30]
}

#[test]
fn finalize_rules() {
    let bank = demo_bank();
    let mut early = Session::start("s", &bank, SessionConfig::default().seeded(1)).unwrap();
    assert!(matches!(early.finalize(&bank, None), Err(CatError::WrongState { .. })));

    // knows every real word, rejects every pseudoword: perfect attention
    let mut s = Session::start("s", &bank, SessionConfig::default().seeded(1)).unwrap();
    while s.state() != SessionState::AwaitingDemographics {
        let p = s.next_item(&bank).unwrap();
        let a = if p.kind == StimulusKind::Pseudoword { Answer::DontKnow } else { Answer::Know };
        if s.submit_response(&bank, &p.item_id, a, 1).unwrap().state == SessionState::AwaitingDefinition {
            let c = choice_for(&s, &bank, true);
            s.submit_response(&bank, &p.item_id, Answer::Choice(c), 1).unwrap();
        }
    }
    assert!(matches!(s.next_item(&bank), Err(CatError::WrongState { .. })));
    let mut dishonest = s.clone();
    let r = s.finalize(&bank, Some(Demographics { age: 30, native: true, honest: true })).unwrap();
    assert_eq!(r.attention_index, Some(1.0));
    assert!(r.trusted);
    assert_eq!(r.vocab_words, logits_to_words(r.theta, &bank.conversion.unwrap()).unwrap());
    assert_eq!(s.state(), SessionState::Complete);
    assert!(matches!(s.finalize(&bank, None), Err(CatError::WrongState { .. })));

    let r = dishonest.finalize(&bank, Some(Demographics { age: 30, native: true, honest: false })).unwrap();
    assert!(!r.trusted);
}

#[test]
fn low_attention_is_untrusted() {
    let bank = demo_bank();
    // claims every item: x = 0 of 6, every definition right: 6 / 12 = 0.5
    let s = run_script(&bank, SessionConfig::default().seeded(4), &all_steps(true, true));
    let mut s = s;
    let r = s.finalize(&bank, Some(Demographics { age: 40, native: false, honest: true })).unwrap();
    assert_eq!(r.attention_index, Some(0.5));
    assert!(!r.trusted);

    assert!(!is_trusted(Some(0.69), 0.70, true));
    assert!(is_trusted(Some(0.70), 0.70, true));
    assert!(!is_trusted(Some(1.0), 0.70, false));
    assert!(!is_trusted(None, 0.70, true));
}

#[test]
fn missing_conversion_is_a_configuration_error() {
    let mut bank = demo_bank();
    let mut s = run_script(&bank, SessionConfig::default().seeded(4), &all_steps(false, false));
    bank.conversion = None;
    assert!(matches!(s.finalize(&bank, None), Err(CatError::Configuration(_))));
    assert_eq!(s.state(), SessionState::AwaitingDemographics);
}

#[test]
fn untrusted_without_control_items() {
    let bank = demo_bank();
    let cfg = SessionConfig {
        total_items: 3,
        composition: Composition { binary: 3, multiple_choice: 0, pseudoword: 0 },
        ..SessionConfig::default().seeded(1)
    };
    let mut s = run_script(&bank, cfg, &[Step { knows: true, picks_synonym: true }; 3]);
    let r = s.finalize(&bank, Some(Demographics { age: 20, native: true, honest: true })).unwrap();
    assert_eq!(r.attention_index, None);
    assert!(!r.trusted);
}

#[test]
fn log_record_round_trip() {
    let bank = demo_bank();
    let mut s = run_script(&bank, SessionConfig::default().seeded(21), &all_steps(true, false));
    s.finalize(&bank, Some(Demographics { age: 33, native: true, honest: true })).unwrap();
    let ts = chrono::DateTime::parse_from_rfc3339("2025-03-01T12:00:00Z").unwrap().to_utc();
    let mut buf = Vec::new();
    for e in s.transcript() {
        write_record(&mut buf, &LogRecord { ts, session_id: s.id().into(), event: e.clone() }).unwrap();
    }
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.lines().next().unwrap().contains(r#""event":"started""#));
    let back = read_log(buf.as_slice()).unwrap();
    let events: Vec<_> = back.iter().map(|r| r.event.clone()).collect();
    assert_eq!(events, s.transcript());
    let replayed = Session::replay(s.id(), &bank, &events).unwrap();
    assert_eq!(replayed.transcript(), s.transcript());
    assert_eq!(replayed.result(), s.result());
}

#[test]
fn replay_detects_foreign_bank() {
    let bank = demo_bank();
    let s = run_script(&bank, SessionConfig::default().seeded(21), &all_steps(true, false)[..4]);
    let mut other = demo_bank();
    other.stimuli.reverse();
    for st in other.stimuli.iter_mut() {
        if let Some(d) = st.difficulty.as_mut() {
            *d = -*d;
        }
    }
    assert!(matches!(
        Session::replay("x", &other, s.transcript()),
        Err(CatError::ReplayDivergence(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn completed_sessions_are_balanced_and_replayable(script in script_strategy(), seed in any::<u64>()) {
        let bank = demo_bank();
        let s = run_script(&bank, SessionConfig::default().seeded(seed), &script);
        prop_assert_eq!(s.state(), SessionState::AwaitingDemographics);
        let count = |k| s.administered().iter().filter(|a| a.kind == k).count();
        prop_assert_eq!(count(StimulusKind::Binary), 18);
        prop_assert_eq!(count(StimulusKind::MultipleChoice), 6);
        prop_assert_eq!(count(StimulusKind::Pseudoword), 6);
        let ids: HashSet<_> = s.administered().iter().map(|a| a.stimulus_id.as_str()).collect();
        prop_assert_eq!(ids.len(), 30);
        prop_assert_eq!(s.ability(), estimate_ability(s.scored_responses(), &s.config().prior));

        let again = run_script(&bank, SessionConfig::default().seeded(seed), &script);
        prop_assert_eq!(again.transcript_jsonl(), s.transcript_jsonl());

        let replayed = Session::replay("scripted", &bank, s.transcript()).unwrap();
        prop_assert_eq!(replayed.transcript_jsonl(), s.transcript_jsonl());
        prop_assert_eq!(replayed.ability(), s.ability());
        prop_assert_eq!(replayed.attention(), s.attention());
    }

    #[test]
    fn pseudowords_never_move_the_estimate(script in script_strategy(), seed in any::<u64>()) {
        let bank = demo_bank();
        let mut s = Session::start("p", &bank, SessionConfig::default().seeded(seed)).unwrap();
        for step in &script {
            let p = s.next_item(&bank).unwrap();
            let before = s.ability();
            let a = if step.knows { Answer::Know } else { Answer::DontKnow };
            let out = s.submit_response(&bank, &p.item_id, a, 1).unwrap();
            if p.kind == StimulusKind::Pseudoword {
                prop_assert_eq!(before.theta.to_bits(), s.ability().theta.to_bits());
                prop_assert_eq!(before.se.to_bits(), s.ability().se.to_bits());
            }
            if out.state == SessionState::AwaitingDefinition {
                let c = choice_for(&s, &bank, step.picks_synonym);
                s.submit_response(&bank, &p.item_id, Answer::Choice(c), 1).unwrap();
            }
        }
    }

    /// The adaptive path changes once an answer changes, so the comparison is
    /// made over the items the session actually administered.
    #[test]
    fn upgrading_one_answer_never_lowers_final_estimate(script in script_strategy(), seed in any::<u64>(), at in 0usize..30) {
        let bank = demo_bank();
        let base = run_script(&bank, SessionConfig::default().seeded(seed), &script);
        let mut scored = base.scored_responses().to_vec();
        let idx = at % scored.len();
        if scored[idx].correct {
            return Ok(());
        }
        scored[idx].correct = true;
        let up = estimate_ability(&scored, &base.config().prior);
        prop_assert!(up.theta >= base.ability().theta - 1e-12);
    }
}
