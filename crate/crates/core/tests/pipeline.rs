//! End-to-end through the public API: sessions feed calibration, calibration
//! feeds the conversion fit, and session results feed the study pipeline.

use chrono::{Duration, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vocabsize_core::bank::demo_bank;
use vocabsize_core::calibration::{calibrate, fit_conversion, matrix_from_sessions, prune_items, CalibrationOptions};
use vocabsize_core::cat::SessionState;
use vocabsize_core::sim::{honest_population, run_session};
use vocabsize_core::study::{analyze, clean, CleaningConfig, StudyRecord};
use vocabsize_core::{Session, SessionConfig};

fn sessions(n: usize, seed: u64) -> Vec<Session> {
    let bank = demo_bank();
    let profiles = honest_population(n, 0.8, 2.5, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    profiles
        .iter()
        .map(|p| run_session(&bank, &SessionConfig::default(), p, &mut rng).unwrap())
        .collect()
}

#[test]
fn session_logs_recalibrate_the_bank() {
    let bank = demo_bank();
    let done = sessions(400, 5);
    assert!(done.iter().all(|s| s.state() == SessionState::Complete));
    let ids: Vec<String> = (0..done.len()).map(|i| format!("s{i}")).collect();
    let matrix = matrix_from_sessions(&bank, ids.iter().map(String::as_str).zip(done.iter().map(|s| s.transcript())))
        .unwrap();
    let result = calibrate(&matrix, &CalibrationOptions::default()).unwrap();
    assert!(result.converged);

    // Banked and recalibrated difficulties share an origin only up to a shift.
    let pairs: Vec<(f64, f64)> = result
        .item_difficulties
        .iter()
        .map(|(id, e)| (bank.get(id).unwrap().difficulty.unwrap(), e.difficulty))
        .collect();
    let shift = pairs.iter().map(|(a, b)| a - b).sum::<f64>() / pairs.len() as f64;
    let rmse = (pairs.iter().map(|(a, b)| (a - b - shift).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
    assert!(pairs.len() > 30 && rmse < 0.6, "{} items, rmse {rmse}", pairs.len());

    let report = prune_items(&result, 1.3, 2.0);
    assert_eq!(report.retained.len() + report.removed.len(), result.item_difficulties.len());

    let ranked: Vec<(f64, f64)> = bank
        .stimuli
        .iter()
        .filter_map(|s| Some((f64::from(s.rank?), s.difficulty?)))
        .collect();
    let fit = fit_conversion(&ranked).unwrap();
    let c = bank.conversion.unwrap();
    assert!((fit.coefficients.slope - c.slope).abs() < 1e-3);
    assert!((fit.coefficients.midpoint - c.midpoint).abs() < 1e-3);
}

#[test]
fn session_results_flow_into_the_study_pipeline() {
    let start = Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap();
    let records: Vec<StudyRecord> = sessions(300, 9)
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let r = s.result().unwrap();
            StudyRecord {
                session_id: format!("s{i}"),
                vocab_words: r.vocab_words,
                theta: r.theta,
                se: r.se,
                attention: r.attention_index,
                duration_s: 240.0,
                age: 10 + (i as u32 % 60),
                native: i % 3 != 0,
                honest: true,
                finished_at: start + Duration::hours(i as i64),
            }
        })
        .collect();
    let (kept, report) = clean(&records, &CleaningConfig::default());
    assert_eq!(report.removed_honesty + report.removed_age + report.removed_duration, 0);
    assert!(report.flagged_retakes.is_empty());
    assert_eq!(kept.len() + report.removed(), records.len());
    assert!(kept.len() > 250, "{report:?}");
    let analysis = analyze(&kept, 5).unwrap();
    assert!(!analysis.to_text().is_empty());
}
