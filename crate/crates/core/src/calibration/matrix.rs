use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::Deserialize;

use crate::bank::{ItemBank, StimulusKind};
use crate::cat::{Answer, SessionEvent};

use super::CalibrationError;

/// Sparse persons × items matrix of dichotomous scores. Absent cells were not
/// administered.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseMatrix {
    persons: Vec<String>,
    items: Vec<String>,
    /// Per person: (item index, correct), sorted by item index.
    rows: Vec<Vec<(usize, bool)>>,
}

impl ResponseMatrix {
    /// Builds a matrix from `(person, item, score)` triples. Persons and items
    /// keep first-seen order. A repeated cell must agree with the earlier one.
    pub fn from_triples<P, I>(triples: impl IntoIterator<Item = (P, I, u8)>) -> Result<Self, CalibrationError>
    where
        P: AsRef<str>,
        I: AsRef<str>,
    {
        let mut m = ResponseMatrix::default();
        let mut person_ix: HashMap<String, usize> = HashMap::new();
        let mut item_ix: HashMap<String, usize> = HashMap::new();
        let mut cells: Vec<BTreeMap<usize, bool>> = Vec::new();
        for (p, i, score) in triples {
            let (p, i) = (p.as_ref(), i.as_ref());
            let correct = match score {
                0 => false,
                1 => true,
                other => {
                    return Err(CalibrationError::InvalidInput(format!(
                        "score for ({p}, {i}) must be 0 or 1, got {other}"
                    )))
                }
            };
            let pi = *person_ix.entry(p.to_string()).or_insert_with(|| {
                m.persons.push(p.to_string());
                cells.push(BTreeMap::new());
                m.persons.len() - 1
            });
            let ii = *item_ix.entry(i.to_string()).or_insert_with(|| {
                m.items.push(i.to_string());
                m.items.len() - 1
            });
            if let Some(prev) = cells[pi].insert(ii, correct) {
                if prev != correct {
                    return Err(CalibrationError::InvalidInput(format!(
                        "conflicting scores for ({p}, {i})"
                    )));
                }
            }
        }
        m.rows = cells.into_iter().map(|c| c.into_iter().collect()).collect();
        Ok(m)
    }

    /// Reads `person_id,item_id,score` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CalibrationError> {
        #[derive(Deserialize)]
        struct Row {
            person_id: String,
            item_id: String,
            score: u8,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut triples = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| CalibrationError::InvalidInput(format!("csv row {}: {e}", i + 2)))?;
            triples.push((row.person_id, row.item_id, row.score));
        }
        Self::from_triples(triples)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), CalibrationError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["person_id", "item_id", "score"]).map_err(io_err)?;
        for (p, row) in self.persons.iter().zip(&self.rows) {
            for &(i, x) in row {
                w.write_record([p.as_str(), self.items[i].as_str(), if x { "1" } else { "0" }])
                    .map_err(io_err)?;
            }
        }
        w.flush().map_err(|e| CalibrationError::Io(e.to_string()))
    }

    pub fn persons(&self) -> &[String] {
        &self.persons
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Observed cells of one person, as (item index, correct).
    pub fn row(&self, person: usize) -> &[(usize, bool)] {
        &self.rows[person]
    }

    pub fn n_observations(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(p, row)| row.iter().map(move |&(i, x)| (p, i, x)))
    }
}

fn io_err(e: csv::Error) -> CalibrationError {
    CalibrationError::Io(e.to_string())
}

/// Scored real-word responses of a finalized, trusted session transcript.
/// Returns `None` for sessions that are unfinished or untrusted, which never
/// enter calibration.
pub fn trusted_scores(bank: &ItemBank, events: &[SessionEvent]) -> Option<Vec<(String, bool)>> {
    let trusted = events.iter().any(|e| matches!(e, SessionEvent::Finalized { result, .. } if result.trusted));
    if !trusted {
        return None;
    }
    let mut orders: HashMap<&str, [u8; 4]> = HashMap::new();
    let mut out = Vec::new();
    for e in events {
        match e {
            SessionEvent::Presented { item_id, option_order: Some(o), .. } => {
                orders.insert(item_id, *o);
            }
            SessionEvent::Answered { item_id, answer, .. } => {
                let Some(s) = bank.get(item_id) else { continue };
                let score = match (s.kind, answer) {
                    (StimulusKind::Pseudoword, _) => None,
                    (_, Answer::DontKnow) => Some(false),
                    (StimulusKind::Binary, Answer::Know) => Some(true),
                    (StimulusKind::MultipleChoice, Answer::Know) => None,
                    (StimulusKind::MultipleChoice, Answer::Choice(c)) => orders
                        .get(item_id.as_str())
                        .map(|o| Some(o[*c as usize % 4]) == s.synonym_index),
                    (StimulusKind::Binary, Answer::Choice(_)) => None,
                };
                if let Some(x) = score {
                    out.push((item_id.clone(), x));
                }
            }
            _ => {}
        }
    }
    Some(out)
}

/// Builds a calibration matrix from session transcripts, keeping trusted
/// sessions only. Sessions are identified by the given ids.
pub fn matrix_from_sessions<'a>(
    bank: &ItemBank,
    sessions: impl IntoIterator<Item = (&'a str, &'a [SessionEvent])>,
) -> Result<ResponseMatrix, CalibrationError> {
    let mut triples = Vec::new();
    for (id, events) in sessions {
        if let Some(scores) = trusted_scores(bank, events) {
            triples.extend(scores.into_iter().map(|(item, x)| (id.to_string(), item, u8::from(x))));
        }
    }
    ResponseMatrix::from_triples(triples)
}
