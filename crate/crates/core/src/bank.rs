//! Stimulus bank: data model, validation, persistence and bank-level statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{logit_histogram, HistogramBin};

pub const BANK_FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum BankError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed bank file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("stimulus {id:?}: field `{field}`: {reason}")]
    InvalidStimulus {
        id: String,
        field: &'static str,
        reason: String,
    },
    #[error("csv import, row {row}: {reason}")]
    Csv { row: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusKind {
    Binary,
    MultipleChoice,
    Pseudoword,
}

impl StimulusKind {
    pub const ALL: [StimulusKind; 3] = [
        StimulusKind::Binary,
        StimulusKind::MultipleChoice,
        StimulusKind::Pseudoword,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StimulusKind::Binary => "binary",
            StimulusKind::MultipleChoice => "multiple_choice",
            StimulusKind::Pseudoword => "pseudoword",
        }
    }

    fn plural(self) -> &'static str {
        match self {
            StimulusKind::Binary => "binary",
            StimulusKind::MultipleChoice => "multiple_choice",
            StimulusKind::Pseudoword => "pseudowords",
        }
    }
}

impl fmt::Display for StimulusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StimulusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "binary" => Ok(StimulusKind::Binary),
            "multiple_choice" => Ok(StimulusKind::MultipleChoice),
            "pseudoword" => Ok(StimulusKind::Pseudoword),
            other => Err(format!("unknown stimulus kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StimulusStatus {
    #[default]
    Active,
    Retired,
}

/// One test item: a real word (binary or multiple-choice) or a pseudoword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub id: String,
    pub surface: String,
    pub kind: StimulusKind,
    /// Calibrated difficulty in logits. Never present on pseudowords.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
    /// Frequency rank, 1 = most frequent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
    /// Synonym plus three distractors, multiple-choice items only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synonym_index: Option<u8>,
    #[serde(default)]
    pub status: StimulusStatus,
}

impl Stimulus {
    pub fn binary(id: impl Into<String>, surface: impl Into<String>, difficulty: f64) -> Self {
        Stimulus {
            id: id.into(),
            surface: surface.into(),
            kind: StimulusKind::Binary,
            difficulty: Some(difficulty),
            rank: None,
            options: None,
            synonym_index: None,
            status: StimulusStatus::Active,
        }
    }

    pub fn multiple_choice(
        id: impl Into<String>,
        surface: impl Into<String>,
        difficulty: f64,
        options: [String; 4],
        synonym_index: u8,
    ) -> Self {
        Stimulus {
            id: id.into(),
            surface: surface.into(),
            kind: StimulusKind::MultipleChoice,
            difficulty: Some(difficulty),
            rank: None,
            options: Some(options.to_vec()),
            synonym_index: Some(synonym_index),
            status: StimulusStatus::Active,
        }
    }

    pub fn pseudoword(id: impl Into<String>, surface: impl Into<String>) -> Self {
        Stimulus {
            id: id.into(),
            surface: surface.into(),
            kind: StimulusKind::Pseudoword,
            difficulty: None,
            rank: None,
            options: None,
            synonym_index: None,
            status: StimulusStatus::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == StimulusStatus::Active
    }

    /// Real word with a finite difficulty.
    pub fn is_calibrated(&self) -> bool {
        self.kind != StimulusKind::Pseudoword && self.difficulty.is_some()
    }

    /// Whether the item can fill a slot of its kind in a live session.
    pub fn is_administrable(&self) -> bool {
        self.is_active() && (self.kind == StimulusKind::Pseudoword || self.is_calibrated())
    }

    pub fn validate(&self) -> Result<(), BankError> {
        let bad = |field: &'static str, reason: String| BankError::InvalidStimulus {
            id: self.id.clone(),
            field,
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(bad("id", "must not be empty".into()));
        }
        if self.surface.trim().is_empty() {
            return Err(bad("surface", "must not be empty".into()));
        }
        if let Some(d) = self.difficulty {
            if self.kind == StimulusKind::Pseudoword {
                return Err(bad("difficulty", "pseudowords carry no difficulty".into()));
            }
            if !d.is_finite() {
                return Err(bad("difficulty", format!("must be finite, got {d}")));
            }
        }
        if self.rank == Some(0) {
            return Err(bad("rank", "must be a positive integer".into()));
        }
        match self.kind {
            StimulusKind::MultipleChoice => {
                let options = self
                    .options
                    .as_ref()
                    .ok_or_else(|| bad("options", "required for multiple_choice".into()))?;
                if options.len() != 4 {
                    return Err(bad(
                        "options",
                        format!("need exactly 4 options, got {}", options.len()),
                    ));
                }
                let distinct: HashSet<&str> = options.iter().map(String::as_str).collect();
                if distinct.len() != 4 {
                    return Err(bad("options", "options must be distinct".into()));
                }
                match self.synonym_index {
                    Some(i) if i < 4 => {}
                    Some(i) => return Err(bad("synonym_index", format!("must be 0..=3, got {i}"))),
                    None => return Err(bad("synonym_index", "required for multiple_choice".into())),
                }
            }
            _ => {
                if self.options.is_some() {
                    return Err(bad("options", format!("not allowed on {} items", self.kind)));
                }
                if self.synonym_index.is_some() {
                    return Err(bad(
                        "synonym_index",
                        format!("not allowed on {} items", self.kind),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Coefficients of the logistic logit-to-words conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionCoefficients {
    /// Upper asymptote in words.
    pub cap: f64,
    /// Steepness per logit.
    pub slope: f64,
    /// Logit at which the estimate is half the cap.
    pub midpoint: f64,
}

impl ConversionCoefficients {
    pub const DEFAULT_CAP: f64 = 140_000.0;

    pub fn validate(&self) -> Result<(), String> {
        if !(self.cap.is_finite() && self.cap > 0.0) {
            return Err(format!("cap must be > 0, got {}", self.cap));
        }
        if !(self.slope.is_finite() && self.slope > 0.0) {
            return Err(format!("slope must be > 0, got {}", self.slope));
        }
        if !self.midpoint.is_finite() {
            return Err(format!("midpoint must be finite, got {}", self.midpoint));
        }
        Ok(())
    }
}

/// Per-session counts of each kind: binary, multiple-choice, pseudoword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub binary: usize,
    pub multiple_choice: usize,
    pub pseudoword: usize,
}

impl Composition {
    pub fn total(&self) -> usize {
        self.binary + self.multiple_choice + self.pseudoword
    }

    pub fn count(&self, kind: StimulusKind) -> usize {
        match kind {
            StimulusKind::Binary => self.binary,
            StimulusKind::MultipleChoice => self.multiple_choice,
            StimulusKind::Pseudoword => self.pseudoword,
        }
    }

    /// The 60-20-20 split scaled to `total` items (a multiple of 5).
    pub fn scaled(total: usize) -> Option<Self> {
        if total == 0 || total % 5 != 0 {
            return None;
        }
        let unit = total / 5;
        Some(Composition {
            binary: 3 * unit,
            multiple_choice: unit,
            pseudoword: unit,
        })
    }
}

impl Default for Composition {
    fn default() -> Self {
        Composition {
            binary: 18,
            multiple_choice: 6,
            pseudoword: 6,
        }
    }
}

/// Something that keeps a bank from running a full session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Deficiency {
    Shortfall {
        kind: StimulusKind,
        need: usize,
        have: usize,
    },
    DuplicateId {
        id: String,
    },
}

impl fmt::Display for Deficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deficiency::Shortfall { kind, need, have } => {
                write!(f, "{}: need {need}, have {have}", kind.plural())
            }
            Deficiency::DuplicateId { id } => write!(f, "duplicate id: {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversion: Option<ConversionCoefficients>,
    #[serde(default)]
    pub stimuli: Vec<Stimulus>,
}

impl Default for ItemBank {
    fn default() -> Self {
        ItemBank {
            version: BANK_FORMAT_VERSION.to_string(),
            conversion: None,
            stimuli: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyStats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSummary {
    pub total: usize,
    pub by_kind: BTreeMap<StimulusKind, usize>,
    pub active: usize,
    pub retired: usize,
    pub calibrated: usize,
    /// Over calibrated active items; absent when there are none.
    pub difficulty: Option<DifficultyStats>,
}

impl ItemBank {
    pub fn new(stimuli: Vec<Stimulus>) -> Self {
        ItemBank {
            stimuli,
            ..Default::default()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, BankError> {
        let bank: ItemBank = serde_json::from_str(s)?;
        bank.validate_stimuli()?;
        if let Some(c) = &bank.conversion {
            c.validate().map_err(|reason| BankError::InvalidStimulus {
                id: "<conversion>".into(),
                field: "conversion",
                reason,
            })?;
        }
        Ok(bank)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serialises")
    }

    /// Checks every per-stimulus invariant. Duplicate ids are reported by
    /// [`validate_for_administration`] instead, so such banks still load.
    pub fn validate_stimuli(&self) -> Result<(), BankError> {
        self.stimuli.iter().try_for_each(Stimulus::validate)
    }

    pub fn get(&self, id: &str) -> Option<&Stimulus> {
        self.stimuli.iter().find(|s| s.id == id)
    }

    pub fn administrable(&self, kind: StimulusKind) -> impl Iterator<Item = &Stimulus> {
        self.stimuli
            .iter()
            .filter(move |s| s.kind == kind && s.is_administrable())
    }

    /// Appends rows of a word-list CSV (`surface,kind,rank,option1..4,synonym_index`)
    /// as uncalibrated active stimuli with generated ids. Returns the new ids.
    pub fn import_csv<R: Read>(&mut self, reader: R, id_prefix: &str) -> Result<Vec<String>, BankError> {
        #[derive(Deserialize)]
        struct Row {
            surface: String,
            kind: String,
            rank: Option<u32>,
            option1: Option<String>,
            option2: Option<String>,
            option3: Option<String>,
            option4: Option<String>,
            synonym_index: Option<u8>,
        }

        let mut taken: HashSet<String> = self.stimuli.iter().map(|s| s.id.clone()).collect();
        let mut counter = 0usize;
        let mut added = Vec::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row_no = i + 2;
            let row = row.map_err(|e| BankError::Csv {
                row: row_no,
                reason: e.to_string(),
            })?;
            let kind: StimulusKind = row.kind.parse().map_err(|reason| BankError::Csv { row: row_no, reason })?;
            let id = loop {
                counter += 1;
                let candidate = format!("{id_prefix}{counter:04}");
                if !taken.contains(&candidate) {
                    break candidate;
                }
            };
            let given: Vec<String> = [row.option1, row.option2, row.option3, row.option4]
                .into_iter()
                .flatten()
                .filter(|o| !o.is_empty())
                .collect();
            let stimulus = Stimulus {
                id: id.clone(),
                surface: row.surface,
                kind,
                difficulty: None,
                rank: row.rank,
                options: (!given.is_empty()).then_some(given),
                synonym_index: row.synonym_index,
                status: StimulusStatus::Active,
            };
            stimulus.validate().map_err(|e| BankError::Csv {
                row: row_no,
                reason: e.to_string(),
            })?;
            taken.insert(id.clone());
            added.push(id);
            self.stimuli.push(stimulus);
        }
        Ok(added)
    }
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ItemBank, BankError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BankError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ItemBank::from_json_str(&text)
}

pub fn save_bank(bank: &ItemBank, path: impl AsRef<Path>) -> Result<(), BankError> {
    let path = path.as_ref();
    std::fs::write(path, bank.to_json_string() + "\n").map_err(|source| BankError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Checks that one full session of `composition` can be served and that ids
/// are unique.
pub fn validate_for_administration(
    bank: &ItemBank,
    composition: &Composition,
) -> Result<(), Vec<Deficiency>> {
    let mut deficiencies = Vec::new();
    for kind in StimulusKind::ALL {
        let need = composition.count(kind);
        let have = bank.administrable(kind).count();
        if have < need {
            deficiencies.push(Deficiency::Shortfall { kind, need, have });
        }
    }
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for s in &bank.stimuli {
        if !seen.insert(s.id.as_str()) && reported.insert(s.id.as_str()) {
            deficiencies.push(Deficiency::DuplicateId { id: s.id.clone() });
        }
    }
    if deficiencies.is_empty() {
        Ok(())
    } else {
        Err(deficiencies)
    }
}

pub fn bank_summary(bank: &ItemBank) -> BankSummary {
    let mut by_kind = BTreeMap::new();
    for kind in StimulusKind::ALL {
        by_kind.insert(kind, bank.stimuli.iter().filter(|s| s.kind == kind).count());
    }
    let active = bank.stimuli.iter().filter(|s| s.is_active()).count();
    let calibrated: Vec<f64> = bank
        .stimuli
        .iter()
        .filter(|s| s.is_active())
        .filter_map(|s| s.difficulty.filter(|_| s.is_calibrated()))
        .collect();
    let difficulty = (!calibrated.is_empty()).then(|| {
        let n = calibrated.len() as f64;
        let mean = calibrated.iter().sum::<f64>() / n;
        let var = calibrated.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        DifficultyStats {
            n: calibrated.len(),
            mean,
            sd: var.sqrt(),
            min: calibrated.iter().copied().fold(f64::INFINITY, f64::min),
            max: calibrated.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    });
    BankSummary {
        total: bank.stimuli.len(),
        by_kind,
        active,
        retired: bank.stimuli.len() - active,
        calibrated: calibrated.len(),
        difficulty,
    }
}

/// Item side of the Wright map: calibrated active items per logit bin.
pub fn wright_item_histogram(bank: &ItemBank, bin_width: f64) -> Result<Vec<HistogramBin>, BankError> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(BankError::InvalidArgument(format!(
            "bin width must be > 0, got {bin_width}"
        )));
    }
    Ok(logit_histogram(
        bank.stimuli
            .iter()
            .filter(|s| s.is_active() && s.is_calibrated())
            .filter_map(|s| s.difficulty),
        bin_width,
    ))
}

const SYLLABLES: [&str; 16] = [
    "ka", "ło", "wie", "czór", "ję", "zy", "dom", "że", "brze", "gi", "no", "sta", "ró", "pa",
    "ść", "mi",
];

/// Synthetic bank for tests and demos: 60 calibrated real words evenly
/// spread over [-7, 6] logits (every fourth is multiple-choice) and 12
/// pseudowords. Ranks follow the bank's own conversion curve.
pub fn demo_bank() -> ItemBank {
    let conversion = ConversionCoefficients {
        cap: ConversionCoefficients::DEFAULT_CAP,
        slope: 0.55,
        midpoint: 0.8,
    };
    let n_real = 60;
    let mut stimuli = Vec::with_capacity(n_real + 12);
    for i in 0..n_real {
        let d = -7.0 + 13.0 * i as f64 / (n_real - 1) as f64;
        let d = (d * 100.0).round() / 100.0;
        let surface = format!(
            "{}{}{}",
            SYLLABLES[i % 16],
            SYLLABLES[(i * 7 + 3) % 16],
            SYLLABLES[(i / 16 + 5) % 16]
        );
        let rank = (conversion.cap * crate::irt::logistic(conversion.slope * (d - conversion.midpoint)))
            .round()
            .max(1.0) as u32;
        let mut s = if i % 4 == 1 {
            let synonym = (i / 4 % 4) as u8;
            Stimulus::multiple_choice(
                format!("mc{i:03}"),
                surface,
                d,
                [
                    format!("znaczenie {i} ą"),
                    format!("znaczenie {i} ę"),
                    format!("znaczenie {i} ó"),
                    format!("znaczenie {i} ż"),
                ],
                synonym,
            )
        } else {
            Stimulus::binary(format!("bin{i:03}"), surface, d)
        };
        s.rank = Some(rank);
        stimuli.push(s);
    }
    for j in 0..12 {
        stimuli.push(Stimulus::pseudoword(
            format!("pw{j:03}"),
            format!("{}{}ńcz", SYLLABLES[(j * 5 + 1) % 16], SYLLABLES[(j * 3 + 2) % 16]),
        ));
    }
    ItemBank {
        version: format!("{BANK_FORMAT_VERSION}-demo"),
        conversion: Some(conversion),
        stimuli,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank_with(binary: usize, mc: usize, pseudo: usize) -> ItemBank {
        let mut stimuli = Vec::new();
        for i in 0..binary {
            stimuli.push(Stimulus::binary(format!("b{i}"), format!("słowo{i}"), i as f64 * 0.1));
        }
        for i in 0..mc {
            stimuli.push(Stimulus::multiple_choice(
                format!("m{i}"),
                format!("wybór{i}"),
                0.0,
                ["a".into(), "b".into(), "c".into(), "d".into()],
                0,
            ));
        }
        for i in 0..pseudo {
            stimuli.push(Stimulus::pseudoword(format!("p{i}"), format!("brzdęk{i}")));
        }
        ItemBank::new(stimuli)
    }

    #[test]
    fn exact_session_needs_are_enough() {
        assert_eq!(validate_for_administration(&bank_with(18, 6, 6), &Composition::default()), Ok(()));
    }

    #[test]
    fn missing_pseudoword_is_reported() {
        let err = validate_for_administration(&bank_with(18, 6, 5), &Composition::default()).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].to_string(), "pseudowords: need 6, have 5");
    }

    #[test]
    fn duplicate_id_is_reported() {
        let mut bank = bank_with(18, 6, 6);
        bank.stimuli.push(Stimulus::binary("b3", "kopia", 1.0));
        let err = validate_for_administration(&bank, &Composition::default()).unwrap_err();
        assert_eq!(err, vec![Deficiency::DuplicateId { id: "b3".into() }]);
    }

    #[test]
    fn retired_and_uncalibrated_items_do_not_count() {
        let mut bank = bank_with(18, 6, 6);
        bank.stimuli[0].status = StimulusStatus::Retired;
        bank.stimuli[1].difficulty = None;
        let err = validate_for_administration(&bank, &Composition::default()).unwrap_err();
        assert_eq!(err[0].to_string(), "binary: need 18, have 16");
    }

    #[test]
    fn empty_bank_parses_but_is_ineligible() {
        let bank = ItemBank::from_json_str(r#"{"version":"1","stimuli":[]}"#).unwrap();
        assert!(bank.stimuli.is_empty());
        assert_eq!(validate_for_administration(&bank, &Composition::default()).unwrap_err().len(), 3);
    }

    #[test]
    fn three_option_item_names_id_and_field() {
        let text = r#"{"version":"1","stimuli":[
            {"id":"mc7","surface":"wieczór","kind":"multiple_choice","difficulty":-1.0,
             "options":["a","b","c"],"synonym_index":0,"status":"active"}]}"#;
        let err = ItemBank::from_json_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mc7") && msg.contains("options"), "{msg}");
    }

    #[test]
    fn pseudoword_with_difficulty_rejected() {
        let text = r#"{"version":"1","stimuli":[
            {"id":"p1","surface":"jedlca","kind":"pseudoword","difficulty":2.0,"status":"active"}]}"#;
        assert!(matches!(
            ItemBank::from_json_str(text),
            Err(BankError::InvalidStimulus { field: "difficulty", .. })
        ));
    }

    #[test]
    fn summary_statistics() {
        let single = ItemBank::new(vec![Stimulus::binary("a", "a", 1.0)]);
        let d = bank_summary(&single).difficulty.unwrap();
        assert_eq!((d.mean, d.sd), (1.0, 0.0));

        let two = ItemBank::new(vec![Stimulus::binary("a", "a", -1.0), Stimulus::binary("b", "b", 3.0)]);
        let d = bank_summary(&two).difficulty.unwrap();
        assert_eq!((d.mean, d.min, d.max), (1.0, -1.0, 3.0));

        let pseudo = bank_with(0, 0, 4);
        let s = bank_summary(&pseudo);
        assert_eq!(s.difficulty, None);
        assert_eq!(s.by_kind[&StimulusKind::Pseudoword], 4);
    }

    #[test]
    fn wright_histogram_cases() {
        let two = ItemBank::new(vec![Stimulus::binary("a", "a", 0.1), Stimulus::binary("b", "b", 0.2)]);
        let h = wright_item_histogram(&two, 0.5).unwrap();
        assert_eq!(h, vec![HistogramBin { lower: 0.0, upper: 0.5, count: 2 }]);

        let three = ItemBank::new(vec![
            Stimulus::binary("a", "a", -1.2),
            Stimulus::binary("b", "b", 0.3),
            Stimulus::binary("c", "c", 0.4),
        ]);
        let h = wright_item_histogram(&three, 1.0).unwrap();
        let got: Vec<_> = h.iter().map(|b| (b.lower, b.upper, b.count)).collect();
        assert_eq!(got, vec![(-2.0, -1.0, 1), (0.0, 1.0, 2)]);

        assert!(wright_item_histogram(&ItemBank::default(), 1.0).unwrap().is_empty());
        assert!(wright_item_histogram(&three, 0.0).is_err());
    }

    #[test]
    fn demo_bank_is_eligible() {
        let bank = demo_bank();
        bank.validate_stimuli().unwrap();
        assert_eq!(validate_for_administration(&bank, &Composition::default()), Ok(()));
        assert_eq!(validate_for_administration(&bank, &Composition::scaled(60).unwrap()), Ok(()));
        let s = bank_summary(&bank);
        assert_eq!(s.calibrated, 60);
        assert_eq!(s.by_kind[&StimulusKind::Pseudoword], 12);
    }

    #[test]
    fn csv_import_assigns_fresh_ids() {
        let mut bank = ItemBank::new(vec![Stimulus::binary("imp0001", "stare", 0.0)]);
        let csv = "surface,kind,rank,option1,option2,option3,option4,synonym_index\n\
                   wieczór,binary,120,,,,,\n\
                   jedlca,pseudoword,,,,,,\n\
                   źdźbło,multiple_choice,9000,trawka,kamień,chmura,rzeka,0\n";
        let ids = bank.import_csv(csv.as_bytes(), "imp").unwrap();
        assert_eq!(ids, vec!["imp0002", "imp0003", "imp0004"]);
        let mc = bank.get("imp0004").unwrap();
        assert_eq!(mc.options.as_ref().unwrap().len(), 4);
        assert_eq!(mc.difficulty, None);

        let bad = "surface,kind,rank,option1,option2,option3,option4,synonym_index\nx,multiple_choice,1,a,b,c,,0\n";
        assert!(matches!(bank.import_csv(bad.as_bytes(), "imp"), Err(BankError::Csv { row: 2, .. })));
    }

    #[test]
    fn file_round_trip_keeps_diacritics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        let bank = demo_bank();
        save_bank(&bank, &path).unwrap();
        assert_eq!(load_bank(&path).unwrap(), bank);
    }

    fn stimulus_strategy() -> impl Strategy<Value = Stimulus> {
        let surface = "[a-ząćęłńóśźż]{1,12}";
        (0u8..3, surface, -8.0f64..8.0, prop::option::of(1u32..200_000), any::<bool>(), 0u8..4)
            .prop_map(|(k, surface, d, rank, retired, syn)| {
                let mut s = match k {
                    0 => Stimulus::binary("x", surface, d),
                    1 => Stimulus::multiple_choice(
                        "x",
                        surface,
                        d,
                        ["ą".into(), "b".into(), "ć".into(), "d".into()],
                        syn,
                    ),
                    _ => Stimulus::pseudoword("x", surface),
                };
                if k != 2 {
                    s.rank = rank;
                }
                if retired {
                    s.status = StimulusStatus::Retired;
                }
                s
            })
    }

    proptest! {
        #[test]
        fn json_round_trip(stimuli in prop::collection::vec(stimulus_strategy(), 0..20),
                           slope in 0.01f64..5.0, midpoint in -5.0f64..5.0) {
            let stimuli = stimuli.into_iter().enumerate().map(|(i, mut s)| { s.id = format!("s{i}"); s }).collect();
            let bank = ItemBank {
                version: "1".into(),
                conversion: Some(ConversionCoefficients { cap: 140_000.0, slope, midpoint }),
                stimuli,
            };
            let back = ItemBank::from_json_str(&bank.to_json_string()).unwrap();
            prop_assert_eq!(back, bank);
        }
    }
}
