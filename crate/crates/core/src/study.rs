//! Cleaning and group statistics over exported session results.

use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One finished session as exported for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub session_id: String,
    pub vocab_words: u32,
    pub theta: f64,
    pub se: f64,
    pub attention: Option<f64>,
    pub duration_s: f64,
    pub age: u32,
    pub native: bool,
    pub honest: bool,
    pub finished_at: DateTime<Utc>,
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<StudyRecord>, StudyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let records = rdr.deserialize().collect::<Result<Vec<StudyRecord>, _>>()?;
    for r in &records {
        if !(r.duration_s >= 0.0) {
            return Err(StudyError::InvalidArgument(format!(
                "session {}: duration must be non-negative",
                r.session_id
            )));
        }
        if r.attention.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return Err(StudyError::InvalidArgument(format!(
                "session {}: attention must lie in [0, 1]",
                r.session_id
            )));
        }
    }
    Ok(records)
}

pub fn write_records<W: Write>(writer: W, records: &[StudyRecord]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    /// Records strictly below this attention index are removed.
    pub min_attention: f64,
    pub min_duration_s: f64,
    pub min_age: u32,
    /// Half-width of the per-group trimming band, in standard deviations.
    pub sd_k: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            min_attention: 0.70,
            min_duration_s: 60.0,
            min_age: 7,
            sd_k: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleaningRule {
    Honesty,
    Age,
    Attention,
    Duration,
    Outlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub session_id: String,
    pub rule: CleaningRule,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub removed_honesty: usize,
    pub removed_age: usize,
    pub removed_attention: usize,
    pub removed_duration: usize,
    pub removed_outlier: usize,
    pub retained: usize,
    /// Every removed record with the rule that removed it, in input order.
    pub removals: Vec<Removal>,
    /// Retake suspects among the input; flagged only, never removed.
    pub flagged_retakes: Vec<String>,
}

impl CleaningReport {
    pub fn removed(&self) -> usize {
        self.removed_honesty + self.removed_age + self.removed_attention + self.removed_duration + self.removed_outlier
    }
}

/// Sample mean and standard deviation.
fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Applies the cleaning rules in order: honesty, age, attention, duration,
/// then one pass of per-group trimming of vocabulary sizes outside
/// `mean ± k·sd`. Each removal is charged to the first rule that fires.
/// Groups with fewer than two records are not trimmed.
pub fn clean(records: &[StudyRecord], config: &CleaningConfig) -> (Vec<StudyRecord>, CleaningReport) {
    let mut report = CleaningReport {
        input: records.len(),
        flagged_retakes: flag_retakes(records),
        ..CleaningReport::default()
    };
    let mut kept: Vec<&StudyRecord> = Vec::new();
    let mut rules: Vec<Option<CleaningRule>> = Vec::with_capacity(records.len());
    for r in records {
        let rule = if !r.honest {
            Some(CleaningRule::Honesty)
        } else if r.age < config.min_age {
            Some(CleaningRule::Age)
        } else if r.attention.is_none_or(|a| a < config.min_attention) {
            Some(CleaningRule::Attention)
        } else if r.duration_s < config.min_duration_s {
            Some(CleaningRule::Duration)
        } else {
            kept.push(r);
            None
        };
        rules.push(rule);
    }
    let bands: Vec<Option<(f64, f64)>> = [false, true]
        .iter()
        .map(|&native| {
            let values: Vec<f64> = kept
                .iter()
                .filter(|r| r.native == native)
                .map(|r| f64::from(r.vocab_words))
                .collect();
            mean_sd(&values).map(|(m, sd)| (m - config.sd_k * sd, m + config.sd_k * sd))
        })
        .collect();
    let mut retained = Vec::with_capacity(kept.len());
    for (r, rule) in records.iter().zip(rules.iter_mut()) {
        if rule.is_some() {
            continue;
        }
        let v = f64::from(r.vocab_words);
        match bands[usize::from(r.native)] {
            Some((lo, hi)) if v < lo || v > hi => *rule = Some(CleaningRule::Outlier),
            _ => retained.push(r.clone()),
        }
    }
    for (r, rule) in records.iter().zip(&rules) {
        let Some(rule) = *rule else { continue };
        match rule {
            CleaningRule::Honesty => report.removed_honesty += 1,
            CleaningRule::Age => report.removed_age += 1,
            CleaningRule::Attention => report.removed_attention += 1,
            CleaningRule::Duration => report.removed_duration += 1,
            CleaningRule::Outlier => report.removed_outlier += 1,
        }
        report.removals.push(Removal { session_id: r.session_id.clone(), rule });
    }
    report.retained = retained.len();
    (retained, report)
}

/// Ids of records finished within 300 s of another record with the same age
/// and nativeness, in input order.
pub fn flag_retakes(records: &[StudyRecord]) -> Vec<String> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].finished_at);
    let mut flagged = vec![false; records.len()];
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            let gap = (records[j].finished_at - records[i].finished_at).num_milliseconds();
            if gap > 300_000 {
                break;
            }
            if records[i].age == records[j].age && records[i].native == records[j].native {
                flagged[i] = true;
                flagged[j] = true;
            }
        }
    }
    records
        .iter()
        .zip(flagged)
        .filter(|(_, f)| *f)
        .map(|(r, _)| r.session_id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    pub cohens_d: f64,
    pub d_ci: (f64, f64),
}

/// 95% confidence interval of Cohen's d from its large-sample variance.
pub fn cohens_d_ci(d: f64, na: usize, nb: usize) -> (f64, f64) {
    let (na, nb) = (na as f64, nb as f64);
    let var = (na + nb) / (na * nb) + d * d / (2.0 * (na + nb));
    let z = Normal::standard().inverse_cdf(0.975);
    (d - z * var.sqrt(), d + z * var.sqrt())
}

fn two_sided_t_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Pooled-variance Student t-test of `mean(a) - mean(b)`.
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TTest, StudyError> {
    let (Some((ma, sa)), Some((mb, sb))) = (mean_sd(a), mean_sd(b)) else {
        return Err(StudyError::InvalidArgument("each group needs at least two values".into()));
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = (((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / df).sqrt();
    if !(pooled > 0.0) {
        return Err(StudyError::InvalidArgument("both groups are constant".into()));
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb).sqrt());
    let d = (ma - mb) / pooled;
    Ok(TTest {
        t,
        df,
        p: two_sided_t_p(t, df),
        cohens_d: d,
        d_ci: cohens_d_ci(d, a.len(), b.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub r: f64,
    /// `atanh(r)`; absent when `|r| = 1`.
    pub fisher_z: Option<f64>,
    pub p: f64,
}

/// Sample Pearson correlation, `None` when either vector is constant or the
/// lengths differ or are below 2.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fisher's variance-stabilising transform `atanh(r)`; absent unless `|r| < 1`.
pub fn fisher_z(r: f64) -> Option<f64> {
    (r.abs() < 1.0).then(|| r.atanh())
}

/// Pearson correlation with Fisher's z and the two-sided p-value of the
/// `t = r sqrt((n-2)/(1-r²))` test.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation, StudyError> {
    if xs.len() != ys.len() {
        return Err(StudyError::InvalidArgument("vectors differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(StudyError::InvalidArgument("correlation needs at least 3 pairs".into()));
    }
    let r = pearson_r(xs, ys).ok_or_else(|| StudyError::InvalidArgument("a vector is constant".into()))?;
    let n = xs.len();
    let df = n as f64 - 2.0;
    let p = if r.abs() >= 1.0 { 0.0 } else { two_sided_t_p(r * (df / (1.0 - r * r)).sqrt(), df) };
    Ok(Correlation { n, r, fisher_z: fisher_z(r), p })
}

/// Adjusted Fisher–Pearson skewness `G1`.
pub fn skewness(values: &[f64]) -> Result<f64, StudyError> {
    if values.len() < 3 {
        return Err(StudyError::InvalidArgument("skewness needs at least 3 values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(StudyError::InvalidArgument("values are constant".into()));
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (n * (n - 1.0)).sqrt() / (n - 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Native,
    Learner,
}

impl Group {
    pub fn of(native: bool) -> Self {
        if native {
            Group::Native
        } else {
            Group::Learner
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBinMean {
    pub bin: usize,
    /// Inclusive lower edge.
    pub lower: u32,
    /// Exclusive upper edge, inclusive for the last bin.
    pub upper: u32,
    pub group: Group,
    pub mean_vocab: Option<f64>,
    pub count: usize,
}

/// Per-group mean vocabulary in `k` quantile bins of the pooled ages. Edges
/// are the ages at positions `i·n/k` of the sorted ages; records whose age
/// equals an edge fall into the bin starting there.
pub fn age_bin_means(records: &[StudyRecord], k: usize) -> Result<Vec<AgeBinMean>, StudyError> {
    if k == 0 {
        return Err(StudyError::InvalidArgument("k must be at least 1".into()));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut ages: Vec<u32> = records.iter().map(|r| r.age).collect();
    ages.sort_unstable();
    let n = ages.len();
    let mut edges: Vec<u32> = (0..k).map(|i| ages[i * n / k]).collect();
    edges.push(ages[n - 1]);
    let bin_of = |age: u32| edges[1..k].iter().filter(|&&e| e <= age).count();
    let mut rows = Vec::with_capacity(2 * k);
    for bin in 0..k {
        for group in [Group::Native, Group::Learner] {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| Group::of(r.native) == group && bin_of(r.age) == bin)
                .map(|r| f64::from(r.vocab_words))
                .collect();
            rows.push(AgeBinMean {
                bin,
                lower: edges[bin],
                upper: edges[bin + 1],
                group,
                mean_vocab: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                count: values.len(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: Group,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub skewness: Option<f64>,
}

fn group_stats(group: Group, values: &[f64]) -> GroupStats {
    let ms = mean_sd(values);
    GroupStats {
        group,
        n: values.len(),
        mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        sd: ms.map(|m| m.1),
        min: values.iter().copied().reduce(f64::min),
        max: values.iter().copied().reduce(f64::max),
        skewness: skewness(values).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableTest {
    pub variable: String,
    /// Learners minus natives; absent when a group is too small.
    pub test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub x: String,
    pub y: String,
    pub group: Option<Group>,
    pub correlation: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub groups: Vec<GroupStats>,
    pub t_tests: Vec<VariableTest>,
    pub correlations: Vec<CorrelationEntry>,
    pub age_bins: Vec<AgeBinMean>,
}

const VARIABLES: [&str; 4] = ["age", "vocab_words", "attention", "duration_s"];

fn variable(r: &StudyRecord, name: &str) -> Option<f64> {
    match name {
        "age" => Some(f64::from(r.age)),
        "vocab_words" => Some(f64::from(r.vocab_words)),
        "attention" => r.attention,
        "duration_s" => Some(r.duration_s),
        _ => None,
    }
}

fn column(records: &[&StudyRecord], name: &str) -> Vec<f64> {
    records.iter().filter_map(|r| variable(r, name)).collect()
}

/// Group descriptives of vocabulary size, learner-vs-native t-tests, the
/// pairwise correlation table and age-bin means.
pub fn analyze(records: &[StudyRecord], age_bins: usize) -> Result<AnalysisReport, StudyError> {
    let by_group = |g: Group| records.iter().filter(|r| Group::of(r.native) == g).collect::<Vec<_>>();
    let natives = by_group(Group::Native);
    let learners = by_group(Group::Learner);
    let groups = vec![
        group_stats(Group::Native, &column(&natives, "vocab_words")),
        group_stats(Group::Learner, &column(&learners, "vocab_words")),
    ];
    let t_tests = ["duration_s", "attention", "age", "vocab_words"]
        .iter()
        .map(|&v| VariableTest {
            variable: v.to_string(),
            test: two_sample_t(&column(&learners, v), &column(&natives, v)).ok(),
        })
        .collect();
    let all: Vec<&StudyRecord> = records.iter().collect();
    let mut correlations = Vec::new();
    for (i, x) in VARIABLES.iter().enumerate() {
        for y in &VARIABLES[..i] {
            correlations.push(correlate(&all, x, y, None));
        }
    }
    correlations.push(correlate(&natives, "age", "vocab_words", Some(Group::Native)));
    correlations.push(correlate(&learners, "age", "vocab_words", Some(Group::Learner)));
    Ok(AnalysisReport {
        groups,
        t_tests,
        correlations,
        age_bins: age_bin_means(records, age_bins)?,
    })
}

fn correlate(records: &[&StudyRecord], x: &str, y: &str, group: Option<Group>) -> CorrelationEntry {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| Some((variable(r, x)?, variable(r, y)?)))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    CorrelationEntry {
        x: x.to_string(),
        y: y.to_string(),
        group,
        correlation: pearson(&xs, &ys).ok(),
    }
}

impl AnalysisReport {
    /// Plain-text tables for terminal output.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let mut out = String::from("group     n      mean        sd         min        max        skew\n");
        for g in &self.groups {
            out += &format!(
                "{:<8} {:>4} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
                format!("{:?}", g.group).to_lowercase(),
                g.n,
                opt(g.mean),
                opt(g.sd),
                opt(g.min),
                opt(g.max),
                opt(g.skewness)
            );
        }
        out += "\nlearner vs native   t        df     p        d       d 95% CI\n";
        for v in &self.t_tests {
            match &v.test {
                Some(t) => {
                    out += &format!(
                        "{:<14} {:>9.3} {:>6} {:>8.4} {:>7.3}  [{:.3}, {:.3}]\n",
                        v.variable, t.t, t.df, t.p, t.cohens_d, t.d_ci.0, t.d_ci.1
                    )
                }
                None => out += &format!("{:<14} -\n", v.variable),
            }
        }
        out += &format!("\n{:<26} {:>4} {:>6} {:>7} {:>8}\n", "correlations", "n", "r", "z", "p");
        for c in &self.correlations {
            let label = match c.group {
                Some(g) => format!("{}~{} ({})", c.x, c.y, format!("{g:?}").to_lowercase()),
                None => format!("{}~{}", c.x, c.y),
            };
            match &c.correlation {
                Some(r) => {
                    out += &format!("{label:<26} {:>4} {:>6.3} {:>7} {:>8.4}\n", r.n, r.r, opt(r.fisher_z), r.p)
                }
                None => out += &format!("{label:<26} -\n"),
            }
        }
        out += "\nage bin    group     n   mean vocab\n";
        for b in &self.age_bins {
            out += &format!(
                "[{:>2}, {:>2}{} {:<8} {:>4} {:>10}\n",
                b.lower,
                b.upper,
                if b.bin + 1 == self.age_bins.len() / 2 { "]" } else { ")" },
                format!("{:?}", b.group).to_lowercase(),
                b.count,
                opt(b.mean_vocab)
            );
        }
        out
    }
}
