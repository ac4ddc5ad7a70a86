//! Exact-match scoring, presence precision/recall/F1 and multi-run
//! aggregation with CSV / markdown reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::PvDescriptor;

/// Row label of the all-records aggregate.
pub const OVERALL: &str = "overall";

pub const REPORT_COLUMNS: [&str; 6] = ["city", "task", "mean", "std", "n_records", "n_runs"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("run {run} scores a different record set than run 0: {detail}")]
    RunMismatch { run: usize, detail: String },
    #[error("run {run} scores record {id:?} more than once")]
    DuplicateRecord { run: usize, id: String },
    #[error("report parse error at line {line}: {reason}")]
    ReportFormat { line: usize, reason: String },
    #[error("predictions line {line}: {reason}")]
    Predictions { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Presence,
    Quantity,
    Location,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Presence, Task::Quantity, Task::Location];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Presence => "presence",
            Task::Quantity => "quantity",
            Task::Location => "location",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// Per-task exact-match outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TaskMatch {
    pub presence: bool,
    pub quantity: bool,
    pub location: bool,
}

impl TaskMatch {
    pub fn get(&self, task: Task) -> bool {
        match task {
            Task::Presence => self.presence,
            Task::Quantity => self.quantity,
            Task::Location => self.location,
        }
    }
}

/// Field-wise canonical equality. Explanations are not scored.
pub fn exact_match_score(pred: &PvDescriptor, truth: &PvDescriptor) -> TaskMatch {
    TaskMatch {
        presence: pred.presence == truth.presence,
        quantity: pred.quantity.as_str() == truth.quantity.as_str(),
        location: pred.location.as_str() == truth.location.as_str(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Presence confusion over `(prediction, truth)` pairs; positive = PV present.
pub fn presence_confusion<'a>(
    pairs: impl IntoIterator<Item = (&'a PvDescriptor, &'a PvDescriptor)>,
) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (pred, truth) in pairs {
        c.add(pred.presence, truth.presence);
    }
    c
}

/// Precision, recall and F1; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Harmonic mean of precision and recall; `None` when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// One evaluated record in one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub id: String,
    pub city: String,
    pub matches: TaskMatch,
    /// `None` when the assessment failed; the record then counts as wrong on
    /// every task and is left out of the confusion counts.
    pub predicted_presence: Option<bool>,
    pub true_presence: bool,
}

impl ScoredRecord {
    pub fn score(id: &str, city: &str, pred: Option<&PvDescriptor>, truth: &PvDescriptor) -> Self {
        ScoredRecord {
            id: id.to_string(),
            city: city.to_string(),
            matches: pred
                .map(|p| exact_match_score(p, truth))
                .unwrap_or_default(),
            predicted_presence: pred.map(|p| p.presence),
            true_presence: truth.presence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Accuracy over the union of all records.
    #[default]
    Micro,
    /// Unweighted mean of per-city accuracies.
    Macro,
}

impl FromStr for Averaging {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            other => Err(format!("unknown averaging {other:?}")),
        }
    }
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub city: String,
    pub task: Task,
    pub mean: f64,
    pub std: f64,
    pub n_records: usize,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn get(&self, city: &str, task: Task) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.city == city && r.task == task)
    }
}

/// Mean and sample standard deviation (0 for a single value). Values are
/// summed in sorted order so the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    // Identical inputs return exactly that value and zero spread; the
    // summed mean can differ from it by one ulp.
    if values.iter().all(|x| *x == values[0]) {
        return (values[0], 0.0);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

fn check_runs(runs: &[Vec<ScoredRecord>]) -> Result<(), EvalError> {
    let ids = |run: usize, recs: &[ScoredRecord]| -> Result<BTreeSet<String>, EvalError> {
        let mut set = BTreeSet::new();
        for r in recs {
            if !set.insert(r.id.clone()) {
                return Err(EvalError::DuplicateRecord {
                    run,
                    id: r.id.clone(),
                });
            }
        }
        Ok(set)
    };
    let Some(first) = runs.first() else {
        return Ok(());
    };
    let base = ids(0, first)?;
    for (i, run) in runs.iter().enumerate().skip(1) {
        let other = ids(i, run)?;
        if other != base {
            let missing: Vec<_> = base.difference(&other).take(3).cloned().collect();
            let extra: Vec<_> = other.difference(&base).take(3).cloned().collect();
            return Err(EvalError::RunMismatch {
                run: i,
                detail: format!("missing {missing:?}, extra {extra:?}"),
            });
        }
    }
    Ok(())
}

/// Per-city and overall accuracy for each task, aggregated across runs.
/// Overall rows come first, then cities in lexicographic order; within a
/// group tasks follow presence, quantity, location.
pub fn aggregate(
    runs: &[Vec<ScoredRecord>],
    averaging: Averaging,
) -> Result<AggregateTable, EvalError> {
    check_runs(runs)?;
    if runs.is_empty() || runs[0].is_empty() {
        return Ok(AggregateTable::default());
    }
    // accuracies[city][task] = one value per run
    let mut per_city: BTreeMap<String, HashMap<Task, Vec<f64>>> = BTreeMap::new();
    let mut overall: HashMap<Task, Vec<f64>> = HashMap::new();
    let mut city_sizes: BTreeMap<String, usize> = BTreeMap::new();
    for r in &runs[0] {
        *city_sizes.entry(r.city.clone()).or_default() += 1;
    }
    for run in runs {
        let mut correct: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
        for r in run {
            let c = correct.entry(&r.city).or_default();
            for (k, t) in Task::ALL.iter().enumerate() {
                c[k] += u64::from(r.matches.get(*t));
            }
        }
        for (k, t) in Task::ALL.iter().enumerate() {
            let mut city_acc = Vec::new();
            let mut total_correct = 0;
            for (city, c) in &correct {
                let n = city_sizes[*city] as f64;
                let acc = c[k] as f64 / n;
                per_city
                    .entry(city.to_string())
                    .or_default()
                    .entry(*t)
                    .or_default()
                    .push(acc);
                city_acc.push(acc);
                total_correct += c[k];
            }
            let value = match averaging {
                Averaging::Micro => total_correct as f64 / run.len() as f64,
                Averaging::Macro => mean_std(&city_acc).0,
            };
            overall.entry(*t).or_default().push(value);
        }
    }
    let n_runs = runs.len();
    let mut rows = Vec::new();
    for t in Task::ALL {
        let (mean, std) = mean_std(&overall[&t]);
        rows.push(AggregateRow {
            city: OVERALL.into(),
            task: t,
            mean,
            std,
            n_records: runs[0].len(),
            n_runs,
        });
    }
    for (city, tasks) in &per_city {
        for t in Task::ALL {
            let (mean, std) = mean_std(&tasks[&t]);
            rows.push(AggregateRow {
                city: city.clone(),
                task: t,
                mean,
                std,
                n_records: city_sizes[city],
                n_runs,
            });
        }
    }
    Ok(AggregateTable { rows })
}

/// Presence precision/recall/F1 for one group, aggregated across runs over
/// the runs where each metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrfRow {
    pub city: String,
    pub precision: Option<(f64, f64)>,
    pub recall: Option<(f64, f64)>,
    pub f1: Option<(f64, f64)>,
    pub n_runs: usize,
}

/// Presence PRF per city and overall (overall first).
pub fn aggregate_presence_prf(runs: &[Vec<ScoredRecord>]) -> Result<Vec<PrfRow>, EvalError> {
    check_runs(runs)?;
    let mut groups: BTreeMap<String, Vec<Prf>> = BTreeMap::new();
    let mut overall = Vec::new();
    for run in runs {
        let mut counts: BTreeMap<&str, ConfusionCounts> = BTreeMap::new();
        let mut all = ConfusionCounts::default();
        for r in run {
            let c = counts.entry(&r.city).or_default();
            if let Some(p) = r.predicted_presence {
                c.add(p, r.true_presence);
                all.add(p, r.true_presence);
            }
        }
        for (city, c) in counts {
            groups
                .entry(city.to_string())
                .or_default()
                .push(precision_recall_f1(&c));
        }
        overall.push(precision_recall_f1(&all));
    }
    let summarize = |city: String, prfs: &[Prf]| {
        let agg = |f: fn(&Prf) -> Option<f64>| {
            let v: Vec<f64> = prfs.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| mean_std(&v))
        };
        PrfRow {
            city,
            precision: agg(|p| p.precision),
            recall: agg(|p| p.recall),
            f1: agg(|p| p.f1),
            n_runs: prfs.len(),
        }
    };
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    let mut rows = vec![summarize(OVERALL.into(), &overall)];
    rows.extend(groups.iter().map(|(c, p)| summarize(c.clone(), p)));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn row_fields(r: &AggregateRow) -> [String; 6] {
    [
        r.city.clone(),
        r.task.to_string(),
        r.mean.to_string(),
        r.std.to_string(),
        r.n_records.to_string(),
        r.n_runs.to_string(),
    ]
}

/// Writes the table; numbers use the shortest representation that parses
/// back to the same value.
pub fn write_report(
    table: &AggregateTable,
    format: ReportFormat,
    mut out: impl Write,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(REPORT_COLUMNS)?;
            for r in &table.rows {
                w.write_record(row_fields(r))?;
            }
            w.flush()
        }
        ReportFormat::Markdown => {
            writeln!(out, "| {} |", REPORT_COLUMNS.join(" | "))?;
            writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len()))?;
            for r in &table.rows {
                let f = row_fields(r).map(|s| s.replace('|', "\\|"));
                writeln!(out, "| {} |", f.join(" | "))?;
            }
            Ok(())
        }
    }
}

pub fn emit_report(
    table: &AggregateTable,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_report(table, format, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn parse_row(fields: &[String], line: usize) -> Result<AggregateRow, EvalError> {
    let err = |reason: String| EvalError::ReportFormat { line, reason };
    if fields.len() != REPORT_COLUMNS.len() {
        return Err(err(format!(
            "expected {} fields, found {}",
            REPORT_COLUMNS.len(),
            fields.len()
        )));
    }
    let num = |i: usize| {
        fields[i]
            .parse::<f64>()
            .map_err(|e| err(format!("{}: {e}", REPORT_COLUMNS[i])))
    };
    let int = |i: usize| {
        fields[i]
            .parse::<usize>()
            .map_err(|e| err(format!("{}: {e}", REPORT_COLUMNS[i])))
    };
    Ok(AggregateRow {
        city: fields[0].clone(),
        task: fields[1].parse().map_err(err)?,
        mean: num(2)?,
        std: num(3)?,
        n_records: int(4)?,
        n_runs: int(5)?,
    })
}

/// Reads a table written by [`write_report`] in markdown format.
pub fn parse_markdown_report(text: &str) -> Result<AggregateTable, EvalError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(2) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let inner = line
            .strip_prefix('|')
            .and_then(|l| l.strip_suffix('|'))
            .ok_or_else(|| EvalError::ReportFormat {
                line: i + 1,
                reason: "not a table row".into(),
            })?;
        let mut fields = Vec::new();
        let mut cur = String::new();
        let mut chars = inner.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '\\' if chars.peek() == Some(&'|') => {
                    cur.push('|');
                    chars.next();
                }
                '|' => fields.push(std::mem::take(&mut cur).trim().to_string()),
                c => cur.push(c),
            }
        }
        fields.push(cur.trim().to_string());
        rows.push(parse_row(&fields, i + 1)?);
    }
    Ok(AggregateTable { rows })
}

/// Reads a table written by [`write_report`] in CSV format.
pub fn parse_csv_report(reader: impl std::io::Read) -> Result<AggregateTable, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EvalError::ReportFormat {
            line: i + 2,
            reason: e.to_string(),
        })?;
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        rows.push(parse_row(&fields, i + 2)?);
    }
    Ok(AggregateTable { rows })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionLine {
    pub fn success(id: &str, d: &PvDescriptor, references: Vec<String>) -> Self {
        PredictionLine {
            id: id.to_string(),
            presence: Some(crate::descriptor::presence_str(d.presence).to_string()),
            quantity: Some(d.quantity.as_str().to_string()),
            location: Some(d.location.as_str().to_string()),
            explanation: Some(d.explanation.clone()),
            references: Some(references),
            error: None,
        }
    }

    pub fn failure(id: &str, error: impl fmt::Display) -> Self {
        PredictionLine {
            id: id.to_string(),
            presence: None,
            quantity: None,
            location: None,
            explanation: None,
            references: None,
            error: Some(error.to_string()),
        }
    }

    /// The predicted descriptor, or `None` for a failed assessment.
    pub fn descriptor(&self) -> Result<Option<PvDescriptor>, String> {
        if self.error.is_some() {
            return Ok(None);
        }
        let get = |v: &Option<String>, name: &str| {
            v.clone().ok_or_else(|| format!("missing field {name}"))
        };
        PvDescriptor::from_canonical(
            &get(&self.presence, "presence")?,
            &get(&self.quantity, "quantity")?,
            &get(&self.location, "location")?,
            self.explanation.as_deref().unwrap_or(""),
        )
        .map(Some)
        .map_err(|e| e.to_string())
    }
}

/// Reads a JSON-lines predictions file into `id -> descriptor` (None for
/// failed assessments).
pub fn read_predictions(
    reader: impl BufRead,
) -> Result<BTreeMap<String, Option<PvDescriptor>>, EvalError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let err = |reason: String| EvalError::Predictions {
            line: i + 1,
            reason,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let d = p.descriptor().map_err(err)?;
        if out.insert(p.id.clone(), d).is_some() {
            return Err(err(format!("duplicate id {:?}", p.id)));
        }
    }
    Ok(out)
}
