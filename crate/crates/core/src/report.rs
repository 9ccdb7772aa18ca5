//! `results.csv` rows and the per-participant result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{fmt1, relative_improvement, round1};

/// Which refiners a run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct MethodFlags {
    pub les: bool,
    pub kf: bool,
    pub dar: bool,
}

impl MethodFlags {
    pub const BASELINE: Self = Self::new(false, false, false);

    pub const fn new(les: bool, kf: bool, dar: bool) -> Self {
        Self { les, kf, dar }
    }

    /// Baseline followed by each refiner alone.
    pub fn isolation_grid() -> Vec<Self> {
        vec![
            Self::BASELINE,
            Self::new(true, false, false),
            Self::new(false, true, false),
            Self::new(false, false, true),
        ]
    }

    /// DAR alone, then every combination of at least two refiners.
    pub fn combination_grid() -> Vec<Self> {
        vec![
            Self::new(false, false, true),
            Self::new(true, true, false),
            Self::new(true, false, true),
            Self::new(false, true, true),
            Self::new(true, true, true),
        ]
    }

    pub fn label(self) -> String {
        let parts: Vec<&str> = [(self.les, "LES"), (self.kf, "KF"), (self.dar, "DAR")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        if parts.is_empty() {
            "baseline".into()
        } else {
            parts.join("+")
        }
    }
}

/// One row of `results.csv`: a (gaze series, configuration) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub participant: String,
    pub run: String,
    pub dataset: String,
    pub flags: MethodFlags,
    /// Mean J over scored frames, 0-100.
    pub mean_j: f64,
    /// Mean DSC over scored frames, 0-100.
    pub mean_dsc: f64,
    pub frames_scored: usize,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    participant: String,
    run: String,
    dataset: String,
    les: u8,
    kf: u8,
    dar: u8,
    mean_j: f64,
    mean_dsc: f64,
    frames_scored: usize,
}

fn flag(v: u8, name: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Data(format!("results csv: `{name}` must be 0 or 1, got {v}"))),
    }
}

pub const RESULTS_HEADER: &str = "participant,run,dataset,les,kf,dar,mean_j,mean_dsc,frames_scored";

/// Serializes runs with full-precision floats and 0/1 flags.
pub fn write_results_csv(results: &[RunResult]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in results {
        w.serialize(CsvRow {
            participant: r.participant.clone(),
            run: r.run.clone(),
            dataset: r.dataset.clone(),
            les: r.flags.les.into(),
            kf: r.flags.kf.into(),
            dar: r.flags.dar.into(),
            mean_j: r.mean_j,
            mean_dsc: r.mean_dsc,
            frames_scored: r.frames_scored,
        })
        .expect("in-memory csv write");
    }
    if results.is_empty() {
        return format!("{RESULTS_HEADER}\n");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is UTF-8")
}

pub fn read_results_csv(text: &str) -> Result<Vec<RunResult>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("results csv: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != RESULTS_HEADER {
        return Err(Error::Data(format!(
            "results csv header must be `{RESULTS_HEADER}`, got `{headers}`"
        )));
    }
    reader
        .deserialize::<CsvRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::Data(format!("results csv row {}: {e}", i + 1)))?;
            Ok(RunResult {
                flags: MethodFlags::new(flag(row.les, "les")?, flag(row.kf, "kf")?, flag(row.dar, "dar")?),
                participant: row.participant,
                run: row.run,
                dataset: row.dataset,
                mean_j: row.mean_j,
                mean_dsc: row.mean_dsc,
                frames_scored: row.frames_scored,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableMode {
    Isolation,
    Combination,
}

impl TableMode {
    /// Row order of a participant block.
    pub fn grid(self) -> Vec<MethodFlags> {
        match self {
            TableMode::Isolation => MethodFlags::isolation_grid(),
            TableMode::Combination => MethodFlags::combination_grid(),
        }
    }

    /// Row that deltas and relative improvements are measured against.
    pub fn reference(self) -> MethodFlags {
        match self {
            TableMode::Isolation => MethodFlags::BASELINE,
            TableMode::Combination => MethodFlags::new(false, false, true),
        }
    }
}

impl std::str::FromStr for TableMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "isolation" => Ok(TableMode::Isolation),
            "combination" => Ok(TableMode::Combination),
            other => Err(format!("unknown table mode `{other}` (expected isolation|combination)")),
        }
    }
}

/// Mean J and DSC per dataset for one (participant, flags) row.
type RowScores = BTreeMap<String, (f64, f64)>;

/// Rendered report.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub markdown: String,
    pub csv: String,
}

pub const MEAN_PARTICIPANT: &str = "p̄";

struct Block {
    participant: String,
    rows: Vec<(MethodFlags, RowScores)>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Orders rows by the mode's grid, then any remaining configurations.
fn row_order(mode: TableMode, present: &BTreeSet<MethodFlags>) -> Vec<MethodFlags> {
    let grid = mode.grid();
    let mut order: Vec<MethodFlags> = grid.iter().copied().filter(|f| present.contains(f)).collect();
    order.extend(present.iter().filter(|f| !grid.contains(f)));
    order
}

fn blocks(results: &[RunResult], mode: TableMode) -> (Vec<String>, Vec<Block>) {
    let datasets: Vec<String> = results.iter().map(|r| r.dataset.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let flags: BTreeSet<MethodFlags> = results.iter().map(|r| r.flags).collect();
    let order = row_order(mode, &flags);
    let participants: BTreeSet<&str> = results.iter().map(|r| r.participant.as_str()).collect();

    let mut out = Vec::new();
    for p in &participants {
        let mut rows = Vec::new();
        for &f in &order {
            let mut scores = RowScores::new();
            for d in &datasets {
                let runs: Vec<&RunResult> = results
                    .iter()
                    .filter(|r| r.participant == *p && r.flags == f && &r.dataset == d)
                    .collect();
                if !runs.is_empty() {
                    scores.insert(
                        d.clone(),
                        (mean(runs.iter().map(|r| r.mean_j)), mean(runs.iter().map(|r| r.mean_dsc))),
                    );
                }
            }
            rows.push((f, scores));
        }
        out.push(Block {
            participant: p.to_string(),
            rows,
        });
    }
    if !out.is_empty() {
        let rows = order
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let mut scores = RowScores::new();
                for d in &datasets {
                    let vals: Vec<(f64, f64)> = out.iter().filter_map(|b| b.rows[i].1.get(d).copied()).collect();
                    if !vals.is_empty() {
                        scores.insert(d.clone(), (mean(vals.iter().map(|v| v.0)), mean(vals.iter().map(|v| v.1))));
                    }
                }
                (f, scores)
            })
            .collect();
        out.push(Block {
            participant: MEAN_PARTICIPANT.into(),
            rows,
        });
    }
    (datasets, out)
}

fn check(on: bool) -> &'static str {
    if on {
        "✓"
    } else {
        "✗"
    }
}

/// Formats one score cell; the block's best value (by displayed value) is
/// bolded and, unless it is the reference row, annotated with its
/// difference to the reference.
fn cell(value: Option<f64>, best: Option<f64>, reference: Option<f64>, is_reference: bool) -> String {
    let Some(v) = value else { return "-".into() };
    let shown = fmt1(v);
    if best.map(fmt1) != Some(shown.clone()) {
        return shown;
    }
    match reference {
        Some(r) if !is_reference => {
            let delta = round1(v) - round1(r);
            let sign = if delta >= 0.0 { "+" } else { "" };
            format!("**{shown}** ({sign}{})", fmt1(delta))
        }
        _ => format!("**{shown}**"),
    }
}

/// Markdown tables with one block per participant plus a mean block, and a
/// long-format CSV of the same values at full precision.
pub fn render_tables(results: &[RunResult], mode: TableMode) -> Tables {
    let (datasets, blocks) = blocks(results, mode);
    let reference = mode.reference();

    let mut md = String::new();
    let _ = write!(md, "| Participant | LES | KF | DAR |");
    for d in &datasets {
        let _ = write!(md, " {d} J | {d} DSC |");
    }
    md.push('\n');
    md.push_str("|---|:-:|:-:|:-:|");
    for _ in &datasets {
        md.push_str("--:|--:|");
    }
    md.push('\n');

    let mut csv = String::from("participant,les,kf,dar,dataset,mean_j,mean_dsc\n");
    for block in &blocks {
        let ref_row = block.rows.iter().find(|(f, _)| *f == reference).map(|(_, s)| s);
        let best = |d: &str, pick: fn(&(f64, f64)) -> f64| {
            block
                .rows
                .iter()
                .filter_map(|(_, s)| s.get(d).map(pick))
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        };
        for (i, (f, scores)) in block.rows.iter().enumerate() {
            let name = if i == 0 { block.participant.as_str() } else { "" };
            let _ = write!(md, "| {name} | {} | {} | {} |", check(f.les), check(f.kf), check(f.dar));
            for d in &datasets {
                let v = scores.get(d);
                let r = ref_row.and_then(|s| s.get(d));
                let is_ref = *f == reference;
                let _ = write!(
                    md,
                    " {} | {} |",
                    cell(v.map(|v| v.0), best(d, |v| v.0), r.map(|v| v.0), is_ref),
                    cell(v.map(|v| v.1), best(d, |v| v.1), r.map(|v| v.1), is_ref),
                );
                if let Some(&(j, s)) = v {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{}",
                        block.participant,
                        u8::from(f.les),
                        u8::from(f.kf),
                        u8::from(f.dar),
                        d,
                        j,
                        s
                    );
                }
            }
            md.push('\n');
        }
    }

    if let Some(mean_block) = blocks.last() {
        let ref_row = mean_block.rows.iter().find(|(f, _)| *f == reference);
        for d in &datasets {
            let best = mean_block
                .rows
                .iter()
                .filter_map(|(f, s)| s.get(d).map(|v| (*f, v.0)))
                .fold(None, |m: Option<(MethodFlags, f64)>, (f, v)| match m {
                    Some((_, bv)) if round1(bv) >= round1(v) => m,
                    _ => Some((f, v)),
                });
            let base = ref_row.and_then(|(_, s)| s.get(d)).map(|v| v.0);
            if let (Some((bf, bv)), Some(base)) = (best, base) {
                if bf == reference {
                    continue;
                }
                if let Ok(pct) = relative_improvement(round1(base), round1(bv)) {
                    let _ = writeln!(
                        md,
                        "\n{d}: mean J {} ({}) → {} ({}), relative improvement {}%",
                        fmt1(base),
                        reference.label(),
                        fmt1(bv),
                        bf.label(),
                        fmt1(pct)
                    );
                }
            }
        }
    }
    Tables { markdown: md, csv }
}
