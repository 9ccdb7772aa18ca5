//! `gazeprompt` command-line front end.

mod overlay;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gazeprompt::config::RunConfig;
use gazeprompt::dataset::{DatasetProfile, DiskDataset};
use gazeprompt::pipeline::{run_experiment, DataSource, DiskSource, Job};
use gazeprompt::report::{read_results_csv, render_tables, write_results_csv, TableMode};
use gazeprompt::simulator::{emit_scenario, read_gaze_csv, ScenarioConfig};
use gazeprompt::{Error, ObjectId, Result};

#[derive(Parser)]
#[command(name = "gazeprompt", version, about = "Refine gaze-derived point prompts for video object segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with ground truth and gaze.
    Simulate(SimulateArgs),
    /// Evaluate gaze series against a dataset.
    Run(RunArgs),
    /// Render result tables from a run directory.
    Report(ReportArgs),
    /// Draw mask contours and prompts onto dataset frames.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML: either a full scenario or `preset = "rats"|"mice"`
    /// with optional `seed`, `duration`, `name` and `full_resolution`.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Preset used when no scenario file is given.
    #[arg(long, default_value = "rats")]
    profile: DatasetProfile,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of frames, overriding the scenario.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Isolation,
    Combination,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Gaze CSV paths or glob patterns. The target object is taken from the
    /// `obj<NN>` token of each file name.
    #[arg(long, required = true, num_args = 1..)]
    gaze: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    les: bool,
    #[arg(long)]
    kf: bool,
    #[arg(long)]
    dar: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    les_n: Option<usize>,
    #[arg(long)]
    les_r: Option<f64>,
    #[arg(long)]
    dar_peaks: Option<usize>,
    #[arg(long)]
    dar_r: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run every configuration of a table instead of the selected flags.
    #[arg(long)]
    grid: Option<Grid>,
    /// Participant label; defaults to the name of each gaze file's directory.
    #[arg(long)]
    participant: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding `results.csv`, or the CSV itself.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "isolation")]
    mode: TableMode,
    #[arg(long, default_value = "md")]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory holding `traces/`.
    #[arg(long)]
    results: PathBuf,
    /// Provider settings used for replay; defaults to the label maps.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Draw every n-th frame.
    #[arg(long, default_value_t = 1)]
    every: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Overlay(a) => overlay::overlay(&a.data, &a.results, a.config.as_deref(), a.every, &a.out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = read_text(path)?;
    let bad = |m: String| Error::Config(format!("{}: {m}", path.display()));
    let table: toml::Table = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let Some(preset) = table.get("preset") else {
        return toml::from_str(&text).map_err(|e| bad(e.to_string()));
    };
    let preset: DatasetProfile = preset
        .as_str()
        .ok_or_else(|| bad("preset must be a string".into()))?
        .parse()
        .map_err(bad)?;
    let int = |key: &str| -> Result<Option<u64>> {
        table
            .get(key)
            .map(|v| {
                v.as_integer()
                    .and_then(|i| u64::try_from(i).ok())
                    .ok_or_else(|| bad(format!("{key} must be a non-negative integer")))
            })
            .transpose()
    };
    for key in table.keys() {
        if !["preset", "seed", "duration", "name", "full_resolution"].contains(&key.as_str()) {
            return Err(bad(format!("unknown key `{key}` next to preset")));
        }
    }
    let seed = int("seed")?.unwrap_or(0);
    let mut cfg = match preset {
        DatasetProfile::Rats => ScenarioConfig::rats_like(seed),
        DatasetProfile::Mice => ScenarioConfig::mice_like(seed),
    };
    if let Some(d) = int("duration")? {
        cfg.duration = d as usize;
    }
    if let Some(name) = table.get("name") {
        cfg.name = name.as_str().ok_or_else(|| bad("name must be a string".into()))?.into();
    }
    match table.get("full_resolution").map(toml::Value::as_bool) {
        None | Some(Some(false)) => {}
        Some(Some(true)) => cfg = cfg.full_resolution(),
        Some(None) => return Err(bad("full_resolution must be a boolean".into())),
    }
    Ok(cfg)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.scenario {
        Some(path) => load_scenario(path)?,
        None => match a.profile {
            DatasetProfile::Rats => ScenarioConfig::rats_like(0),
            DatasetProfile::Mice => ScenarioConfig::mice_like(0),
        },
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = a.frames {
        cfg.duration = frames;
    }
    emit_scenario(&cfg, &a.out)
}

fn has_glob_meta(s: &str) -> bool {
    s.contains(['*', '?', '['])
}

/// Expands paths and patterns into a sorted, duplicate-free file list.
fn expand_gaze(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut files = BTreeSet::new();
    for p in patterns {
        if !has_glob_meta(p) {
            files.insert(PathBuf::from(p));
            continue;
        }
        let paths = glob::glob(p).map_err(|e| Error::Config(format!("bad gaze pattern `{p}`: {e}")))?;
        let before = files.len();
        for entry in paths {
            files.insert(entry.map_err(|e| Error::Data(e.to_string()))?);
        }
        if files.len() == before {
            return Err(Error::Data(format!("gaze pattern `{p}` matches no file")));
        }
    }
    Ok(files.into_iter().collect())
}

/// Object id from the last `obj<digits>` token of a file stem.
fn object_of(stem: &str) -> Option<ObjectId> {
    let at = stem.rfind("obj")?;
    let digits: String = stem[at + 3..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok().map(ObjectId)
}

struct GazeInput {
    participant: String,
    run: String,
    object: ObjectId,
    samples: Arc<Vec<gazeprompt::simulator::GazeSample>>,
}

fn load_gaze(path: &Path, participant: Option<&str>) -> Result<GazeInput> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("{}: not a gaze file name", path.display())))?;
    let object = object_of(stem)
        .ok_or_else(|| Error::Data(format!("{}: file name carries no obj<NN> token", path.display())))?;
    let participant = match participant {
        Some(p) => p.to_string(),
        None => path
            .canonicalize()
            .ok()
            .and_then(|p| p.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "p1".into()),
    };
    let samples = read_gaze_csv(&read_text(path)?).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(GazeInput {
        participant,
        run: stem.to_string(),
        object,
        samples: Arc::new(samples),
    })
}

fn apply_overrides(cfg: &mut RunConfig, a: &RunArgs) {
    cfg.les.enabled |= a.les;
    cfg.kf.enabled |= a.kf;
    cfg.dar.enabled |= a.dar;
    if let Some(alpha) = a.alpha {
        cfg.gate.alpha = alpha;
    }
    if let Some(n) = a.les_n {
        cfg.les.n = n;
    }
    if let Some(r) = a.les_r {
        cfg.les.radius = Some(r);
    }
    if let Some(n) = a.dar_peaks {
        cfg.dar.n_maxima = Some(n);
    }
    if let Some(r) = a.dar_r {
        cfg.dar.radius = Some(r);
    }
    if let Some(seed) = a.seed {
        cfg.pipeline.seed = seed;
    }
    if a.workers.is_some() {
        cfg.pipeline.workers = a.workers;
    }
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &a);
    let dataset = DiskDataset::open(&a.data)?;
    let base = cfg.resolve(dataset.info())?;
    let flags = match a.grid {
        None => vec![base.flags],
        Some(Grid::Isolation) => TableMode::Isolation.grid(),
        Some(Grid::Combination) => TableMode::Combination.grid(),
    };
    let inputs = expand_gaze(&a.gaze)?
        .iter()
        .map(|p| load_gaze(p, a.participant.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<Job> = inputs
        .iter()
        .flat_map(|g| {
            flags.iter().map(|&f| Job {
                participant: g.participant.clone(),
                run: g.run.clone(),
                object: g.object,
                gaze: Arc::clone(&g.samples),
                config: base.clone().with_flags(f),
            })
        })
        .collect();
    let source = DiskSource::new(dataset, cfg.provider.clone());
    let outputs = run_experiment(&source, &jobs, cfg.pipeline.workers)?;

    let traces = a.out.join("traces");
    create_dir(&traces)?;
    let results: Vec<_> = outputs.iter().map(|o| o.result.clone()).collect();
    write_file(&a.out.join("results.csv"), write_results_csv(&results).as_bytes())?;
    for o in &outputs {
        write_file(&traces.join(o.trace.file_name()), o.trace.to_jsonl().as_bytes())?;
    }
    eprintln!(
        "{} runs over {} frames of {} written to {}",
        outputs.len(),
        source.info().frames,
        source.info().name,
        a.out.display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let csv_path = if a.input.is_dir() {
        a.input.join("results.csv")
    } else {
        a.input.clone()
    };
    let results = read_results_csv(&read_text(&csv_path)?)?;
    let tables = render_tables(&results, a.mode);
    let text = match a.format {
        Format::Md => tables.markdown,
        Format::Csv => tables.csv,
    };
    match &a.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_tokens() {
        assert_eq!(object_of("gaze_obj02"), Some(ObjectId(2)));
        assert_eq!(object_of("p3_run1_obj11_extra"), Some(ObjectId(11)));
        assert_eq!(object_of("gaze"), None);
        assert_eq!(object_of("obj"), None);
    }

    #[test]
    fn glob_detection() {
        assert!(has_glob_meta("d/gaze_*.csv"));
        assert!(!has_glob_meta("d/gaze_obj01.csv"));
    }
}
