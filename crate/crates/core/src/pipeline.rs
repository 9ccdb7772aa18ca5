//! Per-frame composition of the gate and the refiners, and whole-run
//! driving over a dataset.
//!
//! Stage order within a frame:
//!
//! 0. map the gaze point through the arena homography, if any;
//! 1. DAR relocates the prompt to the nearest depth maximum;
//! 2. segment at the prompt and apply the size gate;
//! 3. LES probes around the prompt if the mask was rejected;
//! 4. the Kalman filter predicts a replacement if it is still rejected, or
//!    is corrected with the prompt of an accepted mask.
//!
//! Steps 3 and 4 swap under [`FallbackOrder::KfThenLes`].

use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DepthKind, GateCalibration, ProviderSection, SegmenterKind};
use crate::dar::{dar_refine, extract_maxima, DarParams};
use crate::dataset::{self, DatasetInfo, DiskDataset, ObjectId};
use crate::error::{Error, Result};
use crate::gate::{calibrate_gate, SizeGate};
use crate::geometry::{ArenaConfig, Homography, PixelPoint};
use crate::kalman::{kf_step, KalmanConfig, KalmanState, KalmanStepReport, RejectPolicy};
use crate::les::{les_refine, LesParams, RefineOutcome};
use crate::metrics::{aggregate, score_frame, FrameScore};
use crate::provider::{
    Backends, DepthProvider, ExecProvider, FileDepthProvider, FileGroundTruth, FrameRef,
    GroundTruth, LabelMapProvider, ProviderError, SceneOracle, SegmentationProvider,
};
use crate::raster::{read_pgm, Connectivity, GrayImage, Mask};
use crate::report::{MethodFlags, RunResult};
use crate::simulator::{render_gray, render_labels, GazeSample, ScenarioConfig};

/// Which fallback runs first when the initial mask is rejected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackOrder {
    #[default]
    #[serde(rename = "les-kf")]
    LesThenKf,
    #[serde(rename = "kf-les")]
    KfThenLes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KfSettings {
    pub q_scale: f64,
    pub r_scale: f64,
    pub initial_var: f64,
    pub on_reject: RejectPolicy,
}

impl KfSettings {
    pub fn kalman_config(&self) -> KalmanConfig {
        KalmanConfig {
            on_reject: self.on_reject,
            ..KalmanConfig::constant_velocity(self.q_scale, self.r_scale)
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub flags: MethodFlags,
    pub alpha: f64,
    pub calibration: GateCalibration,
    pub les: LesParams,
    pub kf: KfSettings,
    pub dar: DarParams,
    pub arena: ArenaConfig,
    pub seed: u64,
    pub fallback_order: FallbackOrder,
}

impl PipelineConfig {
    /// Profile defaults for `info` with the given refiners enabled.
    pub fn for_dataset(info: &DatasetInfo, flags: MethodFlags) -> Self {
        crate::config::RunConfig::default()
            .resolve(info)
            .expect("defaults are valid")
            .with_flags(flags)
    }

    pub fn with_flags(mut self, flags: MethodFlags) -> Self {
        self.flags = flags;
        self
    }
}

/// Everything fixed for the duration of a run.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: PipelineConfig,
    pub gate: SizeGate,
    pub kalman: KalmanConfig,
    pub homography: Option<Homography>,
}

impl RunContext {
    pub fn new(config: PipelineConfig, gate: SizeGate, homography: Option<Homography>) -> Self {
        Self {
            kalman: config.kf.kalman_config(),
            config,
            gate,
            homography,
        }
    }
}

/// Per-object state carried from frame to frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptState {
    pub object: ObjectId,
    /// Last emitted prompt, reused when the gaze sample is invalid.
    pub prompt: Option<PixelPoint>,
    pub kalman: KalmanState,
}

impl PromptState {
    pub fn new(object: ObjectId) -> Self {
        Self {
            object,
            prompt: None,
            kalman: KalmanState::uninitialized(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    /// Final mask passed the gate.
    Valid,
    /// Every stage failed; the initial segmentation was emitted.
    Invalid,
    /// No gaze and no earlier prompt; nothing was emitted.
    Skipped,
    /// A provider or numeric error; nothing was emitted.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegTrace {
    pub prompt: PixelPoint,
    pub size: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarTrace {
    pub maxima: usize,
    pub prompt: PixelPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesTrace {
    pub seed: u64,
    pub probes_used: usize,
    pub accepted: bool,
    pub prompt: PixelPoint,
}

/// Decisions taken on one frame; enough to replay it in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub frame_index: usize,
    /// `None` when the gaze sample was flagged invalid.
    pub gaze: Option<PixelPoint>,
    pub prev_prompt: Option<PixelPoint>,
    pub kf_before: KalmanState,
    /// Prompt entering the refiners, after the arena mapping or the hold.
    pub input_prompt: Option<PixelPoint>,
    pub dar: Option<DarTrace>,
    pub initial: Option<SegTrace>,
    pub les: Option<LesTrace>,
    pub kf: Option<KalmanStepReport>,
    pub kf_after: KalmanState,
    pub emitted_prompt: Option<PixelPoint>,
    pub mask_size: Option<usize>,
    /// FNV-1a of the emitted mask, hex.
    pub mask_digest: Option<String>,
    pub seg_calls: usize,
    pub status: FrameStatus,
    pub error: Option<String>,
    /// Scores against ground truth, absent when the frame was not scored.
    pub j: Option<f64>,
    pub dsc: Option<f64>,
}

impl StageTrace {
    fn start(frame_index: usize, gaze: Option<PixelPoint>, state: &PromptState) -> Self {
        Self {
            frame_index,
            gaze,
            prev_prompt: state.prompt,
            kf_before: state.kalman,
            input_prompt: None,
            dar: None,
            initial: None,
            les: None,
            kf: None,
            kf_after: state.kalman,
            emitted_prompt: None,
            mask_size: None,
            mask_digest: None,
            seg_calls: 0,
            status: FrameStatus::Skipped,
            error: None,
            j: None,
            dsc: None,
        }
    }

    /// Probes spent by LES on this frame.
    pub fn probes_used(&self) -> usize {
        self.les.map_or(0, |l| l.probes_used)
    }
}

/// 64-bit FNV-1a over the dimensions of `mask` followed by its pixels
/// packed eight per byte in row-major order, least significant bit first.
pub fn mask_digest(mask: &Mask) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let dims = [mask.width() as u64, mask.height() as u64];
    let packed = mask
        .as_slice()
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |byte, (i, &b)| byte | ((b as u8) << i)));
    for byte in dims.iter().flat_map(|d| d.to_le_bytes()).chain(packed) {
        h ^= byte as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub mask: Option<Mask>,
    pub trace: StageTrace,
}

#[derive(Clone, Copy)]
enum Fallback {
    Les,
    Kf,
}

/// Runs all enabled stages on one frame.
///
/// Provider and numeric errors never escape: the frame is marked
/// [`FrameStatus::Failed`] and the state is left as it was before the
/// failing stage.
pub fn process_frame(
    state: &mut PromptState,
    gaze: Option<PixelPoint>,
    frame: &FrameRef,
    backends: &mut Backends,
    ctx: &RunContext,
) -> FrameOutput {
    let calls_before = backends.seg_calls();
    let mut trace = StageTrace::start(frame.frame_index, gaze, state);
    let mask = match run_stages(state, gaze, frame, backends, ctx, &mut trace) {
        Ok(mask) => mask,
        Err(e) => {
            trace.status = FrameStatus::Failed;
            trace.error = Some(e.to_string());
            None
        }
    };
    trace.seg_calls = backends.seg_calls() - calls_before;
    trace.kf_after = state.kalman;
    if let Some(m) = &mask {
        trace.mask_size = Some(m.count());
        trace.mask_digest = Some(format!("{:016x}", mask_digest(m)));
    }
    FrameOutput { mask, trace }
}

fn run_stages(
    state: &mut PromptState,
    gaze: Option<PixelPoint>,
    frame: &FrameRef,
    backends: &mut Backends,
    ctx: &RunContext,
    trace: &mut StageTrace,
) -> Result<Option<Mask>> {
    let cfg = &ctx.config;
    let gate = &ctx.gate;
    let (w, h) = frame.resolution();

    let input = match (gaze, state.prompt) {
        (Some(g), _) => match &ctx.homography {
            Some(hm) => hm.apply(g)?,
            None => g,
        }
        .clamp_to(w, h),
        (None, Some(held)) => held,
        (None, None) => return Ok(None),
    };
    trace.input_prompt = Some(input);
    let mut prompt = input;

    if cfg.flags.dar {
        let depth = backends.depth(frame)?;
        let maxima = extract_maxima(&depth, &cfg.dar)?;
        prompt = dar_refine(prompt, &maxima)?;
        trace.dar = Some(DarTrace {
            maxima: maxima.len(),
            prompt,
        });
    }

    let mask = backends.segment(frame, prompt)?;
    let valid = gate.accepts(&mask);
    trace.initial = Some(SegTrace {
        prompt,
        size: mask.count(),
        valid,
    });
    let mut current = RefineOutcome::unchanged(prompt, mask, valid);
    let kalman_before = state.kalman;

    let order = match cfg.fallback_order {
        FallbackOrder::LesThenKf => [Fallback::Les, Fallback::Kf],
        FallbackOrder::KfThenLes => [Fallback::Kf, Fallback::Les],
    };
    for stage in order {
        match stage {
            Fallback::Les if cfg.flags.les && !current.accepted => {
                let seed = cfg.seed ^ frame.frame_index as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let out = les_refine(
                    current.prompt,
                    current.mask,
                    gate,
                    |q| backends.segment(frame, q),
                    &cfg.les,
                    (w, h),
                    &mut rng,
                )?;
                trace.les = Some(LesTrace {
                    seed,
                    probes_used: out.probes_used,
                    accepted: out.accepted,
                    prompt: out.prompt,
                });
                current = out;
            }
            Fallback::Kf if cfg.flags.kf => {
                let (next, out, report) = kf_step(
                    &state.kalman,
                    current.prompt,
                    current.mask,
                    gate,
                    |q| backends.segment(frame, q),
                    &ctx.kalman,
                    cfg.kf.initial_var,
                    (w, h),
                )?;
                state.kalman = next;
                trace.kf = Some(report);
                current = out;
            }
            _ => {}
        }
    }

    // Under kf-les a prompt rescued by LES arrives after the filter step;
    // feed it to the filter as the frame's accepted observation.
    let rescued_late = matches!(cfg.fallback_order, FallbackOrder::KfThenLes)
        && trace.les.is_some_and(|l| l.accepted)
        && trace.kf.is_some_and(|r| !r.corrected && !r.initialized_now && r.predicted_size.is_none_or(|s| !gate.is_valid(s)));
    if cfg.flags.kf && rescued_late {
        let (next, _, report) = kf_step(
            &kalman_before,
            current.prompt,
            current.mask.clone(),
            gate,
            |_| Err(ProviderError::Unsupported("no segmentation on the correction path".into())),
            &ctx.kalman,
            cfg.kf.initial_var,
            (w, h),
        )?;
        state.kalman = next;
        if let Some(r) = trace.kf.as_mut() {
            r.corrected = report.corrected;
            r.initialized_now = report.initialized_now;
        }
    }

    state.prompt = Some(current.prompt);
    trace.emitted_prompt = Some(current.prompt);
    trace.status = if current.accepted {
        FrameStatus::Valid
    } else {
        FrameStatus::Invalid
    };
    Ok(Some(current.mask))
}

/// Identity and fixed inputs of a run, written as the first trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub participant: String,
    pub run: String,
    pub dataset: String,
    pub object: ObjectId,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub config: PipelineConfig,
    pub gate: SizeGate,
    pub homography: Option<[[f64; 3]; 3]>,
}

impl RunHeader {
    pub fn context(&self) -> Result<RunContext> {
        let homography = self.homography.map(Homography::from_rows).transpose()?;
        Ok(RunContext::new(self.config.clone(), self.gate, homography))
    }

    pub fn frame(&self, frame_index: usize) -> FrameRef {
        FrameRef::new(
            format!("{}/{}/{}", self.participant, self.run, self.object),
            frame_index,
            (self.width, self.height),
        )
    }
}

/// A header line followed by one line per frame, all JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub header: RunHeader,
    pub frames: Vec<StageTrace>,
}

impl RunTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |i: usize, e: serde_json::Error| Error::Data(format!("trace line {}: {e}", i + 1));
        let header = serde_json::from_str(lines.next().unwrap_or("")).map_err(|e| bad(0, e))?;
        let frames = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(i + 1, e)))
            .collect::<Result<_>>()?;
        Ok(Self { header, frames })
    }

    /// `<participant>_<run>_<object>.jsonl`
    pub fn file_name(&self) -> String {
        let h = &self.header;
        format!("{}_{}_{}_{}.jsonl", h.participant, h.run, h.object, h.config.flags.label())
    }
}

/// Recomputes one frame from its trace record.
pub fn replay_frame(header: &RunHeader, record: &StageTrace, backends: &mut Backends) -> Result<FrameOutput> {
    let ctx = header.context()?;
    let mut state = PromptState {
        object: header.object,
        prompt: record.prev_prompt,
        kalman: record.kf_before,
    };
    let frame = header.frame(record.frame_index);
    Ok(process_frame(&mut state, record.gaze, &frame, backends, &ctx))
}

/// One (gaze series, configuration) pair to evaluate.
#[derive(Debug, Clone)]
pub struct Job {
    pub participant: String,
    pub run: String,
    pub object: ObjectId,
    pub gaze: Arc<Vec<GazeSample>>,
    pub config: PipelineConfig,
}

/// Where frames, ground truth and backends come from.
pub trait DataSource: Sync {
    fn info(&self) -> &DatasetInfo;
    /// Fresh backends for one worker.
    fn backends(&self, config: &PipelineConfig) -> Result<Backends>;
    fn ground_truth(&self) -> Result<Box<dyn GroundTruth>>;
    /// First camera frame, for arena detection.
    fn arena_frame(&self) -> Result<GrayImage>;
    /// Checks that ground truth exists for every frame of `object`.
    fn check_ground_truth(&self, _object: ObjectId) -> Result<()> {
        Ok(())
    }
}

/// A synthetic scenario rendered in memory.
///
/// All backends handed out share one frame cache.
pub struct SceneSource {
    cfg: Arc<ScenarioConfig>,
    info: DatasetInfo,
    oracle: SceneOracle,
}

impl SceneSource {
    pub fn new(cfg: ScenarioConfig, connectivity: Connectivity) -> Result<Self> {
        cfg.validate()?;
        let cfg = Arc::new(cfg);
        Ok(Self {
            info: cfg.dataset_info(),
            oracle: SceneOracle::new(Arc::clone(&cfg), connectivity),
            cfg,
        })
    }

    fn oracle(&self) -> SceneOracle {
        self.oracle.clone()
    }
}

impl DataSource for SceneSource {
    fn info(&self) -> &DatasetInfo {
        &self.info
    }

    fn backends(&self, _: &PipelineConfig) -> Result<Backends> {
        Ok(Backends::from_scene(self.oracle()))
    }

    fn ground_truth(&self) -> Result<Box<dyn GroundTruth>> {
        Ok(Box::new(self.oracle()))
    }

    fn arena_frame(&self) -> Result<GrayImage> {
        Ok(render_gray(&self.cfg, &render_labels(&self.cfg, 0)))
    }
}

/// A dataset directory with configurable backends.
pub struct DiskSource {
    dataset: DiskDataset,
    provider: ProviderSection,
}

impl DiskSource {
    pub fn new(dataset: DiskDataset, provider: ProviderSection) -> Self {
        Self { dataset, provider }
    }

    pub fn root(&self) -> &PathBuf {
        &self.dataset.root
    }

    fn scenario(&self) -> Result<Arc<ScenarioConfig>> {
        self.dataset
            .manifest
            .scenario
            .clone()
            .map(Arc::new)
            .ok_or_else(|| Error::Config("provider.depth = \"synthetic\" needs a [scenario] in the manifest".into()))
    }
}

impl DataSource for DiskSource {
    fn info(&self) -> &DatasetInfo {
        self.dataset.info()
    }

    fn backends(&self, config: &PipelineConfig) -> Result<Backends> {
        let root = &self.dataset.root;
        let p = &self.provider;
        let spawn = || -> Result<ExecProvider> {
            let cmd = p
                .exec
                .cmd
                .as_deref()
                .ok_or_else(|| Error::Config("provider.exec.cmd is not set".into()))?;
            Ok(ExecProvider::spawn(cmd, p.exec.timeout(), root)?)
        };
        let need_depth = config.flags.dar;
        let (segmenter, depth): (Box<dyn SegmentationProvider>, Option<Box<dyn DepthProvider>>) =
            match (p.segmenter, p.depth) {
                (SegmenterKind::Exec, DepthKind::Exec) => {
                    let shared = spawn()?.shared();
                    (Box::new(shared.clone()), Some(Box::new(shared)))
                }
                (seg, depth) => {
                    let segmenter: Box<dyn SegmentationProvider> = match seg {
                        SegmenterKind::Labelmap => Box::new(LabelMapProvider::new(root, p.connectivity)),
                        SegmenterKind::Exec => Box::new(spawn()?),
                    };
                    let depth: Option<Box<dyn DepthProvider>> = match (need_depth, depth) {
                        (false, _) => None,
                        (true, DepthKind::File) => Some(Box::new(FileDepthProvider::new(root, p.depth_flip))),
                        (true, DepthKind::Synthetic) => {
                            Some(Box::new(SceneOracle::new(self.scenario()?, p.connectivity)))
                        }
                        (true, DepthKind::Exec) => Some(Box::new(spawn()?)),
                    };
                    (segmenter, depth)
                }
            };
        Ok(Backends::new(segmenter, depth, self.ground_truth()?))
    }

    fn ground_truth(&self) -> Result<Box<dyn GroundTruth>> {
        Ok(Box::new(FileGroundTruth::new(&self.dataset.root)))
    }

    fn arena_frame(&self) -> Result<GrayImage> {
        let path = self.dataset.path(&dataset::frame_file(0));
        let bytes = std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        read_pgm(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    fn check_ground_truth(&self, object: ObjectId) -> Result<()> {
        for t in 0..self.info().frames {
            let path = self.dataset.path(&dataset::gt_file(t, object));
            if !path.is_file() {
                return Err(Error::Data(format!("missing ground truth {}", path.display())));
            }
        }
        Ok(())
    }
}

/// Calibrates the gate and the arena mapping for a job.
pub fn prepare(source: &dyn DataSource, job: &Job) -> Result<RunContext> {
    let info = source.info();
    if job.gaze.len() != info.frames {
        return Err(Error::Data(format!(
            "{} {}: gaze has {} samples, dataset has {} frames",
            job.participant,
            job.run,
            job.gaze.len(),
            info.frames
        )));
    }
    if !info.objects.contains(&job.object) {
        return Err(Error::Data(format!("{} is not part of dataset {}", job.object, info.name)));
    }
    source.check_ground_truth(job.object)?;
    let objects = match job.config.calibration {
        GateCalibration::AllObjects => info.objects.clone(),
        GateCalibration::Target => vec![job.object],
    };
    let mut gt = source.ground_truth()?;
    let frame0 = FrameRef::new("calibration", 0, info.resolution());
    let masks = objects
        .iter()
        .map(|&o| {
            let m = gt.gt_mask(&frame0, o)?;
            if m.dims() != info.resolution() {
                return Err(Error::Data(format!("ground truth for {o} does not match the frame size")));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let gate = calibrate_gate(&masks, job.config.alpha)?;
    let homography = if job.config.arena.enabled {
        let frame = match job.config.arena.corners {
            Some(_) => None,
            None => Some(source.arena_frame()?),
        };
        Some(job.config.arena.transform(frame.as_ref(), info.resolution())?)
    } else {
        None
    };
    Ok(RunContext::new(job.config.clone(), gate, homography))
}

pub struct RunOutput {
    pub result: RunResult,
    pub trace: RunTrace,
}

/// Frame-by-frame execution of one job.
struct JobRunner<'a> {
    job: &'a Job,
    ctx: &'a RunContext,
    header: RunHeader,
    backends: Backends,
    state: PromptState,
    empty: Mask,
    scores: Vec<FrameScore>,
    frames: Vec<StageTrace>,
}

impl<'a> JobRunner<'a> {
    fn new(source: &dyn DataSource, job: &'a Job, ctx: &'a RunContext) -> Result<Self> {
        let info = source.info();
        let header = RunHeader {
            participant: job.participant.clone(),
            run: job.run.clone(),
            dataset: info.name.clone(),
            object: job.object,
            width: info.width,
            height: info.height,
            frames: info.frames,
            config: ctx.config.clone(),
            gate: ctx.gate,
            homography: ctx.homography.map(|h| h.rows()),
        };
        Ok(Self {
            job,
            ctx,
            backends: source.backends(&ctx.config)?,
            state: PromptState::new(job.object),
            empty: Mask::empty(info.width, info.height)?,
            scores: Vec::with_capacity(info.frames),
            frames: Vec::with_capacity(info.frames),
            header,
        })
    }

    fn step(&mut self, t: usize) -> Result<()> {
        let sample = self.job.gaze[t];
        let frame = self.header.frame(t);
        let gaze = sample.valid.then_some(sample.point);
        let FrameOutput { mask, mut trace } =
            process_frame(&mut self.state, gaze, &frame, &mut self.backends, self.ctx);
        let gt = self.backends.gt_mask(&frame, self.job.object)?;
        let score = score_frame(t, mask.as_ref().unwrap_or(&self.empty), &gt)
            .map_err(|e| Error::Data(format!("frame {t}: {e}")))?;
        if score.valid {
            trace.j = Some(score.j);
            trace.dsc = Some(score.dsc);
        }
        self.scores.push(score);
        self.frames.push(trace);
        Ok(())
    }

    fn finish(self) -> Result<RunOutput> {
        let job = self.job;
        let (mean_j, mean_dsc, frames_scored) = aggregate(&self.scores)
            .map_err(|e| Error::Data(format!("{} {} {}: {e}", job.participant, job.run, job.object)))?;
        Ok(RunOutput {
            result: RunResult {
                participant: job.participant.clone(),
                run: job.run.clone(),
                dataset: self.header.dataset.clone(),
                flags: self.ctx.config.flags,
                mean_j,
                mean_dsc,
                frames_scored,
            },
            trace: RunTrace {
                header: self.header,
                frames: self.frames,
            },
        })
    }
}

/// Runs every frame of one job sequentially.
pub fn run_job(source: &dyn DataSource, job: &Job, ctx: &RunContext) -> Result<RunOutput> {
    let mut runner = JobRunner::new(source, job, ctx)?;
    for t in 0..source.info().frames {
        runner.step(t)?;
    }
    runner.finish()
}

/// Evaluates all jobs, in parallel across jobs when `workers` allows.
///
/// Jobs advance in lockstep, one frame at a time, so backends that cache
/// the current frame serve every job from one rendering. Every job is
/// validated before any frame is processed. Output order is by
/// (participant, run, dataset, flags), with ties kept in job order.
pub fn run_experiment(source: &dyn DataSource, jobs: &[Job], workers: Option<usize>) -> Result<Vec<RunOutput>> {
    let contexts = jobs.iter().map(|j| prepare(source, j)).collect::<Result<Vec<_>>>()?;
    let work = || -> Result<Vec<RunOutput>> {
        let mut runners = jobs
            .iter()
            .zip(&contexts)
            .map(|(job, ctx)| JobRunner::new(source, job, ctx))
            .collect::<Result<Vec<_>>>()?;
        for t in 0..source.info().frames {
            runners.par_iter_mut().map(|r| r.step(t)).collect::<Result<()>>()?;
        }
        runners.into_iter().map(JobRunner::finish).collect()
    };
    let mut outputs = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    outputs.sort_by(|a, b| {
        let key = |o: &RunOutput| {
            (
                o.result.participant.clone(),
                o.result.run.clone(),
                o.result.dataset.clone(),
                o.result.flags,
            )
        };
        key(a).cmp(&key(b))
    });
    Ok(outputs)
}
