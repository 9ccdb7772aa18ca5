//! Figure-style frames: the emitted mask outline, the emitted prompt and
//! the raw gaze drawn over the camera frame.

use std::fs;
use std::path::Path;

use gazeprompt::config::RunConfig;
use gazeprompt::dataset::{frame_file, DiskDataset};
use gazeprompt::pipeline::{mask_digest, replay_frame, DataSource, DiskSource, RunTrace};
use gazeprompt::raster::{read_pgm, write_ppm, GrayImage, RgbImage};
use gazeprompt::{Error, Mask, PixelPoint, Result};

use crate::{create_dir, read_text, write_file};

const CONTOUR: [u8; 3] = [255, 40, 40];
const PROMPT: [u8; 3] = [40, 220, 40];
const GAZE: [u8; 3] = [60, 120, 255];
const MARKER_ARM: i64 = 4;

/// Mask pixels with at least one 4-neighbour outside the mask or the frame.
pub fn contour(mask: &Mask) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let inside = |x: i64, y: i64| mask.contains(x, y) && mask.get(x as usize, y as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as i64, y as i64);
            if mask.get(x, y) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| !inside(xi + dx, yi + dy)) {
                out.push((x, y));
            }
        }
    }
    out
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if img.contains(x, y) {
        img.set(x as usize, y as usize, color);
    }
}

/// Plus-shaped marker centred on the rounded point.
fn marker(img: &mut RgbImage, p: PixelPoint, color: [u8; 3]) {
    let (cx, cy) = p.round_half_up();
    for d in -MARKER_ARM..=MARKER_ARM {
        put(img, cx + d, cy, color);
        put(img, cx, cy + d, color);
    }
}

pub fn render(frame: &GrayImage, mask: Option<&Mask>, prompt: Option<PixelPoint>, gaze: Option<PixelPoint>) -> RgbImage {
    let mut img = frame.map(|v| [v, v, v]);
    if let Some(m) = mask.filter(|m| m.dims() == frame.dims()) {
        for (x, y) in contour(m) {
            img.set(x, y, CONTOUR);
        }
    }
    if let Some(g) = gaze {
        marker(&mut img, g, GAZE);
    }
    if let Some(p) = prompt {
        marker(&mut img, p, PROMPT);
    }
    img
}

pub fn overlay(data: &Path, results: &Path, config: Option<&Path>, every: usize, out: &Path) -> Result<()> {
    if every == 0 {
        return Err(Error::Config("--every must be at least 1".into()));
    }
    let provider = match config {
        Some(path) => RunConfig::load(path)?.provider,
        None => RunConfig::default().provider,
    };
    let source = DiskSource::new(DiskDataset::open(data)?, provider);
    let trace_dir = results.join("traces");
    let mut files: Vec<_> = fs::read_dir(&trace_dir)
        .map_err(|e| Error::io(trace_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no traces in {}", trace_dir.display())));
    }
    let mut mismatches = 0usize;
    for path in &files {
        let trace = RunTrace::from_jsonl(&read_text(path)?)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        let dir = out.join(stem);
        create_dir(&dir)?;
        let mut backends = source.backends(&trace.header.config)?;
        for record in trace.frames.iter().filter(|r| r.frame_index % every == 0) {
            let t = record.frame_index;
            let frame_path = data.join(frame_file(t));
            let bytes = fs::read(&frame_path).map_err(|e| Error::io(frame_path.display().to_string(), e))?;
            let frame: GrayImage =
                read_pgm(&bytes).map_err(|e| Error::Data(format!("{}: {e}", frame_path.display())))?;
            let replayed = replay_frame(&trace.header, record, &mut backends)?;
            let digest = replayed.mask.as_ref().map(|m| format!("{:016x}", mask_digest(m)));
            if digest != record.mask_digest {
                mismatches += 1;
            }
            let img = render(&frame, replayed.mask.as_ref(), record.emitted_prompt, record.gaze);
            write_file(&dir.join(format!("frame_{t:06}.ppm")), &write_ppm(&img))?;
        }
    }
    if mismatches > 0 {
        eprintln!("warning: {mismatches} replayed frames differ from their trace; the provider is not deterministic");
    }
    Ok(())
}
