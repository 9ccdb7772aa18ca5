use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{LabelMap, Mask, Pixel, Raster, RasterError};

/// Pixel adjacency used when growing regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Mask of the connected region that shares the label found at `seed`.
///
/// Background (id 0) is segmentable like any other label; it usually
/// produces a huge mask that fails the size gate.
pub fn connected_component(
    labels: &LabelMap,
    seed: Pixel,
    connectivity: Connectivity,
) -> Result<Mask, RasterError> {
    let seed = labels.pixel(seed.x as i64, seed.y as i64)?;
    let target = labels.get(seed.x, seed.y);
    let (w, h) = labels.dims();
    let mut mask = Mask::empty(w, h)?;
    let mut queue = VecDeque::new();
    mask.set(seed.x, seed.y, true);
    queue.push_back(seed);
    while let Some(p) = queue.pop_front() {
        for &(dx, dy) in connectivity.offsets() {
            let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
            if !labels.contains(nx, ny) {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if !mask.get(nx, ny) && labels.get(nx, ny) == target {
                mask.set(nx, ny, true);
                queue.push_back(Pixel::new(nx, ny));
            }
        }
    }
    Ok(mask)
}

/// Precomputed component labeling of a label map.
///
/// Answers repeated point queries against the same frame without
/// re-flooding; `mask_at` is equivalent to [`connected_component`].
#[derive(Debug, Clone)]
pub struct ComponentIndex {
    ids: Raster<u32>,
    sizes: Vec<usize>,
}

impl ComponentIndex {
    pub fn build(labels: &LabelMap, connectivity: Connectivity) -> Self {
        let (w, h) = labels.dims();
        let cells = labels.as_slice();
        // Horizontal runs of equal label, row by row.
        let mut runs: Vec<Run> = Vec::new();
        let mut row_start = Vec::with_capacity(h + 1);
        for y in 0..h {
            row_start.push(runs.len());
            let row = &cells[y * w..(y + 1) * w];
            let mut x0 = 0;
            for x in 1..=w {
                if x == w || row[x] != row[x0] {
                    runs.push(Run { y, x0, x1: x, label: row[x0] });
                    x0 = x;
                }
            }
        }
        row_start.push(runs.len());

        let mut parent: Vec<usize> = (0..runs.len()).collect();
        let slack = usize::from(connectivity == Connectivity::Eight);
        for y in 1..h {
            let (mut lo, a_end) = (row_start[y - 1], row_start[y]);
            for b in row_start[y]..row_start[y + 1] {
                let rb = &runs[b];
                while lo < a_end && runs[lo].x1 + slack <= rb.x0 {
                    lo += 1;
                }
                let mut a = lo;
                while a < a_end && runs[a].x0 < rb.x1 + slack {
                    if runs[a].label == rb.label {
                        union(&mut parent, a, b);
                    }
                    a += 1;
                }
            }
        }

        // Number components by their first pixel in row-major order.
        let mut comp_of_root = vec![u32::MAX; runs.len()];
        let mut sizes = Vec::new();
        let mut ids = vec![0u32; w * h];
        for (i, run) in runs.iter().enumerate() {
            let root = find(&mut parent, i);
            if comp_of_root[root] == u32::MAX {
                comp_of_root[root] = sizes.len() as u32;
                sizes.push(0);
            }
            let comp = comp_of_root[root];
            sizes[comp as usize] += run.x1 - run.x0;
            ids[run.y * w + run.x0..run.y * w + run.x1].fill(comp);
        }
        Self {
            ids: Raster::from_vec(w, h, ids).expect("dims come from a valid raster"),
            sizes,
        }
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size_at(&self, seed: Pixel) -> Result<usize, RasterError> {
        let seed = self.ids.pixel(seed.x as i64, seed.y as i64)?;
        Ok(self.sizes[self.ids.get(seed.x, seed.y) as usize])
    }

    pub fn mask_at(&self, seed: Pixel) -> Result<Mask, RasterError> {
        let seed = self.ids.pixel(seed.x as i64, seed.y as i64)?;
        let comp = self.ids.get(seed.x, seed.y);
        Ok(self.ids.map(|c| c == comp))
    }
}

struct Run {
    y: usize,
    x0: usize,
    x1: usize,
    label: super::LabelId,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
    }
}
