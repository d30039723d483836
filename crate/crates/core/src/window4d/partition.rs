//! Window assignment, set chunking, and positional encoding.

use super::{Window4DError, WindowConfig};
use std::collections::BTreeMap;

/// Axis voxels are sorted along before set chunking; alternates per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortAxis {
    X,
    Y,
}

impl SortAxis {
    fn index(&self) -> usize {
        match self {
            SortAxis::X => 0,
            SortAxis::Y => 1,
        }
    }
}

/// Per-voxel window id and coordinate inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAssignment {
    pub window_ids: Vec<[i32; 4]>,
    pub inner: Vec<[u16; 4]>,
}

/// window_id = floor((index + shift) / window), inner = (index + shift) mod
/// window, per axis.
pub fn assign_windows(
    indices: &[[i32; 4]],
    cfg: &WindowConfig,
    shift: [usize; 4],
) -> Result<WindowAssignment, Window4DError> {
    cfg.validate()?;
    let win = cfg.effective_window();
    let mut window_ids = Vec::with_capacity(indices.len());
    let mut inner = Vec::with_capacity(indices.len());
    for idx in indices {
        let mut wid = [0i32; 4];
        let mut inn = [0u16; 4];
        for a in 0..4 {
            let shifted = idx[a] as i64 + shift[a] as i64;
            debug_assert!(shifted >= 0);
            wid[a] = (shifted / win[a] as i64) as i32;
            inn[a] = (shifted % win[a] as i64) as u16;
        }
        window_ids.push(wid);
        inner.push(inn);
    }
    Ok(WindowAssignment { window_ids, inner })
}

/// One fixed-capacity attention set. `rows` index into the voxel rows;
/// padding slots carry `u32::MAX` with `valid = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub window_id: [i32; 4],
    pub rows: Vec<u32>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetPartition {
    pub capacity: usize,
    pub sort_axis: SortAxis,
    pub sets: Vec<VoxelSet>,
}

impl SetPartition {
    pub fn valid_slots(&self) -> usize {
        self.sets
            .iter()
            .map(|s| s.valid.iter().filter(|&&v| v).count())
            .sum()
    }
}

/// Chunk each window's voxels into ceil(n / capacity) sets.
///
/// Within a window, voxels sort by the inner coordinate along `sort_axis`
/// with ties broken lexicographically by the remaining axes. The final chunk
/// is padded to capacity with masked slots.
pub fn partition_sets(
    assignment: &WindowAssignment,
    cfg: &WindowConfig,
    sort_axis: SortAxis,
) -> Result<SetPartition, Window4DError> {
    cfg.validate()?;
    let cap = cfg.set_capacity;
    let mut windows: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for (row, wid) in assignment.window_ids.iter().enumerate() {
        windows.entry(pack_window(*wid)).or_default().push(row as u32);
    }

    let axis = sort_axis.index();
    let mut sets = Vec::new();
    for (key, mut rows) in windows {
        rows.sort_unstable_by_key(|&r| {
            let inn = assignment.inner[r as usize];
            let mut rest = [0u16; 3];
            let mut w = 0;
            for a in 0..4 {
                if a != axis {
                    rest[w] = inn[a];
                    w += 1;
                }
            }
            (inn[axis], rest)
        });
        let window_id = unpack_window(key);
        for chunk in rows.chunks(cap) {
            let mut set_rows = chunk.to_vec();
            let mut valid = vec![true; chunk.len()];
            set_rows.resize(cap, u32::MAX);
            valid.resize(cap, false);
            sets.push(VoxelSet {
                window_id,
                rows: set_rows,
                valid,
            });
        }
    }
    Ok(SetPartition {
        capacity: cap,
        sort_axis,
        sets,
    })
}

// Window ids fit comfortably in 16 bits per axis: dividing a 65536-capped
// grid by the window extent only shrinks them.
fn pack_window(wid: [i32; 4]) -> u64 {
    ((wid[0] as u64) << 48) | ((wid[1] as u64) << 32) | ((wid[2] as u64) << 16) | (wid[3] as u64)
}

fn unpack_window(key: u64) -> [i32; 4] {
    [
        ((key >> 48) & 0xffff) as i32,
        ((key >> 32) & 0xffff) as i32,
        ((key >> 16) & 0xffff) as i32,
        (key & 0xffff) as i32,
    ]
}

/// Per-axis embedding tables for the additive positional encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct PosTables {
    /// One table per axis, each `extent x channels`, row-major.
    pub tables: [Vec<f32>; 4],
    pub extents: [usize; 4],
    pub channels: usize,
}

impl PosTables {
    pub fn validate(&self) -> Result<(), Window4DError> {
        for a in 0..4 {
            if self.tables[a].len() != self.extents[a] * self.channels {
                return Err(Window4DError::ShapeMismatch(format!(
                    "axis {a} table has {} values, expected {}",
                    self.tables[a].len(),
                    self.extents[a] * self.channels
                )));
            }
        }
        Ok(())
    }
}

/// embedding(voxel) = sum over axes of table[axis][inner[axis]].
pub fn positional_encoding(
    inner: &[[u16; 4]],
    tables: &PosTables,
) -> Result<Vec<f32>, Window4DError> {
    tables.validate()?;
    let c = tables.channels;
    let mut out = vec![0.0f32; inner.len() * c];
    for (row, inn) in inner.iter().enumerate() {
        let dst = &mut out[row * c..(row + 1) * c];
        for a in 0..4 {
            let coord = inn[a] as usize;
            if coord >= tables.extents[a] {
                return Err(Window4DError::OutOfRangeCoord {
                    axis: a,
                    coord,
                    extent: tables.extents[a],
                });
            }
            let src = &tables.tables[a][coord * c..(coord + 1) * c];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }
    Ok(out)
}
