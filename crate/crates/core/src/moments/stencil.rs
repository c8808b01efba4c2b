//! 5 x 5 LR neighborhoods around the LR cell containing an HR pixel.
//!
//! Cells are addressed by `(dr, dc)` offsets in `-2..=2` relative to the
//! center cell N0 and stored row-major (`(dr + 2) * 5 + (dc + 2)`). Rings are
//! listed clockwise (rows grow downward): N1 starts above N0, C1 at the
//! top-left corner, N2 at `(-2, -1)`, C2 at `(-2, -2)`.

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::CHANNELS;

pub const SIDE: usize = 5;
pub const CELLS: usize = SIDE * SIDE;

const fn cell(dr: i32, dc: i32) -> usize {
    ((dr + 2) * 5 + (dc + 2)) as usize
}

pub const N0: usize = cell(0, 0);
pub const N1: [usize; 4] = [cell(-1, 0), cell(0, 1), cell(1, 0), cell(0, -1)];
pub const C1: [usize; 4] = [cell(-1, -1), cell(-1, 1), cell(1, 1), cell(1, -1)];
pub const N2: [usize; 12] = [
    cell(-2, -1),
    cell(-2, 0),
    cell(-2, 1),
    cell(-1, 2),
    cell(0, 2),
    cell(1, 2),
    cell(2, 1),
    cell(2, 0),
    cell(2, -1),
    cell(1, -2),
    cell(0, -2),
    cell(-1, -2),
];
pub const C2: [usize; 4] = [cell(-2, -2), cell(-2, 2), cell(2, 2), cell(2, -2)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    N0,
    N1,
    C1,
    N2,
    C2,
}

/// Class label of stencil cell `idx`.
pub fn class_of(idx: usize) -> CellClass {
    let dr = (idx / SIDE) as i32 - 2;
    let dc = (idx % SIDE) as i32 - 2;
    match (dr.abs(), dc.abs()) {
        (0, 0) => CellClass::N0,
        (1, 1) => CellClass::C1,
        (2, 2) => CellClass::C2,
        (a, b) if a.max(b) == 1 => CellClass::N1,
        _ => CellClass::N2,
    }
}

/// LR velocities on the 5 x 5 stencil, `values[cell][component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub values: [[f64; CHANNELS]; CELLS],
}

impl Stencil {
    pub fn zeros() -> Self {
        Stencil {
            values: [[0.0; CHANNELS]; CELLS],
        }
    }

    #[inline]
    pub fn value(&self, cell: usize, comp: usize) -> f64 {
        self.values[cell][comp]
    }
}

/// Stencil centered on LR cell `(row, col)`; out-of-domain cells replicate
/// the nearest in-domain cell (zero-gradient boundary).
pub fn stencil_at_cell(lr: &Field, row: usize, col: usize) -> Stencil {
    let (h, w) = (lr.height() as i64, lr.width() as i64);
    let mut st = Stencil::zeros();
    for dr in -2i64..=2 {
        let r = (row as i64 + dr).clamp(0, h - 1) as usize;
        for dc in -2i64..=2 {
            let c = (col as i64 + dc).clamp(0, w - 1) as usize;
            let idx = ((dr + 2) * 5 + (dc + 2)) as usize;
            for comp in 0..CHANNELS {
                st.values[idx][comp] = lr.get(comp, r, c);
            }
        }
    }
    st
}

/// Stencil for HR pixel `(row, col)`: centered on LR cell
/// `(row / delta, col / delta)`.
pub fn build_stencil(lr: &Field, pixel: (usize, usize), delta: usize) -> Result<Stencil> {
    let (r, c) = (pixel.0 / delta, pixel.1 / delta);
    if delta == 0 || r >= lr.height() || c >= lr.width() {
        return Err(Error::invalid(format!(
            "HR pixel {pixel:?} outside the {}x{} LR grid at delta {delta}",
            lr.height(),
            lr.width()
        )));
    }
    Ok(stencil_at_cell(lr, r, c))
}
