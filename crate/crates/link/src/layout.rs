//! Geometry of the displayed frame and rendering of payloads into it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modulation::{self, CapacityExceeded, Modulation};
use crate::payload::{Interleaving, VelocityPayload};
use crate::raster::FrameRaster;

/// Marker side length in modules (1:1:3:1:1 across).
pub const MARKER_MODULES: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    fn overlaps(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
        (self.x as f64) < x1 && x0 < (self.x + self.w) as f64 && (self.y as f64) < y1 && y0 < (self.y + self.h) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub width: usize,
    pub height: usize,
    /// Width of one marker ring in pixels.
    pub module_px: f64,
    /// Marker centers in the order top-left, top-right, bottom-left, bottom-right.
    pub marker_centers: [[f64; 2]; 4],
    /// Dark+light period of the stripes joining adjacent markers.
    pub stripe_period: f64,
    pub stripe_phase: f64,
    pub data_rect: Rect,
    pub fft_grid: [usize; 2],
    pub direct_grid: [usize; 2],
    #[serde(default)]
    pub interleaving: Interleaving,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("marker {0} overlaps the data region")]
    MarkerOverlap(usize),
    #[error("marker {0} leaves the frame")]
    MarkerOutside(usize),
    #[error("data region does not fit the frame")]
    DataOutside,
    #[error("a {0}x{1} grid does not divide the data region")]
    GridMismatch(usize, usize),
    #[error("non-positive marker module or stripe period")]
    BadScale,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            width: 336,
            height: 240,
            module_px: 8.0,
            marker_centers: [[40.0, 40.0], [296.0, 40.0], [40.0, 200.0], [296.0, 200.0]],
            stripe_period: 24.0,
            stripe_phase: 0.0,
            data_rect: Rect {
                x: 88,
                y: 56,
                w: 160,
                h: 128,
            },
            fft_grid: [32, 32],
            direct_grid: [16, 16],
            interleaving: Interleaving::Grouped,
        }
    }
}

impl FrameLayout {
    pub fn grid(&self, mode: Modulation) -> [usize; 2] {
        match mode {
            Modulation::Fft => self.fft_grid,
            Modulation::Direct => self.direct_grid,
        }
    }

    /// Cell width and height in pixels.
    pub fn cell_size(&self, mode: Modulation) -> (usize, usize) {
        let [rows, cols] = self.grid(mode);
        (self.data_rect.w / cols, self.data_rect.h / rows)
    }

    pub fn marker_half_extent(&self) -> f64 {
        0.5 * MARKER_MODULES * self.module_px
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if !(self.module_px > 0.0 && self.stripe_period > 0.0) {
            return Err(LayoutError::BadScale);
        }
        let r = self.data_rect;
        if r.x + r.w > self.width || r.y + r.h > self.height {
            return Err(LayoutError::DataOutside);
        }
        let half = self.marker_half_extent();
        for (i, [cx, cy]) in self.marker_centers.iter().copied().enumerate() {
            if cx - half < 0.0 || cy - half < 0.0 || cx + half > self.width as f64 || cy + half > self.height as f64 {
                return Err(LayoutError::MarkerOutside(i));
            }
            if r.overlaps(cx - half, cy - half, cx + half, cy + half) {
                return Err(LayoutError::MarkerOverlap(i));
            }
        }
        for [rows, cols] in [self.fft_grid, self.direct_grid] {
            if rows == 0 || cols == 0 || r.w % cols != 0 || r.h % rows != 0 {
                return Err(LayoutError::GridMismatch(rows, cols));
            }
        }
        Ok(())
    }

    /// Pairs of marker indices joined by stripes: top, bottom, left, right.
    pub const EDGES: [(usize, usize); 4] = [(0, 1), (2, 3), (0, 2), (1, 3)];

    fn is_dark(&self, px: f64, py: f64) -> bool {
        let m = self.module_px;
        for [cx, cy] in self.marker_centers {
            let r = ((px - cx).abs()).max((py - cy).abs()) / m;
            if r < 3.5 {
                return !(1.5..2.5).contains(&r);
            }
        }
        let half = self.marker_half_extent();
        for (a, b) in Self::EDGES {
            let [ax, ay] = self.marker_centers[a];
            let [bx, by] = self.marker_centers[b];
            let len = (bx - ax).hypot(by - ay);
            let (ux, uy) = ((bx - ax) / len, (by - ay) / len);
            let (dx, dy) = (px - ax, py - ay);
            let along = dx * ux + dy * uy;
            let across = -dx * uy + dy * ux;
            let start = half + m;
            if across.abs() < 0.5 * m && along >= start && along < len - start {
                let phase = (along - start + self.stripe_phase) / (0.5 * self.stripe_period);
                return (phase.floor() as i64).rem_euclid(2) == 0;
            }
        }
        false
    }
}

/// Draws markers, stripes and the modulated payload on a white background.
pub fn render_frame(
    p: &VelocityPayload,
    layout: &FrameLayout,
    mode: Modulation,
) -> Result<FrameRaster, CapacityExceeded> {
    let [rows, cols] = layout.grid(mode);
    let bits = p.to_bits(layout.interleaving);
    let cells = modulation::modulate(&bits, rows, cols, mode)?;
    let mut out = FrameRaster::filled(layout.width, layout.height, 255);
    for y in 0..layout.height {
        for x in 0..layout.width {
            if layout.is_dark(x as f64 + 0.5, y as f64 + 0.5) {
                out.set(x, y, 0);
            }
        }
    }
    let (cw, ch) = layout.cell_size(mode);
    let r = layout.data_rect;
    for row in 0..rows {
        for col in 0..cols {
            let v = cells[row * cols + col].round().clamp(0.0, 255.0) as u8;
            for y in 0..ch {
                for x in 0..cw {
                    out.set(r.x + col * cw + x, r.y + row * ch + y, v);
                }
            }
        }
    }
    Ok(out)
}

/// Cell means of the data region of an upright (layout-aligned) raster. A
/// one-pixel border of each cell is ignored when the cell is large enough.
pub fn read_cells(raster: &FrameRaster, layout: &FrameLayout, mode: Modulation) -> Vec<f64> {
    let [rows, cols] = layout.grid(mode);
    let (cw, ch) = layout.cell_size(mode);
    let r = layout.data_rect;
    let (mx, my) = (usize::from(cw > 2), usize::from(ch > 2));
    let mut out = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let (x0, y0) = (r.x + col * cw, r.y + row * ch);
            let mut sum = 0.0;
            let mut n = 0.0;
            for y in y0 + my..y0 + ch - my {
                for x in x0 + mx..x0 + cw - mx {
                    sum += f64::from(raster.get(x, y));
                    n += 1.0;
                }
            }
            out.push(sum / n);
        }
    }
    out
}
