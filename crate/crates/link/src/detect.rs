//! Finding the four corner markers in a captured frame.
//!
//! Otsu binarization, connected dark components, a concentric 1:1:3:1:1
//! scanline test on each component, then a search for the one quadrilateral
//! of candidates whose edges all carry the expected stripe pattern.

use oisac_core::camera::{FeaturePixels, Pixel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homography::{apply_homography, estimate_homography};
use crate::layout::{FrameLayout, MARKER_MODULES};
use crate::raster::FrameRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DetectionFailure {
    #[error("found {found} marker candidates, need 4")]
    TooFewCandidates { found: usize },
    #[error("no candidate quadrilateral has stripes on every edge")]
    StripeMismatch,
    #[error("{quads} candidate quadrilaterals pass the stripe test")]
    Ambiguous { quads: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Allowed relative deviation of each scanline run from its nominal width.
    pub ratio_tol: f64,
    /// Allowed relative deviation of the stripe period.
    pub period_tol: f64,
    pub min_area: usize,
    /// Only the largest candidates enter the quadrilateral search.
    pub max_candidates: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            ratio_tol: 0.5,
            period_tol: 0.3,
            min_area: 8,
            max_candidates: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub center: [f64; 2],
    /// Module width measured along x and along y.
    pub module: [f64; 2],
}

impl Candidate {
    fn module_along(&self, ux: f64, uy: f64) -> f64 {
        self.module[0] * ux * ux + self.module[1] * uy * uy
    }
}

pub fn otsu_threshold(r: &FrameRaster) -> u8 {
    let mut hist = [0u64; 256];
    for v in &r.data {
        hist[*v as usize] += 1;
    }
    let total = r.data.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, c)| i as f64 * *c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 127u8);
    for t in 0..255 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t as u8;
        }
    }
    best_t
}

struct Binary {
    width: usize,
    height: usize,
    dark: Vec<bool>,
}

impl Binary {
    fn new(r: &FrameRaster) -> Self {
        let t = otsu_threshold(r);
        Self {
            width: r.width,
            height: r.height,
            dark: r.data.iter().map(|v| *v <= t).collect(),
        }
    }

    fn at(&self, x: i64, y: i64) -> Option<bool> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.dark[y as usize * self.width + x as usize])
        }
    }
}

struct Component {
    area: usize,
    min: [usize; 2],
    max: [usize; 2],
    sum: [f64; 2],
}

/// 4-connected dark components; returns the label image (0 = light) and stats.
fn components(b: &Binary) -> (Vec<u32>, Vec<Component>) {
    let mut labels = vec![0u32; b.dark.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..b.dark.len() {
        if !b.dark[start] || labels[start] != 0 {
            continue;
        }
        let id = comps.len() as u32 + 1;
        let mut c = Component {
            area: 0,
            min: [usize::MAX; 2],
            max: [0; 2],
            sum: [0.0; 2],
        };
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % b.width, i / b.width);
            c.area += 1;
            c.min = [c.min[0].min(x), c.min[1].min(y)];
            c.max = [c.max[0].max(x), c.max[1].max(y)];
            c.sum[0] += x as f64 + 0.5;
            c.sum[1] += y as f64 + 0.5;
            let mut visit = |j: usize| {
                if b.dark[j] && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < b.width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - b.width);
            }
            if y + 1 < b.height {
                visit(i + b.width);
            }
        }
        comps.push(c);
    }
    (labels, comps)
}

/// Lengths of the core, light and ring runs walking from `(x, y)` along
/// `(dx, dy)`, plus the position of the first ring pixel. The core run
/// includes the start pixel.
fn walk(b: &Binary, x: i64, y: i64, dx: i64, dy: i64, limit: i64) -> Option<([f64; 3], (i64, i64))> {
    let mut runs = [0.0; 3];
    let mut ring_at = (x, y);
    let mut phase = 0;
    let mut expect_dark = true;
    for step in 0..limit {
        let (px, py) = (x + dx * step, y + dy * step);
        let dark = b.at(px, py)?;
        if dark != expect_dark {
            phase += 1;
            expect_dark = dark;
            if phase == 3 {
                return Some((runs, ring_at));
            }
            if phase == 2 {
                ring_at = (px, py);
            }
        }
        runs[phase] += 1.0;
    }
    None
}

/// Module width along one axis if the scanline pattern fits 1:1:3:1:1.
fn scan_axis(b: &Binary, x: i64, y: i64, horizontal: bool, tol: f64) -> Option<(f64, (i64, i64))> {
    let limit = (b.width.max(b.height)) as i64;
    let (dx, dy) = if horizontal { (1, 0) } else { (0, 1) };
    let (fwd, ring) = walk(b, x, y, dx, dy, limit)?;
    let (back, _) = walk(b, x, y, -dx, -dy, limit)?;
    let core = fwd[0] + back[0] - 1.0;
    let total = core + fwd[1] + back[1] + fwd[2] + back[2];
    let module = total / MARKER_MODULES;
    // one pixel of slack absorbs edge rounding on small markers
    let ok = |len: f64, nominal: f64| (len - nominal * module).abs() <= tol * nominal * module + 1.0;
    let fits = ok(core, 3.0) && ok(fwd[1], 1.0) && ok(back[1], 1.0) && ok(fwd[2], 1.0) && ok(back[2], 1.0);
    fits.then_some((module, ring))
}

fn find_candidates(b: &Binary, cfg: &DetectorConfig) -> Vec<(Candidate, usize)> {
    let (labels, comps) = components(b);
    let mut found: Vec<(Candidate, usize)> = Vec::new();
    for c in &comps {
        let w = c.max[0] - c.min[0] + 1;
        let h = c.max[1] - c.min[1] + 1;
        if c.area < cfg.min_area || w < 3 || h < 3 || w > 3 * h || h > 3 * w {
            continue;
        }
        let x = ((c.min[0] + c.max[0]) / 2) as i64;
        let y = ((c.min[1] + c.max[1]) / 2) as i64;
        if b.at(x, y) != Some(true) {
            continue;
        }
        let Some((mh, ring)) = scan_axis(b, x, y, true, cfg.ratio_tol) else {
            continue;
        };
        let Some((mv, _)) = scan_axis(b, x, y, false, cfg.ratio_tol) else {
            continue;
        };
        let core_id = labels[y as usize * b.width + x as usize];
        let ring_id = labels[ring.1 as usize * b.width + ring.0 as usize];
        let mut ids = vec![core_id, ring_id];
        ids.dedup();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for id in ids {
            let comp = &comps[id as usize - 1];
            sx += comp.sum[0];
            sy += comp.sum[1];
            n += comp.area as f64;
        }
        let cand = Candidate {
            center: [sx / n, sy / n],
            module: [mh, mv],
        };
        let m = mh.max(mv);
        let dup = found
            .iter()
            .any(|(f, _)| (f.center[0] - cand.center[0]).hypot(f.center[1] - cand.center[1]) < 2.0 * m);
        if !dup {
            found.push((cand, c.area));
        }
    }
    found
}

/// Checks for alternating dark runs of the expected period between two
/// marker centers.
fn stripes_between(b: &Binary, p: &Candidate, q: &Candidate, period_modules: f64, tol: f64) -> bool {
    let (dx, dy) = (q.center[0] - p.center[0], q.center[1] - p.center[1]);
    let len = dx.hypot(dy);
    let (ux, uy) = (dx / len, dy / len);
    let (mp, mq) = (p.module_along(ux, uy), q.module_along(ux, uy));
    let start = 4.5 * mp;
    let end = len - 4.5 * mq;
    let nominal = period_modules * 0.5 * (mp + mq);
    if end - start < 3.0 * nominal {
        return false;
    }
    let step = 0.5;
    let mut run_starts = Vec::new();
    let mut dark_count = 0usize;
    let mut samples = 0usize;
    let mut prev = None;
    let mut s = start;
    while s <= end {
        let t = s / len;
        // the band can be thinner than a pixel across, so look slightly to each side
        let half_band = 0.35 * (p.module_along(-uy, ux) * (1.0 - t) + q.module_along(-uy, ux) * t);
        let mut dark = false;
        for off in [-half_band, 0.0, half_band] {
            let x = (p.center[0] + ux * s - uy * off).floor() as i64;
            let y = (p.center[1] + uy * s + ux * off).floor() as i64;
            let Some(d) = b.at(x, y) else {
                return false;
            };
            dark |= d;
        }
        if dark && prev == Some(false) {
            run_starts.push(s);
        }
        dark_count += usize::from(dark);
        samples += 1;
        prev = Some(dark);
        s += step;
    }
    let duty = dark_count as f64 / samples as f64;
    if run_starts.len() < 3 || !(0.25..=0.75).contains(&duty) {
        return false;
    }
    let good = run_starts
        .windows(2)
        .filter(|w| {
            let t = 0.5 * (w[0] + w[1]) / len;
            let expected = period_modules * (mp + (mq - mp) * t);
            ((w[1] - w[0]) / expected - 1.0).abs() <= tol
        })
        .count();
    let expected_runs = (end - start) / nominal;
    good as f64 >= 0.8 * (run_starts.len() - 1) as f64 && ((run_starts.len() as f64) / expected_runs - 1.0).abs() <= 0.5
}

/// Orders four points clockwise on screen starting from the top-left, and
/// reports whether they form a convex quadrilateral.
fn order_quad(pts: [[f64; 2]; 4]) -> Option<[usize; 4]> {
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&a, &b| {
        let ta = (pts[a][1] - cy).atan2(pts[a][0] - cx);
        let tb = (pts[b][1] - cy).atan2(pts[b][0] - cx);
        ta.total_cmp(&tb)
    });
    for i in 0..4 {
        let [a, b, c] = [pts[idx[i]], pts[idx[(i + 1) % 4]], pts[idx[(i + 2) % 4]]];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross <= 0.0 {
            return None;
        }
    }
    let tl = (0..4)
        .min_by(|&i, &j| {
            let si = pts[idx[i]][0] + pts[idx[i]][1];
            let sj = pts[idx[j]][0] + pts[idx[j]][1];
            si.total_cmp(&sj)
        })
        .unwrap();
    idx.rotate_left(tl);
    Some(idx)
}

/// Offset between the area centroid of a marker's dark pixels and the image
/// of its center under `h`. Perspective pulls the centroid toward the near side.
fn centroid_bias(h: &nalgebra::Matrix3<f64>, center: [f64; 2], module: f64) -> [f64; 2] {
    const STEPS: usize = 56;
    let half = 0.5 * MARKER_MODULES;
    let step = 2.0 * half / STEPS as f64;
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for i in 0..STEPS {
        for j in 0..STEPS {
            let du = -half + (i as f64 + 0.5) * step;
            let dv = -half + (j as f64 + 0.5) * step;
            if (1.5..2.5).contains(&du.abs().max(dv.abs())) {
                continue;
            }
            let u = [center[0] + du * module, center[1] + dv * module];
            let w = h[(2, 0)] * u[0] + h[(2, 1)] * u[1] + h[(2, 2)];
            let a = (1.0 / (w * w * w)).abs();
            let p = apply_homography(h, u);
            sx += a * p[0];
            sy += a * p[1];
            sw += a;
        }
    }
    let c = apply_homography(h, center);
    [sx / sw - c[0], sy / sw - c[1]]
}

/// Removes the perspective bias from measured centroids, re-estimating the
/// view from the corrected centers each pass.
fn refine_centers(raw: [[f64; 2]; 4], layout: &FrameLayout) -> [[f64; 2]; 4] {
    let mut est = raw;
    for _ in 0..3 {
        let Ok(h) = estimate_homography(&layout.marker_centers, &est) else {
            return est;
        };
        for k in 0..4 {
            let bias = centroid_bias(&h, layout.marker_centers[k], layout.module_px);
            est[k] = [raw[k][0] - bias[0], raw[k][1] - bias[1]];
        }
    }
    est
}

/// Marker centers labeled A (top-left), B (top-right), C (bottom-left),
/// D (bottom-right).
pub fn detect_markers(
    raster: &FrameRaster,
    layout: &FrameLayout,
    cfg: &DetectorConfig,
) -> Result<FeaturePixels<f64>, DetectionFailure> {
    let b = Binary::new(raster);
    let mut cands = find_candidates(&b, cfg);
    if cands.len() < 4 {
        return Err(DetectionFailure::TooFewCandidates { found: cands.len() });
    }
    cands.sort_by(|a, b| b.1.cmp(&a.1));
    cands.truncate(cfg.max_candidates);
    let cands: Vec<Candidate> = cands.into_iter().map(|c| c.0).collect();
    let n = cands.len();
    let period_modules = layout.stripe_period / layout.module_px;
    let mut edge = vec![None; n * n];
    let mut striped = |i: usize, j: usize| -> bool {
        let (i, j) = (i.min(j), i.max(j));
        *edge[i * n + j]
            .get_or_insert_with(|| stripes_between(&b, &cands[i], &cands[j], period_modules, cfg.period_tol))
    };
    let mut hits = Vec::new();
    for a in 0..n {
        for bi in a + 1..n {
            for c in bi + 1..n {
                for d in c + 1..n {
                    let set = [a, bi, c, d];
                    let Some(order) = order_quad(set.map(|i| cands[i].center)) else {
                        continue;
                    };
                    let cyc = order.map(|k| set[k]);
                    if (0..4).all(|e| striped(cyc[e], cyc[(e + 1) % 4])) {
                        hits.push(cyc);
                    }
                }
            }
        }
    }
    match hits.len() {
        0 => Err(DetectionFailure::StripeMismatch),
        1 => {
            // cycle is TL, TR, BR, BL
            let [tl, tr, br, bl] = hits[0].map(|i| cands[i].center);
            let [a, b, c, d] = refine_centers([tl, tr, bl, br], layout).map(|[x, y]| Pixel::new(x, y));
            Ok(FeaturePixels::from_array([a, b, c, d]))
        }
        quads => Err(DetectionFailure::Ambiguous { quads }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::render_frame;
    use crate::modulation::Modulation;
    use crate::payload::VelocityPayload;

    #[test]
    fn otsu_splits_two_levels() {
        let mut r = FrameRaster::filled(10, 1, 30);
        for x in 5..10 {
            r.set(x, 0, 220);
        }
        let t = otsu_threshold(&r);
        assert!((30..220).contains(&t));
    }

    #[test]
    fn clean_frame_centers() {
        let l = FrameLayout::default();
        for mode in [Modulation::Fft, Modulation::Direct] {
            let p = VelocityPayload {
                code_v: 99,
                code_omega: 140,
                seq: 3,
                timestamp_ms: 777,
            };
            let img = render_frame(&p, &l, mode).unwrap();
            let f = detect_markers(&img, &l, &DetectorConfig::default()).unwrap();
            for (got, want) in f.as_array().iter().zip(l.marker_centers) {
                assert!(
                    (got.m - want[0]).abs() <= 0.5 && (got.n - want[1]).abs() <= 0.5,
                    "{mode:?} {got:?} vs {want:?}"
                );
            }
        }
    }

    #[test]
    fn blank_frame_has_no_candidates() {
        let img = FrameRaster::filled(100, 80, 255);
        assert_eq!(
            detect_markers(&img, &FrameLayout::default(), &DetectorConfig::default()),
            Err(DetectionFailure::TooFewCandidates { found: 0 })
        );
    }

    #[test]
    fn quad_ordering() {
        let pts = [[288.0, 192.0], [32.0, 32.0], [32.0, 192.0], [288.0, 32.0]];
        assert_eq!(order_quad(pts), Some([1, 3, 0, 2]));
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert_eq!(order_quad(bowtie), None);
    }
}
