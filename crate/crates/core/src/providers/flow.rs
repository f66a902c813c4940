//! Exhaustive block-matching motion estimate.
//!
//! Both frames are box-downscaled to a 32x32 luma grid. Every 4x4 block whose
//! full ±4 search window lies inside the grid (the 6x6 interior blocks) is
//! matched by minimum sum of absolute differences; ties go to the smaller
//! displacement, then to the earlier `(dy, dx)`. Displacements are scaled
//! back to source pixels and their magnitudes averaged.

use super::RgbFrame;

pub const FLOW_GRID: usize = 32;
pub const FLOW_BLOCK: usize = 4;
pub const FLOW_RADIUS: i64 = 4;

/// Box-averaged luma (0..=255) on a `FLOW_GRID` square grid.
pub fn gray_grid(frame: &RgbFrame) -> Vec<f64> {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut grid = vec![0.0; FLOW_GRID * FLOW_GRID];
    for gy in 0..FLOW_GRID {
        let y0 = gy * h / FLOW_GRID;
        let y1 = ((gy + 1) * h / FLOW_GRID).max(y0 + 1).min(h);
        for gx in 0..FLOW_GRID {
            let x0 = gx * w / FLOW_GRID;
            let x1 = ((gx + 1) * w / FLOW_GRID).max(x0 + 1).min(w);
            let mut sum = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    let [r, g, b] = frame.pixel(x as u32, y as u32);
                    sum += 77 * r as u64 + 150 * g as u64 + 29 * b as u64;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            grid[gy * FLOW_GRID + gx] = sum as f64 / (256.0 * n);
        }
    }
    grid
}

/// Mean displacement magnitude from `a` to `b`, in source pixels.
///
/// Frames must share dimensions.
pub fn block_matching_flow(a: &RgbFrame, b: &RgbFrame) -> Option<f64> {
    if a.width != b.width || a.height != b.height {
        return None;
    }
    let ga = gray_grid(a);
    let gb = gray_grid(b);
    let sx = a.width as f64 / FLOW_GRID as f64;
    let sy = a.height as f64 / FLOW_GRID as f64;

    let blocks_per_side = FLOW_GRID / FLOW_BLOCK;
    let margin = (FLOW_RADIUS as usize).div_ceil(FLOW_BLOCK);
    let mut total = 0.0;
    let mut n = 0usize;
    for by in margin..blocks_per_side - margin {
        for bx in margin..blocks_per_side - margin {
            let (x0, y0) = ((bx * FLOW_BLOCK) as i64, (by * FLOW_BLOCK) as i64);
            let mut best: Option<(f64, i64, i64, i64)> = None;
            for dy in -FLOW_RADIUS..=FLOW_RADIUS {
                for dx in -FLOW_RADIUS..=FLOW_RADIUS {
                    let sad = block_sad(&ga, &gb, x0, y0, dx, dy);
                    let mag2 = dx * dx + dy * dy;
                    let better = match best {
                        None => true,
                        Some((bs, bm, _, _)) => sad < bs || (sad == bs && mag2 < bm),
                    };
                    if better {
                        best = Some((sad, mag2, dx, dy));
                    }
                }
            }
            let (_, _, dx, dy) = best.expect("non-empty search window");
            total += ((dx as f64 * sx).powi(2) + (dy as f64 * sy).powi(2)).sqrt();
            n += 1;
        }
    }
    Some(total / n as f64)
}

fn block_sad(a: &[f64], b: &[f64], x0: i64, y0: i64, dx: i64, dy: i64) -> f64 {
    let g = FLOW_GRID as i64;
    let mut sad = 0.0;
    for j in 0..FLOW_BLOCK as i64 {
        for i in 0..FLOW_BLOCK as i64 {
            let pa = a[((y0 + j) * g + x0 + i) as usize];
            let pb = b[((y0 + j + dy) * g + x0 + i + dx) as usize];
            sad += (pa - pb).abs();
        }
    }
    sad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(width: u32, height: u32, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..height)
            .map(|_| (0..width).map(|_| rng.random()).collect())
            .collect()
    }

    fn gray_frame(rows: &[Vec<u8>]) -> RgbFrame {
        RgbFrame::from_fn(rows[0].len() as u32, rows.len() as u32, |x, y| {
            let v = rows[y as usize][x as usize];
            [v, v, v]
        })
    }

    /// Content moved right by `shift` pixels, fresh noise entering on the left.
    fn shifted(rows: &[Vec<u8>], shift: usize, seed: u64) -> Vec<Vec<u8>> {
        let fresh = noise(shift as u32, rows.len() as u32, seed);
        rows.iter()
            .zip(fresh)
            .map(|(row, mut new)| {
                new.extend_from_slice(&row[..row.len() - shift]);
                new
            })
            .collect()
    }

    #[test]
    fn identical_frames_have_zero_flow() {
        let f = gray_frame(&noise(64, 64, 1));
        assert!(block_matching_flow(&f, &f).unwrap().abs() < 1e-9);
        let flat = RgbFrame::solid(50, 30, [10, 200, 30]);
        assert!(block_matching_flow(&flat, &flat).unwrap().abs() < 1e-9);
    }

    #[test]
    fn two_pixel_shift_is_recovered() {
        for (w, seed) in [(32u32, 3u64), (64, 4)] {
            let rows = noise(w, w, seed);
            let a = gray_frame(&rows);
            let b = gray_frame(&shifted(&rows, 2, seed + 100));
            let m = block_matching_flow(&a, &b).unwrap();
            assert!((m - 2.0).abs() <= 0.5, "width {w}: {m}");
        }
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let a = RgbFrame::solid(32, 32, [0, 0, 0]);
        let b = RgbFrame::solid(64, 32, [0, 0, 0]);
        assert!(block_matching_flow(&a, &b).is_none());
    }
}
