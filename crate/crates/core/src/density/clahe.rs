//! Contrast-limited adaptive histogram equalization on 8-bit rasters.
//!
//! Follows the usual formulation: per-tile 256-bin histograms clipped at
//! `clip · tile_area / 256`, excess spread evenly across bins, cumulative
//! lookup tables, and bilinear blending between the four nearest tile
//! centers. Images whose size is not a multiple of the tile grid are padded
//! by mirror reflection (edge pixel not repeated) for histogram purposes.

use crate::raster::Raster;

const BINS: usize = 256;

pub fn clahe(img: &Raster<u8>, clip: f64, tiles: usize) -> Raster<u8> {
    let (w, h) = img.dims();
    let tiles_x = tiles.clamp(1, w.max(1));
    let tiles_y = tiles.clamp(1, h.max(1));
    let tile_w = w.div_ceil(tiles_x);
    let tile_h = h.div_ceil(tiles_y);
    let tile_area = tile_w * tile_h;

    let clip_count = if clip > 0.0 {
        ((clip * tile_area as f64 / BINS as f64) as usize).max(1)
    } else {
        usize::MAX
    };
    let lut_scale = 255.0 / tile_area as f64;

    let mut luts = vec![[0u8; BINS]; tiles_x * tiles_y];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let mut hist = [0usize; BINS];
            for y in ty * tile_h..(ty + 1) * tile_h {
                let sy = reflect101(y, h);
                for x in tx * tile_w..(tx + 1) * tile_w {
                    hist[*img.get(reflect101(x, w), sy) as usize] += 1;
                }
            }
            clip_histogram(&mut hist, clip_count);
            let lut = &mut luts[ty * tiles_x + tx];
            let mut sum = 0usize;
            for (v, &c) in hist.iter().enumerate() {
                sum += c;
                lut[v] = (sum as f64 * lut_scale).round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let inv_tw = 1.0 / tile_w as f64;
    let inv_th = 1.0 / tile_h as f64;
    let mut out = Raster::filled(w, h, 0u8);
    for y in 0..h {
        let tyf = y as f64 * inv_th - 0.5;
        let ty1f = tyf.floor();
        let ya = tyf - ty1f;
        let ty1 = (ty1f as i64).max(0) as usize;
        let ty2 = ((ty1f as i64 + 1) as usize).min(tiles_y - 1);
        for x in 0..w {
            let txf = x as f64 * inv_tw - 0.5;
            let tx1f = txf.floor();
            let xa = txf - tx1f;
            let tx1 = (tx1f as i64).max(0) as usize;
            let tx2 = ((tx1f as i64 + 1) as usize).min(tiles_x - 1);
            let v = *img.get(x, y) as usize;
            let l = |tx: usize, ty: usize| luts[ty * tiles_x + tx][v] as f64;
            let top = l(tx1, ty1) * (1.0 - xa) + l(tx2, ty1) * xa;
            let bot = l(tx1, ty2) * (1.0 - xa) + l(tx2, ty2) * xa;
            let res = top * (1.0 - ya) + bot * ya;
            out.set(x, y, res.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

fn clip_histogram(hist: &mut [usize; BINS], limit: usize) {
    let mut excess = 0usize;
    for c in hist.iter_mut() {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    let batch = excess / BINS;
    let mut residual = excess - batch * BINS;
    for c in hist.iter_mut() {
        *c += batch;
    }
    if residual > 0 {
        let step = (BINS / residual).max(1);
        let mut i = 0;
        while i < BINS && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
}

/// Mirror index into `0..len` without repeating the edge sample.
fn reflect101(i: usize, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * len - 2;
    let r = i % period;
    if r >= len {
        period - r
    } else {
        r
    }
}
