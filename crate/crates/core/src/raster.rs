//! Row-major rasters plus the binary morphology and labeling routines the
//! segmentation and mask-filtering stages share.
//!
//! Pixel `(m, n)` is column `m`, row `n`; row 0 corresponds to the frame's
//! minimum y.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Raster {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn idx(&self, m: usize, n: usize) -> usize {
        debug_assert!(m < self.width && n < self.height);
        n * self.width + m
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> &T {
        &self.data[n * self.width + m]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, v: T) {
        let i = self.idx(m, n);
        self.data[i] = v;
    }

    pub fn contains(&self, m: i64, n: i64) -> bool {
        m >= 0 && n >= 0 && (m as usize) < self.width && (n as usize) < self.height
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

pub type BinaryRaster = Raster<bool>;

impl BinaryRaster {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, o: &BinaryRaster) -> BinaryRaster {
        self.zip_with(o, |a, b| a && b)
    }

    pub fn and_not(&self, o: &BinaryRaster) -> BinaryRaster {
        self.zip_with(o, |a, b| a && !b)
    }

    pub fn intersection_count(&self, o: &BinaryRaster) -> usize {
        self.data
            .iter()
            .zip(&o.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    fn zip_with(&self, o: &BinaryRaster, f: impl Fn(bool, bool) -> bool) -> BinaryRaster {
        assert_eq!(self.dims(), o.dims());
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
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

/// Connected-component labels: `0` for pixels where `select` is false,
/// `1..=count` otherwise, numbered in raster scan order of first pixel.
#[derive(Debug, Clone)]
pub struct Labels {
    pub labels: Raster<u32>,
    pub count: u32,
}

impl Labels {
    /// Whether component `label` has a pixel on the raster border.
    pub fn touches_border(&self) -> Vec<bool> {
        let (w, h) = self.labels.dims();
        let mut touch = vec![false; self.count as usize + 1];
        for m in 0..w {
            touch[*self.labels.get(m, 0) as usize] = true;
            touch[*self.labels.get(m, h - 1) as usize] = true;
        }
        for n in 0..h {
            touch[*self.labels.get(0, n) as usize] = true;
            touch[*self.labels.get(w - 1, n) as usize] = true;
        }
        touch
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count as usize + 1];
        for &l in self.labels.data() {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

pub fn label_components<T>(
    raster: &Raster<T>,
    select: impl Fn(&T) -> bool,
    conn: Connectivity,
) -> Labels {
    let (w, h) = raster.dims();
    let mut labels = Raster::filled(w, h, 0u32);
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if labels.data[start] != 0 || !select(&raster.data[start]) {
            continue;
        }
        count += 1;
        labels.data[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (m, n) = ((i % w) as i64, (i / w) as i64);
            for &(dm, dn) in conn.offsets() {
                let (mm, nn) = (m + dm, n + dn);
                if !raster.contains(mm, nn) {
                    continue;
                }
                let j = nn as usize * w + mm as usize;
                if labels.data[j] == 0 && select(&raster.data[j]) {
                    labels.data[j] = count;
                    queue.push_back(j);
                }
            }
        }
    }
    Labels { labels, count }
}

/// Flood fill from `seed` over pixels where `free` is true.
pub fn flood_fill(free: &BinaryRaster, seed: (usize, usize), conn: Connectivity) -> BinaryRaster {
    let (w, h) = free.dims();
    let mut out = Raster::filled(w, h, false);
    if !*free.get(seed.0, seed.1) {
        return out;
    }
    let mut queue = VecDeque::from([seed]);
    out.set(seed.0, seed.1, true);
    while let Some((m, n)) = queue.pop_front() {
        for &(dm, dn) in conn.offsets() {
            let (mm, nn) = (m as i64 + dm, n as i64 + dn);
            if !free.contains(mm, nn) {
                continue;
            }
            let (mm, nn) = (mm as usize, nn as usize);
            if *free.get(mm, nn) && !*out.get(mm, nn) {
                out.set(mm, nn, true);
                queue.push_back((mm, nn));
            }
        }
    }
    out
}

/// Dilation with a `(2r+1)×(2r+1)` square, done as two separable passes.
pub fn dilate_square(mask: &BinaryRaster, r: usize) -> BinaryRaster {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let mut tmp = Raster::filled(w, h, false);
    let mut line = Vec::new();
    for n in 0..h {
        line.clear();
        line.extend((0..w).map(|m| *mask.get(m, n)));
        let out = dilate_line(&line, r);
        for (m, v) in out.into_iter().enumerate() {
            tmp.set(m, n, v);
        }
    }
    let mut res = Raster::filled(w, h, false);
    for m in 0..w {
        line.clear();
        line.extend((0..h).map(|n| *tmp.get(m, n)));
        let out = dilate_line(&line, r);
        for (n, v) in out.into_iter().enumerate() {
            res.set(m, n, v);
        }
    }
    res
}

fn dilate_line(line: &[bool], r: usize) -> Vec<bool> {
    let n = line.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &v) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v as usize;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(n);
            prefix[hi] > prefix[lo]
        })
        .collect()
}

/// Writes an 8-bit grayscale PNG; raster row `n` becomes image row `n`.
pub fn write_gray_png(path: &Path, img: &Raster<u8>) -> Result<()> {
    let file = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Io(io::Error::other(e)))?;
    writer
        .write_image_data(&img.data)
        .map_err(|e| Error::Io(io::Error::other(e)))?;
    writer.finish().map_err(|e| Error::Io(io::Error::other(e)))?;
    Ok(())
}

/// Reads a PNG as 8-bit single channel. Color images keep their first
/// channel; 16-bit samples are truncated to their high byte.
pub fn read_gray_png(path: &Path) -> Result<Raster<u8>> {
    let bytes = std::fs::read(path)?;
    decode_gray_png(&bytes).map_err(|e| Error::DecodeFailure(format!("{}: {e}", path.display())))
}

pub fn decode_gray_png(bytes: &[u8]) -> std::result::Result<Raster<u8>, String> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| e.to_string())?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| "image too large".to_string())?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        data.extend(row.chunks(channels).take(w).map(|px| px[0]));
    }
    Raster::from_vec(w, h, data).ok_or_else(|| "short image buffer".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> BinaryRaster {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b == b'#'))
            .collect();
        Raster::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn diagonal_pixels_join_only_under_eight_connectivity() {
        let r = from_rows(&["#..", ".#.", "..#"]);
        assert_eq!(label_components(&r, |&b| b, Connectivity::Four).count, 3);
        assert_eq!(label_components(&r, |&b| b, Connectivity::Eight).count, 1);
    }

    #[test]
    fn dilation_matches_brute_force() {
        let r = from_rows(&[".......", "...#...", ".......", "......#"]);
        let d = dilate_square(&r, 1);
        for n in 0..4i64 {
            for m in 0..7i64 {
                let mut expect = false;
                for dn in -1..=1 {
                    for dm in -1..=1 {
                        if r.contains(m + dm, n + dn) && *r.get((m + dm) as usize, (n + dn) as usize) {
                            expect = true;
                        }
                    }
                }
                assert_eq!(*d.get(m as usize, n as usize), expect, "({m},{n})");
            }
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Raster::from_vec(2, 2, vec![0u8, 255, 128, 64]).unwrap();
        write_gray_png(&path, &img).unwrap();
        assert_eq!(read_gray_png(&path).unwrap(), img);
    }

    #[test]
    fn flood_fill_stays_inside_walls() {
        let walls = from_rows(&["#####", "#...#", "#####", "#...#"]);
        let free = walls.map(|&b| !b);
        let region = flood_fill(&free, (1, 1), Connectivity::Four);
        assert_eq!(region.count(), 3);
        assert!(!*region.get(1, 3));
    }
}
