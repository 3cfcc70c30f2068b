//! Synthetic camera frames and the Sobel gradient.
//!
//! Both kernels work row by row. With the `parallel` feature, rows are
//! spread over the rayon pool once an image is tall enough and the pool has
//! more than one thread; otherwise the same row function runs sequentially.

use thiserror::Error;

use crate::model::{now, Encoding, Header, Image, Time};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("unsupported encoding {0:?}")]
    UnsupportedEncoding(Encoding),
    #[error("frame must be at least 3x3, got {0}x{1}")]
    TooSmall(u32, u32),
}

/// Rows below which splitting across threads costs more than it saves.
pub const PAR_MIN_ROWS: usize = 64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The `index`-th output of the SplitMix64 stream seeded with `seed`.
#[inline]
pub fn splitmix64_at(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn frame_row(row: &mut [u8], y: usize, width: usize, frame_index: u64, seed: u64) {
    let shift = frame_index.wrapping_mul(3);
    for (x, px) in row.iter_mut().enumerate() {
        let pattern = (x as u64).wrapping_add(y as u64).wrapping_add(shift) as u8;
        let noise = splitmix64_at(seed, (y * width + x) as u64) as u8;
        *px = pattern ^ noise;
    }
}

/// Fills a MONO8 frame: `(x + y + 3 * frame_index) mod 256` XOR the low byte
/// of the seeded per-pixel stream. Pixel bytes depend only on the arguments.
pub fn frame_pixels(width: u32, height: u32, frame_index: u64, seed: u64) -> Vec<u8> {
    let (w, h) = (width as usize, height as usize);
    let mut data = vec![0u8; w * h];
    if w == 0 {
        return data;
    }
    if use_parallel(h) {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            data.par_chunks_mut(w)
                .enumerate()
                .for_each(|(y, row)| frame_row(row, y, w, frame_index, seed));
            return data;
        }
    }
    for (y, row) in data.chunks_mut(w).enumerate() {
        frame_row(row, y, w, frame_index, seed);
    }
    data
}

pub fn generate_frame(
    width: u32,
    height: u32,
    frame_index: u64,
    seed: u64,
) -> Result<Image, ImageError> {
    generate_frame_with_id(width, height, frame_index, seed, "camera")
}

/// Generates a frame and stamps it with the capture-complete time.
pub fn generate_frame_with_id(
    width: u32,
    height: u32,
    frame_index: u64,
    seed: u64,
    frame_id: &str,
) -> Result<Image, ImageError> {
    if width < 3 || height < 3 {
        return Err(ImageError::TooSmall(width, height));
    }
    let data = frame_pixels(width, height, frame_index, seed);
    let header = Header::new(now(), frame_id);
    Ok(Image::new(header, width, height, Encoding::Mono8, data).expect("packed mono frame"))
}

#[inline]
fn sobel_px(up: &[u8], mid: &[u8], down: &[u8], xl: usize, x: usize, xr: usize) -> u8 {
    let p = |row: &[u8], i: usize| i32::from(row[i]);
    let gx = (p(up, xr) - p(up, xl)) + 2 * (p(mid, xr) - p(mid, xl)) + (p(down, xr) - p(down, xl));
    let gy = (p(down, xl) + 2 * p(down, x) + p(down, xr)) - (p(up, xl) + 2 * p(up, x) + p(up, xr));
    (gx.abs() + gy.abs()).min(255) as u8
}

/// Interior columns of one output row; `out[i]` is column `i + 1`. All
/// intermediate values stay within +-2040, so 16-bit wrapping arithmetic is
/// exact and lets the loop vectorize.
#[inline]
fn sobel_interior(up: &[u8], mid: &[u8], down: &[u8], out: &mut [u8]) {
    let n = out.len();
    let (ul, uc, ur) = (&up[..n], &up[1..n + 1], &up[2..n + 2]);
    let (ml, mr) = (&mid[..n], &mid[2..n + 2]);
    let (dl, dc, dr) = (&down[..n], &down[1..n + 1], &down[2..n + 2]);
    let w = |v: u8| v as i16;
    for i in 0..n {
        let gx = (w(ur[i]).wrapping_sub(w(ul[i])))
            .wrapping_add(w(mr[i]).wrapping_sub(w(ml[i])).wrapping_mul(2))
            .wrapping_add(w(dr[i]).wrapping_sub(w(dl[i])));
        let gy = (w(dl[i]).wrapping_sub(w(ul[i])))
            .wrapping_add(w(dc[i]).wrapping_sub(w(uc[i])).wrapping_mul(2))
            .wrapping_add(w(dr[i]).wrapping_sub(w(ur[i])));
        out[i] = gx.wrapping_abs().wrapping_add(gy.wrapping_abs()).min(255) as u8;
    }
}

fn sobel_row(src: &[u8], width: usize, height: usize, y: usize, out: &mut [u8]) {
    let row = |r: usize| &src[r * width..(r + 1) * width];
    let up = row(y.saturating_sub(1));
    let mid = row(y);
    let down = row((y + 1).min(height - 1));
    let last = width - 1;
    out[0] = sobel_px(up, mid, down, 0, 0, 1.min(last));
    if width > 2 {
        sobel_interior(up, mid, down, &mut out[1..last]);
    }
    if last > 0 {
        out[last] = sobel_px(up, mid, down, last - 1, last, last);
    }
}

/// Gradient magnitude `min(255, |gx| + |gy|)` over the 3x3 Sobel kernels
/// with replicated borders. The output keeps the input header, so latency
/// stays measured against the capture stamp.
pub fn sobel(img: &Image) -> Result<Image, ImageError> {
    let mut out = Vec::new();
    sobel_into(img, &mut out)?;
    Ok(Image::new(img.header.clone(), img.width(), img.height(), Encoding::Mono8, out)
        .expect("same geometry as input"))
}

/// Same as [`sobel`], writing the gradient pixels into `out`, which is resized
/// to the frame size. Reusing `out` across frames avoids faulting in a fresh
/// allocation for every frame.
pub fn sobel_into(img: &Image, out: &mut Vec<u8>) -> Result<(), ImageError> {
    if img.encoding() != Encoding::Mono8 {
        return Err(ImageError::UnsupportedEncoding(img.encoding()));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    out.resize(w * h, 0);
    if w > 0 && h > 0 {
        let src = img.data();
        if use_parallel(h) {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                out.par_chunks_mut(w)
                    .enumerate()
                    .for_each(|(y, row)| sobel_row(src, w, h, y, row));
            }
        } else {
            for (y, row) in out.chunks_mut(w).enumerate() {
                sobel_row(src, w, h, y, row);
            }
        }
    }
    Ok(())
}

/// Sequential Sobel regardless of features; the reference the parallel path must match.
pub fn sobel_sequential(img: &Image) -> Result<Image, ImageError> {
    if img.encoding() != Encoding::Mono8 {
        return Err(ImageError::UnsupportedEncoding(img.encoding()));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = vec![0u8; w * h];
    if w > 0 && h > 0 {
        for (y, row) in out.chunks_mut(w).enumerate() {
            sobel_row(img.data(), w, h, y, row);
        }
    }
    Ok(Image::new(img.header.clone(), img.width(), img.height(), Encoding::Mono8, out)
        .expect("same geometry as input"))
}

#[cfg(feature = "parallel")]
fn use_parallel(rows: usize) -> bool {
    rows >= PAR_MIN_ROWS && rayon::current_num_threads() > 1
}

#[cfg(not(feature = "parallel"))]
fn use_parallel(_rows: usize) -> bool {
    false
}

/// Latency of one frame, from its capture stamp to `done`.
pub fn latency_ns(img: &Image, done: Time) -> i64 {
    done.nanos_since(img.header.stamp)
}
