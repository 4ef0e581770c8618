//! Report artifacts: per-case CSV, summary JSON, the density-vs-DSC scatter
//! figure, and per-case segmentation overlay images.
//!
//! Figures are drawn directly with the `image` crate and an embedded 5x7
//! pixel font (no system font dependencies).

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::s;

use crate::error::{CoreError, Result};
use crate::evaluate::EvalRecord;
use crate::volume::{BinaryMask, Case};

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b01110, 0b10001, 0b00001, 0b00110, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b01110, 0b10000, 0b11110, 0b10001, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b00100, 0b00100, 0b00100],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00001, 0b01110],
        '.' => [0, 0, 0, 0, 0, 0b00110, 0b00110],
        '-' => [0, 0, 0, 0b01110, 0, 0, 0],
        '%' => [0b11000, 0b11001, 0b00010, 0b00100, 0b01000, 0b10011, 0b00011],
        'D' => [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'a' => [0, 0, 0b01110, 0b00001, 0b01111, 0b10001, 0b01111],
        'c' => [0, 0, 0b01110, 0b10000, 0b10000, 0b10001, 0b01110],
        'd' => [0b00001, 0b00001, 0b01111, 0b10001, 0b10001, 0b10001, 0b01111],
        'e' => [0, 0, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110],
        'i' => [0b00100, 0, 0b01100, 0b00100, 0b00100, 0b00100, 0b01110],
        'm' => [0, 0, 0b11010, 0b10101, 0b10101, 0b10101, 0b10101],
        'n' => [0, 0, 0b11110, 0b10001, 0b10001, 0b10001, 0b10001],
        's' => [0, 0, 0b01111, 0b10000, 0b01110, 0b00001, 0b11110],
        't' => [0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00100, 0b00110],
        'y' => [0, 0, 0b10001, 0b10001, 0b01111, 0b00001, 0b01110],
        _ => [0; 7],
    }
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - rx) & 1 == 1 {
                    let (px, py) = (cx + rx, y + ry as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, color);
                    }
                }
            }
        }
        cx += GLYPH_W + 1;
    }
}

fn text_width(text: &str) -> u32 {
    text.chars().count() as u32 * (GLYPH_W + 1)
}

/// Scatter plot with labeled axes, written as PNG.
pub fn scatter_plot(
    points: &[(f64, f64)],
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    let (width, height) = (640u32, 480u32);
    let (ml, mr, mt, mb) = (60u32, 20u32, 20u32, 50u32);
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let black = Rgb([0, 0, 0]);
    let blue = Rgb([30, 80, 200]);
    let grey = Rgb([200, 200, 200]);

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if points.is_empty() || !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = (*hi - *lo).abs();
        let p = if span < 1e-12 { 0.5 } else { span * 0.08 };
        *lo -= p;
        *hi += p;
    };
    pad(&mut x_min, &mut x_max);
    pad(&mut y_min, &mut y_max);

    let plot_w = (width - ml - mr) as f64;
    let plot_h = (height - mt - mb) as f64;
    let to_px = |x: f64, y: f64| -> (u32, u32) {
        let px = ml as f64 + (x - x_min) / (x_max - x_min) * plot_w;
        let py = mt as f64 + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;
        (
            px.round().clamp(0.0, (width - 1) as f64) as u32,
            py.round().clamp(0.0, (height - 1) as f64) as u32,
        )
    };

    // gridlines + ticks
    let n_ticks = 5;
    for i in 0..=n_ticks {
        let fx = x_min + (x_max - x_min) * i as f64 / n_ticks as f64;
        let fy = y_min + (y_max - y_min) * i as f64 / n_ticks as f64;
        let (px, _) = to_px(fx, y_min);
        let (_, py) = to_px(x_min, fy);
        for y in mt..(height - mb) {
            img.put_pixel(px, y, grey);
        }
        for x in ml..(width - mr) {
            img.put_pixel(x, py, grey);
        }
        let xl = format!("{fx:.2}");
        draw_text(&mut img, px.saturating_sub(text_width(&xl) / 2), height - mb + 6, &xl, black);
        let yl = format!("{fy:.2}");
        draw_text(
            &mut img,
            ml.saturating_sub(text_width(&yl) + 4),
            py.saturating_sub(GLYPH_H / 2),
            &yl,
            black,
        );
    }
    // axes
    for x in ml..(width - mr) {
        img.put_pixel(x, height - mb, black);
    }
    for y in mt..=(height - mb) {
        img.put_pixel(ml, y, black);
    }
    draw_text(
        &mut img,
        ml + (plot_w as u32) / 2 - text_width(x_label) / 2,
        height - mb + 22,
        x_label,
        black,
    );
    draw_text(&mut img, 4, mt, y_label, black);

    for &(x, y) in points {
        let (px, py) = to_px(x, y);
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                if dx * dx + dy * dy <= 4 {
                    let (qx, qy) = (px as i32 + dx, py as i32 + dy);
                    if qx >= 0 && qy >= 0 && (qx as u32) < width && (qy as u32) < height {
                        img.put_pixel(qx as u32, qy as u32, blue);
                    }
                }
            }
        }
    }

    img.save(path)
        .map_err(|e| CoreError::io(path, std::io::Error::other(e)))
}

/// Fig.-3-style figure: manual breast density on x, per-case DSC on y.
pub fn density_dsc_scatter(records: &[EvalRecord], path: &Path) -> Result<()> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.density_manual, r.dsc))
        .collect();
    scatter_plot(&points, "density", "DSC", path)
}

/// Per-case overlay: grayscale pre-contrast slice with correct predicted FGT
/// voxels in green and errors (false positives or negatives) in red.
/// The slice with the largest ground-truth FGT area is shown.
pub fn overlay_png(case: &Case, pred: &BinaryMask, path: &Path) -> Result<()> {
    let truth = case.fgt_mask.as_ref();
    let [d, h, w] = case.pre.shape();
    let slice_idx = match truth {
        Some(t) => (0..d)
            .max_by_key(|&z| t.data.slice(s![z, .., ..]).iter().filter(|&&v| v == 1).count())
            .unwrap_or(d / 2),
        None => d / 2,
    };
    let img_slice = case.pre.data.slice(s![slice_idx, .., ..]);
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in img_slice.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-6);
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let g = (((img_slice[(y, x)] - lo) / span) * 255.0).clamp(0.0, 255.0) as u8;
            let p = pred.data[(slice_idx, y, x)] == 1;
            let t = truth.map(|m| m.data[(slice_idx, y, x)] == 1).unwrap_or(false);
            let px = if p && t {
                Rgb([g / 3, g.saturating_add(60), g / 3]) // correct FGT
            } else if p != t {
                Rgb([g.saturating_add(60), g / 3, g / 3]) // error
            } else {
                Rgb([g, g, g])
            };
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img.save(path)
        .map_err(|e| CoreError::io(path, std::io::Error::other(e)))
}

/// Per-case records as CSV (one row per case).
pub fn write_records_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| CoreError::io(path, e.into()))?;
    wtr.write_record([
        "case_id",
        "dsc",
        "assd_mm",
        "density_manual",
        "density_auto",
        "bpe_manual",
        "bpe_auto",
    ])
    .map_err(|e| CoreError::io(path, e.into()))?;
    for r in records {
        wtr.write_record([
            r.case_id.clone(),
            format!("{:.6}", r.dsc),
            r.assd_mm.map(|v| format!("{v:.6}")).unwrap_or_default(),
            format!("{:.6}", r.density_manual),
            format!("{:.6}", r.density_auto),
            format!("{:.6}", r.bpe_manual),
            format!("{:.6}", r.bpe_auto),
        ])
        .map_err(|e| CoreError::io(path, e.into()))?;
    }
    wtr.flush().map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CoreError::io(path, std::io::Error::other(e)))?;
    std::fs::write(path, text).map_err(|e| CoreError::io(path, e))
}
