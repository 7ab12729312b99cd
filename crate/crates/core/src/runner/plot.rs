//! Static PNG renderings of the accuracy curves and the normalised
//! confusion matrix.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::runner::font::{draw_text, text_width, GLYPH_H};
use crate::train::TrainingLog;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const TRAIN_COLOR: Rgb<u8> = Rgb([31, 119, 180]);
const VAL_COLOR: Rgb<u8> = Rgb([255, 127, 14]);

/// What a curve plot contains, for callers that want to check it.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub series: Vec<(String, usize)>,
    pub y_range: (f64, f64),
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: std::io::Error::other(e.to_string()),
    })
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let (x, y) = (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t);
        for (dx, dy) in [(0, 0), (1, 0), (0, 1)] {
            let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

fn marker(img: &mut RgbImage, (x, y): (f64, f64), color: Rgb<u8>) {
    for dy in -2i64..=2 {
        for dx in -2i64..=2 {
            let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

/// Train and validation pixel accuracy against epoch.
pub fn plot_accuracy_curves(log: &TrainingLog, path: &Path) -> Result<CurveSummary> {
    if log.records.is_empty() {
        return Err(Error::Schema("log has no rows".into()));
    }
    let (w, h) = (720u32, 440u32);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 60.0);
    let (pw, ph) = (w as f64 - left - right, h as f64 - top - bottom);
    let mut img = RgbImage::from_pixel(w, h, WHITE);

    let train: Vec<(f64, f64)> = log.records.iter().map(|r| (r.epoch as f64, r.train_accuracy)).collect();
    let val: Vec<(f64, f64)> = log.records.iter().map(|r| (r.epoch as f64, r.val_accuracy)).collect();
    let (x_min, x_max) = (train[0].0, train[train.len() - 1].0);
    let ys = train.iter().chain(&val).map(|p| p.1);
    let lo = ys.clone().fold(f64::INFINITY, f64::min);
    let hi = ys.fold(f64::NEG_INFINITY, f64::max);
    let (mut y_lo, mut y_hi) = ((lo * 10.0).floor() / 10.0, (hi * 10.0).ceil() / 10.0);
    if y_hi - y_lo < 0.1 {
        y_lo = (y_lo - 0.05).max(0.0);
        y_hi = (y_lo + 0.1).min(1.0).max(y_hi);
    }
    let px = |x: f64| {
        if x_max > x_min {
            left + (x - x_min) / (x_max - x_min) * pw
        } else {
            left + pw / 2.0
        }
    };
    let py = |y: f64| top + (y_hi - y) / (y_hi - y_lo) * ph;

    for i in 0..=5 {
        let v = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let y = py(v);
        line(&mut img, (left, y), (left + pw, y), GRID);
        let label = format!("{v:.2}");
        draw_text(&mut img, (left - 8.0) as i64 - text_width(&label, 1) as i64, y as i64 - 3, &label, 1, BLACK);
    }
    let ticks = if x_max > x_min { 5 } else { 0 };
    for i in 0..=ticks {
        let e = if ticks == 0 { x_min } else { x_min + (x_max - x_min) * i as f64 / ticks as f64 };
        let x = px(e);
        line(&mut img, (x, top + ph), (x, top + ph + 4.0), BLACK);
        let label = format!("{}", e.round() as i64);
        draw_text(&mut img, x as i64 - text_width(&label, 1) as i64 / 2, (top + ph + 8.0) as i64, &label, 1, BLACK);
    }
    line(&mut img, (left, top), (left, top + ph), BLACK);
    line(&mut img, (left, top + ph), (left + pw, top + ph), BLACK);

    for (series, color) in [(&train, TRAIN_COLOR), (&val, VAL_COLOR)] {
        for pair in series.windows(2) {
            line(&mut img, (px(pair[0].0), py(pair[0].1)), (px(pair[1].0), py(pair[1].1)), color);
        }
        if series.len() <= 60 {
            for p in series.iter() {
                marker(&mut img, (px(p.0), py(p.1)), color);
            }
        }
    }

    let title = "train and validation accuracy";
    draw_text(&mut img, (w - text_width(title, 2)) as i64 / 2, 12, title, 2, BLACK);
    let xl = "epoch";
    draw_text(&mut img, (left + pw / 2.0) as i64 - text_width(xl, 1) as i64 / 2, h as i64 - 24, xl, 1, BLACK);
    draw_text(&mut img, 8, (top - 14.0) as i64, "accuracy", 1, BLACK);
    let (lx, ly) = (left as i64 + pw as i64 - 110, top as i64 + ph as i64 - 34);
    for (i, (name, color)) in [("train", TRAIN_COLOR), ("val", VAL_COLOR)].into_iter().enumerate() {
        let y = ly + i as i64 * 14;
        line(&mut img, (lx as f64, y as f64 + 3.0), (lx as f64 + 20.0, y as f64 + 3.0), color);
        draw_text(&mut img, lx + 28, y, name, 1, BLACK);
    }
    save(&img, path)?;
    Ok(CurveSummary {
        series: vec![("train_acc".into(), train.len()), ("val_acc".into(), val.len())],
        y_range: (y_lo, y_hi),
    })
}

/// Cell labels of a normalised confusion matrix, two decimals.
pub fn heatmap_labels(matrix: &[[f64; 2]; 2]) -> [[String; 2]; 2] {
    matrix.map(|row| row.map(|v| format!("{v:.2}")))
}

fn blues(v: f64) -> Rgb<u8> {
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0)])
}

/// A 2x2 heatmap, rows true class, columns predicted class. Returns the
/// cell labels drawn.
pub fn plot_confusion_matrix(matrix: &[[f64; 2]; 2], path: &Path) -> Result<[[String; 2]; 2]> {
    let (w, h) = (420u32, 400u32);
    let (left, top, cell) = (110i64, 60i64, 130i64);
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let labels = heatmap_labels(matrix);
    let names = ["background", "mask"];
    for (r, row) in matrix.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let fill = blues(v);
            let (x0, y0) = (left + c as i64 * cell, top + r as i64 * cell);
            for y in y0..y0 + cell {
                for x in x0..x0 + cell {
                    img.put_pixel(x as u32, y as u32, fill);
                }
            }
            let ink = if v > 0.5 { WHITE } else { BLACK };
            let text = &labels[r][c];
            let tx = x0 + cell / 2 - text_width(text, 3) as i64 / 2;
            let ty = y0 + cell / 2 - (GLYPH_H * 3) as i64 / 2;
            draw_text(&mut img, tx, ty, text, 3, ink);
        }
        let name = names[r];
        draw_text(&mut img, left - 8 - text_width(name, 1) as i64, top + r as i64 * cell + cell / 2 - 3, name, 1, BLACK);
        let tx = left + r as i64 * cell + cell / 2 - text_width(name, 1) as i64 / 2;
        draw_text(&mut img, tx, top + 2 * cell + 8, name, 1, BLACK);
    }
    let title = "normalized confusion matrix";
    draw_text(&mut img, (w - text_width(title, 2)) as i64 / 2, 16, title, 2, BLACK);
    draw_text(&mut img, left + cell - text_width("predicted", 1) as i64 / 2, top + 2 * cell + 26, "predicted", 1, BLACK);
    draw_text(&mut img, 8, top - 14, "true", 1, BLACK);
    save(&img, path)?;
    Ok(labels)
}
