//! Minimal PNG plots: line traces and field heatmaps, no text.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::torus::TorusField;

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

const WIDTH: u32 = 800;
const HEIGHT: u32 = 500;
const MARGIN: u32 = 40;

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Polylines of `(x, y)` series on shared axes; `log_y` plots `log10 y`.
pub fn line_plot(path: &Path, series: &[Vec<(f64, f64)>], log_y: bool) -> Result<()> {
    let map_y = |y: f64| {
        if log_y {
            y.abs().max(1e-300).log10()
        } else {
            y
        }
    };
    let points = series
        .iter()
        .flatten()
        .map(|&(x, y)| (x, map_y(y)))
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (w, h) = ((WIDTH - 2 * MARGIN) as f64, (HEIGHT - 2 * MARGIN) as f64);
    let px = |x: f64, y: f64| {
        (
            (MARGIN as f64 + (x - x0) / (x1 - x0) * w).round() as i64,
            (MARGIN as f64 + (y1 - y) / (y1 - y0) * h).round() as i64,
        )
    };
    let grey = Rgb([210, 210, 210]);
    for k in 0..=4 {
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        line(&mut img, px(x0, fy), px(x1, fy), grey);
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        line(&mut img, px(fx, y0), px(fx, y1), grey);
    }
    let black = Rgb([0, 0, 0]);
    line(&mut img, px(x0, y0), px(x1, y0), black);
    line(&mut img, px(x0, y0), px(x0, y1), black);
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        let pts: Vec<_> = s
            .iter()
            .map(|&(x, y)| (x, map_y(y)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|(x, y)| px(x, y))
            .collect();
        for w in pts.windows(2) {
            line(&mut img, w[0], w[1], color);
        }
    }
    save(&img, path)
}

fn colormap(u: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let u = u.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (u.floor() as usize).min(STOPS.len() - 2);
    let f = u - i as f64;
    let c = |k: usize| (STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Heatmap of one component, `t₁` down and `t₂` across.
pub fn heatmap(path: &Path, field: &TorusField, component: usize) -> Result<()> {
    if component >= field.components() {
        return Err(Error::InvalidArgument(format!("no component {component}")));
    }
    let n = field.grid();
    let data = field.component(component);
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let span = if hi - lo > 1e-300 { hi - lo } else { 1.0 };
    let cell = (512 / n as u32).max(1);
    let mut img = RgbImage::new(cell * n as u32, cell * n as u32);
    for (px, py, pixel) in img.enumerate_pixels_mut() {
        let (j, k) = ((py / cell) as usize, (px / cell) as usize);
        *pixel = colormap((data[j * n + k] - lo) / span);
    }
    save(&img, path)
}
