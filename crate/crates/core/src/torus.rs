//! Pseudospectral calculus on the flat torus `T² = (ℝ/2πℤ)²`.
//!
//! A [`TorusField`] samples a vector-valued map at `t = (2πj/N, 2πk/N)`.
//! Mode coefficients are Fourier-series coefficients
//! `ĉ(m) = N⁻² Σ f(t) e^{-i m·t}`, so a constant field has `ĉ(0) = c` and
//! `cos t₁` has `ĉ(±1, 0) = ½`. Integer modes run over `[-N/2, N/2)`.
//! First derivatives drop the Nyquist mode, and the Laplacian is the
//! composition of first derivatives, which keeps `∂̸² = −Δ` exact on the grid.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::StructureTriple;

/// Meaning of the components of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// `Z = (q₁, q₂, p₁, p₂)` with each slot a block of `pairs` components.
    Phase {
        pairs: usize,
    },
    /// `q = (q₁, q₂)` with each slot a block of `pairs` components.
    Position {
        pairs: usize,
    },
    /// `(q, p₁, p₂)` for the scalar De Donder–Weyl system.
    DeDonderWeyl,
    Scalar,
    Components {
        count: usize,
    },
}

impl Layout {
    pub fn components(&self) -> usize {
        match *self {
            Layout::Phase { pairs } => 4 * pairs,
            Layout::Position { pairs } => 2 * pairs,
            Layout::DeDonderWeyl => 3,
            Layout::Scalar => 1,
            Layout::Components { count } => count,
        }
    }

    /// Index pairs `(re, im)` forming the complex variables used by `∂_t`.
    ///
    /// Both `q` and `p` use `z = c_re + i c_im` here.
    fn complex_pairs(&self) -> Result<Vec<(usize, usize)>> {
        match *self {
            Layout::Phase { pairs } => Ok((0..pairs)
                .map(|j| (j, pairs + j))
                .chain((0..pairs).map(|j| (2 * pairs + j, 3 * pairs + j)))
                .collect()),
            Layout::Position { pairs } => Ok((0..pairs).map(|j| (j, pairs + j)).collect()),
            other => Err(Error::Layout(format!(
                "Wirtinger derivatives need a phase or position layout, got {other:?}"
            ))),
        }
    }
}

/// Which derivative to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    D1,
    D2,
    /// `∂_t = ½(∂₁ − i∂₂)` on each complex pair.
    Dt,
    /// `∂_t̄ = ½(∂₁ + i∂₂)` on each complex pair.
    Dtbar,
}

/// Real field sampled on an `N × N` grid, stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    layout: Layout,
    grid: usize,
    data: Vec<f64>,
}

fn check_grid(grid: usize) -> Result<()> {
    if grid < 8 || !grid.is_multiple_of(2) {
        return Err(Error::BadGrid(grid));
    }
    Ok(())
}

/// Grid coordinate `2πj/N`.
pub fn grid_point(grid: usize, j: usize) -> f64 {
    2.0 * PI * j as f64 / grid as f64
}

/// Integer wave number stored at FFT index `idx`.
pub fn wave_number(grid: usize, idx: usize) -> i64 {
    if idx < grid / 2 {
        idx as i64
    } else {
        idx as i64 - grid as i64
    }
}

/// Wave number used by first derivatives (Nyquist mode mapped to 0).
pub fn derivative_wave_number(grid: usize, idx: usize) -> f64 {
    if idx == grid / 2 {
        0.0
    } else {
        wave_number(grid, idx) as f64
    }
}

fn mode_index(grid: usize, m: i64) -> Option<usize> {
    let half = (grid / 2) as i64;
    if m < -half || m >= half {
        return None;
    }
    Some(if m >= 0 {
        m as usize
    } else {
        (m + grid as i64) as usize
    })
}

impl TorusField {
    pub fn zeros(layout: Layout, grid: usize) -> Result<Self> {
        check_grid(grid)?;
        Ok(Self {
            layout,
            grid,
            data: vec![0.0; layout.components() * grid * grid],
        })
    }

    /// Samples `f(t, out)` at every grid point.
    pub fn from_fn<F>(layout: Layout, grid: usize, mut f: F) -> Result<Self>
    where
        F: FnMut([f64; 2], &mut [f64]),
    {
        let mut field = Self::zeros(layout, grid)?;
        let c = layout.components();
        let mut buf = vec![0.0; c];
        for j in 0..grid {
            for k in 0..grid {
                buf.iter_mut().for_each(|x| *x = 0.0);
                f([grid_point(grid, j), grid_point(grid, k)], &mut buf);
                field.scatter(j, k, &buf);
            }
        }
        field.ensure_finite()?;
        Ok(field)
    }

    /// Wraps component-major data `data[c·N² + j·N + k]`.
    pub fn from_data(layout: Layout, grid: usize, data: Vec<f64>) -> Result<Self> {
        check_grid(grid)?;
        let expected = layout.components() * grid * grid;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        let field = Self { layout, grid, data };
        field.ensure_finite()?;
        Ok(field)
    }

    pub(crate) fn from_data_unchecked(layout: Layout, grid: usize, data: Vec<f64>) -> Self {
        Self { layout, grid, data }
    }

    /// Constant field with the given component values.
    pub fn constant(layout: Layout, grid: usize, values: &[f64]) -> Result<Self> {
        if values.len() != layout.components() {
            return Err(Error::DimensionMismatch {
                expected: layout.components(),
                found: values.len(),
            });
        }
        Self::from_fn(layout, grid, |_, out| out.copy_from_slice(values))
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.layout.components()
    }

    pub fn points(&self) -> usize {
        self.grid * self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let np = self.points();
        &self.data[c * np..(c + 1) * np]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let np = self.points();
        &mut self.data[c * np..(c + 1) * np]
    }

    pub fn at(&self, c: usize, j: usize, k: usize) -> f64 {
        self.data[c * self.points() + j * self.grid + k]
    }

    /// Copies the component vector at grid point `(j, k)` into `out`.
    pub fn gather(&self, j: usize, k: usize, out: &mut [f64]) {
        let np = self.points();
        let idx = j * self.grid + k;
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.data[c * np + idx];
        }
    }

    pub fn scatter(&mut self, j: usize, k: usize, values: &[f64]) {
        let np = self.points();
        let idx = j * self.grid + k;
        for (c, v) in values.iter().enumerate() {
            self.data[c * np + idx] = *v;
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("torus field"))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_compatible(&self, other: &TorusField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid, other.grid));
        }
        if self.layout != other.layout {
            return Err(Error::Layout(format!(
                "{:?} vs {:?}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &TorusField) -> Result<TorusField> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x + a * y)
            .collect();
        Ok(Self::from_data_unchecked(self.layout, self.grid, data))
    }

    pub fn sub(&self, other: &TorusField) -> Result<TorusField> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &TorusField) -> Result<TorusField> {
        self.axpy(1.0, other)
    }

    pub fn scaled(&self, a: f64) -> TorusField {
        let data = self.data.iter().map(|x| a * x).collect();
        Self::from_data_unchecked(self.layout, self.grid, data)
    }

    /// Grid mean of each component.
    pub fn means(&self) -> Vec<f64> {
        let np = self.points() as f64;
        (0..self.components())
            .map(|c| self.component(c).iter().sum::<f64>() / np)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `sqrt(l2_inner(self, self))`.
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|x| x * x).sum::<f64>() / self.points() as f64).sqrt()
    }

    /// Pointwise maximum of `|p|²` for a phase-space field.
    pub fn max_p_squared(&self) -> Result<f64> {
        let n = phase_pairs(self)?;
        let np = self.points();
        let mut best = 0.0_f64;
        for idx in 0..np {
            let mut s = 0.0;
            for c in 2 * n..4 * n {
                let v = self.data[c * np + idx];
                s += v * v;
            }
            best = best.max(s);
        }
        Ok(best)
    }

    /// Restriction to a subset of components.
    pub fn select(&self, layout: Layout, components: &[usize]) -> Result<TorusField> {
        if layout.components() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.components(),
                found: components.len(),
            });
        }
        let mut data = Vec::with_capacity(components.len() * self.points());
        for &c in components {
            data.extend_from_slice(self.component(c));
        }
        Ok(Self::from_data_unchecked(layout, self.grid, data))
    }

    /// Concatenates the components of `parts` under a new layout.
    pub fn stack(layout: Layout, parts: &[&TorusField]) -> Result<TorusField> {
        let grid = parts
            .first()
            .map(|p| p.grid)
            .ok_or_else(|| Error::InvalidArgument("empty stack".into()))?;
        let mut data = Vec::new();
        for p in parts {
            if p.grid != grid {
                return Err(Error::GridMismatch(grid, p.grid));
            }
            data.extend_from_slice(&p.data);
        }
        Self::from_data(layout, grid, data)
    }

    /// Writes the binary field format: one JSON header line, then
    /// little-endian `f64` values ordered by `j`, then `k`, then component.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = FieldHeader::for_field(self, "f64-le");
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let c = self.components();
        for j in 0..self.grid {
            for k in 0..self.grid {
                for comp in 0..c {
                    w.write_all(&self.at(comp, j, k).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<TorusField> {
        let mut r = BufReader::new(File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: FieldHeader = serde_json::from_str(line.trim_end())?;
        header.validate("f64-le")?;
        let c = header.layout.components();
        let n = header.grid;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * c * n * n {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                8 * c * n * n,
                bytes.len()
            )));
        }
        let mut data = vec![0.0; c * n * n];
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
            let comp = i % c;
            let point = i / c;
            data[comp * n * n + point] = v;
        }
        TorusField::from_data(header.layout, n, data)
    }

    /// Writes the CSV field format: a `#`-prefixed JSON header line, then
    /// rows `j,k,c0,c1,...` in row-major grid order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = FieldHeader::for_field(self, "csv");
        w.write_all(b"# ")?;
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let c = self.components();
        for j in 0..self.grid {
            for k in 0..self.grid {
                write!(w, "{j},{k}")?;
                for comp in 0..c {
                    write!(w, ",{:e}", self.at(comp, j, k))?;
                }
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<TorusField> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty field file".into()))??;
        let header: FieldHeader = serde_json::from_str(first.trim_start_matches('#').trim())?;
        header.validate("csv")?;
        let c = header.layout.components();
        let n = header.grid;
        let mut field = TorusField::zeros(header.layout, n)?;
        let mut rows = 0;
        let mut buf = vec![0.0; c];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != c + 2 {
                return Err(Error::Format(format!("bad row `{line}`")));
            }
            let parse_idx = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("{e}: `{s}`")))
            };
            let (j, k) = (parse_idx(parts[0])?, parse_idx(parts[1])?);
            if j >= n || k >= n {
                return Err(Error::Format(format!("index out of range in `{line}`")));
            }
            for (b, s) in buf.iter_mut().zip(&parts[2..]) {
                *b = s
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("{e}: `{s}`")))?;
            }
            field.scatter(j, k, &buf);
            rows += 1;
        }
        if rows != n * n {
            return Err(Error::Format(format!(
                "expected {} rows, found {rows}",
                n * n
            )));
        }
        field.ensure_finite()?;
        Ok(field)
    }
}

/// JSON header of the field file formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub grid: usize,
    pub layout: Layout,
    pub components: usize,
    pub period: f64,
    pub order: String,
    pub encoding: String,
}

impl FieldHeader {
    fn for_field(field: &TorusField, encoding: &str) -> Self {
        Self {
            format: "polyfloer-field".into(),
            version: 1,
            grid: field.grid,
            layout: field.layout,
            components: field.components(),
            period: 2.0 * PI,
            order: "row-major (j, k), component-minor".into(),
            encoding: encoding.into(),
        }
    }

    fn validate(&self, encoding: &str) -> Result<()> {
        if self.format != "polyfloer-field" || self.encoding != encoding {
            return Err(Error::Format(format!(
                "unexpected header format `{}`/`{}`",
                self.format, self.encoding
            )));
        }
        if self.components != self.layout.components() {
            return Err(Error::Format(
                "component count disagrees with layout".into(),
            ));
        }
        check_grid(self.grid)
    }
}

pub(crate) fn phase_pairs(field: &TorusField) -> Result<usize> {
    match field.layout {
        Layout::Phase { pairs } => Ok(pairs),
        other => Err(Error::Layout(format!(
            "expected phase layout, got {other:?}"
        ))),
    }
}

/// Complex Fourier coefficients of a field, stored in FFT index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    layout: Layout,
    grid: usize,
    data: Vec<Complex64>,
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(grid: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(grid)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(grid),
                inverse: planner.plan_fft_inverse(grid),
            })
        })
        .clone()
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for j in 0..n {
        for k in j + 1..n {
            buf.swap(j * n + k, k * n + j);
        }
    }
}

fn fft2(buf: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    fft.process(buf);
    transpose(buf, n);
    fft.process(buf);
    transpose(buf, n);
}

impl ModeField {
    pub fn zeros(layout: Layout, grid: usize) -> Result<Self> {
        check_grid(grid)?;
        Ok(Self {
            layout,
            grid,
            data: vec![Complex64::new(0.0, 0.0); layout.components() * grid * grid],
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.layout.components()
    }

    /// Coefficient of component `c` at integer mode `(m1, m2)`.
    pub fn coefficient(&self, c: usize, m1: i64, m2: i64) -> Option<Complex64> {
        let a = mode_index(self.grid, m1)?;
        let b = mode_index(self.grid, m2)?;
        self.data
            .get(c * self.grid * self.grid + a * self.grid + b)
            .copied()
    }

    pub fn set_coefficient(&mut self, c: usize, m1: i64, m2: i64, value: Complex64) -> Result<()> {
        let a = mode_index(self.grid, m1)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {m1} outside the grid")))?;
        let b = mode_index(self.grid, m2)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {m2} outside the grid")))?;
        let np = self.grid * self.grid;
        let slot = self
            .data
            .get_mut(c * np + a * self.grid + b)
            .ok_or_else(|| Error::InvalidArgument(format!("component {c} out of range")))?;
        *slot = value;
        Ok(())
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Sum of `|ĉ|²` over all modes and components (Parseval).
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest `|ĉ(−m) − conj ĉ(m)|`; zero for transforms of real fields.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid;
        let np = n * n;
        let mut worst = 0.0_f64;
        for c in 0..self.components() {
            for a in 0..n {
                for b in 0..n {
                    let ra = (n - a) % n;
                    let rb = (n - b) % n;
                    let d = self.data[c * np + a * n + b] - self.data[c * np + ra * n + rb].conj();
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }

    /// Applies `f(m1, m2, coeffs)` to the coefficient vector of every mode.
    ///
    /// The wave numbers passed are the derivative wave numbers, so the
    /// Nyquist row and column see zero.
    pub fn map_modes<F>(&mut self, mut f: F)
    where
        F: FnMut(f64, f64, &mut [Complex64]),
    {
        let n = self.grid;
        let np = n * n;
        let c = self.components();
        let mut buf = vec![Complex64::new(0.0, 0.0); c];
        for a in 0..n {
            let m1 = derivative_wave_number(n, a);
            for b in 0..n {
                let m2 = derivative_wave_number(n, b);
                let idx = a * n + b;
                for (comp, slot) in buf.iter_mut().enumerate() {
                    *slot = self.data[comp * np + idx];
                }
                f(m1, m2, &mut buf);
                for (comp, v) in buf.iter().enumerate() {
                    self.data[comp * np + idx] = *v;
                }
            }
        }
    }

    /// Like [`ModeField::map_modes`] but with fallible `f`.
    pub fn try_map_modes<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(f64, f64, &mut [Complex64]) -> Result<()>,
    {
        let mut err = None;
        self.map_modes(|m1, m2, v| {
            if err.is_none() {
                if let Err(e) = f(m1, m2, v) {
                    err = Some(e);
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Inverse transform; imaginary parts are discarded.
    pub fn to_field(&self) -> TorusField {
        let n = self.grid;
        let np = n * n;
        let p = plans(n);
        let mut data = Vec::with_capacity(self.data.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); np];
        for c in 0..self.components() {
            buf.copy_from_slice(&self.data[c * np..(c + 1) * np]);
            fft2(&mut buf, n, &p.inverse);
            data.extend(buf.iter().map(|z| z.re));
        }
        TorusField::from_data_unchecked(self.layout, n, data)
    }
}

/// Forward transform to Fourier-series coefficients.
pub fn mode_transform(field: &TorusField) -> ModeField {
    let n = field.grid;
    let np = n * n;
    let p = plans(n);
    let scale = 1.0 / np as f64;
    let mut data = Vec::with_capacity(field.data.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); np];
    for c in 0..field.components() {
        for (b, x) in buf.iter_mut().zip(field.component(c)) {
            *b = Complex64::new(*x, 0.0);
        }
        fft2(&mut buf, n, &p.forward);
        data.extend(buf.iter().map(|z| z * scale));
    }
    ModeField {
        layout: field.layout,
        grid: n,
        data,
    }
}

/// Inverse of [`mode_transform`].
pub fn inverse_transform(modes: &ModeField) -> TorusField {
    modes.to_field()
}

fn apply_multiplier<F>(field: &TorusField, mut f: F) -> TorusField
where
    F: FnMut(f64, f64, &mut [Complex64]),
{
    let mut modes = mode_transform(field);
    modes.map_modes(&mut f);
    modes.to_field()
}

/// Spectral partial or Wirtinger derivative.
pub fn derivative(field: &TorusField, which: Derivative) -> Result<TorusField> {
    let i = Complex64::new(0.0, 1.0);
    match which {
        Derivative::D1 => Ok(apply_multiplier(field, |m1, _, v| {
            v.iter_mut().for_each(|x| *x *= i * m1)
        })),
        Derivative::D2 => Ok(apply_multiplier(field, |_, m2, v| {
            v.iter_mut().for_each(|x| *x *= i * m2)
        })),
        Derivative::Dt | Derivative::Dtbar => {
            let pairs = field.layout.complex_pairs()?;
            // ∂_t(x + iy) = ½(∂₁x + ∂₂y) + ½i(∂₁y − ∂₂x); ∂_t̄ flips the ∂₂ signs.
            let sign = if which == Derivative::Dt { 1.0 } else { -1.0 };
            Ok(apply_multiplier(field, |m1, m2, v| {
                for &(re, im) in &pairs {
                    let (x, y) = (v[re], v[im]);
                    let dx1 = i * m1 * x;
                    let dx2 = i * m2 * x;
                    let dy1 = i * m1 * y;
                    let dy2 = i * m2 * y;
                    v[re] = 0.5 * (dx1 + sign * dy2);
                    v[im] = 0.5 * (dy1 - sign * dx2);
                }
            }))
        }
    }
}

/// `∂̸Z = J ∂₁Z + K ∂₂Z` for constant-coefficient `J`, `K`.
pub fn dirac(z: &TorusField, triple: &StructureTriple) -> Result<TorusField> {
    let c = z.components();
    if !matches!(z.layout, Layout::Phase { .. }) || triple.dim() != c {
        return Err(Error::DimensionMismatch {
            expected: triple.dim(),
            found: c,
        });
    }
    let jm = &triple.j;
    let km = &triple.k;
    let i = Complex64::new(0.0, 1.0);
    let mut tmp = vec![Complex64::new(0.0, 0.0); c];
    Ok(apply_multiplier(z, |m1, m2, v| {
        for (r, slot) in tmp.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, x) in v.iter().enumerate() {
                acc += (m1 * jm[(r, col)] + m2 * km[(r, col)]) * x;
            }
            *slot = i * acc;
        }
        v.copy_from_slice(&tmp);
    }))
}

/// `Δ = ∂₁² + ∂₂²` as the square of the first-derivative multipliers.
pub fn laplacian(field: &TorusField) -> TorusField {
    apply_multiplier(field, |m1, m2, v| {
        let s = -(m1 * m1 + m2 * m2);
        v.iter_mut().for_each(|x| *x *= s)
    })
}

/// Unit-volume `L²` pairing: grid mean of `Σ_c a_c b_c`.
pub fn l2_inner(a: &TorusField, b: &TorusField) -> Result<f64> {
    a.check_compatible(b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
    Ok(s / a.points() as f64)
}

/// `(Σ (1+|m|²)^k |ĉ(m)|²)^{1/2}` over all components.
pub fn sobolev_norm(field: &TorusField, k: u32) -> f64 {
    let modes = mode_transform(field);
    let n = field.grid;
    let np = n * n;
    let mut total = 0.0;
    for c in 0..field.components() {
        for a in 0..n {
            let m1 = wave_number(n, a) as f64;
            for b in 0..n {
                let m2 = wave_number(n, b) as f64;
                let w = (1.0 + m1 * m1 + m2 * m2).powi(k as i32);
                total += w * modes.data[c * np + a * n + b].norm_sqr();
            }
        }
    }
    total.sqrt()
}

/// Random band-limited field with modes `|m_i| ≤ band` and coefficient
/// amplitude scaled by `amplitude`. Deterministic given `rng`.
pub fn random_band_limited<R: rand::Rng>(
    layout: Layout,
    grid: usize,
    band: i64,
    amplitude: f64,
    mean: bool,
    rng: &mut R,
) -> Result<TorusField> {
    check_grid(grid)?;
    let band = band.min(grid as i64 / 2 - 1);
    let mut modes = ModeField::zeros(layout, grid)?;
    for c in 0..layout.components() {
        for m1 in -band..=band {
            for m2 in -band..=band {
                if (m1, m2) == (0, 0) && !mean {
                    continue;
                }
                // Fill one mode of each ±m pair and mirror it.
                if (m1, m2) < (-m1, -m2) {
                    continue;
                }
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = if (m1, m2) == (0, 0) {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                let z = Complex64::new(re, im) * amplitude;
                modes.set_coefficient(c, m1, m2, z)?;
                modes.set_coefficient(c, -m1, -m2, z.conj())?;
            }
        }
    }
    Ok(modes.to_field())
}
