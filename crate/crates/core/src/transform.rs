//! Spectral calculus on the abelian model `R^d`, realized on a torus.
//!
//! A [`GridFunction`] samples a function on `[-R, R)^d` with `N` points per
//! axis, spacing `2R/N`. Frequencies are `omega_k = pi k / R` with signed
//! `k` in `[-N/2, N/2)`. The scale-`j` kernel `psi_j` has Fourier multiplier
//! `psi_hat(4^{-j} |omega|^2)`; since `psi_hat` is real and radial,
//! `psi_j^* = psi_j` and every block is a plain multiplier.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, NormParams, Normalization};
use crate::error::{Error, Result};
use crate::sampling::{AtomIndex, CoordBox, SamplingSet};
use crate::window::SpectralWindow;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Geometry of a periodic sampling grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    /// Half-period `R`.
    pub extent: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, extent: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Layout("grid dimension must be positive".into()));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Layout(format!("grid size {n} is not a power of two")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::Domain(format!("extent must be positive, got {extent}")));
        }
        if (n as f64).powi(dim as i32) > 2f64.powi(26) {
            return Err(Error::Layout("grid too large".into()));
        }
        Ok(GridSpec { dim, n, extent })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measure of one grid cell.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            m[a] = flat % self.n;
            flat /= self.n;
        }
        m
    }

    /// Coordinates of grid point `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi(flat)
            .into_iter()
            .map(|m| -self.extent + m as f64 * h)
            .collect()
    }

    /// Signed frequency indices of spectral bin `flat`.
    pub fn signed_freq(&self, flat: usize) -> Vec<i64> {
        self.multi(flat).into_iter().map(|k| signed(k, self.n)).collect()
    }

    /// `|omega|^2` of spectral bin `flat`.
    pub fn omega_sq(&self, flat: usize) -> f64 {
        let w = std::f64::consts::PI / self.extent;
        self.signed_freq(flat)
            .into_iter()
            .map(|k| (k as f64 * w).powi(2))
            .sum()
    }

    /// The box `[-R, R)^d`.
    pub fn domain(&self) -> CoordBox {
        CoordBox::centered(self.dim, self.extent)
    }
}

fn signed(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Complex samples on a [`GridSpec`], row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(grid: GridSpec) -> Self {
        GridFunction {
            data: vec![ZERO; grid.len()],
            grid,
        }
    }

    pub fn from_samples(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Layout(format!(
                "{} samples for a grid of {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain("non-finite sample".into()));
        }
        Ok(GridFunction { grid, data })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let data = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridFunction { grid, data }
    }

    pub fn from_real_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        GridFunction {
            grid: self.grid,
            data: self.data.iter().map(|v| v * a).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GridFunction) -> Result<()> {
        self.same_grid(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_grid(other)?;
        Ok(GridFunction {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Layout("grid functions live on different grids".into()));
        }
        Ok(())
    }

    /// Discrete `L^2` norm with cell measure.
    pub fn l2(&self) -> f64 {
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell()).sqrt()
    }

    /// Zero the mean (the `k = 0` Fourier mode).
    pub fn remove_dc(&mut self) {
        let mean = self.data.iter().sum::<Complex64>() / self.data.len() as f64;
        for v in &mut self.data {
            *v -= mean;
        }
    }

    /// Fraction of the `L^2` mass inside the central half `[-R/2, R/2)^d`.
    pub fn central_mass_fraction(&self) -> f64 {
        let half = self.grid.extent / 2.0;
        let mut inner = 0.0;
        let mut total = 0.0;
        for (i, v) in self.data.iter().enumerate() {
            let e = v.norm_sqr();
            total += e;
            if self.grid.point(i).iter().all(|&x| -half <= x && x < half) {
                inner += e;
            }
        }
        if total == 0.0 {
            1.0
        } else {
            inner / total
        }
    }
}

// ---------------------------------------------------------------------------
// FFT helpers

struct NdFft {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl NdFft {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        NdFft {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized transform along every axis.
    fn run(&self, data: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut line = vec![ZERO; n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    for (k, l) in line.iter_mut().enumerate() {
                        *l = data[base + off + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, l) in line.iter().enumerate() {
                        data[base + off + k * stride] = *l;
                    }
                }
            }
        }
    }
}

fn fft(grid: &GridSpec, data: &[Complex64]) -> Vec<Complex64> {
    let mut out = data.to_vec();
    NdFft::new(grid.n).run(&mut out, grid.dim, grid.n, false);
    out
}

/// Inverse transform including the `1/N^d` factor.
fn ifft(grid: &GridSpec, spec: &[Complex64]) -> Vec<Complex64> {
    let mut out = spec.to_vec();
    NdFft::new(grid.n).run(&mut out, grid.dim, grid.n, true);
    let s = 1.0 / grid.len() as f64;
    for v in &mut out {
        *v *= s;
    }
    out
}

// ---------------------------------------------------------------------------
// Kernels

/// Cached multipliers `psi_hat(4^{-j} |omega|^2)` for `j_min <= j <= j_max`.
#[derive(Clone, Debug)]
pub struct KernelSet {
    window: SpectralWindow,
    j_min: i32,
    j_max: i32,
    grid: GridSpec,
    multipliers: Vec<Vec<f64>>,
}

impl KernelSet {
    pub fn build(window: SpectralWindow, j_min: i32, j_max: i32, grid: GridSpec) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::Domain(format!("empty scale range [{j_min}, {j_max}]")));
        }
        let omega_sq: Vec<f64> = (0..grid.len()).map(|i| grid.omega_sq(i)).collect();
        let multipliers = (j_min..=j_max)
            .map(|j| {
                let s = 4f64.powi(-j);
                omega_sq.iter().map(|&w| window.psi_hat(w * s)).collect()
            })
            .collect();
        Ok(KernelSet {
            window,
            j_min,
            j_max,
            grid,
            multipliers,
        })
    }

    pub fn window(&self) -> &SpectralWindow {
        &self.window
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn j_range(&self) -> (i32, i32) {
        (self.j_min, self.j_max)
    }

    pub fn multiplier(&self, j: i32) -> Result<&[f64]> {
        if j < self.j_min || j > self.j_max {
            return Err(Error::Range {
                j,
                min: self.j_min,
                max: self.j_max,
            });
        }
        Ok(&self.multipliers[(j - self.j_min) as usize])
    }

    /// `sum_j m_j^2` per spectral bin.
    pub fn coverage(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.grid.len()];
        for m in &self.multipliers {
            for (a, b) in c.iter_mut().zip(m) {
                *a += b * b;
            }
        }
        c
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::Layout("function grid differs from kernel grid".into()));
        }
        Ok(())
    }

    /// Largest `|psi_j(x)| (1 + |x|)^{d+1} / 2^{jd}`, the fitted constant of
    /// the decay envelope, over the central half of the torus.
    pub fn fitted_decay_constant(&self, j: i32) -> Result<f64> {
        let m = self.multiplier(j)?;
        let spec: Vec<Complex64> = m.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        // psi_j on the grid, centred at the origin: Fourier series with (2R)^{-d}
        let mut vals = ifft(&self.grid, &spec);
        let scale = self.grid.len() as f64 / (2.0 * self.grid.extent).powi(self.grid.dim as i32);
        for v in &mut vals {
            *v *= scale;
        }
        let d = self.grid.dim as i32;
        let mut worst: f64 = 0.0;
        for (i, v) in vals.iter().enumerate() {
            // bin i of the inverse transform sits at x = signed(i) * spacing
            let x: f64 = self
                .grid
                .signed_freq(i)
                .iter()
                .map(|&k| (k as f64 * self.grid.spacing()).powi(2))
                .sum::<f64>()
                .sqrt();
            if x <= self.grid.extent / 2.0 {
                let env = 2f64.powi(j * d) / (1.0 + 2f64.powi(j) * x).powi(d + 1);
                worst = worst.max(v.norm() / env);
            }
        }
        Ok(worst)
    }
}

/// `f * psi_j^*` as a Fourier multiplier.
pub fn lp_block(f: &GridFunction, ks: &KernelSet, j: i32) -> Result<GridFunction> {
    ks.check(f)?;
    let m = ks.multiplier(j)?;
    let mut spec = fft(&f.grid, &f.data);
    for (s, &w) in spec.iter_mut().zip(m) {
        *s *= w;
    }
    Ok(GridFunction {
        grid: f.grid,
        data: ifft(&f.grid, &spec),
    })
}

#[derive(Clone, Debug)]
pub struct CalderonResult {
    pub function: GridFunction,
    /// Fraction of the spectral energy (zero mode excluded) that the scale
    /// range does not reproduce.
    pub uncovered_energy: f64,
}

/// `sum_j f * psi_j^* * psi_j` over the cached scales.
pub fn calderon_reconstruct(f: &GridFunction, ks: &KernelSet) -> Result<CalderonResult> {
    ks.check(f)?;
    let cov = ks.coverage();
    let mut spec = fft(&f.grid, &f.data);
    let mut total = 0.0;
    let mut missed = 0.0;
    for (i, (s, &c)) in spec.iter_mut().zip(&cov).enumerate() {
        if i != 0 {
            let e = s.norm_sqr();
            total += e;
            missed += e * (1.0 - c).abs();
        }
        *s *= c;
    }
    let uncovered_energy = if total == 0.0 { 0.0 } else { missed / total };
    if uncovered_energy > 1e-12 {
        log::warn!("scale range misses {uncovered_energy:e} of the spectral energy");
    }
    Ok(CalderonResult {
        function: GridFunction {
            grid: f.grid,
            data: ifft(&f.grid, &spec),
        },
        uncovered_energy,
    })
}

// ---------------------------------------------------------------------------
// Analysis and synthesis

fn require_abelian(gs: &SamplingSet, grid: &GridSpec) -> Result<()> {
    if !gs.group().is_abelian() {
        return Err(Error::Unsupported(
            "function-level transforms exist only for the abelian model".into(),
        ));
    }
    if gs.group().dim() != grid.dim {
        return Err(Error::Layout(format!(
            "sampling set has dimension {}, grid has {}",
            gs.group().dim(),
            grid.dim
        )));
    }
    Ok(())
}

/// Smallest power-of-two refinement `u` of the grid that contains every
/// lattice position at scale `j`, if one exists within limits.
fn refinement(grid: &GridSpec, gs: &SamplingSet, j: i32) -> Option<usize> {
    let h = 2f64.powi(-j) * gs.beta();
    let mut u = 1usize;
    while u <= 64 {
        let r = h * u as f64 / grid.spacing();
        if (r - r.round()).abs() < 1e-9 * r.max(1.0) && r.round() >= 1.0 {
            let fine = (u * grid.n) as f64;
            if fine.powi(grid.dim as i32) <= 2f64.powi(24) {
                return Some(u);
            }
            return None;
        }
        u *= 2;
    }
    None
}

fn commensurate(grid: &GridSpec, gs: &SamplingSet, j: i32) -> bool {
    let r = 2.0 * grid.extent / (2f64.powi(-j) * gs.beta());
    (r - r.round()).abs() < 1e-9 * r.max(1.0)
}

/// Lattice points of scale `j` whose positions fall in `[-R, R)^d`.
fn torus_atoms(grid: &GridSpec, gs: &SamplingSet, j: i32) -> Result<Vec<AtomIndex>> {
    if !commensurate(grid, gs, j) {
        log::warn!("lattice at scale {j} is not commensurate with the torus period");
    }
    gs.enumerate(j, &grid.domain())
}

/// Place the spectrum of a base grid (signed bins) into a grid refined by `u`.
fn embed_spectrum(grid: &GridSpec, spec: &[Complex64], u: usize) -> Vec<Complex64> {
    let fine_n = grid.n * u;
    let mut out = vec![ZERO; fine_n.pow(grid.dim as u32)];
    for (i, v) in spec.iter().enumerate() {
        if *v == ZERO {
            continue;
        }
        let mut flat = 0usize;
        for k in grid.signed_freq(i) {
            flat = flat * fine_n + k.rem_euclid(fine_n as i64) as usize;
        }
        out[flat] = *v;
    }
    out
}

/// Inverse of [`embed_spectrum`]: read base bins out of a refined spectrum.
fn extract_spectrum(grid: &GridSpec, fine: &[Complex64], u: usize) -> Vec<Complex64> {
    let fine_n = grid.n * u;
    (0..grid.len())
        .map(|i| {
            let mut flat = 0usize;
            for k in grid.signed_freq(i) {
                flat = flat * fine_n + k.rem_euclid(fine_n as i64) as usize;
            }
            fine[flat]
        })
        .collect()
}

fn fine_index(grid: &GridSpec, u: usize, x: &[f64]) -> usize {
    let fine_n = grid.n * u;
    let h = grid.spacing() / u as f64;
    let mut flat = 0usize;
    for &c in x {
        let q = ((c + grid.extent) / h).round() as i64;
        flat = flat * fine_n + q.rem_euclid(fine_n as i64) as usize;
    }
    flat
}

fn phase(grid: &GridSpec, k: &[i64], x: &[f64]) -> f64 {
    let w = std::f64::consts::PI / grid.extent;
    k.iter().zip(x).map(|(&k, &c)| k as f64 * w * (c + grid.extent)).sum()
}

/// Values of the trigonometric interpolant of spectrum `spec` at `points`.
fn evaluate_at(grid: &GridSpec, spec: &[Complex64], points: &[Vec<f64>], u: Option<usize>) -> Vec<Complex64> {
    match u {
        Some(u) => {
            let fine_n = grid.n * u;
            let mut fine = embed_spectrum(grid, spec, u);
            NdFft::new(fine_n).run(&mut fine, grid.dim, fine_n, true);
            let s = 1.0 / grid.len() as f64;
            points.iter().map(|x| fine[fine_index(grid, u, x)] * s).collect()
        }
        None => {
            let bins: Vec<(Vec<i64>, Complex64)> = spec
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != ZERO)
                .map(|(i, v)| (grid.signed_freq(i), *v))
                .collect();
            let s = 1.0 / grid.len() as f64;
            points
                .iter()
                .map(|x| {
                    bins.iter()
                        .map(|(k, v)| v * Complex64::from_polar(1.0, phase(grid, k, x)))
                        .sum::<Complex64>()
                        * s
                })
                .collect()
        }
    }
}

/// `S_k = sum w e^{-i omega_k (x + R)}` for weighted point masses.
fn point_spectrum(grid: &GridSpec, masses: &[(Vec<f64>, Complex64)], u: Option<usize>, band: &[f64]) -> Vec<Complex64> {
    match u {
        Some(u) => {
            let fine_n = grid.n * u;
            let mut fine = vec![ZERO; fine_n.pow(grid.dim as u32)];
            for (x, w) in masses {
                fine[fine_index(grid, u, x)] += w;
            }
            NdFft::new(fine_n).run(&mut fine, grid.dim, fine_n, false);
            extract_spectrum(grid, &fine, u)
        }
        None => (0..grid.len())
            .map(|i| {
                if band[i] == 0.0 {
                    return ZERO;
                }
                let k = grid.signed_freq(i);
                masses
                    .iter()
                    .map(|(x, w)| w * Complex64::from_polar(1.0, -phase(grid, &k, x)))
                    .sum()
            })
            .collect(),
    }
}

/// Wavelet coefficients of `f` against the lattice `gs`.
///
/// The samples `c_{j,gamma} = (f * psi_j)(2^{-j} gamma)` are the `L1Atoms`
/// coefficients; other normalizations are obtained by conversion, so an
/// `LpAtoms(p)` result holds `2^{-jQ/p} c_{j,gamma}`.
pub fn analyze(
    f: &GridFunction,
    ks: &KernelSet,
    gs: &SamplingSet,
    normalization: Normalization,
) -> Result<CoefficientField> {
    ks.check(f)?;
    require_abelian(gs, &f.grid)?;
    let grid = f.grid;
    let spec = fft(&grid, &f.data);
    let mut entries = Vec::new();
    for j in ks.j_min..=ks.j_max {
        let m = ks.multiplier(j)?;
        if m.iter().all(|&v| v == 0.0) {
            continue;
        }
        let block: Vec<Complex64> = spec.iter().zip(m).map(|(s, &w)| s * w).collect();
        if block.iter().all(|v| *v == ZERO) {
            continue;
        }
        let atoms = torus_atoms(&grid, gs, j)?;
        let points: Vec<Vec<f64>> = atoms.iter().map(|a| gs.position(a).0).collect();
        let vals = evaluate_at(&grid, &block, &points, refinement(&grid, gs, j));
        entries.extend(atoms.into_iter().zip(vals));
    }
    let field = CoefficientField::from_entries(gs.clone(), Normalization::L1Atoms, entries)?;
    Ok(match normalization {
        Normalization::L1Atoms => field,
        other => field.convert(other),
    })
}

/// `sum_lambda d_lambda psi_lambda` sampled on the kernel grid.
pub fn synthesize(c: &CoefficientField, ks: &KernelSet, gs: &SamplingSet) -> Result<GridFunction> {
    let grid = ks.grid;
    require_abelian(gs, &grid)?;
    let q = gs.group().homogeneous_dimension() as f64;
    let mut by_scale: std::collections::BTreeMap<i32, Vec<(Vec<f64>, Complex64)>> = Default::default();
    for (idx, v) in c.iter() {
        // weight in front of the L1-normalized translate psi_j(. - x_lambda)
        let w = match c.normalization() {
            Normalization::L1Atoms => 2f64.powf(-(idx.j as f64) * q),
            Normalization::LpAtoms { p } => 2f64.powf(idx.j as f64 * q * (1.0 / p - 1.0)),
        };
        by_scale.entry(idx.j).or_default().push((gs.position(idx).0, v * w));
    }
    let mut total = vec![ZERO; grid.len()];
    let norm = 1.0 / (2.0 * grid.extent).powi(grid.dim as i32);
    for (j, masses) in by_scale {
        let m = ks.multiplier(j)?;
        let s = point_spectrum(&grid, &masses, refinement(&grid, gs, j), m);
        let block: Vec<Complex64> = s.iter().zip(m).map(|(v, &w)| v * w).collect();
        let mut vals = block;
        NdFft::new(grid.n).run(&mut vals, grid.dim, grid.n, true);
        for (t, v) in total.iter_mut().zip(vals) {
            *t += v * norm;
        }
    }
    Ok(GridFunction { grid, data: total })
}

/// Samples of a single atom `psi_lambda` in the given normalization.
pub fn atom(
    idx: &AtomIndex,
    normalization: Normalization,
    ks: &KernelSet,
    gs: &SamplingSet,
) -> Result<GridFunction> {
    let field = CoefficientField::from_entries(
        gs.clone(),
        normalization,
        [(idx.clone(), Complex64::new(1.0, 0.0))],
    )?;
    synthesize(&field, ks, gs)
}

/// The frame operator `T f = |W| sum_{j,gamma} 2^{-jQ} c_{j,gamma} psi_{j,gamma}`.
pub fn frame_operator(f: &GridFunction, ks: &KernelSet, gs: &SamplingSet) -> Result<GridFunction> {
    let c = analyze(f, ks, gs, Normalization::L1Atoms)?;
    Ok(synthesize(&c, ks, gs)?.scaled(Complex64::new(gs.covolume(), 0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            max_iterations: 50,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameReconstruction {
    pub function: GridFunction,
    pub iterations: usize,
    /// `||b - T g|| / ||b||` at exit.
    pub residual: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub converged: bool,
}

/// Recover a function from its coefficients by solving `T g = |W| synth(c)`
/// with Richardson iteration, step `2 / (A + B)` from power-iteration bounds.
pub fn reconstruct(
    c: &CoefficientField,
    ks: &KernelSet,
    gs: &SamplingSet,
    opts: FrameOptions,
) -> Result<FrameReconstruction> {
    let b = synthesize(&c.to_l1(), ks, gs)?.scaled(Complex64::new(gs.covolume(), 0.0));
    let bn = b.l2();
    if bn == 0.0 {
        return Ok(FrameReconstruction {
            function: b,
            iterations: 0,
            residual: 0.0,
            lower_bound: 1.0,
            upper_bound: 1.0,
            converged: true,
        });
    }
    let t = |g: &GridFunction| frame_operator(g, ks, gs);
    // upper bound: power iteration on T within its range
    let mut v = b.scaled(Complex64::new(1.0 / bn, 0.0));
    let mut upper = 0.0;
    for _ in 0..20 {
        let w = t(&v)?;
        upper = w.l2();
        if upper == 0.0 {
            break;
        }
        v = w.scaled(Complex64::new(1.0 / upper, 0.0));
    }
    // lower bound: power iteration on B - T
    let mut v = b.scaled(Complex64::new(1.0 / bn, 0.0));
    let mut mu = 0.0;
    for _ in 0..20 {
        let w = v.scaled(Complex64::new(upper, 0.0)).sub(&t(&v)?)?;
        mu = w.l2();
        if mu <= 1e-12 * upper {
            mu = 0.0;
            break;
        }
        v = w.scaled(Complex64::new(1.0 / mu, 0.0));
    }
    let lower = (upper - mu).max(1e-3 * upper);
    let lambda = 2.0 / (lower + upper);
    let mut g = b.scaled(Complex64::new(lambda, 0.0));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let r = b.sub(&t(&g)?)?;
        residual = r.l2() / bn;
        if residual <= opts.tolerance {
            break;
        }
        g.add_assign(&r.scaled(Complex64::new(lambda, 0.0)))?;
        iterations += 1;
    }
    Ok(FrameReconstruction {
        function: g,
        iterations,
        residual,
        lower_bound: lower,
        upper_bound: upper,
        converged: residual <= opts.tolerance,
    })
}

// ---------------------------------------------------------------------------
// Continuous norms

/// Riemann-sum `L^p` norm; `p = inf` gives the maximum modulus.
pub fn lebesgue_norm(f: &GridFunction, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(f.data.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p = {p} must be at least 1")));
    }
    Ok((f.data.iter().map(|v| v.norm().powf(p)).sum::<f64>() * f.grid.cell()).powf(1.0 / p))
}

/// `||(-Delta)^{s/2} f||_{L^2}` with the zero mode excluded.
pub fn sobolev_norm(f: &GridFunction, s: f64) -> Result<f64> {
    let spec = fft(&f.grid, &f.data);
    let max = spec.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if spec[0].norm() > 1e-12 * max {
        if s < 0.0 {
            return Err(Error::SingularMode(format!(
                "mean {:e} is nonzero and s = {s} < 0",
                spec[0].norm() / f.grid.len() as f64
            )));
        }
        log::debug!("zero mode of modulus {:e} excluded from homogeneous norm", spec[0].norm());
    }
    let mut acc = 0.0;
    for (i, v) in spec.iter().enumerate().skip(1) {
        acc += f.grid.omega_sq(i).powf(s) * v.norm_sqr();
    }
    // Parseval on the torus: ||f||^2 = cell / N^d sum |F_k|^2
    Ok((acc * f.grid.cell() / f.grid.len() as f64).sqrt())
}

/// `(sum_j (2^{js} ||f * psi_j^*||_{L^p})^q)^{1/q}` over the cached scales.
pub fn besov_norm_continuous(f: &GridFunction, ks: &KernelSet, np: &NormParams) -> Result<f64> {
    ks.check(f)?;
    let cov = ks.coverage();
    let spec = fft(&f.grid, &f.data);
    let total: f64 = spec.iter().skip(1).map(|v| v.norm_sqr()).sum();
    let missed: f64 = spec
        .iter()
        .zip(&cov)
        .skip(1)
        .map(|(v, &c)| v.norm_sqr() * (1.0 - c).abs())
        .sum();
    if total > 0.0 && missed / total > 1e-10 {
        log::warn!("band leakage: {:e} of the energy lies outside the scale range", missed / total);
    }
    let mut acc = 0.0;
    for j in ks.j_min..=ks.j_max {
        let m = ks.multiplier(j)?;
        let block: Vec<Complex64> = spec.iter().zip(m).map(|(s, &w)| s * w).collect();
        let g = GridFunction {
            grid: f.grid,
            data: ifft(&f.grid, &block),
        };
        acc += (2f64.powf(j as f64 * np.s) * lebesgue_norm(&g, np.p)?).powf(np.q);
    }
    Ok(acc.powf(1.0 / np.q))
}

#[derive(Clone, Debug, Serialize)]
pub struct UnconditionalEstimate {
    pub trials: usize,
    /// Largest observed `||synth(c_small)|| / ||synth(c_big)||`.
    pub d_est: f64,
    pub ratios: Vec<f64>,
}

/// Monte-Carlo estimate of the unconditional constant: random sign flips and
/// random shrinkage of `c`, measured in the function-level `H^s` norm.
pub fn estimate_unconditional_constant(
    c: &CoefficientField,
    ks: &KernelSet,
    gs: &SamplingSet,
    s: f64,
    trials: usize,
    seed: u64,
) -> Result<UnconditionalEstimate> {
    let base = sobolev_norm(&synthesize(c, ks, gs)?, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let small = CoefficientField::from_entries(
            c.sampling().clone(),
            c.normalization(),
            c.iter().map(|(i, v)| {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                (i.clone(), v * sign * rng.gen_range(0.0..=1.0))
            }),
        )?;
        let r = if base == 0.0 {
            0.0
        } else {
            sobolev_norm(&synthesize(&small, ks, gs)?, s)? / base
        };
        ratios.push(r);
    }
    Ok(UnconditionalEstimate {
        trials,
        d_est: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
    })
}
