//! One-dimensional spectral windows.
//!
//! Multipliers act on the squared frequency `xi = |omega|^2`, so the scale-`j`
//! block is `psi_hat(4^{-j} xi)`. The smooth window has `phi_hat = 1` on
//! `[0, 1/4]`, a smooth transition on `[1/4, 1]` and `phi_hat = 0` beyond, and
//! `psi_hat(xi)^2 = phi_hat(xi/4) - phi_hat(xi)`, supported in `[1/4, 4]`.
//! Partial sums telescope:
//! `sum_{|j|<=m} psi_hat(4^{-j} xi)^2 = phi_hat(4^{-m-1} xi) - phi_hat(4^m xi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth step `S(t) = g(t) / (g(t) + g(1-t))`, `g(t) = exp(-k/t)` for `t > 0`.
pub fn smooth_step(t: f64, sharpness: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    // g(t)/(g(t)+g(1-t)) = 1/(1 + exp(k/t - k/(1-t)))
    let e = sharpness / t - sharpness / (1.0 - t);
    1.0 / (1.0 + e.exp())
}

/// The smooth Littlewood-Paley window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub sharpness: f64,
}

impl Default for Window {
    fn default() -> Self {
        Window { sharpness: 1.0 }
    }
}

impl Window {
    pub const SUPPORT: (f64, f64) = (0.25, 4.0);

    pub fn new(sharpness: f64) -> Result<Self> {
        if !(sharpness > 0.0) || !sharpness.is_finite() {
            return Err(Error::Domain(format!("sharpness must be positive, got {sharpness}")));
        }
        Ok(Window { sharpness })
    }

    pub fn phi_hat(&self, xi: f64) -> f64 {
        if xi <= 0.25 {
            1.0
        } else if xi >= 1.0 {
            0.0
        } else {
            1.0 - smooth_step((4.0 * xi).log(4.0), self.sharpness)
        }
    }

    /// `psi_hat(xi)^2`, clamped at zero.
    pub fn psi_hat_sq(&self, xi: f64) -> f64 {
        (self.phi_hat(xi / 4.0) - self.phi_hat(xi)).max(0.0)
    }

    pub fn psi_hat(&self, xi: f64) -> f64 {
        self.psi_hat_sq(xi).sqrt()
    }
}

/// Sharp band window; its atoms at one scale are orthonormal.
///
/// On the `sqrt(xi) = |omega|` scale it is the indicator of `(1/2, 1)` with
/// value `1/sqrt(2)` at both endpoints, so the squared dyadic translates sum
/// to one everywhere, including the shared endpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NarrowWindow;

impl NarrowWindow {
    /// Support on the `|omega|` scale.
    pub const SUPPORT: (f64, f64) = (0.5, 1.0);

    /// Value at `w = |omega|`.
    pub fn psi_hat(&self, w: f64) -> f64 {
        let (a, b) = Self::SUPPORT;
        if w > a && w < b {
            1.0
        } else if w == a || w == b {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            0.0
        }
    }

    /// Value at the squared frequency `xi = |omega|^2`.
    pub fn psi_hat_spectral(&self, xi: f64) -> f64 {
        // the band edges 1/4 and 1 are squares of exact binary fractions
        let w = if xi == 0.25 { 0.5 } else { xi.max(0.0).sqrt() };
        self.psi_hat(w)
    }
}

/// Either window, evaluated on the squared-frequency scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralWindow {
    Smooth(Window),
    Narrow(NarrowWindow),
}

impl Default for SpectralWindow {
    fn default() -> Self {
        SpectralWindow::Smooth(Window::default())
    }
}

impl SpectralWindow {
    pub fn psi_hat(&self, xi: f64) -> f64 {
        match self {
            SpectralWindow::Smooth(w) => w.psi_hat(xi),
            SpectralWindow::Narrow(n) => n.psi_hat_spectral(xi),
        }
    }

    /// Support in `xi`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpectralWindow::Smooth(_) => Window::SUPPORT,
            SpectralWindow::Narrow(_) => (0.25, 1.0),
        }
    }
}

pub fn build_window(sharpness: f64) -> Result<Window> {
    Window::new(sharpness)
}

pub fn build_narrow_window() -> NarrowWindow {
    NarrowWindow
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    pub max_deviation: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Max over `grid` of `|sum_{|j|<=big_j} term(4^{-j} xi) - 1|`, where `term`
/// is the squared window. Points outside `[4^{-J}, 4^J]` are excluded.
pub fn partition_deviation(term: impl Fn(f64) -> f64, big_j: i32, grid: &[f64]) -> PartitionReport {
    let lo = 4f64.powi(-big_j);
    let hi = 4f64.powi(big_j);
    let mut report = PartitionReport {
        max_deviation: 0.0,
        checked: 0,
        excluded: 0,
    };
    for &xi in grid {
        if xi < lo || xi > hi {
            report.excluded += 1;
            continue;
        }
        let s: f64 = (-big_j..=big_j).map(|j| term(xi * 4f64.powi(-j))).sum();
        report.max_deviation = report.max_deviation.max((s - 1.0).abs());
        report.checked += 1;
    }
    if report.excluded > 0 {
        log::warn!(
            "{} grid points outside the covered band [{lo:e}, {hi:e}] were skipped",
            report.excluded
        );
    }
    report
}

pub fn verify_partition(w: &SpectralWindow, big_j: i32, grid: &[f64]) -> PartitionReport {
    partition_deviation(|xi| w.psi_hat(xi).powi(2), big_j, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smooth_window_values() {
        let w = build_window(1.0).unwrap();
        assert_eq!(w.phi_hat(0.0), 1.0);
        assert_eq!(w.phi_hat(0.25), 1.0);
        assert_eq!(w.phi_hat(4.0), 0.0);
        assert_eq!(w.psi_hat(1.0 / 8.0), 0.0);
        assert_eq!(w.psi_hat(8.0), 0.0);
        assert_eq!(w.psi_hat(0.25), 0.0);
        assert_eq!(w.psi_hat(4.0), 0.0);
        assert!(w.psi_hat(1.0) > 0.99);
        // symmetric step: midpoint of the transition at xi = 1/2
        assert!((w.phi_hat(0.5) - 0.5).abs() < 1e-15);
        assert!(build_window(0.0).is_err());
    }

    #[test]
    fn adjacent_terms_at_two() {
        // at xi = 2 only j = 0 and j = 1 contribute
        let w = build_window(0.7).unwrap();
        let s = w.psi_hat(2.0).powi(2) + w.psi_hat(0.5).powi(2);
        assert!((s - 1.0).abs() < 1e-15);
        for j in [-3, -2, -1, 2, 3] {
            assert_eq!(w.psi_hat(2.0 * 4f64.powi(-j)), 0.0);
        }
    }

    #[test]
    fn partition_of_unity() {
        let grid = log_grid(4f64.powi(-8), 4f64.powi(8), 512);
        for k in [0.3, 1.0, 3.0] {
            let w = SpectralWindow::Smooth(build_window(k).unwrap());
            let r = verify_partition(&w, 8, &grid);
            assert!(r.max_deviation <= 1e-12, "{r:?}");
            assert_eq!(r.excluded, 0);
        }
        let n = SpectralWindow::Narrow(build_narrow_window());
        assert!(verify_partition(&n, 8, &grid).max_deviation <= 1e-12);
        // grid points include the band edges
        let edges: Vec<f64> = (-6..=6).map(|k| 4f64.powi(k)).collect();
        assert!(verify_partition(&n, 8, &edges).max_deviation <= 1e-15);
    }

    #[test]
    fn corrupted_partition_is_detected() {
        let w = build_window(1.0).unwrap();
        let grid = log_grid(1e-3, 1e3, 256);
        let r = partition_deviation(|xi| w.psi_hat(xi), 8, &grid);
        assert!(r.max_deviation > 0.1, "{r:?}");
    }

    #[test]
    fn out_of_band_points_are_excluded() {
        let w = SpectralWindow::default();
        let r = verify_partition(&w, 2, &[1e-4, 1.0, 1e4]);
        assert_eq!((r.checked, r.excluded), (1, 2));
    }

    #[test]
    fn narrow_window_values() {
        let n = build_narrow_window();
        assert_eq!(n.psi_hat(0.25), 0.0);
        assert_eq!(n.psi_hat(0.75), 1.0);
        assert_eq!(n.psi_hat(1.5), 0.0);
        assert_eq!(n.psi_hat_spectral(0.5), 1.0);
        assert_eq!(n.psi_hat_spectral(1.0), std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(n.psi_hat_spectral(0.25), std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(n.psi_hat_spectral(2.0), 0.0);
    }

    #[test]
    fn window_json() {
        let w = SpectralWindow::Smooth(Window { sharpness: 2.0 });
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"kind":"smooth","sharpness":2.0}"#);
        assert_eq!(serde_json::from_str::<SpectralWindow>(&s).unwrap(), w);
        let n: SpectralWindow = serde_json::from_str(r#"{"kind":"narrow"}"#).unwrap();
        assert_eq!(n, SpectralWindow::Narrow(NarrowWindow));
    }

    proptest! {
        #[test]
        fn telescoping_partial_sums(lx in -12.0f64..12.0, m in 0i32..6, k in 0.2f64..4.0) {
            let w = build_window(k).unwrap();
            let xi = 2f64.powf(lx);
            let s: f64 = (-m..=m).map(|j| w.psi_hat(xi * 4f64.powi(-j)).powi(2)).sum();
            let t = w.phi_hat(xi * 4f64.powi(-m - 1)) - w.phi_hat(xi * 4f64.powi(m));
            prop_assert!((s - t).abs() <= 1e-12);
        }

        #[test]
        fn disjoint_beyond_neighbours(lx in -10.0f64..10.0, j in -5i32..5, gap in 2i32..5) {
            let w = build_window(1.0).unwrap();
            let xi = 2f64.powf(lx);
            let a = w.psi_hat(xi * 4f64.powi(-j));
            let b = w.psi_hat(xi * 4f64.powi(-j - gap));
            prop_assert_eq!(a * b, 0.0);
        }

        #[test]
        fn phi_hat_in_unit_interval(xi in 0.0f64..10.0, k in 0.01f64..10.0) {
            let v = build_window(k).unwrap().phi_hat(xi);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
