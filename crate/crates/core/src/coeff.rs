//! Sparse coefficient fields and their sequence norms.
//!
//! Two normalizations are tracked. An `L1Atoms` field holds `c_{j,gamma}`,
//! the samples `(f * psi_j)(2^{-j} gamma)` against `L^1`-normalized kernels;
//! it represents `sum 2^{-jQ} c_{j,gamma} psi_{j,gamma}`. An `LpAtoms(p)` field
//! holds `d_lambda` with `f = sum d_lambda psi_lambda` for the
//! `L^p`-normalized atoms `psi_lambda = 2^{jQ/p} psi(gamma^{-1} . 2^j x)`.
//! The two are related by `d = 2^{-jQ/p} c`, so the critical `b^s_{2,2}` norm
//! of `c` is the plain `l^2` norm of `d` and `b^0_{p,p}` of `c` is `l^p` of `d`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{critical_exponent, GroupSpec};
use crate::sampling::{AtomIndex, SamplingSet};

/// Relative floor below which ingested coefficients are dropped.
pub const SPARSE_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    L1Atoms,
    LpAtoms { p: f64 },
}

impl Normalization {
    pub fn lp(p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::Unsupported(format!("integrability p = {p} must lie in [1, inf)")));
        }
        Ok(Normalization::LpAtoms { p })
    }

    /// Factor `d / c` at scale `j` for this normalization, `1` for `L1Atoms`.
    fn from_l1_factor(&self, j: i32, q: usize) -> f64 {
        match *self {
            Normalization::L1Atoms => 1.0,
            Normalization::LpAtoms { p } => 2f64.powf(-(j as f64) * q as f64 / p),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Normalization::L1Atoms => write!(f, "l1_atoms"),
            Normalization::LpAtoms { p } => write!(f, "lp_atoms(p={p})"),
        }
    }
}

/// Smoothness, integrability and summability of a Besov-type norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

impl NormParams {
    pub fn new(s: f64, p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q)] {
            if v.is_infinite() {
                return Err(Error::Unsupported(format!("{name} = inf is outside the supported range")));
            }
            if !(v >= 1.0) {
                return Err(Error::Domain(format!("{name} = {v} must be at least 1")));
            }
        }
        if !s.is_finite() {
            return Err(Error::Domain("smoothness must be finite".into()));
        }
        Ok(NormParams { s, p, q })
    }

    /// `(s, p, 2)` with `s/Q + 1/p = 1/2`.
    pub fn critical(g: &GroupSpec, s: f64) -> Result<Self> {
        let p = critical_exponent(g, s)?;
        NormParams::new(s, p, 2.0)
    }

    pub fn is_critical(&self, g: &GroupSpec) -> bool {
        (self.s / g.homogeneous_dimension() as f64 + 1.0 / self.p - 0.5).abs() <= 1e-12
    }
}

/// Sparse map from atom indices to complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    sampling: SamplingSet,
    normalization: Normalization,
    entries: BTreeMap<AtomIndex, Complex64>,
}

impl CoefficientField {
    pub fn new(sampling: SamplingSet, normalization: Normalization) -> Self {
        CoefficientField {
            sampling,
            normalization,
            entries: BTreeMap::new(),
        }
    }

    /// Build from entries, rejecting duplicates and non-finite values and
    /// dropping entries below `SPARSE_FLOOR` times the largest modulus.
    pub fn from_entries(
        sampling: SamplingSet,
        normalization: Normalization,
        entries: impl IntoIterator<Item = (AtomIndex, Complex64)>,
    ) -> Result<Self> {
        let mut field = CoefficientField::new(sampling, normalization);
        for (idx, v) in entries {
            field.insert(idx, v)?;
        }
        field.apply_floor();
        Ok(field)
    }

    pub fn sampling(&self) -> &SamplingSet {
        &self.sampling
    }

    pub fn group(&self) -> &GroupSpec {
        self.sampling.group()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: &AtomIndex) -> Option<Complex64> {
        self.entries.get(idx).copied()
    }

    /// Entries in index order.
    pub fn iter(&self) -> impl Iterator<Item = (&AtomIndex, &Complex64)> {
        self.entries.iter()
    }

    pub fn indices(&self) -> impl Iterator<Item = &AtomIndex> {
        self.entries.keys()
    }

    pub fn insert(&mut self, idx: AtomIndex, v: Complex64) -> Result<()> {
        if idx.gamma.len() != self.group().dim() {
            return Err(Error::Layout(format!(
                "index has {} lattice coordinates, group expects {}",
                idx.gamma.len(),
                self.group().dim()
            )));
        }
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Domain(format!("non-finite coefficient at {idx:?}")));
        }
        if self.entries.contains_key(&idx) {
            return Err(Error::DuplicateIndex(idx));
        }
        self.entries.insert(idx, v);
        Ok(())
    }

    /// Add `v` to the entry at `idx`, creating it if absent.
    pub fn accumulate(&mut self, idx: AtomIndex, v: Complex64) {
        *self.entries.entry(idx).or_insert(Complex64::new(0.0, 0.0)) += v;
    }

    pub fn remove(&mut self, idx: &AtomIndex) -> Option<Complex64> {
        self.entries.remove(idx)
    }

    pub fn max_modulus(&self) -> f64 {
        self.entries.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn apply_floor(&mut self) {
        let cut = SPARSE_FLOOR * self.max_modulus();
        self.entries.retain(|_, v| v.norm() >= cut && v.norm() > 0.0);
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            *v *= alpha;
        }
        out
    }

    /// `self - other`; both must share the normalization.
    pub fn sub(&self, other: &CoefficientField) -> Result<Self> {
        self.require(other.normalization)?;
        let mut out = self.clone();
        for (idx, v) in &other.entries {
            out.accumulate(idx.clone(), -v);
        }
        out.entries.retain(|_, v| v.norm() > 0.0);
        Ok(out)
    }

    /// Restriction to `keep`.
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a AtomIndex>) -> Self {
        let mut out = CoefficientField::new(self.sampling.clone(), self.normalization);
        for idx in keep {
            if let Some(v) = self.entries.get(idx) {
                out.entries.insert(idx.clone(), *v);
            }
        }
        out
    }

    fn require(&self, expected: Normalization) -> Result<()> {
        let same = match (self.normalization, expected) {
            (Normalization::L1Atoms, Normalization::L1Atoms) => true,
            (Normalization::LpAtoms { p: a }, Normalization::LpAtoms { p: b }) => a == b,
            _ => false,
        };
        if same {
            Ok(())
        } else {
            Err(Error::ConversionRequired {
                expected: expected.to_string(),
                found: self.normalization.to_string(),
            })
        }
    }

    fn require_lp(&self) -> Result<f64> {
        match self.normalization {
            Normalization::LpAtoms { p } => Ok(p),
            Normalization::L1Atoms => Err(Error::ConversionRequired {
                expected: "lp_atoms".into(),
                found: self.normalization.to_string(),
            }),
        }
    }

    /// Re-express the same function in another normalization.
    pub fn convert(&self, target: Normalization) -> Self {
        let q = self.group().homogeneous_dimension();
        let mut out = CoefficientField::new(self.sampling.clone(), target);
        for (idx, v) in &self.entries {
            let f = target.from_l1_factor(idx.j, q) / self.normalization.from_l1_factor(idx.j, q);
            out.entries.insert(idx.clone(), v * f);
        }
        log::debug!("converted {} coefficients {} -> {}", self.len(), self.normalization, target);
        out
    }

    pub fn to_l1(&self) -> Self {
        self.convert(Normalization::L1Atoms)
    }

    pub fn to_lp(&self, p: f64) -> Result<Self> {
        Ok(self.convert(Normalization::lp(p)?))
    }

    pub fn scale_range(&self) -> Option<(i32, i32)> {
        let lo = self.entries.keys().next()?.j;
        let hi = self.entries.keys().next_back()?.j;
        Some((lo, hi))
    }
}

/// `(sum_j (sum_gamma (2^{j(s-Q/p)} |c|)^p)^{q/p})^{1/q}` on an `L1Atoms` field.
pub fn discrete_besov_norm(c: &CoefficientField, np: &NormParams) -> Result<f64> {
    c.require(Normalization::L1Atoms)?;
    let q_dim = c.group().homogeneous_dimension() as f64;
    let mut per_scale: BTreeMap<i32, f64> = BTreeMap::new();
    for (idx, v) in c.iter() {
        let w = 2f64.powf(idx.j as f64 * (np.s - q_dim / np.p)) * v.norm();
        *per_scale.entry(idx.j).or_insert(0.0) += w.powf(np.p);
    }
    let total: f64 = per_scale.values().map(|s| s.powf(np.q / np.p)).sum();
    Ok(total.powf(1.0 / np.q))
}

/// Plain `l^2` norm of an `LpAtoms` field.
pub fn sobolev_seq_norm(c: &CoefficientField) -> Result<f64> {
    c.require_lp()?;
    Ok(l2(c))
}

/// Plain `l^p` norm of an `LpAtoms(p)` field, the proxy for `||f||_{L^p}`.
pub fn lp_proxy_norm(c: &CoefficientField) -> Result<f64> {
    let p = c.require_lp()?;
    Ok(c.iter().map(|(_, v)| v.norm().powf(p)).sum::<f64>().powf(1.0 / p))
}

fn l2(c: &CoefficientField) -> f64 {
    c.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedAtom {
    /// 1-based rank.
    pub rank: usize,
    pub index: AtomIndex,
    pub value: Complex64,
}

/// Entries sorted by decreasing modulus, ties by index order.
pub fn reorder(c: &CoefficientField) -> Vec<RankedAtom> {
    let mut v: Vec<(&AtomIndex, &Complex64)> = c.iter().collect();
    // stable sort on an index-ordered list keeps the tie-break
    v.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()));
    v.into_iter()
        .enumerate()
        .map(|(m, (idx, val))| RankedAtom {
            rank: m + 1,
            index: idx.clone(),
            value: *val,
        })
        .collect()
}

/// The `M` largest coefficients and their index set `E_M`.
pub fn q_m(c: &CoefficientField, m: usize) -> Result<(CoefficientField, Vec<AtomIndex>)> {
    if m == 0 {
        return Err(Error::Precondition("M must be at least 1".into()));
    }
    let kept: Vec<AtomIndex> = reorder(c).into_iter().take(m).map(|r| r.index).collect();
    Ok((c.restrict(&kept), kept))
}

/// `||c - Q_M c||` in the `L^p` proxy norm for each `M`.
pub fn mterm_error_curve(c: &CoefficientField, m_list: &[usize]) -> Result<Vec<(usize, f64)>> {
    mterm_error_curve_with(c, m_list, lp_proxy_norm)
}

/// As [`mterm_error_curve`] with a caller-supplied norm.
pub fn mterm_error_curve_with(
    c: &CoefficientField,
    m_list: &[usize],
    norm: impl Fn(&CoefficientField) -> Result<f64>,
) -> Result<Vec<(usize, f64)>> {
    let ranked = reorder(c);
    let mut out = Vec::with_capacity(m_list.len());
    for &m in m_list {
        if m == 0 {
            return Err(Error::Precondition("M must be at least 1".into()));
        }
        let tail = c.restrict(ranked.iter().skip(m).map(|r| &r.index));
        out.push((m, norm(&tail)?));
    }
    Ok(out)
}

fn check_domination(small: &CoefficientField, big: &CoefficientField) -> Result<()> {
    for (idx, v) in small.iter() {
        let b = big.get(idx).map(|b| b.norm()).unwrap_or(0.0);
        if v.norm() > b * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "|c_small| exceeds |c_big| at {idx:?}"
            )));
        }
    }
    Ok(())
}

/// `||c_small|| / ||c_big||` in the sequence `l^2` norm, after checking
/// `|c_small| <= |c_big|` entrywise.
pub fn unconditionality_ratio(small: &CoefficientField, big: &CoefficientField) -> Result<f64> {
    small.require(big.normalization)?;
    check_domination(small, big)?;
    let b = l2(big);
    Ok(if b == 0.0 { 0.0 } else { l2(small) / b })
}

/// As [`unconditionality_ratio`] with a caller-supplied norm, e.g. a
/// function-level norm after synthesis.
pub fn unconditionality_ratio_with(
    small: &CoefficientField,
    big: &CoefficientField,
    norm: impl Fn(&CoefficientField) -> Result<f64>,
) -> Result<f64> {
    small.require(big.normalization)?;
    check_domination(small, big)?;
    let b = norm(big)?;
    Ok(if b == 0.0 { 0.0 } else { norm(small)? / b })
}
