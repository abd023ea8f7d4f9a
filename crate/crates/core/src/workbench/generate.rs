//! Synthetic sequences with known profiles.
//!
//! Every component follows an affine track in lattice coordinates,
//! `j(n) = j0 + j1 n` and `gamma(n) = g0 + g1 n`, and carries a bundle of
//! relative atoms `(j~, gamma~, d)` with `j~ >= 0`. At time `n` the atom sits at
//! `(j(n) + j~, (2^{j~} . gamma(n)) . gamma~)`, which stays on the lattice.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, Normalization};
use crate::error::{Error, Result};
use crate::profiler::{classify_pair, ClassifyParams, ScaleCorePair, SequenceSnapshots};
use crate::sampling::{AtomIndex, SamplingSet};

/// Largest `|j|` a generated atom may reach.
pub const MAX_SCALE: i32 = 60;
/// Largest relative scale in a bundle.
pub const MAX_REL_SCALE: i32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Translating,
    Concentrating,
    Spreading,
    Mixture,
    Compact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub j0: i32,
    #[serde(default)]
    pub j1: i32,
    pub g0: Vec<i64>,
    #[serde(default)]
    pub g1: Vec<i64>,
}

impl Track {
    pub fn at(&self, n: i64) -> AtomIndex {
        let gamma = if self.g1.is_empty() {
            self.g0.clone()
        } else {
            self.g0.iter().zip(&self.g1).map(|(a, b)| a + b * n).collect()
        };
        AtomIndex::new(self.j0 + self.j1 * n as i32, gamma)
    }

    fn moves(&self) -> bool {
        self.g1.iter().any(|&v| v != 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleAtom {
    pub j: i32,
    pub gamma: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl BundleAtom {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub track: Track,
    pub bundle: Vec<BundleAtom>,
}

/// Uniform perturbation of every coefficient, `re` and `im` in `[-a, a]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub amplitude: f64,
    pub seed: u64,
}

fn default_n0() -> i64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub horizon: usize,
    #[serde(default = "default_n0")]
    pub n0: i64,
    /// Integrability exponent of the `L^p`-atom normalization.
    pub p: f64,
    pub components: Vec<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Noise>,
    /// Sum coefficients that land on the same index instead of failing.
    #[serde(default)]
    pub allow_overlap: bool,
    /// Parameters of the post-generation orthogonality check for mixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<ClassifyParams>,
}

impl GeneratorSpec {
    pub fn n_values(&self) -> Vec<i64> {
        (0..self.horizon as i64).map(|k| self.n0 + k).collect()
    }

    fn check_params(&self) -> ClassifyParams {
        self.check.unwrap_or(ClassifyParams {
            tail: (self.horizon / 4).max(2),
            t_div: 4.0,
            eps_stable: 1e-9,
        })
    }
}

/// Input file of the `generate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub sampling: SamplingSet,
    pub generator: GeneratorSpec,
}

fn gen_err(msg: impl Into<String>) -> Error {
    Error::Generator(msg.into())
}

fn validate(gs: &SamplingSet, spec: &GeneratorSpec) -> Result<()> {
    let dim = gs.group().dim();
    if spec.horizon < 2 {
        return Err(gen_err("horizon must be at least 2"));
    }
    Normalization::lp(spec.p)?;
    if spec.components.is_empty() {
        return Err(gen_err("at least one component is required"));
    }
    let single = |ok: bool, what: &str| -> Result<()> {
        if spec.components.len() != 1 {
            return Err(gen_err(format!("{what} generator takes exactly one component")));
        }
        if !ok {
            return Err(gen_err(format!("track is not {what}")));
        }
        Ok(())
    };
    let t = &spec.components[0].track;
    match spec.kind {
        GeneratorKind::Translating => single(t.j1 == 0 && t.moves(), "translating")?,
        GeneratorKind::Concentrating => single(t.j1 > 0, "concentrating")?,
        GeneratorKind::Spreading => single(t.j1 < 0, "spreading")?,
        GeneratorKind::Compact => single(t.j1 == 0 && !t.moves(), "compact")?,
        GeneratorKind::Mixture => {
            if spec.components.len() < 2 {
                return Err(gen_err("a mixture needs at least two components"));
            }
        }
    }
    let (first, last) = (spec.n0, spec.n0 + spec.horizon as i64 - 1);
    let mut moduli: Vec<(f64, usize)> = Vec::new();
    for (ci, c) in spec.components.iter().enumerate() {
        if c.track.g0.len() != dim || !(c.track.g1.is_empty() || c.track.g1.len() == dim) {
            return Err(Error::Layout(format!("component {ci}: track coordinates must have length {dim}")));
        }
        if c.bundle.is_empty() {
            return Err(gen_err(format!("component {ci} has an empty bundle")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &c.bundle {
            if a.gamma.len() != dim {
                return Err(Error::Layout(format!("component {ci}: bundle offsets must have length {dim}")));
            }
            if !(0..=MAX_REL_SCALE).contains(&a.j) {
                return Err(gen_err(format!("relative scale {} outside 0..={MAX_REL_SCALE}", a.j)));
            }
            let v = a.value();
            if !v.re.is_finite() || !v.im.is_finite() || v.norm() == 0.0 {
                return Err(gen_err(format!("component {ci}: coefficients must be finite and nonzero")));
            }
            if !seen.insert((a.j, a.gamma.clone())) {
                return Err(gen_err(format!("component {ci}: repeated bundle offset {:?}", (a.j, &a.gamma))));
            }
            moduli.push((v.norm(), ci));
        }
        let top = c.bundle.iter().map(|a| a.j).max().unwrap_or(0);
        for n in [first, last] {
            let j = c.track.at(n).j;
            if j.abs().max((j + top).abs()) > MAX_SCALE {
                return Err(gen_err(format!("component {ci} leaves the scale range at n = {n}")));
            }
        }
    }
    moduli.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut min_gap = f64::INFINITY;
    for w in moduli.windows(2) {
        if w[0].1 != w[1].1 && w[1].0 == w[0].0 {
            return Err(gen_err(format!("modulus {} is shared by two components", w[0].0)));
        }
        if w[1].0 > w[0].0 {
            min_gap = min_gap.min(w[1].0 - w[0].0);
        }
    }
    if let Some(noise) = spec.noise {
        if !(noise.amplitude >= 0.0) || !noise.amplitude.is_finite() {
            return Err(gen_err("noise amplitude must be finite and nonnegative"));
        }
        // keep ranks stable: the perturbation may move a modulus by at most a*sqrt(2)
        if 2.0 * std::f64::consts::SQRT_2 * noise.amplitude >= min_gap {
            return Err(gen_err("noise amplitude is too large for the modulus separation"));
        }
    }
    Ok(())
}

fn place(gs: &SamplingSet, anchor: &AtomIndex, a: &BundleAtom) -> AtomIndex {
    let base = gs.lattice_dilate_pow2(a.j as u32, &anchor.gamma);
    AtomIndex::new(anchor.j + a.j, gs.lattice_mul_unchecked(&base, &a.gamma))
}

/// Build the snapshots described by `spec`.
pub fn generate(gs: &SamplingSet, spec: &GeneratorSpec) -> Result<SequenceSnapshots> {
    validate(gs, spec)?;
    let mut rng = spec.noise.map(|nz| (ChaCha8Rng::seed_from_u64(nz.seed), nz.amplitude));
    let norm = Normalization::lp(spec.p)?;
    let n_values = spec.n_values();
    let mut fields = Vec::with_capacity(n_values.len());
    for &n in &n_values {
        let mut entries: BTreeMap<AtomIndex, Complex64> = BTreeMap::new();
        for c in &spec.components {
            let anchor = c.track.at(n);
            for a in &c.bundle {
                let mut v = a.value();
                if let Some((r, amp)) = rng.as_mut() {
                    if *amp > 0.0 {
                        v += Complex64::new(r.gen_range(-*amp..=*amp), r.gen_range(-*amp..=*amp));
                    }
                }
                let idx = place(gs, &anchor, a);
                if let Some(prev) = entries.get_mut(&idx) {
                    if !spec.allow_overlap {
                        return Err(gen_err(format!("index collision at n = {n}: {idx:?}")));
                    }
                    *prev += v;
                } else {
                    entries.insert(idx, v);
                }
            }
        }
        fields.push(CoefficientField::from_entries(gs.clone(), norm, entries)?);
    }
    if spec.kind == GeneratorKind::Mixture {
        let cp = spec.check_params();
        let tracks: Vec<ScaleCorePair> = spec
            .components
            .iter()
            .map(|c| {
                let t: Vec<AtomIndex> = n_values.iter().map(|&n| c.track.at(n)).collect();
                ScaleCorePair::from_indices(gs, &t)
            })
            .collect();
        for a in 0..tracks.len() {
            for b in a + 1..tracks.len() {
                let v = classify_pair(gs.group(), &tracks[a], &tracks[b], &cp)?;
                if !v.is_orthogonal() {
                    return Err(gen_err(format!(
                        "components {a} and {b} are not orthogonal over the horizon: {v:?}"
                    )));
                }
            }
        }
    }
    SequenceSnapshots::new(n_values, fields)
}
