//! Finite-horizon profile extraction.
//!
//! Each snapshot `u_n` is a coefficient field in `L^p`-atom normalization.
//! Ranks are assigned per snapshot by decreasing modulus; rank `m` then has a
//! track `lambda(m, n)` and coefficients `d_{m,n}`. Rank 1 opens the first
//! profile. Every later rank is classified against the anchor track of each
//! existing profile: if all pairs are orthogonal it opens a new profile
//! (Case 1), otherwise it is absorbed as a relative atom `(j~, gamma~, d_m)`
//! of the first profile it is not orthogonal to (Case 2).
//!
//! Limits are estimated from the last `tail` snapshots, and divergence and
//! stability are judged over the same window.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeff::{reorder, sobolev_seq_norm, CoefficientField, Normalization};
use crate::error::{Error, Result};
use crate::group::{GroupSpec, Point};
use crate::sampling::{AtomIndex, SamplingSet};

/// A bounded sequence of coefficient fields observed at increasing `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSnapshots {
    sampling: SamplingSet,
    normalization: Normalization,
    n_values: Vec<i64>,
    fields: Vec<CoefficientField>,
}

impl SequenceSnapshots {
    pub fn new(n_values: Vec<i64>, fields: Vec<CoefficientField>) -> Result<Self> {
        if fields.is_empty() || n_values.len() != fields.len() {
            return Err(Error::Layout(format!(
                "{} n values for {} fields",
                n_values.len(),
                fields.len()
            )));
        }
        if n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("n values must be strictly increasing".into()));
        }
        let sampling = fields[0].sampling().clone();
        let normalization = fields[0].normalization();
        if !matches!(normalization, Normalization::LpAtoms { .. }) {
            return Err(Error::ConversionRequired {
                expected: "lp_atoms".into(),
                found: normalization.to_string(),
            });
        }
        for f in &fields {
            if f.sampling() != &sampling {
                return Err(Error::Domain("snapshots use different sampling sets".into()));
            }
            if f.normalization() != normalization {
                return Err(Error::ConversionRequired {
                    expected: normalization.to_string(),
                    found: f.normalization().to_string(),
                });
            }
        }
        Ok(SequenceSnapshots {
            sampling,
            normalization,
            n_values,
            fields,
        })
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

    pub fn n_values(&self) -> &[i64] {
        &self.n_values
    }

    pub fn fields(&self) -> &[CoefficientField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `sup_n ||u_n||` in the sequence `H^s` norm.
    pub fn k_bound(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| sobolev_seq_norm(f).unwrap_or(f64::NAN))
            .fold(0.0, f64::max)
    }
}

/// Scales `h_n` and cores `kappa_n` of a track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleCorePair {
    pub h: Vec<f64>,
    pub kappa: Vec<Point>,
}

impl ScaleCorePair {
    /// `h = 2^{-j}`, `kappa = 2^{-j} . gamma`.
    pub fn from_indices(gs: &SamplingSet, track: &[AtomIndex]) -> Self {
        ScaleCorePair {
            h: track.iter().map(|i| 2f64.powi(-i.j)).collect(),
            kappa: track.iter().map(|i| gs.position(i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    ScaleOrthogonal,
    CoreOrthogonal,
    NotOrthogonal { rel_scale: i32, rel_pos: Point },
    Undecided,
}

impl Verdict {
    pub fn is_orthogonal(&self) -> bool {
        matches!(self, Verdict::ScaleOrthogonal | Verdict::CoreOrthogonal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub tail: usize,
    pub t_div: f64,
    pub eps_stable: f64,
}

/// Nondecreasing, strictly larger at the end than at the start, and past `t`.
fn diverges(v: &[f64], t: f64) -> bool {
    let scale = v.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    v.windows(2).all(|w| w[1] >= w[0] - 1e-12 * scale)
        && v.last() > v.first()
        && *v.last().unwrap() > t
}

/// Orthogonality verdict for two tracks over their last `tail` entries.
pub fn classify_pair(
    g: &GroupSpec,
    a: &ScaleCorePair,
    b: &ScaleCorePair,
    params: &ClassifyParams,
) -> Result<Verdict> {
    if a.len() != b.len() || a.kappa.len() != a.h.len() || b.kappa.len() != b.h.len() {
        return Err(Error::Layout("tracks have different lengths".into()));
    }
    if params.tail < 2 || a.len() < params.tail {
        return Err(Error::InsufficientData(format!(
            "tail of {} needs at least 2 and at most {} snapshots",
            params.tail,
            a.len()
        )));
    }
    let start = a.len() - params.tail;
    let mut gap = Vec::with_capacity(params.tail);
    let mut dist = Vec::with_capacity(params.tail);
    let mut rel = Vec::with_capacity(params.tail);
    for n in start..a.len() {
        let (ha, hb) = (a.h[n], b.h[n]);
        if !(ha > 0.0 && hb > 0.0) {
            return Err(Error::Domain("scales must be positive".into()));
        }
        gap.push((ha / hb).log2());
        let d = g.multiply(&g.inverse(&a.kappa[n])?, &b.kappa[n])?;
        dist.push(g.hom_norm(&d) / ha.min(hb));
        rel.push(g.dilate(1.0 / hb, &d)?);
    }
    let abs_gap: Vec<f64> = gap.iter().map(|x| x.abs()).collect();
    if diverges(&abs_gap, params.t_div) {
        return Ok(Verdict::ScaleOrthogonal);
    }
    let last_gap = *gap.last().unwrap();
    let gap_constant = gap.iter().all(|x| (x - last_gap).abs() <= params.eps_stable);
    if gap_constant && diverges(&dist, params.t_div) {
        return Ok(Verdict::CoreOrthogonal);
    }
    let last_rel = rel.last().unwrap();
    let rel_constant = rel.iter().all(|r| r.max_abs_diff(last_rel) <= params.eps_stable);
    if gap_constant && rel_constant && (last_gap - last_gap.round()).abs() <= params.eps_stable {
        return Ok(Verdict::NotOrthogonal {
            rel_scale: last_gap.round() as i32,
            rel_pos: last_rel.clone(),
        });
    }
    Ok(Verdict::Undecided)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strict,
    Exploratory,
}

/// Parameters of [`extract`]; field names follow `params.json`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    #[serde(rename = "M_max")]
    pub m_max: usize,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    pub eps_conv: f64,
    #[serde(rename = "T_div")]
    pub t_div: f64,
    pub eps_stable: f64,
    pub tail: usize,
    pub mode: Mode,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            m_max: 16,
            l_max: 8,
            eps_conv: 1e-8,
            t_div: 4.0,
            eps_stable: 1e-9,
            tail: 8,
            mode: Mode::Strict,
        }
    }
}

impl ExtractParams {
    fn classify(&self) -> ClassifyParams {
        ClassifyParams {
            tail: self.tail,
            t_div: self.t_div,
            eps_stable: self.eps_stable,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitRecord {
    pub rank: usize,
    pub d: Complex64,
    /// `max |d_{m,n} - d_m|` over the tail.
    pub radius: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileAtom {
    pub rank: usize,
    pub rel_scale: i32,
    pub rel_pos: Point,
    pub d: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Escape {
    /// `j -> +inf`: concentrating.
    Concentrating,
    /// `j -> -inf`: spreading.
    Spreading,
    /// Fixed scale, core running off.
    Translating,
    /// Track settles: no escape over the horizon.
    Stationary,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    pub id: usize,
    pub anchor_rank: usize,
    pub atoms: Vec<ProfileAtom>,
    /// `lambda_l(n)`: the anchor rank's index at each `n`.
    pub core_track: Vec<AtomIndex>,
    pub escape: Escape,
}

impl Profile {
    /// `||phi||^2` in the sequence `H^s` norm.
    pub fn energy(&self) -> f64 {
        self.atoms.iter().map(|a| a.d.norm_sqr()).sum()
    }

    /// Ranks absorbed by this profile among the first `m`.
    pub fn ranks_upto(&self, m: usize) -> Vec<usize> {
        self.atoms.iter().map(|a| a.rank).filter(|&r| r <= m).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    NewProfile,
    Absorbed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankDecision {
    pub rank: usize,
    pub case: Case,
    pub profile: usize,
    pub verdicts: Vec<Verdict>,
    /// Set when an undecided pair was resolved as Case 1 in exploratory mode.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderEntry {
    pub n: i64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub r1_hs: f64,
    pub r2_lp: f64,
    pub r_hs: f64,
    /// Largest `||r1 + r2 - r||` over all `M <= M_max`.
    pub m_independence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyEntry {
    pub n: i64,
    #[serde(rename = "L")]
    pub l: usize,
    pub u_sq: f64,
    pub profiles_sq: f64,
    pub r_sq: f64,
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bookkeeping {
    pub partition: bool,
    pub nu_increments: bool,
    pub nested: bool,
}

impl Bookkeeping {
    pub fn holds(&self) -> bool {
        self.partition && self.nu_increments && self.nested
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(rename = "K_bound")]
    pub k_bound: f64,
    /// `sup_m |d_m| / K`.
    pub d_est: f64,
    pub nonconvergent_ranks: Vec<usize>,
    pub flagged_ranks: Vec<usize>,
    pub bookkeeping: Bookkeeping,
    pub max_m_independence: f64,
    /// `sup_n ||r2(n, L, M_max)||` for each `L`.
    pub r2_sup_by_l: Vec<f64>,
    pub r2_monotone: bool,
    pub max_energy_defect: f64,
}

/// Key of a remainder entry: a lattice atom, or an atom whose transported
/// position falls off the lattice (keyed by the coordinate bit patterns).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RemainderKey {
    Lattice(AtomIndex),
    OffLattice { j: i32, bits: Vec<u64> },
}

type Sparse = BTreeMap<RemainderKey, Complex64>;

#[derive(Clone, Debug, Serialize)]
pub struct ProfileDecomposition {
    pub params: ExtractParams,
    pub p: f64,
    pub n_values: Vec<i64>,
    pub limits: Vec<LimitRecord>,
    pub profiles: Vec<Profile>,
    /// `nu(M)` for `M = 1..=M_max`.
    pub nu: Vec<usize>,
    pub classification: Vec<RankDecision>,
    pub remainder_ledger: Vec<RemainderEntry>,
    pub energy_ledger: Vec<EnergyEntry>,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    state: State,
}

#[derive(Clone, Debug, Default)]
struct State {
    sampling: Option<SamplingSet>,
    /// Per snapshot: ranked `(index, value)` over all entries.
    ranked: Vec<Vec<(AtomIndex, Complex64)>>,
    /// Profile of each rank `1..=M_max` (index `m - 1`).
    assign: Vec<usize>,
    /// Per profile, per snapshot: the transported profile.
    phi: Vec<Vec<Sparse>>,
}

fn transport(gs: &SamplingSet, anchor: &AtomIndex, rel_scale: i32, rel_pos: &Point) -> RemainderKey {
    let g = gs.group();
    let base = g.dilate_pow2(rel_scale, &gs.decode(&anchor.gamma));
    let x = g.multiply_unchecked(&base.0, &rel_pos.0);
    let j = anchor.j + rel_scale;
    match gs.locate(&x) {
        Some(gamma) => RemainderKey::Lattice(AtomIndex::new(j, gamma)),
        None => RemainderKey::OffLattice {
            j,
            bits: x.0.iter().map(|c| c.to_bits()).collect(),
        },
    }
}

fn add(map: &mut Sparse, key: RemainderKey, v: Complex64) {
    *map.entry(key).or_insert(Complex64::new(0.0, 0.0)) += v;
}

fn l2(map: &Sparse) -> f64 {
    map.values().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn lp(map: &Sparse, p: f64) -> f64 {
    map.values().map(|v| v.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Run the extraction on `s`.
pub fn extract(s: &SequenceSnapshots, params: &ExtractParams) -> Result<ProfileDecomposition> {
    let Normalization::LpAtoms { p } = s.normalization() else {
        unreachable!("snapshots are validated to use L^p atoms")
    };
    if params.m_max == 0 {
        return Err(Error::Precondition("M_max must be at least 1".into()));
    }
    if params.tail < 2 || params.tail > s.len() {
        return Err(Error::InsufficientData(format!(
            "tail {} needs between 2 and {} snapshots",
            params.tail,
            s.len()
        )));
    }
    let min_card = s.fields().iter().map(|f| f.len()).min().unwrap_or(0);
    if params.m_max > min_card {
        return Err(Error::InsufficientData(format!(
            "M_max = {} exceeds the smallest snapshot cardinality {min_card}",
            params.m_max
        )));
    }
    let gs = s.sampling();
    let g = gs.group();
    let cp = params.classify();
    let horizon = s.len();
    let tail_start = horizon - params.tail;

    let ranked: Vec<Vec<(AtomIndex, Complex64)>> = s
        .fields()
        .iter()
        .map(|f| reorder(f).into_iter().map(|r| (r.index, r.value)).collect())
        .collect();

    // (b) limits over the tail
    let mut limits = Vec::with_capacity(params.m_max);
    for m in 1..=params.m_max {
        let vals: Vec<Complex64> = ranked[tail_start..].iter().map(|r| r[m - 1].1).collect();
        let mean = vals.iter().sum::<Complex64>() / vals.len() as f64;
        let radius = vals.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
        let converged = radius <= params.eps_conv;
        if !converged && params.mode == Mode::Strict {
            return Err(Error::NonconvergentCoefficient { rank: m, radius });
        }
        limits.push(LimitRecord {
            rank: m,
            d: mean,
            radius,
            converged,
        });
    }

    let track = |m: usize| -> Vec<AtomIndex> { ranked.iter().map(|r| r[m - 1].0.clone()).collect() };

    // (c), (d) the induction
    let mut profiles: Vec<Profile> = Vec::new();
    let mut anchors: Vec<ScaleCorePair> = Vec::new();
    let mut assign = Vec::with_capacity(params.m_max);
    let mut nu = Vec::with_capacity(params.m_max);
    let mut classification = Vec::with_capacity(params.m_max);
    for m in 1..=params.m_max {
        let t = track(m);
        let pair = ScaleCorePair::from_indices(gs, &t);
        let mut verdicts = Vec::with_capacity(profiles.len());
        for a in &anchors {
            verdicts.push(classify_pair(g, a, &pair, &cp)?);
        }
        let target = verdicts.iter().position(|v| matches!(v, Verdict::NotOrthogonal { .. }));
        let undecided = verdicts.iter().position(|v| *v == Verdict::Undecided);
        if let (Some(l), Mode::Strict) = (undecided, params.mode) {
            return Err(Error::UndecidableOrthogonality { rank: m, profile: l + 1 });
        }
        let d = limits[m - 1].d;
        let decision = match target {
            Some(l) => {
                let Verdict::NotOrthogonal { rel_scale, rel_pos } = &verdicts[l] else {
                    unreachable!()
                };
                profiles[l].atoms.push(ProfileAtom {
                    rank: m,
                    rel_scale: *rel_scale,
                    rel_pos: rel_pos.clone(),
                    d,
                });
                assign.push(l);
                RankDecision {
                    rank: m,
                    case: Case::Absorbed,
                    profile: l + 1,
                    verdicts,
                    flagged: false,
                }
            }
            None => {
                let id = profiles.len() + 1;
                profiles.push(Profile {
                    id,
                    anchor_rank: m,
                    atoms: vec![ProfileAtom {
                        rank: m,
                        rel_scale: 0,
                        rel_pos: g.identity(),
                        d,
                    }],
                    core_track: t,
                    escape: Escape::Undetermined,
                });
                anchors.push(pair);
                assign.push(id - 1);
                RankDecision {
                    rank: m,
                    case: Case::NewProfile,
                    profile: id,
                    verdicts,
                    flagged: undecided.is_some(),
                }
            }
        };
        classification.push(decision);
        nu.push(profiles.len());
    }

    for (prof, anchor) in profiles.iter_mut().zip(&anchors) {
        prof.escape = escape_status(g, anchor, &cp, tail_start);
    }

    // transported profiles per snapshot
    let phi: Vec<Vec<Sparse>> = profiles
        .iter()
        .map(|prof| {
            (0..horizon)
                .map(|n| {
                    let mut map = Sparse::new();
                    for a in &prof.atoms {
                        add(&mut map, transport(gs, &prof.core_track[n], a.rel_scale, &a.rel_pos), a.d);
                    }
                    map
                })
                .collect()
        })
        .collect();

    let k_bound = s.k_bound();
    let flagged_ranks = classification.iter().filter(|c| c.flagged).map(|c| c.rank).collect();
    let nonconvergent_ranks = limits.iter().filter(|l| !l.converged).map(|l| l.rank).collect();
    let d_sup = limits.iter().map(|l| l.d.norm()).fold(0.0, f64::max);
    let mut out = ProfileDecomposition {
        params: *params,
        p,
        n_values: s.n_values().to_vec(),
        limits,
        profiles,
        nu,
        classification,
        remainder_ledger: Vec::new(),
        energy_ledger: Vec::new(),
        diagnostics: Diagnostics {
            k_bound,
            d_est: if k_bound > 0.0 { d_sup / k_bound } else { 0.0 },
            nonconvergent_ranks,
            flagged_ranks,
            bookkeeping: Bookkeeping {
                partition: true,
                nu_increments: true,
                nested: true,
            },
            max_m_independence: 0.0,
            r2_sup_by_l: Vec::new(),
            r2_monotone: true,
            max_energy_defect: 0.0,
        },
        state: State {
            sampling: Some(gs.clone()),
            ranked,
            assign,
            phi,
        },
    };
    out.diagnostics.bookkeeping = out.check_bookkeeping();
    out.build_ledgers()?;
    Ok(out)
}

fn escape_status(g: &GroupSpec, anchor: &ScaleCorePair, cp: &ClassifyParams, tail_start: usize) -> Escape {
    let fixed = ScaleCorePair {
        h: vec![anchor.h[tail_start]; anchor.len()],
        kappa: vec![anchor.kappa[tail_start].clone(); anchor.len()],
    };
    match classify_pair(g, &fixed, anchor, cp) {
        Ok(Verdict::ScaleOrthogonal) => {
            if anchor.h.last().unwrap() < &anchor.h[tail_start] {
                Escape::Concentrating
            } else {
                Escape::Spreading
            }
        }
        Ok(Verdict::CoreOrthogonal) => Escape::Translating,
        Ok(Verdict::NotOrthogonal { .. }) => Escape::Stationary,
        _ => Escape::Undetermined,
    }
}

/// Result of [`ProfileDecomposition::remainder_split`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderSplit {
    pub r1_hs: f64,
    pub r2_lp: f64,
    pub r_hs: f64,
    /// `||r1 + r2 - r||` in the sequence norm.
    pub deviation: f64,
}

impl ProfileDecomposition {
    pub fn profile_count(&self) -> usize {
        self.profiles.len()
    }

    /// `E(l, M)` for the 1-based profile `l`.
    pub fn e_set(&self, l: usize, m: usize) -> Vec<usize> {
        self.state.assign[..m.min(self.state.assign.len())]
            .iter()
            .enumerate()
            .filter(|(_, &a)| a + 1 == l)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Partition, unit-increment and nesting properties of `E(l, M)`.
    pub fn check_bookkeeping(&self) -> Bookkeeping {
        let m_max = self.state.assign.len();
        let mut partition = true;
        let mut nested = true;
        for m in 1..=m_max {
            let mut seen = vec![0usize; m];
            for l in 1..=self.profiles.len() {
                let e = self.e_set(l, m);
                for r in &e {
                    seen[r - 1] += 1;
                }
                if m < m_max {
                    let next = self.e_set(l, m + 1);
                    nested &= e.iter().all(|r| next.contains(r));
                }
            }
            partition &= seen.iter().all(|&c| c == 1);
        }
        let mut prev = 0;
        let mut nu_increments = true;
        for &v in &self.nu {
            nu_increments &= v == prev || v == prev + 1;
            prev = v;
        }
        Bookkeeping {
            partition,
            nu_increments,
            nested,
        }
    }

    fn n_index(&self, n: i64) -> Result<usize> {
        self.n_values
            .iter()
            .position(|&v| v == n)
            .ok_or_else(|| Error::Domain(format!("n = {n} not among the snapshots")))
    }

    fn maps(&self, ni: usize, l: usize, m: usize) -> (Sparse, Sparse, Sparse) {
        let ranked = &self.state.ranked[ni];
        let assign = &self.state.assign;
        let mut r1 = Sparse::new();
        let mut r2 = Sparse::new();
        for (i, (idx, v)) in ranked.iter().enumerate() {
            let rank = i + 1;
            let key = RemainderKey::Lattice(idx.clone());
            if rank <= m {
                let prof = assign[i];
                if prof < l {
                    let d = self.limits[i].d;
                    add(&mut r1, key.clone(), d);
                    add(&mut r1, key, v - d);
                } else {
                    add(&mut r2, key, *v);
                }
            } else {
                add(&mut r2, key, *v);
            }
        }
        let mut r = Sparse::new();
        for (idx, v) in ranked {
            add(&mut r, RemainderKey::Lattice(idx.clone()), *v);
        }
        for phi in self.state.phi.iter().take(l) {
            for (k, v) in &phi[ni] {
                add(&mut r1, k.clone(), -v);
                add(&mut r, k.clone(), -v);
            }
        }
        (r1, r2, r)
    }

    /// Norms of `r1(n, L, M)` (sequence `H^s`) and `r2(n, L, M)` (`L^p` proxy),
    /// with the deviation of `r1 + r2` from `u_n - sum_{l<=L} phi^l`.
    pub fn remainder_split(&self, n: i64, l: usize, m: usize) -> Result<RemainderSplit> {
        if l > self.profiles.len() {
            return Err(Error::Precondition(format!(
                "L = {l} exceeds the {} extracted profiles",
                self.profiles.len()
            )));
        }
        if m == 0 || m > self.params.m_max {
            return Err(Error::Precondition(format!("M = {m} outside 1..={}", self.params.m_max)));
        }
        let ni = self.n_index(n)?;
        let (r1, r2, r) = self.maps(ni, l, m);
        let mut sum = r1.clone();
        for (k, v) in &r2 {
            add(&mut sum, k.clone(), *v);
        }
        for (k, v) in &r {
            add(&mut sum, k.clone(), -v);
        }
        Ok(RemainderSplit {
            r1_hs: l2(&r1),
            r2_lp: lp(&r2, self.p),
            r_hs: l2(&r),
            deviation: l2(&sum),
        })
    }

    /// `e(n) = | ||u_n||^2 - sum_{l<=L} ||phi^l||^2 - ||r_{n,L}||^2 |` per snapshot.
    pub fn energy_check(&self, l: usize) -> Result<Vec<(i64, f64)>> {
        if l > self.profiles.len() {
            return Err(Error::Precondition(format!(
                "L = {l} exceeds the {} extracted profiles",
                self.profiles.len()
            )));
        }
        let prof: f64 = self.profiles.iter().take(l).map(|p| p.energy()).sum();
        Ok((0..self.n_values.len())
            .map(|ni| {
                let u: f64 = self.state.ranked[ni].iter().map(|(_, v)| v.norm_sqr()).sum();
                let (_, _, r) = self.maps(ni, l, 1);
                (self.n_values[ni], (u - prof - l2(&r).powi(2)).abs())
            })
            .collect())
    }

    fn build_ledgers(&mut self) -> Result<()> {
        let l_cap = self.profiles.len().min(self.params.l_max);
        let m_max = self.params.m_max;
        let mut remainder = Vec::new();
        let mut energy = Vec::new();
        let mut max_dev: f64 = 0.0;
        let mut r2_sup = vec![0.0f64; l_cap + 1];
        for l in 0..=l_cap {
            let defects = self.energy_check(l)?;
            let prof: f64 = self.profiles.iter().take(l).map(|p| p.energy()).sum();
            for (ni, &n) in self.n_values.clone().iter().enumerate() {
                let mut worst: f64 = 0.0;
                for m in 1..=m_max {
                    worst = worst.max(self.remainder_split(n, l, m)?.deviation);
                }
                let split = self.remainder_split(n, l, m_max)?;
                max_dev = max_dev.max(worst);
                r2_sup[l] = r2_sup[l].max(split.r2_lp);
                remainder.push(RemainderEntry {
                    n,
                    l,
                    m: m_max,
                    r1_hs: split.r1_hs,
                    r2_lp: split.r2_lp,
                    r_hs: split.r_hs,
                    m_independence: worst,
                });
                let u_sq: f64 = self.state.ranked[ni].iter().map(|(_, v)| v.norm_sqr()).sum();
                energy.push(EnergyEntry {
                    n,
                    l,
                    u_sq,
                    profiles_sq: prof,
                    r_sq: split.r_hs.powi(2),
                    defect: defects[ni].1,
                });
            }
        }
        let scale = self.diagnostics.k_bound.max(1.0);
        if max_dev > 1e-10 * scale {
            return Err(Error::Invariant(format!(
                "r1 + r2 differs from the remainder by {max_dev:e}"
            )));
        }
        self.diagnostics.max_m_independence = max_dev;
        self.diagnostics.r2_monotone = r2_sup.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        self.diagnostics.r2_sup_by_l = r2_sup;
        self.diagnostics.max_energy_defect = energy.iter().map(|e| e.defect).fold(0.0, f64::max);
        self.remainder_ledger = remainder;
        self.energy_ledger = energy;
        Ok(())
    }

    /// Profile atoms re-expressed as lattice offsets when they lie on the
    /// lattice: `(rel_scale, gamma~, d)`.
    pub fn lattice_atoms(&self, profile: usize) -> Vec<(i32, Option<Vec<i64>>, Complex64)> {
        let gs = self.state.sampling.as_ref().expect("decomposition carries its sampling set");
        self.profiles[profile]
            .atoms
            .iter()
            .map(|a| (a.rel_scale, gs.locate(&a.rel_pos), a.d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::preset_sampling_set;

    fn cp() -> ClassifyParams {
        ClassifyParams {
            tail: 8,
            t_div: 4.0,
            eps_stable: 1e-9,
        }
    }

    fn pair(h: impl Fn(usize) -> f64, k: impl Fn(usize) -> Vec<f64>, len: usize) -> ScaleCorePair {
        ScaleCorePair {
            h: (0..len).map(&h).collect(),
            kappa: (0..len).map(|n| Point(k(n))).collect(),
        }
    }

    #[test]
    fn scale_orthogonal_example() {
        let g = GroupSpec::abelian(1);
        let a = pair(|n| 2f64.powi(-(n as i32)), |_| vec![0.0], 16);
        let b = pair(|_| 1.0, |_| vec![0.0], 16);
        assert_eq!(classify_pair(&g, &a, &b, &cp()).unwrap(), Verdict::ScaleOrthogonal);
        assert_eq!(classify_pair(&g, &b, &a, &cp()).unwrap(), Verdict::ScaleOrthogonal);
    }

    #[test]
    fn core_orthogonal_example() {
        let g = GroupSpec::heisenberg(1);
        let a = pair(|_| 1.0, |n| vec![n as f64, 0.0, 0.0], 16);
        let b = pair(|_| 1.0, |_| vec![0.0, 0.0, 0.0], 16);
        assert_eq!(classify_pair(&g, &a, &b, &cp()).unwrap(), Verdict::CoreOrthogonal);
        assert_eq!(classify_pair(&g, &b, &a, &cp()).unwrap(), Verdict::CoreOrthogonal);
    }

    #[test]
    fn identical_tracks() {
        let g = GroupSpec::heisenberg(1);
        let a = pair(|n| 2f64.powi(n as i32 % 3), |n| vec![n as f64, 1.0, -2.0], 10);
        assert_eq!(
            classify_pair(&g, &a, &a, &cp()).unwrap(),
            Verdict::NotOrthogonal {
                rel_scale: 0,
                rel_pos: g.identity()
            }
        );
    }

    #[test]
    fn rigid_offset_is_recovered() {
        let g = GroupSpec::heisenberg(1);
        let gs = preset_sampling_set(&g, 1.0).unwrap();
        // anchor (n, gamma_n); partner (n + 2, (2^2 . gamma_n) . gamma~)
        let gt = vec![1i64, -1, 3];
        let ta: Vec<AtomIndex> = (0..12).map(|n| AtomIndex::new(n, vec![n as i64, 2, 1])).collect();
        let tb: Vec<AtomIndex> = ta
            .iter()
            .map(|a| AtomIndex::new(a.j + 2, gs.lattice_mul(&gs.lattice_dilate_pow2(2, &a.gamma), &gt).unwrap()))
            .collect();
        let a = ScaleCorePair::from_indices(&gs, &ta);
        let b = ScaleCorePair::from_indices(&gs, &tb);
        let v = classify_pair(&g, &a, &b, &cp()).unwrap();
        assert_eq!(
            v,
            Verdict::NotOrthogonal {
                rel_scale: 2,
                rel_pos: gs.decode(&gt)
            }
        );
        assert_eq!(
            transport(&gs, &ta[5], 2, &gs.decode(&gt)),
            RemainderKey::Lattice(tb[5].clone())
        );
        // reversed roles: (-2, (2^{-2} . gamma~)^{-1})
        let w = classify_pair(&g, &b, &a, &cp()).unwrap();
        let Verdict::NotOrthogonal { rel_scale, rel_pos } = w else { panic!("{w:?}") };
        assert_eq!(rel_scale, -2);
        let expect = g.inverse(&g.dilate_pow2(-2, &gs.decode(&gt))).unwrap();
        assert!(rel_pos.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn oscillating_gap_is_undecided() {
        let g = GroupSpec::abelian(1);
        let a = pair(|n| 2f64.powi(-((n % 2) as i32)), |_| vec![0.0], 12);
        let b = pair(|_| 1.0, |n| vec![n as f64 * 0.1], 12);
        assert_eq!(classify_pair(&g, &a, &b, &cp()).unwrap(), Verdict::Undecided);
        let short = pair(|_| 1.0, |_| vec![0.0], 4);
        assert!(matches!(classify_pair(&g, &short, &short, &cp()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn constant_large_gap_is_not_divergence() {
        // a gap of 10 that does not grow is a fixed relative scale
        let g = GroupSpec::abelian(1);
        let a = pair(|_| 1.0, |_| vec![0.0], 10);
        let b = pair(|_| 2f64.powi(-10), |_| vec![0.0], 10);
        assert!(matches!(
            classify_pair(&g, &a, &b, &cp()).unwrap(),
            Verdict::NotOrthogonal { rel_scale: 10, .. }
        ));
    }

    fn snapshots(fields: Vec<Vec<(i32, i64, f64)>>) -> SequenceSnapshots {
        let gs = preset_sampling_set(&GroupSpec::abelian(1), 1.0).unwrap();
        let n: Vec<i64> = (1..=fields.len() as i64).collect();
        let fs = fields
            .into_iter()
            .map(|e| {
                CoefficientField::from_entries(
                    gs.clone(),
                    Normalization::LpAtoms { p: 2.0 },
                    e.into_iter().map(|(j, g, v)| (AtomIndex::new(j, vec![g]), Complex64::new(v, 0.0))),
                )
                .unwrap()
            })
            .collect();
        SequenceSnapshots::new(n, fs).unwrap()
    }

    #[test]
    fn translating_bundle_is_one_profile() {
        let s = snapshots(
            (0..16)
                .map(|n| vec![(0, 4 * n, 1.0), (1, 8 * n + 1, 0.5), (0, 4 * n - 1, -0.25)])
                .collect(),
        );
        let params = ExtractParams {
            m_max: 3,
            ..Default::default()
        };
        let d = extract(&s, &params).unwrap();
        assert_eq!(d.profile_count(), 1);
        assert_eq!(d.profiles[0].escape, Escape::Translating);
        assert_eq!(d.nu, vec![1, 1, 1]);
        let atoms = d.lattice_atoms(0);
        assert_eq!(atoms[1], (1, Some(vec![1]), Complex64::new(0.5, 0.0)));
        assert_eq!(atoms[2], (0, Some(vec![-1]), Complex64::new(-0.25, 0.0)));
        for (_, e) in d.energy_check(1).unwrap() {
            assert!(e <= 1e-12);
        }
        let split = d.remainder_split(16, 1, 3).unwrap();
        assert!(split.r_hs < 1e-12 && split.r1_hs < 1e-12 && split.r2_lp < 1e-12);
        assert!(d.diagnostics.bookkeeping.holds());
    }

    #[test]
    fn scale_gap_gives_two_profiles() {
        let s = snapshots((0..16).map(|n| vec![(n as i32, 0, 1.0), (0, 5, 0.5)]).collect());
        let params = ExtractParams {
            m_max: 2,
            ..Default::default()
        };
        let d = extract(&s, &params).unwrap();
        assert_eq!(d.profile_count(), 2);
        assert_eq!(d.classification[1].verdicts, vec![Verdict::ScaleOrthogonal]);
        assert_eq!(d.profiles[0].escape, Escape::Concentrating);
        assert_eq!(d.profiles[1].escape, Escape::Stationary);
        assert_eq!(d.nu, vec![1, 2]);
    }

    #[test]
    fn constant_sequence_is_one_stationary_profile() {
        let s = snapshots((0..10).map(|_| vec![(0, 0, 2.0), (1, 3, 1.0), (-1, 2, 0.5)]).collect());
        let d = extract(&s, &ExtractParams { m_max: 3, ..Default::default() }).unwrap();
        assert_eq!(d.profile_count(), 1);
        assert_eq!(d.profiles[0].escape, Escape::Stationary);
        assert!(d.classification[1..].iter().all(|c| c.case == Case::Absorbed));
    }

    #[test]
    fn energy_with_no_profiles_is_zero() {
        let s = snapshots((0..10).map(|n| vec![(0, n, 2.0), (3, 1, 1.0)]).collect());
        let d = extract(&s, &ExtractParams { m_max: 2, ..Default::default() }).unwrap();
        assert!(d.energy_check(0).unwrap().iter().all(|&(_, e)| e <= 1e-14));
        assert!(d.energy_check(5).is_err());
    }

    #[test]
    fn converged_coefficients_leave_no_r1() {
        let s = snapshots((0..12).map(|n| vec![(0, 3 * n, 1.0), (0, 3 * n + 1, 0.5), (2, 7, 0.1)]).collect());
        let d = extract(&s, &ExtractParams { m_max: 3, ..Default::default() }).unwrap();
        for n in 1..=12 {
            for l in 0..=d.profile_count() {
                assert!(d.remainder_split(n, l, 3).unwrap().r1_hs < 1e-14);
            }
        }
        // with every profile removed only the Q_M tail is left in r2
        let full = d.remainder_split(12, d.profile_count(), 3).unwrap();
        assert_eq!(full.r2_lp, 0.0);
        let a = d.remainder_split(5, 1, 1).unwrap();
        let b = d.remainder_split(5, 1, 3).unwrap();
        assert!(a.deviation < 1e-12 && b.deviation < 1e-12);
        assert_eq!(a.r_hs, b.r_hs);
    }

    #[test]
    fn strict_and_exploratory_modes() {
        // rank 2 drifts slowly, neither stable nor divergent past T_div
        let s = snapshots((0..10).map(|n| vec![(0, 0, 1.0), (0, 50 + n / 3, 0.5)]).collect());
        let strict = ExtractParams {
            m_max: 2,
            t_div: 1000.0,
            ..Default::default()
        };
        assert!(matches!(
            extract(&s, &strict),
            Err(Error::UndecidableOrthogonality { rank: 2, profile: 1 })
        ));
        let explore = ExtractParams {
            mode: Mode::Exploratory,
            ..strict
        };
        let d = extract(&s, &explore).unwrap();
        assert_eq!(d.profile_count(), 2);
        assert_eq!(d.diagnostics.flagged_ranks, vec![2]);
    }

    #[test]
    fn nonconvergent_rank_is_reported() {
        let s = snapshots((0..10).map(|n| vec![(0, 0, 1.0 + 0.01 * n as f64)]).collect());
        let p = ExtractParams { m_max: 1, ..Default::default() };
        assert!(matches!(extract(&s, &p), Err(Error::NonconvergentCoefficient { rank: 1, .. })));
        let d = extract(&s, &ExtractParams { mode: Mode::Exploratory, ..p }).unwrap();
        assert_eq!(d.diagnostics.nonconvergent_ranks, vec![1]);
    }

    #[test]
    fn m_max_beyond_cardinality() {
        let s = snapshots((0..10).map(|n| vec![(0, n, 1.0)]).collect());
        let p = ExtractParams { m_max: 2, ..Default::default() };
        assert!(matches!(extract(&s, &p), Err(Error::InsufficientData(_))));
    }
}
