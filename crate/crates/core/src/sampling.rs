//! Regular sampling sets on the preset groups.
//!
//! Lattice members are stored as integer coordinates. On `R^d` the integer
//! vector `a` stands for `beta * a`. On `H^d` the vector `(a, b, c)` stands
//! for `(beta a, beta b, beta^2 c / 2)`; in these coordinates the group law is
//! `c'' = c + c' + sum_i (a_i b'_i - b_i a'_i)`, which is integral, so closure
//! under products and dyadic dilations is exact.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::group::{GroupLaw, GroupSpec, Point};

/// Scale index `j` and lattice point `gamma` in integer coordinates.
///
/// The derived ordering (scale first, then `gamma` lexicographically) is the
/// deterministic tie-break used everywhere atoms are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomIndex {
    pub j: i32,
    pub gamma: Vec<i64>,
}

impl AtomIndex {
    pub fn new(j: i32, gamma: Vec<i64>) -> Self {
        AtomIndex { j, gamma }
    }
}

/// Axis-aligned half-open box `[lo, hi)` in group coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box corners differ in dimension");
        CoordBox { lo, hi }
    }

    /// The cube `[-r, r)^n`.
    pub fn centered(n: usize, r: f64) -> Self {
        CoordBox::new(vec![-r; n], vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| l <= v && v < h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).max(0.0)).product()
    }
}

/// A lattice `Gamma` on a preset group together with a tile `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSet {
    group: GroupSpec,
    beta: f64,
    tile: CoordBox,
    scales: Vec<f64>,
}

impl SamplingSet {
    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tile(&self) -> &CoordBox {
        &self.tile
    }

    /// Replace the tile; used to test candidate fundamental domains.
    pub fn with_tile(mut self, tile: CoordBox) -> Result<Self> {
        if tile.dim() != self.group.dim() {
            return Err(Error::Layout(format!(
                "tile has dimension {}, group has {}",
                tile.dim(),
                self.group.dim()
            )));
        }
        self.tile = tile;
        Ok(self)
    }

    /// Volume of the fundamental domain, i.e. the covolume of `Gamma`.
    pub fn covolume(&self) -> f64 {
        self.scales.iter().product()
    }

    /// Real coordinate represented by one lattice unit along each axis.
    pub fn unit_scales(&self) -> &[f64] {
        &self.scales
    }

    fn check(&self, gamma: &[i64]) -> Result<()> {
        if gamma.len() != self.group.dim() {
            return Err(Error::Layout(format!(
                "lattice point has {} coordinates, group expects {}",
                gamma.len(),
                self.group.dim()
            )));
        }
        Ok(())
    }

    /// Real coordinates of a lattice member.
    pub fn decode(&self, gamma: &[i64]) -> Point {
        Point(gamma.iter().zip(&self.scales).map(|(&g, s)| g as f64 * s).collect())
    }

    /// Integer coordinates of `x` if it lies on the lattice (to 1e-9 relative).
    pub fn locate(&self, x: &Point) -> Option<Vec<i64>> {
        if x.len() != self.group.dim() {
            return None;
        }
        let mut out = Vec::with_capacity(x.len());
        for (v, s) in x.0.iter().zip(&self.scales) {
            let r = v / s;
            let k = r.round();
            if !k.is_finite() || (r - k).abs() > 1e-9 * k.abs().max(1.0) || k.abs() > 9.0e15 {
                return None;
            }
            out.push(k as i64);
        }
        Some(out)
    }

    /// Position `2^{-j} . gamma` of an atom.
    pub fn position(&self, idx: &AtomIndex) -> Point {
        self.group.dilate_pow2(-idx.j, &self.decode(&idx.gamma))
    }

    /// Exact lattice product.
    pub fn lattice_mul(&self, a: &[i64], b: &[i64]) -> Result<Vec<i64>> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.lattice_mul_unchecked(a, b))
    }

    pub(crate) fn lattice_mul_unchecked(&self, a: &[i64], b: &[i64]) -> Vec<i64> {
        let mut out: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        if let GroupLaw::Heisenberg { d } = self.group.law() {
            let d = *d;
            let mut sym = 0i64;
            for i in 0..d {
                sym += a[i] * b[d + i] - a[d + i] * b[i];
            }
            out[2 * d] += sym;
        }
        out
    }

    pub fn lattice_inverse(&self, a: &[i64]) -> Vec<i64> {
        a.iter().map(|x| -x).collect()
    }

    /// Exact dilation by `2^k`, `k >= 0`.
    pub fn lattice_dilate_pow2(&self, k: u32, a: &[i64]) -> Vec<i64> {
        a.iter()
            .zip(self.group.weights())
            .map(|(&x, &w)| x << (k * w))
            .collect()
    }

    /// All `(j, gamma)` with `2^{-j} . gamma` in `bx`, ordered lexicographically.
    pub fn enumerate(&self, j: i32, bx: &CoordBox) -> Result<Vec<AtomIndex>> {
        if bx.dim() != self.group.dim() {
            return Err(Error::Layout(format!(
                "box has dimension {}, group has {}",
                bx.dim(),
                self.group.dim()
            )));
        }
        if bx.is_empty() {
            return Ok(Vec::new());
        }
        // 2^{-j w} gamma_i s_i in [lo, hi)  <=>  gamma_i in [lo 2^{jw}/s, hi 2^{jw}/s)
        let ranges: Vec<(i64, i64)> = (0..bx.dim())
            .map(|i| {
                let f = 2f64.powi(j * self.group.weights()[i] as i32) / self.scales[i];
                let lo = (bx.lo[i] * f).ceil() as i64;
                let hi = (bx.hi[i] * f).ceil() as i64 - 1;
                (lo, hi)
            })
            .collect();
        let mut out = Vec::new();
        for gamma in IntBox::new(&ranges) {
            // guard the half-open edges against rounding in the bound computation
            let x = self.group.dilate_pow2(-j, &self.decode(&gamma));
            if bx.contains(&x.0) {
                out.push(AtomIndex::new(j, gamma));
            }
        }
        Ok(out)
    }

    /// Number of translates `gamma . W` containing `x`.
    pub fn cover_count(&self, x: &Point) -> usize {
        let g = &self.group;
        let w = &self.tile;
        match g.law() {
            GroupLaw::Heisenberg { d } => {
                let d = *d;
                let h = 2 * d;
                // gamma^{-1} x = (0,0,-c s_t) . ((-beta a, -beta b, 0) . x)
                let ranges: Vec<(i64, i64)> = (0..h).map(|i| self.candidate_range(x.0[i], i)).collect();
                let mut count = 0;
                for ab in IntBox::new(&ranges) {
                    let mut shift = vec![0.0; g.dim()];
                    for i in 0..h {
                        shift[i] = -(ab[i] as f64) * self.scales[i];
                    }
                    let y = g.multiply_unchecked(&shift, &x.0);
                    if !(0..h).all(|i| w.lo[i] <= y.0[i] && y.0[i] < w.hi[i]) {
                        continue;
                    }
                    let (clo, chi) = self.candidate_range(y.0[h], h);
                    for c in clo..=chi {
                        let t = y.0[h] - c as f64 * self.scales[h];
                        if w.lo[h] <= t && t < w.hi[h] {
                            count += 1;
                        }
                    }
                }
                count
            }
            _ => {
                let ranges: Vec<(i64, i64)> = (0..g.dim()).map(|i| self.candidate_range(x.0[i], i)).collect();
                IntBox::new(&ranges)
                    .filter(|a| {
                        (0..g.dim()).all(|i| {
                            let v = x.0[i] - a[i] as f64 * self.scales[i];
                            w.lo[i] <= v && v < w.hi[i]
                        })
                    })
                    .count()
            }
        }
    }

    fn candidate_range(&self, v: f64, i: usize) -> (i64, i64) {
        let s = self.scales[i];
        (
            ((v - self.tile.hi[i]) / s).floor() as i64,
            ((v - self.tile.lo[i]) / s).ceil() as i64,
        )
    }

    /// Sample `grid_res` cell centres per axis of `test_box` and count how
    /// many translates of the tile cover each.
    pub fn verify_tiling(&self, test_box: &CoordBox, grid_res: usize) -> Result<TilingReport> {
        if grid_res < 2 {
            return Err(Error::Precondition("grid_res must be at least 2".into()));
        }
        if test_box.dim() != self.group.dim() {
            return Err(Error::Layout("test box dimension does not match group".into()));
        }
        let n = self.group.dim();
        let ranges = vec![(0i64, grid_res as i64 - 1); n];
        let mut samples = 0usize;
        let mut covered = 0usize;
        let mut uncovered = 0usize;
        let mut multiply_covered = 0usize;
        let mut total = 0usize;
        for cell in IntBox::new(&ranges) {
            let x = Point(
                (0..n)
                    .map(|i| {
                        let h = (test_box.hi[i] - test_box.lo[i]) / grid_res as f64;
                        test_box.lo[i] + (cell[i] as f64 + 0.5) * h
                    })
                    .collect(),
            );
            let c = self.cover_count(&x);
            samples += 1;
            total += c;
            match c {
                0 => uncovered += 1,
                1 => covered += 1,
                _ => {
                    covered += 1;
                    multiply_covered += 1;
                }
            }
        }
        Ok(TilingReport {
            samples,
            max_overlap_fraction: if total == 0 { 0.0 } else { 1.0 - covered as f64 / total as f64 },
            multiply_covered_fraction: multiply_covered as f64 / samples as f64,
            uncovered_fraction: uncovered as f64 / samples as f64,
        })
    }

    /// `a^Q sum_gamma (1 + a |gamma^{-1} x'|)^{-n}` with `a = 2^{eta-j}` and
    /// `x' = 2^j . x`, i.e. `2^{eta Q} sum_gamma 2^{-jQ} (1 + 2^eta |(2^{-j} gamma)^{-1} x|)^{-n}`.
    ///
    /// Lattice points with `|gamma^{-1} x'| <= rho` are summed exactly, where
    /// `rho` is chosen so that roughly `budget` points are visited; the rest
    /// is replaced by the radial integral over `|y| > rho`.
    pub fn column_decay_certificate(
        &self,
        eta: i32,
        j: i32,
        n: u32,
        x: &Point,
        budget: usize,
    ) -> Result<DecayCertificate> {
        let g = &self.group;
        let q = g.homogeneous_dimension();
        if (n as usize) <= q {
            return Err(Error::Precondition(format!(
                "decay exponent n = {n} must exceed Q = {q}; the lattice sum diverges"
            )));
        }
        if eta > j {
            return Err(Error::Precondition(format!("eta = {eta} exceeds j = {j}")));
        }
        if x.len() != g.dim() {
            return Err(Error::Layout("point dimension does not match group".into()));
        }
        let a = 2f64.powi(eta - j);
        let xp = g.dilate_pow2(j, x);
        let ball = g.unit_ball_volume();
        let cov = self.covolume();
        let qf = q as f64;
        let rho = (budget.max(16) as f64 * cov / ball).powf(1.0 / qf);

        // bounding box of {gamma : |gamma^{-1} x'| <= rho}; gamma = x' . y^{-1}
        let h = g.strata_dims()[0];
        let ranges: Vec<(i64, i64)> = match g.law() {
            GroupLaw::Heisenberg { .. } => {
                let xh: f64 = xp.0[..h].iter().map(|v| v * v).sum::<f64>().sqrt();
                (0..g.dim())
                    .map(|i| {
                        let r = if i < h { rho } else { rho * rho / 4.0 + 0.5 * xh * rho };
                        let s = self.scales[i];
                        (((xp.0[i] - r) / s).floor() as i64, ((xp.0[i] + r) / s).ceil() as i64)
                    })
                    .collect()
            }
            _ => (0..g.dim())
                .map(|i| {
                    let s = self.scales[i];
                    (((xp.0[i] - rho) / s).floor() as i64, ((xp.0[i] + rho) / s).ceil() as i64)
                })
                .collect(),
        };
        let mut partial = 0.0;
        let mut terms = 0usize;
        for gamma in IntBox::new(&ranges) {
            let gi: Vec<f64> = gamma.iter().zip(&self.scales).map(|(&c, s)| -(c as f64) * s).collect();
            let r = g.hom_norm(&g.multiply_unchecked(&gi, &xp.0));
            if r <= rho {
                partial += (1.0 + a * r).powi(-(n as i32));
                terms += 1;
            }
        }
        // (1/|W|) int_{|y|>rho} (1 + a|y|)^{-n} dy, radial with dV = Q |B_1| r^{Q-1} dr;
        // substitute r = rho / u to integrate over (0, 1]
        let tail = qf * ball / cov
            * crate::group::simpson(
                |u| {
                    if u <= 0.0 {
                        0.0
                    } else {
                        let r = rho / u;
                        r.powf(qf - 1.0) * (1.0 + a * r).powi(-(n as i32)) * rho / (u * u)
                    }
                },
                0.0,
                1.0,
                4096,
            );
        let aq = a.powf(qf);
        Ok(DecayCertificate {
            partial_sum: aq * partial,
            tail_estimate: aq * tail,
            value: aq * (partial + tail),
            radius: rho,
            terms,
        })
    }
}

/// Result of [`SamplingSet::verify_tiling`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TilingReport {
    pub samples: usize,
    /// `1 - covered / sum(cover counts)`: zero for an exact tiling, one half
    /// when every point is covered twice.
    pub max_overlap_fraction: f64,
    pub multiply_covered_fraction: f64,
    pub uncovered_fraction: f64,
}

/// Result of [`SamplingSet::column_decay_certificate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub partial_sum: f64,
    pub tail_estimate: f64,
    pub value: f64,
    pub radius: f64,
    pub terms: usize,
}

/// Preset lattice of density `beta` on an abelian or Heisenberg group.
pub fn preset_sampling_set(g: &GroupSpec, beta: f64) -> Result<SamplingSet> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("density must be positive, got {beta}")));
    }
    let scales: Vec<f64> = match g.law() {
        GroupLaw::Abelian => vec![beta; g.dim()],
        GroupLaw::Heisenberg { d } => {
            let mut s = vec![beta; 2 * d];
            s.push(beta * beta / 2.0);
            s
        }
        GroupLaw::Polynomial { .. } => {
            return Err(Error::Unsupported(
                "no preset lattice for a custom group law".into(),
            ))
        }
    };
    let tile = CoordBox::new(vec![0.0; g.dim()], scales.clone());
    Ok(SamplingSet {
        group: g.clone(),
        beta,
        tile,
        scales,
    })
}

#[derive(Serialize, Deserialize)]
struct SamplingSetRepr {
    group: GroupSpec,
    beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tile: Option<CoordBox>,
}

impl Serialize for SamplingSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SamplingSetRepr {
            group: self.group.clone(),
            beta: self.beta,
            tile: Some(self.tile.clone()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SamplingSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = SamplingSetRepr::deserialize(deserializer)?;
        let gs = preset_sampling_set(&repr.group, repr.beta).map_err(D::Error::custom)?;
        match repr.tile {
            Some(t) => gs.with_tile(t).map_err(D::Error::custom),
            None => Ok(gs),
        }
    }
}

/// Iterator over the integer points of a product of closed ranges, in
/// lexicographic order.
pub(crate) struct IntBox {
    ranges: Vec<(i64, i64)>,
    cur: Option<Vec<i64>>,
}

impl IntBox {
    pub(crate) fn new(ranges: &[(i64, i64)]) -> Self {
        let cur = if ranges.iter().all(|(l, h)| l <= h) {
            Some(ranges.iter().map(|r| r.0).collect())
        } else {
            None
        };
        IntBox {
            ranges: ranges.to_vec(),
            cur,
        }
    }
}

impl Iterator for IntBox {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let out = self.cur.clone()?;
        let cur = self.cur.as_mut().unwrap();
        let mut i = cur.len();
        loop {
            if i == 0 {
                self.cur = None;
                break;
            }
            i -= 1;
            if cur[i] < self.ranges[i].1 {
                cur[i] += 1;
                break;
            }
            cur[i] = self.ranges[i].0;
        }
        Some(out)
    }
}
